"""Pair Lagrangians with analytic first and second derivatives.

Built-in kernels evaluate a quartic profile p(u) = (1-u)_+^4 of a scaled
squared separation u = q(x-y).  The profile is C^3 across the support
boundary u = 1, so every derivative block used downstream (gradients,
Hessian blocks) is continuous.  Custom kernels must supply analytic
derivatives; finite differences are available for testing only.
"""

from dataclasses import dataclass

import numpy as np

from .errors import InputError


def _profile(u):
    t = np.maximum(1.0 - u, 0.0)
    return t ** 4


def _profile_d1(u):
    t = np.maximum(1.0 - u, 0.0)
    return -4.0 * t ** 3


def _profile_d2(u):
    t = np.maximum(1.0 - u, 0.0)
    return 12.0 * t ** 2


@dataclass(frozen=True)
class PairBlocks:
    """Kernel value and derivative blocks tabulated over all point pairs.

    value[i, j] = L(x_i, x_j); grad1[i, j] = d L / d x_i; hess12[i, j] is the
    mixed block d^2 L / d x_i d x_j with row index on the first argument.
    """

    value: np.ndarray    # (N, N)
    grad1: np.ndarray    # (N, N, m)
    grad2: np.ndarray    # (N, N, m)
    hess11: np.ndarray   # (N, N, m, m)
    hess12: np.ndarray   # (N, N, m, m)
    hess22: np.ndarray   # (N, N, m, m)


class Kernel:
    """Base interface: symmetric nonnegative compactly supported Lagrangian."""

    kind = "custom"
    m = None

    def _check_points(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if x.shape != (self.m,) or y.shape != (self.m,):
            raise InputError(
                f"kernel expects points of dimension {self.m}, got shapes {x.shape} and {y.shape}")
        return x, y

    def eval(self, x, y):
        raise NotImplementedError

    def derivatives(self, x, y):
        """Return dict with grad1, grad2, hess11, hess12, hess22 at (x, y)."""
        raise NotImplementedError

    def pair_blocks(self, points):
        """Tabulate value and derivative blocks over all pairs of rows of `points`."""
        points = np.asarray(points, dtype=float)
        n = points.shape[0]
        value = np.empty((n, n))
        grad1 = np.empty((n, n, self.m))
        grad2 = np.empty((n, n, self.m))
        hess11 = np.empty((n, n, self.m, self.m))
        hess12 = np.empty((n, n, self.m, self.m))
        hess22 = np.empty((n, n, self.m, self.m))
        for i in range(n):
            for j in range(n):
                value[i, j] = self.eval(points[i], points[j])
                d = self.derivatives(points[i], points[j])
                grad1[i, j] = d["grad1"]
                grad2[i, j] = d["grad2"]
                hess11[i, j] = d["hess11"]
                hess12[i, j] = d["hess12"]
                hess22[i, j] = d["hess22"]
        return PairBlocks(value, grad1, grad2, hess11, hess12, hess22)

    def spec(self):
        raise NotImplementedError


class _SeparationBumpKernel(Kernel):
    """Common machinery for kernels of the form L(x, y) = p(q(x - y)).

    q is a positive quadratic form z^T Q z; support is the ellipsoid q < 1.
    """

    def __init__(self, m, q_diag):
        if m < 1:
            raise InputError(f"dimension must be >= 1, got {m}")
        self.m = int(m)
        self._q = np.asarray(q_diag, dtype=float)  # diagonal of Q

    def _qval(self, z):
        return float(np.dot(self._q * z, z))

    def eval(self, x, y):
        x, y = self._check_points(x, y)
        return float(_profile(self._qval(x - y)))

    def derivatives(self, x, y):
        x, y = self._check_points(x, y)
        z = x - y
        u = self._qval(z)
        p1 = float(_profile_d1(u))
        p2 = float(_profile_d2(u))
        dq = 2.0 * self._q * z                      # gradient of q in z
        d2q = np.diag(2.0 * self._q)                # Hessian of q, constant
        grad1 = p1 * dq
        hess11 = p2 * np.outer(dq, dq) + p1 * d2q
        return {
            "grad1": grad1,
            "grad2": -grad1,
            "hess11": hess11,
            "hess12": -hess11,
            "hess22": hess11,
        }

    def pair_blocks(self, points):
        # vectorized override: built-ins are hot paths
        points = np.asarray(points, dtype=float)
        if points.ndim != 2 or points.shape[1] != self.m:
            raise InputError(f"points must be (N, {self.m}), got {points.shape}")
        z = points[:, None, :] - points[None, :, :]
        u = np.einsum("ijk,k,ijk->ij", z, self._q, z)
        p0 = _profile(u)
        p1 = _profile_d1(u)
        p2 = _profile_d2(u)
        dq = 2.0 * z * self._q[None, None, :]
        grad1 = p1[:, :, None] * dq
        d2q = np.diag(2.0 * self._q)
        hess11 = (p2[:, :, None, None] * dq[:, :, :, None] * dq[:, :, None, :]
                  + p1[:, :, None, None] * d2q[None, None, :, :])
        return PairBlocks(p0, grad1, -grad1, hess11, -hess11, hess11)


class IsotropicBumpKernel(_SeparationBumpKernel):
    """L(x, y) = ((1 - |x-y|^2/R^2)_+)^4."""

    kind = "isotropic-bump"

    def __init__(self, R, m):
        if R <= 0:
            raise InputError(f"spatial range R must be positive, got {R}")
        super().__init__(m, np.full(m, 1.0 / R ** 2))
        self.R = float(R)

    def spec(self):
        return {"kind": self.kind, "R": self.R, "m": self.m}


class AnisotropicBumpKernel(_SeparationBumpKernel):
    """L(x, y) = ((1 - z0^2/T^2 - |z'|^2/R^2)_+)^4 with z = x - y.

    The first coordinate carries its own range T, the remaining coordinates
    share the spatial range R.
    """

    kind = "anisotropic-bump"

    def __init__(self, R, T, m):
        if R <= 0 or T <= 0:
            raise InputError(f"ranges must be positive, got R={R}, T={T}")
        q = np.full(m, 1.0 / R ** 2)
        q[0] = 1.0 / T ** 2
        super().__init__(m, q)
        self.R = float(R)
        self.T = float(T)

    def spec(self):
        return {"kind": self.kind, "R": self.R, "T": self.T, "m": self.m}


class CustomKernel(Kernel):
    """User kernel from analytic callables.

    value(x, y) -> float; derivatives(x, y) -> dict with keys grad1, grad2,
    hess11, hess12, hess22.  Analytic derivatives are required for assembly;
    use `check_derivatives` to validate them against finite differences.
    """

    kind = "custom"

    def __init__(self, m, value, derivatives):
        if m < 1:
            raise InputError(f"dimension must be >= 1, got {m}")
        self.m = int(m)
        self._value = value
        self._derivatives = derivatives

    def eval(self, x, y):
        x, y = self._check_points(x, y)
        return float(self._value(x, y))

    def derivatives(self, x, y):
        x, y = self._check_points(x, y)
        d = self._derivatives(x, y)
        return {k: np.asarray(d[k], dtype=float)
                for k in ("grad1", "grad2", "hess11", "hess12", "hess22")}

    def spec(self):
        return {"kind": "custom", "m": self.m}


def make_kernel(spec):
    """Build a kernel from its JSON specification block."""
    kind = spec.get("kind")
    if kind == "isotropic-bump":
        return IsotropicBumpKernel(R=spec["R"], m=spec["m"])
    if kind == "anisotropic-bump":
        return AnisotropicBumpKernel(R=spec["R"], T=spec["T"], m=spec["m"])
    raise InputError(f"unknown kernel kind {kind!r}")


def fd_gradients(kernel, x, y, h):
    """Central finite-difference gradients of eval; testing oracle only."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    m = kernel.m
    g1 = np.empty(m)
    g2 = np.empty(m)
    for a in range(m):
        e = np.zeros(m)
        e[a] = h
        g1[a] = (kernel.eval(x + e, y) - kernel.eval(x - e, y)) / (2 * h)
        g2[a] = (kernel.eval(x, y + e) - kernel.eval(x, y - e)) / (2 * h)
    return g1, g2


def fd_hessians(kernel, x, y, h):
    """Finite-difference second derivative blocks of eval; testing oracle only."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    m = kernel.m
    h11 = np.empty((m, m))
    h12 = np.empty((m, m))
    h22 = np.empty((m, m))
    for a in range(m):
        ea = np.zeros(m)
        ea[a] = h
        for b in range(m):
            eb = np.zeros(m)
            eb[b] = h
            h11[a, b] = (kernel.eval(x + ea + eb, y) - kernel.eval(x + ea - eb, y)
                         - kernel.eval(x - ea + eb, y) + kernel.eval(x - ea - eb, y)) / (4 * h * h)
            h22[a, b] = (kernel.eval(x, y + ea + eb) - kernel.eval(x, y + ea - eb)
                         - kernel.eval(x, y - ea + eb) + kernel.eval(x, y - ea - eb)) / (4 * h * h)
            h12[a, b] = (kernel.eval(x + ea, y + eb) - kernel.eval(x + ea, y - eb)
                         - kernel.eval(x - ea, y + eb) + kernel.eval(x - ea, y - eb)) / (4 * h * h)
    return h11, h12, h22


def check_derivatives(kernel, samples, h=None, tol=1e-6):
    """Compare analytic derivative blocks against central finite differences.

    samples: iterable of (x, y) pairs.  Returns a report dict; `passed` is
    true iff the worst relative error over all blocks is at most `tol`.
    """
    samples = list(samples)
    if h is None:
        scale = max((float(np.max(np.abs(np.concatenate([np.ravel(x), np.ravel(y)]))))
                     for x, y in samples), default=1.0)
        h = 1e-5 * max(scale, 1.0)
    worst = 0.0
    worst_info = None
    for x, y in samples:
        ana = kernel.derivatives(x, y)
        g1, g2 = fd_gradients(kernel, x, y, h)
        h11, h12, h22 = fd_hessians(kernel, x, y, h)
        fd = {"grad1": g1, "grad2": g2, "hess11": h11, "hess12": h12, "hess22": h22}
        for name in fd:
            a = np.asarray(ana[name])
            f = fd[name]
            denom = max(1.0, float(np.max(np.abs(a))))
            err = float(np.max(np.abs(a - f))) / denom
            if err > worst:
                worst = err
                worst_info = {"block": name, "x": np.asarray(x).tolist(),
                              "y": np.asarray(y).tolist(), "error": err}
    return {"max_rel_error": worst, "passed": worst <= tol, "h": h,
            "n_samples": len(samples), "worst": worst_info}
