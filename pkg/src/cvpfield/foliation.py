"""Local foliations by surface layers, lens-shaped regions, cutoffs.

The interpolating profile is the unique quintic P on [-1, 1] with
P(-1) = 0, P(1) = 1 and vanishing first and second derivatives at both
ends; eta(t, x) = P((t - tau(x)) / delta).  The layer at time t is the set
of atoms where the rate theta = dP/dt is positive, i.e. |t - tau| < delta.
Past means eta = 1, future means eta = 0.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import InputError, ValidationError


def quintic_step(s):
    """P(s) = 1/2 + (15 s - 10 s^3 + 3 s^5)/16 clamped to [-1, 1]."""
    s = np.clip(s, -1.0, 1.0)
    return 0.5 + (15.0 * s - 10.0 * s ** 3 + 3.0 * s ** 5) / 16.0


def quintic_rate(s):
    """dP/ds = (15/16)(1 - s^2)^2 on (-1, 1), zero outside."""
    s = np.asarray(s, dtype=float)
    inside = np.abs(s) < 1.0
    return np.where(inside, (15.0 / 16.0) * (1.0 - np.where(inside, s, 0.0) ** 2) ** 2, 0.0)


class Foliation:
    """Family of cutoffs eta_t over a domain of atoms.

    tau: per-point time values (N,); delta: half-width of the layers;
    grid: ordered times from t0 to tmax used for checks and t-quadrature;
    domain: sorted indices of the atoms forming the localization region U.
    """

    def __init__(self, tau, delta, grid, domain=None, orientation="future"):
        tau = np.asarray(tau, dtype=float)
        grid = np.asarray(grid, dtype=float)
        if delta <= 0:
            raise ValidationError(f"layer width delta must be positive, got {delta}")
        if grid.ndim != 1 or grid.size < 2:
            raise ValidationError("grid must contain at least two times")
        if np.any(np.diff(grid) <= 0):
            raise ValidationError("grid times must be strictly increasing")
        if orientation not in ("future", "past"):
            raise ValidationError(f"orientation must be 'future' or 'past', got {orientation!r}")
        self.tau = tau
        self.delta = float(delta)
        self.grid = grid
        if domain is None:
            domain = np.arange(tau.shape[0])
        self.domain = np.unique(np.asarray(domain, dtype=int))
        if self.domain.size and (self.domain[0] < 0 or self.domain[-1] >= tau.shape[0]):
            raise ValidationError("domain indices out of range")
        self.orientation = orientation

    @property
    def t0(self):
        return float(self.grid[0])

    @property
    def tmax(self):
        return float(self.grid[-1])

    def _check_t(self, t):
        if t < self.t0 - 1e-12 or t > self.tmax + 1e-12:
            raise InputError(f"time {t} outside the foliation interval [{self.t0}, {self.tmax}]")

    def eta(self, t):
        """Cutoff values at all atoms: 1 in the past of the layer at t, 0 in the future."""
        self._check_t(t)
        return quintic_step((t - self.tau) / self.delta)

    def theta(self, t):
        """Rate of the cutoff at all atoms; nonnegative, supported in |t - tau| < delta."""
        self._check_t(t)
        return quintic_rate((t - self.tau) / self.delta) / self.delta

    def strip(self, ta, tb):
        """Strip field eta_[ta, tb] = eta(tb) - eta(ta); requires ta <= tb."""
        if ta > tb:
            raise InputError(f"strip requires ta <= tb, got {ta} > {tb}")
        return self.eta(tb) - self.eta(ta)

    def layer_indices(self, t):
        return np.nonzero(self.theta(t) > 0)[0]

    def reverse(self):
        """Time-reversed foliation: eta -> 1 - eta with t -> t0 + tmax - t.

        For the quintic profile this is exactly the foliation with reflected
        time values, so the reversal is closed within the class.
        """
        c = self.t0 + self.tmax
        return Foliation(c - self.tau, self.delta, self.grid, self.domain,
                         "past" if self.orientation == "future" else "future")

    def restricted(self, ta, tb, grid=None):
        """Sub-foliation over [ta, tb] (grid defaults to the matching slice)."""
        if not (self.t0 - 1e-12 <= ta < tb <= self.tmax + 1e-12):
            raise InputError(f"[{ta}, {tb}] not inside [{self.t0}, {self.tmax}]")
        if grid is None:
            inner = self.grid[(self.grid > ta + 1e-12) & (self.grid < tb - 1e-12)]
            grid = np.concatenate([[ta], inner, [tb]])
        return Foliation(self.tau, self.delta, grid, self.domain, self.orientation)


def coordinate_time(system, axis=0):
    """Default time function: projection onto a coordinate."""
    return system.points[:, axis].copy()


def interaction_time_range(system, tau, tol=0.0):
    """Largest time separation of interacting atom pairs.

    Atoms further apart than this in the time function carry identically
    vanishing kernel blocks, so restricting a localization domain by this
    margin is exact for the configuration at hand.
    """
    tau = np.asarray(tau, dtype=float)
    blocks = system.blocks()
    coupled = (np.abs(blocks.value) > tol)
    for arr in (blocks.grad1, blocks.hess11, blocks.hess12):
        coupled |= np.abs(arr).reshape(system.n, system.n, -1).max(axis=2) > tol
    gaps = np.abs(tau[:, None] - tau[None, :])[coupled]
    return float(gaps.max()) if gaps.size else 0.0


@dataclass
class LensRegion:
    """Lens-shaped region of a foliation: union of its layer supports.

    members: atoms with tau in (t0 - delta, tmax + delta); U is the
    localization domain carried by the foliation.
    """

    foliation: Foliation
    members: np.ndarray = field(init=False)

    def __post_init__(self):
        f = self.foliation
        inside = (f.tau > f.t0 - f.delta) & (f.tau < f.tmax + f.delta)
        keep = np.zeros_like(inside)
        keep[f.domain] = True
        self.members = np.nonzero(inside & keep)[0]

    @property
    def domain(self):
        return self.foliation.domain

    def reverse(self):
        return LensRegion(self.foliation.reverse())

    def l2_weight(self, system):
        """Per-point weight of the lens L2 product: strip of the full interval times atom mass."""
        w = np.zeros(system.n)
        f = self.foliation
        w[f.domain] = (f.strip(f.t0, f.tmax) * system.weights)[f.domain]
        return w

    def rho_weight(self, system):
        """Per-point weight of the plain-measure L2 product restricted to the region."""
        w = np.zeros(system.n)
        w[self.members] = system.weights[self.members]
        return w


def check_localization(system, lens, jet_basis=None, tol=1e-14):
    """Verify the kernel and its derivative blocks vanish between the lens
    layers and the complement of the localization domain.

    For every atom in some layer and every atom outside U, the value,
    gradients and Hessian blocks must vanish (at most `tol`); when a jet
    basis is given, gradient and Hessian checks are restricted to its
    directions.  Returns a report with the worst offending pair.
    """
    f = lens.foliation
    inside = lens.members
    outside = np.setdiff1d(np.arange(system.n), f.domain)
    report = {"passed": True, "max_violation": 0.0, "worst_pair": None,
              "n_layer_atoms": int(inside.size), "n_outside": int(outside.size)}
    if inside.size == 0 or outside.size == 0:
        return report
    blocks = system.blocks()
    directions = None
    if jet_basis is not None:
        directions = [j.vectors for j in jet_basis.jets()]
    worst = 0.0
    worst_pair = None
    for i in inside:
        for j in outside:
            vals = [abs(blocks.value[i, j])]
            if directions is None:
                vals.append(np.max(np.abs(blocks.grad1[i, j])))
                vals.append(np.max(np.abs(blocks.grad2[i, j])))
                vals.append(np.max(np.abs(blocks.hess11[i, j])))
                vals.append(np.max(np.abs(blocks.hess12[i, j])))
                vals.append(np.max(np.abs(blocks.hess22[i, j])))
            else:
                for vec in directions:
                    vals.append(abs(blocks.grad1[i, j] @ vec[i]))
                    vals.append(abs(blocks.grad2[i, j] @ vec[j]))
                    vals.append(abs(vec[i] @ blocks.hess11[i, j] @ vec[i]))
                    vals.append(abs(vec[i] @ blocks.hess12[i, j] @ vec[j]))
                    vals.append(abs(vec[j] @ blocks.hess22[i, j] @ vec[j]))
            v = float(max(vals))
            if v > worst:
                worst, worst_pair = v, (int(i), int(j))
    report["max_violation"] = worst
    report["worst_pair"] = worst_pair
    report["passed"] = worst <= tol
    return report


def future_partition(lens):
    """Find a grid time whose cutoff splits the lens cleanly at the future end.

    Returns (eta_check, report).  eta_check = eta at a grid time t* chosen so
    that (1 - eta_check) vanishes wherever eta_{t0} is positive and eta_check
    vanishes wherever eta_{tmax} is below one; both product identities are
    then exactly zero because the supports are disjoint by construction.
    Fails structurally when the lens is too thin to host such a time.  The
    companion check that cutoff multiplication lands in the future boundary
    space lives in `cauchy.check_future_partition` (it needs the system).
    """
    f = lens.foliation
    eta0 = f.eta(f.t0)
    eta1 = f.eta(f.tmax)
    for t in f.grid:
        cand = f.eta(t)
        if np.all(cand[eta0 > 0] >= 1.0) and np.all(cand[eta1 < 1.0] <= 0.0):
            report = {"passed": True, "t_star": float(t),
                      "product_identity_past": float(np.max(np.abs((1.0 - cand) * eta0))),
                      "product_identity_future": float(np.max(np.abs(cand * (1.0 - eta1))))}
            return cand, report
    return None, {"passed": False, "reason": "lens too thin: no grid time separates "
                                             "the initial layer from the final layer"}
