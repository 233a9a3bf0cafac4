"""Discrete causal variational systems: weighted point configurations.

The measure is atomic, so every integral in the theory becomes a weighted
sum over the support points.  A system is immutable after construction;
kernel derivative blocks over all point pairs are cached on first use.
"""

import json

import numpy as np

from .errors import InputError, ParseError, ValidationError
from .kernels import make_kernel


class DiscreteSystem:
    """Weighted point configuration with a kernel and the multiplier parameter.

    points: (N, m) array, pairwise distinct; weights: (N,) strictly positive;
    s_param: the Lagrange multiplier of the volume constraint (the level that
    the one-point function takes off its support); metric: None for the
    identity pointwise metric or an (N, m, m) stack of SPD matrices.
    """

    def __init__(self, points, weights, kernel, s_param, metric=None):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        weights = np.asarray(weights, dtype=float)
        if points.ndim != 2:
            raise ValidationError(f"points must be a 2-d array, got shape {points.shape}")
        n, m = points.shape
        if kernel.m != m:
            raise ValidationError(f"kernel dimension {kernel.m} != point dimension {m}")
        if weights.shape != (n,):
            raise ValidationError(f"weights must have shape ({n},), got {weights.shape}")
        if not np.all(np.isfinite(points)) or not np.all(np.isfinite(weights)):
            raise ValidationError("points and weights must be finite")
        if np.any(weights <= 0):
            bad = int(np.argmin(weights))
            raise ValidationError(f"weights must be strictly positive; weights[{bad}] = {weights[bad]}")
        if s_param <= 0:
            raise ValidationError(f"s_param must be positive, got {s_param}")
        # pairwise distinct points
        order = np.lexsort(points.T[::-1])
        sorted_pts = points[order]
        if n > 1 and np.any(np.all(sorted_pts[1:] == sorted_pts[:-1], axis=1)):
            k = int(np.argmax(np.all(sorted_pts[1:] == sorted_pts[:-1], axis=1)))
            raise ValidationError(
                f"points must be pairwise distinct; indices {order[k]} and {order[k + 1]} coincide")
        self.points = points
        self.weights = weights
        self.kernel = kernel
        self.s_param = float(s_param)
        if metric is not None:
            metric = np.asarray(metric, dtype=float)
            if metric.shape != (n, m, m):
                raise ValidationError(f"metric must have shape ({n}, {m}, {m}), got {metric.shape}")
        self.metric = metric
        self._blocks = None
        self.points.setflags(write=False)
        self.weights.setflags(write=False)

    @property
    def n(self):
        return self.points.shape[0]

    @property
    def m(self):
        return self.points.shape[1]

    @property
    def jet_dim(self):
        """Dimension of flattened jet coordinates: one scalar plus m vector slots per point."""
        return self.n * (1 + self.m)

    @property
    def total_volume(self):
        return float(self.weights.sum())

    def blocks(self):
        """Kernel value/derivative blocks over all point pairs (cached)."""
        if self._blocks is None:
            self._blocks = self.kernel.pair_blocks(self.points)
        return self._blocks

    def metric_at(self, i):
        if self.metric is None:
            return np.eye(self.m)
        return self.metric[i]

    def replace_weights(self, weights, s_param=None, keep=None):
        """New system with updated weights; `keep` restricts to a subset of atoms."""
        if keep is None:
            keep = slice(None)
        metric = None if self.metric is None else self.metric[keep]
        return DiscreteSystem(self.points[keep], np.asarray(weights, dtype=float)[keep],
                              self.kernel, self.s_param if s_param is None else s_param,
                              metric)


def action(system):
    """Value of the causal action: the double sum of the kernel against the weights."""
    w = system.weights
    return float(w @ system.blocks().value @ w)


def ell(system, x):
    """One-point function at an arbitrary point x (not necessarily an atom)."""
    x = np.asarray(x, dtype=float)
    if x.shape != (system.m,):
        raise InputError(f"x must have shape ({system.m},), got {x.shape}")
    total = 0.0
    for j in range(system.n):
        total += system.weights[j] * system.kernel.eval(x, system.points[j])
    return total - system.s_param


def ell_on_support(system):
    """Vector of one-point function values at the atoms."""
    return system.blocks().value @ system.weights - system.s_param


def ell_gradient_on_support(system):
    """(N, m) array of spatial gradients of the one-point function at the atoms."""
    return np.einsum("ijk,j->ik", system.blocks().grad1, system.weights)


def el_residuals(system, test_basis):
    """Euler-Lagrange residuals: sup norm of the one-point function on the
    support and of its jet derivatives along a basis of test jets.

    test_basis: JetSubspace (or anything with `.jets()` yielding Jet objects).
    """
    lv = ell_on_support(system)
    dl = ell_gradient_on_support(system)
    max_weak = 0.0
    for jet in test_basis.jets():
        r = jet.scalars * lv + np.einsum("ik,ik->i", jet.vectors, dl)
        max_weak = max(max_weak, float(np.max(np.abs(r))) if r.size else 0.0)
    return {"max_ell_on_M": float(np.max(np.abs(lv))) if lv.size else 0.0,
            "max_weak_residual": max_weak}


def _system_to_dict(system):
    metric = "identity" if system.metric is None else system.metric.tolist()
    return {
        "m": system.m,
        "points": system.points.tolist(),
        "weights": system.weights.tolist(),
        "kernel": system.kernel.spec(),
        "s_param": system.s_param,
        "metric": metric,
    }


def save_system(system, path):
    """Write the system as UTF-8 JSON; floats round-trip exactly."""
    with open(path, "w", encoding="utf-8") as f:
        json.dump(_system_to_dict(system), f, indent=1)
        f.write("\n")


def system_from_dict(data):
    for field in ("m", "points", "weights", "kernel", "s_param"):
        if field not in data:
            raise ParseError("missing required field", field=field)
    kspec = data["kernel"]
    if not isinstance(kspec, dict) or "kind" not in kspec:
        raise ParseError("kernel block must be an object with a 'kind'", field="kernel")
    try:
        kernel = make_kernel(kspec)
    except (KeyError, InputError) as exc:
        raise ParseError(f"bad kernel block: {exc}", field="kernel") from exc
    metric = data.get("metric", "identity")
    metric = None if metric == "identity" else metric
    try:
        return DiscreteSystem(points=data["points"], weights=data["weights"],
                              kernel=kernel, s_param=data["s_param"], metric=metric)
    except ValidationError:
        raise


def load_system(path):
    """Read a system file; raises ParseError with field context on malformed input."""
    with open(path, "r", encoding="utf-8") as f:
        try:
            data = json.load(f)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    if not isinstance(data, dict):
        raise ParseError("top-level value must be an object")
    return system_from_dict(data)
