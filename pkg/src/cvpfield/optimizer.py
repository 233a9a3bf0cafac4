"""Weight optimization at fixed total volume, and variation jets.

Only the weights move; the points stay fixed.  The feasible set is the
scaled simplex {w >= 0, sum w = V}; the projection onto it uses the
standard sort-based algorithm, which is deterministic (ties resolved by
the sort order of the shifted values).
"""

import numpy as np

from .jets import Jet
from .errors import InputError
from .system import ell_on_support


def project_simplex(v, total=1.0):
    """Euclidean projection of v onto {w >= 0, sum w = total}."""
    v = np.asarray(v, dtype=float)
    u = np.sort(v)[::-1]
    css = np.cumsum(u)
    ks = np.arange(1, v.size + 1)
    admissible = u * ks > (css - total)
    rho = int(np.nonzero(admissible)[0][-1])
    lam = (total - css[rho]) / (rho + 1.0)
    return np.maximum(v + lam, 0.0)


def minimize(system, max_iters=100000, step=None, tol=1e-10, drop_tol=1e-12):
    """Projected gradient descent on the action over the weight simplex.

    Returns (system, report).  The returned system keeps only the atoms
    whose weights stay positive (atoms squeezed to zero weight leave the
    support of the measure); the multiplier parameter is recalibrated to
    the mean kernel row sum over the surviving atoms, which puts the
    one-point function at zero on the new support.  Non-convergence within
    max_iters is reported, not raised.
    """
    L = system.blocks().value
    V = system.total_volume
    w = system.weights.copy()
    lam_max = float(np.linalg.eigvalsh(L)[-1])
    if step is None:
        step = 1.0 / (2.0 * max(lam_max, 1e-30))
    action_prev = float(w @ L @ w)
    converged = False
    iters = 0
    for iters in range(1, max_iters + 1):
        g = 2.0 * (L @ w)
        w_new = project_simplex(w - step * g, V)
        action_new = float(w_new @ L @ w_new)
        if action_new > action_prev + 1e-15 * max(1.0, abs(action_prev)):
            # overshoot: halve the step, keep the iterate
            step *= 0.5
            if step < 1e-18:
                break
            continue
        pg_norm = float(np.linalg.norm(w_new - w)) / step
        w, action_prev = w_new, action_new
        if pg_norm <= tol:
            converged = True
            break
    keep = w > drop_tol
    rowsum = (L @ w)[keep]
    s_new = float(rowsum.mean()) if rowsum.size else system.s_param
    out = system.replace_weights(w, s_param=s_new, keep=np.nonzero(keep)[0])
    lv = ell_on_support(out)
    report = {
        "converged": converged,
        "iterations": iters,
        "final_action": action_prev,
        "s_param": s_new,
        "dropped_atoms": int(np.sum(~keep)),
        "total_volume": out.total_volume,
        "max_ell_on_M": float(np.max(np.abs(lv))) if lv.size else 0.0,
    }
    return out, report


def linearize_variation(system, f_dot, F_dot):
    """Jet generating the measure variation with density rate f_dot and
    point motion rate F_dot (the tau-derivative at zero of the family)."""
    f_dot = np.asarray(f_dot, dtype=float)
    F_dot = np.asarray(F_dot, dtype=float)
    if f_dot.shape != (system.n,):
        raise InputError(f"f_dot must have shape ({system.n},), got {f_dot.shape}")
    if F_dot.shape != (system.n, system.m):
        raise InputError(f"F_dot must have shape ({system.n}, {system.m}), got {F_dot.shape}")
    return Jet(f_dot, F_dot)
