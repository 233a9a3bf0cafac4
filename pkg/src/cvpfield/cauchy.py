"""Boundary jet spaces, weak Cauchy solvers, shielding, initial-data bounds.

The weak problem on a lens is solved by its finite Gram realization: with
test jets u_k spanning the boundary space, the canonical solution is the
element of span{Delta u_k} whose pairings against the test images match
the inhomogeneity.  It is the minimal-norm weak solution; all residuals
and energy bounds are recorded on the way out.
"""

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import forms
from .errors import InputError
from .foliation import LensRegion
from .jets import (Jet, JetSubspace, coordinate_jets, flat_cutoff, l2_norm, l2_product,
                   metric_matrix, orthonormalize_columns, projector, residual_to_span)
from .linfield import assemble_delta
from .surfacelayer import I2_TERMS, layer_form_matrix, osi_inner, symplectic

DEFAULT_RCOND = 1e-10


def default_jet_space(system, lens):
    """Full coordinate jet space supported in the localization domain."""
    return coordinate_jets(system, indices=lens.foliation.domain)


def _nullspace(C, rcond=DEFAULT_RCOND):
    if C.shape[0] == 0:
        return np.eye(C.shape[1])
    U, s, Vt = np.linalg.svd(C, full_matrices=True)
    smax = s[0] if s.size else 0.0
    rank = int(np.sum(s > rcond * smax)) if smax > 0 else 0
    return Vt[rank:].T


def _boundary_space(system, lens, pointwise_factor, t_constraint, jet_space, rcond):
    """Jets killed by a pointwise factor and by the layer functional at a time.

    pointwise_factor: per-point field whose positivity forces the jet to
    vanish there; t_constraint: time at which the layer functional against
    every jet of the ambient space must vanish.
    """
    if jet_space is None:
        jet_space = default_jet_space(system, lens)
    basis = jet_space.basis
    if basis.shape[1] == 0:
        return JetSubspace.empty(system.n, system.m, label="custom")
    rows = []
    # pointwise rows: every jet slot at atoms where the factor is positive,
    # plus compact support inside the localization domain
    outside = np.ones(system.n, dtype=bool)
    outside[lens.foliation.domain] = False
    factor_flat = flat_cutoff(pointwise_factor, system.m)
    active = (factor_flat > 0) | flat_cutoff(outside.astype(float), system.m).astype(bool)
    if np.any(active):
        rows.append(basis[active, :])
    # layer functional rows against the ambient basis
    B = layer_form_matrix(system, lens, t_constraint, I2_TERMS)
    rows.append((B @ basis).T @ basis)
    C = np.vstack(rows)
    null = _nullspace(C, rcond)
    return JetSubspace(basis @ null, system.m, label="custom", check_rank=False)


def boundary_space_past(system, lens, t0=None, jet_space=None, t_underline=None,
                        rcond=DEFAULT_RCOND):
    """Jets vanishing at the initial boundary: killed pointwise by the cutoff
    at the underline time and by the layer functional at t0 against the whole
    ambient space."""
    f = lens.foliation
    t0 = f.t0 if t0 is None else t0
    t_u = f.t0 if t_underline is None else t_underline
    sub = _boundary_space(system, lens, f.eta(t_u), t0, jet_space, rcond)
    sub.label = "boundary-past"
    return sub


def boundary_space_future(system, lens, tmax=None, jet_space=None, t_overline=None,
                          rcond=DEFAULT_RCOND):
    """Jets vanishing at the final boundary: killed pointwise by one minus the
    cutoff at the overline time and by the layer functional at tmax."""
    f = lens.foliation
    tmax = f.tmax if tmax is None else tmax
    t_o = f.tmax if t_overline is None else t_overline
    sub = _boundary_space(system, lens, 1.0 - f.eta(t_o), tmax, jet_space, rcond)
    sub.label = "boundary-future"
    return sub


def boundary_space_two_sided(system, lens, jet_space=None, rcond=DEFAULT_RCOND):
    """Intersection of the future space at tmax with the past space at tmin."""
    fut = boundary_space_future(system, lens, jet_space=jet_space, rcond=rcond)
    past = boundary_space_past(system, lens, jet_space=jet_space, rcond=rcond)
    from .jets import subspace_algebra
    out = subspace_algebra("intersect", [fut, past])
    out.label = "custom"
    return out


def check_future_partition(system, lens, jet_space=None, tol=1e-8):
    """Future-partition check including the boundary-space membership clause."""
    from .foliation import future_partition
    eta_check, rep = future_partition(lens)
    if not rep["passed"]:
        return eta_check, rep
    if jet_space is None:
        jet_space = default_jet_space(system, lens)
    bf = boundary_space_future(system, lens, jet_space=jet_space)
    worst = 0.0
    for k in range(jet_space.dim):
        cut = flat_cutoff(eta_check, system.m) * jet_space.basis[:, k]
        scale = max(float(np.linalg.norm(cut)), 1e-300)
        worst = max(worst, residual_to_span(bf.basis, cut) / scale)
    rep["membership_residual"] = worst
    rep["passed"] = bool(worst <= tol)
    return eta_check, rep


@dataclass
class WeakSolution:
    jet: Jet
    lens: LensRegion
    side: str                      # "future" | "past" | "two-sided"
    residuals: np.ndarray
    residual_norm: float
    gamma: float = math.inf
    bound_ok: bool = True
    norm: float = 0.0
    w_norm: float = 0.0
    split: tuple = None            # (v_plus, v_minus) for two-sided
    coefficients: np.ndarray = None
    info: dict = field(default_factory=dict)


class LensSolver:
    """Precomputed Gram machinery of the weak problem on one lens.

    Building the test basis, the operator images, and the pseudo-inverse of
    the Gram matrix once makes repeated solves (one per inhomogeneity
    column) cheap.
    """

    def __init__(self, system, lens, jet_space=None, operator=None, rcond=DEFAULT_RCOND):
        self.system = system
        self.lens = lens
        self.rcond = rcond
        f = lens.foliation
        if operator is None:
            operator = assemble_delta(system, domain=f.domain)
        self.operator = operator
        self.test_space = boundary_space_future(system, lens, jet_space=jet_space, rcond=rcond)
        self.l2w = lens.l2_weight(system)
        self.M = metric_matrix(system, self.l2w)
        k = self.test_space.dim
        self.images = operator.matrix @ self.test_space.basis  # Delta u_k columns
        if system.metric is not None:
            # dual components back to jet coordinates
            nd = system.jet_dim
            Minv = np.linalg.inv(metric_matrix(system, np.ones(system.n)))
            self.images = Minv @ self.images
        self.gram = self.images.T @ self.M @ self.images
        self.gram_pinv = np.linalg.pinv(self.gram, rcond=rcond) if k else np.zeros((0, 0))

    def solve(self, w, gamma=math.inf, rcond=None):
        """Canonical weak solution for inhomogeneity jet w."""
        system, lens = self.system, self.lens
        k = self.test_space.dim
        wf = w.flat()
        w_norm = math.sqrt(max(float(wf @ self.M @ wf), 0.0))
        if k == 0:
            warnings.warn("empty boundary test space: returning the zero solution")
            z = Jet.zero(system.n, system.m)
            return WeakSolution(z, lens, "future", np.zeros(0), 0.0, gamma, True,
                                0.0, w_norm, coefficients=np.zeros(0))
        b = self.test_space.basis.T @ (self.M @ wf)
        if rcond is None:
            c = self.gram_pinv @ b
        else:
            c = np.linalg.pinv(self.gram, rcond=rcond) @ b
        vf = self.images @ c
        resid = self.images.T @ (self.M @ vf) - b
        v_norm = math.sqrt(max(float(vf @ self.M @ vf), 0.0))
        scale = max(w_norm, v_norm, 1.0)
        bound_ok = True
        if np.isfinite(gamma):
            bound_ok = bool(v_norm <= gamma * w_norm + 1e-12 * scale)
        return WeakSolution(Jet.from_flat(vf, system.m), lens, "future",
                            resid, float(np.linalg.norm(resid)), gamma, bound_ok,
                            v_norm, w_norm, coefficients=c,
                            info={"residual_scale": scale,
                                  "test_dim": k})


def solve_weak_future(system, lens, w, jet_space=None, gamma=math.inf,
                      rcond=DEFAULT_RCOND, solver=None):
    """Weak Cauchy solution to the future with zero initial data.

    Returns the canonical minimal-norm solution; residuals are the pairings
    of the test images against the solution minus the inhomogeneity data.
    The energy bound against `gamma` is recorded when gamma is finite.
    """
    if solver is None:
        solver = LensSolver(system, lens, jet_space=jet_space, rcond=rcond)
    return solver.solve(w, gamma=gamma)


def solve_weak_two_sided(system, lens, t0, w, jet_space=None,
                         gamma_plus=math.inf, gamma_minus=math.inf,
                         rcond=DEFAULT_RCOND):
    """Weak solution on the full lens vanishing at an interior time t0.

    Splits the problem at t0: the future part solves on the sub-lens above
    t0 and is cut off by the strip above t0; the past part solves on the
    orientation-reversed sub-lens below t0 and is cut off by the strip below
    t0.  The sum satisfies the plain-measure weak equation against the
    two-sided boundary space, with the combined energy bound sqrt(2) times
    the worse of the one-sided constants.
    """
    f = lens.foliation
    if not (f.t0 + 1e-12 < t0 < f.tmax - 1e-12):
        raise InputError(f"t0 = {t0} must lie in the grid interior ({f.t0}, {f.tmax})")
    if t0 not in set(np.asarray(f.grid).tolist()):
        raise InputError(f"t0 = {t0} must be a grid time")

    # Sub-problem localization domains: atoms separated from the sub-lens by
    # more than the interaction range carry no information about it; keeping
    # them in the test space adds near-null directions whose pairings make
    # the Gram system inconsistent, so the domains are trimmed exactly.
    from .foliation import interaction_time_range
    gap = interaction_time_range(system, f.tau)
    dom = f.domain
    dom_plus = dom[f.tau[dom] > t0 - f.delta - gap - 1e-12]
    dom_minus = dom[f.tau[dom] < t0 + f.delta + gap + 1e-12]
    fol_plus = f.restricted(t0, f.tmax)
    fol_plus = type(f)(fol_plus.tau, fol_plus.delta, fol_plus.grid, dom_plus, f.orientation)
    fol_minus = f.restricted(f.t0, t0)
    fol_minus = type(f)(fol_minus.tau, fol_minus.delta, fol_minus.grid, dom_minus,
                        f.orientation).reverse()
    lens_plus = LensRegion(fol_plus)
    lens_minus = LensRegion(fol_minus)

    sol_p = solve_weak_future(system, lens_plus, w, jet_space, gamma_plus, rcond)
    sol_m = solve_weak_future(system, lens_minus, w, jet_space, gamma_minus, rcond)
    v_plus = sol_p.jet.cutoff(f.strip(t0, f.tmax))
    v_minus = sol_m.jet.cutoff(f.strip(f.t0, t0))
    v_hat = v_plus + v_minus

    # verify the combined weak equation in the plain restricted measure
    ts = boundary_space_two_sided(system, lens, jet_space=jet_space, rcond=rcond)
    rho_w = lens.rho_weight(system)
    Mr = metric_matrix(system, rho_w)
    op = assemble_delta(system, domain=f.domain)
    resid = np.zeros(ts.dim)
    vf = v_hat.flat()
    wf = w.flat()
    for k in range(ts.dim):
        du = op.matrix @ ts.basis[:, k]
        resid[k] = float(du @ Mr @ vf) - float(ts.basis[:, k] @ Mr @ wf)
    v_norm = math.sqrt(max(float(vf @ Mr @ vf), 0.0))
    w_norm = math.sqrt(max(float(wf @ Mr @ wf), 0.0))
    gamma = math.sqrt(2.0) * max(gamma_plus, gamma_minus)
    bound_ok = True
    if np.isfinite(gamma):
        bound_ok = bool(v_norm <= gamma * w_norm + 1e-12 * max(v_norm, w_norm, 1.0))
    out = WeakSolution(v_hat, lens, "two-sided", resid, float(np.linalg.norm(resid)),
                       gamma, bound_ok, v_norm, w_norm, split=(v_plus, v_minus),
                       info={"plus": sol_p, "minus": sol_m, "t0": t0,
                             "members_plus": lens_plus.members,
                             "members_minus": lens_minus.members})
    return out


def check_green_formula(system, lens, u, v, operator=None, tol=1e-10):
    """Integration-by-parts identity on the lens: the jump of the symplectic
    form between the boundary times equals the antisymmetrized operator
    pairing in the lens product.  All four terms evaluated independently."""
    f = lens.foliation
    if operator is None:
        operator = assemble_delta(system, domain=f.domain)
    s_max = symplectic(system, lens, f.tmax, u, v)
    s_min = symplectic(system, lens, f.t0, u, v)
    l2w = lens.l2_weight(system)
    t1 = l2_product(system, u, operator.apply(v), l2w)
    t2 = l2_product(system, operator.apply(u), v, l2w)
    lhs = s_max - s_min
    rhs = t1 - t2
    scale = max(abs(s_max), abs(s_min), abs(t1), abs(t2), 1e-300)
    return {"lhs": lhs, "rhs": rhs, "terms": {"sigma_tmax": s_max, "sigma_t0": s_min,
                                              "u_Dv": t1, "Du_v": t2},
            "abs_error": abs(lhs - rhs), "rel_error": abs(lhs - rhs) / scale,
            "passed": bool(abs(lhs - rhs) <= tol * max(scale, 1.0))}


def check_uniqueness_class(system, lens, v1, v2, jet_space=None, solver=None,
                           rcond=DEFAULT_RCOND):
    """Two weak solutions of the same problem may differ only by a jet
    orthogonal to the test images in the lens product; report the projection
    of the difference onto their span."""
    if solver is None:
        solver = LensSolver(system, lens, jet_space=jet_space, rcond=rcond)
    M = solver.M
    d = (v1 - v2).flat()
    d_norm = math.sqrt(max(float(d @ M @ d), 0.0))
    Q = orthonormalize_columns(solver.images, M)
    proj = Q @ (Q.T @ (M @ d))
    p_norm = math.sqrt(max(float(proj @ M @ proj), 0.0))
    passed = bool(p_norm <= 1e-8 * d_norm or d_norm <= 1e-12 * max(1.0, v1.flat().size))
    return {"difference_norm": d_norm, "projection_norm": p_norm, "passed": passed}


def k_space(system, lens, side, jet_space=None, rcond=DEFAULT_RCOND, operator=None):
    """Span of the strip-cutoff operator images of the boundary space over
    the grid times, orthonormalized in the plain-measure product."""
    f = lens.foliation
    if operator is None:
        operator = assemble_delta(system, domain=f.domain)
    if side == "future":
        bs = boundary_space_future(system, lens, jet_space=jet_space, rcond=rcond)
        cuts = [f.strip(t, f.tmax) for t in f.grid]
    elif side == "past":
        bs = boundary_space_past(system, lens, jet_space=jet_space, rcond=rcond)
        cuts = [f.strip(f.t0, t) for t in f.grid]
    else:
        raise InputError(f"side must be 'future' or 'past', got {side!r}")
    if bs.dim == 0:
        return JetSubspace.empty(system.n, system.m)
    images = operator.matrix @ bs.basis
    cols = []
    for cut in cuts:
        cf = flat_cutoff(cut, system.m)
        cols.append(cf[:, None] * images)
    stacked = np.hstack(cols)
    M = metric_matrix(system, system.weights)
    return JetSubspace(orthonormalize_columns(stacked, M), system.m, check_rank=False)


def is_nested(system, inner, outer, jet_space_inner=None, jet_space_outer=None,
              tol=1e-8):
    """Nesting of lens regions: region and domain inclusion, boundary-space
    containment at the projector level, and matching initial cutoffs at some
    pair of grid times."""
    rep = {"passed": False, "clauses": {}}
    rep["clauses"]["region"] = bool(np.all(np.isin(inner.members, outer.members)))
    rep["clauses"]["domain"] = bool(np.all(np.isin(inner.foliation.domain,
                                                   outer.foliation.domain)))
    bf_i = boundary_space_future(system, inner, jet_space=jet_space_inner)
    bf_o = boundary_space_future(system, outer, jet_space=jet_space_outer)
    bp_i = boundary_space_past(system, inner, jet_space=jet_space_inner)
    bp_o = boundary_space_past(system, outer, jet_space=jet_space_outer)

    def contained(a, b):
        if a.dim == 0:
            return True
        Pb = projector(b)
        r = a.basis - Pb @ a.basis
        return bool(np.max(np.abs(r)) <= tol * max(1.0, np.max(np.abs(a.basis))))

    rep["clauses"]["future_space"] = contained(bf_i, bf_o)
    rep["clauses"]["past_space"] = contained(bp_i, bp_o)
    fi, fo = inner.foliation, outer.foliation
    match = None
    for ta in fi.grid:
        ea = fi.eta(ta)[fi.domain]
        for tb in fo.grid:
            if np.max(np.abs(ea - fo.eta(tb)[fi.domain])) <= 1e-12:
                match = (float(ta), float(tb))
                break
        if match:
            break
    rep["clauses"]["layer_compatibility"] = match is not None
    rep["matching_times"] = match
    rep["passed"] = all(rep["clauses"].values())
    return rep


@dataclass
class ShieldingReport:
    s: float
    constrained_dim: int
    witness: dict = field(default_factory=dict)
    exact: bool = False


def shielding_constant(system, V, lens, lens_hat, jet_space=None, side="future",
                       rcond=DEFAULT_RCOND, check_nesting=True):
    """Largest ratio of the V-norm to the lens-norm over jets orthogonal to
    the lens-masked operator images inside the span of the two strip-image
    spaces.  Zero means exact shielding; infinity (with witness) means some
    constrained jet vanishes on the lens but not on V."""
    if check_nesting:
        nest = is_nested(system, lens, lens_hat, jet_space, jet_space)
        if not nest["passed"]:
            bad = [k for k, v in nest["clauses"].items() if not v]
            raise InputError(f"lens not nested in lens_hat; failed clauses: {bad}")
    V = np.asarray(V, dtype=int)
    K1 = k_space(system, lens_hat, side, jet_space=jet_space, rcond=rcond)
    K2 = k_space(system, lens, side, jet_space=jet_space, rcond=rcond)
    M = metric_matrix(system, system.weights)
    from .jets import subspace_algebra
    span = subspace_algebra("span-union", [K1, K2], inner=M)
    if span.dim == 0:
        return ShieldingReport(0.0, 0, exact=True)
    bs = boundary_space_future(system, lens, jet_space=jet_space, rcond=rcond)
    op = assemble_delta(system, domain=lens.foliation.domain)
    chi = np.zeros(system.n)
    chi[lens.members] = 1.0
    masked = flat_cutoff(chi, system.m)[:, None] * (op.matrix @ bs.basis)
    C = masked.T @ M @ span.basis
    null = _nullspace(C, rcond)
    if null.shape[1] == 0:
        return ShieldingReport(0.0, 0, exact=True)
    N = span.basis @ null
    wV = np.zeros(system.n)
    wV[V] = system.weights[V]
    MV = metric_matrix(system, wV)
    wL = np.zeros(system.n)
    wL[lens.members] = system.weights[lens.members]
    ML = metric_matrix(system, wL)
    A = N.T @ MV @ N
    B = N.T @ ML @ N
    sB, VB = np.linalg.eigh(B)
    keep = sB > (1e-12) ** 2 * max(float(sB[-1]), 1e-300)
    degenerate = ~keep
    if np.any(degenerate):
        Adeg = VB[:, degenerate].T @ A @ VB[:, degenerate]
        if Adeg.size and np.linalg.eigvalsh(Adeg)[-1] > 1e-24:
            vec = N @ VB[:, degenerate][:, -1]
            return ShieldingReport(math.inf, null.shape[1],
                                   witness={"jet_coords": vec.tolist(),
                                            "reason": "constrained jet vanishes on the lens "
                                                      "but not on V"})
    if not np.any(keep):
        return ShieldingReport(0.0, null.shape[1], exact=True)
    T = VB[:, keep] / np.sqrt(sB[keep])
    vals = np.linalg.eigvalsh(T.T @ A @ T)
    s = math.sqrt(max(float(vals[-1]), 0.0))
    return ShieldingReport(s, null.shape[1], exact=bool(s == 0.0))


def initial_data_bound(system, lens, lens_hat, solution, hyp_report, t0=None,
                       shielding=None):
    """Bound on the layer norm of the solution at the initial time by the
    inhomogeneity norm over the sub-lens hosting the initial layer.

    The constant is four times C, the exponential of twice c times the
    sub-lens time span, the time span itself, and the square root of the
    sup of the initial layer rate.  When a nonzero shielding constant is
    supplied the bound carries the additive correction s times the lens
    norm of the solution."""
    f = lens.foliation
    fh = lens_hat.foliation
    t0 = f.t0 if t0 is None else t0
    q = osi_inner(system, lens, t0, solution.jet, solution.jet)
    if q < -1e-12 * max(1.0, abs(q)):
        return {"passed": None, "skipped": True,
                "reason": f"layer inner product at t0 is indefinite ({q:.3e})"}
    v_t0 = math.sqrt(max(q, 0.0))
    C, c = hyp_report.C, hyp_report.c
    span = fh.tmax - fh.t0
    theta_sup = float(np.max(f.theta(t0))) if system.n else 0.0
    if not (np.isfinite(C) and np.isfinite(c)) or 2.0 * c * span >= 700:
        return {"passed": None, "skipped": True, "reason": "hyperbolicity constants not finite"}
    c_hat = 4.0 * C * math.exp(2.0 * c * span) * span * math.sqrt(theta_sup)
    w_norm_hat = solution.w_norm if hasattr(solution, "w_norm") else 0.0
    correction = 0.0
    if shielding is not None and shielding.s > 0 and np.isfinite(shielding.s):
        correction = shielding.s * solution.norm
    bound = c_hat * w_norm_hat + correction
    return {"passed": bool(v_t0 <= bound + 1e-12), "skipped": False,
            "norm_t0": v_t0, "c_hat": c_hat, "bound": bound,
            "correction": correction, "slack": bound - v_t0,
            "sub_span": span}


def check_restriction_property(system, lens, sub_lens, t0, sub_t0, w,
                               jet_space=None, rcond=DEFAULT_RCOND, tol=1e-8):
    """The two-sided solution restricted to a nested sub-lens satisfies the
    sub-lens weak equations: direct residual test."""
    sol = solve_weak_two_sided(system, lens, t0, w, jet_space, rcond=rcond)
    chi = np.zeros(system.n)
    chi[sub_lens.members] = 1.0
    v_restr = sol.jet.cutoff(chi)
    ts = boundary_space_two_sided(system, sub_lens, jet_space=jet_space, rcond=rcond)
    rho_w = sub_lens.rho_weight(system)
    Mr = metric_matrix(system, rho_w)
    op = assemble_delta(system, domain=sub_lens.foliation.domain)
    vf = v_restr.flat()
    wf = w.flat()
    resid = np.array([float((op.matrix @ ts.basis[:, k]) @ Mr @ vf)
                      - float(ts.basis[:, k] @ Mr @ wf) for k in range(ts.dim)])
    scale = max(sol.norm, sol.w_norm, 1.0)
    r = float(np.linalg.norm(resid)) if resid.size else 0.0
    return {"residual_norm": r, "passed": bool(r <= tol * scale),
            "test_dim": ts.dim, "solution": sol}
