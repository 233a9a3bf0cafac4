"""Surface-layer bilinear forms, energy identities, hyperbolicity constants.

All layer integrals are double sums over the localization domain U with
pair weights built from the cutoff eta_t.  The three functionals are
assembled independently from their own derivative-placement combinations:

    two_point_form   : (d1 - d2)(d1 + d2)   ("I2")
    osi_inner        : d1 d1 - d2 d2        (symmetric part)
    symplectic       : d1 d2 - d2 d1        (antisymmetric part)

so that the recombination identity I2 = inner + symplectic is a genuine
cross-check of the assembly.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize as _sopt

from . import forms
from .errors import InputError
from .jets import Jet, l2_norm, l2_product, metric_matrix
from .linfield import assemble_delta

I2_TERMS = (("11", 1.0), ("12", 1.0), ("21", -1.0), ("22", -1.0))
INNER_TERMS = (("11", 1.0), ("22", -1.0))
SYMPLECTIC_TERMS = (("12", 1.0), ("21", -1.0))


def _pair_weights(system, lens, t, eta_field=None):
    f = lens.foliation
    et = f.eta(t) if eta_field is None else np.asarray(eta_field, dtype=float)
    mask = np.zeros(system.n)
    mask[f.domain] = 1.0
    a = system.weights * et * mask
    b = system.weights * (1.0 - et) * mask
    return np.outer(a, b)


def layer_form_matrix(system, lens, t, terms, eta_field=None):
    """Flat-coordinate matrix of a layer functional at time t (or for an
    explicit cutoff field)."""
    return forms.second_order_form(system, _pair_weights(system, lens, t, eta_field), terms)


def i2(system, lens, t, u, v):
    """Layer functional mixing a transport row jet with a symmetric column jet."""
    B = layer_form_matrix(system, lens, t, I2_TERMS)
    return float(u.flat() @ B @ v.flat())


def osi_inner(system, lens, t, u, v):
    """Surface-layer inner product; symmetric in (u, v) exactly, including
    in floating point (both argument orders are averaged)."""
    B = layer_form_matrix(system, lens, t, INNER_TERMS)
    uf, vf = u.flat(), v.flat()
    return 0.5 * (float(uf @ B @ vf) + float(vf @ B @ uf))


def symplectic(system, lens, t, u, v, eta_field=None):
    """Surface-layer symplectic form; antisymmetric in (u, v) exactly,
    including in floating point (both argument orders are differenced)."""
    B = layer_form_matrix(system, lens, t, SYMPLECTIC_TERMS, eta_field)
    uf, vf = u.flat(), v.flat()
    return 0.5 * (float(uf @ B @ vf) - float(vf @ B @ uf))


def delta2_density(system, lens, v1, v2, i=None):
    """Second-order density of the action expansion at the lens atoms.

    Returns the per-point array over all atoms (y-sum over the localization
    domain), or the single value at atom i when given.
    """
    dens = forms.delta2_density(system, v1, v2, domain=lens.foliation.domain)
    if i is None:
        return dens
    if not (0 <= i < system.n):
        raise InputError(f"point index {i} out of range [0, {system.n})")
    return float(dens[i])


def strip_energy(system, lens, ta, tb, u, v, operator=None):
    """Strip energy: integrated pairing of the cutoff jets under the operator.

    <eta u, Delta (eta v)>_M with eta the strip field of [ta, tb]; the
    operator defaults to the full-measure assembly.
    """
    if operator is None:
        operator = assemble_delta(system)
    et = lens.foliation.strip(ta, tb)
    return operator.bilinear(u.cutoff(et), v.cutoff(et))


def strip_energy_matrix(system, lens, ta, tb, operator=None):
    """Flat-coordinate matrix of the strip energy form (symmetric part)."""
    if operator is None:
        operator = assemble_delta(system)
    E = np.diag(np.repeat(lens.foliation.strip(ta, tb), 1 + system.m))
    B = E @ operator.weighted_matrix() @ E
    return 0.5 * (B + B.T)


def check_energy_identity(system, lens, v, t, h, operator=None):
    """First energy identity: time derivative of the layer inner product
    against the operator pairing, the second-order density, and the scalar
    mass term, all integrated over the layer.

    The left side is a central difference with steps h and h/2; the report
    carries both errors and the observed convergence order (expected 2 for
    the quintic profile away from the profile kinks).
    """
    f = lens.foliation
    if operator is None:
        operator = assemble_delta(system, domain=f.domain)
    th = f.theta(t)
    wth = system.weights * th
    pair_v = forms.pointwise_pairing(system, v.flat(), operator.matrix @ v.flat())
    dens = forms.delta2_density(system, v, v, domain=f.domain)
    rhs = float(2.0 * wth @ pair_v - 2.0 * wth @ dens
                + system.s_param * wth @ (v.scalars ** 2))

    def lhs(step):
        return (osi_inner(system, lens, t + step, v, v)
                - osi_inner(system, lens, t - step, v, v)) / (2.0 * step)

    l1, l2_ = lhs(h), lhs(h / 2.0)
    scale = max(abs(rhs), abs(l1), 1e-300)
    e1, e2 = abs(l1 - rhs), abs(l2_ - rhs)
    order = math.log2(e1 / e2) if e2 > 0 and e1 > 0 else float("inf")
    return {"lhs": l1, "lhs_half": l2_, "rhs": rhs,
            "abs_error": e1, "rel_error": e1 / scale,
            "abs_error_half": e2, "order": order}


def check_energy_identity_alt(system, lens, v, t, h, operator=None):
    """Second energy identity: time derivative of the strip energy equals
    twice the pairing of the strip-cutoff jet with the operator applied to
    the rate-cutoff jet."""
    f = lens.foliation
    if operator is None:
        operator = assemble_delta(system)
    strip_v = v.cutoff(f.strip(f.t0, t))
    rate_v = v.cutoff(f.theta(t))
    rhs = 2.0 * operator.bilinear(strip_v, rate_v)

    def lhs(step):
        return (strip_energy(system, lens, f.t0, t + step, v, v, operator)
                - strip_energy(system, lens, f.t0, t - step, v, v, operator)) / (2.0 * step)

    l1, l2_ = lhs(h), lhs(h / 2.0)
    scale = max(abs(rhs), abs(l1), 1e-300)
    e1, e2 = abs(l1 - rhs), abs(l2_ - rhs)
    order = math.log2(e1 / e2) if e2 > 0 and e1 > 0 else float("inf")
    return {"lhs": l1, "lhs_half": l2_, "rhs": rhs,
            "abs_error": e1, "rel_error": e1 / scale,
            "abs_error_half": e2, "order": order}


@dataclass
class HyperbolicityReport:
    kind: str                    # "standard" | "alternative"
    ok: bool
    C: float = math.inf
    c: float = math.inf
    Gamma: float = math.inf
    t_range: tuple = (None, None)
    method: str = "eigen+sampled"
    certificate: dict = field(default_factory=dict)
    witness: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def as_dict(self):
        out = {"kind": self.kind, "ok": self.ok, "C": self.C, "c": self.c,
               "Gamma": self.Gamma, "t_range": list(self.t_range), "method": self.method,
               "certificate": self.certificate, "witness": self.witness}
        out.update(self.extra)
        return out


def _restricted(B, basis):
    return basis.T @ B @ basis


def _gen_eig_min(Q, P, rel_tol=1e-12):
    """Smallest eigenvalue of Q against P on the range of P.

    Returns (lambda_min, eigvec or None, degenerate_directions_ok) where the
    last flag is False when Q is negative on the null space of P.
    """
    s, V = np.linalg.eigh(P)
    smax = max(float(s[-1]), 0.0)
    keep = s > rel_tol * max(smax, 1e-300)
    null = ~keep
    null_ok = True
    if np.any(null):
        Qn = V[:, null].T @ Q @ V[:, null]
        if Qn.size and np.linalg.eigvalsh(Qn)[0] < -1e-10 * max(1.0, np.linalg.norm(Q, 2)):
            null_ok = False
    if not np.any(keep):
        return math.inf, None, null_ok
    T = V[:, keep] / np.sqrt(s[keep])
    evals, evecs = np.linalg.eigh(T.T @ Q @ T)
    return float(evals[0]), T @ evecs[:, 0], null_ok


def _sampled_ratio_min(Q_fun, D_fun, k, n_samples, seed, refine=8):
    """Minimize Q(c)/D(c) over the unit sphere in R^k by random restarts
    plus a few local descent steps (deterministic for a fixed seed)."""
    rng = np.random.default_rng(seed)

    def ratio(c):
        d = D_fun(c)
        if d <= 1e-300:
            return math.inf
        return Q_fun(c) / d

    best = math.inf
    best_c = None
    for _ in range(n_samples):
        c = rng.standard_normal(k)
        c /= np.linalg.norm(c)
        r = ratio(c)
        if r < best:
            best, best_c = r, c
    if best_c is not None and refine:
        res = _sopt.minimize(ratio, best_c, method="Nelder-Mead",
                             options={"maxiter": 200 * k, "xatol": 1e-10, "fatol": 1e-12})
        if np.isfinite(res.fun) and res.fun < best:
            best, best_c = float(res.fun), res.x / np.linalg.norm(res.x)
    return best, best_c


def hyperbolicity_constant(system, lens, subspace, n_samples=1000, seed=0):
    """Constant of the layer-energy lower bound over the given jet subspace.

    Two stages per grid time: the exact smallest generalized eigenvalue of
    the layer inner product against the layer mass (quadratic part), then a
    sampled minimization of the full ratio whose denominator adds the
    absolute second-order density.  Fails with a witness jet when the layer
    inner product is not positive semi-definite on the subspace at some
    grid time.
    """
    f = lens.foliation
    basis = subspace.basis
    k = subspace.dim
    if k == 0:
        return HyperbolicityReport("standard", ok=False,
                                   witness={"reason": "empty subspace"})
    jets = subspace.jets()
    dens_cols = np.column_stack(
        [forms.delta2_density(system, ji, jj, domain=f.domain).ravel()
         for ji in jets for jj in jets]).reshape(system.n, k, k)
    Mfull = metric_matrix(system, np.ones(system.n))
    lam_quad = math.inf
    lam_full = math.inf
    worst = {}
    for t in f.grid:
        Q = _restricted(0.5 * (layer_form_matrix(system, lens, t, INNER_TERMS)
                               + layer_form_matrix(system, lens, t, INNER_TERMS).T), basis)
        wth = system.weights * f.theta(t)
        P = _restricted(metric_matrix(system, wth), basis)
        if not np.any(wth > 0):
            # empty layer: only sign of Q matters
            ev = np.linalg.eigvalsh(Q)
            if ev[0] < -1e-12 * max(1.0, abs(ev[-1])):
                return HyperbolicityReport(
                    "standard", ok=False, t_range=(f.t0, f.tmax),
                    witness={"t": float(t), "min_eigenvalue": float(ev[0]),
                             "reason": "layer inner product indefinite on empty layer"})
            continue
        lam, vec, null_ok = _gen_eig_min(Q, P)
        if lam <= 0 or not null_ok:
            wit_jet = None if vec is None else (basis @ vec).tolist()
            return HyperbolicityReport(
                "standard", ok=False, t_range=(f.t0, f.tmax),
                witness={"t": float(t), "lambda": lam if lam != math.inf else None,
                         "jet_coords": wit_jet,
                         "reason": "layer inner product not positive on subspace"})
        lam_quad = min(lam_quad, lam)

        def Q_fun(c, Q=Q):
            return float(c @ Q @ c)

        def D_fun(c, P=P, wth=wth, dens_cols=dens_cols):
            mass = float(c @ P @ c)
            dvals = np.einsum("ikl,k,l->i", dens_cols, c, c)
            return mass + float(wth @ np.abs(dvals))

        lam_s, c_s = _sampled_ratio_min(Q_fun, D_fun, k, n_samples, seed)
        if lam_s < lam_full:
            lam_full = lam_s
            worst = {"t": float(t), "ratio": lam_s,
                     "jet_coords": None if c_s is None else (basis @ c_s).tolist()}
        if lam_s <= 0:
            return HyperbolicityReport(
                "standard", ok=False, t_range=(f.t0, f.tmax),
                witness={"t": float(t), "ratio": lam_s,
                         "reason": "sampled full ratio nonpositive"})
    if not np.isfinite(lam_full):
        lam_full = lam_quad
    if not np.isfinite(lam_full):
        # no grid time produced a usable layer: the layer energy vanishes
        # identically, so no positive lower bound can be certified
        return HyperbolicityReport(
            "standard", ok=False, t_range=(f.t0, f.tmax),
            witness={"reason": "surface layer inner product vanishes identically "
                               "on the grid (disconnected or empty layers)"})
    C = 1.0 / math.sqrt(lam_full) if lam_full > 0 else math.inf
    c = C ** 2 + C ** 2 * system.s_param / 2.0 if np.isfinite(C) else math.inf
    T = f.tmax - f.t0
    Gamma = 2.0 * C * math.exp(min(2.0 * c * T, 1e6)) * T if np.isfinite(c) else math.inf
    if np.isfinite(Gamma) and 2.0 * c * T >= 700:
        Gamma = math.inf
    return HyperbolicityReport(
        "standard", ok=True, C=C, c=c, Gamma=Gamma, t_range=(f.t0, f.tmax),
        certificate=worst, method="eigen+sampled",
        extra={"lambda_quadratic": lam_quad, "lambda_full": lam_full})


def lagrangian_l2_constant(system, lens):
    """Constant bounding the strip energy by the lens L2 norm.

    Square root of: the sup over lens atoms of the interval cutoff times the
    spectral norm of the jet Hessian of the one-point function, plus the sup
    over atoms of the cutoff-weighted row sum of mixed-block norms.
    """
    from .system import ell_gradient_on_support, ell_on_support
    f = lens.foliation
    etaI = f.strip(f.t0, f.tmax)
    blocks = system.blocks()
    lv = ell_on_support(system)
    dl = ell_gradient_on_support(system)
    hess_l = np.einsum("ijkl,j->ikl", blocks.hess11, system.weights)
    m = system.m
    term1 = 0.0
    for i in range(system.n):
        if etaI[i] <= 0:
            continue
        A = np.zeros((1 + m, 1 + m))
        A[0, 0] = lv[i]
        A[0, 1:] = dl[i]
        A[1:, 0] = dl[i]
        A[1:, 1:] = hess_l[i]
        term1 = max(term1, etaI[i] * float(np.linalg.norm(A, 2)))
    term2 = 0.0
    for i in range(system.n):
        row = 0.0
        for j in range(system.n):
            K = np.zeros((1 + m, 1 + m))
            K[0, 0] = blocks.value[i, j]
            K[0, 1:] = blocks.grad2[i, j]
            K[1:, 0] = blocks.grad1[i, j]
            K[1:, 1:] = blocks.hess12[i, j]
            row += system.weights[j] * etaI[j] * float(np.linalg.norm(K, 2))
        term2 = max(term2, row)
    return math.sqrt(term1 + term2)


def alt_hyperbolicity_constants(system, lens, subspace, n_samples=400, seed=0,
                                operator=None):
    """Constants of the strip-energy framework on the given subspace.

    Finds the earliest grid time from which both inequalities hold: the
    strip energy dominates the cutoff-weighted mass (exact generalized
    eigenvalue), and the rate pairing is controlled by the strip energy plus
    the complementary cross pairing (sampled sphere).  Requires the strip
    energy to be positive semi-definite (the minimizer certificate); fails
    structurally otherwise.  Also reports the converse constant bounding
    the full-interval strip energy by the lens L2 norm.
    """
    f = lens.foliation
    basis = subspace.basis
    k = subspace.dim
    if k == 0:
        return HyperbolicityReport("alternative", ok=False,
                                   witness={"reason": "empty subspace"})
    if operator is None:
        operator = assemble_delta(system)
    WD = operator.weighted_matrix()
    grid = f.grid
    etaI_full = f.strip(f.t0, f.tmax)

    # minimizer certificate: full-interval strip energy PSD on the subspace
    E = np.diag(np.repeat(etaI_full, 1 + system.m))
    S_full = _restricted(0.5 * (E @ WD @ E + (E @ WD @ E).T), basis)
    ev = np.linalg.eigvalsh(S_full)
    if ev.size and ev[0] < -1e-8 * max(1.0, abs(ev[-1])):
        return HyperbolicityReport(
            "alternative", ok=False,
            witness={"min_strip_eigenvalue": float(ev[0]),
                     "reason": "strip energy not positive semi-definite; "
                               "configuration is not a certified minimizer"})

    def constants_at(t):
        etaI = f.strip(f.t0, t)
        E = np.diag(np.repeat(etaI, 1 + system.m))
        Q = E @ WD @ E
        Q = _restricted(0.5 * (Q + Q.T), basis)
        P = _restricted(metric_matrix(system, system.weights * etaI), basis)
        lam, _, null_ok = _gen_eig_min(Q, P)
        if lam <= 0 or not null_ok:
            return None
        C1 = 1.0 / math.sqrt(lam)
        # second inequality, sampled
        th = np.repeat(f.theta(t), 1 + system.m)
        one_minus = np.repeat(1.0 - etaI, 1 + system.m)
        eI = np.repeat(etaI, 1 + system.m)
        A_rate = basis.T @ (eI[:, None] * WD * th[None, :]) @ basis
        A_cross = basis.T @ (eI[:, None] * WD * one_minus[None, :]) @ basis
        rng = np.random.default_rng(seed)
        C2 = 0.0
        for _ in range(n_samples):
            c = rng.standard_normal(k)
            c /= np.linalg.norm(c)
            lhs = abs(float(c @ A_rate @ c))
            den = float(c @ Q @ c) + abs(float(c @ A_cross @ c))
            if den <= 1e-300:
                if lhs > 1e-14:
                    return None
                continue
            C2 = max(C2, lhs / den)
        return max(C1, C2)

    for i_bar, t_bar in enumerate(grid):
        if t_bar <= f.t0:
            continue
        Cs = []
        ok = True
        for t in grid[i_bar:]:
            c_t = constants_at(t)
            if c_t is None:
                ok = False
                break
            Cs.append(c_t)
        if ok and Cs:
            C = max(Cs)
            c = 2.0 * C
            span = f.tmax - float(t_bar)
            Gamma = (C ** 2 / c) * (math.exp(min(c * span, 1e6)) - 1.0) if c > 0 else math.inf
            if c * span >= 700:
                Gamma = math.inf
            CL = lagrangian_l2_constant(system, lens)
            rep = HyperbolicityReport(
                "alternative", ok=True, C=C, c=c, Gamma=Gamma,
                t_range=(float(t_bar), f.tmax), method="eigen+sampled",
                extra={"C_L": CL, "t_bar": float(t_bar)})
            # converse bound sample check
            rng = np.random.default_rng(seed + 1)
            slack = math.inf
            for _ in range(100):
                cvec = rng.standard_normal(k)
                v = Jet.from_flat(basis @ cvec, system.m)
                sn = strip_energy(system, lens, f.t0, f.tmax, v, v, operator)
                nI = math.sqrt(max(sn, 0.0))
                nl2 = l2_norm(system, v, system.weights * etaI_full)
                if nl2 > 0:
                    bound = CL * nl2
                    slack = min(slack, bound - nI)
            rep.extra["CL_bound_min_slack"] = slack
            rep.extra["CL_bound_holds"] = bool(slack >= -1e-10)
            return rep
    return HyperbolicityReport(
        "alternative", ok=False, t_range=(f.t0, f.tmax),
        witness={"reason": "no admissible starting grid time found"})


def check_differential_inequality(system, lens, subspace, report, h=None,
                                  n_samples=50, seed=0, operator=None):
    """Numerical check of the layer-energy growth inequality at grid points:
    the time derivative of the layer norm is at most C times the layer L2
    norm of the operator image plus c times the layer norm itself."""
    f = lens.foliation
    if operator is None:
        operator = assemble_delta(system, domain=f.domain)
    if h is None:
        h = 1e-4 * (f.tmax - f.t0)
    rng = np.random.default_rng(seed)
    C, c = report.C, report.c
    worst = -math.inf
    checked = 0
    for _ in range(n_samples):
        coeff = rng.standard_normal(subspace.dim)
        v = Jet.from_flat(subspace.basis @ coeff, system.m)
        dv = operator.apply(v)
        for t in f.grid[1:-1]:
            q = osi_inner(system, lens, t, v, v)
            if q <= 1e-8:
                continue
            nrm = math.sqrt(q)
            qp = osi_inner(system, lens, t + h, v, v)
            qm = osi_inner(system, lens, t - h, v, v)
            dnorm = (math.sqrt(max(qp, 0.0)) - math.sqrt(max(qm, 0.0))) / (2 * h)
            rhs = C * l2_norm(system, dv, system.weights * f.theta(t)) + c * nrm
            worst = max(worst, dnorm - rhs)
            checked += 1
    return {"max_violation": worst if checked else 0.0, "checked": checked,
            "passed": bool(worst <= 1e-6 if checked else True)}
