"""The linearized field operator as a dense matrix on jet coordinates."""

import numpy as np

from . import forms
from .errors import InputError, StructuralError
from .jets import Jet, metric_matrix

_POS_TOL = 1e-8


class LinearizedOperator:
    """Dense realization of the linearized field operator.

    `matrix` acts on flat jet coordinates and returns dual-jet components
    per point (with the identity metric these coincide with jet
    coordinates).  `domain` records the index set used for the y-sum.
    """

    def __init__(self, system, matrix, domain=None):
        self.system = system
        self.matrix = matrix
        self.domain = None if domain is None else np.asarray(domain, dtype=int)

    def apply_flat(self, flat):
        return self.matrix @ flat

    def apply(self, jet):
        """Image jet; dual components are mapped back through the pointwise metric."""
        out = self.matrix @ jet.flat()
        if self.system.metric is not None:
            n, m = self.system.n, self.system.m
            arr = out.reshape(n, 1 + m)
            arr[:, 1:] = np.linalg.solve(self.system.metric, arr[:, 1:][..., None])[..., 0]
            out = arr.ravel()
        return Jet.from_flat(out, self.system.m)

    def pairing(self, u, v):
        """Per-point pairings <u, Delta v>(x_i) as an (N,) array."""
        return forms.pointwise_pairing(self.system, u.flat(), self.matrix @ v.flat())

    def bilinear(self, u, v):
        """Integrated pairing over the support measure."""
        return float(self.system.weights @ self.pairing(u, v))

    def weighted_matrix(self):
        """Matrix of the integrated bilinear form (rows weighted by atom mass)."""
        w = np.repeat(self.system.weights, 1 + self.system.m)
        return w[:, None] * self.matrix

    def symmetrized(self):
        B = self.weighted_matrix()
        return 0.5 * (B + B.T)


def assemble_delta(system, domain=None):
    """Assemble the operator; `domain` restricts the y-sum to an index set."""
    return LinearizedOperator(system, forms.delta_matrix(system, domain), domain)


def check_positivity(system, operator, samples=100, seed=0, subspace=None):
    """Sampled and spectral positivity check of the integrated bilinear form.

    Draws unit jets (in the plain-measure L2 norm), reports the smallest
    sampled value of the form and the smallest eigenvalue of the symmetrized
    weighted matrix (restricted to `subspace` when given).  The positivity
    claim only applies to minimizing configurations; on non-critical input
    the check may legitimately fail and the report says so.
    """
    rng = np.random.default_rng(seed)
    nd = system.jet_dim
    B = operator.symmetrized()
    M = metric_matrix(system, system.weights)
    if subspace is not None:
        B = subspace.basis.T @ B @ subspace.basis
        M = subspace.basis.T @ M @ subspace.basis
        nd = subspace.dim
    worst = np.inf
    worst_vec = None
    for _ in range(samples):
        x = rng.standard_normal(nd)
        nrm = np.sqrt(x @ M @ x)
        if nrm <= 0:
            continue
        x /= nrm
        val = float(x @ B @ x)
        if val < worst:
            worst, worst_vec = val, x
    eigs = np.linalg.eigvalsh(B) if nd else np.array([0.0])
    from .system import ell_on_support
    crit = float(np.max(np.abs(ell_on_support(system)))) if system.n else 0.0
    report = {
        "sampled_min": worst if worst < np.inf else 0.0,
        "min_eigenvalue": float(eigs[0]),
        "passed": bool((worst >= -_POS_TOL or worst == np.inf) and eigs[0] >= -_POS_TOL),
        "max_ell_on_M": crit,
        "critical_input": crit <= 1e-8 * max(1.0, abs(system.s_param)),
    }
    if not report["critical_input"]:
        report["note"] = "input not critical; positive semi-definiteness is not expected"
    return report


def solve_scalar_component(system, v_vectors, reg=0.0):
    """Solve the scalar component equation for a given vector field.

    Builds A[i, j] = w_j L(x_i, x_j) and the right side r_i = sum_j w_j
    grad2 L(x_i, x_j) . v(x_j), verifies A is positive semi-definite, and
    solves (A + reg I) b = r (pseudo-inverse with relative truncation 1e-10
    when the regularized matrix is singular).  Returns (b, report).
    """
    v_vectors = np.asarray(v_vectors, dtype=float)
    if v_vectors.shape != (system.n, system.m):
        raise InputError(f"v_vectors must be ({system.n}, {system.m}), got {v_vectors.shape}")
    blocks = system.blocks()
    w = system.weights
    A = blocks.value * w[None, :]
    r = np.einsum("ijk,j,jk->i", blocks.grad2, w, v_vectors)
    Asym = 0.5 * (A * w[:, None] + (A * w[:, None]).T)  # symmetrize in the weighted geometry
    eigs = np.linalg.eigvalsh(Asym)
    if eigs[0] < -1e-10 * max(eigs[-1], 1.0):
        raise StructuralError(
            f"kernel matrix indefinite on this configuration (min weighted eigenvalue {eigs[0]:.3e}); "
            "the nonnegative-type assumption fails here")
    Areg = A + reg * np.eye(system.n)
    cond_ok = np.linalg.matrix_rank(Areg, tol=1e-10 * np.linalg.norm(Areg, 2)) == system.n
    if cond_ok:
        b = np.linalg.solve(Areg, r)
    else:
        b = np.linalg.pinv(Areg, rcond=1e-10) @ r
    resid = float(np.linalg.norm(Areg @ b - r))
    return b, {"residual": resid, "regularization": reg,
               "min_weighted_eigenvalue": float(eigs[0]), "solver": "direct" if cond_ok else "pinv"}
