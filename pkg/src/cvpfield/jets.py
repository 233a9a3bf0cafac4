"""Jets, jet subspaces, and the inner products used throughout.

A jet is a scalar field plus a vector field on the support points.  Flat
coordinate layout is point-major: [b_0, v_0 (m slots), b_1, v_1, ...].
Subspaces are explicit bases; equality and containment are always decided
at the projector level because bases are not unique.
"""

import json
import warnings

import numpy as np

from .errors import InputError, ValidationError


class Jet:
    """Scalar field plus vector field on the N support points."""

    def __init__(self, scalars, vectors):
        scalars = np.asarray(scalars, dtype=float)
        vectors = np.atleast_2d(np.asarray(vectors, dtype=float))
        if scalars.ndim != 1 or vectors.ndim != 2 or vectors.shape[0] != scalars.shape[0]:
            raise ValidationError(
                f"jet fields mismatch: scalars {scalars.shape}, vectors {vectors.shape}")
        if not (np.all(np.isfinite(scalars)) and np.all(np.isfinite(vectors))):
            raise ValidationError("jet entries must be finite")
        self.scalars = scalars
        self.vectors = vectors

    @property
    def n(self):
        return self.scalars.shape[0]

    @property
    def m(self):
        return self.vectors.shape[1]

    @classmethod
    def zero(cls, n, m):
        return cls(np.zeros(n), np.zeros((n, m)))

    @classmethod
    def from_flat(cls, flat, m):
        flat = np.asarray(flat, dtype=float)
        d = 1 + m
        if flat.size % d:
            raise InputError(f"flat length {flat.size} not divisible by 1+m = {d}")
        a = flat.reshape(-1, d)
        return cls(a[:, 0].copy(), a[:, 1:].copy())

    def flat(self):
        return np.hstack([self.scalars[:, None], self.vectors]).ravel()

    def __add__(self, other):
        return Jet(self.scalars + other.scalars, self.vectors + other.vectors)

    def __sub__(self, other):
        return Jet(self.scalars - other.scalars, self.vectors - other.vectors)

    def __mul__(self, c):
        return Jet(self.scalars * c, self.vectors * c)

    __rmul__ = __mul__

    def cutoff(self, field):
        """Pointwise multiplication by a scalar field (scales both components)."""
        field = np.asarray(field, dtype=float)
        return Jet(self.scalars * field, self.vectors * field[:, None])

    def support(self, tol=0.0):
        mag = np.abs(self.scalars) + np.abs(self.vectors).sum(axis=1)
        return np.nonzero(mag > tol)[0]


def flat_cutoff(field, m):
    """Expand a per-point field to the flat jet coordinate layout."""
    field = np.asarray(field, dtype=float)
    return np.repeat(field, 1 + m)


def pointwise_product(system, u, v, i):
    """Pointwise jet scalar product at atom i: scalars times scalars plus
    the metric pairing of the vector parts."""
    if not (0 <= i < system.n):
        raise InputError(f"point index {i} out of range [0, {system.n})")
    g = system.metric_at(i)
    return float(u.scalars[i] * v.scalars[i] + u.vectors[i] @ g @ v.vectors[i])


def l2_product(system, u, v, weight_field):
    """Weighted L2 product: sum of weight_field[i] times the pointwise product."""
    weight_field = np.asarray(weight_field, dtype=float)
    if weight_field.shape != (system.n,):
        raise InputError(f"weight_field must have shape ({system.n},)")
    if np.any(weight_field < 0):
        bad = int(np.argmin(weight_field))
        raise InputError(f"weight_field must be nonnegative; entry {bad} = {weight_field[bad]}")
    sc = weight_field * u.scalars * v.scalars
    if system.metric is None:
        vec = weight_field * np.einsum("ik,ik->i", u.vectors, v.vectors)
    else:
        vec = weight_field * np.einsum("ik,ikl,il->i", u.vectors, system.metric, v.vectors)
    return float(sc.sum() + vec.sum())


def l2_norm(system, u, weight_field):
    return float(np.sqrt(max(l2_product(system, u, u, weight_field), 0.0)))


def metric_matrix(system, weight_field):
    """Flat-coordinate Gram matrix of the weighted L2 product (block diagonal)."""
    weight_field = np.asarray(weight_field, dtype=float)
    n, m = system.n, system.m
    d = 1 + m
    M = np.zeros((n * d, n * d))
    for i in range(n):
        blk = np.eye(d)
        if system.metric is not None:
            blk[1:, 1:] = system.metric[i]
        M[i * d:(i + 1) * d, i * d:(i + 1) * d] = weight_field[i] * blk
    return M


class JetSubspace:
    """Explicit basis of jets, stored as flat-coordinate columns."""

    def __init__(self, basis, m, label="custom", check_rank=True):
        basis = np.asarray(basis, dtype=float)
        if basis.ndim != 2:
            raise ValidationError(f"basis must be a 2-d array, got shape {basis.shape}")
        self.basis = basis          # (jet_dim, k)
        self.m = int(m)
        self.label = label
        if check_rank and basis.shape[1] > 0:
            s = np.linalg.svd(basis, compute_uv=False)
            rank = int(np.sum(s > 1e-10 * s[0])) if s.size else 0
            if rank < basis.shape[1]:
                warnings.warn(
                    f"jet subspace '{label}': basis numerically rank deficient "
                    f"({rank} < {basis.shape[1]})", stacklevel=2)

    @classmethod
    def from_jets(cls, jets, label="custom"):
        jets = list(jets)
        if not jets:
            raise InputError("cannot infer dimensions from an empty jet list; use empty()")
        m = jets[0].m
        basis = np.column_stack([j.flat() for j in jets])
        return cls(basis, m, label)

    @classmethod
    def empty(cls, n, m, label="custom"):
        return cls(np.zeros((n * (1 + m), 0)), m, label, check_rank=False)

    @property
    def dim(self):
        return self.basis.shape[1]

    @property
    def jet_dim(self):
        return self.basis.shape[0]

    def jets(self):
        return [Jet.from_flat(self.basis[:, k], self.m) for k in range(self.dim)]

    def jet(self, k):
        return Jet.from_flat(self.basis[:, k], self.m)

    def contains_flat(self, flat, M=None, tol=1e-8):
        """Membership test in the weighted geometry (identity Gram by default)."""
        r = residual_to_span(self.basis, flat, M)
        scale = np.sqrt(float(flat @ (flat if M is None else M @ flat)))
        return r <= tol * max(scale, 1e-300)


def coordinate_jets(system, indices=None, components="all"):
    """Subspace spanned by coordinate jets at the given atoms.

    components: 'all', 'scalar', 'vector', or an iterable of slot indices
    (0 = scalar slot, 1..m = vector slots).
    """
    n, m = system.n, system.m
    d = 1 + m
    if indices is None:
        indices = range(n)
    if components == "all":
        comps = range(d)
    elif components == "scalar":
        comps = [0]
    elif components == "vector":
        comps = range(1, d)
    else:
        comps = list(components)
    cols = []
    for i in indices:
        if not (0 <= i < n):
            raise InputError(f"atom index {i} out of range [0, {n})")
        for c in comps:
            e = np.zeros(n * d)
            e[i * d + c] = 1.0
            cols.append(e)
    if not cols:
        return JetSubspace.empty(n, m, label="custom")
    return JetSubspace(np.column_stack(cols), m, label="custom", check_rank=False)


def _sqrt_metric(M):
    # M is block diagonal SPD/PSD; symmetric square root via eigh
    s, V = np.linalg.eigh(M)
    s = np.clip(s, 0.0, None)
    return (V * np.sqrt(s)) @ V.T


def orthonormalize_columns(B, M=None, tol=1e-10):
    """Orthonormal basis of span(B) w.r.t. x^T M y (Euclidean when M is None)."""
    if B.shape[1] == 0:
        return B.copy()
    if M is None:
        Q, s, Vt = np.linalg.svd(B, full_matrices=False)
        rank = int(np.sum(s > tol * s[0])) if s.size else 0
        return Q[:, :rank]
    R = _sqrt_metric(M)
    Q, s, Vt = np.linalg.svd(R @ B, full_matrices=False)
    rank = int(np.sum(s > tol * s[0])) if s.size else 0
    if rank == 0:
        return B[:, :0]
    # map back: columns C with R C = Q[:, :rank]; use least squares via pinv of R
    C = np.linalg.pinv(R) @ Q[:, :rank]
    # re-normalize in the M metric to clean up the pinv step
    G = C.T @ M @ C
    s2, V2 = np.linalg.eigh(G)
    keep = s2 > tol * max(s2.max(), 1e-300)
    return C @ (V2[:, keep] / np.sqrt(s2[keep]))


def residual_to_span(B, x, M=None):
    """Norm of the component of x orthogonal to span(B) in the M geometry."""
    if B.shape[1] == 0:
        return float(np.sqrt(x @ (x if M is None else M @ x)))
    Q = orthonormalize_columns(B, M)
    Mx = x if M is None else M @ x
    r = x - Q @ (Q.T @ Mx)
    return float(np.sqrt(max(r @ (r if M is None else M @ r), 0.0)))


def projector(subspace_or_basis, M=None):
    """Orthogonal projector onto the span (as a matrix acting on flat coords)."""
    B = subspace_or_basis.basis if isinstance(subspace_or_basis, JetSubspace) else subspace_or_basis
    Q = orthonormalize_columns(B, M)
    if Q.shape[1] == 0:
        return np.zeros((B.shape[0], B.shape[0]))
    return Q @ Q.T @ (np.eye(B.shape[0]) if M is None else M)


def subspace_algebra(op, inputs, m=None, inner=None, label="custom"):
    """Orthonormalize / complement / intersect / span-union on jet subspaces.

    inputs: a JetSubspace or a sequence of them ([part, ambient] for
    'complement', [a, b] for 'intersect' / 'span-union').  inner: optional
    flat Gram matrix of the inner product (see `metric_matrix`); Euclidean
    when omitted.  Intersection uses principal angles with threshold
    cos(theta) >= 1 - 1e-8.
    """
    if isinstance(inputs, JetSubspace):
        inputs = [inputs]
    inputs = list(inputs)
    m = inputs[0].m if m is None else m
    M = inner

    if op == "orthonormalize":
        (a,) = inputs
        return JetSubspace(orthonormalize_columns(a.basis, M), m, label, check_rank=False)

    if op == "complement":
        if len(inputs) == 1:
            part = inputs[0]
            amb = np.eye(part.jet_dim)
        else:
            part, ambient = inputs
            amb = orthonormalize_columns(ambient.basis, M)
        Qp = orthonormalize_columns(part.basis, M)
        if Qp.shape[1] == 0:
            comp = amb
        else:
            resid = amb - Qp @ (Qp.T @ (amb if M is None else M @ amb))
            comp = orthonormalize_columns(resid, M)
        return JetSubspace(comp, m, label, check_rank=False)

    if op == "intersect":
        a, b = inputs
        Qa = orthonormalize_columns(a.basis, M)
        Qb = orthonormalize_columns(b.basis, M)
        if Qa.shape[1] == 0 or Qb.shape[1] == 0:
            return JetSubspace(Qa[:, :0], m, label, check_rank=False)
        C = Qa.T @ (Qb if M is None else M @ Qb)
        U, s, Vt = np.linalg.svd(C)
        keep = s >= 1.0 - 1e-8
        return JetSubspace(orthonormalize_columns(Qa @ U[:, keep], M), m, label, check_rank=False)

    if op == "span-union":
        stacked = np.hstack([x.basis for x in inputs])
        return JetSubspace(orthonormalize_columns(stacked, M), m, label, check_rank=False)

    raise InputError(f"unknown subspace operation {op!r}")


def save_jet(jet, path):
    with open(path, "w", encoding="utf-8") as f:
        json.dump({"scalars": jet.scalars.tolist(), "vectors": jet.vectors.tolist()}, f)
        f.write("\n")


def load_jet(path):
    with open(path, "r", encoding="utf-8") as f:
        data = json.load(f)
    return Jet(data["scalars"], data["vectors"])
