"""Assembly of jet bilinear forms from kernel derivative blocks.

Every bilinear expression in the theory expands, per point pair (x_i, x_j),
into the four second-derivative placements of the kernel:

    (1,1): both jets act at x_i        (1,2): row jet at x_i, column at x_j
    (2,1): row jet at x_j, column at x_i    (2,2): both jets act at x_j

with the convention that jets are never differentiated.  Each placement is
a (1+m) x (1+m) block [[L, g^T], [g, H]] in (scalar, vector) slots.  This
module accumulates weighted sums of such blocks into dense matrices on the
flat jet coordinates (point-major, scalar slot first).
"""

import numpy as np

from .errors import InputError

PLACEMENTS = ("11", "12", "21", "22")


def second_order_form(system, pair_weights, terms):
    """Dense matrix B with  u^T B v = sum_{i,j} W[i,j] * sum_t sign_t * D_t(u, v; i, j),

    where D_t is the second-derivative placement t of the kernel at the pair
    (x_i, x_j).  terms: iterable of (placement, sign).
    """
    n, m = system.n, system.m
    d = 1 + m
    blocks = system.blocks()
    W = np.asarray(pair_weights, dtype=float)
    if W.shape != (n, n):
        raise InputError(f"pair_weights must be ({n}, {n}), got {W.shape}")
    L, G1, G2 = blocks.value, blocks.grad1, blocks.grad2
    H11, H12, H22 = blocks.hess11, blocks.hess12, blocks.hess22
    B4 = np.zeros((n, d, n, d))
    idx = np.arange(n)
    for placement, sign in terms:
        c = float(sign)
        if placement == "11":
            # u at i, v at i: accumulate Sum_j W_ij K11(i,j) on the diagonal blocks
            B4[idx, 0, idx, 0] += c * (W * L).sum(1)
            gi = c * (W[:, :, None] * G1).sum(1)
            B4[idx, 0, idx, 1:] += gi
            B4[idx, 1:, idx, 0] += gi
            B4[idx, 1:, idx, 1:] += c * (W[:, :, None, None] * H11).sum(1)
        elif placement == "22":
            # u at j, v at j: accumulate Sum_i W_ij K22(i,j) on the diagonal blocks
            B4[idx, 0, idx, 0] += c * (W * L).sum(0)
            gj = c * (W[:, :, None] * G2).sum(0)
            B4[idx, 0, idx, 1:] += gj
            B4[idx, 1:, idx, 0] += gj
            B4[idx, 1:, idx, 1:] += c * (W[:, :, None, None] * H22).sum(0)
        elif placement == "12":
            # u at i, v at j: block [[L, g2^T], [g1, H12]] at (i, j)
            B4[:, 0, :, 0] += c * W * L
            B4[:, 0, :, 1:] += c * W[:, :, None] * G2
            B4[:, 1:, :, 0] += c * np.transpose(W[:, :, None] * G1, (0, 2, 1))
            B4[:, 1:, :, 1:] += c * np.transpose(W[:, :, None, None] * H12, (0, 2, 1, 3))
        elif placement == "21":
            # u at j, v at i: block [[L, g1^T], [g2, H12^T]] placed at (j, i)
            B4[:, 0, :, 0] += c * (W * L).T
            B4[:, 0, :, 1:] += c * np.transpose(W[:, :, None] * G1, (1, 0, 2))
            B4[:, 1:, :, 0] += c * np.transpose(W[:, :, None] * G2, (1, 2, 0))
            B4[:, 1:, :, 1:] += c * np.transpose(W[:, :, None, None] * H12, (1, 3, 0, 2))
        else:
            raise InputError(f"unknown placement {placement!r}")
    return B4.reshape(n * d, n * d)


def delta_matrix(system, domain=None):
    """Matrix of the linearized field operator on flat jet coordinates.

    Row block i holds the dual-jet components of (Delta v)(x_i); the y-sum
    ranges over `domain` (all atoms by default).  With the identity metric,
    dual coordinates coincide with jet coordinates.
    """
    n, m = system.n, system.m
    d = 1 + m
    W = np.tile(system.weights[None, :], (n, 1))
    if domain is not None:
        mask = np.zeros(n, dtype=bool)
        mask[np.asarray(domain, dtype=int)] = True
        W = W * mask[None, :]
    D = second_order_form(system, W, [("11", 1.0), ("12", 1.0)])
    sc = np.arange(n) * d
    D[sc, sc] -= system.s_param
    return D


def pointwise_pairing(system, u_flat, dual_flat):
    """Per-point dual pairing <u, q>(x_i) of a jet with a dual-jet field."""
    n, d = system.n, 1 + system.m
    return np.einsum("ik,ik->i", u_flat.reshape(n, d), dual_flat.reshape(n, d))


def delta2_density(system, v1, v2, domain=None):
    """Per-point values of the symmetric second-order density.

    At atom i this is half the y-sum over `domain` of the kernel paired with
    (v1, v2) through all four placements, minus half of b1(x_i) b2(x_i) times
    the multiplier parameter (partial jet derivatives never act on jets, so
    the parameter term is the plain product of the scalar components).
    """
    n, m = system.n, system.m
    blocks = system.blocks()
    w = system.weights.copy()
    if domain is not None:
        mask = np.zeros(n, dtype=bool)
        mask[np.asarray(domain, dtype=int)] = True
        w = w * mask
    a1, u1 = v1.scalars, v1.vectors
    a2, u2 = v2.scalars, v2.vectors
    L, G1, G2 = blocks.value, blocks.grad1, blocks.grad2
    H11, H12, H22 = blocks.hess11, blocks.hess12, blocks.hess22

    # placement (1,1): both jets at i
    t11 = (a1 * a2) * (L @ w) \
        + a1 * np.einsum("ijk,j,ik->i", G1, w, u2) \
        + a2 * np.einsum("ijk,j,ik->i", G1, w, u1) \
        + np.einsum("ik,ijkl,j,il->i", u1, H11, w, u2)
    # placement (1,2): v1 at i, v2 at j
    t12 = a1 * (L @ (w * a2)) \
        + a1 * np.einsum("ijk,j,jk->i", G2, w, u2) \
        + np.einsum("ik,ijk,j->i", u1, G1, w * a2) \
        + np.einsum("ik,ijkl,j,jl->i", u1, H12, w, u2)
    # placement (2,1): v1 at j, v2 at i -- equals (1,2) with arguments swapped
    t21 = a2 * (L @ (w * a1)) \
        + a2 * np.einsum("ijk,j,jk->i", G2, w, u1) \
        + np.einsum("ik,ijk,j->i", u2, G1, w * a1) \
        + np.einsum("ik,ijkl,j,jl->i", u2, H12, w, u1)
    # placement (2,2): both jets at j
    t22 = L @ (w * a1 * a2) \
        + np.einsum("ijk,j,jk->i", G2, w * a2, u1) \
        + np.einsum("ijk,j,jk->i", G2, w * a1, u2) \
        + np.einsum("jk,ijkl,j,jl->i", u1, H22, w, u2)

    return 0.5 * (t11 + t12 + t21 + t22) - 0.5 * system.s_param * a1 * a2
