"""Bundled desk-scale configurations used by tests, docs, and the CLI."""

import numpy as np

from .foliation import Foliation, LensRegion, coordinate_time
from .kernels import IsotropicBumpKernel
from .system import DiscreteSystem


def pair1d():
    """Two unit-weight atoms at unit separation: disconnected, critical, s = 1."""
    kernel = IsotropicBumpKernel(R=1.0, m=1)
    return DiscreteSystem(points=[[0.0], [1.0]], weights=[1.0, 1.0],
                          kernel=kernel, s_param=1.0)


def chain1d(n=11, spacing=0.2, R=1.0):
    """Uniformly weighted chain; generally not critical (optimizer input)."""
    kernel = IsotropicBumpKernel(R=R, m=1)
    pts = (np.arange(n) * spacing)[:, None]
    return DiscreteSystem(points=pts, weights=np.ones(n), kernel=kernel, s_param=1.0)


def chain_critical(n=25, spacing=0.7, R=1.0):
    """Chain with interior-critical weights and the calibrated multiplier.

    The kernel matrix is positive definite at this spacing, the solved
    weights are strictly positive, and the one-point function vanishes on
    the support to machine precision.
    """
    kernel = IsotropicBumpKernel(R=R, m=1)
    pts = (np.arange(n) * spacing)[:, None]
    L = kernel.pair_blocks(pts).value
    w = np.linalg.solve(L, np.ones(n))
    w *= n / w.sum()
    s = float((L @ w).mean())
    return DiscreteSystem(points=pts, weights=w, kernel=kernel, s_param=s)


def scatter_disconnected(n=6, spacing=1.5, weights=None):
    """Atoms beyond kernel range of each other: every pair decouples."""
    kernel = IsotropicBumpKernel(R=1.0, m=1)
    pts = (np.arange(n) * spacing)[:, None]
    if weights is None:
        weights = np.ones(n)
    w = np.asarray(weights, dtype=float)
    s = float(np.mean(w))  # ell = w_i - s on the support; zero for uniform weights
    return DiscreteSystem(points=pts, weights=w, kernel=kernel, s_param=s)


def ring2d(n=24, radius=None, R=1.0):
    """Equally spaced atoms on a circle; critical in the scalar direction by symmetry."""
    if radius is None:
        # neighbor separation 0.7 by default
        radius = 0.35 / np.sin(np.pi / n)
    kernel = IsotropicBumpKernel(R=R, m=2)
    ang = 2 * np.pi * np.arange(n) / n
    pts = radius * np.column_stack([np.cos(ang), np.sin(ang)])
    L = kernel.pair_blocks(pts).value
    s = float(L.sum(axis=1).mean())
    return DiscreteSystem(points=pts, weights=np.ones(n), kernel=kernel, s_param=s)


def lens_for(system, t0, tmax, delta=0.45, steps=40, domain=None, axis=0):
    """Coordinate-time lens over [t0, tmax] with a uniform grid."""
    tau = coordinate_time(system, axis)
    grid = np.linspace(t0, tmax, steps + 1)
    fol = Foliation(tau, delta, grid, domain=domain)
    return LensRegion(fol)


def lens_aligned(system, t0, tmax, delta=0.45, step=0.7, domain=None, axis=0):
    """Lens whose grid steps match the atom columns (moderate constants)."""
    tau = coordinate_time(system, axis)
    nsteps = int(round((tmax - t0) / step))
    grid = t0 + step * np.arange(nsteps + 1)
    fol = Foliation(tau, delta, grid, domain=domain)
    return LensRegion(fol)


def aligned_exhaustion(system, spans, delta=0.45, step=0.7, jet_space=None, axis=0):
    """Exhaustion of nested column-aligned lenses over the given time spans."""
    from .globalsolve import Exhaustion
    lenses = [lens_aligned(system, t0, tmax, delta=delta, step=step, axis=axis)
              for (t0, tmax) in spans]
    return Exhaustion(system, lenses, jet_space=jet_space)


def greens_geometry(n=31, spacing=0.7, jet_space=None):
    """Chain plus exhaustion plus jet windows sized for the Green's-operator
    identities: inhomogeneities live >= 5 time units from every lens initial
    layer so the interaction tails decay below the working tolerances.

    Exhaustion lenses carry nested localization domains (lens layer span
    plus the kernel range); the final domain is the full support.
    """
    system = chain_critical(n=n, spacing=spacing)
    tau = system.points[:, 0]
    spans = [(8.4, 12.6), (5.6, 15.4), (2.8, 18.9)]
    halo = 1.0 + 0.45 + 1e-9    # kernel range plus layer width
    lenses = []
    for i, (t0, tmax) in enumerate(spans):
        if i == len(spans) - 1:
            dom = None
        else:
            dom = np.nonzero((tau > t0 - halo) & (tau < tmax + halo))[0]
        lenses.append(lens_aligned(system, t0, tmax, domain=dom))
    from .globalsolve import Exhaustion
    ex = Exhaustion(system, lenses, jet_space=jet_space)
    window = np.nonzero((tau >= 9.1 - 1e-9) & (tau <= 12.6 + 1e-9))[0]
    core = np.nonzero((tau >= 9.8 - 1e-9) & (tau <= 11.9 + 1e-9))[0]
    return {"system": system, "exhaustion": ex, "window": window, "core": core,
            "spans": spans}


PRESETS = {
    "pair1d": pair1d,
    "chain1d": chain1d,
    "chain-critical": chain_critical,
    "scatter-disconnected": scatter_disconnected,
    "ring2d": ring2d,
}


def get(name, **kwargs):
    if name not in PRESETS:
        raise KeyError(f"unknown preset {name!r}; available: {sorted(PRESETS)}")
    return PRESETS[name](**kwargs)
