import numpy as np
import pytest

from cvpfield import presets
from cvpfield.jets import Jet, coordinate_jets, l2_norm
from cvpfield.linfield import assemble_delta
from cvpfield.optimizer import linearize_variation, minimize, project_simplex
from cvpfield.system import action, el_residuals


def test_project_simplex_basic():
    np.testing.assert_allclose(project_simplex(np.array([0.5, 0.5]), 1.0), [0.5, 0.5])
    np.testing.assert_allclose(project_simplex(np.array([2.0, 0.0]), 1.0), [1.0, 0.0])
    w = project_simplex(np.array([0.3, -5.0, 0.9]), 1.0)
    assert w.min() >= 0 and w.sum() == pytest.approx(1.0)


def test_project_simplex_is_projection():
    rng = np.random.default_rng(0)
    for _ in range(50):
        v = rng.standard_normal(6)
        p = project_simplex(v, 2.0)
        assert p.sum() == pytest.approx(2.0, rel=1e-12)
        assert np.all(p >= 0)
        # projection is idempotent
        np.testing.assert_allclose(project_simplex(p, 2.0), p, atol=1e-12)


def test_minimize_pair1d_fixed_point():
    sys_ = presets.pair1d()
    out, rep = minimize(sys_)
    assert rep["converged"]
    np.testing.assert_allclose(out.weights, [1.0, 1.0], atol=1e-10)
    assert out.s_param == pytest.approx(1.0)


def test_minimize_single_atom():
    from cvpfield.kernels import IsotropicBumpKernel
    from cvpfield.system import DiscreteSystem
    sys_ = DiscreteSystem([[0.0]], [2.5], IsotropicBumpKernel(R=1.0, m=1), s_param=1.0)
    out, rep = minimize(sys_)
    np.testing.assert_allclose(out.weights, [2.5])
    assert out.s_param == pytest.approx(2.5)  # w * L(x, x)


def test_minimize_chain1d_criticality():
    # the literal chain (11 atoms, spacing 0.2): boundary minimum, atoms drop
    sys_ = presets.chain1d()
    out, rep = minimize(sys_, tol=1e-12)
    assert rep["converged"]
    assert rep["total_volume"] == pytest.approx(sys_.total_volume, rel=1e-12)
    res = el_residuals(out, coordinate_jets(out, components="scalar"))
    scale = max(action(out), 1.0)
    assert res["max_ell_on_M"] <= 1e-6 * scale
    assert res["max_weak_residual"] <= 1e-6 * scale


def test_minimize_volume_and_monotonicity():
    sys_ = presets.chain1d(n=9, spacing=0.3)
    a0 = action(sys_)
    out, rep = minimize(sys_)
    assert rep["final_action"] <= a0 + 1e-12
    assert out.total_volume == pytest.approx(sys_.total_volume, rel=1e-12)


def test_minimize_positivity_certificate():
    # optimizer output is the certificate consumed by the energy machinery
    sys_ = presets.chain1d(n=15, spacing=0.3)
    out, rep = minimize(sys_, tol=1e-12)
    op = assemble_delta(out)
    B = op.symmetrized()
    eigs = np.linalg.eigvalsh(B)
    assert eigs[0] >= -1e-8
    rng = np.random.default_rng(1)
    for _ in range(100):
        v = Jet(rng.standard_normal(out.n), rng.standard_normal((out.n, out.m)))
        nrm = l2_norm(out, v, out.weights)
        assert op.bilinear(v, v) >= -1e-8 * nrm ** 2


def test_linearize_variation_shapes():
    sys_ = presets.chain_critical(n=5)
    z = linearize_variation(sys_, np.zeros(5), np.zeros((5, 1)))
    assert np.all(z.flat() == 0.0)
    pure = linearize_variation(sys_, np.ones(5), np.zeros((5, 1)))
    assert np.all(pure.scalars == 1.0) and np.all(pure.vectors == 0.0)
