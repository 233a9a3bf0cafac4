import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cvpfield.errors import InputError
from cvpfield.kernels import (AnisotropicBumpKernel, CustomKernel, IsotropicBumpKernel,
                              check_derivatives, make_kernel)


def test_value_at_coincidence():
    k = IsotropicBumpKernel(R=1.0, m=1)
    assert k.eval([0.3], [0.3]) == 1.0


def test_value_at_support_boundary():
    k = IsotropicBumpKernel(R=1.0, m=1)
    assert k.eval([0.0], [1.0]) == 0.0
    assert k.eval([0.0], [1.7]) == 0.0


def test_value_half_separation():
    # profile ((1 - r^2/R^2)_+)^4 at r = 0.5: (0.75)^4
    k = IsotropicBumpKernel(R=1.0, m=1)
    assert k.eval([0.0], [0.5]) == pytest.approx(0.31640625, abs=0)


def test_dimension_mismatch_rejected():
    k = IsotropicBumpKernel(R=1.0, m=2)
    with pytest.raises(InputError):
        k.eval([0.0], [0.0, 0.0])


def test_gradients_vanish_at_coincidence():
    for k in (IsotropicBumpKernel(R=1.3, m=3), AnisotropicBumpKernel(R=1.0, T=0.5, m=2)):
        d = k.derivatives(np.zeros(k.m), np.zeros(k.m))
        assert np.all(d["grad1"] == 0.0)
        assert np.all(d["grad2"] == 0.0)


def test_hessians_at_coincidence_1d():
    k = IsotropicBumpKernel(R=1.0, m=1)
    d = k.derivatives([0.4], [0.4])
    assert d["hess11"][0, 0] == pytest.approx(-8.0)
    assert d["hess12"][0, 0] == pytest.approx(8.0)
    assert d["hess22"][0, 0] == pytest.approx(-8.0)


def test_blocks_vanish_outside_support():
    k = AnisotropicBumpKernel(R=1.0, T=0.5, m=2)
    d = k.derivatives([0.0, 0.0], [0.6, 0.0])  # q = 0.36/0.25 > 1
    for name in ("grad1", "grad2", "hess11", "hess12", "hess22"):
        assert np.all(d[name] == 0.0)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-2, 2, allow_nan=False), min_size=2, max_size=2),
       st.lists(st.floats(-2, 2, allow_nan=False), min_size=2, max_size=2))
def test_symmetry_and_nonnegativity(xs, ys):
    k = AnisotropicBumpKernel(R=1.2, T=0.8, m=2)
    x, y = np.array(xs), np.array(ys)
    assert k.eval(x, y) == k.eval(y, x)  # bit-exact: function of the separation
    assert k.eval(x, y) >= 0.0


def test_translation_gradient_identity():
    # separation kernels: grad1 + grad2 = 0 to machine precision
    rng = np.random.default_rng(3)
    k = IsotropicBumpKernel(R=1.0, m=3)
    for _ in range(50):
        x, y = rng.uniform(-1, 1, 3), rng.uniform(-1, 1, 3)
        d = k.derivatives(x, y)
        np.testing.assert_allclose(d["grad1"] + d["grad2"], 0.0, atol=1e-15)


def test_grad1_equals_grad2_swapped():
    rng = np.random.default_rng(4)
    k = IsotropicBumpKernel(R=0.9, m=2)
    for _ in range(20):
        x, y = rng.uniform(-1, 1, 2), rng.uniform(-1, 1, 2)
        dxy = k.derivatives(x, y)
        dyx = k.derivatives(y, x)
        np.testing.assert_allclose(dxy["grad1"], dyx["grad2"], atol=1e-15)
        np.testing.assert_allclose(dxy["hess12"], dyx["hess12"].T, atol=1e-15)


def test_check_derivatives_builtins_pass():
    rng = np.random.default_rng(0)
    for k in (IsotropicBumpKernel(R=1.0, m=2), AnisotropicBumpKernel(R=1.0, T=0.6, m=2)):
        samples = [(rng.uniform(-1, 1, 2), rng.uniform(-1, 1, 2)) for _ in range(100)]
        report = check_derivatives(k, samples)
        assert report["passed"], report


def test_check_derivatives_at_coincidence():
    k = IsotropicBumpKernel(R=1.0, m=1)
    g1, _ = __import__("cvpfield.kernels", fromlist=["fd_gradients"]).fd_gradients(
        k, np.array([0.2]), np.array([0.2]), 1e-5)
    d = k.derivatives([0.2], [0.2])
    assert np.allclose(g1, 0.0) and np.all(d["grad1"] == 0.0)


def test_check_derivatives_flags_wrong_gradient():
    base = IsotropicBumpKernel(R=1.0, m=1)

    def bad_derivs(x, y):
        d = base.derivatives(x, y)
        d["grad1"] = d["grad1"] + 0.5  # deliberately wrong
        return d

    k = CustomKernel(m=1, value=base.eval, derivatives=bad_derivs)
    report = check_derivatives(k, [(np.array([0.0]), np.array([0.3]))])
    assert not report["passed"]
    assert report["worst"]["block"] == "grad1"
    assert report["max_rel_error"] > 0.1


def test_pair_blocks_match_pointwise():
    k = AnisotropicBumpKernel(R=1.1, T=0.7, m=2)
    rng = np.random.default_rng(7)
    pts = rng.uniform(-1, 1, (5, 2))
    blocks = k.pair_blocks(pts)
    for i in range(5):
        for j in range(5):
            # vectorized and pointwise paths may differ in the last bits only
            assert blocks.value[i, j] == pytest.approx(k.eval(pts[i], pts[j]), rel=1e-14, abs=1e-15)
            d = k.derivatives(pts[i], pts[j])
            np.testing.assert_allclose(blocks.grad1[i, j], d["grad1"], rtol=1e-13, atol=1e-15)
            np.testing.assert_allclose(blocks.hess12[i, j], d["hess12"], rtol=1e-13, atol=1e-15)


def test_make_kernel_roundtrip():
    k = AnisotropicBumpKernel(R=1.5, T=0.5, m=3)
    k2 = make_kernel(k.spec())
    assert k2.spec() == k.spec()
    with pytest.raises(InputError):
        make_kernel({"kind": "nope"})
