import math

import numpy as np
import pytest

from cvpfield import presets
from cvpfield.foliation import future_partition
from cvpfield.jets import Jet, JetSubspace, coordinate_jets
from cvpfield.linfield import assemble_delta
from cvpfield.surfacelayer import (alt_hyperbolicity_constants, check_differential_inequality,
                                   check_energy_identity, check_energy_identity_alt,
                                   delta2_density, hyperbolicity_constant, i2, osi_inner,
                                   strip_energy, symplectic)


@pytest.fixture(scope="module")
def chain():
    sys_ = presets.chain_critical(n=25)
    lens = presets.lens_for(sys_, t0=3.0, tmax=13.0, delta=0.45, steps=50)
    return sys_, lens


def _rand_jet(sys_, seed):
    rng = np.random.default_rng(seed)
    return Jet(rng.standard_normal(sys_.n), rng.standard_normal((sys_.n, sys_.m)))


def test_i2_vanishes_when_eta_is_one(chain):
    sys_, lens = chain
    u, v = _rand_jet(sys_, 0), _rand_jet(sys_, 1)
    # last atom sits at tau = 16.8; at t >= 17.25 the cutoff is one everywhere
    late = presets.lens_for(sys_, t0=17.3, tmax=17.8, delta=0.45, steps=4)
    assert np.all(late.foliation.eta(17.5) == 1.0)
    assert i2(sys_, late, 17.5, u, v) == 0.0


def test_i2_pair1d_disconnected():
    sys_ = presets.pair1d()
    lens = presets.lens_for(sys_, t0=0.3, tmax=0.7, delta=0.2, steps=4)
    u, v = _rand_jet(sys_, 2), _rand_jet(sys_, 3)
    assert i2(sys_, lens, 0.5, u, v) == 0.0  # layer between the atoms, no cross kernel


def test_recombination_identity(chain):
    sys_, lens = chain
    rng = np.random.default_rng(4)
    for t in (5.0, 8.0, 11.3):
        u, v = _rand_jet(sys_, 5), _rand_jet(sys_, 6)
        lhs = i2(sys_, lens, t, u, v)
        rhs = osi_inner(sys_, lens, t, u, v) + symplectic(sys_, lens, t, u, v)
        scale = max(abs(lhs), abs(rhs), 1.0)
        assert abs(lhs - rhs) <= 1e-12 * scale


def test_symplectic_antisymmetry_exact(chain):
    sys_, lens = chain
    u = _rand_jet(sys_, 7)
    v = _rand_jet(sys_, 8)
    assert symplectic(sys_, lens, 8.0, u, u) == 0.0
    assert symplectic(sys_, lens, 8.0, u, v) == -symplectic(sys_, lens, 8.0, v, u)


def test_osi_inner_symmetry_exact(chain):
    sys_, lens = chain
    u, v = _rand_jet(sys_, 9), _rand_jet(sys_, 10)
    assert osi_inner(sys_, lens, 7.3, u, v) == osi_inner(sys_, lens, 7.3, v, u)
    # and the underlying form matrix is exactly symmetric
    from cvpfield.surfacelayer import INNER_TERMS, layer_form_matrix
    B = layer_form_matrix(sys_, lens, 7.3, INNER_TERMS)
    assert np.max(np.abs(B - B.T)) == 0.0


def test_half_sum_identity(chain):
    sys_, lens = chain
    u, v = _rand_jet(sys_, 11), _rand_jet(sys_, 12)
    t = 9.0
    lhs = 0.5 * (i2(sys_, lens, t, u, v) + i2(sys_, lens, t, v, u))
    rhs = osi_inner(sys_, lens, t, u, v)
    assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(rhs))


def test_orientation_flip_negates_inner(chain):
    sys_, lens = chain
    v = _rand_jet(sys_, 13)
    rev = lens.reverse()
    t = 8.0
    t_rev = lens.foliation.t0 + lens.foliation.tmax - t
    a = osi_inner(sys_, lens, t, v, v)
    b = osi_inner(sys_, rev, t_rev, v, v)
    assert a == pytest.approx(-b, rel=1e-12)


def test_delta2_density_trivials(chain):
    sys_, lens = chain
    z = Jet.zero(sys_.n, sys_.m)
    assert np.all(delta2_density(sys_, lens, z, z) == 0.0)
    v1, v2 = _rand_jet(sys_, 14), _rand_jet(sys_, 15)
    d12 = delta2_density(sys_, lens, v1, v2)
    d21 = delta2_density(sys_, lens, v2, v1)
    np.testing.assert_allclose(d12, d21, atol=1e-13 * max(1.0, np.max(np.abs(d12))))


def test_delta2_density_pair1d_frozen_value():
    # scalar jet (1, 1): at the first atom the only surviving term is the
    # self pair, (b+b)^2 L(x,x) = 4, halved to 2, minus s b^2 / 2 = 1/2
    sys_ = presets.pair1d()
    lens = presets.lens_for(sys_, t0=0.2, tmax=0.8, delta=0.2, steps=4)
    v = Jet(np.ones(2), np.zeros((2, 1)))
    assert delta2_density(sys_, lens, v, v, i=0) == pytest.approx(1.5, abs=1e-14)


def test_strip_energy_trivial_and_symmetric(chain):
    sys_, lens = chain
    f = lens.foliation
    u, v = _rand_jet(sys_, 16), _rand_jet(sys_, 17)
    assert strip_energy(sys_, lens, f.t0, f.t0, u, v) == 0.0
    a = strip_energy(sys_, lens, f.t0, 9.0, u, v)
    b = strip_energy(sys_, lens, f.t0, 9.0, v, u)
    assert abs(a - b) <= 1e-12 * max(1.0, abs(a))


def test_strip_energy_positive_on_certified_scalars(chain):
    sys_, lens = chain
    f = lens.foliation
    rng = np.random.default_rng(18)
    op = assemble_delta(sys_)
    for _ in range(20):
        v = Jet(rng.standard_normal(sys_.n), np.zeros((sys_.n, sys_.m)))
        q = strip_energy(sys_, lens, f.t0, 10.0, v, v, op)
        nrm2 = float(np.sum(sys_.weights * v.scalars ** 2))
        assert q >= -1e-8 * nrm2


def test_energy_identity_zero_jet(chain):
    sys_, lens = chain
    z = Jet.zero(sys_.n, sys_.m)
    rep = check_energy_identity(sys_, lens, z, t=8.0, h=1e-3)
    assert rep["lhs"] == 0.0 and rep["rhs"] == 0.0


def test_energy_identity_disconnected_pair():
    sys_ = presets.pair1d()
    lens = presets.lens_for(sys_, t0=0.3, tmax=0.7, delta=0.2, steps=4)
    v = _rand_jet(sys_, 19)
    rep = check_energy_identity(sys_, lens, v, t=0.5, h=1e-4)
    assert rep["lhs"] == 0.0 and rep["rhs"] == pytest.approx(0.0, abs=1e-13)


def test_energy_identity_first_framework(chain):
    sys_, lens = chain
    v = _rand_jet(sys_, 20)
    # t = 8.0 is an atom column; profile kinks sit at tau +- 0.45, far from t
    h = 1e-3 * (lens.foliation.tmax - lens.foliation.t0)
    rep = check_energy_identity(sys_, lens, v, t=8.0, h=h)
    assert rep["rel_error"] <= 1e-4
    assert abs(rep["order"] - 2.0) <= 0.2


def test_energy_identity_alt(chain):
    sys_, lens = chain
    v = _rand_jet(sys_, 21)
    h = 1e-4 * (lens.foliation.tmax - lens.foliation.t0)
    rep = check_energy_identity_alt(sys_, lens, v, t=8.0, h=h)
    assert rep["rel_error"] <= 1e-4
    assert abs(rep["order"] - 2.0) <= 0.2


def test_energy_identity_alt_at_t0(chain):
    sys_, lens = chain
    v = _rand_jet(sys_, 22)
    f = lens.foliation
    rep = check_energy_identity_alt(sys_, lens, v, t=f.t0 + 1e-3, h=5e-4)
    assert abs(rep["lhs"]) <= 2.0 and abs(rep["rhs"]) <= 2.0  # both near zero


def test_energy_identity_alt_time_reversed(chain):
    # the strip-energy identity does not distinguish a time direction
    sys_, lens = chain
    v = _rand_jet(sys_, 23)
    rev = lens.reverse()
    h = 1e-5 * (rev.foliation.tmax - rev.foliation.t0)
    rep = check_energy_identity_alt(sys_, rev, v, t=8.0, h=h)
    assert rep["rel_error"] <= 1e-4


def test_hyperbolicity_pair1d_fails():
    sys_ = presets.pair1d()
    # layer strictly between the atoms: energy vanishes identically
    lens = presets.lens_for(sys_, t0=0.3, tmax=0.7, delta=0.2, steps=4)
    rep = hyperbolicity_constant(sys_, lens, coordinate_jets(sys_), n_samples=20)
    assert not rep.ok and rep.witness
    # layer containing an atom: energy degenerate (zero form, positive mass)
    lens2 = presets.lens_for(sys_, t0=-0.15, tmax=0.15, delta=0.2, steps=4)
    rep2 = hyperbolicity_constant(sys_, lens2, coordinate_jets(sys_), n_samples=20)
    assert not rep2.ok and rep2.witness


def _decreasing_profiles(sys_, alphas):
    tau = sys_.points[:, 0]
    cols = []
    for a in alphas:
        prof = np.exp(-a * (tau - tau.mean()))
        j = Jet(prof, np.zeros((sys_.n, sys_.m)))
        cols.append(j.flat())
    return JetSubspace(np.column_stack(cols), sys_.m)


def test_hyperbolicity_decreasing_profile_finite(chain):
    sys_, _ = chain
    lens = presets.lens_aligned(sys_, t0=6.3, tmax=9.1, delta=0.45, step=0.7)
    sub = _decreasing_profiles(sys_, [0.8])
    rep = hyperbolicity_constant(sys_, lens, sub, n_samples=100)
    assert rep.ok
    assert np.isfinite(rep.C) and rep.C > 0
    assert rep.extra["lambda_full"] <= rep.extra["lambda_quadratic"] + 1e-12


def test_hyperbolicity_delta_sweep(chain):
    sys_, _ = chain
    sub = _decreasing_profiles(sys_, [0.8])
    Cs = {}
    for delta in (0.45, 0.9):
        lens = presets.lens_aligned(sys_, t0=6.3, tmax=9.1, delta=delta, step=0.7)
        rep = hyperbolicity_constant(sys_, lens, sub, n_samples=60)
        assert rep.ok
        Cs[delta] = rep.C
    assert Cs[0.45] != Cs[0.9]  # constant depends on the layer width; recorded


def test_differential_inequality(chain):
    sys_, _ = chain
    lens = presets.lens_aligned(sys_, t0=6.3, tmax=9.1, delta=0.45, step=0.7)
    sub = _decreasing_profiles(sys_, [0.8])
    rep = hyperbolicity_constant(sys_, lens, sub, n_samples=100)
    chk = check_differential_inequality(sys_, lens, sub, rep, n_samples=20)
    assert chk["passed"], chk


def test_alt_hyperbolicity_chain(chain):
    sys_, _ = chain
    lens = presets.lens_aligned(sys_, t0=4.9, tmax=11.9, delta=0.45, step=0.7)
    sub = coordinate_jets(sys_, components="scalar")
    rep = alt_hyperbolicity_constants(sys_, lens, sub, n_samples=100)
    assert rep.ok, rep.witness
    assert np.isfinite(rep.C)
    assert rep.extra["CL_bound_holds"]
    assert rep.c == pytest.approx(2 * rep.C)


def test_alt_hyperbolicity_empty_jet_is_vacuous(chain):
    sys_, _ = chain
    lens = presets.lens_aligned(sys_, t0=4.9, tmax=11.9, delta=0.45, step=0.7)
    sub = coordinate_jets(sys_, indices=[])
    rep = alt_hyperbolicity_constants(sys_, lens, sub)
    assert not rep.ok and rep.witness["reason"] == "empty subspace"
