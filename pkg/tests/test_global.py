import math

import numpy as np
import pytest

from cvpfield import presets
from cvpfield.errors import InputError
from cvpfield.foliation import Foliation, LensRegion, coordinate_time, future_partition
from cvpfield.globalsolve import (ConeAtlas, Exhaustion, check_exact_sequence,
                                  check_globally_hyperbolic, check_propagation,
                                  check_symplectic_identity, check_transitivity,
                                  determination_domain, future_cone, greens_operators,
                                  influence_domains, separated_future, solve_global_retarded)
from cvpfield.jets import Jet, coordinate_jets, metric_matrix
from cvpfield.linfield import assemble_delta


@pytest.fixture(scope="module")
def geo():
    g = presets.greens_geometry()
    g["M"] = metric_matrix(g["system"], g["system"].weights)
    return g


@pytest.fixture(scope="module")
def ops(geo):
    sys_ = geo["system"]
    cand = coordinate_jets(sys_, indices=geo["window"])
    return greens_operators(sys_, geo["exhaustion"], candidates=cand)


def _window_jet(geo, seed, scalars_only=False):
    sys_ = geo["system"]
    rng = np.random.default_rng(seed)
    w = Jet.zero(sys_.n, sys_.m)
    w.scalars[geo["window"]] = rng.standard_normal(len(geo["window"]))
    if not scalars_only:
        w.vectors[geo["window"], 0] = rng.standard_normal(len(geo["window"]))
    return w


def test_exhaustion_nesting_valid(geo):
    for rep in geo["exhaustion"].nesting_reports:
        assert rep["passed"], rep


def test_exhaustion_requires_final_cover(geo):
    sys_ = geo["system"]
    lens = presets.lens_aligned(sys_, 8.4, 12.6)
    lens.foliation.domain = lens.members  # restrict the domain artificially
    with pytest.raises(InputError):
        Exhaustion(sys_, [lens])


def test_global_zero_inhomogeneity(geo):
    sys_ = geo["system"]
    sol = solve_global_retarded(sys_, geo["exhaustion"], Jet.zero(sys_.n, sys_.m))
    assert np.all(sol.jet.flat() == 0.0)
    assert all(t == 0.0 for t in sol.trace)


def test_global_single_region_reduces_to_lens_solve(geo):
    sys_ = geo["system"]
    from cvpfield.cauchy import solve_weak_future
    lens = presets.lens_aligned(sys_, 2.8, 18.9)
    ex1 = Exhaustion(sys_, [lens])
    w = _window_jet(geo, 3)
    sol_g = solve_global_retarded(sys_, ex1, w)
    f = lens.foliation
    sol_l = solve_weak_future(sys_, lens, w).jet.cutoff(f.strip(f.t0, f.tmax))
    np.testing.assert_array_equal(sol_g.jet.flat(), sol_l.flat())


def test_global_trace_and_residual(geo):
    sys_ = geo["system"]
    w = _window_jet(geo, 4)
    vary0 = coordinate_jets(sys_, indices=geo["window"])
    sol = solve_global_retarded(sys_, geo["exhaustion"], w, vary0=vary0)
    assert len(sol.trace) == 2
    assert sol.trace[1] <= sol.trace[0]  # probe differences shrink
    assert sol.weak_residual <= 1e-8 * sol.info["scale"]


def test_greens_zero_maps_to_zero(geo, ops):
    # S(0) = 0 by linearity of every stage
    assert np.max(np.abs(ops.S_ret @ np.zeros(ops.candidates.dim))) == 0.0


def test_greens_reproduction(geo, ops):
    sys_, M = geo["system"], geo["M"]
    op = assemble_delta(sys_)
    from cvpfield.globalsolve import apply_green
    vary0 = coordinate_jets(sys_, indices=geo["core"])
    for k in range(0, vary0.dim, 3):
        u = vary0.basis[:, k]
        w = Jet.from_flat(op.matrix @ u, sys_.m)
        v_ret = apply_green(sys_, ops, w, "ret").flat()
        v_adv = apply_green(sys_, ops, w, "adv").flat()
        for v in (v_ret, v_adv):
            d = v - u
            assert math.sqrt(d @ M @ d) <= 1e-8 * max(1.0, math.sqrt(u @ M @ u))


def test_exact_sequence_clauses(geo, ops):
    sys_ = geo["system"]
    vary0 = coordinate_jets(sys_, indices=geo["core"])
    rep = check_exact_sequence(sys_, ops, vary0)
    assert rep["a_injective"]["passed"], rep["a_injective"]
    assert rep["b_G_Delta"]["passed"], rep["b_G_Delta"]
    assert rep["c_kernel_image"]["passed"], rep["c_kernel_image"]
    assert rep["d_Delta_G"]["passed"], rep["d_Delta_G"]
    assert rep["e_ker_image"]["passed"], rep["e_ker_image"]
    assert rep["f_surjective"]["passed"], rep["f_surjective"]
    # rank-nullity consistency: dual dim = kernel dim + image rank
    kd, id_ = rep["c_kernel_image"]["dims"]
    assert ops.Jstar0.shape[1] == kd + ops.J_lin_sc.shape[1]


def test_exact_sequence_vacuous_on_empty_dual(geo):
    sys_ = geo["system"]
    cand = coordinate_jets(sys_, indices=[])
    ops0 = greens_operators(sys_, geo["exhaustion"], candidates=cand)
    vary0 = coordinate_jets(sys_, indices=[])
    rep = check_exact_sequence(sys_, ops0, vary0)
    assert rep["vacuous"]


def test_g_pairing_antisymmetric(geo, ops):
    M = geo["M"]
    Jb = ops.candidates.basis @ ops.Jstar0
    worst = 0.0
    for a in range(0, Jb.shape[1], 2):
        for b in range(1, Jb.shape[1], 3):
            worst = max(worst, abs(float(Jb[:, a] @ M @ ops.G[:, b])
                                   + float(Jb[:, b] @ M @ ops.G[:, a])))
    assert worst <= 1e-8


def test_symplectic_identity_and_adjoint(geo, ops):
    sys_ = geo["system"]
    lens = presets.lens_aligned(sys_, 2.8, 18.9)
    rep = check_symplectic_identity(sys_, ops, 2, 7, lens)
    assert rep["hypotheses"]["passed"], rep["hypotheses"]
    assert rep["identity_passed"], rep
    assert rep["adjoint_passed"], rep
    # antisymmetry: swapped arguments give the negated values
    rep2 = check_symplectic_identity(sys_, ops, 7, 2, lens)
    assert rep2["sigma"] == pytest.approx(-rep["sigma"], rel=1e-9, abs=1e-12)


def test_symplectic_identity_same_argument(geo, ops):
    sys_ = geo["system"]
    lens = presets.lens_aligned(sys_, 2.8, 18.9)
    rep = check_symplectic_identity(sys_, ops, 3, 3, lens)
    assert rep["sigma"] == 0.0  # antisymmetry at evaluation level
    assert abs(rep["pairing"]) <= 1e-8


# ---- cones ----


@pytest.fixture(scope="module")
def atlas(geo):
    sys_ = geo["system"]
    pairs = []
    for (t0, tmax) in [(4.2, 9.8), (7.0, 12.6), (9.8, 15.4), (2.8, 16.8)]:
        L = presets.lens_aligned(sys_, t0, tmax)
        Lh = presets.lens_aligned(sys_, t0 - 1.4, tmax)
        pairs.append((L, Lh))
    # small level sets so several pairs participate at each level
    K_sets = [np.array([15]), np.array([14, 15, 16])]
    return ConeAtlas(sys_, pairs, K_sets, r_open=0.75)


def test_atlas_past_containment(atlas):
    for rep in atlas.reports:
        assert rep["passed"], rep


def test_empty_atlas_gives_full_cone(geo):
    sys_ = geo["system"]
    empty = ConeAtlas(sys_, [], [np.array([0])], r_open=0.75)
    cone = future_cone(sys_, empty, x=5)
    assert len(cone["J"]) == sys_.n


def test_point_in_own_cone(geo, atlas):
    sys_ = geo["system"]
    for x in (8, 15, 22):
        assert x in future_cone(sys_, atlas, x=x)["J"]


def test_cone_is_forward_interval(geo, atlas):
    sys_ = geo["system"]
    tau = sys_.points[:, 0]
    c = future_cone(sys_, atlas, x=15)["J"]
    # constrained by at least one pair: a forward-reaching interval around x
    assert tau[c].min() >= tau[15] - 1.4 - 1e-9
    assert len(c) < sys_.n


def test_cone_levels_increase(geo, atlas):
    sys_ = geo["system"]
    levels = future_cone(sys_, atlas, x=15)["J_levels"]
    assert set(levels[0].tolist()) <= set(levels[1].tolist())


def test_open_cone_inside_interior(geo, atlas):
    sys_ = geo["system"]
    from cvpfield.globalsolve import _interior
    c = future_cone(sys_, atlas, x=15)
    interior_J = _interior(sys_, c["J"], atlas.r_open)
    assert set(c["I"].tolist()) <= set(interior_J.tolist())


def test_transitivity_exhaustive(geo, atlas):
    rep = check_transitivity(geo["system"], atlas)
    assert rep["exhaustive"]
    assert rep["passed"], rep["violations"][:3]
    assert rep["increasing_chain"]


def test_separated_future(geo):
    sys_ = geo["system"]
    tau = sys_.points[:, 0]
    ex = geo["exhaustion"]
    K = np.array([4])  # tau = 2.8, early
    F = separated_future(sys_, [ex], K)
    assert np.all(tau[F] > tau[4])        # strictly later points only
    assert not set(F.tolist()) & set(K.tolist())  # disjoint from K
    # K = everything: nothing is separated
    F_all = separated_future(sys_, [ex], np.arange(sys_.n))
    assert F_all.size == 0


def test_propagation_zero_source(geo, atlas):
    sys_ = geo["system"]
    rep = check_propagation(sys_, geo["exhaustion"], atlas, Jet.zero(sys_.n, sys_.m))
    assert rep["passed"] and rep["zero_source"]


def test_propagation_bound(geo, atlas):
    sys_ = geo["system"]
    w = Jet.zero(sys_.n, sys_.m)
    w.scalars[15] = 1.0   # tau = 10.5
    sub = coordinate_jets(sys_, components="scalar")
    geo_ex = presets.aligned_exhaustion(sys_, geo["spans"], jet_space=sub)
    rep = check_propagation(sys_, geo_ex, atlas, w)
    assert rep["passed"], [r for r in rep["probes"] if not r["passed"]][:3]
    assert len(rep["probes"]) > 0


def test_influence_and_determination(geo, atlas):
    sys_ = geo["system"]
    infl = influence_domains(sys_, atlas, np.array([15]))
    assert 15 in infl
    D = determination_domain(sys_, atlas, np.arange(sys_.n))
    np.testing.assert_array_equal(D, np.arange(sys_.n))  # D(M) = M


def test_globally_hyperbolic_report(geo, atlas):
    sys_ = geo["system"]
    rep = check_globally_hyperbolic(sys_, atlas, [geo["exhaustion"]],
                                    K_samples=[np.array([15]), np.array([13, 14])])
    assert rep["v_compact_diamonds"]["passed"]
    assert rep["ii_causally_simple"]["passed"]
    assert rep["iii_inner_continuous"]["passed"], rep["iii_inner_continuous"]["violations"][:3]


def test_globally_hyperbolic_negative_control(geo):
    sys_ = geo["system"]
    # atlas with no lens covering the sampled set: compact hyperbolicity fails
    small = ConeAtlas(sys_, [(presets.lens_aligned(sys_, 4.2, 7.0),
                              presets.lens_aligned(sys_, 2.8, 7.0))],
                      [np.array([0])], r_open=0.75)
    rep = check_globally_hyperbolic(sys_, small, [geo["exhaustion"]],
                                    K_samples=[np.array([20])])
    assert not rep["i_compact_hyperbolic"]["passed"]
    assert rep["i_compact_hyperbolic"]["witnesses"]
