import math

import numpy as np
import pytest

from henon_thermo import inducing as ind
from henon_thermo.henon_core import MapParams, fixed_saddles
from henon_thermo.errors import DepthError


def test_region_shape(desk_geometry, desk_params):
    r = desk_geometry.region
    x0, y0, x1, y1 = r.bbox
    assert abs(x0 + 1) < 0.1 and abs(x1 - 1) < 0.1
    assert max(r.corner_gaps) < 1e-7
    # stable sides are nearly vertical
    assert r.left.slope_max() < desk_params.b ** 0.25
    assert r.right.slope_max() < desk_params.b ** 0.25


def test_alpha_identities_and_accumulation(desk_geometry):
    a = desk_geometry.alpha
    assert a.identity_error < 1e-10
    acc = a.accumulation()
    vals = [acc[n] for n in sorted(acc) if n <= a.n_res]
    assert all(u > v > 0 for u, v in zip(vals, vals[1:]))
    # geometric approach at the rate of the eigenvalue at Q
    ratios = [u / v for u, v in zip(vals[2:16], vals[3:17])]
    assert all(abs(r - 4.0) < 0.02 for r in ratios)


def test_theta_tower_indices_and_nesting(desk_geometry):
    th = desk_geometry.theta
    assert th.index(0) == 22 and th.index(1) == 42
    assert MapParams(epsilon=0.5, cap_n=10).xi * 1 + 10 == 30
    w = th.widths()
    assert all(u > v for u, v in zip(w, w[1:]))


def test_theta_tower_refuses_unresolved_depth(desk_geometry, desk_params):
    with pytest.raises(DepthError):
        ind.build_theta(desk_params, desk_geometry.alpha, K=3)


def test_recommend_pieces(desk_geometry):
    for n in (2, 3, 5, 8):
        rep = ind.recommend_check(desk_geometry, n)
        assert rep["c2b"] and rep["span_error"] < 1e-4


def test_partition_of_leaf(desk_geometry, desk_params):
    g = desk_geometry
    leaf = g.leaf.curve(n=20001)
    pieces = ind.partition_curve(desk_params, leaf, g.alpha, n_max=8)
    total = sum(p.curve.length for p in pieces)
    inner = g.leaf.length_between(g.t_alpha1_minus, g.t_alpha1_plus)
    assert total == pytest.approx(inner, rel=1e-6)
    assert sorted(p.n for p in pieces if p.side == "+") == list(range(2, 9))
    for side in ("-", "+"):
        xs = sorted((p.curve.x.min(), p.curve.x.max()) for p in pieces if p.side == side)
        for (a0, a1), (b0, b1) in zip(xs, xs[1:]):
            assert a1 <= b0 + 1e-12


def test_omega_sets_nested_and_nonempty(desk_geometry):
    om = ind.omega_sets(desk_geometry, n_max=20, n_samples=2 ** 17)
    assert om.nested()
    assert all(len(l) > 0 for l in om.levels)


def test_gap_images_fold(desk_geometry):
    om = ind.omega_sets(desk_geometry, n_max=8, n_samples=2 ** 17)
    wide = [(n, a, b) for n, a, b in om.gaps if n >= 1 and b - a > 1e-4][:6]
    assert wide
    for n, a, b in wide:
        assert ind.gap_fold_check(desk_geometry, n, a, b) > math.pi / 2


def test_branches_two_with_tau_two_and_disjoint(desk_system):
    S = desk_system
    assert sum(br.tau == 2 for br in S.branches) == 2
    assert S.counts()[1] == 0
    iv = sorted((br.s_lo, br.s_hi) for br in S.branches)
    assert all(u[1] <= v[0] for u, v in zip(iv, iv[1:]))
    assert all(br.s_lo < br.s_hi for br in S.branches)


def test_branches_are_first_returns(desk_geometry, desk_system):
    assert ind.first_return_check(desk_geometry, desk_system) == []


def test_census_growth_bound(desk_system, desk_params):
    c = ind.branch_census(desk_system)
    assert c["growth_rate"] <= desk_params.epsilon
    assert c["S"][1] == 0


def _stub(taus):
    brs = [ind.ReturnBranch(t, "inner", 0.0, 1.0, float(i), i + 0.5, (0.0, 0.0), 1.0,
                            1.0, 1.0, 0.0, "stub") for i, t in enumerate(taus)]
    return ind.InducedSystem(MapParams(), brs, (0.0, 10.0), 4, 4)


def test_census_on_hand_counted_stub():
    c = ind.branch_census(_stub([2, 3, 3]), n0=1)
    assert c["S"] == {1: 0, 2: 1, 3: 2, 4: 0}
    assert c["growth_rate"] == pytest.approx(math.log(2) / 3)


def test_hyperbolicity_envelope_and_distortion(desk_params, desk_system):
    rep = ind.hyperbolicity_audit(desk_params, desk_system)
    assert rep["envelope_pass"] and not rep["violations"]
    assert math.isfinite(rep["C_dist"]) and rep["distortion_stable"]


def test_saddle_expansion_inside_envelope(desk_params):
    # per-step expansion at the saddles sits inside [sigma1, sigma2]
    for S in fixed_saddles(desk_params):
        assert desk_params.sigma1 <= abs(S.lambda_u) <= desk_params.sigma2


def test_induced_system_round_trip(desk_system):
    d = desk_system.to_dict()
    back = ind.InducedSystem.from_dict(d)
    assert back.counts() == desk_system.counts()
    assert np.array_equal(back.lengths, desk_system.lengths)
    assert desk_system.counts_csv().splitlines()[:2] == ["n,S", "1,0"]


def test_induced_map_is_expanding(desk_system):
    im = ind.InducedMap(desk_system, tau_max=6)
    for i in im.index:
        s, F, logn, _ = im.tables[i]
        assert np.all(np.diff(F) > 0)
        assert np.all(logn > 0)
