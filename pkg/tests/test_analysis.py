import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as hs

from henon_thermo import analysis as an
from henon_thermo import shift_thermo as st
from henon_thermo.errors import DegenerateError, InvalidInputError
from henon_thermo.henon_core import MapParams
from henon_thermo.inducing import InducedMap

from test_shift_thermo import T_U, uniform_system

LOG2 = math.log(2.0)


@pytest.fixture(scope="module")
def induced_map(desk_system):
    return InducedMap(desk_system)


@pytest.fixture(scope="module")
def gibbs08(desk_system):
    return an.equilibrium_gibbs(desk_system, 0.8)[0]


@pytest.fixture(scope="module")
def orbit08(desk_system, gibbs08, induced_map):
    return an.sample_gibbs_orbit(desk_system, gibbs08, 2 ** 19, seed=0, induced_map=induced_map)


# slices and box counting ------------------------------------------------------

def test_slice_sample_sorts_and_validates():
    s = an.SliceSample([[0.5, 0.6], [0.0, 0.1]])
    assert np.all(np.diff(s.intervals[:, 0]) > 0) and s.span == pytest.approx(0.6)
    with pytest.raises(InvalidInputError):
        an.SliceSample([[0.2, 0.1]])
    with pytest.raises(DegenerateError):
        an.SliceSample(np.empty((0, 2)))


@settings(max_examples=60, deadline=None)
@given(hs.lists(hs.tuples(hs.floats(0, 10), hs.floats(0, 1)), min_size=1, max_size=30),
       hs.floats(0.01, 2.0))
def test_box_count_matches_brute_force(raw, delta):
    iv = an.SliceSample([[a, a + w] for a, w in raw]).intervals
    boxes = set()
    for a, b in iv:
        boxes.update(range(int(math.floor(a / delta)), int(math.floor(b / delta)) + 1))
    assert an.box_count(iv, delta) == len(boxes)


def test_box_dimension_interval():
    fit = an.box_dimension(an.SliceSample([[0.0, 1.0]]), np.geomspace(1e-1, 1e-4, 13))
    assert abs(fit.dimension - 1.0) < 0.02


@pytest.mark.parametrize("keep,ratio,expected", [
    ((0.0, 2.0 / 3.0), 1.0 / 3.0, math.log(2) / math.log(3)),
    ((0.0, 4.0 / 5.0), 1.0 / 5.0, math.log(2) / math.log(5)),
])
def test_box_dimension_cantor_oracles(keep, ratio, expected):
    iv = an.cantor_intervals(12, keep, ratio)
    scales = ratio ** np.arange(2, 10)
    fit = an.box_dimension(an.SliceSample(iv), scales)
    assert abs(fit.dimension - expected) < 0.02


def test_box_dimension_input_checks():
    s = an.SliceSample([[0.0, 1.0]], resolution=1e-3)
    with pytest.raises(InvalidInputError):
        an.box_dimension(s, np.geomspace(1e-1, 1e-2, 5))
    with pytest.raises(InvalidInputError):
        an.box_dimension(s, np.geomspace(1e-1, 1e-4, 5))


def test_dimension_fit_csv():
    fit = an.box_dimension(an.SliceSample([[0.0, 1.0]]), np.geomspace(1e-1, 1e-3, 5))
    lines = fit.to_csv().splitlines()
    assert lines[0] == "log_inv_delta,log_N" and len(lines) == 6


# E_k ladder ----------------------------------------------------------------------

@pytest.fixture(scope="module")
def ladder(desk_geometry):
    return an.ek_ladder(desk_geometry, k_max=12)


def test_ladder_nesting_and_counts(ladder):
    assert ladder.nested()
    counts = [len(l) for l in ladder.levels]
    assert counts == [1, 2, 2, 4, 6, 12, 22, 44, 86, 172, 342, 684, 1366]
    assert all(np.all(l[:, 1] > l[:, 0]) for l in ladder.levels)


def test_ladder_sandwich_and_constants(ladder):
    c = ladder.constants
    assert c["sandwich_holds"]
    assert max(c["variation_C_b"], c["variation_C_N"]) < 0.3
    eps = 0.5
    for k in range(4, 13):
        lengths = ladder.levels[k][:, 1] - ladder.levels[k][:, 0]
        assert np.all(lengths >= (2 + eps) ** -k / c["C_b"] * (1 - 1e-12))
        assert np.all(lengths <= (2 - eps) ** -k / c["C_N"] * (1 + 1e-12))


def test_ladder_removed_fraction_and_lower_bound(ladder):
    C = ladder.constants["C_removed"]
    assert all(f <= C * ladder.diam_theta0 + 1e-15 for f in ladder.removed_fraction)
    box = an.box_dimension(an.SliceSample(ladder.levels[-1]), np.geomspace(1e-1, 1e-3, 11))
    assert ladder.lower_bound <= box.dimension + 0.05
    assert ladder.rho == pytest.approx(1.5 * (1 - C * ladder.diam_theta0))


# Lyapunov exponents -------------------------------------------------------------------

def test_lyapunov_one_dimensional_oracle():
    est = an.lyapunov_u(MapParams(2.0, 0.0), (0.3, 0.0), 200000)
    assert abs(est.value - LOG2) < 0.01


def test_branch_lyapunov_bound(desk_system, desk_params):
    assert an.branch_lyapunov(desk_system).min() >= math.log(desk_params.sigma1) - 0.02


def test_orbit_lyapunov_matches_kac(desk_system, induced_map):
    g, _ = an.equilibrium_gibbs(desk_system, T_U)
    orb = an.sample_gibbs_orbit(desk_system, g, 2 ** 17, seed=4, induced_map=induced_map)
    kac = st.kac_lyapunov(desk_system, T_U)
    assert abs(orb.lyapunov().value - kac) < 0.05


# Gibbs orbits -----------------------------------------------------------------------

def test_sampler_mean_tau_and_frequencies(desk_system, gibbs08, induced_map):
    orb = an.sample_gibbs_orbit(desk_system, gibbs08, 10 ** 5, seed=1, induced_map=induced_map)
    assert abs(orb.taus.mean() - orb.mean_tau) < 0.02 * orb.mean_tau
    pos = {int(a): i for i, a in enumerate(orb.alphabet)}
    counts = np.bincount([pos[int(s)] for s in orb.symbols], minlength=len(orb.alphabet))
    n = counts.sum()
    band = 3 * np.sqrt(n * orb.weights * (1 - orb.weights))
    assert np.all(np.abs(counts - n * orb.weights) <= band + 1)


def test_sampler_stays_in_region(desk_geometry, orbit08):
    x0, y0, x1, y1 = desk_geometry.region.bbox
    P = orbit08.points
    assert P[:, 0].min() >= x0 - 1e-9 and P[:, 0].max() <= x1 + 1e-9
    assert P[:, 1].min() >= y0 - 1e-9 and P[:, 1].max() <= y1 + 1e-9


def test_sampler_is_seeded(desk_system, gibbs08, induced_map):
    a = an.sample_gibbs_orbit(desk_system, gibbs08, 5000, seed=7, induced_map=induced_map)
    b = an.sample_gibbs_orbit(desk_system, gibbs08, 5000, seed=7, induced_map=induced_map)
    c = an.sample_gibbs_orbit(desk_system, gibbs08, 5000, seed=8, induced_map=induced_map)
    assert np.array_equal(a.points, b.points) and np.array_equal(a.log_ju, b.log_ju)
    assert not np.array_equal(a.points, c.points)


# correlations and CLT ----------------------------------------------------------------

def test_acf_of_iid_noise_within_bands():
    v = np.random.default_rng(0).normal(size=200000)
    ac = an.autocorrelation(v, 30)
    assert abs(ac[0] - 1) < 1e-12
    assert np.all(np.abs(ac[1:]) < 3 / math.sqrt(v.size))


def test_acf_matches_direct_sum():
    v = np.random.default_rng(1).normal(size=500).cumsum()
    w = v - v.mean()
    direct = np.array([w[: w.size - k] @ w[k:] for k in range(6)]) / (w @ w)
    assert np.allclose(an.autocorrelation(v, 5), direct, atol=1e-12)


def test_acf_rejects_constant():
    with pytest.raises(DegenerateError):
        an.autocorrelation(np.ones(100), 3)


def test_x_correlations_decay(orbit08):
    rep = an.correlation_decay(an.observable_x(orbit08), range(1, 31), an.OBSERVABLES["x"])
    assert rep.rate < 1 and rep.r2 > 0.8
    assert rep.rate_ci[0] < rep.rate < rep.rate_ci[1]


def test_ci_narrows_with_orbit_length(desk_system, gibbs08, induced_map):
    widths = []
    for n in (2 ** 18, 2 ** 19):
        orb = an.sample_gibbs_orbit(desk_system, gibbs08, n, seed=0, induced_map=induced_map)
        rep = an.correlation_decay(an.observable_x(orb), range(1, 7))
        widths.append(math.log(rep.rate_ci[1] / rep.rate_ci[0]))
    assert 1.2 < widths[0] / widths[1] < 1.7


def test_fold_distance_observable(desk_geometry, orbit08):
    zx, zy = desk_geometry.leaf.xy(np.array([desk_geometry.t_zeta]))
    fd = an.observable_fold_distance(orbit08, (zx[0], zy[0]))
    assert np.all(fd >= 0)
    rep = an.correlation_decay(fd)
    assert rep.rate < 1


def test_clt_control():
    assert an.clt_control(seeds=100) >= 0.95


def test_clt_on_x_coordinate(orbit08):
    res = an.clt_test(an.observable_x(orbit08), 1024, 500)
    assert 0 <= res["p_value"] <= 1 and res["p_value"] > 0.01


def test_coboundary_variance_collapses(orbit08):
    cb = an.observable_coboundary(an.observable_x(orbit08))
    sig = [an.clt_test(cb, nb, 500)["sigma"] for nb in (16, 64, 256, 1024)]
    assert all(u > v for u, v in zip(sig, sig[1:]))
    assert sig[-1] < 0.2 * sig[0]


def test_clt_input_checks():
    with pytest.raises(InvalidInputError):
        an.clt_test(np.ones(100), 20, 10)


# dimension of measures ------------------------------------------------------------------

def test_dimension_of_uniform_measure():
    sys = st.SymbolSystem([LOG2, LOG2], [1, 1])
    g = st.gibbs_truncated(st.TruncatedShift.from_potential(st.SymbolPotential([0.0, 0.0], [1, 1])))
    d = an.dimension_of_measure(g, sys)
    assert d["entropy"] == pytest.approx(LOG2) and d["dimension"] == pytest.approx(1.0)


def test_dimension_at_root_and_maximality(desk_system):
    dims = {}
    for t in (0.3, 0.5, 0.9, T_U):
        g, _ = an.equilibrium_gibbs(desk_system, t)
        dims[t] = an.dimension_of_measure(g, desk_system)
    root = dims[T_U]
    assert abs(root["dimension"] - T_U) < 0.02
    assert abs(root["entropy"] - T_U * root["lambda_u"]) < 1e-3 * root["lambda_u"]
    for t in (0.3, 0.5, 0.9):
        assert dims[t]["dimension"] <= root["dimension"] + 0.02


def test_dimension_needs_positive_exponent():
    sys = st.SymbolSystem([0.0, 0.0], [1, 1])
    g = st.gibbs_truncated(st.TruncatedShift.from_potential(st.SymbolPotential([0.0, 0.0], [1, 1])))
    with pytest.raises(InvalidInputError):
        an.dimension_of_measure(g, sys)
