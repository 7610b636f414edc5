import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as hs

from henon_thermo.errors import EscapeError, InvalidInputError, SingularMapError
from henon_thermo.henon_core import (MapParams, apply, fixed_saddles, inverse, jacobian,
                                     unstable_direction)

coords = hs.floats(-2.0, 2.0, allow_nan=False)
small_b = hs.floats(1e-8, 1e-2)
orient = hs.sampled_from(["preserving", "reversing"])


def test_params_derived_fields():
    p = MapParams(2.0, 1e-4, "preserving", 0.5, 22)
    assert p.xi == 20 and p.sigma1 == 1.5 and p.sigma2 == 4.5
    assert MapParams(epsilon=0.01).xi == 1000


@pytest.mark.parametrize("kw", [{"b": -1e-3}, {"a": 0.0}, {"epsilon": 0.6},
                                {"epsilon": 0.0}, {"orientation": "sideways"},
                                {"cap_n": 0}, {"a": float("nan")}])
def test_params_rejects_bad_values(kw):
    with pytest.raises(InvalidInputError):
        MapParams(**kw)


def test_params_round_trip_and_unknown_keys():
    p = MapParams(1.99, 1e-3, "reversing", 0.25, 30)
    assert MapParams.from_dict(p.to_dict()) == p
    with pytest.raises(InvalidInputError):
        MapParams.from_dict({"a": 2.0, "sigma1": 1.5})


def test_apply_examples():
    p0 = MapParams(2.0, 0.0)
    assert tuple(apply(p0, (0.0, 0.0))) == (1.0, 0.0)
    assert tuple(apply(p0, (0.5, 0.0))) == (0.5, 0.0)
    x, y = apply(MapParams(2.0, 0.01, "preserving"), (0.0, 1.0))
    assert x == pytest.approx(1.1, abs=1e-15) and y == 0.0


def test_inverse_example_and_singular_limit():
    x, y = inverse(MapParams(2.0, 0.01, "preserving"), (1.1, 0.0))
    assert x == pytest.approx(0.0, abs=1e-14) and y == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(SingularMapError):
        inverse(MapParams(2.0, 0.0), (0.1, 0.0))


@settings(max_examples=200, deadline=None)
@given(coords, coords, small_b, orient)
def test_round_trip(x, y, b, o):
    p = MapParams(2.0, b, o)
    for z, w in ((inverse(p, apply(p, (x, y))), (x, y)), (apply(p, inverse(p, (x, y))), (x, y))):
        scale = max(1.0, abs(w[0]), abs(w[1]))
        assert abs(z[0] - w[0]) <= 1e-10 * scale * max(1.0, 1e-4 / b)
        assert abs(z[1] - w[1]) <= 1e-10 * scale * max(1.0, 1e-4 / b)


@settings(max_examples=200, deadline=None)
@given(coords, coords, hs.floats(0.0, 1e-2), orient)
def test_determinant_is_constant(x, y, b, o):
    p = MapParams(2.0, b, o)
    expected = b if o == "preserving" else -b
    assert abs(np.linalg.det(jacobian(p, (x, y))) - expected) < 1e-12


def test_jacobian_degenerate_limit():
    J = jacobian(MapParams(2.0, 0.0), (0.3, 0.7))
    assert np.allclose(J, [[-1.2, 0.0], [0.0, 0.0]])
    assert np.linalg.matrix_rank(J) == 1


def test_jacobian_finite_difference():
    rng = np.random.default_rng(1)
    p = MapParams(1.9, 5e-3, "reversing")
    h = 1e-6
    for z in rng.uniform(-1.5, 1.5, (100, 2)):
        fd = np.empty((2, 2))
        for j in range(2):
            e = np.zeros(2)
            e[j] = h
            fd[:, j] = (np.array(apply(p, z + e)) - np.array(apply(p, z - e))) / (2 * h)
        assert np.linalg.norm(jacobian(p, z) - fd) < 1e-5


def test_fixed_saddles_one_dimensional_oracle():
    P, Q = fixed_saddles(MapParams(2.0, 0.0))
    # roots of 2x^2 + x - 1 = 0
    assert P.location.x == pytest.approx(0.5, abs=1e-15)
    assert Q.location.x == pytest.approx(-1.0, abs=1e-15)
    assert P.lambda_u == pytest.approx(-2.0, abs=1e-14)
    assert Q.lambda_u == pytest.approx(4.0, abs=1e-14)


@pytest.mark.parametrize("o", ["preserving", "reversing"])
def test_fixed_saddles_eigenpairs(o):
    p = MapParams(2.0, 1e-3, o)
    for S in fixed_saddles(p):
        assert np.allclose(apply(p, S.location), S.location, atol=1e-14)
        J = jacobian(p, S.location)
        for lam, v in zip(S.eigenvalues, S.eigenvectors):
            assert np.linalg.norm(J @ v - lam * v) < 1e-10


def test_fixed_saddles_continuous_in_a():
    p = MapParams(2.0, 1e-4)
    q = p.with_a(2.0 + 1e-6)
    for S, T in zip(fixed_saddles(p), fixed_saddles(q)):
        assert math.dist(S.location, T.location) < 1e-5


def test_unstable_direction_at_saddle():
    p = MapParams(2.0, 1e-4)
    P, _ = fixed_saddles(p)
    d = unstable_direction(p, P.location, n_back=5).direction
    assert abs(abs(float(d @ P.v_u)) - 1.0) < 1e-10


def test_unstable_direction_one_dimensional_limit():
    td = unstable_direction(MapParams(2.0, 0.0), (0.3, 0.0))
    assert np.allclose(td.direction, [1.0, 0.0])
    assert td.j_u == pytest.approx(1.2)


def _wu_point(p, n=12):
    # push a point near P along its unstable direction onto the attractor
    P, _ = fixed_saddles(p)
    z = np.array(P.location) + 1e-3 * P.v_u
    for _ in range(n):
        z = np.array(apply(p, z))
    return z


def test_unstable_direction_depth_convergence_and_equivariance():
    p = MapParams(2.0, 1e-4)
    z = _wu_point(p)
    d40 = unstable_direction(p, z, n_back=40).direction
    d50 = unstable_direction(p, z, n_back=50).direction
    assert math.asin(min(1.0, abs(d40[0] * d50[1] - d40[1] * d50[0]))) < 1e-6
    v = jacobian(p, z) @ d40
    w = unstable_direction(p, apply(p, z), n_back=40).direction
    cross = abs(v[0] * w[1] - v[1] * w[0]) / np.linalg.norm(v)
    assert math.asin(min(1.0, cross)) < 1e-6


def test_unstable_direction_escape():
    with pytest.raises(EscapeError):
        unstable_direction(MapParams(2.0, 1e-4), (1.9, 1.9))
