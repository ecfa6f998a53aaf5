import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from measure_replicator import (
    AtomicMeasure,
    ValidationError,
    build_finite,
    build_grid,
    flat_distance,
    integrate,
    linear_combine,
    pushforward,
    restrict,
    total_mass,
)
from measure_replicator.measures import measure_from_csv, measure_from_json

from .conftest import transport_flat_norm


@pytest.fixture
def line3():
    return build_finite([[0.0], [1.0], [2.0]])


def test_total_mass(line3):
    assert total_mass(AtomicMeasure.zero(line3)) == 0
    two = build_finite([[0.0], [1.0]])
    assert total_mass(AtomicMeasure(two, [0.3, 0.7])) == pytest.approx(1.0, abs=1e-15)
    assert total_mass(AtomicMeasure(two, [1, -0.25])) == 0.75


def test_integrate(line3):
    mu = AtomicMeasure(line3, [0.2, 0.5, 0.1])
    assert integrate(mu, lambda p: 1.0) == pytest.approx(total_mass(mu))
    assert integrate(AtomicMeasure.dirac(line3, 2), lambda p: p[0] ** 2) == 4.0
    two = build_finite([[0.0], [1.0]])
    assert integrate(AtomicMeasure(two, [2, 3]), np.array([0.5, -1])) == -2.0
    with pytest.raises(ValidationError):
        integrate(mu, lambda p: float("nan"))


def test_restrict(line3):
    mu = AtomicMeasure(line3, [1, 2, 3])
    assert np.array_equal(restrict(mu, [0, 1, 2]).weights, mu.weights)
    assert np.array_equal(restrict(mu, []).weights, [0, 0, 0])
    assert np.array_equal(restrict(mu, [0, 2]).weights, [1, 0, 3])


def test_pushforward(line3):
    mu = AtomicMeasure(line3, [1, 2, -0.5])
    assert np.array_equal(pushforward(mu, [0, 1, 2], line3).weights, mu.weights)
    target = build_finite([["A"] and [0.0], [1.0]])
    out = pushforward(mu, {0: 0, 1: 1, 2: 0}, target)
    np.testing.assert_allclose(out.weights, [0.5, 2])
    one = build_finite([[0.0]])
    two = build_finite([[0.0], [1.0]])
    assert pushforward(AtomicMeasure(two, [0.3, 0.7]), [0, 0], one).weights[0] == pytest.approx(1.0)
    with pytest.raises(ValidationError):
        pushforward(mu, {0: 0, 1: 1}, target)


def test_linear_combine():
    s = build_finite([[0.0], [1.0]])
    mu, nu = AtomicMeasure(s, [1, 0]), AtomicMeasure(s, [0, 1])
    assert np.array_equal(linear_combine(1, mu, 0, nu).weights, mu.weights)
    assert np.array_equal(linear_combine(1, mu, -1, mu).weights, [0, 0])
    assert np.array_equal(linear_combine(2, mu, 3, nu).weights, [2, 3])


def test_flat_examples():
    s = build_finite([[0.0], [0.4], [5.0]])
    mu = AtomicMeasure(s, [0.3, 0.2, 0.5])
    assert flat_distance(mu, mu) == 0
    assert flat_distance(AtomicMeasure.dirac(s, 0), AtomicMeasure.dirac(s, 1)) == pytest.approx(0.4, abs=1e-12)
    assert flat_distance(AtomicMeasure.dirac(s, 0), AtomicMeasure.dirac(s, 2)) == pytest.approx(2.0, abs=1e-12)
    assert flat_distance(AtomicMeasure.dirac(s, 0), AtomicMeasure.zero(s)) == pytest.approx(1.0, abs=1e-12)


def test_flat_mismatched_spaces():
    a = build_finite([[0.0]])
    b = build_finite([[1.0]])
    with pytest.raises(ValidationError):
        flat_distance(AtomicMeasure.dirac(a, 0), AtomicMeasure.dirac(b, 0))


def test_immutability(line3):
    mu = AtomicMeasure(line3, [1, 2, 3])
    with pytest.raises(ValueError):
        mu.weights[0] = 9
    (mu * 2)
    assert mu.weights[0] == 1


def test_serialization_roundtrip(line3):
    mu = AtomicMeasure(line3, [1 / 3, math.pi, -1e-300])
    back = measure_from_json(mu.to_json(), line3)
    assert np.array_equal(back.weights, mu.weights)
    back = measure_from_csv(mu.to_csv(), line3)
    assert np.array_equal(back.weights, mu.weights)


weights = st.lists(st.floats(-3, 3, allow_nan=False), min_size=2, max_size=7)


@given(st.data())
def test_flat_matches_transport_oracle(data):
    n = data.draw(st.integers(2, 7))
    coords = data.draw(st.lists(st.floats(-3, 3), min_size=n, max_size=n, unique=True))
    w1 = np.array(data.draw(st.lists(st.floats(-2, 2), min_size=n, max_size=n)))
    w2 = np.array(data.draw(st.lists(st.floats(-2, 2), min_size=n, max_size=n)))
    s = build_finite(np.array(coords)[:, None])
    got = flat_distance(AtomicMeasure(s, w1), AtomicMeasure(s, w2))
    want = transport_flat_norm(w1 - w2, s.distance_matrix)
    assert got == pytest.approx(want, abs=1e-8)


@given(st.data())
def test_flat_metric_axioms(data):
    n = data.draw(st.integers(2, 6))
    s = build_grid([[0, 3]], n)
    draw = lambda: AtomicMeasure(s, data.draw(st.lists(st.floats(-2, 2), min_size=n, max_size=n)))
    a, b, c = draw(), draw(), draw()
    dab = flat_distance(a, b)
    assert dab >= 0
    assert dab == pytest.approx(flat_distance(b, a), abs=1e-9)
    assert dab <= flat_distance(a, c) + flat_distance(c, b) + 1e-9
    assert dab <= (a - b).total_variation + 1e-9


@given(st.data())
def test_pushforward_properties(data):
    n = data.draw(st.integers(1, 12))
    m = data.draw(st.integers(1, 5))
    src = build_grid([[0, 1]], n)
    tgt = build_grid([[0, 1]], m)
    phi = data.draw(st.lists(st.integers(0, m - 1), min_size=n, max_size=n))
    w1 = np.array(data.draw(st.lists(st.floats(-5, 5), min_size=n, max_size=n)))
    w2 = np.array(data.draw(st.lists(st.floats(-5, 5), min_size=n, max_size=n)))
    a, b = data.draw(st.floats(-2, 2)), data.draw(st.floats(-2, 2))
    mu, nu = AtomicMeasure(src, w1), AtomicMeasure(src, w2)
    pmu = pushforward(mu, phi, tgt)
    scale = max(1.0, np.abs(w1).sum())
    assert abs(total_mass(pmu) - total_mass(mu)) <= 1e-12 * scale
    lhs = pushforward(linear_combine(a, mu, b, nu), phi, tgt).weights
    rhs = a * pmu.weights + b * pushforward(nu, phi, tgt).weights
    np.testing.assert_allclose(lhs, rhs, atol=1e-12 * (1 + abs(a) + abs(b)) * 10 * scale)


@given(st.data())
def test_pushforward_weak_continuity(data):
    n = data.draw(st.integers(2, 6))
    src = build_grid([[0, 2]], n)
    tgt = build_grid([[0, 2]], 3)
    phi = data.draw(st.lists(st.integers(0, 2), min_size=n, max_size=n))
    w1 = np.array(data.draw(st.lists(st.floats(0, 2), min_size=n, max_size=n)))
    w2 = np.array(data.draw(st.lists(st.floats(0, 2), min_size=n, max_size=n)))
    Ds, Dt = src.distance_matrix, tgt.distance_matrix
    off = ~np.eye(n, dtype=bool)
    lip = np.max(Dt[np.ix_(phi, phi)][off] / Ds[off])
    L = max(1.0, lip)
    mu, nu = AtomicMeasure(src, w1), AtomicMeasure(src, w2)
    assert flat_distance(pushforward(mu, phi, tgt), pushforward(nu, phi, tgt)) <= L * flat_distance(mu, nu) + 1e-9
