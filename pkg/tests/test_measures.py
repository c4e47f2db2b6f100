import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sipp.errors import HorizonError
from sipp.measures import FULL, UNCHECKED, CountingMeasure, Horizon, MeasureBatch, count_in, integrate, scale, \
    simplify, sum_points_in_unit_ball

MU = CountingMeasure([0.5, 1.5], [2, 1])

locations = st.lists(st.floats(1e-3, 1e3), min_size=0, max_size=12, unique=True)


def measure(locs, mults=None):
    mults = [1 + (i % 3) for i in range(len(locs))] if mults is None else mults
    return CountingMeasure(np.array(locs, dtype=float), np.array(mults, dtype=np.int64))


def test_scale_examples():
    out = scale(CountingMeasure([3.0], [1]), 2)
    assert out.locations.tolist() == [6.0]
    assert len(scale(CountingMeasure.empty(), 5)) == 0
    out = scale(MU, 0.1)
    assert np.allclose(out.locations, [0.05, 0.15]) and out.multiplicities.tolist() == [2, 1]
    with pytest.raises(ValueError):
        MU.scale(0)


def test_scale_moves_horizon():
    mu = CountingMeasure([0.5], [1], Horizon(0.25, 1.0))
    assert mu.scale(2).horizon == Horizon(0.5, 2.0)


def test_count_in_examples():
    assert count_in(MU, 0, 1) == 2
    assert count_in(CountingMeasure.empty(), 0, 1) == 0
    assert count_in(MU, 0.5, 1.5) == 1
    assert count_in(MU, 1, 1) == 0


def test_count_in_outside_horizon():
    mu = CountingMeasure([0.5], [1], Horizon(0.25, 1.0))
    assert mu.count_in(0.25, 1.0) == 1
    with pytest.raises(HorizonError):
        mu.count_in(0.1, 1.0)
    # atoms outside the certified window are kept but cannot be queried
    outside = CountingMeasure([2.0, 0.5], [1, 1], Horizon(0.25, 1.0))
    assert outside.count_in(0.25, 1.0) == 1 and outside.total_mass == 2


def test_integrate_examples():
    mu = CountingMeasure([0.5, 0.9, 1.5], [2, 1, 1])
    assert integrate(mu, np.ones_like) == mu.total_mass == 4
    assert integrate(CountingMeasure.empty(), np.ones_like) == 0
    assert integrate(mu, lambda x: x * (x < 1)) == pytest.approx(1.9)


def test_sum_in_unit_ball_examples():
    assert sum_points_in_unit_ball(CountingMeasure([0.5, 0.9, 1.5], [2, 1, 1])) == pytest.approx(1.9)
    assert sum_points_in_unit_ball(CountingMeasure.empty()) == 0
    mu2 = CountingMeasure(np.array([[0.3, 0.0], [0.0, 0.4]]), [1, 2])
    assert np.allclose(sum_points_in_unit_ball(mu2), [0.3, 0.8])
    # strict ball: an atom at norm exactly 1 is left out
    assert sum_points_in_unit_ball(CountingMeasure([1.0, 0.25], [1, 1])) == 0.25
    with pytest.raises(HorizonError):
        CountingMeasure([0.5], [1], Horizon(0.1, 0.75)).sum_points_in_unit_ball()


def test_simplify_examples():
    out = simplify(CountingMeasure([0.7], [2]))
    assert out.locations.tolist() == [[2.0, 0.7]] and out.is_simple()
    assert len(simplify(CountingMeasure.empty())) == 0
    out = simplify(CountingMeasure([1.0, 2.0], [1, 3]))
    assert out.locations.tolist() == [[1.0, 1.0], [3.0, 2.0]]
    assert out.multiplicities.tolist() == [1, 1]


def test_construction_merges_and_drops():
    mu = CountingMeasure([0.5, 0.5, 0.7], [1, 2, 0])
    assert mu.locations.tolist() == [0.5] and mu.multiplicities.tolist() == [3]
    with pytest.raises(ValueError):
        CountingMeasure([0.0], [1])
    with pytest.raises(ValueError):
        CountingMeasure([0.5], [-1])


def test_direction_sets():
    mu = CountingMeasure(np.array([[0.5, 0.0], [0.0, 0.5], [0.3, 0.4]]), [1, 2, 3])
    assert mu.count_in(0, 1, directions=[[1, 0]]) == 1
    assert mu.count_in(0, 1, directions=[[0, 2]]) == 2
    assert mu.count_in(0, 1, directions=lambda u: u[:, 0] > 0) == 4
    with pytest.raises(ValueError):
        MU.count_in(0, 1, directions=[[1.0]])


def test_csv_roundtrip(tmp_path):
    mu = CountingMeasure(np.array([[0.1, 0.2], [0.3, -0.4]]), [1, 5])
    mu.to_csv(tmp_path / "m.csv")
    back = CountingMeasure.from_csv(tmp_path / "m.csv")
    assert np.array_equal(back.locations, mu.locations)
    assert np.array_equal(back.multiplicities, mu.multiplicities)


@given(locations, st.floats(0.01, 100), st.floats(0.01, 100))
def test_scale_composes(locs, s, t):
    mu = measure(locs)
    a, b = mu.scale(s).scale(t), mu.scale(s * t)
    assert np.array_equal(a.multiplicities, b.multiplicities)
    assert np.allclose(a.locations, b.locations, rtol=1e-12, atol=0)


@given(locations, st.floats(0.01, 100))
def test_change_of_variables(locs, t):
    mu = measure(locs)
    f = lambda x: np.exp(-x) * np.sin(x)
    assert integrate(mu.scale(t), f) == pytest.approx(integrate(mu, lambda x: f(t * x)), rel=1e-12, abs=1e-12)


@given(locations)
def test_simplify_is_simple(locs):
    out = measure(locs).simplify()
    assert out.is_simple() and len(out) == len(locs)


@given(locations, st.floats(1e-3, 1.0), st.floats(1.0, 10.0), st.floats(10.0, 1e3))
def test_count_additive(locs, a, b, c):
    mu = measure(locs)
    assert mu.count_in(a, b) + mu.count_in(b, c) == mu.count_in(a, c)


def test_batch_matches_single_measures():
    rng = np.random.default_rng(3)
    reps = 50
    rep_ids = rng.integers(0, reps, 400)
    loc = rng.uniform(0.01, 2.0, 400)
    mult = rng.integers(1, 4, 400)
    batch = MeasureBatch.from_rep_ids(reps, rep_ids, loc, mult)
    both = MeasureBatch.concat([batch, batch])
    assert len(both) == 2 * reps
    for r in range(reps):
        mu = batch[r]
        assert batch.count_in(0.5, 1.0)[r] == mu.count_in(0.5, 1.0)
        assert batch.sum_in_unit_ball()[r] == pytest.approx(mu.sum_points_in_unit_ball())
        assert batch.integrate(np.sqrt)[r] == pytest.approx(mu.integrate(np.sqrt))
        assert batch.any_multiple_in(0.5, 1.0)[r] == bool(np.any(mu.multiplicities[(mu.locations > 0.5)
                                                                                   & (mu.locations <= 1)] >= 2))
        assert both.sum_atoms()[reps + r] == pytest.approx(mu.integrate(lambda x: x))
    assert np.allclose(batch.scale(2).count_in(1, 2), batch.count_in(0.5, 1.0))


def test_batch_closed_ball_and_horizon():
    batch = MeasureBatch.from_rep_ids(2, np.array([0, 1]), np.array([1.0, 0.5]), np.array([1, 1]),
                                      Horizon(0.25, 1.0))
    assert batch.sum_in_unit_ball().tolist() == [0.0, 0.5]
    assert batch.sum_in_unit_ball(closed=True).tolist() == [1.0, 0.5]
    with pytest.raises(HorizonError):
        batch.count_in(0.1, 0.5)
    unchecked = MeasureBatch(batch.offsets, batch.locations, batch.multiplicities, UNCHECKED)
    assert unchecked.count_in(0.0, 5.0).tolist() == [1, 1]
    assert FULL.covers(0, 1e300)
