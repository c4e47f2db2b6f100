import json
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sipp import models as M
from sipp.errors import BudgetError, ConfigError, DomainError, RangeError
from sipp.numtheory import nth_prime

BUILTINS = [M.primes_geometric, M.primes_bernoulli, M.primes_poisson, M.records, M.logk_geometric,
            M.theorem_ex, M.sqrt_ratio]


def test_marginal_examples():
    g = M.primes_geometric(10).marginals(3)  # p_3 = 5
    assert (g.q0, g.q1, g.mean) == pytest.approx((4 / 5, 4 / 25, 1 / 4), rel=1e-15)
    b = M.primes_bernoulli(10).marginals(1)  # p_1 = 2
    assert (b.q0, b.q1, b.mean) == pytest.approx((2 / 3, 1 / 3, 1 / 3), rel=1e-15)
    t = M.theorem_ex(100).marginals(10)
    assert (t.q0, t.q1) == pytest.approx((9 / 10, 9 / 100), rel=1e-14)
    # no positive predecessor: X_1 = 0 surely
    assert M.theorem_ex(100).marginals(1).q0 == 1.0
    r = M.records(10).marginals(1)
    assert (r.q0, r.q1) == (0.0, 1.0)


@pytest.mark.parametrize("factory", BUILTINS)
def test_marginal_invariants(factory):
    model = factory(100)
    ks = np.arange(model.sequence.k0, 100_001)
    q0, q1, mean = model.law.marginal_arrays(ks, model.sequence)
    assert np.all(q0 + q1 <= 1 + 1e-15)
    if model.law.sampled_as == "geometric":
        ok = q0 > 0
        assert np.allclose(q1[ok], q0[ok] * (1 - q0[ok]), rtol=1e-12)
        assert np.allclose(mean[ok], (1 - q0[ok]) / q0[ok], rtol=1e-12)


def test_window_indices():
    seq = M.SequenceSpec("linear-k")
    assert seq.window_indices(4, 0.5, 1.0).tolist() == [3, 4]
    assert seq.window_indices(4, 0.0, 1.0).tolist() == [1, 2, 3, 4]
    assert M.SequenceSpec("log-k").window_indices(10, 0.0, 1.0)[0] == 2
    primes = M.SequenceSpec("primes-log").window_indices(25, 0.5, 1.0)
    assert primes[0] == 5 and primes[-1] == 25  # primes 11 .. 97
    custom = M.SequenceSpec("custom", (1.0, 2.0, 3.0))
    assert custom.window_indices(2, 0.6, 1.4).tolist() == [2]
    # the last listed value cannot certify that nothing follows it
    with pytest.raises(RangeError):
        custom.window_indices(2, 0.6, 1.5)
    with pytest.raises(ConfigError):
        M.SequenceSpec("custom", (2.0, 1.0))


def test_sqrt_ratio_sequence():
    seq = M.SequenceSpec("sqrt-ratio")
    K = 10_000
    ks = np.arange(1, K + 1)
    z = np.asarray(seq.z(ks), dtype=float)
    assert np.all(z >= ks)
    assert seq.z([2])[0] == pytest.approx(math.sqrt(2) / (math.sqrt(2) - 1))
    k2 = ks[1:]
    ratio = np.asarray(seq.z_prev(k2) / seq.z(k2), dtype=float)
    q0, q1, _ = M.sqrt_ratio(10).law.marginal_arrays(k2, seq)
    lhs = np.sum(1 - q0 - q1)
    assert lhs == pytest.approx(np.sum((1 - ratio) ** 2), rel=1e-10)
    # each term is exactly 1/k, so the bound holds with equality up to rounding
    harmonic = np.sum(1.0 / k2)
    assert lhs >= harmonic * (1 - 1e-12)
    assert np.allclose((1 - ratio) ** 2, 1.0 / k2, rtol=1e-9)


def test_sample_nu_n_support_and_empty(rng):
    model = M.theorem_ex(4)
    batch = model.sampler(0.0, 1.0).sample_batch(2000, rng)
    assert set(np.unique(batch.locations)) <= {0.25, 0.5, 0.75, 1.0}
    assert 0.25 not in set(batch.locations)  # X_1 = 0 surely
    empty = M.records(10).sample_nu_n((0.11, 0.19), rng)
    assert len(empty) == 0 and empty.horizon.lo == 0.11
    with pytest.raises(ValueError):
        model.sample_nu_n((0.0, 1.0), rng)


def test_sample_nu_n_mean_count(rng):
    model = M.primes_geometric(10_000)
    smp = model.sampler(0.5, 1.0)
    counts = smp.sample_batch(100_000, rng).count_in(0.5, 1.0)
    se = counts.std(ddof=1) / math.sqrt(counts.size)
    assert abs(counts.mean() - smp.expected_count()) < 3 * se


def test_weighted_sum_examples(rng):
    zero = M.PointProcessModel(M.SequenceSpec("linear-k"), M.MultiplicityLaw("bernoulli", "zero"), 50)
    assert zero.weighted_sum_sample(rng) == 0.0
    assert M.records(1).weighted_sum_sample(rng) == 1.0
    model = M.primes_geometric(1000)
    w = model.weighted_sums(100_000, rng)
    ks = np.arange(1, 1001)
    primes = np.array([nth_prime(int(k)) for k in ks], dtype=float)
    exact = float(np.sum(np.log(primes) / (primes - 1)) / math.log(primes[-1]))
    assert model.expected_weighted_sum() == pytest.approx(exact, rel=1e-12)
    assert abs(w.mean() - exact) < 3 * w.std(ddof=1) / math.sqrt(w.size)


@pytest.mark.parametrize("factory,k", [(M.primes_geometric, 2), (M.primes_bernoulli, 1), (M.primes_poisson, 3),
                                       (M.records, 5), (M.logk_geometric, 3)])
def test_zero_frequency(factory, k, rng):
    model = factory(20)
    seq = model.sequence
    loc = float(seq.z([k])[0] / seq.z([20])[0])
    reps = 100_000
    batch = model.sampler(0.0, 1.0).sample_batch(reps, rng)
    present = np.zeros(reps, dtype=bool)
    present[batch.rep_ids[batch.locations == loc]] = True
    q0 = model.marginals(k).q0
    se = math.sqrt(q0 * (1 - q0) / reps)
    assert abs((~present).mean() - q0) < 4 * se


def test_geometric_multiplicity_law(rng):
    # k = 1 in primes-geometric: P(X = m) = (1/2)^m (1/2)
    model = M.primes_geometric(5)
    batch = model.sampler(0.0, 1.0).sample_batch(200_000, rng)
    loc = float(model.sequence.z([1])[0] / model.sequence.z([5])[0])
    mult = batch.multiplicities[batch.locations == loc]
    for m in (1, 2, 3, 4):
        p = 0.5 ** m * 0.5
        freq = np.sum(mult == m) / 200_000
        assert abs(freq - p) < 4 * math.sqrt(p * (1 - p) / 200_000)


def test_poisson_multiplicity_law(rng):
    model = M.primes_poisson(5)
    batch = model.sampler(0.0, 1.0).sample_batch(200_000, rng)
    loc = float(model.sequence.z([1])[0] / model.sequence.z([5])[0])
    mult = batch.multiplicities[batch.locations == loc]
    for m in (1, 2, 3):
        p = math.exp(-0.5) * 0.5 ** m / math.factorial(m)
        freq = np.sum(mult == m) / 200_000
        assert abs(freq - p) < 4 * math.sqrt(p * (1 - p) / 200_000)


def test_coupled_columns_have_model_laws(rng):
    models = [M.records(50), M.records(500), M.records(50)]
    W = M.coupled_weighted_sums(models, 100_000, rng)
    assert W.shape == (100_000, 3)
    assert np.array_equal(W[:, 0], W[:, 2])
    for j, model in enumerate(models):
        se = W[:, j].std(ddof=1) / math.sqrt(W.shape[0])
        assert abs(W[:, j].mean() - model.expected_weighted_sum()) < 4 * se
    # records sums are integers over n
    assert np.allclose(W[:, 0] * 50, np.round(W[:, 0] * 50))


def test_records_pmf_examples():
    assert M.records_exact_pmf(1) == {1: 1}
    assert M.records_exact_pmf(2) == {1: Fraction(1, 2), 3: Fraction(1, 2)}
    assert M.records_exact_pmf(3) == {1: Fraction(1, 3), 3: Fraction(1, 3), 4: Fraction(1, 6), 6: Fraction(1, 6)}
    assert M.records_permutation_pmf(1) == {1: 1}


@pytest.mark.parametrize("n", range(1, 9))
def test_records_pmf_matches_permutations(n):
    assert M.total_variation(M.records_exact_pmf(n), M.records_permutation_pmf(n)) == 0


def test_records_pmf_long_double_and_budget():
    pmf = M.records_exact_pmf(40)
    assert float(sum(pmf.values())) == pytest.approx(1.0, abs=1e-15)
    mean = sum(s * float(w) for s, w in pmf.items())
    assert mean == pytest.approx(40.0, rel=1e-13)  # sum k * (1/k)
    exact21 = M.records_exact_pmf(20)
    assert all(isinstance(v, Fraction) for v in exact21.values())
    with pytest.raises(BudgetError):
        M.records_exact_pmf(65)
    with pytest.raises(BudgetError):
        M.records_permutation_pmf(9)


def test_smooth_reciprocal_examples():
    assert M.smooth_reciprocal_pmf(1, 1) == Fraction(1, 2)
    assert M.smooth_reciprocal_pmf(2, 6) == Fraction(1, 18)
    assert M.smooth_reciprocal_pmf(2, 1) == Fraction(1, 3)
    assert M.smooth_normaliser(2) == 3
    with pytest.raises(DomainError):
        M.smooth_reciprocal_pmf(2, 10)
    with pytest.raises(BudgetError):
        M.smooth_reciprocal_pmf(5, 1)


@given(st.integers(1, 4), st.lists(st.integers(0, 6), min_size=4, max_size=4))
def test_smooth_pmf_is_reciprocal_law(n, exps):
    m = math.prod(p ** e for p, e in zip((2, 3, 5, 7)[:n], exps))
    assert M.smooth_reciprocal_pmf(n, m) == Fraction(1, m) / M.smooth_normaliser(n)


def test_model_config(tmp_path):
    cfg = {"sequence": {"kind": "primes-log"}, "law": {"kind": "geometric", "rule": "prime"}, "n": 100}
    path = tmp_path / "m.json"
    path.write_text(json.dumps(cfg))
    assert M.load_model(path) == M.primes_geometric(100)
    assert M.model_from_config({"sequence": {"kind": "linear-k"}, "law": {"kind": "theorem-ex", "c": 2},
                                "n": 5}) == M.theorem_ex(5, 2.0)
    for bad in ({"law": {}, "n": 1}, {"sequence": {"kind": "x"}, "law": {"kind": "geometric", "rule": "prime"},
                                      "n": 1}, {"sequence": {"kind": "linear-k"}, "law": {"kind": "geometric"},
                                                "n": 1}):
        with pytest.raises(ConfigError):
            M.model_from_config(bad)
    path.write_text("{not json")
    with pytest.raises(ConfigError):
        M.load_model(path)
