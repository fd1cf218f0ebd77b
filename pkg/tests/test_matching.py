import math

import numpy as np
import pytest
import scipy.stats
from hypothesis import given, settings, strategies as st

from wzexp import (
    SharedExpSource,
    WeightedSupport,
    argmin_sample,
    couple_conditional,
    coupled_mismatch,
    exp_variate,
    mismatch_bound,
)
from wzexp.matching import (
    argmin_sample_many,
    canonical_key,
    coupled_mismatch_many,
    exp_variates_many,
    mix64,
)


class TestSharedExpSource:
    def test_deterministic(self):
        src = SharedExpSource(123)
        assert exp_variate(src, (0, 1, 2)) == exp_variate(src, (0, 1, 2))

    def test_distinct_keys_distinct_values(self):
        src = SharedExpSource(7)
        vals = {exp_variate(src, (k,)) for k in range(1000)}
        assert len(vals) == 1000

    def test_positive(self):
        src = SharedExpSource(9)
        assert all(exp_variate(src, (k,)) > 0 for k in range(200))

    def test_seed_changes_values(self):
        assert exp_variate(SharedExpSource(1), (5,)) != exp_variate(SharedExpSource(2), (5,))

    def test_scalar_matches_vectorized_paths(self):
        src = SharedExpSource(31337)
        keys = [(0,), (1, 2), (3, 4, 5, 6), (2 ** 31, 0, 17)]
        for key in keys:
            scalar = exp_variate(src, key)
            fields = np.array([key], dtype=np.uint64)
            assert src.variates_for_fields(fields)[0] == scalar
            assert exp_variates_many(np.array([31337], dtype=np.uint64), key)[0] == scalar

    def test_exp1_mean(self):
        # 10^6 variates over distinct keys: mean within 0.01 of 1
        vals = exp_variates_many(np.arange(10 ** 6, dtype=np.uint64), (42,))
        assert abs(vals.mean() - 1.0) < 0.01

    def test_int_key_canonicalized(self):
        src = SharedExpSource(5)
        assert exp_variate(src, 3) == exp_variate(src, (3,))

    def test_key_component_range(self):
        with pytest.raises(ValueError):
            canonical_key((2 ** 32,))

    def test_mix64_reference_values(self):
        # published splitmix64 outputs for states 0 and 2^64-1
        assert mix64(0) == 0xE220A8397B1DCDAF
        assert mix64(0xFFFFFFFFFFFFFFFF) == 0xE4D971771B652C20
        assert mix64(1234567) == 0x599ED017FB08FC85


class TestWeightedSupport:
    def test_invariants(self):
        with pytest.raises(ValueError):
            WeightedSupport(keys=((0,), (0,)), weights=np.array([0.5, 0.5]))
        with pytest.raises(ValueError):
            WeightedSupport(keys=((0,), (1,)), weights=np.array([0.7, 0.7]))
        with pytest.raises(ValueError):
            WeightedSupport(keys=((0,), (1,)), weights=np.array([-0.1, 1.1]))

    def test_canonical_order(self):
        w = WeightedSupport(keys=((3,), (1,), (2,)), weights=np.array([0.2, 0.5, 0.3]))
        assert w.keys == ((1,), (2,), (3,))
        assert w.weight_of((1,)) == 0.5


class TestArgminSample:
    def test_point_mass(self):
        w = WeightedSupport(keys=((0,), (1,), (2,)), weights=np.array([0.0, 1.0, 0.0]))
        src = SharedExpSource(0)
        for seed in range(50):
            assert argmin_sample(w, SharedExpSource(seed)) == (1,)

    def test_zero_weight_never_returned(self):
        w = WeightedSupport(keys=((0,), (1,), (2,)), weights=np.array([0.5, 0.0, 0.5]))
        for seed in range(200):
            assert argmin_sample(w, SharedExpSource(seed)) != (1,)

    def test_all_zero_rejected(self):
        with pytest.raises(ValueError):
            argmin_sample(_zero_support(), SharedExpSource(0))

    def test_uniform_marginal(self):
        w = WeightedSupport(keys=tuple((k,) for k in range(4)), weights=np.full(4, 0.25))
        idx = argmin_sample_many(w, np.arange(10 ** 5, dtype=np.uint64))
        freq = np.bincount(idx, minlength=4) / 1e5
        # 3 sigma binomial around 0.25
        sigma = math.sqrt(0.25 * 0.75 / 1e5)
        assert np.all(np.abs(freq - 0.25) <= 3 * sigma + 1e-9)

    def test_marginal_chi_square(self):
        rng = np.random.default_rng(17)
        seeds = np.arange(10 ** 5, dtype=np.uint64)
        for trial in range(4):
            k = int(rng.integers(2, 9))
            weights = rng.dirichlet(np.ones(k))
            w = WeightedSupport(keys=tuple((i,) for i in range(k)), weights=weights)
            idx = argmin_sample_many(w, seeds + np.uint64(trial * 10 ** 6))
            freq = np.bincount(idx, minlength=k)
            expected = w.weights * len(seeds)
            stat = float(((freq - expected) ** 2 / expected).sum())
            assert scipy.stats.chi2.sf(stat, k - 1) >= 1e-3

    def test_scalar_batch_agree(self):
        w = WeightedSupport(keys=((0,), (1,), (2,)), weights=np.array([0.2, 0.5, 0.3]))
        idx = argmin_sample_many(w, np.arange(64, dtype=np.uint64))
        for s in range(64):
            assert argmin_sample(w, SharedExpSource(s)) == w.keys[idx[s]]


def _zero_support():
    # bypass the sum-to-one check to exercise the argmin error path
    w = WeightedSupport(keys=((0,),), weights=np.array([1.0]))
    object.__setattr__(w, "weights", np.array([0.0]))
    return w


@given(seed=st.integers(0, 10 ** 9), scale=st.floats(1e-6, 1e6))
@settings(max_examples=80, deadline=None)
def test_scale_invariance_of_scaled_argmin(seed, scale):
    # scaling every weight by a positive constant never changes the argmin
    rng = np.random.default_rng(seed)
    k = 6
    weights = rng.dirichlet(np.ones(k))
    src = SharedExpSource(seed)
    v = np.array([exp_variate(src, (i,)) for i in range(k)])
    assert int(np.argmin(v / weights)) == int(np.argmin(v / (scale * weights)))


class TestCoupling:
    def test_identical_supports_always_match(self):
        w = WeightedSupport(keys=tuple((k,) for k in range(5)), weights=np.full(5, 0.2))
        for seed in range(100):
            r = coupled_mismatch(w, w, SharedExpSource(seed))
            assert r.match

    def test_zero_q_at_cp_mismatch_certain(self):
        p = WeightedSupport(keys=((0,), (1,)), weights=np.array([0.5, 0.5]))
        q = WeightedSupport(keys=((0,), (1,)), weights=np.array([0.0, 1.0]))
        assert mismatch_bound(0.5, 0.0) == 1.0
        for seed in range(200):
            r = coupled_mismatch(p, q, SharedExpSource(seed))
            if r.c_p == (0,):
                assert not r.match

    def test_point_mass_decoder_matches_when_supported(self):
        # side information pinning the true sample: always recovered
        rng = np.random.default_rng(3)
        for seed in range(100):
            weights = rng.dirichlet(np.ones(4))
            p = WeightedSupport(keys=tuple((k,) for k in range(4)), weights=weights)
            src = SharedExpSource(seed)
            c_enc = argmin_sample(p, src)
            onehot = np.zeros(4)
            onehot[c_enc[0]] = 1.0
            q = WeightedSupport(keys=p.keys, weights=onehot)
            r = couple_conditional(p, q, src)
            assert r.match

    def test_lemma_bound_conditional(self):
        p = WeightedSupport(keys=((0,), (1,)), weights=np.array([0.9, 0.1]))
        q = WeightedSupport(keys=((0,), (1,)), weights=np.array([0.1, 0.9]))
        ip, iq = coupled_mismatch_many(p, q, np.arange(10 ** 5, dtype=np.uint64))
        sel = ip == 0
        rate = float((iq[sel] != 0).mean())
        bound = mismatch_bound(0.9, 0.1)  # 0.9
        se = math.sqrt(rate * (1 - rate) / sel.sum())
        assert rate <= bound + 3 * se

    def test_empty_support_rejected(self):
        # empty supports cannot even be constructed (weights must sum to 1)
        with pytest.raises(ValueError):
            WeightedSupport(keys=(), weights=np.zeros(0))
        q = WeightedSupport(keys=((0,),), weights=np.array([1.0]))
        with pytest.raises(ValueError):
            coupled_mismatch(_zero_support(), q, SharedExpSource(0))

    def test_scalar_batch_agree(self):
        p = WeightedSupport(keys=((0,), (1,), (2,)), weights=np.array([0.6, 0.3, 0.1]))
        q = WeightedSupport(keys=((0,), (1,), (2,)), weights=np.array([0.1, 0.3, 0.6]))
        ip, iq = coupled_mismatch_many(p, q, np.arange(50, dtype=np.uint64))
        for s in range(50):
            r = coupled_mismatch(p, q, SharedExpSource(s))
            assert r.c_p == p.keys[ip[s]] and r.c_q == q.keys[iq[s]]


class TestLemmaBoundRandomPairs:
    def test_fifty_pairs(self):
        rng = np.random.default_rng(20250810)
        seeds = np.arange(2 * 10 ** 4, dtype=np.uint64)
        for pair in range(10):
            k = int(rng.integers(2, 17))
            pw = rng.dirichlet(np.ones(k))
            qw = rng.dirichlet(np.ones(k))
            keys = tuple((i,) for i in range(k))
            p = WeightedSupport(keys=keys, weights=pw)
            q = WeightedSupport(keys=keys, weights=qw)
            ip, iq = coupled_mismatch_many(p, q, seeds + np.uint64(pair * 10 ** 7))
            for c in range(k):
                sel = ip == c
                cnt = int(sel.sum())
                if cnt < 500:
                    continue
                rate = float((iq[sel] != c).mean())
                bnd = mismatch_bound(p.weights[c], q.weights[c])
                se = math.sqrt(max(rate * (1 - rate), 1e-12) / cnt)
                assert rate <= bnd + 3 * se, (pair, c, rate, bnd)
