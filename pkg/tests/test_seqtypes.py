import itertools
import math

import numpy as np
import pytest
import scipy.stats

from wzexp import (
    CondClassHandle,
    class_size,
    enumerate_class,
    joint_type_of,
    make_table,
    nearest_type,
    sample_uniform_cond,
    type_class_prob,
    variation_distance,
)
from wzexp.exponent import and_construction_table
from wzexp.probability import marginalize
from wzexp.seqtypes import JointType


class TestJointTypeOf:
    def test_basic_example(self):
        t = joint_type_of([[0, 0, 1, 1], [0, 1, 0, 1]], sizes=(2, 2), axes=("x", "y"))
        assert t.n == 4
        assert np.array_equal(t.counts, np.ones((2, 2), dtype=np.int64))

    def test_constant_sequences_point_mass(self):
        t = joint_type_of([[1, 1, 1], [0, 0, 0]], sizes=(2, 2))
        want = np.zeros((2, 2), dtype=np.int64)
        want[1, 0] = 3
        assert np.array_equal(t.counts, want)

    def test_joint_permutation_invariance(self):
        rng = np.random.default_rng(0)
        x = rng.integers(0, 3, size=10)
        y = rng.integers(0, 2, size=10)
        perm = rng.permutation(10)
        t1 = joint_type_of([x, y], sizes=(3, 2))
        t2 = joint_type_of([x[perm], y[perm]], sizes=(3, 2))
        assert np.array_equal(t1.counts, t2.counts)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            joint_type_of([[0, 1], [0, 1, 0]], sizes=(2, 2))


class TestNearestType:
    def test_already_a_type_fixed(self):
        p = make_table(np.array([0.25, 0.5, 0.25]), ("x",))
        t = nearest_type(p, 4)
        assert np.array_equal(t.counts, [1, 2, 1])
        assert variation_distance(t, p) == 0.0

    def test_bernoulli_two_thirds(self):
        t = nearest_type(make_table([2 / 3, 1 / 3], ("x",)), 3)
        assert np.array_equal(t.counts, [2, 1])

    def test_bound_random(self):
        rng = np.random.default_rng(1)
        for _ in range(200):
            shape = tuple(rng.integers(2, 4, size=2))
            vals = rng.dirichlet(np.ones(int(np.prod(shape)))).reshape(shape)
            p = make_table(vals, ("x", "y"))
            n = int(rng.integers(1, 30))
            t = nearest_type(p, n)
            assert int(t.counts.sum()) == n
            assert variation_distance(t, p) <= vals.size / n + 1e-12

    def test_and_construction_at_blocklength_24(self):
        p = marginalize(and_construction_table(0.5), ("u", "x", "y"))
        t = nearest_type(p, 24)
        assert variation_distance(t, p) <= 12 / 24 + 1e-12

    def test_deterministic_tie_break(self):
        p = make_table([0.5, 0.5], ("x",))
        t = nearest_type(p, 3)  # 1.5/1.5: earlier cell wins the extra count
        assert np.array_equal(t.counts, [2, 1])


def _enumerate_all_sequences_class_sizes(sizes, n):
    """Exhaustive ground truth: bucket every sequence tuple by its type."""
    from collections import Counter

    c = Counter()
    for seq in itertools.product(range(int(np.prod(sizes))), repeat=n):
        arr = np.array(seq)
        seqs = []
        rest = arr
        for s in reversed(sizes[1:]):
            seqs.append(rest % s)
            rest = rest // s
        seqs.append(rest)
        t = joint_type_of(list(reversed(seqs)), sizes=sizes)
        c[t.counts.tobytes()] += 1
    return c


class TestClassSize:
    def test_unconditional_binary(self):
        t = joint_type_of([[0, 1]], sizes=(2,), axes=("x",))
        h = CondClassHandle(jt=t, cond_axes=(), target_axes=("x",), cond_seqs=())
        exact, lo, up = class_size(h)
        assert exact == 2
        assert lo <= exact <= up

    def test_deterministic_conditional_single_member(self):
        x = np.array([0, 0, 1, 1])
        v = np.array([1, 1, 0, 0])  # v = 1 - x deterministic
        jt = joint_type_of([x, v], sizes=(2, 2), axes=("x", "v"))
        h = CondClassHandle(jt=jt, cond_axes=("x",), target_axes=("v",), cond_seqs=(x,))
        exact, _, _ = class_size(h)
        assert exact == 1
        assert np.array_equal(enumerate_class(h)[0], v)

    def test_inconsistent_marginal_zero(self):
        x = np.array([0, 0, 0, 0])
        jt = joint_type_of([[0, 0, 1, 1], [0, 1, 0, 1]], sizes=(2, 2), axes=("x", "v"))
        h = CondClassHandle(jt=jt, cond_axes=("x",), target_axes=("v",), cond_seqs=(x,))
        assert class_size(h) == (0, 0.0, 0.0)
        assert enumerate_class(h).shape == (0, 4)

    def test_exhaustive_unconditional_2x2(self):
        # every joint type over a 2x2 alphabet, n <= 6: exact == enumeration
        for n in range(1, 7):
            truth = _enumerate_all_sequences_class_sizes((2, 2), n)
            total = 0
            for counts_bytes, size in truth.items():
                counts = np.frombuffer(counts_bytes, dtype=np.int64).reshape(2, 2)
                jt = JointType(n=n, counts=counts, axes=("x", "y"))
                h = CondClassHandle(jt=jt, cond_axes=(), target_axes=("x", "y"), cond_seqs=())
                exact, lo, up = class_size(h)
                assert exact == size
                assert lo - 1e-9 <= exact <= up + 1e-9
                total += size
            assert total == 4 ** n

    def test_conditional_vs_enumeration_random(self):
        rng = np.random.default_rng(3)
        for _ in range(40):
            n = int(rng.integers(2, 9))
            sx = int(rng.integers(2, 4))
            sv = int(rng.integers(2, 4))
            x = rng.integers(0, sx, size=n)
            v = rng.integers(0, sv, size=n)
            jt = joint_type_of([x, v], sizes=(sx, sv), axes=("x", "v"))
            h = CondClassHandle(jt=jt, cond_axes=("x",), target_axes=("v",), cond_seqs=(x,))
            exact, lo, up = class_size(h)
            members = enumerate_class(h)
            assert members.shape[0] == exact
            assert lo - 1e-12 <= exact <= up * (1 + 1e-12)
            # every member really lies in the class, no duplicates
            assert len({m.tobytes() for m in members}) == exact
            for row in members[: min(5, exact)]:
                tt = joint_type_of([x, row], sizes=(sx, sv), axes=("x", "v"))
                assert np.array_equal(tt.counts, jt.counts)

    def test_enumeration_cap(self):
        x = np.zeros(14, dtype=int)
        v = np.array([0, 1] * 7)
        jt = joint_type_of([x, v], sizes=(1, 2), axes=("x", "v"))
        h = CondClassHandle(jt=jt, cond_axes=("x",), target_axes=("v",), cond_seqs=(x,))
        with pytest.raises(ValueError):
            enumerate_class(h, cap=100)


class TestSampler:
    def test_singleton_class(self):
        x = np.array([0, 1, 0, 1])
        v = x.copy()
        jt = joint_type_of([x, v], sizes=(2, 2), axes=("x", "v"))
        h = CondClassHandle(jt=jt, cond_axes=("x",), target_axes=("v",), cond_seqs=(x,))
        assert np.array_equal(sample_uniform_cond(h, 0), v)

    def test_unconditional_pair_uniform(self):
        t = JointType(n=2, counts=np.array([1, 1]), axes=("x",))
        h = CondClassHandle(jt=t, cond_axes=(), target_axes=("x",), cond_seqs=())
        hits = sum(tuple(sample_uniform_cond(h, s)) == (0, 1) for s in range(10 ** 4))
        sigma = math.sqrt(0.25 * 10 ** 4)
        assert abs(hits - 5000) <= 3 * sigma

    def test_output_type_always_matches(self):
        rng = np.random.default_rng(5)
        for trial in range(30):
            n = int(rng.integers(2, 10))
            x = rng.integers(0, 2, size=n)
            v = rng.integers(0, 3, size=n)
            jt = joint_type_of([x, v], sizes=(2, 3), axes=("x", "v"))
            h = CondClassHandle(jt=jt, cond_axes=("x",), target_axes=("v",), cond_seqs=(x,))
            out = sample_uniform_cond(h, trial)
            tt = joint_type_of([x, out], sizes=(2, 3), axes=("x", "v"))
            assert np.array_equal(tt.counts, jt.counts)

    def test_uniformity_chi_square(self):
        x = np.array([0, 0, 0, 1, 1, 1])
        v = np.array([0, 0, 1, 0, 1, 1])
        jt = joint_type_of([x, v], sizes=(2, 2), axes=("x", "v"))
        h = CondClassHandle(jt=jt, cond_axes=("x",), target_axes=("v",), cond_seqs=(x,))
        exact, _, _ = class_size(h)
        assert exact == 9
        trials = 18000
        counts = {}
        for s in range(trials):
            key = tuple(sample_uniform_cond(h, s))
            counts[key] = counts.get(key, 0) + 1
        assert len(counts) == exact
        expected = trials / exact
        stat = sum((c - expected) ** 2 / expected for c in counts.values())
        assert scipy.stats.chi2.sf(stat, exact - 1) >= 1e-3

    def test_empty_class_rejected(self):
        x = np.array([0, 0])
        jt = joint_type_of([[0, 1], [0, 1]], sizes=(2, 2), axes=("x", "v"))
        h = CondClassHandle(jt=jt, cond_axes=("x",), target_axes=("v",), cond_seqs=(x,))
        with pytest.raises(ValueError):
            sample_uniform_cond(h, 0)


class TestTypeClassProb:
    def test_point_mass_type(self):
        P = np.array([[0.1, 0.2], [0.3, 0.4]])
        counts = np.zeros((2, 2), dtype=np.int64)
        counts[1, 0] = 3
        t = JointType(n=3, counts=counts, axes=("x", "y"))
        exact, lower = type_class_prob(P, t)
        assert exact == pytest.approx(0.3 ** 3, rel=1e-12)
        assert exact >= lower

    def test_n1_cell_mass(self):
        P = np.array([[0.1, 0.2], [0.3, 0.4]])
        counts = np.zeros((2, 2), dtype=np.int64)
        counts[0, 1] = 1
        t = JointType(n=1, counts=counts, axes=("x", "y"))
        exact, _ = type_class_prob(P, t)
        assert exact == pytest.approx(0.2, rel=1e-12)

    def test_uniform_balanced_n8(self):
        P = np.full((2, 2), 0.25)
        t = JointType(n=8, counts=np.full((2, 2), 2, dtype=np.int64), axes=("x", "y"))
        exact, lower = type_class_prob(P, t)
        assert lower == pytest.approx(9.0 ** -4, rel=1e-9)  # zero divergence case
        assert exact >= lower
        # direct multinomial value: (8! / (2!^4)) / 4^8
        want = math.factorial(8) / 16 / 4 ** 8
        assert exact == pytest.approx(want, rel=1e-12)

    def test_exact_above_lower_random(self):
        rng = np.random.default_rng(6)
        for _ in range(100):
            P = rng.dirichlet(np.ones(4)).reshape(2, 2)
            n = int(rng.integers(1, 12))
            seqs = rng.integers(0, 2, size=(2, n))
            t = joint_type_of(seqs, sizes=(2, 2), axes=("x", "y"))
            exact, lower = type_class_prob(P, t)
            assert exact >= lower - 1e-15

    def test_unsupported_type_zero(self):
        P = np.array([[0.5, 0.5], [0.0, 0.0]])
        counts = np.zeros((2, 2), dtype=np.int64)
        counts[1, 1] = 2
        t = JointType(n=2, counts=counts, axes=("x", "y"))
        exact, lower = type_class_prob(P, t)
        assert exact == 0.0 and lower == 0.0
