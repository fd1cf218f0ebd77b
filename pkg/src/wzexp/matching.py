"""Deterministic shared exponential randomness and scaled-argmin coupling.

The coupling engine: two parties index a common pool of unit-rate
exponential variates by discrete keys and each returns the key minimizing
``variate(key) / weight(key)`` over its own support.  Sampling this way is
exact (the argmin is distributed according to the weights), and when both
parties share the variates the probability that they disagree admits a
per-outcome bound of the form ``1 - (1 + p(c)/q(c))^-1``.

Reproducibility contract (documented so an independent implementation can
match bit-for-bit):

  * keys are flat tuples of non-negative integers below 2**32;
  * a key ``(k1, .., kr)`` is encoded as the field sequence
    ``(r, k1, .., kr)``, each field packed big-endian into 4 bytes, the byte
    string zero-padded to a multiple of 8 and split into 8-byte blocks read
    as big-endian 64-bit integers;
  * the pseudo-random function is the splitmix64 finalizer, absorbed
    sponge-style: ``state = mix64(seed)`` then ``state = mix64(state ^ block)``
    per block;
  * the final state becomes the uniform ``u = ((state >> 11) + 0.5) * 2**-53``
    (strictly inside (0, 1)) and the variate is ``-ln(u) > 0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "SharedExpSource",
    "WeightedSupport",
    "exp_variate",
    "argmin_sample",
    "coupled_mismatch",
    "couple_conditional",
    "CoupleResult",
    "mismatch_bound",
]

_MASK = 0xFFFFFFFFFFFFFFFF
_GAMMA = 0x9E3779B97F4A7C15
_MULT1 = 0xBF58476D1CE4E5B9
_MULT2 = 0x94D049BB133111EB
_U53 = 2.0 ** -53


def mix64(x: int) -> int:
    """splitmix64 finalizer on a 64-bit integer."""
    x = (x + _GAMMA) & _MASK
    x ^= x >> 30
    x = (x * _MULT1) & _MASK
    x ^= x >> 27
    x = (x * _MULT2) & _MASK
    x ^= x >> 31
    return x


def _mix64_np(x: np.ndarray) -> np.ndarray:
    x = x + np.uint64(_GAMMA)
    x ^= x >> np.uint64(30)
    x *= np.uint64(_MULT1)
    x ^= x >> np.uint64(27)
    x *= np.uint64(_MULT2)
    x ^= x >> np.uint64(31)
    return x


def canonical_key(key) -> tuple[int, ...]:
    """Normalize a key to a flat tuple of ints in [0, 2**32)."""
    if isinstance(key, (int, np.integer)):
        key = (int(key),)
    out = tuple(int(k) for k in key)
    for k in out:
        if not 0 <= k < 2 ** 32:
            raise ValueError(f"key component {k} outside [0, 2**32)")
    return out


def _blocks_of(fields: tuple[int, ...]) -> list[int]:
    if len(fields) % 2:
        fields = fields + (0,)
    return [(fields[i] << 32) | fields[i + 1] for i in range(0, len(fields), 2)]


@dataclass(frozen=True)
class SharedExpSource:
    """A keyed source of independent unit-rate exponential variates.

    The same (seed, key) pair always yields the same variate; variates for
    distinct keys behave as independent Exp(1) draws.  Nothing is
    materialized: each variate is a pure function of (seed, key).
    """

    seed: int

    def __post_init__(self):
        object.__setattr__(self, "seed", int(self.seed) & _MASK)

    def raw64(self, key) -> int:
        """The 64-bit PRF output for a key (used for deriving child seeds)."""
        fields = canonical_key(key)
        state = mix64(self.seed)
        for block in _blocks_of((len(fields),) + fields):
            state = mix64(state ^ block)
        return state

    def variate(self, key) -> float:
        u = ((self.raw64(key) >> 11) + 0.5) * _U53
        return -math.log(u)

    def child_seed(self, *key) -> int:
        """Derive an independent 64-bit seed from this source and a key."""
        return self.raw64(tuple(key))

    # -- vectorized paths (bit-identical to the scalar ones) ------------------

    def states_for_fields(self, fields: np.ndarray) -> np.ndarray:
        """PRF states for a batch of keys given as rows of uint64 components.

        ``fields`` has shape (n_keys, r); the length prefix is added here, so
        rows are the raw key components only.
        """
        fields = np.asarray(fields, dtype=np.uint64)
        n, r = fields.shape
        full = np.empty((n, r + 1), dtype=np.uint64)
        full[:, 0] = np.uint64(r)
        full[:, 1:] = fields
        if (r + 1) % 2:
            full = np.concatenate([full, np.zeros((n, 1), dtype=np.uint64)], axis=1)
        state = np.full(n, mix64(self.seed), dtype=np.uint64)
        for i in range(0, full.shape[1], 2):
            block = (full[:, i] << np.uint64(32)) | full[:, i + 1]
            state = _mix64_np(state ^ block)
        return state

    def variates_for_fields(self, fields: np.ndarray) -> np.ndarray:
        state = self.states_for_fields(fields)
        u = ((state >> np.uint64(11)).astype(np.float64) + 0.5) * _U53
        return -np.log(u)


def exp_variate(src: SharedExpSource, key) -> float:
    """Deterministic Exp(1) variate for (src.seed, key)."""
    return src.variate(key)


def exp_variates_many(seeds: np.ndarray, key) -> np.ndarray:
    """One variate per seed for a fixed key (vectorized over seeds)."""
    fields = canonical_key(key)
    seeds = np.asarray(seeds, dtype=np.uint64)
    state = _mix64_np(seeds.copy())
    for block in _blocks_of((len(fields),) + fields):
        state = _mix64_np(state ^ np.uint64(block))
    u = ((state >> np.uint64(11)).astype(np.float64) + 0.5) * _U53
    return -np.log(u)


@dataclass(frozen=True)
class WeightedSupport:
    """A probability vector on an explicit list of discrete keys.

    Keys are stored in canonical (lexicographic tuple) order so argmin
    tie-breaking is deterministic and independent of construction order.
    """

    keys: tuple[tuple[int, ...], ...]
    weights: np.ndarray

    def __post_init__(self):
        keys = tuple(canonical_key(k) for k in self.keys)
        w = np.asarray(self.weights, dtype=float)
        if w.shape != (len(keys),):
            raise ValueError("one weight per key required")
        if len(set(keys)) != len(keys):
            raise ValueError("keys must be distinct")
        if w.size and w.min() < 0.0:
            raise ValueError("weights must be non-negative")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ValueError(f"weights sum to {w.sum()!r}, not 1")
        order = sorted(range(len(keys)), key=lambda i: keys[i])
        keys = tuple(keys[i] for i in order)
        w = w[order]
        w.setflags(write=False)
        object.__setattr__(self, "keys", keys)
        object.__setattr__(self, "weights", w)

    def weight_of(self, key) -> float:
        key = canonical_key(key)
        try:
            return float(self.weights[self.keys.index(key)])
        except ValueError:
            return 0.0


def argmin_sample(w: WeightedSupport, src: SharedExpSource):
    """The key minimizing variate/weight over positive-weight keys.

    The returned key is distributed according to ``w`` when the seed is
    uniform.  Ties (measure zero, but possible in floats) go to the
    smallest key in canonical order; scaling all weights by a common
    positive factor cannot change the result.
    """
    pos = np.flatnonzero(w.weights > 0.0)
    if pos.size == 0:
        raise ValueError("support has no positive weight")
    ratios = np.array([src.variate(w.keys[i]) for i in pos]) / w.weights[pos]
    return w.keys[pos[int(np.argmin(ratios))]]


def _argmin_many(w: WeightedSupport, seeds: np.ndarray) -> np.ndarray:
    """Vectorized argmin_sample: index into w.keys for each seed."""
    pos = np.flatnonzero(w.weights > 0.0)
    if pos.size == 0:
        raise ValueError("support has no positive weight")
    ratios = np.empty((len(seeds), pos.size))
    for j, i in enumerate(pos):
        ratios[:, j] = exp_variates_many(seeds, w.keys[i]) / w.weights[i]
    return pos[np.argmin(ratios, axis=1)]


def argmin_sample_many(w: WeightedSupport, seeds) -> np.ndarray:
    """Key indices (into ``w.keys``) chosen by argmin_sample per seed."""
    return _argmin_many(w, np.asarray(seeds, dtype=np.uint64))


@dataclass(frozen=True)
class CoupleResult:
    c_p: tuple[int, ...]
    c_q: tuple[int, ...]
    match: bool


def mismatch_bound(p_of_c: float, q_of_c: float) -> float:
    """Upper bound on Pr(disagree | first argmin = c), i.e. 1-(1+p/q)^-1.

    Interpreted as 1 when q(c) = 0.
    """
    if q_of_c <= 0.0:
        return 1.0
    return 1.0 - 1.0 / (1.0 + p_of_c / q_of_c)


def coupled_mismatch(p: WeightedSupport, q: WeightedSupport, src: SharedExpSource) -> CoupleResult:
    """Run both scaled argmins on identical variates and compare.

    ``p`` and ``q`` live on a common key universe (their key lists need not
    be equal; zero-weight keys are simply never selected).
    """
    if len(p.keys) == 0 or len(q.keys) == 0:
        raise ValueError("empty support")
    c_p = argmin_sample(p, src)
    c_q = argmin_sample(q, src)
    return CoupleResult(c_p=c_p, c_q=c_q, match=c_p == c_q)


def couple_conditional(
    p_given_a: WeightedSupport, q_given_b: WeightedSupport, src: SharedExpSource
) -> CoupleResult:
    """Conditional variant of :func:`coupled_mismatch`.

    The caller supplies the two conditioned weight vectors (encoder side
    P(. | a), decoder side Q(. | b)) and must guarantee that b was generated
    conditionally independent of the shared source given (a, c_enc); under
    that contract the per-outcome disagreement bound holds conditionally on
    (a, b, c).
    """
    return coupled_mismatch(p_given_a, q_given_b, src)


def coupled_mismatch_many(
    p: WeightedSupport, q: WeightedSupport, seeds
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized coupled_mismatch: (p-index, q-index) arrays over seeds.

    Indices refer to ``p.keys`` / ``q.keys``.  Shared keys reuse identical
    variates, exactly as in the scalar path.
    """
    seeds = np.asarray(seeds, dtype=np.uint64)
    cache: dict[tuple[int, ...], np.ndarray] = {}

    def ratios(w: WeightedSupport):
        pos = np.flatnonzero(w.weights > 0.0)
        mat = np.empty((len(seeds), pos.size))
        for j, i in enumerate(pos):
            key = w.keys[i]
            if key not in cache:
                cache[key] = exp_variates_many(seeds, key)
            mat[:, j] = cache[key] / w.weights[i]
        return pos, mat

    pos_p, rp = ratios(p)
    pos_q, rq = ratios(q)
    return pos_p[np.argmin(rp, axis=1)], pos_q[np.argmin(rq, axis=1)]
