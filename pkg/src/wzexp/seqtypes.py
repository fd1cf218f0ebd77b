"""Method-of-types machinery: joint types, (conditional) type classes,
exact counts with exponential bounds, and exactly-uniform samplers.

A joint type at blocklength n is an integer count table over a product
alphabet summing to n.  Conditional type classes are handled per
conditioning symbol: the class of sequences v^n whose joint type with a
fixed x^n equals a target factorizes into independent multiset placements
on the position groups {j : x_j = s}, which gives exact counts (products of
multinomial coefficients), exact uniform sampling (independent multiset
shuffles), and cheap enumeration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "JointType",
    "CondClassHandle",
    "joint_type_of",
    "nearest_type",
    "variation_distance",
    "class_size",
    "enumerate_class",
    "sample_uniform_cond",
    "type_class_prob",
]

ENUMERATION_CAP = 10 ** 7
_EXACT_N = 64  # big-integer multinomials up to here, log-factorials beyond


@dataclass(frozen=True)
class JointType:
    """Empirical count table over named axes, summing to the blocklength."""

    n: int
    counts: np.ndarray
    axes: tuple[str, ...]

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        if counts.ndim != len(self.axes):
            raise ValueError("one axis name per counts dimension required")
        if counts.min(initial=0) < 0:
            raise ValueError("counts must be non-negative")
        if int(counts.sum()) != self.n:
            raise ValueError(f"counts sum to {counts.sum()}, expected n={self.n}")
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "axes", tuple(self.axes))

    @property
    def sizes(self) -> tuple[int, ...]:
        return self.counts.shape

    def dist(self) -> np.ndarray:
        """The induced distribution counts/n."""
        return self.counts / float(self.n)

    def axis_index(self, name: str) -> int:
        try:
            return self.axes.index(name)
        except ValueError:
            raise KeyError(f"unknown axis {name!r}; have {self.axes}") from None

    def marginal(self, names) -> "JointType":
        names = tuple(names)
        keep = [self.axis_index(n) for n in names]
        drop = tuple(i for i in range(len(self.axes)) if i not in keep)
        c = self.counts.sum(axis=drop) if drop else self.counts
        # restore requested order
        order = tuple(np.argsort(np.argsort(keep)))
        c = np.transpose(c, order) if len(names) > 1 else c
        return JointType(n=self.n, counts=c, axes=names)

    def group_entropy(self, names) -> float:
        """Entropy in bits of the marginal on ``names`` (empty -> 0)."""
        names = tuple(names)
        if not names:
            return 0.0
        p = self.marginal(names).dist().ravel()
        p = p[p > 0]
        return float(-(p * np.log2(p)).sum())

    def cond_entropy(self, target, given) -> float:
        return self.group_entropy(tuple(given) + tuple(target)) - self.group_entropy(given)

    def mutual_information(self, a, b) -> float:
        return self.group_entropy(a) + self.group_entropy(b) - self.group_entropy(tuple(a) + tuple(b))

    def expected(self, table: np.ndarray) -> float:
        """Average of a per-cell table under counts/n."""
        t = np.asarray(table, dtype=float)
        if t.shape != self.counts.shape:
            raise ValueError("table shape must match counts")
        return float((self.counts * t).sum() / self.n)


def joint_type_of(sequences, sizes=None, axes=None) -> JointType:
    """Exact joint type of equal-length symbol sequences."""
    seqs = [np.asarray(s, dtype=np.int64) for s in sequences]
    n = len(seqs[0])
    if any(len(s) != n for s in seqs):
        raise ValueError("sequences must have equal length")
    if sizes is None:
        sizes = tuple(int(s.max(initial=0)) + 1 for s in seqs)
    sizes = tuple(int(k) for k in sizes)
    if axes is None:
        axes = tuple(f"a{i}" for i in range(len(seqs)))
    counts = np.zeros(sizes, dtype=np.int64)
    np.add.at(counts, tuple(seqs), 1)
    return JointType(n=n, counts=counts, axes=tuple(axes))


def nearest_type(p, n: int, axes=None) -> JointType:
    """A type at blocklength n within total variation |cells|/n of ``p``.

    Largest-remainder rounding of n*p, ties broken by canonical (C-order)
    cell index, so the result is deterministic.
    """
    from .probability import JointTable

    if isinstance(p, JointTable):
        vals = p.values
        axes = p.axis_names if axes is None else tuple(axes)
    else:
        vals = np.asarray(p, dtype=float)
        if axes is None:
            axes = tuple(f"a{i}" for i in range(vals.ndim))
    if abs(vals.sum() - 1.0) > 1e-9:
        raise ValueError("nearest_type requires a normalized distribution")
    scaled = vals.ravel() * n
    base = np.floor(scaled).astype(np.int64)
    short = n - int(base.sum())
    if short:
        frac = scaled - base
        # stable sort on -frac keeps canonical order among ties
        order = np.argsort(-frac, kind="stable")
        base[order[:short]] += 1
    return JointType(n=n, counts=base.reshape(vals.shape), axes=tuple(axes))


def variation_distance(t: JointType, p) -> float:
    """Total variation distance between the type's distribution and ``p``."""
    from .probability import JointTable

    vals = p.values if isinstance(p, JointTable) else np.asarray(p, dtype=float)
    return 0.5 * float(np.abs(t.dist() - vals).sum())


@dataclass(frozen=True)
class CondClassHandle:
    """The conditional type class of target axes given fixed sequences.

    ``jt`` is the joint type over cond axes + target axes; ``cond_seqs``
    are the conditioning sequences (one per cond axis, empty for an
    unconditional class).  The class is empty unless the conditioning
    sequences' own joint type equals the corresponding marginal of ``jt``.
    """

    jt: JointType
    cond_axes: tuple[str, ...]
    target_axes: tuple[str, ...]
    cond_seqs: tuple[np.ndarray, ...]

    def __post_init__(self):
        cond_axes = tuple(self.cond_axes)
        target_axes = tuple(self.target_axes)
        if set(cond_axes) | set(target_axes) != set(self.jt.axes) or set(cond_axes) & set(
            target_axes
        ):
            raise ValueError("cond and target axes must partition the joint type's axes")
        seqs = tuple(np.asarray(s, dtype=np.int64) for s in self.cond_seqs)
        if len(seqs) != len(cond_axes):
            raise ValueError("one conditioning sequence per conditioning axis")
        for s in seqs:
            if len(s) != self.jt.n:
                raise ValueError("conditioning sequences must have length n")
        for s in seqs:
            s.setflags(write=False)
        object.__setattr__(self, "cond_axes", cond_axes)
        object.__setattr__(self, "target_axes", target_axes)
        object.__setattr__(self, "cond_seqs", seqs)

    def consistent(self) -> bool:
        if not self.cond_axes:
            return True
        sizes = tuple(self.jt.marginal((a,)).sizes[0] for a in self.cond_axes)
        observed = joint_type_of(self.cond_seqs, sizes=sizes, axes=self.cond_axes)
        want = self.jt.marginal(self.cond_axes)
        return bool(np.array_equal(observed.counts, want.counts))

    def _ordered_counts(self) -> np.ndarray:
        """Counts rearranged to (cond axes..., target axes...)."""
        order = tuple(self.jt.axis_index(a) for a in self.cond_axes + self.target_axes)
        return np.transpose(self.jt.counts, order)

    def group_requirements(self):
        """Per cond-symbol-tuple: (flat cond symbol, target-count vector)."""
        c = self._ordered_counts()
        n_cond = len(self.cond_axes)
        cond_size = int(np.prod(c.shape[:n_cond], dtype=int)) if n_cond else 1
        tgt_size = int(np.prod(c.shape[n_cond:], dtype=int))
        return c.reshape(cond_size, tgt_size)


def _multinomial_exact(total: int, parts) -> int:
    out = math.factorial(total)
    for k in parts:
        out //= math.factorial(int(k))
    return out


def _multinomial_log2(total: int, parts) -> float:
    out = math.lgamma(total + 1)
    for k in parts:
        out -= math.lgamma(int(k) + 1)
    return out / math.log(2)


def class_size(handle: CondClassHandle):
    """(exact count, lower bound, upper bound) for a conditional class.

    exact = product over conditioning symbols of multinomial coefficients;
    upper = 2^{n H(target | cond)} and lower = (n+1)^{-K} * upper with K the
    product of all involved alphabet sizes.  Inconsistent conditioning gives
    (0, 0.0, 0.0).
    """
    if not handle.consistent():
        return 0, 0.0, 0.0
    req = handle.group_requirements()
    n = handle.jt.n
    exact: int | float
    if n <= _EXACT_N:
        exact = 1
        for row in req:
            exact *= _multinomial_exact(int(row.sum()), row)
    else:
        log2 = sum(_multinomial_log2(int(row.sum()), row) for row in req)
        exact = float(2.0 ** log2)
    h = handle.jt.cond_entropy(handle.target_axes, handle.cond_axes)
    k_exp = 1
    for a in handle.jt.axes:
        k_exp *= handle.jt.marginal((a,)).sizes[0]
    upper = 2.0 ** (n * h)
    lower = (n + 1.0) ** (-k_exp) * upper
    return exact, lower, upper


def _multiset_permutations(counts) -> np.ndarray:
    """All distinct arrangements of a multiset given per-symbol counts."""
    counts = [int(c) for c in counts]
    length = sum(counts)
    if length == 0:
        return np.zeros((1, 0), dtype=np.int8)
    total = _multinomial_exact(length, counts)
    out = np.empty((total, length), dtype=np.int8)
    row = np.empty(length, dtype=np.int8)
    pos = [0]

    def rec(remaining: list[int], depth: int):
        if depth == length:
            out[pos[0]] = row
            pos[0] += 1
            return
        for s, c in enumerate(remaining):
            if c:
                remaining[s] -= 1
                row[depth] = s
                rec(remaining, depth + 1)
                remaining[s] += 1

    rec(counts, 0)
    return out


def _cond_groups(handle: CondClassHandle):
    """(positions, target-count vector) per conditioning symbol tuple."""
    n = handle.jt.n
    if not handle.cond_axes:
        return [(np.arange(n), handle.group_requirements()[0])]
    sizes = [handle.jt.marginal((a,)).sizes[0] for a in handle.cond_axes]
    flat = np.zeros(n, dtype=np.int64)
    for s, size in zip(handle.cond_seqs, sizes):
        flat = flat * size + s
    req = handle.group_requirements()
    return [(np.flatnonzero(flat == g), req[g]) for g in range(req.shape[0]) if req[g].sum()]


def enumerate_class(handle: CondClassHandle, cap: int = ENUMERATION_CAP) -> np.ndarray:
    """Every member of the class as rows of flat target symbols.

    Raises when the class (or an intermediate product) exceeds ``cap``.
    """
    exact, _, _ = class_size(handle)
    if exact == 0:
        return np.zeros((0, handle.jt.n), dtype=np.int8)
    if exact > cap:
        raise ValueError(
            f"class size {exact} exceeds enumeration cap {cap}; "
            f"use a smaller blocklength or sample instead"
        )
    groups = _cond_groups(handle)
    parts = [(_multiset_permutations(req), pos) for pos, req in groups]
    total = 1
    for arr, _ in parts:
        total *= arr.shape[0]
    out = np.zeros((total, handle.jt.n), dtype=np.int8)
    reps = total
    for arr, pos in parts:
        k = arr.shape[0]
        reps //= k
        tile = total // (k * reps)
        idx = np.tile(np.repeat(np.arange(k), reps), tile)
        out[:, pos] = arr[idx]
    return out


def sample_uniform_cond(handle: CondClassHandle, seed) -> np.ndarray:
    """An exactly-uniform member of the class (flat target symbols).

    For each conditioning symbol the required output multiset is placed on
    that symbol's positions by a uniformly random permutation; the product
    of independent multiset shuffles is exactly uniform on the class.
    ``seed`` may be an int or a numpy Generator.
    """
    exact, _, _ = class_size(handle)
    if exact == 0:
        raise ValueError("cannot sample from an empty conditional type class")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.Generator(
        np.random.PCG64(int(seed) & 0xFFFFFFFFFFFFFFFF)
    )
    out = np.zeros(handle.jt.n, dtype=np.int64)
    for pos, req in _cond_groups(handle):
        symbols = np.repeat(np.arange(len(req)), req)
        out[pos] = rng.permutation(symbols)
    return out


def type_class_prob(P, t: JointType):
    """(exact P^n(T_t), lower bound) for an i.i.d. product measure.

    exact = |T_t| * prod_cells P(cell)^count; the lower bound is
    (n+1)^{-K} 2^{-n D(t/n || P)} with K the number of table cells.
    """
    from .probability import JointTable

    vals = P.values if isinstance(P, JointTable) else np.asarray(P, dtype=float)
    if vals.shape != t.counts.shape:
        raise ValueError("distribution shape must match the type")
    counts = t.counts.ravel()
    p = vals.ravel()
    if np.any((counts > 0) & (p <= 0.0)):
        exact = 0.0
        lower = 0.0
        return exact, lower
    handle = CondClassHandle(jt=t, cond_axes=(), target_axes=t.axes, cond_seqs=())
    size, _, _ = class_size(handle)
    log2p = float((counts[counts > 0] * np.log2(p[counts > 0])).sum())
    exact = float(2.0 ** (math.log2(size) + log2p)) if size else 0.0
    # D(t/n || P) in bits
    q = counts / t.n
    mask = q > 0
    dkl = float((q[mask] * (np.log2(q[mask]) - np.log2(p[mask]))).sum())
    lower = (t.n + 1.0) ** (-counts.size) * 2.0 ** (-t.n * dkl)
    return exact, lower
