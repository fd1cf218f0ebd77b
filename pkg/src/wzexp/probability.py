"""Finite-alphabet probability tables and information measures.

Everything downstream (exponent optimization, method-of-types machinery,
simulators, oracles) works with joint distributions over small named
product alphabets.  This module provides the immutable table/channel
containers and the entropy-family operations on them.

Conventions:
  * all information quantities are in bits (base-2 logarithms),
  * 0 * log 0 = 0,
  * p * log(p/0) = +inf (returned as ``math.inf``),
  * tables are validated to sum to one within ``NORM_TOL`` on construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

NORM_TOL = 1e-12

__all__ = [
    "Alphabet",
    "JointTable",
    "Channel",
    "make_table",
    "entropy",
    "kl_divergence",
    "mutual_information",
    "cond_mutual_information",
    "marginalize",
    "condition",
    "compose",
]


@dataclass(frozen=True)
class Alphabet:
    """A finite alphabet with optional symbol labels."""

    size: int
    labels: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.size < 1:
            raise ValueError(f"alphabet size must be >= 1, got {self.size}")
        if self.labels is not None:
            if len(self.labels) != self.size:
                raise ValueError("label count must equal alphabet size")
            if len(set(self.labels)) != len(self.labels):
                raise ValueError("labels must be distinct")


def _freeze(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr, dtype=float)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class JointTable:
    """A table of non-negative reals on a named product alphabet.

    ``axes`` is an ordered tuple of ``(name, Alphabet)`` pairs matching the
    shape of ``values``.  When ``normalized`` (the default) the entries must
    sum to one within ``NORM_TOL``.
    """

    axes: tuple[tuple[str, Alphabet], ...]
    values: np.ndarray
    normalized: bool = True

    def __post_init__(self):
        axes = tuple((str(n), a) for n, a in self.axes)
        names = [n for n, _ in axes]
        if len(set(names)) != len(names):
            raise ValueError(f"axis names must be unique, got {names}")
        vals = np.asarray(self.values, dtype=float)
        shape = tuple(a.size for _, a in axes)
        if vals.shape != shape:
            raise ValueError(f"values shape {vals.shape} does not match axes {shape}")
        if vals.size and vals.min() < -1e-15:
            raise ValueError(f"negative entry {vals.min()} in table")
        vals = np.maximum(vals, 0.0)
        if self.normalized:
            total = vals.sum()
            if abs(total - 1.0) > NORM_TOL:
                raise ValueError(f"table sums to {total!r}, not 1 within {NORM_TOL}")
        object.__setattr__(self, "axes", axes)
        object.__setattr__(self, "values", _freeze(vals))

    # -- structural helpers --------------------------------------------------

    @property
    def axis_names(self) -> tuple[str, ...]:
        return tuple(n for n, _ in self.axes)

    def axis_index(self, name: str) -> int:
        for i, (n, _) in enumerate(self.axes):
            if n == name:
                return i
        raise KeyError(f"unknown axis {name!r}; have {self.axis_names}")

    def alphabet(self, name: str) -> Alphabet:
        return self.axes[self.axis_index(name)][1]

    def reorder(self, names: tuple[str, ...]) -> "JointTable":
        """Return the same table with axes permuted to ``names``."""
        if set(names) != set(self.axis_names) or len(names) != len(self.axes):
            raise ValueError(f"cannot reorder {self.axis_names} to {names}")
        perm = tuple(self.axis_index(n) for n in names)
        return JointTable(
            axes=tuple(self.axes[i] for i in perm),
            values=np.transpose(self.values, perm),
            normalized=self.normalized,
        )


def make_table(values, names, normalized: bool = True) -> JointTable:
    """Build a JointTable from a bare array, inferring alphabets from shape."""
    vals = np.asarray(values, dtype=float)
    names = tuple(names)
    if vals.ndim != len(names):
        raise ValueError(f"{len(names)} axis names for a {vals.ndim}-d array")
    axes = tuple((n, Alphabet(s)) for n, s in zip(names, vals.shape))
    return JointTable(axes=axes, values=vals, normalized=normalized)


@dataclass(frozen=True)
class Channel:
    """A conditional distribution P(outputs | inputs).

    ``values`` has shape (inputs..., outputs...); every input slice sums to
    one within ``NORM_TOL``.  Input slices of the source table that carried
    zero mass are filled uniformly and recorded in ``zero_mass_inputs``.
    """

    input_axes: tuple[tuple[str, Alphabet], ...]
    output_axes: tuple[tuple[str, Alphabet], ...]
    values: np.ndarray
    zero_mass_inputs: tuple[tuple[int, ...], ...] = field(default=())

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        shape = tuple(a.size for _, a in self.input_axes) + tuple(
            a.size for _, a in self.output_axes
        )
        if vals.shape != shape:
            raise ValueError(f"channel shape {vals.shape}, expected {shape}")
        if vals.size and vals.min() < -1e-15:
            raise ValueError("negative channel entry")
        vals = np.maximum(vals, 0.0)
        n_in = len(self.input_axes)
        sums = vals.sum(axis=tuple(range(n_in, vals.ndim)))
        if not np.allclose(sums, 1.0, rtol=0.0, atol=1e-9):
            raise ValueError("conditional slices must each sum to 1")
        object.__setattr__(self, "values", _freeze(vals))

    @property
    def input_names(self) -> tuple[str, ...]:
        return tuple(n for n, _ in self.input_axes)

    @property
    def output_names(self) -> tuple[str, ...]:
        return tuple(n for n, _ in self.output_axes)


# -- information measures ----------------------------------------------------


def _plogp(vals: np.ndarray) -> float:
    pos = vals[vals > 0.0]
    return float(-(pos * np.log2(pos)).sum())


def entropy(p: JointTable) -> float:
    """Shannon entropy of the full table, in bits."""
    if not p.normalized:
        raise ValueError("entropy requires a normalized table")
    return _plogp(p.values)


def entropy_of(p: JointTable, names) -> float:
    """Entropy of the marginal on the given axis names (empty -> 0)."""
    names = tuple(names)
    if not names:
        return 0.0
    return entropy(marginalize(p, names))


def kl_divergence(p: JointTable, q: JointTable) -> float:
    """D(p || q) in bits; +inf when p puts mass outside q's support."""
    if set(p.axis_names) != set(q.axis_names):
        raise ValueError(f"axis mismatch: {p.axis_names} vs {q.axis_names}")
    q = q.reorder(p.axis_names)
    for (n, a), (_, b) in zip(p.axes, q.axes):
        if a.size != b.size:
            raise ValueError(f"axis {n!r} has sizes {a.size} vs {b.size}")
    pv, qv = p.values.ravel(), q.values.ravel()
    mask = pv > 0.0
    if np.any(qv[mask] <= 0.0):
        return math.inf
    return float((pv[mask] * (np.log2(pv[mask]) - np.log2(qv[mask]))).sum())


def cond_mutual_information(p: JointTable, group_a, group_b, group_c=()) -> float:
    """I(A ; B | C) in bits, from entropies of marginals.

    ``group_c`` may be empty, in which case this is the plain mutual
    information I(A ; B).  The groups must be disjoint subsets of the axes.
    """
    a, b, c = tuple(group_a), tuple(group_b), tuple(group_c)
    for g in (a, b, c):
        for n in g:
            p.axis_index(n)
    if set(a) & set(b) or set(a) & set(c) or set(b) & set(c):
        raise ValueError(f"groups must be disjoint: {a}, {b}, {c}")
    h_ac = entropy_of(p, a + c)
    h_bc = entropy_of(p, b + c)
    h_c = entropy_of(p, c)
    h_abc = entropy_of(p, a + b + c)
    return h_ac + h_bc - h_c - h_abc


def mutual_information(p: JointTable, group_a, group_b) -> float:
    return cond_mutual_information(p, group_a, group_b, ())


# -- table surgery -----------------------------------------------------------


def marginalize(p: JointTable, keep) -> JointTable:
    """Sum out every axis not in ``keep`` (kept axes stay in original order)."""
    keep = tuple(keep)
    for n in keep:
        p.axis_index(n)
    keep_set = set(keep)
    drop = tuple(i for i, (n, _) in enumerate(p.axes) if n not in keep_set)
    vals = p.values.sum(axis=drop) if drop else p.values
    axes = tuple(ax for ax in p.axes if ax[0] in keep_set)
    return JointTable(axes=axes, values=np.asarray(vals), normalized=p.normalized)


def condition(p: JointTable, given) -> Channel:
    """Split ``p`` into the channel P(rest | given).

    Conditioning slices with zero mass are filled with the uniform
    distribution and reported via ``zero_mass_inputs``.
    """
    given = tuple(given)
    for n in given:
        p.axis_index(n)
    given_set = set(given)
    out_names = tuple(n for n in p.axis_names if n not in given_set)
    if not out_names:
        raise ValueError("conditioning on every axis leaves no output axes")
    ordered = p.reorder(given + out_names)
    n_in = len(given)
    vals = ordered.values.copy()
    in_shape = vals.shape[:n_in]
    out_size = int(np.prod(vals.shape[n_in:], dtype=int))
    flat = vals.reshape(in_shape + (out_size,))
    sums = flat.sum(axis=-1)
    zero = sums <= 0.0
    flat = np.where(zero[..., None], 1.0 / out_size, flat / np.where(zero, 1.0, sums)[..., None])
    zero_inputs = tuple(tuple(int(i) for i in idx) for idx in np.argwhere(zero))
    in_axes = ordered.axes[:n_in]
    out_axes = ordered.axes[n_in:]
    return Channel(
        input_axes=in_axes,
        output_axes=out_axes,
        values=flat.reshape(vals.shape),
        zero_mass_inputs=zero_inputs,
    )


def compose(p: JointTable, ch: Channel) -> JointTable:
    """Product measure p(w) * ch(out | in) on the union of axes.

    The channel's input axes must already be axes of ``p``; its output axes
    are appended.  The result is normalized whenever ``p`` is.
    """
    for n, a in ch.input_axes:
        if p.alphabet(n).size != a.size:
            raise ValueError(f"axis {n!r} size mismatch between table and channel")
    for n, _ in ch.output_axes:
        if n in p.axis_names:
            raise ValueError(f"output axis {n!r} already present in table")
    letters = {}
    for i, n in enumerate(p.axis_names + ch.output_names):
        letters[n] = chr(ord("a") + i)
    p_sub = "".join(letters[n] for n in p.axis_names)
    ch_sub = "".join(letters[n] for n in ch.input_names + ch.output_names)
    out_names = p.axis_names + ch.output_names
    out_sub = "".join(letters[n] for n in out_names)
    vals = np.einsum(f"{p_sub},{ch_sub}->{out_sub}", p.values, ch.values)
    axes = p.axes + ch.output_axes
    return JointTable(axes=axes, values=vals, normalized=p.normalized)
