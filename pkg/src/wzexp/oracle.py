"""Exact brute-force minimum exponent over all deterministic codes at tiny
blocklengths, and the converse check against the optimized single-letter
exponent.

For a fixed encoder the optimal decoder decomposes across (message, y-block)
cells: pick the reproduction block maximizing the success mass of that cell.
That collapses the decoder enumeration entirely, leaving |M|^(|X|^n)
encoders, each scored by a cheap inner maximization.  The maximum success
probability over stochastic codes is attained by a deterministic one
(success probability is affine in each single kernel entry), so the search
over deterministic codes is exhaustive in the relevant sense.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .exponent import WZInstance, optimize_fstar

__all__ = [
    "Code",
    "pc_exact",
    "min_exponent_bruteforce",
    "check_converse",
    "ConverseReport",
    "timesharing_and_code",
]

PC_ENUM_CAP = 10 ** 7
SEARCH_CAP = 10 ** 8


def _powers(base: int, n: int) -> np.ndarray:
    return base ** np.arange(n - 1, -1, -1, dtype=np.int64)


def _all_blocks(base: int, n: int) -> np.ndarray:
    """All length-n blocks over {0..base-1} as rows, in index order."""
    idx = np.arange(base ** n, dtype=np.int64)
    out = np.empty((base ** n, n), dtype=np.int64)
    for j in range(n):
        out[:, j] = (idx // base ** (n - 1 - j)) % base
    return out


@dataclass(frozen=True)
class Code:
    """Explicit tables: encoder over x-blocks, decoder over (message, y-block).

    Blocks are indexed by their base-|alphabet| integer encodings; decoder
    entries are z-block indices.
    """

    n: int
    M: int
    encoder: np.ndarray
    decoder: np.ndarray

    def __post_init__(self):
        enc = np.asarray(self.encoder, dtype=np.int64)
        dec = np.asarray(self.decoder, dtype=np.int64)
        if self.M < 1:
            raise ValueError("at least one message required")
        if enc.ndim != 1 or dec.shape[0] != self.M:
            raise ValueError("encoder must be a vector, decoder (M, |Y|^n)")
        if enc.min(initial=0) < 0 or enc.max(initial=0) >= self.M:
            raise ValueError("encoder values must lie in [0, M)")
        enc.setflags(write=False)
        dec.setflags(write=False)
        object.__setattr__(self, "encoder", enc)
        object.__setattr__(self, "decoder", dec)


def _success_table(inst: WZInstance, n: int) -> np.ndarray:
    """W[x-block, y-block, z-block] = P^n(x,y) * 1[d_n <= n D]."""
    nx, ny, nz = inst.sizes
    if (nx * ny) ** n > PC_ENUM_CAP:
        raise ValueError(f"(|X||Y|)^n = {(nx * ny) ** n} exceeds {PC_ENUM_CAP}")
    xb = _all_blocks(nx, n)
    yb = _all_blocks(ny, n)
    zb = _all_blocks(nz, n)
    logp = np.full((nx, ny), -np.inf)
    pos = inst.p_xy.values > 0
    logp[pos] = np.log(inst.p_xy.values[pos])
    lp = logp[xb[:, None, :], yb[None, :, :]].sum(axis=2)
    pxy = np.where(np.isfinite(lp), np.exp(lp), 0.0)
    dn = inst.d[xb[:, None, :, None], yb[None, :, :, None], zb.T[None, None, :, :]].sum(axis=2)
    ok = dn <= n * inst.D + 1e-9
    return pxy[:, :, None] * ok


def pc_exact(code: Code, inst: WZInstance) -> float:
    """Exact success probability of an explicit code under the i.i.d. source."""
    nx, ny, nz = inst.sizes
    n = code.n
    if code.encoder.shape[0] != nx ** n or code.decoder.shape[1] != ny ** n:
        raise ValueError("code table sizes do not match the instance alphabets")
    w = _success_table(inst, n)
    total = 0.0
    for yi in range(ny ** n):
        z_for_m = code.decoder[:, yi]
        total += float(w[np.arange(nx ** n), yi, z_for_m[code.encoder]].sum())
    return total


def min_exponent_bruteforce(inst: WZInstance, n: int, M: int):
    """Exact min over codes of (1/n) log2(1 / P_c) at rate (1/n) log2 M.

    Returns (value, best Code); ties go to the lexicographically first
    encoder (and lowest z-block index inside each decoder cell).
    """
    nx, ny, nz = inst.sizes
    n_enc = M ** (nx ** n)
    work = n_enc * (M * ny ** n * nz ** n)
    if work > SEARCH_CAP:
        raise ValueError(f"search space {work} exceeds {SEARCH_CAP}")
    w = _success_table(inst, n)  # (X^n, Y^n, Z^n)
    best_pc = -1.0
    best_code = None
    for enc in itertools.product(range(M), repeat=nx ** n):
        enc_arr = np.asarray(enc, dtype=np.int64)
        g = np.zeros((M, ny ** n, nz ** n))
        np.add.at(g, enc_arr, w)
        per_cell = g.max(axis=2)
        pc = float(per_cell.sum())
        if pc > best_pc + 1e-15:
            best_pc = pc
            best_code = Code(n=n, M=M, encoder=enc_arr, decoder=np.argmax(g, axis=2))
    value = math.inf if best_pc <= 0.0 else math.log2(1.0 / best_pc) / n
    return value, best_code


@dataclass(frozen=True)
class ConverseReport:
    n: int
    M: int
    rate: float
    fn_value: float
    fstar_value: float
    slack: float
    ok: bool
    best_code: Code


def check_converse(inst: WZInstance, n: int, M: int, *, slack: float = 1e-3, **opt_kwargs) -> ConverseReport:
    """Verify the every-code inequality F^(n) >= F* - slack at R = log2(M)/n.

    The slack absorbs optimizer sub-optimality only; the optimizer reports
    an upper bound on the true minimum, so genuine violations would surface.
    """
    rate = math.log2(M) / n
    fn_value, best_code = min_exponent_bruteforce(inst.with_rate(rate), n, M)
    point = optimize_fstar(inst.with_rate(rate), **opt_kwargs)
    ok = fn_value >= point.total - slack
    return ConverseReport(
        n=n,
        M=M,
        rate=rate,
        fn_value=fn_value,
        fstar_value=point.total,
        slack=slack,
        ok=ok,
        best_code=best_code,
    )


def timesharing_and_code(n: int, R: float) -> Code:
    """The send-a-prefix code for the AND source as explicit tables.

    The message carries the first floor(R n) bits of x; the decoder outputs
    bit AND for the received prefix and zero for the guessed suffix.
    """
    if not 0.0 <= R <= 1.0:
        raise ValueError(f"rate {R} outside [0, 1]")
    k = int(math.floor(R * n + 1e-9))
    m_count = 2 ** k
    xb = _all_blocks(2, n)
    yb = _all_blocks(2, n)
    pw = _powers(2, n)
    encoder = (xb[:, :k] @ (2 ** np.arange(k - 1, -1, -1, dtype=np.int64))) if k else np.zeros(
        2 ** n, dtype=np.int64
    )
    decoder = np.zeros((m_count, 2 ** n), dtype=np.int64)
    for m in range(m_count):
        xbits = np.array([(m >> (k - 1 - j)) & 1 for j in range(k)], dtype=np.int64)
        z = np.zeros((2 ** n, n), dtype=np.int64)
        if k:
            z[:, :k] = xbits[None, :] & yb[:, :k]
        decoder[m] = z @ pw
    return Code(n=n, M=m_count, encoder=np.asarray(encoder, dtype=np.int64), decoder=decoder)
