"""Monte Carlo simulation of the matching-based achievability scheme.

The matched scheme at blocklength n, for a joint type over (u, x, y, z):
the encoder samples (u-sequence, message) by a scaled argmin over shared
exponential variates with uniform weights on T_{U|X}(x) x messages; the
decoder, holding the received message and y, runs the same argmin over
T_{U|Y}(y) with the message pinned, reusing the identical variates; the
reproduction is drawn uniformly from the conditional class of z given the
decoded u-sequence and y.  Shared variates are generated lazily and
deterministically from (trial seed, key): the key universe is
exponentially large, but each trial only touches its two supports.

Also simulated: the communication-free local-sampling scheme and, for the
AND-of-independent-bits source, the send-a-prefix time-sharing scheme
whose success probability is exactly (3/4)^(n - floor(R n)).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exponent import WZInstance
from .matching import SharedExpSource, _mix64_np, mix64, mismatch_bound
from .seqtypes import (
    CondClassHandle,
    JointType,
    _multiset_permutations,
    class_size,
    joint_type_of,
    type_class_prob,
)

__all__ = [
    "SchemeConfig",
    "TrialResult",
    "EstimateReport",
    "build_scheme",
    "run_trial",
    "estimate",
    "exact_pc_timesharing_and",
    "scheme_lower_bound",
    "wilson_interval",
]

KEY_UNIVERSE_CAP = 10 ** 6
MAX_N = 14
_WILSON_Z = 1.959963984540054  # two-sided 95%


def wilson_interval(successes: int, trials: int) -> tuple[float, float]:
    if trials <= 0:
        return 0.0, 1.0
    z2 = _WILSON_Z ** 2
    phat = successes / trials
    denom = 1.0 + z2 / trials
    center = (phat + z2 / (2 * trials)) / denom
    half = _WILSON_Z * math.sqrt(phat * (1 - phat) / trials + z2 / (4 * trials ** 2)) / denom
    return max(0.0, center - half), min(1.0, center + half)


def exact_pc_timesharing_and(n: int, R: float) -> float:
    """(3/4)^(n - floor(R n)): guessed AND coordinates each succeed w.p. 3/4."""
    if not 0.0 <= R <= 1.0:
        raise ValueError(f"rate {R} outside [0, 1]")
    k = int(math.floor(R * n + 1e-9))
    return 0.75 ** (n - k)


def _message_count(n: int, R: float) -> int:
    return max(1, int(math.floor(2.0 ** (n * R) + 1e-9)))


class _GroupedEnumerator:
    """Enumerates a conditional type class as pattern arrays per symbol group.

    The arrangements within each conditioning symbol's positions depend only
    on the required multiset, so they are precomputed once; per trial they
    are scattered into the actual positions of the conditioning sequence.
    """

    def __init__(self, per_symbol_counts):
        self.pats = [_multiset_permutations(c).astype(np.uint64) for c in per_symbol_counts]
        self.nums = [p.shape[0] for p in self.pats]
        self.total = 1
        for k in self.nums:
            self.total *= k
        self.expanded = []
        stride = self.total
        for pats, k in zip(self.pats, self.nums):
            stride //= k
            idx = (np.arange(self.total) // stride) % k
            self.expanded.append(pats[idx])  # (total, group_len), trial-independent

    def build(self, cond_seq: np.ndarray, n: int) -> np.ndarray:
        out = np.zeros((self.total, n), dtype=np.uint64)
        for s, rows in enumerate(self.expanded):
            pos = np.flatnonzero(cond_seq == s)
            if pos.size:
                out[:, pos] = rows
        return out


def _keyed_variates(src: SharedExpSource, useqs: np.ndarray, messages: np.ndarray) -> np.ndarray:
    """Variates for keys (u_1..u_n, m), one row per sequence, one column per m.

    Bit-identical to ``exp_variate(src, tuple(useq) + (m,))``: the chain over
    the blocks that involve only the length prefix and u digits is shared
    across messages and computed once per sequence.
    """
    k, n = useqs.shape
    r = n + 1  # components per key
    fields = np.empty((k, r + 1), dtype=np.uint64)
    fields[:, 0] = np.uint64(r)
    fields[:, 1 : n + 1] = useqs
    total_fields = r + 1 + ((r + 1) % 2)
    state = np.full(k, mix64(src.seed), dtype=np.uint64)
    last_start = total_fields - 2
    for i in range(0, last_start, 2):
        block = (fields[:, i] << np.uint64(32)) | fields[:, i + 1]
        state = _mix64_np(state ^ block)
    ms = np.asarray(messages, dtype=np.uint64)
    if last_start == n:  # n even: last block pairs (u_{n-1}, m)
        block = (fields[:, n, None] << np.uint64(32)) | ms[None, :]
    else:  # n odd: last block is (m, padding)
        block = np.broadcast_to((ms << np.uint64(32))[None, :], (k, ms.size)).copy()
        state = state  # prefix already covers every u digit
    final = _mix64_np(state[:, None] ^ block)
    u = ((final >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0 ** -53
    return -np.log(u)


def _argmin_key(values: np.ndarray, useqs: np.ndarray, messages: np.ndarray):
    """Flat argmin with canonical (sequence digits, message) tie-breaking."""
    vmin = values.min()
    flat = np.flatnonzero(values == vmin)
    if flat.size == 1:
        i, j = divmod(int(flat[0]), values.shape[1])
    else:
        cands = [divmod(int(f), values.shape[1]) for f in flat]
        i, j = min(cands, key=lambda ij: (tuple(useqs[ij[0]]), int(messages[ij[1]])))
    return i, int(messages[j])


class SchemeConfig:
    """A built scheme: instance, joint type, blocklength, rate, mode, and the
    precomputed class enumerators/samplers the trial loop needs."""

    def __init__(self, inst: WZInstance, joint_type: JointType | None, n: int, R: float, mode: str, xy_mode: str):
        self.inst = inst
        self.joint_type = joint_type
        self.n = n
        self.R = float(R)
        self.M_size = _message_count(n, R)
        self.mode = mode
        self.xy_mode = xy_mode

    @property
    def rate_of_code(self) -> float:
        return math.log2(self.M_size) / self.n


def build_scheme(
    inst: WZInstance,
    joint_type: JointType | None,
    n: int,
    R: float,
    mode: str = "matched",
    xy_mode: str = "uniform_on_type_class",
) -> SchemeConfig:
    """Materialize the per-symbol class enumerators and validate the type.

    For matched mode the key universe T_U x messages must stay under
    ``KEY_UNIVERSE_CAP``; larger requests fail with a suggestion to shrink n.
    """
    if mode not in ("matched", "naive", "timesharing_and"):
        raise ValueError(f"unknown mode {mode!r}")
    if xy_mode not in ("uniform_on_type_class", "iid_source"):
        raise ValueError(f"unknown xy_mode {xy_mode!r}")
    if n < 1:
        raise ValueError("blocklength must be positive")
    if n > MAX_N and mode != "timesharing_and":
        # type-class machinery only; the prefix scheme has no key universe
        raise ValueError(f"blocklength {n} above {MAX_N} for mode {mode!r}")
    cfg = SchemeConfig(inst, joint_type, n, R, mode, xy_mode)
    nx, ny, nz = inst.sizes

    if mode == "timesharing_and":
        if inst.sizes != (2, 2, 2):
            raise ValueError("time-sharing mode requires binary alphabets")
        want = np.array([[[0, 1], [0, 1]], [[0, 1], [1, 0]]], dtype=float)
        if not np.array_equal(inst.d, want):
            raise ValueError("time-sharing mode requires the AND disagreement distortion")
        return cfg

    if joint_type is None:
        raise ValueError("matched/naive modes require a joint type")
    if joint_type.axes != ("u", "x", "y", "z"):
        raise ValueError("joint type axes must be ('u', 'x', 'y', 'z')")
    if joint_type.n != n:
        raise ValueError(f"joint type blocklength {joint_type.n} != n = {n}")
    if joint_type.sizes[1:] != (nx, ny, nz):
        raise ValueError("joint type alphabet sizes must match the instance")
    if joint_type.expected(np.broadcast_to(inst.d[None], joint_type.sizes)) > inst.D + 1e-9:
        raise ValueError("joint type violates the distortion level")

    t = joint_type
    cfg.c_ux = t.marginal(("u", "x")).counts
    cfg.c_uy = t.marginal(("u", "y")).counts
    cfg.c_x = t.marginal(("x",)).counts
    cfg.c_y = t.marginal(("y",)).counts
    cfg.c_xy = t.marginal(("x", "y")).counts
    cfg.c_uyz = t.marginal(("u", "y", "z")).counts
    usz = t.sizes[0]

    u_handle = CondClassHandle(jt=t.marginal(("u",)), cond_axes=(), target_axes=("u",), cond_seqs=())
    t_u_size, _, _ = class_size(u_handle)
    if mode == "matched" and t_u_size * cfg.M_size > KEY_UNIVERSE_CAP:
        raise ValueError(
            f"key universe |T_U| * M = {t_u_size * cfg.M_size} exceeds "
            f"{KEY_UNIVERSE_CAP}; use a smaller blocklength"
        )
    cfg.enc = _GroupedEnumerator([cfg.c_ux[:, s] for s in range(nx)])
    cfg.dec = _GroupedEnumerator([cfg.c_uy[:, s] for s in range(ny)])
    cfg.z_req = [cfg.c_uyz[u_, y_, :] for u_ in range(usz) for y_ in range(ny)]
    cfg.type_flat = t.counts.ravel()
    if mode == "matched" and cfg.enc.total * cfg.M_size > KEY_UNIVERSE_CAP:
        raise ValueError("per-trial encoder support exceeds the enumeration cap; shrink n")
    # multiset of (x, y) pair symbols for uniform type-class sampling
    pairs = []
    for x in range(nx):
        for y in range(ny):
            pairs.extend([x * ny + y] * int(cfg.c_xy[x, y]))
    cfg.xy_pairs = np.array(pairs, dtype=np.int64)
    # exact per-trial disagreement bound of the coupling (constant: class
    # sizes depend only on the type): p = 1/(enc * M), q = 1/dec
    if mode == "matched":
        cfg.couple_bound = mismatch_bound(1.0 / (cfg.enc.total * cfg.M_size), 1.0 / cfg.dec.total)
    return cfg


@dataclass(frozen=True)
class TrialResult:
    success: bool
    matched: bool
    distortion: float
    landed: bool
    enc_in_dec_support: bool


def _draw_xy(cfg: SchemeConfig, rng: np.random.Generator):
    nx, ny, _ = cfg.inst.sizes
    if cfg.xy_mode == "uniform_on_type_class":
        flat = rng.permutation(cfg.xy_pairs)
    else:
        flat = rng.choice(nx * ny, size=cfg.n, p=cfg.inst.p_xy.values.ravel())
    return flat // ny, flat % ny


def _sample_cond_groups(cond_flat: np.ndarray, req_per_symbol, n: int, rng: np.random.Generator):
    out = np.zeros(n, dtype=np.int64)
    for s, req in enumerate(req_per_symbol):
        pos = np.flatnonzero(cond_flat == s)
        if pos.size:
            out[pos] = rng.permutation(np.repeat(np.arange(len(req)), req))
    return out


def run_trial(cfg: SchemeConfig, trial_seed: int) -> TrialResult:
    """One independent trial: draw the source block, run the scheme, score.

    Pure in (cfg, trial_seed); identical inputs give identical outcomes.
    """
    root = SharedExpSource(trial_seed)
    rng_xy = np.random.Generator(np.random.PCG64(root.child_seed(11)))
    n = cfg.n
    d = cfg.inst.d

    if cfg.mode == "timesharing_and":
        x = rng_xy.integers(0, 2, size=n)
        y = rng_xy.integers(0, 2, size=n)
        k = int(math.floor(cfg.R * n + 1e-9))
        z = np.where(np.arange(n) < k, x & y, 0)
        dn = int(((x & y) != z).sum())
        success = dn <= n * cfg.inst.D + 1e-9
        return TrialResult(success, True, dn / n, success, True)

    x, y = _draw_xy(cfg, rng_xy)
    nx, ny, nz = cfg.inst.sizes
    x_counts = np.bincount(x, minlength=nx)
    y_counts = np.bincount(y, minlength=ny)
    if not (np.array_equal(x_counts, cfg.c_x) and np.array_equal(y_counts, cfg.c_y)):
        # off the designated marginal classes: counted as failure
        return TrialResult(False, False, math.nan, False, False)

    rng_z = np.random.Generator(np.random.PCG64(root.child_seed(12)))
    if cfg.mode == "naive":
        rng_dec = np.random.Generator(np.random.PCG64(root.child_seed(13)))
        u_hat = _sample_cond_groups(y, [cfg.c_uy[:, s] for s in range(ny)], n, rng_dec)
        u_check = u_hat
        matched = False
        in_support = True
    else:
        shared = SharedExpSource(root.child_seed(10))
        enc_seqs = cfg.enc.build(x, n)
        venc = _keyed_variates(shared, enc_seqs, np.arange(cfg.M_size))
        i_enc, m_sent = _argmin_key(venc, enc_seqs, np.arange(cfg.M_size))
        u_check = enc_seqs[i_enc]
        dec_seqs = cfg.dec.build(y, n)
        vdec = _keyed_variates(shared, dec_seqs, np.array([m_sent]))
        i_dec, _ = _argmin_key(vdec, dec_seqs, np.array([m_sent]))
        u_hat = dec_seqs[i_dec]
        matched = bool(np.array_equal(u_check, u_hat))
        uy_counts = np.bincount(u_check.astype(np.int64) * ny + y, minlength=cfg.c_uy.size)
        in_support = bool(np.array_equal(uy_counts, cfg.c_uy.ravel()))

    u_hat = u_hat.astype(np.int64)
    u_check = u_check.astype(np.int64)
    pair_flat = u_hat * ny + y
    z = _sample_cond_groups(pair_flat, cfg.z_req, n, rng_z)
    dn = float(d[x, y, z].sum())
    success = dn <= n * cfg.inst.D + 1e-9
    flat_idx = ((u_check * nx + x) * ny + y) * nz + z
    landed = bool(np.array_equal(np.bincount(flat_idx, minlength=cfg.type_flat.size), cfg.type_flat))
    if matched and landed:
        # empirical joint equals the type, whose average distortion is <= D
        assert success, "landed in the designated class but exceeded distortion"
    return TrialResult(success, matched, dn / n, landed, in_support)


@dataclass(frozen=True)
class EstimateReport:
    trials: int
    successes: int
    p_c_hat: float
    ci_lo: float
    ci_hi: float
    exponent_hat: float
    lower_bound: float
    bound_satisfied: bool
    matched_count: int
    in_support_count: int
    mismatch_given_support: float
    couple_bound: float


def scheme_lower_bound(cfg: SchemeConfig) -> float:
    """The explicit finite-n lower bound on the success probability.

    Instantiated with the joint type's information quantities and the
    polynomial prefactors; for i.i.d. source draws the bound is multiplied
    by the exact probability of the designated (x, y) type class.
    """
    if cfg.mode == "timesharing_and":
        return exact_pc_timesharing_and(cfg.n, cfg.R)
    t = cfg.joint_type
    usz, nx, ny, nz = t.sizes
    n = cfg.n
    h = t.group_entropy
    sm1 = h(("u", "x")) + h(("x", "y")) - h(("x",)) - h(("u", "x", "y"))
    sm2 = h(("u", "x", "y")) + h(("u", "y", "z")) - h(("u", "y")) - h(("u", "x", "y", "z"))
    gap = h(("x",)) - h(("u", "x")) - h(("y",)) + h(("u", "y")) - cfg.rate_of_code
    if cfg.mode == "matched":
        expo = sm1 + sm2 + max(gap, 0.0)
        poly = 0.5 * (n + 1.0) ** (-(usz * nx * (ny * (nz + 1) + 1)))
    else:  # naive
        i_uxgy = h(("u", "y")) + h(("x", "y")) - h(("y",)) - h(("u", "x", "y"))
        expo = i_uxgy + sm2
        poly = (n + 1.0) ** (-(usz * nx * ny * (nz + 1)))
    bound = poly * 2.0 ** (-n * expo)
    if cfg.xy_mode == "iid_source":
        exact, _ = type_class_prob(cfg.inst.p_xy.values, t.marginal(("x", "y")))
        bound *= exact
    return bound


def estimate(cfg: SchemeConfig, trials: int, master_seed: int) -> EstimateReport:
    """Aggregate independent trials; per-trial seeds derive from the master
    seed and trial index only, so the report is reproducible and independent
    of any parallel scheduling."""
    if trials < 1:
        raise ValueError("at least one trial required")
    root = SharedExpSource(master_seed)
    successes = matched = in_support = mismatched_in = 0
    for i in range(trials):
        res = run_trial(cfg, root.child_seed(1, i))
        successes += res.success
        matched += res.matched
        if res.enc_in_dec_support and cfg.mode == "matched":
            in_support += 1
            mismatched_in += not res.matched
    phat = successes / trials
    lo, hi = wilson_interval(successes, trials)
    bound = scheme_lower_bound(cfg)
    exponent_hat = math.inf if phat == 0.0 else -math.log2(phat) / cfg.n
    mis_rate = mismatched_in / in_support if in_support else 0.0
    return EstimateReport(
        trials=trials,
        successes=successes,
        p_c_hat=phat,
        ci_lo=lo,
        ci_hi=hi,
        exponent_hat=exponent_hat,
        lower_bound=bound,
        bound_satisfied=hi >= bound,
        matched_count=matched,
        in_support_count=in_support,
        mismatch_given_support=mis_rate,
        couple_bound=getattr(cfg, "couple_bound", 1.0),
    )
