"""The strong-converse exponent objective, its minimization, and the
closed-form special cases.

The central quantity is, for a source P_XY, distortion table d, rate R and
distortion level D, the minimum over joint distributions p on U x X x Y x Z
with E_p[d] <= D of

    D(p_XY || P_XY) + I(U;Y|X) + I(Z;X|U,Y) + max(I(U;X) - I(U;Y) - R, 0),

equivalently (the two Markov-deviation terms fold into a single divergence
against the reference built from p's own conditionals)

    D(p || P_{Z|UY} P_{U|X} P_XY) + max(I(U;X) - I(U;Y) - R, 0).

The minimization is nonconvex; it is attacked by a batched multi-start
gradient descent over logit parametrizations, with the positive-part kink
split into two smooth penalized branches and the distortion constraint
enforced exactly (support restriction at D = 0, linear mixing repair at
D > 0).  All reported values are objective values of explicitly feasible
points, hence true upper bounds on the minimum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .descent import LOG2E, group_entropy, minimize_batch, softmax_rows
from .matching import SharedExpSource
from .probability import (
    JointTable,
    compose,
    cond_mutual_information,
    condition,
    kl_divergence,
    make_table,
    marginalize,
)

__all__ = [
    "WZInstance",
    "ExponentPoint",
    "AndExample",
    "RdResult",
    "and_instance",
    "slepian_wolf_instance",
    "function_computation_instance",
    "binary_entropy",
    "objective_terms",
    "naive_upper_value",
    "optimize_fstar",
    "optimize_fstar_with_candidates",
    "rd_wyner_ziv",
    "fstar_slepian_wolf",
    "fstar_function_computation",
    "and_example",
    "and_conditional_mi",
    "cardinality_functionals",
]

LOG2_3 = math.log2(3.0)


def binary_entropy(t: float) -> float:
    """h(t) in bits, with h(0) = h(1) = 0."""
    if t < -1e-12 or t > 1.0 + 1e-12:
        raise ValueError(f"binary_entropy argument {t} outside [0, 1]")
    t = min(max(t, 0.0), 1.0)
    if t in (0.0, 1.0):
        return 0.0
    return -t * math.log2(t) - (1.0 - t) * math.log2(1.0 - t)


# -- problem instances ---------------------------------------------------------


@dataclass(frozen=True)
class WZInstance:
    """A source P_XY, distortion table d(x,y,z), rate R, distortion level D.

    Feasibility demands a per-(x,y) reproduction choice meeting the level:
    sum_xy P(x,y) min_z d(x,y,z) <= D.
    """

    p_xy: JointTable
    d: np.ndarray
    R: float
    D: float

    def __post_init__(self):
        p = self.p_xy if isinstance(self.p_xy, JointTable) else make_table(self.p_xy, ("x", "y"))
        if p.axis_names != ("x", "y"):
            p = p.reorder(("x", "y"))
        d = np.asarray(self.d, dtype=float)
        if d.ndim != 3 or d.shape[:2] != p.values.shape:
            raise ValueError(f"distortion shape {d.shape} incompatible with source {p.values.shape}")
        if d.min() < 0.0:
            raise ValueError("distortion entries must be non-negative")
        if self.R < 0.0 or self.D < 0.0:
            raise ValueError("R and D must be non-negative")
        feas = float((p.values * d.min(axis=2)).sum())
        if feas > self.D + 1e-12:
            raise ValueError(
                f"infeasible distortion level: best achievable E[d] is {feas} > D = {self.D}"
            )
        d = d.copy()
        d.setflags(write=False)
        object.__setattr__(self, "p_xy", p)
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "R", float(self.R))
        object.__setattr__(self, "D", float(self.D))

    @property
    def sizes(self) -> tuple[int, int, int]:
        nx, ny = self.p_xy.values.shape
        return nx, ny, self.d.shape[2]

    def with_rate(self, R: float) -> "WZInstance":
        return WZInstance(p_xy=self.p_xy, d=self.d, R=R, D=self.D)

    def source_min_distortion(self) -> float:
        return float((self.p_xy.values * self.d.min(axis=2)).sum())


def and_instance(R: float, D: float = 0.0) -> WZInstance:
    """Uniform independent bits, decoder must reproduce x AND y exactly."""
    p = make_table(np.full((2, 2), 0.25), ("x", "y"))
    d = np.zeros((2, 2, 2))
    for x in range(2):
        for y in range(2):
            for z in range(2):
                d[x, y, z] = 0.0 if z == (x & y) else 1.0
    return WZInstance(p_xy=p, d=d, R=R, D=D)


def slepian_wolf_instance(p_xy, R: float) -> WZInstance:
    """Lossless reproduction of x with side-information y (z alphabet = x's)."""
    p = p_xy if isinstance(p_xy, JointTable) else make_table(p_xy, ("x", "y"))
    nx, ny = p.values.shape
    d = np.ones((nx, ny, nx))
    for x in range(nx):
        d[x, :, x] = 0.0
    return WZInstance(p_xy=p, d=d, R=R, D=0.0)


def function_computation_instance(p_xy, f, R: float, z_size: int | None = None) -> WZInstance:
    """Decoder must reproduce f(x, y) exactly in every coordinate."""
    p = p_xy if isinstance(p_xy, JointTable) else make_table(p_xy, ("x", "y"))
    f = np.asarray(f, dtype=int)
    nx, ny = p.values.shape
    if f.shape != (nx, ny):
        raise ValueError("function table must have shape (|X|, |Y|)")
    nz = z_size if z_size is not None else int(f.max()) + 1
    d = np.ones((nx, ny, nz))
    for x in range(nx):
        for y in range(ny):
            d[x, y, f[x, y]] = 0.0
    return WZInstance(p_xy=p, d=d, R=R, D=0.0)


# -- objective evaluation ------------------------------------------------------


@dataclass(frozen=True)
class ExponentPoint:
    """A joint distribution with its objective-term breakdown.

    total = kl_term + soft_markov_1 + soft_markov_2 + max(rate_gap, 0),
    where rate_gap = I(U;X) - I(U;Y) - R.
    """

    dist: JointTable
    kl_term: float
    soft_markov_1: float
    soft_markov_2: float
    rate_gap: float
    total: float
    distortion: float

    def __post_init__(self):
        parts = (self.kl_term, self.soft_markov_1, self.soft_markov_2)
        if all(math.isfinite(v) for v in parts):
            want = sum(parts) + max(self.rate_gap, 0.0)
            if abs(self.total - want) > 1e-10:
                raise ValueError(f"inconsistent total {self.total} vs terms {want}")


def _entropy_np(arr: np.ndarray, axes: tuple[int, ...]) -> float:
    if not axes:
        return 0.0
    comp = tuple(i for i in range(arr.ndim) if i not in axes)
    m = arr.sum(axis=comp) if comp else arr
    m = m.ravel()
    m = m[m > 0.0]
    return float(-(m * np.log2(m)).sum())


def _terms_from_array(p4: np.ndarray, inst: WZInstance):
    """(kl, sm1, sm2, gap, total, distortion) for a joint array (u,x,y,z)."""
    pxy = p4.sum(axis=(0, 3))
    base = inst.p_xy.values
    mask = pxy > 0.0
    if np.any(base[mask] <= 0.0):
        kl = math.inf
    else:
        kl = float((pxy[mask] * (np.log2(pxy[mask]) - np.log2(base[mask]))).sum())
    h = lambda axes: _entropy_np(p4, axes)
    sm1 = max(h((0, 1)) + h((1, 2)) - h((1,)) - h((0, 1, 2)), 0.0)
    sm2 = max(h((0, 1, 2)) + h((0, 2, 3)) - h((0, 2)) - h((0, 1, 2, 3)), 0.0)
    gap = h((1,)) - h((0, 1)) - h((2,)) + h((0, 2)) - inst.R
    total = kl + sm1 + sm2 + max(gap, 0.0)
    distortion = float((p4 * inst.d[None, :, :, :]).sum())
    return kl, sm1, sm2, gap, total, distortion


def _point_from_array(p4: np.ndarray, inst: WZInstance) -> ExponentPoint:
    kl, sm1, sm2, gap, total, dist = _terms_from_array(p4, inst)
    table = make_table(p4, ("u", "x", "y", "z"))
    return ExponentPoint(
        dist=table,
        kl_term=kl,
        soft_markov_1=sm1,
        soft_markov_2=sm2,
        rate_gap=gap,
        total=total,
        distortion=dist,
    )


def objective_terms(p: JointTable, inst: WZInstance) -> ExponentPoint:
    """Evaluate all objective terms of a joint distribution on (u,x,y,z).

    The decomposed total is cross-checked against the divergence form
    D(p || P_{Z|UY} P_{U|X} P_XY) + max(rate_gap, 0).
    """
    nx, ny, nz = inst.sizes
    p = p.reorder(("u", "x", "y", "z"))
    if p.values.shape[1:] != (nx, ny, nz):
        raise ValueError(f"table shape {p.values.shape} does not match instance {inst.sizes}")
    if not p.normalized:
        raise ValueError("objective_terms requires a normalized table")
    point = _point_from_array(p.values, inst)
    if math.isfinite(point.kl_term):
        ch_u = condition(marginalize(p, ("u", "x")), given=("x",))
        ch_z = condition(marginalize(p, ("u", "y", "z")), given=("u", "y"))
        ref = compose(compose(inst.p_xy, ch_u), ch_z)
        div = kl_divergence(p, ref)
        decomposed = point.kl_term + point.soft_markov_1 + point.soft_markov_2
        if math.isfinite(div) and abs(div - decomposed) > 1e-9:
            raise RuntimeError(
                f"objective decomposition mismatch: divergence {div} vs terms {decomposed}"
            )
    return point


def naive_upper_value(p: JointTable, inst: WZInstance) -> float:
    """The communication-free scheme's exponent at p:
    D(p_XY || P_XY) + I(U;X|Y) + I(Z;X|U,Y)."""
    p = p.reorder(("u", "x", "y", "z"))
    kl = kl_divergence(marginalize(p, ("x", "y")), inst.p_xy)
    i1 = cond_mutual_information(p, ("u",), ("x",), ("y",))
    i2 = cond_mutual_information(p, ("z",), ("x",), ("u", "y"))
    return kl + i1 + i2


def cardinality_functionals(p: JointTable) -> tuple[float, float]:
    """The two support-lemma functionals on a distribution over (x,y,z):
    g1 = H(Z|Y) - H(Z|X,Y) - H(Y|X) and g2 = H(Y) - H(X)."""
    p = p.reorder(("x", "y", "z"))
    v = p.values
    h = lambda axes: _entropy_np(v, axes)
    g1 = (h((1, 2)) - h((1,))) - (h((0, 1, 2)) - h((0, 1))) - (h((0, 1)) - h((0,)))
    g2 = h((1,)) - h((0,))
    return g1, g2


# -- the optimizer -------------------------------------------------------------


def _safe_log2(m: np.ndarray) -> np.ndarray:
    return np.where(m > 0.0, np.log2(np.where(m > 0.0, m, 1.0)), 0.0)


def _masked_objective(dims, allowed, linear, gap_const, d_flat, d_level):
    """Closure for the joint-table search objective.

    Objective: f1 + hinge-branch treatment of the rate gap + optional
    squared distortion penalty, on softmax(theta) scattered into ``allowed``
    cells of a table of shape ``dims``.  The required entropies share one
    marginal tree; gradient constants that the softmax chain annihilates
    are dropped.
    """
    k_full = int(np.prod(dims))

    def compute(theta, lam, mu, branch, need_grad):
        nb = theta.shape[0]
        p = softmax_rows(theta)
        pf = np.zeros((nb, k_full))
        pf[:, allowed] = p
        pf = pf.reshape((nb,) + dims)
        m_uxy = pf.sum(axis=4)
        m_uyz = pf.sum(axis=2)
        m_ux = m_uxy.sum(axis=3)
        m_uy = m_uxy.sum(axis=2)
        m_x = m_ux.sum(axis=1)
        m_y = m_uy.sum(axis=1)
        l_full = _safe_log2(pf)
        l_uyz = _safe_log2(m_uyz)
        l_ux = _safe_log2(m_ux)
        l_uy = _safe_log2(m_uy)
        l_x = _safe_log2(m_x)
        l_y = _safe_log2(m_y)
        ax = lambda a, la: -(a * la).sum(axis=tuple(range(1, a.ndim)))
        h_full = ax(pf, l_full)
        h_uyz = ax(m_uyz, l_uyz)
        h_ux = ax(m_ux, l_ux)
        h_uy = ax(m_uy, l_uy)
        h_x = ax(m_x, l_x)
        h_y = ax(m_y, l_y)
        val = p @ linear + h_ux - h_x + h_uyz - h_uy - h_full
        gval = h_x - h_ux - h_y + h_uy + gap_const
        if branch == 0:
            hinge = np.maximum(gval, 0.0)
            val = val + mu * hinge * hinge
            factor = 2.0 * mu * hinge
        else:
            hinge = np.maximum(-gval, 0.0)
            val = val + gval + mu * hinge * hinge
            factor = 1.0 - 2.0 * mu * hinge
        extra = None
        if d_flat is not None:
            e = p @ d_flat
            viol = np.maximum(e - d_level, 0.0)
            val = val + lam * viol * viol
            extra = (2.0 * lam * viol)[:, None] * d_flat[None, :]
        if not need_grad:
            return val
        # d(+H_G)/dp = -(log2 m_G + const); constants vanish in the chain
        gx = l_x[:, None, :, None, None]
        gux = l_ux[:, :, :, None, None]
        guy = l_uy[:, :, None, :, None]
        gy = l_y[:, None, None, :, None]
        grad_full = (-gux + gx - l_uyz[:, :, None, :, :] + guy + l_full) + factor.reshape(
            nb, 1, 1, 1, 1
        ) * (-gx + gux + gy - guy)
        gp = grad_full.reshape(nb, k_full)[:, allowed] + linear[None, :]
        if extra is not None:
            gp = gp + extra
        gtheta = p * (gp - (p * gp).sum(axis=1, keepdims=True))
        return val, gtheta

    return compute


def _feasible_reference(inst: WZInstance, u_size: int) -> np.ndarray:
    """Source-faithful feasible point: U = const, Z = argmin_z d(x,y,.)."""
    nx, ny, nz = inst.sizes
    zstar = inst.d.argmin(axis=2)
    p = np.zeros((u_size, nx, ny, nz))
    for x in range(nx):
        for y in range(ny):
            p[0, x, y, zstar[x, y]] = inst.p_xy.values[x, y]
    return p


def _structured_starts(inst: WZInstance, u_size: int, allowed_mask: np.ndarray):
    """Joint-table starting points: U = X embedding and U = const.

    Returns (exact tables, smoothed logits); the exact tables are candidate
    points in their own right (they often attain the minimum exactly), the
    logits seed the descent.
    """
    nx, ny, nz = inst.sizes
    zstar = inst.d.argmin(axis=2)
    exact, logits = [], []
    for embed in (True, False):
        p = np.zeros((u_size, nx, ny, nz))
        for x in range(nx):
            for y in range(ny):
                u = x % u_size if embed else 0
                p[u, x, y, zstar[x, y]] = inst.p_xy.values[x, y]
        flat = p.ravel()[allowed_mask]
        if flat.sum() <= 0:
            continue
        flat = flat / flat.sum()
        exact.append(flat)
        logits.append(np.log(0.999 * flat + 0.001 / flat.size))
    return exact, logits


def optimize_fstar_with_candidates(
    inst: WZInstance,
    *,
    restarts: int = 64,
    max_iters: int = 5000,
    tol: float = 1e-7,
    u_size: int | None = None,
    seed: int = 0,
):
    """Multi-start minimization; returns (best ExponentPoint, candidate arrays).

    Candidates are the feasible joint tables produced by every restart and
    branch (plus the structured starting points); the best has the lowest
    total, ties resolved by lowest restart index.
    """
    nx, ny, nz = inst.sizes
    px = inst.p_xy.values.sum(axis=1)
    py = inst.p_xy.values.sum(axis=0)
    if np.any(px <= 0.0) or np.any(py <= 0.0):
        return _optimize_degenerate(inst, restarts, max_iters, tol, u_size, seed)
    usz = u_size if u_size is not None else nx * ny * nz + 1
    dims = (usz, nx, ny, nz)
    supp = (inst.p_xy.values > 0.0)[None, :, :, None]
    if inst.D == 0.0:
        cell_ok = (inst.d == 0.0)[None, :, :, :] & supp
        exact_support = True
    else:
        cell_ok = np.broadcast_to(supp, dims)
        exact_support = False
    allowed = np.flatnonzero(np.broadcast_to(cell_ok, dims).ravel())
    if allowed.size == 0:
        raise ValueError("no feasible support cells for this instance")
    logp = np.log2(np.broadcast_to(inst.p_xy.values[None, :, :, None], dims).ravel()[allowed])
    linear = -logp
    d_flat = None
    if not exact_support:
        d_flat = np.broadcast_to(inst.d[None, :, :, :], dims).ravel()[allowed].astype(float)
    compute = _masked_objective(dims, allowed, linear, -inst.R, d_flat, inst.D)

    src = SharedExpSource(seed)
    theta0 = np.empty((restarts, allowed.size))
    smart_exact, smart_logits = _structured_starts(inst, usz, allowed)
    sigmas = (0.3, 1.0, 3.0)
    for r in range(restarts):
        if r < len(smart_logits):
            theta0[r] = smart_logits[r]
        else:
            rng = np.random.Generator(np.random.PCG64(src.child_seed(101, r)))
            theta0[r] = rng.normal(0.0, sigmas[r % len(sigmas)], size=allowed.size)

    if exact_support:
        stages = [(0.0, 16.0), (0.0, 256.0), (0.0, 4096.0)]
    else:
        stages = [(4.0, 16.0), (64.0, 256.0), (1024.0, 4096.0), (16384.0, 4096.0), (262144.0, 4096.0)]
    per_stage = max(150, max_iters // len(stages))

    q_ref = _feasible_reference(inst, usz)

    def repair(p4: np.ndarray) -> np.ndarray:
        if exact_support:
            return p4
        e = float((p4 * inst.d[None]).sum())
        if e <= inst.D + 1e-15:
            return p4
        eq = float((q_ref * inst.d[None]).sum())
        if e - eq <= 0:
            return q_ref.copy()
        alpha = min(1.0, (e - inst.D) / (e - eq))
        return (1.0 - alpha) * p4 + alpha * q_ref

    candidates: list[np.ndarray] = []
    order: list[tuple[float, int, int]] = []

    def add_flat(p_flat: np.ndarray, restart: int, branch: int):
        p = np.zeros(int(np.prod(dims)))
        p[allowed] = p_flat
        p4 = repair(p.reshape(dims))
        total = _terms_from_array(p4, inst)[4]
        order.append((total, restart, branch))
        candidates.append(p4)

    def add_candidate(theta_row: np.ndarray, restart: int, branch: int):
        flat = softmax_rows(theta_row[None, :])[0]
        add_flat(flat, restart, branch)
        # optima often sit on faces; snapping vanishing cells clears the
        # residual mass the interior parametrization cannot shed
        for cut in (1e-3, 1e-5):
            snapped = np.where(flat >= cut, flat, 0.0)
            tot = snapped.sum()
            if 0.0 < tot < 1.0:
                add_flat(snapped / tot, restart, branch)

    for r, flat in enumerate(smart_exact):
        add_flat(flat, r, -1)

    for branch in (0, 1):
        theta = theta0.copy()
        for si, (lam, mu) in enumerate(stages):
            vg = lambda t: compute(t, lam, mu, branch, True)
            vo = lambda t: compute(t, lam, mu, branch, False)
            theta, _ = minimize_batch(vg, vo, theta, max_iters=per_stage, tol=tol)
            if si >= len(stages) - 3:  # later stages: constraint nearly active
                for r in range(restarts):
                    add_candidate(theta[r], r, branch)

    best = min(range(len(order)), key=lambda i: (order[i][0], order[i][1], order[i][2]))
    return _point_from_array(candidates[best], inst), candidates


def _optimize_degenerate(inst, restarts, max_iters, tol, u_size, seed):
    """Drop zero rows/columns of P_XY, optimize, re-embed."""
    px = inst.p_xy.values.sum(axis=1)
    py = inst.p_xy.values.sum(axis=0)
    xs = np.flatnonzero(px > 0.0)
    ys = np.flatnonzero(py > 0.0)
    sub_p = inst.p_xy.values[np.ix_(xs, ys)]
    sub_d = inst.d[np.ix_(xs, ys, np.arange(inst.sizes[2]))]
    sub = WZInstance(p_xy=make_table(sub_p, ("x", "y")), d=sub_d, R=inst.R, D=inst.D)
    point, cands = optimize_fstar_with_candidates(
        sub, restarts=restarts, max_iters=max_iters, tol=tol, u_size=u_size, seed=seed
    )
    nx, ny, nz = inst.sizes
    usz = point.dist.values.shape[0]

    def embed(p4s: np.ndarray) -> np.ndarray:
        full = np.zeros((usz, nx, ny, nz))
        full[np.ix_(np.arange(usz), xs, ys, np.arange(nz))] = p4s
        return full

    return _point_from_array(embed(point.dist.values), inst), [embed(c) for c in cands]


def optimize_fstar(inst: WZInstance, **kwargs) -> ExponentPoint:
    """Best feasible exponent point found (a true upper bound on the minimum).

    Deterministic given ``seed``; see :func:`optimize_fstar_with_candidates`
    for options.
    """
    point, _ = optimize_fstar_with_candidates(inst, **kwargs)
    return point


# -- rate-distortion function --------------------------------------------------


@dataclass(frozen=True)
class RdResult:
    value: float
    difference_form: float
    conditional_form: float

    def __float__(self):
        return self.value


def _channel_softmax(theta: np.ndarray, u: int, nx: int) -> np.ndarray:
    z = theta.reshape(theta.shape[0], u, nx)
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def rd_wyner_ziv(p_xy, d, D: float, *, restarts: int = 48, max_iters: int = 4000, tol: float = 1e-8, seed: int = 0, agree_tol: float = 1e-3) -> RdResult:
    """The rate-distortion function: min I(U;X) - I(U;Y) over channels
    P(u|x), |U| = |X| + 2, subject to existence of a reproduction channel
    P(z|u,y) with E[d] <= D.

    The difference form and the conditional form I(U;X|Y) are minimized by
    independent descent runs and must agree within ``agree_tol``.
    """
    inst = WZInstance(
        p_xy=p_xy if isinstance(p_xy, JointTable) else make_table(p_xy, ("x", "y")),
        d=d,
        R=0.0,
        D=D,
    )
    base = inst.p_xy.values
    nx, ny, nz = inst.sizes
    usz = nx + 2
    hx = _entropy_np(base, (0,))
    hy = _entropy_np(base, (1,))
    hxy = _entropy_np(base, (0, 1))

    def dmin_of(joint3: np.ndarray) -> np.ndarray:
        s = np.einsum("buxy,xyz->buyz", joint3, inst.d)
        return s.min(axis=3).sum(axis=(1, 2))

    def make_compute(form: str):
        def compute(theta, lam, need_grad):
            nb = theta.shape[0]
            ch = _channel_softmax(theta, usz, nx)
            joint3 = ch[:, :, :, None] * base[None, None, :, :]
            h_uy, g_uy = group_entropy(joint3, (0, 2))
            if form == "difference":
                h_ux, g_ux = group_entropy(joint3, (0, 1))
                val = hx - hy + h_uy - h_ux
                gj = g_uy - g_ux if need_grad else None
            else:
                h_uxy, g_uxy = group_entropy(joint3, (0, 1, 2))
                val = hxy - hy + h_uy - h_uxy
                gj = g_uy - g_uxy if need_grad else None
            s = np.einsum("buxy,xyz->buyz", joint3, inst.d)
            zstar = s.argmin(axis=3)
            e = np.take_along_axis(s, zstar[..., None], axis=3)[..., 0].sum(axis=(1, 2))
            viol = np.maximum(e - inst.D, 0.0)
            val = val + lam * viol * viol
            if not need_grad:
                return val
            onehot = np.zeros_like(s)
            np.put_along_axis(onehot, zstar[..., None], 1.0, axis=3)
            dsel = np.einsum("buyz,xyz->buxy", onehot, inst.d)
            gj = gj + (2.0 * lam * viol).reshape(nb, 1, 1, 1) * dsel
            gch = np.einsum("buxy,xy->bux", gj, base)
            gtheta = ch * (gch - (ch * gch).sum(axis=1, keepdims=True))
            return val, gtheta.reshape(nb, usz * nx)

        return compute

    def exact_forms(ch_row: np.ndarray) -> tuple[float, float]:
        joint3 = ch_row[:, :, None] * base[None, :, :]
        diff = hx - hy + _entropy_np(joint3, (0, 2)) - _entropy_np(joint3, (0, 1))
        cond = hxy - hy + _entropy_np(joint3, (0, 2)) - _entropy_np(joint3, (0, 1, 2))
        return max(diff, 0.0), max(cond, 0.0)

    embed = np.zeros((usz, nx))
    for x in range(nx):
        embed[x % usz, x] = 1.0
    const = np.zeros((usz, nx))
    const[0, :] = 1.0
    src = SharedExpSource(seed)
    theta0 = np.empty((restarts, usz * nx))
    for r in range(restarts):
        if r == 0:
            ch = embed
        elif r == 1:
            ch = const
        else:
            rng = np.random.Generator(np.random.PCG64(src.child_seed(202, r)))
            theta0[r] = rng.normal(0.0, 1.0 + (r % 3), size=usz * nx)
            continue
        theta0[r] = np.log(0.999 * ch + 0.001 / usz).ravel()

    def dmin_channel(ch_row: np.ndarray) -> float:
        return float(dmin_of((ch_row[:, :, None] * base[None, :, :])[None])[0])

    def repair_channel(ch_row: np.ndarray) -> np.ndarray | None:
        """Smallest mixing toward the U = X embedding restoring E[d] <= D."""
        if dmin_channel(ch_row) <= inst.D + 1e-12:
            return ch_row
        lo, hi = 0.0, 1.0
        if dmin_channel(embed) > inst.D + 1e-12:
            return None
        for _ in range(70):
            mid = 0.5 * (lo + hi)
            if dmin_channel((1 - mid) * ch_row + mid * embed) <= inst.D:
                hi = mid
            else:
                lo = mid
        cand = (1 - hi) * ch_row + hi * embed
        return cand if dmin_channel(cand) <= inst.D + 1e-12 else embed

    values = {}
    for form in ("difference", "conditional"):
        compute = make_compute(form)
        theta = theta0.copy()
        for lam in (16.0, 256.0, 4096.0, 65536.0, 2.0 ** 20, 2.0 ** 24):
            vg = lambda t: compute(t, lam, True)
            vo = lambda t: compute(t, lam, False)
            theta, _ = minimize_batch(vg, vo, theta, max_iters=max(150, max_iters // 6), tol=tol)
        best = math.inf
        for r in range(restarts):
            ch_row = _channel_softmax(theta[r : r + 1], usz, nx)[0]
            viol = dmin_channel(ch_row) - inst.D
            if viol > 1e-9:
                ch_row = repair_channel(ch_row)
                if ch_row is None:
                    continue
            dv, cv = exact_forms(ch_row)
            if abs(dv - cv) > 1e-8:
                raise RuntimeError(f"rate-distortion form mismatch at a feasible point: {dv} vs {cv}")
            best = min(best, dv if form == "difference" else cv)
        # structured starts are exactly feasible; include them
        for ch_row in (embed, const):
            if dmin_channel(ch_row) <= inst.D + 1e-12:
                dv, cv = exact_forms(ch_row)
                best = min(best, dv if form == "difference" else cv)
        values[form] = best

    dv, cv = values["difference"], values["conditional"]
    if abs(dv - cv) > agree_tol:
        raise RuntimeError(f"difference form {dv} and conditional form {cv} disagree beyond {agree_tol}")
    return RdResult(value=min(dv, cv), difference_form=dv, conditional_form=cv)


# -- special cases ---------------------------------------------------------------


def fstar_slepian_wolf(p_xy, R: float, *, restarts: int = 48, max_iters: int = 3000, tol: float = 1e-9, seed: int = 0) -> float:
    """min over source tables of D(q || P_XY) + max(H_q(X|Y) - R, 0)."""
    p = p_xy if isinstance(p_xy, JointTable) else make_table(p_xy, ("x", "y"))
    base = p.values
    allowed = np.flatnonzero(base.ravel() > 0.0)
    logp = np.log2(base.ravel()[allowed])
    dims = base.shape

    def exact_total(q_flat: np.ndarray) -> float:
        q = np.zeros(base.size)
        q[allowed] = q_flat
        q = q.reshape(dims)
        kl = float((q_flat[q_flat > 0] * (np.log2(q_flat[q_flat > 0]))).sum()) - float(
            (q_flat * logp).sum()
        )
        hxgy = _entropy_np(q, (0, 1)) - _entropy_np(q, (1,))
        return max(kl, 0.0) + max(hxgy - R, 0.0)

    def compute(theta, mu, branch, need_grad):
        nb = theta.shape[0]
        q = softmax_rows(theta)
        qf = np.zeros((nb, base.size))
        qf[:, allowed] = q
        qf = qf.reshape((nb,) + dims)
        h_xy, g_xy = group_entropy(qf, (0, 1))
        h_y, g_y = group_entropy(qf, (1,))
        val = -h_xy - q @ logp
        gval = h_xy - h_y - R
        if branch == 0:
            hinge = np.maximum(gval, 0.0)
            val = val + mu * hinge * hinge
            factor = 2.0 * mu * hinge
        else:
            hinge = np.maximum(-gval, 0.0)
            val = val + gval + mu * hinge * hinge
            factor = 1.0 - 2.0 * mu * hinge
        if not need_grad:
            return val
        grad_full = -g_xy + factor.reshape(nb, 1, 1) * (g_xy - g_y)
        gp = grad_full.reshape(nb, base.size)[:, allowed] - logp[None, :]
        gtheta = q * (gp - (q * gp).sum(axis=1, keepdims=True))
        return val, gtheta

    src = SharedExpSource(seed)
    theta0 = np.empty((restarts, allowed.size))
    faithful = base.ravel()[allowed]
    theta0[0] = np.log(0.999 * faithful + 0.001 / faithful.size)
    for r in range(1, restarts):
        rng = np.random.Generator(np.random.PCG64(src.child_seed(303, r)))
        theta0[r] = rng.normal(0.0, 1.0 + (r % 3), size=allowed.size)

    best = exact_total(faithful)
    for branch in (0, 1):
        theta = theta0.copy()
        for mu in (16.0, 256.0, 4096.0):
            vg = lambda t: compute(t, mu, branch, True)
            vo = lambda t: compute(t, mu, branch, False)
            theta, _ = minimize_batch(vg, vo, theta, max_iters=max(150, max_iters // 3), tol=tol)
            q = softmax_rows(theta)
            for r in range(restarts):
                best = min(best, exact_total(q[r]))
                for cut in (1e-3, 1e-5):
                    snapped = np.where(q[r] >= cut, q[r], 0.0)
                    tot = snapped.sum()
                    if 0.0 < tot < 1.0:
                        best = min(best, exact_total(snapped / tot))
    return max(best, 0.0)


def fstar_function_computation(p_xy, f, R: float, *, z_size: int | None = None, restarts: int = 64, max_iters: int = 4000, tol: float = 1e-8, seed: int = 0) -> float:
    """Exponent for exact function reproduction:
    min D(q_XY||P) + I(U;Y|X) + H(f(X,Y)|U,Y) + max(I(U;X)-I(U;Y)-R, 0)."""
    inst = function_computation_instance(p_xy, f, R, z_size=z_size)
    f = np.asarray(f, dtype=int)
    base = inst.p_xy.values
    nx, ny, nz = inst.sizes
    usz = nx * ny * nz + 1
    f_oh = np.zeros((nx, ny, nz))
    for x in range(nx):
        for y in range(ny):
            f_oh[x, y, f[x, y]] = 1.0
    supp = np.broadcast_to((base > 0.0)[None, :, :], (usz, nx, ny))
    allowed = np.flatnonzero(supp.ravel())
    logp = np.log2(np.broadcast_to(base[None, :, :], (usz, nx, ny)).ravel()[allowed])
    dims = (usz, nx, ny)

    def scatter(q):
        nb = q.shape[0]
        qf = np.zeros((nb, usz * nx * ny))
        qf[:, allowed] = q
        return qf.reshape((nb,) + dims)

    def compute(theta, mu, branch, need_grad):
        nb = theta.shape[0]
        q = softmax_rows(theta)
        qf = scatter(q)
        h_ux, g_ux = group_entropy(qf, (0, 1))
        h_x, g_x = group_entropy(qf, (1,))
        h_y, g_y = group_entropy(qf, (2,))
        h_uy, g_uy = group_entropy(qf, (0, 2))
        h_uxy, g_uxy = group_entropy(qf, (0, 1, 2))
        m_uyz = np.einsum("buxy,xyz->buyz", qf, f_oh)
        logm = np.where(m_uyz > 0.0, np.log2(np.where(m_uyz > 0.0, m_uyz, 1.0)), 0.0)
        h_uyz = -(m_uyz * logm).sum(axis=(1, 2, 3))
        val = -(q @ logp) + h_ux - h_x - h_uxy + h_uyz - h_uy
        gval = h_x - h_ux - h_y + h_uy - R
        if branch == 0:
            hinge = np.maximum(gval, 0.0)
            val = val + mu * hinge * hinge
            factor = 2.0 * mu * hinge
        else:
            hinge = np.maximum(-gval, 0.0)
            val = val + gval + mu * hinge * hinge
            factor = 1.0 - 2.0 * mu * hinge
        if not need_grad:
            return val
        g_uyz = np.einsum("buyz,xyz->buxy", -(logm + LOG2E), f_oh)
        grad_full = g_ux - g_x - g_uxy + g_uyz - g_uy
        grad_full = grad_full + factor.reshape(nb, 1, 1, 1) * (g_x - g_ux - g_y + g_uy)
        gp = grad_full.reshape(nb, usz * nx * ny)[:, allowed] - logp[None, :]
        gtheta = q * (gp - (q * gp).sum(axis=1, keepdims=True))
        return val, gtheta

    def exact_total(q_row: np.ndarray) -> float:
        q3 = np.zeros(usz * nx * ny)
        q3[allowed] = q_row
        q3 = q3.reshape(dims)
        p4 = q3[:, :, :, None] * f_oh[None, :, :, :]
        return _terms_from_array(p4, inst)[4]

    src = SharedExpSource(seed)
    theta0 = np.empty((restarts, allowed.size))
    starts = []
    for embed in (True, False):
        q3 = np.zeros(dims)
        for x in range(nx):
            q3[x % usz if embed else 0, x, :] = base[x, :]
        starts.append(q3.ravel()[allowed])
    for r in range(restarts):
        if r < len(starts):
            theta0[r] = np.log(0.999 * starts[r] + 0.001 / allowed.size)
        else:
            rng = np.random.Generator(np.random.PCG64(src.child_seed(404, r)))
            theta0[r] = rng.normal(0.0, 1.0 + (r % 3), size=allowed.size)

    best = min(exact_total(s) for s in starts)
    for branch in (0, 1):
        theta = theta0.copy()
        for mu in (16.0, 256.0, 4096.0):
            vg = lambda t: compute(t, mu, branch, True)
            vo = lambda t: compute(t, mu, branch, False)
            theta, _ = minimize_batch(vg, vo, theta, max_iters=max(150, max_iters // 3), tol=tol)
            q = softmax_rows(theta)
            for r in range(restarts):
                best = min(best, exact_total(q[r]))
                for cut in (1e-3, 1e-5):
                    snapped = np.where(q[r] >= cut, q[r], 0.0)
                    tot = snapped.sum()
                    if 0.0 < tot < 1.0:
                        best = min(best, exact_total(snapped / tot))
    return max(best, 0.0)


# -- the AND example -------------------------------------------------------------


@dataclass(frozen=True)
class AndExample:
    timesharing: float
    coded_bound: float
    construction: ExponentPoint


def and_construction_table(R: float) -> JointTable:
    """The three-letter auxiliary construction for the AND source at rate R."""
    pu = np.array([R / 2.0, R / 2.0, 1.0 - R])
    cond = np.array(
        [
            [[0.5, 0.5], [0.0, 0.0]],
            [[0.0, 0.0], [0.5, 0.5]],
            [[1 / 3, 1 / 3], [1 / 3, 0.0]],
        ]
    )
    p3 = pu[:, None, None] * cond
    p4 = np.zeros((3, 2, 2, 2))
    for x in range(2):
        for y in range(2):
            p4[:, x, y, x & y] = p3[:, x, y]
    return make_table(p4, ("u", "x", "y", "z"))


def and_conditional_mi(R: float) -> float:
    """Closed form for I(U;Y|X) of the AND construction."""
    if R <= 0.0:
        return 0.0
    return (4 - R) / 6.0 + (2 + R) / 6.0 * binary_entropy((4 - R) / (4 + 2 * R)) - (2 + R) / 3.0


def and_example(R: float) -> AndExample:
    """Closed-form exponents for the AND-of-independent-bits source.

    timesharing = (1-R)(2 - log2 3); coded_bound = 2 - h((2+R)/6) - (2+R)/3;
    the returned construction attains coded_bound with zero rate gap.
    """
    if not 0.0 <= R <= 1.0:
        raise ValueError(f"rate {R} outside [0, 1]")
    timesharing = (1.0 - R) * (2.0 - LOG2_3)
    coded = 2.0 - binary_entropy((2.0 + R) / 6.0) - (2.0 + R) / 3.0
    construction = objective_terms(and_construction_table(R), and_instance(R))
    return AndExample(timesharing=timesharing, coded_bound=coded, construction=construction)
