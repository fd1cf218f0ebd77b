"""Command-line surface: instance files in, exponent/rate-distortion values,
sweeps, simulations, oracle checks, and matching self-tests out.

Data rows go to stdout (or --out) as CSV with header
``param,kind,value,ci_lo,ci_hi`` (ci columns empty for exact values) or as
JSON mirroring the same fields.  Logs go to stderr, and the last stderr
line is always a machine-readable JSON summary.  Exit codes: 0 all checks
passed, 1 a check failed, 2 usage or schema error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys

import numpy as np

from . import __version__
from .exponent import (
    WZInstance,
    and_example,
    and_instance,
    fstar_slepian_wolf,
    make_table,
    optimize_fstar,
    rd_wyner_ziv,
    slepian_wolf_instance,
)
from .matching import SharedExpSource, WeightedSupport, coupled_mismatch_many, mismatch_bound
from .oracle import check_converse
from .seqtypes import nearest_type
from .simulate import build_scheme, estimate

__all__ = ["main", "entry", "parse_instance", "InstanceError"]


class InstanceError(ValueError):
    """Schema violation in an instance file."""


def _require(cond: bool, msg: str):
    if not cond:
        raise InstanceError(msg)


def parse_instance(path: str, rate: float | None = None) -> WZInstance:
    """Load and validate an instance file (JSON key-value document).

    Schema: alphabet_sizes [|X|,|Y|,|Z|]; p_xy row-major matrix; distortion
    either a flat x-major/y-middle/z-minor list or a builtin name
    ("and_dfc", "slepian_wolf"); R; D.  Builtins fix d and D; "and_dfc"
    defaults p_xy to the uniform 2x2 source.
    """
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as e:
        raise InstanceError(f"cannot read instance file: {e}") from e
    except json.JSONDecodeError as e:
        raise InstanceError(f"instance file is not valid JSON (line {e.lineno}): {e.msg}") from e
    _require(isinstance(doc, dict), "top level must be an object")
    dist = doc.get("distortion")
    R = rate if rate is not None else doc.get("R", 0.0)
    _require(isinstance(R, (int, float)) and R >= 0, "field 'R': non-negative number required")

    if dist == "and_dfc":
        if "p_xy" in doc:
            _require(
                np.asarray(doc["p_xy"], dtype=float).shape == (2, 2),
                "field 'p_xy': and_dfc needs a 2x2 matrix",
            )
            base = np.asarray(doc["p_xy"], dtype=float)
            _require(abs(base.sum() - 1.0) < 1e-9, "field 'p_xy': rows must sum to 1 overall")
            inst = and_instance(float(R))
            return WZInstance(p_xy=make_table(base, ("x", "y")), d=inst.d, R=float(R), D=float(doc.get("D", 0.0)))
        return and_instance(float(R), D=float(doc.get("D", 0.0)))

    _require("p_xy" in doc, "field 'p_xy' is required")
    try:
        p = np.asarray(doc["p_xy"], dtype=float)
    except (TypeError, ValueError) as e:
        raise InstanceError(f"field 'p_xy': {e}") from e
    _require(p.ndim == 2, "field 'p_xy': matrix required")
    _require(p.min() >= 0, "field 'p_xy': negative entry")
    _require(abs(p.sum() - 1.0) < 1e-9, f"field 'p_xy': entries sum to {p.sum()}, not 1")

    if dist == "slepian_wolf":
        return slepian_wolf_instance(p, float(R))

    _require("alphabet_sizes" in doc, "field 'alphabet_sizes' is required")
    sizes = doc["alphabet_sizes"]
    _require(
        isinstance(sizes, list) and len(sizes) == 3 and all(isinstance(s, int) and s >= 1 for s in sizes),
        "field 'alphabet_sizes': three positive integers required",
    )
    nx, ny, nz = sizes
    _require(p.shape == (nx, ny), f"field 'p_xy': shape {p.shape} != ({nx}, {ny})")
    _require(isinstance(dist, list), "field 'distortion': flat list or builtin name required")
    _require(
        len(dist) == nx * ny * nz,
        f"field 'distortion': {len(dist)} entries, expected |X||Y||Z| = {nx * ny * nz}",
    )
    d = np.asarray(dist, dtype=float).reshape(nx, ny, nz)
    _require("D" in doc, "field 'D' is required for explicit distortion tables")
    try:
        return WZInstance(p_xy=make_table(p, ("x", "y")), d=d, R=float(R), D=float(doc["D"]))
    except ValueError as e:
        raise InstanceError(str(e)) from e


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        if math.isinf(v):
            return "inf"
        return format(v, ".12g")
    return str(v)


def _emit(rows, fmt: str, out_path: str | None):
    if fmt == "csv":
        lines = ["param,kind,value,ci_lo,ci_hi"]
        for r in rows:
            lines.append(
                ",".join(_fmt(r.get(k)) for k in ("param", "kind", "value", "ci_lo", "ci_hi"))
            )
        text = "\n".join(lines) + "\n"
    else:
        text = json.dumps({"rows": rows}, indent=2, default=_fmt) + "\n"
    if out_path:
        with open(out_path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _summary(command: str, ok: bool, checks: dict):
    print(json.dumps({"command": command, "ok": ok, "checks": checks}), file=sys.stderr)


def _grid(text: str) -> list[float]:
    vals = [float(v) for v in text.split(",") if v.strip() != ""]
    if not vals:
        raise InstanceError("empty grid")
    return vals


def _cmd_exponent(args) -> int:
    inst = parse_instance(args.instance, rate=args.rate)
    pt = optimize_fstar(inst, restarts=args.restarts, seed=args.seed, tol=args.tol)
    rows = [
        {"param": inst.R, "kind": "fstar", "value": pt.total},
        {"param": inst.R, "kind": "kl_term", "value": pt.kl_term},
        {"param": inst.R, "kind": "soft_markov_1", "value": pt.soft_markov_1},
        {"param": inst.R, "kind": "soft_markov_2", "value": pt.soft_markov_2},
        {"param": inst.R, "kind": "rate_gap", "value": pt.rate_gap},
        {"param": inst.R, "kind": "distortion", "value": pt.distortion},
    ]
    _emit(rows, args.format, args.out)
    _summary("exponent", True, {"fstar": pt.total})
    return 0


def _cmd_rd(args) -> int:
    inst = parse_instance(args.instance)
    res = rd_wyner_ziv(inst.p_xy, inst.d, inst.D, restarts=args.restarts, seed=args.seed)
    rows = [
        {"param": inst.D, "kind": "rd", "value": res.value},
        {"param": inst.D, "kind": "rd_difference_form", "value": res.difference_form},
        {"param": inst.D, "kind": "rd_conditional_form", "value": res.conditional_form},
    ]
    agree = abs(res.difference_form - res.conditional_form) <= 1e-4
    _emit(rows, args.format, args.out)
    _summary("rd", agree, {"rd": res.value, "forms_agree": agree})
    return 0 if agree else 1


def _cmd_sweep(args) -> int:
    inst = parse_instance(args.instance)
    rows = []
    checks = {}
    ok = True
    is_and = (
        inst.sizes == (2, 2, 2)
        and np.array_equal(inst.d, and_instance(0.0).d)
        and np.allclose(inst.p_xy.values, 0.25)
    )
    if args.grid_d is not None:
        for D in _grid(args.grid_d):
            pt = optimize_fstar(
                WZInstance(p_xy=inst.p_xy, d=inst.d, R=inst.R, D=D),
                restarts=args.restarts,
                seed=args.seed,
            )
            rows.append({"param": D, "kind": "fstar", "value": pt.total})
    else:
        grid = _grid(args.grid_r if args.grid_r is not None else "0,0.25,0.5,0.75,1")
        for R in grid:
            pt = optimize_fstar(inst.with_rate(R), restarts=args.restarts, seed=args.seed)
            rows.append({"param": R, "kind": "fstar", "value": pt.total})
            if is_and:
                ex = and_example(R)
                rows.append({"param": R, "kind": "timesharing", "value": ex.timesharing})
                rows.append({"param": R, "kind": "coded_bound", "value": ex.coded_bound})
                if 0.0 < R < 1.0 and ex.coded_bound >= ex.timesharing:
                    ok = False
        checks["and_closed_forms"] = is_and
    _emit(rows, args.format, args.out)
    _summary("sweep", ok, checks)
    return 0 if ok else 1


def _cmd_simulate(args) -> int:
    inst = parse_instance(args.instance, rate=args.rate)
    if args.mode == "timesharing_and":
        cfg = build_scheme(inst, None, args.n, inst.R, mode="timesharing_and")
    else:
        pt = optimize_fstar(inst, restarts=max(16, args.restarts // 2), seed=args.seed)
        jt = nearest_type(pt.dist, args.n)
        cfg = build_scheme(inst, jt, args.n, inst.R, mode=args.mode, xy_mode=args.xy_mode)
    rep = estimate(cfg, args.trials, master_seed=args.seed)
    rows = [
        {"param": args.n, "kind": "p_c_hat", "value": rep.p_c_hat, "ci_lo": rep.ci_lo, "ci_hi": rep.ci_hi},
        {"param": args.n, "kind": "exponent_hat", "value": rep.exponent_hat},
        {"param": args.n, "kind": "lower_bound", "value": rep.lower_bound},
    ]
    _emit(rows, args.format, args.out)
    _summary(
        "simulate",
        rep.bound_satisfied,
        {"p_c_hat": rep.p_c_hat, "lower_bound": rep.lower_bound, "bound_satisfied": rep.bound_satisfied},
    )
    return 0 if rep.bound_satisfied else 1


def _cmd_oracle(args) -> int:
    inst = parse_instance(args.instance)
    rep = check_converse(inst, args.n, args.M, restarts=args.restarts, seed=args.seed)
    rows = [
        {"param": rep.rate, "kind": "fn_exact", "value": rep.fn_value},
        {"param": rep.rate, "kind": "fstar", "value": rep.fstar_value},
        {"param": rep.rate, "kind": "margin", "value": rep.fn_value - rep.fstar_value},
    ]
    _emit(rows, args.format, args.out)
    _summary("oracle", rep.ok, {"fn": rep.fn_value, "fstar": rep.fstar_value, "ok": rep.ok})
    return 0 if rep.ok else 1


def _cmd_matching_test(args) -> int:
    import scipy.stats

    rng = np.random.default_rng(args.seed)
    seeds = np.arange(args.trials, dtype=np.uint64) + np.uint64(args.seed) * np.uint64(10 ** 9)
    rows = []
    ok = True
    for pair in range(args.pairs):
        k = int(rng.integers(2, 9))
        pw = rng.dirichlet(np.ones(k))
        qw = rng.dirichlet(np.ones(k))
        keys = tuple((i,) for i in range(k))
        p = WeightedSupport(keys=keys, weights=pw)
        q = WeightedSupport(keys=keys, weights=qw)
        ip, iq = coupled_mismatch_many(p, q, seeds)
        # marginal law of the first argmin
        freq = np.bincount(ip, minlength=k)
        expected = p.weights * len(seeds)
        stat = float(((freq - expected) ** 2 / expected).sum())
        pval = float(scipy.stats.chi2.sf(stat, k - 1))
        marg_ok = pval >= 1e-3
        # per-outcome disagreement bound
        bound_ok = True
        for c in range(k):
            sel = ip == c
            cnt = int(sel.sum())
            if cnt < 500:
                continue
            rate = float((iq[sel] != c).mean())
            bnd = mismatch_bound(p.weights[c], q.weights[c])
            se = math.sqrt(max(rate * (1 - rate), 1e-12) / cnt)
            if rate > bnd + 3 * se:
                bound_ok = False
        ok = ok and marg_ok and bound_ok
        rows.append({"param": pair, "kind": "chi2_pvalue", "value": pval})
        rows.append({"param": pair, "kind": "bound_ok", "value": float(bound_ok)})
    _emit(rows, args.format, args.out)
    _summary("matching-test", ok, {"pairs": args.pairs, "trials": args.trials})
    return 0 if ok else 1


def _cmd_and_example(args) -> int:
    rows = []
    ok = True
    for R in _grid(args.grid_r if args.grid_r is not None else "0,0.25,0.5,0.75,1"):
        ex = and_example(R)
        rows.append({"param": R, "kind": "timesharing", "value": ex.timesharing})
        rows.append({"param": R, "kind": "coded_bound", "value": ex.coded_bound})
        rows.append({"param": R, "kind": "construction_total", "value": ex.construction.total})
        rows.append({"param": R, "kind": "rate_gap", "value": ex.construction.rate_gap})
        if abs(ex.construction.total - ex.coded_bound) > 1e-9:
            ok = False
    _emit(rows, args.format, args.out)
    _summary("and-example", ok, {})
    return 0 if ok else 1


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="wzexp", description=__doc__)
    ap.add_argument("--version", action="version", version=f"wzexp {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, instance=True):
        if instance:
            p.add_argument("--instance", required=True, help="path to an instance JSON file")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--restarts", type=int, default=64)
        p.add_argument("--trials", type=int, default=10 ** 4)
        p.add_argument("--n", type=int, default=8)
        p.add_argument("--tol", type=float, default=1e-7)
        p.add_argument("--out", default=None, help="write data rows here instead of stdout")
        p.add_argument("--format", choices=("csv", "json"), default="csv")

    p = sub.add_parser("exponent", help="optimize the exponent for one instance")
    common(p)
    p.add_argument("--rate", type=float, default=None, help="override the instance's R")
    p.set_defaults(func=_cmd_exponent)

    p = sub.add_parser("rd", help="rate-distortion function (both forms)")
    common(p)
    p.set_defaults(func=_cmd_rd)

    p = sub.add_parser("sweep", help="exponent over a rate or distortion grid")
    common(p)
    p.add_argument("--grid-r", default=None, help="comma-separated rates")
    p.add_argument("--grid-d", default=None, help="comma-separated distortion levels")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("simulate", help="Monte Carlo achievability run")
    common(p)
    p.add_argument("--mode", choices=("matched", "naive", "timesharing_and"), default="matched")
    p.add_argument("--xy-mode", choices=("uniform_on_type_class", "iid_source"), default="uniform_on_type_class")
    p.add_argument("--rate", type=float, default=None)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("oracle", help="brute-force converse check")
    common(p)
    p.add_argument("--M", type=int, default=1, help="message count")
    p.set_defaults(func=_cmd_oracle)

    p = sub.add_parser("matching-test", help="coupling statistics self-test")
    common(p, instance=False)
    p.add_argument("--pairs", type=int, default=10)
    p.set_defaults(func=_cmd_matching_test)

    p = sub.add_parser("and-example", help="closed forms for the AND source")
    common(p, instance=False)
    p.add_argument("--grid-r", default=None)
    p.set_defaults(func=_cmd_and_example)
    return ap


def main(argv=None) -> int:
    ap = _build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return 2 if e.code not in (0, None) else 0
    try:
        return args.func(args)
    except InstanceError as e:
        print(f"error: {e}", file=sys.stderr)
        _summary(args.command, False, {"error": str(e)})
        return 2
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        _summary(args.command, False, {"error": str(e)})
        return 2


def entry():  # console-script shim
    sys.exit(main())


if __name__ == "__main__":
    entry()
