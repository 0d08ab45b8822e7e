"""Command-line front end.

Exit codes: 0 success, 1 usage error, 2 validation error, 3 a structural
property was violated. Coordinates are 1-based in every file and message.
Output is one JSON record per line, each carrying a ``type`` field.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path
from typing import Any, Iterable, TextIO

import numpy as np

from . import geometry as geo
from .calibration import calibrate_first_threshold
from .engine import (
    BASELINES,
    StepDownConfig,
    ThresholdProfile,
    baseline_procedure,
    run_stepdown,
    stepdown_procedure,
)
from .errors import BadGrid, BadParameter, BadThresholds, GridMismatch, ValidationError
from .gaussian import build_model, y_coordinates
from .risk import compare_dominance, demo_grid, sweep_risk
from .transforms import make_transform

EXIT_OK, EXIT_USAGE, EXIT_INVALID, EXIT_VIOLATION = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # argparse would exit 2
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# formatting

def _num(v: Any) -> Any:
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        f = float(v)
        if math.isinf(f):
            return "inf" if f > 0 else "-inf"
        if math.isnan(f):
            return "nan"
        return float(f"{f:.9g}")
    if isinstance(v, np.ndarray):
        return [_num(x) for x in v.tolist()]
    if isinstance(v, dict):
        return {str(k): _num(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_num(x) for x in v]
    return v


def _emit(out: TextIO, records: Iterable[dict[str, Any]]) -> None:
    for rec in records:
        out.write(json.dumps(_num(rec), sort_keys=True, allow_nan=False) + "\n")


def _float(v: Any) -> float:
    if isinstance(v, str) and v.strip().lower() in ("inf", "+inf", "infinity"):
        return math.inf
    try:
        return float(v)
    except (TypeError, ValueError):
        raise BadParameter(f"not a number: {v!r}") from None


# inputs

def read_rows(path: str | Path) -> list[tuple[int, list[float]]]:
    """Comma-separated numeric rows with their 1-based line numbers; '#' lines are skipped."""
    rows = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        try:
            rows.append((lineno, [float(v) for v in s.split(",")]))
        except ValueError:
            raise BadParameter(f"{path}: line {lineno} is not a list of numbers") from None
    return rows


def load_config(path: str | Path, need_thresholds: bool = True) -> tuple[StepDownConfig | None, dict[str, Any]]:
    try:
        raw = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise BadParameter(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(raw, dict) or "sigma" not in raw:
        raise BadParameter(f"{path}: config must be an object with a 'sigma' field")
    if raw.get("tie_rule", "lowest-index") != "lowest-index":
        raise BadParameter("tie_rule must be 'lowest-index'")
    if not isinstance(raw.get("seed", 0), int):
        raise BadParameter("seed must be an integer")
    model = build_model(raw["sigma"])
    spec = make_transform(raw.get("transform"), one_based=True)
    scale = raw.get("threshold_scale", "raw" if spec.is_identity else "score")
    th = raw.get("thresholds")
    if isinstance(th, dict) and "calibrate" in th:
        cal = th["calibrate"]
        if not need_thresholds:
            return None, raw | {"_model": model, "_transform": spec}
        res = calibrate_first_threshold(
            model, spec, _float(cal.get("alpha", 0.05)), int(cal.get("reps", 100_000)), int(raw.get("seed", 0)),
            profile=cal.get("profile", "constant"), shape=cal.get("shape"),
        )
        thresholds = res.thresholds
    elif isinstance(th, list):
        thresholds = ThresholdProfile(tuple(_float(c) for c in th), scale)
    elif th is None and not need_thresholds:
        return None, raw | {"_model": model, "_transform": spec}
    else:
        raise BadThresholds("thresholds must be a list or {'calibrate': {...}}")
    cfg = StepDownConfig(model=model, transform=spec, thresholds=thresholds)
    return cfg, raw | {"_model": model, "_transform": spec}


def _open_out(path: str | None) -> TextIO:
    return open(path, "w", encoding="utf-8", newline="\n") if path else sys.stdout


# commands

def cmd_run(args: argparse.Namespace) -> int:
    cfg, _ = load_config(args.config)
    assert cfg is not None
    rows = read_rows(args.data)
    for lineno, row in rows:
        if len(row) != cfg.model.n:
            raise BadParameter(f"{args.data}: row at line {lineno} has {len(row)} values, expected {cfg.model.n}")
    out = _open_out(args.out)
    try:
        for i, (_, row) in enumerate(rows, start=1):
            tr = run_stepdown(cfg, row)
            _emit(out, (
                {"type": "stage", "row": i, "stage": r.stage, "chosen": r.chosen + 1, "residual": r.residual,
                 "score": r.score, "threshold": r.threshold, "action": r.action}
                for r in tr.records
            ))
            _emit(out, [{"type": "decision", "row": i, "decision": tr.decision.astype(int),
                         "rejected": [j + 1 for j in tr.rejected]}])
    finally:
        if out is not sys.stdout:
            out.close()
    return EXIT_OK


def cmd_calibrate(args: argparse.Namespace) -> int:
    _, raw = load_config(args.config, need_thresholds=False)
    seed = args.seed if args.seed is not None else int(raw.get("seed", 0))
    res = calibrate_first_threshold(raw["_model"], raw["_transform"], args.alpha, args.reps, seed,
                                    profile=args.profile, shape=_parse_list(args.shape) if args.shape else None)
    out = _open_out(args.out)
    try:
        _emit(out, [{"type": "calibration", "alpha": args.alpha, "thresholds": list(res.thresholds.values),
                     "scale": res.thresholds.scale, "achieved_fwer": res.achieved_fwer, "mc_stderr": res.mc_stderr,
                     "reps": res.reps, "seed": res.seed}])
    finally:
        if out is not sys.stdout:
            out.close()
    return EXIT_OK


def cmd_risk(args: argparse.Namespace) -> int:
    cfg, raw = load_config(args.config)
    assert cfg is not None
    grid = [row for _, row in read_rows(args.theta_grid)] if args.theta_grid else demo_grid(cfg.model.n)
    if not grid:
        raise GridMismatch(f"{args.theta_grid}: theta grid is empty")
    for th in grid:
        if len(th) != cfg.model.n:
            raise GridMismatch(f"theta {th} has {len(th)} entries, expected {cfg.model.n}")
    seed = args.seed if args.seed is not None else int(raw.get("seed", 0))
    kinds = [b.strip() for b in args.baselines.split(",") if b.strip()] if args.baselines else []
    for b in kinds:
        if b not in BASELINES:
            raise BadParameter(f"unknown baseline {b!r}; expected one of {BASELINES}")
    procs = {"stepdown": stepdown_procedure(cfg)}
    procs.update({b: baseline_procedure(b, cfg.model, args.alpha) for b in kinds})
    results = {name: sweep_risk(p, cfg.model, grid, args.reps, seed) for name, p in procs.items()}
    out = _open_out(args.out)
    try:
        for name, ests in results.items():
            _emit(out, ({"type": "risk", "procedure": name, "grid_index": i + 1, "theta": e.theta, "risk": e.risk,
                         "stderr": e.stderr, "reps": e.reps, "seed": e.seed} for i, e in enumerate(ests)))
        for b in kinds:
            dom = compare_dominance(results["stepdown"], results[b])
            _emit(out, [{"type": "dominance", "a": "stepdown", "b": b, "verdict": dom.verdict,
                         "margins": dom.margins, "buffer": dom.buffer}])
    finally:
        if out is not sys.stdout:
            out.close()
    return EXIT_OK


def _parse_list(text: str) -> list[float]:
    p = Path(text)
    if p.exists():
        rows = read_rows(p)
        if not rows:
            raise BadParameter(f"{text}: no data row")
        return rows[0][1]
    try:
        return [float(v) for v in text.split(",")]
    except ValueError:
        raise BadParameter(f"cannot parse {text!r} as comma-separated numbers") from None


def _parse_grid(text: str) -> np.ndarray:
    parts = text.split(":")
    if len(parts) != 3:
        raise BadGrid(f"grid must look like MIN:MAX:POINTS, got {text!r}")
    try:
        lo, hi, pts = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        raise BadGrid(f"grid must look like MIN:MAX:POINTS, got {text!r}") from None
    return geo.make_grid(lo, hi, pts)


def cmd_scan(args: argparse.Namespace) -> int:
    grid = _parse_grid(args.grid)
    cfg, raw = load_config(args.config, need_thresholds=args.procedure == "stepdown")
    model = raw["_model"]
    x = np.asarray(_parse_list(args.base))
    if x.shape != (model.n,):
        raise BadParameter(f"base point has {x.size} values, expected {model.n}")
    k = args.coordinate - 1
    if not 0 <= k < model.n:
        raise BadParameter(f"coordinate must be in 1..{model.n}")
    if args.procedure == "stepdown":
        prof = geo.scan_line(cfg, x, k, grid, refine=args.refine)
    else:
        prof = geo.scan_line(baseline_procedure(args.procedure, model, args.alpha), x, k, grid, model=model,
                             refine=args.refine)
    rep = geo.check_interval(prof)
    yk = y_coordinates(model, x + prof.grid[:, None] * prof.g)[:, k]
    acc = prof.grid[~prof.decisions]
    out = _open_out(args.out)
    try:
        _emit(out, ({"type": "scanpoint", "coordinate": k + 1, "r": float(r), "y": float(y), "decision": int(d),
                     "stage": int(s)} for r, y, d, s in zip(prof.grid, yk, prof.decisions, prof.stop_stages)))
        _emit(out, [{"type": "interval_report", "coordinate": k + 1, "procedure": args.procedure,
                     "channel": prof.channel, "pass": rep.passed,
                     "violation_r": [float(prof.grid[i]) for i in rep.violation_positions],
                     "accept_min": float(acc.min()) if acc.size else None,
                     "accept_max": float(acc.max()) if acc.size else None,
                     "escalation": geo.check_escalation(prof)}])
    finally:
        if out is not sys.stdout:
            out.close()
    if prof.channel == "primary" and not rep.passed:
        return EXIT_VIOLATION
    return EXIT_OK


def cmd_verify(args: argparse.Namespace) -> int:
    suites = ("shift", "interval", "path") if args.suite == "all" else (args.suite,)
    demo = [b.strip() for b in args.demo_baselines.split(",") if b.strip()] if args.demo_baselines else []
    grid = _parse_grid(args.grid)
    rep = geo.verify_suite(args.instances, args.seed, suites, grid=grid, refine=args.refine, demo_baselines=demo)
    summary = {k: v for k, v in vars(rep).items()}
    summary.update(type="suite_summary", suite=args.suite, passed=rep.passed)
    out = _open_out(args.out)
    try:
        _emit(out, [summary])
    finally:
        if out is not sys.stdout:
            out.close()
    return EXIT_OK if rep.passed else EXIT_VIOLATION


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="rsd", description="Residual-based step-down multiple testing.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    r = sub.add_parser("run", help="run the configured procedure on each data row")
    r.add_argument("--config", required=True)
    r.add_argument("--data", required=True)
    r.add_argument("--out")
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("calibrate", help="calibrate C_1 to a global-null FWER")
    c.add_argument("--config", required=True)
    c.add_argument("--alpha", type=float, default=0.05)
    c.add_argument("--reps", type=int, default=100_000)
    c.add_argument("--seed", type=int)
    c.add_argument("--profile", choices=("constant", "holm-like"), default="constant")
    c.add_argument("--shape", help="comma-separated shape for the holm-like profile")
    c.add_argument("--out")
    c.set_defaults(func=cmd_calibrate)

    k = sub.add_parser("risk", help="Monte Carlo vector risk over a theta grid")
    k.add_argument("--config", required=True)
    k.add_argument("--theta-grid", help="CSV of theta rows; defaults to all combinations of 0, 1, 3 when n <= 4")
    k.add_argument("--reps", type=int, default=10_000)
    k.add_argument("--seed", type=int)
    k.add_argument("--baselines", default="")
    k.add_argument("--alpha", type=float, default=0.05, help="level for the baseline procedures")
    k.add_argument("--out")
    k.set_defaults(func=cmd_risk)

    s = sub.add_parser("scan", help="scan one coordinate's decision along its admissibility direction")
    s.add_argument("--config", required=True)
    s.add_argument("--base", required=True, help="comma-separated point or a CSV file")
    s.add_argument("--coordinate", type=int, required=True)
    s.add_argument("--grid", default="-20:20:2001", help="MIN:MAX:POINTS")
    s.add_argument("--procedure", choices=("stepdown",) + BASELINES, default="stepdown")
    s.add_argument("--alpha", type=float, default=0.05)
    s.add_argument("--refine", type=int, default=geo.REFINE_FACTOR)
    s.add_argument("--out")
    s.set_defaults(func=cmd_scan)

    v = sub.add_parser("verify", help="run the structural property suites")
    v.add_argument("--suite", choices=("shift", "interval", "path", "all"), default="all")
    v.add_argument("--instances", type=_positive_int, default=200)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--grid", default="-20:20:2001")
    v.add_argument("--refine", type=int, default=geo.REFINE_FACTOR)
    v.add_argument("--demo-baselines", default="", help="baselines to scan in the demo channel, e.g. holm")
    v.add_argument("--out")
    v.set_defaults(func=cmd_verify)
    return p


def _glue_grid(argv: list[str]) -> list[str]:
    # "--grid -6:2:101" would otherwise be read as an unknown option
    out: list[str] = []
    it = iter(argv)
    for a in it:
        out.append(a)
        if a == "--grid":
            nxt = next(it, None)
            if nxt is not None:
                out[-1] = f"--grid={nxt}"
    return out


def main(argv: list[str] | None = None) -> int:
    argv = _glue_grid(list(sys.argv[1:] if argv is None else argv))
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (ValidationError, OSError) as exc:
        print(f"rsd {args.command}: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
