"""Command-line front end: ``solve``, ``sweep``, ``simulate`` and ``validate``.

Scenarios are JSON objects whose keys are the :class:`ScenarioConfig`
fields; ``--preset`` picks a shipped scenario instead. Every output embeds a
run manifest. Exit codes: 0 ok, 1 a validation check failed, 2 bad input,
3 numerical trouble (no convergence, incompatible simulation mode).
"""
from __future__ import annotations

import argparse
import csv
import datetime as _dt
import hashlib
import io
import json
import os
import sys
from dataclasses import asdict, replace

from . import __version__
from .analytic import (
    DivergentFlowError,
    FixedPointError,
    GeometryError,
    SingularSystemError,
    forced_termination,
    handover_probabilities,
    solve_fixed_point,
)
from .scenario import PRESETS, ScenarioConfig, derive_capacities, is_valid, preset, validate
from .sim import SimConfigError, run_replications
from .validation import SimBudget, run_suite

EXIT_OK, EXIT_CHECK_FAILED, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2, 3

SWEEP_COLUMNS = [
    "n", "p_mm", "p_mf", "p_ff", "p_fm", "p_B_f", "p_D_f", "p_B_m", "p_D_m",
    "lambda_h_mm", "lambda_h_mf", "lambda_h_ff", "lambda_h_fm", "D_f", "D_m",
    "iterations", "residual",
]

MODE_ALIASES = {"chain": "chain", "chain_validation": "chain", "closed": "closed", "closed_loop": "closed"}


class InputError(Exception):
    pass


class NumericError(Exception):
    pass


def load_scenario(path: str | None, preset_name: str | None) -> ScenarioConfig:
    if preset_name:
        try:
            cfg = preset(preset_name)
        except KeyError as e:
            raise InputError(str(e.args[0])) from None
    elif path:
        try:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as e:
            raise InputError(f"{path}: {e.strerror}") from None
        try:
            data = json.loads(text)
        except json.JSONDecodeError as e:
            raise InputError(f"{path}:{e.lineno}:{e.colno}: {e.msg}") from None
        if not isinstance(data, dict):
            raise InputError(f"{path}:1:1: scenario must be a JSON object")
        try:
            cfg = ScenarioConfig.from_dict(data)
        except (KeyError, TypeError) as e:
            raise InputError(f"{path}: {e.args[0] if e.args else e}") from None
    else:
        raise InputError("give --config PATH or --preset NAME")
    report = validate(cfg)
    if not is_valid(report):
        lines = [f"  {v.field}: {v.message}" for v in report if v.fatal]
        raise InputError("scenario is invalid:\n" + "\n".join(lines))
    return cfg


def scenario_digest(cfg: ScenarioConfig) -> str:
    blob = json.dumps(cfg.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def _timestamp() -> str:
    # SOURCE_DATE_EPOCH pins the stamp for byte-identical reruns
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    when = (_dt.datetime.fromtimestamp(int(epoch), _dt.timezone.utc) if epoch
            else _dt.datetime.now(_dt.timezone.utc).replace(microsecond=0))
    return when.isoformat()


def manifest(command: str, cfg: ScenarioConfig, **extra) -> dict:
    m = {
        "command": command,
        "scenario_digest": scenario_digest(cfg),
        "tool_version": __version__,
        "timestamp": _timestamp(),
        "seeds": extra.pop("seeds", []),
        "mode": extra.pop("mode", None),
        "tolerances": extra.pop("tolerances", {}),
    }
    m.update(extra)
    return m


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _write(out: str | None, text: str):
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


def _solve(cfg: ScenarioConfig) -> dict:
    try:
        sol = solve_fixed_point(cfg)
        hp = handover_probabilities(cfg)
        if cfg.n == 0:
            # no femtocell to leave; the bare formula would say eta_f/(eta_f+mu)
            hp = replace(hp, p_fm=0.0)
        d_f, d_m = forced_termination(hp, sol.p_D_f, sol.p_D_m)
    except FixedPointError as e:
        raise NumericError(f"fixed point did not converge (residual {e.residual:.3g})") from None
    except (DivergentFlowError, SingularSystemError, GeometryError) as e:
        raise NumericError(str(e)) from None
    return {
        "derived": asdict(derive_capacities(cfg)),
        "handover_probabilities": asdict(hp),
        "fixed_point": sol.to_dict(),
        "forced_termination": {"D_f": d_f, "D_m": d_m},
    }


def cmd_solve(args) -> int:
    cfg = load_scenario(args.config, args.preset)
    record = {"manifest": manifest("solve", cfg), "scenario": cfg.to_dict(), "result": _solve(cfg)}
    _write(args.out, _dump(record))
    return EXIT_OK


def parse_sweep(spec: str) -> list[int]:
    """``n=start:stop:step`` with an inclusive stop."""
    try:
        name, rng = spec.split("=", 1)
        start, stop, step = (int(x) for x in rng.split(":"))
    except ValueError:
        raise InputError(f"bad sweep {spec!r}; expected n=start:stop:step") from None
    if name.strip() != "n":
        raise InputError("only n can be swept")
    if step <= 0 or start < 0 or stop < start:
        raise InputError("sweep needs 0 <= start <= stop and step > 0")
    return list(range(start, stop + 1, step))


def sweep_rows(cfg: ScenarioConfig, ns: list[int]) -> list[dict]:
    rows = []
    for n in ns:
        c = cfg.replace(n=n)
        report = validate(c)
        if not is_valid(report):
            raise InputError(f"n={n}: " + "; ".join(v.message for v in report if v.fatal))
        res = _solve(c)
        hp, fp, ft = res["handover_probabilities"], res["fixed_point"], res["forced_termination"]
        row = {"n": n, **hp, **{k: fp[k] for k in SWEEP_COLUMNS if k in fp}, **ft}
        rows.append({k: row[k] for k in SWEEP_COLUMNS})
    return rows


def cmd_sweep(args) -> int:
    cfg = load_scenario(args.config, args.preset)
    ns = parse_sweep(args.sweep)
    rows = sweep_rows(cfg, ns)
    buf = io.StringIO()
    buf.write("# " + json.dumps(manifest("sweep", cfg, sweep=args.sweep), sort_keys=True) + "\n")
    w = csv.DictWriter(buf, fieldnames=SWEEP_COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})
    _write(args.out, buf.getvalue())
    return EXIT_OK


def _seeds(text: str) -> list[int]:
    try:
        seeds = [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise InputError(f"bad --seeds {text!r}") from None
    if not seeds:
        raise InputError("need at least one seed")
    return seeds


def cmd_simulate(args) -> int:
    cfg = load_scenario(args.config, args.preset)
    mode = MODE_ALIASES[args.mode]
    seeds = _seeds(args.seeds)
    if args.horizon <= 0:
        raise InputError("--horizon must be positive")
    warmup = args.warmup if args.warmup is not None else args.horizon // 5
    if not 0 <= warmup < args.horizon:
        raise InputError("--warmup must lie in [0, horizon)")
    try:
        m = run_replications(cfg, mode, seeds, args.horizon, warmup, n_macro=args.cells,
                             workers=args.workers)
    except SimConfigError as e:
        raise NumericError(str(e)) from None
    except FixedPointError as e:
        raise NumericError(f"fixed point did not converge (residual {e.residual:.3g})") from None
    metrics = m.to_dict()
    metrics["ci_available"] = m.half_width is not None
    record = {
        "manifest": manifest("simulate", cfg, seeds=seeds, mode=mode, horizon_events=args.horizon,
                             warmup_events=warmup, n_macro=args.cells),
        "scenario": cfg.to_dict(),
        "metrics": metrics,
    }
    _write(args.out, _dump(record))
    return EXIT_OK


def cmd_validate(args) -> int:
    cfg = load_scenario(args.config, args.preset)
    budget = SimBudget()
    if args.seeds:
        budget.seeds = _seeds(args.seeds)
    if args.horizon:
        budget.chain_events = budget.closed_events = args.horizon
        budget.compare_events = max(args.horizon // 3, 1000)
    echo = (lambda s: print(s, file=sys.stderr)) if args.out not in (None, "-") else None
    results = run_suite(cfg, budget, rel_tol=args.tol, echo=echo)
    passed = all(r.passed for r in results)
    record = {
        "manifest": manifest("validate", cfg, seeds=list(budget.seeds), tolerances={"relative": args.tol}),
        "passed": passed,
        "checks": [{"name": r.name, "passed": r.passed, "seconds": r.seconds, "details": r.details}
                   for r in results],
    }
    _write(args.out, json.dumps(record, indent=2, sort_keys=True, default=str) + "\n")
    return EXIT_OK if passed else EXIT_CHECK_FAILED


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="femtocac", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        src = sp.add_mutually_exclusive_group(required=True)
        src.add_argument("--config", metavar="PATH", help="scenario JSON file")
        src.add_argument("--preset", choices=sorted(PRESETS), help="shipped scenario")
        sp.add_argument("--out", metavar="PATH", help="output file (default stdout)")

    sp = sub.add_parser("solve", help="fixed-point solution of the analytic model")
    common(sp)
    sp.set_defaults(func=cmd_solve)

    sp = sub.add_parser("sweep", help="analytic results over a range of femtocell counts")
    common(sp)
    sp.add_argument("--sweep", required=True, metavar="n=a:b:step")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("simulate", help="run simulation replications")
    common(sp)
    sp.add_argument("--mode", choices=sorted(MODE_ALIASES), default="chain")
    sp.add_argument("--seeds", default="0")
    sp.add_argument("--horizon", type=int, default=1_000_000, help="events per replication")
    sp.add_argument("--warmup", type=int, default=None, help="discarded events (default 20%%)")
    sp.add_argument("--cells", type=int, default=7, help="macrocells in the closed-loop ring")
    sp.add_argument("--workers", type=int, default=1)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("validate", help="run the cross-validation suite")
    common(sp)
    sp.add_argument("--tol", type=float, default=0.05, help="relative tolerance of sim-vs-analytic checks")
    sp.add_argument("--seeds", default=None)
    sp.add_argument("--horizon", type=int, default=None)
    sp.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InputError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except NumericError as e:
        print(f"numeric error: {e}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
