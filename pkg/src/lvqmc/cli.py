"""Command-line front end.

Every command prints one JSON report (or CSV rows) carrying the resolved run
document and the library version. Failures print a JSON error object and exit
with a nonzero status: 2 for unusable input, 1 for computations that ran and
failed.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import __version__
from .circuit import AmplitudeRangeError, SimulationBudgetExceeded
from .config import ConfigError, RunConfig, load_config, parse_config
from .fixedpoint import FixedPointOverflow
from .icdf import IcdfFitError, approximation_error, eval_icdf, fit_icdf
from .lvmodel import (
    EnumerationBudgetExceeded,
    FixedStepTables,
    MonotonicityError,
    bs_call_price,
    monotonicity_check,
    price_enumerated,
    price_sampled,
)
from .prn_way import ReversibilityError, build_full, check_update_reversible, simulate_prn
from .prng import lcg_jump
from .resources import (
    compare_ways,
    format_table,
    prn_builder_consistency,
    prn_way_report,
    rn_builder_consistency,
    rn_way_report,
)
from .rn_way import build_full_rn, simulate_rn

__all__ = ["main", "build_parser", "CommandFailed"]

RN_TOLERANCE = 1e-6


class CommandFailed(RuntimeError):
    """A computation ran but its outcome is a failure; carries the partial report."""

    def __init__(self, message: str, report: dict | None = None):
        super().__init__(message)
        self.report = report


# Report plumbing -----------------------------------------------------------


def _jsonable(x: Any) -> Any:
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else None
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def _envelope(command: str, run: RunConfig, result: dict, seed_offset: int) -> dict:
    return {
        "command": command,
        "version": __version__,
        "seed_offset": seed_offset,
        "config": run.resolved(),
        "result": result,
    }


def _flatten(d: dict, prefix: str = "") -> list[tuple[str, Any]]:
    out: list[tuple[str, Any]] = []
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.extend(_flatten(v, key + "."))
        elif isinstance(v, list):
            out.append((key, ";".join(json.dumps(x) for x in v)))
        else:
            out.append((key, v))
    return out


def _to_csv(report: dict, rows: list[dict] | None) -> str:
    buf = io.StringIO()
    buf.write(f"# lvqmc {report['version']} {report['command']}\n")
    buf.write(f"# config {json.dumps(report['config'], sort_keys=True)}\n")
    writer = csv.writer(buf, lineterminator="\n")
    if rows:
        cols = list(rows[0])
        writer.writerow(cols)
        for row in rows:
            writer.writerow(
                [";".join(map(str, row[c])) if isinstance(row[c], list) else row[c] for c in cols]
            )
    else:
        writer.writerow(["key", "value"])
        writer.writerows(_flatten(report["result"]))
    return buf.getvalue()


def _emit(report: dict, rows: list[dict] | None, fmt: str, out: str | None) -> None:
    report = _jsonable(report)
    text = _to_csv(report, rows) if fmt == "csv" else json.dumps(report, indent=2) + "\n"
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


# Commands ------------------------------------------------------------------


def _apply_seed_offset(run: RunConfig, offset: int) -> None:
    """Start the stream ``offset`` generator elements later than configured."""
    if offset:
        if offset < 0:
            raise ConfigError("--seed-offset must be non-negative", "--seed-offset")
        run.engine["prng"]["seed"] = lcg_jump(run.lcg, run.seed, offset)


def _black_scholes_reference(run: RunConfig) -> float | None:
    m, p = run.raw.get("model", {}), run.raw.get("payoff", {})
    if m.get("kind") == "black_scholes" and p.get("kind") == "european_call":
        return bs_call_price(m["maturity"], p["strike"], m["s0"], m["sigma"])
    return None


def cmd_price_classical(run: RunConfig) -> tuple[dict, list[dict] | None]:
    model, payoffs = run.require_model()
    fmt = run.fmt
    est = price_sampled(model, payoffs, run.stream(), run.icdf(), run.n_paths, fmt)
    result: dict[str, Any] = {
        "price": est.price,
        "std_error": est.std_error,
        "n_paths": est.n_paths,
        "arithmetic": "fixed" if fmt is not None else "float",
    }
    if fmt is not None:
        result["encoding_loss"] = FixedStepTables.build(model, payoffs, fmt).encoding_loss
    sn = run.sn
    try:
        result["enumerated_price"] = price_enumerated(
            model, payoffs, sn.grid().normalized(), fmt, "accumulate", max_patterns=run.budget
        )
        result["enumeration_grid_points"] = sn.n_points
    except (EnumerationBudgetExceeded, FixedPointOverflow) as exc:
        result["enumerated_price"] = None
        result["enumeration_skipped"] = str(exc)
    bs = _black_scholes_reference(run)
    if bs is not None:
        result["black_scholes_price"] = bs
        result["within_3_std_errors"] = abs(est.price - bs) <= 3 * est.std_error
    return result, None


def cmd_simulate(run: RunConfig) -> tuple[dict, list[dict] | None]:
    if run.way == "prn":
        cfg = run.prn_config()
        sim = simulate_prn(cfg, run.budget)
        circ = build_full(cfg)
        result = {
            "way": "prn",
            "price": sim.price,
            "probability": sim.probability,
            "scale": sim.scale,
            "classical_price": sim.classical_price,
            "match": sim.match,
            "ancillas_clean": sim.hygiene,
            "mismatches": sim.mismatches,
            "paths": sim.paths,
            "circuit": circ.summary(),
        }
        if not (sim.match and sim.hygiene):
            raise CommandFailed("quantum branches differ from the classical fixed-point paths", result)
        return result, sim.paths
    if run.way == "rn":
        cfg = run.rn_config()
        sim = simulate_rn(cfg, run.budget)
        circ = build_full_rn(cfg)
        result = {
            "way": "rn",
            "price": sim.price,
            "probability": sim.probability,
            "scale": sim.scale,
            "enumerated_price": sim.enumerated_price,
            "difference": sim.difference,
            "match": sim.difference <= RN_TOLERANCE,
            "tolerance": RN_TOLERANCE,
            "n_branches": sim.n_branches,
            "circuit": circ.summary(),
        }
        if not result["match"]:
            raise CommandFailed("circuit expectation differs from enumeration", result)
        return result, None
    raise ConfigError("simulate needs engine.way set to 'prn' or 'rn'", "engine/way")


def cmd_resources(run: RunConfig, params) -> tuple[dict, list[dict] | None]:
    result = compare_ways(params)
    result["table"] = format_table(params).splitlines()
    if run.model is not None and run.way in ("prn", "rn"):
        if run.way == "prn":
            result["builder_consistency"] = prn_builder_consistency(run.prn_config())
        else:
            result["builder_consistency"] = rn_builder_consistency(run.rn_config())
    rows = []
    for rep in (prn_way_report(params), rn_way_report(params)):
        rows.append(
            {
                "way": rep.label,
                "qubits": rep.qubits,
                "t_count": rep.t_count,
                "qubits_2sf": rep.qubits_2sf,
                "t_count_2sf": rep.t_count_2sf,
            }
        )
    return result, rows


def cmd_fit_icdf(run: RunConfig, artifact: str | None) -> tuple[dict, list[dict] | None]:
    spec = run.engine["icdf"]
    if "path" in spec:
        raise ConfigError("fit-icdf needs a fit spec, not a file path, in engine.icdf", "engine/icdf")
    approx = fit_icdf(tuple(spec["domain"]), spec["target_err"], spec["max_intervals"], spec["strategy"])
    checked = approximation_error(approx)
    if artifact:
        approx.save(artifact)
    result = {
        "n_intervals": approx.n_intervals,
        "max_err": max(approx.max_err, checked),
        "target_err": spec["target_err"],
        "domain": list(approx.domain),
        "within_target": max(approx.max_err, checked) <= spec["target_err"],
        "artifact": artifact,
    }
    if artifact is None:
        result["approximation"] = approx.to_dict()
    return result, None


def _draw_range(run: RunConfig) -> tuple[float, float]:
    if run.way == "prn":
        return run.prn_config().icdf_table.output_range()
    if run.way == "rn":
        grid = run.sn.grid()
        return grid.x_lo, grid.x_lo + (grid.n_points - 1) * grid.step
    top = 1.0 - 2.0 ** -run.n_dig
    lo, hi = eval_icdf(run.icdf(), np.array([0.0, top]))
    return float(lo), float(hi)


def _check(name: str, passed: bool, detail: Any = None) -> dict:
    return {"name": name, "passed": bool(passed), "detail": detail}


def cmd_validate(run: RunConfig) -> tuple[dict, list[dict] | None]:
    model, payoffs = run.require_model()
    checks = [_check("schema", True), _check("sigma_positive", not model.sigma_violations())]
    w_min, w_max = _draw_range(run)
    w_min, w_max = min(w_min, -1e-12), max(w_max, 1e-12)
    report = monotonicity_check(model, w_min, w_max)
    continuity = [v for v in report.violations if "discontinuous" in v]
    slope = [v for v in report.violations if "discontinuous" not in v]
    checks.append(_check("continuity", not continuity, continuity))
    checks.append(_check("monotonicity", not slope, {"w_min": w_min, "w_max": w_max, "violations": slope}))
    fmt = run.fmt
    if fmt is not None:
        try:
            tables = FixedStepTables.build(model, payoffs, fmt)
            checks.append(_check("representability", True, {"encoding_loss": tables.encoding_loss}))
        except (FixedPointOverflow, ValueError) as exc:
            checks.append(_check("representability", False, str(exc)))
    if run.way == "prn" and fmt is not None and not slope:
        cfg = run.prn_config()
        problems = []
        for j in range(1, model.n_t + 1):
            try:
                check_update_reversible(cfg, j)
            except (ReversibilityError, MonotonicityError, FixedPointOverflow) as exc:
                problems.append(str(exc))
        checks.append(_check("update_reversible", not problems, problems))
    valid = all(c["passed"] for c in checks)
    result = {"valid": valid, "way": run.way, "checks": checks}
    if not valid:
        raise CommandFailed("configuration failed validation", result)
    return result, [{"name": c["name"], "passed": c["passed"]} for c in checks]


# Entry point ---------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lvqmc", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"lvqmc {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON run document")
    common.add_argument("--out", metavar="PATH", help="write the report here instead of stdout")
    common.add_argument("--format", choices=("json", "csv"), help="report format (default json)")
    common.add_argument("--seed-offset", type=int, default=0, metavar="INT",
                        help="start the generator this many elements after the configured seed")
    common.add_argument("--budget", type=int, metavar="INT",
                        help="maximum branches for simulation and enumeration")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("price-classical", parents=[common], help="classical Monte Carlo price")
    sub.add_parser("simulate", parents=[common], help="simulate the configured circuit")
    sub.add_parser("resources", parents=[common], help="closed-form qubit and T-count estimates")
    sub.add_parser(
        "fit-icdf", parents=[common],
        help="fit the inverse normal CDF; --out names the saved approximation, the report goes to stdout",
    )
    sub.add_parser("validate", parents=[common], help="check a run document without pricing")
    return parser


def _error_report(kind: str, message: str, where: str = "", partial: dict | None = None) -> dict:
    err: dict[str, Any] = {"type": kind, "message": message}
    if where:
        err["where"] = where
    out: dict[str, Any] = {"version": __version__, "error": err}
    if partial is not None:
        out["result"] = partial
    return out


def _load(args) -> RunConfig:
    needs_model = args.command not in ("resources", "fit-icdf")
    if args.config is None:
        if needs_model:
            raise ConfigError("--config is required for this command", "--config")
        return parse_config({}, require_model=False)
    return load_config(args.config, needs_model)


def run_command(args) -> tuple[dict, list[dict] | None, RunConfig]:
    command = args.command
    run = _load(args)
    if args.budget is not None:
        if args.budget < 1:
            raise ConfigError("--budget must be positive", "--budget")
        run.engine["budget"] = args.budget
    _apply_seed_offset(run, args.seed_offset)
    if command == "price-classical":
        result, rows = cmd_price_classical(run)
    elif command == "simulate":
        result, rows = cmd_simulate(run)
    elif command == "resources":
        result, rows = cmd_resources(run, run.resources)
    elif command == "fit-icdf":
        result, rows = cmd_fit_icdf(run, args.out)
    else:
        result, rows = cmd_validate(run)
    return result, rows, run


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    fmt, out = args.format, args.out
    try:
        result, rows, run = run_command(args)
    except ConfigError as exc:
        _emit_error(_error_report("ConfigError", str(exc), exc.where))
        return 2
    except CommandFailed as exc:
        _emit_error(_error_report("CommandFailed", str(exc), partial=exc.report))
        return 1
    except SimulationBudgetExceeded as exc:
        _emit_error(_error_report("SimulationBudgetExceeded", f"{exc} (or raise --budget)"))
        return 1
    except (MonotonicityError, ReversibilityError, FixedPointOverflow, AmplitudeRangeError,
            IcdfFitError, EnumerationBudgetExceeded) as exc:
        _emit_error(_error_report(type(exc).__name__, str(exc)))
        return 1
    fmt = fmt or run.output["format"]
    out = out or run.output["path"]
    if args.command == "resources":
        sys.stderr.write(format_table(run.resources) + "\n")
    elif args.command == "fit-icdf":
        out = None
    _emit(_envelope(args.command, run, result, args.seed_offset), rows, fmt or "json", out)
    return 0


def _emit_error(report: dict) -> None:
    sys.stdout.write(json.dumps(_jsonable(report), indent=2) + "\n")


if __name__ == "__main__":
    sys.exit(main())
