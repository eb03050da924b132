"""Command-line front end.

Subcommands:

- ``eval``      closed-form metrics and bounds for one configuration (JSON)
- ``bounds``    bound envelopes over an effective-generation-probability grid (CSV)
- ``sweep``     metrics over a grid of one parameter (CSV)
- ``frontier``  per-policy q-sweeps tracing availability/fidelity trade-offs (CSV)
- ``simulate``  Monte-Carlo estimates with standard errors (JSON)
- ``validate``  closed form vs simulation with z-scores; fails on |z| > 4

Exit codes: 0 success, 1 validation z-score failure, 2 configuration error,
3 domain error from the model itself.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import asdict
from typing import Any

import numpy as np

from . import analytics, policies, simulator
from .errors import ConfigurationError, EntBufferError
from .states import BellDiagonalState, werner_from_fidelity

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_CONFIG = 2
EXIT_DOMAIN = 3

Z_THRESHOLD = 4.0
DEFAULT_FRONTIER_GRID = 201

CSV_HEADER = "variable,value,A,F_bar,A_lower,A_upper,F_lower,F_upper,policy_label"


def _fmt(x: float) -> str:
    """CSV cell: 12 significant digits, '.' decimal separator."""
    if isinstance(x, float) and math.isnan(x):
        return "nan"
    return f"{x:.12g}"


def _require(cfg: dict, key: str, where: str) -> Any:
    if key not in cfg:
        raise ConfigurationError(f"config error at {where}: missing required key '{key}'")
    return cfg[key]


def parse_new_link(spec: Any) -> BellDiagonalState:
    if not isinstance(spec, dict) or "type" not in spec:
        raise ConfigurationError(
            "config error at system.new_link: expected {'type': 'werner'|'bell_diagonal', ...}"
        )
    if spec["type"] == "werner":
        return werner_from_fidelity(float(_require(spec, "fidelity", "system.new_link")))
    if spec["type"] == "bell_diagonal":
        diag = _require(spec, "diag", "system.new_link")
        if not isinstance(diag, list) or len(diag) != 4:
            raise ConfigurationError(
                "config error at system.new_link.diag: expected a list of 4 numbers"
            )
        return BellDiagonalState(tuple(float(x) for x in diag))
    raise ConfigurationError(
        f"config error at system.new_link.type: unknown type {spec['type']!r}"
    )


def parse_system(cfg: dict) -> analytics.SystemParams:
    sys_cfg = _require(cfg, "system", "top level")
    if not isinstance(sys_cfg, dict):
        raise ConfigurationError("config error at system: expected a mapping")
    try:
        return analytics.SystemParams(
            n=int(_require(sys_cfg, "n", "system")),
            p_gen=float(_require(sys_cfg, "p_gen", "system")),
            p_con=float(_require(sys_cfg, "p_con", "system")),
            gamma=float(_require(sys_cfg, "gamma", "system")),
            q=float(sys_cfg.get("q", 1.0)),
            new_link=parse_new_link(_require(sys_cfg, "new_link", "system")),
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, EntBufferError):
            raise
        raise ConfigurationError(f"config error at system: {exc}") from exc


def parse_sim_config(cfg: dict, args: argparse.Namespace) -> simulator.SimConfig:
    sim_cfg = dict(cfg.get("sim", {}))
    if args.steps is not None:
        sim_cfg["max_steps"] = args.steps
    if args.reps is not None:
        sim_cfg["replications"] = args.reps
    if args.seed is not None:
        sim_cfg["seed"] = args.seed
    allowed = {"max_steps", "replications", "seed", "warmup_steps", "min_consumption_events"}
    unknown = set(sim_cfg) - allowed
    if unknown:
        raise ConfigurationError(f"config error at sim: unknown keys {sorted(unknown)}")
    return simulator.SimConfig(**{k: int(v) for k, v in sim_cfg.items()})


def _policy_factory(spec: dict):
    """Policy builder deferred over params, so sweeps of f_new rebuild coefficients."""

    def build(params: analytics.SystemParams) -> policies.PurificationPolicy:
        return policies.build_policy(spec, params.n, params.new_link)

    return build


def parse_grid(cfg: dict, args: argparse.Namespace) -> tuple[str, np.ndarray]:
    sweep_cfg = dict(cfg.get("sweep", {}))
    if args.var is not None:
        sweep_cfg["variable"] = args.var
    if args.grid_from is not None:
        sweep_cfg["from"] = args.grid_from
    if args.grid_to is not None:
        sweep_cfg["to"] = args.grid_to
    if args.grid is not None:
        sweep_cfg["steps"] = args.grid
    variable = sweep_cfg.get("variable")
    if variable is None:
        raise ConfigurationError(
            "config error at sweep.variable: required (or pass --var on the command line)"
        )
    lo = float(sweep_cfg.get("from", 0.0))
    hi = float(sweep_cfg.get("to", 1.0))
    steps = int(sweep_cfg.get("steps", 11))
    if steps < 1:
        raise ConfigurationError(f"config error at sweep.steps: must be >= 1, got {steps}")
    return str(variable), np.linspace(lo, hi, steps)


def _emit(text: str, args: argparse.Namespace) -> None:
    if args.out:
        with open(args.out, "w", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _json_dumps(payload: Any) -> str:
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def _rows_to_csv(rows: list[analytics.SweepRow]) -> str:
    lines = [CSV_HEADER]
    for r in rows:
        lines.append(
            ",".join(
                [
                    r.variable,
                    _fmt(r.value),
                    _fmt(r.availability),
                    _fmt(r.avg_consumed_fidelity),
                    _fmt(r.a_lower),
                    _fmt(r.a_upper),
                    _fmt(r.f_lower),
                    _fmt(r.f_upper),
                    r.policy_label,
                ]
            )
        )
    return "\n".join(lines) + "\n"


def _rows_to_json(rows: list[analytics.SweepRow]) -> str:
    return _json_dumps([asdict(r) for r in rows])


def _check_rows(rows: list[analytics.SweepRow]) -> None:
    # A bound violation in emitted output indicates an implementation bug;
    # refuse to emit rather than publish inconsistent tables.
    bad = [r for r in rows if not r.bounds_ok]
    if bad:
        r = bad[0]
        raise EntBufferError(
            f"bound containment violated at {r.variable}={r.value}: "
            f"A={r.availability}, bounds=({r.a_lower}, {r.a_upper}); "
            f"F={r.avg_consumed_fidelity}, bounds=({r.f_lower}, {r.f_upper})"
        )
    for r in rows:
        if r.error is not None:
            print(f"warning: {r.variable}={r.value}: {r.error}", file=sys.stderr)


# ---------------------------------------------------------------------------
# subcommands


def cmd_eval(cfg: dict, args: argparse.Namespace) -> int:
    params = parse_system(cfg)
    policy = policies.build_policy(_require(cfg, "policy", "top level"), params.n, params.new_link)
    metrics = analytics.evaluate(params, policy)
    a_lo, a_hi = analytics.availability_bounds(params)
    f_lo, f_hi = analytics.fidelity_bounds(params)
    payload = {
        "policy_label": policy.label,
        "availability": metrics.availability,
        "avg_consumed_fidelity": metrics.avg_consumed_fidelity,
        "expected_occupied_time": metrics.expected_occupied_time,
        "expected_generation_time": metrics.expected_generation_time,
        "availability_bounds": [a_lo, a_hi],
        "fidelity_bounds": [f_lo, f_hi],
        "p_gen_star": params.p_gen_star,
    }
    _emit(_json_dumps(payload), args)
    return EXIT_OK


def cmd_bounds(cfg: dict, args: argparse.Namespace) -> int:
    params = parse_system(cfg)
    sweep_cfg = cfg.get("sweep", {})
    lo = float(sweep_cfg.get("from", 0.005))
    hi = float(sweep_cfg.get("to", 1.0))
    steps = int(sweep_cfg.get("steps", DEFAULT_FRONTIER_GRID))
    lines = ["p_gen_star,A_lower,A_upper,F_lower,F_upper"]
    for ps in np.linspace(lo, hi, steps):
        # Bounds depend on n and p_gen only through p_gen_star, so sweep it
        # directly with n=1.
        row = analytics.SystemParams(
            n=1, p_gen=float(ps), p_con=params.p_con, gamma=params.gamma,
            q=params.q, new_link=params.new_link,
        )
        a_lo, a_hi = analytics.availability_bounds(row)
        f_lo, f_hi = analytics.fidelity_bounds(row)
        lines.append(",".join([_fmt(ps), _fmt(a_lo), _fmt(a_hi), _fmt(f_lo), _fmt(f_hi)]))
    _emit("\n".join(lines) + "\n", args)
    return EXIT_OK


def cmd_sweep(cfg: dict, args: argparse.Namespace) -> int:
    params = parse_system(cfg)
    factory = _policy_factory(_require(cfg, "policy", "top level"))
    variable, grid = parse_grid(cfg, args)
    rows = analytics.sweep(params, factory, variable, grid)
    _check_rows(rows)
    _emit(_rows_to_csv(rows) if args.format == "csv" else _rows_to_json(rows), args)
    return EXIT_OK


def cmd_frontier(cfg: dict, args: argparse.Namespace) -> int:
    params = parse_system(cfg)
    specs = _require(cfg, "policies", "top level")
    if not isinstance(specs, list) or not specs:
        raise ConfigurationError("config error at policies: expected a non-empty list")
    grid_cfg = cfg.get("sweep", {})
    steps = int(grid_cfg.get("steps", DEFAULT_FRONTIER_GRID))
    if args.grid is not None:
        steps = args.grid
    q_grid = np.linspace(0.0, 1.0, steps)
    all_rows: list[analytics.SweepRow] = []
    for spec in specs:
        factory = _policy_factory(spec)
        kind = spec.get("kind") if isinstance(spec, dict) else None
        if kind in ("identity", "replacement"):
            # Deterministic single-point policies: identity pins q = 0,
            # replacement pins q = 1; their trade-off curve is one point.
            q_pin = 0.0 if kind == "identity" else 1.0
            rows = analytics.sweep(params, factory, "q", [q_pin])
        else:
            rows = analytics.sweep(params, factory, "q", q_grid)
        all_rows.extend(rows)
    _check_rows(all_rows)
    _emit(_rows_to_csv(all_rows) if args.format == "csv" else _rows_to_json(all_rows), args)
    return EXIT_OK


def cmd_simulate(cfg: dict, args: argparse.Namespace) -> int:
    params = parse_system(cfg)
    policy = policies.build_policy(_require(cfg, "policy", "top level"), params.n, params.new_link)
    sim_cfg = parse_sim_config(cfg, args)
    result = simulator.simulate(params, policy, sim_cfg)
    payload = {
        "policy_label": policy.label,
        "estimators": {
            "consumer_viewpoint": {
                "availability": result.a_hat,
                "availability_se": result.a_se,
                "avg_consumed_fidelity": result.f_hat,
                "avg_consumed_fidelity_se": result.f_se,
            },
            "time_average": {
                "availability": result.a_hat_time_avg,
                "availability_se": result.a_se_time_avg,
                "avg_consumed_fidelity": result.f_hat_time_avg,
                "avg_consumed_fidelity_se": result.f_se_time_avg,
            },
        },
        "total_steps": result.total_steps,
        "total_requests": result.total_requests,
        "total_served": result.total_served,
        "f_hat_defined": result.f_hat_defined,
        "sim": asdict(sim_cfg),
    }
    if not result.f_hat_defined:
        payload["diagnostic"] = (
            "no consumption events were served; the fidelity estimate is undefined"
        )
    _emit(_json_dumps(_sanitize(payload)), args)
    return EXIT_OK


def _z_score(hat: float, closed: float, se: float) -> float:
    diff = hat - closed
    if not math.isfinite(se) or se == 0.0:
        return 0.0 if abs(diff) <= 1e-12 else math.inf
    return diff / se


def validation_report(
    params: analytics.SystemParams,
    policy: policies.PurificationPolicy,
    result: simulator.SimResult,
) -> dict:
    metrics = analytics.evaluate(params, policy)
    z_a = _z_score(result.a_hat, metrics.availability, result.a_se)
    z_f = (
        _z_score(result.f_hat, metrics.avg_consumed_fidelity, result.f_se)
        if result.f_hat_defined
        else math.inf
    )
    return {
        "policy_label": policy.label,
        "analytic": {
            "availability": metrics.availability,
            "avg_consumed_fidelity": metrics.avg_consumed_fidelity,
        },
        "simulated": {
            "availability": result.a_hat,
            "availability_se": result.a_se,
            "avg_consumed_fidelity": result.f_hat,
            "avg_consumed_fidelity_se": result.f_se,
        },
        "z_scores": {"availability": z_a, "avg_consumed_fidelity": z_f},
        "passed": max(abs(z_a), abs(z_f)) <= Z_THRESHOLD,
    }


def cmd_validate(cfg: dict, args: argparse.Namespace) -> int:
    params = parse_system(cfg)
    policy = policies.build_policy(_require(cfg, "policy", "top level"), params.n, params.new_link)
    sim_cfg = parse_sim_config(cfg, args)
    if sim_cfg.replications < 2:
        raise ConfigurationError("validate needs at least 2 replications for standard errors")
    result = simulator.simulate(params, policy, sim_cfg)
    report = validation_report(params, policy, result)
    _emit(_json_dumps(_sanitize(report)), args)
    return EXIT_OK if report["passed"] else EXIT_VALIDATION


def _sanitize(obj: Any) -> Any:
    """Make NaN/inf JSON-representable as strings (json module emits invalid JSON otherwise)."""
    if isinstance(obj, dict):
        return {k: _sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_sanitize(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    return obj


COMMANDS = {
    "eval": cmd_eval,
    "bounds": cmd_bounds,
    "sweep": cmd_sweep,
    "frontier": cmd_frontier,
    "simulate": cmd_simulate,
    "validate": cmd_validate,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="entbuffer",
        description="Closed-form performance metrics and Monte-Carlo validation "
        "of purification-based entanglement buffers.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="path to a JSON run configuration")
        p.add_argument("--out", default=None, help="output path (default: stdout)")
        p.add_argument("--format", choices=("csv", "json"), default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--steps", type=int, default=None)
        p.add_argument("--reps", type=int, default=None)
        p.add_argument("--var", default=None, help="sweep variable")
        p.add_argument("--from", dest="grid_from", type=float, default=None)
        p.add_argument("--to", dest="grid_to", type=float, default=None)
        p.add_argument("--grid", type=int, default=None, help="number of grid points")
        p.add_argument(
            "--dump-config",
            action="store_true",
            help="print the resolved configuration and exit without running",
        )
    return parser


def load_config(path: str) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise ConfigurationError(f"config error: cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigurationError(
            f"config error at {path}:{exc.lineno}:{exc.colno}: {exc.msg}"
        ) from exc


def resolved_config(cfg: dict, args: argparse.Namespace) -> dict:
    """Configuration with command-line overrides folded in."""
    out = json.loads(json.dumps(cfg))  # deep copy via round-trip
    if args.seed is not None or args.steps is not None or args.reps is not None:
        sim = out.setdefault("sim", {})
        if args.seed is not None:
            sim["seed"] = args.seed
        if args.steps is not None:
            sim["max_steps"] = args.steps
        if args.reps is not None:
            sim["replications"] = args.reps
    if any(v is not None for v in (args.var, args.grid_from, args.grid_to, args.grid)):
        sweep = out.setdefault("sweep", {})
        if args.var is not None:
            sweep["variable"] = args.var
        if args.grid_from is not None:
            sweep["from"] = args.grid_from
        if args.grid_to is not None:
            sweep["to"] = args.grid_to
        if args.grid is not None:
            sweep["steps"] = args.grid
    return out


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.format is None:
        args.format = "json" if args.command in ("eval", "simulate", "validate") else "csv"
    try:
        cfg = load_config(args.config)
        if args.dump_config:
            _emit(_json_dumps(resolved_config(cfg, args)), args)
            return EXIT_OK
        return COMMANDS[args.command](cfg, args)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except EntBufferError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
