"""Command line entry point.

Exit codes: 0 success, 1 configuration or input error, 2 monitor violations
or inadmissible constants, 3 integrity error (blow-up), 4 I/O failure.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import SimulationConfig, config_values, load_config
from .constants import discriminant, verify_admissible, derive_constants
from .convergence import convergence
from .errors import ConfigError, EpidiffuseError, HypothesisError, InputError
from .io import fmt, json_text, write_csv, write_field_csv, write_json
from .monitor import SAMPLE_COLUMNS
from .solver import run

logger = logging.getLogger("epidiffuse")

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_VIOLATION = 2
EXIT_INTEGRITY = 3
EXIT_IO = 4


def exit_code_from_report(report: dict) -> int:
    """Exit status implied by a saved ``report.json`` payload."""
    monitor = report.get("monitor", report)
    if monitor.get("integrity_error"):
        return EXIT_INTEGRITY
    if monitor.get("violations"):
        return EXIT_VIOLATION
    return EXIT_OK


def _prepare_output(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    if not os.access(out, os.W_OK):
        raise PermissionError(f"output directory {out} is not writable")
    return out


def _constants_for(cfg: SimulationConfig):
    u0, _ = cfg.initial.sample(cfg.grid, cfg.seed)
    override = cfg.constants_override or (None, None)
    consts = derive_constants(
        cfg.params, float(np.max(np.abs(u0))), cfg.grid.measure, override[0], override[1]
    )
    adm = verify_admissible(cfg.params, consts.K, consts.delta, consts.epsilon)
    return consts, adm


def cmd_run(cfg: SimulationConfig, as_json: bool = False) -> int:
    try:
        out = _prepare_output(cfg.output_dir)
    except OSError as exc:
        logger.error("cannot use output directory: %s", exc)
        return EXIT_IO
    try:
        result = run(cfg)
    except (HypothesisError, InputError) as exc:
        logger.error("%s", exc)
        return EXIT_INPUT

    rep = result.report
    include_w = cfg.monitor.track_w
    columns = SAMPLE_COLUMNS if include_w else SAMPLE_COLUMNS[:-1]
    payload = {
        "config": config_values(cfg),
        "hypotheses": result.hypotheses.to_dict(),
        "constants": result.constants.to_dict() if result.constants else None,
        "admissibility": result.admissibility.to_dict() if result.admissibility else None,
        "dt": result.dt,
        "steps": result.steps,
        "clamp_count": result.clamp_count,
        "timeseries_columns": list(columns),
        "monitor": rep.to_dict(),
    }
    code = exit_code_from_report(payload)
    payload["exit_code"] = code
    try:
        write_csv(out / "timeseries.csv", columns, rep.rows(include_w))
        for snap in result.snapshots:
            write_field_csv(out / f"snapshot_{snap.t:.6f}.csv", snap.grid, u=snap.u, v=snap.v)
        if result.admissibility is not None:
            write_json(out / "admissibility.json", result.admissibility.to_dict())
        write_json(out / "report.json", payload)
    except OSError as exc:
        logger.error("writing results failed: %s", exc)
        return EXIT_IO

    if as_json:
        sys.stdout.write(json_text(payload))
    else:
        last = rep.samples[-1] if rep.samples else None
        print(f"steps: {result.steps}  dt: {fmt(result.dt)}  samples: {len(rep.samples)}")
        if last is not None:
            print(f"final t: {fmt(last.t)}  J: {fmt(last.J)}  min u: {fmt(last.min_u)}  min v: {fmt(last.min_v)}")
        for name, reason in rep.disabled.items():
            print(f"monitor {name} disabled: {reason}")
        counts = rep.violation_counts()
        print("violations: " + (", ".join(f"{k}={v}" for k, v in counts.items()) or "none"))
        if rep.integrity_error:
            print(f"integrity error: {rep.integrity_error}")
        print(f"results written to {out}")
    return code


def cmd_check_constants(cfg: SimulationConfig, as_json: bool = False, output=None) -> int:
    try:
        consts, adm = _constants_for(cfg)
    except HypothesisError as exc:
        logger.error("%s", exc)
        return EXIT_INPUT
    payload = {"constants": consts.to_dict(), "admissibility": adm.to_dict()}
    if output is not None:
        try:
            write_json(_prepare_output(output) / "admissibility.json", adm.to_dict())
        except OSError as exc:
            logger.error("writing admissibility.json failed: %s", exc)
            return EXIT_IO
    if as_json:
        sys.stdout.write(json_text(payload))
    else:
        rows = [
            ("K", consts.K),
            ("delta", consts.delta),
            ("delta_max", consts.delta_max),
            ("epsilon", consts.epsilon),
            ("epsilon_max", consts.epsilon_max),
            ("gamma", consts.gamma),
            ("max_discriminant [0,K]", adm.max_discriminant),
            ("max_discriminant [0,2K]", adm.max_discriminant_extended),
            ("decay_lhs (target -mu/2)", adm.decay_lhs),
            ("decay_lhs_sampled", adm.decay_lhs_sampled),
            ("weight_lhs (target <= 0)", adm.weight_lhs),
            ("samples", adm.n_samples),
        ]
        for name, value in rows:
            print(f"{name:<28}{fmt(value)}")
        for check in ("delta_in_range", "epsilon_in_range", "discriminant_ok", "decay_ok", "weight_ok"):
            print(f"{check:<28}{'pass' if getattr(adm, check) else 'FAIL'}")
        for name, witness in adm.failures().items():
            print(f"witness {name}: exceeds bound by {fmt(witness)}")
    return EXIT_OK if adm.admissible else EXIT_VIOLATION


def cmd_scan_discriminant(cfg: SimulationConfig, samples: int = 1001, as_json: bool = False) -> int:
    try:
        consts, adm = _constants_for(cfg)
    except HypothesisError as exc:
        logger.error("%s", exc)
        return EXIT_INPUT
    u = np.linspace(0.0, 2.0 * consts.K, 2 * samples - 1)
    D = discriminant(cfg.params, consts.delta, consts.epsilon, u)
    inside = u <= consts.K
    payload = {
        "delta": consts.delta,
        "epsilon": consts.epsilon,
        "K": consts.K,
        "max_on_0_K": float(np.max(D[inside])),
        "max_on_0_2K": float(np.max(D)),
        "u": u.tolist(),
        "D": D.tolist(),
    }
    if as_json:
        sys.stdout.write(json_text(payload))
    else:
        print("u,D")
        for x, y in zip(u, D):
            print(f"{fmt(x)},{fmt(y)}")
        print(f"# max D on [0,K]: {fmt(payload['max_on_0_K'])}", file=sys.stderr)
        print(f"# max D on [0,2K]: {fmt(payload['max_on_0_2K'])}", file=sys.stderr)
    return EXIT_OK if payload["max_on_0_K"] <= adm.slack else EXIT_VIOLATION


def cmd_convergence(cfg: SimulationConfig, levels: int = 3, as_json: bool = False) -> int:
    if levels < 2:
        logger.error("convergence needs --levels >= 2, got %d", levels)
        return EXIT_INPUT
    try:
        temporal, spatial = convergence(cfg, levels)
    except (InputError, HypothesisError) as exc:
        logger.error("%s", exc)
        return EXIT_INPUT
    except EpidiffuseError as exc:
        logger.error("convergence run failed: %s", exc)
        return EXIT_INTEGRITY
    payload = {
        "temporal": temporal.to_dict(),
        "spatial": spatial.to_dict(),
        "temporal_order": temporal.order,
        "spatial_order": spatial.order,
    }
    if as_json:
        sys.stdout.write(json_text(payload))
    else:
        for study, label in ((temporal, "dt"), (spatial, "h")):
            print(f"[{study.kind}] {study.note}")
            if not study.errors:
                continue
            print(f"{'level':>5} {label:>14} {'steps':>10} {'error':>14} {'order':>8}")
            orders = [None] + study.orders
            for k, (size, n, err) in enumerate(zip(study.sizes, study.steps, study.errors)):
                o = "" if orders[k] is None else f"{orders[k]:.4f}"
                print(f"{k:>5} {size:>14.6g} {n:>10} {err:>14.6e} {o:>8}")
        print(f"temporal order: {fmt(temporal.order) if temporal.order is not None else 'n/a'}")
        print(f"spatial order: {fmt(spatial.order) if spatial.order is not None else 'n/a'}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="epidiffuse",
        description="Simulate and verify a cross-diffusion susceptible/infective model.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log defaulted keys and progress")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="scenario file (key = value lines)")
    common.add_argument("--relaxed", action="store_true", help="accept failed hypotheses")
    common.add_argument("--output", help="output directory (overrides output_dir)")
    common.add_argument("--json", action="store_true", help="print JSON instead of text")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="integrate and monitor a scenario")
    sub.add_parser("check-constants", parents=[common], help="derive and verify Lyapunov constants")
    conv = sub.add_parser("convergence", parents=[common], help="temporal and spatial refinement study")
    conv.add_argument("--levels", type=int, default=3)
    scan = sub.add_parser("scan-discriminant", parents=[common], help="tabulate the discriminant on [0, 2K]")
    scan.add_argument("--samples", type=int, default=1001)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = load_config(args.config, relaxed=True if args.relaxed else None, output_dir=args.output)
    except ConfigError as exc:
        logger.error("%s", exc)
        return EXIT_INPUT
    if args.command == "run":
        return cmd_run(cfg, args.json)
    if args.command == "check-constants":
        return cmd_check_constants(cfg, args.json, args.output)
    if args.command == "convergence":
        return cmd_convergence(cfg, args.levels, args.json)
    return cmd_scan_discriminant(cfg, args.samples, args.json)


if __name__ == "__main__":
    sys.exit(main())
