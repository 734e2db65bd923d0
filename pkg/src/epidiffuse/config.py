"""Scenario configuration files.

Format: UTF-8 text, one ``key = value`` per line, ``#`` starts a comment,
dotted keys for nesting::

    params.a = 1.0
    initial.u0.kind = expression
    initial.u0.expr = 0.25 + 0.2*cos(pi*x)
    grid.n_cells = 200

Lists are comma separated.  Every key has a fixed type; unknown keys,
duplicates and missing required keys are rejected with the offending line.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Optional


from .errors import ConfigError, EpidiffuseError
from .grid import Grid
from .io import atomic_write_text, fmt
from .model import (
    FieldSpec,
    Forcing,
    InitialData,
    ModelParams,
    Nonlinearity,
    validate_hypotheses,
)
from .monitor import MonitorSettings
from .solver import StepControl, stable_dt

logger = logging.getLogger(__name__)

REQUIRED = object()


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"expected true/false, got {text!r}")


def _parse_float(text: str) -> float:
    value = float(text)
    if math.isnan(value):
        raise ValueError("nan is not allowed")
    return value


def _parse_int(text: str) -> int:
    return int(text.strip())


def _list_of(parse: Callable[[str], Any]):
    def inner(text: str) -> tuple:
        text = text.strip()
        if not text:
            return ()
        return tuple(parse(x) for x in text.split(","))

    return inner


def _optional_float(text: str) -> Optional[float]:
    if text.strip().lower() in ("", "none", "auto"):
        return None
    return _parse_float(text)


def _string(text: str) -> str:
    return text.strip()


_FIELD_KEYS = {
    "kind": (_string, "constant"),
    "value": (_parse_float, 0.0),
    "expr": (_string, ""),
    "values": (_list_of(_parse_float), ()),
    "low": (_parse_float, 0.0),
    "high": (_parse_float, 1.0),
}

SCHEMA: dict[str, tuple[Callable[[str], Any], Any]] = {
    "params.a": (_parse_float, REQUIRED),
    "params.b": (_parse_float, REQUIRED),
    "params.d": (_parse_float, REQUIRED),
    "params.Lambda": (_parse_float, REQUIRED),
    "params.mu": (_parse_float, REQUIRED),
    "params.lambda_hat": (_optional_float, None),
    "relaxed": (_parse_bool, False),
    "forcing.kind": (_string, "constant"),
    "forcing.value": (_parse_float, 1.0),
    "forcing.breakpoints": (_list_of(_parse_float), ()),
    "forcing.values": (_list_of(_parse_float), ()),
    "forcing.mean": (_parse_float, 0.0),
    "forcing.amplitude": (_parse_float, 0.0),
    "forcing.period": (_parse_float, 1.0),
    "nonlinearity.kind": (_string, "product_power"),
    "nonlinearity.m": (_parse_float, 1.0),
    "nonlinearity.alpha": (_parse_float, 0.5),
    **{f"initial.u0.{k}": v for k, v in _FIELD_KEYS.items()},
    **{f"initial.v0.{k}": v for k, v in _FIELD_KEYS.items()},
    "grid.extents": (_list_of(_parse_float), (1.0,)),
    "grid.n_cells": (_list_of(_parse_int), REQUIRED),
    "control.t_end": (_parse_float, REQUIRED),
    "control.dt": (_optional_float, None),
    "control.safety": (_parse_float, 0.9),
    "control.output_every": (_parse_int, 1000),
    "control.path": (_string, "direct"),
    "control.snapshot_every": (_parse_int, 0),
    "constants.delta": (_optional_float, None),
    "constants.epsilon": (_optional_float, None),
    "monitor.tol": (_parse_float, 1e-6),
    "monitor.c_tol": (_parse_float, 1.0),
    "monitor.envelope_rel_tol": (_parse_float, 1e-6),
    "monitor.weight": (_string, "quadratic"),
    "monitor.track_w": (_parse_bool, False),
    "convergence.base_cells": (_parse_int, 10),
    "convergence.t_end": (_parse_float, 0.1),
    "output_dir": (_string, "output"),
    "seed": (_parse_int, 0),
}


@dataclass(frozen=True)
class ConvergenceSettings:
    base_cells: int = 10
    t_end: float = 0.1


@dataclass(frozen=True)
class SimulationConfig:
    params: ModelParams
    forcing: Forcing
    nonlinearity: Nonlinearity
    initial: InitialData
    grid: Grid
    control: StepControl
    constants_override: Optional[tuple[Optional[float], Optional[float]]] = None
    output_dir: str = "output"
    seed: int = 0
    monitor: MonitorSettings = field(default_factory=MonitorSettings)
    convergence: ConvergenceSettings = field(default_factory=ConvergenceSettings)
    defaulted: tuple[str, ...] = field(default=(), compare=False)
    source: Optional[str] = field(default=None, compare=False)

    @property
    def relaxed(self) -> bool:
        return not self.params.strict_mode


def parse_config_text(text: str, path=None) -> tuple[dict[str, Any], dict[str, int]]:
    """Parse raw text into ``{key: typed value}`` and ``{key: line number}``."""
    values: dict[str, Any] = {}
    lines: dict[str, int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", lineno, path)
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in SCHEMA:
            raise ConfigError(f"unknown key {key!r}", lineno, path)
        if key in values:
            raise ConfigError(f"duplicate key {key!r} (first set on line {lines[key]})", lineno, path)
        parse, _ = SCHEMA[key]
        try:
            values[key] = parse(value)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {exc}", lineno, path) from None
        lines[key] = lineno
    return values, lines


class _Builder:
    def __init__(self, values, lines, path):
        self.values = values
        self.lines = lines
        self.path = path
        self.defaulted: list[str] = []

    def get(self, key):
        if key in self.values:
            return self.values[key]
        default = SCHEMA[key][1]
        if default is REQUIRED:
            raise ConfigError(f"missing required key {key!r}", None, self.path)
        self.defaulted.append(key)
        return default

    def line_of(self, *prefixes) -> Optional[int]:
        found = [n for k, n in self.lines.items() if any(k.startswith(p) for p in prefixes)]
        return min(found) if found else None

    def build(self, prefixes, factory):
        try:
            return factory()
        except ConfigError:
            raise
        except (EpidiffuseError, ValueError, TypeError) as exc:
            raise ConfigError(str(exc), self.line_of(*prefixes), self.path) from None

    def field_spec(self, name):
        pre = f"initial.{name}."
        kind = self.get(pre + "kind")
        needed = {"constant": "value", "expression": "expr", "array": "values"}.get(kind)
        if needed and pre + needed not in self.values:
            raise ConfigError(
                f"{name} of kind {kind!r} needs {pre + needed}", self.line_of(pre), self.path
            )
        kwargs = {k: self.get(pre + k) for k in _FIELD_KEYS}
        return self.build((pre,), lambda: FieldSpec(**kwargs))


def build_config(values: dict, lines: Optional[dict] = None, path=None, relaxed=None, output_dir=None) -> SimulationConfig:
    """Turn parsed key/values into a validated :class:`SimulationConfig`."""
    b = _Builder(values, lines or {}, path)

    forcing = b.build(
        ("forcing.",),
        lambda: Forcing(
            kind=b.get("forcing.kind"),
            value=b.get("forcing.value"),
            breakpoints=b.get("forcing.breakpoints"),
            values=b.get("forcing.values"),
            mean=b.get("forcing.mean"),
            amplitude=b.get("forcing.amplitude"),
            period=b.get("forcing.period"),
        ),
    )
    lam_hat = b.get("params.lambda_hat")
    if lam_hat is None:
        lam_hat = forcing.natural_ceiling()
    is_relaxed = b.get("relaxed") if relaxed is None else bool(relaxed)
    params = b.build(
        ("params.",),
        lambda: ModelParams(
            a=b.get("params.a"),
            b=b.get("params.b"),
            d=b.get("params.d"),
            Lambda=b.get("params.Lambda"),
            mu=b.get("params.mu"),
            lambda_hat=lam_hat,
            strict_mode=not is_relaxed,
        ),
    )
    nl = b.build(
        ("nonlinearity.",),
        lambda: Nonlinearity(
            kind=b.get("nonlinearity.kind"), m=b.get("nonlinearity.m"), alpha=b.get("nonlinearity.alpha")
        ),
    )
    initial = InitialData(b.field_spec("u0"), b.field_spec("v0"))
    grid = b.build(
        ("grid.",), lambda: Grid.uniform(b.get("grid.extents"), b.get("grid.n_cells"))
    )
    control = b.build(
        ("control.",),
        lambda: StepControl(
            t_end=b.get("control.t_end"),
            dt=b.get("control.dt"),
            safety=b.get("control.safety"),
            output_every=b.get("control.output_every"),
            path=b.get("control.path"),
            snapshot_every=b.get("control.snapshot_every"),
        ),
    )
    delta, epsilon = b.get("constants.delta"), b.get("constants.epsilon")
    override = None if delta is None and epsilon is None else (delta, epsilon)
    monitor = b.build(
        ("monitor.",),
        lambda: MonitorSettings(
            tol=b.get("monitor.tol"),
            c_tol=b.get("monitor.c_tol"),
            envelope_rel_tol=b.get("monitor.envelope_rel_tol"),
            weight=b.get("monitor.weight"),
            track_w=b.get("monitor.track_w"),
        ),
    )
    conv = ConvergenceSettings(b.get("convergence.base_cells"), b.get("convergence.t_end"))
    if conv.base_cells < 3 or not conv.t_end > 0:
        raise ConfigError(
            "convergence needs base_cells >= 3 and t_end > 0", b.line_of("convergence."), path
        )
    seed = b.get("seed")
    out = b.get("output_dir") if output_dir is None else str(output_dir)

    for name in ("u0", "v0"):
        if getattr(initial, name).kind in ("array",):
            b.build((f"initial.{name}.",), lambda: getattr(initial, name).sample(grid))

    hyp = b.build(("initial.",), lambda: validate_hypotheses(params, initial, grid, nl, seed))
    nonneg = hyp["initial_nonnegative"]
    if not nonneg.passed:
        raise ConfigError(f"initial data must be nonnegative: {nonneg.witness}", b.line_of("initial."), path)
    if params.strict_mode and not hyp.ok:
        where = {
            "H1": ("params.",),
            "H2": ("nonlinearity.",),
            "H3": ("initial.u0.", "params.Lambda", "params.mu"),
            "lemma_pointwise": ("initial.v0.",),
        }
        failed = hyp.failed()
        first = failed[0]
        msg = "; ".join(f"{c.name} fails ({c.detail}): {c.witness}" for c in failed)
        raise ConfigError(
            f"{msg}. Set 'relaxed = true' or pass --relaxed to run anyway",
            b.line_of(*where.get(first.name, ("params.",))),
            path,
        )
    if control.path == "transformed" and not params.transform_available:
        raise ConfigError(
            "transformed path needs d > a and mu > 0", b.line_of("control.path"), path
        )
    if control.dt is not None:
        limit = stable_dt(params, grid, control.safety, control.path)
        if control.dt > limit * (1 + 1e-12):
            raise ConfigError(
                f"dt = {control.dt:g} exceeds the stable step {limit:g} for the {control.path} path",
                b.lines.get("control.dt"),
                path,
            )

    cfg = SimulationConfig(
        params=params,
        forcing=forcing,
        nonlinearity=nl,
        initial=initial,
        grid=grid,
        control=control,
        constants_override=override,
        output_dir=out,
        seed=seed,
        monitor=monitor,
        convergence=conv,
        defaulted=tuple(b.defaulted),
        source=str(path) if path is not None else None,
    )
    for key in b.defaulted:
        logger.info("default %s = %s", key, _default_repr(cfg, key))
    if b.get("params.lambda_hat") is None:
        logger.info("lambda_hat taken from forcing ceiling: %s", fmt(lam_hat))
    return cfg


def _default_repr(cfg, key):
    value = config_values(cfg).get(key)
    return value if value is not None else "unset"


def load_config(path, relaxed=None, output_dir=None) -> SimulationConfig:
    """Read, type-check and validate a configuration file.

    ``relaxed`` / ``output_dir`` override the file when not None.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}", None, path) from None
    values, lines = parse_config_text(text, path)
    return build_config(values, lines, path, relaxed, output_dir)


def _fmt_list(xs) -> str:
    return ", ".join(fmt(x) for x in xs)


def config_values(cfg: SimulationConfig) -> dict[str, str]:
    """Every key of the schema rendered as config-file text."""
    p, f, n, c = cfg.params, cfg.forcing, cfg.nonlinearity, cfg.control
    out = {
        "params.a": fmt(p.a),
        "params.b": fmt(p.b),
        "params.d": fmt(p.d),
        "params.Lambda": fmt(p.Lambda),
        "params.mu": fmt(p.mu),
        "params.lambda_hat": fmt(p.lambda_hat),
        "relaxed": "true" if cfg.relaxed else "false",
        "forcing.kind": f.kind,
        "forcing.value": fmt(f.value),
        "forcing.breakpoints": _fmt_list(f.breakpoints),
        "forcing.values": _fmt_list(f.values),
        "forcing.mean": fmt(f.mean),
        "forcing.amplitude": fmt(f.amplitude),
        "forcing.period": fmt(f.period),
        "nonlinearity.kind": n.kind,
        "nonlinearity.m": fmt(n.m),
        "nonlinearity.alpha": fmt(n.alpha),
    }
    for name in ("u0", "v0"):
        spec: FieldSpec = getattr(cfg.initial, name)
        pre = f"initial.{name}."
        out[pre + "kind"] = spec.kind
        out[pre + "value"] = fmt(spec.value)
        out[pre + "expr"] = spec.expr
        out[pre + "values"] = _fmt_list(spec.values)
        out[pre + "low"] = fmt(spec.low)
        out[pre + "high"] = fmt(spec.high)
    override = cfg.constants_override or (None, None)
    out.update(
        {
            "grid.extents": _fmt_list(cfg.grid.extents),
            "grid.n_cells": _fmt_list(cfg.grid.n_cells),
            "control.t_end": fmt(c.t_end),
            "control.dt": "auto" if c.dt is None else fmt(c.dt),
            "control.safety": fmt(c.safety),
            "control.output_every": str(c.output_every),
            "control.path": c.path,
            "control.snapshot_every": str(c.snapshot_every),
            "constants.delta": "auto" if override[0] is None else fmt(override[0]),
            "constants.epsilon": "auto" if override[1] is None else fmt(override[1]),
            "monitor.tol": fmt(cfg.monitor.tol),
            "monitor.c_tol": fmt(cfg.monitor.c_tol),
            "monitor.envelope_rel_tol": fmt(cfg.monitor.envelope_rel_tol),
            "monitor.weight": cfg.monitor.weight,
            "monitor.track_w": "true" if cfg.monitor.track_w else "false",
            "convergence.base_cells": str(cfg.convergence.base_cells),
            "convergence.t_end": fmt(cfg.convergence.t_end),
            "output_dir": cfg.output_dir,
            "seed": str(cfg.seed),
        }
    )
    return out


def config_text(cfg: SimulationConfig) -> str:
    lines = ["# written by epidiffuse"]
    for key, value in config_values(cfg).items():
        if value == "" and SCHEMA[key][1] is not REQUIRED:
            continue
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"


def write_config(cfg: SimulationConfig, path) -> Path:
    return atomic_write_text(path, config_text(cfg))
