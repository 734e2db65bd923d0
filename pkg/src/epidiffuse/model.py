"""Model data: physical constants, time forcing, reaction term, initial data.

The simulated system is

    u_t - a Lap(u)            = Lambda - lam(t) f(u, v) - mu u
    v_t - b Lap(u) - d Lap(v) = lam(t) f(u, v) - mu v

with zero-flux boundaries.  Everything here is a pure function of its
inputs.
"""

from __future__ import annotations

import ast
import math
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np

from .errors import DomainError, InputError

FORCING_KINDS = ("constant", "piecewise_constant", "sinusoidal_clamped")
NONLINEARITY_KINDS = ("product_power", "sub_exponential", "exponential_violator")
FIELD_KINDS = ("constant", "expression", "array", "random_uniform")


def _finite(name, value):
    value = float(value)
    if not math.isfinite(value):
        raise InputError(f"{name} must be finite, got {value}")
    return value


@dataclass(frozen=True)
class ModelParams:
    """Physical constants of the system.

    ``strict_mode`` asks callers (config loader, runner) to enforce the
    structural hypotheses; the dataclass itself only rejects values that no
    mode can use, so that failed hypotheses can still be reported as data.
    """

    a: float
    b: float
    d: float
    Lambda: float
    mu: float
    lambda_hat: float
    strict_mode: bool = True

    def __post_init__(self):
        for name in ("a", "b", "d", "Lambda", "mu", "lambda_hat"):
            value = _finite(name, getattr(self, name))
            if value < 0:
                raise InputError(f"{name} must be nonnegative, got {value}")
            object.__setattr__(self, name, value)
        object.__setattr__(self, "strict_mode", bool(self.strict_mode))

    @property
    def transform_available(self) -> bool:
        return self.d > self.a and self.mu > 0

    @property
    def cross_ratio(self) -> float:
        """b / (d - a); only meaningful when d > a."""
        return self.b / (self.d - self.a)

    @property
    def equilibrium_u(self) -> float:
        """Lambda / mu, the disease-free susceptible level."""
        return self.Lambda / self.mu


# --------------------------------------------------------------------------
# forcing lam(t)


@dataclass(frozen=True)
class Forcing:
    kind: str = "constant"
    value: float = 1.0
    breakpoints: tuple[float, ...] = ()
    values: tuple[float, ...] = ()
    mean: float = 0.0
    amplitude: float = 0.0
    period: float = 1.0

    def __post_init__(self):
        if self.kind not in FORCING_KINDS:
            raise InputError(f"unknown forcing kind {self.kind!r}; expected one of {FORCING_KINDS}")
        object.__setattr__(self, "breakpoints", tuple(float(x) for x in self.breakpoints))
        object.__setattr__(self, "values", tuple(float(x) for x in self.values))
        for name in ("value", "mean", "amplitude", "period"):
            object.__setattr__(self, name, _finite(name, getattr(self, name)))
        if self.kind == "piecewise_constant":
            bp = self.breakpoints
            if len(self.values) != len(bp) + 1:
                raise InputError(
                    f"piecewise forcing needs len(values) == len(breakpoints) + 1, "
                    f"got {len(self.values)} values for {len(bp)} breakpoints"
                )
            if any(not math.isfinite(x) for x in bp + self.values):
                raise InputError("piecewise forcing entries must be finite")
            if any(b1 <= b0 for b0, b1 in zip(bp, bp[1:])):
                raise InputError("piecewise breakpoints must be strictly increasing")
        if self.kind == "sinusoidal_clamped" and self.period <= 0:
            raise InputError(f"sinusoid period must be positive, got {self.period}")

    @classmethod
    def constant(cls, value: float) -> "Forcing":
        return cls(kind="constant", value=value)

    @classmethod
    def piecewise_constant(cls, breakpoints, values) -> "Forcing":
        """``values[i]`` applies on ``(breakpoints[i-1], breakpoints[i]]``."""
        return cls(kind="piecewise_constant", breakpoints=tuple(breakpoints), values=tuple(values))

    @classmethod
    def sinusoidal_clamped(cls, mean: float, amplitude: float, period: float) -> "Forcing":
        return cls(kind="sinusoidal_clamped", mean=mean, amplitude=amplitude, period=period)

    def natural_ceiling(self) -> float:
        """Largest value the unclamped forcing reaches (used as a default lambda_hat)."""
        if self.kind == "constant":
            return max(self.value, 0.0)
        if self.kind == "piecewise_constant":
            return max(max(self.values), 0.0)
        return max(self.mean + abs(self.amplitude), 0.0)

    @property
    def is_zero(self) -> bool:
        if self.kind == "constant":
            return self.value <= 0
        if self.kind == "piecewise_constant":
            return all(v <= 0 for v in self.values)
        return self.mean + abs(self.amplitude) <= 0

    def kernel_args(self):
        """Flattened representation consumed by the compiled stepper."""
        code = FORCING_KINDS.index(self.kind)
        scalars = np.array([self.value, self.mean, self.amplitude, self.period])
        return (
            code,
            scalars,
            np.array(self.breakpoints, dtype=float),
            np.array(self.values if self.values else (0.0,), dtype=float),
        )


def eval_lambda(forcing: Forcing, t: float, lambda_hat: float = math.inf) -> float:
    """Forcing value at time ``t``, clamped into ``[0, lambda_hat]``."""
    if forcing.kind == "constant":
        raw = forcing.value
    elif forcing.kind == "piecewise_constant":
        i = int(np.searchsorted(forcing.breakpoints, t, side="left"))
        raw = forcing.values[i]
    else:
        raw = forcing.mean + forcing.amplitude * math.sin(2.0 * math.pi * t / forcing.period)
    return min(max(raw, 0.0), lambda_hat)


# --------------------------------------------------------------------------
# reaction term f(u, v)


@dataclass(frozen=True)
class Nonlinearity:
    """Reaction term ``f(u, v)``.

    ``product_power``: ``u v**m``; ``sub_exponential``: ``u (exp(v**alpha) - 1)``;
    ``exponential_violator``: ``u (exp(v) - 1)``.  The last grows like ``e**v``
    and so has ``log(1 + f)/v -> 1``; it exists for negative controls.
    """

    kind: str = "product_power"
    m: float = 1.0
    alpha: float = 0.5

    def __post_init__(self):
        if self.kind not in NONLINEARITY_KINDS:
            raise InputError(
                f"unknown nonlinearity {self.kind!r}; expected one of {NONLINEARITY_KINDS}"
            )
        m = _finite("m", self.m)
        alpha = _finite("alpha", self.alpha)
        if self.kind == "product_power" and m < 1:
            raise InputError(f"product_power exponent must be >= 1, got {m}")
        if self.kind == "sub_exponential" and not 0 < alpha < 1:
            raise InputError(f"sub_exponential exponent must lie in (0, 1), got {alpha}")
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "alpha", alpha)

    @property
    def satisfies_H2(self) -> bool:
        return self.kind in ("product_power", "sub_exponential")

    @property
    def parameter(self) -> float:
        return self.alpha if self.kind == "sub_exponential" else self.m

    def kernel_args(self):
        return NONLINEARITY_KINDS.index(self.kind), self.parameter


def eval_f(nl: Nonlinearity, u, v):
    """Reaction rate ``f(u, v)``; exactly zero wherever ``u == 0``."""
    u_arr = np.asarray(u, dtype=float)
    v_arr = np.asarray(v, dtype=float)
    if np.any(u_arr < 0) or np.any(v_arr < 0):
        raise DomainError("f is defined for nonnegative densities only")
    with np.errstate(over="ignore", invalid="ignore"):
        if nl.kind == "product_power":
            g = v_arr**nl.m
        elif nl.kind == "sub_exponential":
            g = np.expm1(v_arr**nl.alpha)
        else:
            g = np.expm1(v_arr)
        out = np.where(u_arr == 0, 0.0, u_arr * g)
    if out.ndim == 0:
        return float(out)
    return out


def _log1p_f(nl: Nonlinearity, u: float, v: float) -> float:
    if u == 0:
        return 0.0
    if nl.kind == "product_power":
        return math.log1p(u * v**nl.m)
    s = v**nl.alpha if nl.kind == "sub_exponential" else v
    if s < 30.0:
        return math.log1p(u * math.expm1(s))
    # 1 + u (e^s - 1) = e^s (u + (1 - u) e^-s), positive for u > 0
    return s + math.log(u + (1.0 - u) * math.exp(-s))


def growth_ratio(nl: Nonlinearity, u_probe: float, v: float) -> float:
    """``log(1 + f(u_probe, v)) / v``, evaluated without overflow for large ``v``."""
    if not v > 0:
        raise DomainError(f"growth ratio needs v > 0, got {v}")
    if u_probe < 0:
        raise DomainError(f"u_probe must be nonnegative, got {u_probe}")
    return _log1p_f(nl, float(u_probe), float(v)) / v


# --------------------------------------------------------------------------
# initial data

_EXPR_FUNCS = {
    "sin": np.sin,
    "cos": np.cos,
    "tan": np.tan,
    "exp": np.exp,
    "log": np.log,
    "sqrt": np.sqrt,
    "tanh": np.tanh,
    "abs": np.abs,
    "minimum": np.minimum,
    "maximum": np.maximum,
}
_EXPR_CONSTS = {"pi": math.pi, "e": math.e}
_EXPR_NODES = (
    ast.Expression, ast.BinOp, ast.UnaryOp, ast.Call, ast.Name, ast.Load,
    ast.Constant, ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow, ast.USub, ast.UAdd,
)


def _compile_expression(expr: str):
    try:
        tree = ast.parse(expr, mode="eval")
    except SyntaxError as exc:
        raise InputError(f"cannot parse expression {expr!r}: {exc.msg}") from None
    allowed = set(_EXPR_FUNCS) | set(_EXPR_CONSTS) | {"x", "y"}
    for node in ast.walk(tree):
        if not isinstance(node, _EXPR_NODES):
            raise InputError(f"unsupported syntax {type(node).__name__} in {expr!r}")
        if isinstance(node, ast.Name) and node.id not in allowed:
            raise InputError(f"unknown name {node.id!r} in {expr!r}")
        if isinstance(node, ast.Call) and not (
            isinstance(node.func, ast.Name) and node.func.id in _EXPR_FUNCS
        ):
            raise InputError(f"only {sorted(_EXPR_FUNCS)} may be called in {expr!r}")
        if isinstance(node, ast.Constant) and not isinstance(node.value, (int, float)):
            raise InputError(f"non-numeric literal in {expr!r}")
    return compile(tree, "<field expression>", "eval")


@dataclass(frozen=True)
class FieldSpec:
    """Descriptor of an initial field: constant, closed-form expression in
    ``x`` (and ``y``), explicit per-cell values, or seeded uniform noise."""

    kind: str = "constant"
    value: float = 0.0
    expr: str = ""
    values: tuple[float, ...] = ()
    low: float = 0.0
    high: float = 1.0

    def __post_init__(self):
        if self.kind not in FIELD_KINDS:
            raise InputError(f"unknown field kind {self.kind!r}; expected one of {FIELD_KINDS}")
        object.__setattr__(self, "values", tuple(float(x) for x in self.values))
        for name in ("value", "low", "high"):
            object.__setattr__(self, name, _finite(name, getattr(self, name)))
        if self.kind == "array" and not all(math.isfinite(x) for x in self.values):
            raise InputError("array field contains non-finite values")
        if self.kind == "expression":
            _compile_expression(self.expr)
        if self.kind == "random_uniform" and self.high < self.low:
            raise InputError(f"random field needs low <= high, got [{self.low}, {self.high}]")

    @property
    def is_uniform(self) -> bool:
        if self.kind == "constant":
            return True
        if self.kind == "random_uniform":
            return self.low == self.high
        return False

    def sample(self, grid=None, rng: Optional[np.random.Generator] = None) -> np.ndarray:
        """Values at cell centres (a 1-element array for a constant without a grid)."""
        if grid is None:
            if self.kind != "constant":
                raise InputError(f"a grid is needed to sample a {self.kind} field")
            return np.array([self.value])
        if self.kind == "constant":
            out = np.full(grid.shape, self.value)
        elif self.kind == "expression":
            centers = grid.centers()
            env: dict[str, Any] = {**_EXPR_FUNCS, **_EXPR_CONSTS, "x": centers[0]}
            if grid.dim == 2:
                env["y"] = centers[1]
            with np.errstate(all="ignore"):
                raw = eval(_compile_expression(self.expr), {"__builtins__": {}}, env)
            out = np.broadcast_to(np.asarray(raw, dtype=float), grid.shape).copy()
        elif self.kind == "array":
            if len(self.values) != grid.size:
                raise InputError(
                    f"array field has {len(self.values)} values, grid has {grid.size} cells"
                )
            out = np.array(self.values).reshape(grid.shape)
        else:
            rng = rng if rng is not None else np.random.default_rng(0)
            out = rng.uniform(self.low, self.high, size=grid.shape)
        if not np.all(np.isfinite(out)):
            raise InputError(f"{self.kind} field produced non-finite values")
        return out


@dataclass(frozen=True)
class InitialData:
    u0: FieldSpec = field(default_factory=FieldSpec)
    v0: FieldSpec = field(default_factory=FieldSpec)

    @property
    def is_uniform(self) -> bool:
        return self.u0.is_uniform and self.v0.is_uniform

    def sample(self, grid=None, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
        rng = np.random.default_rng(seed)
        return self.u0.sample(grid, rng), self.v0.sample(grid, rng)


# --------------------------------------------------------------------------
# hypothesis validation


@dataclass(frozen=True)
class HypothesisCheck:
    name: str
    passed: bool
    detail: str
    witness: Optional[dict] = None
    gating: bool = True

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "passed": self.passed,
            "gating": self.gating,
            "detail": self.detail,
            "witness": self.witness,
        }


@dataclass(frozen=True)
class HypothesisReport:
    checks: tuple[HypothesisCheck, ...]

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks if c.gating)

    def failed(self) -> list[HypothesisCheck]:
        return [c for c in self.checks if c.gating and not c.passed]

    def __getitem__(self, name: str) -> HypothesisCheck:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def __contains__(self, name: str) -> bool:
        return any(c.name == name for c in self.checks)

    def to_dict(self) -> dict:
        return {"ok": self.ok, "checks": [c.to_dict() for c in self.checks]}


def _first_cell(mask: np.ndarray) -> list[int]:
    return [int(i) for i in np.argwhere(mask)[0]]


def validate_hypotheses(
    params: ModelParams,
    init: InitialData,
    grid=None,
    nonlinearity: Optional[Nonlinearity] = None,
    seed: int = 0,
) -> HypothesisReport:
    """Check the structural hypotheses and the initial-data conditions.

    Failures are returned as data; only malformed (non-finite) input raises.
    ``H1``: a > 0, b > 0, d - a >= b, mu > 0, Lambda >= 0.  ``H2``: the
    reaction term grows sub-exponentially (declared per kind).  ``H3``:
    sup u0 <= Lambda/mu.  ``lemma_pointwise`` requires
    w0 = v0 - b/(d-a) (Lambda/mu - u0) >= 0 in every cell; ``lemma_norm_form``
    is the weaker sup-norm variant and is informational only.
    """
    u0, v0 = init.sample(grid, seed)
    if not (np.all(np.isfinite(u0)) and np.all(np.isfinite(v0))):
        raise InputError("initial data must be finite")
    p = params
    checks = []

    bad = {}
    if not p.a > 0:
        bad["a"] = p.a
    if not p.b > 0:
        bad["b"] = p.b
    if not p.d - p.a >= p.b:
        bad["d-a"] = p.d - p.a
        bad["b"] = p.b
    if not p.mu > 0:
        bad["mu"] = p.mu
    if not p.Lambda >= 0:
        bad["Lambda"] = p.Lambda
    checks.append(
        HypothesisCheck(
            "H1",
            not bad,
            "a > 0, b > 0, d - a >= b, mu > 0, Lambda >= 0",
            bad or None,
        )
    )

    if nonlinearity is not None:
        checks.append(
            HypothesisCheck(
                "H2",
                nonlinearity.satisfies_H2,
                f"log(1 + f)/v -> 0 for {nonlinearity.kind}",
                None if nonlinearity.satisfies_H2 else {"kind": nonlinearity.kind},
            )
        )

    neg = (u0 < 0) | (v0 < 0)
    checks.append(
        HypothesisCheck(
            "initial_nonnegative",
            not neg.any(),
            "u0 >= 0 and v0 >= 0 in every cell",
            None
            if not neg.any()
            else {"cell": _first_cell(neg), "min_u0": float(u0.min()), "min_v0": float(v0.min())},
        )
    )

    u_sup = float(np.max(np.abs(u0)))
    if p.mu > 0:
        ueq = p.equilibrium_u
        ok = u_sup <= ueq
        checks.append(
            HypothesisCheck(
                "H3",
                ok,
                "sup u0 <= Lambda/mu",
                None if ok else {"sup_u0": u_sup, "Lambda/mu": ueq},
            )
        )
    else:
        checks.append(
            HypothesisCheck("H3", False, "Lambda/mu undefined for mu = 0", {"mu": p.mu})
        )

    if p.transform_available:
        c, ueq = p.cross_ratio, p.equilibrium_u
        w0 = v0 - c * (ueq - u0)
        ok = bool(np.all(w0 >= 0))
        witness = None
        if not ok:
            cell = int(np.argmin(w0))
            witness = {
                "cell": [int(i) for i in np.unravel_index(cell, w0.shape)],
                "w0": float(w0.ravel()[cell]),
            }
        checks.append(
            HypothesisCheck(
                "lemma_pointwise", ok, "v0 >= b/(d-a) (Lambda/mu - u0) in every cell", witness
            )
        )
        bound = c * (ueq - u_sup)
        ok_norm = bool(np.all(v0 >= bound))
        checks.append(
            HypothesisCheck(
                "lemma_norm_form",
                ok_norm,
                "v0 >= b/(d-a) (Lambda/mu - sup u0); weaker than lemma_pointwise",
                None if ok_norm else {"min_v0": float(v0.min()), "bound": bound},
                gating=False,
            )
        )
    else:
        checks.append(
            HypothesisCheck(
                "lemma_pointwise",
                False,
                "transform w = v - b/(d-a)(Lambda/mu - u) needs d > a and mu > 0",
                {"d-a": p.d - p.a, "mu": p.mu},
            )
        )
    return HypothesisReport(tuple(checks))
