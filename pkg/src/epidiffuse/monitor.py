"""Runtime monitors: Lyapunov functional, dissipation bound, invariant region.

The functional is

    J(t) = integral over Omega of (1 + delta (u + u**2)) exp(epsilon v)

and along exact solutions it obeys ``dJ/dt <= -mu/2 J + gamma``.  Integrating
that differential inequality gives the envelope

    J(t) <= (J(0) - 2 gamma/mu) exp(-mu t/2) + 2 gamma/mu.

The invariant region is ``0 <= u <= K`` together with
``v >= b/(d-a) (Lambda/mu - u) >= 0``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields
from typing import Optional

import numpy as np

from .constants import DerivedConstants, compute_K
from .errors import DomainError, InputError, IntegrityError
from .grid import integrate
from .model import HypothesisReport, ModelParams

WEIGHTS = ("quadratic", "shifted")


def _weight(u: np.ndarray, delta: float, weight: str) -> np.ndarray:
    if weight == "quadratic":
        return 1.0 + delta * (u + u * u)
    if weight == "shifted":
        return 1.0 + delta * (1.0 + u + u * u)
    raise InputError(f"unknown weight {weight!r}; expected one of {WEIGHTS}")


def _functional(u, z, grid, delta, epsilon, weight, label="v"):
    with np.errstate(over="ignore"):
        expo = np.exp(epsilon * z)
    if not np.all(np.isfinite(expo)):
        raise IntegrityError(
            f"exp(epsilon {label}) overflows: max {label} = {float(np.max(z)):.6g}; "
            "solution is blowing up"
        )
    value = integrate(_weight(u, delta, weight) * expo, grid)
    if not math.isfinite(value):
        raise IntegrityError(f"Lyapunov functional overflowed (max {label} = {float(np.max(z)):.6g})")
    return value


def lyapunov_J(state, delta: float, epsilon: float, weight: str = "quadratic") -> float:
    """Midpoint-rule value of ``J`` for ``state``.

    ``weight="shifted"`` uses ``1 + delta (1 + u + u**2)`` instead of
    ``1 + delta (u + u**2)``.
    """
    return _functional(state.u, state.v, state.grid, delta, epsilon, weight)


def lyapunov_J_w(state, params: ModelParams, delta: float, epsilon: float, weight: str = "quadratic") -> float:
    """Variant of ``J`` with ``exp(epsilon w)`` in place of ``exp(epsilon v)``."""
    w = state.v - params.cross_ratio * (params.equilibrium_u - state.u)
    return _functional(state.u, w, state.grid, delta, epsilon, weight, label="w")


def decay_envelope(J0: float, mu: float, gamma: float, t):
    if not mu > 0:
        raise DomainError(f"no decay envelope without mu > 0 (got mu={mu})")
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise DomainError("envelope is defined for t >= 0")
    floor = 2.0 * gamma / mu
    out = (J0 - floor) * np.exp(-0.5 * mu * t) + floor
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class Violation:
    invariant: str
    t: float
    witness: float
    tolerance: float

    def to_dict(self) -> dict:
        return asdict(self)


def dissipation_tolerance(J, dt, h: float, c_tol: float = 1.0):
    """Discretisation allowance ``c_tol (dt + h**2) J`` for the derivative check."""
    return c_tol * (np.asarray(dt, dtype=float) + h * h) * np.asarray(J, dtype=float)


def _check_times(t: np.ndarray):
    if t.ndim != 1 or t.size < 2:
        raise InputError("need at least two samples")
    if np.any(np.diff(t) <= 0):
        raise InputError("sample times must be strictly increasing")


def check_dissipation(t, J, mu: float, gamma: float, tol=0.0) -> list[Violation]:
    """Flag samples where ``(J[k+1] - J[k]) / (t[k+1] - t[k]) > -mu/2 J[k] + gamma + tol[k]``."""
    t = np.asarray(t, dtype=float)
    J = np.asarray(J, dtype=float)
    _check_times(t)
    tol = np.broadcast_to(np.asarray(tol, dtype=float), J.shape)
    slope = np.diff(J) / np.diff(t)
    bound = -0.5 * mu * J[:-1] + gamma
    excess = slope - bound
    return [
        Violation("dissipation", float(t[k]), float(excess[k]), float(tol[k]))
        for k in np.flatnonzero(excess > tol[:-1])
    ]


def check_envelope(t, J, mu: float, gamma: float, rel_tol: float = 1e-6) -> list[Violation]:
    """Flag samples above the integrated bound by more than ``rel_tol * J[0]``."""
    t = np.asarray(t, dtype=float)
    J = np.asarray(J, dtype=float)
    tol = rel_tol * J[0]
    excess = J - decay_envelope(J[0], mu, gamma, t)
    return [
        Violation("envelope", float(t[k]), float(excess[k]), tol)
        for k in np.flatnonzero(excess > tol)
    ]


def lemma_margin(state, params: ModelParams) -> float:
    """``min(v - b/(d-a) (Lambda/mu - u))`` over cells; NaN when the offset is undefined."""
    if not params.transform_available:
        return math.nan
    return float(np.min(state.v - params.cross_ratio * (params.equilibrium_u - state.u)))


def check_invariants(
    state,
    params: ModelParams,
    K: float,
    tol: float = 1e-6,
    bounds: bool = True,
    positivity: bool = True,
    lemma: bool = True,
) -> list[Violation]:
    """At most one violation per invariant, carrying the worst breach as witness."""
    out = []
    t = state.t
    if bounds:
        lo = -float(np.min(state.u))
        if lo > tol:
            out.append(Violation("u_lower", t, lo, tol))
        hi = float(np.max(state.u)) - K
        if hi > tol:
            out.append(Violation("u_upper", t, hi, tol))
    if positivity:
        neg = -float(np.min(state.v))
        if neg > tol:
            out.append(Violation("v_lower", t, neg, tol))
    if lemma and params.transform_available:
        gap = -lemma_margin(state, params)
        if gap > tol:
            out.append(Violation("lemma_margin", t, gap, tol))
    return out


@dataclass
class Sample:
    t: float
    J: float
    dJdt_estimate: float
    dissipation_bound: float
    min_u: float
    max_u: float
    min_v: float
    lemma_margin: float
    mass: float
    J_w: float = math.nan


SAMPLE_COLUMNS = tuple(f.name for f in fields(Sample))


@dataclass(frozen=True)
class MonitorSettings:
    tol: float = 1e-6
    c_tol: float = 1.0
    envelope_rel_tol: float = 1e-6
    weight: str = "quadratic"
    track_w: bool = False

    def __post_init__(self):
        if self.weight not in WEIGHTS:
            raise InputError(f"unknown weight {self.weight!r}; expected one of {WEIGHTS}")
        for name in ("tol", "c_tol", "envelope_rel_tol"):
            if not getattr(self, name) >= 0:
                raise InputError(f"{name} must be nonnegative")


@dataclass
class MonitorReport:
    samples: list[Sample] = field(default_factory=list)
    violations: list[Violation] = field(default_factory=list)
    disabled: dict[str, str] = field(default_factory=dict)
    integrity_error: Optional[str] = None

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(s, name) for s in self.samples], dtype=float)

    def rows(self, include_w: bool = False) -> list[tuple]:
        cols = SAMPLE_COLUMNS if include_w else SAMPLE_COLUMNS[:-1]
        return [tuple(getattr(s, c) for c in cols) for s in self.samples]

    def violation_counts(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for v in self.violations:
            counts[v.invariant] = counts.get(v.invariant, 0) + 1
        return counts

    def to_dict(self) -> dict:
        return {
            "n_samples": len(self.samples),
            "violations": [v.to_dict() for v in self.violations],
            "violation_counts": self.violation_counts(),
            "disabled_monitors": dict(self.disabled),
            "integrity_error": self.integrity_error,
        }


class Monitor:
    """Accumulates samples during a run and assembles the final report."""

    def __init__(
        self,
        params: ModelParams,
        grid,
        constants: Optional[DerivedConstants],
        hypotheses: HypothesisReport,
        settings: MonitorSettings,
        dt: float,
    ):
        self.params = params
        self.grid = grid
        self.constants = constants
        self.settings = settings
        self.dt = dt
        self.report = MonitorReport()
        self._u0_sup: Optional[float] = None
        disabled = self.report.disabled

        passed = {c.name: c.passed for c in hypotheses.checks}
        nonneg = passed.get("initial_nonnegative", False)
        self.K = constants.K if constants is not None else None
        if not nonneg:
            disabled["u_bounds"] = "initial data has negative values"
        elif params.mu == 0 and params.Lambda > 0:
            disabled["u_bounds"] = "mu = 0 with Lambda > 0: u is not bounded"
        if not all(passed.get(n, False) for n in ("H1", "H3", "lemma_pointwise")) or not nonneg:
            reason = "needs H1, H3 and w0 >= 0"
            disabled["v_lower"] = reason
            disabled["lemma_margin"] = reason
        if constants is None:
            disabled["dissipation"] = disabled["envelope"] = "Lyapunov constants unavailable"
        elif not params.mu > 0:
            disabled["dissipation"] = disabled["envelope"] = "needs mu > 0"
        if settings.track_w and not params.transform_available:
            disabled["J_w"] = "transform needs d > a and mu > 0"

    def flag_inadmissible(self, adm) -> None:
        for name, witness in adm.failures().items():
            self.report.violations.append(
                Violation(f"admissibility:{name}", 0.0, float(witness), adm.slack)
            )

    def record(self, state) -> Sample:
        p, c, s = self.params, self.constants, self.settings
        if self._u0_sup is None:
            self._u0_sup = float(np.max(np.abs(state.u)))
            if self.K is None and "u_bounds" not in self.report.disabled:
                self.K = compute_K(p, self._u0_sup)
        J = math.nan
        bound = math.nan
        J_w = math.nan
        if c is not None:
            J = lyapunov_J(state, c.delta, c.epsilon, s.weight)
            bound = -0.5 * p.mu * J + c.gamma
            if s.track_w and "J_w" not in self.report.disabled:
                J_w = lyapunov_J_w(state, p, c.delta, c.epsilon, s.weight)
        sample = Sample(
            t=state.t,
            J=J,
            dJdt_estimate=math.nan,
            dissipation_bound=bound,
            min_u=float(np.min(state.u)),
            max_u=float(np.max(state.u)),
            min_v=float(np.min(state.v)),
            lemma_margin=lemma_margin(state, p),
            mass=integrate(state.u + state.v, state.grid),
            J_w=J_w,
        )
        samples = self.report.samples
        if samples and not sample.t > samples[-1].t:
            raise InputError("sample times must be strictly increasing")
        samples.append(sample)
        disabled = self.report.disabled
        self.report.violations.extend(
            check_invariants(
                state,
                p,
                self.K if self.K is not None else math.inf,
                s.tol,
                bounds="u_bounds" not in disabled,
                positivity="v_lower" not in disabled,
                lemma="lemma_margin" not in disabled,
            )
        )
        return sample

    def finish(self, error: Optional[Exception] = None) -> MonitorReport:
        rep = self.report
        samples = rep.samples
        if error is not None:
            rep.integrity_error = str(error)
        if len(samples) >= 2:
            t = np.array([x.t for x in samples])
            J = np.array([x.J for x in samples])
            slopes = np.diff(J) / np.diff(t)
            for x, slope in zip(samples[:-1], slopes):
                x.dJdt_estimate = float(slope)
            c = self.constants
            if "dissipation" not in rep.disabled:
                # the slope spans a whole sample interval, so that is the time scale
                spacing = np.append(np.diff(t), self.dt)
                tol = dissipation_tolerance(J, spacing, self.grid.h_max, self.settings.c_tol)
                rep.violations.extend(check_dissipation(t, J, self.params.mu, c.gamma, tol))
                rep.violations.extend(
                    check_envelope(t, J, self.params.mu, c.gamma, self.settings.envelope_rel_tol)
                )
        rep.violations.sort(key=lambda v: (v.t, v.invariant))
        return rep
