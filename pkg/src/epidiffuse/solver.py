"""Explicit time integration of the susceptible/infective system.

Two paths are provided.  The direct path advances ``(u, v)`` with the
triangular diffusion term ``b Lap(u) + d Lap(v)`` in the ``v`` equation.
The transformed path advances ``(u, w)`` with
``w = v - b/(d-a) (Lambda/mu - u)``, for which diffusion is diagonal:

    w_t - d Lap(w) = (1 - b/(d-a)) lam f(u, v) - mu w

Both are forward Euler; ``v`` is rebuilt from ``w`` before every evaluation
of ``f``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _kernels
from .constants import DerivedConstants, derive_constants, verify_admissible
from .errors import HypothesisError, InputError, IntegrityError, TransformUnavailable
from .grid import Grid, check_field
from .model import Forcing, ModelParams, Nonlinearity, validate_hypotheses
from .monitor import Monitor, MonitorReport, MonitorSettings

logger = logging.getLogger(__name__)

PATHS = ("direct", "transformed")


@dataclass(frozen=True)
class State:
    """Susceptible density ``u`` and infective density ``v`` at time ``t``."""

    t: float
    u: np.ndarray
    v: np.ndarray
    grid: Grid

    def __post_init__(self):
        if not self.t >= 0:
            raise InputError(f"time must be nonnegative, got {self.t}")
        object.__setattr__(self, "u", check_field(self.grid, self.u, "u"))
        object.__setattr__(self, "v", check_field(self.grid, self.v, "v"))


@dataclass(frozen=True)
class TransformedState:
    """``u`` together with ``w = v - b/(d-a) (Lambda/mu - u)``."""

    t: float
    u: np.ndarray
    w: np.ndarray
    grid: Grid

    def __post_init__(self):
        if not self.t >= 0:
            raise InputError(f"time must be nonnegative, got {self.t}")
        object.__setattr__(self, "u", check_field(self.grid, self.u, "u"))
        object.__setattr__(self, "w", check_field(self.grid, self.w, "w"))


@dataclass(frozen=True)
class StepControl:
    t_end: float
    dt: Optional[float] = None  # None: use stable_dt
    safety: float = 0.9
    output_every: int = 1000
    path: str = "direct"
    snapshot_every: int = 0  # in samples; 0 keeps only the first and last state

    def __post_init__(self):
        if not (math.isfinite(self.t_end) and self.t_end >= 0):
            raise InputError(f"t_end must be finite and nonnegative, got {self.t_end}")
        if self.dt is not None and not (math.isfinite(self.dt) and self.dt > 0):
            raise InputError(f"dt must be positive, got {self.dt}")
        if not 0 < self.safety <= 1:
            raise InputError(f"safety factor must lie in (0, 1], got {self.safety}")
        if self.output_every < 1:
            raise InputError(f"output_every must be >= 1, got {self.output_every}")
        if self.snapshot_every < 0:
            raise InputError(f"snapshot_every must be >= 0, got {self.snapshot_every}")
        if self.path not in PATHS:
            raise InputError(f"unknown solver path {self.path!r}; expected one of {PATHS}")


def stable_dt(params: ModelParams, grid: Grid, safety: float = 0.9, path: str = "direct") -> float:
    """Largest forward-Euler step allowed by the diffusion limit, times ``safety``.

    The direct path budgets ``max(a, d) + b`` for the coupled ``v`` row; the
    transformed path only ``max(a, d)``.  With ``mu > 0`` the step is further
    capped at ``safety / mu``.
    """
    if path not in PATHS:
        raise InputError(f"unknown solver path {path!r}")
    d_eff = max(params.a, params.d)
    if path == "direct":
        d_eff += params.b
    dt = math.inf if d_eff == 0 else safety * grid.h_min**2 / (2 * grid.dim * d_eff)
    if params.mu > 0:
        dt = min(dt, safety / params.mu)
    return dt


def _as2d(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr, dtype=float)
    return arr.reshape(arr.shape[0], -1)


def _advance(u, z, t0, dt, nsteps, transformed, params, forcing, nl, grid):
    """Run the kernel in place on 2D views; returns the kernel tuple."""
    if transformed:
        ratio, ueq = params.cross_ratio, params.equilibrium_u
    else:
        ratio, ueq = 0.0, 0.0
    fcode, fsc, fbp, fval = forcing.kernel_args()
    nkind, npar = nl.kernel_args()
    hx2 = grid.h[0] ** 2
    hy2 = grid.h[1] ** 2 if grid.dim == 2 else 1.0
    return _kernels.advance(
        u, z, float(t0), float(dt), int(nsteps), bool(transformed),
        params.a, params.b, params.d, params.Lambda, params.mu, ratio, ueq,
        fcode, fsc, fbp, fval, params.lambda_hat,
        nkind, float(npar), hx2, hy2,
    )


def _raise_nonfinite(res, t0, dt, grid, step_offset=0):
    k, _, i, j, _ = res
    cell = (i,) if grid.dim == 1 else (i, j)
    step = step_offset + k
    raise IntegrityError(
        f"non-finite value at cell {cell} during step {step} (t = {t0 + k * dt:.6g})",
        step=step,
        cell=cell,
        t=t0 + k * dt,
    )


def step_direct(state: State, params: ModelParams, forcing: Forcing, nl: Nonlinearity, dt: float) -> State:
    """One forward-Euler step of the ``(u, v)`` system."""
    u = _as2d(state.u).copy()
    v = _as2d(state.v).copy()
    res = _advance(u, v, state.t, dt, 1, False, params, forcing, nl, state.grid)
    if res[1] != _kernels.OK:
        _raise_nonfinite(res, state.t, dt, state.grid)
    g = state.grid
    return State(state.t + dt, u.reshape(g.shape), v.reshape(g.shape), g)


def step_transformed(
    state: TransformedState, params: ModelParams, forcing: Forcing, nl: Nonlinearity, dt: float
) -> TransformedState:
    """One forward-Euler step of the diagonal ``(u, w)`` system."""
    _require_transform(params)
    u = _as2d(state.u).copy()
    w = _as2d(state.w).copy()
    res = _advance(u, w, state.t, dt, 1, True, params, forcing, nl, state.grid)
    if res[1] != _kernels.OK:
        _raise_nonfinite(res, state.t, dt, state.grid)
    g = state.grid
    return TransformedState(state.t + dt, u.reshape(g.shape), w.reshape(g.shape), g)


def _require_transform(params: ModelParams):
    if not params.d > params.a:
        raise TransformUnavailable(f"transform needs d > a, got d={params.d}, a={params.a}")
    if not params.mu > 0:
        raise TransformUnavailable("transform needs mu > 0 (Lambda/mu enters the offset)")


def to_w(state: State, params: ModelParams) -> TransformedState:
    _require_transform(params)
    w = state.v - params.cross_ratio * (params.equilibrium_u - state.u)
    return TransformedState(state.t, state.u.copy(), w, state.grid)


def from_w(state: TransformedState, params: ModelParams) -> State:
    _require_transform(params)
    v = state.w + params.cross_ratio * (params.equilibrium_u - state.u)
    return State(state.t, state.u.copy(), v, state.grid)


def simulate(
    state: State,
    params: ModelParams,
    forcing: Forcing,
    nl: Nonlinearity,
    dt: float,
    nsteps: int,
    path: str = "direct",
) -> State:
    """``nsteps`` steps without monitoring; returns the final ``(u, v)`` state."""
    grid = state.grid
    transformed = path == "transformed"
    if transformed:
        tstate = to_w(state, params)
        u, z = _as2d(tstate.u).copy(), _as2d(tstate.w).copy()
    else:
        u, z = _as2d(state.u).copy(), _as2d(state.v).copy()
    res = _advance(u, z, state.t, dt, nsteps, transformed, params, forcing, nl, grid)
    if res[1] != _kernels.OK:
        _raise_nonfinite(res, state.t, dt, grid)
    t = state.t + nsteps * dt
    if transformed:
        return from_w(TransformedState(t, u.reshape(grid.shape), z.reshape(grid.shape), grid), params)
    return State(t, u.reshape(grid.shape), z.reshape(grid.shape), grid)


# --------------------------------------------------------------------------
# full runs


@dataclass
class RunResult:
    report: MonitorReport
    final: State
    snapshots: list[State]
    constants: Optional[DerivedConstants]
    admissibility: Optional[object]
    hypotheses: object
    dt: float
    steps: int
    clamp_count: int = 0
    error: Optional[IntegrityError] = None

    @property
    def ok(self) -> bool:
        return self.error is None and not self.report.violations


def plan_steps(t_end: float, dt: float) -> tuple[int, float]:
    """Number of steps and the (possibly slightly shortened) step reaching ``t_end``."""
    if t_end == 0:
        return 0, dt
    n = max(1, math.ceil(t_end / dt - 1e-9))
    return n, t_end / n


def run(config, enforce_stable_dt: bool = True) -> RunResult:
    """Integrate from ``t = 0`` to ``control.t_end`` and monitor every ``output_every`` steps.

    ``config`` needs ``params, forcing, nonlinearity, initial, grid, control,
    seed`` and optionally ``constants_override`` and ``monitor``.  Integrity
    failures stop the run; samples gathered so far are kept in the result.
    """
    params: ModelParams = config.params
    grid: Grid = config.grid
    control: StepControl = config.control
    forcing, nl = config.forcing, config.nonlinearity
    u0, v0 = config.initial.sample(grid, config.seed)

    hyp = validate_hypotheses(params, config.initial, grid, nl, config.seed)
    if params.strict_mode and not hyp.ok:
        names = ", ".join(c.name for c in hyp.failed())
        raise HypothesisError(f"hypotheses fail in strict mode: {names}")
    transformed = control.path == "transformed"
    if transformed:
        _require_transform(params)

    override = getattr(config, "constants_override", None) or (None, None)
    consts = adm = None
    try:
        consts = derive_constants(
            params, float(np.max(np.abs(u0))), grid.measure, override[0], override[1]
        )
        adm = verify_admissible(params, consts.K, consts.delta, consts.epsilon)
    except HypothesisError as exc:
        logger.warning("Lyapunov constants unavailable: %s", exc)

    dt_max = stable_dt(params, grid, control.safety, control.path)
    dt = control.dt if control.dt is not None else dt_max
    if dt > dt_max * (1 + 1e-12):
        if enforce_stable_dt:
            raise InputError(f"dt = {dt:g} exceeds the stable step {dt_max:g} ({control.path} path)")
        logger.warning("dt = %g exceeds the stable step %g; expect blow-up", dt, dt_max)
    nsteps, dt = plan_steps(control.t_end, dt)

    settings = getattr(config, "monitor", None) or MonitorSettings()
    monitor = Monitor(params, grid, consts, hyp, settings, dt)
    if adm is not None and not adm.admissible:
        monitor.flag_inadmissible(adm)

    u = _as2d(u0).copy()
    if transformed:
        z = _as2d(v0 - params.cross_ratio * (params.equilibrium_u - u0)).copy()
    else:
        z = _as2d(v0).copy()

    def current(t):
        uu = u.reshape(grid.shape).copy()
        zz = z.reshape(grid.shape).copy()
        if transformed:
            zz = zz + params.cross_ratio * (params.equilibrium_u - uu)
        return State(t, uu, zz, grid)

    error = None
    clamps = 0
    snapshots = []
    state = current(0.0)
    snapshots.append(state)
    try:
        monitor.record(state)
    except IntegrityError as exc:
        error = exc

    done = 0
    n_samples = 1
    while error is None and done < nsteps:
        chunk = min(control.output_every, nsteps - done)
        t0 = done * dt
        res = _advance(u, z, t0, dt, chunk, transformed, params, forcing, nl, grid)
        clamps += res[4]
        if res[1] != _kernels.OK:
            try:
                _raise_nonfinite(res, t0, dt, grid, done)
            except IntegrityError as exc:
                error = exc
            # the kernel leaves the last finite state in place
            done += res[0]
            state = current(done * dt)
            break
        done += chunk
        try:
            state = current(done * dt if done < nsteps else control.t_end)
        except IntegrityError as exc:
            error = exc
            break
        n_samples += 1
        if control.snapshot_every and n_samples % control.snapshot_every == 0:
            snapshots.append(state)
        try:
            monitor.record(state)
        except IntegrityError as exc:
            error = exc

    if error is not None:
        logger.error("run aborted: %s", error)
    if clamps:
        logger.warning("clamped %d negative densities to zero inside f", clamps)
    if snapshots[-1] is not state:
        snapshots.append(state)
    report = monitor.finish(error)
    return RunResult(
        report=report,
        final=state,
        snapshots=snapshots,
        constants=consts,
        admissibility=adm,
        hypotheses=hyp,
        dt=dt,
        steps=done,
        clamp_count=clamps,
        error=error,
    )
