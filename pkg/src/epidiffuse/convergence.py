"""Refinement studies for the forward-Euler / central-difference scheme.

Temporal: the scenario is reduced to spatially uniform data with the forcing
switched off, where the exact solution is

    u(t) = Lambda/mu + (u0 - Lambda/mu) exp(-mu t),   v(t) = v0 exp(-mu t),

and ``dt`` is halved per level.  Spatial: the scenario is run on grids
refined by 3 per level with ``dt`` proportional to ``h**2`` and compared with
a finer reference run.  A factor of 3 keeps coarse cell centres on fine cell
centres, so no interpolation error enters the comparison.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import InputError
from .grid import Grid
from .model import Forcing
from .solver import State, simulate, stable_dt

SPATIAL_RATIO = 3


def thread_count() -> int:
    """Worker count from ``EPIDIFFUSE_THREADS``; 0 (the default) means serial."""
    raw = os.environ.get("EPIDIFFUSE_THREADS", "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError:
        raise InputError(f"EPIDIFFUSE_THREADS must be an integer, got {raw!r}") from None
    return max(n, 0)


def _map(fn, items):
    n = thread_count()
    if n <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


def observed_orders(sizes, errors, ratio: float) -> list[float]:
    out = []
    for e0, e1 in zip(errors, errors[1:]):
        if e0 > 0 and e1 > 0:
            out.append(math.log(e0 / e1) / math.log(ratio))
        else:
            out.append(math.nan)
    return out


@dataclass
class Study:
    kind: str
    sizes: list[float] = field(default_factory=list)
    steps: list[int] = field(default_factory=list)
    errors: list[float] = field(default_factory=list)
    orders: list[float] = field(default_factory=list)
    note: str = ""

    @property
    def order(self) -> Optional[float]:
        """Observed order from the two finest levels."""
        if not self.orders or math.isnan(self.orders[-1]):
            return None
        return self.orders[-1]

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "sizes": self.sizes,
            "steps": self.steps,
            "errors": self.errors,
            "orders": self.orders,
            "order": self.order,
            "note": self.note,
        }


def temporal_study(cfg, levels: int) -> Study:
    if levels < 2:
        raise InputError(f"need at least 2 levels, got {levels}")
    p = cfg.params
    T = cfg.convergence.t_end
    u0, v0 = cfg.initial.sample(cfg.grid, cfg.seed)
    um, vm = float(np.mean(u0)), float(np.mean(v0))
    grid = Grid(cfg.grid.extents, (3,) * cfg.grid.dim)
    if p.mu > 0:
        ueq = p.equilibrium_u
        u_ex = ueq + (um - ueq) * math.exp(-p.mu * T)
        v_ex = vm * math.exp(-p.mu * T)
    else:
        u_ex, v_ex = um + p.Lambda * T, vm
    n0 = max(10, math.ceil(T / stable_dt(p, grid, cfg.control.safety, "direct")))
    steps = [n0 * 2**k for k in range(levels)]
    off = Forcing.constant(0.0)

    def one(n):
        start = State(0.0, np.full(grid.shape, um), np.full(grid.shape, vm), grid)
        end = simulate(start, p, off, cfg.nonlinearity, T / n, n, cfg.control.path)
        return max(float(np.max(np.abs(end.u - u_ex))), float(np.max(np.abs(end.v - v_ex))))

    errors = _map(one, steps)
    study = Study("temporal", [T / n for n in steps], steps, errors, observed_orders(steps, errors, 2.0))
    study.note = f"uniform data u0={um:.6g}, v0={vm:.6g}, forcing off, exact solution at t={T:g}"
    if p.mu == 0:
        study.note += "; mu = 0 makes forward Euler exact, so no order is observable"
    return study


def _inject(fine: np.ndarray, factor: int, dim: int) -> np.ndarray:
    off = (factor - 1) // 2
    sl = tuple(slice(off, None, factor) for _ in range(dim))
    return fine[sl]


def spatial_study(cfg, levels: int) -> Study:
    if levels < 2:
        raise InputError(f"need at least 2 levels, got {levels}")
    study = Study("spatial")
    init = cfg.initial
    if init.is_uniform:
        study.note = "initial data are uniform; no spatial error to measure"
        return study
    if any(s.kind not in ("constant", "expression") for s in (init.u0, init.v0)):
        study.note = "spatial study needs constant or expression initial data"
        return study
    p = cfg.params
    T = cfg.convergence.t_end
    base = Grid(cfg.grid.extents, (cfg.convergence.base_cells,) * cfg.grid.dim)
    n0 = math.ceil(T / stable_dt(p, base, cfg.control.safety, cfg.control.path))
    r = SPATIAL_RATIO
    grids = [base.refine(r**k) for k in range(levels + 1)]
    steps = [n0 * (r * r) ** k for k in range(levels + 1)]

    def one(k):
        g = grids[k]
        u0, v0 = init.sample(g, cfg.seed)
        end = simulate(State(0.0, u0, v0, g), p, cfg.forcing, cfg.nonlinearity, T / steps[k], steps[k], cfg.control.path)
        return end

    finals = _map(one, range(levels + 1))
    ref = finals[-1]
    errors = []
    for k in range(levels):
        factor = r ** (levels - k)
        eu = np.max(np.abs(finals[k].u - _inject(ref.u, factor, base.dim)))
        ev = np.max(np.abs(finals[k].v - _inject(ref.v, factor, base.dim)))
        errors.append(float(max(eu, ev)))
    study.sizes = [g.h_max for g in grids[:-1]]
    study.steps = steps[:-1]
    study.errors = errors
    study.orders = observed_orders(study.sizes, errors, float(r))
    study.note = (
        f"dt proportional to h^2, reference grid {grids[-1].n_cells} at t={T:g}, "
        "max-norm over u and v"
    )
    return study


def convergence(cfg, levels: int) -> tuple[Study, Study]:
    if levels < 2:
        raise InputError(f"need at least 2 levels, got {levels}")
    return temporal_study(cfg, levels), spatial_study(cfg, levels)
