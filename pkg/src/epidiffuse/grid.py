"""Uniform cell-centred grids on an interval or an axis-aligned rectangle.

Fields are plain numpy arrays shaped like ``grid.shape``.  The Laplacian
uses ghost-cell reflection (ghost value equals the adjacent interior value),
which is the second-order realisation of a zero normal derivative on the
boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InputError, IntegrityError


@dataclass(frozen=True)
class Grid:
    """Cell-centred grid on ``(0, L1)`` or ``(0, L1) x (0, L2)``."""

    extents: tuple[float, ...]
    n_cells: tuple[int, ...]

    def __post_init__(self):
        extents = tuple(float(e) for e in _as_tuple(self.extents))
        n_cells = tuple(int(n) for n in _as_tuple(self.n_cells))
        if len(extents) != len(n_cells):
            raise InputError(
                f"extents has {len(extents)} axes but n_cells has {len(n_cells)}"
            )
        if len(extents) not in (1, 2):
            raise InputError(f"only 1D and 2D grids are supported, got dim={len(extents)}")
        for e in extents:
            if not (math.isfinite(e) and e > 0):
                raise InputError(f"extent must be positive and finite, got {e}")
        for n in n_cells:
            if n < 3:
                raise InputError(f"need at least 3 cells per axis, got {n}")
        object.__setattr__(self, "extents", extents)
        object.__setattr__(self, "n_cells", n_cells)

    @classmethod
    def uniform(cls, extents, n_cells) -> "Grid":
        """Build a grid, broadcasting a scalar cell count over all axes."""
        extents = _as_tuple(extents)
        n_cells = _as_tuple(n_cells)
        if len(n_cells) == 1 and len(extents) > 1:
            n_cells = n_cells * len(extents)
        return cls(tuple(extents), tuple(n_cells))

    @property
    def dim(self) -> int:
        return len(self.extents)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.n_cells

    @property
    def size(self) -> int:
        return math.prod(self.n_cells)

    @property
    def h(self) -> tuple[float, ...]:
        return tuple(e / n for e, n in zip(self.extents, self.n_cells))

    @property
    def h_min(self) -> float:
        return min(self.h)

    @property
    def h_max(self) -> float:
        return max(self.h)

    @property
    def cell_volume(self) -> float:
        return math.prod(self.h)

    @property
    def measure(self) -> float:
        return math.prod(self.extents)

    def axes(self) -> tuple[np.ndarray, ...]:
        """Cell-centre coordinates along each axis."""
        return tuple(
            (np.arange(n) + 0.5) * h for n, h in zip(self.n_cells, self.h)
        )

    def centers(self) -> tuple[np.ndarray, ...]:
        """Cell-centre coordinates broadcast to ``shape`` (``ij`` indexing)."""
        return tuple(np.meshgrid(*self.axes(), indexing="ij"))

    def refine(self, factor: int) -> "Grid":
        return Grid(self.extents, tuple(n * factor for n in self.n_cells))


def _as_tuple(value) -> tuple:
    if isinstance(value, (str, bytes)):
        raise InputError(f"expected number or sequence, got {value!r}")
    if isinstance(value, Sequence) or isinstance(value, np.ndarray):
        return tuple(value)
    return (value,)


def check_field(grid: Grid, values, name: str = "field") -> np.ndarray:
    """Return ``values`` as a float array on ``grid``; reject wrong size or non-finite data."""
    arr = np.asarray(values, dtype=float)
    if arr.size != grid.size:
        raise InputError(f"{name} has {arr.size} values, grid has {grid.size} cells")
    arr = arr.reshape(grid.shape)
    bad = ~np.isfinite(arr)
    if bad.any():
        idx = tuple(int(i) for i in np.argwhere(bad)[0])
        raise IntegrityError(f"{name} is non-finite at cell {idx}", cell=idx)
    return arr


def laplacian(values: np.ndarray, grid: Grid) -> np.ndarray:
    """Five-point (three-point in 1D) Laplacian with no-flux ghost cells."""
    u = np.asarray(values, dtype=float).reshape(grid.shape)
    out = np.zeros_like(u)
    for axis, h in enumerate(grid.h):
        pad = [(0, 0)] * u.ndim
        pad[axis] = (1, 1)
        g = np.pad(u, pad, mode="edge")
        n = u.shape[axis]
        lo = np.take(g, np.arange(0, n), axis=axis)
        hi = np.take(g, np.arange(2, n + 2), axis=axis)
        out += (lo - 2.0 * u + hi) / (h * h)
    return out


def integrate(values: np.ndarray, grid: Grid) -> float:
    """Midpoint rule over the grid.

    The cell sum is an exactly rounded ``math.fsum`` in index order, so the
    result does not depend on array layout or thread count.
    """
    arr = np.asarray(values, dtype=float)
    if arr.size != grid.size:
        raise InputError(f"field has {arr.size} values, grid has {grid.size} cells")
    return math.fsum(arr.ravel().tolist()) * grid.cell_volume


def extrema(values: np.ndarray) -> tuple[float, float]:
    arr = np.asarray(values, dtype=float)
    return float(arr.min()), float(arr.max())
