"""Piecewise-constant raster coefficients (SPE10-style layers) and synthetic channel fields.

File format: first line "nx ny", then nx*ny whitespace-separated positive
decimals, row-major with the bottom row first.
"""
import logging
from pathlib import Path
from typing import Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

from coeff.fields import CoefficientField
from config.settings import settings
from mesh.hierarchy import Rectangle, UNIT_SQUARE

logger = logging.getLogger(__name__)


class RasterGrid(BaseModel):
    """nx x ny cell values over a rectangle; values[j * nx + i] is cell (i, j) counted from the bottom-left."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    nx: int
    ny: int
    values: np.ndarray
    extent: Rectangle = UNIT_SQUARE

    @model_validator(mode="after")
    def _check_values(self) -> "RasterGrid":
        if self.nx < 1 or self.ny < 1:
            raise ValueError(f"Raster dimensions must be positive, got {self.nx} x {self.ny}")
        if self.values.ndim != 1 or self.values.size != self.nx * self.ny:
            raise ValueError(
                f"Raster dimension mismatch: header says {self.nx} x {self.ny} = "
                f"{self.nx * self.ny} cells, got {self.values.size} values"
            )
        bad = np.flatnonzero(~np.isfinite(self.values) | (self.values <= 0))
        if bad.size:
            k = int(bad[0])
            raise ValueError(
                f"Raster cell {k} (i={k % self.nx}, j={k // self.nx}) has non-positive value {self.values[k]}"
            )
        return self

    def cell_value(self, x, y) -> np.ndarray:
        """Value of the containing cell, clamped at the extent edges."""
        e = self.extent
        i = np.clip(np.floor((np.asarray(x) - e.x0) / e.width * self.nx).astype(np.int64), 0, self.nx - 1)
        j = np.clip(np.floor((np.asarray(y) - e.y0) / e.height * self.ny).astype(np.int64), 0, self.ny - 1)
        return self.values[j * self.nx + i]


def raster_field(grid: RasterGrid, kind: str = "raster", label: Optional[str] = None) -> CoefficientField:
    return CoefficientField(
        kind,
        grid.cell_value,
        float(grid.values.min()),
        float(grid.values.max()),
        label or f"raster:{grid.nx}x{grid.ny}",
        raster=grid,
    )


def read_raster(path: Union[str, Path], extent: Rectangle = UNIT_SQUARE) -> RasterGrid:
    path = Path(path)
    if not path.is_file():
        raise ValueError(f"Raster file '{path}' does not exist")

    tokens = path.read_text().split()
    if len(tokens) < 2:
        raise ValueError(f"Raster file '{path}' is missing its 'nx ny' header")
    try:
        nx, ny = int(tokens[0]), int(tokens[1])
    except ValueError as exc:
        raise ValueError(f"Raster file '{path}': cannot parse header '{tokens[0]} {tokens[1]}'") from exc
    try:
        values = np.array([float(t) for t in tokens[2:]])
    except ValueError as exc:
        raise ValueError(f"Raster file '{path}': non-numeric cell value ({exc})") from exc

    return RasterGrid(nx=nx, ny=ny, values=values, extent=extent)


def load_raster(path: Union[str, Path], extent: Rectangle = UNIT_SQUARE) -> CoefficientField:
    """Load a piecewise-constant field; kappa is exactly max/min over the cells."""
    grid = read_raster(path, extent)
    field = raster_field(grid, label=f"raster:{Path(path).name}")
    logger.info(f"Loaded raster {path}: {grid.nx}x{grid.ny} cells, kappa={field.kappa:.6g}")
    return field


def write_raster(grid: RasterGrid, path: Union[str, Path]) -> Path:
    """Write `grid` so that `read_raster` reproduces the values bit for bit."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    rows = [" ".join(repr(float(v)) for v in grid.values[j * grid.nx:(j + 1) * grid.nx]) for j in range(grid.ny)]
    path.write_text(f"{grid.nx} {grid.ny}\n" + "\n".join(rows) + "\n")
    return path


def synthetic_channel(
    kappa: float,
    channels: int,
    seed: int,
    extent: Rectangle = UNIT_SQUARE,
    cells: Optional[int] = None,
) -> CoefficientField:
    """Random log-uniform background in [1, sqrt(kappa)] crossed by horizontal channels of value kappa."""
    if not kappa >= 1.0:
        raise ValueError(f"Contrast kappa must be >= 1, got {kappa}")
    n = cells or settings.synthetic_cells
    label = f"channel:{kappa:g},{channels},{seed}"

    if kappa == 1.0:
        grid = RasterGrid(nx=n, ny=n, values=np.ones(n * n), extent=extent)
        return raster_field(grid, kind="synthetic-channel", label=label)

    if not 1 <= channels <= n // 2:
        raise ValueError(f"Number of channels must lie in [1, {n // 2}], got {channels}")

    rng = np.random.default_rng(seed)
    background = 10.0 ** rng.uniform(0.0, 0.5 * np.log10(kappa), size=(n, n))

    rows = np.sort(rng.choice(n, size=channels, replace=False))
    in_channel = np.zeros((n, n), dtype=bool)
    for r in rows:
        width = int(rng.integers(1, 3))
        in_channel[r:r + width, :] = True
    if in_channel.all():
        in_channel[-1, :] = False

    values = background.copy()
    values[in_channel] = kappa
    # pin the minimum so that max/min is exactly kappa
    free = np.flatnonzero(~in_channel.ravel())
    values.ravel()[free[np.argmin(values.ravel()[free])]] = 1.0

    grid = RasterGrid(nx=n, ny=n, values=values.ravel(), extent=extent)
    field = raster_field(grid, kind="synthetic-channel", label=label)
    logger.info(f"Synthetic channel field {label}: {int(in_channel.any(axis=1).sum())} channel rows, kappa={field.kappa:.6g}")
    return field
