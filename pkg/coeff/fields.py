"""Rough scalar coefficient fields a(x)."""
import logging
from typing import Callable, Literal, Optional

import numpy as np

from config.settings import settings
from mesh.hierarchy import MeshHierarchy, Rectangle, UNIT_SQUARE

logger = logging.getLogger(__name__)

FieldKind = Literal["analytic-trig", "raster", "constant", "synthetic-channel"]

# Periods of the five oscillating terms of the multiscale trigonometric field
TRIG_EPSILONS = (1.0 / 5.0, 1.0 / 13.0, 1.0 / 17.0, 1.0 / 31.0, 1.0 / 65.0)


class CoefficientField:
    """A uniformly elliptic scalar coefficient with recorded bounds."""

    def __init__(
        self,
        kind: FieldKind,
        func: Callable[[np.ndarray, np.ndarray], np.ndarray],
        a_min: float,
        a_max: float,
        label: str,
        raster=None,
    ):
        if not (np.isfinite(a_min) and np.isfinite(a_max)) or a_min <= 0 or a_max < a_min:
            raise ValueError(f"Invalid coefficient bounds a_min={a_min}, a_max={a_max} for {label}")
        self.kind = kind
        self.func = func
        self.a_min = float(a_min)
        self.a_max = float(a_max)
        self.label = label
        self.raster = raster

    @property
    def kappa(self) -> float:
        return self.a_max / self.a_min

    def eval(self, x, y) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return np.broadcast_to(self.func(x, y), np.broadcast(x, y).shape).astype(float)

    def sample_on_triangles(self, mesh: MeshHierarchy) -> np.ndarray:
        """One value per fine triangle, taken at its barycenter."""
        centers = mesh.fine_barycenters()
        values = self.eval(centers[:, 0], centers[:, 1])
        bad = np.flatnonzero(~np.isfinite(values) | (values <= 0))
        if bad.size:
            t = int(bad[0])
            raise ValueError(
                f"Coefficient '{self.label}' is not positive at fine triangle {t} "
                f"(barycenter {tuple(centers[t])}, value {values[t]})"
            )
        return values

    def __repr__(self) -> str:
        return (
            f"CoefficientField(kind={self.kind!r}, label={self.label!r}, "
            f"a_min={self.a_min:.6g}, a_max={self.a_max:.6g}, kappa={self.kappa:.6g})"
        )


def _trig(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    e1, e2, e3, e4, e5 = TRIG_EPSILONS
    tp = 2.0 * np.pi
    return (
        (1.1 + np.sin(tp * x / e1)) / (1.1 + np.sin(tp * y / e1))
        + (1.1 + np.sin(tp * y / e2)) / (1.1 + np.cos(tp * x / e2))
        + (1.1 + np.cos(tp * x / e3)) / (1.1 + np.sin(tp * y / e3))
        + (1.1 + np.sin(tp * y / e4)) / (1.1 + np.cos(tp * x / e4))
        + (1.1 + np.cos(tp * x / e5)) / (1.1 + np.sin(tp * y / e5))
        + np.sin(4.0 * x**2 * y**2)
        + 1.0
    ) / 6.0


def sampled_bounds(func, extent: Rectangle, resolution: int) -> tuple:
    """Min and max of `func` over a resolution x resolution grid, row by row."""
    xs = np.linspace(extent.x0, extent.x1, resolution)
    ys = np.linspace(extent.y0, extent.y1, resolution)
    lo, hi = np.inf, -np.inf
    for y in ys:
        row = func(xs, np.full_like(xs, y))
        lo = min(lo, float(row.min()))
        hi = max(hi, float(row.max()))
    return lo, hi


def trig_coefficient(extent: Rectangle = UNIT_SQUARE, resolution: Optional[int] = None) -> CoefficientField:
    """Multiscale trigonometric field with non-separable scales 1/5 ... 1/65."""
    resolution = resolution or settings.coeff_sample_resolution
    a_min, a_max = sampled_bounds(_trig, extent, resolution)
    logger.info(
        f"Trig coefficient sampled on {resolution}x{resolution}: "
        f"a_min={a_min:.6g}, a_max={a_max:.6g}, kappa={a_max / a_min:.6g}"
    )
    return CoefficientField("analytic-trig", _trig, a_min, a_max, "trig")


def constant_coefficient(value: float) -> CoefficientField:
    if not value > 0:
        raise ValueError(f"Constant coefficient must be positive, got {value}")
    value = float(value)
    return CoefficientField(
        "constant", lambda x, y: np.full(np.broadcast(x, y).shape, value), value, value, f"constant:{value:g}"
    )


def coefficient_grid(field: CoefficientField, extent: Rectangle, n: int) -> np.ndarray:
    """log10 a(x) on an n x n grid of cell centers, bottom row first (for plotting)."""
    xs = extent.x0 + (np.arange(n) + 0.5) * extent.width / n
    ys = extent.y0 + (np.arange(n) + 0.5) * extent.height / n
    gx, gy = np.meshgrid(xs, ys)
    return np.log10(field.eval(gx, gy))
