"""Coefficient package."""
from coeff.fields import CoefficientField, trig_coefficient, constant_coefficient, coefficient_grid
from coeff.raster import RasterGrid, load_raster, write_raster, read_raster, synthetic_channel

__all__ = [
    "CoefficientField",
    "trig_coefficient",
    "constant_coefficient",
    "coefficient_grid",
    "RasterGrid",
    "load_raster",
    "write_raster",
    "read_raster",
    "synthetic_channel",
]
