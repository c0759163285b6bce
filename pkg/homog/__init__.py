"""Numerical homogenization package: measurements, coarse bases, decay diagnostics."""
from homog.measurements import MeasurementSet, build_measurements, coarse_dof
from homog.basis import (
    CoarseBasis,
    compute_global_basis,
    compute_local_basis,
    build_basis,
    identity_basis,
    default_layers,
    galerkin_solve,
)
from homog.decay import decay_profile, fit_decay_rate, basis_slice, central_measurement

__all__ = [
    "MeasurementSet",
    "build_measurements",
    "coarse_dof",
    "CoarseBasis",
    "compute_global_basis",
    "compute_local_basis",
    "build_basis",
    "identity_basis",
    "default_layers",
    "galerkin_solve",
    "decay_profile",
    "fit_decay_rate",
    "basis_slice",
    "central_measurement",
]
