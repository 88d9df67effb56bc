"""Numerical checks of the operator-valued free central limit theorem.

Submodules: :mod:`operator_space` (points of the upper half-plane),
:mod:`covariance` (covariance maps and moment constants), :mod:`mde_solver`
(semicircular Cauchy transform), :mod:`cumulant_engine` (operator-valued
cumulants and the series for ``G_n``), :mod:`scalar_lab` (scalar oracles
and densities), :mod:`berry_esseen` (the rate bound and sweeps) and
:mod:`cli`.
"""
from .berry_esseen import BoundInputs, RateRecord, c_n, run_sweep, theorem_rhs
from .covariance import CovarianceModel, alpha2, alpha4_bounds, eta_apply, scalar_model
from .cumulant_engine import CumulantFamily, gn_series, moment, scaled_cumulants
from .mde_solver import MdeSolution, NoConvergence, scalar_semicircle, solve_mde
from .operator_space import NotInUpperHalfPlane, OperatorPoint, make_point, scalar_point
from .scalar_lab import (
    ScalarFamily,
    bernoulli_family,
    free_power_cauchy,
    semicircle_family,
    stieltjes_invert,
    two_point_family,
)

__version__ = "0.1.0"
