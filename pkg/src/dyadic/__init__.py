"""Numerical laboratory for dyadic Euler and ideal-MHD shell models."""
from .diagnostics import (LyapunovParams, LyapunovReport, cross_helicity, energy, lyapunov, monitors,
                          psi_squared_bound_check, riccati_blowup_bound, sobolev_norm, weak_distance)
from .integrator import (EventSpec, IntegratorConfig, Method, NonFiniteError, Termination, Trajectory,
                         integrate, step_fixed)
from .linstab import (EigenProblem, PerturbationState, continued_fraction, eigen_scan,
                      magnetic_eigenvector, perturbation_rhs, velocity_eigenvector)
from .models import (FluxProfile, FluxVariant, ModelKind, ModelSpec, ShellState, flux, make_model,
                     rescale, rhs)
from .steady import FixedPoint, fixed_point, newton_steady, residual, shell_ratios

__all__ = [
    "FluxProfile", "FluxVariant", "ModelKind", "ModelSpec", "ShellState", "flux", "make_model",
    "rescale", "rhs",
    "EventSpec", "IntegratorConfig", "Method", "NonFiniteError", "Termination", "Trajectory",
    "integrate", "step_fixed",
    "LyapunovParams", "LyapunovReport", "cross_helicity", "energy", "lyapunov", "monitors",
    "psi_squared_bound_check", "riccati_blowup_bound", "sobolev_norm", "weak_distance",
    "FixedPoint", "fixed_point", "newton_steady", "residual", "shell_ratios",
    "EigenProblem", "PerturbationState", "continued_fraction", "eigen_scan",
    "magnetic_eigenvector", "perturbation_rhs", "velocity_eigenvector",
]
__version__ = "0.1.0"
