"""Quasilinear impulsive differential equations with regular impulse moments
and piecewise-constant forcing built from a logistic-map orbit."""
from .config import RunConfig, build_system, example_config, load_config
from .diagnostics import periodicity_defect, separation_scan, shift_convergence
from .integrate import Trajectory, bounded_solution, integrate, stability_probe
from .schedule import ImpulseSchedule
from .signals import VectorSequence, find_witnesses, lift_sequence, logistic_orbit
from .system import (
    QuasilinearImpulsiveSystem,
    SystemConstants,
    assemble_constants,
    cauchy_matrix,
    check_hypotheses,
    compute_derived_constants,
    fit_decay_bound,
    gronwall_bound,
)

__version__ = "0.1.0"

__all__ = [
    "ImpulseSchedule",
    "QuasilinearImpulsiveSystem",
    "RunConfig",
    "SystemConstants",
    "Trajectory",
    "VectorSequence",
    "assemble_constants",
    "bounded_solution",
    "build_system",
    "cauchy_matrix",
    "check_hypotheses",
    "compute_derived_constants",
    "example_config",
    "find_witnesses",
    "fit_decay_bound",
    "gronwall_bound",
    "integrate",
    "lift_sequence",
    "load_config",
    "logistic_orbit",
    "periodicity_defect",
    "separation_scan",
    "shift_convergence",
    "stability_probe",
]
