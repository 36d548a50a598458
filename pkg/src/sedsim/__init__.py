"""Stochastic-field simulation of the classical hydrogen-like atom in Bohr units."""
from .conjecture import histogram_compare, sample_initial_conditions
from .config import RunConfig, emit_config, parse_config
from .constants import PhysicalConstants
from .dynamics import OrbitElements, PhaseState, coulomb_force, orbit_elements
from .ensemble import RunSummary, run_ensemble, run_trajectory, summarize
from .field import (FieldRealization, FieldWindow, FrequencyGrid, build_field, eval_A, eval_C,
                    eval_E, switch_window)
from .integrator import IntegratorConfig, Trajectory
from .record import TrajectoryRecord, detect_ionisation
from .reduction import ReductionPlan, chunked_sum

__version__ = "0.1.0"

__all__ = [
    "FieldRealization", "FieldWindow", "FrequencyGrid", "IntegratorConfig", "OrbitElements",
    "PhaseState", "PhysicalConstants", "ReductionPlan", "RunConfig", "RunSummary", "Trajectory",
    "TrajectoryRecord", "build_field", "chunked_sum", "coulomb_force", "detect_ionisation",
    "emit_config", "eval_A", "eval_C", "eval_E", "histogram_compare", "orbit_elements",
    "parse_config", "run_ensemble", "run_trajectory", "sample_initial_conditions", "summarize",
    "switch_window",
]
