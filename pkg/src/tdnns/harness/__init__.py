"""Manufactured cases, study drivers, output writers and the command line."""
from .cases import CaseError, ManufacturedCase, builtin_cases, get_case, make_case
from .study import (
    ConfigError,
    StudyConfig,
    StudyTable,
    load_config,
    parse_config,
    rate,
    run_convergence,
    run_interp_rates,
    run_stability,
    run_study,
)
from .vtk import write_solution_vtk

__all__ = [
    "CaseError",
    "ConfigError",
    "ManufacturedCase",
    "StudyConfig",
    "StudyTable",
    "builtin_cases",
    "get_case",
    "load_config",
    "make_case",
    "parse_config",
    "rate",
    "run_convergence",
    "run_interp_rates",
    "run_stability",
    "run_study",
    "write_solution_vtk",
]
