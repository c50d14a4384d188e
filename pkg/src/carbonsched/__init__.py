"""Carbon-aware assignment of service strategies to time slots."""
from .model import (
    Assignment,
    EmissionParams,
    Horizon,
    Metrics,
    SlotForecast,
    StrategyCatalog,
    StrategyProfile,
    ValidationError,
    compute_metrics,
    error_budget_dpct,
    validate_assignment,
)
from .optimizer import SolveResult, brute_force_solve, solve

__version__ = "0.1.0"

__all__ = [
    "Assignment",
    "EmissionParams",
    "Horizon",
    "Metrics",
    "SlotForecast",
    "SolveResult",
    "StrategyCatalog",
    "StrategyProfile",
    "ValidationError",
    "brute_force_solve",
    "compute_metrics",
    "error_budget_dpct",
    "solve",
    "validate_assignment",
]
