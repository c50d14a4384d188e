"""Request and response bodies for the HTTP API."""
from __future__ import annotations

from typing import Literal, Optional

from pydantic import BaseModel, Field


class AverageResponse(BaseModel):
    value: int


class HealthResponse(BaseModel):
    status: str = "ok"


class StrategyIn(BaseModel):
    name: str
    service_time_ms: float = Field(gt=0)
    error_pct: float = Field(ge=0)


class SolveRequest(BaseModel):
    requests: list[int] = Field(min_length=1)
    carbon_intensity: list[int] = Field(min_length=1)
    strategies: list[StrategyIn] = Field(min_length=1)
    epsilon_pct: float = Field(ge=0)
    power_watts: float = Field(default=50.0, gt=0)
    slot_duration_minutes: int = Field(default=30, gt=0)


class SolveResponse(BaseModel):
    status: Literal["optimal", "infeasible"]
    choices: Optional[list[int]] = None
    strategy_names: Optional[list[str]] = None
    emissions_g: Optional[float] = None
    weighted_error_dpct: Optional[int] = None
    avg_error_pct: Optional[float] = None
    min_feasible_epsilon_pct: float
