"""FastAPI app exposing the carbon-aware approximate-average service."""
from __future__ import annotations

import logging
from datetime import datetime
from pathlib import Path
from typing import Callable, Optional, Sequence

from fastapi import FastAPI, HTTPException

from ..model import EmissionParams, Horizon, StrategyCatalog, StrategyProfile, ValidationError, to_fixed
from ..optimizer import solve
from .schedule import MissingSlot, ScheduleStore, lookup_strategy
from .schemas import AverageResponse, HealthResponse, SolveRequest, SolveResponse
from .strategies import STRATEGIES

log = logging.getLogger(__name__)


def load_dataset(path: str | Path) -> list[int]:
    values = []
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        try:
            values.append(int(line))
        except ValueError:
            raise ValueError(f"{path}:{n}: not an integer: {line!r}") from None
    if not values:
        raise ValueError(f"{path}: dataset is empty")
    return values


class Context:
    """Picks the strategy for the current time slot from a schedule store."""

    def __init__(self, store: ScheduleStore, clock: Callable[[], datetime] = datetime.now):
        self.store = store
        self.clock = clock

    def get_strategy(self, force: Optional[str] = None):
        name = lookup_strategy(self.store.schedule, self.clock(), force, STRATEGIES)
        return STRATEGIES[name]


def create_app(
    dataset: Sequence[int],
    schedule_path: str | Path,
    clock: Callable[[], datetime] = datetime.now,
    reload_interval: float = 1.0,
) -> FastAPI:
    if not dataset:
        raise ValueError("dataset must be nonempty")
    data = list(dataset)
    context = Context(ScheduleStore(schedule_path, STRATEGIES, min_interval=reload_interval), clock)

    app = FastAPI(title="carbonsched")
    app.state.context = context
    app.state.data = data

    @app.get("/avg", response_model=AverageResponse)
    def avg(force: Optional[str] = None):
        if force is not None and force not in STRATEGIES:
            raise HTTPException(400, f"unknown strategy {force!r}; expected one of {sorted(STRATEGIES)}")
        try:
            strategy = context.get_strategy(force)
            value = strategy.avg(data)
        except MissingSlot as exc:
            log.error("%s", exc)
            raise HTTPException(500, str(exc.args[0])) from exc
        return {"value": value}

    @app.get("/healthz", response_model=HealthResponse)
    def healthz():
        return HealthResponse()

    @app.post("/solve", response_model=SolveResponse)
    def solve_endpoint(body: SolveRequest):
        try:
            catalog = StrategyCatalog(
                tuple(
                    StrategyProfile(j, s.name, to_fixed(s.service_time_ms), to_fixed(s.error_pct))
                    for j, s in enumerate(body.strategies)
                )
            )
            horizon = Horizon.from_lists(body.requests, body.carbon_intensity, body.slot_duration_minutes)
            result = solve(horizon, catalog, to_fixed(body.epsilon_pct, "epsilon"), EmissionParams(body.power_watts))
        except ValidationError as exc:
            raise HTTPException(422, str(exc)) from exc
        out = SolveResponse(status=result.status, min_feasible_epsilon_pct=result.min_feasible_epsilon_dpct / 10)
        if result.optimal:
            out.choices = list(result.assignment.choices)
            out.strategy_names = [catalog[j].name for j in result.assignment.choices]
            out.emissions_g = result.metrics.emissions_g
            out.weighted_error_dpct = result.metrics.weighted_error_dpct
            out.avg_error_pct = result.metrics.avg_error_pct
        return out

    return app
