"""Baseline assignment policies used for comparison against the optimizer."""
from __future__ import annotations

from dataclasses import dataclass

from .model import Assignment, Horizon, StrategyCatalog, ValidationError


@dataclass(frozen=True)
class NaiveThresholds:
    """Carbon-intensity bands and load reference for :func:`naive_policy`.

    ``max_expected_requests=None`` means "the largest forecast value in the
    horizon being scheduled".
    """

    low_max_g_per_kwh: int = 150
    moderate_max_g_per_kwh: int = 250
    max_expected_requests: int | None = None

    def __post_init__(self):
        if self.low_max_g_per_kwh > self.moderate_max_g_per_kwh:
            raise ValidationError("low_max_g_per_kwh must not exceed moderate_max_g_per_kwh")
        if self.max_expected_requests is not None and self.max_expected_requests <= 0:
            raise ValidationError("max_expected_requests must be positive")


def always_policy(horizon: Horizon, strategy_id: int, catalog: StrategyCatalog | None = None) -> Assignment:
    if strategy_id < 0 or (catalog is not None and strategy_id >= len(catalog)):
        raise ValidationError(f"invalid strategy id {strategy_id}")
    return Assignment((strategy_id,) * len(horizon))


def _roles(catalog: StrategyCatalog) -> tuple[int, int, int]:
    if len(catalog) != 3:
        raise ValidationError(f"naive policy needs exactly 3 strategies, catalog has {len(catalog)}")
    low, medium, high = sorted(range(3), key=lambda j: (catalog[j].mean_service_time_dms, j))
    return low, medium, high


def naive_choice(requests: int, intensity: int, max_expected: int, thresholds: NaiveThresholds) -> str:
    # r < max/3 written as 3r < max to stay in integers
    if intensity <= thresholds.low_max_g_per_kwh and 3 * requests < max_expected:
        return "high"
    if intensity <= thresholds.moderate_max_g_per_kwh and 3 * requests < 2 * max_expected:
        return "medium"
    return "low"


def naive_policy(
    horizon: Horizon, catalog: StrategyCatalog, thresholds: NaiveThresholds = NaiveThresholds()
) -> Assignment:
    low, medium, high = _roles(catalog)
    role_ids = {"low": low, "medium": medium, "high": high}
    max_expected = thresholds.max_expected_requests
    if max_expected is None:
        max_expected = max(horizon.requests)
    return Assignment(
        tuple(
            role_ids[naive_choice(s.requests, s.carbon_intensity_g_per_kwh, max_expected, thresholds)]
            for s in horizon.slots
        )
    )
