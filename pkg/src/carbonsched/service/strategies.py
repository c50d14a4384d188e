"""Approximate-average strategies served by the demo service.

Each strategy averages a sampled subset of the data: every 4th element
(low power), every 2nd (medium power) or all of them (high power).
"""
from __future__ import annotations

import time
from abc import ABC, abstractmethod
from fractions import Fraction
from typing import Sequence

from ..model import StrategyCatalog, StrategyProfile, to_fixed


def approx_average(data: Sequence[int], step: int = 1) -> int:
    """Mean of ``data[0], data[step], data[2*step], ...`` rounded half-to-even."""
    if not data:
        raise ValueError("data must be nonempty")
    if step < 1:
        raise ValueError("step must be >= 1")
    total = 0
    count = 0
    for i in range(0, len(data), step):
        count += 1
        total += data[i]
    # round() on a Fraction is exact banker's rounding
    return round(Fraction(total, count))


def strategy_error_pct(data: Sequence[int], step: int) -> float:
    """Distance between the step-sampled and the exact average, in percent."""
    approx = approx_average(data, step)
    exact = approx_average(data, 1)
    if exact == 0:
        return 0.0 if approx == 0 else 100.0
    return 100 * abs(approx - exact) / abs(exact)


class CarbonAwareStrategy(ABC):
    name: str
    step: int

    @abstractmethod
    def avg(self, data: Sequence[int]) -> int:
        ...


class LowPowerStrategy(CarbonAwareStrategy):
    name = "LOW_POWER"
    step = 4

    def avg(self, data):
        return approx_average(data, step=4)


class MediumPowerStrategy(CarbonAwareStrategy):
    name = "MEDIUM_POWER"
    step = 2

    def avg(self, data):
        return approx_average(data, step=2)


class HighPowerStrategy(CarbonAwareStrategy):
    name = "HIGH_POWER"
    step = 1

    def avg(self, data):
        return approx_average(data)


STRATEGIES: dict[str, CarbonAwareStrategy] = {
    s.name: s for s in (LowPowerStrategy(), MediumPowerStrategy(), HighPowerStrategy())
}


def get_strategy(name: str) -> CarbonAwareStrategy:
    try:
        return STRATEGIES[name]
    except KeyError:
        raise KeyError(f"unknown strategy {name!r}; expected one of {sorted(STRATEGIES)}") from None


def benchmark_strategies(dataset: Sequence[int], trials: int = 10, clock=time.perf_counter) -> dict[str, dict]:
    """Mean wall-clock time and output error of each strategy over ``trials`` runs."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    data = list(dataset)
    results = {}
    for name, strategy in STRATEGIES.items():
        elapsed = 0.0
        for _ in range(trials):
            t0 = clock()
            strategy.avg(data)
            elapsed += clock() - t0
        results[name] = {
            "mean_service_time_ms": 1000 * elapsed / trials,
            "mean_error_pct": strategy_error_pct(data, strategy.step),
        }
    return results


def benchmark_catalog(results: dict[str, dict]) -> StrategyCatalog:
    """Turn benchmark output into a catalog (values rounded to one decimal)."""
    rows = []
    for j, name in enumerate(STRATEGIES):
        ms = results[name]["mean_service_time_ms"]
        err = results[name]["mean_error_pct"]
        # service time must stay positive after rounding
        rows.append(StrategyProfile(j, name, max(1, to_fixed(f"{ms:.1f}")), to_fixed(f"{err:.1f}")))
    return StrategyCatalog(tuple(rows))
