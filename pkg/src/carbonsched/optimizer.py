"""Exact solver for carbon-minimal, error-bounded strategy assignments.

The lower level (minimum scaled emission over assignments meeting the error
budget) and the upper level (minimum weighted error among those) are solved
together by comparing ``(scaled_emission, weighted_error)`` pairs
lexicographically. The solver is a multiple-choice knapsack dynamic program
processed from the last slot backwards; each stage keeps only the Pareto
frontier of ``(error, emission)`` pairs reachable by the suffix, which is a
sparse encoding of the dense error-indexed table.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Literal

import numpy as np

from .model import (
    Assignment,
    EmissionParams,
    Horizon,
    Metrics,
    StrategyCatalog,
    ValidationError,
    check_magnitude,
    compute_metrics,
    error_budget_dpct,
)

DEFAULT_STATE_CAP = 10**8
DEFAULT_ENUMERATION_CAP = 10**7


class InstanceTooLarge(ValueError):
    pass


@dataclass(frozen=True)
class SolveResult:
    status: Literal["optimal", "infeasible"]
    assignment: Assignment | None = None
    metrics: Metrics | None = None
    min_feasible_epsilon_dpct: int = 0

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"

    @property
    def objective(self) -> tuple[int, int] | None:
        if self.metrics is None:
            return None
        return self.metrics.scaled_emission, self.metrics.weighted_error_dpct


def _tables(horizon: Horizon, catalog: StrategyCatalog):
    r = np.array(horizon.requests, dtype=np.int64)
    c = np.array(horizon.carbon, dtype=np.int64)
    d = np.array([s.mean_service_time_dms for s in catalog], dtype=np.int64)
    e = np.array([s.mean_error_dpct for s in catalog], dtype=np.int64)
    # [slot, strategy]
    return np.outer(r, e), np.outer(c * r, d)


def _infeasible(horizon: Horizon, catalog: StrategyCatalog) -> SolveResult:
    return SolveResult("infeasible", min_feasible_epsilon_dpct=catalog.min_error_dpct)


def _is_infeasible(horizon: Horizon, catalog: StrategyCatalog, budget: int) -> bool:
    return catalog.min_error_dpct * horizon.total_requests > budget


def _result(horizon, catalog, choices, params) -> SolveResult:
    assignment = Assignment(tuple(choices))
    return SolveResult(
        "optimal",
        assignment,
        compute_metrics(horizon, catalog, assignment, params),
        min_feasible_epsilon_dpct=catalog.min_error_dpct,
    )


def _pareto(err: np.ndarray, em: np.ndarray, limit: int):
    """Nondominated ``(err, em)`` pairs with ``err <= limit``, sorted by err.

    Emission strictly decreases along the result, so each error value
    appears at most once.
    """
    keep = err <= limit
    err, em = err[keep], em[keep]
    order = np.lexsort((em, err))
    err, em = err[order], em[order]
    if len(err) == 0:
        return err, em
    best_before = np.minimum.accumulate(em)
    mask = np.empty(len(err), dtype=bool)
    mask[0] = True
    mask[1:] = em[1:] < best_before[:-1]
    return err[mask], em[mask]


def solve(
    horizon: Horizon,
    catalog: StrategyCatalog,
    epsilon_dpct: int,
    params: EmissionParams = EmissionParams(),
    *,
    state_cap: int = DEFAULT_STATE_CAP,
) -> SolveResult:
    """Find the optimal assignment for tolerated average error ``epsilon_dpct``.

    Ties on the objective pair go to the lexicographically smallest choices
    vector. Returns an ``infeasible`` result (not an exception) when even
    the lowest-error strategy everywhere exceeds the budget.
    """
    check_magnitude(horizon, catalog)
    budget = error_budget_dpct(horizon, epsilon_dpct)
    if _is_infeasible(horizon, catalog, budget):
        return _infeasible(horizon, catalog)

    weights, emissions = _tables(horizon, catalog)
    t = len(horizon)
    # Past this point the error constraint cannot bind.
    budget = min(budget, int(weights.max(axis=1).sum()))
    min_w = weights.min(axis=1)
    prefix_min = np.concatenate(([0], np.cumsum(min_w)))

    fronts: list[tuple[np.ndarray, np.ndarray]] = [None] * (t + 1)  # type: ignore[list-item]
    err = np.zeros(1, dtype=np.int64)
    em = np.zeros(1, dtype=np.int64)
    fronts[t] = (err, em)
    for i in range(t - 1, -1, -1):
        err, em = _pareto(
            np.concatenate([err + w for w in weights[i]]),
            np.concatenate([em + x for x in emissions[i]]),
            budget - int(prefix_min[i]),
        )
        if len(err) > state_cap:
            raise InstanceTooLarge(f"frontier at slot {i} has {len(err)} states (cap {state_cap})")
        fronts[i] = (err, em)

    err0, em0 = fronts[0]
    if len(err0) == 0:
        return _infeasible(horizon, catalog)
    target_err, target_em = int(err0[-1]), int(em0[-1])

    choices = []
    for i in range(t):
        nxt_err, nxt_em = fronts[i + 1]
        for j in range(len(catalog)):
            rest_err = target_err - int(weights[i, j])
            rest_em = target_em - int(emissions[i, j])
            if rest_err < 0 or rest_em < 0:
                continue
            k = int(np.searchsorted(nxt_err, rest_err))
            if k < len(nxt_err) and nxt_err[k] == rest_err and nxt_em[k] == rest_em:
                choices.append(j)
                target_err, target_em = rest_err, rest_em
                break
        else:  # pragma: no cover - frontier invariant broken
            raise RuntimeError(f"reconstruction failed at slot {i}")
    return _result(horizon, catalog, choices, params)


def brute_force_solve(
    horizon: Horizon,
    catalog: StrategyCatalog,
    epsilon_dpct: int,
    params: EmissionParams = EmissionParams(),
    *,
    cap: int = DEFAULT_ENUMERATION_CAP,
    chunk: int = 1 << 16,
) -> SolveResult:
    """Enumerate every assignment in lexicographic order and keep the best.

    A candidate replaces the incumbent only when its (emission, error) pair
    is strictly smaller, so the first optimum met wins ties. Enumeration is
    done in numpy blocks; block order preserves lexicographic order.
    """
    s, t = len(catalog), len(horizon)
    if s**t > cap:
        raise InstanceTooLarge(f"{s}^{t} assignments exceed the enumeration cap {cap}")
    check_magnitude(horizon, catalog)
    budget = error_budget_dpct(horizon, epsilon_dpct)
    weights, emissions = _tables(horizon, catalog)

    best: tuple[int, int] | None = None
    best_choices = None
    total = s**t
    # place values: slot 0 is the most significant digit
    place = s ** np.arange(t - 1, -1, -1, dtype=np.int64)
    slots = np.arange(t)
    for start in range(0, total, chunk):
        codes = np.arange(start, min(start + chunk, total), dtype=np.int64)
        digits = (codes[:, None] // place[None, :]) % s
        err = weights[slots, digits].sum(axis=1)
        em = emissions[slots, digits].sum(axis=1)
        feasible = np.flatnonzero(err <= budget)
        if len(feasible) == 0:
            continue
        # first index of the lexicographic minimum of (em, err) in this block
        k = feasible[np.lexsort((feasible, err[feasible], em[feasible]))[0]]
        pair = (int(em[k]), int(err[k]))
        if best is None or pair < best:
            best, best_choices = pair, digits[k].tolist()
    if best is None:
        return _infeasible(horizon, catalog)
    return _result(horizon, catalog, best_choices, params)


def naive_enumerate(horizon: Horizon, catalog: StrategyCatalog, epsilon_dpct: int) -> tuple[int, int] | None:
    """Pure-Python enumeration of the optimal pair; for tiny cross-checks only."""
    budget = error_budget_dpct(horizon, epsilon_dpct)
    best = None
    for choices in itertools.product(range(len(catalog)), repeat=len(horizon)):
        err = sum(sl.requests * catalog[j].mean_error_dpct for sl, j in zip(horizon.slots, choices))
        if err > budget:
            continue
        em = sum(
            sl.carbon_intensity_g_per_kwh * sl.requests * catalog[j].mean_service_time_dms
            for sl, j in zip(horizon.slots, choices)
        )
        if best is None or (em, err) < best:
            best = (em, err)
    return best


def min_feasible_epsilon_pct(catalog: StrategyCatalog) -> float:
    return catalog.min_error_dpct / 10


__all__ = [
    "SolveResult",
    "InstanceTooLarge",
    "ValidationError",
    "solve",
    "brute_force_solve",
    "naive_enumerate",
    "min_feasible_epsilon_pct",
]
