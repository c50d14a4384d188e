import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from carbonsched.model import Horizon, StrategyCatalog, error_budget_dpct
from carbonsched.optimizer import InstanceTooLarge, brute_force_solve, naive_enumerate, solve

from .conftest import HIGH, LOW, MEDIUM, random_instance


@pytest.mark.parametrize(
    "eps, expected",
    [
        (0, (HIGH,) * 6),
        (150, (LOW,) * 6),
        (50, (HIGH, MEDIUM, HIGH, LOW, MEDIUM, LOW)),
    ],
)
def test_worked_example(paper_horizon, paper_catalog, params, eps, expected):
    result = solve(paper_horizon, paper_catalog, eps, params)
    assert result.status == "optimal"
    assert result.assignment.choices == expected
    oracle = brute_force_solve(paper_horizon, paper_catalog, eps, params)
    assert oracle.assignment.choices == expected
    assert oracle.objective == result.objective


def test_brute_force_matches_pure_python_enumeration():
    rng = np.random.default_rng(11)
    for _ in range(60):
        h, cat, eps = random_instance(rng, max_t=5, max_s=3)
        ref = naive_enumerate(h, cat, eps)
        got = brute_force_solve(h, cat, eps)
        assert (got.objective if got.optimal else None) == ref


def test_single_slot_picks_cheapest_admissible():
    cat = StrategyCatalog.from_values([("a", 100, 50), ("b", 300, 10), ("c", 200, 20), ("d", 500, 0)])
    h = Horizon.from_lists([40], [200])
    for eps in (10, 20, 50, 100):
        admissible = [s for s in cat if s.mean_error_dpct <= eps]
        best = min(admissible, key=lambda s: (s.mean_service_time_dms, s.mean_error_dpct, s.id))
        assert solve(h, cat, eps).assignment.choices == (best.id,)
        assert brute_force_solve(h, cat, eps).assignment.choices == (best.id,)


def test_infeasible_status():
    cat = StrategyCatalog.from_values([("low", 353, 134), ("medium", 663, 45)])
    h = Horizon.from_lists([10, 20], [100, 200])
    result = solve(h, cat, 5)
    assert result.status == "infeasible" and result.assignment is None
    assert result.min_feasible_epsilon_dpct == 45
    assert brute_force_solve(h, cat, 5).status == "infeasible"
    assert solve(h, cat, 45).optimal


def test_zero_demand_everything_feasible():
    cat = StrategyCatalog.from_values([("low", 353, 134), ("medium", 663, 45)])
    h = Horizon.from_lists([0, 0, 0], [100, 200, 300])
    result = solve(h, cat, 0)
    assert result.optimal and result.assignment.choices == (0, 0, 0)
    assert result.metrics.avg_error_pct == 0


def test_tie_break_is_lexicographic():
    # two identical strategies: every assignment ties, the all-zero vector wins
    cat = StrategyCatalog.from_values([("a", 100, 10), ("b", 100, 10)])
    h = Horizon.from_lists([5, 5, 5], [1, 1, 1])
    assert solve(h, cat, 10).assignment.choices == (0, 0, 0)
    # equal emission both ways: pick the lower-error pair, then the lower id
    cat = StrategyCatalog.from_values([("x", 200, 30), ("y", 100, 0), ("z", 100, 0)])
    h = Horizon.from_lists([1, 2], [2, 1])
    res = solve(h, cat, 30)
    assert res.assignment.choices == brute_force_solve(h, cat, 30).assignment.choices == (1, 1)


def test_enumeration_cap():
    cat = StrategyCatalog.from_values([("a", 1, 0), ("b", 2, 0), ("c", 3, 0)])
    h = Horizon.from_lists([1] * 16, [1] * 16)
    with pytest.raises(InstanceTooLarge):
        brute_force_solve(h, cat, 0)


def test_state_cap():
    rng = np.random.default_rng(3)
    h = Horizon.from_lists(rng.integers(100, 1000, 30).tolist(), rng.integers(50, 400, 30).tolist())
    cat = StrategyCatalog.from_values([("l", 353, 134), ("m", 663, 45), ("h", 1002, 0)])
    with pytest.raises(InstanceTooLarge):
        solve(h, cat, 80, state_cap=5)


def test_full_day_is_fast_and_feasible(paper_catalog):
    import time

    rng = np.random.default_rng(5)
    h = Horizon.from_lists(rng.integers(0, 1200, 48).tolist(), rng.integers(50, 400, 48).tolist())
    t0 = time.perf_counter()
    for eps in (10, 20, 40, 80, 150):
        res = solve(h, paper_catalog, eps)
        assert res.metrics.weighted_error_dpct <= error_budget_dpct(h, eps)
    assert time.perf_counter() - t0 < 10


def test_zero_budget_collapse():
    cat = StrategyCatalog.from_values([("a", 100, 20), ("z1", 400, 0), ("z2", 300, 0)])
    h = Horizon.from_lists([3, 4, 5], [10, 20, 30])
    assert solve(h, cat, 0).assignment.choices == (2, 2, 2)


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_oracle_equivalence_property(seed):
    h, cat, eps = random_instance(np.random.default_rng(seed), max_t=6, max_s=3)
    a, b = solve(h, cat, eps), brute_force_solve(h, cat, eps)
    assert a.status == b.status
    if a.optimal:
        assert a.objective == b.objective
        assert a.assignment.choices == b.assignment.choices


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_monotone_in_epsilon(seed):
    h, cat, _ = random_instance(np.random.default_rng(seed), max_t=10, max_s=4)
    prev = None
    for eps in range(0, 160, 10):
        res = solve(h, cat, eps)
        if not res.optimal:
            assert prev is None
            continue
        if prev is not None:
            assert res.metrics.scaled_emission <= prev
        prev = res.metrics.scaled_emission


def test_deterministic(paper_horizon, paper_catalog, params):
    assert solve(paper_horizon, paper_catalog, 50, params) == solve(paper_horizon, paper_catalog, 50, params)
