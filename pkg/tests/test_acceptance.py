"""Exit criteria for the build; ``pytest -rA tests/test_acceptance.py`` lists them."""
import json
import time
import warnings
from collections import defaultdict
from datetime import datetime

import numpy as np
import pytest
from fastapi.testclient import TestClient

from carbonsched.cli import main
from carbonsched.model import Assignment, EmissionParams, Horizon, StrategyCatalog, compute_metrics, error_budget_dpct
from carbonsched.optimizer import brute_force_solve, solve
from carbonsched.service.app import create_app
from carbonsched.service.schedule import load_schedule
from carbonsched.service.strategies import STRATEGIES, approx_average, strategy_error_pct
from carbonsched.simulator import ExperimentConfig, compare_policies, run_experiment

from .conftest import HIGH, LOW, MEDIUM, SAMPLES, random_instance

GOLDEN_TOL_G = 1e-3
ERROR_TOL_PCT = 0.01
REDUCTION_TOL_PP = 0.5
PERTURBED_SLACK_PP = 0.5
BAND = (5.0, 55.0)


def _instances(n, seed):
    rng = np.random.default_rng(seed)
    return [random_instance(rng, max_t=8, max_s=4, max_r=10_000, max_c=2000) for _ in range(n)]


@pytest.mark.criterion(1, "worked-example golden parity")
def test_criterion_1_golden(paper_horizon, paper_catalog, params):
    t0 = time.perf_counter()
    high = solve(paper_horizon, paper_catalog, 0, params)
    low = solve(paper_horizon, paper_catalog, 150, params)
    mid = solve(paper_horizon, paper_catalog, 50, params)
    assert time.perf_counter() - t0 < 1.0

    assert high.assignment.choices == (HIGH,) * 6
    assert abs(high.metrics.emissions_g - 1.7222) <= GOLDEN_TOL_G
    assert low.assignment.choices == (LOW,) * 6
    assert abs(low.metrics.emissions_g - 0.6068) <= GOLDEN_TOL_G
    assert mid.assignment.choices == (HIGH, MEDIUM, HIGH, LOW, MEDIUM, LOW)
    assert abs(mid.metrics.emissions_g - 1.0675) <= GOLDEN_TOL_G
    assert abs(mid.metrics.avg_error_pct - 4.98) <= ERROR_TOL_PCT

    reps = compare_policies(
        paper_horizon, {"low": low.assignment, "mid": mid.assignment, "high": high.assignment},
        paper_catalog, params, "high",
    )
    red = {r.name: r.reduction_pct for r in reps}
    assert round(red["low"], 1) == 64.8 and round(red["mid"], 1) == 38.0
    # published figures come from grams rounded to two decimals
    assert abs(red["low"] - 65.1) <= REDUCTION_TOL_PP
    assert abs(red["mid"] - 37.8) <= REDUCTION_TOL_PP


@pytest.mark.criterion(2, "solver equals exhaustive enumeration on 500 random instances")
def test_criterion_2_oracle_equivalence():
    t0 = time.perf_counter()
    for h, cat, eps in _instances(500, seed=20230115):
        a = solve(h, cat, eps)
        b = brute_force_solve(h, cat, eps)
        assert a.status == b.status
        if a.optimal:
            assert a.objective == b.objective
            assert a.assignment.choices == b.assignment.choices
    assert time.perf_counter() - t0 < 60


@pytest.mark.criterion(3, "error budget holds exactly; infeasible iff min error exceeds epsilon")
def test_criterion_3_feasibility():
    seen_infeasible = 0
    for h, cat, eps in _instances(500, seed=20230115):
        res = solve(h, cat, eps)
        expect_infeasible = h.total_requests > 0 and cat.min_error_dpct > eps
        assert (res.status == "infeasible") == expect_infeasible
        seen_infeasible += expect_infeasible
        if res.optimal:
            assert res.metrics.weighted_error_dpct <= error_budget_dpct(h, eps)
    assert seen_infeasible > 0


@pytest.mark.criterion(4, "optimal emissions nonincreasing in epsilon, error within epsilon")
def test_criterion_4_monotonicity():
    rng = np.random.default_rng(4)
    for _ in range(100):
        h, cat, _ = random_instance(rng, max_t=8, max_s=4)
        prev = None
        for pct in range(16):
            res = solve(h, cat, 10 * pct)
            if not res.optimal:
                assert prev is None
                continue
            assert res.metrics.avg_error_pct <= pct + 1e-12
            if prev is not None:
                assert res.metrics.scaled_emission <= prev
            prev = res.metrics.scaled_emission


@pytest.mark.criterion(5, "12-day x 3-profile experiment behaviour")
def test_criterion_5_experiment():
    t0 = time.perf_counter()
    cfg = ExperimentConfig.load(SAMPLES / "experiment.json")
    assert len(cfg.days) == 12 and len(cfg.profiles) == 3
    assert [e / 10 for e in cfg.epsilons_dpct] == [1, 2, 4, 8]
    result = run_experiment(cfg)

    cells = defaultdict(dict)
    for c in result.cells:
        if c.policy.startswith("carbonstat"):
            assert c.status == "ok"
            cells[(c.day, c.profile)][c.epsilon_pct] = c
    assert len(cells) == 36
    for key, by_eps in cells.items():
        prev = None
        for eps in sorted(by_eps):
            c = by_eps[eps]
            assert c.forecast_report.totals.weighted_avg_error_pct <= eps + 1e-12  # (a)
            assert c.report.totals.weighted_avg_error_pct <= eps + PERTURBED_SLACK_PP  # (b)
            assert c.report.reduction_pct > 0  # (c)
            if prev is not None:
                assert c.forecast_report.reduction_pct >= prev - 1e-9  # (c)
            prev = c.forecast_report.reduction_pct

    out_of_band = [
        (r["profile"], r["policy"], round(r["mean_reduction_pct"], 2))
        for r in result.summary
        if r["policy"].startswith("carbonstat") and not BAND[0] <= r["mean_reduction_pct"] <= BAND[1]
    ]
    if out_of_band:  # (d) flagged for investigation, not a failure
        warnings.warn(f"aggregate reductions outside {BAND}: {out_of_band}")
    assert time.perf_counter() - t0 < 300


@pytest.mark.criterion(6, "emission unit check")
def test_criterion_6_units():
    h = Horizon.from_lists([1], [260])
    cat = StrategyCatalog.from_values([("HIGH_POWER", 1002, 0)])
    m = compute_metrics(h, cat, Assignment((0,)), EmissionParams(50))
    assert abs(m.emissions_g - 3.618e-4) <= 1e-7
    # 0.1002 s x 50 W = 5.01 J; / 3.6e6 J/kWh x 260 g/kWh
    assert m.emissions_g == pytest.approx(5.01 / 3.6e6 * 260, rel=1e-12)


@pytest.mark.criterion(7, "service conformance")
def test_criterion_7_service(tmp_path):
    rng = np.random.default_rng(7)
    for _ in range(1000):
        data = rng.integers(-5000, 5000, int(rng.integers(1, 300))).tolist()
        assert approx_average(data, 1) == int(np.rint(np.mean(data)))
    assert approx_average(list(range(1, 9)), 4) == 3
    assert approx_average(list(range(1, 9)), 1) == 4
    assert strategy_error_pct(list(range(1, 9)), 4) == 25.0

    keys = [h + 0.5 * k for h in range(24) for k in (0, 1)]
    sched = tmp_path / "s.json"
    sched.write_text(json.dumps({"slot_duration_minutes": 30, "assignment": {f"{k:g}": "LOW_POWER" if k == 14.5 else "HIGH_POWER" for k in keys}}))
    clock = {"now": datetime(2024, 3, 1, 14, 37)}
    client = TestClient(create_app(list(range(1, 9)), sched, clock=lambda: clock["now"]))
    r = client.get("/avg")
    assert r.status_code == 200 and r.json() == {"value": 3}
    clock["now"] = datetime(2024, 3, 1, 14, 29)
    assert client.get("/avg").json() == {"value": 4}
    clock["now"] = datetime(2024, 3, 1, 14, 37)
    assert client.get("/avg", params={"force": "HIGH_POWER"}).json() == {"value": 4}
    assert client.get("/avg", params={"force": "LOW_POWER"}).json() == {"value": 3}
    assert client.get("/avg", params={"force": "NOPE"}).status_code == 400


@pytest.mark.criterion(8, "deterministic CLI output and solve/simulate/service round trips")
def test_criterion_8_determinism(samples, tmp_path, capsys):
    io_args = ["--carbon", str(samples / "six_slot_carbon.csv"), "--requests", str(samples / "six_slot_requests.csv")]
    runs = []
    for n in range(2):
        d = tmp_path / f"run{n}"
        d.mkdir()
        cfg = json.loads((samples / "experiment.json").read_text())
        cfg["days"] = cfg["days"][:3]
        (d / "exp.json").write_text(json.dumps(cfg))
        outputs = {}
        for name, argv in [
            ("solve", ["solve", *io_args, "--epsilon", "5", "--out", str(d / "sched.json"), "--format", "json"]),
            ("simulate", ["simulate", *io_args, "--schedule", str(d / "sched.json"), "--out", str(d / "slots.csv")]),
            ("compare", ["compare", *io_args, "--schedule", f"eps5={d / 'sched.json'}", "--format", "csv"]),
            ("gen", ["gen-profile", "--kind", "peaky", "--base", "200", "--peak", "1000", "--seed", "3", "--perturb", "5", "--out", str(d / "reqs.csv")]),
            ("fetch", ["fetch-carbon", "--date", "2023-05-15", "--cache-dir", str(d / "cache"), "--out", str(d / "carbon.csv")]),
            ("experiment", ["experiment", "--config", str(d / "exp.json"), "--out", str(d / "exp")]),
        ]:
            assert main(argv) == 0, name
            outputs[name] = capsys.readouterr().out
        files = {p.relative_to(d): p.read_bytes() for p in sorted(d.rglob("*")) if p.is_file() and p.name != "exp.json"}
        runs.append((outputs, files))
    assert runs[0][0] == runs[1][0]
    assert runs[0][1] == runs[1][1]
    assert len(runs[0][1]) >= 8

    sched_path = tmp_path / "run0" / "sched.json"
    schedule = load_schedule(sched_path, STRATEGIES)
    assert schedule.ordered_names() == ["HIGH_POWER", "MEDIUM_POWER", "HIGH_POWER", "LOW_POWER", "MEDIUM_POWER", "LOW_POWER"]
    client = TestClient(create_app(list(range(1, 9)), sched_path, clock=lambda: datetime(2024, 1, 1, 1, 45)))
    assert client.get("/avg").json() == {"value": 3}  # slot 1.5 -> LOW_POWER
    sim = json.loads(_run_json(capsys, ["simulate", *io_args, "--schedule", str(sched_path), "--format", "json"]))
    assert abs(sim[0]["emissions_g"] - 1.0675) <= GOLDEN_TOL_G
    assert abs(sim[0]["weighted_avg_error_pct"] - 4.98) <= ERROR_TOL_PCT


def _run_json(capsys, argv):
    assert main(argv) == 0
    return capsys.readouterr().out
