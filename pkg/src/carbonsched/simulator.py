"""Replay assignments against actual demand and carbon intensity."""
from __future__ import annotations

import csv
import io
import json
import logging
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from datetime import date as Date
from pathlib import Path
from typing import Sequence

import numpy as np

from .model import (
    Assignment,
    EmissionParams,
    Horizon,
    StrategyCatalog,
    ValidationError,
    average_error_pct,
    ensure_valid,
    grams,
    to_fixed,
)
from .optimizer import solve
from .policies import NaiveThresholds, always_policy, naive_policy
from .workload import (
    CarbonSeries,
    RequestProfileSpec,
    default_catalog,
    fetch_carbon_day,
    generate_profile,
    load_carbon_file,
    perturb_series,
    read_strategies_csv,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SlotOutcome:
    slot: int
    strategy_id: int
    actual_requests: int
    actual_intensity: int
    emissions_g: float
    error_contribution_dpct: float


@dataclass(frozen=True)
class Totals:
    emissions_g: float
    weighted_avg_error_pct: float
    per_slot_mean_error_pct: float
    scaled_emission: int = 0


@dataclass
class SimulationReport:
    per_slot: list[SlotOutcome]
    totals: Totals
    name: str = ""
    baseline_emissions_g: float | None = None
    reduction_pct: float | None = None

    def with_baseline(self, baseline_g: float) -> "SimulationReport":
        reduction = 0.0 if baseline_g == 0 else 100 * (1 - self.totals.emissions_g / baseline_g)
        return SimulationReport(self.per_slot, self.totals, self.name, baseline_g, reduction)


def simulate_day(
    actual_horizon: Horizon,
    assignment: Assignment,
    catalog: StrategyCatalog,
    params: EmissionParams = EmissionParams(),
    *,
    stochastic: bool = False,
    seed: int = 0,
    name: str = "",
) -> SimulationReport:
    """Analytical replay of one horizon.

    With ``stochastic`` each request's error is drawn uniformly from
    ``[0, 2 e_j]``; emissions are always the analytical mean.
    """
    ensure_valid(actual_horizon, catalog, assignment)
    rng = np.random.Generator(np.random.PCG64(seed)) if stochastic else None
    per_slot = []
    scaled_total = 0
    weighted = 0.0
    slot_errors = []
    for slot, j in zip(actual_horizon.slots, assignment.choices):
        strategy = catalog[j]
        scaled = slot.carbon_intensity_g_per_kwh * slot.requests * strategy.mean_service_time_dms
        if rng is None:
            err = slot.requests * strategy.mean_error_dpct
        else:
            err = float(rng.uniform(0, 2 * strategy.mean_error_dpct, slot.requests).sum())
        scaled_total += scaled
        weighted += err
        if slot.requests:
            slot_errors.append(err / slot.requests / 10)
        per_slot.append(
            SlotOutcome(slot.index, j, slot.requests, slot.carbon_intensity_g_per_kwh, grams(scaled, params), err)
        )
    total_requests = actual_horizon.total_requests
    totals = Totals(
        emissions_g=grams(scaled_total, params),
        weighted_avg_error_pct=average_error_pct(weighted, total_requests),
        per_slot_mean_error_pct=float(np.mean(slot_errors)) if slot_errors else 0.0,
        scaled_emission=scaled_total,
    )
    return SimulationReport(per_slot, totals, name)


def simulate_day_live(
    actual_horizon: Horizon,
    assignment: Assignment,
    catalog: StrategyCatalog,
    dataset: Sequence[int],
    params: EmissionParams = EmissionParams(),
    *,
    max_calls_per_slot: int | None = None,
    clock=time.perf_counter,
    name: str = "",
) -> SimulationReport:
    """Replay by actually running the service strategies.

    Catalog entries must be named after service strategies. Each slot runs
    the strategy ``actual_requests`` times (or ``max_calls_per_slot`` times,
    scaling the measured time up to the full count); emissions use the
    measured time and errors the measured distance to the exact average.
    """
    from .service.strategies import get_strategy, strategy_error_pct

    ensure_valid(actual_horizon, catalog, assignment)
    data = list(dataset)
    errors = {s.name: strategy_error_pct(data, get_strategy(s.name).step) for s in catalog}
    per_slot = []
    total_g = 0.0
    weighted = 0.0
    slot_errors = []
    for slot, j in zip(actual_horizon.slots, assignment.choices):
        strategy = get_strategy(catalog[j].name)
        calls = slot.requests if max_calls_per_slot is None else min(slot.requests, max_calls_per_slot)
        elapsed = 0.0
        for _ in range(calls):
            t0 = clock()
            strategy.avg(data)
            elapsed += clock() - t0
        if calls:
            elapsed *= slot.requests / calls
        g = elapsed * params.server_power_watts / 3.6e6 * slot.carbon_intensity_g_per_kwh
        err = slot.requests * errors[strategy.name] * 10
        total_g += g
        weighted += err
        if slot.requests:
            slot_errors.append(errors[strategy.name])
        per_slot.append(SlotOutcome(slot.index, j, slot.requests, slot.carbon_intensity_g_per_kwh, g, err))
    totals = Totals(
        emissions_g=total_g,
        weighted_avg_error_pct=average_error_pct(weighted, actual_horizon.total_requests),
        per_slot_mean_error_pct=float(np.mean(slot_errors)) if slot_errors else 0.0,
    )
    return SimulationReport(per_slot, totals, name)


def compare_policies(
    actual_horizon: Horizon,
    assignments: Sequence[tuple[str, Assignment]] | dict[str, Assignment],
    catalog: StrategyCatalog,
    params: EmissionParams = EmissionParams(),
    baseline_name: str = "always-high",
) -> list[SimulationReport]:
    named = list(assignments.items()) if isinstance(assignments, dict) else list(assignments)
    names = [n for n, _ in named]
    if baseline_name not in names:
        raise ValidationError(f"baseline {baseline_name!r} not among {names}")
    reports = [simulate_day(actual_horizon, a, catalog, params, name=n) for n, a in named]
    baseline = reports[names.index(baseline_name)].totals.emissions_g
    return [r.with_baseline(baseline) for r in reports]


# -- experiments -----------------------------------------------------------

SUMMARY_COLUMNS = ["profile", "policy", "mean_error_weighted_pct", "mean_error_slotwise_pct", "mean_reduction_pct"]
DETAIL_COLUMNS = [
    "day",
    "profile",
    "policy",
    "status",
    "epsilon_pct",
    "emissions_g",
    "baseline_emissions_g",
    "weighted_error_pct",
    "slotwise_error_pct",
    "reduction_pct",
    "forecast_weighted_error_pct",
    "forecast_reduction_pct",
]
BASELINE = "always-high"


@dataclass(frozen=True)
class ProfileConfig:
    name: str
    spec: RequestProfileSpec


@dataclass(frozen=True)
class ExperimentConfig:
    days: tuple[str, ...]
    profiles: tuple[ProfileConfig, ...]
    policies: tuple[str, ...] = ("always-low", "always-medium", "naive", "carbonstat")
    epsilons_dpct: tuple[int, ...] = (10, 20, 40, 80)
    power_watts: float = 50.0
    thresholds: NaiveThresholds = NaiveThresholds()
    seed: int = 0
    perturbation_pct: float = 5.0
    slots: int = 48
    strategies_path: str | None = None
    output_dir: str | None = None
    workers: int = 1
    base_dir: str = "."

    @classmethod
    def from_dict(cls, doc: dict, base_dir: str | Path = ".") -> "ExperimentConfig":
        try:
            profiles = tuple(
                ProfileConfig(
                    p.get("name", p["kind"]),
                    RequestProfileSpec(
                        kind=p["kind"],
                        base_level=int(p["base_level"]),
                        peak_level=p.get("peak_level"),
                        peak_slots=tuple(p.get("peak_slots", (16, 36))),
                        peak_width_slots=int(p.get("peak_width_slots", 4)),
                        noise_pct=float(p.get("noise_pct", 10.0)),
                    ),
                )
                for p in doc["profiles"]
            )
            th = doc.get("thresholds", {})
            thresholds = NaiveThresholds(
                int(th.get("low_max_g_per_kwh", 150)),
                int(th.get("moderate_max_g_per_kwh", 250)),
                th.get("max_expected_requests"),
            )
            cfg = cls(
                days=tuple(str(d) for d in doc["days"]),
                profiles=profiles,
                policies=tuple(doc.get("policies", cls.policies)),
                epsilons_dpct=tuple(to_fixed(e, "epsilon") for e in doc.get("epsilons", (1, 2, 4, 8))),
                power_watts=float(doc.get("power_watts", 50.0)),
                thresholds=thresholds,
                seed=int(doc.get("seed", 0)),
                perturbation_pct=float(doc.get("perturbation_pct", 5.0)),
                slots=int(doc.get("slots", 48)),
                strategies_path=doc.get("strategies"),
                output_dir=doc.get("output_dir"),
                workers=int(doc.get("workers", 1)),
                base_dir=str(base_dir),
            )
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"bad experiment config: {exc!r}") from exc
        if not cfg.days or not cfg.profiles:
            raise ValidationError("experiment needs at least one day and one profile")
        known = {"always-low", "always-medium", "always-high", "naive", "carbonstat"}
        unknown = [p for p in cfg.policies if p not in known]
        if unknown:
            raise ValidationError(f"unknown policies {unknown}; known: {sorted(known)}")
        return cfg

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        path = Path(path)
        return cls.from_dict(json.loads(path.read_text()), path.parent)

    def catalog(self) -> StrategyCatalog:
        if self.strategies_path is None:
            return default_catalog()
        return read_strategies_csv(self._resolve(self.strategies_path).read_text())

    def _resolve(self, p: str) -> Path:
        path = Path(p)
        return path if path.is_absolute() else Path(self.base_dir) / path

    def load_day(self, day: str) -> CarbonSeries:
        try:
            return fetch_carbon_day(Date.fromisoformat(day))
        except ValueError:
            pass
        path = self._resolve(day)
        if not path.is_file():
            raise FileNotFoundError(f"carbon fixture {day!r} not found")
        return load_carbon_file(path)


@dataclass
class Cell:
    day: str
    profile: str
    policy: str
    status: str
    epsilon_pct: float | None = None
    report: SimulationReport | None = None
    forecast_report: SimulationReport | None = None


@dataclass
class ExperimentResult:
    cells: list[Cell]
    summary: list[dict] = field(default_factory=list)

    def detail_rows(self) -> list[dict]:
        rows = []
        for c in self.cells:
            row = {"day": c.day, "profile": c.profile, "policy": c.policy, "status": c.status}
            row["epsilon_pct"] = "" if c.epsilon_pct is None else f"{c.epsilon_pct:g}"
            if c.report is not None:
                row.update(
                    emissions_g=_fmt(c.report.totals.emissions_g),
                    baseline_emissions_g=_fmt(c.report.baseline_emissions_g),
                    weighted_error_pct=_fmt(c.report.totals.weighted_avg_error_pct),
                    slotwise_error_pct=_fmt(c.report.totals.per_slot_mean_error_pct),
                    reduction_pct=_fmt(c.report.reduction_pct),
                    forecast_weighted_error_pct=_fmt(c.forecast_report.totals.weighted_avg_error_pct),
                    forecast_reduction_pct=_fmt(c.forecast_report.reduction_pct),
                )
            rows.append({k: row.get(k, "") for k in DETAIL_COLUMNS})
        return rows


def _fmt(x: float | None) -> str:
    return "" if x is None else f"{x:.6f}"


def policy_labels(cfg: ExperimentConfig) -> list[tuple[str, int | None]]:
    labels = []
    for p in cfg.policies:
        if p == "carbonstat":
            labels.extend((f"carbonstat(eps={e / 10:g})", e) for e in cfg.epsilons_dpct)
        else:
            labels.append((p, None))
    return labels


def day_seeds(seed: int, day: str, profile_index: int) -> tuple[int, int]:
    """Seeds for (profile generation, perturbation) of one day/profile cell."""
    state = np.random.SeedSequence([seed, zlib.crc32(day.encode()), profile_index]).generate_state(2, dtype=np.uint64)
    return int(state[0]), int(state[1])


def _role_ids(catalog: StrategyCatalog) -> dict[str, int]:
    order = sorted(range(len(catalog)), key=lambda j: (catalog[j].mean_service_time_dms, j))
    roles = {"always-low": order[0], "always-high": order[-1]}
    if len(catalog) == 3:
        roles["always-medium"] = order[1]
    return roles


def run_day(cfg: ExperimentConfig, day: str) -> list[Cell]:
    """All (profile, policy) cells of one day."""
    catalog = cfg.catalog()
    params = EmissionParams(cfg.power_watts)
    carbon = cfg.load_day(day)
    if len(carbon) < cfg.slots:
        raise ValidationError(f"day {day}: {len(carbon)} carbon slots, {cfg.slots} needed")
    forecast_c = carbon.forecast[: cfg.slots]
    actual_c = carbon.actual[: cfg.slots]
    roles = _role_ids(catalog)
    cells = []
    for p_idx, profile in enumerate(cfg.profiles):
        gen_seed, pert_seed = day_seeds(cfg.seed, day, p_idx)
        spec = replace(profile.spec, seed=gen_seed)
        forecast_r = generate_profile(spec, cfg.slots)
        actual_r = perturb_series(forecast_r, cfg.perturbation_pct, pert_seed)
        fh = Horizon.from_lists(forecast_r, forecast_c, carbon.slot_duration_minutes)
        ah = Horizon.from_lists(actual_r, actual_c, carbon.slot_duration_minutes)

        named: list[tuple[str, Assignment, float | None]] = []
        failed: list[Cell] = []
        for label, eps in policy_labels(cfg):
            if label == "naive":
                named.append((label, naive_policy(fh, catalog, cfg.thresholds), None))
            elif eps is not None:
                result = solve(fh, catalog, eps, params)
                if result.optimal:
                    named.append((label, result.assignment, eps / 10))
                else:
                    failed.append(Cell(day, profile.name, label, "infeasible", eps / 10))
            else:
                if label not in roles:
                    raise ValidationError(f"policy {label} needs a 3-strategy catalog")
                named.append((label, always_policy(fh, roles[label], catalog), None))
        if BASELINE not in [n for n, _, _ in named]:
            named.append((BASELINE, always_policy(fh, roles[BASELINE], catalog), None))

        pairs = [(n, a) for n, a, _ in named]
        actual_reports = compare_policies(ah, pairs, catalog, params, BASELINE)
        forecast_reports = compare_policies(fh, pairs, catalog, params, BASELINE)
        for (label, _, eps), rep, frep in zip(named, actual_reports, forecast_reports):
            cells.append(Cell(day, profile.name, label, "ok", eps, rep, frep))
        cells.extend(failed)
    return cells


def summarize(cfg: ExperimentConfig, cells: list[Cell]) -> list[dict]:
    rows = []
    labels = [label for label, _ in policy_labels(cfg)]
    if BASELINE not in labels:
        labels.append(BASELINE)
    for profile in cfg.profiles:
        for label in labels:
            ok = [c for c in cells if c.profile == profile.name and c.policy == label and c.report is not None]
            if not ok:
                continue
            rows.append(
                {
                    "profile": profile.name,
                    "policy": label,
                    "mean_error_weighted_pct": float(np.mean([c.report.totals.weighted_avg_error_pct for c in ok])),
                    "mean_error_slotwise_pct": float(np.mean([c.report.totals.per_slot_mean_error_pct for c in ok])),
                    "mean_reduction_pct": float(np.mean([c.report.reduction_pct for c in ok])),
                }
            )
    return rows


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    if cfg.workers > 1:
        with ProcessPoolExecutor(cfg.workers) as pool:
            per_day = list(pool.map(run_day, [cfg] * len(cfg.days), cfg.days))
    else:
        per_day = [run_day(cfg, d) for d in cfg.days]
    cells = [c for day_cells in per_day for c in day_cells]
    return ExperimentResult(cells, summarize(cfg, cells))


def summary_csv(result: ExperimentResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_COLUMNS)
    for row in result.summary:
        w.writerow([row["profile"], row["policy"]] + [f"{row[k]:.6f}" for k in SUMMARY_COLUMNS[2:]])
    return buf.getvalue()


def detail_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, DETAIL_COLUMNS, lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    return buf.getvalue()


def summary_table(result: ExperimentResult) -> str:
    lines = [f"{'profile':<14} {'policy':<20} {'error% (wtd)':>12} {'error% (slot)':>13} {'reduction%':>11}"]
    for row in result.summary:
        lines.append(
            f"{row['profile']:<14} {row['policy']:<20} {row['mean_error_weighted_pct']:>12.2f} "
            f"{row['mean_error_slotwise_pct']:>13.2f} {row['mean_reduction_pct']:>11.2f}"
        )
    return "\n".join(lines) + "\n"


def write_experiment(result: ExperimentResult, out_dir: str | Path) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = [out / "summary.csv", out / "detail.csv"]
    written[0].write_text(summary_csv(result))
    rows = result.detail_rows()
    written[1].write_text(detail_csv(rows))
    for day in dict.fromkeys(r["day"] for r in rows):
        safe = "".join(ch if ch.isalnum() or ch in "-_" else "_" for ch in Path(day).stem)
        path = out / f"day_{safe}.csv"
        path.write_text(detail_csv([r for r in rows if r["day"] == day]))
        written.append(path)
    (out / "summary.txt").write_text(summary_table(result))
    written.append(out / "summary.txt")
    return written
