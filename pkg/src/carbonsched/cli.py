"""Command-line entry point: ``carbonsched <command> ...``.

Exit codes: 0 success, 1 operational or usage error, 2 infeasible model.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from dataclasses import replace
from datetime import date as Date
from pathlib import Path

from . import __version__
from .model import EmissionParams, Horizon, ValidationError, from_fixed, to_fixed
from .optimizer import InstanceTooLarge, solve
from .policies import NaiveThresholds, always_policy, naive_policy
from .service.schedule import ScheduleError, load_schedule, schedule_from_assignment
from .simulator import (
    ExperimentConfig,
    compare_policies,
    run_experiment,
    simulate_day,
    simulate_day_live,
    summary_csv,
    summary_table,
    write_experiment,
)
from .workload import (
    CarbonDataError,
    FetchError,
    NetworkDisabled,
    RequestProfileSpec,
    RequestSeries,
    default_catalog,
    fetch_carbon_day,
    generate_profile,
    load_carbon_file,
    perturb_series,
    read_requests_csv,
    read_strategies_csv,
    write_carbon_csv,
    write_requests_csv,
    write_strategies_csv,
)

log = logging.getLogger("carbonsched")

EXIT_OK, EXIT_ERROR, EXIT_INFEASIBLE = 0, 1, 2


class UsageError(Exception):
    pass


class Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


# -- rendering -------------------------------------------------------------


def _cell(v) -> str:
    if isinstance(v, float):
        return f"{v:.6f}"
    if v is None:
        return ""
    if isinstance(v, (list, tuple)):
        return " ".join(map(str, v))
    return str(v)


def render(rows: list[dict], fmt: str, extra: dict | None = None) -> str:
    if fmt == "json":
        payload = {"rows": rows, **(extra or {})} if extra is not None else rows
        return json.dumps(payload, indent=2) + "\n"
    if not rows:
        return ""
    columns = list(rows[0])
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(columns)
        w.writerows([_cell(r[c]) for c in columns] for r in rows)
        return buf.getvalue()
    cells = [[_cell(r[c]) for c in columns] for r in rows]
    widths = [max(len(c), *(len(row[k]) for row in cells)) for k, c in enumerate(columns)]
    lines = ["  ".join(c.ljust(w) for c, w in zip(columns, widths)).rstrip()]
    lines += ["  ".join(v.ljust(w) for v, w in zip(row, widths)).rstrip() for row in cells]
    return "\n".join(lines) + "\n"


# -- input helpers ---------------------------------------------------------


def _catalog(path):
    return read_strategies_csv(Path(path).read_text()) if path else default_catalog()


def _horizon(args, use_actuals: bool) -> Horizon:
    carbon = load_carbon_file(Path(args.carbon))
    requests = read_requests_csv(Path(args.requests).read_text())
    if len(carbon) != len(requests):
        raise ValidationError(f"carbon has {len(carbon)} slots but requests have {len(requests)}")
    c = carbon.actual if use_actuals else carbon.forecast
    r = requests.actual_or_forecast if use_actuals else requests.forecast
    return Horizon.from_lists(list(r), c, carbon.slot_duration_minutes)


def _epsilon(text: str) -> int:
    eps = to_fixed(text, "epsilon")
    if eps < 0:
        raise ValidationError("epsilon must be >= 0")
    return eps


def _write(path, text: str) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(text)


def _report_row(rep) -> dict:
    row = {
        "policy": rep.name,
        "emissions_g": rep.totals.emissions_g,
        "weighted_avg_error_pct": rep.totals.weighted_avg_error_pct,
        "per_slot_mean_error_pct": rep.totals.per_slot_mean_error_pct,
    }
    if rep.reduction_pct is not None:
        row["baseline_emissions_g"] = rep.baseline_emissions_g
        row["reduction_pct"] = rep.reduction_pct
    return row


# -- commands --------------------------------------------------------------


def cmd_solve(args) -> int:
    catalog = _catalog(args.strategies)
    horizon = _horizon(args, use_actuals=False)
    eps = _epsilon(args.epsilon)
    result = solve(horizon, catalog, eps, EmissionParams(args.power))
    if not result.optimal:
        print(
            f"infeasible: epsilon {from_fixed(eps)}% is below the minimal feasible epsilon "
            f"{from_fixed(result.min_feasible_epsilon_dpct)}%",
            file=sys.stderr,
        )
        return EXIT_INFEASIBLE
    m = result.metrics
    names = [catalog[j].name for j in result.assignment.choices]
    if args.out:
        schedule = schedule_from_assignment(result.assignment, catalog, horizon.slot_duration_minutes)
        meta = {
            "epsilon_pct": eps / 10,
            "power_watts": args.power,
            "emissions_g": round(m.emissions_g, 9),
            "avg_error_pct": round(m.avg_error_pct, 9),
            "choices": list(result.assignment.choices),
        }
        _write(args.out, schedule.to_json(meta))
    row = {
        "status": result.status,
        "emissions_g": m.emissions_g,
        "avg_error_pct": m.avg_error_pct,
        "weighted_error_dpct": m.weighted_error_dpct,
        "assignment": names,
    }
    sys.stdout.write(render([row], args.format))
    return EXIT_OK


def _schedule_assignment(path, catalog, horizon):
    schedule = load_schedule(path, catalog.names)
    assignment = schedule.to_assignment(catalog)
    if len(assignment) != len(horizon):
        raise ValidationError(f"schedule {path} has {len(assignment)} slots, horizon has {len(horizon)}")
    return assignment


def cmd_simulate(args) -> int:
    catalog = _catalog(args.strategies)
    horizon = _horizon(args, use_actuals=not args.forecast)
    assignment = _schedule_assignment(args.schedule, catalog, horizon)
    params = EmissionParams(args.power)
    if args.live:
        if not args.dataset:
            raise ValidationError("--live requires --dataset")
        from .service.app import load_dataset

        report = simulate_day_live(
            horizon, assignment, catalog, load_dataset(args.dataset), params,
            max_calls_per_slot=args.max_calls, name="schedule",
        )
    else:
        report = simulate_day(
            horizon, assignment, catalog, params, stochastic=args.stochastic, seed=args.seed, name="schedule"
        )
    if args.out:
        rows = [s.__dict__ for s in report.per_slot]
        _write(args.out, render(rows, "csv"))
    sys.stdout.write(render([_report_row(report)], args.format))
    return EXIT_OK


def cmd_compare(args) -> int:
    catalog = _catalog(args.strategies)
    forecast = _horizon(args, use_actuals=False)
    actual = forecast if args.forecast else _horizon(args, use_actuals=True)
    order = sorted(range(len(catalog)), key=lambda j: (catalog[j].mean_service_time_dms, j))
    roles = {"always-low": order[0], "always-high": order[-1]}
    if len(catalog) == 3:
        roles["always-medium"] = order[1]
    thresholds = NaiveThresholds(args.low_max, args.moderate_max, args.max_expected)
    named = []
    for policy in [p for p in args.policies.split(",") if p]:
        if policy == "naive":
            named.append((policy, naive_policy(forecast, catalog, thresholds)))
        elif policy in roles:
            named.append((policy, always_policy(forecast, roles[policy], catalog)))
        else:
            raise ValidationError(f"unknown policy {policy!r}")
    for spec in args.schedule or []:
        name, sep, path = spec.partition("=")
        if not sep:
            name, path = Path(spec).stem, spec
        named.append((name, _schedule_assignment(path, catalog, forecast)))
    if args.baseline not in [n for n, _ in named] and args.baseline in roles:
        named.append((args.baseline, always_policy(forecast, roles[args.baseline], catalog)))
    reports = compare_policies(actual, named, catalog, EmissionParams(args.power), args.baseline)
    sys.stdout.write(render([_report_row(r) for r in reports], args.format))
    return EXIT_OK


def cmd_experiment(args) -> int:
    cfg = ExperimentConfig.load(args.config)
    if args.workers is not None:
        cfg = replace(cfg, workers=args.workers)
    result = run_experiment(cfg)
    out = args.out or cfg.output_dir
    if out:
        out_path = Path(out)
        if not out_path.is_absolute() and not args.out:
            out_path = Path(cfg.base_dir) / out_path
        write_experiment(result, out_path)
    if args.format == "table":
        sys.stdout.write(summary_table(result))
    elif args.format == "csv":
        sys.stdout.write(summary_csv(result))
    else:
        sys.stdout.write(render(result.summary, "json"))
    return EXIT_OK


def cmd_gen_profile(args) -> int:
    spec = RequestProfileSpec(
        kind=args.kind,
        base_level=args.base,
        peak_level=args.peak,
        peak_slots=tuple(args.peak_slots),
        peak_width_slots=args.peak_width,
        noise_pct=args.noise,
        seed=args.seed,
    )
    forecast = generate_profile(spec, args.slots)
    actual = None
    if args.perturb is not None:
        actual = perturb_series(forecast, args.perturb, args.perturb_seed)
    text = write_requests_csv(RequestSeries(tuple(forecast), tuple(actual) if actual is not None else None))
    if args.out:
        _write(args.out, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_fetch_carbon(args) -> int:
    day = Date.fromisoformat(args.date)
    series = fetch_carbon_day(day, online=args.online, cache_dir=Path(args.cache_dir) if args.cache_dir else None)
    text = write_carbon_csv(series)
    if args.out:
        _write(args.out, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_bench(args) -> int:
    from .service.app import load_dataset
    from .service.strategies import benchmark_catalog, benchmark_strategies

    if args.dataset:
        data = load_dataset(args.dataset)
    else:
        import numpy as np

        data = np.random.Generator(np.random.PCG64(args.seed)).integers(0, 1000, args.size).tolist()
    results = benchmark_strategies(data, args.trials)
    if args.out:
        _write(args.out, write_strategies_csv(benchmark_catalog(results)))
    rows = [{"strategy": name, **values} for name, values in results.items()]
    sys.stdout.write(render(rows, args.format))
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    from .service.app import create_app, load_dataset

    app = create_app(load_dataset(args.dataset), args.schedule, reload_interval=args.reload_interval)
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return EXIT_OK


# -- parser ----------------------------------------------------------------


def build_parser() -> Parser:
    parser = Parser(prog="carbonsched", description="Carbon-aware strategy scheduling toolkit.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=Parser)

    def fmt(p, default="table"):
        p.add_argument("--format", choices=("json", "csv", "table"), default=default)

    def inputs(p):
        p.add_argument("--carbon", required=True, help="carbon CSV or intensity API JSON")
        p.add_argument("--requests", required=True, help="requests CSV")
        p.add_argument("--strategies", help="strategies CSV (default: bundled demo strategies)")
        p.add_argument("--power", type=float, default=50.0, help="server power in watts")

    p = sub.add_parser("solve", help="compute the optimal assignment for a tolerated error")
    inputs(p)
    p.add_argument("--epsilon", required=True, help="tolerated average error in percent, e.g. 4.5")
    p.add_argument("--out", help="schedule JSON to write")
    fmt(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("simulate", help="replay a schedule on actual demand and intensity")
    inputs(p)
    p.add_argument("--schedule", required=True)
    p.add_argument("--forecast", action="store_true", help="evaluate on forecast values instead of actuals")
    p.add_argument("--stochastic", action="store_true", help="sample per-request errors")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--live", action="store_true", help="run the service strategies instead of the analytical model")
    p.add_argument("--dataset", help="integer dataset for --live")
    p.add_argument("--max-calls", type=int, default=None, help="cap on timed calls per slot in --live mode")
    p.add_argument("--out", help="per-slot CSV to write")
    fmt(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("compare", help="compare policies and schedules against a baseline")
    inputs(p)
    p.add_argument("--policies", default="always-low,always-medium,always-high,naive")
    p.add_argument("--schedule", action="append", help="NAME=PATH of a schedule to include (repeatable)")
    p.add_argument("--baseline", default="always-high")
    p.add_argument("--low-max", type=int, default=150, help="naive: low intensity bound (g/kWh)")
    p.add_argument("--moderate-max", type=int, default=250, help="naive: moderate intensity bound (g/kWh)")
    p.add_argument("--max-expected", type=int, default=None, help="naive: maximum expected requests")
    p.add_argument("--forecast", action="store_true")
    fmt(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("experiment", help="run a multi-day experiment from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="output directory (overrides the config)")
    p.add_argument("--workers", type=int, default=None)
    fmt(p)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("gen-profile", help="generate a request profile CSV")
    p.add_argument("--kind", choices=("peaky", "stable"), required=True)
    p.add_argument("--base", type=int, required=True)
    p.add_argument("--peak", type=int, default=None)
    p.add_argument("--peak-slots", type=int, nargs="+", default=[16, 36])
    p.add_argument("--peak-width", type=int, default=4)
    p.add_argument("--noise", type=float, default=10.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--slots", type=int, default=48)
    p.add_argument("--perturb", type=float, default=None, help="also write actuals perturbed by this percent")
    p.add_argument("--perturb-seed", type=int, default=1)
    p.add_argument("--out")
    p.set_defaults(func=cmd_gen_profile)

    p = sub.add_parser("fetch-carbon", help="load (or fetch with --online) a day of carbon intensity")
    p.add_argument("--date", required=True)
    p.add_argument("--online", action="store_true")
    p.add_argument("--cache-dir", help="cache directory (default $CARBONSCHED_DATA_DIR)")
    p.add_argument("--out")
    p.set_defaults(func=cmd_fetch_carbon)

    p = sub.add_parser("bench", help="time the service strategies and write a strategies CSV")
    p.add_argument("--dataset")
    p.add_argument("--size", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--out")
    fmt(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("serve", help="run the demo HTTP service")
    p.add_argument("--dataset", required=True)
    p.add_argument("--schedule", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--reload-interval", type=float, default=1.0)
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_ERROR
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (
        ValidationError,
        CarbonDataError,
        ScheduleError,
        NetworkDisabled,
        FetchError,
        InstanceTooLarge,
        OSError,
        ValueError,
        KeyError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
