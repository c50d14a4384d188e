from .schedule import ScheduleFile, ScheduleStore, load_schedule, lookup_strategy, parse_schedule, slot_key
from .strategies import STRATEGIES, approx_average, benchmark_strategies, strategy_error_pct

__all__ = [
    "STRATEGIES",
    "ScheduleFile",
    "ScheduleStore",
    "approx_average",
    "benchmark_strategies",
    "load_schedule",
    "lookup_strategy",
    "parse_schedule",
    "slot_key",
    "strategy_error_pct",
]
