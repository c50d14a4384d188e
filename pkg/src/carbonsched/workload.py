"""Request profiles, forecast perturbation and carbon-intensity data ingestion.

Randomness comes from numpy's PCG64 bit generator seeded with the caller's
integer seed, so a given ``(spec, seed)`` always yields the same series on
the same numpy release. Portable reproducibility is through the CSV files,
not generator parity.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import os
import tempfile
from dataclasses import dataclass
from datetime import date as Date
from datetime import datetime, timedelta, timezone
from importlib import resources
from pathlib import Path
from typing import Literal, Sequence

import httpx
import numpy as np

from .model import Horizon, StrategyCatalog, StrategyProfile, ValidationError, from_fixed, to_fixed

log = logging.getLogger(__name__)

API_BASE = "https://api.carbonintensity.org.uk"
DATA_DIR_ENV = "CARBONSCHED_DATA_DIR"
TIME_FORMAT = "%Y-%m-%dT%H:%MZ"

CARBON_HEADER = ["slot", "from", "to", "forecast_g_per_kwh", "actual_g_per_kwh"]
REQUESTS_HEADER = ["slot", "forecast_requests", "actual_requests"]
STRATEGIES_HEADER = ["id", "name", "service_time_ms", "error_pct"]


class CarbonDataError(ValueError):
    """Malformed or inconsistent carbon-intensity data."""


class NetworkDisabled(RuntimeError):
    pass


class FetchError(RuntimeError):
    """Transport-level failure talking to the intensity API."""


class HTTPStatusError(FetchError):
    def __init__(self, status_code: int, url: str):
        super().__init__(f"GET {url} returned HTTP {status_code}")
        self.status_code = status_code


def round_half_away(x):
    """Round to nearest integer, halves away from zero (works on arrays)."""
    x = np.asarray(x, dtype=float)
    return (np.sign(x) * np.floor(np.abs(x) + 0.5)).astype(np.int64)


# -- request profiles ------------------------------------------------------


@dataclass(frozen=True)
class RequestProfileSpec:
    kind: Literal["peaky", "stable"]
    base_level: int
    peak_level: int | None = None
    peak_slots: tuple[int, ...] = (16, 36)
    peak_width_slots: int = 4
    noise_pct: float = 10.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "peak_slots", tuple(self.peak_slots))
        if self.kind not in ("peaky", "stable"):
            raise ValidationError(f"unknown profile kind {self.kind!r}")
        if self.base_level <= 0:
            raise ValidationError("base_level must be positive")
        if self.noise_pct < 0:
            raise ValidationError("noise_pct must be >= 0")
        if self.kind == "peaky":
            if self.peak_level is None or self.peak_level < self.base_level:
                raise ValidationError("peaky profile needs peak_level >= base_level")
            if self.peak_width_slots <= 0:
                raise ValidationError("peak_width_slots must be positive")


def _noise(rng: np.random.Generator, magnitude_pct: float, n: int) -> np.ndarray:
    m = magnitude_pct / 100
    return rng.uniform(-m, m, n) if m > 0 else np.zeros(n)


def profile_shape(spec: RequestProfileSpec, t: int) -> np.ndarray:
    """Noise-free expected requests per slot."""
    level = np.full(t, float(spec.base_level))
    if spec.kind == "peaky":
        idx = np.arange(t)
        height = spec.peak_level - spec.base_level
        for center in spec.peak_slots:
            level += height * np.exp(-((idx - center) ** 2) / (2 * spec.peak_width_slots**2))
    return level


def generate_profile(spec: RequestProfileSpec, t: int) -> list[int]:
    if t < 1:
        raise ValidationError("t must be >= 1")
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    values = profile_shape(spec, t) * (1 + _noise(rng, spec.noise_pct, t))
    return [int(v) for v in np.maximum(round_half_away(values), 0)]


def perturb_series(series: Sequence[int], magnitude_pct: float = 5.0, seed: int = 0) -> list[int]:
    """Scale each value by an independent factor in ``[1 - m/100, 1 + m/100]``."""
    if magnitude_pct < 0:
        raise ValidationError("magnitude_pct must be >= 0")
    values = np.asarray(series, dtype=float)
    if magnitude_pct == 0:
        return [int(v) for v in series]
    rng = np.random.Generator(np.random.PCG64(seed))
    out = round_half_away(values * (1 + _noise(rng, magnitude_pct, len(values))))
    return [int(v) for v in np.maximum(out, 0)]


# -- carbon intensity ------------------------------------------------------


@dataclass(frozen=True)
class CarbonSlot:
    start: datetime
    end: datetime
    forecast_g_per_kwh: int
    actual_g_per_kwh: int | None = None


@dataclass(frozen=True)
class CarbonSeries:
    date: Date
    slots: tuple[CarbonSlot, ...]
    slot_duration_minutes: int = 30

    def __post_init__(self):
        object.__setattr__(self, "slots", tuple(self.slots))
        if not self.slots:
            raise CarbonDataError("carbon series has no slots")
        width = timedelta(minutes=self.slot_duration_minutes)
        for i, slot in enumerate(self.slots):
            if slot.end - slot.start != width:
                raise CarbonDataError(f"slot {i}: interval is not {self.slot_duration_minutes} minutes")
            if i and slot.start != self.slots[i - 1].end:
                raise CarbonDataError(f"slot {i}: interval not contiguous with slot {i - 1}")

    def __len__(self) -> int:
        return len(self.slots)

    @property
    def forecast(self) -> list[int]:
        return [s.forecast_g_per_kwh for s in self.slots]

    @property
    def actual(self) -> list[int]:
        """Actual intensities, falling back to the forecast where missing."""
        return [s.forecast_g_per_kwh if s.actual_g_per_kwh is None else s.actual_g_per_kwh for s in self.slots]

    @property
    def has_all_actuals(self) -> bool:
        return all(s.actual_g_per_kwh is not None for s in self.slots)


def _parse_time(text: str) -> datetime:
    try:
        return datetime.strptime(text, TIME_FORMAT).replace(tzinfo=timezone.utc)
    except (TypeError, ValueError) as exc:
        raise CarbonDataError(f"bad timestamp {text!r}") from exc


def _format_time(ts: datetime) -> str:
    return ts.astimezone(timezone.utc).strftime(TIME_FORMAT)


def _int_field(value, what: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise CarbonDataError(f"{what} must be an integer, got {value!r}")
    return value


def parse_carbon_api_json(document: bytes | str, day: Date | None = None) -> CarbonSeries:
    """Parse an intensity API response (``{"data": [{"from", "to", "intensity"}]}``).

    The ``index`` band label is ignored. ``day`` defaults to the date on
    which the first slot ends.
    """
    try:
        payload = json.loads(document)
    except (ValueError, UnicodeDecodeError) as exc:
        raise CarbonDataError(f"not valid JSON: {exc}") from exc
    if not isinstance(payload, dict) or not isinstance(payload.get("data"), list):
        raise CarbonDataError('document lacks a top-level "data" array')
    records = payload["data"]
    if not records:
        raise CarbonDataError('"data" array is empty')
    slots = []
    for n, rec in enumerate(records):
        try:
            intensity = rec["intensity"]
            start, end = _parse_time(rec["from"]), _parse_time(rec["to"])
            forecast = _int_field(intensity["forecast"], f"record {n} forecast")
        except (KeyError, TypeError) as exc:
            raise CarbonDataError(f"record {n} is malformed: {exc!r}") from exc
        actual = intensity.get("actual")
        if actual is not None:
            actual = _int_field(actual, f"record {n} actual")
        slots.append(CarbonSlot(start, end, forecast, actual))
    minutes = int((slots[0].end - slots[0].start).total_seconds() // 60)
    return CarbonSeries(day or slots[0].end.date(), tuple(slots), minutes)


def carbon_to_api_json(series: CarbonSeries) -> str:
    # the real API also carries an "index" band; it is not reproduced here
    data = [
        {
            "from": _format_time(s.start),
            "to": _format_time(s.end),
            "intensity": {"forecast": s.forecast_g_per_kwh, "actual": s.actual_g_per_kwh},
        }
        for s in series.slots
    ]
    return json.dumps({"data": data}, indent=1) + "\n"


def write_carbon_csv(series: CarbonSeries) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CARBON_HEADER)
    for i, s in enumerate(series.slots):
        actual = "" if s.actual_g_per_kwh is None else s.actual_g_per_kwh
        w.writerow([i, _format_time(s.start), _format_time(s.end), s.forecast_g_per_kwh, actual])
    return buf.getvalue()


def _check_header(reader: csv.DictReader, required: Sequence[str], what: str) -> None:
    fields = reader.fieldnames or []
    missing = [h for h in required if h not in fields]
    if missing:
        raise ValidationError(f"{what} CSV is missing columns {missing}")


def _check_slot_column(row: dict, expected: int, what: str) -> None:
    try:
        slot = int(row["slot"])
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"{what} CSV: bad slot value {row['slot']!r}") from exc
    if slot != expected:
        raise ValidationError(f"{what} CSV: slot {slot} found where {expected} expected")


def read_carbon_csv(text: str, day: Date | None = None) -> CarbonSeries:
    reader = csv.DictReader(io.StringIO(text))
    _check_header(reader, CARBON_HEADER[:4], "carbon")
    slots = []
    try:
        for n, row in enumerate(reader):
            _check_slot_column(row, n, "carbon")
            actual = (row.get("actual_g_per_kwh") or "").strip()
            slots.append(
                CarbonSlot(
                    _parse_time(row["from"]),
                    _parse_time(row["to"]),
                    int(row["forecast_g_per_kwh"]),
                    int(actual) if actual else None,
                )
            )
    except ValueError as exc:
        if isinstance(exc, (CarbonDataError, ValidationError)):
            raise
        raise CarbonDataError(f"carbon CSV: {exc}") from exc
    if not slots:
        raise CarbonDataError("carbon CSV has no rows")
    minutes = int((slots[0].end - slots[0].start).total_seconds() // 60)
    return CarbonSeries(day or slots[0].end.date(), tuple(slots), minutes)


@dataclass(frozen=True)
class RequestSeries:
    forecast: tuple[int, ...]
    actual: tuple[int, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "forecast", tuple(int(v) for v in self.forecast))
        if self.actual is not None:
            object.__setattr__(self, "actual", tuple(int(v) for v in self.actual))
            if len(self.actual) != len(self.forecast):
                raise ValidationError("actual and forecast request series differ in length")
        if any(v < 0 for v in self.forecast + (self.actual or ())):
            raise ValidationError("request counts must be >= 0")

    def __len__(self) -> int:
        return len(self.forecast)

    @property
    def actual_or_forecast(self) -> tuple[int, ...]:
        return self.actual if self.actual is not None else self.forecast


def write_requests_csv(series: RequestSeries) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if series.actual is None:
        w.writerow(REQUESTS_HEADER[:2])
        w.writerows([i, f] for i, f in enumerate(series.forecast))
    else:
        w.writerow(REQUESTS_HEADER)
        w.writerows([i, f, a] for i, (f, a) in enumerate(zip(series.forecast, series.actual)))
    return buf.getvalue()


def read_requests_csv(text: str) -> RequestSeries:
    reader = csv.DictReader(io.StringIO(text))
    _check_header(reader, REQUESTS_HEADER[:2], "requests")
    has_actual = "actual_requests" in (reader.fieldnames or [])
    forecast, actual = [], []
    try:
        for n, row in enumerate(reader):
            _check_slot_column(row, n, "requests")
            forecast.append(int(row["forecast_requests"]))
            if has_actual:
                actual.append(int(row["actual_requests"]))
    except ValueError as exc:
        if isinstance(exc, ValidationError):
            raise
        raise ValidationError(f"requests CSV: {exc}") from exc
    if not forecast:
        raise ValidationError("requests CSV has no rows")
    return RequestSeries(tuple(forecast), tuple(actual) if has_actual else None)


def write_strategies_csv(catalog: StrategyCatalog) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(STRATEGIES_HEADER)
    for s in catalog:
        w.writerow([s.id, s.name, from_fixed(s.mean_service_time_dms), from_fixed(s.mean_error_dpct)])
    return buf.getvalue()


def read_strategies_csv(text: str) -> StrategyCatalog:
    reader = csv.DictReader(io.StringIO(text))
    _check_header(reader, STRATEGIES_HEADER, "strategies")
    rows = []
    for row in reader:
        try:
            ident = int(row["id"])
        except (TypeError, ValueError) as exc:
            raise ValidationError(f"strategies CSV: bad id {row['id']!r}") from exc
        rows.append(
            StrategyProfile(
                ident,
                row["name"].strip(),
                to_fixed(row["service_time_ms"], "service_time_ms"),
                to_fixed(row["error_pct"], "error_pct"),
            )
        )
    return StrategyCatalog(tuple(rows))


def default_catalog() -> StrategyCatalog:
    """Low/medium/high strategies of the approximate-average demo service."""
    text = resources.files("carbonsched.data").joinpath("strategies.csv").read_text()
    return read_strategies_csv(text)


def build_horizon(
    carbon: Sequence[int], requests: Sequence[int], slot_duration_minutes: int = 30
) -> Horizon:
    return Horizon.from_lists(list(requests), list(carbon), slot_duration_minutes)


# -- fetching and caching --------------------------------------------------


def data_dir() -> Path:
    """Cache directory for fetched carbon days (``$CARBONSCHED_DATA_DIR``)."""
    env = os.environ.get(DATA_DIR_ENV)
    return Path(env) if env else Path.home() / ".cache" / "carbonsched"


def _packaged_fixture(day: Date) -> str | None:
    res = resources.files("carbonsched.data").joinpath("carbon", f"{day.isoformat()}.json")
    return res.read_text() if res.is_file() else None


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def fetch_carbon_day(
    day: Date,
    *,
    online: bool = False,
    cache_dir: Path | None = None,
    client: httpx.Client | None = None,
    base_url: str = API_BASE,
    timeout: float = 20.0,
) -> CarbonSeries:
    """Carbon series for ``day`` from the cache, packaged fixtures, or the API.

    The network is only touched when ``online`` is true and no cached copy
    exists. Fetched documents are cached verbatim as ``<cache>/<date>.json``.
    """
    cache = (cache_dir or data_dir()) / f"{day.isoformat()}.json"
    if cache.is_file():
        return parse_carbon_api_json(cache.read_text(), day)
    fixture = _packaged_fixture(day)
    if fixture is not None:
        return parse_carbon_api_json(fixture, day)
    if not online:
        raise NetworkDisabled(f"no cached data for {day.isoformat()} and network access is disabled")

    url = f"{base_url}/intensity/date/{day.isoformat()}"
    owns_client = client is None
    client = client or httpx.Client(timeout=timeout)
    try:
        log.info("GET %s", url)
        response = client.get(url, headers={"Accept": "application/json"})
    except httpx.HTTPError as exc:
        raise FetchError(f"GET {url} failed: {exc}") from exc
    finally:
        if owns_client:
            client.close()
    if response.status_code != 200:
        raise HTTPStatusError(response.status_code, url)
    series = parse_carbon_api_json(response.content, day)
    _atomic_write(cache, response.text)
    return series


def load_carbon_file(path: Path) -> CarbonSeries:
    text = Path(path).read_text()
    if Path(path).suffix.lower() == ".json":
        return parse_carbon_api_json(text)
    return read_carbon_csv(text)
