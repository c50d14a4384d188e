"""Regenerate the synthetic 2023 carbon-intensity day fixtures.

The files mimic the shape of Great Britain's national intensity data (overnight
trough, evening peak, seasonal level, weather-driven drift, forecast error) and
are written in the intensity API's JSON layout. They stand in for recorded data
until ``carbonsched fetch-carbon --online`` is run against the live API.
"""
from __future__ import annotations

import json
from datetime import date, datetime, timedelta, timezone
from pathlib import Path

import numpy as np

OUT = Path(__file__).resolve().parents[1] / "src" / "carbonsched" / "data" / "carbon"

MONTHLY_LEVEL = {1: 205, 2: 190, 3: 175, 4: 150, 5: 135, 6: 145, 7: 130, 8: 140, 9: 165, 10: 155, 11: 180, 12: 195}


def index_band(value: int) -> str:
    if value < 100:
        return "very low"
    if value <= 150:
        return "low"
    if value <= 250:
        return "moderate"
    if value <= 330:
        return "high"
    return "very high"


def make_day(day: date, rng: np.random.Generator) -> dict:
    hours = np.arange(48) / 2
    daily = 1 + 0.12 * np.sin((hours - 11) / 24 * 2 * np.pi) + 0.10 * np.exp(-((hours - 18) ** 2) / 4)
    drift = np.cumsum(rng.normal(0, 0.025, 48))
    drift -= drift.mean()
    level = MONTHLY_LEVEL[day.month] * rng.uniform(0.75, 1.25)
    actual = np.clip(np.round(level * daily * (1 + drift)), 20, None).astype(int)
    forecast_err = np.cumsum(rng.normal(0, 0.02, 48)) + rng.normal(0, 0.03)
    forecast = np.clip(np.round(actual * (1 + forecast_err)), 20, None).astype(int)
    start = datetime(day.year, day.month, day.day, tzinfo=timezone.utc)
    data = []
    for i in range(48):
        a, b = start + timedelta(minutes=30 * i), start + timedelta(minutes=30 * (i + 1))
        data.append(
            {
                "from": a.strftime("%Y-%m-%dT%H:%MZ"),
                "to": b.strftime("%Y-%m-%dT%H:%MZ"),
                "intensity": {"forecast": int(forecast[i]), "actual": int(actual[i]), "index": index_band(int(actual[i]))},
            }
        )
    return {"data": data}


def main() -> None:
    OUT.mkdir(parents=True, exist_ok=True)
    for month in range(1, 13):
        day = date(2023, month, 15)
        rng = np.random.Generator(np.random.PCG64([2023, month]))
        (OUT / f"{day.isoformat()}.json").write_text(json.dumps(make_day(day, rng), indent=1) + "\n")


if __name__ == "__main__":
    main()
