"""Domain types and objective evaluation for slot/strategy assignments.

Service times and errors are fixed-point integers scaled by ten
(``353`` means 35.3 ms, ``134`` means 13.4 %), so every sum that decides
optimality stays in exact integer arithmetic.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation
from typing import Sequence

# Watts x decimilliseconds -> kWh: 1 kWh = 3.6e6 J, 1 dms = 1e-4 s.
DMS_WATT_PER_KWH = 36_000_000_000
INT_LIMIT = 2**62


class ValidationError(ValueError):
    """Raised when inputs violate a domain invariant."""


def to_fixed(value, what: str = "value") -> int:
    """Parse a decimal with at most one fractional digit into tenths."""
    try:
        dec = Decimal(str(value).strip())
    except InvalidOperation as exc:
        raise ValidationError(f"{what}: not a number: {value!r}") from exc
    if not dec.is_finite():
        raise ValidationError(f"{what}: not finite: {value!r}")
    scaled = dec * 10
    if scaled != scaled.to_integral_value():
        raise ValidationError(f"{what}: more than one fractional digit: {value!r}")
    return int(scaled)


def from_fixed(tenths: int) -> str:
    sign = "-" if tenths < 0 else ""
    q, r = divmod(abs(tenths), 10)
    return f"{sign}{q}.{r}"


@dataclass(frozen=True)
class StrategyProfile:
    id: int
    name: str
    mean_service_time_dms: int
    mean_error_dpct: int

    def __post_init__(self):
        if self.mean_service_time_dms <= 0:
            raise ValidationError(f"strategy {self.name!r}: service time must be > 0")
        if self.mean_error_dpct < 0:
            raise ValidationError(f"strategy {self.name!r}: error must be >= 0")

    @property
    def service_time_ms(self) -> float:
        return self.mean_service_time_dms / 10

    @property
    def error_pct(self) -> float:
        return self.mean_error_dpct / 10


@dataclass(frozen=True)
class StrategyCatalog:
    strategies: tuple[StrategyProfile, ...]

    def __post_init__(self):
        object.__setattr__(self, "strategies", tuple(self.strategies))
        if not self.strategies:
            raise ValidationError("strategy catalog is empty")
        for pos, strategy in enumerate(self.strategies):
            if strategy.id != pos:
                raise ValidationError(
                    f"strategy ids must be 0..s-1 in order; got {strategy.id} at position {pos}"
                )

    @classmethod
    def from_values(cls, rows: Sequence[tuple[str, int, int]]) -> "StrategyCatalog":
        """Build from ``(name, service_time_dms, error_dpct)`` rows."""
        return cls(tuple(StrategyProfile(j, n, d, e) for j, (n, d, e) in enumerate(rows)))

    def __len__(self) -> int:
        return len(self.strategies)

    def __getitem__(self, j: int) -> StrategyProfile:
        return self.strategies[j]

    def __iter__(self):
        return iter(self.strategies)

    @property
    def names(self) -> list[str]:
        return [s.name for s in self.strategies]

    def id_of(self, name: str) -> int:
        for s in self.strategies:
            if s.name == name:
                return s.id
        raise ValidationError(f"unknown strategy name {name!r}")

    @property
    def min_error_dpct(self) -> int:
        return min(s.mean_error_dpct for s in self.strategies)

    @property
    def max_error_dpct(self) -> int:
        return max(s.mean_error_dpct for s in self.strategies)

    @property
    def max_service_time_dms(self) -> int:
        return max(s.mean_service_time_dms for s in self.strategies)


@dataclass(frozen=True)
class SlotForecast:
    index: int
    requests: int
    carbon_intensity_g_per_kwh: int

    def __post_init__(self):
        if self.requests < 0:
            raise ValidationError(f"slot {self.index}: requests must be >= 0")
        if self.carbon_intensity_g_per_kwh < 0:
            raise ValidationError(f"slot {self.index}: carbon intensity must be >= 0")


@dataclass(frozen=True)
class Horizon:
    slots: tuple[SlotForecast, ...]
    slot_duration_minutes: int = 30

    def __post_init__(self):
        object.__setattr__(self, "slots", tuple(self.slots))
        if not self.slots:
            raise ValidationError("horizon has no slots")
        if self.slot_duration_minutes <= 0:
            raise ValidationError("slot duration must be positive")
        for pos, slot in enumerate(self.slots):
            if slot.index != pos:
                raise ValidationError(f"slot indices must be contiguous from 0; got {slot.index} at {pos}")

    @classmethod
    def from_lists(
        cls, requests: Sequence[int], carbon: Sequence[int], slot_duration_minutes: int = 30
    ) -> "Horizon":
        if len(requests) != len(carbon):
            raise ValidationError(
                f"requests and carbon series differ in length ({len(requests)} vs {len(carbon)})"
            )
        slots = tuple(SlotForecast(i, int(r), int(c)) for i, (r, c) in enumerate(zip(requests, carbon)))
        return cls(slots, slot_duration_minutes)

    def __len__(self) -> int:
        return len(self.slots)

    @property
    def requests(self) -> list[int]:
        return [s.requests for s in self.slots]

    @property
    def carbon(self) -> list[int]:
        return [s.carbon_intensity_g_per_kwh for s in self.slots]

    @property
    def total_requests(self) -> int:
        return sum(s.requests for s in self.slots)


@dataclass(frozen=True)
class Assignment:
    choices: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "choices", tuple(int(j) for j in self.choices))

    def __len__(self) -> int:
        return len(self.choices)

    def one_hot(self, s: int) -> list[list[int]]:
        return [[1 if j == k else 0 for k in range(s)] for j in self.choices]


@dataclass(frozen=True)
class EmissionParams:
    server_power_watts: float = 50.0

    def __post_init__(self):
        if not self.server_power_watts > 0:
            raise ValidationError("server power must be > 0")


@dataclass(frozen=True)
class Metrics:
    emissions_g: float
    weighted_error_dpct: int
    avg_error_pct: float
    scaled_emission: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Violation:
    kind: str  # "length" | "bad-id"
    message: str
    slot: int | None = None


def scaled_emission(horizon: Horizon, catalog: StrategyCatalog, choices: Sequence[int]) -> int:
    """Exact ``sum c_i * r_i * d_j(i)`` in g/kWh x requests x decimilliseconds."""
    return sum(
        slot.carbon_intensity_g_per_kwh * slot.requests * catalog[j].mean_service_time_dms
        for slot, j in zip(horizon.slots, choices)
    )


def grams(scaled: int, params: EmissionParams) -> float:
    return scaled * params.server_power_watts / DMS_WATT_PER_KWH


def average_error_pct(weighted_error_dpct: int, total_requests: int) -> float:
    if total_requests == 0:
        return 0.0
    return weighted_error_dpct / (10 * total_requests)


def check_magnitude(horizon: Horizon, catalog: StrategyCatalog) -> None:
    worst = sum(s.carbon_intensity_g_per_kwh * s.requests for s in horizon.slots) * catalog.max_service_time_dms
    if worst >= INT_LIMIT:
        raise ValidationError("horizon too large: emission sums would overflow 62-bit integers")


def validate_assignment(horizon: Horizon, catalog: StrategyCatalog, assignment: Assignment) -> list[Violation]:
    """Return every violation; an empty list means the assignment is valid."""
    violations = []
    if len(assignment) != len(horizon):
        violations.append(
            Violation("length", f"assignment has {len(assignment)} entries, horizon has {len(horizon)} slots")
        )
    s = len(catalog)
    for i, j in enumerate(assignment.choices):
        if not 0 <= j < s:
            violations.append(Violation("bad-id", f"slot {i}: strategy id {j} not in [0, {s})", slot=i))
    return violations


def ensure_valid(horizon: Horizon, catalog: StrategyCatalog, assignment: Assignment) -> None:
    violations = validate_assignment(horizon, catalog, assignment)
    if violations:
        raise ValidationError("; ".join(v.message for v in violations))


def compute_metrics(
    horizon: Horizon, catalog: StrategyCatalog, assignment: Assignment, params: EmissionParams
) -> Metrics:
    ensure_valid(horizon, catalog, assignment)
    check_magnitude(horizon, catalog)
    scaled = scaled_emission(horizon, catalog, assignment.choices)
    weighted = sum(slot.requests * catalog[j].mean_error_dpct for slot, j in zip(horizon.slots, assignment.choices))
    return Metrics(
        emissions_g=grams(scaled, params),
        weighted_error_dpct=weighted,
        avg_error_pct=average_error_pct(weighted, horizon.total_requests),
        scaled_emission=scaled,
    )


def error_budget_dpct(horizon: Horizon, epsilon_dpct: int) -> int:
    if epsilon_dpct < 0:
        raise ValidationError("epsilon must be >= 0")
    return epsilon_dpct * horizon.total_requests
