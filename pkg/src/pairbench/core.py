"""Shared domain types, unit handling and measurement-location semantics."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from pathlib import Path
from typing import Iterable, Sequence

MIN_SERIES_POINTS = 4

# H1 is fixed at the generation location and never stored.
INTRINSIC_HERALDING = 1.0


class DomainError(ValueError):
    """Raised when an input lies outside an operation's domain."""


class MeasurementLocation(IntEnum):
    """Where along the photon path a brightness or heralding value is quoted.

    Ordering follows the direction of photon loss: values can only decrease
    from GENERATION to DETECTOR.
    """

    GENERATION = 1
    POST_SOURCE = 2
    DETECTOR = 3

    @classmethod
    def parse(cls, text: str | int) -> MeasurementLocation:
        if isinstance(text, int):
            return cls(text)
        key = str(text).strip().lower().replace("-", "_")
        aliases = {
            "1": cls.GENERATION, "generation": cls.GENERATION, "intrinsic": cls.GENERATION,
            "2": cls.POST_SOURCE, "post_source": cls.POST_SOURCE, "postsource": cls.POST_SOURCE,
            "on_chip": cls.POST_SOURCE,
            "3": cls.DETECTOR, "detector": cls.DETECTOR, "detectors": cls.DETECTOR,
        }
        try:
            return aliases[key]
        except KeyError:
            raise DomainError(f"unknown measurement location {text!r}") from None


class RegimeKind(str, Enum):
    PULSED = "pulsed"
    CW = "cw"


@dataclass(frozen=True)
class PumpRegime:
    """Pump laser regime.

    For pulsed pumps the repetition rate and linewidth (both Hz) may be left
    as None when a publication does not report them; when given they must be
    strictly positive.
    """

    kind: RegimeKind
    repetition_rate: float | None = None
    linewidth: float | None = None

    def __post_init__(self):
        if self.kind is RegimeKind.CW:
            if self.repetition_rate is not None or self.linewidth is not None:
                raise DomainError("CW regime takes no repetition rate or linewidth")
            return
        for name in ("repetition_rate", "linewidth"):
            v = getattr(self, name)
            if v is not None and not (math.isfinite(v) and v > 0):
                raise DomainError(f"pulsed regime requires {name} > 0, got {v}")

    @classmethod
    def cw(cls) -> PumpRegime:
        return cls(RegimeKind.CW)

    @classmethod
    def pulsed(cls, repetition_rate: float | None = None, linewidth: float | None = None) -> PumpRegime:
        return cls(RegimeKind.PULSED, repetition_rate, linewidth)

    @property
    def is_cw(self) -> bool:
        return self.kind is RegimeKind.CW

    def to_dict(self) -> dict:
        out: dict = {"kind": self.kind.value}
        if self.repetition_rate is not None:
            out["repetition_rate_hz"] = self.repetition_rate
        if self.linewidth is not None:
            out["linewidth_hz"] = self.linewidth
        return out

    @classmethod
    def from_dict(cls, doc: dict | str) -> PumpRegime:
        if isinstance(doc, str):
            doc = {"kind": doc}
        try:
            kind = RegimeKind(str(doc["kind"]).lower())
        except (KeyError, ValueError):
            raise DomainError(f"invalid pump regime {doc!r}") from None
        return cls(kind, doc.get("repetition_rate_hz"), doc.get("linewidth_hz"))


class Unit(str, Enum):
    """Canonical internal units. Efficiencies are held as DIMENSIONLESS fractions."""

    BRIGHTNESS = "Mcts s^-1 mW^-2"
    PERCENT = "%"
    COUNTS_PER_SEC = "cts/s"
    MILLIWATT = "mW"
    SECONDS = "s"
    DIMENSIONLESS = ""


# external unit string -> (canonical unit, scale); canonical = external * scale.
# Scales that are negative powers of ten are stored as divisors to keep
# round-trips exact for decimal inputs as often as floats allow.
_UNIT_TABLE: dict[str, tuple[Unit, float, bool]] = {
    "Mcts s^-1 mW^-2": (Unit.BRIGHTNESS, 1.0, False),
    "MHz mW^-2": (Unit.BRIGHTNESS, 1.0, False),
    "kcts s^-1 mW^-2": (Unit.BRIGHTNESS, 1e3, True),
    "cts s^-1 mW^-2": (Unit.BRIGHTNESS, 1e6, True),
    "%": (Unit.DIMENSIONLESS, 100.0, True),
    "fraction": (Unit.DIMENSIONLESS, 1.0, False),
    "": (Unit.DIMENSIONLESS, 1.0, False),
    "cts/s": (Unit.COUNTS_PER_SEC, 1.0, False),
    "kcts/s": (Unit.COUNTS_PER_SEC, 1e3, False),
    "Mcts/s": (Unit.COUNTS_PER_SEC, 1e6, False),
    "mW": (Unit.MILLIWATT, 1.0, False),
    "W": (Unit.MILLIWATT, 1e3, False),
    "uW": (Unit.MILLIWATT, 1e3, True),
    "s": (Unit.SECONDS, 1.0, False),
    "ms": (Unit.SECONDS, 1e3, True),
    "us": (Unit.SECONDS, 1e6, True),
    "ns": (Unit.SECONDS, 1e9, True),
    "ps": (Unit.SECONDS, 1e12, True),
}

SUPPORTED_UNITS = tuple(_UNIT_TABLE)


def _lookup_unit(unit: str) -> tuple[Unit, float, bool]:
    try:
        return _UNIT_TABLE[unit.strip()]
    except KeyError:
        raise DomainError(f"unsupported unit {unit!r}") from None


@dataclass(frozen=True)
class Quantity:
    """A value with a one-sigma uncertainty in a canonical unit.

    ``approximate`` marks values quoted with "≈"; ``bound`` is "gt" or "lt"
    for values quoted as inequalities.
    """

    value: float
    uncertainty: float = 0.0
    unit: Unit = Unit.DIMENSIONLESS
    approximate: bool = False
    bound: str | None = None

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise DomainError(f"quantity value must be finite, got {self.value}")
        if not (math.isfinite(self.uncertainty) and self.uncertainty >= 0):
            raise DomainError(f"uncertainty must be finite and >= 0, got {self.uncertainty}")
        if self.bound not in (None, "gt", "lt"):
            raise DomainError(f"bound must be 'gt', 'lt' or None, got {self.bound!r}")

    @property
    def relative_uncertainty(self) -> float:
        return self.uncertainty / abs(self.value) if self.value else 0.0

    def scaled(self, k: float) -> Quantity:
        return Quantity(self.value * k, self.uncertainty * abs(k), self.unit, self.approximate, self.bound)

    def __str__(self):
        return f"{self.value:g} ± {self.uncertainty:g} {self.unit.value}".rstrip()


def canonicalize(value: float, unit: str, uncertainty: float = 0.0, **flags) -> Quantity:
    """Convert a value quoted in an external unit string to a canonical Quantity."""
    canon, scale, divide = _lookup_unit(unit)
    if divide:
        return Quantity(value / scale, uncertainty / scale, canon, **flags)
    return Quantity(value * scale, uncertainty * scale, canon, **flags)


def render(q: Quantity, unit: str) -> tuple[float, float]:
    """Express ``q`` in the external ``unit``; returns (value, uncertainty)."""
    canon, scale, divide = _lookup_unit(unit)
    if canon is not q.unit:
        raise DomainError(f"cannot render {q.unit.value!r} quantity in {unit!r}")
    if divide:
        return q.value * scale, q.uncertainty * scale
    return q.value / scale, q.uncertainty / scale


def db_to_transmittance(loss_db: float) -> float:
    """Transmittance for an optical loss given in dB (loss >= 0)."""
    if not math.isfinite(loss_db) or loss_db < 0:
        raise DomainError(f"loss must be finite and >= 0 dB, got {loss_db}")
    return 10.0 ** (-loss_db / 10.0)


@dataclass(frozen=True)
class CountRateSeries:
    """Singles and coincidence rates measured over a pump-power sweep.

    Arrays are (n,) with powers in mW and rates in cts/s; ``tau`` is the
    coincidence-window width in seconds.
    """

    p_avg: tuple[float, ...]
    r_s: tuple[float, ...]
    r_i: tuple[float, ...]
    r_si: tuple[float, ...]
    tau: float
    regime: PumpRegime = field(default_factory=PumpRegime.pulsed)

    @classmethod
    def from_points(cls, points: Iterable[Sequence[float]], tau: float,
                    regime: PumpRegime | None = None) -> CountRateSeries:
        pts = [tuple(float(v) for v in p) for p in points]
        cols = list(zip(*pts)) if pts else [(), (), (), ()]
        return cls(*cols, tau=float(tau), regime=regime or PumpRegime.pulsed())

    @property
    def points(self) -> list[tuple[float, float, float, float]]:
        return list(zip(self.p_avg, self.r_s, self.r_i, self.r_si))

    def __len__(self):
        return len(self.p_avg)


@dataclass(frozen=True)
class Violation:
    rule: str
    index: int | None = None
    detail: str = ""

    def __str__(self):
        where = f" at index {self.index}" if self.index is not None else ""
        return f"{self.rule}{where}" + (f" ({self.detail})" if self.detail else "")


@dataclass(frozen=True)
class ValidatedSeries:
    """Marker wrapper: a CountRateSeries that passed validate_series."""

    series: CountRateSeries

    def __getattr__(self, name):
        return getattr(self.series, name)

    def __len__(self):
        return len(self.series)


def validate_series(series: CountRateSeries) -> ValidatedSeries | list[Violation]:
    """Check the CountRateSeries invariants.

    Returns the wrapped series when everything holds, otherwise the list of
    violations (one per offending point and rule).
    """
    out: list[Violation] = []
    lengths = {len(series.p_avg), len(series.r_s), len(series.r_i), len(series.r_si)}
    if len(lengths) != 1:
        return [Violation("columns have unequal lengths", detail=str(sorted(lengths)))]
    n = len(series.p_avg)
    if n < MIN_SERIES_POINTS:
        out.append(Violation(f"minimum {MIN_SERIES_POINTS} points", detail=f"got {n}"))
    if not (math.isfinite(series.tau) and series.tau > 0):
        out.append(Violation("tau must be > 0", detail=f"tau={series.tau}"))
    for k, (p, rs, ri, rsi) in enumerate(series.points):
        if not (math.isfinite(p) and p > 0):
            out.append(Violation("powers must be strictly positive", k, f"p_avg={p}"))
        if k > 0 and not p > series.p_avg[k - 1]:
            out.append(Violation("powers not strictly increasing", k, f"p_avg={p}"))
        for name, r in (("r_s", rs), ("r_i", ri), ("r_si", rsi)):
            if not (math.isfinite(r) and r >= 0):
                out.append(Violation("rates must be non-negative", k, f"{name}={r}"))
    return out if out else ValidatedSeries(series)


SERIES_HEADER = ("p_avg_mw", "r_s_cps", "r_i_cps", "r_si_cps")


def read_series_csv(path: str | Path, tau: float, regime: PumpRegime | None = None) -> CountRateSeries:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(SERIES_HEADER) - set(reader.fieldnames or ())
        if missing:
            raise DomainError(f"{path}: missing CSV columns {sorted(missing)}")
        rows = [[float(row[c]) for c in SERIES_HEADER] for row in reader]
    return CountRateSeries.from_points(rows, tau, regime)


def write_series_csv(series: CountRateSeries, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SERIES_HEADER)
        for row in series.points:
            w.writerow([repr(v) for v in row])


def read_sidecar(path: str | Path) -> dict:
    """Load the JSON sidecar carrying tau, regime and integration time for a series CSV."""
    with open(path) as fh:
        doc = json.load(fh)
    out = {}
    if "tau_s" in doc:
        out["tau"] = float(doc["tau_s"])
    if "regime" in doc:
        out["regime"] = PumpRegime.from_dict(doc["regime"])
    if "integration_time_s" in doc:
        out["integration_time"] = float(doc["integration_time_s"])
    return out
