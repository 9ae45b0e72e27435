"""Registry of published source parameters and cross-source comparison.

One JSON document per source. Efficiencies and purities are stored as
fractions, brightness in Mcts s^-1 mW^-2 and R_si in cts/s; documents may
use any supported unit string and are canonicalised on ingest.
"""
from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from itertools import combinations
from pathlib import Path
from typing import Iterable, Sequence

from .core import (DomainError, MeasurementLocation, PumpRegime, Quantity, RegimeKind, Unit,
                   canonicalize)
from .propagation import LocatedValue, ValueKind

EARLIEST_YEAR = 1946

PARAMETERS = ("car", "r_si", "purity_spectral", "purity_number", "h2", "h3", "b1", "b2", "b3")
TABLE_I_COLUMNS = ("car", "purity_spectral", "h2", "h3", "b1", "b2", "b3")
TABLE_II_COLUMNS = ("car", "purity_spectral", "purity_number", "h2", "h3", "b1", "b2", "b3")
TIMELINE_PARAMETERS = ("car", "purity_spectral", "h2", "h3", "b1", "b2", "b3")
BRIGHTNESS_KEYS = ("b1", "b2", "b3", "r_si")

_KIND = {
    "car": Unit.DIMENSIONLESS,
    "r_si": Unit.COUNTS_PER_SEC,
    "purity_spectral": "fraction",
    "purity_number": "fraction",
    "h2": "fraction",
    "h3": "fraction",
    "b1": Unit.BRIGHTNESS,
    "b2": Unit.BRIGHTNESS,
    "b3": Unit.BRIGHTNESS,
}
_LOCATIONS = {
    "b1": (MeasurementLocation.GENERATION, ValueKind.BRIGHTNESS),
    "b2": (MeasurementLocation.POST_SOURCE, ValueKind.BRIGHTNESS),
    "b3": (MeasurementLocation.DETECTOR, ValueKind.BRIGHTNESS),
    "h2": (MeasurementLocation.POST_SOURCE, ValueKind.HERALDING_EFFICIENCY),
    "h3": (MeasurementLocation.DETECTOR, ValueKind.HERALDING_EFFICIENCY),
}

NOTE_FLAGS = frozenset({
    "cw_pump",                  # pumped with a CW laser
    "r_si_at_detectors",        # quoted R_si is the raw detector rate, not on-chip
    "pump_power_off_chip",      # average pump power measured off-chip
    "b1_equals_b2_assumed",     # waveguide source, B1 taken equal to B2
    "heralding_averaged",       # H values averaged over signal and idler
    "purity_from_g2",           # purity from unheralded g2 rather than the JSI
    "max_car_reported",         # a separate maximum CAR was reported
    "pair_rate_unknown_power",  # a pair rate was reported at an unstated pump power
    "b1_averaged_over_devices", # B1 averaged over more than one device
})


class Platform(str, Enum):
    SI = "Si"
    SIC = "SiC"
    SIN = "SiN"
    ALGAAS = "AlGaAs"
    USRN = "USRN"
    OTHER = "Other"


class Architecture(str, Enum):
    ICR = "ICR"
    PMICR = "PMICR"
    MRR = "MRR"
    CMRR = "CMRR"
    MMW = "MMW"
    SMW = "SMW"
    MD = "MD"
    OTHER = "Other"


def _enum_or_other(enum, text: str):
    try:
        return enum(text), None
    except ValueError:
        return enum.OTHER, text


@dataclass(frozen=True)
class RecordViolation:
    field: str
    reason: str

    def __str__(self):
        return f"{self.field}: {self.reason}"


@dataclass(frozen=True)
class SourceRecord:
    citation_key: str
    year: int
    platform: Platform
    architecture: Architecture
    regime: PumpRegime
    car: Quantity | None = None
    r_si: Quantity | None = None
    r_si_location: MeasurementLocation | None = None
    purity_spectral: Quantity | None = None
    purity_number: Quantity | None = None
    h2: Quantity | None = None
    h3: Quantity | None = None
    b1: Quantity | None = None
    b2: Quantity | None = None
    b3: Quantity | None = None
    notes: frozenset[str] = frozenset()
    platform_name: str | None = None
    architecture_name: str | None = None
    provenance: tuple[str, ...] = ()

    @property
    def label(self) -> str:
        plat = self.platform_name or self.platform.value
        arch = self.architecture_name or self.architecture.value
        return f"{self.citation_key} ({self.year} {plat} {arch})"

    def get(self, name: str) -> Quantity | None:
        if name not in PARAMETERS:
            raise DomainError(f"unknown parameter {name!r}")
        return getattr(self, name)

    def located(self, name: str) -> LocatedValue | None:
        q = self.get(name)
        if q is None or name not in _LOCATIONS:
            return None
        loc, kind = _LOCATIONS[name]
        return LocatedValue(q, loc, kind)

    def missing(self, columns: Sequence[str] = TABLE_I_COLUMNS) -> list[str]:
        return [c for c in columns if self.get(c) is None]


def _parse_quantity(name: str, doc) -> tuple[Quantity | None, list[RecordViolation]]:
    if not isinstance(doc, dict) or "value" not in doc:
        return None, [RecordViolation(name, "expected an object with a 'value'")]
    kind = _KIND[name]
    unit = doc.get("unit")
    if unit is None:
        if kind is Unit.DIMENSIONLESS:
            unit = ""
        else:
            return None, [RecordViolation(name, "missing unit")]
    try:
        q = canonicalize(float(doc["value"]), unit, float(doc.get("uncertainty", 0.0)),
                         approximate=bool(doc.get("approximate", False)), bound=doc.get("bound"))
    except (DomainError, TypeError, ValueError) as exc:
        return None, [RecordViolation(name, str(exc))]
    want = Unit.DIMENSIONLESS if kind == "fraction" else kind
    if q.unit is not want:
        return None, [RecordViolation(name, f"unit {unit!r} is not valid for this parameter")]
    if kind == "fraction" and not 0 <= q.value <= 1:
        return None, [RecordViolation(name, f"efficiency out of range ({q.value:.4g} as fraction)")]
    if name in ("h2", "h3") and q.value == 0:
        return None, [RecordViolation(name, "efficiency out of range (zero)")]
    if q.value < 0:
        return None, [RecordViolation(name, "must be non-negative")]
    return q, []


_KNOWN_KEYS = {"citation_key", "year", "platform", "architecture", "regime", "notes", "provenance",
               *PARAMETERS}


def ingest_record(doc: dict) -> SourceRecord | list[RecordViolation]:
    """Parse and canonicalise one source document; returns violations instead on failure."""
    out: list[RecordViolation] = []
    if not isinstance(doc, dict):
        return [RecordViolation("document", "expected a JSON object")]
    for k in sorted(set(doc) - _KNOWN_KEYS):
        out.append(RecordViolation(k, "unknown field"))

    key = doc.get("citation_key")
    if not isinstance(key, str) or not key:
        out.append(RecordViolation("citation_key", "required non-empty string"))
    year = doc.get("year")
    if not isinstance(year, int) or isinstance(year, bool):
        out.append(RecordViolation("year", "required integer"))
    elif year < EARLIEST_YEAR:
        out.append(RecordViolation("year", f"must be >= {EARLIEST_YEAR}"))
    platform, platform_name = _enum_or_other(Platform, str(doc.get("platform", "")))
    architecture, architecture_name = _enum_or_other(Architecture, str(doc.get("architecture", "")))
    if not doc.get("platform"):
        out.append(RecordViolation("platform", "required"))
    if not doc.get("architecture"):
        out.append(RecordViolation("architecture", "required"))

    notes = doc.get("notes", [])
    if not isinstance(notes, list):
        out.append(RecordViolation("notes", "expected a list of flags"))
        notes = []
    for n in notes:
        if n not in NOTE_FLAGS:
            out.append(RecordViolation("notes", f"unknown flag {n!r}"))
    notes = frozenset(n for n in notes if n in NOTE_FLAGS)
    provenance = list(doc.get("provenance", []))

    regime = None
    if "regime" in doc:
        try:
            regime = PumpRegime.from_dict(doc["regime"])
        except DomainError as exc:
            out.append(RecordViolation("regime", str(exc)))
        else:
            if "cw_pump" in notes and not regime.is_cw:
                out.append(RecordViolation("regime", "pulsed regime contradicts the cw_pump note"))
    elif "cw_pump" in notes:
        regime = PumpRegime.cw()
        provenance.append("regime: CW inferred from cw_pump note")
    else:
        regime = PumpRegime.pulsed()
        provenance.append("regime: pulsed assumed (not stated)")

    values = {}
    for name in PARAMETERS:
        if name in doc and doc[name] is not None:
            q, errs = _parse_quantity(name, doc[name])
            out.extend(errs)
            values[name] = q

    r_si_location = None
    if values.get("r_si") is not None:
        default = (MeasurementLocation.DETECTOR if "r_si_at_detectors" in notes
                   else MeasurementLocation.POST_SOURCE)
        loc = doc["r_si"].get("location")
        if loc is None:
            r_si_location = default
        else:
            try:
                r_si_location = MeasurementLocation.parse(loc)
            except DomainError as exc:
                out.append(RecordViolation("r_si", str(exc)))
            else:
                if ("r_si_at_detectors" in notes) != (r_si_location is MeasurementLocation.DETECTOR):
                    out.append(RecordViolation("r_si", "location contradicts the r_si_at_detectors note"))
                if r_si_location is MeasurementLocation.GENERATION:
                    out.append(RecordViolation("r_si", "R_si cannot be quoted at the generation location"))

    if out:
        return out
    return SourceRecord(key, year, platform, architecture, regime,
                        r_si_location=r_si_location, notes=notes,
                        platform_name=platform_name, architecture_name=architecture_name,
                        provenance=tuple(provenance), **values)


def _quantity_doc(name: str, q: Quantity) -> dict:
    kind = _KIND[name]
    unit = "fraction" if kind == "fraction" else kind.value
    d: dict = {"value": q.value}
    if unit:
        d["unit"] = unit
    if q.uncertainty:
        d["uncertainty"] = q.uncertainty
    if q.approximate:
        d["approximate"] = True
    if q.bound:
        d["bound"] = q.bound
    return d


def serialize_record(rec: SourceRecord) -> dict:
    doc: dict = {
        "citation_key": rec.citation_key,
        "year": rec.year,
        "platform": rec.platform_name or rec.platform.value,
        "architecture": rec.architecture_name or rec.architecture.value,
        "regime": rec.regime.to_dict(),
    }
    for name in PARAMETERS:
        q = rec.get(name)
        if q is not None:
            doc[name] = _quantity_doc(name, q)
    if rec.r_si is not None:
        doc["r_si"]["location"] = rec.r_si_location.name.lower()
    if rec.notes:
        doc["notes"] = sorted(rec.notes)
    if rec.provenance:
        doc["provenance"] = list(rec.provenance)
    return doc


class RegistryError(DomainError):
    def __init__(self, problems: dict[str, list[RecordViolation]]):
        self.problems = problems
        lines = [f"{src}: {v}" for src, vs in problems.items() for v in vs]
        super().__init__("; ".join(lines))


def load_directory(path: str | Path) -> tuple[list[SourceRecord], dict[str, list[RecordViolation]]]:
    """Ingest every ``*.json`` in a directory; returns records and per-file violations."""
    records, problems = [], {}
    for f in sorted(Path(path).glob("*.json")):
        try:
            doc = json.loads(f.read_text())
        except json.JSONDecodeError as exc:
            problems[f.name] = [RecordViolation("document", f"invalid JSON: {exc}")]
            continue
        res = ingest_record(doc)
        if isinstance(res, list):
            problems[f.name] = res
        else:
            records.append(res)
    return records, problems


DATASETS = ("table1", "table2")


def bundled_dataset(name: str = "table1") -> list[SourceRecord]:
    """Transcribed comparison tables shipped with the package, newest first."""
    if name not in DATASETS:
        raise DomainError(f"unknown dataset {name!r}; choose from {DATASETS}")
    root = resources.files("pairbench") / "data" / name
    records, problems = [], {}
    for entry in sorted(root.iterdir(), key=lambda e: e.name):
        if not entry.name.endswith(".json"):
            continue
        res = ingest_record(json.loads(entry.read_text()))
        if isinstance(res, list):
            problems[entry.name] = res
        else:
            records.append(res)
    if problems:
        raise RegistryError(problems)
    records.sort(key=lambda r: -r.year)
    return records


@dataclass(frozen=True)
class RegimeWarning:
    first: str
    second: str
    parameter: str

    def __str__(self):
        return (f"{self.parameter}: {self.first} and {self.second} use different pump regimes "
                "(CW vs pulsed); brightness is not directly comparable")


@dataclass
class ComparisonTable:
    rows: list[SourceRecord]
    columns: tuple[str, ...]
    sort_key: str
    gaps: list[tuple[str, str]] = field(default_factory=list)
    regime_warnings: list[RegimeWarning] = field(default_factory=list)


def compare(records: Sequence[SourceRecord], sort_key: str = "b1", regime_filter: str | None = None,
            columns: Sequence[str] = TABLE_I_COLUMNS, descending: bool = True) -> ComparisonTable:
    """Sort records on one parameter, listing gaps and cross-regime brightness pairs.

    Records lacking ``sort_key`` go after the sorted block in input order.
    """
    if not records:
        raise DomainError("compare needs at least one record")
    if sort_key not in PARAMETERS:
        raise DomainError(f"unknown sort key {sort_key!r}")
    if regime_filter is not None:
        kind = RegimeKind(regime_filter.lower())
        records = [r for r in records if r.regime.kind is kind]
    have = [r for r in records if r.get(sort_key) is not None]
    lack = [r for r in records if r.get(sort_key) is None]
    have.sort(key=lambda r: r.get(sort_key).value, reverse=descending)
    rows = have + lack
    gaps = [(r.citation_key, c) for r in rows for c in r.missing(columns)]
    warnings = []
    if sort_key in BRIGHTNESS_KEYS:
        for a, b in combinations(have, 2):
            if a.regime.kind is not b.regime.kind:
                warnings.append(RegimeWarning(a.label, b.label, sort_key))
    return ComparisonTable(rows, tuple(columns), sort_key, gaps, warnings)


def _clean(x: float) -> float:
    # drop binary noise from the fraction -> percent conversion
    return float(f"{x:.12g}")


def _render(name: str, q: Quantity) -> tuple[float, float]:
    if _KIND[name] == "fraction":
        return _clean(q.value * 100.0), _clean(q.uncertainty * 100.0)
    return q.value, q.uncertainty


def table_rows(table: ComparisonTable) -> list[list[str]]:
    """CSV-ready rows: fractions as percent, '-' for gaps, '≈' and bounds kept."""
    head = ["citation_key", "year", "platform", "architecture", "regime"]
    for c in table.columns:
        head += [c, f"{c}_err"]
    out = [head]
    for r in table.rows:
        row = [r.citation_key, str(r.year), r.platform_name or r.platform.value,
               r.architecture_name or r.architecture.value, r.regime.kind.value]
        for c in table.columns:
            q = r.get(c)
            if q is None:
                row += ["-", ""]
                continue
            v, e = _render(c, q)
            prefix = "~" if q.approximate else {"gt": ">", "lt": "<"}.get(q.bound, "")
            row += [f"{prefix}{v:.10g}", f"{e:.10g}" if e else ""]
        out.append(row)
    return out


def completeness_report(records: Sequence[SourceRecord], parameters: Sequence[str] = TABLE_I_COLUMNS,
                        bucket_years: int = 1) -> dict:
    """Fraction of records reporting each parameter, overall and per year bucket."""
    if not records:
        raise DomainError("completeness report needs at least one record")
    buckets: dict[int, list[SourceRecord]] = defaultdict(list)
    for r in records:
        buckets[r.year - r.year % bucket_years].append(r)
    report = {}
    for p in parameters:
        reported = sum(r.get(p) is not None for r in records)
        per = []
        for start in sorted(buckets):
            group = buckets[start]
            k = sum(r.get(p) is not None for r in group)
            per.append({"year": start, "reported": k, "missing": len(group) - k,
                        "total": len(group), "rate": k / len(group)})
        report[p] = {"reported": reported, "missing": len(records) - reported,
                     "total": len(records), "rate": reported / len(records), "by_year": per}
    return report


def timeline_export(records: Iterable[SourceRecord], parameter: str) -> list[tuple[int, float, float]]:
    """(year, value, uncertainty) points, oldest first; fractions rendered as percent."""
    if parameter not in TIMELINE_PARAMETERS:
        raise DomainError(f"timeline parameter must be one of {TIMELINE_PARAMETERS}")
    pts = []
    for r in records:
        q = r.get(parameter)
        if q is not None:
            v, e = _render(parameter, q)
            pts.append((r.year, v, e))
    pts.sort(key=lambda t: (t[0], t[1]))
    return pts
