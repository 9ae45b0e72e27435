"""Moving brightness and heralding efficiency between measurement locations.

Ring escape is a pair-level loss for brightness (both photons must leave
the ring, so it enters squared) and a single-photon loss for heralding
(linear). Path and detector efficiencies act per arm.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any

from .core import (DomainError, INTRINSIC_HERALDING, MeasurementLocation, Quantity, Unit,
                   db_to_transmittance)

SIGMA_THRESHOLD = 2.0
BARE_RELATIVE_TOLERANCE = 0.05
APPROXIMATE_RELATIVE_UNCERTAINTY = 0.10


class InconsistentBudgetError(DomainError):
    pass


class ValueKind(str, Enum):
    BRIGHTNESS = "brightness"
    HERALDING_EFFICIENCY = "heralding_efficiency"


@dataclass(frozen=True)
class LocatedValue:
    value: Quantity
    location: MeasurementLocation
    kind: ValueKind

    def __post_init__(self):
        if self.kind is ValueKind.HERALDING_EFFICIENCY:
            if self.location is MeasurementLocation.GENERATION:
                raise DomainError(f"H1 is fixed at {INTRINSIC_HERALDING:g} and cannot be stored")
            if not 0 < self.value.value <= 1:
                raise DomainError(f"heralding efficiency must lie in (0, 1], got {self.value.value}")

    @property
    def label(self) -> str:
        prefix = "B" if self.kind is ValueKind.BRIGHTNESS else "H"
        return f"{prefix}{int(self.location)}"


_BUDGET_FIELDS = ("ring_escape", "path_s", "path_i", "detector_s", "detector_i")


@dataclass(frozen=True)
class LossBudget:
    ring_escape: float = 1.0
    path_s: float = 1.0
    path_i: float = 1.0
    detector_s: float = 1.0
    detector_i: float = 1.0

    def __post_init__(self):
        for name in _BUDGET_FIELDS:
            v = getattr(self, name)
            if not (math.isfinite(v) and 0 < v <= 1):
                raise DomainError(f"{name} must lie in (0, 1], got {v}")

    @property
    def arm_s(self) -> float:
        return self.path_s * self.detector_s

    @property
    def arm_i(self) -> float:
        return self.path_i * self.detector_i

    @classmethod
    def from_dict(cls, doc: dict) -> LossBudget:
        """Build from linear fractions or dB losses (``<name>_db`` keys)."""
        kw = {}
        for name in _BUDGET_FIELDS:
            lin, db = doc.get(name), doc.get(f"{name}_db")
            if lin is not None and db is not None:
                raise DomainError(f"{name} given both as fraction and in dB")
            if db is not None:
                kw[name] = db_to_transmittance(float(db))
            elif lin is not None:
                kw[name] = float(lin)
        extra = set(doc) - set(_BUDGET_FIELDS) - {f"{n}_db" for n in _BUDGET_FIELDS}
        if extra:
            raise DomainError(f"unknown budget keys {sorted(extra)}")
        return cls(**kw)

    @classmethod
    def load(cls, path: str | Path) -> LossBudget:
        return cls.from_dict(json.loads(Path(path).read_text()))


def forward_brightness(b1: Quantity, budget: LossBudget) -> tuple[Quantity, Quantity]:
    """(B2, B3) from a fitted B1."""
    b2 = b1.scaled(budget.ring_escape ** 2)
    return b2, b2.scaled(budget.arm_s * budget.arm_i)


def forward_heralding(budget: LossBudget) -> tuple[float, float, float]:
    """(H2, H3_s, H3_i) implied by a budget, with H1 = 1 at generation."""
    h2 = INTRINSIC_HERALDING * budget.ring_escape
    return h2, h2 * budget.arm_s, h2 * budget.arm_i


def back_propagate_brightness(b3: Quantity, budget: LossBudget) -> Quantity:
    """B2 recovered from a detector-level B3 by dividing out both arms."""
    arms = budget.arm_s * budget.arm_i
    if not arms > 0:
        raise DomainError("arm efficiencies must be > 0")
    return b3.scaled(1.0 / arms)


def heralding_correct(h3: float, arm_transmittance: float) -> float:
    """H2 estimated from H3 by removing one arm's losses."""
    if not 0 < arm_transmittance <= 1:
        raise DomainError("arm transmittance must lie in (0, 1]")
    h2 = h3 / arm_transmittance
    if h2 > 1 + 1e-12:
        raise InconsistentBudgetError(
            f"H3={h3:g} with arm transmittance {arm_transmittance:g} gives H2={h2:g} > 1; "
            "the loss budget understates the arm transmittance")
    return min(h2, 1.0)


def _sigma(q: Quantity) -> tuple[float, bool]:
    """Uncertainty used for checks; tables often give approximate values without error."""
    if q.uncertainty > 0:
        return q.uncertainty, True
    if q.approximate:
        return APPROXIMATE_RELATIVE_UNCERTAINTY * abs(q.value), True
    return 0.0, False


@dataclass(frozen=True)
class Conflict:
    parameter: str
    reported: float
    derived: float
    tolerance: float
    reason: str

    def to_dict(self) -> dict:
        return {"parameter": self.parameter, "reported": self.reported, "derived": self.derived,
                "tolerance": self.tolerance, "reason": self.reason}


@dataclass
class ConsistencyReport:
    derived: dict[str, LocatedValue] = field(default_factory=dict)
    conflicts: list[Conflict] = field(default_factory=list)
    underdetermined: list[str] = field(default_factory=list)

    @property
    def status(self) -> str:
        if self.conflicts:
            return "inconsistent"
        if self.underdetermined and not self.derived:
            return "underdetermined"
        return "consistent"

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "derived": {k: {"value": v.value.value, "uncertainty": v.value.uncertainty,
                            "location": v.location.name.lower(), "kind": v.kind.value}
                        for k, v in self.derived.items()},
            "conflicts": [c.to_dict() for c in self.conflicts],
            "underdetermined": list(self.underdetermined),
        }


def _compare(report: ConsistencyReport, name: str, reported: Quantity, derived: Quantity, how: str):
    s1, has1 = _sigma(reported)
    s2, has2 = _sigma(derived)
    diff = abs(reported.value - derived.value)
    if has1 or has2:
        tol = SIGMA_THRESHOLD * math.hypot(s1, s2)
    else:
        tol = BARE_RELATIVE_TOLERANCE * max(abs(reported.value), abs(derived.value))
    if diff > tol:
        report.conflicts.append(Conflict(name, reported.value, derived.value, tol,
                                         f"reported {name} disagrees with value {how}"))


def _ratio(num: Quantity, den: Quantity, power: int = 1) -> Quantity:
    """(num/den)^power with first-order relative uncertainty."""
    s1, _ = _sigma(num)
    s2, _ = _sigma(den)
    v = (num.value / den.value) ** power
    rel = abs(power) * math.hypot(s1 / num.value if num.value else 0.0, s2 / den.value)
    return Quantity(v, abs(v) * rel, num.unit)


def consistency_report(record: Any, budget: LossBudget | None = None) -> ConsistencyReport:
    """Cross-check the B/H values of a record against each other and a budget.

    ``record`` is anything with optional ``b1, b2, b3, h2, h3`` Quantity
    attributes (efficiencies as fractions). Without a budget the per-arm
    transmittance is inferred from H3/H2, assuming both arms alike.
    Missing values are filled where derivable; nothing is invented.
    """
    get = lambda n: getattr(record, n, None)  # noqa: E731
    b1, b2, b3, h2, h3 = (get(n) for n in ("b1", "b2", "b3", "h2", "h3"))
    rep = ConsistencyReport()
    POST, DET = MeasurementLocation.POST_SOURCE, MeasurementLocation.DETECTOR
    B, H = ValueKind.BRIGHTNESS, ValueKind.HERALDING_EFFICIENCY

    # monotone loss along the path
    order = [("B1", b1), ("B2", b2), ("B3", b3)]
    present = [(n, q) for n, q in order if q is not None]
    for (n_hi, q_hi), (n_lo, q_lo) in zip(present, present[1:]):
        s_hi, _ = _sigma(q_hi)
        s_lo, _ = _sigma(q_lo)
        if q_lo.value > q_hi.value + SIGMA_THRESHOLD * math.hypot(s_hi, s_lo):
            rep.conflicts.append(Conflict(n_lo, q_lo.value, q_hi.value, 0.0,
                                          f"{n_lo} exceeds {n_hi} despite photon loss"))
    if h2 is not None and h3 is not None and h3.value > h2.value:
        rep.conflicts.append(Conflict("H3", h3.value, h2.value, 0.0, "H3 exceeds H2 despite photon loss"))

    if budget is not None:
        if b1 is not None:
            fb2, fb3 = forward_brightness(b1, budget)
            for name, rep_q, der in (("B2", b2, fb2), ("B3", b3, fb3)):
                if rep_q is None:
                    rep.derived[name] = LocatedValue(der, POST if name == "B2" else DET, B)
                else:
                    _compare(rep, name, rep_q, der, "forward-propagated from B1")
        if b3 is not None:
            bb2 = back_propagate_brightness(b3, budget)
            if b2 is not None:
                _compare(rep, "B2", b2, bb2, "back-propagated from B3")
            elif b1 is None:
                rep.derived["B2"] = LocatedValue(bb2, POST, B)
            else:
                # both routes available: they must agree
                _compare(rep, "B2", rep.derived["B2"].value, bb2, "back-propagated from B3")
        if h3 is not None:
            arm = math.sqrt(budget.arm_s * budget.arm_i)
            try:
                ch2 = heralding_correct(h3.value, arm)
            except InconsistentBudgetError as exc:
                rep.conflicts.append(Conflict("H2", h2.value if h2 else math.nan, h3.value / arm, 0.0, str(exc)))
            else:
                dh2 = Quantity(ch2, h3.uncertainty / arm, Unit.DIMENSIONLESS)
                if h2 is not None:
                    _compare(rep, "H2", h2, dh2, "corrected from H3 with the budget")
                else:
                    rep.derived["H2"] = LocatedValue(dh2, POST, H)
        elif h2 is not None:
            rep.derived["H3"] = LocatedValue(Quantity(h2.value * math.sqrt(budget.arm_s * budget.arm_i)),
                                             DET, H)
        return rep

    # No budget: the only handle on arm loss is the heralding ratio H3/H2.
    if h2 is not None and h3 is not None and h3.value <= h2.value:
        arm = _ratio(h3, h2)
        if b3 is not None:
            bb2 = _ratio(b3, Quantity(arm.value ** 2, 2 * arm.uncertainty * arm.value, b3.unit))
            if b2 is not None:
                _compare(rep, "B2", b2, bb2, "back-propagated from B3 using H3/H2 per arm")
            else:
                rep.derived["B2"] = LocatedValue(bb2, POST, B)
        elif b2 is not None:
            v = b2.value * arm.value ** 2
            rel = math.hypot(_sigma(b2)[0] / b2.value, 2 * arm.relative_uncertainty)
            rep.derived["B3"] = LocatedValue(Quantity(v, v * rel, b2.unit), DET, B)
    else:
        for name, q in (("B2", b2), ("B3", b3)):
            if q is None:
                rep.underdetermined.append(name)
    if not rep.derived and not rep.conflicts and not rep.underdetermined:
        rep.underdetermined.append("no loss information")
    return rep
