"""Pump spectra, microring overlap and average-power referencing.

Frequencies are angular (rad/s). Spectral fields are normalised so that
sum(|E(w)|^2) dw is the pulse energy relative to a unit-energy reference;
temporal profiles carry the same energy, sum(|E(t)|^2) dt.

The ring is a single Lorentzian all-pass resonance. No resonant field
enhancement is applied: the intracavity profile is the waveguide field
filtered by the ring's coupling amplitude, i.e. overlap-limited power only.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import DomainError

MIN_HALF_SPAN_FWHM = 8.0
_UNIFORM_RTOL = 1e-9


class PulseShape(str, Enum):
    GAUSSIAN = "gaussian"


class ReferenceLocation(str, Enum):
    WAVEGUIDE = "waveguide"
    INTRACAVITY = "intracavity"


def _require_uniform(omega: np.ndarray) -> float:
    if omega.ndim != 1 or omega.size < 2:
        raise DomainError("grid must be 1-d with at least two points")
    d = np.diff(omega)
    step = (omega[-1] - omega[0]) / (omega.size - 1)
    if not step > 0 or np.max(np.abs(d - step)) > _UNIFORM_RTOL * abs(step) * omega.size:
        raise DomainError("grid must be uniform and increasing")
    return float(step)


@dataclass(frozen=True, eq=False)
class SpectralProfile:
    omega: np.ndarray
    field: np.ndarray

    def __post_init__(self):
        omega = np.asarray(self.omega, dtype=float)
        fld = np.asarray(self.field, dtype=complex)
        if fld.shape != omega.shape:
            raise DomainError("field and grid lengths differ")
        if not (np.all(np.isfinite(omega)) and np.all(np.isfinite(fld))):
            raise DomainError("spectral profile must be finite")
        _require_uniform(omega)
        object.__setattr__(self, "omega", omega)
        object.__setattr__(self, "field", fld)

    @property
    def step(self) -> float:
        return float(self.omega[1] - self.omega[0])

    @property
    def density(self) -> np.ndarray:
        return np.abs(self.field) ** 2

    def energy(self) -> float:
        return float(np.sum(self.density) * self.step)


@dataclass(frozen=True)
class RingTransmission:
    """Lorentzian power-transmission dip: T(w) = 1 - (1 - extinction) L(w)."""

    center: float
    linewidth: float  # FWHM, rad/s
    extinction: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.linewidth) and self.linewidth > 0):
            raise DomainError("ring linewidth must be > 0")
        if not 0 <= self.extinction < 1:
            raise DomainError("extinction must lie in [0, 1)")

    def lorentzian(self, omega) -> np.ndarray:
        hw = self.linewidth / 2
        return hw * hw / ((np.asarray(omega) - self.center) ** 2 + hw * hw)

    def transmission(self, omega) -> np.ndarray:
        return 1.0 - (1.0 - self.extinction) * self.lorentzian(omega)

    def coupled_fraction(self, omega, step: float | None = None) -> np.ndarray:
        """Fraction 1 - T of power coupled into the ring.

        With ``step`` the Lorentzian is averaged over each grid bin of that
        width, so resonances narrower than the grid spacing still give the
        correct (vanishing) overlap.
        """
        omega = np.asarray(omega, dtype=float)
        if step is None:
            lor = self.lorentzian(omega)
        else:
            hw = self.linewidth / 2
            lo = np.arctan((omega - step / 2 - self.center) / hw)
            hi = np.arctan((omega + step / 2 - self.center) / hw)
            lor = hw * (hi - lo) / step
        return (1.0 - self.extinction) * lor


@dataclass(frozen=True, eq=False)
class TemporalProfile:
    time: np.ndarray
    power: np.ndarray

    @property
    def step(self) -> float:
        return float(self.time[1] - self.time[0])

    def energy(self) -> float:
        return float(np.sum(self.power) * self.step)


def frequency_grid(center: float, half_span: float, n: int = 4096) -> np.ndarray:
    return center + np.linspace(-half_span, half_span, n)


def pump_spectrum(center: float, fwhm: float, omega: np.ndarray | None = None,
                  shape: PulseShape = PulseShape.GAUSSIAN, peak_density: float | None = None,
                  n: int = 4096, half_span: float | None = None) -> SpectralProfile:
    """Gaussian pump spectrum whose |E(w)|^2 has FWHM ``fwhm``.

    By default the profile has unit energy. With ``peak_density`` the peak of
    |E(w)|^2 is fixed instead, which is how two linewidths cut from the same
    laser compare. Without an explicit grid one spanning ±10 FWHM is built.
    """
    if not (math.isfinite(fwhm) and fwhm > 0):
        raise DomainError("pump FWHM must be > 0")
    if PulseShape(shape) is not PulseShape.GAUSSIAN:
        raise DomainError(f"unsupported pulse shape {shape}")
    if omega is None:
        omega = frequency_grid(center, half_span or 10.0 * fwhm, n)
    omega = np.asarray(omega, dtype=float)
    _require_uniform(omega)
    if min(center - omega[0], omega[-1] - center) < MIN_HALF_SPAN_FWHM * fwhm * (1 - 1e-12):
        raise DomainError(f"grid must span at least ±{MIN_HALF_SPAN_FWHM:g} FWHM around the pump centre")
    # |E|^2 = exp(-4 ln2 (w - w0)^2 / fwhm^2)
    density = np.exp(-4.0 * math.log(2.0) * ((omega - center) / fwhm) ** 2)
    step = omega[1] - omega[0]
    if peak_density is None:
        density = density / (np.sum(density) * step)
    else:
        density = density * peak_density
    return SpectralProfile(omega, np.sqrt(density).astype(complex))


def intracavity_spectrum(pump: SpectralProfile, ring: RingTransmission) -> SpectralProfile:
    """Pump field inside the ring: waveguide field times sqrt(1 - T(w))."""
    if not pump.omega[0] <= ring.center <= pump.omega[-1]:
        raise DomainError("ring resonance lies outside the pump grid")
    coupling = np.sqrt(ring.coupled_fraction(pump.omega, pump.step))
    return SpectralProfile(pump.omega, pump.field * coupling)


def temporal_profile(s: SpectralProfile) -> TemporalProfile:
    """Temporal power |E(t)|^2 of a spectral field (zero spectral phase => centred pulse).

    Uses the symmetric 1/sqrt(2 pi) transform convention so that the time
    and frequency energies agree.
    """
    dw = _require_uniform(s.omega)
    n = s.omega.size
    dt = 2.0 * math.pi / (n * dw)
    et = np.fft.fftshift(np.fft.ifft(s.field)) * n * dw / math.sqrt(2.0 * math.pi)
    t = (np.arange(n) - n // 2) * dt
    return TemporalProfile(t, np.abs(et) ** 2)


def average_power(t: TemporalProfile, rep_rate: float, pulse_energy: float) -> float:
    """Average power in mW for a pulse train at ``rep_rate`` (Hz).

    ``pulse_energy`` (J) is the energy of the unit-energy reference pulse;
    the profile's own relative energy scales it, so filtered (intracavity)
    profiles give proportionally lower average power.
    """
    if not rep_rate > 0:
        raise DomainError("repetition rate must be > 0")
    return 1e3 * pulse_energy * t.energy() * rep_rate


def fwhm(x: np.ndarray, y: np.ndarray) -> float:
    """Full width at half maximum of a single-peaked curve, by linear interpolation."""
    y = np.asarray(y, dtype=float)
    k = int(np.argmax(y))
    half = y[k] / 2
    above = np.nonzero(y >= half)[0]
    lo, hi = above[0], above[-1]
    if lo == 0 or hi == y.size - 1:
        raise DomainError("curve does not fall to half maximum inside the grid")

    def cross(i0, i1):
        return x[i0] + (half - y[i0]) * (x[i1] - x[i0]) / (y[i1] - y[i0])

    return float(cross(hi, hi + 1) - cross(lo - 1, lo))


@dataclass(frozen=True)
class PumpConfig:
    """One pump profile driving one ring, at a fixed repetition rate."""

    pump_fwhm: float
    ring: RingTransmission
    rep_rate: float = 100e6
    pump_center: float | None = None
    peak_density: float | None = None
    n: int = 4096
    half_span: float | None = None

    def waveguide(self) -> SpectralProfile:
        center = self.ring.center if self.pump_center is None else self.pump_center
        span = self.half_span or 10.0 * max(self.pump_fwhm, abs(center - self.ring.center) / 5)
        omega = frequency_grid(center, span, self.n)
        return pump_spectrum(center, self.pump_fwhm, omega, peak_density=self.peak_density)

    def intracavity_fraction(self) -> float:
        """Intracavity over waveguide average power for this pump profile."""
        wg = self.waveguide()
        cav = intracavity_spectrum(wg, self.ring)
        p_wg = average_power(temporal_profile(wg), self.rep_rate, 1.0)
        p_cav = average_power(temporal_profile(cav), self.rep_rate, 1.0)
        return p_cav / p_wg


def simulate_coincidence_curve(b1: float, config: PumpConfig, powers: Sequence[float],
                               location: ReferenceLocation | str) -> list[tuple[float, float]]:
    """Points (P_ref^2, R_si) for a sweep of waveguide average powers (mW).

    Pairs are generated by the intracavity power, R_si = B1 P_cav^2 with B1
    in Mcts s^-1 mW^-2. ``location`` picks which average power labels the
    x axis: the side-coupled waveguide's or the ring's.
    """
    location = ReferenceLocation(location)
    if b1 < 0:
        raise DomainError("B1 must be >= 0")
    eta = config.intracavity_fraction()
    out = []
    for p_wg in powers:
        p_cav = eta * p_wg
        r_si = b1 * 1e6 * p_cav * p_cav
        p_ref = p_cav if location is ReferenceLocation.INTRACAVITY else p_wg
        out.append((p_ref * p_ref, r_si))
    return out


def write_fig_datasets(configs: Sequence[PumpConfig], powers: Sequence[float], b1: float,
                       pulse_energy: float, outdir: str | Path, prefix: str = "pumpsim") -> list[Path]:
    """Write spectral, temporal and R_si-vs-P^2 datasets for a set of pump profiles.

    All configs must share the frequency grid of the first one.
    """
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    wgs = [c.waveguide() for c in configs]
    cavs = [intracavity_spectrum(w, c.ring) for w, c in zip(wgs, configs)]
    omega = wgs[0].omega
    for w in wgs[1:]:
        if w.omega.shape != omega.shape or not np.allclose(w.omega, omega, rtol=0, atol=1e-12 * abs(omega).max()):
            raise DomainError("pump profiles must share one frequency grid")
    paths = [outdir / f"{prefix}_spectra.csv", outdir / f"{prefix}_temporal.csv",
             outdir / f"{prefix}_coincidences.csv"]

    with open(paths[0], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        head = ["omega_rad_s", "ring_transmission"]
        for k in range(len(configs)):
            head += [f"waveguide_{k}", f"intracavity_{k}"]
        w.writerow(head)
        trans = configs[0].ring.transmission(omega)
        for j in range(omega.size):
            row = [omega[j], trans[j]]
            for wg, cav in zip(wgs, cavs):
                row += [wg.density[j], cav.density[j]]
            w.writerow([f"{v:.12g}" for v in row])

    temps = [(temporal_profile(wg), temporal_profile(cav)) for wg, cav in zip(wgs, cavs)]
    with open(paths[1], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        head = ["time_s"]
        for k in range(len(configs)):
            head += [f"waveguide_{k}", f"intracavity_{k}"]
        w.writerow(head)
        t = temps[0][0].time
        for j in range(t.size):
            row = [t[j]]
            for a, b in temps:
                row += [a.power[j], b.power[j]]
            w.writerow([f"{v:.12g}" for v in row])
        w.writerow([])
        w.writerow(["profile", "p_avg_waveguide_mw", "p_avg_intracavity_mw"])
        for k, (c, (a, b)) in enumerate(zip(configs, temps)):
            w.writerow([k, f"{average_power(a, c.rep_rate, pulse_energy):.12g}",
                        f"{average_power(b, c.rep_rate, pulse_energy):.12g}"])

    with open(paths[2], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["profile", "location", "p_avg_sq_mw2", "r_si_cps"])
        for k, c in enumerate(configs):
            for loc in ReferenceLocation:
                for p2, r in simulate_coincidence_curve(b1, c, powers, loc):
                    w.writerow([k, loc.value, f"{p2:.12g}", f"{r:.12g}"])
    return paths
