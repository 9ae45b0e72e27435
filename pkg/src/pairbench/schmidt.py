"""Schmidt decomposition of discretised joint spectra.

The joint spectral amplitude is taken as the square root of the measured
intensity with a flat phase, so the purity reported here is what a
phase-free source with that JSI would have. Callers who know the phase can
build a :class:`JointAmplitude` directly.
"""
from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import DomainError, Quantity

LAMBDA_FLOOR = 1e-12
MIN_GRID_POINTS = 64


class SchmidtDecompositionError(RuntimeError):
    pass


def _check_axis(name, x):
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size == 0 or not np.all(np.isfinite(x)):
        raise DomainError(f"{name} must be a finite 1-d grid")
    if np.any(np.diff(x) <= 0):
        raise DomainError(f"{name} must be strictly increasing")
    return x


def trapezoid_weights(x: np.ndarray) -> np.ndarray:
    """Quadrature weights of the trapezoidal rule on a (possibly non-uniform) grid."""
    if x.size == 1:
        return np.ones(1)
    w = np.empty_like(x)
    d = np.diff(x)
    w[0] = d[0] / 2
    w[-1] = d[-1] / 2
    w[1:-1] = (d[:-1] + d[1:]) / 2
    return w


@dataclass(frozen=True, eq=False)
class JointSpectrum:
    omega_s: np.ndarray
    omega_i: np.ndarray
    intensity: np.ndarray

    def __post_init__(self):
        ws = _check_axis("omega_s", self.omega_s)
        wi = _check_axis("omega_i", self.omega_i)
        jsi = np.asarray(self.intensity, dtype=float)
        if jsi.shape != (ws.size, wi.size):
            raise DomainError(f"intensity shape {jsi.shape} does not match grids ({ws.size}, {wi.size})")
        if not np.all(np.isfinite(jsi)) or np.any(jsi < 0):
            raise DomainError("intensity must be finite and non-negative")
        if not np.any(jsi > 0):
            raise DomainError("intensity is zero everywhere")
        object.__setattr__(self, "omega_s", ws)
        object.__setattr__(self, "omega_i", wi)
        object.__setattr__(self, "intensity", jsi)


@dataclass(frozen=True, eq=False)
class JointAmplitude:
    """Complex amplitude on a grid, normalised so the weighted |A|^2 sums to one."""

    omega_s: np.ndarray
    omega_i: np.ndarray
    amplitude: np.ndarray

    @property
    def T(self) -> JointAmplitude:
        return JointAmplitude(self.omega_i, self.omega_s, self.amplitude.T)

    def weighted(self) -> np.ndarray:
        """Amplitude with sqrt quadrature weights folded in along both axes."""
        ws = np.sqrt(trapezoid_weights(self.omega_s))
        wi = np.sqrt(trapezoid_weights(self.omega_i))
        return ws[:, None] * self.amplitude * wi[None, :]


@dataclass(frozen=True, eq=False)
class SchmidtDecomposition:
    lambdas: np.ndarray

    @property
    def weights(self) -> np.ndarray:
        return self.lambdas ** 2

    @property
    def fundamental_weight(self) -> float:
        return float(self.lambdas[0] ** 2)

    @property
    def purity(self) -> float:
        return spectral_purity(self)

    @property
    def mode_count(self) -> float:
        return 1.0 / self.purity

    def to_dict(self) -> dict:
        return {
            "lambdas": self.lambdas.tolist(),
            "purity": self.purity,
            "mode_count": self.mode_count,
            "fundamental_weight": self.fundamental_weight,
        }


def amplitude_from_intensity(jsi: JointSpectrum) -> JointAmplitude:
    amp = np.sqrt(jsi.intensity)
    ws = trapezoid_weights(jsi.omega_s)
    wi = trapezoid_weights(jsi.omega_i)
    norm = math.sqrt(float(ws @ (amp ** 2) @ wi))
    if norm == 0:
        raise DomainError("amplitude has zero norm on this grid")
    return JointAmplitude(jsi.omega_s, jsi.omega_i, amp / norm)


def schmidt_decompose(amplitude: JointAmplitude | np.ndarray) -> SchmidtDecomposition:
    """Schmidt coefficients of a joint amplitude, via SVD.

    A bare matrix is treated as already carrying its quadrature weights.
    Coefficients below ``LAMBDA_FLOOR`` of the largest are discarded and the
    rest renormalised so that sum(lambda^2) == 1.
    """
    if isinstance(amplitude, JointAmplitude):
        m = amplitude.weighted()
    else:
        m = np.asarray(amplitude)
    if m.ndim != 2 or m.size == 0:
        raise DomainError("amplitude must be a non-empty matrix")
    if not np.all(np.isfinite(m)):
        raise SchmidtDecompositionError("amplitude contains non-finite entries")
    try:
        sv = np.linalg.svd(m, compute_uv=False)
    except np.linalg.LinAlgError as exc:
        fro = float(np.linalg.norm(m))
        raise SchmidtDecompositionError(
            f"SVD failed for {m.shape} matrix (Frobenius norm {fro:.3g}): {exc}") from exc
    if sv[0] == 0:
        raise DomainError("amplitude is identically zero")
    sv = sv[sv >= LAMBDA_FLOOR * sv[0]]
    return SchmidtDecomposition(sv / math.sqrt(float(sv @ sv)))


def spectral_purity(d: SchmidtDecomposition) -> float:
    p = d.lambdas ** 2
    return float(p @ p)


def useful_brightness(b_total: Quantity, d: SchmidtDecomposition) -> Quantity:
    """Brightness carried by the fundamental Schmidt mode."""
    if b_total.value < 0:
        raise DomainError("total brightness must be >= 0")
    return b_total.scaled(d.fundamental_weight)


def fidelity_decay(purity, n_gates):
    """Overall fidelity after ``n_gates`` gates, each of fidelity equal to the purity."""
    ps = np.asarray(purity, dtype=float)
    n = np.asarray(n_gates)
    if np.any(ps <= 0) or np.any(ps > 1):
        raise DomainError("purity must lie in (0, 1]")
    if np.any(n < 0):
        raise DomainError("gate count must be >= 0")
    out = ps ** n
    return float(out) if out.ndim == 0 else out


def gaussian_jsi(sigma_s: float, sigma_i: float, rho: float, n: int = 256, span: float = 8.0,
                 center_s: float = 0.0, center_i: float = 0.0) -> JointSpectrum:
    """Bivariate Gaussian JSI with marginal widths ``sigma_s``/``sigma_i`` and correlation ``rho``.

    Each axis covers ``center ± span * sigma`` with ``n`` points.
    """
    if not (sigma_s > 0 and sigma_i > 0):
        raise DomainError("sigmas must be > 0")
    if not -1 < rho < 1:
        raise DomainError("correlation must lie in (-1, 1)")
    if span < 4:
        raise DomainError("grid must cover at least ±4 sigma")
    if n < MIN_GRID_POINTS:
        warnings.warn(f"grid of {n} points per axis is coarse (< {MIN_GRID_POINTS}); purity may be inaccurate",
                      stacklevel=2)
    ws = center_s + np.linspace(-span, span, n) * sigma_s
    wi = center_i + np.linspace(-span, span, n) * sigma_i
    x = (ws - center_s)[:, None] / sigma_s
    y = (wi - center_i)[None, :] / sigma_i
    q = (x * x - 2 * rho * x * y + y * y) / (1 - rho * rho)
    return JointSpectrum(ws, wi, np.exp(-0.5 * q))


def gaussian_schmidt_weights(rho: float, k_max: int) -> np.ndarray:
    """Closed-form Schmidt weights lambda_k^2 of a flat-phase bivariate Gaussian.

    The weights are geometric, (1 - mu^2) mu^(2k), with
    mu^2 = (1 - s) / (1 + s) and s = sqrt(1 - rho_a^2), where rho_a is the
    amplitude correlation (equal to that of the intensity).
    """
    s = math.sqrt(1 - rho * rho)
    mu2 = (1 - s) / (1 + s)
    k = np.arange(k_max)
    return (1 - mu2) * mu2 ** k


def read_jsi(path: str | Path) -> JointSpectrum:
    """Load a JSI from JSON ({omega_s, omega_i, intensity}) or a CSV grid.

    In the CSV form the first row holds the idler axis (after one blank
    cell) and the first column holds the signal axis.
    """
    path = Path(path)
    if path.suffix.lower() == ".json":
        doc = json.loads(path.read_text())
        return JointSpectrum(np.asarray(doc["omega_s"], float), np.asarray(doc["omega_i"], float),
                             np.asarray(doc["intensity"], float))
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    wi = np.array([float(v) for v in rows[0][1:]])
    ws = np.array([float(r[0]) for r in rows[1:]])
    jsi = np.array([[float(v) for v in r[1:]] for r in rows[1:]])
    return JointSpectrum(ws, wi, jsi)


def write_jsi_csv(jsi: JointSpectrum, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([""] + [repr(float(v)) for v in jsi.omega_i])
        for ws, row in zip(jsi.omega_s, jsi.intensity):
            w.writerow([repr(float(ws))] + [repr(float(v)) for v in row])
