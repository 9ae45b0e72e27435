"""Count-rate model for pair sources and its least-squares inversion.

The model relates singles and coincidence rates to the average pump power::

    R_s  = H_s (B1 P^2 + beta_s P) + D_s
    R_i  = H_i (B1 P^2 + beta_i P) + D_i
    R_si = H_s H_i B1 P^2 + R_s R_i tau

B1 is carried in Mcts s^-1 mW^-2 and converted to cts s^-1 mW^-2 inside the
model. Accidentals are always evaluated from the *predicted* singles so the
model stays a pure function of its parameters.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .core import (CountRateSeries, DomainError, PumpRegime, ValidatedSeries,
                   validate_series)

MCTS = 1e6
PARAM_NAMES = ("B1", "H3_s", "H3_i", "beta_s", "beta_i", "R_DC_s", "R_DC_i")
_EFFICIENCIES = ("H3_s", "H3_i")
_BOUNDED_AT_ZERO = ("beta_s", "beta_i", "R_DC_s", "R_DC_i")
_H_MAX = 1.0 - 1e-12
MAX_MAPPED_STEP = 1.0
# Weighted-residual change below which a term driven to zero counts as on its bound.
BOUND_TOL = 1e-6


class SeriesValidationError(DomainError):
    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(str(v) for v in self.violations))


class DegenerateFitError(RuntimeError):
    """The Jacobian is rank deficient; ``parameters`` lists the unidentifiable ones."""

    def __init__(self, parameters: Sequence[str], singular_values: np.ndarray):
        self.parameters = tuple(parameters)
        self.singular_values = singular_values
        super().__init__(f"degenerate fit: unidentifiable parameters {', '.join(self.parameters)}")


@dataclass(frozen=True)
class RateModelParams:
    B1: float          # Mcts s^-1 mW^-2
    H3_s: float
    H3_i: float
    beta_s: float = 0.0  # cts s^-1 mW^-1
    beta_i: float = 0.0
    R_DC_s: float = 0.0  # cts/s
    R_DC_i: float = 0.0

    def __post_init__(self):
        vals = self.as_array()
        if not np.all(np.isfinite(vals)):
            raise DomainError(f"non-finite model parameter in {self}")
        if not self.B1 > 0:
            raise DomainError(f"B1 must be > 0, got {self.B1}")
        for name in _EFFICIENCIES:
            h = getattr(self, name)
            if not 0 < h <= 1:
                raise DomainError(f"{name} must lie in (0, 1], got {h}")
        for name in ("beta_s", "beta_i", "R_DC_s", "R_DC_i"):
            if getattr(self, name) < 0:
                raise DomainError(f"{name} must be >= 0, got {getattr(self, name)}")

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in PARAM_NAMES], dtype=float)

    @classmethod
    def from_array(cls, x) -> RateModelParams:
        return cls(*(float(v) for v in x))

    def to_dict(self) -> dict:
        return asdict(self)


def _model(x: np.ndarray, p: np.ndarray, tau: float):
    """Rates and their Jacobian w.r.t. the 7 physical parameters at powers ``p``."""
    B1, hs, hi, bs, bi, ds, di = x
    b = B1 * MCTS
    p2 = p * p
    pair_s = b * p2 + bs * p
    pair_i = b * p2 + bi * p
    rs = hs * pair_s + ds
    ri = hi * pair_i + di
    pairs = hs * hi * b * p2
    rsi = pairs + rs * ri * tau

    n = p.size
    js = np.zeros((n, 7))
    ji = np.zeros((n, 7))
    jc = np.zeros((n, 7))
    js[:, 0] = hs * MCTS * p2
    js[:, 1] = pair_s
    js[:, 3] = hs * p
    js[:, 5] = 1.0
    ji[:, 0] = hi * MCTS * p2
    ji[:, 2] = pair_i
    ji[:, 4] = hi * p
    ji[:, 6] = 1.0
    jc[:, 0] = hs * hi * MCTS * p2
    jc[:, 1] = hi * b * p2
    jc[:, 2] = hs * b * p2
    jc += tau * (js * ri[:, None] + ji * rs[:, None])
    return (rs, ri, rsi), np.vstack([js, ji, jc])


def predict_rates(params: RateModelParams, p_avg, tau: float):
    """Predicted (R_s, R_i, R_si) in cts/s at average pump power ``p_avg`` (mW).

    ``p_avg`` may be a scalar or an array.
    """
    p = np.asarray(p_avg, dtype=float)
    if np.any(~np.isfinite(p)) or np.any(p < 0):
        raise DomainError("pump power must be finite and >= 0")
    if not (math.isfinite(tau) and tau > 0):
        raise DomainError(f"tau must be > 0, got {tau}")
    (rs, ri, rsi), _ = _model(params.as_array(), np.atleast_1d(p), tau)
    if p.ndim == 0:
        return float(rs[0]), float(ri[0]), float(rsi[0])
    return rs, ri, rsi


def accidentals(r_s, r_i, tau: float):
    """Accidental coincidence rate R_s R_i tau."""
    if np.any(np.asarray(r_s) < 0) or np.any(np.asarray(r_i) < 0):
        raise DomainError("rates must be >= 0")
    if not tau > 0:
        raise DomainError(f"tau must be > 0, got {tau}")
    return r_s * r_i * tau


@dataclass(frozen=True)
class CARResult:
    value: float
    practically_resolvable: bool

    def __float__(self):
        return self.value


CAR_THRESHOLD = 10.0


def car(r_si: float, r_acc: float) -> CARResult:
    """Coincidence-to-accidental ratio with the CAR > 10 resolvability flag."""
    if r_si < 0 or r_acc < 0:
        raise DomainError("rates must be >= 0")
    if r_acc == 0:
        return CARResult(math.inf, True)
    value = r_si / r_acc
    return CARResult(value, value > CAR_THRESHOLD)


def car_curve(params: RateModelParams, p_avg, tau: float) -> np.ndarray:
    """CAR predicted by the model across a power sweep."""
    rs, ri, rsi = predict_rates(params, np.asarray(p_avg, dtype=float), tau)
    return rsi / accidentals(rs, ri, tau)


def klyshko_efficiency(r_si: float, r_heralding_arm: float, accidentals: float = 0.0) -> float:
    """System heralding efficiency: coincidences over singles of the heralding arm.

    This is a system-level ratio and still contains dark counts and noise
    photons unless they are removed beforehand; pass ``accidentals`` to
    subtract the accidental rate from ``r_si`` first.
    """
    if not r_heralding_arm > 0:
        raise DomainError("heralding-arm rate must be > 0")
    return (r_si - accidentals) / r_heralding_arm


def synthesize_series(params: RateModelParams, powers, tau: float, integration_time: float = 1.0,
                      seed=0, noiseless: bool = False,
                      regime: PumpRegime | None = None) -> CountRateSeries:
    """Draw a synthetic power sweep from the rate model.

    Counts at each power are Poisson with mean predicted rate times
    ``integration_time`` and are converted back to rates. ``noiseless``
    returns the model rates themselves.
    """
    p = np.asarray(powers, dtype=float)
    if p.ndim != 1 or np.any(np.diff(p) <= 0):
        raise DomainError("powers must be a strictly increasing 1-d sequence")
    rs, ri, rsi = predict_rates(params, p, tau)
    if not noiseless:
        if not integration_time > 0:
            raise DomainError("integration_time must be > 0")
        rng = np.random.default_rng(seed)
        rs, ri, rsi = (rng.poisson(r * integration_time) / integration_time for r in (rs, ri, rsi))
    return CountRateSeries(tuple(p.tolist()), tuple(rs.tolist()), tuple(ri.tolist()),
                           tuple(rsi.tolist()), float(tau), regime or PumpRegime.pulsed())


@dataclass(frozen=True)
class FitOptions:
    gtol: float = 1e-10
    max_iterations: int = 200
    integration_time: float = 1.0
    # parameter name -> value held fixed during the fit
    fixed: Mapping[str, float] = field(default_factory=dict)
    rcond: float = 1e-12


@dataclass(frozen=True)
class FitResult:
    params: RateModelParams
    covariance: np.ndarray
    residual_norm: float
    iterations: int
    converged: bool
    gradient_norm: float
    free: tuple[str, ...] = PARAM_NAMES
    at_bound: tuple[str, ...] = ()

    @property
    def stderr(self) -> dict[str, float]:
        d = np.sqrt(np.clip(np.diag(self.covariance), 0, None))
        return dict(zip(PARAM_NAMES, d.tolist()))

    def to_dict(self) -> dict:
        return {
            "params": self.params.to_dict(),
            "stderr": self.stderr,
            "covariance": self.covariance.tolist(),
            "residual_norm": self.residual_norm,
            "convergence": {
                "converged": self.converged,
                "iterations": self.iterations,
                "gradient_norm": self.gradient_norm,
                "free_parameters": list(self.free),
                "at_bound": list(self.at_bound),
            },
        }


# Positive quantities are fitted as log(x), efficiencies as logit(h); this
# keeps every trial point inside the parameter domain.
def _to_internal(name: str, v: float) -> float:
    if name in _EFFICIENCIES:
        v = min(max(v, 1e-12), _H_MAX)
        return math.log(v / (1.0 - v))
    return math.log(max(v, 1e-300))


def _from_internal(name: str, t: np.ndarray):
    if name in _EFFICIENCIES:
        return 1.0 / (1.0 + np.exp(-t))
    return np.exp(t)


def _chain(name: str, v: float) -> float:
    return v * (1.0 - v) if name in _EFFICIENCIES else v


def initial_guess(series: CountRateSeries) -> RateModelParams:
    """Closed-form starting point from weighted polynomial fits.

    Singles are fitted as a P^2 + b P + c, and coincidences with measured
    accidentals removed as d P^2. The products a_s = H_s B1, a_i = H_i B1 and
    d = H_s H_i B1 then invert to B1 = a_s a_i / d, H_s = d / a_i,
    H_i = d / a_s.
    """
    p = np.asarray(series.p_avg)
    rs, ri, rsi = (np.asarray(v) for v in (series.r_s, series.r_i, series.r_si))

    def polyfit(y, cols):
        w = 1.0 / np.sqrt(np.maximum(y, 1.0))
        A = np.column_stack(cols) * w[:, None]
        return np.linalg.lstsq(A, y * w, rcond=None)[0]

    basis = [p * p, p, np.ones_like(p)]
    a_s, b_s, c_s = polyfit(rs, basis)
    a_i, b_i, c_i = polyfit(ri, basis)
    (d,) = polyfit(rsi - rs * ri * series.tau, [p * p])

    tiny = 1e-300
    a_s, a_i = max(a_s, tiny), max(a_i, tiny)
    # Without a resolvable pair term keep d small but finite relative to the singles.
    d = min(max(d, 1e-12 * min(a_s, a_i)), a_s, a_i)
    hs = min(max(d / a_i, 1e-9), 0.999999)
    hi = min(max(d / a_s, 1e-9), 0.999999)
    b1 = max(a_s / hs, a_i / hi, a_s * a_i / d) / MCTS
    # Noise and dark terms must stay strictly positive for the log mapping.
    floor_beta = 1e-6 * b1 * MCTS * p[0]
    floor_dc = 1e-6 * max(np.min(rs), np.min(ri), 1.0)
    return RateModelParams(
        B1=float(min(b1, 1e30)),
        H3_s=float(hs), H3_i=float(hi),
        beta_s=float(max(b_s / hs, floor_beta)), beta_i=float(max(b_i / hi, floor_beta)),
        R_DC_s=float(max(c_s, floor_dc)), R_DC_i=float(max(c_i, floor_dc)),
    )


def _identify_degenerate(jac: np.ndarray, names: Sequence[str], rcond: float):
    scale = np.linalg.norm(jac, axis=0)
    colmax = scale.max() if scale.size else 0.0
    bad = [n for n, s in zip(names, scale) if not s > rcond * colmax]
    if bad:
        return bad, scale
    _, sv, vt = np.linalg.svd(jac / scale, full_matrices=False)
    null = sv < rcond * sv[0]
    if not null.any():
        return [], sv
    weights = np.abs(vt[null]).max(axis=0)
    return [n for n, w in zip(names, weights) if w > 0.1], sv


def _covariance(jac: np.ndarray, rcond: float) -> np.ndarray:
    # Column scaling first: raw columns span ~12 decades (B1 vs beta).
    scale = np.linalg.norm(jac, axis=0)
    scale[scale == 0] = 1.0
    _, sv, vt = np.linalg.svd(jac / scale, full_matrices=False)
    keep = sv > rcond * sv[0]
    inv = (vt[keep].T / sv[keep] ** 2) @ vt[keep]
    return inv / np.outer(scale, scale)


def fit_rates(series: ValidatedSeries | CountRateSeries, options: FitOptions | None = None,
              initial: RateModelParams | None = None) -> FitResult:
    """Weighted least-squares fit of the rate model to a power sweep.

    Residuals of all three observables are weighted by Poisson errors,
    sigma = sqrt(max(counts, 1)) / integration_time. The optimiser is a
    Levenberg-Marquardt iteration on the log/logit-mapped free parameters.
    The fit is ``converged`` when the largest column-scaled gradient
    component |J_k^T r| / |J_k| falls below ``options.gtol``.
    """
    options = options or FitOptions()
    if not isinstance(series, ValidatedSeries):
        checked = validate_series(series)
        if not isinstance(checked, ValidatedSeries):
            raise SeriesValidationError(checked)
        series = checked
    raw = series.series
    unknown = set(options.fixed) - set(PARAM_NAMES)
    if unknown:
        raise DomainError(f"unknown fixed parameters {sorted(unknown)}")

    p = np.asarray(raw.p_avg)
    tau = raw.tau
    data = np.concatenate([raw.r_s, raw.r_i, raw.r_si])
    sigma = np.sqrt(np.maximum(data * options.integration_time, 1.0)) / options.integration_time

    start = initial or initial_guess(raw)
    x_full = start.as_array()
    for name, v in options.fixed.items():
        x_full[PARAM_NAMES.index(name)] = v
    # Fixed values may sit on the boundary (e.g. beta = 0); free ones may not.
    free = tuple(n for n in PARAM_NAMES if n not in options.fixed)
    idx = np.array([PARAM_NAMES.index(n) for n in free])
    theta = np.array([_to_internal(n, x_full[i]) for n, i in zip(free, idx)])

    def unpack(t):
        t = np.clip(t, -700.0, 700.0)
        x = x_full.copy()
        for k, (n, i) in enumerate(zip(free, idx)):
            x[i] = _from_internal(n, t[k])
        return x

    def evaluate(t):
        x = unpack(t)
        rates, jac = _model(x, p, tau)
        r = (np.concatenate(rates) - data) / sigma
        jphys = jac[:, idx] / sigma[:, None]
        jt = jphys * np.array([_chain(n, x[i]) for n, i in zip(free, idx)])
        return x, r, jphys, jt

    def scaled_gradient(r, jt, x, jphys):
        g = jt.T @ r
        cn = np.linalg.norm(jt, axis=0)
        gs = np.abs(g) / np.where(cn > 0, cn, 1.0)
        # A positive term driven onto zero is an active bound, not a failure to
        # converge: its whole contribution is negligible and the cost still
        # rises when it moves inward (KKT condition at x = 0).
        active = []
        for k, (n, i) in enumerate(zip(free, idx)):
            if n in _BOUNDED_AT_ZERO and x[i] * np.linalg.norm(jphys[:, k]) < BOUND_TOL \
                    and jphys[:, k] @ r >= 0:
                gs[k] = 0.0
                active.append(n)
        return float(np.max(gs)), tuple(active)

    x, r, jphys, jt = evaluate(theta)
    cost = float(r @ r)
    gnorm, at_bound = scaled_gradient(r, jt, x, jphys)
    bad, sv = _identify_degenerate(jphys, free, options.rcond)
    if bad:
        raise DegenerateFitError(bad, sv)

    lam = 1e-3
    nu = 2.0
    iterations = 0
    converged = gnorm < options.gtol
    while not converged and iterations < options.max_iterations:
        iterations += 1
        A = jt.T @ jt
        g = jt.T @ r
        diag = np.maximum(np.diag(A), 1e-300)
        # Terms resting on their zero bound are held there while the rest move.
        move = np.array([n not in at_bound for n in free])
        stalled = False
        while True:
            try:
                step = np.zeros_like(theta)
                sub = np.ix_(move, move)
                step[move] = np.linalg.solve(A[sub] + lam * np.diag(diag[move]), -g[move])
            except np.linalg.LinAlgError:
                lam *= nu
                nu *= 2
                continue
            # Cap each mapped coordinate's move: an unbounded log-space step
            # can shove a small positive term onto the zero boundary, where
            # its gradient vanishes.
            big = np.max(np.abs(step))
            if big > MAX_MAPPED_STEP:
                step *= MAX_MAPPED_STEP / big
            t_new = theta + step
            x_new, r_new, jp_new, jt_new = evaluate(t_new)
            cost_new = float(r_new @ r_new) if np.all(np.isfinite(r_new)) else math.inf
            predicted = float(-(2 * step @ g + step @ A @ step))
            # Near the optimum the cost change drops below rounding (~1e-16
            # of the cost); a gradient decrease then decides acceptance.
            flat = cost_new <= cost * (1 + 1e-13) and scaled_gradient(r_new, jt_new, x_new, jp_new)[0] < gnorm
            if cost_new < cost or flat:
                if predicted > 0 and cost_new < cost:
                    rho = (cost - cost_new) / predicted
                    lam *= max(1.0 / 3.0, 1.0 - (2.0 * rho - 1.0) ** 3)
                else:
                    lam /= 3.0
                nu = 2.0
                stalled = np.all(np.abs(step) <= 1e-15 * (np.abs(theta) + 1e-15))
                theta, x, r, jphys, jt, cost = t_new, x_new, r_new, jp_new, jt_new, cost_new
                break
            lam *= nu
            nu *= 2
            if lam > 1e30:
                stalled = True
                break
        gnorm, at_bound = scaled_gradient(r, jt, x, jphys)
        converged = gnorm < options.gtol
        if stalled:
            break

    bad, sv = _identify_degenerate(jphys, free, options.rcond)
    if bad:
        raise DegenerateFitError(bad, sv)
    cov_free = _covariance(jphys, options.rcond)
    cov = np.zeros((7, 7))
    cov[np.ix_(idx, idx)] = 0.5 * (cov_free + cov_free.T)
    params = RateModelParams.from_array(np.clip(x, 0, None))
    return FitResult(params, cov, math.sqrt(cost), iterations, bool(converged), gnorm, free, at_bound)


def fit_quadratic_brightness(p_avg, r_si, weights=None) -> float:
    """Least-squares B1 (Mcts s^-1 mW^-2) for the pure pair law R_si = B1 P^2."""
    p = np.asarray(p_avg, dtype=float)
    y = np.asarray(r_si, dtype=float)
    w = np.ones_like(p) if weights is None else np.asarray(weights, dtype=float)
    x = p * p
    den = float(np.sum(w * x * x))
    if den == 0:
        raise DomainError("need at least one non-zero power")
    return float(np.sum(w * x * y)) / den / MCTS


__all__ = [
    "RateModelParams", "FitOptions", "FitResult", "CARResult", "DegenerateFitError",
    "SeriesValidationError", "predict_rates", "accidentals", "car", "car_curve",
    "klyshko_efficiency", "synthesize_series", "fit_rates", "initial_guess",
    "fit_quadratic_brightness", "PARAM_NAMES",
]
