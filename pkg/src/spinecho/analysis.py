"""Decay times, plateaus, decay-shape classification and rate scaling fits."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Literal, Optional, Sequence

import numpy as np

from spinecho.hamiltonian import CouplingMatrix, global_second_moment
from spinecho.loschmidt import LETrace

THRESHOLD = 2.0 / 3.0
MIN_TAIL = 5


class FitError(ValueError):
    pass


def tau_phi(trace: LETrace, threshold: float = THRESHOLD) -> Optional[float]:
    """First downward crossing of ``threshold``, linearly interpolated.

    Returns None when the trace never drops below the threshold.
    """
    m = trace.m11
    t = trace.times
    below = np.flatnonzero(m < threshold)
    if below.size == 0:
        return None
    k = below[0]
    if k == 0:
        return float(t[0])
    m0, m1 = m[k - 1], m[k]
    return float(t[k - 1] + (m0 - threshold) / (m0 - m1) * (t[k] - t[k - 1]))


def _tail(trace: LETrace, tail_fraction: float) -> tuple[np.ndarray, np.ndarray]:
    if not 0 < tail_fraction <= 0.5:
        raise ValueError("tail_fraction must lie in (0, 0.5]")
    n = int(round(len(trace) * tail_fraction))
    if n < MIN_TAIL:
        raise FitError(f"plateau window has {n} samples; need at least {MIN_TAIL}")
    return trace.times[-n:], trace.m11[-n:]


def plateau(trace: LETrace, tail_fraction: float = 0.25) -> tuple[float, float]:
    """Mean and standard error of the last ``tail_fraction`` of the samples."""
    _, m = _tail(trace, tail_fraction)
    return float(m.mean()), float(m.std(ddof=1) / math.sqrt(m.size))


def plateau_drift(trace: LETrace, tail_fraction: float = 0.25) -> float:
    """Linear drift of the tail across its own window (end minus start)."""
    t, m = _tail(trace, tail_fraction)
    slope = np.polyfit(t, m, 1)[0]
    return float(slope * (t[-1] - t[0]))


def is_flat(trace: LETrace, tail_fraction: float = 0.25) -> bool:
    _, stderr = plateau(trace, tail_fraction)
    return abs(plateau_drift(trace, tail_fraction)) < 2.0 * stderr


@dataclass
class DecayFit:
    model: Literal["gaussian", "exponential"]
    tau_phi: float
    amplitude: float
    residual: float
    crossing_tau: Optional[float]
    residual_exponential: float
    residual_gaussian: float
    window: tuple[float, float]
    plateau: float
    n_points: int
    skipped: int = 0

    @property
    def residual_ratio(self) -> float:
        """Residual of the rejected model over that of the selected one."""
        other = self.residual_gaussian if self.model == "exponential" else self.residual_exponential
        return other / self.residual if self.residual > 0 else math.inf

    def to_dict(self) -> dict:
        d = asdict(self)
        d["residual_ratio"] = self.residual_ratio
        return d


def default_fit_window(trace: LETrace, plateau_value: float, floor: float,
                       start_level: float = 0.9) -> tuple[float, float]:
    """From the first drop below ``start_level`` to the first approach to the floor."""
    m, t = trace.m11, trace.times
    start = np.flatnonzero(m < start_level)
    if start.size == 0:
        raise FitError(f"trace never drops below {start_level}")
    k0 = start[0]
    end = np.flatnonzero(m[k0:] - plateau_value <= floor)
    k1 = k0 + end[0] - 1 if end.size else len(m) - 1
    return float(t[k0]), float(t[max(k1, k0)])


def _rms(x: np.ndarray) -> float:
    return float(np.sqrt(np.mean(x * x)))


def classify_decay(
    trace: LETrace,
    fit_window: Optional[tuple[float, float]] = None,
    tail_fraction: float = 0.25,
    plateau_value: Optional[float] = None,
) -> DecayFit:
    """Compare exponential and Gaussian fits of log(m11 - plateau).

    The plateau comes from the trace tail unless given.  The default window
    starts where m11 first drops below 0.9 and ends where m11 comes within
    twice the tail fluctuation of the plateau.
    """
    if plateau_value is None:
        _, tail = _tail(trace, tail_fraction)
        plateau_value = float(tail.mean())
        floor = 2.0 * float(tail.std(ddof=1))
    else:
        floor = 0.0
    if fit_window is None:
        fit_window = default_fit_window(trace, plateau_value, floor)
    t0, t1 = fit_window
    if not t1 > t0:
        raise FitError(f"degenerate fit window {fit_window}")
    sel = (trace.times >= t0) & (trace.times <= t1)
    t = trace.times[sel]
    y = trace.m11[sel] - plateau_value
    good = y > 0
    skipped = int((~good).sum())
    t, y = t[good], np.log(y[good])
    if t.size < 3:
        raise FitError("fewer than three usable samples in the fit window")
    if np.exp(y).min() + plateau_value >= THRESHOLD:
        raise FitError("trace does not decay below 2/3 inside the fit window")

    fits = {}
    for model, x in (("exponential", t), ("gaussian", t * t)):
        A = np.column_stack((np.ones_like(x), x))
        coef, *_ = np.linalg.lstsq(A, y, rcond=None)
        fits[model] = (coef, _rms(y - A @ coef))
    model = min(fits, key=lambda k: fits[k][1])
    (c0, c1), res = fits[model]
    if c1 >= 0:
        raise FitError("fitted decay coefficient is not negative")
    tau = -1.0 / c1 if model == "exponential" else 1.0 / math.sqrt(-c1)
    return DecayFit(
        model=model,
        tau_phi=float(tau),
        amplitude=float(math.exp(c0)),
        residual=res,
        crossing_tau=tau_phi(trace),
        residual_exponential=fits["exponential"][1],
        residual_gaussian=fits["gaussian"][1],
        window=(float(t0), float(t1)),
        plateau=float(plateau_value),
        n_points=int(t.size),
        skipped=skipped,
    )


# --- rate scaling -------------------------------------------------------------


@dataclass
class RegimeFit:
    regime: Literal["perturbative", "fgr"]
    points: list[tuple[float, float]]
    exponent: float
    offset_rate: float
    coefficient: float
    window: tuple[float, float]
    residual: float
    monotone: bool = True
    dropped: list[tuple[float, float]] = field(default_factory=list)


def _points(points) -> tuple[np.ndarray, np.ndarray]:
    arr = np.asarray(sorted((float(s), float(r)) for s, r in points), dtype=float)
    if arr.ndim != 2 or arr.shape[0] < 4:
        raise FitError("need at least four (sigma_eff, rate) points")
    s, r = arr[:, 0], arr[:, 1]
    if np.any(s <= 0) or np.any(r <= 0):
        raise FitError("sigma_eff and rates must be positive")
    return s, r


def _loglog_slope(s: np.ndarray, r: np.ndarray) -> tuple[float, float, float]:
    ls, lr = np.log(s), np.log(r)
    slope, icpt = np.polyfit(ls, lr, 1)
    return float(slope), float(icpt), _rms(lr - (slope * ls + icpt))


def fit_rate_scaling(points: Sequence[tuple[float, float]],
                     regime: Literal["perturbative", "fgr"]) -> RegimeFit:
    """Fit decay rates 1/tau_phi against sigma_eff for one regime.

    ``perturbative``: straight line through the origin; the exponent is the
    log-log slope of rate against sigma_eff.

    ``fgr``: rate = offset + c sigma_eff**2 by least squares on relative
    residuals (rates span decades); the exponent is the log-log slope of
    (rate - offset).  Points with rate <= offset are dropped and reported.
    """
    s, r = _points(points)
    monotone = bool(np.all(np.diff(r) > 0))
    pts = list(zip(s.tolist(), r.tolist()))
    window = (float(s[0]), float(s[-1]))
    if regime == "perturbative":
        w = 1.0 / r
        coef = float(np.sum(w * w * s * r) / np.sum(w * w * s * s))
        slope, _, res = _loglog_slope(s, r)
        return RegimeFit(regime, pts, slope, 0.0, coef, window, res, monotone)
    if regime != "fgr":
        raise ValueError(f"unknown regime {regime!r}")
    w = 1.0 / r
    A = np.column_stack((np.ones_like(s), s * s)) * w[:, None]
    (offset, coef), *_ = np.linalg.lstsq(A, r * w, rcond=None)
    excess = r - offset
    keep = excess > 0
    if keep.sum() < 3:
        raise FitError("offset removal leaves fewer than three positive points")
    slope, _, _ = _loglog_slope(s[keep], excess[keep])
    model = offset + coef * s * s
    res = _rms(np.log(r) - np.log(np.clip(model, 1e-300, None)))
    dropped = [p for p, k in zip(pts, keep) if not k]
    return RegimeFit(regime, pts, slope, float(offset), float(coef), window, res, monotone, dropped)


def _branch_cost(fit: RegimeFit) -> float:
    return fit.residual**2 * len(fit.points)


def split_regimes(points: Sequence[tuple[float, float]], min_points: int = 4) -> tuple[RegimeFit, RegimeFit]:
    """Split a rate curve into a weak (fgr) and a strong (perturbative) branch.

    Every split leaving ``min_points`` on each side is tried; the one with
    the smallest total squared log-residual wins.
    """
    s, r = _points(points)
    if s.size < 2 * min_points:
        raise FitError(f"need at least {2 * min_points} points to split regimes")
    best = None
    for k in range(min_points, s.size - min_points + 1):
        try:
            weak = fit_rate_scaling(list(zip(s[:k], r[:k])), "fgr")
        except FitError:
            continue
        strong = fit_rate_scaling(list(zip(s[k:], r[k:])), "perturbative")
        # the linear branch is scored by its straight-line misfit, not the log-log line
        strong_res = _rms(np.log(r[k:]) - np.log(strong.coefficient * s[k:]))
        cost = _branch_cost(weak) + strong_res**2 * (s.size - k)
        if best is None or cost < best[0]:
            best = (cost, weak, strong)
    if best is None:
        raise FitError("no admissible regime split")
    return best[1], best[2]


# --- LDOS ----------------------------------------------------------------------


@dataclass(frozen=True)
class LdosPrediction:
    nu: Fraction
    mean: float
    variance: float

    def __post_init__(self):
        if not self.variance > 0:
            raise ValueError("LDOS variance must be positive")


def ldos_prediction(nu, omega1: float, J: CouplingMatrix) -> LdosPrediction:
    """Gaussian LDOS of sector ``nu``: centre nu * omega1, width <H_dip^2>."""
    return LdosPrediction(Fraction(nu), float(nu) * omega1, global_second_moment(J))


def predicted_ldos(p: LdosPrediction, epsilon):
    """Gaussian density at ``epsilon`` (scalar or array)."""
    x = np.asarray(epsilon, dtype=float) - p.mean
    val = np.exp(-x * x / (2.0 * p.variance)) / math.sqrt(2.0 * math.pi * p.variance)
    return float(val) if np.ndim(val) == 0 else val
