"""Y-factor inference from (bath temperature, output power) campaigns.

The measured pairs are fitted as ``T_in = alpha * P_out - offset``, where the
offset is the noise added by the cascade (bypass path) or the excess noise of
the TWPA path.  Both coordinates carry errors, handled with the
effective-variance method.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .noisecalc import (
    T_BASE,
    ChainConfig,
    db_to_linear,
    effective_input_noise,
    photons_from_temperature,
    planck_input_noise,
    planck_input_noise_slope,
    twpa_intrinsic_noise,
)

LN10_OVER_10 = math.log(10.0) / 10.0


class Path(str, enum.Enum):
    THRU = "Thru"
    TWPA = "Twpa"
    DIRECT_HEMT = "DirectHemt"


class FitError(RuntimeError):
    pass


class OrderingWarning(UserWarning):
    """Output power does not increase with bath temperature."""


@dataclass(frozen=True)
class NoiseSample:
    path: Path
    f_signal: float
    t_bath: float
    t_bath_err: float
    p_out: float
    p_out_err_db: float
    f_idler: Optional[float] = None
    g_twpa_db: Optional[float] = None
    g_conv_db: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "path", Path(self.path))
        if not self.f_signal > 0:
            raise ValueError("f_signal must be positive")
        if not self.t_bath >= 0:
            raise ValueError("t_bath must be non-negative")
        if not self.t_bath_err > 0:
            raise ValueError("t_bath_err must be positive")
        if not self.p_out > 0:
            raise ValueError("p_out must be positive")
        if not self.p_out_err_db > 0:
            raise ValueError("p_out_err_db must be positive")
        if self.path is Path.TWPA:
            missing = [
                name
                for name in ("f_idler", "g_twpa_db", "g_conv_db")
                if getattr(self, name) is None
            ]
            if missing:
                raise ValueError(f"Twpa sample is missing {', '.join(missing)}")


@dataclass(frozen=True)
class GainSummary:
    f_signal: float
    g_twpa_mean_db: float
    g_twpa_err_db: float
    g_conv_mean_db: float
    g_conv_err_db: float
    n_samples: int = 0

    @property
    def gain_ratio(self) -> float:
        """Linear g_conv / g_twpa from the averaged gains."""
        return float(db_to_linear(self.g_conv_mean_db - self.g_twpa_mean_db))

    @property
    def gain_ratio_rel_err(self) -> float:
        return LN10_OVER_10 * math.hypot(self.g_twpa_err_db, self.g_conv_err_db)


@dataclass
class FitPoints:
    """Fit-ready arrays for a single path at one signal frequency."""

    path: Path
    f_signal: float
    t_bath: np.ndarray
    x: np.ndarray
    sx: np.ndarray
    y: np.ndarray
    sy: np.ndarray
    f_idler: Optional[float] = None
    gain_ratio: Optional[float] = None

    def __len__(self):
        return len(self.x)

    def __iter__(self):
        return iter(zip(self.x, self.sx, self.y, self.sy))


@dataclass
class FitReport:
    path: Path
    f_signal: float
    alpha: float
    offset: float
    alpha_err: float
    offset_err: float
    covariance: np.ndarray
    n_points: int
    reduced_chi2: float
    iterations: int = 0
    f_idler: Optional[float] = None
    gain_ratio: Optional[float] = None

    @property
    def chi2_scale(self) -> float:
        return math.sqrt(self.reduced_chi2) if self.reduced_chi2 > 0 else 1.0

    @property
    def offset_err_scaled(self) -> float:
        return self.offset_err * self.chi2_scale

    @property
    def alpha_err_scaled(self) -> float:
        return self.alpha_err * self.chi2_scale


@dataclass(frozen=True)
class ErrorTerm:
    name: str
    lo: float
    hi: float


@dataclass
class ErrorBudget:
    terms: list[ErrorTerm] = field(default_factory=list)

    @property
    def total_lo(self) -> float:
        return float(sum(t.lo for t in self.terms))

    @property
    def total_hi(self) -> float:
        return float(sum(t.hi for t in self.terms))

    def term(self, name: str) -> ErrorTerm:
        for t in self.terms:
            if t.name == name:
                return t
        raise KeyError(name)


@dataclass(frozen=True)
class LossBounds:
    """One-sided insertion-loss corrections plus symmetric HEMT-side errors.

    ``dg_att_db`` and ``dt_att`` may only lower the noise (must be <= 0);
    ``dt_bkg`` and ``dg_hemt_db`` are symmetric magnitudes.
    """

    dg_att_db: float = -1.0
    dt_att: float = -0.1
    dt_bkg: float = 0.0
    dg_hemt_db: float = 0.0

    def __post_init__(self):
        if self.dg_att_db > 0 or self.dt_att > 0:
            raise ValueError("insertion-loss bounds are one-sided and must be <= 0")
        if self.dt_bkg < 0 or self.dg_hemt_db < 0:
            raise ValueError("dt_bkg and dg_hemt_db are magnitudes and must be >= 0")

    @classmethod
    def for_path(cls, path: Path, **overrides) -> "LossBounds":
        # bypass path: switch plus isolators (data sheets); TWPA path: first switch only
        dg = -1.0 if Path(path) is not Path.TWPA else -0.5
        return cls(**{"dg_att_db": dg, **overrides})


def switch_repeatability_db(f):
    """Switch insertion-loss repeatability: 0.5 dB above 6 GHz, negligible below."""
    return np.where(np.asarray(f, dtype=float) > 6e9, 0.5, 0.0)[()]


def average_gains(samples: Sequence[NoiseSample]) -> GainSummary:
    """Mean and standard error (in dB) of the TWPA gains over temperature setpoints."""
    if not samples:
        raise ValueError("no samples to average")
    f0 = samples[0].f_signal
    for s in samples:
        if s.path is not Path.TWPA:
            raise ValueError("gain averaging needs Twpa samples")
        if not math.isclose(s.f_signal, f0, rel_tol=1e-12):
            raise ValueError(f"mixed signal frequencies: {f0} and {s.f_signal}")
    g_twpa = np.array([s.g_twpa_db for s in samples], dtype=float)
    g_conv = np.array([s.g_conv_db for s in samples], dtype=float)
    n = len(samples)
    if n < 2:
        warnings.warn("single sample: gain error undefined, reported as zero", stacklevel=2)
        err_t = err_c = 0.0
    else:
        err_t = float(g_twpa.std(ddof=1) / math.sqrt(n))
        err_c = float(g_conv.std(ddof=1) / math.sqrt(n))
    return GainSummary(f0, float(g_twpa.mean()), err_t, float(g_conv.mean()), err_c, n)


def build_fit_points(samples: Sequence[NoiseSample], gains: Optional[GainSummary] = None) -> FitPoints:
    """Convert samples at one frequency and path to (P_out, T_in) pairs with errors.

    The vertical error is the thermometer error through dT_in/dT_bath; on the
    TWPA path the averaged-gain error of the idler term is added in quadrature.
    The 0.25 dB-style power error maps to ``p_out * (10**(err/10) - 1)``.
    """
    if not samples:
        raise ValueError("no samples")
    path = samples[0].path
    f_s = samples[0].f_signal
    for s in samples:
        if s.path is not path:
            raise ValueError("samples mix signal paths")
        if not math.isclose(s.f_signal, f_s, rel_tol=1e-12):
            raise ValueError("samples mix signal frequencies")
    t_bath = np.array([s.t_bath for s in samples], dtype=float)
    t_err = np.array([s.t_bath_err for s in samples], dtype=float)
    x = np.array([s.p_out for s in samples], dtype=float)
    sx = x * (np.power(10.0, np.array([s.p_out_err_db for s in samples]) / 10.0) - 1.0)

    if path is Path.TWPA:
        if gains is None:
            raise ValueError("Twpa path needs averaged gains (GainSummary)")
        if not math.isclose(gains.f_signal, f_s, rel_tol=1e-12):
            raise ValueError("gain summary is for a different frequency")
        f_i = samples[0].f_idler
        f_p = 0.5 * (f_s + f_i)
        ratio = gains.gain_ratio
        y = effective_input_noise(f_s, f_p, t_bath, 1.0, ratio)
        slope = planck_input_noise_slope(f_s, t_bath) + ratio * planck_input_noise_slope(f_i, t_bath)
        s_ratio = ratio * gains.gain_ratio_rel_err * planck_input_noise(f_i, t_bath)
        sy = np.hypot(slope * t_err, s_ratio)
        return FitPoints(path, f_s, t_bath, x, sx, np.asarray(y), sy, f_idler=f_i, gain_ratio=ratio)

    y = planck_input_noise(f_s, t_bath)
    sy = planck_input_noise_slope(f_s, t_bath) * t_err
    return FitPoints(path, f_s, t_bath, x, sx, np.atleast_1d(y), np.atleast_1d(sy))


def fit_line_effective_variance(x, y, sx, sy, tol=1e-10, max_iter=100):
    """Straight line ``y = slope * x + intercept`` with errors on both axes.

    Minimizes the effective-variance chi-square
    ``sum (y - slope*x - intercept)**2 / (sy**2 + slope**2 * sx**2)``.  The
    weights are iterated until the slope changes by less than ``tol``
    relative; each slope update is York's, which keeps the dependence of the
    weights on the slope (plain reweighted least squares does not, and is
    biased toward the y-on-x slope when x errors dominate).

    Returns ``(slope, intercept, cov, chi2, iterations)`` where ``cov`` is the
    2x2 covariance of (slope, intercept) and chi2 the weighted residual sum.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    sx = np.broadcast_to(np.asarray(sx, dtype=float), x.shape)
    sy = np.broadcast_to(np.asarray(sy, dtype=float), x.shape)
    if x.size < 3:
        raise FitError(f"need at least 3 points, got {x.size}")
    if np.ptp(x) == 0:
        raise FitError("all x values are equal; slope is undetermined")
    if np.any(sy < 0) or np.any(sx < 0) or np.any(sx**2 + sy**2 == 0):
        raise FitError("every point needs a positive uncertainty")

    # work in units where x is O(1); powers are ~1e-18 W
    scale = float(np.median(np.abs(x))) or 1.0
    u, su = x / scale, sx / scale
    vy, vu = sy**2, su**2

    def centred(weights):
        u_bar = np.dot(weights, u) / weights.sum()
        y_bar = np.dot(weights, y) / weights.sum()
        return u_bar, y_bar, u - u_bar, y - y_bar

    w = 1.0 / vy if np.all(sy > 0) else np.ones_like(u)
    _, _, du, dy = centred(w)
    slope = np.dot(w * du, dy) / np.dot(w * du, du)
    for iteration in range(1, max_iter + 1):
        w = 1.0 / (vy + slope**2 * vu)
        _, _, du, dy = centred(w)
        beta = w * (du * vy + slope * dy * vu)
        den = np.dot(w * beta, du)
        if den == 0 or not np.isfinite(den):
            raise FitError("singular normal equations")
        new_slope = np.dot(w * beta, dy) / den
        converged = abs(new_slope - slope) <= tol * abs(new_slope)
        slope = new_slope
        if converged:
            break
    else:
        raise FitError(f"effective-variance iteration did not converge in {max_iter} steps")

    w = 1.0 / (vy + slope**2 * vu)
    u_bar, y_bar, du, dy = centred(w)
    intercept = y_bar - slope * u_bar
    # least-squares adjusted abscissae give the parameter variances
    adj = u_bar + w * (du * vy + slope * dy * vu)
    adj_bar = np.dot(w, adj) / w.sum()
    var_slope = 1.0 / np.dot(w, (adj - adj_bar) ** 2)
    var_int = 1.0 / w.sum() + adj_bar**2 * var_slope
    cov_u = np.array([[var_slope, -adj_bar * var_slope], [-adj_bar * var_slope, var_int]])
    chi2 = float(np.dot(w, (y - slope * u - intercept) ** 2))

    jac = np.diag([1.0 / scale, 1.0])
    cov = jac @ cov_u @ jac
    return slope / scale, intercept, cov, chi2, iteration


def fit_yfactor(points: FitPoints, tol=1e-10, max_iter=100) -> FitReport:
    if len(points) >= 2:
        order = np.argsort(points.t_bath, kind="stable")
        if np.any(np.diff(points.x[order]) <= 0):
            warnings.warn("output power is not strictly increasing with bath temperature",
                          OrderingWarning, stacklevel=2)
    slope, intercept, cov, chi2, iterations = fit_line_effective_variance(
        points.x, points.y, points.sx, points.sy, tol=tol, max_iter=max_iter
    )
    n = len(points)
    # offset = -intercept
    flip = np.diag([1.0, -1.0])
    cov = flip @ cov @ flip
    return FitReport(
        path=points.path,
        f_signal=points.f_signal,
        alpha=float(slope),
        offset=float(-intercept),
        alpha_err=float(math.sqrt(cov[0, 0])),
        offset_err=float(math.sqrt(cov[1, 1])),
        covariance=cov,
        n_points=n,
        reduced_chi2=chi2 / (n - 2) if n > 2 else float("nan"),
        iterations=iterations,
        f_idler=points.f_idler,
        gain_ratio=points.gain_ratio,
    )


def base_input_noise(report: FitReport, f: Optional[float] = None, t_bath: float = T_BASE) -> float:
    """Input noise at the reference bath, including the idler term on the TWPA path."""
    f_s = report.f_signal if f is None else f
    if report.path is Path.TWPA:
        f_p = 0.5 * (report.f_signal + report.f_idler)
        return float(effective_input_noise(f_s, f_p, t_bath, 1.0, report.gain_ratio))
    return float(planck_input_noise(f_s, t_bath))


def system_noise_at_base(report: FitReport, f: Optional[float] = None) -> float:
    """Fitted offset plus the input noise a 10 mK bath would deliver."""
    return report.offset + base_input_noise(report, f)


def insertion_loss_correction(report: FitReport, g_att: float, t_att: float,
                              t_in: Optional[float] = None, background: float = 0.0) -> float:
    """System noise corrected for a lossy element (gain ``g_att`` <= 1) at ``t_att``.

    ``background`` is t_bkg / g_hemt; ``t_in`` defaults to the 10 mK input noise.
    """
    if not 0 < g_att <= 1:
        raise ValueError(f"g_att must lie in (0, 1], got {g_att}")
    if t_att < 0:
        raise ValueError("t_att must be non-negative")
    if t_in is None:
        t_in = base_input_noise(report)
    return -g_att * (-report.offset) - background - g_att * t_att + t_in


def error_budget(report: FitReport, chain: ChainConfig, bounds: Optional[LossBounds] = None,
                 scaled: bool = False) -> ErrorBudget:
    """Worst-case (linear) error budget of the system noise.

    Each entry is one absolute-value summand of the propagated error of the
    insertion-loss-corrected system noise.  ``scaled`` multiplies the fit
    error by sqrt(reduced chi2).
    """
    if bounds is None:
        bounds = LossBounds.for_path(report.path)
    g_att = chain.g_att
    t_added = abs(report.offset)
    d_added = report.offset_err_scaled if scaled else report.offset_err
    d_g_att = g_att * (1.0 - 10.0 ** (bounds.dg_att_db / 10.0))
    d_g_hemt = chain.g_hemt * (10.0 ** (bounds.dg_hemt_db / 10.0) - 1.0)
    background = bounds.dt_bkg / chain.g_hemt
    hemt_gain = chain.t_bkg / chain.g_hemt**2 * d_g_hemt
    terms = [
        ErrorTerm("fit_offset", g_att * d_added, g_att * d_added),
        ErrorTerm("insertion_loss_gain", t_added * d_g_att, 0.0),
        ErrorTerm("background", background, background),
        ErrorTerm("hemt_gain", hemt_gain, hemt_gain),
        ErrorTerm("insertion_loss_temp", g_att * abs(bounds.dt_att), 0.0),
        ErrorTerm("attenuator_temp_gain", chain.t_att * d_g_att, 0.0),
    ]
    return ErrorBudget(terms)


@dataclass
class PathNoise:
    """A fitted path together with its error budget."""

    report: FitReport
    budget: ErrorBudget

    @property
    def f_signal(self) -> float:
        return self.report.f_signal

    @property
    def t_sys(self) -> float:
        return system_noise_at_base(self.report)

    @property
    def lo(self) -> float:
        return self.budget.total_lo

    @property
    def hi(self) -> float:
        return self.budget.total_hi


def analyze_path(samples: Sequence[NoiseSample], chain: ChainConfig,
                 bounds: Optional[LossBounds] = None, gains: Optional[GainSummary] = None) -> PathNoise:
    samples = list(samples)
    if samples[0].path is Path.TWPA and gains is None:
        gains = average_gains(samples)
    report = fit_yfactor(build_fit_points(samples, gains))
    return PathNoise(report, error_budget(report, chain, bounds))


@dataclass
class IntrinsicNoise:
    f_signal: float
    t_twpa: float
    lo: float
    hi: float
    photons: float
    photons_lo: float
    photons_hi: float
    t_sys_twpa: float
    t_sys_hemt: float
    g_twpa_db: float


def intrinsic_twpa_report(thru: PathNoise, twpa: PathNoise, gains: GainSummary,
                          gain_err_db: Optional[float] = None) -> IntrinsicNoise:
    """TWPA noise as the difference of the two system noises, with linear error bars.

    The HEMT-path error enters divided by the TWPA gain and with its sides
    swapped; the gain error (statistical plus switch repeatability unless
    ``gain_err_db`` is given) is evaluated at the gain extremes.
    """
    f = twpa.f_signal
    if not (math.isclose(thru.f_signal, f, rel_tol=1e-9) and math.isclose(gains.f_signal, f, rel_tol=1e-9)):
        raise ValueError(f"frequency mismatch: thru {thru.f_signal}, twpa {f}, gains {gains.f_signal}")
    if gain_err_db is None:
        gain_err_db = gains.g_twpa_err_db + float(switch_repeatability_db(f))
    g = float(db_to_linear(gains.g_twpa_mean_db))
    g_hi = float(db_to_linear(gains.g_twpa_mean_db + gain_err_db))
    g_lo = float(db_to_linear(gains.g_twpa_mean_db - gain_err_db))
    t_hemt = thru.t_sys
    t_twpa = float(twpa_intrinsic_noise(twpa.t_sys, t_hemt, g))

    # higher gain -> smaller HEMT share -> larger intrinsic noise
    gain_hi = t_hemt / g - t_hemt / g_hi
    gain_lo = t_hemt / g_lo - t_hemt / g
    lo = twpa.lo + thru.hi / g + gain_lo
    hi = twpa.hi + thru.lo / g + gain_hi
    n = float(photons_from_temperature(t_twpa, f))
    n_lo = float(photons_from_temperature(lo, f))
    n_hi = float(photons_from_temperature(hi, f))
    return IntrinsicNoise(f, t_twpa, lo, hi, n, n_lo, n_hi, twpa.t_sys, t_hemt, gains.g_twpa_mean_db)


def group_samples(samples: Iterable[NoiseSample]) -> dict[tuple[Path, float], list[NoiseSample]]:
    """Group samples by (path, signal frequency), preserving input order."""
    groups: dict[tuple[Path, float], list[NoiseSample]] = {}
    for s in samples:
        groups.setdefault((s.path, s.f_signal), []).append(s)
    return groups
