"""Quantum-corrected noise temperatures for amplifier cascades.

All temperatures are in kelvin, frequencies in hertz and gains are linear
power ratios unless a name ends in ``_db``.  Functions accept floats or
numpy arrays and broadcast.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

# exact SI (2019) values
H_PLANCK = 6.62607015e-34
K_BOLTZMANN = 1.380649e-23

#: reference bath used when quoting system noise at base temperature
T_BASE = 10e-3


def db_to_linear(value_db):
    return np.power(10.0, np.asarray(value_db, dtype=float) / 10.0)[()]


def linear_to_db(value):
    value = np.asarray(value, dtype=float)
    if np.any(value <= 0):
        raise ValueError("linear gain must be positive to convert to dB")
    return (10.0 * np.log10(value))[()]


def _check_finite(name, value):
    arr = np.asarray(value, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite, got {value!r}")
    return arr


def _check_frequency(name, f):
    arr = _check_finite(name, f)
    if np.any(arr <= 0):
        raise ValueError(f"{name} must be strictly positive, got {f!r}")
    return arr


def _check_temperature(name, t):
    arr = _check_finite(name, t)
    if np.any(arr < 0):
        raise ValueError(f"{name} must be non-negative, got {t!r}")
    return arr


@dataclass(frozen=True)
class ChainConfig:
    """Lumped description of the amplification chain.

    ``g_twpa`` and ``g_conv`` may be scalars or arrays on the same frequency
    grid.  ``g_att``/``t_att`` model insertion loss ahead of the first
    amplifier (``g_att = 1`` means uncorrected).
    """

    g_hemt: float
    t_hemt: float
    t_bkg: float
    bandwidth_b: float
    g_twpa: Optional[float] = None
    g_conv: Optional[float] = None
    t_twpa: Optional[float] = None
    g_att: float = 1.0
    t_att: float = 0.0

    def __post_init__(self):
        if not self.g_hemt > 0:
            raise ValueError("g_hemt must be positive")
        if not self.bandwidth_b > 0:
            raise ValueError("bandwidth_b must be positive")
        _check_temperature("t_hemt", self.t_hemt)
        _check_temperature("t_bkg", self.t_bkg)
        _check_temperature("t_att", self.t_att)
        if not 0 < self.g_att:
            raise ValueError("g_att must be positive")
        if (self.g_twpa is None) != (self.g_conv is None):
            raise ValueError("g_twpa and g_conv must be given together")
        if self.g_twpa is not None:
            if np.shape(self.g_twpa) != np.shape(self.g_conv):
                raise ValueError("g_twpa and g_conv must share a frequency grid")
            if np.any(np.asarray(self.g_twpa) <= 0):
                raise ValueError("g_twpa must be positive")
        if self.t_twpa is not None:
            _check_temperature("t_twpa", self.t_twpa)

    @property
    def background(self) -> float:
        """Post-HEMT noise referred to the HEMT input."""
        return self.t_bkg / self.g_hemt


def half_photon_temperature(f):
    """hf/2k, the vacuum limit of the input noise."""
    return H_PLANCK * np.asarray(f, dtype=float) / (2.0 * K_BOLTZMANN)


def planck_input_noise(f, t_bath):
    """Input noise temperature of a matched load at physical temperature ``t_bath``.

    Uses the symmetrized form (hf/2k) coth(hf / 2kT), which tends to hf/2k
    for T -> 0 and to T for kT >> hf.
    """
    f = _check_frequency("f", f)
    t_bath = _check_temperature("t_bath", t_bath)
    a = half_photon_temperature(f)
    a, t = np.broadcast_arrays(a, t_bath)
    out = np.array(a, dtype=float, copy=True)
    hot = t > 0
    out[hot] = a[hot] / np.tanh(a[hot] / t[hot])
    return out[()]


def planck_input_noise_slope(f, t_bath):
    """Derivative dT_in/dT_bath of :func:`planck_input_noise`.

    Equals (x / sinh x)^2 with x = hf / 2kT; goes to zero in the quantum regime.
    """
    f = _check_frequency("f", f)
    t_bath = _check_temperature("t_bath", t_bath)
    a = half_photon_temperature(f)
    a, t = np.broadcast_arrays(a, t_bath)
    out = np.zeros(a.shape)
    hot = t > 0
    x = a[hot] / t[hot]
    # sinh overflows past x ~ 710, where the slope is zero anyway
    with np.errstate(over="ignore"):
        out[hot] = np.where(x < 700, (x / np.sinh(np.minimum(x, 700))) ** 2, 0.0)
    return out[()]


def idler_frequency(f_p, f_s):
    f_p = _check_frequency("f_p", f_p)
    f_s = _check_frequency("f_s", f_s)
    f_i = 2.0 * f_p - f_s
    if np.any(f_i <= 0):
        raise ValueError(f"idler frequency 2*f_p - f_s must be positive (f_p={f_p}, f_s={f_s})")
    return f_i[()]


def effective_input_noise(f_s, f_p, t_bath, g_twpa, g_conv):
    """Signal-band input noise plus idler-band noise referred through the TWPA.

    ``T_in(f_s) + (g_conv / g_twpa) * T_in(f_i)`` with f_i = 2 f_p - f_s.
    """
    f_i = idler_frequency(f_p, f_s)
    g_twpa = np.asarray(g_twpa, dtype=float)
    g_conv = np.asarray(g_conv, dtype=float)
    if np.any(g_twpa <= 0):
        raise ValueError("g_twpa must be positive")
    if np.any(g_conv < 0):
        raise ValueError("g_conv must be non-negative")
    ratio = g_conv / g_twpa
    return (planck_input_noise(f_s, t_bath) + ratio * planck_input_noise(f_i, t_bath))[()]


def expected_output_power_thru(chain: ChainConfig, t_in, g_tot):
    """Noise power reaching the analyzer on the bypass path (watts)."""
    t_in = _check_temperature("t_in", t_in)
    return (g_tot * K_BOLTZMANN * chain.bandwidth_b * (t_in + chain.t_hemt + chain.background))[()]


def system_noise_twpa_forward(chain: ChainConfig, t_in_eff):
    if chain.g_twpa is None or chain.t_twpa is None:
        raise ValueError("chain needs g_twpa and t_twpa for the TWPA path")
    g = np.asarray(chain.g_twpa, dtype=float)
    return (
        chain.t_bkg / (chain.g_hemt * g) + chain.t_hemt / g + chain.t_twpa + np.asarray(t_in_eff)
    )[()]


def twpa_intrinsic_noise(t_sys_twpa, t_sys_hemt, g_twpa):
    """TWPA noise from the two system-noise measurements.

    The result is signed: scatter can push it below zero and it is returned
    as such.
    """
    g_twpa = np.asarray(g_twpa, dtype=float)
    if np.any(g_twpa <= 0):
        raise ValueError("g_twpa must be positive")
    return (np.asarray(t_sys_twpa, dtype=float) - np.asarray(t_sys_hemt, dtype=float) / g_twpa)[()]


def photons_from_temperature(t, f):
    f = _check_frequency("f", f)
    return (K_BOLTZMANN * np.asarray(t, dtype=float) / (H_PLANCK * f))[()]


def standard_quantum_limit(f):
    """One-photon system-noise limit hf/k (half a photon added, half at the input)."""
    f = _check_frequency("f", f)
    return (H_PLANCK * f / K_BOLTZMANN)[()]


def weighted_average_photons(points: Sequence[tuple[float, float, float]]):
    """Inverse-variance mean of ``(n, sigma_lo, sigma_hi)`` triples.

    Weights use the symmetrized sigma; the low and high errors are
    propagated separately with those weights.  Returns ``(n_bar, lo, hi)``.
    """
    if len(points) == 0:
        raise ValueError("need at least one point to average")
    arr = np.asarray(points, dtype=float).reshape(-1, 3)
    n, lo, hi = arr.T
    if np.any(lo <= 0) or np.any(hi <= 0):
        raise ValueError("all sigmas must be positive")
    w = 1.0 / (0.5 * (lo + hi)) ** 2
    wsum = w.sum()
    n_bar = float(np.dot(w, n) / wsum)
    err_lo = float(math.sqrt(np.dot(w**2, lo**2)) / wsum)
    err_hi = float(math.sqrt(np.dot(w**2, hi**2)) / wsum)
    return n_bar, err_lo, err_hi


def noise_figure_db(t_noise, t_ref=290.0):
    """Display helper: noise temperature as a noise figure in dB."""
    return linear_to_db(1.0 + np.asarray(t_noise, dtype=float) / t_ref)
