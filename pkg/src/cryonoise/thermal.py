"""Weak-link thermal model of the variable-temperature noise source.

Two conduction channels (stainless screws and alumina beads) with power-law
conductivity ``G_ch(T) = c_ch * T**n_ch`` in W/K.  The prefactors are fixed
by the anchor: at (1 K -> 0.1 K) the total flow is ``anchor_power`` and the
channels split it in the ratio of the tabulated conductivity integrals.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Mapping

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq, curve_fit

CHANNELS = ("steel", "alox")


class IntegrationError(RuntimeError):
    pass


@dataclass(frozen=True)
class ThermalConfig:
    mass_cu: float = 0.45
    screw_count: int = 3
    # M3 tensile-stress area 5.03 mm^2 over 50 mm
    screw_area_over_length: float = 5.03e-6 / 0.05
    bead_count: int = 3
    bead_area_over_length: float = 3.9e-3
    q_steel_1k: float = 7.2e-4  # W/cm, integral from 0.1 K to 1 K
    q_alox_1k: float = 7.8e-5
    anchor_hot: float = 1.0
    anchor_cold: float = 0.1
    anchor_power: float = 100e-6
    n_steel: float = 1.2
    n_alox: float = 2.7
    # copper specific heat, J/(kg K^2) and J/(kg K^4); see calibrate_heat_capacity
    gamma_cu: float = 0.018524524173256632
    beta_cu: float = 0.0

    def __post_init__(self):
        for name, value in asdict(self).items():
            if name == "beta_cu" or name == "gamma_cu":
                if value < 0:
                    raise ValueError(f"{name} must be non-negative")
            elif not value > 0:
                raise ValueError(f"{name} must be positive")
        if self.gamma_cu == 0 and self.beta_cu == 0:
            raise ValueError("heat capacity model is identically zero")
        if not self.anchor_hot > self.anchor_cold:
            raise ValueError("anchor_hot must exceed anchor_cold")

    def replace(self, **changes) -> "ThermalConfig":
        return ThermalConfig(**{**asdict(self), **changes})

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Mapping) -> "ThermalConfig":
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown thermal parameter(s): {', '.join(sorted(unknown))}")
        return cls(**data)

    def exponent(self, channel: str) -> float:
        return {"steel": self.n_steel, "alox": self.n_alox}[channel]

    def prefactor(self, channel: str) -> float:
        """c_ch such that G_ch(T) = c_ch T^n_ch reproduces the anchored split."""
        q = {"steel": self.q_steel_1k, "alox": self.q_alox_1k}[channel]
        share = self.anchor_power * q / (self.q_steel_1k + self.q_alox_1k)
        n1 = self.exponent(channel) + 1.0
        return share * n1 / (self.anchor_hot**n1 - self.anchor_cold**n1)


@dataclass(frozen=True)
class DecayCurve:
    time: np.ndarray
    temperature: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.time, dtype=float)
        temp = np.asarray(self.temperature, dtype=float)
        if t.shape != temp.shape or t.ndim != 1:
            raise ValueError("time and temperature must be 1-D arrays of equal length")
        if np.any(np.diff(t) <= 0):
            raise ValueError("time must be strictly increasing")
        if np.any(temp <= 0):
            raise ValueError("temperatures must be positive")
        object.__setattr__(self, "time", t)
        object.__setattr__(self, "temperature", temp)

    def __len__(self):
        return len(self.time)


@dataclass(frozen=True)
class DecayFit:
    tau: float
    tau_err: float
    t_inf: float
    delta_t: float
    covariance: np.ndarray = field(repr=False)


def _antiderivative(config: ThermalConfig, t, channel: str):
    n1 = config.exponent(channel) + 1.0
    return config.prefactor(channel) * np.power(t, n1) / n1


def channel_power(config: ThermalConfig, t_hot, t_cold, channel: str):
    return _antiderivative(config, t_hot, channel) - _antiderivative(config, t_cold, channel)


def _net_flow(config: ThermalConfig, t_hot, t_cold):
    """Signed heat flow from the source to the flange."""
    return sum(channel_power(config, t_hot, t_cold, ch) for ch in CHANNELS)


def weak_link_power(config: ThermalConfig, t_hot, t_cold):
    """Heat flow through the weak links in watts."""
    t_hot = np.asarray(t_hot, dtype=float)
    t_cold = np.asarray(t_cold, dtype=float)
    if np.any(t_cold <= 0):
        raise ValueError("t_cold must be positive")
    if np.any(t_hot < t_cold):
        raise ValueError("t_hot must be >= t_cold")
    return _net_flow(config, t_hot, t_cold)[()]


def conductance(config: ThermalConfig, t, channel: str | None = None):
    """dP/dT_hot in W/K, total or for one channel."""
    t = np.asarray(t, dtype=float)
    chans = CHANNELS if channel is None else (channel,)
    return sum(config.prefactor(ch) * np.power(t, config.exponent(ch)) for ch in chans)[()]


def crossover_temperature(config: ThermalConfig) -> float:
    """Temperature above which the alumina channel conducts more than the steel one."""
    ratio = config.prefactor("steel") / config.prefactor("alox")
    return float(ratio ** (1.0 / (config.n_alox - config.n_steel)))


def geometry_power(config: ThermalConfig) -> float:
    """Flow at the anchor from geometry alone: sum of count * (A/L) * integral."""
    cm = 100.0
    steel = config.screw_count * config.screw_area_over_length * cm * config.q_steel_1k
    alox = config.bead_count * config.bead_area_over_length * cm * config.q_alox_1k
    return steel + alox


def heater_power_for_setpoint(config: ThermalConfig, t_set, t_flange):
    """Steady-state heater power; radiation is neglected."""
    if np.any(np.asarray(t_set) < np.asarray(t_flange)):
        raise ValueError("t_set must be >= t_flange")
    return weak_link_power(config, t_set, t_flange)


def steady_state_temperature(config: ThermalConfig, heater: float, t_flange: float) -> float:
    if heater < 0:
        raise ValueError("heater power must be non-negative")
    if heater == 0:
        return float(t_flange)
    hi = max(2 * t_flange, 1.0)
    while _net_flow(config, hi, t_flange) < heater:
        hi *= 2
    return float(brentq(lambda t: _net_flow(config, t, t_flange) - heater, t_flange, hi,
                        xtol=1e-15, rtol=1e-14))


def heat_capacity(config: ThermalConfig, t):
    t = np.asarray(t, dtype=float)
    return (config.mass_cu * (config.gamma_cu * t + config.beta_cu * t**3))[()]


def time_constant(config: ThermalConfig, t):
    """tau = C(T) / G(T) in seconds."""
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise ValueError("temperature must be positive")
    return (heat_capacity(config, t) / conductance(config, t))[()]


def calibrate_heat_capacity(config: ThermalConfig, t_ref: float = 5.0, tau_ref: float = 10.0) -> ThermalConfig:
    """Solve gamma (keeping beta) so that tau(t_ref) = tau_ref."""
    if not t_ref > 0 or not tau_ref > 0:
        raise ValueError("t_ref and tau_ref must be positive")
    needed = tau_ref * conductance(config, t_ref) / config.mass_cu - config.beta_cu * t_ref**3
    if needed <= 0:
        raise ValueError("beta alone already exceeds the target heat capacity")
    return config.replace(gamma_cu=float(needed / t_ref))


def simulate_decay(config: ThermalConfig, t_start: float, t_flange: float, heater: float,
                   duration: float, dt: float, rtol: float = 1e-10) -> DecayCurve:
    """Integrate C(T) dT/dt = heater - P(T, t_flange) and sample every ``dt`` seconds."""
    if not dt > 0 or not duration > 0:
        raise ValueError("dt and duration must be positive")
    if t_start <= 0 or t_flange <= 0 or heater < 0:
        raise ValueError("temperatures must be positive and heater non-negative")

    def rhs(_, y):
        t = max(y[0], 1e-9)
        return [(heater - _net_flow(config, t, t_flange)) / heat_capacity(config, t)]

    times = np.arange(0.0, duration + 0.5 * dt, dt)
    sol = solve_ivp(rhs, (0.0, times[-1]), [t_start], method="RK45", t_eval=times,
                    rtol=rtol, atol=1e-12 * t_start)
    if not sol.success:
        raise IntegrationError(f"decay integration failed: {sol.message}")
    return DecayCurve(sol.t, sol.y[0])


def power_step_decay(config: ThermalConfig, t_set: float, t_flange: float, fraction: float = 0.05,
                     duration_taus: float = 8.0, samples: int = 400) -> DecayCurve:
    """Cooling curve after dropping the steady heater power by ``fraction``."""
    p0 = heater_power_for_setpoint(config, t_set, t_flange)
    tau = time_constant(config, t_set)
    duration = duration_taus * tau
    return simulate_decay(config, t_set, t_flange, (1.0 - fraction) * p0, duration, duration / samples)


def _decay_model(t, t_inf, delta_t, tau):
    return t_inf + delta_t * np.exp(-t / tau)


def fit_exponential_decay(curve: DecayCurve, sigma=None) -> DecayFit:
    """Least-squares T(t) = T_inf + dT exp(-t / tau)."""
    if len(curve) < 5:
        raise ValueError("need at least 5 samples")
    t, temp = curve.time - curve.time[0], curve.temperature
    delta0 = temp[0] - temp[-1]
    spread = np.ptp(temp)
    if spread == 0 or abs(delta0) < 1e-3 * spread:
        raise ValueError("curve shows no decay")
    target = temp[-1] + delta0 / math.e
    crossed = np.nonzero((temp - target) * np.sign(delta0) <= 0)[0]
    tau0 = t[crossed[0]] if crossed.size and t[crossed[0]] > 0 else 0.3 * t[-1]
    try:
        popt, pcov = curve_fit(_decay_model, t, temp, p0=[temp[-1], delta0, tau0], sigma=sigma,
                               absolute_sigma=sigma is not None, maxfev=10000)
    except RuntimeError as exc:
        raise ValueError(f"exponential fit did not converge: {exc}") from exc
    t_inf, delta_t, tau = popt
    if not tau > 0 or not np.isfinite(pcov).all():
        raise ValueError("curve shows no decay")
    return DecayFit(float(tau), float(math.sqrt(pcov[2, 2])), float(t_inf), float(delta_t), pcov)
