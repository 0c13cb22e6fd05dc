"""Synthetic Y-factor campaigns with known ground truth.

Truth powers come from the forward noise models; instrument errors are
Gaussian in their natural units (kelvin for the thermometer, dB for the
analyzer) plus a per-path switch offset drawn once per campaign.  Random
streams are split with ``SeedSequence(seed, spawn_key=(path, freq_index))``
so each frequency's stream is independent of how many others exist.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .noisecalc import (
    K_BOLTZMANN,
    T_BASE,
    ChainConfig,
    db_to_linear,
    effective_input_noise,
    expected_output_power_thru,
    idler_frequency,
    linear_to_db,
    planck_input_noise,
    system_noise_twpa_forward,
)
from .thermal import ThermalConfig, heater_power_for_setpoint, time_constant
from .twpa import PumpSetting, TwpaParams, cme_integrate, fabry_perot_dress
from .yfit import NoiseSample, Path, switch_repeatability_db

#: saturation bound for the TWPA path
TWPA_MAX_BATH = 0.9
#: recorded uncertainty when an error source is switched off, so fits stay weighted
ERROR_FLOOR = 1e-6
MIN_SNR_DB = 10.0

_PATH_INDEX = {Path.THRU: 0, Path.TWPA: 1, Path.DIRECT_HEMT: 2}


@dataclass(frozen=True)
class CampaignPlan:
    path: Path
    setpoints: tuple
    f_signal: tuple
    f_pump: Optional[float] = None
    span: float = 10e3
    rbw: float = 100.0
    probe_power: float = 1e-16
    wait_rule: float = 2.5
    wait_s: float = 1200.0

    def __post_init__(self):
        object.__setattr__(self, "path", Path(self.path))
        object.__setattr__(self, "setpoints", tuple(float(t) for t in self.setpoints))
        object.__setattr__(self, "f_signal", tuple(float(f) for f in self.f_signal))
        if not self.setpoints or not self.f_signal:
            raise ValueError("plan needs setpoints and signal frequencies")
        if min(self.setpoints) <= 0 or min(self.f_signal) <= 0:
            raise ValueError("setpoints and frequencies must be positive")
        if self.span / self.rbw < 1:
            raise ValueError("span must be at least one resolution bandwidth")
        if self.wait_rule < 2.5:
            raise ValueError("wait_rule must be >= 2.5 time constants")
        if self.path is Path.TWPA:
            if self.f_pump is None:
                raise ValueError("Twpa plan needs f_pump")
            if max(self.setpoints) > TWPA_MAX_BATH:
                raise ValueError(f"Twpa setpoints must stay <= {TWPA_MAX_BATH} K to avoid saturation")
            for f in self.f_signal:
                idler_frequency(self.f_pump, f)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["path"] = self.path.value
        d["setpoints"] = list(self.setpoints)
        d["f_signal"] = list(self.f_signal)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "CampaignPlan":
        return cls(**data)


@dataclass(frozen=True)
class InstrumentErrors:
    thermometer_sigma: float = 6e-3
    analyzer_sigma_db: float = 0.25
    switch: bool = True
    analyzer_noise_floor: float = 1e-18  # W/Hz
    seed: int = 0

    def __post_init__(self):
        if self.thermometer_sigma < 0 or self.analyzer_sigma_db < 0 or self.analyzer_noise_floor < 0:
            raise ValueError("instrument errors must be non-negative")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")

    @classmethod
    def none(cls, seed: int = 0) -> "InstrumentErrors":
        return cls(0.0, 0.0, False, 0.0, seed)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "InstrumentErrors":
        return cls(**data)


@dataclass(frozen=True)
class CampaignTruth:
    """Ground truth of the simulated cascade.

    ``g_tot`` is the total linear gain from the source to the analyzer on the
    bypass path; the TWPA gain multiplies it on the Twpa path.  Twpa gains
    come from ``chain.g_twpa/g_conv`` (scalar or one value per signal
    frequency) or, failing that, from the TWPA model.
    """

    chain: ChainConfig
    twpa: Optional[TwpaParams] = None
    g_tot: float = 1e9

    def __post_init__(self):
        if not self.g_tot > 0:
            raise ValueError("g_tot must be positive")


@dataclass
class FrequencyTruth:
    f_signal: float
    offset: float
    t_sys_base: float
    switch_offset_db: float
    g_twpa_db: Optional[float] = None
    g_conv_db: Optional[float] = None
    f_idler: Optional[float] = None
    # what system-minus-bypass/G extraction returns: t_twpa plus input-noise terms
    intrinsic: Optional[float] = None


@dataclass
class CampaignRecord:
    """Sidecar: everything needed to score a fit, kept apart from the samples."""

    path: Path
    seed: int
    truths: list[FrequencyTruth]
    low_snr: list[int] = field(default_factory=list)
    waits: list[dict] = field(default_factory=list)

    def truth_at(self, f_signal: float) -> FrequencyTruth:
        for t in self.truths:
            if math.isclose(t.f_signal, f_signal, rel_tol=1e-12):
                return t
        raise KeyError(f"no truth recorded at {f_signal} Hz")

    def to_dict(self) -> dict:
        return {
            "path": self.path.value,
            "seed": self.seed,
            "truths": [asdict(t) for t in self.truths],
            "low_snr": list(self.low_snr),
            "waits": list(self.waits),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CampaignRecord":
        return cls(Path(data["path"]), int(data["seed"]), [FrequencyTruth(**t) for t in data["truths"]],
                   list(data.get("low_snr", [])), list(data.get("waits", [])))


def manley_rowe_conversion_gain(g_twpa):
    """Lossless four-wave-mixing conversion gain G - 1 (linear)."""
    g_twpa = np.asarray(g_twpa, dtype=float)
    if np.any(g_twpa < 1):
        raise ValueError("Manley-Rowe conversion needs gain >= 1")
    return (g_twpa - 1.0)[()]


def rng_for(seed: int, path: Path, index: Optional[int] = None) -> np.random.Generator:
    """Independent stream per (path, frequency index); ``index=None`` is the campaign-wide stream."""
    key = (_PATH_INDEX[Path(path)],) if index is None else (_PATH_INDEX[Path(path)], index, 0)
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


def _per_frequency(value, n, name):
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        return np.full(n, float(arr))
    if arr.shape != (n,):
        raise ValueError(f"{name} must be scalar or have one value per signal frequency")
    return arr


def _twpa_gains(plan: CampaignPlan, truth: CampaignTruth):
    n = len(plan.f_signal)
    chain = truth.chain
    if chain.g_twpa is not None:
        g, gc = _per_frequency(chain.g_twpa, n, "g_twpa"), _per_frequency(chain.g_conv, n, "g_conv")
        if np.any(gc <= 0):
            raise ValueError("Twpa campaign needs positive conversion gain")
        return g, gc
    if truth.twpa is None:
        raise ValueError("Twpa campaign needs chain.g_twpa/g_conv or TWPA parameters")
    g, gc = [], []
    for f in plan.f_signal:
        tp = cme_integrate(truth.twpa, PumpSetting(plan.f_pump), f)
        on, _ = fabry_perot_dress(tp.s_on, tp.s_off, truth.twpa.r_mirror)
        g.append(abs(on) ** 2)
        gc.append(abs(tp.g_conv) ** 2)
    return np.array(g), np.array(gc)


def true_offset(plan: CampaignPlan, truth: CampaignTruth, g_twpa: float = None) -> float:
    """Offset the Y-factor fit should recover for this path."""
    chain = truth.chain
    if plan.path is Path.TWPA:
        if chain.t_twpa is None:
            raise ValueError("Twpa truth needs chain.t_twpa")
        return float(chain.t_bkg / (chain.g_hemt * g_twpa) + chain.t_hemt / g_twpa + chain.t_twpa)
    return float(chain.t_hemt + chain.background)


def simulate_campaign(plan: CampaignPlan, truth: CampaignTruth, errors: InstrumentErrors,
                      thermal: Optional[ThermalConfig] = None):
    """Generate noisy samples for every (frequency, setpoint) and the truth sidecar.

    Samples are ordered by frequency, then setpoint.  Returns ``(samples, record)``.
    """
    chain = truth.chain
    is_twpa = plan.path is Path.TWPA
    if is_twpa:
        g_twpa, g_conv = _twpa_gains(plan, truth)
    bandwidth = chain.bandwidth_b
    t_set = np.array(plan.setpoints)

    z_switch = rng_for(errors.seed, plan.path).standard_normal() if errors.switch else 0.0
    t_err = max(errors.thermometer_sigma, ERROR_FLOOR)
    p_err_db = max(errors.analyzer_sigma_db, ERROR_FLOOR)

    samples, truths, low_snr = [], [], []
    for j, f_s in enumerate(plan.f_signal):
        rng = rng_for(errors.seed, plan.path, j)
        switch_db = float(z_switch * switch_repeatability_db(f_s))
        if is_twpa:
            f_i = float(idler_frequency(plan.f_pump, f_s))
            g, gc = float(g_twpa[j]), float(g_conv[j])
            t_in = effective_input_noise(f_s, plan.f_pump, t_set, g, gc)
            forward = ChainConfig(chain.g_hemt, chain.t_hemt, chain.t_bkg, bandwidth,
                                  g_twpa=g, g_conv=gc, t_twpa=chain.t_twpa)
            p_true = truth.g_tot * g * K_BOLTZMANN * bandwidth * system_noise_twpa_forward(forward, t_in)
            offset = true_offset(plan, truth, g)
            t_base = offset + float(effective_input_noise(f_s, plan.f_pump, T_BASE, g, gc))
            t_base_bypass = chain.t_hemt + chain.background + float(planck_input_noise(f_s, T_BASE))
            ft = FrequencyTruth(f_s, offset, t_base, switch_db, float(linear_to_db(g)),
                                float(linear_to_db(gc)), f_i,
                                t_base - t_base_bypass / g)
        else:
            f_i = None
            t_in = planck_input_noise(f_s, t_set)
            p_true = expected_output_power_thru(chain, t_in, truth.g_tot)
            offset = true_offset(plan, truth)
            ft = FrequencyTruth(f_s, offset, offset + float(planck_input_noise(f_s, T_BASE)), switch_db)
        truths.append(ft)

        n = len(t_set)
        d_temp = rng.normal(0.0, errors.thermometer_sigma, n) if errors.thermometer_sigma else np.zeros(n)
        d_p = rng.normal(0.0, errors.analyzer_sigma_db, n) if errors.analyzer_sigma_db else np.zeros(n)
        if is_twpa:
            d_g = rng.normal(0.0, errors.analyzer_sigma_db, (n, 2)) if errors.analyzer_sigma_db else np.zeros((n, 2))

        p_meas = p_true * np.power(10.0, (d_p + switch_db) / 10.0)
        floor = errors.analyzer_noise_floor * bandwidth
        for i in range(n):
            if floor > 0 and 10 * math.log10(p_true[i] / floor) < MIN_SNR_DB:
                low_snr.append(len(samples))
            t_rec = max(float(t_set[i] + d_temp[i]), 0.0)
            kwargs = {}
            if is_twpa:
                kwargs = dict(f_idler=f_i, g_twpa_db=ft.g_twpa_db + switch_db + float(d_g[i, 0]),
                              g_conv_db=ft.g_conv_db + switch_db + float(d_g[i, 1]))
            samples.append(NoiseSample(plan.path, f_s, t_rec, t_err, float(p_meas[i]), p_err_db, **kwargs))

    waits = []
    if thermal is not None:
        for t in plan.setpoints:
            need = plan.wait_rule * float(time_constant(thermal, t))
            waits.append({"t_set_k": t, "required_s": need, "ok": plan.wait_s >= need})
    return samples, CampaignRecord(plan.path, errors.seed, truths, low_snr, waits)


def pump_backaction_budget(directivity_db: float = 15.0, twpa_reflection_db: float = 16.5,
                           pump_power_at_twpa: float = 1.4e-10, heater_power: Optional[float] = None) -> dict:
    """Pump power leaking back to the noise source and its size relative to the heater.

    The leak is the pump reflected at the TWPA input and passed through the
    coupler's isolated port; ``heater_power`` defaults to the 1 K setpoint.
    """
    if pump_power_at_twpa < 0:
        raise ValueError("pump power must be non-negative")
    if heater_power is None:
        heater_power = float(heater_power_for_setpoint(ThermalConfig(), 1.0, 0.1))
    if not heater_power > 0:
        raise ValueError("heater power must be positive")
    leakage = pump_power_at_twpa * float(db_to_linear(-(directivity_db + twpa_reflection_db)))
    return {"leakage": leakage, "heater_power": heater_power, "ratio": leakage / heater_power}


def default_thru_plan(f_signal: Sequence[float] = (6e9,), n_setpoints: int = 12) -> CampaignPlan:
    return CampaignPlan(Path.THRU, tuple(np.linspace(0.135, 3.6, n_setpoints)), tuple(f_signal))


def default_twpa_plan(f_signal: Sequence[float] = (5.735e9,), f_pump: float = 5.968e9,
                      n_setpoints: int = 12) -> CampaignPlan:
    return CampaignPlan(Path.TWPA, tuple(np.linspace(0.135, 0.9, n_setpoints)), tuple(f_signal), f_pump)
