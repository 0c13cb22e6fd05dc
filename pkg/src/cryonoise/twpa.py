"""Josephson TWPA transmission: dispersion, stiff-pump coupled modes, mirror ripples.

Positions along the line are measured in unit cells; wavenumbers are in
radians per cell.  The pump is undepleted and lossless, signal and idler see
dielectric loss.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields
from typing import Iterable, Optional

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from .noisecalc import idler_frequency

NEPER_TO_DB = 10.0 / math.log(10.0)


class IntegrationError(RuntimeError):
    pass


class CavityResonanceError(ArithmeticError):
    pass


@dataclass(frozen=True)
class TwpaParams:
    i_c: float = 4.4e-6
    omega_j: float = 2 * math.pi * 46.5e9
    n_cells: int = 1016
    junctions_per_cell: int = 4
    l_cell: float = 312e-12
    c_cell: float = 115e-15
    tan_delta: float = 0.0025
    i_p_ratio: float = 0.53
    r_mirror: float = 0.15
    # scales tan_delta; 1.0 is the bare loss tangent
    loss_participation: float = 1.0

    def __post_init__(self):
        if not 0 <= self.i_p_ratio < 1:
            raise ValueError("i_p_ratio must lie in [0, 1)")
        if not 0 <= self.r_mirror < 1:
            raise ValueError("r_mirror must lie in [0, 1)")
        if self.n_cells < 1 or self.junctions_per_cell < 1:
            raise ValueError("cell counts must be positive")
        for name in ("i_c", "omega_j", "l_cell", "c_cell"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.tan_delta < 0 or not self.loss_participation > 0:
            raise ValueError("tan_delta must be >= 0 and loss_participation > 0")

    @property
    def t_mirror(self) -> float:
        return math.sqrt(1.0 - self.r_mirror**2)

    @property
    def n_junctions(self) -> int:
        return self.n_cells * self.junctions_per_cell

    @property
    def f_plasma(self) -> float:
        return self.omega_j / (2 * math.pi)

    @property
    def f_cutoff(self) -> float:
        """Lumped LC cut-off of the unit cell, 1 / (pi sqrt(LC))."""
        return 1.0 / (math.pi * math.sqrt(self.l_cell * self.c_cell))

    @property
    def delay_per_cell(self) -> float:
        return math.sqrt(self.l_cell * self.c_cell)

    def replace(self, **changes) -> "TwpaParams":
        return TwpaParams(**{**asdict(self), **changes})

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "TwpaParams":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known - {"t_mirror"}
        if unknown:
            raise ValueError(f"unknown TWPA parameter(s): {', '.join(sorted(unknown))}")
        return cls(**{k: v for k, v in data.items() if k in known})


@dataclass(frozen=True)
class PumpSetting:
    f_p: float
    i_p_ratio: Optional[float] = None

    def ratio(self, params: TwpaParams) -> float:
        return params.i_p_ratio if self.i_p_ratio is None else self.i_p_ratio


@dataclass(frozen=True)
class TransmissionPoint:
    f_s: float
    s_on: complex
    s_off: complex
    g_conv: complex


def dispersion_k(params: TwpaParams, f, lossy: bool = True):
    """Wavenumber per cell, ``w sqrt(LC) / sqrt(1 - (w/w_J)^2)``.

    With ``lossy`` the imaginary part ``Re(k) * tan_delta * participation / 2``
    is added (amplitude attenuation per cell).
    """
    f = np.asarray(f, dtype=float)
    limit = min(params.f_plasma, params.f_cutoff)
    if np.any(f <= 0) or np.any(f >= limit):
        raise ValueError(f"frequency must lie in (0, {limit:.4g}) Hz, got {f}")
    w = 2 * math.pi * f
    k = w * params.delay_per_cell / np.sqrt(1.0 - (w / params.omega_j) ** 2)
    if lossy:
        k = k + 0.5j * k * params.tan_delta * params.loss_participation
    return k[()]


def coupling_coefficients(k_p: float, k_s: float, k_i: float, ratio: float) -> dict:
    """Stiff-pump four-wave-mixing coefficients (per cell) for pump ratio I_p/I_c.

    Cross-phase on signal/idler k r^2/4, pump self-phase k_p r^2/8, parametric
    coupling k r^2/8; ``delta_k`` is the total (linear plus Kerr) mismatch.
    """
    r2 = ratio * ratio
    alpha_s, alpha_i = k_s * r2 / 4, k_i * r2 / 4
    alpha_p = k_p * r2 / 8
    g_s, g_i = k_s * r2 / 8, k_i * r2 / 8
    delta_k = (2 * k_p - k_s - k_i) + (2 * alpha_p - alpha_s - alpha_i)
    return dict(alpha_s=alpha_s, alpha_i=alpha_i, alpha_p=alpha_p, g_s=g_s, g_i=g_i,
                kappa=math.sqrt(g_s * g_i), delta_k=delta_k)


def _cme_rhs(kappa, delta_k, gamma_s, gamma_i):
    def rhs(x, y):
        phase = np.exp(1j * delta_k * x)
        a_s, b = y
        return np.array([
            -gamma_s * a_s + 1j * kappa * b * phase,
            -gamma_i * b - 1j * kappa * a_s * np.conj(phase),
        ])
    return rhs


def _rk4(rhs, y0, length, n_steps):
    h = length / n_steps
    y = np.array(y0, dtype=complex)
    x = 0.0
    for _ in range(n_steps):
        k1 = rhs(x, y)
        k2 = rhs(x + h / 2, y + h / 2 * k1)
        k3 = rhs(x + h / 2, y + h / 2 * k2)
        k4 = rhs(x + h, y + h * k3)
        y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        x += h
    return y


def solve_coupled_modes(kappa, delta_k, gamma_s, gamma_i, length, y0=(1.0, 0.0),
                        method="DOP853", rtol=1e-12, atol=1e-14, n_steps=None):
    """Integrate the normalized signal / conjugate-idler envelopes over ``length`` cells.

    Amplitudes are photon-flux normalized so the coupling is symmetric and,
    without loss, ``|A_s|^2 - |A_i|^2`` is conserved.  ``method="rk4"`` uses a
    fixed-step classical Runge-Kutta with ``n_steps`` steps.  Returns
    ``(A_s(L), conj(A_i)(L))``.
    """
    rhs = _cme_rhs(kappa, delta_k, gamma_s, gamma_i)
    if method == "rk4":
        if not n_steps:
            raise ValueError("rk4 needs n_steps")
        out = _rk4(rhs, y0, length, n_steps)
    else:
        sol = solve_ivp(rhs, (0.0, length), np.asarray(y0, dtype=complex), method=method,
                        rtol=rtol, atol=atol)
        if not sol.success:
            raise IntegrationError(f"coupled-mode integration failed: {sol.message}")
        out = sol.y[:, -1]
    if not np.all(np.isfinite(out)):
        raise IntegrationError("coupled-mode integration produced non-finite amplitudes")
    return complex(out[0]), complex(out[1])


def cme_integrate(params: TwpaParams, pump: PumpSetting, f_s: float, **solver) -> TransmissionPoint:
    """Pumped and unpumped transmission of the bare line at signal ``f_s``."""
    f_i = idler_frequency(pump.f_p, f_s)
    ratio = pump.ratio(params)
    n = params.n_cells
    k_s = dispersion_k(params, f_s)
    s_off = complex(np.exp(-k_s.imag * n) * np.exp(1j * k_s.real * n))
    if ratio == 0:
        return TransmissionPoint(f_s, s_off, s_off, 0j)

    k_i = dispersion_k(params, f_i)
    k_p = dispersion_k(params, pump.f_p, lossy=False)
    c = coupling_coefficients(k_p, k_s.real, k_i.real, ratio)
    a_s, b = solve_coupled_modes(c["kappa"], c["delta_k"], k_s.imag, k_i.imag, n, **solver)

    s_on = a_s * np.exp(1j * (k_s.real + c["alpha_s"]) * n)
    # back to current units for the idler: a_i = conj(B) * sqrt(g_i / g_s) relative to a_s(0)
    g_conv = np.conj(b) * math.sqrt(c["g_i"] / c["g_s"]) * np.exp(1j * (k_i.real + c["alpha_i"]) * n)
    return TransmissionPoint(f_s, complex(s_on), s_off, complex(g_conv))


def fabry_perot_dress(s_on, s_off, r: float):
    """Dress bare transmissions with identical mirrors of reflection ``r`` at both ports.

    Backward waves see the unpumped transmission.  Returns
    ``(dressed_on, dressed_off)``.
    """
    if not 0 <= abs(r) < 1:
        raise ValueError("|r| must be < 1")
    t2 = 1.0 - r * r
    den_on = 1.0 - r * r * s_off * s_on
    den_off = 1.0 - r * r * s_off * s_off
    if np.any(np.abs(den_on) < 1e-12) or np.any(np.abs(den_off) < 1e-12):
        raise CavityResonanceError("cavity round trip is singular (|1 - r^2 S S| < 1e-12)")
    return t2 * s_on / den_on, t2 * s_off / den_off


def _db(amplitude):
    return 20.0 * np.log10(np.abs(amplitude))


def gain_sweep(params: TwpaParams, pump: PumpSetting, f_grid: Iterable[float], **solver) -> list[dict]:
    """Dressed gain, unpumped loss and bare conversion gain on a signal grid."""
    rows = []
    for f in f_grid:
        tp = cme_integrate(params, pump, float(f), **solver)
        on, off = fabry_perot_dress(tp.s_on, tp.s_off, params.r_mirror)
        conv = -np.inf if tp.g_conv == 0 else float(_db(tp.g_conv))
        rows.append({"f_hz": float(f), "gain_db": float(_db(on)), "loss_db": float(-_db(off)),
                     "conv_gain_db": conv})
    return rows


def bare_loss_db(params: TwpaParams, f) -> float:
    """Unpumped, undressed line loss in dB."""
    k = dispersion_k(params, f)
    return (NEPER_TO_DB * 2 * k.imag * params.n_cells)[()]


def calibrate_loss_participation(params: TwpaParams, f: float = 8e9, target_db: float = 4.5) -> float:
    """Participation factor giving ``target_db`` of bare unpumped loss at ``f``."""
    unit = params.replace(loss_participation=1.0)
    raw = bare_loss_db(unit, f)
    if raw <= 0:
        raise ValueError("line is lossless; nothing to calibrate")
    return float(target_db / raw)


def calibrate_pump_ratio(params: TwpaParams, f_p: float, f_s: float, target_gain_db: float,
                         bounds=(0.4, 0.6)) -> float:
    """Pump ratio in ``bounds`` whose bare (undressed) gain at ``f_s`` hits the target."""
    def excess(ratio):
        tp = cme_integrate(params, PumpSetting(f_p, ratio), f_s)
        return float(_db(tp.s_on)) - target_gain_db

    lo, hi = bounds
    e_lo, e_hi = excess(lo), excess(hi)
    if e_lo * e_hi > 0:
        raise ValueError(
            f"target gain {target_gain_db} dB not reachable with pump ratio in {bounds} "
            f"(range {e_lo + target_gain_db:.2f}..{e_hi + target_gain_db:.2f} dB)"
        )
    return float(brentq(excess, lo, hi, xtol=1e-8))


def ripple_spacing_estimate(params: TwpaParams, f: float) -> float:
    """Mirror ripple period 1 / (2 N tau_g) from the group delay per cell at ``f``."""
    w = 2 * math.pi * f
    x = (w / params.omega_j) ** 2
    tau_g = params.delay_per_cell / (1.0 - x) ** 1.5
    return 1.0 / (2 * params.n_cells * tau_g)
