"""File formats: noise-sample CSV, sweep/decay CSV, versioned JSON reports, Touchstone subset.

Floats are written with ``repr`` so every reader recovers the exact binary
value.  All writers go through :func:`atomic_write_text`.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from dataclasses import asdict, dataclass, field
from pathlib import Path as FsPath
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .noisecalc import ChainConfig
from .thermal import DecayCurve, ThermalConfig
from .twpa import TwpaParams
from .vlab import CampaignPlan, InstrumentErrors
from .yfit import (
    ErrorBudget,
    ErrorTerm,
    FitReport,
    GainSummary,
    IntrinsicNoise,
    NoiseSample,
    Path,
)

NOISE_COLUMNS = ("path", "f_signal_hz", "f_idler_hz", "t_bath_k", "t_bath_err_k",
                 "p_out_w", "p_out_err_db", "g_twpa_db", "g_conv_db")
NOISE_SCHEMA = "noise-samples/1.0"
SWEEP_COLUMNS = ("f_hz", "gain_db", "loss_db", "conv_gain_db")
DECAY_COLUMNS = ("time_s", "temperature_k")
REPORT_VERSION = "1.0"
MAX_BATH_K = 400.0

_TWPA_REQUIRED = ("f_idler_hz", "g_twpa_db", "g_conv_db")


class FormatError(ValueError):
    """Malformed or unsupported input file."""


class ConfigError(ValueError):
    pass


def atomic_write_text(path, text: str) -> None:
    """Write to a temporary file in the target directory, then rename over ``path``."""
    path = FsPath(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(value) -> str:
    if value is None:
        return ""
    return repr(float(value))


def _check_schema(tag: str, expected: str) -> None:
    name, _, version = tag.partition("/")
    exp_name, _, exp_version = expected.partition("/")
    if name != exp_name:
        raise FormatError(f"schema {tag!r} is not {exp_name!r}")
    if version.split(".")[0] != exp_version.split(".")[0]:
        raise FormatError(f"unsupported {name} major version {version!r}; this reader handles {exp_version}")


# noise samples ---------------------------------------------------------------

def noise_csv_text(samples: Iterable[NoiseSample]) -> str:
    buf = io.StringIO()
    buf.write(f"# schema: {NOISE_SCHEMA}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(NOISE_COLUMNS)
    for s in samples:
        writer.writerow([s.path.value, _fmt(s.f_signal), _fmt(s.f_idler), _fmt(s.t_bath), _fmt(s.t_bath_err),
                         _fmt(s.p_out), _fmt(s.p_out_err_db), _fmt(s.g_twpa_db), _fmt(s.g_conv_db)])
    return buf.getvalue()


def write_noise_csv(samples: Iterable[NoiseSample], path) -> None:
    atomic_write_text(path, noise_csv_text(samples))


def _parse_float(text: str, column: str, lineno: int, required: bool) -> Optional[float]:
    text = text.strip()
    if text == "":
        if required:
            raise FormatError(f"line {lineno}: column {column!r} is required")
        return None
    try:
        value = float(text)
    except ValueError:
        raise FormatError(f"line {lineno}: column {column!r} is not a number: {text!r}") from None
    if not math.isfinite(value):
        raise FormatError(f"line {lineno}: column {column!r} must be finite")
    return value


def parse_noise_csv(text: str) -> list[NoiseSample]:
    lines = text.splitlines()
    start = 0
    while start < len(lines) and lines[start].startswith("#"):
        key, _, value = lines[start][1:].partition(":")
        if key.strip() == "schema":
            _check_schema(value.strip(), NOISE_SCHEMA)
        start += 1
    if start >= len(lines):
        raise FormatError("missing header row")
    reader = csv.reader(lines[start:])
    header = tuple(h.strip() for h in next(reader))
    if header != NOISE_COLUMNS:
        raise FormatError(f"line {start + 1}: header must be exactly {','.join(NOISE_COLUMNS)}")
    samples = []
    for offset, row in enumerate(reader):
        lineno = start + 2 + offset
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(NOISE_COLUMNS):
            raise FormatError(f"line {lineno}: expected {len(NOISE_COLUMNS)} columns, got {len(row)}")
        try:
            path = Path(row[0].strip())
        except ValueError:
            raise FormatError(f"line {lineno}: unknown path {row[0]!r}") from None
        cells = dict(zip(NOISE_COLUMNS, row))
        vals = {}
        for col in NOISE_COLUMNS[1:]:
            required = col in ("f_signal_hz", "t_bath_k", "t_bath_err_k", "p_out_w", "p_out_err_db") or (
                path is Path.TWPA and col in _TWPA_REQUIRED)
            vals[col] = _parse_float(cells[col], col, lineno, required)
        if vals["t_bath_k"] >= MAX_BATH_K:
            raise FormatError(f"line {lineno}: t_bath_k = {vals['t_bath_k']} is not a plausible bath "
                              f"temperature in kelvin (must be < {MAX_BATH_K})")
        try:
            samples.append(NoiseSample(path, vals["f_signal_hz"], vals["t_bath_k"], vals["t_bath_err_k"],
                                       vals["p_out_w"], vals["p_out_err_db"], vals["f_idler_hz"],
                                       vals["g_twpa_db"], vals["g_conv_db"]))
        except ValueError as exc:
            raise FormatError(f"line {lineno}: {exc}") from None
    return samples


def read_noise_csv(path) -> list[NoiseSample]:
    return parse_noise_csv(FsPath(path).read_text())


# plain numeric tables ---------------------------------------------------------

def table_csv_text(columns: Sequence[str], rows: Iterable[Sequence[float]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def parse_table_csv(text: str, columns: Sequence[str]) -> np.ndarray:
    reader = csv.reader(text.splitlines())
    header = tuple(h.strip() for h in next(reader, []))
    if header != tuple(columns):
        raise FormatError(f"line 1: header must be exactly {','.join(columns)}")
    rows = []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(columns):
            raise FormatError(f"line {lineno}: expected {len(columns)} columns, got {len(row)}")
        try:
            rows.append([float(c) for c in row])
        except ValueError as exc:
            raise FormatError(f"line {lineno}: {exc}") from None
    return np.array(rows, dtype=float).reshape(-1, len(columns))


def sweep_csv_text(rows: Iterable[Mapping[str, float]]) -> str:
    return table_csv_text(SWEEP_COLUMNS, ([r[c] for c in SWEEP_COLUMNS] for r in rows))


def read_sweep_csv(path) -> list[dict]:
    data = parse_table_csv(FsPath(path).read_text(), SWEEP_COLUMNS)
    return [dict(zip(SWEEP_COLUMNS, map(float, row))) for row in data]


def decay_csv_text(curve: DecayCurve) -> str:
    return table_csv_text(DECAY_COLUMNS, zip(curve.time, curve.temperature))


def read_decay_csv(path) -> DecayCurve:
    data = parse_table_csv(FsPath(path).read_text(), DECAY_COLUMNS)
    return DecayCurve(data[:, 0], data[:, 1])


# JSON reports -----------------------------------------------------------------

def _jsonable(obj):
    if isinstance(obj, Path):
        return obj.value
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def dumps(obj) -> str:
    """Deterministic JSON text (sorted keys, repr floats)."""
    return json.dumps(_jsonable(obj), sort_keys=True, indent=2) + "\n"


def envelope(kind: str, data, invocation: Optional[Mapping] = None) -> dict:
    return {"schema": f"cryonoise.{kind}", "version": REPORT_VERSION, "invocation": invocation or {}, "data": data}


def open_envelope(doc: Mapping, kind: str):
    if doc.get("schema") != f"cryonoise.{kind}":
        raise FormatError(f"expected a cryonoise.{kind} document, got {doc.get('schema')!r}")
    version = str(doc.get("version", ""))
    if version.split(".")[0] != REPORT_VERSION.split(".")[0]:
        raise FormatError(f"unsupported {kind} major version {version!r}; this reader handles {REPORT_VERSION}")
    return doc["data"]


def write_json(path, obj) -> None:
    atomic_write_text(path, dumps(obj))


def read_json(path):
    try:
        return json.loads(FsPath(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None


def fit_report_to_dict(report: FitReport) -> dict:
    d = asdict(report)
    d["path"] = report.path.value
    d["covariance"] = np.asarray(report.covariance).tolist()
    return d


def fit_report_from_dict(d: Mapping) -> FitReport:
    d = dict(d)
    d["path"] = Path(d["path"])
    d["covariance"] = np.array(d["covariance"], dtype=float)
    return FitReport(**d)


def budget_to_dict(budget: ErrorBudget) -> dict:
    return {"terms": [asdict(t) for t in budget.terms], "total_lo": budget.total_lo, "total_hi": budget.total_hi}


def budget_from_dict(d: Mapping) -> ErrorBudget:
    return ErrorBudget([ErrorTerm(**t) for t in d["terms"]])


def gains_to_dict(gains: GainSummary) -> dict:
    return asdict(gains)


def gains_from_dict(d: Mapping) -> GainSummary:
    return GainSummary(**d)


def intrinsic_to_dict(r: IntrinsicNoise) -> dict:
    return asdict(r)


def sample_to_dict(s: NoiseSample) -> dict:
    d = asdict(s)
    d["path"] = s.path.value
    return d


def sample_from_dict(d: Mapping) -> NoiseSample:
    return NoiseSample(**d)


# configuration ------------------------------------------------------------------

def _chain_from_dict(d: Mapping) -> ChainConfig:
    d = dict(d)
    for key in ("g_twpa", "g_conv"):
        if isinstance(d.get(key), list):
            d[key] = tuple(d[key])
    unknown = set(d) - set(ChainConfig.__dataclass_fields__)
    if unknown:
        raise ConfigError(f"unknown chain parameter(s): {', '.join(sorted(unknown))}")
    return ChainConfig(**d)


@dataclass
class RunConfig:
    chain: Optional[ChainConfig] = None
    twpa: Optional[TwpaParams] = None
    thermal: Optional[ThermalConfig] = None
    plan: Optional[CampaignPlan] = None
    errors: Optional[InstrumentErrors] = None
    g_tot: Optional[float] = None
    raw: dict = field(default_factory=dict)

    def require(self, *sections: str):
        missing = [s for s in sections if getattr(self, s) is None]
        if missing:
            raise ConfigError(f"config is missing section(s): {', '.join(missing)}")

    @classmethod
    def from_dict(cls, d: Mapping) -> "RunConfig":
        known = {"chain", "twpa", "thermal", "plan", "errors", "g_tot"}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config section(s): {', '.join(sorted(unknown))}")
        try:
            return cls(
                chain=_chain_from_dict(d["chain"]) if "chain" in d else None,
                twpa=TwpaParams.from_dict(d["twpa"]) if "twpa" in d else None,
                thermal=ThermalConfig.from_dict(d["thermal"]) if "thermal" in d else None,
                plan=CampaignPlan.from_dict(d["plan"]) if "plan" in d else None,
                errors=InstrumentErrors.from_dict(d["errors"]) if "errors" in d else None,
                g_tot=float(d["g_tot"]) if "g_tot" in d else None,
                raw=dict(d),
            )
        except TypeError as exc:
            raise ConfigError(f"bad config: {exc}") from None


def load_run_config(path) -> RunConfig:
    data = read_json(path)
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    return RunConfig.from_dict(data)


# Touchstone subset ----------------------------------------------------------------

_FREQ_UNITS = {"HZ": 1.0, "KHZ": 1e3, "MHZ": 1e6, "GHZ": 1e9}
_SUPPORTED_UNITS = ("HZ", "GHZ")
_SUPPORTED_FORMATS = ("RI", "DB")


@dataclass
class SParamTable:
    """Two-port S-parameters; ``s[k]`` is the 2x2 matrix [[S11, S12], [S21, S22]] at ``freq[k]``."""

    freq: np.ndarray
    s: np.ndarray
    z0: float = 50.0

    def __post_init__(self):
        self.freq = np.asarray(self.freq, dtype=float)
        self.s = np.asarray(self.s, dtype=complex)
        if self.s.shape != (self.freq.size, 2, 2):
            raise ValueError("s must have shape (n_freq, 2, 2)")
        if np.any(np.diff(self.freq) <= 0):
            raise ValueError("frequency grid must be strictly increasing")
        if not np.all(np.isfinite(self.s)):
            raise ValueError("S-parameters must be finite")
        if not self.z0 > 0:
            raise ValueError("reference impedance must be positive")


def _parse_option_line(line: str):
    tokens = line[1:].upper().split()
    unit, param, fmt, z0 = "GHZ", "S", "MA", 50.0
    i = 0
    while i < len(tokens):
        tok = tokens[i]
        if tok in _FREQ_UNITS:
            unit = tok
        elif tok in ("S", "Y", "Z", "H", "G"):
            param = tok
        elif tok in ("MA", "DB", "RI"):
            fmt = tok
        elif tok == "R" and i + 1 < len(tokens):
            z0 = float(tokens[i + 1])
            i += 1
        else:
            raise FormatError(f"unrecognized option token {tok!r}")
        i += 1
    if unit not in _SUPPORTED_UNITS:
        raise FormatError(f"frequency unit {unit} is not supported (use HZ or GHZ)")
    if param != "S":
        raise FormatError(f"parameter type {param} is not supported (only S)")
    if fmt not in _SUPPORTED_FORMATS:
        raise FormatError(f"data format {fmt} is not supported (use RI or DB)")
    return unit, fmt, z0


def parse_touchstone(text: str) -> SParamTable:
    option = None
    numbers: list[float] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("!", 1)[0].strip()
        if not line:
            continue
        if line.startswith("#"):
            if option is not None:
                raise FormatError(f"line {lineno}: second option line")
            option = _parse_option_line(line)
            continue
        if line.startswith("["):
            raise FormatError(f"line {lineno}: Touchstone v2 keywords are not supported")
        if option is None:
            raise FormatError(f"line {lineno}: data before the option line")
        try:
            numbers.extend(float(tok) for tok in line.split())
        except ValueError:
            raise FormatError(f"line {lineno}: non-numeric data") from None
    if option is None:
        raise FormatError("missing option line (e.g. '# HZ S RI R 50')")
    if not numbers or len(numbers) % 9:
        raise FormatError("two-port data must come in groups of 9 numbers per frequency")
    unit, fmt, z0 = option
    data = np.array(numbers).reshape(-1, 9)
    freq = data[:, 0] * _FREQ_UNITS[unit]
    a, b = data[:, 1::2], data[:, 2::2]
    if fmt == "RI":
        vals = a + 1j * b
    else:
        vals = np.power(10.0, a / 20.0) * np.exp(1j * np.deg2rad(b))
    # file order is S11 S21 S12 S22
    s = np.empty((len(freq), 2, 2), dtype=complex)
    s[:, 0, 0], s[:, 1, 0], s[:, 0, 1], s[:, 1, 1] = vals.T
    try:
        return SParamTable(freq, s, z0)
    except ValueError as exc:
        raise FormatError(str(exc)) from None


def read_touchstone_subset(path) -> SParamTable:
    return parse_touchstone(FsPath(path).read_text())


def touchstone_text(table: SParamTable, unit: str = "HZ", fmt: str = "RI") -> str:
    unit, fmt = unit.upper(), fmt.upper()
    if unit not in _SUPPORTED_UNITS or fmt not in _SUPPORTED_FORMATS:
        raise FormatError(f"cannot write {unit}/{fmt}")
    lines = [f"# {unit} S {fmt} R {table.z0!r}"]
    scale = _FREQ_UNITS[unit]
    for f, m in zip(table.freq, table.s):
        entries = [m[0, 0], m[1, 0], m[0, 1], m[1, 1]]
        parts = [repr(float(f / scale))]
        for z in entries:
            if fmt == "RI":
                parts += [repr(float(z.real)), repr(float(z.imag))]
            else:
                parts += [repr(float(20 * np.log10(abs(z)))), repr(float(np.rad2deg(np.angle(z))))]
        lines.append(" ".join(parts))
    return "\n".join(lines) + "\n"


def write_touchstone(table: SParamTable, path, unit: str = "HZ", fmt: str = "RI") -> None:
    atomic_write_text(path, touchstone_text(table, unit, fmt))


def synthetic_attenuator(freq=None, attenuation_db: float = 9.977, match_db: float = -25.0,
                         ripple_db: float = 0.0, seed: int = 0) -> SParamTable:
    """Matched, reciprocal attenuator with optional Gaussian ripple on |S21|."""
    if freq is None:
        freq = np.linspace(0.5e9, 11e9, 211)
    freq = np.asarray(freq, dtype=float)
    rng = np.random.default_rng(seed)
    ripple = rng.normal(0.0, ripple_db, freq.size) if ripple_db else np.zeros(freq.size)
    delay = 1e-9
    s21 = np.power(10.0, -(attenuation_db + ripple) / 20.0) * np.exp(-2j * np.pi * freq * delay)
    refl = np.power(10.0, match_db / 20.0) * np.exp(1j * rng.uniform(0, 2 * np.pi, (freq.size, 2)))
    s = np.empty((freq.size, 2, 2), dtype=complex)
    s[:, 0, 0], s[:, 1, 1] = refl[:, 0], refl[:, 1]
    s[:, 1, 0] = s[:, 0, 1] = s21
    return SParamTable(freq, s)


def sparam_report(table: SParamTable, match_limit_db: float = -20.0) -> dict:
    """Flatness and match summary of a two-port attenuator."""
    def db(x):
        return 20.0 * np.log10(np.abs(x))

    atten = -db(table.s[:, 1, 0])
    s11, s22 = db(table.s[:, 0, 0]), db(table.s[:, 1, 1])
    worst = float(max(s11.max(), s22.max()))
    return {
        "n_points": int(table.freq.size),
        "f_min_hz": float(table.freq[0]),
        "f_max_hz": float(table.freq[-1]),
        "z0_ohm": float(table.z0),
        "attenuation_mean_db": float(atten.mean()),
        "attenuation_std_db": float(atten.std()),
        "attenuation_p2p_db": float(np.ptp(atten)),
        "s11_max_db": float(s11.max()),
        "s22_max_db": float(s22.max()),
        "matched": worst < match_limit_db,
        "match_limit_db": match_limit_db,
        "reciprocity_max_abs": float(np.max(np.abs(table.s[:, 1, 0] - table.s[:, 0, 1]))),
    }
