"""Command-line entry point.

Every command writes machine-readable output (JSON envelope, or CSV for
row data) and records its full invocation so the run can be replayed.
Failures exit nonzero with a JSON error object on stderr.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import warnings
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .fileio import (
    ConfigError,
    FormatError,
    RunConfig,
    atomic_write_text,
    budget_from_dict,
    budget_to_dict,
    decay_csv_text,
    dumps,
    envelope,
    fit_report_from_dict,
    fit_report_to_dict,
    gains_from_dict,
    gains_to_dict,
    intrinsic_to_dict,
    load_run_config,
    noise_csv_text,
    open_envelope,
    read_json,
    read_noise_csv,
    read_touchstone_subset,
    sparam_report,
    sweep_csv_text,
    synthetic_attenuator,
    touchstone_text,
)
from .noisecalc import (
    ChainConfig,
    db_to_linear,
    effective_input_noise,
    idler_frequency,
    planck_input_noise,
    standard_quantum_limit,
    weighted_average_photons,
)
from .thermal import (
    ThermalConfig,
    channel_power,
    crossover_temperature,
    fit_exponential_decay,
    heater_power_for_setpoint,
    power_step_decay,
    time_constant,
    weak_link_power,
)
from .twpa import PumpSetting, TwpaParams, calibrate_loss_participation, gain_sweep
from .vlab import (
    CampaignTruth,
    InstrumentErrors,
    default_thru_plan,
    default_twpa_plan,
    manley_rowe_conversion_gain,
    simulate_campaign,
)
from .yfit import (
    LossBounds,
    Path,
    PathNoise,
    analyze_path,
    average_gains,
    group_samples,
    intrinsic_twpa_report,
)

_G10 = float(db_to_linear(10.0))
# measured-scale cascade used when no config supplies one
DEFAULT_CHAIN = ChainConfig(g_hemt=1e4, t_hemt=3.16, t_bkg=300.0, bandwidth_b=100.0,
                            g_twpa=_G10, g_conv=float(manley_rowe_conversion_gain(_G10)), t_twpa=0.35)


class CliError(Exception):
    def __init__(self, message: str, kind: str = "usage", code: int = 2):
        super().__init__(message)
        self.kind = kind
        self.code = code


def _path_arg(text: str) -> Path:
    for p in Path:
        if p.value.lower() == text.lower():
            return p
    raise argparse.ArgumentTypeError(f"unknown path {text!r} (choose from {', '.join(p.value for p in Path)})")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(f"{self.prog}: {message}")


class _Context:
    def __init__(self, args, argv: Sequence[str]):
        self.args = args
        self.config = load_run_config(args.config) if args.config else RunConfig()
        self.invocation = {
            "argv": ["cryonoise", *argv],
            "version": __version__,
            "seed": args.seed,
            "config": self.config.raw,
        }

    def emit_json(self, kind: str, data) -> None:
        text = dumps(envelope(kind, data, self.invocation))
        if self.args.out:
            atomic_write_text(self.args.out, text)
        else:
            sys.stdout.write(text)

    def emit_text(self, text: str) -> None:
        if self.args.out:
            atomic_write_text(self.args.out, text)
        else:
            sys.stdout.write(text)

    def chain(self) -> ChainConfig:
        return self.config.chain or DEFAULT_CHAIN

    def twpa(self) -> TwpaParams:
        return self.config.twpa or TwpaParams()

    def thermal(self) -> ThermalConfig:
        return self.config.thermal or ThermalConfig()


# twpa ------------------------------------------------------------------------------

def cmd_twpa_gain(ctx: _Context) -> None:
    a = ctx.args
    params = ctx.twpa()
    if a.calibrate_loss:
        params = params.replace(loss_participation=calibrate_loss_participation(params, 8e9, a.loss_target_db))
    if a.n_points < 1 or not a.f_stop >= a.f_start:
        raise CliError("need n_points >= 1 and f_stop >= f_start")
    grid = np.linspace(a.f_start, a.f_stop, a.n_points)
    rows = gain_sweep(params, PumpSetting(a.f_pump, a.i_p_ratio), grid)
    ctx.emit_text(sweep_csv_text(rows))


# noise -----------------------------------------------------------------------------

def _loss_bounds(args, path: Path) -> LossBounds:
    overrides = {k: getattr(args, k) for k in ("dg_att_db", "dt_att", "dt_bkg", "dg_hemt_db")
                 if getattr(args, k) is not None}
    return LossBounds.for_path(path, **overrides)


def _truth_check(entries: list[dict], sidecar_file: str) -> dict:
    doc = read_json(sidecar_file)
    record = open_envelope(doc, "vlab-truth")["record"]
    truths = {(record["path"], t["f_signal"]): t for t in record["truths"]}
    checks = []
    for e in entries:
        r = e["report"]
        t = truths.get((r["path"], r["f_signal"]))
        if t is None:
            continue
        pull = (r["offset"] - t["offset"]) / r["offset_err"]
        checks.append({"path": r["path"], "f_signal": r["f_signal"], "true_offset": t["offset"],
                       "fitted_offset": r["offset"], "offset_err": r["offset_err"], "pull": pull,
                       "covered": abs(pull) <= 1.0})
    if not checks:
        raise CliError("truth sidecar shares no (path, frequency) with the samples", kind="data", code=1)
    covered = sum(c["covered"] for c in checks)
    return {"checks": checks, "n": len(checks), "covered": covered, "coverage": covered / len(checks),
            "pass": covered == len(checks)}


def cmd_noise_fit(ctx: _Context) -> None:
    a = ctx.args
    samples = read_noise_csv(a.samples)
    if a.path:
        samples = [s for s in samples if s.path is a.path]
    if not samples:
        raise CliError("no samples to fit", kind="data", code=1)
    chain = ctx.chain()
    entries = []
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        for (path, f), group in group_samples(samples).items():
            gains = average_gains(group) if path is Path.TWPA else None
            result = analyze_path(group, chain, _loss_bounds(a, path), gains)
            entries.append({
                "report": fit_report_to_dict(result.report),
                "offset_err_scaled": result.report.offset_err_scaled,
                "budget": budget_to_dict(result.budget),
                "t_sys": result.t_sys,
                "gains": gains_to_dict(gains) if gains else None,
            })
    data = {"entries": entries, "warnings": sorted({str(w.message) for w in caught})}
    if a.check_truth:
        data["truth_check"] = _truth_check(entries, a.check_truth)
    ctx.emit_json("noise-fit", data)


def cmd_noise_input(ctx: _Context) -> None:
    a = ctx.args
    data = {
        "f_signal": a.f,
        "t_bath": a.t_bath,
        "t_in": float(planck_input_noise(a.f, a.t_bath)),
        "sql": float(standard_quantum_limit(a.f)),
    }
    if a.f_pump is not None:
        g = float(db_to_linear(a.g_twpa_db))
        gc = float(db_to_linear(a.g_conv_db)) if a.g_conv_db is not None else float(manley_rowe_conversion_gain(g))
        data.update({
            "f_pump": a.f_pump,
            "f_idler": float(idler_frequency(a.f_pump, a.f)),
            "g_twpa": g,
            "g_conv": gc,
            "t_in_eff": float(effective_input_noise(a.f, a.f_pump, a.t_bath, g, gc)),
        })
    ctx.emit_json("noise-input", data)


def _load_paths(files: Sequence[str]) -> dict:
    by_path: dict = {Path.THRU: {}, Path.TWPA: {}}
    for name in files:
        for e in open_envelope(read_json(name), "noise-fit")["entries"]:
            report = fit_report_from_dict(e["report"])
            if report.path in by_path:
                noise = PathNoise(report, budget_from_dict(e["budget"]))
                gains = gains_from_dict(e["gains"]) if e.get("gains") else None
                by_path[report.path][report.f_signal] = (noise, gains)
    return by_path


def cmd_noise_photons(ctx: _Context) -> None:
    by_path = _load_paths(ctx.args.reports)
    thru, twpa = by_path[Path.THRU], by_path[Path.TWPA]
    points = []
    for f, (tw, gains) in sorted(twpa.items()):
        match = [v for k, v in thru.items() if math.isclose(k, f, rel_tol=1e-9)]
        if not match:
            continue
        points.append(intrinsic_twpa_report(match[0][0], tw, gains))
    if not points:
        raise CliError("no signal frequency has both a Thru and a Twpa report", kind="data", code=1)
    n_bar, lo, hi = weighted_average_photons([(p.photons, p.photons_lo, p.photons_hi) for p in points])
    ctx.emit_json("noise-photons", {
        "points": [intrinsic_to_dict(p) for p in points],
        "n_bar": n_bar, "n_bar_lo": lo, "n_bar_hi": hi,
    })


# thermal ---------------------------------------------------------------------------

def cmd_thermal_tau(ctx: _Context) -> None:
    cfg = ctx.thermal()
    temps = np.asarray(ctx.args.t, dtype=float)
    ctx.emit_json("thermal-tau", {
        "t_k": temps.tolist(),
        "tau_s": np.atleast_1d(time_constant(cfg, temps)).tolist(),
        "config": cfg.to_dict(),
    })


def cmd_thermal_power(ctx: _Context) -> None:
    a, cfg = ctx.args, ctx.thermal()
    ctx.emit_json("thermal-power", {
        "t_hot": a.t_hot,
        "t_cold": a.t_cold,
        "power_w": float(weak_link_power(cfg, a.t_hot, a.t_cold)),
        "steel_w": float(channel_power(cfg, a.t_hot, a.t_cold, "steel")),
        "alox_w": float(channel_power(cfg, a.t_hot, a.t_cold, "alox")),
        "heater_w": float(heater_power_for_setpoint(cfg, a.t_hot, a.t_cold)),
        "crossover_k": crossover_temperature(cfg),
        "config": cfg.to_dict(),
    })


def cmd_thermal_decay(ctx: _Context) -> None:
    a, cfg = ctx.args, ctx.thermal()
    curve = power_step_decay(cfg, a.t_set, a.t_flange, a.fraction, a.duration_taus, a.samples)
    if a.noise_k > 0:
        rng = np.random.default_rng(a.seed)
        noisy = curve.temperature + rng.normal(0.0, a.noise_k, len(curve))
        curve = type(curve)(curve.time, noisy)
    text = decay_csv_text(curve)
    if a.out:
        fit = fit_exponential_decay(curve, sigma=np.full(len(curve), a.noise_k) if a.noise_k > 0 else None)
        atomic_write_text(a.out, text)
        summary = {"csv": a.out, "tau_model_s": float(time_constant(cfg, a.t_set)), "tau_fit_s": fit.tau,
                   "tau_fit_err_s": fit.tau_err, "t_inf_k": fit.t_inf}
        sys.stdout.write(dumps(envelope("thermal-decay", summary, ctx.invocation)))
    else:
        sys.stdout.write(text)


# vlab ------------------------------------------------------------------------------

def cmd_vlab_generate(ctx: _Context) -> None:
    a = ctx.args
    if not a.out:
        raise CliError("vlab generate needs --out for the samples CSV")
    cfg = ctx.config
    if cfg.plan is not None:
        plan = cfg.plan
    else:
        if a.path not in (Path.THRU, Path.TWPA):
            raise CliError("vlab simulates the Thru and Twpa paths only")
        builder = default_twpa_plan if a.path is Path.TWPA else default_thru_plan
        f_sig = tuple(a.f_signal) if a.f_signal else None
        kwargs = {"n_setpoints": a.n_setpoints}
        if f_sig:
            kwargs["f_signal"] = f_sig
        plan = builder(**kwargs)
    base = cfg.errors or InstrumentErrors()
    errors = InstrumentErrors(**{**base.to_dict(), "seed": a.seed})
    truth = CampaignTruth(ctx.chain(), cfg.twpa, cfg.g_tot if cfg.g_tot is not None else 1e9)
    samples, record = simulate_campaign(plan, truth, errors, ctx.thermal())
    sidecar = a.out + ".truth.json"
    atomic_write_text(a.out, noise_csv_text(samples))
    atomic_write_text(sidecar, dumps(envelope("vlab-truth", {
        "record": record.to_dict(), "plan": plan.to_dict(), "errors": errors.to_dict()}, ctx.invocation)))
    sys.stdout.write(dumps(envelope("vlab-generate", {
        "samples_csv": a.out, "truth_sidecar": sidecar, "n_samples": len(samples),
        "low_snr": record.low_snr}, ctx.invocation)))


# sparam ----------------------------------------------------------------------------

def cmd_sparam_report(ctx: _Context) -> None:
    a = ctx.args
    ctx.emit_json("sparam-report", sparam_report(read_touchstone_subset(a.touchstone), a.match_limit_db))


def cmd_sparam_synth(ctx: _Context) -> None:
    a = ctx.args
    freq = np.linspace(a.f_start, a.f_stop, a.n_points)
    table = synthetic_attenuator(freq, a.attenuation_db, a.match_db, a.ripple_db, a.seed)
    ctx.emit_text(touchstone_text(table, a.unit, a.fmt))


# parser ----------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="seed for all randomness")
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--out", help="output file (default: stdout)")

    root = _Parser(prog="cryonoise", description="Cryogenic Y-factor noise toolkit")
    root.add_argument("--version", action="version", version=__version__)
    groups = root.add_subparsers(dest="group", required=True)

    def group(name, help_):
        p = groups.add_parser(name, help=help_)
        return p.add_subparsers(dest="command", required=True)

    def command(sub, name, func, help_):
        p = sub.add_parser(name, parents=[common], help=help_)
        p.set_defaults(func=func)
        return p

    twpa = group("twpa", "TWPA coupled-mode model")
    p = command(twpa, "gain", cmd_twpa_gain, "dressed gain sweep as CSV")
    p.add_argument("--f-start", type=float, default=4e9)
    p.add_argument("--f-stop", type=float, default=8e9)
    p.add_argument("--n-points", type=int, default=201)
    p.add_argument("--f-pump", type=float, default=5.968e9)
    p.add_argument("--i-p-ratio", type=float, default=None, help="pump current / critical current")
    p.add_argument("--calibrate-loss", action="store_true", help="fit loss participation at 8 GHz first")
    p.add_argument("--loss-target-db", type=float, default=4.5)

    noise = group("noise", "Y-factor analysis")
    p = command(noise, "fit", cmd_noise_fit, "fit noise samples to FitReport + ErrorBudget JSON")
    p.add_argument("samples", help="noise samples CSV")
    p.add_argument("--path", type=_path_arg)
    p.add_argument("--dg-att-db", type=float, help="one-sided insertion-loss gain bound (<= 0)")
    p.add_argument("--dt-att", type=float, help="one-sided insertion-loss temperature bound (<= 0)")
    p.add_argument("--dt-bkg", type=float)
    p.add_argument("--dg-hemt-db", type=float)
    p.add_argument("--check-truth", metavar="SIDECAR", help="score the fit against a vlab truth sidecar")

    p = command(noise, "input", cmd_noise_input, "input noise of a bath (and TWPA effective input noise)")
    p.add_argument("--f", type=float, required=True, help="signal frequency in Hz")
    p.add_argument("--t-bath", type=float, required=True, help="bath temperature in K")
    p.add_argument("--f-pump", type=float)
    p.add_argument("--g-twpa-db", type=float, default=10.0)
    p.add_argument("--g-conv-db", type=float)

    p = command(noise, "photons", cmd_noise_photons, "intrinsic TWPA noise in photons from fit reports")
    p.add_argument("reports", nargs="+", help="noise fit JSON files covering Thru and Twpa")

    thermal = group("thermal", "weak-link thermal model")
    p = command(thermal, "tau", cmd_thermal_tau, "time constant C/G")
    p.add_argument("--t", type=float, nargs="+", required=True)
    p = command(thermal, "power", cmd_thermal_power, "weak-link heat flow")
    p.add_argument("--t-hot", type=float, required=True)
    p.add_argument("--t-cold", type=float, default=0.1)
    p = command(thermal, "decay", cmd_thermal_decay, "decay after a heater power step")
    p.add_argument("--t-set", type=float, required=True)
    p.add_argument("--t-flange", type=float, default=0.1)
    p.add_argument("--fraction", type=float, default=0.05)
    p.add_argument("--duration-taus", type=float, default=8.0)
    p.add_argument("--samples", type=int, default=400)
    p.add_argument("--noise-k", type=float, default=0.0, help="thermometer noise added to the curve")

    vlab = group("vlab", "virtual measurement campaigns")
    p = command(vlab, "generate", cmd_vlab_generate, "samples CSV plus truth sidecar")
    p.add_argument("--path", type=_path_arg, default=Path.THRU)
    p.add_argument("--f-signal", type=float, nargs="+")
    p.add_argument("--n-setpoints", type=int, default=12)

    sparam = group("sparam", "two-port S-parameter files")
    p = command(sparam, "report", cmd_sparam_report, "attenuation flatness and match")
    p.add_argument("touchstone")
    p.add_argument("--match-limit-db", type=float, default=-20.0)
    p = command(sparam, "synth", cmd_sparam_synth, "synthetic attenuator Touchstone file")
    p.add_argument("--f-start", type=float, default=0.5e9)
    p.add_argument("--f-stop", type=float, default=11e9)
    p.add_argument("--n-points", type=int, default=211)
    p.add_argument("--attenuation-db", type=float, default=9.977)
    p.add_argument("--match-db", type=float, default=-25.0)
    p.add_argument("--ripple-db", type=float, default=0.0)
    p.add_argument("--unit", choices=["HZ", "GHZ"], default="HZ")
    p.add_argument("--fmt", choices=["RI", "DB"], default="RI")
    return root


def _fail(kind: str, message: str, code: int) -> int:
    sys.stderr.write(json.dumps({"error": kind, "message": message}, sort_keys=True) + "\n")
    return code


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        ctx = _Context(args, argv)
        args.func(ctx)
    except CliError as exc:
        return _fail(exc.kind, str(exc), exc.code)
    except (FormatError, ConfigError) as exc:
        return _fail("input", str(exc), 1)
    except OSError as exc:
        return _fail("io", str(exc), 1)
    except (ValueError, KeyError, ArithmeticError) as exc:
        return _fail("data", str(exc), 1)
    return 0


if __name__ == "__main__":
    sys.exit(main())
