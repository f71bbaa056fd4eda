"""Command-line front end.

Subcommands: simulate (one Monte-Carlo campaign), sweep (one noise axis),
design (smoother/plant/spectra dump), psd (forcing-generator check),
baseline (filtered-MSE report).  All outputs are CSV plus a JSON manifest;
reruns with the same config and seeds are byte-identical.

Exit codes: 0 success, 2 configuration/validation error, 3 numerical
failure, 4 loop divergence.
"""

import argparse
import csv
import math
import os
import sys

import numpy as np

from . import config as cfgmod
from .control import closed_loop_stability_margin
from .errors import ConfigError, DivergenceError, NumericalError, ResmoothError
from .estimation import design_smoother, error_psd, filtered_mse, improvement_factor
from .lti import freq_response, to_state_space
from .noise import (
    forcing_series,
    lorentzian_psd,
    shaping_filter,
    welch_psd,
    write_series_csv,
)
from .simloop import (
    campaign_seeds,
    point_seed,
    run_campaign,
    sweep,
    write_sweep_csv,
)

_BAND_ALIASES = {"inf": None, "125k": 125e3, "15k": 15e3}


def _parse_band(text):
    if text is None:
        return "keep"
    key = text.strip().lower()
    if key in _BAND_ALIASES:
        return _BAND_ALIASES[key]
    try:
        value = float(key)
    except ValueError:
        raise ConfigError(
            f"--band: expected inf, 125k, 15k or a frequency in Hz, got {text!r}"
        ) from None
    if value <= 0:
        raise ConfigError(f"--band: must be > 0, got {value}")
    return value


def _parse_values(text):
    try:
        values = [float(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise ConfigError(f"--values: expected a comma-separated list, got {text!r}") from None
    if not values:
        raise ConfigError("--values: empty list")
    if any(not math.isfinite(v) or v <= 0 for v in values):
        raise ConfigError("--values: all values must be positive and finite")
    return values


def _workers(args):
    if args.workers is not None:
        return max(1, int(args.workers))
    env = os.environ.get("RESMOOTH_WORKERS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _outdir(args):
    os.makedirs(args.out, exist_ok=True)
    return args.out


def _load(args):
    spec = cfgmod.load_config(args.config)
    return spec, cfgmod.build_sim_config(
        spec,
        seed_override=args.seed,
        runs_override=args.runs,
        band_override=_parse_band(args.band),
        force_no_delay=args.no_delay,
    )


def _write_row_csv(path, header, row):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerow([v if isinstance(v, str) else f"{v:.12g}" for v in row])


def _log(args, message):
    if args.verbose:
        print(message, file=sys.stderr)


def cmd_simulate(args):
    spec, cfg = _load(args)
    out = _outdir(args)
    _log(args, f"simulate: {cfg.n_runs} runs at Q={cfg.noise.Q} gamma={cfg.noise.gamma}")
    result = run_campaign(cfg, keep_records=args.dump_series, workers=_workers(args))
    band = math.inf if cfg.band_limit_hz is None else cfg.band_limit_hz
    _write_row_csv(
        os.path.join(out, "campaign.csv"),
        [
            "eps_sim_mean", "eps_sim_std", "eps_smoothed_theory", "eps_filtered",
            "sigma_theory", "sigma_sim_mean", "sigma_sim_std", "n_runs",
            "band_limit_hz", "delay_enabled", "target",
        ],
        [
            result.eps_sim_mean, result.eps_sim_std,
            result.theory.epsilon_smoothed, result.theory.epsilon_filtered,
            result.theory.sigma, result.sigma_sim_mean, result.sigma_sim_std,
            cfg.n_runs, band, str(cfg.delay_enabled).lower(), cfg.target,
        ],
    )
    if args.dump_series:
        for i, record in enumerate(result.records):
            path = os.path.join(out, f"run_{i:03d}.csv")
            with open(path, "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["time_s", "v_f", "v_eta", "v_y", "v_c", "v_z", "v_s"])
                times = record.v_f.times()
                for k in range(record.v_f.n):
                    w.writerow([
                        f"{times[k]:.12g}",
                        f"{record.v_f.samples[k]:.12g}",
                        f"{record.v_eta.samples[k]:.12g}",
                        f"{record.v_y.samples[k]:.12g}",
                        f"{record.v_c.samples[k]:.12g}",
                        f"{record.v_z.samples[k]:.12g}",
                        f"{record.v_s.samples[k]:.12g}",
                    ])
    cfgmod.write_manifest(
        os.path.join(out, "manifest.json"), spec,
        {"campaign": campaign_seeds(cfg.master_seed, cfg.n_runs)},
        extra={"command": "simulate"},
    )
    return 0


def cmd_sweep(args):
    spec, cfg = _load(args)
    out = _outdir(args)
    values = _parse_values(args.values)
    _log(args, f"sweep: axis={args.axis} values={values}")
    points = sweep(args.axis, values, cfg, workers=_workers(args))
    write_sweep_csv(points, os.path.join(out, "sweep.csv"))
    seeds = {
        f"point_{i}": campaign_seeds(point_seed(cfg.master_seed, i), cfg.n_runs)
        for i in range(len(values))
    }
    cfgmod.write_manifest(
        os.path.join(out, "manifest.json"), spec, seeds,
        extra={
            "command": "sweep",
            "axis": args.axis,
            "values": values,
            "failed_points": {
                str(p.value): p.error for p in points if p.error is not None
            },
        },
    )
    for p in points:
        if p.error is not None:
            print(f"warning: point {p.axis}={p.value} failed: {p.error}", file=sys.stderr)
    return 0


def cmd_design(args):
    spec, cfg = _load(args)
    out = _outdir(args)
    plant = cfg.plant
    smoother = design_smoother(
        plant.delay_free(), lambda w: lorentzian_psd(cfg.noise, w), cfg.noise.R
    )
    freqs = np.logspace(1, np.log10(cfg.sample_rate / 2.0), 600)
    omega = 2.0 * np.pi * freqs
    h_vals = freq_response(plant, omega)
    hs_vals = smoother.evaluate(omega)
    hs_neg = smoother.evaluate(-omega)
    s_f = lorentzian_psd(cfg.noise, omega)
    s_err = error_psd(
        smoother, plant.delay_free(), lambda w: lorentzian_psd(cfg.noise, w),
        cfg.noise.R, omega,
    )
    conj_residual = np.abs(hs_neg - np.conj(hs_vals))
    with open(os.path.join(out, "design.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["freq_hz", "h_re", "h_im", "hs_re", "hs_im",
                    "s_f", "s_err", "conj_sym_residual"])
        for i, f in enumerate(freqs):
            w.writerow([f"{v:.12g}" for v in (
                f, h_vals[i].real, h_vals[i].imag, hs_vals[i].real,
                hs_vals[i].imag, s_f[i], s_err[i], conj_residual[i])])
    return 0


def cmd_psd(args):
    spec, cfg = _load(args)
    out = _outdir(args)
    n = cfg.n_samples
    methods = ["shaping-filter", "ou-carrier"] if args.method == "both" else [args.method]
    seeds = campaign_seeds(cfg.master_seed, cfg.n_runs)
    columns = {}
    freqs = None
    for method in methods:
        acc = None
        for s in seeds:
            series = forcing_series(cfg.noise, n, cfg.sample_rate, s, method=method)
            freqs, psd = welch_psd(series, segment_len=min(4096, n))
            acc = psd if acc is None else acc + psd
        columns[method] = acc / len(seeds)
    analytic = 2.0 * lorentzian_psd(cfg.noise, 2.0 * np.pi * freqs)  # one-sided
    header = ["freq_hz", "s_f_analytic_onesided"] + [
        f"welch_{m.replace('-', '_')}" for m in methods
    ]
    with open(os.path.join(out, "psd.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for i, f in enumerate(freqs):
            row = [f, analytic[i]] + [columns[m][i] for m in methods]
            w.writerow([f"{v:.12g}" for v in row])
    if args.dump_series:
        series = forcing_series(cfg.noise, n, cfg.sample_rate, seeds[0], method=methods[0])
        write_series_csv(series, os.path.join(out, "forcing_example.csv"))
    return 0


def cmd_baseline(args):
    spec, cfg = _load(args)
    out = _outdir(args)
    report = improvement_factor(cfg.plant, cfg.noise, cfg.band_limit_hz,
                                cfg.target, cfg.a_pzt)
    plant_ss = to_state_space(cfg.plant.delay_free())
    shaping_ss = to_state_space(shaping_filter(cfg.noise))
    baseline, _ = filtered_mse(plant_ss, shaping_ss, cfg.noise.Q, cfg.noise.R,
                               cfg.target, cfg.a_pzt)
    gains = baseline.kalman_gain[:, 0]
    header = ["eps_filtered", "eps_smoothed_theory", "sigma_theory",
              "riccati_residual"] + [f"kalman_gain_{i}" for i in range(gains.size)]
    row = [report.epsilon_filtered, report.epsilon_smoothed, report.sigma,
           baseline.riccati_residual] + list(gains)
    _write_row_csv(os.path.join(out, "baseline.csv"), header, row)
    if cfg.controller is not None:
        margin = closed_loop_stability_margin(
            cfg.controller.h_c, cfg.effective_plant(), cfg.attenuation
        )
        _write_row_csv(
            os.path.join(out, "margins.csv"),
            ["gain_margin_db", "phase_margin_deg", "marginal"],
            [margin.gain_margin_db, margin.phase_margin_deg,
             str(margin.marginal).lower()],
        )
    return 0


def _add_common(p):
    p.add_argument("--config", required=True,
                   help="config file path or the bundled preset name 'reference'")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=None, help="master seed override")
    p.add_argument("--runs", type=int, default=None, help="n_runs override")
    p.add_argument("--band", default=None,
                   help="MSE band limit: inf, 125k, 15k, or Hz")
    p.add_argument("--no-delay", action="store_true",
                   help="strip the plant delay for this run")
    p.add_argument("--workers", type=int, default=None,
                   help="worker processes (default: RESMOOTH_WORKERS or all cores)")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="resmooth",
        description="Smoothing-versus-filtering estimation bench for a "
                    "resonantly forced cavity-mirror probe",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run one Monte-Carlo campaign")
    _add_common(p)
    p.add_argument("--dump-series", action="store_true",
                   help="also write per-run time series CSVs")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="sweep one forcing-noise axis")
    _add_common(p)
    p.add_argument("--axis", required=True, choices=("gamma", "Q"))
    p.add_argument("--values", required=True,
                   help="comma-separated axis values")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("design", help="dump smoother/plant/spectra on a log grid")
    _add_common(p)
    p.set_defaults(func=cmd_design)

    p = sub.add_parser("psd", help="Welch PSD of the forcing generators")
    _add_common(p)
    p.add_argument("--method", default="both",
                   choices=("both", "shaping-filter", "ou-carrier"))
    p.add_argument("--dump-series", action="store_true",
                   help="also write one example forcing series")
    p.set_defaults(func=cmd_psd)

    p = sub.add_parser("baseline", help="filtered-MSE baseline report")
    _add_common(p)
    p.set_defaults(func=cmd_baseline)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DivergenceError as exc:
        print(f"error: divergence: {exc} (seed {exc.seed})", file=sys.stderr)
        return 4
    except NumericalError as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return 3
    except ResmoothError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
