"""Command-line entry points: simulate, fit, calibrate, quantify, plot.

Exit codes are stable for scripting: 0 success, 2 validation or schema
error, 3 fit non-convergence (output still written), 4 I/O failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import io
import sys

import numpy as np

from .assay import fit_calibration, quantify
from .config import load_config
from .errors import (BootstrapUnstableError, NonConvergenceError, NVSenseError,
                     SchemaError)
from .fileio import (atomic_write_text, calibration_model_from_dict,
                     calibration_model_to_dict, dump_json, fit_result_from_dict,
                     fit_result_to_dict, read_calib_csv, read_json,
                     read_traces_csv, sha256_of_file, write_config_sidecar,
                     write_json, write_traces_csv)
from .fitting import bootstrap_t1_err, fit_exponential
from .sequence import sweep

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NONCONVERGENCE = 3
EXIT_IO = 4


def cmd_simulate(args) -> int:
    config = load_config(read_json(args.config))
    if args.seed is not None:
        config = dataclasses.replace(config, seed=args.seed)
    if args.workers is not None:
        config = dataclasses.replace(config, workers=args.workers)
    trace = sweep(config.protocol, config.photophysics, config.budget,
                  config.detector, rng_seed=config.seed, workers=config.workers)
    write_traces_csv(args.out, trace)
    write_config_sidecar(args.out, config.resolved())
    print(f"wrote {args.out} ({len(trace)} points)")
    return EXIT_OK


def cmd_fit(args) -> int:
    trace = read_traces_csv(args.in_path)
    fit = fit_exponential(trace)
    payload = fit_result_to_dict(fit, input_sha256=sha256_of_file(args.in_path))
    if args.bootstrap > 0:
        payload["bootstrap_t1_err_ms"] = bootstrap_t1_err(
            trace, fit, n_resamples=args.bootstrap, rng_seed=args.seed)
        payload["bootstrap_n_resamples"] = args.bootstrap
    write_json(args.out, payload)
    if not fit.converged:
        print(f"fit did not converge in {fit.iterations} iterations; "
              f"best-so-far written to {args.out}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    print(f"wrote {args.out} (t1 = {fit.t1_ms:.6g} ms "
          f"+/- {fit.t1_err_ms:.3g} ms)")
    return EXIT_OK


def cmd_calibrate(args) -> int:
    points = read_calib_csv(args.in_path)
    model = fit_calibration(points, sigma_floor=args.sigma_floor, k_factor=args.k)
    write_json(args.out, calibration_model_to_dict(model))
    if model.wrong_direction:
        print("warning: slope is not negative; calibration direction is "
              "suspect", file=sys.stderr)
    print(f"wrote {args.out} (slope = {model.slope:.6g} ms/{model.unit}, "
          f"lod = {model.lod:.6g} {model.unit} at k = {model.k_factor:g})")
    return EXIT_OK


def cmd_quantify(args) -> int:
    model = calibration_model_from_dict(read_json(args.in_path))
    result = quantify(model, args.t1, args.t1_err)
    report = {
        "amount": result.amount,
        "amount_err": result.amount_err,
        "ci": list(result.ci),
        "unit": result.unit,
        "below_lod": result.below_lod,
        "clamped": result.clamped,
        "lod": model.lod,
        "k_factor": model.k_factor,
    }
    sys.stdout.write(dump_json(report))
    return EXIT_OK


def cmd_plot(args) -> int:
    trace = read_traces_csv(args.in_path)
    if len(trace) == 0:
        raise SchemaError("trace has no data rows to plot")
    fit = fit_result_from_dict(read_json(args.fit)) if args.fit else None

    import matplotlib
    from matplotlib.figure import Figure

    # pinned hash salt: element ids in the SVG stay stable across runs
    matplotlib.rcParams["svg.hashsalt"] = "nvsense"
    fig = Figure(figsize=(6.0, 4.0))
    ax = fig.subplots()
    err = trace.signal_err if trace.signal_err is not None else None
    ax.errorbar(trace.tau_s, trace.signal, yerr=err, fmt="o", ms=4,
                capsize=2, label="measured")
    curves = []
    if fit is not None:
        tau_dense = np.geomspace(trace.tau_s[0], trace.tau_s[-1], 200)
        curve = fit.model(tau_dense)
        ax.plot(tau_dense, curve, "-", label=f"fit: T1 = {fit.t1_ms:.3g} ms")
        curves.append({"label": "fit", "tau_s": [float(v) for v in tau_dense],
                       "signal": [float(v) for v in curve]})
    ax.set_xscale("log")
    ax.set_xlabel("relaxation interval tau (s)")
    ax.set_ylabel("differential signal")
    ax.legend()
    fig.tight_layout()
    buffer = io.StringIO()
    fig.savefig(buffer, format="svg", metadata={"Date": None})
    atomic_write_text(args.out, buffer.getvalue())

    companion = {
        "point_series": [{
            "label": "measured",
            "tau_s": [float(v) for v in trace.tau_s],
            "signal": [float(v) for v in trace.signal],
            "signal_err": ([float(v) for v in trace.signal_err]
                           if trace.signal_err is not None else None),
        }],
        "curve_series": curves,
    }
    write_json(args.out + ".data.json", companion)
    print(f"wrote {args.out} and {args.out}.data.json")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nvsense",
        description="Spin-relaxation biosensing simulator and analysis toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run a relaxation sweep to traces.csv")
    p.add_argument("--config", required=True, help="experiment config JSON")
    p.add_argument("--out", required=True, help="output traces.csv path")
    p.add_argument("--seed", type=int, default=None, help="override config seed")
    p.add_argument("--workers", type=int, default=None,
                   help="override config worker thread count")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="fit a single-exponential decay to a trace")
    p.add_argument("--in", dest="in_path", required=True, help="traces.csv path")
    p.add_argument("--out", required=True, help="output fit.json path")
    p.add_argument("--bootstrap", type=int, default=0,
                   help="also run N bootstrap resamples for t1_err")
    p.add_argument("--seed", type=int, default=0, help="bootstrap seed")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("calibrate", help="fit a linear calibration model")
    p.add_argument("--in", dest="in_path", required=True, help="calib.csv path")
    p.add_argument("--out", required=True, help="output model.json path")
    p.add_argument("--k", type=float, default=1.0, help="LOD multiplier k")
    p.add_argument("--sigma-floor", type=float, default=0.0,
                   help="lower bound on the assay noise sigma_t1 (ms)")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("quantify", help="invert a calibration for an unknown")
    p.add_argument("--in", dest="in_path", required=True, help="model.json path")
    p.add_argument("--t1", type=float, required=True, help="measured T1 (ms)")
    p.add_argument("--t1-err", type=float, default=0.0, help="T1 error (ms)")
    p.set_defaults(func=cmd_quantify)

    p = sub.add_parser("plot", help="render a trace (and optional fit) to SVG")
    p.add_argument("--in", dest="in_path", required=True, help="traces.csv path")
    p.add_argument("--fit", default=None, help="optional fit.json to overlay")
    p.add_argument("--out", required=True, help="output .svg path")
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (NonConvergenceError, BootstrapUnstableError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    except (NVSenseError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    raise SystemExit(main())
