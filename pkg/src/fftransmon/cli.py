"""Command-line front end.

``fftransmon run CONFIG`` executes one experiment against the in-process
simulator and writes ``results.json``, plot-data tables and
``manifest.json`` into the output directory. CONFIG may also be the
``manifest.json`` of an earlier run, which repeats it. ``fftransmon report
DIR`` prints a summary of such a directory.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import platform
import sys
import warnings
from typing import Callable

import numpy as np
import scipy

from . import __version__
from .calibration import calibrate_phase, error_report, fit_single_qubit, low_amplitude_tomography
from .config import ConfigError, ExperimentConfig, grid, load_config
from .fitting import bloch_trajectory
from .hamiltonian_tomography import cr_hamiltonian_tomography
from .outputs import ensure_dir, format_table, write_json, write_table
from .process_tomography import (
    additivity_suite,
    dominant_unitary,
    effective_rates,
    rates_from_tomography,
    run_qpt,
)
from .quantum_core import expectation, partial_trace, product_state
from .rates import RATE_ORDER
from .schedules import Channel, PulseSchedule, Segment, cr_schedule
from .simulator import SimulatedDevice, simulate_schedule
from .tls_analysis import detect_revivals, ensemble_statistics, fit_two_cosine, purity_scan, run_delay_scan


def _device(cfg: ExperimentConfig) -> SimulatedDevice:
    s = cfg.simulator
    return SimulatedDevice(cfg.device, cfg.seed, s["frame"], s["rwa"], s["cr_mode"], cfg.tls_sampler)


def _shots(p):
    return None if p["shots"] in (None, 0) else int(p["shots"])


# --- experiment runners -------------------------------------------------------------
# each returns (results, {file name: (columns, rows)})


def run_simulate(cfg):
    p = cfg.params
    n = cfg.device.n
    prep = p["prep"] or ["0"] * n
    if len(prep) != n:
        raise ValueError(f"prep needs {n} labels")
    T = float(p["duration"])
    chans = []
    for d in p["drives"]:
        seg = Segment(T, float(d["amplitude"]), math.cos(d["phase"]), math.sin(d["phase"]), 0.0,
                      carrier_target=d["carrier"], ramp_time=float(d["ramp"]))
        chans.append(Channel(int(d["qubit"]), (seg,)))
    schedule = PulseSchedule(T, tuple(chans), p["dt_sample"])
    times = grid(p["times"]) if p["times"] is not None else list(np.linspace(0, T, 101))
    s = cfg.simulator
    states = simulate_schedule(cfg.device, schedule, product_state(prep), s["frame"], times, s["rwa"], s["cr_mode"])
    rows = []
    for t, rho in zip(times, states):
        for q in range(n):
            r = partial_trace(rho, [q])
            rows.append([t, q] + [expectation(r, b) for b in "XYZ"])
    return {"times": times, "n_qubits": n}, {"bloch.tsv": (["time", "qubit", "x", "y", "z"], rows)}


def run_qpt_experiment(cfg):
    p = cfg.params
    dev = _device(cfg)
    durations = grid(p["durations"])
    schedules = [cr_schedule(p["control"], p["target"], p["Omega"], p["phase"], t) for t in durations]
    qubits = list(p["qubits"])
    if len(durations) == 1:
        chi = run_qpt(dev, qubits, schedules[0], _shots(p))
        table = effective_rates(dominant_unitary(chi)[1], durations[0])
        res = {"rates": table.to_dict(), "lambda0": [chi.lambda0], "durations": durations}
        rows = [[durations[0]] + [table[k] for k in table.labels()]]
        return res, {"rates_vs_duration.tsv": (["duration"] + table.labels(), rows),
                     "rates.tsv": (["label", "rate_mhz"], [[k, v] for k, v in table.rates.items()])}
    branch, chis = rates_from_tomography(dev, qubits, schedules, _shots(p))
    labels = branch.rates.labels()
    rows = [[t] + [branch.corrected[k][i] for k in labels] for i, t in enumerate(durations)]
    res = {"rates": branch.rates.to_dict(), "lambda0": [c.lambda0 for c in chis], "durations": durations,
           "residuals": branch.residuals, "ambiguous": branch.ambiguous}
    return res, {"rates_vs_duration.tsv": (["duration"] + labels, rows),
                 "rates.tsv": (["label", "rate_mhz"], [[k, v] for k, v in branch.rates.rates.items()])}


def run_additivity(cfg):
    p = cfg.params
    rep = additivity_suite(_device(cfg), p["q1"], p["q2"], p["q3"], p["Omega"], grid(p["durations"]),
                           _shots(p), p["phase"])
    d = rep.to_dict()
    shown = [r for r in d["rows"]
             if max((abs(r[c]) for c in ("idle", "drive_q1", "drive_q3", "drive_both", "predicted")
                     if r[c] is not None), default=0.0) >= p["threshold"]]
    return d, {"additivity.tsv": (d["columns"], d["rows"]), "additivity_significant.tsv": (d["columns"], shown)}


def run_ham_tomog(cfg):
    p = cfg.params
    times = grid(p["times"])
    stark = grid(p["stark_times"]) if p["stark_times"] is not None else None
    table = cr_hamiltonian_tomography(_device(cfg), p["control"], p["target"], p["Omega"], p["phase"],
                                      times, _shots(p), stark, p["refine"])
    meta = dict(table.meta)
    series = meta.pop("series")
    fits = meta.pop("fits")
    trace_rows = []
    for ser in series[:6]:
        fit = fits["control0" if ser["prep"].startswith("0") else "control1"]
        pred = bloch_trajectory(ser["times"], fit["omega_x"], fit["omega_y"], fit["delta"], fit["decay"], fit["amplitude"])
        axis = "XYZ".index(ser["basis"])
        for t, v, f in zip(ser["times"], ser["values"], pred[axis]):
            trace_rows.append([ser["prep"], ser["basis"], t, v, f])
    stark_rows = [[ser["prep"], t, v] for ser in series[6:] for t, v in zip(ser["times"], ser["values"])]
    rates = {k: table[k] for k in RATE_ORDER}
    res = {"rates": {"rates_mhz": rates, "meta": meta}, "fits": fits}
    return res, {
        "rates.tsv": (["label", "rate_mhz"], [[k, v] for k, v in rates.items()]),
        "traces.tsv": (["prep", "basis", "time", "value", "fit"], trace_rows),
        "stark.tsv": (["prep", "time", "value"], stark_rows),
    }


def run_calibrate_phase(cfg):
    p = cfg.params
    times = grid(p["times"]) if p["times"] is not None else None
    cal = calibrate_phase(_device(cfg), p["control"], p["target"], p["Omega"], p["tol"], times, _shots(p),
                          max_calls=p["max_calls"])
    if cal.flagged:
        warnings.warn("phase calibration did not reach the c_ZY tolerance", stacklevel=2)
    res = {"phase": cal.phase, "c_zy": cal.c_zy, "calls": cal.calls, "flagged": cal.flagged}
    return res, {"phase_history.tsv": (["call", "phase", "c_zy"], [[i, a, b] for i, (a, b) in enumerate(cal.history)])}


def run_low_amp(cfg):
    p = cfg.params
    series = low_amplitude_tomography(_device(cfg), p["qubit"], p["Omega"], grid(p["times"]), _shots(p), p["phase"])
    fit = fit_single_qubit(series, p["phase"])
    rep = error_report(fit, p["Omega"], p["phase"], 0.0)
    for flag in fit.flags:
        warnings.warn(f"single-qubit fit flagged: {flag}", stacklevel=2)
    rows = []
    for ser in series:
        for row in ser.to_rows():
            rows.append([ser.basis, row["time"], row["value"]])
    return {"fits": {"single_qubit": fit.to_dict()}, "error_report": rep.to_dict(), "summary": rep.summary()}, {
        "series.tsv": (["basis", "time", "value"], rows)}


def run_delay_scan_experiment(cfg):
    p = cfg.params
    delays = grid(p["delays"])
    ds = run_delay_scan(_device(cfg), p["qubit"], p["basis"], delays, _shots(p), p["repetitions"], p["prep"])
    for err in ds.errors:
        warnings.warn(f"delay scan stopped early: {err}", stacklevel=2)
    tables = {"delay_raw.tsv": (["repetition", "timestamp", "delay", "value"], ds.to_rows())}
    res = {"repetitions": ds.repetitions, "errors": ds.errors, "fits": {}}
    if ds.repetitions >= 2:
        st = ensemble_statistics(ds, fit=p["fit"])
        tables["delay_curves.tsv"] = (["delay", "mean", "min", "max"], st.table())
        res["f0_spread"] = st.f0_spread
        res["unstable"] = st.unstable
        res["fits"] = {f"repetition_{i}": f.to_dict() for i, f in enumerate(st.fits) if f is not None}
        if st.unstable:
            warnings.warn(f"fitted f0 spreads by {st.f0_spread:.4f} MHz across repetitions", stacklevel=2)
    elif ds.repetitions == 1:
        v = ds.values[0]
        tables["delay_curves.tsv"] = (["delay", "mean", "min", "max"], [[d, x, x, x] for d, x in zip(delays, v)])
        if p["fit"]:
            fit = fit_two_cosine(delays, v)
            res["fits"] = {"repetition_0": fit.to_dict()}
            for flag in fit.flags:
                warnings.warn(f"two-frequency fit flagged: {flag}", stacklevel=2)
    return res, tables


def run_purity_scan(cfg):
    p = cfg.params
    delays = grid(p["delays"])
    pts = purity_scan(_device(cfg), p["qubit"], delays, _shots(p), p["prep"])
    revivals = detect_revivals([t for t, _ in pts], [v for _, v in pts], p["prominence"])
    return {"revivals": [{"time": t, "prominence": pr} for t, pr in revivals]}, {
        "purity.tsv": (["delay", "purity"], pts),
        "revivals.tsv": (["time", "prominence"], revivals),
    }


RUNNERS: dict[str, Callable] = {
    "simulate": run_simulate,
    "qpt": run_qpt_experiment,
    "additivity": run_additivity,
    "ham-tomog": run_ham_tomog,
    "calibrate-phase": run_calibrate_phase,
    "low-amp": run_low_amp,
    "delay-scan": run_delay_scan_experiment,
    "purity-scan": run_purity_scan,
}


# --- commands -------------------------------------------------------------------


def _versions() -> dict:
    return {"fftransmon": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def _fail(kind: str, message: str, code: int, **extra) -> int:
    sys.stderr.write(json.dumps({"error": dict({"type": kind, "message": message}, **extra)}, sort_keys=True) + "\n")
    return code


def execute(cfg: ExperimentConfig, out: str) -> dict:
    """Run ``cfg`` and write all artifacts into ``out``; returns the manifest."""
    ensure_dir(out)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        results, tables = RUNNERS[cfg.experiment](cfg)
    messages = list(dict.fromkeys(str(w.message) for w in caught))
    write_json(os.path.join(out, "results.json"), results)
    for name, (cols, rows) in sorted(tables.items()):
        write_table(os.path.join(out, name), cols, rows)
    manifest = {
        "experiment": cfg.experiment,
        "seed": cfg.seed,
        "config_sha256": cfg.sha256,
        "config": cfg.raw,
        "versions": _versions(),
        "warnings": messages,
        "files": ["results.json"] + sorted(tables),
    }
    write_json(os.path.join(out, "manifest.json"), manifest)
    return manifest


def cmd_run(args) -> int:
    overrides = list(args.set or [])
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    try:
        cfg = load_config(args.config, overrides)
        if args.shots is not None:
            if "shots" not in cfg.params:
                raise ConfigError(f"experiment '{cfg.experiment}' takes no shots parameter", key="params.shots")
            cfg = load_config(args.config, overrides + [f"params.shots={args.shots}"])
    except ConfigError as exc:
        return _fail("config", exc.message, 2, line=exc.line, column=exc.column, key=exc.key)
    except OSError as exc:
        return _fail("io", str(exc), 2)
    out = args.out or cfg.output
    if not out:
        return _fail("config", "no output directory: set 'output' or pass --out", 2, key="output")
    try:
        manifest = execute(cfg, out)
    except ConfigError as exc:
        return _fail("config", exc.message, 2, line=exc.line, column=exc.column, key=exc.key)
    except Exception as exc:  # noqa: BLE001 - reported as machine-readable error
        return _fail(type(exc).__name__, str(exc), 1)
    for w in manifest["warnings"]:
        sys.stderr.write(f"warning: {w}\n")
    print(f"wrote {len(manifest['files'])} files to {out}")
    return 0


def _fmt(v) -> str:
    return f"{v:.6g}" if isinstance(v, (int, float)) and not isinstance(v, bool) else str(v)


def render_report(manifest: dict, results: dict) -> str:
    lines = [f"experiment: {manifest.get('experiment')}", f"seed: {manifest.get('seed')}",
             f"config sha256: {manifest.get('config_sha256')}"]
    rates = results.get("rates")
    if isinstance(rates, dict) and "rates_mhz" in rates:
        r = rates["rates_mhz"]
        order = [k for k in RATE_ORDER if k in r] if all(len(k) == 2 for k in r) else sorted(r)
        order += [k for k in r if k not in order]
        lines += ["", format_table(["label", "rate_mhz"], [[k, f"{r[k]:+.4f}"] for k in order]).rstrip("\n")]
    for key in ("phase", "c_zy", "calls", "f0_spread", "unstable"):
        if key in results:
            lines.append(f"{key}: {_fmt(results[key])}")
    if "summary" in results:
        lines += ["", results["summary"]]
    if results.get("revivals") is not None:
        lines += ["", "revivals:"] + [f"  t = {r['time']:.3f} us, prominence {r['prominence']:.3f}" for r in results["revivals"]]
    fits = results.get("fits") or {}
    if fits:
        lines += ["", "fits:"]
        for name, fit in sorted(fits.items()):
            params = ", ".join(f"{k}={_fmt(v)}" for k, v in sorted(fit.items())
                               if isinstance(v, (int, float)) and not isinstance(v, bool) and k != "residual")
            lines.append(f"  {name}: {params}, residual={_fmt(fit.get('residual'))}")
            for flag in fit.get("flags", []):
                lines.append(f"  WARNING: {name} flagged {flag}")
    for w in manifest.get("warnings", []):
        lines.append(f"WARNING: {w}")
    return "\n".join(lines) + "\n"


def cmd_report(args) -> int:
    path = os.path.join(args.directory, "manifest.json")
    try:
        with open(path, encoding="utf-8") as fh:
            manifest = json.load(fh)
        if not isinstance(manifest, dict) or "experiment" not in manifest:
            raise ValueError("manifest lacks an experiment entry")
    except FileNotFoundError:
        return _fail("report", f"no manifest in {args.directory}", 3)
    except (OSError, ValueError) as exc:
        return _fail("report", f"corrupt manifest: {exc}", 3)
    try:
        with open(os.path.join(args.directory, "results.json"), encoding="utf-8") as fh:
            results = json.load(fh)
    except (OSError, ValueError) as exc:
        return _fail("report", f"unreadable results: {exc}", 3)
    sys.stdout.write(render_report(manifest, results))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fftransmon", description="Simulated cross-resonance device experiments.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run an experiment config")
    run.add_argument("config")
    run.add_argument("--seed", type=int, help="override the config seed")
    run.add_argument("--shots", type=int, help="override params.shots")
    run.add_argument("--out", help="output directory (overrides 'output')")
    run.add_argument("--set", action="append", metavar="KEY=VALUE", help="override any config key (repeatable)")
    run.set_defaults(func=cmd_run)
    rep = sub.add_parser("report", help="summarize a result directory")
    rep.add_argument("directory")
    rep.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
