"""Command-line interface: sampling, estimation, bounds and theorem sweeps.

Outputs are deterministic functions of (config, seed); reruns at any
worker count produce byte-identical files.  Exit codes: 0 success or
PASS, 2 configuration error, 3 verdict FAIL.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, ExperimentConfig, load_config
from .convergence import (
    CSV_COLUMNS,
    ConvergenceReport,
    ReportRow,
    run_lemma4,
    run_theorem1,
    run_theorem2,
)
from .estimators import EstimatorConfig, McEstimate, draw_integrals, mc_mgf
from .gaussian import transition_density
from .potentials import alpha1_divergence_probe, k1_bound
from .quadrature import QuadConfig, moment_bridge, moment_free, moment_two_sided

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_FAIL = 3


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return format(x, ".17g")
    return str(x)


def _write_rows(path: Path, rows, columns=CSV_COLUMNS):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _json_default(obj):
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def _write_summary(path: Path, command: str, cfg: ExperimentConfig, payload: dict):
    doc = {"command": command, "resolved_config": cfg.resolved(), **payload}
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True, allow_nan=True,
                  default=_json_default)
        fh.write("\n")


def _estimator_config(cfg: ExperimentConfig, channel: int = 0) -> EstimatorConfig:
    return EstimatorConfig(
        potential=cfg.potential, x=cfg.x, y=cfg.y, t=cfg.t,
        free_horizon=cfg.free_horizon, h_fine=cfg.h_fine, h_coarse=cfg.h_coarse,
        refine_window=cfg.refine_window, seed=cfg.seed, stream_channel=channel,
        workers=cfg.workers, tail_correction=cfg.tail_correction,
    )


# -- commands -----------------------------------------------------------------

def cmd_sample(cfg: ExperimentConfig, out: Path, fmt: str) -> int:
    values, tails = draw_integrals(cfg.statistic_kind, cfg.n_paths,
                                   _estimator_config(cfg))
    rows = []
    for i, val in enumerate(values):
        tail = tails[i] if tails is not None else None
        rows.append([cfg.statistic_kind, i, val, tail])
    payload = {"n": int(values.size), "kind": cfg.statistic_kind,
               "mean": float(np.mean(values))}
    if fmt == "csv":
        _write_rows(out / "sample.csv", rows,
                    columns=("kind", "index", "value", "tail_potential"))
    else:
        payload["values"] = [float(v) for v in values]
    _write_summary(out / "sample_summary.json", "sample", cfg, payload)
    return EXIT_OK


def cmd_mgf(cfg: ExperimentConfig, out: Path, fmt: str) -> int:
    curve = mc_mgf(cfg.statistic_kind, cfg.alphas, cfg.n_paths, _estimator_config(cfg))
    t = cfg.t if cfg.statistic_kind == "bridge" else \
        _estimator_config(cfg).resolved_free_horizon()
    rows = []
    for a, est, bad in zip(curve.alphas, curve.estimates, curve.unstable):
        rows.append(ReportRow(f"mgf[{cfg.statistic_kind}]", _fmt(float(a)), t,
                              est.mean, est.std_error, None, None, None,
                              "UNSTABLE" if bad else ""))
    if fmt == "csv":
        _write_rows(out / "mgf.csv", [r.as_list() for r in rows])
    payload = {"curve": [
        {"alpha": float(a), **est.as_dict(), "unstable": bool(bad)}
        for a, est, bad in zip(curve.alphas, curve.estimates, curve.unstable)]}
    _write_summary(out / "mgf_summary.json", "mgf", cfg, payload)
    return EXIT_OK


def cmd_moments(cfg: ExperimentConfig, out: Path, fmt: str) -> int:
    est_cfg = _estimator_config(cfg)
    qcfg = QuadConfig(expert_k3=max(cfg.k_list) > 2,
                      k_max=max(2, max(cfg.k_list)))
    kind = cfg.statistic_kind
    values, tails = draw_integrals(kind, cfg.n_paths, est_cfg)
    t = cfg.t if kind == "bridge" else est_cfg.resolved_free_horizon()
    rows, entries = [], []
    all_pass = True
    for k in cfg.k_list:
        sample = values + tails if (k == 1 and cfg.tail_correction and
                                    tails is not None) else values
        est = McEstimate.from_samples(sample**k)
        if kind == "bridge":
            target = moment_bridge(cfg.x, cfg.y, cfg.t, cfg.potential, k, qcfg)
        elif kind == "free":
            horizon = math.inf if cfg.tail_correction and k == 1 else t
            target = moment_free(cfg.x, horizon, cfg.potential, k, qcfg)
        else:
            target = moment_two_sided(cfg.x, cfg.y, cfg.potential, k, qcfg) \
                if (cfg.tail_correction and k == 1) else None
        if target is None:
            rows.append(ReportRow(f"moment[{kind}]", str(k), t, est.mean,
                                  est.std_error, None, None, None))
            entries.append({"k": k, **est.as_dict(), "target": None})
            continue
        terr = qcfg.tolerance(k, cfg.potential) * abs(target)
        gap = abs(est.mean - target)
        ok = gap <= 3.0 * (est.std_error + terr)
        all_pass = all_pass and ok
        rows.append(ReportRow(f"moment[{kind}]", str(k), t, est.mean, est.std_error,
                              target, terr, gap, "PASS" if ok else "FAIL"))
        entries.append({"k": k, **est.as_dict(), "target": target, "gap": gap,
                        "verdict": "PASS" if ok else "FAIL"})
    if fmt == "csv":
        _write_rows(out / "moments.csv", [r.as_list() for r in rows])
    _write_summary(out / "moments_summary.json", "moments", cfg,
                   {"moments": entries, "passed": all_pass})
    return EXIT_OK if all_pass else EXIT_FAIL


def cmd_bounds(cfg: ExperimentConfig, out: Path, fmt: str) -> int:
    report = k1_bound(cfg.potential, cfg.probe_points)
    payload = report.as_dict()
    if cfg.alphas and cfg.potential.is_nonnegative and not cfg.potential.is_zero:
        probe = alpha1_divergence_probe(
            cfg.potential, cfg.alphas, cfg.n_paths,
            x=cfg.x, horizon=cfg.free_horizon, seed=cfg.seed, workers=cfg.workers)
        payload["alpha1_probe"] = probe.as_dict()
        payload["alpha1_bracket"] = payload["alpha1_probe"]["bracket"]
    _write_summary(out / "bounds_summary.json", "bounds", cfg, payload)
    return EXIT_OK


def _report_outputs(report: ConvergenceReport, name: str, cfg: ExperimentConfig,
                    out: Path, fmt: str) -> int:
    if fmt == "csv":
        report.write_csv(out / f"{name}.csv")
    _write_summary(out / f"{name}_summary.json", name, cfg, report.as_dict())
    return EXIT_OK if report.passed else EXIT_FAIL


def cmd_theorem1(cfg: ExperimentConfig, out: Path, fmt: str) -> int:
    report = run_theorem1(cfg.sweep_plan(), cfg.potential)
    return _report_outputs(report, "theorem1", cfg, out, fmt)


def cmd_theorem2(cfg: ExperimentConfig, out: Path, fmt: str) -> int:
    report = run_theorem2(cfg.sweep_plan(), cfg.potential)
    return _report_outputs(report, "theorem2", cfg, out, fmt)


def cmd_lemma4(cfg: ExperimentConfig, out: Path, fmt: str) -> int:
    report = run_lemma4(cfg.sweep_plan(), cfg.potential)
    return _report_outputs(report, "lemma4", cfg, out, fmt)


def cmd_bloch(cfg: ExperimentConfig, out: Path, fmt: str) -> int:
    from .estimators import bloch_green

    rows, entries = [], []
    for i, entry in enumerate(cfg.bloch_points):
        x = np.asarray(entry["x"], dtype=float)
        y = np.asarray(entry["y"], dtype=float)
        t = float(entry["t"])
        est_cfg = _estimator_config(cfg, channel=20 + i)
        est = bloch_green(x, y, t, cfg.n_paths, est_cfg)
        kernel = transition_density(t, y - x)
        rows.append(ReportRow(f"bloch[{i}]", "", t, est.mean, est.std_error,
                              kernel, 0.0, kernel - est.mean))
        entries.append({"index": i, "x": [float(c) for c in x],
                        "y": [float(c) for c in y], "t": t,
                        **est.as_dict(), "free_kernel": kernel})
    if fmt == "csv":
        _write_rows(out / "bloch.csv", [r.as_list() for r in rows])
    _write_summary(out / "bloch_summary.json", "bloch", cfg, {"points": entries})
    return EXIT_OK


_COMMANDS = {
    "sample": cmd_sample,
    "mgf": cmd_mgf,
    "moments": cmd_moments,
    "bounds": cmd_bounds,
    "theorem1": cmd_theorem1,
    "theorem2": cmd_theorem2,
    "lemma4": cmd_lemma4,
    "bloch": cmd_bloch,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bridgeint",
        description="Path integrals along Brownian bridges: sampling, "
                    "estimation, quadrature oracles and limit sweeps.")
    parser.add_argument("command", choices=sorted(_COMMANDS))
    parser.add_argument("--config", required=True, help="JSON config path")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the config master seed")
    parser.add_argument("--workers", type=int, default=None,
                        help="worker pool size (default: config value)")
    parser.add_argument("--out", default=".", help="output directory")
    parser.add_argument("--format", choices=("csv", "json"), default="csv",
                        help="row output format (a JSON summary is always written)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.command)
        if args.seed is not None:
            cfg.seed = int(args.seed)
            cfg.raw["seed"] = int(args.seed)
        if args.workers is not None:
            cfg.workers = int(args.workers)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        code = _COMMANDS[args.command](cfg, out, args.format)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if code == EXIT_FAIL:
        print(f"{args.command}: verdict FAIL", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
