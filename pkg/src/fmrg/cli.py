"""Command-line entry point: ``fmrg {run,sweep,earlystop,slope,verify,inverse}``.

Every subcommand writes ``<subcommand>.csv`` and ``<subcommand>.json`` into the
output directory. Exit codes: 0 success, 2 configuration error, 3 numerical
failure, 4 failed assertion in ``verify``.
"""

from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import time
from dataclasses import replace

from . import config as C
from . import experiments as E
from .errors import ConfigError, NumericalFailure
from .targets import GaussianTarget

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_ASSERT = 0, 2, 3, 4


def git_describe():
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty"], capture_output=True,
                             text=True, timeout=10, cwd=os.path.dirname(os.path.abspath(__file__)))
    except (OSError, subprocess.SubprocessError):
        return "unknown"
    return out.stdout.strip() if out.returncode == 0 and out.stdout.strip() else "unknown"


def _load(args) -> C.ExperimentConfig:
    if args.command == "inverse" and not args.config:
        cfg = E.inverse_benchmark_config()
    else:
        cfg = C.load(args.config) if args.config else C.ExperimentConfig()
    ens = cfg.ensemble
    if args.seed is not None:
        ens = replace(ens, seed=args.seed)
    if args.particles is not None:
        ens = replace(ens, n_particles=args.particles)
    cfg = replace(cfg, ensemble=ens)
    if args.out is not None:
        cfg = replace(cfg, output=replace(cfg.output, dir=args.out))
    return cfg


def _write_json(path, cfg, seconds, assertions, extra=None):
    doc = {"config": C.flatten(cfg), "git": git_describe(), "wall_seconds": seconds,
           "assertions": {k: bool(v) for k, v in assertions.items()}}
    if extra:
        doc.update(extra)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=False)
        fh.write("\n")


def _write_rows(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(E._fmt(v) for v in row) + "\n")


def cmd_run(cfg, threads):
    s = E.run_ensemble(cfg, threads)
    return [s], {}, None


def cmd_sweep(cfg, threads):
    return E.lambda_sweep(cfg, threads=threads), {}, None


def cmd_earlystop(cfg, threads):
    return E.early_stop_study(cfg, threads=threads), {}, None


def cmd_slope(cfg, threads):
    T = E.build_target(cfg.target)
    if not isinstance(T, GaussianTarget) or T.dim != 1:
        raise ConfigError("slope needs a 1-D Gaussian target")
    a = float(cfg.reward.a[0])
    lams = E.slope_grid(cfg)
    plain = E.scaling_slope(float(T.mu1[0]), T.sigma1, a, lams, cfg.slope.t, cfg.slope.x)
    corr = E.scaling_slope(float(T.mu1[0]), T.sigma1, a, lams, cfg.slope.t, cfg.slope.x,
                           corrected=True)
    asserts = {"slope in [1.9, 2.1]": 1.9 <= plain.slope <= 2.1,
               "corrected slope >= 2.8": corr.slope >= 2.8}
    extra = {"slope": float(plain.slope), "slope_ci": [float(plain.ci_low), float(plain.ci_high)],
             "corrected_slope": float(corr.slope),
             "corrected_slope_ci": [float(corr.ci_low), float(corr.ci_high)]}
    rows = list(zip(plain.lambdas, plain.gaps, corr.gaps))
    return ("lambda", "gap", "gap_corrected"), rows, (asserts, extra)


def cmd_verify(cfg, threads):
    checks = E.verify_suite()
    rows = [(c.name, c.value, c.tol, c.passed) for c in checks]
    asserts = {c.name: c.passed for c in checks}
    return ("check", "value", "tolerance", "passed"), rows, (asserts, {})


def cmd_inverse(cfg, threads):
    rows, truth, y = E.toy_inverse_problem(cfg)
    base = rows[0].median_meas_error
    asserts = {f"{r.method} beats unguided": r.median_meas_error < base for r in rows[1:]}
    table = [(r.method, r.nfe, r.median_meas_error, r.median_log_likelihood) for r in rows]
    extra = {"truth": truth.tolist(), "y": y.tolist()}
    return ("method", "nfe", "median_meas_error", "median_log_likelihood"), table, (asserts, extra)


COMMANDS = {"run": cmd_run, "sweep": cmd_sweep, "earlystop": cmd_earlystop,
            "slope": cmd_slope, "verify": cmd_verify, "inverse": cmd_inverse}


def build_parser():
    p = argparse.ArgumentParser(prog="fmrg", description="Flow-map reward guidance experiments.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="dotted-key TOML config file")
        sp.add_argument("--seed", type=int, help="override ensemble.seed")
        sp.add_argument("--out", help="output directory (overrides output.dir)")
        sp.add_argument("--particles", type=int, help="override ensemble.n_particles")
        sp.add_argument("--threads", type=int, default=1, help="worker threads for the particle loop")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = _load(args)
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        out_dir = cfg.output.dir
        os.makedirs(out_dir, exist_ok=True)
        t0 = time.perf_counter()
        result = COMMANDS[args.command](cfg, args.threads)
        seconds = time.perf_counter() - t0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    csv_path = os.path.join(out_dir, f"{args.command}.csv")
    json_path = os.path.join(out_dir, f"{args.command}.json")
    if result[2] is None:
        summaries = result[0]
        E.write_csv(csv_path, summaries)
        asserts = {}
        for s in summaries:
            print(",".join(s.row()))
        _write_json(json_path, cfg, seconds, asserts)
        return EXIT_OK
    header, rows, (asserts, extra) = result
    _write_rows(csv_path, header, rows)
    _write_json(json_path, cfg, seconds, asserts, extra)
    for name, ok in asserts.items():
        print(f"{'PASS' if ok else 'FAIL'}  {name}")
    if args.command == "verify" and not all(asserts.values()):
        return EXIT_ASSERT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
