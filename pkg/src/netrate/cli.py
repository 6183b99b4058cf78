"""Command-line front end: ``netrate {fit,simulate,mc-study,enron}``.

Exit codes: 0 success, 2 input error, 3 numerical failure (separation,
singular Sigma1, non-convergence), 4 partial Monte Carlo failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .data import (Dataset, NodeSet, build_homophily_covariates, enron_preprocess,
                   read_dataset, read_node_attributes, read_node_table, write_dataset)
from .errors import ConfigError, InputError, McFailureError, NetrateError, NumericalError
from .estimation import breslow_baseline, fit
from .simulation import SimulationConfig, gen_covariates, gen_events, mc_study
from .variance import estimate_variance, inference

THREADS_ENV = "NETRATE_THREADS"
VARIANCE_METHODS = {"naive": "naive", "jk": "jackknife1", "jk2": "jackknife2"}
ENRON_ATTRS = ("dept", "seniority", "gender")


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def dump_json(obj, path):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def write_manifest(path, command: str, config: dict, inputs, seed, started: float):
    digests = {str(p): sha256_file(p) for p in inputs}
    dump_json({"command": command, "config": config, "inputs": digests, "seed": seed,
               "version": __version__, "duration_seconds": time.time() - started}, path)


def _default_threads() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def _load_config(path) -> SimulationConfig:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise InputError(f"config file {path} not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file is not valid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    return SimulationConfig.from_dict(raw)


def run_analysis(ds: Dataset, out: Path, *, variance: str, tol: float, max_iter: int, alpha: float,
                 seed: int, draws: int, threads: int) -> int:
    """Fit, estimate the covariance and write the report files; returns an exit code."""
    res = fit(ds, tol=tol, max_iter=max_iter)
    dump_json(res.to_dict(), out / "fit.json")
    base = breslow_baseline(ds, res.beta_hat)
    with open(out / "baseline.csv", "w", encoding="utf-8", newline="") as fh:
        fh.write("time,cum_baseline\n")
        for t, v in zip(base.jump_times, base.cumulative):
            fh.write(f"{float(t)!r},{float(v)!r}\n")
    if not res.converged:
        raise NumericalError(f"fit did not converge in {max_iter} iterations "
                             f"(score norm {res.score_norm:.3g})")
    opts = {"tol": tol, "max_iter": max_iter}
    var = estimate_variance(ds, res, VARIANCE_METHODS[variance], draws=draws, seed=seed,
                            fit_options=opts, threads=threads)
    dump_json(var.to_dict(alpha, res.beta_hat), out / "variance.json")
    rep = inference(res, var, alpha, names=ds.covariates.names)
    dump_json(rep.to_dict(), out / "inference.json")
    return 0


def cmd_fit(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    started = time.time()
    ds = read_dataset(args.dataset)
    config = {"dataset": str(args.dataset), "tol": args.tol, "max_iter": args.max_iter,
              "variance": args.variance, "jk2_draws": args.jk2_draws, "alpha": args.alpha,
              "seed": args.seed, "threads": args.threads}
    inputs = [Path(args.dataset) / f for f in ("events.csv", "nodes.csv", "covariates.csv", "meta.json")]
    try:
        return run_analysis(ds, out, variance=args.variance, tol=args.tol, max_iter=args.max_iter,
                            alpha=args.alpha, seed=args.seed, draws=args.jk2_draws,
                            threads=args.threads)
    finally:
        write_manifest(out / "manifest.json", "fit", config, inputs, args.seed, started)


def cmd_simulate(args) -> int:
    started = time.time()
    cfg = _load_config(args.config)
    if args.seed is not None:
        cfg = SimulationConfig.from_dict({**cfg.to_dict(), "seed": args.seed})
    out = Path(args.out)
    cov = gen_covariates(cfg)
    log, truth = gen_events(cfg, cov, return_truth=True)
    ds = Dataset(NodeSet(cfg.labels()), log, cov)
    write_dataset(ds, out)
    dump_json(truth.to_dict(), out / "truth.json")
    write_manifest(out / "manifest.json", "simulate", cfg.to_dict(), [args.config], cfg.seed, started)
    return 0


def cmd_mc_study(args) -> int:
    started = time.time()
    cfg = _load_config(args.config)
    if args.seed is not None:
        cfg = SimulationConfig.from_dict({**cfg.to_dict(), "seed": args.seed})
    out_csv = Path(args.out)
    out_csv.parent.mkdir(parents=True, exist_ok=True)

    def progress(rec):
        status = "ok" if rec.ok else f"failed ({rec.error})"
        print(f"replication {rec.rep + 1}/{args.replications}: {status}", file=sys.stderr)

    config = {**cfg.to_dict(), "replications": args.replications, "jk2_draws": args.jk2_draws,
              "alpha": args.alpha, "threads": args.threads}
    code = 0
    try:
        summary = mc_study(cfg, args.replications, args.jk2_draws, args.alpha, threads=args.threads,
                           progress=None if args.quiet else progress)
    except McFailureError as exc:
        summary = exc.partial
        code = exc.exit_code
        print(json.dumps(exc.to_dict()), file=sys.stderr)
    summary.to_csv(out_csv)
    write_manifest(out_csv.with_suffix(".manifest.json"), "mc-study", config, [args.config], cfg.seed,
                   started)
    return code


def enron_report(raw_csv, attrs_csv, out: Path, *, attrs=ENRON_ATTRS, max_recipients: int = 5,
                 draws: int = 150, seed: int = 0, tol: float = 1e-8, max_iter: int = 100,
                 alpha: float = 0.05, threads: int = 1) -> dict:
    """Preprocess, fit and estimate all three covariances; returns the report dict."""
    node_attrs = read_node_attributes(attrs_csv)
    log = enron_preprocess(raw_csv, max_recipients=max_recipients, nodes=node_attrs)
    cov = build_homophily_covariates(node_attrs, attrs)
    ds = Dataset(NodeSet(tuple(node_attrs)), log, cov)
    write_dataset(ds, out / "dataset", node_attrs)
    res = fit(ds, tol=tol, max_iter=max_iter)
    dump_json(res.to_dict(), out / "fit.json")
    if not res.converged:
        raise NumericalError("fit did not converge")
    opts = {"tol": tol, "max_iter": max_iter}
    ses = {}
    for key, method in (("SEE(JK)", "jackknife1"), ("SEE(JK2)", "jackknife2"), ("SEE", "naive")):
        var = estimate_variance(ds, res, method, draws=draws, seed=seed, fit_options=opts,
                                threads=threads)
        dump_json(var.to_dict(alpha, res.beta_hat), out / f"variance_{method}.json")
        ses[key] = var.se
    rows = [{"parameter": name, "estimate": float(res.beta_hat[r]),
             **{k: float(v[r]) for k, v in ses.items()}} for r, name in enumerate(cov.names)]
    report = {"coefficients": rows,
              "preprocessing": {"messages": log.report.n_messages, "dropped": log.report.n_dropped,
                                "drop_fraction": log.report.drop_fraction,
                                "rejected_rows": len(log.report.rejected),
                                "events": log.n_events, "nodes": len(node_attrs),
                                "time_origin": log.report.origin, "horizon": log.horizon,
                                "tie_perturbations": log.report.perturbed}}
    dump_json(report, out / "report.json")
    return report


def cmd_enron(args) -> int:
    started = time.time()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    attrs = tuple(a.strip() for a in args.attrs.split(",") if a.strip())
    config = {"raw": str(args.raw), "attrs_file": str(args.attributes), "attrs": list(attrs),
              "max_recipients": args.max_recipients, "jk2_draws": args.jk2_draws, "seed": args.seed,
              "tol": args.tol, "max_iter": args.max_iter, "alpha": args.alpha, "threads": args.threads}
    try:
        enron_report(args.raw, args.attributes, out, attrs=attrs, max_recipients=args.max_recipients,
                     draws=args.jk2_draws, seed=args.seed, tol=args.tol, max_iter=args.max_iter,
                     alpha=args.alpha, threads=args.threads)
    finally:
        write_manifest(out / "manifest.json", "enron", config, [args.raw, args.attributes], args.seed,
                       started)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="netrate", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seed_default=0):
        p.add_argument("--seed", type=int, default=seed_default)
        p.add_argument("--threads", type=int, default=_default_threads(),
                       help=f"worker threads (default ${THREADS_ENV} or 1)")

    def fitting(p):
        p.add_argument("--tol", type=float, default=1e-8)
        p.add_argument("--max-iter", type=int, default=100)
        p.add_argument("--jk2-draws", type=int, default=150)
        p.add_argument("--alpha", type=float, default=0.05)

    p = sub.add_parser("fit", help="fit a canonical dataset directory")
    p.add_argument("dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--variance", choices=sorted(VARIANCE_METHODS), default="jk")
    fitting(p)
    common(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("simulate", help="simulate one dataset from a JSON config")
    p.add_argument("config")
    p.add_argument("out")
    common(p, seed_default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("mc-study", help="Monte Carlo study with a per-coefficient CSV summary")
    p.add_argument("config")
    p.add_argument("--replications", type=int, default=250)
    p.add_argument("--out", required=True)
    p.add_argument("--jk2-draws", type=int, default=150)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--quiet", action="store_true")
    common(p, seed_default=None)
    p.set_defaults(func=cmd_mc_study)

    p = sub.add_parser("enron", help="homophily analysis of a flattened e-mail message table")
    p.add_argument("raw")
    p.add_argument("attributes")
    p.add_argument("--out", required=True)
    p.add_argument("--attrs", default=",".join(ENRON_ATTRS))
    p.add_argument("--max-recipients", type=int, default=5)
    fitting(p)
    common(p)
    p.set_defaults(func=cmd_enron)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except NetrateError as exc:
        payload = json.dumps(exc.to_dict())
        print(payload, file=sys.stderr)
        out = getattr(args, "out", None)
        if out is not None and args.command in ("fit", "enron"):
            Path(out).mkdir(parents=True, exist_ok=True)
            (Path(out) / "error.json").write_text(payload + "\n", encoding="utf-8")
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
