"""Command-line surface.

Subcommands: simulate, verify-connectivity, entropy, aep, wlln,
concentration, rate, sweep. Every run echoes its effective configuration
into the output directory and embeds the configuration digest and master
seed in its artifacts. Exit codes: 0 success, 1 runtime failure, 2 usage
error. Wall-clock timing goes to a sidecar log, never into the canonical
artifacts, so reruns with one seed are byte-identical.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

from . import montecarlo
from .config import ConfigError, RunConfig, build_config, parse_value, read_config_file, write_effective_config
from .measures import (
    ProductPartition,
    load_measure_csv,
    load_pair_measure_csv,
    reference_measure,
)
from .montecarlo import ExperimentPlan, ExperimentReport
from .pointprocess import (
    ExponentialMarks,
    replicate_rng,
    sample_configuration,
    save_configuration_csv,
)
from .sinr_graph import build_graph, save_edges_csv
from .theory import (
    kullback_action,
    rate_I1,
    rate_joint,
    shannon_entropy,
)

SUBCOMMANDS = (
    "simulate",
    "verify-connectivity",
    "entropy",
    "aep",
    "wlln",
    "concentration",
    "rate",
    "sweep",
)

_FLAG_KEYS = (
    ("--lambda", "lambdas", "intensity, or comma-separated increasing list"),
    ("--replicates", "replicates", "replicate count, or one per lambda"),
    ("--alpha", "alpha", "path-loss exponent"),
    ("--c", "c", "exponential mark rate"),
    ("--beta0", "beta0", "limit coefficient: constant or 'upper:value,...' table"),
    ("--n0", "n0", "external noise power"),
    ("--seed", "seed", "master seed"),
    ("--domain-shape", "domain_shape", "disk or box"),
    ("--domain-size", "domain_size", "disk radius or box side"),
    ("--dim", "dim", "domain dimension (box only)"),
    ("--n-spatial", "n_spatial", "spatial cells in the partition"),
    ("--n-mark", "n_mark", "finite mark intervals in the partition"),
    ("--t-mark", "t_mark", "mark truncation point (default: quantiles)"),
    ("--workers", "workers", "parallel workers (result-invariant)"),
    ("--output-dir", "output_dir", "artifact directory"),
    ("--pair-distance", "pair_distance", "test pair separation"),
    ("--test-mark-x", "test_mark_x", "threshold mark of the first test point"),
    ("--test-mark-y", "test_mark_y", "threshold mark of the second test point"),
    ("--convention", "convention", "interference convention"),
    ("--eps1", "eps1", "sup-deviation threshold for the mark measure"),
    ("--eps2", "eps2", "sup-deviation threshold for the pair measure"),
    ("--entropy-method", "entropy_method", "quadrature or monte-carlo"),
    ("--mc-budget", "mc_budget", "samples for the monte-carlo estimate"),
    ("--bound", "bound", "test-function bound for the divergence evaluation"),
    ("--tol", "tol", "constraint tolerance"),
)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sinrgraph",
        description="SINR random-graph simulator and verification toolkit",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="flat key = value configuration file")
        for flag, key, helptext in _FLAG_KEYS:
            p.add_argument(flag, dest=key, metavar="V", help=helptext)
        if name == "rate":
            p.add_argument("--omega", required=True, help="mark measure CSV")
            p.add_argument("--pi", help="pair measure CSV")
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse uses 2 for usage errors already
        return int(exc.code or 0)
    try:
        config = _config_from_args(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        out_dir = _prepare_output_dir(config, args.subcommand)
        t0 = time.time()
        _dispatch(args, config, out_dir)
        _write_log(out_dir, f"{args.subcommand} completed in {time.time() - t0:.3f}s")
        return 0
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failure: one-line cause, exit 1
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


def _config_from_args(args) -> RunConfig:
    file_values = read_config_file(args.config) if args.config else {}
    flag_values = {}
    for _, key, _ in _FLAG_KEYS:
        raw = getattr(args, key, None)
        if raw is not None:
            flag_values[key] = parse_value(key, str(raw))
    return build_config(args.subcommand, file_values, flag_values)


def _prepare_output_dir(config: RunConfig, subcommand: str) -> Path:
    out = Path(os.environ.get("SINRGRAPH_OUTPUT_DIR", config.output_dir))
    out.mkdir(parents=True, exist_ok=True)
    write_effective_config(config, subcommand, out / "effective_config.txt")
    return out


def _write_log(out_dir: Path, line: str) -> None:
    with open(out_dir / "run.log", "a") as fh:
        fh.write(line + "\n")


def _plan_from_config(config: RunConfig, suite: str) -> ExperimentPlan:
    settings: dict = {}
    if suite == "connectivity":
        settings = {
            "pair_distance": config.pair_distance,
            "test_marks": (config.test_mark_x, config.test_mark_y),
            "convention": config.convention,
        }
    elif suite == "wlln":
        settings = {
            "n_spatial": config.n_spatial,
            "n_mark": config.n_mark,
            "t_mark": config.t_mark,
            "eps1": config.eps1,
            "eps2": config.eps2,
        }
    return ExperimentPlan(
        suite=suite,
        domain=config.domain(),
        alpha=config.alpha,
        c=config.c,
        beta0=config.beta0,
        n0=config.n0,
        lambdas=tuple(config.lambdas),
        replicates=tuple(config.replicates),
        master_seed=config.seed,
        workers=config.workers,
        settings=settings,
    )


def _write_report(report: ExperimentReport, config: RunConfig, out_dir: Path) -> None:
    payload = report.canonical_dict()
    payload["config_digest"] = config.digest()
    text = json.dumps(payload, sort_keys=True, indent=2) + "\n"
    (out_dir / "report.json").write_text(text)
    (out_dir / "report.csv").write_text(report.csv_text())
    _write_log(out_dir, f"suite={report.suite} runtime={report.runtime_seconds:.3f}s")
    for name, ok in report.verdicts.items():
        print(f"{report.suite}: {name}: {'PASS' if ok else 'FAIL'}")


def _dispatch(args, config: RunConfig, out_dir: Path) -> None:
    sub = args.subcommand
    if sub == "simulate":
        _run_simulate(config, out_dir)
    elif sub == "verify-connectivity":
        _write_report(montecarlo.run_suite(_plan_from_config(config, "connectivity")), config, out_dir)
    elif sub == "entropy":
        _run_entropy(config, out_dir)
    elif sub == "aep":
        _write_report(montecarlo.run_suite(_plan_from_config(config, "aep")), config, out_dir)
    elif sub == "wlln":
        _write_report(montecarlo.run_suite(_plan_from_config(config, "wlln")), config, out_dir)
    elif sub == "concentration":
        _write_report(montecarlo.run_suite(_plan_from_config(config, "concentration")), config, out_dir)
    elif sub == "rate":
        _run_rate(args, config, out_dir)
    elif sub == "sweep":
        _write_report(montecarlo.run_suite(_plan_from_config(config, "kernel-limit")), config, out_dir)
    else:  # pragma: no cover
        raise ConfigError(f"unknown subcommand {sub}")


def _run_simulate(config: RunConfig, out_dir: Path) -> None:
    lam = config.lambdas[0]
    rng = replicate_rng(config.seed, 0)
    domain = config.domain()
    configuration = sample_configuration(
        domain, lam, ExponentialMarks(config.c), rng, seed_record=(config.seed, 0)
    )
    plan = _plan_from_config(config, "connectivity")
    graph = build_graph(configuration, plan.sinr_params(convention=config.convention))
    save_configuration_csv(configuration, out_dir / "configuration.csv")
    save_edges_csv(graph, out_dir / "edges.csv")
    summary = {
        "n": configuration.n_points,
        "n_edges": graph.n_edges,
        "mean_degree": graph.mean_degree,
        "lambda": lam,
        "seed": config.seed,
        "config_digest": config.digest(),
    }
    (out_dir / "summary.json").write_text(json.dumps(summary, sort_keys=True, indent=2) + "\n")
    print(f"simulate: n={summary['n']} edges={summary['n_edges']}")


def _run_entropy(config: RunConfig, out_dir: Path) -> None:
    plan = _plan_from_config(config, "aep")
    kp = plan.kernel_params(config.lambdas[-1])
    rng = replicate_rng(config.seed, 0)
    est = shannon_entropy(
        kp, method=config.entropy_method, budget=config.mc_budget, rng=rng
    )
    payload = {
        "H_nats": est.value,
        "H_bits": est.bits,
        "method": est.method,
        "error_estimate": est.error_estimate,
        "inputs_digest": config.digest(),
        "seed": config.seed,
        "clamp_count": 0,
    }
    (out_dir / "entropy.json").write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")
    print(f"entropy: H={est.value:.6f} nats ({est.bits:.6f} bits) via {est.method}")


def _run_rate(args, config: RunConfig, out_dir: Path) -> None:
    domain = config.domain()
    partition = ProductPartition.build(
        domain,
        ExponentialMarks(config.c),
        n_spatial=config.n_spatial,
        n_mark=config.n_mark,
        t_mark=config.t_mark,
    )
    omega = load_measure_csv(args.omega, partition)
    reference = reference_measure(partition)
    i1 = rate_I1(omega, reference)
    plan = _plan_from_config(config, "kernel-limit")
    kp = plan.kernel_params(config.lambdas[-1])
    payload = {
        "omega_file": str(args.omega),
        "omega_total_mass": omega.total,
        "rate_I1_finite": i1.finite,
        "rate_I1_value": i1.value if i1.finite else None,
        "inputs_digest": config.digest(),
        "seed": config.seed,
    }
    if args.pi:
        pi = load_pair_measure_csv(args.pi, partition)
        joint = rate_joint(omega, pi, kp, tol=config.tol)
        payload.update(
            {
                "pi_file": str(args.pi),
                "rate_joint_finite": joint.finite,
                "rate_joint_value": joint.value if joint.finite else None,
                "kullback_action": kullback_action(omega, pi, config.bound, kp),
                "bound": config.bound,
                "tol": config.tol,
            }
        )
    (out_dir / "rate.json").write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")
    finite = "finite" if i1.finite else "infinite"
    print(f"rate: I1 {finite}" + (f" value={i1.value:.6f}" if i1.finite else ""))


if __name__ == "__main__":  # pragma: no cover
    raise SystemExit(main())
