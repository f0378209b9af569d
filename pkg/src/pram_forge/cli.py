"""Command-line front end.

Exit codes: 0 ok, 2 bad configuration, 3 optimizer failure, 4 certificate
failure, 5 I/O failure. Every subcommand accepts ``--config file.json``
whose keys are the long option names (dashes or underscores); flags given on
the command line win.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from .core import (
    CertificationError,
    EmptyFileError,
    InfeasibleStrategyError,
    IoFailureError,
    MissingColumnError,
    NotApplicableError,
    PramError,
    TooLargeError,
    UnknownLabelError,
    as_probs,
    check_alpha,
    frequencies,
)
from .dp_constraints import certify
from .info import mutual_information, plugin_mi
from .inference import risk_indices
from .mechanism import (
    build_matrix,
    load_column,
    privatize,
    run_privatization,
    sample_column,
    save_column,
    write_manifest,
)
from .optimizer import optimize
from .scenarios import ScenarioConfig, run_scenario, summarize

log = logging.getLogger("pram_forge")

EXIT_OK, EXIT_CONFIG, EXIT_OPTIMIZER, EXIT_CERT, EXIT_IO = 0, 2, 3, 4, 5


def _floats(text) -> list[float]:
    if isinstance(text, (list, tuple)):
        return [float(x) for x in text]
    return [float(x) for x in str(text).split(",") if x.strip()]


def _ints(text) -> list[int]:
    if isinstance(text, (list, tuple)):
        return [int(x) for x in text]
    return [int(x) for x in str(text).split(",") if x.strip()]


def _emit(payload: dict, out: str | None) -> None:
    text = json.dumps(payload, indent=2) + "\n"
    if out:
        try:
            Path(out).write_text(text)
        except OSError as exc:
            raise IoFailureError(str(exc)) from exc
    else:
        sys.stdout.write(text)


def _apply_config(args: argparse.Namespace, defaults: dict) -> argparse.Namespace:
    """Fill unset flags from ``--config``, then from ``defaults``."""
    cfg = {}
    if getattr(args, "config", None):
        try:
            cfg = json.loads(Path(args.config).read_text())
        except OSError as exc:
            raise IoFailureError(str(exc)) from exc
        except json.JSONDecodeError as exc:
            raise PramError(f"bad config file: {exc}") from exc
        cfg = {k.replace("-", "_"): v for k, v in cfg.items()}
    for key, value in cfg.items():
        if getattr(args, key, None) is None:
            setattr(args, key, value)
    for key, value in defaults.items():
        if getattr(args, key, None) is None:
            setattr(args, key, value)
    return args


def _parse_alpha(text) -> float:
    return check_alpha(text)


# -- subcommands ------------------------------------------------------------

def cmd_optimize(args) -> int:
    args = _apply_config(args, {"strategy": "auto", "seed": 0, "restarts": 32})
    if args.p is None or args.alpha is None:
        raise PramError("optimize needs --p and --alpha")
    p = as_probs(_floats(args.p))
    if args.S is not None and int(args.S) != len(p):
        raise PramError(f"--S {args.S} does not match {len(p)} probabilities")
    alpha = _parse_alpha(args.alpha)
    try:
        report = optimize(p, alpha, args.strategy, seed=int(args.seed),
                          restarts=int(args.restarts), threads=args.threads)
    except (NotApplicableError, InfeasibleStrategyError, TooLargeError) as exc:
        log.error("%s", exc)
        return EXIT_OPTIMIZER
    _emit(report.to_dict(), args.out)
    return EXIT_OK


def cmd_privatize(args) -> int:
    args = _apply_config(args, {"seed": 0, "strategy": "auto"})
    if not (args.input and args.column and args.output) or args.alpha is None:
        raise PramError("privatize needs --input, --column, --alpha and --output")
    alpha = _parse_alpha(args.alpha)
    x = load_column(args.input, args.column)
    counts = frequencies(x)
    p = as_probs(counts / counts.sum())
    report = None
    if args.q is not None:
        q = _floats(args.q)
    else:
        try:
            report = optimize(p, alpha, args.strategy, seed=int(args.seed), threads=args.threads)
        except (NotApplicableError, InfeasibleStrategyError, TooLargeError) as exc:
            log.error("%s", exc)
            return EXIT_OPTIMIZER
        q = report.q_star
    M = build_matrix(q)
    if M.size != x.size:
        raise PramError(f"q has {M.size} entries but the column has {x.size} categories")
    try:
        run, z = run_privatization(x, M, int(args.seed), alpha, threads=args.threads)
    except CertificationError as exc:
        cert = certify(M, alpha)
        log.error("%s", exc)
        sys.stdout.write(json.dumps({"certificate": cert.to_dict()}, indent=2) + "\n")
        return EXIT_CERT
    save_column(z, args.output, args.column)
    manifest = args.manifest or f"{args.output}.run.json"
    write_manifest(run, manifest)
    payload = {"run": run.to_dict(), "estimated_p": [float(v) for v in p], "manifest": manifest}
    if report is not None:
        payload["optimization"] = report.to_dict()
    _emit(payload, None)
    return EXIT_OK


def cmd_scenario(args) -> int:
    args = _apply_config(args, {"scenario": "I", "n": 10_000, "replications": 100, "seed": 0,
                                "strategy": "auto", "gamma_shape": 1.0, "gamma_scale": 5.0})
    cfg = ScenarioConfig(
        scenario=args.scenario,
        p=tuple(_floats(args.p)) if args.p is not None else None,
        alphas=tuple(_floats(args.alpha)) if args.alpha is not None else (0.5, 1.0, 1.5, 2.0),
        n=int(args.n),
        replications=int(args.replications),
        seed=int(args.seed),
        strategy=args.strategy,
        gamma_shape=float(args.gamma_shape),
        gamma_scale=float(args.gamma_scale),
        population=int(args.population) if args.population is not None else None,
    )
    try:
        results = run_scenario(cfg, threads=args.threads)
    except (NotApplicableError, InfeasibleStrategyError, TooLargeError) as exc:
        log.error("%s", exc)
        return EXIT_OPTIMIZER
    summary = summarize(cfg, results)
    if args.out_dir:
        out = Path(args.out_dir)
        try:
            out.mkdir(parents=True, exist_ok=True)
            (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
            with open(out / "estimates.csv", "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["alpha", "replication", "category", "p_true", "p_hat"])
                for res in results:
                    for r, row in enumerate(res.estimates):
                        for k, v in enumerate(row):
                            w.writerow([res.alpha, r, k + 1, cfg.p[k], repr(float(v))])
            with open(out / "means.csv", "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["alpha", "category", "p_true", "mean_p_hat"])
                for res in results:
                    for k, v in enumerate(res.estimates.mean(axis=0)):
                        w.writerow([res.alpha, k + 1, cfg.p[k], repr(float(v))])
        except OSError as exc:
            raise IoFailureError(str(exc)) from exc
    _emit(summary, None)
    return EXIT_OK


def cmd_mi_curve(args) -> int:
    args = _apply_config(args, {"grid_points": 6, "seed": 0, "n": 0, "replications": 1})
    if args.p is None or args.alpha is None:
        raise PramError("mi-curve needs --p and --alpha")
    p = as_probs(_floats(args.p))
    if len(p) != 2:
        raise PramError("mi-curve sweeps a symmetric binary channel; p must have 2 entries")
    alpha = _parse_alpha(args.alpha)
    k = int(args.grid_points)
    if k < 2:
        raise PramError("need at least 2 grid points")
    lo, hi = 1 / (1 + math.exp(alpha)), math.exp(alpha) / (1 + math.exp(alpha))
    grid = np.linspace(lo, hi, k)
    n, reps = int(args.n), int(args.replications)
    header = ["q", "mi_exact"] + (["mi_plugin_mean"] if n > 0 else [])
    rows = []
    for gi, q in enumerate(grid):
        row = [repr(float(q)), repr(mutual_information(p, [q, q]))]
        if n > 0:
            est = []
            for r in range(reps):
                ss = np.random.SeedSequence([int(args.seed), gi, r]).generate_state(2, dtype=np.uint64)
                x = sample_column(p, n, int(ss[0]))
                z = privatize(x, build_matrix([q, q]), int(ss[1]), threads=args.threads)
                est.append(plugin_mi(x, z))
            row.append(repr(math.fsum(est) / reps))
        rows.append(row)
    try:
        fh = open(args.out, "w", newline="") if args.out else sys.stdout
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
        if args.out:
            fh.close()
    except OSError as exc:
        raise IoFailureError(str(exc)) from exc
    return EXIT_OK


def cmd_risk(args) -> int:
    args = _apply_config(args, {})
    if args.sample_file or args.population_file:
        if not (args.sample_file and args.population_file and args.column):
            raise PramError("CSV mode needs --sample-file, --population-file and --column")
        pop = load_column(args.population_file, args.column)
        labels = {v: k for k, v in pop.labels.items()}
        smp = load_column(args.sample_file, args.column, labels=labels)
        f, F = frequencies(smp), frequencies(pop)
    else:
        if args.sample is None or args.population is None:
            raise PramError("risk needs --sample and --population count lists")
        f, F = _ints(args.sample), _ints(args.population)
    _emit(risk_indices(f, F).to_dict(), args.out)
    return EXIT_OK


def cmd_certify(args) -> int:
    args = _apply_config(args, {})
    if args.q is None or args.alpha is None:
        raise PramError("certify needs --q and --alpha")
    cert = certify(build_matrix(_floats(args.q)), _parse_alpha(args.alpha))
    _emit(cert.to_dict(), args.out)
    return EXIT_OK if cert.passed else EXIT_CERT


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pram-forge", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON file with option values")
        sp.add_argument("--threads", type=int, default=None,
                        help="worker cap (default: PRAM_FORGE_THREADS or CPU count)")
        return sp

    sp = common(sub.add_parser("optimize", help="MI-optimal DP retention vector"))
    sp.add_argument("--p", help="comma-separated probabilities")
    sp.add_argument("--S", type=int)
    sp.add_argument("--alpha")
    sp.add_argument("--strategy", choices=["auto", "exhaustive", "local_search"])
    sp.add_argument("--seed", type=int)
    sp.add_argument("--restarts", type=int)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_optimize)

    sp = common(sub.add_parser("privatize", help="privatize one CSV column"))
    sp.add_argument("--input")
    sp.add_argument("--column")
    sp.add_argument("--alpha")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--output")
    sp.add_argument("--manifest")
    sp.add_argument("--q", help="hand-supplied retention vector (skips the optimizer)")
    sp.add_argument("--strategy", choices=["auto", "exhaustive", "local_search"])
    sp.set_defaults(func=cmd_privatize)

    sp = common(sub.add_parser("scenario", help="simulation study over a list of alphas"))
    sp.add_argument("--scenario", choices=["I", "II", "III", "IV", "custom"])
    sp.add_argument("--p")
    sp.add_argument("--alpha", help="comma-separated alpha list")
    sp.add_argument("--n", type=int)
    sp.add_argument("--replications", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--strategy", choices=["auto", "exhaustive", "local_search"])
    sp.add_argument("--gamma-shape", type=float)
    sp.add_argument("--gamma-scale", type=float)
    sp.add_argument("--population", type=int, help="draw a population of this size for risk indices")
    sp.add_argument("--out-dir")
    sp.set_defaults(func=cmd_scenario)

    sp = common(sub.add_parser("mi-curve", help="MI along the feasible symmetric binary interval"))
    sp.add_argument("--p")
    sp.add_argument("--alpha")
    sp.add_argument("--grid-points", type=int)
    sp.add_argument("--n", type=int, help="sample size for plug-in estimates (0 = exact only)")
    sp.add_argument("--replications", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_mi_curve)

    sp = common(sub.add_parser("risk", help="disclosure-risk indices, population known"))
    sp.add_argument("--sample", help="comma-separated sample counts")
    sp.add_argument("--population", help="comma-separated population counts")
    sp.add_argument("--sample-file")
    sp.add_argument("--population-file")
    sp.add_argument("--column")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_risk)

    sp = common(sub.add_parser("certify", help="DP certificate of a retention vector"))
    sp.add_argument("--q")
    sp.add_argument("--alpha")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_certify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except (IoFailureError, MissingColumnError, EmptyFileError, UnknownLabelError) as exc:
        log.error("%s", exc)
        return EXIT_IO
    except CertificationError as exc:
        log.error("%s", exc)
        return EXIT_CERT
    except (PramError, ValueError, TypeError) as exc:
        log.error("%s", exc)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
