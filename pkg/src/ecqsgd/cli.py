"""Command-line driver: experiment runs, bound verification, codec benchmarks.

Subcommands:

* ``run``          execute a configured experiment, one CSV per repetition
                   plus a seed-averaged aggregate
* ``verify-bounds`` run the numerical bound-verification battery
* ``codec-bench``  round-trip and cost table over dimension/scheme grids
* ``gen-data``     materialize synthetic datasets to disk in LibSVM format

Exit codes: 0 ok, 1 config error, 2 verification failure, 3 divergence.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace

import numpy as np

from . import __version__
from .analysis import gamma, lambda_of
from .config import (
    ConfigError,
    ExperimentConfig,
    build_problem,
    build_trainer_config,
    parse_config_file,
    serialize_config,
)
from .problems import (
    Dataset,
    Task,
    gen_classification,
    gen_regression,
    optimum,
    save_libsvm,
)
from .quantizer import NormKind, QuantScheme, quantize
from .rng import RngStream
from .sim import (
    MetricsLog,
    default_thread_count,
    load_run_state,
    run_with_state,
    save_run_state,
)
from . import codec as wire
from . import verify

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_VERIFY = 2
EXIT_DIVERGED = 3


def _format_value(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def write_metrics_csv(path: str, log: MetricsLog, header_lines: list[str]) -> None:
    """Self-describing CSV: '#'-prefixed provenance block, then fixed columns."""
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(f"# ecqsgd {__version__}\n")
        for line in header_lines:
            fh.write(f"# {line}\n")
        fh.write(f"# status = {log.status}\n")
        fh.write(f"# stability_lambda = {_format_value(log.stability_lambda)}\n")
        fh.write(",".join(MetricsLog.COLUMNS) + "\n")
        for i in range(len(log)):
            row = [
                str(int(log.iteration[i])),
                _format_value(log.train_loss[i]),
                _format_value(log.test_loss[i]),
                _format_value(log.dist_sq_to_opt[i]),
                str(int(log.bits_plain_cum[i])),
                _format_value(log.bits_entropy_cum[i]),
                _format_value(log.h_norm_sq_mean[i]),
            ]
            fh.write(",".join(row) + "\n")


def _aggregate_logs(logs: list[MetricsLog]) -> MetricsLog:
    """Column-wise mean over repetitions, truncated to the shortest log."""
    n = min(len(log) for log in logs)
    mean = lambda attr: np.mean([getattr(log, attr)[:n] for log in logs], axis=0)
    return MetricsLog(
        iteration=logs[0].iteration[:n],
        train_loss=mean("train_loss"),
        test_loss=mean("test_loss"),
        dist_sq_to_opt=mean("dist_sq_to_opt"),
        bits_plain_cum=np.asarray(mean("bits_plain_cum"), dtype=np.int64),
        bits_entropy_cum=mean("bits_entropy_cum"),
        h_norm_sq_mean=mean("h_norm_sq_mean"),
        status="ok" if all(log.status == "ok" for log in logs) else "diverged",
        stability_lambda=logs[0].stability_lambda,
    )


def _maybe_attach_reference(problem) -> None:
    """Fill in the distance-reference optimum where that is cheap.

    Quadratics carry their exact optimum; squared-loss datasets get the
    normal-equations solution up to d = 2048. Log-loss references are
    expensive (long gradient-descent run) and must be requested through the
    library API instead, so those runs log NaN distances.
    """
    if isinstance(problem, Dataset) and problem.task is Task.SQUARED_LOSS:
        if problem.dim <= 2048:
            optimum(problem)
        else:
            logger.info("skipping distance reference (d=%d too large)", problem.dim)


def cmd_run(args: argparse.Namespace) -> int:
    cfg = parse_config_file(args.config)
    if (args.save_state or args.resume_state) and cfg.repetitions != 1:
        raise ConfigError("state checkpointing requires repetitions = 1")
    problem = build_problem(cfg.problem)
    trainer = build_trainer_config(cfg, problem.dim)
    _maybe_attach_reference(problem)
    os.makedirs(cfg.output.dir, exist_ok=True)
    header = serialize_config(cfg).splitlines()

    resume = load_run_state(args.resume_state) if args.resume_state else None

    def one_rep(k: int):
        rep_cfg = replace(trainer, seed=trainer.seed + k)
        return run_with_state(rep_cfg, problem, n_threads=1, resume=resume)

    threads = default_thread_count()
    if threads > 1 and cfg.repetitions > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one_rep, range(cfg.repetitions)))
    else:
        results = [one_rep(k) for k in range(cfg.repetitions)]

    logs = [log for log, _ in results]
    for k, log in enumerate(logs):
        path = os.path.join(cfg.output.dir, f"{cfg.output.prefix}_rep{k}.csv")
        write_metrics_csv(path, log, header + [f"repetition = {k}"])
        print(f"wrote {path} ({len(log)} rows, status={log.status})")
    mean_path = os.path.join(cfg.output.dir, f"{cfg.output.prefix}_mean.csv")
    write_metrics_csv(mean_path, _aggregate_logs(logs), header + ["aggregate = mean"])
    print(f"wrote {mean_path}")

    if args.save_state:
        save_run_state(args.save_state, results[0][1])
        print(f"wrote {args.save_state}")
    if any(log.status == "diverged" for log in logs):
        print("divergence detected in at least one repetition")
        return EXIT_DIVERGED
    return EXIT_OK


def cmd_verify_bounds(args: argparse.Namespace) -> int:
    if args.config:
        cfg = parse_config_file(args.config)
        t = cfg.trainer
        alpha, beta, s, eta = t.alpha, t.beta, t.s, t.eta
    else:
        alpha, beta, s, eta = 0.2, 0.9, 4, 0.02
    lam = lambda_of(alpha, beta, gamma(256, s))
    if alpha > 0 and lam >= 1.0:
        print(
            f"unstable regime: lambda = {lam:.4f} >= 1 for alpha={alpha}, beta={beta}, "
            f"s={s} (d=256); bound checks require lambda < 1"
        )
        return EXIT_CONFIG
    results = verify.run_default_checks(
        alpha=alpha, beta=beta, s=s, eta=eta, quick=args.quick
    )
    lines = [r.format_line() for r in results]
    n_pass = sum(r.passed for r in results)
    lines.append(f"overall: {'PASS' if n_pass == len(results) else 'FAIL'} ({n_pass}/{len(results)})")
    report = "\n".join(lines) + "\n"
    print(report, end="")
    if args.out:
        with open(args.out, "w", encoding="ascii") as fh:
            fh.write(report)
        print(f"wrote {args.out}")
    return EXIT_OK if n_pass == len(results) else EXIT_VERIFY


def cmd_codec_bench(args: argparse.Namespace) -> int:
    dims = [int(x) for x in args.dims.split(",")]
    s_values = [int(x) for x in args.s.split(",")]
    norms = [
        NormKind.L2 if x == "l2" else NormKind.LINF for x in args.norms.split(",")
    ]
    rows = []
    for d in dims:
        rng = np.random.default_rng(args.seed)
        v = rng.normal(size=d)
        for s in s_values:
            for norm in norms:
                bucket = args.bucket_size if args.bucket_size > 0 else d
                scheme = QuantScheme(s=s, norm_kind=norm, bucket_size=bucket)
                qv = quantize(v, scheme, RngStream(args.seed))
                decoded = wire.decode(wire.encode(qv))
                roundtrip = (
                    np.array_equal(decoded.codes, qv.codes)
                    and np.array_equal(
                        decoded.scales, qv.scales.astype(np.float32).astype(np.float64)
                    )
                )
                plain = wire.plain_cost_bits(d, scheme)
                entropy = wire.entropy_cost_bits(qv)
                rows.append(
                    (
                        d, s, "l2" if norm is NormKind.L2 else "linf", bucket,
                        "yes" if roundtrip else "NO",
                        plain, 32.0 * d / plain, entropy, 32.0 * d / entropy,
                    )
                )
    header = (
        f"{'dim':>8} {'s':>3} {'norm':>5} {'bucket':>8} {'roundtrip':>9} "
        f"{'plain_bits':>11} {'ratio':>8} {'entropy_bits':>13} {'e_ratio':>8}"
    )
    print(header)
    for r in rows:
        print(
            f"{r[0]:>8} {r[1]:>3} {r[2]:>5} {r[3]:>8} {r[4]:>9} "
            f"{r[5]:>11} {r[6]:>7.2f}x {r[7]:>13.1f} {r[8]:>7.2f}x"
        )
    return EXIT_OK


def cmd_gen_data(args: argparse.Namespace) -> int:
    if args.kind == "regression":
        ds, _ = gen_regression(
            d=args.d, n=args.n + args.n_test, noise_sigma=args.noise_sigma,
            seed=args.seed,
        )
        if args.n_test:
            train = Dataset(
                features=ds.features[: args.n], targets=ds.targets[: args.n],
                task=ds.task, shards=[np.arange(args.n)],
            )
            test = (ds.features[args.n :], ds.targets[args.n :], ds.task)
            save_libsvm(train, args.out)
            save_libsvm(test, args.out + ".t")
            print(f"wrote {args.out} and {args.out}.t")
        else:
            save_libsvm(ds, args.out)
            print(f"wrote {args.out}")
    else:
        ds, _ = gen_classification(
            d=args.d, n=args.n, seed=args.seed, density=args.density,
            scale_spread=args.scale_spread, n_test=args.n_test,
        )
        save_libsvm(ds, args.out)
        print(f"wrote {args.out} ({args.n} samples, d={args.d})")
        if args.n_test:
            save_libsvm(ds, args.out + ".t", test=True)
            print(f"wrote {args.out}.t ({args.n_test} samples)")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ecqsgd",
        description="Quantized data-parallel SGD: experiments, codecs, bound checks",
    )
    parser.add_argument("--version", action="version", version=f"ecqsgd {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a configured experiment")
    p_run.add_argument("config", help="path to a key = value config file")
    p_run.add_argument("--save-state", default="", help="write final run state (.npz)")
    p_run.add_argument("--resume-state", default="", help="resume from a run state (.npz)")
    p_run.set_defaults(func=cmd_run)

    p_verify = sub.add_parser("verify-bounds", help="run the bound-verification battery")
    p_verify.add_argument("--config", default="", help="optional config with trainer.* overrides")
    p_verify.add_argument("--out", default="", help="write the report to this path")
    p_verify.add_argument("--quick", action="store_true", help="reduced seed counts")
    p_verify.set_defaults(func=cmd_verify_bounds)

    p_bench = sub.add_parser("codec-bench", help="codec round-trip and cost table")
    p_bench.add_argument("--dims", default="1000,4096")
    p_bench.add_argument("--s", default="1,4")
    p_bench.add_argument("--norms", default="l2,linf")
    p_bench.add_argument("--bucket-size", type=int, default=0)
    p_bench.add_argument("--seed", type=int, default=0)
    p_bench.set_defaults(func=cmd_codec_bench)

    p_gen = sub.add_parser("gen-data", help="materialize a synthetic dataset (LibSVM text)")
    p_gen.add_argument("--kind", choices=("regression", "classification"), required=True)
    p_gen.add_argument("--d", type=int, required=True)
    p_gen.add_argument("--n", type=int, required=True)
    p_gen.add_argument("--n-test", type=int, default=0)
    p_gen.add_argument("--noise-sigma", type=float, default=0.5)
    p_gen.add_argument("--density", type=float, default=0.13)
    p_gen.add_argument("--scale-spread", type=float, default=1.75)
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.add_argument("--out", required=True)
    p_gen.set_defaults(func=cmd_gen_data)
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
