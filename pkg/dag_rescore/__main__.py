"""CLI entry point for DAG learning with sample reweighting.

Usage::

    uv run python -m dag_rescore simulate --d 10 --n 2000 --out x.csv --graph-out g.json
    uv run python -m dag_rescore fit --method notears --data x.csv --out-graph est.json
    uv run python -m dag_rescore rescore --method golem --data x.csv --tau 0.9
    uv run python -m dag_rescore eval --est est.json --truth g.json --sid
    uv run python -m dag_rescore bench --config bench.json --out results/

Every flag defaults to the environment variable ``RESCORE_<FLAG>`` when it
is set (e.g. ``RESCORE_LAMBDA=0.02``).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import pathlib
import sys
import typing as t

from dotenv import load_dotenv

#: CLI method names mapped to registered backbones.
METHOD_ALIASES: t.Final = {
    "notears": "linear_notears",
    "golem": "linear_nll",
    "notears-mlp": "mlp_notears",
}
NOISE_ALIASES: t.Final = {
    "homo": "homogeneous",
    "hetero": "heterogeneous",
    "corrupt": "corrupted",
}


def _env(flag: str, default: t.Any = None) -> t.Any:
    """Default for ``--flag`` from ``RESCORE_FLAG`` if set."""
    return os.environ.get("RESCORE_" + flag.upper().replace("-", "_"), default)


def _add(
    parser: argparse.ArgumentParser,
    flag: str,
    default: t.Any = None,
    *,
    required: bool = False,
    **kwargs: t.Any,
) -> None:
    value = _env(flag, default)
    if kwargs.get("action") == "store_true" and isinstance(value, str):
        value = value.lower() in {"1", "true", "yes"}
    # an environment value satisfies a required flag
    required = required and value is None
    parser.add_argument(f"--{flag}", default=value, required=required, **kwargs)


def _add_fit_flags(parser: argparse.ArgumentParser) -> None:
    _add(
        parser,
        "method",
        required=True,
        choices=sorted(METHOD_ALIASES),
        help="Backbone learner.",
    )
    _add(
        parser,
        "data",
        required=True,
        type=pathlib.Path,
        help="Data file (n rows of d comma-separated values).",
    )
    _add(
        parser,
        "lambda",
        0.01,
        type=float,
        dest="lambda1",
        help="Sparsity coefficient (default: 0.01).",
    )
    _add(parser, "thresh", 0.3, type=float, help="Edge threshold (default: 0.3).")
    _add(
        parser,
        "h",
        "expm",
        choices=("expm", "poly"),
        help="Acyclicity function (default: expm).",
    )
    _add(
        parser,
        "variance",
        "fixed",
        choices=("fixed", "equal", "non_equal"),
        help="Noise variance model of the likelihood backbone (default: fixed).",
    )
    _add(parser, "max-outer", 100, type=int, help="Outer iteration cap.")
    _add(parser, "seed", 0, type=int, help="Initialization seed (default: 0).")
    _add(
        parser,
        "standardize",
        action="store_true",
        help="Z-score every column before fitting.",
    )
    _add(parser, "out-cont", type=pathlib.Path, help="Continuous matrix file.")
    _add(parser, "out-graph", type=pathlib.Path, help="Thresholded graph file.")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dag_rescore",
        description="Learn DAGs from data with adaptive sample reweighting.",
    )
    _add(
        parser,
        "log-level",
        "WARNING",
        choices=("DEBUG", "INFO", "WARNING", "ERROR"),
        help="Logging level (default: WARNING).",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    simulate = commands.add_parser("simulate", help="Sample a graph and data.")
    _add(simulate, "graph", "er", choices=("er", "sf"), help="Graph family.")
    _add(simulate, "k", 2, type=int, help="Expected edges per node.")
    _add(simulate, "d", 10, type=int, help="Number of variables.")
    _add(simulate, "sem", "linear", choices=("linear", "gp"), help="SEM family.")
    _add(simulate, "n", 2000, type=int, help="Number of samples.")
    _add(
        simulate,
        "noise",
        "homo",
        choices=sorted(NOISE_ALIASES),
        help="Noise scenario (default: homo).",
    )
    _add(simulate, "p", 0.0, type=float, help="Corrupted share of the rows.")
    _add(simulate, "seed", 0, type=int, help="Random seed.")
    _add(simulate, "standardize", action="store_true", help="Z-score the data.")
    _add(simulate, "out", required=True, type=pathlib.Path, help="Data file.")
    _add(
        simulate,
        "graph-out",
        required=True,
        type=pathlib.Path,
        help="Ground-truth graph file.",
    )
    _add(
        simulate,
        "labels-out",
        type=pathlib.Path,
        help="Group and corruption labels file.",
    )
    _add(simulate, "header", action="store_true", help="Write a column header.")

    fit = commands.add_parser("fit", help="Fit a backbone with uniform weights.")
    _add_fit_flags(fit)

    rescore = commands.add_parser("rescore", help="Fit with adaptive reweighting.")
    _add_fit_flags(rescore)
    _add(rescore, "tau", 0.9, type=float, help="Cutoff threshold (default: 0.9).")
    _add(
        rescore,
        "inner",
        "exact",
        choices=("exact", "parametric"),
        help="Inner weight solver (default: exact).",
    )
    _add(rescore, "k-outer", type=int, help="Outer epochs (default: backbone's).")
    _add(rescore, "k-inner", 100, type=int, help="Parametric ascent steps.")
    _add(rescore, "k-reweight", 1, type=int, help="First reweighting epoch.")
    _add(rescore, "temperature", 1.0, type=float, help="Softmax temperature.")
    _add(rescore, "lr", 1e-2, type=float, help="Scorer learning rate.")
    _add(
        rescore,
        "feed-losses",
        action="store_true",
        help="Give the scorer each sample's loss as an extra input.",
    )
    _add(
        rescore,
        "weights-out",
        type=pathlib.Path,
        help="Write the final weights here, one per line.",
    )

    evaluate = commands.add_parser("eval", help="Compare an estimate with the truth.")
    _add(evaluate, "est", required=True, type=pathlib.Path, help="Estimated graph.")
    _add(evaluate, "truth", required=True, type=pathlib.Path, help="True graph.")
    _add(
        evaluate,
        "sid",
        action="store_true",
        help="Also compute the structural intervention distance.",
    )

    bench = commands.add_parser("bench", help="Run a benchmark configuration.")
    _add(
        bench,
        "config",
        required=True,
        type=pathlib.Path,
        help="Benchmark configuration (JSON).",
    )
    _add(bench, "out", type=pathlib.Path, help="Output directory.")
    return parser


def _simulate(args: argparse.Namespace) -> None:
    from dag_rescore.models import (
        BackboneName,
        GraphKind,
        GraphModel,
        MethodSpec,
        NoiseKind,
        Scenario,
        SemKind,
    )
    from dag_rescore.simulation import simulate_scenario
    from dag_rescore.tools import write_data, write_graph, write_labels

    scenario = Scenario(
        graph=GraphModel(kind=GraphKind(args.graph), k=args.k),
        d=args.d,
        sem=SemKind(args.sem),
        n=args.n,
        noise=NoiseKind(NOISE_ALIASES[args.noise]),
        p=args.p,
        standardize=args.standardize,
        # simulation ignores the methods
        methods=[MethodSpec(backbone=BackboneName.LINEAR_NOTEARS)],
    )
    truth, weights, x = simulate_scenario(scenario, args.seed)
    write_data(args.out, x, header=args.header)
    write_graph(args.graph_out, truth, weights)
    if args.labels_out is not None:
        write_labels(args.labels_out, x)
    print(f"{x.n} samples of {x.d} variables, {truth.n_edges} true edges")


def _fit(args: argparse.Namespace, *, reweight: bool) -> None:
    from dag_rescore.backbones import fit_backbone
    from dag_rescore.models import (
        AcyclicityKind,
        InnerSolverKind,
        LearnerConfig,
        NllVariance,
        RescoreConfig,
    )
    from dag_rescore.rescore import fit_rescore
    from dag_rescore.simulation import standardize
    from dag_rescore.tools import read_data, write_graph, write_matrix, write_weights

    x = read_data(args.data)
    if args.standardize:
        x = standardize(x)
    lcfg = LearnerConfig(
        lambda1=args.lambda1,
        w_threshold=args.thresh,
        acyclicity=AcyclicityKind(args.h),
        nll_variance=NllVariance(args.variance),
        max_outer=args.max_outer,
        seed=args.seed,
    )
    backbone = METHOD_ALIASES[args.method]
    if reweight:
        rcfg = RescoreConfig(
            tau=args.tau,
            inner=InnerSolverKind(args.inner),
            k_outer=args.k_outer,
            k_inner=args.k_inner,
            k_reweight=args.k_reweight,
            temperature=args.temperature,
            lr=args.lr,
            feed_losses=args.feed_losses,
            seed=args.seed,
        )
        result = fit_rescore(backbone, x, lcfg, rcfg)
    else:
        result = fit_backbone(backbone, x, None, lcfg)
    if args.out_cont is not None:
        write_matrix(args.out_cont, result.continuous)
    if args.out_graph is not None:
        write_graph(args.out_graph, result.dag)
    if reweight and args.weights_out is not None and result.weights is not None:
        write_weights(args.weights_out, result.weights)
    summary = {"edges": result.dag.edges(), **result.diagnostics.as_dict()}
    print(json.dumps(summary))


def _evaluate(args: argparse.Namespace) -> None:
    from dag_rescore.metrics import evaluate_graph
    from dag_rescore.tools import read_graph

    est, _ = read_graph(args.est)
    truth, _ = read_graph(args.truth)
    print(evaluate_graph(est, truth, with_sid=args.sid).model_dump_json())


def _bench(args: argparse.Namespace) -> None:
    from dag_rescore.bench import AGGREGATES_FILE, run_benchmark
    from dag_rescore.models import BenchConfig

    cfg = BenchConfig.model_validate_json(args.config.read_text(encoding="utf-8"))
    out = args.out or cfg.out_dir
    if out is None:
        msg = "bench needs --out or out_dir in the configuration"
        raise SystemExit(msg)
    table = run_benchmark(cfg, out)
    failed = sum(r.failed for r in table.rows)
    print(f"{len(table.rows)} rows ({failed} failed) -> {out / AGGREGATES_FILE}")


def main(argv: list[str] | None = None) -> None:
    """Run the dag_rescore CLI."""
    load_dotenv()

    parser = _build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=args.log_level,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )

    # Lazy imports keep --help fast
    from pydantic import ValidationError

    from dag_rescore.errors import RescoreError

    try:
        match args.command:
            case "simulate":
                _simulate(args)
            case "fit":
                _fit(args, reweight=False)
            case "rescore":
                _fit(args, reweight=True)
            case "eval":
                _evaluate(args)
            case "bench":
                _bench(args)
    except (RescoreError, ValidationError, OSError) as exc:
        print(f"Error: {exc}", file=sys.stderr)
        sys.exit(1)


if __name__ == "__main__":
    main()
