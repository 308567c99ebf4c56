"""Config-driven benchmark: simulate, fit, evaluate and aggregate.

Every (scenario, trial) pair is one work unit: its data set is shared by
all methods of the scenario, and each method gets its own derived seed.
Completed rows already present in ``results.csv`` are kept and not
recomputed, so an interrupted run resumes where it stopped.
"""

from __future__ import annotations

import collections
import concurrent.futures
import dataclasses
import functools
import logging
import math
import pathlib
import time
from collections.abc import Callable

import numpy as np

from dag_rescore.backbones import fit_backbone
from dag_rescore.errors import RescoreError
from dag_rescore.graphs import sample_dag
from dag_rescore.metrics import evaluate_graph
from dag_rescore.models import (
    AggregateRow,
    BenchConfig,
    GraphKind,
    GraphModel,
    MethodSpec,
    ResultRow,
    Scenario,
    SweepParam,
)
from dag_rescore.rescore import fit_rescore
from dag_rescore.simulation import simulate_scenario
from dag_rescore.structures import Dag, DataMatrix
from dag_rescore.tools import (
    read_results,
    write_aggregates,
    write_plot_data,
    write_results,
)

logger = logging.getLogger(__name__)

#: Method name of the random-graph reference row.
RANDOM_METHOD = "random"
RESULTS_FILE = "results.csv"
AGGREGATES_FILE = "aggregates.csv"

RowKey = tuple[str, str, int]
PlotPoint = tuple[str, float, float, float]


@dataclasses.dataclass(frozen=True)
class ResultsTable:
    """Rows, per-cell aggregates and sweep plot data of a benchmark run.

    Parameters
    ----------
    rows : tuple[ResultRow, ...]
        One row per (scenario, method, trial), sorted by key.
    aggregates : tuple[AggregateRow, ...]
        Mean and standard deviation per (scenario, method).
    plots : dict[str, list[PlotPoint]]
        Plot-data file name to ``(method, x, y, sigma)`` points.
    """

    rows: tuple[ResultRow, ...]
    aggregates: tuple[AggregateRow, ...]
    plots: dict[str, list[PlotPoint]] = dataclasses.field(default_factory=dict)


def derive_seed(base_seed: int, scenario: int, method: int, trial: int) -> int:
    """Seed of one work item, a pure function of its indices.

    Method slot ``0`` is the data set; methods use their index plus one.

    Examples
    --------
    >>> derive_seed(0, 0, 0, 0) == derive_seed(0, 0, 0, 0)
    True
    >>> derive_seed(0, 0, 0, 0) != derive_seed(0, 0, 0, 1)
    True
    """
    sequence = np.random.SeedSequence(
        entropy=base_seed, spawn_key=(scenario, method, trial)
    )
    return int(sequence.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def _failed_row(scenario: str, method: str, trial: int, seed: int) -> ResultRow:
    nan = math.nan
    return ResultRow(
        scenario=scenario,
        method=method,
        trial=trial,
        seed=seed,
        tpr=nan,
        fdr=nan,
        shd=nan,
        sid=nan,
        runtime_s=nan,
    )


def _fit_method(
    cfg: BenchConfig, method: MethodSpec, x: DataMatrix, seed: int
) -> Dag:
    update: dict[str, object] = {"seed": seed}
    if method.lambda1 is not None:
        update["lambda1"] = method.lambda1
    lcfg = cfg.learner.model_copy(update=update)
    if not method.rescore:
        return fit_backbone(method.backbone, x, None, lcfg).dag
    rcfg = cfg.rescore.model_copy(
        update={"tau": method.tau, "inner": method.inner, "seed": seed}
    )
    return fit_rescore(method.backbone, x, lcfg, rcfg).dag


def _evaluate(
    cfg: BenchConfig,
    scenario_id: str,
    name: str,
    trial: int,
    seed: int,
    truth: Dag,
    fit: Callable[[], Dag],
) -> ResultRow:
    # the timer covers the fit only
    start = time.perf_counter()
    try:
        est = fit()
        runtime = time.perf_counter() - start
        report = evaluate_graph(
            est,
            truth,
            with_sid=cfg.sid,
            runtime_s=runtime if cfg.record_runtime else 0.0,
        )
    except RescoreError as exc:
        logger.warning("%s / %s / trial %d failed: %s", scenario_id, name, trial, exc)
        return _failed_row(scenario_id, name, trial, seed)
    return ResultRow(
        scenario=scenario_id,
        method=name,
        trial=trial,
        seed=seed,
        tpr=report.tpr,
        fdr=report.fdr,
        shd=float(report.shd),
        sid=math.nan if report.sid is None else float(report.sid),
        runtime_s=report.runtime_s,
    )


def _run_unit(
    cfg: BenchConfig,
    index: int,
    scenario: Scenario,
    trial: int,
    done: set[RowKey],
) -> list[ResultRow]:
    scenario_id = scenario.scenario_id
    methods = scenario.expanded_methods()
    pending = [
        (slot, m)
        for slot, m in enumerate(methods, start=1)
        if (scenario_id, m.name, trial) not in done
    ]
    random_slot = len(methods) + 1
    want_random = (
        scenario.include_random and (scenario_id, RANDOM_METHOD, trial) not in done
    )
    if not pending and not want_random:
        return []

    data_seed = derive_seed(cfg.base_seed, index, 0, trial)
    try:
        truth, _, x = simulate_scenario(scenario, data_seed)
    except RescoreError as exc:
        logger.warning("%s trial %d: simulation failed: %s", scenario_id, trial, exc)
        names = [(slot, m.name) for slot, m in pending]
        if want_random:
            names.append((random_slot, RANDOM_METHOD))
        return [
            _failed_row(
                scenario_id, name, trial, derive_seed(cfg.base_seed, index, slot, trial)
            )
            for slot, name in names
        ]
    rows: list[ResultRow] = []
    for slot, method in pending:
        seed = derive_seed(cfg.base_seed, index, slot, trial)
        fit = functools.partial(_fit_method, cfg, method, x, seed)
        rows.append(_evaluate(cfg, scenario_id, method.name, trial, seed, truth, fit))
    if want_random:
        seed = derive_seed(cfg.base_seed, index, random_slot, trial)
        model = GraphModel(kind=GraphKind.ER, k=scenario.graph.k)
        fit = functools.partial(sample_dag, model, scenario.d, seed)
        rows.append(_evaluate(cfg, scenario_id, RANDOM_METHOD, trial, seed, truth, fit))
    logger.info(
        "%s trial %d: %d rows (%d failed)",
        scenario_id,
        trial,
        len(rows),
        sum(r.failed for r in rows),
    )
    return rows


def _mean_std(values: list[float]) -> tuple[float, float]:
    if not values:
        return math.nan, math.nan
    array = np.asarray(values)
    std = float(array.std(ddof=1)) if array.shape[0] > 1 else 0.0
    return float(array.mean()), std


def aggregate(rows: list[ResultRow]) -> list[AggregateRow]:
    """Mean and sample standard deviation per (scenario, method).

    Failed rows are excluded; ``count`` is the number of successful trials.
    A missing SID column (NaN) aggregates to NaN.
    """
    cells: dict[tuple[str, str], list[ResultRow]] = collections.defaultdict(list)
    for row in sorted(rows, key=lambda r: r.key):
        cells[(row.scenario, row.method)].append(row)
    out: list[AggregateRow] = []
    for (scenario, method), members in cells.items():
        ok = [r for r in members if not r.failed]
        stats: dict[str, float] = {}
        for column in ("tpr", "fdr", "shd", "sid", "runtime_s"):
            mean, std = _mean_std([getattr(r, column) for r in ok])
            stats[f"{column}_mean"] = mean
            stats[f"{column}_std"] = std
        out.append(
            AggregateRow(scenario=scenario, method=method, count=len(ok), **stats)
        )
    return out


def sweep_plots(
    cfg: BenchConfig, aggregates: list[AggregateRow]
) -> dict[str, list[PlotPoint]]:
    """SHD mean and deviation against the swept value, per base method."""
    lookup = {(a.scenario, a.method): a for a in aggregates}
    plots: dict[str, list[PlotPoint]] = {}
    for scenario in cfg.scenarios:
        sweep = scenario.sweep
        if sweep is None:
            continue
        field = "lambda1" if sweep.param is SweepParam.LAMBDA else "tau"
        points: list[PlotPoint] = []
        for method in scenario.methods:
            for value in sweep.values:
                swept = method.rescore or sweep.param is SweepParam.LAMBDA
                variant = (
                    method.model_copy(update={field: value, "label": None})
                    if swept
                    else method
                )
                cell = lookup.get((scenario.scenario_id, variant.name))
                if cell is not None:
                    points.append((method.name, value, cell.shd_mean, cell.shd_std))
        plots[f"plot_{scenario.scenario_id}_{sweep.param}.csv"] = points
    return plots


def run_benchmark(
    cfg: BenchConfig, out_dir: pathlib.Path | None = None
) -> ResultsTable:
    """Run every (scenario, method, trial) of the configuration.

    Parameters
    ----------
    cfg : BenchConfig
        Validated experiment matrix.
    out_dir : pathlib.Path | None
        Directory for ``results.csv``, ``aggregates.csv`` and plot data;
        falls back to ``cfg.out_dir``. Nothing is written if both are
        ``None``.

    Returns
    -------
    ResultsTable
        All rows (resumed and new), sorted by key, with aggregates.
    """
    target = out_dir or cfg.out_dir
    wanted: set[RowKey] = set()
    for scenario in cfg.scenarios:
        names = [m.name for m in scenario.expanded_methods()]
        if scenario.include_random:
            names.append(RANDOM_METHOD)
        trials = scenario.trials or cfg.trials
        wanted |= {(scenario.scenario_id, n, k) for n in names for k in range(trials)}

    previous = [] if target is None else read_results(target / RESULTS_FILE)
    kept = {r.key: r for r in previous if r.key in wanted}
    if kept:
        logger.info("resuming: %d of %d rows already done", len(kept), len(wanted))

    units = [
        (index, scenario, trial)
        for index, scenario in enumerate(cfg.scenarios)
        for trial in range(scenario.trials or cfg.trials)
    ]
    done = set(kept)
    rows = list(kept.values())
    with concurrent.futures.ThreadPoolExecutor(max_workers=cfg.max_workers) as pool:
        futures = [
            pool.submit(_run_unit, cfg, index, scenario, trial, done)
            for index, scenario, trial in units
        ]
        # each finished unit is persisted so an interrupted run can resume
        for future in concurrent.futures.as_completed(futures):
            finished = future.result()
            rows.extend(finished)
            if finished and target is not None:
                write_results(target / RESULTS_FILE, rows)
    rows.sort(key=lambda r: r.key)

    aggregates = aggregate(rows)
    plots = sweep_plots(cfg, aggregates)
    if target is not None:
        write_results(target / RESULTS_FILE, rows)
        write_aggregates(target / AGGREGATES_FILE, aggregates)
        for name, points in plots.items():
            write_plot_data(target / name, points)
    return ResultsTable(tuple(rows), tuple(aggregates), plots)
