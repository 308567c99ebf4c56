"""File I/O for graphs, data sets, weights and benchmark tables."""

from __future__ import annotations

import csv
import pathlib
import typing as t

import numpy as np
import numpy.typing as npt

from dag_rescore.errors import InvalidParameterError
from dag_rescore.models import (
    AGGREGATE_COLUMNS,
    RESULT_COLUMNS,
    AggregateRow,
    GraphDocument,
    ResultRow,
)
from dag_rescore.structures import (
    BoolArray,
    Dag,
    DataMatrix,
    FloatArray,
    IntArray,
    SampleWeights,
    WeightedAdjacency,
)

#: Header of sweep plot-data files.
PLOT_COLUMNS: t.Final = ("method", "x", "y", "sigma")
_FLOAT_FMT: t.Final = "%.17g"


def _prepare(path: pathlib.Path) -> pathlib.Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def _cell(value: object) -> str:
    # repr keeps floats exact and renders NaN as ``nan``
    return repr(float(value)) if isinstance(value, float) else str(value)


def _is_numeric(line: str) -> bool:
    try:
        for cell in line.split(","):
            float(cell)
    except ValueError:
        return False
    return True


def write_graph(
    path: pathlib.Path,
    dag: Dag,
    weights: WeightedAdjacency | None = None,
) -> None:
    """Write a graph as JSON ``{"d", "edges", "weights"}`` (0-indexed).

    Parameters
    ----------
    path : pathlib.Path
        Output file.
    dag : Dag
        Graph whose edges are written in row-major order.
    weights : WeightedAdjacency | None
        Coefficients written in parallel with the edges.
    """
    edges = dag.edges()
    document = GraphDocument(
        d=dag.d,
        edges=edges,
        weights=None
        if weights is None
        else [float(weights.matrix[s, t_]) for s, t_ in edges],
    )
    _prepare(path).write_text(document.model_dump_json(indent=2), encoding="utf-8")


def read_graph(path: pathlib.Path) -> tuple[Dag, WeightedAdjacency | None]:
    """Read a graph written by :func:`write_graph`.

    Raises
    ------
    pydantic.ValidationError
        If the document is malformed.
    InvalidParameterError
        If the edges form a cycle.
    """
    document = GraphDocument.model_validate_json(path.read_text(encoding="utf-8"))
    dag = Dag.from_edges(document.d, document.edges)
    if document.weights is None:
        return dag, None
    matrix = np.zeros((document.d, document.d))
    for (source, target), weight in zip(
        document.edges, document.weights, strict=True
    ):
        matrix[source, target] = weight
    return dag, WeightedAdjacency(matrix)


def write_matrix(
    path: pathlib.Path, matrix: npt.ArrayLike, *, header: bool = False
) -> None:
    """Write a real matrix as comma-separated rows."""
    values = np.atleast_2d(np.asarray(matrix, dtype=np.float64))
    names = ",".join(f"x{j}" for j in range(values.shape[1]))
    np.savetxt(
        _prepare(path),
        values,
        fmt=_FLOAT_FMT,
        delimiter=",",
        header=names if header else "",
        comments="",
    )


def read_matrix(path: pathlib.Path) -> FloatArray:
    """Read a comma-separated real matrix, skipping a non-numeric header."""
    with path.open(encoding="utf-8") as fh:
        first = fh.readline()
    skip = 0 if _is_numeric(first) else 1
    return np.loadtxt(path, delimiter=",", skiprows=skip, ndmin=2)


def write_data(path: pathlib.Path, x: DataMatrix, *, header: bool = False) -> None:
    """Write observations, ``n`` rows of ``d`` values."""
    write_matrix(path, x.values, header=header)


def read_data(
    path: pathlib.Path, labels: pathlib.Path | None = None
) -> DataMatrix:
    """Read observations and, optionally, their row labels."""
    values = read_matrix(path)
    if labels is None:
        return DataMatrix(values)
    groups, corrupted = read_labels(labels)
    return DataMatrix(values, groups=groups, corrupted=corrupted)


def write_labels(path: pathlib.Path, x: DataMatrix) -> None:
    """Write the ``group,corrupted`` sidecar of a data file."""
    groups = np.zeros(x.n, dtype=np.int64) if x.groups is None else x.groups
    corrupted = np.zeros(x.n, dtype=np.bool_) if x.corrupted is None else x.corrupted
    with _prepare(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("group", "corrupted"))
        flags = corrupted.astype(int).tolist()
        writer.writerows(zip(groups.tolist(), flags, strict=True))


def read_labels(path: pathlib.Path) -> tuple[IntArray, BoolArray]:
    """Read a labels sidecar written by :func:`write_labels`."""
    with path.open(encoding="utf-8", newline="") as fh:
        rows = list(csv.DictReader(fh))
    groups = np.array([int(r["group"]) for r in rows], dtype=np.int64)
    corrupted = np.array([r["corrupted"] == "1" for r in rows], dtype=np.bool_)
    return groups, corrupted


def write_weights(path: pathlib.Path, w: SampleWeights) -> None:
    """Write one weight per line."""
    np.savetxt(_prepare(path), w.w, fmt=_FLOAT_FMT)


def read_weights(path: pathlib.Path) -> FloatArray:
    """Read a weight file written by :func:`write_weights`."""
    return np.loadtxt(path, ndmin=1)


def write_results(path: pathlib.Path, rows: t.Iterable[ResultRow]) -> None:
    """Write result rows sorted by ``(scenario, method, trial)``."""
    ordered = sorted(rows, key=lambda r: r.key)
    with _prepare(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RESULT_COLUMNS)
        for row in ordered:
            record = row.model_dump()
            writer.writerow(_cell(record[c]) for c in RESULT_COLUMNS)


def read_results(path: pathlib.Path) -> list[ResultRow]:
    """Read a results file; a missing file reads as empty.

    Raises
    ------
    InvalidParameterError
        If the header differs from the expected columns.
    """
    if not path.is_file():
        return []
    with path.open(encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != RESULT_COLUMNS:
            msg = f"unexpected results header in {path}: {reader.fieldnames}"
            raise InvalidParameterError(msg)
        return [ResultRow.model_validate(record) for record in reader]


def write_aggregates(path: pathlib.Path, rows: t.Iterable[AggregateRow]) -> None:
    """Write aggregate rows in the given order."""
    with _prepare(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(AGGREGATE_COLUMNS)
        for row in rows:
            record = row.model_dump()
            writer.writerow(_cell(record[c]) for c in AGGREGATE_COLUMNS)


def read_aggregates(path: pathlib.Path) -> list[AggregateRow]:
    """Read an aggregates file written by :func:`write_aggregates`."""
    with path.open(encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        return [AggregateRow.model_validate(record) for record in reader]


def write_plot_data(
    path: pathlib.Path, points: t.Iterable[tuple[str, float, float, float]]
) -> None:
    """Write ``method,x,y,sigma`` rows for a sweep figure."""
    with _prepare(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(PLOT_COLUMNS)
        writer.writerows(tuple(_cell(v) for v in point) for point in points)
