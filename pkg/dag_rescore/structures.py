"""Array-carrying domain types: graphs, data, weights and fit results.

All types are frozen after construction: arrays are copied and marked
read-only, so instances can be shared across threads.
"""

from __future__ import annotations

import collections
import dataclasses
import math
import typing as t

import networkx as nx
import numpy as np
import numpy.typing as npt

from dag_rescore.errors import InvalidParameterError

if t.TYPE_CHECKING:
    from dag_rescore.mlp import MlpModel

FloatArray: t.TypeAlias = npt.NDArray[np.float64]
IntArray: t.TypeAlias = npt.NDArray[np.int64]
BoolArray: t.TypeAlias = npt.NDArray[np.bool_]
#: Anything accepted as a reproducible random seed.
SeedLike: t.TypeAlias = int | np.random.SeedSequence

#: Absolute slack on the box constraints of :class:`SampleWeights`.
WEIGHT_BOX_TOL: t.Final = 1e-12
#: Absolute slack on the simplex constraint of :class:`SampleWeights`.
WEIGHT_SUM_TOL: t.Final = 1e-9


def _frozen(array: npt.ArrayLike, dtype: type[np.generic]) -> t.Any:
    out = np.array(array, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


def _square(matrix: npt.NDArray[t.Any], name: str) -> int:
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        msg = f"{name} must be a square matrix, got shape {matrix.shape}"
        raise InvalidParameterError(msg)
    return int(matrix.shape[0])


def topological_order(adjacency: npt.ArrayLike) -> list[int] | None:
    """Return a topological order of a directed graph, or ``None`` if cyclic.

    Uses iterated source removal: entry ``[j, i] != 0`` is the edge
    ``j -> i``.

    Parameters
    ----------
    adjacency : ArrayLike
        Square matrix; only its support matters.

    Returns
    -------
    list[int] | None
        Node order in which every edge points forward.

    Raises
    ------
    InvalidParameterError
        If the matrix is not square.

    Examples
    --------
    >>> topological_order([[0, 1], [0, 0]])
    [0, 1]
    >>> topological_order([[0, 1], [1, 0]]) is None
    True
    """
    support = np.asarray(adjacency) != 0
    d = _square(support, "adjacency")
    in_degree = support.sum(axis=0).astype(np.int64)
    # self-loops never become sources
    ready = collections.deque(i for i in range(d) if in_degree[i] == 0)
    order: list[int] = []
    while ready:
        node = ready.popleft()
        order.append(node)
        for child in np.flatnonzero(support[node]):
            in_degree[child] -= 1
            if in_degree[child] == 0:
                ready.append(int(child))
    return order if len(order) == d else None


@dataclasses.dataclass(frozen=True, eq=False)
class Dag:
    """Binary adjacency matrix of a directed acyclic graph.

    ``adjacency[j, i]`` is true when ``X_j -> X_i``.
    """

    adjacency: BoolArray

    def __post_init__(self) -> None:
        adjacency = _frozen(np.asarray(self.adjacency) != 0, np.bool_)
        d = _square(adjacency, "adjacency")
        if d < 1:
            msg = "a DAG needs at least one node"
            raise InvalidParameterError(msg)
        if np.any(np.diag(adjacency)):
            msg = "DAG adjacency must have a zero diagonal"
            raise InvalidParameterError(msg)
        if topological_order(adjacency) is None:
            msg = "adjacency contains a directed cycle"
            raise InvalidParameterError(msg)
        object.__setattr__(self, "adjacency", adjacency)

    @classmethod
    def empty(cls, d: int) -> Dag:
        """Return the edgeless graph on ``d`` nodes."""
        return cls(np.zeros((d, d), dtype=np.bool_))

    @classmethod
    def from_edges(cls, d: int, edges: t.Iterable[tuple[int, int]]) -> Dag:
        """Build a graph from ``(source, target)`` pairs."""
        adjacency = np.zeros((d, d), dtype=np.bool_)
        for source, target in edges:
            adjacency[source, target] = True
        return cls(adjacency)

    @property
    def d(self) -> int:
        """Number of nodes."""
        return int(self.adjacency.shape[0])

    @property
    def n_edges(self) -> int:
        """Number of edges."""
        return int(self.adjacency.sum())

    def edges(self) -> list[tuple[int, int]]:
        """Return ``(source, target)`` pairs in row-major order."""
        sources, targets = np.nonzero(self.adjacency)
        return [(int(s), int(t_)) for s, t_ in zip(sources, targets, strict=True)]

    def parents(self, node: int) -> list[int]:
        """Return the parents of ``node`` in ascending order."""
        return [int(p) for p in np.flatnonzero(self.adjacency[:, node])]

    def order(self) -> list[int]:
        """Return a topological order."""
        order = topological_order(self.adjacency)
        assert order is not None  # checked at construction
        return order

    def to_networkx(self) -> nx.DiGraph[int]:
        """Return the graph as a :class:`networkx.DiGraph`."""
        graph: nx.DiGraph[int] = nx.DiGraph()
        graph.add_nodes_from(range(self.d))
        graph.add_edges_from(self.edges())
        return graph

    def same_as(self, other: Dag) -> bool:
        """Whether both graphs have identical edge sets."""
        return bool(np.array_equal(self.adjacency, other.adjacency))


@dataclasses.dataclass(frozen=True, eq=False)
class WeightedAdjacency:
    """Real coefficient matrix ``B`` of a linear SEM.

    ``matrix[j, i]`` is the coefficient of ``X_j`` in the equation of ``X_i``.
    """

    matrix: FloatArray

    def __post_init__(self) -> None:
        matrix = _frozen(self.matrix, np.float64)
        _square(matrix, "coefficient matrix")
        if not np.all(np.isfinite(matrix)):
            msg = "coefficient matrix must be finite"
            raise InvalidParameterError(msg)
        if np.any(np.diag(matrix) != 0):
            msg = "coefficient matrix must have a zero diagonal"
            raise InvalidParameterError(msg)
        object.__setattr__(self, "matrix", matrix)

    @property
    def d(self) -> int:
        """Number of variables."""
        return int(self.matrix.shape[0])

    def support(self) -> Dag:
        """Return the support as a :class:`Dag` (raises if cyclic)."""
        return Dag(self.matrix != 0)

    def is_dag(self) -> bool:
        """Whether the support is acyclic."""
        return topological_order(self.matrix) is not None


@dataclasses.dataclass(frozen=True, eq=False)
class DataMatrix:
    """Observations ``X`` (rows are samples) with optional row labels.

    Parameters
    ----------
    values : FloatArray
        ``n x d`` finite matrix.
    groups : IntArray | None
        Group index per row (heterogeneous noise).
    corrupted : BoolArray | None
        Whether each row was drawn from an unrelated model.
    """

    values: FloatArray
    groups: IntArray | None = None
    corrupted: BoolArray | None = None

    def __post_init__(self) -> None:
        values = _frozen(self.values, np.float64)
        if values.ndim != 2 or values.shape[0] < 1 or values.shape[1] < 1:
            msg = f"data must be a non-empty n x d matrix, got shape {values.shape}"
            raise InvalidParameterError(msg)
        if not np.all(np.isfinite(values)):
            msg = "data must be finite"
            raise InvalidParameterError(msg)
        object.__setattr__(self, "values", values)
        n = values.shape[0]
        if self.groups is not None:
            groups = _frozen(self.groups, np.int64)
            if groups.shape != (n,):
                msg = f"group labels must have length {n}"
                raise InvalidParameterError(msg)
            object.__setattr__(self, "groups", groups)
        if self.corrupted is not None:
            corrupted = _frozen(self.corrupted, np.bool_)
            if corrupted.shape != (n,):
                msg = f"corruption flags must have length {n}"
                raise InvalidParameterError(msg)
            object.__setattr__(self, "corrupted", corrupted)

    @property
    def n(self) -> int:
        """Number of samples."""
        return int(self.values.shape[0])

    @property
    def d(self) -> int:
        """Number of variables."""
        return int(self.values.shape[1])


@dataclasses.dataclass(frozen=True, eq=False)
class SampleWeights:
    """Sample weights in ``C(tau)``: box ``[tau/n, 1/(tau n)]`` and unit sum."""

    w: FloatArray
    tau: float = 1.0

    def __post_init__(self) -> None:
        w = _frozen(self.w, np.float64)
        if w.ndim != 1 or w.shape[0] < 1:
            msg = "weights must be a non-empty vector"
            raise InvalidParameterError(msg)
        if not 0.0 < self.tau <= 1.0:
            msg = f"tau must lie in (0, 1], got {self.tau}"
            raise InvalidParameterError(msg)
        n = w.shape[0]
        low, high = self.tau / n, 1.0 / (self.tau * n)
        if np.any(w < low - WEIGHT_BOX_TOL) or np.any(w > high + WEIGHT_BOX_TOL):
            msg = f"weights leave the box [{low:.6g}, {high:.6g}]"
            raise InvalidParameterError(msg)
        total = math.fsum(w)
        if abs(total - 1.0) > WEIGHT_SUM_TOL:
            msg = f"weights must sum to 1, got {total!r}"
            raise InvalidParameterError(msg)
        object.__setattr__(self, "w", w)

    @classmethod
    def uniform(cls, n: int) -> SampleWeights:
        """Return the uniform weights ``1/n``."""
        return cls(np.full(n, 1.0 / n), tau=1.0)

    @property
    def n(self) -> int:
        """Number of samples."""
        return int(self.w.shape[0])

    def is_uniform(self) -> bool:
        """Whether every weight is exactly equal."""
        return bool(np.all(self.w == self.w[0]))


@dataclasses.dataclass(frozen=True, eq=False)
class FitDiagnostics:
    """Optimizer state at the returned solution.

    Parameters
    ----------
    h : float
        Acyclicity value of the continuous solution.
    outer_iterations : int
        Outer (dual ascent or warm-start) iterations performed.
    rho : float
        Final quadratic penalty coefficient.
    alpha : float
        Final Lagrange multiplier.
    converged : bool
        Whether ``h`` reached the configured tolerance (always true for
        unconstrained backbones).
    objective_trace : tuple[float, ...]
        Objective value after every outer iteration.
    """

    h: float
    outer_iterations: int
    rho: float
    alpha: float
    converged: bool
    objective_trace: tuple[float, ...] = ()

    def as_dict(self) -> dict[str, t.Any]:
        """Return the diagnostics as a plain mapping."""
        return dataclasses.asdict(self)


@dataclasses.dataclass(frozen=True, eq=False)
class FitResult:
    """Output of a DAG learner.

    Parameters
    ----------
    continuous : FloatArray
        Coefficient matrix (linear) or first-layer norm matrix (MLP).
    dag : Dag
        Thresholded, acyclic estimate.
    losses : FloatArray
        Per-sample losses at the returned parameters.
    diagnostics : FitDiagnostics
        Optimizer state.
    weights : SampleWeights | None
        Final sample weights of a reweighted fit.
    model : MlpModel | None
        Fitted networks of the MLP backbone.
    """

    continuous: FloatArray
    dag: Dag
    losses: FloatArray
    diagnostics: FitDiagnostics
    weights: SampleWeights | None = None
    model: MlpModel | None = None

    def __post_init__(self) -> None:
        continuous = _frozen(self.continuous, np.float64)
        if _square(continuous, "continuous solution") != self.dag.d:
            msg = "continuous solution and graph disagree on d"
            raise InvalidParameterError(msg)
        object.__setattr__(self, "continuous", continuous)
        object.__setattr__(self, "losses", _frozen(self.losses, np.float64))

    def with_weights(self, weights: SampleWeights) -> FitResult:
        """Return a copy carrying the final sample weights."""
        return dataclasses.replace(self, weights=weights)
