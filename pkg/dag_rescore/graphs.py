"""Random DAG generation and basic graph utilities."""

from __future__ import annotations

import logging

import numpy as np
import numpy.typing as npt

from dag_rescore.errors import InvalidParameterError
from dag_rescore.models import GraphKind, GraphModel
from dag_rescore.structures import BoolArray, Dag, SeedLike, topological_order

logger = logging.getLogger(__name__)


def is_acyclic(adjacency: npt.ArrayLike) -> bool:
    """Decide whether a directed graph has no cycle.

    Parameters
    ----------
    adjacency : ArrayLike
        Square matrix; entry ``[j, i] != 0`` is the edge ``j -> i``. The
        diagonal need not be zero (a self-loop is a cycle).

    Returns
    -------
    bool
        ``True`` iff iterated source removal empties the graph.

    Raises
    ------
    InvalidParameterError
        If the input is not square.

    Examples
    --------
    >>> is_acyclic([[0, 1, 0], [0, 0, 1], [0, 0, 0]])
    True
    >>> is_acyclic([[0, 1], [1, 0]])
    False
    """
    return topological_order(adjacency) is not None


def _sample_er(k: int, d: int, rng: np.random.Generator) -> BoolArray:
    # orient every kept pair along a random permutation
    p = min(1.0, 2.0 * k / (d - 1))
    upper = np.triu(rng.random((d, d)) < p, k=1)
    perm = rng.permutation(d)
    adjacency = np.zeros((d, d), dtype=np.bool_)
    adjacency[np.ix_(perm, perm)] = upper
    return adjacency


def _sample_sf(k: int, d: int, rng: np.random.Generator) -> BoolArray:
    adjacency = np.zeros((d, d), dtype=np.bool_)
    # seed clique on the first k nodes, oriented low -> high
    adjacency[:k, :k] = np.triu(np.ones((k, k), dtype=np.bool_), k=1)
    degree = adjacency.sum(axis=0) + adjacency.sum(axis=1)
    for new in range(k, d):
        score = degree[:new] + 1.0
        targets = rng.choice(new, size=k, replace=False, p=score / score.sum())
        adjacency[targets, new] = True
        degree[targets] += 1
        degree[new] += k
    perm = rng.permutation(d)
    relabeled = np.zeros_like(adjacency)
    relabeled[np.ix_(perm, perm)] = adjacency
    return relabeled


def sample_dag(model: GraphModel, d: int, seed: SeedLike) -> Dag:
    """Draw a random DAG.

    ER graphs include each pair of nodes with probability ``2k/(d-1)``
    and orient it along a uniformly random node permutation, so the
    expected edge count is ``k d``. SF graphs grow by preferential
    attachment (degree plus one) from a ``k``-clique; every new node sends
    ``k`` edges from existing nodes to itself before a final random
    relabeling.

    Parameters
    ----------
    model : GraphModel
        Graph family and expected-edges multiplier.
    d : int
        Number of nodes.
    seed : SeedLike
        Random seed; the result is a pure function of the arguments.

    Returns
    -------
    Dag
        The sampled graph.

    Raises
    ------
    InvalidParameterError
        If ``d < 2`` or, for SF graphs, ``k >= d``.
    """
    if d < 2:
        msg = f"d must be at least 2, got {d}"
        raise InvalidParameterError(msg)
    rng = np.random.default_rng(seed)
    if model.kind is GraphKind.ER:
        adjacency = _sample_er(model.k, d, rng)
    else:
        if model.k >= d:
            msg = f"scale-free graphs need k < d, got k={model.k}, d={d}"
            raise InvalidParameterError(msg)
        adjacency = _sample_sf(model.k, d, rng)
    dag = Dag(adjacency)
    logger.debug(
        "sampled %s%d graph: d=%d edges=%d", model.kind, model.k, d, dag.n_edges
    )
    return dag

