"""Structure recovery metrics: TPR, FDR, SHD and SID.

Reversed edges count as false discoveries and are not credited as true
positives; a reversal costs one in the Hamming distance.
"""

from __future__ import annotations

import logging

import networkx as nx
import numpy as np

from dag_rescore.errors import InvalidParameterError
from dag_rescore.models import GraphConfusion, MetricsReport
from dag_rescore.structures import Dag

logger = logging.getLogger(__name__)


def _same_size(est: Dag, truth: Dag) -> None:
    if est.d != truth.d:
        msg = f"estimate has {est.d} nodes, truth has {truth.d}"
        raise InvalidParameterError(msg)


def confusion(est: Dag, truth: Dag) -> GraphConfusion:
    """Split the edges of both graphs into hits, reversals and errors.

    Examples
    --------
    >>> truth = Dag.from_edges(3, [(0, 1), (1, 2)])
    >>> est = Dag.from_edges(3, [(0, 1), (2, 1)])
    >>> c = confusion(est, truth)
    >>> c.true_positive, c.reversed, c.false_positive, c.missing
    (1, 1, 0, 0)
    """
    _same_size(est, truth)
    e, g = est.adjacency, truth.adjacency
    return GraphConfusion(
        true_positive=int(np.sum(e & g)),
        false_positive=int(np.sum(e & ~g & ~g.T)),
        reversed=int(np.sum(e & g.T)),
        missing=int(np.sum(g & ~e & ~e.T)),
        predicted_edges=est.n_edges,
        true_edges=truth.n_edges,
    )


def shd(est: Dag, truth: Dag) -> int:
    """Structural Hamming distance: missing + extra + reversed edges."""
    c = confusion(est, truth)
    return c.missing + c.false_positive + c.reversed


def _parent_adjustment_is_valid(
    graph: nx.DiGraph[int], i: int, j: int, z: set[int]
) -> bool:
    causal = nx.descendants(graph, i) & (nx.ancestors(graph, j) | {j})
    forbidden = {i}
    for node in causal:
        forbidden |= nx.descendants(graph, node) | {node}
    if z & forbidden:
        return False
    # proper back-door graph: drop the first edge of every causal path
    backdoor = graph.copy()
    backdoor.remove_edges_from([(i, c) for c in graph.successors(i) if c in causal])
    return bool(nx.is_d_separator(backdoor, {i}, {j}, z))


def sid(est: Dag, truth: Dag) -> int:
    """Structural intervention distance of ``est`` with respect to ``truth``.

    Counts ordered pairs ``(i, j)`` for which adjusting for the estimated
    parents of ``i`` gives a wrong ``p(x_j | do(x_i))`` in the true graph.
    If ``j`` is an estimated parent of ``i`` the estimate claims no effect,
    which is wrong exactly when ``j`` descends from ``i``. Otherwise the
    parent set must satisfy the adjustment criterion: it contains no
    descendant of a node on a causal path from ``i`` to ``j`` and it
    d-separates ``i`` and ``j`` once the first edge of every causal path
    is removed.

    Parameters
    ----------
    est : Dag
        Estimated graph.
    truth : Dag
        True graph.

    Returns
    -------
    int
        Value in ``[0, d (d - 1)]``.

    Raises
    ------
    InvalidParameterError
        On a dimension mismatch.

    Examples
    --------
    >>> chain = Dag.from_edges(3, [(0, 1), (1, 2)])
    >>> sid(Dag.empty(3), chain)
    3
    """
    _same_size(est, truth)
    graph = truth.to_networkx()
    wrong = 0
    for i in range(truth.d):
        parents = set(est.parents(i))
        descendants = nx.descendants(graph, i)
        for j in range(truth.d):
            if j == i:
                continue
            if j in parents:
                wrong += j in descendants
            elif not _parent_adjustment_is_valid(graph, i, j, parents):
                wrong += 1
    return wrong


def evaluate_graph(
    est: Dag,
    truth: Dag,
    *,
    with_sid: bool = False,
    runtime_s: float = 0.0,
) -> MetricsReport:
    """Compare an estimate with the true graph.

    Parameters
    ----------
    est : Dag
        Estimated graph.
    truth : Dag
        True graph.
    with_sid : bool
        Also compute the structural intervention distance.
    runtime_s : float
        Fit time to carry in the report.

    Returns
    -------
    MetricsReport
        ``tpr = TP / true_edges``, ``fdr = (reversed + extra) /
        predicted_edges`` (zero when nothing is predicted) and ``shd``.

    Raises
    ------
    InvalidParameterError
        On a dimension mismatch.
    """
    c = confusion(est, truth)
    report = MetricsReport(
        tpr=c.true_positive / max(c.true_edges, 1),
        fdr=(c.reversed + c.false_positive) / max(c.predicted_edges, 1),
        shd=c.missing + c.false_positive + c.reversed,
        sid=sid(est, truth) if with_sid else None,
        runtime_s=runtime_s,
    )
    logger.debug("metrics: %s", report.model_dump())
    return report
