"""Bilevel reweighting around a differentiable DAG learner.

The alternation is a LangGraph state graph::

    initialize -> outer_fit -> (inner_reweight -> outer_fit)* -> finalize

Each ``outer_fit`` runs one outer iteration of the backbone at the
current sample weights; ``inner_reweight`` then moves the weights to the
maximizer of the reweighted score over ``C(tau)``.
"""

from __future__ import annotations

import logging
import typing as t

from langgraph.graph import END, START, StateGraph
from langgraph.graph.state import CompiledStateGraph

from dag_rescore.backbones import get_backbone
from dag_rescore.learners import Backbone
from dag_rescore.models import LearnerConfig, RescoreConfig
from dag_rescore.nodes import (
    make_finalize_node,
    make_init_node,
    make_inner_node,
    make_outer_node,
)
from dag_rescore.state import RescoreState
from dag_rescore.structures import DataMatrix, FitResult

logger = logging.getLogger(__name__)

_OuterRoute = t.Literal["inner_reweight", "outer_fit", "finalize"]


def _make_router(
    k_outer: int, k_reweight: int
) -> t.Callable[[RescoreState], _OuterRoute]:
    def route(state: RescoreState) -> _OuterRoute:
        """Route after an outer step: stop, reweight, or step again."""
        epoch = state["epoch"]
        if state["learner"].done or epoch >= k_outer:
            return "finalize"
        # the epoch just completed is ``epoch - 1``
        if epoch - 1 >= k_reweight:
            return "inner_reweight"
        return "outer_fit"

    return route


def outer_budget(
    backbone: Backbone, lcfg: LearnerConfig, rcfg: RescoreConfig
) -> int:
    """Outer epochs: ``rcfg.k_outer`` or the backbone's own iteration count."""
    return rcfg.k_outer if rcfg.k_outer is not None else backbone.max_epochs(lcfg)


def build_rescore_graph(
    backbone: Backbone,
    x: DataMatrix,
    lcfg: LearnerConfig,
    rcfg: RescoreConfig,
) -> CompiledStateGraph:  # type: ignore[type-arg]
    """Compile the reweighting alternation for one data set.

    Parameters
    ----------
    backbone : Backbone
        DAG learner to wrap.
    x : DataMatrix
        Observations.
    lcfg : LearnerConfig
        Backbone hyperparameters.
    rcfg : RescoreConfig
        Reweighting hyperparameters.

    Returns
    -------
    CompiledStateGraph
        Compiled LangGraph ready for invocation.
    """
    route = _make_router(outer_budget(backbone, lcfg, rcfg), rcfg.k_reweight)

    initialize = make_init_node(backbone, x, lcfg)
    outer_fit = make_outer_node(backbone, x, lcfg)
    inner_reweight = make_inner_node(backbone, x, lcfg, rcfg)
    finalize = make_finalize_node(backbone, x, lcfg)

    graph = StateGraph(RescoreState)
    graph.add_node("initialize", initialize)  # type: ignore[arg-type]
    graph.add_node("outer_fit", outer_fit)  # type: ignore[arg-type]
    graph.add_node("inner_reweight", inner_reweight)  # type: ignore[arg-type]
    graph.add_node("finalize", finalize)  # type: ignore[arg-type]

    graph.add_edge(START, "initialize")
    graph.add_edge("initialize", "outer_fit")
    graph.add_conditional_edges("outer_fit", route)
    graph.add_edge("inner_reweight", "outer_fit")
    graph.add_edge("finalize", END)

    return graph.compile()


def fit_rescore(
    backbone: str | Backbone,
    x: DataMatrix,
    lcfg: LearnerConfig | None = None,
    rcfg: RescoreConfig | None = None,
) -> FitResult:
    """Fit a backbone under adaptive sample reweighting.

    Weights start uniform. Every outer epoch runs one backbone outer
    iteration with the current weights; from epoch ``k_reweight`` on, the
    per-sample losses at the current model are recomputed and the weights
    are updated by the configured inner solver.

    Parameters
    ----------
    backbone : str | Backbone
        Registered backbone name or instance.
    x : DataMatrix
        Observations.
    lcfg : LearnerConfig | None
        Backbone hyperparameters; defaults if ``None``.
    rcfg : RescoreConfig | None
        Reweighting hyperparameters; defaults if ``None``.

    Returns
    -------
    FitResult
        The backbone's result with the final weights attached.

    Raises
    ------
    KeyError
        If the backbone name is not registered.
    NumericError
        If the backbone fails; ``epoch`` names the outer epoch.
    """
    learner = get_backbone(backbone) if isinstance(backbone, str) else backbone
    lcfg = lcfg or LearnerConfig()
    rcfg = rcfg or RescoreConfig()
    k_outer = outer_budget(learner, lcfg, rcfg)
    graph = build_rescore_graph(learner, x, lcfg, rcfg)
    final = graph.invoke(
        {"k_outer": k_outer, "status": "pending"},
        config={"recursion_limit": 2 * k_outer + 10},
    )
    result: FitResult = final["result"]
    logger.info(
        "%s+rescore(tau=%g, %s): %d epochs, %d edges",
        learner.name,
        rcfg.tau,
        rcfg.inner,
        final["epoch"],
        result.dag.n_edges,
    )
    return result
