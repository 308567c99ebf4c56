"""Graph node functions for the reweighting alternation.

Each node takes :class:`~dag_rescore.state.RescoreState` and returns a
partial state update dict. The data, backbone and configuration are
bound by the ``make_*`` factories.
"""

from __future__ import annotations

import logging
import typing as t
from collections.abc import Callable

from dag_rescore.errors import NumericError, RescoreError
from dag_rescore.learners import Backbone
from dag_rescore.models import (
    BackboneName,
    InnerSolverKind,
    LearnerConfig,
    RescoreConfig,
)
from dag_rescore.state import RescoreState
from dag_rescore.structures import DataMatrix, SampleWeights
from dag_rescore.weights import (
    ReweightModel,
    inner_weights_exact,
    inner_weights_parametric,
)

logger = logging.getLogger(__name__)

Node: t.TypeAlias = Callable[[RescoreState], dict[str, t.Any]]


def make_init_node(backbone: Backbone, x: DataMatrix, lcfg: LearnerConfig) -> Node:
    """Create the ``initialize`` node: backbone start, uniform weights."""

    def initialize(state: RescoreState) -> dict[str, t.Any]:
        """Initialize the backbone and the weights."""
        return {
            "learner": backbone.init_state(x, lcfg),
            "weights": SampleWeights.uniform(x.n),
            "reweighter": None,
            "epoch": 0,
            "status": "pending",
        }

    return initialize


def make_outer_node(backbone: Backbone, x: DataMatrix, lcfg: LearnerConfig) -> Node:
    """Create the ``outer_fit`` node: one backbone step at fixed weights.

    Backbone failures are re-raised as :class:`NumericError` tagged with
    the outer epoch.
    """

    def outer_fit(state: RescoreState) -> dict[str, t.Any]:
        """Minimize the reweighted score for one outer iteration."""
        epoch = state["epoch"]
        try:
            learner = backbone.step(state["learner"], x, state["weights"], lcfg)
        except RescoreError as exc:
            diagnostics = getattr(exc, "diagnostics", {})
            msg = f"outer epoch {epoch}: {exc}"
            raise NumericError(msg, diagnostics=diagnostics, epoch=epoch) from exc
        logger.debug(
            "outer epoch %d: h=%.3e rho=%.1e", epoch, learner.h, learner.rho
        )
        return {"learner": learner, "epoch": epoch + 1, "status": "fitting"}

    return outer_fit


def make_inner_node(
    backbone: Backbone,
    x: DataMatrix,
    lcfg: LearnerConfig,
    rcfg: RescoreConfig,
) -> Node:
    """Create the ``inner_reweight`` node: maximize the score over weights.

    The parametric scorer defaults to one hidden layer for linear backbones
    and two for the MLP backbone.
    """
    scorer_hidden = rcfg.hidden_sizes or (
        [10, 10] if backbone.name is BackboneName.MLP_NOTEARS else [10]
    )

    def inner_reweight(state: RescoreState) -> dict[str, t.Any]:
        """Recompute per-sample losses and update the weights."""
        losses = backbone.per_sample_losses(state["learner"], x, lcfg)
        updates: dict[str, t.Any] = {"losses": losses, "status": "reweighted"}
        if rcfg.inner is InnerSolverKind.EXACT:
            updates["weights"] = inner_weights_exact(losses, rcfg.tau)
        else:
            reweighter = state.get("reweighter") or ReweightModel.initialize(
                x.d,
                scorer_hidden,
                feed_losses=rcfg.feed_losses,
                lr=rcfg.lr,
                seed=rcfg.seed,
            )
            weights, reweighter = inner_weights_parametric(x, losses, rcfg, reweighter)
            updates["weights"] = weights
            updates["reweighter"] = reweighter
        logger.debug(
            "epoch %d reweighted: weighted loss %.6g (uniform %.6g)",
            state["epoch"],
            float(updates["weights"].w @ losses),
            float(losses.mean()),
        )
        return updates

    return inner_reweight


def make_finalize_node(
    backbone: Backbone, x: DataMatrix, lcfg: LearnerConfig
) -> Node:
    """Create the ``finalize`` node: threshold and attach the weights."""

    def finalize(state: RescoreState) -> dict[str, t.Any]:
        """Build the fit result at the last backbone state."""
        result = backbone.finish(state["learner"], x, lcfg)
        return {
            "result": result.with_weights(state["weights"]),
            "status": "fitted",
        }

    return finalize
