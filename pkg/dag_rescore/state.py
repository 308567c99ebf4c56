"""LangGraph state definition for the reweighting alternation."""

from __future__ import annotations

import typing as t

from dag_rescore.learners import LearnerState
from dag_rescore.structures import FitResult, FloatArray, SampleWeights
from dag_rescore.weights import ReweightModel

#: Terminal and intermediate values of :attr:`RescoreState.status`.
RescoreStatus = t.Literal["pending", "fitting", "reweighted", "fitted"]


class RescoreState(t.TypedDict, total=False):
    """State flowing through the reweighting graph.

    Attributes
    ----------
    learner : LearnerState
        Backbone parameters and dual variables.
    weights : SampleWeights
        Current sample weights (uniform before the first reweighting).
    reweighter : ReweightModel | None
        Scorer of the parametric inner solver, warm-started across epochs.
    losses : FloatArray
        Per-sample losses used by the last reweighting.
    epoch : int
        Completed outer epochs.
    k_outer : int
        Outer epoch budget.
    result : FitResult
        Final fit, set by the ``finalize`` node.
    status : RescoreStatus
        Pipeline status.
    """

    learner: LearnerState
    weights: SampleWeights
    reweighter: ReweightModel | None
    losses: FloatArray
    epoch: int
    k_outer: int
    result: FitResult
    status: RescoreStatus
