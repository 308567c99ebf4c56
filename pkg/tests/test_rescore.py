"""Tests for dag_rescore.rescore: the reweighting graph and its nodes."""

from __future__ import annotations

import typing as t

import numpy as np
import pytest
from langgraph.graph import END, START

from dag_rescore.backbones import fit_backbone, get_backbone
from dag_rescore.errors import NumericError
from dag_rescore.learners import LearnerState, LinearNotears
from dag_rescore.models import InnerSolverKind, LearnerConfig, RescoreConfig
from dag_rescore.rescore import _make_router, build_rescore_graph, fit_rescore
from dag_rescore.state import RescoreState
from dag_rescore.structures import DataMatrix, SampleWeights
from dag_rescore.weights import inner_weights_exact


class _Exploding(LinearNotears):
    """Linear backbone whose first outer step fails."""

    def step(
        self,
        state: LearnerState,
        x: DataMatrix,
        w: SampleWeights,
        cfg: LearnerConfig,
    ) -> LearnerState:
        msg = "objective is not finite"
        raise NumericError(msg, diagnostics={"outer": state.outer})


def _learner_state(*, done: bool = False) -> LearnerState:
    return LearnerState(params=np.zeros(2), rho=1.0, alpha=0.0, done=done)


class RouteCase(t.NamedTuple):
    """Parametrized test case for the outer-step router."""

    test_id: str
    epoch: int
    done: bool
    expected: str


ROUTE_CASES: list[RouteCase] = [
    RouteCase(test_id="first_epoch_steps", epoch=1, done=False, expected="outer_fit"),
    RouteCase(
        test_id="reweights_after_k_reweight",
        epoch=2,
        done=False,
        expected="inner_reweight",
    ),
    RouteCase(test_id="budget_exhausted", epoch=5, done=False, expected="finalize"),
    RouteCase(test_id="backbone_converged", epoch=3, done=True, expected="finalize"),
]


@pytest.mark.parametrize(
    list(RouteCase._fields),
    ROUTE_CASES,
    ids=[c.test_id for c in ROUTE_CASES],
)
def test_router(test_id: str, epoch: int, done: bool, expected: str) -> None:
    """The router should stop, reweight or step again."""
    route = _make_router(k_outer=5, k_reweight=1)
    state: RescoreState = {"epoch": epoch, "learner": _learner_state(done=done)}
    assert route(state) == expected


def test_graph_has_expected_nodes(two_var_chain: DataMatrix) -> None:
    """Graph should contain all alternation nodes."""
    graph = build_rescore_graph(
        get_backbone("linear_notears"), two_var_chain, LearnerConfig(), RescoreConfig()
    )
    expected = {
        "initialize",
        "outer_fit",
        "inner_reweight",
        "finalize",
        START,
        END,
    }
    assert set(graph.get_graph().nodes) == expected


@pytest.mark.parametrize("backbone", ["linear_notears", "linear_nll"])
def test_tau_one_matches_bare_fit(
    backbone: str, two_var_chain: DataMatrix, fast_learner: LearnerConfig
) -> None:
    """With tau=1 reweighting is a no-op and the fit is bitwise identical."""
    bare = fit_backbone(backbone, two_var_chain, None, fast_learner)
    rcfg = RescoreConfig(tau=1.0)
    rescored = fit_rescore(backbone, two_var_chain, fast_learner, rcfg)
    np.testing.assert_array_equal(rescored.continuous, bare.continuous)
    assert rescored.dag.same_as(bare.dag)
    assert rescored.weights is not None
    assert rescored.weights.is_uniform()


def test_final_weights_maximize_last_losses(
    two_var_chain: DataMatrix, fast_learner: LearnerConfig
) -> None:
    """The exact solver's weights are optimal for the losses it last saw."""
    rcfg = RescoreConfig(tau=0.6, k_outer=4)
    graph = build_rescore_graph(
        get_backbone("linear_notears"), two_var_chain, fast_learner, rcfg
    )
    final = graph.invoke({"k_outer": 4, "status": "pending"})
    assert final["status"] == "fitted"
    if "losses" in final:
        expected = inner_weights_exact(final["losses"], 0.6)
        np.testing.assert_array_equal(final["weights"].w, expected.w)
    assert final["result"].weights is not None
    np.testing.assert_array_equal(final["result"].weights.w, final["weights"].w)
    assert final["epoch"] <= 4


def test_fit_rescore_attaches_feasible_weights(
    two_var_chain: DataMatrix, fast_learner: LearnerConfig
) -> None:
    """Result weights should live in C(tau) and recover the chain."""
    result = fit_rescore(
        "linear_notears", two_var_chain, fast_learner, RescoreConfig(tau=0.9)
    )
    assert result.weights is not None
    assert result.weights.tau == 0.9
    w = result.weights.w
    assert w.min() >= 0.9 / w.size - 1e-12
    assert w.max() <= 1.0 / (0.9 * w.size) + 1e-12
    assert result.dag.edges() == [(0, 1)]


def test_fit_rescore_parametric(
    two_var_chain: DataMatrix, fast_learner: LearnerConfig
) -> None:
    """The parametric solver should run through the same alternation."""
    rcfg = RescoreConfig(
        tau=0.8, inner=InnerSolverKind.PARAMETRIC, k_outer=3, k_inner=5
    )
    learner = get_backbone("linear_notears")
    result = fit_rescore(learner, two_var_chain, fast_learner, rcfg)
    assert result.weights is not None
    assert result.weights.tau == 0.8
    assert result.weights.n == two_var_chain.n


def test_backbone_failure_names_epoch(two_var_chain: DataMatrix) -> None:
    """A failing outer step should surface as NumericError with its epoch."""
    with pytest.raises(NumericError, match="outer epoch 0") as info:
        fit_rescore(_Exploding(), two_var_chain)
    assert info.value.epoch == 0
    assert info.value.diagnostics == {"outer": 0}


def test_unknown_backbone_raises_key_error(two_var_chain: DataMatrix) -> None:
    """An unregistered name should list the available backbones."""
    with pytest.raises(KeyError, match="Available"):
        fit_rescore("dagma", two_var_chain)
