"""Tests for dag_rescore.learners and the backbone registry."""

from __future__ import annotations

import logging
import typing as t

import numpy as np
import pytest

from dag_rescore.backbones import fit_backbone, get_backbone, list_backbones
from dag_rescore.errors import InvalidParameterError
from dag_rescore.graphs import sample_dag
from dag_rescore.learners import (
    LinearNotears,
    fit_linear_nll,
    fit_linear_notears,
    linear_objective,
    nll_objective,
    split_to_matrix,
    threshold_to_dag,
    weighted_ols,
)
from dag_rescore.models import (
    AcyclicityKind,
    GraphKind,
    GraphModel,
    LearnerConfig,
    NllVariance,
    NoiseSpec,
)
from dag_rescore.simulation import assign_linear_weights, simulate_linear_sem
from dag_rescore.structures import DataMatrix, SampleWeights
from dag_rescore.weights import project_capped_simplex


def _random_weights(n: int, tau: float, seed: int) -> SampleWeights:
    v = np.random.default_rng(seed).uniform(0.0, 2.0, size=n) / n
    return SampleWeights(project_capped_simplex(v, tau), tau=tau)


def _gradient_error(
    fn: t.Callable[[np.ndarray], tuple[float, np.ndarray]],
    params: np.ndarray,
    step: float = 1e-6,
) -> float:
    _, analytic = fn(params)
    numeric = np.zeros_like(params)
    for i in range(params.size):
        up, down = params.copy(), params.copy()
        up[i] += step
        down[i] -= step
        numeric[i] = (fn(up)[0] - fn(down)[0]) / (2 * step)
    scale = np.maximum(np.abs(numeric), 1e-2)
    return float(np.max(np.abs(analytic - numeric) / scale))


class ThresholdCase(t.NamedTuple):
    """Parametrized test case for threshold_to_dag."""

    test_id: str
    matrix: list[list[float]]
    omega: float
    edges: list[tuple[int, int]]


THRESHOLD_CASES: list[ThresholdCase] = [
    ThresholdCase(
        test_id="keeps_large_entries",
        matrix=[[0.0, 0.5, 0.0], [0.0, 0.0, -0.4], [0.1, 0.0, 0.0]],
        omega=0.3,
        edges=[(0, 1), (1, 2)],
    ),
    ThresholdCase(
        test_id="all_small_is_empty",
        matrix=[[0.0, 0.2], [-0.3, 0.0]],
        omega=0.3,
        edges=[],
    ),
    ThresholdCase(
        test_id="two_cycle_drops_weaker_edge",
        matrix=[[0.0, 0.9], [0.4, 0.0]],
        omega=0.3,
        edges=[(0, 1)],
    ),
    ThresholdCase(
        test_id="three_cycle_drops_weakest_edge",
        matrix=[[0.0, 0.8, 0.0], [0.0, 0.0, 0.7], [-0.5, 0.0, 0.0]],
        omega=0.3,
        edges=[(0, 1), (1, 2)],
    ),
    ThresholdCase(
        test_id="diagonal_ignored",
        matrix=[[5.0, 0.0], [1.0, 0.0]],
        omega=0.0,
        edges=[(1, 0)],
    ),
]


@pytest.mark.parametrize(
    list(ThresholdCase._fields),
    THRESHOLD_CASES,
    ids=[c.test_id for c in THRESHOLD_CASES],
)
def test_threshold_to_dag(
    test_id: str,
    matrix: list[list[float]],
    omega: float,
    edges: list[tuple[int, int]],
) -> None:
    """threshold_to_dag should keep large entries and break cycles."""
    assert threshold_to_dag(matrix, omega).edges() == edges


def test_threshold_to_dag_rejects_negative_threshold() -> None:
    """The threshold must be non-negative."""
    with pytest.raises(InvalidParameterError, match="non-negative"):
        threshold_to_dag(np.zeros((2, 2)), -0.1)


@pytest.mark.parametrize("kind", list(AcyclicityKind))
@pytest.mark.parametrize("uniform", [True, False], ids=["uniform", "reweighted"])
def test_linear_objective_gradient(
    small_data: DataMatrix, kind: AcyclicityKind, uniform: bool
) -> None:
    """The least-squares Lagrangian gradient matches central differences."""
    cfg = LearnerConfig(lambda1=0.05, acyclicity=kind)
    w = SampleWeights.uniform(16) if uniform else _random_weights(16, 0.5, 0)
    rng = np.random.default_rng(3)
    for _ in range(5):
        params = rng.uniform(0.0, 0.5, size=18)
        error = _gradient_error(
            lambda p: linear_objective(p, small_data, w, cfg, rho=2.0, alpha=0.5),
            params,
        )
        assert error < 1e-5


@pytest.mark.parametrize("variance", list(NllVariance))
def test_nll_objective_gradient(small_data: DataMatrix, variance: NllVariance) -> None:
    """The likelihood score gradient matches central differences."""
    cfg = LearnerConfig(lambda1=0.02, nll_variance=variance, sigma=[1.0, 0.5, 2.0])
    w = _random_weights(16, 0.7, 1)
    rng = np.random.default_rng(4)
    for _ in range(5):
        params = rng.uniform(0.0, 0.2, size=18)
        error = _gradient_error(lambda p: nll_objective(p, small_data, w, cfg), params)
        assert error < 1e-5


def test_nll_objective_is_infinite_outside_det_region(small_data: DataMatrix) -> None:
    """det(I - B) <= 0 makes the likelihood score infinite."""
    params = np.zeros(18)
    # B = [[0, 2], [2, 0]] on the first two variables: det(I - B) = -3
    params[1] = params[3] = 2.0
    uniform = SampleWeights.uniform(16)
    value, _ = nll_objective(params, small_data, uniform, LearnerConfig())
    assert value == np.inf


def _projected_gradient(params: np.ndarray, grad: np.ndarray, d: int) -> np.ndarray:
    """Gradient restricted to the directions the split bounds allow."""
    pinned = np.tile(np.eye(d, dtype=bool).ravel(), 2)
    at_floor = params <= 1e-12
    projected = np.where(at_floor, np.minimum(grad, 0.0), grad)
    return np.where(pinned, 0.0, projected)


@pytest.mark.parametrize("c", [0.25, 4.0])
def test_subproblem_minimizer_is_scale_equivariant(
    small_data: DataMatrix, c: float
) -> None:
    """Scaling the weighted loss by c and lambda, alpha, rho by 1/c keeps the argmin.

    Under least squares, multiplying every weight by c is the same as
    multiplying every row by sqrt(c), which keeps the weights normalized.
    """
    w = _random_weights(16, 0.5, 1)
    cfg = LearnerConfig(lambda1=0.05)
    rho, alpha = 2.0, 0.5
    backbone = LinearNotears()
    start = np.zeros(18)
    heavier = DataMatrix(np.sqrt(c) * small_data.values)
    solved = backbone.solve_subproblem(start, heavier, w, cfg, rho, alpha)

    lighter = cfg.model_copy(update={"lambda1": cfg.lambda1 / c})
    _, grad = linear_objective(solved, small_data, w, lighter, rho / c, alpha / c)
    assert np.max(np.abs(_projected_gradient(solved, grad, 3))) < 1e-3

    reference = backbone.solve_subproblem(
        start, small_data, w, lighter, rho / c, alpha / c
    )
    np.testing.assert_allclose(
        split_to_matrix(solved, 3), split_to_matrix(reference, 3), atol=1e-3
    )


def test_split_to_matrix_subtracts_parts() -> None:
    """B is the positive part minus the negative part."""
    params = np.array([0, 1, 2, 0, 0, 0, 0.5, 0], dtype=np.float64)
    np.testing.assert_array_equal(split_to_matrix(params, 2), [[0, 1], [1.5, 0]])


def test_fit_linear_notears_recovers_chain(two_var_chain: DataMatrix) -> None:
    """X1 = 2 X0 + N is recovered with its coefficient."""
    result = fit_linear_notears(two_var_chain)
    assert result.dag.edges() == [(0, 1)]
    assert 1.9 <= result.continuous[0, 1] <= 2.1
    assert result.diagnostics.converged
    assert result.diagnostics.h <= 1e-8
    diagnostics = result.diagnostics
    assert len(diagnostics.objective_trace) == diagnostics.outer_iterations
    assert result.losses.shape == (1000,)


def test_fit_linear_notears_empty_truth() -> None:
    """Independent columns give the empty graph."""
    x = DataMatrix(np.random.default_rng(8).standard_normal((2000, 5)))
    assert fit_linear_notears(x).dag.n_edges == 0


def test_fit_linear_nll_recovers_chain(two_var_chain: DataMatrix) -> None:
    """The likelihood backbone agrees with least squares on the chain."""
    result = fit_linear_nll(two_var_chain)
    assert result.dag.edges() == [(0, 1)]
    assert result.diagnostics.converged
    assert result.diagnostics.outer_iterations == LearnerConfig().nll_rounds


@pytest.mark.parametrize("name", ["linear_notears", "linear_nll"])
def test_explicit_uniform_weights_match_default_bitwise(
    two_var_chain: DataMatrix, name: str
) -> None:
    """Passing uniform weights is identical to passing none."""
    cfg = LearnerConfig(max_outer=10)
    bare = fit_backbone(name, two_var_chain, None, cfg)
    uniform = fit_backbone(name, two_var_chain, SampleWeights.uniform(1000), cfg)
    np.testing.assert_array_equal(bare.continuous, uniform.continuous)
    np.testing.assert_array_equal(bare.losses, uniform.losses)


def test_fit_warns_with_fewer_samples_than_variables(
    caplog: pytest.LogCaptureFixture,
) -> None:
    """n < d is allowed but logged."""
    x = DataMatrix(np.random.default_rng(0).standard_normal((3, 4)))
    with caplog.at_level(logging.WARNING, logger="dag_rescore.learners"):
        fit_linear_notears(x, None, LearnerConfig(max_outer=2))
    assert "fewer samples than variables" in caplog.text


def test_fit_rejects_mismatched_weights(two_var_chain: DataMatrix) -> None:
    """Weights must cover every sample."""
    with pytest.raises(InvalidParameterError, match="weights for"):
        fit_linear_notears(two_var_chain, SampleWeights.uniform(10))


def test_weighted_ols_recovers_coefficient(two_var_chain: DataMatrix) -> None:
    """Regression on the true support estimates the edge weight."""
    support = threshold_to_dag([[0.0, 1.0], [0.0, 0.0]], 0.5)
    b = weighted_ols(two_var_chain, support)
    assert 1.9 <= b.matrix[0, 1] <= 2.1
    assert b.matrix[1, 0] == 0.0


def test_weighted_ols_bounded_weights_stay_consistent() -> None:
    """Bounded weights change the estimate by a vanishing amount as n grows."""
    sizes = (500, 2000, 8000)
    gaps = np.zeros((5, len(sizes)))
    for seed in range(5):
        dag = sample_dag(GraphModel(kind=GraphKind.ER, k=1), 5, seed)
        w = assign_linear_weights(dag, seed=seed)
        for column, n in enumerate(sizes):
            x = simulate_linear_sem(w, n, NoiseSpec(sigma=[1.0] * 5), seed=100 + seed)
            weighted = weighted_ols(x, dag, _random_weights(n, 0.5, seed))
            uniform = weighted_ols(x, dag)
            gaps[seed, column] = np.linalg.norm(weighted.matrix - uniform.matrix)
    mean_gap = gaps.mean(axis=0)
    assert mean_gap[0] > mean_gap[1] > mean_gap[2]
    assert np.all(gaps[:, -1] < 0.1)


def test_backbone_registry() -> None:
    """The three backbones are registered; unknown names list them."""
    assert list_backbones() == ["linear_nll", "linear_notears", "mlp_notears"]
    assert get_backbone("linear_nll").constrained is False
    with pytest.raises(KeyError, match="Available: linear_nll"):
        get_backbone("dagma")
