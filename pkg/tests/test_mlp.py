"""Tests for dag_rescore.mlp: per-variable networks and their backbone."""

from __future__ import annotations

import numpy as np
import pytest

from dag_rescore.errors import InvalidParameterError, ResourceLimitError
from dag_rescore.mlp import (
    MlpModel,
    MlpNotears,
    first_layer_norms,
    fit_mlp_notears,
    mlp_objective,
    parameter_shapes,
    unflatten,
)
from dag_rescore.models import LearnerConfig
from dag_rescore.structures import DataMatrix, SampleWeights

HIDDEN = [4, 4]


def _self_loop_free(d: int, hidden: list[int]) -> np.ndarray:
    """Flat 0/1 mask of the parameters a network may use."""
    mask = np.ones(sum(int(np.prod(s)) for s in parameter_shapes(d, hidden)))
    first = unflatten(mask, d, hidden)[0]
    first[np.arange(d), np.arange(d), :] = 0.0
    return mask


def test_parameter_shapes_layout() -> None:
    """Weights are followed by biases, first layer indexed by network and input."""
    assert parameter_shapes(3, [4, 5]) == [
        (3, 3, 4),
        (3, 4),
        (3, 4, 5),
        (3, 5),
        (3, 5),
        (3,),
    ]


def test_unflatten_rejects_wrong_length() -> None:
    """A parameter vector of the wrong size is refused."""
    with pytest.raises(InvalidParameterError, match="parameters"):
        unflatten(np.zeros(7), 3, HIDDEN)


def test_initialize_masks_self_loops() -> None:
    """Network j never reads x_j, so A has a zero diagonal."""
    model = MlpModel.initialize(4, HIDDEN, seed=0)
    a = model.adjacency()
    assert a.shape == (4, 4)
    assert np.all(np.diag(a) == 0.0)
    assert np.all(a >= 0.0)
    assert np.all(a[~np.eye(4, dtype=np.bool_)] > 0.0)


def test_model_rejects_self_loop_weights() -> None:
    """Construction fails when network j has weights on its own input."""
    params = np.ones(_self_loop_free(2, HIDDEN).size)
    with pytest.raises(InvalidParameterError, match="own input"):
        MlpModel(params, 2, tuple(HIDDEN))


def test_mlp_objective_gradient(small_data: DataMatrix) -> None:
    """Backpropagated gradients match central differences."""
    cfg = LearnerConfig(hidden_sizes=HIDDEN, lambda1=0.05)
    mask = _self_loop_free(3, HIDDEN)
    w = SampleWeights(np.linspace(0.5, 1.5, 16) / 16, tau=0.5)
    rng = np.random.default_rng(0)
    base = MlpModel.initialize(3, HIDDEN, seed=1).params
    for _ in range(3):
        params = (base + rng.normal(0.0, 0.1, size=base.size)) * mask
        _, analytic = mlp_objective(params, small_data, w, cfg, 3.0, 0.7)
        numeric = np.zeros_like(params)
        step = 1e-6
        for i in np.flatnonzero(mask):
            up, down = params.copy(), params.copy()
            up[i] += step
            down[i] -= step
            high, _ = mlp_objective(up, small_data, w, cfg, 3.0, 0.7)
            low, _ = mlp_objective(down, small_data, w, cfg, 3.0, 0.7)
            numeric[i] = (high - low) / (2 * step)
        scale = np.maximum(np.abs(numeric), 1e-2)
        assert np.max(np.abs(analytic - numeric) / scale) < 1e-4
        assert np.all(analytic[mask == 0] == 0.0)


def test_mlp_objective_with_zero_first_layer(small_data: DataMatrix) -> None:
    """Zeroed first layers leave a bias-only predictor and h = 0."""
    cfg = LearnerConfig(hidden_sizes=HIDDEN, lambda1=0.1)
    params = np.zeros(_self_loop_free(3, HIDDEN).size)
    bias = np.array([0.5, -1.0, 2.0])
    params[-3:] = bias
    w = SampleWeights.uniform(16)
    value, _ = mlp_objective(params, small_data, w, cfg, 10.0, 3.0)
    expected = w.w @ (0.5 * np.square(small_data.values - bias).sum(axis=1))
    assert value == pytest.approx(expected)
    assert not np.any(first_layer_norms(params, 3, HIDDEN))


def test_subproblem_descends_and_keeps_masked_weights(small_data: DataMatrix) -> None:
    """Adam steps on the hand-derived gradient lower the objective.

    The input vector is left untouched and self-loop weights stay zero.
    """
    cfg = LearnerConfig(hidden_sizes=HIDDEN, mlp_inner_steps=50)
    w = SampleWeights.uniform(16)
    params = MlpModel.initialize(3, HIDDEN, seed=2).params.copy()
    before = params.copy()
    solved = MlpNotears().solve_subproblem(params, small_data, w, cfg, 1.0, 0.0)
    np.testing.assert_array_equal(params, before)
    start, _ = mlp_objective(params, small_data, w, cfg, 1.0, 0.0)
    end, _ = mlp_objective(solved, small_data, w, cfg, 1.0, 0.0)
    assert end < start
    assert np.all(solved[_self_loop_free(3, HIDDEN) == 0] == 0.0)


def test_fit_mlp_notears_respects_dimension_cap(small_data: DataMatrix) -> None:
    """Dimensions above the cap are refused before fitting."""
    with pytest.raises(ResourceLimitError, match="capped"):
        fit_mlp_notears(small_data, None, LearnerConfig(max_d_mlp=2))


@pytest.mark.slow
def test_fit_mlp_notears_recovers_linear_chain(two_var_chain: DataMatrix) -> None:
    """An affine mechanism is learnt with the right direction."""
    result = fit_mlp_notears(two_var_chain, None, LearnerConfig(hidden_sizes=[10]))
    assert result.dag.edges() == [(0, 1)]
    assert result.model is not None
    residual = two_var_chain.values - result.model.forward(two_var_chain.values)
    assert 0.8 <= residual[:, 1].var() <= 1.2
