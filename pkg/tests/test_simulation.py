"""Tests for dag_rescore.simulation: SEM sampling and noise scenarios."""

from __future__ import annotations

import typing as t

import numpy as np
import pytest

from dag_rescore.errors import InvalidParameterError, ResourceLimitError
from dag_rescore.graphs import sample_dag
from dag_rescore.models import (
    BackboneName,
    GraphKind,
    GraphModel,
    MethodSpec,
    NoiseKind,
    NoiseSpec,
    Scenario,
    SemKind,
)
from dag_rescore.simulation import (
    DISADVANTAGED_GROUP,
    _gp_draw,
    assign_linear_weights,
    make_noise_spec,
    simulate_gp_sem,
    simulate_linear_sem,
    simulate_scenario,
    standardize,
)
from dag_rescore.structures import Dag, WeightedAdjacency

UNIT3 = NoiseSpec(sigma=[1.0, 1.0, 1.0])


class NoiseSpecCase(t.NamedTuple):
    """Parametrized test case for make_noise_spec."""

    test_id: str
    kind: NoiseKind
    d: int
    p: float
    fractions: list[float]
    corrupt_fraction: float


NOISE_SPEC_CASES: list[NoiseSpecCase] = [
    NoiseSpecCase(
        test_id="homogeneous",
        kind=NoiseKind.HOMOGENEOUS,
        d=10,
        p=0.0,
        fractions=[],
        corrupt_fraction=0.0,
    ),
    NoiseSpecCase(
        test_id="heterogeneous",
        kind=NoiseKind.HETEROGENEOUS,
        d=20,
        p=0.0,
        fractions=[0.1, 0.9],
        corrupt_fraction=0.0,
    ),
    NoiseSpecCase(
        test_id="corrupted",
        kind=NoiseKind.CORRUPTED,
        d=10,
        p=0.05,
        fractions=[],
        corrupt_fraction=0.05,
    ),
]


@pytest.mark.parametrize(
    list(NoiseSpecCase._fields),
    NOISE_SPEC_CASES,
    ids=[c.test_id for c in NOISE_SPEC_CASES],
)
def test_make_noise_spec(
    test_id: str,
    kind: NoiseKind,
    d: int,
    p: float,
    fractions: list[float],
    corrupt_fraction: float,
) -> None:
    """make_noise_spec should lay out the three standard scenarios."""
    spec = make_noise_spec(kind, d, p=p)
    assert spec.sigma == [1.0] * d
    assert [g.fraction for g in spec.groups] == fractions
    assert spec.corrupt_fraction == corrupt_fraction


def test_make_noise_spec_heterogeneous_swaps_halves() -> None:
    """The minority group is loud on the first half, the dominant on the rest."""
    spec = make_noise_spec(NoiseKind.HETEROGENEOUS, 20)
    minority, dominant = spec.groups
    assert minority.sigma == [1.0] * 10 + [0.1] * 10
    assert dominant.sigma == [0.1] * 10 + [1.0] * 10


@pytest.mark.parametrize(("d", "p"), [(1, 0.0), (10, 1.0), (10, -0.1)])
def test_make_noise_spec_rejects_bad_arguments(d: int, p: float) -> None:
    """d below two or p outside [0, 1) is rejected."""
    with pytest.raises(InvalidParameterError):
        make_noise_spec(NoiseKind.CORRUPTED, d, p=p)


def test_assign_linear_weights_edgeless_is_zero() -> None:
    """An edgeless graph gets the zero matrix."""
    w = assign_linear_weights(Dag.empty(4), seed=3)
    assert not np.any(w.matrix)


def test_assign_linear_weights_magnitudes() -> None:
    """Coefficients sit on the edges with magnitudes in [0.5, 2]."""
    d = 142
    dag = Dag(np.triu(np.ones((d, d), dtype=np.bool_), k=1))
    w = assign_linear_weights(dag, seed=0)
    values = np.abs(w.matrix[dag.adjacency])
    assert not np.any(w.matrix[~dag.adjacency])
    assert values.min() >= 0.5
    assert values.max() <= 2.0
    # U(0.5, 2) magnitudes: mean 1.25, sd 1.5 / sqrt(12)
    se = 1.5 / np.sqrt(12.0) / np.sqrt(values.size)
    assert abs(values.mean() - 1.25) < 3 * se
    assert np.any(w.matrix > 0)
    assert np.any(w.matrix < 0)


def test_assign_linear_weights_rejects_bad_range() -> None:
    """The magnitude range must satisfy 0 < low < high."""
    with pytest.raises(InvalidParameterError, match="low < high"):
        assign_linear_weights(Dag.empty(2), low=0.0, high=1.0)


def test_simulate_linear_sem_single_edge_variance() -> None:
    """X1 = 2 X0 + N has variance 4 + 1."""
    w = WeightedAdjacency(np.array([[0.0, 2.0], [0.0, 0.0]]))
    x = simulate_linear_sem(w, 10_000, NoiseSpec(sigma=[1.0, 1.0]), seed=1)
    assert 4.5 <= x.values[:, 1].var() <= 5.5
    assert x.groups is None
    assert x.corrupted is None


def test_simulate_linear_sem_no_edges_gives_independent_columns() -> None:
    """Without edges the columns are uncorrelated standard normals."""
    x = simulate_linear_sem(WeightedAdjacency(np.zeros((3, 3))), 10_000, UNIT3, 2)
    corr = np.corrcoef(x.values, rowvar=False)
    off_diagonal = corr[~np.eye(3, dtype=np.bool_)]
    assert np.all(np.abs(off_diagonal) < 0.05)


def test_simulate_linear_sem_matches_analytic_covariance() -> None:
    """Empirical covariance approaches (I - B)^-T (I - B)^-1 for unit noise."""
    b = np.array([[0.0, 1.0, 0.0], [0.0, 0.0, -1.5], [0.0, 0.0, 0.0]])
    x = simulate_linear_sem(WeightedAdjacency(b), 100_000, UNIT3, seed=5)
    inv = np.linalg.inv(np.eye(3) - b)
    expected = inv.T @ inv
    np.testing.assert_allclose(np.cov(x.values, rowvar=False), expected, rtol=0.05)


def test_simulate_linear_sem_heterogeneous_group_sizes() -> None:
    """A (0.1, 0.9) split of 1000 rows labels exactly 100 as disadvantaged."""
    spec = make_noise_spec(NoiseKind.HETEROGENEOUS, 4)
    w = assign_linear_weights(Dag.from_edges(4, [(0, 1), (2, 3)]), seed=0)
    x = simulate_linear_sem(w, 1000, spec, seed=4)
    assert x.groups is not None
    assert int(np.sum(x.groups == DISADVANTAGED_GROUP)) == 100


def test_simulate_linear_sem_corrupted_row_count() -> None:
    """Exactly floor(p n) rows are flagged as corrupted."""
    spec = make_noise_spec(NoiseKind.CORRUPTED, 5, p=0.05)
    dag = sample_dag(GraphModel(kind=GraphKind.ER, k=1), 5, 0)
    x = simulate_linear_sem(assign_linear_weights(dag, seed=1), 1000, spec, seed=2)
    assert x.corrupted is not None
    assert int(x.corrupted.sum()) == 50


def test_simulate_linear_sem_rejects_cyclic_support() -> None:
    """A cyclic coefficient matrix cannot be sampled ancestrally."""
    w = WeightedAdjacency(np.array([[0.0, 1.0], [1.0, 0.0]]))
    with pytest.raises(InvalidParameterError, match="acyclic"):
        simulate_linear_sem(w, 10, NoiseSpec(sigma=[1.0, 1.0]))


def test_simulate_linear_sem_is_deterministic() -> None:
    """The same seed reproduces the same samples."""
    spec = make_noise_spec(NoiseKind.HETEROGENEOUS, 3)
    w = WeightedAdjacency(np.array([[0.0, 1.0, 0.5], [0.0, 0.0, 1.0], [0, 0, 0]]))
    first = simulate_linear_sem(w, 50, spec, seed=9)
    second = simulate_linear_sem(w, 50, spec, seed=9)
    np.testing.assert_array_equal(first.values, second.values)


def test_simulate_gp_sem_root_is_pure_noise() -> None:
    """A root column is distributed like its noise."""
    dag = Dag.from_edges(2, [(0, 1)])
    x = simulate_gp_sem(dag, 2000, NoiseSpec(sigma=[1.0, 1.0]), seed=0)
    root = x.values[:, 0]
    assert abs(root.mean()) < 3.0 / np.sqrt(2000)
    assert 0.9 <= root.var() <= 1.1


def test_simulate_gp_sem_function_values_have_unit_variance() -> None:
    """GP function values have the kernel diagonal as marginal variance."""
    dag = Dag.from_edges(2, [(0, 1)])
    spec = NoiseSpec(sigma=[1.0, 1e-3])
    second_moments = [
        float(np.mean(simulate_gp_sem(dag, 50, spec, seed=s).values[:, 1] ** 2))
        for s in range(200)
    ]
    assert 0.75 <= np.mean(second_moments) <= 1.25


def test_gp_draw_identical_rows_share_values() -> None:
    """Rows with identical parent values get (nearly) identical draws."""
    parents = np.array([[0.3], [0.3], [-1.0], [2.0]])
    values = _gp_draw(parents, np.random.default_rng(0))
    assert abs(values[0] - values[1]) < 10 * np.sqrt(1e-6)


def test_simulate_gp_sem_respects_sample_cap() -> None:
    """Kernel sizes above the cap are refused."""
    with pytest.raises(ResourceLimitError, match="at most 10"):
        simulate_gp_sem(Dag.empty(2), 11, NoiseSpec(sigma=[1.0, 1.0]), max_samples=10)


def test_standardize_centres_and_scales() -> None:
    """Every column ends with mean 0 and unit variance."""
    w = WeightedAdjacency(np.array([[0.0, 3.0], [0.0, 0.0]]))
    x = standardize(simulate_linear_sem(w, 500, NoiseSpec(sigma=[2.0, 1.0]), 0))
    np.testing.assert_allclose(x.values.mean(axis=0), 0.0, atol=1e-12)
    np.testing.assert_allclose(x.values.std(axis=0), 1.0)


def test_simulate_scenario_is_deterministic_and_labelled() -> None:
    """A scenario seed fixes the truth, coefficients and samples."""
    scenario = Scenario(
        d=6,
        n=200,
        noise=NoiseKind.HETEROGENEOUS,
        standardize=True,
        methods=[MethodSpec(backbone=BackboneName.LINEAR_NOTEARS)],
    )
    truth, weights, x = simulate_scenario(scenario, 3)
    again, _, y = simulate_scenario(scenario, 3)
    assert truth.same_as(again)
    np.testing.assert_array_equal(x.values, y.values)
    assert weights is not None
    assert weights.support().same_as(truth)
    assert x.groups is not None
    np.testing.assert_allclose(x.values.std(axis=0), 1.0)


def test_simulate_scenario_gp_has_no_coefficients() -> None:
    """GP scenarios return no coefficient matrix."""
    scenario = Scenario(
        d=3,
        n=30,
        sem=SemKind.GP,
        methods=[MethodSpec(backbone=BackboneName.MLP_NOTEARS)],
    )
    _, weights, x = simulate_scenario(scenario, 0)
    assert weights is None
    assert x.values.shape == (30, 3)


def test_simulate_gp_sem_is_deterministic() -> None:
    """The same seed reproduces the same nonlinear samples and labels."""
    dag = sample_dag(GraphModel(kind=GraphKind.ER, k=1), 4, 3)
    spec = make_noise_spec(NoiseKind.HETEROGENEOUS, 4)
    first = simulate_gp_sem(dag, 60, spec, seed=5)
    second = simulate_gp_sem(dag, 60, spec, seed=5)
    np.testing.assert_array_equal(first.values, second.values)
    assert first.groups is not None
    assert second.groups is not None
    np.testing.assert_array_equal(first.groups, second.groups)
    other = simulate_gp_sem(dag, 60, spec, seed=6)
    assert not np.array_equal(first.values, other.values)


def test_simulate_gp_sem_corrupted_rows() -> None:
    """floor(p n) rows come from a replacement graph, reproducibly."""
    dag = sample_dag(GraphModel(kind=GraphKind.ER, k=1), 4, 0)
    spec = make_noise_spec(NoiseKind.CORRUPTED, 4, p=0.05)
    x = simulate_gp_sem(dag, 210, spec, seed=2)
    assert x.corrupted is not None
    assert int(x.corrupted.sum()) == 10
    assert np.all(np.isfinite(x.values))
    again = simulate_gp_sem(dag, 210, spec, seed=2)
    np.testing.assert_array_equal(x.values, again.values)
    assert again.corrupted is not None
    np.testing.assert_array_equal(x.corrupted, again.corrupted)
