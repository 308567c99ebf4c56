"""Observational data from linear and Gaussian-process additive-noise SEMs."""

from __future__ import annotations

import logging
import math
import typing as t

import numpy as np
import scipy.linalg
from scipy.spatial.distance import cdist

from dag_rescore.errors import InvalidParameterError, NumericError, ResourceLimitError
from dag_rescore.graphs import sample_dag
from dag_rescore.models import (
    GraphKind,
    GraphModel,
    NoiseGroup,
    NoiseKind,
    NoiseSpec,
    Scenario,
    SemKind,
)
from dag_rescore.structures import (
    BoolArray,
    Dag,
    DataMatrix,
    FloatArray,
    IntArray,
    SeedLike,
    WeightedAdjacency,
)

logger = logging.getLogger(__name__)

#: Largest sample size accepted by the O(n^3) kernel factorization.
GP_MAX_SAMPLES: t.Final = 4000
GP_JITTER_START: t.Final = 1e-6
GP_JITTER_MAX: t.Final = 1e-2

#: Label of the minority group produced by :func:`make_noise_spec`.
DISADVANTAGED_GROUP: t.Final = 0
DOMINANT_GROUP: t.Final = 1


def _subseed(rng: np.random.Generator) -> int:
    return int(rng.integers(2**63 - 1))


def make_noise_spec(
    kind: NoiseKind,
    d: int,
    *,
    p: float = 0.0,
    minority_fraction: float = 0.1,
    high: float = 1.0,
    low: float = 0.1,
) -> NoiseSpec:
    """Build one of the standard noise scenarios.

    Parameters
    ----------
    kind : NoiseKind
        ``homogeneous``: unit scales. ``heterogeneous``: a minority group
        (``minority_fraction`` of the rows) with scale ``high`` on the
        first ``ceil(d/2)`` variables and ``low`` on the rest, and a
        dominant group with the two halves swapped. ``corrupted``: unit
        scales plus a share ``p`` of rows from an unrelated model.
    d : int
        Number of variables.
    p : float
        Corrupted share (``corrupted`` only).
    minority_fraction, high, low : float
        Heterogeneous group layout.

    Returns
    -------
    NoiseSpec
        The noise specification.

    Raises
    ------
    InvalidParameterError
        If ``d < 2`` or ``p`` is outside ``[0, 1)``.

    Examples
    --------
    >>> spec = make_noise_spec(NoiseKind.HETEROGENEOUS, 4)
    >>> [g.sigma for g in spec.groups]
    [[1.0, 1.0, 0.1, 0.1], [0.1, 0.1, 1.0, 1.0]]
    """
    if d < 2:
        msg = f"d must be at least 2, got {d}"
        raise InvalidParameterError(msg)
    if not 0.0 <= p < 1.0:
        msg = f"corrupted share must lie in [0, 1), got {p}"
        raise InvalidParameterError(msg)
    ones = [1.0] * d
    if kind is NoiseKind.HOMOGENEOUS:
        return NoiseSpec(sigma=ones)
    if kind is NoiseKind.CORRUPTED:
        return NoiseSpec(sigma=ones, corrupt_fraction=p)
    half = math.ceil(d / 2)
    minority = [high] * half + [low] * (d - half)
    dominant = [low] * half + [high] * (d - half)
    return NoiseSpec(
        sigma=ones,
        groups=[
            NoiseGroup(fraction=minority_fraction, sigma=minority),
            NoiseGroup(fraction=1.0 - minority_fraction, sigma=dominant),
        ],
    )


def assign_linear_weights(
    dag: Dag,
    low: float = 0.5,
    high: float = 2.0,
    seed: SeedLike = 0,
) -> WeightedAdjacency:
    """Draw edge coefficients uniformly from ``(-high, -low) U (low, high)``.

    Parameters
    ----------
    dag : Dag
        Support of the coefficient matrix.
    low, high : float
        Magnitude range, ``0 < low < high``.
    seed : SeedLike
        Random seed.

    Returns
    -------
    WeightedAdjacency
        Coefficients on the edges of ``dag``, exact zeros elsewhere.

    Raises
    ------
    InvalidParameterError
        If ``low <= 0`` or ``high <= low``.
    """
    if not 0.0 < low < high:
        msg = f"need 0 < low < high, got low={low}, high={high}"
        raise InvalidParameterError(msg)
    rng = np.random.default_rng(seed)
    d = dag.d
    magnitude = rng.uniform(low, high, size=(d, d))
    sign = rng.choice(np.array([-1.0, 1.0]), size=(d, d))
    return WeightedAdjacency(np.where(dag.adjacency, sign * magnitude, 0.0))


def _group_labels(noise: NoiseSpec, n: int, rng: np.random.Generator) -> IntArray:
    fractions = np.array([g.fraction for g in noise.groups])
    counts = np.floor(fractions * n).astype(np.int64)
    # largest remainder keeps the counts summing to n
    shortfall = n - int(counts.sum())
    if shortfall > 0:
        remainder = fractions * n - counts
        counts[np.argsort(-remainder, kind="stable")[:shortfall]] += 1
    labels = np.repeat(np.arange(len(counts), dtype=np.int64), counts)
    return rng.permutation(labels)


def _noise_scales(
    noise: NoiseSpec, n: int, rng: np.random.Generator
) -> tuple[FloatArray, IntArray | None]:
    if not noise.groups:
        return np.broadcast_to(np.asarray(noise.sigma), (n, noise.d)), None
    labels = _group_labels(noise, n, rng)
    table = np.array([g.sigma for g in noise.groups])
    return table[labels], labels


def _corrupted_rows(noise: NoiseSpec, n: int, rng: np.random.Generator) -> BoolArray:
    flags = np.zeros(n, dtype=np.bool_)
    count = math.floor(noise.corrupt_fraction * n)
    if count:
        flags[rng.choice(n, size=count, replace=False)] = True
    return flags


def _edges_per_node(noise: NoiseSpec, n_edges: int, d: int) -> int:
    if noise.corrupt_edges_per_node is not None:
        return noise.corrupt_edges_per_node
    return max(1, round(n_edges / d))


def _clean(noise: NoiseSpec) -> NoiseSpec:
    return NoiseSpec(sigma=noise.sigma)


def _check_noise(noise: NoiseSpec, d: int, n: int) -> None:
    if noise.d != d:
        msg = f"noise spec has {noise.d} variables, graph has {d}"
        raise InvalidParameterError(msg)
    if n < 1:
        msg = f"n must be positive, got {n}"
        raise InvalidParameterError(msg)


def simulate_linear_sem(
    w: WeightedAdjacency,
    n: int,
    noise: NoiseSpec,
    seed: SeedLike = 0,
) -> DataMatrix:
    """Sample ``X = X B + N`` by ancestral sampling.

    Rows belonging to a noise group use that group's scales; a
    ``floor(corrupt_fraction * n)`` share of rows is replaced by draws from
    an independently sampled ER model with the same dimension and edge
    density.

    Parameters
    ----------
    w : WeightedAdjacency
        Coefficients; the support must be acyclic.
    n : int
        Number of samples.
    noise : NoiseSpec
        Noise scales, groups and corruption.
    seed : SeedLike
        Random seed.

    Returns
    -------
    DataMatrix
        Samples with group labels and corruption flags when applicable.

    Raises
    ------
    InvalidParameterError
        If the support is cyclic or the shapes disagree.
    """
    if not w.is_dag():
        msg = "coefficient support must be acyclic"
        raise InvalidParameterError(msg)
    _check_noise(noise, w.d, n)
    rng = np.random.default_rng(seed)
    scales, labels = _noise_scales(noise, n, rng)
    values = _ancestral_linear(w, rng.standard_normal((n, w.d)) * scales)
    flags = None if noise.corrupt_fraction == 0 else _corrupted_rows(noise, n, rng)
    if flags is not None and flags.any():
        k = _edges_per_node(noise, int(np.count_nonzero(w.matrix)), w.d)
        other_dag = sample_dag(GraphModel(kind=GraphKind.ER, k=k), w.d, _subseed(rng))
        other = assign_linear_weights(other_dag, seed=_subseed(rng))
        replacement = simulate_linear_sem(
            other, int(flags.sum()), _clean(noise), _subseed(rng)
        )
        values[flags] = replacement.values
    return DataMatrix(values, groups=labels, corrupted=flags)


def _ancestral_linear(w: WeightedAdjacency, noise: FloatArray) -> FloatArray:
    values = np.zeros_like(noise)
    for i in w.support().order():
        values[:, i] = values @ w.matrix[:, i] + noise[:, i]
    return values


def _gp_draw(parent_values: FloatArray, rng: np.random.Generator) -> FloatArray:
    n = parent_values.shape[0]
    gram = np.exp(-0.5 * cdist(parent_values, parent_values, "sqeuclidean"))
    jitter = GP_JITTER_START
    while True:
        try:
            factor = scipy.linalg.cholesky(
                gram + jitter * np.eye(n), lower=True, check_finite=False
            )
        except scipy.linalg.LinAlgError:
            jitter *= 10.0
            if jitter > GP_JITTER_MAX:
                msg = f"kernel factorization failed up to jitter {GP_JITTER_MAX:g}"
                raise NumericError(msg) from None
            logger.warning("kernel not positive definite, jitter -> %g", jitter)
            continue
        return t.cast("FloatArray", factor @ rng.standard_normal(n))


def simulate_gp_sem(
    dag: Dag,
    n: int,
    noise: NoiseSpec,
    seed: SeedLike = 0,
    *,
    max_samples: int = GP_MAX_SAMPLES,
) -> DataMatrix:
    """Sample a nonlinear SEM whose mechanisms are Gaussian-process draws.

    Every variable with parents gets an independent function drawn
    jointly at the observed parent rows from a GP with unit length-scale
    RBF kernel ``exp(-|u - v|^2 / 2)``; roots are pure noise.

    Parameters
    ----------
    dag : Dag
        Causal graph.
    n : int
        Number of samples.
    noise : NoiseSpec
        Noise scales, groups and corruption.
    seed : SeedLike
        Random seed.
    max_samples : int
        Cap on ``n`` for the kernel factorization.

    Returns
    -------
    DataMatrix
        Samples with labels when applicable.

    Raises
    ------
    ResourceLimitError
        If ``n`` exceeds ``max_samples``.
    NumericError
        If the kernel cannot be factorized even with maximal jitter.
    """
    if n > max_samples:
        msg = f"GP simulation supports at most {max_samples} samples, got {n}"
        raise ResourceLimitError(msg)
    _check_noise(noise, dag.d, n)
    rng = np.random.default_rng(seed)
    scales, labels = _noise_scales(noise, n, rng)
    eps = rng.standard_normal((n, dag.d)) * scales
    values = np.zeros((n, dag.d))
    for i in dag.order():
        parents = dag.parents(i)
        values[:, i] = eps[:, i]
        if parents:
            values[:, i] += _gp_draw(values[:, parents], rng)
    flags = None if noise.corrupt_fraction == 0 else _corrupted_rows(noise, n, rng)
    if flags is not None and flags.any():
        k = _edges_per_node(noise, dag.n_edges, dag.d)
        other = sample_dag(GraphModel(kind=GraphKind.ER, k=k), dag.d, _subseed(rng))
        replacement = simulate_gp_sem(
            other,
            int(flags.sum()),
            _clean(noise),
            _subseed(rng),
            max_samples=max_samples,
        )
        values[flags] = replacement.values
    return DataMatrix(values, groups=labels, corrupted=flags)


def standardize(x: DataMatrix) -> DataMatrix:
    """Return ``x`` with every column centred and scaled to unit variance."""
    values = x.values - x.values.mean(axis=0)
    std = values.std(axis=0)
    values = values / np.where(std > 0, std, 1.0)
    return DataMatrix(values, groups=x.groups, corrupted=x.corrupted)


def simulate_sem(
    dag: Dag,
    sem: SemKind,
    n: int,
    noise: NoiseSpec,
    seed: SeedLike = 0,
    *,
    low: float = 0.5,
    high: float = 2.0,
) -> tuple[WeightedAdjacency | None, DataMatrix]:
    """Draw coefficients (linear only) and data for a ground-truth graph.

    Returns
    -------
    tuple[WeightedAdjacency | None, DataMatrix]
        Coefficients (``None`` for GP SEMs) and the samples.
    """
    rng = np.random.default_rng(seed)
    if sem is SemKind.LINEAR:
        w = assign_linear_weights(dag, low, high, seed=_subseed(rng))
        return w, simulate_linear_sem(w, n, noise, seed=_subseed(rng))
    return None, simulate_gp_sem(dag, n, noise, seed=_subseed(rng))


def simulate_scenario(
    scenario: Scenario, seed: SeedLike
) -> tuple[Dag, WeightedAdjacency | None, DataMatrix]:
    """Draw the true graph, coefficients and data of a benchmark scenario.

    Parameters
    ----------
    scenario : Scenario
        Graph model, SEM, sample size and noise setting.
    seed : SeedLike
        Random seed of the data set.

    Returns
    -------
    tuple[Dag, WeightedAdjacency | None, DataMatrix]
        Ground truth, coefficients (``None`` for GP SEMs) and samples,
        standardized when the scenario asks for it.
    """
    rng = np.random.default_rng(seed)
    truth = sample_dag(scenario.graph, scenario.d, _subseed(rng))
    noise = make_noise_spec(scenario.noise, scenario.d, p=scenario.p)
    weights, x = simulate_sem(truth, scenario.sem, scenario.n, noise, _subseed(rng))
    if scenario.standardize:
        x = standardize(x)
    logger.debug(
        "scenario %s: %d true edges, n=%d", scenario.scenario_id, truth.n_edges, x.n
    )
    return truth, weights, x
