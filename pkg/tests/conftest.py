"""Shared fixtures for dag_rescore tests."""

from __future__ import annotations

import numpy as np
import pytest

from dag_rescore.models import LearnerConfig
from dag_rescore.structures import Dag, DataMatrix


@pytest.fixture()
def chain3() -> Dag:
    """Return the chain ``0 -> 1 -> 2``."""
    return Dag.from_edges(3, [(0, 1), (1, 2)])


@pytest.fixture()
def two_var_chain() -> DataMatrix:
    """Samples of ``X1 = 2 X0 + N`` with unit Gaussian noise.

    Returns
    -------
    DataMatrix
        1000 rows of two columns.
    """
    rng = np.random.default_rng(7)
    x0 = rng.standard_normal(1000)
    x1 = 2.0 * x0 + rng.standard_normal(1000)
    return DataMatrix(np.column_stack((x0, x1)))


@pytest.fixture()
def small_data() -> DataMatrix:
    """Return a random ``16 x 3`` data matrix for gradient checks."""
    rng = np.random.default_rng(11)
    return DataMatrix(rng.standard_normal((16, 3)))


@pytest.fixture()
def fast_learner() -> LearnerConfig:
    """Learner settings that keep the augmented Lagrangian loop short."""
    return LearnerConfig(max_outer=20, h_tol=1e-8, rho_max=1e12)
