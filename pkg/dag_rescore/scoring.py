"""Score functions and differentiable acyclicity characterizations."""

from __future__ import annotations

import dataclasses
import math
import typing as t

import numpy as np
import numpy.typing as npt
import scipy.linalg

from dag_rescore.errors import InvalidParameterError
from dag_rescore.models import AcyclicityKind, LossKind, ScoreConfig
from dag_rescore.structures import (
    DataMatrix,
    FloatArray,
    SampleWeights,
    WeightedAdjacency,
)

if t.TYPE_CHECKING:
    from dag_rescore.mlp import MlpModel

_LOG_SQRT_2PI: t.Final = 0.5 * math.log(2.0 * math.pi)


@dataclasses.dataclass(frozen=True)
class AcyclicityValue:
    """Value and gradient of an acyclicity function.

    Parameters
    ----------
    value : float
        ``h(A) >= 0`` up to round-off, zero iff the support is acyclic.
    gradient : FloatArray
        ``dh/dA``.
    """

    value: float
    gradient: FloatArray


def _finite_square(a: npt.ArrayLike, name: str) -> FloatArray:
    matrix = np.asarray(a, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        msg = f"{name} must be a square matrix, got shape {matrix.shape}"
        raise InvalidParameterError(msg)
    if not np.all(np.isfinite(matrix)):
        msg = f"{name} must be finite"
        raise InvalidParameterError(msg)
    return matrix


def predict(b: WeightedAdjacency | MlpModel, x: DataMatrix) -> FloatArray:
    """Return the fitted values ``f(x_i)`` row by row."""
    if b.d != x.d:
        msg = f"model has {b.d} variables, data has {x.d}"
        raise InvalidParameterError(msg)
    if isinstance(b, WeightedAdjacency):
        return t.cast("FloatArray", x.values @ b.matrix)
    return b.forward(x.values)


def residual_losses(
    residuals: FloatArray,
    loss: LossKind,
    sigma: npt.ArrayLike | None = None,
) -> FloatArray:
    """Per-row loss of a residual matrix ``x - f(x)``.

    Parameters
    ----------
    residuals : FloatArray
        ``n x d`` residuals.
    loss : LossKind
        ``least_squares``: ``0.5 * |r_i|^2``. ``gaussian_nll``:
        ``sum_j log(sigma_j sqrt(2 pi)) + r_ij^2 / (2 sigma_j^2)``.
    sigma : ArrayLike | None
        Noise scales of the likelihood; ones if ``None``.

    Returns
    -------
    FloatArray
        Length-``n`` losses.
    """
    if loss is LossKind.LEAST_SQUARES:
        return t.cast("FloatArray", 0.5 * np.square(residuals).sum(axis=1))
    d = residuals.shape[1]
    scale = np.ones(d) if sigma is None else np.asarray(sigma, dtype=np.float64)
    if scale.shape != (d,):
        msg = f"sigma must have {d} entries"
        raise InvalidParameterError(msg)
    const = float(np.sum(np.log(scale))) + d * _LOG_SQRT_2PI
    return t.cast(
        "FloatArray", const + (np.square(residuals) / (2.0 * scale**2)).sum(axis=1)
    )


def per_sample_losses(
    b: WeightedAdjacency | MlpModel,
    x: DataMatrix,
    cfg: ScoreConfig,
) -> FloatArray:
    """Loss of fitting each observation.

    Parameters
    ----------
    b : WeightedAdjacency | MlpModel
        Linear coefficients (``f(x) = x B``) or per-variable networks.
    x : DataMatrix
        Observations.
    cfg : ScoreConfig
        Loss family and likelihood scales.

    Returns
    -------
    FloatArray
        Length-``n`` vector of losses.

    Raises
    ------
    InvalidParameterError
        On a dimension mismatch.

    Examples
    --------
    >>> import numpy as np
    >>> from dag_rescore.structures import DataMatrix, WeightedAdjacency
    >>> x = DataMatrix(np.array([[1.0, 2.0]]))
    >>> per_sample_losses(WeightedAdjacency(np.zeros((2, 2))), x, ScoreConfig())
    array([2.5])
    """
    return residual_losses(x.values - predict(b, x), cfg.loss, cfg.sigma)


def average_score(losses: npt.ArrayLike) -> float:
    """Unweighted average of the losses (compensated, index order)."""
    values = np.asarray(losses, dtype=np.float64)
    return math.fsum(values) / values.shape[0]


def weighted_score(
    losses: npt.ArrayLike,
    w: SampleWeights,
    sparsity: float = 0.0,
) -> float:
    """Reweighted score ``sum_i w_i l_i + sparsity``.

    Exactly uniform weights reduce to :func:`average_score`, so the
    reweighted score coincides bitwise with the plain average.

    Parameters
    ----------
    losses : ArrayLike
        Per-sample losses.
    w : SampleWeights
        Feasible weights.
    sparsity : float
        Precomputed ``lambda * R_sparse`` term.

    Returns
    -------
    float
        The score.

    Raises
    ------
    InvalidParameterError
        If the lengths differ.

    Examples
    --------
    >>> import numpy as np
    >>> weighted_score([2.0, 1.0], SampleWeights(np.array([0.75, 0.25]), tau=0.5))
    1.75
    """
    values = np.asarray(losses, dtype=np.float64)
    if values.shape != (w.n,):
        msg = f"{values.shape[0]} losses for {w.n} weights"
        raise InvalidParameterError(msg)
    if w.is_uniform():
        return average_score(values) + sparsity
    return math.fsum(w.w * values) + sparsity


def matrix_exp(a: npt.ArrayLike) -> FloatArray:
    """Matrix exponential by scaling and squaring with a Pade core.

    Raises
    ------
    InvalidParameterError
        If the input is not a finite square matrix.

    Examples
    --------
    >>> matrix_exp([[0.0, 0.0], [0.0, 0.0]])
    array([[1., 0.],
           [0., 1.]])
    """
    return t.cast("FloatArray", scipy.linalg.expm(_finite_square(a, "matrix")))


def h_expm(a: npt.ArrayLike) -> AcyclicityValue:
    """Trace-exponential acyclicity ``tr(exp(A * A)) - d``.

    The gradient is ``exp(A * A)^T * 2A`` (elementwise products).
    """
    matrix = _finite_square(a, "matrix")
    e = scipy.linalg.expm(matrix * matrix)
    value = float(np.trace(e)) - matrix.shape[0]
    return AcyclicityValue(value, e.T * 2.0 * matrix)


def h_poly(a: npt.ArrayLike, c: float | None = None) -> AcyclicityValue:
    """Polynomial acyclicity ``tr((I + c A * A)^d) - d``.

    Parameters
    ----------
    a : ArrayLike
        Square matrix.
    c : float | None
        Positive coefficient, ``1/d`` by default.

    Returns
    -------
    AcyclicityValue
        Value and gradient ``d (M^(d-1))^T * 2 c A`` with ``M = I + c A * A``.
    """
    matrix = _finite_square(a, "matrix")
    d = matrix.shape[0]
    coef = 1.0 / d if c is None else c
    if not coef > 0:
        msg = f"polynomial coefficient must be positive, got {c}"
        raise InvalidParameterError(msg)
    m = np.eye(d) + coef * matrix * matrix
    power = np.linalg.matrix_power(m, d - 1)
    value = float(np.trace(power @ m)) - d
    return AcyclicityValue(value, d * power.T * 2.0 * coef * matrix)


def acyclicity(
    a: npt.ArrayLike,
    kind: AcyclicityKind = AcyclicityKind.EXPM,
    c: float | None = None,
) -> AcyclicityValue:
    """Dispatch to :func:`h_expm` or :func:`h_poly`."""
    if kind is AcyclicityKind.POLY:
        return h_poly(a, c)
    return h_expm(a)
