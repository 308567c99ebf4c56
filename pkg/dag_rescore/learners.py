"""Differentiable score-based DAG learners and their shared driver.

Every backbone exposes a stepwise interface so that the reweighting
loop can interleave weight updates between outer iterations:

``init_state -> step -> ... -> step -> finish``

A bare fit (:meth:`Backbone.fit`) runs the same steps with fixed weights.
"""

from __future__ import annotations

import abc
import dataclasses
import logging
import math
import typing as t

import numpy as np
import scipy.linalg
import scipy.optimize

from dag_rescore.errors import InvalidParameterError, NumericError
from dag_rescore.models import BackboneName, LearnerConfig, LossKind, NllVariance
from dag_rescore.scoring import acyclicity, residual_losses
from dag_rescore.structures import (
    Dag,
    DataMatrix,
    FitDiagnostics,
    FitResult,
    FloatArray,
    SampleWeights,
    WeightedAdjacency,
    topological_order,
)

logger = logging.getLogger(__name__)

Objective: t.TypeAlias = tuple[float, FloatArray]


@dataclasses.dataclass(frozen=True)
class LearnerState:
    """Backbone parameters and dual variables between outer iterations.

    Parameters
    ----------
    params : FloatArray
        Flat parameter vector of the backbone.
    rho, alpha : float
        Quadratic penalty and Lagrange multiplier.
    h : float
        Acyclicity value at ``params`` (``inf`` before the first step).
    outer : int
        Completed outer iterations.
    done : bool
        Whether the backbone's own stopping rule fired.
    trace : tuple[float, ...]
        Objective value after each outer iteration.
    sigma : FloatArray | None
        Noise scales estimated by profiled likelihoods.
    """

    params: FloatArray
    rho: float
    alpha: float
    h: float = math.inf
    outer: int = 0
    done: bool = False
    trace: tuple[float, ...] = ()
    sigma: FloatArray | None = None


def threshold_to_dag(m: t.Any, omega: float) -> Dag:
    """Keep entries with ``|m| > omega`` and break remaining cycles.

    While the kept support has a cycle, the surviving edge of smallest
    magnitude is removed.

    Parameters
    ----------
    m : ArrayLike
        Square real matrix.
    omega : float
        Non-negative threshold.

    Returns
    -------
    Dag
        Acyclic support.

    Raises
    ------
    InvalidParameterError
        If ``omega < 0``.

    Examples
    --------
    >>> threshold_to_dag([[0.0, 0.9], [0.4, 0.0]], 0.3).edges()
    [(0, 1)]
    """
    if omega < 0:
        msg = f"threshold must be non-negative, got {omega}"
        raise InvalidParameterError(msg)
    magnitude = np.abs(np.asarray(m, dtype=np.float64))
    keep = magnitude > omega
    np.fill_diagonal(keep, False)
    while topological_order(keep) is None:
        candidates = np.where(keep, magnitude, np.inf)
        keep[np.unravel_index(np.argmin(candidates), keep.shape)] = False
    return Dag(keep)


def weighted_ols(
    x: DataMatrix,
    support: Dag,
    w: SampleWeights | None = None,
) -> WeightedAdjacency:
    """Closed-form weighted least squares on a fixed support.

    Column ``j`` solves ``(X_P^T W X_P) beta = X_P^T W x_j`` for the
    parents ``P`` of ``j``.
    """
    if support.d != x.d:
        msg = f"support has {support.d} nodes, data has {x.d} columns"
        raise InvalidParameterError(msg)
    weights = np.full(x.n, 1.0 / x.n) if w is None else np.asarray(w.w)
    values = x.values
    b = np.zeros((x.d, x.d))
    for j in range(x.d):
        parents = support.parents(j)
        if not parents:
            continue
        design = values[:, parents]
        gram = design.T @ (weights[:, None] * design)
        rhs = design.T @ (weights * values[:, j])
        b[parents, j] = scipy.linalg.solve(gram, rhs, assume_a="pos")
    return WeightedAdjacency(b)


def _check_inputs(x: DataMatrix, w: SampleWeights) -> None:
    if w.n != x.n:
        msg = f"{w.n} weights for {x.n} samples"
        raise InvalidParameterError(msg)
    if x.n < x.d:
        logger.warning("fewer samples than variables (n=%d, d=%d)", x.n, x.d)


class Backbone(abc.ABC):
    """A differentiable DAG learner with a stepwise interface."""

    name: t.ClassVar[BackboneName]
    #: Whether the backbone enforces ``h = 0`` through dual ascent.
    constrained: t.ClassVar[bool] = True

    def max_epochs(self, cfg: LearnerConfig) -> int:
        """Outer iterations performed by a bare fit."""
        return cfg.max_outer

    @abc.abstractmethod
    def init_state(self, x: DataMatrix, cfg: LearnerConfig) -> LearnerState:
        """Return the starting parameters."""

    @abc.abstractmethod
    def step(
        self,
        state: LearnerState,
        x: DataMatrix,
        w: SampleWeights,
        cfg: LearnerConfig,
    ) -> LearnerState:
        """Run one outer iteration with fixed sample weights."""

    @abc.abstractmethod
    def per_sample_losses(
        self, state: LearnerState, x: DataMatrix, cfg: LearnerConfig
    ) -> FloatArray:
        """Loss of each observation at the current parameters."""

    @abc.abstractmethod
    def continuous(
        self, state: LearnerState, d: int, cfg: LearnerConfig
    ) -> FloatArray:
        """Matrix that is thresholded into the estimated graph."""

    def is_done(self, state: LearnerState, cfg: LearnerConfig) -> bool:
        """Whether a bare fit would stop here."""
        return state.done or state.outer >= self.max_epochs(cfg)

    def finish(
        self, state: LearnerState, x: DataMatrix, cfg: LearnerConfig
    ) -> FitResult:
        """Threshold the solution and recompute the per-sample losses."""
        matrix = self.continuous(state, x.d, cfg)
        converged = (not self.constrained) or state.h <= cfg.h_tol
        if not converged:
            logger.warning(
                "%s stopped with h=%.3e above tolerance %.1e (rho=%.1e)",
                self.name,
                state.h,
                cfg.h_tol,
                state.rho,
            )
        diagnostics = FitDiagnostics(
            h=state.h,
            outer_iterations=state.outer,
            rho=state.rho,
            alpha=state.alpha,
            converged=converged,
            objective_trace=state.trace,
        )
        return FitResult(
            continuous=matrix,
            dag=threshold_to_dag(matrix, cfg.w_threshold),
            losses=self.per_sample_losses(state, x, cfg),
            diagnostics=diagnostics,
        )

    def fit(
        self,
        x: DataMatrix,
        w: SampleWeights | None,
        cfg: LearnerConfig,
    ) -> FitResult:
        """Run the backbone to completion with fixed weights."""
        weights = SampleWeights.uniform(x.n) if w is None else w
        _check_inputs(x, weights)
        state = self.init_state(x, cfg)
        while not self.is_done(state, cfg):
            state = self.step(state, x, weights, cfg)
        result = self.finish(state, x, cfg)
        logger.info(
            "%s fit: %d outer iterations, h=%.3e, %d edges",
            self.name,
            state.outer,
            state.h,
            result.dag.n_edges,
        )
        return result


class AugmentedLagrangianBackbone(Backbone):
    """Dual ascent on ``alpha h + rho/2 h^2`` around an inner solver.

    After each subproblem the penalty grows by ``rho_multiplier`` until
    ``h`` has shrunk to a quarter of its previous value; then
    ``alpha += rho h``. The backbone stops once ``h <= h_tol`` or
    ``rho >= rho_max``.
    """

    @abc.abstractmethod
    def objective(
        self,
        params: FloatArray,
        x: DataMatrix,
        w: SampleWeights,
        cfg: LearnerConfig,
        rho: float,
        alpha: float,
    ) -> Objective:
        """Augmented Lagrangian value and gradient."""

    @abc.abstractmethod
    def h_value(self, params: FloatArray, d: int, cfg: LearnerConfig) -> float:
        """Acyclicity value of the parameters."""

    @abc.abstractmethod
    def solve_subproblem(
        self,
        params: FloatArray,
        x: DataMatrix,
        w: SampleWeights,
        cfg: LearnerConfig,
        rho: float,
        alpha: float,
    ) -> FloatArray:
        """Minimize the augmented Lagrangian from ``params``."""

    def step(
        self,
        state: LearnerState,
        x: DataMatrix,
        w: SampleWeights,
        cfg: LearnerConfig,
    ) -> LearnerState:
        """Run one dual ascent iteration."""
        rho = state.rho
        params, h_new = state.params, state.h
        while rho < cfg.rho_max:
            params = self.solve_subproblem(state.params, x, w, cfg, rho, state.alpha)
            h_new = self.h_value(params, x.d, cfg)
            logger.debug("%s: rho=%.1e h=%.3e", self.name, rho, h_new)
            if h_new > 0.25 * state.h:
                rho *= cfg.rho_multiplier
            else:
                break
        value, _ = self.objective(params, x, w, cfg, rho, state.alpha)
        if not (math.isfinite(value) and math.isfinite(h_new)):
            msg = f"{self.name} diverged: objective={value}, h={h_new}"
            raise NumericError(
                msg,
                diagnostics={"h": h_new, "rho": rho, "outer": state.outer},
            )
        alpha = state.alpha + rho * h_new
        return LearnerState(
            params=params,
            rho=rho,
            alpha=alpha,
            h=h_new,
            outer=state.outer + 1,
            done=h_new <= cfg.h_tol or rho >= cfg.rho_max,
            trace=(*state.trace, value),
        )


def _split_bounds(d: int) -> list[tuple[float, float | None]]:
    # positive and negative parts of B; diagonal pinned to zero
    return [
        (0.0, 0.0) if i == j else (0.0, None)
        for _ in range(2)
        for i in range(d)
        for j in range(d)
    ]


def split_to_matrix(params: FloatArray, d: int) -> FloatArray:
    """Return ``B = B_pos - B_neg`` from the split parameter vector."""
    return (params[: d * d] - params[d * d :]).reshape(d, d)


def linear_objective(
    params: FloatArray,
    x: DataMatrix,
    w: SampleWeights,
    cfg: LearnerConfig,
    rho: float,
    alpha: float,
) -> Objective:
    """Weighted least-squares augmented Lagrangian of the linear backbone.

    ``sum_i w_i |x_i - x_i B|^2 / 2 + lambda |B|_1 + alpha h + rho/2 h^2``
    over the split parameters ``(B_pos, B_neg) >= 0``.
    """
    d = x.d
    b = split_to_matrix(params, d)
    residual = x.values - x.values @ b
    loss = float(w.w @ (0.5 * np.square(residual).sum(axis=1)))
    grad_loss = -x.values.T @ (w.w[:, None] * residual)
    h = acyclicity(b, cfg.acyclicity, cfg.poly_c)
    value = loss + 0.5 * rho * h.value**2 + alpha * h.value + cfg.lambda1 * params.sum()
    smooth = grad_loss + (rho * h.value + alpha) * h.gradient
    grad = np.concatenate((smooth + cfg.lambda1, -smooth + cfg.lambda1), axis=None)
    return value, grad


def _lbfgsb(
    fun: t.Callable[[FloatArray], Objective],
    start: FloatArray,
    bounds: t.Sequence[tuple[float | None, float | None]],
    cfg: LearnerConfig,
) -> scipy.optimize.OptimizeResult:
    options = {} if cfg.inner_max_iter is None else {"maxiter": cfg.inner_max_iter}
    return scipy.optimize.minimize(
        fun, start, method="L-BFGS-B", jac=True, bounds=bounds, options=options
    )


class LinearNotears(AugmentedLagrangianBackbone):
    """Least-squares linear SEM under the exact acyclicity constraint."""

    name = BackboneName.LINEAR_NOTEARS

    def init_state(self, x: DataMatrix, cfg: LearnerConfig) -> LearnerState:
        """Start from the empty graph."""
        return LearnerState(
            params=np.zeros(2 * x.d * x.d), rho=cfg.rho_init, alpha=cfg.alpha_init
        )

    def objective(
        self,
        params: FloatArray,
        x: DataMatrix,
        w: SampleWeights,
        cfg: LearnerConfig,
        rho: float,
        alpha: float,
    ) -> Objective:
        """See :func:`linear_objective`."""
        return linear_objective(params, x, w, cfg, rho, alpha)

    def h_value(self, params: FloatArray, d: int, cfg: LearnerConfig) -> float:
        """Acyclicity of ``B``."""
        return acyclicity(split_to_matrix(params, d), cfg.acyclicity, cfg.poly_c).value

    def solve_subproblem(
        self,
        params: FloatArray,
        x: DataMatrix,
        w: SampleWeights,
        cfg: LearnerConfig,
        rho: float,
        alpha: float,
    ) -> FloatArray:
        """Bound-constrained quasi-Newton solve."""
        solution = _lbfgsb(
            lambda p: linear_objective(p, x, w, cfg, rho, alpha),
            params,
            _split_bounds(x.d),
            cfg,
        )
        return t.cast("FloatArray", solution.x)

    def per_sample_losses(
        self, state: LearnerState, x: DataMatrix, cfg: LearnerConfig
    ) -> FloatArray:
        """Half squared residual norm per row."""
        b = split_to_matrix(state.params, x.d)
        return residual_losses(x.values - x.values @ b, LossKind.LEAST_SQUARES)

    def continuous(
        self, state: LearnerState, d: int, cfg: LearnerConfig
    ) -> FloatArray:
        """The coefficient matrix ``B``."""
        return split_to_matrix(state.params, d)


def _nll_sigma(
    residual: FloatArray, w: SampleWeights, cfg: LearnerConfig
) -> FloatArray:
    d = residual.shape[1]
    if cfg.nll_variance is NllVariance.FIXED:
        return np.ones(d) if cfg.sigma is None else np.asarray(cfg.sigma)
    per_var = w.w @ np.square(residual)
    if cfg.nll_variance is NllVariance.EQUAL:
        per_var = np.full(d, per_var.sum() / d)
    return t.cast("FloatArray", np.sqrt(np.maximum(per_var, 1e-300)))


def nll_objective(
    params: FloatArray,
    x: DataMatrix,
    w: SampleWeights,
    cfg: LearnerConfig,
) -> Objective:
    """Weighted Gaussian likelihood score of the linear likelihood backbone.

    The weighted negative log-likelihood of the residuals minus
    ``log|det(I - B)|``, plus ``lambda |B|_1`` and the soft penalty
    ``dag_penalty * h(B)``. Returns ``inf`` where ``det(I - B) <= 0``.
    """
    d = x.d
    b = split_to_matrix(params, d)
    sign, logdet = np.linalg.slogdet(np.eye(d) - b)
    if sign <= 0:
        return math.inf, np.zeros_like(params)
    residual = x.values - x.values @ b
    weighted = w.w[:, None] * residual
    if cfg.nll_variance is NllVariance.FIXED:
        sigma = _nll_sigma(residual, w, cfg)
        value = float(w.w @ residual_losses(residual, LossKind.GAUSSIAN_NLL, sigma))
        grad_fit = -x.values.T @ (weighted / sigma**2)
    elif cfg.nll_variance is NllVariance.EQUAL:
        total = float(np.sum(weighted * residual))
        value = 0.5 * d * math.log(total)
        grad_fit = -d * (x.values.T @ weighted) / total
    else:
        per_var = np.sum(weighted * residual, axis=0)
        value = 0.5 * float(np.sum(np.log(per_var)))
        grad_fit = -(x.values.T @ weighted) / per_var
    inv_t = np.linalg.inv(np.eye(d) - b).T
    h = acyclicity(b, cfg.acyclicity, cfg.poly_c)
    value += -logdet + cfg.lambda1 * params.sum() + cfg.dag_penalty * h.value
    smooth = grad_fit + inv_t + cfg.dag_penalty * h.gradient
    grad = np.concatenate((smooth + cfg.lambda1, -smooth + cfg.lambda1), axis=None)
    return value, grad


class LinearNll(Backbone):
    """Gaussian likelihood linear SEM with a soft acyclicity penalty.

    There is no dual ascent: each outer iteration is one warm-started
    quasi-Newton solve of a fixed objective.
    """

    name = BackboneName.LINEAR_NLL
    constrained = False

    def max_epochs(self, cfg: LearnerConfig) -> int:
        """Warm-started solves performed by a bare fit."""
        return cfg.nll_rounds

    def init_state(self, x: DataMatrix, cfg: LearnerConfig) -> LearnerState:
        """Start from ``B = 0`` where ``det(I - B) = 1``."""
        return LearnerState(params=np.zeros(2 * x.d * x.d), rho=0.0, alpha=0.0)

    def step(
        self,
        state: LearnerState,
        x: DataMatrix,
        w: SampleWeights,
        cfg: LearnerConfig,
    ) -> LearnerState:
        """Run one solve, retrying in a shrinking box on ``det <= 0``."""
        d = x.d
        base_bounds = _split_bounds(d)
        bounds: list[tuple[float | None, float | None]] = list(base_bounds)
        radius = 1.0
        for attempt in range(cfg.nll_max_retries + 1):
            solution = _lbfgsb(
                lambda p: nll_objective(p, x, w, cfg), state.params, bounds, cfg
            )
            value, _ = nll_objective(solution.x, x, w, cfg)
            if math.isfinite(value):
                break
            logger.debug("%s: step rejected (attempt %d)", self.name, attempt)
            bounds = [
                (low, high)
                if high == 0.0
                else (max(0.0, p - radius), p + radius)
                for (low, high), p in zip(base_bounds, state.params, strict=True)
            ]
            radius *= 0.5
        else:
            msg = f"{self.name}: det(I - B) <= 0 after {cfg.nll_max_retries} retries"
            raise NumericError(msg, diagnostics={"outer": state.outer})
        params = t.cast("FloatArray", solution.x)
        b = split_to_matrix(params, d)
        residual = x.values - x.values @ b
        return LearnerState(
            params=params,
            rho=0.0,
            alpha=0.0,
            h=acyclicity(b, cfg.acyclicity, cfg.poly_c).value,
            outer=state.outer + 1,
            done=state.outer + 1 >= cfg.nll_rounds,
            trace=(*state.trace, value),
            sigma=_nll_sigma(residual, w, cfg),
        )

    def per_sample_losses(
        self, state: LearnerState, x: DataMatrix, cfg: LearnerConfig
    ) -> FloatArray:
        """Gaussian negative log-likelihood per row."""
        b = split_to_matrix(state.params, x.d)
        residual = x.values - x.values @ b
        sigma = state.sigma
        if sigma is None:
            sigma = np.ones(x.d) if cfg.sigma is None else np.asarray(cfg.sigma)
        return residual_losses(residual, LossKind.GAUSSIAN_NLL, sigma)

    def continuous(
        self, state: LearnerState, d: int, cfg: LearnerConfig
    ) -> FloatArray:
        """The coefficient matrix ``B``."""
        return split_to_matrix(state.params, d)


def fit_linear_notears(
    x: DataMatrix,
    w: SampleWeights | None = None,
    cfg: LearnerConfig | None = None,
) -> FitResult:
    """Fit the least-squares linear backbone.

    Parameters
    ----------
    x : DataMatrix
        Observations.
    w : SampleWeights | None
        Sample weights; uniform if ``None``.
    cfg : LearnerConfig | None
        Hyperparameters; defaults if ``None``.

    Returns
    -------
    FitResult
        Coefficients, thresholded graph, losses and diagnostics.

    Raises
    ------
    NumericError
        If the objective becomes non-finite.
    """
    return LinearNotears().fit(x, w, cfg or LearnerConfig())


def fit_linear_nll(
    x: DataMatrix,
    w: SampleWeights | None = None,
    cfg: LearnerConfig | None = None,
) -> FitResult:
    """Fit the Gaussian likelihood linear backbone.

    Raises
    ------
    NumericError
        If every damped retry leaves ``det(I - B) <= 0``.
    """
    return LinearNll().fit(x, w, cfg or LearnerConfig())
