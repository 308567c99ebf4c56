"""Per-variable rectifier networks and the nonlinear NOTEARS backbone."""

from __future__ import annotations

import dataclasses
import math
import typing as t

import numpy as np
import torch

from dag_rescore.errors import InvalidParameterError, ResourceLimitError
from dag_rescore.learners import AugmentedLagrangianBackbone, LearnerState, Objective
from dag_rescore.models import BackboneName, LearnerConfig, LossKind
from dag_rescore.scoring import acyclicity, residual_losses
from dag_rescore.structures import (
    DataMatrix,
    FitResult,
    FloatArray,
    SampleWeights,
    SeedLike,
)

Shape: t.TypeAlias = tuple[int, ...]


def parameter_shapes(d: int, hidden_sizes: t.Sequence[int]) -> list[Shape]:
    """Shapes of the flat parameter vector, in storage order.

    The first layer is ``(d, d, m1)`` indexed ``[network j, input k, unit]``;
    later layers are ``(d, m_in, m_out)``; the output layer is ``(d, m_L)``.
    Each weight is followed by its bias.
    """
    shapes: list[Shape] = [(d, d, hidden_sizes[0]), (d, hidden_sizes[0])]
    for fan_in, fan_out in zip(hidden_sizes[:-1], hidden_sizes[1:], strict=True):
        shapes += [(d, fan_in, fan_out), (d, fan_out)]
    shapes += [(d, hidden_sizes[-1]), (d,)]
    return shapes


def unflatten(
    params: FloatArray, d: int, hidden_sizes: t.Sequence[int]
) -> list[FloatArray]:
    """Split a flat vector into the arrays of :func:`parameter_shapes`."""
    shapes = parameter_shapes(d, hidden_sizes)
    sizes = [math.prod(shape) for shape in shapes]
    if params.shape != (sum(sizes),):
        msg = f"expected {sum(sizes)} parameters, got {params.shape}"
        raise InvalidParameterError(msg)
    offsets = np.cumsum([0, *sizes])
    return [
        params[start:stop].reshape(shape)
        for start, stop, shape in zip(offsets[:-1], offsets[1:], shapes, strict=True)
    ]


def _self_loop_mask(d: int, units: int) -> FloatArray:
    mask = np.ones((d, d, units))
    mask[np.arange(d), np.arange(d), :] = 0.0
    return mask


def first_layer_norms(
    params: FloatArray, d: int, hidden_sizes: t.Sequence[int]
) -> FloatArray:
    """Return ``A[k, j] = |W1[j, k, :]|_2``."""
    w1 = unflatten(params, d, hidden_sizes)[0]
    return t.cast("FloatArray", np.sqrt(np.square(w1).sum(axis=2)).T)


@dataclasses.dataclass(frozen=True, eq=False)
class MlpModel:
    """``d`` rectifier networks, network ``j`` predicting ``x_j`` from ``x``.

    Parameters
    ----------
    params : FloatArray
        Flat parameter vector laid out by :func:`parameter_shapes`.
    d : int
        Number of variables.
    hidden_sizes : tuple[int, ...]
        Hidden layer widths.
    """

    params: FloatArray
    d: int
    hidden_sizes: tuple[int, ...]

    def __post_init__(self) -> None:
        params = np.array(self.params, dtype=np.float64, copy=True)
        w1 = unflatten(params, self.d, self.hidden_sizes)[0]
        if np.any(w1[np.arange(self.d), np.arange(self.d), :] != 0):
            msg = "network j must not read its own input"
            raise InvalidParameterError(msg)
        params.setflags(write=False)
        object.__setattr__(self, "params", params)

    @classmethod
    def initialize(
        cls, d: int, hidden_sizes: t.Sequence[int], seed: SeedLike = 0
    ) -> MlpModel:
        """Uniform ``+-1/sqrt(fan_in)`` weights, zero biases, masked self-loops."""
        rng = np.random.default_rng(seed)
        arrays: list[FloatArray] = []
        for index, shape in enumerate(parameter_shapes(d, hidden_sizes)):
            if index % 2 == 1:
                arrays.append(np.zeros(shape))
                continue
            # every weight array is indexed [network, fan_in, ...]
            bound = 1.0 / math.sqrt(shape[1])
            arrays.append(rng.uniform(-bound, bound, size=shape))
        arrays[0] = arrays[0] * _self_loop_mask(d, hidden_sizes[0])
        params = np.concatenate([a.ravel() for a in arrays])
        return cls(params, d, tuple(hidden_sizes))

    def layers(self) -> list[FloatArray]:
        """The parameter arrays (read-only views)."""
        return unflatten(self.params, self.d, self.hidden_sizes)

    def adjacency(self) -> FloatArray:
        """First-layer norm matrix ``A(theta)``."""
        return first_layer_norms(self.params, self.d, self.hidden_sizes)

    def forward(self, x: FloatArray) -> FloatArray:
        """Predictions ``MLP_j(x_i)`` as an ``n x d`` matrix."""
        prediction, _ = _forward(self.layers(), x)
        return prediction


def _forward(
    layers: list[FloatArray], x: FloatArray
) -> tuple[FloatArray, list[FloatArray]]:
    # returns predictions and the pre-activations of every hidden layer
    pre = [np.einsum("nk,jku->nju", x, layers[0]) + layers[1]]
    hidden = np.maximum(pre[-1], 0.0)
    for weight, bias in zip(layers[2:-2:2], layers[3:-2:2], strict=True):
        pre.append(np.einsum("nju,juv->njv", hidden, weight) + bias)
        hidden = np.maximum(pre[-1], 0.0)
    prediction = np.einsum("nju,ju->nj", hidden, layers[-2]) + layers[-1]
    return prediction, pre


def _backward(
    layers: list[FloatArray],
    x: FloatArray,
    pre: list[FloatArray],
    d_out: FloatArray,
) -> list[FloatArray]:
    grads = [np.zeros_like(a) for a in layers]
    hidden = np.maximum(pre[-1], 0.0)
    grads[-2] = np.einsum("nj,nju->ju", d_out, hidden)
    grads[-1] = d_out.sum(axis=0)
    d_hidden = np.einsum("nj,ju->nju", d_out, layers[-2])
    for depth in range(len(pre) - 1, 0, -1):
        d_pre = d_hidden * (pre[depth] > 0)
        below = np.maximum(pre[depth - 1], 0.0)
        grads[2 * depth] = np.einsum("nju,njv->juv", below, d_pre)
        grads[2 * depth + 1] = d_pre.sum(axis=0)
        d_hidden = np.einsum("njv,juv->nju", d_pre, layers[2 * depth])
    d_pre = d_hidden * (pre[0] > 0)
    grads[0] = np.einsum("nk,nju->jku", x, d_pre)
    grads[1] = d_pre.sum(axis=0)
    return grads


def mlp_objective(
    params: FloatArray,
    x: DataMatrix,
    w: SampleWeights,
    cfg: LearnerConfig,
    rho: float,
    alpha: float,
) -> Objective:
    """Augmented Lagrangian of the MLP backbone and its gradient.

    ``sum_i w_i sum_j (x_ij - MLP_j(x_i))^2 / 2 + lambda sum A + alpha h(A)
    + rho/2 h(A)^2`` with ``A`` the first-layer norm matrix. Norms at zero
    contribute a zero subgradient.
    """
    d, hidden_sizes = x.d, cfg.hidden_sizes
    layers = unflatten(params, d, hidden_sizes)
    prediction, pre = _forward(layers, x.values)
    residual = x.values - prediction
    loss = float(w.w @ (0.5 * np.square(residual).sum(axis=1)))
    grads = _backward(layers, x.values, pre, -w.w[:, None] * residual)

    a = np.sqrt(np.square(layers[0]).sum(axis=2)).T
    h = acyclicity(a, cfg.acyclicity, cfg.poly_c)
    penalty = alpha * h.value + 0.5 * rho * h.value**2
    value = loss + cfg.lambda1 * float(a.sum()) + penalty
    # d/dA of the penalties, pushed through A[k, j] = |W1[j, k, :]|
    coef = cfg.lambda1 + (rho * h.value + alpha) * h.gradient
    scale = np.divide(coef, a, out=np.zeros_like(a), where=a > 0)
    grads[0] = (grads[0] + scale.T[:, :, None] * layers[0]) * _self_loop_mask(
        d, hidden_sizes[0]
    )
    return value, np.concatenate([g.ravel() for g in grads])


class MlpNotears(AugmentedLagrangianBackbone):
    """Nonlinear backbone: one rectifier network per variable."""

    name = BackboneName.MLP_NOTEARS

    def init_state(self, x: DataMatrix, cfg: LearnerConfig) -> LearnerState:
        """Random networks seeded by ``cfg.seed``."""
        if x.d > cfg.max_d_mlp:
            msg = f"MLP backbone is capped at d={cfg.max_d_mlp}, got d={x.d}"
            raise ResourceLimitError(msg)
        model = MlpModel.initialize(x.d, cfg.hidden_sizes, cfg.seed)
        return LearnerState(
            params=np.array(model.params), rho=cfg.rho_init, alpha=cfg.alpha_init
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
        """See :func:`mlp_objective`."""
        return mlp_objective(params, x, w, cfg, rho, alpha)

    def h_value(self, params: FloatArray, d: int, cfg: LearnerConfig) -> float:
        """Acyclicity of the first-layer norm matrix."""
        a = first_layer_norms(params, d, cfg.hidden_sizes)
        return acyclicity(a, cfg.acyclicity, cfg.poly_c).value

    def solve_subproblem(
        self,
        params: FloatArray,
        x: DataMatrix,
        w: SampleWeights,
        cfg: LearnerConfig,
        rho: float,
        alpha: float,
    ) -> FloatArray:
        """Fixed number of Adam steps from ``params``."""
        current = torch.nn.Parameter(torch.tensor(params, dtype=torch.float64))
        optimizer = torch.optim.Adam([current], lr=cfg.mlp_lr)
        for _ in range(cfg.mlp_inner_steps):
            # the gradient is hand-derived, Adam only takes the step
            _, grad = mlp_objective(current.detach().numpy(), x, w, cfg, rho, alpha)
            current.grad = torch.from_numpy(grad)
            optimizer.step()
        return t.cast("FloatArray", current.detach().numpy().copy())

    def per_sample_losses(
        self, state: LearnerState, x: DataMatrix, cfg: LearnerConfig
    ) -> FloatArray:
        """Half squared residual norm of the network predictions."""
        model = MlpModel(state.params, x.d, tuple(cfg.hidden_sizes))
        residual = x.values - model.forward(x.values)
        return residual_losses(residual, LossKind.LEAST_SQUARES)

    def continuous(
        self, state: LearnerState, d: int, cfg: LearnerConfig
    ) -> FloatArray:
        """The first-layer norm matrix."""
        return first_layer_norms(state.params, d, cfg.hidden_sizes)

    def finish(
        self, state: LearnerState, x: DataMatrix, cfg: LearnerConfig
    ) -> FitResult:
        """Attach the fitted networks to the result."""
        result = super().finish(state, x, cfg)
        model = MlpModel(state.params, x.d, tuple(cfg.hidden_sizes))
        return dataclasses.replace(result, model=model)


def fit_mlp_notears(
    x: DataMatrix,
    w: SampleWeights | None = None,
    cfg: LearnerConfig | None = None,
) -> FitResult:
    """Fit the nonlinear backbone.

    Raises
    ------
    ResourceLimitError
        If ``d`` exceeds ``cfg.max_d_mlp``.
    NumericError
        If the objective becomes non-finite.
    """
    return MlpNotears().fit(x, w, cfg or LearnerConfig())
