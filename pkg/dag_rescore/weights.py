"""Inner maximization of the reweighted score over ``C(tau)``.

``C(tau)`` is the probability simplex intersected with the box
``[tau/n, 1/(tau n)]``. For a fixed model the objective ``sum_i w_i l_i``
is linear in ``w``, so :func:`inner_weights_exact` solves it by sorting.
:func:`inner_weights_parametric` instead trains a small scorer network
whose softmax output is thresholded into ``C(tau)``.
"""

from __future__ import annotations

import copy
import dataclasses
import itertools
import logging
import math
import typing as t

import numpy as np
import numpy.typing as npt
import scipy.optimize
import torch

from dag_rescore.errors import InvalidParameterError, NumericError
from dag_rescore.models import RescoreConfig
from dag_rescore.structures import (
    WEIGHT_SUM_TOL,
    DataMatrix,
    FloatArray,
    SampleWeights,
    SeedLike,
)

logger = logging.getLogger(__name__)

#: Clip-and-rescale rounds before falling back to the exact projection.
CLIP_MAX_ROUNDS: t.Final = 50
#: Hidden widths of the scorer when none are configured.
DEFAULT_SCORER_HIDDEN: t.Final = (10,)


def _check_tau(tau: float) -> None:
    if not 0.0 < tau <= 1.0:
        msg = f"tau must lie in (0, 1], got {tau}"
        raise InvalidParameterError(msg)


def _box(n: int, tau: float) -> tuple[float, float]:
    return tau / n, 1.0 / (tau * n)


def inner_weights_exact(losses: npt.ArrayLike, tau: float) -> SampleWeights:
    """Maximize ``sum_i w_i l_i`` over ``C(tau)`` exactly.

    Samples sorted by decreasing loss receive the cap ``1/(tau n)`` until
    the budget left above the floor ``tau/n`` runs out; at most one sample
    gets a fractional weight and the rest stay at the floor. Tied losses
    share the average of what their block would receive.

    Parameters
    ----------
    losses : ArrayLike
        Finite per-sample losses.
    tau : float
        Cutoff threshold in ``(0, 1]``.

    Returns
    -------
    SampleWeights
        An optimal vertex of ``C(tau)`` (uniform when ``tau == 1``).

    Raises
    ------
    InvalidParameterError
        If ``tau`` is out of range or the losses are empty or not finite.

    Examples
    --------
    >>> inner_weights_exact([2.0, 1.0], 0.5).w
    array([0.75, 0.25])
    """
    _check_tau(tau)
    values = np.asarray(losses, dtype=np.float64)
    if values.ndim != 1 or values.shape[0] < 1 or not np.all(np.isfinite(values)):
        msg = "losses must be a non-empty finite vector"
        raise InvalidParameterError(msg)
    n = values.shape[0]
    if tau == 1.0:
        return SampleWeights.uniform(n)
    floor, cap = _box(n, tau)
    step = cap - floor
    budget = 1.0 - n * floor
    n_capped = min(n, math.floor(budget / step))
    remainder = min(max(budget - n_capped * step, 0.0), step)

    order = np.argsort(-values, kind="stable")
    ranked = np.full(n, floor)
    ranked[:n_capped] = cap
    if n_capped < n:
        ranked[n_capped] += remainder

    # equal losses share their block's mass
    sorted_losses = values[order]
    starts = np.flatnonzero(np.r_[True, sorted_losses[1:] != sorted_losses[:-1]])
    if starts.shape[0] < n:
        sizes = np.diff(np.r_[starts, n])
        ranked = np.repeat(np.add.reduceat(ranked, starts) / sizes, sizes)

    w = np.empty(n)
    w[order] = ranked
    return SampleWeights(w, tau=tau)


def project_capped_simplex(v: npt.ArrayLike, tau: float) -> FloatArray:
    """Euclidean projection of ``v`` onto ``C(tau)`` by water-filling.

    The projection is ``clip(v - nu, tau/n, 1/(tau n))`` for the shift
    ``nu`` that makes the entries sum to one; ``nu`` is found by root
    finding on a bracket where the clipped sum changes sign.
    """
    _check_tau(tau)
    values = np.asarray(v, dtype=np.float64)
    n = values.shape[0]
    if tau == 1.0:
        return np.full(n, 1.0 / n)
    low, high = _box(n, tau)

    def excess(nu: float) -> float:
        return float(np.clip(values - nu, low, high).sum()) - 1.0

    nu = scipy.optimize.brentq(
        excess, float(values.min()) - high, float(values.max()) - low, xtol=1e-15
    )
    w = np.clip(values - nu, low, high)
    free = (w > low) & (w < high)
    if free.any():
        w[free] += (1.0 - w.sum()) / free.sum()
    return t.cast("FloatArray", w)


def clip_renormalize(
    p: npt.ArrayLike, tau: float, max_rounds: int = CLIP_MAX_ROUNDS
) -> FloatArray:
    """Threshold a probability vector into ``C(tau)``.

    Entries are clamped to the box, then the unclamped entries are
    rescaled to carry the remaining mass; this repeats until the vector
    is feasible. After ``max_rounds`` the exact projection is used.
    """
    _check_tau(tau)
    w = np.array(p, dtype=np.float64)
    n = w.shape[0]
    low, high = _box(n, tau)
    for _ in range(max_rounds):
        w = np.clip(w, low, high)
        total = w.sum()
        if abs(total - 1.0) <= WEIGHT_SUM_TOL:
            return t.cast("FloatArray", w)
        free = (w > low) & (w < high)
        if not free.any():
            break
        w[free] *= (1.0 - w[~free].sum()) / w[free].sum()
    logger.debug("clip-renormalize did not settle; projecting")
    return project_capped_simplex(p, tau)


class Scorer(torch.nn.Module):
    """Feed-forward scorer ``g(x_i)`` producing one logit per sample.

    Hidden layers are rectifiers; the output layer starts at zero, so the
    first weights emitted are uniform.
    """

    def __init__(
        self, in_features: int, hidden_sizes: t.Sequence[int], rng: np.random.Generator
    ) -> None:
        super().__init__()
        widths = [in_features, *hidden_sizes]
        layers: list[torch.nn.Module] = []
        for fan_in, fan_out in itertools.pairwise(widths):
            linear = torch.nn.Linear(fan_in, fan_out, dtype=torch.float64)
            bound = 1.0 / math.sqrt(fan_in)
            with torch.no_grad():
                linear.weight.copy_(
                    torch.from_numpy(rng.uniform(-bound, bound, (fan_out, fan_in)))
                )
                linear.bias.zero_()
            layers += [linear, torch.nn.ReLU()]
        head = torch.nn.Linear(widths[-1], 1, dtype=torch.float64)
        torch.nn.init.zeros_(head.weight)
        torch.nn.init.zeros_(head.bias)
        self.g = torch.nn.Sequential(*layers, head)
        self.in_features = in_features

    def forward(self, features: torch.Tensor) -> torch.Tensor:
        """Logits, one per row of ``features``."""
        out: torch.Tensor = self.g(features).squeeze(-1)
        return out


@dataclasses.dataclass
class ReweightModel:
    """Scorer network with the Adam state carried between outer epochs.

    Parameters
    ----------
    scorer : Scorer
        The network ``g``.
    optimizer : torch.optim.Optimizer
        Ascent state over the scorer's parameters.
    feed_losses : bool
        Whether the standardized loss is appended to each row.
    """

    scorer: Scorer
    optimizer: torch.optim.Optimizer
    feed_losses: bool = False

    @classmethod
    def initialize(
        cls,
        d: int,
        hidden_sizes: t.Sequence[int] = DEFAULT_SCORER_HIDDEN,
        *,
        feed_losses: bool = False,
        lr: float = 1e-2,
        seed: SeedLike = 0,
    ) -> ReweightModel:
        """Build a scorer for rows of ``d`` variables."""
        rng = np.random.default_rng(seed)
        scorer = Scorer(d + int(feed_losses), hidden_sizes, rng)
        optimizer = torch.optim.Adam(scorer.parameters(), lr=lr)
        return cls(scorer, optimizer, feed_losses)

    @property
    def in_features(self) -> int:
        """Width of the rows the scorer reads."""
        return self.scorer.in_features

    def features(self, x: DataMatrix, losses: FloatArray) -> FloatArray:
        """Scorer input: the sample rows, optionally with their loss."""
        if not self.feed_losses:
            return x.values
        spread = losses.std()
        scaled = (losses - losses.mean()) / spread if spread > 0 else losses * 0.0
        return np.column_stack((x.values, scaled))

    def logits(self, features: FloatArray) -> FloatArray:
        """Scores ``g(x_i)``."""
        with torch.no_grad():
            out = self.scorer(torch.tensor(features, dtype=torch.float64))
        return t.cast("FloatArray", out.numpy().copy())


def _softmax(
    model: ReweightModel, features: torch.Tensor, temperature: float
) -> torch.Tensor:
    g = model.scorer(features)
    if not bool(torch.isfinite(g).all()):
        msg = "reweighting scorer produced non-finite logits"
        raise NumericError(msg)
    return torch.softmax(g / temperature, dim=0)


def inner_weights_parametric(
    x: DataMatrix,
    losses: npt.ArrayLike,
    cfg: RescoreConfig,
    state: ReweightModel | None = None,
) -> tuple[SampleWeights, ReweightModel]:
    """Train the scorer to maximize ``sum_i w_i l_i`` and emit its weights.

    Runs ``cfg.k_inner`` Adam ascent steps on
    ``w = clip_renormalize(softmax(g(x_i) / T))``. The clip is passed
    through unchanged in the backward pass.

    Parameters
    ----------
    x : DataMatrix
        Observations fed to the scorer.
    losses : ArrayLike
        Per-sample losses at the current model.
    cfg : RescoreConfig
        ``tau``, ``k_inner``, ``temperature``, ``lr`` and scorer settings.
    state : ReweightModel | None
        Scorer to warm-start from; a fresh one is built if ``None``.

    Returns
    -------
    tuple[SampleWeights, ReweightModel]
        Feasible weights and the updated scorer. ``state`` is not mutated.

    Raises
    ------
    NumericError
        If the scorer emits non-finite logits.
    InvalidParameterError
        If the scorer does not match the data.
    """
    values = np.asarray(losses, dtype=np.float64)
    if values.shape != (x.n,):
        msg = f"{values.shape[0]} losses for {x.n} samples"
        raise InvalidParameterError(msg)
    if state is None:
        model = ReweightModel.initialize(
            x.d,
            cfg.hidden_sizes or DEFAULT_SCORER_HIDDEN,
            feed_losses=cfg.feed_losses,
            lr=cfg.lr,
            seed=cfg.seed,
        )
    else:
        model = copy.deepcopy(state)
    features = model.features(x, values)
    if features.shape[1] != model.in_features:
        expected = model.in_features
        msg = f"scorer expects {expected} features, got {features.shape[1]}"
        raise InvalidParameterError(msg)

    inputs = torch.tensor(features, dtype=torch.float64)
    target = torch.tensor(values, dtype=torch.float64)
    for _ in range(cfg.k_inner):
        model.optimizer.zero_grad()
        p = _softmax(model, inputs, cfg.temperature)
        w = torch.from_numpy(clip_renormalize(p.detach().numpy(), cfg.tau))
        # straight-through: the value of w with the gradient of p
        objective = (p + (w - p).detach()) @ target
        (-objective).backward()
        model.optimizer.step()
        logger.debug("parametric inner step: objective=%.6g", float(objective))
    with torch.no_grad():
        p = _softmax(model, inputs, cfg.temperature)
    w_final = clip_renormalize(p.numpy(), cfg.tau)
    return SampleWeights(w_final, tau=cfg.tau), model


def group_weight_summary(
    w: SampleWeights, labels: npt.ArrayLike
) -> dict[int, float]:
    """Mean weight of each labelled group.

    Examples
    --------
    >>> import numpy as np
    >>> w = SampleWeights(np.array([0.75, 0.25]), tau=0.5)
    >>> group_weight_summary(w, [0, 1])
    {0: 0.75, 1: 0.25}
    """
    groups = np.asarray(labels)
    if groups.shape != (w.n,):
        msg = f"{groups.shape[0]} labels for {w.n} weights"
        raise InvalidParameterError(msg)
    return {int(g): float(w.w[groups == g].mean()) for g in np.unique(groups)}
