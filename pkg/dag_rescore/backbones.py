"""Static registry of differentiable DAG learners."""

from __future__ import annotations

from dag_rescore.learners import Backbone, LinearNll, LinearNotears
from dag_rescore.mlp import MlpNotears
from dag_rescore.models import LearnerConfig
from dag_rescore.structures import DataMatrix, FitResult, SampleWeights

_REGISTRY: dict[str, Backbone] = {}


def _register(backbone: Backbone) -> None:
    """Register a backbone under its name."""
    _REGISTRY[backbone.name] = backbone


def get_backbone(name: str) -> Backbone:
    """Look up a backbone by name.

    Parameters
    ----------
    name : str
        Backbone identifier, e.g. ``"linear_notears"``.

    Returns
    -------
    Backbone
        The registered learner.

    Raises
    ------
    KeyError
        If the backbone is not registered.
    """
    if name not in _REGISTRY:
        available = ", ".join(sorted(_REGISTRY))
        msg = f"Unknown backbone {name!r}. Available: {available}"
        raise KeyError(msg)
    return _REGISTRY[name]


def list_backbones() -> list[str]:
    """Return the sorted registered backbone names."""
    return sorted(_REGISTRY)


def fit_backbone(
    name: str,
    x: DataMatrix,
    w: SampleWeights | None = None,
    cfg: LearnerConfig | None = None,
) -> FitResult:
    """Fit the named backbone with fixed sample weights."""
    return get_backbone(name).fit(x, w, cfg or LearnerConfig())


_register(LinearNotears())
_register(LinearNll())
_register(MlpNotears())
