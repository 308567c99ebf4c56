"""Differentiable DAG learning with adaptive sample reweighting."""

from __future__ import annotations

from dag_rescore.backbones import fit_backbone, get_backbone, list_backbones
from dag_rescore.bench import run_benchmark
from dag_rescore.metrics import evaluate_graph, shd, sid
from dag_rescore.rescore import build_rescore_graph, fit_rescore

__all__ = [
    "build_rescore_graph",
    "evaluate_graph",
    "fit_backbone",
    "fit_rescore",
    "get_backbone",
    "list_backbones",
    "run_benchmark",
    "shd",
    "sid",
]
