"""Exception hierarchy for DAG learning and reweighting."""

from __future__ import annotations

import typing as t


class RescoreError(Exception):
    """Base class for every error raised by :mod:`dag_rescore`."""


class InvalidParameterError(RescoreError, ValueError):
    """An argument violates a documented precondition.

    Raised for out-of-range hyperparameters, dimension mismatches,
    non-finite inputs and cyclic graphs where a DAG is required.
    """


class NumericError(RescoreError, ArithmeticError):
    """A numerical procedure failed or diverged.

    Parameters
    ----------
    message : str
        Human-readable description.
    diagnostics : Mapping[str, Any] | None
        Optimizer state at the point of failure (``h``, ``rho``, ...).
    epoch : int | None
        Outer epoch of the reweighting loop, when raised inside it.
    """

    def __init__(
        self,
        message: str,
        *,
        diagnostics: t.Mapping[str, t.Any] | None = None,
        epoch: int | None = None,
    ) -> None:
        super().__init__(message)
        self.diagnostics: dict[str, t.Any] = dict(diagnostics or {})
        self.epoch = epoch


class ResourceLimitError(RescoreError):
    """The requested problem size exceeds a configured cap."""
