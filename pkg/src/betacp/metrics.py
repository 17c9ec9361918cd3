"""Prediction accuracy metrics.

These two definitions are the single source of truth: the swarm's
fitness function and the CLI's `eval` subcommand both call them, so the
numbers agree bit-for-bit everywhere they appear.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np


class EvalResult(NamedTuple):
    mae: float
    rmse: float
    count: int


def _paired(pred, truth):
    pred = np.asarray(pred, dtype=np.float64).ravel()
    truth = np.asarray(truth, dtype=np.float64).ravel()
    if pred.shape[0] != truth.shape[0]:
        raise ValueError(
            f"length mismatch: {pred.shape[0]} predictions vs {truth.shape[0]} truths"
        )
    if pred.shape[0] == 0:
        raise ValueError("metrics are undefined on empty inputs")
    return pred, truth


def mae(pred, truth) -> float:
    """Mean absolute deviation between paired predictions and truths."""
    pred, truth = _paired(pred, truth)
    return float(np.mean(np.abs(truth - pred)))


def rmse(pred, truth) -> float:
    """Root mean squared deviation between paired predictions and truths."""
    pred, truth = _paired(pred, truth)
    return float(np.sqrt(np.mean(np.square(truth - pred))))


def evaluate(pred, truth) -> EvalResult:
    pred, truth = _paired(pred, truth)
    return EvalResult(mae=mae(pred, truth), rmse=rmse(pred, truth), count=pred.shape[0])
