"""Beta-divergence loss, the regularized training objective, and its gradients.

The data-fit term is the beta-divergence d_beta(y || yhat), a one-parameter
family of discrepancies: beta = 0 is Itakura-Saito, beta = 1 is
Kullback-Leibler, beta = 2 is half the squared Euclidean distance. The
full objective adds L2 penalties on the factor rows (weight ``lam``) and
on the biases (weight ``lam_b``), counted once per *observed entry* so
heavily observed rows are penalized proportionally to their data support —
the same weighting that appears as a |slice| factor in the trainer's
update denominators.

The analytic gradients here exist for verification (finite-difference
cross-checks and update-direction tests); training itself never consumes
them.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .model import FactorModel, PredictionCache

# Dispatch window around the two singular parameter values. The generic
# closed form divides by beta*(beta-1) and loses precision as either
# factor approaches zero, so anything this close to 0 or 1 uses the
# dedicated limit branch instead.
BRANCH_TOL = 1e-9


@dataclass(frozen=True)
class HyperParams:
    """One training configuration: divergence shape and penalty weights.

    ``lam`` and ``lam_b`` are the factor and bias L2 weights (the
    natural names shadow a Python keyword).
    """

    beta: float = 2.0
    lam: float = 0.01
    lam_b: float = 0.01

    def __post_init__(self):
        if not np.isfinite(self.beta):
            raise ValueError(f"beta must be finite, got {self.beta}")
        if not (np.isfinite(self.lam) and self.lam >= 0):
            raise ValueError(f"lam must be a nonnegative real, got {self.lam}")
        if not (np.isfinite(self.lam_b) and self.lam_b >= 0):
            raise ValueError(f"lam_b must be a nonnegative real, got {self.lam_b}")

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.beta, self.lam, self.lam_b)


def divergence_array(y, yhat, beta: float) -> np.ndarray:
    """Elementwise d_beta(y || yhat) for nonnegative y and positive yhat.

    y = 0 is fine for beta > 0 (at beta = 1 via the limit
    y*log(y) -> 0); at beta = 0 the log of the ratio is undefined for
    y = 0, which is an error. For beta < 0 the divergence at y = 0 is
    +inf, the correct limit.
    """
    y = np.asarray(y, dtype=np.float64)
    yhat = np.asarray(yhat, dtype=np.float64)
    if yhat.size and yhat.min() <= 0:
        raise ValueError("yhat must be strictly positive")
    beta = float(beta)
    if abs(beta) <= BRANCH_TOL:
        if y.size and y.min() <= 0:
            raise ValueError("Itakura-Saito divergence (beta=0) is undefined for y=0")
        ratio = y / yhat
        return ratio - np.log(ratio) - 1.0
    if abs(beta - 1.0) <= BRANCH_TOL:
        observed = y > 0
        y_safe = np.where(observed, y, 1.0)
        log_term = np.where(observed, y * np.log(y_safe / yhat), 0.0)
        return log_term - y + yhat
    with np.errstate(divide="ignore"):  # 0**negative -> inf, the correct limit
        y_pow = np.power(y, beta)
    return (
        y_pow + (beta - 1.0) * np.power(yhat, beta) - beta * y * np.power(yhat, beta - 1.0)
    ) / (beta * (beta - 1.0))


def divergence_scalar(y: float, yhat: float, beta: float) -> float:
    """d_beta(y || yhat) for one pair; zero iff y == yhat."""
    return float(divergence_array(np.float64(y), np.float64(yhat), beta))


class ObjectiveParts(NamedTuple):
    """The three independently computed summands of the objective."""

    data_fit: float
    factor_penalty: float
    bias_penalty: float

    @property
    def total(self) -> float:
        return self.data_fit + self.factor_penalty + self.bias_penalty


def _resolve_yhat(model, tensor, cache) -> np.ndarray:
    if cache is None:
        cache = PredictionCache(tensor)
        cache.refresh(model)
    yhat = cache.yhat if hasattr(cache, "yhat") else np.asarray(cache, dtype=np.float64)
    if yhat.shape[0] != len(tensor):
        raise ValueError(
            f"cache holds {yhat.shape[0]} predictions for {len(tensor)} observations"
        )
    if yhat.size and yhat.min() <= 0:
        raise ValueError(
            "cached prediction <= 0: the model has numerically collapsed"
        )
    return yhat


def objective_parts(model: FactorModel, tensor, hp: HyperParams, cache=None) -> ObjectiveParts:
    """Data fit, factor penalty, and bias penalty as separate exact sums.

    `cache` may be a PredictionCache, a raw prediction array, or None
    (predictions are then computed from the model).
    """
    yhat = _resolve_yhat(model, tensor, cache)
    data_fit = float(np.sum(divergence_array(tensor.values, yhat, hp.beta)))
    ii, jj, kk = tensor.i_idx, tensor.j_idx, tensor.k_idx
    row_u = np.einsum("ir,ir->i", model.U, model.U)
    row_s = np.einsum("ir,ir->i", model.S, model.S)
    row_t = np.einsum("ir,ir->i", model.T, model.T)
    # single multiply by the weight AFTER summing, so scaling lam scales
    # the penalty exactly (floating-point linearity in the weight)
    factor_penalty = hp.lam * float(np.sum(row_u[ii] + row_s[jj] + row_t[kk]))
    bias_penalty = hp.lam_b * float(
        np.sum(np.square(model.a)[ii] + np.square(model.b)[jj] + np.square(model.c)[kk])
    )
    return ObjectiveParts(data_fit, factor_penalty, bias_penalty)


def objective(model: FactorModel, tensor, hp: HyperParams, cache=None) -> float:
    """Total regularized objective over the observed entries."""
    return objective_parts(model, tensor, hp, cache).total


def _fit_derivative(y: np.ndarray, yhat: np.ndarray, beta: float) -> np.ndarray:
    """d/d(yhat) of the divergence: yhat^(beta-1) - y*yhat^(beta-2).

    One expression covers every beta, including the 0 and 1 branches
    (their derivatives are the beta -> 0, 1 specializations of it).
    """
    return np.power(yhat, beta - 1.0) - y * np.power(yhat, beta - 2.0)


def _slice_yhat(model, tensor, cache, positions) -> tuple[np.ndarray, np.ndarray]:
    yhat = _resolve_yhat(model, tensor, cache)
    return tensor.values[positions], yhat[positions]


def grad_u(model, tensor, hp, cache, i: int, r: int) -> float:
    """Partial derivative of the objective w.r.t. the user factor U[i, r]."""
    positions = tensor.rows_by_user[i]
    if positions.size == 0:
        return 0.0
    y, yhat = _slice_yhat(model, tensor, cache, positions)
    w = model.S[tensor.j_idx[positions], r] * model.T[tensor.k_idx[positions], r]
    return float(
        np.sum(w * _fit_derivative(y, yhat, hp.beta))
        + 2.0 * hp.lam * model.U[i, r] * positions.size
    )


def grad_s(model, tensor, hp, cache, j: int, r: int) -> float:
    positions = tensor.rows_by_service[j]
    if positions.size == 0:
        return 0.0
    y, yhat = _slice_yhat(model, tensor, cache, positions)
    w = model.U[tensor.i_idx[positions], r] * model.T[tensor.k_idx[positions], r]
    return float(
        np.sum(w * _fit_derivative(y, yhat, hp.beta))
        + 2.0 * hp.lam * model.S[j, r] * positions.size
    )


def grad_t(model, tensor, hp, cache, k: int, r: int) -> float:
    positions = tensor.rows_by_time[k]
    if positions.size == 0:
        return 0.0
    y, yhat = _slice_yhat(model, tensor, cache, positions)
    w = model.U[tensor.i_idx[positions], r] * model.S[tensor.j_idx[positions], r]
    return float(
        np.sum(w * _fit_derivative(y, yhat, hp.beta))
        + 2.0 * hp.lam * model.T[k, r] * positions.size
    )


def grad_a(model, tensor, hp, cache, i: int) -> float:
    """Partial derivative w.r.t. the user bias a[i] (weight 1 per entry)."""
    positions = tensor.rows_by_user[i]
    if positions.size == 0:
        return 0.0
    y, yhat = _slice_yhat(model, tensor, cache, positions)
    return float(
        np.sum(_fit_derivative(y, yhat, hp.beta))
        + 2.0 * hp.lam_b * model.a[i] * positions.size
    )


def grad_b(model, tensor, hp, cache, j: int) -> float:
    positions = tensor.rows_by_service[j]
    if positions.size == 0:
        return 0.0
    y, yhat = _slice_yhat(model, tensor, cache, positions)
    return float(
        np.sum(_fit_derivative(y, yhat, hp.beta))
        + 2.0 * hp.lam_b * model.b[j] * positions.size
    )


def grad_c(model, tensor, hp, cache, k: int) -> float:
    positions = tensor.rows_by_time[k]
    if positions.size == 0:
        return 0.0
    y, yhat = _slice_yhat(model, tensor, cache, positions)
    return float(
        np.sum(_fit_derivative(y, yhat, hp.beta))
        + 2.0 * hp.lam_b * model.c[k] * positions.size
    )
