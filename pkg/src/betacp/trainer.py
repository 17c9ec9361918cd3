"""Multiplicative training of the factor model on sparse observations.

Each parameter group (the three factor matrices, then the three bias
vectors) is rescaled by a nonnegative numerator/denominator ratio built
from powers of the current predictions, so nonnegativity is preserved
without any projection step. Updates are scheduled Gauss-Seidel style:
the prediction cache is fully refreshed after each group, and one sweep
visits all six groups.

Numeric guards: predictions are floored at ``epsilon_guard`` before the
(beta-2) and (beta-1) powers are taken — those exponents are negative
for small beta and an exact zero would otherwise be fatal — and update
denominators are floored at the same value. A parameter that still comes
out non-finite aborts training with the offending group, position,
numerator, and denominator (silently propagating NaN through a
multiplicative scheme corrupts everything downstream).

Zero-locking caveat: a parameter at exactly 0 stays 0 under any
multiplicative rescale, whatever the data say. Strictly positive
initialization (see ``init_random``) is the mitigation, not a fix.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import kernels
from .errors import TrainingDiverged
from .metrics import rmse
from .model import FactorModel, PredictionCache
from .objective import HyperParams, objective_parts

DEFAULT_EPSILON_GUARD = 1e-12

STOP_MAX_ITERS = "max_iters"
STOP_CONVERGED = "converged"


@dataclass
class TrainConfig:
    """Training-loop control knobs.

    Early stopping: an iteration "improves" when validation RMSE drops
    below the best seen so far by more than ``tol``; once validation has
    failed to improve for ``patience`` consecutive iterations, training
    stops. ``patience=None`` disables early stopping entirely.
    """

    hp: HyperParams = field(default_factory=HyperParams)
    max_iters: int = 100
    tol: float = 1e-6
    patience: int | None = 20
    epsilon_guard: float = DEFAULT_EPSILON_GUARD
    seed: int = 0

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters}")
        if not (np.isfinite(self.tol) and self.tol >= 0):
            raise ValueError(f"tol must be a nonnegative real, got {self.tol}")
        if self.patience is not None and self.patience < 0:
            raise ValueError(f"patience must be >= 0 or None, got {self.patience}")
        if not (np.isfinite(self.epsilon_guard) and self.epsilon_guard > 0):
            raise ValueError(f"epsilon_guard must be > 0, got {self.epsilon_guard}")


class IterationRecord(NamedTuple):
    iteration: int
    objective: float
    val_rmse: float
    elapsed_ms: float


@dataclass
class TrainReport:
    """Per-iteration trajectory plus how and where training stopped.

    ``swarm_rows`` is populated only by swarm-adapted runs, with the
    per-particle hyper-parameter history.
    """

    records: list[IterationRecord]
    stop_reason: str
    best_iteration: int
    best_val_rmse: float
    swarm_rows: list | None = None

    def to_csv(self, path, *, zero_elapsed: bool = False) -> None:
        """Write `iter,objective,val_rmse,elapsed_ms` rows.

        ``zero_elapsed`` replaces wall times with 0.0 so that two runs of
        the same seeded configuration produce byte-identical files.
        """
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("iter,objective,val_rmse,elapsed_ms\n")
            for rec in self.records:
                elapsed = 0.0 if zero_elapsed else rec.elapsed_ms
                fh.write(
                    f"{rec.iteration},{rec.objective!r},{rec.val_rmse!r},{elapsed!r}\n"
                )


def _entry_weights(values, yhat, beta, eps):
    """Per-entry numerator/denominator weights from floored predictions.

    Overflow is deliberately allowed to produce inf here: a non-finite
    parameter is detected (and reported) by _apply_ratio, which is a far
    better failure mode than a warning followed by silent NaN spread.
    """
    floored = np.maximum(yhat, eps)
    with np.errstate(over="ignore"):
        w_den = np.power(floored, beta - 1.0)
        w_num = values * np.power(floored, beta - 2.0)
    return w_num, w_den


def _apply_ratio(group, params, num, den, counts, reg, eps):
    """Rescale `params` in place by num/(den + reg·count·param), floored.

    Rows whose slice is empty (count 0) are left untouched: with no data
    there is no defined ratio, and zeroing them would be destructive.
    """
    den = den + reg * _broadcast_counts(counts, params) * params
    np.maximum(den, eps, out=den)
    with np.errstate(invalid="ignore", over="ignore"):
        ratio = num / den
        occupied = counts > 0
        params[occupied] *= ratio[occupied]
    if not np.isfinite(params).all():
        row, col = np.argwhere(~np.isfinite(np.atleast_2d(params)))[0]
        offender = (int(row), int(col)) if params.ndim == 2 else int(col)
        raise TrainingDiverged(
            group, offender,
            float(np.atleast_2d(num)[row, col]),
            float(np.atleast_2d(den)[row, col]),
        )


def _broadcast_counts(counts, params):
    return counts[:, None] if params.ndim == 2 else counts


def update_group_U(model, train, hp, cache, epsilon_guard=DEFAULT_EPSILON_GUARD):
    """One multiplicative rescale of every user factor row, then refresh."""
    w_num, w_den = _entry_weights(train.values, cache.yhat, hp.beta, epsilon_guard)
    num, den = kernels.mode_update_terms(
        train.i_idx, model.U.shape[0],
        model.S, train.j_idx, model.T, train.k_idx, w_num, w_den,
    )
    _apply_ratio("U", model.U, num, den, train.counts_by_user, hp.lam, epsilon_guard)
    cache.refresh(model)


def update_group_S(model, train, hp, cache, epsilon_guard=DEFAULT_EPSILON_GUARD):
    w_num, w_den = _entry_weights(train.values, cache.yhat, hp.beta, epsilon_guard)
    num, den = kernels.mode_update_terms(
        train.j_idx, model.S.shape[0],
        model.U, train.i_idx, model.T, train.k_idx, w_num, w_den,
    )
    _apply_ratio("S", model.S, num, den, train.counts_by_service, hp.lam, epsilon_guard)
    cache.refresh(model)


def update_group_T(model, train, hp, cache, epsilon_guard=DEFAULT_EPSILON_GUARD):
    w_num, w_den = _entry_weights(train.values, cache.yhat, hp.beta, epsilon_guard)
    num, den = kernels.mode_update_terms(
        train.k_idx, model.T.shape[0],
        model.U, train.i_idx, model.S, train.j_idx, w_num, w_den,
    )
    _apply_ratio("T", model.T, num, den, train.counts_by_time, hp.lam, epsilon_guard)
    cache.refresh(model)


def update_group_a(model, train, hp, cache, epsilon_guard=DEFAULT_EPSILON_GUARD):
    """One multiplicative rescale of the user biases, then refresh."""
    w_num, w_den = _entry_weights(train.values, cache.yhat, hp.beta, epsilon_guard)
    num, den = kernels.bias_update_terms(train.i_idx, model.a.shape[0], w_num, w_den)
    _apply_ratio("a", model.a, num, den, train.counts_by_user, hp.lam_b, epsilon_guard)
    cache.refresh(model)


def update_group_b(model, train, hp, cache, epsilon_guard=DEFAULT_EPSILON_GUARD):
    w_num, w_den = _entry_weights(train.values, cache.yhat, hp.beta, epsilon_guard)
    num, den = kernels.bias_update_terms(train.j_idx, model.b.shape[0], w_num, w_den)
    _apply_ratio("b", model.b, num, den, train.counts_by_service, hp.lam_b, epsilon_guard)
    cache.refresh(model)


def update_group_c(model, train, hp, cache, epsilon_guard=DEFAULT_EPSILON_GUARD):
    w_num, w_den = _entry_weights(train.values, cache.yhat, hp.beta, epsilon_guard)
    num, den = kernels.bias_update_terms(train.k_idx, model.c.shape[0], w_num, w_den)
    _apply_ratio("c", model.c, num, den, train.counts_by_time, hp.lam_b, epsilon_guard)
    cache.refresh(model)


_GROUP_UPDATES = (
    update_group_U, update_group_S, update_group_T,
    update_group_a, update_group_b, update_group_c,
)


def run_sweep(model, train, hp, cache, epsilon_guard=DEFAULT_EPSILON_GUARD):
    """One full training iteration: all six groups, cache refreshed between."""
    for update in _GROUP_UPDATES:
        update(model, train, hp, cache, epsilon_guard)


def train(model: FactorModel, data, cfg: TrainConfig):
    """Fit a copy of `model` on data.train for up to cfg.max_iters sweeps.

    Returns ``(best_model, report)`` where ``best_model`` is the iterate
    with the lowest validation RMSE (training can keep lowering the
    objective after generalization has peaked). With an empty validation
    set there is nothing to select or early-stop on: the final iterate is
    returned and ``val_rmse`` is recorded as NaN. The argument model is
    not mutated.
    """
    if model.dims != data.dims:
        raise ValueError(f"model dims {model.dims} do not match data dims {data.dims}")
    work = model.copy()
    train_t = data.train
    val = data.validation
    has_val = len(val) > 0
    cache = PredictionCache(train_t)
    cache.refresh(work)

    best_model = work.copy()
    best_val = math.inf
    best_iter = 0
    records: list[IterationRecord] = []
    stop_reason = STOP_MAX_ITERS
    non_improving = 0

    for iteration in range(1, cfg.max_iters + 1):
        t0 = time.perf_counter()
        run_sweep(work, train_t, cfg.hp, cache, cfg.epsilon_guard)
        # objective on the same floored predictions the updates consumed
        parts = objective_parts(
            work, train_t, cfg.hp, np.maximum(cache.yhat, cfg.epsilon_guard)
        )
        if has_val:
            val_rmse = rmse(work.predict(val.i_idx, val.j_idx, val.k_idx), val.values)
        else:
            val_rmse = math.nan
        elapsed_ms = (time.perf_counter() - t0) * 1e3
        records.append(IterationRecord(iteration, parts.total, val_rmse, elapsed_ms))

        if has_val:
            improved_by_tol = val_rmse < best_val - cfg.tol
            if val_rmse < best_val:
                best_val = val_rmse
                best_model = work.copy()
                best_iter = iteration
            if improved_by_tol:
                non_improving = 0
            else:
                non_improving += 1
                if cfg.patience is not None and non_improving >= cfg.patience:
                    stop_reason = STOP_CONVERGED
                    break

    if not has_val:
        best_model = work.copy()
        best_iter = len(records)
        best_val = math.nan
    return best_model, TrainReport(records, stop_reason, best_iter, best_val)
