"""Particle-swarm self-adaptation of the training hyper-parameters.

Each particle's position is one hyper-parameter triple
(divergence shape, factor penalty, bias penalty) and each particle owns
its own factor model. Per round, every particle advances its model by
one full multiplicative sweep under its current position, is scored by
validation RMSE, and then moves: velocity blends inertia with attraction
toward the particle's personal best and the swarm's best positions.
Rounds are synchronous — all particles are scored against the previous
round's group best, and bests are merged in particle-index order — so a
seeded run is exactly reproducible.

A particle whose sweep diverges (or whose fitness comes back non-finite)
is quarantined for that round: its score is treated as +inf so it cannot
contaminate the bests, its model is reset to the shared initial state,
and its position is re-randomized within bounds. The swarm keeps its
size, which the velocity dynamics assume.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .errors import TrainingDiverged
from .metrics import rmse
from .model import FactorModel, PredictionCache, init_random
from .objective import HyperParams
from .trainer import (
    STOP_CONVERGED,
    STOP_MAX_ITERS,
    IterationRecord,
    TrainConfig,
    TrainReport,
    run_sweep,
)

# Velocity bounds are tied to the search box: a particle may traverse at
# most this fraction of each coordinate's range per round.
VELOCITY_RANGE_FRACTION = 0.2

DEFAULT_X_LO = (0.0, 1e-4, 1e-4)
DEFAULT_X_HI = (3.0, 1e-1, 1e-1)


@dataclass
class SwarmConfig:
    """Swarm shape, dynamics constants, and the search box.

    Defaults: 20 particles, inertia 0.726, both attraction coefficients 2.
    The box spans the whole divergence family used in practice
    (0 through 3) and the usual penalty magnitudes for unit-scale data;
    both bounds are overridable. Collapsed coordinates (lo == hi) are
    allowed — they pin that coordinate and zero its velocity range.
    """

    q: int = 20
    omega: float = 0.726
    c1: float = 2.0
    c2: float = 2.0
    x_lo: Sequence[float] = DEFAULT_X_LO
    x_hi: Sequence[float] = DEFAULT_X_HI
    max_rounds: int = 50
    seed: int = 0
    v_lo: np.ndarray = field(init=False)
    v_hi: np.ndarray = field(init=False)

    def __post_init__(self):
        if self.q < 1:
            raise ValueError(f"need at least one particle, got q={self.q}")
        if self.max_rounds < 1:
            raise ValueError(f"max_rounds must be >= 1, got {self.max_rounds}")
        for name, val in (("omega", self.omega), ("c1", self.c1), ("c2", self.c2)):
            if not (np.isfinite(val) and val >= 0):
                raise ValueError(f"{name} must be a nonnegative real, got {val}")
        self.x_lo = np.asarray(self.x_lo, dtype=np.float64)
        self.x_hi = np.asarray(self.x_hi, dtype=np.float64)
        if self.x_lo.shape != self.x_hi.shape or self.x_lo.ndim != 1:
            raise ValueError("x_lo and x_hi must be 1-D and of equal length")
        if not (np.isfinite(self.x_lo).all() and np.isfinite(self.x_hi).all()):
            raise ValueError("position bounds must be finite")
        if np.any(self.x_lo > self.x_hi):
            raise ValueError(f"x_lo must be <= x_hi, got {self.x_lo} vs {self.x_hi}")
        self.v_hi = VELOCITY_RANGE_FRACTION * (self.x_hi - self.x_lo)
        self.v_lo = -self.v_hi

    @property
    def ndim(self) -> int:
        return self.x_lo.shape[0]


@dataclass
class Particle:
    x: np.ndarray
    v: np.ndarray
    pbest: np.ndarray
    pbest_fit: float = math.inf


@dataclass
class SwarmState:
    particles: list[Particle]
    gbest: np.ndarray
    gbest_fit: float = math.inf
    round: int = 0


class SwarmRow(NamedTuple):
    """One particle-round of the trajectory export."""

    round: int
    particle: int
    beta: float
    lam: float
    lam_b: float
    fitness: float
    gbest_fitness: float


@dataclass
class SwarmResult:
    gbest: np.ndarray
    gbest_fit: float
    best_round: int
    best_particle: int
    rows: list[SwarmRow]
    round_gbest: list[float]
    round_elapsed_ms: list[float]
    stop_reason: str
    rounds_run: int
    state: SwarmState


def fitness(model: FactorModel, validation) -> float:
    """Score a model by RMSE on the held-out set (same definition as eval)."""
    pred = model.predict(validation.i_idx, validation.j_idx, validation.k_idx)
    return rmse(pred, validation.values)


def step_velocity_position(p: Particle, gbest, cfg: SwarmConfig, rng) -> Particle:
    """Advance one particle: blend, clamp velocity, move, clamp position.

    The two attraction strengths r1, r2 are scalars drawn once per
    particle per round and shared across coordinates.
    """
    r1 = rng.random()
    r2 = rng.random()
    v = cfg.omega * p.v + cfg.c1 * r1 * (p.pbest - p.x) + cfg.c2 * r2 * (gbest - p.x)
    np.clip(v, cfg.v_lo, cfg.v_hi, out=v)
    x = p.x + v
    np.clip(x, cfg.x_lo, cfg.x_hi, out=x)
    p.v = v
    p.x = x
    return p


def update_bests(state: SwarmState, q: int, new_fit: float) -> bool:
    """Fold particle q's new fitness into its personal and the group best.

    Ties update (<= semantics). Non-finite fitnesses never touch the
    bests — those particles are being quarantined. Returns whether the
    group best moved.
    """
    if not math.isfinite(new_fit):
        return False
    p = state.particles[q]
    if new_fit <= p.pbest_fit:
        p.pbest_fit = new_fit
        p.pbest = p.x.copy()
    if new_fit <= state.gbest_fit:
        state.gbest_fit = new_fit
        state.gbest = p.x.copy()
        return True
    return False


def swarm_search(
    evaluate: Callable[[int, np.ndarray, int], float],
    cfg: SwarmConfig,
    *,
    tol: float = 0.0,
    patience: int | None = None,
    on_quarantine: Callable[[int], None] | None = None,
    on_round: Callable[[SwarmState], None] | None = None,
) -> SwarmResult:
    """Generic synchronous PSO over a 3-coordinate box.

    ``evaluate(q, x, round)`` scores particle q at position x; it may
    raise TrainingDiverged or return a non-finite value, either of which
    quarantines the particle for that round. Early stopping mirrors the
    trainer: once ``patience`` consecutive rounds fail to improve the
    group best by more than ``tol``, the search stops. ``on_round`` runs
    after each round's movement (inspection hook; it must not mutate the
    state).
    """
    if cfg.ndim != 3:
        raise ValueError(f"swarm_search expects 3-coordinate positions, got {cfg.ndim}")
    rng = np.random.default_rng(cfg.seed)
    particles = []
    for _ in range(cfg.q):
        x0 = rng.uniform(cfg.x_lo, cfg.x_hi)
        particles.append(Particle(x=x0, v=np.zeros(cfg.ndim), pbest=x0.copy()))
    state = SwarmState(particles=particles, gbest=particles[0].x.copy())

    rows: list[SwarmRow] = []
    round_gbest: list[float] = []
    round_elapsed: list[float] = []
    best_round = 0
    best_particle = -1
    stop_reason = STOP_MAX_ITERS
    non_improving = 0

    for n in range(1, cfg.max_rounds + 1):
        t0 = time.perf_counter()
        prev_gbest_fit = state.gbest_fit
        fits = []
        for q, p in enumerate(particles):
            try:
                fit = float(evaluate(q, p.x.copy(), n))
            except TrainingDiverged:
                fit = math.inf
            fits.append(fit if math.isfinite(fit) else math.inf)
        for q in range(cfg.q):
            if update_bests(state, q, fits[q]):
                best_round = n
                best_particle = q
        for q, p in enumerate(particles):
            rows.append(SwarmRow(
                n, q, float(p.x[0]), float(p.x[1]), float(p.x[2]),
                fits[q], state.gbest_fit,
            ))
        for q, p in enumerate(particles):
            if not math.isfinite(fits[q]):
                p.x = rng.uniform(cfg.x_lo, cfg.x_hi)
                p.v = np.zeros(cfg.ndim)
                if on_quarantine is not None:
                    on_quarantine(q)
        state.round = n
        round_gbest.append(state.gbest_fit)
        round_elapsed.append((time.perf_counter() - t0) * 1e3)

        improved_by_tol = state.gbest_fit < prev_gbest_fit - tol
        if improved_by_tol:
            non_improving = 0
        else:
            non_improving += 1
            if patience is not None and non_improving >= patience:
                stop_reason = STOP_CONVERGED
                break
        for p in particles:
            step_velocity_position(p, state.gbest, cfg, rng)
        if on_round is not None:
            on_round(state)

    return SwarmResult(
        gbest=state.gbest.copy(),
        gbest_fit=state.gbest_fit,
        best_round=best_round,
        best_particle=best_particle,
        rows=rows,
        round_gbest=round_gbest,
        round_elapsed_ms=round_elapsed,
        stop_reason=stop_reason,
        rounds_run=state.round,
        state=state,
    )


def adapt_train(data, rank: int, cfg: SwarmConfig, tcfg: TrainConfig):
    """Swarm-adapted training on a data split.

    Every particle starts from the same seeded model (so differences
    in fitness reflect hyper-parameters, not initial luck) and advances
    it by one sweep per round under its own position. Returns
    ``(model, hp, report)``: the snapshot that achieved the group-best
    validation RMSE, the position that produced it, and a per-round
    report whose trajectory rows carry the full hyper-parameter history.
    The report's objective column is NaN — with Q models in flight there
    is no single training objective; the trajectory export is the
    detailed record.
    """
    if len(data.validation) == 0:
        raise ValueError("hyper-parameter adaptation needs a non-empty validation set")
    if cfg.ndim != 3:
        raise ValueError("adapt_train searches (beta, lam, lam_b): bounds must have 3 coordinates")
    init = init_random(data.dims, rank, tcfg.seed)
    models = [init.copy() for _ in range(cfg.q)]
    caches = []
    for m in models:
        cache = PredictionCache(data.train)
        cache.refresh(m)
        caches.append(cache)

    best: dict = {"fit": math.inf, "model": None, "hp": None}

    def evaluate(q: int, x: np.ndarray, n: int) -> float:
        hp = HyperParams(beta=float(x[0]), lam=float(x[1]), lam_b=float(x[2]))
        run_sweep(models[q], data.train, hp, caches[q], tcfg.epsilon_guard)
        fit = fitness(models[q], data.validation)
        if math.isfinite(fit) and fit <= best["fit"]:
            best["fit"] = fit
            best["model"] = models[q].copy()
            best["hp"] = hp
        return fit

    def on_quarantine(q: int) -> None:
        models[q] = init.copy()
        caches[q].refresh(models[q])

    result = swarm_search(
        evaluate, cfg,
        tol=tcfg.tol, patience=tcfg.patience, on_quarantine=on_quarantine,
    )
    if best["model"] is None:
        raise TrainingDiverged(
            "swarm", None, math.inf, math.inf,
            message="every particle diverged in every round; no usable model was produced",
        )
    records = [
        IterationRecord(n + 1, math.nan, result.round_gbest[n], result.round_elapsed_ms[n])
        for n in range(len(result.round_gbest))
    ]
    report = TrainReport(
        records=records,
        stop_reason=result.stop_reason,
        best_iteration=result.best_round,
        best_val_rmse=result.gbest_fit,
        swarm_rows=result.rows,
    )
    return best["model"], best["hp"], report


def write_swarm_csv(rows: Sequence[SwarmRow], path) -> None:
    """Trajectory export: one row per particle per round."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("round,particle,beta,lambda,lambda_b,fitness,gbest_fitness\n")
        for r in rows:
            fh.write(
                f"{r.round},{r.particle},{r.beta!r},{r.lam!r},{r.lam_b!r},"
                f"{r.fitness!r},{r.gbest_fitness!r}\n"
            )
