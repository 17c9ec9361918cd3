"""Particle-swarm hyper-parameter search and its trainer coupling."""

import math

import numpy as np
import pytest

from betacp.data import generate_synthetic, split
from betacp.errors import TrainingDiverged
from betacp.metrics import rmse
from betacp.model import init_random
from betacp.objective import HyperParams
from betacp.swarm import (
    DEFAULT_X_HI,
    DEFAULT_X_LO,
    Particle,
    SwarmConfig,
    SwarmState,
    adapt_train,
    fitness,
    step_velocity_position,
    swarm_search,
    update_bests,
    write_swarm_csv,
)
from betacp.trainer import STOP_CONVERGED, STOP_MAX_ITERS, TrainConfig, train

from conftest import assert_valid_params


class TestSwarmConfig:
    def test_defaults(self):
        cfg = SwarmConfig()
        assert cfg.q == 20
        assert cfg.c1 == 2.0 and cfg.c2 == 2.0
        assert cfg.omega == 0.726
        assert tuple(cfg.x_lo) == DEFAULT_X_LO
        assert tuple(cfg.x_hi) == DEFAULT_X_HI

    def test_velocity_bounds_derived_exactly(self):
        cfg = SwarmConfig(x_lo=(0.0, 0.0, 0.0), x_hi=(3.0, 1.0, 0.5))
        np.testing.assert_array_equal(cfg.v_hi, 0.2 * (np.array(cfg.x_hi) - np.array(cfg.x_lo)))
        np.testing.assert_array_equal(cfg.v_lo, -cfg.v_hi)

    def test_collapsed_bounds_allowed(self):
        cfg = SwarmConfig(x_lo=(1.0, 0.01, 0.01), x_hi=(1.0, 0.01, 0.01))
        np.testing.assert_array_equal(cfg.v_hi, np.zeros(3))

    @pytest.mark.parametrize(
        "kwargs",
        [
            dict(q=0),
            dict(max_rounds=0),
            dict(x_lo=(2.0, 0.0, 0.0), x_hi=(1.0, 1.0, 1.0)),
            dict(omega=np.nan),
        ],
    )
    def test_validation(self, kwargs):
        with pytest.raises(ValueError):
            SwarmConfig(**kwargs)


class TestStepVelocityPosition:
    def test_hand_step_with_clamping(self):
        # both attractors pull right: raw velocity 2*0.5*1 + 2*0.5*2 = 3,
        # clamped to the cap 0.2 * (3 - 0), and the position moves by it
        cfg = SwarmConfig(x_lo=(0.0, 0.0, 0.0), x_hi=(3.0, 3.0, 3.0))
        p = Particle(x=np.array([1.0, 1.0, 1.0]), v=np.zeros(3),
                     pbest=np.array([2.0, 2.0, 2.0]))

        class HalfRng:
            def random(self):
                return 0.5

        step_velocity_position(p, np.array([3.0, 3.0, 3.0]), cfg, HalfRng())
        np.testing.assert_array_equal(p.v, cfg.v_hi)
        np.testing.assert_array_equal(p.x, 1.0 + cfg.v_hi)

    def test_equilibrium_is_stable(self):
        cfg = SwarmConfig(x_lo=(0.0, 0.0, 0.0), x_hi=(1.0, 1.0, 1.0))
        x = np.array([0.4, 0.5, 0.6])
        p = Particle(x=x.copy(), v=np.zeros(3), pbest=x.copy())
        step_velocity_position(p, x.copy(), cfg, np.random.default_rng(0))
        np.testing.assert_array_equal(p.v, np.zeros(3))
        np.testing.assert_array_equal(p.x, x)

    def test_position_clamped_to_bounds_exactly(self):
        cfg = SwarmConfig(x_lo=(0.0, 0.0, 0.0), x_hi=(1.0, 1.0, 1.0))
        p = Particle(x=np.array([0.99, 0.99, 0.01]), v=np.zeros(3),
                     pbest=np.array([1.0, 1.0, 0.0]))
        rng = np.random.default_rng(1)
        for _ in range(30):
            step_velocity_position(p, np.array([1.0, 1.0, 0.0]), cfg, rng)
            assert (p.x >= cfg.x_lo).all() and (p.x <= cfg.x_hi).all()
            assert (p.v >= cfg.v_lo).all() and (p.v <= cfg.v_hi).all()
        # the attractors sit on the corner, so the walk must end up there
        np.testing.assert_array_equal(p.x, [1.0, 1.0, 0.0])

    def test_scalar_draws_shared_across_coordinates(self):
        """r1/r2 are drawn once per particle step, not per coordinate, so
        identical coordinate geometry must move identically."""
        cfg = SwarmConfig(x_lo=(0.0, 0.0, 0.0), x_hi=(2.0, 2.0, 2.0))
        p = Particle(x=np.array([0.5, 0.5, 0.5]), v=np.zeros(3),
                     pbest=np.array([1.0, 1.0, 1.0]))
        step_velocity_position(p, np.array([1.5, 1.5, 1.5]), cfg,
                               np.random.default_rng(7))
        assert p.x[0] == p.x[1] == p.x[2]


class TestUpdateBests:
    def make_state(self):
        x = np.array([1.0, 0.5, 0.2])
        particles = [Particle(x=x.copy(), v=np.zeros(3), pbest=x.copy())]
        return SwarmState(particles=particles, gbest=x.copy())

    def test_improvement_moves_both(self):
        state = self.make_state()
        assert update_bests(state, 0, 0.5)
        assert state.particles[0].pbest_fit == 0.5
        assert state.gbest_fit == 0.5

    def test_tie_updates(self):
        state = self.make_state()
        update_bests(state, 0, 0.5)
        state.particles[0].x = np.array([9.0, 9.0, 9.0])
        assert update_bests(state, 0, 0.5)  # <= semantics: a tie refreshes
        np.testing.assert_array_equal(state.gbest, [9.0, 9.0, 9.0])

    def test_worse_fitness_ignored(self):
        state = self.make_state()
        update_bests(state, 0, 0.5)
        assert not update_bests(state, 0, 0.75)
        assert state.gbest_fit == 0.5

    def test_non_finite_never_becomes_best(self):
        state = self.make_state()
        assert not update_bests(state, 0, math.inf)
        assert not update_bests(state, 0, math.nan)
        assert state.gbest_fit == math.inf  # untouched initial sentinel


def sphere(target):
    center = np.asarray(target)

    def evaluate(q, x, n):
        return float(np.sum((x - center) ** 2))

    return evaluate


class TestSwarmSearch:
    def test_gbest_never_increases(self):
        cfg = SwarmConfig(q=8, x_lo=(0.0, 0.0, 0.0), x_hi=(3.0, 1.0, 1.0),
                          max_rounds=60, seed=4)
        result = swarm_search(sphere((2.0, 0.5, 0.25)), cfg)
        trajectory = result.round_gbest
        assert all(b <= a for a, b in zip(trajectory, trajectory[1:]))

    def test_rows_cover_every_particle_every_round(self):
        cfg = SwarmConfig(q=5, max_rounds=7, seed=0)
        result = swarm_search(sphere((1.0, 0.05, 0.05)), cfg)
        assert len(result.rows) == 5 * 7
        assert [(r.round, r.particle) for r in result.rows[:6]] == [
            (1, 0), (1, 1), (1, 2), (1, 3), (1, 4), (2, 0),
        ]

    def test_gbest_column_is_round_final_minimum(self):
        # rounds are synchronous: every row of round n reports the group
        # best after ALL of round n's evaluations are merged
        cfg = SwarmConfig(q=6, max_rounds=20, seed=2)
        result = swarm_search(sphere((1.5, 0.03, 0.07)), cfg)
        best = math.inf
        by_round: dict[int, list] = {}
        for row in result.rows:
            by_round.setdefault(row.round, []).append(row)
        for n in sorted(by_round):
            rows = by_round[n]
            best = min(best, min(r.fitness for r in rows))
            assert all(r.gbest_fitness == best for r in rows)

    def test_deterministic(self):
        cfg = SwarmConfig(q=6, max_rounds=15, seed=11)
        a = swarm_search(sphere((1.0, 0.02, 0.02)), cfg)
        b = swarm_search(sphere((1.0, 0.02, 0.02)), cfg)
        assert a.round_gbest == b.round_gbest
        np.testing.assert_array_equal(a.gbest, b.gbest)

    def test_early_stop_on_stalled_gbest(self):
        cfg = SwarmConfig(q=4, max_rounds=500, seed=3)
        result = swarm_search(sphere((1.0, 0.05, 0.05)), cfg, tol=1e9, patience=6)
        assert result.stop_reason == STOP_CONVERGED
        assert result.rounds_run == 7  # round 1 improves; 6 stalls end it
        assert len(result.round_gbest) == 7

    def test_quarantine_rerandomizes_within_bounds(self):
        cfg = SwarmConfig(q=3, x_lo=(0.0, 0.0, 0.0), x_hi=(2.0, 1.0, 1.0),
                          max_rounds=10, seed=5)
        poisoned_rounds = []

        def evaluate(q, x, n):
            if q == 1 and n <= 3:
                raise TrainingDiverged("U", (0, 0), math.inf, 1.0)
            return float(np.sum((x - 0.5) ** 2))

        def on_quarantine(q):
            poisoned_rounds.append(q)

        result = swarm_search(evaluate, cfg, on_quarantine=on_quarantine)
        assert poisoned_rounds == [1, 1, 1]
        assert math.isfinite(result.gbest_fit)
        # quarantined fitness is recorded as inf but never becomes a best
        bad = [r for r in result.rows if r.particle == 1 and r.round <= 3]
        assert all(math.isinf(r.fitness) for r in bad)
        assert all(math.isfinite(r.gbest_fitness) for r in result.rows)

    def test_all_positions_within_bounds_every_round(self):
        cfg = SwarmConfig(q=6, x_lo=(0.0, 1e-4, 1e-4), x_hi=(3.0, 0.1, 0.1),
                          max_rounds=25, seed=9)
        seen = []

        def on_round(state):
            for p in state.particles:
                seen.append((
                    (p.x >= cfg.x_lo).all() and (p.x <= cfg.x_hi).all(),
                    (p.v >= cfg.v_lo).all() and (p.v <= cfg.v_hi).all(),
                ))

        swarm_search(sphere((1.0, 0.01, 0.01)), cfg, on_round=on_round)
        assert seen and all(x_ok and v_ok for x_ok, v_ok in seen)


def small_split(seed=5):
    data, _ = generate_synthetic((12, 10, 6), 2, 0.3, 0.02, seed=seed)
    return split(data, (0.7, 0.15, 0.15), seed=seed)


class TestAdaptTrain:
    def test_fitness_is_validation_rmse(self):
        ds = small_split()
        model = init_random(ds.dims, 2, seed=1)
        pred = model.predict(ds.validation.i_idx, ds.validation.j_idx,
                             ds.validation.k_idx)
        assert fitness(model, ds.validation) == rmse(pred, ds.validation.values)

    def test_returns_model_matching_reported_fitness(self):
        ds = small_split()
        scfg = SwarmConfig(q=4, max_rounds=6, seed=2)
        tcfg = TrainConfig(max_iters=6, tol=0.0, patience=None, seed=2)
        model, hp, report = adapt_train(ds, 2, scfg, tcfg)
        assert_valid_params(model)
        assert fitness(model, ds.validation) == report.best_val_rmse
        lo, hi = np.array(scfg.x_lo), np.array(scfg.x_hi)
        x = np.array(hp.as_tuple())
        assert (x >= lo).all() and (x <= hi).all()

    def test_records_track_gbest_trajectory(self):
        ds = small_split()
        scfg = SwarmConfig(q=3, max_rounds=5, seed=3)
        tcfg = TrainConfig(max_iters=5, tol=0.0, patience=None, seed=3)
        _, _, report = adapt_train(ds, 2, scfg, tcfg)
        assert len(report.records) == 5
        gbest = [r.val_rmse for r in report.records]
        assert all(b <= a for a, b in zip(gbest, gbest[1:]))
        assert report.best_val_rmse == gbest[-1]
        # swarm rows expose the raw per-particle fitness values
        assert len(report.swarm_rows) == 3 * 5

    def test_degenerate_swarm_equals_fixed_training(self):
        """Q=1 with collapsed bounds leaves no randomness in the swarm, so
        the run must coincide with plain training at that position —
        including when early stopping cuts both short."""
        ds = small_split()
        x0 = (1.6, 0.003, 0.002)
        tcfg = TrainConfig(hp=HyperParams(*x0), max_iters=40, tol=1e-5,
                           patience=3, seed=9)
        expected_model, expected_report = train(
            init_random(ds.dims, 2, tcfg.seed), ds, tcfg
        )
        scfg = SwarmConfig(q=1, x_lo=x0, x_hi=x0, max_rounds=40, seed=123)
        model, hp, report = adapt_train(ds, 2, scfg, tcfg)
        assert hp.as_tuple() == x0
        assert expected_report.stop_reason == report.stop_reason == STOP_CONVERGED
        assert len(expected_report.records) == len(report.records)
        for field in ("U", "S", "T", "a", "b", "c"):
            np.testing.assert_array_equal(
                getattr(model, field), getattr(expected_model, field)
            )
        raw_fit = [r.fitness for r in report.swarm_rows]
        assert raw_fit == [r.val_rmse for r in expected_report.records]

    def test_empty_validation_rejected(self):
        data, _ = generate_synthetic((8, 6, 5), 2, 0.3, 0.01, seed=7)
        ds = split(data, (0.8, 0.0, 0.2), seed=7)
        with pytest.raises(ValueError, match="validation"):
            adapt_train(ds, 2, SwarmConfig(q=2, max_rounds=2),
                        TrainConfig(max_iters=2))


class TestSwarmCsv:
    def test_format(self, tmp_path):
        ds = small_split()
        scfg = SwarmConfig(q=2, max_rounds=3, seed=4)
        tcfg = TrainConfig(max_iters=3, tol=0.0, patience=None, seed=4)
        _, _, report = adapt_train(ds, 2, scfg, tcfg)
        path = tmp_path / "swarm.csv"
        write_swarm_csv(report.swarm_rows, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "round,particle,beta,lambda,lambda_b,fitness,gbest_fitness"
        assert len(lines) == 1 + 2 * 3
        first = lines[1].split(",")
        assert first[0] == "1" and first[1] == "0"
        # full-precision floats round-trip through the text form
        assert float(first[5]) == report.swarm_rows[0].fitness
