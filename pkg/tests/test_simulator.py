import math

import numpy as np
import pytest

from harvest_mcam.chain import StepType, build_grid
from harvest_mcam.model import Constant, ControlLaw, Economics, HarvestModel, example_model
from harvest_mcam.simulator import (
    SimConfig,
    apply_policy,
    estimate_payoff,
    lift_policy,
    sample_switch,
    simulate_many,
    simulate_path,
    step_euler,
    tail_bound,
)
from harvest_mcam.solver import liquidation_policy, policy_from_arrays


def frozen():
    return HarvestModel(Constant((0.0,)), Constant((0.0,)), ((0.0,),), ControlLaw((0.0,)),
                        Economics(1.5, 0.5, 0.75, 0.05, 0.2))


class TestElementary:
    def test_euler_regime1(self):
        assert step_euler(example_model(2), 1.0, 1, 0.0, 0.01, 0.0) == pytest.approx(0.995, abs=1e-14)

    def test_euler_regime2(self):
        assert step_euler(example_model(2), 1.0, 2, 0.0, 0.01, 1.0) == pytest.approx(1.105, abs=1e-14)

    def test_euler_frozen(self):
        assert step_euler(frozen(), 0.7, 1, 0.0, 0.01, 2.3) == 0.7

    def test_switch(self):
        m = example_model(2)
        assert sample_switch(m, 1, 0.01, 0.005) == 2
        assert sample_switch(m, 1, 0.01, 0.5) == 1
        assert sample_switch(frozen(), 1, 0.01, 0.0) == 1

    def test_switch_dt_too_large(self):
        with pytest.raises(ValueError):
            sample_switch(example_model(2), 2, 1.0, 0.5)


class TestApplyPolicy:
    def test_projection(self, ex2):
        lifted = lift_policy(ex2.policy)
        L3 = min(x for x, s in zip(ex2.grid.live, ex2.policy.live_step[:, 0]) if s == StepType.HARVEST)
        c, jump = apply_policy(1.9, 1, lifted)
        assert c == 0.0
        assert 1.9 + jump == pytest.approx(L3 - ex2.grid.h)
        i = ex2.grid.index_of(round(L3 - ex2.grid.h, 10)) - ex2.grid.first_live
        assert ex2.policy.live_step[i, 0] != StepType.HARVEST

    def test_no_action_band(self, ex1):
        assert apply_policy(0.3, 1, lift_policy(ex1.policy)) == (0.0, 0.0)

    def test_direct_lookup(self):
        g = build_grid(0.2, 1.0, 0.1)
        n = g.n_live
        step = np.zeros((n, 1), int)
        step[-1] = StepType.HARVEST
        ctrl = np.full((n, 1), 3.0)
        assert apply_policy(0.5, 1, lift_policy(policy_from_arrays(g, step, ctrl))) == (3.0, 0.0)

    def test_renew_jump_up(self, ex1):
        c, jump = apply_policy(0.2, 1, lift_policy(ex1.policy))
        assert jump > 0 and c == 0.0


class TestPaths:
    def test_liquidation_exact(self):
        m = example_model(2)
        g = build_grid(0.2, 2.0, 0.01)
        rec = simulate_path(m, liquidation_policy(g, m), g, SimConfig(start=(1.0, 1), horizon=5.0))
        assert rec.discounted_payoff == pytest.approx(m.q * 0.8, abs=1e-12)
        assert rec.exit_time == 0.0 and not rec.censored
        assert rec.total_harvest == pytest.approx(0.8, abs=1e-12)

    def test_frozen_idle(self):
        m = frozen()
        g = build_grid(0.2, 1.0, 0.1)
        n = g.n_live
        step = np.zeros((n, 1), int)
        step[-1] = StepType.HARVEST
        rec = simulate_path(m, policy_from_arrays(g, step, np.zeros((n, 1))), g,
                            SimConfig(start=(0.5, 1), horizon=3.0, dt=0.01))
        assert rec.discounted_payoff == 0.0 and rec.censored and rec.exit_time == pytest.approx(3.0)

    def test_optimal_never_exits(self, ex2):
        cfg = SimConfig(start=(1.0, 1), horizon=20.0, n_paths=20, seed=3)
        recs = simulate_many(ex2.model, ex2.policy, ex2.grid, cfg, threads=1)
        assert all(r.censored for r in recs)

    def test_decomposition_and_log(self, ex2):
        cfg = SimConfig(start=(1.9, 2), horizon=10.0, seed=11)
        rec, log = simulate_path(ex2.model, ex2.policy, ex2.grid, cfg, log_rows=5000, log_stride=50)
        assert rec.discounted_payoff == pytest.approx(rec.running_part + rec.harvest_part - rec.renew_part)
        assert rec.total_harvest > 0 and rec.total_renew >= 0
        assert np.all(log[:, 4] >= 0) and np.all(log[:, 5] >= 0)
        assert np.all(log[:, 4] * log[:, 5] == 0)
        assert np.all(np.diff(log[:, 0]) >= 0)
        assert log[0, 4] == pytest.approx(1.9 - log[0, 1])  # time-zero harvest

    def test_exit_stops_control(self):
        m = example_model(1)
        g = build_grid(0.2, 2.0, 0.05)
        n = g.n_live
        step = np.zeros((n, 2), int)
        step[-1] = StepType.HARVEST
        cfg = SimConfig(start=(0.25, 1), horizon=50.0, seed=5)
        rec, log = simulate_path(m, policy_from_arrays(g, step, np.zeros((n, 2))), g, cfg, log_rows=100000)
        assert not rec.censored
        assert log[-1, 1] <= 0.2 and log[-1, 4] == 0 and log[-1, 5] == 0
        assert log[-1, 0] == pytest.approx(rec.exit_time)

    def test_seed_determinism(self, ex2):
        cfg = SimConfig(start=(1.0, 1), horizon=5.0, n_paths=4, seed=7)
        a = simulate_many(ex2.model, ex2.policy, ex2.grid, cfg, threads=1)
        b = simulate_many(ex2.model, ex2.policy, ex2.grid, cfg, threads=2)
        assert a == b

    def test_tail_bound(self, ex2):
        assert tail_bound(ex2.model, ex2.grid, 200.0) < 0.01
        assert tail_bound(ex2.model, ex2.grid, 0.0) > tail_bound(ex2.model, ex2.grid, 10.0)


class TestEstimate:
    def test_liquidation(self):
        m = example_model(2)
        g = build_grid(0.2, 2.0, 0.01)
        est = estimate_payoff(m, liquidation_policy(g, m), g, SimConfig(start=(0.6, 2), n_paths=50, horizon=5.0))
        assert est.mean == pytest.approx(m.q * 0.4, abs=1e-15) and est.std_error == 0.0

    def test_pair_reproducible(self, ex2):
        cfg = SimConfig(start=(1.0, 1), horizon=5.0, n_paths=2, seed=99)
        a = estimate_payoff(ex2.model, ex2.policy, ex2.grid, cfg)
        b = estimate_payoff(ex2.model, ex2.policy, ex2.grid, cfg)
        assert a == b

    def test_standard_error_scaling(self, ex2):
        base = SimConfig(start=(1.0, 1), horizon=10.0, n_paths=400, seed=1, dt=2e-3)
        small = estimate_payoff(ex2.model, ex2.policy, ex2.grid, base)
        big = estimate_payoff(ex2.model, ex2.policy, ex2.grid,
                              SimConfig(start=(1.0, 1), horizon=10.0, n_paths=800, seed=1, dt=2e-3))
        assert big.std_error / small.std_error == pytest.approx(1 / math.sqrt(2), rel=0.2)

    def test_needs_two_paths(self, ex2):
        with pytest.raises(ValueError):
            estimate_payoff(ex2.model, ex2.policy, ex2.grid, SimConfig(n_paths=1))

    def test_config_checks(self):
        with pytest.raises(ValueError):
            SimConfig(dt=0.0)
        with pytest.raises(ValueError):
            SimConfig(n_paths=0)
