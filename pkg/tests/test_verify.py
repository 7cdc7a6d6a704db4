import numpy as np
import pytest

from harvest_mcam.chain import build_grid, build_kernel
from harvest_mcam.model import ControlLaw, Economics, HarvestModel, LinearCoef, example_model
from harvest_mcam.simulator import SimConfig
from harvest_mcam.solver import ValueField, initialize, liquidation_policy, solve
from harvest_mcam.verify import (
    NoiseSweepSpec,
    VerifyReport,
    check_linearity_above,
    check_slopes,
    check_supersolution,
    drift_bound_constant,
    liquidation_distance,
    mc_cross_check,
    noise_sweep,
    refinement_check,
    refinement_errors,
    scaled_diffusion,
    supersolution_constant,
)


class TestSupersolution:
    def test_affine_bound(self, ex1):
        s = ex1
        M = supersolution_constant(s.model, s.grid, s.kernel)
        phi = s.model.q * s.grid.live[:, None] + M + np.zeros((1, 2))
        res = check_supersolution(phi, s.model, s.grid, s.kernel, V=s.V)
        assert res.passed
        assert np.all(s.V.live <= phi)

    def test_constant_is_minimal(self, ex1):
        s = ex1
        M = supersolution_constant(s.model, s.grid, s.kernel)
        phi = s.model.q * s.grid.live[:, None] + (M - 1e-3) + np.zeros((1, 2))
        assert not check_supersolution(phi, s.model, s.grid, s.kernel).passed

    def test_value_itself(self, ex2):
        s = ex2
        res = check_supersolution(s.V.live, s.model, s.grid, s.kernel, tol=1e-9)
        assert res.passed and abs(res.measured) <= 1e-9

    def test_zero_fails(self, ex1):
        s = ex1
        res = check_supersolution(np.zeros_like(s.V.live), s.model, s.grid, s.kernel)
        assert not res.passed and "violation" in res.detail

    def test_drift_constant(self):
        m = example_model(2)
        g = build_grid(0.2, 2.0, 0.01)
        K = drift_bound_constant(m, g)
        xs = g.live[:, None]
        assert np.all(m.drift_table(g.live) <= 0.05 * xs + K + 1e-12)


class TestSlopes:
    def test_example1(self, ex1):
        res = check_slopes(ex1.V, ex1.model)
        assert res.passed

    def test_liquidation_field(self):
        m = example_model(2)
        g = build_grid(0.2, 2.0, 0.005)
        V = initialize(g, m)
        d = np.diff(V.live, axis=0)
        assert np.allclose(d, m.q * g.h, rtol=0, atol=1e-14)
        assert check_slopes(V, m).passed

    def test_adversarial(self):
        m = example_model(2)
        g = build_grid(0.2, 2.0, 0.005)
        V = initialize(g, m)
        vals = V.values.copy()
        vals[g.index_of(1.0):, 1] += 3 * m.r * g.h - m.q * g.h  # one step of exactly 3 r h
        res = check_slopes(ValueField(g, vals), m)
        assert not res.passed and "x=0.995" in res.detail and "regime 2" in res.detail


class TestLinearity:
    def test_example2_regime2(self, ex2):
        s = ex2
        assert check_linearity_above(s.V, s.policy, s.model).passed
        imp = np.nonzero(s.policy.live_step[:, 1] == 1)[0]
        d = s.V.live[imp, 1] - s.V.live[imp - 1, 1]
        assert np.allclose(d, 0.005, rtol=0, atol=1e-9)

    def test_upper_is_harvest(self, ex1, ex2, ex3):
        for s in (ex1, ex2, ex3):
            assert np.all(s.policy.live_step[-1] == 1)

    def test_skipped_without_condition(self):
        m = HarvestModel(LinearCoef((1.0,)), LinearCoef((0.5,)), ((0.0,),), ControlLaw((0.0,)),
                         Economics(1.5, 0.5, 0.75, 0.05, 0.2))
        g = build_grid(0.2, 2.0, 0.05)
        V, P, _ = solve(m, g)
        res = check_linearity_above(V, P, m)
        assert res.skipped and res.passed and "skipped" in res.detail


class TestNoise:
    def test_exact_limit(self):
        m = example_model(2)
        g = build_grid(0.2, 2.0, 0.01)
        assert liquidation_distance(initialize(g, m), m, (0.2, 1.5)) == 0.0

    def test_families(self):
        spec = NoiseSweepSpec(mode="additive")
        assert scaled_diffusion(spec, 4.0, 2).value == (4.0, 4.0)
        spec = NoiseSweepSpec(mode="multiplicative")
        assert scaled_diffusion(spec, 4.0, 2).scale == 4.0

    def test_bad_spec(self):
        with pytest.raises(ValueError):
            NoiseSweepSpec(intensities=(4.0, 2.0))
        with pytest.raises(ValueError):
            NoiseSweepSpec(mode="other")

    @pytest.mark.parametrize("mode", ["multiplicative", "additive"])
    def test_coarse_sweep(self, mode):
        res = noise_sweep(example_model(2), NoiseSweepSpec(mode=mode, intensities=(1.0, 4.0, 16.0)), h=0.05)
        d = res.data["distance"]
        assert d[0] > d[1] > d[2]


class TestRefinement:
    def test_same_h(self):
        assert refinement_errors(example_model(1), (0.02, 0.02)) == [0.0]

    def test_example1(self):
        res = refinement_check(example_model(1), (0.02, 0.01, 0.005))
        e = res.data["errors"]
        assert res.passed and e[0] > e[1]


class TestMonteCarlo:
    def test_liquidation_exact(self):
        m = example_model(2)
        g = build_grid(0.2, 2.0, 0.01)
        k = build_kernel(m, g)
        V = initialize(g, m)
        res = mc_cross_check(m, g, V, liquidation_policy(g, m), [(1.0, 1), (0.6, 2)],
                             SimConfig(n_paths=10, horizon=5.0), eps_disc=0.0)
        assert res.passed
        assert all(r["se"] == 0.0 and r["gap"] < 1e-15 for r in res.data["rows"])
        assert k.zeta == 0.0

    def test_suboptimal_dominated(self, ex2):
        s = ex2
        pol = liquidation_policy(s.grid, s.model)
        res = mc_cross_check(s.model, s.grid, s.V, pol, [(1.0, 1)], SimConfig(n_paths=10, horizon=5.0))
        row = res.data["rows"][0]
        assert row["mean"] <= row["V"] + 3 * row["se"] + 0.05


def test_report_rendering(tmp_path, ex1):
    rep = VerifyReport()
    rep.add(check_slopes(ex1.V, ex1.model))
    assert rep.passed and rep.to_text().startswith("[PASS] slopes")
    rep.write_csv(tmp_path / "r.csv")
    assert (tmp_path / "r.csv").read_text(encoding="utf-8").splitlines()[0].startswith("name,status,measured")


def test_refinement_spacings():
    from harvest_mcam.errors import ConfigurationError
    from harvest_mcam.verify import refinement_spacings

    m = example_model(1)
    assert refinement_spacings(m, 0.005, 2.0) == (0.02, 0.01, 0.005)
    assert refinement_spacings(m, 0.02, 2.0) == (0.02, 0.01, 0.005)
    assert refinement_spacings(m, 0.05, 2.0) == pytest.approx((0.2, 0.1, 0.05))
    assert refinement_spacings(m, 0.04, 2.0) == pytest.approx((0.04, 0.02, 0.01))
    with pytest.raises(ConfigurationError):
        refinement_errors(m, (0.08, 0.04))
