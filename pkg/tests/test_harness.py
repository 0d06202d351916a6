"""Verification harness: reports, uniformity checks, Gronwall contraction,
identity suites and stochastic-integral constants."""

import math

import numpy as np
import pytest

from vortex.config import _single_mode_vector
from vortex.harness import (
    CheckResult,
    abs_brownian_sup_moment,
    bdg_report,
    convergence_check,
    discrete_sup_sq_oracle,
    energy_report,
    estimate_lipschitz_lg,
    estimate_sigma_lipschitz,
    gronwall_pair,
    gronwall_uniqueness,
    hy_uniformity,
    identity_suite,
    measure_gn_constant,
    run_paths,
    simulate_bdg_sups,
    weighted_identity_refinement,
    zeta_regularity,
)
from vortex.integrator import SolverConfig, TrajectoryStats
from vortex.noise import CovarianceSpec
from vortex.operators import biot_savart, random_divfree_field, random_scalar_field
from vortex.spectral import SpectralGrid, l2_norm

ZERO_NOISE = CovarianceSpec(((1, 0),), (0.1,), 0.5, "zero")
SMALL_NOISE = CovarianceSpec(((1, 0), (0, 1), (1, 1), (-1, 0)),
                             (0.2, 0.15, 0.1, 0.1), 0.5, "constant_one")


def make_stats(**kw):
    base = dict(sup_v_l2sq=1.0, int_grad_v=2.0, sup_xi_lq=0.5, sup_beta_l2=0.4,
                int_grad_beta=1.0, sup_beta_lq=0.6, zeta_holder=None,
                status="completed")
    base.update(kw)
    return TrajectoryStats(**base)


class TestCheckResult:
    def test_passed_iff_observed_below_bound(self):
        assert CheckResult.evaluate("x", 1.0, 2.0, 1, 0).passed
        assert not CheckResult.evaluate("x", 3.0, 2.0, 1, 0).passed
        assert not CheckResult.evaluate("x", math.nan, 2.0, 1, 0).passed
        assert CheckResult.evaluate("x", 0.0, 0.0, 1, 0).passed

    def test_json_payload_fields(self):
        d = CheckResult.evaluate("x", 1.0, 2.0, 5, 7, extra={"z": 1}).to_dict()
        assert sorted(d) == ["bound", "n_samples", "name", "observed", "passed", "seed"]


class TestRunPaths:
    def test_order_fixed(self):
        out = run_paths(lambda i: i * i, 7, workers=3)
        assert out == [i * i for i in range(7)]

    def test_single_worker_same_result(self):
        a = run_paths(lambda i: i + 1, 5, workers=1)
        b = run_paths(lambda i: i + 1, 5, workers=4)
        assert a == b


class TestEnergyReport:
    def test_zero_trajectories(self):
        stats = [make_stats(sup_v_l2sq=0.0, int_grad_v=0.0, sup_xi_lq=0.0,
                            sup_beta_l2=0.0, int_grad_beta=0.0, sup_beta_lq=0.0)
                 for _ in range(4)]
        out = energy_report(stats, {}, seed=1)
        assert all(r.passed for r in out)
        assert all(r.observed == 0.0 for r in out)

    def test_deterministic_stats_zero_stderr(self):
        stats = [make_stats() for _ in range(8)]
        out = energy_report(stats, {"sup_v_l2sq": 10.0}, seed=1)
        by_name = {r.name: r for r in out}
        assert by_name["energy.sup_v_l2sq"].extra["stderr"] == 0.0
        assert by_name["energy.sup_v_l2sq"].observed == 1.0

    def test_ceiling_violation_fails(self):
        stats = [make_stats() for _ in range(4)]
        out = energy_report(stats, {"int_grad_v": 0.5}, seed=1)
        by_name = {r.name: r for r in out}
        assert not by_name["energy.int_grad_v"].passed

    def test_blowup_fails_with_diagnostic(self):
        stats = [make_stats(), make_stats(status="blowup")]
        out = energy_report(stats, {}, seed=1)
        assert len(out) == 1
        assert not out[0].passed
        assert "blew up" in out[0].extra["diagnostic"]

    def test_requires_two_paths(self):
        with pytest.raises(ValueError):
            energy_report([make_stats()], {}, seed=1)

    def test_seed_split_stability(self, grid16):
        # disjoint seed batches agree on the means to within 20 percent
        from vortex.integrator import run_trajectory
        from vortex.noise import initial_rng
        from vortex.operators import random_scalar_field as rsf

        cfg = SolverConfig(dt=5e-3, t_end=0.1)
        xi0 = rsf(grid16, np.random.default_rng(3))

        def batch(seed):
            vals = []
            for p in range(8):
                res = run_trajectory(None, xi0, SMALL_NOISE, cfg, seed=seed,
                                     path_index=p, holder_stride=0)
                vals.append(res.stats.sup_v_l2sq)
            return np.mean(vals)

        a, b = batch(100), batch(200)
        assert abs(a - b) <= 0.2 * max(a, b)


class TestHyUniformity:
    def test_noise_off_ratio_exactly_one(self, grid16, rng):
        xi0 = random_scalar_field(grid16, rng)
        cfg = SolverConfig(dt=5e-3, t_end=0.05)
        out = hy_uniformity([1.0, 10.0, math.inf], ZERO_NOISE, None, xi0, cfg,
                            n_paths=2, base_seed=4)
        assert out.observed == 1.0
        assert out.passed

    def test_reduced_scale_uniformity(self, grid16, rng):
        xi0 = random_scalar_field(grid16, rng)
        cfg = SolverConfig(dt=5e-3, t_end=0.1)
        out = hy_uniformity([1.0, 10.0, math.inf], SMALL_NOISE, None, xi0, cfg,
                            n_paths=4, base_seed=4)
        assert out.passed
        assert out.observed >= 1.0

    def test_needs_two_levels(self, grid16, rng):
        xi0 = random_scalar_field(grid16, rng)
        cfg = SolverConfig(dt=5e-3, t_end=0.05)
        with pytest.raises(ValueError):
            hy_uniformity([1.0], ZERO_NOISE, None, xi0, cfg, 2, 0)


class TestZetaRegularity:
    def test_refuses_vacuous_parameters(self, grid16, rng):
        xi0 = random_scalar_field(grid16, rng)
        cfg = SolverConfig(dt=5e-3, t_end=0.05)
        # beta + delta/2 + 1/p = 0.2 + 0 + 0.25 = 0.45 >= (1-0.5)/2
        with pytest.raises(ValueError, match="refused"):
            zeta_regularity(SMALL_NOISE, None, xi0, cfg, [1.0, math.inf],
                            2, 0, beta=0.2, delta=0.0, p=4.0, q=2.0)

    def test_runs_and_reports_stability(self, grid16, rng):
        xi0 = random_scalar_field(grid16, rng)
        cfg = SolverConfig(dt=2e-3, t_end=0.128)
        out = zeta_regularity(SMALL_NOISE, None, xi0, cfg, [10.0, math.inf],
                              n_paths=6, base_seed=11,
                              beta=0.2, delta=0.0, p=32.0, q=2.0, stride=4)
        assert np.isfinite(out.observed)
        assert out.passed, out.extra
        assert len(out.extra["moment_means"]) == 2
        assert all(q > 0 for q in out.extra["quotient_means"])

    def test_quotient_stable_under_dt_halving(self, grid16, rng):
        # OU paths are (almost) 1/2-Holder; a beta=0.2 quotient stays finite
        # and grows less than 1.5x when dt halves
        xi0 = random_scalar_field(grid16, rng)
        quotients = []
        for dt in (4e-3, 2e-3):
            cfg = SolverConfig(dt=dt, t_end=0.128)
            out = zeta_regularity(SMALL_NOISE, None, xi0, cfg, [math.inf],
                                  n_paths=4, base_seed=13, beta=0.2, delta=0.0,
                                  p=32.0, q=2.0, stride=4)
            quotients.append(out.extra["quotient_means"][0])
        assert quotients[1] <= 1.5 * quotients[0]


class TestGronwall:
    def test_identical_data_machine_zero(self, grid16, rng):
        xi0 = random_scalar_field(grid16, rng)
        v0 = biot_savart(xi0)
        cfg = SolverConfig(dt=5e-3, t_end=0.05)
        out = gronwall_uniqueness(v0, v0, SMALL_NOISE, cfg, n_paths=3,
                                  base_seed=5, gn_trials=200, lg_trials=20)
        assert out.name == "gronwall.identical"
        assert out.observed == 0.0
        assert out.passed

    def test_noiseless_weighted_difference_monotone(self, grid16, rng):
        xi0 = random_scalar_field(grid16, rng)
        v0a = biot_savart(xi0)
        bump = random_divfree_field(grid16, rng)
        v0b = v0a + bump * (1e-2 / l2_norm(bump))
        cfg = SolverConfig(dt=1e-3, t_end=0.05)
        a = measure_gn_constant(grid16, 200) ** 2
        res = gronwall_pair(v0a, v0b, ZERO_NOISE, cfg, seed=0, path_index=0,
                            a_const=a, lg=0.0)
        m = res["m_series"]
        for x, y in zip(m, m[1:]):
            assert y <= x * (1 + 1e-6)

    def test_perturbed_supermartingale_small_scale(self, grid16, rng):
        xi0 = random_scalar_field(grid16, rng)
        v0a = biot_savart(xi0)
        bump = random_divfree_field(grid16, rng)
        v0b = v0a + bump * (1e-3 / l2_norm(bump))
        cfg = SolverConfig(dt=2e-3, t_end=0.1)
        out = gronwall_uniqueness(v0a, v0b, SMALL_NOISE, cfg, n_paths=8,
                                  base_seed=21, gn_trials=300, lg_trials=30)
        assert out.name == "gronwall.perturbed"
        assert out.passed, (out.observed, out.bound)


class TestMeasuredConstants:
    def test_gn_constant_plausible_range(self, grid16):
        c = measure_gn_constant(grid16, 300)
        assert 0.1 < c < 2.0

    def test_lipschitz_estimates(self, grid16):
        h = _single_mode_vector(grid16, (1, 0), 1.0)
        spec = CovarianceSpec(((1, 0),), (0.5,), 0.5, "rational_square", h)
        slope = estimate_sigma_lipschitz(spec, grid16, trials=100)
        assert 0.0 < slope <= 3.0 * math.sqrt(3.0) / 8.0 * (1 + 1e-9)
        lg = estimate_lipschitz_lg(spec, grid16, trials=100)
        assert lg > 0.0
        assert estimate_lipschitz_lg(ZERO_NOISE, grid16) == 0.0


class TestIdentitySuite:
    def test_full_suite_passes(self, grid64):
        results = identity_suite(grid64, trials=25, seed=12)
        for r in results:
            assert r.passed, (r.name, r.observed, r.bound)

    def test_weighted_refinement(self, grid64):
        out = weighted_identity_refinement(grid64, trials=3, seed=12)
        assert out.passed
        assert out.observed < 1.0

    def test_trials_validated(self, grid16):
        with pytest.raises(ValueError):
            identity_suite(grid16, trials=0)


class TestBdg:
    def test_zero_operator_skipped(self, grid16):
        spec = CovarianceSpec(((1, 0),), (0.3,), 0.5, "zero")
        v0 = biot_savart(random_scalar_field(grid16, np.random.default_rng(0)))
        out = bdg_report(spec, grid16, v0, 2.0, [2], 4, 0, 0.1, 0.01)
        assert len(out) == 1
        assert out[0].name.endswith("skipped")
        assert out[0].passed

    def test_scalar_mode_oracle(self, grid16):
        # single mode, q = 2, m = 2: the fitted constant is the Brownian
        # sup-square moment E[max_j B(t_j)^2] / T, known by quadrature of the
        # reflection series with the discrete-sampling correction
        spec = CovarianceSpec(((1, 0),), (0.4,), 0.5, "constant_one")
        v0 = biot_savart(random_scalar_field(grid16, np.random.default_rng(1)))
        T, dt, n_paths = 0.5, 1e-3, 600
        sups = simulate_bdg_sups(spec, grid16, v0, 2.0, n_paths, 77, T, dt)
        from vortex.noise import operator_norms

        phi = operator_norms(v0, spec, 0.0, 2.0)["radonifying"]
        ratios = sups[:, 1] ** 2 / (T * phi**2)
        target = discrete_sup_sq_oracle(T, dt) / T
        stderr = np.std(ratios, ddof=1) / math.sqrt(n_paths)
        assert abs(np.mean(ratios) - target) <= 3.0 * stderr

    def test_moment_validation(self, grid16, rng):
        v0 = biot_savart(random_scalar_field(grid16, rng))
        with pytest.raises(ValueError):
            bdg_report(SMALL_NOISE, grid16, v0, 4.0, [3], 4, 0, 0.1, 0.01)

    def test_small_scale_stability(self, grid16, rng):
        v0 = biot_savart(random_scalar_field(grid16, rng))
        out = bdg_report(SMALL_NOISE, grid16, v0, 4.0, [2], 64, 5, 0.2, 2e-3)
        assert len(out) == 1
        assert out[0].passed, out[0].extra


class TestBrownianOracle:
    def test_first_moment_closed_form(self):
        # E[sup_{t<=1} |B_t|] = sqrt(pi/2)
        assert abs_brownian_sup_moment(1.0) == pytest.approx(
            math.sqrt(math.pi / 2.0), rel=1e-5
        )

    def test_scaling_in_horizon(self):
        one = abs_brownian_sup_moment(2.0, 1.0)
        half = abs_brownian_sup_moment(2.0, 0.5)
        assert half == pytest.approx(0.5 * one, rel=1e-10)


class TestConvergenceCheck:
    def test_ratio_branch(self):
        out = convergence_check("c", 2e-3, 1e-3, 0, 1)
        assert out.passed
        assert not out.extra["at_floor"]
        out = convergence_check("c", 4e-3, 1e-3, 0, 1)
        assert not out.passed

    def test_floor_branch(self):
        out = convergence_check("c", 3e-13, 5e-13, 0, 1)
        assert out.passed
        assert out.extra["at_floor"]
