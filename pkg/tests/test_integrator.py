"""Exponential-Euler steps, the OU/remainder splitting and full trajectories."""

import math

import numpy as np
import pytest

from vortex.integrator import (
    BlowupError,
    CoupledState,
    SolverConfig,
    beta_step,
    holder_quotient,
    ou_step,
    run_trajectory,
    velocity_step,
    vorticity_step,
)
from vortex.noise import CovarianceSpec, NoiseBasis, WienerIncrement, sample_increment
from vortex.operators import biot_savart, curl, grad_norm_l2, random_scalar_field
from vortex.spectral import (
    ScalarField,
    SpectralGrid,
    VectorField,
    l2_norm,
    to_physical,
    to_spectral,
    zero_scalar,
    zero_vector,
)

ZERO_NOISE = CovarianceSpec(((1, 0),), (0.1,), 0.5, "zero")
UNIT_NOISE = CovarianceSpec(((1, 0), (0, 1), (1, 1)), (0.2, 0.15, 0.1), 0.5,
                            "constant_one")


def state_from(grid, v=None, xi=None, zeta=None, beta=None, t=0.0):
    z = zero_scalar(grid)
    return CoupledState(t, v if v is not None else zero_vector(grid),
                        xi if xi is not None else z,
                        zeta if zeta is not None else z,
                        beta if beta is not None else z)


def cos_x1(grid, amplitude=1.0):
    xx, _ = grid.meshgrid()
    return to_spectral(amplitude * np.cos(xx), grid)


class TestSolverConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            SolverConfig(dt=0.0, t_end=1.0)
        with pytest.raises(ValueError):
            SolverConfig(dt=0.5, t_end=0.1)
        with pytest.raises(ValueError):
            SolverConfig(dt=0.3, t_end=1.0)  # not an integral number of steps
        with pytest.raises(ValueError):
            SolverConfig(dt=0.1, t_end=1.0, scheme="rk4")
        assert SolverConfig(dt=1e-3, t_end=0.5).n_steps == 500


class TestVelocityStep:
    def test_zero_stays_zero(self, grid16):
        cfg = SolverConfig(dt=0.01, t_end=0.1)
        st = state_from(grid16)
        dW = sample_increment(0, 0, 0, ZERO_NOISE, cfg.dt)
        assert l2_norm(velocity_step(st, dW, ZERO_NOISE, cfg)) == 0.0

    def test_single_mode_exact_decay(self, grid32):
        # v = (0, sin x1) has B(v,v) = 0: one step is exactly exp(-dt)
        cfg = SolverConfig(dt=1e-3, t_end=0.1)
        xi = cos_x1(grid32)
        v = biot_savart(xi)
        st = state_from(grid32, v=v, xi=xi, beta=xi)
        dW = sample_increment(0, 0, 0, ZERO_NOISE, cfg.dt)
        out = velocity_step(st, dW, ZERO_NOISE, cfg)
        expect = math.exp(-cfg.dt) * l2_norm(v)
        assert abs(l2_norm(out) - expect) <= 1e-12 * expect

    def test_discrete_energy_inequality(self, grid32, rng):
        # ||v||^2 - ||v+||^2 >= (2 dt / 1.1) ||grad v+||^2 without noise
        cfg = SolverConfig(dt=1e-3, t_end=0.1)
        for _ in range(10):
            xi = random_scalar_field(grid32, rng, amplitude=rng.uniform(0.5, 2.0))
            v = biot_savart(xi)
            st = state_from(grid32, v=v, xi=xi, beta=xi)
            dW = sample_increment(0, 0, 0, ZERO_NOISE, cfg.dt)
            out = velocity_step(st, dW, ZERO_NOISE, cfg)
            drop = l2_norm(v) ** 2 - l2_norm(out) ** 2
            assert drop >= 2.0 * cfg.dt * grad_norm_l2(out) ** 2 / 1.1

    def test_blowup_guard(self, grid16, rng):
        cfg = SolverConfig(dt=0.01, t_end=0.1, blowup_threshold=1e-12)
        xi = random_scalar_field(grid16, rng)
        st = state_from(grid16, v=biot_savart(xi), xi=xi, beta=xi)
        dW = sample_increment(0, 0, 0, ZERO_NOISE, cfg.dt)
        with pytest.raises(BlowupError):
            velocity_step(st, dW, ZERO_NOISE, cfg)


class TestVorticityStep:
    def test_zero_state(self, grid16):
        cfg = SolverConfig(dt=0.01, t_end=0.1)
        st = state_from(grid16)
        dW = sample_increment(0, 0, 0, ZERO_NOISE, cfg.dt)
        assert l2_norm(vorticity_step(st, dW, ZERO_NOISE, cfg)) == 0.0

    def test_parallel_flow_exact_decay(self, grid32):
        # xi = cos x1 with v = biot_savart(xi): F(v, xi) = 0 identically
        cfg = SolverConfig(dt=1e-3, t_end=0.1)
        xi = cos_x1(grid32)
        st = state_from(grid32, v=biot_savart(xi), xi=xi, beta=xi)
        dW = sample_increment(0, 0, 0, ZERO_NOISE, cfg.dt)
        out = vorticity_step(st, dW, ZERO_NOISE, cfg)
        expect = math.exp(-cfg.dt) * l2_norm(xi)
        assert abs(l2_norm(out) - expect) <= 1e-12 * expect

    def test_mean_zero_preserved(self, grid32, rng):
        cfg = SolverConfig(dt=1e-2, t_end=0.1)
        xi = random_scalar_field(grid32, rng)
        st = state_from(grid32, v=biot_savart(xi), xi=xi, beta=xi)
        dW = sample_increment(4, 0, 0, UNIT_NOISE, cfg.dt)
        out = vorticity_step(st, dW, UNIT_NOISE, cfg)
        assert out.coeffs[0, 0] == 0.0


class TestOuStep:
    def test_zero_noise_pure_decay(self, grid32, rng):
        cfg = SolverConfig(dt=0.01, t_end=0.1)
        zeta = random_scalar_field(grid32, rng)
        st = state_from(grid32, zeta=zeta)
        dW = sample_increment(0, 0, 0, ZERO_NOISE, cfg.dt)
        out = ou_step(st, dW, ZERO_NOISE, cfg)
        decay = np.exp(-zeta.grid.ksq * cfg.dt)
        assert np.max(np.abs(out.coeffs - decay * zeta.coeffs)) < 1e-15

    def test_starts_and_stays_zero_without_noise(self, grid16):
        cfg = SolverConfig(dt=0.01, t_end=0.1)
        st = state_from(grid16)
        dW = sample_increment(0, 0, 0, ZERO_NOISE, cfg.dt)
        assert l2_norm(ou_step(st, dW, ZERO_NOISE, cfg)) == 0.0

    def test_stationary_variance_oracle(self, grid16):
        # single mode |k|^2 = 1, sigma = 1: the projection coefficient is a
        # scalar OU process whose discrete variance is
        # A^2 dt e^{-2k dt} (1 - e^{-2kMdt}) / (1 - e^{-2k dt})
        spec = CovarianceSpec(((1, 0),), (0.8,), 0.5, "constant_one")
        basis = NoiseBasis(spec, grid16)
        w = basis.vorticity[0]
        w_norm = l2_norm(w)
        cfg = SolverConfig(dt=5e-3, t_end=0.5)
        kappa, n_paths = 1.0, 400
        finals = []
        from vortex.spectral import l2_inner

        for path in range(n_paths):
            st = state_from(grid16)
            zeta = st.zeta
            for step in range(cfg.n_steps):
                dW = sample_increment(31, path, step, spec, cfg.dt)
                st = CoupledState(step * cfg.dt, st.v, st.xi, zeta, st.beta)
                zeta = ou_step(st, dW, spec, cfg)
            finals.append(l2_inner(zeta, w) / w_norm)
        amp = 0.8 * w_norm
        q = math.exp(-2.0 * kappa * cfg.dt)
        target = amp**2 * cfg.dt * q * (1 - q**cfg.n_steps) / (1 - q)
        emp = np.var(finals, ddof=1)
        stderr = target * math.sqrt(2.0 / (n_paths - 1))
        assert abs(emp - target) <= 3.0 * stderr


class TestBetaStep:
    def test_pure_heat_decay_without_velocity(self, grid32, rng):
        cfg = SolverConfig(dt=0.01, t_end=0.1)
        beta = random_scalar_field(grid32, rng)
        st = state_from(grid32, beta=beta)
        out = beta_step(st, cfg)
        decay = np.exp(-beta.grid.ksq * cfg.dt)
        assert np.max(np.abs(out.coeffs - decay * beta.coeffs)) < 1e-15

    def test_reduces_to_noiseless_vorticity_step(self, grid32, rng):
        # with zeta = 0 and beta = xi the two updates coincide
        cfg = SolverConfig(dt=1e-3, t_end=0.1)
        xi = random_scalar_field(grid32, rng)
        st = state_from(grid32, v=biot_savart(xi), xi=xi, beta=xi)
        dW = WienerIncrement(cfg.dt, np.zeros(1))
        a = vorticity_step(st, dW, ZERO_NOISE, cfg)
        b = beta_step(st, cfg)
        assert np.max(np.abs(a.coeffs - b.coeffs)) < 1e-16


class TestHolderQuotient:
    def test_constant_path(self, grid16, rng):
        f = random_scalar_field(grid16, rng)
        assert holder_quotient([f, f, f], [0.0, 0.5, 1.0], 0.3) == 0.0

    def test_linear_path_half_exponent(self, grid16, rng):
        # u(t) = t phi: quotient sup |t-r|^{1/2} ||phi|| = sqrt(T) ||phi||
        phi = random_scalar_field(grid16, rng)
        times = [0.0, 0.25, 0.5, 0.75, 1.0]
        snaps = [phi * t for t in times]
        expected = math.sqrt(1.0) * l2_norm(phi)
        assert holder_quotient(snaps, times, 0.5) == pytest.approx(expected, rel=1e-12)


class TestRunTrajectory:
    def test_zero_data_zero_noise(self, grid16):
        cfg = SolverConfig(dt=0.01, t_end=0.1)
        res = run_trajectory(None, zero_scalar(grid16), ZERO_NOISE, cfg, seed=0)
        assert res.stats.status == "completed"
        assert res.stats.sup_v_l2sq == 0.0
        assert res.stats.sup_xi_lq == 0.0
        assert l2_norm(res.final.xi) == 0.0

    def test_enstrophy_and_energy_monotone_without_noise(self, grid32, rng):
        cfg = SolverConfig(dt=1e-3, t_end=0.05)
        xi0 = random_scalar_field(grid32, rng)
        enstrophy, energy = [], []

        def watch(st):
            enstrophy.append(l2_norm(st.xi))
            energy.append(l2_norm(st.v))

        run_trajectory(None, xi0, ZERO_NOISE, cfg, seed=0, observer=watch)
        for series in (enstrophy, energy):
            for a, b in zip(series, series[1:]):
                assert b <= a * (1 + 1e-6)

    def test_splitting_invariant_machine_precision(self, grid32, rng):
        cfg = SolverConfig(dt=1e-3, t_end=0.05)
        xi0 = random_scalar_field(grid32, rng)
        res = run_trajectory(None, xi0, UNIT_NOISE, cfg, seed=9)
        defect = l2_norm(res.final.xi - (res.final.zeta + res.final.beta))
        assert defect <= 1e-12 * max(1.0, l2_norm(res.final.xi))

    def test_mean_zero_exact(self, grid32, rng):
        cfg = SolverConfig(dt=1e-3, t_end=0.02)
        xi0 = random_scalar_field(grid32, rng)
        res = run_trajectory(None, xi0, UNIT_NOISE, cfg, seed=2)
        assert res.final.xi.coeffs[0, 0] == 0.0

    def test_deterministic_given_seed(self, grid16, rng):
        cfg = SolverConfig(dt=1e-2, t_end=0.1)
        xi0 = random_scalar_field(grid16, rng)
        a = run_trajectory(None, xi0, UNIT_NOISE, cfg, seed=5, path_index=3)
        b = run_trajectory(None, xi0, UNIT_NOISE, cfg, seed=5, path_index=3)
        assert np.array_equal(a.final.xi.coeffs, b.final.xi.coeffs)
        assert a.stats.sup_v_l2sq == b.stats.sup_v_l2sq
        assert a.stats.zeta_holder.quotient == b.stats.zeta_holder.quotient

    def test_nonzero_mean_rejected(self, grid16):
        cfg = SolverConfig(dt=0.01, t_end=0.1)
        c = np.zeros((16, 16), dtype=complex)
        c[0, 0] = 1.0
        c[1, 0] = c[-1, 0] = 0.3
        with pytest.raises(ValueError, match="zero mean"):
            run_trajectory(None, ScalarField(grid16, c), ZERO_NOISE, cfg, seed=0)

    def test_inconsistent_initial_pair_rejected(self, grid32, rng):
        cfg = SolverConfig(dt=0.01, t_end=0.1)
        xi0 = random_scalar_field(grid32, rng)
        other = random_scalar_field(grid32, rng)
        with pytest.raises(ValueError, match="curl"):
            run_trajectory(biot_savart(other), xi0, ZERO_NOISE, cfg, seed=0)

    def test_blowup_flagged(self, grid16, rng):
        cfg = SolverConfig(dt=0.01, t_end=0.1, blowup_threshold=1e-9)
        xi0 = random_scalar_field(grid16, rng)
        res = run_trajectory(None, xi0, ZERO_NOISE, cfg, seed=0)
        assert res.stats.status == "blowup"

    def test_snapshot_emission(self, grid16, rng, tmp_path):
        from vortex.spectral import read_snapshot

        cfg = SolverConfig(dt=0.01, t_end=0.05)
        xi0 = random_scalar_field(grid16, rng)
        res = run_trajectory(None, xi0, ZERO_NOISE, cfg, seed=0, path_index=2,
                             snapshot_dir=tmp_path, snapshot_stride=2)
        files = sorted(tmp_path.glob("*.vspd"))
        assert [f.name for f in files] == [
            "path0002_step000000.vspd", "path0002_step000002.vspd",
            "path0002_step000004.vspd",
        ]
        first = read_snapshot(files[0])
        assert np.max(np.abs(first.coeffs - xi0.coeffs)) < 1e-13

    def test_recorded_series_matches_stats(self, grid16, rng):
        # the recorded snapshots recompute the stats functionals exactly
        from vortex.operators import grad_norm_l2 as gnorm
        from vortex.spectral import lq_norm

        cfg = SolverConfig(dt=0.01, t_end=0.1)
        xi0 = random_scalar_field(grid16, rng)
        res = run_trajectory(None, xi0, UNIT_NOISE, cfg, seed=8, record_stride=1)
        sup_v = max(l2_norm(st.v) ** 2 for st in res.recorded)
        int_grad = sum(gnorm(st.v) ** 2 * cfg.dt for st in res.recorded[:-1])
        sup_xi = max(lq_norm(st.xi, 4.0) for st in res.recorded)
        assert abs(sup_v - res.stats.sup_v_l2sq) <= 1e-12 * max(1.0, sup_v)
        assert abs(int_grad - res.stats.int_grad_v) <= 1e-12 * max(1.0, int_grad)
        assert abs(sup_xi - res.stats.sup_xi_lq) <= 1e-12 * max(1.0, sup_xi)
