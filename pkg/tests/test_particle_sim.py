import math

import numpy as np
import pytest

from conftest import BETA
from shearboltz.kernels import CollisionKernel, kernel_moments, scattering_rate
from shearboltz.moment_dynamics import MomentMatrix, build_operator, evolve, trace_solution
from shearboltz.particle_sim import (Ensemble, InitialCondition, MomentEstimate, SimConfig, estimate_moments,
                                     exponential_gof, interarrival_times, run, selfsim_diagnostic, shear_drift,
                                     stationarity_test)


def zscores(est: MomentEstimate, want: MomentMatrix) -> np.ndarray:
    diff = est.M.as_matrix() - want.as_matrix()
    return np.abs(diff) / np.maximum(est.M_se, 1e-300)


class TestShearDrift:
    def test_flow(self):
        np.testing.assert_array_equal(shear_drift([0.0, 1.0, 0.0], 2.0, 1.0), [-2.0, 1.0, 0.0])

    def test_no_shear(self):
        v = np.array([[0.3, -1.2, 4.0], [1.0, 2.0, 3.0]])
        np.testing.assert_array_equal(shear_drift(v, 5.0, 0.0), v)

    @pytest.mark.parametrize("K,dt", [(1.0, 3.0), (100.0, 0.1)])
    def test_zero_transverse(self, K, dt):
        np.testing.assert_array_equal(shear_drift([2.0, 0.0, -1.0], dt, K), [2.0, 0.0, -1.0])

    def test_composition(self):
        v = np.array([0.5, -0.7, 0.1])
        np.testing.assert_allclose(shear_drift(shear_drift(v, 0.3, 2.0), 0.4, 2.0), shear_drift(v, 0.7, 2.0))

    def test_negative_dt(self):
        with pytest.raises(ValueError):
            shear_drift([0.0, 1.0, 0.0], -1.0, 1.0)


class TestEstimateMoments:
    def test_single_particle(self):
        est = estimate_moments(np.array([[1.0, 2.0, 0.0]]))
        assert est.M.m12 == 2 and est.M.m22 == 4
        assert est.Ms[2.0] == 5

    def test_copies_have_zero_error(self):
        est = estimate_moments(np.tile([0.3, -1.0, 2.0], (50, 1)), s_list=(2.0, 2.5))
        assert np.all(est.M_se == 0)
        assert est.Ms_se[2.5] == 0

    def test_gaussian_sample(self):
        v = np.random.default_rng(0).standard_normal((1_000_000, 3))
        est = estimate_moments(v)
        assert np.all(zscores(est, MomentMatrix.identity()) < 4)
        assert est.n == 1_000_000

    def test_empty(self):
        with pytest.raises(ValueError):
            estimate_moments(np.empty((0, 3)))


def constant_series(n, value=1.0, se=0.1):
    return [(np.full(7, value), np.full(7, se))] * n


class TestStationarity:
    def test_constant(self):
        assert stationarity_test(constant_series(10), window=5) == "stationary"

    def test_doubling(self):
        traj = [(np.full(7, 2.0 ** (k // 3)), np.full(7, 0.01)) for k in range(6)]
        assert stationarity_test(traj, window=3) == "drifting"

    def test_inconclusive(self):
        traj = [(np.full(7, 1.0), np.full(7, 0.1))] * 3 + [(np.full(7, 1.0 + 0.1 * math.sqrt(2) * 3), np.full(7, 0.1))] * 3
        assert stationarity_test(traj, window=3) == "inconclusive"

    def test_too_short(self):
        with pytest.raises(ValueError):
            stationarity_test(constant_series(3), window=2)


class TestSelfSim:
    def test_identical(self):
        e = Ensemble(np.random.default_rng(0).standard_normal((1000, 3)), 1.0)
        assert selfsim_diagnostic(e, e, 0.7) == 0.0

    def test_independent_gaussians(self):
        rng = np.random.default_rng(1)
        a = Ensemble(rng.standard_normal((100_000, 3)), 0.0)
        b = Ensemble(rng.standard_normal((100_000, 3)), 0.0)
        assert selfsim_diagnostic(a, b, 1.0) < 0.01

    def test_rescaling(self):
        v = np.random.default_rng(2).standard_normal((20_000, 3))
        a = Ensemble(v, 0.0)
        b = Ensemble(v * math.exp(0.5 * 0.8 * 2.0), 2.0)
        assert selfsim_diagnostic(a, b, 0.8) < 1e-2

    def test_mu_positive(self):
        e = Ensemble(np.zeros((1, 3)), 0.0)
        with pytest.raises(ValueError):
            selfsim_diagnostic(e, e, 0.0)


class TestGoodnessOfFit:
    def test_exponential_sample(self):
        x = np.random.default_rng(3).exponential(0.25, 100_000)
        assert exponential_gof(x, 4.0)[1] > 1e-3

    def test_wrong_rate(self):
        x = np.random.default_rng(3).exponential(0.25, 100_000)
        assert exponential_gof(x, 3.0)[1] < 1e-6

    def test_interarrival(self):
        log = np.array([[0.5, 1.0, -1.0], [-1.0, -1.0, -1.0], [0.2, 0.7, 0.9]])
        np.testing.assert_allclose(interarrival_times(log), [0.5, 0.5, 0.2, 0.5, 0.2])
        assert interarrival_times(log, 3).size == 3
        np.testing.assert_allclose(interarrival_times(log, per_particle=1), [0.5, 0.2])


class TestConfig:
    def test_defaults(self, constant_kernel):
        cfg = SimConfig(K=1.0, kernel=constant_kernel, n_particles=10, t_end=1.0, record_times=(0.5,))
        assert 0 < cfg.substep <= 0.05
        np.testing.assert_array_equal(cfg.stops(), [0.5, 1.0])

    @pytest.mark.parametrize("kw", [dict(K=-1.0), dict(n_particles=0), dict(t_end=0.0), dict(record_times=(2.0,)),
                                    dict(record_times=(0.5, 0.2)), dict(snapshot_times=(0.3,)), dict(seed=-1)])
    def test_invalid(self, constant_kernel, kw):
        base = dict(K=1.0, kernel=constant_kernel, n_particles=10, t_end=1.0, record_times=(0.2, 0.5))
        base.update(kw)
        with pytest.raises(ValueError):
            SimConfig(**base)

    def test_initial_condition_moments(self):
        ic = InitialCondition.anisotropic_gaussian((2.0, 0.5, 1.0))
        np.testing.assert_allclose(ic.moments().as_vector(), [2.0, 0, 0, 0.5, 0, 1.0])
        np.testing.assert_allclose(InitialCondition.point_mass((2.0, 0, 0)).moments().as_vector(),
                                   [4.0, 0, 0, 0, 0, 0])


class TestEngine:
    def test_equilibrium_preserved(self, constant_kernel):
        cfg = SimConfig(K=0.0, kernel=constant_kernel, n_particles=20_000, t_end=1.0,
                        record_times=(0.25, 0.5, 1.0), seed=11)
        res = run(cfg)
        for est in res.trajectory:
            assert np.all(zscores(est, MomentMatrix.identity()) < 4)
            assert est.M.is_physical()
        assert len(res.final) == 20_000

    def test_point_mass_trace(self, constant_kernel, moments):
        times = tuple(f / BETA for f in (0.2, 0.5, 1.0))
        cfg = SimConfig(K=0.0, kernel=constant_kernel, n_particles=50_000, t_end=times[-1], record_times=times,
                        seed=3, initial_condition=InitialCondition.point_mass((2.0, 0.0, 0.0)))
        op = build_operator(moments, 0.0)
        for est in run(cfg).trajectory:
            assert abs(est.M.trace - trace_solution(op, 4.0, est.time)) < 4 * est.Ms_se[2.0]
            assert trace_solution(op, 4.0, est.time) == pytest.approx(3 + math.exp(-BETA * est.time))

    def test_sheared_moments_follow_ode(self, constant_kernel, moments):
        cfg = SimConfig(K=1.0, kernel=constant_kernel, n_particles=50_000, t_end=2.0,
                        record_times=(0.5, 1.0, 2.0), seed=5)
        op = build_operator(moments, 1.0)
        for est in run(cfg).trajectory:
            assert np.all(zscores(est, evolve(op, MomentMatrix.identity(), est.time)) < 4)

    def test_deterministic_and_chunk_invariant(self, constant_kernel):
        base = dict(K=2.0, kernel=constant_kernel, n_particles=3000, t_end=0.5, record_times=(0.5,), seed=99)
        a = run(SimConfig(**base))
        b = run(SimConfig(**base))
        c = run(SimConfig(**base, chunk_size=700))
        np.testing.assert_array_equal(a.final.velocities, b.final.velocities)
        np.testing.assert_array_equal(a.final.velocities, c.final.velocities)
        assert a.final.accepted_collisions == c.final.accepted_collisions
        d = run(SimConfig(**{**base, "seed": 100}))
        assert not np.array_equal(a.final.velocities, d.final.velocities)

    def test_constant_kernel_interarrivals(self, constant_kernel):
        cfg = SimConfig(K=3.0, kernel=constant_kernel, n_particles=2000, t_end=3.0, record_times=(3.0,),
                        seed=7, n_event_log=64)
        res = run(cfg)
        gaps = interarrival_times(res.event_log, 20_000, per_particle=10)
        assert gaps.size == 20_000
        assert exponential_gof(gaps, 4 * math.pi)[1] > 1e-3
        assert res.acceptance_ratio == 1.0

    def test_soft_potential_first_event_survival(self):
        # at K = 0 the speed is frozen until the first collision, so
        # P(T > t) = mean over particles of exp(-nu(|v0|) t)
        kern = CollisionKernel.preset("constant", gamma=0.5)
        cfg = SimConfig(K=0.0, kernel=kern, n_particles=20_000, t_end=0.4, record_times=(0.0, 0.4),
                        snapshot_times=(0.0,), seed=13, n_event_log=1)
        res = run(cfg)
        speeds = np.linalg.norm(res.snapshots[0.0], axis=1)
        nus = np.array([scattering_rate(kern, s) for s in speeds])
        first = res.event_log[:, 0]
        for t in (0.02, 0.05, 0.1):
            emp = np.mean((first < 0) | (first > t))
            want = np.mean(np.exp(-nus * t))
            assert abs(emp - want) < 4 * math.sqrt(want * (1 - want) / speeds.size)
        assert 0 < res.acceptance_ratio < 1

    def test_sample_moments_psd_under_shear(self, constant_kernel):
        cfg = SimConfig(K=20.0, kernel=constant_kernel, n_particles=5000, t_end=1.0,
                        record_times=tuple(np.linspace(0.1, 1.0, 10)), seed=1)
        assert all(est.M.min_eigenvalue() >= 0 for est in run(cfg).trajectory)
