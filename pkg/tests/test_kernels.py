import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from shearboltz.kernels import (CollisionKernel, ScatteringRateTable, apply_collision, kernel_moments,
                                mean_speed_power, relative_speed_moment, sample_background,
                                sample_scatter_direction, scattering_rate)

vec3 = st.lists(st.floats(-50, 50, allow_nan=False), min_size=3, max_size=3)


def unit(v):
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


def unit_rows(a):
    return a / np.linalg.norm(a, axis=1, keepdims=True)


class TestKernelMoments:
    def test_constant_kernel(self, constant_kernel):
        km = kernel_moments(constant_kernel)
        assert km.alpha == pytest.approx(4 * math.pi / 5, rel=1e-12)
        assert km.beta == pytest.approx(4 * math.pi / 3, rel=1e-12)
        assert km.b_l1 == pytest.approx(4 * math.pi, rel=1e-12)

    def test_quadratic_kernel(self):
        km = kernel_moments(CollisionKernel.preset("quadratic"))
        assert km.alpha == pytest.approx(4 * math.pi / 7, rel=1e-12)
        assert km.beta == pytest.approx(4 * math.pi / 5, rel=1e-12)

    def test_table_matches_preset(self):
        x = np.linspace(-1, 1, 3)
        km = kernel_moments(CollisionKernel.from_table(x, np.ones(3)))
        assert km.beta == pytest.approx(4 * math.pi / 3, rel=1e-12)

    @pytest.mark.parametrize("bx", [[1, 1, 1], [0, 1, 3], [2, 0.5, 2], [0, 0, 1]])
    def test_monotone_chain(self, bx):
        km = kernel_moments(CollisionKernel.from_table([-1, 0, 1], bx))
        assert km.alpha <= km.beta <= km.b_l1

    def test_csv_table(self, tmp_path):
        path = tmp_path / "b.csv"
        path.write_text("x,b\n-1,1\n1,1\n")
        km = kernel_moments(CollisionKernel.from_csv(path))
        assert km.b_l1 == pytest.approx(4 * math.pi, rel=1e-12)

    @pytest.mark.parametrize("x,bx", [([-1, 1], [1, -1]), ([-0.5, 1], [1, 1]), ([1, -1], [1, 1]), ([-1, 1], [0, 0])])
    def test_invalid_tables(self, x, bx):
        with pytest.raises(ValueError):
            CollisionKernel.from_table(x, bx)

    def test_invalid_gamma_and_name(self):
        with pytest.raises(ValueError):
            CollisionKernel.preset("constant", gamma=1.0)
        with pytest.raises(ValueError):
            CollisionKernel.preset("cubic")


class TestScatteringRate:
    @pytest.mark.parametrize("speed", [0.0, 0.3, 7.0, 200.0])
    def test_constant_rate(self, constant_kernel, speed):
        assert scattering_rate(constant_kernel, speed) == pytest.approx(4 * math.pi, rel=1e-14)

    def test_unit_gamma_at_rest_is_mean_gaussian_speed(self):
        want = 2 * math.sqrt(2 / math.pi)
        assert relative_speed_moment(0.0, 1.0) == pytest.approx(want, rel=1e-10)
        assert mean_speed_power(1.0) == pytest.approx(want, rel=1e-14)
        sample = np.linalg.norm(np.random.default_rng(1).standard_normal((1_000_000, 3)), axis=1)
        assert sample.mean() == pytest.approx(want, abs=4 * sample.std() / 1000)

    @pytest.mark.parametrize("r", [0.5, 3.0, 20.0])
    def test_unit_gamma_closed_form(self, r):
        # E|r e + Z| for standard Gaussian Z
        want = (r + 1 / r) * math.erf(r / math.sqrt(2)) + math.sqrt(2 / math.pi) * math.exp(-r * r / 2)
        assert relative_speed_moment(r, 1.0) == pytest.approx(want, rel=1e-10)

    def test_growth_bounds_for_soft_gamma(self):
        k = CollisionKernel.preset("constant", gamma=0.5)
        ratios = [scattering_rate(k, r) / (1 + r) ** 0.5 for r in (0.0, 1.0, 10.0)]
        assert min(ratios) <= scattering_rate(k, 50.0) / 51**0.5 <= max(ratios)

    def test_table_interpolation(self):
        k = CollisionKernel.preset("constant", gamma=0.5)
        table = ScatteringRateTable(k, r_max=20.0, n=128)
        for r in (0.05, 2.2, 15.0, 30.0):
            assert table(r) == pytest.approx(scattering_rate(k, r), rel=1e-6)

    def test_negative_speed(self, constant_kernel):
        with pytest.raises(ValueError):
            scattering_rate(constant_kernel, -1.0)


class TestSampling:
    def test_background_golden(self):
        np.testing.assert_allclose(sample_background(np.random.default_rng(2024)),
                                   [1.02885687, 1.64192004, 1.14671953], rtol=1e-8)

    def test_background_moments(self):
        v = sample_background(np.random.default_rng(0), 1_000_000)
        s2 = np.einsum("ij,ij->i", v, v)
        assert abs(s2.mean() - 3) < 3 * s2.std() / 1000
        cov = v.T @ v / v.shape[0]
        se = np.sqrt((v[:, :, None] ** 2 * v[:, None, :] ** 2).mean(axis=0) / v.shape[0])
        assert np.all(np.abs(cov - np.eye(3)) < 3 * se + 1e-12)

    def test_uniform_directions(self, constant_kernel):
        n = 1_000_000
        rng = np.random.default_rng(3)
        w = sample_scatter_direction(constant_kernel, np.tile([1.0, 0, 0], (n, 1)), np.zeros((n, 3)), rng)
        assert np.all(np.abs(w.mean(axis=0)) < 4 / math.sqrt(3 * n))
        np.testing.assert_allclose(np.linalg.norm(w, axis=1), 1.0, atol=1e-14)

    def test_quadratic_cosine_law(self):
        n = 1_000_000
        k = CollisionKernel.preset("quadratic")
        rng = np.random.default_rng(4)
        v = rng.standard_normal((n, 3))
        vs = rng.standard_normal((n, 3))
        w = sample_scatter_direction(k, v, vs, rng)
        x = np.einsum("ij,ij->i", unit_rows(v - vs), w)
        res = stats.kstest(x, lambda t: (np.clip(t, -1, 1) ** 3 + 1) / 2)
        assert res.statistic < 0.002

    def test_table_cosine_law(self):
        k = CollisionKernel.from_table([-1, 0, 1], [0, 1, 3])
        rng = np.random.default_rng(5)
        n = 200_000
        v = np.tile([0.0, 0.0, 2.0], (n, 1))
        w = sample_scatter_direction(k, v, np.zeros((n, 3)), rng)
        # density (1+x) on [-1,0], (1+2x) on [0,1]; total mass 1/2 + 2
        def cdf(t):
            t = np.clip(t, -1, 1)
            left = np.where(t < 0, (t + 1) ** 2 / 2, 0.5)
            right = np.where(t > 0, t + t * t, 0.0)
            return (left + right) / 2.5
        assert stats.kstest(w[:, 2], cdf).pvalue > 1e-3

    def test_degenerate_pair(self, constant_kernel):
        with pytest.raises(ValueError):
            sample_scatter_direction(constant_kernel, [1.0, 2, 3], [1.0, 2, 3], np.random.default_rng(0))


class TestCollisionRule:
    def test_head_on_exchange(self):
        vp, vsp = apply_collision([1.0, 0, 0], [0.0, 0, 0], [1.0, 0, 0])
        np.testing.assert_array_equal(vp, [0, 0, 0])
        np.testing.assert_array_equal(vsp, [1, 0, 0])

    @settings(max_examples=200, deadline=None)
    @given(vec3, vec3, vec3)
    def test_conservation_and_involution(self, v, vs, w):
        if np.linalg.norm(w) < 1e-3:
            return
        w = unit(w)
        v, vs = np.array(v), np.array(vs)
        vp, vsp = apply_collision(v, vs, w)
        scale = 1 + v @ v + vs @ vs
        assert vp @ vp + vsp @ vsp == pytest.approx(v @ v + vs @ vs, abs=1e-12 * scale)
        np.testing.assert_allclose(vp + vsp, v + vs, atol=1e-12 * math.sqrt(scale))
        v2, vs2 = apply_collision(vp, vsp, w)
        np.testing.assert_allclose(v2, v, atol=1e-12 * math.sqrt(scale))
        np.testing.assert_allclose(vs2, vs, atol=1e-12 * math.sqrt(scale))

    def test_rotation_equivariance(self):
        rng = np.random.default_rng(8)
        R = stats.special_ortho_group.rvs(3, random_state=9)
        v, vs, w = rng.standard_normal(3), rng.standard_normal(3), unit(rng.standard_normal(3))
        vp, vsp = apply_collision(v, vs, w)
        rvp, rvsp = apply_collision(R @ v, R @ vs, R @ w)
        np.testing.assert_allclose(rvp, R @ vp, atol=1e-13)
        np.testing.assert_allclose(rvsp, R @ vsp, atol=1e-13)

    def test_rejects_non_unit_omega(self):
        with pytest.raises(ValueError):
            apply_collision([1.0, 0, 0], [0.0, 0, 0], [2.0, 0, 0])
