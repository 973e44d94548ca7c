import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from conftest import BETA, C1, C2, K0
from shearboltz.kernels import apply_collision
from shearboltz.moment_dynamics import (MomentMatrix, ResonanceError, boundedness_constants, build_operator,
                                        evolve, evolve_eig, find_povzner_constant, operator_from_constants,
                                        povzner_check, sample_povzner_triples, stationary_moments,
                                        trace_solution)

I6 = np.array([1.0, 0, 0, 1, 0, 1])


def random_spd(rng):
    a = rng.standard_normal((3, 3))
    return MomentMatrix.from_matrix(a @ a.T + 0.05 * np.eye(3))


class TestMomentMatrix:
    def test_vector_roundtrip(self):
        m = MomentMatrix.from_vector([1, 2, 3, 4, 5, 6])
        np.testing.assert_array_equal(m.as_vector(), [1, 2, 3, 4, 5, 6])
        assert m.as_matrix()[2, 1] == 5
        assert m.trace == 11

    def test_physical(self):
        assert MomentMatrix.identity().is_physical()
        assert not MomentMatrix(1, 2, 0, 1, 0, 1).is_physical()

    def test_from_matrix_symmetrises(self):
        m = MomentMatrix.from_matrix([[1, 2, 0], [0, 1, 0], [0, 0, 1]])
        assert m.m12 == 1.0

    def test_wrong_shapes(self):
        with pytest.raises(ValueError):
            MomentMatrix.from_vector([1, 2, 3])
        with pytest.raises(ValueError):
            MomentMatrix.from_matrix(np.eye(2))


class TestOperator:
    def test_constants(self, moments):
        op = build_operator(moments, 0.0)
        assert op.C1 == pytest.approx(C1, rel=1e-12)
        assert op.C2 == pytest.approx(C2, rel=1e-12)
        assert op.beta == pytest.approx(BETA, rel=1e-12)
        assert op.source_c == pytest.approx(BETA, rel=1e-12)

    def test_identity_is_eigenvector(self, moments):
        op = build_operator(moments, 0.0)
        np.testing.assert_allclose(op.matrix @ I6, -BETA * I6, rtol=1e-12)

    def test_off_diagonal_decouple_at_rest(self, moments):
        A = build_operator(moments, 0.0).matrix
        for k in (1, 2, 4):
            row = np.zeros(6)
            row[k] = -C1
            np.testing.assert_allclose(A[k], row, rtol=1e-12)
            np.testing.assert_allclose(np.delete(A[:, k], k), 0.0)

    def test_negative_shear_rejected(self):
        with pytest.raises(ValueError):
            operator_from_constants(C1, C2, -1.0)


class TestStationary:
    def test_identity_at_rest(self, moments):
        st = stationary_moments(build_operator(moments, 0.0))
        np.testing.assert_allclose(st.as_vector(), I6, atol=1e-14)

    def test_third_source(self, moments):
        st = stationary_moments(build_operator(moments, 0.0, source_c=BETA / 3))
        np.testing.assert_allclose(st.as_vector(), I6 / 3, atol=1e-14)

    def test_residual_at_unit_shear(self, op_k1):
        st = stationary_moments(op_k1)
        assert np.max(np.abs(op_k1.matrix @ st.as_vector() + BETA * I6)) < 1e-12

    def test_resonance_at_threshold(self):
        with pytest.raises(ResonanceError):
            stationary_moments(operator_from_constants(C1, C2, K0, BETA))


class TestEvolve:
    def test_time_zero(self, op_k1):
        m0 = MomentMatrix(2, 0.3, 0, 1, 0.1, 1)
        assert evolve(op_k1, m0, 0.0) == m0

    @pytest.mark.parametrize("t", [0.1, 1.0, 10.0])
    def test_identity_preserved_at_rest(self, moments, t):
        out = evolve(build_operator(moments, 0.0), MomentMatrix.identity(), t)
        np.testing.assert_allclose(out.as_vector(), I6, atol=1e-13)

    def test_relaxes_to_stationary(self, op_k1):
        A, c = op_k1.matrix, op_k1.source
        ode = solve_ivp(lambda t, y: A @ y + c, (0, 50), I6, method="DOP853", rtol=1e-12, atol=1e-14)
        st = stationary_moments(op_k1).as_vector()
        out = evolve(op_k1, MomentMatrix.identity(), 50.0).as_vector()
        np.testing.assert_allclose(out, st, atol=1e-8)
        np.testing.assert_allclose(out, ode.y[:, -1], atol=1e-8)

    def test_matches_ode_integration(self, op_k1):
        A, c = op_k1.matrix, op_k1.source
        m0 = np.array([3.0, -0.5, 0.2, 1.0, 0.1, 2.0])
        ode = solve_ivp(lambda t, y: A @ y + c, (0, 2), m0, method="DOP853", rtol=1e-12, atol=1e-14,
                        t_eval=[0.5, 2.0])
        for k, t in enumerate((0.5, 2.0)):
            got = evolve(op_k1, MomentMatrix.from_vector(m0), t).as_vector()
            np.testing.assert_allclose(got, ode.y[:, k], rtol=1e-9, atol=1e-11)

    def test_eig_path_agrees(self, op_k1):
        m0 = MomentMatrix(1.5, 0.2, 0, 0.8, 0, 1.1)
        np.testing.assert_allclose(evolve(op_k1, m0, 1.3).as_vector(),
                                   evolve_eig(op_k1, m0, 1.3).as_vector(), rtol=1e-10)

    def test_semigroup(self, op_k1):
        m0 = MomentMatrix(1.5, 0.2, 0.1, 0.8, 0, 1.1)
        two = evolve(op_k1, evolve(op_k1, m0, 0.7), 1.6)
        np.testing.assert_allclose(two.as_vector(), evolve(op_k1, m0, 2.3).as_vector(), atol=1e-10)

    def test_linearity_without_source(self, moments):
        op = build_operator(moments, 3.0, source_c=0.0)
        rng = np.random.default_rng(0)
        a, b = rng.standard_normal(6), rng.standard_normal(6)
        lhs = evolve(op, MomentMatrix.from_vector(2 * a - 0.5 * b), 0.9).as_vector()
        rhs = 2 * evolve(op, MomentMatrix.from_vector(a), 0.9).as_vector() \
            - 0.5 * evolve(op, MomentMatrix.from_vector(b), 0.9).as_vector()
        np.testing.assert_allclose(lhs, rhs, atol=1e-10)

    def test_positive_definite_propagation(self, moments):
        rng = np.random.default_rng(1)
        ops = [build_operator(moments, K) for K in (0.0, 1.0, 5.0, 0.95 * K0)]
        for k in range(100):
            op = ops[k % len(ops)]
            m0 = random_spd(rng)
            assert all(evolve(op, m0, t).min_eigenvalue() > 0 for t in np.linspace(0, 20, 41))

    def test_negative_time(self, op_k1):
        with pytest.raises(ValueError):
            evolve(op_k1, MomentMatrix.identity(), -1.0)

    def test_boundedness(self, op_k1):
        c_bar, c_tilde = boundedness_constants(op_k1)
        m0 = MomentMatrix(5, 1, 0, 2, 0, 3)
        norm0 = np.max(np.abs(m0.as_vector()))
        for t in np.linspace(0, 30, 61):
            assert np.max(np.abs(evolve(op_k1, m0, t).as_vector())) <= c_bar * norm0 + c_tilde


class TestTrace:
    def test_fixed_point(self, moments):
        op = build_operator(moments, 0.0)
        assert trace_solution(op, 3.0, 4.2) == pytest.approx(3.0, rel=1e-15)

    @pytest.mark.parametrize("t", [0.0, 0.1, 1.0])
    def test_point_mass_trace(self, moments, t):
        op = build_operator(moments, 0.0)
        assert trace_solution(op, 4.0, t) == pytest.approx(3 + math.exp(-BETA * t), rel=1e-14)
        m0 = MomentMatrix(4, 0, 0, 0, 0, 0)
        assert evolve(op, m0, t).trace == pytest.approx(3 + math.exp(-BETA * t), rel=1e-12)

    def test_long_time(self, moments):
        op = build_operator(moments, 0.0, source_c=BETA / 3)
        assert abs(trace_solution(op, 10.0, 20.0) - 1.0) <= 9 * math.exp(-BETA * 20) + 1e-14

    def test_requires_zero_shear(self, op_k1):
        with pytest.raises(ValueError):
            trace_solution(op_k1, 3.0, 1.0)


class TestPovzner:
    def test_zero_background(self):
        # v' is a projection of v, but the right side reduces to -|v|^s,
        # so only omega parallel to v (v' = 0) satisfies the inequality
        rng = np.random.default_rng(0)
        v = rng.standard_normal((1000, 3))
        w = rng.standard_normal((1000, 3))
        w /= np.linalg.norm(w, axis=1, keepdims=True)
        vp, _ = apply_collision(v, np.zeros_like(v), w)
        assert np.all(np.linalg.norm(vp, axis=1) <= np.linalg.norm(v, axis=1))
        assert not np.any(povzner_check(v, np.zeros_like(v), w, 2.5, 1e6))
        head_on = v / np.linalg.norm(v, axis=1, keepdims=True)
        assert np.all(povzner_check(v, np.zeros_like(v), head_on, 2.5, 0.0))

    def test_origin_boundary(self):
        w = np.array([1.0, 0, 0])
        assert povzner_check(np.zeros(3), np.zeros(3), w, 2.5, 1.0)
        assert not povzner_check(np.zeros(3), np.array([1.0, 0, 0]), w, 2.5, 1e6)

    def test_exponent_range(self):
        with pytest.raises(ValueError):
            povzner_check(np.ones(3), np.ones(3), np.array([1.0, 0, 0]), 3.0, 1.0)

    @pytest.mark.parametrize("s", [2.01, 2.5])
    def test_constant_found_and_stable(self, s):
        a = find_povzner_constant(s, 1 << 16, seed=0)
        b = find_povzner_constant(s, 1 << 16, seed=1)
        assert a == b <= 2**16
        assert math.log2(a).is_integer()

    def test_found_constant_holds_on_fresh_triples(self):
        Cs = find_povzner_constant(2.5, 1 << 18, seed=0)
        v, vs, w = sample_povzner_triples(1_000_000, seed=77, quasi=False)
        assert np.all(povzner_check(v, vs, w, 2.5, Cs))
