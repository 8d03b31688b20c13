import numpy as np
import pytest

from rhpgkf import (
    ConvergenceError,
    PreconditionError,
    error_constants,
    finite_gain,
    frde_step,
    gain_gap_identity,
    horizon_bound,
    lyapunov_step,
    rde_difference_step,
    riccati_trace,
    solve_fare,
    spectral_radius,
    weighted_induced_norm,
)
from rhpgkf.sysmodel import LtiSystem

from conftest import random_spd, random_system

SIGMA_STAR = 2.0 + np.sqrt(5.0)          # positive root of s^2 - 4s - 1 = 0
GAIN_STAR = (1.0 + np.sqrt(5.0)) / 2.0   # 2 s / (1 + s) at the fixed point


@pytest.fixture(scope="module")
def zero_plant():
    return LtiSystem(a=[[0.0]], c=[[1.0]], w=[[1.0]], v=[[1.0]], x0_mean=[1.0], x0_cov=[[5.0]])


class TestFrdeStep:
    def test_scalar_hand_value(self, scalar_system):
        # 4*5 - 4*25/6 + 1 = 13/3
        assert frde_step(scalar_system, [[5.0]])[0, 0] == pytest.approx(13.0 / 3.0, abs=1e-9)

    def test_zero_plant_returns_process_noise(self, zero_plant):
        assert frde_step(zero_plant, [[7.0]])[0, 0] == pytest.approx(1.0)

    def test_scalar_fixed_point(self, scalar_system):
        out = frde_step(scalar_system, [[SIGMA_STAR]])
        assert out[0, 0] == pytest.approx(SIGMA_STAR, abs=1e-12)


class TestFiniteGain:
    def test_scalar_initial_gain(self, scalar_system):
        assert finite_gain(scalar_system, [[5.0]])[0, 0] == pytest.approx(5.0 / 3.0, abs=1e-9)

    def test_zero_plant_zero_gain(self, zero_plant):
        assert finite_gain(zero_plant, [[3.0]])[0, 0] == pytest.approx(0.0)

    def test_scalar_steady_state_gain(self, scalar_system):
        gain = finite_gain(scalar_system, [[SIGMA_STAR]])
        assert gain[0, 0] == pytest.approx(1.61803, abs=1e-4)


class TestLyapunovStep:
    def test_matches_recursion_at_optimal_gain(self, scalar_system):
        sigma = np.array([[5.0]])
        gain = finite_gain(scalar_system, sigma)
        assert np.allclose(lyapunov_step(scalar_system, sigma, gain), frde_step(scalar_system, sigma))

    def test_zero_gain(self, scalar_system):
        out = lyapunov_step(scalar_system, [[5.0]], [[0.0]])
        assert out[0, 0] == pytest.approx(4.0 * 5.0 + 1.0)

    def test_scalar_hand_value(self, scalar_system):
        out = lyapunov_step(scalar_system, [[5.0]], [[1.0]])
        assert out[0, 0] == pytest.approx(7.0)


class TestSolveFare:
    def test_scalar_ground_truth(self, scalar_system):
        fare = solve_fare(scalar_system)
        assert fare.sigma_star[0, 0] == pytest.approx(SIGMA_STAR, abs=1e-9)
        assert fare.gain_star[0, 0] == pytest.approx(GAIN_STAR, abs=1e-6)
        assert fare.a_closed[0, 0] == pytest.approx(2.0 - GAIN_STAR, abs=1e-6)
        assert fare.residual <= 1e-10
        assert fare.induced_norm_acl < 1.0
        assert spectral_radius(fare.a_closed) < 1.0

    def test_vector_gain(self, vector_system):
        fare = solve_fare(vector_system)
        expected = np.array([[9.8979, -0.0197], [0.1099, 9.9021]])
        assert np.allclose(fare.gain_star, expected, atol=1e-3)

    def test_zero_plant_degenerates(self, zero_plant):
        fare = solve_fare(zero_plant)
        assert fare.sigma_star[0, 0] == pytest.approx(1.0, abs=1e-12)
        assert fare.gain_star[0, 0] == pytest.approx(0.0, abs=1e-12)
        assert fare.a_closed[0, 0] == pytest.approx(0.0, abs=1e-12)

    def test_budget_exhaustion_raises(self, scalar_system):
        with pytest.raises(ConvergenceError):
            solve_fare(scalar_system, tol=1e-15, max_iter=3)


class TestRiccatiTrace:
    def test_scalar_one_step(self, scalar_system):
        trace = riccati_trace(scalar_system, 1)
        assert trace.sigmas[0][0, 0] == pytest.approx(5.0)
        assert trace.sigmas[1][0, 0] == pytest.approx(13.0 / 3.0, abs=1e-9)
        assert trace.gains[0][0, 0] == pytest.approx(5.0 / 3.0, abs=1e-9)

    def test_converges_to_steady_state(self, scalar_system):
        fare = solve_fare(scalar_system)
        trace = riccati_trace(scalar_system, 30)
        assert np.linalg.norm(trace.sigmas[30] - fare.sigma_star, 2) <= 1e-8

    def test_zero_plant(self, zero_plant):
        trace = riccati_trace(zero_plant, 2)
        assert [s[0, 0] for s in trace.sigmas] == pytest.approx([5.0, 1.0, 1.0])
        assert [g[0, 0] for g in trace.gains] == pytest.approx([0.0, 0.0])


class TestHorizonBound:
    def test_scalar(self, scalar_system):
        fare = solve_fare(scalar_system)
        assert horizon_bound(scalar_system, fare, 0.1) == 2

    def test_vector(self, vector_system):
        fare = solve_fare(vector_system)
        assert horizon_bound(vector_system, fare, 0.8) == 2

    def test_floor_at_one(self, scalar_system):
        fare = solve_fare(scalar_system)
        assert horizon_bound(scalar_system, fare, 1e9) == 1

    def test_rejects_nonpositive_eps(self, scalar_system):
        fare = solve_fare(scalar_system)
        with pytest.raises(PreconditionError):
            horizon_bound(scalar_system, fare, 0.0)


class TestRdeDifferenceStep:
    def test_equal_covariances_vanish(self, vector_system):
        sigma = 1.5 * np.eye(2)
        out = rde_difference_step(vector_system, sigma, sigma)
        assert np.allclose(out, 0.0, atol=1e-12)

    def test_scalar_hand_value(self, scalar_system):
        out = rde_difference_step(scalar_system, [[SIGMA_STAR]], [[5.0]])
        direct = frde_step(scalar_system, [[5.0]]) - frde_step(scalar_system, [[SIGMA_STAR]])
        assert out[0, 0] == pytest.approx(0.0972654, abs=1e-6)
        assert out[0, 0] == pytest.approx(direct[0, 0], abs=1e-8)

    def test_matches_direct_difference_random(self, vector_system):
        rng = np.random.default_rng(31)
        for _ in range(20):
            s1 = random_spd(rng, 2)
            s2 = random_spd(rng, 2)
            out = rde_difference_step(vector_system, s1, s2)
            direct = frde_step(vector_system, s2) - frde_step(vector_system, s1)
            assert np.linalg.norm(out - direct) <= 1e-9 * max(1.0, np.linalg.norm(direct))


class TestGainGapIdentity:
    def test_zero_at_steady_state(self, scalar_system):
        fare = solve_fare(scalar_system)
        out = gain_gap_identity(scalar_system, fare, fare.sigma_star)
        assert np.allclose(out, 0.0, atol=1e-12)

    def test_scalar_hand_value(self, scalar_system):
        fare = solve_fare(scalar_system)
        out = gain_gap_identity(scalar_system, fare, [[5.0]])
        direct = finite_gain(scalar_system, [[5.0]]) - fare.gain_star
        assert out[0, 0] == pytest.approx(0.0486327, abs=1e-6)
        assert out[0, 0] == pytest.approx(direct[0, 0], abs=1e-8)

    def test_matches_direct_difference_random(self, vector_system):
        fare = solve_fare(vector_system)
        rng = np.random.default_rng(32)
        for _ in range(20):
            sigma = random_spd(rng, 2)
            out = gain_gap_identity(vector_system, fare, sigma)
            direct = finite_gain(vector_system, sigma) - fare.gain_star
            assert np.linalg.norm(out - direct) <= 1e-9 * max(1.0, np.linalg.norm(direct))


class TestErrorConstants:
    def test_scalar_trace(self, scalar_system):
        fare = solve_fare(scalar_system)
        trace = riccati_trace(scalar_system, 30)
        consts = error_constants(scalar_system, fare, trace)
        assert consts.phi == pytest.approx(0.38197, abs=1e-4)
        assert consts.c1 == pytest.approx(consts.phi)
        # 2 (||V|| + ||C||^2 (||X0|| + ||Sigma*||)) = 2 (1 + 5 + Sigma*)
        assert consts.c3 == pytest.approx(2.0 * (6.0 + SIGMA_STAR), abs=1e-6)
        assert not consts.degenerate

    def test_zero_plant_degenerate_flag(self, zero_plant):
        fare = solve_fare(zero_plant)
        trace = riccati_trace(zero_plant, 5)
        consts = error_constants(zero_plant, fare, trace)
        assert consts.phi == 0.0
        assert consts.c1 == 0.0
        assert consts.degenerate

    def test_vector_constants_finite_positive(self, vector_system):
        fare = solve_fare(vector_system)
        trace = riccati_trace(vector_system, 10)
        consts = error_constants(vector_system, fare, trace)
        for value in (consts.phi, consts.c1, consts.c2, consts.c3):
            assert np.isfinite(value) and value > 0
        assert not consts.degenerate


class TestStructuralProperties:
    def test_three_forms_identity_random(self):
        rng = np.random.default_rng(41)
        for _ in range(25):
            sys = random_system(rng, rng.integers(1, 4), rng.integers(1, 4))
            sigma = random_spd(rng, sys.n)
            gain = finite_gain(sys, sigma)
            standard = frde_step(sys, sigma)
            one_sided = (sys.a - gain @ sys.c) @ sigma @ sys.a.T + sys.w
            lyap = lyapunov_step(sys, sigma, gain)
            scale = max(1.0, np.linalg.norm(standard))
            assert np.linalg.norm(standard - (one_sided + one_sided.T) / 2) <= 1e-10 * scale
            assert np.linalg.norm(standard - lyap) <= 1e-10 * scale

    def test_monotone_trace(self, scalar_system, vector_system):
        for sys in (scalar_system, vector_system):
            fare = solve_fare(sys)
            trace = riccati_trace(sys, 25)
            for t in range(25):
                step_down = trace.sigmas[t] - trace.sigmas[t + 1]
                above_star = trace.sigmas[t + 1] - fare.sigma_star
                assert np.linalg.eigvalsh(step_down).min() >= -1e-9
                assert np.linalg.eigvalsh(above_star).min() >= -1e-9

    def test_weighted_contraction_along_trace(self, scalar_system, vector_system):
        for sys in (scalar_system, vector_system):
            fare = solve_fare(sys)
            trace = riccati_trace(sys, 20)
            rate = fare.induced_norm_acl**2
            for t in range(20):
                before = weighted_induced_norm(trace.sigmas[t] - fare.sigma_star, fare.sigma_star)
                after = weighted_induced_norm(trace.sigmas[t + 1] - fare.sigma_star, fare.sigma_star)
                if before <= 1e-12:
                    continue
                assert after <= rate * before + 1e-9

    def test_horizon_bound_sound_over_grid(self, scalar_system):
        fare = solve_fare(scalar_system)
        for eps in np.logspace(-1, -4, 7):
            n = horizon_bound(scalar_system, fare, eps)
            trace = riccati_trace(scalar_system, n)
            last_gain = trace.gains[n - 1]
            assert np.linalg.norm(last_gain - fare.gain_star, 2) <= eps
            assert spectral_radius(scalar_system.a - last_gain @ scalar_system.c) < 1.0

    def test_closed_form_gain_minimizes_propagation(self):
        rng = np.random.default_rng(42)
        for _ in range(25):
            sys = random_system(rng, rng.integers(1, 4), rng.integers(1, 4))
            sigma = random_spd(rng, sys.n)
            best = frde_step(sys, sigma)
            gain = rng.normal(size=(sys.n, sys.m))
            gap = lyapunov_step(sys, sigma, gain) - best
            assert np.linalg.eigvalsh(gap).min() >= -1e-9
