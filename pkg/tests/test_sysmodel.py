import numpy as np
import pytest

from rhpgkf import (
    DimensionMismatchError,
    LtiSystem,
    PreconditionError,
    observability_rank,
    psd_sqrt,
    solve_fare,
    spectral_radius,
    validate_system,
    weighted_induced_norm,
)

GOLDEN = (1 + np.sqrt(5)) / 2  # steady-state gain of the scalar benchmark


class TestLtiSystem:
    def test_dimension_mismatch_names_field(self):
        with pytest.raises(DimensionMismatchError, match="c"):
            LtiSystem(a=[[1.0, 0.0], [0.0, 1.0]], c=[[1.0]], w=np.eye(2), v=[[1.0]],
                      x0_mean=[0.0, 0.0], x0_cov=np.eye(2))
        with pytest.raises(DimensionMismatchError, match="w"):
            LtiSystem(a=[[1.0]], c=[[1.0]], w=np.eye(2), v=[[1.0]], x0_mean=[0.0], x0_cov=[[1.0]])

    def test_covariances_symmetrized(self):
        sys = LtiSystem(a=np.eye(2), c=np.eye(2), w=[[1.0, 0.3], [0.1, 1.0]],
                        v=np.eye(2), x0_mean=[1.0, 0.0], x0_cov=np.eye(2))
        assert np.allclose(sys.w, sys.w.T)
        assert sys.w[0, 1] == pytest.approx(0.2)

    def test_fields_immutable(self, scalar_system):
        with pytest.raises(ValueError):
            scalar_system.a[0, 0] = 3.0


class TestValidateSystem:
    def test_scalar_system_passes(self, scalar_system):
        report = validate_system(scalar_system)
        assert report.passed
        assert report.observability_rank == 1

    def test_vector_system_passes_with_dominance(self, vector_system):
        fare = solve_fare(vector_system)
        report = validate_system(vector_system, fare)
        assert report.passed
        assert report.x0_dominates_sigma is True
        assert report.margins["x0_minus_sigma_star"] > 0

    def test_zero_process_noise_fails(self):
        sys = LtiSystem(a=[[2.0]], c=[[1.0]], w=[[0.0]], v=[[1.0]], x0_mean=[1.0], x0_cov=[[5.0]])
        report = validate_system(sys)
        assert not report.passed
        assert any(name == "w" and lam <= 0 for name, lam in report.pd_checks)

    def test_unobservable_fails(self):
        sys = LtiSystem(a=[[0.0]], c=[[0.0]], w=[[1.0]], v=[[1.0]], x0_mean=[1.0], x0_cov=[[1.0]])
        report = validate_system(sys)
        assert not report.passed
        assert report.observability_rank == 0

    def test_zero_initial_mean_fails(self):
        sys = LtiSystem(a=[[2.0]], c=[[1.0]], w=[[1.0]], v=[[1.0]], x0_mean=[0.0], x0_cov=[[5.0]])
        assert not validate_system(sys).passed

    @pytest.mark.parametrize("field", ["v", "x0_cov"])
    def test_each_pd_assumption_checked(self, field):
        values = dict(a=[[2.0]], c=[[1.0]], w=[[1.0]], v=[[1.0]], x0_mean=[1.0], x0_cov=[[5.0]])
        values[field] = [[-1.0]]
        report = validate_system(LtiSystem(**values))
        assert not report.passed


class TestSpectralRadius:
    def test_identity(self):
        assert spectral_radius(np.eye(2)) == pytest.approx(1.0)

    def test_vector_benchmark_plant(self, vector_system):
        assert spectral_radius(vector_system.a) == pytest.approx(10.0990, abs=1e-3)

    def test_nilpotent(self):
        assert spectral_radius([[0.0, 1.0], [0.0, 0.0]]) == pytest.approx(0.0)

    def test_similarity_invariance(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            mat = rng.normal(size=(4, 4))
            t = rng.normal(size=(4, 4)) + 3.0 * np.eye(4)
            sim = t @ mat @ np.linalg.inv(t)
            assert spectral_radius(sim) == pytest.approx(spectral_radius(mat), rel=1e-8)


class TestWeightedInducedNorm:
    def test_identity_weight_equals_spectral_norm(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            mat = rng.normal(size=(3, 3))
            assert weighted_induced_norm(mat, np.eye(3)) == pytest.approx(
                np.linalg.norm(mat, 2), rel=1e-12
            )

    def test_scalar_weight_cancels(self):
        rng = np.random.default_rng(12)
        for _ in range(10):
            x = rng.normal()
            wt = abs(rng.normal()) + 0.1
            assert weighted_induced_norm([[x]], [[wt]]) == pytest.approx(abs(x), rel=1e-12)

    def test_scalar_closed_loop_in_steady_state_weight(self, scalar_system):
        fare = solve_fare(scalar_system)
        value = weighted_induced_norm(fare.a_closed, fare.sigma_star)
        assert value == pytest.approx(0.38197, abs=1e-4)

    def test_rejects_indefinite_weight(self):
        with pytest.raises(PreconditionError):
            weighted_induced_norm(np.eye(2), [[1.0, 0.0], [0.0, -1.0]])


class TestPsdSqrt:
    def test_identity(self):
        assert np.allclose(psd_sqrt(np.eye(3)), np.eye(3))

    def test_diagonal(self):
        assert np.allclose(psd_sqrt(np.diag([4.0, 9.0])), np.diag([2.0, 3.0]))

    def test_squares_back_random(self):
        rng = np.random.default_rng(21)
        for n in range(1, 9):
            g = rng.normal(size=(n, n))
            mat = g @ g.T
            root = psd_sqrt(mat)
            assert np.allclose(root, root.T)
            assert np.linalg.norm(root @ root - mat) <= 1e-10 * max(1.0, np.linalg.norm(mat))

    def test_rejects_negative_matrix(self):
        with pytest.raises(PreconditionError):
            psd_sqrt([[-1.0]])

    def test_clamps_tiny_negative_eigenvalues(self):
        mat = np.array([[1.0, 1.0], [1.0, 1.0]]) - 1e-14 * np.eye(2)
        root = psd_sqrt(mat)
        assert np.all(np.linalg.eigvalsh(root) >= 0)


class TestObservabilityRank:
    def test_scalar(self):
        assert observability_rank([[2.0]], [[1.0]]) == 1

    def test_hidden_coordinate(self):
        assert observability_rank(np.eye(2), [[1.0, 0.0]]) == 1

    def test_vector_benchmark_pair(self, vector_system):
        assert observability_rank(vector_system.a, vector_system.c) == 2
