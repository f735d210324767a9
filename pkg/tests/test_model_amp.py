import numpy as np
import pytest

from amplowdeg.amp import (BayesDenoiser, LinearMap, MultiPolynomial, PolynomialNonlinearity,
                           approx_denoiser, bayes_amp, check_jacobian, fitted_polynomial_se,
                           polynomial_amp, scalar_se, vector_se)
from amplowdeg.model import Diagonal, sample_batch, sample_goe, sample_observation, stream
from amplowdeg.prior import InvalidParameter, gauss_quadrature, make_three_point, rademacher
from amplowdeg.scalar_theory import se_iterates


class TestSampling:
    def test_goe_moments(self):
        Y = sample_goe(600, 3)
        np.testing.assert_array_equal(Y, Y.T)
        off = Y[np.triu_indices(600, 1)]
        np.testing.assert_allclose(off.var(), 1.0, atol=0.02)
        np.testing.assert_allclose(np.diag(Y).var(), 2.0, atol=0.35)
        np.testing.assert_allclose(np.diag(sample_goe(600, 3, "unit")).var(), 1.0, atol=0.2)

    def test_seed_determinism_and_independence(self):
        np.testing.assert_array_equal(sample_goe(50, (1, 2)), sample_goe(50, (1, 2)))
        assert not np.array_equal(sample_goe(50, (1, 2)), sample_goe(50, (1, 3)))
        a = stream(5, 0).standard_normal(4)
        b = stream(5, 1).standard_normal(4)
        assert not np.allclose(a, b)

    def test_observation_decomposes(self):
        p = make_three_point(1.0, 0.01)
        obs = sample_observation(p, 40, seed=7)
        noise = obs.Y - obs.signal
        np.testing.assert_allclose(noise, sample_goe(40, 7), atol=1e-13)
        clean = sample_observation(p, 40, seed=7, noiseless=True)
        np.testing.assert_allclose(clean.Y, obs.signal)

    def test_diagonal_parse(self):
        assert Diagonal.parse("unit") is Diagonal.UNIT_VAR1
        assert Diagonal.parse("GOE_VAR2") is Diagonal.GOE_VAR2
        with pytest.raises(InvalidParameter):
            Diagonal.parse("three")

    def test_batch_shapes_and_signal(self):
        p = rademacher()
        theta, Y = sample_batch(p, 5, 3, np.random.default_rng(0))
        assert theta.shape == (3, 5) and Y.shape == (3, 5, 5)
        np.testing.assert_array_equal(Y, Y.transpose(0, 2, 1))

    def test_small_n_rejected(self):
        with pytest.raises(InvalidParameter):
            sample_goe(1)


class TestNonlinearities:
    @pytest.mark.parametrize("F", [
        BayesDenoiser(make_three_point(1.0, 0.01), 0.7),
        PolynomialNonlinearity([0.1, -0.5, 0.0, 0.3]),
        LinearMap(np.array([[1.0, 2.0], [0.5, -1.0]])),
        MultiPolynomial([{(1, 0): 1.0, (0, 2): 0.5}, {(1, 1): 2.0, (0, 0): -1.0}]),
    ])
    def test_jacobian_matches_finite_differences(self, F):
        assert check_jacobian(F, np.random.default_rng(1)) < 1e-6


class TestStateEvolution:
    def test_vector_se_dim1_matches_scalar(self):
        p = make_three_point(1.0, 0.01)
        qs = se_iterates(p, 4)
        fs = [BayesDenoiser(p, q) for q in qs]
        states, Bs = vector_se(p, fs, 4)
        # Sigma uses E[f^2] like the scalar map; mu = E[Theta f] agrees only up to
        # Gauss-Hermite error on the sharp heavy-atom posterior
        np.testing.assert_allclose([s.Sigma[0, 0] for s in states], qs, atol=1e-12)
        np.testing.assert_allclose([s.mu[0] for s in states], qs, rtol=1e-4, atol=1e-12)
        mus, s2s, bs, _ = scalar_se(p, fs, 4)
        np.testing.assert_allclose([B[0, 0] for B in Bs], bs, atol=1e-12)

    def test_vector_se_block_diagonal_copies(self):
        # two copies of the same scalar map give a rank-one covariance
        p = make_three_point(1.0, 0.01)
        F = MultiPolynomial([{(1, 0): 1.0, (0, 0): 0.1}, {(1, 0): 1.0, (0, 0): 0.1}])
        states, _ = vector_se(p, [F] * 3, 3, n_points=2**14)
        S = states[-1].Sigma
        np.testing.assert_allclose(S, S[0, 0] * np.ones((2, 2)), rtol=1e-10)


class TestAmp:
    def test_prediction_tracks_se(self):
        p = make_three_point(0.5, 0.1)
        run = bayes_amp(sample_observation(p, 3000, seed=0), p, 6)
        qs = se_iterates(p, 7)
        np.testing.assert_allclose(run.predicted_mse, [p.second_moment - q for q in qs[1:]])
        np.testing.assert_allclose(run.mse, run.predicted_mse, rtol=0.08)

    def test_onsager_modes(self):
        p = make_three_point(0.5, 0.1)
        obs = sample_observation(p, 1500, seed=1)
        se = bayes_amp(obs, p, 5, onsager="se")
        emp = bayes_amp(obs, p, 5, onsager="empirical")
        np.testing.assert_allclose(se.mse, emp.mse, rtol=0.05)
        assert se.onsager[0] == 0.0
        with pytest.raises(InvalidParameter):
            bayes_amp(obs, p, 2, onsager="bogus")

    def test_polynomial_amp_linear(self):
        p = make_three_point(1.0, 0.1)
        run = polynomial_amp(sample_observation(p, 2000, seed=2), p, [[p.mean, 0.0], [0.0, 1.0]], 3)
        assert len(run.mse) == 4
        assert np.all(np.isfinite(run.mse))


class TestPolynomialFit:
    def test_degenerate_sigma_zero(self):
        p = make_three_point(1.0, 0.01)
        fit = approx_denoiser(p, 1.0, 1.0, 0.0, 7)
        assert fit.l2_error < 1e-20
        assert fit.coeffs.size <= 3

    def test_fit_improves_with_degree(self):
        p = make_three_point(1.0, 0.01)
        errs = [approx_denoiser(p, 1.0, 1.0, 1.0, d).l2_error for d in (1, 3, 5, 7)]
        assert np.all(np.diff(errs) <= 1e-12)

    def test_tanh_degree7(self):
        quad = gauss_quadrature()
        fit = approx_denoiser(rademacher(), 1.0, 1.0, 1.0, 7, quad)
        assert fit.l2_error < 2e-3

    def test_polynomial_se_close_to_bayes(self):
        p = make_three_point(1.0, 0.01)
        _, mus, _, qs = fitted_polynomial_se(p, 7, 5)
        for mu, q in zip(mus, qs):
            assert abs(mu - q) <= 0.05 * max(q, 0.01)
