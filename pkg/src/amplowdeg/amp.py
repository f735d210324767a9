"""AMP with Onsager correction, its state evolution, and Bayes/polynomial AMP.

The iteration is

    x^{t+1} = Y F_t(x^t) / sqrt(n) - F_{t-1}(x^{t-1}) B_t^T,   x^0 = 0, B_0 = 0,

with B_t = E[dF_t(mu_t Theta + G_t)] taken from state evolution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial import Polynomial
from scipy.stats import norm, qmc

from .model import Observation
from .prior import (DiscretePrior, InvalidParameter, Quadrature, bayes_denoiser,
                    denoiser_derivative, gauss_quadrature)
from .scalar_theory import se_iterates

QMC_POINTS = 2**20


class NumericalDegeneracy(ArithmeticError):
    pass


# ---------------------------------------------------------------------------
# nonlinearities


class Nonlinearity:
    """Row-wise map R^dim -> R^dim with its Jacobian.

    Subclasses implement ``evaluate`` on arrays of shape (m, dim) and
    ``jacobian`` returning shape (m, dim, dim) with J[r, a, b] = dF_a/dx_b.
    """

    dim: int = 1
    descriptor: str = "generic"

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def jacobian(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, x):
        return self.evaluate(x)


class ScalarNonlinearity(Nonlinearity):
    """dim = 1 wrapper around a vectorised f and its derivative."""

    def __init__(self, f: Callable, fprime: Callable, descriptor="scalar"):
        self.f, self.fprime, self.descriptor = f, fprime, descriptor

    def evaluate(self, x):
        x = np.asarray(x, dtype=float)
        return np.asarray(self.f(x[..., 0]), dtype=float).reshape(x.shape)

    def jacobian(self, x):
        x = np.asarray(x, dtype=float)
        return np.asarray(self.fprime(x[..., 0]), dtype=float).reshape(x.shape + (1,))

    def scalar(self, x):
        return np.asarray(self.f(np.asarray(x, dtype=float)), dtype=float)

    def scalar_derivative(self, x):
        return np.asarray(self.fprime(np.asarray(x, dtype=float)), dtype=float)


class BayesDenoiser(ScalarNonlinearity):
    def __init__(self, prior: DiscretePrior, q: float):
        self.prior, self.q = prior, q
        super().__init__(lambda x: bayes_denoiser(prior, q, x),
                         lambda x: denoiser_derivative(prior, q, x),
                         descriptor=f"BayesDenoiser(q={q!r})")


class PolynomialNonlinearity(ScalarNonlinearity):
    """Univariate polynomial with power-basis coefficients (lowest first)."""

    def __init__(self, coeffs):
        self.poly = Polynomial(np.atleast_1d(np.asarray(coeffs, dtype=float)))
        self.dpoly = self.poly.deriv()
        super().__init__(self.poly, self.dpoly, descriptor=f"Polynomial(deg={self.poly.degree()})")

    @property
    def coeffs(self):
        return self.poly.coef


class LinearMap(Nonlinearity):
    """x -> M x applied row-wise (optionally plus a constant offset)."""

    def __init__(self, M, offset=None):
        self.M = np.atleast_2d(np.asarray(M, dtype=float))
        self.dim = self.M.shape[0]
        self.offset = np.zeros(self.dim) if offset is None else np.asarray(offset, dtype=float)
        self.descriptor = "Linear"

    def evaluate(self, x):
        return np.asarray(x, dtype=float) @ self.M.T + self.offset

    def jacobian(self, x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(self.M, x.shape[:-1] + self.M.shape).copy()


class MultiPolynomial(Nonlinearity):
    """Vector polynomial; ``terms[a]`` maps exponent tuples to coefficients of output a."""

    def __init__(self, terms: Sequence[dict], dim: int | None = None):
        self.terms = [dict(t) for t in terms]
        self.dim = len(self.terms) if dim is None else dim
        self.descriptor = "Polynomial(coeff table)"

    def evaluate(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1] + (len(self.terms),))
        for a, poly in enumerate(self.terms):
            for expo, c in poly.items():
                out[..., a] += c * np.prod(x ** np.asarray(expo), axis=-1)
        return out

    def jacobian(self, x):
        x = np.asarray(x, dtype=float)
        J = np.zeros(x.shape[:-1] + (len(self.terms), self.dim))
        for a, poly in enumerate(self.terms):
            for expo, c in poly.items():
                expo = np.asarray(expo)
                for b in range(self.dim):
                    if expo[b] == 0:
                        continue
                    e2 = expo.copy()
                    e2[b] -= 1
                    J[..., a, b] += c * expo[b] * np.prod(x ** e2, axis=-1)
        return J


def check_jacobian(F: Nonlinearity, rng: np.random.Generator, probes: int = 50,
                   scale: float = 1.0, h: float = 1e-6) -> float:
    """Max abs difference between F.jacobian and central differences."""
    x = scale * rng.standard_normal((probes, F.dim))
    J = F.jacobian(x)
    worst = 0.0
    for b in range(F.dim):
        e = np.zeros(F.dim)
        e[b] = h
        fd = (F.evaluate(x + e) - F.evaluate(x - e)) / (2 * h)
        worst = max(worst, float(np.max(np.abs(fd - J[:, :, b]))))
    return worst


# ---------------------------------------------------------------------------
# AMP iteration


@dataclass
class AmpState:
    t: int
    x: np.ndarray
    prev_F: np.ndarray
    onsager: np.ndarray

    @classmethod
    def initial(cls, n: int, dim: int = 1) -> "AmpState":
        return cls(t=0, x=np.zeros((n, dim)), prev_F=np.zeros((n, dim)), onsager=np.zeros((dim, dim)))


def amp_step(Y: np.ndarray, state: AmpState, F: Nonlinearity, B) -> AmpState:
    """One AMP update; ``B`` is the Onsager matrix B_t for this step."""
    n, dim = state.x.shape
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if Y.shape != (n, n) or B.shape != (dim, dim) or state.prev_F.shape != (n, dim):
        raise InvalidParameter("dimension mismatch in amp_step")
    Fx = F.evaluate(state.x)
    if Fx.shape != (n, dim):
        raise InvalidParameter("nonlinearity output has wrong shape")
    x_new = Y @ Fx / math.sqrt(n) - state.prev_F @ B.T
    return AmpState(t=state.t + 1, x=x_new, prev_F=Fx, onsager=B)


# ---------------------------------------------------------------------------
# vector state evolution


@dataclass
class VectorSEState:
    mu: np.ndarray
    Sigma: np.ndarray


def _sqrt_psd(Sigma: np.ndarray) -> np.ndarray:
    Sigma = 0.5 * (Sigma + Sigma.T)
    vals, vecs = np.linalg.eigh(Sigma)
    if vals.min() < -1e-8:
        raise NumericalDegeneracy(f"state-evolution covariance has eigenvalue {vals.min():.3e}")
    return vecs * np.sqrt(np.clip(vals, 0.0, None))


class GaussianLaw:
    """Discrete representation of (Theta, mu Theta + G), G ~ N(0, Sigma).

    Holds points ``x`` of shape (m, dim), matching ``theta`` of shape (m,)
    and weights summing to one. dim = 1 uses Gauss-Hermite nodes; dim > 1 a
    scrambled Sobol sequence with a fixed seed per (t).
    """

    def __init__(self, prior: DiscretePrior, state: VectorSEState, quad: Quadrature | None = None,
                 n_points: int = QMC_POINTS, qmc_seed: int = 0):
        mu = np.atleast_1d(state.mu)
        dim = mu.size
        if dim == 1:
            quad = gauss_quadrature() if quad is None else quad
            sd = math.sqrt(max(float(np.atleast_2d(state.Sigma)[0, 0]), 0.0))
            if np.atleast_2d(state.Sigma)[0, 0] < -1e-8:
                raise NumericalDegeneracy("negative state-evolution variance")
            g = sd * quad.nodes[:, None]
            gw = quad.weights
        else:
            L = _sqrt_psd(np.asarray(state.Sigma, dtype=float))
            sob = qmc.Sobol(d=dim, scramble=True, seed=qmc_seed)
            u = sob.random(n_points)
            z = norm.ppf(u)
            g = z @ L.T
            gw = np.full(n_points, 1.0 / n_points)
        a, w = prior.a, prior.w
        self.x = (a[:, None, None] * mu[None, None, :] + g[None, :, :]).reshape(-1, dim)
        self.theta = np.repeat(a, g.shape[0])
        self.weights = (w[:, None] * gw[None, :]).ravel()

    def expect(self, values: np.ndarray) -> np.ndarray:
        return np.tensordot(self.weights, values, axes=(0, 0))


def vector_se(prior: DiscretePrior, F_list: Sequence[Nonlinearity], T: int, quad=None,
              n_points: int = QMC_POINTS):
    """State evolution (mu_t, Sigma_t), t = 0..T, and Onsager matrices B_0..B_{T-1}.

    B_0 is the zero matrix (uninformative start); B_t for t >= 1 is
    E[dF_t(mu_t Theta + G_t)].
    """
    if len(F_list) < T:
        raise InvalidParameter("need one nonlinearity per iteration")
    dim = F_list[0].dim
    states = [VectorSEState(mu=np.zeros(dim), Sigma=np.zeros((dim, dim)))]
    Bs = []
    for t in range(T):
        law = GaussianLaw(prior, states[-1], quad, n_points=n_points, qmc_seed=t)
        Fx = F_list[t].evaluate(law.x)
        mu = law.expect(law.theta[:, None] * Fx)
        Sigma = law.expect(Fx[:, :, None] * Fx[:, None, :])
        Bs.append(np.zeros((dim, dim)) if t == 0 else law.expect(F_list[t].jacobian(law.x)))
        states.append(VectorSEState(mu=mu, Sigma=0.5 * (Sigma + Sigma.T)))
    return states, Bs


def onsager_from_se(prior, F: Nonlinearity, state: VectorSEState, quad=None, n_points=QMC_POINTS):
    law = GaussianLaw(prior, state, quad, n_points=n_points)
    return law.expect(F.jacobian(law.x))


# ---------------------------------------------------------------------------
# Bayes AMP / polynomial AMP


def empirical_mse(estimate, theta) -> float:
    estimate, theta = np.asarray(estimate, dtype=float), np.asarray(theta, dtype=float)
    if estimate.shape != theta.shape:
        raise InvalidParameter("estimate and theta must have equal length")
    return float(np.mean((estimate - theta) ** 2))


@dataclass
class AmpRun:
    estimates: list  # theta_hat^t, t = 0..T
    mse: list  # empirical MSE per iteration
    predicted_mse: list  # state-evolution prediction per iteration
    onsager: list  # scalar Onsager coefficients used, B_0..B_{T-1}
    iterates: list  # x^t, t = 0..T (n-vectors)


def _run_scalar_amp(obs: Observation, fs: Sequence[ScalarNonlinearity], Bs, T, onsager="se"):
    n = obs.n
    x = np.zeros(n)
    prev_f = np.zeros(n)
    xs, est, used = [x], [fs[0].scalar(x)], []
    for t in range(T):
        fx = fs[t].scalar(x)
        if onsager == "se":
            b = Bs[t]
        elif onsager == "empirical":
            b = 0.0 if t == 0 else float(np.mean(fs[t].scalar_derivative(x)))
        elif onsager == "none":
            b = 0.0
        else:
            raise InvalidParameter(f"unknown onsager mode {onsager!r}")
        x_new = obs.Y @ fx / math.sqrt(n) - b * prev_f
        prev_f, x = fx, x_new
        used.append(b)
        xs.append(x)
        est.append(fs[t + 1].scalar(x))
    mse = [empirical_mse(e, obs.theta) for e in est]
    return est, mse, used, xs


def bayes_amp(obs: Observation, prior: DiscretePrior, T: int, quad=None, onsager: str = "se") -> AmpRun:
    """Bayes AMP: F_t = posterior mean at the state-evolution SNR q_t.

    ``onsager`` is "se" (default, B_t from state evolution), "empirical"
    (average derivative over the iterate) or "none" (no correction).
    """
    if T < 1:
        raise InvalidParameter("T must be at least 1")
    quad = gauss_quadrature() if quad is None else quad
    qs = se_iterates(prior, T + 1, quad)
    fs = [BayesDenoiser(prior, q) for q in qs]
    Bs = [0.0]
    for t in range(1, T):
        q = qs[t]
        x = q * prior.a[:, None] + math.sqrt(q) * quad.nodes[None, :]
        Bs.append(float(prior.w @ denoiser_derivative(prior, q, x) @ quad.weights))
    est, mse, used, xs = _run_scalar_amp(obs, fs, Bs, T, onsager)
    predicted = [prior.second_moment - qs[t + 1] for t in range(T + 1)]
    return AmpRun(estimates=est, mse=mse, predicted_mse=predicted, onsager=used, iterates=xs)


def scalar_se(prior: DiscretePrior, fs: Sequence[ScalarNonlinearity], T: int, quad=None):
    """dim = 1 state evolution for scalar nonlinearities.

    Returns lists mu_0..mu_T, sigma2_0..sigma2_T, Onsager b_0..b_{T-1} and the
    predicted MSE of the estimate f_t(x^t) for t = 0..T (requires T+1
    functions for the last one).
    """
    quad = gauss_quadrature() if quad is None else quad
    mus, s2s, bs, pred = [0.0], [0.0], [], []

    def law(mu, s2):
        return mu * prior.a[:, None] + math.sqrt(max(s2, 0.0)) * quad.nodes[None, :]

    for t in range(len(fs)):
        x = law(mus[t], s2s[t])
        fx = fs[t].scalar(x)
        E = lambda v: float(prior.w @ v @ quad.weights)
        pred.append(E((prior.a[:, None] - fx) ** 2))
        if t == T:
            break
        bs.append(0.0 if t == 0 else E(fs[t].scalar_derivative(x)))
        mus.append(E(prior.a[:, None] * fx))
        s2s.append(E(fx**2))
    return mus, s2s, bs, pred


def polynomial_amp(obs: Observation, prior: DiscretePrior, poly_list, T: int, quad=None,
                   onsager: str = "se") -> AmpRun:
    """AMP with polynomial nonlinearities f_0..f_T (the last one only estimates)."""
    fs = [p if isinstance(p, ScalarNonlinearity) else PolynomialNonlinearity(p) for p in poly_list]
    if len(fs) < T + 1:
        fs = fs + [fs[-1]] * (T + 1 - len(fs))
    _, _, bs, pred = scalar_se(prior, fs, T, quad)
    est, mse, used, xs = _run_scalar_amp(obs, fs, bs, T, onsager)
    return AmpRun(estimates=est, mse=mse, predicted_mse=pred, onsager=used, iterates=xs)


@dataclass
class PolyFit:
    coeffs: np.ndarray  # power basis, lowest degree first
    l2_error: float  # mean squared deviation under the fitting law

    @property
    def nonlinearity(self) -> PolynomialNonlinearity:
        return PolynomialNonlinearity(self.coeffs)


def approx_denoiser(prior: DiscretePrior, q: float, mu: float, sigma: float, degree: int,
                    quad=None, target: Callable | None = None) -> PolyFit:
    """Least-squares polynomial fit of the Bayes denoiser under mu Theta + sigma G.

    The design is the atom x quadrature-node grid with product weights. The
    fit is computed in a scaled, orthogonalised basis and converted to the
    power basis. With ``sigma == 0`` the law is supported on the atoms and the
    degree is capped at (#distinct points - 1).
    """
    if degree < 1:
        raise InvalidParameter("degree must be at least 1")
    if sigma < 0:
        raise InvalidParameter("sigma must be non-negative")
    quad = gauss_quadrature(max(60, degree + 2)) if quad is None else quad
    f = target if target is not None else (lambda x: bayes_denoiser(prior, q, x))
    if sigma == 0:
        x = mu * prior.a
        wts = prior.w.copy()
        x, inv = np.unique(x, return_inverse=True)
        wts = np.bincount(inv, weights=wts)
    else:
        x = (mu * prior.a[:, None] + sigma * quad.nodes[None, :]).ravel()
        wts = (prior.w[:, None] * quad.weights[None, :]).ravel()
    y = np.asarray(f(x), dtype=float)
    deg = min(degree, len(x) - 1)
    if deg == 0 or np.ptp(x) == 0:
        c = np.array([float(wts @ y)])
        return PolyFit(coeffs=c, l2_error=float(wts @ (y - c[0]) ** 2))
    poly = Polynomial.fit(x, y, deg, w=np.sqrt(wts))
    resid = y - poly(x)
    return PolyFit(coeffs=poly.convert().coef, l2_error=float(wts @ resid**2))


def fitted_polynomial_se(prior: DiscretePrior, degree: int, T: int, quad=None):
    """Polynomial state evolution with adaptive least-squares denoisers.

    At each step the Bayes denoiser at the ideal SNR q_t is fitted under the
    current polynomial-SE law mu_t Theta + sigma_t G. Returns (fits, mus,
    sigma2s, qs) with mus/sigma2s/qs indexed 0..T.
    """
    quad = gauss_quadrature() if quad is None else quad
    qs = se_iterates(prior, T, quad)
    mus, s2s, fits = [0.0], [0.0], []
    for t in range(T):
        fit = approx_denoiser(prior, qs[t], mus[t], math.sqrt(max(s2s[t], 0.0)), degree, quad)
        fits.append(fit)
        f = fit.nonlinearity
        x = mus[t] * prior.a[:, None] + math.sqrt(max(s2s[t], 0.0)) * quad.nodes[None, :]
        fx = f.scalar(x)
        mus.append(float(prior.w @ (prior.a[:, None] * fx) @ quad.weights))
        s2s.append(float(prior.w @ fx**2 @ quad.weights))
    return fits, mus, s2s, qs
