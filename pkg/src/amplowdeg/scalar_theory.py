"""Scalar information-theoretic quantities for the rank-one spiked model.

``info`` is the mutual information of the scalar channel sqrt(q) Theta + G,
``psi`` the potential whose global minimiser gives the Bayes-optimal overlap,
and ``se_map`` the Bayes state-evolution map whose iterates from 0 give the
overlap reached by Bayes AMP.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq, minimize_scalar
from scipy.special import logsumexp

from .prior import DiscretePrior, Quadrature, bayes_denoiser, gauss_quadrature

log = logging.getLogger(__name__)

DEFAULT_GRID = 2000


@dataclass
class SETrace:
    qs: list
    converged: bool
    q_amp: float
    mse: list  # mse[t] = E[Theta^2] - q_{t+1}
    degenerate: bool = False


@dataclass
class PotentialProfile:
    grid: np.ndarray
    values: np.ndarray
    stationary_points: list
    q_bayes: float
    near_ties: list = field(default_factory=list)


def _quad(quad):
    return gauss_quadrature() if quad is None else quad


def info(q: float, prior: DiscretePrior, quad: Quadrature | None = None) -> float:
    """Mutual information between Theta and sqrt(q) Theta + G (nats)."""
    if q < 0:
        raise ValueError("q must be non-negative")
    if q == 0:
        return 0.0
    quad = _quad(quad)
    a, w = prior.a, prior.w
    rq = math.sqrt(q)
    # shift[k, j] = sqrt(q) (theta_k - theta_j); Y - sqrt(q) theta_j = shift + g
    shift = rq * (a[:, None] - a[None, :])
    z = shift[:, :, None] + quad.nodes[None, None, :]
    inner = logsumexp(-0.5 * z**2, axis=1, b=w[None, :, None])  # (k, g)
    return float(-(w @ inner @ quad.weights) - 0.5)


def psi(q: float, b: float, prior: DiscretePrior, quad: Quadrature | None = None) -> float:
    if q == 0:
        return 0.0
    return 0.25 * q * q - 0.5 * (prior.second_moment + b) * q + info(q, prior, quad)


def se_map(q: float, prior: DiscretePrior, quad: Quadrature | None = None) -> float:
    """E{ E[Theta | q Theta + sqrt(q) G]^2 }."""
    if q < 0:
        raise ValueError("q must be non-negative")
    if q == 0:
        return prior.mean**2
    quad = _quad(quad)
    x = q * prior.a[:, None] + math.sqrt(q) * quad.nodes[None, :]
    f = bayes_denoiser(prior, q, x)
    return float(prior.w @ (f**2) @ quad.weights)


def se_map_derivative(q: float, prior: DiscretePrior, quad=None, h: float = 1e-4) -> float:
    lo = max(q - h, 0.0)
    hi = q + h
    return (se_map(hi, prior, quad) - se_map(lo, prior, quad)) / (hi - lo)


def psi_derivative(q: float, prior: DiscretePrior, quad=None, b: float = 0.0, h: float = 1e-3) -> float:
    """Five-point finite-difference derivative of psi in q (one-sided near 0)."""
    if q >= 2 * h:
        f = [psi(q + k * h, b, prior, quad) for k in (-2, -1, 1, 2)]
        return (f[0] - 8 * f[1] + 8 * f[2] - f[3]) / (12 * h)
    f = [psi(q + k * h, b, prior, quad) for k in range(5)]
    return (-25 * f[0] + 48 * f[1] - 36 * f[2] + 16 * f[3] - 3 * f[4]) / (12 * h)


def se_trajectory(prior: DiscretePrior, quad=None, max_iters: int = 10000, tol: float = 1e-12) -> SETrace:
    """Iterate q_{t+1} = SE(q_t) from q_0 = 0 until |q_{t+1} - q_t| < tol."""
    quad = _quad(quad)
    if prior.mean == 0:
        log.warning("E[Theta] = 0: q = 0 is a fixed point, trajectory stays at 0")
    qs = [0.0]
    converged = False
    for _ in range(max_iters):
        nxt = se_map(qs[-1], prior, quad)
        qs.append(nxt)
        if abs(nxt - qs[-2]) < tol:
            converged = True
            break
    q_amp = qs[-1]
    m2 = prior.second_moment
    mse = [m2 - q for q in qs[1:]]
    degenerate = q_amp > 0 and abs(1 - se_map_derivative(q_amp, prior, quad)) / 2 < 1e-6
    if degenerate:
        log.warning("psi'' vanishes at q_amp=%g; fixed point is degenerate", q_amp)
    return SETrace(qs=qs, converged=converged, q_amp=q_amp, mse=mse, degenerate=degenerate)


def se_iterates(prior: DiscretePrior, T: int, quad=None) -> list:
    """q_0, ..., q_T without any stopping rule."""
    quad = _quad(quad)
    qs = [0.0]
    for _ in range(T):
        qs.append(se_map(qs[-1], prior, quad))
    return qs


def fixed_points(prior: DiscretePrior, quad=None, grid_size: int = DEFAULT_GRID, lo: float = 0.0) -> list:
    """Roots of SE(q) - q on [lo, E[Theta^2]], bracketed on a grid and refined."""
    quad = _quad(quad)
    g = lambda q: se_map(q, prior, quad) - q
    grid = np.linspace(lo, prior.second_moment, grid_size)
    vals = np.array([g(q) for q in grid])
    roots = []
    for i in range(len(grid) - 1):
        if vals[i] == 0:
            roots.append(float(grid[i]))
        elif vals[i] * vals[i + 1] < 0:
            roots.append(brentq(g, grid[i], grid[i + 1], xtol=1e-15, rtol=1e-15))
    if vals[-1] == 0:
        roots.append(float(grid[-1]))
    return roots


def _polish_stationary(q0: float, prior, quad, width: float) -> float:
    g = lambda q: se_map(q, prior, quad) - q
    lo, hi = max(q0 - width, 0.0), min(q0 + width, prior.second_moment)
    glo, ghi = g(lo), g(hi)
    if glo * ghi < 0:
        return brentq(g, lo, hi, xtol=1e-15, rtol=1e-15)
    return q0


def q_bayes(prior: DiscretePrior, quad=None, grid_size: int = DEFAULT_GRID, tie_tol: float = 1e-9):
    """Global minimiser of psi(.; 0) on [0, E[Theta^2]].

    Grid scan, golden-section refinement around the best grid point, then a
    root polish of SE(q) = q inside the refinement bracket. Near-degenerate
    competing minima (within ``tie_tol`` in psi) are reported on the profile
    and the smaller q wins.
    """
    if grid_size < 100:
        raise ValueError("grid_size must be at least 100")
    quad = _quad(quad)
    m2 = prior.second_moment
    grid = np.linspace(0.0, m2, grid_size)
    vals = np.array([psi(q, 0.0, prior, quad) for q in grid])
    step = grid[1] - grid[0]

    # candidate local minima on the grid (including endpoints)
    cand = [i for i in range(grid_size)
            if (i == 0 or vals[i] <= vals[i - 1]) and (i == grid_size - 1 or vals[i] <= vals[i + 1])]
    refined = []
    f = lambda q: psi(q, 0.0, prior, quad)
    for i in cand:
        a, c = grid[max(i - 1, 0)], grid[min(i + 1, grid_size - 1)]
        if i in (0, grid_size - 1):
            q = float(grid[i])
        else:
            res = minimize_scalar(f, bracket=(a, grid[i], c), method="golden", tol=1e-10)
            q = float(min(max(res.x, a), c))
        q = _polish_stationary(q, prior, quad, 2 * step)
        refined.append((f(q), q))
    refined.sort(key=lambda t: (t[0], t[1]))
    best_val = refined[0][0]
    ties = sorted(q for v, q in refined if v - best_val <= tie_tol)
    qstar = ties[0]
    stationary = fixed_points(prior, quad, grid_size)
    profile = PotentialProfile(grid=grid, values=vals, stationary_points=stationary,
                               q_bayes=qstar, near_ties=ties if len(ties) > 1 else [])
    return qstar, profile


def bayes_mse(prior: DiscretePrior, quad=None) -> float:
    return prior.second_moment - q_bayes(prior, quad)[0]


def amp_mse(prior: DiscretePrior, quad=None, t: int = 0) -> float:
    """Asymptotic Bayes-AMP MSE after t iterations: E[Theta^2] - q_{t+1}."""
    return prior.second_moment - se_iterates(prior, t + 1, quad)[-1]
