"""Finite-support priors, Gaussian quadrature and the posterior-mean denoiser.

Every scalar expectation in the package is a finite double sum over prior
atoms and Gauss-Hermite nodes, so the helpers here are the single source of
truth for those sums.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.hermite_e import hermegauss

DEFAULT_QUAD_LEVEL = 300
DEFAULT_MAX_MOMENT = 8


class InvalidParameter(ValueError):
    """Raised when an input violates an operation's precondition."""


@dataclass(frozen=True)
class DiscretePrior:
    """Probability distribution with finitely many atoms.

    Atoms are sorted ascending and de-duplicated at construction; weights
    must be strictly positive and sum to one.
    """

    atoms: tuple
    weights: tuple
    max_moment: int = DEFAULT_MAX_MOMENT
    cached_moments: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        atoms = np.asarray(self.atoms, dtype=float).ravel()
        weights = np.asarray(self.weights, dtype=float).ravel()
        if atoms.size == 0 or atoms.shape != weights.shape:
            raise InvalidParameter("atoms and weights must be non-empty and of equal length")
        if not np.all(np.isfinite(atoms)) or not np.all(np.isfinite(weights)):
            raise InvalidParameter("atoms and weights must be finite")
        if np.any(weights <= 0):
            raise InvalidParameter("weights must be strictly positive")
        if abs(weights.sum() - 1.0) > 1e-12:
            raise InvalidParameter(f"weights sum to {weights.sum()!r}, not 1")
        order = np.argsort(atoms, kind="stable")
        atoms, weights = atoms[order], weights[order]
        if np.any(np.diff(atoms) == 0):
            raise InvalidParameter("atoms must be pairwise distinct")
        object.__setattr__(self, "atoms", tuple(atoms.tolist()))
        object.__setattr__(self, "weights", tuple(weights.tolist()))
        moments = {k: float(np.dot(weights, atoms**k)) for k in range(self.max_moment + 1)}
        object.__setattr__(self, "cached_moments", moments)

    @property
    def a(self) -> np.ndarray:
        return np.asarray(self.atoms)

    @property
    def w(self) -> np.ndarray:
        return np.asarray(self.weights)

    @property
    def mean(self) -> float:
        return self.cached_moments[1]

    @property
    def second_moment(self) -> float:
        return self.cached_moments[2]

    @property
    def variance(self) -> float:
        return self.second_moment - self.mean**2

    @property
    def sup_norm(self) -> float:
        """max_j |theta_j|; bounds the sub-Gaussian norm and the denoiser."""
        return float(np.max(np.abs(self.a)))

    def sample(self, size, rng: np.random.Generator) -> np.ndarray:
        idx = rng.choice(len(self.atoms), size=size, p=self.w)
        return self.a[idx]

    def to_dict(self) -> dict:
        return {"atoms": list(self.atoms), "weights": list(self.weights)}


@dataclass(frozen=True)
class Quadrature:
    """Nodes/weights for integrals against the standard normal density."""

    nodes: np.ndarray
    weights: np.ndarray

    def expect(self, values) -> float:
        return float(np.dot(self.weights, values))


def make_three_point(s: float, eps: float) -> DiscretePrior:
    """Prior (1-eps)/2 (delta_{-sqrt s} + delta_{sqrt s}) + eps delta_{sqrt(s/eps)}."""
    if not (s > 0) or not math.isfinite(s):
        raise InvalidParameter(f"s must be positive, got {s!r}")
    if not (0 < eps < 1):
        raise InvalidParameter(f"eps must lie in (0, 1), got {eps!r}")
    r = math.sqrt(s)
    return DiscretePrior(
        atoms=(-r, r, math.sqrt(s / eps)),
        weights=((1 - eps) / 2, (1 - eps) / 2, eps),
    )


def rademacher() -> DiscretePrior:
    return DiscretePrior(atoms=(-1.0, 1.0), weights=(0.5, 0.5))


def point_mass(c: float) -> DiscretePrior:
    return DiscretePrior(atoms=(float(c),), weights=(1.0,))


def prior_from_spec(spec) -> DiscretePrior:
    """Build a prior from a config mapping or a short string.

    Accepted mappings are ``{"atoms": [...], "weights": [...]}`` and
    ``{"family": "three_point", "s": ..., "eps": ...}``. Strings of the form
    ``three_point:s=1,eps=0.01``, ``rademacher`` and ``point:c=1`` are also
    understood (handy on the command line).
    """
    if isinstance(spec, DiscretePrior):
        return spec
    if isinstance(spec, str):
        name, _, rest = spec.partition(":")
        kw = {}
        for part in filter(None, rest.split(",")):
            k, _, v = part.partition("=")
            kw[k.strip()] = float(v)
        spec = {"family": name.strip(), **kw}
    if "atoms" in spec:
        return DiscretePrior(atoms=tuple(spec["atoms"]), weights=tuple(spec["weights"]))
    family = spec.get("family")
    if family == "three_point":
        return make_three_point(float(spec["s"]), float(spec.get("eps", 0.01)))
    if family == "rademacher":
        return rademacher()
    if family in ("point", "point_mass"):
        return point_mass(float(spec.get("c", 1.0)))
    raise InvalidParameter(f"unknown prior specification {spec!r}")


def moment(prior: DiscretePrior, k: int) -> float:
    if k < 0:
        raise InvalidParameter("moment order must be non-negative")
    if k in prior.cached_moments:
        return prior.cached_moments[k]
    return float(np.dot(prior.w, prior.a**k))


def _posterior_weights(prior: DiscretePrior, q: float, x):
    """Posterior weights over atoms given the effective observation x.

    Returns an array of shape x.shape + (n_atoms,), normalised along the
    last axis, with the exponent shifted by its max for stability.
    """
    x = np.asarray(x, dtype=float)
    a = prior.a
    expo = x[..., None] * a - 0.5 * q * a**2 + np.log(prior.w)
    expo -= expo.max(axis=-1, keepdims=True)
    p = np.exp(expo)
    p /= p.sum(axis=-1, keepdims=True)
    return p


def bayes_denoiser(prior: DiscretePrior, q: float, x):
    """E[Theta | q Theta + sqrt(q) G = x]; equals E[Theta] when q == 0."""
    if q < 0:
        raise InvalidParameter("q must be non-negative")
    x = np.asarray(x, dtype=float)
    if q == 0:
        out = np.full(x.shape, prior.mean)
    else:
        out = _posterior_weights(prior, q, x) @ prior.a
    return out if out.ndim else float(out)


def denoiser_derivative(prior: DiscretePrior, q: float, x):
    """d/dx of :func:`bayes_denoiser`, i.e. the posterior variance."""
    if q < 0:
        raise InvalidParameter("q must be non-negative")
    x = np.asarray(x, dtype=float)
    if q == 0:
        out = np.zeros(x.shape)
    else:
        p = _posterior_weights(prior, q, x)
        m1 = p @ prior.a
        m2 = p @ prior.a**2
        out = np.maximum(m2 - m1**2, 0.0)
    return out if out.ndim else float(out)


def gauss_quadrature(level: int = DEFAULT_QUAD_LEVEL) -> Quadrature:
    """Gauss-Hermite rule for E f(G), G ~ N(0, 1), exact to degree 2*level-1."""
    if level < 2:
        raise InvalidParameter("quadrature level must be at least 2")
    nodes, weights = hermegauss(level)
    weights = weights / weights.sum()
    return Quadrature(nodes=nodes, weights=weights)
