"""Sampling of Y = theta theta^T / sqrt(n) + Z with reproducible seeding.

Randomness is split into independent named streams derived from the seed
(signal, off-diagonal noise, diagonal noise), so the two diagonal
conventions share every off-diagonal entry and differ only on the diagonal.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .prior import DiscretePrior, InvalidParameter

_STREAM_THETA = 0
_STREAM_OFFDIAG = 1
_STREAM_DIAG = 2


class Diagonal(enum.Enum):
    GOE_VAR2 = "goe"
    UNIT_VAR1 = "unit"

    @classmethod
    def parse(cls, value) -> "Diagonal":
        if isinstance(value, cls):
            return value
        for member in cls:
            if value in (member.value, member.name):
                return member
        raise InvalidParameter(f"unknown diagonal convention {value!r}")

    @property
    def diag_std(self) -> float:
        return np.sqrt(2.0) if self is Diagonal.GOE_VAR2 else 1.0


@dataclass(frozen=True)
class Observation:
    n: int
    Y: np.ndarray
    theta: np.ndarray
    seed: int
    diagonal: Diagonal

    @property
    def signal(self) -> np.ndarray:
        return np.outer(self.theta, self.theta) / np.sqrt(self.n)


def stream(seed, tag: int) -> np.random.Generator:
    """Independent generator for the (seed, tag) pair.

    ``seed`` may be an int or a tuple of ints (e.g. base seed, grid index,
    replicate index).
    """
    key = tuple(seed) if isinstance(seed, (tuple, list)) else (int(seed),)
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(list(key) + [tag])))


def _symmetric_noise(n: int, seed, diagonal: Diagonal, block: int = 1024) -> np.ndarray:
    # row-major draw; entry (i, j), i < j, takes the (i, j) draw. Mirrored in
    # row blocks so peak memory stays near one n x n array.
    Z = stream(seed, _STREAM_OFFDIAG).standard_normal((n, n))
    for i0 in range(0, n, block):
        i1 = min(i0 + block, n)
        Z[i0:i1, i0:i1] = np.triu(Z[i0:i1, i0:i1], 1)
        Z[i0:i1, i0:i1] += Z[i0:i1, i0:i1].T.copy()
        Z[i0:i1, :i0] = Z[:i0, i0:i1].T
    d = stream(seed, _STREAM_DIAG).standard_normal(n)
    Z[np.diag_indices(n)] = diagonal.diag_std * d
    return Z


def sample_goe(n: int, rng=0, diagonal=Diagonal.GOE_VAR2) -> np.ndarray:
    """Symmetric Gaussian matrix: N(0,1) off the diagonal, N(0,2) on it (GOE).

    ``rng`` is a seed (int or tuple); pass ``diagonal="unit"`` for unit
    variance on the diagonal.
    """
    if n < 2:
        raise InvalidParameter("n must be at least 2")
    return _symmetric_noise(n, rng, Diagonal.parse(diagonal))


def sample_observation(prior: DiscretePrior, n: int, seed=0, diagonal=Diagonal.GOE_VAR2,
                       noiseless: bool = False) -> Observation:
    if n < 2:
        raise InvalidParameter("n must be at least 2")
    diagonal = Diagonal.parse(diagonal)
    theta = prior.sample(n, stream(seed, _STREAM_THETA))
    Y = np.outer(theta, theta) / np.sqrt(n)
    if not noiseless:
        Y += _symmetric_noise(n, seed, diagonal)
    key = seed if isinstance(seed, int) else hash(tuple(seed)) & (2**63 - 1)
    return Observation(n=n, Y=Y, theta=theta, seed=key, diagonal=diagonal)


def sample_batch(prior: DiscretePrior, n: int, size: int, rng: np.random.Generator,
                 diagonal=Diagonal.UNIT_VAR1):
    """Vectorised draw of ``size`` independent (theta, Y) pairs.

    Used by the Monte-Carlo estimators, where one generator drives a whole
    batch. Returns arrays of shape (size, n) and (size, n, n).
    """
    diagonal = Diagonal.parse(diagonal)
    theta = prior.a[rng.choice(len(prior.atoms), size=(size, n), p=prior.w)]
    iu = np.triu_indices(n, 1)
    Y = np.empty((size, n, n))
    off = rng.standard_normal((size, iu[0].size))
    Y[:, iu[0], iu[1]] = off
    Y[:, iu[1], iu[0]] = off
    di = np.arange(n)
    Y[:, di, di] = diagonal.diag_std * rng.standard_normal((size, n))
    Y += theta[:, :, None] * theta[:, None, :] / np.sqrt(n)
    return theta, Y
