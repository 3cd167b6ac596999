"""Generator, verifier and selection models shared by the analytic and
Monte-Carlo code.

Sampling and scoring work on a single candidate batch (a single stream and
1-D rewards) or on a block of trials (a stream block and 2-D rewards of shape
``(trials, N)``); the random stream decides which.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq

from .rng import RandomStream


class DomainError(ValueError):
    """A parameter lies outside the domain where a model is defined."""


def _check_prob(name: str, p: float, *, open_: bool = False) -> None:
    if not (isinstance(p, (int, float)) and math.isfinite(p)):
        raise DomainError(f"{name} must be a finite number, got {p!r}")
    if open_ and not 0.0 < p < 1.0:
        raise DomainError(f"{name} must lie in (0, 1), got {p}")
    if not 0.0 <= p <= 1.0:
        raise DomainError(f"{name} must lie in [0, 1], got {p}")


def _check_count(name: str, n: int, minimum: int = 1) -> None:
    if isinstance(n, bool) or not isinstance(n, (int, np.integer)) or n < minimum:
        raise DomainError(f"{name} must be an integer >= {minimum}, got {n!r}")


# --------------------------------------------------------------------------
# discrete rewards
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class DiscreteGenerator:
    """Proposes actions whose reward is 1 with probability ``p_G``."""

    p_G: float

    def __post_init__(self):
        _check_prob("p_G", self.p_G, open_=True)

    def sample(self, rng: RandomStream, n: int) -> np.ndarray:
        return (rng.uniform(n) < self.p_G).astype(np.float64)


@dataclass(frozen=True)
class DiscreteVerifier:
    """Binary verifier with accuracy ``p_V1`` on good and ``p_V0`` on bad actions.

    ``independent(p)`` is stored as ``dependent(p, p)`` so both spellings run
    through identical arithmetic everywhere downstream.
    """

    p_V1: float
    p_V0: float
    kind: str = "dependent"

    def __post_init__(self):
        _check_prob("p_V1", self.p_V1)
        _check_prob("p_V0", self.p_V0)
        if self.kind not in ("independent", "dependent"):
            raise DomainError(f"unknown discrete verifier kind {self.kind!r}")
        if self.kind == "independent" and self.p_V1 != self.p_V0:
            raise DomainError("independent verifier needs p_V1 == p_V0")

    @classmethod
    def independent(cls, p_V: float) -> DiscreteVerifier:
        return cls(p_V, p_V, "independent")

    @classmethod
    def dependent(cls, p_V1: float, p_V0: float) -> DiscreteVerifier:
        return cls(p_V1, p_V0, "dependent")

    @property
    def p_V(self) -> float:
        if self.kind != "independent":
            raise AttributeError("p_V is only defined for an independent verifier")
        return self.p_V1

    def score(self, rewards: np.ndarray, rng: RandomStream) -> np.ndarray:
        """Binary labels: the true reward, flipped on a verifier error."""
        rewards = np.asarray(rewards, dtype=np.float64)
        if rewards.shape[-1] == 0:
            raise DomainError("empty candidate batch")
        u = rng.uniform(rewards.shape[-1])
        correct = u < np.where(rewards > 0.5, self.p_V1, self.p_V0)
        return np.where(correct, rewards, 1.0 - rewards)


# --------------------------------------------------------------------------
# continuous rewards
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ContinuousRewardModel:
    """Distribution of the true reward of a generated action.

    ``normal``: N(mu_G, sigma_G^2).  ``gmm``: equal-weight mixture of
    N(m, sigma_G^2) over ``means``.  ``uniform``: U(lo, hi).
    """

    kind: str
    mu_G: float = 0.0
    sigma_G: float = 1.0
    means: tuple[float, ...] = (-0.5, 0.5)
    weights: tuple[float, ...] = (0.5, 0.5)
    lo: float = 0.0
    hi: float = 1.0

    def __post_init__(self):
        if self.kind not in ("normal", "gmm", "uniform"):
            raise DomainError(f"unknown reward model kind {self.kind!r}")
        if self.kind in ("normal", "gmm") and not (math.isfinite(self.sigma_G) and self.sigma_G > 0):
            raise DomainError(f"sigma_G must be > 0, got {self.sigma_G}")
        if self.kind == "gmm":
            if len(self.means) != len(self.weights) or not self.means:
                raise DomainError("gmm needs one weight per component mean")
            if any(w < 0 for w in self.weights) or not math.isclose(sum(self.weights), 1.0):
                raise DomainError("gmm weights must be non-negative and sum to 1")
        if self.kind == "uniform" and not self.lo < self.hi:
            raise DomainError(f"uniform needs lo < hi, got [{self.lo}, {self.hi}]")

    @classmethod
    def normal(cls, mu_G: float = 0.0, sigma_G: float = 1.0) -> ContinuousRewardModel:
        return cls("normal", mu_G=mu_G, sigma_G=sigma_G)

    @classmethod
    def gmm(cls, sigma_G: float = 1.0, means=(-0.5, 0.5), weights=(0.5, 0.5)) -> ContinuousRewardModel:
        return cls("gmm", sigma_G=sigma_G, means=tuple(means), weights=tuple(weights))

    @classmethod
    def uniform(cls, lo: float = 0.0, hi: float = 1.0) -> ContinuousRewardModel:
        return cls("uniform", lo=lo, hi=hi)

    @property
    def mean(self) -> float:
        if self.kind == "normal":
            return self.mu_G
        if self.kind == "gmm":
            return float(np.dot(self.means, self.weights))
        return 0.5 * (self.lo + self.hi)

    def sample(self, rng: RandomStream, n: int) -> np.ndarray:
        if self.kind == "normal":
            return self.mu_G + self.sigma_G * rng.normal(n)
        if self.kind == "uniform":
            return self.lo + (self.hi - self.lo) * rng.uniform(n)
        cdf = np.cumsum(self.weights)
        cdf[-1] = 1.0
        component = np.searchsorted(cdf, rng.uniform(n), side="right")
        return np.asarray(self.means)[component] + self.sigma_G * rng.normal(n)


@dataclass(frozen=True)
class ContinuousVerifier:
    """Real-valued verifier.

    ``additive_noise``: score = reward + N(0, sigma_V^2).
    ``pairwise``: scores are a random re-ranking of the candidates in which a
    uniformly drawn pair with distinct rewards is ordered correctly with
    probability ``p_V`` (see :func:`mallows_dispersion`).
    """

    kind: str
    sigma_V: float = 0.0
    p_V: float = 1.0

    def __post_init__(self):
        if self.kind == "additive_noise":
            if not (math.isfinite(self.sigma_V) and self.sigma_V >= 0):
                raise DomainError(f"sigma_V must be >= 0, got {self.sigma_V}")
        elif self.kind == "pairwise":
            _check_prob("p_V", self.p_V)
            if self.p_V < 0.5:
                raise DomainError(f"pairwise p_V must lie in [0.5, 1], got {self.p_V}")
        else:
            raise DomainError(f"unknown continuous verifier kind {self.kind!r}")

    @classmethod
    def additive_noise(cls, sigma_V: float) -> ContinuousVerifier:
        return cls("additive_noise", sigma_V=sigma_V)

    @classmethod
    def pairwise(cls, p_V: float) -> ContinuousVerifier:
        return cls("pairwise", p_V=p_V)

    def score(self, rewards: np.ndarray, rng: RandomStream) -> np.ndarray:
        rewards = np.asarray(rewards, dtype=np.float64)
        n = rewards.shape[-1]
        if n == 0:
            raise DomainError("empty candidate batch")
        if self.kind == "additive_noise":
            return rewards + self.sigma_V * rng.normal(n)
        return _mallows_scores(rewards, mallows_dispersion(self.p_V, n), rng)


def score_candidates(true_rewards, verifier, rng: RandomStream) -> np.ndarray:
    """Verifier scores for a batch (or block of batches) of true rewards."""
    return verifier.score(true_rewards, rng)


def sample_true_reward(model: ContinuousRewardModel, rng: RandomStream) -> float:
    return float(model.sample(rng, 1)[0])


# --------------------------------------------------------------------------
# pairwise-accuracy verifier: Mallows re-ranking
# --------------------------------------------------------------------------


def _truncated_geometric_mean(q: float, m: int) -> float:
    """Mean of d on {0..m} with P(d) proportional to q**d."""
    d = np.arange(m + 1)
    w = q**d
    return float(np.dot(d, w) / w.sum())


def mallows_pairwise_accuracy(q: float, n: int) -> float:
    """Expected fraction of correctly ordered pairs under Mallows(q) on n items."""
    if n < 2:
        return 1.0
    inversions = sum(_truncated_geometric_mean(q, i) for i in range(1, n))
    return 1.0 - inversions / (n * (n - 1) / 2)


@lru_cache(maxsize=None)
def mallows_dispersion(p_V: float, n: int) -> float:
    """Dispersion q whose Mallows ranking has pairwise accuracy ``p_V`` on n items.

    q = 0 keeps the true ranking, q = 1 is a uniformly random permutation.
    """
    if n < 2 or p_V >= 1.0:
        return 0.0
    if p_V <= 0.5:
        return 1.0
    return brentq(lambda q: mallows_pairwise_accuracy(q, n) - p_V, 0.0, 1.0, xtol=1e-14)


def _displacements(q: float, i: int, u: np.ndarray) -> np.ndarray:
    """Inverse-CDF draw of d on {0..i} with P(d) proportional to q**d."""
    if q <= 0.0:
        return np.zeros(u.shape, dtype=np.int64)
    if q >= 1.0:
        return np.minimum(np.floor(u * (i + 1)), i).astype(np.int64)
    total = 1.0 - q ** (i + 1)
    d = np.floor(np.log1p(-u * total) / math.log(q))
    return np.clip(d, 0, i).astype(np.int64)


def _mallows_scores(rewards: np.ndarray, q: float, rng: RandomStream) -> np.ndarray:
    """Scores (negated final positions) of a Mallows re-ranking of ``rewards``.

    Repeated insertion: items enter best first; item i lands d_i places above
    the bottom of the current list, creating exactly d_i inversions.
    """
    n = rewards.shape[-1]
    u = rng.uniform(n)
    single = rewards.ndim == 1
    r2 = rewards[None, :] if single else rewards
    u2 = u[None, :] if single else u
    order = np.argsort(-r2, axis=-1, kind="stable")
    pos = np.zeros(r2.shape, dtype=np.int64)
    for i in range(1, n):
        j = i - _displacements(q, i, u2[:, i])
        head = pos[:, :i]
        head += head >= j[:, None]
        pos[:, i] = j
    scores = np.empty(r2.shape, dtype=np.float64)
    np.put_along_axis(scores, order, -pos.astype(np.float64), axis=-1)
    return scores[0] if single else scores


# --------------------------------------------------------------------------
# selection
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SelectionRule:
    """Best-of-N: pick uniformly at random among the maximal verifier scores."""

    N: int

    def __post_init__(self):
        _check_count("N", self.N)


def select_batch(scores: np.ndarray, rng: RandomStream) -> np.ndarray:
    """Argmax index along the last axis with uniform random tie-breaking."""
    scores = np.asarray(scores, dtype=np.float64)
    keys = rng.uniform(scores.shape[-1])
    best = scores.max(axis=-1, keepdims=True)
    return np.argmax(np.where(scores == best, keys, -1.0), axis=-1)


def select(scores, rule: SelectionRule, rng: RandomStream) -> int:
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 1 or len(scores) != rule.N:
        raise DomainError(f"expected {rule.N} scores, got shape {scores.shape}")
    return int(select_batch(scores, rng))
