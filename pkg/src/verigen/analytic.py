"""Closed-form expected rewards for best-of-N selection with a verifier."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

from .models import DiscreteGenerator, DomainError, _check_count, _check_prob, mallows_dispersion


@dataclass(frozen=True)
class DiscreteResult:
    expected_naive: float
    expected_with_verifier: float
    Q: float


@dataclass(frozen=True)
class ContinuousResult:
    rho: float
    ez_n_approx: float
    delta_ver: float
    expected_with_verifier: float


def _generator(gen) -> DiscreteGenerator:
    return gen if isinstance(gen, DiscreteGenerator) else DiscreteGenerator(gen)


def expected_reward_naive(gen) -> float:
    """Expected reward of executing a single unverified sample."""
    return _generator(gen).p_G


def _with_verifier(p_G: float, p_V1: float, p_V0: float, N: int) -> DiscreteResult:
    # Q is the probability that one sample is labelled good.
    Q = p_G * p_V1 + (1.0 - p_G) * (1.0 - p_V0)
    if Q <= 0.0 or Q >= 1.0:
        # Every label is identical, so selection is uniform over the batch.
        return DiscreteResult(p_G, p_G, Q)
    all_rejected = math.exp(N * math.log1p(-Q))
    value = ((1.0 - all_rejected) * p_G * p_V1 / Q
             + all_rejected * p_G * (1.0 - p_V1) / (1.0 - Q))
    return DiscreteResult(p_G, value, Q)


def expected_reward_with_verifier_independent(gen, p_V: float, N: int) -> DiscreteResult:
    """Best-of-N with a verifier that is right with probability ``p_V`` on any action."""
    p_G = _generator(gen).p_G
    _check_prob("p_V", p_V)
    _check_count("N", N)
    return _with_verifier(p_G, p_V, p_V, N)


def expected_reward_with_verifier_dependent(gen, p_V1: float, p_V0: float, N: int) -> DiscreteResult:
    """Best-of-N when verifier accuracy depends on the true reward.

    ``p_V1`` is the accuracy on good actions and ``p_V0`` on bad ones.
    """
    p_G = _generator(gen).p_G
    _check_prob("p_V1", p_V1)
    _check_prob("p_V0", p_V0)
    _check_count("N", N)
    return _with_verifier(p_G, p_V1, p_V0, N)


def approx_expected_max_std_normal(N: int) -> float:
    """Extreme-value approximation of E[max of N standard normals].

    Undefined at N = 1, where ln ln N diverges.
    """
    _check_count("N", N, minimum=2)
    root = math.sqrt(2.0 * math.log(N))
    return (root
            - (math.log(math.log(N)) + math.log(4.0 * math.pi)) / (2.0 * root)
            + np.euler_gamma / root)


def exact_expected_max_std_normal(N: int) -> float:
    """E[max of N standard normals] by adaptive quadrature on [-10, 10]."""
    _check_count("N", N)
    if N == 1:
        return 0.0

    def integrand(z):
        # N z phi(z) Phi(z)^(N-1), with the power taken in log space
        return N * z * math.exp(-0.5 * z * z + (N - 1) * special.log_ndtr(z)) / math.sqrt(2 * math.pi)

    # The density of the maximum concentrates near the EVT location.
    centre = approx_expected_max_std_normal(N)
    value, _ = integrate.quad(integrand, -10.0, 10.0, points=[0.0, centre],
                              epsabs=1e-10, epsrel=1e-12, limit=500)
    return value


def delta_ver(sigma_G: float, sigma_V: float, N: int, *, mu_G: float = 0.0,
              method: str = "approx") -> ContinuousResult:
    """Expected gain of best-of-N over one sample for normal rewards and noise.

    ``method="approx"`` uses the extreme-value approximation for E[Z_(N)];
    ``method="exact"`` uses quadrature.  N = 1 gives zero gain either way.
    """
    if not (math.isfinite(sigma_G) and sigma_G > 0):
        raise DomainError(f"sigma_G must be > 0, got {sigma_G}")
    if not (math.isfinite(sigma_V) and sigma_V >= 0):
        raise DomainError(f"sigma_V must be >= 0, got {sigma_V}")
    _check_count("N", N)
    if method not in ("approx", "exact"):
        raise ValueError(f"unknown method {method!r}")
    spread = math.hypot(sigma_G, sigma_V)
    rho = sigma_G / spread
    if N == 1:
        ez = 0.0
    elif method == "approx":
        ez = approx_expected_max_std_normal(N)
    else:
        ez = exact_expected_max_std_normal(N)
    delta = ez * sigma_G * rho
    return ContinuousResult(rho, ez, delta, mu_G + delta)


def pairwise_uniform_improvement(p_V: float, N: int, lo: float = 0.0, hi: float = 1.0) -> float:
    """Exact gain of best-of-N under the Mallows pairwise verifier with U(lo, hi) rewards.

    The true rank-i item ends on top iff it was inserted at the head and no
    later item was; rank i (0 = best) has expected reward at the
    (N - i)/(N + 1) quantile.
    """
    _check_count("N", N)
    q = mallows_dispersion(p_V, N)
    d = np.arange(N)
    if q == 0.0:
        head = (d == 0).astype(np.float64)
    else:
        head = np.array([q**m / np.sum(q ** np.arange(m + 1)) for m in range(N)])
    top = np.array([head[i] * np.prod(1.0 - head[i + 1:]) for i in range(N)])
    rank_means = lo + (hi - lo) * (N - d) / (N + 1)
    return float(np.dot(top, rank_means) - 0.5 * (lo + hi))
