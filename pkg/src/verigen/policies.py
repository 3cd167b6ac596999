"""Action proposals, history-aware verification and episode evaluation.

The verifier is exact Bayes over the hidden environment parameter: it scores
each proposal by its posterior chance of succeeding given the interaction
history, and the policy executes the best-scored proposal.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .envs import (
    MODES,
    DoorAction,
    DoorEnv,
    InconsistentHistory,
    RodEnv,
    consistent_modes,
    door_step,
    rod_step,
    theoretical_com_interval,
    trace_record,
)
from .models import DomainError
from .montecarlo import Estimate, map_chunks
from .rng import RandomStream

log = logging.getLogger(__name__)

ENV_KINDS = ("door", "rod")
POLICY_KINDS = (
    "naive_generator",
    "verifier_selection",
    "oracle_sampler",
    "oracle_verifier",
    "history_conditioned_generator",
)
_MODE_INDEX = {m: i for i, m in enumerate(MODES)}


@dataclass(frozen=True)
class PolicySpec:
    """How a policy turns proposals into an action.

    ``fidelity`` is the conditioning strength of the history-conditioned
    generator.  ``verifier_accuracy``, when set, flips each verifier score
    to its complement with probability ``1 - verifier_accuracy``.
    """

    kind: str
    N: int = 1
    fidelity: float = 0.5
    verifier_accuracy: float | None = None
    quality_range: tuple[float, float] = (0.5, 1.0)

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise DomainError(f"unknown policy kind {self.kind!r}; expected one of {POLICY_KINDS}")
        if isinstance(self.N, bool) or not isinstance(self.N, int) or self.N < 1:
            raise DomainError(f"N must be an integer >= 1, got {self.N!r}")
        if not 0.0 <= self.fidelity <= 1.0:
            raise DomainError(f"fidelity must lie in [0, 1], got {self.fidelity}")
        if self.verifier_accuracy is not None and not 0.0 <= self.verifier_accuracy <= 1.0:
            raise DomainError(f"verifier_accuracy must lie in [0, 1], got {self.verifier_accuracy}")
        lo, hi = self.quality_range
        if not 0.0 < lo <= hi <= 1.0:
            raise DomainError(f"quality_range must satisfy 0 < lo <= hi <= 1, got {self.quality_range}")

    @property
    def label(self) -> str:
        return self.kind if self.kind == "naive_generator" else f"{self.kind}(N={self.N})"


@dataclass(frozen=True)
class ProposalBatch:
    candidates: tuple
    source: str

    def __len__(self) -> int:
        return len(self.candidates)


@dataclass(frozen=True)
class DoorPosterior:
    probs: tuple[float, ...]  # aligned with MODES

    def prob(self, mode: str) -> float:
        return self.probs[_MODE_INDEX[mode]]


@dataclass(frozen=True)
class RodPosterior:
    lo: float
    hi: float
    tolerance: float = 0.05


def _check_env_kind(env_kind: str) -> None:
    if env_kind not in ENV_KINDS:
        raise DomainError(f"unknown environment kind {env_kind!r}")


def env_kind_of(env) -> str:
    return "door" if isinstance(env, DoorEnv) else "rod"


# --------------------------------------------------------------------------
# generator
# --------------------------------------------------------------------------


def generate_proposals(env_kind: str, N: int, rng: RandomStream,
                       quality_range: tuple[float, float] = (0.5, 1.0)) -> ProposalBatch:
    """History-unconditional proposals: uniform modes and qualities, or uniform lift points."""
    _check_env_kind(env_kind)
    if N < 1:
        raise DomainError(f"N must be >= 1, got {N}")
    if env_kind == "door":
        modes = rng.integers(len(MODES), N)
        lo, hi = quality_range
        qualities = lo + (hi - lo) * rng.uniform(N)
        candidates = tuple(DoorAction(MODES[m], float(q)) for m, q in zip(modes, qualities))
        return ProposalBatch(candidates, f"uniform_modes(quality={lo}..{hi})")
    return ProposalBatch(tuple(float(x) for x in rng.uniform(N)), "uniform_lift")


# --------------------------------------------------------------------------
# verifier
# --------------------------------------------------------------------------


def bayes_posterior(history: Sequence, env_kind: str, tolerance: float = 0.05):
    """Posterior over the hidden parameter under a uniform prior."""
    _check_env_kind(env_kind)
    if env_kind == "door":
        alive = consistent_modes(history)
        return DoorPosterior(tuple(1.0 / len(alive) if m in alive else 0.0 for m in MODES))
    lo, hi = theoretical_com_interval(history, tolerance)
    return RodPosterior(lo, hi, tolerance)


def _rod_scores(x: np.ndarray, post: RodPosterior) -> tuple[np.ndarray, np.ndarray]:
    """Success probability and expected |x - com| for lift points ``x``."""
    lo, hi, eps = post.lo, post.hi, post.tolerance
    width = hi - lo
    if width <= 0.0:
        hit = (np.abs(x - lo) <= eps).astype(np.float64)
        return hit, np.abs(x - lo)
    overlap = np.clip(np.minimum(x + eps, hi) - np.maximum(x - eps, lo), 0.0, None)
    overlap = np.where(x + eps >= hi, np.where(x - eps <= lo, width, overlap), overlap)
    # exact value on the plateau so that equal-probability points tie exactly
    overlap = np.where((x - eps >= lo) & (x + eps <= hi), 2 * eps, overlap)
    inner = np.clip(x, lo, hi)
    distance = ((inner - lo) ** 2 + (hi - inner) ** 2) / (2 * width) + np.abs(x - inner)
    return overlap / width, distance


def _batch_scores(batch: ProposalBatch, posterior) -> tuple[np.ndarray, np.ndarray]:
    """Scores (higher is better) and tie-break keys (lower is better)."""
    if isinstance(posterior, DoorPosterior):
        probs = np.asarray(posterior.probs)
        modes = np.fromiter((_MODE_INDEX[c.mode] for c in batch.candidates), np.int64, len(batch))
        quality = np.fromiter((c.quality for c in batch.candidates), np.float64, len(batch))
        return probs[modes] * quality, np.zeros(len(batch))
    return _rod_scores(np.asarray(batch.candidates, dtype=np.float64), posterior)


def verifier_score(candidate, posterior, env_kind: str) -> float:
    """Door: expected opened amount.  Rod: posterior probability of a successful lift."""
    _check_env_kind(env_kind)
    if env_kind == "door":
        return posterior.prob(candidate.mode) * candidate.quality
    score, _ = _rod_scores(np.array([float(candidate)]), posterior)
    return float(score[0])


def expected_com_distance(lift_point: float, posterior: RodPosterior) -> float:
    """Posterior expectation of |lift_point - com|, the rod tie-break key."""
    _, distance = _rod_scores(np.array([float(lift_point)]), posterior)
    return float(distance[0])


def _best(scores: np.ndarray, tiebreak: np.ndarray, rng: RandomStream) -> int:
    keys = rng.uniform(len(scores))
    return int(np.lexsort((keys, tiebreak, -scores))[0])


# --------------------------------------------------------------------------
# acting
# --------------------------------------------------------------------------


def _posterior_sample(posterior, rng: RandomStream, quality_range):
    if isinstance(posterior, DoorPosterior):
        cdf = np.cumsum(posterior.probs)
        mode = MODES[min(int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right")), len(MODES) - 1)]
        lo, hi = quality_range
        return DoorAction(mode, lo + (hi - lo) * rng.random())
    return posterior.lo + (posterior.hi - posterior.lo) * rng.random()


def choose(policy: PolicySpec, env, history: Sequence, rng: RandomStream):
    """Pick an action; returns ``(action, batch)`` where batch is the scored set or None."""
    kind = env_kind_of(env)
    tolerance = getattr(env, "tolerance", 0.05)
    if policy.kind == "naive_generator":
        batch = generate_proposals(kind, 1, rng, policy.quality_range)
        return batch.candidates[0], None
    if policy.kind == "history_conditioned_generator":
        if rng.random() < policy.fidelity:
            posterior = bayes_posterior(history, kind, tolerance)
            return _posterior_sample(posterior, rng, policy.quality_range), None
        batch = generate_proposals(kind, 1, rng, policy.quality_range)
        return batch.candidates[0], None

    batch = generate_proposals(kind, policy.N, rng, policy.quality_range)
    if policy.kind == "oracle_verifier":
        target = env.optimal_action()
        if kind == "door":
            distance = np.array([abs(1.0 - c.quality) if c.mode == target.mode else np.inf
                                 for c in batch.candidates])
        else:
            distance = np.abs(np.asarray(batch.candidates) - target)
        return batch.candidates[_best(-distance, np.zeros(len(batch)), rng)], batch

    if policy.kind == "oracle_sampler":
        batch = ProposalBatch(batch.candidates + (env.optimal_action(),), batch.source + "+oracle")
    posterior = bayes_posterior(history, kind, tolerance)
    scores, tiebreak = _batch_scores(batch, posterior)
    if policy.verifier_accuracy is not None:
        flip = rng.uniform(len(batch)) >= policy.verifier_accuracy
        scores = np.where(flip, 1.0 - scores, scores)
    return batch.candidates[_best(scores, tiebreak, rng)], batch


def act(policy: PolicySpec, env, history: Sequence, rng: RandomStream):
    """The action the policy executes next."""
    return choose(policy, env, history, rng)[0]


# --------------------------------------------------------------------------
# episodes
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class EpisodeResult:
    """Summary of one episode.

    ``repeated_failures`` counts door actions reusing an already failed mode.
    ``interval_violations`` counts rod steps where the hidden com was outside
    the theoretical interval.  ``outside_interval`` counts rod steps whose
    lift point lay outside the interval although the batch had a point inside.
    """

    success: bool
    steps: int
    decisions: int
    repeated_failures: int = 0
    interval_violations: int = 0
    outside_interval: int = 0
    trace: tuple = field(default=(), repr=False)


def run_episode(env, policy: PolicySpec, rng: RandomStream, *, trace: bool = False) -> EpisodeResult:
    kind = env_kind_of(env)
    history: list = []
    records = []
    repeated = violations = outside = 0
    failed_modes: set[str] = set()
    while not env.terminated:
        interval = None
        if kind == "rod":
            interval = theoretical_com_interval(history, env.tolerance)
            if not interval[0] <= env.hidden_com <= interval[1]:
                violations += 1
        action, batch = choose(policy, env, history, rng)
        if kind == "door":
            repeated += action.mode in failed_modes
            env, outcome = door_step(env, action)
            if outcome.opened_amount == 0.0:
                failed_modes.add(action.mode)
        else:
            lo, hi = interval
            if not lo <= action <= hi and batch is not None and any(lo <= c <= hi for c in batch.candidates):
                outside += 1
            env, outcome = rod_step(env, action)
        history.append((action, outcome))
        if trace:
            record = trace_record(len(history), action, outcome, env)
            if interval is not None:
                record["interval"] = list(interval)
            records.append(record)
    success = env.opened if kind == "door" else env.lifted
    return EpisodeResult(success, env.steps, len(history), repeated, violations, outside, tuple(records))


def make_env(env_kind: str, rng: RandomStream, hidden=None, **params):
    _check_env_kind(env_kind)
    cls = DoorEnv if env_kind == "door" else RodEnv
    if hidden is not None:
        return cls(hidden, **params)
    return cls.sample(rng, **params)


@dataclass(frozen=True)
class PolicyEvaluation:
    policy: PolicySpec
    env_kind: str
    max_steps: int
    results: tuple[EpisodeResult, ...] = field(repr=False)

    @property
    def episodes(self) -> int:
        return len(self.results)

    def failure_rate(self, budget: int | None = None) -> Estimate:
        """Fraction of episodes not solved within ``budget`` steps (default: max_steps)."""
        budget = self.max_steps if budget is None else budget
        fails = np.array([not (r.success and r.steps <= budget) for r in self.results], dtype=np.float64)
        return Estimate.from_values(fails)

    def mean_steps(self) -> Estimate:
        """Mean episode length; unsolved episodes count as ``max_steps``."""
        steps = np.array([r.steps if r.success else self.max_steps for r in self.results], dtype=np.float64)
        return Estimate.from_values(steps)

    def valid_rate(self) -> float:
        """Fraction of door decisions that avoid a mode already seen to fail."""
        decisions = sum(r.decisions for r in self.results)
        return 1.0 - sum(r.repeated_failures for r in self.results) / decisions

    @property
    def interval_violations(self) -> int:
        return sum(r.interval_violations for r in self.results)

    @property
    def outside_interval(self) -> int:
        return sum(r.outside_interval for r in self.results)


def evaluate_policy(env_kind: str, policy: PolicySpec, episodes: int, seed: int, *,
                    env_params: dict | None = None, hidden: Sequence | None = None,
                    policy_seed: int | None = None, workers: int | None = None,
                    trace: bool = False) -> PolicyEvaluation:
    """Run ``episodes`` independent episodes.

    Episode i samples its hidden parameter from stream ``(seed, 0, i)`` (or
    takes ``hidden[i]``) and drives the policy from ``(policy_seed, 1, i)``.
    """
    _check_env_kind(env_kind)
    env_params = dict(env_params or {})
    policy_seed = seed if policy_seed is None else policy_seed
    if hidden is not None:
        hidden = list(hidden)
        episodes = len(hidden)
    if episodes < 1:
        raise DomainError("episodes must be >= 1")

    def chunk(start: int, stop: int) -> list[EpisodeResult]:
        out = []
        for i in range(start, stop):
            env_rng = RandomStream(seed, i, path=(0,))
            env = make_env(env_kind, env_rng, None if hidden is None else hidden[i], **env_params)
            out.append(run_episode(env, policy, RandomStream(policy_seed, i, path=(1,)), trace=trace))
        return out

    results = [r for part in map_chunks(chunk, episodes, workers, chunk=512) for r in part]
    max_steps = make_env(env_kind, RandomStream(seed), MODES[0] if env_kind == "door" else 0.5,
                         **env_params).max_steps
    return PolicyEvaluation(policy, env_kind, max_steps, tuple(results))


__all__ = [
    "ENV_KINDS", "POLICY_KINDS", "PolicySpec", "ProposalBatch", "DoorPosterior", "RodPosterior",
    "generate_proposals", "bayes_posterior", "verifier_score", "expected_com_distance", "act",
    "choose", "run_episode", "evaluate_policy", "PolicyEvaluation", "EpisodeResult",
    "InconsistentHistory", "make_env",
]
