"""Deterministic Monte-Carlo engine for best-of-N selection.

Trial ``i`` of a plan draws only from the stream derived from
``(plan.seed, i)``, and per-trial values are reduced in trial-index order, so
results are bit-identical for any chunking or worker count.
"""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import analytic
from .models import (
    ContinuousRewardModel,
    ContinuousVerifier,
    DiscreteGenerator,
    DiscreteVerifier,
    DomainError,
    _check_count,
    select_batch,
)
from .rng import RandomStream

log = logging.getLogger(__name__)

MEASURES = ("expected_reward", "improvement_over_first_sample")
SWEEP_AXES = ("N", "sigma_G", "sigma_V", "p_V", "p_G")
CHUNK = 1 << 15


def resolve_workers(workers: int | None = None) -> int:
    """Worker count: explicit value, else VERIGEN_THREADS, else CPU count (0 = auto)."""
    if workers is None:
        raw = os.environ.get("VERIGEN_THREADS", "0")
        try:
            workers = int(raw)
        except ValueError:
            raise ValueError(f"VERIGEN_THREADS must be an integer, got {raw!r}") from None
    if workers < 0:
        raise ValueError(f"worker count must be >= 0, got {workers}")
    return workers or (os.cpu_count() or 1)


def map_chunks(fn, total: int, workers: int | None = None, chunk: int = CHUNK) -> list:
    """Apply ``fn(start, stop)`` over fixed-size index chunks, results in index order."""
    bounds = [(s, min(s + chunk, total)) for s in range(0, total, chunk)]
    workers = min(resolve_workers(workers), max(len(bounds), 1))
    if workers == 1:
        return [fn(a, b) for a, b in bounds]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda ab: fn(*ab), bounds))


@dataclass(frozen=True)
class Estimate:
    mean: float
    std_error: float
    trials: int

    @classmethod
    def from_values(cls, values: np.ndarray) -> Estimate:
        n = len(values)
        mean = float(np.sum(values) / n)
        if n < 2:
            return cls(mean, 0.0, n)
        var = float(np.sum((values - mean) ** 2) / (n - 1))
        return cls(mean, math.sqrt(var / n), n)


@dataclass(frozen=True)
class TrialPlan:
    """One Monte-Carlo experiment: N candidates per trial, ``trials`` trials."""

    N: int
    generator: DiscreteGenerator | ContinuousRewardModel
    verifier: DiscreteVerifier | ContinuousVerifier
    trials: int = 10000
    seed: int = 0
    measure: str = "expected_reward"

    def __post_init__(self):
        _check_count("N", self.N)
        _check_count("trials", self.trials)
        if self.measure not in MEASURES:
            raise DomainError(f"measure must be one of {MEASURES}, got {self.measure!r}")
        discrete = (isinstance(self.generator, DiscreteGenerator), isinstance(self.verifier, DiscreteVerifier))
        if discrete[0] != discrete[1]:
            raise DomainError("generator and verifier must both be discrete or both continuous")

    @property
    def is_discrete(self) -> bool:
        return isinstance(self.generator, DiscreteGenerator)


def trial_values(plan: TrialPlan, start: int, stop: int) -> np.ndarray:
    """Per-trial measured values for trials ``start..stop-1``."""
    rng = RandomStream.block(plan.seed, start, stop)
    rewards = plan.generator.sample(rng, plan.N)
    scores = plan.verifier.score(rewards, rng)
    chosen = select_batch(scores, rng)
    selected = np.take_along_axis(rewards, chosen[:, None], axis=-1)[:, 0]
    if plan.measure == "expected_reward":
        return selected
    return selected - rewards[:, 0]


def run(plan: TrialPlan, workers: int | None = None, *, first_sample: bool = False) -> Estimate:
    """Estimate of the plan's measure.

    With ``first_sample=True`` the estimate is of the first candidate's reward
    instead, a baseline that ignores the verifier.
    """
    if first_sample:
        def fn(a, b):
            rng = RandomStream.block(plan.seed, a, b)
            return plan.generator.sample(rng, plan.N)[:, 0]
    else:
        def fn(a, b):
            return trial_values(plan, a, b)
    values = np.concatenate(map_chunks(fn, plan.trials, workers))
    return Estimate.from_values(values)


def run_discrete(plan: TrialPlan, workers: int | None = None) -> Estimate:
    if not plan.is_discrete:
        raise DomainError("run_discrete needs a discrete generator and verifier")
    return run(plan, workers)


def run_continuous_improvement(plan: TrialPlan, workers: int | None = None) -> Estimate:
    if plan.is_discrete:
        raise DomainError("run_continuous_improvement needs a continuous model")
    return run(replace(plan, measure="improvement_over_first_sample"), workers)


def analytic_value(plan: TrialPlan) -> float | None:
    """Closed-form companion of the plan's measure, when one exists."""
    gen, ver = plan.generator, plan.verifier
    if plan.is_discrete:
        value = analytic.expected_reward_with_verifier_dependent(gen, ver.p_V1, ver.p_V0, plan.N).expected_with_verifier
        base = gen.p_G
    elif gen.kind == "normal" and ver.kind == "additive_noise":
        value = analytic.delta_ver(gen.sigma_G, ver.sigma_V, plan.N, mu_G=gen.mu_G).expected_with_verifier
        base = gen.mu_G
    elif gen.kind == "uniform" and ver.kind == "pairwise":
        base = gen.mean
        value = base + analytic.pairwise_uniform_improvement(ver.p_V, plan.N, gen.lo, gen.hi)
    else:
        return None
    return value if plan.measure == "expected_reward" else value - base


def with_axis(plan: TrialPlan, axis: str, value) -> TrialPlan:
    """Copy of ``plan`` with one sweep parameter replaced (validated on construction)."""
    if axis == "N":
        return replace(plan, N=value)
    if axis in ("p_G", "sigma_G"):
        if not hasattr(plan.generator, axis) or (axis == "sigma_G" and plan.generator.kind == "uniform"):
            raise DomainError(f"generator has no parameter {axis}")
        return replace(plan, generator=replace(plan.generator, **{axis: value}))
    if axis == "sigma_V":
        if plan.is_discrete or plan.verifier.kind != "additive_noise":
            raise DomainError("sigma_V needs an additive-noise verifier")
        return replace(plan, verifier=replace(plan.verifier, sigma_V=value))
    if axis == "p_V":
        ver = plan.verifier
        if plan.is_discrete:
            if ver.kind != "independent":
                raise DomainError("p_V axis needs an independent discrete verifier")
            return replace(plan, verifier=DiscreteVerifier.independent(value))
        if ver.kind != "pairwise":
            raise DomainError("p_V axis needs a pairwise verifier")
        return replace(plan, verifier=replace(ver, p_V=value))
    raise DomainError(f"unknown sweep axis {axis!r}; expected one of {SWEEP_AXES}")


@dataclass(frozen=True)
class SweepPoint:
    value: object
    estimate: Estimate | None
    analytic: float | None
    error: str | None = None


def sweep(base_plan: TrialPlan, axis: str, values, workers: int | None = None) -> list[SweepPoint]:
    """Run ``base_plan`` at each axis value; bad values become error entries."""
    if axis not in SWEEP_AXES:
        raise DomainError(f"unknown sweep axis {axis!r}; expected one of {SWEEP_AXES}")
    values = list(values)
    if not values:
        raise DomainError("sweep needs at least one value")
    points = []
    for v in values:
        try:
            plan = with_axis(base_plan, axis, v)
        except (DomainError, TypeError) as exc:
            log.warning("sweep %s=%r skipped: %s", axis, v, exc)
            points.append(SweepPoint(v, None, None, str(exc)))
            continue
        points.append(SweepPoint(v, run(plan, workers), analytic_value(plan)))
    return points
