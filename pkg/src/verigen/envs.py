"""Ambiguous bandit environments with a hidden transition parameter.

``DoorEnv`` hides which of four opening modes works; ``RodEnv`` hides the
centre of mass of a rod.  Both are immutable: ``door_step`` and ``rod_step``
return the advanced environment together with the outcome.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

from .rng import RandomStream

MODES = ("push_left", "push_right", "pull_left", "pull_right")


class EpisodeError(RuntimeError):
    """Stepping a finished episode, or an action outside the action space."""


class InconsistentHistory(ValueError):
    """No value of the hidden parameter explains the observed history."""


@dataclass(frozen=True)
class DoorAction:
    mode: str
    quality: float = 1.0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown door mode {self.mode!r}")
        if not 0.0 < self.quality <= 1.0:
            raise ValueError(f"quality must lie in (0, 1], got {self.quality}")


@dataclass(frozen=True)
class Outcome:
    """Result of one step.

    ``opened_amount`` is set for doors; ``tilt`` for rods, where "right" means
    the lift point was right of the centre of mass and "none" means lifted.
    """

    success: bool
    opened_amount: float | None = None
    tilt: str | None = None


@dataclass(frozen=True)
class DoorEnv:
    hidden_mode: str
    open_fraction: float = 0.0
    open_threshold: float = 0.05
    max_steps: int = 30
    steps: int = 0

    def __post_init__(self):
        if self.hidden_mode not in MODES:
            raise ValueError(f"unknown door mode {self.hidden_mode!r}")
        if not 0.0 < self.open_threshold <= 1.0:
            raise ValueError(f"open_threshold must lie in (0, 1], got {self.open_threshold}")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")

    @classmethod
    def sample(cls, rng: RandomStream, **kwargs) -> DoorEnv:
        return cls(MODES[int(rng.integers(len(MODES), 1)[0])], **kwargs)

    @property
    def opened(self) -> bool:
        return self.open_fraction >= self.open_threshold

    @property
    def terminated(self) -> bool:
        return self.opened or self.steps >= self.max_steps

    def optimal_action(self) -> DoorAction:
        return DoorAction(self.hidden_mode, 1.0)


@dataclass(frozen=True)
class RodEnv:
    hidden_com: float
    tolerance: float = 0.05
    max_steps: int = 5
    steps: int = 0
    lifted: bool = False

    def __post_init__(self):
        if not 0.0 <= self.hidden_com <= 1.0:
            raise ValueError(f"hidden_com must lie in [0, 1], got {self.hidden_com}")
        if not self.tolerance > 0:
            raise ValueError("tolerance must be > 0")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")

    @classmethod
    def sample(cls, rng: RandomStream, **kwargs) -> RodEnv:
        return cls(rng.random(), **kwargs)

    @property
    def terminated(self) -> bool:
        return self.lifted or self.steps >= self.max_steps

    def optimal_action(self) -> float:
        return self.hidden_com


def door_step(env: DoorEnv, action: DoorAction) -> tuple[DoorEnv, Outcome]:
    if env.terminated:
        raise EpisodeError("door episode already terminated")
    if action.mode == env.hidden_mode:
        amount = action.quality * (1.0 - env.open_fraction)
    else:
        amount = 0.0
    env = replace(env, open_fraction=env.open_fraction + amount, steps=env.steps + 1)
    return env, Outcome(env.opened, opened_amount=amount)


def rod_step(env: RodEnv, lift_point: float) -> tuple[RodEnv, Outcome]:
    if env.terminated:
        raise EpisodeError("rod episode already terminated")
    if not (math.isfinite(lift_point) and 0.0 <= lift_point <= 1.0):
        raise EpisodeError(f"lift_point must lie in [0, 1], got {lift_point}")
    offset = lift_point - env.hidden_com
    lifted = abs(offset) <= env.tolerance
    tilt = "none" if lifted else ("right" if offset > 0 else "left")
    return replace(env, steps=env.steps + 1, lifted=lifted), Outcome(lifted, tilt=tilt)


def theoretical_com_interval(history: Sequence[tuple[float, Outcome]], tolerance: float = 0.05,
                             ) -> tuple[float, float]:
    """Centre-of-mass values consistent with every failed lift in ``history``.

    A failure tilting "right" at x means com < x - tolerance; "left" means
    com > x + tolerance.
    """
    lo, hi = 0.0, 1.0
    for point, outcome in history:
        if outcome.tilt == "right":
            hi = min(hi, point - tolerance)
        elif outcome.tilt == "left":
            lo = max(lo, point + tolerance)
        # successful lifts end the episode and carry no side information
    if lo > hi:
        raise InconsistentHistory("history inconsistent with any com")
    return lo, hi


def consistent_modes(history: Sequence[tuple[DoorAction, Outcome]]) -> tuple[str, ...]:
    """Door modes that explain every step of ``history``."""
    failed = set()
    worked = set()
    for action, outcome in history:
        (worked if outcome.opened_amount > 0 else failed).add(action.mode)
    if len(worked) > 1 or worked & failed:
        raise InconsistentHistory("history inconsistent with any door mode")
    modes = tuple(worked) if worked else tuple(m for m in MODES if m not in failed)
    if not modes:
        raise InconsistentHistory("history inconsistent with any door mode")
    return modes


def trace_record(step: int, action, outcome: Outcome, env) -> dict:
    """One JSON-serializable line of an episode trace."""
    if isinstance(action, DoorAction):
        record = {"step": step, "action": {"mode": action.mode, "quality": action.quality},
                  "outcome": {"success": outcome.success, "opened_amount": outcome.opened_amount}}
        record["open_fraction"] = env.open_fraction
    else:
        record = {"step": step, "action": {"lift_point": action},
                  "outcome": {"success": outcome.success, "tilt": outcome.tilt}}
    return record
