"""Best-of-N selection with generators and verifiers: analytic theory,
Monte-Carlo validation and ambiguous bandit environments."""

from .analytic import (
    ContinuousResult,
    DiscreteResult,
    approx_expected_max_std_normal,
    delta_ver,
    exact_expected_max_std_normal,
    expected_reward_naive,
    expected_reward_with_verifier_dependent,
    expected_reward_with_verifier_independent,
    pairwise_uniform_improvement,
)
from .models import (
    ContinuousRewardModel,
    ContinuousVerifier,
    DiscreteGenerator,
    DiscreteVerifier,
    DomainError,
    SelectionRule,
    sample_true_reward,
    score_candidates,
    select,
)
from .montecarlo import Estimate, TrialPlan, run, run_continuous_improvement, run_discrete, sweep
from .rng import RandomStream

__version__ = "0.1.0"
