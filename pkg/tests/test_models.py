import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from verigen import analytic
from verigen.models import (
    ContinuousRewardModel,
    ContinuousVerifier,
    DiscreteGenerator,
    DiscreteVerifier,
    DomainError,
    SelectionRule,
    mallows_dispersion,
    mallows_pairwise_accuracy,
    sample_true_reward,
    score_candidates,
    select,
    select_batch,
)
from verigen.montecarlo import TrialPlan, run
from verigen.rng import RandomStream


class TestSampleTrueReward:
    def test_uniform_support(self):
        rng = RandomStream(0)
        values = [sample_true_reward(ContinuousRewardModel.uniform(0, 1), rng) for _ in range(1000)]
        assert min(values) >= 0 and max(values) <= 1

    def test_degenerate_normal(self):
        rng = RandomStream(1)
        model = ContinuousRewardModel.normal(0.0, 1e-12)
        assert all(abs(sample_true_reward(model, rng)) < 1e-10 for _ in range(100))

    def test_gmm_mean_law_of_large_numbers(self):
        x = ContinuousRewardModel.gmm(sigma_G=1.0).sample(RandomStream(2), 1_000_000)
        assert abs(x.mean()) < 0.01

    def test_normal_moments(self):
        x = ContinuousRewardModel.normal(0.3, 2.0).sample(RandomStream(3), 400_000)
        assert abs(x.mean() - 0.3) < 4 * 2.0 / np.sqrt(len(x))
        assert abs(x.var() - 4.0) < 0.05

    def test_gmm_defaults(self):
        m = ContinuousRewardModel.gmm()
        assert m.means == (-0.5, 0.5) and m.weights == (0.5, 0.5) and m.mean == 0.0

    @pytest.mark.parametrize("bad", [
        lambda: ContinuousRewardModel.normal(0, 0),
        lambda: ContinuousRewardModel.gmm(sigma_G=-1),
        lambda: ContinuousRewardModel.uniform(1, 0),
        lambda: ContinuousRewardModel("cauchy"),
        lambda: DiscreteGenerator(1.0),
        lambda: DiscreteGenerator(0.0),
        lambda: DiscreteVerifier.independent(1.2),
        lambda: ContinuousVerifier.pairwise(0.4),
        lambda: ContinuousVerifier.additive_noise(-0.1),
    ])
    def test_domain_errors(self, bad):
        with pytest.raises(DomainError):
            bad()


class TestScoreCandidates:
    def test_zero_noise_is_identity(self):
        r = np.array([0.2, -1.0, 3.5])
        np.testing.assert_array_equal(score_candidates(r, ContinuousVerifier.additive_noise(0.0), RandomStream(0)), r)

    def test_perfect_pairwise_keeps_ranking(self):
        r = ContinuousRewardModel.uniform().sample(RandomStream(1), 30)
        s = score_candidates(r, ContinuousVerifier.pairwise(1.0), RandomStream(2))
        np.testing.assert_array_equal(np.argsort(s), np.argsort(r))

    def test_empty_batch(self):
        for verifier in (ContinuousVerifier.additive_noise(1.0), ContinuousVerifier.pairwise(0.8),
                         DiscreteVerifier.independent(0.9)):
            with pytest.raises(DomainError, match="empty candidate batch"):
                score_candidates([], verifier, RandomStream(0))

    def test_chance_pairwise_n2_is_random_selection(self):
        plan = TrialPlan(2, ContinuousRewardModel.uniform(), ContinuousVerifier.pairwise(0.5), trials=100_000, seed=3)
        est = run(plan)
        assert abs(est.mean - 0.5) < 3 * est.std_error

    def test_additive_noise_mean_equals_reward(self):
        r = np.full((100_000, 1), 0.7)
        s = ContinuousVerifier.additive_noise(0.5).score(r, RandomStream.block(4, 0, 100_000))
        assert abs(s.mean() - 0.7) < 3 * 0.5 / np.sqrt(100_000)

    def test_additive_noise_independent_of_reward(self):
        rng = RandomStream.block(5, 0, 50_000)
        x = ContinuousRewardModel.normal(0, 1).sample(rng, 1)[:, 0]
        eps = ContinuousVerifier.additive_noise(1.0).score(x[:, None], rng)[:, 0] - x
        assert abs(np.corrcoef(x, eps)[0, 1]) < 4 / np.sqrt(len(x))


class TestPairwiseCalibration:
    @pytest.mark.parametrize("p_V", [0.55, 0.6, 0.7, 0.8, 0.9, 0.95])
    @pytest.mark.parametrize("n", [2, 3, 10, 20, 50])
    def test_measured_accuracy_within_0005(self, p_V, n):
        trials = 20_000 if n < 20 else 4_000
        r = np.tile(np.linspace(1, 0, n), (trials, 1))
        s = ContinuousVerifier.pairwise(p_V).score(r, RandomStream.block(7, 0, trials))
        i, j = np.triu_indices(n, 1)
        measured = (s[:, i] > s[:, j]).mean()
        assert abs(measured - p_V) <= 0.005

    def test_calibration_solves_expected_accuracy(self):
        for n in (2, 7, 40):
            for p in (0.6, 0.75, 0.99):
                assert abs(mallows_pairwise_accuracy(mallows_dispersion(p, n), n) - p) < 1e-10

    def test_two_item_closed_form(self):
        # P(correct) = 1 / (1 + q) for two items
        assert mallows_dispersion(0.8, 2) == pytest.approx(0.25, abs=1e-12)

    def test_endpoints(self):
        assert mallows_dispersion(0.5, 20) == 1.0
        assert mallows_dispersion(1.0, 20) == 0.0


class TestSelect:
    def test_unique_max(self):
        assert select([0, 1, 0], SelectionRule(3), RandomStream(0)) == 1

    def test_symmetric_tie(self):
        rng = RandomStream(1)
        picks = [select([1, 1], SelectionRule(2), rng) for _ in range(4000)]
        assert abs(np.mean(picks) - 0.5) < 3 * 0.5 / np.sqrt(4000)

    def test_two_way_tie_frequencies(self):
        scores = np.tile([0.3, 0.9, 0.9, 0.1], (100_000, 1))
        idx = select_batch(scores, RandomStream.block(2, 0, 100_000))
        counts = np.bincount(idx, minlength=4) / len(idx)
        assert counts[0] == counts[3] == 0
        assert abs(counts[1] - 0.5) < 3 * 0.5 / np.sqrt(len(idx))

    def test_length_mismatch(self):
        with pytest.raises(DomainError):
            select([1, 2], SelectionRule(3), RandomStream(0))

    def test_rule_needs_positive_n(self):
        with pytest.raises(DomainError):
            SelectionRule(0)

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.sampled_from([0.0, 0.5, 1.0, 2.0]), min_size=1, max_size=12), st.integers(0, 2**32))
    def test_never_returns_non_argmax(self, scores, seed):
        idx = select(scores, SelectionRule(len(scores)), RandomStream(seed))
        assert scores[idx] == max(scores)


class TestDiscreteVerifier:
    def test_independent_stored_as_dependent(self):
        v = DiscreteVerifier.independent(0.8)
        assert (v.p_V1, v.p_V0, v.p_V) == (0.8, 0.8, 0.8)

    @settings(max_examples=100, deadline=None)
    @given(st.floats(0.01, 0.99), st.floats(0.0, 1.0), st.integers(1, 60))
    def test_independent_dependent_consistency(self, p_G, p_V, N):
        a = analytic.expected_reward_with_verifier_independent(p_G, p_V, N)
        b = analytic.expected_reward_with_verifier_dependent(p_G, p_V, p_V, N)
        assert a == b

    def test_independent_dependent_consistency_monte_carlo(self):
        gen = DiscreteGenerator(0.4)
        a = run(TrialPlan(5, gen, DiscreteVerifier.independent(0.7), trials=5000, seed=1))
        b = run(TrialPlan(5, gen, DiscreteVerifier.dependent(0.7, 0.7), trials=5000, seed=1))
        assert a == b

    def test_label_flip_rates(self):
        rng = RandomStream.block(3, 0, 100_000)
        r = np.tile([1.0, 0.0], (100_000, 1))
        v = DiscreteVerifier.dependent(0.8, 0.6).score(r, rng)
        assert abs(v[:, 0].mean() - 0.8) < 0.005
        assert abs((1 - v[:, 1]).mean() - 0.6) < 0.005
