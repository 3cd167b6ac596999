import numpy as np
import pytest
from scipy import stats

from verigen.envs import MODES, DoorAction, DoorEnv, InconsistentHistory, Outcome, RodEnv
from verigen.models import DomainError
from verigen.policies import (
    DoorPosterior,
    RodPosterior,
    PolicySpec,
    act,
    bayes_posterior,
    choose,
    evaluate_policy,
    expected_com_distance,
    generate_proposals,
    verifier_score,
)
from verigen.rng import RandomStream

FAILED_PUSH_LEFT = [(DoorAction("push_left", 0.9), Outcome(False, 0.0))]


def rod_fail(x, tilt):
    return (x, Outcome(False, tilt=tilt))


class TestProposals:
    def test_door_batch_covers_all_modes(self):
        covered = [len({c.mode for c in generate_proposals("door", 30, RandomStream(1, i)).candidates}) == 4
                   for i in range(3000)]
        # P(all four present) = 1 - 4 (3/4)^30 + ... >= 0.9993
        assert np.mean(covered) >= 0.997

    def test_single_candidate(self):
        batch = generate_proposals("door", 1, RandomStream(0))
        assert len(batch) == 1

    def test_door_quality_range(self):
        batch = generate_proposals("door", 500, RandomStream(2))
        q = [c.quality for c in batch.candidates]
        assert min(q) >= 0.5 and max(q) < 1.0
        fixed = generate_proposals("door", 50, RandomStream(2), quality_range=(1.0, 1.0))
        assert {c.quality for c in fixed.candidates} == {1.0}

    def test_rod_batch_deterministic(self):
        a = generate_proposals("rod", 20, RandomStream(9))
        b = generate_proposals("rod", 20, RandomStream(9))
        assert a == b and all(0 <= x <= 1 for x in a.candidates)

    def test_bad_inputs(self):
        with pytest.raises(DomainError):
            generate_proposals("drawer", 3, RandomStream(0))
        with pytest.raises(DomainError):
            generate_proposals("rod", 0, RandomStream(0))


class TestPosterior:
    def test_door_after_failure(self):
        post = bayes_posterior(FAILED_PUSH_LEFT, "door")
        assert post.probs == pytest.approx((0, 1 / 3, 1 / 3, 1 / 3))

    def test_door_empty(self):
        assert bayes_posterior([], "door").probs == (0.25,) * 4

    def test_door_success_is_point_mass(self):
        hist = [(DoorAction("pull_left"), Outcome(False, 0.0)), (DoorAction("push_right", 0.5), Outcome(False, 0.5))]
        assert bayes_posterior(hist, "door").probs == (0.0, 1.0, 0.0, 0.0)

    def test_rod_interval(self):
        post = bayes_posterior([rod_fail(0.5, "right"), rod_fail(0.2, "left")], "rod")
        assert (post.lo, post.hi) == pytest.approx((0.25, 0.45))

    def test_inconsistent(self):
        with pytest.raises(InconsistentHistory):
            bayes_posterior([rod_fail(0.3, "right"), rod_fail(0.5, "left")], "rod")

    def test_door_probabilities_normalized(self):
        for i in range(50):
            rng = RandomStream(5, i)
            env = DoorEnv.sample(rng, open_threshold=1.0)
            hist = []
            for _ in range(6):
                a = act(PolicySpec("naive_generator"), env, hist, rng)
                from verigen.envs import door_step
                env, out = door_step(env, a)
                hist.append((a, out))
            post = bayes_posterior(hist, "door")
            assert sum(post.probs) == pytest.approx(1.0)
            for a, out in hist:
                if out.opened_amount == 0:
                    assert post.prob(a.mode) == 0.0
            assert post.prob(env.hidden_mode) > 0


class TestVerifierScore:
    def test_door_example_selects_remaining_mode(self):
        post = bayes_posterior(FAILED_PUSH_LEFT, "door")
        s1 = verifier_score(DoorAction("push_left", 0.9), post, "door")
        s2 = verifier_score(DoorAction("pull_right", 0.5), post, "door")
        assert s1 == 0.0 and s2 == pytest.approx(1 / 6, abs=1e-12)

    def test_rod_plateau(self):
        post = RodPosterior(0.25, 0.75)
        assert verifier_score(0.5, post, "rod") == pytest.approx(0.2, abs=1e-15)
        assert verifier_score(0.9, post, "rod") == 0.0

    def test_rod_edge_and_narrow(self):
        assert verifier_score(0.25, RodPosterior(0.25, 0.75), "rod") == pytest.approx(0.1)
        assert verifier_score(0.5, RodPosterior(0.48, 0.53), "rod") == 1.0
        assert verifier_score(0.5, RodPosterior(0.4, 0.4), "rod") == 0.0

    def test_rod_plateau_ties_exactly(self):
        post = RodPosterior(0.1, 0.9)
        xs = np.linspace(0.15, 0.85, 101)
        assert len({verifier_score(x, post, "rod") for x in xs}) == 1

    def test_tie_break_prefers_midpoint(self):
        post = RodPosterior(0.2, 0.8)
        assert expected_com_distance(0.5, post) < expected_com_distance(0.45, post) < expected_com_distance(0.3, post)
        assert expected_com_distance(0.5, post) == pytest.approx(0.15)
        assert expected_com_distance(0.95, post) == pytest.approx(0.45)


class TestAct:
    def test_door_picks_last_mode(self):
        hist = [(DoorAction(m), Outcome(False, 0.0)) for m in MODES if m != "pull_left"]
        env = DoorEnv("pull_left")
        picks = [act(PolicySpec("verifier_selection", 30), env, hist, RandomStream(3, i)).mode for i in range(3000)]
        assert np.mean([p == "pull_left" for p in picks]) >= 0.998

    def test_door_oracle_sampler_one_step(self):
        ev = evaluate_policy("door", PolicySpec("oracle_sampler", 1), 3000, 6)
        assert all(r.success and r.steps == 1 for r in ev.results)

    def test_door_oracle_verifier_chooses_best_correct(self):
        env = DoorEnv("push_right")
        action, batch = choose(PolicySpec("oracle_verifier", 30), env, [], RandomStream(4))
        right = [c for c in batch.candidates if c.mode == "push_right"]
        assert action == max(right, key=lambda c: c.quality)

    def test_rod_large_n_converges_to_midpoint(self):
        hist = [rod_fail(0.5, "right")]
        env = RodEnv(0.1)
        for i in range(20):
            x = act(PolicySpec("verifier_selection", 5000), env, hist, RandomStream(8, i))
            assert abs(x - 0.225) < 2e-3

    def test_rod_oracle_verifier(self):
        action, batch = choose(PolicySpec("oracle_verifier", 20), RodEnv(0.37), [], RandomStream(5))
        assert action == min(batch.candidates, key=lambda x: abs(x - 0.37))

    def test_policy_spec_validation(self):
        for kwargs in ({"kind": "greedy"}, {"kind": "verifier_selection", "N": 0},
                       {"kind": "history_conditioned_generator", "fidelity": 1.5},
                       {"kind": "verifier_selection", "quality_range": (0.0, 1.0)}):
            with pytest.raises(DomainError):
                PolicySpec(**kwargs)


class TestInvariants:
    def test_never_repeat_failure(self):
        ev = evaluate_policy("door", PolicySpec("verifier_selection", 30), 10_000, 21)
        assert ev.valid_rate() >= 0.99

    def test_mean_steps_ordering(self):
        evs = [evaluate_policy("door", PolicySpec(kind, 30), 10_000, 22)
               for kind in ("oracle_sampler", "verifier_selection", "naive_generator")]
        ms = [e.mean_steps() for e in evs]
        for a, b in zip(ms, ms[1:]):
            assert b.mean - a.mean >= 5 * np.hypot(a.std_error, b.std_error)

    def test_rod_selection_inside_interval(self):
        ev = evaluate_policy("rod", PolicySpec("verifier_selection", 20), 3000, 23)
        assert ev.outside_interval == 0
        assert ev.interval_violations == 0

    def test_rod_bisection_bound_large_n(self):
        grid = (np.arange(500) + 0.5) / 500
        ev = evaluate_policy("rod", PolicySpec("verifier_selection", 200), 0, 24, hidden=grid)
        assert all(r.success and r.steps <= 5 for r in ev.results)

    def test_history_conditioned_endpoints_door(self):
        def modes(fidelity):
            spec = PolicySpec("history_conditioned_generator", fidelity=fidelity)
            return [act(spec, DoorEnv("pull_left"), FAILED_PUSH_LEFT, RandomStream(31, i)).mode for i in range(10_000)]

        full = np.array([modes(1.0).count(m) for m in MODES])
        assert full[0] == 0
        assert stats.chisquare(full[1:]).pvalue > 1e-3
        none = np.array([modes(0.0).count(m) for m in MODES])
        assert stats.chisquare(none).pvalue > 1e-3

    def test_history_conditioned_endpoints_rod(self):
        hist = [rod_fail(0.5, "right")]
        spec = PolicySpec("history_conditioned_generator", fidelity=1.0)
        xs = np.array([act(spec, RodEnv(0.2), hist, RandomStream(32, i)) for i in range(10_000)])
        assert stats.kstest(xs, stats.uniform(0, 0.45).cdf).pvalue > 1e-3
        spec = PolicySpec("history_conditioned_generator", fidelity=0.0)
        xs = np.array([act(spec, RodEnv(0.2), hist, RandomStream(33, i)) for i in range(10_000)])
        assert stats.kstest(xs, stats.uniform(0, 1).cdf).pvalue > 1e-3

    def test_conditional_generator_underperforms_verifier(self):
        hc = evaluate_policy("door", PolicySpec("history_conditioned_generator"), 5000, 25).mean_steps()
        vs = evaluate_policy("door", PolicySpec("verifier_selection", 30), 5000, 25).mean_steps()
        assert hc.mean - vs.mean >= 5 * np.hypot(hc.std_error, vs.std_error)

    def test_noisy_verifier_degrades_with_accuracy(self):
        means = [evaluate_policy("door", PolicySpec("verifier_selection", 30, verifier_accuracy=p), 4000, 26)
                 .mean_steps() for p in (1.0, 0.8, 0.6)]
        for a, b in zip(means, means[1:]):
            assert b.mean - a.mean >= 3 * np.hypot(a.std_error, b.std_error)
        clean = evaluate_policy("door", PolicySpec("verifier_selection", 30), 4000, 26).mean_steps()
        assert abs(clean.mean - means[0].mean) <= 4 * np.hypot(clean.std_error, means[0].std_error)
