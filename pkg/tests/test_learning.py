import math

import numpy as np
import pytest

from berknash import (
    BanditConfig,
    BanditState,
    ConjectureSet,
    MDPInstance,
    SoftPlanConfig,
    SubjectiveKernel,
    ZoomConfig,
    benchmark3,
    estimate_loss,
    exp3_update,
    mixture_kernel,
    oracle_loss,
    prune,
    refine,
    rollout_loss,
    run_exp3,
    run_zoom_exp3,
    sampling_distribution,
    soft_best_response,
    uncertainty,
)
from berknash.learning import resolve_loss_scale


def two_cycle_instance():
    """Deterministic two-cycle kernel: with a uniform conjecture the per-entry
    KL cost is log(S) everywhere, so normalized oracle losses are exactly
    {0, 1} for the {truth, uniform} pair."""
    S = 3
    k0 = np.zeros((S, S))
    k1 = np.zeros((S, S))
    for x in range(S):
        k0[x, (x + 1) % S] = 1.0
        k1[x, (x + 2) % S] = 1.0
    kernel = np.stack([k0, k1], axis=1)
    rewards = np.array([[0.1, 0.2], [0.3, 0.4], [0.5, 0.6]])
    m = MDPInstance(kernel=kernel, rewards=rewards, discount=0.9,
                    initial_dist=np.full(S, 1 / S))
    cs = ConjectureSet(
        members=(
            SubjectiveKernel(kernel=m.kernel, label="truth"),
            SubjectiveKernel(kernel=np.full((S, 2, S), 1 / S), label="noise"),
        )
    )
    return m, cs


class TestSamplingDistribution:
    def test_equal_weights_uniform(self):
        p = sampling_distribution(np.ones(5), 0.3)
        np.testing.assert_allclose(p, np.full(5, 0.2), atol=1e-15)

    def test_full_exploration_ignores_weights(self):
        p = sampling_distribution(np.array([10.0, 1.0, 0.1]), 1.0)
        np.testing.assert_allclose(p, np.full(3, 1 / 3), atol=1e-15)

    def test_pure_weight_mixture(self):
        p = sampling_distribution(np.array([2.0, 1.0, 1.0]), 0.0)
        np.testing.assert_allclose(p, [0.5, 0.25, 0.25], atol=1e-15)

    def test_exploration_floor_and_normalization(self):
        rng = np.random.default_rng(0)
        for _ in range(30):
            K = int(rng.integers(2, 8))
            w = rng.uniform(1e-6, 10.0, size=K)
            gamma = float(rng.uniform(0.01, 0.99))
            p = sampling_distribution(w, gamma)
            assert p.sum() == pytest.approx(1.0, abs=1e-12)
            assert np.all(p >= gamma / K - 1e-15)

    def test_rejects_nonpositive_weights(self):
        with pytest.raises(ValueError, match="strictly positive"):
            sampling_distribution(np.array([1.0, 0.0]), 0.1)


class TestLossEstimation:
    def test_oracle_zero_for_true_model(self):
        m, cs = two_cycle_instance()
        pi, _, _ = soft_best_response(m, SoftPlanConfig(temperature=0.1))
        assert oracle_loss(m, cs.members[0], pi, loss_scale=math.log(3)) == 0.0

    def test_oracle_losses_ordered_by_misspecification(self):
        m, cs = benchmark3()
        soft = SoftPlanConfig(temperature=0.1)
        scale = resolve_loss_scale(m, cs.members, BanditConfig())
        losses = []
        for q in cs:
            pi, _, _ = soft_best_response(m.with_kernel(q.kernel), soft)
            losses.append(oracle_loss(m, q, pi, scale))
        assert losses == sorted(losses)
        assert losses[0] < losses[-1]

    def test_two_cycle_losses_are_zero_and_one(self):
        m, cs = two_cycle_instance()
        cfg = BanditConfig(horizon=10)
        scale = resolve_loss_scale(m, cs.members, cfg)
        assert scale == pytest.approx(math.log(3), abs=1e-12)
        pi, _, _ = soft_best_response(m, SoftPlanConfig(temperature=0.1))
        assert oracle_loss(m, cs.members[0], pi, scale) == 0.0
        assert oracle_loss(m, cs.members[1], pi, scale) == pytest.approx(1.0, abs=1e-12)

    def test_rollout_consistent_with_oracle(self):
        m, cs = benchmark3()
        q = cs.members[2]  # mid-range misspecification: plug-in bias is small
        pi, _, _ = soft_best_response(
            m.with_kernel(q.kernel), SoftPlanConfig(temperature=0.1)
        )
        cfg = BanditConfig(
            loss_estimator="rollout", rollout_horizon=100_000, loss_scale=1.0
        )
        rng = np.random.default_rng(123)
        est = rollout_loss(m, q, pi, cfg, 1.0, rng)
        exact = oracle_loss(m, q, pi, 1.0)
        assert est == pytest.approx(exact, rel=0.10)

    def test_rollout_mode_requires_scale(self):
        m, cs = two_cycle_instance()
        with pytest.raises(ValueError, match="loss_scale"):
            resolve_loss_scale(m, cs.members, BanditConfig(loss_estimator="rollout"))

    def test_estimate_loss_dispatch(self):
        m, cs = benchmark3()
        pi, _, _ = soft_best_response(
            m.with_kernel(cs.members[0].kernel), SoftPlanConfig(temperature=0.1)
        )
        cfg = BanditConfig()
        scale = resolve_loss_scale(m, cs.members, cfg)
        direct = oracle_loss(m, cs.members[0], pi, scale)
        assert estimate_loss(m, cs.members[0], pi, cfg, scale) == direct
        roll_cfg = BanditConfig(
            loss_estimator="rollout", rollout_horizon=2000, loss_scale=scale
        )
        val = estimate_loss(
            m, cs.members[0], pi, roll_cfg, scale, rng=np.random.default_rng(7)
        )
        assert 0.0 <= val <= 1.0

    def test_rollout_needs_rng(self):
        m, cs = benchmark3()
        cfg = BanditConfig(loss_estimator="rollout", loss_scale=1.0)
        with pytest.raises(ValueError, match="rng"):
            estimate_loss(m, cs.members[0], np.full((3, 2), 0.5), cfg, 1.0)


class TestExp3Update:
    def test_zero_loss_leaves_weights(self):
        state = BanditState.initial(3)
        exp3_update(state, 1, 0.0, 0.4, learning_rate=1.0)
        np.testing.assert_array_equal(state.weights, np.ones(3))

    def test_hand_computed_update(self):
        state = BanditState.initial(2)
        p = sampling_distribution(state.weights, 0.0)
        exp3_update(state, 0, 0.5, float(p[0]), learning_rate=1.0)
        np.testing.assert_allclose(state.weights, [math.exp(-1.0), 1.0], atol=1e-15)

    def test_importance_weighted_estimator_unbiased(self):
        # exhaustive expectation over the K-outcome sample space
        rng = np.random.default_rng(1)
        for K in (2, 3, 4):
            p = rng.dirichlet(np.ones(K))
            losses = rng.uniform(0.0, 1.0, size=K)
            for j in range(K):
                expectation = sum(
                    p[k] * (losses[k] / p[k] if k == j else 0.0) for k in range(K)
                )
                assert expectation == pytest.approx(losses[j], abs=1e-12)

    def test_renormalization_leaves_sampling_law_invariant(self):
        rng = np.random.default_rng(2)
        w = rng.uniform(0.1, 5.0, size=4)
        p1 = sampling_distribution(w, 0.2)
        p2 = sampling_distribution(w * 37.5, 0.2)
        np.testing.assert_allclose(p1, p2, atol=1e-14)

    def test_requires_positive_probability(self):
        state = BanditState.initial(2)
        with pytest.raises(ValueError, match="positive probability"):
            exp3_update(state, 0, 0.5, 0.0, learning_rate=0.1)

    def test_weights_stay_strictly_positive_under_heavy_suppression(self):
        state = BanditState.initial(2)
        for _ in range(50):
            exp3_update(state, 1, 1.0, 0.01, learning_rate=1.0)
        assert np.all(state.weights > 0.0)


class TestRunExp3:
    def test_single_arm_always_selected(self):
        m, cs = two_cycle_instance()
        solo = ConjectureSet(members=(cs.members[0],))
        cfg = BanditConfig(horizon=50, rng_seed=0)
        rec = run_exp3(m, solo, cfg, SoftPlanConfig(temperature=0.1))
        assert rec.selection_frequencies[0] == 1.0

    def test_two_arm_separation(self):
        m, cs = two_cycle_instance()
        cfg = BanditConfig(
            learning_rate=0.05, exploration=0.1, horizon=2000, rng_seed=0
        )
        rec = run_exp3(m, cs, cfg, SoftPlanConfig(temperature=0.1))
        np.testing.assert_allclose(rec.oracle_losses, [0.0, 1.0], atol=1e-12)
        assert np.mean(rec.arms[-400:] == 0) >= 0.9

    def test_trace_is_bit_reproducible(self):
        m, cs = benchmark3()
        cfg = BanditConfig(horizon=200, rng_seed=5)
        soft = SoftPlanConfig(temperature=0.1)
        rec1 = run_exp3(m, cs, cfg, soft)
        rec2 = run_exp3(m, cs, cfg, soft)
        np.testing.assert_array_equal(rec1.arms, rec2.arms)
        np.testing.assert_array_equal(rec1.losses, rec2.losses)
        np.testing.assert_array_equal(rec1.probs, rec2.probs)

    def test_regret_accounting(self):
        m, cs = two_cycle_instance()
        cfg = BanditConfig(learning_rate=0.05, exploration=0.2, horizon=100, rng_seed=3)
        rec = run_exp3(m, cs, cfg, SoftPlanConfig(temperature=0.1))
        expected = np.cumsum(rec.oracle_losses[rec.arms]) - 0.0
        np.testing.assert_allclose(rec.regret, expected, atol=1e-12)
        assert np.all(np.diff(rec.regret) >= -1e-12)

    def test_counts_sum_to_horizon(self):
        m, cs = benchmark3()
        cfg = BanditConfig(horizon=150, rng_seed=9)
        rec = run_exp3(m, cs, cfg, SoftPlanConfig(temperature=0.1))
        assert rec.state.pull_counts.sum() == 150
        assert len(rec.state.trace) == 150


class TestConfigValidation:
    def test_exploration_range(self):
        with pytest.raises(ValueError, match="exploration"):
            BanditConfig(exploration=1.5)
        with pytest.raises(ValueError, match="exploration"):
            BanditConfig(exploration=0.0)

    def test_positive_learning_rate_and_horizon(self):
        with pytest.raises(ValueError, match="learning_rate"):
            BanditConfig(learning_rate=0.0)
        with pytest.raises(ValueError, match="horizon"):
            BanditConfig(horizon=0)

    def test_estimator_name(self):
        with pytest.raises(ValueError, match="loss_estimator"):
            BanditConfig(loss_estimator="monte-carlo")

    def test_zoom_schedules(self):
        with pytest.raises(ValueError, match="alpha_decay"):
            ZoomConfig(alpha_decay=1.5)
        with pytest.raises(ValueError, match="grid_size"):
            ZoomConfig(grid_size=1)
        with pytest.raises(ValueError, match="bounds"):
            ZoomConfig(bounds=(0.5, 0.5))

    def test_zoom_schedule_values(self):
        z = ZoomConfig()
        assert z.alpha(0) == pytest.approx(0.1)
        assert z.alpha(100) == pytest.approx(0.08)
        assert z.rho(250) == pytest.approx(0.1 * 0.5**2)
        assert z.delta(500) == pytest.approx(0.02)


class TestPrune:
    def test_suboptimal_rule(self):
        kept, pruned = prune([0.1, 0.5], [0.5, 0.5], alpha=0.2, delta=0.05)
        assert kept.tolist() == [0]
        assert pruned == [(1, "suboptimal")]

    def test_converged_rule(self):
        kept, pruned = prune([0.1, 0.12], [0.5, 0.01], alpha=0.2, delta=0.05)
        assert kept.tolist() == [0]
        assert pruned == [(1, "converged")]

    def test_nothing_pruned_when_all_close_and_uncertain(self):
        kept, pruned = prune([0.1, 0.15, 0.2], [0.5, 0.5, 0.5], alpha=0.2, delta=0.05)
        assert kept.tolist() == [0, 1, 2]
        assert pruned == []

    def test_incumbent_never_pruned_even_when_converged(self):
        kept, pruned = prune([0.1, 0.3], [0.01, 0.5], alpha=0.1, delta=0.05)
        assert 0 in kept.tolist()
        assert (0, "converged") not in pruned

    def test_uncertainty_formula(self):
        np.testing.assert_allclose(
            uncertainty([0, 1, 4, 100], scale=2.0), [2.0, 2.0, 1.0, 0.2], atol=1e-15
        )


class TestRefine:
    def test_basic_grid(self):
        pts = refine([0.1], radius=0.05, grid_size=3, bounds=(0.0, 0.5))
        np.testing.assert_allclose(pts, [0.05, 0.1, 0.15], atol=1e-15)

    def test_boundary_clipping(self):
        pts = refine([0.0], radius=0.1, grid_size=3, bounds=(0.0, 0.5))
        np.testing.assert_allclose(pts, [0.0, 0.05, 0.1], atol=1e-15)

    def test_duplicates_dropped(self):
        pts = refine([0.1], radius=0.05, grid_size=3, bounds=(0.0, 0.5),
                     existing=[0.1, 0.05])
        np.testing.assert_allclose(pts, [0.15], atol=1e-15)

    def test_never_leaves_bounds(self):
        rng = np.random.default_rng(4)
        for _ in range(50):
            center = float(rng.uniform(0.0, 0.5))
            radius = float(rng.uniform(0.01, 0.3))
            pts = refine([center], radius, 5, (0.0, 0.5))
            assert all(0.0 <= p <= 0.5 for p in pts)

    def test_vector_parameters_axis_aligned(self):
        pts = refine([np.array([0.2, 0.4])], radius=0.1, grid_size=2,
                     bounds=(0.0, 0.5))
        assert len(pts) == 4
        stacked = np.array(pts)
        assert stacked.shape == (4, 2)
        assert stacked.min() >= 0.0 and stacked.max() <= 0.5

    def test_grid_size_validated(self):
        with pytest.raises(ValueError, match="grid_size"):
            refine([0.1], 0.05, 1, (0.0, 0.5))


class TestRunZoomExp3:
    def _setup(self):
        m, _ = benchmark3()
        return m, (lambda e: mixture_kernel(m, float(e)))

    def test_no_zoom_event_matches_plain_exp3(self):
        from berknash import mixture_family

        m, family = self._setup()
        eps = [0.05, 0.15, 0.30, 0.45]
        cfg = BanditConfig(horizon=60, rng_seed=2)
        soft = SoftPlanConfig(temperature=0.1)
        zoom = ZoomConfig(zoom_interval=1000)  # never triggers within T=60
        zrec = run_zoom_exp3(m, family, eps, cfg, zoom, soft)
        rec = run_exp3(m, mixture_family(m, eps), cfg, soft)
        np.testing.assert_allclose(
            zrec.selected_params, [eps[a] for a in rec.arms], atol=1e-15
        )
        np.testing.assert_array_equal(zrec.losses, rec.losses)
        assert zrec.events == ()

    def test_zoom_run_invariants(self):
        m, family = self._setup()
        cfg = BanditConfig(horizon=800, rng_seed=11)
        rec = run_zoom_exp3(
            m, family, list(np.linspace(0, 0.5, 6)), cfg, ZoomConfig(),
            SoftPlanConfig(temperature=0.1),
        )
        assert len(rec.final_params) >= 1
        assert np.all(rec.set_sizes >= 1)
        fp = np.array(rec.final_params)
        assert np.all((fp >= 0.0) & (fp <= 0.5))
        for ev in rec.events:
            assert any(abs(kp - ev.incumbent_param) < 1e-15 for kp in ev.kept)
            for param, reason in ev.pruned:
                assert reason in ("suboptimal", "converged")

    def test_concentrates_near_true_model(self):
        m, family = self._setup()
        cfg = BanditConfig(horizon=1500, rng_seed=11)
        rec = run_zoom_exp3(
            m, family, list(np.linspace(0, 0.5, 6)), cfg, ZoomConfig(),
            SoftPlanConfig(temperature=0.1),
        )
        assert float(np.median(rec.selected_params[-150:])) <= 0.05
        # running average does not rise across zoom boundaries (noise band)
        rm = rec.running_mean
        boundary = [ev.t - 1 for ev in rec.events]
        for i in range(len(boundary) - 1):
            assert rm[boundary[i + 1]] <= rm[boundary[i]] + 0.02

    def test_empty_initial_set_rejected(self):
        m, family = self._setup()
        with pytest.raises(ValueError, match="nonempty"):
            run_zoom_exp3(m, family, [], BanditConfig(horizon=10), ZoomConfig(),
                          SoftPlanConfig(temperature=0.1))
