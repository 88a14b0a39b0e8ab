"""Discriminator identities, imitation reward, GAE oracle, and PPO behavior."""

import math

import numpy as np
import pytest

from crossimit import autodiff as ad
from crossimit import envs
from crossimit.envs import EnvState, Family, ObsMode, RobotConfig
from crossimit.gail import (
    Discriminator,
    GailConfig,
    IdentityLatentMap,
    discriminator_loss,
    discriminator_update,
    imitation_reward,
)
from crossimit.nets import param_count
from crossimit.ppo import (
    Policy,
    PpoConfig,
    Rollout,
    collect_rollout,
    gae_advantages,
    ppo_update,
)


def disc_with_constant_logit(logit: float, dims=(2, 1)) -> Discriminator:
    d = Discriminator.create(*dims)
    d.net.params = np.zeros_like(d.net.params)
    d.net.params[-1] = logit
    return d


def logit_of(p: float) -> float:
    return math.log(p / (1.0 - p))


class TestDiscriminatorLoss:
    def test_half_probability_gives_two_log_two(self):
        d = disc_with_constant_logit(0.0)
        zs, za = np.zeros((4, 2)), np.zeros((4, 1))
        loss = discriminator_loss(d, (zs, za), (zs, za))
        assert loss == pytest.approx(2.0 * math.log(2.0), rel=1e-12)

    def test_confident_correct_discriminator_loss_vanishes(self):
        d = disc_with_constant_logit(9.9)
        zs, za = np.zeros((4, 2)), np.zeros((4, 1))
        expert_loss = float(np.mean(np.logaddexp(0.0, -d.logits(zs, za))))
        assert expert_loss < 1e-4

    def test_hand_arithmetic_single_pair(self):
        # D(expert) = 0.8, D(agent) = 0.3 -> -ln 0.8 - ln 0.7
        d_expert = disc_with_constant_logit(logit_of(0.8))
        d_agent = disc_with_constant_logit(logit_of(0.3))
        zs, za = np.zeros((1, 2)), np.zeros((1, 1))
        expert_term = float(np.logaddexp(0.0, -d_expert.logits(zs, za))[0])
        agent_term = float(np.logaddexp(0.0, d_agent.logits(zs, za))[0])
        assert expert_term + agent_term == pytest.approx(0.2231 + 0.3567, abs=1e-4)

    def test_empty_batch_rejected(self):
        d = disc_with_constant_logit(0.0)
        with pytest.raises(ValueError):
            discriminator_loss(d, (np.zeros((0, 2)), np.zeros((0, 1))),
                               (np.zeros((1, 2)), np.zeros((1, 1))))

    def test_identical_distributions_converge_to_half(self):
        rng = np.random.default_rng(3)
        d = Discriminator.create(2, 1, lr=1e-3, seed=4)
        pool_s = rng.normal(size=(512, 2))
        pool_a = rng.normal(size=(512, 1))
        for _ in range(300):
            idx_e = rng.integers(0, 512, 64)
            idx_a = rng.integers(0, 512, 64)
            loss = discriminator_update(d, (pool_s[idx_e], pool_a[idx_e]),
                                        (pool_s[idx_a], pool_a[idx_a]))
        final = discriminator_loss(d, (pool_s, pool_a), (pool_s, pool_a))
        assert abs(final - 2.0 * math.log(2.0)) < 0.1
        probs = d.prob(pool_s, pool_a)
        assert abs(float(np.mean(probs)) - 0.5) < 0.05


class TestImitationReward:
    def test_half_probability_gives_log_two(self):
        d = disc_with_constant_logit(0.0)
        r = imitation_reward(d, np.zeros((1, 2)), np.zeros((1, 1)))
        assert r[0] == pytest.approx(math.log(2.0), rel=1e-12)

    def test_rejected_agent_reward_tends_to_zero(self):
        d = disc_with_constant_logit(-10.0)
        r = imitation_reward(d, np.zeros((1, 2)), np.zeros((1, 1)))
        assert 0.0 <= r[0] < 1e-4

    def test_point_nine_probability(self):
        d = disc_with_constant_logit(logit_of(0.9))
        r = imitation_reward(d, np.zeros((1, 2)), np.zeros((1, 1)))
        assert r[0] == pytest.approx(-math.log(0.1), abs=1e-9)

    def test_monotone_in_probability_and_bounded(self):
        rewards = []
        for logit in np.linspace(-12, 12, 25):
            d = disc_with_constant_logit(float(logit))
            rewards.append(float(imitation_reward(d, np.zeros((1, 2)), np.zeros((1, 1)))[0]))
        assert all(b >= a for a, b in zip(rewards, rewards[1:]))
        assert rewards[-1] <= -math.log(1e-6)
        assert rewards[0] >= 0.0


def brute_force_gae(rewards, values, dones, discount, lam, last_value=0.0):
    """O(T^2) expansion: A_t = sum_l (g*l)^l delta_{t+l} prod_{j<l}(1-d_{t+j})."""
    n = len(rewards)
    deltas = []
    for t in range(n):
        next_v = last_value if t == n - 1 else values[t + 1]
        not_done = 0.0 if dones[t] else 1.0
        deltas.append(rewards[t] + discount * next_v * not_done - values[t])
    adv = []
    for t in range(n):
        total, alive = 0.0, 1.0
        for l in range(n - t):
            total += (discount * lam) ** l * alive * deltas[t + l]
            if dones[t + l]:
                break
            # alive stays 1 while no done encountered
        adv.append(total)
    return np.asarray(adv), np.asarray(adv) + np.asarray(values)


class TestGae:
    def test_single_terminal_step(self):
        adv, ret = gae_advantages([1.0], [0.0], [True], 0.99, 0.95)
        assert adv[0] == pytest.approx(1.0)
        assert ret[0] == pytest.approx(1.0)

    def test_undiscounted_advantage_is_suffix_sum(self):
        rewards = [1.0, 2.0, 3.0]
        adv, _ = gae_advantages(rewards, [0.0, 0.0, 0.0], [False, False, True], 1.0, 1.0)
        np.testing.assert_allclose(adv, [6.0, 5.0, 3.0])

    def test_matches_brute_force_on_random_episodes(self):
        rng = np.random.default_rng(12)
        for _ in range(100):
            n = int(rng.integers(2, 60))
            rewards = rng.normal(size=n)
            values = rng.normal(size=n)
            dones = rng.uniform(size=n) < 0.15
            last_value = float(rng.normal())
            fast = gae_advantages(rewards, values, dones, 0.99, 0.95, last_value)
            slow = brute_force_gae(rewards, values, dones, 0.99, 0.95, last_value)
            np.testing.assert_allclose(fast[0], slow[0], atol=1e-10)
            np.testing.assert_allclose(fast[1], slow[1], atol=1e-10)

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError):
            gae_advantages([1.0, 2.0], [0.0], [False, True], 0.99, 0.95)


class TestPpoUpdate:
    def test_zero_advantages_leave_actor_still(self):
        cfg = PpoConfig(epochs=1, minibatch_size=64, entropy_coef=0.0, value_coef=0.0)
        policy = Policy(3, 1, cfg, seed=1)
        rng = np.random.default_rng(0)
        obs = rng.normal(size=(64, 3))
        dist = policy.distribution(obs)
        raw = dist.mean + dist.std * rng.standard_normal((64, 1))
        # constant rewards and values -> advantages identically zero after GAE
        # with zero values: adv_t = suffix structure; instead force it directly:
        logp = dist.log_prob(raw)
        values = np.zeros(64)
        rollout = Rollout(obs, raw, np.clip(raw, -1, 1), logp, values,
                          np.zeros(64), np.ones(64, dtype=bool),
                          np.atleast_2d(dist.mean), np.atleast_2d(dist.log_std), 0.0)
        before = policy.actor.params.copy()
        ppo_update(policy, rollout, seed=5)
        # zero advantages (all rewards zero, terminal every step) keep the
        # surrogate flat; Adam sees a ~zero gradient and barely moves
        delta = np.linalg.norm(policy.actor.params - before)
        assert delta < 1e-6

    def test_actor_gradient_norm_zero_on_zero_advantage_batch(self):
        cfg = PpoConfig()
        policy = Policy(3, 1, cfg, seed=2)
        rng = np.random.default_rng(1)
        obs = rng.normal(size=(32, 3))
        dist = policy.distribution(obs)
        raw = dist.sample(rng)
        logp_old = dist.log_prob(raw)

        from crossimit.nets import gaussian_head, gaussian_log_prob_t

        params = policy.actor.param_tensor()
        mean, log_std = gaussian_head(policy.actor.forward_t(obs, params), 1)
        logp = gaussian_log_prob_t(mean, log_std, raw)
        ratio = ad.exp(logp - ad.constant(logp_old))
        adv = ad.constant(np.zeros(32))
        clipped = ad.clip(ratio, 0.8, 1.2)
        surrogate = ad.tmean(ad.minimum(ratio * adv, clipped * adv))
        (grad,) = ad.gradient(-1.0 * surrogate, [params])
        assert np.linalg.norm(grad) < 1e-8

    def test_identity_ratio_surrogate_well_defined(self):
        cfg = PpoConfig(epochs=1)
        policy = Policy(2, 1, cfg, seed=3)
        rng = np.random.default_rng(2)
        obs = rng.normal(size=(16, 2))
        dist = policy.distribution(obs)
        raw = dist.sample(rng)
        logp_old = dist.log_prob(raw)

        from crossimit.nets import gaussian_head, gaussian_log_prob_t

        params = policy.actor.param_tensor()
        mean, log_std = gaussian_head(policy.actor.forward_t(obs, params), 1)
        logp = gaussian_log_prob_t(mean, log_std, raw)
        ratio = ad.exp(logp - ad.constant(logp_old))
        np.testing.assert_allclose(ratio.data, np.ones(16), rtol=1e-12)
        adv = ad.constant(rng.normal(size=16))
        clipped = ad.clip(ratio, 0.8, 1.2)
        surrogate = ad.tmean(ad.minimum(ratio * adv, clipped * adv))
        assert surrogate.data == pytest.approx(float(np.mean(adv.data)))
        (grad,) = ad.gradient(surrogate, [params])
        assert np.all(np.isfinite(grad))

    def test_clipped_branch_gives_zero_gradient_through_ratio(self):
        ratio = ad.Tensor(np.array([1.5]))  # above 1 + eps
        adv = ad.constant(np.array([2.0]))  # positive advantage
        clipped = ad.clip(ratio, 0.8, 1.2)
        surrogate = ad.tmean(ad.minimum(ratio * adv, clipped * adv))
        (g,) = ad.gradient(surrogate, [ratio])
        np.testing.assert_array_equal(g, np.zeros(1))

    def test_two_armed_bandit_probability_increases(self):
        """Positive-mean arm pays 1, the other 0; the policy should shift up."""
        cfg = PpoConfig(epochs=4, minibatch_size=64, steps_per_iteration=256,
                        entropy_coef=0.0)
        policy = Policy(1, 1, cfg, seed=4)
        rng = np.random.default_rng(7)
        obs = np.zeros((256, 1))

        def p_up():
            dist = policy.distribution(np.zeros(1))
            return 0.5 * (1.0 + math.erf(dist.mean[0] / (dist.std[0] * math.sqrt(2.0))))

        before = p_up()
        for it in range(10):
            dist = policy.distribution(obs)
            raw = dist.mean + dist.std * rng.standard_normal((256, 1))
            rewards = (raw[:, 0] > 0).astype(np.float64)
            rollout = Rollout(obs, raw, np.clip(raw, -1, 1), dist.log_prob(raw),
                              policy.critic(obs)[:, 0], rewards,
                              np.ones(256, dtype=bool), np.atleast_2d(dist.mean),
                              np.atleast_2d(dist.log_std), 0.0)
            ppo_update(policy, rollout, seed=100 + it)
        after = p_up()
        assert after > before
        assert after > 0.7


class TestRolloutCollection:
    def test_rollout_shapes_and_determinism(self):
        cfg = PpoConfig(steps_per_iteration=128)
        policy = Policy(4, 1, cfg, seed=5)
        config = RobotConfig(Family.PENDULUM, (1.2, 1.0), ObsMode.KEYPOINT)
        a = collect_rollout(policy, config, 128, seed=9)
        b = collect_rollout(policy, config, 128, seed=9)
        assert len(a) == 128
        np.testing.assert_array_equal(a.obs, b.obs)
        np.testing.assert_array_equal(a.raw_actions, b.raw_actions)
        assert a.episode_returns == b.episode_returns

    def test_actions_clipped_raw_kept(self):
        cfg = PpoConfig(steps_per_iteration=64)
        policy = Policy(4, 1, cfg, seed=6)
        # widen the action head so raw samples exceed the box
        policy.actor.params[-1] = 2.0  # log_std bias
        config = RobotConfig(Family.PENDULUM, (1.2, 1.0), ObsMode.KEYPOINT)
        roll = collect_rollout(policy, config, 64, seed=10)
        assert np.all(np.abs(roll.actions) <= 1.0)
        assert np.any(np.abs(roll.raw_actions) > 1.0)


class TestGailLoop:
    def test_gail_baseline_identity_maps_run_the_same_loop(self):
        """The baseline path is the same loop with identity latent maps."""
        from crossimit.gail import run_ir_gail
        from crossimit.trajectories import DemoSet, RandomPolicy, collect

        config = RobotConfig(Family.PENDULUM, (1.2, 1.0), ObsMode.KEYPOINT)
        demos = DemoSet(collect(RandomPolicy(1), config, episodes=2, seed=3))
        lm = IdentityLatentMap(4, 1)
        ppo_cfg = PpoConfig(steps_per_iteration=128, epochs=2)
        gail_cfg = GailConfig(iterations=2, disc_minibatch=64)
        policy, metrics = run_ir_gail(config, demos, lm, ppo_cfg, gail_cfg, seed=11)
        assert len(metrics) == 2
        assert all(np.isfinite(m["disc_loss"]) for m in metrics)
        assert all(m["mean_imitation_reward"] >= 0.0 for m in metrics)
