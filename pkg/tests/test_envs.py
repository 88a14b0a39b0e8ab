"""Dynamics, observation geometry, sampling, and integration sanity."""

import math

import numpy as np
import pytest

from crossimit import envs
from crossimit.envs import (
    BallRegion,
    ConfigSpace,
    EnvState,
    Family,
    ObsMode,
    RobotConfig,
    observe,
    reset,
    sample_config,
    step,
)

PEND_K = RobotConfig(Family.PENDULUM, (1.0, 1.0), ObsMode.KEYPOINT)
PEND_A = RobotConfig(Family.PENDULUM, (1.0, 1.0), ObsMode.ANGLE)


class TestSampling:
    def test_bounds_containment(self):
        space = ConfigSpace((1.5, 0.5), (2.0, 2.0))
        cfg = sample_config(space, Family.PENDULUM, ObsMode.ANGLE, seed=3)
        assert space.contains(cfg.params)
        assert 1.5 <= cfg.params[0] <= 2.0

    def test_degenerate_box(self):
        space = ConfigSpace((2.0, 1.0), (2.0, 1.0))
        cfg = sample_config(space, Family.PENDULUM, ObsMode.ANGLE, seed=0)
        assert cfg.params == (2.0, 1.0)

    def test_ball_containment(self):
        space = ConfigSpace((0.5, 0.5), (2.0, 2.0))
        region = BallRegion((1.0, 1.0), 0.2)
        for seed in range(20):
            cfg = sample_config(space, Family.PENDULUM, ObsMode.ANGLE,
                                region=region, seed=seed)
            assert math.dist(cfg.params, region.center) <= 0.2 + 1e-12

    def test_exclusion(self):
        space = ConfigSpace((0.0, 0.0), (1.0, 1.0))
        exclude = BallRegion((0.5, 0.5), 0.3)
        for seed in range(20):
            cfg = sample_config(space, Family.PENDULUM, ObsMode.ANGLE,
                                exclude=exclude, seed=seed)
            assert not exclude.contains(cfg.params)

    def test_infeasible_exclusion_fails(self):
        space = ConfigSpace((0.0, 0.0), (1.0, 1.0))
        exclude = BallRegion((0.5, 0.5), 10.0)
        with pytest.raises(RuntimeError):
            sample_config(space, Family.PENDULUM, ObsMode.ANGLE, exclude=exclude, seed=0)

    def test_deterministic_per_seed(self):
        space = ConfigSpace((0.75, 0.5), (5.0, 2.0))
        a = sample_config(space, Family.PENDULUM, ObsMode.ANGLE, seed=7)
        b = sample_config(space, Family.PENDULUM, ObsMode.ANGLE, seed=7)
        assert a == b


class TestReset:
    def test_zero_noise_start_is_upright(self):
        state = reset(PEND_A, seed=0, noise=0.0)
        assert state.q == (0.0,) and state.qdot == (0.0,)
        assert state.step_index == 0

    def test_same_seed_same_state(self):
        assert reset(PEND_A, seed=5) == reset(PEND_A, seed=5)

    def test_different_seeds_differ(self):
        assert reset(PEND_A, seed=5) != reset(PEND_A, seed=6)

    def test_noise_bounded(self):
        for seed in range(30):
            state = reset(PEND_A, seed=seed)
            assert all(abs(x) <= 0.05 for x in state.q + state.qdot)


class TestPendulumStep:
    def test_upright_zero_torque_is_fixed_point(self):
        state, reward, done = step(PEND_A, EnvState((0.0,), (0.0,)), [0.0])
        assert state.q == (0.0,) and state.qdot == (0.0,)
        assert reward == 1.0 and not done

    def test_hand_evaluated_semi_implicit_euler_step(self):
        state, _, _ = step(PEND_A, EnvState((0.1,), (0.0,)), [0.0])
        vel = 0.02 * 9.81 * math.sin(0.1)
        assert state.qdot[0] == pytest.approx(vel, abs=0, rel=1e-15)
        assert state.q[0] == pytest.approx(0.1 + 0.02 * vel, abs=0, rel=1e-15)

    def test_termination_beyond_tilt_limit(self):
        _, _, done = step(PEND_A, EnvState((0.25,), (0.0,)), [0.0])
        assert done

    def test_horizon_termination(self):
        _, _, done = step(PEND_A, EnvState((0.0,), (0.0,), step_index=199), [0.0])
        assert done

    def test_non_finite_state_rejected(self):
        with pytest.raises(ValueError):
            step(PEND_A, EnvState((float("nan"),), (0.0,)), [0.0])

    def test_action_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            step(PEND_A, EnvState((0.0,), (0.0,)), [1.5])

    def test_step_is_pure(self):
        state = EnvState((0.05,), (-0.1,), step_index=3)
        a = step(PEND_A, state, [0.3])
        b = step(PEND_A, state, [0.3])
        assert a == b

    def test_torque_scales_with_gear(self):
        weak = RobotConfig(Family.PENDULUM, (1.0, 0.5), ObsMode.ANGLE)
        strong = RobotConfig(Family.PENDULUM, (1.0, 2.0), ObsMode.ANGLE)
        sw, _, _ = step(weak, EnvState((0.0,), (0.0,)), [1.0])
        ss, _, _ = step(strong, EnvState((0.0,), (0.0,)), [1.0])
        assert ss.qdot[0] == pytest.approx(4.0 * sw.qdot[0])


class TestObservation:
    def test_keypoint_tip_geometry_l2(self):
        cfg = RobotConfig(Family.PENDULUM, (2.0, 1.0), ObsMode.KEYPOINT)
        obs = observe(cfg, EnvState((0.0,), (0.0,)))
        np.testing.assert_allclose(obs[:2], [0.0, 2.0])

    def test_keypoint_tip_geometry_right_angle(self):
        obs = observe(PEND_K, EnvState((math.pi / 2,), (0.0,)))
        np.testing.assert_allclose(obs[:2], [1.0, 0.0], atol=1e-12)

    def test_angle_obs_independent_of_length(self):
        state = EnvState((0.07,), (-0.4,))
        outs = []
        for length in (1.0, 2.0, 5.0):
            cfg = RobotConfig(Family.PENDULUM, (length, 1.0), ObsMode.ANGLE)
            outs.append(observe(cfg, state))
        np.testing.assert_array_equal(outs[0], outs[1])
        np.testing.assert_array_equal(outs[1], outs[2])

    def test_keypoint_obs_depends_on_length(self):
        state = EnvState((0.07,), (-0.4,))
        a = observe(RobotConfig(Family.PENDULUM, (1.0, 1.0), ObsMode.KEYPOINT), state)
        b = observe(RobotConfig(Family.PENDULUM, (2.0, 1.0), ObsMode.KEYPOINT), state)
        assert not np.array_equal(a, b)

    @pytest.mark.parametrize("family", list(Family))
    @pytest.mark.parametrize("mode", list(ObsMode))
    def test_obs_dim_constant_across_configs(self, family, mode):
        space = envs.default_config_space(family)
        dims = set()
        for seed in range(10):
            cfg = sample_config(space, family, mode, seed=seed)
            state = reset(cfg, seed=seed)
            dims.add(observe(cfg, state).shape)
        assert len(dims) == 1
        assert dims.pop() == (envs.obs_dim(family, mode),)


class TestIntegrationSanity:
    def test_pendulum_energy_drift_below_five_percent(self):
        state = EnvState((0.15,), (0.0,))
        e0 = envs.pendulum_energy(PEND_A, state)
        worst = 0.0
        for _ in range(200):
            state, _, _ = step(PEND_A, state, [0.0], horizon=10**9)
            dev = abs(envs.pendulum_energy(PEND_A, state) - e0) / abs(e0)
            worst = max(worst, dev)
        assert worst < 0.05

    @pytest.mark.parametrize("family", list(Family))
    def test_random_rollout_stays_finite(self, family):
        rng = np.random.default_rng(0)
        space = envs.default_config_space(family)
        cfg = sample_config(space, family, ObsMode.KEYPOINT, seed=1)
        state = reset(cfg, seed=1)
        done = False
        while not done:
            action = rng.uniform(-1, 1, envs.action_dim(family))
            state, reward, done = step(cfg, state, action)
            assert state.is_finite() and math.isfinite(reward)


class TestArm:
    def test_reward_is_negative_distance_to_target(self):
        cfg = RobotConfig(Family.TWO_LINK_ARM, (1.0, 1.0), ObsMode.KEYPOINT)
        state = EnvState((0.0, 0.0), (0.0, 0.0))
        _, reward, done = step(cfg, state, [0.0, 0.0])
        # tip barely moves in one passive step; distance from (2, 0) to (1, 1)
        assert reward == pytest.approx(-math.sqrt(2.0), abs=1e-2)
        assert not done

    def test_runs_full_horizon(self):
        cfg = RobotConfig(Family.TWO_LINK_ARM, (1.0, 1.0), ObsMode.ANGLE)
        state = reset(cfg, seed=0)
        steps = 0
        done = False
        while not done:
            state, _, done = step(cfg, state, [0.1, -0.1])
            steps += 1
        assert steps == envs.HORIZON


def test_robot_config_validates_param_dim():
    with pytest.raises(ValueError):
        RobotConfig(Family.PENDULUM, (1.0,), ObsMode.ANGLE)


def test_config_space_validates_bounds():
    with pytest.raises(ValueError):
        ConfigSpace((2.0,), (1.0,))
