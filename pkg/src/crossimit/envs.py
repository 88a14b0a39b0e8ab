"""Parametric robot families with closed-form dynamics.

Three planar families (torque-driven inverted pendulum, cart-pole, two-link
reaching arm) share one interface: a robot is a point in a per-family box of
physical multipliers, episodes are integrated with semi-implicit Euler at
dt = 0.02 over a 200-step horizon, and every robot exposes two observation
modes. Keypoint observations are Cartesian body points (they depend on the
link lengths); angle observations are the generalized coordinates (they do
not). All functions are pure: identical inputs give bit-identical outputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

DT = 0.02
HORIZON = 200
RESET_NOISE = 0.05
GRAVITY = 9.81
TILT_LIMIT = 0.2

# family base values scaled by the configuration multipliers
PENDULUM_LENGTH = 1.0
PENDULUM_GEAR = 40.0
CARTPOLE_POLE_LENGTH = 1.0
CARTPOLE_GEAR = 10.0
CART_MASS = 1.0
POLE_MASS = 0.1
ARM_LINK = 1.0
ARM_GEAR = 12.0
ARM_DAMPING = 0.5
ARM_TARGET = (0.0, 1.0)

_MAX_SAMPLE_ATTEMPTS = 1000


class Family(str, Enum):
    PENDULUM = "pendulum"
    CARTPOLE = "cartpole"
    TWO_LINK_ARM = "two_link_arm"


class ObsMode(str, Enum):
    KEYPOINT = "keypoint"
    ANGLE = "angle"


_PARAM_DIM = {Family.PENDULUM: 2, Family.CARTPOLE: 2, Family.TWO_LINK_ARM: 2}
_ACTION_DIM = {Family.PENDULUM: 1, Family.CARTPOLE: 1, Family.TWO_LINK_ARM: 2}
_STATE_DIM = {Family.PENDULUM: 2, Family.CARTPOLE: 4, Family.TWO_LINK_ARM: 4}


@dataclass(frozen=True)
class ConfigSpace:
    """Box of admissible physical-parameter vectors."""

    lower: tuple
    upper: tuple

    def __post_init__(self):
        object.__setattr__(self, "lower", tuple(float(x) for x in self.lower))
        object.__setattr__(self, "upper", tuple(float(x) for x in self.upper))
        if len(self.lower) != len(self.upper) or not self.lower:
            raise ValueError("lower and upper bounds must be non-empty and equal length")
        if any(lo > hi for lo, hi in zip(self.lower, self.upper)):
            raise ValueError("lower bound exceeds upper bound")

    @property
    def dim(self) -> int:
        return len(self.lower)

    def contains(self, params, tol: float = 1e-12) -> bool:
        return all(
            lo - tol <= p <= hi + tol
            for p, lo, hi in zip(params, self.lower, self.upper)
        )


@dataclass(frozen=True)
class BallRegion:
    """Euclidean ball of parameter vectors, used to split train/eval robots."""

    center: tuple
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(x) for x in self.center))
        object.__setattr__(self, "radius", float(self.radius))
        if self.radius < 0.0:
            raise ValueError("radius must be non-negative")

    def contains(self, params) -> bool:
        d = math.dist(params, self.center)
        return d <= self.radius


@dataclass(frozen=True)
class RobotConfig:
    """One robot: a family, its parameter vector, and its observation mode."""

    family: Family
    params: tuple
    obs_mode: ObsMode

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        object.__setattr__(self, "obs_mode", ObsMode(self.obs_mode))
        object.__setattr__(self, "params", tuple(float(x) for x in self.params))
        want = _PARAM_DIM[self.family]
        if len(self.params) != want:
            raise ValueError(f"{self.family.value} expects {want} parameters, got {len(self.params)}")
        if not all(math.isfinite(p) for p in self.params):
            raise ValueError("non-finite robot parameters")


@dataclass(frozen=True)
class EnvState:
    """Generalized coordinates/velocities plus the step counter."""

    q: tuple
    qdot: tuple
    step_index: int = 0

    def __post_init__(self):
        object.__setattr__(self, "q", tuple(float(x) for x in self.q))
        object.__setattr__(self, "qdot", tuple(float(x) for x in self.qdot))
        if self.step_index < 0:
            raise ValueError("step_index must be non-negative")

    def is_finite(self) -> bool:
        return all(math.isfinite(x) for x in self.q + self.qdot)


def action_dim(family: Family) -> int:
    return _ACTION_DIM[Family(family)]


def obs_dim(family: Family, obs_mode: ObsMode) -> int:
    family, obs_mode = Family(family), ObsMode(obs_mode)
    if obs_mode is ObsMode.ANGLE:
        return _STATE_DIM[family]
    return {Family.PENDULUM: 4, Family.CARTPOLE: 8, Family.TWO_LINK_ARM: 8}[family]


def default_config_space(family: Family) -> ConfigSpace:
    """Box of multipliers applied to the family base values."""
    family = Family(family)
    if family is Family.PENDULUM:
        return ConfigSpace((0.75, 0.5), (5.0, 2.0))
    if family is Family.CARTPOLE:
        return ConfigSpace((0.75, 0.5), (2.0, 2.0))
    return ConfigSpace((0.6, 0.6), (1.4, 1.4))


# sampling ------------------------------------------------------------------


def sample_config(
    space: ConfigSpace,
    family: Family,
    obs_mode: ObsMode,
    *,
    region: BallRegion | None = None,
    exclude: BallRegion | None = None,
    seed: int,
) -> RobotConfig:
    """Draw a robot uniformly from ``space``, optionally inside/outside a ball.

    Raises RuntimeError when rejection sampling exhausts its attempt budget,
    which signals an infeasible region split.
    """
    rng = np.random.default_rng(seed)
    dim = space.dim
    lower = np.asarray(space.lower)
    upper = np.asarray(space.upper)
    for _ in range(_MAX_SAMPLE_ATTEMPTS):
        if region is not None:
            direction = rng.standard_normal(dim)
            norm = np.linalg.norm(direction)
            if norm == 0.0:
                continue
            r = region.radius * rng.uniform() ** (1.0 / dim)
            params = np.asarray(region.center) + r * direction / norm
        else:
            params = rng.uniform(lower, upper)
        if not space.contains(params):
            continue
        if exclude is not None and exclude.contains(params):
            continue
        return RobotConfig(family, tuple(params), obs_mode)
    raise RuntimeError(
        "could not sample a robot configuration in "
        f"{_MAX_SAMPLE_ATTEMPTS} attempts; region split is infeasible"
    )


# episode mechanics ------------------------------------------------------------


def _start_pose(family: Family) -> tuple:
    n = _STATE_DIM[family]
    return tuple(0.0 for _ in range(n))


def reset(config: RobotConfig, seed: int, noise: float = RESET_NOISE) -> EnvState:
    """Initial state near the family start pose with uniform noise per coordinate."""
    rng = np.random.default_rng(seed)
    pose = _start_pose(config.family)
    half = len(pose) // 2
    perturbed = tuple(x + rng.uniform(-noise, noise) for x in pose)
    return EnvState(q=perturbed[:half], qdot=perturbed[half:], step_index=0)


def _pendulum_step(config, state, u, dt):
    length = config.params[0] * PENDULUM_LENGTH
    gear = config.params[1] * PENDULUM_GEAR
    theta, theta_dot = state.q[0], state.qdot[0]
    acc = GRAVITY / length * math.sin(theta) + gear * u[0] / (length * length)
    theta_dot = theta_dot + dt * acc
    theta = theta + dt * theta_dot
    return (theta,), (theta_dot,)


def _cartpole_step(config, state, u, dt):
    half_len = config.params[0] * CARTPOLE_POLE_LENGTH / 2.0
    force = config.params[1] * CARTPOLE_GEAR * u[0]
    x, theta = state.q
    x_dot, theta_dot = state.qdot
    total_mass = CART_MASS + POLE_MASS
    sin_t, cos_t = math.sin(theta), math.cos(theta)
    temp = (force + POLE_MASS * half_len * theta_dot * theta_dot * sin_t) / total_mass
    theta_acc = (GRAVITY * sin_t - cos_t * temp) / (
        half_len * (4.0 / 3.0 - POLE_MASS * cos_t * cos_t / total_mass)
    )
    x_acc = temp - POLE_MASS * half_len * theta_acc * cos_t / total_mass
    x_dot = x_dot + dt * x_acc
    theta_dot = theta_dot + dt * theta_acc
    x = x + dt * x_dot
    theta = theta + dt * theta_dot
    return (x, theta), (x_dot, theta_dot)


def _arm_step(config, state, u, dt):
    l1 = config.params[0] * ARM_LINK
    l2 = config.params[1] * ARM_LINK
    t1, t2 = state.q
    d1, d2 = state.qdot
    c2, s2 = math.cos(t2), math.sin(t2)
    # point masses m1 = m2 = 1 at the link ends
    m11 = 2.0 * l1 * l1 + l2 * l2 + 2.0 * l1 * l2 * c2
    m12 = l2 * l2 + l1 * l2 * c2
    m22 = l2 * l2
    h = l1 * l2 * s2
    c_1 = -h * (2.0 * d1 * d2 + d2 * d2)
    c_2 = h * d1 * d1
    tau1 = ARM_GEAR * u[0] - ARM_DAMPING * d1 - c_1
    tau2 = ARM_GEAR * u[1] - ARM_DAMPING * d2 - c_2
    det = m11 * m22 - m12 * m12
    a1 = (m22 * tau1 - m12 * tau2) / det
    a2 = (m11 * tau2 - m12 * tau1) / det
    d1 = d1 + dt * a1
    d2 = d2 + dt * a2
    t1 = t1 + dt * d1
    t2 = t2 + dt * d2
    return (t1, t2), (d1, d2)


def _arm_tip(config, q) -> tuple:
    l1 = config.params[0] * ARM_LINK
    l2 = config.params[1] * ARM_LINK
    t1, t12 = q[0], q[0] + q[1]
    return (l1 * math.cos(t1) + l2 * math.cos(t12), l1 * math.sin(t1) + l2 * math.sin(t12))


def step(
    config: RobotConfig,
    state: EnvState,
    action,
    *,
    dt: float = DT,
    horizon: int = HORIZON,
):
    """Advance one semi-implicit Euler step; returns (state, true_reward, done)."""
    if not state.is_finite():
        raise ValueError("non-finite state passed to step")
    u = np.asarray(action, dtype=np.float64).reshape(-1)
    k = _ACTION_DIM[config.family]
    if u.shape != (k,):
        raise ValueError(f"{config.family.value} expects {k} action components, got {u.shape}")
    if np.any(np.abs(u) > 1.0 + 1e-9):
        raise ValueError("action components must lie in [-1, 1]")
    u = np.clip(u, -1.0, 1.0)

    if config.family is Family.PENDULUM:
        q, qdot = _pendulum_step(config, state, u, dt)
        done = abs(q[0]) > TILT_LIMIT
        reward = 1.0
    elif config.family is Family.CARTPOLE:
        q, qdot = _cartpole_step(config, state, u, dt)
        done = abs(q[1]) > TILT_LIMIT
        reward = 1.0
    else:
        q, qdot = _arm_step(config, state, u, dt)
        done = False
        reward = -math.dist(_arm_tip(config, q), ARM_TARGET)

    next_state = EnvState(q=q, qdot=qdot, step_index=state.step_index + 1)
    if not next_state.is_finite():
        raise ValueError("dynamics produced a non-finite state")
    done = done or next_state.step_index >= horizon
    return next_state, reward, done


def observe(config: RobotConfig, state: EnvState) -> np.ndarray:
    """Map the internal state to the configured observation vector."""
    if config.obs_mode is ObsMode.ANGLE:
        return np.asarray(state.q + state.qdot, dtype=np.float64)

    if config.family is Family.PENDULUM:
        length = config.params[0] * PENDULUM_LENGTH
        theta, theta_dot = state.q[0], state.qdot[0]
        return np.asarray(
            [
                length * math.sin(theta),
                length * math.cos(theta),
                length * theta_dot * math.cos(theta),
                -length * theta_dot * math.sin(theta),
            ]
        )
    if config.family is Family.CARTPOLE:
        length = config.params[0] * CARTPOLE_POLE_LENGTH
        x, theta = state.q
        x_dot, theta_dot = state.qdot
        return np.asarray(
            [
                x,
                0.0,
                x + length * math.sin(theta),
                length * math.cos(theta),
                x_dot,
                0.0,
                x_dot + length * theta_dot * math.cos(theta),
                -length * theta_dot * math.sin(theta),
            ]
        )
    l1 = config.params[0] * ARM_LINK
    l2 = config.params[1] * ARM_LINK
    t1, t2 = state.q
    d1, d2 = state.qdot
    t12, d12 = t1 + t2, d1 + d2
    elbow = (l1 * math.cos(t1), l1 * math.sin(t1))
    tip = (elbow[0] + l2 * math.cos(t12), elbow[1] + l2 * math.sin(t12))
    elbow_vel = (-l1 * d1 * math.sin(t1), l1 * d1 * math.cos(t1))
    tip_vel = (
        elbow_vel[0] - l2 * d12 * math.sin(t12),
        elbow_vel[1] + l2 * d12 * math.cos(t12),
    )
    return np.asarray(elbow + tip + elbow_vel + tip_vel)


def pendulum_energy(config: RobotConfig, state: EnvState) -> float:
    """Mechanical energy of the unforced pendulum (integration sanity checks)."""
    length = config.params[0] * PENDULUM_LENGTH
    theta, theta_dot = state.q[0], state.qdot[0]
    return 0.5 * length * length * theta_dot * theta_dot + GRAVITY * length * math.cos(theta)
