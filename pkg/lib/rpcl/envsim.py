"""
Deterministic CartPole and MountainCar simulators.

The environment reward is never handed to training code directly: it travels with each :class:`Transition` and
:class:`Trajectory` in a private field, and can only be read through :func:`env_rewards` or :func:`env_return`, both
of which increment :data:`FIREWALL`'s access counter.

:author: Doug Skrypa
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from threading import Lock
from typing import Union, Optional, Protocol, Sequence

import numpy as np

from .constants import EPISODE_CAP, CP_GRAVITY, CP_MASS_POLE, CP_TOTAL_MASS, CP_HALF_LENGTH, CP_POLE_MASS_LENGTH
from .constants import CP_FORCE, CP_TAU, CP_X_LIMIT, CP_THETA_LIMIT, CP_INIT_BOUND
from .constants import MC_FORCE, MC_GRAVITY, MC_POWER, MC_MIN_POSITION, MC_MAX_POSITION, MC_MAX_SPEED
from .constants import MC_GOAL_POSITION, MC_INIT_LOW, MC_INIT_HIGH, MC_GOAL_BONUS, MC_ACTION_COST
from .exceptions import InvalidAction, DimensionMismatch, EmptyTrajectoryError

__all__ = [
    'EnvId',
    'Action',
    'ActionSource',
    'Transition',
    'Trajectory',
    'RewardFirewall',
    'FIREWALL',
    'reset',
    'step',
    'rollout',
    'is_terminal',
    'env_rewards',
    'env_return',
]
log = logging.getLogger(__name__)

Action = Union[int, float]


class EnvId(Enum):
    CARTPOLE = 'cartpole'
    MOUNTAIN_CAR = 'mountaincar'
    MOUNTAIN_CAR_CONTINUOUS = 'mountaincar_continuous'

    @classmethod
    def from_name(cls, name: Union[str, 'EnvId']) -> 'EnvId':
        if isinstance(name, cls):
            return name
        key = name.lower().replace('-', '_').replace(' ', '_')
        key = _ENV_ALIASES.get(key, key)
        try:
            return cls(key)
        except ValueError:
            names = ', '.join(e.value for e in cls)
            raise ValueError(f'Invalid env={name!r} - choose one of: {names}') from None

    @property
    def state_dim(self) -> int:
        return 4 if self is EnvId.CARTPOLE else 2

    @property
    def is_continuous(self) -> bool:
        return self is EnvId.MOUNTAIN_CAR_CONTINUOUS

    @property
    def n_actions(self) -> Optional[int]:
        """Number of discrete actions, or None for the continuous env"""
        return {EnvId.CARTPOLE: 2, EnvId.MOUNTAIN_CAR: 3}.get(self)

    @property
    def cap(self) -> int:
        return EPISODE_CAP

    @property
    def is_mountain_car(self) -> bool:
        return self is not EnvId.CARTPOLE


_ENV_ALIASES = {
    'cartpole_v0': 'cartpole',
    'cp': 'cartpole',
    'mountaincar_v0': 'mountaincar',
    'mc': 'mountaincar',
    'mountaincar_discrete': 'mountaincar',
    'mountaincarcontinuous_v0': 'mountaincar_continuous',
    'mountaincarcontinuous': 'mountaincar_continuous',
    'mcc': 'mountaincar_continuous',
}


class ActionSource(Protocol):
    def __call__(self, state: np.ndarray, rng: np.random.Generator) -> Action:
        ...


# region Reward Firewall


class RewardFirewall:
    """Counts every read of the hidden environment reward."""

    def __init__(self):
        self._lock = Lock()
        self._count = 0

    def __repr__(self) -> str:
        return f'<{self.__class__.__name__}[count={self._count}]>'

    @property
    def count(self) -> int:
        return self._count

    def record(self, reads: int = 1):
        with self._lock:
            self._count += reads

    def reset(self):
        with self._lock:
            self._count = 0


FIREWALL = RewardFirewall()


# endregion


@dataclass(frozen=True)
class Transition:
    next_state: np.ndarray
    terminated: bool
    truncated: bool
    _env_reward: float = field(default=0.0, repr=False, compare=False)


class Trajectory:
    """
    A rollout or demonstration: states ``s_0..s_T`` and, optionally, the ``T`` actions taken between them.

    Actions sampled from a Gaussian policy are stored as sampled (before the environment clips them), so that their
    log-probabilities can be recomputed.
    """

    __slots__ = ('env', 'states', 'actions', 'terminated', '_env_rewards')

    def __init__(
        self,
        env: EnvId,
        states: Union[np.ndarray, Sequence[Sequence[float]]],
        actions: Union[np.ndarray, Sequence[Action], None] = None,
        terminated: bool = False,
        env_rewards: Optional[np.ndarray] = None,
    ):
        self.env = env
        self.states = states = np.array(states, dtype=np.float64, ndmin=2)
        if states.shape[0] == 0 or states.size == 0:
            raise EmptyTrajectoryError('A trajectory requires at least one state')
        if states.shape[1] != env.state_dim:
            raise DimensionMismatch(f'{env.value} state', env.state_dim, states.shape[1])
        if not np.isfinite(states).all():
            raise ValueError('Trajectory states must be finite')
        if actions is not None:
            actions = np.asarray(actions, dtype=np.float64 if env.is_continuous else np.int64).reshape(-1)
            if len(actions) != len(states) - 1:
                raise ValueError(f'Expected {len(states) - 1} actions for {len(states)} states; found {len(actions)}')
        if len(states) - 1 > env.cap:
            raise ValueError(f'Trajectory length={len(states) - 1} exceeds the {env.value} episode cap={env.cap}')
        self.actions = actions
        self.terminated = terminated
        self._env_rewards = env_rewards

    def __repr__(self) -> str:
        actions = 'with' if self.actions is not None else 'without'
        return f'<{self.__class__.__name__}[{self.env.value}, T={self.length}, {actions} actions]>'

    def __len__(self) -> int:
        return self.length

    def __eq__(self, other) -> bool:
        if not isinstance(other, Trajectory):
            return NotImplemented
        if self.env != other.env or not np.array_equal(self.states, other.states):
            return False
        if self.actions is None or other.actions is None:
            return self.actions is None and other.actions is None
        return np.array_equal(self.actions, other.actions)

    __hash__ = None

    @property
    def length(self) -> int:
        return len(self.states) - 1

    @property
    def initial_state(self) -> np.ndarray:
        return self.states[0]

    @property
    def has_actions(self) -> bool:
        return self.actions is not None

    def without_actions(self) -> 'Trajectory':
        return Trajectory(self.env, self.states, None, self.terminated, self._env_rewards)


# region Env Reward Channel


def env_rewards(trajectory: Trajectory) -> np.ndarray:
    """The hidden per-transition rewards ``r_1..r_T`` of a simulated trajectory"""
    if trajectory._env_rewards is None:
        raise ValueError(f'{trajectory} carries no environment rewards (it was not produced by the simulator)')
    FIREWALL.record()
    return trajectory._env_rewards.copy()


def env_return(trajectory: Trajectory) -> float:
    return float(env_rewards(trajectory).sum())


# endregion


# region Dynamics


def reset(env: EnvId, rng: np.random.Generator) -> np.ndarray:
    if env is EnvId.CARTPOLE:
        return rng.uniform(-CP_INIT_BOUND, CP_INIT_BOUND, size=4)
    return np.array([rng.uniform(MC_INIT_LOW, MC_INIT_HIGH), 0.0])


def validate_action(env: EnvId, action: Action) -> Action:
    """
    :return: The discrete index as an int, or the continuous value clipped to [-1, 1]
    :raises: :class:`InvalidAction` if the action does not fit the env's action space
    """
    if env.is_continuous:
        value = np.asarray(action, dtype=np.float64)
        if value.size != 1:
            raise InvalidAction(f'{env.value} expects a scalar action; found shape={value.shape}')
        value = float(value.reshape(-1)[0])
        if not math.isfinite(value):
            raise InvalidAction(f'{env.value} action must be finite; found {value}')
        return min(1.0, max(-1.0, value))

    if isinstance(action, (bool, np.bool_)) or not isinstance(action, (int, np.integer)):
        raise InvalidAction(f'{env.value} expects a discrete action index; found {action!r}')
    if not 0 <= action < env.n_actions:
        raise InvalidAction(f'Invalid {env.value} {action=} - must be in [0, {env.n_actions})')
    return int(action)


def is_terminal(env: EnvId, state: np.ndarray) -> bool:
    if env is EnvId.CARTPOLE:
        return bool(abs(state[0]) > CP_X_LIMIT or abs(state[2]) > CP_THETA_LIMIT)
    return bool(state[0] >= MC_GOAL_POSITION)


def step(env: EnvId, state: np.ndarray, action: Action, step_index: int) -> Transition:
    state = np.asarray(state, dtype=np.float64)
    if state.shape != (env.state_dim,):
        raise DimensionMismatch(f'{env.value} state', env.state_dim, state.size)
    action = validate_action(env, action)
    if env is EnvId.CARTPOLE:
        next_state, reward = _cartpole_step(state, action), 1.0
    elif env is EnvId.MOUNTAIN_CAR:
        next_state, reward = _mountain_car_step(state, (action - 1) * MC_FORCE), -1.0
    else:
        next_state = _mountain_car_step(state, action * MC_POWER)
        reward = -MC_ACTION_COST * action ** 2

    terminated = is_terminal(env, next_state)
    if terminated and env is EnvId.MOUNTAIN_CAR_CONTINUOUS:
        reward += MC_GOAL_BONUS
    return Transition(next_state, terminated, step_index + 1 >= env.cap, reward)


def _cartpole_step(state: np.ndarray, action: int) -> np.ndarray:
    x, x_dot, theta, theta_dot = state
    force = CP_FORCE if action == 1 else -CP_FORCE
    cos_th, sin_th = math.cos(theta), math.sin(theta)

    temp = (force + CP_POLE_MASS_LENGTH * theta_dot ** 2 * sin_th) / CP_TOTAL_MASS
    theta_acc = (CP_GRAVITY * sin_th - cos_th * temp) / (
        CP_HALF_LENGTH * (4.0 / 3.0 - CP_MASS_POLE * cos_th ** 2 / CP_TOTAL_MASS)
    )
    x_acc = temp - CP_POLE_MASS_LENGTH * theta_acc * cos_th / CP_TOTAL_MASS

    # semi-implicit Euler: velocities first
    x_dot = x_dot + CP_TAU * x_acc
    x = x + CP_TAU * x_dot
    theta_dot = theta_dot + CP_TAU * theta_acc
    theta = theta + CP_TAU * theta_dot
    return np.array([x, x_dot, theta, theta_dot])


def _mountain_car_step(state: np.ndarray, push: float) -> np.ndarray:
    position, velocity = state
    velocity += push - MC_GRAVITY * math.cos(3 * position)
    velocity = min(MC_MAX_SPEED, max(-MC_MAX_SPEED, velocity))
    position += velocity
    position = min(MC_MAX_POSITION, max(MC_MIN_POSITION, position))
    if position == MC_MIN_POSITION and velocity < 0:
        velocity = 0.0
    return np.array([position, velocity])


# endregion


def rollout(
    env: EnvId,
    policy: ActionSource,
    rng: np.random.Generator,
    max_steps: int = EPISODE_CAP,
    initial_state: Optional[np.ndarray] = None,
) -> Trajectory:
    """
    Run one episode from a fresh reset state (or ``initial_state``, used exactly as given).

    :param env: The environment to simulate
    :param policy: Callable that maps (state, rng) to an action
    :param rng: Generator used for the reset state and passed to the policy
    :param max_steps: Maximum number of transitions (never more than the env's episode cap)
    :param initial_state: Optional s_0 override
    :return: The recorded trajectory, including actions
    """
    state = reset(env, rng) if initial_state is None else np.array(initial_state, dtype=np.float64)
    max_steps = min(max_steps, env.cap)
    states, actions, rewards = [state], [], []
    terminated = False
    for i in range(max_steps):
        action = policy(state, rng)
        transition = step(env, state, action, i)
        actions.append(action)
        rewards.append(transition._env_reward)
        states.append(state := transition.next_state)
        if transition.terminated:
            terminated = True
            break
        elif transition.truncated:
            break

    return Trajectory(env, np.array(states), actions, terminated, np.array(rewards, dtype=np.float64))
