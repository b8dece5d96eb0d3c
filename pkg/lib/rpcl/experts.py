"""
Demonstration sources and the demonstration file format.

:author: Doug Skrypa
"""

import json
import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass
from functools import cache
from importlib import resources
from pathlib import Path
from typing import TYPE_CHECKING, Union, Optional, Sequence, Iterable

import numpy as np

from .actorcritic import PolicyModel, GreedyPolicy
from .constants import LQR_GAIN, EPISODE_CAP
from .envsim import EnvId, Trajectory, ActionSource, rollout
from .exceptions import DemoParseError, DemonstratorError, EnvMismatchError, RpclException
from .utils import atomic_write, make_rng, get_user_cache_dir

if TYPE_CHECKING:
    from .config import RpclConfig

__all__ = [
    'LqrGain',
    'calibrated_lqr_gain',
    'lqr_action',
    'Demonstration',
    'Demonstrator',
    'LqrDemonstrator',
    'PolicyDemonstrator',
    'RecordedDemonstrator',
    'demonstrate',
    'save_demos',
    'load_demos',
    'shipped_expert_path',
    'default_expert_path',
    'train_expert',
    'load_expert',
]
log = logging.getLogger(__name__)
DEMO_FIELDS = ('env', 'source', 'states', 'actions')


# region LQR


@dataclass(frozen=True)
class LqrGain:
    """
    Discretized LQR controller for CartPole: push right (1) iff ``sign * k.s >= 0``, else push left (0).  With
    ``sign=1``, a pole leaning right (positive angle) yields a push to the right.
    """

    k: tuple[float, ...] = LQR_GAIN
    sign: int = 1

    def __post_init__(self):
        k = tuple(float(v) for v in self.k)
        object.__setattr__(self, 'k', k)
        if len(k) != 4 or not np.isfinite(k).all():
            raise ValueError(f'Invalid LQR gain k={k} - expected 4 finite values')
        if self.sign not in (1, -1):
            raise ValueError(f'Invalid LQR sign={self.sign} - expected 1 or -1')

    def __call__(self, state: np.ndarray, rng: np.random.Generator = None) -> int:
        return lqr_action(self, state)

    def calibrate_sign(self, rng: np.random.Generator, trials: int = 20, max_steps: int = 200) -> 'LqrGain':
        """
        :return: The gain with whichever force-direction convention keeps the pole up longer from small perturbations
        """
        starts = [rng.uniform(-0.05, 0.05, size=4) for _ in range(trials)]
        scores = {}
        for sign in (1, -1):
            gain = LqrGain(self.k, sign)
            runs = (rollout(EnvId.CARTPOLE, gain, rng, max_steps, s0) for s0 in starts)
            scores[sign] = sum(traj.length for traj in runs)
        log.debug(f'LQR sign calibration: total survival steps by sign={scores}')
        return LqrGain(self.k, max(scores, key=lambda s: (scores[s], s)))


@cache
def calibrated_lqr_gain(seed: int = 0) -> LqrGain:
    return LqrGain().calibrate_sign(make_rng(seed))


def lqr_action(gain: LqrGain, state) -> int:
    state = np.asarray(state, dtype=np.float64)
    if state.shape != (4,):
        raise ValueError(f'LQR control requires a 4-dimensional CartPole state; found shape={state.shape}')
    return 1 if gain.sign * float(np.dot(gain.k, state)) >= 0 else 0


# endregion


@dataclass(frozen=True)
class Demonstration:
    trajectory: Trajectory
    source: str

    @property
    def env(self) -> EnvId:
        return self.trajectory.env

    @property
    def initial_state(self) -> np.ndarray:
        return self.trajectory.initial_state

    def to_json(self) -> str:
        traj = self.trajectory
        actions = None if traj.actions is None else traj.actions.tolist()
        data = {'env': traj.env.value, 'source': self.source, 'states': traj.states.tolist(), 'actions': actions}
        return json.dumps(data)


# region Demonstrators


class Demonstrator(ABC):
    source: str = 'demonstrator'

    def __repr__(self) -> str:
        return f'<{self.__class__.__name__}[{self.source}]>'

    @abstractmethod
    def supports(self, env: EnvId) -> bool:
        raise NotImplementedError

    def require(self, env: EnvId):
        if not self.supports(env):
            raise EnvMismatchError(f'{self} cannot provide {env.value} demonstrations')

    @abstractmethod
    def demonstrate(self, env: EnvId, initial_state: np.ndarray, max_steps: int = EPISODE_CAP) -> Demonstration:
        raise NotImplementedError

    def action_source(self) -> Optional[ActionSource]:
        """The controller behind this demonstrator, if it has one"""
        return None


class _ControllerDemonstrator(Demonstrator, ABC):
    @abstractmethod
    def _controller(self) -> tuple[ActionSource, np.random.Generator]:
        raise NotImplementedError

    def demonstrate(self, env: EnvId, initial_state: np.ndarray, max_steps: int = EPISODE_CAP) -> Demonstration:
        self.require(env)
        controller, rng = self._controller()
        initial_state = np.array(initial_state, dtype=np.float64)
        return Demonstration(rollout(env, controller, rng, max_steps, initial_state), self.source)


class LqrDemonstrator(_ControllerDemonstrator):
    source = 'lqr'

    def __init__(self, gain: LqrGain = None):
        self.gain = gain or calibrated_lqr_gain()

    def supports(self, env: EnvId) -> bool:
        return env is EnvId.CARTPOLE

    def _controller(self) -> tuple[ActionSource, np.random.Generator]:
        return self.gain, make_rng(0)

    def action_source(self) -> ActionSource:
        return self.gain


class PolicyDemonstrator(_ControllerDemonstrator):
    source = 'pretrained'

    def __init__(self, policy: PolicyModel, env: EnvId, deterministic: bool = True, seed: int = 0):
        if not policy.compatible_with(env):
            raise EnvMismatchError(f'{policy} is not compatible with {env.value}')
        self.policy = policy
        self.env = env
        self.deterministic = deterministic
        self.seed = seed
        self._calls = 0

    def supports(self, env: EnvId) -> bool:
        return env is self.env

    def _controller(self) -> tuple[ActionSource, np.random.Generator]:
        self._calls += 1
        return self.action_source(), make_rng(self.seed, self._calls)

    def action_source(self) -> ActionSource:
        return GreedyPolicy(self.policy) if self.deterministic else self.policy


class RecordedDemonstrator(Demonstrator):
    """Replays stored demonstrations, choosing the one whose initial state is nearest to the requested one"""

    source = 'recorded'

    def __init__(self, demos: Sequence[Demonstration]):
        self.demos = list(demos)
        if empty := [i for i, demo in enumerate(self.demos) if demo.trajectory.length == 0]:
            raise DemonstratorError(f'Recorded demonstrations must contain at least one transition; empty at {empty}')

    def __repr__(self) -> str:
        return f'<{self.__class__.__name__}[{len(self.demos)} demos]>'

    def supports(self, env: EnvId) -> bool:
        return any(demo.env is env for demo in self.demos)

    def demonstrate(self, env: EnvId, initial_state: np.ndarray, max_steps: int = EPISODE_CAP) -> Demonstration:
        if not (candidates := [demo for demo in self.demos if demo.env is env]):
            raise DemonstratorError(f'No recorded {env.value} demonstrations are available')
        starts = np.array([demo.initial_state for demo in candidates])
        distances = np.linalg.norm(starts - np.asarray(initial_state, dtype=np.float64), axis=1)
        return candidates[int(np.argmin(distances))]


def demonstrate(
    demonstrator: Demonstrator, env: EnvId, initial_state: np.ndarray, max_steps: int = EPISODE_CAP
) -> Demonstration:
    return demonstrator.demonstrate(env, initial_state, max_steps)


# endregion


# region Demonstration Files


def save_demos(path: Union[str, Path], demos: Iterable[Demonstration]):
    with atomic_write(path) as f:
        for demo in demos:
            f.write(demo.to_json() + '\n')


def load_demos(path: Union[str, Path]) -> list[Demonstration]:
    """
    :raises: :class:`DemoParseError` naming the first malformed line; nothing is returned for a malformed file
    """
    path = Path(path)
    demos = []
    with path.open('rb') as f:
        for line_num, raw in enumerate(f, 1):
            try:
                if not (line := raw.decode('utf-8')).strip():
                    continue
                demos.append(_parse_demo(line))
            except (ValueError, KeyError, TypeError, RpclException) as e:
                raise DemoParseError(path, line_num, str(e)) from e
    log.debug(f'Loaded {len(demos)} demonstrations from {path.as_posix()}')
    return demos


def _parse_demo(line: str) -> Demonstration:
    data = json.loads(line)
    if not isinstance(data, dict) or tuple(data) != DEMO_FIELDS:
        found = list(data) if isinstance(data, dict) else type(data).__name__
        raise ValueError(f'expected an object with fields {list(DEMO_FIELDS)}; found {found}')
    env = EnvId.from_name(data['env'])
    if not isinstance(data['source'], str):
        raise ValueError(f'invalid source={data["source"]!r}')
    states = data['states']
    if not isinstance(states, list) or not states or not all(isinstance(s, list) for s in states):
        raise ValueError('states must be a non-empty list of state vectors')
    actions = data['actions']
    if actions is not None and not isinstance(actions, list):
        raise ValueError('actions must be a list or null')
    return Demonstration(Trajectory(env, states, actions), data['source'])


# endregion


# region Expert Resolution


def shipped_expert_path(env: EnvId) -> Path:
    with resources.as_file(resources.files('rpcl.data').joinpath('experts').joinpath(f'{env.value}.json')) as path:
        return path


def default_expert_path(env: EnvId) -> Path:
    return get_user_cache_dir('experts').joinpath(f'{env.value}.json')


def train_expert(env: EnvId, config: 'RpclConfig', path: Union[str, Path, None] = None) -> PolicyModel:
    """Pretrain a demonstrator policy with actor-critic on the hidden environment reward, and save it"""
    from .evalharness import ac_env_reward_train

    path = Path(path) if path else default_expert_path(env)
    log.info(f'Training a {env.value} expert on the environment reward (up to {config.max_episodes} episodes)')
    policy = ac_env_reward_train(env, config)
    policy.save(path)
    log.info(f'Saved {env.value} expert to {path.as_posix()}')
    return policy


def load_expert(env: EnvId, name: Optional[str] = None) -> Demonstrator:
    """
    :param env: The environment the demonstrator must support
    :param name: ``lqr``, ``pretrained`` (the checkpoint shipped with this package), a policy checkpoint path
      (``.json``), or a demonstration file path (``.jsonl``).  Defaults to ``lqr`` for CartPole and ``pretrained``
      otherwise.
    """
    name = name or ('lqr' if env is EnvId.CARTPOLE else 'pretrained')
    if name == 'lqr':
        demonstrator = LqrDemonstrator()
    elif name.endswith('.jsonl'):
        demonstrator = RecordedDemonstrator(load_demos(name))
    else:
        path = shipped_expert_path(env) if name == 'pretrained' else Path(name).expanduser()
        if not path.is_file():
            raise DemonstratorError(f'Expert checkpoint not found: {path.as_posix()}')
        demonstrator = PolicyDemonstrator(PolicyModel.load(path), env)

    demonstrator.require(env)
    return demonstrator


# endregion
