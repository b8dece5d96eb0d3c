"""
Stochastic policies, the critic, advantages under a (learned) reward, and the actor-critic updates.

:author: Doug Skrypa
"""

import json
import logging
import math
from enum import Enum
from pathlib import Path
from typing import Union, Optional, Protocol, Any

import numpy as np

from .constants import LOG_STD_MIN, LOG_STD_MAX
from .envsim import EnvId, Action, Trajectory
from .exceptions import DimensionMismatch, MissingActions
from .net import Network, Gradient, OutputActivation, Direction, Optimizer, GradientStep, softmax, log_softmax
from .net import apply_gradient

__all__ = [
    'PolicyHead',
    'PolicyModel',
    'CriticModel',
    'RewardSource',
    'GreedyPolicy',
    'sample_action',
    'advantage',
    'returns_to_go',
    'policy_gradient',
    'policy_objective',
    'policy_step',
    'critic_gradient',
    'critic_loss',
    'critic_step',
    'ActorCriticLearner',
]
log = logging.getLogger(__name__)
LOG_SQRT_2PI = 0.5 * math.log(2 * math.pi)


class PolicyHead(Enum):
    CATEGORICAL = 'categorical'
    GAUSSIAN = 'gaussian'


class RewardSource(Protocol):
    def state_rewards(self, trajectory: Trajectory) -> np.ndarray:
        """Per-state rewards for s_0..s_T"""


class PolicyModel:
    """
    pi_theta(a|s).  A categorical head outputs softmax probabilities over k actions; a Gaussian head outputs
    (mean, log_std) for a scalar action, with log_std clamped to [LOG_STD_MIN, LOG_STD_MAX].

    Calling the policy samples an action for a rollout.  Gaussian samples are returned unclipped so the recorded
    action matches the one whose log-probability is optimized; the environment clips it when stepping.
    """

    __slots__ = ('net', 'head')

    def __init__(self, net: Network, head: PolicyHead):
        self.head = head = PolicyHead(head)
        if head is PolicyHead.CATEGORICAL:
            if net.output_activation is not OutputActivation.SOFTMAX or net.output_dim < 2:
                raise ValueError(f'A categorical policy requires a softmax head with >= 2 outputs; found {net}')
        elif net.output_dim != 2 or net.output_activation is not OutputActivation.IDENTITY:
            raise ValueError(f'A Gaussian policy requires an Identity head with 2 outputs; found {net}')
        self.net = net

    @classmethod
    def create(cls, env: EnvId, hidden: int, rng: np.random.Generator) -> 'PolicyModel':
        if env.is_continuous:
            return cls(Network.create((env.state_dim, hidden, 2), rng), PolicyHead.GAUSSIAN)
        net = Network.create((env.state_dim, hidden, env.n_actions), rng, OutputActivation.SOFTMAX)
        return cls(net, PolicyHead.CATEGORICAL)

    def __repr__(self) -> str:
        return f'<{self.__class__.__name__}[{self.head.value}, {self.net!r}]>'

    def __eq__(self, other) -> bool:
        if not isinstance(other, PolicyModel):
            return NotImplemented
        return self.head == other.head and self.net == other.net

    __hash__ = None

    def __call__(self, state: np.ndarray, rng: np.random.Generator) -> Action:
        return sample_action(self, state, rng, clip=False)[0]

    def copy(self, net: Optional[Network] = None) -> 'PolicyModel':
        return PolicyModel(self.net.copy() if net is None else net, self.head)

    @property
    def n_actions(self) -> Optional[int]:
        return self.net.output_dim if self.head is PolicyHead.CATEGORICAL else None

    def compatible_with(self, env: EnvId) -> bool:
        if self.net.input_dim != env.state_dim:
            return False
        if env.is_continuous:
            return self.head is PolicyHead.GAUSSIAN
        return self.head is PolicyHead.CATEGORICAL and self.n_actions == env.n_actions

    # region Distribution Parameters

    def probabilities(self, states) -> np.ndarray:
        return self.net.forward(states)

    def gaussian_params(self, states) -> tuple[np.ndarray, np.ndarray]:
        """:return: (mean, clamped log_std), each a scalar for one state or a vector for a batch"""
        out = self.net.forward(states)
        return out[..., 0], np.clip(out[..., 1], LOG_STD_MIN, LOG_STD_MAX)

    def greedy(self, state) -> Action:
        if self.head is PolicyHead.CATEGORICAL:
            return int(np.argmax(self.net.logits(state)))
        return float(np.clip(self.gaussian_params(state)[0], -1.0, 1.0))

    def log_probs(self, states, actions) -> np.ndarray:
        states = np.asarray(states, dtype=np.float64).reshape(-1, self.net.input_dim)
        if self.head is PolicyHead.CATEGORICAL:
            actions = np.asarray(actions, dtype=np.int64).reshape(-1)
            return log_softmax(self.net.logits(states))[np.arange(len(actions)), actions]
        mean, log_std = self.gaussian_params(states)
        z = (np.asarray(actions, dtype=np.float64).reshape(-1) - mean) / np.exp(log_std)
        return -0.5 * z ** 2 - log_std - LOG_SQRT_2PI

    def log_prob_gradient(self, states, actions, weights) -> Gradient:
        """sum_t weights[t] * grad_theta log pi(actions[t] | states[t])"""
        states = np.asarray(states, dtype=np.float64).reshape(-1, self.net.input_dim)
        weights = np.asarray(weights, dtype=np.float64).reshape(-1, 1)
        if len(states) == 0:
            return np.zeros_like(self.net.params)
        logits = self.net.logits(states)
        if self.head is PolicyHead.CATEGORICAL:
            actions = np.asarray(actions, dtype=np.int64).reshape(-1)
            upstream = -softmax(logits)
            upstream[np.arange(len(actions)), actions] += 1.0
        else:
            actions = np.asarray(actions, dtype=np.float64).reshape(-1)
            mean, raw_log_std = logits[:, 0], logits[:, 1]
            log_std = np.clip(raw_log_std, LOG_STD_MIN, LOG_STD_MAX)
            var = np.exp(2 * log_std)
            diff = actions - mean
            d_log_std = (diff ** 2 / var - 1.0) * ((raw_log_std > LOG_STD_MIN) & (raw_log_std < LOG_STD_MAX))
            upstream = np.stack((diff / var, d_log_std), axis=1)
        return self.net.backward(states, weights * upstream, wrt_logits=True)

    # endregion

    # region Serialization

    def to_dict(self) -> dict[str, Any]:
        return self.net.to_dict(head=self.head.value)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> 'PolicyModel':
        return cls(Network.from_dict(data), PolicyHead(data['head']))

    def save(self, path: Union[str, Path]):
        self.net.save(path, head=self.head.value)

    @classmethod
    def load(cls, path: Union[str, Path]) -> 'PolicyModel':
        return cls.from_dict(json.loads(Path(path).read_text('utf-8')))

    # endregion


class GreedyPolicy:
    """Deterministic action source: argmax for categorical policies, the clipped mean for Gaussian ones"""

    __slots__ = ('policy',)

    def __init__(self, policy: PolicyModel):
        self.policy = policy

    def __repr__(self) -> str:
        return f'<{self.__class__.__name__}[{self.policy!r}]>'

    def __call__(self, state: np.ndarray, rng: np.random.Generator = None) -> Action:
        return self.policy.greedy(state)


class CriticModel:
    __slots__ = ('net',)

    def __init__(self, net: Network):
        if net.output_dim != 1 or net.output_activation is not OutputActivation.IDENTITY:
            raise ValueError(f'A critic requires a scalar Identity head; found {net}')
        self.net = net

    @classmethod
    def create(cls, state_dim: int, hidden: int, rng: np.random.Generator) -> 'CriticModel':
        return cls(Network.create((state_dim, hidden, 1), rng))

    def __repr__(self) -> str:
        return f'<{self.__class__.__name__}[{self.net!r}]>'

    def __eq__(self, other) -> bool:
        if not isinstance(other, CriticModel):
            return NotImplemented
        return self.net == other.net

    __hash__ = None

    def copy(self, net: Optional[Network] = None) -> 'CriticModel':
        return CriticModel(self.net.copy() if net is None else net)

    def values(self, states) -> np.ndarray:
        states = np.asarray(states, dtype=np.float64)
        if len(states) == 0:
            return np.zeros(0)
        return self.net.forward(states)[:, 0]


def sample_action(
    policy: PolicyModel, state, rng: np.random.Generator, clip: bool = True
) -> tuple[Action, float]:
    """
    :param policy: The policy to sample from
    :param state: The current state
    :param rng: Source of randomness
    :param clip: Clip Gaussian samples to [-1, 1] (the log-probability always refers to the unclipped sample)
    :return: Tuple of (action, log_prob)
    """
    state = np.asarray(state, dtype=np.float64)
    if state.shape != (policy.net.input_dim,):
        raise DimensionMismatch('policy state', policy.net.input_dim, state.size)
    if policy.head is PolicyHead.CATEGORICAL:
        logits = policy.net.logits(state)
        probs = softmax(logits)
        cdf = np.cumsum(probs)
        action = min(int(np.searchsorted(cdf, rng.random() * cdf[-1], side='right')), len(probs) - 1)
        return action, float(log_softmax(logits)[action])

    mean, log_std = policy.gaussian_params(state)
    noise = rng.standard_normal()
    raw = float(mean + np.exp(log_std) * noise)
    log_prob = float(-0.5 * noise ** 2 - log_std - LOG_SQRT_2PI)
    return (min(1.0, max(-1.0, raw)) if clip else raw), log_prob


def returns_to_go(rewards: np.ndarray, gamma: float) -> np.ndarray:
    """
    :param rewards: Per-state rewards for s_0..s_T
    :param gamma: Discount factor
    :return: R_t = sum_{j=t..T} gamma^(j-t) rewards[j] for t = 0..T-1
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    out = np.empty_like(rewards)
    running = 0.0
    for j in range(len(rewards) - 1, -1, -1):
        running = rewards[j] + gamma * running
        out[j] = running
    return out[:-1]


def advantage(
    reward: RewardSource, critic: CriticModel, trajectory: Trajectory, gamma: float, normalize: bool = False
) -> np.ndarray:
    """
    A_t = sum_{j=t..T} gamma^(j-t) g(s_j) - V(s_t) for t = 0..T-1, using the given reward source.

    :param normalize: Standardize the advantages to zero mean / unit variance (off by default)
    """
    if not trajectory.has_actions:
        raise MissingActions(f'Advantages require actions; {trajectory} has none')
    if not 0 < gamma <= 1:
        raise ValueError(f'Invalid {gamma=} - must be in (0, 1]')
    targets = returns_to_go(reward.state_rewards(trajectory), gamma)
    adv = targets - critic.values(trajectory.states[:-1])
    if normalize and len(adv) > 1:
        adv = (adv - adv.mean()) / (adv.std() + 1e-8)
    return adv


def _check_advantages(trajectory: Trajectory, adv: np.ndarray):
    if not trajectory.has_actions:
        raise MissingActions(f'A policy update requires actions; {trajectory} has none')
    if len(adv) != trajectory.length:
        raise DimensionMismatch('advantages', trajectory.length, len(adv))


def policy_objective(policy: PolicyModel, trajectory: Trajectory, adv: np.ndarray) -> float:
    """sum_t log pi(a_t|s_t) * A_t, with the advantages held constant"""
    _check_advantages(trajectory, adv)
    if trajectory.length == 0:
        return 0.0
    return float(policy.log_probs(trajectory.states[:-1], trajectory.actions) @ adv)


def policy_gradient(policy: PolicyModel, trajectory: Trajectory, adv: np.ndarray) -> Gradient:
    _check_advantages(trajectory, adv)
    return policy.log_prob_gradient(trajectory.states[:-1], trajectory.actions, adv)


def policy_step(policy: PolicyModel, trajectory: Trajectory, adv: np.ndarray, lr: float) -> PolicyModel:
    """theta <- theta + lr * sum_t grad log pi(a_t|s_t) * A_t"""
    grad = policy_gradient(policy, trajectory, adv)
    return policy.copy(apply_gradient(policy.net, grad, lr, Direction.ASCENT))


def critic_loss(critic: CriticModel, trajectory: Trajectory, targets: np.ndarray) -> float:
    return float(((critic.values(trajectory.states[:-1]) - targets) ** 2).sum())


def critic_gradient(critic: CriticModel, trajectory: Trajectory, targets: np.ndarray) -> Gradient:
    states = trajectory.states[:-1]
    if len(states) == 0:
        return np.zeros_like(critic.net.params)
    return critic.net.backward(states, (2 * (critic.values(states) - targets)).reshape(-1, 1))


def critic_step(
    critic: CriticModel, trajectory: Trajectory, reward: RewardSource, gamma: float, lr: float
) -> CriticModel:
    """One descent step on sum_t (V(s_t) - R_t)^2 with Monte-Carlo targets under ``reward``"""
    targets = returns_to_go(reward.state_rewards(trajectory), gamma)
    return critic.copy(apply_gradient(critic.net, critic_gradient(critic, trajectory, targets), lr))


class ActorCriticLearner:
    """
    Online advantage actor-critic: one policy update and one critic update per episode.  The reward source is
    swappable so the same machinery serves the learned reward and the env-reward baseline.
    """

    def __init__(
        self,
        policy: PolicyModel,
        critic: CriticModel,
        gamma: float,
        policy_optimizer: Optimizer,
        critic_optimizer: Optional[Optimizer] = None,
        normalize_advantages: bool = False,
    ):
        self.policy = policy
        self.critic = critic
        self.gamma = gamma
        self.policy_optimizer = policy_optimizer
        self.critic_optimizer = critic_optimizer or GradientStep(policy_optimizer.lr)
        self.normalize_advantages = normalize_advantages

    def __repr__(self) -> str:
        return f'<{self.__class__.__name__}[{self.policy!r}, gamma={self.gamma}]>'

    def update(self, trajectory: Trajectory, reward: RewardSource) -> np.ndarray:
        """
        :return: The advantages used for the policy update
        """
        adv = advantage(reward, self.critic, trajectory, self.gamma, self.normalize_advantages)
        if self.normalize_advantages:
            targets = returns_to_go(reward.state_rewards(trajectory), self.gamma)
        else:
            targets = adv + self.critic.values(trajectory.states[:-1])
        theta_grad = policy_gradient(self.policy, trajectory, adv)
        critic_grad = critic_gradient(self.critic, trajectory, targets)
        self.policy = self.policy.copy(self.policy_optimizer.step(self.policy.net, theta_grad, Direction.ASCENT))
        self.critic = self.critic.copy(self.critic_optimizer.step(self.critic.net, critic_grad, Direction.DESCENT))
        return adv
