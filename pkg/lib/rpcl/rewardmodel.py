"""
Learned state rewards g(s|phi), discounted returns, stereo utility, and the reward-model gradient.

Returns are indexed from the first post-action state: ``G(tau, gamma) = sum_{j=1..T} gamma^(j-1) g(s_j)``, so the
initial state never contributes to G.

:author: Doug Skrypa
"""

import logging
from dataclasses import dataclass
from typing import Union, Sequence, Iterator

import numpy as np

from .envsim import Trajectory, env_rewards
from .exceptions import DimensionMismatch, EmptyTrajectoryError, EnvMismatchError, EmptyInventoryError
from .net import Network, Gradient, OutputActivation

__all__ = [
    'DiscountSet',
    'RewardModel',
    'EnvReward',
    'immediate_reward',
    'discounted_return',
    'stereo_utility',
    'utility_margin',
    'phi_gradient',
    'rpcl_loss',
    'discount_weights',
]
log = logging.getLogger(__name__)


@dataclass(frozen=True)
class DiscountSet:
    gammas: tuple[float, ...]

    def __post_init__(self):
        gammas = tuple(float(g) for g in self.gammas)
        object.__setattr__(self, 'gammas', gammas)
        if not gammas:
            raise ValueError('A discount set requires at least one discount factor')
        if bad := [g for g in gammas if not 0 < g <= 1]:
            raise ValueError(f'Invalid discount factors={bad} - each must be in (0, 1]')
        if len(set(gammas)) != len(gammas):
            raise ValueError(f'Duplicate discount factors are not allowed: {gammas}')

    @classmethod
    def parse(cls, value: Union[str, Sequence[float], 'DiscountSet']) -> 'DiscountSet':
        if isinstance(value, DiscountSet):
            return value
        if isinstance(value, str):
            value = [part for part in value.replace('[', '').replace(']', '').split(',') if part.strip()]
        return cls(tuple(float(v) for v in value))

    def __str__(self) -> str:
        return ','.join(map(repr, self.gammas))

    def __iter__(self) -> Iterator[float]:
        return iter(self.gammas)

    def __len__(self) -> int:
        return len(self.gammas)


def discount_weights(length: int, gamma: Union[float, DiscountSet]) -> np.ndarray:
    """Per-step weights ``gamma^(j-1)`` for j = 1..length, averaged over the set when given a DiscountSet"""
    exponents = np.arange(length, dtype=np.float64)
    if isinstance(gamma, DiscountSet):
        return np.mean([g ** exponents for g in gamma], axis=0) if length else np.zeros(0)
    return gamma ** exponents


class RewardModel:
    __slots__ = ('net',)

    def __init__(self, net: Network):
        if net.output_dim != 1 or net.output_activation is not OutputActivation.IDENTITY:
            raise ValueError(f'A reward model requires a scalar Identity head; found {net}')
        self.net = net

    @classmethod
    def create(cls, state_dim: int, hidden: int, rng: np.random.Generator) -> 'RewardModel':
        return cls(Network.create((state_dim, hidden, 1), rng))

    def __repr__(self) -> str:
        return f'<{self.__class__.__name__}[{self.net!r}]>'

    def __eq__(self, other) -> bool:
        if not isinstance(other, RewardModel):
            return NotImplemented
        return self.net == other.net

    __hash__ = None

    def copy(self) -> 'RewardModel':
        return RewardModel(self.net.copy())

    def rewards(self, states: np.ndarray) -> np.ndarray:
        states = np.asarray(states, dtype=np.float64)
        if states.shape[0] == 0:
            return np.zeros(0)
        return self.net.forward(states)[:, 0]

    def state_rewards(self, trajectory: Trajectory) -> np.ndarray:
        """g(s_j) for every state s_0..s_T"""
        return self.rewards(trajectory.states)

    def weighted_gradient(self, states: np.ndarray, weights: np.ndarray) -> Gradient:
        """sum_j weights[j] * grad_phi g(states[j])"""
        if len(states) == 0:
            return np.zeros_like(self.net.params)
        return self.net.backward(states, np.asarray(weights, dtype=np.float64).reshape(-1, 1))


class EnvReward:
    """
    Stand-in for a :class:`RewardModel` that reads the hidden environment reward.  Only the env-reward baselines and
    expert pretraining use it; every read is counted by the reward firewall.
    """

    def __repr__(self) -> str:
        return f'<{self.__class__.__name__}>'

    def state_rewards(self, trajectory: Trajectory) -> np.ndarray:
        """The transition reward r_j is attributed to the state s_j it leads to; s_0 receives 0"""
        return np.concatenate(([0.0], env_rewards(trajectory)))


def _require_transitions(trajectory: Trajectory):
    if trajectory.length == 0:
        raise EmptyTrajectoryError(f'{trajectory} has no transitions')


def immediate_reward(model: RewardModel, state) -> float:
    state = np.asarray(state, dtype=np.float64)
    if state.shape != (model.net.input_dim,):
        raise DimensionMismatch('reward model state', model.net.input_dim, state.size)
    return float(model.net.forward(state)[0])


def discounted_return(model: RewardModel, trajectory: Trajectory, gamma: float) -> float:
    if not 0 < gamma <= 1:
        raise ValueError(f'Invalid {gamma=} - must be in (0, 1]')
    _require_transitions(trajectory)
    rewards = model.rewards(trajectory.states[1:])
    return float(discount_weights(trajectory.length, gamma) @ rewards)


def stereo_utility(model: RewardModel, trajectory: Trajectory, gammas: DiscountSet) -> float:
    returns = [discounted_return(model, trajectory, gamma) for gamma in gammas]
    return sum(returns) / len(returns)


def utility_margin(model: RewardModel, tau_plus: Trajectory, tau_star: Trajectory, gammas: DiscountSet) -> float:
    """D = U(tau_plus) - U(tau_star); positive when the learner's trajectory is worth more than the demonstration"""
    _require_same_env(tau_plus, tau_star)
    return stereo_utility(model, tau_plus, gammas) - stereo_utility(model, tau_star, gammas)


def _require_same_env(tau_plus: Trajectory, tau_star: Trajectory):
    if tau_plus.env != tau_star.env:
        raise EnvMismatchError(f'Cannot compare a {tau_plus.env.value} trajectory with a {tau_star.env.value} one')


def _check_phi_args(sampled: Sequence[Trajectory], rho: float):
    if not sampled:
        raise EmptyInventoryError('At least one sampled trajectory is required')
    if not 0 <= rho < 1:
        raise ValueError(f'Invalid {rho=} - must be in [0, 1)')


def _return_grad(model: RewardModel, trajectory: Trajectory, gamma: Union[float, DiscountSet]) -> Gradient:
    _require_transitions(trajectory)
    return model.weighted_gradient(trajectory.states[1:], discount_weights(trajectory.length, gamma))


def phi_gradient(
    model: RewardModel,
    sampled: Sequence[Trajectory],
    tau_plus: Trajectory,
    tau_star: Trajectory,
    gamma: float,
    gammas: DiscountSet,
    rho: float,
    *,
    stereo_return: bool = False,
    weight_decay: float = 0.0,
) -> Gradient:
    """
    Gradient of :func:`rpcl_loss` with respect to the reward model's parameters::

        -((1 - rho) / n) * sum_k grad G(tau_k, gamma)  +  rho * grad D

    where ``grad D`` averages, over the discount set, the difference between the discounted state-gradient sums of
    ``tau_plus`` and ``tau_star``.

    :param model: The reward model being updated
    :param sampled: The n trajectories drawn from the sample inventory
    :param tau_plus: A fresh trajectory from the frozen learner policy
    :param tau_star: The demonstration
    :param gamma: Discount factor of the return-maximization term
    :param gammas: The discount set used for stereo utilities
    :param rho: Weight of the margin term, in [0, 1)
    :param stereo_return: Use the stereo utility instead of G in the return-maximization term
    :param weight_decay: Optional L2 coefficient (adds ``weight_decay * phi``)
    """
    _check_phi_args(sampled, rho)
    _require_same_env(tau_plus, tau_star)
    return_discount = gammas if stereo_return else gamma
    return_grad = sum(_return_grad(model, tau, return_discount) for tau in sampled)
    margin_grad = _return_grad(model, tau_plus, gammas) - _return_grad(model, tau_star, gammas)
    grad = -(1 - rho) / len(sampled) * return_grad + rho * margin_grad
    if weight_decay:
        grad = grad + weight_decay * model.net.params
    return grad


def rpcl_loss(
    model: RewardModel,
    sampled: Sequence[Trajectory],
    tau_plus: Trajectory,
    tau_star: Trajectory,
    gamma: float,
    gammas: DiscountSet,
    rho: float,
    *,
    stereo_return: bool = False,
    weight_decay: float = 0.0,
) -> float:
    """-((1 - rho) / n) * sum_k G(tau_k, gamma) + rho * D  (+ 0.5 * weight_decay * ||phi||^2)"""
    _check_phi_args(sampled, rho)
    if stereo_return:
        returns = sum(stereo_utility(model, tau, gammas) for tau in sampled)
    else:
        returns = sum(discounted_return(model, tau, gamma) for tau in sampled)
    loss = -(1 - rho) / len(sampled) * returns + rho * utility_margin(model, tau_plus, tau_star, gammas)
    if weight_decay:
        loss += 0.5 * weight_decay * float(model.net.params @ model.net.params)
    return loss

