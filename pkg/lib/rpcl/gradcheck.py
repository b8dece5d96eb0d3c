"""
Finite-difference checks for every analytic gradient used in training: the reward model loss, categorical and
Gaussian policy log-likelihoods, and the critic's squared loss.

Each suite draws seeded random instances with short trajectories and states in [-1, 1].  An instance is redrawn when
any hidden ReLU pre-activation lies close enough to 0 for a parameter perturbation to cross the kink.

:author: Doug Skrypa
"""

import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .actorcritic import PolicyModel, CriticModel, policy_objective, policy_gradient, critic_loss, critic_gradient
from .constants import LOG_STD_MIN, LOG_STD_MAX
from .envsim import EnvId, Trajectory
from .net import central_differences, max_relative_error
from .rewardmodel import DiscountSet, RewardModel, rpcl_loss, phi_gradient
from .utils import make_rng

__all__ = [
    'SuiteResult',
    'reward_loss_suite',
    'categorical_logprob_suite',
    'gaussian_logprob_suite',
    'critic_loss_suite',
    'SUITES',
    'run_all',
]
log = logging.getLogger(__name__)

TOLERANCE = 1e-4
MAX_LENGTH = 5
MAX_REDRAWS = 1000


@dataclass(frozen=True)
class SuiteResult:
    name: str
    instances: int
    max_error: float
    tolerance: float = TOLERANCE

    @property
    def passed(self) -> bool:
        return self.max_error < self.tolerance

    def as_dict(self):
        return {
            'suite': self.name,
            'instances': self.instances,
            'max_error': self.max_error,
            'tolerance': self.tolerance,
            'result': 'pass' if self.passed else 'FAIL',
        }


# region Instance Helpers


def _trajectory(env: EnvId, rng: np.random.Generator, actions: bool = False) -> Trajectory:
    length = int(rng.integers(1, MAX_LENGTH + 1))
    states = rng.uniform(-1, 1, size=(length + 1, env.state_dim))
    if not actions:
        return Trajectory(env, states)
    if env.is_continuous:
        return Trajectory(env, states, rng.uniform(-1, 1, size=length))
    return Trajectory(env, states, rng.integers(0, env.n_actions, size=length))


def _redraw_until(build: Callable[[np.random.Generator], tuple], is_smooth: Callable[..., bool], rng):
    for _ in range(MAX_REDRAWS):
        instance = build(rng)
        if is_smooth(*instance):
            return instance
    raise RuntimeError(f'Unable to draw an instance away from ReLU kinks after {MAX_REDRAWS} attempts')


def _check(name: str, instances: int, seed: int, run_one: Callable[[np.random.Generator], float]) -> SuiteResult:
    worst = 0.0
    for i in range(instances):
        worst = max(worst, run_one(make_rng(seed, i)))
    result = SuiteResult(name, instances, worst)
    log.debug(f'Gradient check {name}: max relative error={worst:.3e} over {instances} instances')
    return result


# endregion


def reward_loss_suite(instances: int = 100, seed: int = 1, eps: float = 1e-4) -> SuiteResult:
    """The assembled reward loss; it is linear per parameter between kinks, so a wider eps only reduces roundoff"""
    env = EnvId.CARTPOLE

    def build(rng):
        model = RewardModel.create(env.state_dim, 32, rng)
        sampled = [_trajectory(env, rng) for _ in range(int(rng.integers(1, 4)))]
        return model, sampled, _trajectory(env, rng), _trajectory(env, rng)

    def is_smooth(model, sampled, tau_plus, tau_star):
        states = np.concatenate([t.states for t in (*sampled, tau_plus, tau_star)])
        return model.net.kink_distance(states) > 10 * eps

    def run_one(rng) -> float:
        model, sampled, tau_plus, tau_star = _redraw_until(build, is_smooth, rng)
        gamma = float(rng.uniform(0.8, 1.0))
        gammas = DiscountSet(tuple(sorted(set(rng.uniform(0.8, 1.0, size=2)))))
        rho = float(rng.uniform(0, 0.99))
        kwargs = {'stereo_return': bool(rng.integers(2)), 'weight_decay': float(rng.choice([0.0, 0.01]))}
        args = (sampled, tau_plus, tau_star, gamma, gammas, rho)
        analytic = phi_gradient(model, *args, **kwargs)

        def loss_at(params: np.ndarray) -> float:
            return rpcl_loss(RewardModel(model.net.copy(params.copy())), *args, **kwargs)

        return max_relative_error(analytic, central_differences(loss_at, model.net.params, eps))

    return _check('reward', instances, seed, run_one)


def _policy_suite(name: str, envs: tuple[EnvId, ...], instances: int, seed: int, eps: float) -> SuiteResult:
    def build(rng):
        env = envs[int(rng.integers(len(envs)))]
        policy = PolicyModel.create(env, 32, rng)
        return policy, _trajectory(env, rng, actions=True)

    def is_smooth(policy: PolicyModel, trajectory: Trajectory):
        states = trajectory.states[:-1]
        if policy.net.kink_distance(states) <= 10 * eps:
            return False
        if policy.net.output_dim == 2 and not trajectory.env.n_actions:
            raw_log_std = policy.net.logits(states)[:, 1]
            return np.abs(np.concatenate((raw_log_std - LOG_STD_MIN, raw_log_std - LOG_STD_MAX))).min() > 1e-3
        return True

    def run_one(rng) -> float:
        policy, trajectory = _redraw_until(build, is_smooth, rng)
        adv = rng.normal(size=trajectory.length)
        analytic = policy_gradient(policy, trajectory, adv)

        def objective_at(params: np.ndarray) -> float:
            return policy_objective(policy.copy(policy.net.copy(params.copy())), trajectory, adv)

        return max_relative_error(analytic, central_differences(objective_at, policy.net.params, eps))

    return _check(name, instances, seed, run_one)


def categorical_logprob_suite(instances: int = 100, seed: int = 2, eps: float = 1e-5) -> SuiteResult:
    return _policy_suite('categorical', (EnvId.CARTPOLE, EnvId.MOUNTAIN_CAR), instances, seed, eps)


def gaussian_logprob_suite(instances: int = 100, seed: int = 3, eps: float = 1e-5) -> SuiteResult:
    return _policy_suite('gaussian', (EnvId.MOUNTAIN_CAR_CONTINUOUS,), instances, seed, eps)


def critic_loss_suite(instances: int = 100, seed: int = 4, eps: float = 1e-4) -> SuiteResult:
    """Squared loss; quadratic per parameter between kinks"""

    def build(rng):
        env = (EnvId.CARTPOLE, EnvId.MOUNTAIN_CAR)[int(rng.integers(2))]
        critic = CriticModel.create(env.state_dim, 32, rng)
        return critic, _trajectory(env, rng)

    def is_smooth(critic: CriticModel, trajectory: Trajectory):
        return critic.net.kink_distance(trajectory.states[:-1]) > 10 * eps

    def run_one(rng) -> float:
        critic, trajectory = _redraw_until(build, is_smooth, rng)
        targets = rng.normal(size=trajectory.length)
        analytic = critic_gradient(critic, trajectory, targets)

        def loss_at(params: np.ndarray) -> float:
            return critic_loss(critic.copy(critic.net.copy(params.copy())), trajectory, targets)

        return max_relative_error(analytic, central_differences(loss_at, critic.net.params, eps))

    return _check('critic', instances, seed, run_one)


SUITES: dict[str, Callable[..., SuiteResult]] = {
    'reward': reward_loss_suite,
    'categorical': categorical_logprob_suite,
    'gaussian': gaussian_logprob_suite,
    'critic': critic_loss_suite,
}


def run_all(instances: int = 100) -> list[SuiteResult]:
    return [suite(instances) for suite in SUITES.values()]
