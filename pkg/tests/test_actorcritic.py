import math

import numpy as np
import pytest

from rpcl.actorcritic import PolicyModel, PolicyHead, CriticModel, GreedyPolicy, ActorCriticLearner
from rpcl.actorcritic import sample_action, returns_to_go, advantage, policy_step, policy_gradient, critic_step
from rpcl.envsim import EnvId, Trajectory, FIREWALL, rollout
from rpcl.exceptions import DimensionMismatch, MissingActions
from rpcl.gradcheck import categorical_logprob_suite, gaussian_logprob_suite, critic_loss_suite
from rpcl.net import Network, OutputActivation, GradientStep
from rpcl.rewardmodel import RewardModel
from rpcl.utils import make_rng

CP = EnvId.CARTPOLE


def categorical(bias, state_dim: int = 4) -> PolicyModel:
    params = np.zeros(state_dim * len(bias) + len(bias))
    params[-len(bias):] = bias
    return PolicyModel(Network((state_dim, len(bias)), params, OutputActivation.SOFTMAX), PolicyHead.CATEGORICAL)


def gaussian(mean: float, log_std: float) -> PolicyModel:
    return PolicyModel(Network((2, 2), np.array([0, 0, 0, 0, mean, log_std], dtype=float)), PolicyHead.GAUSSIAN)


def random_episode(rng, length: int = 10) -> Trajectory:
    states = rng.uniform(-1, 1, size=(length + 1, 4))
    return Trajectory(CP, states, rng.integers(0, 2, size=length))


# region Sampling


def test_sampling_confident_logits():
    policy = categorical([10.0, -10.0])
    rng = make_rng(0)
    actions = [sample_action(policy, np.zeros(4), rng)[0] for _ in range(10_000)]
    assert actions.count(0) / len(actions) > 0.999


def test_uniform_log_prob():
    action, log_prob = sample_action(categorical([0.0, 0.0]), np.zeros(4), make_rng(0))
    assert action in (0, 1)
    assert log_prob == pytest.approx(math.log(0.5))


def test_gaussian_tight_variance():
    policy = gaussian(0.0, -5.0)
    rng = make_rng(1)
    actions = np.array([sample_action(policy, np.zeros(2), rng)[0] for _ in range(10_000)])
    assert np.mean(np.abs(actions) <= 0.07) > 0.999


def test_gaussian_clipping_and_log_prob():
    policy = gaussian(5.0, 0.0)
    action, log_prob = sample_action(policy, np.zeros(2), make_rng(2))
    assert action == 1.0
    raw, raw_log_prob = sample_action(policy, np.zeros(2), make_rng(2), clip=False)
    assert raw > 1.0
    assert raw_log_prob == log_prob == pytest.approx(policy.log_probs(np.zeros((1, 2)), [raw])[0])


def test_sample_action_dimension():
    with pytest.raises(DimensionMismatch):
        sample_action(categorical([0.0, 0.0]), np.zeros(2), make_rng(0))


def test_gaussian_log_prob_closed_form():
    rng = make_rng(3)
    policy = PolicyModel.create(EnvId.MOUNTAIN_CAR_CONTINUOUS, 16, rng)
    states = rng.uniform(-1, 1, size=(200, 2))
    actions = rng.uniform(-2, 2, size=200)
    out = policy.net.forward(states)
    mean, std = out[:, 0], np.exp(np.clip(out[:, 1], -5, 2))
    density = np.exp(-0.5 * ((actions - mean) / std) ** 2) / (std * math.sqrt(2 * math.pi))
    assert np.abs(policy.log_probs(states, actions) - np.log(density)).max() < 1e-10


def test_categorical_probabilities_sum_to_one():
    rng = make_rng(4)
    policy = PolicyModel.create(EnvId.MOUNTAIN_CAR, 128, rng)
    probs = policy.probabilities(rng.uniform(-1, 1, size=(50, 2)))
    assert np.abs(probs.sum(axis=1) - 1).max() < 1e-9


def test_policy_shapes():
    rng = make_rng(5)
    assert PolicyModel.create(CP, 32, rng).net.layer_dims == (4, 32, 2)
    assert PolicyModel.create(EnvId.MOUNTAIN_CAR, 128, rng).net.layer_dims == (2, 128, 3)
    continuous = PolicyModel.create(EnvId.MOUNTAIN_CAR_CONTINUOUS, 128, rng)
    assert continuous.net.layer_dims == (2, 128, 2)
    assert continuous.head is PolicyHead.GAUSSIAN
    assert continuous.compatible_with(EnvId.MOUNTAIN_CAR_CONTINUOUS)
    assert not continuous.compatible_with(EnvId.MOUNTAIN_CAR)


def test_greedy():
    assert categorical([0.0, 3.0]).greedy(np.zeros(4)) == 1
    assert GreedyPolicy(gaussian(0.4, 0.0))(np.zeros(2)) == pytest.approx(0.4)
    assert gaussian(-3.0, 0.0).greedy(np.zeros(2)) == -1.0


# endregion


# region Advantages


def test_returns_to_go():
    assert returns_to_go(np.ones(4), 0.5).tolist() == [1.875, 1.75, 1.5]


def test_zero_models_give_zero_advantages():
    rng = make_rng(6)
    zero_reward = RewardModel(Network((4, 32, 1)))
    zero_critic = CriticModel(Network((4, 32, 1)))
    assert not advantage(zero_reward, zero_critic, random_episode(rng), 0.99).any()


def test_advantage_matches_double_loop():
    rng = make_rng(7)
    reward = RewardModel.create(4, 32, rng)
    critic = CriticModel.create(4, 32, rng)
    trajectory = random_episode(rng, 12)
    gamma = 0.97
    g = reward.rewards(trajectory.states)
    values = critic.values(trajectory.states)
    expected = [
        sum(gamma ** (j - t) * g[j] for j in range(t, trajectory.length + 1)) - values[t]
        for t in range(trajectory.length)
    ]
    assert np.abs(advantage(reward, critic, trajectory, gamma) - expected).max() < 1e-10


def test_critic_equal_to_returns_gives_zero_advantages():
    # constant reward c with gamma=1: R_t = c * (T + 1 - t); a critic g(s) = s[0] with s_t[0] = R_t reproduces it
    params = np.zeros(5)
    params[0] = 1.0
    critic = CriticModel(Network((4, 1), params))
    reward = RewardModel(Network((4, 1), np.array([0, 0, 0, 0, 2.0])))
    length = 5
    states = np.zeros((length + 1, 4))
    states[:, 0] = [2.0 * (length + 1 - t) for t in range(length + 1)]
    trajectory = Trajectory(CP, states, np.zeros(length, dtype=int))
    assert np.abs(advantage(reward, critic, trajectory, 1.0)).max() < 1e-12


def test_advantage_requires_actions():
    rng = make_rng(8)
    trajectory = random_episode(rng).without_actions()
    with pytest.raises(MissingActions):
        advantage(RewardModel.create(4, 8, rng), CriticModel.create(4, 8, rng), trajectory, 0.9)


def test_advantage_does_not_read_env_reward():
    rng = make_rng(9)
    trajectory = rollout(CP, PolicyModel.create(CP, 32, rng), rng)
    before = FIREWALL.count
    advantage(RewardModel.create(4, 32, rng), CriticModel.create(4, 32, rng), trajectory, 0.995)
    assert FIREWALL.count == before


# endregion


# region Updates


def test_policy_step_zero_advantages():
    rng = make_rng(10)
    policy = PolicyModel.create(CP, 32, rng)
    trajectory = random_episode(rng)
    assert policy_step(policy, trajectory, np.zeros(trajectory.length), 0.01) == policy


def test_policy_step_zero_lr():
    rng = make_rng(11)
    policy = PolicyModel.create(CP, 32, rng)
    trajectory = random_episode(rng)
    assert policy_step(policy, trajectory, rng.normal(size=trajectory.length), 0.0) == policy


def test_policy_step_raises_log_likelihood_of_positive_actions():
    policy = categorical([0.0, 0.0])
    trajectory = Trajectory(CP, np.zeros((2, 4)), [1])
    updated = policy_step(policy, trajectory, np.ones(1), 0.5)
    assert updated.probabilities(np.zeros(4))[1] > 0.5


def test_policy_step_advantage_length():
    rng = make_rng(12)
    trajectory = random_episode(rng)
    with pytest.raises(DimensionMismatch):
        policy_step(PolicyModel.create(CP, 8, rng), trajectory, np.zeros(3), 0.1)


def test_constant_advantage_update_is_unbiased():
    rng = make_rng(13)
    policy = PolicyModel.create(CP, 32, rng)
    grads = []
    for _ in range(10_000):
        state = rng.uniform(-0.05, 0.05, size=4)
        action = sample_action(policy, state, rng)[0]
        grads.append(policy.log_prob_gradient(state[None, :], [action], [2.0]))
    grads = np.array(grads)
    mean = grads.mean(axis=0)
    standard_error = grads.std(axis=0) / np.sqrt(len(grads))
    assert np.linalg.norm(mean) < 10 * np.linalg.norm(standard_error)


def test_critic_step_at_targets_is_unchanged():
    rng = make_rng(14)
    critic = CriticModel(Network((4, 16, 1)))
    zero_reward = RewardModel(Network((4, 16, 1)))
    assert critic_step(critic, random_episode(rng), zero_reward, 0.99, 0.1) == critic


def test_critic_step_zero_lr():
    rng = make_rng(15)
    critic = CriticModel.create(4, 16, rng)
    assert critic_step(critic, random_episode(rng), RewardModel.create(4, 16, rng), 0.99, 0.0) == critic


def test_critic_step_reduces_loss():
    rng = make_rng(16)
    critic = CriticModel.create(4, 16, rng)
    reward = RewardModel.create(4, 16, rng)
    trajectory = random_episode(rng)
    targets = returns_to_go(reward.state_rewards(trajectory), 0.9)

    def loss(model: CriticModel) -> float:
        return float(((model.values(trajectory.states[:-1]) - targets) ** 2).sum())

    assert loss(critic_step(critic, trajectory, reward, 0.9, 1e-3)) < loss(critic)


def test_learner_update():
    rng = make_rng(17)
    policy = PolicyModel.create(CP, 32, rng)
    critic = CriticModel.create(4, 32, rng)
    learner = ActorCriticLearner(policy, critic, 0.99, GradientStep(0.01), GradientStep(0.01))
    trajectory = rollout(CP, policy, rng)
    reward = RewardModel.create(4, 32, rng)
    adv = learner.update(trajectory, reward)
    assert adv == pytest.approx(advantage(reward, critic, trajectory, 0.99))
    expected = policy.net.params + 0.01 * policy_gradient(policy, trajectory, adv)
    assert learner.policy.net.params == pytest.approx(expected)
    assert learner.critic != critic


@pytest.mark.parametrize('suite', [categorical_logprob_suite, gaussian_logprob_suite, critic_loss_suite])
def test_gradient_suites(suite):
    result = suite(instances=20)
    assert result.passed, result.as_dict()


# endregion


def test_policy_checkpoint_round_trip(tmp_path):
    policy = PolicyModel.create(EnvId.MOUNTAIN_CAR_CONTINUOUS, 16, make_rng(18))
    path = tmp_path.joinpath('policy.json')
    policy.save(path)
    assert PolicyModel.load(path) == policy
