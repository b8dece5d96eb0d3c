"""
Full-length training runs on the shipped configs.  These take a long time, so they only run with ``pytest -m slow``.
"""

import pytest

from rpcl.actorcritic import GreedyPolicy
from rpcl.config import load_config, default_config_path
from rpcl.core import FibSchedule, RpclTrainer, train
from rpcl.envsim import EnvId, FIREWALL
from rpcl.evalharness import paired_eval, ac_env_reward_train, ablate_discount_sets, reward_surface
from rpcl.experts import load_expert
from rpcl.rewardmodel import DiscountSet

pytestmark = pytest.mark.slow
SEEDS = (0, 1, 2)


def _best_of_seeds(env: EnvId, better):
    config, run = load_config(default_config_path(env))
    expert = load_expert(env, run.expert)
    best = None
    for seed in SEEDS:
        before = FIREWALL.count
        result = train(config.replace(seed=seed), env, expert)
        assert FIREWALL.count == before
        contenders = [('rpcl', GreedyPolicy(result.policy)), ('expert', expert.action_source())]
        stats = paired_eval(contenders, env, run.trials, seed=seed).stats
        if best is None or better(stats['rpcl'].mean_steps, best[0]['rpcl'].mean_steps):
            best = (stats, result)
    return best


def test_demo_budget():
    config = load_config(default_config_path('cartpole'))[0].replace(max_steps=2, stop_threshold=None)
    trainer = RpclTrainer(config, EnvId.CARTPOLE, load_expert(EnvId.CARTPOLE))
    result = trainer.train()
    assert len(result.log) == 5000
    assert result.log.phi_episodes == FibSchedule(5000).trigger_episodes(5000)
    assert result.log.demos_total == 20


def test_cartpole():
    stats, result = _best_of_seeds(EnvId.CARTPOLE, lambda a, b: a > b)
    assert 400 <= stats['expert'].mean_steps <= 1000
    assert stats['rpcl'].mean_steps >= 950
    assert stats['rpcl'].mean_steps >= stats['expert'].mean_steps
    grid = reward_surface(result.reward, EnvId.CARTPOLE, 0, 2)
    assert grid.coefficient_of_variation < 0.5


def test_mountaincar():
    stats, result = _best_of_seeds(EnvId.MOUNTAIN_CAR, lambda a, b: a < b)
    assert stats['rpcl'].mean_steps <= 180
    assert stats['rpcl'].mean_steps < stats['expert'].mean_steps
    grid = reward_surface(result.reward, EnvId.MOUNTAIN_CAR, 0, 1)
    assert grid.mean_where(0, lambda x: x > 0.45) > grid.mean_where(0, lambda x: x < 0)


def test_mountaincar_continuous():
    stats, _ = _best_of_seeds(EnvId.MOUNTAIN_CAR_CONTINUOUS, lambda a, b: a < b)
    assert stats['rpcl'].mean_steps <= 350
    assert stats['rpcl'].mean_steps < stats['expert'].mean_steps


def test_ablation_runs_every_set():
    config, run = load_config(default_config_path('mountaincar'))
    sets = [DiscountSet.parse(value) for value in ('0.9', '0.995', '0.9,0.995', '0.9,0.99,0.995')]
    rows = ablate_discount_sets(EnvId.MOUNTAIN_CAR, sets, config, load_expert(EnvId.MOUNTAIN_CAR), trials=100)
    assert [row.gammas for row in rows] == sets
    assert all(row.as_dict()['result'] for row in rows)


def test_env_reward_baseline():
    config = load_config(default_config_path('cartpole'))[0]
    policy = ac_env_reward_train(EnvId.CARTPOLE, config)
    stats = paired_eval([('ac', GreedyPolicy(policy))], EnvId.CARTPOLE, 1000).stats['ac']
    assert stats.mean_steps >= 800
