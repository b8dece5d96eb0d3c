import json

import numpy as np
import pytest

from rpcl.actorcritic import PolicyModel
from rpcl.cli import run, parser, _env_verbosity
from rpcl.envsim import EnvId
from rpcl.experts import load_demos
from rpcl.net import Network
from rpcl.utils import make_rng


def test_usage_errors():
    assert run([]) == 1
    assert run(['train', '--bogus']) == 1
    assert run(['explode']) == 1


def test_missing_env():
    assert run(['train', '-o', 'unused']) == 1


def test_invalid_env():
    assert run(['record-demos', '-e', 'pendulum', '-o', 'unused.jsonl']) == 1


def test_version(capsys):
    assert run(['--version']) == 0
    assert capsys.readouterr().out.startswith('rpcl ')


def test_common_args_on_every_command():
    for name, sub_parser in parser()._get_subparser('command').choices.items():
        dests = {action.dest for action in sub_parser._actions}
        assert {'config', 'env', 'out', 'seed', 'workers', 'format', 'verbose'} <= dests, name


def test_gradcheck(capsys):
    assert run(['gradcheck', '-n', '3', '--suite', 'critic', 'reward', '-f', 'json']) == 0
    results = json.loads(capsys.readouterr().out)
    assert [r['suite'] for r in results] == ['critic', 'reward']
    assert {r['result'] for r in results} == {'pass'}


def test_record_demos_and_bc_train(tmp_path, capsys):
    demo_path = tmp_path.joinpath('demos.jsonl')
    assert run(['record-demos', '-e', 'cartpole', '-n', '2', '-o', demo_path.as_posix()]) == 0
    demos = load_demos(demo_path)
    assert len(demos) == 2
    assert {demo.source for demo in demos} == {'lqr'}

    policy_path = tmp_path.joinpath('bc.json')
    args = ['bc-train', demo_path.as_posix(), '-e', 'cartpole', '--epochs', '2', '-o', policy_path.as_posix()]
    assert run([*args, '-f', 'json']) == 0
    summary = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert summary['epochs'] == 2
    assert 'agreement' in summary
    assert PolicyModel.load(policy_path).compatible_with(EnvId.CARTPOLE)


def test_eval_and_compare(tmp_path):
    policy_path = tmp_path.joinpath('policy.json')
    PolicyModel.create(EnvId.CARTPOLE, 8, make_rng(0)).save(policy_path)
    eval_dir = tmp_path.joinpath('eval')
    assert run(['eval', policy_path.as_posix(), '-e', 'cartpole', '-n', '2', '-o', eval_dir.as_posix()]) == 0
    assert len(eval_dir.joinpath('trials.csv').read_text().splitlines()) == 3

    cmp_dir = tmp_path.joinpath('compare')
    args = ['compare', f'mine={policy_path.as_posix()}', '-e', 'cartpole', '-n', '2', '-o', cmp_dir.as_posix()]
    assert run(args) == 0
    summary = cmp_dir.joinpath('summary.csv').read_text().splitlines()
    assert [line.split(',')[0] for line in summary[1:]] == ['mine', 'expert']


def test_compare_requires_a_policy():
    assert run(['compare', '-e', 'cartpole', '--no_expert']) == 1


def test_eval_env_mismatch(tmp_path):
    policy_path = tmp_path.joinpath('policy.json')
    PolicyModel.create(EnvId.CARTPOLE, 8, make_rng(0)).save(policy_path)
    assert run(['eval', policy_path.as_posix(), '-e', 'mountaincar', '-n', '1']) == 2


def test_export_reward_surface(tmp_path):
    reward_path = tmp_path.joinpath('reward.json')
    Network.create((2, 8, 1), make_rng(1)).save(reward_path)
    out = tmp_path.joinpath('grid.csv')
    args = ['export-reward-surface', reward_path.as_posix(), '-e', 'mountaincar', '-r', '5', '-o', out.as_posix()]
    assert run(args) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == 'x,y,value'
    assert len(lines) == 26
    assert np.isfinite([float(v) for line in lines[1:] for v in line.split(',')]).all()

    args = ['export-reward-surface', reward_path.as_posix(), '-e', 'cartpole', '-o', out.as_posix()]
    assert run(args) == 1


@pytest.mark.parametrize('raw, expected', [('', 0), ('0', 0), ('false', 0), ('1', 1), ('2', 2), ('yes', 1)])
def test_env_verbosity(monkeypatch, raw, expected):
    monkeypatch.setenv('RPCL_VERBOSE', raw)
    assert _env_verbosity() == expected


def test_train(tmp_path, capsys):
    config_path = tmp_path.joinpath('tiny.cfg')
    config_path.write_text(
        '[run]\nenv = cartpole\nexpert = lqr\n\n'
        '[rpcl]\nmax_episodes = 3\nmin_episodes = 0\nmax_steps = 20\npolicy_hidden = 8\ncritic_hidden = 8\n'
    )
    out_dir = tmp_path.joinpath('run')
    assert run(['train', '-c', config_path.as_posix(), '-o', out_dir.as_posix(), '-s', '5', '-f', 'json']) == 0
    summary = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert summary['episodes'] == 3
    assert summary['demonstrations'] == 3
    assert len(out_dir.joinpath('train_log.csv').read_text().splitlines()) == 4
    assert 'seed = 5' in out_dir.joinpath('config.cfg').read_text()
