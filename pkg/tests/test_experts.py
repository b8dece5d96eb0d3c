import json

import numpy as np
import pytest

from rpcl.actorcritic import PolicyModel
from rpcl.envsim import EnvId, Trajectory, reset, rollout
from rpcl.exceptions import DemoParseError, DemonstratorError, EnvMismatchError
from rpcl.evalharness import paired_eval
from rpcl.experts import LqrGain, lqr_action, Demonstration, LqrDemonstrator, PolicyDemonstrator, RecordedDemonstrator
from rpcl.experts import save_demos, load_demos, load_expert, demonstrate, calibrated_lqr_gain, shipped_expert_path
from rpcl.utils import make_rng

CP = EnvId.CARTPOLE
MC = EnvId.MOUNTAIN_CAR


def test_lqr_pushes_toward_lean():
    gain = LqrGain()
    assert lqr_action(gain, [0, 0, 0.1, 0]) == 1
    assert lqr_action(gain, [0, 0, -0.1, 0]) == 0
    assert lqr_action(LqrGain(sign=-1), [0, 0, 0.1, 0]) == 0
    assert lqr_action(gain, np.zeros(4)) == 1
    assert lqr_action(gain, [1, 0, 0, 0]) == 0


def test_lqr_state_shape():
    with pytest.raises(ValueError):
        lqr_action(LqrGain(), [0.0, 0.0])


@pytest.mark.parametrize('kwargs', [{'k': (1.0, 2.0)}, {'k': (1.0, 2.0, float('nan'), 0.0)}, {'sign': 0}])
def test_invalid_gain(kwargs):
    with pytest.raises(ValueError):
        LqrGain(**kwargs)


def test_lqr_balances():
    rng = make_rng(0)
    lengths = [rollout(CP, LqrGain(), rng, initial_state=reset(CP, rng)).length for _ in range(10)]
    assert 400 <= np.mean(lengths) <= 1000


def test_default_lqr_gain_is_calibrated():
    assert calibrated_lqr_gain().sign == 1
    assert LqrDemonstrator().gain == LqrGain()


def test_lqr_holds_the_pole_from_the_origin():
    demo = LqrDemonstrator().demonstrate(CP, np.zeros(4))
    assert demo.trajectory.length >= 200


def test_lqr_demonstrator():
    demonstrator = LqrDemonstrator()
    start = np.array([0.01, -0.02, 0.03, 0.0])
    demo = demonstrate(demonstrator, CP, start, max_steps=50)
    assert demo.source == 'lqr'
    assert demo.initial_state.tolist() == start.tolist()
    assert demo.trajectory.length <= 50
    assert demo.trajectory.actions.tolist() == [lqr_action(LqrGain(), s) for s in demo.trajectory.states[:-1]]
    assert demonstrator.demonstrate(CP, start, max_steps=50).trajectory == demo.trajectory
    with pytest.raises(EnvMismatchError):
        demonstrator.demonstrate(MC, np.array([-0.5, 0.0]))


def test_policy_demonstrator():
    rng = make_rng(1)
    policy = PolicyModel.create(MC, 16, rng)
    demonstrator = PolicyDemonstrator(policy, MC)
    demo = demonstrator.demonstrate(MC, np.array([-0.5, 0.0]), max_steps=20)
    assert demo.source == 'pretrained'
    assert demo.trajectory.length == 20
    assert demonstrator.demonstrate(MC, np.array([-0.5, 0.0]), max_steps=20).trajectory == demo.trajectory
    with pytest.raises(EnvMismatchError):
        PolicyDemonstrator(policy, CP)


def _demo(env: EnvId, start, length: int = 3) -> Demonstration:
    states = np.tile(np.asarray(start, dtype=float), (length + 1, 1))
    return Demonstration(Trajectory(env, states, np.zeros(length, dtype=int)), 'test')


def test_recorded_demonstrator_picks_nearest_start():
    demos = [_demo(CP, [0, 0, 0, 0]), _demo(CP, [1, 1, 1, 1]), _demo(MC, [-0.5, 0])]
    demonstrator = RecordedDemonstrator(demos)
    assert demonstrator.demonstrate(CP, np.full(4, 0.9)) is demos[1]
    assert demonstrator.demonstrate(CP, np.full(4, 0.1)) is demos[0]
    assert demonstrator.supports(MC)
    assert not demonstrator.supports(EnvId.MOUNTAIN_CAR_CONTINUOUS)
    with pytest.raises(DemonstratorError):
        demonstrator.demonstrate(EnvId.MOUNTAIN_CAR_CONTINUOUS, np.zeros(2))


def test_recorded_demonstrator_rejects_empty_demos():
    with pytest.raises(DemonstratorError):
        RecordedDemonstrator([_demo(CP, [0, 0, 0, 0]), _demo(CP, [0, 0, 0, 0], length=0)])


def test_demo_file_round_trip(tmp_path):
    path = tmp_path.joinpath('demos.jsonl')
    demos = [LqrDemonstrator().demonstrate(CP, reset(CP, make_rng(i)), max_steps=30) for i in range(3)]
    save_demos(path, demos)
    loaded = load_demos(path)
    assert [d.trajectory for d in loaded] == [d.trajectory for d in demos]
    assert {d.source for d in loaded} == {'lqr'}
    assert list(json.loads(path.read_text().splitlines()[0])) == ['env', 'source', 'states', 'actions']


@pytest.mark.parametrize('bad_line', [
    b'not json',
    b'{"env": "cartpole", "source": "x", "states": [[0, 0, 0, 0]]}',
    b'{"env": "pendulum", "source": "x", "states": [[0, 0, 0, 0]], "actions": []}',
    b'{"env": "cartpole", "source": "x", "states": [[0, 0]], "actions": []}',
    b'{"env": "cartpole", "source": "x", "states": [], "actions": null}',
    b'{"env": "cartpole", "source": "\xff\xfe", "states": [[0, 0, 0, 0]], "actions": []}',
])
def test_demo_parse_error_names_line(tmp_path, bad_line):
    path = tmp_path.joinpath('demos.jsonl')
    good = _demo(CP, [0, 0, 0, 0]).to_json()
    path.write_bytes(good.encode('utf-8') + b'\n\n' + bad_line + b'\n')
    with pytest.raises(DemoParseError) as exc_info:
        load_demos(path)
    assert exc_info.value.line == 3


def test_load_expert(tmp_path):
    assert isinstance(load_expert(CP), LqrDemonstrator)
    assert isinstance(load_expert(CP, 'lqr'), LqrDemonstrator)
    with pytest.raises(EnvMismatchError):
        load_expert(MC, 'lqr')
    with pytest.raises(DemonstratorError):
        load_expert(MC, tmp_path.joinpath('missing.json').as_posix())

    policy_path = tmp_path.joinpath('expert.json')
    PolicyModel.create(MC, 16, make_rng(2)).save(policy_path)
    assert isinstance(load_expert(MC, policy_path.as_posix()), PolicyDemonstrator)

    demo_path = tmp_path.joinpath('demos.jsonl')
    save_demos(demo_path, [_demo(MC, [-0.5, 0])])
    assert isinstance(load_expert(MC, demo_path.as_posix()), RecordedDemonstrator)


@pytest.mark.parametrize('env, low, high', [(MC, 120, 260), (EnvId.MOUNTAIN_CAR_CONTINUOUS, 350, 560)])
def test_shipped_expert_reaches_the_goal(env, low, high):
    assert shipped_expert_path(env).is_file()
    expert = load_expert(env)
    assert isinstance(expert, PolicyDemonstrator)
    stats = paired_eval([('expert', expert.action_source())], env, trials=10, seed=3).stats['expert']
    assert stats.successes == 10
    assert low <= stats.mean_steps <= high
