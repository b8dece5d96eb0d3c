import pytest

from rpcl.config import RpclConfig, RunDescriptor, load_config, save_config, default_config_path
from rpcl.envsim import EnvId
from rpcl.exceptions import ConfigError
from rpcl.rewardmodel import DiscountSet


def test_shipped_cartpole_config():
    config, run = load_config(default_config_path('cartpole'))
    assert run.env is EnvId.CARTPOLE
    assert run.expert == 'lqr'
    assert run.trials == 1000
    assert (config.rho, config.eta, config.gamma) == (0.99, 0.99, 0.995)
    assert config.gammas == DiscountSet((0.9, 0.995))
    assert (config.min_episodes, config.phi_updates, config.max_episodes) == (200, 1, 5000)
    assert (config.phi_lr, config.theta_lr) == (0.1, 0.01)
    assert (config.sample_count, config.inventory_capacity) == (1, 1000)
    assert config.optimizer == 'sgd'


@pytest.mark.parametrize('env', list(EnvId))
def test_every_shipped_config_loads(env):
    config, run = load_config(default_config_path(env))
    assert run.env is env
    assert config.max_steps <= env.cap
    assert config.optimizer == 'sgd'


def test_env_defaults():
    assert RpclConfig.for_env('mountaincar').policy_hidden == 128
    assert RpclConfig.for_env(EnvId.CARTPOLE).stop_threshold == 995.0
    assert RpclConfig.for_env('cartpole', policy_hidden=8).policy_hidden == 8


@pytest.mark.parametrize('key, value', [
    ('rho', 1.0),
    ('rho', -0.1),
    ('eta', 0.0),
    ('gamma', 1.5),
    ('sample_count', 0),
    ('optimizer', 'rmsprop'),
    ('max_steps', 1001),
    ('min_episodes', 6000),
])
def test_invalid_values(key, value):
    with pytest.raises(ConfigError) as exc_info:
        RpclConfig(**{key: value})
    assert exc_info.value.key == key


def test_sample_count_below_capacity():
    with pytest.raises(ConfigError):
        RpclConfig(sample_count=10, inventory_capacity=10)
    assert RpclConfig(sample_count=9, inventory_capacity=10).sample_count == 9


def test_invalid_gammas():
    with pytest.raises(ConfigError) as exc_info:
        RpclConfig(gammas='0.9, 1.5')
    assert exc_info.value.key == 'gammas'
    assert RpclConfig(gammas='[0.5]').gammas == DiscountSet((0.5,))


def test_run_descriptor():
    assert RunDescriptor('cp').env is EnvId.CARTPOLE
    with pytest.raises(ConfigError):
        RunDescriptor(EnvId.CARTPOLE, trials=0)
    with pytest.raises(ConfigError):
        RunDescriptor(EnvId.CARTPOLE, workers=0)


def test_save_load_round_trip(tmp_path):
    path = tmp_path.joinpath('run.cfg')
    config = RpclConfig.for_env('mountaincar_continuous', rho=0.5, stop_threshold=None, stereo_return=True)
    run = RunDescriptor('mountaincar_continuous', expert='expert.json', out_dir=tmp_path, trials=7)
    save_config(path, config, run)
    assert load_config(path) == (config, run)


def test_unknown_key(tmp_path):
    path = tmp_path.joinpath('run.cfg')
    path.write_text('[run]\nenv = cartpole\n\n[rpcl]\nlearning_rate = 0.1\n')
    with pytest.raises(ConfigError) as exc_info:
        load_config(path)
    assert exc_info.value.key == 'rpcl.learning_rate'


def test_unknown_section(tmp_path):
    path = tmp_path.joinpath('run.cfg')
    path.write_text('[run]\nenv = cartpole\n\n[extra]\nx = 1\n')
    with pytest.raises(ConfigError):
        load_config(path)


def test_env_required(tmp_path):
    path = tmp_path.joinpath('run.cfg')
    path.write_text('[rpcl]\nrho = 0.5\n')
    with pytest.raises(ConfigError) as exc_info:
        load_config(path)
    assert exc_info.value.key == 'env'
    config, run = load_config(path, env='mountaincar')
    assert config.rho == 0.5
    assert run.env is EnvId.MOUNTAIN_CAR


def test_bad_values_name_the_file(tmp_path):
    path = tmp_path.joinpath('run.cfg')
    path.write_text('[run]\nenv = cartpole\n\n[rpcl]\nrho = lots\n')
    with pytest.raises(ConfigError) as exc_info:
        load_config(path)
    assert exc_info.value.key == 'rho'
    assert exc_info.value.path == path


def test_none_stop_threshold(tmp_path):
    path = tmp_path.joinpath('run.cfg')
    path.write_text('[run]\nenv = cartpole\n\n[rpcl]\nstop_threshold = none\nstereo_return = yes\n')
    config, _ = load_config(path)
    assert config.stop_threshold is None
    assert config.stereo_return is True


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path.joinpath('missing.cfg'))
