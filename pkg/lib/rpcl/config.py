"""
Training configuration and the INI run files that carry it.

:author: Doug Skrypa
"""

import logging
from configparser import ConfigParser, Error as ConfigParserError
from dataclasses import dataclass, field, fields, asdict, replace as dc_replace
from importlib import resources
from pathlib import Path
from typing import Union, Optional, Any, get_origin, get_args

from .constants import EPISODE_CAP, STOP_WINDOW, STOP_THRESHOLDS, CHECKPOINT_EVERY, LOG_EVERY, DEFAULT_CONFIG_NAMES
from .envsim import EnvId
from .exceptions import ConfigError
from .rewardmodel import DiscountSet
from .utils import atomic_write

__all__ = ['RpclConfig', 'RunDescriptor', 'load_config', 'save_config', 'default_config_path', 'CONFIG_ITEMS']
log = logging.getLogger(__name__)

CONFIG_ITEMS = {
    'run': {
        'env': 'environment (cartpole, mountaincar, mountaincar_continuous)',
        'expert': 'demonstrator: lqr, pretrained, a policy checkpoint (.json), or a demonstration file (.jsonl)',
        'out_dir': 'directory for logs and checkpoints',
        'trials': 'number of paired evaluation trials',
        'workers': 'number of evaluation worker processes',
    },
    'rpcl': {
        'rho': 'margin weight rho, in [0, 1)',
        'eta': 'decay applied to rho after each reward update block, in (0, 1]',
        'gamma': 'discount factor for advantages and the return term, in (0, 1]',
        'gammas': 'comma-separated discount set used for stereo utilities',
        'min_episodes': 'episodes before the stop condition is checked (e)',
        'phi_updates': 'reward updates per block (K)',
        'max_episodes': 'maximum training episodes (E)',
        'phi_lr': 'reward model learning rate',
        'theta_lr': 'policy learning rate',
        'critic_lr': 'critic learning rate',
        'sample_count': 'inventory samples per reward update (n)',
        'inventory_capacity': 'sample inventory capacity (N)',
        'reward_hidden': 'reward model hidden width',
        'policy_hidden': 'policy hidden width',
        'critic_hidden': 'critic hidden width',
        'seed': 'root random seed',
        'stop_window': 'episodes in the stop-condition moving average',
        'stop_threshold': 'moving-average episode length that ends training early',
        'stereo_return': 'use the stereo utility in the return term',
        'normalize_advantages': 'standardize advantages before the policy update',
        'weight_decay': 'L2 coefficient for the reward model',
        'optimizer': 'sgd or adam',
        'max_steps': 'per-episode step cap',
        'checkpoint_every': 'episodes between checkpoints (0 = only at the end)',
        'log_every': 'episodes between progress messages',
    },
}
OPTIMIZERS = ('sgd', 'adam')


@dataclass(frozen=True)
class RpclConfig:
    """
    Hyperparameters for a training run.  ``rho``/``eta`` are the margin weight and its decay, ``min_episodes`` (e),
    ``phi_updates`` (K), ``max_episodes`` (E), ``phi_lr`` / ``theta_lr`` the reward / policy learning rates, and
    ``sample_count`` (n) / ``inventory_capacity`` (N) size the sample inventory.
    """

    rho: float = 0.99
    eta: float = 0.99
    gamma: float = 0.995
    gammas: DiscountSet = field(default_factory=lambda: DiscountSet((0.9, 0.995)))
    min_episodes: int = 200
    phi_updates: int = 1
    max_episodes: int = 5000
    phi_lr: float = 0.1
    theta_lr: float = 0.01
    critic_lr: float = 0.01
    sample_count: int = 1
    inventory_capacity: int = 1000
    reward_hidden: int = 32
    policy_hidden: int = 32
    critic_hidden: int = 32
    seed: int = 0
    stop_window: int = STOP_WINDOW
    stop_threshold: Optional[float] = None
    stereo_return: bool = False
    normalize_advantages: bool = False
    weight_decay: float = 0.0
    optimizer: str = 'sgd'
    max_steps: int = EPISODE_CAP
    checkpoint_every: int = CHECKPOINT_EVERY
    log_every: int = LOG_EVERY

    def __post_init__(self):
        object.__setattr__(self, 'gammas', _parse_gammas(self.gammas))
        for key, ok, message in self._checks():
            if not ok:
                raise ConfigError(key, message)

    def _checks(self):
        yield 'rho', 0 <= self.rho < 1, f'{self.rho} must be in [0, 1)'
        yield 'eta', 0 < self.eta <= 1, f'{self.eta} must be in (0, 1]'
        yield 'gamma', 0 < self.gamma <= 1, f'{self.gamma} must be in (0, 1]'
        for key in ('min_episodes', 'phi_updates', 'max_episodes', 'seed', 'checkpoint_every'):
            yield key, getattr(self, key) >= 0, f'{getattr(self, key)} must be >= 0'
        yield 'min_episodes', self.min_episodes <= self.max_episodes, 'must not exceed max_episodes'
        for key in ('phi_lr', 'theta_lr', 'critic_lr', 'weight_decay'):
            yield key, getattr(self, key) >= 0, f'{getattr(self, key)} must be >= 0'
        yield 'sample_count', self.sample_count >= 1, f'{self.sample_count} must be >= 1'
        yield 'sample_count', self.sample_count < self.inventory_capacity, 'must be less than inventory_capacity'
        for key in ('reward_hidden', 'policy_hidden', 'critic_hidden', 'stop_window', 'log_every'):
            yield key, getattr(self, key) >= 1, f'{getattr(self, key)} must be >= 1'
        yield 'max_steps', 1 <= self.max_steps <= EPISODE_CAP, f'{self.max_steps} must be in [1, {EPISODE_CAP}]'
        yield 'optimizer', self.optimizer in OPTIMIZERS, f'{self.optimizer!r} must be one of {OPTIMIZERS}'

    @classmethod
    def for_env(cls, env: Union[EnvId, str], **changes) -> 'RpclConfig':
        env = EnvId.from_name(env)
        hidden = 32 if env is EnvId.CARTPOLE else 128
        _, threshold = STOP_THRESHOLDS[env.value]
        defaults = {'policy_hidden': hidden, 'critic_hidden': hidden, 'stop_threshold': threshold}
        return cls(**{**defaults, **changes})

    def replace(self, **changes) -> 'RpclConfig':
        return dc_replace(self, **changes)

    def to_dict(self) -> dict[str, Any]:
        data = asdict(self)
        data['gammas'] = list(self.gammas.gammas)
        return data


def _parse_gammas(value) -> DiscountSet:
    try:
        return DiscountSet.parse(value)
    except (ValueError, TypeError) as e:
        raise ConfigError('gammas', str(e)) from e


@dataclass(frozen=True)
class RunDescriptor:
    env: EnvId
    expert: Optional[str] = None
    out_dir: Optional[Path] = None
    trials: int = 1000
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, 'env', EnvId.from_name(self.env))
        if self.out_dir is not None:
            object.__setattr__(self, 'out_dir', Path(self.out_dir))
        if self.trials < 1:
            raise ConfigError('trials', f'{self.trials} must be >= 1')
        if self.workers < 1:
            raise ConfigError('workers', f'{self.workers} must be >= 1')


# region Load / Save


def default_config_path(env: Union[EnvId, str]) -> Path:
    name = DEFAULT_CONFIG_NAMES[EnvId.from_name(env).value]
    with resources.as_file(resources.files('rpcl.data').joinpath(name)) as path:
        return path


def load_config(path: Union[str, Path], env: Union[EnvId, str, None] = None) -> tuple[RpclConfig, RunDescriptor]:
    """
    :param path: Path to an INI run file
    :param env: Environment override; required when the file has no ``[run] env`` value
    :return: Tuple of (config, run descriptor); keys missing from the file take the environment's defaults
    """
    path = Path(path).expanduser()
    parser = ConfigParser(interpolation=None)
    try:
        with path.open('r', encoding='utf-8') as f:
            parser.read_file(f)
    except OSError as e:
        raise ConfigError('path', f'unable to read config: {e}', path) from e
    except ConfigParserError as e:
        raise ConfigError('syntax', str(e).replace('\n', ' '), path) from e

    for section in parser.sections():
        if section not in CONFIG_ITEMS:
            raise ConfigError(section, 'unknown section', path)
        for key in parser.options(section):
            if key not in CONFIG_ITEMS[section]:
                raise ConfigError(f'{section}.{key}', 'unknown key', path)

    run = dict(parser.items('run')) if parser.has_section('run') else {}
    if env is None and not run.get('env'):
        raise ConfigError('env', 'no environment was specified', path)
    try:
        env = EnvId.from_name(env or run['env'])
    except ValueError as e:
        raise ConfigError('env', str(e), path) from e

    changes = {}
    if parser.has_section('rpcl'):
        types = {f.name: f.type for f in fields(RpclConfig)}
        for key, raw in parser.items('rpcl'):
            changes[key] = _coerce(key, types[key], raw, path)

    try:
        config = RpclConfig.for_env(env, **changes)
        descriptor = RunDescriptor(
            env,
            expert=run.get('expert') or None,
            out_dir=run.get('out_dir') or None,
            trials=_coerce('trials', int, run.get('trials', '1000'), path),
            workers=_coerce('workers', int, run.get('workers', '1'), path),
        )
    except ConfigError as e:
        raise ConfigError(e.key, e.message, path) from e

    log.debug(f'Loaded {env.value} config from {path.as_posix()}')
    return config, descriptor


def _coerce(key: str, kind: Any, raw: str, path: Path):
    raw = raw.strip()
    if get_origin(kind) is Union:
        if raw.lower() in ('', 'none'):
            return None
        kind = next(arg for arg in get_args(kind) if arg is not type(None))
    try:
        if kind is bool:
            if raw.lower() not in ConfigParser.BOOLEAN_STATES:
                raise ValueError(f'{raw!r} is not a boolean')
            return ConfigParser.BOOLEAN_STATES[raw.lower()]
        elif kind is DiscountSet:
            return DiscountSet.parse(raw)
        return kind(raw)
    except ValueError as e:
        raise ConfigError(key, str(e), path) from e


def save_config(path: Union[str, Path], config: RpclConfig, run: Optional[RunDescriptor] = None):
    parser = ConfigParser(interpolation=None)
    if run is not None:
        parser['run'] = {
            key: str(value)
            for key, value in (
                ('env', run.env.value),
                ('expert', run.expert),
                ('out_dir', run.out_dir.as_posix() if run.out_dir else None),
                ('trials', run.trials),
                ('workers', run.workers),
            )
            if value is not None
        }
    parser['rpcl'] = {f.name: _format_value(getattr(config, f.name)) for f in fields(config)}
    with atomic_write(path) as f:
        parser.write(f)


def _format_value(value) -> str:
    if value is None:
        return 'none'
    if isinstance(value, bool):
        return 'true' if value else 'false'
    elif isinstance(value, float):
        return repr(value)
    return str(value)


# endregion
