"""
Evaluation and comparison: paired trials, discount-set ablations, the env-reward actor-critic and behavior cloning
baselines, and reward-surface grids.

:author: Doug Skrypa
"""

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from pathlib import Path
from typing import Union, Optional, Sequence, Callable, Iterator, Any

import numpy as np

from .actorcritic import PolicyModel, CriticModel, GreedyPolicy, ActorCriticLearner
from .config import RpclConfig
from .constants import EPISODE_CAP, CP_X_LIMIT, CP_THETA_LIMIT, MC_MIN_POSITION, MC_MAX_POSITION, MC_MAX_SPEED
from .core import TrainLog, EpisodeRecord, EPISODE_STREAM, stop_condition_met, train
from .envsim import EnvId, Trajectory, ActionSource, reset, rollout, env_return
from .exceptions import EnvMismatchError, MissingActions, NonFiniteGradientError, TrainingAborted
from .experts import Demonstration, Demonstrator, LqrGain
from .net import Direction, make_optimizer
from .rewardmodel import DiscountSet, EnvReward, RewardModel
from .utils import SeedStream, atomic_write, make_rng

__all__ = [
    'EvalStats',
    'TrialRecord',
    'PairedEvalResult',
    'paired_eval',
    'task_success',
    'AblationRow',
    'ablate_discount_sets',
    'ac_env_reward_train',
    'BehaviorCloner',
    'behavior_cloning',
    'RewardGrid',
    'reward_surface',
    'DEFAULT_AXIS_RANGES',
]
log = logging.getLogger(__name__)

Contender = tuple[str, ActionSource]
DEFAULT_AXIS_RANGES = {
    EnvId.CARTPOLE: ((-CP_X_LIMIT, CP_X_LIMIT), (-3.0, 3.0), (-CP_THETA_LIMIT, CP_THETA_LIMIT), (-3.0, 3.0)),
    EnvId.MOUNTAIN_CAR: ((MC_MIN_POSITION, MC_MAX_POSITION), (-MC_MAX_SPEED, MC_MAX_SPEED)),
    EnvId.MOUNTAIN_CAR_CONTINUOUS: ((MC_MIN_POSITION, MC_MAX_POSITION), (-MC_MAX_SPEED, MC_MAX_SPEED)),
}


# region Paired Evaluation


@dataclass(frozen=True)
class TrialRecord:
    trial: int
    policy: str
    steps: int
    env_score: float
    success: bool


@dataclass(frozen=True)
class EvalStats:
    policy: str
    trials: int
    mean_steps: float
    std_steps: float
    mean_env_score: float
    std_env_score: float
    successes: int

    @classmethod
    def from_records(cls, policy: str, records: Sequence[TrialRecord]) -> 'EvalStats':
        """Aggregate per-trial results; standard deviations are population (ddof=0) values"""
        if not records:
            raise ValueError(f'No trials to aggregate for {policy=}')
        steps = np.array([rec.steps for rec in records], dtype=np.float64)
        scores = np.array([rec.env_score for rec in records], dtype=np.float64)
        return cls(
            policy,
            len(records),
            float(steps.mean()),
            float(steps.std()),
            float(scores.mean()),
            float(scores.std()),
            sum(rec.success for rec in records),
        )

    def as_dict(self) -> dict[str, Any]:
        return {
            'policy': self.policy,
            'trials': self.trials,
            'mean_steps': self.mean_steps,
            'std_steps': self.std_steps,
            'mean_env_score': self.mean_env_score,
            'std_env_score': self.std_env_score,
            'successes': self.successes,
        }


@dataclass
class PairedEvalResult:
    env: EnvId
    stats: dict[str, EvalStats]
    trials: list[TrialRecord] = field(repr=False)

    def __iter__(self) -> Iterator[EvalStats]:
        return iter(self.stats.values())

    def write_trials_csv(self, path: Union[str, Path]):
        with atomic_write(path) as f:
            f.write('trial,policy,steps,env_score\n')
            for rec in self.trials:
                f.write(f'{rec.trial},{rec.policy},{rec.steps},{rec.env_score!r}\n')

    def write_summary_csv(self, path: Union[str, Path]):
        write_summary_csv(path, self.stats.values())


def write_summary_csv(path: Union[str, Path], stats: Iterator[EvalStats]):
    with atomic_write(path) as f:
        f.write('policy,trials,mean_steps,std_steps,mean_env_score,std_env_score,successes\n')
        for s in stats:
            f.write(
                f'{s.policy},{s.trials},{s.mean_steps!r},{s.std_steps!r},{s.mean_env_score!r},{s.std_env_score!r},'
                f'{s.successes}\n'
            )


def task_success(env: EnvId, trajectory: Trajectory, max_steps: int = EPISODE_CAP) -> bool:
    """CartPole: the pole stayed up for the full episode.  MountainCar: the car reached the goal."""
    if env is EnvId.CARTPOLE:
        return not trajectory.terminated and trajectory.length >= min(max_steps, env.cap)
    return trajectory.terminated


def _require_compatible(name: str, source: ActionSource, env: EnvId):
    if isinstance(source, GreedyPolicy):
        source = source.policy
    if isinstance(source, PolicyModel):
        compatible = source.compatible_with(env)
    elif isinstance(source, LqrGain):
        compatible = env is EnvId.CARTPOLE
    else:
        compatible = True
    if not compatible:
        raise EnvMismatchError(f'Policy {name!r} ({source}) cannot act in {env.value}')


def _run_trial(env: EnvId, contenders: Sequence[Contender], seed: int, max_steps: int, trial: int) -> list[TrialRecord]:
    s0 = reset(env, make_rng(seed, trial))
    records = []
    for name, source in contenders:
        trajectory = rollout(env, source, make_rng(seed, trial, 1), max_steps, s0)
        success = task_success(env, trajectory, max_steps)
        records.append(TrialRecord(trial, name, trajectory.length, env_return(trajectory), success))
    return records


def paired_eval(
    contenders: Sequence[Contender],
    env: EnvId,
    trials: int,
    seed: int = 0,
    max_steps: int = EPISODE_CAP,
    workers: int = 1,
) -> PairedEvalResult:
    """
    Run every contender from the same initial state in each trial.  Trial ``i`` draws its initial state from
    ``make_rng(seed, i)``, and every contender acts with an identical generator, so two identical policies always
    produce identical results.

    :param contenders: Sequence of (name, action source) pairs
    :param env: The environment to evaluate in
    :param trials: Number of initial states
    :param seed: Root seed for initial states and action sampling
    :param max_steps: Per-episode step cap
    :param workers: Number of worker processes; trials run in-process when 1
    """
    if not contenders:
        raise ValueError('At least one policy is required')
    if trials < 1:
        raise ValueError(f'Invalid {trials=} - must be >= 1')
    names = [name for name, _ in contenders]
    if len(set(names)) != len(names):
        raise ValueError(f'Policy names must be unique: {names}')
    for name, source in contenders:
        _require_compatible(name, source, env)

    run_trial = partial(_run_trial, env, list(contenders), seed, max_steps)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as executor:
            per_trial = list(executor.map(run_trial, range(trials), chunksize=max(1, trials // (workers * 4))))
    else:
        per_trial = [run_trial(trial) for trial in range(trials)]

    records = [rec for trial_records in per_trial for rec in trial_records]
    stats = {name: EvalStats.from_records(name, [rec for rec in records if rec.policy == name]) for name in names}
    for s in stats.values():
        log.debug(f'{env.value} {s.policy}: steps={s.mean_steps:.1f}+/-{s.std_steps:.1f} successes={s.successes}')
    return PairedEvalResult(env, stats, records)


# endregion


# region Baselines


def _learner_for(env: EnvId, config: RpclConfig) -> ActorCriticLearner:
    init_rng = SeedStream(config.seed).generator()
    policy = PolicyModel.create(env, config.policy_hidden, init_rng)
    critic = CriticModel.create(env.state_dim, config.critic_hidden, init_rng)
    return ActorCriticLearner(
        policy,
        critic,
        config.gamma,
        make_optimizer(config.optimizer, config.theta_lr),
        make_optimizer(config.optimizer, config.critic_lr),
        config.normalize_advantages,
    )


def ac_env_reward_train(env: EnvId, config: RpclConfig) -> PolicyModel:
    """
    Train the same actor-critic used for concurrent learning, but on the hidden environment reward and without a
    reward model or demonstrations.  Uses the same stop condition.
    """
    learner = _learner_for(env, config)
    reward = EnvReward()
    train_log = TrainLog()
    try:
        for episode in range(1, config.max_episodes + 1):
            trajectory = rollout(env, learner.policy, make_rng(config.seed, EPISODE_STREAM, episode), config.max_steps)
            learner.update(trajectory, reward)
            train_log.append(EpisodeRecord(episode, trajectory.length, env_return(trajectory), 0.0, False, 0))
            if episode % config.log_every == 0:
                average = train_log.moving_average(min(config.stop_window, episode))
                log.info(f'Env-reward baseline episode {episode}: steps={trajectory.length} avg={average:.1f}')
            if stop_condition_met(env, config, episode, train_log):
                log.info(f'Env-reward baseline met the stop condition after {episode} episodes')
                break
    except NonFiniteGradientError as e:
        raise TrainingAborted(str(e), train_log) from e
    return learner.policy


class BehaviorCloner:
    """Maximum-likelihood fit of a policy to demonstrated (state, action) pairs, one shuffled pass per epoch"""

    def __init__(
        self,
        demos: Sequence[Demonstration],
        env: EnvId,
        hidden: int,
        lr: float,
        seed: int = 0,
        batch_size: Optional[int] = None,
        optimizer: str = 'sgd',
    ):
        if not demos:
            raise ValueError('Behavior cloning requires at least one demonstration')
        if missing := sum(1 for demo in demos if not demo.trajectory.has_actions):
            raise MissingActions(f'Behavior cloning requires actions; {missing} of {len(demos)} demos have none')
        if bad_env := {demo.env for demo in demos if demo.env is not env}:
            raise EnvMismatchError(f'Expected {env.value} demonstrations; found {", ".join(e.value for e in bad_env)}')
        self.states = np.concatenate([demo.trajectory.states[:-1] for demo in demos])
        self.actions = np.concatenate([demo.trajectory.actions for demo in demos])
        self._rng = make_rng(seed)
        self.policy = PolicyModel.create(env, hidden, self._rng)
        self.optimizer = make_optimizer(optimizer, lr)
        self.batch_size = batch_size or len(self.states)
        self.epoch = 0

    def __repr__(self) -> str:
        return f'<{self.__class__.__name__}[pairs={len(self.states)}, epoch={self.epoch}]>'

    def loss(self) -> float:
        """Mean negative log-likelihood of the demonstrated actions"""
        if len(self.states) == 0:
            return 0.0
        return -float(self.policy.log_probs(self.states, self.actions).mean())

    def fit_epoch(self) -> float:
        order = self._rng.permutation(len(self.states))
        for start in range(0, len(order), self.batch_size):
            batch = order[start : start + self.batch_size]
            weights = np.full(len(batch), 1 / len(batch))
            grad = self.policy.log_prob_gradient(self.states[batch], self.actions[batch], weights)
            self.policy = self.policy.copy(self.optimizer.step(self.policy.net, grad, Direction.ASCENT))
        self.epoch += 1
        return self.loss()

    def agreement(self) -> float:
        """Fraction of demonstrated states where the greedy action matches the demonstrated one (discrete only)"""
        greedy = np.array([self.policy.greedy(state) for state in self.states])
        return float(np.mean(greedy == self.actions)) if len(greedy) else 1.0

    def fit(self, epochs: int) -> PolicyModel:
        for _ in range(epochs):
            loss = self.fit_epoch()
            if not np.isfinite(loss):
                raise TrainingAborted(f'behavior cloning loss became non-finite at epoch {self.epoch}')
        log.debug(f'Behavior cloning finished after {self.epoch} epochs with loss={self.loss():.6f}')
        return self.policy


def behavior_cloning(
    demos: Sequence[Demonstration],
    env: EnvId,
    hidden: int,
    epochs: int,
    lr: float,
    seed: int = 0,
    batch_size: Optional[int] = None,
    optimizer: str = 'sgd',
) -> PolicyModel:
    return BehaviorCloner(demos, env, hidden, lr, seed, batch_size, optimizer).fit(epochs)


# endregion


# region Ablation


@dataclass(frozen=True)
class AblationRow:
    gammas: DiscountSet
    stats: Optional[EvalStats]
    expert_stats: Optional[EvalStats]
    stopped_early: bool = False
    error: Optional[str] = None

    @property
    def failed(self) -> bool:
        """A run fails when training aborted, or it never met the stop condition and never completed the task"""
        if self.stats is None:
            return True
        return not self.stopped_early and self.stats.successes == 0

    def as_dict(self) -> dict[str, Any]:
        stats = self.stats
        return {
            'gammas': str(self.gammas),
            'result': 'Fail' if self.failed else f'{stats.mean_steps:.0f}+/-{stats.std_steps:.0f}',
            'mean_steps': stats.mean_steps if stats else None,
            'std_steps': stats.std_steps if stats else None,
            'successes': stats.successes if stats else 0,
            'expert_mean_steps': self.expert_stats.mean_steps if self.expert_stats else None,
            'error': self.error,
        }


def ablate_discount_sets(
    env: EnvId,
    sets: Sequence[DiscountSet],
    config: RpclConfig,
    expert: Demonstrator,
    trials: int = 100,
    workers: int = 1,
    train_fn: Callable = train,
) -> list[AblationRow]:
    """
    Train once per discount set, each with its own seed drawn from the config's seed, and evaluate the greedy
    learned policy against the expert (when the expert can act) on shared initial states.
    """
    seeds = SeedStream(config.seed)
    rows = []
    for gammas in sets:
        run_config = config.replace(gammas=DiscountSet.parse(gammas), seed=seeds.child_seed())
        log.info(f'Ablation: training {env.value} with gammas={run_config.gammas}')
        try:
            result = train_fn(run_config, env, expert)
        except TrainingAborted as e:
            log.warning(f'Ablation run with gammas={run_config.gammas} aborted: {e}')
            rows.append(AblationRow(run_config.gammas, None, None, error=str(e)))
            continue

        contenders = [('rpcl', GreedyPolicy(result.policy))]
        if (controller := expert.action_source()) is not None:
            contenders.append(('expert', controller))
        evaluated = paired_eval(contenders, env, trials, run_config.seed, run_config.max_steps, workers)
        expert_stats = evaluated.stats.get('expert')
        rows.append(AblationRow(run_config.gammas, evaluated.stats['rpcl'], expert_stats, result.stopped_early))
    return rows


# endregion


# region Reward Surface


@dataclass
class RewardGrid:
    env: EnvId
    dims: tuple[int, int]
    xs: np.ndarray
    ys: np.ndarray
    fixed: np.ndarray
    values: np.ndarray  # values[i, j] = g(state with dims[0] = xs[j], dims[1] = ys[i])

    def __post_init__(self):
        if self.values.shape != (len(self.ys), len(self.xs)):
            raise ValueError(f'Grid values have shape={self.values.shape}; expected {(len(self.ys), len(self.xs))}')
        if not np.isfinite(self.values).all():
            raise ValueError('Grid values must be finite')

    def to_rows(self) -> list[tuple[float, float, float]]:
        return [
            (float(x), float(y), float(self.values[i, j]))
            for i, y in enumerate(self.ys)
            for j, x in enumerate(self.xs)
        ]

    def write_csv(self, path: Union[str, Path]):
        with atomic_write(path) as f:
            f.write('x,y,value\n')
            for x, y, value in self.to_rows():
                f.write(f'{x!r},{y!r},{value!r}\n')

    def mean_where(self, dim: int, predicate: Callable[[np.ndarray], np.ndarray]) -> float:
        """Mean value over the cells whose coordinate along state dimension ``dim`` satisfies ``predicate``"""
        if dim == self.dims[0]:
            mask = np.broadcast_to(np.asarray(predicate(self.xs), dtype=bool)[None, :], self.values.shape)
        elif dim == self.dims[1]:
            mask = np.broadcast_to(np.asarray(predicate(self.ys), dtype=bool)[:, None], self.values.shape)
        else:
            raise ValueError(f'Invalid {dim=} - the grid spans dimensions {self.dims}')
        if not mask.any():
            raise ValueError(f'No grid cells satisfy the predicate for {dim=}')
        return float(self.values[mask].mean())

    @property
    def coefficient_of_variation(self) -> float:
        """std / |mean| over every cell; 0 for a constant grid"""
        std = float(self.values.std())
        if std == 0:
            return 0.0
        mean = abs(float(self.values.mean()))
        return std / mean if mean else float('inf')


def reward_surface(
    model: RewardModel,
    env: EnvId,
    dim_x: int,
    dim_y: int,
    fixed: Optional[Sequence[float]] = None,
    resolution: int = 50,
    x_range: Optional[tuple[float, float]] = None,
    y_range: Optional[tuple[float, float]] = None,
) -> RewardGrid:
    """
    Evaluate the learned reward over a ``resolution x resolution`` grid spanning two state dimensions, holding the
    remaining dimensions at ``fixed`` (zeros by default).
    """
    n_dims = env.state_dim
    if dim_x == dim_y or not (0 <= dim_x < n_dims and 0 <= dim_y < n_dims):
        raise ValueError(f'Invalid grid dims=({dim_x}, {dim_y}) for {env.value} - expected 2 distinct dims < {n_dims}')
    if resolution < 2:
        raise ValueError(f'Invalid {resolution=} - must be >= 2')
    base = np.zeros(n_dims) if fixed is None else np.array(fixed, dtype=np.float64)
    if base.shape != (n_dims,):
        raise ValueError(f'Expected {n_dims} fixed values for {env.value}; found {base.size}')

    x_range = x_range or DEFAULT_AXIS_RANGES[env][dim_x]
    y_range = y_range or DEFAULT_AXIS_RANGES[env][dim_y]
    xs = np.linspace(*x_range, resolution)
    ys = np.linspace(*y_range, resolution)
    grid_x, grid_y = np.meshgrid(xs, ys)
    states = np.tile(base, (resolution * resolution, 1))
    states[:, dim_x] = grid_x.ravel()
    states[:, dim_y] = grid_y.ravel()
    values = model.rewards(states).reshape(resolution, resolution)
    return RewardGrid(env, (dim_x, dim_y), xs, ys, base, values)


# endregion
