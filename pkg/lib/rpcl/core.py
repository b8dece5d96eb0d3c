"""
Concurrent reward and policy learning: the episode loop, the sample inventory, Fibonacci-scheduled reward update
blocks with margin-weight decay, the stop condition, and the training log.

:author: Doug Skrypa
"""

import copy
import logging
from collections import deque
from dataclasses import dataclass
from pathlib import Path
from typing import Union, Optional, Iterator

import numpy as np

from .actorcritic import PolicyModel, CriticModel, ActorCriticLearner
from .config import RpclConfig, save_config
from .constants import STOP_THRESHOLDS
from .envsim import EnvId, Trajectory, reset, rollout
from .exceptions import RpclException, EmptyInventoryError, DemonstratorError, NonFiniteGradientError, TrainingAborted
from .experts import Demonstrator
from .net import Direction, make_optimizer
from .rewardmodel import RewardModel, discounted_return, phi_gradient
from .utils import SeedStream, atomic_write, make_rng

__all__ = [
    'SampleInventory',
    'FibSchedule',
    'should_update_phi',
    'stop_condition_met',
    'EpisodeRecord',
    'TrainLog',
    'PhiUpdateResult',
    'TrainResult',
    'RpclTrainer',
    'train',
]
log = logging.getLogger(__name__)

EPISODE_STREAM = 1
PHI_STREAM = 2


class SampleInventory:
    """Bounded store of recent learner trajectories; the oldest trajectory is dropped first once full"""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError(f'Invalid inventory {capacity=}')
        self.capacity = capacity
        self._items: deque[Trajectory] = deque(maxlen=capacity)

    def __repr__(self) -> str:
        return f'<{self.__class__.__name__}[{len(self)}/{self.capacity}]>'

    def __len__(self) -> int:
        return len(self._items)

    def __iter__(self) -> Iterator[Trajectory]:
        return iter(self._items)

    def add(self, trajectory: Trajectory):
        self._items.append(trajectory)

    def sample(self, n: int, rng: np.random.Generator) -> list[Trajectory]:
        """Uniform draw of n trajectories; without replacement when the inventory holds at least n"""
        if not self._items:
            raise EmptyInventoryError('Cannot sample from an empty inventory')
        indices = rng.choice(len(self._items), size=n, replace=len(self._items) < n)
        return [self._items[i] for i in indices]


class FibSchedule:
    """The sequence 0, 1, 1, 2, 3, 5, ... up to the first element >= the episode limit, plus a read cursor"""

    def __init__(self, limit: int):
        seq = [0, 1]
        while seq[-1] < limit:
            seq.append(seq[-1] + seq[-2])
        self.sequence = tuple(seq)
        self.index = 0

    def __repr__(self) -> str:
        return f'<{self.__class__.__name__}[index={self.index}, next={self.next_threshold}]>'

    @property
    def next_threshold(self) -> Optional[int]:
        try:
            return self.sequence[self.index]
        except IndexError:
            return None

    @property
    def exhausted(self) -> bool:
        return self.index >= len(self.sequence)

    def advance(self):
        self.index += 1

    def trigger_episodes(self, max_episodes: int) -> list[int]:
        """The episodes on which a fresh copy of this schedule would fire, for episodes 1..max_episodes"""
        sched = FibSchedule(0)
        sched.sequence = self.sequence
        triggers = []
        for episode in range(1, max_episodes + 1):
            if should_update_phi(episode, sched):
                sched.advance()
                triggers.append(episode)
        return triggers


def should_update_phi(episode: int, schedule: FibSchedule) -> bool:
    """True iff ``episode >= F[index]``; the caller advances the cursor by one after each trigger"""
    return not schedule.exhausted and episode >= schedule.sequence[schedule.index]


def stop_condition_met(env: EnvId, config: RpclConfig, episode: int, train_log: 'TrainLog') -> bool:
    """
    True once more than ``min_episodes`` episodes have completed and the moving-average episode length over the last
    ``stop_window`` episodes crosses the threshold for the env (at least it for CartPole, at most it for MountainCar).
    """
    if episode <= config.min_episodes:
        return False
    if (average := train_log.moving_average(config.stop_window)) is None:
        return False
    comparison, threshold = STOP_THRESHOLDS[env.value]
    if config.stop_threshold is not None:
        threshold = config.stop_threshold
    return average >= threshold if comparison == '>=' else average <= threshold


# region Training Log


@dataclass(frozen=True)
class EpisodeRecord:
    episode: int
    steps: int
    learned_return: float
    rho: float
    phi_updated: bool
    demos_total: int

    def to_row(self) -> str:
        updated = 'true' if self.phi_updated else 'false'
        return f'{self.episode},{self.steps},{self.learned_return!r},{self.rho!r},{updated},{self.demos_total}'


class TrainLog:
    COLUMNS = ('episode', 'steps', 'learned_return', 'rho', 'phi_updated', 'demos_total')

    def __init__(self):
        self.records: list[EpisodeRecord] = []
        self._stream_path: Optional[Path] = None

    def __repr__(self) -> str:
        return f'<{self.__class__.__name__}[episodes={len(self)}]>'

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[EpisodeRecord]:
        return iter(self.records)

    def __getitem__(self, index: int) -> EpisodeRecord:
        return self.records[index]

    def __eq__(self, other) -> bool:
        if not isinstance(other, TrainLog):
            return NotImplemented
        return self.records == other.records

    __hash__ = None

    def append(self, record: EpisodeRecord):
        self.records.append(record)
        if self._stream_path is not None:
            with self._stream_path.open('a', encoding='utf-8', newline='\n') as f:
                f.write(record.to_row() + '\n')

    @property
    def phi_episodes(self) -> list[int]:
        return [rec.episode for rec in self.records if rec.phi_updated]

    @property
    def demos_total(self) -> int:
        return self.records[-1].demos_total if self.records else 0

    def moving_average(self, window: int) -> Optional[float]:
        """Mean episode length over the last ``window`` episodes, or None before that many have completed"""
        if len(self.records) < window:
            return None
        return float(np.mean([rec.steps for rec in self.records[-window:]]))

    def to_csv(self) -> str:
        return '\n'.join([','.join(self.COLUMNS), *(rec.to_row() for rec in self.records)]) + '\n'

    def write_csv(self, path: Union[str, Path]):
        with atomic_write(path) as f:
            f.write(self.to_csv())

    def stream_to(self, path: Union[str, Path]):
        """Write the records so far to the given CSV file, then append each new record to it as it is added"""
        self.write_csv(path)
        self._stream_path = Path(path)


# endregion


@dataclass(frozen=True)
class PhiUpdateResult:
    demos: int
    rho: float


@dataclass
class TrainResult:
    policy: PolicyModel
    reward: RewardModel
    critic: CriticModel
    log: TrainLog
    stopped_early: bool = False

    def __iter__(self):
        return iter((self.policy, self.reward, self.critic, self.log))


class RpclTrainer:
    """
    Holds the evolving policy, critic, reward model, inventory and schedule for one training run.  Each episode:
    roll out the policy, update the actor and critic under the current learned reward, store the trajectory, and
    run a reward update block when the schedule fires.
    """

    def __init__(self, config: RpclConfig, env: EnvId, expert: Demonstrator):
        expert.require(env)
        self.config = config
        self.env = env
        self.expert = expert
        init_rng = SeedStream(config.seed).generator()
        policy = PolicyModel.create(env, config.policy_hidden, init_rng)
        self.reward = RewardModel.create(env.state_dim, config.reward_hidden, init_rng)
        critic = CriticModel.create(env.state_dim, config.critic_hidden, init_rng)
        self.learner = ActorCriticLearner(
            policy,
            critic,
            config.gamma,
            make_optimizer(config.optimizer, config.theta_lr),
            make_optimizer(config.optimizer, config.critic_lr),
            config.normalize_advantages,
        )
        self.phi_optimizer = make_optimizer(config.optimizer, config.phi_lr)
        self.inventory = SampleInventory(config.inventory_capacity)
        self.schedule = FibSchedule(config.max_episodes)
        self.rho = config.rho
        self.demos_total = 0
        self.episode = 0
        self.log = TrainLog()

    def __repr__(self) -> str:
        return f'<{self.__class__.__name__}[{self.env.value}, episode={self.episode}, rho={self.rho:.6f}]>'

    @property
    def policy(self) -> PolicyModel:
        return self.learner.policy

    @property
    def critic(self) -> CriticModel:
        return self.learner.critic

    def stop_condition_met(self) -> bool:
        return stop_condition_met(self.env, self.config, self.episode, self.log)

    def run_episode(self) -> EpisodeRecord:
        self.episode += 1
        cfg = self.config
        rng = make_rng(cfg.seed, EPISODE_STREAM, self.episode)
        trajectory = rollout(self.env, self.policy, rng, cfg.max_steps)
        learned_return = discounted_return(self.reward, trajectory, cfg.gamma)
        if not np.isfinite(learned_return):
            raise NonFiniteGradientError('learned return', 1, 1)
        self.learner.update(trajectory, self.reward)
        self.inventory.add(trajectory)

        phi_updated = False
        if should_update_phi(self.episode, self.schedule):
            self.schedule.advance()
            try:
                self.phi_update_block(make_rng(cfg.seed, PHI_STREAM, self.episode))
            except DemonstratorError as e:
                log.warning(f'Skipping the reward update at episode {self.episode}: {e}')
            else:
                phi_updated = True

        record = EpisodeRecord(self.episode, trajectory.length, learned_return, self.rho, phi_updated, self.demos_total)
        self.log.append(record)
        return record

    def phi_update_block(self, rng: np.random.Generator) -> PhiUpdateResult:
        """
        Run K reward updates against the frozen current policy, then decay rho once.  A block with K=0 changes
        nothing.  If an update fails, the reward model and its optimizer state are restored to their values from
        before the block.
        """
        if not self.inventory:
            raise EmptyInventoryError('A reward update requires at least one stored trajectory')
        cfg = self.config
        frozen = self.policy.copy()
        start_reward, start_optimizer = self.reward, copy.deepcopy(self.phi_optimizer)
        demos = 0
        try:
            for _ in range(cfg.phi_updates):
                sampled = self.inventory.sample(cfg.sample_count, rng)
                s0 = reset(self.env, rng)
                tau_plus = rollout(self.env, frozen, rng, cfg.max_steps, s0)
                tau_star = self.expert.demonstrate(self.env, s0, cfg.max_steps).trajectory
                demos += 1
                grad = phi_gradient(
                    self.reward,
                    sampled,
                    tau_plus,
                    tau_star,
                    cfg.gamma,
                    cfg.gammas,
                    self.rho,
                    stereo_return=cfg.stereo_return,
                    weight_decay=cfg.weight_decay,
                )
                self.reward = RewardModel(self.phi_optimizer.step(self.reward.net, grad, Direction.DESCENT))
        except RpclException:
            self.reward, self.phi_optimizer = start_reward, start_optimizer
            raise
        finally:
            self.demos_total += demos

        if cfg.phi_updates:
            self.rho *= cfg.eta
        log.debug(f'Reward update block at episode {self.episode}: {demos=}, rho={self.rho!r}')
        return PhiUpdateResult(demos, self.rho)

    def save_checkpoint(self, out_dir: Union[str, Path]):
        out_dir = Path(out_dir)
        self.policy.save(out_dir.joinpath('policy.json'))
        self.reward.net.save(out_dir.joinpath('reward.json'))
        self.critic.net.save(out_dir.joinpath('critic.json'))
        self.log.write_csv(out_dir.joinpath('train_log.csv'))
        log.debug(f'Saved checkpoint for episode {self.episode} to {out_dir.as_posix()}')

    def train(self, out_dir: Union[str, Path, None] = None) -> TrainResult:
        cfg = self.config
        log.info(f'Training on {self.env.value} for up to {cfg.max_episodes} episodes with expert={self.expert}')
        if out_dir:
            save_config(Path(out_dir).joinpath('config.cfg'), cfg)
            self.log.stream_to(Path(out_dir).joinpath('train_log.csv'))

        stopped_early = False
        try:
            while self.episode < cfg.max_episodes:
                record = self.run_episode()
                if self.episode % cfg.log_every == 0:
                    average = self.log.moving_average(min(cfg.stop_window, len(self.log)))
                    log.info(
                        f'Episode {record.episode}: steps={record.steps} avg={average:.1f} rho={record.rho:.6f}'
                        f' demos={record.demos_total}'
                    )
                if out_dir and cfg.checkpoint_every and self.episode % cfg.checkpoint_every == 0:
                    self.save_checkpoint(out_dir)
                if self.stop_condition_met():
                    log.info(f'Stop condition met after {self.episode} episodes')
                    stopped_early = True
                    break
        except RpclException as e:
            log.error(f'Aborting training at episode {self.episode}: {e}', extra={'color': 'red'})
            raise TrainingAborted(str(e), self.log) from e

        if out_dir:
            self.save_checkpoint(out_dir)
        log.info(f'Finished after {self.episode} episodes; demonstrations used: {self.demos_total}')
        return TrainResult(self.policy, self.reward, self.critic, self.log, stopped_early)


def train(
    config: RpclConfig, env: EnvId, expert: Demonstrator, out_dir: Union[str, Path, None] = None
) -> TrainResult:
    return RpclTrainer(config, env, expert).train(out_dir)
