"""
Command line interface: training, evaluation, demonstration recording, ablation, exports, and gradient checks.

:author: Doug Skrypa
"""

from __future__ import annotations

import logging
import os
import sys
from argparse import Namespace
from pathlib import Path
from typing import TYPE_CHECKING, Optional, Sequence

from ..__version__ import __version__
from ..config import RpclConfig, RunDescriptor, load_config, default_config_path
from ..constants import ABLATION_SETS
from ..exceptions import ConfigError, DemonstratorError
from ..output import Printer, colored
from ..utils import atomic_write, format_duration
from .argparser import ArgParser
from .wrapper import wrap_main

if TYPE_CHECKING:
    from ..envsim import ActionSource

__all__ = ['parser', 'run', 'main']
log = logging.getLogger(__name__)

SUITE_NAMES = ('reward', 'categorical', 'gaussian', 'critic')
VERBOSE_FORMAT = '%(asctime)s %(levelname)s %(name)s %(lineno)d %(message)s'


def parser() -> ArgParser:
    _parser = ArgParser(prog='rpcl', description='Reward and Policy Concurrent Learning')
    _parser.add_argument('--version', action='version', version=f'%(prog)s {__version__}')

    train_parser = _parser.add_subparser('command', 'train', 'Train a policy and reward model from demonstrations')
    train_parser.add_argument('--expert', '-x', help='Demonstrator: lqr, pretrained, or a .json/.jsonl path')

    eval_parser = _parser.add_subparser('command', 'eval', 'Evaluate a policy checkpoint over random initial states')
    eval_parser.add_argument('policy', help='Path to a policy checkpoint (policy.json)')
    eval_parser.add_argument('--trials', '-n', type=int, help='Number of trials (default: from config)')
    eval_parser.add_argument('--stochastic', '-S', action='store_true', help='Sample actions (default: greedy)')

    cmp_parser = _parser.add_subparser('command', 'compare', 'Compare policies and the expert on shared initial states')
    cmp_parser.add_argument('policies', nargs='*', help='Policy checkpoints, as PATH or NAME=PATH')
    cmp_parser.add_argument('--expert', '-x', help='Demonstrator: lqr, pretrained, or a .json path')
    cmp_parser.add_argument('--no_expert', '-N', action='store_true', help='Do not include the expert')
    cmp_parser.add_argument('--trials', '-n', type=int, help='Number of trials (default: from config)')

    rec_parser = _parser.add_subparser('command', 'record-demos', 'Record expert demonstrations to a JSON lines file')
    rec_parser.add_argument('--expert', '-x', help='Demonstrator: lqr, pretrained, or a .json path')
    rec_parser.add_argument('--count', '-n', type=int, default=10, help='Number to record (default: %(default)s)')

    _parser.add_subparser('command', 'train-expert', 'Pretrain an expert policy on the environment reward')

    abl_parser = _parser.add_subparser('command', 'ablate', 'Train and evaluate once per discount set')
    abl_parser.add_argument('--sets', nargs='+', default=ABLATION_SETS, help='Comma-separated discount sets')
    abl_parser.add_argument('--expert', '-x', help='Demonstrator: lqr, pretrained, or a .json/.jsonl path')
    abl_parser.add_argument('--trials', '-n', type=int, default=100, help='Trials per set (default: %(default)s)')

    srf_parser = _parser.add_subparser('command', 'export-reward-surface', 'Export a learned reward over a 2D grid')
    srf_parser.add_argument('reward', help='Path to a reward model checkpoint (reward.json)')
    srf_parser.add_argument('--dims', '-d', type=int, nargs=2, default=(0, 1), help='State dimensions for the x/y axes')
    srf_parser.add_argument('--fixed', type=float, nargs='+', help='Values for the remaining dimensions (default: 0)')
    srf_parser.add_argument('--resolution', '-r', type=int, default=50, help='Points per axis (default: %(default)s)')

    bc_parser = _parser.add_subparser('command', 'bc-train', 'Train a behavior cloning baseline from demonstrations')
    bc_parser.add_argument('demos', help='Path to a demonstration file (.jsonl)')
    bc_parser.add_argument('--epochs', type=int, default=500, help='Training epochs (default: %(default)s)')
    bc_parser.add_argument('--lr', type=float, default=0.01, help='Learning rate (default: %(default)s)')
    bc_parser.add_argument('--batch_size', '-b', type=int, help='Minibatch size (default: all pairs)')

    gc_parser = _parser.add_subparser('command', 'gradcheck', 'Compare analytic gradients to finite differences')
    gc_parser.add_argument('--suite', nargs='+', choices=SUITE_NAMES, help='Suites to run (default: all)')
    gc_parser.add_argument('--instances', '-n', type=int, default=100, help='Per suite (default: %(default)s)')

    _parser.add_common_arg('--config', '-c', metavar='PATH', help='Config file (default: the shipped config for --env)')
    _parser.add_common_arg('--env', '-e', help='Environment (cartpole, mountaincar, mountaincar_continuous)')
    _parser.add_common_arg('--out', '-o', metavar='PATH', help='Output directory, or file for single-artifact commands')
    _parser.add_common_arg('--seed', '-s', type=int, help='Root seed override')
    _parser.add_common_arg('--workers', '-w', type=int, help='Evaluation worker processes (default: from config)')
    _parser.add_common_arg('--format', '-f', default='table', choices=Printer.formats, help='Summary output format')
    _parser.add_common_arg('--verbose', '-v', action='count', default=0, help='Increase logging verbosity')
    return _parser


def main():
    sys.exit(run())


def run(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = parser().parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else 0
    _init_logging(args.verbose or _env_verbosity())
    return run_command(args)


@wrap_main
def run_command(args: Namespace) -> Optional[int]:
    handler = COMMANDS[args.command]
    return handler(args)


# region Logging


class ColorFormatter(logging.Formatter):
    """Colors messages logged with ``extra={'color': ...}``"""

    def format(self, record: logging.LogRecord) -> str:
        formatted = super().format(record)
        if color := getattr(record, 'color', None):
            return colored(formatted, color)
        return formatted


def _env_verbosity() -> int:
    raw = os.environ.get('RPCL_VERBOSE', '').strip().lower()
    if not raw or raw in ('0', 'false', 'no', 'off'):
        return 0
    return int(raw) if raw.isdigit() else 1


def _init_logging(verbose: int):
    handler = logging.StreamHandler()
    handler.setFormatter(ColorFormatter(VERBOSE_FORMAT if verbose else '%(message)s'))
    logging.basicConfig(level=logging.DEBUG if verbose else logging.INFO, handlers=[handler])


# endregion


# region Helpers


def _load(args: Namespace, trials: Optional[int] = None) -> tuple[RpclConfig, RunDescriptor]:
    """Load the run config, then apply command line overrides"""
    if args.config:
        config, run_info = load_config(args.config, args.env)
    elif args.env:
        try:
            path = default_config_path(args.env)
        except ValueError as e:
            raise ConfigError('env', str(e)) from e
        config, run_info = load_config(path, args.env)
    else:
        raise ConfigError('env', 'either --env or --config is required')

    if args.seed is not None:
        config = config.replace(seed=args.seed)
    run_info = RunDescriptor(
        run_info.env,
        expert=getattr(args, 'expert', None) or run_info.expert,
        out_dir=args.out or run_info.out_dir,
        trials=trials or run_info.trials,
        workers=args.workers or run_info.workers,
    )
    return config, run_info


def _require_out(run_info: RunDescriptor, what: str) -> Path:
    if run_info.out_dir is None:
        raise ConfigError('out_dir', f'--out is required to save {what}')
    return run_info.out_dir


def _expert_source(run_info: RunDescriptor) -> ActionSource:
    from ..experts import load_expert

    expert = load_expert(run_info.env, run_info.expert)
    if (source := expert.action_source()) is None:
        raise DemonstratorError(f'Expert {run_info.expert!r} replays recordings and cannot act from arbitrary states')
    return source


def _parse_contender(spec: str) -> tuple[str, Path]:
    name, sep, path = spec.partition('=')
    if not sep:
        return Path(spec).stem, Path(spec)
    return name, Path(path)


def _write_eval(result, out_dir: Optional[Path]):
    if out_dir is not None:
        result.write_trials_csv(out_dir.joinpath('trials.csv'))
        result.write_summary_csv(out_dir.joinpath('summary.csv'))
        log.info(f'Saved evaluation results to {out_dir.as_posix()}')


# endregion


# region Commands


def train_policy(args: Namespace):
    from ..core import train
    from ..envsim import FIREWALL
    from ..experts import load_expert

    config, run_info = _load(args)
    out_dir = _require_out(run_info, 'checkpoints')
    expert = load_expert(run_info.env, run_info.expert)
    log.info(f'Training {run_info.env.value} with seed={config.seed} -> {out_dir.as_posix()}')
    result = train(config, run_info.env, expert, out_dir)
    train_log = result.log
    Printer(args.format).pprint(
        {
            'env': run_info.env.value,
            'episodes': len(train_log),
            'stopped_early': result.stopped_early,
            'demonstrations': train_log.demos_total,
            'avg_steps': train_log.moving_average(min(config.stop_window, len(train_log))) if train_log else None,
            'env_reward_reads': FIREWALL.count,
        }
    )


def eval_policy(args: Namespace):
    from ..actorcritic import PolicyModel, GreedyPolicy
    from ..evalharness import paired_eval

    config, run_info = _load(args, args.trials)
    policy = PolicyModel.load(args.policy)
    source = policy if args.stochastic else GreedyPolicy(policy)
    contenders = [('policy', source)]
    result = paired_eval(contenders, run_info.env, run_info.trials, config.seed, config.max_steps, run_info.workers)
    _write_eval(result, run_info.out_dir)
    Printer(args.format).pprint([stats.as_dict() for stats in result])


def compare_policies(args: Namespace):
    from ..actorcritic import PolicyModel, GreedyPolicy
    from ..evalharness import paired_eval

    config, run_info = _load(args, args.trials)
    contenders = [(name, GreedyPolicy(PolicyModel.load(path))) for name, path in map(_parse_contender, args.policies)]
    if not args.no_expert:
        contenders.append(('expert', _expert_source(run_info)))
    if not contenders:
        raise ConfigError('policies', 'at least one policy is required when --no_expert is specified')
    result = paired_eval(contenders, run_info.env, run_info.trials, config.seed, config.max_steps, run_info.workers)
    _write_eval(result, run_info.out_dir)
    Printer(args.format).pprint([stats.as_dict() for stats in result])


def record_demos(args: Namespace):
    from ..envsim import reset
    from ..experts import load_expert, save_demos
    from ..utils import make_rng

    config, run_info = _load(args)
    path = _require_out(run_info, 'demonstrations')
    if args.count < 1:
        raise ConfigError('count', f'{args.count} must be >= 1')
    expert = load_expert(run_info.env, run_info.expert)
    demos = [
        expert.demonstrate(run_info.env, reset(run_info.env, make_rng(config.seed, i)), config.max_steps)
        for i in range(args.count)
    ]
    save_demos(path, demos)
    lengths = [demo.trajectory.length for demo in demos]
    log.info(f'Saved {len(demos)} demonstrations to {path.as_posix()}')
    Printer(args.format).pprint(
        {'env': run_info.env.value, 'demonstrations': len(demos), 'mean_steps': sum(lengths) / len(lengths)}
    )


def train_expert_policy(args: Namespace):
    from time import monotonic
    from ..experts import train_expert, default_expert_path

    config, run_info = _load(args)
    path = run_info.out_dir or default_expert_path(run_info.env)
    start = monotonic()
    train_expert(run_info.env, config, path)
    log.info(f'Expert training took {format_duration(monotonic() - start)}')
    log.info(f'Use it with --expert {Path(path).as_posix()}')


def ablate(args: Namespace):
    from ..evalharness import ablate_discount_sets
    from ..experts import load_expert
    from ..rewardmodel import DiscountSet

    config, run_info = _load(args)
    try:
        sets = [DiscountSet.parse(value) for value in args.sets]
    except (ValueError, TypeError) as e:
        raise ConfigError('sets', str(e)) from e
    expert = load_expert(run_info.env, run_info.expert)
    results = ablate_discount_sets(run_info.env, sets, config, expert, args.trials, run_info.workers)
    rows = [row.as_dict() for row in results]
    if run_info.out_dir is not None:
        with atomic_write(run_info.out_dir.joinpath('ablation.csv')) as f:
            f.write(Printer('csv').pformat(rows) + '\n')
    Printer(args.format).pprint(rows)


def export_reward_surface(args: Namespace):
    from ..evalharness import reward_surface
    from ..net import Network
    from ..rewardmodel import RewardModel

    _, run_info = _load(args)
    path = _require_out(run_info, 'the reward grid')
    model = RewardModel(Network.load(args.reward))
    if model.net.input_dim != run_info.env.state_dim:
        raise ConfigError('env', f'{args.reward} expects {model.net.input_dim} state dims, not {run_info.env.value}')
    grid = reward_surface(model, run_info.env, *args.dims, fixed=args.fixed, resolution=args.resolution)
    grid.write_csv(path)
    log.info(f'Saved {args.resolution}x{args.resolution} reward grid to {path.as_posix()}')
    Printer(args.format).pprint(
        {
            'env': run_info.env.value,
            'dims': list(grid.dims),
            'mean': float(grid.values.mean()),
            'std': float(grid.values.std()),
            'coefficient_of_variation': grid.coefficient_of_variation,
        }
    )


def bc_train(args: Namespace):
    from ..evalharness import BehaviorCloner
    from ..experts import load_demos

    config, run_info = _load(args)
    path = _require_out(run_info, 'the cloned policy')
    demos = load_demos(args.demos)
    cloner = BehaviorCloner(
        demos, run_info.env, config.policy_hidden, args.lr, config.seed, args.batch_size, config.optimizer
    )
    cloner.fit(args.epochs)
    cloner.policy.save(path)
    log.info(f'Saved behavior cloning policy to {path.as_posix()}')
    summary = {'env': run_info.env.value, 'pairs': len(cloner.states), 'epochs': cloner.epoch, 'loss': cloner.loss()}
    if not run_info.env.is_continuous:
        summary['agreement'] = cloner.agreement()
    Printer(args.format).pprint(summary)


def gradcheck(args: Namespace) -> int:
    from ..gradcheck import SUITES

    names = args.suite or list(SUITES)
    results = [SUITES[name](args.instances) for name in names]
    Printer(args.format).pprint([result.as_dict() for result in results])
    if failed := [result.name for result in results if not result.passed]:
        log.error(f'Gradient check failed for: {", ".join(failed)}', extra={'color': 'red'})
        return 2
    return 0


COMMANDS = {
    'train': train_policy,
    'eval': eval_policy,
    'compare': compare_policies,
    'record-demos': record_demos,
    'train-expert': train_expert_policy,
    'ablate': ablate,
    'export-reward-surface': export_reward_surface,
    'bc-train': bc_train,
    'gradcheck': gradcheck,
}

# endregion
