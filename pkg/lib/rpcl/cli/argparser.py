"""
:author: Doug Skrypa
"""

import sys
from argparse import ArgumentParser, Namespace, _SubParsersAction
from typing import NoReturn, Optional, Sequence

__all__ = ['ArgParser', 'USAGE_ERROR']

USAGE_ERROR = 1


class ArgParser(ArgumentParser):
    """ArgumentParser with subcommand helpers; usage errors exit with :data:`USAGE_ERROR`"""

    def _subparser_groups(self) -> list[_SubParsersAction]:
        if (group := self._subparsers) is None:
            return []
        return [action for action in group._group_actions if isinstance(action, _SubParsersAction)]

    def _get_subparser(self, dest: str) -> Optional[_SubParsersAction]:
        return next((action for action in self._subparser_groups() if action.dest == dest), None)

    def add_subparser(self, dest: str, name: str, help_desc: str = None, **kwargs) -> 'ArgParser':
        """
        Add a subcommand, creating the subcommand group for ``dest`` on first use.

        :param dest: The subparser group destination for this subparser
        :param name: The subcommand name
        :param help_desc: Used as both the help text and the description unless either is given in ``kwargs``
        :param kwargs: Keyword args to pass to :meth:`add_parser`
        :return: The new subcommand parser
        """
        group = self._get_subparser(dest) or self.add_subparsers(dest=dest, title='subcommands')
        kwargs.setdefault('help', help_desc)
        kwargs.setdefault('description', help_desc)
        return group.add_parser(name, **kwargs)

    def get_subparsers(self) -> dict[str, _SubParsersAction]:
        return {action.dest: action for action in self._subparser_groups()}

    def add_common_arg(self, *args, **kwargs):
        """Add an argument to every subcommand parser, or to this parser when it has no subcommands"""
        commands = {id(p): p for group in self._subparser_groups() for p in group.choices.values()}
        for command_parser in commands.values() or (self,):
            command_parser.add_argument(*args, **kwargs)

    def parse_args(self, args: Optional[Sequence[str]] = None, namespace=None) -> Namespace:
        parsed = super().parse_args(args, namespace)
        if missing := [dest for dest in self.get_subparsers() if getattr(parsed, dest, None) is None]:
            self.error(f'missing required subcommand: {missing[0]} (use --help for more details)')
        return parsed

    def error(self, message: str) -> NoReturn:
        self.print_usage(sys.stderr)
        self.exit(USAGE_ERROR, f'{self.prog}: error: {message}\n')
