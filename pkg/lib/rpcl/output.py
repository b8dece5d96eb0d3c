"""
Output formatting utilities.

:author: Doug Skrypa
"""

import csv
import json
import logging
import sys
from enum import Enum
from io import StringIO
from pathlib import Path
from shutil import get_terminal_size
from typing import Union, TextIO, Optional, Mapping, Any, Sequence, Iterable

import numpy as np
import yaml
from colored import stylize, fg as _fg
try:
    from wcwidth import wcswidth
except ImportError:
    wcswidth = len

__all__ = ['Column', 'SimpleColumn', 'Table', 'colored', 'Printer', 'format_value', 'yaml_dump']
log = logging.getLogger(__name__)

Row = Mapping[str, Any]


def colored(text, fg=None, do_color: bool = True):
    return stylize(text, _fg(fg)) if do_color and fg is not None else text


def format_value(value, precision: int = 6) -> str:
    if value is None:
        return ''
    elif isinstance(value, (bool, np.bool_)):
        return 'true' if value else 'false'
    elif isinstance(value, (float, np.floating)):
        return f'{value:.{precision}g}'
    elif isinstance(value, Enum):
        return str(value.value)
    return str(value)


def _mono_width(text: str) -> int:
    return max(0, wcswidth(text))


def _is_number(value) -> bool:
    return isinstance(value, (int, float, np.number)) and not isinstance(value, bool)


# region Table Formatting


class Column:
    """
    :param key: Row key associated with this column
    :param title: Column header (defaults to the key)
    :param width: Minimum width of this column; widened to fit the title
    :param align: String formatting alignment indicator (default: left; example: '>' for right)
    """

    __slots__ = ('key', 'title', 'width', 'align')

    def __init__(self, key: str, title: str = None, width: int = 0, align: str = ''):
        self.key = key
        self.title = str(key if title is None else title)
        self.width = max(width, _mono_width(self.title))
        self.align = align

    def __repr__(self) -> str:
        return f'<{self.__class__.__name__}({self.key!r}, {self.title!r}, width={self.width})>'

    @classmethod
    def fit(cls, key: str, rows: Sequence[Row], title: str = None) -> 'Column':
        """A column wide enough for every value of ``key`` in ``rows``; right-aligned when all values are numbers"""
        values = [row.get(key) for row in rows]
        width = max((_mono_width(format_value(v)) for v in values), default=0)
        numeric = bool(values) and all(_is_number(v) or v is None for v in values)
        return cls(key, title, width, '>' if numeric else '')

    def format(self, value) -> str:
        text = format_value(value)
        padding = ' ' * max(0, self.width - _mono_width(text))
        return padding + text if self.align == '>' else text + padding


class SimpleColumn(Column):
    """A column whose title is also its row key"""

    __slots__ = ()

    def __init__(self, title: str, width: int = 0, align: str = ''):
        super().__init__(title, title, width, align)


class Table:
    def __init__(self, *columns: Column, file: Optional[TextIO] = None):
        self.columns = list(columns)
        self._stdout = file is None
        self._file = sys.stdout if file is None else file

    def __getitem__(self, key: str) -> Column:
        for column in self.columns:
            if column.key == key:
                return column
        raise KeyError(key)

    @classmethod
    def from_rows(cls, rows: Sequence[Row], keys: Optional[Sequence[str]] = None, **kwargs) -> 'Table':
        keys = list(keys or (rows[0].keys() if rows else ()))
        return cls(*(Column.fit(key, rows) for key in keys), **kwargs)

    @property
    def header_row(self) -> str:
        return '  '.join(c.format(c.title) if c.align != '>' else c.title.rjust(c.width) for c in self.columns).rstrip()

    def header_bar(self, char: str = '-') -> str:
        bar = char * len(self.header_row)
        return bar[: get_terminal_size().columns] if self._stdout else bar

    def format_row(self, row: Row) -> str:
        return '  '.join(c.format(row.get(c.key)) for c in self.columns).rstrip()

    def format_rows(self, rows: Iterable[Row], header: bool = True) -> list[str]:
        lines = [self.header_row, self.header_bar()] if header else []
        lines.extend(self.format_row(row) for row in rows)
        return lines

    def print_rows(self, rows: Iterable[Row], header: bool = True, color: Union[str, int, None] = None):
        try:
            for line in self.format_rows(rows, header):
                self._file.write(colored(line, color) + '\n')
            self._file.flush()
        except OSError as e:
            if e.errno == 32:  # broken pipe
                return
            raise


# endregion


# region Serialization


class Printer:
    formats = ('table', 'yaml', 'json', 'json-pretty', 'csv')

    def __init__(self, output_format: str = 'table'):
        if output_format not in self.formats:
            raise ValueError(f'Invalid output format={output_format!r} (valid options: {", ".join(self.formats)})')
        self.output_format = output_format

    def pformat(self, content) -> str:
        if self.output_format == 'json':
            return json.dumps(content, cls=PermissiveJSONEncoder, ensure_ascii=False)
        elif self.output_format == 'json-pretty':
            return json.dumps(content, sort_keys=True, indent=4, cls=PermissiveJSONEncoder, ensure_ascii=False)
        elif self.output_format == 'yaml':
            return yaml_dump(content)
        elif self.output_format == 'csv':
            return _csv_dump(_as_rows(content))
        rows = _as_rows(content)
        return '\n'.join(Table.from_rows(rows, file=StringIO()).format_rows(rows))

    def pprint(self, content, color: Union[str, int, None] = None):
        if self.output_format == 'table':
            rows = _as_rows(content)
            Table.from_rows(rows).print_rows(rows, color=color)
        else:
            print(self.pformat(content))


def _as_rows(content) -> list[Row]:
    if isinstance(content, Mapping):
        return [content]
    rows = list(content)
    if not all(isinstance(row, Mapping) for row in rows):
        raise ValueError('Table and csv output require a mapping or a sequence of mappings')
    return rows


def _csv_dump(rows: Sequence[Row]) -> str:
    if not rows:
        return ''
    sio = StringIO()
    writer = csv.writer(sio, lineterminator='\n')
    keys = list(rows[0].keys())
    writer.writerow(keys)
    for row in rows:
        writer.writerow(['' if (v := row.get(k)) is None else repr(v) if isinstance(v, float) else v for k in keys])
    return sio.getvalue().rstrip('\n')


def _to_plain(obj):
    if isinstance(obj, Mapping):
        return {_to_plain(k): _to_plain(v) for k, v in obj.items()}
    elif isinstance(obj, (list, tuple, set, np.ndarray)):
        return [_to_plain(v) for v in (sorted(obj) if isinstance(obj, set) else obj)]
    elif isinstance(obj, np.generic):
        return obj.item()
    elif isinstance(obj, Enum):
        return obj.value
    elif isinstance(obj, Path):
        return obj.as_posix()
    return obj


class PermissiveJSONEncoder(json.JSONEncoder):
    def default(self, o):
        if isinstance(o, (set, np.ndarray, np.generic, Enum, Path)):
            return _to_plain(o)
        elif hasattr(o, 'as_dict'):
            return o.as_dict()
        return super().default(o)


class IndentedYamlDumper(yaml.SafeDumper):
    """Indents lists that are nested in dicts"""

    def increase_indent(self, flow=False, indentless=False):
        return super().increase_indent(flow, False)


def yaml_dump(data, **kwargs) -> str:
    kwargs.setdefault('explicit_start', True)
    kwargs.setdefault('width', float('inf'))
    kwargs.setdefault('allow_unicode', True)
    kwargs.setdefault('default_flow_style', False)
    kwargs.setdefault('sort_keys', False)
    formatted = yaml.dump(_to_plain(data), Dumper=IndentedYamlDumper, **kwargs)
    if formatted.endswith('...\n'):
        formatted = formatted[:-4]
    return formatted.rstrip('\n')


# endregion
