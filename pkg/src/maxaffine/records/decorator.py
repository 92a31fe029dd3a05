# Copyright (c) 2025 Andreas Stenius
# This software is licensed under the MIT License.
# See the LICENSE file for details.
import csv
import inspect
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from dataclasses import fields as dataclass_fields
from pathlib import Path
from typing import Any, TextIO, TypeVar

from typing_extensions import Self

from maxaffine.records.base import Column
from maxaffine.records.column.meta import get_column_metadata

_COLUMNS = "__csvrecord_columns__"

R = TypeVar("R")


def is_csvrecord(obj) -> bool:
    cls = obj if isinstance(obj, type) else type(obj)
    return hasattr(cls, _COLUMNS)


def columns(obj) -> tuple[Column, ...]:
    try:
        cols = getattr(obj, _COLUMNS)
    except AttributeError:
        raise TypeError("must be called with a csvrecord type or instance") from None

    return tuple(cols.values())


def csvrecord(cls=None, /, **kwargs):
    """Dataclass decorator adding a fixed-order CSV row representation.

    Columns follow the order of the annotated fields. The class gains `_header()`, `_to_row()`
    and `_from_row()`.
    """

    def wrap(cls):
        return _process_class(dataclass(cls, **kwargs))

    if cls is None:
        return wrap

    return wrap(cls)


def _process_class(cls):
    annotations = inspect.get_annotations(cls, eval_str=True)
    column_meta = {fld.name: dict(get_column_metadata(fld)) for fld in dataclass_fields(cls)}
    cols = dict(getattr(cls, _COLUMNS, {}))
    for name, typ in annotations.items():
        col = Column._create_column(typ, name=name)
        col._register(name, cols, column_meta)

    setattr(cls, _COLUMNS, cols)
    setattr(cls, "_header", _header)
    setattr(cls, "_to_row", _to_row)
    setattr(cls, "_from_row", _from_row)
    return cls


# csvrecord method.
@classmethod
def _header(cls) -> list[str]:
    return [col.title for col in columns(cls)]


# csvrecord method.
def _to_row(self) -> list[str]:
    return [col.format_value(getattr(self, col.name)) for col in columns(self)]


# csvrecord method.
@classmethod
def _from_row(cls: type[Self], row: Sequence[str]) -> Self:
    cols = columns(cls)
    if len(row) != len(cols):
        raise ValueError(f"maxaffine: expected {len(cols)} cells for {cls.__name__}, got {row=}")
    return cls(**{col.name: col.parse_value(text) for col, text in zip(cols, row)})


def write_records(io: TextIO, cls: type, records: Iterable[Any]) -> int:
    """Write header and rows, returning the number of rows written."""
    writer = csv.writer(io, lineterminator="\n")
    writer.writerow(cls._header())
    count = 0
    for record in records:
        assert isinstance(record, cls), f"{record=} is not a {cls.__name__}"
        writer.writerow(record._to_row())
        count += 1
    return count


def read_records(io: TextIO, cls: type[R]) -> list[R]:
    reader = csv.reader(io)
    try:
        header = next(reader)
    except StopIteration:
        raise ValueError(f"maxaffine: empty {cls.__name__} file") from None
    if header != cls._header():
        raise ValueError(f"maxaffine: unexpected header {header=}, want {cls._header()}")
    return [cls._from_row(row) for row in reader]


def save_records(path: Path, cls: type, records: Iterable[Any]) -> int:
    with open(path, "w", newline="") as io:
        return write_records(io, cls, records)


def load_records(path: Path, cls: type[R]) -> list[R]:
    with open(path, newline="") as io:
        return read_records(io, cls)
