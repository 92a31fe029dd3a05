# Copyright (c) 2025 Andreas Stenius
# This software is licensed under the MIT License.
# See the LICENSE file for details.
"""Fixed column order CSV rows for dataclasses."""
from maxaffine.records.base import Column, IncompatibleColumnTypeError
from maxaffine.records.column.enum import EnumColumn  # noqa: F401
from maxaffine.records.column.meta import column
from maxaffine.records.column.optional import OptionalColumn  # noqa: F401
from maxaffine.records.column.primitive import float64, log10, millis
from maxaffine.records.decorator import (
    columns,
    csvrecord,
    is_csvrecord,
    load_records,
    read_records,
    save_records,
    write_records,
)

__all__ = [
    "Column",
    "IncompatibleColumnTypeError",
    "column",
    "columns",
    "csvrecord",
    "float64",
    "is_csvrecord",
    "load_records",
    "log10",
    "millis",
    "read_records",
    "save_records",
    "write_records",
]
