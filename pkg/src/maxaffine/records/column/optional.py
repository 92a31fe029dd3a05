# Copyright (c) 2025 Andreas Stenius
# This software is licensed under the MIT License.
# See the LICENSE file for details.
from __future__ import annotations

from typing import Any, get_args

from maxaffine.records.base import Column, IncompatibleColumnTypeError


class OptionalColumn(Column):
    """A `T | None` column, where `None` is written as an empty cell."""

    @classmethod
    def _create(cls, column_type: type, **kwargs) -> Column:
        if cls._is_optional(column_type):
            return cls(column_type, **kwargs)
        return super()._create(column_type, **kwargs)

    def __init__(self, column_type: Any, **kwargs) -> None:
        members = [arg for arg in get_args(column_type) if arg is not type(None)]
        if len(members) != 1:
            raise IncompatibleColumnTypeError(f"maxaffine: ambiguous optional {column_type=}")
        self.member_column = Column._create_column(members[0], name=kwargs.get("name"))
        super().__init__(self.member_column.type, **kwargs)

    def format_value(self, value: Any) -> str:
        if value is None:
            return ""
        return self.member_column.format_value(value)

    def parse_value(self, text: str) -> Any:
        if text == "":
            return None
        return self.member_column.parse_value(text)
