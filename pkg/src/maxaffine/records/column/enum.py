# Copyright (c) 2025 Andreas Stenius
# This software is licensed under the MIT License.
# See the LICENSE file for details.
from __future__ import annotations

from enum import Enum
from typing import Any

from maxaffine.records.base import Column


class EnumColumn(Column):
    @classmethod
    def _create(cls, column_type: type, **kwargs) -> Column:
        if isinstance(column_type, type) and issubclass(column_type, Enum):
            return cls(column_type, **kwargs)
        else:
            return super()._create(column_type, **kwargs)

    def __init__(self, column_type: type[Enum], **kwargs) -> None:
        self.member_column = Column._create_column(type(next(iter(column_type)).value))
        super().__init__(column_type, **kwargs)

    def format_value(self, value: Any) -> str:
        assert isinstance(value, self.type)
        return self.member_column.format_value(value.value)

    def parse_value(self, text: str) -> Any:
        return self.type(self.member_column.parse_value(text))
