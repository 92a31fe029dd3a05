# Copyright (c) 2025 Andreas Stenius
# This software is licensed under the MIT License.
# See the LICENSE file for details.
from __future__ import annotations

import math
from typing import Annotated, Any

from maxaffine.records.base import Column, IncompatibleColumnTypeError


class PrimitiveColumn(Column):
    # Format spec per type, "r" is the shortest round-tripping `repr`.
    type_map = {
        int: "d",
        bool: "b",
        float: "r",
        str: "s",
    }

    def __class_getitem__(cls, arg: tuple[type, str]) -> type[PrimitiveColumn]:
        ns = dict(type_map=dict((arg,)))
        return cls._create_specialized_class(
            f"{cls.__name__}__{arg[0].__name__}__{arg[1].replace('.', '_')}", ns
        )

    @classmethod
    def _create(cls, column_type: type, **kwargs) -> Column:
        return cls(column_type, **kwargs)

    def __init__(self, column_type: type, fmt: str | None = None, **kwargs) -> None:
        try:
            self.fmt = fmt if fmt is not None else self.type_map[column_type]
        except (KeyError, TypeError) as e:
            raise IncompatibleColumnTypeError(
                f"maxaffine: {column_type=} is not compatible with {self.__class__.__name__}."
            ) from e
        super().__init__(column_type, **kwargs)

    def format_value(self, value: Any) -> str:
        if self.type is bool:
            assert isinstance(value, bool), f"{self.name}: {value=}"
            return "1" if value else "0"
        if self.type is float:
            value = float(value)
            if self.fmt == "r" or not math.isfinite(value):
                return repr(value)
            return format(value, self.fmt)
        assert isinstance(value, self.type), f"{self.name}: {value=}"
        if self.type is int:
            return format(value, self.fmt)
        return str(value)

    def parse_value(self, text: str) -> Any:
        if self.type is bool:
            return text.strip() in ("1", "true", "True")
        if self.type is str:
            return text
        return self.type(text)


float64 = Annotated[float, PrimitiveColumn[float, "r"]]
log10 = Annotated[float, PrimitiveColumn[float, ".6f"]]
millis = Annotated[float, PrimitiveColumn[float, ".3f"]]
