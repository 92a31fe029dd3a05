# Copyright (c) 2025 Andreas Stenius
# This software is licensed under the MIT License.
# See the LICENSE file for details.
from __future__ import annotations

import types
from abc import ABC, abstractmethod
from collections.abc import Mapping
from typing import Annotated, Any, Union, get_args, get_origin

from typing_extensions import Self


class IncompatibleColumnTypeError(TypeError):
    pass


class Column(ABC):
    """One CSV column of a `csvrecord` class.

    A column knows its attribute name, the header text written to the file and how to turn a
    value into cell text and back again.
    """

    name: str | None
    header: str | None
    type: type

    def __init__(self, column_type: type, **kwargs) -> None:
        self.name = kwargs.get("name")
        self.header = kwargs.get("header")
        self.type = column_type

    @property
    def title(self) -> str:
        title = self.header or self.name
        assert title, f"{self} has neither header nor name"
        return title

    def configure(self, header: str | None = None, **kwargs) -> Column:
        """Column specific options.

        Provided using field metadata with the `maxaffine.records.column` function.

            from maxaffine.records import column, csvrecord

            @csvrecord
            class Row:
                rel_error: float | None = column(header="rel_error_log10")
        """
        if header is not None:
            self.header = header
        if kwargs:
            raise TypeError(f"maxaffine: unknown column options for {self.name!r}: {kwargs}")
        return self

    @abstractmethod
    def format_value(self, value: Any) -> str:
        """Return the cell text for `value`."""

    @abstractmethod
    def parse_value(self, text: str) -> Any:
        """Return the value encoded in the cell text."""

    @classmethod
    def _create(cls: type[Self], column_type: type, **kwargs) -> Self:
        raise IncompatibleColumnTypeError(
            f"this may be overridden in a subclass to add support for {column_type=} columns."
        )

    def _register(
        self, name: str, columns: dict[str, Column], column_meta: dict[str, dict]
    ) -> None:
        assert self.name in [None, name]
        self.name = name
        columns[self.name] = self
        if meta := column_meta.get(self.name):
            self.configure(**meta)

    def __repr__(self) -> str:
        name = self.name
        header = self.header
        column_type = self.type
        return f"<{self.__class__.__name__} {name=} {header=} {column_type=}>"

    @staticmethod
    def _is_optional(column_type: Any) -> bool:
        origin = get_origin(column_type)
        return origin in (Union, types.UnionType) and type(None) in get_args(column_type)

    @classmethod
    def _create_column(cls: type[Self], column_type: Any = None, **kwargs) -> Self:
        if column_type is None:
            column_type = cls

        if get_origin(column_type) is Annotated:
            for meta in column_type.__metadata__:
                if isinstance(meta, type) and issubclass(meta, Column):
                    return meta(column_type.__origin__, **kwargs)
            return cls._create_column(column_type.__origin__, **kwargs)

        if get_origin(column_type) is not None and not cls._is_optional(column_type):
            raise NotImplementedError(f"generic column types not handled, got: {column_type}")

        # Try all Column subclasses if there's an implementation for this column type.
        for sub in _all_subclasses(Column):
            try:
                return sub._create(column_type, **kwargs)
            except IncompatibleColumnTypeError:
                pass

        raise TypeError(f"maxaffine: no column type implementation for {column_type=}")

    __specialized_classes__: dict[str, type] = {}

    @classmethod
    def _create_specialized_class(cls, name: str, ns: Mapping[str, Any]) -> type:
        if name not in Column.__specialized_classes__:
            Column.__specialized_classes__[name] = type(name, (cls,), dict(ns))
        return Column.__specialized_classes__[name]


def _all_subclasses(cls: type) -> list[type]:
    subs = []
    for sub in cls.__subclasses__():
        subs.append(sub)
        subs.extend(_all_subclasses(sub))
    return subs
