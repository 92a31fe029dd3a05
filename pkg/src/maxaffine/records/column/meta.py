# Copyright (c) 2025 Andreas Stenius
# This software is licensed under the MIT License.
# See the LICENSE file for details.
from collections.abc import Mapping
from dataclasses import Field as DataclassField
from dataclasses import field as dataclass_field
from typing import Any

_META_KEY = "__csvrecord_columnmeta__"


def column(header: str | None = None, **kwargs) -> Any:
    """A dataclass field carrying column options, other keywords go to `dataclasses.field`."""
    options = {} if header is None else {"header": header}
    kwargs["metadata"] = {**kwargs.get("metadata", {}), _META_KEY: options}
    return dataclass_field(**kwargs)


def get_column_metadata(field: DataclassField) -> Mapping[str, Any]:
    return field.metadata.get(_META_KEY, {})
