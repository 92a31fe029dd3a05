# Copyright (c) 2025 Andreas Stenius
# This software is licensed under the MIT License.
# See the LICENSE file for details.
import pytest

from maxaffine.records.column.primitive import float64, log10, millis


@pytest.mark.parametrize(
    "atype, column_type_name",
    [
        (float64, "PrimitiveColumn__float__r"),
        (log10, "PrimitiveColumn__float___6f"),
        (millis, "PrimitiveColumn__float___3f"),
    ],
)
def test_primitive_column_class_name(atype: type, column_type_name: str) -> None:
    column_type = atype.__metadata__[0]
    assert column_type_name == column_type.__name__
