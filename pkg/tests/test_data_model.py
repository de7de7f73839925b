import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from incomenet.data_model import (
    BINARY_SCHEMA,
    FIVE_CLASS_SCHEMA,
    BankClient,
    CallKind,
    CategorySchema,
    CdrRecord,
    categorize,
    schema_from_dict,
    schema_from_name,
    schema_to_dict,
)
from incomenet.errors import InvalidInputError


def test_binary_boundaries():
    assert categorize(54, BINARY_SCHEMA) == 1
    assert categorize(339.99, BINARY_SCHEMA) == 1
    assert categorize(340, BINARY_SCHEMA) == 2  # half-open: boundary goes up
    assert categorize(10, BINARY_SCHEMA) is None


def test_five_class_boundaries():
    expected = {53.99: None, 54: 1, 134.99: 1, 135: 2, 405: 3, 1079.5: 3, 1080: 4, 2699: 4, 2700: 5, 1e7: 5}
    for income, cat in expected.items():
        assert categorize(income, FIVE_CLASS_SCHEMA) == cat


def test_categorize_rejects_bad_income():
    for bad in (-1.0, math.nan, math.inf):
        with pytest.raises(InvalidInputError):
            categorize(bad, BINARY_SCHEMA)


@given(st.lists(st.floats(0, 1e5), min_size=1, max_size=50))
def test_array_matches_scalar(incomes):
    arr = FIVE_CLASS_SCHEMA.categorize_array(incomes)
    assert [categorize(v, FIVE_CLASS_SCHEMA) or 0 for v in incomes] == arr.tolist()


def test_array_nan_is_unlabeled():
    assert BINARY_SCHEMA.categorize_array([np.nan, 400.0]).tolist() == [0, 2]


def test_schema_validation_and_round_trip():
    with pytest.raises(InvalidInputError):
        CategorySchema((100.0, 50.0))
    with pytest.raises(InvalidInputError):
        CategorySchema(())
    assert FIVE_CLASS_SCHEMA.ranges[-1] == (2700.0, math.inf)
    assert schema_from_dict(schema_to_dict(FIVE_CLASS_SCHEMA)) == FIVE_CLASS_SCHEMA
    assert schema_from_name("binary") is BINARY_SCHEMA
    with pytest.raises(InvalidInputError):
        schema_from_name("ternary")


def test_bank_client_average():
    assert BankClient("a", (100,) * 6).avg_income == 100
    assert BankClient("a", (0, 0, 0, 0, 0, 600)).avg_income == 100
    with pytest.raises(InvalidInputError):
        BankClient("a", (100, 100, -5, 100, 100, 100))
    with pytest.raises(InvalidInputError):
        BankClient("a", (100,) * 5)


def test_cdr_invariants():
    r = CdrRecord("a", "b", 0, CallKind.VOICE, 120)
    assert r.kind is CallKind.VOICE and r.duration == 120
    with pytest.raises(InvalidInputError):
        CdrRecord("a", "a", 0, CallKind.VOICE)
    with pytest.raises(InvalidInputError):
        CdrRecord("a", "b", 0, CallKind.SMS, 5)
    with pytest.raises(InvalidInputError):
        CdrRecord("a", "b", 0, CallKind.VOICE, -1)
