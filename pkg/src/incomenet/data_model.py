"""Domain value types: call records, bank clients and income category schemas."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

from .errors import InvalidInputError

# Anonymized phone numbers: opaque lowercase-hex tokens.
UserId = str

_HEX_RE = re.compile(r"^[0-9a-f]+$")

N_MONTHS = 6


def is_user_id(token: str) -> bool:
    return bool(token) and _HEX_RE.match(token) is not None


class CallKind(str, Enum):
    VOICE = "voice"
    SMS = "sms"


@dataclass(frozen=True, slots=True)
class CdrRecord:
    """One voice call or text message between two anonymized users."""

    origin: UserId
    destination: UserId
    timestamp: int
    kind: CallKind
    duration: int = 0
    coords: Optional[tuple[float, float]] = None

    def __post_init__(self):
        if self.origin == self.destination:
            raise InvalidInputError(f"self-call on {self.origin}")
        if self.duration < 0:
            raise InvalidInputError("negative duration")
        if self.kind is CallKind.SMS and self.duration != 0:
            raise InvalidInputError("sms with duration")


@dataclass(frozen=True, slots=True)
class BankClient:
    """A bank client with six monthly incomes (USD/month).

    ``avg_income`` is derived: the correctly rounded mean of the six values.
    """

    phone: UserId
    monthly_incomes: tuple[float, ...]
    age: Optional[int] = None
    avg_income: float = field(init=False)

    def __post_init__(self):
        values = tuple(float(v) for v in self.monthly_incomes)
        if len(values) != N_MONTHS:
            raise InvalidInputError(f"expected {N_MONTHS} monthly incomes, got {len(values)}")
        for v in values:
            if not math.isfinite(v) or v < 0:
                raise InvalidInputError(f"monthly income must be finite and >= 0, got {v}")
        object.__setattr__(self, "monthly_incomes", values)
        object.__setattr__(self, "avg_income", math.fsum(values) / N_MONTHS)


@dataclass(frozen=True)
class CategorySchema:
    """Contiguous half-open income ranges ``[lo_i, lo_{i+1})``, the last one unbounded.

    Only the lower edges are stored; ``ranges`` expands them.
    """

    lowers: tuple[float, ...]
    name: str = "custom"

    def __post_init__(self):
        lowers = tuple(float(v) for v in self.lowers)
        if len(lowers) < 1:
            raise InvalidInputError("a schema needs at least one range")
        if any(not math.isfinite(v) or v < 0 for v in lowers):
            raise InvalidInputError("range bounds must be finite and >= 0")
        if any(b <= a for a, b in zip(lowers, lowers[1:])):
            raise InvalidInputError("range bounds must be strictly increasing")
        object.__setattr__(self, "lowers", lowers)

    @property
    def k(self) -> int:
        return len(self.lowers)

    @property
    def ranges(self) -> list[tuple[float, float]]:
        uppers = self.lowers[1:] + (math.inf,)
        return list(zip(self.lowers, uppers))

    def categorize_array(self, incomes) -> np.ndarray:
        """Vectorized ``categorize``; 0 marks incomes below the schema floor.

        NaN entries (users without income) also map to 0.
        """
        incomes = np.asarray(incomes, dtype=float)
        labels = np.searchsorted(np.asarray(self.lowers), incomes, side="right")
        labels[np.isnan(incomes)] = 0
        return labels.astype(np.int64)


BINARY_SCHEMA = CategorySchema((54.0, 340.0), name="binary")
FIVE_CLASS_SCHEMA = CategorySchema((54.0, 135.0, 405.0, 1080.0, 2700.0), name="five")

SCHEMAS = {"binary": BINARY_SCHEMA, "five": FIVE_CLASS_SCHEMA}


def categorize(income: float, schema: CategorySchema) -> Optional[int]:
    """Return the 1-based category whose range contains ``income``.

    Returns ``None`` for incomes below the lowest bound; these users are
    expected to be removed by the income floor filter, not clamped.

    >>> categorize(340, BINARY_SCHEMA)
    2
    >>> categorize(10, BINARY_SCHEMA) is None
    True
    """
    try:
        value = float(income)
    except (TypeError, ValueError) as exc:
        raise InvalidInputError(f"income must be a number, got {income!r}") from exc
    if not math.isfinite(value) or value < 0:
        raise InvalidInputError(f"income must be finite and >= 0, got {income!r}")
    idx = 0
    for lo in schema.lowers:
        if value >= lo:
            idx += 1
        else:
            break
    return idx or None


def schema_from_name(name: str) -> CategorySchema:
    try:
        return SCHEMAS[name]
    except KeyError:
        raise InvalidInputError(f"unknown schema {name!r}; expected one of {sorted(SCHEMAS)}") from None


def schema_to_dict(schema: CategorySchema) -> dict:
    return {"name": schema.name, "lowers": list(schema.lowers)}


def schema_from_dict(d: dict) -> CategorySchema:
    return CategorySchema(tuple(d["lowers"]), name=d.get("name", "custom"))

