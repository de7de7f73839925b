"""CSV parsing, phone anonymization, bank/telco join and outlier filters."""

from __future__ import annotations

import csv
import hashlib
import hmac
import io
import math
import re
from collections import Counter, defaultdict
from dataclasses import asdict, dataclass, field
from typing import Iterable, Optional, Sequence, TextIO, Union

import numpy as np

from .data_model import (
    N_MONTHS,
    BankClient,
    CallKind,
    CategorySchema,
    CdrRecord,
    UserId,
    is_user_id,
)
from .errors import DuplicateClientError, FormatError, InvalidInputError

CDR_COLUMNS = ["origin", "destination", "timestamp", "kind", "duration", "lat", "lon"]
BANK_COLUMNS = ["phone"] + [f"s{i}" for i in range(N_MONTHS)] + ["age"]

ID_LENGTH = 16
_PHONE_RE = re.compile(r"^\+?[0-9]+$")
_MAX_EXAMPLE_LINES = 5

Source = Union[TextIO, Iterable[str]]


def anonymize(raw_phone: str, key: bytes) -> UserId:
    """Keyed SHA-256 (HMAC) of a phone number, truncated to 16 hex chars."""
    phone = (raw_phone or "").strip()
    if not phone:
        raise InvalidInputError("cannot anonymize an empty phone number")
    if not _PHONE_RE.match(phone):
        raise InvalidInputError(f"phone number must be digits, got {raw_phone!r}")
    return hmac.new(key, phone.encode("ascii"), hashlib.sha256).hexdigest()[:ID_LENGTH]


@dataclass
class ParseReport:
    """Row accounting for one parsed file; rejected rows are never dropped silently."""

    source: str = "<stream>"
    rows: int = 0
    accepted: int = 0
    rejected: Counter = field(default_factory=Counter)
    example_lines: dict = field(default_factory=lambda: defaultdict(list))

    @property
    def n_rejected(self) -> int:
        return sum(self.rejected.values())

    def reject(self, reason: str, line: int):
        self.rejected[reason] += 1
        lines = self.example_lines[reason]
        if len(lines) < _MAX_EXAMPLE_LINES:
            lines.append(line)

    def to_dict(self) -> dict:
        return {
            "source": self.source,
            "rows": self.rows,
            "accepted": self.accepted,
            "rejected": dict(sorted(self.rejected.items())),
            "example_lines": {k: v for k, v in sorted(self.example_lines.items())},
        }


class _IdResolver:
    """Maps a raw CSV id field to a UserId (hashing or identity mode)."""

    def __init__(self, key: Optional[bytes]):
        self.key = key
        self.length: Optional[int] = None

    def __call__(self, token: str) -> Optional[str]:
        token = token.strip()
        if self.key is not None:
            try:
                return anonymize(token, self.key)
            except InvalidInputError:
                return None
        if not is_user_id(token):
            return None
        if self.length is None:
            self.length = len(token)
        elif len(token) != self.length:
            return None
        return token


def _open_rows(stream: Source, source: str, expected: list[str], what: str):
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    reader = csv.reader(stream)
    try:
        header = next(reader)
    except StopIteration:
        raise FormatError(f"empty {what} file, missing header", path=source, line=1) from None
    header = [h.strip() for h in header]
    if header != expected:
        raise FormatError(
            f"{what} header must be {','.join(expected)!r}, got {','.join(header)!r}",
            path=source,
            line=1,
        )
    return reader


def parse_cdr(
    stream: Source,
    key: Optional[bytes] = None,
    source: str = "<cdr>",
) -> tuple[list[CdrRecord], ParseReport]:
    """Parse a CDR CSV (``origin,destination,timestamp,kind,duration,lat,lon``).

    With ``key`` set, endpoint fields are raw phone numbers and are hashed
    with :func:`anonymize`; otherwise they must already be hex ids.
    A row with the wrong number of columns is a format error; every other
    row-level problem is counted in the report and the row skipped.
    """
    reader = _open_rows(stream, source, CDR_COLUMNS, "CDR")
    report = ParseReport(source=source)
    resolve = _IdResolver(key)
    records: list[CdrRecord] = []
    for row in reader:
        line = reader.line_num
        if not row:
            continue
        report.rows += 1
        if len(row) != len(CDR_COLUMNS):
            raise FormatError(f"expected {len(CDR_COLUMNS)} columns, got {len(row)}", source, line)
        o_raw, d_raw, ts_raw, kind_raw, dur_raw, lat_raw, lon_raw = (c.strip() for c in row)
        origin = resolve(o_raw)
        destination = resolve(d_raw)
        if origin is None or destination is None:
            report.reject("bad id", line)
            continue
        if origin == destination:
            report.reject("self call", line)
            continue
        try:
            timestamp = int(ts_raw)
        except ValueError:
            report.reject("bad timestamp", line)
            continue
        try:
            kind = CallKind(kind_raw.lower())
        except ValueError:
            report.reject("bad kind", line)
            continue
        try:
            duration = int(dur_raw) if dur_raw else 0
        except ValueError:
            report.reject("bad duration", line)
            continue
        if duration < 0:
            report.reject("negative duration", line)
            continue
        if kind is CallKind.SMS and duration != 0:
            report.reject("sms with duration", line)
            continue
        coords = None
        if lat_raw or lon_raw:
            try:
                lat, lon = float(lat_raw), float(lon_raw)
            except ValueError:
                report.reject("bad coordinates", line)
                continue
            if not (-90.0 <= lat <= 90.0 and -180.0 <= lon <= 180.0):
                report.reject("bad coordinates", line)
                continue
            coords = (lat, lon)
        records.append(CdrRecord(origin, destination, timestamp, kind, duration, coords))
        report.accepted += 1
    return records, report


def parse_bank(
    stream: Source,
    key: Optional[bytes] = None,
    source: str = "<bank>",
) -> tuple[list[BankClient], ParseReport]:
    """Parse a bank CSV (``phone,s0..s5,age``); ``age`` may be empty."""
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    reader = csv.reader(stream)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise FormatError("empty bank file, missing header", path=source, line=1) from None
    income_cols = [h for h in header if re.fullmatch(r"s\d+", h)]
    if len(income_cols) < N_MONTHS:
        raise FormatError(
            f"bank file needs {N_MONTHS} monthly income columns, found {len(income_cols)}",
            path=source,
            line=1,
        )
    if header != BANK_COLUMNS:
        raise FormatError(f"bank header must be {','.join(BANK_COLUMNS)!r}", path=source, line=1)

    report = ParseReport(source=source)
    resolve = _IdResolver(key)
    clients: list[BankClient] = []
    for row in reader:
        line = reader.line_num
        if not row:
            continue
        report.rows += 1
        if len(row) != len(BANK_COLUMNS):
            raise FormatError(f"expected {len(BANK_COLUMNS)} columns, got {len(row)}", source, line)
        phone = resolve(row[0])
        if phone is None:
            report.reject("bad id", line)
            continue
        try:
            monthly = [float(v) for v in row[1 : 1 + N_MONTHS]]
        except ValueError:
            report.reject("bad income", line)
            continue
        if any(not math.isfinite(v) for v in monthly):
            report.reject("bad income", line)
            continue
        if any(v < 0 for v in monthly):
            report.reject("negative income", line)
            continue
        age_raw = row[-1].strip()
        age = None
        if age_raw:
            try:
                age = int(age_raw)
            except ValueError:
                report.reject("bad age", line)
                continue
            if age < 0:
                report.reject("bad age", line)
                continue
        clients.append(BankClient(phone, tuple(monthly), age))
        report.accepted += 1
    return clients, report


@dataclass
class JoinedDataset:
    records: list[CdrRecord]
    clients: list[BankClient]
    matched_ids: frozenset

    @property
    def client_by_phone(self) -> dict:
        return {c.phone: c for c in self.clients}


def join(cdrs: Sequence[CdrRecord], clients: Sequence[BankClient]) -> JoinedDataset:
    """Inner-join bank clients onto CDR endpoints.

    All CDR records are kept: unlabeled telco users are the inference
    targets.  Clients that never appear in a CDR are dropped.
    """
    counts = Counter(c.phone for c in clients)
    dups = [p for p, n in counts.items() if n > 1]
    if dups:
        raise DuplicateClientError(dups)
    endpoints = set()
    for r in cdrs:
        endpoints.add(r.origin)
        endpoints.add(r.destination)
    matched = frozenset(counts.keys() & endpoints)
    kept = [c for c in clients if c.phone in matched]
    return JoinedDataset(list(cdrs), kept, matched)


@dataclass(frozen=True)
class FilterConfig:
    """Outlier filter settings.

    ``min_calls`` is strict: users need *more than* this many calls.
    ``min_calls_mode`` is ``"total"`` (incoming + outgoing) or ``"each"``
    (both directions separately).
    """

    min_calls: int = 5
    min_income: float = 54.0
    top_percentile_cut: float = 0.01
    min_calls_mode: str = "total"
    count_sms: bool = False
    cascade: bool = False

    def __post_init__(self):
        if self.min_calls < 0:
            raise InvalidInputError("min_calls must be >= 0")
        if not 0.0 <= self.top_percentile_cut < 1.0:
            raise InvalidInputError("top_percentile_cut must be in [0, 1)")
        if not (math.isfinite(self.min_income) and self.min_income >= 0):
            raise InvalidInputError("min_income must be finite and >= 0")
        if self.min_calls_mode not in ("total", "each"):
            raise InvalidInputError("min_calls_mode must be 'total' or 'each'")


@dataclass
class FilterReport:
    records_in: int = 0
    records_removed: int = 0
    records_out: int = 0
    labeled_in: int = 0
    labeled_out: int = 0
    removed_income_floor: int = 0
    removed_top_cut: int = 0
    removed_min_calls: int = 0
    top_cut_threshold: Optional[float] = None
    cascade_rounds: int = 0
    labeled_by_category: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def top_cut_threshold(incomes: Sequence[float], cut: float) -> Optional[float]:
    """Nearest-rank ``(1 - cut)`` quantile; incomes strictly above it are cut."""
    n = len(incomes)
    if n == 0 or cut <= 0:
        return None
    rank = n - math.floor(cut * n + 1e-9)  # ceil((1 - cut) * n) without float drift
    return float(np.sort(np.asarray(incomes, dtype=float))[rank - 1])


def _degree_failures(records: Sequence[CdrRecord], users: set, cfg: FilterConfig) -> set:
    out_deg: Counter = Counter()
    in_deg: Counter = Counter()
    for r in records:
        if r.kind is CallKind.SMS and not cfg.count_sms:
            continue
        out_deg[r.origin] += 1
        in_deg[r.destination] += 1
    if cfg.min_calls_mode == "total":
        return {u for u in users if out_deg[u] + in_deg[u] <= cfg.min_calls}
    return {u for u in users if out_deg[u] <= cfg.min_calls or in_deg[u] <= cfg.min_calls}


def apply_filters(
    data: JoinedDataset,
    cfg: FilterConfig = FilterConfig(),
    schema: Optional[CategorySchema] = None,
) -> tuple[JoinedDataset, FilterReport]:
    """Apply the outlier rules in a fixed order.

    1. drop labeled users earning less than ``cfg.min_income``;
    2. drop labeled users above the nearest-rank ``1 - top_percentile_cut``
       income quantile of the survivors of (1);
    3. drop any user with ``<= cfg.min_calls`` calls, counted on the records
       left after (1) and (2).

    Dropping a user drops all of its records.  Rule 3 runs once unless
    ``cfg.cascade`` is set, in which case it repeats until nothing changes.
    """
    report = FilterReport(records_in=len(data.records), labeled_in=len(data.clients))

    clients = [c for c in data.clients if c.avg_income >= cfg.min_income]
    removed = {c.phone for c in data.clients} - {c.phone for c in clients}
    report.removed_income_floor = len(removed)

    threshold = top_cut_threshold([c.avg_income for c in clients], cfg.top_percentile_cut)
    report.top_cut_threshold = threshold
    if threshold is not None:
        cut = {c.phone for c in clients if c.avg_income > threshold}
        clients = [c for c in clients if c.phone not in cut]
        removed |= cut
        report.removed_top_cut = len(cut)

    records = [r for r in data.records if r.origin not in removed and r.destination not in removed]

    while True:
        users = {c.phone for c in clients}
        for r in records:
            users.add(r.origin)
            users.add(r.destination)
        failing = _degree_failures(records, users, cfg)
        report.cascade_rounds += 1
        if failing:
            report.removed_min_calls += len(failing)
            records = [r for r in records if r.origin not in failing and r.destination not in failing]
            clients = [c for c in clients if c.phone not in failing]
        if not failing or not cfg.cascade:
            break

    # bookkeeping only: keep the join invariant that matched clients have records
    endpoints = set()
    for r in records:
        endpoints.add(r.origin)
        endpoints.add(r.destination)
    clients = [c for c in clients if c.phone in endpoints]

    report.records_out = len(records)
    report.records_removed = report.records_in - report.records_out
    report.labeled_out = len(clients)
    if schema is not None:
        labels = schema.categorize_array([c.avg_income for c in clients])
        report.labeled_by_category = {
            str(i): int(np.sum(labels == i)) for i in range(0, schema.k + 1)
        }
    return JoinedDataset(records, clients, frozenset(c.phone for c in clients)), report


@dataclass(frozen=True)
class AgeBin:
    lo: int
    hi: int
    n: int
    min: float
    q1: float
    median: float
    q3: float
    max: float


def income_by_age_summary(clients: Iterable[BankClient], width: int = 5) -> list[AgeBin]:
    """Five-number summary of average income per ``width``-year age bin.

    Clients without an age are skipped; quartiles use linear interpolation.
    """
    groups: dict[int, list[float]] = defaultdict(list)
    for c in clients:
        if c.age is None:
            continue
        groups[(c.age // width) * width].append(c.avg_income)
    table = []
    for lo in sorted(groups):
        v = np.asarray(groups[lo])
        q1, med, q3 = np.percentile(v, [25, 50, 75])
        table.append(
            AgeBin(lo, lo + width, int(v.size), float(v.min()), float(q1), float(med), float(q3), float(v.max()))
        )
    return table
