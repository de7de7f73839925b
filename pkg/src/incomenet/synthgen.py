"""Synthetic CDR + bank datasets with planted income homophily.

Incomes are log-normal; each directed edge picks its callee from the
caller's own category with probability ``homophily`` and uniformly from
all users otherwise.  Everything is drawn from one seeded generator, so a
config maps to byte-identical files.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import asdict, dataclass, replace
from typing import Optional

import numpy as np

from .data_model import N_MONTHS, BankClient, CallKind, CategorySchema, CdrRecord
from .errors import ConfigError
from .graph import CommGraph, labeled_edge_index
from .ingestion import BANK_COLUMNS, CDR_COLUMNS, JoinedDataset, anonymize
from .stats import spearman

START_EPOCH = 1_420_070_400  # 2015-01-01T00:00:00Z
WINDOW_SECONDS = 90 * 86_400
JITTER = 0.10


@dataclass(frozen=True)
class SynthConfig:
    n_users: int = 2000
    labeled_fraction: float = 0.5
    homophily: float = 0.6
    # graph-shape defaults: 5,044,976 edges over 2,027,554 nodes and
    # 29,599,762 calls + 5,476,783 texts in the reference data set
    mean_degree: float = 2.49
    calls_per_edge_mean: float = 6.95
    income_mu: float = math.log(340.0)
    income_sigma: float = 1.0
    sms_fraction: float = 0.156
    coords_fraction: float = 0.5
    age_fraction: float = 0.7
    seed: int = 0
    k: Optional[int] = None

    def validate(self, schema: Optional[CategorySchema] = None):
        if self.n_users < 10:
            raise ConfigError("n_users must be >= 10")
        for name in ("labeled_fraction", "homophily", "sms_fraction", "coords_fraction", "age_fraction"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1], got {v}")
        if not self.mean_degree > 0:
            raise ConfigError("mean_degree must be > 0")
        if self.mean_degree >= self.n_users:
            raise ConfigError(f"mean_degree {self.mean_degree} infeasible for {self.n_users} users")
        if not self.calls_per_edge_mean >= 1:
            raise ConfigError("calls_per_edge_mean must be >= 1")
        if not self.income_sigma > 0 or not math.isfinite(self.income_mu):
            raise ConfigError("income distribution needs finite mu and sigma > 0")
        if schema is not None and self.k is not None and self.k != schema.k:
            raise ConfigError(f"k={self.k} does not match schema with {schema.k} categories")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SynthDataset:
    """Generated ground truth plus the event-level data emitted to CSV."""

    config: SynthConfig
    schema: CategorySchema
    ids: np.ndarray  # sorted user ids
    income: np.ndarray
    category: np.ndarray
    labeled: np.ndarray  # bool
    monthly: np.ndarray  # (n_users, 6); meaningful for labeled rows only
    age: np.ndarray  # -1 when absent
    ev_src: np.ndarray
    ev_dst: np.ndarray
    ev_sms: np.ndarray
    ev_time: np.ndarray
    ev_duration: np.ndarray
    ev_lat: np.ndarray  # NaN when absent
    ev_lon: np.ndarray

    @property
    def n_events(self) -> int:
        return int(self.ev_src.size)

    def avg_income(self) -> np.ndarray:
        """Bank average income per user (NaN for unlabeled), as ingestion computes it."""
        out = np.full(self.ids.size, np.nan)
        for i in np.flatnonzero(self.labeled):
            out[i] = math.fsum(self.monthly[i]) / N_MONTHS
        return out

    def to_graph(self) -> CommGraph:
        """Graph of the raw (unfiltered) dataset, bypassing CSV round-trips."""
        return CommGraph.from_events(
            self.ids,
            self.avg_income(),
            self.ev_src,
            self.ev_dst,
            ~self.ev_sms,
            self.ev_sms,
            self.ev_duration,
            self.schema,
        )

    def records(self) -> list[CdrRecord]:
        out = []
        ids = self.ids
        for s, d, sms, t, dur, lat, lon in zip(
            self.ev_src.tolist(),
            self.ev_dst.tolist(),
            self.ev_sms.tolist(),
            self.ev_time.tolist(),
            self.ev_duration.tolist(),
            self.ev_lat.tolist(),
            self.ev_lon.tolist(),
        ):
            coords = None if math.isnan(lat) else (lat, lon)
            kind = CallKind.SMS if sms else CallKind.VOICE
            out.append(CdrRecord(ids[s], ids[d], t, kind, dur, coords))
        return out

    def clients(self) -> list[BankClient]:
        out = []
        for i in np.flatnonzero(self.labeled):
            age = int(self.age[i]) if self.age[i] >= 0 else None
            out.append(BankClient(self.ids[i], tuple(self.monthly[i].tolist()), age))
        return out

    def joined(self) -> JoinedDataset:
        clients = self.clients()
        return JoinedDataset(self.records(), clients, frozenset(c.phone for c in clients))

    def write(self, directory: str) -> dict:
        """Emit ``cdr.csv``, ``bank.csv`` and ``truth.csv`` (ingestion schemas)."""
        os.makedirs(directory, exist_ok=True)
        paths = {name: os.path.join(directory, f"{name}.csv") for name in ("cdr", "bank", "truth")}
        ids = self.ids
        with open(paths["cdr"], "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CDR_COLUMNS)
            for s, d, sms, t, dur, lat, lon in zip(
                self.ev_src.tolist(),
                self.ev_dst.tolist(),
                self.ev_sms.tolist(),
                self.ev_time.tolist(),
                self.ev_duration.tolist(),
                self.ev_lat.tolist(),
                self.ev_lon.tolist(),
            ):
                coord = ["", ""] if math.isnan(lat) else [f"{lat:.5f}", f"{lon:.5f}"]
                w.writerow([ids[s], ids[d], t, "sms" if sms else "voice", dur, *coord])
        with open(paths["bank"], "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(BANK_COLUMNS)
            for i in np.flatnonzero(self.labeled):
                age = str(int(self.age[i])) if self.age[i] >= 0 else ""
                w.writerow([ids[i], *(f"{v:.2f}" for v in self.monthly[i]), age])
        with open(paths["truth"], "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["user", "category", "income"])
            for u, c, inc in zip(ids, self.category.tolist(), self.income.tolist()):
                w.writerow([u, c, f"{inc:.2f}"])
        return paths


def _draw_incomes(rng, cfg: SynthConfig, floor: float, n: int) -> np.ndarray:
    income = rng.lognormal(cfg.income_mu, cfg.income_sigma, n)
    low = income < floor
    for _ in range(1000):
        if not low.any():
            break
        income[low] = rng.lognormal(cfg.income_mu, cfg.income_sigma, int(low.sum()))
        low = income < floor
    else:
        raise ConfigError("income distribution puts almost no mass above the schema floor")
    return np.round(income, 2)


def _monthly_values(rng, income: np.ndarray, category: np.ndarray, schema: CategorySchema) -> np.ndarray:
    """Six monthly values per user, zero-mean jitter clamped to +-10%.

    Rows whose rounded mean would leave the user's category fall back to
    six identical values.
    """
    n = income.size
    u = rng.uniform(-JITTER, JITTER, (n, N_MONTHS))
    u -= u.mean(axis=1, keepdims=True)
    peak = np.abs(u).max(axis=1, keepdims=True)
    u *= np.minimum(1.0, JITTER / np.maximum(peak, 1e-300))
    monthly = np.round(income[:, None] * (1.0 + u), 2)
    means = np.array([math.fsum(row) / N_MONTHS for row in monthly.tolist()])
    drift = schema.categorize_array(means) != category
    monthly[drift] = income[drift, None]
    return monthly


def _draw_callees(rng, callers, category, members, starts, sizes, h, n):
    planted = rng.random(callers.size) < h
    uniform = rng.integers(0, n, callers.size)
    cat = category[callers]
    pick = starts[cat] + np.floor(rng.random(callers.size) * sizes[cat]).astype(np.int64)
    same = members[pick]
    return np.where(planted & (sizes[cat] > 1), same, uniform)


def generate(cfg: SynthConfig, schema: CategorySchema) -> SynthDataset:
    cfg.validate(schema)
    rng = np.random.default_rng(cfg.seed)
    n = cfg.n_users

    income = _draw_incomes(rng, cfg, schema.lowers[0], n)
    category = schema.categorize_array(income)

    key = f"synthgen-{cfg.seed}".encode()
    raw_ids = np.array([anonymize(f"5491{i:09d}", key) for i in range(n)], dtype=object)
    if np.unique(raw_ids).size != n:
        raise ConfigError("anonymized id collision; change the seed")
    # user index order = sorted id order, so arrays line up with graph nodes
    order = np.argsort(raw_ids.astype(str), kind="stable")
    ids = raw_ids[order]

    labeled = np.zeros(n, dtype=bool)
    labeled[rng.permutation(n)[: int(round(cfg.labeled_fraction * n))]] = True

    members = np.argsort(category, kind="stable")
    sizes = np.bincount(category, minlength=schema.k + 1)
    starts = np.concatenate([[0], np.cumsum(sizes)[:-1]])

    m = int(round(n * cfg.mean_degree))
    callers = rng.integers(0, n, m)
    callees = _draw_callees(rng, callers, category, members, starts, sizes, cfg.homophily, n)
    for _ in range(1000):
        loops = np.flatnonzero(callers == callees)
        if loops.size == 0:
            break
        callees[loops] = _draw_callees(rng, callers[loops], category, members, starts, sizes, cfg.homophily, n)
    else:
        raise ConfigError("could not avoid self-loops")

    events = rng.geometric(1.0 / cfg.calls_per_edge_mean, m)
    n_ev = int(events.sum())
    ev_src = np.repeat(callers, events)
    ev_dst = np.repeat(callees, events)
    ev_sms = rng.random(n_ev) < cfg.sms_fraction
    ev_time = START_EPOCH + rng.integers(0, WINDOW_SECONDS, n_ev)
    ev_duration = np.where(ev_sms, 0, np.ceil(rng.exponential(120.0, n_ev))).astype(np.int64)
    has_coord = rng.random(n_ev) < cfg.coords_fraction
    lat = np.round(-34.6 + rng.normal(0.0, 0.1, n_ev), 5)
    lon = np.round(-58.4 + rng.normal(0.0, 0.1, n_ev), 5)
    lat[~has_coord] = np.nan
    lon[~has_coord] = np.nan

    chrono = np.argsort(ev_time, kind="stable")
    ev_src, ev_dst, ev_sms, ev_time, ev_duration, lat, lon = (
        a[chrono] for a in (ev_src, ev_dst, ev_sms, ev_time, ev_duration, lat, lon)
    )

    monthly = _monthly_values(rng, income, category, schema)
    age = np.where(rng.random(n) < cfg.age_fraction, rng.integers(18, 81, n), -1)

    # relabel user indices into sorted-id order
    rank = np.empty(n, dtype=np.int64)
    rank[order] = np.arange(n)
    inv = order
    return SynthDataset(
        config=cfg,
        schema=schema,
        ids=ids,
        income=income[inv],
        category=category[inv],
        labeled=labeled[inv],
        monthly=monthly[inv],
        age=age[inv],
        ev_src=rank[ev_src],
        ev_dst=rank[ev_dst],
        ev_sms=ev_sms,
        ev_time=ev_time.astype(np.int64),
        ev_duration=ev_duration,
        ev_lat=lat,
        ev_lon=lon,
    )


def measured_homophily(g: CommGraph, use_sms: bool = False) -> float:
    """Spearman correlation of caller and callee incomes over labeled-labeled edges."""
    e = labeled_edge_index(g, use_sms)
    return spearman(g.avg_income[g.src[e]], g.avg_income[g.dst[e]])


def calibrate_homophily(
    cfg: SynthConfig,
    schema: CategorySchema,
    target: float = 0.474,
    tol: float = 0.01,
    max_iter: int = 25,
) -> tuple[float, float]:
    """Bisect the planted homophily until the measured Spearman r hits ``target``.

    All probes share ``cfg.seed``, so r(h) varies smoothly between probes.
    Returns ``(h, r)`` for the closest probe.
    """
    lo, hi = 0.0, 1.0
    best = None
    for _ in range(max_iter):
        h = 0.5 * (lo + hi)
        r = measured_homophily(generate(replace(cfg, homophily=h), schema).to_graph())
        if best is None or abs(r - target) < abs(best[1] - target):
            best = (h, r)
        if abs(r - target) <= tol:
            break
        if r < target:
            lo = h
        else:
            hi = h
    return best

