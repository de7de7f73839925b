"""Directed weighted communication graph and per-user neighbor category counts.

Nodes are stored in sorted id order and edges in (origin, destination)
order, so every array derived from a graph is deterministic.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from .data_model import CallKind, CategorySchema, UserId, schema_from_dict, schema_to_dict
from .errors import FormatError, NotFoundError
from .ingestion import JoinedDataset

NODE_COLUMNS = ["id", "avg_income", "label"]
EDGE_COLUMNS = ["origin", "destination", "calls", "sms", "duration"]


@dataclass(frozen=True)
class NodeInfo:
    label: Optional[int]
    avg_income: Optional[float]


@dataclass(frozen=True)
class EdgeWeight:
    calls: int
    sms: int
    duration: int  # total seconds; kept for extensions, unused by inference


@dataclass(frozen=True)
class CountOptions:
    """What counts as evidence when tallying a user's contacts.

    Defaults follow "number of outgoing calls": voice only, outgoing only,
    every call counted (not distinct contacts).
    """

    use_sms: bool = False
    bidirectional: bool = False
    distinct_contacts: bool = False


@dataclass(frozen=True)
class NeighborCounts:
    user: UserId
    a: tuple[int, ...]

    @property
    def total(self) -> int:
        return sum(self.a)


class CommGraph:
    """Communication graph backed by flat numpy arrays.

    ``label`` is 0 for unlabeled nodes and 1..k otherwise; ``avg_income``
    is NaN for users absent from the bank data.
    """

    def __init__(self, ids, avg_income, src, dst, calls, sms, duration, schema: CategorySchema):
        self.ids = np.asarray(ids, dtype=object)
        self.index = {u: i for i, u in enumerate(self.ids)}
        self.avg_income = np.asarray(avg_income, dtype=float)
        self.schema = schema
        self.label = schema.categorize_array(self.avg_income)
        self.src = np.asarray(src, dtype=np.int64)
        self.dst = np.asarray(dst, dtype=np.int64)
        self.calls = np.asarray(calls, dtype=np.int64)
        self.sms = np.asarray(sms, dtype=np.int64)
        self.duration = np.asarray(duration, dtype=np.int64)
        self.indptr = np.searchsorted(self.src, np.arange(self.n_nodes + 1))

    @classmethod
    def from_events(cls, ids, avg_income, src, dst, calls, sms, duration, schema):
        """Assemble from per-event (or partially aggregated) arrays.

        ``ids`` must be sorted; repeated (src, dst) pairs are summed.
        """
        n = len(ids)
        src = np.asarray(src, dtype=np.int64)
        dst = np.asarray(dst, dtype=np.int64)
        if np.any(src == dst):
            raise ValueError("self-loop in edge list")
        key = src * n + dst
        uniq, inv = np.unique(key, return_inverse=True)
        agg = lambda w: np.bincount(inv, weights=np.asarray(w, dtype=float), minlength=uniq.size)
        return cls(
            ids,
            avg_income,
            uniq // n,
            uniq % n,
            np.rint(agg(calls)).astype(np.int64),
            np.rint(agg(sms)).astype(np.int64),
            np.rint(agg(duration)).astype(np.int64),
            schema,
        )

    @property
    def n_nodes(self) -> int:
        return int(self.ids.size)

    @property
    def n_edges(self) -> int:
        return int(self.src.size)

    @property
    def k(self) -> int:
        return self.schema.k

    def _idx(self, user: UserId) -> int:
        try:
            return self.index[user]
        except KeyError:
            raise NotFoundError(f"unknown user {user!r}") from None

    def node(self, user: UserId) -> NodeInfo:
        i = self._idx(user)
        inc = self.avg_income[i]
        return NodeInfo(int(self.label[i]) or None, None if math.isnan(inc) else float(inc))

    def edge(self, origin: UserId, destination: UserId) -> Optional[EdgeWeight]:
        i, j = self._idx(origin), self._idx(destination)
        lo, hi = self.indptr[i], self.indptr[i + 1]
        pos = lo + np.searchsorted(self.dst[lo:hi], j)
        if pos < hi and self.dst[pos] == j:
            return EdgeWeight(int(self.calls[pos]), int(self.sms[pos]), int(self.duration[pos]))
        return None

    def labeled_mask(self) -> np.ndarray:
        return self.label > 0

    def mask_of(self, users: Iterable[UserId]) -> np.ndarray:
        mask = np.zeros(self.n_nodes, dtype=bool)
        for u in users:
            mask[self._idx(u)] = True
        return mask


def build_graph(data: JoinedDataset, schema: CategorySchema) -> CommGraph:
    """One edge per ordered pair, aggregating calls, texts and duration."""
    ids = set()
    for r in data.records:
        ids.add(r.origin)
        ids.add(r.destination)
    ids.update(c.phone for c in data.clients)
    ids = sorted(ids)
    index = {u: i for i, u in enumerate(ids)}
    income = np.full(len(ids), np.nan)
    for c in data.clients:
        income[index[c.phone]] = c.avg_income

    n_rec = len(data.records)
    src = np.empty(n_rec, dtype=np.int64)
    dst = np.empty(n_rec, dtype=np.int64)
    is_sms = np.empty(n_rec, dtype=bool)
    dur = np.empty(n_rec, dtype=np.int64)
    for t, r in enumerate(data.records):
        src[t] = index[r.origin]
        dst[t] = index[r.destination]
        is_sms[t] = r.kind is CallKind.SMS
        dur[t] = r.duration
    return CommGraph.from_events(ids, income, src, dst, ~is_sms, is_sms, dur, schema)


def _edge_weights(g: CommGraph, opts: CountOptions) -> np.ndarray:
    w = g.calls + (g.sms if opts.use_sms else 0)
    if opts.distinct_contacts:
        w = (w > 0).astype(np.int64)
    return w


def neighbor_count_matrix(
    g: CommGraph,
    exclude: Optional[np.ndarray] = None,
    opts: CountOptions = CountOptions(),
) -> np.ndarray:
    """``(n_nodes, k)`` matrix of contact counts into each labeled category.

    ``exclude`` is a boolean node mask whose labels are hidden (held-out
    evaluation).
    """
    k = g.k
    visible = g.label.copy()
    if exclude is not None:
        visible[np.asarray(exclude, dtype=bool)] = 0
    w = _edge_weights(g, opts)
    out = np.zeros(g.n_nodes * k, dtype=np.int64)
    directions = [(g.src, g.dst)]
    if opts.bidirectional:
        directions.append((g.dst, g.src))
    for who, other in directions:
        lab = visible[other]
        use = (lab > 0) & (w > 0)
        out += np.bincount(who[use] * k + (lab[use] - 1), weights=w[use], minlength=g.n_nodes * k).astype(np.int64)
    return out.reshape(g.n_nodes, k)


def neighbor_counts(
    g: CommGraph,
    user: UserId,
    exclude: Optional[Iterable[UserId]] = None,
    opts: CountOptions = CountOptions(),
) -> NeighborCounts:
    """Contact counts of one user into each labeled category."""
    i = g._idx(user)
    hidden = g.mask_of(exclude) if exclude is not None else np.zeros(g.n_nodes, dtype=bool)
    w = _edge_weights(g, opts)
    a = np.zeros(g.k, dtype=np.int64)
    lo, hi = g.indptr[i], g.indptr[i + 1]
    spans = [(g.dst[lo:hi], w[lo:hi])]
    if opts.bidirectional:
        incoming = np.flatnonzero(g.dst == i)
        spans.append((g.src[incoming], w[incoming]))
    for nbrs, wt in spans:
        lab = np.where(hidden[nbrs], 0, g.label[nbrs])
        use = lab > 0
        np.add.at(a, lab[use] - 1, wt[use])
    return NeighborCounts(user, tuple(int(v) for v in a))


def inference_mask(g: CommGraph, opts: CountOptions = CountOptions()) -> np.ndarray:
    return neighbor_count_matrix(g, None, opts).sum(axis=1) >= 1


def inference_set(g: CommGraph, opts: CountOptions = CountOptions()) -> frozenset:
    """Users with at least one outgoing call to a labeled user."""
    return frozenset(g.ids[inference_mask(g, opts)].tolist())


def labeled_edge_index(g: CommGraph, use_sms: bool = False) -> np.ndarray:
    """Edge positions whose two endpoints both carry a bank income."""
    has_income = ~np.isnan(g.avg_income)
    active = g.calls > 0
    if use_sms:
        active |= g.sms > 0
    return np.flatnonzero(active & has_income[g.src] & has_income[g.dst])


def labeled_edge_pairs(g: CommGraph, use_sms: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Labeled-labeled edges as an ``(E, 2)`` index array into a compact income vector.

    Only users touching such an edge enter the income vector, so permuting
    it relabels exactly the population the correlation is measured on.
    """
    e = labeled_edge_index(g, use_sms)
    ends = np.concatenate([g.src[e], g.dst[e]])
    nodes, inverse = np.unique(ends, return_inverse=True)
    pairs = np.asarray(inverse).reshape(2, -1).T
    return pairs, g.avg_income[nodes]


# ---------------------------------------------------------------------------
# snapshot files


def _fmt_float(v: float) -> str:
    return "" if math.isnan(v) else repr(float(v))


def write_snapshot(g: CommGraph, directory: str, meta: Optional[dict] = None) -> dict:
    """Write ``nodes.csv``, ``edges.csv`` and ``snapshot.json`` under ``directory``."""
    os.makedirs(directory, exist_ok=True)
    paths = {
        "nodes": os.path.join(directory, "nodes.csv"),
        "edges": os.path.join(directory, "edges.csv"),
        "meta": os.path.join(directory, "snapshot.json"),
    }
    with open(paths["nodes"], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(NODE_COLUMNS)
        for u, inc, lab in zip(g.ids, g.avg_income, g.label):
            w.writerow([u, _fmt_float(inc), int(lab) if lab else ""])
    with open(paths["edges"], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(EDGE_COLUMNS)
        for s, d, c, m, t in zip(g.src, g.dst, g.calls, g.sms, g.duration):
            w.writerow([g.ids[s], g.ids[d], int(c), int(m), int(t)])
    doc = {"schema": schema_to_dict(g.schema), "n_nodes": g.n_nodes, "n_edges": g.n_edges}
    if meta:
        doc.update(meta)
    with open(paths["meta"], "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return paths


def read_snapshot(directory: str, schema: Optional[CategorySchema] = None) -> CommGraph:
    """Reload a snapshot; labels are recomputed from incomes with ``schema``
    (default: the schema recorded in ``snapshot.json``)."""
    meta_path = os.path.join(directory, "snapshot.json")
    if schema is None:
        try:
            with open(meta_path) as fh:
                schema = schema_from_dict(json.load(fh)["schema"])
        except (OSError, KeyError, ValueError) as exc:
            raise FormatError(f"cannot read snapshot metadata: {exc}", path=meta_path) from None

    nodes_path = os.path.join(directory, "nodes.csv")
    ids, incomes = [], []
    with open(nodes_path, newline="") as fh:
        reader = csv.reader(fh)
        if next(reader, None) != NODE_COLUMNS:
            raise FormatError(f"node header must be {','.join(NODE_COLUMNS)!r}", nodes_path, 1)
        for row in reader:
            if len(row) != len(NODE_COLUMNS):
                raise FormatError("bad node row", nodes_path, reader.line_num)
            ids.append(row[0])
            incomes.append(float(row[1]) if row[1] else math.nan)
    if ids != sorted(ids):
        raise FormatError("node ids must be sorted", nodes_path)
    index = {u: i for i, u in enumerate(ids)}

    edges_path = os.path.join(directory, "edges.csv")
    cols = {c: [] for c in EDGE_COLUMNS}
    with open(edges_path, newline="") as fh:
        reader = csv.reader(fh)
        if next(reader, None) != EDGE_COLUMNS:
            raise FormatError(f"edge header must be {','.join(EDGE_COLUMNS)!r}", edges_path, 1)
        for row in reader:
            if len(row) != len(EDGE_COLUMNS):
                raise FormatError("bad edge row", edges_path, reader.line_num)
            try:
                cols["origin"].append(index[row[0]])
                cols["destination"].append(index[row[1]])
            except KeyError:
                raise FormatError("edge endpoint missing from nodes.csv", edges_path, reader.line_num) from None
            for c, v in zip(EDGE_COLUMNS[2:], row[2:]):
                cols[c].append(int(v))
    return CommGraph.from_events(
        ids,
        incomes,
        cols["origin"],
        cols["destination"],
        cols["calls"],
        cols["sms"],
        cols["duration"],
        schema,
    )
