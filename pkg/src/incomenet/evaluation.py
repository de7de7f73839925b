"""Confusion rates, threshold-sweep ROC curves and the held-out evaluation loop."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import InvalidInputError, UndefinedRateError
from .graph import CommGraph, CountOptions, inference_mask, neighbor_count_matrix
from .inference import DEFAULT_QUANTILE, beta_scores, dirichlet_scores, majority_votes, random_predictions

DEFAULT_TAU_GRID = np.linspace(0.0, 1.0, 101)


@dataclass(frozen=True)
class Confusion:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def tpr(self) -> float:
        return self.tp / (self.tp + self.fn)

    @property
    def fpr(self) -> float:
        return self.fp / (self.fp + self.tn)

    @property
    def accuracy(self) -> float:
        return (self.tp + self.tn) / (self.tp + self.fp + self.tn + self.fn)


def confusion(predicted_positive, truth_positive) -> Confusion:
    """Counts and rates with the high-income class as positive."""
    pred = np.asarray(predicted_positive, dtype=bool)
    truth = np.asarray(truth_positive, dtype=bool)
    if pred.shape != truth.shape:
        raise InvalidInputError("predictions and truth differ in length")
    if truth.all() or not truth.any():
        raise UndefinedRateError("TPR/FPR undefined: need at least one positive and one negative")
    return Confusion(
        tp=int(np.sum(pred & truth)),
        fp=int(np.sum(pred & ~truth)),
        tn=int(np.sum(~pred & ~truth)),
        fn=int(np.sum(~pred & truth)),
    )


@dataclass
class RocCurve:
    """ROC points ordered by increasing FPR, from (0, 0) to (1, 1).

    ``taus`` holds the threshold of each point (score > tau is positive);
    the two closing endpoints use +inf and -inf.
    """

    taus: np.ndarray
    fpr: np.ndarray
    tpr: np.ndarray
    auc: float

    @property
    def points(self) -> list[tuple[float, float, float]]:
        return list(zip(self.taus.tolist(), self.fpr.tolist(), self.tpr.tolist()))

    def write_csv(self, path: str):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["tau", "fpr", "tpr"])
            for t, f, p in self.points:
                w.writerow([repr(t), repr(f), repr(p)])


def roc_sweep(scores, truth_positive, grid=None) -> RocCurve:
    """Sweep thresholds over ``grid`` (default: every distinct score plus 0 and 1)."""
    scores = np.asarray(scores, dtype=float)
    truth = np.asarray(truth_positive, dtype=bool)
    if scores.shape != truth.shape:
        raise InvalidInputError("scores and truth differ in length")
    n_pos = int(truth.sum())
    n_neg = int(truth.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise UndefinedRateError("ROC undefined: need at least one positive and one negative")
    if grid is None:
        grid = np.union1d(scores, [0.0, 1.0])
    taus = np.unique(np.asarray(grid, dtype=float))[::-1]
    taus = np.concatenate([[math.inf], taus, [-math.inf]])

    pos = np.sort(scores[truth])
    neg = np.sort(scores[~truth])
    tp = n_pos - np.searchsorted(pos, taus, side="right")
    fp = n_neg - np.searchsorted(neg, taus, side="right")
    tpr = tp / n_pos
    fpr = fp / n_neg
    return RocCurve(taus, fpr, tpr, trapezoid_auc(fpr, tpr))


def trapezoid_auc(fpr, tpr) -> float:
    fpr = np.asarray(fpr, dtype=float)
    tpr = np.asarray(tpr, dtype=float)
    return float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))


def accuracy_curve(scores, truth_positive, grid) -> np.ndarray:
    """Accuracy of ``score > tau`` for each tau in ``grid``."""
    scores = np.asarray(scores, dtype=float)
    truth = np.asarray(truth_positive, dtype=bool)
    grid = np.asarray(grid, dtype=float)
    pos = np.sort(scores[truth])
    neg = np.sort(scores[~truth])
    tp = pos.size - np.searchsorted(pos, grid, side="right")
    tn = np.searchsorted(neg, grid, side="right")
    return (tp + tn) / truth.size


# ---------------------------------------------------------------------------
# splits


@dataclass(frozen=True)
class EvalSplit:
    """Test users and the label mask hidden while scoring them (the same set)."""

    test_users: frozenset

    @property
    def mask(self) -> frozenset:
        return self.test_users


def make_splits(
    g: CommGraph,
    kfold: int = 5,
    seed: int = 0,
    opts: CountOptions = CountOptions(),
) -> list[EvalSplit]:
    """Partition labeled users of Q into ``kfold`` masked test folds.

    ``kfold=1`` masks every labeled user in Q at once.
    """
    if kfold < 1:
        raise InvalidInputError("kfold must be >= 1")
    candidates = np.flatnonzero(g.labeled_mask() & inference_mask(g, opts))
    order = np.random.default_rng([seed, 7]).permutation(candidates)
    folds = [order[f::kfold] for f in range(kfold)]
    return [EvalSplit(frozenset(g.ids[np.sort(f)].tolist())) for f in folds if f.size]


@dataclass
class _Pooled:
    users: np.ndarray
    counts: np.ndarray
    truth: np.ndarray
    n_test: int
    n_uncovered: int


def _pool_counts(g: CommGraph, splits: Sequence[EvalSplit], opts: CountOptions) -> _Pooled:
    users, counts, truth = [], [], []
    n_test = n_uncovered = 0
    for split in splits:
        mask = g.mask_of(split.mask)
        test_idx = np.flatnonzero(g.mask_of(split.test_users))
        bad = test_idx[g.label[test_idx] == 0]
        if bad.size:
            raise InvalidInputError(f"test user {g.ids[bad[0]]} has no label")
        mat = neighbor_count_matrix(g, mask, opts)[test_idx]
        covered = mat.sum(axis=1) >= 1
        n_test += test_idx.size
        n_uncovered += int(np.sum(~covered))
        users.append(test_idx[covered])
        counts.append(mat[covered])
        truth.append(g.label[test_idx[covered]])
    if not users:
        raise InvalidInputError("evaluation split is empty")
    users = np.concatenate(users)
    order = np.argsort(users, kind="stable")
    return _Pooled(
        users[order],
        np.concatenate(counts)[order],
        np.concatenate(truth)[order],
        n_test,
        n_uncovered,
    )


# ---------------------------------------------------------------------------
# reports


@dataclass
class BinaryReport:
    roc: RocCurve
    roc_grid: RocCurve
    best_tau: float
    best_accuracy: float
    accuracy_at_tau: Optional[float]
    tau: Optional[float]
    random_accuracy: float
    majority_accuracy: float
    n_test: int
    n_covered: int
    n_uncovered: int
    n_positive: int
    users: np.ndarray = field(repr=False)
    scores: np.ndarray = field(repr=False)
    truth: np.ndarray = field(repr=False)

    def to_dict(self) -> dict:
        return {
            "auc": self.roc.auc,
            "auc_grid": self.roc_grid.auc,
            "best_tau": self.best_tau,
            "best_accuracy": self.best_accuracy,
            "tau": self.tau,
            "accuracy_at_tau": self.accuracy_at_tau,
            "baselines": {"random": self.random_accuracy, "majority": self.majority_accuracy},
            "n_test": self.n_test,
            "n_covered": self.n_covered,
            "n_uncovered": self.n_uncovered,
            "n_positive": self.n_positive,
        }


def evaluate_binary(
    g: CommGraph,
    splits: Sequence[EvalSplit],
    tau_grid=None,
    q: float = DEFAULT_QUANTILE,
    seed: int = 0,
    opts: CountOptions = CountOptions(),
    tau: Optional[float] = None,
    prior_strength: float = 1.0,
    literal_alpha_order: bool = False,
    threads: int = 1,
) -> BinaryReport:
    """Score every test user with its fold's labels hidden and summarize.

    Positives are category 2 (high income).  Test users left without any
    visible labeled contact are counted as uncovered and skipped.
    """
    if g.k != 2:
        raise InvalidInputError("binary evaluation needs a two-category schema")
    grid = DEFAULT_TAU_GRID if tau_grid is None else np.asarray(tau_grid, dtype=float)
    pooled = _pool_counts(g, splits, opts)
    if pooled.users.size == 0:
        raise UndefinedRateError("no covered test users")
    truth = pooled.truth == 2
    scores = beta_scores(pooled.counts, q, prior_strength, literal_alpha_order, threads)
    roc = roc_sweep(scores, truth)
    roc_grid = roc_sweep(scores, truth, grid)
    acc = accuracy_curve(scores, truth, grid)
    best = int(np.argmax(acc))
    keys = g.ids[pooled.users].tolist()
    majority = majority_votes(pooled.counts, seed, keys)
    random = random_predictions(2, seed, keys)
    return BinaryReport(
        roc=roc,
        roc_grid=roc_grid,
        best_tau=float(grid[best]),
        best_accuracy=float(acc[best]),
        accuracy_at_tau=None if tau is None else float(accuracy_curve(scores, truth, [tau])[0]),
        tau=tau,
        random_accuracy=float(np.mean(random == pooled.truth)),
        majority_accuracy=float(np.mean(majority == pooled.truth)),
        n_test=pooled.n_test,
        n_covered=int(pooled.users.size),
        n_uncovered=pooled.n_uncovered,
        n_positive=int(truth.sum()),
        users=pooled.users,
        scores=scores,
        truth=pooled.truth,
    )


@dataclass
class MulticlassReport:
    per_category: list  # RocCurve or None when the category is absent/universal
    per_category_grid: list
    overall_accuracy: float
    random_accuracy: float
    majority_accuracy: float
    n_test: int
    n_covered: int
    n_uncovered: int
    support: list
    users: np.ndarray = field(repr=False)
    scores: np.ndarray = field(repr=False)
    truth: np.ndarray = field(repr=False)

    @property
    def aucs(self) -> list:
        return [None if r is None else r.auc for r in self.per_category]

    def to_dict(self) -> dict:
        return {
            "auc_per_category": self.aucs,
            "auc_grid_per_category": [None if r is None else r.auc for r in self.per_category_grid],
            "overall_accuracy": self.overall_accuracy,
            "baselines": {"random": self.random_accuracy, "majority": self.majority_accuracy},
            "support": self.support,
            "n_test": self.n_test,
            "n_covered": self.n_covered,
            "n_uncovered": self.n_uncovered,
        }


def evaluate_multiclass(
    g: CommGraph,
    splits: Sequence[EvalSplit],
    tau_grid=None,
    q: float = DEFAULT_QUANTILE,
    seed: int = 0,
    opts: CountOptions = CountOptions(),
    prior_strength: float = 1.0,
    threads: int = 1,
) -> MulticlassReport:
    """One-vs-rest ROC per category plus argmax accuracy.

    A category with no positives (or no negatives) among covered test users
    gets ``None`` instead of a curve.
    """
    grid = DEFAULT_TAU_GRID if tau_grid is None else np.asarray(tau_grid, dtype=float)
    pooled = _pool_counts(g, splits, opts)
    if pooled.users.size == 0:
        raise UndefinedRateError("no covered test users")
    scores = dirichlet_scores(pooled.counts, q, prior_strength, threads)
    curves, curves_grid, support = [], [], []
    for i in range(1, g.k + 1):
        truth = pooled.truth == i
        support.append(int(truth.sum()))
        if truth.all() or not truth.any():
            curves.append(None)
            curves_grid.append(None)
            continue
        curves.append(roc_sweep(scores[:, i - 1], truth))
        curves_grid.append(roc_sweep(scores[:, i - 1], truth, grid))
    predicted = np.argmax(scores, axis=1) + 1
    keys = g.ids[pooled.users].tolist()
    return MulticlassReport(
        per_category=curves,
        per_category_grid=curves_grid,
        overall_accuracy=float(np.mean(predicted == pooled.truth)),
        random_accuracy=float(np.mean(random_predictions(g.k, seed, keys) == pooled.truth)),
        majority_accuracy=float(np.mean(majority_votes(pooled.counts, seed, keys) == pooled.truth)),
        n_test=pooled.n_test,
        n_covered=int(pooled.users.size),
        n_uncovered=pooled.n_uncovered,
        support=support,
        users=pooled.users,
        scores=scores,
        truth=pooled.truth,
    )
