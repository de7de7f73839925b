"""Bayesian Beta / Dirichlet income classifiers and the two baselines.

Scores are lower posterior quantiles ("p_lower"): with contact counts
``a`` the posterior over category-membership probabilities is
Dirichlet(a + 1), and each category's score is the ``q``-quantile of its
Beta marginal.  A low quantile rewards both a high mean and a narrow
posterior, so users with little evidence score conservatively.
"""

from __future__ import annotations

import hashlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import InsufficientEvidenceError, InvalidInputError
from .graph import NeighborCounts
from .stats import incbeta_inv

DEFAULT_QUANTILE = 0.05


@dataclass(frozen=True)
class BinaryPrediction:
    user: str
    p_lower: float
    predicted: int
    tau: float


@dataclass(frozen=True)
class MulticlassPrediction:
    user: str
    p_lower_vec: tuple[float, ...]
    predicted: int


def _check_q(q: float):
    if not 0.0 < q < 1.0:
        raise InvalidInputError(f"quantile level must be in (0, 1), got {q}")


def _as_matrix(counts) -> np.ndarray:
    a = np.asarray(counts, dtype=float)
    if a.ndim == 1:
        a = a[None, :]
    if np.any(a < 0):
        raise InvalidInputError("counts must be non-negative")
    if np.any(a.sum(axis=1) < 1):
        raise InsufficientEvidenceError("a user with no labeled contacts cannot be scored")
    return a


def _chunked(func: Callable[[np.ndarray], np.ndarray], rows: np.ndarray, threads: int) -> np.ndarray:
    """Apply ``func`` to row blocks; output order is independent of ``threads``."""
    if threads <= 1 or rows.shape[0] < 2 * threads:
        return func(rows)
    blocks = np.array_split(rows, threads)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return np.concatenate(list(pool.map(func, blocks)))


def dirichlet_scores(
    counts,
    q: float = DEFAULT_QUANTILE,
    prior_strength: float = 1.0,
    threads: int = 1,
) -> np.ndarray:
    """``(n, k)`` matrix of marginal lower quantiles, one row per count vector.

    Marginal i of Dirichlet(alpha) is Beta(alpha_i, sum_{j != i} alpha_j).
    Identical count rows are solved once.
    """
    _check_q(q)
    if prior_strength <= 0:
        raise InvalidInputError("prior_strength must be > 0")
    a = _as_matrix(counts)
    uniq, inverse = np.unique(a, axis=0, return_inverse=True)
    alpha = uniq + prior_strength
    rest = alpha.sum(axis=1, keepdims=True) - alpha

    def solve(block: np.ndarray) -> np.ndarray:
        al = block[:, : alpha.shape[1]]
        re = block[:, alpha.shape[1] :]
        return incbeta_inv(np.full(al.shape, q), al, re)

    packed = np.hstack([alpha, rest])
    scores = _chunked(solve, packed, threads)
    return scores[np.asarray(inverse).ravel()]


def beta_scores(
    counts,
    q: float = DEFAULT_QUANTILE,
    prior_strength: float = 1.0,
    literal_alpha_order: bool = False,
    threads: int = 1,
) -> np.ndarray:
    """Lower quantile of the high-income membership posterior for ``(n, 2)`` counts.

    Column 0 counts calls to low-income users, column 1 to high-income
    users; the posterior is Beta(a_high + 1, a_low + 1).  With
    ``literal_alpha_order`` the parameters are swapped to Beta(a_low + 1,
    a_high + 1), which scores low-income membership instead.
    """
    a = _as_matrix(counts)
    if a.shape[1] != 2:
        raise InvalidInputError("beta classifier needs exactly two categories")
    if literal_alpha_order:
        a = a[:, ::-1]
    return dirichlet_scores(a, q, prior_strength, threads)[:, 1]


def beta_classify(
    counts: NeighborCounts,
    tau: float,
    q: float = DEFAULT_QUANTILE,
    prior_strength: float = 1.0,
    literal_alpha_order: bool = False,
) -> BinaryPrediction:
    """Predict category 2 (high income) iff p_lower exceeds ``tau``."""
    if not 0.0 <= tau <= 1.0:
        raise InvalidInputError("tau must be in [0, 1]")
    p = float(beta_scores(counts.a, q, prior_strength, literal_alpha_order)[0])
    return BinaryPrediction(counts.user, p, 2 if p > tau else 1, tau)


def dirichlet_classify(
    counts: NeighborCounts,
    q: float = DEFAULT_QUANTILE,
    prior_strength: float = 1.0,
) -> MulticlassPrediction:
    """Pick the category with the largest marginal lower quantile (lowest index on ties)."""
    if len(counts.a) < 2:
        raise InvalidInputError("need k >= 2 categories")
    row = dirichlet_scores(counts.a, q, prior_strength)[0]
    return MulticlassPrediction(counts.user, tuple(float(v) for v in row), int(np.argmax(row)) + 1)


def one_vs_rest_score(counts: NeighborCounts, i: int, q: float = DEFAULT_QUANTILE) -> float:
    if not 1 <= i <= len(counts.a):
        raise InvalidInputError(f"category {i} outside 1..{len(counts.a)}")
    return float(dirichlet_scores(counts.a, q)[0, i - 1])


# ---------------------------------------------------------------------------
# baselines


def unit_draw(seed: int, key: str) -> float:
    """Uniform [0, 1) value keyed by (seed, key); independent of call order."""
    digest = hashlib.blake2b(f"{seed}:{key}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "big") / 2.0**64


def random_baseline(k: int, seed: int, key: str = "") -> int:
    """Uniformly random category in 1..k."""
    if k < 1:
        raise InvalidInputError("k must be >= 1")
    return int(unit_draw(seed, f"random:{key}") * k) + 1


def majority_votes(counts, seed: int, keys) -> np.ndarray:
    """Vectorized majority vote; ties split uniformly using ``unit_draw``."""
    a = _as_matrix(counts)
    top = a.max(axis=1, keepdims=True)
    tied = a == top
    n_tied = tied.sum(axis=1)
    out = np.argmax(a, axis=1) + 1
    for r in np.flatnonzero(n_tied > 1):
        choices = np.flatnonzero(tied[r]) + 1
        u = unit_draw(seed, f"majority:{keys[r]}")
        out[r] = choices[int(u * choices.size)]
    return out


def majority_vote(counts: NeighborCounts, seed: int) -> int:
    """Category holding most of the user's calls; ties broken at random."""
    return int(majority_votes(counts.a, seed, [counts.user])[0])


def random_predictions(k: int, seed: int, keys) -> np.ndarray:
    return np.array([random_baseline(k, seed, key) for key in keys], dtype=np.int64)

