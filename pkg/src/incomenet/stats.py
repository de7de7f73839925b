"""Rank correlation, permutation null and Beta/Dirichlet special functions.

The incomplete beta routines are vectorized over numpy arrays: the
classifiers score thousands of users per call, so the continued fraction
and the quantile search both iterate on whole arrays and retire converged
entries as they go.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import gammaln

from .errors import InvalidInputError, NumericError, UndefinedCorrelationError

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
# Stirling branch threshold; the correction series below is accurate to ~1e-14 from here on.
_STIRLING_MIN = 10.0
_CF_EPS = 1e-15
_CF_TINY = 1e-300
_CF_MAXITER = 20000
_QUANTILE_MAXITER = 300
QUANTILE_TOL = 1e-10


@dataclass(frozen=True)
class BetaParams:
    alpha: float
    beta: float

    def __post_init__(self):
        for name in ("alpha", "beta"):
            v = float(getattr(self, name))
            if not math.isfinite(v) or v <= 0:
                raise InvalidInputError(f"Beta {name} must be finite and > 0, got {v}")
            object.__setattr__(self, name, v)


@dataclass(frozen=True)
class DirichletParams:
    alpha: tuple[float, ...]

    def __post_init__(self):
        alpha = tuple(float(v) for v in self.alpha)
        if len(alpha) < 2:
            raise InvalidInputError("a Dirichlet needs k >= 2 parameters")
        if any(not math.isfinite(v) or v <= 0 for v in alpha):
            raise InvalidInputError("Dirichlet parameters must be finite and > 0")
        object.__setattr__(self, "alpha", alpha)

    @property
    def k(self) -> int:
        return len(self.alpha)


# ---------------------------------------------------------------------------
# rank correlation


def average_ranks(values) -> np.ndarray:
    """1-based ranks; tied values share the mean rank of their block."""
    values = np.asarray(values, dtype=float)
    n = values.size
    order = np.argsort(values, kind="mergesort")
    sorted_vals = values[order]
    # block boundaries in sorted order
    new_block = np.empty(n, dtype=bool)
    new_block[:1] = True
    new_block[1:] = sorted_vals[1:] != sorted_vals[:-1]
    starts = np.flatnonzero(new_block)
    ends = np.append(starts[1:], n)
    block_rank = (starts + ends + 1) / 2.0  # mean of (start+1 .. end)
    ranks = np.empty(n, dtype=float)
    ranks[order] = np.repeat(block_rank, ends - starts)
    return ranks


def _pearson(x: np.ndarray, y: np.ndarray) -> float:
    xc = x - x.mean()
    yc = y - y.mean()
    sxx = float(np.dot(xc, xc))
    syy = float(np.dot(yc, yc))
    if sxx == 0.0 or syy == 0.0:
        raise UndefinedCorrelationError("correlation undefined for a constant sequence")
    r = float(np.dot(xc, yc)) / math.sqrt(sxx * syy)
    return min(1.0, max(-1.0, r))


def spearman(x, y) -> float:
    """Spearman rank correlation: Pearson correlation of average ranks."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim != 1 or x.shape != y.shape:
        raise InvalidInputError("spearman needs two 1-d sequences of equal length")
    if x.size < 2:
        raise UndefinedCorrelationError("spearman needs at least two observations")
    return _pearson(average_ranks(x), average_ranks(y))


def permutation_test(edges, node_incomes, m: int = 1000, seed: int = 0, threads: int = 1) -> float:
    """One-sided permutation p-value for edge-endpoint income correlation.

    ``edges`` is an ``(E, 2)`` array of indices into ``node_incomes``.  Each
    round permutes incomes over nodes with the edge structure held fixed and
    recomputes Spearman's r.  Returns ``(1 + #{r_perm >= r_obs}) / (m + 1)``.

    Round ``r`` draws from ``default_rng([seed, r])`` so the result does not
    depend on ``threads``.
    """
    if m < 1:
        raise InvalidInputError("permutation count m must be >= 1")
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    incomes = np.asarray(node_incomes, dtype=float)
    if np.unique(incomes).size < 2:
        raise UndefinedCorrelationError("need at least two distinct incomes")
    src, dst = edges[:, 0], edges[:, 1]
    r_obs = spearman(incomes[src], incomes[dst])

    def run(rounds: range) -> int:
        hits = 0
        for r in rounds:
            perm = np.random.default_rng([seed, r]).permutation(incomes)
            try:
                r_perm = spearman(perm[src], perm[dst])
            except UndefinedCorrelationError:
                continue
            # tolerance guards against rank-identical relabelings differing by rounding only
            if r_perm >= r_obs - 1e-12:
                hits += 1
        return hits

    if threads <= 1:
        exceed = run(range(m))
    else:
        chunks = [range(i, m, threads) for i in range(threads)]
        with ThreadPoolExecutor(max_workers=threads) as pool:
            exceed = sum(pool.map(run, chunks))
    return (1 + exceed) / (m + 1)


# ---------------------------------------------------------------------------
# gamma-family helpers (all in log space)


def _stirling_delta(z):
    """lgamma(z) minus its Stirling approximation, for z >= 10."""
    z = np.asarray(z, dtype=float)
    r2 = 1.0 / (z * z)
    return (1.0 / z) * (1 / 12 - r2 * (1 / 360 - r2 * (1 / 1260 - r2 * (1 / 1680 - r2 / 1188))))


def log_beta(a, b):
    """log B(a, b), accurate for large and very unequal arguments."""
    a, b = np.broadcast_arrays(np.asarray(a, dtype=float), np.asarray(b, dtype=float))
    s = np.minimum(a, b)
    big = np.maximum(a, b)
    out = np.empty(a.shape, dtype=float)

    small = big < _STIRLING_MIN
    out[small] = gammaln(a[small]) + gammaln(b[small]) - gammaln(a[small] + b[small])

    mixed = ~small & (s < _STIRLING_MIN)
    if mixed.any():
        sm, bg = s[mixed], big[mixed]
        # lgamma(bg) - lgamma(bg + sm) via Stirling on both
        ratio = -(bg - 0.5) * np.log1p(sm / bg) - sm * np.log(bg + sm) + sm
        ratio += _stirling_delta(bg) - _stirling_delta(bg + sm)
        out[mixed] = gammaln(sm) + ratio

    both = ~small & ~mixed
    if both.any():
        aa, bb = a[both], b[both]
        c = aa + bb
        out[both] = (
            (aa - 0.5) * np.log(aa / c)
            + (bb - 0.5) * np.log(bb / c)
            - 0.5 * np.log(c)
            + _LOG_SQRT_2PI
            + _stirling_delta(aa)
            + _stirling_delta(bb)
            - _stirling_delta(c)
        )
    return out[()] if out.ndim == 0 else out


def _log_kernel(x, a, b):
    """log(x**a * (1-x)**b / B(a, b)) for 0 < x < 1 (arrays of equal shape).

    When both parameters are large the expression is rewritten around the
    mode x0 = a/(a+b) so the O(a) terms cancel analytically instead of in
    floating point.
    """
    out = np.empty(x.shape, dtype=float)
    both = (a >= _STIRLING_MIN) & (b >= _STIRLING_MIN)
    rest = ~both
    if rest.any():
        xr, ar, br = x[rest], a[rest], b[rest]
        out[rest] = ar * np.log(xr) + br * np.log1p(-xr) - log_beta(ar, br)
    if both.any():
        xb, ab, bb = x[both], a[both], b[both]
        c = ab + bb
        # t = x*c - a, formed from whichever of x, 1-x is exact to limit cancellation
        t = np.where(xb <= 0.5, xb * c - ab, bb - (1.0 - xb) * c)
        u = t / ab
        v = -t / bb
        out[both] = (
            ab * (np.log1p(u) - u)
            + bb * (np.log1p(v) - v)
            + 0.5 * np.log(ab * bb / c)
            - _LOG_SQRT_2PI
            - _stirling_delta(ab)
            - _stirling_delta(bb)
            + _stirling_delta(c)
        )
    return out


def _betacf_scalar(a: float, b: float, x: float) -> float:
    """Same recurrence as ``_betacf`` on plain floats; per-call numpy overhead
    dominates for one or two entries."""
    tiny = _CF_TINY
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, _CF_MAXITER + 1):
        m2 = 2.0 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) <= _CF_EPS:
            return h
    raise NumericError(
        f"incomplete beta continued fraction did not converge in {_CF_MAXITER} iterations "
        f"(e.g. a={a:g}, b={b:g}, x={x:g})"
    )


def _betacf(a, b, x):
    """Continued fraction for the incomplete beta (modified Lentz), vectorized.

    Converged entries are retired from the working set each iteration.
    """
    n = x.shape[0]
    if n <= 2:
        return np.array([_betacf_scalar(float(ai), float(bi), float(xi)) for ai, bi, xi in zip(a, b, x)])
    result = np.empty(n, dtype=float)
    idx = np.arange(n)
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = np.ones(n)
    d = 1.0 - qab * x / qap
    d = np.where(np.abs(d) < _CF_TINY, _CF_TINY, d)
    d = 1.0 / d
    h = d.copy()
    for m in range(1, _CF_MAXITER + 1):
        m2 = 2.0 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = np.where(np.abs(d) < _CF_TINY, _CF_TINY, d)
        c = 1.0 + aa / c
        c = np.where(np.abs(c) < _CF_TINY, _CF_TINY, c)
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = np.where(np.abs(d) < _CF_TINY, _CF_TINY, d)
        c = 1.0 + aa / c
        c = np.where(np.abs(c) < _CF_TINY, _CF_TINY, c)
        d = 1.0 / d
        delta = d * c
        h *= delta
        done = np.abs(delta - 1.0) <= _CF_EPS
        if done.any():
            result[idx[done]] = h[done]
            keep = ~done
            if not keep.any():
                return result
            idx, a, b, x, qab, qap, qam, c, d, h = (
                arr[keep] for arr in (idx, a, b, x, qab, qap, qam, c, d, h)
            )
    raise NumericError(
        f"incomplete beta continued fraction did not converge in {_CF_MAXITER} iterations "
        f"(e.g. a={a[0]:g}, b={b[0]:g}, x={x[0]:g})"
    )


def _validate_ab(a, b):
    if np.any(~np.isfinite(a)) or np.any(a <= 0) or np.any(~np.isfinite(b)) or np.any(b <= 0):
        raise InvalidInputError("Beta parameters must be finite and > 0")


def _incbeta_inner(x, a, b, log_kernel):
    """I_x(a, b) for flat arrays with 0 < x < 1, given ``_log_kernel(x, a, b)``."""
    front = np.exp(log_kernel)
    direct = x < (a + 1.0) / (a + b + 2.0)
    val = np.empty(x.shape)
    if direct.any():
        val[direct] = front[direct] * _betacf(a[direct], b[direct], x[direct]) / a[direct]
    flip = ~direct
    if flip.any():
        cf = _betacf(b[flip], a[flip], 1.0 - x[flip])
        val[flip] = 1.0 - front[flip] * cf / b[flip]
    return np.clip(val, 0.0, 1.0)


def incbeta(x, a, b):
    """Regularized incomplete beta I_x(a, b), broadcasting over arrays."""
    x, a, b = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (x, a, b)))
    scalar = x.ndim == 0
    shape = x.shape
    x, a, b = (np.atleast_1d(v).ravel() for v in (x, a, b))
    _validate_ab(a, b)
    if np.any(np.isnan(x)) or np.any(x < 0) or np.any(x > 1):
        raise InvalidInputError("incomplete beta needs 0 <= x <= 1")

    out = np.where(x >= 1.0, 1.0, 0.0)
    inner = (x > 0.0) & (x < 1.0)
    if inner.any():
        xi, ai, bi = x[inner], a[inner], b[inner]
        out[inner] = _incbeta_inner(xi, ai, bi, _log_kernel(xi, ai, bi))
    return float(out[0]) if scalar else out.reshape(shape)


def betapdf(x, a, b):
    """Beta density, broadcasting over arrays."""
    x, a, b = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (x, a, b)))
    scalar = x.ndim == 0
    shape = x.shape
    x, a, b = (np.atleast_1d(v).ravel() for v in (x, a, b))
    _validate_ab(a, b)
    if np.any(np.isnan(x)) or np.any(x < 0) or np.any(x > 1):
        raise InvalidInputError("beta density needs 0 <= x <= 1")
    out = np.empty(x.shape)
    inner = (x > 0.0) & (x < 1.0)
    if inner.any():
        xi = x[inner]
        out[inner] = np.exp(_log_kernel(xi, a[inner], b[inner]) - np.log(xi) - np.log1p(-xi))
    for edge, p in ((x == 0.0, a), (x == 1.0, b)):
        if edge.any():
            pe = p[edge]
            other = (b if p is a else a)[edge]
            val = np.where(pe > 1.0, 0.0, np.inf)
            at_one = pe == 1.0
            # density at the edge is 1/B(1, other) = other
            val[at_one] = other[at_one]
            out[edge] = val
    return float(out[0]) if scalar else out.reshape(shape)


def _initial_quantile(q, a, b):
    """Starting point for the quantile search (normal/power approximations)."""
    x = np.empty(q.shape)
    big = (a >= 1.0) & (b >= 1.0)
    if big.any():
        qq, aa, bb = q[big], a[big], b[big]
        pp = np.where(qq < 0.5, qq, 1.0 - qq)
        t = np.sqrt(-2.0 * np.log(pp))
        z = (2.30753 + t * 0.27061) / (1.0 + t * (0.99229 + t * 0.04481)) - t
        z = np.where(qq < 0.5, z, -z)
        al = (z * z - 3.0) / 6.0
        h = 2.0 / (1.0 / (2.0 * aa - 1.0) + 1.0 / (2.0 * bb - 1.0))
        w = z * np.sqrt(al + h) / h - (1.0 / (2.0 * bb - 1.0) - 1.0 / (2.0 * aa - 1.0)) * (
            al + 5.0 / 6.0 - 2.0 / (3.0 * h)
        )
        with np.errstate(over="ignore"):
            x[big] = aa / (aa + bb * np.exp(2.0 * w))
    rest = ~big
    if rest.any():
        qq, aa, bb = q[rest], a[rest], b[rest]
        c = aa + bb
        with np.errstate(under="ignore"):
            t = np.exp(aa * np.log(aa / c)) / aa
            u = np.exp(bb * np.log(bb / c)) / bb
        w = t + u
        low = qq < t / w
        x[rest] = np.where(
            low,
            np.power(aa * w * qq, 1.0 / aa),
            1.0 - np.power(bb * w * (1.0 - qq), 1.0 / bb),
        )
    return x


def incbeta_inv(q, a, b):
    """Inverse of ``incbeta`` in x, broadcasting over arrays.

    Safeguarded Halley: each iterate tightens a bracket [lo, hi] and any
    step landing outside it is replaced by bisection.  Iteration
    stops once the step is below one ulp-scale of x.
    """
    q, a, b = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (q, a, b)))
    scalar = q.ndim == 0
    shape = q.shape
    q0, a0, b0 = q, a, b
    q, a, b = (np.atleast_1d(v).ravel().copy() for v in (q, a, b))
    _validate_ab(a, b)
    if np.any(~(q > 0.0)) or np.any(~(q < 1.0)):
        raise InvalidInputError("quantile level must lie strictly inside (0, 1)")

    n = q.size
    result = np.empty(n)
    idx = np.arange(n)
    lo = np.zeros(n)
    hi = np.ones(n)
    x = _initial_quantile(q, a, b)
    x = np.where((x > 0.0) & (x < 1.0) & np.isfinite(x), x, 0.5)

    for _ in range(_QUANTILE_MAXITER):
        kern = _log_kernel(x, a, b)
        f = _incbeta_inner(x, a, b, kern) - q
        lo = np.where(f < 0, x, lo)
        hi = np.where(f > 0, x, hi)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            step = f / np.exp(kern - np.log(x) - np.log1p(-x))
            # Halley correction from the density's log-derivative; fall back to
            # Newton when the correction is not a modest shrink/stretch
            dlog = (a - 1.0) / x - (b - 1.0) / (1.0 - x)
            denom = 1.0 - 0.5 * step * dlog
            step = np.where((denom > 0.5) & (denom < 2.0), step / denom, step)
        scale = np.maximum(np.abs(x), 1e-300)
        # test convergence on the raw step: a sub-ulp step can round onto a
        # bracket end and must not trigger the bisection fallback
        done = (f == 0.0) | (np.abs(step) <= 4e-16 * scale) | (hi - lo <= 4e-16 * scale)
        xn = x - step
        bad = ~np.isfinite(xn) | (xn <= lo) | (xn >= hi)
        xn = np.where(bad, 0.5 * (lo + hi), xn)
        x = np.where(done, x, xn)
        if done.any():
            result[idx[done]] = x[done]
            keep = ~done
            if not keep.any():
                break
            idx, q, a, b, lo, hi, x = (arr[keep] for arr in (idx, q, a, b, lo, hi, x))
    else:
        raise NumericError(
            f"beta quantile did not converge in {_QUANTILE_MAXITER} iterations "
            f"(e.g. q={q[0]:g}, a={a[0]:g}, b={b[0]:g})"
        )
    _polish_ulps(result, *(np.atleast_1d(v).ravel() for v in np.broadcast_arrays(q0, a0, b0)))
    return float(result[0]) if scalar else result.reshape(shape)


def _polish_ulps(x, q, a, b, max_steps: int = 64):
    """Walk steep-CDF results ulp by ulp while the residual shrinks (in place).

    Where one ulp moves the CDF by more than the solver tolerance, the
    relative-step stop can land a few floats from the best representable x.
    """
    f = incbeta(x, a, b) - q
    idx = np.flatnonzero(np.abs(f) > 1e-12)
    if idx.size == 0:
        return
    xs, fs, qs, as_, bs = x[idx], f[idx], q[idx], a[idx], b[idx]
    for _ in range(max_steps):
        cand = np.nextafter(xs, np.where(fs > 0, 0.0, 1.0))
        fc = incbeta(cand, as_, bs) - qs
        better = np.abs(fc) < np.abs(fs)
        if not better.any():
            break
        xs = np.where(better, cand, xs)
        fs = np.where(better, fc, fs)
    x[idx] = xs


# ---------------------------------------------------------------------------
# public Beta / Dirichlet surface


def reg_inc_beta(x: float, p: BetaParams) -> float:
    """I_x(alpha, beta): the Beta CDF at ``x``."""
    return incbeta(x, p.alpha, p.beta)


def beta_quantile(q: float, p: BetaParams) -> float:
    """The ``q``-quantile of Beta(alpha, beta).

    The returned x satisfies ``|I_x - q| <= 1e-10`` unless the bracket has
    collapsed to adjacent floats, where no representable x does better.
    """
    x = incbeta_inv(q, p.alpha, p.beta)
    resid = abs(incbeta(x, p.alpha, p.beta) - q)
    if resid > QUANTILE_TOL:
        # acceptable only if q falls between the CDF at x's float neighbours
        below = incbeta(math.nextafter(x, 0.0), p.alpha, p.beta)
        above = incbeta(math.nextafter(x, 1.0), p.alpha, p.beta)
        if not below <= q <= above:
            raise NumericError(f"beta quantile residual {resid:g} exceeds tolerance")
    return x


def beta_pdf(x: float, p: BetaParams) -> float:
    return betapdf(x, p.alpha, p.beta)


def dirichlet_marginal(p: DirichletParams, i: int) -> BetaParams:
    """Marginal of coordinate ``i`` (1-based): Beta(alpha_i, sum of the others)."""
    if not 1 <= i <= p.k:
        raise InvalidInputError(f"category index {i} outside 1..{p.k}")
    others = p.alpha[: i - 1] + p.alpha[i:]
    return BetaParams(p.alpha[i - 1], math.fsum(others))


def dirichlet_log_pdf(x: Sequence[float], p: DirichletParams) -> float:
    x = np.asarray(x, dtype=float)
    if x.shape != (p.k,):
        raise InvalidInputError(f"point has {x.size} coordinates, Dirichlet has {p.k}")
    if np.any(~np.isfinite(x)) or np.any(x <= 0) or abs(math.fsum(x) - 1.0) > 1e-9:
        raise InvalidInputError("point is not on the open simplex")
    alpha = np.asarray(p.alpha)
    log_norm = float(np.sum(gammaln(alpha)) - gammaln(alpha.sum()))
    return float(np.sum((alpha - 1.0) * np.log(x))) - log_norm
