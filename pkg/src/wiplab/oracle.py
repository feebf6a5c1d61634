"""Independent reference computations for small instances.

Nothing here reuses the estimator's range machinery: ``f o T^t`` is evaluated
straight from its definition on explicit circle points and explicit sign
patterns, and conditional expectations are formed by averaging over all
patterns of the signs with positive index.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import CapacityError

MAX_WINDOW = 12
MAX_K = 2
MIN_GRID = 1000
MAX_CELLS_TIMES_PATTERNS = 5 * 10**7

FUNCTIONALS = ("NormF2", "AbsIn", "CondSnL2", "AbsJn")


@dataclass(frozen=True)
class OracleResult:
    value: float
    error_bound: float
    method: str


def _check(spec, n):
    if spec.control:
        raise CapacityError("the sign-control spec has no set system to enumerate")
    if spec.k_max > MAX_K:
        raise CapacityError(f"k_max={spec.k_max} exceeds the oracle limit {MAX_K}")
    lo, hi = _window(spec, n)
    if hi - lo + 1 > MAX_WINDOW:
        raise CapacityError(f"sign window of {hi - lo + 1} indices exceeds {MAX_WINDOW}")
    return lo, hi


def _window(spec, n):
    """Smallest and largest sign index read by ``f o T^t`` for ``0 <= t <= n``."""
    if spec.k_max == 0:
        return 0, 0
    far = max(spec.lags) * (2 if spec.variant else 1)
    near = min(spec.lags) + (1 if spec.variant else 0)
    return -far, max(0, n - near)


def _f_at(spec, xs, signs, lo, t):
    """``f o T^t`` on circle points ``xs`` (cells x k) for one sign pattern."""
    out = np.zeros(xs.shape[0])
    claimed = np.zeros(xs.shape[0], dtype=bool)
    for k in range(spec.k_max, 0, -1):
        alpha = float(spec.sets.alpha[k - 1])
        rho = float(spec.sets.rho[k - 1])
        inside = np.mod(xs[:, k - 1] + t * alpha, 1.0) < rho
        in_ak = inside & ~claimed
        claimed |= inside
        lag, theta = spec.lags[k - 1], spec.thetas[k - 1]
        if spec.variant:
            val = sum(signs[t - j - lo] for j in range(lag + 1, 2 * lag + 1))
        else:
            val = signs[t - lag - lo]
        out = np.where(in_ak, theta * val, out)
    return out


def _pattern_values(spec, xs, n, functional):
    """Functional per (past pattern, cell), with each past pattern's probability."""
    lo, hi = _window(spec, n)
    past_len = -lo + 1
    fut_len = max(hi, 0)
    pasts = list(itertools.product((-1, 1), repeat=past_len))
    futures = list(itertools.product((-1, 1), repeat=fut_len))
    results = []
    for past in pasts:
        cond = np.zeros((n + 1, xs.shape[0]))
        for fut in futures:
            signs = past + fut
            for t in range(0, n + 1):
                cond[t] += _f_at(spec, xs, signs, lo, t)
        cond /= len(futures)
        f0 = cond[0]
        i_n = cond[1:].sum(axis=0)
        if functional == "NormF2":
            val = f0**2
        elif functional == "AbsIn":
            val = np.abs(i_n)
        elif functional == "CondSnL2":
            val = i_n**2
        elif functional == "AbsJn":
            val = np.abs(f0 * i_n)
        else:
            raise ValueError(f"unknown functional {functional!r}; expected one of {FUNCTIONALS}")
        results.append(val)
    return np.array(results)


def _sup_bound(spec, n, functional):
    per_k = [
        t * (lag if spec.variant else 1) for t, lag in zip(spec.thetas, spec.lags)
    ]
    top = max(per_k, default=0.0)
    i_sup = sum(t * min(n, 2 * lag if spec.variant else lag) * (lag if spec.variant else 1)
                for t, lag in zip(spec.thetas, spec.lags))
    return {"NormF2": top**2, "AbsIn": i_sup, "CondSnL2": i_sup**2, "AbsJn": top * i_sup}[functional]


def _boundaries(spec, k, n):
    """Exact points of coordinate ``k`` where some ``1{x + t alpha in arc}`` jumps, ``t <= n``."""
    rho, alpha = spec.sets.rho[k - 1], spec.sets.alpha[k - 1]
    pts = set()
    for t in range(n + 1):
        for edge in (Fraction(0), rho):
            p = edge - t * alpha
            pts.add(p - math.floor(p))
    return sorted(pts)


def brute_force_oracle(spec, functional: str, n: int = 1, grid: int = 100_000) -> OracleResult:
    """Expectation by sign enumeration times a midpoint grid on each circle coordinate.

    The error bound counts grid cells cut by an arc boundary (exact rational
    test) and charges each the functional's sup bound.
    """
    _check(spec, n)
    if grid < MIN_GRID:
        raise CapacityError(f"grid must be >= {MIN_GRID} per coordinate, got {grid}")
    if spec.k_max == 0:
        return OracleResult(0.0, 0.0, "grid")
    lo, hi = _window(spec, n)
    cells = grid**spec.k_max
    if cells * 2 ** (hi - lo + 1) * (n + 1) > MAX_CELLS_TIMES_PATTERNS:
        raise CapacityError(f"{cells} cells x {2 ** (hi - lo + 1)} sign patterns is too large")
    mids = (np.arange(grid) + 0.5) / grid
    axes = np.meshgrid(*([mids] * spec.k_max), indexing="ij")
    xs = np.stack([a.ravel() for a in axes], axis=1)
    vals = _pattern_values(spec, xs, n, functional)
    value = float(vals.mean())
    cut = Fraction(0)
    for k in range(1, spec.k_max + 1):
        cut_cells = {math.floor(b * grid) for b in _boundaries(spec, k, n) if (b * grid).denominator != 1}
        cut += Fraction(len(cut_cells), grid)
    bound = float(cut) * 2 * _sup_bound(spec, n, functional)
    return OracleResult(value, bound, "grid")


def interval_oracle(spec, functional: str, n: int = 1) -> OracleResult:
    """Exact expectation: every indicator is constant between consecutive boundaries."""
    _check(spec, n)
    if spec.k_max == 0:
        return OracleResult(0.0, 0.0, "interval")
    pieces = []
    for k in range(1, spec.k_max + 1):
        pts = _boundaries(spec, k, n) + [Fraction(1)]
        if pts[0] != 0:
            pts = [Fraction(0)] + pts
        pieces.append([(a, b) for a, b in zip(pts[:-1], pts[1:]) if b > a])
    total = Fraction(0)
    combos = list(itertools.product(*pieces))
    xs = np.array([[float((a + b) / 2) for a, b in combo] for combo in combos])
    weights = [math.prod((b - a for a, b in combo), start=Fraction(1)) for combo in combos]
    vals = _pattern_values(spec, xs, n, functional)
    per_cell = vals.mean(axis=0)
    for w, v in zip(weights, per_cell):
        total += w * Fraction(float(v))
    return OracleResult(float(total), 0.0, "interval")


def cond_exp_oracle(spec, x, past: dict, i: int) -> float:
    """``E(f o T^i | F_0)`` at circle point ``x`` and past signs ``{index: sign}`` by enumeration."""
    lo, hi = _window(spec, i)
    fut_len = max(hi, 0)
    xs = np.atleast_2d(np.asarray(x, dtype=float))
    past_signs = tuple(past[j] for j in range(lo, 1))
    acc = 0.0
    futures = list(itertools.product((-1, 1), repeat=fut_len))
    for fut in futures:
        acc += float(_f_at(spec, xs, past_signs + fut, lo, i)[0])
    return acc / len(futures)


def mean_abs_enumeration(n_terms: int) -> Fraction:
    """``E|e_1 + ... + e_N|`` by listing all ``2**N`` sign patterns."""
    total = sum(abs(sum(p)) for p in itertools.product((-1, 1), repeat=n_terms))
    return Fraction(total, 2**n_terms)


def bnk_enumeration(n: int, lag: int) -> Fraction:
    """``E|B|**2`` for ``B = sum_{i<=n} sum_{N<j<=2N} E(e_{i-j} | F_0)`` by sign enumeration."""
    terms = [i - j for i in range(1, n + 1) for j in range(lag + 1, 2 * lag + 1) if i - j <= 0]
    if not terms:
        return Fraction(0)
    idx = sorted(set(terms))
    pos = {u: p for p, u in enumerate(idx)}
    total = 0
    for pattern in itertools.product((-1, 1), repeat=len(idx)):
        b = sum(pattern[pos[u]] for u in terms)
        total += b * b
    return Fraction(total, 2 ** len(idx))
