"""Exact moments of Rademacher sums used in place of Marcinkiewicz-Zygmund constants."""
from __future__ import annotations

import math
from fractions import Fraction


def _sq(a: int) -> int:
    """``sum_{m=0}^{a} m**2`` (zero for negative ``a``)."""
    if a <= 0:
        return 0
    return a * (a + 1) * (2 * a + 1) // 6


def exact_mean_abs_rademacher(n_terms: int) -> float:
    """``E|e_1 + ... + e_N|`` from the binomial law of the number of +1 signs."""
    if not 1 <= n_terms <= 64:
        raise ValueError(f"N must be in [1, 64], got {n_terms}")
    total = sum(math.comb(n_terms, j) * abs(2 * j - n_terms) for j in range(n_terms + 1))
    return float(Fraction(total, 2**n_terms))


def bnk_coefficients(n: int, lag: int) -> dict[int, int]:
    """Coefficients of ``sum_{i<=n} sum_{N<j<=2N} E(e_{i-j} | F_0)`` on ``e_{-m}``.

    Keys are ``m >= 0``; zero coefficients are dropped.  The three branches
    follow the split n >= 2N, N < n < 2N, n <= N.
    """
    big_n = lag
    coef: dict[int, int] = {}
    if n <= 0:
        return coef
    if n >= 2 * big_n:
        for m in range(big_n):
            coef[m] = big_n
    elif n > big_n:
        for m in range(2 * big_n - n + 1):
            coef[m] = n - big_n + m
        for m in range(2 * big_n - n + 1, big_n):
            coef[m] = big_n
    else:
        for j in range(n + 1):
            coef[big_n - j] = n - j
        for j in range(1, big_n + 1):
            coef[big_n + j] = min(n, big_n - j)
        return {m: c for m, c in coef.items() if c}
    for j in range(big_n):
        coef[big_n + j] = big_n - j
    return {m: c for m, c in coef.items() if c}


def bnk_second_moment(n: int, lag: int) -> int:
    """Exact ``E|B_n^k|**2`` for ``N_k = lag`` (sum of squared coefficients)."""
    big_n = lag
    if lag < 1:
        raise ValueError(f"N must be >= 1, got {lag}")
    if n <= 0:
        return 0
    if n >= 2 * big_n:
        return big_n**3 + _sq(big_n)
    if n > big_n:
        return _sq(big_n) - _sq(n - big_n - 1) + (n - big_n - 1) * big_n**2 + _sq(big_n)
    return _sq(n) + (big_n - n) * n * n + _sq(n - 1)
