"""Decision procedures for L2 membership and the three limit-theorem criteria.

Every criterion of the model reduces to the convergence of a series whose
terms are products of the family's geometric-polynomial sequences, so most
verdicts are exact.  The Maxwell-Woodroffe condition needs the growth
``S(n) ~ n**alpha (ln n)**beta`` of its inner sum; it is derived symbolically
when the split at ``N_k ~ n`` stays in the poly-log class and fitted
numerically otherwise.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.special import logsumexp, zeta

from .errors import VerdictMismatchError, UnsupportedCriterionError
from .family import BOUNDARY_TOL, GeomPolyTerm, SequenceFamily, is_one
from .moments import bnk_second_moment


class Status(str, Enum):
    CONVERGES = "Converges"
    DIVERGES = "Diverges"


SYMBOLIC = "symbolic"
NUMERIC = "numeric-heuristic"

L2 = "L2"
MC_L1 = "MC_L1"
PROJECTIVE = "Projective"
MW = "MaxwellWoodroffe"

IFF = "iff"
SUFFICIENT = "sufficient-only"

# Verdicts each preset is built to exhibit (absent keys are not claimed).
PRESET_VERDICTS = {
    "ce1": {L2: True, MC_L1: False, PROJECTIVE: True, MW: True},
    "ce2": {L2: True, MC_L1: True, PROJECTIVE: False, MW: True},
    "ce3": {L2: True, MC_L1: True, MW: False},
    "ce4": {L2: True, PROJECTIVE: True, MW: False},
}

TRACE_KS = tuple(2**m for m in range(3, 15))
MW_GRID = tuple(2**m for m in range(10, 23))


@dataclass(frozen=True)
class ConvergenceVerdict:
    status: Status
    method: str
    witness: tuple = ()

    @property
    def converges(self) -> bool:
        return self.status is Status.CONVERGES


@dataclass
class CriterionVerdict:
    criterion: str
    holds: bool | None
    strength: str
    method: str
    witness: dict = field(default_factory=dict)
    expected: bool | None = None

    @property
    def match(self) -> bool | None:
        if self.expected is None:
            return None
        return self.holds == self.expected


@dataclass(frozen=True)
class MwAsymptotics:
    """``S(n)`` is of exact order ``n**n_power * (ln n)**log_power``."""

    n_power: float
    log_power: float

    @property
    def summable(self) -> bool:
        """Whether ``sum_n S(n)**0.5 / n**1.5`` converges; the boundary (1, -2) diverges."""
        if self.n_power < 1 - BOUNDARY_TOL:
            return True
        if self.n_power > 1 + BOUNDARY_TOL:
            return False
        return self.log_power < -2 - BOUNDARY_TOL


# -- series classification ---------------------------------------------------


def _partial_sum_trace(term: GeomPolyTerm, ks=TRACE_KS) -> tuple:
    kmax = max(ks)
    logs = term.log_values(np.arange(1, kmax + 1))
    cum = np.logaddexp.accumulate(logs)
    with np.errstate(over="ignore"):
        return tuple((k, float(np.exp(cum[k - 1]))) for k in ks)


def classify_series(term: GeomPolyTerm) -> ConvergenceVerdict:
    """Exact convergence class of ``sum_k coeff * base**k * k**expo``."""
    trace = _partial_sum_trace(term)
    if term.is_zero or term.base < 1 - BOUNDARY_TOL:
        status = Status.CONVERGES
    elif term.base > 1 + BOUNDARY_TOL:
        status = Status.DIVERGES
    elif term.expo < -1 - BOUNDARY_TOL:
        status = Status.CONVERGES
    else:
        status = Status.DIVERGES
    return ConvergenceVerdict(status, SYMBOLIC, trace)


def classify_series_numeric(term: GeomPolyTerm, slope_cut: float = -0.02) -> ConvergenceVerdict:
    """Heuristic: convergence iff dyadic block sums shrink geometrically at the end.

    Block ``m`` collects ``k in [2**m, 2**(m+1))``.  By condensation a
    summable positive series has block sums decaying like ``2**(m (s+1))``;
    the slope of the last four log block sums decides.  Never exact at the
    boundary ``base == 1, expo == -1``.
    """
    trace = _partial_sum_trace(term)
    if term.is_zero:
        return ConvergenceVerdict(Status.CONVERGES, NUMERIC, trace)
    blocks = []
    for m in range(3, 14):
        ks = np.arange(2**m, 2 ** (m + 1))
        blocks.append(float(logsumexp(term.log_values(ks))))
    tail = np.array(blocks[-4:])
    slope = float(np.polyfit(np.arange(4), tail, 1)[0])
    status = Status.CONVERGES if slope < slope_cut else Status.DIVERGES
    return ConvergenceVerdict(status, NUMERIC, trace)


# -- reductions -----------------------------------------------------------------


def _n_term(family: SequenceFamily) -> GeomPolyTerm:
    return family.n_seq


def l2_term(family: SequenceFamily, variant: bool) -> GeomPolyTerm:
    t = family.theta**2 * family.rho
    return t * _n_term(family) if variant else t


def _resolve_variant(family, variant):
    return family.variant if variant is None else variant


def l2_test(family: SequenceFamily, variant: bool | None = None) -> CriterionVerdict:
    variant = _resolve_variant(family, variant)
    term = l2_term(family, variant)
    v = classify_series(term)
    return CriterionVerdict(
        L2, v.converges, IFF, v.method, {"term": term.to_dict(), "trace": v.witness}
    )


def mc_l1_test(family: SequenceFamily, variant: bool | None = None) -> CriterionVerdict:
    if _resolve_variant(family, variant):
        raise UnsupportedCriterionError(
            "no martingale-coboundary characterization is available for the variant model"
        )
    term = family.theta * family.n_seq**0.5 * family.rho
    v = classify_series(term)
    return CriterionVerdict(
        MC_L1, v.converges, IFF, v.method, {"term": term.to_dict(), "trace": v.witness}
    )


def projective_test(family: SequenceFamily, variant: bool | None = None) -> CriterionVerdict:
    variant = _resolve_variant(family, variant)
    strength = SUFFICIENT if variant else IFF
    l2 = l2_test(family, variant)
    if not l2.holds:
        return CriterionVerdict(
            PROJECTIVE, None, strength, SYMBOLIC,
            {"indeterminate": "f is not in L2; the characterization does not apply"},
        )
    if variant:
        term = family.theta**2 * family.n_seq**2 * family.rho
    else:
        term = family.theta**2 * family.n_seq**0.5 * family.rho
    v = classify_series(term)
    witness = {"term": term.to_dict(), "trace": v.witness}
    if variant and not v.converges:
        witness["indeterminate"] = "sufficient condition fails; no conclusion"
        return CriterionVerdict(PROJECTIVE, None, strength, v.method, witness)
    return CriterionVerdict(PROJECTIVE, v.converges, strength, v.method, witness)


# -- Maxwell-Woodroffe ------------------------------------------------------------


def _tail_sum(term: GeomPolyTerm, start: int, rel_tol: float = 1e-16) -> float:
    """``sum_{k>=start} term(k)``: closed form (Hurwitz zeta) or summed to a geometric bound."""
    if term.is_zero:
        return 0.0
    if term.base > 1 + BOUNDARY_TOL:
        return math.inf
    if is_one(term.base):
        if term.expo >= -1 - BOUNDARY_TOL:
            return math.inf
        return term.coeff * float(zeta(-term.expo, start))
    total = 0.0
    k0 = start
    log_b = math.log(term.base)
    peak = -term.expo / log_b if term.expo > 0 else 0.0
    while True:
        ks = np.arange(k0, k0 + 1024)
        vals = np.exp(term.log_values(ks))
        total += float(vals.sum())
        k0 += 1024
        last = float(vals[-1])
        if k0 > peak and (last == 0.0 or last / (1 - term.base) <= rel_tol * max(total, 1e-300)):
            return total


def _head_arrays(family: SequenceFamily, n: int):
    """``k``, theta**2 rho and N arrays for all k with ``N_k < n`` (plus bookkeeping)."""
    k_max = 8
    while True:
        ns = family.n_array(k_max)
        if ns[-1] >= n:
            break
        if k_max > 2**24:
            raise OverflowError(f"N_k stays below n={n} past k={k_max}")
        k_max *= 2
    split = int(np.searchsorted(ns, n, side="left"))  # first index with N_k >= n
    ks = np.arange(1, split + 1, dtype=float)
    t = np.exp((family.theta**2 * family.rho).log_values(ks)) if not family.is_zero else np.zeros(split)
    return ks, t, ns[:split], split + 1


def mw_inner_sum(family: SequenceFamily, n: int, variant: bool | None = None) -> float:
    """``S(n) = sum_k theta_k**2 min(n, N_k) rho_k`` (variant: exact ``E|B_n^k|**2`` in place of the min)."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if family.is_zero:
        return 0.0
    variant = _resolve_variant(family, variant)
    ks, t, ns, k_split = _head_arrays(family, n)
    t2rho = family.theta**2 * family.rho
    if not variant:
        return float(np.sum(t * ns)) + n * _tail_sum(t2rho, k_split)
    head = sum(float(ti) * bnk_second_moment(n, int(ni)) for ti, ni in zip(t, ns))
    # For N_k >= n: E|B|^2 = (N_k - n) n^2 + P(n).
    p_n = bnk_second_moment(n, n)
    return head + n * n * _variant_tail(family, k_split) + (p_n - n**3) * _tail_sum(t2rho, k_split)


def _variant_tail(family: SequenceFamily, start: int) -> float:
    """``sum_{k>=start} theta_k**2 rho_k N_k`` with the integerized ``N_k``."""
    envelope = family.theta**2 * family.rho * family.n_seq
    if envelope.base > 1 + BOUNDARY_TOL:
        return math.inf
    if is_one(envelope.base):
        direct_to = start + 20000
        ks = np.arange(start, direct_to, dtype=float)
        ns = family.n_array(direct_to - 1)[start - 1:]
        t = np.exp((family.theta**2 * family.rho).log_values(ks))
        return float(np.sum(t * ns)) + _tail_sum(envelope, direct_to)
    total = 0.0
    k0 = start
    while True:
        ks = np.arange(k0, k0 + 256, dtype=float)
        ns = family.n_array(k0 + 255)[k0 - 1:]
        vals = np.exp((family.theta**2 * family.rho).log_values(ks)) * ns
        total += float(vals.sum())
        k0 += 256
        if vals[-1] / (1 - envelope.base) <= 1e-16 * max(total, 1e-300) and vals[-1] <= vals[0]:
            return total


def _partial_growth(term: GeomPolyTerm, log_bn: float, s_n: float, poly_n: bool):
    """Order of ``sum_{k<=K} term(k)`` with ``K = k*(n)``; None leaves the poly-log class."""
    c, b, s = term.coeff, term.base, term.expo
    if is_one(b):
        if s > -1 + BOUNDARY_TOL:
            return ((s + 1) / s_n, 0.0) if poly_n else (0.0, s + 1)
        if s >= -1 - BOUNDARY_TOL:
            return (0.0, 1.0) if poly_n else (0.0, 0.0)
        return (0.0, 0.0)
    if poly_n:
        return None
    if b > 1:
        alpha = math.log(b) / log_bn
        return (alpha, s - s_n * alpha)
    return (0.0, 0.0)


def _tail_growth(term: GeomPolyTerm, q: int, log_bn: float, s_n: float, poly_n: bool):
    """Order of ``n**q * sum_{k>K} term(k)``; None leaves the poly-log class."""
    c, b, s = term.coeff, term.base, term.expo
    if is_one(b):
        if poly_n:
            return (q + (s + 1) / s_n, 0.0)
        return (float(q), s + 1)
    if poly_n:
        return None
    gamma = math.log(b) / log_bn
    return (q + gamma, s - s_n * gamma)


def mw_asymptotics(family: SequenceFamily, variant: bool | None = None) -> MwAsymptotics | None:
    """Symbolic order of ``S(n)``; None when the split leaves the poly-log class.

    Requires ``f`` in L2 (the tail series converges).  With ``K`` the split
    index where ``N_K ~ n``, the head is ``sum_{k<=K} theta^2 rho N^p`` and
    the tail ``n^q sum_{k>K} theta^2 rho N^(p-q)`` with ``(p, q) = (1, 1)``
    for the standard model and ``(3, 2)`` for the variant.
    """
    variant = _resolve_variant(family, variant)
    t = family.theta**2 * family.rho
    n_term = family.n_seq
    p, q = (3, 2) if variant else (1, 1)
    head = t * n_term**p
    tail = t * n_term ** (p - q)
    poly_n = is_one(n_term.base)
    log_bn = 0.0 if poly_n else math.log(n_term.base)
    s_n = n_term.expo
    parts = [
        _partial_growth(head, log_bn, s_n, poly_n),
        _tail_growth(tail, q, log_bn, s_n, poly_n),
    ]
    if any(part is None for part in parts):
        return None
    alpha, beta = max(parts)
    return MwAsymptotics(alpha, beta)


def fit_mw_exponents(ns, values):
    """Least-squares fit of ``ln S = c + alpha ln n + beta ln ln n``."""
    x = np.log(np.asarray(ns, dtype=float))
    y = np.log(np.asarray(values, dtype=float))
    design = np.column_stack([np.ones_like(x), x, np.log(x)])
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    return float(coef[1]), float(coef[2])


def mw_numeric(family, variant=None, grid=MW_GRID, guard=0.05, beta_band=0.25, beta_jitter=0.25):
    """Numeric-heuristic Maxwell-Woodroffe verdict from a fit of ``S(n)`` on ``grid``.

    Returns ``(holds, witness)`` where ``holds`` is None when the fit is
    inconclusive.  Away from ``alpha = 1`` (outside ``guard``) the fitted
    alpha decides.  Inside the guard band the log exponent must be stable
    across the two halves of the grid; a stable beta within ``beta_band`` of
    -2 is the boundary case and classified as divergent.
    """
    variant = _resolve_variant(family, variant)
    values = [mw_inner_sum(family, n, variant) for n in grid]
    witness = {"trace": tuple(zip(grid, values))}
    if not all(v > 0 and math.isfinite(v) for v in values):
        witness["reason"] = "inner sum not positive and finite on the grid"
        return None, witness
    alpha, beta = fit_mw_exponents(grid, values)
    witness.update(alpha=alpha, beta=beta)
    if abs(alpha - 1) > guard:
        return alpha < 1, witness
    half = len(grid) // 2
    betas = [fit_mw_exponents(grid[:half + 1], values[:half + 1])[1],
             fit_mw_exponents(grid[half:], values[half:])[1]]
    witness["beta_halves"] = tuple(betas)
    if max(abs(b - beta) for b in betas) > beta_jitter:
        witness["reason"] = "log exponent unstable inside the guard band"
        return None, witness
    if beta < -2 - beta_band:
        return True, witness
    if beta <= -2 + beta_band:
        witness["boundary"] = True
    return False, witness


def mw_test(family: SequenceFamily, variant: bool | None = None, method: str | None = None) -> CriterionVerdict:
    """Maxwell-Woodroffe condition.  ``method`` forces "symbolic" or "numeric-heuristic"."""
    variant = _resolve_variant(family, variant)
    if family.is_zero:
        return CriterionVerdict(MW, True, IFF, SYMBOLIC, {"reason": "f == 0"})
    if not l2_test(family, variant).holds:
        return CriterionVerdict(MW, False, IFF, SYMBOLIC, {"reason": "S(n) is infinite (f not in L2)"})
    asym = None if method == NUMERIC else mw_asymptotics(family, variant)
    if asym is not None:
        return CriterionVerdict(
            MW, asym.summable, IFF, SYMBOLIC,
            {"alpha": asym.n_power, "beta": asym.log_power},
        )
    if method == SYMBOLIC:
        raise UnsupportedCriterionError("inner-sum asymptotics leave the poly-log class")
    holds, witness = mw_numeric(family, variant)
    if holds is None:
        witness["indeterminate"] = True
    return CriterionVerdict(MW, holds, IFF, NUMERIC, witness)


def criteria_table(family: SequenceFamily, variant: bool | None = None, strict: bool = True) -> list[CriterionVerdict]:
    """Run every applicable test; for presets compare against the expected verdicts.

    With ``strict`` a disagreement with a claimed row raises
    :class:`VerdictMismatchError`.
    """
    variant = _resolve_variant(family, variant)
    rows = [l2_test(family, variant)]
    if not variant:
        rows.append(mc_l1_test(family, variant))
    rows.append(projective_test(family, variant))
    rows.append(mw_test(family, variant))
    expected = PRESET_VERDICTS.get(family.name) if variant == family.variant else None
    if expected:
        for row in rows:
            row.expected = expected.get(row.criterion)
        bad = [r.criterion for r in rows if r.match is False]
        if bad and strict:
            raise VerdictMismatchError(f"{family.name}: verdicts disagree with the expected preset verdicts on {bad}")
    return rows
