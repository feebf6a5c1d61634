"""Pointwise evaluation of f, its conditional expectations and transfer function, and Monte Carlo.

All conditional expectations are exact: indicators of the ``A_k`` depend on
the circle coordinates only (which are F_0-measurable) and
``E(e_i | F_0) = e_i 1{i <= 0}``.  Sums over time are evaluated on the
interval sets returned by :func:`realization.ak_times`, so a lag ``N_k`` in
the millions costs one range sum instead of a loop.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .errors import NonFiniteReplicateError, ZeroVarianceError
from .family import SequenceFamily, choose_rn
from .moments import bnk_coefficients, bnk_second_moment, exact_mean_abs_rademacher
from .realization import (
    OmegaPoint,
    SetSystem,
    StreamSigns,
    active_k,
    ak_times,
    build_sets,
    measure_Ak,
    split_key,
)

__all__ = [
    "ModelSpec", "McEstimate", "CltResult", "TransferRatioSummary", "STATISTICS",
    "build_model", "sign_control", "eval_f", "cond_exp_f_shift", "partial_sum_In",
    "partial_sum_Jn", "transfer_g", "orbit_values", "transfer_orbit", "martingale_orbit",
    "replicate", "mc_estimate", "empirical_clt", "max_transfer_ratio", "norm_f2_exact",
    "choose_Rn", "bnk_coefficients", "bnk_second_moment", "exact_mean_abs_rademacher",
]

STATISTICS = (
    "NormF2", "AbsIn", "AbsJn", "CondSnL2", "TransferIncL2", "MartL2", "MaxTransferRatio",
)

# Transfer orbits with N_k + n below this are evaluated on a dense time grid.
DENSE_TRANSFER = 1 << 20


@dataclass(frozen=True)
class ModelSpec:
    family: SequenceFamily | None
    k_max: int
    sets: SetSystem
    variant: bool = False
    horizon_rule: str = "standard"
    control: bool = False
    thetas: tuple = field(init=False, repr=False)
    lags: tuple = field(init=False, repr=False)

    def __post_init__(self):
        if self.variant and self.horizon_rule != "double":
            raise ValueError("the variant model requires the 'double' horizon rule")
        if self.control or self.family is None:
            thetas, lags = (), ()
        else:
            thetas = tuple(self.family.theta_k(k) for k in range(1, self.k_max + 1))
            lags = self.family.n_values(self.k_max) if self.k_max else ()
        object.__setattr__(self, "thetas", thetas)
        object.__setattr__(self, "lags", tuple(lags))

    @property
    def is_zero(self) -> bool:
        return not self.control and (self.k_max == 0 or self.family.is_zero)

    @property
    def reach(self) -> int:
        """Largest ``i`` with a nonzero ``E(f o T^i | F_0)``."""
        if self.control or not self.lags:
            return 0
        return max(self.lags) * (2 if self.variant else 1)

    def describe(self) -> dict:
        if self.control:
            return {"control": "f = e_0"}
        d = self.family.to_dict(self.k_max)
        d["horizon_rule"] = self.horizon_rule
        return d


def build_model(family: SequenceFamily, k_max: int, horizon_rule: str | None = None) -> ModelSpec:
    rule = horizon_rule or family.horizon_rule
    sets = build_sets(family, k_max, rule)
    return ModelSpec(family, k_max, sets, family.variant, rule)


def sign_control() -> ModelSpec:
    """Pure-sign control ``f = e_0`` (i.i.d. increments, no sets)."""
    return ModelSpec(None, 0, SetSystem((), (), ()), control=True)


@dataclass(frozen=True)
class McEstimate:
    statistic: str
    n: int
    samples: int
    mean: float
    stderr: float
    seed: int


@dataclass(frozen=True)
class CltResult:
    ks_distance: float
    sigma_hat: float
    p_value: float
    n: int
    samples: int
    seed: int


@dataclass(frozen=True)
class TransferRatioSummary:
    median: float
    q90: float
    n: int
    samples: int
    seed: int


def choose_Rn(family: SequenceFamily, n: int) -> int:
    return choose_rn(family, n)


# -- pointwise functionals -------------------------------------------------------


def eval_f(point: OmegaPoint, spec: ModelSpec) -> float:
    if spec.control:
        return float(point.sign(0))
    if spec.is_zero:
        return 0.0
    k = active_k(point, spec.sets)
    if k == 0:
        return 0.0
    lag, theta = spec.lags[k - 1], spec.thetas[k - 1]
    if spec.variant:
        return theta * point.range_sum(-2 * lag, -lag)
    return theta * point.sign(-lag)


def _variant_cond(point, lag, t_lo, t_hi, cap=0):
    """``sum_{u=t-2N}^{min(t-N-1, cap)} e_u`` for ``t`` in ``[t_lo, t_hi)``."""
    base = t_lo - 2 * lag
    top = min(t_hi - lag - 1, cap + 1)
    if top <= base:
        return np.zeros(t_hi - t_lo)
    csum = np.concatenate(([0], np.cumsum(point.read(base, top), dtype=np.int64)))
    t = np.arange(t_lo, t_hi)
    hi = np.minimum(t - lag, cap + 1)
    lo = t - 2 * lag
    vals = csum[np.clip(hi - base, 0, None)] - csum[lo - base]
    return np.where(hi > lo, vals, 0).astype(float)


def _cond_sum(point: OmegaPoint, spec: ModelSpec, i0: int, i1: int) -> float:
    """``sum_{i0 <= i < i1} E(f o T^i | F_0)``."""
    if spec.control:
        return float(point.sign(0)) if i0 <= 0 < i1 else 0.0
    if spec.is_zero:
        return 0.0
    total = 0.0
    for k in range(1, spec.k_max + 1):
        lag, theta = spec.lags[k - 1], spec.thetas[k - 1]
        stop = min(i1, (2 * lag if spec.variant else lag) + 1)
        if stop <= i0:
            continue
        for a, b in ak_times(point, spec.sets, k, i0, stop):
            if spec.variant:
                total += theta * float(_variant_cond(point, lag, a, b).sum())
            else:
                total += theta * point.range_sum(a - lag, b - lag)
    return total


def cond_exp_f_shift(point: OmegaPoint, i: int, spec: ModelSpec) -> float:
    """Exact ``E(f o T^i | F_0)`` at the point."""
    if i < 1:
        raise ValueError(f"i must be >= 1, got {i}")
    return _cond_sum(point, spec, i, i + 1)


def partial_sum_In(point: OmegaPoint, n: int, spec: ModelSpec) -> float:
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    return _cond_sum(point, spec, 1, n + 1)


def partial_sum_Jn(point: OmegaPoint, n: int, spec: ModelSpec) -> float:
    f = eval_f(point, spec)
    return 0.0 if f == 0 else f * partial_sum_In(point, n, spec)


def transfer_g(point: OmegaPoint, spec: ModelSpec) -> float:
    """``g = sum_{i>=0} E(f o T^i | F_0)`` (finite: terms vanish past the largest lag)."""
    return _cond_sum(point, spec, 0, spec.reach + 1)


# -- orbits ------------------------------------------------------------------------


def orbit_values(point: OmegaPoint, spec: ModelSpec, n: int) -> np.ndarray:
    """``f o T^t`` for ``t = 0..n-1``."""
    out = np.zeros(n)
    if spec.control:
        return point.read(0, n).astype(float)
    if spec.is_zero:
        return out
    for k in range(1, spec.k_max + 1):
        lag, theta = spec.lags[k - 1], spec.thetas[k - 1]
        for a, b in ak_times(point, spec.sets, k, 0, n):
            if spec.variant:
                out[a:b] = theta * _variant_cond(point, lag, a, b, cap=b)
            else:
                out[a:b] = theta * point.read(a - lag, b - lag)
    return out


def _lag_values(point, spec, k, t0, t1):
    """``v(m) = e_{m-N_k} 1{T^m in A_k}`` on ``[t0, t1)``."""
    lag = spec.lags[k - 1]
    v = np.zeros(t1 - t0)
    for a, b in ak_times(point, spec.sets, k, t0, t1):
        v[a - t0:b - t0] = point.read(a - lag, b - lag)
    return v


def _transfer_standard(point, spec, k, n):
    """``g_k o T^s = theta_k sum_{m=s}^{s+N_k} v(m)`` for ``s = 0..n``."""
    lag = spec.lags[k - 1]
    if not ak_times(point, spec.sets, k, 0, n + lag + 1):
        return np.zeros(n + 1)
    if n + lag + 1 <= DENSE_TRANSFER:
        v = _lag_values(point, spec, k, 0, n + lag + 1)
        c = np.concatenate(([0.0], np.cumsum(v)))
        s = np.arange(n + 1)
        return c[s + lag + 1] - c[s]
    total = sum(
        point.range_sum(a - lag, b - lag) for a, b in ak_times(point, spec.sets, k, 0, lag + 1)
    )
    head = np.concatenate(([0.0], np.cumsum(_lag_values(point, spec, k, 0, n))))
    tail = np.concatenate(([0.0], np.cumsum(_lag_values(point, spec, k, lag + 1, lag + 1 + n))))
    return total + tail - head


def _transfer_variant(point, spec, k, n):
    lag = spec.lags[k - 1]
    span = n + 2 * lag + 1
    mask = np.zeros(span)
    for a, b in ak_times(point, spec.sets, k, 0, span):
        mask[a:b] = 1.0
    if not mask.any():
        return np.zeros(n + 1)
    lo = -2 * lag
    csum = np.concatenate(([0], np.cumsum(point.read(lo, n + lag + 1), dtype=np.int64))).astype(float)

    def c(u):
        return csum[u - lo]

    t = np.arange(span)
    w = mask * (c(t - lag) - c(t - 2 * lag))
    cw = np.concatenate(([0.0], np.cumsum(w)))
    cm = np.concatenate(([0.0], np.cumsum(mask)))
    cmc = np.concatenate(([0.0], np.cumsum(mask * c(t - 2 * lag))))
    s = np.arange(n + 1)
    near = cw[s + lag + 2] - cw[s]
    far_count = cm[s + 2 * lag + 1] - cm[np.minimum(s + lag + 2, s + 2 * lag + 1)]
    far_c = cmc[s + 2 * lag + 1] - cmc[np.minimum(s + lag + 2, s + 2 * lag + 1)]
    return near + c(s + 1) * far_count - far_c


def transfer_orbit(point: OmegaPoint, spec: ModelSpec, n: int) -> np.ndarray:
    """``g o T^s`` for ``s = 0..n``."""
    if spec.control:
        return point.read(0, n + 1).astype(float)
    out = np.zeros(n + 1)
    if spec.is_zero:
        return out
    for k in range(1, spec.k_max + 1):
        theta = spec.thetas[k - 1]
        part = _transfer_variant(point, spec, k, n) if spec.variant else _transfer_standard(point, spec, k, n)
        out += theta * part
    return out


def martingale_orbit(point: OmegaPoint, spec: ModelSpec, n: int) -> np.ndarray:
    """``m o T^s = f o T^s - g o T^s + g o T^{s+1}`` for ``s = 0..n-1``."""
    g = transfer_orbit(point, spec, n)
    return orbit_values(point, spec, n) - g[:-1] + g[1:]


# -- Monte Carlo ------------------------------------------------------------------------


def _point(seed: int, index: int, spec: ModelSpec) -> OmegaPoint:
    stream = StreamSigns(split_key(seed, index))
    return OmegaPoint(stream, stream.coordinates(spec.k_max))


def replicate(statistic: str, point: OmegaPoint, spec: ModelSpec, n: int) -> float:
    """One draw of ``statistic`` at ``point`` (horizon ``n`` where it matters)."""
    if statistic == "NormF2":
        return eval_f(point, spec) ** 2
    if statistic == "AbsIn":
        return abs(partial_sum_In(point, n, spec))
    if statistic == "CondSnL2":
        return partial_sum_In(point, n, spec) ** 2
    if statistic == "AbsJn":
        return abs(partial_sum_Jn(point, n, spec))
    if statistic in ("TransferIncL2", "MartL2"):
        g = transfer_orbit(point, spec, 1)
        inc = g[0] - g[1]
        if statistic == "TransferIncL2":
            return inc * inc
        return (eval_f(point, spec) - inc) ** 2
    if statistic == "MaxTransferRatio":
        return float(np.max(np.abs(transfer_orbit(point, spec, n)))) / math.sqrt(n)
    if statistic == "Sn":
        if spec.control:
            return float(point.range_sum(0, n))
        return float(orbit_values(point, spec, n).sum())
    raise ValueError(f"unknown statistic {statistic!r}; expected one of {STATISTICS}")


def _chunk(statistic, spec, n, seed, lo, hi):
    return [replicate(statistic, _point(seed, i, spec), spec, n) for i in range(lo, hi)]


def replicate_values(statistic: str, spec: ModelSpec, n: int, samples: int, seed: int, workers: int = 1) -> np.ndarray:
    """Replicates in sample order; replicate ``i`` depends only on ``(seed, i)``."""
    if workers <= 1 or samples < 2 * workers:
        values = _chunk(statistic, spec, n, seed, 0, samples)
    else:
        bounds = np.linspace(0, samples, 4 * workers + 1).astype(int)
        with ProcessPoolExecutor(workers) as pool:
            futures = [
                pool.submit(_chunk, statistic, spec, n, seed, int(a), int(b))
                for a, b in zip(bounds[:-1], bounds[1:])
            ]
            values = [v for fut in futures for v in fut.result()]
    arr = np.asarray(values, dtype=float)
    bad = np.nonzero(~np.isfinite(arr))[0]
    if bad.size:
        raise NonFiniteReplicateError(statistic, int(bad[0]), seed)
    return arr


def mc_estimate(statistic: str, spec: ModelSpec, n: int, samples: int, seed: int, workers: int = 1) -> McEstimate:
    if samples < 100:
        raise ValueError(f"samples must be >= 100, got {samples}")
    if statistic not in STATISTICS:
        raise ValueError(f"unknown statistic {statistic!r}; expected one of {STATISTICS}")
    arr = replicate_values(statistic, spec, n, samples, seed, workers)
    stderr = float(arr.std(ddof=1) / math.sqrt(samples))
    return McEstimate(statistic, n, samples, float(arr.mean()), stderr, seed)


def empirical_clt(spec: ModelSpec, n: int, samples: int, seed: int, workers: int = 1) -> CltResult:
    """KS distance of ``S_n / (sqrt(n) sigma_hat)`` to N(0, 1)."""
    if n < 256:
        raise ValueError(f"n must be >= 256, got {n}")
    if samples < 1000:
        raise ValueError(f"samples must be >= 1000, got {samples}")
    s = replicate_values("Sn", spec, n, samples, seed, workers) / math.sqrt(n)
    sigma = float(s.std(ddof=1))
    if sigma < 1e-12:
        raise ZeroVarianceError(f"sigma_hat = {sigma:.3g} < 1e-12; S_n is degenerate")
    res = stats.kstest(s / sigma, "norm")
    return CltResult(float(res.statistic), sigma, float(res.pvalue), n, samples, seed)


def max_transfer_ratio(spec: ModelSpec, n: int, samples: int, seed: int, workers: int = 1) -> TransferRatioSummary:
    """Median and 0.9-quantile of ``max_{0<=i<=n} |g o T^i| / sqrt(n)``."""
    vals = replicate_values("MaxTransferRatio", spec, n, samples, seed, workers)
    med, q90 = np.quantile(vals, [0.5, 0.9])
    return TransferRatioSummary(float(med), float(q90), n, samples, seed)


def norm_f2_exact(spec: ModelSpec) -> float:
    """Exact ``||f||_2^2`` of the truncated model."""
    if spec.control:
        return 1.0
    if spec.is_zero:
        return 0.0
    total = 0.0
    for k in range(1, spec.k_max + 1):
        # Variant: E(sum of N_k signs)**2 = N_k.
        second = spec.lags[k - 1] if spec.variant else 1
        total += spec.thetas[k - 1] ** 2 * second * float(measure_Ak(spec.sets, k))
    return total
