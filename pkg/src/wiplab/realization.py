"""Concrete probability space for the model.

The sign sequence ``(e_i)`` is i.i.d. Rademacher and the set ``A_k`` lives on
a product of circles: coordinate ``k`` carries the arc ``[0, rho_k)`` and
rotates by ``alpha_k`` per step.  ``A_k`` is arc ``k`` minus all deeper arcs,
so the ``A_k`` are disjoint and every measure is an exact product.  Rotation
speeds are tiny (``alpha_k = delta_k / (4 H_k)``), which makes ``A_k`` almost
invariant over ``H_k`` steps.

Exact quantities (measures, symmetric differences) use ``Fraction``; sampling
and orbit membership use float64 with one fixed expression for the
coordinate at time ``t`` so that pointwise and range-based queries agree.
"""
from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import CapacityError, InvalidFamilyError, OutOfWindowError
from .family import SequenceFamily

BLOCK = 4096
_WORDS = BLOCK // 64
# Philox advances its counter by one per four output words.
_CTR_PER_BLOCK = _WORDS // 4
_MASK64 = (1 << 64) - 1

# Ranges shorter than about this many steps per turn are scanned densely instead of bisected.
DENSE_SCAN = 1 << 16


@dataclass(frozen=True)
class SetSystem:
    rho: tuple[Fraction, ...]
    alpha: tuple[Fraction, ...]
    horizons: tuple[int, ...]
    eps: tuple[Fraction, ...] = ()
    lam: Fraction | None = None
    rho_f: np.ndarray = field(init=False, repr=False, compare=False)
    alpha_f: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not len(self.rho) == len(self.alpha) == len(self.horizons):
            raise ValueError("rho, alpha and horizons must have equal length")
        for r, a in zip(self.rho, self.alpha):
            if not 0 < r < 1:
                raise InvalidFamilyError(f"arc length must be in (0, 1), got {r}")
            if not 0 < a < 1:
                raise InvalidFamilyError(f"rotation step must be in (0, 1), got {a}")
        object.__setattr__(self, "rho_f", np.array([float(r) for r in self.rho]))
        object.__setattr__(self, "alpha_f", np.array([float(a) for a in self.alpha]))

    @property
    def k_max(self) -> int:
        return len(self.rho)

    @property
    def a(self) -> Fraction | None:
        if self.lam is None:
            return None
        return 1 - self.lam / (1 - self.lam)

    @classmethod
    def from_values(cls, rho, alpha, horizons) -> "SetSystem":
        """Hand-built system (tests and tiny oracle instances)."""
        return cls(
            tuple(Fraction(r) for r in rho),
            tuple(Fraction(a) for a in alpha),
            tuple(int(h) for h in horizons),
        )

    def check_k(self, k: int):
        if not 1 <= k <= self.k_max:
            raise IndexError(f"k={k} outside 1..{self.k_max}")


def build_sets(family: SequenceFamily, k_max: int, horizon_rule: str | None = None) -> SetSystem:
    """Arcs ``[0, rho_k)`` with ``alpha_k = delta_k / (4 H_k)``, ``delta_k = eps_k - eps_{k+1}``."""
    if k_max < 0:
        raise ValueError(f"k_max must be >= 0, got {k_max}")
    if k_max == 0:
        return SetSystem((), (), (), (), Fraction(family.lam))
    rule = horizon_rule or family.horizon_rule
    hs = family.horizons(k_max, rule)
    eps = family.epsilons(k_max + 1, rule)
    lam = Fraction(family.lam)
    alphas = []
    for k in range(k_max):
        delta = eps[k] - eps[k + 1]
        if delta <= 0:
            raise InvalidFamilyError(f"eps must be strictly decreasing (delta_{k + 1} = {delta})")
        alphas.append(delta / (4 * hs[k]))
    rho = tuple(lam ** (k + 1) for k in range(k_max))
    return SetSystem(rho, tuple(alphas), tuple(hs), tuple(eps[:k_max]), lam)


# -- exact measures ------------------------------------------------------------


def measure_Ak(sets: SetSystem, k: int) -> Fraction:
    """``rho_k * prod_{j>k} (1 - rho_j)``."""
    sets.check_k(k)
    out = sets.rho[k - 1]
    for r in sets.rho[k:]:
        out *= 1 - r
    return out


def _overlap(rho: Fraction, d: Fraction) -> Fraction:
    """Length of ``[0, rho) ∩ ([0, rho) - d)`` on the circle, ``0 <= d < 1``."""
    return max(Fraction(0), rho - d) + max(Fraction(0), d + rho - 1)


def _shift_frac(steps: int, alpha: Fraction) -> Fraction:
    d = steps * alpha
    return d - math.floor(d)


def symmdiff_exact(sets: SetSystem, k: int, i: int, j: int) -> Fraction:
    """Exact ``mu(T^-i A_k  Δ  T^-j A_k)``.

    Both sets have measure ``mu(A_k)``; their intersection factorizes over
    coordinates: arc ``k`` against its shifted copy and, for deeper ``l``,
    the complement of arc ``l`` against its shifted copy.
    """
    sets.check_k(k)
    if i < 0 or j < 0:
        raise ValueError("i and j must be >= 0")
    steps = abs(i - j)
    if steps == 0:
        return Fraction(0)
    both = _overlap(sets.rho[k - 1], _shift_frac(steps, sets.alpha[k - 1]))
    for rho, alpha in zip(sets.rho[k:], sets.alpha[k:]):
        both *= 1 - 2 * rho + _overlap(rho, _shift_frac(steps, alpha))
    return 2 * measure_Ak(sets, k) - 2 * both


def symmdiff_bound(sets: SetSystem, k: int, i: int, j: int) -> Fraction:
    """Subadditive bound: sum over coordinates ``l >= k`` of ``mu(arc_l  Δ  shifted arc_l)``."""
    sets.check_k(k)
    steps = abs(i - j)
    total = Fraction(0)
    for rho, alpha in zip(sets.rho[k - 1:], sets.alpha[k - 1:]):
        total += 2 * (rho - _overlap(rho, _shift_frac(steps, alpha)))
    return total


def max_symmdiff(sets: SetSystem, k: int, horizon: int | None = None, brute_limit: int = 20000) -> Fraction:
    """``max_{0 <= i, j <= H} symmdiff_exact`` with ``H = H_k`` by default.

    The value depends on ``|i - j|`` only and is nondecreasing in it while no
    coordinate has turned by more than ``min(rho_l, 1 - rho_l)``; in that
    regime the maximum sits at ``|i - j| = H``.
    """
    sets.check_k(k)
    h = sets.horizons[k - 1] if horizon is None else horizon
    monotone = all(h * a <= min(r, 1 - r) for r, a in zip(sets.rho[k - 1:], sets.alpha[k - 1:]))
    if monotone:
        return symmdiff_exact(sets, k, h, 0)
    if h > brute_limit:
        raise CapacityError(f"horizon {h} too large for a brute-force sweep")
    return max(symmdiff_exact(sets, k, d, 0) for d in range(h + 1))


# -- sign sources --------------------------------------------------------------


class FixedSigns:
    """Explicit sign window ``e_lo .. e_{lo+len-1}``; reads outside raise."""

    def __init__(self, lo: int, values):
        self.lo = int(lo)
        self.values = np.asarray(values, dtype=np.int8)
        if not np.all(np.abs(self.values) == 1):
            raise ValueError("signs must be +1 or -1")

    @classmethod
    def from_dict(cls, mapping: dict) -> "FixedSigns":
        lo, hi = min(mapping), max(mapping)
        vals = [mapping.get(i, 0) for i in range(lo, hi + 1)]
        if 0 in vals:
            raise ValueError("sign mapping must cover a contiguous index range")
        return cls(lo, vals)

    @property
    def hi(self) -> int:
        return self.lo + len(self.values)

    def read(self, lo: int, hi: int) -> np.ndarray:
        if hi <= lo:
            return np.zeros(0, dtype=np.int8)
        if lo < self.lo or hi > self.hi:
            raise OutOfWindowError(
                f"read of e[{lo}:{hi}] outside the window e[{self.lo}:{self.hi}]"
            )
        return self.values[lo - self.lo:hi - self.lo]

    def range_sum(self, lo: int, hi: int) -> int:
        return int(self.read(lo, hi).sum(dtype=np.int64))


def split_key(seed: int, index: int) -> np.ndarray:
    """Philox key of replicate ``index`` under root ``seed``: ``(seed mod 2**64, index)``.

    Replicate streams depend only on this pair, so results do not depend on
    how replicates are distributed over workers.
    """
    return np.array([seed & _MASK64, index & _MASK64], dtype=np.uint64)


class StreamSigns:
    """Two-sided sign sequence generated on demand from a counter-based stream.

    Signs ``e_{4096 b} .. e_{4096 b + 4095}`` are the bits of 64 Philox words at
    counter ``(16 b mod 2**64, 0, 0, 0)``, so any window is reproducible
    without generating its predecessors.  The circle coordinates come from the
    disjoint counter ``(0, 0, 1, 0)``.
    """

    def __init__(self, key: np.ndarray, cache_blocks: int = 64):
        self.key = np.asarray(key, dtype=np.uint64)
        self._cache: dict[int, np.ndarray] = {}
        self._cache_blocks = cache_blocks

    def _blocks(self, b0: int, count: int) -> np.ndarray:
        """Signs of blocks ``b0 .. b0+count-1`` (no wrap through block 0)."""
        gen = np.random.Philox(
            counter=np.array([(_CTR_PER_BLOCK * b0) & _MASK64, 0, 0, 0], dtype=np.uint64),
            key=self.key,
        )
        words = gen.random_raw(_WORDS * count).astype("<u8")
        bits = np.unpackbits(words.view(np.uint8), bitorder="little")
        return (2 * bits.astype(np.int8) - 1).reshape(count, BLOCK)

    def _block(self, b: int) -> np.ndarray:
        blk = self._cache.get(b)
        if blk is None:
            blk = self._blocks(b, 1)[0]
            if len(self._cache) >= self._cache_blocks:
                self._cache.pop(next(iter(self._cache)))
            self._cache[b] = blk
        return blk

    def read(self, lo: int, hi: int) -> np.ndarray:
        if hi <= lo:
            return np.zeros(0, dtype=np.int8)
        b0, b1 = lo // BLOCK, (hi - 1) // BLOCK
        if b1 - b0 > 8:
            parts = []
            if b0 < 0:
                stop = min(b1, -1)
                parts.append(self._blocks(b0, stop - b0 + 1).ravel())
            if b1 >= 0:
                start = max(b0, 0)
                parts.append(self._blocks(start, b1 - start + 1).ravel())
            arr = np.concatenate(parts)
        else:
            arr = np.concatenate([self._block(b) for b in range(b0, b1 + 1)])
        off = lo - b0 * BLOCK
        return arr[off:off + hi - lo]

    def range_sum(self, lo: int, hi: int, chunk: int = 256) -> int:
        """``sum_{lo <= i < hi} e_i`` without holding the whole range in memory."""
        total = 0
        step = chunk * BLOCK
        while lo < hi:
            nxt = min(hi, lo + step)
            total += int(self.read(lo, nxt).sum(dtype=np.int64))
            lo = nxt
        return total

    def coordinates(self, k_max: int) -> np.ndarray:
        gen = np.random.Philox(counter=np.array([0, 0, 1, 0], dtype=np.uint64), key=self.key)
        words = gen.random_raw(k_max)
        return (words >> np.uint64(11)).astype(np.float64) * 2.0**-53


# -- points ------------------------------------------------------------------------


@dataclass(frozen=True)
class OmegaPoint:
    """``signs`` hold the unshifted sequence; ``offset`` counts applied shifts.

    The point's own ``e_i`` is ``signs[i + offset]`` and its coordinate ``k``
    is ``x0_k + offset * alpha_k (mod 1)``.  Shifting only moves the offset,
    so it is exact and invertible.
    """

    signs: object
    x0: np.ndarray
    offset: int = 0

    def sign(self, i: int) -> int:
        return int(self.signs.read(i + self.offset, i + self.offset + 1)[0])

    def read(self, lo: int, hi: int) -> np.ndarray:
        return self.signs.read(lo + self.offset, hi + self.offset)

    def range_sum(self, lo: int, hi: int) -> int:
        if hi <= lo:
            return 0
        return self.signs.range_sum(lo + self.offset, hi + self.offset)


def shift(point: OmegaPoint, steps: int) -> OmegaPoint:
    """``T**steps``: the new point's ``e_i`` is the old ``e_{i+steps}``."""
    if steps == 0:
        return point
    return OmegaPoint(point.signs, point.x0, point.offset + int(steps))


def coord_at(x0, alpha, t):
    """Coordinate after ``t`` rotations; the single expression used everywhere."""
    return np.remainder(np.asarray(x0, dtype=float) + np.asarray(t, dtype=float) * alpha, 1.0)


def coordinates(point: OmegaPoint, sets: SetSystem) -> np.ndarray:
    k = sets.k_max
    return coord_at(point.x0[:k], sets.alpha_f, point.offset)


def indicator_Ak(point: OmegaPoint, k: int, sets: SetSystem) -> int:
    sets.check_k(k)
    x = coordinates(point, sets)
    if not x[k - 1] < sets.rho_f[k - 1]:
        return 0
    return int(not np.any(x[k:] < sets.rho_f[k:]))


def active_k(point: OmegaPoint, sets: SetSystem) -> int:
    """The unique ``k`` with the point in ``A_k``, or 0."""
    x = coordinates(point, sets)
    inside = np.nonzero(x < sets.rho_f)[0]
    return int(inside[-1]) + 1 if inside.size else 0


def sample_point(key_or_seed, sets: SetSystem | None = None, window=None, k_max: int | None = None) -> OmegaPoint:
    """Draw a point from the product measure.

    ``key_or_seed`` is a seed (replicate 0) or a key from :func:`split_key`.
    With ``window=(lo, hi)`` the signs are materialized into a fixed window;
    otherwise the point owns an unbounded lazy stream.
    """
    key = split_key(key_or_seed, 0) if isinstance(key_or_seed, (int, np.integer)) else key_or_seed
    stream = StreamSigns(key)
    n_coords = k_max if k_max is not None else (sets.k_max if sets is not None else 0)
    x0 = stream.coordinates(n_coords)
    if window is not None:
        lo, hi = window
        if hi <= lo:
            raise ValueError("window must be nonempty")
        return OmegaPoint(FixedSigns(lo, stream.read(lo, hi)), x0)
    return OmegaPoint(stream, x0)


# -- orbit membership ----------------------------------------------------------------


def _first_true(pred, lo: int, hi: int) -> int:
    """Smallest ``t`` in ``[lo, hi)`` with ``pred(t)`` for monotone ``pred``; ``hi`` if none."""
    return lo + bisect.bisect_left(range(lo, hi), True, key=pred)


def arc_times(x0: float, alpha: float, rho: float, t0: int, t1: int) -> list[tuple[int, int]]:
    """Times ``t`` in ``[t0, t1)`` with ``coord_at(x0, alpha, t) < rho`` as sorted intervals."""
    if t1 <= t0:
        return []
    turns = (t1 - t0) * alpha
    if t1 - t0 <= DENSE_SCAN * (0.0625 + turns):
        mask = coord_at(x0, alpha, np.arange(t0, t1)) < rho
        return _mask_intervals(mask, t0)

    def z(t):
        return float(np.float64(x0) + np.float64(t) * alpha)

    def inside(t):
        return float(coord_at(x0, alpha, t)) < rho

    out = []
    w_first, w_last = math.floor(z(t0)), math.floor(z(t1 - 1))
    start = t0
    for w in range(w_first, w_last + 1):
        end = t1 if w == w_last else _first_true(lambda t: math.floor(z(t)) > w, start, t1)
        # Within one turn the coordinate is nondecreasing, so the arc is a prefix.
        stop = _first_true(lambda t: not inside(t), start, end)
        if stop > start:
            out.append((start, stop))
        start = end
    return out


def _mask_intervals(mask: np.ndarray, t0: int) -> list[tuple[int, int]]:
    if not mask.any():
        return []
    d = np.diff(np.concatenate(([0], mask.astype(np.int8), [0])))
    starts = np.nonzero(d == 1)[0]
    stops = np.nonzero(d == -1)[0]
    return [(int(a) + t0, int(b) + t0) for a, b in zip(starts, stops)]


def subtract_intervals(base, remove):
    """``base`` minus the union of ``remove`` (both sorted, disjoint within themselves)."""
    if not remove:
        return list(base)
    remove = _union(remove)
    out = []
    for a, b in base:
        cur = a
        for c, d in remove:
            if d <= cur or c >= b:
                continue
            if c > cur:
                out.append((cur, c))
            cur = max(cur, d)
            if cur >= b:
                break
        if cur < b:
            out.append((cur, b))
    return out


def _union(intervals):
    ivs = sorted(intervals)
    out = []
    for a, b in ivs:
        if out and a <= out[-1][1]:
            out[-1] = (out[-1][0], max(out[-1][1], b))
        else:
            out.append((a, b))
    return out


def ak_times(point: OmegaPoint, sets: SetSystem, k: int, t0: int, t1: int) -> list[tuple[int, int]]:
    """Times ``t`` in ``[t0, t1)`` with ``T^t(point)`` in ``A_k``."""
    sets.check_k(k)
    base = point.offset
    arc = arc_times(point.x0[k - 1], sets.alpha_f[k - 1], sets.rho_f[k - 1], base + t0, base + t1)
    if not arc:
        return []
    lo, hi = arc[0][0], arc[-1][1]
    deeper = []
    for l in range(k, sets.k_max):
        if len(arc) == 1 or hi - lo <= DENSE_SCAN:
            deeper.extend(arc_times(point.x0[l], sets.alpha_f[l], sets.rho_f[l], lo, hi))
        else:
            for a, b in arc:
                deeper.extend(arc_times(point.x0[l], sets.alpha_f[l], sets.rho_f[l], a, b))
    return [(a - base, b - base) for a, b in subtract_intervals(arc, deeper)]


def ak_mask(point: OmegaPoint, sets: SetSystem, k: int, t0: int, t1: int) -> np.ndarray:
    """Dense boolean version of :func:`ak_times` over ``[t0, t1)``."""
    mask = np.zeros(max(t1 - t0, 0), dtype=bool)
    for a, b in ak_times(point, sets, k, t0, t1):
        mask[a - t0:b - t0] = True
    return mask
