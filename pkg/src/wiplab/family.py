"""Parameter sequences of the pattern-function model.

A family bundles the arc sizes ``rho_k = lambda**k``, the lags ``N_k`` and the
weights ``theta_k``, each given as a geometric-polynomial term
``coeff * base**k * k**expo``.  The tolerances ``eps_k`` are derived, not
supplied.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import InvalidFamilyError, TermRangeError, UnknownPresetError

HORIZON_RULES = ("standard", "plus_one", "double", "ip_extended")

# Relative tolerance used when deciding base == 1 or expo == -1.
BOUNDARY_TOL = 1e-9

EPS_START = Fraction(1, 8)


@dataclass(frozen=True)
class GeomPolyTerm:
    """The sequence ``k -> coeff * base**k * k**expo`` for ``k >= 1``."""

    coeff: float
    base: float
    expo: float = 0.0

    def __post_init__(self):
        for name in ("coeff", "base", "expo"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise InvalidFamilyError(f"{name} must be finite, got {value}")
        if self.coeff < 0:
            raise InvalidFamilyError(f"coeff must be >= 0, got {self.coeff}")
        if self.base <= 0:
            raise InvalidFamilyError(f"base must be > 0, got {self.base}")

    @property
    def is_zero(self) -> bool:
        return self.coeff == 0

    def __call__(self, k: int) -> float:
        return eval_term(self, k)

    def __mul__(self, other: "GeomPolyTerm") -> "GeomPolyTerm":
        return GeomPolyTerm(
            self.coeff * other.coeff, self.base * other.base, self.expo + other.expo
        )

    def __pow__(self, p: float) -> "GeomPolyTerm":
        return GeomPolyTerm(self.coeff**p, self.base**p, self.expo * p)

    def scaled(self, c: float) -> "GeomPolyTerm":
        return GeomPolyTerm(self.coeff * c, self.base, self.expo)

    def log_values(self, ks: np.ndarray) -> np.ndarray:
        """Natural log of the term on an integer array (``-inf`` for a zero term)."""
        ks = np.asarray(ks, dtype=float)
        if self.is_zero:
            return np.full(ks.shape, -np.inf)
        return math.log(self.coeff) + ks * math.log(self.base) + self.expo * np.log(ks)

    def to_dict(self) -> dict:
        return {"coeff": self.coeff, "base": self.base, "expo": self.expo}

    @classmethod
    def from_dict(cls, d: dict) -> "GeomPolyTerm":
        return cls(float(d["coeff"]), float(d["base"]), float(d.get("expo", 0.0)))


def eval_term(term: GeomPolyTerm, k: int) -> float:
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if term.is_zero:
        return 0.0
    try:
        value = term.coeff * term.base**k * float(k) ** term.expo
    except OverflowError as exc:
        raise TermRangeError(k, str(exc)) from None
    if not math.isfinite(value) or value == 0.0:
        raise TermRangeError(k, f"{term} evaluates to {value}")
    return value


def is_one(x: float) -> bool:
    return abs(x - 1.0) <= BOUNDARY_TOL


@dataclass(frozen=True)
class SequenceFamily:
    rho: GeomPolyTerm
    n_seq: GeomPolyTerm
    theta: GeomPolyTerm
    variant: bool = False
    horizon_rule: str = "standard"
    name: str | None = field(default=None, compare=False)

    def __post_init__(self):
        lam = self.rho.base
        if not 0 < lam < 0.5:
            raise InvalidFamilyError(
                f"lambda must satisfy 0 < lambda < 1/2 (got {lam}); "
                "rho_k = lambda**k needs a = 1 - sum(rho_k) in (0, 1)"
            )
        if self.rho.coeff != 1 or self.rho.expo != 0:
            raise InvalidFamilyError("rho must be exactly lambda**k (coeff 1, expo 0)")
        n = self.n_seq
        if n.is_zero or not (n.base > 1 or (is_one(n.base) and n.expo > 0)):
            raise InvalidFamilyError("n_seq must grow to infinity (base > 1, or base 1 and expo > 0)")
        if self.horizon_rule not in HORIZON_RULES:
            raise InvalidFamilyError(
                f"unknown horizon rule {self.horizon_rule!r}; expected one of {HORIZON_RULES}"
            )
        if self.variant and self.horizon_rule != "double":
            raise InvalidFamilyError("the variant model requires the 'double' horizon rule")

    @property
    def lam(self) -> float:
        return self.rho.base

    @property
    def a(self) -> float:
        """``1 - sum_{k>=1} lambda**k``."""
        return 1.0 - self.lam / (1.0 - self.lam)

    @property
    def is_zero(self) -> bool:
        return self.theta.is_zero

    def rho_k(self, k: int) -> float:
        return eval_term(self.rho, k)

    def theta_k(self, k: int) -> float:
        return 0.0 if self.is_zero else eval_term(self.theta, k)

    @functools.lru_cache(maxsize=64)
    def n_values(self, k_max: int) -> tuple[int, ...]:
        """Integerized, nondecreasing ``N_1..N_kmax``."""
        out = []
        prev = 1
        for k in range(1, k_max + 1):
            prev = max(prev, 1, round(eval_term(self.n_seq, k)))
            out.append(prev)
        return tuple(out)

    def n_array(self, k_max: int) -> np.ndarray:
        """Float version of :meth:`n_values` for vectorized sums."""
        ks = np.arange(1, k_max + 1, dtype=float)
        with np.errstate(over="ignore"):
            raw = np.exp(self.n_seq.log_values(ks))
        return np.maximum.accumulate(np.maximum(1.0, np.round(raw)))

    def horizons(self, k_max: int, rule: str | None = None) -> tuple[int, ...]:
        rule = rule or self.horizon_rule
        ns = self.n_values(k_max)
        if rule == "standard":
            return ns
        if rule == "plus_one":
            return tuple(n + 1 for n in ns)
        if rule == "double":
            return tuple(2 * n for n in ns)
        if rule == "ip_extended":
            if self.is_zero:
                return tuple(n + 1 for n in ns)
            return tuple(max(ip_lag(self, k), n + 1) for k, n in enumerate(ns, start=1))
        raise InvalidFamilyError(f"unknown horizon rule {rule!r}")

    @functools.lru_cache(maxsize=64)
    def epsilons(self, k_max: int, rule: str | None = None) -> tuple[Fraction, ...]:
        return choose_epsilons(self, k_max, rule)

    def with_(self, **changes) -> "SequenceFamily":
        d = dict(
            rho=self.rho, n_seq=self.n_seq, theta=self.theta, variant=self.variant,
            horizon_rule=self.horizon_rule, name=self.name,
        )
        d.update(changes)
        return SequenceFamily(**d)

    def to_dict(self, k_max: int | None = None) -> dict:
        d = {
            "rho": self.rho.to_dict(),
            "n_seq": self.n_seq.to_dict(),
            "theta": self.theta.to_dict(),
            "lambda": self.lam,
            "variant": self.variant,
            "horizon_rule": self.horizon_rule,
        }
        if self.name is not None:
            d["name"] = self.name
        if k_max is not None:
            d["k_max"] = k_max
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SequenceFamily":
        if "rho" in d:
            rho = GeomPolyTerm.from_dict(d["rho"])
            if "lambda" in d and not math.isclose(float(d["lambda"]), rho.base, rel_tol=1e-12):
                raise InvalidFamilyError(
                    f"lambda={d['lambda']} disagrees with rho.base={rho.base}"
                )
        elif "lambda" in d:
            rho = GeomPolyTerm(1.0, float(d["lambda"]), 0.0)
        else:
            raise InvalidFamilyError("family needs 'rho' or 'lambda'")
        variant = bool(d.get("variant", False))
        rule = d.get("horizon_rule", "double" if variant else "standard")
        return cls(
            rho=rho,
            n_seq=GeomPolyTerm.from_dict(d["n_seq"]),
            theta=GeomPolyTerm.from_dict(d["theta"]),
            variant=variant,
            horizon_rule=rule,
            name=d.get("name"),
        )


def choose_epsilons(family: SequenceFamily, k_max: int, rule: str | None = None) -> tuple[Fraction, ...]:
    """``eps_k = min(eps_{k-1} / 2, (theta_k * H_k**2 * k**2) ** -2)`` with ``eps_0 = 1/8``.

    ``H_k`` is the horizon of the chosen rule (``N_k`` for the standard rule),
    which makes ``theta_k N_k**2 sqrt(eps_k) <= k**-2``.  Values are exact
    rationals so that they stay positive far below float range.
    """
    hs = family.horizons(k_max, rule)
    eps = []
    prev = EPS_START
    for k, h in enumerate(hs, start=1):
        halved = prev / 2
        theta = Fraction(family.theta_k(k))
        if theta == 0:
            cur = halved
        else:
            cur = min(halved, 1 / (theta * h * h * k * k) ** 2)
        eps.append(cur)
        prev = cur
    return tuple(eps)


def _v_prefix(family: SequenceFamily, k: int) -> Fraction:
    """``sum_{j<=k} theta_j (N_j + 1)``, the sup-norm budget of the first k blocks."""
    ns = family.n_values(k)
    return sum((Fraction(family.theta_k(j)) * (ns[j - 1] + 1) for j in range(1, k + 1)), Fraction(0))


def choose_rn(family: SequenceFamily, n: int, k_limit: int = 4096) -> int:
    """``R_n = max{R >= 1 : sum_{k<R} theta_k (N_k + 1) <= n**(1/4)}``, capped at ``k_limit``."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    r = 1
    prefix = Fraction(0)
    n_r = 1
    while r < k_limit:
        n_r = max(n_r, round(eval_term(family.n_seq, r)))
        nxt = prefix + Fraction(family.theta_k(r)) * (n_r + 1)
        if nxt**4 > n:
            break
        prefix = nxt
        r += 1
    return r


def ip_lag(family: SequenceFamily, k: int) -> int:
    """Greatest n with ``R_n <= k``, i.e. ``ceil(prefix_k**4) - 1``."""
    p4 = _v_prefix(family, k) ** 4
    return math.ceil(p4) - 1


_PRESETS = {
    "ce1": dict(
        n_seq=GeomPolyTerm(1.0, 16.0, 0.0), theta=GeomPolyTerm(1.0, 1.0, -1.0)
    ),
    "ce2": dict(
        n_seq=GeomPolyTerm(1.0, 1.0, 2.0), theta=GeomPolyTerm(1.0, 2.0, -1.0)
    ),
    "ce3": dict(
        n_seq=GeomPolyTerm(1.0, 4.0, 0.0),
        theta=GeomPolyTerm(1.0, 2.0, -1.5),
        horizon_rule="ip_extended",
    ),
    "ce4": dict(
        n_seq=GeomPolyTerm(1.0, 2.0, 0.0),
        theta=GeomPolyTerm(1.0, 1.0, -1.0),
        variant=True,
        horizon_rule="double",
    ),
}

PRESET_NAMES = tuple(_PRESETS)


def make_preset(name: str) -> SequenceFamily:
    try:
        params = _PRESETS[name]
    except KeyError:
        raise UnknownPresetError(
            f"unknown preset {name!r}; valid presets: {', '.join(PRESET_NAMES)}"
        ) from None
    return SequenceFamily(rho=GeomPolyTerm(1.0, 0.25, 0.0), name=name, **params)


def zero_family(lam: float = 0.25) -> SequenceFamily:
    """Degenerate family with ``theta == 0`` (so ``f == 0``)."""
    return SequenceFamily(
        rho=GeomPolyTerm(1.0, lam, 0.0),
        n_seq=GeomPolyTerm(1.0, 2.0, 0.0),
        theta=GeomPolyTerm(0.0, 1.0, 0.0),
        name="zero",
    )
