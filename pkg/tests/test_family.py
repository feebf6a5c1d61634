import json
import math
from fractions import Fraction

import pytest

from wiplab.errors import InvalidFamilyError, TermRangeError, UnknownPresetError
from wiplab.family import (
    GeomPolyTerm,
    PRESET_NAMES,
    SequenceFamily,
    choose_epsilons,
    choose_rn,
    eval_term,
    ip_lag,
    make_preset,
    zero_family,
)


def test_eval_term_examples():
    assert eval_term(GeomPolyTerm(1, 0.25, 0), 3) == 0.015625
    assert eval_term(GeomPolyTerm(1, 2, -1), 4) == 4.0
    assert eval_term(GeomPolyTerm(1, 1, 0), 7) == 1.0


def test_eval_term_overflow_names_k():
    with pytest.raises(TermRangeError) as info:
        eval_term(GeomPolyTerm(1, 1e10, 0), 200)
    assert info.value.k == 200


def test_eval_term_rejects_k_zero():
    with pytest.raises(ValueError):
        eval_term(GeomPolyTerm(1, 2, 0), 0)


@pytest.mark.parametrize("bad", [dict(coeff=-1, base=1), dict(coeff=1, base=0), dict(coeff=1, base=math.inf)])
def test_term_validation(bad):
    with pytest.raises(InvalidFamilyError):
        GeomPolyTerm(**bad)


def test_presets_match_closed_forms():
    ce1 = make_preset("ce1")
    assert ce1.rho == GeomPolyTerm(1, 0.25, 0)
    assert ce1.n_seq == GeomPolyTerm(1, 16, 0)
    assert ce1.theta == GeomPolyTerm(1, 1, -1)
    assert not ce1.variant
    ce2 = make_preset("ce2")
    assert (ce2.n_seq, ce2.theta) == (GeomPolyTerm(1, 1, 2), GeomPolyTerm(1, 2, -1))
    ce3 = make_preset("ce3")
    assert ce3.horizon_rule == "ip_extended"
    ce4 = make_preset("ce4")
    assert ce4.variant and ce4.horizon_rule == "double"
    assert (ce4.n_seq, ce4.theta) == (GeomPolyTerm(1, 2, 0), GeomPolyTerm(1, 1, -1))
    assert all(make_preset(p).lam == 0.25 for p in PRESET_NAMES)


def test_unknown_preset_lists_valid_names():
    with pytest.raises(UnknownPresetError, match="ce1, ce2, ce3, ce4"):
        make_preset("ce5")


def test_lambda_out_of_range():
    with pytest.raises(InvalidFamilyError, match="0 < lambda < 1/2"):
        SequenceFamily(GeomPolyTerm(1, 0.6, 0), GeomPolyTerm(1, 2, 0), GeomPolyTerm(1, 1, -1))


def test_variant_requires_double_horizon():
    with pytest.raises(InvalidFamilyError):
        SequenceFamily(GeomPolyTerm(1, 0.25, 0), GeomPolyTerm(1, 2, 0), GeomPolyTerm(1, 1, -1), variant=True)


def test_n_values_rounded_and_monotone():
    fam = SequenceFamily(GeomPolyTerm(1, 0.25), GeomPolyTerm(0.6, 1, 0.5), GeomPolyTerm(1, 1))
    ns = fam.n_values(30)
    assert ns[0] == 1
    assert all(a <= b for a, b in zip(ns, ns[1:]))
    assert make_preset("ce2").n_values(5) == (1, 4, 9, 16, 25)


def test_epsilon_ce1_first_value():
    eps = choose_epsilons(make_preset("ce1"), 3)
    assert eps[0] == Fraction(1, 65536)


def test_epsilon_ce4_second_value_uses_double_horizon():
    eps = choose_epsilons(make_preset("ce4"), 3)
    # theta_2 = 1/2, H_2 = 8, k = 2: (0.5 * 64 * 4) ** -2 = 128 ** -2, versus eps_1 / 2.
    candidate = Fraction(1, 128**2)
    assert eps[1] == min(eps[0] / 2, candidate)
    assert float(eps[1]) == pytest.approx(6.1035e-5, rel=1e-4)


def test_epsilon_pure_halving_when_weights_small():
    fam = SequenceFamily(GeomPolyTerm(1, 0.25), GeomPolyTerm(1, 1, 0.1), GeomPolyTerm(1e-3, 0.1, 0))
    eps = choose_epsilons(fam, 10, "standard")
    assert all(b == a / 2 for a, b in zip((Fraction(1, 8),) + eps, eps))


@pytest.mark.parametrize("name", PRESET_NAMES)
def test_epsilon_series_bound(name):
    fam = make_preset(name)
    k_max = 64
    eps = fam.epsilons(k_max)
    ns = fam.n_values(k_max)
    terms = [fam.theta_k(k) * ns[k - 1] ** 2 * math.sqrt(float(eps[k - 1])) for k in range(1, k_max + 1)]
    assert all(t <= k**-2 * (1 + 1e-12) for k, t in enumerate(terms, start=1))
    assert sum(terms) < math.pi**2 / 6
    assert all(b < a for a, b in zip(eps, eps[1:]))


@pytest.mark.parametrize("name", PRESET_NAMES)
def test_measure_sandwich_product(name):
    fam = make_preset(name)
    a = Fraction(2, 3)
    rho = [Fraction(1, 4**k) for k in range(1, 65)]
    for k in range(1, 65):
        prod = rho[k - 1]
        for r in rho[k:]:
            prod *= 1 - r
        assert a * rho[k - 1] <= prod <= rho[k - 1]
    assert fam.a == pytest.approx(2 / 3)


def test_choose_rn_examples():
    assert choose_rn(make_preset("ce3"), 10**4) == 2
    assert choose_rn(make_preset("ce1"), 1) == 1
    grid = [int(10 ** (0.5 * j)) for j in range(20)]
    rs = [choose_rn(make_preset("ce3"), n) for n in grid]
    assert rs == sorted(rs)


def test_ip_lag_is_last_n_with_small_rn():
    fam = make_preset("ce3")
    for k in (1, 2):
        n_k = ip_lag(fam, k)
        assert choose_rn(fam, n_k) <= k
        assert choose_rn(fam, n_k + 1) > k


def test_ip_extended_horizons_dominate_lags():
    fam = make_preset("ce3")
    hs = fam.horizons(6)
    assert all(h >= n + 1 for h, n in zip(hs, fam.n_values(6)))
    assert hs[0] == 9999


def test_dict_round_trip():
    fam = make_preset("ce4")
    data = json.loads(json.dumps(fam.to_dict(k_max=5)))
    back = SequenceFamily.from_dict(data)
    assert back == fam
    assert data["k_max"] == 5


def test_from_dict_lambda_only():
    fam = SequenceFamily.from_dict(
        {"lambda": 0.2, "n_seq": {"coeff": 1, "base": 3}, "theta": {"coeff": 1, "base": 1, "expo": -2}}
    )
    assert fam.rho == GeomPolyTerm(1, 0.2, 0)


def test_from_dict_inconsistent_lambda():
    with pytest.raises(InvalidFamilyError):
        SequenceFamily.from_dict(
            {"lambda": 0.3, "rho": {"coeff": 1, "base": 0.25}, "n_seq": {"coeff": 1, "base": 3},
             "theta": {"coeff": 1, "base": 1}}
        )


def test_zero_family():
    fam = zero_family()
    assert fam.is_zero and fam.theta_k(3) == 0.0
