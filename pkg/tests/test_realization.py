from fractions import Fraction

import numpy as np
import pytest

import wiplab.realization as R
from wiplab.errors import InvalidFamilyError, OutOfWindowError
from wiplab.family import PRESET_NAMES, make_preset
from wiplab.realization import (
    FixedSigns,
    OmegaPoint,
    SetSystem,
    StreamSigns,
    ak_times,
    arc_times,
    build_sets,
    coord_at,
    indicator_Ak,
    max_symmdiff,
    measure_Ak,
    sample_point,
    shift,
    split_key,
    symmdiff_bound,
    symmdiff_exact,
)


def _point(xs, signs=None, lo=-8, offset=0):
    signs = signs if signs is not None else [1] * 16
    return OmegaPoint(FixedSigns(lo, signs), np.array(xs, dtype=float), offset)


def test_build_sets_ce1_first_arc():
    fam = make_preset("ce1")
    sets = build_sets(fam, 1)
    eps = fam.epsilons(2)
    assert sets.horizons == (16,)
    assert sets.alpha[0] == (eps[0] - eps[1]) / 64
    assert sets.rho[0] == Fraction(1, 4)


def test_build_sets_ce4_double_horizon():
    assert build_sets(make_preset("ce4"), 3).horizons[0] == 4


def test_build_sets_empty():
    sets = build_sets(make_preset("ce1"), 0)
    assert sets.k_max == 0


def test_build_sets_rejects_flat_eps(monkeypatch):
    fam = make_preset("ce2")
    monkeypatch.setattr(type(fam), "epsilons", lambda self, k, rule=None: (Fraction(1, 8),) * k)
    with pytest.raises(InvalidFamilyError):
        build_sets(fam, 3)


def test_shift_examples():
    sets = SetSystem.from_values([Fraction(1, 4)], [Fraction(1, 1000)], [2])
    p = _point([0.9995])
    q = shift(p, 3)
    x = coord_at(q.x0[0], sets.alpha_f[0], q.offset)
    assert x == pytest.approx(0.0025, abs=1e-12)
    assert shift(p, 0) is p
    back = shift(shift(p, 5), -5)
    assert back.offset == p.offset and np.array_equal(back.x0, p.x0)


def test_shift_moves_sign_index():
    p = _point([0.1], signs=list(np.resize([1, -1, -1], 16)))
    for steps in range(-3, 4):
        q = shift(p, steps)
        for i in range(-3, 3):
            assert q.sign(i) == p.sign(i + steps)


def test_fixed_window_out_of_range():
    p = _point([0.1], lo=-2, signs=[1, 1, 1])
    with pytest.raises(OutOfWindowError):
        p.sign(5)
    with pytest.raises(OutOfWindowError):
        shift(p, -10).sign(0)


def test_indicator_examples():
    one = SetSystem.from_values([Fraction(1, 4)], [Fraction(1, 1000)], [2])
    assert indicator_Ak(_point([0.1]), 1, one) == 1
    assert indicator_Ak(_point([0.25]), 1, one) == 0
    two = SetSystem.from_values([Fraction(1, 4), Fraction(1, 16)], [Fraction(1, 1000)] * 2, [2, 2])
    p = _point([0.01, 0.02])
    assert indicator_Ak(p, 1, two) == 0 and indicator_Ak(p, 2, two) == 1
    with pytest.raises(IndexError):
        indicator_Ak(p, 3, two)


def test_measure_examples():
    sets = SetSystem.from_values([Fraction(1, 4), Fraction(1, 16), Fraction(1, 64)], [Fraction(1, 10**6)] * 3, [1] * 3)
    assert measure_Ak(sets, 1) == Fraction(1, 4) * Fraction(15, 16) * Fraction(63, 64)
    assert float(measure_Ak(sets, 1)) == pytest.approx(0.23071289, abs=1e-8)
    assert measure_Ak(sets, 3) == Fraction(1, 64)


def test_measure_by_hit_counting():
    sets = SetSystem.from_values([Fraction(1, 4), Fraction(1, 16), Fraction(1, 64)], [Fraction(1, 10**6)] * 3, [1] * 3)
    rng = np.random.default_rng(17)
    xs = rng.random((200_000, 3))
    inside = xs < sets.rho_f
    hit = inside[:, 0] & ~inside[:, 1] & ~inside[:, 2]
    se = np.sqrt(0.23 * 0.77 / len(xs))
    assert abs(hit.mean() - float(measure_Ak(sets, 1))) < 4 * se


def test_symmdiff_examples():
    sets = SetSystem.from_values([Fraction(1, 4)], [Fraction(1, 1000)], [10])
    assert symmdiff_exact(sets, 1, 5, 0) == Fraction(1, 100)
    assert symmdiff_exact(sets, 1, 7, 7) == 0
    assert symmdiff_exact(sets, 1, 3, 8) == symmdiff_exact(sets, 1, 5, 0)


def test_symmdiff_below_subadditive_bound():
    sets = SetSystem.from_values([Fraction(1, 4), Fraction(1, 16)], [Fraction(1, 97), Fraction(1, 41)], [5, 5])
    for d in range(0, 120, 7):
        assert symmdiff_exact(sets, 1, d, 0) <= symmdiff_bound(sets, 1, d, 0)


def test_symmdiff_grid_monte_carlo():
    sets = SetSystem.from_values([Fraction(1, 4), Fraction(1, 16)], [Fraction(1, 97), Fraction(1, 41)], [5, 5])
    rng = np.random.default_rng(3)
    xs = rng.random((200_000, 2))

    def in_a1(t):
        c = np.mod(xs + t * sets.alpha_f, 1.0) < sets.rho_f
        return c[:, 0] & ~c[:, 1]

    for i, j in [(0, 3), (2, 9), (5, 1), (0, 30), (11, 4)]:
        est = np.mean(in_a1(i) != in_a1(j))
        se = max(np.sqrt(est * (1 - est) / len(xs)), 1e-4)
        assert abs(est - float(symmdiff_exact(sets, 1, i, j))) <= 3 * se


@pytest.mark.parametrize("name", PRESET_NAMES)
def test_quasi_invariance_all_presets(name):
    sets = build_sets(make_preset(name), 8)
    for k in range(1, 9):
        assert max_symmdiff(sets, k) <= sets.eps[k - 1]
        assert sets.a * sets.rho[k - 1] <= measure_Ak(sets, k) <= sets.rho[k - 1]


def test_max_symmdiff_brute_force_branch():
    sets = SetSystem.from_values([Fraction(1, 4)], [Fraction(1, 7)], [12])
    assert max_symmdiff(sets, 1) == max(symmdiff_exact(sets, 1, d, 0) for d in range(13))


def test_sample_point_deterministic():
    sets = build_sets(make_preset("ce1"), 3)
    a = sample_point(42, sets, window=(-20, 20))
    b = sample_point(42, sets, window=(-20, 20))
    assert np.array_equal(a.x0, b.x0)
    assert np.array_equal(a.read(-20, 20), b.read(-20, 20))
    lazy = sample_point(42, sets)
    assert np.array_equal(lazy.read(-20, 20), a.read(-20, 20))


def test_stream_blocks_consistent_across_reads():
    s = StreamSigns(split_key(9, 3))
    big = s.read(-50_000, 60_000)
    assert np.array_equal(big[:100], s.read(-50_000, -49_900))
    assert np.array_equal(big[-100:], s.read(59_900, 60_000))
    assert s.range_sum(-50_000, 60_000) == int(big.sum())
    assert set(np.unique(big)) == {-1, 1}


def test_sign_mean_and_measure():
    sets = build_sets(make_preset("ce1"), 4)
    n = 100_000
    e0 = np.empty(n)
    hit = np.empty(n)
    cov_sign = np.empty(n)
    for i in range(n):
        s = StreamSigns(split_key(5, i))
        p = OmegaPoint(s, s.coordinates(4))
        e0[i] = p.sign(0)
        hit[i] = indicator_Ak(p, 1, sets)
        cov_sign[i] = p.sign(-16)
    assert abs(e0.mean()) < 3 / np.sqrt(n)
    mu = float(measure_Ak(sets, 1))
    assert abs(hit.mean() - mu) < 3 * np.sqrt(mu * (1 - mu) / n)
    cov = np.mean(cov_sign * hit) - cov_sign.mean() * hit.mean()
    assert abs(cov) < 3 * np.std(cov_sign * hit) / np.sqrt(n) + 1e-3


def test_shift_preserves_measure():
    sets = SetSystem.from_values([Fraction(1, 4), Fraction(1, 16)], [Fraction(1, 97), Fraction(1, 41)], [5, 5])
    n = 100_000
    before = np.empty(n)
    after = np.empty(n)
    for i in range(n):
        s = StreamSigns(split_key(11, i))
        p = OmegaPoint(s, s.coordinates(2))
        q = shift(p, 13)
        before[i] = indicator_Ak(p, 1, sets) * (p.sign(0) == 1)
        after[i] = indicator_Ak(q, 1, sets) * (q.sign(0) == 1)
    se = np.sqrt(0.12 * 0.88 / n)
    assert abs(before.mean() - after.mean()) < 3 * np.sqrt(2) * se


def test_arc_times_bisect_matches_dense(monkeypatch):
    rng = np.random.default_rng(1)
    cases = []
    for _ in range(150):
        x0 = rng.random()
        alpha = rng.random() * 10.0 ** rng.integers(-8, -1)
        rho = rng.random() * 0.5
        t0 = int(rng.integers(-5000, 5000))
        t1 = t0 + int(rng.integers(0, 20000))
        cases.append((x0, alpha, rho, t0, t1))
    dense = [arc_times(*c) for c in cases]
    monkeypatch.setattr(R, "DENSE_SCAN", 1)
    for c, d in zip(cases, dense):
        assert arc_times(*c) == d


def test_ak_times_match_pointwise_indicator(monkeypatch):
    sets = SetSystem.from_values(
        [Fraction(1, 4), Fraction(1, 16), Fraction(1, 64)],
        [Fraction(1, 301), Fraction(1, 977), Fraction(1, 5003)],
        [3, 3, 3],
    )
    monkeypatch.setattr(R, "DENSE_SCAN", 8)
    for seed in range(20):
        p = sample_point(seed, sets)
        for k in (1, 2, 3):
            mask = np.zeros(3000, dtype=bool)
            for a, b in ak_times(p, sets, k, -1000, 2000):
                mask[a + 1000:b + 1000] = True
            direct = [indicator_Ak(shift(p, t), k, sets) for t in range(-1000, 2000)]
            assert np.array_equal(mask, np.array(direct, dtype=bool))


def test_disjointness_on_samples():
    sets = build_sets(make_preset("ce2"), 5)
    for seed in range(2000):
        p = sample_point(seed, sets)
        assert sum(indicator_Ak(p, k, sets) for k in range(1, 6)) <= 1
