import itertools
import math

import numpy as np
import pytest

from semigroup_lab.entropy import (ConvergenceError, WordStrategy, average_counts, bufetov_entropy, capacity_entropy,
                                   capacity_product_check, fit_slope, limsup_slope, plateau, product_count,
                                   skew_entropy_check)
from semigroup_lab.systems import CircleSystem, FiniteSystem, ShiftSystem, identity_system
from semigroup_lab.words import word_array

E23 = CircleSystem((2, 3))
LOG2 = math.log(2)


def test_full_shift_unit_scale_is_exact():
    est = bufetov_entropy(ShiftSystem(2), [1.0], (4, 12))
    assert est.value == pytest.approx(LOG2, abs=1e-12)
    for row in est.per_n_log_counts:
        assert row["mean_count"] == 2 ** (row["n"] + 1)


def test_circle_pair_near_log_five_halves():
    est = bufetov_entropy(E23, [0.25, 0.2], (2, 6))
    assert abs(est.value - math.log(2.5)) < 0.1
    assert est.monotone_in_eps


def test_identity_generators_have_zero_entropy():
    assert bufetov_entropy(identity_system(5, 2), [0.5], (1, 4)).value == 0.0


def test_degenerate_fit():
    with pytest.raises(ValueError, match="degenerate"):
        bufetov_entropy(ShiftSystem(2), [1.0], (4, 5))
    with pytest.raises(ValueError):
        fit_slope([1, 2], [0.0, 1.0])


def test_enumeration_overflow_and_sampling():
    with pytest.raises(OverflowError):
        WordStrategy().words(2, 25)
    rows, exact = WordStrategy.parse("sampled:100:3").words(2, 25)
    assert rows.shape == (100, 25) and not exact
    again, _ = WordStrategy.parse("sampled:100:3").words(2, 25)
    assert np.array_equal(rows, again)
    assert str(WordStrategy.parse("sampled:100:3")) == "sampled:100:3"
    with pytest.raises(ValueError):
        WordStrategy.parse("greedy")


def test_sampled_strategy_agrees_with_exact():
    pool = E23.grid(1024)
    ex = bufetov_entropy(E23, [0.25], (5, 8), pool=pool).value
    sa = bufetov_entropy(E23, [0.25], (5, 8), "sampled:64:1", pool=pool).value
    assert abs(ex - sa) < 0.05


def test_fit_helpers():
    ns = np.arange(1, 10)
    fit = fit_slope(ns, 0.5 * ns + 1)
    assert fit["slope"] == pytest.approx(0.5) and fit["stderr"] == pytest.approx(0, abs=1e-12)
    assert limsup_slope(ns, 0.5 * ns) == pytest.approx(0.5)
    assert plateau({0.1: 1.0, 0.2: 1.01, 0.4: 0.7}, 0.05) == 0.2
    assert plateau({0.1: 1.0, 0.2: 0.5}, 0.05) == 0.1


def test_counts_antitone_in_eps():
    pool = E23.grid(2048)
    for n in (2, 4):
        means = [average_counts(E23, e, n, WordStrategy(), pool)[0] for e in (0.05, 0.1, 0.2, 0.3)]
        assert means == sorted(means, reverse=True)


def naive_block_count(k, n, eps):
    """Separated count for the one-map full shift by direct pairwise comparison of all sequences."""
    depth = int(math.floor(math.log2(1 / eps) + 1e-12)) + 1
    seqs = list(itertools.product(range(k), repeat=n + depth))

    def dist(a, b):
        best = 0.0
        for t in range(n + 1):
            diff = next((i for i, (u, v) in enumerate(zip(a[t:], b[t:])) if u != v), None)
            best = max(best, 0.0 if diff is None else 2.0 ** -diff)
        return best

    chosen = []
    for s in seqs:
        if all(dist(s, c) >= eps for c in chosen):
            chosen.append(s)
    return len(chosen)


@pytest.mark.parametrize("k,eps", [(2, 1.0), (2, 0.5), (3, 1.0)])
def test_single_map_matches_naive_classical_count(k, eps):
    s = ShiftSystem(k)
    est = bufetov_entropy(s, [eps], (2, 5 if k == 2 else 4))
    for row in est.per_n_log_counts:
        assert row["mean_count"] == naive_block_count(k, row["n"], eps)
    assert est.value == pytest.approx(math.log(k), abs=1e-9)


def naive_product_count(sys, n, eps, itins, states, order):
    """First-fit on pairs with D_n = max over orbit times of max(d', d), no class splitting."""
    P = len(itins)

    def orbit(i):
        it, x = itins[i], states[i]
        out = []
        for t in range(n + 1):
            out.append((it[t:], x))
            if t < n:
                x = sys.step(int(it[t]), x)
        return out

    orbits = [orbit(i) for i in range(P)]

    def D(a, b):
        best = 0.0
        for (ia, xa), (ib, xb) in zip(a, b):
            L = min(len(ia), len(ib))
            diff = np.flatnonzero(ia[:L] != ib[:L])
            d1 = 0.0 if diff.size == 0 else 2.0 ** -int(diff[0])
            best = max(best, d1, float(sys.distance(xa, xb)))
        return best

    chosen = []
    for i in order:
        if all(D(orbits[i], orbits[c]) >= eps - 1e-12 for c in chosen):
            chosen.append(i)
    return len(chosen)


@pytest.mark.parametrize("sys", [ShiftSystem(2, m=2), FiniteSystem([[1, 2, 0, 0], [0, 0, 3, 1]])],
                         ids=["shift-m2", "finite"])
def test_product_count_matches_naive_pair_greedy(sys):
    rng = np.random.default_rng(0)
    for n, eps in ((2, 1.0), (2, 0.5), (1, 0.25)):
        need = n + ShiftSystem.depth_for(eps)
        itins = word_array(2, need)
        if isinstance(sys, ShiftSystem):
            base = sys.grid(need)
        else:
            base = np.arange(4)
        pairs_i = np.repeat(itins, len(base), axis=0)
        pairs_x = np.tile(base, (len(itins),) + (1,) * (np.ndim(base) - 1))
        order = rng.permutation(len(pairs_i))
        naive = naive_product_count(sys, n, eps, pairs_i, pairs_x, order)
        assert product_count(sys, n, eps, pairs_i, pairs_x) == naive


def test_skew_identity_on_circle_pair():
    out = skew_entropy_check(E23, [0.25], (2, 6))
    assert out["defect"] <= 0.15
    assert abs(out["h_F_estimate"] - math.log(5)) <= 0.15


def test_skew_identity_degenerate_cases():
    ident = skew_entropy_check(identity_system(4, 2), [0.5], (1, 5))
    assert ident["h_F_estimate"] == pytest.approx(LOG2, abs=1e-9)
    single = skew_entropy_check(CircleSystem((2,)), [0.25], (2, 7))
    assert single["log_m"] == 0 and abs(single["h_F_estimate"] - single["h_G_estimate"]) < 1e-9


def test_capacity_full_shift_and_singleton():
    s = ShiftSystem(2)
    assert abs(capacity_entropy(s, s.grid(12), 1.0, (4, 10)).value - LOG2) < 0.05
    assert capacity_entropy(s, s.grid(12)[:1], 1.0, (4, 10)).value == 0.0


def test_capacity_bracket_errors():
    s = ShiftSystem(2)
    with pytest.raises(ConvergenceError, match="widen"):
        capacity_entropy(s, s.grid(12), 1.0, (4, 10), gamma_bracket=(0.0, 0.3))
    with pytest.raises(ValueError):
        capacity_entropy(s, s.grid(12), 1.0, (4, 10), gamma_bracket=(1.0, 0.5))
    with pytest.raises(ValueError):
        capacity_entropy(s, s.grid(12), 0.0, (4, 10))


def test_capacity_tracks_bufetov_on_circle_pair():
    cap = capacity_entropy(E23, E23.grid(4096), 0.1, (1, 5)).value
    assert abs(cap - bufetov_entropy(E23, [0.25, 0.2], (2, 6)).value) < 0.1


def test_variable_mode_not_above_fixed():
    Z = E23.grid(1024)
    fixed = capacity_entropy(E23, Z, 0.1, (1, 5)).value
    var = capacity_entropy(E23, Z, 0.1, (1, 5), mode="variable").value
    assert var <= fixed + 0.01
    s = ShiftSystem(2, m=2)
    Zs = s.grid(14)
    assert capacity_entropy(s, Zs, 1.0, (3, 8), mode="variable").value <= \
        capacity_entropy(s, Zs, 1.0, (3, 8)).value + 0.01


def test_capacity_product_identity():
    s = ShiftSystem(2, m=2)
    single = capacity_product_check(s, s.grid(12)[:1], 1.0, (3, 8))
    assert abs(single["left"] - LOG2) < 0.05 and single["right_base"] == 0.0
    full = capacity_product_check(s, s.grid(12), 1.0, (3, 8))
    assert full["defect"] <= 0.15
    one = capacity_product_check(ShiftSystem(2), ShiftSystem(2).grid(12), 1.0, (3, 8))
    assert one["log_m"] == 0 and abs(one["left"] - one["right_base"]) < 0.01


def test_estimate_csv_rows():
    est = bufetov_entropy(ShiftSystem(2), [1.0, 0.5], (3, 6))
    rows = est.csv_rows()
    assert len(rows) == 8 and all(len(r) == 6 for r in rows)
