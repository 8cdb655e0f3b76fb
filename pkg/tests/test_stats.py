import itertools
import json
import math
import random
from pathlib import Path

import numpy as np
import pytest
import scipy.stats as sps
from hypothesis import given, strategies as st

from sentisim.errors import StatsError
from sentisim.stats import (
    cles, cohens_d, effect_label, paired_t, select_and_run, shapiro_wilk, signed_rank_counts,
    wilcoxon_signed_rank,
)

FIXTURES = json.loads((Path(__file__).parent / "fixtures" / "shapiro_fixtures.json").read_text())


def enumeration_p(d):
    """Two-sided exact p by listing every sign assignment of the ranks."""
    d = [v for v in d if v != 0]
    n = len(d)
    ranks = sps.rankdata(np.abs(d))
    w_plus = sum(r for r, v in zip(ranks, d) if v > 0)
    centre = n * (n + 1) / 4
    observed = abs(w_plus - centre)
    hits = 0
    for signs in itertools.product((0, 1), repeat=n):
        wp = sum(r for r, s in zip(ranks, signs) if s)
        if abs(wp - centre) >= observed - 1e-12:
            hits += 1
    return hits / 2**n


def tie_free_fixture(rng, n):
    mags = rng.sample(range(1, 1000), n)
    return [m * rng.choice((-1, 1)) / 10 for m in mags]


# --- Shapiro-Wilk -------------------------------------------------------------


@pytest.mark.parametrize("case", FIXTURES, ids=[c["name"] for c in FIXTURES])
def test_shapiro_matches_frozen_oracle(case):
    w, p = shapiro_wilk(case["x"])
    assert abs(w - case["W"]) < 1e-3
    assert abs(p - case["p"]) < 1e-3


def test_shapiro_small_n_and_errors():
    for x in ([1.0, 2.0, 4.0], [3.1, 0.2, 5.5, 1.0, 2.2]):
        w, p = shapiro_wilk(x)
        ref = sps.shapiro(x)
        assert w == pytest.approx(ref.statistic, abs=1e-4) and p == pytest.approx(ref.pvalue, abs=1e-3)
    with pytest.raises(StatsError, match="zero variance"):
        shapiro_wilk([2.0, 2.0, 2.0, 2.0])
    with pytest.raises(StatsError):
        shapiro_wilk([1.0, 2.0])


# --- paired t -----------------------------------------------------------------


def test_paired_t_hand_case():
    r = paired_t([1, 2, 3], [0, 0, 0])
    assert r.t == pytest.approx(2 * math.sqrt(3), abs=1e-12)
    assert r.df == 2
    assert abs(r.p - 0.0742) < 1e-3


def test_paired_t_antisymmetry_and_oracle():
    rng = np.random.default_rng(3)
    for _ in range(100):
        n = int(rng.integers(3, 30))
        x, y = rng.normal(size=n), rng.normal(size=n)
        a, b = paired_t(x, y), paired_t(y, x)
        assert a.t == pytest.approx(-b.t, abs=1e-12) and a.p == pytest.approx(b.p, abs=1e-12)
        ref = sps.ttest_rel(x, y)
        assert a.t == pytest.approx(ref.statistic, rel=1e-9) and a.p == pytest.approx(ref.pvalue, rel=1e-9)


def test_paired_t_errors():
    with pytest.raises(StatsError, match="zero-variance"):
        paired_t([1, 2, 3], [0, 1, 2])
    with pytest.raises(StatsError, match="length mismatch"):
        paired_t([1, 2], [1, 2, 3])


# --- Wilcoxon -------------------------------------------------------------------


def test_wilcoxon_worked_fixture():
    r = wilcoxon_signed_rank([1, -2, 3, -4, 5], [0] * 5)
    assert (r.statistic, r.w_plus, r.w_minus, r.method) == (6, 9, 6, "exact")
    assert abs(r.p - 0.8125) < 1e-12


def test_wilcoxon_exact_equals_enumeration():
    rng = random.Random(20241122)
    for k in range(100):
        d = tie_free_fixture(rng, 1 + k % 10)
        r = wilcoxon_signed_rank(d, [0] * len(d))
        assert abs(r.p - enumeration_p(d)) < 1e-12
        assert (r.p * 2 ** r.n) == pytest.approx(round(r.p * 2 ** r.n), abs=1e-9)


def test_wilcoxon_matches_scipy_exact():
    rng = random.Random(8)
    for _ in range(30):
        d = tie_free_fixture(rng, rng.randint(5, 25))
        ref = sps.wilcoxon(d, method="exact")
        r = wilcoxon_signed_rank(d, [0] * len(d))
        assert r.statistic == ref.statistic and r.p == pytest.approx(ref.pvalue, rel=1e-9)


def test_wilcoxon_normal_approximation_with_ties():
    d = [1, 1, 2, 2, -3, 4, 4, 5, 6, -6, 7, 8, 0, 0]
    r = wilcoxon_signed_rank(d, [0] * len(d))
    assert r.method == "normal" and r.n == 12
    ref = sps.wilcoxon(d, zero_method="wilcox", correction=True, method="approx")
    assert r.statistic == ref.statistic and r.p == pytest.approx(ref.pvalue, rel=1e-9)
    big = list(np.random.default_rng(1).normal(0.3, 1, size=40))
    ref = sps.wilcoxon(big, correction=True, method="approx")
    assert wilcoxon_signed_rank(big, [0] * 40).p == pytest.approx(ref.pvalue, rel=1e-9)


def test_wilcoxon_all_zero():
    with pytest.raises(StatsError, match="all differences zero"):
        wilcoxon_signed_rank([1, 2], [1, 2])


def test_signed_rank_counts_sum():
    for n in range(1, 15):
        c = signed_rank_counts(n)
        assert sum(c) == 2**n and c == c[::-1]


# --- effect sizes ------------------------------------------------------------------


def test_cohens_d_hand_cases():
    assert cohens_d([1, 2, 3], [1, 2, 3]) == 0.0
    assert cohens_d([1, 2, 3], [2, 3, 4]) == pytest.approx(1.0, abs=1e-9)
    with pytest.raises(StatsError):
        cohens_d([1, 1], [1, 1])


@given(st.lists(st.floats(-100, 100), min_size=3, max_size=20), st.floats(0.1, 50), st.floats(-100, 100))
def test_cohens_d_scale_and_shift_invariant(a, c, k):
    a = np.asarray(a)
    b = a[::-1] * 0.5 + 1.0
    if np.std(a) < 1e-3 or np.std(b) < 1e-3:
        return
    d = cohens_d(a, b)
    assert cohens_d(a * c, b * c) == pytest.approx(d, rel=1e-6, abs=1e-9)
    assert cohens_d(a + k, b + k) == pytest.approx(d, rel=1e-6, abs=1e-9)


def test_cles_values():
    assert cles(0.0) == 0.5 and cles(0.0, "phi_d_over_sqrt2") == 0.5
    assert abs(cles(0.70) - 0.758) < 1e-3
    assert abs(cles(0.70, "phi_d_over_sqrt2") - 0.690) < 1e-3
    with pytest.raises(ValueError):
        cles(0.5, "other")


@given(st.floats(-5, 5), st.floats(0.01, 2))
def test_cles_monotone_and_symmetric(d, step):
    for conv in ("phi_d", "phi_d_over_sqrt2"):
        assert cles(d + step, conv) > cles(d, conv)
        assert cles(-d, conv) == pytest.approx(1 - cles(d, conv), abs=1e-12)


def test_effect_labels():
    assert [effect_label(v) for v in (0.1, 0.3, 0.6, 0.9)] == ["negligible", "small", "medium", "large"]


# --- gate-then-test -------------------------------------------------------------


def test_select_near_normal_uses_t():
    rng = np.random.default_rng(12)
    y = rng.normal(0, 1, 30)
    x = y + rng.normal(0.5, 1, 30)
    assert sps.shapiro(x - y).pvalue >= 0.05
    r = select_and_run(x, y)
    assert r.chosen_test == "paired_t" and r.df == 29


def test_select_heavy_tailed_uses_wilcoxon():
    rng = np.random.default_rng(4)
    y = rng.normal(0, 1, 30)
    x = y + rng.standard_cauchy(30)
    assert sps.shapiro(x - y).pvalue < 0.05
    r = select_and_run(x, y)
    assert r.chosen_test == "wilcoxon"
    text = r.to_text()
    for key in ("normality_gate", "p_value", "cohens_d", "cles_phi_d", "cles_phi_d_over_sqrt2"):
        assert key in text


def test_select_gate_consistency_randomized():
    rng = np.random.default_rng(99)
    for _ in range(60):
        n = int(rng.integers(3, 40))
        x = rng.normal(size=n)
        y = x + rng.exponential(size=n) * rng.choice([-1, 1], size=n)
        r = select_and_run(x, y)
        assert (r.chosen_test == "paired_t") == (r.normality_p >= r.alpha_normality)
        assert 0 <= r.p_value <= 1
        assert r.to_dict()["effect_size"] == effect_label(r.cohens_d)


def test_select_needs_three_pairs():
    with pytest.raises(StatsError):
        select_and_run([1, 2], [2, 3])
