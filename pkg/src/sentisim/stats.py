"""Inference battery: normality gate, paired t, Wilcoxon signed-rank, effect sizes.

``select_and_run`` reproduces the analysis procedure: Shapiro-Wilk on the
paired differences decides between a paired t-test and a Wilcoxon
signed-rank test, and Cohen's d plus the common-language effect size are
reported either way.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from statistics import NormalDist
from typing import Sequence

import numpy as np
from scipy import stats as _sps

from .errors import StatsError

_NORMAL = NormalDist()

EFFECT_SMALL = 0.2
EFFECT_MEDIUM = 0.5
EFFECT_LARGE = 0.8
EXACT_MAX_N = 25


def effect_label(d: float) -> str:
    d = abs(d)
    if d >= EFFECT_LARGE:
        return "large"
    if d >= EFFECT_MEDIUM:
        return "medium"
    if d >= EFFECT_SMALL:
        return "small"
    return "negligible"


# --- Shapiro-Wilk (Royston 1995, AS R94) -----------------------------------

# polynomial coefficients, lowest order first
_C1 = (0.0, 0.221157, -0.147981, -2.071190, 4.434685, -2.706056)
_C2 = (0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633)
_C3 = (0.5440, -0.39978, 0.025054, -6.714e-4)
_C4 = (1.3822, -0.77857, 0.062767, -0.0020322)
_C5 = (-1.5861, -0.31082, -0.083751, 0.0038915)
_C6 = (-0.4803, -0.082676, 0.0030302)
_G = (-2.273, 0.459)


def _poly(coefs: Sequence[float], x: float) -> float:
    result = 0.0
    for c in reversed(coefs):
        result = result * x + c
    return result


def _swilk_coefficients(n: int) -> np.ndarray:
    """Upper-half coefficients a_1..a_{n//2} (positive, largest first)."""
    half = n // 2
    if n == 3:
        return np.array([math.sqrt(0.5)])
    m = np.array([-_NORMAL.inv_cdf((i - 0.375) / (n + 0.25)) for i in range(1, half + 1)])
    summ2 = 2.0 * float(np.sum(m**2))
    ssumm2 = math.sqrt(summ2)
    rsn = 1.0 / math.sqrt(n)
    a = np.empty(half)
    a1 = _poly(_C1, rsn) + m[0] / ssumm2
    if n > 5:
        a2 = m[1] / ssumm2 + _poly(_C2, rsn)
        fac = math.sqrt((summ2 - 2 * m[0] ** 2 - 2 * m[1] ** 2) / (1 - 2 * a1**2 - 2 * a2**2))
        a[1] = a2
        start = 2
    else:
        fac = math.sqrt((summ2 - 2 * m[0] ** 2) / (1 - 2 * a1**2))
        start = 1
    a[0] = a1
    a[start:] = m[start:] / fac
    return a


def shapiro_wilk(x: Sequence[float]) -> tuple[float, float]:
    """Shapiro-Wilk W and its p-value via Royston's approximation."""
    xs = np.sort(np.asarray(x, dtype=float))
    n = xs.size
    if n < 3 or n > 5000:
        raise StatsError(f"Shapiro-Wilk needs 3 <= n <= 5000, got {n}")
    rng = xs[-1] - xs[0]
    if rng <= 1e-19 * max(1.0, abs(xs[0])):
        raise StatsError("zero variance")

    half = _swilk_coefficients(n)
    coef = np.zeros(n)
    coef[:n // 2] = -half
    coef[n - n // 2:] = half[::-1]

    z = xs / rng
    zc = z - z.mean()
    ac = coef - coef.mean()
    ssa = float(ac @ ac)
    ssx = float(zc @ zc)
    sax = float(ac @ zc)
    root = math.sqrt(ssa * ssx)
    w1 = (root - sax) * (root + sax) / (ssa * ssx)  # 1 - W without cancellation
    w = 1.0 - w1

    if n == 3:
        p = 6.0 / math.pi * (math.asin(math.sqrt(w)) - math.pi / 3.0)
        return w, min(max(p, 0.0), 1.0)
    y = math.log(w1)
    if n <= 11:
        gamma = _poly(_G, n)
        if y >= gamma:
            return w, 1e-99
        y = -math.log(gamma - y)
        mean = _poly(_C3, n)
        sd = math.exp(_poly(_C4, n))
    else:
        ln = math.log(n)
        mean = _poly(_C5, ln)
        sd = math.exp(_poly(_C6, ln))
    p = 1.0 - NormalDist(mean, sd).cdf(y)
    return w, min(max(p, 0.0), 1.0)


# --- paired t ---------------------------------------------------------------


@dataclass(frozen=True)
class TTestResult:
    t: float
    df: int
    p: float
    mean_difference: float


def paired_t(x: Sequence[float], y: Sequence[float]) -> TTestResult:
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise StatsError(f"length mismatch: {x.size} vs {y.size}")
    n = x.size
    if n < 2:
        raise StatsError("paired t-test needs at least 2 pairs")
    d = x - y
    sd = float(np.std(d, ddof=1))
    if sd == 0.0:
        raise StatsError("zero-variance differences")
    mean = float(np.mean(d))
    t = mean / (sd / math.sqrt(n))
    p = float(2.0 * _sps.t.sf(abs(t), n - 1))
    return TTestResult(t, n - 1, min(p, 1.0), mean)


# --- Wilcoxon signed-rank ---------------------------------------------------


@dataclass(frozen=True)
class WilcoxonResult:
    statistic: float
    p: float
    method: str
    w_plus: float
    w_minus: float
    n: int
    z: float | None = None


def signed_rank_counts(n: int) -> list[int]:
    """Number of sign assignments giving each positive-rank sum 0..n(n+1)/2."""
    counts = [1] + [0] * (n * (n + 1) // 2)
    top = 0
    for r in range(1, n + 1):
        top += r
        for s in range(top, r - 1, -1):
            counts[s] += counts[s - r]
    return counts


def wilcoxon_signed_rank(x: Sequence[float], y: Sequence[float]) -> WilcoxonResult:
    """Two-sided signed-rank test with zero differences dropped.

    Exact for tie-free samples with n <= 25, otherwise the normal
    approximation with tie-corrected variance and a 0.5 continuity
    correction toward the mean.
    """
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise StatsError(f"length mismatch: {x.size} vs {y.size}")
    d = x - y
    d = d[d != 0]
    n = d.size
    if n == 0:
        raise StatsError("all differences zero")
    absd = np.abs(d)
    ranks = _sps.rankdata(absd)
    w_plus = float(ranks[d > 0].sum())
    w_minus = float(ranks[d < 0].sum())
    w = min(w_plus, w_minus)
    _, tie_sizes = np.unique(absd, return_counts=True)
    has_ties = bool(np.any(tie_sizes > 1))

    if n <= EXACT_MAX_N and not has_ties:
        counts = signed_rank_counts(n)
        tail = sum(counts[: int(w) + 1])
        p = min(1.0, 2.0 * tail / 2**n)
        return WilcoxonResult(w, p, "exact", w_plus, w_minus, n)

    mu = n * (n + 1) / 4.0
    var = n * (n + 1) * (2 * n + 1) / 24.0 - float(np.sum(tie_sizes**3 - tie_sizes)) / 48.0
    if var <= 0:
        raise StatsError("zero variance in signed ranks")
    z = min(0.0, w - mu + 0.5) / math.sqrt(var)
    p = min(1.0, 2.0 * _NORMAL.cdf(z))
    return WilcoxonResult(w, p, "normal", w_plus, w_minus, n, z)


# --- effect sizes -----------------------------------------------------------


def cohens_d(a: Sequence[float], b: Sequence[float]) -> float:
    """|mean(a) - mean(b)| / sqrt((s_a^2 + s_b^2) / 2), sample variances."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    if a.size < 2 or b.size < 2:
        raise StatsError("Cohen's d needs at least 2 values per group")
    pooled = math.sqrt((np.var(a, ddof=1) + np.var(b, ddof=1)) / 2.0)
    if pooled == 0.0:
        raise StatsError("zero pooled standard deviation")
    return abs(float(np.mean(a) - np.mean(b))) / pooled


def cles(d: float, convention: str = "phi_d") -> float:
    if convention == "phi_d":
        return _NORMAL.cdf(d)
    if convention == "phi_d_over_sqrt2":
        return _NORMAL.cdf(d / math.sqrt(2.0))
    raise ValueError(f"unknown CLES convention {convention!r}")


# --- gate-then-test ---------------------------------------------------------


@dataclass(frozen=True)
class StatReport:
    n: int
    normality_w: float
    normality_p: float
    alpha_normality: float
    chosen_test: str
    statistic: float
    p_value: float
    cohens_d: float
    cles: float
    cles_phi_d_over_sqrt2: float
    alpha: float = 0.05
    method: str = ""
    df: int | None = None
    mean_difference: float = 0.0

    @property
    def significant(self) -> bool:
        return self.p_value < self.alpha

    def to_dict(self) -> dict:
        out = asdict(self)
        out["effect_size"] = effect_label(self.cohens_d)
        out["significant"] = self.significant
        return out

    def to_text(self) -> str:
        gate = "normal" if self.chosen_test == "paired_t" else "non-normal"
        lines = [
            f"n: {self.n}",
            f"normality_gate: Shapiro-Wilk W = {self.normality_w:.4f}, p = {self.normality_p:.4g} "
            f"(alpha {self.alpha_normality}) -> {gate}",
            f"test: {self.chosen_test}" + (f" ({self.method})" if self.method else ""),
            f"statistic: {self.statistic:.6g}" + (f" (df {self.df})" if self.df is not None else ""),
            f"p_value: {self.p_value:.4g}",
            f"significant: {'yes' if self.significant else 'no'} (alpha {self.alpha})",
            f"mean_difference: {self.mean_difference:.6g}",
            f"cohens_d: {self.cohens_d:.4f} ({effect_label(self.cohens_d)})",
            f"cles_phi_d: {self.cles:.4f}",
            f"cles_phi_d_over_sqrt2: {self.cles_phi_d_over_sqrt2:.4f}",
        ]
        return "\n".join(lines) + "\n"


def select_and_run(x: Sequence[float], y: Sequence[float], alpha_normality: float = 0.05,
                   alpha: float = 0.05) -> StatReport:
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise StatsError(f"length mismatch: {x.size} vs {y.size}")
    if x.size < 3:
        raise StatsError(f"need at least 3 pairs, got {x.size}")
    w, p_norm = shapiro_wilk(x - y)
    d = cohens_d(x, y)
    common = dict(n=int(x.size), normality_w=w, normality_p=p_norm, alpha_normality=alpha_normality,
                  cohens_d=d, cles=cles(d, "phi_d"), cles_phi_d_over_sqrt2=cles(d, "phi_d_over_sqrt2"),
                  alpha=alpha, mean_difference=float(np.mean(x - y)))
    if p_norm >= alpha_normality:
        t = paired_t(x, y)
        return StatReport(chosen_test="paired_t", statistic=t.t, p_value=t.p, df=t.df, **common)
    wx = wilcoxon_signed_rank(x, y)
    return StatReport(chosen_test="wilcoxon", statistic=wx.statistic, p_value=wx.p, method=wx.method, **common)
