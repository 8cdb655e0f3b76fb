"""Quadratic Weighted Accuracy and the tables behind the alignment figures."""

from __future__ import annotations

import math
import statistics
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import DataError


@dataclass(frozen=True)
class AlignmentScore:
    respondent_id: str
    score: float
    n_pairs: int


@dataclass(frozen=True)
class TrialSummary:
    mean: float
    sd: float
    n_trials: int = 1

    def __str__(self):
        return f"{self.mean:.1f}% ± {self.sd:.2f}%"


def qwa_weight(i: int, j: int, n_points: int) -> float:
    """1 - (|i - j| / (n_points - 1))**2 for 1-based categories i, j."""
    if n_points < 2:
        raise DataError(f"scale needs at least 2 points, got {n_points}")
    for c in (i, j):
        if not 1 <= c <= n_points:
            raise DataError(f"category {c} outside 1..{n_points}")
    return 1.0 - ((i - j) / (n_points - 1)) ** 2


def qwa_matrix(n_points: int) -> np.ndarray:
    if n_points < 2:
        raise DataError(f"scale needs at least 2 points, got {n_points}")
    idx = np.arange(1, n_points + 1)
    return 1.0 - ((idx[:, None] - idx[None, :]) / (n_points - 1)) ** 2


def agent_qwa(pairs: Sequence[tuple[int, int]], n_points: int, respondent_id: str = "") -> AlignmentScore:
    if not pairs:
        raise DataError(f"{respondent_id or 'agent'}: no response pairs to score")
    total = math.fsum(qwa_weight(t, s, n_points) for t, s in pairs)
    return AlignmentScore(respondent_id, total / len(pairs), len(pairs))


def aggregate_qwa(scores: Sequence[AlignmentScore], weights: Mapping[str, float] | None = None) -> float:
    """Mean agent score as a percentage; ``weights`` switches to a survey-weighted mean."""
    if not scores:
        raise DataError("no agent scores to aggregate")
    if weights is None:
        return 100.0 * math.fsum(s.score for s in scores) / len(scores)
    w = [weights[s.respondent_id] for s in scores]
    return 100.0 * math.fsum(wi * s.score for wi, s in zip(w, scores)) / math.fsum(w)


def trial_summary(per_trial: Sequence[float]) -> TrialSummary:
    if not per_trial:
        raise DataError("no trial aggregates")
    values = [float(v) for v in per_trial]
    sd = statistics.stdev(values) if len(values) > 1 else 0.0
    return TrialSummary(statistics.fmean(values), sd, len(values))


def cdf_points(scores: Iterable[float]) -> list[tuple[float, float]]:
    values = sorted(float(s) for s in scores)
    if not values:
        raise DataError("no scores for a CDF")
    n = len(values)
    points = []
    for k, x in enumerate(values, start=1):
        if k < n and values[k] == x:
            continue
        points.append((x, k / n))
    return points


def paired_dots(categorical: Mapping[str, float], contextualized: Mapping[str, float]) -> list[tuple[str, float, float]]:
    a, b = set(categorical), set(contextualized)
    if a != b:
        raise DataError(f"agent sets differ: {sorted(a ^ b)}")
    return [(rid, categorical[rid], contextualized[rid]) for rid in sorted(a)]


def scores_by_agent(rows, n_points: int) -> dict[str, AlignmentScore]:
    """Group result rows by respondent and score each group (rows need truth/simulated labels)."""
    pairs: dict[str, list[tuple[int, int]]] = {}
    for row in rows:
        pairs.setdefault(row.respondent_id, []).append((row.truth_label, row.simulated_label))
    return {rid: agent_qwa(p, n_points, rid) for rid, p in sorted(pairs.items())}
