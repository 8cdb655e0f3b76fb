"""Synthetic populations drawn through a staged household survey design.

Regions get respondents in proportion to registered voters, barangays are
picked by systematic interval sampling, a fixed number of households per
barangay are picked the same way, and one adult per household is chosen
by strict gender rotation. Design weights are the inverse joint selection
probabilities and are then post-stratified to region x gender voter counts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import DataError, InfeasibleFrame, SchemaError
from .profiles import RespondentProfile, SurveySchema, load_yaml, reverse_score, strip_lines


@dataclass(frozen=True)
class Barangay:
    id: str
    households: int


@dataclass(frozen=True)
class Region:
    id: str
    registered_voters: int
    barangays: tuple[Barangay, ...]
    female_share: float = 0.5
    municipality_prob: float = 1.0


@dataclass(frozen=True)
class SamplingFrame:
    regions: tuple[Region, ...]
    target_n: int
    households_per_barangay: int = 5
    respondent_prob: float = 0.5
    gender_field: str = "sex"
    genders: tuple[str, str] = ("Male", "Female")
    region_field: str = "region"
    p_missing_gender: float = 0.0
    responses: Mapping[str, Mapping[str, float]] = field(default_factory=dict)
    demographics: Mapping[str, object] = field(default_factory=dict)
    sentiments: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        if not self.regions:
            raise SchemaError("frame has no regions")
        rids = [r.id for r in self.regions]
        if len(set(rids)) != len(rids):
            raise SchemaError("duplicate region id in frame")
        bids = [b.id for r in self.regions for b in r.barangays]
        if len(set(bids)) != len(bids):
            raise SchemaError("duplicate barangay id in frame")
        for r in self.regions:
            if r.registered_voters <= 0 or not r.barangays:
                raise SchemaError(f"region {r.id!r}: counts must be > 0")
            if any(b.households <= 0 for b in r.barangays):
                raise SchemaError(f"region {r.id!r}: household counts must be > 0")
            if not 0 < r.female_share < 1 or not 0 < r.municipality_prob <= 1:
                raise SchemaError(f"region {r.id!r}: share/probability out of range")
        if self.target_n <= 0:
            raise SchemaError("target_n must be > 0")
        if not 0 < self.respondent_prob <= 1:
            raise SchemaError("respondent_prob must be in (0, 1]")

    @property
    def total_households(self) -> int:
        return sum(b.households for r in self.regions for b in r.barangays)


@dataclass(frozen=True)
class SelectionRecord:
    respondent_id: str
    stage_probs: tuple[float, ...]
    design_weight: float
    region_id: str = ""
    barangay_id: str = ""
    household: int = -1
    gender: str = ""


@dataclass(frozen=True)
class StratCell:
    region_id: str
    gender: str
    target_count: float
    members: tuple[str, ...]


@dataclass
class Population:
    profiles: list[RespondentProfile]
    records: list[SelectionRecord]
    cells: list[StratCell]
    weights: list[float]


def load_frame(path: str | Path) -> SamplingFrame:
    doc = strip_lines(load_yaml(path))
    try:
        regions = tuple(
            Region(
                id=str(r["id"]),
                registered_voters=int(r["registered_voters"]),
                barangays=tuple(Barangay(str(b["id"]), int(b["households"])) for b in r["barangays"]),
                female_share=float(r.get("female_share", 0.5)),
                municipality_prob=float(r.get("municipality_prob", 1.0)),
            )
            for r in doc["regions"]
        )
        return SamplingFrame(
            regions=regions,
            target_n=int(doc["target_n"]),
            households_per_barangay=int(doc.get("households_per_barangay", 5)),
            respondent_prob=float(doc.get("respondent_prob", 0.5)),
            gender_field=str(doc.get("gender_field", "sex")),
            genders=tuple(doc.get("genders", ("Male", "Female"))),
            region_field=str(doc.get("region_field", "region")),
            p_missing_gender=float(doc.get("p_missing_gender", 0.0)),
            responses=doc.get("responses") or {},
            demographics=doc.get("demographics") or {},
            sentiments=doc.get("sentiments") or {},
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"{path}: malformed frame ({exc!r})") from None


def allocate_pps(frame: SamplingFrame, total_n: int) -> dict[str, int]:
    """Largest-remainder allocation proportional to registered voters.

    Ties on the fractional remainder go to the lexicographically smaller
    region id.
    """
    regions = frame.regions
    if total_n < len(regions):
        raise InfeasibleFrame(f"total_n {total_n} smaller than the number of regions ({len(regions)})")
    voters = sum(r.registered_voters for r in regions)
    # integer arithmetic keeps the remainders exact
    floors = {r.id: total_n * r.registered_voters // voters for r in regions}
    remainders = {r.id: total_n * r.registered_voters % voters for r in regions}
    left = total_n - sum(floors.values())
    for rid in sorted(floors, key=lambda k: (-remainders[k], k))[:left]:
        floors[rid] += 1
    return {r.id: floors[r.id] for r in regions}


def systematic_sample(units: Sequence, k: int, seed: int, start: int | None = None) -> list[int]:
    n = len(units)
    if k > n:
        raise InfeasibleFrame(f"cannot pick {k} of {n} units")
    if k <= 0:
        return []
    if start is None:
        start = int(np.random.default_rng(seed).integers(0, n))
    # round half up so the rule does not depend on banker's rounding
    picks = {(start + math.floor(j * n / k + 0.5)) % n for j in range(k)}
    return sorted(picks)


def design_weight(stage_probs: Sequence) -> float:
    for p in stage_probs:
        if not 0 < p <= 1:
            raise DataError(f"selection probability {p} outside (0, 1]")
    return 1 / math.prod(stage_probs)


def post_stratify(records: Sequence[SelectionRecord], cells: Sequence[StratCell]) -> list[float]:
    """Scale design weights so each cell's weighted total hits its target.

    Returns adjusted weights in ``records`` order.
    """
    cell_of: dict[str, int] = {}
    for ci, cell in enumerate(cells):
        if not cell.target_count > 0:
            raise DataError(f"cell ({cell.region_id}, {cell.gender}): target must be > 0")
        for rid in cell.members:
            if rid in cell_of:
                raise DataError(f"record {rid!r} belongs to more than one cell")
            cell_of[rid] = ci
    sums = [0.0] * len(cells)
    for rec in records:
        if rec.respondent_id not in cell_of:
            raise DataError(f"record {rec.respondent_id!r} is in no cell")
        sums[cell_of[rec.respondent_id]] += rec.design_weight
    for ci, cell in enumerate(cells):
        if sums[ci] <= 0:
            raise DataError(f"cell ({cell.region_id}, {cell.gender}) is empty but has target {cell.target_count}")
    factors = [cell.target_count / s for cell, s in zip(cells, sums)]
    return [rec.design_weight * factors[cell_of[rec.respondent_id]] for rec in records]


# --- synthesis -------------------------------------------------------------


def _barangay_quotas(sizes: list[int], n: int, per: int) -> list[int]:
    quotas = [0] * len(sizes)
    left = n
    # first pass: up to `per` households each, then spill over into spare capacity
    for cap in (per, None):
        for i, size in enumerate(sizes):
            limit = size if cap is None else min(size, cap)
            take = min(limit - quotas[i], left)
            quotas[i] += take
            left -= take
    if left:
        raise InfeasibleFrame(f"selected barangays hold too few households for {n} respondents")
    return quotas


def _draw_demographic(rng, spec_field, dist) -> object:
    if isinstance(dist, Mapping) and dist and spec_field.kind == "categorical":
        values = list(dist)
        probs = np.asarray([float(dist[v]) for v in values])
        return str(values[rng.choice(len(values), p=probs / probs.sum())])
    if spec_field.kind == "categorical":
        return spec_field.values[int(rng.integers(0, len(spec_field.values)))]
    if spec_field.kind == "integer":
        lo = spec_field.min if spec_field.min is not None else 18
        hi = spec_field.max if spec_field.max is not None else 89
        if isinstance(dist, Mapping):
            lo, hi = int(dist.get("min", lo)), int(dist.get("max", hi))
        return int(rng.integers(lo, hi + 1))
    return ""


def _sentiment_probs(frame: SamplingFrame, topic: str, n_points: int) -> np.ndarray:
    probs = frame.sentiments.get("probs")
    per_topic = frame.sentiments.get("per_topic") or {}
    if topic in per_topic:
        probs = per_topic[topic]
    if probs is None:
        return np.full(n_points, 1.0 / n_points)
    probs = np.asarray(probs, dtype=float)
    if len(probs) != n_points:
        raise SchemaError(f"sentiment probabilities for {topic!r} need {n_points} entries")
    return probs / probs.sum()


def synthesize(frame: SamplingFrame, schema: SurveySchema, seed: int) -> Population:
    """Run the full staged design and fabricate schema-conformant answers."""
    if frame.target_n > frame.total_households:
        raise InfeasibleFrame(f"target_n {frame.target_n} exceeds {frame.total_households} households")
    rng = np.random.default_rng(seed)
    allocation = allocate_pps(frame, frame.target_n)
    male, female = frame.genders
    rotation = int(rng.integers(0, 2))

    selections = []  # (region, barangay, household, gender, stage_probs)
    for region in sorted(frame.regions, key=lambda r: r.id):
        n_r = allocation[region.id]
        if n_r == 0:
            continue
        units = list(region.barangays)
        m = min(len(units), math.ceil(n_r / frame.households_per_barangay))
        picked = [units[i] for i in systematic_sample(units, m, int(rng.integers(0, 2**31)))]
        quotas = _barangay_quotas([b.households for b in picked], n_r, frame.households_per_barangay)
        for brgy, quota in sorted(zip(picked, quotas), key=lambda t: t[0].id):
            if quota == 0:
                continue
            households = systematic_sample(range(brgy.households), quota, int(rng.integers(0, 2**31)))
            probs = []
            if region.municipality_prob < 1:
                probs.append(region.municipality_prob)
            probs += [m / len(units), quota / brgy.households, frame.respondent_prob]
            for household in households:
                target = male if rotation % 2 == 0 else female
                rotation += 1
                gender = target
                if frame.p_missing_gender and rng.random() < frame.p_missing_gender:
                    # this household has no eligible adult of the target gender
                    gender = female if target == male else male
                selections.append((region, brgy, household, gender, tuple(probs)))

    gender_field = schema.demographic(frame.gender_field)
    region_field = schema.demographic(frame.region_field)
    default_resp = dict(frame.responses.get("default", {}))

    profiles, records = [], []
    for idx, (region, brgy, household, gender, probs) in enumerate(selections, start=1):
        rid = f"R{idx:05d}"
        demographics = {}
        for d in schema.demographics:
            if d is gender_field:
                demographics[d.id] = d.coerce(gender)
            elif d is region_field:
                demographics[d.id] = d.coerce(region.id)
            else:
                demographics[d.id] = _draw_demographic(rng, d, frame.demographics.get(d.id))
        responses = {}
        for c in schema.constructs:
            n = c.scale.n_points
            params = {**default_resp, **frame.responses.get(c.id, {})}
            latent = rng.normal(float(params.get("mean", (n + 1) / 2)), float(params.get("sd", 1.2)))
            noise = float(params.get("item_noise", 0.7))
            for item in c.item_ids:
                value = int(np.clip(np.rint(latent + rng.normal(0.0, noise)), 1, n))
                responses[item] = reverse_score(value, n) if item in c.reverse_scored else value
        truths = {}
        for topic in frame.sentiments.get("topics") or ():
            p = _sentiment_probs(frame, topic, schema.sentiment_scale.n_points)
            truths[str(topic)] = int(rng.choice(len(p), p=p)) + 1
        profiles.append(RespondentProfile(rid, demographics, responses, truths))
        records.append(SelectionRecord(rid, probs, design_weight(probs), region.id, brgy.id, household, gender))

    cells = _build_cells(frame, records)
    weights = post_stratify(records, cells)
    profiles = [
        RespondentProfile(p.respondent_id, p.demographics, p.item_responses, p.ground_truth_sentiments, w)
        for p, w in zip(profiles, weights)
    ]
    return Population(profiles, records, cells, weights)


def _build_cells(frame: SamplingFrame, records: Sequence[SelectionRecord]) -> list[StratCell]:
    """Region x gender cells; a region with an empty gender cell collapses to one region cell."""
    cells = []
    for region in sorted(frame.regions, key=lambda r: r.id):
        members = {g: [r.respondent_id for r in records if r.region_id == region.id and r.gender == g]
                   for g in frame.genders}
        if not any(members.values()):
            continue
        shares = {frame.genders[0]: 1 - region.female_share, frame.genders[1]: region.female_share}
        if all(members.values()):
            for g in frame.genders:
                cells.append(StratCell(region.id, g, region.registered_voters * shares[g], tuple(members[g])))
        else:
            everyone = tuple(m for g in frame.genders for m in members[g])
            cells.append(StratCell(region.id, "*", float(region.registered_voters), everyone))
    return cells


def synthesize_population(frame: SamplingFrame, schema: SurveySchema, seed: int) -> list[RespondentProfile]:
    return synthesize(frame, schema, seed).profiles
