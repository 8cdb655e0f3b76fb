"""Scenario topics, polarity framing and balanced framing assignment."""

from __future__ import annotations

import enum
import hashlib
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

from .errors import DataError
from .profiles import load_yaml, strip_lines

DEFAULT_TOPICS = ("wage_policies", "budget_transparency", "inflation", "justice_system", "political_dynasties")


class Polarity(str, enum.Enum):
    POSITIVE = "Positive"
    NEGATIVE = "Negative"


@dataclass(frozen=True)
class Scenario:
    topic: str
    positive_text: str
    negative_text: str
    domain: str = "policy"

    def __post_init__(self):
        if not self.positive_text.strip() or not self.negative_text.strip():
            raise DataError(f"scenario {self.topic!r}: empty framing text")
        if self.positive_text.strip() == self.negative_text.strip():
            raise DataError(f"scenario {self.topic!r}: framings identical")


@dataclass(frozen=True)
class FramedScenario:
    scenario_topic: str
    polarity: Polarity
    text: str
    domain: str = "policy"


@dataclass(frozen=True)
class FramingAssignment:
    polarities: Mapping[str, Polarity]
    seed: int

    def __getitem__(self, respondent_id: str) -> Polarity:
        return self.polarities[respondent_id]

    def counts(self) -> tuple[int, int]:
        values = list(self.polarities.values())
        return values.count(Polarity.POSITIVE), values.count(Polarity.NEGATIVE)


def load_scenarios(path: str | Path) -> list[Scenario]:
    doc = load_yaml(path)
    out, seen = [], set()
    for node in doc.get("scenarios") or []:
        line = node.get("__line__")
        topic = str(node.get("topic", "")).strip()
        if not topic:
            raise DataError(f"{path}:{line}: scenario without topic")
        if topic in seen:
            raise DataError(f"{path}:{line}: duplicate topic {topic!r}")
        seen.add(topic)
        node = strip_lines(node)
        try:
            out.append(
                Scenario(
                    topic,
                    str(node.get("positive_text") or ""),
                    str(node.get("negative_text") or ""),
                    str(node.get("domain") or "policy"),
                )
            )
        except DataError as exc:
            raise DataError(f"{path}:{line}: {exc}") from None
    return out


def frame(scenario: Scenario, polarity: Polarity) -> FramedScenario:
    polarity = Polarity(polarity)
    text = scenario.positive_text if polarity is Polarity.POSITIVE else scenario.negative_text
    return FramedScenario(scenario.topic, polarity, text, scenario.domain)


def assign_framings(respondent_ids: Sequence[str], seed: int) -> FramingAssignment:
    """Shuffle with a seeded generator and split; odd N gives Positive the extra agent."""
    ids = list(respondent_ids)
    if len(set(ids)) != len(ids):
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        raise DataError(f"duplicate respondent ids: {dupes}")
    shuffled = ids[:]
    random.Random(seed).shuffle(shuffled)
    half = (len(ids) + 1) // 2
    polarities = {rid: Polarity.POSITIVE for rid in shuffled[:half]}
    polarities.update({rid: Polarity.NEGATIVE for rid in shuffled[half:]})
    # keep caller order for a stable mapping layout
    return FramingAssignment({rid: polarities[rid] for rid in ids}, seed)


def topic_seed(master_seed: int, topic: str) -> int:
    """Independent per-topic seed stream derived from the experiment seed."""
    digest = hashlib.sha256(f"{master_seed}:framing:{topic}".encode()).digest()
    return int.from_bytes(digest[:8], "big")
