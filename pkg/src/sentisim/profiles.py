"""Survey schema, respondent profiles and Likert construct scoring.

The schema is a YAML document with three sections::

    scales:
      item: {labels: [...7 labels...]}
      sentiment: {labels: [...5 labels...]}
    demographics:
      - {id: age, kind: integer, min: 18, max: 89}
      - {id: sex, kind: categorical, values: [Male, Female]}
    constructs:
      - id: extraversion
        name: Extraversion
        items:
          - {id: ex1, text: "I am the life of the party."}
          - {id: ex2, text: "I keep in the background.", reverse: true}

Respondents live in a CSV file whose header uses the schema ids directly.
Ground-truth sentiments go in ``sentiment:<topic>`` columns and the optional
design weight in ``survey_weight``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import yaml

from .errors import DataError, SchemaError

DEMOGRAPHIC_KINDS = ("categorical", "integer", "text")
SENTIMENT_PREFIX = "sentiment:"
WEIGHT_COLUMN = "survey_weight"
ID_COLUMN = "respondent_id"


@dataclass(frozen=True)
class LikertScale:
    labels: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(self.labels))
        if len(self.labels) < 2:
            raise SchemaError(f"scale needs at least 2 points, got {len(self.labels)}")
        if len({lab.casefold() for lab in self.labels}) != len(self.labels):
            raise SchemaError(f"scale labels must be unique: {list(self.labels)}")

    @property
    def n_points(self) -> int:
        return len(self.labels)

    def label(self, index: int) -> str:
        """Label of the 1-based category ``index``."""
        if not 1 <= index <= self.n_points:
            raise DataError(f"category {index} outside scale 1..{self.n_points}")
        return self.labels[index - 1]

    def index(self, label: str) -> int:
        folded = label.strip().casefold()
        for i, lab in enumerate(self.labels, start=1):
            if lab.casefold() == folded:
                return i
        raise DataError(f"unknown scale label {label!r}")

    def contains(self, index: int) -> bool:
        return 1 <= index <= self.n_points


SENTIMENT_LABELS = ("Negative", "Slightly Negative", "Neutral", "Slightly Positive", "Positive")
ITEM_LABELS = (
    "Strongly Disagree",
    "Disagree",
    "Somewhat Disagree",
    "Neither Agree nor Disagree",
    "Somewhat Agree",
    "Agree",
    "Strongly Agree",
)
SENTIMENT_SCALE = LikertScale(SENTIMENT_LABELS)
ITEM_SCALE = LikertScale(ITEM_LABELS)


@dataclass(frozen=True)
class DemographicField:
    id: str
    kind: str
    values: tuple[str, ...] = ()
    min: int | None = None
    max: int | None = None

    def coerce(self, raw: Any) -> Any:
        """Convert a raw cell to the field's kind, raising DataError if it does not conform."""
        if self.kind == "integer":
            try:
                value = int(str(raw).strip())
            except ValueError:
                raise DataError(f"{self.id}: expected an integer, got {raw!r}") from None
            if (self.min is not None and value < self.min) or (self.max is not None and value > self.max):
                raise DataError(f"{self.id}: {value} outside [{self.min}, {self.max}]")
            return value
        value = str(raw)
        if self.kind == "categorical" and value not in self.values:
            raise DataError(f"{self.id}: {value!r} not one of {list(self.values)}")
        return value


@dataclass(frozen=True)
class ConstructDefinition:
    id: str
    name: str
    item_ids: tuple[str, ...]
    scale: LikertScale = ITEM_SCALE
    reverse_scored: frozenset[str] = frozenset()
    item_texts: Mapping[str, str] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "item_ids", tuple(self.item_ids))
        object.__setattr__(self, "reverse_scored", frozenset(self.reverse_scored))
        if not self.item_ids:
            raise SchemaError(f"construct {self.id!r} has no items")
        seen = set()
        for item in self.item_ids:
            if item in seen:
                raise SchemaError(f"duplicate item id {item!r} in construct {self.id!r}")
            seen.add(item)
        stray = self.reverse_scored - seen
        if stray:
            raise SchemaError(f"reverse-scored items not in construct {self.id!r}: {sorted(stray)}")


@dataclass(frozen=True)
class SurveySchema:
    demographics: tuple[DemographicField, ...]
    constructs: tuple[ConstructDefinition, ...]
    item_scale: LikertScale = ITEM_SCALE
    sentiment_scale: LikertScale = SENTIMENT_SCALE

    def __post_init__(self):
        object.__setattr__(self, "demographics", tuple(self.demographics))
        object.__setattr__(self, "constructs", tuple(self.constructs))
        ids = [d.id for d in self.demographics]
        dupes = {i for i in ids if ids.count(i) > 1}
        if dupes:
            raise SchemaError(f"duplicate demographic id {sorted(dupes)[0]!r}")
        seen: dict[str, str] = {}
        for c in self.constructs:
            for item in c.item_ids:
                if item in seen:
                    raise SchemaError(f"duplicate item id {item!r} (constructs {seen[item]!r} and {c.id!r})")
                seen[item] = c.id
        cids = [c.id for c in self.constructs]
        if len(set(cids)) != len(cids):
            raise SchemaError("duplicate construct id")

    @property
    def item_ids(self) -> list[str]:
        return [item for c in self.constructs for item in c.item_ids]

    def construct_of(self, item_id: str) -> ConstructDefinition:
        for c in self.constructs:
            if item_id in c.item_ids:
                return c
        raise KeyError(item_id)

    def demographic(self, field_id: str) -> DemographicField | None:
        for d in self.demographics:
            if d.id == field_id:
                return d
        return None


@dataclass(frozen=True)
class RespondentProfile:
    respondent_id: str
    demographics: Mapping[str, Any]
    item_responses: Mapping[str, int]
    ground_truth_sentiments: Mapping[str, int] = field(default_factory=dict)
    survey_weight: float | None = None

    def __post_init__(self):
        if self.survey_weight is not None and not self.survey_weight > 0:
            raise DataError(f"{self.respondent_id}: survey_weight must be > 0, got {self.survey_weight}")


@dataclass(frozen=True)
class ConstructScore:
    construct_id: str
    mean: float
    n_items: int
    n_points: int = 7


# --- schema loading -------------------------------------------------------


class _LineLoader(yaml.SafeLoader):
    """SafeLoader that stamps every mapping with its 1-based source line."""


def _construct_mapping(loader, node, deep=False):
    mapping = yaml.SafeLoader.construct_mapping(loader, node, deep=True)
    mapping["__line__"] = node.start_mark.line + 1
    return mapping


_LineLoader.add_constructor(yaml.resolver.BaseResolver.DEFAULT_MAPPING_TAG, _construct_mapping)


def load_yaml(path: str | Path) -> dict:
    """Load a YAML file keeping line numbers in ``__line__`` keys."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise SchemaError(f"{path}: cannot read ({exc.strerror})") from None
    try:
        doc = yaml.load(text, Loader=_LineLoader)
    except yaml.YAMLError as exc:
        raise SchemaError(f"{path}: parse error: {exc}") from None
    if not isinstance(doc, dict):
        raise SchemaError(f"{path}: expected a mapping at top level")
    return doc


def strip_lines(obj):
    """Drop the ``__line__`` bookkeeping keys recursively."""
    if isinstance(obj, dict):
        return {k: strip_lines(v) for k, v in obj.items() if k != "__line__"}
    if isinstance(obj, list):
        return [strip_lines(v) for v in obj]
    return obj


def _where(path, node) -> str:
    line = node.get("__line__") if isinstance(node, dict) else None
    return f"{path}:{line}" if line else str(path)


def _scale_from(node, path, default: LikertScale) -> LikertScale:
    if node is None:
        return default
    labels = node.get("labels")
    if labels is None and "n_points" in node:
        n = int(node["n_points"])
        if n < 2:
            raise SchemaError(f"{_where(path, node)}: scale with n_points {n} < 2")
        labels = [str(i) for i in range(1, n + 1)]
    try:
        return LikertScale(tuple(str(x) for x in labels or ()))
    except SchemaError as exc:
        raise SchemaError(f"{_where(path, node)}: {exc}") from None


def load_schema(path: str | Path) -> SurveySchema:
    path = Path(path)
    doc = load_yaml(path)
    scales = doc.get("scales") or {}
    item_scale = _scale_from(scales.get("item"), path, ITEM_SCALE)
    sentiment_scale = _scale_from(scales.get("sentiment"), path, SENTIMENT_SCALE)

    demographics = []
    seen_demo = set()
    for node in doc.get("demographics") or []:
        where = _where(path, node)
        fid = str(node.get("id", "")).strip()
        kind = node.get("kind", "text")
        if not fid:
            raise SchemaError(f"{where}: demographic without id")
        if fid in seen_demo:
            raise SchemaError(f"{where}: duplicate demographic id {fid!r}")
        seen_demo.add(fid)
        if kind not in DEMOGRAPHIC_KINDS:
            raise SchemaError(f"{where}: unknown demographic kind {kind!r}")
        if kind == "categorical" and not node.get("values"):
            raise SchemaError(f"{where}: categorical field {fid!r} needs values")
        demographics.append(
            DemographicField(
                id=fid,
                kind=kind,
                values=tuple(str(v) for v in node.get("values") or ()),
                min=node.get("min"),
                max=node.get("max"),
            )
        )

    constructs = []
    seen_items: dict[str, str] = {}
    for node in doc.get("constructs") or []:
        where = _where(path, node)
        cid = str(node.get("id", "")).strip()
        if not cid:
            raise SchemaError(f"{where}: construct without id")
        item_ids, reverse, texts = [], set(), {}
        for item in node.get("items") or []:
            if isinstance(item, dict):
                iid = str(item.get("id"))
                if item.get("reverse"):
                    reverse.add(iid)
                if item.get("text"):
                    texts[iid] = str(item["text"])
                item_where = _where(path, item)
            else:
                iid = str(item)
                item_where = where
            if iid in item_ids:
                raise SchemaError(f"{item_where}: duplicate item id {iid!r} in construct {cid!r}")
            if iid in seen_items:
                raise SchemaError(f"{item_where}: duplicate item id {iid!r} (also in {seen_items[iid]!r})")
            seen_items[iid] = cid
            item_ids.append(iid)
        reverse |= {str(r) for r in node.get("reverse_scored") or ()}
        scale = _scale_from(node.get("scale"), path, item_scale)
        try:
            constructs.append(
                ConstructDefinition(
                    id=cid,
                    name=str(node.get("name", cid)),
                    item_ids=tuple(item_ids),
                    scale=scale,
                    reverse_scored=frozenset(reverse),
                    item_texts=texts,
                )
            )
        except SchemaError as exc:
            raise SchemaError(f"{where}: {exc}") from None

    try:
        return SurveySchema(tuple(demographics), tuple(constructs), item_scale, sentiment_scale)
    except SchemaError as exc:
        raise SchemaError(f"{path}: {exc}") from None


# --- respondents ------------------------------------------------------------


def _parse_int(cell: str, row: int, column: str) -> int:
    try:
        value = float(cell)
    except ValueError:
        raise DataError(f"row {row}, column {column!r}: non-numeric response {cell!r}") from None
    if not value.is_integer():
        raise DataError(f"row {row}, column {column!r}: non-integer response {cell!r}")
    return int(value)


def load_respondents(path: str | Path, schema: SurveySchema, delimiter: str = ",") -> list[RespondentProfile]:
    """Read and validate one profile per data row; rows are numbered from 2 (header is row 1)."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        return parse_respondents(fh, schema, delimiter=delimiter, source=str(path))


def parse_respondents(fh: Iterable[str], schema: SurveySchema, delimiter: str = ",", source: str = "<input>"):
    reader = csv.DictReader(fh, delimiter=delimiter)
    header = reader.fieldnames or []
    required = [ID_COLUMN] + [d.id for d in schema.demographics] + schema.item_ids
    missing = [c for c in required if c not in header]
    if missing:
        raise DataError(f"{source}: missing required column {missing[0]!r}")
    topic_columns = [c for c in header if c.startswith(SENTIMENT_PREFIX)]

    profiles = []
    seen_ids = set()
    for row_no, row in enumerate(reader, start=2):
        rid = (row.get(ID_COLUMN) or "").strip()
        if not rid:
            raise DataError(f"{source}: row {row_no}: empty respondent_id")
        if rid in seen_ids:
            raise DataError(f"{source}: row {row_no}: duplicate respondent_id {rid!r}")
        seen_ids.add(rid)

        demographics = {}
        for d in schema.demographics:
            cell = row.get(d.id)
            if cell is None or cell == "":
                continue
            try:
                demographics[d.id] = d.coerce(cell)
            except DataError as exc:
                raise DataError(f"{source}: row {row_no}: {exc}") from None

        responses = {}
        for c in schema.constructs:
            for item in c.item_ids:
                cell = (row.get(item) or "").strip()
                if cell == "":
                    continue
                value = _parse_int(cell, row_no, item)
                if not c.scale.contains(value):
                    raise DataError(
                        f"{source}: row {row_no}, item {item!r}: response {value} outside 1..{c.scale.n_points}"
                    )
                responses[item] = value

        truths = {}
        for col in topic_columns:
            cell = (row.get(col) or "").strip()
            if cell == "":
                continue
            topic = col[len(SENTIMENT_PREFIX):]
            if cell.lstrip("-").isdigit():
                value = int(cell)
            else:
                try:
                    value = schema.sentiment_scale.index(cell)
                except DataError:
                    raise DataError(f"{source}: row {row_no}, column {col!r}: unknown sentiment {cell!r}") from None
            if not schema.sentiment_scale.contains(value):
                raise DataError(f"{source}: row {row_no}, column {col!r}: sentiment {value} out of range")
            truths[topic] = value

        weight = None
        cell = (row.get(WEIGHT_COLUMN) or "").strip()
        if cell:
            try:
                weight = float(cell)
            except ValueError:
                raise DataError(f"{source}: row {row_no}: non-numeric survey_weight {cell!r}") from None
            if not (weight > 0 and math.isfinite(weight)):
                raise DataError(f"{source}: row {row_no}: survey_weight must be > 0, got {cell}")

        profiles.append(RespondentProfile(rid, demographics, responses, truths, weight))
    return profiles


def dump_respondents(profiles: Sequence[RespondentProfile], schema: SurveySchema, delimiter: str = ",") -> str:
    topics = sorted({t for p in profiles for t in p.ground_truth_sentiments})
    header = [ID_COLUMN] + [d.id for d in schema.demographics] + schema.item_ids
    header += [SENTIMENT_PREFIX + t for t in topics]
    has_weights = any(p.survey_weight is not None for p in profiles)
    if has_weights:
        header.append(WEIGHT_COLUMN)

    buf = io.StringIO()
    writer = csv.writer(buf, delimiter=delimiter, lineterminator="\n")
    writer.writerow(header)
    for p in profiles:
        row = [p.respondent_id]
        row += [p.demographics.get(d.id, "") for d in schema.demographics]
        row += [p.item_responses.get(i, "") for i in schema.item_ids]
        row += [p.ground_truth_sentiments.get(t, "") for t in topics]
        if has_weights:
            row.append("" if p.survey_weight is None else repr(float(p.survey_weight)))
        writer.writerow(row)
    return buf.getvalue()


def write_respondents(path: str | Path, profiles: Sequence[RespondentProfile], schema: SurveySchema) -> None:
    Path(path).write_text(dump_respondents(profiles, schema), encoding="utf-8")


# --- scoring ----------------------------------------------------------------


def reverse_score(value: int, n_points: int) -> int:
    return n_points + 1 - value


def construct_mean(profile: RespondentProfile, construct: ConstructDefinition) -> ConstructScore:
    n = construct.scale.n_points
    values = []
    for item in construct.item_ids:
        if item not in profile.item_responses:
            raise DataError(f"{profile.respondent_id}: missing response for item {item!r}")
        raw = profile.item_responses[item]
        values.append(reverse_score(raw, n) if item in construct.reverse_scored else raw)
    return ConstructScore(construct.id, sum(values) / len(values), len(values), n)
