"""Profile encoders: render an embodiment prompt from a respondent profile.

Templates are plain text with ``<token>`` placeholders; tokens may contain
spaces (``<income range>``). Two aggregate placeholders are filled by the
encoders in addition to one placeholder per construct id:

``<psychographic profile>``
    one line per construct, ``Name: HIGH`` (categorical) or the narrative
    sentence (contextualized).
``<demographic profile>``
    one ``field: value`` line per demographic present on the profile.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Mapping

from .errors import ConfigError, DataError
from .profiles import (
    ConstructScore,
    RespondentProfile,
    SurveySchema,
    construct_mean,
    load_yaml,
    strip_lines,
)

PLACEHOLDER = re.compile(r"<([^<>\n]+)>")
PROFILE_TOKEN = "psychographic profile"
DEMOGRAPHIC_TOKEN = "demographic profile"


class Band(enum.IntEnum):
    LOW = 1
    MODERATE = 2
    HIGH = 3

    @property
    def label(self) -> str:
        return self.name.capitalize()


def band_of(score: ConstructScore) -> Band:
    """Equal thirds of the scale range; the boundaries themselves are Moderate."""
    n = score.n_points
    third = (n - 1) / 3
    if score.mean < 1 + third:
        return Band.LOW
    if score.mean > n - third:
        return Band.HIGH
    return Band.MODERATE


@dataclass(frozen=True)
class PromptTemplate:
    name: str
    body: str
    required_placeholders: frozenset[str] = frozenset()

    def __post_init__(self):
        if "<" in self.body and re.search(r"<[^<>\n]*<", self.body):
            raise ConfigError(f"template {self.name!r}: nested placeholder")
        found = self.placeholders()
        req = frozenset(self.required_placeholders) or found
        missing = req - found
        if missing:
            raise ConfigError(f"template {self.name!r}: required placeholder(s) not in body: {sorted(missing)}")
        object.__setattr__(self, "required_placeholders", req)

    def placeholders(self) -> frozenset[str]:
        return frozenset(PLACEHOLDER.findall(self.body))

    @classmethod
    def from_file(cls, path: str | Path, name: str | None = None) -> PromptTemplate:
        path = Path(path)
        try:
            body = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"template {path}: {exc.strerror}") from None
        return cls(name or path.stem, body)


def render(template: PromptTemplate, bindings: Mapping[str, str], strict: bool = False) -> str:
    """Substitute every ``<token>`` in the body.

    In strict mode a binding whose token does not occur in the template is
    an error as well.
    """
    missing = [t for t in sorted(template.placeholders()) if t not in bindings]
    if missing:
        raise ConfigError(f"unbound placeholder: {missing[0]}")
    if strict:
        unknown = sorted(set(bindings) - template.placeholders())
        if unknown:
            raise ConfigError(f"unknown placeholder: {unknown[0]}")
    return PLACEHOLDER.sub(lambda m: str(bindings[m.group(1)]), template.body)


@dataclass(frozen=True)
class NarrativeLibrary:
    entries: Mapping[tuple[str, Band, str], str] = field(default_factory=dict)

    def get(self, construct_id: str, band: Band, domain: str) -> str:
        try:
            return self.entries[(construct_id, band, domain)]
        except KeyError:
            raise DataError(f"narrative library has no entry for ({construct_id}, {band.label}, {domain})") from None

    @property
    def domains(self) -> set[str]:
        return {key[2] for key in self.entries}

    def check_total(self, schema: SurveySchema, domains) -> None:
        for c in schema.constructs:
            for band in Band:
                for domain in domains:
                    self.get(c.id, band, domain)


def load_narratives(path: str | Path) -> NarrativeLibrary:
    """YAML of the shape ``{construct_id: {Low|Moderate|High: {domain: sentence}}}``."""
    doc = strip_lines(load_yaml(path))
    entries = {}
    for cid, bands in doc.items():
        for band_name, by_domain in (bands or {}).items():
            try:
                band = Band[str(band_name).upper()]
            except KeyError:
                raise DataError(f"{path}: unknown band {band_name!r} under {cid!r}") from None
            for domain, sentence in (by_domain or {}).items():
                entries[(str(cid), band, str(domain))] = str(sentence).strip()
    return NarrativeLibrary(entries)


def construct_bands(profile: RespondentProfile, schema: SurveySchema) -> dict[str, Band]:
    return {c.id: band_of(construct_mean(profile, c)) for c in schema.constructs}


def _demographic_bindings(profile: RespondentProfile, schema: SurveySchema) -> dict[str, str]:
    bindings = {d.id: str(profile.demographics.get(d.id, "unknown")) for d in schema.demographics}
    lines = [f"{d.id.replace('_', ' ')}: {profile.demographics[d.id]}" for d in schema.demographics
             if d.id in profile.demographics]
    bindings[DEMOGRAPHIC_TOKEN] = "\n".join(lines)
    return bindings


def encode_categorical(profile: RespondentProfile, schema: SurveySchema, template: PromptTemplate) -> str:
    bindings = _demographic_bindings(profile, schema)
    lines = []
    for c in schema.constructs:
        label = band_of(construct_mean(profile, c)).name
        bindings[c.id] = label
        lines.append(f"{c.name}: {label}")
    bindings[PROFILE_TOKEN] = "\n".join(lines)
    return render(template, bindings)


def encode_contextualized(
    profile: RespondentProfile,
    schema: SurveySchema,
    lib: NarrativeLibrary,
    domain: str,
    template: PromptTemplate,
) -> str:
    bindings = _demographic_bindings(profile, schema)
    lines = []
    for c in schema.constructs:
        sentence = lib.get(c.id, band_of(construct_mean(profile, c)), domain)
        bindings[c.id] = sentence
        lines.append(f"- {sentence}")
    bindings[PROFILE_TOKEN] = "\n".join(lines)
    return render(template, bindings)


# --- bundled defaults ------------------------------------------------------

TEMPLATE_NAMES = (
    "categorical_embodiment",
    "contextualized_embodiment",
    "replication_item",
    "exposure",
    "response",
    "self_check",
    "revision",
    "format_reminder",
)


def data_path(name: str) -> Path:
    return Path(str(resources.files("sentisim") / "data" / name))


@dataclass(frozen=True)
class TemplateSet:
    categorical_embodiment: PromptTemplate
    contextualized_embodiment: PromptTemplate
    replication_item: PromptTemplate
    exposure: PromptTemplate
    response: PromptTemplate
    self_check: PromptTemplate
    revision: PromptTemplate
    format_reminder: PromptTemplate

    def embodiment(self, encoding: str) -> PromptTemplate:
        if encoding == "categorical":
            return self.categorical_embodiment
        if encoding == "contextualized":
            return self.contextualized_embodiment
        raise ConfigError(f"unknown encoding {encoding!r}")


def load_templates(directory: str | Path | None = None, overrides: Mapping[str, str | Path] | None = None) -> TemplateSet:
    """Load ``<name>.txt`` for every template name from ``directory`` (default: bundled)."""
    base = Path(directory) if directory else data_path("templates")
    overrides = dict(overrides or {})
    loaded = {}
    for name in TEMPLATE_NAMES:
        path = Path(overrides[name]) if name in overrides else base / f"{name}.txt"
        if not path.exists():
            raise ConfigError(f"missing template {name!r} ({path})")
        loaded[name] = PromptTemplate.from_file(path, name)
    return TemplateSet(**loaded)
