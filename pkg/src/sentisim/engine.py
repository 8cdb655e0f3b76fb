"""Agent orchestration: survey replication and scenario sentiment simulation.

Every agent conversation keeps the embodiment prompt as the system message
and puts the task in user turns. Each model call is appended to the agent's
:class:`AgentTranscript`, so prompts and completions always pair up.
"""

from __future__ import annotations

import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

from .encoders import NarrativeLibrary, TemplateSet, encode_categorical, encode_contextualized, render
from .errors import ConfigError, ParseError
from .gateway import BackendConfig, ChatRequest, Gateway
from .profiles import LikertScale, RespondentProfile, SurveySchema
from .scenarios import FramedScenario, Scenario, assign_framings, frame, topic_seed

log = logging.getLogger(__name__)

ENCODINGS = ("categorical", "contextualized")
ANSWER_LINE = re.compile(r"^\s*\**\s*(sentiment|answer|rating|response)\s*\**\s*[:\-]", re.I)
INTEGER = re.compile(r"(?<![\d.])(\d+)(?![\d.])")
VERDICT = re.compile(r"\b(yes|no)\b", re.I)
REASON = re.compile(r"^\s*\**\s*(reason|rationale|explanation)\s*\**\s*[:\-]\s*(.*)", re.I | re.S | re.M)


# --- parsing ----------------------------------------------------------------


def _label_pattern(label: str) -> re.Pattern:
    body = r"\s+".join(re.escape(part) for part in label.split())
    return re.compile(rf"(?<![A-Za-z]){body}(?![A-Za-z])", re.I)


def _labels_on(line: str, scale: LikertScale) -> list[tuple[int, int]]:
    """(position, category) for every label on the line, longest labels claimed first."""
    found = []
    masked = line
    for index in sorted(range(1, scale.n_points + 1), key=lambda i: -len(scale.labels[i - 1])):
        label = scale.labels[index - 1]
        if label.isdigit():
            continue
        for m in _label_pattern(label).finditer(masked):
            found.append((m.start(), index))
        masked = _label_pattern(label).sub(lambda m: " " * len(m.group(0)), masked)
    return sorted(found)


def parse_likert(text: str, scale: LikertScale) -> int:
    """Map a completion onto a 1-based scale category.

    Lines that look like an answer (``Sentiment:``, ``Answer:``...) are read
    first. On a line, a label match beats a bare integer; two different
    labels on the same line are rejected as ambiguous.
    """
    lines = [ln for ln in text.splitlines() if ln.strip()]
    ordered = [ln for ln in lines if ANSWER_LINE.match(ln)] + [ln for ln in lines if not ANSWER_LINE.match(ln)]
    for line in ordered:
        labels = _labels_on(line, scale)
        distinct = {idx for _, idx in labels}
        if len(distinct) > 1:
            raise ParseError(f"ambiguous label in {line.strip()!r}")
        if distinct:
            return distinct.pop()
        for m in INTEGER.finditer(line):
            value = int(m.group(1))
            if scale.contains(value):
                return value
    raise ParseError(f"no recognizable label or number in {text[:80]!r}")


def parse_verdict(text: str) -> str:
    m = VERDICT.search(text)
    return m.group(1).capitalize() if m else "Absent"


def parse_rationale(text: str) -> str:
    m = REASON.search(text)
    if m:
        return m.group(2).strip()
    lines = text.strip().splitlines()
    return "\n".join(lines[1:]).strip() if len(lines) > 1 else ""


# --- records ----------------------------------------------------------------


@dataclass(frozen=True)
class SentimentResponse:
    index: int
    label: str
    rationale: str
    self_check: str
    revision_count: int


@dataclass
class AgentTranscript:
    respondent_id: str
    encoding: str
    task: str
    trial_index: int
    system_prompt: str = ""
    prompts: list[str] = field(default_factory=list)
    raw_completions: list[str] = field(default_factory=list)
    calls: list[dict] = field(default_factory=list)
    parsed: object = None
    framing: str | None = None
    topic: str | None = None
    errors: list[str] = field(default_factory=list)

    def record(self, req: ChatRequest, resp, subject: str) -> None:
        self.prompts.append(req.messages[-1][1])
        self.raw_completions.append(resp.text)
        self.calls.append({
            "respondent_id": self.respondent_id,
            "encoding": self.encoding,
            "task": req.metadata.get("task", self.task),
            "subject": subject,
            "trial": self.trial_index,
            "framing": self.framing,
            "messages": [list(m) for m in req.messages],
            "completion": resp.text,
            "attempt_count": resp.attempt_count,
            "cached": resp.cached,
        })


@dataclass(frozen=True)
class AgentSettings:
    """Per-run knobs shared by every agent call."""

    model_id: str = "mock"
    temperature: float = 0.7
    max_tokens: int = 512
    seed: int | None = None
    max_revisions: int = 2
    reask: int = 2
    replication_domain: str = "general"

    @classmethod
    def from_backend(cls, cfg: BackendConfig, **kw) -> AgentSettings:
        return cls(model_id=cfg.model_id, temperature=cfg.temperature, max_tokens=cfg.max_tokens,
                   seed=cfg.seed, **kw)


def embody(profile, schema, encoding, templates: TemplateSet, library: NarrativeLibrary | None, domain: str) -> str:
    if encoding == "categorical":
        return encode_categorical(profile, schema, templates.categorical_embodiment)
    if encoding == "contextualized":
        if library is None:
            raise ConfigError("contextualized encoding needs a narrative library")
        return encode_contextualized(profile, schema, library, domain, templates.contextualized_embodiment)
    raise ConfigError(f"unknown encoding {encoding!r}")


def _ask(gateway, transcript, settings, messages, metadata, scale, reminder, subject, trial_index):
    """Send, parse, and re-ask with a format reminder up to ``settings.reask`` times."""
    for attempt in range(settings.reask + 1):
        req = ChatRequest(tuple(messages), settings.model_id, settings.temperature, settings.max_tokens,
                          settings.seed, trial_index, metadata)
        resp = gateway.complete(req)
        transcript.record(req, resp, subject)
        messages = messages + [("assistant", resp.text)]
        try:
            return parse_likert(resp.text, scale), resp.text, messages
        except ParseError as exc:
            transcript.errors.append(f"{subject}: {exc}")
            if attempt == settings.reask:
                raise
            messages = messages + [("user", reminder)]
    raise AssertionError("unreachable")


def _options(scale: LikertScale) -> str:
    return ", ".join(scale.labels)


# --- replication ------------------------------------------------------------


@dataclass
class ReplicationResult:
    answers: list[int | None]
    item_ids: list[str]
    transcript: AgentTranscript

    @property
    def missing(self) -> list[str]:
        return [i for i, a in zip(self.item_ids, self.answers) if a is None]


def replicate_survey(
    profile: RespondentProfile,
    schema: SurveySchema,
    encoding: str,
    templates: TemplateSet,
    gateway: Gateway,
    library: NarrativeLibrary | None = None,
    settings: AgentSettings = AgentSettings(),
    trial_index: int = 0,
) -> ReplicationResult:
    """Ask every schema item, one request per item, in schema order."""
    if not schema.item_ids:
        raise ConfigError("schema has no items to replicate")
    system = embody(profile, schema, encoding, templates, library, settings.replication_domain)
    transcript = AgentTranscript(profile.respondent_id, encoding, "replication", trial_index, system)
    answers, item_ids = [], []
    for construct in schema.constructs:
        scale = construct.scale
        scale_text = "\n".join(f"{i} = {lab}" for i, lab in enumerate(scale.labels, start=1))
        reminder = render(templates.format_reminder, {"options": f"a number from 1 to {scale.n_points}"})
        for item in construct.item_ids:
            prompt = render(templates.replication_item, {
                "item text": construct.item_texts.get(item, item),
                "scale": scale_text,
                "n_points": str(scale.n_points),
            })
            metadata = {"task": "replication", "item": item, "truth": profile.item_responses.get(item),
                        "n_points": scale.n_points, "labels": scale.labels,
                        "respondent_id": profile.respondent_id, "encoding": encoding}
            try:
                value, _, _ = _ask(gateway, transcript, settings, [("system", system), ("user", prompt)],
                                   metadata, scale, reminder, item, trial_index)
            except ParseError:
                value = None
            item_ids.append(item)
            answers.append(value)
    transcript.parsed = answers
    return ReplicationResult(answers, item_ids, transcript)


# --- sentiment --------------------------------------------------------------


def simulate_sentiment(
    profile: RespondentProfile,
    framed: FramedScenario,
    schema: SurveySchema,
    encoding: str,
    templates: TemplateSet,
    gateway: Gateway,
    max_revisions: int | None = None,
    library: NarrativeLibrary | None = None,
    settings: AgentSettings = AgentSettings(),
    trial_index: int = 0,
    transcript: AgentTranscript | None = None,
) -> SentimentResponse:
    """Expose the agent, read its sentiment, then run the bounded self-check loop.

    A "No" verdict re-issues the sentiment question with the previous answer
    and verdict in context, at most ``max_revisions`` times. The last answer
    is kept whatever the final verdict.
    """
    scale = schema.sentiment_scale
    max_revisions = settings.max_revisions if max_revisions is None else max_revisions
    system = embody(profile, schema, encoding, templates, library, framed.domain)
    if transcript is None:
        transcript = AgentTranscript(profile.respondent_id, encoding, "sentiment", trial_index, system,
                                     framing=framed.polarity.value, topic=framed.scenario_topic)
    transcript.system_prompt = system

    instructions = render(templates.response, {"sentiment options": _options(scale)})
    task = render(templates.exposure, {"scenario": framed.text}) + "\n\n" + instructions
    reminder = render(templates.format_reminder, {"options": _options(scale)})
    base_meta = {"respondent_id": profile.respondent_id, "encoding": encoding, "topic": framed.scenario_topic,
                 "framing": framed.polarity.value, "labels": scale.labels, "n_points": scale.n_points,
                 "truth": profile.ground_truth_sentiments.get(framed.scenario_topic)}
    subject = framed.scenario_topic

    messages = [("system", system), ("user", task)]
    revisions = 0
    while True:
        meta = {**base_meta, "task": "sentiment", "revision": revisions}
        index, answer, messages = _ask(gateway, transcript, settings, messages, meta, scale, reminder,
                                       subject, trial_index)
        check = render(templates.self_check, {"previous answer": answer.strip()})
        messages = messages + [("user", check)]
        req = ChatRequest(tuple(messages), settings.model_id, settings.temperature, settings.max_tokens,
                          settings.seed, trial_index, {**base_meta, "task": "self_check", "revision": revisions})
        resp = gateway.complete(req)
        transcript.record(req, resp, subject)
        verdict = parse_verdict(resp.text)
        messages = messages + [("assistant", resp.text)]
        if verdict == "Absent":
            transcript.errors.append(f"{subject}: unreadable self-check verdict")
        if verdict != "No" or revisions >= max_revisions:
            if verdict == "No":
                log.info("%s/%s: kept answer after %d revisions with a No verdict",
                         profile.respondent_id, subject, revisions)
            result = SentimentResponse(index, scale.label(index), parse_rationale(answer), verdict, revisions)
            transcript.parsed = result
            return result
        revisions += 1
        messages = messages + [("user", render(templates.revision, {
            "previous label": scale.label(index),
            "verdict": verdict,
            "response instructions": instructions,
        }))]


# --- trials -----------------------------------------------------------------


@dataclass(frozen=True)
class ResultRow:
    respondent_id: str
    encoding: str
    topic: str
    framing: str
    trial: int
    truth_label: int
    simulated_label: int
    revision_count: int = 0
    self_check: str = ""


@dataclass
class TrialSet:
    task: str
    n_trials: int
    trials: list[list[ResultRow]]
    transcripts: list[AgentTranscript]
    excluded: dict[tuple[str, str], str] = field(default_factory=dict)
    framings: dict[str, dict[str, str]] = field(default_factory=dict)

    def rows(self) -> list[ResultRow]:
        return [row for table in self.trials for row in table]


@dataclass
class Experiment:
    schema: SurveySchema
    profiles: Sequence[RespondentProfile]
    templates: TemplateSet
    backend: BackendConfig
    task: str = "replication"
    encodings: Sequence[str] = ENCODINGS
    scenarios: Sequence[Scenario] = ()
    library: NarrativeLibrary | None = None
    seed: int = 0
    max_revisions: int = 2
    reask: int = 2
    replication_domain: str = "general"
    workers: int | None = None

    def settings(self) -> AgentSettings:
        return AgentSettings.from_backend(self.backend, max_revisions=self.max_revisions, reask=self.reask,
                                          replication_domain=self.replication_domain)


def _parallel(fn, jobs, workers):
    if workers <= 1:
        return [fn(*job) for job in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda job: fn(*job), jobs))


def _worker_count(exp: Experiment) -> int:
    if exp.workers is not None:
        return max(1, exp.workers)
    # a sequential script is order-dependent, so keep it single-threaded
    if exp.backend.kind == "mock_scripted" and not callable(exp.backend.script):
        return 1
    return exp.backend.max_concurrency


def run_trials(exp: Experiment, n_trials: int, gateway: Gateway | None = None) -> TrialSet:
    """Run ``n_trials`` independent repetitions of the experiment's task.

    Trials differ only in ``trial_index``, which enters the cache key and the
    mock seeds. Any (agent, topic/item) that fails to parse in some trial or
    encoding is dropped from every trial so the tables stay aligned.
    """
    if n_trials < 1:
        raise ConfigError("n_trials must be >= 1")
    for enc in exp.encodings:
        if enc not in ENCODINGS:
            raise ConfigError(f"unknown encoding {enc!r}")
    own = gateway is None
    gateway = gateway or Gateway(exp.backend)
    try:
        if exp.task == "replication":
            return _run_replication(exp, n_trials, gateway)
        if exp.task == "sentiment":
            return _run_sentiment(exp, n_trials, gateway)
        raise ConfigError(f"unknown task {exp.task!r}")
    finally:
        if own:
            gateway.close()


def _run_replication(exp, n_trials, gateway) -> TrialSet:
    settings = exp.settings()
    jobs = [(p, enc, t) for t in range(n_trials) for enc in exp.encodings for p in exp.profiles]

    def one(profile, encoding, trial):
        return replicate_survey(profile, exp.schema, encoding, exp.templates, gateway, exp.library, settings, trial)

    results = _parallel(one, jobs, _worker_count(exp))
    excluded = {}
    for (profile, encoding, trial), res in zip(jobs, results):
        for item in res.missing:
            excluded[(profile.respondent_id, item)] = f"unparseable answer ({encoding}, trial {trial})"
        for item in exp.schema.item_ids:
            if item not in profile.item_responses:
                excluded[(profile.respondent_id, item)] = "no human response"
    tables = [[] for _ in range(n_trials)]
    for (profile, encoding, trial), res in zip(jobs, results):
        for item, answer in zip(res.item_ids, res.answers):
            if (profile.respondent_id, item) in excluded:
                continue
            tables[trial].append(ResultRow(profile.respondent_id, encoding, item, "", trial,
                                           profile.item_responses[item], answer))
    return TrialSet("replication", n_trials, tables, [r.transcript for r in results], excluded)


def _run_sentiment(exp, n_trials, gateway) -> TrialSet:
    if not exp.scenarios:
        raise ConfigError("sentiment task needs scenarios")
    settings = exp.settings()
    ids = [p.respondent_id for p in exp.profiles]
    framings = {}
    jobs = []
    for scenario in exp.scenarios:
        assignment = assign_framings(ids, topic_seed(exp.seed, scenario.topic))
        framings[scenario.topic] = {rid: pol.value for rid, pol in assignment.polarities.items()}
        for t in range(n_trials):
            for enc in exp.encodings:
                for p in exp.profiles:
                    jobs.append((p, frame(scenario, assignment[p.respondent_id]), enc, t))

    def one(profile, framed, encoding, trial):
        transcript = AgentTranscript(profile.respondent_id, encoding, "sentiment", trial,
                                     framing=framed.polarity.value, topic=framed.scenario_topic)
        try:
            result = simulate_sentiment(profile, framed, exp.schema, encoding, exp.templates, gateway,
                                        exp.max_revisions, exp.library, settings, trial, transcript)
        except ParseError:
            result = None
        return result, transcript

    results = _parallel(one, jobs, _worker_count(exp))
    excluded = {}
    for (profile, framed, encoding, trial), (res, _) in zip(jobs, results):
        key = (profile.respondent_id, framed.scenario_topic)
        if framed.scenario_topic not in profile.ground_truth_sentiments:
            excluded[key] = "no ground-truth sentiment"
        elif res is None:
            excluded[key] = f"unparseable sentiment ({encoding}, trial {trial})"
    tables = [[] for _ in range(n_trials)]
    for (profile, framed, encoding, trial), (res, _) in zip(jobs, results):
        if (profile.respondent_id, framed.scenario_topic) in excluded:
            continue
        tables[trial].append(ResultRow(
            profile.respondent_id, encoding, framed.scenario_topic, framed.polarity.value, trial,
            profile.ground_truth_sentiments[framed.scenario_topic], res.index, res.revision_count, res.self_check,
        ))
    return TrialSet("sentiment", n_trials, tables, [tr for _, tr in results], excluded, framings)
