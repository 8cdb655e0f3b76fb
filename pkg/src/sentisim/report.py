"""Experiment wiring, result tables, statistical reports and run manifests.

Each command writes into an output directory and finishes by writing
``manifest.json``, which lists every file produced with its SHA-256 digest
together with digests of all inputs. On mock backends two runs with the
same configuration produce byte-identical directories.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import statistics
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from . import __version__
from .encoders import data_path, load_narratives, load_templates
from .engine import ENCODINGS, Experiment, ResultRow, TrialSet, run_trials
from .errors import ConfigError, DataError, StatsError
from .gateway import BackendConfig, Gateway
from .metrics import aggregate_qwa, cdf_points, paired_dots, qwa_matrix, qwa_weight, scores_by_agent, trial_summary
from .population import load_frame, synthesize
from .profiles import load_respondents, load_schema, load_yaml, strip_lines, write_respondents
from .scenarios import load_scenarios
from .stats import select_and_run

RESULT_COLUMNS = (
    "respondent_id", "encoding", "topic", "framing", "trial", "truth_label", "simulated_label",
    "qwa_pair_weight", "revision_count", "self_check", "n_points",
)
BUILTIN = "builtin:"


# --- small file helpers -----------------------------------------------------


def sha256_file(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    path.write_text(buf.getvalue(), encoding="utf-8")
    return path


def write_json(path: Path, obj) -> Path:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n", encoding="utf-8")
    return path


class OutputDir:
    """Tracks files written under one directory so the manifest can list them."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.files: list[Path] = []

    def path(self, name: str) -> Path:
        p = self.root / name
        if p not in self.files:
            self.files.append(p)
        return p

    def csv(self, name, header, rows):
        return write_csv(self.path(name), header, rows)

    def json(self, name, obj):
        return write_json(self.path(name), obj)

    def text(self, name, text):
        p = self.path(name)
        p.write_text(text, encoding="utf-8")
        return p


def _timestamps(deterministic: bool) -> dict:
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    if epoch is not None or deterministic:
        stamp = datetime.fromtimestamp(int(epoch or 0), timezone.utc).isoformat()
        return {"started": stamp, "finished": stamp}
    now = datetime.now(timezone.utc).isoformat()
    return {"started": now, "finished": now}


def write_manifest(out: OutputDir, *, command: str, config: Mapping, inputs: Mapping[str, str | None],
                   seeds: Mapping[str, Any], backend: BackendConfig | None, deterministic: bool,
                   started: dict | None = None) -> Path:
    stamps = started or _timestamps(deterministic)
    if not deterministic and os.environ.get("SOURCE_DATE_EPOCH") is None:
        stamps = {**stamps, "finished": datetime.now(timezone.utc).isoformat()}
    manifest = {
        "tool": "sentisim",
        "tool_version": __version__,
        "command": command,
        "config_digest": sha256_text(json.dumps(config, sort_keys=True, default=str)),
        "config": config,
        "seeds": dict(seeds),
        "backend": None if backend is None else {"kind": backend.kind, "model_id": backend.model_id},
        "inputs": {name: (None if p is None else {"path": p, "sha256": input_digest(p)})
                   for name, p in sorted(inputs.items())},
        "timestamps": stamps,
        "outputs": {f.relative_to(out.root).as_posix(): sha256_file(f) for f in sorted(out.files)},
    }
    return write_json(out.root / "manifest.json", manifest)


def input_digest(path: str) -> str:
    p = resolve_path(path)
    if p.is_dir():
        h = hashlib.sha256()
        for f in sorted(p.iterdir()):
            if f.is_file():
                h.update(f.name.encode())
                h.update(f.read_bytes())
        return h.hexdigest()
    return sha256_file(p)


def verify_manifest(path: str | Path) -> list[str]:
    """Return the outputs whose current digest no longer matches the manifest."""
    path = Path(path)
    manifest = json.loads(path.read_text(encoding="utf-8"))
    bad = []
    for rel, digest in manifest["outputs"].items():
        f = path.parent / rel
        if not f.exists() or sha256_file(f) != digest:
            bad.append(rel)
    return bad


def resolve_path(value: str, base: Path | None = None) -> Path:
    if value.startswith(BUILTIN):
        return data_path(value[len(BUILTIN):])
    p = Path(value)
    if not p.is_absolute() and base is not None:
        p = base / p
    return p


# --- configuration ----------------------------------------------------------


@dataclass
class RunConfig:
    experiment: Experiment
    n_trials: int
    out_dir: Path
    alpha: float = 0.05
    alpha_normality: float = 0.05
    weighted_aggregate: bool = False
    raw: dict = field(default_factory=dict)
    inputs: dict = field(default_factory=dict)


CONFIG_KEYS = {
    "schema", "population", "scenarios", "narratives", "templates", "encoding", "backend", "seed",
    "n_trials", "max_revisions", "reask", "alpha", "alpha_normality", "weighted_aggregate", "out_dir",
    "replication_domain", "workers",
}


def load_config(path: str | Path, overrides: Mapping[str, Any] | None = None) -> RunConfig:
    """Read an experiment YAML; relative paths resolve against the config's directory."""
    path = Path(path)
    raw = strip_lines(load_yaml(path))
    unknown = set(raw) - CONFIG_KEYS
    if unknown:
        raise ConfigError(f"{path}: unknown config key(s) {sorted(unknown)}")
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key == "backend_kind":
            raw["backend"] = {**(raw.get("backend") or {}), "kind": value}
        else:
            raw[key] = value
    base = path.parent

    def p(key, default=None):
        value = raw.get(key, default)
        return None if value is None else str(value)

    inputs = {
        "schema": p("schema", BUILTIN + "demo_schema.yaml"),
        "population": p("population"),
        "scenarios": p("scenarios"),
        "narratives": p("narratives", BUILTIN + "narratives.yaml"),
        "templates": p("templates", BUILTIN + "templates"),
    }
    if inputs["population"] is None:
        raise ConfigError(f"{path}: config must name a population file")
    schema = load_schema(resolve_path(inputs["schema"], base))
    profiles = load_respondents(resolve_path(inputs["population"], base), schema)
    scenarios = load_scenarios(resolve_path(inputs["scenarios"], base)) if inputs["scenarios"] else []
    library = load_narratives(resolve_path(inputs["narratives"], base)) if inputs["narratives"] else None
    templates = load_templates(resolve_path(inputs["templates"], base))

    encoding = raw.get("encoding", "both")
    encodings = ENCODINGS if encoding == "both" else (encoding,)
    if any(e not in ENCODINGS for e in encodings):
        raise ConfigError(f"encoding must be categorical, contextualized or both, got {encoding!r}")

    backend_raw = dict(raw.get("backend") or {})
    if backend_raw.get("cache_dir"):
        backend_raw["cache_dir"] = str(resolve_path(str(backend_raw["cache_dir"]), base))
    try:
        backend = BackendConfig.from_mapping(backend_raw)
    except TypeError as exc:
        raise ConfigError(f"{path}: bad backend section ({exc})") from None

    exp = Experiment(
        schema=schema, profiles=profiles, templates=templates, backend=backend, encodings=encodings,
        scenarios=scenarios, library=library, seed=int(raw.get("seed", 0)),
        max_revisions=int(raw.get("max_revisions", 2)), reask=int(raw.get("reask", 2)),
        replication_domain=str(raw.get("replication_domain", "general")), workers=raw.get("workers"),
    )
    out_dir = resolve_path(str(raw.get("out_dir", "out")), base)
    resolved_inputs = {k: (None if v is None else str(resolve_path(v, base)) if not v.startswith(BUILTIN) else v)
                       for k, v in inputs.items()}
    digest_view = {k: v for k, v in raw.items() if k != "out_dir"}
    digest_view["inputs"] = {k: (None if v is None else input_digest(v)) for k, v in resolved_inputs.items()}
    return RunConfig(exp, int(raw.get("n_trials", 1)), out_dir, float(raw.get("alpha", 0.05)),
                     float(raw.get("alpha_normality", 0.05)), bool(raw.get("weighted_aggregate", False)),
                     digest_view, resolved_inputs)


# --- shared analysis ----------------------------------------------------------


def result_rows(ts: TrialSet, n_points: int) -> list[list]:
    return [
        [r.respondent_id, r.encoding, r.topic, r.framing, r.trial, r.truth_label, r.simulated_label,
         qwa_weight(r.truth_label, r.simulated_label, n_points), r.revision_count, r.self_check, n_points]
        for r in ts.rows()
    ]


def write_transcripts(out: OutputDir, ts: TrialSet) -> None:
    lines = [json.dumps(call, sort_keys=True, ensure_ascii=False) for tr in ts.transcripts for call in tr.calls]
    out.text("transcripts.jsonl", "\n".join(lines) + ("\n" if lines else ""))


def compare_paired(x: Sequence[float], y: Sequence[float], alpha: float, alpha_normality: float) -> dict:
    """Gate-then-test comparison with the degenerate cases spelled out instead of raised."""
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    if x.size < 3:
        return {"status": "skipped", "reason": f"need at least 3 pairs, got {x.size}"}
    diff = x - y
    if np.all(diff == 0):
        return {"status": "no difference", "n": int(x.size), "p_value": 1.0, "mean_difference": 0.0}
    try:
        report = select_and_run(x, y, alpha_normality, alpha)
    except StatsError as exc:
        return {"status": "skipped", "reason": str(exc), "n": int(x.size),
                "mean_difference": float(np.mean(diff))}
    return {"status": "tested", **report.to_dict(), "text": report.to_text()}


def _comparison_text(title: str, result: dict) -> str:
    head = f"[{title}]\n"
    if result["status"] == "tested":
        return head + result["text"]
    if result["status"] == "no difference":
        return head + f"status: no difference (all {result['n']} paired differences are zero), p_value: 1\n"
    return head + f"status: skipped ({result['reason']})\n"


def _agent_mean_scores(rows: Sequence[ResultRow], n_points: int) -> dict[str, float]:
    """Per-agent QWA for each trial, averaged over trials."""
    per_trial: dict[str, list[float]] = {}
    trials = sorted({r.trial for r in rows})
    for t in trials:
        for rid, s in scores_by_agent([r for r in rows if r.trial == t], n_points).items():
            per_trial.setdefault(rid, []).append(s.score)
    return {rid: statistics.fmean(v) for rid, v in sorted(per_trial.items())}


def _aggregate(rows, n_points, weights=None) -> float:
    scores = list(scores_by_agent(rows, n_points).values())
    return aggregate_qwa(scores, weights)


def _matrix_rows(n_points: int):
    m = qwa_matrix(n_points)
    return [[i + 1] + [float(v) for v in m[i]] for i in range(n_points)]


def _encoding_outputs(out: OutputDir, rows: Sequence[ResultRow], encodings, n_points, cfg_alpha, cfg_alpha_norm):
    """Agent scores, CDF tables, paired dots and the encoding comparison."""
    agent_scores = {enc: _agent_mean_scores([r for r in rows if r.encoding == enc], n_points) for enc in encodings}
    out.csv("agent_scores.csv", ["respondent_id", "encoding", "qwa"],
            [[rid, enc, s] for enc in encodings for rid, s in agent_scores[enc].items()])
    for enc in encodings:
        if agent_scores[enc]:
            out.csv(f"cdf_{enc}.csv", ["qwa", "cumulative_fraction"], cdf_points(agent_scores[enc].values()))
    comparison = None
    if set(ENCODINGS) <= set(encodings):
        cat, ctx = agent_scores["categorical"], agent_scores["contextualized"]
        dots = paired_dots(cat, ctx)
        out.csv("paired_dots.csv", ["respondent_id", "categorical", "contextualized"], dots)
        comparison = compare_paired([d[2] for d in dots], [d[1] for d in dots], cfg_alpha, cfg_alpha_norm)
        out.json("encoding_comparison.json", comparison)
    return agent_scores, comparison


# --- commands ---------------------------------------------------------------


def cmd_synth(frame_file: str, schema_file: str, seed: int, out: str) -> Path:
    """Write a synthetic population CSV plus ``<out>.manifest.json``."""
    frame = load_frame(resolve_path(frame_file))
    schema = load_schema(resolve_path(schema_file))
    pop = synthesize(frame, schema, seed)
    out_path = Path(out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    write_respondents(out_path, pop.profiles, schema)
    selection = out_path.with_name(out_path.stem + ".selection.csv")
    write_csv(selection, ["respondent_id", "region_id", "barangay_id", "household", "gender", "stage_probs",
                          "design_weight", "survey_weight"],
              [[r.respondent_id, r.region_id, r.barangay_id, r.household, r.gender,
                ";".join(repr(float(p)) for p in r.stage_probs), float(r.design_weight), w]
               for r, w in zip(pop.records, pop.weights)])
    manifest = {
        "tool": "sentisim",
        "tool_version": __version__,
        "command": "synth",
        "seeds": {"population": seed},
        "inputs": {"frame": {"path": frame_file, "sha256": input_digest(frame_file)},
                   "schema": {"path": schema_file, "sha256": input_digest(schema_file)}},
        "timestamps": _timestamps(True),
        "outputs": {out_path.name: sha256_file(out_path), selection.name: sha256_file(selection)},
        "n_respondents": len(pop.profiles),
    }
    write_json(out_path.with_name(out_path.name + ".manifest.json"), manifest)
    return out_path


def _deterministic(cfg: RunConfig) -> bool:
    return cfg.experiment.backend.kind != "http"


def cmd_replicate(cfg: RunConfig, gateway: Gateway | None = None) -> dict:
    exp = cfg.experiment
    exp.task = "replication"
    started = _timestamps(_deterministic(cfg))
    ts = run_trials(exp, cfg.n_trials, gateway)
    n_points = exp.schema.item_scale.n_points
    out = OutputDir(cfg.out_dir)
    rows = ts.rows()
    weights = ({p.respondent_id: p.survey_weight for p in exp.profiles} if cfg.weighted_aggregate else None)

    out.csv("results.csv", RESULT_COLUMNS, result_rows(ts, n_points))
    summary: dict[str, Any] = {"task": "replication", "n_trials": cfg.n_trials, "n_points": n_points,
                               "n_agents": len(exp.profiles), "encodings": {}}
    for enc in exp.encodings:
        enc_rows = [r for r in rows if r.encoding == enc]
        if not enc_rows:
            summary["encodings"][enc] = {"notice": "no scorable rows"}
            continue
        per_trial = [_aggregate([r for r in enc_rows if r.trial == t], n_points, weights) for t in range(cfg.n_trials)]
        ts_sum = trial_summary(per_trial)
        agent_scores = list(_agent_mean_scores(enc_rows, n_points).values())
        summary["encodings"][enc] = {
            "aggregate_qwa_per_trial": per_trial,
            "mean": ts_sum.mean,
            "trial_sd": ts_sum.sd,
            "agent_sd": statistics.stdev(agent_scores) * 100 if len(agent_scores) > 1 else None,
            "n_agents_scored": len(agent_scores),
        }
    _, comparison = _encoding_outputs(out, rows, exp.encodings, n_points, cfg.alpha, cfg.alpha_normality)
    summary["comparison"] = comparison
    summary["excluded"] = [{"respondent_id": k[0], "item": k[1], "reason": v} for k, v in sorted(ts.excluded.items())]
    out.csv(f"qwa_matrix_{n_points}.csv", ["truth"] + [str(j) for j in range(1, n_points + 1)], _matrix_rows(n_points))
    out.json("summary.json", summary)
    out.text("report.txt", _replication_text(summary))
    write_transcripts(out, ts)
    write_manifest(out, command="replicate", config=cfg.raw, inputs=cfg.inputs,
                   seeds={"master": exp.seed, "mock": exp.backend.mock_seed}, backend=exp.backend,
                   deterministic=_deterministic(cfg), started=started)
    return summary


def _replication_text(summary: dict) -> str:
    lines = [f"Survey replication: {summary['n_agents']} agents, {summary['n_trials']} trial(s), "
             f"{summary['n_points']}-point items", ""]
    for enc, s in summary["encodings"].items():
        if "mean" not in s:
            lines.append(f"{enc:>15}: {s['notice']}")
            continue
        agent_sd = "n/a" if s["agent_sd"] is None else f"{s['agent_sd']:.1f}%"
        lines.append(f"{enc:>15}: QWA {s['mean']:.1f}% ± {s['trial_sd']:.2f}% over trials (agent SD {agent_sd})")
    lines.append("")
    if summary["comparison"] is None:
        lines.append("encoding comparison: skipped (needs both encodings)")
    else:
        lines.append(_comparison_text("contextualized vs categorical", summary["comparison"]).rstrip())
    if summary["excluded"]:
        lines.append(f"\nexcluded (agent, item) pairs: {len(summary['excluded'])}")
    return "\n".join(lines) + "\n"


def cmd_simulate(cfg: RunConfig, gateway: Gateway | None = None) -> dict:
    exp = cfg.experiment
    exp.task = "sentiment"
    notices = []
    kept = []
    for sc in exp.scenarios:
        if any(sc.topic in p.ground_truth_sentiments for p in exp.profiles):
            kept.append(sc)
        else:
            notices.append(f"topic {sc.topic!r} skipped: no ground-truth sentiments")
    if not kept:
        raise DataError("no scenario topic has ground-truth sentiments")
    exp.scenarios = kept
    started = _timestamps(_deterministic(cfg))
    ts = run_trials(exp, cfg.n_trials, gateway)
    n_points = exp.schema.sentiment_scale.n_points
    rows = ts.rows()
    out = OutputDir(cfg.out_dir)
    weights = ({p.respondent_id: p.survey_weight for p in exp.profiles} if cfg.weighted_aggregate else None)

    out.csv("results.csv", RESULT_COLUMNS, result_rows(ts, n_points))
    table = []
    for sc in kept:
        for enc in exp.encodings:
            sel = [r for r in rows if r.topic == sc.topic and r.encoding == enc]
            if not sel:
                notices.append(f"topic {sc.topic!r} ({enc}): no scorable agents")
                continue
            per_trial = [_aggregate([r for r in sel if r.trial == t], n_points, weights) for t in range(cfg.n_trials)]
            s = trial_summary(per_trial)
            table.append({"topic": sc.topic, "encoding": enc, "mean": s.mean, "sd": s.sd,
                          "n_trials": s.n_trials, "per_trial": per_trial})
    out.csv("topic_summary.csv", ["topic", "encoding", "mean", "sd", "n_trials"],
            [[t["topic"], t["encoding"], t["mean"], t["sd"], t["n_trials"]] for t in table])
    out.text("topic_summary.txt", topic_table_text(table, exp.encodings))

    framing_rows, framing_tests = [], {}
    for enc in exp.encodings:
        pos_scores, neg_scores = [], []
        for sc in kept:
            sel = [r for r in rows if r.topic == sc.topic and r.encoding == enc]
            pos = [r for r in sel if r.framing == "Positive"]
            neg = [r for r in sel if r.framing == "Negative"]
            if not pos or not neg:
                notices.append(f"topic {sc.topic!r} ({enc}): framing comparison needs both polarities")
                continue
            p, n = _aggregate(pos, n_points), _aggregate(neg, n_points)
            framing_rows.append([sc.topic, enc, p, n, p - n])
            pos_scores.append(p)
            neg_scores.append(n)
        framing_tests[enc] = compare_paired(pos_scores, neg_scores, cfg.alpha, cfg.alpha_normality)
    out.csv("framing.csv", ["topic", "encoding", "positive_qwa", "negative_qwa", "difference"], framing_rows)
    out.json("framing_comparison.json", framing_tests)

    _, comparison = _encoding_outputs(out, rows, exp.encodings, n_points, cfg.alpha, cfg.alpha_normality)
    out.csv(f"qwa_matrix_{n_points}.csv", ["truth"] + [str(j) for j in range(1, n_points + 1)], _matrix_rows(n_points))
    summary = {
        "task": "sentiment", "n_trials": cfg.n_trials, "n_points": n_points, "n_agents": len(exp.profiles),
        "table": table, "framing": framing_tests, "comparison": comparison, "notices": notices,
        "framing_counts": {t: {"Positive": list(m.values()).count("Positive"),
                               "Negative": list(m.values()).count("Negative")} for t, m in ts.framings.items()},
        "excluded": [{"respondent_id": k[0], "topic": k[1], "reason": v} for k, v in sorted(ts.excluded.items())],
    }
    out.json("summary.json", summary)
    text = topic_table_text(table, exp.encodings) + "\n"
    for enc, res in framing_tests.items():
        text += _comparison_text(f"framing, {enc}: positive vs negative", res) + "\n"
    if comparison is not None:
        text += _comparison_text("contextualized vs categorical", comparison) + "\n"
    text += "".join(f"notice: {n}\n" for n in notices)
    out.text("report.txt", text)
    write_transcripts(out, ts)
    write_manifest(out, command="simulate", config=cfg.raw, inputs=cfg.inputs,
                   seeds={"master": exp.seed, "mock": exp.backend.mock_seed}, backend=exp.backend,
                   deterministic=_deterministic(cfg), started=started)
    return summary


def topic_table_text(table: Sequence[Mapping], encodings: Sequence[str]) -> str:
    """Scenario x encoding table of mean QWA with trial SD."""
    topics = list(dict.fromkeys(t["topic"] for t in table))
    cells = {(t["topic"], t["encoding"]): t for t in table}
    header = f"{'Scenario':<24}" + "".join(f"{enc.capitalize():>26}" for enc in encodings)
    lines = [header, f"{'':<24}" + "".join(f"{'Average':>14}{'SD':>12}" for _ in encodings)]
    for topic in topics:
        line = f"{topic.replace('_', ' ').title():<24}"
        for enc in encodings:
            c = cells.get((topic, enc))
            line += f"{'-':>14}{'-':>12}" if c is None else f"{c['mean']:>13.1f}%{'± ' + format(c['sd'], '.2f') + '%':>12}"
        lines.append(line)
    return "\n".join(lines) + "\n"


# --- report -------------------------------------------------------------------


def read_results(path: str | Path) -> list[dict]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"{path}: {exc.strerror}") from None
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None:
        raise DataError(f"{path}: no rows")
    if tuple(reader.fieldnames) != RESULT_COLUMNS:
        raise DataError(f"{path}: not a results table (columns {reader.fieldnames})")
    rows = []
    for i, raw in enumerate(reader, start=2):
        try:
            rows.append({
                **raw,
                "trial": int(raw["trial"]),
                "truth_label": int(raw["truth_label"]),
                "simulated_label": int(raw["simulated_label"]),
                "qwa_pair_weight": float(raw["qwa_pair_weight"]),
                "n_points": int(raw["n_points"]),
                "revision_count": int(raw["revision_count"] or 0),
            })
        except (TypeError, ValueError):
            raise DataError(f"{path}: row {i} is malformed") from None
    if not rows:
        raise DataError(f"{path}: no rows")
    return rows


def cmd_report(results_files: Sequence[str | Path], out_dir: str | Path) -> dict:
    """Rebuild plot-data tables and a readable summary from results CSVs."""
    if not results_files:
        raise ConfigError("report needs at least one results file")
    out = OutputDir(out_dir)
    sections, summary = [], {}
    for idx, f in enumerate(results_files):
        rows = read_results(f)
        sizes = {r["n_points"] for r in rows}
        if len(sizes) != 1:
            raise DataError(f"{f}: mixed scale sizes {sorted(sizes)}")
        n_points = sizes.pop()
        tag = Path(f).parent.name or f"results{idx}"
        if len(results_files) > 1:
            tag = f"{idx}_{tag}"
        result_rows_ = [ResultRow(r["respondent_id"], r["encoding"], r["topic"], r["framing"], r["trial"],
                                  r["truth_label"], r["simulated_label"], r["revision_count"], r["self_check"])
                        for r in rows]
        encodings = [e for e in ENCODINGS if any(r.encoding == e for r in result_rows_)]
        sub = OutputDir(out.root / tag)
        agent_scores, comparison = _encoding_outputs(sub, result_rows_, encodings, n_points, 0.05, 0.05)
        sub.csv(f"qwa_matrix_{n_points}.csv", ["truth"] + [str(j) for j in range(1, n_points + 1)],
                _matrix_rows(n_points))
        trials = sorted({r.trial for r in result_rows_})
        table = []
        for topic in dict.fromkeys(r.topic for r in result_rows_) if any(r.framing for r in result_rows_) else ["*"]:
            for enc in encodings:
                sel = [r for r in result_rows_ if r.encoding == enc and (topic == "*" or r.topic == topic)]
                per_trial = [_aggregate([r for r in sel if r.trial == t], n_points) for t in trials
                             if any(r.trial == t for r in sel)]
                s = trial_summary(per_trial)
                table.append({"topic": topic, "encoding": enc, "mean": s.mean, "sd": s.sd, "n_trials": s.n_trials})
        sub.csv("topic_summary.csv", ["topic", "encoding", "mean", "sd", "n_trials"],
                [[t["topic"], t["encoding"], t["mean"], t["sd"], t["n_trials"]] for t in table])
        text = f"== {f} ({len(rows)} rows, {n_points}-point scale)\n" + topic_table_text(table, encodings)
        if comparison is not None:
            text += _comparison_text("contextualized vs categorical", comparison)
        sub.text("summary.txt", text)
        out.files.extend(sub.files)
        sections.append(text)
        summary[tag] = {"n_rows": len(rows), "n_points": n_points, "table": table,
                        "agents": {enc: len(s) for enc, s in agent_scores.items()}}
    out.text("summary.txt", "\n".join(sections))
    out.json("summary.json", summary)
    write_manifest(out, command="report", config={"results": [str(Path(f).name) for f in results_files]},
                   inputs={f"results_{i}": str(f) for i, f in enumerate(results_files)}, seeds={},
                   backend=None, deterministic=True)
    return summary
