"""Staged pipeline orchestration over a working directory.

Stages run in a fixed order (ingest, filter, mine, merge, reassign,
classify, analyze, agree, export), write their artifacts atomically
(temp + rename), and stamp themselves with a content hash of their inputs;
re-running a stage with unchanged inputs is a no-op. One pipeline run per
working directory, enforced with a lock file.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .agreement import build_agreement_report, load_labeled_instances
from .analysis import (
    Distribution,
    DimensionSpec,
    cross_distribution,
    dimension_spec,
    distribution_from_records,
    divergence_top_n,
    group_distribution,
    rollup_categories,
    similarity_matrix,
)
from .annotate import classify_corpus, filter_relevance, reassign_corpus
from .corpus import CorpusStore, DatasetDescriptor
from .errors import ConfigError, PrerequisiteError, TaxalignError
from .gateway import GatewayConfig, ModelGateway
from .merging import MergeEngine
from .mining import TopicEntry, mine_topics
from .taxonomy import QuestionTaxonomy, TopicTaxonomy

log = logging.getLogger(__name__)

STAGES = (
    "ingest",
    "filter",
    "mine",
    "merge",
    "reassign",
    "classify",
    "analyze",
    "agree",
    "export",
)

BUNDLE_SCHEMA_VERSION = 1


def write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + f".tmp-{os.getpid()}")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def dump_json(path: Path, obj) -> None:
    write_atomic(path, json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=False) + "\n")


def digest_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def digest_file(path: Path) -> str:
    return digest_bytes(path.read_bytes())


def digest_obj(obj) -> str:
    return digest_bytes(json.dumps(obj, sort_keys=True, ensure_ascii=False).encode("utf-8"))


def dataset_distribution(
    store: CorpusStore,
    dataset_id: str,
    spec: DimensionSpec,
    scheme: str,
) -> Distribution:
    """Distribution of one dataset's stored annotations over a dimension."""
    key = {"topic": "topics", "intent": "intents", "form": "forms"}[spec.name]
    records = [
        list(s.annotations[key])
        for s in store.samples(dataset_id)
        if s.annotations and s.annotations.get(key)
    ]
    return distribution_from_records(records, spec, scheme)


class WorkdirLock:
    """Single-writer guard: one pipeline run per working directory."""

    def __init__(self, workdir: Path):
        self.path = workdir / ".lock"

    def __enter__(self):
        self.path.parent.mkdir(parents=True, exist_ok=True)
        try:
            fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise TaxalignError(
                f"working directory is locked by another run ({self.path}); "
                "remove the lock file if that run is dead"
            ) from None
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        return self

    def __exit__(self, *exc):
        try:
            self.path.unlink()
        except FileNotFoundError:
            pass
        return False


@dataclass
class MergeSetting:
    """One replication of the merge run; the engine itself is
    setting-agnostic, so replications differ only in configuration."""

    setting_id: str
    batch: int = 10
    theta_mean: float = 0.3
    theta_max: float = 0.5
    embed_input: str = "label+explanation"
    judge_model: Optional[str] = None
    embedder_model: Optional[str] = None

    @classmethod
    def from_dict(cls, d: dict, default_id: str) -> "MergeSetting":
        setting = cls(
            setting_id=str(d.get("id", default_id)),
            batch=int(d.get("batch_size", 10)),
            theta_mean=float(d.get("theta_mean", 0.3)),
            theta_max=float(d.get("theta_max", 0.5)),
            embed_input=d.get("embed_input", "label+explanation"),
            judge_model=d.get("judge_model"),
            embedder_model=d.get("embedder_model"),
        )
        if setting.embed_input not in ("label", "label+explanation"):
            raise ConfigError(f"bad embed_input {setting.embed_input!r}")
        return setting

    def to_digest_dict(self) -> dict:
        return {
            "id": self.setting_id,
            "batch": self.batch,
            "theta_mean": self.theta_mean,
            "theta_max": self.theta_max,
            "embed_input": self.embed_input,
            "judge_model": self.judge_model,
            "embedder_model": self.embedder_model,
        }


@dataclass
class DatasetSpec:
    dataset_id: str
    display_name: str
    category: str
    path: str
    format: str
    filter_relevance: bool = False
    mine: bool = True
    fixed_intents: Optional[list[str]] = None
    fixed_forms: Optional[list[str]] = None

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetSpec":
        try:
            return cls(
                dataset_id=d["dataset_id"],
                display_name=d.get("display_name", d["dataset_id"]),
                category=d["category"],
                path=d["path"],
                format=d["format"],
                filter_relevance=bool(d.get("filter_relevance", False)),
                mine=bool(d.get("mine", True)),
                fixed_intents=d.get("fixed_intents"),
                fixed_forms=d.get("fixed_forms"),
            )
        except KeyError as exc:
            raise ConfigError(f"dataset spec missing field {exc}") from None


class PipelineConfig:
    def __init__(self, raw: dict, config_dir: Path, config_digest: str):
        self.raw = raw
        self.config_dir = config_dir
        self.config_digest = config_digest
        try:
            self.subject = raw.get("subject", "Climate Change")
            self.n = int(raw.get("n", 4))
            self.m = int(raw.get("m", 20))
            self.seed = int(raw.get("seed", 0))
            self.datasets = [DatasetSpec.from_dict(d) for d in raw.get("datasets", [])]
            gw = dict(raw.get("gateway", {}))
            gw.setdefault("subject", self.subject)
            gw.setdefault("n", self.n)
            gw.setdefault("m", self.m)
            self.gateway_config = GatewayConfig.from_dict(gw, base_dir=config_dir)
            merge = raw.get("merge", {})
            settings_raw = merge.get("settings")
            if settings_raw:
                self.merge_settings = [
                    MergeSetting.from_dict(s, default_id=f"s{i + 1}")
                    for i, s in enumerate(settings_raw)
                ]
            else:
                self.merge_settings = [MergeSetting.from_dict(merge, default_id="default")]
            ids = [s.setting_id for s in self.merge_settings]
            if len(ids) != len(set(ids)):
                raise ConfigError("duplicate merge setting ids")
            self.merge_locked_labels = [s.casefold() for s in merge.get("locked_labels", [])]
            tax = raw.get("taxonomy", {})
            self.topic_taxonomy_path = self.resolve_path(tax.get("topics"))
            self.question_taxonomy_path = self.resolve_path(tax.get("questions"))
            analysis = raw.get("analysis", {})
            self.dimensions = list(analysis.get("dimensions", ["topic", "intent", "form"]))
            self.schemes = list(analysis.get("schemes", ["ranked", "per_sample", "label_count"]))
            self.include_others = [bool(x) for x in analysis.get("include_others", [False, True])]
            self.groups = {str(k): list(v) for k, v in analysis.get("groups", {}).items()}
            self.divergence_pairs = analysis.get("divergence_pairs", "all")
            self.divergence_top_n = int(analysis.get("divergence_top_n", 10))
            self.cross = [tuple(p) for p in analysis.get("cross", [])]
            self.agreement = raw.get("agreement")
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad config value: {exc}") from exc
        self._validate()

    def resolve_path(self, p: Optional[str]) -> Optional[str]:
        if p is None:
            return None
        path = Path(p)
        if not path.is_absolute():
            path = self.config_dir / path
        return str(path)

    def dataset_path(self, spec: DatasetSpec) -> Path:
        path = Path(spec.path)
        if not path.is_absolute():
            path = self.config_dir / path
        return path

    @property
    def primary_merge(self) -> MergeSetting:
        return self.merge_settings[0]

    def _validate(self) -> None:
        ids = [d.dataset_id for d in self.datasets]
        if len(ids) != len(set(ids)):
            raise ConfigError("duplicate dataset_id in config")
        for name, members in self.groups.items():
            if not members:
                raise ConfigError(f"group {name!r} has no members")
            for member in members:
                if member not in ids:
                    raise ConfigError(f"group {name!r} references unknown dataset {member!r}")
            if name in ids:
                raise ConfigError(f"group name {name!r} collides with a dataset id")
        for dim in self.dimensions:
            if dim not in ("topic", "intent", "form"):
                raise ConfigError(f"unknown analysis dimension {dim!r}")
        for pair in self.cross:
            if len(pair) != 2 or any(d not in ("topic", "intent", "form") for d in pair):
                raise ConfigError(f"bad cross pair {pair!r}")

    @classmethod
    def load(cls, path: str | Path) -> "PipelineConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        data = path.read_bytes()
        try:
            raw = json.loads(data.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
        return cls(raw, config_dir=path.parent.resolve(), config_digest=digest_bytes(data))


class Pipeline:
    def __init__(self, config: PipelineConfig, workdir: str | Path, backend=None):
        self.config = config
        self.workdir = Path(workdir)
        self.workdir.mkdir(parents=True, exist_ok=True)
        self.store = CorpusStore(self.workdir / "corpus")
        self._backend = backend
        self._gateway: Optional[ModelGateway] = None

    # -- infrastructure -------------------------------------------------

    @property
    def gateway(self) -> ModelGateway:
        if self._gateway is None:
            cfg = self.config.gateway_config
            if cfg.cache_path is None:
                cfg.cache_path = str(self.workdir / "cache" / "completions.jsonl")
            self._gateway = ModelGateway(cfg, backend=self._backend)
        return self._gateway

    def stamp_path(self, stage: str) -> Path:
        return self.workdir / "stamps" / f"{stage}.json"

    def read_stamp(self, stage: str) -> Optional[dict]:
        path = self.stamp_path(stage)
        if not path.exists():
            return None
        return json.loads(path.read_text(encoding="utf-8"))

    def write_stamp(self, stage: str, input_digest: str, outputs: list[Path], skipped: bool = False) -> None:
        dump_json(
            self.stamp_path(stage),
            {
                "stage": stage,
                "input_digest": input_digest,
                "skipped": skipped,
                "outputs": {
                    str(p.relative_to(self.workdir)): digest_file(p) for p in outputs
                },
            },
        )

    def require_stage(self, stage: str) -> None:
        stamp = self.read_stamp(stage)
        if stamp is None:
            raise PrerequisiteError(f"stage '{stage}' required first; run it before this one")
        if stamp.get("skipped"):
            return
        for rel in stamp.get("outputs", {}):
            if not (self.workdir / rel).exists():
                raise PrerequisiteError(
                    f"stage '{stage}' output {rel} is missing; re-run '{stage}'"
                )

    _PREREQS = {
        "ingest": [],
        "filter": ["ingest"],
        "mine": ["filter"],
        "merge": ["mine"],
        "reassign": ["merge"],
        "classify": ["reassign"],
        "analyze": ["classify"],
        "agree": [],
        "export": ["analyze"],
    }

    def _transitive_prereqs(self, stage: str) -> list[str]:
        """All prerequisite stages in pipeline order, so errors name the
        earliest stage still missing."""
        needed: set[str] = set()
        frontier = list(self._PREREQS[stage])
        while frontier:
            s = frontier.pop()
            if s in needed:
                continue
            if not self._stage_enabled(s):
                frontier.extend(self._PREREQS[s])
                continue
            needed.add(s)
            frontier.extend(self._PREREQS[s])
        return [s for s in STAGES if s in needed]

    def _stage_enabled(self, stage: str) -> bool:
        if stage == "filter":
            return any(d.filter_relevance for d in self.config.datasets)
        if stage == "agree":
            return self.config.agreement is not None
        return True

    def _dataset_texts_digest(self) -> str:
        parts = []
        for spec in self.config.datasets:
            for s in self.store.samples(spec.dataset_id):
                parts.append(f"{s.sample_id}\x1f{s.text}")
        return digest_obj(parts)

    def _annotations_digest(self) -> str:
        parts = []
        for spec in self.config.datasets:
            for s in self.store.samples(spec.dataset_id):
                parts.append({"id": s.sample_id, "ann": s.annotations})
        return digest_obj(parts)

    def _fixtures_digest(self) -> str:
        cfg = self.config.gateway_config
        if cfg.fixtures_path and Path(cfg.fixtures_path).exists():
            return digest_file(Path(cfg.fixtures_path))
        return "none"

    def _gateway_digest(self) -> str:
        cfg = self.config.gateway_config
        return digest_obj(
            {
                "backend": cfg.backend,
                "models": cfg.models,
                "temperatures": cfg.temperatures,
                "effort_hints": cfg.effort_hints,
                "embedding_dim": cfg.embedding_dim,
                "embedding_model": cfg.embedding_model,
                "subject": cfg.subject,
                "n": cfg.n_words,
                "m": cfg.m_words,
                "fixtures": self._fixtures_digest(),
            }
        )

    # -- stage runner ----------------------------------------------------

    def run_stage(self, stage: str, force: bool = False, dry_run: bool = False,
                  merge_resume: bool = False) -> dict:
        if stage not in STAGES:
            raise ConfigError(f"unknown stage {stage!r}")
        started = time.monotonic()
        report: dict = {"stage": stage}

        if not self._stage_enabled(stage):
            if not dry_run:
                self.write_stamp(stage, "disabled", [], skipped=True)
            report.update(status="skipped", reason="not configured")
            return report

        for p in self._transitive_prereqs(stage):
            self.require_stage(p)

        runner = getattr(self, f"_stage_{stage}")
        input_digest = runner(probe=True)
        stamp = self.read_stamp(stage)
        if not force and stamp is not None and stamp.get("input_digest") == input_digest:
            report.update(status="no-op", input_digest=input_digest)
            return report
        if dry_run:
            report.update(status="would-run", input_digest=input_digest)
            return report

        outputs, extra = runner(probe=False, merge_resume=merge_resume)
        self.write_stamp(stage, input_digest, outputs)
        report.update(status="ok", input_digest=input_digest, **extra)
        if self._gateway is not None:
            report["cache_hit_rate"] = self.gateway.cache_hit_rate()
        report["duration_s"] = round(time.monotonic() - started, 3)
        return report

    def run_all(self, force: bool = False, dry_run: bool = False) -> list[dict]:
        with WorkdirLock(self.workdir):
            return [self.run_stage(s, force=force, dry_run=dry_run) for s in STAGES]

    # -- stages -----------------------------------------------------------

    def _stage_ingest(self, probe: bool, **kw):
        sources = []
        for spec in self.config.datasets:
            path = self.config.dataset_path(spec)
            if not path.exists():
                raise ConfigError(f"dataset file not found: {path}")
            sources.append({"spec": spec.__dict__, "digest": digest_file(path)})
        digest = digest_obj(sources)
        if probe:
            return digest
        counts = {}
        for spec in self.config.datasets:
            descriptor = DatasetDescriptor(
                dataset_id=spec.dataset_id,
                display_name=spec.display_name,
                category=spec.category,
            )
            rep = self.store.ingest_dataset(
                self.config.dataset_path(spec), spec.format, descriptor
            )
            counts[spec.dataset_id] = rep.to_dict()
        outputs = [self.store.registry_path] + [
            self.store.shard_path(d.dataset_id)
            for d in self.config.datasets
            if self.store.shard_path(d.dataset_id).exists()
        ]
        return outputs, {"ingested": counts}

    def _stage_filter(self, probe: bool, **kw):
        # keyed on the ingest stamp, not the live store: filtering mutates
        # the store, and rerunning on unchanged sources must be a no-op
        ingest_stamp = self.read_stamp("ingest") or {}
        digest = digest_obj(
            {
                "ingest": ingest_stamp.get("input_digest", "none"),
                "gateway": self._gateway_digest(),
                "filtered": [d.dataset_id for d in self.config.datasets if d.filter_relevance],
            }
        )
        if probe:
            return digest
        decisions = []
        dropped_total = 0
        for spec in self.config.datasets:
            if not spec.filter_relevance:
                continue
            dataset_decisions = [
                filter_relevance(self.gateway, sample)
                for sample in self.store.samples(spec.dataset_id)
            ]
            drop = {d.sample_id for d in dataset_decisions if not d.keep}
            dropped_total += self.store.remove_samples(spec.dataset_id, drop)
            decisions.extend(dataset_decisions)
        out = self.workdir / "filter" / "decisions.jsonl"
        write_atomic(
            out,
            "".join(json.dumps(d.to_dict(), sort_keys=True, ensure_ascii=False) + "\n" for d in decisions),
        )
        return [out, self.store.registry_path], {"decisions": len(decisions), "dropped": dropped_total}

    def _stage_mine(self, probe: bool, **kw):
        embed_input = self.config.primary_merge.embed_input
        digest = digest_obj(
            {
                "texts": self._dataset_texts_digest(),
                "gateway": self._gateway_digest(),
                "embed_input": embed_input,
                "mined": [d.dataset_id for d in self.config.datasets if d.mine],
            }
        )
        if probe:
            return digest
        samples = []
        for spec in self.config.datasets:
            if spec.mine:
                samples.extend(self.store.samples(spec.dataset_id))
        result = mine_topics(self.gateway, samples, embed_input=embed_input)
        mine_dir = self.workdir / "mine"
        assignments = mine_dir / "assignments.jsonl"
        topics = mine_dir / "topics.jsonl"
        meta = mine_dir / "meta.json"
        write_atomic(
            assignments,
            "".join(
                json.dumps(a.to_dict(), sort_keys=True, ensure_ascii=False) + "\n"
                for a in result.assignments
            ),
        )
        write_atomic(
            topics,
            "".join(
                json.dumps(t.to_dict(), sort_keys=True, ensure_ascii=False) + "\n"
                for t in result.topics
            ),
        )
        dump_json(
            meta,
            {
                "subject": self.config.subject,
                "n": self.config.n,
                "m": self.config.m,
                "models": self.config.gateway_config.models,
                "embed_input": embed_input,
                "failed": result.failed_sample_ids,
                "irrelevant": result.irrelevant_sample_ids,
                "examples": [
                    {"label": k[0], "explanation": k[1], "examples": v}
                    for k, v in sorted(result.examples.items())
                ],
            },
        )
        return [assignments, topics, meta], {
            "samples": len(samples),
            "topics": len(result.topics),
            "irrelevant": len(result.irrelevant_sample_ids),
            "failed": len(result.failed_sample_ids),
        }

    def _load_mined_topics(self) -> tuple[list[TopicEntry], dict]:
        topics_path = self.workdir / "mine" / "topics.jsonl"
        meta = json.loads((self.workdir / "mine" / "meta.json").read_text(encoding="utf-8"))
        entries = []
        with topics_path.open(encoding="utf-8") as fp:
            for line in fp:
                if line.strip():
                    entries.append(TopicEntry.from_dict(json.loads(line)))
        return entries, meta

    def _merge_gateway(self, setting: MergeSetting) -> ModelGateway:
        """Gateway for one merge setting; per-setting judge and embedder are
        configuration overrides, the engine never changes."""
        if setting.judge_model is None and setting.embedder_model is None:
            return self.gateway
        import copy

        cfg = copy.deepcopy(self.config.gateway_config)
        if setting.judge_model is not None:
            cfg.models = {**cfg.models, "topic_merging": setting.judge_model}
        if setting.embedder_model is not None:
            cfg.embedding_model = setting.embedder_model
        return ModelGateway(cfg, backend=self._backend)

    def _setting_entries(
        self, setting: MergeSetting, entries: list[TopicEntry], gateway: ModelGateway
    ) -> list[TopicEntry]:
        """Re-embed mined topics when a setting uses a different embedding
        input or embedder than the mining run did."""
        mining_input = self.config.primary_merge.embed_input
        if setting.embed_input == mining_input and setting.embedder_model is None:
            return entries
        from .mining import embed_input_text

        texts = [embed_input_text(e.label, e.explanation, setting.embed_input) for e in entries]
        vectors = gateway.embed_batch(texts)
        return [
            TopicEntry(
                label=e.label,
                explanation=e.explanation,
                count=e.count,
                embedding=v,
                locked=e.locked,
            )
            for e, v in zip(entries, vectors)
        ]

    def _stage_merge(self, probe: bool, merge_resume: bool = False, **kw):
        topics_path = self.workdir / "mine" / "topics.jsonl"
        digest = digest_obj(
            {
                "topics": digest_file(topics_path) if topics_path.exists() else "none",
                "gateway": self._gateway_digest(),
                "settings": [s.to_digest_dict() for s in self.config.merge_settings],
                "locked": self.config.merge_locked_labels,
            }
        )
        if probe:
            return digest
        entries, meta = self._load_mined_topics()
        for entry in entries:
            if entry.label.casefold() in self.config.merge_locked_labels:
                entry.locked = True
        examples = {
            (e["label"], e["explanation"]): e["examples"] for e in meta.get("examples", [])
        }

        outputs = []
        stats = {}
        for i, setting in enumerate(self.config.merge_settings):
            gateway = self._merge_gateway(setting)
            setting_entries = self._setting_entries(setting, entries, gateway)
            engine = MergeEngine(
                gateway,
                batch=setting.batch,
                theta_mean=setting.theta_mean,
                theta_max=setting.theta_max,
                state_dir=self.workdir / "merge" / f"state-{setting.setting_id}",
            )
            final_topics, tree = engine.run(
                setting_entries, examples=examples, resume=merge_resume
            )
            out_dir = (
                self.workdir / "merge"
                if i == 0
                else self.workdir / "merge" / setting.setting_id
            )
            tree_path = out_dir / "merge_tree.json"
            final_path = out_dir / "final_topics.jsonl"
            dump_json(tree_path, tree.to_dict())
            write_atomic(
                final_path,
                "".join(
                    json.dumps(t.to_dict(), sort_keys=True, ensure_ascii=False) + "\n"
                    for t in final_topics
                ),
            )
            outputs.extend([tree_path, final_path])
            stats[setting.setting_id] = {
                "initial_topics": len(setting_entries),
                "final_topics": len(final_topics),
                "rounds": len(tree.round_logs),
            }
        primary = self.config.primary_merge.setting_id
        return outputs, {"settings": stats, **stats[primary]}

    def _mine_irrelevant_ids(self) -> set[str]:
        meta_path = self.workdir / "mine" / "meta.json"
        if not meta_path.exists():
            return set()
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
        return set(meta.get("irrelevant", []))

    def _stage_reassign(self, probe: bool, **kw):
        taxonomy = TopicTaxonomy.load(self.config.topic_taxonomy_path)
        digest = digest_obj(
            {
                "texts": self._dataset_texts_digest(),
                "gateway": self._gateway_digest(),
                "taxonomy": digest_obj(taxonomy.render_prompt_block()),
                "irrelevant": sorted(self._mine_irrelevant_ids()),
            }
        )
        if probe:
            return digest
        skip = self._mine_irrelevant_ids()
        failed_all = []
        assigned = 0
        for spec in self.config.datasets:
            samples = self.store.samples(spec.dataset_id)
            updates, failed = reassign_corpus(self.gateway, samples, taxonomy, skip_ids=skip)
            self.store.update_annotations(spec.dataset_id, updates)
            failed_all.extend(failed)
            assigned += len(updates)
        meta = self.workdir / "reassign" / "meta.json"
        dump_json(meta, {"assigned": assigned, "failed": failed_all})
        outputs = [meta] + [
            self.store.shard_path(d.dataset_id)
            for d in self.config.datasets
            if self.store.shard_path(d.dataset_id).exists()
        ]
        return outputs, {"assigned": assigned, "failed": len(failed_all)}

    def _stage_classify(self, probe: bool, **kw):
        taxonomy = QuestionTaxonomy.load(self.config.question_taxonomy_path)
        digest = digest_obj(
            {
                "texts": self._dataset_texts_digest(),
                "gateway": self._gateway_digest(),
                "fixed": {
                    d.dataset_id: [d.fixed_intents, d.fixed_forms] for d in self.config.datasets
                },
                "irrelevant": sorted(self._mine_irrelevant_ids()),
            }
        )
        if probe:
            return digest
        skip = self._mine_irrelevant_ids()
        failed_all = []
        classified = 0
        for spec in self.config.datasets:
            samples = self.store.samples(spec.dataset_id)
            updates, failed = classify_corpus(
                self.gateway,
                samples,
                taxonomy,
                fixed_intents=spec.fixed_intents,
                fixed_forms=spec.fixed_forms,
                skip_ids=skip,
            )
            self.store.update_annotations(spec.dataset_id, updates)
            failed_all.extend(failed)
            classified += len(updates)
        meta = self.workdir / "classify" / "meta.json"
        dump_json(meta, {"classified": classified, "failed": failed_all})
        outputs = [meta] + [
            self.store.shard_path(d.dataset_id)
            for d in self.config.datasets
            if self.store.shard_path(d.dataset_id).exists()
        ]
        return outputs, {"classified": classified, "failed": len(failed_all)}

    # -- analysis ----------------------------------------------------------

    def _analysis_settings(self) -> dict:
        return {
            "dimensions": self.config.dimensions,
            "schemes": self.config.schemes,
            "include_others": self.config.include_others,
            "groups": self.config.groups,
            "divergence_pairs": self.config.divergence_pairs,
            "divergence_top_n": self.config.divergence_top_n,
            "cross": [list(p) for p in self.config.cross],
        }

    def _record_code_pairs(self, dataset_id: str, dim_a: str, dim_b: str):
        key_a = {"topic": "topics", "intent": "intents", "form": "forms"}[dim_a]
        key_b = {"topic": "topics", "intent": "intents", "form": "forms"}[dim_b]
        out = []
        for s in self.store.samples(dataset_id):
            ann = s.annotations or {}
            if ann.get(key_a) and ann.get(key_b):
                out.append((list(ann[key_a]), list(ann[key_b])))
        return out

    def _stage_analyze(self, probe: bool, **kw):
        digest = digest_obj(
            {
                "annotations": self._annotations_digest(),
                "settings": self._analysis_settings(),
                "registry": [d.to_dict() for d in self.store.load_registry()],
            }
        )
        if probe:
            return digest

        topic_tax = TopicTaxonomy.load(self.config.topic_taxonomy_path)
        question_tax = QuestionTaxonomy.load(self.config.question_taxonomy_path)
        registry = {d.dataset_id: d for d in self.store.load_registry()}
        dataset_ids = [d.dataset_id for d in self.config.datasets]

        dim_specs: dict[tuple[str, bool], DimensionSpec] = {}
        for dim in self.config.dimensions:
            for inc in self.config.include_others:
                dim_specs[(dim, inc)] = dimension_spec(dim, topic_tax, question_tax, inc)

        dimension_meta = []
        for (dim, inc), spec in dim_specs.items():
            names = {}
            for code in spec.codes:
                if dim == "topic":
                    names[code] = topic_tax.info(code).name
                else:
                    names[code] = question_tax.dimension(dim).info(code).name
            dimension_meta.append(
                {
                    "name": dim,
                    "include_others": inc,
                    "level": "fine",
                    "codes": list(spec.codes),
                    "names": names,
                }
            )
            dimension_meta.append(
                {
                    "name": dim,
                    "include_others": inc,
                    "level": "category",
                    "codes": list(spec.category_codes),
                    "names": {c: spec.category_names.get(c, c) for c in spec.category_codes},
                }
            )

        # fine and category distributions for every entity x variant
        dist_entries = []
        fine_index: dict[tuple, Distribution] = {}
        cat_index: dict[tuple, Distribution] = {}
        entity_kinds = [("dataset", ds) for ds in dataset_ids] + [
            ("group", g) for g in self.config.groups
        ]

        for dim in self.config.dimensions:
            for inc in self.config.include_others:
                spec = dim_specs[(dim, inc)]
                for scheme in self.config.schemes:
                    per_dataset: dict[str, Distribution] = {}
                    for ds in dataset_ids:
                        per_dataset[ds] = dataset_distribution(self.store, ds, spec, scheme)
                    per_group: dict[str, Distribution] = {}
                    for gname, members in self.config.groups.items():
                        per_group[gname] = group_distribution(
                            [per_dataset[m] for m in members],
                            [registry[m].retained_count for m in members],
                        )
                    for kind, entity in entity_kinds:
                        dist = per_dataset[entity] if kind == "dataset" else per_group[entity]
                        fine_index[(entity, dim, scheme, inc)] = dist
                        coarse = rollup_categories(dist, spec)
                        cat_index[(entity, dim, scheme, inc)] = coarse
                        for level, d in (("fine", dist), ("category", coarse)):
                            dist_entries.append(
                                {
                                    "entity": entity,
                                    "kind": kind,
                                    "dimension": dim,
                                    "scheme": scheme,
                                    "include_others": inc,
                                    "level": level,
                                    "empty": d.empty,
                                    "weights": d.as_mapping(),
                                }
                            )

        # similarity matrices over all nonempty entities
        sim_entries = []
        for (dim, inc) in dim_specs:
            for scheme in self.config.schemes:
                for level, index in (("fine", fine_index), ("category", cat_index)):
                    live = [
                        (entity, index[(entity, dim, scheme, inc)])
                        for kind, entity in entity_kinds
                        if not index[(entity, dim, scheme, inc)].empty
                    ]
                    if len(live) < 2:
                        continue
                    sim = similarity_matrix(live)
                    sim_entries.append(
                        {
                            "dimension": dim,
                            "scheme": scheme,
                            "include_others": inc,
                            "level": level,
                            **sim.to_dict(),
                        }
                    )

        # divergence reports
        entities_all = [e for _, e in entity_kinds]
        if self.config.divergence_pairs == "all":
            pairs = [
                (entities_all[i], entities_all[j])
                for i in range(len(entities_all))
                for j in range(i + 1, len(entities_all))
            ]
        else:
            pairs = [tuple(p) for p in self.config.divergence_pairs]
        div_entries = []
        for a, b in pairs:
            for dim in self.config.dimensions:
                for inc in self.config.include_others:
                    for scheme in self.config.schemes:
                        da = fine_index.get((a, dim, scheme, inc))
                        db = fine_index.get((b, dim, scheme, inc))
                        if da is None or db is None or da.empty or db.empty:
                            continue
                        top = divergence_top_n(da, db, self.config.divergence_top_n)
                        div_entries.append(
                            {
                                "a": a,
                                "b": b,
                                "dimension": dim,
                                "scheme": scheme,
                                "include_others": inc,
                                "level": "fine",
                                "top": [e.to_dict() for e in top],
                            }
                        )

        # cross-dimension joint distributions
        cross_entries = []
        for dim_a, dim_b in self.config.cross:
            for inc in self.config.include_others:
                spec_a = dim_specs.get((dim_a, inc))
                spec_b = dim_specs.get((dim_b, inc))
                if spec_a is None or spec_b is None:
                    continue
                for scheme in self.config.schemes:
                    for kind, entity in entity_kinds:
                        members = (
                            [entity] if kind == "dataset" else self.config.groups[entity]
                        )
                        code_pairs = []
                        for m in members:
                            code_pairs.extend(self._record_code_pairs(m, dim_a, dim_b))
                        cross = cross_distribution(code_pairs, spec_a, spec_b, scheme)
                        if cross.empty:
                            continue
                        cross_entries.append(
                            {"entity": entity, "kind": kind, **cross.to_dict()}
                        )

        analysis_dir = self.workdir / "analysis"
        outputs = []
        for name, payload in (
            ("distributions.json", {"dimensions": dimension_meta, "entries": dist_entries}),
            ("similarity.json", {"entries": sim_entries}),
            ("divergence.json", {"entries": div_entries}),
            ("cross.json", {"entries": cross_entries}),
        ):
            if name == "cross.json" and not self.config.cross:
                continue
            path = analysis_dir / name
            dump_json(path, payload)
            outputs.append(path)
        return outputs, {
            "distributions": len(dist_entries),
            "similarities": len(sim_entries),
            "divergences": len(div_entries),
            "crosses": len(cross_entries),
        }

    def _stage_agree(self, probe: bool, **kw):
        spec = self.config.agreement or {}
        file_a = self.config.resolve_path(spec.get("file_a"))
        file_b = self.config.resolve_path(spec.get("file_b"))
        universe_path = self.config.resolve_path(spec.get("universe"))
        if not file_a or not file_b or not universe_path:
            raise ConfigError("agreement config needs file_a, file_b, and universe")
        for p in (file_a, file_b, universe_path):
            if not Path(p).exists():
                raise ConfigError(f"agreement input not found: {p}")
        rounds = int(spec.get("rounds", 1000))
        level = float(spec.get("level", 0.95))
        digest = digest_obj(
            {
                "a": digest_file(Path(file_a)),
                "b": digest_file(Path(file_b)),
                "universe": digest_file(Path(universe_path)),
                "rounds": rounds,
                "level": level,
                "seed": self.config.seed,
            }
        )
        if probe:
            return digest
        universe = json.loads(Path(universe_path).read_text(encoding="utf-8"))
        instances = load_labeled_instances(file_a, file_b, dimension=spec.get("dimension"))
        report = build_agreement_report(
            instances, universe, rounds=rounds, level=level, seed=self.config.seed
        )
        payload = report.to_dict()
        payload["metric_note"] = (
            "bootstrap resamples instances; intervals are percentile over the "
            "named metric"
        )
        out = self.workdir / "agreement" / "agreement.json"
        dump_json(out, payload)
        return [out], {"instances": report.instance_count}

    def _stage_export(self, probe: bool, **kw):
        analysis_dir = self.workdir / "analysis"
        candidates = {
            "distributions": analysis_dir / "distributions.json",
            "similarity": analysis_dir / "similarity.json",
            "divergence": analysis_dir / "divergence.json",
            "cross": analysis_dir / "cross.json",
            "merge_tree": self.workdir / "merge" / "merge_tree.json",
            "agreement": self.workdir / "agreement" / "agreement.json",
        }
        digest = digest_obj(
            {
                name: (digest_file(p) if p.exists() else "absent")
                for name, p in candidates.items()
            }
        )
        if probe:
            return digest
        required = ("distributions", "similarity", "divergence")
        for name in required:
            if not candidates[name].exists():
                raise PrerequisiteError(f"analysis artifact {name} missing; run 'analyze'")
        bundle_dir = self.workdir / "bundle"
        bundle_dir.mkdir(parents=True, exist_ok=True)
        artifacts = {}
        outputs = []
        for name, src in candidates.items():
            if not src.exists():
                continue
            dest = bundle_dir / f"{name}.json"
            write_atomic(dest, src.read_text(encoding="utf-8"))
            artifacts[name] = dest.name
            outputs.append(dest)
        registry = self.store.load_registry()
        by_id = {d.dataset_id: d for d in registry}
        entities = [
            {
                "id": ds.dataset_id,
                "kind": "dataset",
                "display_name": ds.display_name,
                "category": ds.category,
                "retained_count": by_id[ds.dataset_id].retained_count
                if ds.dataset_id in by_id
                else 0,
            }
            for ds in self.config.datasets
        ] + [
            {
                "id": gname,
                "kind": "group",
                "display_name": gname,
                "members": members,
                "retained_count": sum(
                    by_id[m].retained_count for m in members if m in by_id
                ),
            }
            for gname, members in self.config.groups.items()
        ]
        manifest = {
            "schema_version": BUNDLE_SCHEMA_VERSION,
            "run_id": f"run-{self.config.config_digest[:12]}",
            "config_digest": self.config.config_digest,
            "subject": self.config.subject,
            "artifacts": artifacts,
            "artifact_digests": {name: digest_file(bundle_dir / fn) for name, fn in artifacts.items()},
            "entities": entities,
            "dimensions": self.config.dimensions,
            "schemes": self.config.schemes,
            "include_others": self.config.include_others,
            "levels": ["fine", "category"],
        }
        manifest_path = bundle_dir / "manifest.json"
        dump_json(manifest_path, manifest)
        outputs.append(manifest_path)
        return outputs, {"artifacts": sorted(artifacts)}
