"""Corpus ingestion, deduplication, and flat-file persistence.

Storage layout under a root directory:

    corpus/<dataset_id>.jsonl   one sample per line
    corpus/registry.json        JSON array of dataset descriptors

Corpora at the scale this tool targets (tens of thousands of records per
dataset) fit comfortably in JSONL shards, and flat files keep every stage
diff-able.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Optional

from .errors import IngestFormatError, TaxalignError

log = logging.getLogger(__name__)

DATASET_CATEGORIES = (
    "human_to_ai_query",
    "human_to_human_question",
    "human_to_ai_guidance",
    "human_to_human_provision",
    "auxiliary",
)

_WS = re.compile(r"\s+")


def normalize_text(text: str) -> str:
    """Trim and collapse internal whitespace. This is the dedup key."""
    return _WS.sub(" ", text.strip())


def sample_id_for(dataset_id: str, text: str) -> str:
    """Deterministic id: identical (dataset_id, text) yields the same id."""
    digest = hashlib.sha256(normalize_text(text).encode("utf-8")).hexdigest()
    return f"{dataset_id}-{digest[:16]}"


@dataclass
class DatasetDescriptor:
    dataset_id: str
    display_name: str
    category: str
    retained_count: int = 0

    def __post_init__(self):
        if self.category not in DATASET_CATEGORIES:
            raise TaxalignError(
                f"unknown dataset category {self.category!r}; "
                f"expected one of {DATASET_CATEGORIES}"
            )

    def to_dict(self) -> dict:
        return {
            "dataset_id": self.dataset_id,
            "display_name": self.display_name,
            "category": self.category,
            "retained_count": self.retained_count,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetDescriptor":
        return cls(
            dataset_id=d["dataset_id"],
            display_name=d["display_name"],
            category=d["category"],
            retained_count=int(d.get("retained_count", 0)),
        )


@dataclass
class SampleRecord:
    sample_id: str
    dataset_id: str
    text: str
    source_meta: dict = field(default_factory=dict)
    annotations: Optional[dict] = None

    def to_dict(self) -> dict:
        d = {
            "sample_id": self.sample_id,
            "dataset_id": self.dataset_id,
            "text": self.text,
            "source_meta": self.source_meta,
        }
        if self.annotations is not None:
            d["annotations"] = self.annotations
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SampleRecord":
        return cls(
            sample_id=d["sample_id"],
            dataset_id=d["dataset_id"],
            text=d["text"],
            source_meta=d.get("source_meta", {}),
            annotations=d.get("annotations"),
        )


@dataclass
class Conversation:
    turns: list  # of (role, content) pairs, role in {"user", "assistant"}


class NoUserTurnError(TaxalignError):
    """Conversation contains no user turn; the sample is skipped."""


def extract_first_turn(conv: Conversation) -> str:
    """Return the content of the first user turn."""
    if not conv.turns:
        raise NoUserTurnError("empty conversation")
    for role, content in conv.turns:
        if role not in ("user", "assistant"):
            raise TaxalignError(f"unknown turn role {role!r}")
        if role == "user":
            return content
    raise NoUserTurnError("no user turn")


def deduplicate(samples: list[SampleRecord]) -> list[SampleRecord]:
    """Drop later samples sharing (dataset_id, normalized text); keep first."""
    seen: set[tuple[str, str]] = set()
    out: list[SampleRecord] = []
    for s in samples:
        key = (s.dataset_id, normalize_text(s.text))
        if key in seen:
            continue
        seen.add(key)
        out.append(s)
    return out


@dataclass
class IngestReport:
    dataset_id: str
    accepted: int = 0
    rejected: int = 0
    duplicates: int = 0

    @property
    def total_lines(self) -> int:
        return self.accepted + self.rejected + self.duplicates

    def to_dict(self) -> dict:
        return {
            "dataset_id": self.dataset_id,
            "accepted": self.accepted,
            "rejected": self.rejected,
            "duplicates": self.duplicates,
        }


def _write_atomic(path: Path, data: str) -> None:
    tmp = path.with_name(path.name + f".tmp-{os.getpid()}")
    tmp.write_text(data, encoding="utf-8")
    os.replace(tmp, path)


def _parse_line(raw: str, fmt: str) -> tuple[Optional[str], dict]:
    """Return (text, source_meta) for one JSONL line, or raise ValueError."""
    obj = json.loads(raw)
    if not isinstance(obj, dict):
        raise ValueError("line is not a JSON object")
    if fmt == "jsonl_text_field":
        text = obj.get("text")
        if not isinstance(text, str):
            raise ValueError("missing or non-string 'text' field")
        meta = {
            k: v if isinstance(v, str) else json.dumps(v, ensure_ascii=False)
            for k, v in obj.items()
            if k != "text"
        }
        return text, meta
    if fmt == "jsonl_conversation":
        turns = obj.get("turns")
        if not isinstance(turns, list) or not turns:
            raise ValueError("missing or empty 'turns' array")
        pairs = []
        for t in turns:
            if not isinstance(t, dict) or "role" not in t or "content" not in t:
                raise ValueError("turn missing role/content")
            pairs.append((t["role"], t["content"]))
        text = extract_first_turn(Conversation(pairs))
        meta = {
            k: v if isinstance(v, str) else json.dumps(v, ensure_ascii=False)
            for k, v in obj.items()
            if k != "turns"
        }
        meta["turn_count"] = str(len(pairs))
        return text, meta
    raise ValueError(f"unknown format {fmt!r}")


class CorpusStore:
    """Flat-file sample store with a dataset registry.

    Ingestion of distinct datasets may run concurrently; within one dataset
    there must be a single writer. Reads are safe with no writer.
    """

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    # -- registry -----------------------------------------------------

    @property
    def registry_path(self) -> Path:
        return self.root / "registry.json"

    def load_registry(self) -> list[DatasetDescriptor]:
        if not self.registry_path.exists():
            return []
        data = json.loads(self.registry_path.read_text(encoding="utf-8"))
        return [DatasetDescriptor.from_dict(d) for d in data]

    def save_registry(self, descriptors: Iterable[DatasetDescriptor]) -> None:
        items = list(descriptors)
        ids = [d.dataset_id for d in items]
        if len(ids) != len(set(ids)):
            raise TaxalignError("duplicate dataset_id in registry")
        _write_atomic(
            self.registry_path,
            json.dumps([d.to_dict() for d in items], indent=2, sort_keys=True) + "\n",
        )

    def descriptor(self, dataset_id: str) -> DatasetDescriptor:
        for d in self.load_registry():
            if d.dataset_id == dataset_id:
                return d
        raise TaxalignError(f"dataset {dataset_id!r} not in registry")

    def _upsert_descriptor(self, descriptor: DatasetDescriptor) -> None:
        registry = [
            d for d in self.load_registry() if d.dataset_id != descriptor.dataset_id
        ]
        registry.append(descriptor)
        registry.sort(key=lambda d: d.dataset_id)
        self.save_registry(registry)

    # -- samples ------------------------------------------------------

    def shard_path(self, dataset_id: str) -> Path:
        return self.root / f"{dataset_id}.jsonl"

    def samples(self, dataset_id: str) -> list[SampleRecord]:
        path = self.shard_path(dataset_id)
        if not path.exists():
            return []
        out = []
        with path.open(encoding="utf-8") as fp:
            for line in fp:
                line = line.strip()
                if line:
                    out.append(SampleRecord.from_dict(json.loads(line)))
        return out

    def write_samples(self, dataset_id: str, samples: list[SampleRecord]) -> None:
        data = "".join(
            json.dumps(s.to_dict(), ensure_ascii=False, sort_keys=True) + "\n"
            for s in samples
        )
        _write_atomic(self.shard_path(dataset_id), data)
        desc = self.descriptor(dataset_id)
        desc.retained_count = len(samples)
        self._upsert_descriptor(desc)

    def remove_samples(self, dataset_id: str, sample_ids: set[str]) -> int:
        """Drop the given samples (relevance filtering); returns removed count."""
        kept = [s for s in self.samples(dataset_id) if s.sample_id not in sample_ids]
        removed = self.descriptor(dataset_id).retained_count - len(kept)
        self.write_samples(dataset_id, kept)
        return removed

    def update_annotations(self, dataset_id: str, updates: dict[str, dict]) -> None:
        """Merge per-sample annotation dicts back onto the shard."""
        samples = self.samples(dataset_id)
        for s in samples:
            if s.sample_id in updates:
                merged = dict(s.annotations or {})
                merged.update(updates[s.sample_id])
                s.annotations = merged
        self.write_samples(dataset_id, samples)

    # -- ingestion ----------------------------------------------------

    def ingest_dataset(
        self,
        path: str | Path,
        fmt: str,
        descriptor: DatasetDescriptor,
        predicate: Callable[[str], bool] | None = None,
    ) -> IngestReport:
        """Ingest one JSONL file into the store.

        `predicate`, when given, is a user-supplied keep filter on the raw
        text (e.g. an interrogative-only rule); lines it rejects count as
        rejected. Aborts with IngestFormatError when more than half of the
        lines are rejected, which signals a format mismatch rather than a
        few bad lines. Re-ingesting the same file is a no-op (all lines
        count as duplicates).
        """
        path = Path(path)
        if not path.exists():
            raise TaxalignError(f"unreadable input path: {path}")
        if fmt not in ("jsonl_text_field", "jsonl_conversation"):
            raise TaxalignError(f"unknown ingest format {fmt!r}")

        report = IngestReport(dataset_id=descriptor.dataset_id)
        existing = self.samples(descriptor.dataset_id)
        seen = {normalize_text(s.text) for s in existing}
        accepted: list[SampleRecord] = []

        with path.open(encoding="utf-8") as fp:
            lines = fp.read().splitlines()

        parsed: list[tuple[Optional[str], dict]] = []
        for i, raw in enumerate(lines, start=1):
            if not raw.strip():
                report.rejected += 1
                parsed.append((None, {}))
                continue
            try:
                text, meta = _parse_line(raw, fmt)
            except (ValueError, NoUserTurnError, json.JSONDecodeError) as exc:
                log.debug("rejected line %d of %s: %s", i, path.name, exc)
                report.rejected += 1
                parsed.append((None, {}))
                continue
            if not text or not text.strip():
                report.rejected += 1
                parsed.append((None, {}))
                continue
            if predicate is not None and not predicate(text):
                report.rejected += 1
                parsed.append((None, {}))
                continue
            parsed.append((text, meta))

        if lines and report.rejected * 2 > len(lines):
            raise IngestFormatError(
                f"{report.rejected}/{len(lines)} lines of {path.name} rejected; "
                f"the file does not look like {fmt}"
            )

        for text, meta in parsed:
            if text is None:
                continue
            key = normalize_text(text)
            if key in seen:
                report.duplicates += 1
                continue
            seen.add(key)
            accepted.append(
                SampleRecord(
                    sample_id=sample_id_for(descriptor.dataset_id, text),
                    dataset_id=descriptor.dataset_id,
                    text=text,
                    source_meta=meta,
                )
            )
            report.accepted += 1

        descriptor.retained_count = len(existing) + len(accepted)
        self._upsert_descriptor(descriptor)
        if accepted:
            all_samples = existing + accepted
            self.write_samples(descriptor.dataset_id, all_samples)
        log.info(
            "ingested %s: accepted=%d rejected=%d duplicates=%d",
            descriptor.dataset_id,
            report.accepted,
            report.rejected,
            report.duplicates,
        )
        return report
