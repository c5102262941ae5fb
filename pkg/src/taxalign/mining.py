"""Free-form topic generation and duplicate collapsing.

Produces the (label, explanation, count, embedding) records the merge engine
consumes. Labels follow the "<subject>: <related domain>" format with hard
word limits on the domain and the explanation; format violations are values,
not exceptions, so callers can repair or drop.
"""

from __future__ import annotations

import logging
import re
import string
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .corpus import SampleRecord
from .errors import AnnotationFailed, GatewayError, OutputParseError, OutputSchemaError
from .gateway import ModelGateway, normalize_embedding
from .parsing import TopicArray

log = logging.getLogger(__name__)

_WS = re.compile(r"\s+")


def _collapse_ws(s: str) -> str:
    return _WS.sub(" ", s.strip())


def word_count(s: str) -> int:
    """Whitespace tokens that still contain a letter or digit after edge
    punctuation is stripped; '&' alone is not a word."""
    count = 0
    for tok in s.split():
        core = tok.strip(string.punctuation)
        if any(ch.isalnum() for ch in core):
            count += 1
    return count


@dataclass
class LabelCheck:
    label: str
    explanation: str
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def normalize_topic_label(
    raw_label: str, raw_explanation: str, subject: str, n: int, m: int
) -> LabelCheck:
    """Whitespace-normalize and validate a label/explanation pair.

    Violations: "prefix" (label does not start with '<subject>:' or the
    domain part is empty), "word-limit" (domain longer than n words),
    "explanation-word-limit" (explanation longer than m words).
    """
    label = _collapse_ws(raw_label)
    explanation = _collapse_ws(raw_explanation)
    violations: list[str] = []

    prefix = f"{subject}:"
    if label.startswith(prefix):
        domain = label[len(prefix):].strip()
        if domain:
            label = f"{subject}: {domain}"
            if word_count(domain) > n:
                violations.append("word-limit")
        else:
            violations.append("prefix")
    else:
        violations.append("prefix")

    if word_count(explanation) > m:
        violations.append("explanation-word-limit")

    return LabelCheck(label=label, explanation=explanation, violations=violations)


def repair_label(raw_label: str, subject: str) -> Optional[str]:
    """Mechanical repair: prepend the subject prefix when it is plainly
    missing. Returns None when no safe repair exists."""
    label = _collapse_ws(raw_label)
    if label.startswith(f"{subject}:"):
        return label
    if ":" in label:
        return None
    return f"{subject}: {label}" if label else None


@dataclass(eq=False)
class TopicEntry:
    # eq=False: identity comparison; the ndarray field breaks generated __eq__
    label: str
    explanation: str
    count: int
    embedding: np.ndarray
    locked: bool = False

    def key(self) -> tuple[str, str]:
        return (_collapse_ws(self.label).casefold(), _collapse_ws(self.explanation).casefold())

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "explanation": self.explanation,
            "count": self.count,
            "embedding": [float(x) for x in self.embedding],
            "locked": self.locked,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TopicEntry":
        return cls(
            label=d["label"],
            explanation=d["explanation"],
            count=int(d["count"]),
            embedding=np.asarray(d["embedding"], dtype=np.float64),
            locked=bool(d.get("locked", False)),
        )


@dataclass
class RawTopicAssignment:
    sample_id: str
    topics: list[tuple[str, str]]
    irrelevant: bool = False

    def to_dict(self) -> dict:
        return {
            "sample_id": self.sample_id,
            "topics": [{"topic": t, "explanation": e} for t, e in self.topics],
            "irrelevant": self.irrelevant,
        }


def weighted_centroid(entries: list[TopicEntry], fallback: np.ndarray) -> np.ndarray:
    """Count-weighted mean embedding, renormalized to unit length."""
    total = sum(e.count for e in entries)
    acc = np.zeros_like(entries[0].embedding)
    for e in entries:
        acc = acc + e.count * e.embedding
    acc = acc / total
    norm = float(np.linalg.norm(acc))
    if norm < 1e-9:
        log.warning("degenerate centroid (near-antipodal embeddings); keeping fallback")
        return np.array(fallback, dtype=np.float64)
    return acc / norm


def collapse_duplicates(entries: list[TopicEntry]) -> list[TopicEntry]:
    """Merge entries with identical normalized (label, explanation).

    Counts sum; the embedding becomes the count-weighted centroid,
    renormalized, the same formula the merge step uses. First-occurrence
    order and surface forms are kept.
    """
    groups: dict[tuple[str, str], list[TopicEntry]] = {}
    order: list[tuple[str, str]] = []
    for e in entries:
        k = e.key()
        if k not in groups:
            groups[k] = []
            order.append(k)
        groups[k].append(e)

    out = []
    for k in order:
        group = groups[k]
        first = group[0]
        if len(group) == 1:
            out.append(first)
            continue
        out.append(
            TopicEntry(
                label=first.label,
                explanation=first.explanation,
                count=sum(e.count for e in group),
                embedding=weighted_centroid(group, fallback=first.embedding),
                locked=any(e.locked for e in group),
            )
        )
    return out


def generate_initial_topics(gateway: ModelGateway, sample: SampleRecord) -> RawTopicAssignment:
    """Ask the judge for 1-3 free-form topics for one sample."""
    req = gateway.request("initial_topic_generation", text=sample.text)
    try:
        parsed: TopicArray = gateway.complete_structured(req, "topic_array")
    except (OutputParseError, OutputSchemaError) as exc:
        raise AnnotationFailed(f"sample {sample.sample_id}: {exc}") from exc
    return RawTopicAssignment(
        sample_id=sample.sample_id, topics=parsed.topics, irrelevant=parsed.irrelevant
    )


@dataclass
class MiningResult:
    assignments: list[RawTopicAssignment]
    topics: list[TopicEntry]
    failed_sample_ids: list[str]
    irrelevant_sample_ids: list[str]
    examples: dict[tuple[str, str], list[str]]


def embed_input_text(label: str, explanation: str, embed_input: str) -> str:
    if embed_input == "label":
        return label
    if embed_input == "label+explanation":
        return f"{label}. {explanation}"
    raise GatewayError(f"unknown embed_input {embed_input!r}")


def mine_topics(
    gateway: ModelGateway,
    samples: list[SampleRecord],
    embed_input: str = "label+explanation",
    max_examples: int = 3,
) -> MiningResult:
    """Run initial topic generation over a corpus and collapse duplicates.

    Judge calls are independent and run concurrently up to the gateway
    bound; results are applied in sample order so the output is
    deterministic for a deterministic backend.
    """
    subject = gateway.config.subject
    n, m = gateway.config.n_words, gateway.config.m_words

    def worker(sample: SampleRecord):
        try:
            return generate_initial_topics(gateway, sample)
        except AnnotationFailed as exc:
            return exc

    if gateway.concurrency > 1 and len(samples) > 1:
        with ThreadPoolExecutor(max_workers=gateway.concurrency) as pool:
            results = list(pool.map(worker, samples))
    else:
        results = [worker(s) for s in samples]

    assignments: list[RawTopicAssignment] = []
    failed: list[str] = []
    irrelevant: list[str] = []
    occurrences: list[TopicEntry] = []
    examples: dict[tuple[str, str], list[str]] = {}
    pending_embed: dict[tuple[str, str], str] = {}

    for sample, result in zip(samples, results):
        if isinstance(result, AnnotationFailed):
            log.warning("annotation failed: %s", result)
            failed.append(sample.sample_id)
            continue
        assignments.append(result)
        if result.irrelevant:
            irrelevant.append(sample.sample_id)
            continue
        for raw_label, raw_expl in result.topics:
            check = normalize_topic_label(raw_label, raw_expl, subject, n, m)
            if "prefix" in check.violations:
                repaired = repair_label(raw_label, subject)
                if repaired is not None:
                    check = normalize_topic_label(repaired, raw_expl, subject, n, m)
            if not check.ok:
                log.warning(
                    "dropping malformed topic %r from %s: %s",
                    raw_label,
                    sample.sample_id,
                    ",".join(check.violations),
                )
                continue
            key = (check.label.casefold(), check.explanation.casefold())
            pending_embed.setdefault(
                key, embed_input_text(check.label, check.explanation, embed_input)
            )
            occurrences.append(
                TopicEntry(
                    label=check.label,
                    explanation=check.explanation,
                    count=1,
                    embedding=np.zeros(1),  # filled below
                )
            )
            bucket = examples.setdefault(key, [])
            if len(bucket) < max_examples:
                bucket.append(sample.text)

    keys = list(pending_embed.keys())
    if keys:
        vectors = gateway.embed_batch([pending_embed[k] for k in keys])
        by_key = dict(zip(keys, vectors))
        for occ in occurrences:
            occ.embedding = np.array(by_key[occ.key()], dtype=np.float64)

    collapsed = collapse_duplicates(occurrences)
    for entry in collapsed:
        entry.embedding = normalize_embedding(entry.embedding)
    return MiningResult(
        assignments=assignments,
        topics=collapsed,
        failed_sample_ids=failed,
        irrelevant_sample_ids=irrelevant,
        examples=examples,
    )
