"""Sample annotation against the fixed taxonomies.

Covers relevance filtering, topic reassignment, question-type
classification (intent + expected answer form), and the knowledge-dimension
profile derived from intent labels. Datasets whose intent or form labels
are fixed by construction never trigger a judge call for that dimension.
"""

from __future__ import annotations

import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

from .corpus import SampleRecord
from .errors import (
    AnnotationFailed,
    GatewayError,
    OutputParseError,
    OutputSchemaError,
)
from .gateway import ModelGateway
from .parsing import QuestionTypes, ReassignArray
from .taxonomy import KNOWLEDGE_DIMS, QuestionTaxonomy, TopicTaxonomy

log = logging.getLogger(__name__)

_TOPIC_CODE = re.compile(r"\b([A-F]\d+)\b")
_QTYPE_CODE = re.compile(r"\b((?:INTENT|FORM)_\d+[a-z])\b")


@dataclass
class AnnotationRecord:
    topics: list[str] = field(default_factory=list)
    intents: list[str] = field(default_factory=list)
    forms: list[str] = field(default_factory=list)
    fixed_flags: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "topics": self.topics,
            "intents": self.intents,
            "forms": self.forms,
            "fixed_flags": self.fixed_flags,
        }


def extract_topic_codes(labels: list[str]) -> list[str]:
    """First code token per label, duplicates dropped keeping first rank."""
    out: list[str] = []
    for label in labels:
        m = _TOPIC_CODE.search(label)
        if not m:
            raise ValueError(f"no topic code in {label!r}")
        if m.group(1) not in out:
            out.append(m.group(1))
    return out


def extract_qtype_codes(labels: list[str], prefix: str) -> list[str]:
    out: list[str] = []
    for label in labels:
        m = _QTYPE_CODE.search(label)
        if not m or not m.group(1).startswith(prefix):
            raise ValueError(f"no {prefix} code in {label!r}")
        if m.group(1) not in out:
            out.append(m.group(1))
    return out


def reassign_topics(
    gateway: ModelGateway, sample: SampleRecord, taxonomy: TopicTaxonomy
) -> list[str]:
    """Return 1-3 ranked topic codes; the Others code only ever alone."""

    def validate(parsed: ReassignArray) -> None:
        try:
            codes = extract_topic_codes(parsed.labels)
        except ValueError as exc:
            raise OutputSchemaError(str(exc), raw=str(parsed.labels))
        for code in codes:
            if not taxonomy.valid_code(code):
                raise OutputSchemaError(
                    f"code {code!r} is not in the taxonomy", raw=str(parsed.labels)
                )
        if taxonomy.others.code in codes and len(codes) > 1:
            raise OutputSchemaError(
                f"{taxonomy.others.code} must be returned alone", raw=str(parsed.labels)
            )

    req = gateway.request(
        "topic_reassignment",
        taxonomy=taxonomy.render_prompt_block(),
        text=sample.text,
    )
    try:
        parsed: ReassignArray = gateway.complete_structured(
            req, "reassign_array", validate=validate
        )
    except (OutputParseError, OutputSchemaError) as exc:
        raise AnnotationFailed(f"sample {sample.sample_id}: {exc}") from exc
    return extract_topic_codes(parsed.labels)


def classify_question_type(
    gateway: ModelGateway,
    sample: SampleRecord,
    taxonomy: QuestionTaxonomy,
    fixed_intents: Optional[list[str]] = None,
    fixed_forms: Optional[list[str]] = None,
) -> tuple[list[str], list[str], dict]:
    """Return (ranked intent codes, ranked form codes, fixed_flags).

    A dimension with dataset-fixed labels is taken from configuration
    without consulting the judge; when both are fixed no call is made.
    """
    flags = {"intent": fixed_intents is not None, "form": fixed_forms is not None}
    if fixed_intents is not None and fixed_forms is not None:
        return list(fixed_intents), list(fixed_forms), flags

    def validate(parsed: QuestionTypes) -> None:
        for labels, dim in ((parsed.intents, "intent"), (parsed.forms, "form")):
            prefix = taxonomy.dimension(dim).prefix
            try:
                codes = extract_qtype_codes(labels, prefix)
            except ValueError as exc:
                raise OutputSchemaError(str(exc), raw=str(labels))
            for code in codes:
                if not taxonomy.dimension(dim).valid_code(code):
                    raise OutputSchemaError(
                        f"code {code!r} is not in the {dim} taxonomy", raw=str(labels)
                    )

    req = gateway.request(
        "question_type_classification",
        intent_taxonomy=taxonomy.intents.render_prompt_block(),
        form_taxonomy=taxonomy.forms.render_prompt_block(),
        text=sample.text,
    )
    try:
        parsed: QuestionTypes = gateway.complete_structured(
            req, "question_type_object", validate=validate
        )
    except (OutputParseError, OutputSchemaError) as exc:
        raise AnnotationFailed(f"sample {sample.sample_id}: {exc}") from exc

    intents = (
        list(fixed_intents)
        if fixed_intents is not None
        else extract_qtype_codes(parsed.intents, "INTENT")
    )
    forms = (
        list(fixed_forms)
        if fixed_forms is not None
        else extract_qtype_codes(parsed.forms, "FORM")
    )
    return intents, forms, flags


def knowledge_profile(
    intents: list[str], weights: list[float], taxonomy: QuestionTaxonomy
) -> Optional[dict[str, float]]:
    """Distribute intent weights over primary knowledge dimensions.

    Each intent splits its weight equally across its primary dimensions;
    Others intents contribute nothing. Returns None when only Others
    intents are present.
    """
    if len(intents) != len(weights):
        raise ValueError("intents and weights must align")
    acc = {k: 0.0 for k in KNOWLEDGE_DIMS}
    for code, w in zip(intents, weights):
        info = taxonomy.intents.info(code)
        if info.is_others:
            continue
        share = w / len(info.knowledge_primary)
        for dim in info.knowledge_primary:
            acc[dim] += share
    total = sum(acc.values())
    if total <= 0:
        return None
    return {k: v / total for k, v in acc.items() if v > 0}


@dataclass
class FilterDecision:
    sample_id: str
    keep: bool
    raw: str
    flagged: bool = False

    def to_dict(self) -> dict:
        return {
            "sample_id": self.sample_id,
            "keep": self.keep,
            "raw": self.raw,
            "flagged": self.flagged,
        }


def filter_relevance(gateway: ModelGateway, sample: SampleRecord) -> FilterDecision:
    """Judge-based keep/drop. Judge failure keeps the sample, flagged."""
    req = gateway.request("relevance_filter", text=sample.text)
    try:
        result = gateway.complete(req)
    except GatewayError as exc:
        log.warning("relevance judge failed for %s (%s); keeping", sample.sample_id, exc)
        return FilterDecision(sample.sample_id, keep=True, raw=str(exc), flagged=True)
    verdict = result.text.strip().lower()
    if verdict.startswith("yes"):
        return FilterDecision(sample.sample_id, keep=True, raw=result.text)
    if verdict.startswith("no"):
        return FilterDecision(sample.sample_id, keep=False, raw=result.text)
    log.warning("unrecognized filter verdict %r for %s; keeping", result.text, sample.sample_id)
    return FilterDecision(sample.sample_id, keep=True, raw=result.text, flagged=True)


def _run_concurrent(gateway: ModelGateway, samples: list[SampleRecord], worker):
    if gateway.concurrency > 1 and len(samples) > 1:
        with ThreadPoolExecutor(max_workers=gateway.concurrency) as pool:
            return list(pool.map(worker, samples))
    return [worker(s) for s in samples]


def reassign_corpus(
    gateway: ModelGateway,
    samples: list[SampleRecord],
    taxonomy: TopicTaxonomy,
    skip_ids: Optional[set[str]] = None,
) -> tuple[dict[str, dict], list[str]]:
    """Reassign every sample not in skip_ids; returns (updates, failed ids)."""
    skip = skip_ids or set()
    todo = [s for s in samples if s.sample_id not in skip]

    def worker(sample: SampleRecord):
        try:
            return reassign_topics(gateway, sample, taxonomy)
        except AnnotationFailed as exc:
            return exc

    results = _run_concurrent(gateway, todo, worker)
    updates: dict[str, dict] = {}
    failed: list[str] = []
    for sample, result in zip(todo, results):
        if isinstance(result, AnnotationFailed):
            log.warning("%s", result)
            failed.append(sample.sample_id)
            continue
        updates[sample.sample_id] = {"topics": result}
    return updates, failed


def classify_corpus(
    gateway: ModelGateway,
    samples: list[SampleRecord],
    taxonomy: QuestionTaxonomy,
    fixed_intents: Optional[list[str]] = None,
    fixed_forms: Optional[list[str]] = None,
    skip_ids: Optional[set[str]] = None,
) -> tuple[dict[str, dict], list[str]]:
    skip = skip_ids or set()
    todo = [s for s in samples if s.sample_id not in skip]

    def worker(sample: SampleRecord):
        try:
            return classify_question_type(
                gateway, sample, taxonomy, fixed_intents, fixed_forms
            )
        except AnnotationFailed as exc:
            return exc

    results = _run_concurrent(gateway, todo, worker)
    updates: dict[str, dict] = {}
    failed: list[str] = []
    for sample, result in zip(todo, results):
        if isinstance(result, AnnotationFailed):
            log.warning("%s", result)
            failed.append(sample.sample_id)
            continue
        intents, forms, flags = result
        updates[sample.sample_id] = {
            "intents": intents,
            "forms": forms,
            "fixed_flags": flags,
        }
    return updates, failed
