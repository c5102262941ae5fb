"""Strict parsing of judge output into typed values.

Lexing is lenient (code fences stripped, first JSON value taken from
anywhere in the reply); all strictness lives in schema validation. Both
failure modes are typed, retryable errors; this module never raises
anything else, no matter the input bytes.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field

from .errors import OutputParseError, OutputSchemaError
from .prompts import IRRELEVANT_TOPIC_LABEL

SCHEMAS = ("topic_array", "merge_decision", "reassign_array", "question_type_object")

_FENCE = re.compile(r"```[a-zA-Z0-9_-]*\n?|```")


@dataclass
class TopicArray:
    topics: list[tuple[str, str]]  # (label, explanation)
    irrelevant: bool = False


@dataclass
class MergeDecision:
    merged_ids: list[str]
    parent_topic: str
    parent_explanation: str


@dataclass
class ReassignArray:
    labels: list[str]


@dataclass
class QuestionTypes:
    intents: list[str] = field(default_factory=list)
    forms: list[str] = field(default_factory=list)


def extract_json_value(raw: str):
    """Pull the first JSON value out of an arbitrary reply."""
    if not isinstance(raw, str):
        raise OutputParseError("reply is not text", raw=repr(raw))
    text = _FENCE.sub("", raw)
    decoder = json.JSONDecoder()
    for i, ch in enumerate(text):
        if ch in "[{":
            try:
                value, _ = decoder.raw_decode(text[i:])
                return value
            except (json.JSONDecodeError, ValueError):
                continue
    raise OutputParseError("no JSON value found in reply", raw=raw)


def _require_str(value, what: str, raw: str) -> str:
    if not isinstance(value, str) or not value.strip():
        raise OutputSchemaError(f"{what} must be a nonempty string", raw=raw)
    return value.strip()


def _parse_topic_array(value, raw: str) -> TopicArray:
    if not isinstance(value, list):
        raise OutputSchemaError("expected a JSON array of topic objects", raw=raw)
    if not 1 <= len(value) <= 3:
        raise OutputSchemaError(
            f"expected 1-3 topics, got {len(value)}", raw=raw
        )
    topics = []
    for item in value:
        if not isinstance(item, dict) or "topic" not in item or "explanation" not in item:
            raise OutputSchemaError(
                "each topic object needs 'topic' and 'explanation'", raw=raw
            )
        topics.append(
            (
                _require_str(item["topic"], "topic", raw),
                _require_str(item["explanation"], "explanation", raw),
            )
        )
    irrelevant = len(topics) == 1 and topics[0][0] == IRRELEVANT_TOPIC_LABEL
    return TopicArray(topics=topics, irrelevant=irrelevant)


def _parse_merge_decision(value, raw: str) -> MergeDecision:
    if not isinstance(value, dict):
        raise OutputSchemaError("expected a JSON object", raw=raw)
    expected = {"merged_ids", "parent_topic", "parent_explanation"}
    if set(value.keys()) != expected:
        raise OutputSchemaError(
            f"expected exactly keys {sorted(expected)}, got {sorted(value.keys())}",
            raw=raw,
        )
    ids = value["merged_ids"]
    if not isinstance(ids, list):
        raise OutputSchemaError("merged_ids must be an array", raw=raw)
    norm_ids = []
    for x in ids:
        if isinstance(x, bool) or not isinstance(x, (str, int)):
            raise OutputSchemaError("merged_ids entries must be id strings", raw=raw)
        norm_ids.append(str(x).strip())
    return MergeDecision(
        merged_ids=norm_ids,
        parent_topic=_require_str(value["parent_topic"], "parent_topic", raw),
        parent_explanation=_require_str(
            value["parent_explanation"], "parent_explanation", raw
        ),
    )


def _parse_reassign_array(value, raw: str) -> ReassignArray:
    if not isinstance(value, list):
        raise OutputSchemaError("expected a JSON array of topic objects", raw=raw)
    if not 1 <= len(value) <= 3:
        raise OutputSchemaError(f"expected 1-3 topics, got {len(value)}", raw=raw)
    labels = []
    for item in value:
        if not isinstance(item, dict) or "topic" not in item:
            raise OutputSchemaError("each object needs a 'topic' field", raw=raw)
        labels.append(_require_str(item["topic"], "topic", raw))
    return ReassignArray(labels=labels)


def _parse_question_types(value, raw: str) -> QuestionTypes:
    if not isinstance(value, dict) or "intent" not in value or "form" not in value:
        raise OutputSchemaError("expected an object with 'intent' and 'form'", raw=raw)
    result = QuestionTypes()
    for key, target in (("intent", "intents"), ("form", "forms")):
        entries = value[key]
        if isinstance(entries, str):
            entries = [entries]
        if not isinstance(entries, list) or not 1 <= len(entries) <= 3:
            raise OutputSchemaError(f"'{key}' must list 1-3 labels", raw=raw)
        setattr(result, target, [_require_str(e, key, raw) for e in entries])
    return result


def parse_structured_output(raw: str, schema: str):
    """Parse a judge reply under one of the known output schemas.

    Raises OutputParseError when no JSON value can be extracted and
    OutputSchemaError when the value violates the schema; both carry the
    raw reply and are retryable by the caller.
    """
    if schema not in SCHEMAS:
        raise ValueError(f"unknown schema {schema!r}")
    value = extract_json_value(raw)
    if schema == "topic_array":
        return _parse_topic_array(value, raw)
    if schema == "merge_decision":
        return _parse_merge_decision(value, raw)
    if schema == "reassign_array":
        return _parse_reassign_array(value, raw)
    return _parse_question_types(value, raw)
