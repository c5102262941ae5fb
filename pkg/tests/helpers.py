"""Shared test backends and builders."""

from __future__ import annotations

import json
import re

import numpy as np

from taxalign.gateway import GatewayConfig, MockBackend, ModelGateway


class ScriptedBackend(MockBackend):
    """Judge whose replies come from a responder(prompt, request) callable;
    embeddings reuse the deterministic mock token-bag embedder."""

    def __init__(self, responder, embedding_dim: int = 16):
        super().__init__(fixtures={}, embedding_dim=embedding_dim)
        self.responder = responder
        self.calls = 0

    def complete(self, prompt, request, model):
        self.calls += 1
        return self.responder(prompt, request)


def make_gateway(backend=None, responder=None, embedding_dim: int = 16, **cfg) -> ModelGateway:
    config = GatewayConfig.from_dict({"backend": "mock", "concurrency": 1, **cfg})
    config.embedding_dim = embedding_dim
    if backend is None:
        if responder is not None:
            backend = ScriptedBackend(responder, embedding_dim=embedding_dim)
        else:
            backend = MockBackend(fixtures={}, embedding_dim=embedding_dim)
    return ModelGateway(config, backend=backend)


def unit(*values) -> np.ndarray:
    vec = np.asarray(values, dtype=np.float64)
    return vec / np.linalg.norm(vec)


_FAMILY = re.compile(r"Family(\d+)")


def family_merge_responder(prompt: str, request) -> str:
    """Merge candidates sharing the anchor's FamilyN tag; used by the
    randomized merge trials."""
    items = json.loads(request.variables["items"])
    anchor = items[0]
    fam = _FAMILY.search(anchor["topic"])
    merged = []
    if fam is not None:
        for item in items[1:]:
            other = _FAMILY.search(item["topic"])
            if other is not None and other.group(1) == fam.group(1):
                merged.append(item["id"])
    if fam is not None and merged:
        parent = f"Climate Change: Family{fam.group(1)}"
        explanation = f"All facets of family {fam.group(1)}."
    else:
        parent = anchor["topic"]
        explanation = anchor["explanation"]
    return json.dumps(
        {"merged_ids": merged, "parent_topic": parent, "parent_explanation": explanation}
    )


def never_merge_responder(prompt: str, request) -> str:
    items = json.loads(request.variables["items"])
    return json.dumps(
        {
            "merged_ids": [],
            "parent_topic": items[0]["topic"],
            "parent_explanation": items[0]["explanation"],
        }
    )
