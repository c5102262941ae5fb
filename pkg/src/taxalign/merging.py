"""Iterative embedding-guided topic merging with full provenance.

One round walks the topic list in descending frequency order. Each
still-unmerged, unlocked topic becomes an anchor; its nearest unmerged
neighbours by cosine similarity are offered to the judge, which may merge a
subset into a renamed parent. Parents take the summed count and the
count-weighted, renormalized centroid embedding. Rounds repeat until a round
merges nothing or the surviving topics are mutually dissimilar (mean
pairwise cosine below theta_mean, or maximum below theta_max).

Every consolidation is recorded in a merge tree whose leaves are the initial
topics, so the final list is fully auditable. Round snapshots can be
persisted for crash-resumable long runs.
"""

from __future__ import annotations

import json
import logging
import math
import os
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import GatewayError, OutputParseError, OutputSchemaError, TaxalignError
from .gateway import ModelGateway
from .mining import TopicEntry, normalize_topic_label, repair_label, weighted_centroid
from .parsing import MergeDecision

log = logging.getLogger(__name__)

DEFAULT_BATCH = 10
DEFAULT_THETA_MEAN = 0.3
DEFAULT_THETA_MAX = 0.5


@dataclass
class SpreadStats:
    mean_pairwise_sim: float
    max_pairwise_sim: float


def spread_stats(entries: list[TopicEntry]) -> Optional[SpreadStats]:
    """Exact mean/max cosine over all unordered pairs; None for <2 topics."""
    n = len(entries)
    if n < 2:
        return None
    V = np.stack([e.embedding for e in entries]).astype(np.float64)
    total = 0.0
    best = -math.inf
    for i in range(n - 1):
        sims = V[i + 1 :] @ V[i]
        total += float(np.sum(sims))
        best = max(best, float(np.max(sims)))
    pairs = n * (n - 1) // 2
    return SpreadStats(mean_pairwise_sim=total / pairs, max_pairwise_sim=best)


def candidate_count(total_topics: int, batch: int = DEFAULT_BATCH) -> int:
    """k = min(batch, max(1, floor(total/10))), with total the full current
    topic-list size."""
    return min(batch, max(1, total_topics // 10))


def select_candidates(
    anchor: TopicEntry,
    pool: list[TopicEntry],
    batch: int = DEFAULT_BATCH,
    total_topics: Optional[int] = None,
) -> list[TopicEntry]:
    """Top-k of the pool by cosine similarity to the anchor.

    Ties break toward higher count, then lexicographic label, so runs are
    deterministic. An empty pool returns an empty list (the caller
    self-links the anchor).
    """
    if not pool:
        return []
    total = total_topics if total_topics is not None else len(pool) + 1
    k = candidate_count(total, batch)
    sims = np.stack([e.embedding for e in pool]) @ anchor.embedding
    ranked = sorted(
        range(len(pool)), key=lambda i: (-float(sims[i]), -pool[i].count, pool[i].label)
    )
    return [pool[i] for i in ranked[:k]]


def apply_merge(
    entries: list[TopicEntry], parent_label: str, parent_explanation: str
) -> TopicEntry:
    """Build the parent entry: summed count, count-weighted unit centroid.

    A near-zero centroid (antipodal embeddings) falls back to the anchor's
    embedding with a warning; entries[0] is the anchor by construction.
    """
    if not entries:
        raise TaxalignError("apply_merge requires a nonempty group")
    return TopicEntry(
        label=parent_label,
        explanation=parent_explanation,
        count=sum(e.count for e in entries),
        embedding=weighted_centroid(entries, fallback=entries[0].embedding),
        locked=False,
    )


def propose_merge(
    gateway: ModelGateway, anchor: TopicEntry, candidates: list[TopicEntry]
) -> tuple[list[TopicEntry], str, str]:
    """Ask the judge which candidates merge into the anchor.

    Returns (merged candidates, parent label, parent explanation). Candidate
    rows are offered with 1-based string ids, the anchor being row "1"; ids
    outside the candidate set are discarded with a warning. A reply that
    stays unparseable after the gateway's single re-ask counts as an empty
    merge.
    """
    if not candidates:
        return [], anchor.label, anchor.explanation

    items = [{"id": "1", "topic": anchor.label, "explanation": anchor.explanation}]
    for i, cand in enumerate(candidates, start=2):
        items.append({"id": str(i), "topic": cand.label, "explanation": cand.explanation})
    req = gateway.request("topic_merging", items=json.dumps(items, ensure_ascii=False))

    try:
        decision: MergeDecision = gateway.complete_structured(req, "merge_decision")
    except (OutputParseError, OutputSchemaError) as exc:
        log.warning("merge reply unusable for anchor %r: %s", anchor.label, exc)
        return [], anchor.label, anchor.explanation

    valid = {str(i): cand for i, cand in enumerate(candidates, start=2)}
    merged: list[TopicEntry] = []
    seen: set[str] = set()
    for raw_id in decision.merged_ids:
        if raw_id in seen:
            continue
        seen.add(raw_id)
        if raw_id not in valid:
            log.warning(
                "judge returned id %r outside the offered candidates for anchor %r; discarded",
                raw_id,
                anchor.label,
            )
            continue
        merged.append(valid[raw_id])
    merged.sort(key=lambda c: candidates.index(c))

    cfg = gateway.config
    check = normalize_topic_label(
        decision.parent_topic, decision.parent_explanation, cfg.subject, cfg.n_words, cfg.m_words
    )
    if "prefix" in check.violations:
        repaired = repair_label(decision.parent_topic, cfg.subject)
        if repaired is not None:
            check = normalize_topic_label(
                repaired, decision.parent_explanation, cfg.subject, cfg.n_words, cfg.m_words
            )
    if not check.ok:
        log.warning(
            "judge parent label %r violates format (%s); keeping anchor's",
            decision.parent_topic,
            ",".join(check.violations),
        )
        return merged, anchor.label, anchor.explanation
    return merged, check.label, check.explanation


def _top_candidates(embeddings, tracked, anchor_idx: int, pool_mask, k: int) -> list[int]:
    """Indices of the pool's top-k by cosine to the anchor, with the same
    exact ordering rule as select_candidates: higher similarity first, ties
    toward higher count, then lexicographic label.

    The similarity threshold prefilter is exact: similarity is the primary
    sort key, so nothing below the k-th similarity can reach the top k, and
    entries tied at the threshold still compete on count and label.
    """
    sims = embeddings @ embeddings[anchor_idx]
    pool = np.flatnonzero(pool_mask)
    if len(pool) > k:
        pool_sims = sims[pool]
        threshold = np.partition(pool_sims, len(pool) - k)[len(pool) - k]
        pool = pool[pool_sims >= threshold]
    ranked = sorted(
        pool.tolist(),
        key=lambda j: (-float(sims[j]), -tracked[j].entry.count, tracked[j].entry.label),
    )
    return ranked[:k]


# -- merge tree --------------------------------------------------------


@dataclass
class MergeNode:
    node_id: str
    label: str
    explanation: str
    count: int
    round_index: int
    children: list[str] = field(default_factory=list)
    locked: bool = False
    examples: list[str] = field(default_factory=list)

    @property
    def is_leaf(self) -> bool:
        return not self.children

    def to_dict(self) -> dict:
        d = {
            "node_id": self.node_id,
            "label": self.label,
            "explanation": self.explanation,
            "count": self.count,
            "round_index": self.round_index,
            "children": self.children,
        }
        if self.locked:
            d["locked"] = True
        if self.examples:
            d["examples"] = self.examples
        return d


@dataclass
class RoundLog:
    round_index: int
    any_merge: bool
    topics_in: int
    topics_out: int
    anchors: list[str] = field(default_factory=list)
    merges: list[dict] = field(default_factory=list)
    mean_sim: Optional[float] = None
    max_sim: Optional[float] = None
    stop_reason: Optional[str] = None

    def to_dict(self) -> dict:
        return {
            "round_index": self.round_index,
            "any_merge": self.any_merge,
            "topics_in": self.topics_in,
            "topics_out": self.topics_out,
            "anchors": self.anchors,
            "merges": self.merges,
            "mean_sim": self.mean_sim,
            "max_sim": self.max_sim,
            "stop_reason": self.stop_reason,
        }


class MergeTree:
    """Provenance of all merge rounds; leaves are the initial topics."""

    def __init__(self):
        self.nodes: dict[str, MergeNode] = {}
        self.roots: list[str] = []
        self.round_logs: list[RoundLog] = []
        self._next = 1

    def _new_id(self) -> str:
        node_id = f"t{self._next:05d}"
        self._next += 1
        return node_id

    def add_leaf(self, entry: TopicEntry, examples: Optional[list[str]] = None) -> str:
        node_id = self._new_id()
        self.nodes[node_id] = MergeNode(
            node_id=node_id,
            label=entry.label,
            explanation=entry.explanation,
            count=entry.count,
            round_index=0,
            locked=entry.locked,
            examples=list(examples or []),
        )
        return node_id

    def add_parent(self, entry: TopicEntry, children: list[str], round_index: int) -> str:
        node_id = self._new_id()
        self.nodes[node_id] = MergeNode(
            node_id=node_id,
            label=entry.label,
            explanation=entry.explanation,
            count=entry.count,
            round_index=round_index,
            children=list(children),
        )
        return node_id

    def leaves(self) -> list[MergeNode]:
        return [n for n in self.nodes.values() if n.is_leaf]

    def parent_map(self) -> dict[str, str]:
        parents: dict[str, str] = {}
        for node in self.nodes.values():
            for child in node.children:
                if child in parents:
                    raise TaxalignError(f"node {child} has two parents")
                parents[child] = node.node_id
        return parents

    def validate(self) -> None:
        """Raise when the tree violates well-formedness."""
        parents = self.parent_map()
        root_set = set(self.roots)
        for node in self.nodes.values():
            if node.node_id not in parents and node.node_id not in root_set:
                raise TaxalignError(f"non-root node {node.node_id} has no parent")
            if node.node_id in parents and node.node_id in root_set:
                raise TaxalignError(f"root {node.node_id} has a parent")
            if node.children:
                child_sum = sum(self.nodes[c].count for c in node.children)
                if child_sum != node.count:
                    raise TaxalignError(
                        f"count mismatch at {node.node_id}: {node.count} != {child_sum}"
                    )
        leaf_total = sum(n.count for n in self.leaves())
        root_total = sum(self.nodes[r].count for r in self.roots)
        if self.roots and leaf_total != root_total:
            raise TaxalignError(
                f"count conservation violated: leaves {leaf_total} vs roots {root_total}"
            )

    def to_dict(self) -> dict:
        return {
            "nodes": {nid: n.to_dict() for nid, n in sorted(self.nodes.items())},
            "roots": self.roots,
            "round_logs": [r.to_dict() for r in self.round_logs],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MergeTree":
        tree = cls()
        for nid, nd in d["nodes"].items():
            tree.nodes[nid] = MergeNode(
                node_id=nd["node_id"],
                label=nd["label"],
                explanation=nd["explanation"],
                count=int(nd["count"]),
                round_index=int(nd["round_index"]),
                children=list(nd.get("children", [])),
                locked=bool(nd.get("locked", False)),
                examples=list(nd.get("examples", [])),
            )
        tree.roots = list(d.get("roots", []))
        for rl in d.get("round_logs", []):
            tree.round_logs.append(
                RoundLog(
                    round_index=rl["round_index"],
                    any_merge=rl["any_merge"],
                    topics_in=rl["topics_in"],
                    topics_out=rl["topics_out"],
                    anchors=list(rl.get("anchors", [])),
                    merges=list(rl.get("merges", [])),
                    mean_sim=rl.get("mean_sim"),
                    max_sim=rl.get("max_sim"),
                    stop_reason=rl.get("stop_reason"),
                )
            )
        ids = [int(m.group(1)) for m in (re.match(r"t(\d+)$", nid) for nid in tree.nodes) if m]
        tree._next = max(ids, default=0) + 1
        return tree


# -- engine ------------------------------------------------------------


@dataclass
class _Tracked:
    entry: TopicEntry
    node_id: str


def _same_pair(a: TopicEntry, b_label: str, b_expl: str) -> bool:
    probe = TopicEntry(label=b_label, explanation=b_expl, count=1, embedding=a.embedding)
    return a.key() == probe.key()


class MergeEngine:
    def __init__(
        self,
        gateway: ModelGateway,
        batch: int = DEFAULT_BATCH,
        theta_mean: float = DEFAULT_THETA_MEAN,
        theta_max: float = DEFAULT_THETA_MAX,
        state_dir: Optional[str | Path] = None,
    ):
        self.gateway = gateway
        self.batch = batch
        self.theta_mean = theta_mean
        self.theta_max = theta_max
        self.state_dir = Path(state_dir) if state_dir else None

    # one round ---------------------------------------------------------

    def run_round(
        self, tracked: list[_Tracked], tree: MergeTree, round_index: int
    ) -> tuple[list[_Tracked], RoundLog, bool]:
        order = sorted(range(len(tracked)), key=lambda i: (-tracked[i].entry.count, tracked[i].entry.label))
        total = len(tracked)
        new_tracked: list[_Tracked] = []
        any_merge = False
        rlog = RoundLog(round_index=round_index, any_merge=False, topics_in=total, topics_out=0)

        # one embedding matrix per round; per-anchor scoring is a masked
        # matvec instead of restacking the shrinking pool (the naive form
        # copies O(n^2 d) bytes per round, prohibitive at 10k+ topics)
        embeddings = np.stack([t.entry.embedding for t in tracked]) if tracked else None
        available = np.ones(total, dtype=bool)
        unlocked = np.array([not t.entry.locked for t in tracked], dtype=bool)

        for idx in order:
            if not available[idx]:
                continue
            item = tracked[idx]
            available[idx] = False

            if item.entry.locked:
                new_tracked.append(item)  # carried by reference: an untouched self-link
                continue

            rlog.anchors.append(item.node_id)
            pool_mask = available & unlocked
            if not bool(pool_mask.any()):
                new_tracked.append(item)
                continue

            cand_js = _top_candidates(
                embeddings, tracked, idx, pool_mask, candidate_count(total, self.batch)
            )
            candidates = [tracked[j].entry for j in cand_js]
            try:
                merged_entries, parent_label, parent_expl = propose_merge(
                    self.gateway, item.entry, candidates
                )
            except GatewayError as exc:
                log.warning("judge call failed for anchor %r (%s); self-linking", item.entry.label, exc)
                new_tracked.append(item)
                continue

            group = [item]
            for ent in merged_entries:
                j = cand_js[candidates.index(ent)]
                available[j] = False
                group.append(tracked[j])
            if len(group) > 1:
                any_merge = True

            new_entry = apply_merge([g.entry for g in group], parent_label, parent_expl)
            if len(group) == 1 and _same_pair(item.entry, parent_label, parent_expl):
                new_tracked.append(item)  # unchanged self-link, carried by reference
                continue
            node_id = tree.add_parent(new_entry, [g.node_id for g in group], round_index)
            rlog.merges.append(
                {"parent": node_id, "children": [g.node_id for g in group]}
            )
            new_tracked.append(_Tracked(entry=new_entry, node_id=node_id))

        # end-of-round dedup by normalized (label, explanation)
        groups: dict[tuple[str, str], list[_Tracked]] = {}
        dedup_order: list[tuple[str, str]] = []
        for t in new_tracked:
            k = t.entry.key()
            if k not in groups:
                groups[k] = []
                dedup_order.append(k)
            groups[k].append(t)
        deduped: list[_Tracked] = []
        for k in dedup_order:
            bucket = groups[k]
            if len(bucket) == 1:
                deduped.append(bucket[0])
                continue
            first = bucket[0].entry
            merged_entry = TopicEntry(
                label=first.label,
                explanation=first.explanation,
                count=sum(t.entry.count for t in bucket),
                embedding=weighted_centroid([t.entry for t in bucket], fallback=first.embedding),
                locked=any(t.entry.locked for t in bucket),
            )
            node_id = tree.add_parent(merged_entry, [t.node_id for t in bucket], round_index)
            rlog.merges.append({"parent": node_id, "children": [t.node_id for t in bucket], "dedup": True})
            deduped.append(_Tracked(entry=merged_entry, node_id=node_id))

        rlog.any_merge = any_merge
        rlog.topics_out = len(deduped)
        stats = spread_stats([t.entry for t in deduped])
        if stats is not None:
            rlog.mean_sim = stats.mean_pairwise_sim
            rlog.max_sim = stats.max_pairwise_sim
        return deduped, rlog, any_merge

    # full run ------------------------------------------------------------

    def _state_path(self, round_index: int) -> Path:
        assert self.state_dir is not None
        return self.state_dir / f"round_{round_index:04d}.json"

    def _persist(self, tracked: list[_Tracked], tree: MergeTree, round_index: int, stop: Optional[str]) -> None:
        if self.state_dir is None:
            return
        self.state_dir.mkdir(parents=True, exist_ok=True)
        payload = {
            "round_index": round_index,
            "stop_reason": stop,
            "topics": [
                {"node_id": t.node_id, **t.entry.to_dict()} for t in tracked
            ],
            "tree": tree.to_dict(),
        }
        path = self._state_path(round_index)
        tmp = path.with_name(path.name + f".tmp-{os.getpid()}")
        tmp.write_text(json.dumps(payload, sort_keys=True), encoding="utf-8")
        os.replace(tmp, path)

    def _load_latest_state(self):
        if self.state_dir is None or not self.state_dir.exists():
            return None
        rounds = sorted(self.state_dir.glob("round_*.json"))
        if not rounds:
            return None
        payload = json.loads(rounds[-1].read_text(encoding="utf-8"))
        tree = MergeTree.from_dict(payload["tree"])
        tracked = [
            _Tracked(entry=TopicEntry.from_dict(t), node_id=t["node_id"])
            for t in payload["topics"]
        ]
        return payload["round_index"], payload.get("stop_reason"), tracked, tree

    def run(
        self,
        topics: list[TopicEntry],
        examples: Optional[dict[tuple[str, str], list[str]]] = None,
        resume: bool = False,
    ) -> tuple[list[TopicEntry], MergeTree]:
        """Merge until convergence; returns (final topics, merge tree)."""
        state = self._load_latest_state() if resume else None
        if state is not None:
            round_index, stop, tracked, tree = state
            if stop is not None:
                log.info("resume: run already converged (%s)", stop)
                return [t.entry for t in tracked], tree
            log.info("resuming after round %d with %d topics", round_index, len(tracked))
        else:
            tree = MergeTree()
            tracked = []
            for entry in topics:
                node_id = tree.add_leaf(entry, (examples or {}).get(entry.key()))
                tracked.append(_Tracked(entry=entry, node_id=node_id))
            tree.roots = [t.node_id for t in tracked]
            round_index = 0
            self._persist(tracked, tree, 0, None)

        if not tracked:
            return [], tree

        # each merging round strictly shrinks the list and a non-merging
        # round stops the loop, so rounds never exceed the leaf count
        max_rounds = max(1, len(tree.leaves()))
        stop: Optional[str] = None
        while stop is None and round_index < max_rounds:
            round_index += 1
            tracked, rlog, any_merge = self.run_round(tracked, tree, round_index)
            tree.roots = [t.node_id for t in tracked]

            if not any_merge:
                stop = "inactivity"
            elif rlog.mean_sim is not None and rlog.mean_sim < self.theta_mean:
                stop = "mean_spread"
            elif rlog.max_sim is not None and rlog.max_sim < self.theta_max:
                stop = "max_spread"
            elif len(tracked) < 2:
                stop = "single_topic"
            rlog.stop_reason = stop
            tree.round_logs.append(rlog)
            self._persist(tracked, tree, round_index, stop)
            log.info(
                "round %d: %d -> %d topics (any_merge=%s, stop=%s)",
                round_index,
                rlog.topics_in,
                rlog.topics_out,
                any_merge,
                stop,
            )

        tree.validate()
        return [t.entry for t in tracked], tree
