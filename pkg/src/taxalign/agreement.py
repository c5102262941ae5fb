"""Multi-label agreement metrics with bootstrap confidence intervals.

Jaccard and Micro-F1 quantify annotator-vs-annotator (or model-vs-human)
overlap; Cohen's kappa works on per-(instance, label) presence decisions
binarized over the full label universe, the standard construction for
multi-label data. Confidence intervals come from seeded percentile
bootstrap resampling of instances, preserving within-instance correlation.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import TaxalignError

log = logging.getLogger(__name__)


@dataclass
class LabeledInstance:
    sample_id: str
    labels_a: frozenset
    labels_b: frozenset
    dimension: Optional[str] = None
    segment: Optional[str] = None

    def __post_init__(self):
        self.labels_a = frozenset(self.labels_a)
        self.labels_b = frozenset(self.labels_b)
        if not self.labels_a or not self.labels_b:
            raise TaxalignError(f"instance {self.sample_id}: label sets must be nonempty")


def jaccard(a: set, b: set) -> float:
    """|a∩b| / |a∪b|; two empty sets count as vacuous perfect agreement."""
    union = set(a) | set(b)
    if not union:
        log.warning("jaccard of two empty sets; defining as 1.0")
        return 1.0
    return len(set(a) & set(b)) / len(union)


def mean_jaccard(instances: Sequence[LabeledInstance]) -> float:
    if not instances:
        raise TaxalignError("mean_jaccard needs at least one instance")
    return sum(jaccard(i.labels_a, i.labels_b) for i in instances) / len(instances)


def micro_f1(instances: Sequence[LabeledInstance]) -> float:
    """Pooled F1 over all (instance, label) pairs, labels_b as gold."""
    if not instances:
        raise TaxalignError("micro_f1 needs at least one instance")
    tp = fp = fn = 0
    for inst in instances:
        tp += len(inst.labels_a & inst.labels_b)
        fp += len(inst.labels_a - inst.labels_b)
        fn += len(inst.labels_b - inst.labels_a)
    denom = 2 * tp + fp + fn
    if denom == 0:
        return 1.0
    return 2 * tp / denom


def cohens_kappa_multilabel(
    instances: Sequence[LabeledInstance], label_universe: Sequence
) -> float:
    """Kappa over binary presence decisions for every (instance, label).

    p_o is the agreement rate; p_e comes from each annotator's marginal
    presence rate. Degenerate p_e = 1 maps to 1.0 for perfect agreement and
    0.0 otherwise, flagged in the log.
    """
    universe = list(dict.fromkeys(label_universe))
    if not universe:
        raise TaxalignError("label universe is empty")
    observed = set()
    for inst in instances:
        observed |= inst.labels_a | inst.labels_b
    missing = observed - set(universe)
    if missing:
        raise TaxalignError(f"labels outside the universe: {sorted(missing)}")

    total = len(instances) * len(universe)
    agree = 0
    pos_a = 0
    pos_b = 0
    for inst in instances:
        for label in universe:
            xa = label in inst.labels_a
            xb = label in inst.labels_b
            agree += xa == xb
            pos_a += xa
            pos_b += xb
    p_o = agree / total
    pa = pos_a / total
    pb = pos_b / total
    p_e = pa * pb + (1 - pa) * (1 - pb)
    if p_e >= 1.0:
        log.warning("degenerate constant annotations (p_e=1); kappa pinned")
        return 1.0 if p_o == 1.0 else 0.0
    return (p_o - p_e) / (1 - p_e)


def bootstrap_ci(
    metric: Callable[[list[LabeledInstance]], float],
    instances: Sequence[LabeledInstance],
    rounds: int = 1000,
    level: float = 0.95,
    seed: int = 0,
) -> tuple[float, float]:
    """Seeded percentile bootstrap interval, resampling whole instances."""
    if not instances:
        raise TaxalignError("bootstrap needs at least one instance")
    if not 0 < level < 1:
        raise TaxalignError("confidence level must be in (0,1)")
    items = list(instances)
    n = len(items)
    rng = np.random.default_rng(seed)
    index_matrix = rng.integers(0, n, size=(rounds, n))
    stats = np.empty(rounds, dtype=np.float64)
    for r in range(rounds):
        stats[r] = metric([items[i] for i in index_matrix[r]])
    alpha = 1.0 - level
    lo, hi = np.quantile(stats, [alpha / 2.0, 1.0 - alpha / 2.0])
    return float(lo), float(hi)


def aggregate_report(rows: Sequence[Sequence[float]]) -> list[float]:
    """Column-wise arithmetic mean, e.g. averaging two annotators' rows."""
    if not rows:
        raise TaxalignError("nothing to aggregate")
    width = len(rows[0])
    for row in rows:
        if len(row) != width:
            raise TaxalignError("aggregate rows must share their shape")
    return [sum(row[j] for row in rows) / len(rows) for j in range(width)]


@dataclass
class MetricWithCI:
    name: str
    point: float
    ci_lo: float
    ci_hi: float
    level: float
    rounds: int

    def to_dict(self) -> dict:
        return {
            "metric": self.name,
            "point": self.point,
            "ci": [self.ci_lo, self.ci_hi],
            "level": self.level,
            "rounds": self.rounds,
        }


@dataclass
class AgreementReport:
    dimension: Optional[str]
    overall: list[MetricWithCI]
    segments: dict[str, list[MetricWithCI]] = field(default_factory=dict)
    instance_count: int = 0

    def to_dict(self) -> dict:
        return {
            "dimension": self.dimension,
            "instance_count": self.instance_count,
            "overall": [m.to_dict() for m in self.overall],
            "segments": {
                seg: [m.to_dict() for m in metrics]
                for seg, metrics in sorted(self.segments.items())
            },
        }


def build_agreement_report(
    instances: Sequence[LabeledInstance],
    label_universe: Sequence,
    rounds: int = 1000,
    level: float = 0.95,
    seed: int = 0,
) -> AgreementReport:
    """Segment-wise and overall Jaccard / Micro-F1 / kappa with CIs.

    Each (segment, metric) pair gets its own deterministic sub-seed so the
    whole report is reproducible for a fixed seed.
    """
    if not instances:
        raise TaxalignError("no instances to score")
    metrics: list[tuple[str, Callable]] = [
        ("jaccard", mean_jaccard),
        ("micro_f1", micro_f1),
        ("kappa", lambda batch: cohens_kappa_multilabel(batch, label_universe)),
    ]

    def score(batch: list[LabeledInstance], seed_base: int) -> list[MetricWithCI]:
        out = []
        for offset, (name, fn) in enumerate(metrics):
            lo, hi = bootstrap_ci(fn, batch, rounds=rounds, level=level, seed=seed_base + offset)
            out.append(
                MetricWithCI(
                    name=name,
                    point=float(fn(batch)),
                    ci_lo=lo,
                    ci_hi=hi,
                    level=level,
                    rounds=rounds,
                )
            )
        return out

    segments: dict[str, list[LabeledInstance]] = {}
    for inst in instances:
        if inst.segment:
            segments.setdefault(inst.segment, []).append(inst)

    report = AgreementReport(
        dimension=instances[0].dimension,
        overall=score(list(instances), seed),
        instance_count=len(instances),
    )
    for i, (seg, batch) in enumerate(sorted(segments.items()), start=1):
        report.segments[seg] = score(batch, seed + 1000 * i)
    return report


def load_labeled_instances(
    path_a: str | Path,
    path_b: str | Path,
    dimension: Optional[str] = None,
) -> list[LabeledInstance]:
    """Join two annotation JSONL files (lines of {sample_id, labels,
    segment?}) on sample_id; unmatched ids are skipped with a warning."""

    def read(path: str | Path) -> dict[str, dict]:
        out = {}
        with Path(path).open(encoding="utf-8") as fp:
            for line in fp:
                line = line.strip()
                if not line:
                    continue
                obj = json.loads(line)
                out[obj["sample_id"]] = obj
        return out

    a_by_id = read(path_a)
    b_by_id = read(path_b)
    shared = [sid for sid in a_by_id if sid in b_by_id]
    skipped = (set(a_by_id) | set(b_by_id)) - set(shared)
    if skipped:
        log.warning("%d ids present in only one file; skipped", len(skipped))
    instances = []
    for sid in shared:
        a = a_by_id[sid]
        instances.append(
            LabeledInstance(
                sample_id=sid,
                labels_a=frozenset(a["labels"]),
                labels_b=frozenset(b_by_id[sid]["labels"]),
                dimension=dimension,
                segment=a.get("segment") or b_by_id[sid].get("segment"),
            )
        )
    return instances
