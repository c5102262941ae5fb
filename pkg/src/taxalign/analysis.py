"""Weighted distributions over taxonomy dimensions and their comparison.

A Distribution is a fixed-length nonnegative vector over a dimension's code
list, summing to one (or flagged empty). Topic vectors carry 25 slots, or 26
when Others is included; intent and form vectors always carry all 38 slots,
with zero mass on Others codes when those are excluded. Summation order is
index order throughout, so equal inputs reproduce bit-equal outputs.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .errors import TaxalignError
from .taxonomy import QuestionTaxonomy, TopicTaxonomy

log = logging.getLogger(__name__)

WEIGHT_SCHEMES = ("label_count", "per_sample", "ranked")
SUM_TOL = 1e-9


@dataclass(frozen=True)
class DimensionSpec:
    """Code universe of one taxonomy dimension, at fixed include_others."""

    name: str
    include_others: bool
    codes: tuple[str, ...]
    others: frozenset[str]
    category_by_code: dict[str, str]
    category_codes: tuple[str, ...]
    category_names: dict[str, str]

    def index(self, code: str) -> int:
        try:
            return self.codes.index(code)
        except ValueError:
            raise TaxalignError(f"code {code!r} not in dimension {self.name}") from None


def dimension_spec(
    name: str,
    topic_taxonomy: TopicTaxonomy,
    question_taxonomy: QuestionTaxonomy,
    include_others: bool = False,
) -> DimensionSpec:
    if name == "topic":
        codes = tuple(topic_taxonomy.codes(include_others))
        others = frozenset({topic_taxonomy.others.code})
        cat = {c: topic_taxonomy.category_of(c) for c in codes}
        cat_names = dict(topic_taxonomy.category_names)
    elif name in ("intent", "form"):
        dim = question_taxonomy.dimension(name)
        codes = tuple(dim.codes())
        others = frozenset(dim.others_codes())
        cat = {c: dim.category_of(c) for c in codes}
        cat_names = {
            f"{dim.prefix}_{code}": label for code, label in dim.category_names.items()
        }
    else:
        raise TaxalignError(f"unknown dimension {name!r}")
    seen: list[str] = []
    for c in codes:
        if cat[c] not in seen:
            seen.append(cat[c])
    return DimensionSpec(
        name=name,
        include_others=include_others,
        codes=codes,
        others=others,
        category_by_code=cat,
        category_codes=tuple(seen),
        category_names=cat_names,
    )


@dataclass
class Distribution:
    dimension: str
    scheme: str
    include_others: bool
    codes: tuple[str, ...]
    values: np.ndarray
    empty: bool = False

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if len(self.codes) != self.values.shape[0]:
            raise TaxalignError("codes/values length mismatch")
        if np.any(self.values < 0):
            raise TaxalignError("distribution values must be nonnegative")
        total = float(self.values.sum())
        if self.empty:
            if total != 0.0:
                raise TaxalignError("empty distribution must be all-zero")
        elif abs(total - 1.0) > SUM_TOL:
            raise TaxalignError(f"distribution sums to {total}, expected 1")

    def weight(self, code: str) -> float:
        return float(self.values[self.codes.index(code)])

    def as_mapping(self) -> dict[str, float]:
        return {c: float(v) for c, v in zip(self.codes, self.values)}


def rank_weights_exact(k: int) -> list[Fraction]:
    """Triangular rank weights K:(K-1):...:1 as exact fractions, sum 1."""
    if not 1 <= k <= 3:
        raise TaxalignError(f"rank weight count must be in [1,3], got {k}")
    total = k * (k + 1) // 2
    return [Fraction(k - i, total) for i in range(k)]


def rank_weights(k: int) -> list[float]:
    return [float(w) for w in rank_weights_exact(k)]


def sample_weight_vector(
    codes: Sequence[str], scheme: str, spec: DimensionSpec
) -> dict[str, float]:
    """Per-record weights over its own codes.

    ranked: triangular by rank; per_sample: 1/K each; label_count: raw 1 per
    label (the dataset-level normalizer divides by total label occurrences,
    which intentionally weights multi-label records more).
    """
    if scheme not in WEIGHT_SCHEMES:
        raise TaxalignError(f"unknown weighting scheme {scheme!r}")
    if not codes:
        raise TaxalignError("record has no codes")
    if len(set(codes)) != len(codes):
        raise TaxalignError(f"duplicate codes in record: {codes}")
    for code in codes:
        spec.index(code)
    k = len(codes)
    if scheme == "ranked":
        weights = rank_weights(k)
    elif scheme == "per_sample":
        weights = [1.0 / k] * k
    else:
        weights = [1.0] * k
    return dict(zip(codes, weights))


def _drop_others(codes: Sequence[str], spec: DimensionSpec) -> list[str]:
    if spec.include_others:
        return [c for c in codes]
    return [c for c in codes if c not in spec.others]


def distribution_from_records(
    code_lists: Sequence[Sequence[str]], spec: DimensionSpec, scheme: str
) -> Distribution:
    """Sum per-record weight vectors and normalize.

    With Others excluded, Others codes are removed from each record before
    weighting, so surviving codes keep their rank order and each
    contributing record carries unit mass under ranked/per_sample.
    """
    vec = np.zeros(len(spec.codes), dtype=np.float64)
    for codes in code_lists:
        kept = _drop_others(codes, spec)
        if not kept:
            continue
        for code, w in sample_weight_vector(kept, scheme, spec).items():
            vec[spec.index(code)] += w
    total = float(vec.sum())
    if total == 0.0:
        log.warning("no annotated mass for dimension %s; empty distribution", spec.name)
        return Distribution(spec.name, scheme, spec.include_others, spec.codes, vec, empty=True)
    return Distribution(spec.name, scheme, spec.include_others, spec.codes, vec / total)


def group_distribution(
    members: Sequence[Distribution], sizes: Sequence[int]
) -> Distribution:
    """Convex combination of member distributions, weighted by corpus size."""
    if not members:
        raise TaxalignError("group needs at least one member")
    if len(members) != len(sizes):
        raise TaxalignError("members/sizes length mismatch")
    first = members[0]
    for d in members[1:]:
        if d.codes != first.codes or d.scheme != first.scheme or d.include_others != first.include_others:
            raise TaxalignError("group members must share dimension and settings")
    live = [(d, s) for d, s in zip(members, sizes) if not d.empty]
    total = sum(s for _, s in live)
    if total <= 0:
        return Distribution(
            first.dimension,
            first.scheme,
            first.include_others,
            first.codes,
            np.zeros(len(first.codes)),
            empty=True,
        )
    if len(live) == 1:
        d = live[0][0]
        return Distribution(
            d.dimension, d.scheme, d.include_others, d.codes, d.values.copy()
        )
    vec = np.zeros(len(first.codes), dtype=np.float64)
    for d, s in live:
        vec += (s / total) * d.values
    # renormalize away float drift so downstream sum checks stay exact
    return Distribution(first.dimension, first.scheme, first.include_others, first.codes, vec / vec.sum())


def cosine_similarity(a: Distribution, b: Distribution) -> float:
    if a.codes != b.codes:
        raise TaxalignError("cosine requires matching dimensions")
    if a.empty or b.empty:
        raise TaxalignError("cosine undefined for empty distributions")
    num = float(np.dot(a.values, b.values))
    return num / (float(np.linalg.norm(a.values)) * float(np.linalg.norm(b.values)))


@dataclass
class SimilarityMatrix:
    entity_ids: list[str]
    matrix: np.ndarray

    def to_dict(self) -> dict:
        return {
            "entities": self.entity_ids,
            "matrix": [[float(x) for x in row] for row in self.matrix],
        }


def similarity_matrix(entities: Sequence[tuple[str, Distribution]]) -> SimilarityMatrix:
    """All pairwise cosines; symmetric by construction, unit diagonal."""
    if len(entities) < 2:
        raise TaxalignError("similarity matrix needs at least two entities")
    n = len(entities)
    mat = np.zeros((n, n), dtype=np.float64)
    for i in range(n):
        mat[i, i] = 1.0
        for j in range(i + 1, n):
            sim = cosine_similarity(entities[i][1], entities[j][1])
            mat[i, j] = sim
            mat[j, i] = sim
    return SimilarityMatrix(entity_ids=[e[0] for e in entities], matrix=mat)


@dataclass
class DivergenceEntry:
    code: str
    prob_a: float
    prob_b: float
    diff: float

    def to_dict(self) -> dict:
        return {
            "code": self.code,
            "prob_a": self.prob_a,
            "prob_b": self.prob_b,
            "diff": self.diff,
        }


def divergence_top_n(a: Distribution, b: Distribution, n: int) -> list[DivergenceEntry]:
    """Top-n codes by absolute probability difference, ties in code order."""
    if a.codes != b.codes:
        raise TaxalignError("divergence requires matching dimensions")
    diffs = a.values - b.values
    order = sorted(range(len(a.codes)), key=lambda i: (-abs(float(diffs[i])), i))
    return [
        DivergenceEntry(
            code=a.codes[i],
            prob_a=float(a.values[i]),
            prob_b=float(b.values[i]),
            diff=float(diffs[i]),
        )
        for i in order[: max(0, n)]
    ]


@dataclass
class CrossDistribution:
    dimension_a: str
    dimension_b: str
    scheme: str
    include_others: bool
    codes_a: tuple[str, ...]
    codes_b: tuple[str, ...]
    matrix: np.ndarray
    empty: bool = False

    def marginal_a(self) -> np.ndarray:
        return self.matrix.sum(axis=1)

    def marginal_b(self) -> np.ndarray:
        return self.matrix.sum(axis=0)

    def to_dict(self) -> dict:
        return {
            "dimension_a": self.dimension_a,
            "dimension_b": self.dimension_b,
            "scheme": self.scheme,
            "include_others": self.include_others,
            "codes_a": list(self.codes_a),
            "codes_b": list(self.codes_b),
            "matrix": [[float(x) for x in row] for row in self.matrix],
            "empty": self.empty,
        }


def cross_distribution(
    code_pairs: Sequence[tuple[Sequence[str], Sequence[str]]],
    spec_a: DimensionSpec,
    spec_b: DimensionSpec,
    scheme: str,
) -> CrossDistribution:
    """Joint distribution over two dimensions.

    Per record, the joint weight is the outer product of the two weight
    vectors normalized to unit mass each; records lacking either dimension
    contribute nothing. Marginals therefore reproduce the per-dimension
    distributions for rank-preserving schemes.
    """
    if spec_a.include_others != spec_b.include_others:
        raise TaxalignError("cross dimensions must agree on include_others")
    acc = np.zeros((len(spec_a.codes), len(spec_b.codes)), dtype=np.float64)
    used = 0
    for codes_a, codes_b in code_pairs:
        kept_a = _drop_others(codes_a, spec_a)
        kept_b = _drop_others(codes_b, spec_b)
        if not kept_a or not kept_b:
            continue
        wa = sample_weight_vector(kept_a, scheme, spec_a)
        wb = sample_weight_vector(kept_b, scheme, spec_b)
        ta, tb = sum(wa.values()), sum(wb.values())
        for ca, va in wa.items():
            ia = spec_a.index(ca)
            for cb, vb in wb.items():
                acc[ia, spec_b.index(cb)] += (va / ta) * (vb / tb)
        used += 1
    if used == 0:
        return CrossDistribution(
            spec_a.name, spec_b.name, scheme, spec_a.include_others,
            spec_a.codes, spec_b.codes, acc, empty=True,
        )
    return CrossDistribution(
        spec_a.name, spec_b.name, scheme, spec_a.include_others,
        spec_a.codes, spec_b.codes, acc / used,
    )


def rollup_categories(dist: Distribution, spec: DimensionSpec) -> Distribution:
    """Coarse distribution: category mass is the sum of member fine codes."""
    if tuple(dist.codes) != spec.codes:
        raise TaxalignError("distribution does not match the dimension spec")
    vec = np.zeros(len(spec.category_codes), dtype=np.float64)
    pos = {c: i for i, c in enumerate(spec.category_codes)}
    for code, value in zip(dist.codes, dist.values):
        vec[pos[spec.category_by_code[code]]] += float(value)
    return Distribution(
        dimension=f"{dist.dimension}_category",
        scheme=dist.scheme,
        include_others=dist.include_others,
        codes=spec.category_codes,
        values=vec,
        empty=dist.empty,
    )
