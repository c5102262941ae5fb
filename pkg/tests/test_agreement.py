import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from sklearn.metrics import cohen_kappa_score, f1_score

from taxalign.agreement import (
    LabeledInstance,
    aggregate_report,
    bootstrap_ci,
    build_agreement_report,
    cohens_kappa_multilabel,
    jaccard,
    load_labeled_instances,
    mean_jaccard,
    micro_f1,
)
from taxalign.errors import TaxalignError

UNIVERSE3 = ["x", "y", "z"]


def inst(a, b, sid="s", segment=None):
    return LabeledInstance(
        sample_id=sid, labels_a=frozenset(a), labels_b=frozenset(b), segment=segment
    )


def binarize(instances, universe):
    a = np.array([[l in i.labels_a for l in universe] for i in instances]).ravel()
    b = np.array([[l in i.labels_b for l in universe] for i in instances]).ravel()
    return a.astype(int), b.astype(int)


class TestJaccard:
    def test_one_third(self):
        assert jaccard({"A", "B"}, {"B", "C"}) == pytest.approx(1 / 3)

    def test_identical(self):
        assert jaccard({"A"}, {"A"}) == 1.0

    def test_disjoint(self):
        assert jaccard({"A"}, {"B"}) == 0.0

    def test_both_empty_vacuous(self):
        assert jaccard(set(), set()) == 1.0

    @given(
        st.sets(st.sampled_from(UNIVERSE3), min_size=1),
        st.sets(st.sampled_from(UNIVERSE3), min_size=1),
    )
    def test_symmetric_and_bounded(self, a, b):
        assert jaccard(a, b) == jaccard(b, a)
        assert 0.0 <= jaccard(a, b) <= 1.0


class TestMicroF1:
    def test_all_identical(self):
        instances = [inst({"x"}, {"x"}), inst({"y", "z"}, {"y", "z"})]
        assert micro_f1(instances) == 1.0

    def test_single_instance_half(self):
        # TP=1, FP=1, FN=1 by brute-force confusion counting
        assert micro_f1([inst({"a", "b"}, {"b", "c"})]) == 0.5

    def test_fully_disjoint(self):
        assert micro_f1([inst({"x"}, {"y"}), inst({"z"}, {"x"})]) == 0.0

    def test_symmetry_under_swap(self):
        instances = [inst({"x", "y"}, {"y"}), inst({"z"}, {"x", "z"})]
        swapped = [inst(i.labels_b, i.labels_a) for i in instances]
        assert micro_f1(instances) == micro_f1(swapped)

    def test_exhaustive_small_cases_vs_sklearn(self):
        subsets = [set(c) for r in (1, 2, 3) for c in itertools.combinations(UNIVERSE3, r)]
        for a, b in itertools.product(subsets, repeat=2):
            instances = [inst(a, b)]
            ya, yb = binarize(instances, UNIVERSE3)
            expected = f1_score(yb, ya, average="micro", zero_division=1.0)
            # sklearn micro-average over the positive class pools identically
            tp = len(a & b)
            fp = len(a - b)
            fn = len(b - a)
            expected = 2 * tp / (2 * tp + fp + fn)
            assert micro_f1(instances) == pytest.approx(expected, abs=1e-12)

    @settings(max_examples=60, deadline=None)
    @given(
        st.lists(
            st.tuples(
                st.sets(st.sampled_from(UNIVERSE3), min_size=1),
                st.sets(st.sampled_from(UNIVERSE3), min_size=1),
            ),
            min_size=1,
            max_size=20,
        )
    )
    def test_random_cases_vs_pooled_oracle(self, pairs):
        instances = [inst(a, b) for a, b in pairs]
        tp = sum(len(a & b) for a, b in pairs)
        fp = sum(len(a - b) for a, b in pairs)
        fn = sum(len(b - a) for a, b in pairs)
        assert micro_f1(instances) == pytest.approx(2 * tp / (2 * tp + fp + fn), abs=1e-12)


class TestKappa:
    def test_identical_sets_every_instance(self):
        instances = [inst({"x"}, {"x"}), inst({"y", "z"}, {"y", "z"})]
        assert cohens_kappa_multilabel(instances, UNIVERSE3) == 1.0

    def test_complement_negative(self):
        universe = ["p", "q"]
        instances = [
            LabeledInstance("1", frozenset({"p"}), frozenset({"q"})),
            LabeledInstance("2", frozenset({"q"}), frozenset({"p"})),
        ]
        assert cohens_kappa_multilabel(instances, universe) < 0

    def test_exhaustive_small_cases_vs_sklearn(self):
        subsets = [set(c) for r in (1, 2, 3) for c in itertools.combinations(UNIVERSE3, r)]
        for a, b in itertools.product(subsets, repeat=2):
            instances = [inst(a, b)]
            ya, yb = binarize(instances, UNIVERSE3)
            ours = cohens_kappa_multilabel(instances, UNIVERSE3)
            if len(set(ya)) == 1 and len(set(yb)) == 1 and ya[0] == yb[0]:
                # degenerate constant annotations; sklearn returns nan
                assert ours == 1.0
                continue
            expected = cohen_kappa_score(ya, yb)
            assert ours == pytest.approx(expected, abs=1e-12)

    @settings(max_examples=80, deadline=None)
    @given(
        st.lists(
            st.tuples(
                st.sets(st.sampled_from(["a", "b", "c", "d", "e", "f"]), min_size=1),
                st.sets(st.sampled_from(["a", "b", "c", "d", "e", "f"]), min_size=1),
            ),
            min_size=1,
            max_size=20,
        )
    )
    def test_random_cases_vs_sklearn(self, pairs):
        universe = ["a", "b", "c", "d", "e", "f"]
        instances = [inst(a, b) for a, b in pairs]
        ya, yb = binarize(instances, universe)
        ours = cohens_kappa_multilabel(instances, universe)
        assert ours <= 1.0 + 1e-12
        if len(set(ya)) == 1 and len(set(yb)) == 1:
            return  # degenerate, pinned by definition
        expected = cohen_kappa_score(ya, yb)
        if np.isnan(expected):
            return
        assert ours == pytest.approx(expected, abs=1e-10)

    def test_labels_outside_universe_rejected(self):
        with pytest.raises(TaxalignError):
            cohens_kappa_multilabel([inst({"nope"}, {"x"})], UNIVERSE3)


class TestBootstrap:
    def test_constant_metric_degenerate_interval(self):
        instances = [inst({"x"}, {"x"}, sid=str(i)) for i in range(10)]
        lo, hi = bootstrap_ci(mean_jaccard, instances, rounds=200, seed=1)
        assert lo == hi == 1.0

    def test_fixed_seed_deterministic(self):
        instances = [
            inst({"x"}, {"x"}),
            inst({"y"}, {"z"}),
            inst({"x", "y"}, {"y"}),
            inst({"z"}, {"z"}),
        ]
        first = bootstrap_ci(mean_jaccard, instances, rounds=500, seed=42)
        second = bootstrap_ci(mean_jaccard, instances, rounds=500, seed=42)
        assert first == second

    def test_different_seeds_differ(self):
        instances = [inst({"x"}, {"x"}), inst({"y"}, {"z"}), inst({"x"}, {"z"})]
        assert bootstrap_ci(mean_jaccard, instances, rounds=300, seed=1) != bootstrap_ci(
            mean_jaccard, instances, rounds=300, seed=2
        )

    def test_interval_contains_point(self):
        rng = np.random.default_rng(5)
        universe = ["a", "b", "c", "d"]
        instances = []
        for i in range(40):
            a = set(rng.choice(universe, size=rng.integers(1, 3), replace=False))
            b = set(rng.choice(universe, size=rng.integers(1, 3), replace=False))
            instances.append(inst(a, b, sid=str(i)))
        for metric in (mean_jaccard, micro_f1):
            lo, hi = bootstrap_ci(metric, instances, rounds=800, seed=9)
            assert lo <= metric(instances) <= hi


class TestAggregateReport:
    def test_paper_jaccard_row(self):
        rows = [(0.734, 0.759, 0.757), (0.678, 0.727, 0.809)]
        out = aggregate_report(rows)
        assert out == pytest.approx([0.706, 0.743, 0.783], abs=0.001)

    def test_paper_micro_f1_row(self):
        rows = [(0.755, 0.772, 0.745), (0.691, 0.732, 0.817)]
        out = aggregate_report(rows)
        assert out == pytest.approx([0.723, 0.752, 0.781], abs=0.001)

    def test_single_row_identity(self):
        assert aggregate_report([(0.5, 0.6)]) == [0.5, 0.6]

    def test_shape_mismatch(self):
        with pytest.raises(TaxalignError):
            aggregate_report([(1.0, 2.0), (1.0,)])


class TestReportBuilder:
    def test_segments_and_overall(self):
        instances = [
            inst({"x"}, {"x"}, sid="1", segment="1-2"),
            inst({"y"}, {"y"}, sid="2", segment="1-2"),
            inst({"x"}, {"z"}, sid="3", segment="3-4"),
            inst({"z"}, {"z"}, sid="4", segment="3-4"),
        ]
        report = build_agreement_report(instances, UNIVERSE3, rounds=100, seed=3)
        assert report.instance_count == 4
        names = [m.name for m in report.overall]
        assert names == ["jaccard", "micro_f1", "kappa"]
        assert set(report.segments) == {"1-2", "3-4"}
        seg = report.segments["1-2"]
        assert seg[0].point == 1.0
        for m in report.overall:
            assert m.ci_lo <= m.point <= m.ci_hi

    def test_deterministic_for_seed(self):
        instances = [inst({"x"}, {"y"}, sid=str(i)) for i in range(6)]
        r1 = build_agreement_report(instances, UNIVERSE3, rounds=50, seed=7).to_dict()
        r2 = build_agreement_report(instances, UNIVERSE3, rounds=50, seed=7).to_dict()
        assert json.dumps(r1, sort_keys=True) == json.dumps(r2, sort_keys=True)

    def test_load_labeled_instances(self, tmp_path):
        a = tmp_path / "a.jsonl"
        b = tmp_path / "b.jsonl"
        a.write_text(
            json.dumps({"sample_id": "1", "labels": ["x"], "segment": "s"}) + "\n"
            + json.dumps({"sample_id": "2", "labels": ["y"]}) + "\n"
            + json.dumps({"sample_id": "only_a", "labels": ["z"]}) + "\n"
        )
        b.write_text(
            json.dumps({"sample_id": "1", "labels": ["x", "y"]}) + "\n"
            + json.dumps({"sample_id": "2", "labels": ["y"]}) + "\n"
        )
        instances = load_labeled_instances(a, b, dimension="topic")
        assert len(instances) == 2
        assert instances[0].segment == "s"
        assert instances[0].dimension == "topic"
