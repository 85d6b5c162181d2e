"""Metric arithmetic checked against hand counts and entropy identities."""

import math

import pytest
from hypothesis import given, strategies as st

from schema_forge.corpus import AnnotatedUtterance, BioTag, Utterance
from schema_forge.evaluation import (
    ClusteringReport,
    clustering_scores,
    format_report,
    intent_scores,
    slot_scores,
    token_prf,
)


def annotate(tokens, tags):
    u = Utterance("u", tuple(tokens), " ".join(tokens))
    return AnnotatedUtterance(u, tuple(tags))


class TestTokenPrf:
    def test_perfect(self):
        a = annotate(["a", "b"], [BioTag.B_ACTION, BioTag.O])
        rep = token_prf([a], [a])
        assert rep.precision == rep.recall == rep.f1 == 1.0

    def test_all_outside_prediction_has_zero_recall(self):
        g = annotate(["a", "b"], [BioTag.B_ACTION, BioTag.I_ACTION])
        p = annotate(["a", "b"], [BioTag.O, BioTag.O])
        rep = token_prf([g], [p])
        assert rep.recall == 0.0
        assert rep.f1 == 0.0

    def test_boundary_disagreement_not_penalized(self):
        # B vs I on the same role still counts for that role
        g = annotate(["a", "b"], [BioTag.B_ACTION, BioTag.I_ACTION])
        p = annotate(["a", "b"], [BioTag.B_ACTION, BioTag.B_ACTION])
        assert token_prf([g], [p]).f1 == 1.0

    def test_hand_counted_fixture(self):
        # 10 tokens; two errors: token 3 Action->O (fn), token 7 O->Problem (fp)
        g = annotate(
            list("abcdefghij"),
            [
                BioTag.B_ACTION,
                BioTag.I_ACTION,
                BioTag.O,
                BioTag.B_ACTION,
                BioTag.B_PROBLEM,
                BioTag.I_PROBLEM,
                BioTag.O,
                BioTag.O,
                BioTag.B_ARGUMENT,
                BioTag.O,
            ],
        )
        p = annotate(
            list("abcdefghij"),
            [
                BioTag.B_ACTION,
                BioTag.I_ACTION,
                BioTag.O,
                BioTag.O,
                BioTag.B_PROBLEM,
                BioTag.I_PROBLEM,
                BioTag.O,
                BioTag.B_PROBLEM,
                BioTag.B_ARGUMENT,
                BioTag.O,
            ],
        )
        rep = token_prf([g], [p])
        act = rep.per_class["Action"]
        assert act.precision == 1.0
        assert act.recall == pytest.approx(2 / 3)
        prob = rep.per_class["Problem"]
        assert prob.precision == pytest.approx(2 / 3)
        assert prob.recall == 1.0
        arg = rep.per_class["Argument"]
        assert arg.f1 == 1.0
        # overall = support-weighted mean: supports Action 3, Problem 2, Argument 1
        want_p = (3 * 1.0 + 2 * (2 / 3) + 1 * 1.0) / 6
        assert rep.precision == pytest.approx(want_p)

    def test_weighted_overall_identity(self, tiny_models):
        gold = tiny_models.annotated[:50]
        pred = [
            annotate(a.utterance.tokens, [BioTag.O] * len(a.tags))
            if i % 3 == 0
            else a
            for i, a in enumerate(gold)
        ]
        rep = token_prf(gold, pred)
        total = sum(c.support for c in rep.per_class.values())
        want_f1 = sum(c.f1 * c.support for c in rep.per_class.values()) / total
        assert rep.f1 == pytest.approx(want_f1, abs=1e-12)

    def test_length_mismatch_rejected(self):
        g = annotate(["a"], [BioTag.O])
        p = annotate(["a", "b"], [BioTag.O, BioTag.O])
        with pytest.raises(ValueError):
            token_prf([g], [p])


class TestIntentScores:
    def test_perfect(self):
        assert intent_scores(["A", "B"], ["A", "B"]).f1 == 1.0

    def test_constant_prediction_closed_form(self):
        # 2 balanced classes, predict all A: A gets f1 2/3, B gets 0
        gold = ["A", "B", "A", "B"]
        pred = ["A", "A", "A", "A"]
        rep = intent_scores(gold, pred)
        assert rep.f1 == pytest.approx((2 / 3 + 0.0) / 2)

    def test_three_class_confusion(self):
        gold = ["A", "A", "B", "B", "C"]
        pred = ["A", "B", "B", "C", "C"]
        rep = intent_scores(gold, pred)
        # A: tp1 fp0 fn1 -> f1 2/3; B: tp1 fp1 fn1 -> f1 1/2; C: tp1 fp1 fn0 -> f1 2/3
        assert rep.f1 == pytest.approx((2 / 3 + 1 / 2 + 2 / 3) / 3)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            intent_scores([], [])

    def test_classes_come_from_gold(self):
        rep = intent_scores(["A"], ["Z"])
        assert set(rep.per_class) == {"A"}


class TestSlotScores:
    def test_identical(self):
        slots = [{"Doc": ("passport",)}]
        assert slot_scores(slots, slots).f1 == 1.0

    def test_empty_prediction(self):
        rep = slot_scores([{"Doc": ("x",)}], [{}])
        assert rep.precision == 0.0
        assert rep.recall == 0.0

    def test_partial_overlap(self):
        gold = [{"Doc": ("a", "b"), "Date": ("c",)}]
        pred = [{"Doc": ("a",), "Date": ("z",)}]
        rep = slot_scores(gold, pred)
        assert rep.precision == pytest.approx(0.5)
        assert rep.recall == pytest.approx(1 / 3)
        assert rep.f1 == pytest.approx(0.4)


class TestClusteringScores:
    def test_identical_labels(self):
        rep = clustering_scores([0, 0, 1, 1], [5, 5, 9, 9])
        assert rep.homogeneity == pytest.approx(1.0)
        assert rep.completeness == pytest.approx(1.0)
        assert rep.v_measure == pytest.approx(1.0)

    def test_single_cluster_prediction(self):
        rep = clustering_scores([0, 0, 1, 1], [0, 0, 0, 0])
        assert rep.homogeneity == pytest.approx(0.0)
        assert rep.completeness == pytest.approx(1.0)

    def test_all_singleton_prediction(self):
        rep = clustering_scores([0, 0, 1, 1], [0, 1, 2, 3])
        assert rep.homogeneity == pytest.approx(1.0)
        assert rep.completeness < 1.0

    def test_relabeling_invariance(self):
        a = clustering_scores([0, 0, 1, 2], [3, 3, 1, 0])
        b = clustering_scores([7, 7, 9, 5], ["x", "x", "y", "z"])
        assert a.v_measure == pytest.approx(b.v_measure, abs=1e-15)

    @given(
        st.lists(st.integers(min_value=0, max_value=3), min_size=2, max_size=40),
        st.data(),
    )
    def test_harmonic_identity(self, gold, data):
        pred = data.draw(
            st.lists(
                st.integers(min_value=0, max_value=3),
                min_size=len(gold),
                max_size=len(gold),
            )
        )
        rep = clustering_scores(gold, pred)
        s = rep.homogeneity + rep.completeness
        want = 2 * rep.homogeneity * rep.completeness / s if s else 0.0
        assert abs(rep.v_measure - want) <= 1e-12
        assert 0.0 <= rep.v_measure <= 1.0 + 1e-12

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            clustering_scores([0], [0, 1])

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            clustering_scores([], [])


class TestFormatting:
    def test_prf_table_aligns(self):
        rep = intent_scores(["A", "B"], ["A", "B"])
        text = format_report(rep, "intent")
        assert "intent" in text
        assert "macro" in text

    def test_cluster_table(self):
        rep = ClusteringReport(1.0, 1.0, 1.0)
        text = format_report(rep)
        assert "v-measure" in text
