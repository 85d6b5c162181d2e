"""Role tagger: structural legality, learnability, persistence, rules."""

import numpy as np
import pytest

from schema_forge import irl
from schema_forge.corpus import (
    AnnotatedUtterance,
    BioTag,
    IntentRole,
    Utterance,
    is_valid_bio,
)
from schema_forge.evaluation import token_prf
from schema_forge import synth


class TestStructuralMask:
    def test_inside_needs_matching_begin(self):
        mask = irl._structural_mask()
        idx = irl.TAG_INDEX
        # O -> I-Action is illegal
        assert mask[idx[BioTag.O.value], idx[BioTag.I_ACTION.value]] == -np.inf
        # B-Action -> I-Action is legal
        assert mask[idx[BioTag.B_ACTION.value], idx[BioTag.I_ACTION.value]] == 0.0
        # B-Action -> I-Problem is illegal
        assert mask[idx[BioTag.B_ACTION.value], idx[BioTag.I_PROBLEM.value]] == -np.inf
        # I-Action -> I-Action continues
        assert mask[idx[BioTag.I_ACTION.value], idx[BioTag.I_ACTION.value]] == 0.0

    def test_predictions_always_valid(self, tiny_models):
        for a in tiny_models.annotated[:40]:
            out = irl.tag(tiny_models.tagger, a.utterance)
            assert is_valid_bio(out.tags)


class TestTraining:
    def test_fits_training_data(self, tiny_models):
        assert tiny_models.tagger.training_accuracy >= 0.99

    def test_deterministic(self, tiny_models):
        cfg = irl.TaggerConfig(epochs=2, seed=0)
        a = irl.train_tagger(tiny_models.annotated[:50], cfg)
        b = irl.train_tagger(tiny_models.annotated[:50], cfg)
        u = tiny_models.annotated[3].utterance
        assert irl.tag(a, u).tags == irl.tag(b, u).tags
        assert a.training_accuracy == b.training_accuracy

    def test_generalizes_within_schema(self, demo_corpus):
        spec, corpus = demo_corpus
        extra = synth.generate(spec, 80, seed=77, id_prefix="ho")
        annotated = [e.annotated() for e in corpus.examples]
        tagger = irl.train_tagger(annotated, irl.TaggerConfig(epochs=6, seed=0))
        gold = [e.annotated() for e in extra.examples]
        pred = [irl.tag(tagger, g.utterance) for g in gold]
        assert token_prf(gold, pred).f1 >= 0.95

    def test_rejects_invalid_gold(self):
        u = Utterance("u", ("a",), "a")
        bad = AnnotatedUtterance(u, (BioTag.I_ACTION,))
        with pytest.raises(ValueError):
            irl.train_tagger([bad])

    def test_empty_utterance_rejected(self, tiny_models):
        with pytest.raises(ValueError):
            irl.tag(tiny_models.tagger, Utterance("u", (), ""))


class TestPersistence:
    def test_round_trip_predictions(self, tiny_models, tmp_path):
        path = tmp_path / "tagger.json"
        tiny_models.tagger.save(path)
        back = irl.TaggerModel.load(path)
        for a in tiny_models.annotated[:25]:
            assert irl.tag(back, a.utterance).tags == irl.tag(
                tiny_models.tagger, a.utterance
            ).tags

    def test_load_rejects_other_formats(self, tmp_path):
        path = tmp_path / "nope.json"
        path.write_text('{"format": "something-else"}', encoding="utf-8")
        with pytest.raises(ValueError):
            irl.TaggerModel.load(path)


def pos_utterance(tokens, pos):
    return irl.PosTaggedUtterance(
        Utterance("u", tuple(tokens), " ".join(tokens)), tuple(pos)
    )


class TestRuleTagger:
    def test_negated_verb_becomes_problem(self):
        p = pos_utterance(["problem", "not", "solved"], ["NN", "RB", "VBN"])
        out = irl.rule_tag(p)
        assert out.tags == (BioTag.B_ARGUMENT, BioTag.B_PROBLEM, BioTag.I_PROBLEM)

    def test_plain_verb_becomes_action(self):
        p = pos_utterance(["check", "order"], ["VB", "NN"])
        out = irl.rule_tag(p)
        assert out.tags == (BioTag.B_ACTION, BioTag.B_ARGUMENT)

    def test_interrogative_becomes_question(self):
        p = pos_utterance(["how", "to", "renew"], ["WRB", "TO", "VB"])
        out = irl.rule_tag(p)
        assert out.tags[0] is BioTag.B_QUESTION
        assert out.tags[2] is BioTag.B_ACTION

    def test_negation_without_verb_stays_out(self):
        p = pos_utterance(["not", "good"], ["RB", "JJ"])
        out = irl.rule_tag(p)
        assert out.tags == (BioTag.O, BioTag.O)

    def test_noun_run_is_one_argument(self):
        p = pos_utterance(["insurance", "policy"], ["NN", "NN"])
        out = irl.rule_tag(p)
        assert out.tags == (BioTag.B_ARGUMENT, BioTag.I_ARGUMENT)

    def test_provenance_marks_rules(self):
        p = pos_utterance(["check"], ["VB"])
        assert irl.rule_tag(p).provenance == "rules"
