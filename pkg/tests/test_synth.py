"""Labeled-corpus generator: validity, determinism, file outputs."""

import json
from dataclasses import replace

import pytest

from schema_forge import synth
from schema_forge.corpus import BioTag, IntentRole, is_valid_bio, parse_bio, parse_corpus
from schema_forge.inference import canonical_intent


class TestSchemaSpec:
    def test_demo_schema_valid(self):
        spec = synth.demo_schema()
        assert IntentRole.ACTION in spec.concepts

    def test_weights_must_sum_to_one(self):
        spec = synth.demo_schema()
        with pytest.raises(ValueError):
            replace(spec, family_weights=(0.5, 0.5, 0.5, 0.5, 0.5))

    def test_filler_mention_clash_rejected(self):
        spec = synth.demo_schema()
        with pytest.raises(ValueError):
            replace(spec, fillers=spec.fillers + ("check",))

    def test_duplicate_mentions_within_role_rejected(self):
        spec = synth.demo_schema()
        bad = dict(spec.concepts)
        bad[IntentRole.ACTION] = dict(bad[IntentRole.ACTION])
        bad[IntentRole.ACTION]["Dup"] = ("check",)
        with pytest.raises(ValueError):
            replace(spec, concepts=bad)

    def test_json_round_trip(self, tmp_path):
        spec = synth.demo_schema()
        path = tmp_path / "schema.json"
        spec.save(path)
        back = synth.SchemaSpec.load(path)
        assert back.concepts == spec.concepts
        assert back.fillers == spec.fillers

    def test_gold_repository_ids_follow_canonical_roles(self):
        repo = synth.demo_schema().gold_repository()
        roles = [c.role for c in repo]
        order = [r.canonical_index for r in roles]
        assert order == sorted(order)


class TestGeneration:
    def test_deterministic(self):
        spec = synth.demo_schema()
        a = synth.generate(spec, 30, seed=4)
        b = synth.generate(spec, 30, seed=4)
        assert [e.utterance.tokens for e in a.examples] == [
            e.utterance.tokens for e in b.examples
        ]
        assert [e.intent for e in a.examples] == [e.intent for e in b.examples]

    def test_gold_tags_valid_and_aligned(self):
        corpus = synth.generate(synth.demo_schema(), 60, seed=2)
        for e in corpus.examples:
            assert is_valid_bio(e.tags)
            assert len(e.tags) == len(e.utterance.tokens)

    def test_mentions_match_annotation(self):
        corpus = synth.generate(synth.demo_schema(), 60, seed=3)
        for e in corpus.examples:
            assert e.annotated().mentions() == e.mentions

    def test_intent_uses_canonical_form(self):
        corpus = synth.generate(synth.demo_schema(), 60, seed=5)
        for e in corpus.examples:
            by_role = {}
            for m, name in zip(e.mentions, e.concept_names):
                by_role.setdefault(m.role, []).append(name)
            assert e.intent == canonical_intent(by_role)

    def test_chitchat_has_no_mentions(self):
        # rate 1.0 would leave nothing to train on, so the schema rejects it
        with pytest.raises(ValueError):
            synth.demo_schema(chitchat_rate=1.0)
        spec = synth.demo_schema(chitchat_rate=0.9)
        corpus = synth.generate(spec, 120, seed=1)
        empty = [e for e in corpus.examples if not e.mentions]
        assert len(empty) > 60
        for e in empty:
            assert all(t is BioTag.O for t in e.tags)

    def test_every_family_argument_gets_slots(self):
        # argument probabilities guarantee at least one Argument mention
        corpus = synth.generate(synth.demo_schema(), 80, seed=6)
        for e in corpus.examples:
            if e.mentions:
                assert any(m.role is IntentRole.ARGUMENT for m in e.mentions)


class TestCorpusFiles:
    def test_write_products_parse_back(self, tmp_path):
        corpus = synth.generate(synth.demo_schema(), 25, seed=7)
        corpus.write(tmp_path)
        utts = parse_corpus(tmp_path / "corpus.jsonl")
        assert len(utts) == 25
        tagged = parse_bio(tmp_path / "gold_tags.conll")
        assert len(tagged) == 25
        results = [
            json.loads(line)
            for line in (tmp_path / "gold_results.jsonl").read_text().splitlines()
        ]
        assert {r["id"] for r in results} == {u.id for u in utts}
        schema = synth.SchemaSpec.load(tmp_path / "schema.json")
        assert schema.concepts == synth.demo_schema().concepts
        repo_path = tmp_path / "gold_concepts.json"
        assert repo_path.exists()


class TestProceduralSchema:
    def test_tokens_globally_unique(self):
        spec = synth.make_schema(seed=11)
        toks = list(spec.fillers)
        for by_name in spec.concepts.values():
            for lex in by_name.values():
                for m in lex:
                    toks.extend(m.split())
        # modifiers repeat within one concept's lexicon (each pairs with the
        # stem), so uniqueness is over distinct tokens per concept
        stems = [name.lower() for by in spec.concepts.values() for name in by]
        assert len(set(stems)) == len(stems)
        assert not set(spec.fillers) & set(t for t in toks if t not in spec.fillers)

    def test_single_stem_plus_modifiers(self):
        spec = synth.make_schema(seed=1, modifiers_per_concept=10)
        for by_name in spec.concepts.values():
            for name, lex in by_name.items():
                singles = [m for m in lex if len(m.split()) == 1]
                assert singles == [name.lower()]
                assert len(lex) == 11

    def test_split_keeps_stems(self):
        spec = synth.make_schema(seed=2)
        kept, held = synth.split_lexicons(spec, 0.3, seed=2)
        for role, by_name in kept.concepts.items():
            for name, lex in by_name.items():
                assert name.lower() in lex
        for role, by_name in held.items():
            for name, mentions in by_name.items():
                assert all(len(m.split()) > 1 for m in mentions)
                assert not set(mentions) & set(kept.concepts[role][name])

    def test_split_fraction_bounds(self):
        with pytest.raises(ValueError):
            synth.split_lexicons(synth.make_schema(), 0.0)
        with pytest.raises(ValueError):
            synth.split_lexicons(synth.make_schema(), 1.0)
