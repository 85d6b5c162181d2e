"""Shared fixtures: one tiny labeled corpus and models trained on it.

Everything here is deliberately small; tests that measure quality or
speed build their own data at the scale they need.
"""

from types import SimpleNamespace

import pytest

from schema_forge import embeddings, irl, patterns, synth


@pytest.fixture(scope="session")
def demo_corpus():
    spec = synth.demo_schema()
    return spec, synth.generate(spec, 200, seed=1)


@pytest.fixture(scope="session")
def tiny_models(demo_corpus):
    """Tagger, encoder, gold repository and patterns for the demo schema."""
    spec, corpus = demo_corpus
    annotated = [e.annotated() for e in corpus.examples]
    tagger = irl.train_tagger(annotated, irl.TaggerConfig(epochs=4, seed=0))
    streams = embeddings.mentionize_corpus(annotated)
    cfg = embeddings.EmbedConfig(dim=16, negatives=4, epochs=2, seed=0)
    res = embeddings.train_cnn_encoder(streams, cfg, subword_dim=8, feature_maps=4)
    return SimpleNamespace(
        spec=spec,
        annotated=annotated,
        tagger=tagger,
        encoder=res.encoder,
        repo=spec.gold_repository(),
        patterns=patterns.mine_patterns(patterns.extract_role_sets(annotated)),
    )
