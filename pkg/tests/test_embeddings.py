"""Embedding trainers: vocab handling, persistence, gradients, determinism."""

import numpy as np
import pytest

from schema_forge import embeddings as emb
from schema_forge.corpus import AnnotatedUtterance, BioTag, IntentRole, Utterance


def annotate(tokens, tags):
    u = Utterance("u", tuple(tokens), " ".join(tokens))
    return AnnotatedUtterance(u, tuple(tags))


def toy_streams():
    a = annotate(
        ["check", "my", "insurance", "policy", "now"],
        [BioTag.B_ACTION, BioTag.O, BioTag.B_ARGUMENT, BioTag.I_ARGUMENT, BioTag.O],
    )
    b = annotate(
        ["verify", "insurance", "policy", "today"],
        [BioTag.B_ACTION, BioTag.B_ARGUMENT, BioTag.I_ARGUMENT, BioTag.O],
    )
    return emb.mentionize_corpus([a, b])


class TestMentionize:
    def test_spans_collapse_to_single_items(self):
        streams = toy_streams()
        texts = [[t.text for t in s] for s in streams]
        assert texts[0] == ["check", "my", "insurance policy", "now"]
        flags = [[t.is_mention for t in s] for s in streams]
        assert flags[0] == [True, False, True, False]

    def test_collect_mentions_counts(self):
        a = annotate(
            ["check", "check"], [BioTag.B_ACTION, BioTag.B_ACTION]
        )
        counts = emb.collect_mentions([a, a])
        assert counts[IntentRole.ACTION]["check"] == 4


class TestConfig:
    def test_rejects_bad_dim(self):
        with pytest.raises(ValueError):
            emb.EmbedConfig(dim=0)

    def test_rejects_bad_window(self):
        with pytest.raises(ValueError):
            emb.EmbedConfig(window=0)


class TestSkipgram:
    def test_vocabulary_covers_stream_items(self):
        table = emb.train_skipgram(toy_streams(), emb.EmbedConfig(dim=8, negatives=2, epochs=1))
        assert "insurance policy" in table
        assert "check" in table
        assert table.embed("never seen") is None

    def test_deterministic(self):
        cfg = emb.EmbedConfig(dim=8, negatives=2, epochs=2, seed=3)
        a = emb.train_skipgram(toy_streams(), cfg)
        b = emb.train_skipgram(toy_streams(), cfg)
        for key in a.vectors:
            assert np.array_equal(a.vectors[key], b.vectors[key])

    def test_p2v_adds_ngrams(self):
        cfg = emb.EmbedConfig(dim=8, negatives=2, epochs=1, ngram_order=2)
        table = emb.train_skipgram(toy_streams(), cfg, mode="p2v")
        # bigrams over stream items join with spaces
        assert "check my" in table
        assert "my insurance policy" in table

    def test_bad_mode_rejected(self):
        with pytest.raises(ValueError):
            emb.train_skipgram(toy_streams(), emb.EmbedConfig(dim=4), mode="glove")

    def test_binary_round_trip(self, tmp_path):
        table = emb.train_skipgram(toy_streams(), emb.EmbedConfig(dim=8, negatives=2, epochs=1))
        path = tmp_path / "table.bin"
        table.save(path)
        back = emb.EmbeddingTable.load(path)
        assert set(back.vectors) == set(table.vectors)
        for k, v in table.vectors.items():
            assert np.array_equal(back.vectors[k], v.astype(np.float32).astype(np.float64))

    def test_tsv_export(self, tmp_path):
        table = emb.train_skipgram(toy_streams(), emb.EmbedConfig(dim=4, negatives=2, epochs=1))
        path = tmp_path / "table.tsv"
        table.save_tsv(path)
        lines = path.read_text(encoding="utf-8").strip().splitlines()
        assert len(lines) == len(table)
        assert len(lines[0].split("\t")) == 5


class TestNegativeSampling:
    def test_positive_never_drawn(self):
        rng = np.random.default_rng(0)
        cdf = emb._negative_cdf(np.array([5.0, 3.0, 2.0]), emb.EmbedConfig(negatives=4))
        for _ in range(200):
            negs = emb._sample_negatives(cdf, 1, 4, rng)
            assert 1 not in negs


class TestCnnEncoder:
    def test_unknown_subword_maps_to_unk(self):
        enc = emb.new_cnn_encoder(["abc", "def"], subword_dim=4, feature_maps=2, widths=(1, 2))
        ids = enc.subword_ids("abc zzz")
        assert ids[0] == enc.vocab["abc"]
        assert ids[1] == 0

    def test_empty_mention_rejected(self):
        enc = emb.new_cnn_encoder(["abc"], subword_dim=4, feature_maps=2, widths=(1,))
        with pytest.raises(ValueError):
            enc.subword_ids("   ")

    def test_truncation_at_max_len(self):
        enc = emb.new_cnn_encoder(["a"], subword_dim=4, feature_maps=2, widths=(1,), max_len=3)
        ids = enc.subword_ids("a a a a a")
        assert len(ids) == 3

    def test_embedding_dim(self):
        enc = emb.new_cnn_encoder(["a"], subword_dim=4, feature_maps=3, widths=(1, 2))
        assert enc.dim == 6
        assert enc.embed("a").shape == (6,)

    def test_save_load_exact(self, tmp_path):
        enc = emb.new_cnn_encoder(["abc", "de"], subword_dim=4, feature_maps=2, widths=(1, 2), seed=5)
        path = tmp_path / "enc.npz"
        enc.save(path)
        back = emb.SubwordCnnEncoder.load(path)
        assert back.vocab == enc.vocab
        assert np.array_equal(back.E, enc.E)
        for w in enc.filters:
            assert np.array_equal(back.filters[w][0], enc.filters[w][0])
        assert np.array_equal(back.embed("abc de"), enc.embed("abc de"))


class TestCnnGradients:
    def test_matches_finite_differences(self):
        rng = np.random.default_rng(1)
        enc = emb.new_cnn_encoder(
            ["aa", "bb", "cc"], subword_dim=3, feature_maps=2, widths=(1, 2), seed=1
        )
        out = rng.standard_normal((5, enc.dim)) * 0.3
        batch = [
            emb.CnnSample(center_ids=(1, 2), positive=0, negatives=(3, 4)),
            emb.CnnSample(center_ids=(2,), positive=1, negatives=(0,)),
        ]
        loss, grads = emb.cnn_loss_and_gradients(enc, out, batch)
        h = 1e-6

        def fd(get, set_, idx):
            orig = get()
            set_(orig + h)
            hi = emb.cnn_loss(enc, out, batch)
            set_(orig - h)
            lo = emb.cnn_loss(enc, out, batch)
            set_(orig)
            return (hi - lo) / (2 * h)

        worst = 0.0
        for (i, j) in [(1, 0), (2, 2), (0, 1)]:
            got = grads.E[i, j]
            want = fd(lambda: enc.E[i, j], lambda v: enc.E.__setitem__((i, j), v), None)
            worst = max(worst, abs(got - want) / max(abs(got), abs(want), 1e-3))
        W, _ = enc.filters[2]
        got = grads.filters[2][0][0, 1]
        want = fd(lambda: W[0, 1], lambda v: W.__setitem__((0, 1), v), None)
        worst = max(worst, abs(got - want) / max(abs(got), abs(want), 1e-3))
        got = grads.out[0, 1]
        want = fd(lambda: out[0, 1], lambda v: out.__setitem__((0, 1), v), None)
        worst = max(worst, abs(got - want) / max(abs(got), abs(want), 1e-3))
        assert worst <= 1e-4


class TestCnnTraining:
    def test_held_out_loss_decreases(self, demo_corpus):
        spec, corpus = demo_corpus
        annotated = [e.annotated() for e in corpus.examples]
        streams = emb.mentionize_corpus(annotated)
        cfg = emb.EmbedConfig(dim=8, negatives=4, epochs=3, seed=0)
        res = emb.train_cnn_encoder(streams, cfg, subword_dim=8, feature_maps=2)
        assert len(res.held_out_losses) == 3
        assert res.held_out_losses[-1] < res.held_out_losses[0]

    def test_deterministic(self):
        cfg = emb.EmbedConfig(dim=4, negatives=2, epochs=1, seed=9)
        a = emb.train_cnn_encoder(toy_streams(), cfg, subword_dim=4, feature_maps=1)
        b = emb.train_cnn_encoder(toy_streams(), cfg, subword_dim=4, feature_maps=1)
        assert np.array_equal(a.encoder.E, b.encoder.E)
        assert np.array_equal(a.out_vectors, b.out_vectors)

    def test_unseen_mention_still_embeds(self, tiny_models):
        # subword sharing gives every whitespace mention a vector
        v = tiny_models.encoder.embed("look up contract")
        assert v.shape == (tiny_models.encoder.dim,)
        assert np.isfinite(v).all()
