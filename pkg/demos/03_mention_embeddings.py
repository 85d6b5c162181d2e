"""
Embedding mentions for similarity search
========================================

Mentions become vectors three ways: plain skip-gram over stream items,
the phrase variant that gives multi-item n-grams their own vectors, and
a character-ngram CNN that can embed surfaces never seen in training.
"""

import numpy as np

from schema_forge import synth
from schema_forge.embeddings import (
    EmbedConfig,
    mentionize_corpus,
    train_cnn_encoder,
    train_skipgram,
)

spec = synth.make_schema(seed=7)
corpus = synth.generate(spec, 2_000, seed=7)
tagged = corpus.annotated()

# ---------------------------------------------------------------------------
# mentionize_corpus rewrites each utterance so a multi-token mention
# collapses into one stream item. Embeddings are then learned per
# mention rather than per word.
# ---------------------------------------------------------------------------

streams = mentionize_corpus(tagged)
print("stream sample:", [(t.text, t.is_mention) for t in streams[0][:5]])

# ---------------------------------------------------------------------------
# Skip-gram with negative sampling. Small dimensions keep the demo
# fast; real runs use the defaults.
# ---------------------------------------------------------------------------

cfg = EmbedConfig(dim=32, window=2, negatives=8, epochs=2, seed=7)
table = train_skipgram(streams, cfg, mode="w2v")
print("vocabulary:", len(table), "items, dim", table.dim)


def rank_neighbors(table, probe, k=3):
    v = table.embed(probe)
    v = v / np.linalg.norm(v)
    sims = []
    for surface, vec in table.vectors.items():
        if surface == probe:
            continue
        sims.append((float(vec @ v / np.linalg.norm(vec)), surface))
    return sorted(sims, reverse=True)[:k]


probe = next(t.text for t in streams[0] if t.is_mention)
print("neighbors of", repr(probe))
for sim, surface in rank_neighbors(table, probe):
    print(f"  {sim:6.3f}  {surface}")

# The p2v mode adds stream n-grams to the vocabulary, so recurring
# multi-item phrases get vectors of their own.
phrases = train_skipgram(streams, cfg, mode="p2v")
print("p2v adds", len(phrases) - len(table), "phrase entries")

# ---------------------------------------------------------------------------
# The CNN encoder composes character bigrams, so it embeds unseen
# surfaces too. train_cnn_encoder distills it against skip-gram output
# vectors over the same streams.
# ---------------------------------------------------------------------------

trained = train_cnn_encoder(streams, cfg, subword_dim=16, feature_maps=8, widths=(1, 2))
enc = trained.encoder
print("encoder dim:", enc.dim, "| held-out losses:", len(trained.held_out_losses))

known = enc.embed(probe)
unseen = enc.embed(probe + "s")  # morphological variant never in the corpus
cos = float(known @ unseen / (np.linalg.norm(known) * np.linalg.norm(unseen)))
print(f"cosine({probe!r}, {probe + 's'!r}) = {cos:.3f}")

# Tables round-trip through a compact binary format.
table.save("/tmp/demo_vectors.bin")
from schema_forge.embeddings import EmbeddingTable

back = EmbeddingTable.load("/tmp/demo_vectors.bin")
print("round trip:", len(back) == len(table), back.method)
