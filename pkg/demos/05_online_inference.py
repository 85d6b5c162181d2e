"""
Online inference and concept expansion
======================================

Resolve tagged mentions to concepts (exact match, then cosine voting),
compose intent and slots against the mined patterns, and grow the
repository from the pool of mentions nothing matched.
"""

import numpy as np

from schema_forge import synth
from schema_forge.corpus import IntentRole, Utterance
from schema_forge.embeddings import EmbedConfig, mentionize_corpus, train_cnn_encoder
from schema_forge.inference import (
    UNCATEGORIZED,
    ConInferConfig,
    UncategorizedPool,
    con_infer,
    expand_concepts,
    infer,
    neighbors,
)
from schema_forge.irl import TaggerConfig, train_tagger
from schema_forge.patterns import extract_role_sets, mine_patterns

# ---------------------------------------------------------------------------
# Hold 30% of each concept's lexicon out of training. The repository
# only knows the kept surfaces; the held ones simulate paraphrases
# arriving at inference time.
# ---------------------------------------------------------------------------

full = synth.make_schema(seed=11)
kept_spec, held = synth.split_lexicons(full, holdout_fraction=0.3, seed=11)
corpus = synth.generate(kept_spec, 1_500, seed=11)
tagged = corpus.annotated()

repo = kept_spec.gold_repository()
patterns = mine_patterns(extract_role_sets(tagged))
tagger = train_tagger(tagged, TaggerConfig(epochs=5, seed=0))
trained = train_cnn_encoder(
    mentionize_corpus(tagged),
    EmbedConfig(dim=128, negatives=16, epochs=3, seed=11),
    subword_dim=32,
    feature_maps=32,
)
enc = trained.encoder
print(len(repo), "concepts |", len(patterns.patterns), "patterns | encoder dim", enc.dim)

# ---------------------------------------------------------------------------
# con_infer: known surfaces hit the repository index directly; held-out
# surfaces fall back to a k=5 cosine vote with similarity floor 0.2.
# ---------------------------------------------------------------------------

name_to_id = {(c.role, c.name): c.id for c in repo.concepts}
pairs, want = [], []
for role in sorted(held, key=lambda r: r.canonical_index):
    for concept_name, surfaces in sorted(held[role].items()):
        for s in surfaces:
            pairs.append((s, role))
            want.append(name_to_id[(role, concept_name)])

got = con_infer(pairs, repo, enc, ConInferConfig(delta=0.2, k=5))
acc = float(np.mean([g == w for g, w in zip(got, want)]))
print(f"held-out surfaces resolved: {len(pairs)}, accuracy {acc:.3f}")

probe, probe_role = pairs[0]
print(f"nearest repository mentions to unseen {probe!r}:")
for n in neighbors(probe, probe_role, repo, enc, k=3):
    print(f"  {n['similarity']:6.3f}  {n['mention']!r} (concept {n['concept_id']})")

# ---------------------------------------------------------------------------
# infer() runs the full path on raw utterances: tag, resolve, compose.
# The intent name joins role concept names in a fixed role order, with
# Argument concepts parenthesized as the slot group.
# ---------------------------------------------------------------------------

sample = corpus.utterances()[0]
result = infer(sample, tagger, repo, enc, patterns)
print("utterance:", sample.raw_text)
print("  status:", result.status, "| intent:", result.intent)
for slot, values in sorted(result.slots.items()):
    print("  slot", slot, "=", list(values))

# ---------------------------------------------------------------------------
# Mentions that clear neither path land in a review pool. Any object
# with an embed() method works as the embedder; a fixed lookup table
# returns None for out-of-vocabulary surfaces, which is what routes a
# mention to the pool instead of forcing a concept.
# ---------------------------------------------------------------------------

from schema_forge.embeddings import EmbeddingTable

known_only = EmbeddingTable(
    method="cnn",
    dim=enc.dim,
    vectors={m: enc.embed(m) for c in repo.concepts for m in c.mentions},
)
pool = UncategorizedPool()
junk = [
    ("zzquery one", IntentRole.ARGUMENT),
    ("zzquery two", IntentRole.ARGUMENT),
    ("zzquery three", IntentRole.ARGUMENT),
]
ids = con_infer(junk, repo, known_only, ConInferConfig(delta=0.2, k=5), pool)
print("junk resolved to:", ids, "| pool size:", len(pool))

# Expansion clusters the pooled mentions per role (here with the CNN,
# which can embed them) into provisional concepts with fresh ids.
grown, added = expand_concepts(pool, repo, enc)
for c in added:
    print(f"  new concept {c.id} {c.name!r} role={c.role.value} mentions={list(c.mentions)}")
print("grown repository:", len(grown), "concepts (was", f"{len(repo)})")
