"""
The whole pipeline on one small corpus
======================================

Tag, embed, cluster, mine, infer. Concept groupings are induced from
scratch, so before scoring, each induced concept is mapped to the gold
concept its mentions overlap most.
"""

import numpy as np

from schema_forge import synth
from schema_forge.clustering import (
    ConceptRepository,
    build_knn_graph,
    lpa_cluster,
    name_concepts,
)
from schema_forge.embeddings import (
    EmbedConfig,
    collect_mentions,
    mentionize_corpus,
    train_cnn_encoder,
)
from schema_forge.evaluation import intent_scores, slot_scores, token_prf
from schema_forge.inference import infer, is_infer
from schema_forge.irl import TaggerConfig, tag, train_tagger
from schema_forge.patterns import extract_role_sets, mine_patterns

# A compact schema keeps this run around ten seconds.
spec = synth.make_schema(seed=3, n_action=3, n_problem=2, n_argument=4, n_question=2)
train = synth.generate(spec, 1_500, seed=31, id_prefix="tr")
held = synth.generate(spec, 300, seed=32, id_prefix="te")
annotated = train.annotated()

# ---------------------------------------------------------------------------
# Stage 1: sequence tagger over the four roles.
# ---------------------------------------------------------------------------

tagger = train_tagger(annotated, TaggerConfig(epochs=5, seed=0))
tag_rep = token_prf(held.annotated(), [tag(tagger, u) for u in held.utterances()])
print(f"token tagging F1 {tag_rep.f1:.3f} on {len(held.examples)} held-out utterances")

# ---------------------------------------------------------------------------
# Stage 2: embed the mention inventory with the subword CNN.
# ---------------------------------------------------------------------------

counts = collect_mentions(annotated)
trained = train_cnn_encoder(
    mentionize_corpus(annotated),
    EmbedConfig(dim=128, negatives=16, epochs=3, seed=0),
    subword_dim=32,
    feature_maps=32,
)
encoder = trained.encoder

# ---------------------------------------------------------------------------
# Stage 3: cluster each role's mentions and name the concepts.
# ---------------------------------------------------------------------------

concepts = []
for role in sorted(counts, key=lambda r: r.canonical_index):
    mentions = sorted(counts[role])
    X = np.stack([encoder.embed(m) for m in mentions])
    labels = lpa_cluster(build_knn_graph(X, k=min(5, len(mentions) - 1)))
    concepts.extend(
        name_concepts(labels, mentions, role,
                      frequencies=counts[role], id_start=len(concepts))
    )
repo = ConceptRepository(concepts)
gold = spec.gold_repository()
print(f"induced {len(repo)} concepts (gold has {len(gold)})")

# ---------------------------------------------------------------------------
# Stage 4: mine the role patterns.
# ---------------------------------------------------------------------------

patterns = mine_patterns(extract_role_sets(annotated))
print("patterns retained:", len(patterns.patterns))

# ---------------------------------------------------------------------------
# Stage 5: infer held-out utterances and score against gold labels.
# Induced names are arbitrary member surfaces, so map each induced
# concept to the gold concept sharing the most mentions first.
# ---------------------------------------------------------------------------


def best_gold_name(c):
    best, best_hit = None, 0
    for g in gold.role_concepts(c.role):
        hit = len(set(c.mentions) & set(g.mentions))
        if hit > best_hit:
            best, best_hit = g.name, hit
    return best


name_map = {c.id: best_gold_name(c) for c in repo}

pred_intents, pred_slots, pred_tagged = [], [], []
for u in held.utterances():
    r = infer(u, tagger, repo, encoder, patterns)
    triples = [(m.surface, m.role, name_map.get(m.concept_id)) for m in r.mentions]
    mapped = is_infer(triples, patterns, r.utterance_id)
    pred_intents.append(mapped.intent)
    pred_slots.append(mapped.slots)

intent_rep = intent_scores([e.intent for e in held.examples], pred_intents)
slot_rep = slot_scores([e.slots for e in held.examples], pred_slots)

print(f"intent macro-F1 {intent_rep.f1:.3f}")
print(f"slot F1         {slot_rep.f1:.3f}")
