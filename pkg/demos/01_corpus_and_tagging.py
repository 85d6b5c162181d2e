"""
Corpus formats and intent-role tagging
======================================

Round-trips the two on-disk formats, shows the repair rule for broken
tag sequences, projects tags from part-of-speech rules, and trains the
perceptron tagger on synthetic data.
"""

from schema_forge import synth
from schema_forge.corpus import (
    BioTag,
    IntentRole,
    Utterance,
    decode_bio,
    parse_bio,
    repair_tags,
    DEFAULT_TOKENIZER,
    write_bio,
)
from schema_forge.evaluation import format_report, token_prf
from schema_forge.irl import PosTaggedUtterance, rule_tag, tag, train_tagger

# ---------------------------------------------------------------------------
# Tokenization: whitespace for alphabetic text, character split for CJK
# ---------------------------------------------------------------------------

print(DEFAULT_TOKENIZER.tokenize("check my insurance policy"))
print(DEFAULT_TOKENIZER.tokenize("查询 订单"))

# ---------------------------------------------------------------------------
# Tags are one of nine: O plus B-/I- for each of the four roles.
# A decoded mention carries its span and role.
# ---------------------------------------------------------------------------

text = "check my insurance policy now"
u = Utterance("d1", tuple(DEFAULT_TOKENIZER.tokenize(text)), text)
tags = [BioTag.from_string(t) for t in ("B-Action", "O", "B-Argument", "I-Argument", "O")]
for m in decode_bio(tags, u):
    print(f"  {m.role.value:9s} {m.surface!r} tokens [{m.start}, {m.end})")

# A stranded inside tag is promoted to a begin tag rather than rejected.
broken = [BioTag.from_string(t) for t in ("O", "I-Problem", "I-Problem")]
print([t.value for t in repair_tags(broken)])

# ---------------------------------------------------------------------------
# Cold start without annotations: project tags from part-of-speech runs.
# Verbs open Action spans, noun runs become Arguments, negated verbs
# become Problems, question words become Questions.
# ---------------------------------------------------------------------------

pos = PosTaggedUtterance(
    Utterance("d2", ("cancel", "the", "insurance", "policy"), "cancel the insurance policy"),
    ("VB", "DT", "NN", "NN"),
)
print([t.value for t in rule_tag(pos).tags])

# ---------------------------------------------------------------------------
# Supervised training on a generated corpus, then held-out scoring.
# ---------------------------------------------------------------------------

corpus = synth.generate(synth.demo_schema(), 600, seed=4)
train, held = corpus.examples[:500], corpus.examples[500:]
model = train_tagger([e.annotated() for e in train])

pred = [tag(model, e.utterance) for e in held]
print(format_report(token_prf([e.annotated() for e in held], pred), title="held-out tokens"))

# Tagged output round-trips through the column file format.
write_bio(pred, "/tmp/demo_tags.conll")
again = parse_bio("/tmp/demo_tags.conll")
print("round trip ok:", [a.tags for a in again] == [p.tags for p in pred])
