"""Token-level intent-role labeling.

A linear sequence tagger (averaged perceptron over sparse indicator
features, Viterbi decoding over the nine BIO tags) plus a rule-based
fallback that projects part-of-speech runs onto roles for bootstrapping
annotation. Both produce structurally valid tag sequences.
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from schema_forge.corpus import (
    AnnotatedUtterance,
    BioTag,
    IntentRole,
    Utterance,
    is_valid_bio,
    parse_bio,
)

logger = logging.getLogger(__name__)

# Tag order is alphabetical on the tag string; argmax ties in decoding
# therefore resolve to the alphabetically first tag.
TAG_STRINGS: tuple[str, ...] = tuple(sorted(t.value for t in BioTag))
TAG_INDEX: Mapping[str, int] = {t: i for i, t in enumerate(TAG_STRINGS)}
_TAGS_BY_INDEX: tuple[BioTag, ...] = tuple(BioTag(t) for t in TAG_STRINGS)
_N_TAGS = len(TAG_STRINGS)
_O_IDX = TAG_INDEX["O"]


def _structural_mask() -> np.ndarray:
    """(9, 9) matrix: 0 where prev->cur is BIO-legal, -inf where it is not.

    I-x may only follow B-x or I-x. Everything else is open.
    """
    mask = np.zeros((_N_TAGS, _N_TAGS))
    for j, cur in enumerate(_TAGS_BY_INDEX):
        if not cur.is_inside:
            continue
        for i, prev in enumerate(_TAGS_BY_INDEX):
            if prev.is_outside or prev.role is not cur.role:
                mask[i, j] = -np.inf
    return mask


_MASK = _structural_mask()


@dataclass(frozen=True, slots=True)
class TaggerConfig:
    epochs: int = 10
    seed: int = 0
    window: int = 2
    max_affix: int = 3
    averaged: bool = True


def _is_punct(tok: str) -> bool:
    return all(not ch.isalnum() for ch in tok)


def _token_features(tokens: Sequence[str], i: int, cfg: TaggerConfig) -> list[str]:
    tok = tokens[i]
    feats = [
        "bias",
        f"w0={tok}",
        f"lw0={tok.lower()}",
        f"dig={tok.isdigit()}",
        f"pun={_is_punct(tok)}",
    ]
    for k in range(1, min(cfg.max_affix, len(tok)) + 1):
        feats.append(f"pre{k}={tok[:k]}")
        feats.append(f"suf{k}={tok[-k:]}")
    for d in range(1, cfg.window + 1):
        left = tokens[i - d] if i - d >= 0 else "<s>"
        right = tokens[i + d] if i + d < len(tokens) else "</s>"
        feats.append(f"w-{d}={left}")
        feats.append(f"w+{d}={right}")
    return feats


@dataclass
class TaggerModel:
    """Feature weights (one 9-vector per feature) and a dense 9x9 transition table.

    The transition row for O doubles as the start score; starting inside
    a span is structurally blocked anyway.
    """

    weights: dict[str, np.ndarray]
    transitions: np.ndarray
    config: TaggerConfig
    training_accuracy: float = 0.0

    def save(self, path: str | Path) -> None:
        obj = {
            "format": "role-tagger",
            "version": 1,
            "labels": list(TAG_STRINGS),
            "config": {
                "epochs": self.config.epochs,
                "seed": self.config.seed,
                "window": self.config.window,
                "max_affix": self.config.max_affix,
                "averaged": self.config.averaged,
            },
            "training_accuracy": self.training_accuracy,
            "transitions": self.transitions.tolist(),
            "weights": {f: w.tolist() for f, w in self.weights.items()},
        }
        Path(path).write_text(json.dumps(obj) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "TaggerModel":
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
        if obj.get("format") != "role-tagger":
            raise ValueError(f"{path}: not a tagger model file")
        if obj.get("labels") != list(TAG_STRINGS):
            raise ValueError(f"{path}: label inventory mismatch")
        cfg = TaggerConfig(**obj["config"])
        weights = {f: np.asarray(w, dtype=np.float64) for f, w in obj["weights"].items()}
        return cls(
            weights=weights,
            transitions=np.asarray(obj["transitions"], dtype=np.float64),
            config=cfg,
            training_accuracy=float(obj["training_accuracy"]),
        )


def _emissions(
    weights: Mapping[str, np.ndarray], tokens: Sequence[str], cfg: TaggerConfig
) -> np.ndarray:
    E = np.zeros((len(tokens), _N_TAGS))
    for i in range(len(tokens)):
        for f in _token_features(tokens, i, cfg):
            w = weights.get(f)
            if w is not None:
                E[i] += w
    return E


def _viterbi(E: np.ndarray, transitions: np.ndarray) -> list[int]:
    n = E.shape[0]
    trans = transitions + _MASK
    delta = E[0] + trans[_O_IDX]
    back = np.zeros((n, _N_TAGS), dtype=np.intp)
    for i in range(1, n):
        scores = delta[:, None] + trans
        back[i] = np.argmax(scores, axis=0)
        delta = scores[back[i], np.arange(_N_TAGS)] + E[i]
    path = [int(np.argmax(delta))]
    for i in range(n - 1, 0, -1):
        path.append(int(back[i, path[-1]]))
    path.reverse()
    return path


def tag(model: TaggerModel, utterance: Utterance) -> AnnotatedUtterance:
    """Decode the best tag sequence for one utterance."""
    if not utterance.tokens:
        raise ValueError(f"utterance {utterance.id!r} has no tokens")
    E = _emissions(model.weights, utterance.tokens, model.config)
    path = _viterbi(E, model.transitions)
    tags = tuple(_TAGS_BY_INDEX[i] for i in path)
    return AnnotatedUtterance(utterance, tags, provenance="model")


def train_tagger(
    data: Sequence[AnnotatedUtterance], cfg: TaggerConfig = TaggerConfig()
) -> TaggerModel:
    """Train by averaged structured perceptron.

    Examples are shuffled each epoch with a generator seeded from the
    config, so identical inputs and config give identical models.
    Gold sequences must be structurally valid.
    """
    if not data:
        raise ValueError("training data is empty")
    feats_cache: list[list[list[str]]] = []
    gold_idx: list[list[int]] = []
    for a in data:
        if not is_valid_bio(a.tags):
            raise ValueError(f"utterance {a.utterance.id!r}: ill-formed gold tags")
        feats_cache.append(
            [_token_features(a.utterance.tokens, i, cfg) for i in range(len(a.tags))]
        )
        gold_idx.append([TAG_INDEX[t.value] for t in a.tags])

    weights: dict[str, np.ndarray] = {}
    w_acc: dict[str, np.ndarray] = {}
    w_ts: dict[str, int] = {}
    trans = np.zeros((_N_TAGS, _N_TAGS))
    trans_acc = np.zeros((_N_TAGS, _N_TAGS))
    trans_ts = 0

    rng = np.random.default_rng(cfg.seed)
    step = 0
    order = np.arange(len(data))
    for _ in range(cfg.epochs):
        rng.shuffle(order)
        for idx in order:
            step += 1
            feats = feats_cache[idx]
            gold = gold_idx[idx]
            E = np.zeros((len(gold), _N_TAGS))
            for i, fl in enumerate(feats):
                for f in fl:
                    w = weights.get(f)
                    if w is not None:
                        E[i] += w
            pred = _viterbi(E, trans)
            if pred == gold:
                continue
            for i, fl in enumerate(feats):
                if pred[i] == gold[i]:
                    continue
                for f in fl:
                    w = weights.get(f)
                    if w is None:
                        w = np.zeros(_N_TAGS)
                        weights[f] = w
                        w_acc[f] = np.zeros(_N_TAGS)
                        w_ts[f] = step - 1
                    w_acc[f] += w * (step - w_ts[f])
                    w_ts[f] = step
                    w[gold[i]] += 1.0
                    w[pred[i]] -= 1.0
            trans_acc += trans * (step - trans_ts)
            trans_ts = step
            for i in range(len(gold)):
                pg = gold[i - 1] if i else _O_IDX
                pp = pred[i - 1] if i else _O_IDX
                if (pg, gold[i]) != (pp, pred[i]):
                    trans[pg, gold[i]] += 1.0
                    trans[pp, pred[i]] -= 1.0

    if cfg.averaged and step:
        for f, w in weights.items():
            w_acc[f] += w * (step - w_ts[f])
        trans_acc += trans * (step - trans_ts)
        final_weights = {f: w_acc[f] / step for f in weights}
        final_trans = trans_acc / step
    else:
        final_weights = weights
        final_trans = trans

    model = TaggerModel(final_weights, final_trans, cfg)
    correct = total = 0
    for a, gold in zip(data, gold_idx):
        pred = tag(model, a.utterance)
        correct += sum(
            1 for p, g in zip(pred.tags, gold) if TAG_INDEX[p.value] == g
        )
        total += len(gold)
    model.training_accuracy = correct / total if total else 0.0
    return model


# ---------------------------------------------------------------------------
# Rule-based bootstrap from part-of-speech runs
# ---------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class PosTaggedUtterance:
    utterance: Utterance
    pos: tuple[str, ...]

    def __post_init__(self):
        if len(self.pos) != len(self.utterance.tokens):
            raise ValueError(
                f"utterance {self.utterance.id!r}: {len(self.utterance.tokens)} tokens "
                f"but {len(self.pos)} POS tags"
            )


NOUN_TAGS = frozenset({"N", "NN", "NNS", "NNP", "NNPS", "NOUN", "PROPN"})
VERB_TAGS = frozenset({"V", "VB", "VBD", "VBG", "VBN", "VBP", "VBZ", "VERB", "MD"})
WH_TAGS = frozenset({"WDT", "WP", "WP$", "WRB"})

DEFAULT_NEGATIONS = frozenset(
    {
        "not", "no", "never", "none", "nothing", "neither", "nor", "cannot",
        "n't", "can't", "won't", "don't", "doesn't", "didn't", "isn't",
        "aren't", "wasn't", "couldn't", "wouldn't", "shouldn't", "without",
    }
)
DEFAULT_INTERROGATIVES = frozenset(
    {"what", "which", "who", "whom", "whose", "when", "where", "why", "how"}
)


def rule_tag(
    p: PosTaggedUtterance,
    negations: frozenset[str] = DEFAULT_NEGATIONS,
    interrogatives: frozenset[str] = DEFAULT_INTERROGATIVES,
) -> AnnotatedUtterance:
    """Project part-of-speech runs onto roles.

    Interrogative tokens become Question spans. Maximal runs of verbs
    and negation words that contain at least one verb become Action
    spans, or Problem spans when a negation word is present (the
    negation tokens are kept inside the span). Remaining noun runs
    become Argument spans. Everything else is O.
    """
    tokens = p.utterance.tokens
    n = len(tokens)
    cat = []
    for tok, pos in zip(tokens, p.pos):
        low = tok.lower()
        up = pos.upper()
        if low in interrogatives or up in WH_TAGS:
            cat.append("q")
        elif low in negations:
            cat.append("neg")
        elif up in VERB_TAGS:
            cat.append("v")
        elif up in NOUN_TAGS:
            cat.append("n")
        else:
            cat.append("-")

    role: list[IntentRole | None] = [None] * n
    i = 0
    while i < n:  # question runs claim their tokens first
        if cat[i] == "q":
            j = i
            while j < n and cat[j] == "q":
                j += 1
            for k in range(i, j):
                role[k] = IntentRole.QUESTION
            i = j
        else:
            i += 1
    i = 0
    while i < n:
        if role[i] is None and cat[i] in ("v", "neg"):
            j = i
            while j < n and role[j] is None and cat[j] in ("v", "neg"):
                j += 1
            run = cat[i:j]
            if "v" in run:
                r = IntentRole.PROBLEM if "neg" in run else IntentRole.ACTION
                for k in range(i, j):
                    role[k] = r
            i = j
        else:
            i += 1
    i = 0
    while i < n:
        if role[i] is None and cat[i] == "n":
            j = i
            while j < n and role[j] is None and cat[j] == "n":
                j += 1
            for k in range(i, j):
                role[k] = IntentRole.ARGUMENT
            i = j
        else:
            i += 1

    tags: list[BioTag] = []
    prev: IntentRole | None = None
    for r in role:
        if r is None:
            tags.append(BioTag.O)
        elif r is prev:
            tags.append(BioTag.inside(r))
        else:
            tags.append(BioTag.begin(r))
        prev = r
    return AnnotatedUtterance(p.utterance, tuple(tags), provenance="rules")


def import_tags(path: str | Path) -> list[AnnotatedUtterance]:
    """Load externally produced annotations, marking their provenance."""
    return parse_bio(path, provenance="external")
