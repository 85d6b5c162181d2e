"""Synthetic labeled corpora with known schemas.

A schema fixes, per role, a set of named concepts and the mention
lexicon of each; the generator samples utterances from five role-
combination families, inserts filler tokens between mentions, and
emits gold tags, concepts, intents and slots alongside the text.
Generation is a pure function of (schema, n, seed).
"""

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from schema_forge.corpus import (
    AnnotatedUtterance,
    IntentRole,
    Mention,
    Utterance,
    encode_bio,
    write_bio,
    write_corpus,
)
from schema_forge.clustering import Concept, ConceptRepository
from schema_forge.inference import canonical_intent

# Role templates the generator samples from. Every family optionally
# carries Argument mentions on top of the listed roles.
FAMILIES: tuple[tuple[IntentRole, ...], ...] = (
    (IntentRole.ACTION,),
    (IntentRole.QUESTION,),
    (IntentRole.ACTION, IntentRole.QUESTION),
    (IntentRole.PROBLEM,),
    (IntentRole.PROBLEM, IntentRole.QUESTION),
)


@dataclass(frozen=True)
class SchemaSpec:
    """Generation-time truth: concepts, lexicons, fillers, mixture weights."""

    concepts: Mapping[IntentRole, Mapping[str, tuple[str, ...]]]
    fillers: tuple[str, ...]
    family_weights: tuple[float, ...] = (0.2, 0.2, 0.2, 0.2, 0.2)
    argument_probs: tuple[float, float, float] = (0.0, 0.85, 0.15)
    chitchat_rate: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if len(self.family_weights) != len(FAMILIES):
            raise ValueError(f"need {len(FAMILIES)} family weights")
        if abs(sum(self.family_weights) - 1.0) > 1e-9:
            raise ValueError("family weights must sum to 1")
        if abs(sum(self.argument_probs) - 1.0) > 1e-9:
            raise ValueError("argument count probabilities must sum to 1")
        if not 0.0 <= self.chitchat_rate < 1.0:
            raise ValueError("chitchat_rate must be in [0, 1)")
        if not self.fillers:
            raise ValueError("schema needs filler tokens")
        mention_tokens: set[str] = set()
        for role, by_name in self.concepts.items():
            seen_in_role: set[str] = set()
            for name, lexicon in by_name.items():
                if not lexicon:
                    raise ValueError(f"concept {name!r} has an empty lexicon")
                for m in lexicon:
                    if m in seen_in_role:
                        raise ValueError(
                            f"mention {m!r} appears in two {role.value} concepts"
                        )
                    seen_in_role.add(m)
                    mention_tokens.update(m.split())
        clash = mention_tokens & set(self.fillers)
        if clash:
            raise ValueError(
                f"filler tokens also occur inside mentions: {sorted(clash)[:5]}"
            )

    def role_names(self, role: IntentRole) -> tuple[str, ...]:
        return tuple(sorted(self.concepts.get(role, {})))

    def to_json(self) -> dict:
        return {
            "version": 1,
            "concepts": {
                role.value: {n: list(lex) for n, lex in sorted(by_name.items())}
                for role, by_name in sorted(
                    self.concepts.items(), key=lambda kv: kv[0].canonical_index
                )
            },
            "fillers": list(self.fillers),
            "family_weights": list(self.family_weights),
            "argument_probs": list(self.argument_probs),
            "chitchat_rate": self.chitchat_rate,
            "seed": self.seed,
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "SchemaSpec":
        return cls(
            concepts={
                IntentRole(role): {n: tuple(lex) for n, lex in by_name.items()}
                for role, by_name in obj["concepts"].items()
            },
            fillers=tuple(obj["fillers"]),
            family_weights=tuple(obj["family_weights"]),
            argument_probs=tuple(obj["argument_probs"]),
            chitchat_rate=float(obj["chitchat_rate"]),
            seed=int(obj.get("seed", 0)),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(self.to_json(), indent=2, ensure_ascii=False) + "\n",
            encoding="utf-8",
        )

    @classmethod
    def load(cls, path: str | Path) -> "SchemaSpec":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))

    def gold_repository(self) -> ConceptRepository:
        """The full lexicon as a concept repository, ids in a fixed order."""
        concepts = []
        cid = 0
        for role in sorted(self.concepts, key=lambda r: r.canonical_index):
            for name in sorted(self.concepts[role]):
                concepts.append(
                    Concept(
                        id=cid,
                        role=role,
                        name=name,
                        mentions=tuple(sorted(self.concepts[role][name])),
                    )
                )
                cid += 1
        return ConceptRepository(concepts)


@dataclass(frozen=True)
class SynthExample:
    """One generated utterance with every piece of gold annotation."""

    utterance: Utterance
    tags: tuple
    mentions: tuple[Mention, ...]
    concept_names: tuple[str, ...]
    intent: str
    slots: Mapping[str, tuple[str, ...]]

    def annotated(self) -> AnnotatedUtterance:
        return AnnotatedUtterance(self.utterance, self.tags, provenance="gold")


@dataclass
class SynthCorpus:
    examples: list[SynthExample]
    spec: SchemaSpec

    def utterances(self) -> list[Utterance]:
        return [e.utterance for e in self.examples]

    def annotated(self) -> list[AnnotatedUtterance]:
        return [e.annotated() for e in self.examples]

    def write(self, out_dir: str | Path) -> dict[str, Path]:
        """Emit corpus JSONL, gold tags, gold concepts, and gold results."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {
            "corpus": out / "corpus.jsonl",
            "tags": out / "gold_tags.conll",
            "concepts": out / "gold_concepts.json",
            "results": out / "gold_results.jsonl",
            "schema": out / "schema.json",
        }
        write_corpus(self.utterances(), paths["corpus"])
        write_bio(self.annotated(), paths["tags"])
        self.spec.gold_repository().save(paths["concepts"])
        with paths["results"].open("w", encoding="utf-8") as fh:
            for e in self.examples:
                roles = [
                    r.value
                    for r in sorted(
                        {m.role for m in e.mentions},
                        key=lambda r: r.canonical_index,
                    )
                ]
                fh.write(
                    json.dumps(
                        {
                            "id": e.utterance.id,
                            "intent": e.intent,
                            "slots": {k: list(v) for k, v in sorted(e.slots.items())},
                            "roles": roles,
                        },
                        ensure_ascii=False,
                    )
                    + "\n"
                )
        self.spec.save(paths["schema"])
        return paths


def generate(spec: SchemaSpec, n: int, seed: int | None = None, id_prefix: str = "u") -> SynthCorpus:
    """Sample n utterances from the schema's family mixture.

    Chitchat utterances (filler tokens only, no mentions) are mixed in
    at the schema's chitchat_rate. Mention order within an utterance is
    shuffled and zero to two fillers separate adjacent mentions, so the
    tagger cannot rely on absolute positions.
    """
    rng = np.random.default_rng(spec.seed if seed is None else seed)
    fam_weights = np.asarray(spec.family_weights)
    arg_probs = np.asarray(spec.argument_probs)
    examples: list[SynthExample] = []
    for i in range(n):
        uid = f"{id_prefix}{i:05d}"
        if spec.chitchat_rate > 0.0 and rng.random() < spec.chitchat_rate:
            length = int(rng.integers(3, 7))
            toks = [
                spec.fillers[int(rng.integers(len(spec.fillers)))]
                for _ in range(length)
            ]
            u = Utterance(id=uid, tokens=tuple(toks), raw_text=" ".join(toks))
            examples.append(
                SynthExample(u, encode_bio([], len(toks)), (), (), "", {})
            )
            continue

        family = FAMILIES[int(rng.choice(len(FAMILIES), p=fam_weights))]
        chosen: list[tuple[IntentRole, str, str]] = []  # role, concept, mention
        concepts_by_role: dict[IntentRole, list[str]] = {}
        for role in family:
            names = spec.role_names(role)
            if not names:
                raise ValueError(f"schema has no {role.value} concepts")
            name = names[int(rng.integers(len(names)))]
            lex = spec.concepts[role][name]
            chosen.append((role, name, lex[int(rng.integers(len(lex)))]))
            concepts_by_role.setdefault(role, []).append(name)
        n_args = int(rng.choice(3, p=arg_probs))
        arg_names = spec.role_names(IntentRole.ARGUMENT)
        if n_args and not arg_names:
            raise ValueError("schema has no Argument concepts")
        if n_args:
            picked = rng.choice(
                len(arg_names), size=min(n_args, len(arg_names)), replace=False
            )
            for j in sorted(int(x) for x in picked):
                name = arg_names[j]
                lex = spec.concepts[IntentRole.ARGUMENT][name]
                chosen.append(
                    (IntentRole.ARGUMENT, name, lex[int(rng.integers(len(lex)))])
                )
                concepts_by_role.setdefault(IntentRole.ARGUMENT, []).append(name)

        order = rng.permutation(len(chosen))
        tokens: list[str] = []
        mentions: list[Mention] = []
        concept_names: list[str] = []
        slots: dict[str, list[str]] = {}

        def add_fillers(max_count: int):
            for _ in range(int(rng.integers(0, max_count + 1))):
                tokens.append(spec.fillers[int(rng.integers(len(spec.fillers)))])

        add_fillers(2)
        for j in order:
            role, cname, mention_text = chosen[int(j)]
            pieces = mention_text.split()
            start = len(tokens)
            tokens.extend(pieces)
            mentions.append(
                Mention(start=start, end=len(tokens), role=role, surface=mention_text)
            )
            concept_names.append(cname)
            if role is IntentRole.ARGUMENT:
                slots.setdefault(cname, []).append(mention_text)
            add_fillers(2)

        pairs = sorted(zip(mentions, concept_names), key=lambda p: p[0].start)
        mentions = [m for m, _ in pairs]
        aligned_names = [name for _, name in pairs]
        intent = canonical_intent(concepts_by_role)
        u = Utterance(id=uid, tokens=tuple(tokens), raw_text=" ".join(tokens))
        examples.append(
            SynthExample(
                utterance=u,
                tags=encode_bio(mentions, len(tokens)),
                mentions=tuple(mentions),
                concept_names=tuple(aligned_names),
                intent=intent,
                slots={k: tuple(sorted(v)) for k, v in slots.items()},
            )
        )
    return SynthCorpus(examples=examples, spec=spec)


def split_lexicons(
    spec: SchemaSpec, holdout_fraction: float, seed: int = 0
) -> tuple[SchemaSpec, dict[IntentRole, dict[str, tuple[str, ...]]]]:
    """Withhold part of each multi-token lexicon for unseen-mention tests.

    Only multi-token mentions are eligible, so every concept keeps its
    single-token stems and at least one mention overall.
    """
    if not 0.0 < holdout_fraction < 1.0:
        raise ValueError("holdout_fraction must be in (0, 1)")
    rng = np.random.default_rng(seed)
    kept: dict[IntentRole, dict[str, tuple[str, ...]]] = {}
    held: dict[IntentRole, dict[str, tuple[str, ...]]] = {}
    for role in sorted(spec.concepts, key=lambda r: r.canonical_index):
        kept[role] = {}
        for name in sorted(spec.concepts[role]):
            lexicon = spec.concepts[role][name]
            eligible = [m for m in lexicon if len(m.split()) > 1]
            n_hold = int(len(eligible) * holdout_fraction)
            if n_hold and len(eligible) - n_hold >= 0 and len(lexicon) - n_hold >= 1:
                picked = rng.choice(len(eligible), size=n_hold, replace=False)
                held_set = {eligible[int(x)] for x in picked}
            else:
                held_set = set()
            kept[role][name] = tuple(m for m in lexicon if m not in held_set)
            if held_set:
                held.setdefault(role, {})[name] = tuple(sorted(held_set))
    return replace(spec, concepts=kept), held


# ---------------------------------------------------------------------------
# Ready-made schemas
# ---------------------------------------------------------------------------


def demo_schema(seed: int = 0, chitchat_rate: float = 0.0) -> SchemaSpec:
    """A small readable schema for demos, docs and service fixtures."""
    return SchemaSpec(
        concepts={
            IntentRole.ACTION: {
                "Check": ("Check", "check", "verify", "look up", "review"),
                "Apply": ("apply", "sign up", "register", "enroll"),
                "Cancel": ("cancel", "terminate", "close out"),
            },
            IntentRole.PROBLEM: {
                "Lost": ("lost", "misplaced", "missing"),
                "Broken": ("broken", "not working", "failed", "crashed"),
            },
            IntentRole.ARGUMENT: {
                "Document": (
                    "insurance policy",
                    "ID card",
                    "driver license",
                    "passport",
                    "contract",
                ),
                "Account": ("account", "savings account", "checking account"),
                "Date": ("today", "tomorrow", "next week", "friday"),
            },
            IntentRole.QUESTION: {
                "HowTo": ("how", "how much", "how long"),
                "When": ("when", "what time"),
            },
        },
        fillers=(
            "my", "the", "a", "please", "i", "need", "me",
            "for", "with", "on", "is", "there", "it", "this",
        ),
        chitchat_rate=chitchat_rate,
        seed=seed,
    )


_CONSONANTS = "bdfgklmnprstvz"
_VOWELS = "aeiou"


def _new_tokens(rng: np.random.Generator, count: int, used: set[str]) -> list[str]:
    out: list[str] = []
    while len(out) < count:
        n_syll = int(rng.integers(2, 4))
        tok = "".join(
            _CONSONANTS[int(rng.integers(len(_CONSONANTS)))]
            + _VOWELS[int(rng.integers(len(_VOWELS)))]
            for _ in range(n_syll)
        )
        if tok not in used:
            used.add(tok)
            out.append(tok)
    return out


def make_schema(
    seed: int = 0,
    n_action: int = 4,
    n_problem: int = 3,
    n_argument: int = 5,
    n_question: int = 2,
    modifiers_per_concept: int = 24,
    n_fillers: int = 30,
    chitchat_rate: float = 0.0,
) -> SchemaSpec:
    """Procedural schema with pronounceable made-up tokens.

    Every concept has one single-token stem plus modifier+stem
    two-token mentions; mentions of one concept therefore share a
    subword while concepts stay disjoint, which is the structure the
    subword encoder is meant to exploit.
    """
    rng = np.random.default_rng(seed)
    used: set[str] = set()
    fillers = tuple(_new_tokens(rng, n_fillers, used))
    concepts: dict[IntentRole, dict[str, tuple[str, ...]]] = {}
    counts = {
        IntentRole.ACTION: n_action,
        IntentRole.PROBLEM: n_problem,
        IntentRole.ARGUMENT: n_argument,
        IntentRole.QUESTION: n_question,
    }
    for role in sorted(counts, key=lambda r: r.canonical_index):
        by_name: dict[str, tuple[str, ...]] = {}
        stems = _new_tokens(rng, counts[role], used)
        for stem in stems:
            mods = _new_tokens(rng, modifiers_per_concept, used)
            lexicon = (stem,) + tuple(f"{mod} {stem}" for mod in mods)
            by_name[stem.capitalize()] = lexicon
        concepts[role] = by_name
    return SchemaSpec(
        concepts=concepts,
        fillers=fillers,
        chitchat_rate=chitchat_rate,
        seed=seed,
    )
