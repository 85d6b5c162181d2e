"""Online inference: map tagged mentions to concepts, then to intent and slots.

Concept lookup tries an exact repository match first and falls back to
cosine voting among same-role repository mentions. Mentions that clear
neither path stay uncategorized and land in a review pool instead of
being forced into a concept. The second stage checks the observed role
combination against the mined patterns and composes the intent name
from concept names in the fixed role order.
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from schema_forge.clustering import (
    ClusterAssignment,
    Concept,
    ConceptRepository,
    build_knn_graph,
    lpa_cluster,
    name_concepts,
)
from schema_forge.corpus import IntentRole, Mention, Utterance
from schema_forge.irl import TaggerModel, tag
from schema_forge.patterns import PatternSet, RoleSet

logger = logging.getLogger(__name__)

UNCATEGORIZED = -1
UNKNOWN_SLOT = "UNKNOWN"

STATUS_OK = "OK"
STATUS_OUT_OF_PATTERN = "OUT_OF_PATTERN"
STATUS_NO_MENTIONS = "NO_MENTIONS"


@dataclass(frozen=True, slots=True)
class ConInferConfig:
    """Fallback matching knobs: similarity floor and vote size."""

    delta: float = 0.2
    k: int = 5

    def __post_init__(self):
        if not -1.0 <= self.delta <= 1.0:
            raise ValueError(f"delta must be a cosine value, got {self.delta}")
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")


@dataclass
class UncategorizedPool:
    """Review queue of (mention, role) pairs that matched no concept.

    Adding the same pair twice keeps one entry and bumps its count.
    """

    entries: dict[tuple[str, IntentRole], int] = field(default_factory=dict)

    def add(self, mention: str, role: IntentRole) -> None:
        key = (mention, role)
        self.entries[key] = self.entries.get(key, 0) + 1

    def __len__(self) -> int:
        return len(self.entries)

    def by_role(self, role: IntentRole) -> list[tuple[str, int]]:
        return sorted(
            (m, c) for (m, r), c in self.entries.items() if r is role
        )

    def to_json(self) -> dict:
        return {
            "version": 1,
            "entries": [
                {"mention": m, "role": r.value, "count": c}
                for (m, r), c in sorted(
                    self.entries.items(), key=lambda kv: (kv[0][1].value, kv[0][0])
                )
            ],
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "UncategorizedPool":
        pool = cls()
        for e in obj["entries"]:
            pool.entries[(e["mention"], IntentRole(e["role"]))] = int(e["count"])
        return pool

    def save(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(self.to_json(), indent=2, ensure_ascii=False) + "\n",
            encoding="utf-8",
        )

    @classmethod
    def load(cls, path: str | Path) -> "UncategorizedPool":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


class _RoleMatrixCache:
    """Per-role embedding matrix over repository mentions, built lazily.

    Mentions the embedder cannot represent are left out of the vote.
    """

    def __init__(self, repo: ConceptRepository, embedder):
        self.repo = repo
        self.embedder = embedder
        self._cache: dict[IntentRole, tuple[np.ndarray, list[str], list[int]]] = {}

    def get(self, role: IntentRole) -> tuple[np.ndarray, list[str], list[int]]:
        hit = self._cache.get(role)
        if hit is not None:
            return hit
        surfaces: list[str] = []
        concept_ids: list[int] = []
        rows: list[np.ndarray] = []
        for concept in self.repo.role_concepts(role):
            for m in concept.mentions:
                vec = self.embedder.embed(m)
                if vec is None:
                    continue
                norm = float(np.linalg.norm(vec))
                if norm == 0.0:
                    continue
                rows.append(np.asarray(vec, dtype=np.float64) / norm)
                surfaces.append(m)
                concept_ids.append(concept.id)
        M = np.stack(rows) if rows else np.empty((0, 1))
        out = (M, surfaces, concept_ids)
        self._cache[role] = out
        return out


def con_infer(
    pairs: Sequence[tuple[str, IntentRole]],
    repo: ConceptRepository,
    embedder,
    cfg: ConInferConfig = ConInferConfig(),
    pool: UncategorizedPool | None = None,
) -> list[int]:
    """Resolve each (mention, role) pair to a concept id or UNCATEGORIZED.

    Exact repository matches win outright and never consult the
    embedder. Otherwise the mention is embedded and compared against
    every same-role repository mention; candidates with cosine
    similarity strictly above delta, taken in descending order (ties
    keep repository order), vote with their top k concepts. The
    majority concept wins; a tied vote goes to the concept holding the
    most similar candidate. No candidates above the floor, or no
    embedding for the mention, means UNCATEGORIZED, and the pair is
    recorded in the pool when one is given.
    """
    cache = _RoleMatrixCache(repo, embedder)
    out: list[int] = []
    for surface, role in pairs:
        concept = repo.lookup(surface, role)
        if concept is not None:
            out.append(concept.id)
            continue
        vec = embedder.embed(surface)
        cid = UNCATEGORIZED
        if vec is not None:
            norm = float(np.linalg.norm(vec))
            if norm > 0.0:
                M, _, concept_ids = cache.get(role)
                if M.shape[0]:
                    sims = M @ (np.asarray(vec, dtype=np.float64) / norm)
                    keep = np.flatnonzero(sims > cfg.delta)
                    if keep.size:
                        order = keep[np.argsort(-sims[keep], kind="stable")]
                        top = order[: cfg.k]
                        votes: dict[int, int] = {}
                        for row in top:
                            c = concept_ids[row]
                            votes[c] = votes.get(c, 0) + 1
                        best = max(votes.values())
                        for row in top:  # earliest top row among tied = most similar
                            if votes[concept_ids[row]] == best:
                                cid = concept_ids[row]
                                break
        if cid == UNCATEGORIZED and pool is not None:
            pool.add(surface, role)
        out.append(cid)
    return out


def neighbors(
    mention: str,
    role: IntentRole,
    repo: ConceptRepository,
    embedder,
    k: int = 5,
) -> list[dict]:
    """Top-k most similar same-role repository mentions, for inspection."""
    vec = embedder.embed(mention)
    if vec is None:
        return []
    norm = float(np.linalg.norm(vec))
    if norm == 0.0:
        return []
    M, surfaces, concept_ids = _RoleMatrixCache(repo, embedder).get(role)
    if not M.shape[0]:
        return []
    sims = M @ (np.asarray(vec, dtype=np.float64) / norm)
    order = np.argsort(-sims, kind="stable")[:k]
    return [
        {
            "mention": surfaces[i],
            "concept_id": concept_ids[i],
            "similarity": float(sims[i]),
        }
        for i in order
    ]


def canonical_intent(concepts_by_role: Mapping[IntentRole, Sequence[str]]) -> str:
    """Compose the intent name from concept names in the fixed role order.

    Argument concepts are sorted, comma-joined and parenthesized as one
    group; other roles contribute their concept names sorted and
    comma-joined bare. Role parts are joined with hyphens. Roles with
    no concept names contribute nothing.
    """
    parts: list[str] = []
    for role in sorted(concepts_by_role, key=lambda r: r.canonical_index):
        names = sorted(set(concepts_by_role[role]))
        if not names:
            continue
        joined = ",".join(names)
        parts.append(f"({joined})" if role is IntentRole.ARGUMENT else joined)
    return "-".join(parts)


@dataclass(frozen=True)
class MentionResult:
    surface: str
    role: IntentRole
    start: int
    end: int
    concept_id: int
    concept_name: str | None

    def to_json(self) -> dict:
        return {
            "surface": self.surface,
            "role": self.role.value,
            "span": [self.start, self.end],
            "concept_id": self.concept_id,
            "concept": self.concept_name,
        }


@dataclass(frozen=True)
class IntentSlotResult:
    """Everything inferred for one utterance."""

    utterance_id: str
    status: str
    intent: str
    roles: tuple[str, ...]
    slots: Mapping[str, tuple[str, ...]]
    mentions: tuple[MentionResult, ...]

    def to_json(self) -> dict:
        return {
            "id": self.utterance_id,
            "status": self.status,
            "intent": self.intent,
            "roles": list(self.roles),
            "slots": {k: list(v) for k, v in sorted(self.slots.items())},
            "mentions": [m.to_json() for m in self.mentions],
        }


def is_infer(
    triples: Sequence[tuple[str, IntentRole, str | None]],
    patterns: PatternSet,
    utterance_id: str = "",
    mention_results: Sequence[MentionResult] = (),
) -> IntentSlotResult:
    """Compose intent and slots from (mention, role, concept name) triples.

    The observed role set must exactly equal a retained pattern,
    otherwise the result is OUT_OF_PATTERN (intent and slots still
    filled in for inspection). Uncategorized Argument mentions fill the
    UNKNOWN slot; uncategorized mentions of other roles contribute
    nothing to the intent name.
    """
    if not triples:
        return IntentSlotResult(
            utterance_id, STATUS_NO_MENTIONS, "", (), {}, tuple(mention_results)
        )
    role_set = RoleSet({r for _, r, _ in triples})
    concepts_by_role: dict[IntentRole, list[str]] = {}
    slots: dict[str, list[str]] = {}
    for surface, role, concept_name in triples:
        if role is IntentRole.ARGUMENT:
            slot = concept_name if concept_name is not None else UNKNOWN_SLOT
            slots.setdefault(slot, []).append(surface)
            concepts_by_role.setdefault(role, []).append(slot)
        elif concept_name is not None:
            concepts_by_role.setdefault(role, []).append(concept_name)
        else:
            concepts_by_role.setdefault(role, [])
    intent = canonical_intent(concepts_by_role)
    status = STATUS_OK if patterns.matches(role_set) else STATUS_OUT_OF_PATTERN
    return IntentSlotResult(
        utterance_id,
        status,
        intent,
        tuple(r.value for r in role_set.roles()),
        {k: tuple(sorted(v)) for k, v in slots.items()},
        tuple(mention_results),
    )


def infer(
    utterance: Utterance,
    tagger: TaggerModel,
    repo: ConceptRepository,
    embedder,
    patterns: PatternSet,
    cfg: ConInferConfig = ConInferConfig(),
    pool: UncategorizedPool | None = None,
) -> IntentSlotResult:
    """Full pipeline for one utterance: tag, resolve concepts, compose."""
    annotated = tag(tagger, utterance)
    mentions = annotated.mentions()
    if not mentions:
        return IntentSlotResult(
            utterance.id, STATUS_NO_MENTIONS, "", (), {}, ()
        )
    pairs = [(m.surface, m.role) for m in mentions]
    concept_ids = con_infer(pairs, repo, embedder, cfg, pool)
    mention_results = []
    triples = []
    for m, cid in zip(mentions, concept_ids):
        concept = repo.get(cid) if cid != UNCATEGORIZED else None
        name = concept.name if concept is not None else None
        mention_results.append(
            MentionResult(m.surface, m.role, m.start, m.end, cid, name)
        )
        triples.append((m.surface, m.role, name))
    return is_infer(triples, patterns, utterance.id, mention_results)


def write_results(results: Iterable[IntentSlotResult], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for r in results:
            fh.write(json.dumps(r.to_json(), ensure_ascii=False) + "\n")


# ---------------------------------------------------------------------------
# Concept expansion from the review pool
# ---------------------------------------------------------------------------


def _default_clusterer(vectors: np.ndarray) -> ClusterAssignment:
    k = min(5, max(1, vectors.shape[0] - 1))
    return lpa_cluster(build_knn_graph(vectors, k=k))


def expand_concepts(
    pool: UncategorizedPool,
    repo: ConceptRepository,
    embedder,
    clusterer: Callable[[np.ndarray], ClusterAssignment] | None = None,
) -> tuple[ConceptRepository, list[Concept]]:
    """Cluster pooled mentions per role into provisional new concepts.

    Existing concepts pass through byte-identical; new concepts receive
    ids above every existing id. Pool entries the embedder cannot
    represent become singleton concepts named by their mention. Returns
    the grown repository and the list of added concepts.
    """
    cluster_fn = clusterer or _default_clusterer
    next_id = repo.max_id + 1
    added: list[Concept] = []
    for role in sorted({r for _, r in pool.entries}, key=lambda r: r.canonical_index):
        entries = pool.by_role(role)
        surfaces = [m for m, _ in entries if repo.lookup(m, role) is None]
        if not surfaces:
            continue
        freq = {m: c for m, c in entries}
        vecs: list[np.ndarray] = []
        embeddable: list[str] = []
        leftovers: list[str] = []
        for m in surfaces:
            v = embedder.embed(m)
            if v is None:
                leftovers.append(m)
            else:
                embeddable.append(m)
                vecs.append(np.asarray(v, dtype=np.float64))
        if embeddable:
            assignment = cluster_fn(np.stack(vecs))
            new_concepts = name_concepts(
                assignment, embeddable, role, frequencies=freq, id_start=next_id
            )
            added.extend(new_concepts)
            next_id += len(new_concepts)
        for m in leftovers:
            added.append(Concept(id=next_id, role=role, name=m, mentions=(m,)))
            next_id += 1
    return repo.merged(added), added
