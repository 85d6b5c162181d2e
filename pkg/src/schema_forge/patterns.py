"""Frequent role-combination mining over tagged utterances.

Each utterance reduces to the set of intent roles present in it; with
four roles there are only fifteen non-empty combinations, so the
candidate lattice is tiny and the level-wise pruning is mostly about
honoring the classic algorithm shape rather than speed.
"""

import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from schema_forge.corpus import ROLES, AnnotatedUtterance, IntentRole


class RoleSet(int):
    """Immutable bitmask over the four roles; bit order follows the canonical role order."""

    __slots__ = ()

    def __new__(cls, roles: Iterable[IntentRole] | int = 0) -> "RoleSet":
        if isinstance(roles, int):
            mask = int(roles)
        else:
            mask = 0
            for r in roles:
                mask |= 1 << r.canonical_index
        if not 0 <= mask < 16:
            raise ValueError(f"role mask {mask} out of range")
        return super().__new__(cls, mask)

    def roles(self) -> tuple[IntentRole, ...]:
        return tuple(r for r in ROLES if self & (1 << r.canonical_index))

    def __contains__(self, role: IntentRole) -> bool:
        return bool(self & (1 << role.canonical_index))

    def issubset(self, other: "RoleSet | int") -> bool:
        return (self & ~int(other)) == 0

    def __repr__(self) -> str:
        return "RoleSet({" + ", ".join(r.value for r in self.roles()) + "})"

    def to_names(self) -> list[str]:
        return [r.value for r in self.roles()]

    @classmethod
    def from_names(cls, names: Iterable[str]) -> "RoleSet":
        return cls(IntentRole(n) for n in names)


ALL_ROLE_SETS: tuple[RoleSet, ...] = tuple(RoleSet(m) for m in range(1, 16))


@dataclass(frozen=True, slots=True)
class Pattern:
    """One retained role combination with its support and confidence."""

    roles: RoleSet
    support: float
    confidence: float

    def to_json(self) -> dict:
        return {
            "roles": self.roles.to_names(),
            "support": self.support,
            "confidence": self.confidence,
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "Pattern":
        return cls(
            roles=RoleSet.from_names(obj["roles"]),
            support=float(obj["support"]),
            confidence=float(obj["confidence"]),
        )


@dataclass(frozen=True)
class PatternSet:
    """The mined patterns plus the thresholds and corpus size they came from."""

    patterns: tuple[Pattern, ...]
    min_support: float
    min_confidence: float
    corpus_size: int

    def __post_init__(self):
        masks = [int(p.roles) for p in self.patterns]
        if len(set(masks)) != len(masks):
            raise ValueError("duplicate role combination in pattern set")

    def matches(self, roles: RoleSet) -> bool:
        """Exact-set membership: the observed roles equal some retained pattern."""
        return any(int(p.roles) == int(roles) for p in self.patterns)

    def __len__(self) -> int:
        return len(self.patterns)

    def to_json(self) -> dict:
        return {
            "version": 1,
            "min_support": self.min_support,
            "min_confidence": self.min_confidence,
            "corpus_size": self.corpus_size,
            "patterns": [p.to_json() for p in self.patterns],
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "PatternSet":
        return cls(
            patterns=tuple(Pattern.from_json(p) for p in obj["patterns"]),
            min_support=float(obj["min_support"]),
            min_confidence=float(obj["min_confidence"]),
            corpus_size=int(obj["corpus_size"]),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "PatternSet":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def extract_role_sets(
    tagged: Iterable[AnnotatedUtterance], include_empty: bool = False
) -> list[RoleSet]:
    """Reduce each tagged utterance to its set of mention roles.

    Mining wants only utterances that mention something; coverage wants
    every utterance counted. include_empty switches between the two.
    """
    out: list[RoleSet] = []
    for a in tagged:
        roles = {m.role for m in a.mentions()}
        if roles or include_empty:
            out.append(RoleSet(roles))
    return out


def pattern_coverage(patterns: PatternSet, role_sets: Sequence[RoleSet]) -> float:
    """Fraction of role sets exactly matching some retained pattern.

    Empty role sets never match, so they drag coverage down when the
    caller includes them. An empty input scores 0.0.
    """
    if not role_sets:
        return 0.0
    hit = sum(1 for rs in role_sets if patterns.matches(rs))
    return hit / len(role_sets)


def _support_counts(role_sets: Sequence[RoleSet]) -> list[int]:
    """counts[mask] = number of observations whose role set is a superset of mask."""
    counts = [0] * 16
    for rs in role_sets:
        obs = int(rs)
        for mask in range(1, 16):
            if mask & ~obs == 0:
                counts[mask] += 1
    return counts


def mine_patterns(
    role_sets: Sequence[RoleSet],
    min_support: float = 0.05,
    min_confidence: float = 0.1,
) -> PatternSet:
    """Level-wise frequent-set mining over the four-role universe.

    Support of a combination is the fraction of observations containing
    it. Confidence is the best single-role rule into the rest of the
    combination: max over r in S of support(S) / support({r});
    singletons score 1.0 by convention. A combination is retained only
    if both thresholds are met. Output is sorted by (size, support
    descending, mask) and is a pure function of the multiset of inputs.
    """
    if not 0.0 <= min_support <= 1.0:
        raise ValueError(f"min_support must be in [0, 1], got {min_support}")
    if not 0.0 <= min_confidence <= 1.0:
        raise ValueError(f"min_confidence must be in [0, 1], got {min_confidence}")
    if not role_sets:
        raise ValueError("cannot mine patterns from an empty corpus")
    n = len(role_sets)
    counts = _support_counts(role_sets)
    support = [c / n for c in counts]

    retained: list[Pattern] = []
    # Level-wise: candidates of size k are joins of frequent (k-1)-sets.
    frequent_prev = []
    for k in range(1, 5):
        if k == 1:
            candidates = [m for m in range(1, 16) if bin(m).count("1") == 1]
        else:
            candidates = sorted(
                {
                    a | b
                    for a, b in itertools.combinations(frequent_prev, 2)
                    if bin(a | b).count("1") == k
                }
            )
            # Classic prune: every (k-1)-subset must itself be frequent.
            prev = set(frequent_prev)
            candidates = [
                m
                for m in candidates
                if all(
                    (m & ~(1 << i)) in prev
                    for i in range(4)
                    if m & (1 << i)
                )
            ]
        frequent_prev = [m for m in candidates if support[m] >= min_support]
        for mask in frequent_prev:
            if k == 1:
                conf = 1.0
            else:
                singles = [1 << i for i in range(4) if mask & (1 << i)]
                conf = max(
                    (counts[mask] / counts[s]) if counts[s] > 0 else 0.0
                    for s in singles
                )
            if conf >= min_confidence:
                retained.append(
                    Pattern(roles=RoleSet(mask), support=support[mask], confidence=conf)
                )

    retained.sort(key=lambda p: (bin(int(p.roles)).count("1"), -p.support, int(p.roles)))
    return PatternSet(
        patterns=tuple(retained),
        min_support=min_support,
        min_confidence=min_confidence,
        corpus_size=n,
    )


def brute_force_patterns(
    role_sets: Sequence[RoleSet],
    min_support: float = 0.05,
    min_confidence: float = 0.1,
) -> PatternSet:
    """Reference miner: enumerate all fifteen combinations directly.

    Kept deliberately independent of mine_patterns so the two can be
    checked against each other.
    """
    if not role_sets:
        raise ValueError("cannot mine patterns from an empty corpus")
    n = len(role_sets)
    retained: list[Pattern] = []
    for mask in range(1, 16):
        contained = sum(1 for rs in role_sets if mask & ~int(rs) == 0)
        sup = contained / n
        if sup < min_support:
            continue
        if bin(mask).count("1") == 1:
            conf = 1.0
        else:
            confs = []
            for s in (1 << i for i in range(4) if mask & (1 << i)):
                s_count = sum(1 for rs in role_sets if s & ~int(rs) == 0)
                confs.append(contained / s_count if s_count else 0.0)
            conf = max(confs)
        if conf >= min_confidence:
            retained.append(Pattern(RoleSet(mask), sup, conf))
    retained.sort(key=lambda p: (bin(int(p.roles)).count("1"), -p.support, int(p.roles)))
    return PatternSet(tuple(retained), min_support, min_confidence, n)
