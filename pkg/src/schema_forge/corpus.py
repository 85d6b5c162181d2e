"""Core data model and file formats for utterances and role annotations.

Utterances come in as JSONL, token-level role annotations travel as
two-column CoNLL. Role spans use a BIO scheme over the four intent
roles, and every decoder in this module is total: ill-formed tag
sequences are repaired rather than rejected.
"""

import enum
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

logger = logging.getLogger(__name__)


class CorpusError(ValueError):
    """Raised for malformed corpus or annotation files; message carries file/line."""


@enum.unique
class IntentRole(enum.Enum):
    """The four token-level roles a mention can play in an utterance."""

    ACTION = "Action"
    PROBLEM = "Problem"
    ARGUMENT = "Argument"
    QUESTION = "Question"

    @property
    def canonical_index(self) -> int:
        """Position in the fixed role order used when composing intent names."""
        return _CANONICAL_ORDER[self]

    def __lt__(self, other: "IntentRole") -> bool:
        if not isinstance(other, IntentRole):
            return NotImplemented
        return self.canonical_index < other.canonical_index

    @classmethod
    def from_string(cls, text: str) -> "IntentRole":
        try:
            return cls(text)
        except ValueError:
            raise CorpusError(f"unknown intent role {text!r}") from None


# Fixed composition order: Action < Problem < Argument < Question.
_CANONICAL_ORDER = {
    IntentRole.ACTION: 0,
    IntentRole.PROBLEM: 1,
    IntentRole.ARGUMENT: 2,
    IntentRole.QUESTION: 3,
}

ROLES: tuple[IntentRole, ...] = tuple(
    sorted(IntentRole, key=lambda r: r.canonical_index)
)


@enum.unique
class BioTag(enum.Enum):
    """Token tag: outside, or begin/inside one of the four roles. Nine values total."""

    O = "O"
    B_ACTION = "B-Action"
    I_ACTION = "I-Action"
    B_PROBLEM = "B-Problem"
    I_PROBLEM = "I-Problem"
    B_ARGUMENT = "B-Argument"
    I_ARGUMENT = "I-Argument"
    B_QUESTION = "B-Question"
    I_QUESTION = "I-Question"

    @property
    def is_outside(self) -> bool:
        return self is BioTag.O

    @property
    def is_begin(self) -> bool:
        return self.value.startswith("B-")

    @property
    def is_inside(self) -> bool:
        return self.value.startswith("I-")

    @property
    def role(self) -> IntentRole | None:
        """Role this tag marks, or None for O."""
        if self is BioTag.O:
            return None
        return IntentRole(self.value[2:])

    @classmethod
    def begin(cls, role: IntentRole) -> "BioTag":
        return cls("B-" + role.value)

    @classmethod
    def inside(cls, role: IntentRole) -> "BioTag":
        return cls("I-" + role.value)

    @classmethod
    def from_string(cls, text: str) -> "BioTag":
        try:
            return cls(text)
        except ValueError:
            raise CorpusError(f"unknown tag {text!r}") from None


TAGS: tuple[BioTag, ...] = tuple(BioTag)


@dataclass(frozen=True, slots=True)
class Utterance:
    """A single tokenized input utterance."""

    id: str
    tokens: tuple[str, ...]
    raw_text: str

    def __post_init__(self):
        if not self.id:
            raise ValueError("utterance id must be non-empty")
        if any(not t for t in self.tokens):
            raise ValueError(f"utterance {self.id!r} contains an empty token")


@dataclass(frozen=True, slots=True)
class Mention:
    """A contiguous token span [start, end) carrying one intent role."""

    start: int
    end: int
    role: IntentRole
    surface: str

    def __post_init__(self):
        if not (0 <= self.start < self.end):
            raise ValueError(
                f"mention span [{self.start}, {self.end}) is not a valid half-open range"
            )


@dataclass(frozen=True, slots=True)
class AnnotatedUtterance:
    """An utterance paired with one BIO tag per token.

    ``provenance`` records where the tags came from ("model", "rules",
    "external", ...); it never affects equality-sensitive processing.
    """

    utterance: Utterance
    tags: tuple[BioTag, ...]
    provenance: str = ""

    def __post_init__(self):
        if len(self.tags) != len(self.utterance.tokens):
            raise ValueError(
                f"utterance {self.utterance.id!r}: {len(self.utterance.tokens)} tokens "
                f"but {len(self.tags)} tags"
            )

    def mentions(self) -> tuple[Mention, ...]:
        return decode_bio(self.tags, self.utterance)


# ---------------------------------------------------------------------------
# Tokenization
# ---------------------------------------------------------------------------

_CJK_RANGES = (
    (0x3040, 0x30FF),   # hiragana, katakana
    (0x3400, 0x4DBF),   # CJK extension A
    (0x4E00, 0x9FFF),   # CJK unified
    (0xAC00, 0xD7AF),   # hangul syllables
    (0xF900, 0xFAFF),   # CJK compatibility
)


def _is_cjk(ch: str) -> bool:
    cp = ord(ch)
    return any(lo <= cp <= hi for lo, hi in _CJK_RANGES)


@dataclass(frozen=True, slots=True)
class Tokenizer:
    """Whitespace tokenizer with a character-split fallback for unspaced scripts.

    Text splits on runs of whitespace. Any resulting chunk that contains
    CJK characters is split further into single characters (the scripts
    in question do not delimit words with spaces). Joining rule for
    round-trips: chunks are joined with single spaces; characters split
    out of one chunk are also space-separated, so the original spacing
    inside a CJK chunk is not preserved.
    """

    char_fallback: bool = True

    def tokenize(self, text: str) -> list[str]:
        tokens: list[str] = []
        for chunk in text.split():
            if self.char_fallback and any(_is_cjk(ch) for ch in chunk):
                tokens.extend(chunk)
            else:
                tokens.append(chunk)
        return tokens


DEFAULT_TOKENIZER = Tokenizer()


# ---------------------------------------------------------------------------
# BIO encode / decode / repair
# ---------------------------------------------------------------------------


def is_valid_bio(tags: Sequence[BioTag]) -> bool:
    """True when every I-x tag directly follows B-x or I-x of the same role."""
    prev: BioTag | None = None
    for tag in tags:
        if tag.is_inside:
            if prev is None or prev.is_outside or prev.role is not tag.role:
                return False
        prev = tag
    return True


def repair_tags(tags: Sequence[BioTag]) -> tuple[BioTag, ...]:
    """Promote stranded I-x tags to B-x so the sequence becomes well formed.

    An I-x at the start of the sequence, after O, or after a tag of a
    different role starts a new span instead. Applying the repair twice
    changes nothing.
    """
    out: list[BioTag] = []
    prev: BioTag | None = None
    for tag in tags:
        if tag.is_inside and (
            prev is None or prev.is_outside or prev.role is not tag.role
        ):
            tag = BioTag.begin(tag.role)  # type: ignore[arg-type]
        out.append(tag)
        prev = tag
    return tuple(out)


def decode_bio(tags: Sequence[BioTag], utterance: Utterance) -> tuple[Mention, ...]:
    """Extract mentions from a tag sequence, repairing it first.

    Mentions come back sorted by start offset and never overlap. The
    surface form is the space-joined token span.
    """
    if len(tags) != len(utterance.tokens):
        raise ValueError(
            f"utterance {utterance.id!r}: {len(utterance.tokens)} tokens "
            f"but {len(tags)} tags"
        )
    fixed = repair_tags(tags)
    mentions: list[Mention] = []
    start = -1
    role: IntentRole | None = None

    def flush(end: int):
        if role is not None:
            surface = " ".join(utterance.tokens[start:end])
            mentions.append(Mention(start=start, end=end, role=role, surface=surface))

    for i, tag in enumerate(fixed):
        if tag.is_begin:
            flush(i)
            start, role = i, tag.role
        elif tag.is_outside:
            flush(i)
            role = None
    flush(len(fixed))
    return tuple(mentions)


def encode_bio(mentions: Sequence[Mention], length: int) -> tuple[BioTag, ...]:
    """Inverse of decode: spans back to tags. Overlaps and bad bounds are errors."""
    ordered = sorted(mentions, key=lambda m: m.start)
    tags = [BioTag.O] * length
    prev_end = 0
    for m in ordered:
        if m.end > length:
            raise ValueError(f"mention span [{m.start}, {m.end}) exceeds length {length}")
        if m.start < prev_end:
            raise ValueError(f"mention spans overlap at token {m.start}")
        tags[m.start] = BioTag.begin(m.role)
        for i in range(m.start + 1, m.end):
            tags[i] = BioTag.inside(m.role)
        prev_end = m.end
    return tuple(tags)


# ---------------------------------------------------------------------------
# File formats
# ---------------------------------------------------------------------------


def parse_corpus(
    path: str | Path,
    tokenizer: Tokenizer | None = None,
    rejected: list[tuple[int, str, str]] | None = None,
) -> list[Utterance]:
    """Read a JSONL corpus: one object per line with "id" and "text".

    An optional "tokens" field overrides tokenization. Records with
    empty text are skipped and logged (and appended to ``rejected`` as
    (line, id, reason) when a list is passed); malformed JSON or missing
    fields raise CorpusError naming the line.
    """
    tok = tokenizer or DEFAULT_TOKENIZER
    path = Path(path)
    utterances: list[Utterance] = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path}:{lineno}: malformed JSON: {exc.msg}") from None
            if not isinstance(record, dict) or "id" not in record or "text" not in record:
                raise CorpusError(f"{path}:{lineno}: record must carry 'id' and 'text'")
            uid = str(record["id"])
            text = record["text"]
            if not isinstance(text, str):
                raise CorpusError(f"{path}:{lineno}: 'text' must be a string")
            if "tokens" in record:
                tokens = record["tokens"]
                if not isinstance(tokens, list) or any(
                    not isinstance(t, str) or not t for t in tokens
                ):
                    raise CorpusError(
                        f"{path}:{lineno}: 'tokens' must be a list of non-empty strings"
                    )
            else:
                tokens = tok.tokenize(text)
            if not tokens:
                reason = "empty text"
                logger.warning("%s:%d: skipped record %r: %s", path, lineno, uid, reason)
                if rejected is not None:
                    rejected.append((lineno, uid, reason))
                continue
            utterances.append(Utterance(id=uid, tokens=tuple(tokens), raw_text=text))
    return utterances


def write_corpus(utterances: Iterable[Utterance], path: str | Path) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for u in utterances:
            fh.write(
                json.dumps(
                    {"id": u.id, "text": u.raw_text, "tokens": list(u.tokens)},
                    ensure_ascii=False,
                )
                + "\n"
            )


def parse_bio(path: str | Path, provenance: str = "file") -> list[AnnotatedUtterance]:
    """Read two-column CoNLL: token TAB tag, blank line between utterances.

    Unknown tags are an error naming the offending tag and line number.
    Ill-formed sequences are repaired on the way in. Zero-length blocks
    (consecutive blank lines) are skipped with a warning. Utterance ids
    are positional (u00000, u00001, ...) since the format carries none.
    """
    path = Path(path)
    annotated: list[AnnotatedUtterance] = []
    tokens: list[str] = []
    tags: list[BioTag] = []
    blanks_seen = 0

    def flush():
        nonlocal tokens, tags
        if tokens:
            uid = f"u{len(annotated):05d}"
            utt = Utterance(id=uid, tokens=tuple(tokens), raw_text=" ".join(tokens))
            annotated.append(
                AnnotatedUtterance(utt, repair_tags(tags), provenance=provenance)
            )
        tokens, tags = [], []

    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                if not tokens and blanks_seen:
                    logger.warning("%s:%d: empty utterance block skipped", path, lineno)
                flush()
                blanks_seen += 1
                continue
            parts = line.split("\t")
            if len(parts) != 2 or not parts[0]:
                raise CorpusError(
                    f"{path}:{lineno}: expected 'token<TAB>tag', got {line!r}"
                )
            try:
                tag = BioTag.from_string(parts[1])
            except CorpusError:
                raise CorpusError(f"{path}:{lineno}: unknown tag {parts[1]!r}") from None
            tokens.append(parts[0])
            tags.append(tag)
    flush()
    return annotated


def write_bio(annotated: Iterable[AnnotatedUtterance], path: str | Path) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for a in annotated:
            for token, tag in zip(a.utterance.tokens, a.tags):
                fh.write(f"{token}\t{tag.value}\n")
            fh.write("\n")
