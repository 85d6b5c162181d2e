"""Mention embeddings: skip-gram tables and a subword convolutional encoder.

Tagged utterances are first rewritten into token streams where each
mention span is one atomic item. Three trainers share that stream
format: plain skip-gram over items, skip-gram with n-gram items added
to the vocabulary, and a character-free subword CNN trained with the
same negative-sampling objective so it can embed mentions never seen
during training.

All trainers are single-threaded and produce bit-identical results for
a fixed seed.
"""

import json
import logging
import struct
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np
from scipy.special import expit

from schema_forge.corpus import AnnotatedUtterance, IntentRole

logger = logging.getLogger(__name__)


class MentionToken(NamedTuple):
    """One stream item: either a collapsed mention span or a plain token."""

    text: str
    is_mention: bool


def mentionize_corpus(tagged: Iterable[AnnotatedUtterance]) -> list[list[MentionToken]]:
    """Collapse each mention span into a single atomic stream item.

    Non-mention tokens pass through unchanged, order preserved.
    """
    streams: list[list[MentionToken]] = []
    for a in tagged:
        mentions = a.mentions()
        starts = {m.start: m for m in mentions}
        stream: list[MentionToken] = []
        i = 0
        tokens = a.utterance.tokens
        while i < len(tokens):
            m = starts.get(i)
            if m is not None:
                stream.append(MentionToken(m.surface, True))
                i = m.end
            else:
                stream.append(MentionToken(tokens[i], False))
                i += 1
        streams.append(stream)
    return streams


def collect_mentions(
    tagged: Iterable[AnnotatedUtterance],
) -> dict[IntentRole, Counter]:
    """Count mention surfaces per role across a tagged corpus."""
    out: dict[IntentRole, Counter] = {}
    for a in tagged:
        for m in a.mentions():
            out.setdefault(m.role, Counter())[m.surface] += 1
    return out


@dataclass(frozen=True, slots=True)
class EmbedConfig:
    dim: int = 128
    window: int = 2
    skip_number: int = 2
    negatives: int = 64
    epochs: int = 5
    lr: float = 0.025
    min_lr_frac: float = 1e-4
    seed: int = 0
    ngram_order: int = 2
    uniform_negatives: bool = False
    unigram_power: float = 0.75

    def __post_init__(self):
        if self.dim <= 0 or self.window <= 0 or self.negatives < 0:
            raise ValueError("dim and window must be positive, negatives non-negative")
        if self.epochs <= 0 or self.lr <= 0:
            raise ValueError("epochs and lr must be positive")


def _build_vocab(counts: Counter) -> tuple[list[str], dict[str, int]]:
    """Deterministic id assignment: frequency descending, then lexicographic."""
    items = sorted(counts, key=lambda t: (-counts[t], t))
    return items, {t: i for i, t in enumerate(items)}


def _negative_cdf(counts: np.ndarray, cfg: EmbedConfig) -> np.ndarray:
    if cfg.uniform_negatives:
        probs = np.ones_like(counts, dtype=np.float64)
    else:
        probs = counts.astype(np.float64) ** cfg.unigram_power
    probs /= probs.sum()
    return np.cumsum(probs)


def _sample_negatives(
    cdf: np.ndarray, positive: int, k: int, rng: np.random.Generator
) -> np.ndarray:
    """Draw k ids from the noise distribution, dropping hits on the positive."""
    draws = np.searchsorted(cdf, rng.random(k))
    return draws[draws != positive]


def _context_offsets(
    pos: int, length: int, span: int, cfg: EmbedConfig, rng: np.random.Generator
) -> list[int]:
    """Pick up to skip_number context positions inside the window around a span.

    The span occupies [pos, pos+span); the window extends cfg.window
    items to each side of it.
    """
    cands = [
        j
        for j in range(pos - cfg.window, pos + span + cfg.window)
        if 0 <= j < length and not (pos <= j < pos + span)
    ]
    if len(cands) <= cfg.skip_number:
        return cands
    picks = rng.choice(len(cands), size=cfg.skip_number, replace=False)
    return [cands[j] for j in sorted(picks)]


# ---------------------------------------------------------------------------
# Skip-gram over stream items (plain and with n-gram vocabulary)
# ---------------------------------------------------------------------------

_TABLE_MAGIC = b"SFEM"


@dataclass
class EmbeddingTable:
    """Fixed lookup table from item surface to vector.

    embed() returns None for items absent from the vocabulary; callers
    must treat that as a distinct outcome, never as a zero vector.
    """

    method: str
    dim: int
    vectors: dict[str, np.ndarray]

    def embed(self, mention: str) -> np.ndarray | None:
        if not mention:
            raise ValueError("cannot embed an empty string")
        return self.vectors.get(mention)

    def __contains__(self, mention: str) -> bool:
        return mention in self.vectors

    def __len__(self) -> int:
        return len(self.vectors)

    def save(self, path: str | Path) -> None:
        """Binary layout: magic, version, method, dim, count, then
        length-prefixed UTF-8 surface + float32 little-endian vector."""
        with Path(path).open("wb") as fh:
            fh.write(_TABLE_MAGIC)
            fh.write(struct.pack("<BB", 1, {"w2v": 0, "p2v": 1}.get(self.method, 255)))
            fh.write(struct.pack("<IQ", self.dim, len(self.vectors)))
            for surface in sorted(self.vectors):
                raw = surface.encode("utf-8")
                fh.write(struct.pack("<I", len(raw)))
                fh.write(raw)
                fh.write(self.vectors[surface].astype("<f4").tobytes())

    @classmethod
    def load(cls, path: str | Path) -> "EmbeddingTable":
        with Path(path).open("rb") as fh:
            magic = fh.read(4)
            if magic != _TABLE_MAGIC:
                raise ValueError(f"{path}: not an embedding table file")
            _, method_code = struct.unpack("<BB", fh.read(2))
            dim, count = struct.unpack("<IQ", fh.read(12))
            method = {0: "w2v", 1: "p2v"}.get(method_code, "unknown")
            vectors: dict[str, np.ndarray] = {}
            for _ in range(count):
                (nbytes,) = struct.unpack("<I", fh.read(4))
                surface = fh.read(nbytes).decode("utf-8")
                vec = np.frombuffer(fh.read(4 * dim), dtype="<f4").astype(np.float64)
                vectors[surface] = vec
        return cls(method=method, dim=dim, vectors=vectors)

    def save_tsv(self, path: str | Path) -> None:
        with Path(path).open("w", encoding="utf-8") as fh:
            for surface in sorted(self.vectors):
                vals = "\t".join(repr(float(x)) for x in self.vectors[surface])
                fh.write(f"{surface}\t{vals}\n")


def _stream_texts(streams: Sequence[Sequence[MentionToken]]) -> list[list[str]]:
    return [[it.text for it in stream] for stream in streams]


def train_skipgram(
    streams: Sequence[Sequence[MentionToken]],
    cfg: EmbedConfig = EmbedConfig(),
    mode: str = "w2v",
) -> EmbeddingTable:
    """Skip-gram with negative sampling, plain SGD, linearly decaying rate.

    mode "w2v" treats every stream item as a vocabulary entry. Mode
    "p2v" additionally registers item n-grams (orders 2..ngram_order)
    as vocabulary entries; an n-gram acts as a training center whose
    contexts are drawn around its span, so multi-item phrases get
    vectors of their own. Negative draws that hit the positive item are
    dropped rather than resampled.
    """
    if mode not in ("w2v", "p2v"):
        raise ValueError(f"unknown skip-gram mode {mode!r}")
    texts = _stream_texts(streams)
    counts: Counter = Counter()
    for stream in texts:
        counts.update(stream)
    if not counts:
        raise ValueError("no stream items to train on")

    # (surface, start, span) triples per stream; unigrams first, then n-grams.
    centers_per_stream: list[list[tuple[str, int, int]]] = []
    for stream in texts:
        centers = [(t, i, 1) for i, t in enumerate(stream)]
        if mode == "p2v":
            for order in range(2, cfg.ngram_order + 1):
                for i in range(len(stream) - order + 1):
                    gram = " ".join(stream[i : i + order])
                    centers.append((gram, i, order))
                    counts[gram] += 1
        centers_per_stream.append(centers)

    items, index = _build_vocab(counts)
    count_arr = np.array([counts[t] for t in items], dtype=np.float64)
    cdf = _negative_cdf(count_arr, cfg)

    rng = np.random.default_rng(cfg.seed)
    v = len(items)
    W_in = (rng.random((v, cfg.dim)) - 0.5) / cfg.dim
    W_out = np.zeros((v, cfg.dim))

    total_centers = sum(len(c) for c in centers_per_stream) * cfg.epochs
    seen = 0
    for _ in range(cfg.epochs):
        for stream, centers in zip(texts, centers_per_stream):
            n = len(stream)
            for surface, pos, span in centers:
                seen += 1
                alpha = cfg.lr * max(cfg.min_lr_frac, 1.0 - seen / total_centers)
                t_id = index[surface]
                for j in _context_offsets(pos, n, span, cfg, rng):
                    c_id = index[stream[j]]
                    negs = _sample_negatives(cdf, c_id, cfg.negatives, rng)
                    h = W_in[t_id]
                    grad_h = np.zeros(cfg.dim)
                    for target, label in [(c_id, 1.0)] + [(int(x), 0.0) for x in negs]:
                        f = expit(np.dot(h, W_out[target]))
                        g = alpha * (label - f)
                        grad_h += g * W_out[target]
                        W_out[target] += g * h
                    W_in[t_id] += grad_h

    vectors = {t: W_in[index[t]].copy() for t in items}
    return EmbeddingTable(method=mode, dim=cfg.dim, vectors=vectors)


# ---------------------------------------------------------------------------
# Subword CNN encoder
# ---------------------------------------------------------------------------

UNK = "<unk>"


class CnnSample(NamedTuple):
    """One training pair: encoder input plus positive/negative item ids."""

    center_ids: tuple[int, ...]
    positive: int
    negatives: tuple[int, ...]


@dataclass
class SubwordCnnEncoder:
    """Convolutional composition of subword vectors into a mention vector.

    Subwords are the whitespace-split pieces of the mention surface.
    Each filter width w convolves over w consecutive subword vectors;
    tanh activations are max-pooled over positions and the per-width
    results concatenated. Inputs longer than max_len are truncated
    with a warning; unknown subwords map to a learned unknown vector,
    so every non-empty mention gets an embedding.
    """

    vocab: dict[str, int]
    E: np.ndarray
    filters: dict[int, tuple[np.ndarray, np.ndarray]]
    max_len: int = 16
    method: str = "cnn"

    @property
    def dim(self) -> int:
        return sum(W.shape[1] for W, _ in self.filters.values())

    @property
    def widths(self) -> tuple[int, ...]:
        return tuple(sorted(self.filters))

    def subword_ids(self, mention: str) -> tuple[int, ...]:
        if not mention or not mention.split():
            raise ValueError("cannot embed an empty string")
        pieces = mention.split()
        if len(pieces) > self.max_len:
            logger.warning(
                "mention %r has %d subwords; truncating to %d",
                mention, len(pieces), self.max_len,
            )
            pieces = pieces[: self.max_len]
        unk = self.vocab[UNK]
        return tuple(self.vocab.get(p, unk) for p in pieces)

    def embed(self, mention: str) -> np.ndarray:
        return _cnn_forward(self, self.subword_ids(mention))[0]

    def save(self, path: str | Path) -> None:
        arrays: dict[str, np.ndarray] = {
            "E": self.E,
            "max_len": np.array(self.max_len),
            "widths": np.array(self.widths),
            "vocab_json": np.array(json.dumps(self.vocab, ensure_ascii=False)),
        }
        for w, (W, b) in self.filters.items():
            arrays[f"W_{w}"] = W
            arrays[f"b_{w}"] = b
        with Path(path).open("wb") as fh:
            np.savez(fh, **arrays)

    @classmethod
    def load(cls, path: str | Path) -> "SubwordCnnEncoder":
        data = np.load(path, allow_pickle=False)
        vocab = json.loads(str(data["vocab_json"]))
        widths = [int(w) for w in data["widths"]]
        filters = {w: (data[f"W_{w}"], data[f"b_{w}"]) for w in widths}
        return cls(
            vocab=vocab,
            E=data["E"],
            filters=filters,
            max_len=int(data["max_len"]),
        )


def _cnn_forward(
    enc: SubwordCnnEncoder, ids: Sequence[int]
) -> tuple[np.ndarray, dict]:
    """Encode subword ids; returns (vector, cache for backprop).

    Short inputs are padded with zero rows (not learned) up to the
    largest filter width.
    """
    L = len(ids)
    padded = max(L, max(enc.widths))
    X = np.zeros((padded, enc.E.shape[1]))
    X[:L] = enc.E[list(ids)]
    pooled = []
    cache: dict = {"ids": ids, "X": X, "per_width": {}}
    for w in enc.widths:
        W, b = enc.filters[w]
        P = padded - w + 1
        A = np.stack([X[i : i + w].reshape(-1) for i in range(P)])
        Z = np.tanh(A @ W + b)
        arg = np.argmax(Z, axis=0)
        pooled.append(Z[arg, np.arange(Z.shape[1])])
        cache["per_width"][w] = (A, Z, arg)
    return np.concatenate(pooled), cache


def _cnn_backward(
    enc: SubwordCnnEncoder, cache: dict, d_vec: np.ndarray
) -> tuple[dict[int, np.ndarray], dict[int, tuple[np.ndarray, np.ndarray]]]:
    """Backprop d(loss)/d(vector) to sparse dE (by row) and per-filter (dW, db)."""
    ids = cache["ids"]
    X = cache["X"]
    dX = np.zeros_like(X)
    d_filters: dict[int, tuple[np.ndarray, np.ndarray]] = {}
    offset = 0
    for w in enc.widths:
        W, b = enc.filters[w]
        m = W.shape[1]
        A, Z, arg = cache["per_width"][w]
        d_pool = d_vec[offset : offset + m]
        offset += m
        dZ = np.zeros_like(Z)
        dZ[arg, np.arange(m)] = d_pool
        d_pre = dZ * (1.0 - Z * Z)
        dW = A.T @ d_pre
        db = d_pre.sum(axis=0)
        dA = d_pre @ W.T
        for i in range(A.shape[0]):
            dX[i : i + w] += dA[i].reshape(w, -1)
        d_filters[w] = (dW, db)
    dE_rows: dict[int, np.ndarray] = {}
    for pos, idx in enumerate(ids):
        if pos >= X.shape[0]:
            break
        dE_rows[idx] = dE_rows.get(idx, 0.0) + dX[pos]
    return dE_rows, d_filters


def _sample_loss_and_grads(
    enc: SubwordCnnEncoder, out_vectors: np.ndarray, sample: CnnSample
) -> tuple[float, dict[int, np.ndarray], dict[int, tuple[np.ndarray, np.ndarray]], dict[int, np.ndarray]]:
    """Negative-sampling loss and gradients for one pair.

    loss = -log sigmoid(o_pos . p) - sum_neg log sigmoid(-o_neg . p)
    """
    p_vec, cache = _cnn_forward(enc, sample.center_ids)
    loss = 0.0
    d_p = np.zeros_like(p_vec)
    d_out: dict[int, np.ndarray] = {}
    for target, label in [(sample.positive, 1.0)] + [
        (n, 0.0) for n in sample.negatives
    ]:
        o = out_vectors[target]
        x = float(np.dot(o, p_vec))
        loss += np.logaddexp(0.0, -x) if label else np.logaddexp(0.0, x)
        g = float(expit(x)) - label
        d_p += g * o
        d_out[target] = d_out.get(target, 0.0) + g * p_vec
    dE_rows, d_filters = _cnn_backward(enc, cache, d_p)
    return loss, dE_rows, d_filters, d_out


def cnn_loss(
    enc: SubwordCnnEncoder, out_vectors: np.ndarray, batch: Sequence[CnnSample]
) -> float:
    """Total negative-sampling loss of a batch (sum over pairs)."""
    total = 0.0
    for sample in batch:
        p_vec, _ = _cnn_forward(enc, sample.center_ids)
        for target, label in [(sample.positive, 1.0)] + [
            (n, 0.0) for n in sample.negatives
        ]:
            x = float(np.dot(out_vectors[target], p_vec))
            total += np.logaddexp(0.0, -x) if label else np.logaddexp(0.0, x)
    return float(total)


@dataclass
class CnnGradients:
    E: np.ndarray
    filters: dict[int, tuple[np.ndarray, np.ndarray]]
    out: np.ndarray


def cnn_loss_and_gradients(
    enc: SubwordCnnEncoder, out_vectors: np.ndarray, batch: Sequence[CnnSample]
) -> tuple[float, CnnGradients]:
    """Dense analytic gradients of the batch loss w.r.t. every parameter.

    The same backward pass drives training, so checking these against
    finite differences checks the trainer's arithmetic too.
    """
    dE = np.zeros_like(enc.E)
    d_filters = {
        w: (np.zeros_like(W), np.zeros_like(b)) for w, (W, b) in enc.filters.items()
    }
    d_out = np.zeros_like(out_vectors)
    total = 0.0
    for sample in batch:
        loss, dE_rows, df, do = _sample_loss_and_grads(enc, out_vectors, sample)
        total += loss
        for idx, g in dE_rows.items():
            dE[idx] += g
        for w, (dW, db) in df.items():
            d_filters[w][0][...] += dW
            d_filters[w][1][...] += db
        for idx, g in do.items():
            d_out[idx] += g
    return float(total), CnnGradients(E=dE, filters=d_filters, out=d_out)


@dataclass
class CnnTrainResult:
    encoder: SubwordCnnEncoder
    out_vectors: np.ndarray
    item_index: dict[str, int]
    held_out_losses: list[float]


def new_cnn_encoder(
    subwords: Iterable[str],
    subword_dim: int = 32,
    feature_maps: int = 32,
    widths: Sequence[int] = (1, 2, 3, 4),
    max_len: int = 16,
    seed: int = 0,
) -> SubwordCnnEncoder:
    """Freshly initialized encoder; the output dimension is len(widths) * feature_maps."""
    rng = np.random.default_rng(seed)
    pieces = sorted(set(subwords))
    vocab = {UNK: 0}
    for p in pieces:
        if p not in vocab:
            vocab[p] = len(vocab)
    E = (rng.random((len(vocab), subword_dim)) - 0.5) / subword_dim
    filters = {}
    for w in widths:
        fan_in = w * subword_dim
        W = (rng.random((fan_in, feature_maps)) - 0.5) / np.sqrt(fan_in)
        b = np.zeros(feature_maps)
        filters[int(w)] = (W, b)
    return SubwordCnnEncoder(vocab=vocab, E=E, filters=filters, max_len=max_len)


def train_cnn_encoder(
    streams: Sequence[Sequence[MentionToken]],
    cfg: EmbedConfig = EmbedConfig(),
    subword_dim: int = 32,
    feature_maps: int = 32,
    widths: Sequence[int] = (1, 2, 3, 4),
    held_out_fraction: float = 0.05,
) -> CnnTrainResult:
    """Train the encoder on mention items with stream items as contexts.

    Centers are mention items only (the encoder exists to embed
    mentions); context and negative vectors are free parameters, one
    per distinct stream item. A fixed fraction of the first epoch's
    pairs is split off to track held-out loss per epoch; it never
    receives gradient updates.
    """
    counts: Counter = Counter()
    for stream in streams:
        counts.update(it.text for it in stream)
    if not counts:
        raise ValueError("no stream items to train on")
    items, index = _build_vocab(counts)
    count_arr = np.array([counts[t] for t in items], dtype=np.float64)
    cdf = _negative_cdf(count_arr, cfg)

    mention_surfaces = sorted(
        {it.text for stream in streams for it in stream if it.is_mention}
    )
    if not mention_surfaces:
        raise ValueError("no mention items in the streams")
    subwords = {piece for s in mention_surfaces for piece in s.split()}
    enc = new_cnn_encoder(
        subwords,
        subword_dim=subword_dim,
        feature_maps=feature_maps,
        widths=widths,
        seed=cfg.seed,
    )
    out_vectors = np.zeros((len(items), enc.dim))

    rng = np.random.default_rng(cfg.seed + 1)
    ids_cache = {m: enc.subword_ids(m) for m in mention_surfaces}

    # Materialize one epoch of pairs; re-drawing contexts each epoch
    # would be closer to classic training, but a fixed pair list makes
    # the held-out split well defined.
    pairs: list[CnnSample] = []
    for stream in streams:
        texts = [it.text for it in stream]
        n = len(texts)
        for pos, it in enumerate(stream):
            if not it.is_mention:
                continue
            for j in _context_offsets(pos, n, 1, cfg, rng):
                c_id = index[texts[j]]
                negs = _sample_negatives(cdf, c_id, cfg.negatives, rng)
                pairs.append(
                    CnnSample(ids_cache[it.text], c_id, tuple(int(x) for x in negs))
                )
    if not pairs:
        raise ValueError("no training pairs; streams may be too short")

    perm = rng.permutation(len(pairs))
    n_held = int(len(pairs) * held_out_fraction)
    held = [pairs[i] for i in perm[:n_held]]
    train = [pairs[i] for i in perm[n_held:]]
    if not train:
        train, held = [pairs[i] for i in perm], []

    held_out_losses: list[float] = []
    total_steps = len(train) * cfg.epochs
    seen = 0
    for _ in range(cfg.epochs):
        order = rng.permutation(len(train))
        for i in order:
            seen += 1
            alpha = cfg.lr * max(cfg.min_lr_frac, 1.0 - seen / total_steps)
            sample = train[i]
            _, dE_rows, d_filters, d_out = _sample_loss_and_grads(
                enc, out_vectors, sample
            )
            for idx, g in dE_rows.items():
                enc.E[idx] -= alpha * g
            for w, (dW, db) in d_filters.items():
                W, b = enc.filters[w]
                W -= alpha * dW
                b -= alpha * db
            for idx, g in d_out.items():
                out_vectors[idx] -= alpha * g
        if held:
            held_out_losses.append(cnn_loss(enc, out_vectors, held) / len(held))

    return CnnTrainResult(
        encoder=enc,
        out_vectors=out_vectors,
        item_index=index,
        held_out_losses=held_out_losses,
    )
