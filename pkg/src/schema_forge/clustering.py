"""Mention clustering and the concept repository built from cluster output.

Three clusterers share one sparse-graph input format: iterative label
propagation over a row-normalized similarity graph, plain K-means on
raw vectors, and a description-length minimizer over the graph's random
walk. Cluster ids coming out of any of them are dense, deterministic,
and stable under input scaling.
"""

import hashlib
import json
import logging
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np
from scipy import sparse

from schema_forge.corpus import IntentRole

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TransitionMatrix:
    """Row-normalized sparse similarity graph with at most k entries per row.

    Rows that kept no positive similarity are flagged isolated; their
    rows are empty rather than renormalized garbage.
    """

    matrix: sparse.csr_matrix
    k: int
    isolated: np.ndarray

    @property
    def n(self) -> int:
        return self.matrix.shape[0]


def build_knn_graph(
    vectors: Sequence[np.ndarray] | np.ndarray, k: int, threads: int = 1
) -> TransitionMatrix:
    """Cosine k-nearest-neighbor graph, row-normalized to transition weights.

    Per row the k largest cosine similarities are kept (self excluded),
    negatives clamped to zero, zeros dropped, and the remainder scaled
    to sum to one. Zero-norm vectors and rows left with nothing are
    isolated. Uniformly scaling all inputs does not change the result.
    """
    V = np.asarray(vectors, dtype=np.float64)
    if V.ndim != 2:
        raise ValueError(f"expected a 2-d array of vectors, got shape {V.shape}")
    n = V.shape[0]
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if k > n - 1:
        logger.warning("k=%d exceeds n-1=%d; clamping", k, n - 1)
        k = max(1, n - 1)

    norms = np.linalg.norm(V, axis=1)
    zero_norm = norms == 0.0
    U = np.zeros_like(V)
    np.divide(V, norms[:, None], out=U, where=~zero_norm[:, None])

    indptr = np.zeros(n + 1, dtype=np.int64)
    col_chunks: list[np.ndarray] = [None] * n  # type: ignore[list-item]
    val_chunks: list[np.ndarray] = [None] * n  # type: ignore[list-item]
    isolated = zero_norm.copy()

    def process_rows(lo: int, hi: int) -> None:
        S = U[lo:hi] @ U.T
        for r in range(lo, hi):
            row = S[r - lo]
            row[r] = -np.inf
            if zero_norm[r]:
                col_chunks[r] = np.empty(0, dtype=np.int64)
                val_chunks[r] = np.empty(0)
                continue
            if k < n - 1:
                part = np.argpartition(row, -k)[-k:]
            else:
                part = np.arange(n)
                part = part[part != r]
            order = np.lexsort((part, -row[part]))
            top = part[order]
            vals = np.maximum(row[top], 0.0)
            keep = vals > 0.0
            top, vals = top[keep], vals[keep]
            s = vals.sum()
            if s <= 0.0:
                isolated[r] = True
                col_chunks[r] = np.empty(0, dtype=np.int64)
                val_chunks[r] = np.empty(0)
            else:
                col_chunks[r] = top.astype(np.int64)
                val_chunks[r] = vals / s

    block = max(16, min(n, 4_000_000 // max(n, 1) + 1))
    spans = [(lo, min(lo + block, n)) for lo in range(0, n, block)]
    if threads > 1 and len(spans) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            list(ex.map(lambda s: process_rows(*s), spans))
    else:
        for lo, hi in spans:
            process_rows(lo, hi)

    for r in range(n):
        indptr[r + 1] = indptr[r] + len(col_chunks[r])
    indices = np.concatenate(col_chunks) if n else np.empty(0, dtype=np.int64)
    data = np.concatenate(val_chunks) if n else np.empty(0)
    mat = sparse.csr_matrix((data, indices, indptr), shape=(n, n))
    return TransitionMatrix(matrix=mat, k=k, isolated=isolated)


@dataclass(frozen=True)
class ClusterAssignment:
    """Dense cluster labels for n items, plus how they were produced."""

    labels: np.ndarray
    n_clusters: int
    method: str
    iterations: int = 0
    objective: float | None = None


def _densify(raw: np.ndarray) -> tuple[np.ndarray, int]:
    """Relabel to 0..C-1 in order of first appearance."""
    mapping: dict[int, int] = {}
    out = np.empty(len(raw), dtype=np.int64)
    for i, lab in enumerate(raw):
        lab = int(lab)
        if lab not in mapping:
            mapping[lab] = len(mapping)
        out[i] = mapping[lab]
    return out, len(mapping)


def lpa_cluster(
    T: TransitionMatrix, max_iters: int = 100, tol: float = 1e-6
) -> ClusterAssignment:
    """Iterative label propagation: start from identity memberships and
    repeatedly average each node's membership over its neighbors.

    Stops when the largest membership change drops below tol or after
    max_iters rounds. Each node then takes the cluster of its largest
    membership entry; entries within 10*tol of the row maximum count as
    tied and the lowest column index wins, so groups whose memberships
    have mixed to numerical equality land in one cluster. Isolated
    nodes keep singleton clusters of their own.
    """
    n = T.n
    if n == 0:
        return ClusterAssignment(np.empty(0, dtype=np.int64), 0, "lpa")
    Y = np.eye(n)
    iso = np.flatnonzero(T.isolated)
    iterations = 0
    for iterations in range(1, max_iters + 1):
        Y_new = T.matrix @ Y
        if len(iso):
            Y_new[iso, iso] = 1.0  # isolated nodes keep their own membership
        delta = float(np.max(np.abs(Y_new - Y)))
        Y = Y_new
        if delta < tol:
            break
    row_max = Y.max(axis=1, keepdims=True)
    raw = np.argmax(Y >= row_max - 10.0 * tol, axis=1)
    raw[iso] = iso  # immune to stray zero-row argmax
    labels, n_clusters = _densify(raw)
    return ClusterAssignment(labels, n_clusters, "lpa", iterations=iterations)


def kmeans_cluster(
    vectors: Sequence[np.ndarray] | np.ndarray,
    n_clusters: int,
    seed: int = 0,
    max_iters: int = 100,
) -> ClusterAssignment:
    """Lloyd iterations from a distance-weighted random init.

    Ties in assignment go to the lowest centroid index. A centroid that
    loses all its points is reseeded to the point currently farthest
    from its own centroid, which cannot increase the objective.
    """
    X = np.asarray(vectors, dtype=np.float64)
    n = X.shape[0]
    if not 1 <= n_clusters <= n:
        raise ValueError(f"need 1 <= n_clusters <= {n}, got {n_clusters}")
    rng = np.random.default_rng(seed)

    centroids = np.empty((n_clusters, X.shape[1]))
    first = int(rng.integers(n))
    centroids[0] = X[first]
    d2 = np.sum((X - centroids[0]) ** 2, axis=1)
    for j in range(1, n_clusters):
        total = d2.sum()
        if total <= 0.0:
            centroids[j] = X[int(rng.integers(n))]
            continue
        r = rng.random() * total
        idx = int(np.searchsorted(np.cumsum(d2), r))
        idx = min(idx, n - 1)
        centroids[j] = X[idx]
        d2 = np.minimum(d2, np.sum((X - centroids[j]) ** 2, axis=1))

    labels = np.zeros(n, dtype=np.int64)
    iterations = 0
    for iterations in range(1, max_iters + 1):
        dists = (
            np.sum(X * X, axis=1)[:, None]
            - 2.0 * X @ centroids.T
            + np.sum(centroids * centroids, axis=1)[None, :]
        )
        new_labels = np.argmin(dists, axis=1)
        for j in range(n_clusters):
            members = new_labels == j
            if members.any():
                centroids[j] = X[members].mean(axis=0)
            else:
                own = dists[np.arange(n), new_labels]
                far = int(np.argmax(own))
                centroids[j] = X[far]
                new_labels[far] = j
                dists[far, j] = 0.0
        if np.array_equal(new_labels, labels) and iterations > 1:
            break
        labels = new_labels

    dists = np.sum((X - centroids[labels]) ** 2, axis=1)
    labels, n_found = _densify(labels)
    return ClusterAssignment(
        labels, n_found, "kmeans", iterations=iterations, objective=float(dists.sum())
    )


# ---------------------------------------------------------------------------
# Description-length clustering over the walk graph
# ---------------------------------------------------------------------------


def _plogp(x: float) -> float:
    return x * np.log2(x) if x > 0.0 else 0.0


def _symmetric_flows(T: TransitionMatrix | sparse.spmatrix | np.ndarray):
    """Symmetrize, drop the diagonal, normalize to per-step visit flows."""
    M = T.matrix if isinstance(T, TransitionMatrix) else T
    M = sparse.csr_matrix(M, dtype=np.float64)
    W = (M + M.T) * 0.5
    W = W.tolil()
    W.setdiag(0.0)
    W = W.tocsr()
    W.eliminate_zeros()
    total = W.sum()
    return W, float(total)


def map_equation(
    T: TransitionMatrix | sparse.spmatrix | np.ndarray, labels: Sequence[int]
) -> float:
    """Two-level description length of a partition, in bits.

    Uses the symmetrized graph's stationary visit rates. An edgeless
    graph has length zero by convention.
    """
    W, total = _symmetric_flows(T)
    n = W.shape[0]
    if len(labels) != n:
        raise ValueError(f"{len(labels)} labels for {n} nodes")
    if total <= 0.0:
        return 0.0
    labels = np.asarray(labels, dtype=np.int64)
    p = np.asarray(W.sum(axis=1)).ravel() / total

    modules = np.unique(labels)
    q = np.zeros(len(modules))
    pm = np.zeros(len(modules))
    mod_index = {int(m): i for i, m in enumerate(modules)}
    coo = W.tocoo()
    for a, b, w in zip(coo.row, coo.col, coo.data):
        ma, mb = mod_index[int(labels[a])], mod_index[int(labels[b])]
        if ma != mb:
            q[ma] += w / total
    for a in range(n):
        pm[mod_index[int(labels[a])]] += p[a]

    Q = float(q.sum())
    L = _plogp(Q)
    L -= 2.0 * sum(_plogp(float(x)) for x in q)
    L -= sum(_plogp(float(x)) for x in p)
    L += sum(_plogp(float(qi + pi)) for qi, pi in zip(q, pm))
    return float(L)


def _greedy_moves(
    p: np.ndarray, adj: list[dict[int, float]], rng: np.random.Generator
) -> np.ndarray:
    """One level of local moves: each node may join a neighbor's module
    when that strictly shortens the description. Returns module labels."""
    n = len(p)
    d = np.array([sum(a.values()) for a in adj])
    module = np.arange(n)
    q = d.copy()
    pm = p.copy()
    Q = float(q.sum())

    improved = True
    while improved:
        improved = False
        for alpha in rng.permutation(n):
            a = int(module[alpha])
            k_to: dict[int, float] = {}
            for beta, f in adj[alpha].items():
                k_to[int(module[beta])] = k_to.get(int(module[beta]), 0.0) + f
            k_a = k_to.get(a, 0.0)
            q_a_new = q[a] - d[alpha] + 2.0 * k_a
            pa_new = pm[a] - p[alpha]

            best_b, best_delta = -1, -1e-12
            base = (
                -2.0 * (_plogp(q[a]))
                + _plogp(q[a] + pm[a])
            )
            for b in sorted(k_to):
                if b == a:
                    continue
                k_b = k_to[b]
                q_b_new = q[b] + d[alpha] - 2.0 * k_b
                Q_new = Q + 2.0 * (k_a - k_b)
                delta = (
                    _plogp(Q_new)
                    - _plogp(Q)
                    - 2.0 * (_plogp(q_a_new) + _plogp(q_b_new) - _plogp(q[b]))
                    + _plogp(q_a_new + pa_new)
                    + _plogp(q_b_new + pm[b] + p[alpha])
                    - _plogp(q[b] + pm[b])
                    - base
                )
                if delta < best_delta:
                    best_delta, best_b = delta, b
            if best_b >= 0:
                b = best_b
                k_b = k_to[b]
                Q += 2.0 * (k_a - k_b)
                q[a] = q_a_new
                pm[a] = pa_new
                q[b] = q[b] + d[alpha] - 2.0 * k_b
                pm[b] = pm[b] + p[alpha]
                module[alpha] = b
                improved = True
    return module


def mine_cluster(
    T: TransitionMatrix | sparse.spmatrix | np.ndarray, seed: int = 0
) -> ClusterAssignment:
    """Minimize the two-level description length by greedy moves plus
    module aggregation, repeated until neither level improves.

    The objective never increases during the search. Nodes with no
    edges end up in singleton modules. Deterministic for a fixed seed.
    """
    W, total = _symmetric_flows(T)
    n = W.shape[0]
    if n == 0:
        return ClusterAssignment(np.empty(0, dtype=np.int64), 0, "mine")
    if total <= 0.0:
        labels = np.arange(n, dtype=np.int64)
        return ClusterAssignment(labels, n, "mine", objective=0.0)

    rng = np.random.default_rng(seed)
    p = np.asarray(W.sum(axis=1)).ravel() / total
    coo = W.tocoo()
    adj: list[dict[int, float]] = [dict() for _ in range(n)]
    for a, b, w in zip(coo.row, coo.col, coo.data):
        if a != b:
            adj[int(a)][int(b)] = adj[int(a)].get(int(b), 0.0) + w / total

    node_to_orig = [[i] for i in range(n)]
    final = np.arange(n, dtype=np.int64)
    level = 0
    while True:
        level += 1
        module = _greedy_moves(p, adj, rng)
        module, n_mod = _densify(module)
        for node, m in enumerate(module):
            for orig in node_to_orig[node]:
                final[orig] = m
        if n_mod == len(p):
            break
        # aggregate modules into supernodes; internal flow disappears
        # into the supernode (it can never cross a boundary again)
        new_p = np.zeros(n_mod)
        for node, m in enumerate(module):
            new_p[m] += p[node]
        new_adj: list[dict[int, float]] = [dict() for _ in range(n_mod)]
        for a in range(len(adj)):
            ma = int(module[a])
            for b, f in adj[a].items():
                mb = int(module[b])
                if ma != mb:
                    new_adj[ma][mb] = new_adj[ma].get(mb, 0.0) + f
        groups: list[list[int]] = [[] for _ in range(n_mod)]
        for node, m in enumerate(module):
            groups[m].extend(node_to_orig[node])
        p, adj, node_to_orig = new_p, new_adj, groups

    labels, n_clusters = _densify(final)
    return ClusterAssignment(
        labels, n_clusters, "mine", objective=map_equation(T, labels)
    )


# ---------------------------------------------------------------------------
# Concepts
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Concept:
    """A named cluster of mention surfaces, all sharing one role."""

    id: int
    role: IntentRole
    name: str
    mentions: tuple[str, ...]

    def __post_init__(self):
        if self.id < 0:
            raise ValueError(f"concept id must be non-negative, got {self.id}")
        if not self.name:
            raise ValueError(f"concept {self.id} has an empty name")
        if any(not m for m in self.mentions):
            raise ValueError(f"concept {self.id} contains an empty mention")

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "role": self.role.value,
            "name": self.name,
            "mentions": list(self.mentions),
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "Concept":
        return cls(
            id=int(obj["id"]),
            role=IntentRole(obj["role"]),
            name=str(obj["name"]),
            mentions=tuple(obj["mentions"]),
        )


def name_concepts(
    labels: Sequence[int] | ClusterAssignment,
    mentions: Sequence[str],
    role: IntentRole,
    frequencies: Mapping[str, int] | None = None,
    id_start: int = 0,
) -> list[Concept]:
    """Turn one role's cluster assignment into named concepts.

    The concept name is the most frequent member mention, breaking ties
    toward the lexicographically smallest. Concept ids are id_start
    plus the dense cluster id.
    """
    if isinstance(labels, ClusterAssignment):
        labels = labels.labels
    if len(labels) != len(mentions):
        raise ValueError(f"{len(labels)} labels for {len(mentions)} mentions")
    if len(set(mentions)) != len(mentions):
        raise ValueError("duplicate mention surfaces in clustering input")
    freq = frequencies or {}
    clusters: dict[int, list[str]] = {}
    for lab, m in zip(labels, mentions):
        clusters.setdefault(int(lab), []).append(m)
    concepts = []
    for lab in sorted(clusters):
        members = sorted(clusters[lab])
        name = min(members, key=lambda m: (-freq.get(m, 1), m))
        concepts.append(
            Concept(id=id_start + lab, role=role, name=name, mentions=tuple(members))
        )
    return concepts


class ConceptRepository:
    """Immutable collection of concepts with unique (mention, role) keys.

    Lookups are exact string matches. Mutation happens by constructing
    a new repository (see the refinement operations in the service
    module), never in place.
    """

    def __init__(self, concepts: Iterable[Concept] = ()):
        ordered = tuple(sorted(concepts, key=lambda c: c.id))
        ids = [c.id for c in ordered]
        if len(set(ids)) != len(ids):
            dup = [i for i, n in Counter(ids).items() if n > 1]
            raise ValueError(f"duplicate concept ids: {dup}")
        index: dict[tuple[str, IntentRole], Concept] = {}
        for c in ordered:
            for m in c.mentions:
                key = (m, c.role)
                if key in index:
                    raise ValueError(
                        f"mention {m!r} with role {c.role.value} appears in concepts "
                        f"{index[key].id} and {c.id}"
                    )
                index[key] = c
        self._concepts = ordered
        self._by_id = {c.id: c for c in ordered}
        self._index = index

    @property
    def concepts(self) -> tuple[Concept, ...]:
        return self._concepts

    def __len__(self) -> int:
        return len(self._concepts)

    def __iter__(self) -> Iterator[Concept]:
        return iter(self._concepts)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, ConceptRepository) and self._concepts == other._concepts
        )

    def lookup(self, mention: str, role: IntentRole) -> Concept | None:
        return self._index.get((mention, role))

    def get(self, concept_id: int) -> Concept | None:
        return self._by_id.get(concept_id)

    def role_concepts(self, role: IntentRole) -> tuple[Concept, ...]:
        return tuple(c for c in self._concepts if c.role is role)

    @property
    def max_id(self) -> int:
        return max(self._by_id, default=-1)

    def merged(self, extra: Iterable[Concept]) -> "ConceptRepository":
        return ConceptRepository(self._concepts + tuple(extra))

    def to_json(self) -> dict:
        return {"version": 1, "concepts": [c.to_json() for c in self._concepts]}

    @classmethod
    def from_json(cls, obj: Mapping) -> "ConceptRepository":
        return cls(Concept.from_json(c) for c in obj["concepts"])

    def save(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(self.to_json(), indent=2, ensure_ascii=False) + "\n",
            encoding="utf-8",
        )

    @classmethod
    def load(cls, path: str | Path) -> "ConceptRepository":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))

    def content_hash(self) -> str:
        canon = json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode("utf-8")).hexdigest()
