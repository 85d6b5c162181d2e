"""Expert refinement service: HTTP access to inference plus concept editing.

Edits never mutate the repository in place. Each operation validates
against the current repository, produces a new one, and is appended to
a JSONL edit log; replaying the log over the base repository always
reproduces the served state byte for byte. Writes are serialized by a
lock; reads serve whatever snapshot reference is current.
"""

import json
import logging
import os
import threading
import time
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Mapping, Sequence
from urllib.parse import parse_qs, urlparse

from schema_forge.clustering import Concept, ConceptRepository
from schema_forge.corpus import IntentRole, Tokenizer, Utterance
from schema_forge.embeddings import EmbeddingTable, SubwordCnnEncoder
from schema_forge.inference import ConInferConfig, UncategorizedPool, infer, neighbors
from schema_forge.irl import TaggerModel
from schema_forge.patterns import PatternSet

logger = logging.getLogger(__name__)


class RefinementError(ValueError):
    """An operation that cannot be applied to the current repository."""


class ConflictError(RuntimeError):
    """The client's base sequence number no longer matches the log head."""


VALID_OPS = ("rename", "merge", "split", "move", "create", "delete_empty")


@dataclass(frozen=True)
class RefinementOp:
    """One edit: kind plus kind-specific parameters.

    rename: concept_id, name
    merge: concept_ids (two or more, same role; smallest id and its
        name survive)
    split: concept_id, groups (a partition of the mentions; the first
        group keeps the id and name, later groups get fresh ids named
        by their smallest mention)
    move: mention, from_id, to_id
    create: role, name, optional mentions
    delete_empty: concept_id (must have no mentions)
    """

    op: str
    params: Mapping
    actor: str = "anonymous"
    timestamp: float = 0.0
    seq: int = -1

    def to_json(self) -> dict:
        return {
            "seq": self.seq,
            "op": self.op,
            "params": dict(self.params),
            "actor": self.actor,
            "timestamp": self.timestamp,
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "RefinementOp":
        return cls(
            op=str(obj["op"]),
            params=obj.get("params", {}),
            actor=str(obj.get("actor", "anonymous")),
            timestamp=float(obj.get("timestamp", 0.0)),
            seq=int(obj.get("seq", -1)),
        )


def _require(params: Mapping, key: str):
    if key not in params:
        raise RefinementError(f"missing parameter {key!r}")
    return params[key]


def _existing(repo: ConceptRepository, concept_id) -> Concept:
    try:
        cid = int(concept_id)
    except (TypeError, ValueError):
        raise RefinementError(f"concept id must be an integer, got {concept_id!r}")
    concept = repo.get(cid)
    if concept is None:
        raise RefinementError(f"no concept with id {cid}")
    return concept


def apply_refinement(repo: ConceptRepository, op: RefinementOp) -> ConceptRepository:
    """Apply one operation, returning a new repository.

    Pure and deterministic: identical repository and operation always
    produce an identical result, which is what makes log replay exact.
    """
    if op.op not in VALID_OPS:
        raise RefinementError(f"unknown operation {op.op!r}")
    params = op.params
    concepts = {c.id: c for c in repo.concepts}

    if op.op == "rename":
        c = _existing(repo, _require(params, "concept_id"))
        name = _require(params, "name")
        if not isinstance(name, str) or not name.strip():
            raise RefinementError("name must be a non-blank string")
        concepts[c.id] = Concept(c.id, c.role, name, c.mentions)

    elif op.op == "merge":
        raw_ids = _require(params, "concept_ids")
        if not isinstance(raw_ids, (list, tuple)) or len(raw_ids) < 2:
            raise RefinementError("merge needs at least two concept ids")
        members = [_existing(repo, i) for i in raw_ids]
        ids = [c.id for c in members]
        if len(set(ids)) != len(ids):
            raise RefinementError("merge ids must be distinct")
        roles = {c.role for c in members}
        if len(roles) != 1:
            raise RefinementError("cannot merge concepts of different roles")
        keeper = min(members, key=lambda c: c.id)
        merged_mentions = tuple(sorted({m for c in members for m in c.mentions}))
        for c in members:
            del concepts[c.id]
        concepts[keeper.id] = Concept(
            keeper.id, keeper.role, keeper.name, merged_mentions
        )

    elif op.op == "split":
        c = _existing(repo, _require(params, "concept_id"))
        groups = _require(params, "groups")
        if not isinstance(groups, (list, tuple)) or len(groups) < 2:
            raise RefinementError("split needs at least two groups")
        seen: list[str] = []
        for g in groups:
            if not isinstance(g, (list, tuple)) or not g:
                raise RefinementError("each split group must be a non-empty list")
            seen.extend(g)
        if sorted(seen) != sorted(c.mentions) or len(seen) != len(set(seen)):
            raise RefinementError(
                f"split groups must partition the mentions of concept {c.id}"
            )
        first = tuple(sorted(groups[0]))
        concepts[c.id] = Concept(c.id, c.role, c.name, first)
        next_id = repo.max_id + 1
        for g in groups[1:]:
            members = tuple(sorted(g))
            concepts[next_id] = Concept(next_id, c.role, min(members), members)
            next_id += 1

    elif op.op == "move":
        mention = _require(params, "mention")
        src = _existing(repo, _require(params, "from_id"))
        dst = _existing(repo, _require(params, "to_id"))
        if src.id == dst.id:
            raise RefinementError("move source and target are the same concept")
        if src.role is not dst.role:
            raise RefinementError("cannot move a mention across roles")
        if mention not in src.mentions:
            raise RefinementError(
                f"mention {mention!r} is not in concept {src.id}"
            )
        concepts[src.id] = Concept(
            src.id, src.role, src.name,
            tuple(m for m in src.mentions if m != mention),
        )
        concepts[dst.id] = Concept(
            dst.id, dst.role, dst.name, tuple(sorted(dst.mentions + (mention,)))
        )

    elif op.op == "create":
        role_name = _require(params, "role")
        try:
            role = IntentRole(role_name)
        except ValueError:
            raise RefinementError(f"unknown role {role_name!r}")
        name = _require(params, "name")
        if not isinstance(name, str) or not name.strip():
            raise RefinementError("name must be a non-blank string")
        mentions = params.get("mentions", [])
        if not isinstance(mentions, (list, tuple)):
            raise RefinementError("mentions must be a list")
        for m in mentions:
            if not isinstance(m, str) or not m:
                raise RefinementError("mentions must be non-empty strings")
            if repo.lookup(m, role) is not None:
                raise RefinementError(
                    f"mention {m!r} already belongs to a {role.value} concept"
                )
        if len(set(mentions)) != len(mentions):
            raise RefinementError("duplicate mentions in create")
        new_id = repo.max_id + 1
        concepts[new_id] = Concept(new_id, role, name, tuple(sorted(mentions)))

    elif op.op == "delete_empty":
        c = _existing(repo, _require(params, "concept_id"))
        if c.mentions:
            raise RefinementError(
                f"concept {c.id} still has {len(c.mentions)} mentions"
            )
        del concepts[c.id]

    try:
        return ConceptRepository(concepts.values())
    except ValueError as exc:
        raise RefinementError(str(exc)) from None


class EditLog:
    """Append-only JSONL log of refinement operations.

    Sequence numbers start at 1 and are assigned on append. The log
    can be replayed over a base repository to reconstruct the current
    one exactly.
    """

    def __init__(self, path: str | Path | None):
        self.path = Path(path) if path is not None else None
        self._entries: list[RefinementOp] = []
        if self.path is not None and self.path.exists():
            with self.path.open("r", encoding="utf-8") as fh:
                for lineno, line in enumerate(fh, start=1):
                    if not line.strip():
                        continue
                    try:
                        self._entries.append(RefinementOp.from_json(json.loads(line)))
                    except (json.JSONDecodeError, KeyError) as exc:
                        raise ValueError(
                            f"{self.path}:{lineno}: corrupt log entry: {exc}"
                        ) from None

    @property
    def head(self) -> int:
        return self._entries[-1].seq if self._entries else 0

    def __len__(self) -> int:
        return len(self._entries)

    def append(self, op: RefinementOp) -> RefinementOp:
        stamped = RefinementOp(
            op=op.op,
            params=dict(op.params),
            actor=op.actor,
            timestamp=op.timestamp or time.time(),
            seq=self.head + 1,
        )
        if self.path is not None:
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps(stamped.to_json(), ensure_ascii=False) + "\n")
                fh.flush()
                os.fsync(fh.fileno())
        self._entries.append(stamped)
        return stamped

    def since(self, seq: int) -> list[RefinementOp]:
        return [e for e in self._entries if e.seq > seq]

    def replay(
        self, base: ConceptRepository, upto: int | None = None
    ) -> ConceptRepository:
        repo = base
        for entry in self._entries:
            if upto is not None and entry.seq > upto:
                break
            repo = apply_refinement(repo, entry)
        return repo


@dataclass(frozen=True)
class RepositorySnapshot:
    """A repository frozen at a log position, hash included for verification."""

    repository: ConceptRepository
    log_position: int
    content_hash: str

    @classmethod
    def capture(cls, repo: ConceptRepository, log_position: int) -> "RepositorySnapshot":
        return cls(repo, log_position, repo.content_hash())

    def save(self, path: str | Path) -> None:
        obj = {
            "version": 1,
            "log_position": self.log_position,
            "content_hash": self.content_hash,
            "repository": self.repository.to_json(),
        }
        tmp = Path(str(path) + ".tmp")
        tmp.write_text(json.dumps(obj, ensure_ascii=False) + "\n", encoding="utf-8")
        tmp.replace(path)

    @classmethod
    def load(cls, path: str | Path) -> "RepositorySnapshot":
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
        repo = ConceptRepository.from_json(obj["repository"])
        snap = cls(repo, int(obj["log_position"]), str(obj["content_hash"]))
        if repo.content_hash() != snap.content_hash:
            raise ValueError(f"{path}: snapshot hash mismatch")
        return snap


# ---------------------------------------------------------------------------
# Service wiring
# ---------------------------------------------------------------------------

TAGGER_FILE = "tagger.json"
ENCODER_FILE = "encoder.npz"
TABLE_FILE = "table.bin"
CONCEPTS_FILE = "concepts.json"
PATTERNS_FILE = "patterns.json"
SNAPSHOT_FILE = "snapshot.json"


@dataclass(frozen=True)
class ServeConfig:
    model_dir: str | Path
    log_path: str | Path
    port: int = 8080
    host: str = "127.0.0.1"
    snapshot_every: int = 0
    delta: float = 0.2
    k: int = 5


class ServiceState:
    """Shared state behind the HTTP handlers.

    The repository reference swaps atomically under the write lock;
    readers use whatever reference they grabbed.
    """

    def __init__(
        self,
        tagger: TaggerModel,
        embedder,
        base_repo: ConceptRepository,
        patterns: PatternSet,
        log: EditLog,
        coninfer: ConInferConfig = ConInferConfig(),
        snapshot_every: int = 0,
        snapshot_path: str | Path | None = None,
    ):
        self.tagger = tagger
        self.embedder = embedder
        self.base_repo = base_repo
        self.patterns = patterns
        self.log = log
        self.coninfer = coninfer
        self.snapshot_every = snapshot_every
        self.snapshot_path = Path(snapshot_path) if snapshot_path else None
        self.pool = UncategorizedPool()
        self.tokenizer = Tokenizer()
        self._lock = threading.Lock()
        self.repo = log.replay(base_repo)
        self._ops_since_snapshot = 0

    @property
    def seq(self) -> int:
        return self.log.head

    def apply(self, op: RefinementOp, base_seq: int | None = None) -> RefinementOp:
        with self._lock:
            if base_seq is not None and base_seq != self.log.head:
                raise ConflictError(
                    f"base_seq {base_seq} is stale; log head is {self.log.head}"
                )
            new_repo = apply_refinement(self.repo, op)
            stamped = self.log.append(op)
            self.repo = new_repo
            self._ops_since_snapshot += 1
            if (
                self.snapshot_every > 0
                and self.snapshot_path is not None
                and self._ops_since_snapshot >= self.snapshot_every
            ):
                RepositorySnapshot.capture(new_repo, stamped.seq).save(
                    self.snapshot_path
                )
                self._ops_since_snapshot = 0
            return stamped

    def infer_text(self, uid: str, text: str, tokens: Sequence[str] | None = None):
        toks = tuple(tokens) if tokens else tuple(self.tokenizer.tokenize(text))
        if not toks:
            raise ValueError("utterance has no tokens")
        u = Utterance(id=uid, tokens=toks, raw_text=text)
        return infer(
            u, self.tagger, self.repo, self.embedder,
            self.patterns, self.coninfer, self.pool,
        )


def load_embedder(model_dir: Path):
    enc = model_dir / ENCODER_FILE
    table = model_dir / TABLE_FILE
    if enc.exists():
        return SubwordCnnEncoder.load(enc)
    if table.exists():
        return EmbeddingTable.load(table)
    raise FileNotFoundError(f"{enc} (or {table})")


def load_state(config: ServeConfig) -> ServiceState:
    """Load all artifacts; a missing file fails fast naming its path."""
    model_dir = Path(config.model_dir)
    for name in (TAGGER_FILE, CONCEPTS_FILE, PATTERNS_FILE):
        if not (model_dir / name).exists():
            raise FileNotFoundError(str(model_dir / name))
    tagger = TaggerModel.load(model_dir / TAGGER_FILE)
    embedder = load_embedder(model_dir)
    base_repo = ConceptRepository.load(model_dir / CONCEPTS_FILE)
    patterns = PatternSet.load(model_dir / PATTERNS_FILE)
    log = EditLog(config.log_path)
    return ServiceState(
        tagger=tagger,
        embedder=embedder,
        base_repo=base_repo,
        patterns=patterns,
        log=log,
        coninfer=ConInferConfig(delta=config.delta, k=config.k),
        snapshot_every=config.snapshot_every,
        snapshot_path=model_dir / SNAPSHOT_FILE,
    )


def _error_body(code: str, message: str) -> dict:
    return {"code": code, "message": message}


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    state: ServiceState  # set by make_server

    def log_message(self, fmt, *args):
        logger.debug("%s " + fmt, self.address_string(), *args)

    def _send(self, status: int, obj) -> None:
        body = json.dumps(obj, ensure_ascii=False).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json; charset=utf-8")
        self.send_header("Content-Length", str(len(body)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.end_headers()
        self.wfile.write(body)

    def _read_json(self):
        length = int(self.headers.get("Content-Length") or 0)
        raw = self.rfile.read(length) if length else b""
        if not raw:
            raise ValueError("empty request body")
        return json.loads(raw)

    def do_OPTIONS(self):  # CORS preflight for browser clients
        self.send_response(204)
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
        self.send_header("Access-Control-Allow-Headers", "Content-Type")
        self.send_header("Content-Length", "0")
        self.end_headers()

    def do_GET(self):
        state = self.state
        url = urlparse(self.path)
        qs = parse_qs(url.query)
        parts = [p for p in url.path.split("/") if p]
        try:
            if url.path == "/health":
                self._send(
                    200,
                    {
                        "status": "ok",
                        "seq": state.seq,
                        "concepts": len(state.repo),
                        "patterns": len(state.patterns),
                    },
                )
            elif url.path == "/concepts":
                role_q = qs.get("role", [None])[0]
                if role_q is not None:
                    try:
                        role = IntentRole(role_q)
                    except ValueError:
                        self._send(
                            400, _error_body("bad_role", f"unknown role {role_q!r}")
                        )
                        return
                    concepts = state.repo.role_concepts(role)
                else:
                    concepts = state.repo.concepts
                self._send(
                    200,
                    {"seq": state.seq, "concepts": [c.to_json() for c in concepts]},
                )
            elif len(parts) == 2 and parts[0] == "concepts":
                try:
                    cid = int(parts[1])
                except ValueError:
                    self._send(400, _error_body("bad_id", f"bad concept id {parts[1]!r}"))
                    return
                concept = state.repo.get(cid)
                if concept is None:
                    self._send(404, _error_body("not_found", f"no concept {cid}"))
                else:
                    self._send(200, concept.to_json())
            elif url.path == "/patterns":
                self._send(200, state.patterns.to_json())
            elif url.path == "/neighbors":
                mention = qs.get("mention", [None])[0]
                role_q = qs.get("role", [None])[0]
                if not mention or not role_q:
                    self._send(
                        400,
                        _error_body("bad_request", "mention and role are required"),
                    )
                    return
                try:
                    role = IntentRole(role_q)
                except ValueError:
                    self._send(400, _error_body("bad_role", f"unknown role {role_q!r}"))
                    return
                try:
                    k = int(qs.get("k", ["5"])[0])
                except ValueError:
                    self._send(400, _error_body("bad_request", "k must be an integer"))
                    return
                found = neighbors(mention, role, state.repo, state.embedder, k=k)
                self._send(200, {"mention": mention, "neighbors": found})
            elif url.path == "/refine/log":
                try:
                    since = int(qs.get("since", ["0"])[0])
                except ValueError:
                    self._send(400, _error_body("bad_request", "since must be an integer"))
                    return
                self._send(
                    200,
                    {
                        "seq": state.seq,
                        "ops": [e.to_json() for e in state.log.since(since)],
                    },
                )
            else:
                self._send(404, _error_body("not_found", f"no route {url.path}"))
        except Exception as exc:  # pragma: no cover - last-resort guard
            logger.exception("GET %s failed", self.path)
            self._send(500, _error_body("internal", str(exc)))

    def do_POST(self):
        state = self.state
        url = urlparse(self.path)
        try:
            if url.path == "/infer":
                try:
                    body = self._read_json()
                except (ValueError, json.JSONDecodeError) as exc:
                    self._send(400, _error_body("bad_json", str(exc)))
                    return
                text = body.get("text")
                if not isinstance(text, str) or not text.strip():
                    self._send(
                        400, _error_body("bad_request", "non-empty 'text' is required")
                    )
                    return
                uid = str(body.get("id", "adhoc"))
                tokens = body.get("tokens")
                result = state.infer_text(uid, text, tokens)
                self._send(200, result.to_json())
            elif url.path == "/refine":
                try:
                    body = self._read_json()
                except (ValueError, json.JSONDecodeError) as exc:
                    self._send(400, _error_body("bad_json", str(exc)))
                    return
                kind = body.get("op")
                if kind not in VALID_OPS:
                    self._send(400, _error_body("bad_op", f"unknown operation {kind!r}"))
                    return
                op = RefinementOp(
                    op=kind,
                    params=body.get("params", {}),
                    actor=str(body.get("actor", "anonymous")),
                )
                base_seq = body.get("base_seq")
                try:
                    stamped = state.apply(
                        op, int(base_seq) if base_seq is not None else None
                    )
                except RefinementError as exc:
                    self._send(400, _error_body("invalid_op", str(exc)))
                    return
                except ConflictError as exc:
                    self._send(409, _error_body("conflict", str(exc)))
                    return
                self._send(
                    200,
                    {
                        "seq": stamped.seq,
                        "repository_hash": state.repo.content_hash(),
                    },
                )
            else:
                self._send(404, _error_body("not_found", f"no route {url.path}"))
        except Exception as exc:  # pragma: no cover - last-resort guard
            logger.exception("POST %s failed", self.path)
            self._send(500, _error_body("internal", str(exc)))


def make_server(state: ServiceState, host: str = "127.0.0.1", port: int = 0):
    """Build a threading HTTP server bound to host:port (0 = ephemeral)."""
    handler = type("BoundHandler", (_Handler,), {"state": state})
    return ThreadingHTTPServer((host, port), handler)


def serve(config: ServeConfig) -> None:
    """Load artifacts and serve until interrupted."""
    state = load_state(config)
    server = make_server(state, config.host, config.port)
    logger.info(
        "serving on %s:%d (%d concepts, log head %d)",
        config.host, server.server_address[1], len(state.repo), state.seq,
    )
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
