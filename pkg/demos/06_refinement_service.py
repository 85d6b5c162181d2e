"""
Expert refinement and the editing service
=========================================

Concept repositories are immutable; experts refine them through
validated operations. Every applied operation lands in an append-only
log whose replay reconstructs the served repository exactly, and the
whole thing is reachable over HTTP.
"""

import json
import pathlib
import threading
import urllib.request

from schema_forge import synth
from schema_forge.corpus import IntentRole
from schema_forge.embeddings import EmbedConfig, mentionize_corpus, train_skipgram
from schema_forge.irl import TaggerConfig, train_tagger
from schema_forge.patterns import extract_role_sets, mine_patterns
from schema_forge.service import (
    EditLog,
    RefinementError,
    RefinementOp,
    RepositorySnapshot,
    ServiceState,
    apply_refinement,
    make_server,
)

spec = synth.demo_schema(seed=0)
base = spec.gold_repository()
print("base:", len(base), "concepts, hash", base.content_hash()[:12])

# ---------------------------------------------------------------------------
# Operations validate against the current repository and return a new
# one. The log stamps each with a sequence number as it is applied.
# ---------------------------------------------------------------------------

pathlib.Path("/tmp/demo_edits.jsonl").unlink(missing_ok=True)  # fresh log each run
log = EditLog("/tmp/demo_edits.jsonl")
repo = base
for op in [
    RefinementOp("rename", {"concept_id": 7, "name": "Paperwork"}, actor="dana"),
    RefinementOp("create", {"role": "Argument", "name": "Device",
                            "mentions": ["phone", "tablet"]}, actor="dana"),
    RefinementOp("move", {"mention": "contract", "from_id": 7, "to_id": 10}),
]:
    repo = apply_refinement(repo, op)
    stamped = log.append(op)
    print(f"  seq {stamped.seq}: {stamped.op} {stamped.params}")

print("Paperwork now:", repo.get(7).mentions)
print("Device now:   ", repo.get(10).mentions)

# Invalid operations are rejected before anything changes.
try:
    apply_refinement(repo, RefinementOp("delete_empty", {"concept_id": 10}))
except RefinementError as exc:
    print("rejected:", exc)

# Replaying the log over the base repository reproduces the current
# one exactly; a snapshot pins a (repository, log position) pair.
replayed = EditLog("/tmp/demo_edits.jsonl").replay(base)
print("replay matches:", replayed.content_hash() == repo.content_hash())

RepositorySnapshot.capture(repo, log.head).save("/tmp/demo_snapshot.json")
snap = RepositorySnapshot.load("/tmp/demo_snapshot.json")
print("snapshot at seq", snap.log_position, "hash verified on load")

# ---------------------------------------------------------------------------
# The HTTP service wires a tagger, an embedder, the repository and the
# patterns together. Writes take an optional base_seq and fail with a
# conflict when it is stale, so concurrent editors cannot clobber each
# other silently.
# ---------------------------------------------------------------------------

corpus = synth.generate(spec, 600, seed=0)
tagged = corpus.annotated()
state = ServiceState(
    tagger=train_tagger(tagged, TaggerConfig(epochs=3, seed=0)),
    embedder=train_skipgram(mentionize_corpus(tagged),
                            EmbedConfig(dim=32, negatives=8, epochs=2, seed=0)),
    base_repo=base,
    patterns=mine_patterns(extract_role_sets(tagged)),
    log=EditLog(None),  # in-memory log for the demo server
)
server = make_server(state, port=0)
threading.Thread(target=server.serve_forever, daemon=True).start()
url = f"http://127.0.0.1:{server.server_address[1]}"


def get(path):
    with urllib.request.urlopen(url + path) as resp:
        return json.load(resp)


def post(path, body):
    req = urllib.request.Request(
        url + path, json.dumps(body).encode(), {"Content-Type": "application/json"}
    )
    try:
        with urllib.request.urlopen(req) as resp:
            return resp.status, json.load(resp)
    except urllib.error.HTTPError as err:
        return err.code, json.load(err)


print("health:", get("/health"))

status, result = post("/infer", {"text": "cancel my insurance policy"})
print("infer:", result["intent"], result["slots"])

hits = get("/neighbors?mention=contract&role=Argument&k=3")["neighbors"]
print("neighbors of 'contract':", [h["mention"] for h in hits])

status, body = post("/refine", {"op": "rename", "actor": "dana", "base_seq": 0,
                                "params": {"concept_id": 2, "name": "Lookup"}})
print("rename over HTTP:", status, body)

status, body = post("/refine", {"op": "rename", "base_seq": 0,
                                "params": {"concept_id": 2, "name": "Race"}})
print("stale base_seq:", status, body["code"])

print("log tail:", [(e["seq"], e["op"]) for e in get("/refine/log?since=0")["ops"]])
server.shutdown()
