"""Command-line entry points for every pipeline stage.

Each run writes a JSON report (inputs and outputs with content hashes,
timing, stage statistics) next to its primary output. Exit codes: 2
for a missing input file, 3 for an invalid configuration, 1 for
anything else. The SCHEMA_FORGE_SEED environment variable overrides
any --seed flag for a fully pinned run.
"""

import argparse
import hashlib
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from schema_forge import clustering, embeddings, evaluation, inference, irl
from schema_forge import patterns as patterns_mod
from schema_forge import service as service_mod
from schema_forge import synth as synth_mod
from schema_forge.corpus import (
    CorpusError,
    IntentRole,
    Utterance,
    parse_bio,
    parse_corpus,
    write_bio,
)

logger = logging.getLogger(__name__)


class CliConfigError(ValueError):
    """Bad flag combination or malformed configuration value."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliConfigError(message)


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with path.open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _require_file(path: str | Path) -> Path:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(str(p))
    return p


class RunReport:
    """Collects inputs, outputs and stats; written as JSON when the run ends.

    When a manifest is attached, every registered input is checked
    against it immediately, so a stage aborts on stale inputs before
    producing any output.
    """

    def __init__(self, command: str, argv: list[str], seed, manifest: dict | None = None):
        self.manifest = manifest or {}
        self.data = {
            "command": command,
            "argv": argv,
            "seed": seed,
            "started": time.time(),
            "inputs": {},
            "outputs": {},
            "stats": {},
        }

    def add_input(self, path: str | Path):
        p = Path(path)
        if p.is_file():
            digest = _sha256(p)
            recorded = self.manifest.get(str(p))
            if recorded is not None and recorded != digest:
                raise CliConfigError(
                    f"stale input {p}: hash changed since the manifest recorded it"
                )
            self.data["inputs"][str(p)] = digest

    def add_output(self, path: str | Path):
        p = Path(path)
        if p.is_file():
            self.data["outputs"][str(p)] = _sha256(p)

    def stat(self, key: str, value):
        self.data["stats"][key] = value

    def write(self, path: str | Path):
        self.data["finished"] = time.time()
        self.data["duration_s"] = self.data["finished"] - self.data["started"]
        Path(path).write_text(
            json.dumps(self.data, indent=2) + "\n", encoding="utf-8"
        )


def _load_manifest(manifest_path: str | None) -> dict:
    if not manifest_path:
        return {}
    p = Path(manifest_path)
    if not p.exists():
        return {}
    return json.loads(p.read_text(encoding="utf-8")).get("artifacts", {})


def _update_manifest(manifest_path: str | None, outputs: dict[str, str]):
    if not manifest_path:
        return
    p = Path(manifest_path)
    obj = {"artifacts": {}}
    if p.exists():
        obj = json.loads(p.read_text(encoding="utf-8"))
        obj.setdefault("artifacts", {})
    obj["artifacts"].update(outputs)
    p.write_text(json.dumps(obj, indent=2) + "\n", encoding="utf-8")


def _report_path(args, primary_out: str | Path) -> Path:
    if getattr(args, "report", None):
        return Path(args.report)
    return Path(str(primary_out) + ".report.json")


def _load_embedder(path: Path):
    if path.suffix == ".npz":
        return embeddings.SubwordCnnEncoder.load(path)
    return embeddings.EmbeddingTable.load(path)


# ---------------------------------------------------------------------------
# Subcommand implementations
# ---------------------------------------------------------------------------


def cmd_synth(args, report: RunReport) -> Path:
    if args.schema in ("demo", "procedural"):
        if args.schema == "demo":
            spec = synth_mod.demo_schema(seed=args.seed, chitchat_rate=args.chitchat)
        else:
            spec = synth_mod.make_schema(seed=args.seed, chitchat_rate=args.chitchat)
    else:
        spec = synth_mod.SchemaSpec.load(_require_file(args.schema))
        report.add_input(args.schema)
    corpus = synth_mod.generate(spec, args.n, seed=args.seed)
    paths = corpus.write(args.out)
    for p in paths.values():
        report.add_output(p)
    report.stat("utterances", len(corpus.examples))
    report.stat(
        "with_mentions", sum(1 for e in corpus.examples if e.mentions)
    )
    return paths["corpus"]


def cmd_train_irl(args, report: RunReport) -> Path:
    train = parse_bio(_require_file(args.train))
    report.add_input(args.train)
    cfg = irl.TaggerConfig(epochs=args.epochs, seed=args.seed)
    model = irl.train_tagger(train, cfg)
    model.save(args.out)
    report.add_output(args.out)
    report.stat("training_accuracy", model.training_accuracy)
    report.stat("features", len(model.weights))
    return Path(args.out)


def cmd_tag(args, report: RunReport) -> Path:
    model = irl.TaggerModel.load(_require_file(args.model))
    report.add_input(args.model)
    rejected: list = []
    corpus = parse_corpus(_require_file(args.corpus), rejected=rejected)
    report.add_input(args.corpus)
    tagged = [irl.tag(model, u) for u in corpus]
    write_bio(tagged, args.out)
    report.add_output(args.out)
    report.stat("utterances", len(tagged))
    report.stat("rejected", len(rejected))
    return Path(args.out)


def cmd_pos_tag(args, report: RunReport) -> Path:
    path = _require_file(args.corpus)
    report.add_input(path)
    tagged = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path}:{lineno}: malformed JSON: {exc.msg}")
            u = Utterance(
                id=str(rec["id"]),
                tokens=tuple(rec["tokens"]),
                raw_text=rec.get("text", " ".join(rec["tokens"])),
            )
            p = irl.PosTaggedUtterance(u, tuple(rec["pos"]))
            tagged.append(irl.rule_tag(p))
    write_bio(tagged, args.out)
    report.add_output(args.out)
    report.stat("utterances", len(tagged))
    return Path(args.out)


def cmd_embed(args, report: RunReport) -> Path:
    tagged = parse_bio(_require_file(args.tags))
    report.add_input(args.tags)
    streams = embeddings.mentionize_corpus(tagged)
    cfg = embeddings.EmbedConfig(
        dim=args.dim,
        window=args.window,
        skip_number=args.skip_number,
        negatives=args.negatives,
        epochs=args.epochs,
        lr=args.lr,
        seed=args.seed,
        ngram_order=args.ngram_order,
        uniform_negatives=args.uniform_negatives,
    )
    if args.threads > 1:
        logger.warning("embedding training is single-threaded; --threads ignored")
    if args.mode == "cnn":
        result = embeddings.train_cnn_encoder(streams, cfg)
        result.encoder.save(args.out)
        report.stat("held_out_losses", result.held_out_losses)
        report.stat("subwords", len(result.encoder.vocab))
    else:
        table = embeddings.train_skipgram(streams, cfg, mode=args.mode)
        table.save(args.out)
        report.stat("vocabulary", len(table))
    report.add_output(args.out)
    return Path(args.out)


def cmd_cluster(args, report: RunReport) -> Path:
    tagged = parse_bio(_require_file(args.tags))
    report.add_input(args.tags)
    embedder = _load_embedder(_require_file(args.embeddings))
    report.add_input(args.embeddings)
    by_role = embeddings.collect_mentions(tagged)
    out_obj: dict = {"version": 1, "method": args.method, "roles": {}}
    for role in sorted(by_role, key=lambda r: r.canonical_index):
        counts = by_role[role]
        surfaces = sorted(counts)
        vecs = []
        kept = []
        skipped = 0
        for m in surfaces:
            v = embedder.embed(m)
            if v is None:
                skipped += 1
                continue
            kept.append(m)
            vecs.append(np.asarray(v, dtype=np.float64))
        if skipped:
            logger.warning(
                "%d %s mentions have no embedding and were skipped",
                skipped, role.value,
            )
        if not kept:
            continue
        X = np.stack(vecs)
        if args.method == "kmeans":
            k = min(args.clusters, len(kept))
            if k < args.clusters:
                logger.warning(
                    "only %d %s mentions; lowering K from %d",
                    len(kept), role.value, args.clusters,
                )
            assignment = clustering.kmeans_cluster(X, k, seed=args.seed)
        else:
            knn = min(args.knn, max(1, len(kept) - 1))
            graph = clustering.build_knn_graph(X, knn, threads=args.threads)
            if args.method == "lpa":
                assignment = clustering.lpa_cluster(graph)
            else:
                assignment = clustering.mine_cluster(graph, seed=args.seed)
        out_obj["roles"][role.value] = {
            "mentions": kept,
            "labels": [int(x) for x in assignment.labels],
            "frequencies": {m: int(counts[m]) for m in kept},
            "clusters": assignment.n_clusters,
        }
        report.stat(f"clusters_{role.value}", assignment.n_clusters)
    Path(args.out).write_text(
        json.dumps(out_obj, indent=2, ensure_ascii=False) + "\n", encoding="utf-8"
    )
    report.add_output(args.out)
    return Path(args.out)


def cmd_name_concepts(args, report: RunReport) -> Path:
    obj = json.loads(_require_file(args.clusters).read_text(encoding="utf-8"))
    report.add_input(args.clusters)
    concepts: list[clustering.Concept] = []
    next_id = 0
    for role_name in sorted(obj["roles"], key=lambda r: IntentRole(r).canonical_index):
        entry = obj["roles"][role_name]
        named = clustering.name_concepts(
            entry["labels"],
            entry["mentions"],
            IntentRole(role_name),
            frequencies=entry.get("frequencies"),
            id_start=next_id,
        )
        concepts.extend(named)
        next_id += len(named)
    repo = clustering.ConceptRepository(concepts)
    repo.save(args.out)
    report.add_output(args.out)
    report.stat("concepts", len(repo))
    return Path(args.out)


def cmd_mine_patterns(args, report: RunReport) -> Path:
    tagged = parse_bio(_require_file(args.tags))
    report.add_input(args.tags)
    role_sets = patterns_mod.extract_role_sets(tagged)
    pattern_set = patterns_mod.mine_patterns(
        role_sets, min_support=args.min_support, min_confidence=args.min_confidence
    )
    pattern_set.save(args.out)
    report.add_output(args.out)
    report.stat("observations", len(role_sets))
    report.stat("skipped_no_mentions", len(tagged) - len(role_sets))
    report.stat("patterns", len(pattern_set))
    return Path(args.out)


def _load_model_dir(model_dir: str):
    d = Path(model_dir)
    tagger = irl.TaggerModel.load(_require_file(d / service_mod.TAGGER_FILE))
    embedder = service_mod.load_embedder(d)
    repo = clustering.ConceptRepository.load(_require_file(d / service_mod.CONCEPTS_FILE))
    pats = patterns_mod.PatternSet.load(_require_file(d / service_mod.PATTERNS_FILE))
    return tagger, embedder, repo, pats


def cmd_infer(args, report: RunReport) -> Path:
    tagger, embedder, repo, pats = _load_model_dir(args.model_dir)
    for name in (
        service_mod.TAGGER_FILE, service_mod.CONCEPTS_FILE, service_mod.PATTERNS_FILE
    ):
        report.add_input(Path(args.model_dir) / name)
    corpus = parse_corpus(_require_file(args.corpus))
    report.add_input(args.corpus)
    cfg = inference.ConInferConfig(delta=args.delta, k=args.k)
    pool = (
        inference.UncategorizedPool.load(args.pool)
        if args.pool and Path(args.pool).exists()
        else inference.UncategorizedPool()
    )
    results = [
        inference.infer(u, tagger, repo, embedder, pats, cfg, pool) for u in corpus
    ]
    inference.write_results(results, args.out)
    report.add_output(args.out)
    if args.pool:
        pool.save(args.pool)
        report.add_output(args.pool)
    counts = {}
    for r in results:
        counts[r.status] = counts.get(r.status, 0) + 1
    report.stat("status_counts", counts)
    report.stat("pool_size", len(pool))
    return Path(args.out)


def cmd_expand(args, report: RunReport) -> Path:
    pool = inference.UncategorizedPool.load(_require_file(args.pool))
    report.add_input(args.pool)
    repo = clustering.ConceptRepository.load(_require_file(args.concepts))
    report.add_input(args.concepts)
    embedder = _load_embedder(_require_file(args.embeddings))
    report.add_input(args.embeddings)

    def clusterer(X):
        k = min(args.knn, max(1, X.shape[0] - 1))
        return clustering.lpa_cluster(clustering.build_knn_graph(X, k))

    grown, added = inference.expand_concepts(pool, repo, embedder, clusterer)
    grown.save(args.out)
    report.add_output(args.out)
    report.stat("added_concepts", len(added))
    return Path(args.out)


def _read_results_jsonl(path: Path) -> dict[str, dict]:
    out = {}
    with path.open("r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                rec = json.loads(line)
                out[str(rec["id"])] = rec
    return out


def cmd_eval(args, report: RunReport) -> Path:
    gold_path = _require_file(args.gold)
    pred_path = _require_file(args.pred)
    report.add_input(gold_path)
    report.add_input(pred_path)
    if args.what == "irl":
        gold = parse_bio(gold_path)
        pred = parse_bio(pred_path)
        rep = evaluation.token_prf(gold, pred)
    elif args.what in ("intent", "slot"):
        gold = _read_results_jsonl(gold_path)
        pred = _read_results_jsonl(pred_path)
        missing = sorted(set(gold) - set(pred))
        if missing:
            raise CliConfigError(
                f"predictions missing for {len(missing)} ids, first {missing[0]!r}"
            )
        ids = sorted(gold)
        if args.what == "intent":
            rep = evaluation.intent_scores(
                [gold[i]["intent"] for i in ids], [pred[i]["intent"] for i in ids]
            )
        else:
            rep = evaluation.slot_scores(
                [gold[i].get("slots", {}) for i in ids],
                [pred[i].get("slots", {}) for i in ids],
            )
    else:  # cluster
        gold_labels = json.loads(gold_path.read_text(encoding="utf-8"))["labels"]
        pred_labels = json.loads(pred_path.read_text(encoding="utf-8"))["labels"]
        rep = evaluation.clustering_scores(gold_labels, pred_labels)
    print(evaluation.format_report(rep, title=f"eval {args.what}"))
    Path(args.out).write_text(
        json.dumps(rep.to_json(), indent=2) + "\n", encoding="utf-8"
    )
    report.add_output(args.out)
    return Path(args.out)


def cmd_serve(args, report: RunReport) -> Path:
    config = service_mod.ServeConfig(
        model_dir=args.model_dir,
        log_path=args.log_path,
        port=args.port,
        host=args.host,
        snapshot_every=args.snapshot_every,
        delta=args.delta,
        k=args.k,
    )
    service_mod.serve(config)
    return Path(args.log_path)


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="schema-forge", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, out_required=True):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--report", help="run report path (default: <out>.report.json)")
        p.add_argument("--manifest", help="pipeline manifest for stale-input checks")
        if out_required:
            p.add_argument("--out", required=True)

    p = sub.add_parser("synth", help="generate a synthetic labeled corpus")
    p.add_argument("--schema", default="demo", help="demo, procedural, or a schema JSON path")
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--chitchat", type=float, default=0.0)
    add_common(p)

    p = sub.add_parser("train-irl", help="train the role tagger")
    p.add_argument("--train", required=True, help="gold tags (CoNLL)")
    p.add_argument("--epochs", type=int, default=10)
    add_common(p)

    p = sub.add_parser("tag", help="tag a corpus with a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--corpus", required=True)
    add_common(p)

    p = sub.add_parser("pos-tag", help="rule-based tags from part-of-speech runs")
    p.add_argument("--corpus", required=True, help="JSONL with id, tokens, pos")
    add_common(p)

    p = sub.add_parser("embed", help="train mention embeddings")
    p.add_argument("mode", choices=("w2v", "p2v", "cnn"))
    p.add_argument("--tags", required=True, help="tagged corpus (CoNLL)")
    p.add_argument("--dim", type=int, default=128)
    p.add_argument("--window", type=int, default=2)
    p.add_argument("--skip-number", type=int, default=2)
    p.add_argument("--negatives", type=int, default=64)
    p.add_argument("--epochs", type=int, default=5)
    p.add_argument("--lr", type=float, default=0.025)
    p.add_argument("--ngram-order", type=int, default=2)
    p.add_argument("--uniform-negatives", action="store_true")
    p.add_argument("--threads", type=int, default=1)
    add_common(p)

    p = sub.add_parser("cluster", help="cluster mention embeddings per role")
    p.add_argument("method", choices=("kmeans", "lpa", "mine"))
    p.add_argument("--tags", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--clusters", type=int, default=100, help="K for kmeans")
    p.add_argument("--knn", type=int, default=5)
    p.add_argument("--threads", type=int, default=1)
    add_common(p)

    p = sub.add_parser("name-concepts", help="turn cluster output into concepts")
    p.add_argument("--clusters", required=True)
    add_common(p)

    p = sub.add_parser("mine-patterns", help="mine frequent role combinations")
    p.add_argument("--tags", required=True)
    p.add_argument("--min-support", type=float, default=0.05)
    p.add_argument("--min-confidence", type=float, default=0.1)
    add_common(p)

    p = sub.add_parser("infer", help="intent and slots for a corpus")
    p.add_argument("--model-dir", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--delta", type=float, default=0.2)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--pool", help="uncategorized pool JSON, read and updated")
    add_common(p)

    p = sub.add_parser("expand", help="grow concepts from the uncategorized pool")
    p.add_argument("--pool", required=True)
    p.add_argument("--concepts", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--knn", type=int, default=5)
    add_common(p)

    p = sub.add_parser("eval", help="score predictions against gold")
    p.add_argument("what", choices=("irl", "intent", "slot", "cluster"))
    p.add_argument("--gold", required=True)
    p.add_argument("--pred", required=True)
    add_common(p)

    p = sub.add_parser("serve", help="run the refinement service")
    p.add_argument("--model-dir", required=True)
    p.add_argument("--log-path", required=True)
    p.add_argument("--port", type=int, default=8080)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--snapshot-every", type=int, default=0)
    p.add_argument("--delta", type=float, default=0.2)
    p.add_argument("--k", type=int, default=5)
    add_common(p, out_required=False)

    return parser


_COMMANDS = {
    "synth": cmd_synth,
    "train-irl": cmd_train_irl,
    "tag": cmd_tag,
    "pos-tag": cmd_pos_tag,
    "embed": cmd_embed,
    "cluster": cmd_cluster,
    "name-concepts": cmd_name_concepts,
    "mine-patterns": cmd_mine_patterns,
    "infer": cmd_infer,
    "expand": cmd_expand,
    "eval": cmd_eval,
    "serve": cmd_serve,
}


def _fail(code: str, message: str, exit_code: int) -> int:
    print(json.dumps({"code": code, "message": message}), file=sys.stderr)
    return exit_code


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(
        level=os.environ.get("SCHEMA_FORGE_LOG", "INFO"),
        format="%(levelname)s %(name)s: %(message)s",
    )
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        env_seed = os.environ.get("SCHEMA_FORGE_SEED")
        if env_seed is not None and hasattr(args, "seed"):
            try:
                args.seed = int(env_seed)
            except ValueError:
                raise CliConfigError(
                    f"SCHEMA_FORGE_SEED must be an integer, got {env_seed!r}"
                )
        manifest_path = getattr(args, "manifest", None)
        report = RunReport(
            args.command, argv, getattr(args, "seed", None),
            manifest=_load_manifest(manifest_path),
        )
        fn = _COMMANDS[args.command]
        if args.command == "serve":
            fn(args, report)
            return 0
        primary = fn(args, report)
        _update_manifest(manifest_path, report.data["outputs"])
        report.write(_report_path(args, primary))
        return 0
    except FileNotFoundError as exc:
        return _fail("missing_input", f"missing input: {exc}", 2)
    except CorpusError as exc:
        return _fail("bad_input", str(exc), 1)
    except CliConfigError as exc:
        return _fail("invalid_config", str(exc), 3)
    except ValueError as exc:
        return _fail("invalid_config", str(exc), 3)
    except KeyboardInterrupt:
        return 130


if __name__ == "__main__":
    sys.exit(main())
