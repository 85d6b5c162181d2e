"""Boot a small live concept service for the UI test suite.

Trains throwaway models on the bundled demo schema, binds an ephemeral
port and prints "PORT <n>" once the server is up; the node side parses
that line. Fixed seeds keep every run identical.
"""

from schema_forge import embeddings, irl, patterns, synth
from schema_forge import service as svc


def main() -> None:
    spec = synth.demo_schema()
    corpus = synth.generate(spec, 200, seed=1)
    annotated = [e.annotated() for e in corpus.examples]
    tagger = irl.train_tagger(annotated, irl.TaggerConfig(epochs=4, seed=0))
    streams = embeddings.mentionize_corpus(annotated)
    cfg = embeddings.EmbedConfig(dim=16, negatives=4, epochs=2, seed=0)
    enc = embeddings.train_cnn_encoder(streams, cfg, subword_dim=8, feature_maps=4)
    state = svc.ServiceState(
        tagger,
        enc.encoder,
        spec.gold_repository(),
        patterns.mine_patterns(patterns.extract_role_sets(annotated)),
        svc.EditLog(None),
    )
    server = svc.make_server(state, port=0)
    print(f"PORT {server.server_address[1]}", flush=True)
    server.serve_forever()


if __name__ == "__main__":
    main()
