"""Graph building, label propagation, k-means, description length, concepts."""

import itertools

import numpy as np
import pytest
from scipy import sparse

from schema_forge import clustering as cl
from schema_forge.corpus import IntentRole
from schema_forge.evaluation import clustering_scores


def blobs(n_per=40, k=4, d=8, spread=0.25, seed=0):
    rng = np.random.default_rng(seed)
    centers = rng.standard_normal((k, d)) * 3.0
    X = np.vstack([centers[i] + rng.standard_normal((n_per, d)) * spread for i in range(k)])
    labels = np.repeat(np.arange(k), n_per)
    return X, labels


def two_cliques():
    # two disconnected triangles as a row-stochastic adjacency
    A = np.zeros((6, 6))
    for block in ((0, 1, 2), (3, 4, 5)):
        for i in block:
            for j in block:
                if i != j:
                    A[i, j] = 0.5
    return cl.TransitionMatrix(sparse.csr_matrix(A), k=2, isolated=np.zeros(6, bool))


class TestKnnGraph:
    def test_rows_normalized(self):
        X, _ = blobs(n_per=10, k=2)
        g = cl.build_knn_graph(X, k=3)
        sums = np.asarray(g.matrix.sum(axis=1)).ravel()
        assert np.allclose(sums[~g.isolated], 1.0)

    def test_zero_vector_isolated(self):
        X = np.vstack([np.eye(3), np.zeros((1, 3))])
        g = cl.build_knn_graph(X, k=2)
        assert g.isolated[3]
        assert g.matrix[3].nnz == 0

    def test_self_excluded(self):
        X, _ = blobs(n_per=5, k=1)
        g = cl.build_knn_graph(X, k=2)
        assert np.allclose(g.matrix.diagonal(), 0.0)

    def test_k_clamped_with_warning(self, caplog):
        X = np.eye(3)
        with caplog.at_level("WARNING"):
            g = cl.build_knn_graph(X, k=10)
        assert g.k == 2

    def test_scaling_inputs_changes_nothing(self):
        X, _ = blobs(n_per=15, k=3, seed=4)
        a = cl.build_knn_graph(X, k=4)
        b = cl.build_knn_graph(X * 7.3, k=4)
        assert np.array_equal(a.matrix.indices, b.matrix.indices)
        assert np.array_equal(a.matrix.indptr, b.matrix.indptr)
        assert np.allclose(a.matrix.data, b.matrix.data, rtol=1e-12)

    def test_threads_match_single(self):
        X, _ = blobs(n_per=20, k=3, seed=9)
        a = cl.build_knn_graph(X, k=4, threads=1)
        b = cl.build_knn_graph(X, k=4, threads=4)
        assert np.array_equal(a.matrix.indices, b.matrix.indices)
        assert np.array_equal(a.matrix.data, b.matrix.data)


class TestLpa:
    def test_identity_gives_singletons(self):
        T = cl.TransitionMatrix(sparse.identity(5, format="csr"), k=1, isolated=np.zeros(5, bool))
        out = cl.lpa_cluster(T)
        assert out.n_clusters == 5
        assert sorted(out.labels) == [0, 1, 2, 3, 4]

    def test_two_cliques_two_clusters(self):
        out = cl.lpa_cluster(two_cliques())
        assert out.n_clusters == 2
        assert len({out.labels[0], out.labels[1], out.labels[2]}) == 1
        assert len({out.labels[3], out.labels[4], out.labels[5]}) == 1

    def test_recovers_planted_blobs(self):
        X, gold = blobs(seed=3)
        g = cl.build_knn_graph(X, k=5)
        out = cl.lpa_cluster(g)
        assert clustering_scores(gold, out.labels).v_measure >= 0.9

    def test_isolated_nodes_stay_single(self):
        A = np.zeros((3, 3))
        A[0, 1] = A[1, 0] = 1.0
        T = cl.TransitionMatrix(
            sparse.csr_matrix(A), k=1, isolated=np.array([False, False, True])
        )
        out = cl.lpa_cluster(T)
        assert out.labels[2] not in (out.labels[0], out.labels[1])


class TestKmeans:
    def test_recovers_planted_blobs(self):
        X, gold = blobs(seed=5)
        best = min((cl.kmeans_cluster(X, 4, seed=s) for s in range(5)),
                   key=lambda a: a.objective)
        assert clustering_scores(gold, best.labels).v_measure >= 0.9

    def test_objective_is_sse(self):
        X = np.array([[0.0], [1.0], [10.0], [11.0]])
        out = cl.kmeans_cluster(X, 2, seed=0)
        assert out.objective == pytest.approx(1.0)

    def test_k_exceeding_points_rejected(self):
        with pytest.raises(ValueError):
            cl.kmeans_cluster(np.zeros((2, 2)), 3)

    def test_identical_points_single_cluster(self):
        X = np.ones((6, 3))
        out = cl.kmeans_cluster(X, 1, seed=0)
        assert out.n_clusters == 1
        assert out.objective == pytest.approx(0.0)

    def test_deterministic_per_seed(self):
        X, _ = blobs(seed=8)
        a = cl.kmeans_cluster(X, 4, seed=2)
        b = cl.kmeans_cluster(X, 4, seed=2)
        assert np.array_equal(a.labels, b.labels)


class TestMapEquation:
    def test_edgeless_graph_zero(self):
        T = sparse.csr_matrix((4, 4))
        assert cl.map_equation(T, [0, 1, 2, 3]) == 0.0

    def test_hand_value_single_module(self):
        # two nodes, one symmetric edge, both in one module:
        # q = 0, L = -sum p log2 p = 1 bit
        A = np.array([[0.0, 1.0], [1.0, 0.0]])
        assert cl.map_equation(A, [0, 0]) == pytest.approx(1.0)

    def test_split_worse_for_clique(self):
        A = np.ones((4, 4)) - np.eye(4)
        together = cl.map_equation(A, [0, 0, 0, 0])
        apart = cl.map_equation(A, [0, 0, 1, 1])
        assert together < apart

    def test_label_count_mismatch_rejected(self):
        A = np.ones((3, 3)) - np.eye(3)
        with pytest.raises(ValueError):
            cl.map_equation(A, [0, 1])

    def test_mine_matches_exhaustive_search(self):
        # every partition of a 6-node graph, brute forced
        rng = np.random.default_rng(2)
        A = np.zeros((6, 6))
        for block in ((0, 1, 2), (3, 4, 5)):
            for i in block:
                for j in block:
                    if i < j:
                        A[i, j] = A[j, i] = 1.0
        A[2, 3] = A[3, 2] = 0.2

        def partitions(items):
            if not items:
                yield []
                return
            first, rest = items[0], items[1:]
            for part in partitions(rest):
                for i in range(len(part)):
                    yield part[:i] + [[first] + part[i]] + part[i + 1 :]
                yield [[first]] + part

        best = np.inf
        for part in partitions(list(range(6))):
            labels = np.empty(6, dtype=int)
            for g, block in enumerate(part):
                labels[block] = g
            best = min(best, cl.map_equation(A, labels))
        mined = cl.mine_cluster(A, seed=0)
        assert mined.objective == pytest.approx(best, abs=1e-12)

    def test_mine_never_beaten_by_singletons(self):
        X, _ = blobs(n_per=12, k=3, seed=11)
        g = cl.build_knn_graph(X, k=4)
        mined = cl.mine_cluster(g, seed=0)
        singletons = cl.map_equation(g, list(range(X.shape[0])))
        assert mined.objective <= singletons + 1e-12

    def test_scale_leaves_partition_alone(self):
        X, _ = blobs(n_per=15, k=3, seed=13)
        a = cl.mine_cluster(cl.build_knn_graph(X, k=4), seed=0)
        b = cl.mine_cluster(cl.build_knn_graph(X * 7.3, k=4), seed=0)
        assert np.array_equal(a.labels, b.labels)


class TestConcepts:
    def test_name_is_most_frequent_member(self):
        cs = cl.name_concepts(
            [0, 0, 1],
            ["beta", "alpha", "gamma"],
            IntentRole.ARGUMENT,
            frequencies={"beta": 5, "alpha": 2, "gamma": 1},
        )
        assert cs[0].name == "beta"
        assert cs[1].name == "gamma"

    def test_name_tie_lexicographic(self):
        cs = cl.name_concepts([0, 0], ["b", "a"], IntentRole.ACTION)
        assert cs[0].name == "a"

    def test_ids_offset_by_start(self):
        cs = cl.name_concepts([0, 1], ["a", "b"], IntentRole.ACTION, id_start=7)
        assert [c.id for c in cs] == [7, 8]

    def test_duplicate_mentions_rejected(self):
        with pytest.raises(ValueError):
            cl.name_concepts([0, 1], ["a", "a"], IntentRole.ACTION)

    def test_singleton_names_itself(self):
        cs = cl.name_concepts([0], ["mortgage"], IntentRole.ARGUMENT)
        assert cs[0].name == "mortgage"
        assert cs[0].mentions == ("mortgage",)


class TestRepository:
    def make(self):
        return cl.ConceptRepository(
            [
                cl.Concept(0, IntentRole.ACTION, "check", ("check", "verify")),
                cl.Concept(1, IntentRole.ARGUMENT, "doc", ("doc", "passport")),
            ]
        )

    def test_lookup_is_role_scoped(self):
        repo = self.make()
        assert repo.lookup("check", IntentRole.ACTION).id == 0
        assert repo.lookup("check", IntentRole.ARGUMENT) is None

    def test_duplicate_mention_same_role_rejected(self):
        with pytest.raises(ValueError):
            cl.ConceptRepository(
                [
                    cl.Concept(0, IntentRole.ACTION, "a", ("x",)),
                    cl.Concept(1, IntentRole.ACTION, "b", ("x",)),
                ]
            )

    def test_duplicate_ids_rejected(self):
        with pytest.raises(ValueError):
            cl.ConceptRepository(
                [
                    cl.Concept(0, IntentRole.ACTION, "a", ("x",)),
                    cl.Concept(0, IntentRole.ACTION, "b", ("y",)),
                ]
            )

    def test_same_mention_different_roles_ok(self):
        repo = cl.ConceptRepository(
            [
                cl.Concept(0, IntentRole.ACTION, "check", ("check",)),
                cl.Concept(1, IntentRole.ARGUMENT, "check", ("check",)),
            ]
        )
        assert len(repo) == 2

    def test_save_load_hash_stable(self, tmp_path):
        repo = self.make()
        path = tmp_path / "c.json"
        repo.save(path)
        back = cl.ConceptRepository.load(path)
        assert back == repo
        assert back.content_hash() == repo.content_hash()

    def test_merged_keeps_old_bytes(self):
        repo = self.make()
        grown = repo.merged([cl.Concept(5, IntentRole.QUESTION, "how", ("how",))])
        assert grown.get(0) == repo.get(0)
        assert grown.max_id == 5

    def test_iteration_in_id_order(self):
        repo = self.make()
        assert [c.id for c in repo] == [0, 1]
