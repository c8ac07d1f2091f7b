import math

import numpy as np
import pytest

from discog import kge
from discog.corpus import Corpus, EmailDocument, Judgment, JudgmentOrigin, Topic
from discog.errors import ConfigError, NoPositives, UnknownNode
from discog.graph import GraphConfig, NodeId, NodeKind, Relation, build_graph
from discog.keywords import KeywordEntry, KeywordVocabulary


def cluster_graph(transductive=True):
    """Planted two-cluster graph: docs 1-4 relevant to A, 5-8 to B."""
    documents = {
        f"d{i}": EmailDocument(
            doc_id=f"d{i}", subject="s", body=f"word{(i - 1) // 4}",
            sender="s@x.com", recipients=("r@x.com",),
        )
        for i in range(1, 9)
    }
    corpus = Corpus(documents=documents, participants=("r@x.com", "s@x.com"))
    topics = [Topic("A", "first cluster"), Topic("B", "second cluster")]
    vocab = KeywordVocabulary(
        entries={
            "word0": KeywordEntry(4, np.array([1.0, 0.0])),
            "word1": KeywordEntry(4, np.array([0.0, 1.0])),
        },
        doc_keywords={f"d{i}": (f"word{(i - 1) // 4}",) for i in range(1, 9)},
        topic_keywords={"A": ("word0",), "B": ("word1",)},
    )
    seeds = [
        Judgment("A" if i <= 4 else "B", f"d{i}", True, JudgmentOrigin.SEED)
        for i in range(1, 9)
    ]
    return build_graph(
        corpus, topics, seeds, vocab, [],
        GraphConfig(include_participants=False, transductive_masters=transductive),
    )


def triple(doc, topic):
    return (NodeId(NodeKind.DOCUMENT, doc), Relation.RELEVANT_TO, NodeId(NodeKind.TOPIC, topic))


class TestConfig:
    def test_rejects_unknown_kind(self):
        with pytest.raises(ConfigError):
            kge.KgeConfig(model_kind="rotate")

    def test_rejects_zero_dim(self):
        with pytest.raises(ConfigError):
            kge.KgeConfig(dim=0)

    def test_out_of_range_epochs_warn(self):
        with pytest.warns(UserWarning):
            kge.KgeConfig(epochs=5)


class TestInitModel:
    def test_deterministic(self):
        graph = cluster_graph()
        config = kge.KgeConfig(dim=4, rng_seed=3)
        a = kge.init_model(graph, config)
        b = kge.init_model(graph, config)
        for name in a.params:
            assert a.params[name].tobytes() == b.params[name].tobytes()

    def test_bounds_and_normalization(self):
        graph = cluster_graph()
        config = kge.KgeConfig(model_kind="complex", dim=16, rng_seed=0)
        model = kge.init_model(graph, config)
        bound = 6.0 / math.sqrt(16)
        for arr in model.params.values():
            assert np.all(np.abs(arr) <= bound)
        transe = kge.init_model(graph, kge.KgeConfig(dim=16, rng_seed=0))
        norms = np.linalg.norm(transe.params["entity"], axis=1)
        assert np.allclose(norms, 1.0, atol=1e-12)


class TestScoreTriple:
    def _hand_model(self, kind, entity, relation, norm="L1"):
        nodes = (NodeId(NodeKind.DOCUMENT, "d"), NodeId(NodeKind.TOPIC, "t"))
        if kind == kge.TRANSE:
            params = {"entity": np.asarray(entity, dtype=float), "relation": np.asarray(relation, dtype=float)}
        else:
            entity_re, entity_im = entity
            relation_re, relation_im = relation
            params = {
                "entity_re": np.asarray(entity_re, dtype=float),
                "entity_im": np.asarray(entity_im, dtype=float),
                "relation_re": np.asarray(relation_re, dtype=float),
                "relation_im": np.asarray(relation_im, dtype=float),
            }
        config = kge.KgeConfig(model_kind=kind, dim=params[next(iter(params))].shape[1], norm=norm)
        return kge.KgeModel(config=config, nodes=nodes, params=params)

    def test_transe_exact_translation_is_maximal_zero(self):
        rel_count = len(Relation)
        relations = np.zeros((rel_count, 2))
        relations[list(Relation).index(Relation.RELEVANT_TO)] = [1.0, 0.0]
        model = self._hand_model(kge.TRANSE, [[0.0, 0.0], [1.0, 0.0]], relations)
        assert kge.score_triple(model, triple("d", "t")) == 0.0

    def test_transe_l1_distance(self):
        rel_count = len(Relation)
        relations = np.zeros((rel_count, 2))
        relations[list(Relation).index(Relation.RELEVANT_TO)] = [1.0, 0.0]
        model = self._hand_model(kge.TRANSE, [[0.0, 0.0], [0.0, 1.0]], relations)
        assert kge.score_triple(model, triple("d", "t")) == -2.0

    def test_complex_all_ones(self):
        rel_count = len(Relation)
        ones = np.ones((rel_count, 1))
        model = self._hand_model(
            kge.COMPLEX,
            ([[1.0], [1.0]], [[0.0], [0.0]]),
            (ones, np.zeros((rel_count, 1))),
        )
        assert kge.score_triple(model, triple("d", "t")) == 1.0

    def test_unknown_node(self):
        graph = cluster_graph()
        model = kge.init_model(graph, kge.KgeConfig(dim=4))
        with pytest.raises(UnknownNode):
            kge.score_triple(model, triple("ghost", "A"))


class TestNllLoss:
    def test_equal_scores_gives_ln2(self):
        assert kge.nll_loss(1.0, [1.0]) == pytest.approx(math.log(2), abs=1e-12)

    def test_dominant_positive_vanishes(self):
        assert kge.nll_loss(50.0, [0.0, 0.0]) == pytest.approx(0.0, abs=1e-12)

    def test_four_way_tie_gives_ln4(self):
        assert kge.nll_loss(0.0, [0.0, 0.0, 0.0]) == pytest.approx(math.log(4), abs=1e-12)

    def test_stable_for_large_scores(self):
        assert math.isfinite(kge.nll_loss(1e6, [1e6 - 1]))


class TestSampleNegatives:
    def test_cardinality(self):
        graph = cluster_graph()
        negatives = kge.sample_negatives(triple("d1", "A"), graph, eta=20, rng=0)
        assert len(negatives) == 20

    def test_filtered_against_positives(self):
        graph = cluster_graph()
        observed = {
            (e.src, e.rel, e.dst) for e in graph.edges
        }
        negatives = kge.sample_negatives(triple("d1", "A"), graph, eta=50, rng=1)
        for neg in negatives:
            assert neg not in observed

    def test_degenerate_graph_keeps_collisions_with_warning(self):
        documents = {"d": EmailDocument(doc_id="d", subject="s", body="b", sender="s@x", recipients=("r@x",))}
        corpus = Corpus(documents=documents, participants=("r@x", "s@x"))
        topics = [Topic("T", "only topic")]
        seeds = [Judgment("T", "d", True, JudgmentOrigin.SEED)]
        graph = build_graph(corpus, topics, seeds, None, [],
                            GraphConfig(include_keywords=False, include_participants=False))
        with pytest.warns(UserWarning):
            negatives = kge.sample_negatives(triple("d", "T"), graph, eta=3, rng=0)
        assert negatives == [triple("d", "T")] * 3

    def test_type_consistent(self):
        graph = cluster_graph()
        negatives = kge.sample_negatives(triple("d1", "A"), graph, eta=40, rng=2)
        for head, rel, tail in negatives:
            assert head.kind is NodeKind.DOCUMENT
            assert tail.kind is NodeKind.TOPIC
            assert rel is Relation.RELEVANT_TO


class TestGradients:
    @pytest.mark.parametrize(
        "kind,norm", [("transe", "L1"), ("transe", "L2"), ("complex", "L1")]
    )
    def test_analytic_matches_finite_differences(self, kind, norm):
        for seed in (0, 1, 2):
            assert kge.gradcheck(kind, rng_seed=seed, norm=norm) <= 1e-4

    def test_complex_conjugation_symmetry(self):
        # conjugating the relation swaps head and tail roles:
        # Re<h, r, conj(t)> == Re<t, conj(r), conj(h)> on random vectors
        rng = np.random.default_rng(8)
        params = {
            "entity_re": rng.normal(size=(4, 6)),
            "entity_im": rng.normal(size=(4, 6)),
            "relation_re": rng.normal(size=(2, 6)),
            "relation_im": rng.normal(size=(2, 6)),
        }
        conjugated = {
            "entity_re": params["entity_re"].copy(),
            "entity_im": params["entity_im"].copy(),
            "relation_re": params["relation_re"].copy(),
            "relation_im": -params["relation_im"],
        }
        h = np.array([0, 1, 2])
        t = np.array([1, 2, 3])
        r = np.array([0, 1, 0])
        forward = kge.batch_scores("complex", params, h, r, t)
        backward = kge.batch_scores("complex", conjugated, t, r, h)
        assert np.allclose(forward, backward, atol=1e-12)


class TestTraining:
    def test_requires_positives(self):
        documents = {"d": EmailDocument(doc_id="d", subject="s", body="b", sender="s@x", recipients=("r@x",))}
        corpus = Corpus(documents=documents, participants=("r@x", "s@x"))
        graph = build_graph(corpus, [Topic("T", "t")], [], None, [],
                            GraphConfig(include_keywords=False, include_participants=False))
        with pytest.raises(NoPositives):
            kge.train_kge(graph, kge.KgeConfig(dim=4, epochs=300))

    def test_zero_epochs_returns_init(self):
        graph = cluster_graph()
        config = kge.KgeConfig(dim=4, epochs=0, rng_seed=5)
        trained = kge.train_kge(graph, config)
        init = kge.init_model(graph, config)
        assert trained.loss_trace == []
        for name in init.params:
            assert trained.params[name].tobytes() == init.params[name].tobytes()

    @pytest.mark.parametrize("kind", ["transe", "complex"])
    def test_cluster_separation_after_training(self, kind):
        graph = cluster_graph()
        config = kge.KgeConfig(
            model_kind=kind, dim=16, epochs=300, learning_rate=1e-3,
            batch_size=8, eta=4, relevance_boost=4, rng_seed=7,
        )
        model = kge.train_kge(graph, config)
        assert all(math.isfinite(loss) for loss in model.loss_trace)
        assert model.loss_trace[-1] < model.loss_trace[0]
        held_in = [triple(f"d{i}", "A" if i <= 4 else "B") for i in range(1, 9)]
        crossed = [triple(f"d{i}", "B" if i <= 4 else "A") for i in range(1, 9)]
        pos_scores = [kge.score_triple(model, t) for t in held_in]
        neg_scores = [kge.score_triple(model, t) for t in crossed]
        assert min(pos_scores) > max(neg_scores)

    def test_deterministic_training(self):
        graph = cluster_graph()
        config = kge.KgeConfig(dim=8, epochs=300, batch_size=8, eta=2, rng_seed=3)
        a = kge.train_kge(graph, config)
        b = kge.train_kge(graph, config)
        assert a.loss_trace == b.loss_trace
        for name in a.params:
            assert a.params[name].tobytes() == b.params[name].tobytes()

    def test_transe_entities_stay_normalized(self):
        graph = cluster_graph()
        model = kge.train_kge(graph, kge.KgeConfig(dim=8, epochs=300, batch_size=8, eta=2, rng_seed=0))
        norms = np.linalg.norm(model.params["entity"], axis=1)
        assert np.allclose(norms, 1.0, atol=1e-9)


class TestPrediction:
    def test_order_preserved_and_empty(self):
        graph = cluster_graph()
        model = kge.init_model(graph, kge.KgeConfig(dim=4, rng_seed=1))
        assert kge.predict_kge_scores(model, []) == []
        pairs = [
            (NodeId(NodeKind.DOCUMENT, "d1"), NodeId(NodeKind.TOPIC, "A")),
            (NodeId(NodeKind.DOCUMENT, "d2"), NodeId(NodeKind.TOPIC, "B")),
        ]
        scores = kge.predict_kge_scores(model, pairs)
        assert scores[0] == kge.score_triple(model, triple("d1", "A"))
        assert scores[1] == kge.score_triple(model, triple("d2", "B"))

    def test_unknown_document_is_unscorable(self):
        graph = cluster_graph()
        model = kge.init_model(graph, kge.KgeConfig(dim=4))
        with pytest.raises(UnknownNode):
            kge.predict_kge_scores(model, [(NodeId(NodeKind.DOCUMENT, "new"), NodeId(NodeKind.TOPIC, "A"))])


class TestPersistence:
    def test_round_trip(self, tmp_path):
        graph = cluster_graph()
        config = kge.KgeConfig(dim=4, epochs=300, batch_size=8, eta=2, rng_seed=2)
        model = kge.train_kge(graph, config)
        path = tmp_path / "model.bin"
        kge.save_kge_model(model, path)
        loaded = kge.load_kge_model(path)
        assert loaded.config == model.config
        assert loaded.nodes == model.nodes
        assert loaded.loss_trace == model.loss_trace
        for name in model.params:
            assert loaded.params[name].tobytes() == model.params[name].tobytes()
        kge.save_kge_model(loaded, tmp_path / "again.bin")
        assert (tmp_path / "again.bin").read_bytes() == path.read_bytes()
