import numpy as np
import pytest

from discog.corpus import Corpus, EmailDocument, Judgment, JudgmentOrigin, Topic
from discog.errors import CorruptFile, UnknownDocId, UnknownNode, UnknownTopicId, VersionMismatch
from discog.graph import (
    Edge,
    GraphConfig,
    GraphIndex,
    HeteroGraph,
    NodeId,
    NodeKind,
    Relation,
    build_graph,
    graph_stats,
    isolated_nodes,
    labeled_edges,
    load_graph,
    neighbors,
    positive_triples,
    save_graph,
)
from discog.keywords import KeywordEntry, KeywordVocabulary


def doc(doc_id, body, sender="s@x.com", recipients=("r@x.com",)):
    return EmailDocument(doc_id=doc_id, subject="note", body=body, sender=sender, recipients=tuple(recipients))


def toy_inputs():
    """Two docs with one distinct keyword each, one topic without keywords."""
    documents = {"d1": doc("d1", "gas"), "d2": doc("d2", "swaps")}
    corpus = Corpus(documents=documents, participants=("r@x.com", "s@x.com"))
    topics = [Topic("t1", "statement text")]
    vocab = KeywordVocabulary(
        entries={
            "gas": KeywordEntry(5, np.array([1.0, 0.0])),
            "swaps": KeywordEntry(5, np.array([0.0, 1.0])),
        },
        doc_keywords={"d1": ("gas",), "d2": ("swaps",)},
        topic_keywords={"t1": ()},
    )
    seeds = [Judgment("t1", "d1", True, JudgmentOrigin.SEED)]
    return corpus, topics, seeds, vocab


def build_toy(**config):
    corpus, topics, seeds, vocab = toy_inputs()
    defaults = dict(include_participants=False, transductive_masters=False)
    defaults.update(config)
    return build_graph(corpus, topics, seeds, vocab, [], GraphConfig(**defaults))


class TestBuildGraph:
    def test_toy_counts(self):
        graph = build_toy()
        stats = graph_stats(graph)
        assert sum(stats["nodes"].values()) == 5  # 2 docs + 1 topic + 2 keywords
        assert stats["edges"] == {
            "mentions": 2, "sent_by": 0, "received_by": 0,
            "similar_to": 0, "relevant_to": 1, "instance_of": 0,
        }
        (edge,) = [e for e in graph.edges if e.rel is Relation.RELEVANT_TO]
        assert edge.label == 1

    def test_transductive_masters_add_nodes_and_edges(self):
        base = graph_stats(build_toy())
        graph = build_toy(transductive_masters=True)
        stats = graph_stats(graph)
        assert sum(stats["nodes"].values()) == sum(base["nodes"].values()) + 2
        assert stats["edges"]["instance_of"] == 3  # 2 docs + 1 topic

    def test_no_isolated_docs_or_topics_in_transductive_mode(self):
        corpus, topics, seeds, _ = toy_inputs()
        # no keywords, no participants: docs/topics would be isolated
        graph = build_graph(corpus, topics, [], None, [],
                            GraphConfig(include_keywords=False, include_participants=False,
                                        transductive_masters=True))
        assert isolated_nodes(graph, [NodeKind.DOCUMENT, NodeKind.TOPIC]) == []

    def test_unknown_ids_in_judgments(self):
        corpus, topics, _, vocab = toy_inputs()
        bad_doc = [Judgment("t1", "nope", True, JudgmentOrigin.SEED)]
        with pytest.raises(UnknownDocId):
            build_graph(corpus, topics, bad_doc, vocab, [], GraphConfig())
        bad_topic = [Judgment("nope", "d1", True, JudgmentOrigin.SEED)]
        with pytest.raises(UnknownTopicId):
            build_graph(corpus, topics, bad_topic, vocab, [], GraphConfig())

    def test_keyword_flag_removes_exactly_keyword_material(self):
        corpus, topics, seeds, vocab = toy_inputs()
        links = [("gas", "swaps")]
        on = build_graph(corpus, topics, seeds, vocab, links, GraphConfig(include_participants=True))
        off = build_graph(corpus, topics, seeds, vocab, links,
                          GraphConfig(include_keywords=False, include_participants=True))
        gone_nodes = set(on.node_ids()) - set(off.node_ids())
        assert gone_nodes == {NodeId(NodeKind.KEYWORD, "gas"), NodeId(NodeKind.KEYWORD, "swaps")}
        gone_edges = set(on.edges) - set(off.edges)
        assert {e.rel for e in gone_edges} == {Relation.MENTIONS, Relation.SIMILAR_TO}
        assert set(off.edges) <= set(on.edges)

    def test_participant_flag_removes_exactly_participant_material(self):
        corpus, topics, seeds, vocab = toy_inputs()
        on = build_graph(corpus, topics, seeds, vocab, [], GraphConfig(include_participants=True))
        off = build_graph(corpus, topics, seeds, vocab, [], GraphConfig(include_participants=False))
        gone_nodes = set(on.node_ids()) - set(off.node_ids())
        assert gone_nodes == {NodeId(NodeKind.PARTICIPANT, "r@x.com"), NodeId(NodeKind.PARTICIPANT, "s@x.com")}
        gone_edges = set(on.edges) - set(off.edges)
        assert {e.rel for e in gone_edges} == {Relation.SENT_BY, Relation.RECEIVED_BY}

    def test_document_order_irrelevant(self):
        corpus, topics, seeds, vocab = toy_inputs()
        reordered = Corpus(
            documents=dict(reversed(list(corpus.documents.items()))),
            participants=corpus.participants,
        )
        g1 = build_graph(corpus, topics, seeds, vocab, [], GraphConfig())
        g2 = build_graph(reordered, topics, seeds, vocab, [], GraphConfig())
        assert g1.edges == g2.edges
        assert g1.nodes_by_kind == g2.nodes_by_kind

    def test_edge_type_signatures_enforced(self):
        nodes = [NodeId(NodeKind.DOCUMENT, "d"), NodeId(NodeKind.TOPIC, "t")]
        bad = Edge(NodeId(NodeKind.TOPIC, "t"), Relation.RELEVANT_TO, NodeId(NodeKind.DOCUMENT, "d"), 1)
        with pytest.raises(ValueError):
            HeteroGraph(nodes, [bad])

    def test_label_only_on_relevant_to(self):
        nodes = [NodeId(NodeKind.DOCUMENT, "d"), NodeId(NodeKind.KEYWORD, "k")]
        with pytest.raises(ValueError):
            HeteroGraph(nodes, [Edge(NodeId(NodeKind.DOCUMENT, "d"), Relation.MENTIONS, NodeId(NodeKind.KEYWORD, "k"), 1)])
        with pytest.raises(ValueError):
            HeteroGraph(
                [NodeId(NodeKind.DOCUMENT, "d"), NodeId(NodeKind.TOPIC, "t")],
                [Edge(NodeId(NodeKind.DOCUMENT, "d"), Relation.RELEVANT_TO, NodeId(NodeKind.TOPIC, "t"))],
            )

    def test_dangling_edge_rejected(self):
        nodes = [NodeId(NodeKind.DOCUMENT, "d")]
        edge = Edge(NodeId(NodeKind.DOCUMENT, "d"), Relation.RELEVANT_TO, NodeId(NodeKind.TOPIC, "ghost"), 1)
        with pytest.raises(ValueError):
            HeteroGraph(nodes, [edge])


class TestTripleViews:
    def test_positive_triples_filters_labels(self):
        corpus, topics, _, vocab = toy_inputs()
        seeds = [
            Judgment("t1", "d1", True, JudgmentOrigin.SEED),
            Judgment("t1", "d2", False, JudgmentOrigin.SEED),
        ]
        graph = build_graph(corpus, topics, seeds, vocab, [], GraphConfig())
        triples = positive_triples(graph)
        assert triples == [
            (NodeId(NodeKind.DOCUMENT, "d1"), Relation.RELEVANT_TO, NodeId(NodeKind.TOPIC, "t1"))
        ]
        labeled = labeled_edges(graph)
        assert len(labeled) == 2
        assert sorted(label for _, label in labeled) == [0, 1]

    def test_no_positives(self):
        corpus, topics, _, vocab = toy_inputs()
        seeds = [Judgment("t1", "d1", False, JudgmentOrigin.SEED)]
        graph = build_graph(corpus, topics, seeds, vocab, [], GraphConfig())
        assert positive_triples(graph) == []


class TestNeighbors:
    def test_full_list_when_sample_exceeds_degree(self):
        graph = build_toy()
        node = NodeId(NodeKind.DOCUMENT, "d1")
        got = neighbors(graph, node, sample=5)
        assert got == neighbors(graph, node)
        assert len(got) == 2  # keyword + relevance edge endpoint

    def test_sampling_deterministic(self):
        corpus, topics, seeds, vocab = toy_inputs()
        graph = build_graph(corpus, topics, seeds, vocab, [], GraphConfig(include_participants=True))
        node = NodeId(NodeKind.DOCUMENT, "d1")
        a = neighbors(graph, node, sample=2, rng_seed=9)
        b = neighbors(graph, node, sample=2, rng_seed=9)
        assert a == b
        assert len(a) == 2

    def test_sample_subset_of_full(self):
        rng = np.random.default_rng(4)
        corpus, topics, seeds, vocab = toy_inputs()
        graph = build_graph(corpus, topics, seeds, vocab, [], GraphConfig(include_participants=True))
        for node in graph.node_ids():
            full = set(neighbors(graph, node))
            for seed in rng.integers(0, 1000, size=5):
                assert set(neighbors(graph, node, sample=2, rng_seed=int(seed))) <= full

    def test_relation_filter(self):
        graph = build_toy()
        node = NodeId(NodeKind.DOCUMENT, "d1")
        assert neighbors(graph, node, rel=Relation.MENTIONS) == [NodeId(NodeKind.KEYWORD, "gas")]

    def test_unknown_node(self):
        graph = build_toy()
        with pytest.raises(UnknownNode):
            neighbors(graph, NodeId(NodeKind.DOCUMENT, "ghost"))


class TestSerialization:
    def test_round_trip_bytes(self, tmp_path):
        corpus, topics, seeds, vocab = toy_inputs()
        graph = build_graph(corpus, topics, seeds, vocab, [("gas", "swaps")],
                            GraphConfig(include_participants=True, transductive_masters=True))
        first = tmp_path / "graph.txt"
        save_graph(graph, first)
        loaded = load_graph(first)
        second = tmp_path / "again.txt"
        save_graph(loaded, second)
        assert first.read_bytes() == second.read_bytes()
        assert loaded.edges == graph.edges
        assert loaded.nodes_by_kind == graph.nodes_by_kind
        assert loaded.config == graph.config

    def test_keys_with_tabs_and_newlines_survive(self, tmp_path):
        nodes = [NodeId(NodeKind.DOCUMENT, "d\tweird\nid"), NodeId(NodeKind.TOPIC, "t1")]
        graph = HeteroGraph(nodes, [Edge(nodes[0], Relation.RELEVANT_TO, nodes[1], 0)])
        path = tmp_path / "graph.txt"
        save_graph(graph, path)
        loaded = load_graph(path)
        assert loaded.nodes_by_kind[NodeKind.DOCUMENT] == ("d\tweird\nid",)

    def test_truncated_file(self, tmp_path):
        graph = build_toy()
        path = tmp_path / "graph.txt"
        save_graph(graph, path)
        clipped = path.read_text().splitlines()[:-2]
        path.write_text("\n".join(clipped) + "\n")
        with pytest.raises(CorruptFile):
            load_graph(path)

    def test_unknown_version(self, tmp_path):
        graph = build_toy()
        path = tmp_path / "graph.txt"
        save_graph(graph, path)
        lines = path.read_text().splitlines()
        lines[0] = "discog-graph v99"
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(VersionMismatch):
            load_graph(path)

    def test_not_a_graph_file(self, tmp_path):
        path = tmp_path / "graph.txt"
        path.write_text("something else\n")
        with pytest.raises(CorruptFile):
            load_graph(path)


class TestGraphIndex:
    def test_triples_exclude_negative_relevance(self):
        corpus, topics, _, vocab = toy_inputs()
        seeds = [
            Judgment("t1", "d1", True, JudgmentOrigin.SEED),
            Judgment("t1", "d2", False, JudgmentOrigin.SEED),
        ]
        graph = build_graph(corpus, topics, seeds, vocab, [], GraphConfig())
        index = GraphIndex(graph)
        rel_code = list(Relation).index(Relation.RELEVANT_TO)
        assert int((index.triples[:, 1] == rel_code).sum()) == 1

    def test_message_adjacency_excludes_relevance(self):
        graph = build_toy()
        index = GraphIndex(graph)
        d1 = index.id_of[NodeId(NodeKind.DOCUMENT, "d1")]
        t1 = index.id_of[NodeId(NodeKind.TOPIC, "t1")]
        assert t1 not in index.neighbor_lists[d1]

    def test_labeled_pairs(self):
        corpus, topics, _, vocab = toy_inputs()
        seeds = [
            Judgment("t1", "d1", True, JudgmentOrigin.SEED),
            Judgment("t1", "d2", False, JudgmentOrigin.SEED),
        ]
        graph = build_graph(corpus, topics, seeds, vocab, [], GraphConfig())
        index = GraphIndex(graph)
        docs, topics_, labels = index.labeled_pairs()
        assert len(docs) == len(topics_) == len(labels) == 2
        assert sorted(labels) == [0.0, 1.0]
