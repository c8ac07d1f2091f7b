"""Heterogeneous graph of documents, topics, participants, and keywords.

Node and edge tables are canonically sorted at construction, so two
graphs built from the same inputs in any iteration order are identical,
and the text serialization is diff-stable. Graphs are immutable after
construction and safe for concurrent reads.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterable, NamedTuple

import numpy as np

from .corpus import Corpus, Judgment, Topic
from .errors import CorruptFile, UnknownDocId, UnknownNode, UnknownTopicId, VersionMismatch
from .keywords import KeywordVocabulary

GRAPH_FORMAT_VERSION = "discog-graph v1"

MASTER_DOCUMENT_KEY = "DOCUMENT"
MASTER_TOPIC_KEY = "TOPIC"


class NodeKind(str, Enum):
    DOCUMENT = "document"
    TOPIC = "topic"
    PARTICIPANT = "participant"
    KEYWORD = "keyword"
    MASTER_DOCUMENT = "master_document"
    MASTER_TOPIC = "master_topic"


class Relation(str, Enum):
    MENTIONS = "mentions"
    SENT_BY = "sent_by"
    RECEIVED_BY = "received_by"
    SIMILAR_TO = "similar_to"
    RELEVANT_TO = "relevant_to"
    INSTANCE_OF = "instance_of"


_KIND_ORDER = {kind: i for i, kind in enumerate(NodeKind)}
_REL_ORDER = {rel: i for i, rel in enumerate(Relation)}

# (src kinds, dst kinds) allowed per relation
_SIGNATURES = {
    Relation.MENTIONS: ({NodeKind.DOCUMENT, NodeKind.TOPIC}, {NodeKind.KEYWORD}),
    Relation.SENT_BY: ({NodeKind.DOCUMENT}, {NodeKind.PARTICIPANT}),
    Relation.RECEIVED_BY: ({NodeKind.DOCUMENT}, {NodeKind.PARTICIPANT}),
    Relation.SIMILAR_TO: ({NodeKind.KEYWORD}, {NodeKind.KEYWORD}),
    Relation.RELEVANT_TO: ({NodeKind.DOCUMENT}, {NodeKind.TOPIC}),
    Relation.INSTANCE_OF: (
        {NodeKind.DOCUMENT, NodeKind.TOPIC},
        {NodeKind.MASTER_DOCUMENT, NodeKind.MASTER_TOPIC},
    ),
}


class NodeId(NamedTuple):
    kind: NodeKind
    key: str

    def sort_key(self):
        return (_KIND_ORDER[self.kind], self.key)


class Edge(NamedTuple):
    src: NodeId
    rel: Relation
    dst: NodeId
    label: int | None = None

    def sort_key(self):
        label = -1 if self.label is None else self.label
        return (_REL_ORDER[self.rel], self.src.sort_key(), self.dst.sort_key(), label)


@dataclass(frozen=True)
class GraphConfig:
    include_keywords: bool = True
    include_participants: bool = True
    transductive_masters: bool = False
    min_df: int = 5
    sim_threshold: float = 0.75

    def __post_init__(self):
        if not -1.0 <= self.sim_threshold <= 1.0:
            raise ValueError(f"sim_threshold must be in [-1, 1], got {self.sim_threshold}")


def _validate_edge(edge: Edge) -> None:
    src_kinds, dst_kinds = _SIGNATURES[edge.rel]
    if edge.src.kind not in src_kinds or edge.dst.kind not in dst_kinds:
        raise ValueError(f"edge violates relation signature: {edge}")
    if edge.rel is Relation.RELEVANT_TO:
        if edge.label not in (0, 1):
            raise ValueError(f"relevant_to edge requires a 0/1 label: {edge}")
    elif edge.label is not None:
        raise ValueError(f"only relevant_to edges carry labels: {edge}")
    if edge.rel is Relation.SIMILAR_TO:
        if edge.src.key >= edge.dst.key:
            raise ValueError(f"similar_to edges are stored once with src < dst: {edge}")
    if edge.rel is Relation.INSTANCE_OF:
        ok = (edge.src.kind, edge.dst.kind) in (
            (NodeKind.DOCUMENT, NodeKind.MASTER_DOCUMENT),
            (NodeKind.TOPIC, NodeKind.MASTER_TOPIC),
        )
        if not ok:
            raise ValueError(f"instance_of must link documents/topics to their master: {edge}")


class HeteroGraph:
    """Immutable typed graph with canonical node/edge ordering."""

    def __init__(self, nodes: Iterable[NodeId], edges: Iterable[Edge], config: GraphConfig | None = None):
        node_set = set(nodes)
        self.nodes_by_kind: dict[NodeKind, tuple[str, ...]] = {
            kind: tuple(sorted(n.key for n in node_set if n.kind == kind)) for kind in NodeKind
        }
        self.config = config if config is not None else GraphConfig()
        edge_list = sorted(set(edges), key=Edge.sort_key)
        adjacency: dict[NodeId, dict[Relation, list[NodeId]]] = {n: {} for n in node_set}
        for edge in edge_list:
            _validate_edge(edge)
            for endpoint, other in ((edge.src, edge.dst), (edge.dst, edge.src)):
                if endpoint not in adjacency:
                    raise ValueError(f"dangling edge endpoint {endpoint} in {edge}")
                adjacency[endpoint].setdefault(edge.rel, []).append(other)
        for rels in adjacency.values():
            for rel in rels:
                rels[rel].sort(key=NodeId.sort_key)
        self.edges: tuple[Edge, ...] = tuple(edge_list)
        self._adjacency = adjacency
        for kind in (NodeKind.MASTER_DOCUMENT, NodeKind.MASTER_TOPIC):
            n = len(self.nodes_by_kind[kind])
            if n > 1:
                raise ValueError(f"at most one {kind.value} node is allowed, got {n}")

    # -- queries -------------------------------------------------------------

    def has_node(self, node: NodeId) -> bool:
        return node in self._adjacency

    def node_ids(self) -> list[NodeId]:
        out = []
        for kind in NodeKind:
            out.extend(NodeId(kind, key) for key in self.nodes_by_kind[kind])
        return out

    def keys(self, kind: NodeKind) -> tuple[str, ...]:
        return self.nodes_by_kind[kind]

    def degree(self, node: NodeId) -> int:
        if node not in self._adjacency:
            raise UnknownNode(f"{node} is not in the graph")
        return sum(len(v) for v in self._adjacency[node].values())

    def adjacency(self, node: NodeId) -> dict[Relation, list[NodeId]]:
        if node not in self._adjacency:
            raise UnknownNode(f"{node} is not in the graph")
        return self._adjacency[node]


def build_graph(
    corpus: Corpus,
    topics: list[Topic],
    seed_judgments: list[Judgment],
    vocab: KeywordVocabulary | None,
    sim_links: list[tuple[str, str]] | None,
    config: GraphConfig,
) -> HeteroGraph:
    """Assemble the typed graph from the corpus artifacts.

    Labeled relevance edges come from the seed judgments only; held-out
    evaluation judgments must never enter the graph.
    """
    nodes: set[NodeId] = set()
    edges: list[Edge] = []
    doc_ids = set(corpus.documents)
    topic_ids = {t.topic_id for t in topics}

    for doc_id in corpus.documents:
        nodes.add(NodeId(NodeKind.DOCUMENT, doc_id))
    for topic in topics:
        nodes.add(NodeId(NodeKind.TOPIC, topic.topic_id))

    if config.include_participants:
        for address in corpus.participants:
            nodes.add(NodeId(NodeKind.PARTICIPANT, address))
        for doc_id, doc in corpus.documents.items():
            src = NodeId(NodeKind.DOCUMENT, doc_id)
            edges.append(Edge(src, Relation.SENT_BY, NodeId(NodeKind.PARTICIPANT, doc.sender)))
            for recipient in set(doc.recipients):
                edges.append(Edge(src, Relation.RECEIVED_BY, NodeId(NodeKind.PARTICIPANT, recipient)))

    if config.include_keywords and vocab is not None:
        retained = set(vocab.entries)
        for phrase in retained:
            nodes.add(NodeId(NodeKind.KEYWORD, phrase))
        for doc_id, phrases in vocab.doc_keywords.items():
            src = NodeId(NodeKind.DOCUMENT, doc_id)
            for phrase in phrases:
                if phrase in retained:
                    edges.append(Edge(src, Relation.MENTIONS, NodeId(NodeKind.KEYWORD, phrase)))
        for topic_id, phrases in vocab.topic_keywords.items():
            if topic_id not in topic_ids:
                continue
            src = NodeId(NodeKind.TOPIC, topic_id)
            for phrase in phrases:
                if phrase in retained:
                    edges.append(Edge(src, Relation.MENTIONS, NodeId(NodeKind.KEYWORD, phrase)))
        for a, b in sim_links or []:
            if a in retained and b in retained:
                lo, hi = sorted((a, b))
                if lo != hi:
                    edges.append(Edge(NodeId(NodeKind.KEYWORD, lo), Relation.SIMILAR_TO, NodeId(NodeKind.KEYWORD, hi)))

    for judgment in seed_judgments:
        if judgment.doc_id not in doc_ids:
            raise UnknownDocId(f"judgment references unknown doc_id {judgment.doc_id!r}")
        if judgment.topic_id not in topic_ids:
            raise UnknownTopicId(f"judgment references unknown topic_id {judgment.topic_id!r}")
        edges.append(
            Edge(
                NodeId(NodeKind.DOCUMENT, judgment.doc_id),
                Relation.RELEVANT_TO,
                NodeId(NodeKind.TOPIC, judgment.topic_id),
                label=1 if judgment.relevant else 0,
            )
        )

    if config.transductive_masters:
        master_doc = NodeId(NodeKind.MASTER_DOCUMENT, MASTER_DOCUMENT_KEY)
        master_topic = NodeId(NodeKind.MASTER_TOPIC, MASTER_TOPIC_KEY)
        nodes.add(master_doc)
        nodes.add(master_topic)
        for doc_id in corpus.documents:
            edges.append(Edge(NodeId(NodeKind.DOCUMENT, doc_id), Relation.INSTANCE_OF, master_doc))
        for topic in topics:
            edges.append(Edge(NodeId(NodeKind.TOPIC, topic.topic_id), Relation.INSTANCE_OF, master_topic))

    return HeteroGraph(nodes, edges, config)


def positive_triples(graph: HeteroGraph) -> list[tuple[NodeId, Relation, NodeId]]:
    """The label-1 relevance edges as (document, relevant_to, topic) triples."""
    return [
        (e.src, e.rel, e.dst)
        for e in graph.edges
        if e.rel is Relation.RELEVANT_TO and e.label == 1
    ]


def labeled_edges(graph: HeteroGraph) -> list[tuple[tuple[NodeId, NodeId], int]]:
    """All relevance edges with their 0/1 labels."""
    return [
        ((e.src, e.dst), e.label)
        for e in graph.edges
        if e.rel is Relation.RELEVANT_TO
    ]


def neighbors(
    graph: HeteroGraph,
    node: NodeId,
    rel: Relation | None = None,
    sample: int | None = None,
    rng_seed: int | np.random.Generator = 0,
) -> list[NodeId]:
    """Neighbors of a node (both edge directions), optionally subsampled.

    When ``sample`` is below the degree, a uniform draw without
    replacement is taken, deterministic for a fixed rng_seed.
    """
    adjacency = graph.adjacency(node)
    if rel is not None:
        result = list(adjacency.get(rel, ()))
    else:
        result = [n for r in Relation for n in adjacency.get(r, ())]
        result.sort(key=NodeId.sort_key)
    if sample is not None and sample < len(result):
        rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
        picks = rng.choice(len(result), size=sample, replace=False)
        result = [result[int(i)] for i in sorted(picks)]
    return result


def graph_stats(graph: HeteroGraph) -> dict:
    """Node counts per kind and edge counts per relation."""
    return {
        "nodes": {kind.value: len(graph.nodes_by_kind[kind]) for kind in NodeKind},
        "edges": {
            rel.value: sum(1 for e in graph.edges if e.rel is rel) for rel in Relation
        },
    }


def isolated_nodes(graph: HeteroGraph, kinds: Iterable[NodeKind]) -> list[NodeId]:
    """Nodes of the given kinds with no incident edges at all."""
    wanted = set(kinds)
    return [
        node
        for node in graph.node_ids()
        if node.kind in wanted and graph.degree(node) == 0
    ]


# -- serialization -----------------------------------------------------------

_ESCAPES = {"\\": "\\\\", "\t": "\\t", "\n": "\\n", "\r": "\\r"}


def _escape(value: str) -> str:
    for raw, esc in _ESCAPES.items():
        value = value.replace(raw, esc)
    return value


def _unescape(value: str) -> str:
    out = []
    i = 0
    while i < len(value):
        ch = value[i]
        if ch == "\\" and i + 1 < len(value):
            nxt = value[i + 1]
            mapped = {"\\": "\\", "t": "\t", "n": "\n", "r": "\r"}.get(nxt)
            if mapped is not None:
                out.append(mapped)
                i += 2
                continue
        out.append(ch)
        i += 1
    return "".join(out)


def save_graph(graph: HeteroGraph, path) -> None:
    """Versioned sectioned text dump, canonically sorted for diff-stability."""
    cfg = graph.config
    lines = [GRAPH_FORMAT_VERSION, "[config]"]
    lines.append(f"include_keywords={str(cfg.include_keywords).lower()}")
    lines.append(f"include_participants={str(cfg.include_participants).lower()}")
    lines.append(f"transductive_masters={str(cfg.transductive_masters).lower()}")
    lines.append(f"min_df={cfg.min_df}")
    lines.append(f"sim_threshold={cfg.sim_threshold!r}")
    lines.append("[nodes]")
    for node in graph.node_ids():
        lines.append(f"{node.kind.value}\t{_escape(node.key)}")
    lines.append("[edges]")
    for e in graph.edges:
        label = "" if e.label is None else str(e.label)
        lines.append(
            f"{e.src.kind.value}\t{_escape(e.src.key)}\t{e.rel.value}\t"
            f"{e.dst.kind.value}\t{_escape(e.dst.key)}\t{label}"
        )
    lines.append("[end]")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def load_graph(path) -> HeteroGraph:
    with open(path, encoding="utf-8", newline="\n") as fh:
        lines = fh.read().split("\n")
    if not lines or not lines[0].startswith("discog-graph"):
        raise CorruptFile(f"{path} is not a graph file")
    if lines[0] != GRAPH_FORMAT_VERSION:
        raise VersionMismatch(f"unsupported graph version {lines[0]!r}")
    if lines[-1] == "":
        lines.pop()
    if not lines or lines[-1] != "[end]":
        raise CorruptFile(f"{path} is truncated (missing [end] marker)")

    section = None
    config_kv: dict[str, str] = {}
    nodes: list[NodeId] = []
    edges: list[Edge] = []
    for raw in lines[1:-1]:
        if raw in ("[config]", "[nodes]", "[edges]"):
            section = raw
            continue
        try:
            if section == "[config]":
                key, value = raw.split("=", 1)
                config_kv[key] = value
            elif section == "[nodes]":
                kind, key = raw.split("\t")
                nodes.append(NodeId(NodeKind(kind), _unescape(key)))
            elif section == "[edges]":
                src_kind, src_key, rel, dst_kind, dst_key, label = raw.split("\t")
                edges.append(
                    Edge(
                        NodeId(NodeKind(src_kind), _unescape(src_key)),
                        Relation(rel),
                        NodeId(NodeKind(dst_kind), _unescape(dst_key)),
                        None if label == "" else int(label),
                    )
                )
            else:
                raise ValueError(f"content before any section: {raw!r}")
        except (ValueError, KeyError) as exc:
            raise CorruptFile(f"{path}: bad line {raw!r} ({exc})") from None
    try:
        config = GraphConfig(
            include_keywords=config_kv.get("include_keywords", "true") == "true",
            include_participants=config_kv.get("include_participants", "true") == "true",
            transductive_masters=config_kv.get("transductive_masters", "false") == "true",
            min_df=int(config_kv.get("min_df", "5")),
            sim_threshold=float(config_kv.get("sim_threshold", "0.75")),
        )
        return HeteroGraph(nodes, edges, config)
    except ValueError as exc:
        raise CorruptFile(f"{path}: {exc}") from None


# -- integer-indexed view for the models --------------------------------------


class GraphIndex:
    """Contiguous integer ids plus array views used by the trainers.

    Node order is the canonical graph order. ``triples`` holds every
    observed edge except label-0 relevance edges (those are negative
    evidence, not facts). Message-passing adjacency excludes relevance
    edges entirely: they are the supervision targets.
    """

    def __init__(self, graph: HeteroGraph):
        self.graph = graph
        self.nodes: list[NodeId] = graph.node_ids()
        self.id_of: dict[NodeId, int] = {n: i for i, n in enumerate(self.nodes)}
        self.kind_ids: dict[NodeKind, np.ndarray] = {}
        for kind in NodeKind:
            ids = [self.id_of[NodeId(kind, key)] for key in graph.nodes_by_kind[kind]]
            self.kind_ids[kind] = np.asarray(ids, dtype=np.int64)
        self.relations: list[Relation] = list(Relation)
        rel_index = {rel: i for i, rel in enumerate(self.relations)}

        triple_rows = []
        for e in graph.edges:
            if e.rel is Relation.RELEVANT_TO and e.label != 1:
                continue
            triple_rows.append((self.id_of[e.src], rel_index[e.rel], self.id_of[e.dst]))
        self.triples = (
            np.asarray(triple_rows, dtype=np.int64)
            if triple_rows
            else np.empty((0, 3), dtype=np.int64)
        )

        n = len(self.nodes)
        merged: list[list[int]] = [[] for _ in range(n)]
        per_rel: dict[Relation, list[list[int]]] = {
            rel: [[] for _ in range(n)] for rel in Relation if rel is not Relation.RELEVANT_TO
        }
        for e in graph.edges:
            if e.rel is Relation.RELEVANT_TO:
                continue
            s, d = self.id_of[e.src], self.id_of[e.dst]
            merged[s].append(d)
            merged[d].append(s)
            per_rel[e.rel][s].append(d)
            per_rel[e.rel][d].append(s)
        self.neighbor_lists = [np.asarray(sorted(lst), dtype=np.int64) for lst in merged]
        self.rel_neighbor_lists = {
            rel: [np.asarray(sorted(lst), dtype=np.int64) for lst in lists]
            for rel, lists in per_rel.items()
        }

    def __len__(self) -> int:
        return len(self.nodes)

    def require(self, node: NodeId) -> int:
        idx = self.id_of.get(node)
        if idx is None:
            raise UnknownNode(f"{node} is not in the graph")
        return idx

    def labeled_pairs(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(doc_ids, topic_ids, labels) arrays of the relevance edges."""
        docs, topics_, labels = [], [], []
        for (src, dst), label in labeled_edges(self.graph):
            docs.append(self.id_of[src])
            topics_.append(self.id_of[dst])
            labels.append(label)
        return (
            np.asarray(docs, dtype=np.int64),
            np.asarray(topics_, dtype=np.int64),
            np.asarray(labels, dtype=np.float64),
        )
