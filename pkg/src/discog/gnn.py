"""Inductive message-passing models with an edge-classification head.

Three encoders over the typed graph (relevance edges are excluded from
message passing; they are the supervision targets):

  graphsage  h_v = l2norm(relu(W [h_v ; mean of sampled neighbours]))
  gat        per head: h_v = relu(sum_u alpha_vu W h_u) with
             alpha = softmax_u(leakyrelu(a . [W h_v ; W h_u])); heads are
             concatenated in hidden layers and averaged in the last one
  rgcn       h_v = relu(W0 h_v + sum_r mean_{u in N_r(v)} W_r h_u)

Heads: graphsage/gat use sigmoid(MLP([z_d ; z_t ; z_d*z_t])); rgcn uses
a translation decoder sigmoid(a * (-||z_d + r - z_t||_1) + b).

All gradients are hand-written; ``gradcheck`` compares them against
central finite differences on a small random instance. Neighbourhood
samples are drawn per (seed, round, layer, node), so results do not
depend on batch composition or edge order.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .corpus import Corpus, Topic
from .embedding import EmbeddingProvider
from .errors import ConfigError, NonFiniteLoss, ShapeMismatch, SingleClassTrainingSet
from .fdcheck import finite_difference_grads, max_relative_error
from .graph import GraphIndex, HeteroGraph, NodeId, NodeKind, Relation
from .optim import Adam
from .serialize import load_arrays, save_arrays

GRAPHSAGE = "graphsage"
GAT = "gat"
RGCN = "rgcn"

EPOCH_RANGES = {GRAPHSAGE: (50, 150), GAT: (1000, 2000), RGCN: (1000, 2000)}
HIDDEN_RANGE = (32, 256)
BATCH_RANGE = (128, 1024)
LEARNING_RATE_RANGE = (1e-4, 1e-3)

LEAKY_SLOPE = 0.2
_NORM_EPS = 1e-12

# relations that carry messages (relevance edges are the labels)
_MESSAGE_RELATIONS = [rel for rel in Relation if rel is not Relation.RELEVANT_TO]


@dataclass(frozen=True)
class GnnConfig:
    arch: str = GRAPHSAGE
    layers: int = 2
    hidden_dim: int = 64
    fanout: tuple[int, ...] = (15, 10)
    epochs: int | None = None
    learning_rate: float = 5e-4
    batch_size: int = 256
    heads: int = 4
    weight_decay: float = 0.0
    feature_dropout: float = 0.0
    rng_seed: int = 0

    def __post_init__(self):
        arch = self.arch.lower()
        if arch not in (GRAPHSAGE, GAT, RGCN):
            raise ConfigError(f"unknown GNN architecture {self.arch!r}")
        object.__setattr__(self, "arch", arch)
        if self.layers < 1:
            raise ConfigError(f"layers must be >= 1, got {self.layers}")
        object.__setattr__(self, "fanout", tuple(self.fanout))
        if len(self.fanout) != self.layers:
            raise ConfigError(f"fanout needs one entry per layer, got {self.fanout} for {self.layers} layers")
        if self.epochs is None:
            object.__setattr__(self, "epochs", EPOCH_RANGES[arch][0])
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        if arch == GAT and self.hidden_dim % self.heads != 0:
            raise ConfigError(f"hidden_dim {self.hidden_dim} must divide evenly over {self.heads} heads")
        lo, hi = EPOCH_RANGES[arch]
        if self.epochs and not lo <= self.epochs <= hi:
            warnings.warn(f"epochs {self.epochs} outside the default {arch} range {lo}-{hi}", stacklevel=3)
        if not HIDDEN_RANGE[0] <= self.hidden_dim <= HIDDEN_RANGE[1]:
            warnings.warn(f"hidden_dim {self.hidden_dim} outside the default range {HIDDEN_RANGE}", stacklevel=3)
        if not BATCH_RANGE[0] <= self.batch_size <= BATCH_RANGE[1]:
            warnings.warn(f"batch_size {self.batch_size} outside the default range {BATCH_RANGE}", stacklevel=3)
        if not LEARNING_RATE_RANGE[0] <= self.learning_rate <= LEARNING_RATE_RANGE[1]:
            warnings.warn(
                f"learning_rate {self.learning_rate} outside the default range {LEARNING_RATE_RANGE}",
                stacklevel=3,
            )
        if not 0.0 <= self.feature_dropout < 1.0:
            raise ConfigError(f"feature_dropout must be in [0, 1), got {self.feature_dropout}")


@dataclass
class FeatureMatrix:
    """Input features row-aligned with the canonical node order of a graph."""

    index: GraphIndex
    matrix: np.ndarray

    def __getitem__(self, node: NodeId) -> np.ndarray:
        return self.matrix[self.index.require(node)]

    @property
    def dimension(self) -> int:
        return self.matrix.shape[1]


def init_node_features(
    graph: HeteroGraph | GraphIndex,
    provider: EmbeddingProvider,
    corpus: Corpus,
    topics: list[Topic],
) -> FeatureMatrix:
    """Provider vectors per node.

    Documents embed subject+body, topics their statement, keywords the
    phrase itself. Participants average the vectors of their incident
    documents (zero, with a warning, when isolated). Master nodes get
    zero vectors; they exist for transductive models only.
    """
    index = graph if isinstance(graph, GraphIndex) else GraphIndex(graph)
    statements = {t.topic_id: t.statement for t in topics}
    matrix = np.zeros((len(index), provider.dimension), dtype=np.float64)
    isolated_participants = 0
    for row, node in enumerate(index.nodes):
        if node.kind is NodeKind.DOCUMENT:
            matrix[row] = provider.embed(corpus.documents[node.key].text)
        elif node.kind is NodeKind.TOPIC:
            matrix[row] = provider.embed(statements[node.key])
        elif node.kind is NodeKind.KEYWORD:
            matrix[row] = provider.embed(node.key)
    for row, node in enumerate(index.nodes):
        if node.kind is not NodeKind.PARTICIPANT:
            continue
        adjacency = index.graph.adjacency(node)
        docs = {
            index.id_of[n]
            for rel in (Relation.SENT_BY, Relation.RECEIVED_BY)
            for n in adjacency.get(rel, ())
        }
        if docs:
            matrix[row] = matrix[sorted(docs)].mean(axis=0)
        else:
            isolated_participants += 1
    if isolated_participants:
        warnings.warn(f"{isolated_participants} participant(s) have no incident documents", stacklevel=2)
    return FeatureMatrix(index=index, matrix=matrix)


# -- model ---------------------------------------------------------------------


@dataclass
class GnnModel:
    config: GnnConfig
    feature_dim: int
    params: dict[str, np.ndarray]
    loss_trace: list[float] = field(default_factory=list)

    @property
    def embedding_dim(self) -> int:
        return self.config.hidden_dim


def _xavier(rng, fan_out, fan_in):
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_out, fan_in))


def init_gnn_model(config: GnnConfig, feature_dim: int) -> GnnModel:
    rng = np.random.default_rng(config.rng_seed)
    params: dict[str, np.ndarray] = {}
    d_in = feature_dim
    for layer in range(config.layers):
        d_out = config.hidden_dim
        if config.arch == GRAPHSAGE:
            params[f"layer{layer}/W"] = _xavier(rng, d_out, 2 * d_in)
        elif config.arch == GAT:
            last = layer == config.layers - 1
            d_head = d_out if last else d_out // config.heads
            for head in range(config.heads):
                params[f"layer{layer}/head{head}/W"] = _xavier(rng, d_head, d_in)
                params[f"layer{layer}/head{head}/a"] = _xavier(rng, 1, 2 * d_head)[0]
        else:
            params[f"layer{layer}/W0"] = _xavier(rng, d_out, d_in)
            for rel in _MESSAGE_RELATIONS:
                params[f"layer{layer}/rel/{rel.value}"] = _xavier(rng, d_out, d_in)
        d_in = d_out
    d_emb = config.hidden_dim
    if config.arch == RGCN:
        params["head/r"] = _xavier(rng, 1, d_emb)[0]
        params["head/a"] = np.ones(1)
        params["head/b"] = np.zeros(1)
    else:
        params["head/W1"] = _xavier(rng, d_emb, 3 * d_emb)
        params["head/b1"] = np.zeros(d_emb)
        params["head/w2"] = _xavier(rng, 1, d_emb)[0]
        params["head/b2"] = np.zeros(1)
    return GnnModel(config=config, feature_dim=feature_dim, params=params)


# -- neighbourhood blocks ------------------------------------------------------


@dataclass
class _Block:
    dst_nodes: np.ndarray  # graph ids, sorted
    src_nodes: np.ndarray  # graph ids, sorted, superset of dst
    self_pos: np.ndarray  # row of each dst node within src_nodes
    edge_seg: np.ndarray | None = None  # dst row per sampled edge
    edge_src: np.ndarray | None = None  # src row per sampled edge
    rel_edges: dict | None = None  # Relation -> (edge_seg, edge_src)

    @property
    def n_dst(self) -> int:
        return len(self.dst_nodes)


def _sample_list(nb: np.ndarray, fanout, seed_ints):
    if fanout is None or len(nb) <= fanout:
        return nb
    entropy = [int(x) % (1 << 63) for x in seed_ints]  # SeedSequence wants non-negative ints
    rng = np.random.default_rng(np.random.SeedSequence(entropy))
    picks = rng.choice(len(nb), size=fanout, replace=False)
    return nb[np.sort(picks)]


def _build_blocks(index: GraphIndex, target_ids, config: GnnConfig, sample_key=None):
    """Layer blocks for a batch, outermost first.

    sample_key is (seed, round) for fanout-limited sampling or None for
    full neighbourhoods. Draws are keyed per node, so the result is
    independent of batch composition.
    """
    per_relation = config.arch == RGCN
    dst = np.unique(np.asarray(target_ids, dtype=np.int64))
    blocks: list[_Block] = []
    for layer in reversed(range(config.layers)):
        fanout = None if sample_key is None else config.fanout[layer]
        gathered: list[np.ndarray] = [dst]
        if per_relation:
            rel_raw: dict[Relation, tuple[list, list]] = {rel: ([], []) for rel in _MESSAGE_RELATIONS}
            for i, node in enumerate(dst):
                for r_i, rel in enumerate(_MESSAGE_RELATIONS):
                    nb = index.rel_neighbor_lists[rel][node]
                    if not len(nb):
                        continue
                    key = None if sample_key is None else [*sample_key, layer, r_i, int(node)]
                    picked = _sample_list(nb, fanout, key)
                    rel_raw[rel][0].extend([i] * len(picked))
                    rel_raw[rel][1].append(picked)
                    gathered.append(picked)
        else:
            segs: list[int] = []
            srcs: list[np.ndarray] = []
            for i, node in enumerate(dst):
                nb = index.neighbor_lists[node]
                if not len(nb):
                    continue
                key = None if sample_key is None else [*sample_key, layer, int(node)]
                picked = _sample_list(nb, fanout, key)
                segs.extend([i] * len(picked))
                srcs.append(picked)
                gathered.append(picked)
        src_nodes = np.unique(np.concatenate(gathered))
        self_pos = np.searchsorted(src_nodes, dst)
        if per_relation:
            rel_edges = {}
            for rel in _MESSAGE_RELATIONS:
                seg_list, src_list = rel_raw[rel]
                if src_list:
                    rel_edges[rel] = (
                        np.asarray(seg_list, dtype=np.int64),
                        np.searchsorted(src_nodes, np.concatenate(src_list)),
                    )
                else:
                    rel_edges[rel] = (np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64))
            block = _Block(dst, src_nodes, self_pos, rel_edges=rel_edges)
        else:
            edge_seg = np.asarray(segs, dtype=np.int64)
            edge_src = (
                np.searchsorted(src_nodes, np.concatenate(srcs)) if srcs else np.empty(0, dtype=np.int64)
            )
            block = _Block(dst, src_nodes, self_pos, edge_seg=edge_seg, edge_src=edge_src)
        blocks.append(block)
        dst = src_nodes
    blocks.reverse()
    return blocks


# -- layer forward/backward ----------------------------------------------------


def _relu(x):
    return np.maximum(x, 0.0)


def _sage_layer_forward(W, block: _Block, h_src):
    deg = np.bincount(block.edge_seg, minlength=block.n_dst).astype(np.float64)
    total = kernels.segment_sum_rows(block.edge_seg, h_src[block.edge_src], block.n_dst)
    mean = total / np.maximum(deg, 1.0)[:, None]
    cat = np.concatenate([h_src[block.self_pos], mean], axis=1)
    pre = cat @ W.T
    act = _relu(pre)
    norms = np.linalg.norm(act, axis=1, keepdims=True)
    out = np.where(norms > _NORM_EPS, act / np.where(norms > _NORM_EPS, norms, 1.0), act)
    cache = (deg, cat, pre, norms, out)
    return out, cache


def _sage_layer_backward(W, block: _Block, h_src, grad_out, cache, grads, name):
    deg, cat, pre, norms, out = cache
    safe = np.where(norms > _NORM_EPS, norms, 1.0)
    inner = (grad_out * out).sum(axis=1, keepdims=True)
    grad_act = np.where(norms > _NORM_EPS, (grad_out - out * inner) / safe, grad_out)
    grad_pre = grad_act * (pre > 0.0)
    grads[name] += grad_pre.T @ cat
    grad_cat = grad_pre @ W
    d_in = h_src.shape[1]
    grad_h = np.zeros_like(h_src)
    kernels.scatter_add_rows(grad_h, block.self_pos, grad_cat[:, :d_in])
    per_edge = (grad_cat[:, d_in:] / np.maximum(deg, 1.0)[:, None])[block.edge_seg]
    kernels.scatter_add_rows(grad_h, block.edge_src, per_edge)
    return grad_h


def _gat_head_forward(W, a, block: _Block, h_src):
    d_head = W.shape[0]
    proj = h_src @ W.T
    att_dst = proj[block.self_pos] @ a[:d_head]
    att_src = proj @ a[d_head:]
    z = att_dst[block.edge_seg] + att_src[block.edge_src]
    e = np.where(z > 0.0, z, LEAKY_SLOPE * z)
    seg_max = kernels.segment_max_scalars(block.edge_seg, e, block.n_dst, fill=-np.inf)
    shifted = np.exp(e - np.where(np.isfinite(seg_max), seg_max, 0.0)[block.edge_seg])
    denom = kernels.segment_sum_scalars(block.edge_seg, shifted, block.n_dst)
    alpha = shifted / np.where(denom > 0.0, denom, 1.0)[block.edge_seg]
    agg = kernels.segment_sum_rows(block.edge_seg, alpha[:, None] * proj[block.edge_src], block.n_dst)
    out = _relu(agg)
    cache = (proj, z, alpha, agg, out)
    return out, cache


def _gat_head_backward(W, a, block: _Block, h_src, grad_out, cache, grads, w_name, a_name):
    proj, z, alpha, agg, out = cache
    d_head = W.shape[0]
    grad_agg = grad_out * (agg > 0.0)
    grad_agg_e = grad_agg[block.edge_seg]
    proj_e = proj[block.edge_src]
    grad_alpha = (grad_agg_e * proj_e).sum(axis=1)
    grad_proj = np.zeros_like(proj)
    kernels.scatter_add_rows(grad_proj, block.edge_src, alpha[:, None] * grad_agg_e)
    # softmax backward within each destination segment
    weighted = kernels.segment_sum_scalars(block.edge_seg, alpha * grad_alpha, block.n_dst)
    grad_e = alpha * (grad_alpha - weighted[block.edge_seg])
    grad_z = grad_e * np.where(z > 0.0, 1.0, LEAKY_SLOPE)
    grad_att_dst = kernels.segment_sum_scalars(block.edge_seg, grad_z, block.n_dst)
    grad_att_src_col = np.zeros((proj.shape[0], 1))
    kernels.scatter_add_rows(grad_att_src_col, block.edge_src, grad_z[:, None])
    grad_att_src = grad_att_src_col[:, 0]
    grads[a_name][:d_head] += proj[block.self_pos].T @ grad_att_dst
    grads[a_name][d_head:] += proj.T @ grad_att_src
    kernels.scatter_add_rows(grad_proj, block.self_pos, np.outer(grad_att_dst, a[:d_head]))
    grad_proj += np.outer(grad_att_src, a[d_head:])
    grads[w_name] += grad_proj.T @ h_src
    return grad_proj @ W


def _rgcn_layer_forward(params, layer, block: _Block, h_src):
    pre = h_src[block.self_pos] @ params[f"layer{layer}/W0"].T
    means = {}
    for rel, (seg, src) in block.rel_edges.items():
        if not len(seg):
            continue
        deg = np.bincount(seg, minlength=block.n_dst).astype(np.float64)
        mean = kernels.segment_sum_rows(seg, h_src[src], block.n_dst) / np.maximum(deg, 1.0)[:, None]
        means[rel] = (mean, deg)
        pre += mean @ params[f"layer{layer}/rel/{rel.value}"].T
    out = _relu(pre)
    return out, (pre, means)


def _rgcn_layer_backward(params, layer, block: _Block, h_src, grad_out, cache, grads):
    pre, means = cache
    grad_pre = grad_out * (pre > 0.0)
    grads[f"layer{layer}/W0"] += grad_pre.T @ h_src[block.self_pos]
    grad_h = np.zeros_like(h_src)
    kernels.scatter_add_rows(grad_h, block.self_pos, grad_pre @ params[f"layer{layer}/W0"])
    for rel, (mean, deg) in means.items():
        seg, src = block.rel_edges[rel]
        grads[f"layer{layer}/rel/{rel.value}"] += grad_pre.T @ mean
        grad_mean = grad_pre @ params[f"layer{layer}/rel/{rel.value}"]
        kernels.scatter_add_rows(grad_h, src, (grad_mean / np.maximum(deg, 1.0)[:, None])[seg])
    return grad_h


def _forward_blocks(model: GnnModel, blocks, features: np.ndarray):
    """Run the encoder over prepared blocks; returns output rows + caches."""
    config = model.config
    h = features[blocks[0].src_nodes]
    if h.shape[1] != model.feature_dim:
        raise ShapeMismatch(f"features have dim {h.shape[1]}, model expects {model.feature_dim}")
    caches = []
    for layer, block in enumerate(blocks):
        if config.arch == GRAPHSAGE:
            out, cache = _sage_layer_forward(model.params[f"layer{layer}/W"], block, h)
        elif config.arch == GAT:
            head_outs, head_caches = [], []
            for head in range(config.heads):
                o, c = _gat_head_forward(
                    model.params[f"layer{layer}/head{head}/W"],
                    model.params[f"layer{layer}/head{head}/a"],
                    block, h,
                )
                head_outs.append(o)
                head_caches.append(c)
            last = layer == config.layers - 1
            out = np.mean(head_outs, axis=0) if last else np.concatenate(head_outs, axis=1)
            cache = head_caches
        else:
            out, cache = _rgcn_layer_forward(model.params, layer, block, h)
        caches.append((h, cache))
        h = out
    return h, caches


def _backward_blocks(model: GnnModel, blocks, caches, grad_out, grads):
    config = model.config
    grad = grad_out
    for layer in reversed(range(len(blocks))):
        block = blocks[layer]
        h_src, cache = caches[layer]
        if config.arch == GRAPHSAGE:
            grad = _sage_layer_backward(
                model.params[f"layer{layer}/W"], block, h_src, grad, cache, grads, f"layer{layer}/W"
            )
        elif config.arch == GAT:
            last = layer == config.layers - 1
            grad_in = np.zeros_like(h_src)
            d_head = model.params[f"layer{layer}/head0/W"].shape[0]
            for head in range(config.heads):
                if last:
                    g = grad / config.heads
                else:
                    g = grad[:, head * d_head : (head + 1) * d_head]
                grad_in += _gat_head_backward(
                    model.params[f"layer{layer}/head{head}/W"],
                    model.params[f"layer{layer}/head{head}/a"],
                    block, h_src, g, cache[head], grads,
                    f"layer{layer}/head{head}/W", f"layer{layer}/head{head}/a",
                )
            grad = grad_in
        else:
            grad = _rgcn_layer_backward(model.params, layer, block, h_src, grad, cache, grads)
    return grad


def forward(
    model: GnnModel,
    graph: HeteroGraph | GraphIndex,
    features: FeatureMatrix,
    nodes: list[NodeId],
    sample_key=None,
) -> dict[NodeId, np.ndarray]:
    """Embeddings for a batch of nodes.

    sample_key=(seed, round) enables fanout-limited neighbour sampling;
    None uses full neighbourhoods (deterministic inference).
    """
    index = features.index if isinstance(graph, HeteroGraph) else graph
    ids = np.asarray([index.require(n) for n in nodes], dtype=np.int64)
    blocks = _build_blocks(index, ids, model.config, sample_key=sample_key)
    out, _ = _forward_blocks(model, blocks, features.matrix)
    rows = np.searchsorted(blocks[-1].dst_nodes, ids)
    return {node: out[row] for node, row in zip(nodes, rows)}


# -- edge head -----------------------------------------------------------------


def _sigmoid(x):
    return np.where(x >= 0.0, 1.0 / (1.0 + np.exp(-x)), np.exp(x) / (1.0 + np.exp(x)))


def _head_logits(model: GnnModel, z_doc, z_topic):
    p = model.params
    if model.config.arch == RGCN:
        u = z_doc + p["head/r"][None, :] - z_topic
        dist = np.abs(u).sum(axis=1)
        logits = p["head/a"][0] * (-dist) + p["head/b"][0]
        cache = (u, dist)
    else:
        x = np.concatenate([z_doc, z_topic, z_doc * z_topic], axis=1)
        pre = x @ p["head/W1"].T + p["head/b1"]
        act = _relu(pre)
        logits = act @ p["head/w2"] + p["head/b2"][0]
        cache = (x, pre, act)
    return logits, cache


def _head_backward(model: GnnModel, z_doc, z_topic, cache, grad_logits, grads):
    p = model.params
    if model.config.arch == RGCN:
        u, dist = cache
        grads["head/a"][0] += float(grad_logits @ (-dist))
        grads["head/b"][0] += float(grad_logits.sum())
        grad_u = -p["head/a"][0] * np.sign(u) * grad_logits[:, None]
        grads["head/r"] += grad_u.sum(axis=0)
        return grad_u, -grad_u
    x, pre, act = cache
    grads["head/w2"] += act.T @ grad_logits
    grads["head/b2"][0] += float(grad_logits.sum())
    grad_act = np.outer(grad_logits, p["head/w2"])
    grad_pre = grad_act * (pre > 0.0)
    grads["head/W1"] += grad_pre.T @ x
    grads["head/b1"] += grad_pre.sum(axis=0)
    grad_x = grad_pre @ p["head/W1"]
    d = z_doc.shape[1]
    grad_doc = grad_x[:, :d] + grad_x[:, 2 * d :] * z_topic
    grad_topic = grad_x[:, d : 2 * d] + grad_x[:, 2 * d :] * z_doc
    return grad_doc, grad_topic


def edge_probability(model: GnnModel, z_doc, z_topic) -> float:
    """Probability that the document-topic relevance edge exists."""
    logits, _ = _head_logits(model, np.atleast_2d(z_doc), np.atleast_2d(z_topic))
    return float(_sigmoid(logits)[0])


def _bce_from_logits(logits, labels):
    """Stable binary cross-entropy; returns (per-edge mean, d loss / d logit)."""
    probs = _sigmoid(logits)
    loss = np.maximum(logits, 0.0) - logits * labels + np.log1p(np.exp(-np.abs(logits)))
    return float(loss.mean()), (probs - labels) / len(logits)


# -- training ------------------------------------------------------------------


def augment_negatives(
    labeled: list[tuple[tuple[NodeId, NodeId], int]],
    graph: HeteroGraph | GraphIndex,
    rng: int | np.random.Generator = 0,
) -> list[tuple[tuple[NodeId, NodeId], int]]:
    """Top up scarce negatives with random unlabeled pairs, per topic, to 1:1."""
    index = graph if isinstance(graph, GraphIndex) else GraphIndex(graph)
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    by_topic: dict[NodeId, dict[int, list[NodeId]]] = {}
    for (doc, topic), label in labeled:
        by_topic.setdefault(topic, {0: [], 1: []})[label].append(doc)
    out = list(labeled)
    doc_nodes = [index.nodes[i] for i in index.kind_ids[NodeKind.DOCUMENT]]
    for topic in sorted(by_topic, key=NodeId.sort_key):
        pos, neg = by_topic[topic][1], by_topic[topic][0]
        missing = len(pos) - len(neg)
        if missing <= 0:
            continue
        labeled_docs = set(pos) | set(neg)
        candidates = [d for d in doc_nodes if d not in labeled_docs]
        take = min(missing, len(candidates))
        picks = rng.choice(len(candidates), size=take, replace=False)
        for i in sorted(picks):
            out.append(((candidates[int(i)], topic), 0))
    return out


def train_gnn(
    graph: HeteroGraph | GraphIndex,
    features: FeatureMatrix,
    labeled: list[tuple[tuple[NodeId, NodeId], int]],
    config: GnnConfig,
) -> GnnModel:
    """Minibatch Adam on edge BCE; deterministic for a fixed rng_seed."""
    index = features.index
    labels_present = {label for _, label in labeled}
    if labels_present != {0, 1}:
        labeled = augment_negatives(labeled, index, rng=np.random.default_rng(config.rng_seed + 7))
        labels_present = {label for _, label in labeled}
        if labels_present != {0, 1}:
            raise SingleClassTrainingSet(
                f"labeled edges contain only class(es) {sorted(labels_present)} even after augmentation"
            )
    model = init_gnn_model(config, features.dimension)
    if config.epochs == 0:
        return model
    doc_ids = np.asarray([index.require(doc) for (doc, _), _ in labeled], dtype=np.int64)
    topic_ids = np.asarray([index.require(topic) for (_, topic), _ in labeled], dtype=np.int64)
    labels = np.asarray([label for _, label in labeled], dtype=np.float64)
    optimizer = Adam(model.params, config.learning_rate, weight_decay=config.weight_decay)
    rng = np.random.default_rng(config.rng_seed + 1)

    for epoch in range(config.epochs):
        order = rng.permutation(len(labels))
        epoch_loss = 0.0
        for start in range(0, len(labels), config.batch_size):
            pick = order[start : start + config.batch_size]
            loss, grads = _edge_loss_and_grads(
                model, index, features.matrix,
                doc_ids[pick], topic_ids[pick], labels[pick],
                sample_key=(config.rng_seed, epoch),
            )
            optimizer.step(grads)
            epoch_loss += loss * len(pick)
        epoch_loss /= len(labels)
        if not np.isfinite(epoch_loss):
            raise NonFiniteLoss(epoch, epoch_loss)
        model.loss_trace.append(epoch_loss)
    return model


def _edge_loss_and_grads(model, index, feature_matrix, doc_ids, topic_ids, labels, sample_key):
    """Forward + hand-written backward for one batch of labeled edges.

    During training (sample_key set) input features are dropped out with
    the configured rate; masks are keyed by (seed, epoch), so runs are
    reproducible. Parameter gradients stay exact for the masked forward.
    """
    p = model.config.feature_dropout
    if p > 0.0 and sample_key is not None:
        entropy = [int(x) % (1 << 63) for x in sample_key]
        mask_rng = np.random.default_rng(np.random.SeedSequence([7, *entropy]))
        mask = (mask_rng.random(feature_matrix.shape) >= p) / (1.0 - p)
        feature_matrix = feature_matrix * mask
    batch_nodes = np.unique(np.concatenate([doc_ids, topic_ids]))
    blocks = _build_blocks(index, batch_nodes, model.config, sample_key=sample_key)
    out, caches = _forward_blocks(model, blocks, feature_matrix)
    doc_rows = np.searchsorted(blocks[-1].dst_nodes, doc_ids)
    topic_rows = np.searchsorted(blocks[-1].dst_nodes, topic_ids)
    z_doc = out[doc_rows]
    z_topic = out[topic_rows]
    logits, head_cache = _head_logits(model, z_doc, z_topic)
    loss, grad_logits = _bce_from_logits(logits, labels)
    grads = {name: np.zeros_like(arr) for name, arr in model.params.items()}
    grad_doc, grad_topic = _head_backward(model, z_doc, z_topic, head_cache, grad_logits, grads)
    grad_top = np.zeros_like(out)
    kernels.scatter_add_rows(grad_top, doc_rows, grad_doc)
    kernels.scatter_add_rows(grad_top, topic_rows, grad_topic)
    _backward_blocks(model, blocks, caches, grad_top, grads)
    return loss, grads


def predict_gnn_probs(
    model: GnnModel,
    graph: HeteroGraph | GraphIndex,
    features: FeatureMatrix,
    pairs: list[tuple[NodeId, NodeId]],
) -> list[float]:
    """Edge probabilities over full-neighbourhood embeddings, order preserved.

    Works for nodes unseen during training as long as they are in the
    graph with features; prediction never mutates model parameters.
    """
    if not pairs:
        return []
    index = features.index
    unique_nodes = sorted({n for pair in pairs for n in pair}, key=NodeId.sort_key)
    embeddings = forward(model, index, features, unique_nodes, sample_key=None)
    z_doc = np.stack([embeddings[doc] for doc, _ in pairs])
    z_topic = np.stack([embeddings[topic] for _, topic in pairs])
    logits, _ = _head_logits(model, z_doc, z_topic)
    return [float(p) for p in _sigmoid(logits)]


# -- persistence ---------------------------------------------------------------


def save_gnn_model(model: GnnModel, path) -> None:
    meta = {
        "format": "gnn v1",
        "config": {
            "arch": model.config.arch,
            "layers": model.config.layers,
            "hidden_dim": model.config.hidden_dim,
            "fanout": list(model.config.fanout),
            "epochs": model.config.epochs,
            "learning_rate": model.config.learning_rate,
            "batch_size": model.config.batch_size,
            "heads": model.config.heads,
            "weight_decay": model.config.weight_decay,
            "feature_dropout": model.config.feature_dropout,
            "rng_seed": model.config.rng_seed,
        },
        "feature_dim": model.feature_dim,
        "loss_trace": model.loss_trace,
    }
    save_arrays(path, model.params, meta)


def load_gnn_model(path) -> GnnModel:
    arrays, meta = load_arrays(path)
    cfg = dict(meta["config"])
    cfg["fanout"] = tuple(cfg["fanout"])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")  # config ranges were vetted at training time
        config = GnnConfig(**cfg)
    return GnnModel(
        config=config,
        feature_dim=meta["feature_dim"],
        params=arrays,
        loss_trace=list(meta["loss_trace"]),
    )


# -- gradient checking ---------------------------------------------------------

_KINK_MARGIN = 1e-4


def _random_instance(arch: str, rng: np.random.Generator):
    """A tiny random labeled graph with random features."""
    from .corpus import EmailDocument, Judgment, JudgmentOrigin
    from .graph import GraphConfig, build_graph
    from .keywords import KeywordEntry, KeywordVocabulary

    num_docs, num_topics, num_kw = 6, 2, 3
    docs = {}
    words = [f"word{k}" for k in range(num_kw)]
    for i in range(num_docs):
        body = " ".join(str(w) for w in rng.choice(words, size=3))
        docs[f"d{i}"] = EmailDocument(
            doc_id=f"d{i}", subject=f"note {i}", body=body,
            sender=f"p{int(rng.integers(0, 3))}@x", recipients=(f"p{int(rng.integers(0, 3))}@x",),
        )
    corpus = Corpus(
        documents=docs,
        participants=tuple(sorted({d.sender for d in docs.values()} | {r for d in docs.values() for r in d.recipients})),
    )
    topics = [Topic(f"t{j}", f"about word{j}") for j in range(num_topics)]
    vocab = KeywordVocabulary(
        entries={w: KeywordEntry(document_frequency=2, embedding=np.zeros(2)) for w in words},
        doc_keywords={d: tuple(sorted(set(docs[d].body.split()))) for d in docs},
        topic_keywords={f"t{j}": (f"word{j}",) for j in range(num_topics)},
    )
    seeds = [
        Judgment(f"t{j}", f"d{i}", relevant=bool((i + j) % 2), origin=JudgmentOrigin.SEED)
        for j in range(num_topics)
        for i in range(num_docs)
    ]
    graph = build_graph(corpus, topics, seeds, vocab, [(words[0], words[1])], GraphConfig())
    index = GraphIndex(graph)
    feature_dim = 5
    matrix = rng.uniform(-1, 1, size=(len(index), feature_dim))
    return index, FeatureMatrix(index=index, matrix=matrix)


def gradcheck(model_kind: str, rng_seed: int = 0, step: float = 1e-5) -> float:
    """Max relative error of the analytic BCE gradient on a <=11-node graph.

    Instances whose pre-activations sit within a small margin of a ReLU
    or L1 kink are redrawn, since finite differences are invalid there.
    """
    arch = model_kind.lower()
    rng = np.random.default_rng(rng_seed)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")  # tiny dims are intentionally out of range
        config = GnnConfig(
            arch=arch, layers=2, hidden_dim=6, fanout=(100, 100),
            epochs=EPOCH_RANGES[arch][0], heads=2, rng_seed=rng_seed,
        )
    for _ in range(100):
        index, features = _random_instance(arch, rng)
        model = init_gnn_model(config, features.dimension)
        for name in model.params:
            model.params[name] = rng.uniform(-0.6, 0.6, size=model.params[name].shape)
        docs, topics_, labels = index.labeled_pairs()
        if not _clear_of_kinks(model, index, features, docs, topics_):
            continue

        def loss():
            value, _ = _edge_loss_and_grads(
                model, index, features.matrix, docs, topics_, labels, sample_key=None
            )
            return value

        _, analytic = _edge_loss_and_grads(
            model, index, features.matrix, docs, topics_, labels, sample_key=None
        )
        numeric = finite_difference_grads(loss, model.params, step=step)
        return max_relative_error(analytic, numeric)
    raise RuntimeError("could not draw a kink-free instance in 100 attempts")


def _clear_of_kinks(model, index, features, doc_ids, topic_ids) -> bool:
    batch_nodes = np.unique(np.concatenate([doc_ids, topic_ids]))
    blocks = _build_blocks(index, batch_nodes, model.config, sample_key=None)
    out, caches = _forward_blocks(model, blocks, features.matrix)
    for layer, (_, cache) in enumerate(caches):
        if model.config.arch == GRAPHSAGE:
            _, _, pre, norms, _ = cache
            if np.abs(pre).min() < _KINK_MARGIN or norms.min() < _KINK_MARGIN:
                return False
        elif model.config.arch == GAT:
            for proj, z, alpha, agg, _ in cache:
                if len(z) and np.abs(z).min() < _KINK_MARGIN:
                    return False
                if np.abs(agg).min() < _KINK_MARGIN:
                    return False
        else:
            pre, _ = cache
            if np.abs(pre).min() < _KINK_MARGIN:
                return False
    doc_rows = np.searchsorted(blocks[-1].dst_nodes, doc_ids)
    topic_rows = np.searchsorted(blocks[-1].dst_nodes, topic_ids)
    _, head_cache = _head_logits(model, out[doc_rows], out[topic_rows])
    if model.config.arch == RGCN:
        u, _ = head_cache
        return bool(np.abs(u).min() >= _KINK_MARGIN)
    _, pre, _ = head_cache
    return bool(np.abs(pre).min() >= _KINK_MARGIN)
