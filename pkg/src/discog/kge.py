"""Transductive link-prediction embeddings (TransE, ComplEx).

Training runs minibatch Adam on a softmax negative log-likelihood: each
observed triple is scored against ``eta`` type-consistent corruptions
(head replaced by a node of the head's kind, or tail by one of the
tail's kind, coin flip per corruption). Corruptions that collide with
an observed triple are resampled up to a retry cap, then kept with a
warning. Gradients are written by hand and checked against central
finite differences in the test suite.

Scores: TransE -> -||h + r - t|| (L1 or L2); ComplEx -> Re<h, r, conj(t)>.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import ConfigError, NoPositives, NonFiniteLoss, UnknownNode
from .fdcheck import finite_difference_grads, max_relative_error
from .graph import GraphIndex, HeteroGraph, NodeId, NodeKind, Relation
from .optim import Adam
from .serialize import load_arrays, save_arrays

TRANSE = "transe"
COMPLEX = "complex"

EPOCH_RANGE = (300, 600)
LEARNING_RATE_RANGE = (1e-4, 1e-3)
DEFAULT_BATCH_SIZE = 100_000
NEGATIVE_RETRY_CAP = 50


@dataclass(frozen=True)
class KgeConfig:
    model_kind: str = TRANSE
    dim: int = 100
    epochs: int = 300
    learning_rate: float = 5e-4
    batch_size: int = DEFAULT_BATCH_SIZE
    eta: int = 20
    norm: str = "L1"  # TransE only
    weight_decay: float = 0.0
    relevance_boost: int = 1  # oversampling factor for scarce relevance triples
    rng_seed: int = 0

    def __post_init__(self):
        kind = self.model_kind.lower()
        if kind not in (TRANSE, COMPLEX):
            raise ConfigError(f"unknown KGE model kind {self.model_kind!r}")
        object.__setattr__(self, "model_kind", kind)
        if self.dim <= 0:
            raise ConfigError(f"dim must be positive, got {self.dim}")
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        if self.eta < 1:
            raise ConfigError(f"eta must be >= 1, got {self.eta}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.norm not in ("L1", "L2"):
            raise ConfigError(f"norm must be L1 or L2, got {self.norm!r}")
        if self.relevance_boost < 1:
            raise ConfigError(f"relevance_boost must be >= 1, got {self.relevance_boost}")
        if self.epochs and not EPOCH_RANGE[0] <= self.epochs <= EPOCH_RANGE[1]:
            warnings.warn(f"epochs {self.epochs} outside the default range {EPOCH_RANGE}", stacklevel=3)
        if not LEARNING_RATE_RANGE[0] <= self.learning_rate <= LEARNING_RATE_RANGE[1]:
            warnings.warn(
                f"learning_rate {self.learning_rate} outside the default range {LEARNING_RATE_RANGE}",
                stacklevel=3,
            )


@dataclass
class KgeModel:
    config: KgeConfig
    nodes: tuple[NodeId, ...]
    params: dict[str, np.ndarray]
    loss_trace: list[float] = field(default_factory=list)

    def __post_init__(self):
        self.id_of = {node: i for i, node in enumerate(self.nodes)}
        self.rel_of = {rel: i for i, rel in enumerate(Relation)}

    def node_index(self, node: NodeId) -> int:
        idx = self.id_of.get(node)
        if idx is None:
            raise UnknownNode(f"{node} was not in the training graph (transductive model)")
        return idx


def _as_index(graph) -> GraphIndex:
    return graph if isinstance(graph, GraphIndex) else GraphIndex(graph)


def init_model(graph: HeteroGraph | GraphIndex, config: KgeConfig) -> KgeModel:
    """Uniform init in [-6/sqrt(dim), 6/sqrt(dim)]; TransE entities unit-L2."""
    index = _as_index(graph)
    rng = np.random.default_rng(config.rng_seed)
    bound = 6.0 / np.sqrt(config.dim)
    n, r = len(index.nodes), len(Relation)

    def table(rows):
        return rng.uniform(-bound, bound, size=(rows, config.dim))

    if config.model_kind == TRANSE:
        entity = table(n)
        entity /= np.linalg.norm(entity, axis=1, keepdims=True)
        params = {"entity": entity, "relation": table(r)}
    else:
        params = {
            "entity_re": table(n),
            "entity_im": table(n),
            "relation_re": table(r),
            "relation_im": table(r),
        }
    return KgeModel(config=config, nodes=tuple(index.nodes), params=params)


# -- scoring -------------------------------------------------------------------


def _score_with_cache(model_kind, params, h, r, t, norm):
    """Batch scores plus the gathered intermediates the backward pass reuses."""
    if model_kind == TRANSE:
        u = params["entity"][h] + params["relation"][r] - params["entity"][t]
        if norm == "L1":
            return -np.abs(u).sum(axis=1), (u,)
        norms = np.sqrt(np.square(u).sum(axis=1))
        return -norms, (u, norms)
    hr, hi = params["entity_re"][h], params["entity_im"][h]
    rr, ri = params["relation_re"][r], params["relation_im"][r]
    tr, ti = params["entity_re"][t], params["entity_im"][t]
    re_hr = hr * rr - hi * ri  # Re(h * r)
    im_hr = hr * ri + hi * rr  # Im(h * r)
    scores = (re_hr * tr + im_hr * ti).sum(axis=1)
    return scores, (hr, hi, rr, ri, tr, ti, re_hr, im_hr)


def batch_scores(model_kind: str, params, h, r, t, norm: str = "L1"):
    scores, _ = _score_with_cache(model_kind, params, h, r, t, norm)
    return scores


def score_triple(model: KgeModel, triple: tuple[NodeId, Relation, NodeId]) -> float:
    """Plausibility of one (head, relation, tail); higher is more plausible."""
    head, rel, tail = triple
    h = np.array([model.node_index(head)])
    r = np.array([model.rel_of[rel]])
    t = np.array([model.node_index(tail)])
    cfg = model.config
    return float(batch_scores(cfg.model_kind, model.params, h, r, t, cfg.norm)[0])


def _accumulate_grads(model_kind, params, grads, h, r, t, coeff, norm, cache=None):
    """grads[name] += coeff_i * d score_i / d name for every triple i."""
    if cache is None:
        _, cache = _score_with_cache(model_kind, params, h, r, t, norm)
    if model_kind == TRANSE:
        u = cache[0]
        if norm == "L1":
            g_u = -np.sign(u) * coeff[:, None]
        else:
            norms = cache[1][:, None]
            g_u = -(u / np.where(norms > 0.0, norms, 1.0)) * coeff[:, None]
        kernels.scatter_add_rows(grads["entity"], h, g_u)
        kernels.scatter_add_rows(grads["relation"], r, g_u)
        kernels.scatter_add_rows(grads["entity"], t, -g_u)
    else:
        hr, hi, rr, ri, tr, ti, re_hr, im_hr = cache
        c = coeff[:, None]
        ctr = c * tr
        cti = c * ti
        kernels.scatter_add_rows(grads["entity_re"], h, rr * ctr + ri * cti)
        kernels.scatter_add_rows(grads["entity_im"], h, rr * cti - ri * ctr)
        kernels.scatter_add_rows(grads["relation_re"], r, hr * ctr + hi * cti)
        kernels.scatter_add_rows(grads["relation_im"], r, hr * cti - hi * ctr)
        kernels.scatter_add_rows(grads["entity_re"], t, c * re_hr)
        kernels.scatter_add_rows(grads["entity_im"], t, c * im_hr)


def nll_loss(pos_score: float, neg_scores) -> float:
    """-log softmax of the positive against its negatives, max-shifted."""
    neg = np.asarray(neg_scores, dtype=np.float64).ravel()
    logits = np.concatenate([[float(pos_score)], neg])
    m = logits.max()
    return float(m + np.log(np.exp(logits - m).sum()) - pos_score)


def _softmax_rows(logits):
    m = logits.max(axis=1, keepdims=True)
    e = np.exp(logits - m)
    return e / e.sum(axis=1, keepdims=True)


def _batch_nll_and_coeffs(pos_scores, neg_scores):
    """Mean NLL over the batch plus d loss / d score coefficients."""
    batch = pos_scores.shape[0]
    logits = np.concatenate([pos_scores[:, None], neg_scores], axis=1)
    m = logits.max(axis=1)
    lse = m + np.log(np.exp(logits - m[:, None]).sum(axis=1))
    loss = float((lse - pos_scores).mean())
    weights = _softmax_rows(logits)
    pos_coeff = (weights[:, 0] - 1.0) / batch
    neg_coeff = weights[:, 1:] / batch
    return loss, pos_coeff, neg_coeff


# -- negative sampling ---------------------------------------------------------


def _triple_codes(h, r, t, num_nodes):
    return (h * len(Relation) + r) * num_nodes + t


class _Corrupter:
    """Type-consistent corruption with filtering against observed triples."""

    def __init__(self, index: GraphIndex):
        self.num_nodes = len(index)
        kind_codes = np.zeros(self.num_nodes, dtype=np.int64)
        self.pools = []
        for code, kind in enumerate(NodeKind):
            pool = index.kind_ids[kind]
            kind_codes[pool] = code
            self.pools.append(pool)
        self.kind_codes = kind_codes
        triples = index.triples
        self.observed = np.sort(_triple_codes(triples[:, 0], triples[:, 1], triples[:, 2], self.num_nodes))

    def _draw_like(self, nodes, rng):
        out = np.empty_like(nodes)
        kinds = self.kind_codes[nodes]
        for code, pool in enumerate(self.pools):
            mask = kinds == code
            count = int(mask.sum())
            if count:
                out[mask] = pool[rng.integers(0, len(pool), size=count)]
        return out

    def corrupt(self, triples, eta, rng):
        """eta corruptions per triple; returns (h, r, t) index arrays."""
        h = np.repeat(triples[:, 0], eta)
        r = np.repeat(triples[:, 1], eta)
        t = np.repeat(triples[:, 2], eta)
        corrupt_head = rng.integers(0, 2, size=h.shape[0]).astype(bool)
        h = h.copy()
        t = t.copy()
        h[corrupt_head] = self._draw_like(h[corrupt_head], rng)
        t[~corrupt_head] = self._draw_like(t[~corrupt_head], rng)
        pending = self._collisions(h, r, t)
        retries = 0
        stuck = 0
        while pending.any() and retries < NEGATIVE_RETRY_CAP:
            redo_head = corrupt_head & pending
            redo_tail = ~corrupt_head & pending
            h[redo_head] = self._draw_like(h[redo_head], rng)
            t[redo_tail] = self._draw_like(t[redo_tail], rng)
            previous = int(pending.sum())
            pending = self._collisions(h, r, t)
            retries += 1
            # triples whose whole corruption pool is observed can never
            # escape; stop early once resampling makes no progress
            stuck = stuck + 1 if int(pending.sum()) == previous else 0
            if stuck >= 2:
                break
        if pending.any():
            # static message so the default warning filter dedups it per run
            warnings.warn(
                "some corruptions still collide with observed triples after the retry cap; keeping them",
                stacklevel=2,
            )
        return h, r, t

    def _collisions(self, h, r, t):
        codes = _triple_codes(h, r, t, self.num_nodes)
        pos = np.searchsorted(self.observed, codes)
        pos = np.minimum(pos, len(self.observed) - 1)
        return self.observed[pos] == codes


def sample_negatives(
    triple: tuple[NodeId, Relation, NodeId],
    graph: HeteroGraph | GraphIndex,
    eta: int,
    rng: int | np.random.Generator = 0,
) -> list[tuple[NodeId, Relation, NodeId]]:
    """eta corruptions of one triple, filtered against observed positives."""
    index = _as_index(graph)
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    head, rel, tail = triple
    row = np.array(
        [[index.require(head), list(Relation).index(rel), index.require(tail)]], dtype=np.int64
    )
    corrupter = _Corrupter(index)
    h, r, t = corrupter.corrupt(row, eta, rng)
    return [
        (index.nodes[int(hi)], list(Relation)[int(ri)], index.nodes[int(ti)])
        for hi, ri, ti in zip(h, r, t)
    ]


# -- training ------------------------------------------------------------------


def train_kge(graph: HeteroGraph | GraphIndex, config: KgeConfig) -> KgeModel:
    """Minibatch Adam on softmax NLL over all observed triples.

    Deterministic for a fixed rng_seed (single-threaded). TransE entity
    rows are re-normalized to unit L2 after every update.
    """
    index = _as_index(graph)
    positives = index.triples[index.triples[:, 1] == list(Relation).index(Relation.RELEVANT_TO)]
    if len(positives) == 0:
        raise NoPositives("the graph has no label-1 relevance edges")
    model = init_model(index, config)
    if config.epochs == 0:
        return model
    triples = index.triples
    if config.relevance_boost > 1:
        # the relevance edges are a sliver of the triple set; oversampling
        # them rebalances the gradient between structure and task
        rel_code = list(Relation).index(Relation.RELEVANT_TO)
        rel_rows = triples[triples[:, 1] == rel_code]
        triples = np.concatenate([triples] + [rel_rows] * (config.relevance_boost - 1))
    corrupter = _Corrupter(index)
    rng = np.random.default_rng(config.rng_seed + 1)  # distinct stream from init
    optimizer = Adam(model.params, config.learning_rate, weight_decay=config.weight_decay)
    is_transe = config.model_kind == TRANSE

    for epoch in range(config.epochs):
        order = rng.permutation(len(triples))
        epoch_loss = 0.0
        for start in range(0, len(triples), config.batch_size):
            batch = triples[order[start : start + config.batch_size]]
            neg_h, neg_r, neg_t = corrupter.corrupt(batch, config.eta, rng)
            pos_scores, pos_cache = _score_with_cache(
                config.model_kind, model.params, batch[:, 0], batch[:, 1], batch[:, 2], config.norm
            )
            neg_flat, neg_cache = _score_with_cache(
                config.model_kind, model.params, neg_h, neg_r, neg_t, config.norm
            )
            neg_scores = neg_flat.reshape(len(batch), config.eta)
            loss, pos_coeff, neg_coeff = _batch_nll_and_coeffs(pos_scores, neg_scores)
            grads = {name: np.zeros_like(arr) for name, arr in model.params.items()}
            _accumulate_grads(
                config.model_kind, model.params, grads,
                batch[:, 0], batch[:, 1], batch[:, 2], pos_coeff, config.norm, cache=pos_cache,
            )
            _accumulate_grads(
                config.model_kind, model.params, grads,
                neg_h, neg_r, neg_t, neg_coeff.ravel(), config.norm, cache=neg_cache,
            )
            optimizer.step(grads)
            if is_transe:
                entity = model.params["entity"]
                norms = np.linalg.norm(entity, axis=1, keepdims=True)
                entity /= np.where(norms > 0.0, norms, 1.0)
            epoch_loss += loss * len(batch)
        epoch_loss /= len(triples)
        if not np.isfinite(epoch_loss):
            raise NonFiniteLoss(epoch, epoch_loss)
        model.loss_trace.append(epoch_loss)
    return model


def predict_kge_scores(model: KgeModel, pairs: list[tuple[NodeId, NodeId]]) -> list[float]:
    """Scores of (document, relevant_to, topic) for each pair, order preserved."""
    if not pairs:
        return []
    h = np.array([model.node_index(doc) for doc, _ in pairs])
    t = np.array([model.node_index(topic) for _, topic in pairs])
    r = np.full(len(pairs), model.rel_of[Relation.RELEVANT_TO])
    cfg = model.config
    return [float(s) for s in batch_scores(cfg.model_kind, model.params, h, r, t, cfg.norm)]


# -- persistence ---------------------------------------------------------------


def save_kge_model(model: KgeModel, path) -> None:
    meta = {
        "format": "kge v1",
        "config": {
            "model_kind": model.config.model_kind,
            "dim": model.config.dim,
            "epochs": model.config.epochs,
            "learning_rate": model.config.learning_rate,
            "batch_size": model.config.batch_size,
            "eta": model.config.eta,
            "norm": model.config.norm,
            "weight_decay": model.config.weight_decay,
            "relevance_boost": model.config.relevance_boost,
            "rng_seed": model.config.rng_seed,
        },
        "nodes": [[n.kind.value, n.key] for n in model.nodes],
        "loss_trace": model.loss_trace,
    }
    save_arrays(path, model.params, meta)


def load_kge_model(path) -> KgeModel:
    arrays, meta = load_arrays(path)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")  # config ranges were vetted at training time
        config = KgeConfig(**meta["config"])
    nodes = tuple(NodeId(NodeKind(kind), key) for kind, key in meta["nodes"])
    return KgeModel(config=config, nodes=nodes, params=arrays, loss_trace=list(meta["loss_trace"]))


# -- gradient checking ---------------------------------------------------------

_KINK_MARGIN = 1e-3


def gradcheck(
    model_kind: str,
    rng_seed: int = 0,
    dim: int = 4,
    num_entities: int = 5,
    eta: int = 3,
    norm: str = "L1",
    step: float = 1e-5,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    Uses a random one-positive/eta-negative NLL instance. For TransE the
    instance is redrawn until every |h + r - t| coordinate (L1) or norm
    (L2) clears a margin, keeping finite differences away from the
    non-differentiable kinks.
    """
    model_kind = model_kind.lower()
    rng = np.random.default_rng(rng_seed)

    for _ in range(100):
        if model_kind == TRANSE:
            params = {
                "entity": rng.uniform(-1, 1, size=(num_entities, dim)),
                "relation": rng.uniform(-1, 1, size=(2, dim)),
            }
        else:
            params = {
                "entity_re": rng.uniform(-1, 1, size=(num_entities, dim)),
                "entity_im": rng.uniform(-1, 1, size=(num_entities, dim)),
                "relation_re": rng.uniform(-1, 1, size=(2, dim)),
                "relation_im": rng.uniform(-1, 1, size=(2, dim)),
            }
        h = rng.integers(0, num_entities, size=1 + eta)
        t = rng.integers(0, num_entities, size=1 + eta)
        r = rng.integers(0, 2, size=1 + eta)
        if model_kind == TRANSE:
            u = params["entity"][h] + params["relation"][r] - params["entity"][t]
            if norm == "L1" and np.abs(u).min() < _KINK_MARGIN:
                continue
            if norm == "L2" and np.sqrt(np.square(u).sum(axis=1)).min() < _KINK_MARGIN:
                continue
        break

    def loss():
        scores = batch_scores(model_kind, params, h, r, t, norm)
        return nll_loss(scores[0], scores[1:])

    scores = batch_scores(model_kind, params, h, r, t, norm)
    _, pos_coeff, neg_coeff = _batch_nll_and_coeffs(scores[:1], scores[1:][None, :])
    analytic = {name: np.zeros_like(arr) for name, arr in params.items()}
    coeff = np.concatenate([pos_coeff, neg_coeff.ravel()])
    _accumulate_grads(model_kind, params, analytic, h, r, t, coeff, norm)
    numeric = finite_difference_grads(loss, params, step=step)
    return max_relative_error(analytic, numeric)
