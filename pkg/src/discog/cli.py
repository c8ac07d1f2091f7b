"""Pipeline command line: build-graph, train, rank, eval, reason, cost, ablate.

Configuration is a sectioned key=value text file (INI syntax); every key
can be overridden by a same-named command-line flag, and the flag wins.
All file writes are atomic (write-temp-then-rename), and with a fixed
seed every command is rerunnable to byte-identical outputs.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import os
import sys
import tempfile
import warnings
from pathlib import Path

import numpy as np

from . import gnn, kge, synth
from .corpus import (
    Judgment,
    load_corpus,
    load_judgments,
    load_topics,
    save_corpus,
    save_judgments,
    save_topics,
    split_validation,
)
from .embedding import HashedTfidfProvider, PrecomputedProvider
from .errors import DiscogError
from .graph import (
    GraphConfig,
    GraphIndex,
    NodeId,
    NodeKind,
    Relation,
    build_graph,
    graph_stats,
    labeled_edges,
    load_graph,
    save_graph,
)
from .keywords import build_vocabulary, similarity_links
from .ranking import (
    Bm25LIndex,
    DEFAULT_K_GRID,
    MINMAX,
    NONE,
    TopKConfig,
    at_k_table,
    calibrate_threshold,
    classification_metrics,
    classify,
    cost_savings,
    minmax_normalize,
    rank_documents,
    recall_at_k,
    select_cutoff,
)
from .reasoning import (
    DEFAULT_TEMPLATE,
    HttpLlmClient,
    MockLlmClient,
    Prediction,
    PromptTemplate,
    reason_top_k,
    save_records,
)
from .serialize import load_arrays, save_arrays

KGE_MODELS = (kge.TRANSE, kge.COMPLEX)
GNN_MODELS = (gnn.GRAPHSAGE, gnn.GAT, gnn.RGCN)

DEFAULTS = {
    "corpus": "", "topics": "", "seed_judgments": "", "qrels": "", "out_dir": "out",
    "model": "graphsage",
    "include_keywords": "true", "include_participants": "true", "transductive_masters": "auto",
    "min_df": "5", "sim_threshold": "0.75", "top_m": "10",
    "provider": "hashed", "dimension": "384", "vectors": "",
    "dim": "100", "eta": "20", "norm": "L1", "relevance_boost": "1",
    "epochs": "", "learning_rate": "", "batch_size": "",
    "layers": "2", "hidden_dim": "64", "fanout": "15,10", "heads": "4",
    "weight_decay": "0.0", "feature_dropout": "0.0",
    "validation_fraction": "0.2",
    "recall_target": "0.8", "k_cutoff": "",
    "k_grid": ",".join(str(k) for k in DEFAULT_K_GRID),
    "averaging": "binary",
    "llm": "mock", "llm_endpoint": "", "llm_model": "gpt-3.5-turbo",
    "mock_script": "", "template": "", "body_budget": "4000",
    "flip_on_disagree": "true", "max_in_flight": "1", "max_retries": "2", "backoff": "0.5",
    "seed": "0", "deterministic": "true",
}

_BOOL = {"true": True, "false": False, "1": True, "0": False, "yes": True, "no": False}


class Settings:
    """Merged view of defaults, config file, and command-line flags."""

    def __init__(self, args: argparse.Namespace):
        values = dict(DEFAULTS)
        config_path = getattr(args, "config", None)
        if config_path:
            parser = configparser.ConfigParser()
            with open(config_path, encoding="utf-8") as fh:
                parser.read_string("[_top]\n" + fh.read())
            for section in parser.sections():
                for key, value in parser.items(section):
                    if key not in DEFAULTS:
                        raise DiscogError(f"unknown config key {key!r} in {config_path}")
                    values[key] = value
        for key in DEFAULTS:
            flag = getattr(args, key, None)
            if flag is not None:
                values[key] = str(flag)
        self.values = values

    def str(self, key: str) -> str:
        return self.values[key]

    def int(self, key: str):
        raw = self.values[key]
        return int(raw) if raw != "" else None

    def float(self, key: str):
        raw = self.values[key]
        return float(raw) if raw != "" else None

    def bool(self, key: str) -> bool:
        raw = self.values[key].strip().lower()
        if raw not in _BOOL:
            raise DiscogError(f"config key {key!r} expects a boolean, got {self.values[key]!r}")
        return _BOOL[raw]

    def ints(self, key: str) -> tuple[int, ...]:
        raw = self.values[key].strip()
        return tuple(int(part) for part in raw.split(",") if part.strip()) if raw else ()

    def path(self, key: str, must_exist: bool = False) -> Path:
        raw = self.values[key]
        if not raw:
            raise DiscogError(f"missing required path setting {key!r}")
        path = Path(raw)
        if must_exist and not path.exists():
            raise DiscogError(f"{key} path does not exist: {path}")
        return path


def atomic_write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_json(path: Path, payload) -> None:
    atomic_write_text(path, json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=False) + "\n")


def _atomic_via(path: Path, writer) -> None:
    """Run ``writer(tmp_path)`` then rename over the destination."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    os.close(fd)
    try:
        writer(tmp)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# -- shared pipeline pieces ----------------------------------------------------


def _load_inputs(settings: Settings):
    corpus = load_corpus(settings.path("corpus", must_exist=True))
    topics = load_topics(settings.path("topics", must_exist=True))
    seeds = load_judgments(settings.path("seed_judgments", must_exist=True), "seed")
    return corpus, topics, seeds


def _provider(settings: Settings, corpus, topics):
    kind = settings.str("provider")
    if kind == "vectors":
        return PrecomputedProvider.from_jsonl(settings.path("vectors", must_exist=True))
    if kind != "hashed":
        raise DiscogError(f"unknown provider {kind!r} (expected 'hashed' or 'vectors')")
    texts = [doc.text for doc in corpus.documents.values()] + [t.statement for t in topics]
    return HashedTfidfProvider.from_texts(texts, dimension=settings.int("dimension"))


def _split_seeds(settings: Settings, seeds):
    """Per-topic stratified split; train edges feed the graph, validation calibrates."""
    by_topic: dict[str, list[Judgment]] = {}
    for judgment in seeds:
        by_topic.setdefault(judgment.topic_id, []).append(judgment)
    train, validation = [], []
    for topic_id in sorted(by_topic):
        t, v = split_validation(
            by_topic[topic_id],
            fraction=settings.float("validation_fraction"),
            rng_seed=settings.int("seed"),
            allow_single_class=True,
        )
        train.extend(t)
        validation.extend(v)
    return train, validation


def _graph_config(settings: Settings) -> GraphConfig:
    masters_raw = settings.str("transductive_masters").strip().lower()
    if masters_raw == "auto":
        masters = settings.str("model") in KGE_MODELS
    else:
        masters = _BOOL.get(masters_raw)
        if masters is None:
            raise DiscogError(f"transductive_masters expects true/false/auto, got {masters_raw!r}")
    return GraphConfig(
        include_keywords=settings.bool("include_keywords"),
        include_participants=settings.bool("include_participants"),
        transductive_masters=masters,
        min_df=settings.int("min_df"),
        sim_threshold=settings.float("sim_threshold"),
    )


def _build_pipeline_graph(settings: Settings, corpus, topics, train_seeds, config: GraphConfig):
    provider = _provider(settings, corpus, topics)
    vocab = None
    links = None
    if config.include_keywords:
        vocab = build_vocabulary(
            corpus, topics, provider, min_df=config.min_df, top_m=settings.int("top_m")
        )
        links = similarity_links(vocab, threshold=config.sim_threshold)
    return build_graph(corpus, topics, train_seeds, vocab, links, config), provider


def _kge_config(settings: Settings) -> kge.KgeConfig:
    return kge.KgeConfig(
        model_kind=settings.str("model"),
        dim=settings.int("dim"),
        epochs=settings.int("epochs") if settings.str("epochs") else 300,
        learning_rate=settings.float("learning_rate") or 5e-4,
        batch_size=settings.int("batch_size") or kge.DEFAULT_BATCH_SIZE,
        eta=settings.int("eta"),
        norm=settings.str("norm"),
        weight_decay=settings.float("weight_decay"),
        relevance_boost=settings.int("relevance_boost"),
        rng_seed=settings.int("seed"),
    )


def _gnn_config(settings: Settings) -> gnn.GnnConfig:
    arch = settings.str("model")
    return gnn.GnnConfig(
        arch=arch,
        layers=settings.int("layers"),
        hidden_dim=settings.int("hidden_dim"),
        fanout=settings.ints("fanout"),
        epochs=settings.int("epochs") if settings.str("epochs") else None,
        learning_rate=settings.float("learning_rate") or 5e-4,
        batch_size=settings.int("batch_size") or 256,
        heads=settings.int("heads"),
        weight_decay=settings.float("weight_decay"),
        feature_dropout=settings.float("feature_dropout"),
        rng_seed=settings.int("seed"),
    )


def _features_with_cache(settings: Settings, graph, provider, corpus, topics, out_dir: Path):
    """Feature matrix cached in a sidecar keyed by the provider fingerprint."""
    index = GraphIndex(graph)
    node_key = "|".join(f"{n.kind.value}:{n.key}" for n in index.nodes)
    digest = hashlib.blake2b(node_key.encode("utf-8"), digest_size=16).hexdigest()
    cache = out_dir / "features.bin"
    fingerprint = provider.fingerprint()
    if cache.exists():
        try:
            arrays, meta = load_arrays(cache)
            if meta.get("provider_fingerprint") == fingerprint and meta.get("nodes_digest") == digest:
                return gnn.FeatureMatrix(index=index, matrix=arrays["features"])
        except DiscogError:
            pass
    features = gnn.init_node_features(index, provider, corpus, topics)
    _atomic_via(
        cache,
        lambda tmp: save_arrays(
            tmp,
            {"features": features.matrix},
            {"provider_fingerprint": fingerprint, "nodes_digest": digest},
        ),
    )
    return features


def _doc_nodes(graph) -> list[NodeId]:
    return [NodeId(NodeKind.DOCUMENT, key) for key in graph.keys(NodeKind.DOCUMENT)]


def _score_all(settings: Settings, graph, corpus, topics, provider, model_path: Path, out_dir: Path):
    """Raw relevance scores for every (document, topic) pair, by model kind."""
    model_kind = settings.str("model")
    doc_nodes = _doc_nodes(graph)
    scores: dict[str, dict[str, float]] = {}
    if model_kind in KGE_MODELS:
        model = kge.load_kge_model(model_path)
        for topic in topics:
            topic_node = NodeId(NodeKind.TOPIC, topic.topic_id)
            pairs = [(doc, topic_node) for doc in doc_nodes]
            values = kge.predict_kge_scores(model, pairs)
            scores[topic.topic_id] = {doc.key: value for doc, value in zip(doc_nodes, values)}
        return scores, MINMAX
    model = gnn.load_gnn_model(model_path)
    features = _features_with_cache(settings, graph, provider, corpus, topics, out_dir)
    pairs = [
        (doc, NodeId(NodeKind.TOPIC, topic.topic_id)) for topic in topics for doc in doc_nodes
    ]
    probs = gnn.predict_gnn_probs(model, features.index, features, pairs)
    cursor = 0
    for topic in topics:
        chunk = probs[cursor : cursor + len(doc_nodes)]
        scores[topic.topic_id] = {doc.key: value for doc, value in zip(doc_nodes, chunk)}
        cursor += len(doc_nodes)
    return scores, NONE


def _rank_one_topic(settings: Settings, topic_id, raw_scores, normalization, validation):
    """Normalize, rank, calibrate, and pick the review cutoff for one topic."""
    doc_ids = sorted(raw_scores)
    values = [raw_scores[doc_id] for doc_id in doc_ids]
    if normalization == MINMAX:
        values = [float(v) for v in minmax_normalize(values)]
    scores = dict(zip(doc_ids, values))
    ranked = rank_documents(topic_id, scores, normalization=normalization)
    val = [j for j in validation if j.topic_id == topic_id]
    threshold = calibrate_threshold(
        [scores[j.doc_id] for j in val], [j.relevant for j in val]
    )
    val_ids = {j.doc_id for j in val}
    val_ranked = [doc_id for doc_id in ranked.doc_ids() if doc_id in val_ids]
    val_gold = {j.doc_id for j in val if j.relevant}
    explicit = settings.int("k_cutoff") if settings.str("k_cutoff") else None
    topk = TopKConfig(recall_target=settings.float("recall_target"), k_cutoff=explicit)
    k_cutoff = select_cutoff(val_ranked, val_gold, topk)
    return ranked, threshold, k_cutoff


def _write_ranking(path: Path, ranked, model_kind, threshold, k_cutoff):
    lines = [
        f"# topic={ranked.topic_id}\tmodel={model_kind}\tnormalization={ranked.normalization}"
        f"\tthreshold={threshold.value!r}\tthreshold_f1={threshold.achieved_f1!r}\tk_cutoff={k_cutoff}"
    ]
    for rank, (doc_id, score) in enumerate(ranked.entries, start=1):
        lines.append(f"{rank}\t{doc_id}\t{score!r}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def _read_ranking(path: Path):
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        meta = {}
        for part in header.lstrip("# ").split("\t"):
            key, value = part.split("=", 1)
            meta[key] = value
        entries = []
        for line in fh:
            if not line.strip():
                continue
            _, doc_id, score = line.rstrip("\n").split("\t")
            entries.append((doc_id, float(score)))
    from .ranking import RankedList

    ranked = RankedList(
        topic_id=meta["topic"], entries=tuple(entries), normalization=meta["normalization"]
    )
    meta["threshold"] = float(meta["threshold"])
    meta["threshold_f1"] = float(meta["threshold_f1"])
    meta["k_cutoff"] = int(meta["k_cutoff"])
    return ranked, meta


def _qrels_by_topic(settings: Settings):
    qrels = load_judgments(settings.path("qrels", must_exist=True), "qrels")
    by_topic: dict[str, dict[str, bool]] = {}
    for judgment in qrels:
        by_topic.setdefault(judgment.topic_id, {})[judgment.doc_id] = judgment.relevant
    return by_topic


# -- subcommands -----------------------------------------------------------------


def cmd_build_graph(settings: Settings) -> int:
    out_dir = settings.path("out_dir")
    corpus, topics, seeds = _load_inputs(settings)
    train_seeds, validation = _split_seeds(settings, seeds)
    config = _graph_config(settings)
    graph, _ = _build_pipeline_graph(settings, corpus, topics, train_seeds, config)
    _atomic_via(out_dir / "graph.txt", lambda tmp: save_graph(graph, tmp))
    _atomic_via(out_dir / "validation_seeds.txt", lambda tmp: save_judgments(validation, tmp))
    stats = graph_stats(graph)
    atomic_write_json(out_dir / "graph_stats.json", stats)
    print(json.dumps(stats, sort_keys=True))
    return 0


def cmd_train(settings: Settings) -> int:
    out_dir = settings.path("out_dir")
    graph = load_graph(out_dir / "graph.txt")
    model_kind = settings.str("model")
    if model_kind in KGE_MODELS:
        config = _kge_config(settings)
        model = kge.train_kge(graph, config)
        _atomic_via(out_dir / "model.bin", lambda tmp: kge.save_kge_model(model, tmp))
        trace = model.loss_trace
    elif model_kind in GNN_MODELS:
        corpus, topics, _ = _load_inputs(settings)
        provider = _provider(settings, corpus, topics)
        features = _features_with_cache(settings, graph, provider, corpus, topics, out_dir)
        config = _gnn_config(settings)
        model = gnn.train_gnn(features.index, features, labeled_edges(graph), config)
        _atomic_via(out_dir / "model.bin", lambda tmp: gnn.save_gnn_model(model, tmp))
        trace = model.loss_trace
    else:
        raise DiscogError(f"unknown model {model_kind!r}")
    lines = ["epoch,loss"] + [f"{i},{loss!r}" for i, loss in enumerate(trace)]
    atomic_write_text(out_dir / "loss_trace.csv", "\n".join(lines) + "\n")
    final = trace[-1] if trace else float("nan")
    print(f"trained {model_kind}: {len(trace)} epochs, final loss {final}")
    return 0


def cmd_rank(settings: Settings) -> int:
    out_dir = settings.path("out_dir")
    corpus, topics, seeds = _load_inputs(settings)
    _, validation = _split_seeds(settings, seeds)
    model_kind = settings.str("model")
    if model_kind == "bm25l":
        index = Bm25LIndex(corpus)
        raw_scores = {t.topic_id: index.scores(t.statement) for t in topics}
        normalization = NONE
    else:
        graph = load_graph(out_dir / "graph.txt")
        provider = _provider(settings, corpus, topics)
        raw_scores, normalization = _score_all(
            settings, graph, corpus, topics, provider, out_dir / "model.bin", out_dir
        )
    k_grid = settings.ints("k_grid")
    qrels = _qrels_by_topic(settings) if settings.str("qrels") else None
    for topic in topics:
        ranked, threshold, k_cutoff = _rank_one_topic(
            settings, topic.topic_id, raw_scores[topic.topic_id], normalization, validation
        )
        _write_ranking(out_dir / "rankings" / f"{topic.topic_id}.tsv", ranked, model_kind, threshold, k_cutoff)
        if qrels and topic.topic_id in qrels:
            gold = {doc_id for doc_id, rel in qrels[topic.topic_id].items() if rel}
            rows = ["k,recall"]
            for k in k_grid:
                rows.append(f"{k},{recall_at_k(ranked, gold, k)!r}")
            atomic_write_text(out_dir / "curves" / f"{topic.topic_id}_recall.csv", "\n".join(rows) + "\n")
    print(f"ranked {len(topics)} topic(s) with {model_kind} (normalization={normalization})")
    return 0


def cmd_eval(settings: Settings) -> int:
    out_dir = settings.path("out_dir")
    qrels = _qrels_by_topic(settings)
    averaging = settings.str("averaging")
    k_grid = settings.ints("k_grid")
    report: dict = {"topics": {}, "averaging": averaging}
    f1s = []
    for path in sorted((out_dir / "rankings").glob("*.tsv")):
        ranked, meta = _read_ranking(path)
        topic_id = ranked.topic_id
        if topic_id not in qrels:
            continue
        gold_map = qrels[topic_id]
        judged = sorted(gold_map)
        score_map = dict(ranked.entries)
        pred = classify([score_map[d] for d in judged if d in score_map], meta["threshold"])
        gold = [gold_map[d] for d in judged if d in score_map]
        metrics = classification_metrics(pred, gold, averaging=averaging)
        gold_set = {d for d, rel in gold_map.items() if rel}
        table = at_k_table(ranked, gold_set, ks=k_grid)
        report["topics"][topic_id] = {
            "precision": metrics.precision,
            "recall": metrics.recall,
            "f1": metrics.f1,
            "threshold": meta["threshold"],
            "k_cutoff": meta["k_cutoff"],
            "at_k": [
                {"k": k, "precision": p, "recall": r, "f1": f} for k, p, r, f in table
            ],
        }
        f1s.append(metrics.f1)
    if not report["topics"]:
        raise DiscogError("no rankings found to evaluate; run the rank command first")
    report["mean_f1"] = float(np.mean(f1s))
    atomic_write_json(out_dir / "metrics.json", report)
    print(json.dumps({"mean_f1": report["mean_f1"], "topics": len(f1s)}))
    return 0


def cmd_reason(settings: Settings) -> int:
    out_dir = settings.path("out_dir")
    corpus, topics, _ = _load_inputs(settings)
    graph = load_graph(out_dir / "graph.txt")
    template = (
        PromptTemplate.from_file(settings.path("template", must_exist=True))
        if settings.str("template")
        else DEFAULT_TEMPLATE
    )
    llm = settings.str("llm")
    if llm == "mock":
        script = {}
        if settings.str("mock_script"):
            with open(settings.path("mock_script", must_exist=True), encoding="utf-8") as fh:
                script = json.load(fh)
        client = MockLlmClient(script=script)
    elif llm == "http":
        client = HttpLlmClient(
            endpoint=str(settings.path("llm_endpoint")), model=settings.str("llm_model")
        )
    else:
        raise DiscogError(f"unknown llm client {llm!r} (expected 'mock' or 'http')")
    deterministic = settings.bool("deterministic")
    in_flight = 1 if deterministic else settings.int("max_in_flight")
    total = 0
    for topic in topics:
        path = out_dir / "rankings" / f"{topic.topic_id}.tsv"
        if not path.exists():
            raise DiscogError(f"no ranking for topic {topic.topic_id}; run the rank command first")
        ranked, meta = _read_ranking(path)
        predictions = {
            doc_id: Prediction.RELEVANT if score >= meta["threshold"] else Prediction.NON_RELEVANT
            for doc_id, score in ranked.entries
        }
        keywords_by_doc = {}
        for doc_id in ranked.doc_ids()[: meta["k_cutoff"]]:
            node = NodeId(NodeKind.DOCUMENT, doc_id)
            phrases = [n.key for n in graph.adjacency(node).get(Relation.MENTIONS, ())]
            keywords_by_doc[doc_id] = tuple(phrases[:10])
        records = reason_top_k(
            ranked, predictions, meta["k_cutoff"], client, template,
            topic=topic, corpus=corpus, keywords_by_doc=keywords_by_doc,
            flip_on_disagree=settings.bool("flip_on_disagree"),
            body_budget=settings.int("body_budget"),
            max_retries=settings.int("max_retries"),
            backoff=settings.float("backoff"),
            max_in_flight=in_flight,
        )
        _atomic_via(out_dir / "reasoning" / f"{topic.topic_id}.jsonl", lambda tmp: save_records(records, tmp))
        total += len(records)
    print(f"wrote {total} reasoning record(s)")
    return 0


def cmd_cost(settings: Settings, corpus_size: int, cutoff: int, unit_low: float, unit_high: float) -> int:
    out_dir = settings.path("out_dir")
    report = cost_savings(corpus_size, cutoff, unit_low, unit_high)
    payload = {
        "corpus_size": report.corpus_size,
        "cutoff": report.cutoff,
        "unit_cost_low": report.unit_cost_low,
        "unit_cost_high": report.unit_cost_high,
        "full_cost_low": report.full_cost_low,
        "full_cost_high": report.full_cost_high,
        "reduced_cost_low": report.reduced_cost_low,
        "reduced_cost_high": report.reduced_cost_high,
        "reduction_percent": report.reduction_percent,
        "reduction_percent_range": list(report.reduction_percent_range),
    }
    atomic_write_json(out_dir / "cost.json", payload)
    print(json.dumps(payload, sort_keys=True))
    return 0


def cmd_ablate(settings: Settings) -> int:
    """Metrics over the four keyword/participant node-inclusion combinations.

    Model architecture, hyperparameters, and seeds are identical across
    cells, so differences come from the graph structure alone.
    """
    out_dir = settings.path("out_dir")
    corpus, topics, seeds = _load_inputs(settings)
    train_seeds, validation = _split_seeds(settings, seeds)
    qrels = _qrels_by_topic(settings)
    model_kind = settings.str("model")
    averaging = settings.str("averaging")
    rows = []
    for include_keywords in (False, True):
        for include_participants in (False, True):
            base = _graph_config(settings)
            config = GraphConfig(
                include_keywords=include_keywords,
                include_participants=include_participants,
                transductive_masters=base.transductive_masters,
                min_df=base.min_df,
                sim_threshold=base.sim_threshold,
            )
            graph, provider = _build_pipeline_graph(settings, corpus, topics, train_seeds, config)
            cell_dir = out_dir / "ablation" / f"kw{int(include_keywords)}_ids{int(include_participants)}"
            cell_dir.mkdir(parents=True, exist_ok=True)
            if model_kind in KGE_MODELS:
                model = kge.train_kge(graph, _kge_config(settings))
                _atomic_via(cell_dir / "model.bin", lambda tmp: kge.save_kge_model(model, tmp))
            else:
                features = _features_with_cache(settings, graph, provider, corpus, topics, cell_dir)
                model = gnn.train_gnn(features.index, features, labeled_edges(graph), _gnn_config(settings))
                _atomic_via(cell_dir / "model.bin", lambda tmp: gnn.save_gnn_model(model, tmp))
            _atomic_via(cell_dir / "graph.txt", lambda tmp: save_graph(graph, tmp))
            raw_scores, normalization = _score_all(
                settings, graph, corpus, topics, provider, cell_dir / "model.bin", cell_dir
            )
            f1s, precisions, recalls = [], [], []
            for topic in topics:
                ranked, threshold, _ = _rank_one_topic(
                    settings, topic.topic_id, raw_scores[topic.topic_id], normalization, validation
                )
                gold_map = qrels.get(topic.topic_id, {})
                judged = sorted(gold_map)
                score_map = dict(ranked.entries)
                pred = classify([score_map[d] for d in judged if d in score_map], threshold.value)
                gold = [gold_map[d] for d in judged if d in score_map]
                metrics = classification_metrics(pred, gold, averaging=averaging)
                f1s.append(metrics.f1)
                precisions.append(metrics.precision)
                recalls.append(metrics.recall)
            rows.append(
                {
                    "model": model_kind,
                    "include_keywords": include_keywords,
                    "include_participants": include_participants,
                    "f1": float(np.mean(f1s)),
                    "precision": float(np.mean(precisions)),
                    "recall": float(np.mean(recalls)),
                }
            )
    atomic_write_json(out_dir / "ablation.json", rows)
    lines = ["model,include_keywords,include_participants,f1,precision,recall"]
    for row in rows:
        lines.append(
            f"{row['model']},{row['include_keywords']},{row['include_participants']},"
            f"{row['f1']!r},{row['precision']!r},{row['recall']!r}"
        )
    atomic_write_text(out_dir / "ablation.csv", "\n".join(lines) + "\n")
    print(json.dumps(rows))
    return 0


def cmd_synth(settings: Settings, args) -> int:
    out_dir = settings.path("out_dir")
    spec = synth.SyntheticSpec(
        num_docs=args.num_docs,
        num_topics=args.num_topics,
        relevant_per_topic=args.relevant_per_topic,
        seed_positives=args.seed_positives,
        seed_negatives=args.seed_negatives,
        rng_seed=settings.int("seed"),
    )
    data = synth.generate(spec)
    out_dir.mkdir(parents=True, exist_ok=True)
    _atomic_via(out_dir / "corpus.jsonl", lambda tmp: save_corpus(data.corpus, tmp))
    _atomic_via(out_dir / "topics.jsonl", lambda tmp: save_topics(data.topics, tmp))
    _atomic_via(out_dir / "seeds.txt", lambda tmp: save_judgments(data.seed_judgments, tmp))
    _atomic_via(out_dir / "qrels.txt", lambda tmp: save_judgments(data.qrels_judgments, tmp))
    print(f"wrote synthetic corpus ({len(data.corpus)} docs) to {out_dir}")
    return 0


# -- argument parsing ------------------------------------------------------------


_VISIBLE_FLAGS = {
    "seed": "global RNG seed",
    "out_dir": "directory all outputs are written to",
    "deterministic": "true/false; deterministic mode serializes LLM requests",
    "corpus": "corpus JSON Lines path",
    "topics": "topic-statement JSON Lines path",
    "seed_judgments": "seed qrels-format judgments path",
    "qrels": "held-out qrels path (evaluation only)",
    "model": "transe | complex | graphsage | gat | rgcn | bm25l",
    "llm_endpoint": "chat-completion URL for --llm http",
}


def _add_common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="sectioned key=value config file; flags override its keys")
    for key in DEFAULTS:
        flag = "--" + key.replace("_", "-")
        parser.add_argument(flag, dest=key, help=_VISIBLE_FLAGS.get(key, argparse.SUPPRESS))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="discog",
        description="Graph-based predictive coding and ranking for eDiscovery review",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in [
        ("build-graph", "build the heterogeneous graph and stats report"),
        ("train", "train the configured model on the built graph"),
        ("rank", "rank documents per topic and emit recall curves"),
        ("eval", "score rankings against qrels"),
        ("reason", "validate top-ranked predictions with an LLM client"),
        ("ablate", "train/evaluate across node-inclusion combinations"),
        ("make-synth", "generate a synthetic corpus for offline runs"),
    ]:
        p = sub.add_parser(name, help=helptext)
        _add_common_flags(p)
        if name == "make-synth":
            p.add_argument("--num-docs", type=int, default=500)
            p.add_argument("--num-topics", type=int, default=3)
            p.add_argument("--relevant-per-topic", type=int, default=50)
            p.add_argument("--seed-positives", type=int, default=20)
            p.add_argument("--seed-negatives", type=int, default=40)
    cost = sub.add_parser("cost", help="review-cost savings report")
    _add_common_flags(cost)
    cost.add_argument("--corpus-size", type=int, required=True)
    cost.add_argument("--cutoff", type=int, required=True)
    cost.add_argument("--unit-low", type=float, default=0.5)
    cost.add_argument("--unit-high", type=float, default=1.0)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        settings = Settings(args)
        if settings.bool("deterministic"):
            warnings.simplefilter("once")
        if args.command == "build-graph":
            return cmd_build_graph(settings)
        if args.command == "train":
            return cmd_train(settings)
        if args.command == "rank":
            return cmd_rank(settings)
        if args.command == "eval":
            return cmd_eval(settings)
        if args.command == "reason":
            return cmd_reason(settings)
        if args.command == "cost":
            return cmd_cost(settings, args.corpus_size, args.cutoff, args.unit_low, args.unit_high)
        if args.command == "ablate":
            return cmd_ablate(settings)
        if args.command == "make-synth":
            return cmd_synth(settings, args)
        raise DiscogError(f"unknown command {args.command!r}")
    except DiscogError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
