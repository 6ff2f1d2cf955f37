"""Experiment orchestration for the three experiment families.

adapt-compare trains {source_only, self_labeling, chronological, mote} on
identical splits per seed and evaluates on the held-out 20% of the most
recent domain; ablation runs full mote plus the three module-removal
switches; temporal-effect produces the cross-era performance matrices.
The row tag ``anti_cf`` is reserved in the report schema but never run.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

from .baselines import (
    SourceModel,
    chronological_train,
    predict_source_probs,
    self_label_adapt,
    train_source,
)
from .config import ExperimentConfig
from .corpus import (
    Document,
    TemporalCorpus,
    downsample_to_smallest,
    generate_drift_corpus,
    load_documents,
    partition_by_time,
    split_train_test,
)
from .metrics import (
    METRIC_FUNCTIONS,
    MetricReport,
    TemporalEffectMatrix,
    metric_report,
    records_from_probs,
    temporal_effect_matrices,
)
from .model import (
    MoTEModel,
    build_mote,
    predict_documents,
    train_adaptation,
    warmup_router,
)

__all__ = ["RunReport", "MethodResult", "ADAPT_METHODS", "ABLATION_METHODS", "run_experiment"]

ADAPT_METHODS = ("source_only", "self_labeling", "chronological", "mote")
ABLATION_METHODS = ("mote", "mote_no_warmup", "mote_no_router", "mote_no_evaluator")
RESERVED_METHODS = ("anti_cf",)  # schema slot for the out-of-scope baseline

TARGET_TEST_FRACTION = 0.2  # most recent domain: 20% test, 80% unlabeled pool


@dataclass(frozen=True)
class MethodResult:
    method: str
    seed: int
    report: MetricReport


@dataclass
class RunReport:
    kind: str
    seeds: tuple[int, ...]
    metrics: tuple[str, ...] = ()
    method_rows: list[MethodResult] = field(default_factory=list)
    averaged: dict[str, dict[str, float]] = field(default_factory=dict)
    matrices: dict[str, TemporalEffectMatrix] = field(default_factory=dict)
    timings: dict[str, float] = field(default_factory=dict)
    loss_traces: dict[str, list[float]] = field(default_factory=dict)
    checkpoints: dict[str, object] = field(default_factory=dict)  # method -> model
    method_order: tuple[str, ...] = ()
    config_echo: tuple[str, ...] = ()
    figures: bool = True


def build_corpus(cfg: ExperimentConfig) -> TemporalCorpus:
    if cfg.corpus_source == "generate":
        return generate_drift_corpus(cfg.drift)
    documents = load_documents(cfg.corpus_path, min_tokens=cfg.min_tokens)
    return partition_by_time(documents, cfg.boundaries)


def _evaluate(documents: Sequence[Document], probs) -> MetricReport:
    return metric_report(records_from_probs(documents, probs))


def _mote_variant(cfg: ExperimentConfig, variant: str):
    train = cfg.train
    if variant == "mote_no_warmup":
        train = replace(train, no_warmup=True)
    elif variant == "mote_no_router":
        train = replace(train, no_router=True)
    elif variant == "mote_no_evaluator":
        train = replace(train, no_evaluator=True)
    return train


def _train_mote(
    cfg: ExperimentConfig,
    variant: str,
    source_model: SourceModel,
    source_docs: Sequence[Document],
    num_experts: int,
    num_classes: int,
    seed: int,
) -> MoTEModel:
    train = _mote_variant(cfg, variant)
    model, warmup = build_mote(
        source_model.encoder,
        source_docs,
        num_experts=num_experts,
        top_k=cfg.top_k,
        num_classes=num_classes,
        seed=seed,
        aux_weight=cfg.aux_weight,
        literal_gating=cfg.literal_gating,
        cfg=train,
        d_hidden=cfg.dims.d_hidden,
    )
    if not train.no_warmup and not train.no_router:
        warmup_router(model, warmup, train, seed)
    train_adaptation(model, source_docs, train, seed)
    return model


def _run_seed_methods(
    cfg: ExperimentConfig, corpus: TemporalCorpus, methods: Sequence[str], seed: int
) -> tuple[list[MethodResult], dict[str, object], dict[str, list[float]]]:
    """All methods for one seed, on one shared target split."""
    num_classes = corpus.num_classes
    source_domains = corpus.source_domains
    if not source_domains:
        raise ValueError("corpus needs at least two domains for adaptation experiments")
    source_docs = [doc for dom in source_domains for doc in dom.documents]
    pool, test = split_train_test(
        corpus.target_domain, ratio=1.0 - TARGET_TEST_FRACTION, seed=seed
    )
    num_experts = cfg.num_experts or len(source_domains)
    if cfg.top_k > num_experts:
        raise ValueError(f"mote.top_k {cfg.top_k} exceeds expert count {num_experts}")
    source_model = train_source(
        source_docs,
        num_classes,
        cfg.dims,
        cfg.train,
        seed,
        provenance=tuple(d.index for d in source_domains),
    )
    results: list[MethodResult] = []
    models: dict[str, object] = {}
    traces: dict[str, list[float]] = {}
    for method in methods:
        if method == "source_only":
            model: object = source_model
            probs = predict_source_probs(source_model, test)
            traces[method] = list(source_model.loss_trace)
        elif method == "self_labeling":
            model = self_label_adapt(source_model, source_docs, pool, cfg.train, seed)
            probs = predict_source_probs(model, test)
        elif method == "chronological":
            model = chronological_train(source_domains, num_classes, cfg.dims, cfg.train, seed)
            probs = predict_source_probs(model, test)
        elif method.startswith("mote"):
            model = _train_mote(
                cfg, method, source_model, source_docs, num_experts, num_classes, seed
            )
            probs = predict_documents(model, test)
            traces[method] = list(model.loss_trace)
        else:
            raise ValueError(f"unknown method {method}")
        results.append(MethodResult(method=method, seed=seed, report=_evaluate(test, probs)))
        models[method] = model
    return results, models, traces


def _average_rows(rows: Sequence[MethodResult], methods: Sequence[str]) -> dict[str, dict[str, float]]:
    averaged: dict[str, dict[str, float]] = {}
    for method in methods:
        method_rows = [r.report.as_row() for r in rows if r.method == method]
        if not method_rows:
            continue
        averaged[method] = {
            key: sum(row[key] for row in method_rows) / len(method_rows)
            for key in method_rows[0]
        }
    return averaged


def _run_method_family(cfg: ExperimentConfig, methods: tuple[str, ...]) -> RunReport:
    t_start = time.perf_counter()
    corpus = build_corpus(cfg)
    report = RunReport(kind=cfg.kind, seeds=tuple(cfg.train.seeds), method_order=methods)
    report.timings["corpus"] = time.perf_counter() - t_start

    def one_seed(seed: int):
        return _run_seed_methods(cfg, corpus, methods, seed)

    t_train = time.perf_counter()
    seeds = list(cfg.train.seeds)
    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            outcomes = list(pool.map(one_seed, seeds))
    else:
        outcomes = [one_seed(seed) for seed in seeds]
    report.timings["train_and_eval"] = time.perf_counter() - t_train
    for seed, (rows, models, traces) in zip(seeds, outcomes):
        report.method_rows.extend(rows)
        if seed == seeds[0]:
            report.checkpoints.update(models)
        for method, trace in traces.items():
            report.loss_traces[f"{method}_seed{seed}"] = trace
    report.averaged = _average_rows(report.method_rows, methods)
    return report


def _run_temporal_effect(cfg: ExperimentConfig) -> RunReport:
    t_start = time.perf_counter()
    corpus = build_corpus(cfg)
    corpus = downsample_to_smallest(corpus, seed=cfg.drift.seed)
    report = RunReport(kind=cfg.kind, seeds=tuple(cfg.train.seeds))
    report.timings["corpus"] = time.perf_counter() - t_start

    def trainer(train_docs: Sequence[Document], seed: int):
        model = train_source(train_docs, corpus.num_classes, cfg.dims, cfg.train, seed)

        def predictor(test_docs: Sequence[Document]):
            return records_from_probs(test_docs, predict_source_probs(model, test_docs))

        return predictor

    metric_fns = {name: METRIC_FUNCTIONS[name] for name in cfg.metrics}
    t_train = time.perf_counter()
    report.matrices = temporal_effect_matrices(corpus, trainer, metric_fns, cfg.train.seeds)
    report.timings["train_and_eval"] = time.perf_counter() - t_train
    return report


def run_experiment(cfg: ExperimentConfig) -> RunReport:
    """Execute one experiment family end to end; deterministic per config."""
    from .config import config_lines

    if cfg.kind == "temporal-effect":
        report = _run_temporal_effect(cfg)
    elif cfg.kind == "adapt-compare":
        report = _run_method_family(cfg, ADAPT_METHODS)
    elif cfg.kind == "ablation":
        report = _run_method_family(cfg, ABLATION_METHODS)
    else:
        raise ValueError(f"unknown experiment kind {cfg.kind}")
    report.metrics = tuple(cfg.metrics)
    report.config_echo = tuple(config_lines(cfg))
    report.figures = cfg.figures
    return report
