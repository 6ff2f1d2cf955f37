import numpy as np
import pytest
from dataclasses import replace

from mote.baselines import (
    chronological_train,
    load_source_checkpoint,
    predict_source_labels,
    predict_source_probs,
    save_source_checkpoint,
    self_label_adapt,
    train_source,
)
from mote.corpus import Document, DriftConfig, generate_drift_corpus, split_train_test
from mote.model import ModelDims, TrainConfig
from mote.numerics import cross_entropy

DIMS = ModelDims(d=16, d_emb=16, hash_buckets=512, d_hidden=32)


def quick_cfg(**kw):
    base = dict(source_epochs=5, batch_size=16, source_learning_rate=1e-2)
    base.update(kw)
    return TrainConfig(**base)


def easy_corpus(seed=3):
    return generate_drift_corpus(
        DriftConfig(
            docs_per_domain=150, num_domains=3, seed=seed, token_drift=0.0, label_shift=0.0,
            vocab_size=300, doc_len_min=40, doc_len_max=80,
        )
    )


class TestTrainSource:
    def test_single_class_data(self):
        docs = [
            Document(id=f"d{i}", tokens=("a", "b", "c"), label=0, timestamp=0, group=0)
            for i in range(40)
        ]
        model = train_source(docs, 2, DIMS, quick_cfg(source_epochs=40, source_learning_rate=0.02), seed=0)
        probs = predict_source_probs(model, docs)
        assert (probs.argmax(axis=1) == 0).all()
        assert cross_entropy(probs, [0] * 40) < 0.05

    def test_separable_corpus_test_accuracy(self):
        # disjoint per-class token sets: linearly separable by construction
        rng = np.random.default_rng(13)
        docs = []
        for i in range(200):
            label = int(rng.integers(2))
            tokens = tuple(f"w{label}_{t}" for t in rng.integers(0, 10, size=20))
            docs.append(Document(id=f"d{i}", tokens=tokens, label=label, timestamp=0, group=0))
        train, test = docs[:140], docs[140:]
        model = train_source(train, 2, DIMS, quick_cfg(source_epochs=10), seed=1)
        accuracy = np.mean(
            predict_source_labels(model, test) == [d.label for d in test]
        )
        assert accuracy >= 0.9

    def test_deterministic(self):
        corpus = easy_corpus()
        docs = list(corpus.domains[0].documents)
        a = train_source(docs, corpus.num_classes, DIMS, quick_cfg(), seed=7)
        b = train_source(docs, corpus.num_classes, DIMS, quick_cfg(), seed=7)
        np.testing.assert_array_equal(a.head_w.value, b.head_w.value)
        np.testing.assert_array_equal(a.encoder.embedding.value, b.encoder.embedding.value)

    def test_empty_data_rejected(self):
        with pytest.raises(ValueError):
            train_source([], 2, DIMS, quick_cfg(), seed=0)


class TestSelfLabel:
    def test_silver_labels_cover_whole_pool(self):
        corpus = easy_corpus()
        teacher = train_source(
            list(corpus.domains[0].documents), corpus.num_classes, DIMS, quick_cfg(), seed=2
        )
        pool = list(corpus.domains[1].documents)
        assert len(predict_source_labels(teacher, pool)) == len(pool)

    def test_perfect_teacher_equals_gold_training(self):
        corpus = easy_corpus()
        source_docs = list(corpus.domains[0].documents)
        teacher = train_source(source_docs, corpus.num_classes, DIMS, quick_cfg(), seed=4)
        pool = list(corpus.domains[1].documents)
        # relabel the pool with the teacher's own predictions: teacher is now
        # perfectly accurate on it by construction
        silver = predict_source_labels(teacher, pool)
        gold_pool = [replace(doc, label=int(lab)) for doc, lab in zip(pool, silver)]
        adapted = self_label_adapt(teacher, source_docs, gold_pool, quick_cfg(), seed=4)
        direct = train_source(
            source_docs + gold_pool, corpus.num_classes, DIMS, quick_cfg(), seed=4
        )
        np.testing.assert_array_equal(adapted.head_w.value, direct.head_w.value)
        np.testing.assert_array_equal(
            adapted.encoder.projection.value, direct.encoder.projection.value
        )

    def test_pool_gold_labels_never_read(self):
        corpus = easy_corpus()
        source_docs = list(corpus.domains[0].documents)
        teacher = train_source(source_docs, corpus.num_classes, DIMS, quick_cfg(), seed=5)
        pool = list(corpus.domains[1].documents)
        scrambled = [replace(d, label=(d.label + 1) % corpus.num_classes) for d in pool]
        a = self_label_adapt(teacher, source_docs, pool, quick_cfg(), seed=5)
        b = self_label_adapt(teacher, source_docs, scrambled, quick_cfg(), seed=5)
        np.testing.assert_array_equal(a.head_w.value, b.head_w.value)

    def test_silver_error_equals_teacher_error(self):
        corpus = generate_drift_corpus(DriftConfig(docs_per_domain=100, num_domains=3, seed=9))
        source_docs = [d for dom in corpus.source_domains for d in dom.documents]
        teacher = train_source(source_docs, corpus.num_classes, DIMS, quick_cfg(), seed=6)
        pool = list(corpus.target_domain.documents)
        silver = predict_source_labels(teacher, pool)
        gold = np.array([d.label for d in pool])
        silver_error = np.mean(silver != gold)
        teacher_error = np.mean(predict_source_labels(teacher, pool) != gold)
        assert silver_error == teacher_error

    def test_empty_pool_rejected(self):
        corpus = easy_corpus()
        docs = list(corpus.domains[0].documents)
        teacher = train_source(docs, corpus.num_classes, DIMS, quick_cfg(), seed=1)
        with pytest.raises(ValueError):
            self_label_adapt(teacher, docs, [], quick_cfg(), seed=1)


class TestChronological:
    def test_single_domain_equals_train_source(self):
        corpus = easy_corpus()
        domain = corpus.domains[0]
        chrono = chronological_train([domain], corpus.num_classes, DIMS, quick_cfg(), seed=8)
        direct = train_source(list(domain.documents), corpus.num_classes, DIMS, quick_cfg(), seed=8)
        np.testing.assert_array_equal(chrono.head_w.value, direct.head_w.value)
        np.testing.assert_array_equal(chrono.encoder.embedding.value, direct.encoder.embedding.value)

    def test_weights_change_per_stage(self):
        corpus = generate_drift_corpus(DriftConfig(docs_per_domain=80, num_domains=3, seed=10))
        cfg = quick_cfg(source_epochs=3)
        one = chronological_train(corpus.domains[:1], corpus.num_classes, DIMS, cfg, seed=3)
        two = chronological_train(corpus.domains[:2], corpus.num_classes, DIMS, cfg, seed=3)
        assert not np.array_equal(one.head_w.value, two.head_w.value)
        assert two.provenance == (1, 2)

    def test_recency_bias_seed_averaged(self):
        corpus = generate_drift_corpus(
            DriftConfig(docs_per_domain=200, num_domains=4, seed=11, token_drift=0.8)
        )
        cfg = quick_cfg(source_epochs=5, source_learning_rate=1e-2)
        gaps = []
        for seed in (41, 42, 43):
            model = chronological_train(
                corpus.source_domains, corpus.num_classes, DIMS, cfg, seed=seed
            )
            first = corpus.source_domains[0].documents
            last = corpus.source_domains[-1].documents
            loss_first = cross_entropy(predict_source_probs(model, first), [d.label for d in first])
            loss_last = cross_entropy(predict_source_probs(model, last), [d.label for d in last])
            gaps.append(loss_first - loss_last)
        assert np.mean(gaps) > 0.0


def test_source_checkpoint_round_trip(tmp_path):
    corpus = easy_corpus()
    docs = list(corpus.domains[0].documents)
    model = train_source(docs, corpus.num_classes, DIMS, quick_cfg(), seed=12,
                         provenance=(1, 2))
    save_source_checkpoint(model, tmp_path / "src")
    loaded = load_source_checkpoint(tmp_path / "src")
    np.testing.assert_allclose(
        predict_source_probs(model, docs[:10]), predict_source_probs(loaded, docs[:10]), atol=1e-12
    )
    assert loaded.provenance == (1, 2)
