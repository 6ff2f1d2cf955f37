import numpy as np
import pytest

from mote.clustering import ClusterModel, WarmupDataset, fit_clusters
from mote.corpus import DriftConfig, generate_drift_corpus
from mote.encoder import encode_documents
from mote.experts import expert_forward, init_expert
from mote.model import (
    ModelDims,
    TrainConfig,
    adaptation_loss,
    build_mote,
    count_expert_assignments,
    load_checkpoint,
    predict,
    predict_documents,
    save_checkpoint,
    train_adaptation,
    warmup_router,
)
from mote.numerics import cross_entropy, finite_diff_check, softmax_rows
from mote.router import RouterParams, init_router, load_balance_loss, topk_mask
from mote.baselines import train_source
from mote.corpus import split_train_test


def tiny_corpus(seed=1, docs=60, domains=3):
    cfg = DriftConfig(
        docs_per_domain=docs, num_domains=domains, seed=seed, doc_len_min=10, doc_len_max=20,
        vocab_size=200,
    )
    return generate_drift_corpus(cfg)


def tiny_model(seed=1, num_experts=2, top_k=2, cfg=None, literal=False):
    corpus = tiny_corpus(seed=seed)
    docs = [d for dom in corpus.source_domains for d in dom.documents]
    dims = ModelDims(d=6, d_emb=5, hash_buckets=64, d_hidden=8)
    train_cfg = cfg or TrainConfig(source_epochs=2, warmup_epochs=3, adapt_epochs=3,
                                   learning_rate=0.01, batch_size=16)
    source = train_source(docs, corpus.num_classes, dims, train_cfg, seed=seed)
    model, warm = build_mote(
        source.encoder, docs, num_experts=num_experts, top_k=top_k,
        num_classes=corpus.num_classes, seed=seed, cfg=train_cfg,
        d_hidden=dims.d_hidden, literal_gating=literal,
    )
    return model, warm, docs, corpus, train_cfg


class TestWarmup:
    def blobs(self, seed=0):
        rng = np.random.default_rng(seed)
        a = rng.normal(size=(80, 4)) * 0.4 + np.array([3.0, 0, 0, 0])
        b = rng.normal(size=(80, 4)) * 0.4 + np.array([-3.0, 0, 0, 0])
        reps = np.vstack([a, b])
        labels = np.array([0] * 80 + [1] * 80)
        return WarmupDataset(representations=reps, labels=labels)

    def model_for(self, warm, seed=0):
        rng = np.random.default_rng(seed)
        clusters = fit_clusters(warm.representations, 2, seed=seed)
        experts = [init_expert(4, 8, 2, rng) for _ in range(2)]
        from mote.model import MoTEModel
        from mote.encoder import init_encoder

        return MoTEModel(
            encoder=init_encoder(16, 4, 4, rng),
            clusters=clusters,
            router=init_router(4, 2, rng),
            experts=experts,
            top_k=1,
            num_classes=2,
        )

    def test_separable_blobs_high_accuracy(self):
        warm = self.blobs()
        model = self.model_for(warm)
        cfg = TrainConfig(warmup_epochs=20, learning_rate=0.01, batch_size=16)
        warmup_router(model, warm, cfg, seed=0)
        logits = warm.representations @ model.router.gate_weights.value
        accuracy = np.mean(logits.argmax(axis=1) == warm.labels)
        assert accuracy >= 0.95

    def test_zero_epochs_is_noop(self):
        warm = self.blobs()
        model = self.model_for(warm)
        before = model.router.gate_weights.value.copy()
        warmup_router(model, warm, TrainConfig(warmup_epochs=0, learning_rate=0.01), seed=0)
        np.testing.assert_array_equal(model.router.gate_weights.value, before)

    def test_deterministic(self):
        warm = self.blobs()
        results = []
        for _ in range(2):
            model = self.model_for(warm, seed=4)
            warmup_router(model, warm, TrainConfig(warmup_epochs=5, learning_rate=0.01), seed=11)
            results.append(model.router.gate_weights.value.copy())
        np.testing.assert_array_equal(results[0], results[1])

    def test_empty_warmup_rejected(self):
        model = self.model_for(self.blobs())
        empty = WarmupDataset(representations=np.zeros((0, 4)), labels=np.zeros(0, dtype=int))
        with pytest.raises(ValueError, match="empty"):
            warmup_router(model, empty, TrainConfig(), seed=0)


class TestAdaptation:
    def test_loss_descends(self):
        model, warm, docs, corpus, cfg = tiny_model(
            cfg=TrainConfig(source_epochs=2, warmup_epochs=3, adapt_epochs=6,
                            learning_rate=0.01, batch_size=16)
        )
        warmup_router(model, warm, cfg, seed=1)
        train_adaptation(model, docs, cfg, seed=1)
        assert model.loss_trace[-1] <= model.loss_trace[0]

    def test_total_is_ce_plus_weighted_balance(self):
        model, warm, docs, corpus, cfg = tiny_model()
        z = encode_documents(docs[:16], model.encoder)
        labels = np.array([d.label for d in docs[:16]])
        terms = adaptation_loss(model, z, labels)
        # recompute both terms with the plain array paths
        soft = softmax_rows(z @ model.router.gate_weights.value)
        mask = topk_mask(soft, model.top_k)
        masked = soft * mask
        gates = masked / masked.sum(axis=1, keepdims=True)
        mixture = np.zeros((16, model.num_classes))
        for j, expert in enumerate(model.experts):
            probs_j = np.stack(
                [expert_forward(zi, zi - model.clusters.centroids[j], expert).probs for zi in z]
            )
            mixture += gates[:, j : j + 1] * probs_j
        expected_ce = cross_entropy(mixture, labels)
        expected_balance = load_balance_loss(gates)
        assert terms.cross_entropy.item() == pytest.approx(expected_ce, abs=1e-12)
        assert terms.balance.item() == pytest.approx(expected_balance, abs=1e-12)
        assert terms.total.item() == pytest.approx(expected_ce + 0.01 * expected_balance, abs=1e-12)

    def test_full_loss_gradients_match_finite_differences(self):
        model, warm, docs, corpus, cfg = tiny_model()
        z = encode_documents(docs[:4], model.encoder)
        labels = np.array([d.label for d in docs[:4]])

        def loss():
            return adaptation_loss(model, z, labels).total.item()

        for p in model.trainable_parameters():
            p.zero_grad()
        adaptation_loss(model, z, labels).total.backward()
        checked = [model.router.gate_weights] + model.experts[0].parameters()
        for p in checked:
            assert finite_diff_check(loss, p) < 1e-4

    def test_label_out_of_range(self):
        model, warm, docs, corpus, cfg = tiny_model()
        from dataclasses import replace

        bad = [replace(docs[0], label=corpus.num_classes + 1)]
        with pytest.raises(IndexError):
            train_adaptation(model, bad, cfg, seed=0)

    def test_encoder_frozen_by_default(self):
        model, warm, docs, corpus, cfg = tiny_model()
        before = model.encoder.embedding.value.copy()
        train_adaptation(model, docs[:32], cfg, seed=0)
        np.testing.assert_array_equal(model.encoder.embedding.value, before)

    def test_unfreeze_flag_trains_encoder(self):
        model, warm, docs, corpus, _ = tiny_model()
        cfg = TrainConfig(adapt_epochs=2, learning_rate=0.01, batch_size=16, unfreeze_encoder=True)
        before = model.encoder.embedding.value.copy()
        train_adaptation(model, docs[:32], cfg, seed=0)
        assert not np.array_equal(model.encoder.embedding.value, before)


class TestPredict:
    def test_single_expert_degenerate_mixture(self):
        model, warm, docs, corpus, cfg = tiny_model(num_experts=1, top_k=1)
        doc = docs[0]
        z = encode_documents([doc], model.encoder)[0]
        expected = expert_forward(z, z - model.clusters.centroids[0], model.experts[0]).probs
        np.testing.assert_allclose(predict(model, doc).probs, expected, atol=1e-12)

    def test_identical_experts_give_expert_output(self):
        model, warm, docs, corpus, cfg = tiny_model(num_experts=2, top_k=2)
        for p_src, p_dst in zip(model.experts[0].parameters(), model.experts[1].parameters()):
            p_dst.value[:] = p_src.value
        model.shift_disabled = True  # make expert outputs independent of the routed cluster
        doc = docs[0]
        z = encode_documents([doc], model.encoder)[0]
        expected = expert_forward(z, np.zeros_like(z), model.experts[0]).probs
        np.testing.assert_allclose(predict(model, doc).probs, expected, atol=1e-12)

    def test_convex_combination_oracle(self):
        model, warm, docs, corpus, cfg = tiny_model(num_experts=2, top_k=2)
        doc = docs[3]
        pred = predict(model, doc)
        manual = np.zeros(model.num_classes)
        for j in pred.gating.selected:
            manual += pred.gating.weights[j] * pred.expert_probs[j]
        np.testing.assert_allclose(pred.probs, manual, atol=1e-14)
        assert pred.probs.sum() == pytest.approx(1.0, abs=1e-9)

    def test_batch_matches_single(self):
        model, warm, docs, corpus, cfg = tiny_model(num_experts=3, top_k=2)
        batch = predict_documents(model, docs[:10])
        for i, doc in enumerate(docs[:10]):
            np.testing.assert_allclose(batch[i], predict(model, doc).probs, atol=1e-12)

    def test_permutation_equivariance(self):
        model, warm, docs, corpus, cfg = tiny_model(num_experts=3, top_k=2)
        perm = [2, 0, 1]
        permuted = ClusterModel(
            centroids=model.clusters.centroids[perm],
            assignments=model.clusters.assignments,
            inertia=model.clusters.inertia,
            iterations_run=model.clusters.iterations_run,
            inertia_history=model.clusters.inertia_history,
        )
        from mote.model import MoTEModel
        from mote.numerics import Parameter

        shuffled = MoTEModel(
            encoder=model.encoder,
            clusters=permuted,
            router=RouterParams(gate_weights=Parameter(model.router.gate_weights.value[:, perm])),
            experts=[model.experts[j] for j in perm],
            top_k=model.top_k,
            num_classes=model.num_classes,
        )
        for doc in docs[:10]:
            np.testing.assert_allclose(
                predict(model, doc).probs, predict(shuffled, doc).probs, atol=1e-12
            )

    def test_literal_gating_uses_prefactor(self):
        model, warm, docs, corpus, cfg = tiny_model(num_experts=2, top_k=2)
        literal = predict(model, docs[0])
        model.literal_gating = True
        pred = predict(model, docs[0])
        soft = softmax_rows(
            encode_documents([docs[0]], model.encoder)[0] @ model.router.gate_weights.value
        )
        manual = np.zeros(model.num_classes)
        for j in pred.gating.selected:
            manual += soft[j] * pred.expert_probs[j]
        np.testing.assert_allclose(pred.probs, manual / model.top_k, atol=1e-12)
        assert not np.allclose(pred.probs, literal.probs)


class TestAblationModes:
    def test_no_router_single_expert_dispatch(self):
        cfg = TrainConfig(source_epochs=1, warmup_epochs=0, adapt_epochs=2,
                          learning_rate=0.01, batch_size=16, no_router=True)
        model, warm, docs, corpus, _ = tiny_model(num_experts=3, top_k=2, cfg=cfg)
        train_adaptation(model, docs, cfg, seed=1)
        for doc in docs[:10]:
            pred = predict(model, doc)
            assert len(pred.gating.selected) == 1
            assert pred.gating.weights.sum() == pytest.approx(1.0)
            assert predict(model, doc).gating.selected == pred.gating.selected
        counts = count_expert_assignments(model, docs)
        assert counts.sum() == len(docs)
        assert (counts > 0).all()  # dispatch spreads across experts

    def test_no_evaluator_zeroes_shift(self):
        cfg = TrainConfig(source_epochs=1, warmup_epochs=2, adapt_epochs=2,
                          learning_rate=0.01, batch_size=16, no_evaluator=True)
        model, warm, docs, corpus, _ = tiny_model(num_experts=2, top_k=2, cfg=cfg)
        doc = docs[0]
        pred = predict(model, doc)
        z = encode_documents([doc], model.encoder)[0]
        for j in pred.gating.selected:
            np.testing.assert_allclose(
                pred.expert_probs[j],
                expert_forward(z, np.zeros_like(z), model.experts[j]).probs,
                atol=1e-14,
            )


class TestDeterminismAndCheckpoints:
    def build_trained(self, seed=5):
        cfg = TrainConfig(source_epochs=2, warmup_epochs=2, adapt_epochs=2,
                          learning_rate=0.01, batch_size=16)
        model, warm, docs, corpus, _ = tiny_model(seed=seed, num_experts=2, cfg=cfg)
        warmup_router(model, warm, cfg, seed=seed)
        train_adaptation(model, docs, cfg, seed=seed)
        return model, docs

    def test_end_to_end_determinism(self):
        a, docs_a = self.build_trained()
        b, docs_b = self.build_trained()
        np.testing.assert_array_equal(
            a.router.gate_weights.value, b.router.gate_weights.value
        )
        np.testing.assert_array_equal(
            predict_documents(a, docs_a[:20]), predict_documents(b, docs_b[:20])
        )

    def test_checkpoint_round_trip(self, tmp_path):
        model, docs = self.build_trained()
        save_checkpoint(model, tmp_path / "ckpt")
        loaded = load_checkpoint(tmp_path / "ckpt")
        np.testing.assert_allclose(
            predict_documents(model, docs[:20]), predict_documents(loaded, docs[:20]), atol=1e-12
        )
        assert loaded.top_k == model.top_k
        assert loaded.num_classes == model.num_classes
        assert loaded.aux_weight == model.aux_weight

    def test_assignment_counts_cover_selected_sets(self):
        model, docs = self.build_trained()
        counts = count_expert_assignments(model, docs[:40])
        assert counts.sum() == 40 * model.top_k
