"""Comparison methods: source-only training, self-labeling, and
chronological sequential fine-tuning.

All baselines share the encoder+linear-head architecture and never read
target-domain gold labels; self-labeling consumes an unlabeled target pool
and labels it with the source model's own predictions.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .corpus import Document, TimeDomain
from .encoder import EncoderParams, bag_matrix, encode_batch, init_encoder
from .model import ModelDims, TrainConfig
from .numerics import OptimizerConfig, Parameter, adamw_step, affine_forward, cross_entropy_loss

__all__ = [
    "SourceModel",
    "train_source",
    "predict_source_probs",
    "predict_source_labels",
    "self_label_adapt",
    "chronological_train",
    "save_source_checkpoint",
    "load_source_checkpoint",
]


@dataclass
class SourceModel:
    encoder: EncoderParams
    head_w: Parameter  # d x C
    head_b: Parameter  # 1 x C
    num_classes: int
    provenance: tuple[int, ...] = ()  # domain indices trained on, in order
    loss_trace: list[float] = field(default_factory=list)

    def parameters(self) -> list[Parameter]:
        return self.encoder.parameters() + [self.head_w, self.head_b]


def _init_source_model(dims: ModelDims, num_classes: int, rng: np.random.Generator) -> SourceModel:
    encoder = init_encoder(dims.hash_buckets, dims.d_emb, dims.d, rng)
    head_w = Parameter(rng.normal(0.0, 1.0 / np.sqrt(dims.d), size=(dims.d, num_classes)))
    head_b = Parameter(np.zeros((1, num_classes)))
    return SourceModel(encoder=encoder, head_w=head_w, head_b=head_b, num_classes=num_classes)


def _fit(
    model: SourceModel,
    documents: Sequence[Document],
    epochs: int,
    cfg: TrainConfig,
    rng: np.random.Generator,
) -> None:
    """Cross-entropy fine-tuning of encoder and head; fresh optimizer state."""
    labels = np.array([doc.label for doc in documents], dtype=int)
    if labels.max(initial=0) >= model.num_classes:
        raise IndexError(f"label {labels.max()} out of range for {model.num_classes} classes")
    bags = bag_matrix(documents, model.encoder.buckets)
    params = model.parameters()
    for p in params:
        p.m = np.zeros_like(p.value)
        p.v = np.zeros_like(p.value)
        p.step = 0
    opt = OptimizerConfig(learning_rate=cfg.source_learning_rate)
    for _ in range(epochs):
        order = rng.permutation(len(documents))
        epoch_losses = []
        for start in range(0, len(documents), cfg.batch_size):
            chunk = order[start : start + cfg.batch_size]
            for p in params:
                p.zero_grad()
            z = encode_batch(bags[chunk], model.encoder)
            probs = affine_forward(z, model.head_w, model.head_b).softmax_rows()
            loss = cross_entropy_loss(probs, labels[chunk])
            loss.backward()
            for p in params:
                adamw_step(p, opt)
            epoch_losses.append(loss.item())
        if epoch_losses:
            model.loss_trace.append(float(np.mean(epoch_losses)))


def train_source(
    documents: Sequence[Document],
    num_classes: int,
    dims: ModelDims,
    cfg: TrainConfig,
    seed: int,
    provenance: tuple[int, ...] = (),
) -> SourceModel:
    """Encoder and classification head trained jointly on labeled documents."""
    if not documents:
        raise ValueError("no documents to train on")
    rng = np.random.default_rng([seed, 5])
    model = _init_source_model(dims, num_classes, rng)
    model.provenance = provenance
    _fit(model, documents, cfg.source_epochs, cfg, rng)
    return model


def predict_source_probs(model: SourceModel, documents: Sequence[Document]) -> np.ndarray:
    bags = bag_matrix(documents, model.encoder.buckets)
    z = encode_batch(bags, model.encoder)
    return affine_forward(z, model.head_w, model.head_b).softmax_rows().data


def predict_source_labels(model: SourceModel, documents: Sequence[Document]) -> np.ndarray:
    return predict_source_probs(model, documents).argmax(axis=1)


def self_label_adapt(
    source_model: SourceModel,
    source_docs: Sequence[Document],
    target_pool: Sequence[Document],
    cfg: TrainConfig,
    seed: int,
) -> SourceModel:
    """Label the target pool with the source model, then train a new model
    from fresh initialization on gold source data plus the silver pool."""
    if not target_pool:
        raise ValueError("empty target pool")
    silver = predict_source_labels(source_model, target_pool)
    silver_docs = [replace(doc, label=int(lab)) for doc, lab in zip(target_pool, silver)]
    combined = list(source_docs) + silver_docs
    dims = ModelDims(
        d=source_model.encoder.projection.value.shape[1],
        d_emb=source_model.encoder.embedding.value.shape[1],
        hash_buckets=source_model.encoder.buckets,
    )
    return train_source(
        combined,
        source_model.num_classes,
        dims,
        cfg,
        seed,
        provenance=source_model.provenance,
    )


def chronological_train(
    domains: Sequence[TimeDomain],
    num_classes: int,
    dims: ModelDims,
    cfg: TrainConfig,
    seed: int,
) -> SourceModel:
    """Fine-tune through the domains in chronological order, each stage
    starting from the previous stage's weights."""
    if not domains:
        raise ValueError("no domains to train on")
    rng = np.random.default_rng([seed, 5])
    model = _init_source_model(dims, num_classes, rng)
    for domain in domains:
        if domain.size == 0:
            raise ValueError(f"domain {domain.index} is empty")
        _fit(model, domain.documents, cfg.source_epochs, cfg, rng)
        model.provenance = model.provenance + (domain.index,)
    return model


def save_source_checkpoint(model: SourceModel, directory) -> None:
    """Same text-dump layout as the mixture checkpoints."""
    from pathlib import Path

    from .serialize import write_matrix

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    with (directory / "manifest.txt").open("w", encoding="utf-8") as fh:
        fh.write(f"num_classes={model.num_classes}\n")
        fh.write(f"hash_buckets={model.encoder.buckets}\n")
        fh.write(f"provenance={','.join(str(p) for p in model.provenance)}\n")
    write_matrix(model.encoder.embedding.value, directory / "encoder_embedding.txt")
    write_matrix(model.encoder.projection.value, directory / "encoder_projection.txt")
    write_matrix(model.encoder.bias.value, directory / "encoder_bias.txt")
    write_matrix(model.head_w.value, directory / "head_w.txt")
    write_matrix(model.head_b.value, directory / "head_b.txt")


def load_source_checkpoint(directory) -> SourceModel:
    from pathlib import Path

    from .serialize import read_matrix

    directory = Path(directory)
    manifest: dict[str, str] = {}
    with (directory / "manifest.txt").open(encoding="utf-8") as fh:
        for line in fh:
            key, _, value = line.strip().partition("=")
            manifest[key] = value
    encoder = EncoderParams(
        embedding=Parameter(read_matrix(directory / "encoder_embedding.txt")),
        projection=Parameter(read_matrix(directory / "encoder_projection.txt")),
        bias=Parameter(read_matrix(directory / "encoder_bias.txt")),
        buckets=int(manifest["hash_buckets"]),
    )
    provenance = tuple(
        int(p) for p in manifest.get("provenance", "").split(",") if p.strip()
    )
    return SourceModel(
        encoder=encoder,
        head_w=Parameter(read_matrix(directory / "head_w.txt")),
        head_b=Parameter(read_matrix(directory / "head_b.txt")),
        num_classes=int(manifest["num_classes"]),
        provenance=provenance,
    )
