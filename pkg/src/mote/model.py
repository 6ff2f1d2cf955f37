"""Mixture-of-temporal-experts lifecycle.

Build order: encode source documents with a frozen encoder, cluster the
representations (one cluster per source era), warm the router up on cluster
labels, then jointly train router and experts on labeled source data with
cross-entropy plus a weighted load-balancing penalty. Inference mixes the
top-K experts' probabilities with the gate weights.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from .clustering import ClusterModel, WarmupDataset, build_warmup_dataset, fit_clusters
from .corpus import Document
from .encoder import (
    EncoderParams,
    bag_matrix,
    encode,
    encode_batch,
    encode_documents,
    fnv1a_64,
    init_encoder,
)
from .experts import ExpertParams, expert_forward, expert_forward_batch, init_expert
from .numerics import (
    OptimizerConfig,
    Parameter,
    Tensor,
    adamw_step,
    cross_entropy_loss,
)
from .router import GatingVector, RouterParams, gate, gate_batch, init_router, load_balance_loss_t

__all__ = [
    "ModelDims",
    "TrainConfig",
    "MoTEModel",
    "Prediction",
    "AdaptationLoss",
    "build_mote",
    "warmup_router",
    "train_adaptation",
    "adaptation_loss",
    "predict",
    "predict_documents",
    "count_expert_assignments",
    "save_checkpoint",
    "load_checkpoint",
]


@dataclass(frozen=True)
class ModelDims:
    d: int = 32
    d_emb: int = 32
    hash_buckets: int = 4096
    d_hidden: int = 64


@dataclass(frozen=True)
class TrainConfig:
    warmup_epochs: int = 20
    adapt_epochs: int = 20
    source_epochs: int = 20
    batch_size: int = 32
    learning_rate: float = 1e-4  # router warmup and expert training
    source_learning_rate: float = 5e-3
    seeds: tuple[int, ...] = (41, 42, 43)
    no_warmup: bool = False
    no_router: bool = False
    no_evaluator: bool = False
    unfreeze_encoder: bool = False

    def __post_init__(self):
        if min(self.warmup_epochs, self.adapt_epochs, self.source_epochs) < 0:
            raise ValueError("epoch counts must be non-negative")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")


@dataclass
class MoTEModel:
    encoder: EncoderParams
    clusters: ClusterModel
    router: RouterParams
    experts: list[ExpertParams]
    top_k: int
    num_classes: int
    aux_weight: float = 0.01
    literal_gating: bool = False
    router_disabled: bool = False
    shift_disabled: bool = False
    dispatch_seed: int = 0
    loss_trace: list[float] = field(default_factory=list)

    def __post_init__(self):
        if len(self.experts) != self.clusters.num_clusters:
            raise ValueError("expert count must equal cluster count")
        if not 1 <= self.top_k <= len(self.experts):
            raise ValueError(f"top_k {self.top_k} out of range [1, {len(self.experts)}]")
        if self.aux_weight < 0:
            raise ValueError("aux_weight must be non-negative")

    @property
    def num_experts(self) -> int:
        return len(self.experts)

    def trainable_parameters(self, include_router: bool = True) -> list[Parameter]:
        params: list[Parameter] = []
        if include_router and not self.router_disabled:
            params.extend(self.router.parameters())
        for expert in self.experts:
            params.extend(expert.parameters())
        return params


@dataclass(frozen=True)
class Prediction:
    probs: np.ndarray
    gating: GatingVector
    expert_probs: dict[int, np.ndarray]

    @property
    def label(self) -> int:
        return int(np.argmax(self.probs))


class AdaptationLoss(NamedTuple):
    total: Tensor
    cross_entropy: Tensor
    balance: Tensor | None
    gates: Tensor


def build_mote(
    encoder: EncoderParams,
    source_docs: Sequence[Document],
    num_experts: int,
    top_k: int,
    num_classes: int,
    seed: int,
    aux_weight: float = 0.01,
    literal_gating: bool = False,
    cfg: TrainConfig | None = None,
    d_hidden: int | None = None,
) -> tuple[MoTEModel, WarmupDataset]:
    """Cluster source representations and assemble an untrained MoTE model."""
    cfg = cfg or TrainConfig()
    reps = encode_documents(source_docs, encoder)
    clusters = fit_clusters(reps, num_experts, seed=seed)
    warmup = build_warmup_dataset(reps, clusters)
    rng = np.random.default_rng([seed, 2])
    d = reps.shape[1]
    router = init_router(d, num_experts, rng)
    experts = [
        init_expert(d, d_hidden or 2 * d, num_classes, rng) for _ in range(num_experts)
    ]
    model = MoTEModel(
        encoder=encoder,
        clusters=clusters,
        router=router,
        experts=experts,
        top_k=top_k,
        num_classes=num_classes,
        aux_weight=aux_weight,
        literal_gating=literal_gating,
        router_disabled=cfg.no_router,
        shift_disabled=cfg.no_evaluator,
        dispatch_seed=seed,
    )
    return model, warmup


def _batches(order: np.ndarray, batch_size: int):
    for start in range(0, order.shape[0], batch_size):
        yield order[start : start + batch_size]


def warmup_router(
    model: MoTEModel, warmup: WarmupDataset, cfg: TrainConfig, seed: int
) -> RouterParams:
    """Train the router to reproduce cluster labels (dense softmax, no top-K)."""
    if len(warmup) == 0:
        raise ValueError("empty warmup dataset")
    labels = np.asarray(warmup.labels, dtype=int)
    if labels.min() < 0 or labels.max() >= model.num_experts:
        raise ValueError("warmup labels out of range")
    opt = OptimizerConfig(learning_rate=cfg.learning_rate)
    rng = np.random.default_rng([seed, 3])
    weights = model.router.gate_weights
    for _ in range(cfg.warmup_epochs):
        order = rng.permutation(len(warmup))
        for chunk in _batches(order, cfg.batch_size):
            weights.zero_grad()
            z = Tensor(warmup.representations[chunk])
            probs = (z @ weights.node).softmax_rows()
            loss = cross_entropy_loss(probs, labels[chunk])
            loss.backward()
            adamw_step(weights, opt)
    return model.router


def _dispatch_expert(model: MoTEModel, doc_id: str) -> int:
    """Seeded uniform-random single-expert dispatch for the no-router mode."""
    return fnv1a_64(f"{model.dispatch_seed}:{doc_id}".encode()) % model.num_experts


def _unit_column(size: int, j: int) -> np.ndarray:
    col = np.zeros((size, 1))
    col[j, 0] = 1.0
    return col


def adaptation_loss(
    model: MoTEModel,
    z: Tensor | np.ndarray,
    labels: np.ndarray,
    dispatch: np.ndarray | None = None,
) -> AdaptationLoss:
    """One batch of the adaptation objective: CE + aux_weight * balance.

    `dispatch` forces one expert per row (router-disabled mode); the balance
    term is then skipped because there are no gate weights to balance.
    """
    zt = z if isinstance(z, Tensor) else Tensor(z)
    n = zt.data.shape[0]
    num_experts = model.num_experts
    if dispatch is None:
        gates = gate_batch(zt, model.router, model.top_k, renormalize=not model.literal_gating)
    else:
        onehot = np.zeros((n, num_experts))
        onehot[np.arange(n), dispatch] = 1.0
        gates = Tensor(onehot)
    mixture = None
    for j, expert in enumerate(model.experts):
        if model.shift_disabled:
            shift = Tensor(np.zeros_like(zt.data))
        else:
            shift = zt - Tensor(model.clusters.centroids[j].reshape(1, -1))
        probs_j = expert_forward_batch(zt, shift, expert)
        weight_col = gates @ Tensor(_unit_column(num_experts, j))
        term = weight_col * probs_j
        mixture = term if mixture is None else mixture + term
    if model.literal_gating and dispatch is None:
        mixture = mixture * (1.0 / model.top_k)
    ce = cross_entropy_loss(mixture, labels)
    balance = None
    total = ce
    if dispatch is None and model.aux_weight > 0:
        balance = load_balance_loss_t(gates)
        total = ce + balance * model.aux_weight
    return AdaptationLoss(total=total, cross_entropy=ce, balance=balance, gates=gates)


def train_adaptation(
    model: MoTEModel, documents: Sequence[Document], cfg: TrainConfig, seed: int
) -> MoTEModel:
    """Joint router/expert training on labeled documents; encoder stays frozen
    unless cfg.unfreeze_encoder. Mean epoch losses are recorded on the model."""
    if not documents:
        raise ValueError("no documents to adapt on")
    labels = np.array([doc.label for doc in documents], dtype=int)
    if labels.max() >= model.num_classes:
        raise IndexError(
            f"label {labels.max()} out of range for {model.num_classes} classes"
        )
    params = model.trainable_parameters()
    if cfg.unfreeze_encoder:
        params = params + model.encoder.parameters()
        bags = bag_matrix(documents, model.encoder.buckets)
        reps = None
    else:
        bags = None
        reps = encode_documents(documents, model.encoder)
    dispatch_all = (
        np.array([_dispatch_expert(model, doc.id) for doc in documents])
        if model.router_disabled
        else None
    )
    opt = OptimizerConfig(learning_rate=cfg.learning_rate)
    rng = np.random.default_rng([seed, 4])
    model.loss_trace = []
    for _ in range(cfg.adapt_epochs):
        order = rng.permutation(len(documents))
        epoch_losses = []
        for chunk in _batches(order, cfg.batch_size):
            for p in params:
                p.zero_grad()
            if reps is not None:
                zt: Tensor | np.ndarray = reps[chunk]
            else:
                zt = encode_batch(bags[chunk], model.encoder)
            dispatch = dispatch_all[chunk] if dispatch_all is not None else None
            terms = adaptation_loss(model, zt, labels[chunk], dispatch=dispatch)
            terms.total.backward()
            for p in params:
                adamw_step(p, opt)
            epoch_losses.append(terms.total.item())
        model.loss_trace.append(float(np.mean(epoch_losses)))
    return model


def predict(model: MoTEModel, doc: Document) -> Prediction:
    """Mix the selected experts' probabilities with the gate weights."""
    z = encode(doc, model.encoder)
    if model.router_disabled:
        j = _dispatch_expert(model, doc.id)
        weights = np.zeros(model.num_experts)
        weights[j] = 1.0
        gating = GatingVector(weights=weights, selected=(j,))
    else:
        gating = gate(z, model.router, model.top_k, renormalize=not model.literal_gating)
    probs = np.zeros(model.num_classes)
    expert_probs: dict[int, np.ndarray] = {}
    for j in gating.selected:
        if model.shift_disabled:
            shift = np.zeros_like(z)
        else:
            shift = z - model.clusters.centroids[j]
        out = expert_forward(z, shift, model.experts[j])
        expert_probs[j] = out.probs
        probs = probs + gating.weights[j] * out.probs
    if model.literal_gating and not model.router_disabled:
        probs = probs / model.top_k
    return Prediction(probs=probs, gating=gating, expert_probs=expert_probs)


def predict_documents(model: MoTEModel, documents: Sequence[Document]) -> np.ndarray:
    """Mixture probabilities for many documents, shape (n, C)."""
    z = encode_documents(documents, model.encoder)
    gates = _gate_matrix(model, z, documents)
    mixture = np.zeros((len(documents), model.num_classes))
    for j, expert in enumerate(model.experts):
        shift = np.zeros_like(z) if model.shift_disabled else z - model.clusters.centroids[j]
        probs_j = expert_forward_batch(z, shift, expert).data
        mixture += gates[:, j : j + 1] * probs_j
    if model.literal_gating and not model.router_disabled:
        mixture /= model.top_k
    return mixture


def _gate_matrix(model: MoTEModel, z: np.ndarray, documents) -> np.ndarray:
    if model.router_disabled:
        gates = np.zeros((z.shape[0], model.num_experts))
        for i, doc in enumerate(documents):
            gates[i, _dispatch_expert(model, doc.id)] = 1.0
        return gates
    return gate_batch(Tensor(z), model.router, model.top_k, renormalize=not model.literal_gating).data


def count_expert_assignments(
    model: MoTEModel, documents: Sequence[Document], primary_only: bool = False
) -> np.ndarray:
    """How many documents each expert receives.

    By default every selected expert counts once per document; with
    primary_only, only the highest-weighted expert of each document counts.
    """
    z = encode_documents(documents, model.encoder)
    gates = _gate_matrix(model, z, documents)
    if primary_only:
        return np.bincount(gates.argmax(axis=1), minlength=model.num_experts)
    return (gates > 0).sum(axis=0)


# -- checkpoints -------------------------------------------------------------


def save_checkpoint(model: MoTEModel, directory: str | Path) -> None:
    from .serialize import write_matrix

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest = {
        "num_experts": model.num_experts,
        "top_k": model.top_k,
        "aux_weight": model.aux_weight,
        "width": model.clusters.width,
        "num_classes": model.num_classes,
        "hash_buckets": model.encoder.buckets,
        "literal_gating": int(model.literal_gating),
        "router_disabled": int(model.router_disabled),
        "shift_disabled": int(model.shift_disabled),
        "dispatch_seed": model.dispatch_seed,
    }
    with (directory / "manifest.txt").open("w", encoding="utf-8") as fh:
        for key, value in manifest.items():
            fh.write(f"{key}={value}\n")
    write_matrix(model.encoder.embedding.value, directory / "encoder_embedding.txt")
    write_matrix(model.encoder.projection.value, directory / "encoder_projection.txt")
    write_matrix(model.encoder.bias.value, directory / "encoder_bias.txt")
    write_matrix(model.clusters.centroids, directory / "centroids.txt")
    write_matrix(model.router.gate_weights.value, directory / "router_gate.txt")
    for j, expert in enumerate(model.experts):
        for name in ("w1", "b1", "w2", "b2", "wc", "bc"):
            write_matrix(getattr(expert, name).value, directory / f"expert{j}_{name}.txt")


def load_checkpoint(directory: str | Path) -> MoTEModel:
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
    centroids = read_matrix(directory / "centroids.txt")
    clusters = ClusterModel(
        centroids=centroids,
        assignments=np.empty(0, dtype=int),
        inertia=0.0,
        iterations_run=0,
        inertia_history=(),
    )
    router = RouterParams(gate_weights=Parameter(read_matrix(directory / "router_gate.txt")))
    experts = []
    for j in range(int(manifest["num_experts"])):
        experts.append(
            ExpertParams(
                **{
                    name: Parameter(read_matrix(directory / f"expert{j}_{name}.txt"))
                    for name in ("w1", "b1", "w2", "b2", "wc", "bc")
                }
            )
        )
    return MoTEModel(
        encoder=encoder,
        clusters=clusters,
        router=router,
        experts=experts,
        top_k=int(manifest["top_k"]),
        num_classes=int(manifest["num_classes"]),
        aux_weight=float(manifest["aux_weight"]),
        literal_gating=bool(int(manifest["literal_gating"])),
        router_disabled=bool(int(manifest["router_disabled"])),
        shift_disabled=bool(int(manifest["shift_disabled"])),
        dispatch_seed=int(manifest["dispatch_seed"]),
    )
