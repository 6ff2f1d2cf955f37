"""Top-K gated routing over temporal experts, with a load-balancing penalty.

The gate keeps the K largest softmax weights (ties to the lowest index),
zeroes the rest, and by default renormalizes the kept weights so expert
outputs are mixed by a convex combination. The load-balancing loss is the
squared coefficient of variation of per-expert total routing weight.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import Parameter, ShapeError, Tensor, softmax_rows

__all__ = [
    "RouterParams",
    "GatingVector",
    "init_router",
    "topk_mask",
    "gate_from_logits",
    "gate",
    "gate_batch",
    "load_balance_loss",
    "load_balance_loss_t",
]


@dataclass
class RouterParams:
    gate_weights: Parameter  # d x T

    @property
    def num_experts(self) -> int:
        return self.gate_weights.value.shape[1]

    @property
    def width(self) -> int:
        return self.gate_weights.value.shape[0]

    def parameters(self) -> list[Parameter]:
        return [self.gate_weights]


@dataclass(frozen=True)
class GatingVector:
    weights: np.ndarray  # (T,), zero outside the selected set
    selected: tuple[int, ...]


def init_router(d: int, num_experts: int, rng: np.random.Generator) -> RouterParams:
    return RouterParams(gate_weights=Parameter(rng.normal(0.0, 0.01, size=(d, num_experts))))


def _check_k(k: int, num_experts: int) -> None:
    if not 1 <= k <= num_experts:
        raise ValueError(f"top-K size {k} out of range [1, {num_experts}]")


def topk_mask(weights: np.ndarray, k: int) -> np.ndarray:
    """Row-wise 0/1 mask of the K largest entries; ties keep the lowest index."""
    weights = np.atleast_2d(weights)
    _check_k(k, weights.shape[1])
    order = np.argsort(-weights, axis=1, kind="stable")
    mask = np.zeros_like(weights)
    rows = np.arange(weights.shape[0])[:, None]
    mask[rows, order[:, :k]] = 1.0
    return mask


def gate_from_logits(logits: np.ndarray, k: int, renormalize: bool = True) -> GatingVector:
    logits = np.asarray(logits, dtype=float).reshape(-1)
    _check_k(k, logits.shape[0])
    soft = softmax_rows(logits)
    selected = np.sort(np.argsort(-soft, kind="stable")[:k])
    weights = np.zeros_like(soft)
    kept = soft[selected]
    weights[selected] = kept / kept.sum() if renormalize else kept
    return GatingVector(weights=weights, selected=tuple(int(j) for j in selected))


def gate(z, router: RouterParams, k: int, renormalize: bool = True) -> GatingVector:
    """Route one representation: softmax(z @ W_g) truncated to its top K."""
    z = np.asarray(z, dtype=float).reshape(-1)
    if z.shape[0] != router.width:
        raise ShapeError(
            f"representation width {z.shape[0]} does not match router width {router.width}"
        )
    return gate_from_logits(z @ router.gate_weights.value, k, renormalize=renormalize)


def gate_batch(z: Tensor, router: RouterParams, k: int, renormalize: bool = True) -> Tensor:
    """Tape version over a batch; returns the (n, T) sparse gate matrix.

    The top-K selection is treated as locally constant, so gradients flow
    only through the kept softmax entries.
    """
    soft = (z @ router.gate_weights.node).softmax_rows()
    mask = Tensor(topk_mask(soft.data, k))
    masked = soft * mask
    if not renormalize:
        return masked
    return masked / masked.sum(axis=1, keepdims=True)


def _importance_cv2(importance: np.ndarray) -> float:
    mean = importance.mean()
    if mean == 0.0:
        raise ValueError("all-zero importance; gates carry no weight")
    var = ((importance - mean) ** 2).mean()
    return float(var / (mean * mean))


def load_balance_loss(gates) -> float:
    """Squared coefficient of variation of per-expert importance.

    `gates` is a batch of GatingVector or an (n, T) weight matrix;
    importance of expert e is the total routing weight it receives.
    """
    if isinstance(gates, np.ndarray):
        matrix = np.atleast_2d(gates)
    else:
        gates = list(gates)
        if not gates:
            raise ValueError("empty gate batch")
        matrix = np.stack([g.weights for g in gates])
    return _importance_cv2(matrix.sum(axis=0))


def load_balance_loss_t(gates: Tensor) -> Tensor:
    """Tape version of load_balance_loss for an (n, T) gate matrix."""
    importance = gates.sum(axis=0)
    mean = importance.mean()
    centered = importance - mean
    return (centered * centered).mean() / (mean * mean)
