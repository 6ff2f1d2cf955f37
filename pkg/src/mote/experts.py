"""Per-era expert networks.

Each expert is a residual feed-forward block over the document
representation, followed by a classifier that consumes the block output
concatenated with the expert's shift vector, so drift information reaches
the prediction directly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import Parameter, ShapeError, Tensor, affine_forward, concat_cols, softmax_rows

__all__ = ["ExpertParams", "ExpertOutput", "init_expert", "expert_forward", "expert_forward_batch"]


@dataclass
class ExpertParams:
    w1: Parameter  # d x d_hidden
    b1: Parameter  # 1 x d_hidden
    w2: Parameter  # d_hidden x d
    b2: Parameter  # 1 x d
    wc: Parameter  # 2d x C
    bc: Parameter  # 1 x C

    @property
    def width(self) -> int:
        return self.w1.value.shape[0]

    @property
    def num_classes(self) -> int:
        return self.wc.value.shape[1]

    def parameters(self) -> list[Parameter]:
        return [self.w1, self.b1, self.w2, self.b2, self.wc, self.bc]


@dataclass(frozen=True)
class ExpertOutput:
    probs: np.ndarray  # (C,)
    logits: np.ndarray  # (C,)


def init_expert(d: int, d_hidden: int, num_classes: int, rng: np.random.Generator) -> ExpertParams:
    return ExpertParams(
        w1=Parameter(rng.normal(0.0, 1.0 / np.sqrt(d), size=(d, d_hidden))),
        b1=Parameter(np.zeros((1, d_hidden))),
        w2=Parameter(rng.normal(0.0, 1.0 / np.sqrt(d_hidden), size=(d_hidden, d))),
        b2=Parameter(np.zeros((1, d))),
        wc=Parameter(rng.normal(0.0, 1.0 / np.sqrt(2 * d), size=(2 * d, num_classes))),
        bc=Parameter(np.zeros((1, num_classes))),
    )


def expert_forward_batch(z, v, expert: ExpertParams) -> Tensor:
    """Tape path over a batch: softmax(classifier((z + block(z)) concat v))."""
    z = z if isinstance(z, Tensor) else Tensor(z)
    v = v if isinstance(v, Tensor) else Tensor(v)
    d = expert.width
    if z.data.ndim != 2 or z.data.shape[1] != d:
        raise ShapeError(f"expert input width {z.data.shape} does not match block width {d}")
    if v.data.shape != z.data.shape:
        raise ShapeError(
            f"shift-vector shape {v.data.shape} does not match representation shape {z.data.shape}"
        )
    hidden = affine_forward(z, expert.w1, expert.b1).tanh()
    h = z + affine_forward(hidden, expert.w2, expert.b2)
    logits = affine_forward(concat_cols([h, v]), expert.wc, expert.bc)
    return logits.softmax_rows()


def expert_forward(z, v, expert: ExpertParams) -> ExpertOutput:
    """Single-representation forward; v is the shift vector for this expert."""
    z = np.asarray(z, dtype=float).reshape(1, -1)
    v = np.asarray(v, dtype=float).reshape(1, -1)
    if z.shape[1] != expert.width:
        raise ShapeError(f"input width {z.shape[1]} does not match block width {expert.width}")
    if v.shape[1] != z.shape[1]:
        raise ShapeError(
            f"shift-vector width {v.shape[1]} does not match representation width {z.shape[1]}"
        )
    hidden = np.tanh(z @ expert.w1.value + expert.b1.value)
    h = z + (hidden @ expert.w2.value + expert.b2.value)
    logits = np.concatenate([h, v], axis=1) @ expert.wc.value + expert.bc.value
    probs = softmax_rows(logits)
    return ExpertOutput(probs=probs[0], logits=logits[0])
