"""Dense float64 kernels with reverse-mode gradients and an AdamW optimizer.

Every trainable piece of this package (encoder, router, experts, baseline
heads) is composed from the handful of operations here, so one
finite-difference harness can certify all of their gradients.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

PROB_FLOOR = 1e-12

__all__ = [
    "PROB_FLOOR",
    "ShapeError",
    "Tensor",
    "Parameter",
    "OptimizerConfig",
    "affine_forward",
    "softmax_rows",
    "cross_entropy",
    "cross_entropy_loss",
    "concat_cols",
    "adamw_step",
    "finite_diff_check",
]


class ShapeError(ValueError):
    """Operand shapes do not conform."""


def _as_array(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum `grad` down to `shape`, undoing numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _add_grad(t: "Tensor", g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    g = _unbroadcast(g, t.data.shape)
    if t.grad is None:
        t.grad = g.copy()
    else:
        t.grad = t.grad + g


class Tensor:
    """Node in a dynamically built computation graph over float64 arrays.

    Leaves created with ``requires_grad=True`` accumulate into ``.grad``
    across ``backward()`` calls until explicitly cleared; everything else is
    rebuilt per forward pass.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, parents=(), backward=None):
        self.data = _as_array(data)
        self.grad: np.ndarray | None = None
        needy = tuple(p for p in parents if p.requires_grad)
        self.requires_grad = requires_grad or bool(needy)
        self._parents = needy
        self._backward = backward if needy else None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    # -- graph construction -------------------------------------------------

    def __add__(self, other):
        other = _ensure_tensor(other)
        out_data = self.data + other.data

        def backward(g):
            _add_grad(self, g)
            _add_grad(other, g)

        return Tensor(out_data, parents=(self, other), backward=backward)

    __radd__ = __add__

    def __neg__(self):
        def backward(g):
            _add_grad(self, -g)

        return Tensor(-self.data, parents=(self,), backward=backward)

    def __sub__(self, other):
        other = _ensure_tensor(other)
        out_data = self.data - other.data

        def backward(g):
            _add_grad(self, g)
            _add_grad(other, -g)

        return Tensor(out_data, parents=(self, other), backward=backward)

    def __rsub__(self, other):
        return _ensure_tensor(other) - self

    def __mul__(self, other):
        other = _ensure_tensor(other)
        out_data = self.data * other.data

        def backward(g):
            _add_grad(self, g * other.data)
            _add_grad(other, g * self.data)

        return Tensor(out_data, parents=(self, other), backward=backward)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = _ensure_tensor(other)
        out_data = self.data / other.data

        def backward(g):
            _add_grad(self, g / other.data)
            _add_grad(other, -g * self.data / (other.data * other.data))

        return Tensor(out_data, parents=(self, other), backward=backward)

    def __matmul__(self, other):
        other = _ensure_tensor(other)
        a, b = self.data, other.data
        if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
            raise ShapeError(f"matmul: left {a.shape} does not conform with right {b.shape}")
        out_data = a @ b

        def backward(g):
            _add_grad(self, g @ b.T)
            _add_grad(other, a.T @ g)

        return Tensor(out_data, parents=(self, other), backward=backward)

    def tanh(self):
        out_data = np.tanh(self.data)

        def backward(g):
            _add_grad(self, g * (1.0 - out_data * out_data))

        return Tensor(out_data, parents=(self,), backward=backward)

    def log(self):
        def backward(g):
            _add_grad(self, g / self.data)

        return Tensor(np.log(self.data), parents=(self,), backward=backward)

    def clamp_min(self, floor: float):
        out_data = np.maximum(self.data, floor)
        pass_through = self.data > floor

        def backward(g):
            _add_grad(self, g * pass_through)

        return Tensor(out_data, parents=(self,), backward=backward)

    def sum(self, axis=None, keepdims: bool = False):
        out_data = self.data.sum(axis=axis, keepdims=keepdims)
        in_shape = self.data.shape

        def backward(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            _add_grad(self, np.broadcast_to(g, in_shape))

        return Tensor(out_data, parents=(self,), backward=backward)

    def mean(self, axis=None, keepdims: bool = False):
        count = self.data.size if axis is None else self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    def softmax_rows(self):
        out_data = softmax_rows(self.data)

        def backward(g):
            dot = (g * out_data).sum(axis=-1, keepdims=True)
            _add_grad(self, (g - dot) * out_data)

        return Tensor(out_data, parents=(self,), backward=backward)

    def pick_cols(self, indices):
        """Per-row column gather: out[i, 0] = self[i, indices[i]]."""
        idx = np.asarray(indices, dtype=int)
        n, c = self.data.shape
        if idx.shape != (n,):
            raise ShapeError(f"pick_cols: need {n} indices, got shape {idx.shape}")
        if idx.min(initial=0) < 0 or idx.max(initial=-1) >= c:
            raise IndexError(f"pick_cols: class index out of range [0, {c})")
        rows = np.arange(n)
        out_data = self.data[rows, idx].reshape(n, 1)

        def backward(g):
            scatter = np.zeros((n, c))
            np.add.at(scatter, (rows, idx), g[:, 0])
            _add_grad(self, scatter)

        return Tensor(out_data, parents=(self,), backward=backward)

    # -- backward pass ------------------------------------------------------

    def backward(self) -> None:
        if self.data.size != 1:
            raise ValueError("backward() expects a scalar loss")
        order: list[Tensor] = []
        visited = {id(self)}
        stack = [(self, iter(self._parents))]
        while stack:
            node, parents = stack[-1]
            entered = False
            for p in parents:
                if id(p) not in visited:
                    visited.add(id(p))
                    stack.append((p, iter(p._parents)))
                    entered = True
                    break
            if not entered:
                order.append(node)
                stack.pop()
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def item(self) -> float:
        return float(self.data.reshape(()))


def _ensure_tensor(v) -> Tensor:
    if isinstance(v, Tensor):
        return v
    if isinstance(v, Parameter):
        return v.node
    return Tensor(v)


def concat_cols(tensors: Sequence[Tensor]) -> Tensor:
    """Column-wise concatenation of 2-D tensors with matching row counts."""
    tensors = [_ensure_tensor(t) for t in tensors]
    rows = {t.data.shape[0] for t in tensors}
    if len(rows) != 1:
        raise ShapeError(f"concat_cols: row counts differ: {[t.shape for t in tensors]}")
    out_data = np.concatenate([t.data for t in tensors], axis=1)
    widths = [t.data.shape[1] for t in tensors]
    offsets = np.cumsum([0] + widths)

    def backward(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            _add_grad(t, g[:, lo:hi])

    return Tensor(out_data, parents=tuple(tensors), backward=backward)


class Parameter:
    """Trainable leaf: value, accumulated gradient, and AdamW moment state."""

    def __init__(self, value):
        self.node = Tensor(value, requires_grad=True)
        self.m = np.zeros_like(self.node.data)
        self.v = np.zeros_like(self.node.data)
        self.step = 0

    @property
    def value(self) -> np.ndarray:
        return self.node.data

    @value.setter
    def value(self, new) -> None:
        self.node.data = _as_array(new)

    @property
    def grad(self) -> np.ndarray | None:
        return self.node.grad

    def zero_grad(self) -> None:
        self.node.grad = None

    def copy(self) -> "Parameter":
        dup = Parameter(self.value.copy())
        dup.m = self.m.copy()
        dup.v = self.v.copy()
        dup.step = self.step
        return dup


@dataclass(frozen=True)
class OptimizerConfig:
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not (0.0 < self.beta1 < 1.0 and 0.0 < self.beta2 < 1.0):
            raise ValueError("beta1 and beta2 must lie in (0, 1)")
        if self.eps <= 0:
            raise ValueError("eps must be positive")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be non-negative")


def affine_forward(x, w, b) -> Tensor:
    """x @ w + b with b broadcast across rows."""
    x, w, b = _ensure_tensor(x), _ensure_tensor(w), _ensure_tensor(b)
    if x.data.ndim != 2 or w.data.ndim != 2 or x.data.shape[1] != w.data.shape[0]:
        raise ShapeError(
            f"affine: input {x.data.shape} does not conform with weight {w.data.shape}"
        )
    if b.data.reshape(-1).shape[0] != w.data.shape[1]:
        raise ShapeError(
            f"affine: bias {b.data.shape} does not conform with weight {w.data.shape}"
        )
    return (x @ w) + b


def softmax_rows(x) -> np.ndarray:
    """Row-wise softmax with per-row max subtraction for stability."""
    x = _as_array(x)
    shifted = x - x.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy(pred_probs, true_classes) -> float:
    """Mean negative log-probability of the true class.

    Probabilities are clamped below at PROB_FLOOR before the logarithm.
    """
    p = _as_array(pred_probs)
    if p.ndim == 1:
        p = p.reshape(1, -1)
    idx = np.asarray(true_classes, dtype=int).reshape(-1)
    if idx.shape[0] != p.shape[0]:
        raise ShapeError(f"cross_entropy: {p.shape[0]} rows but {idx.shape[0]} labels")
    if idx.min(initial=0) < 0 or idx.max(initial=-1) >= p.shape[1]:
        raise IndexError(f"cross_entropy: class index out of range [0, {p.shape[1]})")
    picked = p[np.arange(p.shape[0]), idx]
    return float(np.mean(-np.log(np.maximum(picked, PROB_FLOOR))))


def cross_entropy_loss(probs: Tensor, true_classes) -> Tensor:
    """Tape version of cross_entropy, for training."""
    picked = probs.pick_cols(true_classes)
    return -(picked.clamp_min(PROB_FLOOR).log().mean())


def adamw_step(param: Parameter, cfg: OptimizerConfig) -> None:
    """Bias-corrected Adam moment update followed by decoupled weight decay."""
    g = param.grad
    if g is None:
        raise ValueError("adamw_step: gradient not populated")
    param.step += 1
    param.m = cfg.beta1 * param.m + (1.0 - cfg.beta1) * g
    param.v = cfg.beta2 * param.v + (1.0 - cfg.beta2) * g * g
    m_hat = param.m / (1.0 - cfg.beta1**param.step)
    v_hat = param.v / (1.0 - cfg.beta2**param.step)
    param.value -= cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.eps)
    if cfg.weight_decay:
        param.value -= cfg.learning_rate * cfg.weight_decay * param.value
    if not np.all(np.isfinite(param.value)):
        raise FloatingPointError("adamw_step produced a non-finite parameter value")


def finite_diff_check(
    loss_fn: Callable[[], float], param: Parameter, h: float = 1e-5
) -> float:
    """Compare param.grad against central finite differences of loss_fn.

    loss_fn must recompute the scalar loss from the parameter's current
    value; the analytic gradient is read from param.grad (missing gradient
    counts as zero). Returns max over entries of
    |analytic - central difference| / max(1, |analytic|).
    """
    analytic = param.grad if param.grad is not None else np.zeros_like(param.value)
    flat_value = param.value.reshape(-1)
    flat_grad = analytic.reshape(-1)
    worst = 0.0
    for i in range(flat_value.size):
        orig = flat_value[i]
        flat_value[i] = orig + h
        plus = float(loss_fn())
        flat_value[i] = orig - h
        minus = float(loss_fn())
        flat_value[i] = orig
        fd = (plus - minus) / (2.0 * h)
        rel = abs(flat_grad[i] - fd) / max(1.0, abs(flat_grad[i]))
        worst = max(worst, rel)
    return worst
