"""Hashed bag-of-tokens feature encoder.

Tokens are hashed into a fixed number of buckets (64-bit FNV-1a), bucket
counts are mean-pooled, projected, and squashed with tanh. The encoder is
trained jointly with the source classifier and then frozen; precomputed
representation files can be loaded in its place.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import Document
from .numerics import Parameter, ShapeError, Tensor, affine_forward

__all__ = [
    "EncoderError",
    "EncoderParams",
    "fnv1a_64",
    "hash_token",
    "bag_matrix",
    "init_encoder",
    "encode",
    "encode_batch",
    "encode_documents",
    "load_precomputed",
    "save_precomputed",
]

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF


class EncoderError(ValueError):
    pass


def fnv1a_64(data: bytes) -> int:
    """64-bit FNV-1a digest; platform independent."""
    h = _FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * _FNV_PRIME) & _MASK64
    return h


def hash_token(token: str, buckets: int) -> int:
    if not token:
        raise EncoderError("cannot hash an empty token")
    if buckets <= 0:
        raise EncoderError("bucket count must be positive")
    return fnv1a_64(token.encode("utf-8")) % buckets


@dataclass
class EncoderParams:
    """Trainable encoder: hashed embedding table plus a tanh projection."""

    embedding: Parameter  # buckets x d_emb
    projection: Parameter  # d_emb x d
    bias: Parameter  # 1 x d
    buckets: int
    nonlinearity: str = "tanh"

    @property
    def width(self) -> int:
        return self.projection.value.shape[1]

    def parameters(self) -> list[Parameter]:
        return [self.embedding, self.projection, self.bias]


def init_encoder(buckets: int, d_emb: int, d: int, rng: np.random.Generator) -> EncoderParams:
    embedding = Parameter(rng.normal(0.0, 1.0, size=(buckets, d_emb)))
    projection = Parameter(rng.normal(0.0, 1.0 / np.sqrt(d_emb), size=(d_emb, d)))
    bias = Parameter(np.zeros((1, d)))
    return EncoderParams(embedding=embedding, projection=projection, bias=bias, buckets=buckets)


def bag_matrix(documents, buckets: int) -> np.ndarray:
    """Mean-pooled bucket-count rows, one per document."""
    out = np.zeros((len(documents), buckets))
    for i, doc in enumerate(documents):
        if not doc.tokens:
            raise EncoderError(f"document {doc.id!r} has no tokens")
        for token in doc.tokens:
            out[i, hash_token(token, buckets)] += 1.0
        out[i] /= len(doc.tokens)
    return out


def encode_batch(bag, params: EncoderParams) -> Tensor:
    """Tape path: tanh((bag @ embedding) @ projection + bias)."""
    bag = bag if isinstance(bag, Tensor) else Tensor(bag)
    if bag.data.shape[1] != params.buckets:
        raise ShapeError(
            f"bag width {bag.data.shape[1]} does not match bucket count {params.buckets}"
        )
    pooled = bag @ params.embedding.node
    return affine_forward(pooled, params.projection, params.bias).tanh()


def encode_documents(documents, params: EncoderParams) -> np.ndarray:
    """Frozen-encoder representations, shape (n, d)."""
    return encode_batch(bag_matrix(documents, params.buckets), params).data


def encode(doc: Document, params: EncoderParams) -> np.ndarray:
    """Representation of one document, shape (d,)."""
    return encode_documents([doc], params)[0]


def load_precomputed(path: str | Path) -> dict[str, np.ndarray]:
    """Read `id v1 .. vd` rows; widths must agree and ids must be unique."""
    path = Path(path)
    if not path.exists():
        raise EncoderError(f"precomputed-vector file not found: {path}")
    vectors: dict[str, np.ndarray] = {}
    width = None
    with path.open(encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) < 2:
                raise EncoderError(f"{path}:{lineno}: expected an id and at least one value")
            doc_id, values = parts[0], parts[1:]
            if width is None:
                width = len(values)
            elif len(values) != width:
                raise EncoderError(
                    f"{path}:{lineno}: row width {len(values)} differs from {width}"
                )
            if doc_id in vectors:
                raise EncoderError(f"{path}:{lineno}: duplicate id {doc_id!r}")
            try:
                vectors[doc_id] = np.array([float(v) for v in values])
            except ValueError as exc:
                raise EncoderError(f"{path}:{lineno}: non-numeric value") from exc
    return vectors


def save_precomputed(vectors: dict[str, np.ndarray], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for doc_id, vec in vectors.items():
            rendered = " ".join(f"{v:.12g}" for v in np.asarray(vec).reshape(-1))
            fh.write(f"{doc_id} {rendered}\n")
