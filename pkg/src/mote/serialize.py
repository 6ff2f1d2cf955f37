"""Plain-text matrix dumps shared by checkpoints and report artifacts."""

from __future__ import annotations

from pathlib import Path

import numpy as np

__all__ = ["write_matrix", "read_matrix"]


def write_matrix(arr: np.ndarray, path: str | Path) -> None:
    """One matrix row per line, space-separated reals."""
    arr = np.atleast_2d(np.asarray(arr, dtype=float))
    with Path(path).open("w", encoding="utf-8") as fh:
        for row in arr:
            fh.write(" ".join(f"{v:.17g}" for v in row) + "\n")


def read_matrix(path: str | Path) -> np.ndarray:
    rows = []
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rows.append([float(v) for v in line.split()])
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: non-numeric matrix entry") from exc
    if not rows or any(len(r) != len(rows[0]) for r in rows):
        raise ValueError(f"{path}: empty or ragged matrix")
    return np.asarray(rows)
