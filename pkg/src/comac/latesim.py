"""Late-interaction similarity kernel.

Scalar metrics between two reduced token matrices:

  colbert     sum over x tokens of the max dot product against y tokens
  normalized  colbert / |x|
  symmetric   normalized(x, y) + normalized(y, x)
  ssn         symmetric restricted to the masked token subsets

All accumulation happens in float64 with a fixed row-major reduction order,
so results are identical regardless of how cells are scheduled.
"""

from __future__ import annotations

import os
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .embedding import ReducedMatrix
from .errors import EmptyEntry, ShapeError
from .saliency import SelectionMask

METRICS = ("colbert", "normalized", "symmetric", "ssn")


def thread_count() -> int:
    try:
        return max(1, int(os.environ.get("COMAC_THREADS", "1")))
    except ValueError:
        return 1


def _check_pair(x: ReducedMatrix, y: ReducedMatrix) -> None:
    if x.rows.shape[0] == 0 or y.rows.shape[0] == 0:
        raise EmptyEntry("similarity over an empty token matrix")
    if x.rows.shape[1] != y.rows.shape[1]:
        raise ShapeError(
            f"mixed reduced dimensions: {x.rows.shape[1]} vs {y.rows.shape[1]}"
        )


def max_interactions(x_rows: np.ndarray, y_rows: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per x-row max dot product against y rows, with the winning y index.

    Ties break toward the lowest y index, which keeps gradient routing
    deterministic.
    """
    dots = x_rows @ y_rows.T
    winners = np.argmax(dots, axis=1)
    values = dots[np.arange(dots.shape[0]), winners]
    return values, winners


def colbert(x: ReducedMatrix, y: ReducedMatrix) -> float:
    _check_pair(x, y)
    values, _ = max_interactions(x.rows, y.rows)
    return float(np.sum(values))


def normalized(x: ReducedMatrix, y: ReducedMatrix) -> float:
    return colbert(x, y) / x.rows.shape[0]


def symmetric(x: ReducedMatrix, y: ReducedMatrix) -> float:
    return normalized(x, y) + normalized(y, x)


def apply_mask(m: ReducedMatrix, mask: SelectionMask) -> ReducedMatrix:
    positions = np.asarray(mask.kept, dtype=np.intp)
    if positions.size == 0:
        raise EmptyEntry(f"{m.entry_id}: empty selection mask")
    if positions.min() < 0 or positions.max() >= m.rows.shape[0]:
        raise ShapeError(
            f"{m.entry_id}: mask positions {mask.kept} out of range for "
            f"{m.rows.shape[0]} tokens"
        )
    return ReducedMatrix(entry_id=m.entry_id, rows=m.rows[positions])


def ssn(
    x: ReducedMatrix,
    y: ReducedMatrix,
    mask_x: SelectionMask,
    mask_y: SelectionMask,
) -> float:
    """Symmetric normalized similarity over the sampled token subsets."""
    return symmetric(apply_mask(x, mask_x), apply_mask(y, mask_y))


def sim_matrix(
    queries: Sequence[ReducedMatrix],
    docs: Sequence[ReducedMatrix],
    masks: tuple[Sequence[SelectionMask], Sequence[SelectionMask]] | None = None,
    metric: str = "ssn",
) -> np.ndarray:
    """Dense matrix of the scalar metric over every (query, doc) pair."""
    if metric not in METRICS:
        raise ShapeError(f"unknown metric {metric!r}")
    if metric == "ssn":
        if masks is None:
            raise ShapeError("ssn metric requires (query_masks, doc_masks)")
        q_masks, d_masks = masks
        queries = [apply_mask(q, m) for q, m in zip(queries, q_masks)]
        docs = [apply_mask(d, m) for d, m in zip(docs, d_masks)]
        scalar = symmetric
    else:
        scalar = {"colbert": colbert, "normalized": normalized, "symmetric": symmetric}[
            metric
        ]

    out = np.empty((len(queries), len(docs)), dtype=np.float64)

    def fill_row(i: int) -> None:
        q = queries[i]
        for j, d in enumerate(docs):
            out[i, j] = scalar(q, d)

    workers = thread_count()
    if workers > 1 and len(queries) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(fill_row, range(len(queries))))
    else:
        for i in range(len(queries)):
            fill_row(i)
    return out


def mean_over_docs(m: np.ndarray) -> np.ndarray:
    """Average each query's similarities over the document axis."""
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[1] == 0:
        raise ShapeError(f"expected a non-empty 2-D matrix, got shape {m.shape}")
    return np.sum(m, axis=1) / m.shape[1]
