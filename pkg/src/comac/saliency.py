"""Per-token importance scoring and sparse token selection.

Two strategies produce the importance weights: pre-computed TF-IDF over the
corpus, or a learned affine+sigmoid scorer applied to reduced token rows.
The top fraction of positions (ratio P_sr, floor of one token) is kept.
"""

from __future__ import annotations

import json
import math
from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import DialogueRound, TextEntry
from .embedding import ReducedMatrix
from .errors import ConfigError, EmptyCorpus, ShapeError
from .numerics import round_half_up, sigmoid

TFIDF = "TFIDF"
FF = "FF"


@dataclass(frozen=True)
class IdfTable:
    doc_count: int
    idf: dict[str, float] = field(default_factory=dict)

    def lookup(self, surface: str) -> float:
        value = self.idf.get(surface)
        if value is None:
            return math.log(1.0 + self.doc_count) + 1.0
        return value


@dataclass
class SaliencyScorer:
    """Affine + sigmoid scorer over reduced token rows."""

    v: np.ndarray  # length d0
    c: float
    trainable: bool = True


@dataclass(frozen=True)
class SelectionMask:
    entry_id: str
    kept: tuple[int, ...]

    def __post_init__(self):
        if not self.kept:
            raise ConfigError(f"{self.entry_id}: empty selection mask")


def idf_from_documents(documents: Sequence[Sequence[str]]) -> IdfTable:
    """Smoothed IDF over a document multiset: ln((1 + N) / (1 + df(t))) + 1."""
    if not documents:
        raise EmptyCorpus("cannot build an IDF table from zero documents")
    df: dict[str, int] = {}
    for doc in documents:
        for surface in set(doc):
            df[surface] = df.get(surface, 0) + 1
    n_docs = len(documents)
    idf = {
        surface: math.log((1.0 + n_docs) / (1.0 + count)) + 1.0
        for surface, count in df.items()
    }
    return IdfTable(doc_count=n_docs, idf=idf)


def build_idf(corpus: Sequence[DialogueRound]) -> IdfTable:
    """Freeze IDF weights over a corpus, one document per text entry."""
    if not corpus:
        raise EmptyCorpus("cannot build an IDF table from zero rounds")
    return idf_from_documents(
        [entry.surfaces for rnd in corpus for entry in rnd.entries]
    )


def surface_weights(surfaces: Sequence[str], table: IdfTable) -> list[float]:
    """Raw term frequency within the entry times IDF, one weight per position."""
    counts: dict[str, int] = {}
    for s in surfaces:
        counts[s] = counts.get(s, 0) + 1
    return [counts[s] * table.lookup(s) for s in surfaces]


def tfidf_weights(entry: TextEntry, table: IdfTable) -> list[float]:
    return surface_weights(entry.surfaces, table)


def ff_weights(m: ReducedMatrix, scorer: SaliencyScorer) -> np.ndarray:
    """Learned per-token saliency in (0, 1): sigmoid(v . row + c)."""
    if m.rows.shape[1] != scorer.v.shape[0]:
        raise ShapeError(
            f"{m.entry_id}: rows have width {m.rows.shape[1]}, "
            f"scorer expects {scorer.v.shape[0]}"
        )
    return sigmoid(m.rows @ scorer.v + scorer.c)


def selection_size(n_tokens: int, p_sr: float) -> int:
    return max(1, round_half_up(p_sr * n_tokens))


def select_tokens(weights: Sequence[float], p_sr: float, entry_id: str = "") -> SelectionMask:
    """Keep the k = max(1, round_half_up(P_sr * n)) highest-weight positions.

    Ties break toward the earlier position; kept positions come back sorted.
    """
    if not 0.0 < p_sr <= 1.0:
        raise ConfigError(f"P_sr must be in (0, 1], got {p_sr}")
    n = len(weights)
    if n == 0:
        raise ConfigError("select_tokens needs at least one weight")
    k = selection_size(n, p_sr)
    order = sorted(range(n), key=lambda i: (-float(weights[i]), i))
    kept = tuple(sorted(order[:k]))
    return SelectionMask(entry_id=entry_id, kept=kept)


def init_scorer(d0: int, seed: int = 0) -> SaliencyScorer:
    bound = 1.0 / np.sqrt(d0)
    rng = np.random.default_rng([seed, 0x5A])
    return SaliencyScorer(v=rng.uniform(-bound, bound, size=d0), c=0.0)


def save_idf(table: IdfTable, path: str | Path) -> None:
    """Persist as JSON with values at 9 significant digits."""
    payload = {
        "doc_count": table.doc_count,
        "idf": {k: float(f"{v:.9g}") for k, v in table.idf.items()},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")


def load_idf(path: str | Path) -> IdfTable:
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    return IdfTable(
        doc_count=int(payload["doc_count"]),
        idf={k: float(v) for k, v in payload["idf"].items()},
    )
