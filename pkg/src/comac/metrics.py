"""Grounding and text-overlap evaluation metrics.

Persona grounding is scored per entry, pooled over every round, which is
what makes an all-negative predictor's accuracy equal the negative-label
fraction of the corpus. Text metrics tokenize through the corpus tokenizer
so there is a single tokenization authority.
"""

from __future__ import annotations

from collections import Counter
from collections.abc import Sequence
from dataclasses import dataclass

from .corpus import tokenize
from .errors import EmptyEval, ShapeError


@dataclass(frozen=True)
class PgReport:
    accuracy: float
    f1: float
    precision: float
    recall: float
    tp: int
    fp: int
    tn: int
    fn: int


def pg_metrics(
    pred_masks: Sequence[Sequence[bool]], label_masks: Sequence[Sequence[bool]]
) -> PgReport:
    """Pooled per-entry binary classification metrics over all rounds."""
    if len(pred_masks) != len(label_masks):
        raise ShapeError(
            f"{len(pred_masks)} prediction rounds vs {len(label_masks)} label rounds"
        )
    tp = fp = tn = fn = 0
    for preds, labels in zip(pred_masks, label_masks):
        if len(preds) != len(labels):
            raise ShapeError(f"{len(preds)} predictions for {len(labels)} labels")
        for p, y in zip(preds, labels):
            if p and y:
                tp += 1
            elif p and not y:
                fp += 1
            elif not p and y:
                fn += 1
            else:
                tn += 1
    total = tp + fp + tn + fn
    if total == 0:
        raise EmptyEval("no persona entries to evaluate")
    precision = tp / (tp + fp) if tp + fp > 0 else 0.0
    recall = tp / (tp + fn) if tp + fn > 0 else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return PgReport(
        accuracy=(tp + tn) / total,
        f1=f1,
        precision=precision,
        recall=recall,
        tp=tp,
        fp=fp,
        tn=tn,
        fn=fn,
    )


def kg_accuracy(pred_indices: Sequence[int], label_indices: Sequence[int]) -> float:
    if len(pred_indices) != len(label_indices):
        raise ShapeError(
            f"{len(pred_indices)} predictions vs {len(label_indices)} labels"
        )
    if not pred_indices:
        raise EmptyEval("no rounds to evaluate")
    hits = sum(1 for p, y in zip(pred_indices, label_indices) if p == y)
    return hits / len(pred_indices)


def _surfaces(text: str) -> list[str]:
    if not text.strip():
        return []
    return [t.surface for t in tokenize(text)]


def _lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, start=1):
            cur.append(prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rouge_l(candidate: str, reference: str) -> float:
    """LCS-based F-measure between tokenized candidate and reference."""
    cand = _surfaces(candidate)
    ref = _surfaces(reference)
    lcs = _lcs_length(cand, ref)
    if lcs == 0:
        return 0.0
    precision = lcs / len(cand)
    recall = lcs / len(ref)
    return 2 * precision * recall / (precision + recall)


def unigram_f1(candidate: str, reference: str) -> float:
    """Harmonic mean of multiset unigram overlap precision and recall."""
    cand = Counter(_surfaces(candidate))
    ref = Counter(_surfaces(reference))
    overlap = sum((cand & ref).values())
    if overlap == 0:
        return 0.0
    precision = overlap / sum(cand.values())
    recall = overlap / sum(ref.values())
    return 2 * precision * recall / (precision + recall)
