"""Post-fusion grounding heads and grounded-prompt assembly.

Each head fuses two relevance vectors with its own (w1, w2, b) attention
parameters. The persona head applies an elementwise sigmoid and keeps
entries strictly above 0.5; the knowledge head applies a softmax and keeps
the single highest-scoring entry (lowest index on ties).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import DialogueRound
from .errors import ShapeError
from .numerics import sigmoid, softmax

PG = "PG"
KG = "KG"


@dataclass
class FusionParams:
    w1: float
    w2: float
    b: float
    network: str = PG

    def as_array(self) -> np.ndarray:
        return np.array([self.w1, self.w2, self.b], dtype=np.float64)


def zero_fusion(network: str) -> FusionParams:
    return FusionParams(w1=0.0, w2=0.0, b=0.0, network=network)


@dataclass(frozen=True)
class GroundingResult:
    persona_probs: np.ndarray
    persona_mask: np.ndarray
    knowledge_dist: np.ndarray
    knowledge_pick: int

    @property
    def selected_personas(self) -> list[int]:
        return [int(i) for i in np.flatnonzero(self.persona_mask)]


def _fuse(rel_a: np.ndarray, rel_b: np.ndarray, params: FusionParams) -> np.ndarray:
    rel_a = np.asarray(rel_a, dtype=np.float64)
    rel_b = np.asarray(rel_b, dtype=np.float64)
    if rel_a.shape != rel_b.shape or rel_a.ndim != 1:
        raise ShapeError(
            f"relevance vectors must share one length, got {rel_a.shape} and {rel_b.shape}"
        )
    return params.w1 * rel_a + params.w2 * rel_b + params.b


def pg_forward(
    pk_rel: np.ndarray, pu_rel: np.ndarray, params: FusionParams
) -> tuple[np.ndarray, np.ndarray]:
    """Sigmoid fusion of knowledge- and utterance-relevance per persona entry.

    Returns (probabilities, boolean mask of entries strictly above 0.5).
    """
    probs = sigmoid(_fuse(pk_rel, pu_rel, params))
    return probs, probs > 0.5


def kg_forward(
    kp_rel: np.ndarray, ku_rel: np.ndarray, params: FusionParams
) -> tuple[np.ndarray, int]:
    """Softmax fusion over knowledge entries; pick the lowest argmax index."""
    dist = softmax(_fuse(kp_rel, ku_rel, params))
    return dist, int(np.argmax(dist))


def grounding_result(
    persona_probs: np.ndarray, knowledge_dist: np.ndarray
) -> GroundingResult:
    return GroundingResult(
        persona_probs=persona_probs,
        persona_mask=persona_probs > 0.5,
        knowledge_dist=knowledge_dist,
        knowledge_pick=int(np.argmax(knowledge_dist)),
    )


def assemble_prompt(rnd: DialogueRound, result: GroundingResult, sep: str) -> str:
    """Concatenate selected knowledge, selected personas (original order), utterance."""
    if len(result.persona_probs) != len(rnd.personas):
        raise ShapeError(
            f"{len(result.persona_probs)} persona probabilities for "
            f"{len(rnd.personas)} persona entries"
        )
    if not 0 <= result.knowledge_pick < len(rnd.knowledges):
        raise ShapeError(f"knowledge pick {result.knowledge_pick} out of range")
    pieces = [rnd.knowledges[result.knowledge_pick].text]
    pieces.extend(rnd.personas[i].text for i in result.selected_personas)
    pieces.append(rnd.utterance.text)
    return sep.join(pieces)
