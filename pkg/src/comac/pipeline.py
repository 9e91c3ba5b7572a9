"""Inference wiring: score rounds with the public kernel ops and fuse.

This path is deliberately independent of the training graph in objective.py;
both compute the same similarities for hard-masked strategies, which the
test suite cross-checks.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from .corpus import DialogueRound
from .embedding import ReducedMatrix, TokenMatrix, reduce as reduce_matrix
from .errors import ConfigError, ShapeError
from .grounding import GroundingResult, assemble_prompt, grounding_result
from .latesim import mean_over_docs, sim_matrix
from .objective import ModelState, TrainConfig
from .saliency import (
    FF,
    TFIDF,
    IdfTable,
    SelectionMask,
    ff_weights,
    select_tokens,
    surface_weights,
)


@dataclass(frozen=True)
class RoundScores:
    pu: np.ndarray  # persona vs utterance, length N_p
    pk: np.ndarray  # persona vs knowledge, N_p x N_k
    ku: np.ndarray  # knowledge vs utterance, length N_k
    pk_rel: np.ndarray
    kp_rel: np.ndarray


def _reduce_entry(
    entry_id: str, store: dict[str, TokenMatrix], model: ModelState, cfg: TrainConfig
) -> ReducedMatrix:
    m = store.get(entry_id)
    if m is None:
        raise ShapeError(f"no embedding stored for entry {entry_id!r}")
    return reduce_matrix(m, model.reduction, normalize=cfg.normalize_tokens)


def _mask_for(
    entry_id: str,
    reduced: ReducedMatrix,
    store: dict[str, TokenMatrix],
    model: ModelState,
    cfg: TrainConfig,
    idf: IdfTable | None,
) -> SelectionMask:
    if cfg.strategy == TFIDF:
        if idf is None:
            raise ConfigError("TFIDF strategy requires an IDF table")
        weights = surface_weights(store[entry_id].surfaces, idf)
    elif cfg.strategy == FF:
        weights = ff_weights(reduced, model.scorer)
    else:
        raise ConfigError(f"unknown strategy {cfg.strategy!r}")
    return select_tokens(weights, cfg.P_sr, entry_id)


def score_round(
    model: ModelState,
    rnd: DialogueRound,
    store: dict[str, TokenMatrix],
    cfg: TrainConfig,
    idf: IdfTable | None,
) -> RoundScores:
    """Sparse symmetric normalized similarities for one round."""
    reduced = {e.id: _reduce_entry(e.id, store, model, cfg) for e in rnd.entries}
    masks = {
        eid: _mask_for(eid, red, store, model, cfg, idf) for eid, red in reduced.items()
    }

    personas = [reduced[p.id] for p in rnd.personas]
    knowledges = [reduced[k.id] for k in rnd.knowledges]
    utterance = [reduced[rnd.utterance.id]]
    p_masks = [masks[p.id] for p in rnd.personas]
    k_masks = [masks[k.id] for k in rnd.knowledges]
    u_masks = [masks[rnd.utterance.id]]

    pu = sim_matrix(personas, utterance, (p_masks, u_masks), "ssn")[:, 0]
    pk = sim_matrix(personas, knowledges, (p_masks, k_masks), "ssn")
    ku = sim_matrix(knowledges, utterance, (k_masks, u_masks), "ssn")[:, 0]

    return RoundScores(
        pu=pu,
        pk=pk,
        ku=ku,
        pk_rel=mean_over_docs(pk),
        kp_rel=mean_over_docs(pk.T),
    )


def ground_round(
    model: ModelState,
    rnd: DialogueRound,
    store: dict[str, TokenMatrix],
    cfg: TrainConfig,
    idf: IdfTable | None,
) -> tuple[GroundingResult, RoundScores]:
    from .grounding import kg_forward, pg_forward

    scores = score_round(model, rnd, store, cfg, idf)
    probs, _ = pg_forward(scores.pk_rel, scores.pu, model.pg_params)
    dist, _ = kg_forward(scores.kp_rel, scores.ku, model.kg_params)
    return grounding_result(probs, dist), scores


def ground_record(rnd: DialogueRound, result: GroundingResult, sep: str) -> dict:
    """JSON-serializable grounding output for one round."""
    return {
        "dialog_id": rnd.dialog_id,
        "round": rnd.round,
        "persona_probs": [float(p) for p in result.persona_probs],
        "persona_selected": result.selected_personas,
        "knowledge_dist": [float(p) for p in result.knowledge_dist],
        "knowledge_selected": result.knowledge_pick,
        "prompt": assemble_prompt(rnd, result, sep),
    }


def evaluate(
    model: ModelState,
    corpus: Sequence[DialogueRound],
    store: dict[str, TokenMatrix],
    cfg: TrainConfig,
    idf: IdfTable | None,
    responses: Sequence[tuple[str, str]] | None = None,
) -> dict:
    """Grounding metrics over a corpus, plus text metrics when responses given."""
    from .metrics import kg_accuracy, pg_metrics, rouge_l, unigram_f1

    pred_masks = []
    label_masks = []
    pred_picks = []
    label_picks = []
    for rnd in corpus:
        result, _ = ground_round(model, rnd, store, cfg, idf)
        pred_masks.append([bool(b) for b in result.persona_mask])
        label_masks.append(list(rnd.persona_labels))
        pred_picks.append(result.knowledge_pick)
        label_picks.append(rnd.knowledge_label)

    pg = pg_metrics(pred_masks, label_masks)
    report = {
        "rounds": len(corpus),
        "pg": {
            "accuracy": pg.accuracy,
            "f1": pg.f1,
            "precision": pg.precision,
            "recall": pg.recall,
            "tp": pg.tp,
            "fp": pg.fp,
            "tn": pg.tn,
            "fn": pg.fn,
        },
        "kg_accuracy": kg_accuracy(pred_picks, label_picks),
        "text": {"f1": None, "rouge_l": None, "bleu": None, "ppl": None},
    }
    if responses:
        f1s = [unigram_f1(cand, ref) for cand, ref in responses]
        rouges = [rouge_l(cand, ref) for cand, ref in responses]
        report["text"]["f1"] = float(np.mean(f1s))
        report["text"]["rouge_l"] = float(np.mean(rouges))
    return report
