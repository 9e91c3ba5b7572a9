"""Synthetic dialogue corpus with a plantable grounding signal.

Each round hides two fresh rare tokens shared between the utterance and the
labeled knowledge entry, and one fresh rare token shared between the
utterance and each positive persona entry. Distractor entries mix common
filler with their own rare tokens, so TF-IDF sampling keeps the shared
tokens and a late-interaction scorer can find them.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import ConfigError

POSITIVE_RATE = 0.13

_COMMON = (
    "the a of to and in is it you that was for on are with as this have "
    "from they know place like really"
).split()


class _RareTokens:
    """Fresh low-frequency surfaces, salted by seed so corpora never alias."""

    def __init__(self, seed: int):
        self.seed = seed
        self.counter = 0

    def next(self) -> str:
        self.counter += 1
        return f"zq{self.seed}x{self.counter:05d}"


def _phrase(rng: np.random.Generator, n: int) -> list[str]:
    return [str(w) for w in rng.choice(_COMMON, size=n, replace=True)]


def _mixed(rng: np.random.Generator, commons: int, rares: list[str]) -> str:
    words = _phrase(rng, commons) + list(rares)
    rng.shuffle(words)
    return " ".join(words)


def gen_synthetic(
    n_rounds: int, n_personas: int, n_knowledges: int, seed: int
) -> list[dict]:
    """Generate corpus records; exactly one knowledge entry per round is labeled."""
    if n_rounds < 1:
        raise ConfigError(f"n_rounds must be >= 1, got {n_rounds}")
    if n_personas < 1:
        raise ConfigError(f"n_personas must be >= 1, got {n_personas}")
    if n_knowledges < 2:
        raise ConfigError(f"n_knowledges must be >= 2, got {n_knowledges}")

    rng = np.random.default_rng([seed, 0x5E])
    rare = _RareTokens(seed)
    records = []
    for idx in range(n_rounds):
        positives = rng.random(n_personas) < POSITIVE_RATE
        label = int(rng.integers(n_knowledges))
        k1, k2 = rare.next(), rare.next()

        personas = []
        shared_persona_tokens = []
        for i in range(n_personas):
            token = rare.next()
            if positives[i]:
                shared_persona_tokens.append(token)
            personas.append(_mixed(rng, 3, [token]))

        knowledges = []
        for j in range(n_knowledges):
            if j == label:
                knowledges.append(_mixed(rng, 4, [k1, k2]))
            else:
                knowledges.append(_mixed(rng, 4, [rare.next(), rare.next()]))

        history = []
        if rng.random() < 0.5:
            history.append(" ".join(_phrase(rng, int(rng.integers(4, 7)))))
        question = _mixed(rng, 6, [k1, k2] + shared_persona_tokens) + " ?"
        history.append(question)

        records.append(
            {
                "dialog_id": f"syn{seed}-{idx:05d}",
                "round": 0,
                "history": history,
                "personas": personas,
                "knowledges": knowledges,
                "persona_labels": [bool(p) for p in positives],
                "knowledge_label": label,
            }
        )
    return records


def write_records(records: list[dict], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record, sort_keys=True) + "\n")
