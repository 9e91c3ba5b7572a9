"""Dialogue corpus loading, validation, and word-level tokenization.

The corpus file is UTF-8 JSON-lines. Each line describes one conversation
round: the dialogue history, the candidate persona and knowledge entries,
and the gold relevance labels. History turns are flattened into a single
utterance string joined by ``HISTORY_SEP``.
"""

from __future__ import annotations

import json
import string
import unicodedata
from dataclasses import dataclass
from pathlib import Path

from .errors import EmptyEntry, ParseError, SchemaError

HISTORY_SEP = " </s> "

UTTERANCE = "utterance"
PERSONA = "persona"
KNOWLEDGE = "knowledge"


@dataclass(frozen=True)
class Token:
    surface: str
    position: int


@dataclass(frozen=True)
class TextEntry:
    id: str
    role: str
    text: str
    tokens: tuple[Token, ...]

    @property
    def surfaces(self) -> tuple[str, ...]:
        return tuple(t.surface for t in self.tokens)


@dataclass(frozen=True)
class DialogueRound:
    dialog_id: str
    round: int
    utterance: TextEntry
    personas: tuple[TextEntry, ...]
    knowledges: tuple[TextEntry, ...]
    persona_labels: tuple[bool, ...]
    knowledge_label: int

    @property
    def entries(self) -> tuple[TextEntry, ...]:
        return (self.utterance, *self.personas, *self.knowledges)


def _is_punct(ch: str) -> bool:
    return ch in string.punctuation or unicodedata.category(ch).startswith("P")


def tokenize(text: str) -> list[Token]:
    """Lowercase, split on whitespace, and split punctuation into single-char tokens.

    Raises EmptyEntry for empty or whitespace-only input.
    """
    surfaces: list[str] = []
    for chunk in text.lower().split():
        word = ""
        for ch in chunk:
            if _is_punct(ch):
                if word:
                    surfaces.append(word)
                    word = ""
                surfaces.append(ch)
            else:
                word += ch
        if word:
            surfaces.append(word)
    if not surfaces:
        raise EmptyEntry(f"entry has no tokens: {text!r}")
    return [Token(surface, i) for i, surface in enumerate(surfaces)]


def utterance_id(dialog_id: str, round_no: int) -> str:
    return f"{dialog_id}:{round_no}:u"


def persona_id(dialog_id: str, round_no: int, index: int) -> str:
    return f"{dialog_id}:{round_no}:p{index}"


def knowledge_id(dialog_id: str, round_no: int, index: int) -> str:
    return f"{dialog_id}:{round_no}:k{index}"


def _make_entry(entry_id: str, role: str, text: str) -> TextEntry:
    return TextEntry(id=entry_id, role=role, text=text, tokens=tuple(tokenize(text)))


def _round_from_record(record: dict, line_no: int) -> DialogueRound:
    try:
        dialog_id = record["dialog_id"]
        round_no = record["round"]
        history = record["history"]
        personas = record["personas"]
        knowledges = record["knowledges"]
        persona_labels = record["persona_labels"]
        knowledge_label = record["knowledge_label"]
    except (KeyError, TypeError) as exc:
        raise SchemaError(f"line {line_no}: missing field {exc}") from None

    if not isinstance(round_no, int) or round_no < 0:
        raise SchemaError(f"line {line_no}: round must be a non-negative integer")
    if not history:
        raise SchemaError(f"line {line_no}: history is empty")
    if not personas or not knowledges:
        raise SchemaError(f"line {line_no}: personas and knowledges must be non-empty")
    if len(persona_labels) != len(personas):
        raise SchemaError(
            f"line {line_no}: {len(persona_labels)} persona_labels for "
            f"{len(personas)} personas"
        )
    if not isinstance(knowledge_label, int) or not 0 <= knowledge_label < len(knowledges):
        raise SchemaError(
            f"line {line_no}: knowledge_label {knowledge_label!r} out of range "
            f"for {len(knowledges)} knowledges"
        )

    utterance = _make_entry(
        utterance_id(dialog_id, round_no), UTTERANCE, HISTORY_SEP.join(history)
    )
    return DialogueRound(
        dialog_id=str(dialog_id),
        round=round_no,
        utterance=utterance,
        personas=tuple(
            _make_entry(persona_id(dialog_id, round_no, i), PERSONA, text)
            for i, text in enumerate(personas)
        ),
        knowledges=tuple(
            _make_entry(knowledge_id(dialog_id, round_no, j), KNOWLEDGE, text)
            for j, text in enumerate(knowledges)
        ),
        persona_labels=tuple(bool(v) for v in persona_labels),
        knowledge_label=knowledge_label,
    )


def load_corpus(path: str | Path) -> list[DialogueRound]:
    """Parse a JSON-lines corpus file into validated dialogue rounds."""
    rounds = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(line_no, exc.msg) from None
            rounds.append(_round_from_record(record, line_no))
    return rounds


def round_to_record(rnd: DialogueRound) -> dict:
    """Rebuild the JSON record for one round (history as a single flattened turn)."""
    return {
        "dialog_id": rnd.dialog_id,
        "round": rnd.round,
        "history": rnd.utterance.text.split(HISTORY_SEP),
        "personas": [p.text for p in rnd.personas],
        "knowledges": [k.text for k in rnd.knowledges],
        "persona_labels": list(rnd.persona_labels),
        "knowledge_label": rnd.knowledge_label,
    }


def write_corpus(rounds: list[DialogueRound], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rnd in rounds:
            fh.write(json.dumps(round_to_record(rnd), sort_keys=True) + "\n")
