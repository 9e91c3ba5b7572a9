import json

import numpy as np
import pytest

from comac.embedding import ReducedMatrix


def make_round_record(
    dialog_id="d0",
    round_no=0,
    history=("hello there", "where is this memorial ?"),
    personas=("i like trains", "i live in a city", "i enjoy hiking"),
    knowledges=("the memorial is north", "a river runs south"),
    persona_labels=(True, False, False),
    knowledge_label=0,
):
    return {
        "dialog_id": dialog_id,
        "round": round_no,
        "history": list(history),
        "personas": list(personas),
        "knowledges": list(knowledges),
        "persona_labels": list(persona_labels),
        "knowledge_label": knowledge_label,
    }


def write_jsonl(path, records):
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record) + "\n")


@pytest.fixture
def corpus_file(tmp_path):
    path = tmp_path / "corpus.jsonl"
    write_jsonl(path, [make_round_record(), make_round_record(dialog_id="d1")])
    return path


def random_unit_matrix(rng, n_rows, d0):
    rows = rng.normal(size=(n_rows, d0))
    rows /= np.linalg.norm(rows, axis=1)[:, None]
    return ReducedMatrix(entry_id="x", rows=rows)
