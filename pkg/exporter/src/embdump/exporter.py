"""Dump per-token encoder states into the engine's embedding file format.

The output follows the engine's external contract: little-endian binary
with magic "CMAC", format version 1, embedding width d, then one record per
text entry carrying the entry id, the encoder's own token surfaces, and the
float32 last-hidden-state rows (pre-reduction). Entry ids mirror the
engine's naming: "<dialog_id>:<round>:u", ":p<i>", ":k<j>", with history
turns joined by " </s> " for the utterance entry.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MAGIC = b"CMAC"
FORMAT_VERSION = 1
HISTORY_SEP = " </s> "
U16_MAX = 0xFFFF
U32_MAX = 0xFFFFFFFF


class ExportError(Exception):
    """Exporter failure with a suggested process exit code."""

    def __init__(self, message: str, exit_code: int = 1):
        super().__init__(message)
        self.exit_code = exit_code


@dataclass(frozen=True)
class ExportManifest:
    model: str
    d: int
    entry_ids: tuple[str, ...]
    checksum: str

    def to_json(self) -> str:
        payload = {
            "model": self.model,
            "d": self.d,
            "entry_ids": list(self.entry_ids),
            "checksum": self.checksum,
        }
        return json.dumps(payload, sort_keys=True, indent=2) + "\n"


def read_corpus_entries(corpus_path: str | Path) -> list[tuple[str, str]]:
    """(entry_id, text) pairs for every utterance, persona, and knowledge entry."""
    entries: list[tuple[str, str]] = []
    seen: set[str] = set()
    with open(corpus_path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                dialog_id = record["dialog_id"]
                round_no = record["round"]
                history = record["history"]
                personas = record["personas"]
                knowledges = record["knowledges"]
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise ExportError(
                    f"{corpus_path}: line {line_no}: bad corpus record ({exc})",
                    exit_code=2,
                ) from None
            pairs = [(f"{dialog_id}:{round_no}:u", HISTORY_SEP.join(history))]
            pairs.extend(
                (f"{dialog_id}:{round_no}:p{i}", text) for i, text in enumerate(personas)
            )
            pairs.extend(
                (f"{dialog_id}:{round_no}:k{j}", text) for j, text in enumerate(knowledges)
            )
            for entry_id, text in pairs:
                if entry_id not in seen:
                    seen.add(entry_id)
                    entries.append((entry_id, text))
    if not entries:
        raise ExportError(f"{corpus_path}: no entries found", exit_code=2)
    return entries


class Encoder:
    """Thin wrapper over a local/pretrained transformer encoder."""

    def __init__(self, model_id: str):
        import torch
        from transformers import AutoModel, AutoTokenizer

        torch.set_num_threads(1)  # keeps repeated exports bit-identical
        try:
            self.tokenizer = AutoTokenizer.from_pretrained(model_id)
            self.model = AutoModel.from_pretrained(model_id)
        except (OSError, EnvironmentError, ValueError) as exc:
            raise ExportError(f"cannot load encoder {model_id!r}: {exc}", exit_code=2)
        self.model.eval()
        self.torch = torch
        max_positions = getattr(self.model.config, "max_position_embeddings", None)
        self.max_length = min(
            self.tokenizer.model_max_length
            if self.tokenizer.model_max_length < 10**6
            else 512,
            max_positions if max_positions else 512,
        )

    @property
    def dim(self) -> int:
        return int(self.model.config.hidden_size)

    def encode(self, text: str) -> tuple[list[str], np.ndarray]:
        encoded = self.tokenizer(
            text, return_tensors="pt", truncation=True, max_length=self.max_length
        )
        input_ids = encoded["input_ids"][0]
        surfaces = self.tokenizer.convert_ids_to_tokens(input_ids)
        with self.torch.no_grad():
            hidden = self.model(**encoded).last_hidden_state[0]
        return list(surfaces), hidden.numpy().astype(np.float32)


def write_record(fh, entry_id: str, surfaces: list[str], rows: np.ndarray, d: int):
    id_bytes = entry_id.encode("utf-8")
    if len(id_bytes) > U16_MAX:
        raise ExportError(f"entry id overflows u16 length: {entry_id!r}", exit_code=1)
    if len(surfaces) > U32_MAX:
        raise ExportError(f"token count overflows u32: {entry_id!r}", exit_code=1)
    if rows.shape != (len(surfaces), d):
        raise ExportError(
            f"{entry_id}: rows shape {rows.shape} != ({len(surfaces)}, {d})",
            exit_code=1,
        )
    fh.write(struct.pack("<H", len(id_bytes)))
    fh.write(id_bytes)
    fh.write(struct.pack("<I", len(surfaces)))
    for surface in surfaces:
        s_bytes = surface.encode("utf-8")
        if len(s_bytes) > U16_MAX:
            raise ExportError(f"surface overflows u16 length: {surface!r}", exit_code=1)
        fh.write(struct.pack("<H", len(s_bytes)))
        fh.write(s_bytes)
    fh.write(np.ascontiguousarray(rows, dtype="<f4").tobytes())


def export_embeddings(
    corpus_path: str | Path, model_id: str, out_path: str | Path
) -> ExportManifest:
    """Encode every corpus entry and write the binary file plus a JSON manifest."""
    entries = read_corpus_entries(corpus_path)
    encoder = Encoder(model_id)
    d = encoder.dim
    if d > U32_MAX:
        raise ExportError(f"dimension overflows u32: {d}", exit_code=1)
    if len(entries) > U32_MAX:
        raise ExportError(f"entry count overflows u32: {len(entries)}", exit_code=1)

    out_path = Path(out_path)
    with open(out_path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<III", FORMAT_VERSION, d, len(entries)))
        for entry_id, text in entries:
            surfaces, rows = encoder.encode(text)
            write_record(fh, entry_id, surfaces, rows, d)

    digest = hashlib.sha256(out_path.read_bytes()).hexdigest()
    manifest = ExportManifest(
        model=str(model_id),
        d=d,
        entry_ids=tuple(eid for eid, _ in entries),
        checksum=f"sha256:{digest}",
    )
    manifest_path = out_path.with_suffix(out_path.suffix + ".manifest.json")
    manifest_path.write_text(manifest.to_json(), encoding="utf-8")
    return manifest
