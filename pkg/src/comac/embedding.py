"""Token-embedding matrices: deterministic hash embedder, binary file IO,
and the trainable dimension-reduction layer.

Embeddings are frozen inputs. They come either from the built-in hash
embedder (a pure function of each token's surface string) or from a binary
file produced by an external encoder dump. Only the reduction layer that
maps d-dimensional rows down to d0 = d/4 is trainable.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import TextEntry
from .errors import DegenerateRow, EmptyEntry, FormatError, ShapeError

MAGIC = b"CMAC"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class TokenMatrix:
    """Per-entry token embeddings: one float32 row per token surface."""

    entry_id: str
    surfaces: tuple[str, ...]
    rows: np.ndarray

    def __post_init__(self):
        if self.rows.ndim != 2 or self.rows.shape[0] != len(self.surfaces):
            raise ShapeError(
                f"{self.entry_id}: {len(self.surfaces)} surfaces for matrix "
                f"of shape {self.rows.shape}"
            )
        if len(self.surfaces) == 0:
            raise EmptyEntry(f"{self.entry_id}: empty token matrix")


@dataclass(frozen=True)
class ReducedMatrix:
    """Dimension-reduced token rows used by the similarity kernel."""

    entry_id: str
    rows: np.ndarray


@dataclass
class ReductionLayer:
    weight: np.ndarray  # d x d0, float64
    trainable: bool = True

    @property
    def input_dim(self) -> int:
        return self.weight.shape[0]

    @property
    def output_dim(self) -> int:
        return self.weight.shape[1]


def _hash_row(surface: str, d: int, seed: int) -> np.ndarray:
    """Expand a token surface into d floats in [-1, 1) by counter-mode hashing."""
    key = struct.pack("<q", seed)
    data = surface.encode("utf-8")
    out = np.empty(d, dtype=np.float32)
    filled = 0
    counter = 0
    while filled < d:
        digest = hashlib.blake2b(
            data + b"\x00" + struct.pack("<I", counter), key=key, digest_size=64
        ).digest()
        words = np.frombuffer(digest, dtype="<u4")
        take = min(d - filled, words.size)
        out[filled : filled + take] = (
            words[:take].astype(np.float64) / 2147483648.0 - 1.0
        ).astype(np.float32)
        filled += take
        counter += 1
    return out


def hash_embed(entry: TextEntry, d: int, seed: int = 0) -> TokenMatrix:
    """Embed an entry with one deterministic pseudo-random row per token surface.

    Identical surfaces always produce identical rows, so repeated tokens
    share their embedding exactly.
    """
    if d < 4:
        raise ShapeError(f"embedding dimension must be >= 4, got {d}")
    rows = np.stack([_hash_row(tok.surface, d, seed) for tok in entry.tokens])
    return TokenMatrix(entry_id=entry.id, surfaces=entry.surfaces, rows=rows)


def init_reduction(d: int, d0: int, seed: int = 0) -> ReductionLayer:
    """Fan-in scaled uniform init in [-1/sqrt(d), 1/sqrt(d)]."""
    bound = 1.0 / np.sqrt(d)
    rng = np.random.default_rng([seed, 0x52])
    weight = rng.uniform(-bound, bound, size=(d, d0)).astype(np.float64)
    return ReductionLayer(weight=weight)


def default_d0(d: int) -> int:
    if d % 4 != 0:
        raise ShapeError(f"default reduction needs d divisible by 4, got {d}")
    return d // 4


def reduce(m: TokenMatrix, layer: ReductionLayer, normalize: bool = True) -> ReducedMatrix:
    """Project token rows through the reduction layer and L2-normalize each row.

    Normalization makes every token-pair dot product downstream a cosine
    in [-1, 1]; pass normalize=False to keep raw projections.
    """
    if m.rows.shape[1] != layer.input_dim:
        raise ShapeError(
            f"{m.entry_id}: matrix has {m.rows.shape[1]} columns, "
            f"layer expects {layer.input_dim}"
        )
    projected = m.rows.astype(np.float64) @ layer.weight
    if not normalize:
        return ReducedMatrix(entry_id=m.entry_id, rows=projected)
    norms = np.linalg.norm(projected, axis=1)
    if np.any(norms == 0.0):
        bad = int(np.flatnonzero(norms == 0.0)[0])
        raise DegenerateRow(f"{m.entry_id}: token row {bad} projected to zero")
    return ReducedMatrix(entry_id=m.entry_id, rows=projected / norms[:, None])


def _read_exact(fh, n: int, what: str) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise FormatError(f"truncated file while reading {what}")
    return buf


def write_embeddings(matrices: list[TokenMatrix], d: int, path: str | Path) -> None:
    """Write token matrices in the engine's little-endian binary layout."""
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", FORMAT_VERSION, d))
        fh.write(struct.pack("<I", len(matrices)))
        for m in matrices:
            if m.rows.shape[1] != d:
                raise ShapeError(
                    f"{m.entry_id}: matrix width {m.rows.shape[1]} != declared d={d}"
                )
            id_bytes = m.entry_id.encode("utf-8")
            if len(id_bytes) > 0xFFFF:
                raise FormatError(f"entry id too long: {len(id_bytes)} bytes")
            fh.write(struct.pack("<H", len(id_bytes)))
            fh.write(id_bytes)
            fh.write(struct.pack("<I", len(m.surfaces)))
            for surface in m.surfaces:
                s_bytes = surface.encode("utf-8")
                if len(s_bytes) > 0xFFFF:
                    raise FormatError(f"token surface too long: {len(s_bytes)} bytes")
                fh.write(struct.pack("<H", len(s_bytes)))
                fh.write(s_bytes)
            fh.write(np.ascontiguousarray(m.rows, dtype="<f4").tobytes())


def import_embeddings(path: str | Path, expect_dim: int | None = None) -> dict[str, TokenMatrix]:
    """Read a binary embedding file into a map of entry id -> TokenMatrix."""
    store: dict[str, TokenMatrix] = {}
    with open(path, "rb") as fh:
        magic = _read_exact(fh, 4, "magic")
        if magic != MAGIC:
            raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
        version, d = struct.unpack("<II", _read_exact(fh, 8, "header"))
        if version != FORMAT_VERSION:
            raise FormatError(f"unsupported format version {version}")
        if expect_dim is not None and d != expect_dim:
            raise FormatError(f"file dimension {d} != expected {expect_dim}")
        (entry_count,) = struct.unpack("<I", _read_exact(fh, 4, "entry count"))
        for _ in range(entry_count):
            (id_len,) = struct.unpack("<H", _read_exact(fh, 2, "id length"))
            entry_id = _read_exact(fh, id_len, "entry id").decode("utf-8")
            (token_count,) = struct.unpack("<I", _read_exact(fh, 4, "token count"))
            if token_count == 0:
                raise FormatError(f"{entry_id}: zero tokens")
            surfaces = []
            for _ in range(token_count):
                (s_len,) = struct.unpack("<H", _read_exact(fh, 2, "surface length"))
                surfaces.append(_read_exact(fh, s_len, "surface").decode("utf-8"))
            raw = _read_exact(fh, token_count * d * 4, f"{entry_id} rows")
            rows = np.frombuffer(raw, dtype="<f4").reshape(token_count, d).copy()
            store[entry_id] = TokenMatrix(
                entry_id=entry_id, surfaces=tuple(surfaces), rows=rows
            )
        if fh.read(1):
            raise FormatError("trailing bytes after last entry")
    return store
