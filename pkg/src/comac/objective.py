"""Training objective: composite loss, analytic gradients, and the SGD trainer.

The loss combines knowledge-grounding cross-entropy, an imbalance-aware
persona BCE (positive entries up-weighted by w_star, all-negative examples
randomly dropped with probability p_star), and a pluggable generation-loss
hook that defaults to zero.

Gradients are reverse-mode and hand-assembled: the max reduction routes
gradient to the winning token pair (lowest document index on ties), hard
TF-IDF masks are constants, and learned saliency weights receive gradient
through the soft token weighting used during training.
"""

from __future__ import annotations

import dataclasses
import json
from collections.abc import Callable, Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import DialogueRound
from .embedding import (
    ReductionLayer,
    TokenMatrix,
    default_d0,
    init_reduction,
)
from .errors import (
    ConfigError,
    DegenerateRow,
    FormatError,
    LabelError,
    NumericsError,
    ShapeError,
)
from .grounding import KG, PG, FusionParams, zero_fusion
from .numerics import log_sigmoid, sigmoid, softmax
from .saliency import (
    FF,
    TFIDF,
    IdfTable,
    SaliencyScorer,
    build_idf,
    init_scorer,
    select_tokens,
    surface_weights,
)

LmHook = Callable[[str, str | None], float]

CHECKPOINT_KIND = "comac-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass
class TrainConfig:
    alpha: float = 1.0
    beta: float = 1.0
    gamma: float = 10.0
    w_star: float = 0.9
    p_star: float = 0.1
    P_sr: float = 0.35
    d0: int | None = None
    strategy: str = TFIDF
    learning_rate: float = 0.5
    epochs: int = 2
    seed: int = 0
    normalize_tokens: bool = True

    def validate(self) -> "TrainConfig":
        if min(self.alpha, self.beta, self.gamma) < 0:
            raise ConfigError("alpha, beta, gamma must be non-negative")
        if not 0.0 < self.w_star < 1.0:
            raise ConfigError(f"w_star must be in (0, 1), got {self.w_star}")
        if not 0.0 <= self.p_star < 1.0:
            raise ConfigError(f"p_star must be in [0, 1), got {self.p_star}")
        if not 0.0 < self.P_sr <= 1.0:
            raise ConfigError(f"P_sr must be in (0, 1], got {self.P_sr}")
        if self.d0 is not None and self.d0 < 1:
            raise ConfigError(f"d0 must be positive, got {self.d0}")
        if self.strategy not in (TFIDF, FF):
            raise ConfigError(f"strategy must be TFIDF or FF, got {self.strategy!r}")
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        return self


_CONFIG_FIELDS = {f.name: f for f in dataclasses.fields(TrainConfig)}


def _parse_config_value(name: str, raw: str):
    raw = raw.strip()
    if name in ("alpha", "beta", "gamma", "w_star", "p_star", "P_sr", "learning_rate"):
        return float(raw)
    if name in ("epochs", "seed"):
        return int(raw)
    if name == "d0":
        return None if raw.lower() in ("", "none") else int(raw)
    if name == "strategy":
        return raw.upper()
    if name == "normalize_tokens":
        if raw.lower() in ("true", "1", "yes"):
            return True
        if raw.lower() in ("false", "0", "no"):
            return False
        raise ConfigError(f"normalize_tokens must be boolean, got {raw!r}")
    raise ConfigError(f"unknown config key {name!r}")


def load_train_config(path: str | Path) -> TrainConfig:
    """Parse a flat key=value config file into a validated TrainConfig."""
    values = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"line {line_no}: expected key=value, got {line!r}")
            key, raw = line.split("=", 1)
            key = key.strip()
            if key not in _CONFIG_FIELDS:
                raise ConfigError(f"line {line_no}: unknown config key {key!r}")
            values[key] = _parse_config_value(key, raw)
    return TrainConfig(**values).validate()


@dataclass
class ModelState:
    reduction: ReductionLayer
    scorer: SaliencyScorer | None
    pg_params: FusionParams
    kg_params: FusionParams

    @property
    def d0(self) -> int:
        return self.reduction.output_dim


@dataclass
class GradientSet:
    reduction: np.ndarray
    scorer_v: np.ndarray | None
    scorer_c: float
    pg: np.ndarray  # d/dw1, d/dw2, d/db
    kg: np.ndarray

    def check_finite(self) -> "GradientSet":
        pieces = [self.reduction, self.pg, self.kg]
        if self.scorer_v is not None:
            pieces.append(self.scorer_v)
            pieces.append(np.array([self.scorer_c]))
        for arr in pieces:
            if not np.all(np.isfinite(arr)):
                raise NumericsError("non-finite gradient")
        return self


def init_model(d: int, cfg: TrainConfig) -> ModelState:
    d0 = cfg.d0 if cfg.d0 is not None else default_d0(d)
    scorer = init_scorer(d0, cfg.seed) if cfg.strategy == FF else None
    return ModelState(
        reduction=init_reduction(d, d0, cfg.seed),
        scorer=scorer,
        pg_params=zero_fusion(PG),
        kg_params=zero_fusion(KG),
    )


# ---------------------------------------------------------------------------
# Loss terms
# ---------------------------------------------------------------------------


def kg_loss(dist: np.ndarray, label: int) -> float:
    """Cross-entropy of the knowledge distribution against the gold index."""
    dist = np.asarray(dist, dtype=np.float64)
    if not 0 <= label < dist.shape[0]:
        raise LabelError(f"label {label} out of range for {dist.shape[0]} entries")
    return float(-np.log(dist[label]))


def pg_loss(
    probs: np.ndarray,
    labels: Sequence[bool],
    w_star: float,
    p_star: float,
    rng: np.random.Generator,
) -> float | None:
    """Imbalance-weighted binary cross-entropy over persona probabilities.

    Returns None when the example has no positive label and the seeded
    uniform draw falls below p_star (the term is dropped for this example).
    """
    probs = np.asarray(probs, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if probs.shape != y.shape:
        raise ShapeError(f"{probs.shape[0]} probabilities for {y.shape[0]} labels")
    if not np.any(y) and p_star > 0.0 and rng.uniform() < p_star:
        return None
    terms = -(w_star * y * np.log(probs) + (1.0 - w_star) * (1.0 - y) * np.log1p(-probs))
    return float(np.mean(terms))


def total_loss(l_k: float, l_p: float | None, l_m: float, cfg: TrainConfig) -> float:
    """alpha * L_K + beta * L_P (zero when dropped) + gamma * L_M."""
    return cfg.alpha * l_k + cfg.beta * (0.0 if l_p is None else l_p) + cfg.gamma * l_m


# ---------------------------------------------------------------------------
# Round-level computation graph
# ---------------------------------------------------------------------------


@dataclass
class _EntryNode:
    matrix: np.ndarray  # float64 token embeddings, s x d
    z: np.ndarray  # projected rows, s x d0
    norms: np.ndarray | None  # row norms when normalizing
    reduced: np.ndarray  # normalized (or raw) rows
    kept: np.ndarray | None  # hard mask positions, None in soft mode
    gates: np.ndarray | None  # soft saliency weights, None in hard mode
    used: np.ndarray  # rows entering the similarity kernel
    count: int  # normalizer |x|
    grad_used: np.ndarray | None = None

    def grad(self) -> np.ndarray:
        if self.grad_used is None:
            self.grad_used = np.zeros_like(self.used)
        return self.grad_used


@dataclass
class _PairNode:
    x: _EntryNode
    y: _EntryNode
    winners_xy: np.ndarray
    winners_yx: np.ndarray
    score: float


@dataclass
class RoundGraph:
    """Cached forward pass of one round, ready for backprop."""

    pu: np.ndarray
    pk: np.ndarray
    ku: np.ndarray
    pk_rel: np.ndarray
    kp_rel: np.ndarray
    pg_logits: np.ndarray
    kg_logits: np.ndarray
    persona_probs: np.ndarray
    knowledge_dist: np.ndarray
    l_k: float
    l_p: float | None
    l_m: float
    loss: float
    tie_margin: float
    entries: dict[str, _EntryNode]
    pairs: list[tuple[str, int, int, _PairNode]]  # (kind, i, j, node)


def _project_entry(
    m: TokenMatrix,
    model: ModelState,
    cfg: TrainConfig,
    kept: np.ndarray | None,
    soft: bool,
) -> _EntryNode:
    E = m.rows.astype(np.float64)
    z = E @ model.reduction.weight
    if cfg.normalize_tokens:
        norms = np.linalg.norm(z, axis=1)
        if np.any(norms == 0.0):
            raise DegenerateRow(f"{m.entry_id}: zero row after projection")
        reduced = z / norms[:, None]
    else:
        norms = None
        reduced = z
    if soft:
        gates = sigmoid(reduced @ model.scorer.v + model.scorer.c)
        used = gates[:, None] * reduced
        return _EntryNode(E, z, norms, reduced, None, gates, used, reduced.shape[0])
    return _EntryNode(E, z, norms, reduced, kept, None, reduced[kept], kept.shape[0])


def tfidf_mask(m: TokenMatrix, idf: IdfTable | None, p_sr: float) -> np.ndarray:
    if idf is None:
        raise ConfigError("TFIDF strategy requires an IDF table")
    sel = select_tokens(surface_weights(m.surfaces, idf), p_sr, m.entry_id)
    return np.asarray(sel.kept, dtype=np.intp)


def _pair_forward(x: _EntryNode, y: _EntryNode, track_margin: bool) -> tuple[_PairNode, float]:
    dots_xy = x.used @ y.used.T
    winners_xy = np.argmax(dots_xy, axis=1)
    vals_xy = dots_xy[np.arange(dots_xy.shape[0]), winners_xy]
    dots_yx = dots_xy.T
    winners_yx = np.argmax(dots_yx, axis=1)
    vals_yx = dots_yx[np.arange(dots_yx.shape[0]), winners_yx]
    score = float(np.sum(vals_xy)) / x.count + float(np.sum(vals_yx)) / y.count
    margin = np.inf
    if track_margin:
        if dots_xy.shape[1] >= 2:
            second = np.partition(dots_xy, -2, axis=1)[:, -2]
            margin = min(margin, float(np.min(vals_xy - second)))
        if dots_yx.shape[1] >= 2:
            second = np.partition(dots_yx, -2, axis=1)[:, -2]
            margin = min(margin, float(np.min(vals_yx - second)))
    return _PairNode(x, y, winners_xy, winners_yx, score), margin


def _decide_drop(
    labels: Sequence[bool], p_star: float, rng: np.random.Generator | None
) -> bool:
    if any(labels) or p_star <= 0.0:
        return False
    if rng is None:
        return False
    return bool(rng.uniform() < p_star)


def round_forward(
    model: ModelState,
    rnd: DialogueRound,
    store: dict[str, TokenMatrix],
    cfg: TrainConfig,
    idf: IdfTable | None,
    drop_lp: bool,
    lm_hook: LmHook | None = None,
    track_margin: bool = False,
    masks: dict[str, np.ndarray] | None = None,
) -> RoundGraph:
    """Full forward pass of one round with enough caching to backprop.

    In TFIDF mode (and whenever precomputed masks are passed) token selection
    is a hard constant mask; in FF training mode every token row is scaled by
    its learned saliency weight instead.
    """
    soft = cfg.strategy == FF
    nodes: dict[str, _EntryNode] = {}
    for entry in rnd.entries:
        m = store.get(entry.id)
        if m is None:
            raise ShapeError(f"no embedding stored for entry {entry.id!r}")
        if soft:
            nodes[entry.id] = _project_entry(m, model, cfg, None, soft=True)
        else:
            if masks is not None and entry.id in masks:
                kept = masks[entry.id]
            else:
                kept = tfidf_mask(m, idf, cfg.P_sr)
            nodes[entry.id] = _project_entry(m, model, cfg, kept, soft=False)

    u = nodes[rnd.utterance.id]
    n_p, n_k = len(rnd.personas), len(rnd.knowledges)
    pairs: list[tuple[str, int, int, _PairNode]] = []
    margin = np.inf

    pu = np.empty(n_p)
    for i, p in enumerate(rnd.personas):
        node, m_ = _pair_forward(nodes[p.id], u, track_margin)
        pu[i] = node.score
        margin = min(margin, m_)
        pairs.append(("pu", i, 0, node))

    pk = np.empty((n_p, n_k))
    for i, p in enumerate(rnd.personas):
        for j, k in enumerate(rnd.knowledges):
            node, m_ = _pair_forward(nodes[p.id], nodes[k.id], track_margin)
            pk[i, j] = node.score
            margin = min(margin, m_)
            pairs.append(("pk", i, j, node))

    ku = np.empty(n_k)
    for j, k in enumerate(rnd.knowledges):
        node, m_ = _pair_forward(nodes[k.id], u, track_margin)
        ku[j] = node.score
        margin = min(margin, m_)
        pairs.append(("ku", j, 0, node))

    pk_rel = np.sum(pk, axis=1) / n_k
    kp_rel = np.sum(pk, axis=0) / n_p

    pg = model.pg_params
    kg = model.kg_params
    pg_logits = pg.w1 * pk_rel + pg.w2 * pu + pg.b
    kg_logits = kg.w1 * kp_rel + kg.w2 * ku + kg.b

    persona_probs = sigmoid(pg_logits)
    knowledge_dist = softmax(kg_logits)

    shifted = kg_logits - np.max(kg_logits)
    l_k = float(np.log(np.sum(np.exp(shifted))) - shifted[rnd.knowledge_label])

    if drop_lp:
        l_p = None
    else:
        y = np.asarray(rnd.persona_labels, dtype=np.float64)
        terms = -(
            cfg.w_star * y * log_sigmoid(pg_logits)
            + (1.0 - cfg.w_star) * (1.0 - y) * log_sigmoid(-pg_logits)
        )
        l_p = float(np.mean(terms))

    l_m = 0.0
    if lm_hook is not None:
        from .grounding import assemble_prompt, grounding_result

        result = grounding_result(persona_probs, knowledge_dist)
        l_m = float(lm_hook(assemble_prompt(rnd, result, " </s> "), None))

    loss = total_loss(l_k, l_p, l_m, cfg)
    if not np.isfinite(loss):
        raise NumericsError(f"non-finite loss for round {rnd.dialog_id}:{rnd.round}")

    return RoundGraph(
        pu=pu,
        pk=pk,
        ku=ku,
        pk_rel=pk_rel,
        kp_rel=kp_rel,
        pg_logits=pg_logits,
        kg_logits=kg_logits,
        persona_probs=persona_probs,
        knowledge_dist=knowledge_dist,
        l_k=l_k,
        l_p=l_p,
        l_m=l_m,
        loss=loss,
        tie_margin=margin,
        entries=nodes,
        pairs=pairs,
    )


def _pair_backward(weight: float, node: _PairNode) -> None:
    if weight == 0.0:
        return
    x, y = node.x, node.y
    gx, gy = x.grad(), y.grad()
    w_xy = weight / x.count
    w_yx = weight / y.count
    gx += w_xy * y.used[node.winners_xy]
    np.add.at(gy, node.winners_xy, w_xy * x.used)
    gy += w_yx * x.used[node.winners_yx]
    np.add.at(gx, node.winners_yx, w_yx * y.used)


def round_backward(
    model: ModelState,
    rnd: DialogueRound,
    graph: RoundGraph,
    cfg: TrainConfig,
) -> GradientSet:
    """Reverse pass over a cached forward graph."""
    n_p, n_k = len(rnd.personas), len(rnd.knowledges)
    one_hot = np.zeros(n_k)
    one_hot[rnd.knowledge_label] = 1.0
    d_kg_logits = cfg.alpha * (graph.knowledge_dist - one_hot)

    if graph.l_p is None:
        d_pg_logits = np.zeros(n_p)
    else:
        y = np.asarray(rnd.persona_labels, dtype=np.float64)
        probs = graph.persona_probs
        d_pg_logits = (cfg.beta / n_p) * (
            cfg.w_star * y * (probs - 1.0) + (1.0 - cfg.w_star) * (1.0 - y) * probs
        )

    pg = model.pg_params
    kg = model.kg_params
    grad_pg = np.array(
        [
            float(d_pg_logits @ graph.pk_rel),
            float(d_pg_logits @ graph.pu),
            float(np.sum(d_pg_logits)),
        ]
    )
    grad_kg = np.array(
        [
            float(d_kg_logits @ graph.kp_rel),
            float(d_kg_logits @ graph.ku),
            float(np.sum(d_kg_logits)),
        ]
    )

    d_pu = d_pg_logits * pg.w2
    d_ku = d_kg_logits * kg.w2
    d_pk = (
        np.outer(d_pg_logits * pg.w1, np.full(n_k, 1.0 / n_k))
        + np.outer(np.full(n_p, 1.0 / n_p), d_kg_logits * kg.w1)
    )

    for kind, i, j, node in graph.pairs:
        if kind == "pu":
            _pair_backward(float(d_pu[i]), node)
        elif kind == "ku":
            _pair_backward(float(d_ku[i]), node)
        else:
            _pair_backward(float(d_pk[i, j]), node)

    grad_w = np.zeros_like(model.reduction.weight)
    grad_v = None
    grad_c = 0.0
    if model.scorer is not None:
        grad_v = np.zeros_like(model.scorer.v)

    for entry in rnd.entries:
        node = graph.entries[entry.id]
        if node.grad_used is None:
            continue
        g_used = node.grad_used
        if node.gates is not None:
            # used = gate * reduced; gradient reaches both factors
            along = np.sum(g_used * node.reduced, axis=1)
            coef = along * node.gates * (1.0 - node.gates)
            d_reduced = node.gates[:, None] * g_used + np.outer(coef, model.scorer.v)
            grad_v += node.reduced.T @ coef
            grad_c += float(np.sum(coef))
            rows = slice(None)
        else:
            d_reduced = g_used
            rows = node.kept
        if node.norms is not None:
            reduced_rows = node.reduced[rows]
            norms_rows = node.norms[rows]
            d_z = (
                d_reduced
                - np.sum(d_reduced * reduced_rows, axis=1)[:, None] * reduced_rows
            ) / norms_rows[:, None]
        else:
            d_z = d_reduced
        grad_w += node.matrix[rows].T @ d_z

    return GradientSet(
        reduction=grad_w, scorer_v=grad_v, scorer_c=grad_c, pg=grad_pg, kg=grad_kg
    ).check_finite()


def gradients(
    model: ModelState,
    batch: Sequence[DialogueRound],
    cfg: TrainConfig,
    store: dict[str, TokenMatrix],
    idf: IdfTable | None = None,
    rng: np.random.Generator | None = None,
    lm_hook: LmHook | None = None,
    masks: dict[str, np.ndarray] | None = None,
) -> GradientSet:
    """Mean analytic gradient of the total loss over a batch of rounds."""
    if not batch:
        raise ConfigError("gradients over an empty batch")
    total: GradientSet | None = None
    for rnd in batch:
        drop = _decide_drop(rnd.persona_labels, cfg.p_star, rng)
        graph = round_forward(model, rnd, store, cfg, idf, drop, lm_hook, masks=masks)
        g = round_backward(model, rnd, graph, cfg)
        if total is None:
            total = g
        else:
            total.reduction += g.reduction
            total.pg += g.pg
            total.kg += g.kg
            if total.scorer_v is not None:
                total.scorer_v += g.scorer_v
                total.scorer_c += g.scorer_c
    scale = 1.0 / len(batch)
    total.reduction *= scale
    total.pg *= scale
    total.kg *= scale
    if total.scorer_v is not None:
        total.scorer_v *= scale
        total.scorer_c *= scale
    return total.check_finite()


def apply_gradients(model: ModelState, grads: GradientSet, lr: float) -> None:
    model.reduction.weight -= lr * grads.reduction
    if model.scorer is not None and grads.scorer_v is not None:
        model.scorer.v -= lr * grads.scorer_v
        model.scorer.c -= lr * grads.scorer_c
    for params, g in ((model.pg_params, grads.pg), (model.kg_params, grads.kg)):
        params.w1 -= lr * float(g[0])
        params.w2 -= lr * float(g[1])
        params.b -= lr * float(g[2])


def precompute_tfidf_masks(
    corpus: Sequence[DialogueRound],
    store: dict[str, TokenMatrix],
    idf: IdfTable,
    p_sr: float,
) -> dict[str, np.ndarray]:
    """Hard selection masks are parameter-free under TFIDF; fix them up front."""
    masks: dict[str, np.ndarray] = {}
    for rnd in corpus:
        for entry in rnd.entries:
            if entry.id in masks:
                continue
            m = store.get(entry.id)
            if m is None:
                raise ShapeError(f"no embedding stored for entry {entry.id!r}")
            sel = select_tokens(surface_weights(m.surfaces, idf), p_sr, entry.id)
            masks[entry.id] = np.asarray(sel.kept, dtype=np.intp)
    return masks


def train(
    corpus: Sequence[DialogueRound],
    store: dict[str, TokenMatrix],
    cfg: TrainConfig,
    idf: IdfTable | None = None,
    lm_hook: LmHook | None = None,
) -> ModelState:
    """Plain SGD, one round per step, deterministically shuffled per epoch."""
    cfg.validate()
    if not corpus:
        raise ConfigError("cannot train on an empty corpus")
    first = store.get(corpus[0].utterance.id)
    if first is None:
        raise ShapeError(f"no embedding stored for entry {corpus[0].utterance.id!r}")
    d = first.rows.shape[1]
    model = init_model(d, cfg)
    masks = None
    if cfg.strategy == TFIDF:
        if idf is None:
            idf = build_idf(corpus)
        masks = precompute_tfidf_masks(corpus, store, idf, cfg.P_sr)
    for epoch in range(cfg.epochs):
        order = np.random.default_rng([cfg.seed, epoch, 0]).permutation(len(corpus))
        rng_drop = np.random.default_rng([cfg.seed, epoch, 1])
        for idx in order:
            rnd = corpus[int(idx)]
            drop = _decide_drop(rnd.persona_labels, cfg.p_star, rng_drop)
            graph = round_forward(
                model, rnd, store, cfg, idf, drop, lm_hook, masks=masks
            )
            grads = round_backward(model, rnd, graph, cfg)
            apply_gradients(model, grads, cfg.learning_rate)
    return model


# ---------------------------------------------------------------------------
# Checkpoint IO: one JSON header line, then float32 parameter blocks
# ---------------------------------------------------------------------------


def _param_blocks(model: ModelState) -> list[tuple[str, np.ndarray]]:
    blocks = [("reduction", model.reduction.weight)]
    if model.scorer is not None:
        blocks.append(("scorer_v", model.scorer.v.reshape(1, -1)))
        blocks.append(("scorer_c", np.array([[model.scorer.c]])))
    blocks.append(("pg", model.pg_params.as_array().reshape(1, 3)))
    blocks.append(("kg", model.kg_params.as_array().reshape(1, 3)))
    return blocks


def save_checkpoint(
    path: str | Path,
    model: ModelState,
    cfg: TrainConfig,
    idf: IdfTable | None,
    d: int,
) -> None:
    blocks = _param_blocks(model)
    header = {
        "kind": CHECKPOINT_KIND,
        "version": CHECKPOINT_VERSION,
        "d": d,
        "d0": model.d0,
        "strategy": cfg.strategy,
        "cfg": dataclasses.asdict(cfg),
        "idf": None
        if idf is None
        else {"doc_count": idf.doc_count, "idf": idf.idf},
        "params": [[name, arr.shape[0], arr.shape[1]] for name, arr in blocks],
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8"))
        fh.write(b"\n")
        for _, arr in blocks:
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_checkpoint(path: str | Path) -> tuple[ModelState, TrainConfig, IdfTable | None]:
    with open(path, "rb") as fh:
        header_line = fh.readline()
        try:
            header = json.loads(header_line.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError):
            raise FormatError("unreadable checkpoint header") from None
        if header.get("kind") != CHECKPOINT_KIND:
            raise FormatError("not a checkpoint file")
        if header.get("version") != CHECKPOINT_VERSION:
            raise FormatError(f"unsupported checkpoint version {header.get('version')}")
        cfg = TrainConfig(**header["cfg"]).validate()
        arrays = {}
        for name, rows, cols in header["params"]:
            raw = fh.read(rows * cols * 4)
            if len(raw) != rows * cols * 4:
                raise FormatError(f"truncated parameter block {name!r}")
            arrays[name] = (
                np.frombuffer(raw, dtype="<f4").astype(np.float64).reshape(rows, cols)
            )
        if fh.read(1):
            raise FormatError("trailing bytes after parameter blocks")
    if "reduction" not in arrays or "pg" not in arrays or "kg" not in arrays:
        raise FormatError("checkpoint missing required parameter blocks")
    scorer = None
    if "scorer_v" in arrays:
        scorer = SaliencyScorer(
            v=arrays["scorer_v"].ravel(), c=float(arrays["scorer_c"][0, 0])
        )
    pg_arr = arrays["pg"].ravel()
    kg_arr = arrays["kg"].ravel()
    model = ModelState(
        reduction=ReductionLayer(weight=arrays["reduction"]),
        scorer=scorer,
        pg_params=FusionParams(*map(float, pg_arr), network=PG),
        kg_params=FusionParams(*map(float, kg_arr), network=KG),
    )
    idf = None
    if header.get("idf") is not None:
        idf = IdfTable(
            doc_count=int(header["idf"]["doc_count"]),
            idf={k: float(v) for k, v in header["idf"]["idf"].items()},
        )
    return model, cfg, idf
