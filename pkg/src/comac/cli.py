"""Command-line surface for the grounding engine.

Subcommands cover the whole batch pipeline: IDF precomputation, hash
embedding, embedding import validation, training, grounding inference,
evaluation, ablation sweeps, synthetic corpus generation, and a scoring
benchmark. Exit codes: 0 success, 1 runtime error, 2 usage/IO error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import datetime
import itertools
import json
import sys
import time
from pathlib import Path

from . import corpus as corpus_mod
from . import embedding as emb_mod
from . import objective as obj_mod
from . import pipeline as pipe_mod
from . import saliency as sal_mod
from . import synthetic as syn_mod
from .errors import (
    ConfigError,
    EmptyCorpus,
    EngineError,
    FormatError,
    ParseError,
    SchemaError,
)

USAGE_ERRORS = (ParseError, SchemaError, FormatError, ConfigError, EmptyCorpus)


def _write_json(payload: dict, path: str | None) -> None:
    text = json.dumps(payload, sort_keys=True, indent=2) + "\n"
    if path:
        Path(path).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _load_store(path: str) -> dict[str, emb_mod.TokenMatrix]:
    return emb_mod.import_embeddings(path)


def _store_dim(store: dict[str, emb_mod.TokenMatrix]) -> int:
    first = next(iter(store.values()))
    return first.rows.shape[1]


def _parse_bool(raw: str) -> bool:
    if raw.lower() in ("true", "1", "yes"):
        return True
    if raw.lower() in ("false", "0", "no"):
        return False
    raise argparse.ArgumentTypeError(f"expected true/false, got {raw!r}")


_CFG_FLOAT = ("alpha", "beta", "gamma", "w_star", "p_star", "P_sr", "learning_rate")
_CFG_INT = ("d0", "epochs", "seed")


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    for name in _CFG_FLOAT:
        parser.add_argument(f"--{name}", type=float, default=None)
    for name in _CFG_INT:
        parser.add_argument(f"--{name}", type=int, default=None)
    parser.add_argument("--strategy", choices=(sal_mod.TFIDF, sal_mod.FF), default=None)
    parser.add_argument("--normalize_tokens", type=_parse_bool, default=None)


def _config_from_args(args: argparse.Namespace) -> obj_mod.TrainConfig:
    if getattr(args, "config", None):
        cfg = obj_mod.load_train_config(args.config)
    else:
        cfg = obj_mod.TrainConfig()
    overrides = {}
    for field in dataclasses.fields(obj_mod.TrainConfig):
        value = getattr(args, field.name, None)
        if value is not None:
            overrides[field.name] = value
    return dataclasses.replace(cfg, **overrides).validate()


def _cmd_build_idf(args) -> int:
    rounds = corpus_mod.load_corpus(args.corpus)
    table = sal_mod.build_idf(rounds)
    sal_mod.save_idf(table, args.output)
    print(f"idf table over {table.doc_count} documents -> {args.output}")
    return 0


def _cmd_embed(args) -> int:
    rounds = corpus_mod.load_corpus(args.corpus)
    matrices = []
    seen = set()
    for rnd in rounds:
        for entry in rnd.entries:
            if entry.id in seen:
                continue
            seen.add(entry.id)
            matrices.append(emb_mod.hash_embed(entry, args.dim, args.seed))
    emb_mod.write_embeddings(matrices, args.dim, args.output)
    print(f"{len(matrices)} entries embedded at d={args.dim} -> {args.output}")
    return 0


def _cmd_import_embeddings(args) -> int:
    store = emb_mod.import_embeddings(args.path, expect_dim=args.expect_dim)
    d = _store_dim(store)
    tokens = sum(m.rows.shape[0] for m in store.values())
    print(f"{len(store)} entries, {tokens} token rows, d={d}: ok")
    return 0


def _cmd_train(args) -> int:
    cfg = _config_from_args(args)
    rounds = corpus_mod.load_corpus(args.corpus)
    store = _load_store(args.embeddings)
    idf = None
    if cfg.strategy == sal_mod.TFIDF:
        idf = sal_mod.load_idf(args.idf) if args.idf else sal_mod.build_idf(rounds)
    model = obj_mod.train(rounds, store, cfg, idf=idf)
    obj_mod.save_checkpoint(args.output, model, cfg, idf, d=_store_dim(store))
    print(f"trained {cfg.epochs} epochs on {len(rounds)} rounds -> {args.output}")
    return 0


def _cmd_ground(args) -> int:
    model, cfg, idf = obj_mod.load_checkpoint(args.model)
    rounds = corpus_mod.load_corpus(args.corpus)
    store = _load_store(args.embeddings)
    with open(args.output, "w", encoding="utf-8") as fh:
        for rnd in rounds:
            result, _ = pipe_mod.ground_round(model, rnd, store, cfg, idf)
            record = pipe_mod.ground_record(rnd, result, args.sep)
            fh.write(json.dumps(record, sort_keys=True) + "\n")
    print(f"grounded {len(rounds)} rounds -> {args.output}")
    return 0


def _load_responses(path: str) -> list[tuple[str, str]]:
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                pairs.append((record["candidate"], record["reference"]))
            except (json.JSONDecodeError, KeyError, TypeError):
                raise ParseError(line_no, "expected {candidate, reference}") from None
    return pairs


def _cmd_eval(args) -> int:
    model, cfg, idf = obj_mod.load_checkpoint(args.model)
    rounds = corpus_mod.load_corpus(args.corpus)
    store = _load_store(args.embeddings)
    responses = _load_responses(args.responses) if args.responses else None
    report = pipe_mod.evaluate(model, rounds, store, cfg, idf, responses)
    if args.stamp:
        report["generated_at"] = datetime.datetime.now(datetime.timezone.utc).isoformat()
    _write_json(report, args.output)
    return 0


def _parse_grid(raw: str | None, default: float) -> list[float]:
    if raw is None:
        return [default]
    values = [float(part) for part in raw.split(",") if part.strip()]
    if not values:
        raise ConfigError(f"empty grid value {raw!r}")
    return values


SWEEP_COLUMNS = (
    "alpha",
    "beta",
    "gamma",
    "P_sr",
    "kg_accuracy",
    "pg_accuracy",
    "pg_f1",
    "pg_precision",
    "pg_recall",
)


def _cmd_sweep(args) -> int:
    base = _config_from_args(args)
    alphas = _parse_grid(args.alpha_grid, base.alpha)
    betas = _parse_grid(args.beta_grid, base.beta)
    gammas = _parse_grid(args.gamma_grid, base.gamma)
    ratios = _parse_grid(args.P_sr_grid, base.P_sr)
    cells = list(itertools.product(alphas, betas, gammas, ratios))
    if not cells:
        raise ConfigError("empty sweep grid")
    if args.constrain_sum10:
        for a, b, g, _ in cells:
            if abs(a + b + g - 10.0) > 1e-9:
                raise ConfigError(
                    f"cell ({a:g},{b:g},{g:g}) violates alpha+beta+gamma=10 "
                    f"(sums to {a + b + g:g})"
                )

    train_rounds = corpus_mod.load_corpus(args.corpus)
    eval_rounds = corpus_mod.load_corpus(args.eval_corpus or args.corpus)
    store = _load_store(args.embeddings)

    rows = []
    for a, b, g, ratio in cells:
        cfg = dataclasses.replace(
            base, alpha=a, beta=b, gamma=g, P_sr=ratio
        ).validate()
        idf = sal_mod.build_idf(train_rounds) if cfg.strategy == sal_mod.TFIDF else None
        model = obj_mod.train(train_rounds, store, cfg, idf=idf)
        report = pipe_mod.evaluate(model, eval_rounds, store, cfg, idf)
        rows.append(
            {
                "alpha": a,
                "beta": b,
                "gamma": g,
                "P_sr": ratio,
                "kg_accuracy": report["kg_accuracy"],
                "pg_accuracy": report["pg"]["accuracy"],
                "pg_f1": report["pg"]["f1"],
                "pg_precision": report["pg"]["precision"],
                "pg_recall": report["pg"]["recall"],
            }
        )

    with open(args.output, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=SWEEP_COLUMNS)
        writer.writeheader()
        writer.writerows(rows)
    print(f"{len(rows)} sweep cells -> {args.output}")
    return 0


def _cmd_gen_synthetic(args) -> int:
    records = syn_mod.gen_synthetic(args.n_rounds, args.n_p, args.n_k, args.seed)
    syn_mod.write_records(records, args.output)
    print(f"{len(records)} synthetic rounds -> {args.output}")
    return 0


def _cmd_bench(args) -> int:
    rounds = corpus_mod.load_corpus(args.corpus)
    store = _load_store(args.embeddings)
    idf = sal_mod.build_idf(rounds)
    base = obj_mod.TrainConfig(P_sr=args.P_sr).validate()
    model = obj_mod.init_model(_store_dim(store), base)

    def time_scoring(cfg: obj_mod.TrainConfig) -> float:
        best = float("inf")
        for _ in range(args.repeat):
            start = time.perf_counter()
            for rnd in rounds:
                pipe_mod.score_round(model, rnd, store, cfg, idf)
            best = min(best, time.perf_counter() - start)
        return best

    sampled = time_scoring(base)
    full = time_scoring(dataclasses.replace(base, P_sr=1.0))
    payload = {
        "rounds": len(rounds),
        "P_sr": args.P_sr,
        "sampled_seconds": sampled,
        "full_seconds": full,
        "speedup_pct": 100.0 * (full - sampled) / full if full > 0 else 0.0,
    }
    sys.stdout.write(json.dumps(payload, sort_keys=True, indent=2) + "\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="comac",
        description="Persona/knowledge grounding engine over sparse symmetric "
        "normalized late-interaction similarity.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-idf", help="precompute the IDF table for a corpus")
    p.add_argument("corpus")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=_cmd_build_idf)

    p = sub.add_parser("embed", help="hash-embed a corpus into the binary format")
    p.add_argument("corpus")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--dim", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_embed)

    p = sub.add_parser("import-embeddings", help="validate a binary embedding file")
    p.add_argument("path")
    p.add_argument("--expect_dim", type=int, default=None)
    p.set_defaults(func=_cmd_import_embeddings)

    p = sub.add_parser("train", help="train the grounding model")
    p.add_argument("corpus")
    p.add_argument("--embeddings", required=True)
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--config", default=None, help="flat key=value config file")
    p.add_argument("--idf", default=None, help="precomputed IDF table (JSON)")
    _add_config_flags(p)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("ground", help="write grounding records for a corpus")
    p.add_argument("corpus")
    p.add_argument("--model", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--sep", default=corpus_mod.HISTORY_SEP)
    p.set_defaults(func=_cmd_ground)

    p = sub.add_parser("eval", help="evaluate a trained model on a corpus")
    p.add_argument("corpus")
    p.add_argument("--model", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("-o", "--output", default=None)
    p.add_argument("--responses", default=None, help="JSONL of {candidate, reference}")
    p.add_argument("--stamp", action="store_true")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("sweep", help="grid sweep over loss weights and P_sr")
    p.add_argument("corpus")
    p.add_argument("--eval_corpus", default=None)
    p.add_argument("--embeddings", required=True)
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--alpha_grid", default=None, help="comma-separated alphas")
    p.add_argument("--beta_grid", default=None)
    p.add_argument("--gamma_grid", default=None)
    p.add_argument("--P_sr_grid", default=None)
    p.add_argument("--constrain_sum10", action="store_true")
    p.add_argument("--config", default=None)
    _add_config_flags(p)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("gen-synthetic", help="generate a synthetic corpus")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--n_rounds", type=int, default=500)
    p.add_argument("--n_p", type=int, default=5)
    p.add_argument("--n_k", type=int, default=10)
    p.add_argument("--seed", type=int, default=7)
    p.set_defaults(func=_cmd_gen_synthetic)

    p = sub.add_parser("bench", help="time similarity scoring with/without sampling")
    p.add_argument("corpus")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--P_sr", type=float, default=0.35)
    p.add_argument("--repeat", type=int, default=3)
    p.set_defaults(func=_cmd_bench)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except USAGE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except EngineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
