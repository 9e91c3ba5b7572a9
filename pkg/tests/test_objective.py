import dataclasses
import math

import numpy as np
import pytest

from comac.corpus import load_corpus
from comac.embedding import hash_embed
from comac.errors import ConfigError, FormatError, LabelError, ShapeError
from comac.objective import (
    TrainConfig,
    apply_gradients,
    gradients,
    init_model,
    kg_loss,
    load_checkpoint,
    load_train_config,
    pg_loss,
    round_backward,
    round_forward,
    save_checkpoint,
    total_loss,
    train,
)
from comac.pipeline import score_round
from comac.saliency import build_idf
from comac.synthetic import gen_synthetic, write_records

import gradcheck


class TestKgLoss:
    def test_hand_value(self):
        assert kg_loss(np.array([1 / 3, 2 / 3]), 1) == pytest.approx(
            -math.log(2 / 3), abs=1e-12
        )

    def test_confident_correct(self):
        assert kg_loss(np.array([0.0, 1.0]), 1) == 0.0

    def test_label_out_of_range(self):
        with pytest.raises(LabelError):
            kg_loss(np.array([0.5, 0.3, 0.2]), 5)


class TestPgLoss:
    def test_weighted_hand_case(self):
        rng = np.random.default_rng(0)
        value = pg_loss(np.array([0.9, 0.1]), [True, False], 0.9, 0.1, rng)
        assert value == pytest.approx(-math.log(0.9) / 2.0, abs=1e-12)

    def test_never_dropped_when_p_star_zero(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            value = pg_loss(np.array([0.4, 0.4]), [False, False], 0.9, 0.0, rng)
            assert value is not None

    def test_drop_branch_forced_by_seed(self):
        # find a seed whose first uniform draw falls below 0.1
        seed = next(
            s for s in range(1000) if np.random.default_rng(s).uniform() < 0.1
        )
        value = pg_loss(
            np.array([0.4, 0.4]), [False, False], 0.9, 0.1, np.random.default_rng(seed)
        )
        assert value is None

    def test_positives_never_dropped(self):
        seed = next(
            s for s in range(1000) if np.random.default_rng(s).uniform() < 0.1
        )
        value = pg_loss(
            np.array([0.9, 0.4]), [True, False], 0.9, 0.1, np.random.default_rng(seed)
        )
        assert value is not None

    def test_half_weight_is_half_bce(self):
        rng = np.random.default_rng(1)
        probs = rng.uniform(0.05, 0.95, size=6)
        labels = rng.random(6) < 0.5
        value = pg_loss(probs, labels, 0.5, 0.0, rng)
        y = labels.astype(float)
        bce = float(np.mean(-(y * np.log(probs) + (1 - y) * np.log1p(-probs))))
        assert value == pytest.approx(0.5 * bce, abs=1e-12)

    def test_length_mismatch(self):
        with pytest.raises(ShapeError):
            pg_loss(np.array([0.5]), [True, False], 0.9, 0.0, np.random.default_rng(0))

    def test_drop_fraction_matches_p_star(self):
        rng = np.random.default_rng(42)
        p_star = 0.1
        dropped = sum(
            pg_loss(np.array([0.5, 0.5]), [False, False], 0.9, p_star, rng) is None
            for _ in range(10_000)
        )
        assert dropped / 10_000 == pytest.approx(p_star, abs=0.01)


class TestTotalLoss:
    def test_weighted_sum(self):
        cfg = TrainConfig(alpha=1.0, beta=1.0, gamma=10.0)
        assert total_loss(0.4, 0.05, 0.0, cfg) == pytest.approx(0.45)

    def test_dropped_persona_term(self):
        cfg = TrainConfig(alpha=2.0, beta=3.0, gamma=10.0)
        assert total_loss(0.4, None, 0.01, cfg) == pytest.approx(2.0 * 0.4 + 10.0 * 0.01)

    def test_zero_gamma(self):
        cfg = TrainConfig(alpha=1.0, beta=1.0, gamma=0.0)
        assert total_loss(0.3, 0.2, 123.0, cfg) == pytest.approx(0.5)

    def test_linear_in_weights(self):
        parts = (0.7, 0.3, 0.2)
        base = total_loss(*parts, TrainConfig(alpha=1, beta=1, gamma=1))
        doubled = total_loss(*parts, TrainConfig(alpha=2, beta=2, gamma=2))
        assert doubled == pytest.approx(2 * base)


class TestTrainConfig:
    def test_defaults(self):
        cfg = TrainConfig().validate()
        assert (cfg.alpha, cfg.beta, cfg.gamma) == (1.0, 1.0, 10.0)
        assert cfg.w_star == 0.9
        assert cfg.p_star == 0.1
        assert cfg.P_sr == 0.35
        assert cfg.strategy == "TFIDF"
        assert cfg.epochs == 2

    def test_invalid_values(self):
        with pytest.raises(ConfigError):
            TrainConfig(w_star=1.0).validate()
        with pytest.raises(ConfigError):
            TrainConfig(P_sr=0.0).validate()
        with pytest.raises(ConfigError):
            TrainConfig(strategy="WAT").validate()
        with pytest.raises(ConfigError):
            TrainConfig(learning_rate=0.0).validate()

    def test_config_file_round_trip(self, tmp_path):
        path = tmp_path / "train.cfg"
        path.write_text(
            "# comment line\n"
            "alpha=2.0\n"
            "beta=3.0\n"
            "gamma=5.0\n"
            "P_sr=0.5\n"
            "strategy=FF\n"
            "epochs=1\n"
            "seed=9\n"
            "normalize_tokens=false\n"
        )
        cfg = load_train_config(path)
        assert cfg.alpha == 2.0
        assert cfg.P_sr == 0.5
        assert cfg.strategy == "FF"
        assert cfg.normalize_tokens is False
        assert cfg.w_star == 0.9  # untouched default

    def test_config_file_unknown_key(self, tmp_path):
        path = tmp_path / "bad.cfg"
        path.write_text("w_age=1\n")
        with pytest.raises(ConfigError):
            load_train_config(path)


def _tiny_setup(tmp_path, n_rounds=12, strategy="TFIDF", d=16, seed=3):
    path = tmp_path / "tiny.jsonl"
    write_records(gen_synthetic(n_rounds, 3, 4, seed=seed), path)
    rounds = load_corpus(path)
    store = {}
    for rnd in rounds:
        for e in rnd.entries:
            store.setdefault(e.id, hash_embed(e, d, 0))
    cfg = TrainConfig(strategy=strategy, epochs=2, learning_rate=0.3, seed=1).validate()
    idf = build_idf(rounds)
    return rounds, store, cfg, idf


class TestGradients:
    @pytest.mark.parametrize("strategy", ["TFIDF", "FF"])
    def test_matches_finite_differences(self, tmp_path, strategy):
        rng = np.random.default_rng(7 if strategy == "TFIDF" else 8)
        rnd = gradcheck.build_fd_round(tmp_path, rng)
        store = gradcheck.embed_round(rnd, 16)
        idf = build_idf([rnd])
        cfg = TrainConfig(strategy=strategy, p_star=0.0).validate()
        model = gradcheck.randomize_model(init_model(16, cfg), rng)
        graph = round_forward(model, rnd, store, cfg, idf, drop_lp=False, track_margin=True)
        assert graph.tie_margin > 1e-4
        grads = round_backward(model, rnd, graph, cfg)
        analytic = gradcheck.flatten_grads(grads, model.scorer is not None)
        n = analytic.size
        coords = list(range(n - 6, n)) + list(range(0, n - 6, max(1, (n - 6) // 10)))
        worst = gradcheck.fd_check(model, rnd, store, cfg, idf, coords, analytic)
        assert worst <= 1e-4

    def test_dead_branches(self, tmp_path):
        rng = np.random.default_rng(9)
        rnd = gradcheck.build_fd_round(tmp_path, rng)
        rnd = dataclasses.replace(rnd, persona_labels=(False,) * len(rnd.personas))
        store = gradcheck.embed_round(rnd, 16)
        idf = build_idf([rnd])
        cfg = TrainConfig(gamma=0.0).validate()
        model = gradcheck.randomize_model(init_model(16, cfg), rng)

        graph = round_forward(model, rnd, store, cfg, idf, drop_lp=True)
        grads = round_backward(model, rnd, graph, cfg)
        np.testing.assert_array_equal(grads.pg, 0.0)

        # with the persona term dropped the kg path carries alpha * dL_K alone
        cfg2 = dataclasses.replace(cfg, alpha=2.0)
        graph2 = round_forward(model, rnd, store, cfg2, idf, drop_lp=True)
        grads2 = round_backward(model, rnd, graph2, cfg2)
        np.testing.assert_allclose(grads2.kg, 2.0 * grads.kg, atol=1e-12)
        np.testing.assert_allclose(grads2.reduction, 2.0 * grads.reduction, atol=1e-12)

    def test_zero_learning_rate_is_identity(self, tmp_path):
        rounds, store, cfg, idf = _tiny_setup(tmp_path)
        model = init_model(16, cfg)
        before = gradcheck.flatten_params(model)
        g = gradients(model, rounds[:2], cfg, store, idf, np.random.default_rng(0))
        apply_gradients(model, g, 0.0)
        np.testing.assert_array_equal(gradcheck.flatten_params(model), before)

    def test_batch_mean(self, tmp_path):
        rounds, store, cfg, idf = _tiny_setup(tmp_path)
        cfg = dataclasses.replace(cfg, p_star=0.0)
        model = init_model(16, cfg)
        g_all = gradients(model, rounds[:3], cfg, store, idf)
        singles = [gradients(model, [r], cfg, store, idf) for r in rounds[:3]]
        np.testing.assert_allclose(
            g_all.reduction, np.mean([g.reduction for g in singles], axis=0), atol=1e-12
        )
        np.testing.assert_allclose(
            g_all.kg, np.mean([g.kg for g in singles], axis=0), atol=1e-12
        )

    def test_empty_batch_rejected(self, tmp_path):
        rounds, store, cfg, idf = _tiny_setup(tmp_path)
        with pytest.raises(ConfigError):
            gradients(init_model(16, cfg), [], cfg, store, idf)


class TestForwardConsistency:
    def test_graph_scores_match_pipeline(self, tmp_path):
        rounds, store, cfg, idf = _tiny_setup(tmp_path)
        rng = np.random.default_rng(11)
        model = gradcheck.randomize_model(init_model(16, cfg), rng)
        for rnd in rounds[:4]:
            graph = round_forward(model, rnd, store, cfg, idf, drop_lp=False)
            scores = score_round(model, rnd, store, cfg, idf)
            np.testing.assert_allclose(graph.pu, scores.pu, atol=1e-12)
            np.testing.assert_allclose(graph.pk, scores.pk, atol=1e-12)
            np.testing.assert_allclose(graph.ku, scores.ku, atol=1e-12)

    def test_graph_persona_loss_matches_public_op(self, tmp_path):
        rounds, store, cfg, idf = _tiny_setup(tmp_path)
        rng = np.random.default_rng(12)
        model = gradcheck.randomize_model(init_model(16, cfg), rng)
        rnd = rounds[0]
        graph = round_forward(model, rnd, store, cfg, idf, drop_lp=False)
        public = pg_loss(
            graph.persona_probs,
            rnd.persona_labels,
            cfg.w_star,
            0.0,
            np.random.default_rng(0),
        )
        assert graph.l_p == pytest.approx(public, abs=1e-12)

    def test_graph_knowledge_loss_matches_public_op(self, tmp_path):
        rounds, store, cfg, idf = _tiny_setup(tmp_path)
        rng = np.random.default_rng(13)
        model = gradcheck.randomize_model(init_model(16, cfg), rng)
        rnd = rounds[0]
        graph = round_forward(model, rnd, store, cfg, idf, drop_lp=False)
        assert graph.l_k == pytest.approx(
            kg_loss(graph.knowledge_dist, rnd.knowledge_label), abs=1e-10
        )


class TestTrain:
    def test_zero_epochs_returns_initial_state(self, tmp_path):
        rounds, store, cfg, idf = _tiny_setup(tmp_path)
        cfg = dataclasses.replace(cfg, epochs=0)
        model = train(rounds, store, cfg, idf=idf)
        fresh = init_model(16, cfg)
        np.testing.assert_array_equal(
            gradcheck.flatten_params(model), gradcheck.flatten_params(fresh)
        )

    @pytest.mark.parametrize("strategy", ["TFIDF", "FF"])
    def test_same_seed_reproduces_parameters(self, tmp_path, strategy):
        rounds, store, cfg, idf = _tiny_setup(tmp_path, strategy=strategy)
        a = train(rounds, store, cfg, idf=idf)
        b = train(rounds, store, cfg, idf=idf)
        np.testing.assert_array_equal(
            gradcheck.flatten_params(a), gradcheck.flatten_params(b)
        )

    def test_training_moves_parameters(self, tmp_path):
        rounds, store, cfg, idf = _tiny_setup(tmp_path)
        model = train(rounds, store, cfg, idf=idf)
        fresh = init_model(16, cfg)
        assert not np.array_equal(
            gradcheck.flatten_params(model), gradcheck.flatten_params(fresh)
        )

    def test_lm_hook_contributes_to_loss_not_gradient(self, tmp_path):
        rounds, store, cfg, idf = _tiny_setup(tmp_path)
        cfg = dataclasses.replace(cfg, p_star=0.0)
        model = init_model(16, cfg)
        rnd = rounds[0]
        with_hook = round_forward(
            model, rnd, store, cfg, idf, drop_lp=False, lm_hook=lambda prompt, ref: 0.25
        )
        without = round_forward(model, rnd, store, cfg, idf, drop_lp=False)
        assert with_hook.loss == pytest.approx(without.loss + cfg.gamma * 0.25)
        g1 = round_backward(model, rnd, with_hook, cfg)
        g2 = round_backward(model, rnd, without, cfg)
        np.testing.assert_array_equal(g1.reduction, g2.reduction)


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        rounds, store, cfg, idf = _tiny_setup(tmp_path)
        model = train(rounds, store, cfg, idf=idf)
        path = tmp_path / "model.ckpt"
        save_checkpoint(path, model, cfg, idf, d=16)
        loaded, cfg2, idf2 = load_checkpoint(path)
        assert cfg2 == cfg
        assert idf2.doc_count == idf.doc_count
        assert idf2.idf == pytest.approx(idf.idf)
        # parameters survive float32 quantization exactly
        np.testing.assert_array_equal(
            loaded.reduction.weight,
            model.reduction.weight.astype(np.float32).astype(np.float64),
        )
        assert loaded.pg_params.w1 == pytest.approx(model.pg_params.w1, rel=1e-6)

    def test_ff_scorer_round_trip(self, tmp_path):
        rounds, store, cfg, idf = _tiny_setup(tmp_path, strategy="FF")
        model = train(rounds, store, cfg, idf=idf)
        path = tmp_path / "model.ckpt"
        save_checkpoint(path, model, cfg, idf=None, d=16)
        loaded, _, idf2 = load_checkpoint(path)
        assert idf2 is None
        np.testing.assert_array_equal(
            loaded.scorer.v, model.scorer.v.astype(np.float32).astype(np.float64)
        )

    def test_not_a_checkpoint(self, tmp_path):
        path = tmp_path / "junk.ckpt"
        path.write_bytes(b"\x00\x01binary junk\n more")
        with pytest.raises(FormatError):
            load_checkpoint(path)

    def test_truncated_blocks(self, tmp_path):
        rounds, store, cfg, idf = _tiny_setup(tmp_path)
        model = init_model(16, cfg)
        path = tmp_path / "model.ckpt"
        save_checkpoint(path, model, cfg, idf, d=16)
        data = path.read_bytes()
        path.write_bytes(data[:-8])
        with pytest.raises(FormatError):
            load_checkpoint(path)
