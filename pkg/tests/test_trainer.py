"""Training loop: config file handling, schedules, AdamW semantics,
determinism, watchdog, and log/embedding files."""

import numpy as np
import pytest

from graphboot.augment import AugmentConfig
from graphboot.autodiff import Tensor
from graphboot.encoder import ema_pairs
from graphboot.errors import ConfigError, NumericError, ParseError, DataError
from graphboot.objective import LossConfig
from graphboot.synth import SbmConfig, generate_sbm
from graphboot.trainer import (AdamWState, TrainConfig, adamw_step,
                               compute_embeddings, config_from_mapping,
                               load_embeddings_csv, lr_at, parse_config_file,
                               train, write_embeddings_csv, write_log_csv)


def _tiny_cfg(**over):
    base = dict(epochs=4, lr=1e-3, warmup_epochs=2, weight_decay=1e-5,
                seed=0, eval_every=0, hidden_dim=8, embed_dim=6,
                predictor_hidden=8)
    base.update(over)
    return TrainConfig(**base)


class TestTrainConfig:
    def test_defaults(self):
        cfg = TrainConfig()
        assert cfg.epochs == 2000 and cfg.lr == 5e-4
        assert cfg.warmup_epochs == 100 and cfg.weight_decay == 1e-5
        assert cfg.eval_every == 250 and cfg.ema_t_base == 0.99
        assert cfg.loss.variant == "blnn"

    def test_validation(self):
        with pytest.raises(ConfigError):
            TrainConfig(epochs=0)
        with pytest.raises(ConfigError):
            TrainConfig(lr=-1e-3)
        with pytest.raises(ConfigError):
            TrainConfig(eval_every=-1)
        with pytest.raises(ConfigError):
            TrainConfig(ema_t_base=1.5)
        with pytest.raises(ConfigError):
            TrainConfig(hidden_dim=0)


class TestConfigFile:
    def test_parse_and_route(self, tmp_path):
        p = tmp_path / "run.cfg"
        p.write_text(
            "# comment line\n"
            "epochs = 12\n"
            "lr=0.002   # trailing comment\n"
            "\n"
            "variant = bgrl_noisy\n"
            "tau = 0.5\n"
            "p_m1 = 0.3\n"
            "symmetric = false\n")
        cfg = config_from_mapping(parse_config_file(str(p)))
        assert cfg.epochs == 12 and cfg.lr == 0.002
        assert cfg.loss.variant == "bgrl_noisy" and cfg.loss.tau == 0.5
        assert cfg.augment.p_m1 == 0.3 and cfg.augment.p_d1 == 0.2
        assert cfg.loss.symmetric is False

    def test_unknown_key_names_location(self, tmp_path):
        p = tmp_path / "run.cfg"
        p.write_text("momentum = 0.9\n")
        with pytest.raises(ConfigError, match=r"run\.cfg:1"):
            parse_config_file(str(p))

    def test_bad_value_names_location(self, tmp_path):
        p = tmp_path / "run.cfg"
        p.write_text("epochs = 10\nlr = fast\n")
        with pytest.raises(ParseError, match=r"run\.cfg:2"):
            parse_config_file(str(p))

    def test_missing_equals(self, tmp_path):
        p = tmp_path / "run.cfg"
        p.write_text("epochs 10\n")
        with pytest.raises(ParseError, match="key = value"):
            parse_config_file(str(p))

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="missing config"):
            parse_config_file(str(tmp_path / "absent.cfg"))

    def test_mapping_rejects_unknown(self):
        with pytest.raises(ConfigError, match="unknown config keys"):
            config_from_mapping({"optimizer": "sgd"})


class TestLrSchedule:
    def test_warmup_starts_at_zero(self):
        cfg = TrainConfig(epochs=100, lr=0.01, warmup_epochs=10)
        assert lr_at(cfg, 0) == 0.0

    def test_warmup_is_linear(self):
        cfg = TrainConfig(epochs=100, lr=0.01, warmup_epochs=10)
        np.testing.assert_allclose(lr_at(cfg, 5), 0.005)

    def test_peak_at_warmup_end(self):
        cfg = TrainConfig(epochs=100, lr=0.01, warmup_epochs=10)
        assert lr_at(cfg, 10) == 0.01

    def test_final_epoch_is_nearly_zero(self):
        cfg = TrainConfig(epochs=1000, lr=0.01, warmup_epochs=100)
        assert lr_at(cfg, 999) < 0.01 / 100

    def test_monotone_decay_after_warmup(self):
        cfg = TrainConfig(epochs=50, lr=0.01, warmup_epochs=5)
        vals = [lr_at(cfg, e) for e in range(5, 50)]
        assert (np.diff(vals) < 0).all()

    def test_zero_warmup_starts_at_peak(self):
        cfg = TrainConfig(epochs=10, lr=0.01, warmup_epochs=0)
        assert lr_at(cfg, 0) == 0.01

    def test_epoch_range_enforced(self):
        cfg = TrainConfig(epochs=10)
        with pytest.raises(ValueError):
            lr_at(cfg, 10)
        with pytest.raises(ValueError):
            lr_at(cfg, -1)


class TestAdamw:
    def test_zero_gradient_zero_decay_is_fixed_point(self, rng):
        t = Tensor(rng.normal(size=(3, 3)), requires_grad=True)
        before = t.data.copy()
        opt = AdamWState()
        adamw_step(opt, [("w", t, False)], {t: np.zeros((3, 3))}, 0.1, 0.0)
        np.testing.assert_array_equal(t.data, before)

    def test_missing_gradient_means_zero(self, rng):
        t = Tensor(rng.normal(size=(2, 2)), requires_grad=True)
        before = t.data.copy()
        adamw_step(AdamWState(), [("w", t, False)], {}, 0.1, 0.0)
        np.testing.assert_array_equal(t.data, before)

    def test_decay_only_shrinks_multiplicatively(self, rng):
        t = Tensor(rng.normal(size=(2, 2)), requires_grad=True)
        before = t.data.copy()
        adamw_step(AdamWState(), [("w", t, False)], {}, lr_t=0.5,
                   weight_decay=0.01)
        np.testing.assert_allclose(t.data, before * (1 - 0.5 * 0.01),
                                   rtol=1e-15)

    def test_exempt_parameters_skip_decay(self, rng):
        t = Tensor(rng.normal(size=(2, 2)), requires_grad=True)
        before = t.data.copy()
        adamw_step(AdamWState(), [("bn", t, True)], {}, lr_t=0.5,
                   weight_decay=0.01)
        np.testing.assert_array_equal(t.data, before)

    def test_first_step_closed_form(self, rng):
        """Bias correction makes step 1 move by lr * g / (|g| + eps)."""
        g = rng.normal(size=(3, 2))
        t = Tensor(np.zeros((3, 2)), requires_grad=True)
        adamw_step(AdamWState(), [("w", t, False)], {t: g}, lr_t=0.01,
                   weight_decay=0.0)
        want = -0.01 * g / (np.abs(g) + 1e-8)
        np.testing.assert_allclose(t.data, want, rtol=1e-10)

    def test_first_step_magnitude_saturates_at_lr(self):
        t = Tensor(np.zeros((1, 3)), requires_grad=True)
        g = np.array([[100.0, -500.0, 1000.0]])
        adamw_step(AdamWState(), [("w", t, False)], {t: g}, lr_t=0.01,
                   weight_decay=0.0)
        np.testing.assert_allclose(np.abs(t.data), 0.01, rtol=1e-6)
        assert (np.sign(t.data) == -np.sign(g)).all()

    def test_two_steps_match_hand_formula(self, rng):
        g1, g2 = rng.normal(size=(2, 2)), rng.normal(size=(2, 2))
        t = Tensor(np.zeros((2, 2)), requires_grad=True)
        opt = AdamWState()
        adamw_step(opt, [("w", t, False)], {t: g1}, 0.01, 0.0)
        adamw_step(opt, [("w", t, False)], {t: g2}, 0.01, 0.0)
        m2 = 0.9 * (0.1 * g1) + 0.1 * g2
        v2 = 0.999 * (0.001 * g1 ** 2) + 0.001 * g2 ** 2
        step1 = -0.01 * g1 / (np.abs(g1) + 1e-8)
        step2 = -0.01 * (m2 / (1 - 0.9 ** 2)) / (np.sqrt(v2 / (1 - 0.999 ** 2)) + 1e-8)
        np.testing.assert_allclose(t.data, step1 + step2, rtol=1e-9)


class TestTrain:
    def test_zero_lr_changes_only_running_stats(self, small_sbm):
        g, labels = small_sbm
        cfg = _tiny_cfg(epochs=1, lr=0.0, weight_decay=0.0)
        result = train(g, labels, cfg)
        st = result.state
        # fresh init with the same seed reproduces the starting point
        from graphboot.encoder import init_encoder_state
        ss = np.random.SeedSequence(cfg.seed).spawn(2)[0]
        fresh = init_encoder_state(g.n_features, cfg.hidden_dim, cfg.embed_dim,
                                   cfg.predictor_hidden,
                                   np.random.default_rng(ss),
                                   n_layers=cfg.n_layers)
        for got, want in zip(st.online_layers, fresh.online_layers):
            np.testing.assert_array_equal(got.weight.data, want.weight.data)
            np.testing.assert_array_equal(got.bias.data, want.bias.data)
        # batchnorm buffers did move
        assert not np.array_equal(st.online_layers[0].bn_running_mean,
                                  fresh.online_layers[0].bn_running_mean)
        # target weights stayed equal to the (unchanged) online weights
        for t_lay, o_lay in zip(st.target_layers, st.online_layers):
            np.testing.assert_allclose(t_lay.weight.data, o_lay.weight.data,
                                       rtol=1e-14, atol=0)

    def test_bgrl_equals_blnn_with_zero_neighbor_weight(self, small_sbm):
        g, labels = small_sbm
        a = train(g, None, _tiny_cfg(loss=LossConfig(variant="bgrl")))
        b = train(g, None, _tiny_cfg(
            loss=LossConfig(variant="blnn", neighbor_term_weight=0.0)))
        for pa, pb in zip(ema_pairs(a.state), ema_pairs(b.state)):
            np.testing.assert_array_equal(pa[1], pb[1])
        assert [r["loss"] for r in a.log_rows] == [r["loss"] for r in b.log_rows]

    def test_bit_identical_reruns(self, small_sbm):
        g, labels = small_sbm
        cfg = _tiny_cfg(epochs=4, eval_every=2)
        r1 = train(g, labels, cfg)
        r2 = train(g, labels, cfg)
        np.testing.assert_array_equal(compute_embeddings(r1.state, g),
                                      compute_embeddings(r2.state, g))
        assert r1.log_rows == r2.log_rows
        assert r1.best_acc == r2.best_acc and r1.best_epoch == r2.best_epoch

    def test_target_lags_online_after_training(self, small_sbm):
        g, _ = small_sbm
        result = train(g, None, _tiny_cfg())
        st = result.state
        gaps = [np.abs(t.weight.data - o.weight.data).max()
                for t, o in zip(st.target_layers, st.online_layers)]
        assert max(gaps) > 0

    def test_log_rows_have_snapshot_columns(self, small_sbm):
        g, labels = small_sbm
        result = train(g, labels, _tiny_cfg(epochs=4, eval_every=2))
        snap = [r for r in result.log_rows if r["acc"] is not None]
        assert [r["epoch"] for r in snap] == [1, 3]
        for r in result.log_rows:
            assert set(r) == {"epoch", "loss", "loss_node_term",
                              "loss_neighbor_term", "lr", "ema_decay",
                              "acc", "nmi"}
        assert result.best_acc == max(r["acc"] for r in snap)
        assert result.final_row is result.log_rows[-1]

    def test_non_finite_loss_aborts_with_diagnostic(self, small_sbm):
        g, _ = small_sbm
        cfg = _tiny_cfg(epochs=5, lr=1e200, warmup_epochs=0, weight_decay=0.0)
        with np.errstate(all="ignore"):
            with pytest.raises(NumericError, match="non-finite loss at epoch"):
                train(g, None, cfg)

    def test_labels_required_rules(self, small_sbm):
        g, labels = small_sbm
        with pytest.raises(ConfigError, match="bgrl_clean"):
            train(g, None, _tiny_cfg(loss=LossConfig(variant="bgrl_clean")))
        with pytest.raises(ConfigError, match="eval_every"):
            train(g, None, _tiny_cfg(eval_every=2))
        from graphboot.graph import Labels
        short = Labels(np.zeros(3, dtype=np.int64), 2)
        with pytest.raises(ConfigError, match="labels"):
            train(g, short, _tiny_cfg())

    def test_loss_descends_and_embeddings_spread(self):
        """500 epochs on a 300-node block-model graph: the smoothed loss
        moves down over the first 50 epochs and the embeddings never
        collapse to a single direction."""
        g, labels = generate_sbm(SbmConfig(300, 3, 0.05, 0.005, 32, seed=42))
        cfg = TrainConfig(epochs=500, lr=5e-4, warmup_epochs=100,
                          weight_decay=1e-5, seed=0, eval_every=0,
                          hidden_dim=64, embed_dim=32, predictor_hidden=64,
                          loss=LossConfig(variant="blnn", tau=1.0))
        result = train(g, labels, cfg)
        losses = np.array([r["loss"] for r in result.log_rows[:50]])
        ma = np.convolve(losses, np.ones(10) / 10, mode="valid")
        assert ma[-1] < ma[0]
        assert (np.diff(ma) < 0).mean() > 0.9  # decreasing nearly everywhere

        H = compute_embeddings(result.state, g)
        Hn = H / np.maximum(np.linalg.norm(H, axis=1, keepdims=True), 1e-12)
        sims = (Hn @ Hn.T)[np.triu_indices(300, k=1)]
        assert sims.std() > 0.01


class TestLogAndEmbeddingFiles:
    def test_log_csv_layout(self, tmp_path):
        rows = [{"epoch": 0, "loss": 0.5, "loss_node_term": 0.25,
                 "loss_neighbor_term": 0.25, "lr": 1e-3, "ema_decay": 0.99,
                 "acc": None, "nmi": None},
                {"epoch": 1, "loss": 0.4, "loss_node_term": 0.2,
                 "loss_neighbor_term": 0.2, "lr": 2e-3, "ema_decay": 0.991,
                 "acc": 0.75, "nmi": 0.5}]
        path = tmp_path / "log.csv"
        write_log_csv(rows, str(path))
        lines = path.read_text().splitlines()
        assert lines[0] == ("epoch,loss,loss_node_term,loss_neighbor_term,"
                            "lr,ema_decay,acc,nmi")
        assert lines[1].endswith(",,")  # blank metric columns off-snapshot
        assert lines[2].split(",")[6] == "0.75"
        assert len(lines) == 3

    def test_embeddings_round_trip_exactly(self, rng, tmp_path):
        H = rng.normal(size=(7, 4)) * np.pi
        path = tmp_path / "emb.csv"
        write_embeddings_csv(H, str(path))
        H2 = load_embeddings_csv(str(path), 7)
        np.testing.assert_array_equal(H, H2)

    def test_loading_validates(self, rng, tmp_path):
        path = tmp_path / "emb.csv"
        with pytest.raises(DataError, match="missing embeddings"):
            load_embeddings_csv(str(path), 3)
        path.write_text("1.0,2.0\nx,3.0\n")
        with pytest.raises(ParseError, match="emb.csv:2"):
            load_embeddings_csv(str(path), 2)
        path.write_text("1.0,2.0\n3.0,4.0\n")
        with pytest.raises(ParseError, match="rows for 5 nodes"):
            load_embeddings_csv(str(path), 5)
