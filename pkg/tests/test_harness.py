"""Experiment harness: config, metrics, checkpoints, plotting, CLI, trainer."""

import os
import xml.etree.ElementTree as ET

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cure_rl import checkpoint as ckpt
from cure_rl.cli import main as cli_main
from cure_rl.config import (ExperimentConfig, config_hash, flatten, load_config,
                            save_config, set_by_path)
from cure_rl.metrics import COLUMNS, LossAggregator, MetricsWriter, read_metrics
from cure_rl.plotting import collect_series, plot_reward_curves
from cure_rl.train import Trainer, train


def tiny_cfg(**kw):
    cfg = ExperimentConfig()
    cfg.task = "point_reacher"
    cfg.seed = 1
    cfg.steps = 30
    cfg.batch_size = 8
    cfg.hidden_dim = 32
    cfg.init_steps = 10
    cfg.render_size = 20
    cfg.crop_size = 16
    cfg.horizon = 40
    cfg.srl.z_dim = 16
    cfg.eval.interval = 20
    cfg.eval.episodes = 1
    cfg.replay.capacity = 200
    for k, v in kw.items():
        set_by_path(cfg, k, v)
    cfg.validate()
    return cfg


class TestConfig:
    def test_defaults_match_published_table(self):
        cfg = ExperimentConfig()
        flat = flatten(cfg)
        assert flat["batch_size"] == 128
        assert flat["replay.capacity"] == 80000
        assert flat["gamma"] == 0.99
        assert flat["hidden_dim"] == 1024
        assert flat["cure.p_c"] == 0.2
        assert flat["frames"] == 3
        assert flat["critic.lr"] == 1e-3
        assert flat["critic.target_freq"] == 2
        assert flat["critic.tau"] == 0.01
        assert flat["actor.lr"] == 1e-3
        assert flat["actor.freq"] == 2
        assert flat["actor.log_std"] == [-10.0, 2.0]
        assert flat["srl.lr"] == 1e-3
        assert flat["srl.decoder_freq"] == 1
        assert flat["alpha.lr"] == 1e-4
        assert flat["alpha.init"] == 0.1
        assert flat["init_steps"] == 1000
        assert flat["cure.beta"] == 1.0

    def test_set_by_path_coerces_types(self):
        cfg = ExperimentConfig()
        set_by_path(cfg, "critic.lr", "0.005")
        set_by_path(cfg, "steps", "123")
        set_by_path(cfg, "cure.enabled", "false")
        assert cfg.critic.lr == 0.005 and cfg.steps == 123 and cfg.cure.enabled is False

    def test_set_by_path_rejects_unknown_key(self):
        with pytest.raises(KeyError):
            set_by_path(ExperimentConfig(), "critic.nope", "1")

    def test_file_roundtrip(self, tmp_path):
        cfg = tiny_cfg()
        path = tmp_path / "c.txt"
        save_config(cfg, str(path))
        loaded = load_config(str(path))
        assert flatten(loaded) == flatten(cfg)

    def test_parse_error_names_line(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("seed = 1\nthis is not a setting\n")
        with pytest.raises(ValueError, match="2"):
            load_config(str(path))

    def test_hash_ignores_out_and_steps(self):
        a, b = tiny_cfg(), tiny_cfg()
        b.out = "/elsewhere"
        b.steps = 999
        assert config_hash(a) == config_hash(b)
        b.gamma = 0.5
        assert config_hash(a) != config_hash(b)

    def test_crop_defaults_to_render_minus_four(self):
        cfg = ExperimentConfig()
        cfg.crop_size = 0
        cfg.render_size = 36
        assert cfg.crop == 32
        cfg.crop_size = 20
        assert cfg.crop == 20

    def test_validate_rejects_bad_values(self):
        cfg = tiny_cfg()
        cfg.cure.p_c = 1.5
        with pytest.raises(ValueError):
            cfg.validate()


class TestMetrics:
    def test_writer_reader_roundtrip(self, tmp_path):
        path = str(tmp_path / "m.csv")
        agg = LossAggregator()
        agg.add("critic_task", 1.0)
        agg.add("srl", 2.0)
        agg.add("curious_count", 1)
        for _ in range(4):
            agg.add("action_count", 1)
        with MetricsWriter(path) as w:
            w.write_row("train", 10, 0, 3.5, agg.flush())
        rows = read_metrics(path)
        assert len(rows) == 1
        r = rows[0]
        assert r["kind"] == "train" and r["step"] == 10
        assert r["reward"] == 3.5
        assert r["critic_loss_task"] == 1.0
        assert r["curious_fraction"] == 0.25

    def test_reader_rejects_wrong_header(self, tmp_path):
        path = tmp_path / "m.csv"
        path.write_text("a,b,c\n1,2,3\n")
        with pytest.raises(ValueError, match="header"):
            read_metrics(str(path))

    def test_reader_rejects_short_row_with_line_number(self, tmp_path):
        path = tmp_path / "m.csv"
        path.write_text(",".join(COLUMNS) + "\ntrain,1,0\n")
        with pytest.raises(ValueError, match=":2"):
            read_metrics(str(path))

    def test_aggregator_flush_resets(self):
        agg = LossAggregator()
        agg.add("srl", 2.0)
        agg.add("srl", 4.0)
        first = agg.flush()
        assert first["srl"] == 3.0
        assert agg.flush()["srl"] == 0.0


class TestCheckpointFormat:
    def _save(self, tmp_path, arrays=None, meta=None, h="ab" * 32):
        path = str(tmp_path / "x.ckpt")
        ckpt.save(path, h, arrays or {"w": np.arange(4, dtype=np.float32)},
                  meta or {"phase": "main"})
        return path

    def test_roundtrip(self, tmp_path):
        path = self._save(tmp_path)
        arrays, meta, h = ckpt.load(path, expected_hash="ab" * 32)
        np.testing.assert_array_equal(arrays["w"], np.arange(4, dtype=np.float32))
        assert meta["phase"] == "main"

    def test_bad_magic_rejected(self, tmp_path):
        path = self._save(tmp_path)
        blob = bytearray(open(path, "rb").read())
        blob[0] ^= 0xFF
        open(path, "wb").write(bytes(blob))
        with pytest.raises(ckpt.CheckpointError, match="magic"):
            ckpt.load(path)

    def test_truncation_rejected(self, tmp_path):
        path = self._save(tmp_path)
        blob = open(path, "rb").read()
        open(path, "wb").write(blob[:-5])
        with pytest.raises(ckpt.CheckpointError):
            ckpt.load(path)

    def test_hash_mismatch_rejected(self, tmp_path):
        path = self._save(tmp_path)
        with pytest.raises(ckpt.CheckpointError, match="hash"):
            ckpt.load(path, expected_hash="cd" * 32)

    def test_trailing_garbage_rejected(self, tmp_path):
        path = self._save(tmp_path)
        with open(path, "ab") as f:
            f.write(b"extra")
        with pytest.raises(ckpt.CheckpointError):
            ckpt.load(path)

    def test_save_is_atomic(self, tmp_path):
        # a failing save must not clobber an existing good checkpoint
        path = self._save(tmp_path)
        good = open(path, "rb").read()
        with pytest.raises(Exception):
            ckpt.save(path, "ab" * 32, {"w": object()}, {})
        assert open(path, "rb").read() == good


class TestPlotting:
    def _write_csv(self, path, rows):
        with MetricsWriter(str(path)) as w:
            agg = LossAggregator()
            for step, reward in rows:
                w.write_row("eval", step, 0, reward, agg.flush())

    def test_envelope_ordering_on_synthetic_csvs(self, tmp_path):
        paths = []
        for i in range(3):
            p = tmp_path / f"m{i}.csv"
            self._write_csv(p, [(s, float(i + s)) for s in (10, 20, 30)])
            paths.append(str(p))
        out = str(tmp_path / "plot.svg")
        steps, mean, lo, hi = plot_reward_curves(paths, out)
        assert steps == [10, 20, 30]
        for m, l, h in zip(mean, lo, hi):
            assert l <= m <= h
        ET.parse(out)  # well-formed XML

    def test_intersects_common_steps(self, tmp_path):
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        self._write_csv(p1, [(10, 1.0), (20, 2.0)])
        self._write_csv(p2, [(20, 3.0), (30, 4.0)])
        steps, values = collect_series([str(p1), str(p2)])
        assert steps == [20]
        assert values == [[2.0], [3.0]]

    def test_no_common_steps_rejected(self, tmp_path):
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        self._write_csv(p1, [(10, 1.0)])
        self._write_csv(p2, [(20, 2.0)])
        with pytest.raises(ValueError):
            collect_series([str(p1), str(p2)])


class TestTrainer:
    def test_short_run_produces_metrics_and_checkpoint(self, tmp_path):
        out = str(tmp_path / "run")
        train(tiny_cfg(), out)
        rows = read_metrics(os.path.join(out, "metrics.csv"))
        assert any(r["kind"] == "train" for r in rows)
        assert any(r["kind"] == "eval" for r in rows)
        assert os.path.exists(os.path.join(out, "checkpoint.ckpt"))

    def test_rerun_is_byte_identical(self, tmp_path):
        m = []
        for d in ("a", "b"):
            out = str(tmp_path / d)
            train(tiny_cfg(), out)
            m.append(open(os.path.join(out, "metrics.csv"), "rb").read())
        assert m[0] == m[1]

    def test_resume_matches_uninterrupted_run(self, tmp_path):
        full = str(tmp_path / "full")
        train(tiny_cfg(steps=50), full)
        split = str(tmp_path / "split")
        train(tiny_cfg(steps=25), split)
        train(tiny_cfg(steps=50), split,
              resume=os.path.join(split, "checkpoint.ckpt"))
        assert (open(os.path.join(full, "metrics.csv"), "rb").read()
                == open(os.path.join(split, "metrics.csv"), "rb").read())

    def test_evaluation_never_touches_buffer_or_streams(self, tmp_path):
        cfg = tiny_cfg()
        tr = Trainer(cfg, str(tmp_path))
        tr.obs = tr.env.reset()
        from cure_rl.metrics import MetricsWriter as MW
        w = MW(os.path.join(str(tmp_path), "m.csv"))
        for t in range(15):
            tr._step_once(t, "mixed", True, True, w, False)
        n = len(tr.buffer)
        state_before = {k: tr.streams[k].bit_generator.state
                        for k in ("explore", "task_actor", "mix", "replay", "crop")}
        tr.evaluate(episodes=1)
        assert len(tr.buffer) == n
        for k, s in state_before.items():
            assert tr.streams[k].bit_generator.state == s

    def test_training_error_names_phase_and_step(self, tmp_path):
        cfg = tiny_cfg()
        tr = Trainer(cfg, str(tmp_path))

        def boom(*a, **kw):
            raise RuntimeError("synthetic failure")

        tr.srl.update = boom
        with pytest.raises(RuntimeError, match="main step"):
            tr.run_main()

    def test_resume_from_pretrain_checkpoint_rejected(self, tmp_path):
        cfg = tiny_cfg(**{"pretrain.mode": "random", "pretrain.steps": 15})
        tr = Trainer(cfg, str(tmp_path))
        tr.phase = "pretrain"
        path = tr.save_checkpoint(os.path.join(str(tmp_path), "pre.ckpt"))
        with pytest.raises(ckpt.CheckpointError, match="main"):
            train(cfg, str(tmp_path), resume=path)

    def test_pretraining_writes_separate_metrics(self, tmp_path):
        cfg = tiny_cfg(**{"pretrain.mode": "cure", "pretrain.steps": 15})
        out = str(tmp_path / "run")
        train(cfg, out)
        pre = read_metrics(os.path.join(out, "pretrain_metrics.csv"))
        assert pre and all(r["kind"] == "train" for r in pre)
        assert os.path.exists(os.path.join(out, "metrics.csv"))


class TestCli:
    def test_gradcheck_subcommand_passes(self, capsys):
        assert cli_main(["gradcheck", "--tol", "1e-4"]) == 0

    def test_train_subcommand_with_overrides(self, tmp_path):
        out = str(tmp_path / "run")
        rc = cli_main([
            "train", "--task", "point_reacher", "--seed", "2", "--steps", "20",
            "--set", "batch_size=8", "--set", "hidden_dim=32",
            "--set", "init_steps=10", "--set", "render_size=20",
            "--set", "crop_size=16", "--set", "horizon=40",
            "--set", "srl.z_dim=16", "--set", "replay.capacity=200",
            "--set", "eval.interval=20", "--set", "eval.episodes=1",
            "--out", out])
        assert rc == 0
        assert os.path.exists(os.path.join(out, "metrics.csv"))
        assert os.path.exists(os.path.join(out, "config.txt"))

    def test_plot_subcommand(self, tmp_path):
        out = str(tmp_path / "run")
        cli_main([
            "train", "--task", "point_reacher", "--seed", "2", "--steps", "20",
            "--set", "batch_size=8", "--set", "hidden_dim=32",
            "--set", "init_steps=10", "--set", "render_size=20",
            "--set", "crop_size=16", "--set", "horizon=40",
            "--set", "srl.z_dim=16", "--set", "replay.capacity=200",
            "--set", "eval.interval=10", "--set", "eval.episodes=1",
            "--out", out])
        svg = str(tmp_path / "r.svg")
        assert cli_main(["plot", os.path.join(out, "metrics.csv"),
                         "--out", svg]) == 0
        ET.parse(svg)


@settings(max_examples=10, deadline=None)
@given(vals=st.lists(st.floats(-100, 100), min_size=1, max_size=8))
def test_metric_floats_roundtrip_through_csv(tmp_path_factory, vals):
    tmp = tmp_path_factory.mktemp("csv")
    path = str(tmp / "m.csv")
    agg = LossAggregator()
    with MetricsWriter(path) as w:
        for i, v in enumerate(vals):
            w.write_row("train", i, 0, float(np.float32(v)), agg.flush())
    rows = read_metrics(path)
    got = [r["reward"] for r in rows]
    np.testing.assert_allclose(got, [float(np.float32(v)) for v in vals],
                               rtol=1e-6, atol=1e-6)
