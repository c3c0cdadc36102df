"""Training-loop, evaluation, single-run, and sweep contracts.

Uses a miniature synthetic dataset and 4-channel networks so every run
finishes in seconds while still exercising the full pipeline.
"""

import json

import numpy as np
import pytest

from spikegrad import tensor as T
from spikegrad.config import ExperimentConfig
from spikegrad.data import load_split, make_synthetic_cifar
from spikegrad.errors import ConfigError, TrainingDiverged
from spikegrad.harness import (evaluate, evaluate_checkpoint, restore_network,
                               run_experiment, run_sweep, train_epoch)
from spikegrad.layers import named_params, named_state
from spikegrad.metrics import parse_metrics_csv
from spikegrad.models import build_network
from spikegrad.objectives import RegularizerConfig
from spikegrad.optim import SGD, cosine_lr


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("data")
    make_synthetic_cifar(d, n_train=64, n_test=32, seed=7)
    return d


def tiny_config(data_dir, out_dir, **overrides) -> ExperimentConfig:
    base = dict(arch="cnn", channels=4, lr=0.05, epochs=2, batch_size=16,
                time_steps=2, seed=3, train_subset_size=32, test_subset_size=16,
                augment=False, data_dir=str(data_dir), output_dir=str(out_dir))
    base.update(overrides)
    return ExperimentConfig(**base)


def param_snapshot(net):
    return {name: t.values.copy() for name, t, _ in named_params(net)}


class TestTrainEpochStep:
    def test_zero_lr_leaves_parameters_bit_identical(self, data_dir, tmp_path):
        cfg = tiny_config(data_dir, tmp_path)
        labels, pixels = load_split(data_dir, "train", 32)
        net = build_network(cfg.network(), seed=cfg.seed)
        before = param_snapshot(net)
        opt = SGD(named_params(net), lr=0.0)
        rng = np.random.default_rng(0)
        train_epoch(net, opt, RegularizerConfig(), labels, pixels, cfg,
                    rng, rng, epoch=1)
        after = param_snapshot(net)
        for name in before:
            assert np.array_equal(before[name], after[name]), name

    def test_two_sample_overfit_reaches_full_accuracy(self, data_dir, tmp_path):
        cfg = tiny_config(data_dir, tmp_path, batch_size=2)
        labels, pixels = load_split(data_dir, "train", 2)
        assert labels[0] != labels[1]
        net = build_network(cfg.network(), seed=cfg.seed)
        opt = SGD(named_params(net), lr=0.05)
        rng = np.random.default_rng(0)
        history = []
        for epoch in range(1, 81):
            stats = train_epoch(net, opt, RegularizerConfig(), labels, pixels,
                                cfg, rng, rng, epoch)
            history.append(stats["train_accuracy"])
            if len(history) >= 2 and history[-1] == history[-2] == 100.0:
                break
        assert history[-1] == 100.0

    def test_epoch_statistics_are_finite_and_bounded(self, data_dir, tmp_path):
        cfg = tiny_config(data_dir, tmp_path)
        labels, pixels = load_split(data_dir, "train", 32)
        net = build_network(cfg.network(), seed=cfg.seed)
        opt = SGD(named_params(net), lr=cfg.lr)
        rng = np.random.default_rng(0)
        stats = train_epoch(net, opt, RegularizerConfig(), labels, pixels, cfg,
                            rng, rng, epoch=1)
        assert set(stats) == {"train_loss", "train_accuracy",
                              "train_spike_rate", "l2_term", "spike_term"}
        assert all(np.isfinite(v) for v in stats.values())
        assert 0.0 <= stats["train_accuracy"] <= 100.0
        assert 0.0 <= stats["train_spike_rate"] <= 1.0

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_nonfinite_loss_raises_training_diverged(self, data_dir, tmp_path):
        cfg = tiny_config(data_dir, tmp_path, lr=1e25, weight_decay=1e-4,
                          decay_mode="loss-term", epochs=4)
        labels, pixels = load_split(data_dir, "train", 32)
        with T.using_dtype(cfg.dtype):
            net = build_network(cfg.network(), seed=cfg.seed)
            opt = SGD(named_params(net), lr=cfg.lr)
            rng = np.random.default_rng(0)
            with pytest.raises(TrainingDiverged, match="epoch"):
                for epoch in range(1, cfg.epochs + 1):
                    train_epoch(net, opt, cfg.regularizer(), labels, pixels,
                                cfg, rng, rng, epoch)


class TestEvaluateContract:
    def test_evaluate_mutates_nothing(self, data_dir, tmp_path):
        cfg = tiny_config(data_dir, tmp_path)
        labels, pixels = load_split(data_dir, "test", 16)
        net = build_network(cfg.network(), seed=cfg.seed)
        params_before = param_snapshot(net)
        buffers_before = {name: v.copy() for name, v in named_state(net)}
        evaluate(net, labels, pixels, cfg)
        for name, t, _ in named_params(net):
            assert np.array_equal(params_before[name], t.values)
            assert t.grad is None
        for name, v in named_state(net):
            assert np.array_equal(buffers_before[name], v), name

    def test_untrained_network_scores_near_chance(self, data_dir, tmp_path):
        cfg = tiny_config(data_dir, tmp_path)
        labels, pixels = load_split(data_dir, "test", 32)
        acc, rate = evaluate(net=build_network(cfg.network(), seed=cfg.seed),
                             labels=labels, pixels=pixels, cfg=cfg)
        assert 0.0 <= acc <= 40.0
        assert 0.0 <= rate <= 1.0


class TestRunExperimentArtifacts:
    def test_writes_metrics_checkpoint_and_meta(self, data_dir, tmp_path):
        cfg = tiny_config(data_dir, tmp_path / "run")
        rows = run_experiment(cfg)
        out = tmp_path / "run"
        assert (out / "metrics.csv").exists()
        assert (out / "checkpoint.ckpt").exists()
        assert (out / "run_meta.json").exists()
        assert len(rows) == cfg.epochs
        assert [r.epoch for r in rows] == list(range(1, cfg.epochs + 1))
        sch = cfg.schedule()
        for r in rows:
            assert r.lr == pytest.approx(cosine_lr(sch, r.epoch - 1))
            assert r.wall_seconds == 0.0
        meta = json.loads((out / "run_meta.json").read_text())
        assert meta["config"] == cfg.to_text()
        assert "input_encoding" in meta["framework_choices"]

    def test_record_timing_fills_wall_seconds(self, data_dir, tmp_path):
        cfg = tiny_config(data_dir, tmp_path / "run", epochs=1,
                          record_timing=True)
        rows = run_experiment(cfg)
        assert all(r.wall_seconds > 0.0 for r in rows)

    def test_metrics_reproduce_byte_identical(self, data_dir, tmp_path):
        a = tiny_config(data_dir, tmp_path / "a", augment=True, epochs=1)
        b = tiny_config(data_dir, tmp_path / "b", augment=True, epochs=1)
        run_experiment(a)
        run_experiment(b)
        csv_a = (tmp_path / "a" / "metrics.csv").read_bytes()
        csv_b = (tmp_path / "b" / "metrics.csv").read_bytes()
        assert csv_a == csv_b

    def test_seed_changes_the_trajectory(self, data_dir, tmp_path):
        a = tiny_config(data_dir, tmp_path / "a", epochs=1, seed=3)
        b = tiny_config(data_dir, tmp_path / "b", epochs=1, seed=4)
        ra = run_experiment(a)
        rb = run_experiment(b)
        assert ra[-1].train_loss != rb[-1].train_loss


class TestCheckpointRestore:
    def test_eval_of_checkpoint_matches_final_row(self, data_dir, tmp_path):
        cfg = tiny_config(data_dir, tmp_path / "run")
        rows = run_experiment(cfg)
        acc, rate = evaluate_checkpoint(tmp_path / "run" / "checkpoint.ckpt",
                                        "test")
        assert acc == rows[-1].test_accuracy
        assert rate == pytest.approx(rows[-1].test_spike_rate, abs=1e-12)

    def test_restore_recovers_config_and_epoch(self, data_dir, tmp_path):
        cfg = tiny_config(data_dir, tmp_path / "run")
        run_experiment(cfg)
        restored_cfg, net, epoch = restore_network(
            tmp_path / "run" / "checkpoint.ckpt")
        assert restored_cfg == cfg
        assert epoch == cfg.epochs
        assert param_snapshot(net)

    def test_metrics_csv_round_trips(self, data_dir, tmp_path):
        cfg = tiny_config(data_dir, tmp_path / "run")
        run_experiment(cfg)
        rows = parse_metrics_csv(tmp_path / "run" / "metrics.csv")
        assert len(rows) == cfg.epochs


class TestRunSweepLayout:
    def test_cells_and_summary(self, data_dir, tmp_path):
        base = tiny_config(data_dir, tmp_path / "sweep", epochs=1)
        summary = run_sweep(base, "weight_decay", [0.0, 0.001])
        for cell in ("weight_decay=0", "weight_decay=0.001"):
            assert (tmp_path / "sweep" / cell / "metrics.csv").exists()
            assert (tmp_path / "sweep" / cell / "checkpoint.ckpt").exists()
        lines = (tmp_path / "sweep" / "summary.csv").read_text().splitlines()
        assert len(lines) == 3
        assert lines[0].startswith("axis,value,")
        assert all(row["axis"] == "weight_decay" for row in summary)

    def test_cells_share_the_seed(self, data_dir, tmp_path):
        base = tiny_config(data_dir, tmp_path / "sweep", epochs=1, seed=11)
        run_sweep(base, "weight_decay", [0.0, 0.001])
        for cell in ("weight_decay=0", "weight_decay=0.001"):
            meta = json.loads(
                (tmp_path / "sweep" / cell / "run_meta.json").read_text())
            assert "seed = 11" in meta["config"]

    def test_penalty_order_sweep_writes_pairs(self, data_dir, tmp_path):
        base = tiny_config(data_dir, tmp_path / "sweep", epochs=1,
                           spike_penalty_weight=0.01)
        run_sweep(base, "penalty_order", ["first", "square"])
        lines = (tmp_path / "sweep" / "pairs.csv").read_text().splitlines()
        assert lines[0] == "order,final_test_spike_rate,final_test_accuracy"
        assert len(lines) == 3

    def test_rejects_bad_axis_values_and_duplicates(self, data_dir, tmp_path):
        base = tiny_config(data_dir, tmp_path / "sweep")
        with pytest.raises(ConfigError, match="axis"):
            run_sweep(base, "lr", [0.1])
        with pytest.raises(ConfigError, match="at least one"):
            run_sweep(base, "weight_decay", [])
        with pytest.raises(ConfigError, match="duplicate"):
            run_sweep(base, "weight_decay", [0.0, 0.0])
