"""Training loop, evaluation, single runs, and sweep orchestration.

A run is fully determined by (config, seed): network initialization,
shuffling, and augmentation draw from independent streams derived from
the run seed, so re-running a config reproduces its metrics CSV
byte for byte (wall-clock timing is recorded only when asked, since it
would break that property).

Run artifacts, per output directory: ``metrics.csv`` (one row per epoch),
``checkpoint.ckpt`` (parameters, normalization buffers, optimizer state,
epoch, embedded config), and ``run_meta.json`` (the resolved config plus
the framework choices the underlying method leaves open).
"""

from __future__ import annotations

import json
import os
import time
from pathlib import Path

import numpy as np

from . import tensor as T
from .checkpoint import load_checkpoint, save_checkpoint
from .config import ExperimentConfig, parse_config_text
from .data import (CIFAR_MEANS, CIFAR_STDS, augment_batch,
                   encode_constant_current, load_split, normalize_images)
from .errors import ConfigError, TrainingDiverged
from .layers import load_named_state, named_params, named_state, spike_layers
from .metrics import MetricsRow, emit_metrics_csv
from .models import build_network, data_dependent_init, fold_sequence
from .objectives import compose_loss, cross_entropy_time_mean, spike_rate
from .optim import cosine_lr, make_optimizer

SWEEP_AXES = ("weight_decay", "spike_penalty_weight", "norm_method", "penalty_order")


def _forward_batch(net, pixels: np.ndarray, n_steps: int, training: bool):
    """uint8 batch -> folded logits tensor plus the time-mean logit values."""
    x = normalize_images(pixels)
    folded = T.Tensor(fold_sequence(encode_constant_current(x, n_steps)))
    logits = net.forward(folded, n_steps, training)
    batch = pixels.shape[0]
    mean_logits = logits.values.reshape(n_steps, batch, -1).mean(axis=0)
    return logits, mean_logits


def train_epoch(net, opt, reg, labels, pixels, cfg: ExperimentConfig,
                shuffle_rng, aug_rng, epoch: int) -> dict:
    """One pass over the training subset; returns epoch-aggregate statistics."""
    n = len(labels)
    order = shuffle_rng.permutation(n)
    params = named_params(net)
    totals = {"loss": 0.0, "correct": 0, "rate": 0.0, "l2": 0.0, "spike": 0.0}
    for bi, start in enumerate(range(0, n, cfg.batch_size)):
        idx = order[start:start + cfg.batch_size]
        batch_pixels = pixels[idx]
        if cfg.augment:
            batch_pixels = augment_batch(batch_pixels, aug_rng)
        logits, mean_logits = _forward_batch(net, batch_pixels, cfg.time_steps, True)
        task = cross_entropy_time_mean(logits, labels[idx], cfg.time_steps)
        trains = [l.last_spikes for l in spike_layers(net)]
        total, report = compose_loss(task, params, trains, reg)
        if not np.isfinite(report.total):
            raise TrainingDiverged(
                f"loss became {report.total} at epoch {epoch}, batch {bi}, "
                f"lr {opt.lr:.6g}")
        opt.zero_grad()
        T.backward(total)
        opt.step()
        w = len(idx)
        totals["loss"] += report.total * w
        totals["correct"] += int((mean_logits.argmax(axis=1) == labels[idx]).sum())
        totals["rate"] += report.spike_rate * w
        totals["l2"] += report.l2_term * w
        totals["spike"] += report.spike_term * w
    return {
        "train_loss": totals["loss"] / n,
        "train_accuracy": 100.0 * totals["correct"] / n,
        "train_spike_rate": totals["rate"] / n,
        "l2_term": totals["l2"] / n,
        "spike_term": totals["spike"] / n,
    }


def evaluate(net, labels, pixels, cfg: ExperimentConfig) -> tuple[float, float]:
    """(accuracy %, spike rate) on a split; mutates nothing."""
    n = len(labels)
    correct = 0
    rate_sum = 0.0
    with T.no_grad():
        for start in range(0, n, cfg.batch_size):
            idx = np.arange(start, min(start + cfg.batch_size, n))
            logits, mean_logits = _forward_batch(
                net, pixels[idx], cfg.time_steps, False)
            correct += int((mean_logits.argmax(axis=1) == labels[idx]).sum())
            trains = [l.last_spikes for l in spike_layers(net)]
            rate_sum += spike_rate(trains) * len(idx)
    return 100.0 * correct / n, rate_sum / n


def _run_meta(cfg: ExperimentConfig) -> dict:
    return {
        "config": cfg.to_text(),
        "framework_choices": {
            "input_encoding": "constant-current: standardized image repeated at "
                              "every time step",
            "normalization_means": list(CIFAR_MEANS),
            "normalization_stds": list(CIFAR_STDS),
            "time_steps": cfg.time_steps,
            "batch_size": cfg.batch_size,
            "augment": cfg.augment,
            "accuracy_reporting": "metrics.csv has per-epoch values; sweep "
                                  "summaries list best and final",
        },
    }


def checkpoint_tensors(net, opt) -> dict:
    tensors = {}
    for name, t, _ in named_params(net):
        tensors[f"param.{name}"] = t.values
    for name, values in named_state(net):
        tensors[f"buffer.{name}"] = values
    for name, values in opt.state().items():
        tensors[f"opt.{name}"] = values
    return tensors


def run_experiment(cfg: ExperimentConfig) -> list[MetricsRow]:
    """Train one configuration end to end and write its artifacts."""
    out_dir = Path(cfg.output_dir)
    os.makedirs(out_dir, exist_ok=True)
    with T.using_dtype(cfg.dtype):
        train_labels, train_pixels = load_split(
            cfg.data_dir, "train", cfg.train_subset_size)
        test_labels, test_pixels = load_split(
            cfg.data_dir, "test", cfg.test_subset_size)
        net = build_network(cfg.network(), seed=cfg.seed)
        shuffle_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 1]))
        aug_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 2]))
        if cfg.norm != "batch":
            first = normalize_images(train_pixels[:cfg.batch_size])
            folded = T.Tensor(fold_sequence(
                encode_constant_current(first, cfg.time_steps)))
            data_dependent_init(net, folded, cfg.time_steps)
        reg = cfg.regularizer()
        opt = make_optimizer(
            cfg.optimizer, named_params(net), lr=cfg.lr, momentum=cfg.momentum,
            betas=(cfg.beta1, cfg.beta2), eps=cfg.eps,
            weight_decay=reg.optimizer_decay)
        sch = cfg.schedule()
        rows = []
        for epoch in range(1, cfg.epochs + 1):
            t0 = time.perf_counter()
            opt.lr = cosine_lr(sch, epoch - 1)
            stats = train_epoch(net, opt, reg, train_labels, train_pixels, cfg,
                                shuffle_rng, aug_rng, epoch)
            test_acc, test_rate = evaluate(net, test_labels, test_pixels, cfg)
            wall = time.perf_counter() - t0 if cfg.record_timing else 0.0
            rows.append(MetricsRow(
                epoch=epoch, lr=opt.lr, train_loss=stats["train_loss"],
                train_accuracy=stats["train_accuracy"], test_accuracy=test_acc,
                train_spike_rate=stats["train_spike_rate"],
                test_spike_rate=test_rate, l2_term=stats["l2_term"],
                spike_term=stats["spike_term"], wall_seconds=wall))
        emit_metrics_csv(rows, out_dir / "metrics.csv")
        save_checkpoint(out_dir / "checkpoint.ckpt", cfg.to_text(), cfg.epochs,
                        checkpoint_tensors(net, opt))
        (out_dir / "run_meta.json").write_text(
            json.dumps(_run_meta(cfg), indent=2, sort_keys=True) + "\n")
    return rows


def restore_network(checkpoint_path):
    """Rebuild the network (and config) a checkpoint was saved from."""
    config_text, epoch, tensors = load_checkpoint(checkpoint_path)
    cfg = parse_config_text(config_text)
    with T.using_dtype(cfg.dtype):
        net = build_network(cfg.network(), seed=cfg.seed)
        for name, t, _ in named_params(net):
            t.values[:] = tensors[f"param.{name}"]
        buffers = {name[len("buffer."):]: values
                   for name, values in tensors.items()
                   if name.startswith("buffer.")}
        load_named_state(net, buffers)
    return cfg, net, epoch


def evaluate_checkpoint(checkpoint_path, split: str,
                        data_dir: str | None = None) -> tuple[float, float]:
    cfg, net, _ = restore_network(checkpoint_path)
    if data_dir is not None:
        cfg = cfg.replace(data_dir=data_dir)
    subset = (cfg.train_subset_size if split == "train" else cfg.test_subset_size)
    labels, pixels = load_split(cfg.data_dir, split, subset)
    with T.using_dtype(cfg.dtype):
        return evaluate(net, labels, pixels, cfg)


def _axis_config(base: ExperimentConfig, axis: str, value) -> ExperimentConfig:
    if axis == "weight_decay":
        return base.replace(weight_decay=float(value))
    if axis == "spike_penalty_weight":
        return base.replace(spike_penalty_weight=float(value))
    if axis == "norm_method":
        return base.replace(norm=str(value))
    if axis == "penalty_order":
        return base.replace(spike_penalty_order=str(value))
    raise ConfigError(f"sweep axis must be one of {SWEEP_AXES}, got {axis!r}")


def _cell_name(axis: str, value) -> str:
    text = f"{value:.6g}" if isinstance(value, float) else str(value)
    return f"{axis}={text}"


SUMMARY_HEADER = ("axis,value,best_train_accuracy,final_train_accuracy,"
                  "best_test_accuracy,final_test_accuracy,"
                  "final_train_spike_rate,final_test_spike_rate")


def run_sweep(base: ExperimentConfig, axis: str, values) -> list[dict]:
    """One full run per axis value; fresh init per cell, same seed across cells."""
    values = list(values)
    if axis not in SWEEP_AXES:
        raise ConfigError(f"sweep axis must be one of {SWEEP_AXES}, got {axis!r}")
    if not values:
        raise ConfigError("sweep needs at least one value")
    if len(set(map(str, values))) != len(values):
        raise ConfigError(f"duplicate sweep values: {values}")
    sweep_dir = Path(base.output_dir)
    os.makedirs(sweep_dir, exist_ok=True)
    summary = []
    for value in values:
        cell = _cell_name(axis, value)
        cfg = _axis_config(base, axis, value).replace(
            output_dir=str(sweep_dir / cell))
        rows = run_experiment(cfg)
        summary.append({
            "axis": axis,
            "value": value,
            "best_train_accuracy": max(r.train_accuracy for r in rows),
            "final_train_accuracy": rows[-1].train_accuracy,
            "best_test_accuracy": max(r.test_accuracy for r in rows),
            "final_test_accuracy": rows[-1].test_accuracy,
            "final_train_spike_rate": rows[-1].train_spike_rate,
            "final_test_spike_rate": rows[-1].test_spike_rate,
        })
    lines = [SUMMARY_HEADER]
    for row in summary:
        lines.append(",".join([row["axis"], _cell_name(axis, row["value"]).split("=")[1]]
                              + [f"{row[k]:.6g}" for k in
                                 ("best_train_accuracy", "final_train_accuracy",
                                  "best_test_accuracy", "final_test_accuracy",
                                  "final_train_spike_rate",
                                  "final_test_spike_rate")]))
    (sweep_dir / "summary.csv").write_text("\n".join(lines) + "\n")
    if axis == "penalty_order":
        pair_lines = ["order,final_test_spike_rate,final_test_accuracy"]
        for row in summary:
            pair_lines.append(f"{row['value']},{row['final_test_spike_rate']:.6g},"
                              f"{row['final_test_accuracy']:.6g}")
        (sweep_dir / "pairs.csv").write_text("\n".join(pair_lines) + "\n")
    return summary
