"""Stratified splitting, Adam optimisation and evaluation."""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import SingleClassDataset
from .metrics import MetricsReport, compute_metrics, roc_curve, select_threshold
from .model import (ModelConfig, ModelParams, backward, cross_entropy, forward,
                    init_params, make_batch, predict_proba)
from .paths import PAD

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    batch_size: int = 16
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    split_ratio: tuple[int, int] = (4, 1)
    seed: int = 0
    early_stop_patience: int | None = 15
    # val-loss decrease smaller than this does not count as an improvement
    early_stop_min_delta: float = 1e-4
    # stop once the train-set loss (inference mode) drops below this value
    stop_train_loss: float | None = None

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not self.learning_rate >= 0:
            raise ValueError("learning_rate must be >= 0")
        a, b = self.split_ratio
        if a <= 0 or b < 0:
            raise ValueError("split_ratio must be positive train:val weights")

    @property
    def val_fraction(self) -> float:
        a, b = self.split_ratio
        return b / (a + b)


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def stratified_split(labels, ratio=(4, 1), seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Index arrays (train, val) with per-class counts within 1 of the exact ratio.

    The validation size is round(N * val_fraction); it is shared out across
    classes by largest remainder. Members are drawn by a seeded shuffle within
    each class and both index arrays come back sorted.
    """
    labels = np.asarray(labels).astype(int)
    classes = np.unique(labels)
    if len(classes) < 2:
        raise SingleClassDataset("stratified split needs both classes")
    a, b = ratio
    frac = b / (a + b)
    n_val = _round_half_up(len(labels) * frac)
    exact = {c: (labels == c).sum() * frac for c in classes}
    alloc = {c: int(math.floor(exact[c])) for c in classes}
    leftover = n_val - sum(alloc.values())
    for c in sorted(classes, key=lambda c: (-(exact[c] - alloc[c]), c))[:max(leftover, 0)]:
        alloc[c] += 1
    rng = np.random.default_rng(seed)
    val = []
    for c in classes:
        members = np.flatnonzero(labels == c)
        val.extend(rng.permutation(members)[:alloc[c]].tolist())
    val = np.sort(np.array(val, dtype=np.int64))
    train = np.setdiff1d(np.arange(len(labels)), val)
    return train, val


class Adam:
    def __init__(self, params: ModelParams, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.arrays.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.arrays.items()}
        self.t = 0

    def step(self, params: ModelParams, grads: dict):
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for k, p in params.arrays.items():
            g = grads[k]
            m, v = self.m[k], self.v[k]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= (self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)).astype(p.dtype)
        for k in ("embed.node", "embed.path"):
            params.arrays[k][PAD] = 0.0


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float | None
    train_acc: float
    val_acc: float | None


@dataclass
class TrainResult:
    params: ModelParams
    history: list[EpochRecord]
    train_idx: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    val_idx: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    best_epoch: int = 0


def history_csv(history: list[EpochRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["epoch", "train_loss", "val_loss", "train_acc", "val_acc"])
    for r in history:
        w.writerow([r.epoch, f"{r.train_loss:.6f}",
                    "" if r.val_loss is None else f"{r.val_loss:.6f}",
                    f"{r.train_acc:.2f}", "" if r.val_acc is None else f"{r.val_acc:.2f}"])
    return buf.getvalue()


def _loss_acc(params, seqs, labels, batch_size=64):
    probs = predict_proba(params, seqs, batch_size)
    acc = 100.0 * float(np.mean((probs[:, 1] >= 0.5) == (np.asarray(labels) == 1)))
    return cross_entropy(probs, labels), acc


def fit(params: ModelParams, train_seqs, train_labels, val_seqs=None, val_labels=None,
        config: TrainConfig = TrainConfig()) -> TrainResult:
    """Optimise ``params`` in place; returns the best-validation-loss snapshot.

    Without a validation set the final parameters are returned.
    """
    train_labels = np.asarray(train_labels).astype(int)
    has_val = val_seqs is not None and len(val_seqs) > 0
    opt = Adam(params, config.learning_rate, config.beta1, config.beta2, config.eps)
    rng = np.random.default_rng(config.seed)
    history: list[EpochRecord] = []
    best, best_loss, best_epoch, stale = params.copy(), math.inf, 0, 0
    n = len(train_seqs)
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n)
        for i in range(0, n, config.batch_size):
            idx = order[i:i + config.batch_size]
            batch = make_batch([train_seqs[j] for j in idx])
            cache = forward(params, batch, training=True, rng=rng)
            _, grads = backward(params, cache, train_labels[idx])
            opt.step(params, grads)
        tr_loss, tr_acc = _loss_acc(params, train_seqs, train_labels)
        if has_val:
            va_loss, va_acc = _loss_acc(params, val_seqs, val_labels)
        else:
            va_loss = va_acc = None
        history.append(EpochRecord(epoch, tr_loss, va_loss, tr_acc, va_acc))
        log.info("epoch %d train_loss %.4f train_acc %.2f val_loss %s", epoch, tr_loss,
                 tr_acc, "-" if va_loss is None else f"{va_loss:.4f}")
        monitored = va_loss if has_val else tr_loss
        if monitored < best_loss - config.early_stop_min_delta:
            best, best_loss, best_epoch, stale = params.copy(), monitored, epoch, 0
        else:
            stale += 1
        if config.stop_train_loss is not None and tr_loss < config.stop_train_loss:
            break
        if has_val and config.early_stop_patience and stale >= config.early_stop_patience:
            break
    final = best if has_val else params
    if not has_val:
        best_epoch = len(history)
    return TrainResult(final, history, best_epoch=best_epoch)


def train(sequences, labels, n_nodes: int, n_paths: int,
          model_config: ModelConfig = ModelConfig(),
          train_config: TrainConfig = TrainConfig(), dtype=np.float32) -> TrainResult:
    """Split 4:1 (stratified), initialise from the model seed and fit."""
    labels = np.asarray(labels).astype(int)
    tr, va = stratified_split(labels, train_config.split_ratio, train_config.seed)
    params = init_params(model_config, n_nodes, n_paths, dtype=dtype)
    result = fit(params, [sequences[i] for i in tr], labels[tr],
                 [sequences[i] for i in va], labels[va], train_config)
    result.train_idx, result.val_idx = tr, va
    return result


def choose_threshold(params: ModelParams, sequences, labels) -> float:
    probs = predict_proba(params, sequences)
    return select_threshold(roc_curve(probs[:, 1], labels))


def evaluate(params: ModelParams, sequences, labels, threshold: float = 0.5) -> MetricsReport:
    if not 0.0 < threshold < 1.0:
        raise ValueError("threshold must lie in (0, 1)")
    return compute_metrics(predict_proba(params, sequences), labels, threshold)
