"""Deterministic mini-batch training loop.

Everything downstream of (initial params, example sets, config) is
reproducible: one seeded permutation per epoch drives presentation order,
optimizer state is plain arrays, and evaluation runs in eval mode. The
serialized trainlog carries only deterministic fields; wall-clock stays
in memory.
"""
import json
import time
from dataclasses import dataclass, field

import numpy as np

from . import _alloc
from .errors import DivergenceError, NumericError, ShapeError
from .model import loss_batch, named_params

OPTIMIZERS = ("adam", "sgd")


@dataclass
class TrainConfig:
    seed: int
    batch_size: int = 64
    epochs: int = 30
    optimizer: str = "adam"
    lr: float = 1e-3
    momentum: float = 0.9      # sgd
    beta1: float = 0.9         # adam
    beta2: float = 0.999
    eps: float = 1e-8
    shuffle: bool = True

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.lr <= 0:
            raise ValueError(f"lr must be positive, got {self.lr}")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"unknown optimizer {self.optimizer!r}")


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    train_accuracy: float
    test_accuracy: float
    seconds: float


@dataclass
class TrainLog:
    entries: list = field(default_factory=list)

    def write_jsonl(self, path):
        """One JSON object per epoch; wall-clock excluded so reruns with the
        same seed produce byte-identical files."""
        with open(path, "w") as fh:
            for e in self.entries:
                fh.write(json.dumps(
                    {"epoch": e.epoch, "train_loss": e.train_loss,
                     "train_accuracy": e.train_accuracy,
                     "test_accuracy": e.test_accuracy},
                    sort_keys=True))
                fh.write("\n")


class SgdOptimizer:
    def __init__(self, lr, momentum=0.9):
        self.lr = lr
        self.momentum = momentum
        self.velocity = {}

    def step(self, params, grads):
        for name, arr in named_params(params):
            g = grads[name].astype(arr.dtype, copy=False)
            vel = self.velocity.get(name)
            if vel is None:
                vel = np.zeros_like(arr)
                self.velocity[name] = vel
            vel *= self.momentum
            vel += g
            arr -= self.lr * vel


class AdamOptimizer:
    def __init__(self, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {}
        self.v = {}

    def step(self, params, grads):
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for name, arr in named_params(params):
            g = grads[name].astype(arr.dtype, copy=False)
            if name not in self.m:
                self.m[name] = np.zeros_like(arr)
                self.v[name] = np.zeros_like(arr)
            m, v = self.m[name], self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * np.square(g)
            arr -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


def make_optimizer(config):
    if config.optimizer == "adam":
        return AdamOptimizer(config.lr, config.beta1, config.beta2, config.eps)
    return SgdOptimizer(config.lr, config.momentum)


def _as_arrays(example_set):
    if isinstance(example_set, tuple):
        x, y = example_set
        return np.asarray(x), np.asarray(y, dtype=np.int64)
    return example_set.stacked()


def evaluate(params, example_set, batch_size=256):
    """Eval-mode predictions (argmax, ties to the lowest class index) and
    accuracy over a set."""
    from .model import forward

    _alloc.tune_for_large_buffers()
    x, y = _as_arrays(example_set)
    preds = np.empty(len(y), dtype=np.int64)
    for i in range(0, len(y), batch_size):
        logits = forward(params, x[i:i + batch_size], train=False)
        preds[i:i + batch_size] = logits.argmax(axis=1)
    return preds, float((preds == y).mean())


def train(params, train_set, test_set, config, on_epoch=None):
    """Optimize params on train_set, evaluating on test_set every epoch.

    Returns (params, TrainLog); params are updated in place. Raises
    DivergenceError (with epoch/step attached) on a non-finite loss.
    """
    _alloc.tune_for_large_buffers()
    x, y = _as_arrays(train_set)
    if len(y) == 0:
        raise ShapeError("training set is empty")
    if np.any(y >= params.classes):
        raise ShapeError(
            f"training labels reach {int(y.max())} but the network has "
            f"{params.classes} classes")
    rng = np.random.default_rng(config.seed)
    opt = make_optimizer(config)
    log = TrainLog()
    n = len(y)
    for epoch in range(config.epochs):
        started = time.perf_counter()
        order = rng.permutation(n) if config.shuffle else np.arange(n)
        loss_sum = 0.0
        correct = 0
        for step, lo in enumerate(range(0, n, config.batch_size)):
            idx = order[lo:lo + config.batch_size]
            try:
                loss, grads, logits = loss_batch(params, x[idx], y[idx],
                                                 train=True, return_logits=True)
            except NumericError as exc:
                raise DivergenceError(
                    f"training diverged at epoch {epoch}, step {step}: {exc}",
                    epoch=epoch, step=step) from exc
            if not np.isfinite(loss):
                raise DivergenceError(
                    f"non-finite loss at epoch {epoch}, step {step}",
                    epoch=epoch, step=step)
            opt.step(params, grads)
            loss_sum += loss * len(idx)
            correct += int((logits.argmax(axis=1) == y[idx]).sum())
        _, test_acc = evaluate(params, test_set)
        stats = EpochStats(
            epoch=epoch,
            train_loss=loss_sum / n,
            train_accuracy=correct / n,
            test_accuracy=test_acc,
            seconds=time.perf_counter() - started,
        )
        log.entries.append(stats)
        if on_epoch is not None:
            on_epoch(stats)
    return params, log
