"""Losses, SGD with momentum, cosine decay, SWA, and the training loop.

The loop is deterministic end to end: batch order, augmentation, and mixup
draws all come from counter-based streams derived from the run seed, so the
same config produces bit-identical weights on any machine (32-bit mode,
single thread).
"""

import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import tensor
from .augment import augment_image, build_pipeline, mixup, sample_stream
from .data import Dataset
from .layers import Network
from .tensor import Rng

LOG_FLOOR = 1e-12


# ------------------------------------------------------------------- losses

def one_hot(label: int, num_classes: int) -> np.ndarray:
    if not 0 <= label < num_classes:
        raise ValueError(f"label {label} out of range for {num_classes} classes")
    y = np.zeros(num_classes)
    y[label] = 1.0
    return y


def smooth_labels(y_hot: np.ndarray, alpha: float, num_classes: int) -> np.ndarray:
    """Blend a one-hot vector toward uniform: (1 - alpha) * y + alpha / K."""
    y_hot = np.asarray(y_hot, dtype=np.float64)
    if not 0.0 <= alpha < 1.0:
        raise ValueError(f"alpha must be in [0, 1), got {alpha}")
    if y_hot.shape != (num_classes,):
        raise ValueError(f"expected a length-{num_classes} vector, got {y_hot.shape}")
    if not (np.count_nonzero(y_hot == 1.0) == 1 and np.count_nonzero(y_hot) == 1):
        raise ValueError("smooth_labels expects a one-hot input")
    return (1.0 - alpha) * y_hot + alpha / num_classes


def cross_entropy(y: np.ndarray, y_pred: np.ndarray):
    """Cross-entropy of softmax outputs and its gradient w.r.t. the logits.

    Accepts a single (K,) pair or a batch (n, K); batches return the mean
    loss and the gradient already divided by n.  The fused softmax gradient
    is simply y_pred - y.  Predictions below the log floor are clamped
    (warned about in debug mode) so the loss stays finite.
    """
    y = np.asarray(y, dtype=np.float64)
    y_pred = np.asarray(y_pred, dtype=np.float64)
    if y.shape != y_pred.shape:
        raise ValueError(f"shape mismatch: {y.shape} vs {y_pred.shape}")
    squeeze = y.ndim == 1
    if squeeze:
        y = y[None]
        y_pred = y_pred[None]
    if np.any((y_pred <= LOG_FLOOR) & (y > 0.0)) and tensor.debug_enabled():
        warnings.warn("cross_entropy: prediction at log floor for a true class")
    n = y.shape[0]
    loss = float(-(y * np.log(np.maximum(y_pred, LOG_FLOOR))).sum() / n)
    grad = (y_pred - y) / n
    return loss, (grad[0] if squeeze else grad)


def softmax_rows(logits: np.ndarray) -> np.ndarray:
    """Row-wise stable softmax for (n, K) logits."""
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


# ---------------------------------------------------------------- optimizer

class Sgd:
    """SGD with classical momentum: v <- mu*v - lr*g; w <- w + v."""

    def __init__(self, momentum: float = 0.9):
        if not 0.0 <= momentum < 1.0:
            raise ValueError(f"momentum must be in [0, 1), got {momentum}")
        self.momentum = momentum
        self.velocity: dict[str, np.ndarray] = {}

    def step(self, params: dict, grads: dict, lr: float) -> None:
        if lr < 0.0:
            raise ValueError(f"learning rate must be >= 0, got {lr}")
        for name, w in params.items():
            g = grads.get(name)
            if g is None:
                raise ValueError(f"missing gradient for {name}")
            if g.shape != w.shape:
                raise ValueError(
                    f"{name}: gradient shape {g.shape} != weight shape {w.shape}")
            v = self.velocity.get(name)
            if v is None:
                v = np.zeros_like(w, dtype=np.float64)
            v = self.momentum * v - lr * g
            self.velocity[name] = v
            w += v.astype(w.dtype)


def cosine_lr(epoch: int, total_epochs: int, lr_max: float, lr_min: float) -> float:
    """Cosine decay from lr_max (epoch 0) to lr_min (last epoch)."""
    if total_epochs <= 1:
        return lr_max
    t = epoch / (total_epochs - 1)
    return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + math.cos(math.pi * t))


# --------------------------------------------------------------------- SWA

class SwaState:
    """Running arithmetic mean of weight snapshots taken from start_epoch on."""

    def __init__(self, start_epoch: int):
        if start_epoch < 0:
            raise ValueError("start_epoch must be >= 0")
        self.start_epoch = start_epoch
        self.n_models = 0
        self.averaged: dict[str, np.ndarray] = {}

    def update(self, params: dict, epoch: int) -> None:
        if epoch < self.start_epoch:
            return
        if self.n_models == 0:
            self.averaged = {k: v.astype(np.float64).copy() for k, v in params.items()}
        else:
            n = self.n_models
            for k, v in params.items():
                self.averaged[k] = (self.averaged[k] * n + v.astype(np.float64)) / (n + 1)
        self.n_models += 1


def swa_start_epoch(total_epochs: int) -> int:
    """Snapshots begin after three quarters of the run."""
    return math.ceil(0.75 * total_epochs)


# ----------------------------------------------------------------- configs

@dataclass
class TrainConfig:
    epochs: int = 15
    batch_size: int = 64
    lr: float = 0.01
    lr_min: float = 1e-4
    momentum: float = 0.9
    seed: int = 0
    smoothing: float = 0.0          # label-smoothing alpha; 0 disables
    use_mixup: bool = False
    mixup_alpha: float = 0.2        # Beta(alpha, alpha) for the per-batch delta
    mixup_delta: float | None = None  # fixed delta overrides the Beta draw
    use_swa: bool = False
    augment: dict = field(default_factory=dict)  # op name -> probability

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.lr < 0 or self.lr_min < 0:
            raise ValueError("learning rates must be >= 0")
        if not 0.0 <= self.smoothing < 1.0:
            raise ValueError("smoothing must be in [0, 1)")
        if self.mixup_delta is not None and not 0.0 <= self.mixup_delta <= 1.0:
            raise ValueError("mixup_delta must be in [0, 1]")


@dataclass
class EpochRow:
    epoch: int
    train_loss: float
    train_acc: float
    eval_acc: float
    seconds: float


class TrainReport:
    """Per-epoch metrics, serializable as CSV."""

    HEADER = "epoch,train_loss,train_acc,eval_acc,seconds"

    def __init__(self):
        self.rows: list[EpochRow] = []

    def add(self, row: EpochRow) -> None:
        if not (0.0 <= row.train_acc <= 1.0 and 0.0 <= row.eval_acc <= 1.0):
            raise ValueError("accuracy must lie in [0, 1]")
        self.rows.append(row)

    def to_csv(self) -> str:
        lines = [self.HEADER]
        for r in self.rows:
            lines.append(f"{r.epoch},{r.train_loss:.6f},{r.train_acc:.6f},"
                         f"{r.eval_acc:.6f},{r.seconds:.3f}")
        return "\n".join(lines) + "\n"


# ------------------------------------------------------------ the main loop

def _batch_targets(labels, num_classes, alpha):
    y = np.zeros((len(labels), num_classes))
    y[np.arange(len(labels)), labels] = 1.0
    if alpha > 0.0:
        y = (1.0 - alpha) * y + alpha / num_classes
    return y


def train(network: Network, train_ds: Dataset, eval_ds: Dataset,
          config: TrainConfig):
    """Run the full loop; returns (report, final_params, swa_params_or_None)."""
    if len(train_ds) == 0 or len(eval_ds) == 0:
        raise ValueError("training and evaluation sets must be non-empty")
    if train_ds.num_classes != network.num_classes:
        raise ValueError(
            f"dataset has {train_ds.num_classes} classes but the network "
            f"outputs {network.num_classes}")

    pipeline = build_pipeline(config.augment)
    optimizer = Sgd(config.momentum)
    swa = SwaState(swa_start_epoch(config.epochs)) if config.use_swa else None
    report = TrainReport()
    num_classes = train_ds.num_classes
    n = len(train_ds)
    dtype = tensor.default_dtype()

    for epoch in range(config.epochs):
        started = time.perf_counter()
        lr = cosine_lr(epoch, config.epochs, config.lr, config.lr_min)
        order = Rng.derive(config.seed, 1, epoch).permutation(n)
        loss_sum = 0.0
        correct = 0
        seen = 0

        for b_start in range(0, n, config.batch_size):
            idx = order[b_start:b_start + config.batch_size]
            b = len(idx)
            if pipeline:
                imgs = [augment_image(pipeline, train_ds.images[i:i + 1],
                                      sample_stream(config.seed, epoch, int(i)))
                        for i in idx]
                x = np.concatenate(imgs).astype(dtype)
            else:
                x = train_ds.images[idx].astype(dtype)
            y = _batch_targets(train_ds.labels[idx], num_classes, config.smoothing)

            if config.use_mixup:
                batch_rng = Rng.derive(config.seed, 2, epoch, b_start)
                if config.mixup_delta is not None:
                    delta = config.mixup_delta
                else:
                    delta = batch_rng.beta(config.mixup_alpha, config.mixup_alpha)
                pair = batch_rng.permutation(b)
                x = (delta * x + (1.0 - delta) * x[pair]).astype(dtype)
                y = delta * y + (1.0 - delta) * y[pair]

            logits = network.forward_logits(x, train=True).reshape(b, num_classes)
            probs = softmax_rows(logits.astype(np.float64))
            loss, dlogits = cross_entropy(y, probs)
            network.backward_from_logits(
                dlogits.reshape(b, num_classes, 1, 1).astype(dtype))
            optimizer.step(network.params(), network.grads(), lr)

            loss_sum += loss * b
            # accuracy against the dominant target (argmax of the mixed
            # vector when mixup is on; the plain label otherwise)
            correct += int((logits.argmax(axis=1) == y.argmax(axis=1)).sum())
            seen += b

        eval_acc, _, _ = evaluate(network, eval_ds)
        # report rows and the SWA start rule count epochs from 1, so a
        # 2-epoch run ends with "epoch 2" and start_epoch=2 still fires
        if swa is not None:
            swa.update(network.params(), epoch + 1)
        report.add(EpochRow(epoch + 1, loss_sum / seen, correct / seen,
                            eval_acc, time.perf_counter() - started))

    final = {k: v.copy() for k, v in network.params().items()}
    swa_params = None
    if swa is not None and swa.n_models > 0:
        swa_params = {k: v.astype(dtype) for k, v in swa.averaged.items()}
    return report, final, swa_params


def evaluate(network: Network, ds: Dataset, batch_size: int = 256):
    """Clean-pass metrics: (accuracy, per-class accuracy, mean loss).

    Predictions are argmax over softmax outputs; ties resolve to the lowest
    class index (numpy argmax order).
    """
    if len(ds) == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    if ds.num_classes != network.num_classes:
        raise ValueError(
            f"dataset has {ds.num_classes} classes but the network outputs "
            f"{network.num_classes}")
    dtype = tensor.default_dtype()
    num_classes = ds.num_classes
    correct = np.zeros(num_classes, dtype=np.int64)
    totals = np.zeros(num_classes, dtype=np.int64)
    loss_sum = 0.0
    for start in range(0, len(ds), batch_size):
        x = ds.images[start:start + batch_size].astype(dtype)
        labels = ds.labels[start:start + batch_size]
        b = len(labels)
        logits = network.forward_logits(x, train=False).reshape(b, num_classes)
        probs = softmax_rows(logits.astype(np.float64))
        y = _batch_targets(labels, num_classes, 0.0)
        loss, _ = cross_entropy(y, probs)
        loss_sum += loss * b
        pred = probs.argmax(axis=1)
        for c in range(num_classes):
            mask = labels == c
            totals[c] += int(mask.sum())
            correct[c] += int((pred[mask] == c).sum())
    per_class = np.divide(correct, totals, out=np.zeros(num_classes),
                          where=totals > 0)
    return float(correct.sum() / totals.sum()), per_class, loss_sum / totals.sum()
