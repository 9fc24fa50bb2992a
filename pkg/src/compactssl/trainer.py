"""
Supervised training: learning-rate range test, fitting with frozen
parameters and early stopping, two-stage transfer fine-tuning, evaluation.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import nncore as nn
from .augment import AugmentPolicy, augment_batch
from .data import stratified_holdout
from .errors import DataError, NumericError, ParameterError
from .stats import binary_f1, confusion_matrix, macro_f1


@dataclass
class TrainConfig:
    stage1_epochs: int = 2
    stage2_epochs: int = 50
    batch_size: int = 16
    patience: int = 5
    val_frac: float = 0.1
    momentum: float = 0.9
    lr_min: float = 1e-5
    lr_max: float = 0.1
    lr_steps: int = 100
    augment: AugmentPolicy = field(default_factory=lambda: AugmentPolicy("weak"))
    seed: int = 0

    def __post_init__(self):
        if self.stage1_epochs < 0 or self.stage2_epochs < 0:
            raise ParameterError("epochs must be non-negative")
        if self.patience < 1:
            raise ParameterError("patience must be >= 1")
        if self.batch_size < 1:
            raise ParameterError("batch_size must be >= 1")
        if isinstance(self.augment, dict):
            self.augment = AugmentPolicy(**self.augment)

    def to_dict(self):
        return asdict(self)


@dataclass
class TrainReport:
    loss: list = field(default_factory=list)
    accuracy: list = field(default_factory=list)
    seconds: list = field(default_factory=list)
    stage: list = field(default_factory=list)
    lr_stage1: float | None = None
    lr_stage2: float | None = None
    stopped_epoch: int = 0
    best_epoch: int = 0
    flags: list = field(default_factory=list)

    def extend(self, other, stage):
        self.loss += other.loss
        self.accuracy += other.accuracy
        self.seconds += other.seconds
        self.stage += [stage] * len(other.loss)
        self.flags += other.flags

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["epoch", "stage", "loss", "accuracy", "seconds"])
        for i, row in enumerate(zip(self.stage or [2] * len(self.loss), self.loss, self.accuracy, self.seconds)):
            w.writerow([i + 1, row[0], f"{row[1]:.6f}", f"{row[2]:.6f}", f"{row[3]:.4f}"])
        return buf.getvalue()

    def to_json(self):
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"


@dataclass
class EvalReport:
    accuracy: float
    f1: float
    confusion: np.ndarray
    positive_class: int | None = None

    @property
    def metric_name(self):
        return "f1" if self.positive_class is not None else "macro-f1"

    def to_dict(self):
        return {
            "accuracy": self.accuracy,
            "f1": self.f1,
            "metric": self.metric_name,
            "positive_class": self.positive_class,
            "confusion": self.confusion.tolist(),
        }


# ----------------------------------------------------------------------------


def predict(model, images, batch_size=256):
    """Probability rows for every image, in batches."""
    images = np.asarray(images)
    if len(images) == 0:
        return np.zeros((0, model.spec.n_classes), dtype=model.dtype)
    return np.concatenate([nn.forward(model, images[i : i + batch_size]) for i in range(0, len(images), batch_size)])


def accuracy(model, data):
    return float(np.mean(predict(model, data.images).argmax(axis=1) == data.labels))


def _batch_targets(data, idx, k):
    if data.targets is not None:
        return data.targets[idx]
    return None


def _step_grads(model, x, labels, soft):
    probs, cache = nn.forward_train(model, x)
    if soft is None:
        loss = nn.cross_entropy(probs, labels)
        g = nn.ce_logit_grad(probs, labels)
    else:
        loss = nn.soft_cross_entropy(probs, soft)
        g = (probs - soft) / len(x)
    return loss, nn.backward_logits(model, cache, g)


def lr_range_test(step, lr_min, lr_max, steps, beta=0.98, divergence=4.0):
    """Run ``step(lr) -> loss`` with geometrically growing ``lr``.

    Returns ``(best_lr, lrs, smoothed)`` where ``best_lr`` is the learning
    rate at the minimum of the bias-corrected exponentially smoothed loss
    divided by 10, clamped to ``[lr_min, lr_max]``. The sweep stops once
    the smoothed loss exceeds ``divergence`` times its minimum or a loss
    turns non-finite.
    """
    if not 0 < lr_min < lr_max:
        raise ParameterError("need 0 < lr_min < lr_max")
    if steps < 20:
        raise ParameterError("lr range test needs at least 20 steps")
    ratio = (lr_max / lr_min) ** (1.0 / (steps - 1))
    avg, best = 0.0, math.inf
    lrs, smoothed = [], []
    for i in range(steps):
        lr = lr_min * ratio**i
        try:
            loss = step(lr)
        except NumericError:
            break
        if not math.isfinite(loss):
            break
        avg = beta * avg + (1 - beta) * loss
        s = avg / (1 - beta ** (i + 1))
        lrs.append(lr)
        smoothed.append(s)
        best = min(best, s)
        if i > 0 and s > divergence * best:
            break
    if not smoothed:
        raise NumericError("every loss in the learning-rate sweep was non-finite")
    lr_at_min = lrs[int(np.argmin(smoothed))]
    return float(min(lr_max, max(lr_min, lr_at_min / 10.0))), lrs, smoothed


def lr_find(model, data, lr_min=1e-5, lr_max=1.0, steps=100, batch_size=16, momentum=0.9, seed=0, frozen=()):
    """Learning-rate range test on a throwaway copy of ``model``."""
    if len(data) == 0:
        raise DataError("lr_find needs labelled data")
    probe = model.copy()
    probe.velocity = {}
    rng = np.random.default_rng([seed, 17])
    frozen = set(frozen)
    order = []

    def step(lr):
        if not order:
            order.extend(rng.permutation(len(data)).tolist())
        idx = [order.pop() for _ in range(min(batch_size, len(order)))]
        soft = _batch_targets(data, idx, data.n_classes)
        loss, grads = _step_grads(probe, data.images[idx], data.labels[idx], soft)
        nn.sgd_step(probe, {k: v for k, v in grads.items() if k not in frozen}, lr, momentum)
        return loss

    best, _, _ = lr_range_test(step, lr_min, lr_max, steps)
    return best


class EarlyStopping:
    """Tracks the best held-out accuracy.

    Accuracy ties are broken by lower held-out loss (when given); a tie on
    both keeps the earlier epoch. ``update`` returns True once
    ``patience`` epochs have passed without an improvement.
    """

    def __init__(self, patience):
        self.patience = patience
        self.best = -math.inf
        self.best_loss = math.inf
        self.best_epoch = 0
        self.best_state = None
        self.bad = 0

    def update(self, epoch, acc, state=None, loss=math.inf):
        if acc > self.best or (acc == self.best and loss < self.best_loss):
            self.best, self.best_loss, self.best_epoch, self.best_state, self.bad = acc, loss, epoch, state, 0
            return False
        self.bad += 1
        return self.bad >= self.patience


def holdout_scores(model, data):
    """(accuracy, mean cross-entropy) on a labelled set."""
    probs = predict(model, data.images)
    return float(np.mean(probs.argmax(axis=1) == data.labels)), nn.cross_entropy(probs, data.labels)


def _snapshot(model):
    return {k: v.copy() for k, v in model.params.items()}


def fit(model, data, config, frozen=(), lr=0.01, epochs=None, val=None, early_stopping=True, seed_offset=0):
    """Train a copy of ``model`` with SGD; parameters named in ``frozen`` stay bitwise fixed.

    Accuracy is monitored on ``val`` (or on ``data`` when no validation set
    is given). With ``early_stopping`` the best-accuracy parameters are
    restored at the end. Returns ``(model, TrainReport)``.
    """
    if len(data) == 0:
        raise DataError("cannot fit on an empty training set")
    unknown = set(frozen) - set(model.params)
    if unknown:
        raise ParameterError(f"unknown frozen parameter(s): {sorted(unknown)}")
    epochs = config.stage2_epochs if epochs is None else epochs
    model = model.copy()
    model.velocity = {}
    frozen = set(frozen)
    trainable = [n for n in model.params if n not in frozen]
    report = TrainReport()
    monitor = val if val is not None and len(val) else data
    stopper = EarlyStopping(config.patience)
    for epoch in range(1, epochs + 1):
        t0 = time.perf_counter()
        rng = np.random.default_rng([config.seed, seed_offset, epoch])
        order = rng.permutation(len(data))
        losses, weights = [], []
        for start in range(0, len(order), config.batch_size):
            idx = order[start : start + config.batch_size]
            x = augment_batch(config.augment, data.images[idx], rng)
            loss, grads = _step_grads(model, x, data.labels[idx], _batch_targets(data, idx, data.n_classes))
            if trainable:
                nn.sgd_step(model, {n: grads[n] for n in trainable}, lr, config.momentum)
            losses.append(loss)
            weights.append(len(idx))
        acc, mon_loss = holdout_scores(model, monitor)
        report.loss.append(float(np.average(losses, weights=weights)))
        report.accuracy.append(acc)
        report.seconds.append(time.perf_counter() - t0)
        report.stopped_epoch = epoch
        if early_stopping:
            if stopper.update(epoch, acc, _snapshot(model), mon_loss):
                break
    if early_stopping and stopper.best_state is not None:
        model.params = stopper.best_state
        report.best_epoch = stopper.best_epoch
    else:
        report.best_epoch = report.stopped_epoch
    model.velocity = {}
    return model, report


def two_stage_train(pretrained, data, n_classes, config, val=None):
    """Head-only warm-up on a new head, then full fine-tuning with early stopping.

    Stage 1 replaces the head, freezes the body and trains for
    ``stage1_epochs`` at the rate picked by :func:`lr_find`. Stage 2
    unfreezes everything, picks a fresh rate and trains for up to
    ``stage2_epochs`` with early stopping on a held-out ``val_frac`` of the
    labelled data (unless ``val`` is given).
    """
    if len(data) == 0:
        raise DataError("cannot train on an empty labelled set")
    if tuple(data.image_shape) != tuple(pretrained.spec.input_shape):
        raise DataError(f"data shape {data.image_shape} does not match network input {pretrained.spec.input_shape}")
    if val is None:
        train, val = stratified_holdout(data, config.val_frac, [config.seed, 5])
    else:
        train = data
    model = nn.replace_head(pretrained, n_classes, seed=config.seed)
    body = set(model.body_names())
    report = TrainReport()
    lr_kw = dict(
        lr_min=config.lr_min,
        lr_max=config.lr_max,
        steps=config.lr_steps,
        batch_size=config.batch_size,
        momentum=config.momentum,
    )
    if config.stage1_epochs > 0:
        report.lr_stage1 = lr_find(model, train, seed=config.seed, frozen=body, **lr_kw)
        model, r1 = fit(model, train, config, frozen=body, lr=report.lr_stage1, epochs=config.stage1_epochs,
                        val=val, early_stopping=False, seed_offset=1)
        report.extend(r1, 1)
    if config.stage2_epochs > 0:
        report.lr_stage2 = lr_find(model, train, seed=config.seed + 1, **lr_kw)
        model, r2 = fit(model, train, config, lr=report.lr_stage2, epochs=config.stage2_epochs,
                        val=val, early_stopping=True, seed_offset=2)
        report.extend(r2, 2)
        report.stopped_epoch = r2.stopped_epoch
        report.best_epoch = r2.best_epoch
    return model, report


def evaluate(model, data, positive_class=None):
    """Accuracy, confusion matrix and F1 (binary F1 when ``positive_class`` is set, else macro-F1)."""
    if len(data) == 0:
        raise DataError("cannot evaluate on an empty test set")
    if positive_class is not None and not 0 <= positive_class < data.n_classes:
        raise ParameterError(f"unknown positive class {positive_class!r}")
    preds = predict(model, data.images).argmax(axis=1)
    return evaluate_predictions(data.labels, preds, data.n_classes, positive_class)


def evaluate_predictions(truth, preds, n_classes, positive_class=None):
    labels = list(range(n_classes))
    cm = confusion_matrix(truth, preds, labels)
    acc = float(np.trace(cm) / cm.sum())
    if positive_class is not None:
        f1 = binary_f1(truth, preds, positive_class)
    else:
        f1 = macro_f1(truth, preds, labels)
    return EvalReport(acc, f1, cm, positive_class)
