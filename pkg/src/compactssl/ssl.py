"""
Semi-supervised methods.

Self-training family: plain, data, model and data+model distillation.
Each trains one or more base models on the labelled set, pseudo-labels
the unlabelled pool by (optionally ensembled) prediction, keeps the
confident ones and trains a fresh target on the union.

Consistency-regularisation family: FixMatch and MixMatch training loops.
"""

from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import nncore as nn
from .augment import DEFAULT_TTA, AugmentPolicy, apply_batch, augment_batch
from .data import LabelledData, concat, stratified_holdout
from .errors import ParameterError
from .trainer import (
    EarlyStopping,
    TrainConfig,
    TrainReport,
    evaluate,
    holdout_scores,
    fit,
    lr_find,
    predict,
    two_stage_train,
)

METHODS = ("plain", "data", "model", "data_model", "fixmatch", "mixmatch")


@dataclass
class MixMatchParams:
    K: int = 2
    T: float = 0.5
    alpha: float = 0.75
    lambda_u: float = 75.0
    rampup: float = 0.25


@dataclass
class SSLConfig:
    """Settings for one semi-supervised run.

    ``base_models`` and ``target_model`` are :class:`nncore.Model` instances
    (pretrained bodies) or :class:`nncore.NetworkSpec` (fresh seeded init).
    """

    method: str
    target_model: object
    base_models: list = field(default_factory=list)
    transforms: tuple = DEFAULT_TTA
    confidence: float = 0.8
    soft_labels: bool = False
    fixmatch_tau: float = 0.95
    fixmatch_lambda_u: float = 1.0
    unlabelled_ratio: int = 2
    strong: AugmentPolicy = field(default_factory=lambda: AugmentPolicy("strong", strong_ops=2, strong_magnitude=0.5))
    mixmatch: MixMatchParams = field(default_factory=MixMatchParams)
    train: TrainConfig = field(default_factory=TrainConfig)
    positive_class: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ParameterError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if not 0 < self.confidence <= 1:
            raise ParameterError("confidence threshold must lie in (0, 1]")
        if not 0 < self.fixmatch_tau <= 1:
            raise ParameterError("fixmatch_tau must lie in (0, 1]")
        if self.method in ("plain", "data") and len(self.base_models) != 1:
            raise ParameterError(f"{self.method} distillation takes exactly one base model")
        if self.method in ("model", "data_model") and len(self.base_models) < 2:
            raise ParameterError(f"{self.method} distillation needs at least two base models")
        if isinstance(self.mixmatch, dict):
            self.mixmatch = MixMatchParams(**self.mixmatch)
        self.transforms = tuple(self.transforms)


@dataclass
class PseudoLabelRecord:
    example_id: str
    distribution: np.ndarray
    confidence: float
    accepted: bool
    assigned: int


@dataclass
class SSLResult:
    model: nn.Model
    evaluation: object
    records: list = field(default_factory=list)
    report: TrainReport | None = None
    base_reports: list = field(default_factory=list)
    flags: list = field(default_factory=list)

    @property
    def n_accepted(self):
        return sum(r.accepted for r in self.records)


# ----------------------------------------------------------------------------
# Pseudo-labelling primitives
# ----------------------------------------------------------------------------


def predict_dist(model, img):
    """Class distribution for a single ``[C, H, W]`` image."""
    return nn.forward(model, np.asarray(img)[None])[0]


def ensemble_mean(dists):
    """Equal-weight arithmetic mean of distributions (rows or stacked batches)."""
    if len(dists) == 0:
        raise ParameterError("cannot ensemble an empty list of distributions")
    arr = np.stack([np.asarray(d) for d in dists])
    if len(arr) == 1:
        return arr[0].copy()
    return arr.mean(axis=0)


def make_records(ids, dists, tau):
    dists = np.asarray(dists)
    conf = dists.max(axis=1)
    assigned = dists.argmax(axis=1)  # first index wins ties
    return [
        PseudoLabelRecord(i, d, float(c), bool(c >= tau), int(a))
        for i, d, c, a in zip(ids, dists, conf, assigned)
    ]


def confidence_filter(records, tau):
    """Records whose confidence reaches ``tau`` (inclusive)."""
    if not 0 < tau <= 1:
        raise ParameterError("confidence threshold must lie in (0, 1]")
    out = []
    for r in records:
        if r.confidence >= tau:
            out.append(PseudoLabelRecord(r.example_id, r.distribution, r.confidence, True, int(np.argmax(r.distribution))))
    return out


def records_to_csv(records, class_names=None):
    k = len(records[0].distribution) if records else len(class_names or ())
    names = list(class_names) if class_names else [str(c) for c in range(k)]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["example_id", "confidence", "accepted", "class"] + [f"p_{n}" for n in names])
    for r in records:
        w.writerow([r.example_id, f"{r.confidence:.6f}", int(r.accepted), names[r.assigned]]
                   + [f"{p:.6f}" for p in r.distribution])
    return buf.getvalue()


def tta_predict(model, images, transforms):
    """Per-variant probability rows ``[V, N, K]`` (variant 0 is the identity)."""
    out = [predict(model, images)]
    for t in transforms:
        out.append(predict(model, apply_batch(t, images)))
    return out


def _as_model(m, seed):
    return m if isinstance(m, nn.Model) else nn.init_model(m, seed)


# ----------------------------------------------------------------------------
# Distillation family
# ----------------------------------------------------------------------------


def _train_bases(cfg, labelled):
    models, reports = [], []
    for j, base in enumerate(cfg.base_models):
        m, r = two_stage_train(_as_model(base, cfg.seed + j), labelled, labelled.n_classes, cfg.train)
        models.append(m)
        reports.append(r)
    return models, reports


def _distill(cfg, labelled, unlabelled, test, use_tta):
    bases, base_reports = _train_bases(cfg, labelled)
    transforms = cfg.transforms if use_tta else ()
    dists = []
    for m in bases:
        dists += tta_predict(m, unlabelled.images, transforms)
    ensembled = ensemble_mean(dists)
    records = make_records(unlabelled.ids, ensembled, cfg.confidence)
    accepted = confidence_filter(records, cfg.confidence)
    flags = []
    train_set = labelled
    if accepted:
        pos = {i: n for n, i in enumerate(unlabelled.ids)}
        idx = [pos[r.example_id] for r in accepted]
        pseudo = LabelledData(
            unlabelled.images[idx],
            np.array([r.assigned for r in accepted]),
            labelled.class_names,
            tuple(r.example_id for r in accepted),
            np.stack([r.distribution for r in accepted]).astype(np.float32) if cfg.soft_labels else None,
        )
        if cfg.soft_labels:
            labelled = LabelledData(labelled.images, labelled.labels, labelled.class_names, labelled.ids,
                                    np.eye(labelled.n_classes, dtype=np.float32)[labelled.labels])
        train_set = concat(labelled, pseudo)
    else:
        flags.append("no pseudo-label reached the confidence threshold; target trained on labelled data only")
    target = _as_model(cfg.target_model, cfg.seed + 1000)
    model, report = two_stage_train(target, train_set, labelled.n_classes, cfg.train)
    ev = evaluate(model, test, cfg.positive_class) if test is not None and len(test) else None
    return SSLResult(model, ev, records, report, base_reports, flags)


def plain_distillation(cfg, labelled, unlabelled, test=None):
    """One base model pseudo-labels the pool; a fresh target trains on labelled + confident pseudo-labels."""
    if cfg.method != "plain":
        raise ParameterError("config method must be 'plain'")
    return _distill(cfg, labelled, unlabelled, test, use_tta=False)


def data_distillation(cfg, labelled, unlabelled, test=None):
    """As plain distillation, but each pool item is scored by averaging over its TTA variants."""
    if cfg.method != "data":
        raise ParameterError("config method must be 'data'")
    return _distill(cfg, labelled, unlabelled, test, use_tta=True)


def model_distillation(cfg, labelled, unlabelled, test=None):
    """Several base models; their predictions are averaged per pool item."""
    if cfg.method != "model":
        raise ParameterError("config method must be 'model'")
    return _distill(cfg, labelled, unlabelled, test, use_tta=False)


def data_model_distillation(cfg, labelled, unlabelled, test=None):
    """Flat average over every (base model, TTA variant) prediction."""
    if cfg.method != "data_model":
        raise ParameterError("config method must be 'data_model'")
    return _distill(cfg, labelled, unlabelled, test, use_tta=True)


# ----------------------------------------------------------------------------
# FixMatch
# ----------------------------------------------------------------------------


def fixmatch_loss(sup_probs, sup_labels, weak_dists, strong_probs, tau, lambda_u):
    """Supervised CE plus ``lambda_u`` times CE of strong-view predictions on confident weak-view pseudo-labels.

    The unsupervised term averages over retained items only and is zero
    when nothing passes ``tau``.
    """
    sup = nn.cross_entropy(sup_probs, sup_labels)
    weak_dists = np.asarray(weak_dists)
    if len(weak_dists) == 0:
        return sup
    mask = weak_dists.max(axis=1) >= tau
    if not mask.any() or lambda_u == 0:
        return sup
    pseudo = weak_dists[mask].argmax(axis=1)
    return sup + lambda_u * nn.cross_entropy(np.asarray(strong_probs)[mask], pseudo)


def _fixmatch_step(model, x_l, y_l, x_weak, x_strong, tau, lambda_u):
    weak = nn.forward(model, x_weak) if len(x_weak) else np.zeros((0, model.spec.n_classes))
    mask = weak.max(axis=1) >= tau if len(weak) else np.zeros(0, bool)
    n_l = len(x_l)
    keep = x_strong[mask]
    batch = np.concatenate([x_l, keep]) if len(keep) else x_l
    probs, cache = nn.forward_train(model, batch)
    g = np.zeros_like(probs)
    g[:n_l] = nn.ce_logit_grad(probs[:n_l], y_l)
    loss = nn.cross_entropy(probs[:n_l], y_l)
    if len(keep) and lambda_u:
        pseudo = weak[mask].argmax(axis=1)
        g[n_l:] = lambda_u * nn.ce_logit_grad(probs[n_l:], pseudo)
        loss += lambda_u * nn.cross_entropy(probs[n_l:], pseudo)
    return loss, nn.backward_logits(model, cache, g), int(mask.sum())


def _warm_start(cfg, labelled):
    """Replace the head and run the head-only stage; returns (model, train, val, report)."""
    tc = cfg.train
    train, val = stratified_holdout(labelled, tc.val_frac, [tc.seed, 5])
    model = nn.replace_head(_as_model(cfg.target_model, cfg.seed + 1000), labelled.n_classes, seed=tc.seed)
    report = TrainReport()
    body = set(model.body_names())
    lr_kw = dict(lr_min=tc.lr_min, lr_max=tc.lr_max, steps=tc.lr_steps, batch_size=tc.batch_size, momentum=tc.momentum)
    if tc.stage1_epochs > 0:
        report.lr_stage1 = lr_find(model, train, seed=tc.seed, frozen=body, **lr_kw)
        model, r1 = fit(model, train, tc, frozen=body, lr=report.lr_stage1, epochs=tc.stage1_epochs,
                        val=val, early_stopping=False, seed_offset=1)
        report.extend(r1, 1)
    report.lr_stage2 = lr_find(model, train, seed=tc.seed + 1, **lr_kw)
    return model, train, val, report


def _consistency_loop(cfg, labelled, unlabelled, step_fn):
    """Shared epoch loop for FixMatch / MixMatch with early stopping on held-out accuracy."""
    tc = cfg.train
    model, train, val, report = _warm_start(cfg, labelled)
    model.velocity = {}
    lr = report.lr_stage2
    weak = AugmentPolicy("weak", seed=tc.seed)
    b = tc.batch_size
    bu = b * cfg.unlabelled_ratio
    n_u = len(unlabelled)
    steps_per_epoch = max(1, math.ceil(n_u / bu)) if n_u else max(1, math.ceil(len(train) / b))
    total_steps = steps_per_epoch * max(1, tc.stage2_epochs)
    stopper = EarlyStopping(tc.patience)
    monitor = val if val is not None else train
    step_no = 0
    for epoch in range(1, tc.stage2_epochs + 1):
        t0 = time.perf_counter()
        rng = np.random.default_rng([tc.seed, 3, epoch])
        l_order = np.concatenate([rng.permutation(len(train)) for _ in range(math.ceil(steps_per_epoch * b / len(train)) + 1)])
        u_order = rng.permutation(n_u) if n_u else np.zeros(0, int)
        losses = []
        for s in range(steps_per_epoch):
            li = l_order[s * b : (s + 1) * b]
            ui = u_order[s * bu : (s + 1) * bu]
            x_l = augment_batch(weak, train.images[li], rng)
            loss, grads = step_fn(model, x_l, train.labels[li], unlabelled.images[ui], rng, step_no / total_steps)
            nn.sgd_step(model, grads, lr, tc.momentum)
            losses.append(loss)
            step_no += 1
        acc, mon_loss = holdout_scores(model, monitor)
        report.loss.append(float(np.mean(losses)))
        report.accuracy.append(acc)
        report.seconds.append(time.perf_counter() - t0)
        report.stage.append(2)
        report.stopped_epoch = epoch
        if stopper.update(epoch, acc, {k: v.copy() for k, v in model.params.items()}, mon_loss):
            break
    if stopper.best_state is not None:
        model.params = stopper.best_state
        report.best_epoch = stopper.best_epoch
    model.velocity = {}
    return model, report


def fixmatch_train(cfg, labelled, unlabelled, test=None):
    """FixMatch: weak-view pseudo-labels above ``fixmatch_tau`` supervise strong-view predictions."""
    if cfg.method != "fixmatch":
        raise ParameterError("config method must be 'fixmatch'")
    weak = AugmentPolicy("weak", seed=cfg.train.seed)
    flags = []
    if len(unlabelled) == 0:
        flags.append("empty unlabelled pool; trained with the supervised term only")
    retained = []

    def step(model, x_l, y_l, x_u, rng, progress):
        x_w = augment_batch(weak, x_u, rng) if len(x_u) else x_u
        x_s = augment_batch(cfg.strong, x_u, rng) if len(x_u) else x_u
        loss, grads, kept = _fixmatch_step(model, x_l, y_l, x_w, x_s, cfg.fixmatch_tau, cfg.fixmatch_lambda_u)
        retained.append(kept)
        return loss, grads

    model, report = _consistency_loop(cfg, labelled, unlabelled, step)
    report.flags += flags
    ev = evaluate(model, test, cfg.positive_class) if test is not None and len(test) else None
    return SSLResult(model, ev, [], report, [], flags)


# ----------------------------------------------------------------------------
# MixMatch
# ----------------------------------------------------------------------------


def sharpen(dist, T):
    """Temperature sharpening ``p_i^(1/T) / sum_j p_j^(1/T)`` along the last axis."""
    if not T > 0:
        raise ParameterError("temperature must be positive")
    p = np.asarray(dist, dtype=np.float64)
    if T == 1:
        return p.copy()
    # work in log space so that tiny T does not underflow
    logp = np.log(np.maximum(p, 1e-300)) / T
    logp -= logp.max(axis=-1, keepdims=True)
    e = np.exp(logp)
    return e / e.sum(axis=-1, keepdims=True)


def mixup(x1, p1, x2, p2, alpha, rng=None, lam=None):
    """Convex mix with weight ``max(lam, 1 - lam)`` on the first pair, ``lam ~ Beta(alpha, alpha)``."""
    if not alpha > 0:
        raise ParameterError("alpha must be positive")
    if np.shape(x1) != np.shape(x2) or np.shape(p1) != np.shape(p2):
        raise ParameterError("mixup inputs must have matching shapes")
    if lam is None:
        rng = np.random.default_rng() if rng is None else rng
        lam = rng.beta(alpha, alpha)
    lam = max(lam, 1.0 - lam)
    x = lam * np.asarray(x1) + (1 - lam) * np.asarray(x2)
    p = lam * np.asarray(p1) + (1 - lam) * np.asarray(p2)
    return x.astype(np.asarray(x1).dtype, copy=False), p, lam


def mixmatch_weight(lambda_u, progress, rampup):
    """Linear ramp of the unlabelled weight over the first ``rampup`` fraction of training."""
    if rampup <= 0:
        return lambda_u
    return lambda_u * min(1.0, progress / rampup)


def _mixmatch_step(model, x_l, y_l, x_u, rng, progress, params, weak, n_classes):
    k = n_classes
    p_l = np.eye(k)[y_l]
    if len(x_u):
        views = [augment_batch(weak, x_u, rng) for _ in range(params.K)]
        q = sharpen(ensemble_mean([nn.forward(model, v) for v in views]), params.T)
        u_x = np.concatenate(views)
        u_p = np.tile(q, (params.K, 1))
    else:
        u_x = np.zeros((0,) + x_l.shape[1:], x_l.dtype)
        u_p = np.zeros((0, k))
    all_x = np.concatenate([x_l, u_x])
    all_p = np.concatenate([p_l, u_p])
    perm = rng.permutation(len(all_x))
    x_mix, p_mix, _ = mixup(all_x, all_p, all_x[perm], all_p[perm], params.alpha, rng)
    n_l = len(x_l)
    probs, cache = nn.forward_train(model, x_mix)
    g = np.zeros_like(probs)
    tl = p_mix[:n_l]
    g[:n_l] = (probs[:n_l] - tl) / n_l
    loss = nn.soft_cross_entropy(probs[:n_l], tl)
    n_u = len(probs) - n_l
    w = mixmatch_weight(params.lambda_u, progress, params.rampup)
    if n_u and w:
        pu, qu = probs[n_l:], p_mix[n_l:]
        loss += w * float(np.mean(((pu - qu) ** 2).sum(axis=1)) / k)
        dp = 2.0 * w * (pu - qu) / (n_u * k)
        g[n_l:] = pu * (dp - (pu * dp).sum(axis=1, keepdims=True))
    return loss, nn.backward_logits(model, cache, g)


def mixmatch_train(cfg, labelled, unlabelled, test=None):
    """MixMatch: sharpened multi-view guesses, MixUp of labelled and unlabelled batches, ramped Brier term."""
    if cfg.method != "mixmatch":
        raise ParameterError("config method must be 'mixmatch'")
    weak = AugmentPolicy("weak", seed=cfg.train.seed)
    flags = []
    if len(unlabelled) == 0:
        flags.append("empty unlabelled pool; trained with the supervised term only")

    def step(model, x_l, y_l, x_u, rng, progress):
        return _mixmatch_step(model, x_l, y_l, x_u, rng, progress, cfg.mixmatch, weak, labelled.n_classes)

    model, report = _consistency_loop(cfg, labelled, unlabelled, step)
    report.flags += flags
    ev = evaluate(model, test, cfg.positive_class) if test is not None and len(test) else None
    return SSLResult(model, ev, [], report, [], flags)


def run_method(cfg, labelled, unlabelled, test=None):
    """Dispatch on ``cfg.method``."""
    return {
        "plain": plain_distillation,
        "data": data_distillation,
        "model": model_distillation,
        "data_model": data_model_distillation,
        "fixmatch": fixmatch_train,
        "mixmatch": mixmatch_train,
    }[cfg.method](cfg, labelled, unlabelled, test)
