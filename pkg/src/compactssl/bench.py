"""
Benchmark harness: dataset ingestion, the stratified split protocol, a
cache of pretrained bodies, the (dataset x network x method x seed) runner,
efficiency measurement and report emission.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import statistics
import time
import warnings
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import nncore as nn
from . import pnm
from . import quantize as qz
from . import ssl
from . import synthetic
from .augment import AugmentPolicy, format_transforms, parse_transforms
from .data import LabelledData, UnlabelledPool
from .errors import CompactSSLError, DataError, ParameterError
from .stats import MetricTable, compare
from .trainer import TrainConfig, evaluate, evaluate_predictions, fit, two_stage_train

BASELINE = "base"
BENCH_METHODS = (BASELINE,) + ssl.METHODS
INT8_SUFFIX = "-int8"


class SplitWarning(UserWarning):
    """A class had too few images to fill the labelled quota."""


def derive_seed(*parts):
    """Stable 31-bit seed from an arbitrary tuple of labels."""
    digest = hashlib.sha256("\x1f".join(str(p) for p in parts).encode()).digest()
    return int.from_bytes(digest[:4], "little") & 0x7FFFFFFF


# Datasets ---------------------------------------------------------------------


@dataclass
class DatasetSpec:
    """Where a dataset comes from and what shape its images take.

    ``source`` is ``"synthetic"`` (rendered from ``shapes``) or ``"folder"``
    (one subdirectory of PGM/PPM files per class under ``path``). Images
    under ``unlabelled_path`` are appended to every unlabelled pool.
    """

    name: str
    source: str = "synthetic"
    path: str | None = None
    unlabelled_path: str | None = None
    shapes: tuple = synthetic.TARGET_SHAPES[:3]
    n_per_class: int = 240
    noise: float = 0.1
    seed: int = 1
    positive_class: int | None = None
    image_size: tuple = (1, 32, 32)

    def __post_init__(self):
        self.shapes = tuple(self.shapes)
        self.image_size = tuple(int(v) for v in self.image_size)
        if self.source not in ("synthetic", "folder"):
            raise ParameterError(f"unknown dataset source {self.source!r}")
        if self.source == "folder" and not self.path:
            raise ParameterError(f"dataset {self.name!r}: folder source needs a path")
        if self.source == "synthetic" and len(self.shapes) < 2:
            raise ParameterError(f"dataset {self.name!r}: need at least two classes")
        if len(self.image_size) != 3 or self.image_size[0] not in (1, 3):
            raise ParameterError("image_size must be (C, H, W) with C in {1, 3}")

    @property
    def class_names(self):
        if self.source == "synthetic":
            return self.shapes
        return tuple(sorted(d.name for d in Path(self.path).iterdir() if d.is_dir() and not d.name.startswith(".")))

    def to_dict(self):
        return asdict(self)

    def load(self):
        if self.source == "synthetic":
            return generate_synthetic(self)
        return load_image_folder(self.path, self.image_size)


def _fit_channels(img, c):
    if img.shape[0] == c:
        return img
    if c == 3:
        return np.repeat(img, 3, axis=0)
    lum = np.array([0.299, 0.587, 0.114], dtype=np.float32)[:, None, None]
    return (img * lum).sum(axis=0, keepdims=True)


def _load_image(path, size):
    raw = pnm.read(path).astype(np.float32) / 255.0
    img = pnm.resize_bilinear(raw, size[1], size[2])
    return np.clip(_fit_channels(img, size[0]), 0, 1).astype(np.float32)


def _image_files(directory):
    return sorted(p for p in Path(directory).iterdir() if p.is_file() and not p.name.startswith("."))


def load_image_folder(path, size=(1, 32, 32)):
    """Labelled examples from ``path/<class>/<image>.pgm|ppm``; class ids follow sorted directory names."""
    root = Path(path)
    if not root.is_dir():
        raise DataError(f"{path}: not a directory")
    classes = sorted(d for d in root.iterdir() if d.is_dir() and not d.name.startswith("."))
    if len(classes) < 2:
        raise DataError(f"{path}: need at least two class directories, found {len(classes)}")
    images, labels, ids = [], [], []
    for c, d in enumerate(classes):
        files = _image_files(d)
        if not files:
            raise DataError(f"{d}: empty class directory")
        for f in files:
            images.append(_load_image(f, size))
            labels.append(c)
            ids.append(f"{d.name}/{f.name}")
    return LabelledData(np.stack(images), np.array(labels), tuple(d.name for d in classes), tuple(ids))


def load_unlabelled_folder(path, size=(1, 32, 32)):
    """Unlabelled pool from every image file directly under ``path``."""
    files = _image_files(path) if Path(path).is_dir() else None
    if not files:
        raise DataError(f"{path}: no images found")
    return UnlabelledPool(np.stack([_load_image(f, size) for f in files]), tuple(f.name for f in files))


def write_image_folder(data, path):
    """Write a labelled set as ``path/<class>/<id>.pgm|ppm`` (inverse of :func:`load_image_folder`)."""
    root = Path(path)
    ext = ".pgm" if data.image_shape[0] == 1 else ".ppm"
    for i, (img, y) in enumerate(zip(data.images, data.labels)):
        d = root / data.class_names[y]
        d.mkdir(parents=True, exist_ok=True)
        pnm.write(d / f"{i:05d}{ext}", img)
    return root


def generate_synthetic(spec, n_per_class=None, seed=None):
    """Render a synthetic dataset from a :class:`DatasetSpec` (overrides optional)."""
    n = spec.n_per_class if n_per_class is None else n_per_class
    c, h, w = spec.image_size
    data = synthetic.generate(spec.shapes, n, spec.seed if seed is None else seed, size=h, noise=spec.noise,
                              name=spec.name)
    if (c, h, w) != data.image_shape:
        imgs = np.stack([_fit_channels(pnm.resize_bilinear(x, h, w), c) for x in data.images])
        data = LabelledData(imgs, data.labels, data.class_names, data.ids)
    return data


# Split protocol ---------------------------------------------------------------


class AuditLabels:
    """Sealed ground truth of the unlabelled pool.

    Only aggregate pseudo-label accuracy can be read back; the labels are
    not reachable through attributes or ``repr``.
    """

    __slots__ = ("__truth",)

    def __init__(self, ids, labels):
        self.__truth = dict(zip(ids, (int(v) for v in labels)))

    def __repr__(self):
        return f"AuditLabels(<{len(self.__truth)} sealed>)"

    def __len__(self):
        return len(self.__truth)

    def pseudo_label_accuracy(self, records):
        """Fraction of accepted pseudo-labels that match the withheld truth (None if none accepted).

        Records without withheld truth (external unlabelled images) are skipped.
        """
        hits = [r.assigned == self.__truth[r.example_id] for r in records
                if r.accepted and r.example_id in self.__truth]
        return float(np.mean(hits)) if hits else None


@dataclass
class DatasetSplit:
    labelled: LabelledData
    unlabelled: UnlabelledPool
    test: LabelledData
    seed: object
    labelled_per_class: int
    test_frac: float
    audit: AuditLabels = field(repr=False)

    def summary(self):
        k = len(self.labelled.class_names)
        return {
            "labelled": np.bincount(self.labelled.labels, minlength=k).tolist(),
            "test": np.bincount(self.test.labels, minlength=k).tolist(),
            "unlabelled": len(self.unlabelled),
        }


def make_split(examples, test_frac=0.25, L=75, seed=0):
    """Stratified seeded split into test, labelled and unlabelled parts.

    Per class: ``floor(test_frac * n)`` (at least 1) images go to test, the
    next ``L`` to the labelled set and the rest to the unlabelled pool. A
    class with at most ``L`` training images puts all of them in the
    labelled set and raises a :class:`SplitWarning`.
    """
    if not 0 < test_frac < 1:
        raise ParameterError("test_frac must lie in (0, 1)")
    if L < 1:
        raise ParameterError("L must be >= 1")
    rng = np.random.default_rng(seed)
    test_idx, lab_idx, unl_idx = [], [], []
    for c in range(examples.n_classes):
        idx = np.flatnonzero(examples.labels == c)
        idx = idx[rng.permutation(len(idx))]
        n_test = max(1, int(np.floor(test_frac * len(idx)))) if len(idx) else 0
        rest = idx[n_test:]
        if len(rest) < L + 1:
            warnings.warn(
                f"class {examples.class_names[c]!r} has {len(rest)} training images (< L+1 = {L + 1}); "
                "all go to the labelled set",
                SplitWarning,
                stacklevel=2,
            )
        test_idx += list(idx[:n_test])
        lab_idx += list(rest[:L])
        unl_idx += list(rest[L:])
    unl = examples.subset(unl_idx) if unl_idx else None
    pool = UnlabelledPool(unl.images, unl.ids) if unl is not None else UnlabelledPool(
        np.zeros((0,) + tuple(examples.image_shape), np.float32), ())
    audit = AuditLabels(unl.ids, unl.labels) if unl is not None else AuditLabels((), ())
    return DatasetSplit(examples.subset(lab_idx), pool, examples.subset(test_idx), seed, L, test_frac, audit)


# Pretrained bodies ------------------------------------------------------------

ZOO = {
    "compact": (8, 16),
    "medium": (16, 32, 32, 64),
    "standard": (32, 64, 64, 128),
}
PRETRAIN_EPOCHS = {"compact": 12, "medium": 10, "standard": 8}
PRETRAIN_LR = 0.01
PRETRAIN_PER_CLASS = 150

_PRETRAINED = {}


def network_spec(name, n_classes, input_shape=(1, 32, 32)):
    base = name[: -len(INT8_SUFFIX)] if name.endswith(INT8_SUFFIX) else name
    if base not in ZOO:
        raise ParameterError(f"unknown network {name!r}; expected one of {sorted(ZOO)} (optionally with {INT8_SUFFIX})")
    return nn.conv_net(ZOO[base], n_classes, tuple(input_shape), name=base)


def pretrained(name, input_shape=(1, 32, 32), seed=0, cache_dir=None):
    """Body pretrained on the source shape task; memoized in-process and optionally on disk."""
    input_shape = tuple(int(v) for v in input_shape)
    key = (name, input_shape, int(seed))
    if key in _PRETRAINED:
        return _PRETRAINED[key].copy()
    path = None
    if cache_dir is not None:
        path = Path(cache_dir) / f"pretrained-{name}-{'x'.join(map(str, input_shape))}-s{seed}.ssdm"
        if path.exists():
            _PRETRAINED[key] = nn.load_model(path)
            return _PRETRAINED[key].copy()
    spec = network_spec(name, len(synthetic.SOURCE_SHAPES), input_shape)
    src = generate_synthetic(
        DatasetSpec("source", shapes=synthetic.SOURCE_SHAPES, seed=1000 + seed, image_size=input_shape),
        PRETRAIN_PER_CLASS,
    )
    cfg = TrainConfig(seed=seed)
    model, _ = fit(nn.init_model(spec, seed), src, cfg, lr=PRETRAIN_LR, epochs=PRETRAIN_EPOCHS[name],
                   early_stopping=False)
    _PRETRAINED[key] = model
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        nn.save_model(model, path)
    return model.copy()


# Benchmark --------------------------------------------------------------------


def default_ssl_settings():
    return {
        "confidence": 0.8,
        "transforms": format_transforms(ssl.DEFAULT_TTA),
        "base": "standard",
        "bases": ["standard", "medium", "compact"],
        "soft_labels": False,
        "fixmatch_tau": 0.95,
        "fixmatch_lambda_u": 1.0,
        "unlabelled_ratio": 2,
        "mixmatch": {},
    }


@dataclass
class BenchmarkConfig:
    datasets: list
    networks: list = field(default_factory=lambda: ["compact"])
    methods: list = field(default_factory=lambda: [BASELINE, "plain", "data"])
    seeds: list = field(default_factory=lambda: [0, 1, 2, 3, 4])
    train: TrainConfig = field(default_factory=TrainConfig)
    ssl: dict = field(default_factory=default_ssl_settings)
    output_dir: str | None = None
    master_seed: int = 0
    test_frac: float = 0.25
    labelled_per_class: int = 10
    max_unlabelled: int | None = 500
    pretrain_seed: int = 0
    cache_dir: str | None = None
    control_method: str | None = None
    control_network: str | None = None
    alpha: float = 0.05
    measure_efficiency: bool = False

    def __post_init__(self):
        self.datasets = [d if isinstance(d, DatasetSpec) else DatasetSpec(**d) for d in self.datasets]
        if isinstance(self.train, dict):
            self.train = TrainConfig(**self.train)
        merged = default_ssl_settings()
        merged.update(self.ssl or {})
        self.ssl = merged
        for label, items in (("datasets", self.datasets), ("networks", self.networks),
                             ("methods", self.methods), ("seeds", self.seeds)):
            if not items:
                raise ParameterError(f"benchmark needs at least one entry in {label}")
        if len(set(self.seeds)) != len(self.seeds):
            raise ParameterError("seeds must be distinct")
        names = [d.name for d in self.datasets]
        if len(set(names)) != len(names):
            raise ParameterError("dataset names must be distinct")
        for m in self.methods:
            if m not in BENCH_METHODS:
                raise ParameterError(f"unknown method {m!r}; expected one of {BENCH_METHODS}")
        for n in self.networks:
            network_spec(n, 2)
        for n in [self.ssl["base"]] + list(self.ssl["bases"]):
            network_spec(n, 2)
        parse_transforms(self.ssl["transforms"])
        if self.control_method is not None and self.control_method not in self.methods:
            raise ParameterError(f"control method {self.control_method!r} is not in the method list")
        if self.control_network is not None and self.control_network not in self.networks:
            raise ParameterError(f"control network {self.control_network!r} is not in the network list")

    def to_dict(self):
        d = asdict(self)
        d["output_dir"] = None  # location does not affect results
        d["cache_dir"] = None
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        unknown = set(d) - {f for f in cls.__dataclass_fields__}
        if unknown:
            raise ParameterError(f"unknown benchmark config keys: {sorted(unknown)}")
        if "datasets" not in d:
            raise ParameterError("benchmark config needs a 'datasets' list")
        train = dict(d.get("train") or {})
        if isinstance(train.get("augment"), dict):
            train["augment"] = AugmentPolicy(**train["augment"])
        d["train"] = TrainConfig(**train)
        return cls(**d)

    @classmethod
    def from_json(cls, text):
        try:
            return cls.from_dict(json.loads(text))
        except (TypeError, json.JSONDecodeError) as exc:
            raise ParameterError(f"invalid benchmark config: {exc}") from None


@dataclass
class Cell:
    dataset: str
    network: str
    method: str
    seed: int
    f1: float | None = None
    accuracy: float | None = None
    n_accepted: int | None = None
    pseudo_label_accuracy: float | None = None
    status: str = "ok"
    error: str = ""


@dataclass
class GroupTable:
    """Seed-mean table that may contain missing cells (NaN)."""

    name: str
    rows: list
    columns: list
    mean: np.ndarray
    std: np.ndarray
    n_seeds: int

    @property
    def complete(self):
        return bool(np.all(np.isfinite(self.mean)))

    def metric_table(self):
        if not self.complete:
            raise DataError(f"table {self.name} has missing cells")
        return MetricTable(self.rows, self.columns, self.mean)

    def to_csv(self):
        if self.complete:
            return self.metric_table().to_csv()
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["dataset"] + self.columns)
        for r, row in zip(self.rows, self.mean):
            w.writerow([r] + [f"{v:.6f}" if np.isfinite(v) else "NA" for v in row])
        return buf.getvalue()

    def to_markdown(self, caption=""):
        lines = [f"**{caption or self.name}** (mean (std) F1 x 100 over {self.n_seeds} seeds)", ""]
        lines.append("| Dataset | " + " | ".join(self.columns) + " |")
        lines.append("|---" * (len(self.columns) + 1) + "|")
        for r, mrow, srow in zip(self.rows, self.mean, self.std):
            cells = [f"{100 * m:.1f} ({100 * s:.1f})" if np.isfinite(m) else "missing" for m, s in zip(mrow, srow)]
            lines.append(f"| {r} | " + " | ".join(cells) + " |")
        return "\n".join(lines) + "\n"


@dataclass
class BenchmarkResult:
    config: BenchmarkConfig
    cells: list
    tables: dict
    comparisons: dict
    refusals: dict
    efficiency: dict = field(default_factory=dict)

    @property
    def failures(self):
        return [c for c in self.cells if c.status != "ok"]

    def cell(self, dataset, network, method, seed):
        for c in self.cells:
            if (c.dataset, c.network, c.method, c.seed) == (dataset, network, method, seed):
                return c
        raise KeyError((dataset, network, method, seed))

    def mean_f1(self, dataset, network, method):
        vals = [c.f1 for c in self.cells
                if (c.dataset, c.network, c.method) == (dataset, network, method) and c.status == "ok"]
        return float(np.mean(vals)) if vals else float("nan")


def _ssl_config(cfg, method, target, input_shape, train, seed, positive_class):
    s = cfg.ssl
    if method in ("plain", "data"):
        bases = [pretrained(s["base"], input_shape, cfg.pretrain_seed, cfg.cache_dir)]
    elif method in ("model", "data_model"):
        bases = [pretrained(b, input_shape, cfg.pretrain_seed, cfg.cache_dir) for b in s["bases"]]
    else:
        bases = []
    return ssl.SSLConfig(
        method,
        target,
        bases,
        transforms=tuple(parse_transforms(s["transforms"])),
        confidence=s["confidence"],
        soft_labels=s["soft_labels"],
        fixmatch_tau=s["fixmatch_tau"],
        fixmatch_lambda_u=s["fixmatch_lambda_u"],
        unlabelled_ratio=s["unlabelled_ratio"],
        mixmatch=dict(s["mixmatch"]),
        train=train,
        positive_class=positive_class,
        seed=seed,
    )


def _prepare_split(cfg, ds, examples, seed):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SplitWarning)
        split = make_split(examples, cfg.test_frac, cfg.labelled_per_class,
                           derive_seed(cfg.master_seed, ds.name, "split", seed))
    if cfg.max_unlabelled is not None and len(split.unlabelled) > cfg.max_unlabelled:
        rng = np.random.default_rng(derive_seed(cfg.master_seed, ds.name, "pool", seed))
        keep = np.sort(rng.permutation(len(split.unlabelled))[: cfg.max_unlabelled])
        split.unlabelled = split.unlabelled.subset(keep)
    if ds.unlabelled_path:
        extra = load_unlabelled_folder(ds.unlabelled_path, ds.image_size)
        split.unlabelled = UnlabelledPool(np.concatenate([split.unlabelled.images, extra.images]),
                                          split.unlabelled.ids + tuple(f"extra/{i}" for i in extra.ids))
    return split


def _run_float_cell(cfg, ds, split, network, method, seed):
    """Train one (network, method) model; returns (model, eval, records)."""
    # the method is left out of the seed so every method sees the same random stream
    t_seed = derive_seed(cfg.master_seed, ds.name, network, seed)
    train = replace(cfg.train, seed=t_seed)
    k = split.labelled.n_classes
    target = pretrained(network, ds.image_size, cfg.pretrain_seed, cfg.cache_dir)
    if method == BASELINE:
        model, _ = two_stage_train(target, split.labelled, k, train)
        return model, evaluate(model, split.test, ds.positive_class), []
    scfg = _ssl_config(cfg, method, target, ds.image_size, train, t_seed, ds.positive_class)
    res = ssl.run_method(scfg, split.labelled, split.unlabelled, split.test)
    return res.model, res.evaluation, res.records


def _group(cells, name, rows, columns, key, n_seeds):
    mean = np.full((len(rows), len(columns)), np.nan)
    std = np.full_like(mean, np.nan)
    for i, r in enumerate(rows):
        for j, c in enumerate(columns):
            vals = [x for x in cells if key(x) == (r, c)]
            if vals and all(x.status == "ok" for x in vals):
                f = np.array([x.f1 for x in vals])
                mean[i, j] = f.mean()
                std[i, j] = f.std(ddof=1) if len(f) > 1 else 0.0
    return GroupTable(name, list(rows), list(columns), mean, std, n_seeds)


def run_benchmark(cfg, progress=None):
    """Run every (dataset, network, method, seed) cell, then tabulate and compare."""
    cells = []
    cache = {}
    efficiency = {}
    for ds in cfg.datasets:
        examples = ds.load()
        for s in cfg.seeds:
            split = _prepare_split(cfg, ds, examples, s)
            for network in cfg.networks:
                base_net = network[: -len(INT8_SUFFIX)] if network.endswith(INT8_SUFFIX) else network
                for method in cfg.methods:
                    cell = Cell(ds.name, network, method, s)
                    try:
                        key = (ds.name, base_net, method, s)
                        if key not in cache:
                            cache[key] = _run_float_cell(cfg, ds, split, base_net, method, s)
                        model, ev, records = cache[key]
                        if network.endswith(INT8_SUFFIX):
                            qm = qz.quantize_model(model)
                            preds = qz.quantized_forward(qm, split.test.images).argmax(axis=1)
                            ev = evaluate_predictions(split.test.labels, preds, split.test.n_classes,
                                                      ds.positive_class)
                        cell.f1, cell.accuracy = float(ev.f1), float(ev.accuracy)
                        if records:
                            cell.n_accepted = sum(r.accepted for r in records)
                            cell.pseudo_label_accuracy = split.audit.pseudo_label_accuracy(records)
                    except (CompactSSLError, ArithmeticError, ValueError) as exc:
                        cell.status = "failed"
                        cell.error = f"{type(exc).__name__}: {exc}"
                    cells.append(cell)
                    if progress is not None:
                        progress(cell)
        if cfg.measure_efficiency:
            for network in cfg.networks:
                if network in efficiency:
                    continue
                target = nn.replace_head(pretrained(network[: -len(INT8_SUFFIX)] if network.endswith(INT8_SUFFIX)
                                                    else network, ds.image_size, cfg.pretrain_seed, cfg.cache_dir),
                                         examples.n_classes, seed=cfg.master_seed)
                model = qz.quantize_model(target) if network.endswith(INT8_SUFFIX) else target
                efficiency[network] = measure_efficiency(model, examples, cfg.train)

    tables, comparisons, refusals = {}, {}, {}
    n_seeds = len(cfg.seeds)
    rows = [d.name for d in cfg.datasets]
    for network in cfg.networks:
        name = f"network-{network}"
        tables[name] = _group([c for c in cells if c.network == network], name, rows, cfg.methods,
                              lambda c: (c.dataset, c.method), n_seeds)
    for method in cfg.methods:
        name = f"method-{method}"
        tables[name] = _group([c for c in cells if c.method == method], name, rows, cfg.networks,
                              lambda c: (c.dataset, c.network), n_seeds)
    for name, t in tables.items():
        by_network = name.startswith("network-")
        control = (cfg.control_method or ("data" if "data" in cfg.methods else cfg.methods[0])) if by_network \
            else (cfg.control_network or cfg.networks[0])
        if not t.complete:
            refusals[name] = "table has missing cells (failed runs); statistics require a complete table"
            continue
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                comparisons[name] = compare(t.metric_table(), control, cfg.alpha,
                                            caption=f"{name} ({n_seeds} seeds per cell)")
        except CompactSSLError as exc:
            refusals[name] = str(exc)
    result = BenchmarkResult(cfg, cells, tables, comparisons, refusals, efficiency)
    if cfg.output_dir:
        emit_report(result, cfg.output_dir)
    return result


# Efficiency -------------------------------------------------------------------


@dataclass
class EfficiencyReport:
    size_bytes: int
    epoch_seconds: float
    inference_ms: float
    params: int
    flops: int
    epoch_repeats: int
    inference_repeats: int

    def to_dict(self):
        return asdict(self)


def measure_efficiency(model, data, train_config=None, epoch_repeats=3, inference_repeats=100, warmup=10):
    """Serialized size, median epoch time and median single-image inference latency.

    Quantized models are timed for training through their dequantized float
    counterpart and for inference through :func:`quantize.quantized_forward`.
    """
    if inference_repeats < 100:
        raise ParameterError("inference timing needs at least 100 repetitions")
    if isinstance(model, qz.QuantizedModel):
        size = len(qz.quantized_to_bytes(model))
        float_model = qz.dequantize_model(model)

        def infer(x):
            return qz.quantized_forward(model, x)
    else:
        size = len(nn.model_to_bytes(model))
        float_model = model

        def infer(x):
            return nn.forward(model, x)
    cfg = train_config or TrainConfig()
    epochs = []
    for r in range(epoch_repeats):
        t0 = time.perf_counter()
        fit(float_model.copy(), data, cfg, lr=1e-3, epochs=1, early_stopping=False, seed_offset=r)
        epochs.append(time.perf_counter() - t0)
    x = data.images[:1]
    for _ in range(warmup):
        infer(x)
    lat = []
    for _ in range(inference_repeats):
        t0 = time.perf_counter()
        infer(x)
        lat.append((time.perf_counter() - t0) * 1000)
    spec = model.spec
    return EfficiencyReport(size, statistics.median(epochs), statistics.median(lat), nn.count_params(spec),
                            nn.count_flops(spec), epoch_repeats, inference_repeats)


# Reports ----------------------------------------------------------------------

CELL_FIELDS = ("dataset", "network", "method", "seed", "f1", "accuracy", "n_accepted", "pseudo_label_accuracy",
               "status", "error")


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.6f}"
    return str(v)


def cells_to_csv(cells):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CELL_FIELDS)
    for c in cells:
        w.writerow([_fmt(getattr(c, f)) for f in CELL_FIELDS])
    return buf.getvalue()


def efficiency_to_csv(efficiency):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    fields = ("size_bytes", "epoch_seconds", "inference_ms", "params", "flops", "epoch_repeats", "inference_repeats")
    w.writerow(("network",) + fields)
    for name, rep in efficiency.items():
        w.writerow([name] + [_fmt(getattr(rep, f)) for f in fields])
    return buf.getvalue()


def _sha256(data):
    return hashlib.sha256(data).hexdigest()


def canonical_json(obj):
    return json.dumps(obj, sort_keys=True, indent=2, default=_json_default) + "\n"


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, (np.ndarray, tuple)):
        return list(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def emit_report(result, out_dir):
    """Write tables, comparisons, per-cell results and a hashed manifest under ``out_dir``.

    Timing measurements go to ``timing/`` and are listed in the manifest as
    volatile (named, not hashed) so reruns keep an identical manifest.
    """
    root = Path(out_dir)
    files = {}

    def put(rel, text):
        p = root / rel
        p.parent.mkdir(parents=True, exist_ok=True)
        data = text.encode()
        p.write_bytes(data)
        files[rel] = _sha256(data)

    config = result.config.to_dict()
    put("config.json", canonical_json(config))
    put("cells.csv", cells_to_csv(result.cells))
    summary = []
    for name, t in result.tables.items():
        put(f"tables/{name}.csv", t.to_csv())
        summary.append(t.to_markdown(name))
    put("tables/summary.md", "\n".join(summary))
    for name, rep in result.comparisons.items():
        put(f"comparisons/{name}.md", rep.to_markdown())
        put(f"comparisons/{name}.json", rep.to_json() + "\n")
    for name, reason in result.refusals.items():
        put(f"comparisons/{name}.refused.txt", reason + "\n")
    volatile = []
    if result.efficiency:
        p = root / "timing" / "efficiency.csv"
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_text(efficiency_to_csv(result.efficiency))
        volatile.append("timing/efficiency.csv")
    body = {
        "config_sha256": _sha256(canonical_json(config).encode()),
        "seeds": list(result.config.seeds),
        "files": dict(sorted(files.items())),
        "volatile": volatile,
        "failures": [{"cell": [c.dataset, c.network, c.method, c.seed], "error": c.error} for c in result.failures],
    }
    manifest = dict(body, manifest_sha256=_sha256(canonical_json(body).encode()))
    (root / "manifest.json").write_text(canonical_json(manifest))
    return root / "manifest.json"


def manifest_hash(out_dir):
    with open(os.path.join(out_dir, "manifest.json")) as fh:
        return json.load(fh)["manifest_sha256"]
