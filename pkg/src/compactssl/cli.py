"""
Command-line front end.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import warnings
from dataclasses import replace
from pathlib import Path

from . import bench, ssl
from . import nncore as nn
from . import pnm
from . import quantize as qz
from . import stats, synthetic, trainer
from .augment import parse_transforms
from .errors import DataError, DegenerateError, DimensionError, FormatError, NumericError, ParameterError, SpecError

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4

DISTILL_VERBS = {
    "plain-distill": "plain",
    "data-distill": "data",
    "model-distill": "model",
    "data-model-distill": "data_model",
    "fixmatch": "fixmatch",
    "mixmatch": "mixmatch",
}


def _size(text):
    try:
        dims = tuple(int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"size must look like 1x32x32, got {text!r}") from None
    if len(dims) != 3:
        raise argparse.ArgumentTypeError("size needs three dimensions C x H x W")
    return dims


def _read_config(path):
    if not path:
        return {}
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParameterError(f"{path}: invalid JSON ({exc})") from None
    except OSError as exc:
        raise ParameterError(f"{path}: cannot read config ({exc.strerror})") from None


def _train_config(args):
    cfg = _read_config(args.config).get("train", {})
    tc = bench.BenchmarkConfig.from_dict({"datasets": [{"name": "x"}], "train": cfg}).train
    tc = replace(tc, seed=args.seed)
    if getattr(args, "epochs", None) is not None:
        tc = replace(tc, stage2_epochs=args.epochs)
    return tc


def _model_ref(ref, input_shape):
    """A saved model file, or the name of a network in the pretrained zoo."""
    if Path(ref).is_file():
        m = qz.load_any(ref)
        if isinstance(m, qz.QuantizedModel):
            raise ParameterError(f"{ref}: quantized models cannot be trained")
        return m
    if ref in bench.ZOO:
        # zoo bodies are pretrained once with seed 0; --seed drives the run itself
        return bench.pretrained(ref, input_shape, 0, os.environ.get("COMPACTSSL_CACHE"))
    raise ParameterError(f"{ref!r} is neither a model file nor one of {sorted(bench.ZOO)}")


def _emit(obj, output=None):
    text = json.dumps(obj, indent=2, sort_keys=True, default=bench._json_default)
    print(text)
    if output:
        Path(output).write_text(text + "\n")


# Verbs ------------------------------------------------------------------------


def cmd_gen_synthetic(args):
    shapes = tuple(s.strip() for s in args.shapes.split(",")) if args.shapes else synthetic.TARGET_SHAPES[:3]
    spec = bench.DatasetSpec("synthetic", shapes=shapes, n_per_class=args.n_per_class, noise=args.noise,
                             seed=args.seed, image_size=args.size)
    data = bench.generate_synthetic(spec)
    if not args.output:
        raise ParameterError("gen-synthetic needs --output DIR")
    bench.write_image_folder(data, args.output)
    _emit({"classes": list(data.class_names), "per_class": data.class_counts().tolist(), "output": args.output})


def cmd_split(args):
    if not args.path or not args.output:
        raise ParameterError("split needs --path DIR and --output DIR")
    data = bench.load_image_folder(args.path, args.size)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", bench.SplitWarning)
        split = bench.make_split(data, args.test_frac, args.labelled_per_class, args.seed)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    out = Path(args.output)
    bench.write_image_folder(split.labelled, out / "labelled")
    bench.write_image_folder(split.test, out / "test")
    udir = out / "unlabelled"
    udir.mkdir(parents=True, exist_ok=True)
    ext = ".pgm" if data.image_shape[0] == 1 else ".ppm"
    for i, img in enumerate(split.unlabelled.images):
        pnm.write(udir / f"{i:05d}{ext}", img)
    # sealed sidecar: original ids of the unlabelled files, labels stay with the source folder
    (out / "unlabelled-sources.json").write_text(
        json.dumps({f"{i:05d}{ext}": sid for i, sid in enumerate(split.unlabelled.ids)}, indent=2) + "\n")
    _emit(dict(split.summary(), seed=args.seed, test_frac=args.test_frac, L=args.labelled_per_class))


def _load_labelled(args):
    if not args.path:
        raise ParameterError("--path DIR with one subdirectory per class is required")
    return bench.load_image_folder(args.path, args.size)


def cmd_train(args):
    data = _load_labelled(args)
    target = _model_ref(args.target_model, args.size)
    model, report = trainer.two_stage_train(target, data, data.n_classes, _train_config(args))
    if args.output:
        nn.save_model(model, args.output)
        Path(str(args.output) + ".report.csv").write_text(report.to_csv())
        Path(str(args.output) + ".report.json").write_text(report.to_json())
    _emit({"lr_stage1": report.lr_stage1, "lr_stage2": report.lr_stage2, "best_epoch": report.best_epoch,
           "stopped_epoch": report.stopped_epoch, "final_loss": report.loss[-1] if report.loss else None,
           "model": args.output})


def cmd_lr_find(args):
    data = _load_labelled(args)
    model = _model_ref(args.target_model, args.size)
    if model.spec.n_classes != data.n_classes:
        model = nn.replace_head(model, data.n_classes, seed=args.seed)
    tc = _train_config(args)
    frozen = model.body_names() if args.frozen_body else ()
    lr = trainer.lr_find(model, data, tc.lr_min, tc.lr_max, tc.lr_steps, tc.batch_size, tc.momentum, args.seed,
                         frozen)
    _emit({"lr": lr})


def cmd_eval(args):
    data = _load_labelled(args)
    m = qz.load_any(args.model)
    if isinstance(m, qz.QuantizedModel):
        preds = qz.quantized_forward(m, data.images).argmax(axis=1)
        ev = trainer.evaluate_predictions(data.labels, preds, data.n_classes, args.positive_class)
    else:
        ev = trainer.evaluate(m, data, args.positive_class)
    _emit(ev.to_dict(), args.output_json)


def cmd_ssl(args):
    method = DISTILL_VERBS[args.verb]
    labelled = _load_labelled(args)
    if not args.path_unlabelled:
        raise ParameterError(f"{args.verb} needs --path-unlabelled DIR")
    pool = bench.load_unlabelled_folder(args.path_unlabelled, args.size)
    test = bench.load_image_folder(args.path_test, args.size) if args.path_test else None
    settings = bench.default_ssl_settings()
    settings.update(_read_config(args.config).get("ssl", {}))
    bases = args.base_model or ([settings["base"]] if method in ("plain", "data") else
                                list(settings["bases"]) if method in ("model", "data_model") else [])
    if method in ("fixmatch", "mixmatch"):
        bases = []
    transforms = parse_transforms(args.transforms if args.transforms is not None else settings["transforms"])
    cfg = ssl.SSLConfig(
        method,
        _model_ref(args.target_model, args.size),
        [_model_ref(b, args.size) for b in bases],
        transforms=tuple(transforms),
        confidence=args.confidence if args.confidence is not None else settings["confidence"],
        soft_labels=settings["soft_labels"],
        fixmatch_tau=settings["fixmatch_tau"],
        fixmatch_lambda_u=settings["fixmatch_lambda_u"],
        unlabelled_ratio=settings["unlabelled_ratio"],
        mixmatch=dict(settings["mixmatch"]),
        train=_train_config(args),
        positive_class=args.positive_class,
        seed=args.seed,
    )
    res = ssl.run_method(cfg, labelled, pool, test)
    out = {"method": method, "n_unlabelled": len(pool), "n_accepted": res.n_accepted, "flags": res.flags}
    if args.output:
        nn.save_model(res.model, args.output)
        out["model"] = args.output
        if res.records:
            csv_path = str(args.output) + ".pseudo.csv"
            Path(csv_path).write_text(ssl.records_to_csv(res.records, labelled.class_names))
            out["pseudo_labels"] = csv_path
    if res.evaluation is not None:
        out["test"] = res.evaluation.to_dict()
    _emit(out)


def cmd_quantize(args):
    if not args.model or not args.output:
        raise ParameterError("quantize needs --model FILE and --output FILE")
    m = nn.load_model(args.model)
    q = qz.quantize_model(m)
    qz.save_quantized_model(q, args.output)
    fsize, qsize = len(nn.model_to_bytes(m)), len(qz.quantized_to_bytes(q))
    _emit({"float_bytes": fsize, "quantized_bytes": qsize, "ratio": qsize / fsize, "output": args.output})


def cmd_bench(args):
    if not args.config:
        raise ParameterError("bench needs --config FILE")
    raw = _read_config(args.config)
    if args.output:
        raw["output_dir"] = args.output
    if args.seed_given:
        raw["master_seed"] = args.seed
    cfg = bench.BenchmarkConfig.from_dict(raw)

    def progress(c):
        tail = f"f1={c.f1:.3f}" if c.status == "ok" else c.error
        print(f"[{c.dataset} {c.network} {c.method} seed={c.seed}] {tail}", file=sys.stderr)

    res = bench.run_benchmark(cfg, progress)
    out = {"cells": len(res.cells), "failures": len(res.failures), "comparisons": sorted(res.comparisons),
           "refused": res.refusals}
    if cfg.output_dir:
        out["manifest_sha256"] = bench.manifest_hash(cfg.output_dir)
    _emit(out)


def cmd_stats_compare(args):
    if not args.path:
        raise ParameterError("stats-compare needs --path TABLE.csv")
    try:
        table = stats.MetricTable.from_csv(Path(args.path).read_text())
    except OSError as exc:
        raise DataError(f"{args.path}: {exc.strerror}") from None
    control = args.control or table.columns[0]
    rep = stats.compare(table, control, args.alpha, higher_is_better=not args.lower_is_better,
                        caption=Path(args.path).stem)
    if args.output:
        out = Path(args.output)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.with_suffix(".md").write_text(rep.to_markdown())
        out.with_suffix(".json").write_text(rep.to_json() + "\n")
    print(rep.to_markdown())


def cmd_measure(args):
    if not args.model:
        raise ParameterError("measure needs --model FILE")
    m = qz.load_any(args.model)
    if args.path:
        data = bench.load_image_folder(args.path, tuple(m.spec.input_shape))
    else:
        data = bench.generate_synthetic(bench.DatasetSpec("measure", n_per_class=50, seed=args.seed,
                                                          image_size=tuple(m.spec.input_shape)))
    if m.spec.n_classes != data.n_classes:
        raise DataError(f"model predicts {m.spec.n_classes} classes but the data has {data.n_classes}")
    rep = bench.measure_efficiency(m, data, _train_config(args))
    _emit(rep.to_dict(), args.output_json)


# Parser -----------------------------------------------------------------------


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="random seed (default 0)")
    common.add_argument("--output", help="output file or directory")
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--size", type=_size, default=(1, 32, 32), help="image size CxHxW (default 1x32x32)")

    data = argparse.ArgumentParser(add_help=False)
    data.add_argument("--path", help="image folder with one subdirectory per class")

    model = argparse.ArgumentParser(add_help=False)
    model.add_argument("--target-model", default="compact", help="model file or zoo name (compact, medium, standard)")
    model.add_argument("--epochs", type=int, default=None, help="maximum fine-tuning epochs")

    p = argparse.ArgumentParser(prog="compactssl", description=__doc__.strip().splitlines()[0])
    sub = p.add_subparsers(dest="verb", required=True)

    s = sub.add_parser("gen-synthetic", parents=[common], help="render a synthetic image folder")
    s.add_argument("--shapes", help=f"comma-separated shape names from {synthetic.TARGET_SHAPES + synthetic.SOURCE_SHAPES}")
    s.add_argument("--n-per-class", type=int, default=100)
    s.add_argument("--noise", type=float, default=0.1)
    s.set_defaults(fn=cmd_gen_synthetic)

    s = sub.add_parser("split", parents=[common, data], help="stratified test/labelled/unlabelled split")
    s.add_argument("--test-frac", type=float, default=0.25)
    s.add_argument("--labelled-per-class", "-L", type=int, default=75)
    s.set_defaults(fn=cmd_split)

    s = sub.add_parser("train", parents=[common, data, model], help="two-stage supervised fine-tuning")
    s.set_defaults(fn=cmd_train)

    s = sub.add_parser("lr-find", parents=[common, data, model], help="learning-rate range test")
    s.add_argument("--frozen-body", action="store_true", help="probe head-only training")
    s.set_defaults(fn=cmd_lr_find)

    s = sub.add_parser("eval", parents=[common, data], help="accuracy, confusion matrix and F1")
    s.add_argument("--model", required=True)
    s.add_argument("--positive-class", type=int, default=None)
    s.add_argument("--output-json", help="also write the report here")
    s.set_defaults(fn=cmd_eval)

    for verb in DISTILL_VERBS:
        s = sub.add_parser(verb, parents=[common, data, model], help=f"{DISTILL_VERBS[verb]} semi-supervised training")
        s.add_argument("--path-unlabelled", help="folder of unlabelled images")
        s.add_argument("--path-test", help="optional labelled test folder")
        s.add_argument("--base-model", "--base-models", dest="base_model", action="append",
                       help="base model file or zoo name (repeat for several)")
        s.add_argument("--confidence", type=float, default=None, help="pseudo-label threshold (default 0.8)")
        s.add_argument("--transforms", default=None, help="comma-separated TTA transforms, or 'none'")
        s.add_argument("--positive-class", type=int, default=None)
        s.set_defaults(fn=cmd_ssl)

    s = sub.add_parser("quantize", parents=[common], help="post-training int8 quantization")
    s.add_argument("--model", required=True)
    s.set_defaults(fn=cmd_quantize)

    s = sub.add_parser("bench", parents=[common], help="run a benchmark from a JSON config")
    s.set_defaults(fn=cmd_bench)

    s = sub.add_parser("stats-compare", parents=[common, data], help="statistical comparison of a metric table CSV")
    s.add_argument("--control", help="control column (default: first)")
    s.add_argument("--alpha", type=float, default=stats.DEFAULT_ALPHA)
    s.add_argument("--lower-is-better", action="store_true")
    s.set_defaults(fn=cmd_stats_compare)

    s = sub.add_parser("measure", parents=[common, data], help="size, epoch time and inference latency")
    s.add_argument("--model", required=True)
    s.add_argument("--output-json", help="also write the report here")
    s.set_defaults(fn=cmd_measure)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    args.seed_given = args.seed is not None
    if args.seed is None:
        args.seed = 0
    try:
        args.fn(args)
    except (ParameterError, SpecError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, FormatError, DimensionError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericError, DegenerateError, FloatingPointError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
