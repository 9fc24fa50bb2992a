"""
Train a compact classifier on ten labelled images per class, then let a
larger pretrained network pseudo-label a pool of unlabelled images and
retrain the compact model on both. Finally quantize the result to int8.

    python demos/quickstart.py
"""

from compactssl import bench, ssl
from compactssl import nncore as nn
from compactssl import quantize as qz
from compactssl.trainer import TrainConfig, evaluate, two_stage_train

data = bench.DatasetSpec("shapes", n_per_class=240).load()
split = bench.make_split(data, test_frac=0.25, L=10, seed=0)
print("split:", split.summary())

train = TrainConfig(seed=0)
compact = bench.pretrained("compact")
standard = bench.pretrained("standard")

baseline, _ = two_stage_train(compact, split.labelled, data.n_classes, train)
print(f"labelled only      macro-F1 {evaluate(baseline, split.test).f1:.3f}")

cfg = ssl.SSLConfig("data", target_model=compact, base_models=[standard], train=train)
res = ssl.run_method(cfg, split.labelled, split.unlabelled, split.test)
print(f"data distillation  macro-F1 {res.evaluation.f1:.3f}  "
      f"({res.n_accepted}/{len(split.unlabelled)} pseudo-labels accepted, "
      f"{split.audit.pseudo_label_accuracy(res.records):.1%} correct)")

q = qz.quantize_model(res.model)
preds = qz.quantized_forward(q, split.test.images).argmax(axis=1)
agree = (preds == nn.forward(res.model, split.test.images).argmax(axis=1)).mean()
print(f"int8 model: {len(qz.quantized_to_bytes(q))} bytes vs {len(nn.model_to_bytes(res.model))} float, "
      f"argmax agreement {agree:.1%}")
