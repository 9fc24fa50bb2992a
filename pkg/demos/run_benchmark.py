"""
Run a small benchmark from a JSON config and print the seed-mean tables.
Equivalent to ``compactssl bench --config demos/small_benchmark.json --output OUT``.

    python demos/run_benchmark.py [OUT]
"""

import sys
from pathlib import Path

from compactssl.bench import BenchmarkConfig, manifest_hash, run_benchmark

out = sys.argv[1] if len(sys.argv) > 1 else "bench-out"
cfg = BenchmarkConfig.from_json((Path(__file__).parent / "small_benchmark.json").read_text())
cfg.output_dir = out
res = run_benchmark(cfg, progress=lambda c: print(f"  {c.network:13s} {c.method:6s} seed {c.seed}: F1 {c.f1:.3f}"))
for name, table in res.tables.items():
    print(table.to_markdown(name))
if "network-compact" in res.comparisons:
    print(res.comparisons["network-compact"].to_markdown())
for name, reason in res.refusals.items():
    print(f"{name}: no comparison ({reason})")
for name, eff in res.efficiency.items():
    print(f"{name}: {eff.size_bytes} bytes, {eff.epoch_seconds:.2f} s/epoch, {eff.inference_ms:.2f} ms/image")
print("manifest", manifest_hash(out))
