"""Regenerate stats_oracle.json from scipy.stats (the reference oracle).

Run from the repository root: python3 tests/fixtures/make_stats_oracle.py
"""

import json
from pathlib import Path

import numpy as np
from scipy import stats


def draw(rng, kind, n):
    if kind == "normal":
        return rng.normal(0.8, 0.05, n)
    if kind == "uniform":
        return rng.uniform(0.5, 1.0, n)
    if kind == "exponential":
        return rng.exponential(1.0, n)
    return rng.lognormal(0.0, 0.8, n)


def main():
    kinds = ("normal", "uniform", "exponential", "lognormal")
    sw, lev = [], []
    for i in range(20):
        rng = np.random.default_rng([2024, i])
        n = int(rng.integers(5, 61))
        x = np.round(draw(rng, kinds[i % 4], n), 6)
        r = stats.shapiro(x)
        sw.append({"x": x.tolist(), "W": float(r.statistic), "p": float(r.pvalue)})
        k = int(rng.integers(2, 5))
        groups = [np.round(draw(rng, kinds[(i + j) % 4], int(rng.integers(3, 16))) * (1 + j), 6) for j in range(k)]
        r = stats.levene(*groups, center="mean")
        lev.append({"groups": [g.tolist() for g in groups], "W": float(r.statistic), "p": float(r.pvalue)})
    out = Path(__file__).with_name("stats_oracle.json")
    out.write_text(json.dumps({"shapiro": sw, "levene": lev}, indent=1) + "\n")


if __name__ == "__main__":
    main()
