import json
import math
import warnings
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats as sps

from compactssl import stats
from compactssl.errors import DataError, DegenerateError, ParameterError
from rank_tables import N_DATASETS, PRINTED_6, PRINTED_7, RANKS_6, RANKS_7, matches_printed

ORACLE = json.loads((Path(__file__).parent / "fixtures" / "stats_oracle.json").read_text())


# F1 --------------------------------------------------------------------------


def test_f1_examples():
    assert stats.macro_f1([0, 1, 0, 1], [0, 1, 0, 1]) == 1.0
    assert stats.binary_f1([1, 1, 1, 0, 0], [1, 1, 0, 1, 0], positive=1) == pytest.approx(0.6667, abs=1e-4)
    assert stats.macro_f1(list("AAAB"), list("AAAA")) == pytest.approx(0.42857, abs=1e-4)


def test_f1_empty_input():
    with pytest.raises(DataError):
        stats.macro_f1([], [])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 3)), min_size=1, max_size=40), st.permutations(range(4)))
def test_macro_f1_label_permutation_invariant(pairs, perm):
    truth = [t for t, _ in pairs]
    preds = [p for _, p in pairs]
    a = stats.macro_f1(truth, preds, labels=range(4))
    b = stats.macro_f1([perm[t] for t in truth], [perm[p] for p in preds], labels=range(4))
    assert a == pytest.approx(b)


def test_confusion_matrix_counts():
    cm = stats.confusion_matrix([0, 0, 1, 2], [0, 1, 1, 2], labels=[0, 1, 2])
    assert cm.tolist() == [[1, 1, 0], [0, 1, 0], [0, 0, 1]]


# distribution tails -----------------------------------------------------------


def test_tails():
    assert stats.normal_cdf(0) == 0.5
    assert stats.normal_cdf(1.96) == pytest.approx(0.975, abs=1e-4)
    assert stats.chi2_sf(8, 2) == pytest.approx(math.exp(-4), abs=1e-6)
    for x in (-3.5, -1.0, 0.3, 2.2, 6.0):
        assert abs(stats.normal_cdf(x) - sps.norm.cdf(x)) < 1e-10
    for x, df in ((0.5, 1), (3.3, 4), (20.0, 7)):
        assert stats.chi2_sf(x, df) == pytest.approx(sps.chi2.sf(x, df), rel=1e-8)
    for x, d1, d2 in ((0.7, 2, 10), (6.0, 1, 4), (3.1, 5, 30)):
        assert stats.f_sf(x, d1, d2) == pytest.approx(sps.f.sf(x, d1, d2), rel=1e-8)
    with pytest.raises(ParameterError):
        stats.chi2_sf(1.0, 0)
    with pytest.raises(ParameterError):
        stats.f_sf(1.0, 1, 0)


# Shapiro-Wilk -------------------------------------------------------------------


@pytest.mark.parametrize("case", ORACLE["shapiro"], ids=lambda c: f"n{len(c['x'])}")
def test_shapiro_matches_oracle(case):
    r = stats.shapiro_wilk(case["x"])
    assert abs(r.statistic - case["W"]) < 1e-3
    assert abs(r.pvalue - case["p"]) < 1e-3


def test_shapiro_one_to_ten():
    r = stats.shapiro_wilk(np.arange(1, 11))
    ref = sps.shapiro(np.arange(1, 11))
    assert r.statistic == pytest.approx(0.970, abs=1e-3)
    assert r.statistic == pytest.approx(ref.statistic, abs=1e-6)
    assert r.pvalue == pytest.approx(ref.pvalue, abs=1e-5)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6), st.floats(0.01, 100), st.floats(-100, 100))
def test_shapiro_affine_invariance(seed, a, b):
    x = np.random.default_rng(seed).normal(size=15)
    assert abs(stats.shapiro_wilk(a * x + b).statistic - stats.shapiro_wilk(x).statistic) < 1e-10


def test_shapiro_outlier_lowers_p():
    x = np.random.default_rng(4).normal(size=25)
    assert stats.shapiro_wilk(np.append(x, 12.0)).pvalue < stats.shapiro_wilk(x).pvalue


def test_shapiro_errors():
    with pytest.raises(ParameterError):
        stats.shapiro_wilk([1.0, 2.0])
    with pytest.raises(DegenerateError):
        stats.shapiro_wilk([3.0] * 6)


# Levene / ANOVA ------------------------------------------------------------------


@pytest.mark.parametrize("case", ORACLE["levene"], ids=lambda c: f"k{len(c['groups'])}")
def test_levene_matches_oracle(case):
    r = stats.levene(case["groups"])
    assert abs(r.statistic - case["W"]) < 1e-3
    assert abs(r.pvalue - case["p"]) < 1e-3


def test_levene_examples():
    r = stats.levene([[0, 1, 3], [10, 11, 13]])
    assert r.statistic == pytest.approx(0, abs=1e-12) and r.pvalue == pytest.approx(1)
    g = np.random.default_rng(0).normal(size=12)
    assert stats.levene([g, g]).statistic == pytest.approx(0, abs=1e-12)
    h = np.random.default_rng(1).normal(size=12)
    assert stats.levene([g, h * 10]).pvalue < stats.levene([g, h]).pvalue
    with pytest.raises(DegenerateError):
        stats.levene([[1, 1, 1], [2, 2, 2]])


def test_anova_examples():
    r = stats.anova_oneway([[1, 2, 3], [1, 2, 3]])
    assert r.statistic == 0 and r.pvalue == 1
    r = stats.anova_oneway([[1, 2, 3], [3, 4, 5]])
    assert r.statistic == pytest.approx(6.0) and r.df == (1, 4)
    assert r.pvalue == pytest.approx(0.070, abs=0.002)
    assert stats.anova_oneway([[11, 12, 13], [13, 14, 15]]).statistic == pytest.approx(6.0)
    assert stats.anova_oneway([[1, 1], [2, 2]]).pvalue == 0.0


def test_anova_matches_scipy():
    rng = np.random.default_rng(5)
    groups = [rng.normal(m, 1, 8) for m in (0, 0.5, 1.2)]
    r = stats.anova_oneway(groups)
    ref = sps.f_oneway(*groups)
    assert r.statistic == pytest.approx(ref.statistic) and r.pvalue == pytest.approx(ref.pvalue)


# ranks / Friedman ------------------------------------------------------------------


def table(values, cols=None):
    values = np.asarray(values, dtype=float)
    cols = cols or [f"c{j}" for j in range(values.shape[1])]
    return stats.MetricTable([f"r{i}" for i in range(len(values))], cols, values)


def test_rank_examples():
    assert stats.average_ranks(table([[1, 2, 3], [1, 2, 3]])).ranks.tolist() == [1, 2, 3]
    assert stats.rank_row([5, 5, 9]).tolist() == [1.5, 1.5, 3]
    assert stats.rank_row([0.2, 0.9, 0.5]).tolist() == stats.rank_row(np.exp([0.2, 0.9, 0.5])).tolist()


@settings(max_examples=50, deadline=None)
@given(st.lists(st.lists(st.integers(0, 5), min_size=4, max_size=4), min_size=2, max_size=6))
def test_rank_rows_sum(rows):
    rt = stats.average_ranks(table(rows))
    np.testing.assert_allclose(rt.row_ranks.sum(axis=1), 4 * 5 / 2)


def test_friedman_examples():
    mono = table([[0.1, 0.2, 0.3], [0.4, 0.5, 0.6], [0.2, 0.3, 0.9], [0.5, 0.6, 0.7]])
    r = stats.friedman(mono)
    assert r.statistic == pytest.approx(8.0)
    assert r.pvalue == pytest.approx(0.018316, abs=1e-4)
    ties = stats.friedman(table([[0.5, 0.5, 0.5], [0.7, 0.7, 0.7]]))
    assert ties.statistic == 0 and ties.pvalue == 1


def test_friedman_matches_scipy_with_ties():
    rng = np.random.default_rng(2)
    vals = np.round(rng.random((8, 4)), 1)
    r = stats.friedman(table(vals))
    ref = sps.friedmanchisquare(*vals.T)
    assert r.statistic == pytest.approx(ref.statistic) and r.pvalue == pytest.approx(ref.pvalue)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6))
def test_friedman_rank_only_dependence(seed):
    rng = np.random.default_rng(seed)
    vals = rng.random((5, 4))
    transformed = np.array([np.exp(3 * row) + i for i, row in enumerate(vals)])
    a = stats.friedman(table(vals)).statistic
    assert stats.friedman(table(transformed)).statistic == pytest.approx(a)
    assert stats.friedman(table(vals[rng.permutation(5)])).statistic == pytest.approx(a)


def test_iman_davenport():
    vals = np.random.default_rng(0).random((6, 4))
    fr = stats.friedman(table(vals))
    idv = stats.iman_davenport(table(vals))
    assert idv.statistic == pytest.approx(5 * fr.statistic / (6 * 3 - fr.statistic))
    assert idv.df == (3, 15)


# post-hoc ---------------------------------------------------------------------------


@pytest.mark.parametrize("ranks,printed", [(RANKS_7, PRINTED_7), (RANKS_6, PRINTED_6)], ids=["k7", "k6"])
def test_holm_reproduces_printed_tables(ranks, printed):
    rt = stats.RankTable.from_average_ranks(ranks, N_DATASETS)
    entries = {e.comparison: e for e in stats.holm_posthoc(rt, "Data")}
    assert set(entries) == set(printed)
    for col, (z, p, adj) in printed.items():
        e = entries[col]
        assert abs(e.z - float(z)) <= 0.05, col
        assert matches_printed(e.p, p), (col, e.p, p)
        assert matches_printed(e.p_adjusted, adj), (col, e.p_adjusted, adj)


def test_holm_spot_values():
    rt = stats.RankTable.from_average_ranks(RANKS_7, N_DATASETS)
    entries = {e.comparison: e for e in stats.holm_posthoc(rt, "Data")}
    assert entries["Base"].z == pytest.approx(2.59, abs=0.005)
    assert entries["MixMatch"].z == pytest.approx(5.59, abs=0.005)
    assert stats.rank_z(rt, "Data", "Data") == (0.0, 1.0)
    with pytest.raises(ParameterError):
        stats.holm_posthoc(rt, "Nope")


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(1e-9, 1.0), min_size=1, max_size=10))
def test_holm_properties(ps):
    adj = stats.holm_adjust(ps)
    order = np.argsort(ps, kind="stable")
    assert np.all(np.diff(adj[order]) >= 0)
    assert np.all(adj >= np.asarray(ps) - 1e-15) and np.all(adj <= 1)
    assert np.all(stats.bonferroni_adjust(ps) >= adj - 1e-15)


def test_bonferroni_examples():
    assert stats.bonferroni_adjust([0.01] * 6)[0] == pytest.approx(0.06)
    assert stats.bonferroni_adjust([0.5] * 6)[0] == 1.0


def test_bonferroni_dunn_dominates_holm_on_ranks():
    rt = stats.RankTable.from_average_ranks(RANKS_7, N_DATASETS)
    holm = {e.comparison: e.p_adjusted for e in stats.holm_posthoc(rt, "Data")}
    for e in stats.bonferroni_dunn_posthoc(rt, "Data"):
        assert e.p_adjusted >= holm[e.comparison]
        assert e.significant == (e.p_adjusted < 0.05)


def test_bonferroni_dunn_on_means():
    rng = np.random.default_rng(3)
    t = table(np.column_stack([rng.normal(0.9, 0.02, 10), rng.normal(0.8, 0.02, 10), rng.normal(0.9, 0.02, 10)]),
              ["A", "B", "C"])
    entries = {e.comparison: e for e in stats.bonferroni_dunn_posthoc(t, "A")}
    assert entries["B"].significant and not entries["C"].significant


# Cohen's d --------------------------------------------------------------------------


def test_cohens_d():
    a = np.array([0.0, 1.0, 2.0])
    assert stats.cohens_d(a, a) == 0
    assert stats.cohens_d(a, a - 1) == pytest.approx(1.0)
    b = np.array([0.3, 0.1, 0.9, 0.4])
    assert stats.cohens_d(b, a) == pytest.approx(-stats.cohens_d(a, b))
    with pytest.raises(DegenerateError):
        stats.cohens_d([1, 1], [2, 2])


# MetricTable / compare ----------------------------------------------------------------


def test_metric_table_csv_roundtrip():
    t = table(np.random.default_rng(0).random((3, 4)).round(6), ["a", "b", "c", "d"])
    back = stats.MetricTable.from_csv(t.to_csv())
    assert back.rows == t.rows and back.columns == t.columns
    np.testing.assert_array_equal(back.values, t.values)
    with pytest.raises(DataError):
        stats.MetricTable(["r"], ["a"], [[np.nan]])


def test_compare_gaussian_columns_parametric():
    # four gate tests at alpha each pass jointly with probability 0.95**4 ~ 0.81
    parametric, accepted = 0, 0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        for seed in range(100):
            vals = np.random.default_rng(seed).normal(0.8, 0.05, (10, 3))
            rep = stats.compare(table(vals, ["A", "B", "C"]), "A")
            parametric += rep.branch == "parametric"
            accepted += rep.omnibus.pvalue > 0.05
    assert accepted >= 90
    assert parametric >= 70


def test_compare_heavy_tails_nonparametric():
    nonpar = 0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        for seed in range(50):
            vals = np.random.default_rng(seed).standard_cauchy((10, 3))
            nonpar += stats.compare(table(vals, ["A", "B", "C"]), "A").branch == "nonparametric"
    assert nonpar > 25


def test_compare_report_contents_and_purity():
    vals = np.column_stack([np.linspace(0.8, 0.9, 8), np.linspace(0.6, 0.75, 8) ** 2, np.full(8, 0.5) + np.arange(8) * 1e-3])
    t = table(vals, ["Data", "Plain", "Base"])
    r1 = stats.compare(t, "Data")
    r2 = stats.compare(t, "Data")
    assert r1.to_json() == r2.to_json()
    assert r1.alpha == 0.05
    assert [e.comparison for e in r1.posthoc] == ["Plain", "Base"]
    assert all(e.effect_size is not None and e.effect_size > 0 for e in r1.posthoc)
    md = r1.to_markdown()
    assert "Cohen's d" in md and r1.posthoc_method in md
    json.loads(r1.to_json())


def test_compare_degenerate_column_falls_back():
    vals = np.column_stack([np.full(6, 0.9), np.linspace(0.5, 0.7, 6), np.linspace(0.4, 0.8, 6)])
    with pytest.warns(RuntimeWarning):
        rep = stats.compare(table(vals, ["A", "B", "C"]), "A")
    assert rep.branch == "nonparametric" and rep.warnings


def test_compare_preconditions():
    with pytest.raises(DataError):
        stats.compare(table([[0.1, 0.2]]), "c0")
    with pytest.raises(ParameterError):
        stats.compare(table([[0.1, 0.2], [0.3, 0.5]]), "c0", alpha=1.5)
    with pytest.raises(ParameterError):
        stats.compare(table([[0.1, 0.2], [0.3, 0.5]]), "zz")
