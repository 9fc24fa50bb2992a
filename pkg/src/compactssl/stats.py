"""
Model-comparison statistics.

F1 metrics, the normality / homoscedasticity gates (Shapiro-Wilk, Levene),
the omnibus tests (one-way ANOVA, Friedman with the Iman-Davenport
variant), the control-versus-all post-hoc procedures (Bonferroni-Dunn,
Holm), Cohen's d, and :func:`compare`, which chains them into a single
decision.

References
----------
- Royston, P. (1995) "Remark AS R94: A remark on algorithm AS 181: the
  W-test for normality". Applied Statistics 44(4):547-551.
- Demsar, J. (2006) "Statistical comparisons of classifiers over multiple
  data sets". JMLR 7:1-30.
- Garcia, S., Fernandez, A., Luengo, J., Herrera, F. (2010) "Advanced
  nonparametric tests for multiple comparisons in the design of experiments
  in computational intelligence and data mining". Inf. Sci. 180:2044-2064.
"""

from __future__ import annotations

import csv
import io
import json
import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import special

from .errors import DataError, DegenerateError, ParameterError

DEFAULT_ALPHA = 0.05


# ----------------------------------------------------------------------------
# Classification metrics
# ----------------------------------------------------------------------------


def _check_pair(truth, preds):
    truth = np.asarray(truth)
    preds = np.asarray(preds)
    if truth.shape != preds.shape or truth.ndim != 1:
        raise DataError("truth and predictions must be 1-d and of equal length")
    if truth.size == 0:
        raise DataError("cannot score an empty prediction set")
    return truth, preds


def confusion_matrix(truth, preds, labels=None):
    """Counts ``C[i, j]`` of items with true label ``labels[i]`` predicted as ``labels[j]``."""
    truth, preds = _check_pair(truth, preds)
    if labels is None:
        labels = sorted(set(truth.tolist()) | set(preds.tolist()))
    index = {lab: i for i, lab in enumerate(labels)}
    cm = np.zeros((len(labels), len(labels)), dtype=np.int64)
    for t, p in zip(truth.tolist(), preds.tolist()):
        if t not in index or p not in index:
            raise DataError(f"label {t if t not in index else p!r} not in the class set")
        cm[index[t], index[p]] += 1
    return cm


def _f1_from_counts(tp, fp, fn):
    # F1 = 2PR/(P+R) == 2TP/(2TP+FP+FN); defined as 0 when P+R = 0
    denom = 2 * tp + fp + fn
    if tp == 0:
        return 0.0
    return 2.0 * tp / denom


def per_class_f1(cm):
    tp = np.diag(cm)
    fp = cm.sum(axis=0) - tp
    fn = cm.sum(axis=1) - tp
    return np.array([_f1_from_counts(a, b, c) for a, b, c in zip(tp, fp, fn)])


def binary_f1(truth, preds, positive):
    truth, preds = _check_pair(truth, preds)
    tp = int(np.sum((preds == positive) & (truth == positive)))
    fp = int(np.sum((preds == positive) & (truth != positive)))
    fn = int(np.sum((preds != positive) & (truth == positive)))
    return _f1_from_counts(tp, fp, fn)


def macro_f1(truth, preds, labels=None):
    """Unweighted mean of per-class F1 over ``labels`` (default: all labels seen)."""
    return float(np.mean(per_class_f1(confusion_matrix(truth, preds, labels))))


# ----------------------------------------------------------------------------
# Distribution tails
# ----------------------------------------------------------------------------


def normal_cdf(x):
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


def normal_sf(x):
    return 0.5 * math.erfc(x / math.sqrt(2.0))


def chi2_sf(x, df):
    """Upper tail of the chi-square distribution (regularized upper incomplete gamma)."""
    if df < 1:
        raise ParameterError("df must be >= 1")
    if x <= 0:
        return 1.0
    return float(special.gammaincc(df / 2.0, x / 2.0))


def f_sf(x, d1, d2):
    """Upper tail of the F distribution (regularized incomplete beta)."""
    if d1 < 1 or d2 < 1:
        raise ParameterError("degrees of freedom must be >= 1")
    if x <= 0:
        return 1.0
    if math.isinf(x):
        return 0.0
    return float(special.betainc(d2 / 2.0, d1 / 2.0, d2 / (d2 + d1 * x)))


# ----------------------------------------------------------------------------
# Result types
# ----------------------------------------------------------------------------


@dataclass
class TestResult:
    name: str
    statistic: float
    pvalue: float
    df: tuple = ()

    __test__ = False  # not a pytest class

    def __post_init__(self):
        self.pvalue = float(min(1.0, max(0.0, self.pvalue)))
        self.statistic = float(self.statistic)
        self.df = tuple(self.df)


@dataclass
class MetricTable:
    """Rows are blocks (datasets), columns are treatments (methods or networks)."""

    rows: list
    columns: list
    values: np.ndarray

    def __post_init__(self):
        self.rows = [str(r) for r in self.rows]
        self.columns = [str(c) for c in self.columns]
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (len(self.rows), len(self.columns)):
            raise DataError(f"value matrix {self.values.shape} does not match labels")
        if not np.all(np.isfinite(self.values)):
            raise DataError("metric table has missing or non-finite cells")

    @property
    def N(self):
        return len(self.rows)

    @property
    def k(self):
        return len(self.columns)

    def column(self, name):
        try:
            return self.values[:, self.columns.index(name)]
        except ValueError:
            raise ParameterError(f"unknown column {name!r}") from None

    def to_csv(self, decimals=6):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["dataset"] + self.columns)
        for r, row in zip(self.rows, self.values):
            w.writerow([r] + [f"{v:.{decimals}f}" for v in row])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text):
        reader = list(csv.reader(io.StringIO(text)))
        if len(reader) < 2:
            raise DataError("metric table CSV needs a header and at least one row")
        header, body = reader[0], [r for r in reader[1:] if r]
        try:
            values = [[float(v) for v in r[1:]] for r in body]
        except ValueError as exc:
            raise DataError(f"non-numeric cell in metric table: {exc}") from None
        if any(len(r) != len(header) for r in body):
            raise DataError("ragged metric table CSV")
        return cls([r[0] for r in body], header[1:], np.array(values))


@dataclass
class RankTable:
    columns: list
    ranks: np.ndarray
    N: int
    higher_is_better: bool = True
    row_ranks: np.ndarray | None = field(default=None, repr=False)

    @property
    def k(self):
        return len(self.columns)

    def rank(self, name):
        try:
            return float(self.ranks[self.columns.index(name)])
        except ValueError:
            raise ParameterError(f"unknown column {name!r}") from None

    @classmethod
    def from_average_ranks(cls, ranks, N, higher_is_better=True):
        """Build from precomputed average ranks (``{column: rank}``)."""
        return cls(list(ranks), np.array(list(ranks.values()), dtype=np.float64), int(N), higher_is_better)


@dataclass
class PostHocEntry:
    comparison: str
    z: float
    p: float
    p_adjusted: float
    effect_size: float | None
    significant: bool


# ----------------------------------------------------------------------------
# Normality / variance / omnibus tests
# ----------------------------------------------------------------------------

_SW_C1 = (0.0, 0.221157, -0.147981, -2.071190, 4.434685, -2.706056)
_SW_C2 = (0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633)
_SW_C3 = (0.5440, -0.39978, 0.025054, -6.714e-4)
_SW_C4 = (1.3822, -0.77857, 0.062767, -0.0020322)
_SW_C5 = (-1.5861, -0.31082, -0.083751, 0.0038915)
_SW_C6 = (-0.4803, -0.082676, 0.0030302)
_SW_G = (-2.273, 0.459)


def _poly(coef, x):
    return sum(c * x**i for i, c in enumerate(coef))


def _sw_coefficients(n):
    """Antisymmetric weights ``a`` (ascending order) of the W statistic."""
    if n == 3:
        a = math.sqrt(0.5)
        return np.array([-a, 0.0, a])
    i = np.arange(1, n + 1)
    m = special.ndtri((i - 0.375) / (n + 0.25))
    mm = float(m @ m)
    u = 1.0 / math.sqrt(n)
    a = np.zeros(n)
    an = m[-1] / math.sqrt(mm) + _poly(_SW_C1, u)
    if n > 5:
        an1 = m[-2] / math.sqrt(mm) + _poly(_SW_C2, u)
        phi = (mm - 2 * m[-1] ** 2 - 2 * m[-2] ** 2) / (1 - 2 * an**2 - 2 * an1**2)
        a[2:-2] = m[2:-2] / math.sqrt(phi)
        a[-1], a[-2], a[0], a[1] = an, an1, -an, -an1
    else:
        phi = (mm - 2 * m[-1] ** 2) / (1 - 2 * an**2)
        a[1:-1] = m[1:-1] / math.sqrt(phi)
        a[-1], a[0] = an, -an
    return a


def shapiro_wilk(sample):
    """Shapiro-Wilk W and its p-value (Royston's approximation). Null: normality."""
    x = np.sort(np.asarray(sample, dtype=np.float64))
    n = x.size
    if not 3 <= n <= 5000:
        raise ParameterError(f"Shapiro-Wilk needs 3 <= n <= 5000, got {n}")
    if x[-1] - x[0] <= 0:
        raise DegenerateError("Shapiro-Wilk undefined for a constant sample")
    # centre and scale first so that W is exactly location/scale invariant
    x = (x - x.mean()) / (x[-1] - x[0])
    a = _sw_coefficients(n)
    w = float((a @ x) ** 2 / (x @ x))
    w = min(w, 1.0)
    if n == 3:
        p = (6.0 / math.pi) * (math.asin(math.sqrt(w)) - math.pi / 3.0)
        return TestResult("shapiro-wilk", w, max(p, 0.0))
    y = math.log1p(-w) if w < 1 else -math.inf
    if n <= 11:
        gamma = _poly(_SW_G, n)
        if y >= gamma:
            return TestResult("shapiro-wilk", w, 1e-99)
        y = -math.log(gamma - y)
        mean = _poly(_SW_C3, n)
        sd = math.exp(_poly(_SW_C4, n))
    else:
        ln = math.log(n)
        mean = _poly(_SW_C5, ln)
        sd = math.exp(_poly(_SW_C6, ln))
    if math.isinf(y):
        return TestResult("shapiro-wilk", w, 1.0)
    return TestResult("shapiro-wilk", w, normal_sf((y - mean) / sd))


def _groups(groups):
    groups = [np.asarray(g, dtype=np.float64) for g in groups]
    if len(groups) < 2:
        raise ParameterError("need at least two groups")
    if any(g.ndim != 1 or g.size < 2 for g in groups):
        raise ParameterError("each group needs at least two observations")
    return groups


def levene(groups):
    """Levene's test with mean-centred absolute deviations. Null: equal variances."""
    groups = _groups(groups)
    k = len(groups)
    z = [np.abs(g - g.mean()) for g in groups]
    n_i = np.array([g.size for g in groups])
    n = n_i.sum()
    zi = np.array([d.mean() for d in z])
    zbar = np.concatenate(z).mean()
    within = sum(float(((d - m) ** 2).sum()) for d, m in zip(z, zi))
    between = float((n_i * (zi - zbar) ** 2).sum())
    if within == 0:
        if between == 0:
            raise DegenerateError("Levene undefined: all absolute deviations are equal")
        return TestResult("levene", math.inf, 0.0, (k - 1, n - k))
    w = (n - k) / (k - 1) * between / within
    return TestResult("levene", w, f_sf(w, k - 1, n - k), (k - 1, n - k))


def anova_oneway(groups):
    """One-way between-groups ANOVA F test."""
    groups = _groups(groups)
    k = len(groups)
    n_i = np.array([g.size for g in groups])
    n = n_i.sum()
    means = np.array([g.mean() for g in groups])
    grand = np.concatenate(groups).mean()
    ss_between = float((n_i * (means - grand) ** 2).sum())
    ss_within = sum(float(((g - m) ** 2).sum()) for g, m in zip(groups, means))
    df = (k - 1, n - k)
    if ss_between == 0 or np.ptp(means) == 0:
        return TestResult("anova", 0.0, 1.0, df)
    if ss_within == 0:
        return TestResult("anova", math.inf, 0.0, df)
    f = (ss_between / df[0]) / (ss_within / df[1])
    return TestResult("anova", f, f_sf(f, *df), df)


def rank_row(values, higher_is_better=True):
    """Ranks 1..k within one block; the best value gets rank k; ties share mean ranks."""
    v = np.asarray(values, dtype=np.float64)
    if not higher_is_better:
        v = -v
    order = np.argsort(v, kind="stable")
    ranks = np.empty(v.size)
    sv = v[order]
    i = 0
    while i < v.size:
        j = i
        while j + 1 < v.size and sv[j + 1] == sv[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def average_ranks(table, higher_is_better=True):
    rr = np.array([rank_row(row, higher_is_better) for row in table.values])
    return RankTable(list(table.columns), rr.mean(axis=0), table.N, higher_is_better, rr)


def _tie_correction(row_ranks):
    k = row_ranks.shape[1]
    total = 0.0
    for row in row_ranks:
        _, counts = np.unique(row, return_counts=True)
        total += float((counts**3 - counts).sum())
    return 1.0 - total / (row_ranks.shape[0] * (k**3 - k))


def friedman(table, higher_is_better=True):
    """Friedman chi-square over the table's rows, with tie correction."""
    if table.N < 2:
        raise ParameterError("Friedman needs at least two blocks")
    if table.k < 2:
        raise ParameterError("Friedman needs at least two treatments")
    rt = average_ranks(table, higher_is_better)
    n, k = table.N, table.k
    c = _tie_correction(rt.row_ranks)
    if c <= 0:
        return TestResult("friedman", 0.0, 1.0, (k - 1,))
    chi2 = 12.0 * n / (k * (k + 1)) * float(((rt.ranks - (k + 1) / 2.0) ** 2).sum()) / c
    return TestResult("friedman", chi2, chi2_sf(chi2, k - 1), (k - 1,))


def iman_davenport(table, higher_is_better=True):
    """Iman-Davenport F correction of the Friedman statistic."""
    fr = friedman(table, higher_is_better)
    n, k = table.N, table.k
    df = (k - 1, (k - 1) * (n - 1))
    denom = n * (k - 1) - fr.statistic
    if denom <= 0:
        return TestResult("iman-davenport", math.inf, 0.0, df)
    ff = (n - 1) * fr.statistic / denom
    return TestResult("iman-davenport", ff, f_sf(ff, *df), df)


# ----------------------------------------------------------------------------
# Post-hoc procedures
# ----------------------------------------------------------------------------


def rank_z(ranks, a, b):
    """z statistic and two-sided p comparing average ranks of columns ``a`` and ``b``."""
    se = math.sqrt(ranks.k * (ranks.k + 1) / (6.0 * ranks.N))
    z = (ranks.rank(a) - ranks.rank(b)) / se
    return z, min(1.0, 2.0 * normal_sf(abs(z)))


def holm_adjust(pvalues):
    """Holm step-down adjusted p-values, returned in input order."""
    p = np.asarray(pvalues, dtype=np.float64)
    m = p.size
    order = np.argsort(p, kind="stable")
    adj = np.empty(m)
    running = 0.0
    for j, idx in enumerate(order):
        running = max(running, min(1.0, (m - j) * p[idx]))
        adj[idx] = running
    return adj


def bonferroni_adjust(pvalues):
    p = np.asarray(pvalues, dtype=np.float64)
    return np.minimum(1.0, p.size * p)


def _entries(labels, zs, ps, adj, alpha, effects):
    return [
        PostHocEntry(lab, float(z), float(p), float(a), None if effects is None else effects.get(lab), bool(a < alpha))
        for lab, z, p, a in zip(labels, zs, ps, adj)
    ]


def holm_posthoc(ranks, control, alpha=DEFAULT_ALPHA, effects=None):
    """Control-versus-all comparisons on Friedman average ranks with Holm adjustment.

    ``effects`` optionally maps column names to an effect size stored on
    each entry. Entries keep the column order of ``ranks``.
    """
    ranks.rank(control)
    others = [c for c in ranks.columns if c != control]
    zp = [rank_z(ranks, control, c) for c in others]
    ps = [p for _, p in zp]
    return _entries(others, [z for z, _ in zp], ps, holm_adjust(ps), alpha, effects)


def _means_t(table, control):
    """Pairwise t statistics of column means against ``control`` using the ANOVA pooled MSE."""
    groups = [table.values[:, j] for j in range(table.k)]
    n_i = np.array([g.size for g in groups])
    dfw = int(n_i.sum() - table.k)
    mse = sum(float(((g - g.mean()) ** 2).sum()) for g in groups) / dfw
    c = table.columns.index(control)
    out = []
    for j, col in enumerate(table.columns):
        if j == c:
            continue
        diff = groups[c].mean() - groups[j].mean()
        se = math.sqrt(mse * (1.0 / n_i[c] + 1.0 / n_i[j]))
        if se == 0:
            t, p = (0.0, 1.0) if diff == 0 else (math.copysign(math.inf, diff), 0.0)
        else:
            t = diff / se
            p = f_sf(t * t, 1, dfw)
        out.append((col, t, p))
    return out


def bonferroni_dunn_posthoc(source, control, alpha=DEFAULT_ALPHA, effects=None):
    """Control-versus-all comparisons with a uniform ``(k-1)`` Bonferroni correction.

    ``source`` is either a :class:`RankTable` (z on average ranks, as after a
    Friedman test) or a :class:`MetricTable` (t on column means with the
    pooled within-group variance, as after a one-way ANOVA).
    """
    if isinstance(source, RankTable):
        source.rank(control)
        others = [c for c in source.columns if c != control]
        zp = [rank_z(source, control, c) for c in others]
        rows = [(c, z, p) for c, (z, p) in zip(others, zp)]
    else:
        source.column(control)
        rows = _means_t(source, control)
    ps = [p for _, _, p in rows]
    return _entries([c for c, _, _ in rows], [z for _, z, _ in rows], ps, bonferroni_adjust(ps), alpha, effects)


def cohens_d(a, b):
    """Standardized mean difference with pooled standard deviation; positive when ``a`` > ``b``."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size < 2 or b.size < 2:
        raise ParameterError("Cohen's d needs at least two observations per sample")
    pooled = ((a.size - 1) * a.var(ddof=1) + (b.size - 1) * b.var(ddof=1)) / (a.size + b.size - 2)
    diff = a.mean() - b.mean()
    if pooled == 0:
        if diff == 0:
            return 0.0
        raise DegenerateError("Cohen's d undefined: zero pooled variance")
    return float(diff / math.sqrt(pooled))


# ----------------------------------------------------------------------------
# Decision pipeline
# ----------------------------------------------------------------------------


@dataclass
class ComparisonReport:
    control: str
    alpha: float
    branch: str
    N: int
    k: int
    columns: list
    means: list
    stds: list
    normality: dict
    levene: TestResult | None
    omnibus: TestResult
    iman_davenport: TestResult | None
    ranks: list
    posthoc: list
    posthoc_method: str
    warnings: list = field(default_factory=list)
    caption: str = ""

    @property
    def omnibus_rejected(self):
        return self.omnibus.pvalue < self.alpha

    def to_dict(self):
        d = asdict(self)
        return _jsonable(d)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_markdown(self):
        lines = []
        if self.caption:
            lines += [f"**{self.caption}**", ""]
        lines += [
            f"Branch: {self.branch} ({self.omnibus.name}); N={self.N} blocks, k={self.k} treatments, alpha={self.alpha:g}.",
            "",
            "| Column | Mean(std) | Average rank |",
            "|---|---|---|",
        ]
        for c, m, s, r in zip(self.columns, self.means, self.stds, self.ranks):
            lines.append(f"| {c} | {_fmt_mean_std(m, s)} | {r:.2f} |")
        lines += ["", "| Test | Statistic | df | p value |", "|---|---|---|---|"]
        tests = [t for t in self.normality.values()] if self.normality else []
        names = list(self.normality) if self.normality else []
        for name, t in zip(names, tests):
            lines.append(f"| Shapiro-Wilk ({name}) | {t.statistic:.4f} | - | {_fmt_p(t.pvalue)} |")
        for t in (self.levene, self.omnibus, self.iman_davenport):
            if t is not None:
                df = ", ".join(str(int(v)) for v in t.df) or "-"
                lines.append(f"| {t.name} | {t.statistic:.4f} | {df} | {_fmt_p(t.pvalue)} |")
        lines += [
            "",
            f"Post-hoc: {self.posthoc_method}, control = {self.control}.",
            "",
            "| Comparison | Z value | p value | adjusted p value | Cohen's d | Significant |",
            "|---|---|---|---|---|---|",
        ]
        for e in self.posthoc:
            d = "-" if e.effect_size is None else f"{e.effect_size:.2g}"
            sig = "yes" if e.significant else "no"
            lines.append(f"| {e.comparison} | {e.z:.1f} | {_fmt_p(e.p)} | {_fmt_p(e.p_adjusted)} | {d} | {sig} |")
        for w in self.warnings:
            lines.append(f"\n> warning: {w}")
        return "\n".join(lines) + "\n"


def _fmt_p(p):
    if p == 0:
        return "0"
    if p >= 0.01:
        return f"{p:.2g}"
    mant, exp = f"{p:.1e}".split("e")
    return f"{mant}e{int(exp)}"


def _fmt_mean_std(mean, std, scale=100.0):
    return f"{mean * scale:.1f}({std * scale:.1f})"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def compare(table, control, alpha=DEFAULT_ALPHA, higher_is_better=True, caption=""):
    """Choose parametric or nonparametric testing and run the matching post-hoc.

    Parametric (ANOVA + Bonferroni-Dunn) only when every column passes
    Shapiro-Wilk at ``alpha`` and Levene does not reject equal variances;
    otherwise Friedman + Holm. Cohen's d of the control against each
    column is attached to every post-hoc entry.
    """
    if not 0 < alpha < 1:
        raise ParameterError("alpha must lie in (0, 1)")
    if table.N < 2 or table.k < 2:
        raise DataError(f"comparison needs N >= 2 and k >= 2, got N={table.N}, k={table.k}")
    table.column(control)
    notes = []
    normality = {}
    parametric = True
    for j, col in enumerate(table.columns):
        try:
            normality[col] = shapiro_wilk(table.values[:, j])
            if normality[col].pvalue < alpha:
                parametric = False
        except (DegenerateError, ParameterError) as exc:
            notes.append(f"normality check failed for {col}: {exc}")
            parametric = False
    lev = None
    try:
        lev = levene([table.values[:, j] for j in range(table.k)])
        if lev.pvalue < alpha:
            parametric = False
    except (DegenerateError, ParameterError) as exc:
        notes.append(f"Levene test failed: {exc}")
        parametric = False
    for msg in notes:
        warnings.warn(msg, RuntimeWarning, stacklevel=2)

    effects = {}
    ctrl = table.column(control)
    for col in table.columns:
        if col == control:
            continue
        try:
            effects[col] = cohens_d(ctrl, table.column(col))
        except DegenerateError:
            effects[col] = math.inf if ctrl.mean() != table.column(col).mean() else 0.0
    ranks = average_ranks(table, higher_is_better)
    if parametric:
        omnibus = anova_oneway([table.values[:, j] for j in range(table.k)])
        posthoc = bonferroni_dunn_posthoc(table, control, alpha, effects)
        idav = None
        method = "Bonferroni-Dunn"
    else:
        omnibus = friedman(table, higher_is_better)
        idav = iman_davenport(table, higher_is_better)
        posthoc = holm_posthoc(ranks, control, alpha, effects)
        method = "Holm"
    return ComparisonReport(
        control=control,
        alpha=alpha,
        branch="parametric" if parametric else "nonparametric",
        N=table.N,
        k=table.k,
        columns=list(table.columns),
        means=[float(v) for v in table.values.mean(axis=0)],
        stds=[float(v) for v in table.values.std(axis=0, ddof=1)],
        normality=normality,
        levene=lev,
        omnibus=omnibus,
        iman_davenport=idav,
        ranks=[float(r) for r in ranks.ranks],
        posthoc=posthoc,
        posthoc_method=method,
        warnings=notes,
        caption=caption,
    )
