"""Metrics, variable importance, a greedy baseline and experiment drivers."""
from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy import stats

from .data import RawTable, class_labels_of, encode_and_scale, encode_labels, repeated_split
from .model import Dataset, TrainedModel
from .trainer import TrainConfig, train, training_rates, warm_up


class UnsupportedDimensionality(ValueError):
    """Grid export needs exactly two encoded features."""


@dataclass
class Metrics:
    """Argmax-prediction metrics on one sample.

    ``recall[k]`` is the fraction of class ``k`` predicted as ``k`` and is
    ``nan`` when the class has no members.  ``tpr``/``tnr`` are filled for
    binary tasks once a positive class position is known.
    """

    accuracy: float
    recall: np.ndarray
    n_samples: int
    tpr: float | None = None
    tnr: float | None = None

    def as_dict(self) -> dict:
        return {"accuracy": self.accuracy, "recall": [_none_if_nan(r) for r in self.recall],
                "n_samples": self.n_samples, "tpr": _none_if_nan(self.tpr),
                "tnr": _none_if_nan(self.tnr)}


def _none_if_nan(v):
    if v is None:
        return None
    v = float(v)
    return None if math.isnan(v) else v


def metrics_from_predictions(pred, y, n_classes: int, positive: int | None = None) -> Metrics:
    pred = np.asarray(pred)
    y = np.asarray(y)
    if pred.shape != y.shape:
        raise ValueError("predictions and labels differ in length")
    if y.size == 0:
        raise ValueError("empty sample")
    hit = pred == y
    accuracy = float(np.count_nonzero(hit)) / y.size
    recall = np.full(n_classes, np.nan)
    for k in range(n_classes):
        members = y == k
        if members.any():
            recall[k] = np.count_nonzero(hit & members) / np.count_nonzero(members)
    out = Metrics(accuracy, recall, int(y.size))
    if n_classes == 2 and positive is not None:
        out.tpr = float(recall[positive])
        out.tnr = float(recall[1 - positive])
    return out


def evaluate(model: TrainedModel, data: Dataset, positive: int | None = None) -> Metrics:
    """Accuracy and per-class rates of ``model`` on ``data``.

    ``positive`` is the class position treated as positive for TPR/TNR.
    """
    if data.n_features != model.params.n_features:
        raise ValueError(f"model expects {model.params.n_features} features, "
                         f"data has {data.n_features}")
    if data.n_classes != model.n_classes:
        raise ValueError("model and data disagree on the number of classes")
    return metrics_from_predictions(model.predict(data.X), data.y, data.n_classes, positive)


def deterministic_predict(model: TrainedModel, X) -> np.ndarray:
    """Class positions under hard routing: left whenever the split argument is nonnegative."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    topo = model.topology
    u = X @ model.params.a / X.shape[1] - model.params.mu
    node = np.ones(X.shape[0], dtype=np.intp)
    for _ in range(topo.depth):
        go_left = u[np.arange(X.shape[0]), node - 1] >= 0
        node = np.where(go_left, 2 * node, 2 * node + 1)
    leaf = node - 2 ** topo.depth
    return np.argmax(model.assignment[:, leaf], axis=0)


# ---------------------------------------------------------------- importance

@dataclass
class ImportanceReport:
    features: list[str]
    sim: np.ndarray
    mim: np.ndarray
    sources: list[str]
    source_sim: dict[str, float]
    source_mim: dict[str, float]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["feature", "source", "SIM", "MIM"])
        for f, s, a, b in zip(self.features, self.sources, self.sim, self.mim):
            w.writerow([f, s, repr(float(a)), repr(float(b))])
        return buf.getvalue()


def importance(model) -> ImportanceReport:
    """Sum and maximum of ``|a_jt|`` over branch nodes for each feature.

    Dummy columns of a categorical feature are reported individually and
    aggregated by their maximum under the source feature name.
    """
    absa = np.abs(model.params.a)
    sim = absa.sum(axis=1)
    mim = absa.max(axis=1)
    p = absa.shape[0]
    if model.scaling is not None:
        features = model.scaling.feature_names
        sources = model.scaling.source_of_feature
    else:
        features = [f"x{j + 1}" for j in range(p)]
        sources = list(features)
    source_sim: dict[str, float] = {}
    source_mim: dict[str, float] = {}
    for s, a, b in zip(sources, sim, mim):
        source_sim[s] = max(source_sim.get(s, 0.0), float(a))
        source_mim[s] = max(source_mim.get(s, 0.0), float(b))
    return ImportanceReport(features, sim, mim, sources, source_sim, source_mim)


# ------------------------------------------------------------ greedy baseline

MIN_NODE_SIZE = 5
# gains closer than this count as ties
GAIN_TOL = 1e-12


def _gini(counts: np.ndarray) -> np.ndarray:
    n = counts.sum(axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        frac = counts / n[..., None]
    return np.where(n > 0, 1.0 - np.sum(frac * frac, axis=-1), 0.0)


class GreedyTree:
    """Axis-aligned tree grown by Gini decrease with midpoint thresholds.

    Ties between splits go to the lowest feature index, then the lowest
    threshold; majority votes tie to the lowest class position.
    """

    def __init__(self, max_depth: int, min_node_size: int = MIN_NODE_SIZE):
        if max_depth < 0:
            raise ValueError("max_depth must be >= 0")
        self.max_depth = max_depth
        self.min_node_size = min_node_size
        self.nodes: list[tuple] = []

    def fit(self, X, y, n_classes: int) -> "GreedyTree":
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=np.intp)
        self.n_classes = n_classes
        self.nodes = []
        self._grow(X, y, 0)
        return self

    def _grow(self, X, y, depth) -> int:
        idx = len(self.nodes)
        counts = np.bincount(y, minlength=self.n_classes)
        self.nodes.append(("leaf", int(np.argmax(counts))))
        if depth >= self.max_depth or y.size < self.min_node_size or np.count_nonzero(counts) <= 1:
            return idx
        split = self._best_split(X, y, counts)
        if split is None:
            return idx
        j, thr = split
        mask = X[:, j] <= thr
        left = self._grow(X[mask], y[mask], depth + 1)
        right = self._grow(X[~mask], y[~mask], depth + 1)
        self.nodes[idx] = ("split", j, thr, left, right)
        return idx

    def _best_split(self, X, y, counts):
        n = y.size
        parent = float(_gini(counts))
        best_gain, best = 0.0, None
        onehot = np.eye(self.n_classes)[y]
        for j in range(X.shape[1]):
            order = np.argsort(X[:, j], kind="stable")
            xs = X[order, j]
            cum = np.cumsum(onehot[order], axis=0)
            cut = np.flatnonzero(xs[1:] > xs[:-1])
            if cut.size == 0:
                continue
            left = cum[cut]
            right = counts - left
            nl = left.sum(axis=1)
            child = (nl * _gini(left) + (n - nl) * _gini(right)) / n
            gain = parent - child
            i = int(np.flatnonzero(gain >= gain.max() - GAIN_TOL)[0])
            if gain[i] > best_gain + GAIN_TOL:
                best_gain = float(gain[i])
                best = (j, 0.5 * (xs[cut[i]] + xs[cut[i] + 1]))
        return best

    def predict(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = np.empty(X.shape[0], dtype=np.intp)
        for i, x in enumerate(X):
            node = self.nodes[0]
            while node[0] == "split":
                node = self.nodes[node[3] if x[node[1]] <= node[2] else node[4]]
            out[i] = node[1]
        return out

    @property
    def n_leaves(self) -> int:
        return sum(1 for nd in self.nodes if nd[0] == "leaf")


@dataclass
class BaselineReport:
    tree: GreedyTree
    train: Metrics
    test: Metrics | None


def greedy_baseline(train_data: Dataset, test_data: Dataset | None, max_depth: int,
                    positive: int | None = None) -> BaselineReport:
    tree = GreedyTree(max_depth).fit(train_data.X, train_data.y, train_data.n_classes)
    K = train_data.n_classes
    tr = metrics_from_predictions(tree.predict(train_data.X), train_data.y, K, positive)
    te = None
    if test_data is not None:
        te = metrics_from_predictions(tree.predict(test_data.X), test_data.y, K, positive)
    return BaselineReport(tree, tr, te)


# ----------------------------------------------------------------- benchmark

def config_echo(config: TrainConfig) -> dict:
    d = asdict(config)
    if d["costs"] is not None:
        d["costs"] = np.asarray(d["costs"]).tolist()
    return d


@dataclass
class EvaluationReport:
    """Per-repetition results of the repeated split protocol."""

    test: list[Metrics]
    train: list[Metrics]
    timings: list[dict[str, float]]
    objectives: list[float]
    config: dict
    split_sizes: list[tuple[int, int]] = field(default_factory=list)
    models: list[TrainedModel] = field(default_factory=list)

    @property
    def accuracies(self) -> list[float]:
        return [m.accuracy for m in self.test]

    @property
    def mean_accuracy(self) -> float:
        return math.fsum(self.accuracies) / len(self.test)

    def mean_rate(self, which: str, split: str = "test") -> float:
        rows = self.test if split == "test" else self.train
        vals = [getattr(m, which) for m in rows]
        if any(v is None for v in vals):
            return math.nan
        return math.fsum(vals) / len(vals)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["repetition", "n_train", "n_test", "train_accuracy", "test_accuracy",
                    "objective", "seconds_scale", "seconds_optimize", "seconds_evaluate"])
        for r, (tr, te, tm, obj) in enumerate(zip(self.train, self.test, self.timings,
                                                  self.objectives)):
            n_tr, n_te = self.split_sizes[r] if self.split_sizes else ("", "")
            w.writerow([r, n_tr, n_te, repr(tr.accuracy), repr(te.accuracy), repr(obj),
                        f"{tm['scale']:.4f}", f"{tm['optimize']:.4f}", f"{tm['evaluate']:.4f}"])
        w.writerow(["mean", "", "", repr(math.fsum(m.accuracy for m in self.train)
                                         / len(self.train)),
                    repr(self.mean_accuracy), "", "", "", ""])
        return buf.getvalue()


def _positive_position(table: RawTable, class_labels: list, positive) -> int | None:
    if positive is None:
        return None
    if len(class_labels) != 2:
        raise ValueError("a positive class only applies to binary targets")
    probe = RawTable([], {}, table.target_name, [str(positive)])
    return int(encode_labels(probe, class_labels)[0])


def benchmark(table: RawTable, config: TrainConfig, repetitions: int = 10,
              train_fraction: float = 0.75, split_seed: int | None = None,
              positive=None, keep_models: bool = False) -> EvaluationReport:
    """Train and test on ``repetitions`` stratified random splits of ``table``.

    Every repetition trains with the same ``config``; the splits are drawn
    from ``split_seed`` (default ``config.seed``).  ``positive`` is a raw
    target value naming the positive class of a binary task.
    """
    labels = class_labels_of(table)
    pos = _positive_position(table, labels, positive)
    y_all = encode_labels(table, labels)
    seed = config.seed if split_seed is None else split_seed
    splits = repeated_split(y_all, train_fraction, repetitions, seed)
    report = EvaluationReport([], [], [], [], config_echo(config))
    for tr_idx, te_idx in splits:
        t0 = time.perf_counter()
        d_tr, d_te, spec = encode_and_scale(table.take(tr_idx), table.take(te_idx), labels)
        t1 = time.perf_counter()
        model = train(d_tr, config, labels, spec)
        t2 = time.perf_counter()
        report.train.append(evaluate(model, d_tr, pos))
        report.test.append(evaluate(model, d_te, pos))
        t3 = time.perf_counter()
        report.timings.append({"scale": t1 - t0, "optimize": t2 - t1, "evaluate": t3 - t2})
        report.objectives.append(model.objective_value)
        report.split_sizes.append((tr_idx.size, te_idx.size))
        if keep_models:
            report.models.append(model)
    return report


# -------------------------------------------------------------------- sweep

SWEEP_COLUMNS = ["rho_pos", "TPR_train", "TPR_test", "TNR_train", "TNR_test",
                 "CCR_train", "CCR_test"]


@dataclass
class LinearFit:
    slope: float
    intercept: float
    r_squared: float


@dataclass
class SweepReport:
    """Averages over repetitions, one row per imposed target (all rates in [0, 1]).

    ``expected_tpr_train`` holds the smooth (expected) training TPR the
    constraint acts on; the table columns are argmax rates.
    """

    rho: list[float]
    rows: list[dict[str, float]]
    per_repetition: list[list[dict[str, float]]]
    expected_tpr_train: list[float]
    unmet: list[int]
    fit_train: LinearFit | None
    fit_test: LinearFit | None

    def column(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.rows])

    def to_csv(self, percent: bool = True) -> str:
        scale = 100.0 if percent else 1.0
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(SWEEP_COLUMNS)
        for row in self.rows:
            w.writerow([f"{row[c] * scale:.6g}" for c in SWEEP_COLUMNS])
        return buf.getvalue()

    def fit_summary(self) -> str:
        lines = []
        for name, fit in (("TPR_train", self.fit_train), ("TPR_test", self.fit_test)):
            if fit is not None:
                lines.append(f"{name} = {fit.intercept:.4f} + {fit.slope:.4f} * rho_pos, "
                             f"R^2 = {fit.r_squared:.4f}")
        return "\n".join(lines)


def _fit(x, y) -> LinearFit | None:
    if len(x) < 3:
        return None
    res = stats.linregress(x, y)
    return LinearFit(float(res.slope), float(res.intercept), float(res.rvalue ** 2))


def rho_sweep(table: RawTable, config: TrainConfig, positive, rho_grid,
              repetitions: int = 10, train_fraction: float = 0.75,
              split_seed: int | None = None) -> SweepReport:
    """Constrained training over a grid of lower bounds on the positive-class rate.

    A target of 0 means unconstrained training.  Each repetition runs the
    continuation stages once per start and reuses them for every target,
    which gives the same result as training every grid point from scratch.
    The linear fits use the grid points with a positive target.
    """
    labels = class_labels_of(table)
    pos = _positive_position(table, labels, positive)
    if pos is None:
        raise ValueError("the sweep needs a positive class")
    rho_grid = [float(r) for r in rho_grid]
    if any(not 0.0 <= r <= 1.0 for r in rho_grid):
        raise ValueError("targets must lie in [0, 1]")
    y_all = encode_labels(table, labels)
    seed = config.seed if split_seed is None else split_seed
    splits = repeated_split(y_all, train_fraction, repetitions, seed)
    per_rep: list[list[dict[str, float]]] = []
    expected = np.zeros(len(rho_grid))
    unmet = [0] * len(rho_grid)
    base = replace(config, rho_targets=None)
    for tr_idx, te_idx in splits:
        d_tr, d_te, spec = encode_and_scale(table.take(tr_idx), table.take(te_idx), labels)
        warm = [warm_up(d_tr, base, s) for s in range(config.n_starts)]
        rows = []
        for g, rho in enumerate(rho_grid):
            cfg = replace(base, rho_targets={pos: rho}) if rho > 0 else base
            model = train(d_tr, cfg, labels, spec, warm_starts=warm)
            m_tr, m_te = evaluate(model, d_tr, pos), evaluate(model, d_te, pos)
            rows.append({"rho_pos": rho, "TPR_train": m_tr.tpr, "TPR_test": m_te.tpr,
                         "TNR_train": m_tr.tnr, "TNR_test": m_te.tnr,
                         "CCR_train": m_tr.accuracy, "CCR_test": m_te.accuracy})
            expected[g] += training_rates(model, d_tr)[pos]
            unmet[g] += int(model.constraints_unmet)
        per_rep.append(rows)
    n = len(per_rep)
    mean_rows = [{c: math.fsum(rep[g][c] for rep in per_rep) / n for c in SWEEP_COLUMNS}
                 for g in range(len(rho_grid))]
    fit_rows = [r for r in mean_rows if r["rho_pos"] > 0]
    x = [r["rho_pos"] for r in fit_rows]
    return SweepReport(rho_grid, mean_rows, per_rep, (expected / n).tolist(), unmet,
                       _fit(x, [r["TPR_train"] for r in fit_rows]),
                       _fit(x, [r["TPR_test"] for r in fit_rows]))


# ------------------------------------------------------------------ heatmap

def heatmap_grid(model: TrainedModel, bounds=((0.0, 1.0), (0.0, 1.0)), resolution: int = 200,
                 class_position: int = 0) -> np.ndarray:
    """Membership probability of one class on a regular grid of the encoded plane.

    Returns an array with columns ``x1, x2, probability``; ``x1`` varies
    fastest.
    """
    if model.params.n_features != 2:
        raise UnsupportedDimensionality(
            f"heatmap needs 2 encoded features, model has {model.params.n_features}")
    if resolution < 2:
        raise ValueError("resolution must be >= 2")
    (lo1, hi1), (lo2, hi2) = bounds
    g1 = np.linspace(lo1, hi1, resolution)
    g2 = np.linspace(lo2, hi2, resolution)
    x1, x2 = np.meshgrid(g1, g2)
    pts = np.column_stack([x1.ravel(), x2.ravel()])
    prob = model.predict_proba(pts)[:, class_position]
    return np.column_stack([pts, prob])


def grid_to_csv(grid: np.ndarray) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["x1", "x2", "probability"])
    for row in grid:
        w.writerow([repr(float(v)) for v in row])
    return buf.getvalue()
