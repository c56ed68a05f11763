"""Built-in downstream models and the train-on-real vs train-on-synthetic harness."""
from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import rankdata

from .errors import InputError, SingularInput, SingularMatrix, TabGanError
from .metrics import MISSING_LABEL, MetricSpace
from .schema import Dataset, Task

TREE_MAX_DEPTH = 28
RIDGE_ALPHA = 1.0


# --------------------------------------------------------------- logistic regression

@dataclass
class LogisticModel:
    weights: np.ndarray
    bias: np.ndarray

    def predict_proba(self, X) -> np.ndarray:
        z = np.asarray(X, dtype=np.float64) @ self.weights + self.bias
        z -= z.max(axis=1, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=1, keepdims=True)


def fit_logreg(X, y, n_classes: int | None = None, *, epochs: int = 500, lr: float = 0.5,
               l2: float = 1e-4, seed: int = 0) -> LogisticModel:
    """Multinomial logistic regression by full-batch gradient descent on cross-entropy.

    Weights start at zero and the bias at the log class priors, so the fit is
    deterministic; ``seed`` is accepted for interface symmetry.
    """
    X = np.asarray(X, dtype=np.float64).reshape(len(y), -1)
    y = np.asarray(y, dtype=np.int64)
    if not np.all(np.isfinite(X)):
        raise SingularInput("features must be finite")
    k = int(n_classes if n_classes is not None else y.max() + 1)
    n, d = X.shape
    onehot = np.zeros((n, k))
    onehot[np.arange(n), y] = 1.0
    prior = (onehot.sum(axis=0) + 1e-12) / (n + k * 1e-12)
    model = LogisticModel(np.zeros((d, k)), np.log(prior)[None, :])
    if d == 0:
        return model
    for _ in range(epochs):
        err = model.predict_proba(X) - onehot
        model.weights -= lr * (X.T @ err / n + l2 * model.weights)
        model.bias -= lr * err.mean(axis=0, keepdims=True)
    return model


def predict_proba(model, X) -> np.ndarray:
    return model.predict_proba(X)


# --------------------------------------------------------------- decision tree

@dataclass
class TreeModel:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray  # class distribution per node

    def predict_proba(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        node = np.zeros(len(X), dtype=np.int64)
        active = self.left[node] >= 0
        while active.any():
            idx = np.flatnonzero(active)
            cur = node[idx]
            go_left = X[idx, self.feature[cur]] <= self.threshold[cur]
            node[idx] = np.where(go_left, self.left[cur], self.right[cur])
            active = self.left[node] >= 0
        return self.value[node]


def _best_split(X: np.ndarray, onehot: np.ndarray):
    n = len(X)
    best = (np.inf, -1, 0.0)
    total = onehot.sum(axis=0)
    for f in range(X.shape[1]):
        order = np.argsort(X[:, f], kind="stable")
        xs = X[order, f]
        boundary = np.flatnonzero(xs[:-1] < xs[1:])
        if boundary.size == 0:
            continue
        left = np.cumsum(onehot[order], axis=0)[boundary]
        nl = (boundary + 1).astype(np.float64)
        nr = n - nl
        right = total - left
        gini_l = 1.0 - np.sum((left / nl[:, None]) ** 2, axis=1)
        gini_r = 1.0 - np.sum((right / nr[:, None]) ** 2, axis=1)
        score = (nl * gini_l + nr * gini_r) / n
        i = int(np.argmin(score))  # first minimum = lowest threshold
        if score[i] < best[0] - 1e-15:
            best = (float(score[i]), f, float(xs[boundary[i]]))
    return best


def fit_tree(X, y, max_depth: int = TREE_MAX_DEPTH, n_classes: int | None = None) -> TreeModel:
    """CART classifier with Gini impurity and exhaustive thresholds (x <= value goes left)."""
    X = np.asarray(X, dtype=np.float64).reshape(len(y), -1)
    y = np.asarray(y, dtype=np.int64)
    k = int(n_classes if n_classes is not None else y.max() + 1)
    onehot = np.zeros((len(y), k))
    onehot[np.arange(len(y)), y] = 1.0
    feature, threshold, left, right, value = [], [], [], [], []

    def new_node(idx):
        counts = onehot[idx].sum(axis=0)
        feature.append(0)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(counts / max(counts.sum(), 1.0))
        return len(value) - 1

    stack = [(new_node(np.arange(len(y))), np.arange(len(y)), 0)]
    while stack:
        node, idx, depth = stack.pop()
        counts = onehot[idx].sum(axis=0)
        if depth >= max_depth or len(idx) < 2 or np.count_nonzero(counts) <= 1:
            continue
        parent_gini = 1.0 - np.sum((counts / len(idx)) ** 2)
        score, f, thr = _best_split(X[idx], onehot[idx])
        # zero-gain splits are allowed (XOR needs one); depth bounds the recursion
        if f < 0 or score > parent_gini + 1e-15:
            continue
        go_left = X[idx, f] <= thr
        li, ri = idx[go_left], idx[~go_left]
        feature[node], threshold[node] = f, thr
        left[node], right[node] = new_node(li), new_node(ri)
        stack.append((right[node], ri, depth + 1))
        stack.append((left[node], li, depth + 1))
    return TreeModel(np.array(feature), np.array(threshold), np.array(left), np.array(right),
                     np.array(value))


# --------------------------------------------------------------- linear regression

@dataclass
class LinearModel:
    coef: np.ndarray
    intercept: float

    def predict(self, X) -> np.ndarray:
        return np.asarray(X, dtype=np.float64) @ self.coef + self.intercept


def fit_linreg(X, y, alpha: float = 0.0) -> LinearModel:
    """Least squares via the normal equations; ``alpha`` > 0 adds an unpenalized-intercept ridge term."""
    y = np.asarray(y, dtype=np.float64)
    X = np.asarray(X, dtype=np.float64).reshape(len(y), -1)
    A = np.hstack([X, np.ones((len(y), 1))])
    gram = A.T @ A
    if alpha > 0:
        gram[:-1, :-1] += alpha * np.eye(X.shape[1])
    elif np.linalg.matrix_rank(A) < A.shape[1]:
        raise SingularMatrix("design matrix is rank deficient; use a ridge term")
    beta = np.linalg.solve(gram, A.T @ y)
    return LinearModel(beta[:-1], float(beta[-1]))


# --------------------------------------------------------------- scores

def roc_auc(y_true_binary, scores) -> float | None:
    y = np.asarray(y_true_binary, dtype=bool)
    n_pos, n_neg = int(y.sum()), int((~y).sum())
    if n_pos == 0 or n_neg == 0:
        return None
    ranks = rankdata(np.asarray(scores, dtype=np.float64))
    return float((ranks[y].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def classification_scores(y_true, proba) -> tuple[float, float, float | None]:
    """(accuracy, macro F1, AUC); AUC is one-vs-rest macro for more than two classes."""
    y = np.asarray(y_true, dtype=np.int64)
    proba = np.asarray(proba, dtype=np.float64)
    pred = np.argmax(proba, axis=1)
    accuracy = float(np.mean(pred == y))
    f1s = []
    for c in np.union1d(y, pred):
        tp = np.sum((pred == c) & (y == c))
        fp = np.sum((pred == c) & (y != c))
        fn = np.sum((pred != c) & (y == c))
        f1s.append(0.0 if tp == 0 else 2.0 * tp / (2.0 * tp + fp + fn))
    f1 = float(np.mean(f1s))
    if proba.shape[1] == 2:
        auc = roc_auc(y == 1, proba[:, 1])
    else:
        aucs = [roc_auc(y == c, proba[:, c]) for c in range(proba.shape[1])]
        aucs = [a for a in aucs if a is not None]
        auc = float(np.mean(aucs)) if aucs else None
    return accuracy, f1, auc


def regression_scores(y_true, y_pred) -> tuple[float | None, float | None, float | None]:
    """(MAPE over nonzero truths, explained variance, R^2)."""
    yt = np.asarray(y_true, dtype=np.float64)
    yp = np.asarray(y_pred, dtype=np.float64)
    nz = yt != 0
    mape = float(np.mean(np.abs((yt[nz] - yp[nz]) / yt[nz]))) if nz.any() else None
    var = np.var(yt)
    if var == 0:
        return mape, None, None
    resid = yt - yp
    evs = float(1.0 - np.var(resid) / var)
    r2 = float(1.0 - np.sum(resid**2) / np.sum((yt - yt.mean()) ** 2))
    return mape, evs, r2


# --------------------------------------------------------------- harness

CLASSIFICATION_METRICS = ("accuracy", "f1", "auc")
REGRESSION_METRICS = ("mape", "evs", "r2")


@dataclass
class UtilityReport:
    task: str
    real: dict[str, dict] = field(default_factory=dict)
    synthetic: dict[str, dict] = field(default_factory=dict)
    difference: dict[str, dict] = field(default_factory=dict)
    average_difference: dict[str, float | None] = field(default_factory=dict)
    errors: dict[str, str] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def _labels(values, vocab) -> np.ndarray:
    lookup = {c: i for i, c in enumerate(vocab)}
    return np.array([lookup[MISSING_LABEL if v is None else str(v)] for v in values], dtype=np.int64)


def _score_classifier(name, X, y, Xt, yt, k, seed):
    if name == "logistic_regression":
        model = fit_logreg(X, y, k, seed=seed)
    else:
        model = fit_tree(X, y, TREE_MAX_DEPTH, k)
    return dict(zip(CLASSIFICATION_METRICS, classification_scores(yt, model.predict_proba(Xt))))


def _score_regressor(name, X, y, Xt, yt):
    model = fit_linreg(X, y, 0.0 if name == "linear_regression" else RIDGE_ALPHA)
    return dict(zip(REGRESSION_METRICS, regression_scores(yt, model.predict(Xt))))


def utility_diff(real_train: Dataset, synth: Dataset, real_test: Dataset, *, seed: int = 0) -> UtilityReport:
    """Train each built-in model on real and on synthetic data; compare on the real test set."""
    if real_train.schema != synth.schema or real_train.schema != real_test.schema:
        raise InputError("train, synthetic and test datasets need the same schema")
    target = real_train.schema.target
    if target is None:
        raise InputError("ML utility needs a target column")
    space = MetricSpace.fit(real_train, synth, real_test, exclude=(target.name,))
    X_real, X_syn, X_test = (space.transform(d) for d in (real_train, synth, real_test))
    classification = target.target_task is Task.CLASSIFICATION
    report = UtilityReport(task=target.target_task.value)
    if classification:
        vocab = sorted({MISSING_LABEL if v is None else str(v)
                        for d in (real_train, synth, real_test) for v in d[target.name]})
        ys = [_labels(d[target.name], vocab) for d in (real_train, synth, real_test)]
        models, metric_names = ("logistic_regression", "decision_tree"), CLASSIFICATION_METRICS
    else:
        ys = [np.asarray(d[target.name], dtype=np.float64) for d in (real_train, synth, real_test)]
        models, metric_names = ("linear_regression", "ridge_regression"), REGRESSION_METRICS
    for name in models:
        try:
            if classification:
                k = len(vocab)
                r = _score_classifier(name, X_real, ys[0], X_test, ys[2], k, seed)
                s = _score_classifier(name, X_syn, ys[1], X_test, ys[2], k, seed)
            else:
                r = _score_regressor(name, X_real, ys[0], X_test, ys[2])
                s = _score_regressor(name, X_syn, ys[1], X_test, ys[2])
        except (TabGanError, np.linalg.LinAlgError) as exc:
            report.errors[name] = f"{type(exc).__name__}: {exc}"
            continue
        report.real[name], report.synthetic[name] = r, s
        report.difference[name] = {
            m: (abs(r[m] - s[m]) if r[m] is not None and s[m] is not None else None) for m in metric_names
        }
    for m in metric_names:
        vals = [d[m] for d in report.difference.values() if d[m] is not None]
        report.average_difference[m] = float(np.mean(vals)) if vals else None
    return report


def export_features(real_train: Dataset, synth: Dataset, real_test: Dataset, outdir) -> list[str]:
    """Write the model-ready feature matrices (plus raw target) for external model suites.

    Produces ``train_real.csv``, ``train_synthetic.csv`` and ``test_real.csv`` in
    the same metric space the built-in models use; returns the file names.
    """
    target = real_train.schema.target
    if target is None:
        raise InputError("feature export needs a target column")
    space = MetricSpace.fit(real_train, synth, real_test, exclude=(target.name,))
    header = space.feature_names() + [target.name]
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written = []
    for name, data in (("train_real.csv", real_train), ("train_synthetic.csv", synth), ("test_real.csv", real_test)):
        X = space.transform(data)
        with open(outdir / name, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for row, y in zip(X, data[target.name]):
                writer.writerow([repr(float(v)) for v in row] + ["" if y is None else y])
        written.append(name)
    return written
