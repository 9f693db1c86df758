"""Random forest with leave-one-out cross-validation and ROC metrics.

CART trees, Gini impurity, bootstrap resampling, and sqrt(d) feature
subsampling at every node.  Everything is seeded and tie-breaking is fixed
(lowest feature index, then lowest threshold), so a (data, grid, seed)
triple always produces the same model and the same evaluation report,
whether folds run serially or in parallel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from .errors import (
    DimMismatch,
    EmptyTraining,
    SingleClass,
    SingleClassTraining,
    TooFewRows,
)

# a split must beat the parent impurity by more than float dust
_MIN_IMPURITY_DECREASE = 1e-12


@dataclass(frozen=True)
class Dataset:
    """Feature matrix with patient ids and binary labels."""

    ids: tuple[str, ...]
    X: np.ndarray  # (n, d) float
    y: np.ndarray  # (n,) int in {0, 1}

    def __post_init__(self):
        if self.X.ndim != 2 or len(self.ids) != self.X.shape[0] or self.y.shape != (self.X.shape[0],):
            raise ValueError("ids, X and y must agree on the number of rows")
        if ((self.y != 0) & (self.y != 1)).any():
            raise ValueError("labels must be 0 or 1")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def subset(self, rows) -> "Dataset":
        rows = np.asarray(rows, dtype=np.int64)
        return Dataset(
            ids=tuple(self.ids[r] for r in rows), X=self.X[rows], y=self.y[rows]
        )


@dataclass(frozen=True)
class RfParams:
    n_trees: int = 300
    min_leaf: int = 1
    mtry: int | None = None  # None -> floor(sqrt(d))

    def resolve_mtry(self, d: int) -> int:
        if self.mtry is not None:
            return max(1, min(self.mtry, d))
        return max(1, min(int(math.isqrt(d)), d))


@dataclass
class TreeNode:
    """Internal node (feature/threshold/children) or leaf (proba set)."""

    feature: int = -1
    threshold: float = 0.0
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None
    proba: tuple[float, float] | None = None  # leaf class frequencies (p0, p1)


@dataclass(frozen=True)
class RfModel:
    trees: tuple[TreeNode, ...]
    params: RfParams
    seed: int
    n_features: int
    oob_indices: tuple[np.ndarray, ...] = field(repr=False, default=())


@dataclass(frozen=True)
class FoldAudit:
    """Which rows each LOOCV fold saw; used to assert there is no leakage."""

    held_out_id: str
    train_ids: tuple[str, ...]  # inner grid-search training rows
    val_ids: tuple[str, ...]  # inner validation rows
    refit_ids: tuple[str, ...]  # rows of the final per-fold model
    chosen: RfParams


@dataclass(frozen=True)
class EvalReport:
    auc: float
    accuracy: float
    confusion: np.ndarray  # [[tn, fp], [fn, tp]]
    per_patient_scores: tuple[tuple[str, float, int], ...]
    folds: tuple[FoldAudit, ...] = ()


# --------------------------------------------------------------------------
# tree growth
# --------------------------------------------------------------------------

def _leaf(y_rows: np.ndarray) -> TreeNode:
    n1 = int(y_rows.sum())
    n = y_rows.size
    return TreeNode(proba=((n - n1) / n, n1 / n))


def _gini(n1: int, n: int) -> float:
    p1 = n1 / n
    return 1.0 - p1 * p1 - (1.0 - p1) * (1.0 - p1)


def _best_split(X, y, rows, feats, min_leaf):
    """Lowest weighted-Gini split over the candidate features.

    Ties resolve to the lowest feature index and then the lowest
    threshold.  Returns (weighted_gini, feature, threshold) or None.
    """
    n = rows.size
    ysub = y[rows]
    best = None
    for f in feats:
        xs = X[rows, f]
        order = np.argsort(xs, kind="stable")
        xv = xs[order]
        yv = ysub[order]
        cut = np.nonzero(xv[:-1] < xv[1:])[0]  # split between p and p+1
        if cut.size == 0:
            continue
        left_n = cut + 1
        ok = (left_n >= min_leaf) & (n - left_n >= min_leaf)
        cut = cut[ok]
        if cut.size == 0:
            continue
        left_n = cut + 1
        ones = np.cumsum(yv)
        l1 = ones[cut]
        r1 = ones[-1] - l1
        rn = n - left_n
        gl = 1.0 - (l1 / left_n) ** 2 - ((left_n - l1) / left_n) ** 2
        gr = 1.0 - (r1 / rn) ** 2 - ((rn - r1) / rn) ** 2
        weighted = (left_n * gl + rn * gr) / n
        j = int(np.argmin(weighted))  # first minimum -> lowest threshold
        if best is None or weighted[j] < best[0]:
            thr = 0.5 * (xv[cut[j]] + xv[cut[j] + 1])
            best = (float(weighted[j]), int(f), float(thr))
    return best


def _grow(X, y, rows, rng, min_leaf, mtry):
    ysub = y[rows]
    n1 = int(ysub.sum())
    if n1 == 0 or n1 == rows.size or rows.size < 2 * min_leaf:
        return _leaf(ysub)
    feats = np.sort(rng.choice(X.shape[1], size=mtry, replace=False))
    best = _best_split(X, y, rows, feats, min_leaf)
    if best is None or _gini(n1, rows.size) - best[0] <= _MIN_IMPURITY_DECREASE:
        return _leaf(ysub)
    _, f, thr = best
    go_left = X[rows, f] <= thr
    node = TreeNode(feature=f, threshold=thr)
    node.left = _grow(X, y, rows[go_left], rng, min_leaf, mtry)
    node.right = _grow(X, y, rows[~go_left], rng, min_leaf, mtry)
    return node


def rf_train(train: Dataset, params: RfParams, seed: int) -> RfModel:
    """Grow a seeded forest on bootstrap resamples of `train`.

    Tree t draws its bootstrap rows and per-node feature subsets from a
    generator seeded with `seed + t`, which is what makes parallel and
    serial training interchangeable.
    """
    if train.n == 0:
        raise EmptyTraining("training set is empty")
    if len(np.unique(train.y)) < 2:
        raise SingleClassTraining("training set has a single class")
    mtry = params.resolve_mtry(train.d)
    trees = []
    oob = []
    for t in range(params.n_trees):
        rng = np.random.default_rng(seed + t)
        rows = rng.integers(0, train.n, size=train.n)
        trees.append(_grow(train.X, train.y, rows, rng, params.min_leaf, mtry))
        oob.append(np.setdiff1d(np.arange(train.n), rows))
    return RfModel(
        trees=tuple(trees),
        params=params,
        seed=seed,
        n_features=train.d,
        oob_indices=tuple(oob),
    )


def tree_vote(node: TreeNode, row: np.ndarray) -> float:
    """One tree's class-1 vote: leaf majority, ties counting 0.5."""
    while node.proba is None:
        node = node.left if row[node.feature] <= node.threshold else node.right
    p0, p1 = node.proba
    if p1 > p0:
        return 1.0
    if p1 < p0:
        return 0.0
    return 0.5


def rf_predict(model: RfModel, row) -> float:
    """Fraction of trees voting class 1 for this row."""
    row = np.asarray(row, dtype=np.float64).ravel()
    if row.size != model.n_features:
        raise DimMismatch(f"row has {row.size} features, model expects {model.n_features}")
    return float(sum(tree_vote(t, row) for t in model.trees) / len(model.trees))


# --------------------------------------------------------------------------
# metrics
# --------------------------------------------------------------------------

def compute_auc(scores, labels) -> float:
    """Mann-Whitney AUC: P(score_pos > score_neg) with ties counting 0.5."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    n_pos = int((y == 1).sum())
    n_neg = int((y == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise SingleClass("AUC needs both classes")
    ranks = rankdata(s)
    return float((ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def confusion_matrix(scores, labels, threshold: float = 0.5) -> np.ndarray:
    """2x2 counts [[tn, fp], [fn, tp]]; score >= threshold predicts positive."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    pred = s >= threshold
    tp = int((pred & (y == 1)).sum())
    tn = int((~pred & (y == 0)).sum())
    fp = int((pred & (y == 0)).sum())
    fn = int((~pred & (y == 1)).sum())
    return np.array([[tn, fp], [fn, tp]], dtype=np.int64)


def roc_points(scores, labels) -> list[tuple[float, float]]:
    """(fpr, tpr) pairs from the all-negative to the all-positive corner."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    n_pos = int((y == 1).sum())
    n_neg = int((y == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise SingleClass("ROC needs both classes")
    points = [(0.0, 0.0)]
    for thr in np.unique(s)[::-1]:
        pred = s >= thr
        points.append(
            (
                float((pred & (y == 0)).sum() / n_neg),
                float((pred & (y == 1)).sum() / n_pos),
            )
        )
    if points[-1] != (1.0, 1.0):
        points.append((1.0, 1.0))
    return points


# --------------------------------------------------------------------------
# leave-one-out cross-validation with per-fold grid search
# --------------------------------------------------------------------------

def expand_grid(grid) -> list[RfParams]:
    """Accepts {'n_trees': [...], 'min_leaf': [...]} or an RfParams list."""
    if isinstance(grid, dict):
        points = [
            RfParams(n_trees=int(nt), min_leaf=int(ml))
            for nt in grid["n_trees"]
            for ml in grid["min_leaf"]
        ]
    else:
        points = list(grid)
    if not points:
        raise ValueError("hyperparameter grid is empty")
    return sorted(points, key=lambda p: (p.n_trees, p.min_leaf))


def _stratified_split(y, rest, rng):
    """80/20 split of `rest`, stratified; lone-class rows stay in train."""
    val: list[int] = []
    for cls in (0, 1):
        rows_c = [int(r) for r in rest if y[r] == cls]
        if len(rows_c) < 2:
            continue
        n_val = int(math.floor(0.2 * len(rows_c) + 0.5))
        n_val = min(max(n_val, 1), len(rows_c) - 1)
        perm = rng.permutation(len(rows_c))
        val.extend(rows_c[p] for p in perm[:n_val])
    val_set = set(val)
    train = [int(r) for r in rest if int(r) not in val_set]
    return np.array(train, dtype=np.int64), np.array(sorted(val_set), dtype=np.int64)


def loocv(data: Dataset, grid, seed: int) -> EvalReport:
    """Leave-one-out evaluation with an inner 80/20 grid search per fold.

    The held-out row never touches tree growth or hyperparameter selection
    for its own fold; per-fold seeds are seed + fold*10007 so folds can be
    computed in any order.
    """
    if data.n < 3:
        raise TooFewRows(f"LOOCV needs at least 3 rows, got {data.n}")
    if len(np.unique(data.y)) < 2:
        raise SingleClass("LOOCV needs both classes")
    points = expand_grid(grid)

    scores = np.empty(data.n, dtype=np.float64)
    audits = []
    for i in range(data.n):
        fold_seed = seed + i * 10007
        rest = np.array([j for j in range(data.n) if j != i], dtype=np.int64)
        rng = np.random.default_rng(fold_seed)
        train_idx, val_idx = _stratified_split(data.y, rest, rng)

        if len(points) == 1:
            chosen = points[0]
        else:
            train_ds = data.subset(train_idx)
            ranked = []
            for p in points:
                model = rf_train(train_ds, p, fold_seed)
                val_scores = [rf_predict(model, data.X[v]) for v in val_idx]
                if len(np.unique(data.y[val_idx])) < 2:
                    val_auc = 0.5
                else:
                    val_auc = compute_auc(val_scores, data.y[val_idx])
                ranked.append((-val_auc, p.n_trees, -p.min_leaf, p))
            chosen = min(ranked)[3]

        final = rf_train(data.subset(rest), chosen, fold_seed)
        scores[i] = rf_predict(final, data.X[i])
        audits.append(
            FoldAudit(
                held_out_id=data.ids[i],
                train_ids=tuple(data.ids[j] for j in train_idx),
                val_ids=tuple(data.ids[j] for j in val_idx),
                refit_ids=tuple(data.ids[j] for j in rest),
                chosen=chosen,
            )
        )

    confusion = confusion_matrix(scores, data.y)
    accuracy = float((confusion[0, 0] + confusion[1, 1]) / data.n)
    return EvalReport(
        auc=compute_auc(scores, data.y),
        accuracy=accuracy,
        confusion=confusion,
        per_patient_scores=tuple(
            (data.ids[i], float(scores[i]), int(data.y[i])) for i in range(data.n)
        ),
        folds=tuple(audits),
    )
