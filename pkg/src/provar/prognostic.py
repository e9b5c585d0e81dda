"""Prognostic models: a linear learner and bagged CART regression trees.

Both learners store their training-time imputation means so trial covariates
are filled the same way the training data were. Forest training is fully
deterministic given the seed: per-tree streams are derived from
(seed, tree index), split ties break toward the lowest feature index and then
the lowest threshold.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg

from .dataset import HistoricalDataset, TrialDataset, impute_column_means

MODEL_FORMAT = "provar-model-1"


class SchemaError(ValueError):
    """Covariate names/order of a trial do not match the fitted model."""


@dataclass(frozen=True)
class ForestHyperparams:
    n_trees: int = 1000
    min_leaf: int = 1
    features_per_split: str = "all"  # only "all" is supported
    bootstrap: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.min_leaf < 1:
            raise ValueError("min_leaf must be >= 1")
        if self.features_per_split != "all":
            raise ValueError("only features_per_split='all' is supported")


@dataclass(frozen=True)
class FittedPrognosticModel:
    """A trained map from covariate vectors to predicted outcomes.

    `predictor` consumes a complete (already imputed) covariate matrix with
    columns in `covariate_names` order and returns one prediction per row.
    Prediction is deterministic: same input, bit-identical output.
    """

    predictor: Callable[[np.ndarray], np.ndarray]
    imputation_means: np.ndarray
    covariate_names: tuple[str, ...]
    learner_tag: str  # "linear" | "forest" | anything for ad-hoc models
    train_metadata: dict = field(default_factory=dict)
    payload: dict | None = None  # serializable state for save_model

    def __post_init__(self):
        means = np.asarray(self.imputation_means, dtype=float)
        means.setflags(write=False)
        object.__setattr__(self, "imputation_means", means)
        object.__setattr__(self, "covariate_names", tuple(self.covariate_names))

    def predict(self, covariates: np.ndarray) -> np.ndarray:
        x = np.asarray(covariates, dtype=float)
        if x.ndim != 2 or x.shape[1] != len(self.covariate_names):
            raise ValueError(f"expected (n, {len(self.covariate_names)}) covariates")
        if np.isnan(x).any():
            x, _ = impute_column_means(x, self.imputation_means)
        return np.asarray(self.predictor(x), dtype=float).reshape(-1)


def score_trial(model: FittedPrognosticModel, trial: TrialDataset) -> np.ndarray:
    """Predicted outcome for every trial subject.

    Covariate names must match the model's, in order. Missing cells are filled
    with the model's stored training means before prediction.
    """
    if tuple(trial.covariate_names) != model.covariate_names:
        missing = [c for c in model.covariate_names if c not in trial.covariate_names]
        extra = [c for c in trial.covariate_names if c not in model.covariate_names]
        raise SchemaError(
            "trial covariates do not match the model "
            f"(missing: {missing or 'none'}, extra: {extra or 'none'}, "
            f"model order: {list(model.covariate_names)})"
        )
    x, _ = impute_column_means(trial.covariates, model.imputation_means)
    return model.predict(x)


# ---------------------------------------------------------------------------
# Linear learner
# ---------------------------------------------------------------------------


def train_linear(hist: HistoricalDataset) -> FittedPrognosticModel:
    """Least squares of the historical outcome on an intercept plus the
    mean-imputed covariates. Useful as a baseline and as the degenerate case
    where the score is an exact linear function of the covariates."""
    if hist.n <= hist.p + 1:
        raise ValueError(f"need n' > p+1, got n'={hist.n}, p={hist.p}")
    x, means = impute_column_means(hist.covariates)
    z = np.column_stack([np.ones(hist.n), x])
    q, r = np.linalg.qr(z)
    diag = np.abs(np.diag(r))
    if diag.min() == 0.0 or diag.max() / diag.min() > 1e10:
        raise ValueError("historical design is singular; drop redundant covariates")
    beta = scipy.linalg.solve_triangular(r, q.T @ hist.outcome)
    intercept = float(beta[0])
    slopes = np.asarray(beta[1:], dtype=float)

    payload = {"intercept": intercept, "coefficients": slopes.tolist()}
    return FittedPrognosticModel(
        predictor=lambda xm: intercept + xm @ slopes,
        imputation_means=means,
        covariate_names=hist.covariate_names,
        learner_tag="linear",
        train_metadata={},
        payload=payload,
    )


# ---------------------------------------------------------------------------
# Bagged regression trees
# ---------------------------------------------------------------------------


def _best_split(x: np.ndarray, y: np.ndarray, min_leaf: int):
    """Best (feature, threshold) by variance reduction, or None.

    Candidate thresholds are midpoints between consecutive sorted unique
    feature values. Ties in gain break toward the lowest feature index, then
    the lowest threshold; comparisons are exact so results are reproducible.
    """
    n = y.shape[0]
    total = y.sum()
    base = total * total / n
    best_gain = 0.0
    best = None
    for j in range(x.shape[1]):
        order = np.argsort(x[:, j], kind="stable")
        xs = x[order, j]
        cuts = np.nonzero(xs[1:] > xs[:-1])[0] + 1  # left-block sizes
        if min_leaf > 1:
            cuts = cuts[(cuts >= min_leaf) & (cuts <= n - min_leaf)]
        if cuts.size == 0:
            continue
        csum = np.cumsum(y[order])
        left = csum[cuts - 1]
        right = total - left
        gain = left * left / cuts + right * right / (n - cuts) - base
        k = int(np.argmax(gain))  # first max -> lowest threshold
        if gain[k] > best_gain:
            best_gain = float(gain[k])
            i = cuts[k]
            best = (j, (xs[i - 1] + xs[i]) / 2.0)
    return best


def _grow_tree(x: np.ndarray, y: np.ndarray, min_leaf: int):
    """Grow one CART regression tree; returns flat node arrays
    (feature, threshold, left, right, value) with feature = -1 at leaves."""
    feature: list[int] = []
    threshold: list[float] = []
    left: list[int] = []
    right: list[int] = []
    value: list[float] = []

    def new_node() -> int:
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(0.0)
        return len(feature) - 1

    root = new_node()
    stack = [(root, np.arange(y.shape[0]))]
    while stack:
        node, idx = stack.pop()
        ynode = y[idx]
        value[node] = float(ynode.mean())
        if idx.shape[0] < 2 * min_leaf or ynode.min() == ynode.max():
            continue
        split = _best_split(x[idx], ynode, min_leaf)
        if split is None:
            continue
        j, thr = split
        go_left = x[idx, j] <= thr
        feature[node] = j
        threshold[node] = float(thr)
        lchild = new_node()
        rchild = new_node()
        left[node] = lchild
        right[node] = rchild
        stack.append((rchild, idx[~go_left]))
        stack.append((lchild, idx[go_left]))

    return (
        np.array(feature, dtype=np.int32),
        np.array(threshold, dtype=float),
        np.array(left, dtype=np.int32),
        np.array(right, dtype=np.int32),
        np.array(value, dtype=float),
    )


class _Forest:
    """Flat-array forest evaluator: all trees concatenated so a batch of rows
    walks every tree simultaneously with vectorized indexing."""

    def __init__(self, trees):
        offsets = np.cumsum([0] + [t[0].shape[0] for t in trees[:-1]]).astype(np.int64)
        self.roots = offsets
        self.feature = np.concatenate([t[0] for t in trees]).astype(np.int64)
        self.threshold = np.concatenate([t[1] for t in trees])
        # child pointers become global indices into the concatenated arrays
        self.left = np.concatenate(
            [np.where(t[2] >= 0, t[2] + off, 0) for t, off in zip(trees, offsets)]
        ).astype(np.int64)
        self.right = np.concatenate(
            [np.where(t[3] >= 0, t[3] + off, 0) for t, off in zip(trees, offsets)]
        ).astype(np.int64)
        self.value = np.concatenate([t[4] for t in trees])

    def predict(self, x: np.ndarray) -> np.ndarray:
        n = x.shape[0]
        idx = np.broadcast_to(self.roots, (n, self.roots.shape[0])).copy()
        rows = np.arange(n)[:, None]
        while True:
            feat = self.feature[idx]
            active = feat >= 0
            if not active.any():
                break
            xv = x[rows, np.where(active, feat, 0)]
            go_left = xv <= self.threshold[idx]
            nxt = np.where(go_left, self.left[idx], self.right[idx])
            idx = np.where(active, nxt, idx)
        return self.value[idx].mean(axis=1)


def _tree_rng(seed: int, tree_index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence((seed, tree_index))))


def train_forest(
    hist: HistoricalDataset, params: ForestHyperparams = ForestHyperparams()
) -> FittedPrognosticModel:
    """Bagged CART regression trees.

    Each tree is fit on a bootstrap resample (n' draws with replacement, or
    the full sample when bootstrap is off) and grown until leaves are pure or
    hold fewer than 2*min_leaf samples, searching all features at every split.
    The forest prediction is the mean of the tree predictions.
    """
    x, means = impute_column_means(hist.covariates)
    y = hist.outcome
    n = hist.n
    trees = []
    for t in range(params.n_trees):
        if params.bootstrap:
            idx = _tree_rng(params.seed, t).integers(0, n, size=n)
            trees.append(_grow_tree(x[idx], y[idx], params.min_leaf))
        else:
            trees.append(_grow_tree(x, y, params.min_leaf))
    forest = _Forest(trees)

    payload = {
        "trees": [
            {
                "feature": t[0].tolist(),
                "threshold": t[1].tolist(),
                "left": t[2].tolist(),
                "right": t[3].tolist(),
                "value": t[4].tolist(),
            }
            for t in trees
        ]
    }
    meta = {
        "n_trees": params.n_trees,
        "min_leaf": params.min_leaf,
        "features_per_split": params.features_per_split,
        "bootstrap": params.bootstrap,
        "seed": params.seed,
    }
    return FittedPrognosticModel(
        predictor=forest.predict,
        imputation_means=means,
        covariate_names=hist.covariate_names,
        learner_tag="forest",
        train_metadata=meta,
        payload=payload,
    )


# ---------------------------------------------------------------------------
# Persistence (provar-model-1 JSON)
# ---------------------------------------------------------------------------


def model_to_json(model: FittedPrognosticModel) -> str:
    """Canonical JSON for a fitted linear or forest model. Deterministic:
    identical models serialize to identical bytes."""
    if model.payload is None:
        raise ValueError(f"model with learner_tag {model.learner_tag!r} is not serializable")
    doc = {
        "version": MODEL_FORMAT,
        "learner_tag": model.learner_tag,
        "covariate_names": list(model.covariate_names),
        "imputation_means": model.imputation_means.tolist(),
        "hyperparams": model.train_metadata,
        **model.payload,
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n"


def save_model(model: FittedPrognosticModel, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(model_to_json(model))


def load_model(path) -> FittedPrognosticModel:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("version") != MODEL_FORMAT:
        raise ValueError(f"unsupported model file version {doc.get('version')!r}")
    tag = doc["learner_tag"]
    means = np.asarray(doc["imputation_means"], dtype=float)
    names = tuple(doc["covariate_names"])
    meta = doc.get("hyperparams", {})
    if tag == "linear":
        intercept = float(doc["intercept"])
        slopes = np.asarray(doc["coefficients"], dtype=float)
        payload = {"intercept": intercept, "coefficients": slopes.tolist()}
        predictor = lambda xm: intercept + xm @ slopes  # noqa: E731
    elif tag == "forest":
        trees = [
            (
                np.asarray(t["feature"], dtype=np.int32),
                np.asarray(t["threshold"], dtype=float),
                np.asarray(t["left"], dtype=np.int32),
                np.asarray(t["right"], dtype=np.int32),
                np.asarray(t["value"], dtype=float),
            )
            for t in doc["trees"]
        ]
        payload = {"trees": doc["trees"]}
        predictor = _Forest(trees).predict
    else:
        raise ValueError(f"unknown learner_tag {tag!r} in model file")
    return FittedPrognosticModel(
        predictor=predictor,
        imputation_means=means,
        covariate_names=names,
        learner_tag=tag,
        train_metadata=meta,
        payload=payload,
    )
