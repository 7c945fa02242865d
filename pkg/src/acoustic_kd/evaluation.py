"""Cross-scenario accuracy matrices, confusion matrices and feature-transfer
evaluation with k-NN and a linear SVM."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .data import ArrayDataset
from .distill import predict_logits
from .features import SplitAssignment, make_splits

K_CANDIDATES = (7, 9, 11, 13, 15)
ALL = "all"


def predict_labels(model, inputs: np.ndarray, batch_size: int = 32) -> np.ndarray:
    """Argmax predictions (ties -> lowest class). ``model`` may also be a plain callable returning labels."""
    if len(inputs) == 0:
        return np.zeros(0, dtype=np.int64)
    if hasattr(model, "parameters"):
        return np.argmax(predict_logits(model, inputs, batch_size), axis=1)
    return np.asarray(model(inputs), dtype=np.int64)


# --------------------------------------------------------- scenario matrix


@dataclass
class CrossScenarioMatrix:
    rows: tuple  # training conditions
    cols: tuple  # test conditions (scenarios then "all")
    accuracy: np.ndarray  # (len(rows), len(cols))
    counts: np.ndarray  # samples per cell

    def cell(self, train, test) -> float:
        return float(self.accuracy[self.rows.index(train), self.cols.index(test)])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["train", "test", "accuracy", "count"])
        for i, r in enumerate(self.rows):
            for j, c in enumerate(self.cols):
                w.writerow([r, c, f"{self.accuracy[i, j]:.6f}", int(self.counts[i, j])])
        return buf.getvalue()

    def format(self, title: str = "") -> str:
        head = "train\\test " + " ".join(f"{str(c):>8}" for c in self.cols)
        lines = [title] if title else []
        lines.append(head)
        for i, r in enumerate(self.rows):
            lines.append(f"{str(r):>10} " + " ".join(f"{100 * a:8.1f}" for a in self.accuracy[i]))
        return "\n".join(lines)


def _cell_subset(dataset: ArrayDataset, split: SplitAssignment, train_cond, test_scenario) -> ArrayDataset:
    scen = dataset.by_scenario(test_scenario)
    if train_cond == test_scenario or train_cond == ALL:
        return scen.split(split, "test")
    return scen


def evaluate_cross_scenario(model_per_scenario: Mapping, dataset: ArrayDataset, split: SplitAssignment,
                            scenarios: Sequence[int] = (1, 2, 3), rows: Sequence | None = None,
                            batch_size: int = 32) -> CrossScenarioMatrix:
    """Diagonal cells (and the all-scenario row) use the test split; off-diagonal cells use
    every sample of the other scenario. The "all" column pools the row's cells."""
    rows = tuple(rows) if rows is not None else tuple(scenarios) + (ALL,)
    missing = [r for r in rows if r not in model_per_scenario]
    if missing:
        raise KeyError(f"no model for training condition(s) {missing}")
    cols = tuple(scenarios) + (ALL,)
    acc = np.zeros((len(rows), len(cols)))
    cnt = np.zeros((len(rows), len(cols)), dtype=np.int64)
    for i, r in enumerate(rows):
        hits_total = n_total = 0
        for j, c in enumerate(scenarios):
            sub = _cell_subset(dataset, split, r, c)
            if len(sub) == 0:
                acc[i, j] = np.nan
                continue
            hits = int(np.sum(predict_labels(model_per_scenario[r], sub.inputs, batch_size) == sub.labels))
            acc[i, j] = hits / len(sub)
            cnt[i, j] = len(sub)
            hits_total += hits
            n_total += len(sub)
        acc[i, -1] = hits_total / n_total if n_total else np.nan
        cnt[i, -1] = n_total
    return CrossScenarioMatrix(rows, cols, acc, cnt)


# --------------------------------------------------------------- confusion


@dataclass
class ConfusionMatrix:
    counts: np.ndarray  # (C, C) rows true, cols predicted

    @property
    def accuracy(self) -> float:
        total = self.counts.sum()
        return float(np.trace(self.counts) / total) if total else float("nan")

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        c = self.counts.shape[0]
        w.writerow(["true\\pred"] + list(range(c)))
        for i in range(c):
            w.writerow([i] + [int(v) for v in self.counts[i]])
        return buf.getvalue()


def confusion_from_predictions(labels: np.ndarray, predictions: np.ndarray, classes: int) -> ConfusionMatrix:
    m = np.zeros((classes, classes), dtype=np.int64)
    np.add.at(m, (np.asarray(labels), np.asarray(predictions)), 1)
    return ConfusionMatrix(m)


def confusion(model, dataset: ArrayDataset, classes: int | None = None, batch_size: int = 32) -> ConfusionMatrix:
    if classes is None:
        classes = model.spec.classes if hasattr(model, "spec") else int(dataset.labels.max()) + 1
    return confusion_from_predictions(dataset.labels, predict_labels(model, dataset.inputs, batch_size), classes)


# ---------------------------------------------------------------- features


def extract_features(model, layer_tag: str, dataset: ArrayDataset, batch_size: int = 32):
    """Eval-mode activations for ``layer_tag`` (one row per sample) and the sample ids."""
    if layer_tag not in model.tags:
        raise KeyError(f"unknown feature tag {layer_tag!r}; available: {', '.join(model.tags)}")
    was = model.training
    model.eval()
    try:
        rows = [model(dataset.inputs[i:i + batch_size], tags=(layer_tag,)).features[layer_tag].data
                for i in range(0, len(dataset), batch_size)]
    finally:
        model.train(was)
    return np.concatenate(rows).astype(np.float64), dataset.ids.copy()


def standardize(train: np.ndarray, *others: np.ndarray):
    """Zero-mean unit-variance scaling fitted on ``train``; constant columns are only centred."""
    mu = train.mean(axis=0)
    sd = train.std(axis=0)
    sd = np.where(sd > 1e-12, sd, 1.0)
    return tuple((x - mu) / sd for x in (train,) + others)


# --------------------------------------------------------------------- kNN


def pairwise_sq_distances(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Exact squared Euclidean distances by direct differences (no norm expansion)."""
    out = np.empty((len(a), len(b)))
    chunk = max(1, (1 << 22) // max(1, b.size))
    for i in range(0, len(a), chunk):
        d = a[i:i + chunk, None, :] - b[None, :, :]
        out[i:i + chunk] = np.einsum("ijk,ijk->ij", d, d)
    return out


def knn_classify(train_feats: np.ndarray, train_labels: np.ndarray, eval_feats: np.ndarray, k: int,
                 distances: np.ndarray | None = None) -> np.ndarray:
    """Majority vote of the k nearest training points. Distance ties -> smaller class index,
    then lower train index; vote ties -> smallest class index."""
    if k < 1 or k % 2 == 0:
        raise ValueError("k must be odd and >= 1")
    train_labels = np.asarray(train_labels, dtype=np.int64)
    if k > len(train_labels):
        raise ValueError(f"k={k} exceeds the {len(train_labels)} training points")
    d = pairwise_sq_distances(np.asarray(eval_feats, float), np.asarray(train_feats, float)) if distances is None else distances
    order_labels = np.broadcast_to(train_labels, d.shape)
    nn_idx = np.lexsort((order_labels, d), axis=1)[:, :k]
    votes = train_labels[nn_idx]
    n_cls = int(train_labels.max()) + 1
    counts = np.zeros((len(votes), n_cls), dtype=np.int64)
    np.add.at(counts, (np.repeat(np.arange(len(votes)), k), votes.ravel()), 1)
    return np.argmax(counts, axis=1)


def validate_k(train_feats, labels, val_feats, val_labels, candidates: Sequence[int] = K_CANDIDATES):
    """Best k by validation accuracy (ties -> smallest k). Returns (k, {k: accuracy}).
    Candidates larger than the training set are skipped."""
    if len(val_labels) == 0:
        raise ValueError("empty validation set")
    feasible = sorted(k for k in candidates if k <= len(labels))
    if not feasible:
        raise ValueError(f"no k candidate in {tuple(candidates)} fits {len(labels)} training points")
    d = pairwise_sq_distances(np.asarray(val_feats, float), np.asarray(train_feats, float))
    scores = {}
    for k in feasible:
        pred = knn_classify(train_feats, labels, val_feats, k, distances=d)
        scores[k] = float(np.mean(pred == np.asarray(val_labels)))
    best = max(scores.values())
    return min(k for k, v in scores.items() if v == best), scores


# --------------------------------------------------------------------- SVM


@dataclass
class LinearSVM:
    """One-vs-rest linear hinge-loss classifiers trained with full-batch Pegasos
    subgradient steps (eta_t = 1 / (lambda t), lambda = 1 / (C n)), averaging
    the second half of the iterates. The bias is an extra constant feature equal
    to the RMS norm of the training rows, so predictions are unchanged when
    features are scaled by a and C by 1 / a^2."""

    regularization: float = 1.0
    iterations: int = 2000
    seed: int = 0
    classes_: np.ndarray = field(default=None, repr=False)
    weights_: np.ndarray = field(default=None, repr=False)
    bias_scale_: float = 1.0

    def _augment(self, x):
        return np.hstack([x, np.full((len(x), 1), self.bias_scale_)])

    def fit(self, x: np.ndarray, y: np.ndarray) -> "LinearSVM":
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y)
        self.classes_ = np.unique(y)
        if len(self.classes_) < 2:
            raise ValueError("SVM needs at least two classes in the training set")
        if not self.regularization > 0:
            raise ValueError("regularization must be positive")
        n = len(x)
        rms = float(np.sqrt(np.mean(np.sum(x * x, axis=1))))
        self.bias_scale_ = rms if rms > 0 else 1.0
        xa = self._augment(x)
        lam = 1.0 / (self.regularization * n)
        targets = np.where(y[:, None] == self.classes_[None, :], 1.0, -1.0)  # (n, K)
        w = np.zeros((xa.shape[1], len(self.classes_)))
        avg = np.zeros_like(w)
        start = self.iterations // 2
        radius = 1.0 / np.sqrt(lam)
        for t in range(1, self.iterations + 1):
            margins = targets * (xa @ w)
            active = (margins < 1.0) * targets
            w = (1.0 - 1.0 / t) * w + (xa.T @ active) / (lam * t * n)
            norms = np.linalg.norm(w, axis=0)
            w = w * np.minimum(1.0, radius / np.maximum(norms, 1e-300))
            if t > start:
                avg += w
        self.weights_ = avg / (self.iterations - start)
        return self

    def decision_function(self, x) -> np.ndarray:
        return self._augment(np.asarray(x, dtype=np.float64)) @ self.weights_

    def predict(self, x) -> np.ndarray:
        return self.classes_[np.argmax(self.decision_function(x), axis=1)]


def svm_classify(train_feats, labels, eval_feats, regularization: float = 1.0, iterations: int = 2000) -> np.ndarray:
    return LinearSVM(regularization, iterations).fit(train_feats, labels).predict(eval_feats)


# ---------------------------------------------------------------- transfer


@dataclass
class TransferReport:
    layer: str
    knn_accuracy: float
    svm_accuracy: float
    k: int
    width: int = 0
    val_scores: dict = field(default_factory=dict)


def transfer_split(dataset: ArrayDataset, seed: int = 0) -> SplitAssignment:
    return make_splits(dataset.take_infos(), seed=seed, min_per_class=3)


def evaluate_feature_matrix(name: str, feats: np.ndarray, dataset: ArrayDataset, split: SplitAssignment,
                            regularization: float = 1.0) -> TransferReport:
    sets = {}
    for part in ("train", "val", "test"):
        mask = np.isin(dataset.takes, np.fromiter(getattr(split, part), dtype=np.int64))
        sets[part] = (feats[mask], dataset.labels[mask])
    (xtr, ytr), (xva, yva), (xte, yte) = sets["train"], sets["val"], sets["test"]
    xtr, xva, xte = standardize(xtr, xva, xte)
    k, scores = validate_k(xtr, ytr, xva, yva)
    knn = float(np.mean(knn_classify(xtr, ytr, xte, k) == yte))
    svm = float(np.mean(svm_classify(xtr, ytr, xte, regularization) == yte))
    return TransferReport(name, knn, svm, k, feats.shape[1], scores)


def transfer_evaluate(model, layer_tags: Sequence[str], transfer_dataset: ArrayDataset,
                      split: SplitAssignment | None = None, training_classes: Sequence[int] | None = None,
                      regularization: float = 1.0, seed: int = 0) -> list[TransferReport]:
    """k-NN (k chosen on validation) and linear SVM accuracy on features of each layer."""
    transfer_classes = set(np.unique(transfer_dataset.labels).tolist())
    if training_classes is not None and transfer_classes & set(int(c) for c in training_classes):
        raise ValueError(f"transfer classes {sorted(transfer_classes & set(training_classes))} "
                         "were seen during training")
    split = split or transfer_split(transfer_dataset, seed)
    reports = []
    for tag in layer_tags:
        feats, _ = extract_features(model, tag, transfer_dataset)
        reports.append(evaluate_feature_matrix(tag, feats, transfer_dataset, split, regularization))
    return reports


def format_transfer_table(reports: Sequence[TransferReport], title: str = "") -> str:
    lines = [title] if title else []
    lines.append(f"{'layer':<24} {'width':>6} {'k':>3} {'k-NN':>7} {'SVM':>7}")
    for r in reports:
        lines.append(f"{r.layer:<24} {r.width:>6} {r.k:>3} {100 * r.knn_accuracy:7.1f} {100 * r.svm_accuracy:7.1f}")
    return "\n".join(lines)


def transfer_csv(reports: Sequence[TransferReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["layer", "width", "k", "knn_accuracy", "svm_accuracy"])
    for r in reports:
        w.writerow([r.layer, r.width, r.k, f"{r.knn_accuracy:.6f}", f"{r.svm_accuracy:.6f}"])
    return buf.getvalue()
