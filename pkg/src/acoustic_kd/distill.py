"""Teacher training, soft labels and generalized distillation.

Step 1 trains the teacher on hard labels, step 2 freezes its tempered
predictions as soft labels, step 3 trains the student on

    (1 - lam) * CE(y, softmax(z)) + lam * CE(s, softmax(z [/ T]))

where the student only ever sees its own single-microphone inputs, y and s.
"""
from __future__ import annotations

import itertools
import time
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .data import ArrayDataset, one_hot
from .features import SplitAssignment
from .nn import Adam, backward
from .nn import functional as F
from .nn.tensor import Tensor


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    epochs: int = 100
    batch_size: int = 32
    seed: int = 0
    patience: int | None = None  # stop after this many epochs without a new best validation accuracy
    stop_at_accuracy: float | None = None  # stop once validation accuracy reaches this value
    fit_input_norm: bool = True

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 2:
            raise ValueError("need epochs >= 1 and batch_size >= 2")
        if not self.learning_rate > 0:
            raise ValueError("learning rate must be positive")


@dataclass
class DistillationConfig(TrainConfig):
    lam: float = 0.5
    temperature: float = 1.0
    temper_student: bool = False
    teacher_input_scaling: bool = False

    def __post_init__(self):
        super().__post_init__()
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError("lambda must lie in [0, 1]")
        if not self.temperature > 0:
            raise ValueError("temperature must be > 0")


@dataclass
class TrainingLog:
    epochs: list = field(default_factory=list)
    train_loss: list = field(default_factory=list)
    val_accuracy: list = field(default_factory=list)
    best_epoch: int = 0
    best_val_accuracy: float = -1.0
    seed: int = 0
    wall_time: float = 0.0
    config: dict = field(default_factory=dict)

    def record(self, epoch: int, loss: float, acc: float) -> bool:
        if epoch != len(self.epochs) + 1:
            raise ValueError("epochs must be contiguous from 1")
        self.epochs.append(epoch)
        self.train_loss.append(float(loss))
        self.val_accuracy.append(float(acc))
        if acc > self.best_val_accuracy:
            self.best_val_accuracy, self.best_epoch = float(acc), epoch
            return True
        return False

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SoftLabelSet:
    ids: np.ndarray  # (n,) uint64
    probs: np.ndarray  # (n, C)
    temperature: float
    teacher_id: str = ""

    def __post_init__(self):
        self.ids = np.asarray(self.ids, dtype=np.uint64)
        self.probs = np.asarray(self.probs, dtype=np.float64)
        if self.probs.ndim != 2 or len(self.ids) != len(self.probs):
            raise ValueError("soft labels need one (C,) row per id")
        if len(np.unique(self.ids)) != len(self.ids):
            raise ValueError("duplicate sample ids in soft labels")
        F._check_prob_rows(self.probs, "soft labels")
        self._index = {int(i): k for k, i in enumerate(self.ids)}

    def rows_for(self, ids) -> np.ndarray:
        try:
            return self.probs[[self._index[int(i)] for i in ids]]
        except KeyError as exc:
            raise KeyError(f"no soft label for sample id {exc.args[0]}") from None

    def __contains__(self, sample_id) -> bool:
        return int(sample_id) in self._index


# ----------------------------------------------------------------- helpers


def predict_logits(model, inputs: np.ndarray, batch_size: int = 32) -> np.ndarray:
    """Eval-mode logits; restores the model's previous mode."""
    was = model.training
    model.eval()
    try:
        out = [model(inputs[i:i + batch_size]).logits.data for i in range(0, len(inputs), batch_size)]
    finally:
        model.train(was)
    return np.concatenate(out).astype(np.float64)


def accuracy(model, dataset: ArrayDataset, batch_size: int = 32) -> float:
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    pred = np.argmax(predict_logits(model, dataset.inputs, batch_size), axis=1)
    return float(np.mean(pred == dataset.labels))


def _batches(n: int, batch_size: int, seed: int, epoch: int):
    order = np.random.default_rng([int(seed), int(epoch)]).permutation(n)
    out = [order[i:i + batch_size] for i in range(0, n, batch_size)]
    if len(out) > 1 and len(out[-1]) < 2:  # batchnorm cannot train on a single sample
        out[-2] = np.concatenate([out[-2], out[-1]])
        out.pop()
    return out


def _fit(model, train: ArrayDataset, val: ArrayDataset, config: TrainConfig,
         objective: Callable[[Tensor, np.ndarray], Tensor], log_cb=None):
    if len(train) == 0:
        raise ValueError("empty training split")
    if len(val) == 0:
        raise ValueError("empty validation split")
    if len(train) < 2:
        raise ValueError("need at least two training samples")
    t0 = time.perf_counter()
    if config.fit_input_norm and hasattr(model, "norm"):
        model.norm.fit(train.inputs)
    params = model.parameters()
    opt = Adam(params, lr=config.learning_rate)
    log = TrainingLog(seed=config.seed, config=asdict(config))
    best_state = model.state_dict()
    stale = 0
    for epoch in range(1, config.epochs + 1):
        model.train()
        total, count = 0.0, 0
        for idx in _batches(len(train), config.batch_size, config.seed, epoch):
            out = model(train.inputs[idx])
            loss = objective(out.logits, idx)
            grads = backward(loss, params)
            opt.step(grads)
            total += float(loss.data) * len(idx)
            count += len(idx)
        acc = accuracy(model, val, config.batch_size)
        if log.record(epoch, total / count, acc):
            best_state = model.state_dict()
            stale = 0
        else:
            stale += 1
        if log_cb is not None:
            log_cb(epoch, total / count, acc)
        if config.stop_at_accuracy is not None and acc >= config.stop_at_accuracy:
            break
        if config.patience is not None and stale >= config.patience:
            break
    model.load_state_dict(best_state)
    log.wall_time = time.perf_counter() - t0
    return best_state, log


# ----------------------------------------------------------------- step 1


def supervised_loss(logits: Tensor, y: np.ndarray) -> Tensor:
    return F.cross_entropy(y, F.softmax_t(logits))


def train_supervised(model, dataset: ArrayDataset, split: SplitAssignment, config: TrainConfig, log_cb=None):
    """Hard-label training with model selection on validation accuracy."""
    train, val = dataset.split(split, "train"), dataset.split(split, "val")
    classes = model.spec.classes
    y = one_hot(train.labels, classes)
    return _fit(model, train, val, config, lambda z, idx: supervised_loss(z, y[idx]), log_cb)


# ----------------------------------------------------------------- step 2


def compute_soft_labels(teacher, dataset: ArrayDataset, temperature: float, input_scaling: bool = False,
                        batch_size: int = 32, teacher_id: str = "") -> SoftLabelSet:
    """Frozen teacher predictions; by default softmax(logits / T), or softmax(f(x / T)) with ``input_scaling``."""
    if not temperature > 0:
        raise ValueError("temperature must be > 0")
    if input_scaling:
        logits = predict_logits(teacher, (dataset.inputs / temperature).astype(dataset.inputs.dtype), batch_size)
        probs = F.softmax_t(Tensor(logits), 1.0).data
    else:
        logits = predict_logits(teacher, dataset.inputs, batch_size)
        probs = F.softmax_t(Tensor(logits), temperature).data
    return SoftLabelSet(dataset.ids, probs, temperature, teacher_id)


def aggregate_soft_labels(soft: SoftLabelSet, dataset: ArrayDataset) -> SoftLabelSet:
    """Soft labels for multi-second student samples: mean of the teacher rows of their 1 s records."""
    if not dataset.members:
        raise ValueError("dataset carries no record membership")
    rows = []
    for sid, members in zip(dataset.ids, dataset.members):
        missing = [m for m in members if m not in soft]
        if missing:
            raise KeyError(f"sample {int(sid)}: teacher has no prediction for record id {int(missing[0])}")
        r = soft.rows_for(members).mean(axis=0)
        rows.append(r / r.sum())
    return SoftLabelSet(dataset.ids, np.array(rows), soft.temperature, soft.teacher_id)


# ----------------------------------------------------------------- step 3


def distillation_loss(student_logits: Tensor, y, s, lam: float, temperature: float = 1.0,
                      temper_student: bool = False) -> Tensor:
    if not 0.0 <= lam <= 1.0:
        raise ValueError("lambda must lie in [0, 1]")
    if not temperature > 0:
        raise ValueError("temperature must be > 0")
    p = F.softmax_t(student_logits, 1.0)
    hard = F.cross_entropy(y, p)
    if temper_student:
        soft = F.cross_entropy(s, F.softmax_t(student_logits, temperature)) * (temperature ** 2)
    else:
        soft = F.cross_entropy(s, p)
    return hard * (1.0 - lam) + soft * lam


def distill_student(student, teacher_soft: SoftLabelSet, dataset: ArrayDataset, split: SplitAssignment,
                    config: DistillationConfig, log_cb=None):
    """Train on (inputs, y, s) only. Every training id must have a soft label."""
    if dataset.kind == "acoustic":
        raise ValueError("students consume single-microphone inputs, not acoustic images")
    train, val = dataset.split(split, "train"), dataset.split(split, "val")
    missing = [int(i) for i in train.ids if i not in teacher_soft]
    if missing:
        raise KeyError(f"{len(missing)} training samples lack soft labels (first id {missing[0]})")
    classes = student.spec.classes
    if teacher_soft.probs.shape[1] != classes:
        raise ValueError(f"soft labels have {teacher_soft.probs.shape[1]} classes, student has {classes}")
    y = one_hot(train.labels, classes)
    s = teacher_soft.rows_for(train.ids)

    def objective(z, idx):
        return distillation_loss(z, y[idx], s[idx], config.lam, config.temperature, config.temper_student)

    return _fit(student, train, val, config, objective, log_cb)


# ------------------------------------------------------------ grid search


@dataclass
class GridResult:
    best: DistillationConfig
    best_accuracy: float
    runs: list  # (config, val accuracy, log)


def _tie_key(cfg: DistillationConfig, acc: float):
    return (-acc, cfg.temperature, abs(cfg.lam - 0.5), cfg.learning_rate)


def hyperparameter_grid(lams: Sequence[float], temperatures: Sequence[float], learning_rates: Sequence[float],
                        run: Callable[[DistillationConfig], tuple[float, TrainingLog]],
                        base: DistillationConfig | None = None, budget: int | None = None) -> GridResult:
    """Exhaustive search; ties go to smaller T, then lambda closer to 0.5, then smaller lr."""
    base = base or DistillationConfig()
    grid = [replace(base, lam=l, temperature=t, learning_rate=r)
            for l, t, r in itertools.product(lams, temperatures, learning_rates)]
    if not grid:
        raise ValueError("empty hyperparameter grid")
    if budget is not None:
        grid = grid[:budget]
    runs = []
    for cfg in grid:
        acc, log = run(cfg)
        runs.append((cfg, float(acc), log))
    best_cfg, best_acc, _ = min(runs, key=lambda r: _tie_key(r[0], r[1]))
    return GridResult(best_cfg, best_acc, runs)
