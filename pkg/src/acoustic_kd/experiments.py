"""Desk-scale experiments shared by scripts/ and the acceptance tests.

Data are rendered once and cached as AIR1 files under ``cache_dir()``
(override with ``ACOUSTIC_KD_CACHE``).
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import ArrayDataset, student_dataset, teacher_dataset
from .distill import (DistillationConfig, TrainConfig, accuracy, aggregate_soft_labels, compute_soft_labels,
                      distill_student, train_supervised)
from .evaluation import evaluate_cross_scenario, evaluate_feature_matrix, transfer_evaluate, transfer_split
from .features import make_splits
from .micarray import DatasetSpec
from .models import ModelSpec, build_model
from .pipeline import build_records

DESK_SPEC = DatasetSpec()
TRANSFER_SPEC = DatasetSpec(classes=(6, 7, 8, 9), takes=6, master_seed=1)


def cache_dir() -> Path:
    d = Path(os.environ.get("ACOUSTIC_KD_CACHE", Path(__file__).resolve().parents[2] / ".cache"))
    d.mkdir(parents=True, exist_ok=True)
    return d


def desk_records(progress=None):
    return build_records(DESK_SPEC, cache_dir() / "desk_v1.air1", acoustic=True, progress=progress)


def transfer_records(progress=None):
    return build_records(TRANSFER_SPEC, cache_dir() / "transfer_v1.air1", acoustic=False, progress=progress)


@dataclass
class TeacherResult:
    model: object
    log: object
    test_accuracy: float
    split: object
    data: ArrayDataset


def desk_split(data: ArrayDataset, seed: int = 0):
    return make_splits(data.take_infos(), seed=seed)


def train_desk_teacher(records, scenario: int = 1, width: float = 0.25, epochs: int = 100, seed: int = 0,
                       patience: int | None = 15, log_cb=None) -> TeacherResult:
    """DualCamNet-mini on one scenario's acoustic images, batch 32, Adam 1e-3."""
    full = teacher_dataset(records)
    split = desk_split(full)
    data = full.by_scenario(scenario)
    model = build_model(ModelSpec("dualcamnet", classes=6, width=width, seed=seed, dtype="float32"))
    cfg = TrainConfig(learning_rate=1e-3, epochs=epochs, batch_size=32, seed=seed, patience=patience)
    _, log = train_supervised(model, data, split, cfg, log_cb)
    test = data.split(split, "test")
    return TeacherResult(model, log, accuracy(model, test), split, data)


def select_desk_teacher(records, seeds=(0, 1, 2), log_cb=None, **kwargs):
    """Train one teacher per seed and keep the best by validation accuracy (ties -> first seed).
    Returns (best, all results in seed order); test accuracy plays no part in the choice."""
    results = []
    for seed in seeds:
        cb = (lambda e, l, a, s=seed: log_cb(s, e, l, a)) if log_cb is not None else None
        results.append(train_desk_teacher(records, seed=seed, log_cb=cb, **kwargs))
    best = max(results, key=lambda r: r.log.best_val_accuracy)  # max keeps the first of equals
    return best, results


@dataclass
class TrendResult:
    distilled: list = field(default_factory=list)  # scenario-1 -> scenario-3 accuracy per seed
    hard: list = field(default_factory=list)
    teacher_val: float = 0.0

    @property
    def differences(self) -> np.ndarray:
        return np.asarray(self.distilled) - np.asarray(self.hard)


def student_data(records, kind: str = "spectrogram", seed: int = 0) -> ArrayDataset:
    return student_dataset(records, kind, 5, seed=seed)


def train_students(teacher, records, split, seeds=(0, 1, 2, 3, 4), lam: float = 0.5, temperature: float = 1.0,
                   width: float = 0.25, epochs: int = 100, learning_rate: float = 1e-4, train_scenario: int = 1,
                   test_scenario: int = 3, patience: int | None = None, students_out: dict | None = None) -> TrendResult:
    """Hard-label vs distilled HearNet-mini per seed, scored on the cross-scenario cell."""
    sdata = student_data(records)
    tdata = teacher_dataset(records)
    tsub = tdata.by_scenario(train_scenario)
    soft = aggregate_soft_labels(compute_soft_labels(teacher, tsub, temperature), sdata.by_scenario(train_scenario))
    train_data = sdata.by_scenario(train_scenario)
    out = TrendResult()
    for seed in seeds:
        for lam_, bucket in ((0.0, out.hard), (lam, out.distilled)):
            model = build_model(ModelSpec("hearnet", classes=6, width=width, seed=seed, dtype="float32"))
            cfg = DistillationConfig(learning_rate=learning_rate, epochs=epochs, batch_size=32, seed=seed,
                                     patience=patience, lam=lam_, temperature=temperature)
            distill_student(model, soft, train_data, split, cfg)
            m = evaluate_cross_scenario({train_scenario: model}, sdata, split, rows=[train_scenario])
            bucket.append(m.cell(train_scenario, test_scenario))
            if students_out is not None:
                students_out[(seed, lam_)] = model
    return out


def transfer_sanity(students, trecords, seed: int = 0):
    """Penultimate-feature accuracy of each student vs raw-spectrogram-pixel k-NN."""
    data = student_data(trecords)
    split = transfer_split(data, seed)
    raw = evaluate_feature_matrix("raw/spectrogram", data.inputs.reshape(len(data), -1).astype(np.float64),
                                  data, split)
    reports = [transfer_evaluate(m, ("penultimate",), data, split, training_classes=DESK_SPEC.classes)[0]
               for m in students]
    return raw, reports
