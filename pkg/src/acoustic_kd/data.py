"""In-memory array datasets built from feature records."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .features import (SPEC_RATE, FeatureRecord, SplitAssignment, TakeInfo, group_by_take, sample_sequence,
                       spectrogram, upsample)


@dataclass
class ArrayDataset:
    inputs: np.ndarray  # (n, ...) model input
    labels: np.ndarray  # (n,) int
    ids: np.ndarray  # (n,) uint64 record or sample ids
    scenarios: np.ndarray  # (n,)
    takes: np.ndarray  # (n,)
    kind: str = "acoustic"
    members: list = field(default_factory=list)  # per sample, the 1 s record ids it spans

    def __len__(self) -> int:
        return len(self.labels)

    def take_infos(self) -> list[TakeInfo]:
        seen = {}
        for t, y, s in zip(self.takes, self.labels, self.scenarios):
            seen.setdefault(int(t), TakeInfo(int(t), int(y), int(s)))
        return [seen[k] for k in sorted(seen)]

    def select(self, mask: np.ndarray) -> "ArrayDataset":
        idx = np.flatnonzero(mask)
        return ArrayDataset(self.inputs[idx], self.labels[idx], self.ids[idx], self.scenarios[idx],
                            self.takes[idx], self.kind, [self.members[i] for i in idx] if self.members else [])

    def by_takes(self, takes: Iterable[int]) -> "ArrayDataset":
        return self.select(np.isin(self.takes, np.fromiter(takes, dtype=np.int64)))

    def by_scenario(self, scenario: int) -> "ArrayDataset":
        return self.select(self.scenarios == scenario)

    def split(self, split: SplitAssignment, name: str) -> "ArrayDataset":
        return self.by_takes(getattr(split, name))


def teacher_dataset(records: Sequence[FeatureRecord]) -> ArrayDataset:
    """1 s records with acoustic MFCC volumes as inputs."""
    if not records:
        raise ValueError("no records")
    return ArrayDataset(
        inputs=np.stack([r.acoustic for r in records]).astype(np.float32),
        labels=np.array([r.label for r in records], dtype=np.int64),
        ids=np.array([r.record_id for r in records], dtype=np.uint64),
        scenarios=np.array([r.scenario_id for r in records], dtype=np.int64),
        takes=np.array([r.take_id for r in records], dtype=np.int64),
        kind="acoustic",
        members=[(r.record_id,) for r in records],
    )


def student_input(waveform: np.ndarray, kind: str, source_rate: int) -> np.ndarray:
    if kind == "spectrogram":
        return spectrogram(waveform, source_rate).values.astype(np.float32)
    if kind == "waveform":
        return upsample(waveform, source_rate, SPEC_RATE).astype(np.float32)
    raise ValueError(f"unknown student input kind {kind!r}")


def student_dataset(records: Sequence[FeatureRecord], kind: str = "spectrogram", length_s: int = 5,
                    seed: int = 0, source_rate: int = 12000) -> ArrayDataset:
    """Seeded ``length_s``-second crops of each take, as single-microphone inputs only."""
    xs, labels, ids, scen, takes, members = [], [], [], [], [], []
    for take, recs in sorted(group_by_take(records).items()):
        if len(recs) < length_s:
            continue
        for s in sample_sequence(recs, length_s, seed):
            xs.append(student_input(s.waveform, kind, source_rate))
            labels.append(s.label)
            ids.append(s.sample_id)
            scen.append(s.scenario_id)
            takes.append(s.take_id)
            members.append(s.record_ids)
    if not xs:
        raise ValueError(f"no take is at least {length_s} s long")
    return ArrayDataset(np.stack(xs), np.array(labels, dtype=np.int64), np.array(ids, dtype=np.uint64),
                        np.array(scen, dtype=np.int64), np.array(takes, dtype=np.int64), kind, members)


def one_hot(labels: np.ndarray, classes: int) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.size and (labels.min() < 0 or labels.max() >= classes):
        raise ValueError(f"labels outside [0, {classes})")
    out = np.zeros((len(labels), classes))
    out[np.arange(len(labels)), labels] = 1.0
    return out
