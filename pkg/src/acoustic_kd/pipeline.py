"""Glue between stages: recordings -> acoustic images -> feature records."""
from __future__ import annotations

from pathlib import Path
from typing import Iterable

import numpy as np

from .beamformer import FRAME_RATE, SteeringGrid, beamform, build_steering_grid
from .features import FeatureRecord, MfccVolume, chunk_records, mfcc_compress
from .formats import RecordWriter, read_records
from .micarray import DatasetSpec, MicArrayRecording, build_default_geometry, iter_dataset


def featurize_recording(rec: MicArrayRecording, grid: SteeringGrid | None, mic_index: int = 0) -> list[FeatureRecord]:
    """Beamform, MFCC-compress and cut into 1 s records. Without a grid (single-mic renders)
    the acoustic tensor is an empty placeholder of shape (0, 0, 0, 0)."""
    if grid is None:
        n_frames = int(round(rec.samples.shape[1] / rec.sample_rate * FRAME_RATE))
        vol = MfccVolume(np.zeros((n_frames, 0, 0, 0), dtype=np.float32))
    else:
        vol = mfcc_compress(beamform(rec, grid))
    return chunk_records(rec, vol, mic_index=mic_index)


def featurize_dataset(recordings: Iterable[MicArrayRecording], out_path, grid: SteeringGrid | None,
                      progress=None) -> int:
    """Stream records for every recording into one AIR1 file; returns the record count."""
    with RecordWriter(out_path) as w:
        for i, rec in enumerate(recordings):
            for r in featurize_recording(rec, grid):
                w.append(r)
            if progress is not None:
                progress(i, rec)
        return w.count


def build_records(spec: DatasetSpec, path, acoustic: bool = True, progress=None) -> list[FeatureRecord]:
    """Render + featurize ``spec`` into ``path`` unless it already exists, then load it."""
    path = Path(path)
    if not path.exists():
        tmp = path.with_suffix(path.suffix + ".partial")
        if acoustic:
            geom = build_default_geometry(spec.geometry_seed)
            grid = build_steering_grid(geom, *spec.fov)
            featurize_dataset(iter_dataset(spec), tmp, grid, progress)
        else:
            featurize_dataset(iter_dataset(spec, mics=[0]), tmp, None, progress)
        tmp.replace(path)
    return read_records(path)
