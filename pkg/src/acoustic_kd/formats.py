"""On-disk formats.

AIR1  feature records (waveform + acoustic tensor per 1 s chunk)
ASL1  frozen teacher soft labels
AIP1  parameter checkpoints
plus multichannel float32 WAV recordings with a JSON sidecar.

All binary formats are little-endian.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Iterator, Mapping

import numpy as np
from scipy.io import wavfile

from .features import FeatureRecord
from .micarray import ArrayGeometry, MicArrayRecording

AIR_MAGIC = b"AIR1"
ASL_MAGIC = b"ASL1"
AIP_MAGIC = b"AIP1"
VERSION = 1

_AIR_HEADER = struct.Struct("<4sHI")
_AIR_META = struct.Struct("<HBHIH")


class FormatError(ValueError):
    pass


class RecordWriter:
    """Single-writer appender; the record count in the header is fixed up on close."""

    def __init__(self, path):
        self.path = Path(path)
        self._fh = open(self.path, "wb")
        self._fh.write(_AIR_HEADER.pack(AIR_MAGIC, VERSION, 0))
        self.count = 0

    def append(self, rec: FeatureRecord) -> None:
        wave = np.ascontiguousarray(rec.waveform, dtype="<f4")
        acou = np.ascontiguousarray(rec.acoustic, dtype="<f4")
        if acou.ndim != 4 or max(acou.shape) > 0xFFFF:
            raise FormatError("acoustic tensor must be rank 4 with extents < 65536")
        fh = self._fh
        fh.write(_AIR_META.pack(rec.label, rec.scenario_id, rec.subject_id, rec.take_id, rec.chunk_index))
        fh.write(struct.pack("<I", wave.size))
        fh.write(wave.tobytes())
        fh.write(struct.pack("<4H", *acou.shape))
        fh.write(acou.tobytes())
        self.count += 1

    def close(self) -> None:
        if self._fh.closed:
            return
        self._fh.seek(0)
        self._fh.write(_AIR_HEADER.pack(AIR_MAGIC, VERSION, self.count))
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def write_records(path, records) -> int:
    with RecordWriter(path) as w:
        for r in records:
            w.append(r)
        return w.count


def _read_exact(fh, n: int, path) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise FormatError(f"{path}: truncated record data")
    return buf


def iter_records(path) -> Iterator[FeatureRecord]:
    path = Path(path)
    with open(path, "rb") as fh:
        magic, version, count = _AIR_HEADER.unpack(_read_exact(fh, _AIR_HEADER.size, path))
        if magic != AIR_MAGIC:
            raise FormatError(f"{path}: not an AIR1 file")
        if version != VERSION:
            raise FormatError(f"{path}: unsupported AIR1 version {version}")
        for _ in range(count):
            label, scen, subj, take, chunk = _AIR_META.unpack(_read_exact(fh, _AIR_META.size, path))
            (n,) = struct.unpack("<I", _read_exact(fh, 4, path))
            wave = np.frombuffer(_read_exact(fh, 4 * n, path), dtype="<f4")
            dims = struct.unpack("<4H", _read_exact(fh, 8, path))
            size = int(np.prod(dims))
            acou = np.frombuffer(_read_exact(fh, 4 * size, path), dtype="<f4").reshape(dims)
            yield FeatureRecord(wave.astype(np.float32), acou.astype(np.float32), label, scen, subj, take, chunk)


def read_records(path) -> list[FeatureRecord]:
    return list(iter_records(path))


def record_index(path) -> list[tuple[int, int]]:
    """(record_id, byte offset) for every record, rebuilt by scanning the file."""
    path = Path(path)
    out = []
    with open(path, "rb") as fh:
        magic, _, count = _AIR_HEADER.unpack(_read_exact(fh, _AIR_HEADER.size, path))
        if magic != AIR_MAGIC:
            raise FormatError(f"{path}: not an AIR1 file")
        for _ in range(count):
            off = fh.tell()
            _, _, _, take, chunk = _AIR_META.unpack(_read_exact(fh, _AIR_META.size, path))
            (n,) = struct.unpack("<I", _read_exact(fh, 4, path))
            fh.seek(4 * n, 1)
            dims = struct.unpack("<4H", _read_exact(fh, 8, path))
            fh.seek(4 * int(np.prod(dims)), 1)
            out.append(((take << 16) | chunk, off))
    return out


# ------------------------------------------------------------- soft labels


def write_soft_labels(path, ids, rows) -> None:
    rows = np.ascontiguousarray(rows, dtype="<f4")
    ids = np.asarray(ids, dtype="<u8")
    if rows.ndim != 2 or len(ids) != len(rows):
        raise FormatError("soft labels must be (count, C) with one id per row")
    with open(path, "wb") as fh:
        fh.write(ASL_MAGIC)
        fh.write(struct.pack("<II", rows.shape[1], rows.shape[0]))
        for i, row in zip(ids, rows):
            fh.write(struct.pack("<Q", int(i)))
            fh.write(row.tobytes())


def read_soft_labels(path) -> tuple[np.ndarray, np.ndarray]:
    path = Path(path)
    data = path.read_bytes()
    if data[:4] != ASL_MAGIC:
        raise FormatError(f"{path}: not an ASL1 file")
    c, count = struct.unpack_from("<II", data, 4)
    rec = np.dtype([("id", "<u8"), ("p", "<f4", (c,))])
    if len(data) != 12 + count * rec.itemsize:
        raise FormatError(f"{path}: size does not match header")
    arr = np.frombuffer(data, dtype=rec, count=count, offset=12)
    return arr["id"].copy(), arr["p"].astype(np.float32)


# -------------------------------------------------------------- checkpoints


def write_checkpoint(path, params: Mapping[str, np.ndarray]) -> None:
    with open(path, "wb") as fh:
        fh.write(AIP_MAGIC)
        fh.write(struct.pack("<HI", VERSION, len(params)))
        for name, value in params.items():
            arr = np.asarray(value, dtype="<f8")  # keeps rank 0; tobytes() is C order
            raw = name.encode("utf-8")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<B", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.tobytes())


def read_checkpoint(path) -> dict[str, np.ndarray]:
    path = Path(path)
    with open(path, "rb") as fh:
        if fh.read(4) != AIP_MAGIC:
            raise FormatError(f"{path}: not an AIP1 file")
        _, count = struct.unpack("<HI", _read_exact(fh, 6, path))
        out = {}
        for _ in range(count):
            (n,) = struct.unpack("<H", _read_exact(fh, 2, path))
            name = _read_exact(fh, n, path).decode("utf-8")
            (rank,) = struct.unpack("<B", _read_exact(fh, 1, path))
            dims = struct.unpack(f"<{rank}I", _read_exact(fh, 4 * rank, path))
            size = int(np.prod(dims)) if rank else 1
            flat = np.frombuffer(_read_exact(fh, 8 * size, path), dtype="<f8")
            out[name] = np.reshape(flat, tuple(dims)).copy()
    return out


# -------------------------------------------------------------- recordings


def write_recording(path, rec: MicArrayRecording) -> tuple[Path, Path]:
    """Multichannel IEEE-float WAV plus ``<name>.json`` sidecar."""
    path = Path(path)
    wavfile.write(path, rec.sample_rate, np.ascontiguousarray(rec.samples.T, dtype="<f4"))
    meta = {
        "sample_rate": rec.sample_rate,
        "label": rec.label,
        "scenario_id": rec.scenario_id,
        "subject_id": rec.subject_id,
        "take_id": rec.take_id,
        "mic_positions": rec.geometry.mic_positions.tolist(),
        "aperture": [rec.geometry.aperture_width, rec.geometry.aperture_height],
        "sound_speed": rec.geometry.sound_speed,
        "metadata": rec.metadata,
    }
    side = path.with_suffix(".json")
    side.write_text(json.dumps(meta, sort_keys=True, indent=1))
    return path, side


def read_recording(path) -> MicArrayRecording:
    path = Path(path)
    meta = json.loads(path.with_suffix(".json").read_text())
    rate, data = wavfile.read(path)
    geom = ArrayGeometry(np.asarray(meta["mic_positions"]), *meta["aperture"], meta["sound_speed"])
    samples = np.ascontiguousarray(np.asarray(data, dtype=np.float32).reshape(len(data), -1).T)
    return MicArrayRecording(samples, int(rate), geom, meta["label"], meta["scenario_id"],
                             meta["subject_id"], meta["take_id"], meta["metadata"])
