"""Model-ready features: per-pixel MFCC volumes, single-mic spectrograms,
1-second synchronized records and take-level splits."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.fft import dct
from scipy.signal import get_window, resample_poly

from .beamformer import AcousticImageVolume
from .micarray import MicArrayRecording

N_MFCC = 12
N_MELS = 32
LOG_FLOOR = 1e-10
SPEC_RATE = 22000
SPEC_WINDOW = 440  # 20 ms at 22 kHz
SPEC_HOP = 220
SPEC_NFFT = 512
SPEC_SECONDS = 5


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=float) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=float) / 2595.0) - 1.0)


def mel_filterbank(bin_frequencies: np.ndarray, n_mels: int = N_MELS, fmin: float = 0.0, fmax: float | None = None) -> np.ndarray:
    """Triangular filters (n_mels, K), each normalised to unit sum."""
    if n_mels <= 0:
        raise ValueError("n_mels must be positive")
    f = np.asarray(bin_frequencies, dtype=float)
    fmax = float(f[-1]) if fmax is None else fmax
    edges = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2))
    lo, mid, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    up = (f[None, :] - lo) / (mid - lo)
    down = (hi - f[None, :]) / (hi - mid)
    fb = np.clip(np.minimum(up, down), 0.0, None)
    sums = fb.sum(axis=1, keepdims=True)
    if np.any(sums == 0):
        raise ValueError(f"{n_mels} mel filters are too narrow for the bin spacing")
    return fb / sums


@dataclass
class MfccVolume:
    frames: np.ndarray  # (T, H, W, n_coeffs)
    coefficient_count: int = N_MFCC
    mel_filter_count: int = N_MELS


def mfcc_compress(volume: AcousticImageVolume, n_mels: int = N_MELS, n_coeffs: int = N_MFCC) -> MfccVolume:
    """Per-pixel cepstral compression of the spectral axis: mel -> log -> DCT-II."""
    k = volume.frames.shape[-1]
    if n_mels <= 0:
        raise ValueError("n_mels must be positive")
    if not n_coeffs <= n_mels <= k:
        raise ValueError(f"need n_coeffs <= n_mels <= bins, got {n_coeffs}, {n_mels}, {k}")
    fb = mel_filterbank(volume.bin_frequencies, n_mels)
    lead = volume.frames.shape[:-1]
    energies = volume.frames.reshape(-1, k).astype(np.float64) @ fb.T
    logmel = np.log(np.maximum(energies, LOG_FLOOR))
    coeffs = dct(logmel, type=2, norm="ortho", axis=-1)[:, :n_coeffs]
    return MfccVolume(coeffs.reshape(lead + (n_coeffs,)), n_coeffs, n_mels)


@dataclass
class Spectrogram:
    values: np.ndarray  # (frames, bins) magnitudes
    window_s: float = SPEC_WINDOW / SPEC_RATE
    sample_rate: int = SPEC_RATE


def upsample(waveform: np.ndarray, source_rate: int, target_rate: int = SPEC_RATE) -> np.ndarray:
    """Windowed-sinc polyphase rate conversion."""
    g = math.gcd(int(target_rate), int(source_rate))
    return resample_poly(np.asarray(waveform, dtype=np.float64), target_rate // g, source_rate // g, axis=-1)


def spectrogram(waveform: np.ndarray, source_rate: int = 12000, log_compress: bool = False,
                seconds: int = SPEC_SECONDS) -> Spectrogram:
    """Amplitude STFT of a 5 s clip at 22 kHz: 20 ms Hann, 10 ms hop, 512-point FFT."""
    x = np.asarray(waveform, dtype=np.float64)
    if x.ndim != 1 or len(x) != seconds * source_rate:
        raise ValueError(f"expected {seconds} s of mono audio at {source_rate} Hz ({seconds * source_rate} samples), got shape {x.shape}")
    y = upsample(x, source_rate)
    half = SPEC_HOP // 2
    y = np.pad(y, (half, half))
    n_frames = (len(y) - SPEC_WINDOW) // SPEC_HOP + 1
    frames = np.lib.stride_tricks.sliding_window_view(y, SPEC_WINDOW)[::SPEC_HOP][:n_frames]
    mag = np.abs(np.fft.rfft(frames * get_window("hann", SPEC_WINDOW), n=SPEC_NFFT, axis=-1))
    if log_compress:
        mag = np.log(mag + 1e-6)
    return Spectrogram(mag)


# ----------------------------------------------------------------- records


@dataclass
class FeatureRecord:
    waveform: np.ndarray  # (12000,) float32
    acoustic: np.ndarray  # (12, 36, 48, 12) float32
    label: int
    scenario_id: int
    subject_id: int
    take_id: int
    chunk_index: int

    @property
    def record_id(self) -> int:
        return (int(self.take_id) << 16) | int(self.chunk_index)


def chunk_records(recording: MicArrayRecording, volume: MfccVolume, mic_index: int = 0,
                  frame_rate: int = 12) -> list[FeatureRecord]:
    """One record per whole second; trailing partial seconds are dropped."""
    fs = recording.sample_rate
    n = recording.samples.shape[1]
    t = volume.frames.shape[0]
    expected = n / fs * frame_rate
    if abs(t - expected) > 1 + 1e-9:
        raise ValueError(f"acoustic volume has {t} frames, recording implies {expected:.2f}")
    channels = recording.metadata.get("mics")
    row = channels.index(mic_index) if channels is not None else mic_index
    wave = recording.samples[row]
    out = []
    for i in range(n // fs):
        if (i + 1) * frame_rate > t:
            break
        out.append(FeatureRecord(
            waveform=np.asarray(wave[i * fs:(i + 1) * fs], dtype=np.float32),
            acoustic=np.asarray(volume.frames[i * frame_rate:(i + 1) * frame_rate], dtype=np.float32),
            label=recording.label, scenario_id=recording.scenario_id,
            subject_id=recording.subject_id, take_id=recording.take_id, chunk_index=i,
        ))
    return out


@dataclass
class SequenceSample:
    take_id: int
    start: int  # first chunk index
    length: int  # seconds
    label: int
    scenario_id: int
    subject_id: int
    waveform: np.ndarray  # (length * rate,)
    acoustic: np.ndarray | None  # (length * 12, 36, 48, 12) or None
    record_ids: tuple[int, ...] = field(default=())

    @property
    def sample_id(self) -> int:
        return (int(self.take_id) << 16) | int(self.start)


def sample_sequence(records: Sequence[FeatureRecord], length_s: int, seed: int,
                    count: int | None = None, with_acoustic: bool = False) -> list[SequenceSample]:
    """Seeded crops of ``length_s`` contiguous seconds from one take.

    By default ``take_length // length_s`` distinct start offsets are drawn,
    e.g. 30 one-second or 6 five-second samples from a 30 s take.
    """
    if not records:
        raise ValueError("no records to sample from")
    take = records[0].take_id
    idx = [r.chunk_index for r in records]
    if any(r.take_id != take for r in records) or idx != list(range(idx[0], idx[0] + len(idx))):
        raise ValueError("records must be the contiguous chunks of a single take")
    total = len(records)
    if length_s < 1 or length_s > total:
        raise ValueError(f"requested {length_s} s from a {total} s take")
    n_starts = total - length_s + 1
    count = total // length_s if count is None else min(count, n_starts)
    rng = np.random.default_rng([int(seed), int(take)])
    starts = np.sort(rng.choice(n_starts, size=count, replace=False))
    out = []
    for s in starts:
        chunk = records[s:s + length_s]
        out.append(SequenceSample(
            take_id=take, start=chunk[0].chunk_index, length=length_s,
            label=chunk[0].label, scenario_id=chunk[0].scenario_id, subject_id=chunk[0].subject_id,
            waveform=np.concatenate([r.waveform for r in chunk]),
            acoustic=np.concatenate([r.acoustic for r in chunk]) if with_acoustic else None,
            record_ids=tuple(r.record_id for r in chunk),
        ))
    return out


def group_by_take(records: Iterable[FeatureRecord]) -> dict[int, list[FeatureRecord]]:
    takes: dict[int, list[FeatureRecord]] = {}
    for r in records:
        takes.setdefault(r.take_id, []).append(r)
    for v in takes.values():
        v.sort(key=lambda r: r.chunk_index)
    return takes


# ------------------------------------------------------------------ splits


@dataclass(frozen=True)
class TakeInfo:
    take_id: int
    label: int
    scenario_id: int


@dataclass(frozen=True)
class SplitAssignment:
    train: frozenset
    val: frozenset
    test: frozenset
    fractions: tuple = (0.8, 0.1, 0.1)

    def split_of(self, take_id: int) -> str:
        for name in ("train", "val", "test"):
            if take_id in getattr(self, name):
                return name
        raise KeyError(take_id)

    def to_dict(self) -> dict:
        return {k: sorted(int(t) for t in getattr(self, k)) for k in ("train", "val", "test")}

    @classmethod
    def from_dict(cls, d: dict) -> "SplitAssignment":
        return cls(frozenset(d["train"]), frozenset(d["val"]), frozenset(d["test"]))


def controlled_round(ideal: np.ndarray, row_totals: np.ndarray, col_totals: np.ndarray) -> np.ndarray:
    """Round every entry of ``ideal`` to its floor or ceiling, keeping the given integer
    row and column totals (which must equal the ideal margins).

    The round-up pattern is a bipartite transportation problem; it is solved as
    a max-flow, which always has an integral solution here.
    """
    from scipy.sparse import csr_matrix
    from scipy.sparse.csgraph import maximum_flow

    ideal = np.asarray(ideal, dtype=float)
    base = np.floor(ideal + 1e-9).astype(int)
    frac = ideal - base
    r, c = ideal.shape
    need_r = np.asarray(row_totals, dtype=int) - base.sum(axis=1)
    need_c = np.asarray(col_totals, dtype=int) - base.sum(axis=0)
    if need_r.sum() == 0:
        return base
    # nodes: 0 source, 1..r rows, r+1..r+c cols, r+c+1 sink
    src, dst, cap = [], [], []
    for i in range(r):
        src.append(0), dst.append(1 + i), cap.append(int(need_r[i]))
        for j in range(c):
            if frac[i, j] > 1e-9:
                src.append(1 + i), dst.append(1 + r + j), cap.append(1)
    for j in range(c):
        src.append(1 + r + j), dst.append(1 + r + c), cap.append(int(need_c[j]))
    n = r + c + 2
    graph = csr_matrix((np.asarray(cap, dtype=np.int32), (src, dst)), shape=(n, n))
    flow = maximum_flow(graph, 0, n - 1)
    if flow.flow_value != need_r.sum():
        raise ValueError("inconsistent margins for controlled rounding")
    f = flow.flow.toarray()
    return base + f[1:1 + r, 1 + r:1 + r + c].astype(int)


def make_splits(takes: Sequence[TakeInfo], seed: int = 0, min_per_class: int = 10) -> SplitAssignment:
    """80/10/10 take-level split stratified by (class, scenario).

    Global sizes are floor(0.8 n) train, floor(0.1 n) test, remainder val.
    Those totals are apportioned to classes and then to each class's scenario
    strata by controlled rounding, so every class and every stratum gets the
    floor or ceiling of its exact share of each split. Takes within a stratum
    are assigned by a seeded permutation.
    """
    counts: dict[int, int] = {}
    for t in takes:
        counts[t.label] = counts.get(t.label, 0) + 1
    for label, c in sorted(counts.items()):
        if c < min_per_class:
            raise ValueError(f"class {label} has only {c} takes (need >= {min_per_class})")
    rng = np.random.default_rng(seed)
    n = len(takes)
    n_train, n_test = int(math.floor(0.8 * n)), int(math.floor(0.1 * n))
    totals = np.array([n_train, n - n_train - n_test, n_test])
    labels = sorted(counts)
    n_c = np.array([counts[c] for c in labels])
    per_class = controlled_round(np.outer(n_c, totals) / n, n_c, totals)
    names = ("train", "val", "test")
    out: dict[str, list] = {k: [] for k in names}
    for ci, label in enumerate(labels):
        strata: dict[int, list[int]] = {}
        for t in sorted(takes, key=lambda t: t.take_id):
            if t.label == label:
                strata.setdefault(t.scenario_id, []).append(t.take_id)
        keys = sorted(strata)
        n_s = np.array([len(strata[k]) for k in keys])
        alloc = controlled_round(np.outer(n_s, per_class[ci]) / n_c[ci], n_s, per_class[ci])
        for si, key in enumerate(keys):
            ids = [strata[key][i] for i in rng.permutation(len(strata[key]))]
            edges = np.concatenate([[0], np.cumsum(alloc[si])])
            for k, name in enumerate(names):
                out[name].extend(ids[edges[k]:edges[k + 1]])
    return SplitAssignment(frozenset(out["train"]), frozenset(out["val"]), frozenset(out["test"]))
