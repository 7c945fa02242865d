"""Frequency-domain filter-and-sum beamforming into multispectral acoustic images."""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.signal import get_window

from .micarray import ArrayGeometry, MicArrayRecording

GRID_HEIGHT = 36
GRID_WIDTH = 48
FRAME_RATE = 12
FFT_SIZE = 1024
HEATMAP_BAND = (900.0, 6400.0)
# resynchronise the per-bin phase recurrence with a direct evaluation this often
_RESYNC_EVERY = 32


@dataclass(frozen=True)
class SteeringGrid:
    directions: np.ndarray  # (H, W, 3) unit vectors
    delays: np.ndarray  # (H*W, M) seconds; arrival delay of each mic relative to the origin
    fov_h: float
    fov_v: float
    focus_range: float
    geometry_key: bytes

    @property
    def height(self) -> int:
        return self.directions.shape[0]

    @property
    def width(self) -> int:
        return self.directions.shape[1]

    def pixel_of(self, position) -> tuple[int, int]:
        """Nearest pixel of a scene point under the grid's pinhole mapping."""
        x, y, z = position
        sx = 2 * math.tan(math.radians(self.fov_h / 2)) / self.width
        sy = 2 * math.tan(math.radians(self.fov_v / 2)) / self.height
        col = int(round(self.width / 2 + (x / z) / sx))
        row = int(round(self.height / 2 - (y / z) / sy))
        return row, col


def build_steering_grid(
    geometry: ArrayGeometry,
    fov_h: float = 64.0,
    fov_v: float = 48.0,
    focus_range: float = math.inf,
    height: int = GRID_HEIGHT,
    width: int = GRID_WIDTH,
) -> SteeringGrid:
    """Pinhole-camera grid of look directions; pixel (H/2, W/2) is broadside."""
    if not (0 < fov_h <= 180 and 0 < fov_v <= 180):
        raise ValueError("field of view must lie in (0, 180] degrees")
    sx = 2 * math.tan(math.radians(min(fov_h, 179.999) / 2)) / width
    sy = 2 * math.tan(math.radians(min(fov_v, 179.999) / 2)) / height
    cols = (np.arange(width) - width / 2) * sx
    rows = (height / 2 - np.arange(height)) * sy
    xx, yy = np.meshgrid(cols, rows)
    d = np.stack([xx, yy, np.ones_like(xx)], axis=-1)
    d /= np.linalg.norm(d, axis=-1, keepdims=True)
    mics = geometry.mic_positions
    u = d.reshape(-1, 3)
    c = geometry.sound_speed
    if math.isinf(focus_range):
        delays = -(u @ mics.T) / c
    else:
        focal = focus_range * u
        dist = np.linalg.norm(focal[:, None, :] - mics[None, :, :], axis=-1)
        delays = (dist - focus_range) / c
    return SteeringGrid(d, delays, fov_h, fov_v, focus_range, geometry.fingerprint())


@dataclass
class AcousticImageVolume:
    frames: np.ndarray  # (T, H, W, K) energies >= 0
    frame_rate: float
    bin_frequencies: np.ndarray  # (K,) Hz

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]


def frame_spectra(recording: MicArrayRecording, frame_rate: float = FRAME_RATE, fft_size: int = FFT_SIZE):
    """Hann-windowed, zero-padded, non-overlapping frame spectra without the DC bin.

    Returns (spectra (M, T, K) complex, bin frequencies (K,)).
    """
    fs = recording.sample_rate
    spf = int(round(fs / frame_rate))
    if fft_size < spf:
        raise ValueError(f"fft_size {fft_size} shorter than a frame of {spf} samples")
    x = np.asarray(recording.samples, dtype=np.float64)
    m, n = x.shape
    t = int(math.ceil(n / spf - 1e-9))
    if t * spf > n:
        x = np.pad(x, ((0, 0), (0, t * spf - n)))
    frames = x.reshape(m, t, spf) * get_window("hann", spf)[None, None, :]
    spec = np.fft.rfft(frames, n=fft_size, axis=-1)[..., 1:]
    freqs = np.arange(1, fft_size // 2 + 1) * fs / fft_size
    return spec, freqs


def beamform(
    recording: MicArrayRecording,
    grid: SteeringGrid,
    frame_rate: float = FRAME_RATE,
    fft_size: int = FFT_SIZE,
) -> AcousticImageVolume:
    """Band energy B(p, f) = |mean_m X_m(f) exp(+j 2 pi f tau_m(p))|^2 per frame."""
    if recording.geometry.fingerprint() != grid.geometry_key or recording.samples.shape[0] != grid.delays.shape[1]:
        raise ValueError("recording geometry does not match the steering grid")
    spec, freqs = frame_spectra(recording, frame_rate, fft_size)
    m, t, k = spec.shape
    p = grid.delays.shape[0]
    spec = np.ascontiguousarray(spec.transpose(2, 0, 1), dtype=np.complex64)  # (K, M, T)
    tau = grid.delays
    df = recording.sample_rate / fft_size
    step = np.exp(2j * np.pi * df * tau).astype(np.complex64)
    out = np.empty((k, p, t), dtype=np.float32)
    phase = step.copy()
    for b in range(k):
        if b and b % _RESYNC_EVERY == 0:
            phase = np.exp(2j * np.pi * freqs[b] * tau).astype(np.complex64)
        y = phase @ spec[b]
        y *= np.float32(1.0 / m)
        out[b] = y.real**2 + y.imag**2
        phase *= step
    frames = np.ascontiguousarray(out.transpose(2, 1, 0)).reshape(t, grid.height, grid.width, k)
    return AcousticImageVolume(frames, frame_rate, freqs)


@dataclass
class HeatmapImage:
    pixels: np.ndarray  # (H, W)
    band: tuple[float, float]
    argmax_pixel: tuple[int, int]


def render_heatmap(volume: AcousticImageVolume, frame: int, band=HEATMAP_BAND) -> HeatmapImage:
    """Sum bin energies within ``band`` (clipped to the available bins)."""
    if not 0 <= frame < volume.n_frames:
        raise IndexError(f"frame {frame} outside [0, {volume.n_frames})")
    f = volume.bin_frequencies
    lo, hi = float(band[0]), float(band[1])
    sel = (f >= lo) & (f <= hi)
    if not sel.any():
        raise ValueError(f"band {band} Hz does not intersect bins [{f[0]:.1f}, {f[-1]:.1f}] Hz")
    pix = volume.frames[frame][..., sel].sum(axis=-1, dtype=np.float64)
    clipped = (max(lo, float(f[sel][0])), min(hi, float(f[sel][-1])))
    r, c = np.unravel_index(int(np.argmax(pix)), pix.shape)
    return HeatmapImage(pix, clipped, (int(r), int(c)))


def heat_colormap(v: np.ndarray) -> np.ndarray:
    """Black-red-yellow-white ramp for values in [0, 1]; returns uint8 RGB."""
    v = np.clip(v, 0.0, 1.0)
    rgb = np.stack([np.clip(3 * v, 0, 1), np.clip(3 * v - 1, 0, 1), np.clip(3 * v - 2, 0, 1)], axis=-1)
    return (rgb * 255).round().astype(np.uint8)


def export_heatmap_png(img: HeatmapImage, path, video_frame: np.ndarray | None = None, alpha: float = 0.5) -> Path:
    from PIL import Image

    path = Path(path)
    pix = img.pixels
    span = pix.max() - pix.min()
    norm = (pix - pix.min()) / span if span > 0 else np.zeros_like(pix)
    rgb = heat_colormap(norm)
    if video_frame is not None:
        bg = np.asarray(video_frame)
        if bg.ndim != 3 or bg.shape[2] != 3:
            raise ValueError("video_frame must be an (H, W, 3) RGB image")
        rows = (np.arange(bg.shape[0]) * pix.shape[0]) // bg.shape[0]
        cols = (np.arange(bg.shape[1]) * pix.shape[1]) // bg.shape[1]
        up = rgb[rows][:, cols].astype(np.float64)
        rgb = np.clip((1 - alpha) * bg.astype(np.float64) + alpha * up, 0, 255).round().astype(np.uint8)
    try:
        Image.fromarray(rgb).save(path)
    except (OSError, KeyError, ValueError) as exc:
        raise OSError(f"failed to write heatmap to {path}: {exc}") from exc
    return path
