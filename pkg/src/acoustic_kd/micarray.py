"""Synthetic multi-microphone scene generation.

Scenes are planar-array recordings of a single static sound-producing action
rendered under one of three acoustic presets (anechoic, reverberant indoor,
noisy outdoor). Everything here is a pure function of its inputs and seed.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np
from scipy import signal as sps

SOUND_SPEED = 343.0
DEFAULT_RATE = 12000
MAX_TAKE_SECONDS = 30.0
FRACTIONAL_TAPS = 16

CLASS_NAMES = (
    "clapping", "snapping_fingers", "speaking", "whistling", "playing_kendama",
    "clicking", "typing", "knocking", "hammering", "peanut_breaking",
    "paper_ripping", "plastic_crumpling", "paper_shaking", "stick_dropping",
)

FAMILIES = (
    "impulse-train", "harmonic-tone", "chirp", "broadband-burst", "AM-noise",
    "tonal-transient-composite",
)


@dataclass(frozen=True)
class ArrayGeometry:
    mic_positions: np.ndarray  # (M, 3) meters, z = 0
    aperture_width: float = 0.45
    aperture_height: float = 0.45
    sound_speed: float = SOUND_SPEED

    def __post_init__(self):
        pos = np.asarray(self.mic_positions, dtype=float)
        if pos.ndim != 2 or pos.shape[1] != 3 or pos.shape[0] < 2:
            raise ValueError("mic_positions must be an (M, 3) array with M >= 2")
        if np.any(np.abs(pos[:, 2]) > 0):
            raise ValueError("microphones must lie on the z=0 plane")
        if np.any(np.abs(pos[:, 0]) > self.aperture_width / 2 + 1e-12) or np.any(
            np.abs(pos[:, 1]) > self.aperture_height / 2 + 1e-12
        ):
            raise ValueError("microphone outside the aperture rectangle")
        if len(np.unique(pos, axis=0)) != len(pos):
            raise ValueError("duplicate microphone coordinates")
        object.__setattr__(self, "mic_positions", pos)

    @property
    def n_mics(self) -> int:
        return self.mic_positions.shape[0]

    def fingerprint(self) -> bytes:
        return np.ascontiguousarray(self.mic_positions, dtype="<f8").tobytes()


def build_default_geometry(
    seed: int = 7,
    n_mics: int = 128,
    aperture: float = 0.45,
    min_spacing: float = 0.025,
    max_attempts: int = 200_000,
) -> ArrayGeometry:
    """Aperiodic planar layout by seeded minimum-distance rejection sampling."""
    rng = np.random.default_rng(seed)
    half = aperture / 2
    placed = np.empty((0, 2))
    attempts = 0
    while len(placed) < n_mics:
        if attempts >= max_attempts:
            raise RuntimeError(
                f"placed only {len(placed)}/{n_mics} microphones after {max_attempts} "
                f"attempts; min_spacing={min_spacing} m is too large"
            )
        attempts += 1
        cand = rng.uniform(-half, half, size=2)
        if len(placed) and np.min(np.hypot(*(placed - cand).T)) < min_spacing:
            continue
        placed = np.vstack([placed, cand])
    pos = np.column_stack([placed, np.zeros(n_mics)])
    return ArrayGeometry(pos, aperture, aperture)


# ---------------------------------------------------------------- generators


@dataclass(frozen=True)
class ActionGenerator:
    class_id: int
    family: str
    params: dict = field(default_factory=dict)
    rng_seed: int = 0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown generator family {self.family!r}")
        if self.class_id < 0:
            raise ValueError("class_id must be nonnegative")

    def max_frequency(self) -> float:
        p = self.params
        freqs = [p.get("f0", 0.0), p.get("tone_hz", 0.0), p.get("f_start", 0.0), p.get("f_end", 0.0)]
        band = p.get("band")
        if band is not None:
            freqs.append(band[1])
        return float(max(freqs))


# Per-class templates: (family, params). Frequencies in Hz, times in seconds.
_TEMPLATES: dict[int, tuple[str, dict]] = {
    0: ("impulse-train", dict(period=0.30, decay=0.010, band=(700.0, 3500.0))),
    1: ("impulse-train", dict(period=0.55, decay=0.004, band=(1800.0, 5200.0))),
    2: ("harmonic-tone", dict(f0=210.0, harmonics=12, modulation_hz=4.0, formants=(700.0, 1300.0))),
    3: ("harmonic-tone", dict(f0=1700.0, harmonics=2, modulation_hz=0.0, vibrato_hz=5.0)),
    4: ("tonal-transient-composite", dict(period=0.45, decay=0.06, tone_hz=1150.0, band=(2500.0, 5000.0))),
    5: ("impulse-train", dict(period=0.12, decay=0.002, band=(3000.0, 5400.0))),
    6: ("impulse-train", dict(period=0.16, decay=0.003, band=(1200.0, 4200.0), jitter=0.4)),
    7: ("tonal-transient-composite", dict(period=0.22, decay=0.03, tone_hz=380.0, band=(400.0, 1500.0))),
    8: ("tonal-transient-composite", dict(period=0.50, decay=0.15, tone_hz=2600.0, band=(1500.0, 5000.0))),
    9: ("broadband-burst", dict(period=0.70, burst=0.03, band=(1500.0, 5000.0))),
    10: ("broadband-burst", dict(period=0.90, burst=0.40, band=(500.0, 5400.0))),
    11: ("AM-noise", dict(modulation_hz=18.0, band=(2000.0, 5400.0), depth=0.9)),
    12: ("AM-noise", dict(modulation_hz=6.0, band=(800.0, 4500.0), depth=0.8)),
    13: ("chirp", dict(period=0.80, decay=0.10, f_start=3200.0, f_end=800.0)),
}


def class_generator(class_id: int, subject_id: int = 0, take_seed: int = 0) -> ActionGenerator:
    """Template generator for a class, jittered per subject (tempo, pitch)."""
    if class_id not in _TEMPLATES:
        raise ValueError(f"class_id must be in [0, {len(_TEMPLATES)})")
    family, base = _TEMPLATES[class_id]
    srng = np.random.default_rng([class_id, subject_id, 0xA5])
    tempo = srng.uniform(0.85, 1.15)
    pitch = srng.uniform(0.92, 1.08)
    params = dict(base)
    for key in ("period",):
        if key in params:
            params[key] = params[key] * tempo
    for key in ("f0", "tone_hz", "f_start", "f_end"):
        if key in params:
            params[key] = params[key] * pitch
    if "modulation_hz" in params:
        params["modulation_hz"] = params["modulation_hz"] / tempo
    return ActionGenerator(class_id, family, params, int(take_seed))


def _bandpass(x: np.ndarray, lo: float, hi: float, fs: float) -> np.ndarray:
    nyq = fs / 2
    hi = min(hi, 0.98 * nyq)
    sos = sps.butter(4, [lo / nyq, hi / nyq], btype="bandpass", output="sos")
    return sps.sosfilt(sos, x)


def _onsets(period: float, n_seconds: float, phase: float, rng, jitter: float = 0.0) -> np.ndarray:
    times = []
    t = phase
    while t < n_seconds:
        times.append(t)
        step = period * (1.0 + jitter * rng.uniform(-1, 1)) if jitter else period
        t += step
    return np.asarray(times)


def _decaying_noise(n: int, decay_samples: float, rng) -> np.ndarray:
    env = np.exp(-np.arange(n) / max(decay_samples, 1.0))
    return rng.standard_normal(n) * env


def synthesize_action(
    gen: ActionGenerator, duration: float, sample_rate: float = DEFAULT_RATE, gain: float = 1.0
) -> np.ndarray:
    """Render one action class waveform of ``ceil(duration * rate)`` samples in [-1, 1]."""
    if duration <= 0:
        raise ValueError("duration must be positive")
    nyq = sample_rate / 2
    if gen.max_frequency() >= nyq:
        raise ValueError(
            f"generator frequency {gen.max_frequency():.1f} Hz exceeds Nyquist {nyq:.1f} Hz"
        )
    n = int(math.ceil(duration * sample_rate - 1e-9))
    if gain == 0:
        return np.zeros(n)
    rng = np.random.default_rng([gen.class_id, gen.rng_seed, 0x5EED])
    p = gen.params
    fs = float(sample_rate)
    t = np.arange(n) / fs
    x = np.zeros(n)

    if gen.family in ("impulse-train", "tonal-transient-composite", "chirp", "broadband-burst"):
        period = p["period"]
        phase = p.get("phase", rng.uniform(0, period))
        onsets = _onsets(period, n / fs, phase, rng, p.get("jitter", 0.0))
        for t0 in onsets:
            i0 = int(round(t0 * fs))
            if i0 >= n:
                continue
            if gen.family == "impulse-train":
                seg_len = int(8 * p["decay"] * fs) + 1
                seg = _decaying_noise(seg_len, p["decay"] * fs, rng)
            elif gen.family == "tonal-transient-composite":
                seg_len = int(6 * p["decay"] * fs) + 1
                tt = np.arange(seg_len) / fs
                f = p["tone_hz"] * (1 + 0.01 * rng.uniform(-1, 1))
                seg = np.sin(2 * np.pi * f * tt + rng.uniform(0, 2 * np.pi)) * np.exp(-tt / p["decay"])
                seg += 0.3 * np.sin(2 * np.pi * 2.76 * f * tt) * np.exp(-tt / (0.5 * p["decay"])) if 2.76 * f < 0.95 * nyq else 0.0
                click = _decaying_noise(int(0.004 * fs), 0.001 * fs, rng)
                seg[: len(click)] += 0.8 * click
            elif gen.family == "chirp":
                seg_len = int(4 * p["decay"] * fs) + 1
                tt = np.arange(seg_len) / fs
                dur = tt[-1] if seg_len > 1 else 1.0
                inst = sps.chirp(tt, f0=p["f_start"], t1=dur, f1=p["f_end"], method="logarithmic")
                seg = inst * np.exp(-tt / p["decay"])
            else:  # broadband-burst
                seg_len = int(p["burst"] * fs) + 1
                seg = rng.standard_normal(seg_len) * np.hanning(seg_len) ** 0.5
            seg = seg[: n - i0]
            x[i0 : i0 + len(seg)] += seg * rng.uniform(0.7, 1.0)
        if "band" in p and gen.family in ("impulse-train", "broadband-burst"):
            x = _bandpass(x, p["band"][0], p["band"][1], fs)
    elif gen.family == "harmonic-tone":
        f0 = p["f0"]
        vib = p.get("vibrato_hz", 0.0)
        phase_track = 2 * np.pi * f0 * t
        if vib:
            phase_track += (0.02 * f0 / vib) * np.sin(2 * np.pi * vib * t + rng.uniform(0, 2 * np.pi))
        formants = p.get("formants")
        for h in range(1, int(p.get("harmonics", 1)) + 1):
            if h * f0 >= 0.95 * nyq:
                break
            amp = 1.0 / h
            if formants:
                amp = sum(np.exp(-0.5 * ((h * f0 - fm) / 250.0) ** 2) for fm in formants) + 0.05
            x += amp * np.sin(h * phase_track + rng.uniform(0, 2 * np.pi))
        mod = p.get("modulation_hz", 0.0)
        if mod:
            x *= 0.5 * (1 + np.sin(2 * np.pi * mod * t + rng.uniform(0, 2 * np.pi))) ** 2
    elif gen.family == "AM-noise":
        noise = _bandpass(rng.standard_normal(n), p["band"][0], p["band"][1], fs)
        mod = p["modulation_hz"]
        env = 1 - p.get("depth", 0.8) * 0.5 * (1 + np.sin(2 * np.pi * mod * t + rng.uniform(0, 2 * np.pi)))
        env *= 1 + 0.5 * rng.uniform(-1, 1, size=int(n / fs * mod) + 2).repeat(int(fs / mod) + 1)[:n]
        x = noise * env

    # remove sub-200 Hz content
    sos = sps.butter(4, 200.0 / nyq, btype="highpass", output="sos")
    x = sps.sosfilt(sos, x)
    peak = np.max(np.abs(x))
    if peak > 0:
        x = x / peak * 0.95
    return np.clip(x * min(abs(gain), 1.0) * np.sign(gain), -1.0, 1.0)


# ------------------------------------------------------------------ scenes


@dataclass(frozen=True)
class Reflection:
    delay: float  # extra delay in seconds on top of the image-source path
    attenuation: float
    offset: tuple[float, float, float]  # image-source offset from the true source, m


@dataclass(frozen=True)
class ScenarioPreset:
    id: int
    reflections: tuple[Reflection, ...] = ()
    noise_shape: str = "white"
    snr_db: tuple[float, float] = (80.0, 80.0)
    label: str = ""

    def draw_snr(self, rng) -> float:
        lo, hi = self.snr_db
        return float(lo if lo == hi else rng.uniform(lo, hi))


def default_presets(snr_range: tuple[float, float] = (5.0, 20.0), n_reflections: int = 5) -> dict[int, ScenarioPreset]:
    reflections = (
        Reflection(0.0, 0.7, (0.0, -2.6, 0.0)),   # floor
        Reflection(0.0, 0.6, (0.0, 0.0, 3.4)),    # back wall
        Reflection(0.0, 0.5, (2.8, 0.0, 0.0)),    # side wall
        Reflection(0.0, 0.45, (0.0, 3.2, 0.0)),   # ceiling
        Reflection(0.035, 0.4, (-3.0, 0.0, 1.0)),  # late echo
        Reflection(0.06, 0.3, (1.5, -1.5, 4.0)),
        Reflection(0.09, 0.25, (-2.0, 2.0, 5.0)),
    )
    if n_reflections < 2:
        raise ValueError("preset 2 needs at least two reflections")
    return {
        1: ScenarioPreset(1, (), "white", (80.0, 80.0), "anechoic room"),
        2: ScenarioPreset(2, reflections[:n_reflections], "pink", (30.0, 30.0), "indoor open space"),
        3: ScenarioPreset(3, (), "pink", tuple(snr_range), "outdoor terrace"),
    }


@dataclass(frozen=True)
class SourceEvent:
    position: tuple[float, float, float]
    generator: ActionGenerator
    onset: float = 0.0
    duration: float = 1.0
    gain: float = 1.0

    def __post_init__(self):
        if self.duration <= 0:
            raise ValueError("event duration must be positive")
        if self.gain < 0:
            raise ValueError("event gain must be nonnegative")


@dataclass
class MicArrayRecording:
    samples: np.ndarray  # (M, N) float32
    sample_rate: int
    geometry: ArrayGeometry
    label: int = 0
    scenario_id: int = 1
    subject_id: int = 0
    take_id: int = 0
    metadata: dict = field(default_factory=dict)

    @property
    def duration(self) -> float:
        return self.samples.shape[1] / self.sample_rate


def _fractional_delay_taps(delay_samples: np.ndarray, n_taps: int = FRACTIONAL_TAPS):
    """Windowed-sinc taps; returns (start index, taps) per delay."""
    half = n_taps // 2
    n0 = np.floor(delay_samples).astype(int)
    start = n0 - (half - 1)
    j = np.arange(n_taps)
    pos = start[:, None] + j[None, :]
    taps = np.sinc(pos - delay_samples[:, None]) * np.kaiser(n_taps, 6.0)[None, :]
    return start, taps


def noise_field(shape: tuple[int, int], kind: str, rng) -> np.ndarray:
    """Unit-variance spectrally shaped noise, independent per row."""
    m, n = shape
    white = rng.standard_normal((m, n))
    if kind == "white":
        out = white
    else:
        alpha = {"pink": 0.5, "brown": 1.0}[kind]
        spec = np.fft.rfft(white, axis=1)
        f = np.arange(spec.shape[1], dtype=float)
        f[0] = 1.0
        spec *= f ** (-alpha)
        out = np.fft.irfft(spec, n=n, axis=1)
    return out / (out.std() + 1e-30)


def in_field_of_view(position, fov_h: float = 64.0, fov_v: float = 48.0) -> bool:
    x, y, z = position
    if z <= 0:
        return False
    return abs(x / z) <= math.tan(math.radians(fov_h / 2)) and abs(y / z) <= math.tan(math.radians(fov_v / 2))


def render_scene(
    events: Sequence[SourceEvent],
    preset: ScenarioPreset,
    geometry: ArrayGeometry,
    duration: float,
    sample_rate: int = DEFAULT_RATE,
    seed: int = 0,
    mics: Sequence[int] | None = None,
    fov: tuple[float, float] = (64.0, 48.0),
) -> MicArrayRecording:
    """Propagate events to every microphone (1/d spreading, fractional delays).

    ``mics`` restricts rendering to a subset of channels. The noise draw for
    those channels is the same as in the full render, but its level is set
    from the rendered channels' signal power.
    """
    n = int(math.ceil(duration * sample_rate - 1e-9))
    mic_idx = np.arange(geometry.n_mics) if mics is None else np.asarray(mics, dtype=int)
    mic_pos = geometry.mic_positions[mic_idx]
    c = geometry.sound_speed
    clean = np.zeros((len(mic_idx), n))
    warnings_out = []
    for ev in events:
        if ev.position[2] <= 0 or ev.onset + ev.duration > duration + 1e-9:
            raise ValueError("events must lie in front of the array and within the scene duration")
        if not in_field_of_view(ev.position, *fov):
            warnings_out.append(f"event at {tuple(ev.position)} outside field of view")
        wave = synthesize_action(ev.generator, ev.duration, sample_rate, ev.gain)
        src = np.asarray(ev.position, dtype=float)
        paths = [(src, 0.0, 1.0)] + [
            (src + np.asarray(r.offset), r.delay, r.attenuation) for r in preset.reflections
        ]
        # per-mic impulse response assembled from all propagation paths
        delays, amps = [], []
        for pos, extra, att in paths:
            dist = np.linalg.norm(mic_pos - pos[None, :], axis=1)
            delays.append(dist / c * sample_rate + extra * sample_rate)
            amps.append(att / dist)
        delays = np.stack(delays)  # (P, M)
        amps = np.stack(amps)
        start, taps = _fractional_delay_taps(delays.ravel())
        start = start.reshape(delays.shape)
        taps = taps.reshape(delays.shape + (FRACTIONAL_TAPS,))
        base = int(start.min())
        length = int(start.max()) - base + FRACTIONAL_TAPS
        rir = np.zeros((len(mic_idx), length))
        cols = np.arange(FRACTIONAL_TAPS)
        for p_i in range(delays.shape[0]):
            for m in range(len(mic_idx)):
                s0 = start[p_i, m] - base
                rir[m, s0 + cols] += amps[p_i, m] * taps[p_i, m]
        conv = sps.fftconvolve(rir, wave[None, :], axes=1)
        i0 = int(round(ev.onset * sample_rate)) + base
        src_lo = max(0, -i0)
        dst_lo = max(0, i0)
        span = min(conv.shape[1] - src_lo, n - dst_lo)
        if span > 0:
            clean[:, dst_lo : dst_lo + span] += conv[:, src_lo : src_lo + span]

    rng = np.random.default_rng([int(seed), preset.id, 0xD1CE])
    snr = preset.draw_snr(rng)
    # noise drawn for the full array so channel subsets stay consistent
    noise = noise_field((geometry.n_mics, n), preset.noise_shape, rng)[mic_idx]
    p_sig = float(np.mean(clean**2))
    if p_sig > 0:
        clean = clean + noise * math.sqrt(p_sig / 10 ** (snr / 10))
    meta = {"snr_db": snr, "preset": preset.id, "warnings": warnings_out}
    if mics is not None:
        meta["mics"] = [int(i) for i in mic_idx]
    return MicArrayRecording(clean.astype(np.float32), int(sample_rate), geometry, scenario_id=preset.id, metadata=meta)


# ----------------------------------------------------------------- datasets


@dataclass(frozen=True)
class DatasetSpec:
    classes: tuple[int, ...] = (0, 1, 2, 3, 4, 5)
    subjects: int = 3
    scenarios: tuple[int, ...] = (1, 2, 3)
    takes: int = 2
    duration_s: float = 5.0
    sample_rate: int = DEFAULT_RATE
    snr_db: tuple[float, float] = (5.0, 20.0)
    reflections: int = 5
    master_seed: int = 0
    geometry_seed: int = 7
    depth_range: tuple[float, float] = (2.0, 4.0)
    fov: tuple[float, float] = (64.0, 48.0)

    def __post_init__(self):
        if len(self.classes) == 0:
            raise ValueError("dataset needs at least one class")
        if self.takes < 1 or self.subjects < 1:
            raise ValueError("dataset needs at least one take and one subject")
        if any(s not in (1, 2, 3) for s in self.scenarios):
            raise ValueError("scenarios must be drawn from {1, 2, 3}")
        if self.duration_s > MAX_TAKE_SECONDS:
            warnings.warn(f"take length capped at {MAX_TAKE_SECONDS:g} s")
            object.__setattr__(self, "duration_s", MAX_TAKE_SECONDS)


@dataclass(frozen=True)
class TakePlan:
    take_id: int
    label: int
    scenario_id: int
    subject_id: int
    take_index: int
    seed: int
    position: tuple[float, float, float]


def plan_dataset(spec: DatasetSpec) -> list[TakePlan]:
    """Enumerate takes and their derived seeds/positions without rendering."""
    plans = []
    take_id = 0
    tan_h = math.tan(math.radians(spec.fov[0] / 2)) * 0.8
    tan_v = math.tan(math.radians(spec.fov[1] / 2)) * 0.8
    for label in spec.classes:
        for scenario in spec.scenarios:
            for subject in range(spec.subjects):
                for k in range(spec.takes):
                    ss = np.random.SeedSequence(spec.master_seed, spawn_key=(label, scenario, subject, k))
                    seed = int(ss.generate_state(1)[0])
                    rng = np.random.default_rng(ss)
                    z = rng.uniform(*spec.depth_range)
                    pos = (z * rng.uniform(-tan_h, tan_h), z * rng.uniform(-tan_v, tan_v), z)
                    plans.append(TakePlan(take_id, int(label), int(scenario), subject, k, seed, pos))
                    take_id += 1
    return plans


def render_take(plan: TakePlan, spec: DatasetSpec, geometry: ArrayGeometry | None = None,
                presets: dict[int, ScenarioPreset] | None = None, mics=None) -> MicArrayRecording:
    geometry = geometry or build_default_geometry(spec.geometry_seed)
    presets = presets or default_presets(spec.snr_db, spec.reflections)
    gen = class_generator(plan.label, plan.subject_id, plan.seed)
    event = SourceEvent(plan.position, gen, 0.0, spec.duration_s, 1.0)
    rec = render_scene([event], presets[plan.scenario_id], geometry, spec.duration_s,
                       spec.sample_rate, plan.seed, mics=mics, fov=spec.fov)
    rec.label = plan.label
    rec.subject_id = plan.subject_id
    rec.take_id = plan.take_id
    rec.metadata.update(position=list(plan.position), take_index=plan.take_index, seed=plan.seed)
    return rec


def iter_dataset(spec: DatasetSpec, mics=None) -> Iterator[MicArrayRecording]:
    geometry = build_default_geometry(spec.geometry_seed)
    presets = default_presets(spec.snr_db, spec.reflections)
    for plan in plan_dataset(spec):
        yield render_take(plan, spec, geometry, presets, mics=mics)


def generate_dataset(spec: DatasetSpec, mics=None) -> list[MicArrayRecording]:
    """Balanced dataset: every (class, scenario) cell has subjects x takes recordings."""
    return list(iter_dataset(spec, mics=mics))
