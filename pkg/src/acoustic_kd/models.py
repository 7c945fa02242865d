"""Teacher, student and fusion architectures.

All models return a ``FeatureOutput`` holding logits, the penultimate feature
vector (width 1024*w for every architecture) and any requested tagged
activations, each reduced to a per-sample vector by averaging over the
non-channel axes.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .nn import functional as F
from .nn.layers import BatchNorm, Conv1d, Conv2d, Dense, InputNorm, Module
from .nn.tensor import Tensor, as_tensor

ARCHITECTURES = ("dualcamnet", "hearnet", "oursoundnet", "fusion")


def scaled(channels: int, width: float) -> int:
    return max(1, int(round(channels * width)))


@dataclass
class ModelSpec:
    arch: str
    classes: int = 14
    width: float = 1.0
    input_shape: tuple = ()
    seed: int = 0
    dtype: str = "float64"
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.arch not in ARCHITECTURES:
            raise ValueError(f"unknown architecture {self.arch!r}; choose from {ARCHITECTURES}")
        if self.classes < 2:
            raise ValueError("need at least 2 classes")
        if not 0 < self.width <= 1:
            raise ValueError("width multiplier must lie in (0, 1]")
        self.input_shape = tuple(self.input_shape)

    def to_dict(self) -> dict:
        return {"arch": self.arch, "classes": self.classes, "width": self.width,
                "input_shape": list(self.input_shape), "seed": self.seed, "dtype": self.dtype,
                "options": dict(self.options)}

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        return cls(d["arch"], int(d["classes"]), float(d["width"]), tuple(d.get("input_shape", ())),
                   int(d.get("seed", 0)), d.get("dtype", "float64"), dict(d.get("options", {})))


@dataclass
class FeatureOutput:
    logits: Tensor
    penultimate: Tensor
    features: dict = field(default_factory=dict)
    maps: dict = field(default_factory=dict)  # un-reduced activations, only with keep_maps


class _Net(Module):
    tags: tuple = ()
    penultimate_tag = "penultimate"

    def __init__(self, spec: ModelSpec):
        super().__init__()
        self.spec = spec
        self._acts: dict[str, Tensor] = {}

    def _keep(self, tag: str, t: Tensor, axes) -> None:
        self._acts[tag] = (t, axes)

    def _collect(self, tags) -> dict:
        unknown = [t for t in tags if t not in self.tags]
        if unknown:
            raise KeyError(f"unknown feature tag(s) {unknown}; available: {', '.join(self.tags)}")
        out = {}
        for tag in tags:
            t, axes = self._acts[tag]
            out[tag] = F.mean(t, axis=axes) if axes else t
        return out

    def forward(self, x, tags=(), keep_maps: bool = False) -> FeatureOutput:
        x = as_tensor(x, np.dtype(self.spec.dtype))
        self._check_input(x)
        self._acts = {}
        logits = self._forward(x)
        feats = self._collect(tuple(tags))
        pen = self._collect(("penultimate",))["penultimate"]
        maps = {k: t for k, (t, _) in self._acts.items()} if keep_maps else {}
        self._acts = {}
        return FeatureOutput(logits, pen, feats, maps)


class DualCamNet(_Net):
    """Acoustic-image teacher over [N, T, H, W, n_mfcc] MFCC volumes.

    Temporal 1D conv per pixel, two per-frame 5x5 conv blocks, mean over time,
    then a fully convolutional 1024/1000/C head averaged over space.
    """

    tags = ("conv1", "conv2", "conv3", "fc1", "fc2", "penultimate")

    def __init__(self, spec: ModelSpec):
        super().__init__(spec)
        w = spec.width
        cin = int(spec.options.get("mfcc", 12))
        self.pool_stride = int(spec.options.get("pool_stride", 1))
        rng = np.random.default_rng(spec.seed)
        c2, c3 = scaled(32, w), scaled(64, w)
        f1, f2 = scaled(1024, w), scaled(1000, w)
        self.norm = InputNorm(cin)
        self.conv1 = Conv1d(cin, cin, 7, rng, padding=3)
        self.conv2 = Conv2d(cin, c2, 5, rng, padding=2, bias=False)
        self.bn2 = BatchNorm(c2)
        self.conv3 = Conv2d(c2, c3, 5, rng, padding=2, bias=False)
        self.bn3 = BatchNorm(c3)
        self.fc1 = Dense(c3, f1, rng)
        self.fc2 = Dense(f1, f2, rng)
        self.fc3 = Dense(f2, spec.classes, rng)
        self.feature_dim = f1
        self.astype(np.dtype(spec.dtype))

    def _check_input(self, x):
        if x.ndim != 5 or x.shape[-1] != self.conv1.weight.shape[1]:
            raise ValueError(f"DualCamNet expects [N, T, H, W, {self.conv1.weight.shape[1]}], got {x.shape}")

    def _forward(self, x):
        n, t, h, wd, c = x.shape
        x = self.norm(x)
        z = x.transpose((0, 2, 3, 1, 4)).reshape(n * h * wd, t, c)
        z = F.relu(self.conv1(z))
        z = z.reshape(n, h, wd, t, c).transpose((0, 3, 1, 2, 4))
        self._keep("conv1", z, (1, 2, 3))
        z = z.reshape(n * t, h, wd, c)
        for tag, conv, bn in (("conv2", self.conv2, self.bn2), ("conv3", self.conv3, self.bn3)):
            z = F.maxpool2d(F.relu(bn(conv(z))), 2, self.pool_stride, "same")
            self._keep(tag, z.reshape((n, t) + z.shape[1:]), (1, 2, 3))
        z = z.reshape((n, t) + z.shape[1:]).mean(axis=1)
        z = F.relu(self.fc1(z))
        self._keep("fc1", z, (1, 2))
        self._keep("penultimate", z, (1, 2))
        z = F.relu(self.fc2(z))
        self._keep("fc2", z, (1, 2))
        return self.fc3(z).mean(axis=(1, 2))


class HearNet(_Net):
    """Spectrogram student over [N, frames, bins]; time chain 500 -> 100 -> 20 -> 4 -> 1."""

    tags = ("conv1", "conv2", "conv3", "conv4", "conv5", "fc1", "penultimate")

    def __init__(self, spec: ModelSpec):
        super().__init__(spec)
        w = spec.width
        self.frames = int(spec.options.get("frames", 500))
        self.bins = int(spec.options.get("bins", 257))
        rng = np.random.default_rng(spec.seed)
        c1, c2, c3 = scaled(128, w), scaled(256, w), scaled(256, w)
        f4, f5, f6 = scaled(1024, w), scaled(1024, w), scaled(1000, w)
        self.norm = InputNorm(self.bins)
        self.conv1 = Conv1d(self.bins, c1, 11, rng, padding=5, bias=False)
        self.bn1 = BatchNorm(c1)
        self.conv2 = Conv1d(c1, c2, 5, rng, padding=2, bias=False)
        self.bn2 = BatchNorm(c2)
        self.conv3 = Conv1d(c2, c3, 3, rng, padding=1, bias=False)
        self.bn3 = BatchNorm(c3)
        self.conv4 = Conv1d(c3, f4, 4, rng)
        self.conv5 = Dense(f4, f5, rng)
        self.fc1 = Dense(f5, f6, rng)
        self.fc2 = Dense(f6, spec.classes, rng)
        self.feature_dim = f4
        self.astype(np.dtype(spec.dtype))

    def _check_input(self, x):
        if x.ndim != 3 or x.shape[1:] != (self.frames, self.bins):
            raise ValueError(f"HearNet expects spectrograms [N, {self.frames}, {self.bins}], got {x.shape}")

    def temporal_extents(self) -> list[int]:
        out = [self.frames]
        n = self.frames
        for _ in range(3):
            n = n // 5
            out.append(n)
        out.append(n - 4 + 1)
        return out

    def _forward(self, x):
        z = self.norm(x)
        for tag, conv, bn in (("conv1", self.conv1, self.bn1), ("conv2", self.conv2, self.bn2),
                              ("conv3", self.conv3, self.bn3)):
            z = F.maxpool1d(F.relu(bn(conv(z))), 5)
            self._keep(tag, z, (1,))
        z = F.relu(self.conv4(z))
        self._keep("conv4", z, (1,))
        self._keep("penultimate", z, (1,))
        z = F.relu(self.conv5(z))
        self._keep("conv5", z, (1,))
        z = F.relu(self.fc1(z))
        self._keep("fc1", z, (1,))
        return self.fc2(z).mean(axis=1)


class OurSoundNet(_Net):
    """Raw-waveform student over [N, samples] at 22 kHz."""

    tags = ("conv1", "conv2", "conv3", "conv4", "conv5", "fc1", "fc2", "penultimate")

    def __init__(self, spec: ModelSpec):
        super().__init__(spec)
        w = spec.width
        opts = spec.options
        self.samples = int(opts.get("samples", 110000))
        kernels = tuple(opts.get("kernels", (64, 32, 16, 8, 4)))
        channels = tuple(scaled(c, w) for c in opts.get("channels", (16, 32, 64, 128, 256)))
        self.pools = tuple(opts.get("pools", (8, 8, 4, 1, 1)))
        rng = np.random.default_rng(spec.seed)
        self.norm = InputNorm(1)
        self.stages = []
        cin = 1
        for i, (k, c) in enumerate(zip(kernels, channels), start=1):
            conv = Conv1d(cin, c, k, rng, stride=2, padding=k // 2, bias=False)
            bn = BatchNorm(c)
            setattr(self, f"conv{i}", conv)
            setattr(self, f"bn{i}", bn)
            self.stages.append((f"conv{i}", conv, bn))
            cin = c
        f1, f2 = scaled(1024, w), scaled(1000, w)
        self.fc1 = Dense(cin, f1, rng)
        self.fc2 = Dense(f1, f2, rng)
        self.fc3 = Dense(f2, spec.classes, rng)
        self.feature_dim = f1
        self.astype(np.dtype(spec.dtype))

    def _check_input(self, x):
        if x.ndim != 2 or x.shape[1] != self.samples:
            raise ValueError(f"OurSoundNet expects waveforms [N, {self.samples}], got {x.shape}")

    def _forward(self, x):
        z = self.norm(x.reshape(x.shape[0], x.shape[1], 1))
        for (tag, conv, bn), pool in zip(self.stages, self.pools):
            z = F.relu(bn(conv(z)))
            if pool > 1:
                z = F.maxpool1d(z, pool)
            self._keep(tag, z, (1,))
        z = F.relu(self.fc1(z))
        self._keep("fc1", z, (1,))
        self._keep("penultimate", z, (1,))
        z = F.relu(self.fc2(z))
        self._keep("fc2", z, (1,))
        return self.fc3(z).mean(axis=1)

    def receptive_field(self) -> int:
        """Input samples seen by one output step of the last conv stage."""
        rf, jump = 1, 1
        for (_, conv, _), pool in zip(self.stages, self.pools):
            rf += (conv.weight.shape[0] - 1) * jump
            jump *= conv.stride
            if pool > 1:
                rf += (pool - 1) * jump
                jump *= pool
        return rf


class FusionHead(_Net):
    """Concatenate teacher and student feature vectors, then 1000*w -> C."""

    tags = ("fc1", "penultimate")

    def __init__(self, spec: ModelSpec, teacher_dim: int, student_dim: int):
        super().__init__(spec)
        rng = np.random.default_rng(spec.seed)
        self.teacher_dim, self.student_dim = int(teacher_dim), int(student_dim)
        self.fc1 = Dense(self.teacher_dim + self.student_dim, scaled(1000, spec.width), rng)
        self.fc2 = Dense(scaled(1000, spec.width), spec.classes, rng)
        self.feature_dim = self.teacher_dim + self.student_dim
        self.astype(np.dtype(spec.dtype))

    def forward(self, teacher_feat, student_feat, tags=()) -> FeatureOutput:
        dt = np.dtype(self.spec.dtype)
        a, b = as_tensor(teacher_feat, dt), as_tensor(student_feat, dt)
        if a.ndim != 2 or b.ndim != 2 or a.shape[1] != self.teacher_dim or b.shape[1] != self.student_dim:
            raise ValueError(f"fusion expects [N, {self.teacher_dim}] and [N, {self.student_dim}], "
                             f"got {a.shape} and {b.shape}")
        if a.shape[0] != b.shape[0]:
            raise ValueError("teacher and student batches differ in size")
        self._acts = {}
        z = F.concat([a, b], axis=1)
        self._keep("penultimate", z, None)
        h = F.relu(self.fc1(z))
        self._keep("fc1", h, None)
        logits = self.fc2(h)
        feats = self._collect(tuple(tags))
        pen = self._acts["penultimate"][0]
        self._acts = {}
        return FeatureOutput(logits, pen, feats)


def build_dualcamnet(spec: ModelSpec) -> DualCamNet:
    return DualCamNet(spec)


def build_hearnet(spec: ModelSpec) -> HearNet:
    return HearNet(spec)


def build_oursoundnet(spec: ModelSpec) -> OurSoundNet:
    return OurSoundNet(spec)


def build_fusion_head(teacher_feat_dim: int, student_feat_dim: int, spec: ModelSpec) -> FusionHead:
    return FusionHead(spec, teacher_feat_dim, student_feat_dim)


def build_model(spec: ModelSpec, **kwargs) -> _Net:
    if spec.arch == "fusion":
        return FusionHead(spec, kwargs["teacher_dim"], kwargs["student_dim"])
    return {"dualcamnet": DualCamNet, "hearnet": HearNet, "oursoundnet": OurSoundNet}[spec.arch](spec)


def model_input_kind(arch: str) -> str:
    return {"dualcamnet": "acoustic", "hearnet": "spectrogram", "oursoundnet": "waveform"}[arch]
