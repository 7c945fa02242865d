"""Pipeline configuration: an INI file with one section per stage.

Every key has a type and a default; unknown sections or keys, and values that
do not parse, raise ``ConfigError``. ``--set section.key=value`` overrides
are applied on top of the file.
"""
from __future__ import annotations

import configparser
import hashlib
import io
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

from .distill import DistillationConfig, TrainConfig
from .micarray import DatasetSpec
from .models import ModelSpec


class ConfigError(ValueError):
    pass


def _ints(s: str) -> tuple[int, ...]:
    return tuple(int(v) for v in s.replace(" ", "").split(",") if v)


def _floats(s: str) -> tuple[float, ...]:
    return tuple(float(v) for v in s.replace(" ", "").split(",") if v)


def _strs(s: str) -> tuple[str, ...]:
    return tuple(v for v in s.replace(" ", "").split(",") if v)


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _opt_int(s: str):
    return None if s.strip().lower() in ("", "none") else int(s)


def _opt_float(s: str):
    return None if s.strip().lower() in ("", "none") else float(s)


def _fmt(v) -> str:
    if isinstance(v, tuple):
        return ",".join(_fmt(x) for x in v)
    if isinstance(v, bool):
        return "true" if v else "false"
    return "none" if v is None else str(v)


# section -> key -> (parser, default)
SCHEMA: dict[str, dict[str, tuple[Callable[[str], Any], Any]]] = {
    "paths": {"workdir": (str, "work")},
    "dataset": {
        "classes": (_ints, (0, 1, 2, 3, 4, 5)),
        "subjects": (int, 3),
        "scenarios": (_ints, (1, 2, 3)),
        "takes": (int, 2),
        "duration_s": (float, 5.0),
        "snr_db": (_floats, (5.0, 20.0)),
        "reflections": (int, 5),
        "geometry_seed": (int, 7),
        "depth_range": (_floats, (2.0, 4.0)),
    },
    "transfer": {
        "classes": (_ints, (6, 7, 8, 9)),
        "subjects": (int, 3),
        "takes": (int, 6),
        "duration_s": (float, 5.0),
    },
    "beamformer": {
        "fov_h": (float, 64.0),
        "fov_v": (float, 48.0),
        "focus_range": (float, math.inf),
    },
    "split": {"seed": (int, 0), "min_per_class": (int, 10)},
    "teacher": {
        "arch": (str, "dualcamnet"),
        "width": (float, 0.25),
        "conditions": (_strs, ("1",)),
        "learning_rate": (float, 1e-3),
        "epochs": (int, 100),
        "batch_size": (int, 32),
        "seed": (int, 0),
        "patience": (_opt_int, 15),
        "stop_at_accuracy": (_opt_float, None),
        "pool_stride": (int, 1),
    },
    "student": {
        "arch": (str, "hearnet"),
        "width": (float, 0.25),
        "lam": (float, 0.5),
        "temperature": (float, 1.0),
        "learning_rate": (float, 1e-3),
        "epochs": (int, 100),
        "batch_size": (int, 32),
        "seed": (int, 0),
        "patience": (_opt_int, 25),
        "temper_student": (_bool, False),
        "teacher_input_scaling": (_bool, False),
        "sample_seconds": (int, 5),
    },
    "eval": {"svm_regularization": (float, 1.0)},
    "transfer_eval": {"layers": (_strs, ("conv3", "conv4", "penultimate")), "seed": (int, 0)},
    "render": {"take": (int, 0), "frame": (int, 0), "band": (_floats, (900.0, 6400.0))},
    "run": {"master_seed": (int, 0)},
}


@dataclass
class PipelineConfig:
    values: dict

    def __getitem__(self, section: str) -> dict:
        return self.values[section]

    @property
    def workdir(self) -> Path:
        return Path(self.values["paths"]["workdir"])

    @property
    def class_count(self) -> int:
        return max(self.values["dataset"]["classes"]) + 1

    @property
    def master_seed(self) -> int:
        return self.values["run"]["master_seed"]

    def config_hash(self) -> str:
        """Hash of every setting except the workdir location."""
        payload = {s: {k: _fmt(v) for k, v in kv.items()} for s, kv in self.values.items() if s != "paths"}
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()

    def to_ini(self) -> str:
        cp = configparser.ConfigParser()
        for s, kv in self.values.items():
            cp[s] = {k: _fmt(v) for k, v in kv.items()}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    # ---- typed views
    def dataset_spec(self) -> DatasetSpec:
        d = self.values["dataset"]
        b = self.values["beamformer"]
        return DatasetSpec(classes=d["classes"], subjects=d["subjects"], scenarios=d["scenarios"], takes=d["takes"],
                           duration_s=d["duration_s"], snr_db=tuple(d["snr_db"]), reflections=d["reflections"],
                           master_seed=self.master_seed, geometry_seed=d["geometry_seed"],
                           depth_range=tuple(d["depth_range"]), fov=(b["fov_h"], b["fov_v"]))

    def transfer_spec(self) -> DatasetSpec:
        d = self.values["dataset"]
        t = self.values["transfer"]
        b = self.values["beamformer"]
        return DatasetSpec(classes=t["classes"], subjects=t["subjects"], scenarios=d["scenarios"], takes=t["takes"],
                           duration_s=t["duration_s"], snr_db=tuple(d["snr_db"]), reflections=d["reflections"],
                           master_seed=self.master_seed + 1, geometry_seed=d["geometry_seed"],
                           depth_range=tuple(d["depth_range"]), fov=(b["fov_h"], b["fov_v"]))

    def teacher_spec(self) -> ModelSpec:
        t = self.values["teacher"]
        return ModelSpec(t["arch"], classes=self.class_count, width=t["width"],
                         seed=t["seed"], dtype="float32", options={"pool_stride": t["pool_stride"]})

    def teacher_train_config(self) -> TrainConfig:
        t = self.values["teacher"]
        return TrainConfig(t["learning_rate"], t["epochs"], t["batch_size"], t["seed"], t["patience"],
                           t["stop_at_accuracy"])

    def student_spec(self) -> ModelSpec:
        s = self.values["student"]
        return ModelSpec(s["arch"], classes=self.class_count, width=s["width"],
                         seed=s["seed"], dtype="float32")

    def distill_config(self) -> DistillationConfig:
        s = self.values["student"]
        return DistillationConfig(s["learning_rate"], s["epochs"], s["batch_size"], s["seed"], s["patience"],
                                  None, True, s["lam"], s["temperature"], s["temper_student"],
                                  s["teacher_input_scaling"])


def _parse(section: str, key: str, raw: str):
    if section not in SCHEMA:
        raise ConfigError(f"unknown config section [{section}]")
    if key not in SCHEMA[section]:
        raise ConfigError(f"unknown config key {section}.{key}")
    parser, _ = SCHEMA[section][key]
    try:
        return parser(raw)
    except ValueError as exc:
        raise ConfigError(f"bad value for {section}.{key}: {raw!r} ({exc})") from None


def default_values() -> dict:
    return {s: {k: d for k, (_, d) in kv.items()} for s, kv in SCHEMA.items()}


def load_config(path=None, overrides=(), env: dict | None = None) -> PipelineConfig:
    values = default_values()
    if path is not None:
        cp = configparser.ConfigParser()
        try:
            with open(path) as fh:
                cp.read_file(fh)
        except configparser.Error as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from None
        for section in cp.sections():
            for key, raw in cp[section].items():
                values.setdefault(section, {})[key] = _parse(section, key, raw)
    for item in overrides:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"override must look like section.key=value, got {item!r}")
        lhs, raw = item.split("=", 1)
        section, key = lhs.split(".", 1)
        values[section][key] = _parse(section, key, raw)
    if env and env.get("ACOUSTIC_KD_WORKDIR"):
        values["paths"]["workdir"] = env["ACOUSTIC_KD_WORKDIR"]
    _validate(values)
    return PipelineConfig(values)


def _validate(values: dict) -> None:
    try:
        cfg = PipelineConfig(values)
        cfg.dataset_spec()
        cfg.teacher_spec()
        cfg.student_spec()
        cfg.teacher_train_config()
        cfg.distill_config()
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from None
    for c in values["teacher"]["conditions"]:
        if c != "all" and not c.isdigit():
            raise ConfigError(f"teacher.conditions entries must be scenario ids or 'all', got {c!r}")
    if set(values["transfer"]["classes"]) & set(values["dataset"]["classes"]):
        raise ConfigError("transfer classes must be disjoint from dataset classes")
