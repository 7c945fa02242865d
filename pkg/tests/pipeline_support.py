"""A tiny end-to-end CLI configuration shared by the CLI tests and the acceptance suite."""
from __future__ import annotations

import json
from pathlib import Path

from acoustic_kd.cli import main

TINY = """
[dataset]
classes = 0, 1
subjects = 1
scenarios = 1, 2
takes = 5
duration_s = 5
reflections = 2

[transfer]
classes = 6, 7
subjects = 1
takes = 6

[split]
min_per_class = 3

[teacher]
width = 0.0625
epochs = 2
patience = none

[student]
width = 0.0625
epochs = 2
patience = none

[transfer_eval]
layers = conv3, penultimate
"""

PIPELINE = [
    ["simulate"], ["beamform"], ["featurize"], ["train-teacher"], ["distill"],
    ["eval", "--scenario-matrix"], ["transfer-eval"], ["render", "--take", "0", "--frame", "3"], ["report"],
]


def write_cfg(path: Path, text: str = TINY) -> Path:
    path.write_text(text)
    return path


def run_all(cfg: Path, work: Path) -> None:
    for cmd in PIPELINE:
        code = main(cmd + ["--config", str(cfg), "--workdir", str(work)])
        assert code == 0, cmd


def manifest_hashes(work: Path) -> dict:
    out = {}
    for p in sorted((work / "manifests").glob("*.json")):
        m = json.loads(p.read_text())
        out[m["command"]] = (m["config_hash"], m["seed"], m["inputs"], m["outputs"])
    return out
