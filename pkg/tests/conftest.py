from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))

from acoustic_kd.beamformer import build_steering_grid  # noqa: E402
from acoustic_kd.micarray import build_default_geometry  # noqa: E402


@pytest.fixture(scope="session")
def geometry():
    return build_default_geometry(7)


@pytest.fixture(scope="session")
def grid(geometry):
    return build_steering_grid(geometry)


@pytest.fixture(scope="session")
def pipeline(tmp_path_factory):
    """The tiny CLI config run through every command once: (config path, workdir)."""
    from pipeline_support import run_all, write_cfg

    base = tmp_path_factory.mktemp("cli")
    cfg = write_cfg(base / "tiny.ini")
    run_all(cfg, base / "work")
    return cfg, base / "work"


@pytest.fixture(scope="session")
def pipeline_rerun(pipeline, tmp_path_factory):
    """A second, independent run of the same config and seed in a fresh workdir."""
    from pipeline_support import run_all

    work = tmp_path_factory.mktemp("cli_rerun") / "work"
    run_all(pipeline[0], work)
    return work


# one line per acceptance criterion, printed at the end of the run
ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
