from __future__ import annotations

from pathlib import Path

import pytest

from quiescent_front.cli import stage_certify, stage_wave
from quiescent_front.config import load_config

ROOT = Path(__file__).resolve().parents[1]
REF1_PATH = ROOT / "configs" / "ref1.ini"


@pytest.fixture(scope="session")
def ref1_cfg():
    return load_config(REF1_PATH)


@pytest.fixture(scope="session")
def ref1_params(ref1_cfg):
    return ref1_cfg.params()


@pytest.fixture(scope="session")
def gauss(ref1_cfg):
    return ref1_cfg.kernel_spec()


@pytest.fixture(scope="session")
def ref1_profile(ref1_cfg):
    return stage_wave(ref1_cfg)


@pytest.fixture(scope="session")
def ref1_cert(ref1_cfg, ref1_profile):
    return stage_certify(ref1_cfg, ref1_profile)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
