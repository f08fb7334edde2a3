import logging
from pathlib import Path

import pytest

from timecoding_qkd.qkd.config import RunConfig
from timecoding_qkd.qkd.pulse import PulseProfile
from timecoding_qkd.qkd.pulse import SlotGrid


@pytest.fixture(autouse=True)
def _artifact_dir(settings, tmp_path: Path):
    settings.QKD_OUTPUT_DIR = str(tmp_path / "artifacts")


@pytest.fixture
def qkd_caplog(caplog):
    """caplog wired to the package logger, which does not propagate to the root."""
    logger = logging.getLogger("timecoding_qkd")
    logger.addHandler(caplog.handler)
    yield caplog
    logger.removeHandler(caplog.handler)


@pytest.fixture
def grid() -> SlotGrid:
    return SlotGrid()


@pytest.fixture
def square() -> PulseProfile:
    return PulseProfile.square()


@pytest.fixture
def fitted() -> PulseProfile:
    return PulseProfile.fitted()


@pytest.fixture
def small_config() -> RunConfig:
    """Default set-up shrunk to a few short sequences."""
    return RunConfig.defaults().with_overrides(
        {
            "protocol.pulses_per_sequence": 4000,
            "protocol.sequence_count": 6,
            "security.q_points": 40,
            "security.range_points": 4,
        },
    )
