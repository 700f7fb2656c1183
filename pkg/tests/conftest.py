"""Pytest configuration and fixtures."""

import logging
from collections.abc import Iterator
from pathlib import Path

import numpy as np
import pytest
from click.testing import CliRunner

from uses_se.config import UsesConfig
from uses_se.dsp.audio import AudioBuffer
from uses_se.dsp.wav import write_wav
from uses_se.model.checkpoint import save_checkpoint
from uses_se.model.params import UsesModel, init_params


@pytest.fixture
def cli_runner() -> CliRunner:
    """Provide a Click CLI test runner."""
    return CliRunner()


@pytest.fixture(autouse=True)
def reset_logging() -> Iterator[None]:
    """Drop handlers bound to a finished CliRunner stream."""
    yield
    logger = logging.getLogger("uses_se")
    for handler in list(logger.handlers):
        logger.removeHandler(handler)
    logger.setLevel(logging.NOTSET)


@pytest.fixture
def rng() -> np.random.Generator:
    """Deterministic random generator."""
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_cfg() -> UsesConfig:
    """Smallest configuration that still exercises every module."""
    return UsesConfig(D=8, N=8, K=2, K_s=1, H=8, G=2, seg_frames=8, heads=2)


@pytest.fixture
def tiny_model(tiny_cfg: UsesConfig) -> UsesModel:
    """Float64 model built from tiny_cfg."""
    return init_params(tiny_cfg, seed=0)


@pytest.fixture
def noise_audio(rng: np.random.Generator) -> AudioBuffer:
    """Two channels of 0.25 s white noise at 8 kHz."""
    return AudioBuffer(rng.standard_normal((2, 2000)), 8000)


@pytest.fixture
def checkpoint_path(tmp_path: Path, tiny_model: UsesModel) -> Path:
    """Checkpoint of tiny_model on disk."""
    return save_checkpoint(tmp_path / "tiny.ckpt", tiny_model)


@pytest.fixture
def noisy_wav(tmp_path: Path, noise_audio: AudioBuffer) -> Path:
    """Two-channel 8 kHz WAV file."""
    return write_wav(tmp_path / "noisy.wav", noise_audio.scaled(0.1))
