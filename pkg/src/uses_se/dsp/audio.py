"""Multi-channel audio buffers and variance normalization."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any

import numpy as np
import numpy.typing as npt

from uses_se.exceptions import DimensionError, ValidationError

SUPPORTED_RATES: tuple[int, ...] = (8000, 16000, 24000, 48000)
VARIANCE_FLOOR = 1e-8


@dataclass
class AudioBuffer:
    """Sampled waveform of shape (channels, length) with its sampling rate."""

    samples: npt.NDArray[Any]
    sample_rate: int

    def __post_init__(self) -> None:
        samples = np.asarray(self.samples)
        if samples.ndim == 1:
            samples = samples[None, :]
        if samples.ndim != 2:
            raise DimensionError(f"audio must be (channels, length), got shape {samples.shape}")
        if samples.dtype not in (np.float32, np.float64):
            samples = samples.astype(np.float64)
        if self.sample_rate <= 0:
            raise ValidationError(f"sample rate must be positive, got {self.sample_rate}")
        self.samples = samples
        self.sample_rate = int(self.sample_rate)

    @property
    def num_channels(self) -> int:
        return int(self.samples.shape[0])

    @property
    def num_samples(self) -> int:
        return int(self.samples.shape[1])

    @property
    def duration(self) -> float:
        return self.num_samples / self.sample_rate

    def channel(self, index: int) -> AudioBuffer:
        return AudioBuffer(self.samples[index : index + 1].copy(), self.sample_rate)

    def select(self, indices: list[int]) -> AudioBuffer:
        return AudioBuffer(self.samples[indices].copy(), self.sample_rate)

    def scaled(self, factor: float) -> AudioBuffer:
        return AudioBuffer(self.samples * factor, self.sample_rate)


def variance_normalize(audio: AudioBuffer) -> tuple[AudioBuffer, float]:
    """Divide by one global standard deviation shared by all channels.

    Returns:
        The normalized buffer and the scale needed to revert it.
    """
    scale = max(float(np.std(audio.samples)), VARIANCE_FLOOR)
    return AudioBuffer(audio.samples / scale, audio.sample_rate), scale


def revert_variance(audio: AudioBuffer, scale: float) -> AudioBuffer:
    return AudioBuffer(audio.samples * scale, audio.sample_rate)
