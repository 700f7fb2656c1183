"""RIFF/WAV reading and writing (PCM16 and IEEE float32, multi-channel)."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import soundfile as sf

from uses_se.dsp.audio import AudioBuffer
from uses_se.exceptions import StorageError, WavFormatError
from uses_se.storage import atomic_path

SUBTYPES = {"pcm16": "PCM_16", "float32": "FLOAT"}


def read_wav(path: str | Path) -> AudioBuffer:
    """Read a WAV file into a (channels, length) float64 buffer.

    The header's sample rate is authoritative.
    """
    path = Path(path)
    if not path.exists():
        raise StorageError(f"audio file not found: {path}")
    try:
        data, rate = sf.read(str(path), dtype="float64", always_2d=True)
    except (sf.LibsndfileError, RuntimeError, ValueError) as e:
        raise WavFormatError(f"cannot read WAV file {path}: {e}") from e
    return AudioBuffer(np.ascontiguousarray(data.T), int(rate))


def write_wav(path: str | Path, audio: AudioBuffer, encoding: str = "float32") -> Path:
    """Write ``audio`` atomically; ``encoding`` is 'pcm16' or 'float32'.

    PCM16 samples are clipped to [-1, 1).
    """
    if encoding not in SUBTYPES:
        raise WavFormatError(f"unsupported WAV encoding '{encoding}' (choose pcm16 or float32)")
    samples = audio.samples.T
    if encoding == "pcm16":
        samples = np.clip(samples, -1.0, 1.0 - 1.0 / 32768)
    try:
        with atomic_path(path) as tmp:
            sf.write(str(tmp), samples, audio.sample_rate, subtype=SUBTYPES[encoding], format="WAV")
    except (sf.LibsndfileError, RuntimeError, ValueError, OSError) as e:
        raise WavFormatError(f"cannot write WAV file {path}: {e}") from e
    return Path(path)
