"""Polyphase resampling between the supported native rates."""

from __future__ import annotations

import logging
from math import gcd

import numpy as np
from scipy.signal import resample_poly

from uses_se.dsp.audio import SUPPORTED_RATES, AudioBuffer
from uses_se.exceptions import UnsupportedRateError

logger = logging.getLogger(__name__)


def resample(audio: AudioBuffer, target_rate: int) -> AudioBuffer:
    """Resample every channel to ``target_rate`` with a windowed-sinc polyphase filter.

    Both rates must be in :data:`SUPPORTED_RATES`. The identity rate returns a
    bit-identical copy. Output length is ``ceil(L * up / down)``.
    """
    for rate in (audio.sample_rate, target_rate):
        if rate not in SUPPORTED_RATES:
            raise UnsupportedRateError(
                f"cannot resample {audio.sample_rate} Hz -> {target_rate} Hz: "
                f"supported rates are {', '.join(str(r) for r in SUPPORTED_RATES)} Hz"
            )
    if target_rate == audio.sample_rate:
        return AudioBuffer(audio.samples.copy(), audio.sample_rate)

    common = gcd(audio.sample_rate, target_rate)
    up, down = target_rate // common, audio.sample_rate // common
    logger.debug("resampling %d -> %d Hz (up=%d, down=%d)", audio.sample_rate, target_rate, up, down)
    out = resample_poly(audio.samples, up, down, axis=-1, padtype="line")
    return AudioBuffer(np.asarray(out, dtype=audio.samples.dtype), target_rate)
