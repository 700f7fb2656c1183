"""Signal processing front end: audio buffers, FFT, SFI STFT, resampling, WAV I/O."""

from uses_se.dsp.audio import (
    SUPPORTED_RATES,
    VARIANCE_FLOOR,
    AudioBuffer,
    revert_variance,
    variance_normalize,
)
from uses_se.dsp.fft import factorize, fft, ifft, irfft, rfft
from uses_se.dsp.resample import resample
from uses_se.dsp.stft import (
    ComplexSpectrum,
    StftConfig,
    istft,
    istft_tensor,
    stft,
    stft_tensor,
)
from uses_se.dsp.wav import read_wav, write_wav

__all__ = [
    "SUPPORTED_RATES",
    "VARIANCE_FLOOR",
    "AudioBuffer",
    "ComplexSpectrum",
    "StftConfig",
    "factorize",
    "fft",
    "ifft",
    "irfft",
    "istft",
    "istft_tensor",
    "read_wav",
    "resample",
    "revert_variance",
    "rfft",
    "stft",
    "stft_tensor",
    "variance_normalize",
]
