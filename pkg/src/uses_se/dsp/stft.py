"""Sampling-frequency-independent STFT / iSTFT.

Window and hop are fixed *durations* (32 ms / 16 ms by default), so the frame
size in samples follows the sampling rate: 256 @ 8 kHz, 512 @ 16 kHz,
768 @ 24 kHz, 1536 @ 48 kHz. A given duration therefore always yields the same
number of frames, while the number of frequency bins scales with the rate.

Both transforms exist twice: on numpy arrays for the signal path, and as
differentiable :class:`~uses_se.numerics.tensor.Function` objects whose
backward passes are the exact adjoints.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Any

import numpy as np
import numpy.typing as npt

from uses_se.dsp.audio import SUPPORTED_RATES, AudioBuffer
from uses_se.dsp.fft import factorize, fft, irfft, rfft
from uses_se.exceptions import DimensionError, FFTLengthError, UnsupportedRateError
from uses_se.numerics.tensor import Array, Function, Tensor

WINDOWS = ("sqrt_hann",)


@dataclass(frozen=True)
class StftConfig:
    """Fixed-duration framing parameters."""

    window_ms: float = 32.0
    hop_ms: float = 16.0
    window: str = "sqrt_hann"

    def frame_sizes(self, sample_rate: int) -> tuple[int, int]:
        """Return (fft_size, hop) in samples for ``sample_rate``.

        Raises:
            UnsupportedRateError: If either duration is not a whole number of
                samples, or the FFT size is not of the form 2^a*3^b.
        """
        if self.window not in WINDOWS:
            raise UnsupportedRateError(f"unknown window '{self.window}'")
        n_fft = Fraction(str(self.window_ms)) * sample_rate / 1000
        hop = Fraction(str(self.hop_ms)) * sample_rate / 1000
        if n_fft.denominator != 1 or hop.denominator != 1:
            raise UnsupportedRateError(
                f"sampling rate {sample_rate} Hz gives a non-integer {self.window_ms:g} ms window "
                f"({float(n_fft):g} samples); resample to one of "
                f"{', '.join(str(r) for r in SUPPORTED_RATES)} Hz first"
            )
        try:
            factorize(int(n_fft))
        except FFTLengthError as e:
            raise UnsupportedRateError(
                f"sampling rate {sample_rate} Hz: {e.message}; resample to one of "
                f"{', '.join(str(r) for r in SUPPORTED_RATES)} Hz first"
            ) from e
        if int(n_fft) % int(hop) != 0 or int(n_fft) % 2 != 0:
            raise UnsupportedRateError(
                f"window {int(n_fft)} must be even and a multiple of hop {int(hop)}"
            )
        return int(n_fft), int(hop)


def check_rate(sample_rate: int, cfg: StftConfig | None = None) -> None:
    """Raise UnsupportedRateError unless the rate can be framed."""
    (cfg or StftConfig()).frame_sizes(sample_rate)


@dataclass
class ComplexSpectrum:
    """Stacked real/imaginary planes, shape (channels, 2, F, T)."""

    data: npt.NDArray[Any]
    sample_rate: int
    num_samples: int

    @property
    def num_bins(self) -> int:
        return int(self.data.shape[2])

    @property
    def num_frames(self) -> int:
        return int(self.data.shape[3])


# -- framing helpers -------------------------------------------------------


@lru_cache(maxsize=32)
def sqrt_hann(n_fft: int) -> npt.NDArray[np.float64]:
    """Square root of the periodic Hann window; the product of two is Hann."""
    n = np.arange(n_fft)
    return np.sqrt(0.5 - 0.5 * np.cos(2.0 * np.pi * n / n_fft))


def num_frames(length: int, hop: int) -> int:
    return length // hop + 1


@lru_cache(maxsize=64)
def _reflect_index(length: int, pad: int) -> npt.NDArray[np.intp]:
    if length < 2:
        return np.zeros(length + 2 * pad, dtype=np.intp)
    return np.pad(np.arange(length), pad, mode="reflect")


def _frame(padded: Array, n_fft: int, hop: int, frames: int) -> Array:
    view = np.lib.stride_tricks.sliding_window_view(padded, n_fft, axis=-1)
    return view[..., : (frames - 1) * hop + 1 : hop, :]


def _overlap_add(frames: Array, hop: int) -> Array:
    # frames (..., T, n_fft) with n_fft a multiple of hop -> (..., (T - 1) * hop + n_fft)
    count, n_fft = frames.shape[-2:]
    ratio = n_fft // hop
    out = np.zeros((*frames.shape[:-2], (count - 1 + ratio) * hop), dtype=frames.dtype)
    for j in range(ratio):
        piece = frames[..., j * hop : (j + 1) * hop].reshape(*frames.shape[:-2], count * hop)
        out[..., j * hop : j * hop + count * hop] += piece
    return out


@lru_cache(maxsize=64)
def _envelope(n_fft: int, hop: int, frames: int) -> npt.NDArray[np.float64]:
    window = sqrt_hann(n_fft)
    env = _overlap_add(np.broadcast_to(window * window, (frames, n_fft)).copy(), hop)
    return np.where(env > 1e-10, env, 1.0)


def stft_array(x: Array, n_fft: int, hop: int) -> npt.NDArray[np.complex128]:
    """Centered STFT of (..., L) real signals -> complex (..., F, T)."""
    length = x.shape[-1]
    pad = n_fft // 2
    padded = x[..., _reflect_index(length, pad)]
    frames = _frame(padded, n_fft, hop, num_frames(length, hop)) * sqrt_hann(n_fft)
    return np.swapaxes(rfft(frames), -1, -2)


def istft_array(spec: npt.NDArray[Any], n_fft: int, hop: int, length: int) -> Array:
    """Inverse of :func:`stft_array`; returns (..., length) real signals."""
    if spec.shape[-2] != n_fft // 2 + 1:
        raise DimensionError(
            f"spectrum has {spec.shape[-2]} bins, expected {n_fft // 2 + 1} for fft size {n_fft}"
        )
    count = spec.shape[-1]
    frames = irfft(np.swapaxes(spec, -1, -2), n_fft) * sqrt_hann(n_fft)
    signal = _overlap_add(frames, hop) / _envelope(n_fft, hop, count)
    pad = n_fft // 2
    out = signal[..., pad : pad + length]
    if out.shape[-1] < length:
        out = np.concatenate(
            [out, np.zeros((*out.shape[:-1], length - out.shape[-1]), dtype=out.dtype)], axis=-1
        )
    return out


# -- public audio-level API ------------------------------------------------


def stft(audio: AudioBuffer, cfg: StftConfig | None = None) -> ComplexSpectrum:
    """Per-channel STFT with fixed-duration framing -> (C, 2, F, T) spectrum."""
    n_fft, hop = (cfg or StftConfig()).frame_sizes(audio.sample_rate)
    if audio.num_samples == 0:
        raise DimensionError("cannot transform an empty signal")
    spec = stft_array(audio.samples.astype(np.float64), n_fft, hop)
    data = np.stack([spec.real, spec.imag], axis=1).astype(audio.samples.dtype)
    return ComplexSpectrum(data, audio.sample_rate, audio.num_samples)


def istft(spec: ComplexSpectrum, cfg: StftConfig | None = None) -> AudioBuffer:
    """Inverse of :func:`stft`; output has exactly ``spec.num_samples`` samples."""
    n_fft, hop = (cfg or StftConfig()).frame_sizes(spec.sample_rate)
    if spec.data.ndim != 4 or spec.data.shape[1] != 2:
        raise DimensionError(f"spectrum must be (C, 2, F, T), got {spec.data.shape}")
    complex_spec = spec.data[:, 0].astype(np.float64) + 1j * spec.data[:, 1].astype(np.float64)
    samples = istft_array(complex_spec, n_fft, hop, spec.num_samples)
    return AudioBuffer(samples.astype(spec.data.dtype), spec.sample_rate)


# -- differentiable versions ------------------------------------------------


class StftOp(Function):
    """(..., L) real tensor -> (..., 2, F, T) real/imag planes."""

    name = "stft"

    def forward(self, x: Array, n_fft: int, hop: int) -> Array:  # type: ignore[override]
        self.n_fft, self.hop, self.length = n_fft, hop, x.shape[-1]
        spec = stft_array(x, n_fft, hop)
        return np.stack([spec.real, spec.imag], axis=-3)

    def backward(self, grad: Array) -> tuple[Array | None, ...]:
        n_fft, hop, length = self.n_fft, self.hop, self.length
        pad = n_fft // 2
        g = np.swapaxes(grad[..., 0, :, :] + 1j * grad[..., 1, :, :], -1, -2)  # (..., T, F)
        full = np.zeros((*g.shape[:-1], n_fft), dtype=np.complex128)
        full[..., : g.shape[-1]] = g
        gframes = np.real(fft(np.conj(full))) * sqrt_hann(n_fft)
        gpadded = _overlap_add(gframes, hop)
        index = _reflect_index(length, pad)
        gpadded = gpadded[..., : index.shape[0]]
        lead = gpadded.shape[:-1]
        flat = gpadded.reshape(-1, gpadded.shape[-1])
        gx = np.zeros((flat.shape[0], length))
        np.add.at(gx, (slice(None), index[: flat.shape[1]]), flat)
        return (gx.reshape(*lead, length),)


class IstftOp(Function):
    """(..., 2, F, T) real/imag planes -> (..., length) real tensor."""

    name = "istft"

    def forward(self, x: Array, n_fft: int, hop: int, length: int) -> Array:  # type: ignore[override]
        if x.shape[-3] != 2:
            raise DimensionError(f"istft expects (..., 2, F, T) planes, got {x.shape}")
        self.n_fft, self.hop, self.length = n_fft, hop, length
        self.frames = x.shape[-1]
        return istft_array(x[..., 0, :, :] + 1j * x[..., 1, :, :], n_fft, hop, length)

    def backward(self, grad: Array) -> tuple[Array | None, ...]:
        n_fft, hop, length, frames = self.n_fft, self.hop, self.length, self.frames
        pad = n_fft // 2
        total = (frames - 1) * hop + n_fft
        gsignal = np.zeros((*grad.shape[:-1], total))
        keep = min(length, total - pad)
        gsignal[..., pad : pad + keep] = grad[..., :keep]
        gsignal = gsignal / _envelope(n_fft, hop, frames)
        gframes = _frame(gsignal, n_fft, hop, frames) * sqrt_hann(n_fft)
        bins = n_fft // 2 + 1
        weight = np.full(bins, 2.0 / n_fft)
        weight[0] = weight[-1] = 1.0 / n_fft
        gspec = np.swapaxes(rfft(gframes) * weight, -1, -2)  # (..., F, T)
        return (np.stack([gspec.real, gspec.imag], axis=-3),)


def stft_tensor(x: Tensor, n_fft: int, hop: int) -> Tensor:
    return StftOp.apply(x, n_fft=n_fft, hop=hop)


def istft_tensor(spec: Tensor, n_fft: int, hop: int, length: int) -> Tensor:
    return IstftOp.apply(spec, n_fft=n_fft, hop=hop, length=length)
