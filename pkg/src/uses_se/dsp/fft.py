"""Mixed-radix (2 and 3) fast Fourier transform over the last axis.

The transform is computed stage by stage on an array of shape (..., P, Q)
where column ``b`` holds the length-P DFT of ``x[b::Q]``. Each stage merges
``r`` interleaved columns into a DFT of length ``P*r``, so only one numpy
expression per prime factor is executed regardless of the batch size.
"""

from __future__ import annotations

from typing import Any

import numpy as np
import numpy.typing as npt

from uses_se.exceptions import FFTLengthError

RADICES = (3, 2)


def factorize(length: int) -> list[int]:
    """Split ``length`` into radix-3 and radix-2 stages.

    Raises:
        FFTLengthError: If the length is < 1 or has any other prime factor.
    """
    if length < 1:
        raise FFTLengthError(f"FFT length must be >= 1, got {length}", factor=length)
    factors: list[int] = []
    rest = length
    for radix in RADICES:
        while rest % radix == 0:
            factors.append(radix)
            rest //= radix
    if rest != 1:
        offending = next(p for p in range(5, rest + 1) if rest % p == 0)
        raise FFTLengthError(
            f"FFT length {length} has unsupported prime factor {offending} "
            "(only 2^a*3^b lengths are supported)",
            factor=offending,
        )
    return factors


def _transform(x: npt.NDArray[Any], sign: float) -> npt.NDArray[np.complex128]:
    x = np.asarray(x, dtype=np.complex128)
    length = x.shape[-1]
    lead = x.shape[:-1]
    out = x.reshape(*lead, 1, length)
    p = 1
    for radix in factorize(length):
        q = out.shape[-1] // radix
        # column b = j*q + b' belongs to sub-sequence j of new column b'
        s = out.reshape(*lead, p, radix, q)
        pr = p * radix
        j = np.arange(radix)
        twiddle = np.exp(sign * 2j * np.pi * np.outer(np.arange(p), j) / pr)
        s = s * twiddle[:, :, None]
        small = np.exp(sign * 2j * np.pi * np.outer(j, j) / radix)
        out = np.einsum("tj,...pjb->...tpb", small, s).reshape(*lead, pr, q)
        p = pr
    return out.reshape(*lead, length)


def fft(x: npt.NDArray[Any]) -> npt.NDArray[np.complex128]:
    """Forward DFT X[k] = sum_n x[n] exp(-2 pi i k n / L) along the last axis."""
    return _transform(x, -1.0)


def ifft(x: npt.NDArray[Any]) -> npt.NDArray[np.complex128]:
    """Inverse DFT, normalized by 1/L so that ifft(fft(x)) == x."""
    return _transform(x, 1.0) / x.shape[-1]


def rfft(x: npt.NDArray[Any]) -> npt.NDArray[np.complex128]:
    """Non-negative frequency half (L/2 + 1 bins) of the DFT of a real signal."""
    return fft(x)[..., : x.shape[-1] // 2 + 1]


def irfft(spectrum: npt.NDArray[Any], length: int) -> npt.NDArray[np.float64]:
    """Real inverse of :func:`rfft` for an even ``length``.

    Imaginary parts of the DC and Nyquist bins do not contribute.
    """
    bins = length // 2 + 1
    full = np.zeros((*spectrum.shape[:-1], length), dtype=np.complex128)
    full[..., :bins] = spectrum
    full[..., bins:] = np.conj(spectrum[..., 1 : length - bins + 1][..., ::-1])
    return np.real(ifft(full))
