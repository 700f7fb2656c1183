"""Training losses and evaluation metrics.

All functions take :class:`Tensor` inputs (numpy arrays are wrapped) so the
same code serves as a differentiable loss under a tape and as a plain metric
outside one.
"""

from __future__ import annotations

import itertools
import logging
import math
from typing import Any

import numpy as np

from uses_se.config import LossConfig
from uses_se.dsp.stft import stft_tensor
from uses_se.exceptions import ContractError, DimensionError, UndefinedReferenceError
from uses_se.numerics.tensor import Tensor

logger = logging.getLogger(__name__)

CAP_DB = 80.0
_CAP_RATIO = 10.0 ** (-CAP_DB / 10.0)
_TINY = 1e-30
_DB = 10.0 / math.log(10.0)
MAX_PIT_SOURCES = 3


def _as_tensor(x: Any, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else None
    return Tensor(np.asarray(x), dtype=dtype)


def _pair(est: Any, ref: Any) -> tuple[Tensor, Tensor]:
    est_t = _as_tensor(est)
    ref_t = _as_tensor(ref, est_t)
    if est_t.shape != ref_t.shape:
        raise DimensionError(f"estimate {est_t.shape} and reference {ref_t.shape} differ in shape")
    if est_t.size == 0:
        raise DimensionError("cannot score empty signals")
    return est_t, ref_t


def _scalar_like(value: Tensor, shape: tuple[int, ...]) -> Tensor:
    return value.reshape(*([1] * len(shape))).broadcast_to(shape)


def _ratio_db(signal_energy: Tensor, residual_energy: Tensor) -> Tensor:
    # residual floored at -80 dB relative to the signal: a smooth cap at +80 dB
    ratio = (signal_energy + _TINY) / (residual_energy + signal_energy * _CAP_RATIO + _TINY)
    return ratio.log() * _DB


def si_snr(est: Any, ref: Any) -> Tensor:
    """Scale-invariant SNR in dB, capped at +80 dB.

    The estimate is projected onto the reference without mean removal:
    ``target = <est, ref> / ||ref||^2 * ref``.

    Raises:
        UndefinedReferenceError: If the reference is all zeros.
    """
    est_t, ref_t = _pair(est, ref)
    ref_energy = (ref_t * ref_t).sum()
    if ref_energy.item() == 0.0:
        raise UndefinedReferenceError("SI-SNR reference signal is all zeros")
    alpha = (est_t * ref_t).sum() / ref_energy
    target = ref_t * _scalar_like(alpha, ref_t.shape)
    noise = est_t - target
    return _ratio_db((target * target).sum(), (noise * noise).sum())


def sdr(est: Any, ref: Any) -> Tensor:
    """Plain signal-to-distortion ratio ``||ref||^2 / ||ref - est||^2`` in dB (no BSS-eval)."""
    est_t, ref_t = _pair(est, ref)
    ref_energy = (ref_t * ref_t).sum()
    if ref_energy.item() == 0.0:
        raise UndefinedReferenceError("SDR reference signal is all zeros")
    residual = ref_t - est_t
    return _ratio_db(ref_energy, (residual * residual).sum())


def si_snr_improvement(est: Any, mixture: Any, ref: Any) -> float:
    """SI-SNRi: score of the estimate minus score of the unprocessed mixture."""
    return si_snr(est, ref).item() - si_snr(mixture, ref).item()


def optimal_scale(est: Any, ref: Any) -> tuple[Tensor, bool]:
    """Least-squares gain ``<est, ref> / ||est||^2`` mapping est onto ref.

    Returns:
        The gain and whether it fell back to 1 because est is all zeros.
    """
    est_t, ref_t = _pair(est, ref)
    energy = (est_t * est_t).sum()
    if energy.item() == 0.0:
        return Tensor(np.array(1.0), dtype=est_t.dtype), True
    return (est_t * ref_t).sum() / energy, False


def _magnitude(signal: Tensor, window: int, eps: float) -> Tensor:
    spec = stft_tensor(signal, window, window // 2)
    return ((spec * spec).sum(axis=-3) + eps * eps).sqrt()


def multi_res_l1_loss(est: Any, ref: Any, cfg: LossConfig | None = None) -> Tensor:
    """Scale-invariant multi-resolution spectral L1 plus weighted time-domain L1.

    ``est`` is first rescaled by :func:`optimal_scale`, so the loss ignores its
    gain. Each resolution uses a square-root Hann STFT with hop = window / 2.
    """
    cfg = cfg or LossConfig()
    est_t, ref_t = _pair(est, ref)
    alpha, fell_back = optimal_scale(est_t, ref_t)
    if fell_back:
        logger.warning("estimate is all zeros; scale-invariant loss uses a gain of 1")
    scaled = est_t * _scalar_like(alpha, est_t.shape)
    loss = (scaled - ref_t).abs().mean() * cfg.time_weight
    for window in cfg.mr_windows:
        diff = _magnitude(scaled, window, cfg.eps) - _magnitude(ref_t, window, cfg.eps)
        loss = loss + diff.abs().mean()
    return loss


def pit_si_snr_loss(ests: Any, refs: Any) -> tuple[Tensor, tuple[int, ...]]:
    """Permutation-invariant negative SI-SNR over (S, L) estimates and references.

    Returns:
        The loss of the best assignment and that assignment as a tuple whose
        i-th entry is the (0-based) reference matched to estimate i.
    """
    ests_t, refs_t = _pair(ests, refs)
    if ests_t.ndim != 2:
        raise DimensionError(f"PIT expects (sources, samples) signals, got {ests_t.shape}")
    count = ests_t.shape[0]
    if count > MAX_PIT_SOURCES:
        raise ContractError(f"PIT supports at most {MAX_PIT_SOURCES} sources, got {count}")
    scores = [[si_snr(ests_t[i], refs_t[j]) for j in range(count)] for i in range(count)]
    best: tuple[Tensor, tuple[int, ...]] | None = None
    for perm in itertools.permutations(range(count)):
        total = scores[0][perm[0]]
        for i in range(1, count):
            total = total + scores[i][perm[i]]
        loss = total * (-1.0 / count)
        if best is None or loss.item() < best[0].item():
            best = (loss, perm)
    assert best is not None
    return best
