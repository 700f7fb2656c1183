"""Forward pass of the USES network.

Shapes follow the (channels, dim, freq, time) convention throughout. The
channel axis doubles as the batch axis of every convolution, so weights are
shared across microphones and any channel count works with one parameter set.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass

import numpy as np

from uses_se.dsp.audio import AudioBuffer, revert_variance, variance_normalize
from uses_se.dsp.stft import (
    ComplexSpectrum,
    StftConfig,
    istft,
    istft_tensor,
    stft,
    stft_tensor,
)
from uses_se.exceptions import ConditioningError, DimensionError, ValidationError
from uses_se.model.params import UsesModel, block_has_tac
from uses_se.numerics.layers import (
    conv2d,
    conv_transpose2d,
    layer_norm,
    linear,
    multi_head_attention,
    prelu,
    symmetric_mean,
)
from uses_se.numerics.tensor import Tensor, concat

logger = logging.getLogger(__name__)


class MemoryMode(enum.Enum):
    """Which learnable token group conditions the network."""

    DEREVERB = "dereverb"  # mem1: denoise + dereverberate
    DENOISE = "denoise"  # mem2: denoise only

    @property
    def param_name(self) -> str:
        return "mem1" if self is MemoryMode.DEREVERB else "mem2"


@dataclass
class MemoryState:
    """Processed memory tokens (N x G) carried from one segment to the next."""

    tokens: Tensor
    mode: MemoryMode

    @classmethod
    def initial(cls, model: UsesModel, mode: MemoryMode) -> MemoryState:
        cfg = model.cfg
        if cfg.G == 0:
            return cls(Tensor(np.zeros((cfg.N, 0)), dtype=model.dtype), mode)
        return cls(model[mode.param_name].reshape(cfg.N, cfg.G), mode)

    def detach(self) -> MemoryState:
        return MemoryState(self.tokens.detach(), self.mode)


# -- encoder ---------------------------------------------------------------


def encode_spectrum(spec: Tensor, model: UsesModel) -> Tensor:
    """(C, 2, F, T) spectrum -> (C, N, F, T) bottleneck features."""
    if spec.ndim != 4 or spec.shape[1] != 2:
        raise DimensionError(f"encoder expects a (C, 2, F, T) spectrum, got {spec.shape}")
    x = conv2d(spec, model["encoder.conv.weight"], model["encoder.conv.bias"], padding=1)
    x = layer_norm(x, model["encoder.norm.gain"], model["encoder.norm.bias"], axis=1)
    return conv2d(x, model["encoder.bottleneck.weight"], model["encoder.bottleneck.bias"])


def encode(
    audio: AudioBuffer, model: UsesModel, stft_cfg: StftConfig | None = None
) -> tuple[Tensor, ComplexSpectrum]:
    """STFT every channel and project to bottleneck features.

    Returns:
        Features of shape (C, N, F, T) and the spectrum they came from.
    """
    if audio.num_samples == 0:
        raise ValidationError("cannot encode an empty signal")
    spec = stft(audio, stft_cfg)
    return encode_spectrum(Tensor(spec.data, dtype=model.dtype), model), spec


# -- multi-path blocks ---------------------------------------------------------


def _transformer_layer(x: Tensor, model: UsesModel, prefix: str) -> Tensor:
    """Pre-norm self-attention + feed-forward over (B, L, N) sequences."""
    heads = model.cfg.heads
    h = layer_norm(x, model[f"{prefix}.norm1.gain"], model[f"{prefix}.norm1.bias"])
    x = x + multi_head_attention(h, h, h, heads, model.attention(f"{prefix}.attn"))
    h = layer_norm(x, model[f"{prefix}.norm2.gain"], model[f"{prefix}.norm2.bias"])
    h = linear(h, model[f"{prefix}.ffn.w1"], model[f"{prefix}.ffn.b1"]).relu()
    return x + linear(h, model[f"{prefix}.ffn.w2"], model[f"{prefix}.ffn.b2"])


def frequency_transformer(features: Tensor, model: UsesModel, prefix: str) -> Tensor:
    c, n, f, t = features.shape
    seq = features.transpose(0, 3, 2, 1).reshape(c * t, f, n)
    out = _transformer_layer(seq, model, prefix)
    return out.reshape(c, t, f, n).transpose(0, 3, 2, 1)


def time_transformer(features: Tensor, model: UsesModel, prefix: str) -> Tensor:
    c, n, f, t = features.shape
    seq = features.transpose(0, 2, 3, 1).reshape(c * f, t, n)
    out = _transformer_layer(seq, model, prefix)
    return out.reshape(c, f, t, n).transpose(0, 3, 1, 2)


def tac(features: Tensor, model: UsesModel, prefix: str) -> Tensor:
    """Transform-average-concatenate across microphones, with a residual path."""
    x = features.transpose(0, 2, 3, 1)  # (C, F, T, N)
    z = prelu(linear(x, model[f"{prefix}.w1"], model[f"{prefix}.b1"]), model[f"{prefix}.slope1"])
    avg = symmetric_mean(z, axis=0).broadcast_to(z.shape)
    y = linear(concat([z, avg], axis=-1), model[f"{prefix}.w2"], model[f"{prefix}.b2"])
    y = prelu(y, model[f"{prefix}.slope2"])
    return (x + y).transpose(0, 3, 1, 2)


def multi_path_block(features: Tensor, model: UsesModel, index: int, with_tac: bool) -> Tensor:
    prefix = f"blocks.{index}"
    x = tac(features, model, f"{prefix}.tac") if with_tac else features
    x = frequency_transformer(x, model, f"{prefix}.freq")
    return time_transformer(x, model, f"{prefix}.time")


def merge_reference(features: Tensor, ref_channel: int) -> Tensor:
    """Keep only the reference microphone: (C, N, F, T) -> (1, N, F, T)."""
    if not 0 <= ref_channel < features.shape[0]:
        raise ValidationError(
            f"reference channel {ref_channel} out of range for {features.shape[0]} channels"
        )
    return features[ref_channel : ref_channel + 1]


# -- memory-token segments ------------------------------------------------------


def prefix_tokens(features: Tensor, mem: MemoryState) -> Tensor:
    """Broadcast N x G tokens over channels and frequencies and prepend them in time."""
    c, n, f, _ = features.shape
    g = mem.tokens.shape[1]
    if g == 0:
        return features
    if mem.tokens.shape[0] != n:
        raise DimensionError(f"memory tokens {mem.tokens.shape} do not match feature dim {n}")
    tokens = mem.tokens.reshape(1, n, 1, g).broadcast_to((c, n, f, g))
    return concat([tokens, features], axis=3)


def forward_segment(
    features: Tensor,
    mem: MemoryState,
    model: UsesModel,
    mode: MemoryMode | None = None,
) -> tuple[Tensor, MemoryState]:
    """Run all blocks over one segment with memory tokens as a time prefix.

    Args:
        features: (C, N, F, T_seg) encoder output, T_seg <= seg_frames.
        mem: State from the previous segment (or the learnable initial tokens).
        model: Network parameters.
        mode: Requested conditioning; must match ``mem.mode`` when given.

    Returns:
        Enhanced reference-channel features (1, N, F, T_seg) and the next state.
    """
    cfg = model.cfg
    if mode is not None and mode is not mem.mode:
        raise ConditioningError(
            f"memory state was produced in '{mem.mode.value}' mode, requested '{mode.value}'"
        )
    if features.shape[3] > cfg.seg_frames:
        raise DimensionError(
            f"segment has {features.shape[3]} frames, more than seg_frames={cfg.seg_frames}"
        )
    g = mem.tokens.shape[1]
    x = prefix_tokens(features, mem)
    for b in range(cfg.K):
        with_tac = block_has_tac(cfg, b)
        x = multi_path_block(x, model, b, with_tac)
        if b == cfg.K_s - 1:
            x = merge_reference(x, cfg.ref_channel)
    if g == 0:
        return x, mem
    tokens = x[:, :, :, :g].mean(axis=2).reshape(cfg.N, g)
    return x[:, :, :, g:], MemoryState(tokens, mem.mode)


# -- decoder ---------------------------------------------------------------


def decode_spectrum(features: Tensor, model: UsesModel) -> Tensor:
    """(1, N, F, T) features -> (S, 2, F, T) complex spectral mapping."""
    if features.ndim != 4 or features.shape[0] != 1 or features.shape[1] != model.cfg.N:
        raise DimensionError(f"decoder expects (1, {model.cfg.N}, F, T), got {features.shape}")
    x = prelu(features, model["decoder.slope"])
    x = conv2d(x, model["decoder.pointwise.weight"], model["decoder.pointwise.bias"])
    x = conv_transpose2d(x, model["decoder.trconv.weight"], model["decoder.trconv.bias"], padding=1)
    _, _, f, t = x.shape
    return x.reshape(model.cfg.num_outputs, 2, f, t)


def decode_tensor(
    features: Tensor, model: UsesModel, n_fft: int, hop: int, length: int
) -> Tensor:
    """Differentiable decode to (S, length) waveforms."""
    return istft_tensor(decode_spectrum(features, model), n_fft, hop, length)


def decode(
    features: Tensor,
    model: UsesModel,
    spec_meta: ComplexSpectrum,
    stft_cfg: StftConfig | None = None,
) -> AudioBuffer:
    """Decode features to an AudioBuffer with ``num_outputs`` channels."""
    if features.shape[2] != spec_meta.num_bins or features.shape[3] != spec_meta.num_frames:
        raise DimensionError(
            f"features {features.shape} do not match spectrum "
            f"F={spec_meta.num_bins}, T={spec_meta.num_frames}"
        )
    spec = decode_spectrum(features, model)
    out = ComplexSpectrum(spec.data, spec_meta.sample_rate, spec_meta.num_samples)
    return istft(out, stft_cfg)


# -- whole utterances ------------------------------------------------------


def segment_bounds(num_frames: int, seg_frames: int) -> list[tuple[int, int]]:
    return [(s, min(s + seg_frames, num_frames)) for s in range(0, num_frames, seg_frames)]


def encode_segment(spec: Tensor, model: UsesModel, start: int, stop: int) -> Tensor:
    """Encoder features of frames [start, stop) from the spectrum plus kernel context.

    Only the frames the encoder convolution can see are encoded, so the result
    equals the matching slice of ``encode_spectrum(spec)`` while working memory
    stays proportional to the segment.
    """
    context = model["encoder.conv.weight"].shape[3] // 2
    lo, hi = max(start - context, 0), min(stop + context, spec.shape[3])
    features = encode_spectrum(spec[:, :, :, lo:hi], model)
    return features[:, :, :, start - lo : stop - lo]


def process_spectrum(spec: Tensor, model: UsesModel, mode: MemoryMode) -> Tensor:
    """Segment-wise processing of a (C, 2, F, T) spectrum into (S, 2, F, T) estimates.

    Each segment is decoded to its own spectrum and the segment spectra are
    concatenated along time, so one iSTFT covers the whole utterance. Memory
    state flows across segments (and carries gradients while a tape records).
    The encoder also runs per segment, so no whole-utterance feature map is built.
    """
    if spec.ndim != 4 or spec.shape[1] != 2:
        raise DimensionError(f"encoder expects a (C, 2, F, T) spectrum, got {spec.shape}")
    mem = MemoryState.initial(model, mode)
    pieces = []
    for start, stop in segment_bounds(spec.shape[3], model.cfg.seg_frames):
        features = encode_segment(spec, model, start, stop)
        enhanced, mem = forward_segment(features, mem, model, mode)
        pieces.append(decode_spectrum(enhanced, model))
    return pieces[0] if len(pieces) == 1 else concat(pieces, axis=3)


def forward_waveform(
    mixture: Tensor,
    model: UsesModel,
    mode: MemoryMode,
    sample_rate: int,
    stft_cfg: StftConfig | None = None,
) -> Tensor:
    """Differentiable (C, L) mixture -> (S, L) estimates, used for training."""
    n_fft, hop = (stft_cfg or StftConfig()).frame_sizes(sample_rate)
    length = mixture.shape[-1]
    spec = stft_tensor(mixture, n_fft, hop)
    return istft_tensor(process_spectrum(spec, model, mode), n_fft, hop, length)


def enhance(
    audio: AudioBuffer,
    model: UsesModel,
    mode: MemoryMode = MemoryMode.DENOISE,
    stft_cfg: StftConfig | None = None,
) -> AudioBuffer:
    """Enhance (or separate) a full utterance of any length, channel count and rate.

    The output has ``num_outputs`` channels at the input's sampling rate and
    exactly the input's sample count.
    """
    if audio.num_samples == 0:
        raise ValidationError("cannot enhance an empty signal")
    if model.cfg.ref_channel >= audio.num_channels:
        raise ValidationError(
            f"reference channel {model.cfg.ref_channel} out of range for "
            f"{audio.num_channels}-channel input"
        )
    normalized, scale = variance_normalize(audio)
    spec = stft(normalized, stft_cfg)
    logger.debug(
        "enhancing %d ch @ %d Hz: F=%d T=%d, mode=%s",
        audio.num_channels, audio.sample_rate, spec.num_bins, spec.num_frames, mode.value,
    )
    estimate = process_spectrum(Tensor(spec.data, dtype=model.dtype), model, mode)
    out = istft(ComplexSpectrum(estimate.data, spec.sample_rate, spec.num_samples), stft_cfg)
    return revert_variance(out, scale)

