"""Enhance command for uses-se."""

from __future__ import annotations

import logging
from pathlib import Path

import click
import numpy as np

from uses_se.dsp.audio import SUPPORTED_RATES, AudioBuffer
from uses_se.dsp.resample import resample
from uses_se.dsp.stft import check_rate
from uses_se.dsp.wav import read_wav, write_wav
from uses_se.model.checkpoint import load_checkpoint
from uses_se.model.network import MemoryMode
from uses_se.model.network import enhance as run_enhance
from uses_se.model.params import UsesModel
from uses_se.output import get_formatter_from_context

logger = logging.getLogger(__name__)

MODES = {"denoise": MemoryMode.DENOISE, "dereverb": MemoryMode.DEREVERB}


def fit_length(audio: AudioBuffer, length: int) -> AudioBuffer:
    """Trim or zero-pad to exactly ``length`` samples."""
    samples = audio.samples[:, :length]
    if samples.shape[1] < length:
        samples = np.pad(samples, ((0, 0), (0, length - samples.shape[1])))
    return AudioBuffer(samples, audio.sample_rate)


def process(
    audio: AudioBuffer,
    model: UsesModel,
    mode: MemoryMode,
    process_rate: int | None = None,
) -> AudioBuffer:
    """Run the network natively, or through a resampling round trip at ``process_rate``."""
    check_rate(audio.sample_rate)
    if process_rate is None or process_rate == audio.sample_rate:
        return run_enhance(audio, model, mode)
    logger.info("processing at %d Hz, input is %d Hz", process_rate, audio.sample_rate)
    estimate = run_enhance(resample(audio, process_rate), model, mode)
    return fit_length(resample(estimate, audio.sample_rate), audio.num_samples)


@click.command()
@click.option(
    "--input",
    "-i",
    "input_path",
    required=True,
    type=click.Path(dir_okay=False, path_type=Path),
    help="Noisy (multi-channel) WAV file; channel 0 is the reference microphone.",
)
@click.option(
    "--output",
    "-o",
    "output_path",
    required=True,
    type=click.Path(dir_okay=False, path_type=Path),
    help="Enhanced WAV file (input sampling rate and length).",
)
@click.option(
    "--checkpoint",
    "-m",
    "checkpoint_path",
    required=True,
    type=click.Path(dir_okay=False, path_type=Path),
    help="Model checkpoint.",
)
@click.option(
    "--mode",
    type=click.Choice(list(MODES)),
    default="denoise",
    show_default=True,
    help="denoise keeps reverberation (mem2); dereverb also removes it (mem1).",
)
@click.option(
    "--process-rate",
    type=click.Choice([str(r) for r in SUPPORTED_RATES]),
    default=None,
    help="Resample to this rate before processing and back afterwards.",
)
@click.option(
    "--encoding",
    type=click.Choice(["float32", "pcm16"]),
    default="float32",
    show_default=True,
    help="Output sample encoding.",
)
@click.pass_context
def enhance(
    ctx: click.Context,
    input_path: Path,
    output_path: Path,
    checkpoint_path: Path,
    mode: str,
    process_rate: str | None,
    encoding: str,
) -> None:
    """Denoise (and optionally dereverberate) a recording of any length,
    microphone count and supported sampling rate."""
    formatter = get_formatter_from_context(ctx)
    audio = read_wav(input_path)
    check_rate(audio.sample_rate)
    model = load_checkpoint(checkpoint_path).model
    rate = int(process_rate) if process_rate else None

    estimate = process(audio, model, MODES[mode], rate)
    write_wav(output_path, estimate, encoding)
    formatter.output_dict(
        {
            "input": str(input_path),
            "output": str(output_path),
            "mode": mode,
            "sample_rate": estimate.sample_rate,
            "num_samples": estimate.num_samples,
            "input_channels": audio.num_channels,
            "output_channels": estimate.num_channels,
            "process_rate": rate or audio.sample_rate,
        }
    )
