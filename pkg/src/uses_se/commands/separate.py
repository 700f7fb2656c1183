"""Separate command for uses-se."""

from __future__ import annotations

from pathlib import Path

import click

from uses_se.commands.enhance import MODES, process
from uses_se.dsp.stft import check_rate
from uses_se.dsp.wav import read_wav, write_wav
from uses_se.exceptions import ValidationError
from uses_se.model.checkpoint import load_checkpoint
from uses_se.output import get_formatter_from_context


@click.command()
@click.option(
    "--input",
    "-i",
    "input_path",
    required=True,
    type=click.Path(dir_okay=False, path_type=Path),
    help="Mixture WAV file.",
)
@click.option(
    "--out-dir",
    "-o",
    required=True,
    type=click.Path(file_okay=False, path_type=Path),
    help="Directory receiving one WAV file per estimated source.",
)
@click.option(
    "--checkpoint",
    "-m",
    "checkpoint_path",
    required=True,
    type=click.Path(dir_okay=False, path_type=Path),
    help="Checkpoint of a separation model (num_outputs >= 2).",
)
@click.option(
    "--mode",
    type=click.Choice(list(MODES)),
    default="denoise",
    show_default=True,
    help="Memory tokens to condition on.",
)
@click.pass_context
def separate(
    ctx: click.Context,
    input_path: Path,
    out_dir: Path,
    checkpoint_path: Path,
    mode: str,
) -> None:
    """Split a mixture into its sources, written as OUT_DIR/<name>_s<k>.wav."""
    formatter = get_formatter_from_context(ctx)
    audio = read_wav(input_path)
    check_rate(audio.sample_rate)
    model = load_checkpoint(checkpoint_path).model
    if model.cfg.num_outputs < 2:
        raise ValidationError(
            f"checkpoint has num_outputs={model.cfg.num_outputs}; use 'uses-se enhance' instead"
        )

    estimate = process(audio, model, MODES[mode])
    outputs = []
    for k in range(estimate.num_channels):
        path = out_dir / f"{input_path.stem}_s{k + 1}.wav"
        write_wav(path, estimate.channel(k))
        outputs.append({"source": k + 1, "path": str(path)})
    formatter.output_list(outputs, columns=["source", "path"], headers=["Source", "Path"])
