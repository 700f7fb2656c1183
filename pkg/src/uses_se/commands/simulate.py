"""Simulate command for uses-se."""

from __future__ import annotations

from dataclasses import replace
from pathlib import Path

import click

from uses_se.commands.options import config_options, resolve_config
from uses_se.datasim import simulate_dataset
from uses_se.output import get_formatter_from_context


@click.command()
@config_options(default_preset=None)
@click.option(
    "--out-dir",
    "-o",
    required=True,
    type=click.Path(file_okay=False, path_type=Path),
    help="Directory receiving the WAV files and manifest.jsonl.",
)
@click.option("--seed", type=int, default=None, help="Override simulate.seed.")
@click.option("--num-examples", "-n", type=int, default=None, help="Override simulate.num_examples.")
@click.pass_context
def simulate(
    ctx: click.Context,
    config_path: Path | None,
    preset: str | None,
    out_dir: Path,
    seed: int | None,
    num_examples: int | None,
) -> None:
    """Generate a synthetic noisy/reverberant multi-channel dataset.

    Writes one directory of WAV files per example (mixture, dry, reverberant,
    noise, per-speaker images) and a JSON-lines manifest.
    """
    formatter = get_formatter_from_context(ctx)
    cfg = resolve_config(config_path, preset).simulate
    if seed is not None:
        cfg = replace(cfg, seed=seed)
    if num_examples is not None:
        cfg = replace(cfg, num_examples=num_examples)

    manifest = simulate_dataset(cfg, out_dir)
    formatter.output_dict(
        {"manifest": str(manifest), "examples": cfg.num_examples, "seed": cfg.seed}
    )
