"""Train command for uses-se."""

from __future__ import annotations

from pathlib import Path
from typing import Any

import click

from uses_se.commands.options import config_options, resolve_config
from uses_se.datasim import load_example, load_manifest
from uses_se.model.checkpoint import load_checkpoint
from uses_se.model.params import init_params, param_count
from uses_se.output import get_formatter_from_context
from uses_se.training import train as run_training


def _load_examples(manifest: Path) -> list[Any]:
    return [load_example(r, manifest.parent) for r in load_manifest(manifest)]


@click.command()
@config_options(default_preset="desk")
@click.option(
    "--data",
    "-d",
    "data_path",
    required=True,
    type=click.Path(dir_okay=False, path_type=Path),
    help="Training manifest written by 'uses-se simulate'.",
)
@click.option(
    "--val",
    "val_path",
    type=click.Path(dir_okay=False, path_type=Path),
    help="Validation manifest (default: validate on the training data).",
)
@click.option(
    "--out",
    "-o",
    "out_dir",
    required=True,
    type=click.Path(file_okay=False, path_type=Path),
    help="Directory for checkpoints and train_log.jsonl.",
)
@click.option(
    "--init",
    "init_path",
    type=click.Path(dir_okay=False, path_type=Path),
    help="Start from the parameters of an existing checkpoint.",
)
@click.option("--resume", is_flag=True, help="Continue from OUT/last.ckpt (step, schedule, Adam state).")
@click.option("--seed", type=int, default=None, help="Override train.seed (also seeds initialization).")
@click.option(
    "--dtype",
    type=click.Choice(["f32", "f64"]),
    default="f64",
    show_default=True,
    help="Parameter precision.",
)
@click.pass_context
def train(
    ctx: click.Context,
    config_path: Path | None,
    preset: str | None,
    data_path: Path,
    val_path: Path | None,
    out_dir: Path,
    init_path: Path | None,
    resume: bool,
    seed: int | None,
    dtype: str,
) -> None:
    """Train a model on a simulated manifest.

    Progress is shown on stderr; the best-validation checkpoint is kept as
    OUT/best.ckpt and the latest one as OUT/last.ckpt.
    """
    formatter = get_formatter_from_context(ctx)
    run_cfg = resolve_config(config_path, preset)
    if seed is not None:
        run_cfg.train.seed = seed

    train_examples = _load_examples(data_path)
    val_examples = _load_examples(val_path) if val_path else None
    if init_path is not None:
        model = load_checkpoint(init_path, expected=run_cfg.model).model
    else:
        model = init_params(run_cfg.model, seed=run_cfg.train.seed, dtype=dtype)

    with formatter.progress() as progress:
        task = progress.add_task("training", total=run_cfg.train.max_epochs, status="")

        def on_step(record: dict[str, Any]) -> None:
            if "step" in record:
                progress.update(task, status=f"step {record['step']} loss {record['loss']:.4f}")
            elif "epoch" in record:
                progress.update(task, completed=record["epoch"])

        result = run_training(
            model,
            train_examples,
            run_cfg,
            out_dir,
            val_examples=val_examples,
            resume=resume,
            on_step=on_step,
        )

    formatter.output_dict(
        {
            "steps": result.step,
            "epochs": result.epoch,
            "best_epoch": result.best_epoch,
            "best_val_loss": min(result.val_history) if result.val_history else None,
            "best_checkpoint": str(result.best_checkpoint),
            "last_checkpoint": str(result.last_checkpoint),
            "param_count": param_count(model),
        }
    )
