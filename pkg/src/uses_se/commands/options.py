"""Options shared by several commands."""

from __future__ import annotations

from collections.abc import Callable
from pathlib import Path
from typing import Any, TypeVar

import click

from uses_se.config import PRESETS, RunConfig, load_run_config

F = TypeVar("F", bound=Callable[..., Any])


def config_options(default_preset: str | None = None) -> Callable[[F], F]:
    """Add ``--config`` and ``--preset`` to a command."""

    def decorator(fn: F) -> F:
        fn = click.option(
            "--preset",
            type=click.Choice(PRESETS),
            default=default_preset,
            show_default=default_preset is not None,
            help="Start from a shipped configuration; --config values override it.",
        )(fn)
        fn = click.option(
            "--config",
            "-c",
            "config_path",
            type=click.Path(exists=True, dir_okay=False, path_type=Path),
            help="JSON run configuration (model, train, loss, simulate sections).",
        )(fn)
        return fn

    return decorator


def resolve_config(config_path: Path | None, preset: str | None) -> RunConfig:
    return load_run_config(config_path, preset)
