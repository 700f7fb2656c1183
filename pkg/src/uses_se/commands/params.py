"""Parameter report command for uses-se."""

from __future__ import annotations

import math
from collections import Counter
from pathlib import Path

import click

from uses_se.commands.options import config_options, resolve_config
from uses_se.model.params import param_count, parameter_shapes
from uses_se.output import get_formatter_from_context

REFERENCE_COUNT = 3_100_000


@click.command()
@config_options(default_preset="full")
@click.pass_context
def params(ctx: click.Context, config_path: Path | None, preset: str | None) -> None:
    """Report the exact parameter count of a configuration.

    The count depends only on the model dimensions, never on sampling rate,
    channel count or signal length.
    """
    formatter = get_formatter_from_context(ctx)
    cfg = resolve_config(config_path, preset).model
    groups: Counter[str] = Counter()
    for name, shape, _ in parameter_shapes(cfg):
        groups[name.split(".")[0]] += math.prod(shape)
    total = param_count(cfg)
    formatter.output_dict(
        {
            "param_count": total,
            "reference_count": REFERENCE_COUNT,
            "ratio": round(total / REFERENCE_COUNT, 4),
            "groups": dict(groups),
            "model": {k: getattr(cfg, k) for k in ("D", "N", "K", "K_s", "H", "G", "heads")},
        }
    )
