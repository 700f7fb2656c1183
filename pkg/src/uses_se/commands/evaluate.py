"""Eval command for uses-se."""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Any

import click
import numpy as np

from uses_se.commands.enhance import MODES, process
from uses_se.config import MixSpec
from uses_se.datasim import load_manifest, resolve
from uses_se.dsp.audio import AudioBuffer
from uses_se.dsp.wav import read_wav
from uses_se.exceptions import ConfigError, ManifestError, UsesError, ValidationError
from uses_se.losses import pit_si_snr_loss, sdr, si_snr
from uses_se.model.checkpoint import load_checkpoint
from uses_se.model.params import UsesModel
from uses_se.output import get_formatter_from_context
from uses_se.storage import JsonLinesWriter
from uses_se.training import route_mode

logger = logging.getLogger(__name__)

METRICS = ("si_snr", "sdr")
MEAN_ID = "__mean__"


def _parse_metrics(value: str) -> list[str]:
    names = [m.strip() for m in value.split(",") if m.strip()]
    unknown = [m for m in names if m not in METRICS]
    if unknown or not names:
        raise ValidationError(
            f"unknown metric '{unknown[0] if unknown else value}' (choose from {', '.join(METRICS)})"
        )
    return names


def _num_sources(record: dict[str, Any]) -> int:
    speakers = record.get("speakers") or []
    return len(speakers) if len(speakers) > 1 else 1


def _references(record: dict[str, Any], base: Path, target: str, sources: int) -> list[AudioBuffer]:
    if sources > 1:
        return [read_wav(resolve(base, p)) for p in record["speakers"]]
    key = "reference" if "reference" in record else target
    if key not in record:
        raise ManifestError(f"record has no '{target}' or 'reference' signal")
    return [read_wav(resolve(base, record[key]))]


def score_record(
    record: dict[str, Any],
    base: Path,
    model: UsesModel | None,
    metrics: list[str],
    target: str,
    mode: str | None,
) -> dict[str, float]:
    """Metric values of one manifest record (means over sources for separation)."""
    if "mixture" not in record:
        raise ManifestError("record has no 'mixture' signal")
    mixture = read_wav(resolve(base, record["mixture"]))
    sources = _num_sources(record)
    if "estimate" in record:
        estimate = read_wav(resolve(base, record["estimate"]))
    elif model is not None:
        if mode is not None:
            memory = MODES[mode]
        else:
            try:
                spec = MixSpec.from_dict(record.get("spec", {}), "spec")
            except ConfigError as e:
                raise ManifestError(e.message) from e
            memory = route_mode(spec)
        if model.cfg.num_outputs != sources:
            raise ValidationError(
                f"model has {model.cfg.num_outputs} outputs but the record has {sources} source(s)"
            )
        estimate = process(mixture, model, memory)
    else:
        raise ValidationError("record has no 'estimate' and no --checkpoint was given")

    if estimate.num_channels < sources:
        raise ValidationError(f"estimate has {estimate.num_channels} channels for {sources} sources")
    refs = _references(record, base, target, sources)
    for ref in refs:
        if ref.num_samples != estimate.num_samples:
            raise ValidationError(
                f"estimate has {estimate.num_samples} samples, reference {ref.num_samples}"
            )
    ests = estimate.samples[:sources]
    ref_mat = np.stack([r.samples[0] for r in refs])
    order: tuple[int, ...] = (0,)
    if len(refs) > 1:
        _, order = pit_si_snr_loss(ests, ref_mat)

    values: dict[str, list[float]] = {}
    for i, j in enumerate(order):
        if "si_snr" in metrics:
            score = si_snr(ests[i], ref_mat[j]).item()
            values.setdefault("si_snr", []).append(score)
            baseline = si_snr(mixture.samples[0], ref_mat[j]).item()
            values.setdefault("si_snri", []).append(score - baseline)
        if "sdr" in metrics:
            values.setdefault("sdr", []).append(sdr(ests[i], ref_mat[j]).item())
    return {name: float(np.mean(v)) for name, v in values.items()}


@click.command(name="eval")
@click.option(
    "--manifest",
    "-d",
    "manifest_path",
    required=True,
    type=click.Path(dir_okay=False, path_type=Path),
    help="JSON-lines manifest (mixture, dry/reverberant or reference, optional estimate).",
)
@click.option(
    "--checkpoint",
    "-m",
    "checkpoint_path",
    type=click.Path(dir_okay=False, path_type=Path),
    help="Model used for records without a precomputed 'estimate'.",
)
@click.option(
    "--metrics",
    default="si_snr,sdr",
    show_default=True,
    help="Comma-separated metrics (si_snr also reports si_snri).",
)
@click.option(
    "--target",
    type=click.Choice(["dry", "reverberant"]),
    default="dry",
    show_default=True,
    help="Reference signal for enhancement records.",
)
@click.option(
    "--mode",
    type=click.Choice(list(MODES)),
    default=None,
    help="Memory tokens to use (default: route by each record's T60).",
)
@click.option(
    "--report",
    "report_path",
    type=click.Path(dir_okay=False, path_type=Path),
    help="JSON-lines report file (default: <manifest dir>/eval_report.jsonl).",
)
@click.pass_context
def evaluate(
    ctx: click.Context,
    manifest_path: Path,
    checkpoint_path: Path | None,
    metrics: str,
    target: str,
    mode: str | None,
    report_path: Path | None,
) -> None:
    """Score estimates against references with SI-SNR, SI-SNRi and SDR.

    Writes one {utterance_id, metric, value} record per utterance and metric,
    plus '__mean__' aggregates. Failing records are reported with an 'error'
    field; the command fails only when every record fails.
    """
    formatter = get_formatter_from_context(ctx)
    names = _parse_metrics(metrics)
    records = load_manifest(manifest_path)
    model = load_checkpoint(checkpoint_path).model if checkpoint_path else None
    base = manifest_path.parent
    report = report_path or base / "eval_report.jsonl"

    totals: dict[str, list[float]] = {}
    failures = 0
    with JsonLinesWriter(report) as writer:
        for index, record in enumerate(records):
            utterance = str(record.get("id", index))
            try:
                scores = score_record(record, base, model, names, target, mode)
            except UsesError as e:
                failures += 1
                logger.warning("%s: %s", utterance, e.message)
                writer.write({"utterance_id": utterance, "error": e.message})
                continue
            for metric, value in scores.items():
                writer.write({"utterance_id": utterance, "metric": metric, "value": value})
                totals.setdefault(metric, []).append(value)
        means = [
            {"utterance_id": MEAN_ID, "metric": metric, "value": float(np.mean(v))}
            for metric, v in totals.items()
        ]
        for record in means:
            writer.write(record)

    if failures == len(records):
        raise ManifestError(f"all {failures} records failed; see {report}")
    formatter.output_list(
        [{**m, "count": len(totals[m["metric"]])} for m in means],
        columns=["metric", "value", "count"],
        headers=["Metric", "Mean", "Records"],
    )
