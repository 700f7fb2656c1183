"""Adam training with linear warmup and plateau halving.

One optimizer step consumes ``batch_size`` chunks. Each chunk gets its own
tape; gradients accumulate in the parameters' ``grad`` fields and are averaged
over the batch before clipping and the Adam update.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from uses_se.config import LossConfig, MixSpec, RunConfig, TrainConfig, run_config_to_dict
from uses_se.datasim import MixtureExample, chunk, shuffle_channels
from uses_se.dsp.audio import AudioBuffer, variance_normalize
from uses_se.dsp.resample import resample
from uses_se.exceptions import DivergenceError, NumericError, ValidationError
from uses_se.losses import multi_res_l1_loss, pit_si_snr_loss
from uses_se.model.checkpoint import load_checkpoint, save_checkpoint
from uses_se.model.network import MemoryMode, forward_waveform
from uses_se.model.params import UsesModel
from uses_se.numerics.tensor import Array, Tape, Tensor
from uses_se.storage import JsonLinesWriter, read_jsonl

logger = logging.getLogger(__name__)

BEST_CHECKPOINT = "best.ckpt"
LAST_CHECKPOINT = "last.ckpt"
TRAIN_LOG = "train_log.jsonl"


# -- schedule --------------------------------------------------------------


def plateau_events(val_history: Sequence[float], patience: int) -> int:
    """Count plateau events: ``patience`` consecutive epochs without a new best.

    The counter restarts after each event, so a long plateau halves the rate
    once every ``patience`` epochs.
    """
    best = math.inf
    stale = events = 0
    for value in val_history:
        if value < best:
            best, stale = value, 0
            continue
        stale += 1
        if stale >= patience:
            events += 1
            stale = 0
    return events


def lr_at(step: int, val_history: Sequence[float], cfg: TrainConfig) -> float:
    """``peak_lr * min(step / warmup, 1) * halving_factor ** plateau_events``."""
    if step < 0:
        raise ValidationError(f"step must be >= 0, got {step}")
    warm = min(step / cfg.warmup_steps, 1.0)
    return cfg.peak_lr * warm * cfg.halving_factor ** plateau_events(val_history, cfg.plateau_patience)


# -- optimizer -------------------------------------------------------------


@dataclass
class AdamState:
    step: int = 0
    m: dict[str, Array] = field(default_factory=dict)
    v: dict[str, Array] = field(default_factory=dict)

    def to_arrays(self) -> dict[str, Array]:
        out = {f"m.{k}": a for k, a in self.m.items()}
        out.update({f"v.{k}": a for k, a in self.v.items()})
        return out

    @classmethod
    def from_arrays(cls, step: int, arrays: dict[str, Array]) -> AdamState:
        state = cls(step)
        for key, arr in arrays.items():
            kind, _, name = key.partition(".")
            (state.m if kind == "m" else state.v)[name] = arr
        return state


def adam_step(
    params: dict[str, Tensor],
    grads: dict[str, Array],
    state: AdamState,
    lr: float,
    cfg: TrainConfig,
) -> None:
    """Bias-corrected Adam update, in place.

    Raises:
        NumericError: If a gradient is non-finite; the message names the parameter.
    """
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for parameter '{name}'")
    b1, b2 = cfg.betas
    state.step += 1
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    for name, g in grads.items():
        p = params[name]
        if g.shape != p.shape:
            raise ValidationError(f"gradient for '{name}' has shape {g.shape}, expected {p.shape}")
        m = state.m.get(name, np.zeros_like(p.data))
        v = state.v.get(name, np.zeros_like(p.data))
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        state.m[name], state.v[name] = m, v
        update = lr * (m / c1) / (np.sqrt(v / c2) + cfg.eps)
        p.data = (p.data - update).astype(p.dtype, copy=False)


def clip_gradients(grads: dict[str, Array], max_norm: float) -> float:
    """Scale gradients in place to a global L2 norm of at most ``max_norm``; returns the norm."""
    total = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if total > max_norm:
        scale = max_norm / total
        for name in grads:
            grads[name] = grads[name] * scale
    return total


# -- per-example loss ------------------------------------------------------------


def route_mode(spec: MixSpec, schedule: str = "auto") -> MemoryMode:
    """Pick the memory tokens for an example: reverberant data trains mem1."""
    if schedule == "dereverb":
        return MemoryMode.DEREVERB
    if schedule == "denoise":
        return MemoryMode.DENOISE
    return MemoryMode.DEREVERB if spec.reverberant else MemoryMode.DENOISE


def example_loss(
    model: UsesModel,
    example: MixtureExample,
    mode: MemoryMode,
    loss_cfg: LossConfig,
) -> Tensor:
    """Loss of one chunk in the variance-normalized domain.

    Enhancement (one output) uses the scale-invariant multi-resolution L1 loss
    against channel 0 of the dry source (mem1) or the reverberant source (mem2);
    separation uses PIT SI-SNR against channel 0 of every speaker image.
    """
    normalized, scale = variance_normalize(example.mixture)
    mixture = Tensor(normalized.samples, dtype=model.dtype)
    est = forward_waveform(mixture, model, mode, example.mixture.sample_rate)
    outputs = model.cfg.num_outputs
    if outputs == 1:
        source = example.dry_source if mode is MemoryMode.DEREVERB else example.reverberant_source
        target = Tensor(source.samples[:1] / scale, dtype=model.dtype)
        return multi_res_l1_loss(est, target, loss_cfg)
    if len(example.speakers) != outputs:
        raise ValidationError(
            f"separation model has {outputs} outputs but the example has "
            f"{len(example.speakers)} speakers"
        )
    refs = np.stack([s.samples[0] for s in example.speakers]) / scale
    loss, _ = pit_si_snr_loss(est, Tensor(refs, dtype=model.dtype))
    return loss


def evaluate_loss(
    model: UsesModel,
    examples: Sequence[MixtureExample],
    loss_cfg: LossConfig,
    schedule: str = "auto",
) -> float:
    """Mean loss over ``examples`` without recording a tape."""
    if not examples:
        raise ValidationError("no validation examples")
    total = 0.0
    for ex in examples:
        total += example_loss(model, ex, route_mode(ex.spec, schedule), loss_cfg).item()
    return total / len(examples)


# -- data ----------------------------------------------------------------------


def _resample_example(example: MixtureExample, rate: int) -> MixtureExample:
    if rate == example.mixture.sample_rate:
        return example

    def conv(buf: AudioBuffer) -> AudioBuffer:
        return resample(buf, rate)

    return MixtureExample(
        mixture=conv(example.mixture),
        dry_source=conv(example.dry_source),
        reverberant_source=conv(example.reverberant_source),
        noise=conv(example.noise),
        spec=example.spec,
        speakers=[conv(s) for s in example.speakers],
    )


def epoch_chunks(
    examples: Sequence[MixtureExample], cfg: TrainConfig, epoch: int
) -> list[MixtureExample]:
    """Shuffled, chunked, channel-shuffled (and optionally resampled) training items."""
    rng = np.random.default_rng([cfg.seed, epoch])
    items: list[MixtureExample] = []
    for index in rng.permutation(len(examples)):
        for piece in chunk(examples[int(index)], cfg.chunk_seconds):
            piece = shuffle_channels(piece, int(rng.integers(2**31 - 1)), cfg.max_channels)
            if cfg.sample_rates:
                piece = _resample_example(piece, int(rng.choice(cfg.sample_rates)))
            items.append(piece)
    return items[: cfg.samples_per_epoch]


# -- loop ----------------------------------------------------------------------


@dataclass
class TrainResult:
    step: int
    epoch: int
    val_history: list[float]
    best_epoch: int
    best_checkpoint: Path
    last_checkpoint: Path


StepCallback = Callable[[dict[str, Any]], None]


class Trainer:
    """Owns the model and optimizer for one training run.

    Args:
        model: Parameters to train (mutated in place).
        run_cfg: Full run configuration; echoed into the log.
        out_dir: Directory for checkpoints and ``train_log.jsonl``.
        on_step: Optional callback receiving every log record as it is produced.
    """

    def __init__(
        self,
        model: UsesModel,
        run_cfg: RunConfig,
        out_dir: str | Path,
        on_step: StepCallback | None = None,
    ) -> None:
        self.model = model
        self.run_cfg = run_cfg
        self.cfg = run_cfg.train
        self.out_dir = Path(out_dir)
        self.on_step = on_step
        self.state = AdamState()
        self.step = 0
        self.epoch = 0
        self.val_history: list[float] = []
        self.log = JsonLinesWriter(self.out_dir / TRAIN_LOG)

    # -- persistence ---------------------------------------------------

    def _train_state(self) -> dict[str, Any]:
        return {
            "step": self.step,
            "epoch": self.epoch,
            "adam_step": self.state.step,
            "val_history": self.val_history,
            "config": run_config_to_dict(self.run_cfg),
        }

    def save(self, name: str) -> Path:
        return save_checkpoint(
            self.out_dir / name, self.model, self._train_state(), self.state.to_arrays()
        )

    def resume(self) -> None:
        """Restore model, optimizer and schedule state from ``last.ckpt``."""
        ckpt = load_checkpoint(self.out_dir / LAST_CHECKPOINT, expected=self.model.cfg)
        if ckpt.train_state is None:
            raise ValidationError(f"{self.out_dir / LAST_CHECKPOINT} carries no training state")
        self.model.params.update(ckpt.model.params)
        ts = ckpt.train_state
        self.step, self.epoch = int(ts["step"]), int(ts["epoch"])
        self.val_history = [float(v) for v in ts["val_history"]]
        self.state = AdamState.from_arrays(int(ts["adam_step"]), ckpt.extra)
        log_path = self.out_dir / TRAIN_LOG
        self.log = JsonLinesWriter(log_path, read_jsonl(log_path) if log_path.exists() else [])
        logger.info("resumed at step %d, epoch %d", self.step, self.epoch)

    def _divergence_message(self, value: float) -> str:
        message = f"training loss became {value} at step {self.step + 1}"
        last = self.out_dir / LAST_CHECKPOINT
        if last.exists():
            return f"{message}; last good checkpoint kept at {last}"
        return f"{message}; no checkpoint was written yet"

    def _emit(self, record: dict[str, Any]) -> None:
        self.log.write(record)
        if self.on_step is not None:
            self.on_step(record)

    # -- steps ---------------------------------------------------------

    def train_step(self, batch: Sequence[MixtureExample]) -> float:
        """One optimizer update over ``batch``; returns the mean batch loss."""
        self.model.zero_grad()
        total = 0.0
        for item in batch:
            mode = route_mode(item.spec, self.cfg.mode_schedule)
            with Tape() as tape:
                loss = example_loss(self.model, item, mode, self.run_cfg.loss) * (1.0 / len(batch))
            value = loss.item()
            if not math.isfinite(value):
                raise DivergenceError(self._divergence_message(value))
            tape.backward(loss)
            total += value
        grads = {
            name: p.grad for name, p in self.model.named_parameters() if p.grad is not None
        }
        clip_gradients(grads, self.cfg.grad_clip)
        lr = lr_at(self.step + 1, self.val_history, self.cfg)
        adam_step(self.model.params, grads, self.state, lr, self.cfg)
        self.model.zero_grad()
        self.step += 1
        self._emit({"step": self.step, "lr": lr, "loss": total})
        return total

    def fit(
        self,
        train_examples: Sequence[MixtureExample],
        val_examples: Sequence[MixtureExample],
    ) -> TrainResult:
        """Train until ``max_epochs``; keeps ``best.ckpt`` and ``last.ckpt`` in ``out_dir``."""
        if not train_examples:
            raise ValidationError("training manifest has no examples")
        if not self.log.records:
            self._emit({"config": run_config_to_dict(self.run_cfg)})
        val_chunks = [c for ex in val_examples for c in chunk(ex, self.cfg.chunk_seconds)]
        best = self.out_dir / BEST_CHECKPOINT
        try:
            while self.epoch < self.cfg.max_epochs:
                items = epoch_chunks(train_examples, self.cfg, self.epoch)
                for start in range(0, len(items), self.cfg.batch_size):
                    self.train_step(items[start : start + self.cfg.batch_size])
                val_loss = evaluate_loss(
                    self.model, val_chunks, self.run_cfg.loss, self.cfg.mode_schedule
                )
                improved = not self.val_history or val_loss < min(self.val_history)
                self.val_history.append(val_loss)
                self.epoch += 1
                halvings = plateau_events(self.val_history, self.cfg.plateau_patience)
                self._emit({"epoch": self.epoch, "val_loss": val_loss, "halvings": halvings})
                self.log.flush()
                if improved:
                    self.save(BEST_CHECKPOINT)
                self.save(LAST_CHECKPOINT)
        finally:
            self.log.close()

        best_epoch = int(np.argmin(self.val_history)) + 1 if self.val_history else 0
        return TrainResult(
            step=self.step,
            epoch=self.epoch,
            val_history=list(self.val_history),
            best_epoch=best_epoch,
            best_checkpoint=best,
            last_checkpoint=self.out_dir / LAST_CHECKPOINT,
        )


def train(
    model: UsesModel,
    train_examples: Sequence[MixtureExample],
    run_cfg: RunConfig,
    out_dir: str | Path,
    val_examples: Sequence[MixtureExample] | None = None,
    resume: bool = False,
    on_step: StepCallback | None = None,
) -> TrainResult:
    """Convenience wrapper around :class:`Trainer`.

    Without ``val_examples`` the training examples double as validation data.
    """
    trainer = Trainer(model, run_cfg, out_dir, on_step)
    if resume:
        trainer.resume()
    return trainer.fit(train_examples, val_examples or train_examples)
