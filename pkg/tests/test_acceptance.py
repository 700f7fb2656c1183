"""Long-running overfit checks on single synthetic examples.

Deselected by default; run with ``pytest -m slow``.
"""

from __future__ import annotations

from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from uses_se.commands.enhance import process
from uses_se.config import LossConfig, MixSpec, RunConfig, TrainConfig, UsesConfig
from uses_se.datasim import MixtureExample, chunk, make_example
from uses_se.losses import pit_si_snr_loss, si_snr, si_snr_improvement
from uses_se.model.network import MemoryMode
from uses_se.model.params import UsesModel, init_params
from uses_se.training import Trainer, route_mode

pytestmark = pytest.mark.slow

DESK_MODEL = UsesConfig(D=32, N=16, K=2, K_s=1, H=32, G=4, seg_frames=64, heads=2)
DESK_TRAIN = TrainConfig(peak_lr=1e-3, warmup_steps=10, batch_size=1, chunk_seconds=2.0)
DESK_LOSS = LossConfig(mr_windows=[64, 128, 256])
OVERFIT_TRAIN = TrainConfig(peak_lr=3e-3, warmup_steps=20, batch_size=1, chunk_seconds=1.0)
# waveform term weighted up so phase errors count next to the magnitude terms
OVERFIT_LOSS = LossConfig(mr_windows=[64, 128, 256], time_weight=10.0)


def _trainer(
    tmp_path: Path,
    model_cfg: UsesConfig,
    seed: int = 0,
    train: TrainConfig = DESK_TRAIN,
    loss: LossConfig = DESK_LOSS,
) -> Trainer:
    run_cfg = RunConfig(model=model_cfg, train=train, loss=loss)
    return Trainer(init_params(model_cfg, seed=seed), run_cfg, tmp_path)


def _gain(model: UsesModel, example: MixtureExample, mode: MemoryMode, target: np.ndarray) -> float:
    estimate = process(example.mixture, model, mode)
    return si_snr_improvement(estimate.samples[0], example.mixture.samples[0], target)


class TestOverfit:
    """A desk-sized model must fit one example."""

    def test_enhancement(self, tmp_path: Path) -> None:
        """Test that at most 500 steps on one noisy example give at least 10 dB SI-SNRi."""
        example = make_example(MixSpec(snr_db=0.0, num_channels=2, duration_s=2.0, seed=11))
        target = example.reverberant_source.samples[0]
        halves = chunk(example, OVERFIT_TRAIN.chunk_seconds)
        assert len(halves) == 2
        trainer = _trainer(tmp_path, DESK_MODEL, train=OVERFIT_TRAIN, loss=OVERFIT_LOSS)

        losses = []
        gain = float("-inf")
        for step in range(500):
            losses.append(trainer.train_step([halves[step % 2]]))
            if step + 1 >= 150 and (step + 1) % 50 == 0:
                gain = _gain(trainer.model, example, MemoryMode.DENOISE, target)
                if gain >= 10.0:
                    break

        assert sum(losses[-2:]) < sum(losses[:2])
        assert gain >= 10.0

    def test_separation(self, tmp_path: Path) -> None:
        """Test that a two-output model separates two disjoint-band speakers."""
        spec = MixSpec(
            snr_db=30.0, num_channels=2, duration_s=2.0, seed=12, num_speakers=2, disjoint_bands=True
        )
        example = make_example(spec)
        cfg = replace(DESK_MODEL, num_outputs=2)
        trainer = _trainer(tmp_path, cfg)
        for _ in range(1000):
            trainer.train_step([example])

        estimate = process(example.mixture, trainer.model, MemoryMode.DENOISE)
        refs = np.stack([s.samples[0] for s in example.speakers])
        _, order = pit_si_snr_loss(estimate.samples, refs)
        for i, j in enumerate(order):
            assert si_snr_improvement(estimate.samples[i], example.mixture.samples[0], refs[j]) >= 10.0


class TestConditioning:
    """Memory tokens select between denoising and dereverberation."""

    def test_mode_switch(self, tmp_path: Path) -> None:
        """Test that dereverb tokens bring a reverberant input closer to the dry source."""
        reverberant = make_example(
            MixSpec(snr_db=10.0, t60_ms=400.0, num_channels=2, duration_s=2.0, seed=21)
        )
        anechoic = make_example(MixSpec(snr_db=10.0, num_channels=2, duration_s=2.0, seed=22))
        assert route_mode(reverberant.spec) is MemoryMode.DEREVERB
        assert route_mode(anechoic.spec) is MemoryMode.DENOISE

        trainer = _trainer(tmp_path, DESK_MODEL)
        for _ in range(500):
            trainer.train_step([reverberant])
            trainer.train_step([anechoic])

        dry = reverberant.dry_source.samples[0]
        dereverb = process(reverberant.mixture, trainer.model, MemoryMode.DEREVERB)
        denoise = process(reverberant.mixture, trainer.model, MemoryMode.DENOISE)
        assert not np.allclose(dereverb.samples, denoise.samples)
        assert si_snr(dereverb.samples[0], dry).item() > si_snr(denoise.samples[0], dry).item()
