"""Configuration management for uses-se.

A run is described by one JSON document with four optional sections::

    {"model": {...}, "train": {...}, "loss": {...}, "simulate": {...}}

Each section maps onto a dataclass below. Unknown keys are rejected at every
level so a typo never silently falls back to a default.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from importlib import resources
from pathlib import Path
from typing import TYPE_CHECKING, Any

if TYPE_CHECKING:
    from typing import Self

from uses_se.dsp.audio import SUPPORTED_RATES
from uses_se.dsp.fft import factorize
from uses_se.exceptions import ConfigError, FFTLengthError

# Constants
PRESETS = ("desk", "full")
MODES = ("auto", "denoise", "dereverb")
SNR_RANGE = (-10.0, 40.0)
T60_RANGE = (0.0, 1300.0)
MAX_CHANNELS = 8
MAX_SPEAKERS = 3


def _build(cls: type[Any], data: Any, section: str) -> Any:
    """Instantiate dataclass ``cls`` from a mapping, rejecting unknown keys."""
    if not isinstance(data, dict):
        raise ConfigError(f"'{section}' must be a JSON object, got {type(data).__name__}")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown key '{section}.{unknown[0]}'")
    try:
        return cls(**data)
    except TypeError as e:
        raise ConfigError(f"invalid '{section}' section: {e}") from e


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise ConfigError(message)


@dataclass
class UsesConfig:
    """Network dimensions.

    Attributes:
        D: Embedding dimension after the encoder convolution.
        N: Bottleneck dimension used by every transformer and TAC module.
        K: Number of multi-path blocks.
        K_s: Number of leading blocks that contain a TAC module.
        H: TAC hidden dimension.
        G: Number of memory tokens (0 disables the memory mechanism).
        seg_frames: Segment length in STFT frames for streaming inference.
        heads: Attention heads per transformer layer.
        num_outputs: Estimated sources (1 for enhancement, 2+ for separation).
        ref_channel: Reference microphone kept after the spatial blocks.
    """

    D: int = 256
    N: int = 64
    K: int = 6
    K_s: int = 3
    H: int = 192
    G: int = 20
    seg_frames: int = 64
    heads: int = 4
    num_outputs: int = 1
    ref_channel: int = 0

    def __post_init__(self) -> None:
        for name in ("D", "N", "K", "H", "heads", "seg_frames", "num_outputs"):
            _require(getattr(self, name) >= 1, f"model.{name} must be >= 1")
        _require(1 <= self.K_s <= self.K, f"model.K_s must be in [1, K={self.K}], got {self.K_s}")
        _require(self.N % self.heads == 0, f"model.N={self.N} must be divisible by heads={self.heads}")
        _require(self.G >= 0, "model.G must be >= 0")
        _require(self.ref_channel >= 0, "model.ref_channel must be >= 0")

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> Self:
        return _build(cls, data, "model")  # type: ignore[no-any-return]


@dataclass
class LossConfig:
    """Enhancement loss: multi-resolution spectral L1 plus a weighted time-domain L1."""

    mr_windows: list[int] = field(default_factory=lambda: [256, 512, 768, 1024])
    time_weight: float = 0.5
    eps: float = 1e-8

    def __post_init__(self) -> None:
        _require(len(self.mr_windows) > 0, "loss.mr_windows must not be empty")
        _require(self.mr_windows == sorted(self.mr_windows), "loss.mr_windows must be sorted")
        for w in self.mr_windows:
            _require(w >= 2 and w % 2 == 0, f"loss.mr_windows entry {w} must be even and >= 2")
            try:
                factorize(w)
            except FFTLengthError as e:
                raise ConfigError(f"loss.mr_windows entry {w}: {e.message}") from e
        _require(self.time_weight >= 0, "loss.time_weight must be >= 0")
        _require(self.eps > 0, "loss.eps must be > 0")

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> Self:
        return _build(cls, data, "loss")  # type: ignore[no-any-return]


@dataclass
class TrainConfig:
    """Optimizer, schedule and data-loading settings."""

    peak_lr: float = 4e-4
    warmup_steps: int = 500
    batch_size: int = 4
    chunk_seconds: float = 4.0
    max_epochs: int = 10
    samples_per_epoch: int = 8000
    plateau_patience: int = 2
    halving_factor: float = 0.5
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    seed: int = 0
    grad_clip: float = 5.0
    max_channels: int = 4
    sample_rates: list[int] | None = None
    mode_schedule: str = "auto"

    def __post_init__(self) -> None:
        self.betas = (float(self.betas[0]), float(self.betas[1]))
        _require(self.peak_lr > 0, "train.peak_lr must be > 0")
        _require(self.warmup_steps >= 1, "train.warmup_steps must be >= 1")
        _require(self.plateau_patience >= 1, "train.plateau_patience must be >= 1")
        _require(0 < self.halving_factor <= 1, "train.halving_factor must be in (0, 1]")
        _require(self.batch_size >= 1, "train.batch_size must be >= 1")
        _require(self.chunk_seconds > 0, "train.chunk_seconds must be > 0")
        _require(self.max_epochs >= 1, "train.max_epochs must be >= 1")
        _require(self.samples_per_epoch >= 1, "train.samples_per_epoch must be >= 1")
        _require(all(0 <= b < 1 for b in self.betas), "train.betas must be in [0, 1)")
        _require(self.grad_clip > 0, "train.grad_clip must be > 0")
        _require(1 <= self.max_channels <= MAX_CHANNELS, "train.max_channels must be in [1, 8]")
        _require(
            self.mode_schedule in MODES,
            f"train.mode_schedule must be one of {', '.join(MODES)}, got '{self.mode_schedule}'",
        )
        if self.sample_rates is not None:
            _require(len(self.sample_rates) > 0, "train.sample_rates must not be empty")
            for rate in self.sample_rates:
                _require(rate in SUPPORTED_RATES, f"train.sample_rates entry {rate} is not supported")

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> Self:
        return _build(cls, data, "train")  # type: ignore[no-any-return]


@dataclass
class MixSpec:
    """Recipe for one synthetic noisy (and optionally reverberant) mixture."""

    snr_db: float = 5.0
    t60_ms: float = 0.0
    num_channels: int = 1
    duration_s: float = 2.0
    sample_rate: int = 8000
    seed: int = 0
    num_speakers: int = 1
    disjoint_bands: bool = False

    def __post_init__(self) -> None:
        lo, hi = SNR_RANGE
        _require(lo <= self.snr_db <= hi, f"snr_db {self.snr_db} outside [{lo:g}, {hi:g}] dB")
        lo, hi = T60_RANGE
        _require(lo <= self.t60_ms <= hi, f"t60_ms {self.t60_ms} outside [{lo:g}, {hi:g}] ms")
        _require(
            1 <= self.num_channels <= MAX_CHANNELS,
            f"num_channels {self.num_channels} outside [1, {MAX_CHANNELS}]",
        )
        _require(self.duration_s > 0, "duration_s must be > 0")
        _require(
            self.sample_rate in SUPPORTED_RATES,
            f"sample_rate {self.sample_rate} is not one of "
            f"{', '.join(str(r) for r in SUPPORTED_RATES)}",
        )
        _require(
            1 <= self.num_speakers <= MAX_SPEAKERS,
            f"num_speakers {self.num_speakers} outside [1, {MAX_SPEAKERS}]",
        )

    @property
    def reverberant(self) -> bool:
        return self.t60_ms > 0

    @classmethod
    def from_dict(cls, data: dict[str, Any], section: str = "mix") -> Self:
        return _build(cls, data, section)  # type: ignore[no-any-return]


@dataclass
class SimulateConfig:
    """Dataset recipe: ``num_examples`` mixtures cycling through ``mixes``."""

    num_examples: int = 10
    seed: int = 0
    mixes: list[MixSpec] = field(default_factory=lambda: [MixSpec()])

    def __post_init__(self) -> None:
        _require(self.num_examples >= 1, "simulate.num_examples must be >= 1")
        _require(len(self.mixes) > 0, "simulate.mixes must not be empty")

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> Self:
        if not isinstance(data, dict):
            raise ConfigError("'simulate' must be a JSON object")
        data = dict(data)
        raw_mixes = data.pop("mixes", None)
        cfg = _build(cls, data, "simulate")
        if raw_mixes is not None:
            if not isinstance(raw_mixes, list):
                raise ConfigError("'simulate.mixes' must be a list")
            cfg.mixes = [MixSpec.from_dict(m, f"simulate.mixes[{i}]") for i, m in enumerate(raw_mixes)]
            cfg.__post_init__()
        return cfg  # type: ignore[no-any-return]


@dataclass
class RunConfig:
    """Complete configuration of a run; every section falls back to defaults."""

    model: UsesConfig = field(default_factory=UsesConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    simulate: SimulateConfig = field(default_factory=SimulateConfig)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> Self:
        if not isinstance(data, dict):
            raise ConfigError("configuration must be a JSON object")
        unknown = sorted(set(data) - {"model", "train", "loss", "simulate"})
        if unknown:
            raise ConfigError(f"unknown key '{unknown[0]}'")
        return cls(
            model=UsesConfig.from_dict(data.get("model", {})),
            train=TrainConfig.from_dict(data.get("train", {})),
            loss=LossConfig.from_dict(data.get("loss", {})),
            simulate=SimulateConfig.from_dict(data.get("simulate", {})),
        )

    def to_dict(self) -> dict[str, Any]:
        return run_config_to_dict(self)


def run_config_to_dict(cfg: RunConfig) -> dict[str, Any]:
    """Plain JSON-serializable view, echoed into run logs and checkpoints."""
    data = asdict(cfg)
    data["train"]["betas"] = list(cfg.train.betas)
    return data


def _read_json(path: Path) -> dict[str, Any]:
    try:
        data = json.loads(path.read_text())
    except FileNotFoundError as e:
        raise ConfigError(f"config file not found: {path}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"config file {path} is not valid JSON: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path} must contain a JSON object")
    return data


def load_preset(name: str) -> dict[str, Any]:
    """Return the raw JSON document of a shipped preset."""
    if name not in PRESETS:
        raise ConfigError(f"unknown preset '{name}' (choose from {', '.join(PRESETS)})")
    text = resources.files("uses_se.presets").joinpath(f"{name}.json").read_text()
    data: dict[str, Any] = json.loads(text)
    return data


def load_run_config(path: str | Path | None = None, preset: str | None = None) -> RunConfig:
    """Load configuration with priority: file > preset > defaults.

    Sections are merged key by key, so a file may override a single model
    dimension of a preset without restating the rest.

    Args:
        path: Optional JSON config file.
        preset: Optional preset name ('desk' or 'full').

    Returns:
        Validated RunConfig.

    Raises:
        ConfigError: On unreadable files, unknown keys or invalid values.
    """
    merged: dict[str, Any] = load_preset(preset) if preset else {}
    if path is not None:
        for section, values in _read_json(Path(path)).items():
            if isinstance(values, dict) and isinstance(merged.get(section), dict):
                merged[section] = {**merged[section], **values}
            else:
                merged[section] = values
    return RunConfig.from_dict(merged)
