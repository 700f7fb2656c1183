"""Synthetic noisy, reverberant, multi-channel training data.

Speech is replaced by a harmonic surrogate (drifting pitch, syllabic
envelope), rooms by exponentially decaying noise impulse responses with a
per-microphone direct path. Everything is a pure function of its seed.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np
import numpy.typing as npt
from scipy.signal import butter, fftconvolve, sosfiltfilt

from uses_se.config import MixSpec, SimulateConfig
from uses_se.dsp.audio import AudioBuffer
from uses_se.dsp.wav import read_wav, write_wav
from uses_se.exceptions import ConfigError, ManifestError, ValidationError
from uses_se.storage import JsonLinesWriter, read_jsonl

logger = logging.getLogger(__name__)

F0_RANGE = (80.0, 300.0)
SYLLABLE_RATE = (2.0, 8.0)
ENVELOPE_FLOOR = 0.15
MAX_DELAY_S = 0.002
TAIL_LEVEL = 0.1  # tail onset, -20 dB re the direct path
# exp(-TAIL_DECAY) * TAIL_LEVEL == 1e-3: the tail is at -60 dB re the direct path at T60
TAIL_DECAY = float(np.log(1e3 * TAIL_LEVEL))
BAND_EDGE = 0.45  # fraction of the sampling rate kept by the source band limit
MIN_FILTER_LENGTH = 64


@dataclass
class MixtureExample:
    """One simulated utterance; ``mixture == reverberant_source + noise`` exactly."""

    mixture: AudioBuffer
    dry_source: AudioBuffer
    reverberant_source: AudioBuffer
    noise: AudioBuffer
    spec: MixSpec
    speakers: list[AudioBuffer] = field(default_factory=list)

    @property
    def num_channels(self) -> int:
        return self.mixture.num_channels

    def map(self, fn: Any) -> MixtureExample:
        """Apply ``fn(samples) -> samples`` to every signal of the example."""

        def apply(buf: AudioBuffer) -> AudioBuffer:
            return AudioBuffer(fn(buf.samples), buf.sample_rate)

        return MixtureExample(
            mixture=apply(self.mixture),
            dry_source=apply(self.dry_source),
            reverberant_source=apply(self.reverberant_source),
            noise=apply(self.noise),
            spec=self.spec,
            speakers=[apply(s) for s in self.speakers],
        )


# -- sources ---------------------------------------------------------------


def _band_filter(
    signal: npt.NDArray[np.float64], band: tuple[float, float], rate: int
) -> npt.NDArray[np.float64]:
    lo, hi = band
    if lo <= 0:
        sos = butter(6, hi, btype="lowpass", fs=rate, output="sos")
    else:
        sos = butter(6, (lo, hi), btype="bandpass", fs=rate, output="sos")
    return np.asarray(sosfiltfilt(sos, signal))


def gen_source(
    duration: float,
    rate: int,
    seed: int,
    band: tuple[float, float] | None = None,
) -> AudioBuffer:
    """Speech-like harmonic tone complex.

    Pitch drifts smoothly inside 80-300 Hz, harmonics fall off as 1/h, and a
    2-8 Hz syllabic envelope with a floor modulates the amplitude. Only
    harmonics that stay below 0.45 * rate are synthesized, so there is no
    energy above the Nyquist rate; the result is then low-passed (or
    band-passed to ``band`` for disjoint-band separation data).
    """
    if duration <= 0:
        raise ValidationError(f"duration must be > 0, got {duration}")
    rng = np.random.default_rng(seed)
    length = max(1, round(duration * rate))
    t = np.arange(length) / rate

    # smooth random walk for the pitch contour
    knots = max(2, int(duration * 4) + 2)
    walk = rng.uniform(*F0_RANGE, size=knots)
    f0 = np.interp(t, np.linspace(0.0, duration, knots), walk)
    phase = 2.0 * np.pi * np.cumsum(f0) / rate

    top = BAND_EDGE * rate
    signal = np.zeros(length)
    for h in range(1, int(top // F0_RANGE[0]) + 1):
        if f0.max() * h > top:
            break
        signal += np.sin(h * phase + rng.uniform(0, 2 * np.pi)) / h

    syllable = rng.uniform(*SYLLABLE_RATE)
    envelope = 0.5 * (1.0 + np.sin(2.0 * np.pi * syllable * t + rng.uniform(0, 2 * np.pi)))
    signal *= ENVELOPE_FLOOR + (1.0 - ENVELOPE_FLOOR) * envelope
    if length > MIN_FILTER_LENGTH:
        lo, hi = band if band is not None else (0.0, top)
        signal = _band_filter(signal, (lo, min(hi, top)), rate)
    peak = np.max(np.abs(signal))
    if peak > 0:
        signal = 0.5 * signal / peak
    return AudioBuffer(signal[None, :], rate)


def mix_at_snr(
    source: AudioBuffer, noise: AudioBuffer, snr_db: float
) -> tuple[AudioBuffer, AudioBuffer]:
    """Scale ``noise`` so the source-to-noise power ratio is exactly ``snr_db``.

    Powers are measured over all channels jointly.

    Returns:
        The mixture and the scaled noise.
    """
    if source.samples.shape != noise.samples.shape:
        raise ValidationError(
            f"source {source.samples.shape} and noise {noise.samples.shape} differ in shape"
        )
    p_source = float(np.mean(source.samples**2))
    p_noise = float(np.mean(noise.samples**2))
    if p_source == 0.0 or p_noise == 0.0:
        raise ValidationError("cannot mix at an SNR with a zero-power source or noise")
    gain = np.sqrt(p_source / (p_noise * 10.0 ** (snr_db / 10.0)))
    scaled = noise.samples * gain
    return (
        AudioBuffer(source.samples + scaled, source.sample_rate),
        AudioBuffer(scaled, noise.sample_rate),
    )


def measure_snr(source: AudioBuffer, noise: AudioBuffer) -> float:
    return float(10.0 * np.log10(np.mean(source.samples**2) / np.mean(noise.samples**2)))


# -- rooms -----------------------------------------------------------------


def synth_rir(
    t60_ms: float, rate: int, channel_geometry_seed: int, num_channels: int = 1
) -> npt.NDArray[np.float64]:
    """Per-microphone impulse responses, shape (C, length).

    Channel 0 has the direct path at delay 0 with gain 1; other channels get a
    random delay up to 2 ms and a gain in [0.8, 1]. Each direct spike is
    followed by white noise starting at -20 dB and decaying exponentially so
    that it sits 60 dB below the direct-path peak at t = T60.
    ``t60_ms == 0`` yields pure delayed spikes.
    """
    if t60_ms < 0:
        raise ValidationError(f"t60 must be >= 0, got {t60_ms}")
    rng = np.random.default_rng(channel_geometry_seed)
    max_delay = round(MAX_DELAY_S * rate)
    delays = np.concatenate([[0], rng.integers(0, max_delay + 1, size=num_channels - 1)])
    gains = np.concatenate([[1.0], rng.uniform(0.8, 1.0, size=num_channels - 1)])
    t60 = t60_ms / 1000.0
    tail = round(t60 * rate)
    rir = np.zeros((num_channels, max_delay + tail + 1))
    for c in range(num_channels):
        rir[c, delays[c]] = gains[c]
        if tail > 0:
            n = np.arange(1, tail + 1)
            decay = np.exp(-TAIL_DECAY * n / (t60 * rate))
            signs = rng.choice([-1.0, 1.0], size=tail)
            rir[c, delays[c] + 1 : delays[c] + 1 + tail] = gains[c] * TAIL_LEVEL * signs * decay
    return rir


def direct_path(rir: npt.NDArray[np.float64]) -> npt.NDArray[np.float64]:
    """Keep only the first nonzero tap of every channel."""
    out = np.zeros_like(rir)
    for c in range(rir.shape[0]):
        first = int(np.flatnonzero(rir[c])[0])
        out[c, first] = rir[c, first]
    return out


def _apply_rir(dry: npt.NDArray[np.float64], rir: npt.NDArray[np.float64]) -> npt.NDArray[np.float64]:
    length = dry.shape[-1]
    return np.stack([fftconvolve(dry, rir[c])[:length] for c in range(rir.shape[0])])


# -- examples -----------------------------------------------------------------


def _speaker_band(spec: MixSpec, index: int) -> tuple[float, float] | None:
    if not spec.disjoint_bands or spec.num_speakers == 1:
        return None
    width = BAND_EDGE * spec.sample_rate / spec.num_speakers
    return index * width, (index + 1) * width


def make_example(spec: MixSpec) -> MixtureExample:
    """Compose sources, rooms and noise into one deterministic example."""
    rng = np.random.default_rng(spec.seed)
    seeds = rng.integers(0, 2**31 - 1, size=2 * spec.num_speakers + 1)
    rate, channels = spec.sample_rate, spec.num_channels

    images, reverberant = [], []
    for i in range(spec.num_speakers):
        dry = gen_source(spec.duration_s, rate, int(seeds[2 * i]), _speaker_band(spec, i))
        rir = synth_rir(spec.t60_ms, rate, int(seeds[2 * i + 1]), channels)
        images.append(_apply_rir(dry.samples[0], direct_path(rir)))
        reverberant.append(_apply_rir(dry.samples[0], rir))

    dry_sum = np.sum(images, axis=0)
    reverberant_sum = np.sum(reverberant, axis=0)
    noise_rng = np.random.default_rng(int(seeds[-1]))
    raw_noise = AudioBuffer(noise_rng.standard_normal(reverberant_sum.shape), rate)
    mixture, noise = mix_at_snr(AudioBuffer(reverberant_sum, rate), raw_noise, spec.snr_db)
    return MixtureExample(
        mixture=mixture,
        dry_source=AudioBuffer(dry_sum, rate),
        reverberant_source=AudioBuffer(reverberant_sum, rate),
        noise=noise,
        spec=spec,
        speakers=[AudioBuffer(img, rate) for img in images],
    )


def chunk(example: MixtureExample, seconds: float = 4.0) -> list[MixtureExample]:
    """Split into non-overlapping pieces of ``seconds``; the last piece is zero-padded."""
    if seconds <= 0:
        raise ConfigError(f"chunk length must be > 0 seconds, got {seconds}")
    size = round(seconds * example.mixture.sample_rate)
    total = example.mixture.num_samples
    pieces = []
    for start in range(0, total, size):

        def cut(samples: npt.NDArray[Any], start: int = start) -> npt.NDArray[Any]:
            piece = samples[:, start : start + size]
            if piece.shape[1] < size:
                piece = np.pad(piece, ((0, 0), (0, size - piece.shape[1])))
            return piece

        pieces.append(example.map(cut))
    return pieces


def shuffle_channels(example: MixtureExample, seed: int, max_channels: int = 4) -> MixtureExample:
    """Permute microphones and keep a random prefix of 1..min(C, max_channels).

    The first kept channel becomes the reference.
    """
    rng = np.random.default_rng(seed)
    count = example.num_channels
    order = rng.permutation(count)
    keep = int(rng.integers(1, min(count, max_channels) + 1))
    index = order[:keep]
    return example.map(lambda samples: samples[index])


# -- manifests ---------------------------------------------------------------

SIGNALS = ("mixture", "dry", "reverberant", "noise")


def example_spec(cfg: SimulateConfig, index: int) -> MixSpec:
    """Recipe of example ``index``: mixes cycle, seeds derive from the dataset seed."""
    base = cfg.mixes[index % len(cfg.mixes)]
    seed = int(np.random.default_rng([cfg.seed, index]).integers(0, 2**31 - 1))
    return replace(base, seed=seed)


def write_example(example: MixtureExample, out_dir: Path, name: str) -> dict[str, Any]:
    """Write every signal of ``example`` as WAV and return its manifest record."""
    signals = {
        "mixture": example.mixture,
        "dry": example.dry_source,
        "reverberant": example.reverberant_source,
        "noise": example.noise,
    }
    record: dict[str, Any] = {"id": name}
    for key, buf in signals.items():
        rel = f"{name}/{key}.wav"
        write_wav(out_dir / rel, buf)
        record[key] = rel
    record["speakers"] = []
    for i, buf in enumerate(example.speakers):
        rel = f"{name}/speaker{i}.wav"
        write_wav(out_dir / rel, buf)
        record["speakers"].append(rel)
    record["spec"] = asdict(example.spec)
    return record


def simulate_dataset(cfg: SimulateConfig, out_dir: str | Path) -> Path:
    """Generate ``cfg.num_examples`` examples and a ``manifest.jsonl`` in ``out_dir``."""
    out = Path(out_dir)
    manifest = out / "manifest.jsonl"
    with JsonLinesWriter(manifest) as writer:
        for index in range(cfg.num_examples):
            spec = example_spec(cfg, index)
            example = make_example(spec)
            writer.write(write_example(example, out, f"ex{index:04d}"))
            logger.info("simulated ex%04d (snr %.1f dB, t60 %.0f ms)", index, spec.snr_db, spec.t60_ms)
    return manifest


def resolve(base: Path, value: str) -> Path:
    path = Path(value)
    return path if path.is_absolute() else base / path


def load_manifest(path: str | Path) -> list[dict[str, Any]]:
    records = read_jsonl(path)
    if not records:
        raise ManifestError(f"manifest {path} has no records")
    return records


def load_example(record: dict[str, Any], base_dir: Path) -> MixtureExample:
    """Rebuild a MixtureExample from a manifest record written by :func:`simulate_dataset`."""
    missing = [k for k in (*SIGNALS, "spec") if k not in record]
    if missing:
        raise ManifestError(f"record {record.get('id', '?')} is missing '{missing[0]}'")
    try:
        spec = MixSpec.from_dict(record["spec"], "spec")
    except ConfigError as e:
        raise ManifestError(f"record {record.get('id', '?')}: {e.message}") from e
    bufs = {k: read_wav(resolve(base_dir, record[k])) for k in SIGNALS}
    speakers = [read_wav(resolve(base_dir, p)) for p in record.get("speakers", [])]
    return MixtureExample(
        mixture=bufs["mixture"],
        dry_source=bufs["dry"],
        reverberant_source=bufs["reverberant"],
        noise=bufs["noise"],
        spec=spec,
        speakers=speakers,
    )
