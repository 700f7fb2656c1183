"""Tests for audio buffers, resampling and WAV files."""

import numpy as np
import pytest

from uses_se.dsp.audio import AudioBuffer, revert_variance, variance_normalize
from uses_se.dsp.resample import resample
from uses_se.dsp.wav import read_wav, write_wav
from uses_se.exceptions import (
    DimensionError,
    StorageError,
    UnsupportedRateError,
    ValidationError,
    WavFormatError,
)


class TestAudioBuffer:
    """Tests for AudioBuffer validation and helpers."""

    def test_mono_promoted(self):
        """Test a 1-D array becomes a single channel."""
        audio = AudioBuffer(np.zeros(100), 8000)
        assert audio.samples.shape == (1, 100)
        assert audio.duration == pytest.approx(0.0125)

    def test_integer_samples_become_float(self):
        """Test integer samples are cast to float64."""
        assert AudioBuffer(np.zeros((1, 4), dtype=np.int16), 8000).samples.dtype == np.float64

    def test_three_dimensional_rejected(self):
        """Test only (channels, length) arrays are accepted."""
        with pytest.raises(DimensionError):
            AudioBuffer(np.zeros((1, 2, 3)), 8000)

    def test_bad_rate_rejected(self):
        """Test the sampling rate must be positive."""
        with pytest.raises(ValidationError):
            AudioBuffer(np.zeros(3), 0)

    def test_select_and_channel(self):
        """Test channel helpers copy the right rows."""
        audio = AudioBuffer(np.arange(6.0).reshape(3, 2), 8000)
        np.testing.assert_array_equal(audio.channel(1).samples, [[2.0, 3.0]])
        np.testing.assert_array_equal(audio.select([2, 0]).samples, [[4.0, 5.0], [0.0, 1.0]])

    def test_variance_round_trip(self, rng):
        """Test normalization gives unit std and reverts exactly."""
        audio = AudioBuffer(rng.standard_normal((2, 1000)) * 7.0, 8000)
        normalized, scale = variance_normalize(audio)
        assert np.std(normalized.samples) == pytest.approx(1.0)
        np.testing.assert_allclose(revert_variance(normalized, scale).samples, audio.samples)

    def test_silence_uses_floor(self):
        """Test an all-zero buffer uses the variance floor instead of dividing by zero."""
        normalized, scale = variance_normalize(AudioBuffer(np.zeros((1, 10)), 8000))
        assert scale == pytest.approx(1e-8)
        assert np.all(normalized.samples == 0.0)


class TestResample:
    """Tests for polyphase resampling."""

    def test_identity_copies(self, rng):
        """Test same-rate resampling is bit-identical but not aliased."""
        audio = AudioBuffer(rng.standard_normal((1, 50)), 16000)
        out = resample(audio, 16000)
        assert np.array_equal(out.samples, audio.samples)
        assert out.samples is not audio.samples

    @pytest.mark.parametrize(("src", "dst"), [(16000, 8000), (8000, 24000), (48000, 16000)])
    def test_sinusoid_preserved(self, src, dst):
        """Test a 300 Hz tone survives resampling away from the edges."""
        t_src = np.arange(src) / src
        out = resample(AudioBuffer(np.sin(2 * np.pi * 300 * t_src), src), dst)
        assert out.sample_rate == dst
        assert out.num_samples == dst
        t_dst = np.arange(dst) / dst
        middle = slice(dst // 10, -dst // 10)
        np.testing.assert_allclose(
            out.samples[0, middle], np.sin(2 * np.pi * 300 * t_dst)[middle], atol=1e-2
        )

    def test_round_trip_through_8k(self):
        """Test tones below 3.4 kHz survive 48 -> 8 -> 48 kHz within -40 dB."""
        t = np.arange(48000) / 48000
        x = sum(np.sin(2 * np.pi * f * t + p) for f, p in [(440, 0.0), (1500, 0.7), (3000, 1.9)])
        down = resample(AudioBuffer(x, 48000), 8000)
        back = resample(down, 48000)
        assert back.num_samples == 48000
        middle = slice(4800, -4800)
        error = back.samples[0, middle] - x[middle]
        error_db = 20 * np.log10(np.linalg.norm(error) / np.linalg.norm(x[middle]))
        assert error_db <= -40.0

    def test_unsupported_rate(self):
        """Test 44.1 kHz is not a native rate."""
        with pytest.raises(UnsupportedRateError, match="44100"):
            resample(AudioBuffer(np.zeros(10), 44100), 16000)


class TestWav:
    """Tests for WAV reading and writing."""

    def test_float32_round_trip(self, tmp_path, rng):
        """Test float32 files keep multi-channel data to single precision."""
        audio = AudioBuffer(rng.uniform(-0.9, 0.9, (3, 400)), 24000)
        path = write_wav(tmp_path / "multi.wav", audio)
        back = read_wav(path)
        assert back.sample_rate == 24000
        assert back.samples.shape == (3, 400)
        np.testing.assert_allclose(back.samples, audio.samples, atol=1e-7)

    def test_pcm16_round_trip(self, tmp_path, rng):
        """Test PCM16 quantization error stays below one step."""
        audio = AudioBuffer(rng.uniform(-0.5, 0.5, (2, 300)), 8000)
        back = read_wav(write_wav(tmp_path / "pcm.wav", audio, encoding="pcm16"))
        np.testing.assert_allclose(back.samples, audio.samples, atol=1.0 / 32768)

    def test_pcm16_clips(self, tmp_path):
        """Test out-of-range samples are clipped rather than wrapped."""
        audio = AudioBuffer(np.array([[2.0, -3.0]]), 8000)
        back = read_wav(write_wav(tmp_path / "clip.wav", audio, encoding="pcm16"))
        assert back.samples[0, 0] > 0.99
        assert back.samples[0, 1] == pytest.approx(-1.0)

    def test_creates_parent_dirs(self, tmp_path):
        """Test writes create missing directories and leave no temp files."""
        target = tmp_path / "a" / "b" / "x.wav"
        write_wav(target, AudioBuffer(np.zeros(8), 8000))
        assert [p.name for p in target.parent.iterdir()] == ["x.wav"]

    def test_missing_file(self, tmp_path):
        """Test a missing path is a storage error."""
        with pytest.raises(StorageError, match="not found"):
            read_wav(tmp_path / "nope.wav")

    def test_corrupt_file(self, tmp_path):
        """Test garbage bytes raise WavFormatError."""
        path = tmp_path / "bad.wav"
        path.write_bytes(b"RIFF\x00\x00not really a wave file")
        with pytest.raises(WavFormatError):
            read_wav(path)

    def test_unknown_encoding(self, tmp_path):
        """Test only pcm16 and float32 encodings are written."""
        with pytest.raises(WavFormatError, match="encoding"):
            write_wav(tmp_path / "x.wav", AudioBuffer(np.zeros(4), 8000), encoding="mp3")
