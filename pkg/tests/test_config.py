"""Tests for run configuration loading and validation."""

import json

import pytest

from uses_se.config import (
    LossConfig,
    MixSpec,
    RunConfig,
    SimulateConfig,
    TrainConfig,
    UsesConfig,
    load_preset,
    load_run_config,
)
from uses_se.exceptions import ConfigError


class TestUsesConfig:
    """Tests for network dimension validation."""

    def test_defaults(self):
        """Test the default network dimensions."""
        cfg = UsesConfig()
        assert (cfg.D, cfg.N, cfg.K, cfg.K_s, cfg.H, cfg.G) == (256, 64, 6, 3, 192, 20)

    def test_heads_must_divide_n(self):
        """Test N must be a multiple of the head count."""
        with pytest.raises(ConfigError, match="divisible"):
            UsesConfig(N=10, heads=4)

    def test_spatial_blocks_bounded(self):
        """Test K_s cannot exceed K."""
        with pytest.raises(ConfigError, match="K_s"):
            UsesConfig(K=2, K_s=3)

    def test_zero_memory_tokens_allowed(self):
        """Test G=0 disables memory rather than failing."""
        assert UsesConfig(G=0).G == 0

    def test_unknown_key(self):
        """Test a misspelled key names its section."""
        with pytest.raises(ConfigError, match="unknown key 'model.heads_'"):
            UsesConfig.from_dict({"heads_": 2})


class TestSections:
    """Tests for the loss, train and simulation sections."""

    def test_loss_windows_sorted(self):
        """Test resolution windows must be ascending."""
        with pytest.raises(ConfigError, match="sorted"):
            LossConfig(mr_windows=[512, 256])

    def test_loss_window_factor(self):
        """Test resolution windows must be FFT-friendly."""
        with pytest.raises(ConfigError, match="unsupported prime factor 5"):
            LossConfig(mr_windows=[250])

    def test_train_schedule_mode(self):
        """Test the mode schedule is one of the known names."""
        with pytest.raises(ConfigError, match="mode_schedule"):
            TrainConfig(mode_schedule="both")

    def test_train_sample_rates(self):
        """Test multi-rate training only accepts native rates."""
        with pytest.raises(ConfigError, match="44100"):
            TrainConfig(sample_rates=[16000, 44100])

    def test_betas_normalized_to_tuple(self):
        """Test betas read from JSON lists become a float tuple."""
        assert TrainConfig.from_dict({"betas": [0.8, 0.99]}).betas == (0.8, 0.99)

    @pytest.mark.parametrize("snr", [-10.5, 40.5])
    def test_snr_range(self, snr):
        """Test SNR outside [-10, 40] dB is a config error."""
        with pytest.raises(ConfigError, match="snr_db"):
            MixSpec(snr_db=snr)

    def test_t60_range(self):
        """Test T60 above 1300 ms is rejected."""
        with pytest.raises(ConfigError, match="t60_ms"):
            MixSpec(t60_ms=1500)

    def test_reverberant_flag(self):
        """Test reverberant mixtures are those with a positive T60."""
        assert not MixSpec().reverberant
        assert MixSpec(t60_ms=300).reverberant

    def test_simulate_mixes_parsed(self):
        """Test mixture recipes become MixSpec objects with indexed error paths."""
        cfg = SimulateConfig.from_dict({"num_examples": 3, "mixes": [{"snr_db": 0, "num_channels": 2}]})
        assert cfg.mixes == [MixSpec(snr_db=0, num_channels=2)]
        with pytest.raises(ConfigError, match=r"simulate.mixes\[1\].bogus"):
            SimulateConfig.from_dict({"mixes": [{}, {"bogus": 1}]})


class TestLoadRunConfig:
    """Tests for presets, files and merging."""

    def test_defaults_without_inputs(self):
        """Test no preset and no file gives all defaults."""
        assert load_run_config() == RunConfig()

    @pytest.mark.parametrize("name", ["desk", "full"])
    def test_presets_valid(self, name):
        """Test every shipped preset validates."""
        cfg = RunConfig.from_dict(load_preset(name))
        assert cfg.model.N % cfg.model.heads == 0

    def test_full_preset_uses_default_dimensions(self):
        """Test the full-size preset keeps the default network."""
        assert load_run_config(preset="full").model == UsesConfig()

    def test_unknown_preset(self):
        """Test an unknown preset name is rejected."""
        with pytest.raises(ConfigError, match="unknown preset"):
            load_preset("huge")

    def test_file_overrides_single_key(self, tmp_path):
        """Test a file overrides one key while keeping the rest of the preset."""
        desk = load_run_config(preset="desk")
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"model": {"G": 0}, "train": {"max_epochs": 1}}))
        cfg = load_run_config(path, preset="desk")
        assert cfg.model.G == 0
        assert cfg.model.N == desk.model.N
        assert cfg.train.max_epochs == 1
        assert cfg.train.peak_lr == desk.train.peak_lr

    def test_unknown_section(self, tmp_path):
        """Test an unknown top-level section is rejected."""
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"optimizer": {}}))
        with pytest.raises(ConfigError, match="unknown key 'optimizer'"):
            load_run_config(path)

    def test_missing_file(self, tmp_path):
        """Test a missing config file is a config error."""
        with pytest.raises(ConfigError, match="not found"):
            load_run_config(tmp_path / "none.json")

    def test_invalid_json(self, tmp_path):
        """Test malformed JSON is a config error."""
        path = tmp_path / "cfg.json"
        path.write_text("{model:")
        with pytest.raises(ConfigError, match="not valid JSON"):
            load_run_config(path)

    def test_to_dict_round_trip(self):
        """Test the serialized view reloads to an equal config."""
        cfg = load_run_config(preset="desk")
        assert RunConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg
