"""Tests for the binary checkpoint format."""

from dataclasses import replace

import numpy as np
import pytest

from uses_se.exceptions import CheckpointError
from uses_se.model import init_params, load_checkpoint, save_checkpoint
from uses_se.model.checkpoint import MAGIC


class TestCheckpoint:
    """Tests for save_checkpoint and load_checkpoint."""

    def test_round_trip(self, tmp_path, tiny_model):
        """Test parameters, names and order survive a save/load cycle."""
        path = save_checkpoint(tmp_path / "m.ckpt", tiny_model)
        loaded = load_checkpoint(path, expected=tiny_model.cfg)
        assert loaded.model.cfg == tiny_model.cfg
        assert list(loaded.model.params) == list(tiny_model.params)
        for name, t in tiny_model.named_parameters():
            assert np.array_equal(loaded.model[name].data, t.data)
            assert loaded.model[name].requires_grad
        assert loaded.train_state is None
        assert loaded.extra == {}

    def test_train_state_and_extra(self, tmp_path, tiny_model):
        """Test trainer state and optimizer moments are stored alongside."""
        moments = {"m.encoder.conv.bias": np.arange(8.0)}
        save_checkpoint(tmp_path / "m.ckpt", tiny_model, {"step": 7}, moments)
        loaded = load_checkpoint(tmp_path / "m.ckpt")
        assert loaded.train_state == {"step": 7}
        np.testing.assert_array_equal(loaded.extra["m.encoder.conv.bias"], np.arange(8.0))

    def test_float32_preserved(self, tmp_path, tiny_cfg):
        """Test single-precision checkpoints load as single precision."""
        save_checkpoint(tmp_path / "m.ckpt", init_params(tiny_cfg, dtype="f32"))
        assert load_checkpoint(tmp_path / "m.ckpt").model.dtype == np.float32

    def test_config_mismatch(self, tmp_path, tiny_model, tiny_cfg):
        """Test loading against a different expected config fails."""
        save_checkpoint(tmp_path / "m.ckpt", tiny_model)
        with pytest.raises(CheckpointError, match="does not match"):
            load_checkpoint(tmp_path / "m.ckpt", expected=replace(tiny_cfg, G=3))

    def test_bad_magic(self, tmp_path):
        """Test arbitrary files are rejected."""
        path = tmp_path / "x.ckpt"
        path.write_bytes(b"NOPE" + bytes(20))
        with pytest.raises(CheckpointError, match="magic"):
            load_checkpoint(path)

    def test_truncated(self, tmp_path, tiny_model):
        """Test a cut-off file is detected."""
        path = save_checkpoint(tmp_path / "m.ckpt", tiny_model)
        path.write_bytes(path.read_bytes()[:-10])
        with pytest.raises(CheckpointError, match="truncated"):
            load_checkpoint(path)

    def test_trailing_bytes(self, tmp_path, tiny_model):
        """Test junk after the last tensor is detected."""
        path = save_checkpoint(tmp_path / "m.ckpt", tiny_model)
        path.write_bytes(path.read_bytes() + b"\x00")
        with pytest.raises(CheckpointError, match="trailing"):
            load_checkpoint(path)

    def test_missing_parameter(self, tmp_path, tiny_model):
        """Test a checkpoint without a required tensor is rejected."""
        del tiny_model.params["decoder.slope"]
        save_checkpoint(tmp_path / "m.ckpt", tiny_model)
        with pytest.raises(CheckpointError, match="decoder.slope"):
            load_checkpoint(tmp_path / "m.ckpt")

    def test_missing_file(self, tmp_path):
        """Test an absent checkpoint is a CheckpointError (exit code 3)."""
        with pytest.raises(CheckpointError) as exc_info:
            load_checkpoint(tmp_path / "none.ckpt")
        assert exc_info.value.exit_code == 3

    def test_header_starts_with_magic(self, tmp_path, tiny_model):
        """Test the file layout begins with the magic bytes."""
        path = save_checkpoint(tmp_path / "m.ckpt", tiny_model)
        assert path.read_bytes()[:4] == MAGIC
