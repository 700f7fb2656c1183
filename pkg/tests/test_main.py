"""Tests for the CLI entry point."""

from __future__ import annotations

from pathlib import Path

from click.testing import CliRunner

from uses_se import __version__
from uses_se.main import cli


def test_cli_help(cli_runner: CliRunner) -> None:
    """Test that --help shows help text."""
    result = cli_runner.invoke(cli, ["--help"])
    assert result.exit_code == 0
    assert "Speech enhancement and separation" in result.output
    for command in ("simulate", "train", "enhance", "separate", "eval", "params"):
        assert command in result.output


def test_cli_version(cli_runner: CliRunner) -> None:
    """Test that --version shows the correct version."""
    result = cli_runner.invoke(cli, ["--version"])
    assert result.exit_code == 0
    assert __version__ in result.output
    assert "uses-se" in result.output


def test_cli_no_args_shows_help(cli_runner: CliRunner) -> None:
    """Test that running without arguments shows help."""
    result = cli_runner.invoke(cli)
    assert result.exit_code == 0
    assert "Speech enhancement and separation" in result.output


def test_config_error_exit_code(cli_runner: CliRunner, tmp_path: Path) -> None:
    """Test that configuration errors exit with code 2 and a readable message."""
    config = tmp_path / "bad.json"
    config.write_text('{"model": {"heads": 5}}')
    result = cli_runner.invoke(cli, ["params", "--config", str(config)])
    assert result.exit_code == 2
    assert "Error:" in result.output
    assert "divisible" in result.output


def test_storage_error_exit_code(cli_runner: CliRunner, tmp_path: Path) -> None:
    """Test that a missing input file exits with code 3."""
    result = cli_runner.invoke(
        cli,
        ["enhance", "-i", str(tmp_path / "none.wav"), "-o", str(tmp_path / "o.wav"), "-m", "x"],
    )
    assert result.exit_code == 3
    assert "not found" in result.output


def test_debug_prints_traceback(cli_runner: CliRunner, tmp_path: Path) -> None:
    """Test that --debug adds the stack trace to the error."""
    result = cli_runner.invoke(
        cli,
        ["--debug", "enhance", "-i", str(tmp_path / "none.wav"), "-o", "o.wav", "-m", "x"],
    )
    assert result.exit_code == 3
    assert "Traceback" in result.output


def test_format_env_var(cli_runner: CliRunner) -> None:
    """Test that USES_CLI_FORMAT selects table output."""
    result = cli_runner.invoke(cli, ["params", "--preset", "desk"], env={"USES_CLI_FORMAT": "table"})
    assert result.exit_code == 0
    assert "param_count" in result.output
    assert "{" not in result.output.splitlines()[0]
