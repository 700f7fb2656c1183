"""Output formatting and logging setup for uses-se."""

from __future__ import annotations

import json
import logging
import sys
from enum import Enum
from typing import Any

from rich import box
from rich.console import Console
from rich.logging import RichHandler
from rich.progress import (
    BarColumn,
    MofNCompleteColumn,
    Progress,
    TextColumn,
    TimeElapsedColumn,
)
from rich.table import Table


class OutputFormat(Enum):
    """Output format options."""

    JSON = "json"
    TABLE = "table"


def format_float(value: Any, digits: int = 4) -> str:
    """Format numbers compactly for tables; anything else passes through str()."""
    if isinstance(value, float):
        return f"{value:.{digits}g}"
    return str(value)


class OutputFormatter:
    """Handles output formatting for CLI commands."""

    def __init__(self, output_format: OutputFormat, no_color: bool = False) -> None:
        """Initialize the output formatter.

        Args:
            output_format: The format to use for output.
            no_color: Whether to disable colored output.
        """
        self.format = output_format
        self.no_color = no_color
        self.console = Console(no_color=no_color)
        self.stderr_console = Console(file=sys.stderr, no_color=no_color)

    def output_list(
        self,
        data: list[dict[str, Any]],
        columns: list[str],
        headers: list[str] | None = None,
    ) -> None:
        """Output a list of records as JSON or table.

        Args:
            data: List of dictionaries to output.
            columns: List of column keys to display.
            headers: Optional list of header names (defaults to column keys).
        """
        if self.format == OutputFormat.JSON:
            print(json.dumps(data, indent=2))
            return

        table = Table(box=box.ROUNDED)
        for header in headers or columns:
            table.add_column(header)
        for item in data:
            table.add_row(*(format_float(item.get(col, "")) for col in columns))
        self.console.print(table)

    def output_dict(self, data: dict[str, Any], labels: dict[str, str] | None = None) -> None:
        """Output a single result as JSON or key-value table.

        Args:
            data: Dictionary to output.
            labels: Optional dict mapping field names to display labels.
        """
        if self.format == OutputFormat.JSON:
            print(json.dumps(data, indent=2))
            return

        labels = labels or {}
        table = Table(box=box.ROUNDED, show_header=False)
        table.add_column("Field", style="bold")
        table.add_column("Value")
        for key, value in data.items():
            if isinstance(value, (dict, list)):
                value = json.dumps(value)
            elif value is None:
                value = ""
            table.add_row(labels.get(key, key), format_float(value))
        self.console.print(table)

    def output_error(self, message: str) -> None:
        """Output an error message to stderr.

        Args:
            message: The error message to display.
        """
        self.stderr_console.print(f"[red]Error:[/red] {message}", markup=True, highlight=False)

    def progress(self) -> Progress:
        """Progress bar rendered on stderr, so stdout stays machine-readable."""
        return Progress(
            TextColumn("[bold]{task.description}"),
            BarColumn(),
            MofNCompleteColumn(),
            TextColumn("{task.fields[status]}"),
            TimeElapsedColumn(),
            console=self.stderr_console,
            transient=True,
        )


def get_formatter(output_format: str | None = None, no_color: bool = False) -> OutputFormatter:
    """Create an OutputFormatter from string format name.

    Args:
        output_format: Format name ("json" or "table"), defaults to "json".
        no_color: Whether to disable colored output.

    Returns:
        Configured OutputFormatter instance.
    """
    fmt = OutputFormat.JSON
    if output_format == "table":
        fmt = OutputFormat.TABLE
    return OutputFormatter(fmt, no_color=no_color)


def get_formatter_from_context(ctx: Any) -> OutputFormatter:
    """Create an OutputFormatter from Click context.

    Safely handles cases where ctx.obj is None (e.g., direct command invocation).
    """
    obj = ctx.obj if ctx.obj is not None else {}
    return get_formatter(obj.get("output_format"), obj.get("no_color", False))


def setup_logging(verbose: bool = False, debug: bool = False, no_color: bool = False) -> None:
    """Route library logging through rich on stderr.

    WARNING by default, INFO with ``--verbose``, DEBUG with ``--debug``.
    """
    level = logging.DEBUG if debug else logging.INFO if verbose else logging.WARNING
    handler = RichHandler(
        console=Console(file=sys.stderr, no_color=no_color),
        show_path=debug,
        rich_tracebacks=debug,
    )
    root = logging.getLogger("uses_se")
    for existing in list(root.handlers):
        if isinstance(existing, RichHandler):
            root.removeHandler(existing)
    root.addHandler(handler)
    root.setLevel(level)
