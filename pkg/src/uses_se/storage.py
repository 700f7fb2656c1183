"""Atomic file writes and JSON-lines records.

Every file this package produces goes through :func:`atomic_path`: data is
written to a hidden sibling and renamed over the target, so an interrupted
run never leaves a truncated checkpoint, manifest or WAV behind.
"""

from __future__ import annotations

import json
import os
import tempfile
from collections.abc import Iterator
from contextlib import contextmanager
from pathlib import Path
from types import TracebackType
from typing import TYPE_CHECKING, Any

if TYPE_CHECKING:
    from typing import Self

from uses_se.exceptions import ManifestError, StorageError


@contextmanager
def atomic_path(path: str | Path) -> Iterator[Path]:
    """Yield a temporary sibling of ``path``; rename it into place on success."""
    target = Path(path)
    try:
        target.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=target.parent, prefix=f".{target.name}.", suffix=".tmp")
        os.close(fd)
    except OSError as e:
        raise StorageError(f"cannot write {target}: {e}") from e
    tmp_path = Path(tmp)
    try:
        yield tmp_path
        os.replace(tmp_path, target)
    except BaseException:
        tmp_path.unlink(missing_ok=True)
        raise


def atomic_write_bytes(path: str | Path, data: bytes) -> Path:
    try:
        with atomic_path(path) as tmp:
            tmp.write_bytes(data)
    except OSError as e:
        raise StorageError(f"cannot write {path}: {e}") from e
    return Path(path)


def atomic_write_text(path: str | Path, text: str) -> Path:
    return atomic_write_bytes(path, text.encode("utf-8"))


class JsonLinesWriter:
    """Collects JSON records and publishes them atomically.

    Records are flushed to the target on every :meth:`flush` (and on close),
    each time by rewriting the whole file through a temporary sibling, so
    readers only ever see complete lines.

    Example:
        with JsonLinesWriter(out_dir / "train_log.jsonl") as log:
            log.write({"step": 1, "lr": 1e-5, "loss": 0.9})
    """

    def __init__(self, path: str | Path, records: list[dict[str, Any]] | None = None) -> None:
        self.path = Path(path)
        self.records: list[dict[str, Any]] = list(records or [])

    def write(self, record: dict[str, Any]) -> None:
        self.records.append(record)

    def flush(self) -> None:
        text = "".join(json.dumps(r, sort_keys=True) + "\n" for r in self.records)
        atomic_write_text(self.path, text)

    def close(self) -> None:
        self.flush()

    def __enter__(self) -> Self:
        return self

    def __exit__(
        self,
        exc_type: type[BaseException] | None,
        exc_val: BaseException | None,
        exc_tb: TracebackType | None,
    ) -> None:
        self.close()


def read_jsonl(path: str | Path) -> list[dict[str, Any]]:
    """Parse a JSON-lines file; blank lines are skipped.

    Raises:
        ManifestError: If the file is missing or a line is not a JSON object.
    """
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as e:
        raise ManifestError(f"cannot read {path}: {e}") from e
    records = []
    for number, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as e:
            raise ManifestError(f"{path}:{number}: invalid JSON ({e.msg})") from e
        if not isinstance(record, dict):
            raise ManifestError(f"{path}:{number}: expected a JSON object")
        records.append(record)
    return records
