"""Append-only JSONL episode logs with a canonical, byte-reproducible encoding."""
from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable, Iterator

SCHEMA_VERSION = 1


class LogFormatError(ValueError):
    def __init__(self, message: str, lineno: int | None = None):
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)
        self.lineno = lineno


def canonical(record: dict) -> str:
    """Stable one-line encoding: sorted keys, compact separators."""
    return json.dumps(record, sort_keys=True, separators=(",", ":"))


def rounded(value: float, digits: int = 6) -> float:
    """Trim float noise in logs while keeping encoding deterministic."""
    return round(float(value), digits)


def write_jsonl(path: str | Path, records: Iterable[dict]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(canonical(record))
            fh.write("\n")


def read_jsonl(path: str | Path) -> list[dict]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise LogFormatError(f"corrupt record: {exc}", lineno) from exc
    return records


def iter_records(records: Iterable[dict], kind: str) -> Iterator[dict]:
    return (r for r in records if r.get("type") == kind)


def summary_of(records: Iterable[dict]) -> dict:
    for record in records:
        if record.get("type") == "summary":
            return record
    raise LogFormatError("log has no summary record")
