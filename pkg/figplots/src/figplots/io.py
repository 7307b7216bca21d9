"""Input loading, schema checks, and the read-only guarantee."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class InputDataError(Exception):
    """Missing, empty, malformed, or schema-violating input."""


class InputModifiedError(Exception):
    """An input file changed on disk while a figure was being rendered."""


@dataclass
class Table:
    """One parsed CSV: header, string cells, and the run manifest if any."""

    path: Path
    header: list[str]
    rows: list[list[str]]
    manifest: dict | None

    def column(self, name: str, dtype=float) -> np.ndarray:
        """A named column, converted; missing names raise by name."""
        if name not in self.header:
            raise InputDataError(
                f"{self.path} is missing the column {name!r} "
                f"(found {', '.join(self.header)})"
            )
        idx = self.header.index(name)
        if dtype is str:
            return np.array([row[idx] for row in self.rows])
        try:
            return np.array([dtype(row[idx]) for row in self.rows])
        except ValueError as exc:
            raise InputDataError(
                f"{self.path} column {name!r} is not numeric: {exc}"
            ) from exc

    def columns_with_prefix(self, prefix: str) -> list[str]:
        names = [name for name in self.header if name.startswith(prefix)]
        if not names:
            raise InputDataError(
                f"{self.path} has no {prefix}* columns (found {', '.join(self.header)})"
            )
        return names


def read_table(path: str | Path) -> Table:
    """Parse a CSV written by the simulation CLI.

    A file with a header but no data rows is an explicit error: rendering
    a blank image would hide an upstream failure.
    """
    path = Path(path)
    if not path.is_file():
        raise InputDataError(f"input file {path} does not exist")
    lines = path.read_text().splitlines()
    if not lines:
        raise InputDataError(f"{path} is empty")
    header = lines[0].split(",")
    rows = [line.split(",") for line in lines[1:] if line]
    if not rows:
        raise InputDataError(f"{path} has a header but no data rows")
    width = len(header)
    for i, row in enumerate(rows):
        if len(row) != width:
            raise InputDataError(
                f"{path} row {i + 1} has {len(row)} cells, header has {width}"
            )
    return Table(path, header, rows, _sibling_manifest(path))


def read_json(path: str | Path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise InputDataError(f"input file {path} does not exist")
    try:
        payload = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise InputDataError(f"{path} is not valid JSON: {exc}") from exc
    if not isinstance(payload, dict):
        raise InputDataError(f"{path} must hold a JSON object")
    return payload


def _sibling_manifest(path: Path) -> dict | None:
    candidate = path.parent / "manifest.json"
    if not candidate.is_file():
        return None
    try:
        return read_json(candidate)
    except InputDataError:
        return None


def curve_label(table: Table) -> str:
    """Legend text from the run manifest, falling back to the file name."""
    if table.manifest is None or "config" not in table.manifest:
        return table.path.stem
    cfg = table.manifest["config"]
    model = cfg.get("model", "?")
    if model in ("torus", "strip"):
        return f"{model} {cfg.get('lx')}x{cfg.get('ly')}, g={cfg.get('g'):g}"
    return (
        f"N={cfg.get('n_sites')} m={cfg.get('m')} "
        f"k={cfg.get('k'):g}, g={cfg.get('g'):g}"
    )


def checksum(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


class ReadOnlyGuard:
    """Checksums a set of inputs and verifies them after rendering."""

    def __init__(self, paths: list[Path]):
        self.before = {p: checksum(p) for p in paths}

    def verify(self) -> None:
        for path, digest in self.before.items():
            if checksum(path) != digest:
                raise InputModifiedError(f"input file {path} changed during rendering")
