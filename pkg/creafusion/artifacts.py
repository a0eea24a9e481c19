r"""Helpers for reading and writing creafusion artifacts.

This module owns the plumbing shared by every file format in the package:

- ``resolve_project_path``: anchor a possibly relative path at a root.
- ``project_version``: read the version from ``pyproject.toml`` or installed
  metadata.
- ``write_blocks``/``read_blocks``: named numeric blocks in the text model
  formats (``[name] rows=R cols=C`` followed by comma-separated rows).
- ``file_digest`` and ``render_json``: provenance helpers.

Example
-------
>>> write_blocks(Path("model.txt"), "D=2 H=3", {"w": np.eye(2)})
>>> header, blocks = read_blocks(Path("model.txt"))
"""

from __future__ import annotations

import hashlib
import json
import re
import tomllib
import typing as typ
from importlib import metadata
from pathlib import Path

import numpy as np

from .errors import FormatError

if typ.TYPE_CHECKING:
    import collections.abc as cabc

    import numpy.typing as npt

PACKAGE_NAME = "creafusion"
BLOCK_HEADER = re.compile(
    r"^\[(?P<name>[A-Za-z0-9_.]+)\]\s+rows=(?P<rows>\d+)\s+cols=(?P<cols>\d+)$"
)
HEADER_FIELD = re.compile(r"(?P<key>[A-Za-z_][A-Za-z0-9_]*)=(?P<value>\S+)")


def resolve_project_path(root: Path, candidate: Path) -> Path:
    """Return an absolute path for *candidate* anchored at *root* when needed."""
    return (
        candidate.expanduser().resolve()
        if candidate.is_absolute()
        else (root / candidate).resolve()
    )


def project_version(root: Path) -> str:
    """Return the version in ``root/pyproject.toml``, else the installed one."""
    pyproject = root / "pyproject.toml"
    if pyproject.is_file():
        data = tomllib.loads(pyproject.read_text(encoding="utf-8"))
        if version := data.get("project", {}).get("version"):
            return str(version)
    try:
        return metadata.version(PACKAGE_NAME)
    except metadata.PackageNotFoundError:
        return "0.0.0+unknown"


def format_row(values: npt.ArrayLike, digits: int = 17) -> str:
    """Render one comma-separated row with ``digits`` significant digits."""
    return ",".join(f"{float(v):.{digits}g}" for v in np.ravel(values))


def parse_row(line: str, *, where: str) -> np.ndarray:
    """Parse a comma-separated row of decimals."""
    try:
        return np.array([float(token) for token in line.split(",")], dtype=np.float64)
    except ValueError as exc:
        msg = f"{where}: malformed numeric row {line[:40]!r}"
        raise FormatError(msg) from exc


def parse_header(
    line: str, *, expected: cabc.Iterable[str], where: str
) -> dict[str, str]:
    """Parse ``key=value`` header fields, requiring every ``expected`` key."""
    fields = {m.group("key"): m.group("value") for m in HEADER_FIELD.finditer(line)}
    if missing := [key for key in expected if key not in fields]:
        msg = f"{where}: header is missing {', '.join(missing)}"
        raise FormatError(msg)
    return fields


def write_blocks(
    path: Path,
    header: str,
    blocks: cabc.Mapping[str, npt.ArrayLike],
) -> None:
    """Write a header line followed by named 2-D numeric blocks.

    Vectors are written as single-row blocks. Values carry 17 significant
    digits so a reload reproduces the float64 values exactly.
    """
    lines = [header]
    for name, raw in blocks.items():
        array = np.atleast_2d(np.asarray(raw, dtype=np.float64))
        lines.append(f"[{name}] rows={array.shape[0]} cols={array.shape[1]}")
        lines.extend(format_row(row) for row in array)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_blocks(path: Path) -> tuple[str, dict[str, np.ndarray]]:
    """Read a file produced by ``write_blocks``.

    Returns
    -------
    tuple[str, dict[str, ndarray]]
        The header line and each block as a 2-D array.

    Raises
    ------
    FileNotFoundError
        If ``path`` does not exist.
    FormatError
        If a block header or row is malformed or truncated.
    """
    if not path.exists():
        msg = f"Missing artifact: {path}"
        raise FileNotFoundError(msg)
    lines = [line.strip() for line in path.read_text(encoding="utf-8").splitlines()]
    lines = [line for line in lines if line]
    if not lines:
        msg = f"{path}: empty artifact"
        raise FormatError(msg)

    blocks: dict[str, np.ndarray] = {}
    idx = 1
    while idx < len(lines):
        match = BLOCK_HEADER.match(lines[idx])
        if match is None:
            msg = f"{path}: expected a block header, got {lines[idx][:40]!r}"
            raise FormatError(msg)
        rows, cols = int(match.group("rows")), int(match.group("cols"))
        body = lines[idx + 1 : idx + 1 + rows]
        if len(body) != rows:
            msg = f"{path}: block {match.group('name')!r} is truncated"
            raise FormatError(msg)
        array = np.array([parse_row(row, where=str(path)) for row in body])
        if array.shape != (rows, cols):
            msg = f"{path}: block {match.group('name')!r} has shape {array.shape}"
            raise FormatError(msg)
        blocks[match.group("name")] = array
        idx += 1 + rows
    return lines[0], blocks


def file_digest(path: Path) -> str:
    """Return the SHA-256 hex digest of a file's bytes."""
    return hashlib.sha256(path.read_bytes()).hexdigest()


def array_digest(array: npt.ArrayLike) -> str:
    """Return the SHA-256 hex digest of an array's float64 bytes."""
    data = np.ascontiguousarray(np.asarray(array, dtype=np.float64))
    return hashlib.sha256(data.tobytes()).hexdigest()


def render_json(payload: object) -> str:
    """Render compact, key-sorted JSON on a single line."""
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))


def write_json(path: Path, payload: object) -> Path:
    """Write ``payload`` as deterministic JSON and return the path."""
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(render_json(payload) + "\n", encoding="utf-8")
    return path


__all__ = [
    "PACKAGE_NAME",
    "array_digest",
    "file_digest",
    "format_row",
    "parse_header",
    "parse_row",
    "project_version",
    "read_blocks",
    "render_json",
    "resolve_project_path",
    "write_blocks",
    "write_json",
]
