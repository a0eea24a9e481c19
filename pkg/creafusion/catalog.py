"""Per-artist catalogs of historical works.

A catalog manifest is a JSON array of entries::

    [
      {"file": "works/lake.ppm", "style_id": 2, "artist_id": "a01",
       "timestamp": "2019-05-01T10:00:00+00:00"}
    ]

``file`` is resolved against the manifest's directory; timestamps are ISO 8601
and read as UTC when they carry no offset. Loading can resize every work to a
common size and equalise its luminance histogram.
"""

from __future__ import annotations

import dataclasses as dc
import datetime as dt
import json
import logging
import typing as typ
from pathlib import Path

from .artifacts import file_digest, resolve_project_path
from .errors import EmptyCatalogError, FormatError
from .imaging import ImageTensor, equalize_luminance, read_image, resize
from .style_classifier import StyleLabel

logger = logging.getLogger(__name__)

MANIFEST_FIELDS: tuple[str, ...] = ("file", "style_id", "artist_id", "timestamp")


@dc.dataclass(frozen=True, eq=False)
class ArtworkRecord:
    """One historical work with its style, artist, and creation time."""

    file: Path
    image: ImageTensor
    style: StyleLabel
    artist_id: str
    timestamp: dt.datetime
    digest: str = ""


def _parse_timestamp(raw: object, *, where: str) -> dt.datetime:
    if not isinstance(raw, str):
        msg = f"{where}: timestamp must be an ISO 8601 string"
        raise FormatError(msg)
    try:
        stamp = dt.datetime.fromisoformat(raw)
    except ValueError as exc:
        msg = f"{where}: malformed timestamp {raw!r}"
        raise FormatError(msg) from exc
    return stamp if stamp.tzinfo else stamp.replace(tzinfo=dt.UTC)


def _parse_style(raw: object, *, where: str) -> StyleLabel:
    if isinstance(raw, bool) or not isinstance(raw, int):
        msg = f"{where}: style_id must be an integer"
        raise FormatError(msg)
    try:
        return StyleLabel(raw)
    except ValueError as exc:
        msg = f"{where}: style_id {raw} is not in 0..{len(StyleLabel) - 1}"
        raise FormatError(msg) from exc


def parse_manifest(manifest: Path) -> list[dict[str, object]]:
    """Read and shape-check a manifest, returning its entry tables.

    Raises
    ------
    FileNotFoundError
        If the manifest does not exist.
    FormatError
        If the JSON is malformed or an entry lacks a field.
    EmptyCatalogError
        If the manifest lists no works.
    """
    if not manifest.exists():
        msg = f"Missing catalog manifest: {manifest}"
        raise FileNotFoundError(msg)
    try:
        raw = json.loads(manifest.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        msg = f"{manifest}: invalid JSON ({exc.msg})"
        raise FormatError(msg) from exc
    if not isinstance(raw, list):
        msg = f"{manifest}: manifest must be a JSON array; got {type(raw).__name__}"
        raise FormatError(msg)
    if not raw:
        msg = f"{manifest}: catalog is empty"
        raise EmptyCatalogError(msg)

    entries: list[dict[str, object]] = []
    for index, entry in enumerate(raw):
        where = f"{manifest}[{index}]"
        if not isinstance(entry, dict):
            msg = f"{where}: entries must be objects; got {type(entry).__name__}"
            raise FormatError(msg)
        if missing := [key for key in MANIFEST_FIELDS if key not in entry]:
            msg = f"{where}: missing {', '.join(missing)}"
            raise FormatError(msg)
        entries.append(typ.cast("dict[str, object]", entry))
    return entries


def load_catalog(
    manifest: Path,
    *,
    size: tuple[int, int] | None = None,
    equalize: bool = False,
) -> tuple[ArtworkRecord, ...]:
    """Load every work listed in ``manifest``.

    Parameters
    ----------
    manifest:
        Path to the JSON manifest.
    size:
        Optional ``(height, width)`` every image is resized to.
    equalize:
        Equalise each image's luminance histogram after resizing.
    """
    base_dir = manifest.resolve().parent
    records: list[ArtworkRecord] = []
    for index, entry in enumerate(parse_manifest(manifest)):
        where = f"{manifest}[{index}]"
        file_name, artist_id = entry["file"], entry["artist_id"]
        if not isinstance(file_name, str) or not isinstance(artist_id, str):
            msg = f"{where}: file and artist_id must be strings"
            raise FormatError(msg)
        path = resolve_project_path(base_dir, Path(file_name))
        image = read_image(path)
        if size is not None:
            image = resize(image, *size)
        if equalize:
            image = equalize_luminance(image)
        records.append(
            ArtworkRecord(
                file=path,
                image=image,
                style=_parse_style(entry["style_id"], where=where),
                artist_id=artist_id,
                timestamp=_parse_timestamp(entry["timestamp"], where=where),
                digest=file_digest(path),
            )
        )
    logger.debug("Loaded %d works from %s", len(records), manifest)
    return tuple(records)


def write_manifest(manifest: Path, entries: list[dict[str, object]]) -> Path:
    """Write manifest entries as indented JSON."""
    manifest.parent.mkdir(parents=True, exist_ok=True)
    manifest.write_text(json.dumps(entries, indent=2) + "\n", encoding="utf-8")
    return manifest


__all__ = [
    "MANIFEST_FIELDS",
    "ArtworkRecord",
    "load_catalog",
    "parse_manifest",
    "write_manifest",
]
