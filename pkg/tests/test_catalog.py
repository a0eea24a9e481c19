"""Unit tests for catalog manifests."""

from __future__ import annotations

import datetime as dt
import typing as typ

import pytest

from creafusion.artifacts import file_digest
from creafusion.catalog import load_catalog, parse_manifest, write_manifest
from creafusion.errors import EmptyCatalogError, FormatError
from creafusion.imaging import noise, write_ppm
from creafusion.style_classifier import StyleLabel

if typ.TYPE_CHECKING:
    from pathlib import Path


def _entry(file: str, **overrides: object) -> dict[str, object]:
    entry: dict[str, object] = {
        "file": file,
        "style_id": 2,
        "artist_id": "a01",
        "timestamp": "2019-05-01T10:00:00",
    }
    entry.update(overrides)
    return entry


def test_load_catalog_resolves_files_and_timestamps(tmp_path: Path) -> None:
    """Files resolve beside the manifest; naive timestamps read as UTC."""
    work = write_ppm(tmp_path / "works" / "lake.ppm", noise(6, 4, seed=1))
    manifest = write_manifest(
        tmp_path / "manifest.json",
        [
            _entry("works/lake.ppm"),
            _entry(
                "works/lake.ppm", style_id=0, timestamp="2020-01-01T00:00:00+02:00"
            ),
        ],
    )
    first, second = load_catalog(manifest)
    assert first.file == work.resolve(), f"got {first.file}"
    assert first.style is StyleLabel.SKETCH, "style ids map onto labels"
    assert first.timestamp.tzinfo is dt.UTC, "naive timestamps are UTC"
    assert second.timestamp.utcoffset() == dt.timedelta(hours=2)
    assert first.digest == file_digest(work), "records carry the file digest"
    assert first.image.size == (6, 4), "images load at their stored size"


def test_load_catalog_can_resize_and_equalise(tmp_path: Path) -> None:
    """A target size is applied to every work."""
    write_ppm(tmp_path / "a.ppm", noise(5, 7, seed=2))
    manifest = write_manifest(tmp_path / "m.json", [_entry("a.ppm")])
    (record,) = load_catalog(manifest, size=(8, 8), equalize=True)
    assert record.image.size == (8, 8), f"got {record.image.size}"


@pytest.mark.parametrize(
    ("payload", "error", "fragment"),
    [
        ("[]", EmptyCatalogError, "catalog is empty"),
        ("{}", FormatError, "JSON array"),
        ("[1]", FormatError, "entries must be objects"),
        ('[{"file": "a.ppm"}]', FormatError, "missing style_id"),
        ("[", FormatError, "invalid JSON"),
    ],
    ids=["empty", "object", "scalar-entry", "missing-fields", "bad-json"],
)
def test_malformed_manifests_raise(
    tmp_path: Path, payload: str, error: type[Exception], fragment: str
) -> None:
    """Shape problems are reported with the manifest path."""
    manifest = tmp_path / "m.json"
    manifest.write_text(payload, encoding="utf-8")
    with pytest.raises(error, match=fragment):
        parse_manifest(manifest)


@pytest.mark.parametrize(
    ("overrides", "fragment"),
    [
        ({"style_id": 7}, "not in 0..3"),
        ({"style_id": True}, "must be an integer"),
        ({"timestamp": "yesterday"}, "malformed timestamp"),
        ({"artist_id": 5}, "must be strings"),
    ],
    ids=["style-range", "style-bool", "timestamp", "artist"],
)
def test_bad_entry_values_raise(
    tmp_path: Path, overrides: dict[str, object], fragment: str
) -> None:
    """Entry values are typed as they load."""
    write_ppm(tmp_path / "a.ppm", noise(2, 2, seed=3))
    manifest = write_manifest(tmp_path / "m.json", [_entry("a.ppm", **overrides)])
    with pytest.raises(FormatError, match=fragment):
        load_catalog(manifest)


def test_missing_manifest_is_reported(tmp_path: Path) -> None:
    """An absent manifest raises FileNotFoundError."""
    with pytest.raises(FileNotFoundError):
        parse_manifest(tmp_path / "absent.json")
