"""Unit tests for image tensors, the PPM codec, resizing, and equalisation."""

from __future__ import annotations

import typing as typ

import numpy as np
import pytest
from PIL import Image

from creafusion.errors import FormatError, ValidationError
from creafusion.imaging import (
    ImageTensor,
    equalize_luminance,
    noise,
    read_image,
    resize,
    solid,
    write_ppm,
)

if typ.TYPE_CHECKING:
    from pathlib import Path


def test_tensor_rejects_bad_shapes_and_values() -> None:
    """Images are (H, W, 3) and finite."""
    with pytest.raises(ValidationError):
        ImageTensor(np.zeros((4, 4)))
    with pytest.raises(ValidationError):
        ImageTensor(np.full((1, 1, 3), np.nan))


def test_luminance_uses_rec601_weights() -> None:
    """Pure channels map to their luma weights."""
    image = ImageTensor(np.eye(3).reshape(1, 3, 3))
    np.testing.assert_allclose(image.luminance(), [[0.299, 0.587, 0.114]])


def test_ppm_round_trip_is_exact_at_eight_bits(tmp_path: Path) -> None:
    """Values on the 8-bit grid survive write and read exactly."""
    levels = np.arange(48).reshape(4, 4, 3) * 5 / 255.0
    path = write_ppm(tmp_path / "out" / "grid.ppm", ImageTensor(levels))
    assert path.read_bytes().startswith(b"P6"), "files are binary PPM"
    np.testing.assert_allclose(read_image(path).pixels, levels, atol=1e-12)


def test_read_image_accepts_png(tmp_path: Path) -> None:
    """Any Pillow-readable format decodes into [0, 1]."""
    path = tmp_path / "red.png"
    Image.new("RGB", (3, 2), (255, 0, 0)).save(path)
    image = read_image(path)
    assert image.size == (2, 3), f"got {image.size}"
    np.testing.assert_allclose(image.pixels[0, 0], [1.0, 0.0, 0.0])


def test_read_image_rejects_non_images(tmp_path: Path) -> None:
    """Undecodable files are format errors; absent files are missing."""
    path = tmp_path / "junk.ppm"
    path.write_bytes(b"not an image")
    with pytest.raises(FormatError):
        read_image(path)
    with pytest.raises(FileNotFoundError):
        read_image(tmp_path / "absent.ppm")


def test_resize_keeps_solid_colour() -> None:
    """Bilinear resampling of a constant image stays constant."""
    resized = resize(solid(4, 6, (0.25, 0.5, 0.75)), 8, 3)
    assert resized.size == (8, 3), f"got {resized.size}"
    np.testing.assert_allclose(resized.pixels[5, 1], [0.25, 0.5, 0.75], atol=1e-6)


def test_resize_rejects_empty_target() -> None:
    """Targets must have positive sides."""
    with pytest.raises(ValidationError):
        resize(noise(2, 2, seed=0), 0, 2)


def test_equalisation_spreads_luminance() -> None:
    """A low-contrast image reaches full brightness after equalisation."""
    dim = ImageTensor(0.2 + 0.1 * noise(16, 16, seed=1).pixels)
    equalised = equalize_luminance(dim)
    assert equalised.luminance().max() > 0.9, "brightest pixel should approach one"
    assert dim.luminance().max() < 0.31, "input was low contrast"


def test_equalisation_leaves_flat_images_alone() -> None:
    """A single-level image has nothing to spread."""
    flat = solid(3, 3, (0.4, 0.4, 0.4))
    assert equalize_luminance(flat) is flat
