"""RGB image tensors and their file codec.

Images are float64 arrays of shape (H, W, 3) with values in [0, 1]. Files are
written as binary PPM (P6, 8-bit) through Pillow; reading accepts any format
Pillow decodes and maps 8-bit channels linearly onto [0, 1].
"""

from __future__ import annotations

import dataclasses as dc
import typing as typ

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import FormatError, ValidationError
from .numeric_core import seeded_rng

if typ.TYPE_CHECKING:
    from pathlib import Path

    import numpy.typing as npt

LUMA_WEIGHTS: np.ndarray = np.array([0.299, 0.587, 0.114])
HISTOGRAM_BINS: int = 256


@dc.dataclass(frozen=True, eq=False)
class ImageTensor:
    """An (H, W, 3) RGB image with finite values in [0, 1]."""

    pixels: np.ndarray

    def __post_init__(self) -> None:
        pixels = np.asarray(self.pixels, dtype=np.float64)
        shape = pixels.shape
        if len(shape) != 3 or shape[2] != 3 or 0 in shape:  # noqa: PLR2004
            msg = f"Images must have shape (H, W, 3); got {pixels.shape}"
            raise ValidationError(msg)
        if not np.all(np.isfinite(pixels)):
            msg = "Image contains non-finite values"
            raise ValidationError(msg)
        object.__setattr__(self, "pixels", np.clip(pixels, 0.0, 1.0))

    @property
    def height(self) -> int:
        """Rows."""
        return int(self.pixels.shape[0])

    @property
    def width(self) -> int:
        """Columns."""
        return int(self.pixels.shape[1])

    @property
    def size(self) -> tuple[int, int]:
        """``(height, width)``."""
        return self.height, self.width

    def luminance(self) -> np.ndarray:
        """Rec. 601 luma, shape (H, W)."""
        return self.pixels @ LUMA_WEIGHTS

    def to_uint8(self) -> np.ndarray:
        """Quantise to 8-bit channels with round-half-to-even."""
        return np.round(self.pixels * 255.0).astype(np.uint8)


def solid(height: int, width: int, rgb: npt.ArrayLike) -> ImageTensor:
    """Uniformly coloured image."""
    colour = np.asarray(rgb, dtype=np.float64).reshape(1, 1, 3)
    return ImageTensor(np.broadcast_to(colour, (height, width, 3)).copy())


def noise(height: int, width: int, seed: int) -> ImageTensor:
    """Seeded uniform white-noise image."""
    return ImageTensor(seeded_rng(seed).uniform(0.0, 1.0, size=(height, width, 3)))


def read_image(path: Path) -> ImageTensor:
    """Decode an image file into an ``ImageTensor``.

    Raises
    ------
    FileNotFoundError
        If ``path`` does not exist.
    FormatError
        If Pillow cannot decode the file.
    """
    if not path.exists():
        msg = f"Missing image file: {path}"
        raise FileNotFoundError(msg)
    try:
        with Image.open(path) as handle:
            rgb = np.asarray(handle.convert("RGB"), dtype=np.float64)
    except UnidentifiedImageError as exc:
        msg = f"{path}: not a readable image"
        raise FormatError(msg) from exc
    return ImageTensor(rgb / 255.0)


def write_ppm(path: Path, image: ImageTensor) -> Path:
    """Encode ``image`` as binary PPM and return ``path``."""
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(image.to_uint8()).save(path, format="PPM")
    return path


def resize(image: ImageTensor, height: int, width: int) -> ImageTensor:
    """Bilinearly resample each channel to ``height`` x ``width``."""
    if height < 1 or width < 1:
        msg = f"Target size must be positive; got {height}x{width}"
        raise ValidationError(msg)
    if image.size == (height, width):
        return image
    channels = [
        np.asarray(
            Image.fromarray(image.pixels[:, :, c].astype(np.float32)).resize(
                (width, height), Image.Resampling.BILINEAR
            ),
            dtype=np.float64,
        )
        for c in range(3)
    ]
    return ImageTensor(np.stack(channels, axis=2))


def equalize_luminance(image: ImageTensor) -> ImageTensor:
    """Spread the luminance histogram over the full range.

    The Rec. 601 luma is equalised over 256 bins and each pixel's RGB is
    scaled by its new-to-old luma ratio, clamped to [0, 1]. Black pixels take
    the equalised luma as a grey level.
    """
    luma = image.luminance()
    bins = np.minimum((luma * HISTOGRAM_BINS).astype(np.int64), HISTOGRAM_BINS - 1)
    counts = np.bincount(bins.ravel(), minlength=HISTOGRAM_BINS)
    cdf = np.cumsum(counts).astype(np.float64)
    low = cdf[np.flatnonzero(counts)[0]]
    if cdf[-1] == low:
        return image
    mapped = ((cdf - low) / (cdf[-1] - low))[bins]

    ratio = np.divide(mapped, luma, out=np.zeros_like(luma), where=luma > 0.0)
    pixels = image.pixels * ratio[:, :, None]
    black = luma <= 0.0
    pixels[black] = mapped[black][:, None]
    return ImageTensor(np.clip(pixels, 0.0, 1.0))


__all__ = [
    "ImageTensor",
    "equalize_luminance",
    "noise",
    "read_image",
    "resize",
    "solid",
    "write_ppm",
]
