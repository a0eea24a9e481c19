"""Line-oriented ``key=value`` run configuration.

Blank lines and lines starting with ``#`` are skipped, and a trailing
`` # comment`` is stripped. Every key is typed through ``ValueKind``; unknown
keys, duplicate keys, malformed values, and referenced files that do not exist
all raise ``ValidationError`` when the file is loaded. Relative paths resolve
against the configuration file's directory.

Examples
--------
    # pipeline.cfg
    seed=7
    eeg=trials/class2.eeg
    style_model=models/style.txt
    filter_bank=models/bank.txt
    catalog=catalog/manifest.json
    draft=draft.ppm
    emotion_sequence=voice.seq
    emotion_model=models/emotion.txt
    valence_map=0:1,1:-1,2:0,3:0.5

    config = load_run_config(Path("pipeline.cfg"))
"""

from __future__ import annotations

import dataclasses as dc
import enum
import re
import typing as typ
from pathlib import Path

from .artifacts import resolve_project_path
from .eeg_signal import MIN_NONLINEAR_LENGTH
from .emotion import DEFAULT_VALENCE_MAP
from .errors import ValidationError
from .style_transfer import DEFAULT_CONTENT_LAYERS, DEFAULT_STYLE_LAYERS

if typ.TYPE_CHECKING:
    import collections.abc as cabc

FEATURE_PATHS: frozenset[str] = frozenset({"csp", "frames"})
MAX_HUE_STRENGTH: float = 0.5
IMAGE_SIZE_PATTERN = re.compile(r"^(?P<height>\d+)x(?P<width>\d+)$")


class ValueKind(enum.StrEnum):
    """Coercions applied to configuration values."""

    STRING = "string"
    INT = "int"
    FLOAT = "float"
    PATH = "path"
    LIST = "list"
    MAPPING = "mapping"
    SIZE = "size"


KEY_KINDS: dict[str, ValueKind] = {
    "seed": ValueKind.INT,
    "eeg": ValueKind.PATH,
    "filter_bank": ValueKind.PATH,
    "style_model": ValueKind.PATH,
    "feature_path": ValueKind.STRING,
    "catalog": ValueKind.PATH,
    "draft": ValueKind.PATH,
    "emotion_sequence": ValueKind.PATH,
    "emotion_model": ValueKind.PATH,
    "alpha": ValueKind.FLOAT,
    "beta": ValueKind.FLOAT,
    "iters": ValueKind.INT,
    "step": ValueKind.FLOAT,
    "window": ValueKind.INT,
    "hop": ValueKind.INT,
    "content_layers": ValueKind.LIST,
    "style_layers": ValueKind.LIST,
    "net_weights": ValueKind.PATH,
    "base_width": ValueKind.INT,
    "valence_map": ValueKind.MAPPING,
    "hue_strength": ValueKind.FLOAT,
    "image_size": ValueKind.SIZE,
}


@dc.dataclass(frozen=True)
class RunConfig:
    """Validated settings for a pipeline run."""

    seed: int = 0
    eeg: Path | None = None
    filter_bank: Path | None = None
    style_model: Path | None = None
    feature_path: str = "csp"
    catalog: Path | None = None
    draft: Path | None = None
    emotion_sequence: Path | None = None
    emotion_model: Path | None = None
    alpha: float = 1.0
    beta: float = 1000.0
    iters: int = 50
    step: float = 0.05
    window: int = 256
    hop: int = 128
    content_layers: tuple[str, ...] = DEFAULT_CONTENT_LAYERS
    style_layers: tuple[str, ...] = DEFAULT_STYLE_LAYERS
    net_weights: Path | None = None
    base_width: int = 8
    valence_map: dict[int, float] = dc.field(
        default_factory=lambda: dict(DEFAULT_VALENCE_MAP)
    )
    hue_strength: float = 0.1
    image_size: tuple[int, int] | None = None

    def __post_init__(self) -> None:
        problems = _range_problems(self)
        if problems:
            msg = "Invalid configuration: " + "; ".join(problems)
            raise ValidationError(msg)

    def require(self, *keys: str) -> None:
        """Raise unless every key in ``keys`` is set."""
        if missing := [key for key in keys if getattr(self, key) is None]:
            msg = f"Configuration is missing required keys: {', '.join(missing)}"
            raise ValidationError(msg)

    def as_dict(self) -> dict[str, str]:
        """Render every set value in its canonical ``key=value`` spelling."""
        rendered: dict[str, str] = {}
        for key, kind in KEY_KINDS.items():
            value = getattr(self, key)
            if value is not None:
                rendered[key] = _render(kind, value)
        return rendered

    @classmethod
    def from_mapping(
        cls, values: cabc.Mapping[str, str], *, base_dir: Path
    ) -> RunConfig:
        """Build a config from raw string values, resolving paths at ``base_dir``."""
        if unknown := sorted(set(values) - set(KEY_KINDS)):
            msg = f"Unknown configuration keys: {', '.join(unknown)}"
            raise ValidationError(msg)
        coerced = {
            key: _coerce(key, KEY_KINDS[key], raw, base_dir)
            for key, raw in values.items()
        }
        return cls(**coerced)


def _range_problems(config: RunConfig) -> list[str]:
    checks = [
        (config.feature_path in FEATURE_PATHS, "feature_path must be csp or frames"),
        (config.alpha >= 0.0 and config.beta >= 0.0, "alpha and beta must be >= 0"),
        (config.iters >= 1, "iters must be >= 1"),
        (config.step > 0.0, "step must be > 0"),
        (
            config.window >= 2 and not config.window & (config.window - 1),  # noqa: PLR2004
            "window must be a power of two",
        ),
        (1 <= config.hop <= config.window, "hop must lie in [1, window]"),
        (
            config.feature_path != "frames" or config.window >= MIN_NONLINEAR_LENGTH,
            f"window must be >= {MIN_NONLINEAR_LENGTH} for the frames feature path",
        ),
        (config.base_width >= 1, "base_width must be >= 1"),
        (
            0.0 <= config.hue_strength <= MAX_HUE_STRENGTH,
            "hue_strength must lie in [0, 0.5]",
        ),
        (
            all(-1.0 <= v <= 1.0 for v in config.valence_map.values()),
            "valence_map values must lie in [-1, 1]",
        ),
    ]
    return [message for ok, message in checks if not ok]


def _coerce(key: str, kind: ValueKind, raw: str, base_dir: Path) -> object:
    """Convert one raw value according to its kind."""
    value = raw.strip()
    try:
        match kind:
            case ValueKind.INT:
                return int(value)
            case ValueKind.FLOAT:
                return float(value)
            case ValueKind.PATH:
                return _existing_path(key, value, base_dir)
            case ValueKind.LIST:
                return tuple(item.strip() for item in value.split(",") if item.strip())
            case ValueKind.MAPPING:
                return parse_valence_map(value)
            case ValueKind.SIZE:
                return _parse_size(value)
            case _:
                return value
    except ValueError as exc:
        msg = f"Invalid value for {key!r}: {raw!r} ({exc})"
        raise ValidationError(msg) from exc


def _existing_path(key: str, value: str, base_dir: Path) -> Path:
    if not value:
        msg = f"Configuration key {key!r} has an empty path"
        raise ValidationError(msg)
    resolved = resolve_project_path(base_dir, Path(value))
    if not resolved.exists():
        msg = f"Configuration key {key!r} references a missing path: {resolved}"
        raise ValidationError(msg)
    return resolved


def parse_valence_map(value: str) -> dict[int, float]:
    """Parse ``id:valence`` pairs such as ``0:1,1:-1``; raises ValueError."""
    mapping: dict[int, float] = {}
    for item in value.split(","):
        if not item.strip():
            continue
        label, sep, valence = item.partition(":")
        if not sep:
            msg = f"mapping entries look like id:value; got {item.strip()!r}"
            raise ValueError(msg)
        mapping[int(label)] = float(valence)
    return mapping


def _parse_size(value: str) -> tuple[int, int]:
    match = IMAGE_SIZE_PATTERN.match(value)
    if match is None:
        msg = "expected HEIGHTxWIDTH"
        raise ValueError(msg)
    return int(match.group("height")), int(match.group("width"))


def _render(kind: ValueKind, value: object) -> str:
    match kind:
        case ValueKind.LIST:
            return ",".join(typ.cast("tuple[str, ...]", value))
        case ValueKind.MAPPING:
            items = typ.cast("dict[int, float]", value).items()
            return ",".join(f"{label}:{valence!r}" for label, valence in sorted(items))
        case ValueKind.SIZE:
            height, width = typ.cast("tuple[int, int]", value)
            return f"{height}x{width}"
        case ValueKind.FLOAT:
            return repr(float(typ.cast("float", value)))
        case _:
            return str(value)


def _process_line(raw_line: str) -> tuple[str, str] | None:
    """Split one configuration line, returning None for blanks and comments."""
    if not raw_line.strip() or re.match(r"^\s*#", raw_line):
        return None
    token = re.sub(r"\s+#.*$", "", raw_line).strip()
    if not token:
        return None
    if "=" not in token:
        msg = f"Configuration lines must look like key=value; got {token!r}"
        raise ValidationError(msg)
    key, value = token.split("=", 1)
    if not key.strip():
        msg = "Configuration keys may not be empty"
        raise ValidationError(msg)
    return key.strip(), value.strip()


def parse_config_lines(lines: cabc.Iterable[str]) -> dict[str, str]:
    """Collect raw ``key=value`` pairs, rejecting duplicate keys."""
    values: dict[str, str] = {}
    for raw_line in lines:
        processed = _process_line(raw_line)
        if processed is None:
            continue
        key, value = processed
        if key in values:
            msg = f"Duplicate configuration key {key!r}"
            raise ValidationError(msg)
        values[key] = value
    return values


def load_run_config(path: Path) -> RunConfig:
    """Parse and validate a configuration file.

    Raises
    ------
    ValidationError
        If the file is missing or any key or value is invalid.
    """
    if not path.is_file():
        msg = f"Missing configuration file: {path}"
        raise ValidationError(msg)
    values = parse_config_lines(path.read_text(encoding="utf-8").splitlines())
    return RunConfig.from_mapping(values, base_dir=path.resolve().parent)


__all__ = [
    "KEY_KINDS",
    "RunConfig",
    "ValueKind",
    "load_run_config",
    "parse_config_lines",
    "parse_valence_map",
]
