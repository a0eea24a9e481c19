"""LSTM sequence classifier mapping EEG feature sequences to a painting style.

Inputs are either one-frame CSP log-variance vectors or multi-frame sequences
of per-frame signal features; a single model type serves both. Features are
standardised with the training set's per-dimension mean and scale, the LSTM
runs over the frames, and the final hidden state is projected to class logits.

Model files are UTF-8 text::

    D=36 H=32 K=4 seed=0
    [feature.mean] rows=1 cols=36
    ...
    [feature.scale] rows=1 cols=36
    [lstm.w_x] rows=36 cols=128
    [lstm.w_h] rows=32 cols=128
    [lstm.b] rows=1 cols=128
    [out.w] rows=32 cols=4
    [out.b] rows=1 cols=4
    [loss] rows=1 cols=E

Example
-------
>>> model = train(samples, TrainingConfig(epochs=300, seed=7))
>>> probabilities = forward(model, samples[0])
"""

from __future__ import annotations

import dataclasses as dc
import enum
import logging
import typing as typ

import numpy as np

from .artifacts import parse_header, read_blocks, write_blocks
from .csp import apply_and_featurize
from .eeg_signal import DEFAULT_WINDOW, frame_feature_sequence
from .errors import (
    DimensionMismatchError,
    EmptyCatalogError,
    FormatError,
    MissingClassError,
    ValidationError,
)
from .numeric_core import GradTape, Node, seeded_rng
from .recurrent import (
    LSTM_BLOCKS,
    Params,
    TrainingConfig,
    descend,
    group_by_length,
    init_head,
    init_lstm,
    lstm_states,
    softmax,
)

if typ.TYPE_CHECKING:
    import collections.abc as cabc
    from pathlib import Path

    import numpy.typing as npt

    from .catalog import ArtworkRecord
    from .csp import FilterBank
    from .eeg_signal import EegTrial

logger = logging.getLogger(__name__)

PARAMETER_BLOCKS: tuple[str, ...] = (*LSTM_BLOCKS, "out.w", "out.b")
SCALE_FLOOR: float = 1e-8


class StyleLabel(enum.IntEnum):
    """Painting styles the EEG classifier can select."""

    OIL_PAINTING = 0
    TRADITIONAL_CHINESE_PAINTING = 1
    SKETCH = 2
    CARTOON = 3

    @property
    def display_name(self) -> str:
        """Human-readable name, for example ``"traditional Chinese painting"``."""
        return _DISPLAY_NAMES[self]

    @classmethod
    def from_name(cls, name: str) -> StyleLabel:
        """Look up a label by its display name."""
        for label, display in _DISPLAY_NAMES.items():
            if display == name.strip():
                return label
        msg = f"Unknown style name {name!r}"
        raise ValidationError(msg)


_DISPLAY_NAMES: dict[StyleLabel, str] = {
    StyleLabel.OIL_PAINTING: "oil painting",
    StyleLabel.TRADITIONAL_CHINESE_PAINTING: "traditional Chinese painting",
    StyleLabel.SKETCH: "sketch",
    StyleLabel.CARTOON: "cartoon",
}


@dc.dataclass(frozen=True, eq=False)
class SequenceSample:
    """A (T, D) feature sequence with an optional class label."""

    frames: np.ndarray
    label: int | None = None

    def __post_init__(self) -> None:
        frames = np.asarray(self.frames, dtype=np.float64)
        if frames.ndim == 1:
            frames = frames[None, :]
        object.__setattr__(self, "frames", frames)
        if frames.ndim != 2 or min(frames.shape) < 1:  # noqa: PLR2004
            msg = f"A sequence needs at least one frame and feature; got {frames.shape}"
            raise ValidationError(msg)
        if not np.all(np.isfinite(frames)):
            msg = "Sequence frames contain non-finite values"
            raise ValidationError(msg)

    @property
    def dim(self) -> int:
        """Frame width D."""
        return int(self.frames.shape[1])


@dc.dataclass(frozen=True, eq=False)
class LstmClassifier:
    """Trained (or freshly initialised) LSTM classifier.

    ``params`` holds the blocks named in ``PARAMETER_BLOCKS``;
    ``feature_mean`` and ``feature_scale`` standardise each input dimension.
    """

    params: Params
    feature_mean: np.ndarray
    feature_scale: np.ndarray
    seed: int = 0
    losses: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        if missing := [name for name in PARAMETER_BLOCKS if name not in self.params]:
            msg = f"Classifier is missing parameter blocks: {', '.join(missing)}"
            raise ValidationError(msg)
        d, h, k = self.input_dim, self.hidden_dim, self.class_count
        expected = {
            "lstm.w_x": (d, 4 * h),
            "lstm.w_h": (h, 4 * h),
            "lstm.b": (4 * h,),
            "out.w": (h, k),
            "out.b": (k,),
        }
        for name, shape in expected.items():
            if self.params[name].shape != shape:
                actual = self.params[name].shape
                msg = f"Block {name} has shape {actual}; expected {shape}"
                raise ValidationError(msg)
        if self.feature_mean.shape != (d,) or self.feature_scale.shape != (d,):
            msg = "Feature standardisation vectors must match the input dimension"
            raise ValidationError(msg)
        if not all(np.all(np.isfinite(v)) for v in self.params.values()):
            msg = "Classifier parameters must be finite"
            raise ValidationError(msg)

    @property
    def input_dim(self) -> int:
        """Frame width D."""
        return int(self.params["lstm.w_x"].shape[0])

    @property
    def hidden_dim(self) -> int:
        """Hidden width H."""
        return int(self.params["lstm.w_h"].shape[0])

    @property
    def class_count(self) -> int:
        """Number of classes K."""
        return int(self.params["out.b"].shape[0])

    def standardise(self, frames: npt.ArrayLike) -> np.ndarray:
        """Apply the stored per-dimension standardisation."""
        values = np.asarray(frames, dtype=np.float64)
        return (values - self.feature_mean) / self.feature_scale


@dc.dataclass(frozen=True)
class StyleMatch:
    """Catalog entry chosen for a style label."""

    record: ArtworkRecord
    fallback: bool


def initialise(
    input_dim: int,
    class_count: int,
    *,
    hidden_dim: int = 32,
    seed: int = 0,
) -> LstmClassifier:
    """Return a Xavier-initialised classifier with identity standardisation."""
    rng = seeded_rng(seed)
    params = init_lstm(rng, input_dim, hidden_dim)
    params |= init_head(rng, hidden_dim, class_count)
    return LstmClassifier(
        params=params,
        feature_mean=np.zeros(input_dim),
        feature_scale=np.ones(input_dim),
        seed=seed,
    )


def trial_sample(
    trial: EegTrial,
    *,
    feature_path: str = "csp",
    bank: FilterBank | None = None,
    window: int = DEFAULT_WINDOW,
    hop: int | None = None,
) -> SequenceSample:
    """Turn a trial into a classifier input along the chosen feature path.

    ``csp`` yields a one-frame sequence of mixed-filter log-variances and needs
    ``bank``; ``frames`` yields the per-frame signal feature sequence.
    """
    match feature_path:
        case "csp":
            if bank is None:
                msg = "The csp feature path needs a filter bank"
                raise ValidationError(msg)
            frames = apply_and_featurize(bank, trial)
        case "frames":
            frames = frame_feature_sequence(trial, window, hop)
        case _:
            msg = f"Unknown feature path {feature_path!r}; use csp or frames"
            raise ValidationError(msg)
    return SequenceSample(frames=frames, label=trial.label)


def _logits(tape: GradTape, nodes: cabc.Mapping[str, Node], batch: np.ndarray) -> Node:
    states = lstm_states(tape, nodes, batch)
    return tape.add(tape.matmul(states[-1], nodes["out.w"]), nodes["out.b"])


def _check_dim(model: LstmClassifier, sample: SequenceSample) -> None:
    if sample.dim != model.input_dim:
        msg = f"Sample has {sample.dim} features; model expects {model.input_dim}"
        raise DimensionMismatchError(msg)


def forward(model: LstmClassifier, sample: SequenceSample) -> np.ndarray:
    """Return the class probabilities for one sequence."""
    _check_dim(model, sample)
    tape = GradTape()
    nodes = {name: tape.watch(model.params[name]) for name in PARAMETER_BLOCKS}
    logits = _logits(tape, nodes, model.standardise(sample.frames)[None, :, :])
    return softmax(logits.value[0])


def predict(model: LstmClassifier, sample: SequenceSample) -> int:
    """Most probable class id; ties resolve to the lowest id."""
    return int(np.argmax(forward(model, sample)))


def _require_classes(dataset: cabc.Sequence[SequenceSample], class_count: int) -> None:
    labels = {sample.label for sample in dataset}
    if None in labels:
        msg = "Training samples must be labelled"
        raise ValidationError(msg)
    if missing := [k for k in range(class_count) if k not in labels]:
        msg = f"Training set lacks classes: {', '.join(map(str, missing))}"
        raise MissingClassError(msg)
    if unknown := sorted(k for k in labels if k is not None and k >= class_count):
        msg = f"Labels outside 0..{class_count - 1}: {unknown}"
        raise ValidationError(msg)


def sequence_loss(
    tape: GradTape,
    nodes: cabc.Mapping[str, Node],
    sequences: cabc.Sequence[np.ndarray],
    labels: npt.ArrayLike,
) -> Node:
    """Mean cross-entropy over all sequences, batched by sequence length."""
    targets = np.asarray(labels, dtype=np.int64)
    total = len(sequences)
    loss: Node | None = None
    for _, members in group_by_length(sequences):
        batch = np.stack([sequences[i] for i in members])
        term = tape.scale(
            tape.cross_entropy(_logits(tape, nodes, batch), targets[members]),
            len(members) / total,
        )
        loss = term if loss is None else tape.add(loss, term)
    if loss is None:
        msg = "sequence_loss needs at least one sequence"
        raise ValidationError(msg)
    return loss


def train(
    dataset: cabc.Sequence[SequenceSample],
    config: TrainingConfig | None = None,
    *,
    class_count: int = len(StyleLabel),
) -> LstmClassifier:
    """Train a classifier with full-batch cross-entropy gradient descent.

    Raises
    ------
    MissingClassError
        If any class in ``0..class_count-1`` has no sample; the message lists
        every missing class.
    DimensionMismatchError
        If samples disagree on frame width.
    """
    settings = config or TrainingConfig()
    if not dataset:
        msg = "Training set is empty"
        raise MissingClassError(msg)
    _require_classes(dataset, class_count)
    dims = {sample.dim for sample in dataset}
    if len(dims) != 1:
        msg = f"Samples disagree on frame width: {sorted(dims)}"
        raise DimensionMismatchError(msg)

    model = initialise(
        dims.pop(), class_count, hidden_dim=settings.hidden_dim, seed=settings.seed
    )
    stacked = np.vstack([sample.frames for sample in dataset])
    mean = stacked.mean(axis=0)
    scale = np.maximum(stacked.std(axis=0), SCALE_FLOOR)
    sequences = [(sample.frames - mean) / scale for sample in dataset]
    labels = [sample.label for sample in dataset]

    params, losses = descend(
        model.params,
        lambda tape, nodes: sequence_loss(tape, nodes, sequences, labels),
        settings,
    )
    return LstmClassifier(
        params=params,
        feature_mean=mean,
        feature_scale=scale,
        seed=settings.seed,
        losses=losses,
    )


def match_style(
    label: StyleLabel | int, catalog: cabc.Sequence[ArtworkRecord]
) -> StyleMatch:
    """Pick the most recent catalog work in ``label``'s style.

    Recency ties break by file name ascending. When no work has the style, the
    most recent work overall is returned with ``fallback`` set.

    Raises
    ------
    EmptyCatalogError
        If ``catalog`` is empty.
    """
    if not catalog:
        msg = "Cannot match a style against an empty catalog"
        raise EmptyCatalogError(msg)
    style = StyleLabel(label)
    ranked = sorted(
        catalog,
        key=lambda record: (-record.timestamp.timestamp(), record.file.name),
    )
    for record in ranked:
        if record.style is style:
            return StyleMatch(record=record, fallback=False)
    logger.warning(
        "No catalog work in style %r; using the most recent work",
        style.display_name,
    )
    return StyleMatch(record=ranked[0], fallback=True)


def write_model(path: Path, model: LstmClassifier) -> Path:
    """Write ``model`` in the classifier text format."""
    header = (
        f"D={model.input_dim} H={model.hidden_dim} K={model.class_count} "
        f"seed={model.seed}"
    )
    blocks: dict[str, npt.ArrayLike] = {
        "feature.mean": model.feature_mean,
        "feature.scale": model.feature_scale,
        **{name: model.params[name] for name in PARAMETER_BLOCKS},
    }
    if model.losses:
        blocks["loss"] = np.asarray(model.losses)
    write_blocks(path, header, blocks)
    return path


def read_model(path: Path) -> LstmClassifier:
    """Read a classifier written by ``write_model``."""
    header, blocks = read_blocks(path)
    fields = parse_header(header, expected=("D", "H", "K", "seed"), where=str(path))
    vectors = {"lstm.b", "out.b", "feature.mean", "feature.scale"}
    params: Params = {}
    for name in PARAMETER_BLOCKS:
        if name not in blocks:
            msg = f"{path}: missing block {name!r}"
            raise FormatError(msg)
        params[name] = blocks[name].ravel() if name in vectors else blocks[name]
    try:
        model = LstmClassifier(
            params=params,
            feature_mean=blocks["feature.mean"].ravel(),
            feature_scale=blocks["feature.scale"].ravel(),
            seed=int(fields["seed"]),
            losses=tuple(blocks["loss"].ravel()) if "loss" in blocks else (),
        )
    except KeyError as exc:
        msg = f"{path}: missing block {exc.args[0]!r}"
        raise FormatError(msg) from exc
    declared = (int(fields["D"]), int(fields["H"]), int(fields["K"]))
    if declared != (model.input_dim, model.hidden_dim, model.class_count):
        msg = f"{path}: header {declared} disagrees with the parameter blocks"
        raise FormatError(msg)
    return model


__all__ = [
    "PARAMETER_BLOCKS",
    "LstmClassifier",
    "SequenceSample",
    "StyleLabel",
    "StyleMatch",
    "forward",
    "initialise",
    "match_style",
    "predict",
    "read_model",
    "sequence_loss",
    "train",
    "trial_sample",
    "write_model",
]
