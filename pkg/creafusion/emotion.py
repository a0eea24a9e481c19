"""Attention-pooled recurrent emotion recogniser and valence mapping.

An LSTM runs over framewise acoustic feature vectors; each hidden state
``y_t`` is scored against a learned attention vector ``mu``, the scores are
softmax-normalised into weights ``alpha_t``, and the pooled state
``z = sum_t alpha_t y_t`` is projected to emotion logits. The emotion
probabilities are folded into a valence in [-1, 1] through a configurable
label-to-valence map.

Sequence files reuse the EEG trial layout with a ``dim= frames= label=``
header and one comma-separated row per frame. Model files mirror the style
classifier format with an extra ``mu`` block.
"""

from __future__ import annotations

import dataclasses as dc
import logging
import typing as typ

import numpy as np

from .artifacts import format_row, parse_header, parse_row, read_blocks, write_blocks
from .errors import (
    DimensionMismatchError,
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
    xavier_uniform,
)

if typ.TYPE_CHECKING:
    import collections.abc as cabc
    from pathlib import Path

    import numpy.typing as npt

logger = logging.getLogger(__name__)

EMOTION_NAMES: tuple[str, ...] = ("positive", "negative", "neutral", "excited")
DEFAULT_VALENCE_MAP: dict[int, float] = {0: 1.0, 1: -1.0, 2: 0.0, 3: 0.5}
PARAMETER_BLOCKS: tuple[str, ...] = (*LSTM_BLOCKS, "mu", "out.w", "out.b")

# Synthetic frame generator.
INTENSITY_DIM: int = 0
BURST_LEVEL: float = 3.0
NEUTRAL_NOISE: float = 0.3
SEQUENCE_DIGITS: int = 9


@dc.dataclass(frozen=True, eq=False)
class AcousticSequence:
    """Framewise acoustic features of one utterance, shape (T, D_a)."""

    frames: np.ndarray
    label: int | None = None

    def __post_init__(self) -> None:
        frames = np.asarray(self.frames, dtype=np.float64)
        object.__setattr__(self, "frames", frames)
        if frames.ndim != 2 or min(frames.shape) < 1:  # noqa: PLR2004
            msg = f"Acoustic sequences must be T>=1 by D>=1; got {frames.shape}"
            raise ValidationError(msg)
        if not np.all(np.isfinite(frames)):
            msg = "Acoustic frames contain non-finite values"
            raise ValidationError(msg)
        if self.label is not None and self.label < 0:
            msg = f"Emotion labels are non-negative; got {self.label}"
            raise ValidationError(msg)

    @property
    def dim(self) -> int:
        """Frame width D_a."""
        return int(self.frames.shape[1])


@dc.dataclass(frozen=True, eq=False)
class AttentionRnn:
    """LSTM with attention pooling and a softmax emotion head."""

    params: Params
    seed: int = 0
    losses: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        if missing := [name for name in PARAMETER_BLOCKS if name not in self.params]:
            msg = f"Attention model is missing parameter blocks: {', '.join(missing)}"
            raise ValidationError(msg)
        if self.params["mu"].shape != (self.hidden_dim,):
            msg = (
                f"Attention vector has shape {self.params['mu'].shape}; "
                f"expected ({self.hidden_dim},)"
            )
            raise ValidationError(msg)
        if self.params["out.w"].shape != (self.hidden_dim, self.class_count):
            msg = "Output projection does not match the hidden width"
            raise ValidationError(msg)
        if not all(np.all(np.isfinite(v)) for v in self.params.values()):
            msg = "Attention model parameters must be finite"
            raise ValidationError(msg)

    @property
    def input_dim(self) -> int:
        """Frame width D_a."""
        return int(self.params["lstm.w_x"].shape[0])

    @property
    def hidden_dim(self) -> int:
        """Hidden width H."""
        return int(self.params["lstm.w_h"].shape[0])

    @property
    def class_count(self) -> int:
        """Number of emotion classes K_e."""
        return int(self.params["out.b"].shape[0])


@dc.dataclass(frozen=True, eq=False)
class EmotionResult:
    """Recognised emotion, its probabilities, valence, and attention weights."""

    label: int
    probabilities: np.ndarray
    valence: float
    attention: np.ndarray

    @property
    def name(self) -> str:
        """Emotion name when the label is one of the default four."""
        if self.label < len(EMOTION_NAMES):
            return EMOTION_NAMES[self.label]
        return str(self.label)


def attention_pool(
    ys: npt.ArrayLike, mu: npt.ArrayLike
) -> tuple[np.ndarray, np.ndarray]:
    """Softmax-weight hidden states by their score against ``mu``.

    Parameters
    ----------
    ys:
        Hidden states, shape (T, H).
    mu:
        Attention vector, shape (H,).

    Returns
    -------
    tuple[ndarray, ndarray]
        Weights ``alpha`` of shape (T,), summing to one, and the pooled state
        ``z = sum_t alpha_t y_t`` of shape (H,).
    """
    states = np.asarray(ys, dtype=np.float64)
    vector = np.asarray(mu, dtype=np.float64)
    shape_ok = states.ndim == 2 and states.size > 0  # noqa: PLR2004
    if not shape_ok or vector.shape != states.shape[1:]:
        msg = (
            "attention_pool needs (T, H) states and (H,) mu; "
            f"got {states.shape}, {vector.shape}"
        )
        raise DimensionMismatchError(msg)
    alpha = softmax(states @ vector)
    return alpha, alpha @ states


def initialise(
    input_dim: int,
    class_count: int = len(EMOTION_NAMES),
    *,
    hidden_dim: int = 16,
    seed: int = 0,
) -> AttentionRnn:
    """Return a Xavier-initialised attention model."""
    rng = seeded_rng(seed)
    params = init_lstm(rng, input_dim, hidden_dim)
    params["mu"] = xavier_uniform(rng, hidden_dim, 1, (hidden_dim,))
    params |= init_head(rng, hidden_dim, class_count)
    return AttentionRnn(params=params, seed=seed)


def _pooled_logits(
    tape: GradTape, nodes: cabc.Mapping[str, Node], batch: np.ndarray
) -> tuple[Node, Node]:
    """Record the forward pass; return (logits (B, K), attention (B, T))."""
    hidden = tape.stack(lstm_states(tape, nodes, batch), axis=1)
    alpha = tape.softmax(tape.matmul(hidden, nodes["mu"]), axis=-1)
    pooled = tape.weight_rows(alpha, hidden)
    logits = tape.add(tape.matmul(pooled, nodes["out.w"]), nodes["out.b"])
    return logits, alpha


def valence_of(
    probabilities: npt.ArrayLike, valence_map: cabc.Mapping[int, float]
) -> float:
    """Expected valence ``sum_k p_k * valence_map[k]``."""
    probs = np.asarray(probabilities, dtype=np.float64)
    if missing := [k for k in range(probs.size) if k not in valence_map]:
        msg = f"Valence map has no entry for emotion ids {missing}"
        raise ValidationError(msg)
    values = np.array([valence_map[k] for k in range(probs.size)])
    if np.any(np.abs(values) > 1.0):
        msg = "Valence map values must lie in [-1, 1]"
        raise ValidationError(msg)
    return float(probs @ values)


def recognize(
    model: AttentionRnn,
    seq: AcousticSequence,
    valence_map: cabc.Mapping[int, float] | None = None,
) -> EmotionResult:
    """Classify one sequence; ties in the argmax resolve to the lowest id."""
    if seq.dim != model.input_dim:
        msg = f"Sequence has {seq.dim} features; model expects {model.input_dim}"
        raise DimensionMismatchError(msg)
    tape = GradTape()
    nodes = {name: tape.watch(model.params[name]) for name in PARAMETER_BLOCKS}
    logits, alpha = _pooled_logits(tape, nodes, seq.frames[None, :, :])
    probabilities = softmax(logits.value[0])
    return EmotionResult(
        label=int(np.argmax(probabilities)),
        probabilities=probabilities,
        valence=valence_of(probabilities, valence_map or DEFAULT_VALENCE_MAP),
        attention=alpha.value[0].copy(),
    )


def emotion_loss(
    tape: GradTape,
    nodes: cabc.Mapping[str, Node],
    sequences: cabc.Sequence[np.ndarray],
    labels: npt.ArrayLike,
) -> Node:
    """Mean cross-entropy over all sequences, batched by length."""
    targets = np.asarray(labels, dtype=np.int64)
    total = len(sequences)
    loss: Node | None = None
    for _, members in group_by_length(sequences):
        batch = np.stack([sequences[i] for i in members])
        logits, _ = _pooled_logits(tape, nodes, batch)
        cross_entropy = tape.cross_entropy(logits, targets[members])
        term = tape.scale(cross_entropy, len(members) / total)
        loss = term if loss is None else tape.add(loss, term)
    if loss is None:
        msg = "emotion_loss needs at least one sequence"
        raise ValidationError(msg)
    return loss


def train_emotion(
    dataset: cabc.Sequence[AcousticSequence],
    config: TrainingConfig | None = None,
    *,
    class_count: int = len(EMOTION_NAMES),
) -> AttentionRnn:
    """Train the attention model, including ``mu``, by full-batch descent.

    Raises
    ------
    MissingClassError
        If any emotion id in ``0..class_count-1`` has no sequence.
    ValidationError
        If a sequence is unlabelled or labelled outside ``0..class_count-1``.
    """
    settings = config or TrainingConfig(hidden_dim=16)
    labels = [seq.label for seq in dataset]
    if None in labels:
        msg = "Training sequences must be labelled"
        raise ValidationError(msg)
    if missing := [k for k in range(class_count) if k not in labels]:
        msg = f"Training set lacks emotions: {', '.join(map(str, missing))}"
        raise MissingClassError(msg)
    if unknown := sorted({k for k in labels if not 0 <= k < class_count}):
        msg = f"Emotion labels outside 0..{class_count - 1}: {unknown}"
        raise ValidationError(msg)
    dims = {seq.dim for seq in dataset}
    if len(dims) != 1:
        msg = f"Sequences disagree on frame width: {sorted(dims)}"
        raise DimensionMismatchError(msg)

    model = initialise(
        dims.pop(), class_count, hidden_dim=settings.hidden_dim, seed=settings.seed
    )
    sequences = [seq.frames for seq in dataset]
    params, losses = descend(
        model.params,
        lambda tape, nodes: emotion_loss(tape, nodes, sequences, labels),
        settings,
    )
    return AttentionRnn(params=params, seed=settings.seed, losses=losses)


def synth_emotion_frames(  # noqa: PLR0913 - generator knobs
    seed: int,
    classes: int = len(EMOTION_NAMES),
    samples_per_class: int = 20,
    *,
    frames: int = 20,
    burst: int = 4,
    dim: int = 8,
) -> list[AcousticSequence]:
    """Generate sequences whose class shows only inside a short burst.

    Every frame is Gaussian noise with standard deviation 0.3. A burst of
    ``burst`` consecutive frames at a random offset raises dimension 0 (the
    intensity marker) and dimension ``1 + k`` for class ``k`` to 3.0, so the
    class is only visible where attention should concentrate. Sequences are
    ordered class by class.
    """
    if dim < classes + 1:
        msg = f"dim must be at least classes + 1 = {classes + 1}; got {dim}"
        raise ValidationError(msg)
    if not 1 <= burst < frames:
        msg = f"burst must lie in [1, {frames}); got {burst}"
        raise ValidationError(msg)
    rng = seeded_rng(seed)
    dataset: list[AcousticSequence] = []
    for label in range(classes):
        for _ in range(samples_per_class):
            data = rng.normal(0.0, NEUTRAL_NOISE, size=(frames, dim))
            start = int(rng.integers(0, frames - burst + 1))
            data[start : start + burst, INTENSITY_DIM] += BURST_LEVEL
            data[start : start + burst, 1 + label] += BURST_LEVEL
            dataset.append(AcousticSequence(frames=data, label=label))
    return dataset


def burst_frames(seq: AcousticSequence) -> np.ndarray:
    """Boolean mask of frames carrying the synthetic intensity marker."""
    return seq.frames[:, INTENSITY_DIM] > BURST_LEVEL / 2.0


def write_sequence(path: Path, seq: AcousticSequence) -> Path:
    """Write an acoustic sequence in the text sequence format."""
    label = "none" if seq.label is None else str(seq.label)
    header = f"dim={seq.dim} frames={seq.frames.shape[0]} label={label}"
    rows = [format_row(row, SEQUENCE_DIGITS) for row in seq.frames]
    path.write_text("\n".join([header, *rows]) + "\n", encoding="utf-8")
    return path


def read_sequence(path: Path) -> AcousticSequence:
    """Read an acoustic sequence file."""
    if not path.exists():
        msg = f"Missing acoustic sequence file: {path}"
        raise FileNotFoundError(msg)
    text = path.read_text(encoding="utf-8")
    lines = [line for line in text.splitlines() if line.strip()]
    if not lines:
        msg = f"{path}: empty sequence file"
        raise FormatError(msg)
    fields = parse_header(
        lines[0], expected=("dim", "frames", "label"), where=str(path)
    )
    try:
        dim, count = int(fields["dim"]), int(fields["frames"])
        label = None if fields["label"] == "none" else int(fields["label"])
    except ValueError as exc:
        msg = f"{path}: non-integer header field"
        raise FormatError(msg) from exc
    rows = [parse_row(line, where=str(path)) for line in lines[1:]]
    if len(rows) != count or any(row.size != dim for row in rows):
        msg = f"{path}: data does not match header ({count}x{dim})"
        raise FormatError(msg)
    return AcousticSequence(frames=np.array(rows), label=label)


def write_model(path: Path, model: AttentionRnn) -> Path:
    """Write the attention model; block order follows ``PARAMETER_BLOCKS``."""
    header = (
        f"D={model.input_dim} H={model.hidden_dim} K={model.class_count} "
        f"seed={model.seed}"
    )
    blocks: dict[str, npt.ArrayLike] = {
        name: model.params[name] for name in PARAMETER_BLOCKS
    }
    if model.losses:
        blocks["loss"] = np.asarray(model.losses)
    write_blocks(path, header, blocks)
    return path


def read_model(path: Path) -> AttentionRnn:
    """Read an attention model written by ``write_model``."""
    header, blocks = read_blocks(path)
    fields = parse_header(header, expected=("D", "H", "K", "seed"), where=str(path))
    params: Params = {}
    for name in PARAMETER_BLOCKS:
        if name not in blocks:
            msg = f"{path}: missing block {name!r}"
            raise FormatError(msg)
        vector = name in {"lstm.b", "mu", "out.b"}
        params[name] = blocks[name].ravel() if vector else blocks[name]
    model = AttentionRnn(
        params=params,
        seed=int(fields["seed"]),
        losses=tuple(blocks["loss"].ravel()) if "loss" in blocks else (),
    )
    declared = (int(fields["D"]), int(fields["H"]), int(fields["K"]))
    if declared != (model.input_dim, model.hidden_dim, model.class_count):
        msg = f"{path}: header {declared} disagrees with the parameter blocks"
        raise FormatError(msg)
    return model


__all__ = [
    "DEFAULT_VALENCE_MAP",
    "EMOTION_NAMES",
    "AcousticSequence",
    "AttentionRnn",
    "EmotionResult",
    "attention_pool",
    "burst_frames",
    "emotion_loss",
    "initialise",
    "read_model",
    "read_sequence",
    "recognize",
    "synth_emotion_frames",
    "train_emotion",
    "valence_of",
    "write_model",
    "write_sequence",
]
