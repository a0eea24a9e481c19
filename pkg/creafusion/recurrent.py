"""LSTM recurrence and full-batch training shared by the sequence models.

Parameters live in a flat ``dict[str, ndarray]`` so the style classifier and
the attention model can add their own heads and persist every block in a fixed
order. The LSTM gate layout along the last axis of ``lstm.w_x``, ``lstm.w_h``,
and ``lstm.b`` is input, forget, cell candidate, output.
"""

from __future__ import annotations

import collections
import dataclasses as dc
import logging
import math
import typing as typ

import numpy as np

from .errors import DimensionMismatchError, NonFiniteError, ValidationError
from .numeric_core import GradTape, Node

if typ.TYPE_CHECKING:
    import collections.abc as cabc

    import numpy.typing as npt

logger = logging.getLogger(__name__)

GATES: tuple[str, ...] = ("input", "forget", "cell", "output")
LSTM_BLOCKS: tuple[str, ...] = ("lstm.w_x", "lstm.w_h", "lstm.b")

type Params = dict[str, np.ndarray]
type LossBuilder = cabc.Callable[[GradTape, dict[str, Node]], Node]


@dc.dataclass(frozen=True)
class TrainingConfig:
    """Knobs for full-batch gradient descent."""

    epochs: int = 500
    learning_rate: float = 0.1
    seed: int = 0
    hidden_dim: int = 32
    log_every: int = 50

    def __post_init__(self) -> None:
        if self.epochs < 0:
            msg = f"epochs must be non-negative; got {self.epochs}"
            raise ValidationError(msg)
        if not self.learning_rate > 0.0:
            msg = f"learning_rate must be positive; got {self.learning_rate}"
            raise ValidationError(msg)
        if self.hidden_dim < 1:
            msg = f"hidden_dim must be at least 1; got {self.hidden_dim}"
            raise ValidationError(msg)


def xavier_uniform(
    rng: np.random.Generator, fan_in: int, fan_out: int, shape: tuple[int, ...]
) -> np.ndarray:
    """Draw from U(-a, a) with ``a = sqrt(6 / (fan_in + fan_out))``."""
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def init_lstm(rng: np.random.Generator, input_dim: int, hidden_dim: int) -> Params:
    """Xavier-uniform gate weights with zero biases."""
    gates = len(GATES)
    return {
        "lstm.w_x": xavier_uniform(
            rng, input_dim, hidden_dim, (input_dim, gates * hidden_dim)
        ),
        "lstm.w_h": xavier_uniform(
            rng, hidden_dim, hidden_dim, (hidden_dim, gates * hidden_dim)
        ),
        "lstm.b": np.zeros(gates * hidden_dim),
    }


def init_head(
    rng: np.random.Generator, hidden_dim: int, class_count: int
) -> Params:
    """Xavier-uniform output projection with a zero bias."""
    return {
        "out.w": xavier_uniform(
            rng, hidden_dim, class_count, (hidden_dim, class_count)
        ),
        "out.b": np.zeros(class_count),
    }


def lstm_states(
    tape: GradTape, params: cabc.Mapping[str, Node], inputs: npt.ArrayLike
) -> list[Node]:
    """Run the LSTM over a (B, T, D) batch and return the hidden state per step.

    ``h_0`` and ``c_0`` are zero. Each returned node has shape (B, H).
    """
    batch = np.asarray(inputs, dtype=np.float64)
    w_x, w_h, bias = (params[name] for name in LSTM_BLOCKS)
    if batch.ndim != 3 or batch.shape[2] != w_x.shape[0]:  # noqa: PLR2004
        msg = f"LSTM expects (B, T, {w_x.shape[0]}) inputs; got {batch.shape}"
        raise DimensionMismatchError(msg)
    hidden = w_h.shape[0]
    h: Node | np.ndarray = np.zeros((batch.shape[0], hidden))
    c: Node | np.ndarray = np.zeros((batch.shape[0], hidden))

    states: list[Node] = []
    for step in range(batch.shape[1]):
        z = tape.add(
            tape.add(tape.matmul(batch[:, step, :], w_x), tape.matmul(h, w_h)), bias
        )
        i = tape.sigmoid(tape.columns(z, 0, hidden))
        f = tape.sigmoid(tape.columns(z, hidden, 2 * hidden))
        g = tape.tanh(tape.columns(z, 2 * hidden, 3 * hidden))
        o = tape.sigmoid(tape.columns(z, 3 * hidden, 4 * hidden))
        c = tape.add(tape.mul(f, c), tape.mul(i, g))
        h = tape.mul(o, tape.tanh(c))
        states.append(h)
    return states


def group_by_length(
    sequences: cabc.Sequence[np.ndarray],
) -> list[tuple[int, list[int]]]:
    """Group sequence indices by frame count, ordered by length."""
    groups: dict[int, list[int]] = collections.defaultdict(list)
    for index, frames in enumerate(sequences):
        groups[frames.shape[0]].append(index)
    return sorted(groups.items())


def descend(
    params: Params,
    build_loss: LossBuilder,
    config: TrainingConfig,
) -> tuple[Params, tuple[float, ...]]:
    """Run ``config.epochs`` steps of full-batch gradient descent.

    ``build_loss`` records the scalar training loss on a fresh tape for the
    current parameters. Returns the final parameters and the loss measured at
    the start of every epoch.

    Raises
    ------
    NonFiniteError
        If the loss or a gradient becomes non-finite; the message names the
        epoch.
    """
    names = list(params)
    current = {name: value.copy() for name, value in params.items()}
    losses: list[float] = []
    for epoch in range(config.epochs):
        tape = GradTape()
        nodes = {name: tape.watch(current[name]) for name in names}
        loss = build_loss(tape, nodes)
        value = float(loss.value)
        grads = tape.gradient(loss, [nodes[name] for name in names])
        if not math.isfinite(value) or not all(np.all(np.isfinite(g)) for g in grads):
            msg = f"Training diverged at epoch {epoch}"
            raise NonFiniteError(msg)
        losses.append(value)
        for name, grad in zip(names, grads, strict=True):
            current[name] = current[name] - config.learning_rate * grad
        if config.log_every and epoch % config.log_every == 0:
            logger.debug("epoch %d loss %.6f", epoch, value)
    if losses:
        logger.info("Trained %d epochs; final loss %.6f", config.epochs, losses[-1])
    return current, tuple(losses)


def softmax(logits: npt.ArrayLike, axis: int = -1) -> np.ndarray:
    """Max-shifted softmax of plain arrays."""
    values = np.asarray(logits, dtype=np.float64)
    shifted = np.exp(values - values.max(axis=axis, keepdims=True))
    return shifted / shifted.sum(axis=axis, keepdims=True)


__all__ = [
    "GATES",
    "LSTM_BLOCKS",
    "Params",
    "TrainingConfig",
    "descend",
    "group_by_length",
    "init_head",
    "init_lstm",
    "lstm_states",
    "softmax",
    "xavier_uniform",
]
