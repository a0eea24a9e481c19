"""Dense numerics shared by the signal, CSP, and neural modules.

The module provides three things:

- ``sym_eig``: a cyclic Jacobi eigensolver for small symmetric matrices with a
  reproducible eigenvector sign convention.
- ``GradTape``: a Wengert-list reverse-mode differentiator over NumPy arrays,
  covering exactly the primitives the LSTM, attention, and convolutional
  models need.
- ``grad_check``: a central-difference gradient checker.

Examples
--------
    tape = GradTape()
    w = tape.watch(np.array([[1.0, 2.0]]))
    loss = tape.sum_squares(tape.tanh(w))
    (grad_w,) = tape.gradient(loss, [w])
"""

from __future__ import annotations

import dataclasses as dc
import logging
import math
import typing as typ

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ContractViolationError, ConvergenceError, NonFiniteError

if typ.TYPE_CHECKING:
    import collections.abc as cabc

    import numpy.typing as npt

    Array = npt.NDArray[np.float64]

logger = logging.getLogger(__name__)

SYMMETRY_TOLERANCE: float = 1e-9
OFF_DIAGONAL_TOLERANCE: float = 1e-12
MAX_JACOBI_SWEEPS: int = 100
GRAD_CHECK_FLOOR: float = 1e-12
MAX_GRAD_CHECK_STEP: float = 1e-2


def seeded_rng(seed: int) -> np.random.Generator:
    """Return a PCG64 generator; equal seeds give bit-identical streams."""
    return np.random.default_rng(seed)


def as_matrix(data: npt.ArrayLike, *, name: str = "matrix") -> Array:
    """Return ``data`` as a finite float64 2-D array or raise."""
    array = np.asarray(data, dtype=np.float64)
    if array.ndim != 2:  # noqa: PLR2004 - matrices are rank two
        msg = f"{name} must be two-dimensional; got shape {array.shape}"
        raise ContractViolationError(msg)
    if not np.all(np.isfinite(array)):
        msg = f"{name} contains non-finite entries"
        raise ContractViolationError(msg)
    return array


def _require_symmetric(m: Array) -> None:
    rows, cols = m.shape
    if rows != cols:
        msg = f"sym_eig needs a square matrix; got {rows}x{cols}"
        raise ContractViolationError(msg)
    scale = float(np.max(np.abs(m))) if m.size else 0.0
    asymmetry = float(np.max(np.abs(m - m.T))) if m.size else 0.0
    if asymmetry > SYMMETRY_TOLERANCE * max(scale, 1.0):
        msg = f"sym_eig needs a symmetric matrix; max |m - m^T| = {asymmetry:.3g}"
        raise ContractViolationError(msg)


def _rotate(a: Array, v: Array, p: int, q: int) -> None:
    """Annihilate ``a[p, q]`` with one Jacobi rotation, updating ``v``."""
    apq = a[p, q]
    theta = (a[q, q] - a[p, p]) / (2.0 * apq)
    sign = 1.0 if theta >= 0.0 else -1.0
    t = sign / (abs(theta) + math.sqrt(theta * theta + 1.0))
    c = 1.0 / math.sqrt(t * t + 1.0)
    s = t * c

    col_p = a[:, p].copy()
    col_q = a[:, q].copy()
    a[:, p] = c * col_p - s * col_q
    a[:, q] = s * col_p + c * col_q
    row_p = a[p, :].copy()
    row_q = a[q, :].copy()
    a[p, :] = c * row_p - s * row_q
    a[q, :] = s * row_p + c * row_q
    a[p, q] = a[q, p] = 0.0

    vec_p = v[:, p].copy()
    vec_q = v[:, q].copy()
    v[:, p] = c * vec_p - s * vec_q
    v[:, q] = s * vec_p + c * vec_q


def _max_off_diagonal(a: Array) -> float:
    off = a - np.diag(np.diag(a))
    return float(np.max(np.abs(off))) if off.size else 0.0


def _canonical_signs(vectors: Array) -> Array:
    """Flip columns so the first non-negligible component is positive."""
    for col in range(vectors.shape[1]):
        column = vectors[:, col]
        threshold = 1e-12 * float(np.max(np.abs(column)))
        lead = np.flatnonzero(np.abs(column) > threshold)
        if lead.size and column[lead[0]] < 0.0:
            vectors[:, col] = -column
    return vectors


def sym_eig(m: npt.ArrayLike) -> tuple[Array, Array]:
    """Eigendecompose a symmetric matrix with cyclic Jacobi rotations.

    Parameters
    ----------
    m : array_like
        Square matrix, symmetric to within ``1e-9`` relative.

    Returns
    -------
    tuple[ndarray, ndarray]
        Eigenvalues sorted in descending order and the matching orthonormal
        eigenvectors as columns. Each eigenvector's first non-negligible
        component is positive.

    Raises
    ------
    ContractViolationError
        If ``m`` is not square, not symmetric, or not finite.
    ConvergenceError
        If the off-diagonal mass does not fall below ``1e-12 * ||m||`` within
        ``MAX_JACOBI_SWEEPS`` sweeps.
    """
    a = as_matrix(m, name="sym_eig input").copy()
    _require_symmetric(a)
    a = 0.5 * (a + a.T)
    n = a.shape[0]
    v = np.eye(n)
    tolerance = OFF_DIAGONAL_TOLERANCE * float(np.linalg.norm(a))

    for sweep in range(MAX_JACOBI_SWEEPS):
        if _max_off_diagonal(a) <= tolerance:
            logger.debug("Jacobi converged after %d sweeps (n=%d)", sweep, n)
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                if abs(a[p, q]) > tolerance * 1e-3:
                    _rotate(a, v, p, q)
    else:
        msg = f"Jacobi eigensolver did not converge in {MAX_JACOBI_SWEEPS} sweeps"
        raise ConvergenceError(msg)

    eigenvalues = np.diag(a).copy()
    order = np.argsort(-eigenvalues, kind="stable")
    return eigenvalues[order], _canonical_signs(v[:, order].copy())


def grad_check(
    f: cabc.Callable[[Array], tuple[float, Array]],
    x: npt.ArrayLike,
    h: float = 1e-5,
) -> float:
    """Compare an analytic gradient against central differences.

    Parameters
    ----------
    f : callable
        Maps a parameter array to ``(value, gradient)``; the gradient must have
        the shape of its argument.
    x : array_like
        Point at which to check.
    h : float
        Finite-difference step, in ``(0, 1e-2]``.

    Returns
    -------
    float
        ``max_i |a_i - c_i| / (|a_i| + |c_i| + 1e-12)`` where ``a`` is the
        analytic and ``c`` the central-difference gradient.

    Raises
    ------
    ContractViolationError
        If ``h`` is outside ``(0, 1e-2]``.
    NonFiniteError
        If ``f`` is not finite at an evaluated point; the message names the
        coordinate.
    """
    if not 0.0 < h <= MAX_GRAD_CHECK_STEP:
        msg = f"grad_check step must lie in (0, 1e-2]; got {h}"
        raise ContractViolationError(msg)
    point = np.array(x, dtype=np.float64)
    value, analytic = f(point)
    if not math.isfinite(value):
        msg = "grad_check: f is not finite at the base point"
        raise NonFiniteError(msg)
    analytic = np.asarray(analytic, dtype=np.float64).reshape(point.shape)

    worst = 0.0
    for i in range(point.size):
        forward = point.copy()
        backward = point.copy()
        forward.flat[i] += h
        backward.flat[i] -= h
        f_plus, _ = f(forward)
        f_minus, _ = f(backward)
        if not (math.isfinite(f_plus) and math.isfinite(f_minus)):
            msg = f"grad_check: f is not finite around coordinate {i}"
            raise NonFiniteError(msg)
        central = (f_plus - f_minus) / (2.0 * h)
        exact = float(analytic.flat[i])
        error = abs(exact - central) / (abs(exact) + abs(central) + GRAD_CHECK_FLOOR)
        worst = max(worst, error)
    return worst


@dc.dataclass(frozen=True, eq=False)
class Node:
    """Handle to a value recorded on a ``GradTape``."""

    index: int
    value: Array

    @property
    def shape(self) -> tuple[int, ...]:
        """Shape of the recorded value."""
        return self.value.shape


type Operand = Node | Array | float

Backward = typ.Callable[["Array"], tuple["Array | None", ...]]


@dc.dataclass(frozen=True)
class _Record:
    inputs: tuple[int | None, ...]
    backward: Backward | None


def _unbroadcast(grad: Array, shape: tuple[int, ...]) -> Array:
    """Sum ``grad`` down to ``shape`` after NumPy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class GradTape:
    """Record primitive operations and replay their adjoints in reverse.

    Operands may be ``Node`` objects from this tape or plain arrays, which are
    treated as constants. A tape is single-owner: do not share one between
    concurrent tasks.
    """

    def __init__(self) -> None:
        self._records: list[_Record] = []
        self.last_replay: tuple[int, ...] = ()

    def __len__(self) -> int:
        return len(self._records)

    def watch(self, value: npt.ArrayLike) -> Node:
        """Record a leaf whose gradient may be requested."""
        return self._push(np.array(value, dtype=np.float64), (), None)

    def _push(
        self,
        value: Array,
        inputs: tuple[Operand, ...],
        backward: Backward | None,
    ) -> Node:
        indices = tuple(op.index if isinstance(op, Node) else None for op in inputs)
        self._records.append(_Record(indices, backward))
        return Node(len(self._records) - 1, value)

    def gradient(self, output: Node, wrt: cabc.Sequence[Node]) -> list[Array]:
        """Return d(output)/d(node) for each node in ``wrt``.

        ``output`` must hold a single element. Adjoints are replayed over the
        records in exact reverse order of recording; ``last_replay`` keeps the
        visited indices for inspection.
        """
        if output.value.size != 1:
            msg = f"gradient needs a scalar output; got shape {output.value.shape}"
            raise ContractViolationError(msg)
        adjoints: list[Array | None] = [None] * len(self._records)
        adjoints[output.index] = np.ones_like(output.value)
        visited: list[int] = []
        for idx in range(output.index, -1, -1):
            adjoint = adjoints[idx]
            record = self._records[idx]
            if adjoint is None or record.backward is None:
                continue
            visited.append(idx)
            for parent, grad in zip(
                record.inputs, record.backward(adjoint), strict=True
            ):
                if parent is None or grad is None:
                    continue
                current = adjoints[parent]
                adjoints[parent] = grad if current is None else current + grad
        self.last_replay = tuple(visited)
        return [
            np.zeros_like(node.value) if adjoints[node.index] is None
            else typ.cast("Array", adjoints[node.index])
            for node in wrt
        ]

    # -- elementwise arithmetic -------------------------------------------------

    def add(self, a: Operand, b: Operand) -> Node:
        """Broadcasting sum ``a + b``."""
        av, bv = _value(a), _value(b)
        return self._push(
            av + bv,
            (a, b),
            lambda g: (_unbroadcast(g, av.shape), _unbroadcast(g, bv.shape)),
        )

    def sub(self, a: Operand, b: Operand) -> Node:
        """Broadcasting difference ``a - b``."""
        av, bv = _value(a), _value(b)
        return self._push(
            av - bv,
            (a, b),
            lambda g: (_unbroadcast(g, av.shape), _unbroadcast(-g, bv.shape)),
        )

    def mul(self, a: Operand, b: Operand) -> Node:
        """Broadcasting product ``a * b``."""
        av, bv = _value(a), _value(b)
        return self._push(
            av * bv,
            (a, b),
            lambda g: (_unbroadcast(g * bv, av.shape), _unbroadcast(g * av, bv.shape)),
        )

    def scale(self, a: Operand, k: float) -> Node:
        """Multiply by a constant scalar."""
        return self._push(_value(a) * k, (a,), lambda g: (g * k,))

    def relu(self, a: Operand) -> Node:
        """Rectified linear unit."""
        av = _value(a)
        mask = av > 0.0
        return self._push(np.where(mask, av, 0.0), (a,), lambda g: (g * mask,))

    def tanh(self, a: Operand) -> Node:
        """Hyperbolic tangent."""
        out = np.tanh(_value(a))
        return self._push(out, (a,), lambda g: (g * (1.0 - out * out),))

    def sigmoid(self, a: Operand) -> Node:
        """Logistic sigmoid, evaluated without overflow."""
        av = _value(a)
        out = np.exp(-np.logaddexp(0.0, -av))
        return self._push(out, (a,), lambda g: (g * out * (1.0 - out),))

    def log(self, a: Operand) -> Node:
        """Natural logarithm."""
        av = _value(a)
        return self._push(np.log(av), (a,), lambda g: (g / av,))

    # -- reductions and reshaping --------------------------------------------

    def sum(self, a: Operand) -> Node:
        """Sum of all elements as a 0-d value."""
        av = _value(a)
        return self._push(
            np.asarray(av.sum()), (a,), lambda g: (np.broadcast_to(g, av.shape),)
        )

    def sum_squares(self, a: Operand) -> Node:
        """Sum of squared elements as a 0-d value."""
        av = _value(a)
        return self._push(np.asarray(np.sum(av * av)), (a,), lambda g: (2.0 * g * av,))

    def columns(self, a: Operand, start: int, stop: int) -> Node:
        """Slice ``a[..., start:stop]``."""
        av = _value(a)

        def backward(g: Array) -> tuple[Array]:
            full = np.zeros_like(av)
            full[..., start:stop] = g
            return (full,)

        return self._push(av[..., start:stop].copy(), (a,), backward)

    def stack(self, items: cabc.Sequence[Operand], axis: int = 0) -> Node:
        """Stack equally shaped operands along a new axis."""
        values = [_value(item) for item in items]
        count = len(values)

        def backward(g: Array) -> tuple[Array, ...]:
            return tuple(np.take(g, i, axis=axis) for i in range(count))

        return self._push(np.stack(values, axis=axis), tuple(items), backward)

    # -- linear algebra ---------------------------------------------------------

    def matmul(self, a: Operand, b: Operand) -> Node:
        """Matrix product ``a @ b`` with ``b`` of rank one or two.

        ``a`` may carry leading batch axes; they are contracted away in the
        gradient of ``b``.
        """
        av, bv = _value(a), _value(b)
        if bv.ndim not in {1, 2}:
            msg = f"matmul right operand must be rank 1 or 2; got {bv.shape}"
            raise ContractViolationError(msg)
        inner = av.shape[-1]

        def backward(g: Array) -> tuple[Array, Array]:
            if bv.ndim == 1:
                grad_a = g[..., None] * bv
                grad_b = av.reshape(-1, inner).T @ np.reshape(g, -1)
            else:
                grad_a = g @ bv.T
                grad_b = av.reshape(-1, inner).T @ np.reshape(g, (-1, bv.shape[1]))
            return grad_a, grad_b

        return self._push(np.asarray(av @ bv), (a, b), backward)

    def weight_rows(self, weights: Operand, rows: Operand) -> Node:
        """Contract ``weights[..., t]`` with ``rows[..., t, h]`` over ``t``."""
        wv, rv = _value(weights), _value(rows)

        def backward(g: Array) -> tuple[Array, Array]:
            grad_w = np.einsum("...h,...th->...t", g, rv)
            grad_r = wv[..., :, None] * g[..., None, :]
            return grad_w, grad_r

        pooled = np.einsum("...t,...th->...h", wv, rv)
        return self._push(pooled, (weights, rows), backward)

    def softmax(self, a: Operand, axis: int = -1) -> Node:
        """Softmax along ``axis`` with max subtraction."""
        av = _value(a)
        shifted = np.exp(av - av.max(axis=axis, keepdims=True))
        out = shifted / shifted.sum(axis=axis, keepdims=True)

        def backward(g: Array) -> tuple[Array]:
            return (out * (g - np.sum(g * out, axis=axis, keepdims=True)),)

        return self._push(out, (a,), backward)

    def cross_entropy(self, logits: Operand, labels: npt.ArrayLike) -> Node:
        """Mean negative log-likelihood of integer ``labels`` under ``logits``."""
        lv = _value(logits)
        targets = np.asarray(labels, dtype=np.int64)
        batch = lv.shape[0]
        shifted = lv - lv.max(axis=1, keepdims=True)
        log_norm = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
        log_probs = shifted - log_norm
        loss = -float(np.mean(log_probs[np.arange(batch), targets]))

        def backward(g: Array) -> tuple[Array]:
            grad = np.exp(log_probs)
            grad[np.arange(batch), targets] -= 1.0
            return (grad * (g / batch),)

        return self._push(np.asarray(loss), (logits,), backward)

    # -- convolutional primitives ---------------------------------------------

    def conv2d(self, x: Operand, weights: Operand, bias: Operand) -> Node:
        """3x3 convolution, stride 1, zero padding 1, on a (C, H, W) map."""
        xv, wv, bv = _value(x), _value(weights), _value(bias)
        channels, height, width = xv.shape
        padded = np.pad(xv, ((0, 0), (1, 1), (1, 1)))
        patches = sliding_window_view(padded, (3, 3), axis=(1, 2))
        out = np.tensordot(wv, patches, axes=([1, 2, 3], [0, 3, 4]))
        out += bv[:, None, None]

        def backward(g: Array) -> tuple[Array, Array, Array]:
            grad_w = np.tensordot(g, patches, axes=([1, 2], [1, 2]))
            grad_b = g.sum(axis=(1, 2))
            grad_padded = np.zeros((channels, height + 2, width + 2))
            for i in range(3):
                for j in range(3):
                    grad_padded[:, i : i + height, j : j + width] += np.tensordot(
                        wv[:, :, i, j], g, axes=([0], [0])
                    )
            return grad_padded[:, 1:-1, 1:-1], grad_w, grad_b

        return self._push(out, (x, weights, bias), backward)

    def mean_pool(self, x: Operand) -> Node:
        """2x2 mean pooling with stride 2; odd trailing rows/columns drop."""
        xv = _value(x)
        channels, height, width = xv.shape
        h2, w2 = height // 2, width // 2
        blocks = xv[:, : 2 * h2, : 2 * w2].reshape(channels, h2, 2, w2, 2)

        def backward(g: Array) -> tuple[Array]:
            grad = np.zeros_like(xv)
            spread = np.broadcast_to(
                (g / 4.0)[:, :, None, :, None], (channels, h2, 2, w2, 2)
            )
            grad[:, : 2 * h2, : 2 * w2] = spread.reshape(channels, 2 * h2, 2 * w2)
            return (grad,)

        return self._push(blocks.mean(axis=(2, 4)), (x,), backward)

    def gram(self, features: Operand) -> Node:
        """Normalised Gram matrix ``F F^T / (C * M)`` of a (C, H, W) map."""
        fv = _value(features)
        channels = fv.shape[0]
        flat = fv.reshape(channels, -1)
        norm = float(channels * flat.shape[1])

        def backward(g: Array) -> tuple[Array]:
            return (((g + g.T) @ flat / norm).reshape(fv.shape),)

        return self._push(flat @ flat.T / norm, (features,), backward)


def _value(operand: Operand) -> Array:
    if isinstance(operand, Node):
        return operand.value
    return np.asarray(operand, dtype=np.float64)


__all__ = [
    "GradTape",
    "Node",
    "as_matrix",
    "grad_check",
    "seeded_rng",
    "sym_eig",
]
