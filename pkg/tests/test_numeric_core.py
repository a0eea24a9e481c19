"""Unit tests for the eigensolver, gradient tape, and gradient checker."""

from __future__ import annotations

import dataclasses as dc
import math
import typing as typ

import numpy as np
import pytest

from creafusion.errors import ContractViolationError, NonFiniteError
from creafusion.numeric_core import GradTape, grad_check, seeded_rng, sym_eig

if typ.TYPE_CHECKING:
    from creafusion.numeric_core import Node

_RNG = seeded_rng(1234)
_MATMUL_B = _RNG.normal(size=(4, 2))
_SOFTMAX_WEIGHTS = _RNG.normal(size=(2, 5))
_CONV_KERNEL = _RNG.normal(size=(3, 2, 3, 3))
_CONV_BIAS = _RNG.normal(size=3)
_CONV_INPUT = _RNG.normal(size=(2, 5, 5))
_POOL_WEIGHTS = _RNG.normal(size=(2, 2, 2))
_GRAM_WEIGHTS = _RNG.normal(size=(2, 2))
_ROWS = _RNG.normal(size=(2, 3, 4))


def _away_from_zero(shape: tuple[int, ...], seed: int) -> np.ndarray:
    """Values with magnitude in [0.2, 1] so kinks stay outside the difference step."""
    rng = seeded_rng(seed)
    return rng.uniform(0.2, 1.0, size=shape) * rng.choice([-1.0, 1.0], size=shape)


def _tape_check(build: typ.Callable[[GradTape, Node], Node], x: np.ndarray) -> float:
    """Run grad_check on a scalar built from one watched node."""

    def f(value: np.ndarray) -> tuple[float, np.ndarray]:
        tape = GradTape()
        node = tape.watch(value)
        out = build(tape, node)
        (grad,) = tape.gradient(out, [node])
        return float(out.value), grad

    return grad_check(f, x, h=1e-4)


@dc.dataclass(frozen=True)
class _GradCase:
    """One reverse-mode primitive exercised through grad_check."""

    name: str
    build: typ.Callable[[GradTape, Node], Node]
    point: np.ndarray


GRAD_CASES = [
    _GradCase(
        "matmul",
        lambda t, n: t.sum_squares(t.matmul(n, _MATMUL_B)),
        _away_from_zero((3, 4), 1),
    ),
    _GradCase(
        "matmul-vector",
        lambda t, n: t.sum_squares(t.matmul(_ROWS, n)),
        _away_from_zero((4,), 2),
    ),
    _GradCase("relu", lambda t, n: t.sum_squares(t.relu(n)), _away_from_zero((8,), 3)),
    _GradCase("tanh", lambda t, n: t.sum_squares(t.tanh(n)), _away_from_zero((8,), 4)),
    _GradCase(
        "sigmoid", lambda t, n: t.sum_squares(t.sigmoid(n)), _away_from_zero((8,), 5)
    ),
    _GradCase(
        "log",
        lambda t, n: t.sum(t.log(n)),
        np.abs(_away_from_zero((6,), 6)),
    ),
    _GradCase(
        "softmax",
        lambda t, n: t.sum(t.mul(t.softmax(n, axis=-1), _SOFTMAX_WEIGHTS)),
        _away_from_zero((2, 5), 7),
    ),
    _GradCase(
        "cross-entropy",
        lambda t, n: t.cross_entropy(n, [0, 2, 1]),
        _away_from_zero((3, 4), 8),
    ),
    _GradCase(
        "conv2d-input",
        lambda t, n: t.sum_squares(t.conv2d(n, _CONV_KERNEL, _CONV_BIAS)),
        _away_from_zero((2, 5, 5), 9),
    ),
    _GradCase(
        "conv2d-kernel",
        lambda t, n: t.sum_squares(t.conv2d(_CONV_INPUT, n, _CONV_BIAS)),
        _away_from_zero((3, 2, 3, 3), 10),
    ),
    _GradCase(
        "mean-pool",
        lambda t, n: t.sum(t.mul(t.mean_pool(n), _POOL_WEIGHTS)),
        _away_from_zero((2, 4, 4), 11),
    ),
    _GradCase(
        "gram",
        lambda t, n: t.sum(t.mul(t.gram(n), _GRAM_WEIGHTS)),
        _away_from_zero((2, 3, 3), 12),
    ),
    _GradCase(
        "weight-rows",
        lambda t, n: t.sum_squares(t.weight_rows(t.softmax(n, axis=-1), _ROWS)),
        _away_from_zero((2, 3), 13),
    ),
    _GradCase(
        "stack-columns",
        lambda t, n: t.sum_squares(
            t.sub(t.stack([t.columns(n, 0, 2), t.columns(n, 2, 4)], axis=1), 0.5)
        ),
        _away_from_zero((3, 4), 14),
    ),
]


@pytest.mark.parametrize("case", GRAD_CASES, ids=lambda case: case.name)
def test_reverse_mode_primitives_match_central_differences(case: _GradCase) -> None:
    """Every tape primitive agrees with central differences."""
    error = _tape_check(case.build, case.point)
    assert error < 1e-3, f"{case.name} gradient relative error {error:.3g}"


def test_sym_eig_returns_axes_for_diagonal_matrix() -> None:
    """A diagonal matrix yields its diagonal, sorted, with axis eigenvectors."""
    values, vectors = sym_eig(np.diag([1.0, 3.0]))
    np.testing.assert_allclose(values, [3.0, 1.0], err_msg="eigenvalues")
    np.testing.assert_allclose(
        np.abs(vectors), [[0.0, 1.0], [1.0, 0.0]], atol=1e-12, err_msg="eigenvectors"
    )


def test_sym_eig_reconstructs_random_symmetric_matrix() -> None:
    """Reconstruction, orthonormality, ordering, and trace all hold."""
    raw = seeded_rng(7).normal(size=(5, 5))
    m = raw + raw.T
    values, vectors = sym_eig(m)
    reconstruction = vectors @ np.diag(values) @ vectors.T
    assert np.linalg.norm(reconstruction - m) < 1e-8, "V diag(l) V^T should equal m"
    np.testing.assert_allclose(vectors.T @ vectors, np.eye(5), atol=1e-8)
    assert np.all(np.diff(values) <= 0.0), "eigenvalues must be sorted descending"
    assert abs(values.sum() - np.trace(m)) < 1e-8 * np.linalg.norm(m), (
        "trace must be preserved"
    )


def test_sym_eig_sign_convention_makes_leading_component_positive() -> None:
    """Each eigenvector's first non-negligible entry is positive."""
    raw = seeded_rng(8).normal(size=(4, 4))
    _, vectors = sym_eig(raw @ raw.T)
    for column in vectors.T:
        lead = column[np.flatnonzero(np.abs(column) > 1e-12)[0]]
        assert lead > 0.0, f"leading component {lead} should be positive"


@pytest.mark.parametrize(
    "matrix",
    [np.ones((2, 3)), np.array([[1.0, 2.0], [0.0, 1.0]])],
    ids=["non-square", "asymmetric"],
)
def test_sym_eig_rejects_invalid_input(matrix: np.ndarray) -> None:
    """Non-square and asymmetric inputs violate the contract."""
    with pytest.raises(ContractViolationError):
        sym_eig(matrix)


def test_grad_check_on_quadratic_is_exact() -> None:
    """A quadratic has an exact central difference."""
    error = grad_check(lambda x: (float(np.sum(x * x)), 2.0 * x), np.array([1.0, 2.0]))
    assert error < 1e-6, f"quadratic error {error:.3g}"


def test_grad_check_on_constant_is_zero() -> None:
    """A constant function has zero analytic and numeric gradient."""
    error = grad_check(lambda x: (3.0, np.zeros_like(x)), np.array([0.5, -0.5]))
    assert error < 1e-9, f"constant error {error:.3g}"


def test_grad_check_rejects_bad_step() -> None:
    """Steps outside (0, 1e-2] are rejected."""
    with pytest.raises(ContractViolationError):
        grad_check(lambda x: (0.0, x), np.zeros(2), h=0.5)


def test_grad_check_names_non_finite_coordinate() -> None:
    """Non-finite evaluations raise with the offending coordinate."""

    def f(x: np.ndarray) -> tuple[float, np.ndarray]:
        return (math.inf if x[1] > 1.0 else 0.0), np.zeros_like(x)

    with pytest.raises(NonFiniteError, match="coordinate 1"):
        grad_check(f, np.array([0.0, 1.0]), h=1e-3)


def test_gradient_replays_in_reverse_recording_order() -> None:
    """Adjoints are visited from the output back to the leaves."""
    tape = GradTape()
    x = tape.watch(np.array([0.3, -0.7]))
    loss = tape.sum_squares(tape.tanh(tape.scale(x, 2.0)))
    (grad,) = tape.gradient(loss, [x])
    assert tape.last_replay == tuple(sorted(tape.last_replay, reverse=True)), (
        "replay must run in exact reverse order"
    )
    assert tape.last_replay[0] == loss.index, "replay starts at the output"
    expected = 2.0 * np.tanh(2.0 * x.value) * (1.0 - np.tanh(2.0 * x.value) ** 2) * 2.0
    np.testing.assert_allclose(grad, expected, rtol=1e-12)


def test_gradient_requires_scalar_output() -> None:
    """Only single-element outputs can be differentiated."""
    tape = GradTape()
    x = tape.watch(np.ones(3))
    with pytest.raises(ContractViolationError):
        tape.gradient(tape.tanh(x), [x])


def test_unused_leaf_gets_zero_gradient() -> None:
    """Leaves that do not reach the output receive zeros."""
    tape = GradTape()
    x = tape.watch(np.ones(2))
    y = tape.watch(np.ones(3))
    _, grad_y = tape.gradient(tape.sum_squares(x), [x, y])
    np.testing.assert_array_equal(grad_y, np.zeros(3))


def test_seeded_rng_streams_are_reproducible() -> None:
    """Equal seeds give bit-identical streams."""
    first = seeded_rng(99).normal(size=16)
    second = seeded_rng(99).normal(size=16)
    assert first.tobytes() == second.tobytes(), "streams should match bitwise"
