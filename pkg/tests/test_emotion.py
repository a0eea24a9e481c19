"""Unit tests for attention pooling, emotion recognition, and valence."""

from __future__ import annotations

import typing as typ

import numpy as np
import pytest

from creafusion.emotion import (
    DEFAULT_VALENCE_MAP,
    PARAMETER_BLOCKS,
    AcousticSequence,
    AttentionRnn,
    attention_pool,
    burst_frames,
    emotion_loss,
    initialise,
    read_model,
    read_sequence,
    recognize,
    synth_emotion_frames,
    train_emotion,
    valence_of,
    write_model,
    write_sequence,
)
from creafusion.errors import DimensionMismatchError, MissingClassError, ValidationError
from creafusion.numeric_core import GradTape, grad_check, seeded_rng
from creafusion.recurrent import TrainingConfig

if typ.TYPE_CHECKING:
    from pathlib import Path


def test_attention_pool_weights_the_aligned_state() -> None:
    """Scores against ``mu`` become softmax weights over time."""
    alpha, pooled = attention_pool(np.eye(2), np.array([1.0, 0.0]))
    np.testing.assert_allclose(alpha, [0.7311, 0.2689], atol=1e-4)
    np.testing.assert_allclose(pooled, [0.7311, 0.2689], atol=1e-4)
    assert abs(alpha.sum() - 1.0) < 1e-12, "weights sum to one"


def test_attention_pool_rejects_mismatched_vector() -> None:
    """``mu`` must match the hidden width."""
    with pytest.raises(DimensionMismatchError):
        attention_pool(np.ones((3, 2)), np.ones(3))


@pytest.mark.parametrize(
    ("probabilities", "expected"),
    [
        ([0.0, 1.0, 0.0, 0.0], -1.0),
        ([1.0, 0.0, 0.0, 0.0], 1.0),
        ([0.25, 0.25, 0.25, 0.25], 0.125),
    ],
    ids=["negative", "positive", "uniform"],
)
def test_valence_is_expected_map_value(
    probabilities: list[float], expected: float
) -> None:
    """Valence is the probability-weighted map value."""
    assert valence_of(probabilities, DEFAULT_VALENCE_MAP) == pytest.approx(expected)


def test_valence_map_must_cover_classes_and_stay_in_range() -> None:
    """Missing ids and out-of-range values are rejected."""
    with pytest.raises(ValidationError, match="no entry"):
        valence_of([0.5, 0.5], {0: 1.0})
    with pytest.raises(ValidationError, match=r"\[-1, 1\]"):
        valence_of([0.5, 0.5], {0: 1.0, 1: 2.0})


def test_recognize_reports_attention_over_frames() -> None:
    """Attention has one weight per frame and sums to one."""
    model = initialise(3, hidden_dim=5, seed=1)
    seq = AcousticSequence(frames=seeded_rng(2).normal(size=(6, 3)))
    result = recognize(model, seq)
    assert result.attention.shape == (6,), "one weight per frame"
    assert abs(result.attention.sum() - 1.0) < 1e-12, "attention sums to one"
    assert abs(result.probabilities.sum() - 1.0) < 1e-12, "probabilities sum to one"
    assert -1.0 <= result.valence <= 1.0, f"valence {result.valence} out of range"
    assert result.name in {"positive", "negative", "neutral", "excited"}


def test_recognize_honours_custom_valence_map() -> None:
    """A constant map gives that constant valence."""
    model = initialise(3, hidden_dim=4)
    seq = AcousticSequence(frames=np.ones((2, 3)))
    result = recognize(model, seq, {0: -0.5, 1: -0.5, 2: -0.5, 3: -0.5})
    assert result.valence == pytest.approx(-0.5)


def test_recognize_rejects_wrong_width() -> None:
    """The sequence must match the model's input dimension."""
    with pytest.raises(DimensionMismatchError):
        recognize(initialise(3, hidden_dim=4), AcousticSequence(np.ones((2, 5))))


def test_emotion_loss_gradient_reaches_attention_vector() -> None:
    """The loss gradient with respect to ``mu`` matches finite differences."""
    model = initialise(3, hidden_dim=4, seed=3)
    rng = seeded_rng(4)
    sequences = [rng.normal(size=(length, 3)) for length in (3, 4, 3)]
    labels = [0, 2, 3]

    def loss_at(mu: np.ndarray) -> tuple[float, np.ndarray]:
        tape = GradTape()
        nodes = {name: tape.watch(model.params[name]) for name in PARAMETER_BLOCKS}
        nodes["mu"] = tape.watch(mu)
        loss = emotion_loss(tape, nodes, sequences, labels)
        (grad,) = tape.gradient(loss, [nodes["mu"]])
        return float(loss.value), grad

    error = grad_check(loss_at, model.params["mu"].copy(), h=1e-5)
    assert error < 1e-3, f"relative gradient error {error:.3g}"


def test_training_reduces_loss() -> None:
    """A few epochs of descent lower the loss."""
    dataset = synth_emotion_frames(5, samples_per_class=3, frames=8, burst=2)
    model = train_emotion(dataset, TrainingConfig(epochs=20, hidden_dim=6))
    assert model.losses[-1] < model.losses[0], "loss should decrease"


def test_training_lists_missing_emotions() -> None:
    """Every absent emotion id is named."""
    dataset = synth_emotion_frames(6, classes=2, samples_per_class=2, frames=6)
    with pytest.raises(MissingClassError, match="2, 3"):
        train_emotion(dataset, TrainingConfig(epochs=1))


def test_training_rejects_labels_beyond_class_count() -> None:
    """A label past the last emotion id is refused, not silently indexed."""
    dataset = synth_emotion_frames(6, classes=4, samples_per_class=1, frames=6)
    stray = AcousticSequence(frames=dataset[0].frames, label=5)
    with pytest.raises(ValidationError, match=r"outside 0\.\.3: \[5\]"):
        train_emotion([*dataset, stray], TrainingConfig(epochs=1))


def test_synthetic_bursts_have_requested_length() -> None:
    """Each sequence carries exactly one burst of marked frames."""
    for seq in synth_emotion_frames(7, samples_per_class=3, frames=12, burst=3):
        mask = burst_frames(seq)
        assert int(mask.sum()) == 3, f"burst of {int(mask.sum())} frames"
        start = int(np.argmax(mask))
        assert mask[start : start + 3].all(), "burst frames are consecutive"


def test_sequence_and_model_files_round_trip(tmp_path: Path) -> None:
    """Sequences reload to nine digits; models reload exactly."""
    seq = synth_emotion_frames(8, samples_per_class=1, frames=6)[2]
    loaded_seq = read_sequence(write_sequence(tmp_path / "s.seq", seq))
    assert loaded_seq.label == 2, "label should survive"
    np.testing.assert_allclose(loaded_seq.frames, seq.frames, rtol=1e-8, atol=1e-12)

    model = initialise(8, hidden_dim=4, seed=9)
    loaded_model = read_model(write_model(tmp_path / "m.txt", model))
    np.testing.assert_array_equal(
        recognize(loaded_model, seq).probabilities, recognize(model, seq).probabilities
    )


@pytest.fixture(scope="module")
def burst_dataset() -> list[AcousticSequence]:
    """Sequences whose class shows only inside a three-frame burst."""
    return synth_emotion_frames(10, samples_per_class=10, frames=12, burst=3)


@pytest.fixture(scope="module")
def burst_model(burst_dataset: list[AcousticSequence]) -> AttentionRnn:
    """An attention model trained on the burst sequences."""
    return train_emotion(
        burst_dataset, TrainingConfig(epochs=300, learning_rate=0.3, hidden_dim=8)
    )


@pytest.mark.slow
def test_trained_attention_concentrates_on_bursts(
    burst_dataset: list[AcousticSequence], burst_model: AttentionRnn
) -> None:
    """Burst frames receive at least 1.5 times the weight of neutral frames."""
    burst_weights: list[float] = []
    neutral_weights: list[float] = []
    for seq in burst_dataset:
        alpha = recognize(burst_model, seq).attention
        mask = burst_frames(seq)
        burst_weights.extend(alpha[mask])
        neutral_weights.extend(alpha[~mask])
    ratio = float(np.mean(burst_weights)) / float(np.mean(neutral_weights))
    assert ratio > 1.5, f"burst to neutral attention ratio {ratio:.3f}"


@pytest.mark.slow
def test_removing_bursts_lowers_true_class_probability(
    burst_dataset: list[AcousticSequence], burst_model: AttentionRnn
) -> None:
    """Replacing burst frames with neutral noise erases most of the evidence."""
    rng = seeded_rng(11)
    drops = []
    for seq in burst_dataset:
        assert seq.label is not None
        mask = burst_frames(seq)
        neutral = seq.frames.copy()
        neutral[mask] = rng.normal(0.0, 0.3, size=(int(mask.sum()), seq.dim))
        before = recognize(burst_model, seq).probabilities[seq.label]
        after = recognize(burst_model, AcousticSequence(neutral)).probabilities[
            seq.label
        ]
        drops.append(float(before - after))
    assert np.mean(drops) > 0.2, f"mean true-class drop {np.mean(drops):.3f}"
