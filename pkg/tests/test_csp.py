"""Unit tests for class covariances, pair diagonalisation, and the mixed filter."""

from __future__ import annotations

import math
import typing as typ

import numpy as np
import pytest

from creafusion.csp import (
    ClassCovariance,
    FilterBank,
    apply_and_featurize,
    build_mixed_filter,
    class_covariance,
    evaluate_accuracy,
    group_by_label,
    pair_count,
    pair_filters,
    read_filter_bank,
    split_trials,
    train_filter_bank,
    write_filter_bank,
)
from creafusion.eeg_signal import EegTrial, synth_eeg
from creafusion.errors import (
    DegenerateClassError,
    DimensionMismatchError,
    FormatError,
    MissingClassError,
    ValidationError,
)
from creafusion.numeric_core import seeded_rng

if typ.TYPE_CHECKING:
    from pathlib import Path


def _random_covariance(seed: int, channels: int = 6) -> ClassCovariance:
    raw = seeded_rng(seed).normal(size=(channels, 4 * channels))
    product = raw @ raw.T
    return ClassCovariance(class_id=seed % 4, matrix=product / np.trace(product))


def test_identity_trial_gives_half_identity() -> None:
    """``I I^T / tr`` is ``I / 2`` for two channels."""
    cov = class_covariance([EegTrial(fs=512.0, data=np.eye(2), label=0)])
    np.testing.assert_allclose(cov.matrix, np.diag([0.5, 0.5]))


def test_single_active_channel_gives_unit_corner() -> None:
    """Energy on one channel only normalises to a single unit entry."""
    trial = EegTrial(fs=512.0, data=np.array([[2.0, 0.0], [0.0, 0.0]]), label=1)
    cov = class_covariance([trial])
    np.testing.assert_allclose(cov.matrix, [[1.0, 0.0], [0.0, 0.0]])
    assert cov.class_id == 1, "class id defaults to the trial label"


def test_covariance_is_symmetric_with_unit_trace() -> None:
    """Normalised covariances are symmetric with trace one."""
    trials = synth_eeg(1, trials_per_class=2, channels=8, samples=128)[:2]
    cov = class_covariance(trials)
    np.testing.assert_allclose(cov.matrix, cov.matrix.T)
    assert math.isclose(float(np.trace(cov.matrix)), 1.0), "trace should be one"


def test_all_zero_class_is_degenerate() -> None:
    """A class with no energy cannot be normalised."""
    with pytest.raises(DegenerateClassError):
        class_covariance([EegTrial(fs=512.0, data=np.zeros((2, 4)), label=0)])


def test_covariance_rejects_mixed_channel_counts() -> None:
    """All trials of a class must share a channel count."""
    trials = [
        EegTrial(fs=512.0, data=np.ones((2, 4))),
        EegTrial(fs=512.0, data=np.ones((3, 4))),
    ]
    with pytest.raises(DimensionMismatchError):
        class_covariance(trials)


def test_pair_filters_diagonalise_both_classes() -> None:
    """The composite whitens to identity and each class becomes diagonal."""
    ci, cj = _random_covariance(1), _random_covariance(2)
    pair = pair_filters(ci, cj)
    w = pair.weights
    composite = w.T @ (ci.matrix + cj.matrix) @ w
    assert np.abs(composite - np.eye(6)).max() < 1e-8, "composite should whiten"
    assert np.abs(w.T @ ci.matrix @ w - np.diag(pair.eig_i)).max() < 1e-8, (
        "class i should diagonalise"
    )
    assert np.abs(w.T @ cj.matrix @ w - np.diag(pair.eig_j)).max() < 1e-8, (
        "class j should diagonalise"
    )
    np.testing.assert_allclose(pair.eig_i + pair.eig_j, np.ones(6), atol=1e-8)
    assert np.all(np.diff(pair.eig_i) <= 1e-12), "eig_i must be descending"


def _bank_features(bank: FilterBank, trials: list[EegTrial]) -> list[np.ndarray]:
    return [apply_and_featurize(bank, t) for t in trials]


@pytest.mark.parametrize("gain", [0.5, 2.0, 4.0], ids=["half", "double", "quadruple"])
def test_scaled_trials_leave_the_bank_unchanged(gain: float) -> None:
    """Trace normalisation cancels any uniform gain on the recordings."""
    trials = synth_eeg(11, trials_per_class=3, channels=8, samples=256)
    scaled = [EegTrial(fs=t.fs, data=gain * t.data, label=t.label) for t in trials]
    np.testing.assert_allclose(
        class_covariance(scaled[:3]).matrix, class_covariance(trials[:3]).matrix
    )
    bank = train_filter_bank(trials)
    scaled_bank = train_filter_bank(scaled)
    for plain, rescaled in zip(
        _bank_features(bank, trials),
        _bank_features(scaled_bank, trials),
        strict=True,
    ):
        np.testing.assert_allclose(rescaled, plain, atol=1e-9)
    shift = apply_and_featurize(bank, scaled[0]) - apply_and_featurize(bank, trials[0])
    np.testing.assert_allclose(shift, np.full(bank.rows, 2.0 * math.log(gain)))


def test_trial_order_does_not_change_the_bank() -> None:
    """Shuffling the training trials gives the same features."""
    trials = synth_eeg(12, trials_per_class=3, channels=8, samples=256)
    order = seeded_rng(5).permutation(len(trials))
    shuffled = [trials[i] for i in order]
    bank = train_filter_bank(trials)
    shuffled_bank = train_filter_bank(shuffled)
    for plain, reordered in zip(
        _bank_features(bank, trials),
        _bank_features(shuffled_bank, trials),
        strict=True,
    ):
        np.testing.assert_allclose(reordered, plain, atol=1e-9)


def test_every_pair_splits_unit_variance() -> None:
    """On all six pairs ``eig_i + eig_j`` is one and class j diagonalises."""
    trials = synth_eeg(13, trials_per_class=3, channels=8, samples=256)
    groups = group_by_label(trials)
    covs = [class_covariance(group, class_id=k) for k, group in enumerate(groups)]
    bank = build_mixed_filter(covs)
    assert len(bank.pairs) == 6, "four classes give six pairs"
    for pair in bank.pairs:
        i, j = pair.classes
        w = pair.weights
        np.testing.assert_allclose(pair.eig_i + pair.eig_j, 1.0, atol=1e-12)
        assert np.abs(w.T @ covs[j].matrix @ w - np.diag(pair.eig_j)).max() < 1e-8, (
            f"pair {i}/{j}: class j should diagonalise"
        )


def test_diagonal_covariances_rank_channels_by_variance_share() -> None:
    """Independent channels are ranked by their share of class-i variance."""
    ci = ClassCovariance(class_id=0, matrix=np.diag([0.1, 0.4, 0.2, 0.3]))
    cj = ClassCovariance(class_id=1, matrix=np.diag([0.4, 0.1, 0.3, 0.2]))
    pair = pair_filters(ci, cj)
    np.testing.assert_allclose(pair.eig_i, [0.8, 0.6, 0.4, 0.2], atol=1e-12)
    dominant = np.argmax(np.abs(pair.weights), axis=0)
    assert dominant.tolist() == [1, 3, 2, 0], f"column channels {dominant.tolist()}"


def test_extreme_filters_favour_opposite_classes() -> None:
    """The first filter of a pair carries class i, the last carries class j."""
    trials = synth_eeg(14, classes=2, trials_per_class=6, channels=8, samples=256)
    bank = train_filter_bank(trials, class_count=2)
    first = [apply_and_featurize(bank, t)[0] for t in trials]
    last = [apply_and_featurize(bank, t)[-1] for t in trials]
    labels = np.array([t.label for t in trials])
    assert np.mean(np.array(first)[labels == 0]) > np.mean(
        np.array(first)[labels == 1]
    ), "first filter should pass more class-0 variance"
    assert np.mean(np.array(last)[labels == 1]) > np.mean(
        np.array(last)[labels == 0]
    ), "last filter should pass more class-1 variance"


def test_pair_filters_reject_shape_mismatch() -> None:
    """Pairs must share a channel count."""
    with pytest.raises(DimensionMismatchError):
        pair_filters(_random_covariance(1, 4), _random_covariance(2, 6))


def test_mixed_filter_for_four_classes_has_thirty_six_rows() -> None:
    """Six pairs times six columns against 22 channels."""
    trials = synth_eeg(3, trials_per_class=3, channels=22, samples=256)
    bank = train_filter_bank(trials)
    assert bank.mixed.shape == (36, 22), f"got {bank.mixed.shape}"
    assert [pair.classes for pair in bank.pairs] == [
        (0, 1),
        (0, 2),
        (0, 3),
        (1, 2),
        (1, 3),
        (2, 3),
    ], "pairs must follow lexicographic order"
    assert pair_count(4) == len(bank.pairs), "pair count is k(k-1)/2"


def test_mixed_filter_needs_two_classes() -> None:
    """A single class has no pairs."""
    with pytest.raises(ValidationError):
        build_mixed_filter([_random_covariance(1)])


def test_zero_trial_features_take_log_floor() -> None:
    """Rows with no variance are clamped to ``log(1e-12)``."""
    bank = FilterBank(class_count=2, mixed=seeded_rng(4).normal(size=(6, 3)))
    features = apply_and_featurize(bank, EegTrial(fs=512.0, data=np.zeros((3, 64))))
    np.testing.assert_allclose(features, np.full(6, math.log(1e-12)))


def test_featurize_rejects_wrong_channel_count() -> None:
    """The trial must match the bank's channel count."""
    bank = FilterBank(class_count=2, mixed=np.ones((6, 3)))
    with pytest.raises(DimensionMismatchError):
        apply_and_featurize(bank, EegTrial(fs=512.0, data=np.ones((4, 8))))


def test_missing_classes_are_listed() -> None:
    """Every absent class appears in the error message."""
    trials = synth_eeg(5, classes=2, trials_per_class=1, channels=8, samples=64)
    with pytest.raises(MissingClassError, match="2, 3"):
        group_by_label(trials, class_count=4)


def test_split_keeps_class_proportions_and_order() -> None:
    """Each class keeps round(0.75 n) trials and order is preserved."""
    trials = synth_eeg(6, trials_per_class=8, channels=8, samples=64)
    train, held_out = split_trials(trials, seed=2)
    assert len(train) == 24, "six of eight trials per class train"
    assert len(held_out) == 8, "two of eight trials per class are held out"
    assert [t.label for t in train] == sorted(t.label for t in train), (
        "input order must be preserved"
    )
    assert {id(t) for t in train}.isdisjoint(id(t) for t in held_out), (
        "splits must not overlap"
    )


def test_accuracy_counts_hits() -> None:
    """Accuracy is the fraction of matching labels."""
    trials = synth_eeg(7, trials_per_class=1, channels=8, samples=64)
    assert evaluate_accuracy([0, 1, 0, 3], trials) == 0.75


def test_filter_bank_file_round_trip(tmp_path: Path) -> None:
    """Banks reload bit-exactly with their audit sections."""
    trials = synth_eeg(8, trials_per_class=2, channels=8, samples=128)
    bank = train_filter_bank(trials)
    loaded = read_filter_bank(write_filter_bank(tmp_path / "bank.txt", bank))
    np.testing.assert_array_equal(loaded.mixed, bank.mixed)
    assert loaded.class_count == 4, "class count should survive"
    assert len(loaded.pairs) == 6, "pair sections should reload"
    np.testing.assert_array_equal(loaded.pairs[3].eig_i, bank.pairs[3].eig_i)


def test_filter_bank_rows_must_match_class_pairs(tmp_path: Path) -> None:
    """Three classes give three pairs, hence eighteen mixed rows."""
    bank = FilterBank(class_count=3, mixed=np.ones((6, 3)))
    path = write_filter_bank(tmp_path / "bank.txt", bank)
    with pytest.raises(FormatError, match="need 18 filter rows"):
        read_filter_bank(path)


def _nearest_centroid(
    train: list[np.ndarray], labels: list[int], query: np.ndarray
) -> int:
    centroids = {
        k: np.mean([f for f, y in zip(train, labels, strict=True) if y == k], axis=0)
        for k in sorted(set(labels))
    }
    return min(centroids, key=lambda k: float(np.linalg.norm(query - centroids[k])))


@pytest.mark.slow
def test_csp_features_separate_synthetic_classes() -> None:
    """Held-out block-variance trials are recognised from CSP features."""
    trials = synth_eeg(42, trials_per_class=30, channels=22, samples=512)
    train, held_out = split_trials(trials, seed=0)
    bank = train_filter_bank(train)
    train_features = [apply_and_featurize(bank, t) for t in train]
    labels = [typ.cast("int", t.label) for t in train]
    predictions = [
        _nearest_centroid(train_features, labels, apply_and_featurize(bank, t))
        for t in held_out
    ]
    accuracy = evaluate_accuracy(predictions, held_out)
    assert accuracy >= 0.9, f"held-out accuracy {accuracy:.2f} below 0.9"
