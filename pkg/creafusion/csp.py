"""Multiclass Common Spatial Patterns with a one-to-one pair strategy.

Each class contributes a trace-normalised spatial covariance. Every unordered
class pair is simultaneously diagonalised under the composite-whitening
convention ``W^T (C_i + C_j) W = I``; the three columns with the largest and
the three with the smallest ``Lambda_i`` are kept, and all selected columns are
stacked into the mixed filter. For four classes that gives 6 pairs and a
36 x N mixed filter. Features are the log-variances of the filtered rows.

Filter-bank files are UTF-8 text::

    classes=4 channels=22 rows=36
    [mixed] rows=36 cols=22
    ...
    [pair.0_1.weights] rows=22 cols=22
    ...

Example
-------
>>> bank = train_filter_bank(training_trials)
>>> features = apply_and_featurize(bank, trial)
"""

from __future__ import annotations

import collections
import dataclasses as dc
import itertools
import logging
import math
import typing as typ

import numpy as np

from .artifacts import parse_header, read_blocks, write_blocks
from .eeg_signal import STYLE_CLASS_COUNT
from .errors import (
    DegenerateClassError,
    DimensionMismatchError,
    FormatError,
    MissingClassError,
    ValidationError,
)
from .numeric_core import seeded_rng, sym_eig

if typ.TYPE_CHECKING:
    import collections.abc as cabc
    from pathlib import Path

    from .eeg_signal import EegTrial

logger = logging.getLogger(__name__)

COLUMNS_PER_SIDE: int = 3
LOG_VARIANCE_FLOOR: float = 1e-12
REGULARISATION_THRESHOLD: float = 1e-10
REGULARISATION: float = 1e-9


@dc.dataclass(frozen=True, eq=False)
class ClassCovariance:
    """Trace-normalised spatial covariance of one class."""

    class_id: int
    matrix: np.ndarray

    @property
    def channels(self) -> int:
        """Number of channels N."""
        return int(self.matrix.shape[0])


@dc.dataclass(frozen=True, eq=False)
class PairFilter:
    """Simultaneous diagonaliser of one class pair.

    ``weights`` columns are ordered by ``eig_i`` descending and
    ``eig_i + eig_j`` is one elementwise.
    """

    classes: tuple[int, int]
    weights: np.ndarray
    eig_i: np.ndarray
    eig_j: np.ndarray

    @property
    def key(self) -> str:
        """Block name stem used in filter-bank files."""
        return f"pair.{self.classes[0]}_{self.classes[1]}"

    def selected_columns(self, per_side: int = COLUMNS_PER_SIDE) -> tuple[int, ...]:
        """Indices of the ``per_side`` largest and smallest ``eig_i`` columns."""
        n = self.weights.shape[1]
        if n < 2 * per_side:
            msg = f"Need at least {2 * per_side} channels to select filters; got {n}"
            raise ValidationError(msg)
        return (*range(per_side), *range(n - per_side, n))


@dc.dataclass(frozen=True, eq=False)
class FilterBank:
    """Mixed spatial filter plus the pair filters it was built from."""

    class_count: int
    mixed: np.ndarray
    pairs: tuple[PairFilter, ...] = ()

    def __post_init__(self) -> None:
        mixed = np.asarray(self.mixed, dtype=np.float64)
        object.__setattr__(self, "mixed", mixed)
        if mixed.ndim != 2:  # noqa: PLR2004
            msg = f"Mixed filter must be a matrix; got shape {mixed.shape}"
            raise ValidationError(msg)

    @property
    def channels(self) -> int:
        """Number of input channels N."""
        return int(self.mixed.shape[1])

    @property
    def rows(self) -> int:
        """Number of filter rows, hence feature length."""
        return int(self.mixed.shape[0])


def class_covariance(
    trials: cabc.Sequence[EegTrial], class_id: int | None = None
) -> ClassCovariance:
    """Covariance ``T T^T / tr(T T^T)`` of the concatenated trials of a class.

    Raises
    ------
    ValidationError
        If no trials are given, channel counts differ, or there are fewer
        samples than channels.
    DegenerateClassError
        If every sample is zero.
    """
    if not trials:
        msg = "class_covariance needs at least one trial"
        raise ValidationError(msg)
    channels = {trial.channels for trial in trials}
    if len(channels) != 1:
        msg = f"Trials disagree on channel count: {sorted(channels)}"
        raise DimensionMismatchError(msg)
    concatenated = np.hstack([trial.data for trial in trials])
    if concatenated.shape[1] < concatenated.shape[0]:
        msg = (
            f"Need at least {concatenated.shape[0]} samples for a covariance; "
            f"got {concatenated.shape[1]}"
        )
        raise ValidationError(msg)

    product = concatenated @ concatenated.T
    trace = float(np.trace(product))
    resolved_id = class_id if class_id is not None else trials[0].label
    if trace == 0.0:
        msg = f"Class {resolved_id} has an all-zero covariance"
        raise DegenerateClassError(msg)
    product = 0.5 * (product + product.T)
    return ClassCovariance(class_id=resolved_id or 0, matrix=product / trace)


def pair_filters(ci: ClassCovariance, cj: ClassCovariance) -> PairFilter:
    """Simultaneously diagonalise two class covariances.

    Returns ``W`` with ``W^T (C_i + C_j) W = I``, ``W^T C_i W = diag(eig_i)``,
    and ``eig_j = 1 - eig_i``. The composite is regularised by ``1e-9 * I``
    when its smallest eigenvalue falls below ``1e-10``; ``W^T C_j W`` then
    departs from ``diag(eig_j)`` by at most ``1e-9 * |W|^2``.
    """
    if ci.matrix.shape != cj.matrix.shape:
        msg = f"Covariance shapes differ: {ci.matrix.shape} vs {cj.matrix.shape}"
        raise DimensionMismatchError(msg)

    composite = ci.matrix + cj.matrix
    values, vectors = sym_eig(composite)
    if values[-1] < REGULARISATION_THRESHOLD:
        logger.warning(
            "Composite covariance of classes %d/%d is near-singular; regularising",
            ci.class_id,
            cj.class_id,
        )
        composite = composite + REGULARISATION * np.eye(ci.channels)
        values, vectors = sym_eig(composite)

    whitening = vectors / np.sqrt(values)
    whitened_i = whitening.T @ ci.matrix @ whitening
    eig_i, rotation = sym_eig(0.5 * (whitened_i + whitened_i.T))
    weights = whitening @ rotation
    eig_j = 1.0 - eig_i
    return PairFilter(
        classes=(ci.class_id, cj.class_id),
        weights=weights,
        eig_i=eig_i,
        eig_j=eig_j,
    )


def build_mixed_filter(covs: cabc.Sequence[ClassCovariance]) -> FilterBank:
    """Stack the selected columns of every class pair into the mixed filter.

    Pairs are visited in lexicographic order, (0,1), (0,2), ..., so the row
    layout of the mixed filter is deterministic.
    """
    if len(covs) < 2:  # noqa: PLR2004
        msg = f"build_mixed_filter needs at least two classes; got {len(covs)}"
        raise ValidationError(msg)
    pairs = tuple(pair_filters(ci, cj) for ci, cj in itertools.combinations(covs, 2))
    mixed = np.vstack(
        [pair.weights[:, list(pair.selected_columns())].T for pair in pairs]
    )
    logger.debug("Built mixed filter %dx%d from %d pairs", *mixed.shape, len(pairs))
    return FilterBank(class_count=len(covs), mixed=mixed, pairs=pairs)


def apply_and_featurize(bank: FilterBank, trial: EegTrial) -> np.ndarray:
    """Filter a trial with the mixed filter and return row log-variances.

    Variance is the population variance; rows with variance below ``1e-12``
    are clamped to ``log(1e-12)``.
    """
    if trial.channels != bank.channels:
        msg = f"Trial has {trial.channels} channels; bank expects {bank.channels}"
        raise DimensionMismatchError(msg)
    filtered = bank.mixed @ trial.data
    return np.log(np.maximum(filtered.var(axis=1), LOG_VARIANCE_FLOOR))


def group_by_label(
    trials: cabc.Sequence[EegTrial], class_count: int = STYLE_CLASS_COUNT
) -> list[list[EegTrial]]:
    """Group labelled trials by class id.

    Raises
    ------
    MissingClassError
        If a class in ``0..class_count-1`` has no trials; the message lists
        every missing class.
    """
    groups: dict[int, list[EegTrial]] = collections.defaultdict(list)
    for trial in trials:
        if trial.label is None:
            msg = "Training trials must be labelled"
            raise ValidationError(msg)
        groups[trial.label].append(trial)
    if missing := [k for k in range(class_count) if k not in groups]:
        msg = f"Training set lacks classes: {', '.join(map(str, missing))}"
        raise MissingClassError(msg)
    return [groups[k] for k in range(class_count)]


def train_filter_bank(
    trials: cabc.Sequence[EegTrial], class_count: int = STYLE_CLASS_COUNT
) -> FilterBank:
    """Estimate class covariances from labelled trials and build the bank."""
    covs = [
        class_covariance(group, class_id=k)
        for k, group in enumerate(group_by_label(trials, class_count))
    ]
    return build_mixed_filter(covs)


def split_trials(
    trials: cabc.Sequence[EegTrial],
    train_fraction: float = 0.75,
    seed: int = 0,
) -> tuple[list[EegTrial], list[EegTrial]]:
    """Split labelled trials per class into training and held-out lists.

    Each class keeps ``round(train_fraction * n)`` trials for training, chosen
    by a seeded permutation; both outputs preserve the input order.
    """
    if not 0.0 < train_fraction < 1.0:
        msg = f"train_fraction must lie in (0, 1); got {train_fraction}"
        raise ValidationError(msg)
    rng = seeded_rng(seed)
    by_class: dict[int | None, list[int]] = collections.defaultdict(list)
    for index, trial in enumerate(trials):
        by_class[trial.label].append(index)

    train_idx: set[int] = set()
    for label in sorted(by_class, key=lambda k: -1 if k is None else k):
        members = by_class[label]
        keep = round(train_fraction * len(members))
        train_idx.update(members[i] for i in rng.permutation(len(members))[:keep])
    train = [t for i, t in enumerate(trials) if i in train_idx]
    held_out = [t for i, t in enumerate(trials) if i not in train_idx]
    return train, held_out


def evaluate_accuracy(
    predictions: cabc.Sequence[int], trials: cabc.Sequence[EegTrial]
) -> float:
    """Return the fraction of trials whose label equals the prediction."""
    if len(predictions) != len(trials) or not trials:
        msg = "evaluate_accuracy needs one prediction per trial and at least one trial"
        raise ValidationError(msg)
    hits = sum(int(p == t.label) for p, t in zip(predictions, trials, strict=True))
    return hits / len(trials)


def write_filter_bank(path: Path, bank: FilterBank) -> Path:
    """Write the mixed filter, then every pair section for audit."""
    blocks: dict[str, np.ndarray] = {"mixed": bank.mixed}
    for pair in bank.pairs:
        blocks[f"{pair.key}.weights"] = pair.weights
        blocks[f"{pair.key}.eig_i"] = pair.eig_i
        blocks[f"{pair.key}.eig_j"] = pair.eig_j
    header = f"classes={bank.class_count} channels={bank.channels} rows={bank.rows}"
    write_blocks(path, header, blocks)
    return path


def read_filter_bank(path: Path) -> FilterBank:
    """Read a filter bank written by ``write_filter_bank``."""
    header, blocks = read_blocks(path)
    fields = parse_header(
        header, expected=("classes", "channels", "rows"), where=str(path)
    )
    class_count = int(fields["classes"])
    mixed = blocks.get("mixed")
    if mixed is None or mixed.shape != (int(fields["rows"]), int(fields["channels"])):
        msg = f"{path}: mixed filter missing or inconsistent with the header"
        raise FormatError(msg)
    expected_rows = 2 * COLUMNS_PER_SIDE * pair_count(class_count)
    if mixed.shape[0] != expected_rows:
        msg = f"{path}: {class_count} classes need {expected_rows} filter rows"
        raise FormatError(msg)

    pairs = []
    for i, j in itertools.combinations(range(class_count), 2):
        stem = f"pair.{i}_{j}"
        if f"{stem}.weights" not in blocks:
            continue
        pairs.append(
            PairFilter(
                classes=(i, j),
                weights=blocks[f"{stem}.weights"],
                eig_i=blocks[f"{stem}.eig_i"].ravel(),
                eig_j=blocks[f"{stem}.eig_j"].ravel(),
            )
        )
    return FilterBank(class_count=class_count, mixed=mixed, pairs=tuple(pairs))


def pair_count(class_count: int) -> int:
    """Number of unordered class pairs, ``k (k - 1) / 2``."""
    return math.comb(class_count, 2)


__all__ = [
    "ClassCovariance",
    "FilterBank",
    "PairFilter",
    "apply_and_featurize",
    "build_mixed_filter",
    "class_covariance",
    "evaluate_accuracy",
    "group_by_label",
    "pair_count",
    "pair_filters",
    "read_filter_bank",
    "split_trials",
    "train_filter_bank",
    "write_filter_bank",
]
