"""EEG ingestion, synthesis, and the per-frame feature chain.

The chain mirrors a wearable-EEG testbed: a 5th-order Butterworth low-pass at
50 Hz, framing into 256-sample windows, short-time DFT rhythm energies
(delta, theta, alpha, beta), approximate entropy, the largest Lyapunov
exponent, and the K2 correlation entropy.

Trial files are UTF-8 text::

    fs=512 channels=22 samples=512 label=2
    0.123456789,-1.02345678,...
    ...

with one comma-separated row per channel and 9 significant digits.
"""

from __future__ import annotations

import dataclasses as dc
import logging
import math
import typing as typ

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import signal

from .artifacts import format_row, parse_header, parse_row
from .errors import FormatError, InvalidCutoffError, ValidationError
from .numeric_core import seeded_rng

if typ.TYPE_CHECKING:
    from pathlib import Path

    import numpy.typing as npt

logger = logging.getLogger(__name__)

STYLE_CLASS_COUNT: int = 4
EEG_BANDS: dict[str, tuple[float, float]] = {
    "delta": (0.5, 4.0),
    "theta": (4.0, 8.0),
    "alpha": (8.0, 13.0),
    "beta": (13.0, 30.0),
}
# Rhythm injected into the boosted channel block of each synthetic class.
CLASS_RHYTHMS_HZ: tuple[float, ...] = (6.0, 10.0, 20.0, 3.0)
BLOCK_VARIANCE_GAIN: float = 4.0

DEFAULT_FS: float = 512.0
DEFAULT_CUTOFF_HZ: float = 50.0
DEFAULT_ORDER: int = 5
DEFAULT_WINDOW: int = 256

APEN_TOLERANCE_RATIO: float = 0.2
MIN_NONLINEAR_LENGTH: int = 200
LYAPUNOV_DIM: int = 5
LYAPUNOV_DELAY: int = 4
LYAPUNOV_HORIZON: int = 20
# Fraction of the divergence curve's rise treated as the linear region.
LINEAR_REGION_FRACTION: float = 0.7
FEATURES_PER_CHANNEL: int = 7
TRIAL_SIGNIFICANT_DIGITS: int = 9


@dc.dataclass(frozen=True, eq=False)
class EegTrial:
    """One EEG recording: a channels x samples matrix at ``fs`` Hz.

    Parameters
    ----------
    fs:
        Sampling rate in Hz.
    data:
        Real matrix of shape (N channels, P samples).
    label:
        Optional style-class id in ``0..3``.
    """

    fs: float
    data: np.ndarray
    label: int | None = None

    def __post_init__(self) -> None:
        data = np.asarray(self.data, dtype=np.float64)
        object.__setattr__(self, "data", data)
        if not self.fs > 0:
            msg = f"Sampling rate must be positive; got {self.fs}"
            raise ValidationError(msg)
        if data.ndim != 2 or data.shape[0] < 1 or data.shape[1] < 2:  # noqa: PLR2004
            msg = f"Trial data must be N>=1 by P>=2; got shape {data.shape}"
            raise ValidationError(msg)
        if not np.all(np.isfinite(data)):
            msg = "Trial data contains non-finite samples"
            raise ValidationError(msg)
        if self.label is not None and self.label not in range(STYLE_CLASS_COUNT):
            msg = f"Trial label must be in 0..{STYLE_CLASS_COUNT - 1}; got {self.label}"
            raise ValidationError(msg)

    @property
    def channels(self) -> int:
        """Number of channels N."""
        return int(self.data.shape[0])

    @property
    def samples(self) -> int:
        """Number of samples per channel P."""
        return int(self.data.shape[1])


class BandEnergies(typ.NamedTuple):
    """Rhythm-band energies of one frame."""

    delta: float
    theta: float
    alpha: float
    beta: float


@dc.dataclass(frozen=True)
class FrameFeatures:
    """Signal features of one frame of one channel.

    ``lyapunov`` is expressed per sample. When the K2 correlation sum at
    embedding dimension 3 is empty, ``k2`` holds the finite cap
    ``ln(pair count)`` and ``k2_saturated`` is set.
    """

    energies: BandEnergies
    approx_entropy: float
    lyapunov: float
    k2: float
    k2_saturated: bool = False

    def as_vector(self) -> np.ndarray:
        """Return ``[log1p(energies)..., ApEn, lambda, K2]``."""
        return np.array(
            [
                *np.log1p(np.asarray(self.energies)),
                self.approx_entropy,
                self.lyapunov,
                self.k2,
            ]
        )


# -- filtering and framing ---------------------------------------------------


def butterworth_sos(
    fs: float = DEFAULT_FS,
    fc: float = DEFAULT_CUTOFF_HZ,
    order: int = DEFAULT_ORDER,
) -> np.ndarray:
    """Design a low-pass Butterworth filter as second-order sections.

    The analog prototype's poles are mapped with impulse invariance, which
    keeps the digital magnitude on the analog curve
    ``1/sqrt(1 + (f/fc)^(2 order))`` away from Nyquist; the DC gain is then
    normalised to exactly one.

    Raises
    ------
    InvalidCutoffError
        If ``fc`` is not strictly between 0 and ``fs/2``.
    ValidationError
        If ``order`` is below one.
    """
    if not 0.0 < fc < fs / 2.0:
        msg = f"Cutoff {fc} Hz must lie strictly inside (0, {fs / 2.0}) Hz"
        raise InvalidCutoffError(msg)
    if order < 1:
        msg = f"Filter order must be at least 1; got {order}"
        raise ValidationError(msg)

    _, prototype_poles, _ = signal.buttap(order)
    omega = 2.0 * math.pi * fc
    poles = prototype_poles * omega
    period = 1.0 / fs
    residues = [
        omega**order / np.prod(pole - np.delete(poles, k))
        for k, pole in enumerate(poles)
    ]
    z_poles = np.exp(poles * period)
    numerator = np.real(
        np.sum(
            [
                period * residue * np.poly(np.delete(z_poles, k))
                for k, residue in enumerate(residues)
            ],
            axis=0,
        )
    )
    scale = float(np.max(np.abs(numerator)))
    while numerator.size > 1 and abs(numerator[0]) < 1e-12 * scale:
        numerator = numerator[1:]
    zeros = np.roots(numerator)
    gain = float(np.real(np.prod(1.0 - z_poles) / np.prod(1.0 - zeros)))
    return signal.zpk2sos(zeros, z_poles, gain)


def butterworth_lowpass(
    x: npt.ArrayLike,
    fs: float = DEFAULT_FS,
    fc: float = DEFAULT_CUTOFF_HZ,
    order: int = DEFAULT_ORDER,
) -> np.ndarray:
    """Low-pass filter a sample sequence; output length equals input length."""
    samples = np.asarray(x, dtype=np.float64)
    return signal.sosfilt(butterworth_sos(fs, fc, order), samples, axis=-1)


def frame(
    x: npt.ArrayLike, window: int = DEFAULT_WINDOW, hop: int | None = None
) -> np.ndarray:
    """Split a sequence into frames of ``window`` samples every ``hop``.

    Frame ``k`` covers ``[k*hop, k*hop + window)``; a trailing partial frame is
    discarded and a sequence shorter than ``window`` yields no frames.

    Returns
    -------
    ndarray
        Array of shape (frames, window).
    """
    step = window // 2 if hop is None else hop
    if window < 2:  # noqa: PLR2004
        msg = f"Frame window must be at least 2; got {window}"
        raise ValidationError(msg)
    if not 1 <= step <= window:
        msg = f"Frame hop must lie in [1, {window}]; got {step}"
        raise ValidationError(msg)
    samples = np.asarray(x, dtype=np.float64)
    if samples.size < window:
        return np.empty((0, window))
    return sliding_window_view(samples, window)[::step].copy()


# -- spectral features -------------------------------------------------------


def frame_spectrum(
    frame_samples: npt.ArrayLike, fs: float
) -> tuple[np.ndarray, np.ndarray]:
    """Return one-sided bin centre frequencies and |DFT|^2 of a Hann-windowed frame."""
    samples = np.asarray(frame_samples, dtype=np.float64)
    n = samples.size
    if n < 2 or n & (n - 1):  # noqa: PLR2004
        msg = f"Frame length must be a power of two; got {n}"
        raise ValidationError(msg)
    windowed = samples * signal.windows.hann(n, sym=False)
    spectrum = np.fft.rfft(windowed)
    return np.fft.rfftfreq(n, d=1.0 / fs), np.abs(spectrum) ** 2


def band_energies(frame_samples: npt.ArrayLike, fs: float) -> BandEnergies:
    """Sum |DFT bin|^2 over the bins whose centre lies in each rhythm band."""
    freqs, energy = frame_spectrum(frame_samples, fs)
    totals = [
        float(energy[(freqs >= low) & (freqs < high)].sum())
        for low, high in EEG_BANDS.values()
    ]
    return BandEnergies(*totals)


# -- nonlinear features ------------------------------------------------------


def _chebyshev_matrix(templates: np.ndarray) -> np.ndarray:
    """Pairwise max-norm distances between the rows of ``templates``."""
    dist = np.zeros((templates.shape[0], templates.shape[0]))
    for col in range(templates.shape[1]):
        column = templates[:, col]
        np.maximum(dist, np.abs(column[:, None] - column[None, :]), out=dist)
    return dist


def _require_length(x: np.ndarray, minimum: int, feature: str) -> None:
    if x.size < minimum:
        msg = f"{feature} needs at least {minimum} samples; got {x.size}"
        raise ValidationError(msg)


def approx_entropy(x: npt.ArrayLike, m: int = 2, r: float | None = None) -> float:
    """Approximate entropy ``ApEn(m, r) = phi_m(r) - phi_{m+1}(r)``.

    Templates are compared with the Chebyshev distance and self-matches count.
    ``r`` defaults to ``0.2 * std(x)``; a constant signal returns 0.
    """
    samples = np.asarray(x, dtype=np.float64)
    _require_length(samples, 10 * m, "approx_entropy")
    samples = samples - samples.mean()
    spread = float(np.std(samples))
    if spread == 0.0:
        return 0.0
    tolerance = APEN_TOLERANCE_RATIO * spread if r is None else r

    def phi(dim: int) -> float:
        templates = sliding_window_view(samples, dim)
        matches = np.mean(_chebyshev_matrix(templates) <= tolerance, axis=1)
        return float(np.mean(np.log(matches)))

    return phi(m) - phi(m + 1)


def delay_embed(x: npt.ArrayLike, dim: int, delay: int) -> np.ndarray:
    """Return the delay embedding with rows ``(x_i, x_{i+d}, ..., x_{i+(m-1)d})``."""
    samples = np.asarray(x, dtype=np.float64)
    count = samples.size - (dim - 1) * delay
    if count < 1:
        msg = (
            f"Series of {samples.size} samples is too short to embed "
            f"(m={dim}, d={delay})"
        )
        raise ValidationError(msg)
    columns = [samples[j * delay : j * delay + count] for j in range(dim)]
    return np.stack(columns, axis=1)


def _fit_linear_region(curve: np.ndarray) -> float:
    """Least-squares slope over the initial rise of a divergence curve.

    The fit runs from step 0 to the last step before the curve first reaches
    70 % of its total rise, and always spans at least two steps.
    """
    rise = float(curve.max() - curve[0])
    stop = curve.size - 1
    if rise > 0.0:
        threshold = curve[0] + LINEAR_REGION_FRACTION * rise
        above = np.flatnonzero(curve[1:] >= threshold)
        if above.size:
            stop = max(int(above[0]), 1)
    steps = np.arange(stop + 1, dtype=np.float64)
    slope, _ = np.polyfit(steps, curve[: stop + 1], 1)
    return float(slope)


def largest_lyapunov(  # noqa: PLR0913 - estimator knobs are keyword-only
    x: npt.ArrayLike,
    *,
    fs: float | None = None,
    dim: int = LYAPUNOV_DIM,
    delay: int = LYAPUNOV_DELAY,
    horizon: int = LYAPUNOV_HORIZON,
    theiler: int | None = None,
) -> float:
    """Estimate the largest Lyapunov exponent with Rosenstein's method.

    The series is delay-embedded, each point is paired with its nearest
    neighbour outside a Theiler window of ``dim * delay`` samples, and the
    mean log distance of each pair is followed for ``horizon`` steps. The
    slope is fitted over the curve's initial linear region, which ends just
    before the curve reaches 70 % of its total rise.

    Returns
    -------
    float
        Exponent per second when ``fs`` is given, otherwise per step. A series
        whose embedded points all coincide returns 0.
    """
    samples = np.asarray(x, dtype=np.float64)
    _require_length(samples, MIN_NONLINEAR_LENGTH, "largest_lyapunov")
    samples = samples - samples.mean()
    if float(np.ptp(samples)) == 0.0:
        return 0.0

    points = delay_embed(samples, dim, delay)
    usable = points.shape[0] - horizon
    window = dim * delay if theiler is None else theiler
    if usable <= window + 1:
        msg = "Series too short for the requested embedding and horizon"
        raise ValidationError(msg)

    anchors = points[:usable]
    sq_dist = np.zeros((usable, usable))
    for col in range(dim):
        diff = anchors[:, col, None] - anchors[None, :, col]
        sq_dist += diff * diff
    index = np.arange(usable)
    sq_dist[np.abs(index[:, None] - index[None, :]) <= window] = np.inf
    neighbours = np.argmin(sq_dist, axis=1)

    floor = np.finfo(np.float64).eps * float(np.std(samples))
    curve = np.empty(horizon + 1)
    for step in range(horizon + 1):
        separation = points[index + step] - points[neighbours + step]
        distance = np.maximum(np.sqrt(np.sum(separation * separation, axis=1)), floor)
        curve[step] = float(np.mean(np.log(distance)))

    slope = _fit_linear_region(curve)
    return slope * fs if fs is not None else slope


def _correlation_sum(templates: np.ndarray, tolerance: float) -> float:
    dist = _chebyshev_matrix(templates)
    upper = np.triu_indices(templates.shape[0], k=1)
    return float(np.mean(dist[upper] <= tolerance))


def k2_entropy(x: npt.ArrayLike, r: float | None = None) -> float:
    """Grassberger-Procaccia K2 entropy ``ln(C_2(r) / C_3(r))``, clamped at 0.

    ``r`` defaults to ``0.2 * std(x)``. Both correlation sums use the same
    template count. Returns ``math.inf`` when ``C_3(r)`` is zero and 0 for a
    constant signal.
    """
    samples = np.asarray(x, dtype=np.float64)
    _require_length(samples, MIN_NONLINEAR_LENGTH, "k2_entropy")
    samples = samples - samples.mean()
    spread = float(np.std(samples))
    if spread == 0.0:
        return 0.0
    tolerance = APEN_TOLERANCE_RATIO * spread if r is None else r
    count = samples.size - 2
    c2 = _correlation_sum(sliding_window_view(samples, 2)[:count], tolerance)
    c3 = _correlation_sum(sliding_window_view(samples, 3)[:count], tolerance)
    if c3 == 0.0:
        return math.inf
    return max(math.log(c2 / c3), 0.0)


def frame_features(frame_samples: npt.ArrayLike, fs: float) -> FrameFeatures:
    """Compute every per-frame feature of one channel."""
    samples = np.asarray(frame_samples, dtype=np.float64)
    k2 = k2_entropy(samples)
    saturated = math.isinf(k2)
    if saturated:
        pairs = (samples.size - 2) * (samples.size - 3) // 2
        k2 = math.log(pairs)
        logger.debug("K2 correlation sum empty; capped at %.3f", k2)
    return FrameFeatures(
        energies=band_energies(samples, fs),
        approx_entropy=approx_entropy(samples),
        lyapunov=largest_lyapunov(samples),
        k2=k2,
        k2_saturated=saturated,
    )


def frame_feature_sequence(
    trial: EegTrial,
    window: int = DEFAULT_WINDOW,
    hop: int | None = None,
) -> np.ndarray:
    """Filter a trial and build its per-frame feature vectors.

    Returns
    -------
    ndarray
        Shape (frames, channels * 7); each frame concatenates the channels'
        ``FrameFeatures.as_vector`` in channel order.
    """
    if window < MIN_NONLINEAR_LENGTH:
        msg = (
            f"Frame features need windows of at least {MIN_NONLINEAR_LENGTH} "
            f"samples; got {window}"
        )
        raise ValidationError(msg)
    filtered = butterworth_lowpass(trial.data, fs=trial.fs)
    per_channel = [frame(row, window, hop) for row in filtered]
    frame_count = per_channel[0].shape[0]
    if frame_count == 0:
        msg = f"Trial of {trial.samples} samples yields no {window}-sample frames"
        raise ValidationError(msg)
    return np.array(
        [
            np.concatenate(
                [
                    frame_features(frames[k], trial.fs).as_vector()
                    for frames in per_channel
                ]
            )
            for k in range(frame_count)
        ]
    )


# -- synthesis and file I/O --------------------------------------------------


def synth_eeg(  # noqa: PLR0913 - mirrors the generator's documented knobs
    seed: int,
    classes: int = STYLE_CLASS_COUNT,
    trials_per_class: int = 30,
    channels: int = 22,
    samples: int = 512,
    fs: float = DEFAULT_FS,
) -> list[EegTrial]:
    """Generate labelled block-variance trials.

    Every trial is unit-variance Gaussian noise. Class ``k`` scales channel
    block ``k`` (``channels // classes`` channels) to four times the baseline
    variance and adds a unit-amplitude rhythm at 6, 10, 20, or 3 Hz with a
    random phase. Trials are ordered class by class.

    Raises
    ------
    ValidationError
        If ``classes`` exceeds ``channels`` or the four available rhythms.
    """
    if classes > channels:
        msg = f"Cannot place {classes} class blocks on {channels} channels"
        raise ValidationError(msg)
    if not 1 <= classes <= len(CLASS_RHYTHMS_HZ):
        msg = f"classes must lie in 1..{len(CLASS_RHYTHMS_HZ)}; got {classes}"
        raise ValidationError(msg)

    rng = seeded_rng(seed)
    block = channels // classes
    time = np.arange(samples) / fs
    trials: list[EegTrial] = []
    for label in range(classes):
        rows = slice(label * block, (label + 1) * block)
        for _ in range(trials_per_class):
            data = rng.standard_normal((channels, samples))
            data[rows] *= math.sqrt(BLOCK_VARIANCE_GAIN)
            phase = rng.uniform(0.0, 2.0 * math.pi)
            data[rows] += np.sin(2.0 * math.pi * CLASS_RHYTHMS_HZ[label] * time + phase)
            trials.append(EegTrial(fs=fs, data=data, label=label))
    logger.debug("Synthesised %d trials (seed=%d)", len(trials), seed)
    return trials


def write_trial(path: Path, trial: EegTrial) -> Path:
    """Write ``trial`` in the text trial format and return ``path``."""
    label = "none" if trial.label is None else str(trial.label)
    header = (
        f"fs={round(trial.fs)} channels={trial.channels} "
        f"samples={trial.samples} label={label}"
    )
    rows = [format_row(row, TRIAL_SIGNIFICANT_DIGITS) for row in trial.data]
    path.write_text("\n".join([header, *rows]) + "\n", encoding="utf-8")
    return path


def read_trial(path: Path) -> EegTrial:
    """Read a trial file.

    Raises
    ------
    FileNotFoundError
        If ``path`` does not exist.
    FormatError
        If the header or rows do not match the declared dimensions.
    """
    if not path.exists():
        msg = f"Missing EEG trial file: {path}"
        raise FileNotFoundError(msg)
    text = path.read_text(encoding="utf-8")
    lines = [line for line in text.splitlines() if line.strip()]
    if not lines:
        msg = f"{path}: empty trial file"
        raise FormatError(msg)
    fields = parse_header(
        lines[0], expected=("fs", "channels", "samples", "label"), where=str(path)
    )
    try:
        fs = int(fields["fs"])
        channels = int(fields["channels"])
        samples = int(fields["samples"])
        label = None if fields["label"] == "none" else int(fields["label"])
    except ValueError as exc:
        msg = f"{path}: non-integer header field"
        raise FormatError(msg) from exc
    rows = [parse_row(line, where=str(path)) for line in lines[1:]]
    if len(rows) != channels or any(row.size != samples for row in rows):
        msg = f"{path}: data does not match header ({channels}x{samples})"
        raise FormatError(msg)
    return EegTrial(fs=float(fs), data=np.array(rows), label=label)


def read_trials(directory: Path) -> list[tuple[Path, EegTrial]]:
    """Read every ``*.eeg`` file in ``directory`` in file-name order."""
    if not directory.is_dir():
        msg = f"Trial directory {directory} does not exist"
        raise FileNotFoundError(msg)
    return [(path, read_trial(path)) for path in sorted(directory.glob("*.eeg"))]


__all__ = [
    "CLASS_RHYTHMS_HZ",
    "EEG_BANDS",
    "BandEnergies",
    "EegTrial",
    "FrameFeatures",
    "approx_entropy",
    "band_energies",
    "butterworth_lowpass",
    "butterworth_sos",
    "delay_embed",
    "frame",
    "frame_feature_sequence",
    "frame_features",
    "frame_spectrum",
    "k2_entropy",
    "largest_lyapunov",
    "read_trial",
    "read_trials",
    "synth_eeg",
    "write_trial",
]
