"""Cyclopts-powered CLI for the creative-fusion pipeline.

Every sub-command accepts ``--seed``, ``--out``, and ``--verbose``, writes its
artifacts under ``--out``, and prints exactly one JSON line to stdout::

    {"outputs":{...},"status":"ok","timings":{"classify-style":12.5,...}}

Failures print the same shape with ``"status":"error"``. The exit status is 0
on success, 2 for invalid input or unparseable arguments, and 1 for any other
failure. Log messages go to stderr only.
"""

from __future__ import annotations

import dataclasses as dc
import logging
import sys
import typing as typ
from pathlib import Path

import cyclopts
import numpy as np
from cyclopts import App, Parameter
from cyclopts.types import ExistingDirectory, ExistingFile

from .artifacts import (
    array_digest,
    parse_row,
    project_version,
    render_json,
    write_blocks,
    write_json,
)
from .catalog import load_catalog
from .csp import (
    evaluate_accuracy,
    read_filter_bank,
    split_trials,
    train_filter_bank,
    write_filter_bank,
)
from .eeg_signal import (
    DEFAULT_FS,
    DEFAULT_WINDOW,
    read_trial,
    read_trials,
    synth_eeg,
    write_trial,
)
from .emotion import read_model as read_emotion_model
from .emotion import (
    read_sequence,
    recognize,
    synth_emotion_frames,
    train_emotion,
    write_sequence,
)
from .emotion import write_model as write_emotion_model
from .errors import CreafusionError, StageError, ValidationError
from .fusion import (
    StageTimings,
    adjust_hue,
    evaluate_catalog,
    fidelity,
    run_pipeline,
    summarize_fidelity,
)
from .imaging import read_image, resize, write_ppm
from .recurrent import TrainingConfig
from .run_config import load_run_config, parse_valence_map
from .style_classifier import StyleLabel, forward, predict, train, trial_sample
from .style_classifier import read_model as read_style_model
from .style_classifier import write_model as write_style_model
from .style_transfer import (
    DEFAULT_CONTENT_LAYERS,
    DEFAULT_STYLE_LAYERS,
    SynthesisConfig,
    read_weights,
    synthesize,
    vgg19_spec,
)

if typ.TYPE_CHECKING:
    import collections.abc as cabc

    from .csp import FilterBank
    from .eeg_signal import EegTrial
    from .imaging import ImageTensor
    from .style_classifier import SequenceSample

ENV_PREFIX = "CREAFUSION_"
EXIT_RUNTIME = 1
EXIT_USAGE = 2
IMAGE_SUFFIXES: frozenset[str] = frozenset({".ppm", ".png", ".jpg", ".jpeg", ".bmp"})
USAGE = "usage: creafusion COMMAND [OPTIONS]; run 'creafusion --help' for commands"
DEFAULT_OUT = Path("creafusion-out")

logger = logging.getLogger(__name__)

app = App()
app.help = "EEG-driven style selection and emotion-aware style transfer."
app.config = cyclopts.config.Env(ENV_PREFIX, command=False)
# Disable Cyclopts' auto-print and print the JSON result line manually instead.
app.result_action = "return_value"

Seed = typ.Annotated[int, Parameter(help="Seed for every random draw.")]
Out = typ.Annotated[Path, Parameter(help="Directory receiving the artifacts.")]
Verbose = typ.Annotated[bool, Parameter(help="Log DEBUG messages to stderr.")]
Window = typ.Annotated[int, Parameter(help="Frame length in samples.")]
Hop = typ.Annotated[
    int | None, Parameter(help="Frame hop in samples; defaults to window // 2.")
]
FeaturePath = typ.Annotated[
    str, Parameter(help="Classifier inputs: csp (needs a filter bank) or frames.")
]
TrialDirectory = typ.Annotated[
    ExistingDirectory, Parameter(help="Directory of *.eeg trials.")
]
FilterBankFile = typ.Annotated[
    ExistingFile | None, Parameter(help="Filter bank written by train-csp.")
]


def _configure_logging(*, verbose: bool) -> None:
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.WARNING,
        stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s",
        force=True,
    )


def _emit(outputs: dict[str, object], timings: StageTimings) -> str:
    """Print and return the single-line JSON result."""
    line = render_json(
        {
            "status": "ok",
            "outputs": outputs,
            "timings": timings.durations_ms | {"total_ms": timings.total_ms},
        }
    )
    print(line)
    return line


def _prepare(out: Path, *, verbose: bool) -> StageTimings:
    _configure_logging(verbose=verbose)
    out.mkdir(parents=True, exist_ok=True)
    return StageTimings()


def _split_layers(raw: str) -> tuple[str, ...]:
    return tuple(name.strip() for name in raw.split(",") if name.strip())


def _load_bank(path: Path | None) -> FilterBank | None:
    return read_filter_bank(path) if path is not None else None


def _samples(
    trials: cabc.Sequence[EegTrial],
    *,
    feature_path: str,
    bank: FilterBank | None,
    window: int,
    hop: int | None,
) -> list[SequenceSample]:
    return [
        trial_sample(
            trial, feature_path=feature_path, bank=bank, window=window, hop=hop
        )
        for trial in trials
    ]


@app.command(name="synth-eeg")
def synth_eeg_command(  # noqa: PLR0913 - one flag per knob
    *,
    seed: Seed = 0,
    out: Out = DEFAULT_OUT,
    classes: typ.Annotated[int, Parameter(help="Number of style classes.")] = 4,
    trials_per_class: typ.Annotated[
        int, Parameter(help="Trials generated for each class.")
    ] = 30,
    channels: typ.Annotated[int, Parameter(help="Electrode count N.")] = 22,
    samples: typ.Annotated[int, Parameter(help="Samples per trial P.")] = 512,
    fs: typ.Annotated[float, Parameter(help="Sampling rate in Hz.")] = DEFAULT_FS,
    verbose: Verbose = False,
) -> str:
    """Generate labelled synthetic EEG trials as ``trial_NNNN.eeg`` files."""
    timings = _prepare(out, verbose=verbose)
    with timings.stage("synth-eeg"):
        trials = synth_eeg(seed, classes, trials_per_class, channels, samples, fs)
        for index, trial in enumerate(trials):
            write_trial(out / f"trial_{index:04d}.eeg", trial)
    return _emit({"directory": str(out), "trials": len(trials)}, timings)


@app.command(name="extract-features")
def extract_features_command(  # noqa: PLR0913 - one flag per knob
    eeg: typ.Annotated[ExistingFile, Parameter(help="EEG trial file.")],
    *,
    feature_path: FeaturePath = "frames",
    filter_bank: FilterBankFile = None,
    window: Window = DEFAULT_WINDOW,
    hop: Hop = None,
    seed: Seed = 0,
    out: Out = DEFAULT_OUT,
    verbose: Verbose = False,
) -> str:
    """Write a trial's classifier feature sequence to ``features.txt``."""
    del seed
    timings = _prepare(out, verbose=verbose)
    with timings.stage("extract-features"):
        sample = trial_sample(
            read_trial(eeg),
            feature_path=feature_path,
            bank=_load_bank(filter_bank),
            window=window,
            hop=hop,
        )
        frames, dim = sample.frames.shape
        target = out / "features.txt"
        header = f"frames={frames} dim={dim}"
        write_blocks(target, header, {"features": sample.frames})
    return _emit({"features": str(target), "frames": frames, "dim": dim}, timings)


@app.command(name="train-csp")
def train_csp_command(  # noqa: PLR0913 - one flag per knob
    trials: TrialDirectory,
    *,
    train_fraction: typ.Annotated[
        float, Parameter(help="Share of each class used for training.")
    ] = 0.75,
    seed: Seed = 0,
    out: Out = DEFAULT_OUT,
    verbose: Verbose = False,
) -> str:
    """Fit the multiclass CSP filter bank on the training split."""
    timings = _prepare(out, verbose=verbose)
    with timings.stage("train-csp"):
        loaded = [trial for _, trial in read_trials(trials)]
        training, held_out = split_trials(loaded, train_fraction, seed)
        bank = train_filter_bank(training)
        target = write_filter_bank(out / "filter_bank.txt", bank)
    outputs = {
        "filter_bank": str(target),
        "pairs": len(bank.pairs),
        "rows": bank.rows,
        "train": len(training),
        "test": len(held_out),
    }
    return _emit(outputs, timings)


@app.command(name="train-style")
def train_style_command(  # noqa: PLR0913 - one flag per knob
    trials: TrialDirectory,
    *,
    filter_bank: FilterBankFile = None,
    feature_path: FeaturePath = "csp",
    epochs: typ.Annotated[int, Parameter(help="Gradient-descent epochs.")] = 500,
    learning_rate: typ.Annotated[float, Parameter(help="Descent step size.")] = 0.1,
    hidden_dim: typ.Annotated[int, Parameter(help="LSTM hidden width.")] = 32,
    train_fraction: typ.Annotated[
        float, Parameter(help="Share of each class used for training.")
    ] = 0.75,
    window: Window = DEFAULT_WINDOW,
    hop: Hop = None,
    seed: Seed = 0,
    out: Out = DEFAULT_OUT,
    verbose: Verbose = False,
) -> str:
    """Train the LSTM style classifier and report held-out accuracy."""
    timings = _prepare(out, verbose=verbose)
    with timings.stage("train-style"):
        loaded = [trial for _, trial in read_trials(trials)]
        training, held_out = split_trials(loaded, train_fraction, seed)
        options = {
            "feature_path": feature_path,
            "bank": _load_bank(filter_bank),
            "window": window,
            "hop": hop,
        }
        config = TrainingConfig(
            epochs=epochs,
            learning_rate=learning_rate,
            seed=seed,
            hidden_dim=hidden_dim,
        )
        model = train(_samples(training, **options), config)
        predictions = [predict(model, s) for s in _samples(held_out, **options)]
        accuracy = evaluate_accuracy(predictions, held_out) if held_out else None
        target = write_style_model(out / "style_model.txt", model)
    outputs = {
        "style_model": str(target),
        "final_loss": model.losses[-1] if model.losses else None,
        "test_accuracy": accuracy,
        "train": len(training),
        "test": len(held_out),
    }
    return _emit(outputs, timings)


@app.command(name="classify-style")
def classify_style_command(  # noqa: PLR0913 - one flag per knob
    eeg: typ.Annotated[ExistingFile, Parameter(help="EEG trial file.")],
    style_model: typ.Annotated[ExistingFile, Parameter(help="Classifier model file.")],
    *,
    filter_bank: FilterBankFile = None,
    feature_path: FeaturePath = "csp",
    window: Window = DEFAULT_WINDOW,
    hop: Hop = None,
    seed: Seed = 0,
    out: Out = DEFAULT_OUT,
    verbose: Verbose = False,
) -> str:
    """Classify one trial into a painting style."""
    del seed
    timings = _prepare(out, verbose=verbose)
    with timings.stage("classify-style"):
        sample = trial_sample(
            read_trial(eeg),
            feature_path=feature_path,
            bank=_load_bank(filter_bank),
            window=window,
            hop=hop,
        )
        probabilities = forward(read_style_model(style_model), sample)
        label = StyleLabel(int(np.argmax(probabilities)))
        outputs = {
            "label": int(label),
            "name": label.display_name,
            "probabilities": probabilities.tolist(),
        }
        write_json(out / "style.json", outputs)
    return _emit(outputs, timings)


@app.command(name="synth-emotion")
def synth_emotion_command(  # noqa: PLR0913 - one flag per knob
    *,
    classes: typ.Annotated[int, Parameter(help="Number of emotion classes.")] = 4,
    samples_per_class: typ.Annotated[
        int, Parameter(help="Sequences generated for each class.")
    ] = 20,
    frames: typ.Annotated[int, Parameter(help="Frames per sequence.")] = 20,
    dim: typ.Annotated[int, Parameter(help="Acoustic feature width.")] = 8,
    seed: Seed = 0,
    out: Out = DEFAULT_OUT,
    verbose: Verbose = False,
) -> str:
    """Generate burst-marked acoustic sequences as ``seq_NNNN.seq`` files."""
    timings = _prepare(out, verbose=verbose)
    with timings.stage("synth-emotion"):
        dataset = synth_emotion_frames(
            seed, classes, samples_per_class, frames=frames, dim=dim
        )
        for index, seq in enumerate(dataset):
            write_sequence(out / f"seq_{index:04d}.seq", seq)
    return _emit({"directory": str(out), "sequences": len(dataset)}, timings)


@app.command(name="train-emotion")
def train_emotion_command(  # noqa: PLR0913 - one flag per knob
    sequences: typ.Annotated[
        ExistingDirectory, Parameter(help="Directory of *.seq sequences.")
    ],
    *,
    classes: typ.Annotated[int, Parameter(help="Number of emotion classes.")] = 4,
    epochs: typ.Annotated[int, Parameter(help="Gradient-descent epochs.")] = 500,
    learning_rate: typ.Annotated[float, Parameter(help="Descent step size.")] = 0.1,
    hidden_dim: typ.Annotated[int, Parameter(help="LSTM hidden width.")] = 16,
    seed: Seed = 0,
    out: Out = DEFAULT_OUT,
    verbose: Verbose = False,
) -> str:
    """Train the attention-pooled emotion recogniser."""
    timings = _prepare(out, verbose=verbose)
    with timings.stage("train-emotion"):
        dataset = [read_sequence(path) for path in sorted(sequences.glob("*.seq"))]
        config = TrainingConfig(
            epochs=epochs,
            learning_rate=learning_rate,
            seed=seed,
            hidden_dim=hidden_dim,
        )
        model = train_emotion(dataset, config, class_count=classes)
        correct = sum(recognize(model, seq).label == seq.label for seq in dataset)
        target = write_emotion_model(out / "emotion_model.txt", model)
    outputs = {
        "emotion_model": str(target),
        "final_loss": model.losses[-1] if model.losses else None,
        "train_accuracy": correct / len(dataset) if dataset else None,
    }
    return _emit(outputs, timings)


@app.command(name="recognize-emotion")
def recognize_emotion_command(  # noqa: PLR0913 - one flag per knob
    sequence: typ.Annotated[ExistingFile, Parameter(help="Acoustic sequence file.")],
    emotion_model: typ.Annotated[ExistingFile, Parameter(help="Emotion model file.")],
    *,
    valence_map: typ.Annotated[
        str | None,
        Parameter(help="Valence per emotion id, e.g. 0:1,1:-1,2:0,3:0.5."),
    ] = None,
    seed: Seed = 0,
    out: Out = DEFAULT_OUT,
    verbose: Verbose = False,
) -> str:
    """Recognise the emotion of one sequence and report its valence."""
    del seed
    timings = _prepare(out, verbose=verbose)
    with timings.stage("recognize-emotion"):
        mapping = _parse_valence_map(valence_map) if valence_map else None
        result = recognize(
            read_emotion_model(emotion_model), read_sequence(sequence), mapping
        )
        outputs = {
            "label": result.label,
            "name": result.name,
            "probabilities": result.probabilities.tolist(),
            "valence": result.valence,
            "attention": result.attention.tolist(),
        }
        write_json(out / "emotion.json", outputs)
    return _emit(outputs, timings)


def _parse_valence_map(raw: str) -> dict[int, float]:
    try:
        return parse_valence_map(raw)
    except ValueError as exc:
        msg = f"Invalid --valence-map {raw!r} ({exc})"
        raise ValidationError(msg) from exc


@app.command(name="transfer-style")
def transfer_style_command(  # noqa: PLR0913 - one flag per knob
    content: typ.Annotated[ExistingFile, Parameter(help="Content image (the draft).")],
    style: typ.Annotated[ExistingFile, Parameter(help="Style image.")],
    *,
    alpha: typ.Annotated[float, Parameter(help="Content-loss weight.")] = 1.0,
    beta: typ.Annotated[float, Parameter(help="Style-loss weight.")] = 1000.0,
    iters: typ.Annotated[int, Parameter(help="Descent iterations.")] = 50,
    step: typ.Annotated[float, Parameter(help="Descent step size.")] = 0.05,
    base_width: typ.Annotated[
        int, Parameter(help="Channels of the first conv block.")
    ] = 8,
    net_weights: typ.Annotated[
        ExistingFile | None, Parameter(help="CBMW1 weight file for the net.")
    ] = None,
    content_layers: typ.Annotated[
        str, Parameter(help="Comma-separated content layers.")
    ] = ",".join(DEFAULT_CONTENT_LAYERS),
    style_layers: typ.Annotated[
        str, Parameter(help="Comma-separated style layers.")
    ] = ",".join(DEFAULT_STYLE_LAYERS),
    seed: Seed = 0,
    out: Out = DEFAULT_OUT,
    verbose: Verbose = False,
) -> str:
    """Render the content image in the style of the style image."""
    timings = _prepare(out, verbose=verbose)
    with timings.stage("transfer-style"):
        draft = read_image(content)
        style_image = resize(read_image(style), *draft.size)
        net = vgg19_spec(
            base_width,
            seed=seed,
            content_layers=_split_layers(content_layers),
            style_layers=_split_layers(style_layers),
            weights=read_weights(net_weights) if net_weights else None,
        )
        settings = SynthesisConfig(
            alpha=alpha, beta=beta, iters=iters, step=step, seed=seed
        )
        result = synthesize(net, draft, style_image, settings)
        target = write_ppm(out / "artwork.ppm", result.image)
    outputs = {
        "artwork": str(target),
        "digest": array_digest(result.image.pixels),
        "initial_loss": result.losses[0],
        "final_loss": result.losses[-1],
    }
    return _emit(outputs, timings)


@app.command(name="adjust-hue")
def adjust_hue_command(  # noqa: PLR0913 - one flag per knob
    image: typ.Annotated[ExistingFile, Parameter(help="Image to recolour.")],
    *,
    valence: typ.Annotated[float, Parameter(help="Valence in [-1, 1].")],
    strength: typ.Annotated[
        float, Parameter(help="Hue strength k in [0, 0.5].")
    ] = 0.1,
    seed: Seed = 0,
    out: Out = DEFAULT_OUT,
    verbose: Verbose = False,
) -> str:
    """Warm or cool an image according to a valence."""
    del seed
    timings = _prepare(out, verbose=verbose)
    with timings.stage("adjust-hue"):
        adjusted = adjust_hue(read_image(image), valence, strength)
        target = write_ppm(out / "adjusted.ppm", adjusted)
    outputs = {"image": str(target), "digest": array_digest(adjusted.pixels)}
    return _emit(outputs, timings)


def _read_goal(path: Path) -> np.ndarray:
    text = path.read_text(encoding="utf-8")
    rows = [parse_row(line, where=str(path)) for line in text.splitlines() if line]
    if len({row.size for row in rows}) > 1:
        msg = f"{path}: goal rows differ in length"
        raise ValidationError(msg)
    return np.array(rows)


def _read_images(directory: Path) -> list[ImageTensor]:
    paths = sorted(
        path for path in directory.iterdir() if path.suffix.lower() in IMAGE_SUFFIXES
    )
    return [read_image(path) for path in paths]


@app.command(name="evaluate-fidelity")
def evaluate_fidelity_command(  # noqa: PLR0913 - one flag per knob
    *,
    goal: typ.Annotated[
        list[ExistingFile] | None,
        Parameter(help="Judge-by-set 0/1 matrix files, one per test subject."),
    ] = None,
    non_machine: typ.Annotated[
        float, Parameter(help="Share of human works in each test set.")
    ] = 0.75,
    catalog: typ.Annotated[
        ExistingFile | None,
        Parameter(help="Catalog manifest for simulated judging."),
    ] = None,
    generated: typ.Annotated[
        ExistingDirectory | None, Parameter(help="Directory of generated images.")
    ] = None,
    judges: typ.Annotated[int, Parameter(help="Simulated judges.")] = 20,
    sets: typ.Annotated[int, Parameter(help="Simulated test sets.")] = 20,
    set_size: typ.Annotated[int, Parameter(help="Works per test set.")] = 4,
    seed: Seed = 0,
    out: Out = DEFAULT_OUT,
    verbose: Verbose = False,
) -> str:
    """Score fidelity from judge files or from simulated judging of a catalog."""
    timings = _prepare(out, verbose=verbose)
    with timings.stage("evaluate-fidelity"):
        if goal:
            reports = {
                path.stem: fidelity(_read_goal(path), non_machine) for path in goal
            }
            summary = summarize_fidelity(reports)
            outputs: dict[str, object] = {
                "life_like": summary.mean,
                "per_subject": summary.per_subject,
                "above_threshold": summary.above_threshold,
            }
            if len(reports) == 1:
                outputs |= next(iter(reports.values())).to_dict()
        elif catalog is not None and generated is not None:
            records = load_catalog(catalog)
            evaluation = evaluate_catalog(
                [record.image for record in records],
                _read_images(generated),
                seed=seed,
                judges=judges,
                sets=sets,
                set_size=set_size,
            )
            outputs = evaluation.report.to_dict()
            outputs["manifest"] = str(
                write_json(out / "test_sets.json", evaluation.manifest())
            )
        else:
            msg = "evaluate-fidelity needs --goal, or both --catalog and --generated"
            raise ValidationError(msg)
        write_json(out / "fidelity.json", outputs)
    return _emit(outputs, timings)


@app.command(name="pipeline")
def pipeline_command(
    config: typ.Annotated[Path, Parameter(help="key=value run configuration file.")],
    *,
    seed: typ.Annotated[
        int | None, Parameter(help="Override the configuration's seed.")
    ] = None,
    out: Out = DEFAULT_OUT,
    verbose: Verbose = False,
) -> str:
    """Run the full EEG-to-artwork pipeline described by a configuration file."""
    _configure_logging(verbose=verbose)
    run_config = load_run_config(config)
    if seed is not None:
        run_config = dc.replace(run_config, seed=seed)
    result = run_pipeline(run_config)
    out.mkdir(parents=True, exist_ok=True)
    artwork = write_ppm(out / "artwork.ppm", result.artwork)
    pre_hue = write_ppm(out / "pre_hue.ppm", result.pre_hue)
    provenance = write_json(out / "provenance.json", result.provenance)
    timings = result.timings.durations_ms | {"total_ms": result.timings.total_ms}
    write_json(out / "timings.json", timings)
    outputs = {
        "artwork": str(artwork),
        "pre_hue": str(pre_hue),
        "provenance": str(provenance),
        "artwork_digest": result.provenance["artwork_digest"],
        "style": result.provenance["style"],
        "emotion": result.provenance["emotion"],
    }
    return _emit(outputs, result.timings)


@app.command(name="version")
def version_command(
    *,
    seed: Seed = 0,
    out: Out = DEFAULT_OUT,
    verbose: Verbose = False,
) -> str:
    """Print the installed creafusion version."""
    del seed, out
    _configure_logging(verbose=verbose)
    project_root = Path(__file__).resolve().parent.parent
    return _emit({"version": project_version(project_root)}, StageTimings())


def _exit_status(exc: CreafusionError | OSError) -> int:
    cause = exc.cause if isinstance(exc, StageError) else exc
    return EXIT_USAGE if isinstance(cause, ValidationError) else EXIT_RUNTIME


def main(tokens: cabc.Sequence[str] | None = None) -> None:
    """Invoke the Cyclopts application and map failures to exit statuses."""
    try:
        app(tokens, exit_on_error=False, print_error=False)
    except cyclopts.CycloptsError as exc:
        print(f"{USAGE}\n{exc}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE) from exc
    except (CreafusionError, OSError) as exc:
        payload: dict[str, object] = {"error": str(exc)}
        if isinstance(exc, StageError):
            payload["stage"] = exc.stage
        print(render_json({"status": "error", "outputs": payload, "timings": {}}))
        print(f"creafusion: {exc}", file=sys.stderr)
        raise SystemExit(_exit_status(exc)) from exc


__all__ = [
    "adjust_hue_command",
    "app",
    "classify_style_command",
    "evaluate_fidelity_command",
    "extract_features_command",
    "main",
    "pipeline_command",
    "recognize_emotion_command",
    "synth_eeg_command",
    "synth_emotion_command",
    "train_csp_command",
    "train_emotion_command",
    "train_style_command",
    "transfer_style_command",
    "version_command",
]


if __name__ == "__main__":
    main()
