"""Test helpers for creafusion.

``build_pipeline_workspace`` writes a complete, deliberately tiny set of
pipeline inputs (trial, filter bank, style model, catalog, draft, emotion
sequence and model) plus a ``pipeline.cfg`` that ties them together.
"""

from __future__ import annotations

import typing as typ

from creafusion.catalog import write_manifest
from creafusion.csp import apply_and_featurize, train_filter_bank, write_filter_bank
from creafusion.eeg_signal import synth_eeg, write_trial
from creafusion.emotion import synth_emotion_frames, train_emotion, write_sequence
from creafusion.emotion import write_model as write_emotion_model
from creafusion.imaging import noise, write_ppm
from creafusion.recurrent import TrainingConfig
from creafusion.style_classifier import SequenceSample, train
from creafusion.style_classifier import write_model as write_style_model

if typ.TYPE_CHECKING:
    from pathlib import Path

IMAGE_SIDE = 16


def build_pipeline_workspace(root: Path, *, seed: int = 0, eeg_label: int = 2) -> Path:
    """Write pipeline inputs under ``root`` and return the configuration path."""
    models = root / "models"
    works = root / "catalog" / "works"
    models.mkdir(parents=True, exist_ok=True)
    works.mkdir(parents=True, exist_ok=True)

    trials = synth_eeg(seed, trials_per_class=4, channels=8, samples=256)
    bank = train_filter_bank(trials)
    write_filter_bank(models / "bank.txt", bank)
    samples = [
        SequenceSample(apply_and_featurize(bank, trial), label=trial.label)
        for trial in trials
    ]
    write_style_model(
        models / "style.txt",
        train(
            samples,
            TrainingConfig(epochs=300, learning_rate=0.5, hidden_dim=8, seed=seed),
        ),
    )
    recording = next(trial for trial in trials if trial.label == eeg_label)
    write_trial(root / "recording.eeg", recording)

    entries: list[dict[str, object]] = []
    for style_id in range(4):
        name = f"work_{style_id}.ppm"
        work = noise(IMAGE_SIDE, IMAGE_SIDE, seed=seed + 10 + style_id)
        write_ppm(works / name, work)
        entries.append(
            {
                "file": f"works/{name}",
                "style_id": style_id,
                "artist_id": "a01",
                "timestamp": f"2020-0{style_id + 1}-01T00:00:00",
            }
        )
    write_manifest(root / "catalog" / "manifest.json", entries)
    write_ppm(root / "draft.ppm", noise(IMAGE_SIDE, IMAGE_SIDE, seed=seed + 99))

    sequences = synth_emotion_frames(seed, samples_per_class=2, frames=6, burst=2)
    write_sequence(root / "voice.seq", sequences[0])
    write_emotion_model(
        models / "emotion.txt",
        train_emotion(sequences, TrainingConfig(epochs=3, hidden_dim=4, seed=seed)),
    )

    config = root / "pipeline.cfg"
    config.write_text(
        "\n".join(
            [
                f"seed={seed}",
                "eeg=recording.eeg",
                "filter_bank=models/bank.txt",
                "style_model=models/style.txt",
                "catalog=catalog/manifest.json",
                "draft=draft.ppm",
                "emotion_sequence=voice.seq",
                "emotion_model=models/emotion.txt",
                "iters=2",
                "base_width=2",
                f"image_size={IMAGE_SIDE}x{IMAGE_SIDE}",
            ]
        )
        + "\n",
        encoding="utf-8",
    )
    return config


__all__ = ["IMAGE_SIDE", "build_pipeline_workspace"]
