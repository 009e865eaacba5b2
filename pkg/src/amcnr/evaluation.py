"""Evaluation surfaces: accuracy vs SNR, confusion matrices, denoiser gain.

Frames with time-varying SNR are binned by the mean of their per-sample
trajectory. Infinite empirical-SNR values are capped at +60 dB before
averaging.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
import torch

from .channel import empirical_snr
from .datasets import Dataset
from .models import (
    ClassifierConfig,
    classifier_forward,
    denoise,
    infer_classifier_config,
)
from .nn import ParamStore, Role, StateError

SNR_CAP_DB = 60.0


@dataclass
class ConfusionMatrix:
    counts: np.ndarray  # (K, K); row = true class, column = predicted
    class_names: tuple[str, ...]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def accuracy(self) -> float:
        return float(np.trace(self.counts) / self.counts.sum())


def default_bin_edges(
    lo: float = -10.0, hi: float = 18.0, step: float = 2.0
) -> np.ndarray:
    """Edges covering [lo, hi] in `step`-dB bins (lo - step/2 ... hi + step/2)."""
    return np.arange(lo - step / 2, hi + step / 2 + 1e-9, step)


def _predict_all(model: ParamStore, dataset: Dataset) -> np.ndarray:
    if model.role is not Role.CLASSIFIER:
        raise StateError(f"expected a classifier store, got role {model.role}")
    cfg: ClassifierConfig = infer_classifier_config(model)
    x = np.stack(
        [np.stack([ex.noisy.i, ex.noisy.q], axis=-1) for ex in dataset.examples]
    )
    preds = []
    with torch.no_grad():
        for start in range(0, len(x), 256):
            probs, _ = classifier_forward(
                model, torch.from_numpy(x[start : start + 256]).to(model.dtype), cfg
            )
            preds.append(probs.argmax(dim=-1).numpy())
    return np.concatenate(preds)


def bin_accuracy(
    preds: np.ndarray, truth: np.ndarray, mean_snr: np.ndarray, edges: np.ndarray
) -> list[tuple[float, float, int]]:
    """Per-bin accuracy from raw predictions; empty bins omitted."""
    out = []
    for b in range(len(edges) - 1):
        mask = (mean_snr >= edges[b]) & (mean_snr < edges[b + 1])
        if not mask.any():
            continue
        center = float((edges[b] + edges[b + 1]) / 2)
        acc = float(np.mean(preds[mask] == truth[mask]))
        out.append((center, acc, int(mask.sum())))
    return out


def accuracy_vs_snr(
    model: ParamStore, testset: Dataset, bin_edges: np.ndarray | None = None
) -> list[tuple[float, float, int]]:
    """Per-SNR-bin accuracy as (bin center, accuracy, n); empty bins omitted."""
    if len(testset) == 0:
        raise ValueError("testset is empty")
    edges = np.asarray(bin_edges) if bin_edges is not None else default_bin_edges()
    preds = _predict_all(model, testset)
    truth = np.array([ex.label for ex in testset.examples])
    mean_snr = np.array([ex.trajectory.mean_db() for ex in testset.examples])
    return bin_accuracy(preds, truth, mean_snr, edges)


def confusion(
    model: ParamStore,
    testset: Dataset,
    snr_band: tuple[float, float] | None = None,
) -> ConfusionMatrix:
    """K x K confusion counts over the test frames in the given SNR band."""
    if len(testset) == 0:
        raise ValueError("testset is empty")
    mean_snr = np.array([ex.trajectory.mean_db() for ex in testset.examples])
    if snr_band is None:
        mask = np.ones(len(testset), dtype=bool)
    else:
        lo, hi = snr_band
        mask = (mean_snr >= lo) & (mean_snr < hi)
    if not mask.any():
        raise ValueError(f"no test frames in SNR band {snr_band}")
    sub = Dataset(
        testset.domain,
        testset.length,
        [ex for ex, m in zip(testset.examples, mask) if m],
    )
    preds = _predict_all(model, sub)
    truth = np.array([ex.label for ex in sub.examples])
    k = infer_classifier_config(model).n_classes
    counts = confusion_counts(preds, truth, k)
    names = sub.label_names
    if len(names) < k:
        names = names + tuple(f"class{i}" for i in range(len(names), k))
    return ConfusionMatrix(counts, names[:k])


def confusion_counts(preds: np.ndarray, truth: np.ndarray, k: int) -> np.ndarray:
    counts = np.zeros((k, k), dtype=np.int64)
    for t, p in zip(truth, preds):
        counts[t, p] += 1
    return counts


def snr_gain_of(denoise_fn, testset: Dataset) -> float:
    """SNR improvement of an arbitrary frame->frame map, capped at +60 dB."""
    if len(testset) == 0:
        raise ValueError("testset is empty")
    gains = []
    for ex in testset.examples:
        out = denoise_fn(ex.noisy)
        before = min(empirical_snr(ex.clean.frame, ex.noisy), SNR_CAP_DB)
        after = min(empirical_snr(ex.clean.frame, out), SNR_CAP_DB)
        gains.append(after - before)
    return float(np.mean(gains))


def snr_gain(denoiser: ParamStore, testset: Dataset) -> float:
    """Mean per-example SNR improvement (dB) from replacing noisy with denoised."""
    return snr_gain_of(lambda frame: denoise(denoiser, frame), testset)


def write_accuracy_csv(path, rows: list[tuple[float, float, int]]) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["snr_db", "accuracy", "n"])
        for snr, acc, n in rows:
            w.writerow([f"{snr:g}", f"{acc:.6f}", n])


def write_confusion_csv(path, cm: ConfusionMatrix) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["true\\pred"] + list(cm.class_names))
        for name, row in zip(cm.class_names, cm.counts):
            w.writerow([name] + [int(c) for c in row])


def write_stage_report_csv(path, report) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["epoch", "train_loss", "val_loss", "accuracy"])
        for e in range(len(report.train_loss)):
            acc = report.accuracy[e] if e < len(report.accuracy) else ""
            w.writerow([e, f"{report.train_loss[e]:.8g}", f"{report.val_loss[e]:.8g}", acc])
