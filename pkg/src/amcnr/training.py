"""The three-stage training pipeline plus the two ablation baselines.

Stage 0 (pre-train): denoiser trained on noisy/clean periodic pairs.
Stage 1: pre-trained weights transplanted, denoiser fine-tuned on modulation
pairs. Stage 2: denoiser stack transplanted into the classifier, trained
jointly on reconstruction + classification with a decaying learning rate.

Baselines: the stage-1 denoiser trained from scratch (no pre-training), and
the classifier trained from scratch on cross-entropy alone (no transfer).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import torch

from .datasets import Dataset
from .models import (
    ClassifierConfig,
    DenoiserConfig,
    build_classifier,
    build_denoiser,
    classifier_forward,
    denoiser_forward,
    transfer_weights,
)
from .nn import AdamState, ParamStore, Role, adam_step, backward, cross_entropy, mse_loss


@dataclass
class TrainConfig:
    lr_pretrain: float = 1e-3
    lr_denoise: float = 1e-3
    lr_classify_start: float = 1e-3
    lr_classify_end: float = 1e-5
    w_recon: float = 0.1  # weight on the reconstruction term of the joint loss
    w_class: float = 0.9  # weight on the classification term
    epochs_pretrain: int = 60
    epochs_stage1: int = 60
    epochs_stage2: int = 600
    batch_size: int = 32
    seed: int = 0
    val_fraction: float = 0.2

    def __post_init__(self):
        for lr in (self.lr_pretrain, self.lr_denoise, self.lr_classify_start,
                   self.lr_classify_end):
            if lr <= 0:
                raise ValueError("learning rates must be > 0")
        if self.lr_classify_end > self.lr_classify_start:
            raise ValueError("lr_classify_end must be <= lr_classify_start")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.w_recon < 0 or self.w_class < 0:
            raise ValueError("loss weights must be >= 0")


@dataclass
class StageReport:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    accuracy: list[float] = field(default_factory=list)  # stage 2 only
    initial_val_loss: float = math.nan  # measured before the first update

    def epochs_to_threshold(self, threshold: float) -> int | None:
        """First epoch whose validation loss is <= threshold, else None."""
        for e, v in enumerate(self.val_loss):
            if v <= threshold:
                return e
        return None


def lr_schedule(epoch: int, total_epochs: int, lr_start: float, lr_end: float) -> float:
    """Log-linear decay hitting both endpoints exactly."""
    if not (0 <= epoch < total_epochs):
        raise ValueError(f"epoch {epoch} out of range [0, {total_epochs})")
    if total_epochs == 1:
        return lr_start
    frac = epoch / (total_epochs - 1)
    return lr_start * (lr_end / lr_start) ** frac


def _dataset_tensors(
    dataset: Dataset, dtype: torch.dtype = torch.float32
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """(noisy, clean, labels) as (N, T, 2), (N, T, 2), (N,) tensors."""
    if len(dataset) == 0:
        raise ValueError("dataset is empty")
    noisy = np.stack(
        [np.stack([ex.noisy.i, ex.noisy.q], axis=-1) for ex in dataset.examples]
    )
    clean = np.stack(
        [np.stack([ex.clean.frame.i, ex.clean.frame.q], axis=-1) for ex in dataset.examples]
    )
    labels = np.array([ex.label for ex in dataset.examples], dtype=np.int64)
    return (
        torch.from_numpy(noisy).to(dtype),
        torch.from_numpy(clean).to(dtype),
        torch.from_numpy(labels),
    )


def stratified_split(
    labels: np.ndarray, val_fraction: float, seed: int
) -> tuple[np.ndarray, np.ndarray]:
    """Per-class deterministic split; returns (train_idx, val_idx)."""
    rng = np.random.default_rng([seed, 0x5B117])
    train, val = [], []
    for cls in np.unique(labels):
        idx = np.flatnonzero(labels == cls)
        idx = rng.permutation(idx)
        n_val = int(round(len(idx) * val_fraction))
        val.append(idx[:n_val])
        train.append(idx[n_val:])
    train = np.sort(np.concatenate(train))
    val = np.sort(np.concatenate(val)) if val else np.array([], dtype=np.int64)
    if len(train) == 0:
        raise ValueError("empty training split")
    return train, val


def _batches(n: int, batch_size: int, rng: np.random.Generator):
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start : start + batch_size]


def _train_denoiser(
    store: ParamStore,
    dataset: Dataset,
    cfg: TrainConfig,
    lr: float,
    epochs: int,
    n_layers: int,
) -> StageReport:
    noisy, clean, labels = _dataset_tensors(dataset)
    train_idx, val_idx = stratified_split(labels.numpy(), cfg.val_fraction, cfg.seed)
    tr_n, tr_c = noisy[train_idx], clean[train_idx]
    va_n, va_c = noisy[val_idx], clean[val_idx]
    state = AdamState(store)
    report = StageReport()

    def val_loss() -> float:
        if len(va_n) == 0:
            return math.nan
        with torch.no_grad():
            return float(mse_loss(denoiser_forward(store, va_n, n_layers), va_c))

    report.initial_val_loss = val_loss()
    for epoch in range(epochs):
        rng = np.random.default_rng([cfg.seed, epoch, 0xB47C4])
        losses = []
        for batch in _batches(len(tr_n), cfg.batch_size, rng):
            pred = denoiser_forward(store, tr_n[batch], n_layers)
            loss = mse_loss(pred, tr_c[batch])
            grads = backward(loss, store)
            adam_step(store, grads, state, lr)
            losses.append(float(loss.detach()))
        report.train_loss.append(float(np.mean(losses)))
        report.val_loss.append(val_loss())
    return report


def pretrain(
    dataset: Dataset, cfg: TrainConfig, den_cfg: DenoiserConfig | None = None
) -> tuple[ParamStore, StageReport]:
    """Train the denoiser on periodic pairs (stage 0)."""
    den_cfg = den_cfg or DenoiserConfig()
    store = build_denoiser(den_cfg, cfg.seed, role=Role.PRETRAIN)
    report = _train_denoiser(
        store, dataset, cfg, cfg.lr_pretrain, cfg.epochs_pretrain, den_cfg.gru_layers
    )
    return store, report


def transfer_stage1(
    pretrained: ParamStore, dataset: Dataset, cfg: TrainConfig
) -> tuple[ParamStore, StageReport]:
    """Transplant the pre-trained denoiser and fine-tune on modulation pairs."""
    den_cfg = _denoiser_cfg_of(pretrained)
    store = build_denoiser(den_cfg, cfg.seed, role=Role.DENOISER)
    transfer_weights(pretrained, store, den_cfg.gru_layers)
    report = _train_denoiser(
        store, dataset, cfg, cfg.lr_denoise, cfg.epochs_stage1, den_cfg.gru_layers
    )
    return store, report


def train_baseline_nr_scratch(
    dataset: Dataset, cfg: TrainConfig, den_cfg: DenoiserConfig | None = None
) -> tuple[ParamStore, StageReport]:
    """Stage-1 ablation: same denoiser training with a fresh initialization."""
    den_cfg = den_cfg or DenoiserConfig()
    store = build_denoiser(den_cfg, cfg.seed, role=Role.DENOISER)
    report = _train_denoiser(
        store, dataset, cfg, cfg.lr_denoise, cfg.epochs_stage1, den_cfg.gru_layers
    )
    return store, report


def _denoiser_cfg_of(store: ParamStore) -> DenoiserConfig:
    from .models import infer_denoiser_config

    return infer_denoiser_config(store)


def _train_classifier(
    store: ParamStore,
    cls_cfg: ClassifierConfig,
    dataset: Dataset,
    cfg: TrainConfig,
    w_recon: float,
    w_class: float,
    epochs: int,
) -> StageReport:
    noisy, clean, labels = _dataset_tensors(dataset)
    if int(labels.max()) >= cls_cfg.n_classes or int(labels.min()) < 0:
        raise ValueError(
            f"label outside [0, {cls_cfg.n_classes}): {int(labels.max())}"
        )
    train_idx, val_idx = stratified_split(labels.numpy(), cfg.val_fraction, cfg.seed)
    tr_n, tr_c, tr_y = noisy[train_idx], clean[train_idx], labels[train_idx]
    va_n, va_c, va_y = noisy[val_idx], clean[val_idx], labels[val_idx]
    state = AdamState(store)
    report = StageReport()
    k = cls_cfg.n_classes

    def joint_loss(probs, recon, c, y):
        # joint objective: the CE term is scaled by 1/K
        loss = torch.zeros((), dtype=probs.dtype)
        if w_recon != 0.0:
            loss = loss + w_recon * mse_loss(recon, c)
        if w_class != 0.0:
            loss = loss + (w_class / k) * cross_entropy(probs, y)
        return loss

    def validate() -> tuple[float, float]:
        if len(va_n) == 0:
            return math.nan, math.nan
        with torch.no_grad():
            probs, recon = classifier_forward(store, va_n, cls_cfg)
            loss = float(joint_loss(probs, recon, va_c, va_y))
            acc = float((probs.argmax(dim=-1) == va_y).to(torch.float64).mean())
        return loss, acc

    report.initial_val_loss = validate()[0]
    for epoch in range(epochs):
        lr = lr_schedule(epoch, epochs, cfg.lr_classify_start, cfg.lr_classify_end)
        rng = np.random.default_rng([cfg.seed, epoch, 0xC1A55])
        losses = []
        for batch in _batches(len(tr_n), cfg.batch_size, rng):
            probs, recon = classifier_forward(store, tr_n[batch], cls_cfg)
            loss = joint_loss(probs, recon, tr_c[batch], tr_y[batch])
            grads = backward(loss, store)
            adam_step(store, grads, state, lr)
            losses.append(float(loss.detach()))
        vloss, vacc = validate()
        report.train_loss.append(float(np.mean(losses)))
        report.val_loss.append(vloss)
        report.accuracy.append(vacc)
    return report


def transfer_stage2(
    denoiser: ParamStore,
    dataset: Dataset,
    cfg: TrainConfig,
    cls_cfg: ClassifierConfig | None = None,
) -> tuple[ParamStore, StageReport]:
    """Build the classifier, transplant the denoiser stack, train jointly."""
    den_cfg = _denoiser_cfg_of(denoiser)
    cls_cfg = cls_cfg or ClassifierConfig(
        transferred_gru_layers=den_cfg.gru_layers,
        hidden=den_cfg.hidden,
        input_width=den_cfg.input_width,
        reconstruction_tap=den_cfg.gru_layers,
    )
    store = build_classifier(cls_cfg, cfg.seed)
    transfer_weights(denoiser, store, cls_cfg.transferred_gru_layers)
    report = _train_classifier(
        store, cls_cfg, dataset, cfg, cfg.w_recon, cfg.w_class, cfg.epochs_stage2
    )
    return store, report


def train_baseline_amc(
    dataset: Dataset, cfg: TrainConfig, cls_cfg: ClassifierConfig | None = None
) -> tuple[ParamStore, StageReport]:
    """Stage-2 ablation: classifier from scratch, pure cross-entropy loss."""
    cls_cfg = cls_cfg or ClassifierConfig()
    store = build_classifier(cls_cfg, cfg.seed)
    report = _train_classifier(
        store, cls_cfg, dataset, cfg, w_recon=0.0, w_class=1.0,
        epochs=cfg.epochs_stage2,
    )
    return store, report
