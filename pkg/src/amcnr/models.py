"""Network definitions: the GRU denoiser, the fused classifier, and the
weight transplant between them.

The denoiser is a stack of GRU layers with a per-timestep dense output head
mapping hidden states back to I/Q. The classifier reuses the denoiser stack
(transferred weights) as its front end, keeps a reconstruction head on it for
the joint loss, and adds a classification head: one GRU layer, temporal mean
pooling, and a two-layer dense readout with softmax.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .nn import (
    ParamStore,
    Role,
    StateError,
    add_dense,
    add_gru_layer,
    dense,
    dense_view,
    gru_layer_view,
    gru_sequence,
    softmax,
)
from .signals import IQFrame


@dataclass
class DenoiserConfig:
    gru_layers: int = 3
    hidden: int = 32
    input_width: int = 2
    output_width: int = 2

    def validate(self) -> None:
        if self.gru_layers < 1 or self.hidden < 1:
            raise ValueError("gru_layers and hidden must be >= 1")
        if self.input_width < 1 or self.output_width < 1:
            raise ValueError("widths must be >= 1")


@dataclass
class ClassifierConfig:
    transferred_gru_layers: int = 3
    hidden: int = 32
    input_width: int = 2
    head_gru_layers: int = 1
    head_hidden: int = 32
    dense_hidden: int = 64
    n_classes: int = 5
    reconstruction_tap: int = 3  # layer index after which the recon head branches

    def validate(self) -> None:
        if self.transferred_gru_layers < 1 or self.hidden < 1:
            raise ValueError("transferred stack must have >= 1 layer")
        if not (1 <= self.reconstruction_tap <= self.transferred_gru_layers):
            raise ValueError(
                f"reconstruction_tap must be in [1, {self.transferred_gru_layers}]"
            )
        if self.n_classes < 2:
            raise ValueError("need at least 2 classes")

    def denoiser_config(self) -> DenoiserConfig:
        return DenoiserConfig(
            gru_layers=self.transferred_gru_layers,
            hidden=self.hidden,
            input_width=self.input_width,
        )


@dataclass
class Prediction:
    probs: np.ndarray  # (K,)
    predicted_class: int  # argmax, ties broken by lowest index
    reconstruction: np.ndarray  # (T, 2)


def build_denoiser(
    cfg: DenoiserConfig,
    seed: int,
    role: Role = Role.PRETRAIN,
    dtype: torch.dtype = torch.float32,
) -> ParamStore:
    """Stacked GRU layers plus a per-timestep dense head, Glorot-initialized."""
    cfg.validate()
    if role not in (Role.PRETRAIN, Role.DENOISER):
        raise ValueError(f"denoiser role must be PRETRAIN or DENOISER, got {role}")
    gen = torch.Generator().manual_seed(seed)
    store = ParamStore(role, dtype)
    in_size = cfg.input_width
    for layer in range(cfg.gru_layers):
        add_gru_layer(store, f"gru{layer}", in_size, cfg.hidden, gen)
        in_size = cfg.hidden
    add_dense(store, "recon_head", cfg.hidden, cfg.output_width, gen)
    return store


def _stack_forward(
    store: ParamStore, x: torch.Tensor, n_layers: int
) -> list[torch.Tensor]:
    """Hidden-state sequences of each stacked GRU layer, bottom to top."""
    hs = []
    h = x
    for layer in range(n_layers):
        h = gru_sequence(gru_layer_view(store, f"gru{layer}"), h)
        hs.append(h)
    return hs


def denoiser_forward(store: ParamStore, x: torch.Tensor, n_layers: int) -> torch.Tensor:
    """x: (T, 2) or (B, T, 2) -> reconstruction of the same shape."""
    hs = _stack_forward(store, x, n_layers)
    return dense(dense_view(store, "recon_head"), hs[-1])


def denoise(store: ParamStore, noisy: IQFrame, cfg: DenoiserConfig | None = None) -> IQFrame:
    """Run the denoiser on one frame."""
    if store.role not in (Role.PRETRAIN, Role.DENOISER):
        raise StateError(f"denoise requires a denoiser store, got role {store.role}")
    cfg = cfg or infer_denoiser_config(store)
    x = torch.from_numpy(np.stack([noisy.i, noisy.q], axis=-1)).to(store.dtype)
    with torch.no_grad():
        out = denoiser_forward(store, x, cfg.gru_layers)
    out = out.to(torch.float64).numpy()
    return IQFrame(out[:, 0], out[:, 1])


def infer_denoiser_config(store: ParamStore) -> DenoiserConfig:
    n_layers = 0
    while f"gru{n_layers}.W_z" in store:
        n_layers += 1
    hidden = store["gru0.W_z"].shape[0]
    return DenoiserConfig(
        gru_layers=n_layers,
        hidden=hidden,
        input_width=store["gru0.W_z"].shape[1],
        output_width=store["recon_head.W"].shape[0],
    )


def build_classifier(
    cfg: ClassifierConfig, seed: int, dtype: torch.dtype = torch.float32
) -> ParamStore:
    """Transferred-shape GRU stack + reconstruction head + classification head."""
    cfg.validate()
    gen = torch.Generator().manual_seed(seed)
    store = ParamStore(Role.CLASSIFIER, dtype)
    in_size = cfg.input_width
    for layer in range(cfg.transferred_gru_layers):
        add_gru_layer(store, f"gru{layer}", in_size, cfg.hidden, gen)
        in_size = cfg.hidden
    add_dense(store, "recon_head", cfg.hidden, cfg.input_width, gen)
    head_in = cfg.hidden
    for layer in range(cfg.head_gru_layers):
        add_gru_layer(store, f"cls_gru{layer}", head_in, cfg.head_hidden, gen)
        head_in = cfg.head_hidden
    add_dense(store, "cls_dense1", cfg.head_hidden, cfg.dense_hidden, gen)
    add_dense(store, "cls_dense2", cfg.dense_hidden, cfg.n_classes, gen)
    return store


def classifier_forward(
    store: ParamStore, x: torch.Tensor, cfg: ClassifierConfig
) -> tuple[torch.Tensor, torch.Tensor]:
    """x: (B, T, 2) or (T, 2) -> (probs, reconstruction).

    The reconstruction head branches off the hidden states of the layer at
    cfg.reconstruction_tap; the classification head always consumes the top
    of the transferred stack.
    """
    hs = _stack_forward(store, x, cfg.transferred_gru_layers)
    recon = dense(dense_view(store, "recon_head"), hs[cfg.reconstruction_tap - 1])
    h = hs[-1]
    for layer in range(cfg.head_gru_layers):
        h = gru_sequence(gru_layer_view(store, f"cls_gru{layer}"), h)
    pooled = h.mean(dim=-2)  # temporal mean-pool
    z = torch.relu(dense(dense_view(store, "cls_dense1"), pooled))
    logits = dense(dense_view(store, "cls_dense2"), z)
    return softmax(logits), recon


def classify(
    store: ParamStore, noisy: IQFrame, cfg: ClassifierConfig | None = None
) -> Prediction:
    """Predict class probabilities and the reconstruction branch for one frame."""
    if store.role is not Role.CLASSIFIER:
        raise StateError(f"classify requires a classifier store, got role {store.role}")
    cfg = cfg or infer_classifier_config(store)
    x = torch.from_numpy(np.stack([noisy.i, noisy.q], axis=-1)).to(store.dtype)
    with torch.no_grad():
        probs, recon = classifier_forward(store, x, cfg)
    probs = probs.to(torch.float64).numpy()
    return Prediction(
        probs=probs,
        predicted_class=int(np.argmax(probs)),  # np.argmax takes the lowest tie
        reconstruction=recon.to(torch.float64).numpy(),
    )


def infer_classifier_config(store: ParamStore) -> ClassifierConfig:
    n_trans = 0
    while f"gru{n_trans}.W_z" in store:
        n_trans += 1
    n_head = 0
    while f"cls_gru{n_head}.W_z" in store:
        n_head += 1
    return ClassifierConfig(
        transferred_gru_layers=n_trans,
        hidden=store["gru0.W_z"].shape[0],
        input_width=store["gru0.W_z"].shape[1],
        head_gru_layers=n_head,
        head_hidden=store["cls_gru0.W_z"].shape[0],
        dense_hidden=store["cls_dense1.W"].shape[0],
        n_classes=store["cls_dense2.W"].shape[0],
        reconstruction_tap=n_trans,
    )


def transfer_weights(src: ParamStore, dst: ParamStore, n_layers: int) -> ParamStore:
    """Copy the first n_layers GRU layers (and the reconstruction head, when
    both stores carry one) from src into dst. Exact copy; remaining dst
    tensors are untouched."""
    names = [
        f"gru{layer}.{nm}"
        for layer in range(n_layers)
        for nm in (
            "W_z", "W_r", "W_h", "U_z", "U_r", "U_h", "b_z", "b_r", "b_h",
        )
    ]
    if "recon_head.W" in src and "recon_head.W" in dst:
        names += ["recon_head.W", "recon_head.b"]
    for name in names:
        if name not in src or name not in dst:
            raise ValueError(f"missing tensor for transfer: {name}")
        if src[name].shape != dst[name].shape:
            raise ValueError(
                f"shape mismatch for {name}: "
                f"{tuple(src[name].shape)} vs {tuple(dst[name].shape)}"
            )
        dst.set_(name, src[name].detach())
    return dst


def denoiser_param_count(cfg: DenoiserConfig) -> int:
    """Closed-form parameter count for a denoiser config."""
    total = 0
    in_size = cfg.input_width
    for _ in range(cfg.gru_layers):
        total += 3 * (cfg.hidden * in_size + cfg.hidden * cfg.hidden + cfg.hidden)
        in_size = cfg.hidden
    total += cfg.output_width * cfg.hidden + cfg.output_width
    return total
