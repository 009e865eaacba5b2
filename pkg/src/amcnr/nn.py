"""Differentiable kernel: GRU and dense layers, losses, Adam, gradient checks.

Layer math is written out explicitly on torch tensors (torch supplies the
reverse-mode machinery and fast CPU matmuls); parameters live in a named,
ordered ParamStore so they can be transplanted between networks and
serialized tensor by tensor.

Gate equations (Cho-style, reset gate applied inside the candidate's
hidden-to-hidden product):

    z = sigmoid(W_z x + U_z h + b_z)
    r = sigmoid(W_r x + U_r h + b_r)
    c = tanh(W_h x + U_h (r * h) + b_h)
    h' = (1 - z) * h + z * c
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
import torch


class StateError(RuntimeError):
    """Operation invoked in an invalid state (e.g. wrong network role)."""


class Role(Enum):
    """Which network a ParamStore parameterizes."""

    PRETRAIN = 0  # denoiser trained on periodic signals
    DENOISER = 1  # denoiser transferred to modulation signals
    CLASSIFIER = 2  # fused denoiser + classifier


class ParamStore:
    """Named, ordered collection of parameter tensors for one network."""

    def __init__(self, role: Role, dtype: torch.dtype = torch.float32):
        self.role = role
        self.dtype = dtype
        self._params: dict[str, torch.Tensor] = {}

    def add(self, name: str, tensor: torch.Tensor) -> torch.Tensor:
        if name in self._params:
            raise ValueError(f"duplicate parameter name: {name}")
        tensor = tensor.to(self.dtype)
        tensor.requires_grad_(True)
        self._params[name] = tensor
        return tensor

    def __getitem__(self, name: str) -> torch.Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def names(self) -> list[str]:
        return list(self._params)

    def tensors(self) -> list[torch.Tensor]:
        return list(self._params.values())

    def items(self):
        return self._params.items()

    def n_params(self) -> int:
        return sum(t.numel() for t in self._params.values())

    def set_(self, name: str, value: torch.Tensor) -> None:
        """Overwrite a parameter's data in place (shape must match)."""
        dst = self._params[name]
        if dst.shape != value.shape:
            raise ValueError(
                f"shape mismatch for {name}: {tuple(dst.shape)} vs {tuple(value.shape)}"
            )
        with torch.no_grad():
            dst.copy_(value)

    def clone(self, role: Role | None = None) -> "ParamStore":
        out = ParamStore(role if role is not None else self.role, self.dtype)
        for name, t in self._params.items():
            out.add(name, t.detach().clone())
        return out

    def to_dtype(self, dtype: torch.dtype) -> "ParamStore":
        out = ParamStore(self.role, dtype)
        for name, t in self._params.items():
            out.add(name, t.detach().to(dtype))
        return out


def glorot(
    shape: tuple[int, ...], gen: torch.Generator, dtype: torch.dtype = torch.float32
) -> torch.Tensor:
    """Glorot-uniform init for matrices; for 1-D shapes returns zeros (biases)."""
    if len(shape) == 1:
        return torch.zeros(shape, dtype=dtype)
    fan_out, fan_in = shape
    a = math.sqrt(6.0 / (fan_in + fan_out))
    return (torch.rand(shape, generator=gen, dtype=torch.float64) * 2 * a - a).to(dtype)


@dataclass
class GruLayerParams:
    """Weight view of one GRU layer. Matrices are (hidden x in)/(hidden x hidden)."""

    W_z: torch.Tensor
    W_r: torch.Tensor
    W_h: torch.Tensor
    U_z: torch.Tensor
    U_r: torch.Tensor
    U_h: torch.Tensor
    b_z: torch.Tensor
    b_r: torch.Tensor
    b_h: torch.Tensor

    @property
    def hidden(self) -> int:
        return self.W_z.shape[0]

    @property
    def input_size(self) -> int:
        return self.W_z.shape[1]


GRU_PARAM_NAMES = ("W_z", "W_r", "W_h", "U_z", "U_r", "U_h", "b_z", "b_r", "b_h")


def add_gru_layer(
    store: ParamStore, prefix: str, input_size: int, hidden: int, gen: torch.Generator
) -> None:
    for nm in ("W_z", "W_r", "W_h"):
        store.add(f"{prefix}.{nm}", glorot((hidden, input_size), gen, store.dtype))
    for nm in ("U_z", "U_r", "U_h"):
        store.add(f"{prefix}.{nm}", glorot((hidden, hidden), gen, store.dtype))
    for nm in ("b_z", "b_r", "b_h"):
        store.add(f"{prefix}.{nm}", glorot((hidden,), gen, store.dtype))


def gru_layer_view(store: ParamStore, prefix: str) -> GruLayerParams:
    return GruLayerParams(**{nm: store[f"{prefix}.{nm}"] for nm in GRU_PARAM_NAMES})


@dataclass
class DenseParams:
    W: torch.Tensor  # (out x in)
    b: torch.Tensor  # (out,)


def add_dense(
    store: ParamStore, prefix: str, input_size: int, out_size: int, gen: torch.Generator
) -> None:
    store.add(f"{prefix}.W", glorot((out_size, input_size), gen, store.dtype))
    store.add(f"{prefix}.b", glorot((out_size,), gen, store.dtype))


def dense_view(store: ParamStore, prefix: str) -> DenseParams:
    return DenseParams(W=store[f"{prefix}.W"], b=store[f"{prefix}.b"])


def gru_cell(
    p: GruLayerParams, x_t: torch.Tensor, h_prev: torch.Tensor
) -> torch.Tensor:
    """One GRU step. x_t: (..., in), h_prev: (..., hidden)."""
    if x_t.shape[-1] != p.input_size:
        raise ValueError(f"input width {x_t.shape[-1]} != {p.input_size}")
    if h_prev.shape[-1] != p.hidden:
        raise ValueError(f"hidden width {h_prev.shape[-1]} != {p.hidden}")
    z = torch.sigmoid(x_t @ p.W_z.T + h_prev @ p.U_z.T + p.b_z)
    r = torch.sigmoid(x_t @ p.W_r.T + h_prev @ p.U_r.T + p.b_r)
    c = torch.tanh(x_t @ p.W_h.T + (r * h_prev) @ p.U_h.T + p.b_h)
    return (1 - z) * h_prev + z * c


class _GruSequence(torch.autograd.Function):
    """Whole-sequence GRU with hand-rolled backprop-through-time.

    The per-timestep backward only carries the hidden-state recurrence
    (three small matmuls); input and weight gradients are accumulated as
    single large matmuls over the stacked timesteps, which is far cheaper
    than taping every cell op.
    """

    @staticmethod
    def forward(ctx, x, h0, W_z, W_r, W_h, U_z, U_r, U_h, b_z, b_r, b_h):
        B, T, _ = x.shape
        xz = x @ W_z.T + b_z
        xr = x @ W_r.T + b_r
        xh = x @ W_h.T + b_h
        h = h0
        Z, R, C, H = [], [], [], []
        for t in range(T):
            z = torch.sigmoid(xz[:, t] + h @ U_z.T)
            r = torch.sigmoid(xr[:, t] + h @ U_r.T)
            c = torch.tanh(xh[:, t] + (r * h) @ U_h.T)
            h = (1 - z) * h + z * c
            Z.append(z)
            R.append(r)
            C.append(c)
            H.append(h)
        Z = torch.stack(Z, dim=1)
        R = torch.stack(R, dim=1)
        C = torch.stack(C, dim=1)
        H = torch.stack(H, dim=1)
        Hprev = torch.cat([h0.unsqueeze(1), H[:, :-1]], dim=1)
        ctx.save_for_backward(x, Z, R, C, Hprev, W_z, W_r, W_h, U_z, U_r, U_h)
        return H

    @staticmethod
    def backward(ctx, gH):
        x, Z, R, C, Hprev, W_z, W_r, W_h, U_z, U_r, U_h = ctx.saved_tensors
        B, T, hid = Z.shape
        dZ = torch.empty_like(Z)
        dR = torch.empty_like(R)
        dC = torch.empty_like(C)
        carry = torch.zeros(B, hid, dtype=Z.dtype)
        for t in range(T - 1, -1, -1):
            z, r, c, hp = Z[:, t], R[:, t], C[:, t], Hprev[:, t]
            dh = gH[:, t] + carry
            dz = dh * (c - hp) * z * (1 - z)  # pre-activation grads
            dc = dh * z * (1 - c * c)
            drh = dc @ U_h  # grad w.r.t. r * h_prev
            dr = drh * hp * r * (1 - r)
            carry = dh * (1 - z) + drh * r + dz @ U_z + dr @ U_r
            dZ[:, t] = dz
            dR[:, t] = dr
            dC[:, t] = dc
        dX = dZ @ W_z + dR @ W_r + dC @ W_h
        xf = x.reshape(B * T, -1)
        hpf = Hprev.reshape(B * T, hid)
        rhf = (R * Hprev).reshape(B * T, hid)
        dZf = dZ.reshape(B * T, hid)
        dRf = dR.reshape(B * T, hid)
        dCf = dC.reshape(B * T, hid)
        return (
            dX,
            carry,
            dZf.T @ xf,
            dRf.T @ xf,
            dCf.T @ xf,
            dZf.T @ hpf,
            dRf.T @ hpf,
            dCf.T @ rhf,
            dZ.sum(dim=(0, 1)),
            dR.sum(dim=(0, 1)),
            dC.sum(dim=(0, 1)),
        )


def gru_sequence(
    p: GruLayerParams, inputs: torch.Tensor, h0: torch.Tensor | None = None
) -> torch.Tensor:
    """Run a GRU over a sequence. inputs: (T, in) or (B, T, in); returns all
    hidden states with the same leading layout."""
    if inputs.shape[-1] != p.input_size:
        raise ValueError(f"input width {inputs.shape[-1]} != {p.input_size}")
    batched = inputs.dim() == 3
    if not batched:
        inputs = inputs.unsqueeze(0)
    B = inputs.shape[0]
    if h0 is None:
        h0 = torch.zeros(B, p.hidden, dtype=inputs.dtype)
    else:
        if h0.shape[-1] != p.hidden:
            raise ValueError(f"h0 width {h0.shape[-1]} != hidden {p.hidden}")
        h0 = h0.expand(B, p.hidden) if h0.dim() == 1 else h0
    out = _GruSequence.apply(
        inputs, h0, p.W_z, p.W_r, p.W_h, p.U_z, p.U_r, p.U_h, p.b_z, p.b_r, p.b_h
    )
    return out if batched else out.squeeze(0)


def dense(p: DenseParams, x: torch.Tensor) -> torch.Tensor:
    """Affine map y = W x + b; x may carry leading batch/time dims."""
    if x.shape[-1] != p.W.shape[1]:
        raise ValueError(f"input width {x.shape[-1]} != {p.W.shape[1]}")
    return x @ p.W.T + p.b


def softmax(logits: torch.Tensor) -> torch.Tensor:
    """Max-subtracted stable softmax along the last dimension."""
    if not torch.all(torch.isfinite(logits)):
        raise ValueError("softmax requires finite logits")
    shifted = logits - logits.max(dim=-1, keepdim=True).values
    e = torch.exp(shifted)
    return e / e.sum(dim=-1, keepdim=True)


def mse_loss(pred: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """(1/T) sum_t [dI(t)^2 + dQ(t)^2]; averaged over any batch dimension."""
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {tuple(pred.shape)} vs {tuple(target.shape)}")
    return ((pred - target) ** 2).sum(dim=-1).mean()


def cross_entropy(probs: torch.Tensor, label: torch.Tensor | int) -> torch.Tensor:
    """-log p[label], clamped at 1e-12; averaged over any batch dimension."""
    if probs.dim() == 1:
        k = int(label)
        if not (0 <= k < probs.shape[0]):
            raise ValueError(f"label {k} out of range [0, {probs.shape[0]})")
        return -torch.log(probs[k].clamp_min(1e-12))
    labels = torch.as_tensor(label, dtype=torch.long)
    if labels.max() >= probs.shape[-1] or labels.min() < 0:
        raise ValueError("label out of range")
    picked = probs.gather(-1, labels.unsqueeze(-1)).squeeze(-1)
    return -torch.log(picked.clamp_min(1e-12)).mean()


def backward(loss: torch.Tensor, store: ParamStore) -> dict[str, torch.Tensor]:
    """Reverse-mode gradients of a scalar loss w.r.t. every store parameter."""
    if loss.grad_fn is None:
        raise StateError("backward called before a forward pass was recorded")
    grads = torch.autograd.grad(
        loss, store.tensors(), allow_unused=True, retain_graph=False
    )
    return {
        name: (g if g is not None else torch.zeros_like(t))
        for (name, t), g in zip(store.items(), grads)
    }


class AdamState:
    """First/second moment accumulators plus the step counter."""

    def __init__(self, store: ParamStore):
        self.m = {n: torch.zeros_like(t) for n, t in store.items()}
        self.v = {n: torch.zeros_like(t) for n, t in store.items()}
        self.t = 0


def adam_step(
    store: ParamStore,
    grads: dict[str, torch.Tensor],
    state: AdamState,
    lr: float,
    betas: tuple[float, float] = (0.9, 0.999),
    eps: float = 1e-8,
) -> ParamStore:
    """Standard Adam update with bias correction; mutates store in place."""
    b1, b2 = betas
    state.t += 1
    t = state.t
    with torch.no_grad():
        for name, p in store.items():
            g = grads[name]
            if g.shape != p.shape:
                raise ValueError(f"gradient shape mismatch for {name}")
            m = state.m[name]
            v = state.v[name]
            m.mul_(b1).add_(g, alpha=1 - b1)
            v.mul_(b2).addcmul_(g, g, value=1 - b2)
            m_hat = m / (1 - b1**t)
            v_hat = v / (1 - b2**t)
            p.sub_(lr * m_hat / (v_hat.sqrt() + eps))
    return store


def finite_diff_check(
    loss_fn,
    store: ParamStore,
    epsilon: float = 1e-5,
    max_coords: int = 200,
    seed: int = 0,
    analytic: dict[str, torch.Tensor] | None = None,
) -> float:
    """Central-difference check of analytic gradients; returns max relative error.

    loss_fn maps the store to a scalar loss tensor. Requires double precision
    (the check is meaningless in float32). Checks every coordinate, or a
    random subsample of max_coords when the store is larger. `analytic`
    overrides the reverse-mode gradients (used to validate the check itself).
    """
    if store.dtype != torch.float64:
        raise ValueError("finite_diff_check requires a double-precision store")
    if analytic is None:
        analytic = backward(loss_fn(store), store)
    coords = [
        (name, i) for name, t in store.items() for i in range(t.numel())
    ]
    if len(coords) > max_coords:
        rng = np.random.default_rng(seed)
        idx = rng.choice(len(coords), size=max_coords, replace=False)
        coords = [coords[i] for i in idx]
    max_rel = 0.0
    for name, i in coords:
        p = store[name]
        flat = p.detach().view(-1)
        orig = flat[i].item()
        with torch.no_grad():
            flat[i] = orig + epsilon
        lp = loss_fn(store).item()
        with torch.no_grad():
            flat[i] = orig - epsilon
        lm = loss_fn(store).item()
        with torch.no_grad():
            flat[i] = orig
        g_num = (lp - lm) / (2 * epsilon)
        g_ana = analytic[name].view(-1)[i].item()
        rel = abs(g_ana - g_num) / max(abs(g_ana), abs(g_num), 1e-8)
        max_rel = max(max_rel, rel)
    return max_rel
