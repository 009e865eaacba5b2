"""Channel model: complex coefficient plus AWGN with time-varying SNR.

The received frame is y(t) = h(t) x(t) + n(t) with h(t) = alpha e^{j(omega t
+ phi)} and n(t) circular complex Gaussian. SNR varies within a frame as a
piecewise-constant trajectory; clean frames are unit power, so the per-sample
noise variance is sigma^2(t) = 10^(-SNR_dB(t)/10), split evenly over I and Q.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .signals import CleanFrame, IQFrame


@dataclass
class ChannelCoefficient:
    """Per-sample multiplicative channel term alpha * e^{j(omega*t + phi)}."""

    alpha: float = 1.0  # gain
    omega: float = 0.0  # frequency shift, radians/sample
    phi: float = 0.0  # phase shift, radians

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"alpha must be > 0, got {self.alpha}")

    @property
    def is_identity(self) -> bool:
        return self.alpha == 1.0 and self.omega == 0.0 and self.phi == 0.0


IDENTITY_COEFF = ChannelCoefficient()


@dataclass
class SnrTrajectory:
    """Per-sample SNR in dB, piecewise-constant over segments."""

    values: np.ndarray  # length T, dB
    boundaries: np.ndarray = field(default_factory=lambda: np.array([], dtype=np.int64))

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.boundaries = np.asarray(self.boundaries, dtype=np.int64)

    def __len__(self) -> int:
        return len(self.values)

    def mean_db(self) -> float:
        return float(np.mean(self.values))

    @staticmethod
    def constant(length: int, snr_db: float) -> "SnrTrajectory":
        return SnrTrajectory(np.full(length, float(snr_db)))


@dataclass
class NoisyFrame:
    """Received frame, its SNR trajectory, and the clean frame it came from."""

    frame: IQFrame
    trajectory: SnrTrajectory
    source: CleanFrame

    def __post_init__(self):
        if len(self.frame) != len(self.source.frame):
            raise ValueError("noisy/clean length mismatch")
        if len(self.trajectory) != len(self.frame):
            raise ValueError("trajectory length mismatch")


def sample_trajectory(
    length: int, snr_min: float, snr_max: float, max_segments: int, seed: int
) -> SnrTrajectory:
    """Draw a piecewise-constant SNR trajectory.

    Segment count is uniform on [1, max_segments]; each segment's SNR is
    uniform on [snr_min, snr_max]; interior boundaries are drawn uniformly
    without replacement.
    """
    if snr_min > snr_max:
        raise ValueError(f"snr_min {snr_min} > snr_max {snr_max}")
    if not (1 <= max_segments <= length):
        raise ValueError(f"max_segments must be in [1, {length}], got {max_segments}")
    rng = np.random.default_rng(seed)
    n_seg = int(rng.integers(1, max_segments + 1))
    n_seg = min(n_seg, length)
    bounds = np.sort(rng.choice(np.arange(1, length), size=n_seg - 1, replace=False))
    levels = rng.uniform(snr_min, snr_max, size=n_seg)
    values = np.empty(length, dtype=np.float64)
    edges = np.concatenate([[0], bounds, [length]])
    for k in range(n_seg):
        values[edges[k] : edges[k + 1]] = levels[k]
    return SnrTrajectory(values, bounds)


def apply_channel(
    clean: CleanFrame,
    coeff: ChannelCoefficient,
    traj: SnrTrajectory,
    seed: int,
) -> NoisyFrame:
    """Apply the multiplicative coefficient and add per-sample AWGN."""
    frame = clean.frame
    T = len(frame)
    if len(traj) != T:
        raise ValueError(f"trajectory length {len(traj)} != frame length {T}")
    t = np.arange(T, dtype=np.float64)
    h = coeff.alpha * np.exp(1j * (coeff.omega * t + coeff.phi))
    s = frame.as_complex() * h
    rng = np.random.default_rng(seed)
    sigma2 = np.power(10.0, -traj.values / 10.0)  # P_sig = 1 by construction
    std = np.sqrt(sigma2 / 2.0)
    noise = std * rng.standard_normal(T) + 1j * std * rng.standard_normal(T)
    y = s + noise
    return NoisyFrame(IQFrame.from_complex(y), traj, clean)


def empirical_snr(clean: IQFrame, noisy: IQFrame) -> float:
    """Measured SNR in dB: clean power over residual (noisy - clean) power."""
    if len(clean) != len(noisy):
        raise ValueError("frame length mismatch")
    p_sig = np.sum(clean.i**2 + clean.q**2)
    di = noisy.i - clean.i
    dq = noisy.q - clean.q
    p_res = np.sum(di**2 + dq**2)
    if p_res == 0.0:
        return float("inf")
    return float(10.0 * np.log10(p_sig / p_res))
