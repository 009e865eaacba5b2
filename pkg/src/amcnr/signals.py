"""Clean signal synthesis: periodic waveforms and digitally modulated I/Q frames.

Periodic frames (sine/square/triangle/sawtooth) are the pre-training domain;
modulated frames (PSK/QAM with rectangular pulse shaping) are the target
domain. Every generated frame is normalized to unit average power,
mean_t[I(t)^2 + Q(t)^2] = 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

POWER_TOL = 1e-9


class WaveformKind(Enum):
    SINE = "sine"
    SQUARE = "square"
    TRIANGLE = "triangle"
    SAWTOOTH = "sawtooth"


class ModulationScheme(Enum):
    BPSK = "bpsk"
    QPSK = "qpsk"
    PSK8 = "8psk"
    QAM16 = "16qam"
    QAM64 = "64qam"

    @property
    def bits_per_symbol(self) -> int:
        return _BITS_PER_SYMBOL[self]


_BITS_PER_SYMBOL = {
    ModulationScheme.BPSK: 1,
    ModulationScheme.QPSK: 2,
    ModulationScheme.PSK8: 3,
    ModulationScheme.QAM16: 4,
    ModulationScheme.QAM64: 6,
}


@dataclass
class IQFrame:
    """One signal realization: in-phase and quadrature rows of equal length."""

    i: np.ndarray
    q: np.ndarray

    def __post_init__(self):
        self.i = np.asarray(self.i, dtype=np.float64)
        self.q = np.asarray(self.q, dtype=np.float64)
        if self.i.ndim != 1 or self.q.ndim != 1:
            raise ValueError("IQFrame rows must be 1-D")
        if len(self.i) != len(self.q):
            raise ValueError(
                f"I/Q length mismatch: {len(self.i)} vs {len(self.q)}"
            )
        if len(self.i) < 1:
            raise ValueError("IQFrame must contain at least one sample")
        if not (np.all(np.isfinite(self.i)) and np.all(np.isfinite(self.q))):
            raise ValueError("IQFrame entries must be finite")

    def __len__(self) -> int:
        return len(self.i)

    def as_complex(self) -> np.ndarray:
        return self.i + 1j * self.q

    def as_matrix(self) -> np.ndarray:
        """2 x T matrix, I row on top."""
        return np.stack([self.i, self.q])

    def power(self) -> float:
        return float(np.mean(self.i**2 + self.q**2))

    @staticmethod
    def from_complex(z: np.ndarray) -> "IQFrame":
        z = np.asarray(z)
        return IQFrame(z.real.copy(), z.imag.copy())


@dataclass
class CleanFrame:
    """A clean (noise-free) frame plus its label and generating seed."""

    frame: IQFrame
    label: ModulationScheme | WaveformKind
    seed: int = 0


def _normalize(i: np.ndarray, q: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    p = np.mean(i**2 + q**2)
    if p <= 0:
        raise ValueError("cannot normalize an all-zero frame")
    s = 1.0 / math.sqrt(p)
    return i * s, q * s


def _waveform(kind: WaveformKind, theta: np.ndarray) -> np.ndarray:
    if kind is WaveformKind.SINE:
        return np.sin(theta)
    if kind is WaveformKind.SQUARE:
        # +1 on the first half-cycle, -1 on the second; sine-phase aligned
        return np.where(np.mod(theta, 2 * np.pi) < np.pi, 1.0, -1.0)
    if kind is WaveformKind.TRIANGLE:
        return (2.0 / np.pi) * np.arcsin(np.sin(theta))
    if kind is WaveformKind.SAWTOOTH:
        # rising ramp -1 -> +1 each cycle
        return 2.0 * np.mod(theta / (2 * np.pi), 1.0) - 1.0
    raise ValueError(f"unknown waveform kind: {kind}")


def gen_periodic(
    kind: WaveformKind, n_periods: float, length: int, phase: float = 0.0
) -> CleanFrame:
    """Generate a periodic frame spanning `n_periods` full cycles.

    The I row holds the waveform; the Q row holds the same waveform delayed
    circularly by a quarter period (analytic-signal surrogate), so the frame
    has the same 2-row shape as a modulated I/Q frame.
    """
    if length < 8:
        raise ValueError(f"length must be >= 8, got {length}")
    if n_periods < 1:
        raise ValueError(f"n_periods must be >= 1, got {n_periods}")
    if not math.isfinite(phase):
        raise ValueError("phase must be finite")
    t = np.arange(length, dtype=np.float64)
    theta = 2 * np.pi * n_periods * t / length + phase
    i = _waveform(kind, theta)
    shift = int(round(length / (4.0 * n_periods)))
    q = np.roll(i, shift)
    i, q = _normalize(i, q)
    return CleanFrame(IQFrame(i, q), kind, seed=0)


def _gray(k: int) -> int:
    return k ^ (k >> 1)


def _qam_axis_levels(bits_per_axis: int) -> dict[int, float]:
    """Map an axis bit-group (as integer) to its Gray-coded amplitude level.

    Levels run -(m-1), ..., -1, +1, ..., +(m-1) in steps of 2; adjacent
    levels carry labels differing in exactly one bit.
    """
    m = 1 << bits_per_axis
    return {_gray(k): float(2 * k - (m - 1)) for k in range(m)}


def constellation(scheme: ModulationScheme) -> np.ndarray:
    """Gray-coded constellation, unit average power, indexed by bit-group value."""
    if scheme is ModulationScheme.BPSK:
        return np.array([1.0 + 0j, -1.0 + 0j])
    if scheme is ModulationScheme.QPSK:
        # first bit -> I axis, second bit -> Q axis; bit 0 -> +1
        pts = np.array(
            [
                1 + 1j,  # 00
                1 - 1j,  # 01
                -1 + 1j,  # 10
                -1 - 1j,  # 11
            ],
            dtype=np.complex128,
        )
        return pts / math.sqrt(2.0)
    if scheme is ModulationScheme.PSK8:
        pts = np.zeros(8, dtype=np.complex128)
        for k in range(8):
            pts[_gray(k)] = np.exp(1j * 2 * np.pi * k / 8)
        return pts
    if scheme in (ModulationScheme.QAM16, ModulationScheme.QAM64):
        bits_per_axis = scheme.bits_per_symbol // 2
        levels = _qam_axis_levels(bits_per_axis)
        m = 1 << bits_per_axis
        pts = np.zeros(m * m, dtype=np.complex128)
        for hi in range(m):
            for lo in range(m):
                pts[(hi << bits_per_axis) | lo] = levels[hi] + 1j * levels[lo]
        scale = math.sqrt(np.mean(np.abs(pts) ** 2))
        return pts / scale
    raise ValueError(f"unknown scheme: {scheme}")


def bits_to_symbols(scheme: ModulationScheme, bits: np.ndarray) -> np.ndarray:
    """Map a bit sequence to constellation points, MSB-first per symbol."""
    bits = np.asarray(bits, dtype=np.int64)
    bps = scheme.bits_per_symbol
    if len(bits) % bps != 0:
        raise ValueError(
            f"bit count {len(bits)} not divisible by bits/symbol {bps}"
        )
    groups = bits.reshape(-1, bps)
    idx = np.zeros(len(groups), dtype=np.int64)
    for b in range(bps):
        idx = (idx << 1) | groups[:, b]
    return constellation(scheme)[idx]


def synthesize_mod_frame(
    scheme: ModulationScheme,
    length: int,
    sps: int,
    seed: int,
    bits: np.ndarray | None = None,
    phase: float | None = None,
) -> CleanFrame:
    """Generate a modulated frame: seeded random bits, rectangular pulse.

    Each symbol is held for `sps` samples. A per-frame carrier phase is
    applied (drawn from the seed unless given). Output has unit average
    power.
    """
    if sps < 1:
        raise ValueError(f"sps must be >= 1, got {sps}")
    if length % sps != 0:
        raise ValueError(f"length {length} not divisible by sps {sps}")
    rng = np.random.default_rng(seed)
    n_sym = length // sps
    if bits is None:
        bits = rng.integers(0, 2, size=n_sym * scheme.bits_per_symbol)
    else:
        bits = np.asarray(bits)
        if len(bits) != n_sym * scheme.bits_per_symbol:
            raise ValueError(
                f"need {n_sym * scheme.bits_per_symbol} bits, got {len(bits)}"
            )
    if phase is None:
        phase = float(rng.uniform(0.0, 2 * np.pi))
    symbols = bits_to_symbols(scheme, bits) * np.exp(1j * phase)
    z = np.repeat(symbols, sps)
    i, q = _normalize(z.real, z.imag)
    return CleanFrame(IQFrame(i, q), scheme, seed=seed)


def random_periodic_frame(
    length: int, seed: int, kinds: tuple[WaveformKind, ...] | None = None
) -> CleanFrame:
    """Draw kind, n_periods ~ U[5,10] (real-valued), and phase from the seed."""
    kinds = kinds or tuple(WaveformKind)
    rng = np.random.default_rng(seed)
    kind = kinds[int(rng.integers(0, len(kinds)))]
    n_periods = float(rng.uniform(5.0, 10.0))
    phase = float(rng.uniform(0.0, 2 * np.pi))
    out = gen_periodic(kind, n_periods, length, phase)
    return CleanFrame(out.frame, out.label, seed=seed)
