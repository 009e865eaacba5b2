"""Dataset assembly: clean frames pushed through the channel, with labels.

Each frame carries its own 64-bit seed; the clean waveform, SNR trajectory,
and noise realization are all derived from it, so a stored seed reproduces
the record exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channel import (
    IDENTITY_COEFF,
    SnrTrajectory,
    apply_channel,
    sample_trajectory,
)
from .signals import (
    CleanFrame,
    IQFrame,
    ModulationScheme,
    WaveformKind,
    random_periodic_frame,
    synthesize_mod_frame,
)

PERIODIC_LABELS = tuple(WaveformKind)
MODULATION_LABELS = tuple(ModulationScheme)

DOMAIN_PERIODIC = "periodic"
DOMAIN_MODULATION = "modulation"


@dataclass
class Example:
    """One labeled (clean, noisy) pair with its SNR trajectory."""

    clean: CleanFrame
    noisy: IQFrame
    trajectory: SnrTrajectory
    label: int  # index into the domain's label tuple


@dataclass
class Dataset:
    domain: str  # DOMAIN_PERIODIC or DOMAIN_MODULATION
    length: int  # samples per frame
    examples: list[Example] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.examples)

    @property
    def label_names(self) -> tuple[str, ...]:
        labels = PERIODIC_LABELS if self.domain == DOMAIN_PERIODIC else MODULATION_LABELS
        return tuple(m.value for m in labels)


def _sub_seeds(frame_seed: int, n: int = 3) -> np.ndarray:
    """Stable derivation of per-purpose seeds from one frame seed."""
    return np.random.SeedSequence(frame_seed).generate_state(n, dtype=np.uint64)


def make_periodic_example(
    frame_seed: int,
    length: int,
    snr_min: float,
    snr_max: float,
    max_segments: int,
) -> Example:
    s_clean, s_traj, s_noise = (int(s) for s in _sub_seeds(frame_seed))
    clean = random_periodic_frame(length, s_clean)
    clean = CleanFrame(clean.frame, clean.label, seed=frame_seed)
    traj = sample_trajectory(length, snr_min, snr_max, max_segments, s_traj)
    noisy = apply_channel(clean, IDENTITY_COEFF, traj, s_noise)
    return Example(clean, noisy.frame, traj, PERIODIC_LABELS.index(clean.label))


def make_modulation_example(
    frame_seed: int,
    scheme: ModulationScheme,
    length: int,
    sps: int,
    snr_min: float,
    snr_max: float,
    max_segments: int,
    phase: float | None = None,
) -> Example:
    s_clean, s_traj, s_noise = (int(s) for s in _sub_seeds(frame_seed))
    clean = synthesize_mod_frame(scheme, length, sps, s_clean, phase=phase)
    clean = CleanFrame(clean.frame, clean.label, seed=frame_seed)
    traj = sample_trajectory(length, snr_min, snr_max, max_segments, s_traj)
    noisy = apply_channel(clean, IDENTITY_COEFF, traj, s_noise)
    return Example(clean, noisy.frame, traj, MODULATION_LABELS.index(scheme))


def build_periodic_dataset(
    count: int,
    length: int,
    snr_min: float = -10.0,
    snr_max: float = 18.0,
    max_segments: int = 4,
    seed: int = 0,
) -> Dataset:
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = np.random.default_rng(seed)
    frame_seeds = rng.integers(0, np.iinfo(np.int64).max, size=count, dtype=np.int64)
    examples = [
        make_periodic_example(int(fs), length, snr_min, snr_max, max_segments)
        for fs in frame_seeds
    ]
    return Dataset(DOMAIN_PERIODIC, length, examples)


def build_modulation_dataset(
    schemes: tuple[ModulationScheme, ...],
    count_per_scheme: int,
    length: int,
    sps: int = 8,
    snr_min: float = -10.0,
    snr_max: float = 18.0,
    max_segments: int = 4,
    seed: int = 0,
    phase: float | None = None,
) -> Dataset:
    """Labelled modulation frames. `phase=None` draws a random carrier phase
    per frame; a fixed value models a phase-synchronized receiver."""
    if count_per_scheme < 1:
        raise ValueError("count_per_scheme must be >= 1")
    rng = np.random.default_rng(seed)
    examples = []
    for scheme in schemes:
        frame_seeds = rng.integers(
            0, np.iinfo(np.int64).max, size=count_per_scheme, dtype=np.int64
        )
        for fs in frame_seeds:
            examples.append(
                make_modulation_example(
                    int(fs), scheme, length, sps, snr_min, snr_max,
                    max_segments, phase,
                )
            )
    return Dataset(DOMAIN_MODULATION, length, examples)
