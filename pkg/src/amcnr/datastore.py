"""Binary persistence: TNRD dataset files, TNRW checkpoints, run manifests.

All multi-byte fields are little-endian; float payloads are 32-bit.

TNRD dataset layout:
    magic "TNRD" | version u16 | domain u8 | count u32 | T u32 | flags u16
    then per frame: label u8 | seed u64 | trajectory T*f32 (dB)
                    | clean I row T*f32 | clean Q row T*f32
                    | noisy I row T*f32 | noisy Q row T*f32

TNRW checkpoint layout:
    magic "TNRW" | version u16 | role u8 | count u32
    then per tensor: name_len u16 | name utf-8 | rank u8 | dims u32 each
                     | payload f32
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from . import __version__
from .channel import SnrTrajectory
from .datasets import (
    DOMAIN_MODULATION,
    DOMAIN_PERIODIC,
    Dataset,
    Example,
    MODULATION_LABELS,
    PERIODIC_LABELS,
)
from .nn import ParamStore, Role
from .signals import CleanFrame, IQFrame

DATASET_MAGIC = b"TNRD"
CHECKPOINT_MAGIC = b"TNRW"
FORMAT_VERSION = 1

_DOMAIN_CODES = {DOMAIN_PERIODIC: 0, DOMAIN_MODULATION: 1}
_DOMAIN_NAMES = {v: k for k, v in _DOMAIN_CODES.items()}


class FormatError(Exception):
    """Malformed dataset/checkpoint file; carries the byte offset of the fault."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


def _f32_bytes(arr: np.ndarray) -> bytes:
    return np.asarray(arr, dtype="<f4").tobytes()


def write_dataset(dataset: Dataset, path) -> None:
    T = dataset.length
    buf = bytearray()
    buf += DATASET_MAGIC
    buf += struct.pack(
        "<HBIIH",
        FORMAT_VERSION,
        _DOMAIN_CODES[dataset.domain],
        len(dataset),
        T,
        0,
    )
    for ex in dataset.examples:
        buf += struct.pack("<BQ", ex.label, ex.clean.seed & 0xFFFFFFFFFFFFFFFF)
        buf += _f32_bytes(ex.trajectory.values)
        buf += _f32_bytes(ex.clean.frame.i)
        buf += _f32_bytes(ex.clean.frame.q)
        buf += _f32_bytes(ex.noisy.i)
        buf += _f32_bytes(ex.noisy.q)
    Path(path).write_bytes(bytes(buf))


def read_dataset(path) -> Dataset:
    data = Path(path).read_bytes()
    off = 0

    def take(n: int, what: str) -> bytes:
        nonlocal off
        if off + n > len(data):
            raise FormatError(f"truncated file while reading {what}", off)
        chunk = data[off : off + n]
        off += n
        return chunk

    magic = take(4, "magic")
    if magic != DATASET_MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {DATASET_MAGIC!r}", 0)
    version, domain_code, count, T, _flags = struct.unpack(
        "<HBIIH", take(13, "header")
    )
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported version {version}", 4)
    if domain_code not in _DOMAIN_NAMES:
        raise FormatError(f"unknown domain code {domain_code}", 6)
    domain = _DOMAIN_NAMES[domain_code]
    labels = PERIODIC_LABELS if domain == DOMAIN_PERIODIC else MODULATION_LABELS
    row = T * 4
    examples = []
    for _ in range(count):
        label, seed = struct.unpack("<BQ", take(9, "record header"))
        if label >= len(labels):
            raise FormatError(f"label {label} out of range", off - 9)
        traj = np.frombuffer(take(row, "trajectory"), dtype="<f4").astype(np.float64)
        ci = np.frombuffer(take(row, "clean I"), dtype="<f4").astype(np.float64)
        cq = np.frombuffer(take(row, "clean Q"), dtype="<f4").astype(np.float64)
        ni = np.frombuffer(take(row, "noisy I"), dtype="<f4").astype(np.float64)
        nq = np.frombuffer(take(row, "noisy Q"), dtype="<f4").astype(np.float64)
        bounds = np.flatnonzero(np.diff(traj)) + 1
        examples.append(
            Example(
                clean=CleanFrame(IQFrame(ci, cq), labels[label], seed=seed),
                noisy=IQFrame(ni, nq),
                trajectory=SnrTrajectory(traj, bounds),
                label=int(label),
            )
        )
    if off != len(data):
        raise FormatError(f"{len(data) - off} trailing bytes", off)
    return Dataset(domain, T, examples)


def write_checkpoint(store: ParamStore, path) -> None:
    buf = bytearray()
    buf += CHECKPOINT_MAGIC
    buf += struct.pack("<HBI", FORMAT_VERSION, store.role.value, len(store.names()))
    for name, tensor in store.items():
        encoded = name.encode("utf-8")
        buf += struct.pack("<H", len(encoded))
        buf += encoded
        dims = tuple(tensor.shape)
        buf += struct.pack("<B", len(dims))
        for d in dims:
            buf += struct.pack("<I", d)
        buf += _f32_bytes(tensor.detach().to(torch.float32).numpy())
    Path(path).write_bytes(bytes(buf))


def read_checkpoint(path) -> ParamStore:
    data = Path(path).read_bytes()
    off = 0

    def take(n: int, what: str) -> bytes:
        nonlocal off
        if off + n > len(data):
            raise FormatError(f"truncated file while reading {what}", off)
        chunk = data[off : off + n]
        off += n
        return chunk

    magic = take(4, "magic")
    if magic != CHECKPOINT_MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {CHECKPOINT_MAGIC!r}", 0)
    version, role_code, count = struct.unpack("<HBI", take(7, "header"))
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported version {version}", 4)
    try:
        role = Role(role_code)
    except ValueError:
        raise FormatError(f"unknown role code {role_code}", 6) from None
    store = ParamStore(role, torch.float32)
    for _ in range(count):
        (name_len,) = struct.unpack("<H", take(2, "name length"))
        name = take(name_len, "name").decode("utf-8")
        (rank,) = struct.unpack("<B", take(1, "rank"))
        dims = struct.unpack(f"<{rank}I", take(4 * rank, "dims"))
        numel = int(np.prod(dims)) if dims else 1
        payload = np.frombuffer(take(4 * numel, f"payload of {name}"), dtype="<f4")
        store.add(name, torch.from_numpy(payload.copy().reshape(dims)))
    if off != len(data):
        raise FormatError(f"{len(data) - off} trailing bytes", off)
    return store


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


@dataclass
class RunManifest:
    command: str
    config: dict
    inputs: dict[str, str] = field(default_factory=dict)  # path -> sha256
    outputs: list[str] = field(default_factory=list)
    tool_version: str = __version__

    def write(self, path) -> None:
        Path(path).write_text(
            json.dumps(
                {
                    "command": self.command,
                    "config": self.config,
                    "inputs": self.inputs,
                    "outputs": self.outputs,
                    "tool_version": self.tool_version,
                },
                indent=2,
                sort_keys=True,
            )
            + "\n"
        )

    @staticmethod
    def read(path) -> "RunManifest":
        d = json.loads(Path(path).read_text())
        return RunManifest(
            command=d["command"],
            config=d["config"],
            inputs=d["inputs"],
            outputs=d["outputs"],
            tool_version=d["tool_version"],
        )


def parse_config_file(path) -> dict[str, str]:
    """Plain-text key=value config; '#' starts a comment; keys use '-' or '_'."""
    out = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, value = line.split("=", 1)
        out[key.strip().replace("-", "_")] = value.strip()
    return out
