"""Binary checkpoint container.

Layout (all little-endian)::

    magic      8 bytes  b"STGNCKPT"
    version    uint32
    header_len uint32
    header     header_len bytes, UTF-8 JSON (sorted keys):
               {"architecture": ..., "metadata": ..., "tensors": [[name, shape], ...]}
    tensors    float32 data for each header tensor, in header order
    checksum   8 bytes, BLAKE2b-64 of everything above
"""
from __future__ import annotations

import hashlib
import json
import os
import struct
import tempfile
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .models import StegoSystem

MAGIC = b"STGNCKPT"
FORMAT_VERSION = 1
_CHECKSUM_BYTES = 8


class CheckpointError(Exception):
    """Base class for checkpoint load failures."""


class CheckpointIntegrityError(CheckpointError):
    """Truncated, corrupted or non-checkpoint file."""


class CheckpointVersionError(CheckpointError):
    pass


class ArchitectureMismatchError(CheckpointError):
    pass


@dataclass
class ModelCheckpoint:
    architecture: dict
    params: "OrderedDict[str, np.ndarray]"
    buffers: "OrderedDict[str, np.ndarray]"
    metadata: dict = field(default_factory=dict)
    version: int = FORMAT_VERSION

    def tensors(self):
        yield from self.params.items()
        yield from self.buffers.items()

    def validate(self) -> None:
        """Every descriptor entry has exactly one stored tensor of the declared shape."""
        for kind, store in (("parameters", self.params), ("buffers", self.buffers)):
            declared = OrderedDict((name, tuple(shape)) for name, shape in self.architecture.get(kind, []))
            if list(declared) != list(store):
                missing = set(declared) ^ set(store)
                raise ArchitectureMismatchError(f"{kind} do not match the descriptor: {sorted(missing)[:5]}")
            for name, shape in declared.items():
                if store[name].shape != shape:
                    raise ArchitectureMismatchError(
                        f"{name}: stored shape {store[name].shape} != declared {shape}"
                    )


def checksum(data: bytes) -> bytes:
    return hashlib.blake2b(data, digest_size=_CHECKSUM_BYTES).digest()


def to_bytes(ckpt: ModelCheckpoint) -> bytes:
    ckpt.validate()
    header = {
        "architecture": ckpt.architecture,
        "metadata": ckpt.metadata,
        "tensors": [[name, list(arr.shape)] for name, arr in ckpt.tensors()],
    }
    header_raw = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    parts = [MAGIC, struct.pack("<II", ckpt.version, len(header_raw)), header_raw]
    for _, arr in ckpt.tensors():
        parts.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    body = b"".join(parts)
    return body + checksum(body)


def from_bytes(raw: bytes) -> ModelCheckpoint:
    fixed = len(MAGIC) + 8
    if len(raw) < fixed + _CHECKSUM_BYTES or raw[: len(MAGIC)] != MAGIC:
        raise CheckpointIntegrityError("not a stegonet checkpoint (bad magic or too short)")
    body, stored = raw[:-_CHECKSUM_BYTES], raw[-_CHECKSUM_BYTES:]
    if checksum(body) != stored:
        raise CheckpointIntegrityError("checksum mismatch: file is truncated or corrupted")
    version, header_len = struct.unpack_from("<II", raw, len(MAGIC))
    if version != FORMAT_VERSION:
        raise CheckpointVersionError(f"checkpoint format version {version}, this build reads {FORMAT_VERSION}")
    try:
        header = json.loads(body[fixed:fixed + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointIntegrityError(f"unreadable header: {exc}") from exc

    arch = header["architecture"]
    param_names = {name for name, _ in arch.get("parameters", [])}
    params, buffers = OrderedDict(), OrderedDict()
    offset = fixed + header_len
    for name, shape in header["tensors"]:
        count = int(np.prod(shape)) if shape else 1
        nbytes = 4 * count
        if offset + nbytes > len(body):
            raise CheckpointIntegrityError(f"tensor {name} runs past the end of the file")
        arr = np.frombuffer(body, dtype="<f4", count=count, offset=offset).reshape(shape).astype(np.float32)
        offset += nbytes
        (params if name in param_names else buffers)[name] = arr
    if offset != len(body):
        raise CheckpointIntegrityError(f"{len(body) - offset} unexpected trailing bytes")
    ckpt = ModelCheckpoint(arch, params, buffers, header["metadata"], version)
    ckpt.validate()
    return ckpt


def save_checkpoint(ckpt: ModelCheckpoint, path) -> Path:
    """Write atomically: temp file in the target directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = to_bytes(ckpt)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".ckpt.tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)
    return path


def load_checkpoint(path, image_size: Optional[int] = None, architecture: Optional[dict] = None) -> ModelCheckpoint:
    """Read and validate a checkpoint.

    ``image_size`` and ``architecture``, when given, must match what the
    checkpoint was trained with, otherwise :class:`ArchitectureMismatchError`.
    """
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    ckpt = from_bytes(raw)
    if image_size is not None and ckpt.metadata.get("image_size") != image_size:
        raise ArchitectureMismatchError(
            f"checkpoint was built for {ckpt.metadata.get('image_size')}px images, expected {image_size}px"
        )
    if architecture is not None and architecture != ckpt.architecture:
        raise ArchitectureMismatchError("checkpoint architecture differs from the expected descriptor")
    return ckpt


def checkpoint_from_system(system: StegoSystem, metadata: Optional[dict] = None) -> ModelCheckpoint:
    return ModelCheckpoint(
        architecture=system.architecture(),
        params=OrderedDict((n, p.data.astype(np.float32, copy=True)) for n, p in system.named_parameters()),
        buffers=OrderedDict((n, b.astype(np.float32, copy=True)) for n, b in system.named_buffers()),
        metadata=dict(metadata or {}),
    )


def system_from_checkpoint(ckpt: ModelCheckpoint) -> StegoSystem:
    """Rebuild a :class:`StegoSystem` in eval mode with the stored weights."""
    arch = ckpt.architecture
    alpha = float(ckpt.metadata.get("config", {}).get("alpha", 0.5))
    system = StegoSystem(alpha=alpha, seed=0, slope=float(arch.get("leaky_slope", 0.2)))
    if system.architecture() != arch:
        raise ArchitectureMismatchError("checkpoint architecture does not match this build's models")
    for name, p in system.named_parameters():
        p.data = ckpt.params[name].copy()
    for prefix, module in system.named_modules():
        for bname in list(module._buffers):
            full = f"{prefix}.{bname}" if prefix else bname
            module.register_buffer(bname, ckpt.buffers[full].copy())
    return system.eval()
