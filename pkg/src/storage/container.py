"""
Versioned weight-file container.

Every persisted artifact (datasets, backbones, aux blocks, adversarial
batches, detectors) uses one binary layout:

    magic "UCAN" | version u8 | meta length u32 | meta JSON (UTF-8)
    | section count u16
    | per section: name length u16, name, tensor count u32,
      tensors as (rank u8, dims u32 LE..., f32 LE payload)
    | CRC32 u32 LE over every preceding byte

Writes are atomic (temp file + rename).
"""

import json
import struct
import tempfile
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Union

import numpy as np

from src.exceptions import (
    BadMagicError,
    ChecksumError,
    ContractError,
    TruncatedFileError,
    VersionMismatchError,
)
from src.logger import get_logger

logger = get_logger(__name__)

MAGIC = b"UCAN"
FORMAT_VERSION = 1  # Increment when the layout changes

PathLike = Union[str, Path]


@dataclass
class Container:
    """In-memory form of one artifact file."""

    kind: str
    meta: Dict[str, Any] = field(default_factory=dict)
    sections: Dict[str, List[np.ndarray]] = field(default_factory=dict)

    def section(self, name: str) -> List[np.ndarray]:
        if name not in self.sections:
            raise ContractError(f"Container of kind '{self.kind}' has no section '{name}'",
                                details={"section": name, "available": sorted(self.sections)})
        return self.sections[name]

    def tensor(self, name: str, index: int = 0) -> np.ndarray:
        return self.section(name)[index]


# ============================================================
# Encoding
# ============================================================

def _encode_tensor(array: np.ndarray) -> bytes:
    array = np.asarray(array)
    if array.ndim > 255:
        raise ContractError(f"Tensor rank {array.ndim} exceeds the u8 rank field")
    header = struct.pack("<B", array.ndim) + struct.pack(f"<{array.ndim}I", *array.shape)
    payload = np.ascontiguousarray(array, dtype="<f4").tobytes()
    return header + payload


def encode(container: Container) -> bytes:
    meta = dict(container.meta)
    meta["kind"] = container.kind
    meta_bytes = json.dumps(meta, sort_keys=True, ensure_ascii=False).encode("utf-8")
    parts = [MAGIC, struct.pack("<B", FORMAT_VERSION), struct.pack("<I", len(meta_bytes)), meta_bytes,
             struct.pack("<H", len(container.sections))]
    for name, tensors in container.sections.items():
        name_bytes = name.encode("utf-8")
        parts.append(struct.pack("<H", len(name_bytes)))
        parts.append(name_bytes)
        parts.append(struct.pack("<I", len(tensors)))
        parts.extend(_encode_tensor(t) for t in tensors)
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)


# ============================================================
# Decoding
# ============================================================

class _Reader:
    """Bounds-checked cursor over the file body."""

    def __init__(self, data: bytes):
        self.data = data
        self.offset = 0

    def take(self, count: int) -> bytes:
        end = self.offset + count
        if count < 0 or end > len(self.data):
            raise TruncatedFileError("Artifact file ends early",
                                     details={"offset": self.offset, "wanted": count, "size": len(self.data)})
        chunk = self.data[self.offset:end]
        self.offset = end
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def decode(data: bytes) -> Container:
    if len(data) < len(MAGIC) or data[:len(MAGIC)] != MAGIC:
        raise BadMagicError("Not a UCAN artifact (bad magic bytes)",
                            details={"found": data[:len(MAGIC)].hex()})
    reader = _Reader(data)
    reader.take(len(MAGIC))
    (version,) = reader.unpack("<B")
    if version != FORMAT_VERSION:
        raise VersionMismatchError(f"Artifact format version {version}, expected {FORMAT_VERSION}",
                                   details={"found": version, "expected": FORMAT_VERSION})
    (meta_len,) = reader.unpack("<I")
    meta = json.loads(reader.take(meta_len).decode("utf-8"))
    (section_count,) = reader.unpack("<H")
    sections: Dict[str, List[np.ndarray]] = {}
    for _ in range(section_count):
        (name_len,) = reader.unpack("<H")
        name = reader.take(name_len).decode("utf-8")
        (tensor_count,) = reader.unpack("<I")
        tensors = []
        for _ in range(tensor_count):
            (rank,) = reader.unpack("<B")
            dims = reader.unpack(f"<{rank}I") if rank else ()
            count = int(np.prod(dims)) if rank else 1
            payload = reader.take(4 * count)
            tensors.append(np.frombuffer(payload, dtype="<f4").astype(np.float64).reshape(dims))
        sections[name] = tensors
    (stored_crc,) = reader.unpack("<I")
    body_end = reader.offset - 4
    if reader.offset != len(data):
        raise ChecksumError("Trailing bytes after checksum", details={"extra": len(data) - reader.offset})
    actual_crc = zlib.crc32(data[:body_end]) & 0xFFFFFFFF
    if actual_crc != stored_crc:
        raise ChecksumError("Artifact checksum mismatch",
                            details={"stored": stored_crc, "computed": actual_crc})
    kind = meta.pop("kind", "")
    return Container(kind=kind, meta=meta, sections=sections)


# ============================================================
# File IO
# ============================================================

def save(container: Container, path: PathLike) -> Path:
    """Write atomically: temp file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    temp = tempfile.NamedTemporaryFile(dir=path.parent, prefix=f".{path.stem}_", suffix=".tmp", delete=False)
    temp_path = Path(temp.name)
    try:
        with temp:
            temp.write(encode(container))
        temp_path.replace(path)
        logger.debug("Wrote %s artifact: %s", container.kind, path)
    except Exception:
        if temp_path.exists():
            temp_path.unlink()
        raise
    return path


def load(path: PathLike, expected_kind: str = None) -> Container:
    path = Path(path)
    container = decode(path.read_bytes())
    if expected_kind is not None and container.kind != expected_kind:
        raise ContractError(f"Artifact {path} holds '{container.kind}', expected '{expected_kind}'",
                            details={"kind": container.kind, "expected": expected_kind})
    logger.debug("Loaded %s artifact: %s", container.kind, path)
    return container


def write_json(path: PathLike, data: Any) -> Path:
    """Atomic JSON write with stable key order (sidecars, reports)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    temp = tempfile.NamedTemporaryFile("w", encoding="utf-8", dir=path.parent, prefix=f".{path.stem}_",
                                       suffix=".json.tmp", delete=False)
    temp_path = Path(temp.name)
    try:
        with temp:
            json.dump(data, temp, ensure_ascii=False, indent=2, sort_keys=True)
            temp.write("\n")
        temp_path.replace(path)
    except Exception:
        if temp_path.exists():
            temp_path.unlink()
        raise
    return path


def read_json(path: PathLike) -> Any:
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)
