"""
Storage module - the shared versioned artifact container

This module provides:
- Container: kind tag, JSON metadata and named tensor sections
- save / load: atomic binary IO with magic, version and CRC32 checks
- write_json / read_json: sidecar and report documents
"""

from src.storage.container import (
    FORMAT_VERSION,
    MAGIC,
    Container,
    decode,
    encode,
    load,
    read_json,
    save,
    write_json,
)

__all__ = [
    "FORMAT_VERSION",
    "MAGIC",
    "Container",
    "decode",
    "encode",
    "load",
    "read_json",
    "save",
    "write_json",
]
