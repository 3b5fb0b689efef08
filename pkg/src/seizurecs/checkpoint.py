"""Model checkpoint container.

Layout: ``b"C2SPMODL"`` | version u8 | config length u32 LE | config text
(``key = value`` lines, UTF-8) | sections until end of file, each
``name length u16 | name | element count u64 | float64 LE values``.
"""

from __future__ import annotations

import struct
from os import PathLike
from pathlib import Path

import numpy as np

from .errors import FormatError

MODEL_MAGIC = b"C2SPMODL"
MODEL_VERSION = 1


def format_config(config: dict[str, object]) -> str:
    lines = []
    for key, value in config.items():
        text = str(value)
        if "\n" in text or "=" in key:
            raise ValueError(f"config entry {key!r} cannot be stored on one line")
        lines.append(f"{key} = {text}")
    return "\n".join(lines) + ("\n" if lines else "")


def parse_config(text: str) -> dict[str, str]:
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise FormatError(f"config line {lineno} has no '=': {line!r}")
        out[key.strip()] = value.strip()
    return out


def write_container(path: str | PathLike, config: dict[str, object], sections: dict[str, np.ndarray]) -> None:
    text = format_config(config).encode("utf-8")
    parts = [MODEL_MAGIC, struct.pack("<BI", MODEL_VERSION, len(text)), text]
    for name, values in sections.items():
        raw_name = name.encode("utf-8")
        flat = np.ascontiguousarray(values, dtype="<f8").reshape(-1)
        parts.append(struct.pack("<H", len(raw_name)) + raw_name + struct.pack("<Q", flat.size))
        parts.append(flat.tobytes())
    Path(path).write_bytes(b"".join(parts))


def read_container(path: str | PathLike) -> tuple[dict[str, str], dict[str, np.ndarray]]:
    raw = Path(path).read_bytes()
    if len(raw) < len(MODEL_MAGIC) + 5:
        raise FormatError("checkpoint shorter than its header", offset=len(raw))
    if raw[:8] != MODEL_MAGIC:
        raise FormatError(f"bad magic {raw[:8]!r}", offset=0)
    version, text_len = struct.unpack_from("<BI", raw, 8)
    if version != MODEL_VERSION:
        raise FormatError(f"unsupported checkpoint version {version}", offset=8)
    pos = 13
    if pos + text_len > len(raw):
        raise FormatError("config block truncated", offset=len(raw))
    try:
        config = parse_config(raw[pos : pos + text_len].decode("utf-8"))
    except UnicodeDecodeError:
        raise FormatError("config block is not UTF-8", offset=pos) from None
    pos += text_len
    sections: dict[str, np.ndarray] = {}
    while pos < len(raw):
        if pos + 2 > len(raw):
            raise FormatError("section header truncated", offset=pos)
        (name_len,) = struct.unpack_from("<H", raw, pos)
        if pos + 2 + name_len + 8 > len(raw):
            raise FormatError("section header truncated", offset=pos)
        name = raw[pos + 2 : pos + 2 + name_len].decode("utf-8")
        (count,) = struct.unpack_from("<Q", raw, pos + 2 + name_len)
        start = pos + 2 + name_len + 8
        end = start + 8 * count
        if end > len(raw):
            raise FormatError(f"section {name!r} truncated", offset=len(raw))
        if name in sections:
            raise FormatError(f"duplicate section {name!r}", offset=pos)
        sections[name] = np.frombuffer(raw, dtype="<f8", count=count, offset=start).astype(np.float64)
        pos = end
    return config, sections
