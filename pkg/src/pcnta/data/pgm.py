"""
Binary PGM (P5) reader and writer, 8-bit only.
"""

from pathlib import Path

import numpy as np

from pcnta.core.tensor_ops import DTYPE, Tensor
from pcnta.errors import DataError, PgmParseError

WHITESPACE = frozenset(b" \t\n\r\v\f")
COMMENT = ord("#")


def _read_token(data: bytes, offset: int, path: str) -> tuple[bytes, int]:
    """Skip whitespace and # comments, return the next header token and the offset after it."""
    while offset < len(data):
        if data[offset] in WHITESPACE:
            offset += 1
        elif data[offset] == COMMENT:
            newline = data.find(b"\n", offset)
            offset = len(data) if newline < 0 else newline + 1
        else:
            break
    start = offset
    while offset < len(data) and data[offset] not in WHITESPACE and data[offset] != COMMENT:
        offset += 1
    if start == offset:
        raise PgmParseError(path, offset, "unexpected end of header")
    return data[start:offset], offset


def _read_int(data: bytes, offset: int, path: str, field: str) -> tuple[int, int]:
    token, end = _read_token(data, offset, path)
    if not token.isdigit():
        raise PgmParseError(path, end - len(token), f"{field} is not a decimal integer: {token[:16]!r}")
    value = int(token)
    if value <= 0:
        raise PgmParseError(path, end - len(token), f"{field} must be positive, got {value}")
    return value, end


def parse_pgm(data: bytes, path: str = "<bytes>") -> Tensor:
    """Decode P5 bytes into a 1×H×W tensor scaled to [0, 1]."""
    if data[:2] != b"P5":
        raise PgmParseError(path, 0, f"magic is {data[:2]!r}, expected b'P5'")
    if len(data) < 3 or data[2] not in WHITESPACE:
        raise PgmParseError(path, 2, "missing whitespace after magic")
    width, offset = _read_int(data, 2, path, "width")
    height, offset = _read_int(data, offset, path, "height")
    maxval, offset = _read_int(data, offset, path, "maxval")
    if maxval != 255:
        raise PgmParseError(path, offset, f"unsupported maxval {maxval}, only 255 is accepted")
    if offset >= len(data) or data[offset] not in WHITESPACE:
        raise PgmParseError(path, offset, "missing whitespace after maxval")
    offset += 1

    expected = width * height
    payload = data[offset:offset + expected]
    if len(payload) < expected:
        raise PgmParseError(path, offset + len(payload), f"truncated payload: {len(payload)} of {expected} bytes")

    pixels = np.frombuffer(payload, dtype=np.uint8).astype(DTYPE) / 255.0
    return pixels.reshape(1, height, width)


def load_pgm(path: Path | str) -> Tensor:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as e:
        raise DataError(f"cannot read {path}: {e}") from e
    return parse_pgm(data, str(path))


def encode_pgm(image: Tensor) -> bytes:
    """Encode a 1×H×W (or H×W) tensor in [0, 1] as 8-bit P5."""
    pixels = np.asarray(image)
    if pixels.ndim == 3:
        pixels = pixels[0]
    height, width = pixels.shape
    raw = np.clip(np.rint(pixels * 255.0), 0, 255).astype(np.uint8)
    return f"P5\n{width} {height}\n255\n".encode("ascii") + raw.tobytes()


def write_pgm(path: Path | str, image: Tensor) -> None:
    Path(path).write_bytes(encode_pgm(image))
