"""Binary PPM (P6) and PGM (P5) reading and writing, 8-bit only.

Masks are stored as P5 with 0 for off and 255 for on.
"""

from __future__ import annotations

import numpy as np

from .errors import NetpbmError
from .raster import ImageBuf, MaskBuf


def _header(data: bytes) -> tuple[bytes, list[int], int]:
    tokens: list[bytes] = []
    i = 0
    while len(tokens) < 4:
        while i < len(data) and data[i:i + 1].isspace():
            i += 1
        if i >= len(data):
            raise NetpbmError("truncated header")
        if data[i:i + 1] == b"#":
            while i < len(data) and data[i:i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        j = i
        while j < len(data) and not data[j:j + 1].isspace() and data[j:j + 1] != b"#":
            j += 1
        tokens.append(data[i:j])
        i = j
    # exactly one whitespace byte separates maxval from the raster
    i += 1
    try:
        nums = [int(t) for t in tokens[1:]]
    except ValueError:
        raise NetpbmError(f"bad header fields {tokens[1:]}") from None
    return tokens[0], nums, i


def _decode(data: bytes, magic: bytes, channels: int) -> np.ndarray:
    kind, (width, height, maxval), start = _header(data)
    if kind != magic:
        raise NetpbmError(f"expected {magic.decode()}, found {kind[:8]!r}")
    if width < 1 or height < 1:
        raise NetpbmError(f"bad size {width}x{height}")
    if not 0 < maxval < 256:
        raise NetpbmError(f"only 8-bit maxval is supported, got {maxval}")
    n = width * height * channels
    raster = data[start:start + n]
    if len(raster) != n:
        raise NetpbmError(f"expected {n} raster bytes, found {len(raster)}")
    arr = np.frombuffer(raster, np.uint8).reshape(height, width, channels)
    if maxval != 255:
        arr = np.round(arr.astype(np.float64) * 255.0 / maxval).astype(np.uint8)
    return arr


def decode_ppm(data: bytes) -> ImageBuf:
    return ImageBuf(_decode(data, b"P6", 3))


def decode_pgm(data: bytes) -> MaskBuf:
    return MaskBuf(_decode(data, b"P5", 1)[..., 0] > 127)


def encode_ppm(img: ImageBuf) -> bytes:
    return b"P6\n%d %d\n255\n" % (img.width, img.height) + img.pixels.tobytes()


def encode_pgm(mask: MaskBuf) -> bytes:
    raster = np.where(mask.bits, 255, 0).astype(np.uint8)
    return b"P5\n%d %d\n255\n" % (mask.width, mask.height) + raster.tobytes()


def read_ppm(path) -> ImageBuf:
    with open(path, "rb") as fh:
        return decode_ppm(fh.read())


def read_pgm(path) -> MaskBuf:
    with open(path, "rb") as fh:
        return decode_pgm(fh.read())


def write_ppm(path, img: ImageBuf) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_ppm(img))


def write_pgm(path, mask: MaskBuf) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_pgm(mask))


def checkerboard(width: int, height: int, cell: int = 8) -> ImageBuf:
    """A two-colour checkerboard test image (no zero pixels)."""
    y, x = np.mgrid[0:height, 0:width]
    on = ((y // cell + x // cell) % 2).astype(bool)
    px = np.where(on[..., None], np.array([200, 180, 40], np.uint8),
                  np.array([30, 90, 160], np.uint8))
    return ImageBuf(px)
