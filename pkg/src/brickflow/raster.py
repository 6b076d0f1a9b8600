"""Raster buffers and the four engine-side tools: INVERSE, COMPOSE, RESIZE, BBOX.

Images are ``uint8`` arrays of shape ``(height, width, 3)``; masks are boolean
arrays of shape ``(height, width)``. An all-zero image pixel counts as
transparent, which is how segmentation outputs mark their background.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, EmptyMask, EmptyValidRegion, KindViolation, NonPositiveRatio


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class ImageBuf:
    pixels: np.ndarray

    def __post_init__(self) -> None:
        px = np.asarray(self.pixels)
        if px.ndim != 3 or px.shape[2] != 3 or px.shape[0] < 1 or px.shape[1] < 1:
            raise ValueError(f"image pixels must have shape (h, w, 3), got {px.shape}")
        object.__setattr__(self, "pixels", _frozen(px.astype(np.uint8, copy=True)))

    @classmethod
    def blank(cls, width: int, height: int, color=(0, 0, 0)) -> "ImageBuf":
        px = np.empty((height, width, 3), np.uint8)
        px[:] = color
        return cls(px)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.pixels.shape[:2]

    def valid_region(self) -> np.ndarray:
        return self.pixels.any(axis=2)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, ImageBuf) and np.array_equal(self.pixels, other.pixels)

    def __repr__(self) -> str:
        return f"ImageBuf({self.width}x{self.height})"


@dataclass(frozen=True, eq=False)
class MaskBuf:
    bits: np.ndarray

    def __post_init__(self) -> None:
        b = np.asarray(self.bits)
        if b.ndim != 2 or b.shape[0] < 1 or b.shape[1] < 1:
            raise ValueError(f"mask bits must have shape (h, w), got {b.shape}")
        object.__setattr__(self, "bits", _frozen(b.astype(bool, copy=True)))

    @classmethod
    def zeros(cls, width: int, height: int) -> "MaskBuf":
        return cls(np.zeros((height, width), bool))

    @classmethod
    def rect(cls, width: int, height: int, top: int, left: int, h: int, w: int) -> "MaskBuf":
        b = np.zeros((height, width), bool)
        b[top:top + h, left:left + w] = True
        return cls(b)

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.bits.shape

    def count(self) -> int:
        return int(self.bits.sum())

    def __eq__(self, other: object) -> bool:
        return isinstance(other, MaskBuf) and np.array_equal(self.bits, other.bits)

    def __repr__(self) -> str:
        return f"MaskBuf({self.width}x{self.height}, {self.count()} set)"


def _same_shape(*bufs) -> None:
    shapes = {b.shape for b in bufs if b is not None}
    if len(shapes) > 1:
        raise DimensionMismatch(f"buffer sizes differ: {sorted(shapes)}")


def _which_kind(masks, images) -> str:
    has_m = any(m is not None for m in masks)
    has_i = any(i is not None for i in images)
    if has_m == has_i:
        raise KindViolation("exactly one of the mask pair or the image pair must be given")
    return "mask" if has_m else "image"


def op_inverse(mask1=None, mask2=None, image1=None, image2=None):
    """``mask1 AND NOT mask2`` (null mask1 = full mask) or ``max(0, image1 - image2)``.

    Returns ``(mask, image)`` with exactly one side set.
    """
    if _which_kind((mask1, mask2), (image1, image2)) == "mask":
        _same_shape(mask1, mask2)
        if mask2 is None:
            return MaskBuf(mask1.bits), None
        base = np.ones(mask2.shape, bool) if mask1 is None else mask1.bits
        return MaskBuf(base & ~mask2.bits), None
    if image1 is None or image2 is None:
        raise KindViolation("INVERSE on images needs both image1 and image2")
    _same_shape(image1, image2)
    diff = image1.pixels.astype(np.int16) - image2.pixels.astype(np.int16)
    return None, ImageBuf(np.clip(diff, 0, 255))


def op_compose(mask1=None, mask2=None, image1=None, image2=None):
    """Overlay the second input on the first; returns ``(mask, image)``."""
    if _which_kind((mask1, mask2), (image1, image2)) == "mask":
        _same_shape(mask1, mask2)
        shape = (mask1 if mask1 is not None else mask2).shape
        a = mask1.bits if mask1 is not None else np.zeros(shape, bool)
        b = mask2.bits if mask2 is not None else np.zeros(shape, bool)
        return MaskBuf(a | b), None
    _same_shape(image1, image2)
    if image2 is None:
        return None, ImageBuf(image1.pixels)
    if image1 is None:
        return None, ImageBuf(image2.pixels)
    cover = image2.valid_region()[..., None]
    return None, ImageBuf(np.where(cover, image2.pixels, image1.pixels))


def _round_half_up(x: np.ndarray) -> np.ndarray:
    return np.floor(x + 0.5).astype(np.int64)


def op_resize(mask=None, image=None, ratio: float = 1.0):
    """Scale the valid region by ``ratio`` about its centroid on the same canvas.

    Nearest-neighbour sampling; whatever leaves the canvas is cropped and
    the vacated area is zero.
    """
    if (mask is None) == (image is None):
        raise KindViolation("RESIZE takes exactly one of mask or image")
    if not math.isfinite(ratio) or ratio <= 0:
        raise NonPositiveRatio(f"ratio must be positive, got {ratio}")
    valid = mask.bits if mask is not None else image.valid_region()
    if not valid.any():
        raise EmptyValidRegion("nothing to resize: the valid region is empty")
    h, w = valid.shape
    ys, xs = np.nonzero(valid)
    cy, cx = ys.mean(), xs.mean()
    with np.errstate(over="ignore"):
        fy = cy + (np.arange(h) - cy) / ratio
        fx = cx + (np.arange(w) - cx) / ratio
    in_y = (fy >= -0.5) & (fy < h - 0.5)
    in_x = (fx >= -0.5) & (fx < w - 0.5)
    sy_c = np.clip(_round_half_up(np.clip(fy, -1, h)), 0, h - 1)
    sx_c = np.clip(_round_half_up(np.clip(fx, -1, w)), 0, w - 1)
    keep = in_y[:, None] & in_x[None, :]
    take = valid[np.ix_(sy_c, sx_c)] & keep
    if mask is not None:
        return MaskBuf(take), None
    src = image.pixels[np.ix_(sy_c, sx_c)]
    return None, ImageBuf(np.where(take[..., None], src, 0))


def op_bbox(mask: MaskBuf) -> MaskBuf:
    if mask is None:
        raise KindViolation("BBOX needs a mask")
    if not mask.bits.any():
        raise EmptyMask("BBOX of an empty mask")
    ys, xs = np.nonzero(mask.bits)
    out = np.zeros(mask.shape, bool)
    out[ys.min():ys.max() + 1, xs.min():xs.max() + 1] = True
    return MaskBuf(out)
