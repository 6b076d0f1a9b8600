"""Deterministic stand-ins for the model tools.

Every output is a function of the tool name, the textual inputs, the input
buffer sizes and the seed, so repeated runs are bit-identical. The pixels
carry no meaning; they only need to have the right types and shapes.
"""

from __future__ import annotations

import hashlib
from typing import Any, Callable, Mapping

import numpy as np

from .errors import BackendError, MockUnsupportedTool
from .raster import ImageBuf, MaskBuf
from .registry import ToolSpec

Rule = Callable[[ToolSpec, Mapping[str, Any], "np.random.Generator", str], dict]


def mock_digest(tool: str, inputs: Mapping[str, Any], seed: int) -> str:
    parts = [tool, str(seed)]
    for key in sorted(inputs):
        v = inputs[key]
        if isinstance(v, str):
            parts.append(f"{key}=s:{v}")
        elif isinstance(v, (int, float)):
            parts.append(f"{key}=f:{float(v)!r}")
        elif isinstance(v, (ImageBuf, MaskBuf)):
            parts.append(f"{key}={type(v).__name__}:{v.width}x{v.height}")
        else:
            parts.append(f"{key}=null")
    return hashlib.sha256("\x1f".join(parts).encode("utf-8")).hexdigest()


def _rng(digest: str) -> np.random.Generator:
    return np.random.default_rng(int(digest[:16], 16))


def _image(inputs: Mapping[str, Any], slot: str = "image") -> ImageBuf:
    img = inputs.get(slot)
    if not isinstance(img, ImageBuf):
        raise BackendError(f"input {slot!r} must be an image")
    return img


def _rect(rng: np.random.Generator, width: int, height: int) -> MaskBuf:
    h = int(rng.integers(max(1, height // 4), max(1, height // 2) + 1))
    w = int(rng.integers(max(1, width // 4), max(1, width // 2) + 1))
    top = int(rng.integers(0, height - h + 1))
    left = int(rng.integers(0, width - w + 1))
    return MaskBuf.rect(width, height, top, left, h, w)


def _rect_inside(rng: np.random.Generator, region: MaskBuf) -> MaskBuf:
    """Largest-ish rectangle grown from a random set pixel, contained in ``region``."""
    ys, xs = np.nonzero(region.bits)
    if len(ys) == 0:
        raise BackendError("constraining mask is empty")
    k = int(rng.integers(0, len(ys)))
    top, left = int(ys[k]), int(xs[k])
    target_h = max(1, region.height // 4)
    target_w = max(1, region.width // 4)
    bits = region.bits
    h = w = 1
    while w < target_w and left + w < region.width and bits[top:top + h, left + w].all():
        w += 1
    while h < target_h and top + h < region.height and bits[top + h, left:left + w].all():
        h += 1
    return MaskBuf.rect(region.width, region.height, top, left, h, w)


def _cutout(img: ImageBuf, mask: MaskBuf) -> ImageBuf:
    return ImageBuf(np.where(mask.bits[..., None], img.pixels, 0))


def _color(digest: str) -> np.ndarray:
    rgb = bytes.fromhex(digest[16:22])
    return np.array([max(1, c) for c in rgb], np.uint8)


def _region(img: ImageBuf, mask: Any) -> np.ndarray:
    if mask is None:
        return np.ones(img.shape, bool)
    if not isinstance(mask, MaskBuf):
        raise BackendError("mask input must be a mask")
    if mask.shape != img.shape:
        raise BackendError(f"mask {mask.width}x{mask.height} does not fit image "
                           f"{img.width}x{img.height}")
    return mask.bits


def _segment(spec, inputs, rng, digest):
    img = _image(inputs)
    mask = _rect(rng, img.width, img.height)
    return {"mask": mask, "image": _cutout(img, mask)}


def _add_pred(spec, inputs, rng, digest):
    img = _image(inputs)
    region = inputs.get("mask")
    if region is None:
        return {"mask": _rect(rng, img.width, img.height)}
    if region.shape != img.shape:
        raise BackendError("ADD-PRED mask does not fit the image")
    return {"mask": _rect_inside(rng, region)}


def _cap_pred(spec, inputs, rng, digest):
    img = _image(inputs)
    caption = f"a synthetic scene {digest[:8]}"
    sides = [inputs.get(k) for k in ("left_ratio", "right_ratio", "top_ratio", "bottom_ratio")]
    if all(s is None for s in sides):
        return {"caption": caption, "image": None, "mask": None}
    if any(s is None for s in sides) or any(s < 0 for s in sides):
        raise BackendError(f"expansion ratios must all be set and >= 0, got {sides}")
    left, right, top, bottom = sides
    w, h = img.width, img.height
    dl, dr = int(round(left * w)), int(round(right * w))
    dt, db = int(round(top * h)), int(round(bottom * h))
    canvas = np.zeros((h + dt + db, w + dl + dr, 3), np.uint8)
    canvas[dt:dt + h, dl:dl + w] = img.pixels
    new_area = np.ones(canvas.shape[:2], bool)
    new_area[dt:dt + h, dl:dl + w] = False
    return {"caption": caption, "image": ImageBuf(canvas), "mask": MaskBuf(new_area)}


def _fast_inpaint(spec, inputs, rng, digest):
    img = _image(inputs)
    region = _region(img, inputs.get("mask"))
    outside = img.pixels[~region]
    src = outside if len(outside) else img.pixels.reshape(-1, 3)
    mean = np.round(src.mean(axis=0)).astype(np.uint8)
    out = np.where(region[..., None], mean, img.pixels)
    score = round(float(region.mean()), 3)
    return {"image": ImageBuf(out), "score": score}


def _recolor(spec, inputs, rng, digest):
    img = _image(inputs)
    region = _region(img, inputs.get("mask"))
    out = np.where(region[..., None], _color(digest), img.pixels)
    return {"image": ImageBuf(out)}


DEFAULT_RULES: dict[str, Rule] = {
    "RES": _segment,
    "SOS": _segment,
    "ADD-PRED": _add_pred,
    "CAP-PRED": _cap_pred,
    "FASTINPAINT": _fast_inpaint,
    **{name: _recolor for name in ("FILL", "INPAINT", "RCM", "STYLE", "ENV", "POSE", "CBG")},
}


def recolor_rule(spec, inputs, rng, digest) -> dict:
    """Paint the masked region (or the whole image) with a digest-derived colour.

    Exposed so new editing tools can reuse it in :class:`MockBackend`.
    """
    return _recolor(spec, inputs, rng, digest)


class MockBackend:
    """Backend answering every default model tool with synthetic outputs.

    ``extra_rules`` adds or overrides tools by canonical name.
    """

    concurrency_safe = True

    def __init__(self, extra_rules: Mapping[str, Rule] | None = None):
        self.rules = {**DEFAULT_RULES, **(extra_rules or {})}

    def invoke(self, tool: ToolSpec, inputs: Mapping[str, Any], seed: int) -> dict:
        rule = self.rules.get(tool.canonical_name)
        if rule is None:
            raise MockUnsupportedTool(f"no mock rule for {tool.canonical_name}")
        digest = mock_digest(tool.canonical_name, inputs, seed)
        return rule(tool, inputs, _rng(digest), digest)


def mock_backend_invoke(tool: ToolSpec, inputs: Mapping[str, Any], seed: int) -> dict:
    return MockBackend().invoke(tool, inputs, seed)
