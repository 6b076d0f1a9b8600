import numpy as np
import pytest

from brickflow.errors import (
    DimensionMismatch,
    EmptyMask,
    EmptyValidRegion,
    KindViolation,
    NetpbmError,
    NonPositiveRatio,
)
from brickflow.netpbm import (
    checkerboard,
    decode_pgm,
    decode_ppm,
    encode_pgm,
    encode_ppm,
    read_ppm,
    write_ppm,
)
from brickflow.raster import ImageBuf, MaskBuf, op_bbox, op_compose, op_inverse, op_resize

CASES = 500


def rand_mask(rng, p=None):
    return MaskBuf(rng.random((16, 16)) < (rng.random() if p is None else p))


def rand_image(rng):
    px = rng.integers(0, 256, (16, 16, 3))
    px[rng.random((16, 16)) < 0.3] = 0
    return ImageBuf(px)


def test_inverse_complement():
    m = MaskBuf.rect(8, 8, 2, 2, 3, 3)
    out, img = op_inverse(None, m)
    assert img is None and np.array_equal(out.bits, ~m.bits)


def test_inverse_self_annihilates():
    m = MaskBuf.rect(8, 8, 1, 1, 4, 4)
    assert op_inverse(m, m)[0].count() == 0


def test_inverse_images_subtract():
    a = ImageBuf.blank(2, 2, (100, 50, 10))
    b = ImageBuf.blank(2, 2, (30, 80, 10))
    _, out = op_inverse(image1=a, image2=b)
    assert out.pixels[0, 0].tolist() == [70, 0, 0]


def test_inverse_kind_rules():
    m = MaskBuf.zeros(4, 4)
    with pytest.raises(KindViolation):
        op_inverse(m, None, ImageBuf.blank(4, 4), None)
    with pytest.raises(KindViolation):
        op_inverse()
    with pytest.raises(DimensionMismatch):
        op_inverse(m, MaskBuf.zeros(5, 4))


def test_compose_union_identity():
    m = MaskBuf.rect(8, 8, 0, 0, 2, 5)
    assert op_compose(MaskBuf.zeros(8, 8), m)[0] == m
    assert op_compose(m, m)[0] == m


def test_compose_images_second_wins_where_opaque():
    a = ImageBuf.blank(4, 4, (10, 20, 30))
    bpx = np.full((4, 4, 3), 200, np.uint8)
    bpx[:, :2] = 0                      # left half transparent
    _, out = op_compose(image1=a, image2=ImageBuf(bpx))
    assert (out.pixels[:, :2] == [10, 20, 30]).all()
    assert (out.pixels[:, 2:] == 200).all()


def test_resize_identity_and_scale():
    m = MaskBuf.rect(8, 8, 3, 3, 2, 2)
    assert op_resize(m, None, 1.0)[0] == m
    assert op_resize(m, None, 2.0)[0] == MaskBuf.rect(8, 8, 2, 2, 4, 4)


def test_resize_errors():
    m = MaskBuf.rect(8, 8, 3, 3, 2, 2)
    for bad in (0.0, -1.0, float("nan"), float("inf")):
        with pytest.raises(NonPositiveRatio):
            op_resize(m, None, bad)
    with pytest.raises(EmptyValidRegion):
        op_resize(MaskBuf.zeros(8, 8), None, 2.0)
    with pytest.raises(KindViolation):
        op_resize(m, ImageBuf.blank(8, 8, (1, 1, 1)), 2.0)


def test_resize_extreme_ratios_do_not_crash():
    m = MaskBuf.rect(8, 8, 3, 3, 2, 2)
    assert op_resize(m, None, 1e-300)[0].count() >= 0
    assert op_resize(m, None, 1e300)[0].count() == 64


def test_bbox_examples():
    one = MaskBuf(np.zeros((8, 8), bool))
    bits = one.bits.copy()
    bits[2, 3] = True
    assert op_bbox(MaskBuf(bits)) == MaskBuf.rect(8, 8, 2, 3, 1, 1)
    bits[5, 7] = True
    assert op_bbox(MaskBuf(bits)) == MaskBuf.rect(8, 8, 2, 3, 4, 5)
    with pytest.raises(EmptyMask):
        op_bbox(MaskBuf.zeros(8, 8))


def test_buffers_are_read_only():
    m = MaskBuf.zeros(4, 4)
    with pytest.raises(ValueError):
        m.bits[0, 0] = True


# -- 500-case property suites ----------------------------------------------------

def test_inverse_properties():
    rng = np.random.default_rng(0)
    for _ in range(CASES):
        m = rand_mask(rng)
        assert op_inverse(None, op_inverse(None, m)[0])[0] == m
        assert op_inverse(m, m)[0].count() == 0
        a, b = rand_mask(rng), rand_mask(rng)
        assert np.array_equal(op_inverse(a, b)[0].bits, a.bits & ~b.bits)


def test_compose_properties():
    rng = np.random.default_rng(1)
    for _ in range(CASES):
        a, b, c = rand_mask(rng), rand_mask(rng), rand_mask(rng)
        assert op_compose(a, a)[0] == a
        left = op_compose(op_compose(a, b)[0], c)[0]
        right = op_compose(a, op_compose(b, c)[0])[0]
        assert left == right
        x, y = rand_image(rng), rand_image(rng)
        _, out = op_compose(image1=x, image2=y)
        opaque = y.pixels.any(axis=2)
        assert (out.pixels[opaque] == y.pixels[opaque]).all()
        assert (out.pixels[~opaque] == x.pixels[~opaque]).all()


def test_bbox_fixed_point():
    rng = np.random.default_rng(2)
    for _ in range(CASES):
        m = rand_mask(rng, p=rng.random() * 0.2 + 0.01)
        if m.count() == 0:
            m = MaskBuf.rect(16, 16, 4, 4, 1, 1)
        box = op_bbox(m)
        assert op_bbox(box) == box
        assert not (m.bits & ~box.bits).any()


def test_resize_identity_property():
    rng = np.random.default_rng(3)
    for _ in range(CASES):
        m = rand_mask(rng, p=0.3)
        if m.count() == 0:
            continue
        assert op_resize(m, None, 1.0)[0] == m
        img = rand_image(rng)
        if img.valid_region().any():
            assert op_resize(None, img, 1.0)[1] == img


# -- netpbm ---------------------------------------------------------------------------

def test_ppm_round_trip(tmp_path):
    img = checkerboard(10, 6, cell=3)
    assert decode_ppm(encode_ppm(img)) == img
    write_ppm(tmp_path / "a.ppm", img)
    assert read_ppm(tmp_path / "a.ppm") == img
    assert img.valid_region().all()


def test_pgm_round_trip():
    m = MaskBuf.rect(7, 5, 1, 2, 3, 3)
    data = encode_pgm(m)
    assert data.startswith(b"P5") and set(data[-35:]) <= {0, 255}
    assert decode_pgm(data) == m


def test_ppm_with_comments():
    data = b"P6\n# made by hand\n2 1\n255\n" + bytes([1, 2, 3, 4, 5, 6])
    assert decode_ppm(data).pixels.tolist() == [[[1, 2, 3], [4, 5, 6]]]


@pytest.mark.parametrize("data", [b"", b"P6\n2 2\n255\n\x00", b"P3\n1 1\n255\n0 0 0",
                                  b"P6\n0 1\n255\n", b"P6\n1 1\n65535\n\x00\x00"])
def test_netpbm_errors(data):
    with pytest.raises(NetpbmError):
        decode_ppm(data)
