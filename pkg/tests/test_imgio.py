import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from gradblend.image import ImageTensor
from gradblend.imgio import (
    MalformedHeaderError,
    UnreadableFileError,
    UnsupportedDepthError,
    load_image,
    save_image,
)


def test_minimal_p6_header(tmp_path):
    payload = b"P6\n2 2\n255\n" + bytes(range(12))
    p = tmp_path / "a.ppm"
    p.write_bytes(payload)
    img = load_image(p)
    assert img.data.shape == (2, 2, 3)
    assert img.data[0, 0, 0] == 0.0
    assert img.data[1, 1, 2] == 11.0 / 255.0


def test_endpoint_mapping(tmp_path):
    payload = b"P6\n1 1\n255\n" + bytes([255, 0, 128])
    p = tmp_path / "b.ppm"
    p.write_bytes(payload)
    img = load_image(p)
    assert img.data[0, 0, 0] == 1.0
    assert img.data[0, 0, 1] == 0.0


def test_header_comments_and_whitespace(tmp_path):
    payload = b"P6 # magic\n# a comment line\n 2\t1 \n255\n" + bytes(6)
    p = tmp_path / "c.ppm"
    p.write_bytes(payload)
    assert load_image(p).data.shape == (1, 2, 3)


@settings(max_examples=25)
@given(hnp.arrays(np.uint8, (3, 4, 3), elements=st.integers(0, 255)))
def test_ppm_roundtrip_bit_exact(tmp_path_factory, raw):
    tmp = tmp_path_factory.mktemp("ppm")
    original = b"P6\n4 3\n255\n" + raw.tobytes()
    p1, p2 = tmp / "in.ppm", tmp / "out.ppm"
    p1.write_bytes(original)
    save_image(load_image(p1), p2)
    assert p2.read_bytes() == original


def test_save_load_save_stable(tmp_path):
    img = ImageTensor.from_array(np.random.default_rng(0).random((5, 7, 3)))
    p1, p2 = tmp_path / "x.ppm", tmp_path / "y.ppm"
    save_image(img, p1)
    save_image(load_image(p1), p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_save_clamps(tmp_path):
    img = ImageTensor.from_array(np.array([[[1.5, -0.25, 0.5]]]))
    p = tmp_path / "clamp.ppm"
    save_image(img, p)
    out = load_image(p)
    assert out.data[0, 0, 0] == 1.0
    assert out.data[0, 0, 1] == 0.0


def test_unreadable_file(tmp_path):
    with pytest.raises(UnreadableFileError):
        load_image(tmp_path / "missing.ppm")


def test_malformed_header(tmp_path):
    p = tmp_path / "bad.ppm"
    p.write_bytes(b"P6\n2 x\n255\n" + bytes(12))
    with pytest.raises(MalformedHeaderError):
        load_image(p)


def test_truncated_payload(tmp_path):
    p = tmp_path / "short.ppm"
    p.write_bytes(b"P6\n2 2\n255\n" + bytes(11))
    with pytest.raises(MalformedHeaderError, match="truncated"):
        load_image(p)


def test_unsupported_depth(tmp_path):
    p = tmp_path / "deep.ppm"
    p.write_bytes(b"P6\n1 1\n65535\n" + bytes(6))
    with pytest.raises(UnsupportedDepthError):
        load_image(p)


def test_not_an_image(tmp_path):
    p = tmp_path / "junk.bin"
    p.write_bytes(b"definitely not pixels")
    with pytest.raises(UnreadableFileError):
        load_image(p)


def test_png_roundtrip_rgb(tmp_path):
    data = np.random.default_rng(1).integers(0, 256, (6, 5, 3)).astype(np.uint8)
    img = ImageTensor.from_array(data / 255.0)
    p = tmp_path / "r.png"
    save_image(img, p)
    out = load_image(p)
    assert np.array_equal(out.data, img.data)


def test_png_roundtrip_gray(tmp_path):
    data = np.random.default_rng(2).integers(0, 256, (4, 4, 1)).astype(np.uint8)
    img = ImageTensor.from_array(data / 255.0)
    p = tmp_path / "g.png"
    save_image(img, p)
    out = load_image(p)
    assert out.data.shape == (4, 4, 1)
    assert np.array_equal(out.data, img.data)


def test_unknown_output_format(tmp_path):
    img = ImageTensor.from_array(np.zeros((2, 2, 3)))
    with pytest.raises(Exception, match="unsupported output format"):
        save_image(img, tmp_path / "x.jpeg")
