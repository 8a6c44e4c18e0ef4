"""Image file I/O: binary PPM (P6, 8-bit) and PNG (8-bit RGB/gray).

PPM is parsed and written by hand so the round trip is bit-exact; files
are written with the canonical header "P6\\n<w> <h>\\n255\\n".  8-bit values
v map to v/255 on load; save clamps to [0, 1] and maps v to round(v*255).
"""

from __future__ import annotations

import io
import os

import numpy as np
from PIL import Image as PILImage
from PIL import UnidentifiedImageError

from .image import ImageTensor, clamp01


class ImageIOError(Exception):
    """Base class for image file errors."""


class UnreadableFileError(ImageIOError):
    """File missing, unreadable, or not a recognized raster at all."""


class MalformedHeaderError(ImageIOError):
    """Recognized container with a corrupt or unsupported header."""


class UnsupportedDepthError(ImageIOError):
    """Bit depth or pixel mode outside 8-bit RGB/gray."""


def load_image(path) -> ImageTensor:
    path = os.fspath(path)
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise UnreadableFileError(f"cannot read {path!r}: {exc}") from exc
    if raw[:2] == b"P6":
        return _decode_ppm(raw, path)
    return _decode_png(raw, path)


def save_image(img: ImageTensor, path) -> None:
    path = os.fspath(path)
    data = np.round(clamp01(img.data) * 255.0).astype(np.uint8)
    if path.lower().endswith((".ppm", ".pnm")):
        _write_ppm(data, path)
    elif path.lower().endswith(".png"):
        _write_png(data, path)
    else:
        raise ImageIOError(f"unsupported output format for {path!r} (use .ppm or .png)")


def _quantize(data: np.ndarray) -> ImageTensor:
    return ImageTensor(data.astype(np.float64) / 255.0)


def _decode_ppm(raw: bytes, path: str) -> ImageTensor:
    pos = 2  # past magic
    fields = []
    while len(fields) < 3:
        while pos < len(raw) and raw[pos : pos + 1].isspace():
            pos += 1
        if pos < len(raw) and raw[pos : pos + 1] == b"#":
            while pos < len(raw) and raw[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos : pos + 1].isspace():
            pos += 1
        token = raw[start:pos]
        if not token.isdigit():
            raise MalformedHeaderError(f"{path!r}: bad PPM header token {token!r}")
        fields.append(int(token))
    if pos >= len(raw):
        raise MalformedHeaderError(f"{path!r}: PPM header ends before pixel data")
    pos += 1  # single whitespace byte after maxval
    width, height, maxval = fields
    if width <= 0 or height <= 0:
        raise MalformedHeaderError(f"{path!r}: non-positive PPM dimensions")
    if maxval != 255:
        raise UnsupportedDepthError(f"{path!r}: PPM maxval {maxval} unsupported (8-bit only)")
    need = width * height * 3
    body = raw[pos : pos + need]
    if len(body) < need:
        raise MalformedHeaderError(
            f"{path!r}: PPM pixel payload truncated ({len(body)} of {need} bytes)"
        )
    arr = np.frombuffer(body, dtype=np.uint8).reshape(height, width, 3)
    return _quantize(arr)


def _write_ppm(data: np.ndarray, path: str) -> None:
    if data.shape[2] == 1:
        data = np.repeat(data, 3, axis=2)
    header = f"P6\n{data.shape[1]} {data.shape[0]}\n255\n".encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(data.tobytes())


def _decode_png(raw: bytes, path: str) -> ImageTensor:
    try:
        img = PILImage.open(io.BytesIO(raw))
        img.load()
    except UnidentifiedImageError as exc:
        raise UnreadableFileError(f"{path!r}: not a PPM or PNG file") from exc
    except OSError as exc:
        raise MalformedHeaderError(f"{path!r}: corrupt image data: {exc}") from exc
    if img.format != "PNG":
        raise UnreadableFileError(f"{path!r}: unsupported format {img.format}")
    if img.mode not in ("RGB", "L"):
        raise UnsupportedDepthError(
            f"{path!r}: PNG mode {img.mode} unsupported (8-bit RGB or gray only)"
        )
    arr = np.asarray(img, dtype=np.uint8)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    return _quantize(arr)


def _write_png(data: np.ndarray, path: str) -> None:
    if data.shape[2] == 1:
        PILImage.fromarray(data[:, :, 0], mode="L").save(path, format="PNG")
    else:
        PILImage.fromarray(data, mode="RGB").save(path, format="PNG")
