"""Pixel containers, mask geometry, alignment and the discrete Laplacian.

Layout convention: image data is a float64 numpy array of shape
(height, width, channels) in C order (row-major, channel-interleaved),
nominal value range [0, 1].  Masks are (height, width) float64 arrays
whose entries are exactly 0.0 or 1.0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class ImageError(ValueError):
    """Invalid image/mask construction or incompatible operands."""


@dataclass(frozen=True)
class ImageTensor:
    """H x W x C float raster. Channels is 1 or 3."""

    data: np.ndarray

    def __post_init__(self):
        d = self.data
        if d.ndim != 3 or d.shape[2] not in (1, 3):
            raise ImageError(f"image must be (H, W, C) with C in {{1, 3}}, got {d.shape}")
        if d.dtype != np.float64:
            raise ImageError(f"image dtype must be float64, got {d.dtype}")
        if not np.all(np.isfinite(d)):
            raise ImageError("image contains non-finite values")

    @classmethod
    def from_array(cls, arr) -> "ImageTensor":
        a = np.asarray(arr, dtype=np.float64)
        if a.ndim == 2:
            a = a[:, :, None]
        return cls(np.ascontiguousarray(a))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True)
class Mask:
    """H x W binary raster delimiting the blend region."""

    data: np.ndarray

    def __post_init__(self):
        d = self.data
        if d.ndim != 2:
            raise ImageError(f"mask must be (H, W), got {d.shape}")
        if d.dtype != np.float64:
            raise ImageError(f"mask dtype must be float64, got {d.dtype}")
        if not np.all((d == 0.0) | (d == 1.0)):
            raise ImageError("mask values must be exactly 0 or 1")

    @classmethod
    def from_array(cls, arr) -> "Mask":
        return cls(np.ascontiguousarray(np.asarray(arr, dtype=np.float64)))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    def interior(self) -> np.ndarray:
        """Boolean map of mask-1 pixels whose four neighbors are all mask-1
        and in frame."""
        m = self.data == 1.0
        inner = np.zeros_like(m)
        inner[1:-1, 1:-1] = (
            m[1:-1, 1:-1]
            & m[:-2, 1:-1]
            & m[2:, 1:-1]
            & m[1:-1, :-2]
            & m[1:-1, 2:]
        )
        return inner

    def boundary(self) -> np.ndarray:
        """Boolean map of mask-1 pixels with a mask-0 or out-of-frame
        4-neighbor. Together with interior() this partitions the mask-1 set."""
        return (self.data == 1.0) & ~self.interior()


@dataclass(frozen=True)
class BlendInstance:
    """Source patch + mask placed at (offset_x, offset_y) in the target frame.

    offset_x counts columns, offset_y counts rows, both from the top-left.
    """

    source: ImageTensor
    mask: Mask
    target: ImageTensor
    offset_x: int = 0
    offset_y: int = 0

    def __post_init__(self):
        if (self.source.height, self.source.width) != (self.mask.height, self.mask.width):
            raise ImageError(
                f"source {self.source.height}x{self.source.width} and mask "
                f"{self.mask.height}x{self.mask.width} must share height/width"
            )
        if self.offset_x < 0 or self.offset_y < 0:
            raise ImageError(f"offset ({self.offset_x}, {self.offset_y}) must be non-negative")
        if (
            self.offset_y + self.source.height > self.target.height
            or self.offset_x + self.source.width > self.target.width
        ):
            raise ImageError(
                f"source {self.source.height}x{self.source.width} at offset "
                f"({self.offset_x}, {self.offset_y}) exits the "
                f"{self.target.height}x{self.target.width} target frame"
            )


def align(instance: BlendInstance) -> tuple[ImageTensor, Mask]:
    """Re-embed source and mask in a target-sized frame.

    Pixels outside the placed rectangle are zero in both outputs. Placement
    out of bounds is rejected at BlendInstance construction.
    """
    th, tw = instance.target.height, instance.target.width
    sh, sw = instance.source.height, instance.source.width
    y0, x0 = instance.offset_y, instance.offset_x

    src = np.zeros((th, tw, instance.source.channels), dtype=np.float64)
    src[y0 : y0 + sh, x0 : x0 + sw, :] = instance.source.data
    msk = np.zeros((th, tw), dtype=np.float64)
    msk[y0 : y0 + sh, x0 : x0 + sw] = instance.mask.data
    return ImageTensor(src), Mask(msk)


def composite_arrays(z: np.ndarray, target: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """z where mask=1, target where mask=0. Raw-array fast path."""
    m = mask[:, :, None]
    return z * m + target * (1.0 - m)


def composite(z: ImageTensor, target: ImageTensor, mask: Mask) -> ImageTensor:
    if (z.height, z.width) != (target.height, target.width) or (z.height, z.width) != (
        mask.height,
        mask.width,
    ):
        raise ImageError("composite operands must share height/width")
    if z.channels != target.channels:
        raise ImageError("composite operands must share channel count")
    return ImageTensor(composite_arrays(z.data, target.data, mask.data))


def laplacian_array(x: np.ndarray) -> np.ndarray:
    """4-neighbor Laplacian, kernel [[0,1,0],[1,-4,1],[0,1,0]], replicate
    (edge-clamp) padding. Works on (H, W) or (H, W, C); channels independent.
    """
    pad = ((1, 1), (1, 1)) + ((0, 0),) * (x.ndim - 2)
    p = np.pad(x, pad, mode="edge")
    return p[:-2, 1:-1] + p[2:, 1:-1] + p[1:-1, :-2] + p[1:-1, 2:] - 4.0 * x


def laplacian_adjoint_array(r: np.ndarray) -> np.ndarray:
    """Exact adjoint of laplacian_array (the replicate-padded operator).

    laplacian_array is conv-with-K after replicate padding; its adjoint
    scatters each output's kernel taps back onto the padded grid and then
    folds the padding cells onto the edge pixels they were replicated from.
    """
    h, w = r.shape[:2]
    g = np.zeros((h + 2, w + 2) + r.shape[2:], dtype=np.float64)
    g[0:h, 1 : w + 1] += r
    g[2 : h + 2, 1 : w + 1] += r
    g[1 : h + 1, 0:w] += r
    g[1 : h + 1, 2 : w + 2] += r
    g[1 : h + 1, 1 : w + 1] -= 4.0 * r
    out = g[1:-1, 1:-1].copy()
    out[0, :] += g[0, 1:-1]
    out[-1, :] += g[-1, 1:-1]
    out[:, 0] += g[1:-1, 0]
    out[:, -1] += g[1:-1, -1]
    out[0, 0] += g[0, 0]
    out[0, -1] += g[0, -1]
    out[-1, 0] += g[-1, 0]
    out[-1, -1] += g[-1, -1]
    return out


def laplacian(img: ImageTensor) -> ImageTensor:
    return ImageTensor(laplacian_array(img.data))


def downsample_mask(mask: Mask, target_h: int, target_w: int) -> Mask:
    """Box-average pooling to (target_h, target_w), threshold at 0.5 with
    ties rounding to 1. Boxes are the fractional cells of a uniform grid,
    so non-integer scale factors are handled exactly (area weighting)."""
    if target_h <= 0 or target_w <= 0:
        raise ImageError(f"target dims must be positive, got ({target_h}, {target_w})")
    if target_h > mask.height or target_w > mask.width:
        raise ImageError(
            f"target dims ({target_h}, {target_w}) exceed mask "
            f"({mask.height}, {mask.width})"
        )
    means = _box_average(mask.data, target_h, target_w)
    return Mask(np.where(means >= 0.5, 1.0, 0.0))


def _axis_weights(n_in: int, n_out: int) -> np.ndarray:
    """(n_out, n_in) row-stochastic matrix of fractional box overlaps."""
    scale = n_in / n_out
    w = np.zeros((n_out, n_in), dtype=np.float64)
    for i in range(n_out):
        lo, hi = i * scale, (i + 1) * scale
        j0, j1 = int(np.floor(lo)), int(np.ceil(hi))
        for j in range(j0, min(j1, n_in)):
            w[i, j] = min(hi, j + 1) - max(lo, j)
        w[i] /= w[i].sum()
    return w


def _box_average(x: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    wy = _axis_weights(x.shape[0], out_h)
    wx = _axis_weights(x.shape[1], out_w)
    if x.ndim == 2:
        return wy @ x @ wx.T
    return np.einsum("oi,ijc,pj->opc", wy, x, wx)


def bilinear_resize(img: ImageTensor, out_h: int, out_w: int) -> ImageTensor:
    """Bilinear resampling with half-pixel centers (the usual image-resize
    convention). Used by the pipeline's --size option."""
    if out_h <= 0 or out_w <= 0:
        raise ImageError("resize dims must be positive")
    x = img.data
    h, w = x.shape[:2]
    ys = (np.arange(out_h) + 0.5) * (h / out_h) - 0.5
    xs = (np.arange(out_w) + 0.5) * (w / out_w) - 0.5
    y0 = np.clip(np.floor(ys).astype(int), 0, h - 1)
    x0 = np.clip(np.floor(xs).astype(int), 0, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = np.clip(ys - y0, 0.0, 1.0)[:, None, None]
    fx = np.clip(xs - x0, 0.0, 1.0)[None, :, None]
    top = x[y0][:, x0] * (1 - fx) + x[y0][:, x1] * fx
    bot = x[y1][:, x0] * (1 - fx) + x[y1][:, x1] * fx
    return ImageTensor(top * (1 - fy) + bot * fy)


def resize_mask(mask: Mask, out_h: int, out_w: int) -> Mask:
    """Resize a mask to arbitrary dims: bilinear on the indicator, then
    threshold at 0.5 (ties to 1)."""
    img = bilinear_resize(ImageTensor(mask.data[:, :, None].copy()), out_h, out_w)
    return Mask(np.where(img.data[:, :, 0] >= 0.5, 1.0, 0.0))


def clamp01(x: np.ndarray) -> np.ndarray:
    return np.clip(x, 0.0, 1.0)
