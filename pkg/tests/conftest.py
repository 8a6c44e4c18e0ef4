"""Shared oracles and instance builders.

The oracles here are written independently of the library code paths they
check: brute-force convolution by explicit loops, dense linear solves,
and central finite differences.
"""

import numpy as np
import pytest


def brute_laplacian(x: np.ndarray) -> np.ndarray:
    """Direct 3x3 convolution with [[0,1,0],[1,-4,1],[0,1,0]] under
    replicate padding, one pixel at a time."""
    x = np.asarray(x, dtype=np.float64)
    squeeze = x.ndim == 2
    if squeeze:
        x = x[:, :, None]
    h, w, c = x.shape
    out = np.zeros_like(x)
    kernel = {(-1, 0): 1.0, (1, 0): 1.0, (0, -1): 1.0, (0, 1): 1.0, (0, 0): -4.0}
    for i in range(h):
        for j in range(w):
            for (di, dj), kv in kernel.items():
                ii = min(max(i + di, 0), h - 1)
                jj = min(max(j + dj, 0), w - 1)
                out[i, j] += kv * x[ii, jj]
    return out[:, :, 0] if squeeze else out


def fd_gradient(f, x: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """Central finite differences of a scalar function, coordinate-wise."""
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat = x.ravel()
    gflat = g.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        fp = f(x)
        flat[i] = orig - step
        fm = f(x)
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * step)
    return g


def rel_err(a: np.ndarray, b: np.ndarray) -> float:
    denom = max(np.max(np.abs(a)), np.max(np.abs(b)), 1e-12)
    return float(np.max(np.abs(a - b)) / denom)


def seeded(shape, seed, low=0.0, high=1.0):
    rng = np.random.default_rng(seed)
    return rng.uniform(low, high, size=shape)


def blob_mask(h, w, r0, r1, c0, c1):
    """Rectangular mask-1 region [r0, r1) x [c0, c1) in an h x w frame."""
    m = np.zeros((h, w))
    m[r0:r1, c0:c1] = 1.0
    return m


def coarse_instance(frame=24, region=(6, 18), core_margin=3, seed=0, channels=3,
                    target_kind="smooth", amplitude=0.5):
    """Source/target/mask arrays in the aligned target frame.

    The mask is a centered square; the source varies only inside a core
    that keeps `core_margin` pixels of constant border inside the mask,
    mirroring a coarsely-cropped object (constant outside the object).
    """
    rng = np.random.default_rng(seed)
    lo, hi = region
    mask = blob_mask(frame, frame, lo, hi, lo, hi)
    source = np.zeros((frame, frame, channels))
    c0, c1 = lo + core_margin, hi - core_margin
    source[c0:c1, c0:c1, :] = amplitude * rng.random((c1 - c0, c1 - c0, channels))
    if target_kind == "smooth":
        ys, xs = np.mgrid[0:frame, 0:frame]
        base = 0.3 + 0.4 * (np.sin(ys / 5.0) * np.cos(xs / 7.0) * 0.5 + 0.5)
        target = np.repeat(base[:, :, None], channels, axis=2)
        target += 0.05 * rng.random((frame, frame, channels))
        target = np.clip(target, 0.0, 1.0)
    elif target_kind == "constant":
        target = np.full((frame, frame, channels), 0.5)
    else:
        target = rng.random((frame, frame, channels))
    return source, target, mask


@pytest.fixture
def tmp_image_dir(tmp_path):
    return tmp_path
