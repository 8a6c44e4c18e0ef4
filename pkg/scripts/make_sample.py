#!/usr/bin/env python3
"""Generate the bundled sample instance under samples/.

A smooth banded target, a textured square object on a flat backdrop as the
source, and a deliberately loose mask around the object, mirroring the
coarse-crop setting the blender is designed for.  Files are deterministic.
"""

import os
import sys

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from gradblend.image import ImageTensor
from gradblend.imgio import save_image


def main(out_dir="samples"):
    os.makedirs(out_dir, exist_ok=True)
    rng = np.random.default_rng(2024)

    frame, patch = 96, 48
    ys, xs = np.mgrid[0:frame, 0:frame]
    target = np.stack(
        [
            0.35 + 0.3 * np.sin(ys / 9.0),
            0.40 + 0.25 * np.cos((xs + ys) / 13.0),
            0.55 + 0.2 * np.sin(xs / 7.0),
        ],
        axis=2,
    )
    target = np.clip(target + 0.03 * rng.random((frame, frame, 3)), 0, 1)

    source = np.full((patch, patch, 3), 0.12)
    core = slice(10, patch - 10)
    tex = 0.35 + 0.5 * rng.random((patch - 20, patch - 20, 3))
    source[core, core, :] = tex

    mask = np.zeros((patch, patch))
    mask[4:-4, 4:-4] = 1.0  # loose crop: margin of backdrop kept around the object

    save_image(ImageTensor.from_array(source), os.path.join(out_dir, "source.ppm"))
    save_image(ImageTensor.from_array(target), os.path.join(out_dir, "target.ppm"))
    save_image(
        ImageTensor.from_array(np.repeat(mask[:, :, None], 3, axis=2)),
        os.path.join(out_dir, "mask.ppm"),
    )
    print(f"wrote source/mask/target to {out_dir}/ (offset suggestion: 24,24)")


if __name__ == "__main__":
    main(*sys.argv[1:])
