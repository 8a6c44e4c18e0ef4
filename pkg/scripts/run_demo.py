#!/usr/bin/env python3
"""Run the three engines on the bundled sample and write results to demo_out/.

Uses the deterministic test network so no pretrained weights are needed.
Swap --network testnet:42 for vgg:path/to/vgg16.blw (see converter/) to run
with real VGG-16 features.
"""

import os
import subprocess
import sys

HERE = os.path.dirname(os.path.abspath(__file__))
ROOT = os.path.dirname(HERE)
sys.path.insert(0, os.path.join(ROOT, "src"))

from gradblend.cli import main as blend_main  # noqa: E402


def run(args):
    print("+ blend", " ".join(args))
    code = blend_main(args)
    if code != 0:
        raise SystemExit(code)


def main():
    samples = os.path.join(ROOT, "samples")
    if not os.path.exists(os.path.join(samples, "source.ppm")):
        subprocess.run([sys.executable, os.path.join(HERE, "make_sample.py"), samples],
                       check=True)
    out = os.path.join(ROOT, "demo_out")
    os.makedirs(out, exist_ok=True)
    common = [
        "--source", os.path.join(samples, "source.ppm"),
        "--mask", os.path.join(samples, "mask.ppm"),
        "--target", os.path.join(samples, "target.ppm"),
        "--offset", "24,24", "--size", "64",
    ]
    run(common + ["--engine", "poisson", "--out", os.path.join(out, "poisson.png")])
    run(common + [
        "--engine", "two-stage", "--network", "testnet:42", "--seed", "42",
        "--iters1", "150", "--iters2", "75", "--save-every", "50",
        "--out", os.path.join(out, "two_stage.png"),
    ])
    print(f"\nresults in {out}/ (final, *_stage1, traces, manifest, iteration frames)")


if __name__ == "__main__":
    main()
