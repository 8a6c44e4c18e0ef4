"""Command-line entry point.

    blend --source s.ppm --mask m.ppm --target t.ppm --offset 16,16 \
          --engine two-stage --network testnet:42 --size 64 --out o.png

Exit codes: 0 success, 1 configuration error (message names the offending
flag), 2 numerical abort during optimization.  Loss weights accept an
optional stage suffix, e.g. --lambda-style:2 1e8 applies to stage two
only.  --from-manifest re-runs previously written run manifests; several
manifests are processed in parallel, one worker per run, capped by the
BLEND_THREADS environment variable.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ProcessPoolExecutor

from .imgio import ImageIOError
from .lbfgs import NonFiniteObjectiveError
from .losses import LossError
from .pipeline import (
    ConfigError,
    RunConfig,
    StageConfig,
    build_network,
    default_weights,
    run,
    run_from_manifest,
)
from .poisson import PoissonError

_TERMS = ("grad", "cont", "style", "hist", "tv")


class _CliError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _CliError(message)


def _build_parser() -> _Parser:
    p = _Parser(prog="blend", add_help=True)
    p.add_argument("--from-manifest", nargs="+", metavar="PATH", default=None,
                   help="re-run one or more saved run manifests")
    p.add_argument("--source", help="source image (PPM or PNG)")
    p.add_argument("--mask", help="binary mask image, same size as source")
    p.add_argument("--target", help="target image")
    p.add_argument("--out", help="output image path (.ppm or .png)")
    p.add_argument("--offset", default="0,0", metavar="X,Y",
                   help="top-left placement of the source in the target frame")
    p.add_argument("--size", type=int, default=512,
                   help="working resolution (square); 0 keeps the target size")
    p.add_argument("--engine", default="two-stage",
                   choices=["two-stage", "stage1", "poisson"])
    p.add_argument("--network", default="testnet:42", metavar="{vgg:PATH|testnet:SEED}")
    p.add_argument("--variant", default="eq6", choices=["eq6", "cropout"],
                   help="gradient-loss formulation")
    p.add_argument("--guidance", default="source", choices=["source", "mixed"],
                   help="guidance field for the poisson engine")
    p.add_argument("--solver", default="cg", choices=["gs", "cg"],
                   help="iterative solver for the poisson engine")
    p.add_argument("--iters1", type=int, default=1000, metavar="N")
    p.add_argument("--iters2", type=int, default=1000, metavar="N")
    p.add_argument("--init", default="noise", choices=["noise", "copypaste"])
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--save-every", type=int, default=0, metavar="N",
                   help="dump intermediate composites every N iterations")
    p.add_argument("--trace", default="", metavar="PATH",
                   help="base path for per-stage trace CSVs")
    for term in _TERMS:
        p.add_argument(f"--lambda-{term}", type=float, default=None)
        p.add_argument(f"--lambda-{term}:1", type=float, default=None,
                       dest=f"lambda_{term}_1")
        p.add_argument(f"--lambda-{term}:2", type=float, default=None,
                       dest=f"lambda_{term}_2")
    return p


def _stage_lambda(args, term: str, stage: int):
    suffixed = getattr(args, f"lambda_{term}_{stage}")
    if suffixed is not None:
        return suffixed
    return getattr(args, f"lambda_{term}")


def _build_config(args) -> RunConfig:
    for flag in ("source", "mask", "target", "out"):
        if getattr(args, flag) is None:
            raise ConfigError(f"--{flag} is required")
    try:
        ox, oy = (int(v) for v in args.offset.split(","))
    except ValueError as exc:
        raise ConfigError(f"--offset: expected X,Y integers, got {args.offset!r}") from exc

    if args.lambda_grad_2 is not None:
        raise ConfigError("--lambda-grad:2: stage two has no gradient term")

    net = None
    if args.engine != "poisson":
        try:
            net = build_network(args.network)
        except (ValueError, OSError) as exc:
            raise ConfigError(f"--network: {exc}") from exc

    stages = {}
    for stage, iters in ((1, args.iters1), (2, args.iters2)):
        weights = default_weights(stage, net)
        for term, field_name in (("grad", "lambda_grad"), ("cont", "lambda_cont"),
                                 ("style", "lambda_style"), ("hist", "lambda_hist"),
                                 ("tv", "lambda_tv")):
            if stage == 2 and term == "grad":
                continue
            value = _stage_lambda(args, term, stage)
            if value is not None:
                if value < 0:
                    raise ConfigError(f"--lambda-{term}: must be >= 0")
                setattr(weights, field_name, value)
        stages[stage] = StageConfig(
            weights=weights, max_iter=iters, init=args.init,
            seed=args.seed, save_every=args.save_every,
        )

    return RunConfig(
        source=args.source, mask=args.mask, target=args.target, out=args.out,
        offset_x=ox, offset_y=oy, size=args.size, engine=args.engine,
        network=args.network, variant=args.variant, guidance=args.guidance,
        solver=args.solver, trace=args.trace,
        stage1=stages[1], stage2=stages[2],
    )


def _run_manifests(paths) -> int:
    if len(paths) == 1:
        run_from_manifest(paths[0])
        return 0
    cap = os.environ.get("BLEND_THREADS")
    workers = min(len(paths), int(cap) if cap else (os.cpu_count() or 1))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        for _ in pool.map(run_from_manifest, paths):
            pass
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.from_manifest:
            return _run_manifests(args.from_manifest)
        cfg = _build_config(args)
        run(cfg)
        return 0
    except (_CliError, ConfigError, ImageIOError, PoissonError, LossError, ValueError) as exc:
        print(f"blend: error: {exc}", file=sys.stderr)
        return 1
    except NonFiniteObjectiveError as exc:
        print(f"blend: numerical abort: {exc}", file=sys.stderr)
        return 2


def run_cli(argv) -> int:
    """Programmatic CLI invocation; returns the exit code."""
    return main(argv)


if __name__ == "__main__":
    sys.exit(main())
