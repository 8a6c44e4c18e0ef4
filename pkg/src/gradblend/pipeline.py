"""The two-stage blending pipeline and its run configuration.

Stage one reconstructs the masked region by minimizing the weighted sum
of gradient, content, style, histogram and TV losses over the
reconstruction pixels; stage two re-optimizes the whole composite for
style against the target.  A classic Poisson solve is available as a
third engine.  Every stochastic choice is seeded, so a run is a pure
function of its RunConfig; the JSON manifest written next to the output
reproduces it exactly.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import losses as L
from .featurenet import FeatureExtractor, testnet_extractor, vgg_extractor
from .image import (
    BlendInstance,
    ImageTensor,
    Mask,
    align,
    bilinear_resize,
    clamp01,
    composite_arrays,
    resize_mask,
)
from .imgio import load_image, save_image
from .lbfgs import LbfgsConfig, OptTrace, minimize
from .losses import GradVariant, LossWeights
from .poisson import GuidanceMode, assemble_system, cg_solve, gauss_seidel_solve, scatter_solution
from .rng import SplitMix64
from .weights import load_weights

# paper defaults; 10e5 etc. read as 10 * 10^k
STAGE1_LAMBDAS = dict(lambda_grad=1e6, lambda_cont=1.0, lambda_style=1e6,
                      lambda_hist=1.0, lambda_tv=1e-5)
STAGE2_LAMBDAS = dict(lambda_grad=0.0, lambda_cont=1.0, lambda_style=1e8,
                      lambda_hist=1.0, lambda_tv=1e-5)
DEFAULT_MAX_ITER = 1000
DEFAULT_SIZE = 512


class ConfigError(ValueError):
    pass


@dataclass
class StageConfig:
    weights: LossWeights
    max_iter: int = DEFAULT_MAX_ITER
    init: str = "noise"  # "noise" | "copypaste"; stage two always copies its input
    seed: int = 42
    save_every: int = 0
    grad_tol: float = 1e-7

    def __post_init__(self):
        if self.max_iter < 1:
            raise ConfigError("max_iter must be >= 1")
        if self.init not in ("noise", "copypaste"):
            raise ConfigError(f"unknown init mode {self.init!r}")


def default_weights(stage: int, net: FeatureExtractor | None) -> LossWeights:
    lambdas = STAGE1_LAMBDAS if stage == 1 else STAGE2_LAMBDAS
    alpha = {t: 1.0 for t in net.content_taps} if net else {}
    beta = {t: 1.0 for t in net.style_taps} if net else {}
    return LossWeights(**lambdas, alpha=alpha, beta=beta, gamma=dict(beta))


@dataclass
class RunConfig:
    """Path-level description of one run; serialized as the manifest."""

    source: str
    mask: str
    target: str
    out: str
    offset_x: int = 0
    offset_y: int = 0
    size: int = DEFAULT_SIZE  # 0 keeps the target's native resolution
    engine: str = "two-stage"  # "two-stage" | "stage1" | "poisson"
    network: str = "testnet:42"  # "vgg:PATH" | "testnet:SEED"
    variant: str = "eq6"  # "eq6" | "cropout"
    guidance: str = "source"  # "source" | "mixed" (poisson engine)
    solver: str = "cg"  # "gs" | "cg" (poisson engine)
    trace: str = ""  # base path for trace CSVs; "" derives from `out`
    stage1: StageConfig | None = None
    stage2: StageConfig | None = None

    def validate(self):
        if self.engine not in ("two-stage", "stage1", "poisson"):
            raise ConfigError(f"--engine: unknown engine {self.engine!r}")
        if self.variant not in ("eq6", "cropout"):
            raise ConfigError(f"--variant: unknown variant {self.variant!r}")
        if self.guidance not in ("source", "mixed"):
            raise ConfigError(f"--guidance: unknown guidance {self.guidance!r}")
        if self.solver not in ("gs", "cg"):
            raise ConfigError(f"--solver: unknown solver {self.solver!r}")
        kind = self.network.split(":", 1)[0]
        if kind not in ("vgg", "testnet"):
            raise ConfigError(f"--network: unknown network {self.network!r}")
        if self.size < 0:
            raise ConfigError("--size: must be >= 0")


def build_network(network: str) -> FeatureExtractor:
    kind, _, arg = network.partition(":")
    if kind == "testnet":
        return testnet_extractor(int(arg or "42"))
    if kind == "vgg":
        if not arg:
            raise ConfigError("--network: vgg requires a path, e.g. vgg:weights.blw")
        return vgg_extractor(load_weights(arg))
    raise ConfigError(f"--network: unknown network {network!r}")


def load_mask_file(path) -> Mask:
    """Mask images may arrive as gray or RGB; threshold at 0.5, ties to 1."""
    img = load_image(path)
    plane = img.data.mean(axis=2)
    return Mask(np.where(plane >= 0.5, 1.0, 0.0))


def prepare_arrays(cfg: RunConfig):
    """Load, align to the target frame, and resize to the working square."""
    try:
        source = load_image(cfg.source)
    except Exception as exc:
        raise ConfigError(f"--source: {exc}") from exc
    try:
        mask = load_mask_file(cfg.mask)
    except Exception as exc:
        raise ConfigError(f"--mask: {exc}") from exc
    try:
        target = load_image(cfg.target)
    except Exception as exc:
        raise ConfigError(f"--target: {exc}") from exc

    instance = BlendInstance(source, mask, target, cfg.offset_x, cfg.offset_y)
    src_al, mask_al = align(instance)
    if cfg.size:
        src_al = bilinear_resize(src_al, cfg.size, cfg.size)
        mask_al = resize_mask(mask_al, cfg.size, cfg.size)
        target = bilinear_resize(target, cfg.size, cfg.size)
    return src_al.data, mask_al.data, target.data


def _init_z(init: str, seed: int, source: np.ndarray) -> np.ndarray:
    if init == "copypaste":
        return source.copy()
    rng = SplitMix64(seed)
    return rng.fill_uniform(source.shape, 0.0, 1.0)


def _stage_refs_one(net, weights, source, target):
    source_features = net.features(source) if weights.lambda_cont > 0 else {}
    target_features = (
        net.features(target) if (weights.lambda_style > 0 or weights.lambda_hist > 0) else {}
    )
    return L.StageOneRefs(source_features, target_features)


def stage_one(
    source: np.ndarray,
    target: np.ndarray,
    mask: np.ndarray,
    config: StageConfig,
    net: FeatureExtractor | None,
    variant: GradVariant = GradVariant.LITERAL_EQ6,
    frame_dir: str | None = None,
) -> tuple[np.ndarray, np.ndarray, OptTrace]:
    """Seamless blending: optimize the reconstruction z, return the
    clamped composite, the raw final z, and the optimizer trace."""
    w = config.weights
    refs = _stage_refs_one(net, w, source, target) if net is not None else None
    shape = target.shape

    def objective(flat):
        z = flat.reshape(shape)
        report = L.stage_one_loss(z, source, target, mask, net, w, variant, refs)
        return report.total, report.gradient.ravel(), report.terms

    z0 = _init_z(config.init, config.seed, source)
    callback = _frame_dumper(frame_dir, "stage1", config.save_every, shape, target, mask)
    lb = LbfgsConfig(max_iter=config.max_iter, grad_tol=config.grad_tol)
    z_flat, trace = minimize(objective, z0.ravel(), lb, callback=callback)
    z = z_flat.reshape(shape)
    blend = clamp01(composite_arrays(z, target, mask))
    return blend, z, trace


def stage_two(
    i_b: np.ndarray,
    target: np.ndarray,
    config: StageConfig,
    net: FeatureExtractor | None,
    frame_dir: str | None = None,
) -> tuple[np.ndarray, OptTrace]:
    """Style refinement: optimize the whole frame starting from a copy of
    the stage-one blend."""
    w = config.weights
    refs = None
    if net is not None:
        blend_features = net.features(i_b) if w.lambda_cont > 0 else {}
        target_features = (
            net.features(target) if (w.lambda_style > 0 or w.lambda_hist > 0) else {}
        )
        refs = L.StageTwoRefs(blend_features, target_features)
    shape = i_b.shape

    def objective(flat):
        x = flat.reshape(shape)
        report = L.stage_two_loss(x, i_b, target, net, w, refs)
        return report.total, report.gradient.ravel(), report.terms

    callback = _frame_dumper(frame_dir, "stage2", config.save_every, shape, None, None)
    lb = LbfgsConfig(max_iter=config.max_iter, grad_tol=config.grad_tol)
    x_flat, trace = minimize(objective, i_b.ravel().copy(), lb, callback=callback)
    return clamp01(x_flat.reshape(shape)), trace


def _frame_dumper(frame_dir, tag, every, shape, target, mask):
    if not frame_dir or every <= 0:
        return None

    def callback(k, flat):
        if k % every != 0:
            return
        x = flat.reshape(shape)
        frame = composite_arrays(x, target, mask) if target is not None else x
        path = os.path.join(frame_dir, f"{tag}_iter{k}.png")
        save_image(ImageTensor(clamp01(frame)), path)

    return callback


def run_poisson(source, target, mask, guidance: str, solver: str, tol=1e-6, max_iter=None):
    mode = GuidanceMode.SOURCE_ONLY if guidance == "source" else GuidanceMode.MIXED_SUM
    system = assemble_system(ImageTensor(source), ImageTensor(target), Mask(mask), mode)
    if solver == "gs":
        result = gauss_seidel_solve(system, tol, max_iter or 10_000)
    else:
        result = cg_solve(system, tol, max_iter or 2_000)
    return scatter_solution(system, result.solution, ImageTensor(target)).data


def write_trace_csv(trace: OptTrace, path: str) -> None:
    term_names = sorted({name for r in trace.records for name in r.terms})
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "total", "grad_norm", "step", *term_names])
        for r in trace.records:
            writer.writerow(
                [r.iteration, repr(r.objective), repr(r.grad_norm), repr(r.step)]
                + [repr(r.terms.get(t, 0.0)) for t in term_names]
            )


def _with_suffix(path: str, suffix: str) -> str:
    stem, ext = os.path.splitext(path)
    return f"{stem}{suffix}{ext}"


def _trace_base(cfg: RunConfig) -> str:
    if cfg.trace:
        return cfg.trace
    stem, _ = os.path.splitext(cfg.out)
    return stem + "_trace.csv"


def run(cfg: RunConfig) -> dict:
    """Execute a run; returns a dict of written output paths."""
    cfg.validate()
    net = None
    if cfg.engine != "poisson":
        net = build_network(cfg.network)
    if cfg.stage1 is None:
        cfg.stage1 = StageConfig(weights=default_weights(1, net))
    if cfg.stage2 is None:
        cfg.stage2 = StageConfig(weights=default_weights(2, net))

    source, mask, target = prepare_arrays(cfg)
    out_dir = os.path.dirname(os.path.abspath(cfg.out))
    os.makedirs(out_dir, exist_ok=True)
    written = {}

    if cfg.engine == "poisson":
        blend = run_poisson(source, target, mask, cfg.guidance, cfg.solver)
        save_image(ImageTensor(blend), cfg.out)
        written["out"] = cfg.out
    else:
        variant = GradVariant.LITERAL_EQ6 if cfg.variant == "eq6" else GradVariant.CROP_OUT
        i_b, _, trace1 = stage_one(
            source, target, mask, cfg.stage1, net, variant, frame_dir=out_dir
        )
        trace_base = _trace_base(cfg)
        write_trace_csv(trace1, _with_suffix(trace_base, "_stage1"))
        written["trace_stage1"] = _with_suffix(trace_base, "_stage1")
        if cfg.engine == "stage1":
            save_image(ImageTensor(i_b), cfg.out)
            written["out"] = cfg.out
        else:
            save_image(ImageTensor(i_b), _with_suffix(cfg.out, "_stage1"))
            written["stage1_out"] = _with_suffix(cfg.out, "_stage1")
            i_br, trace2 = stage_two(i_b, target, cfg.stage2, net, frame_dir=out_dir)
            write_trace_csv(trace2, _with_suffix(trace_base, "_stage2"))
            written["trace_stage2"] = _with_suffix(trace_base, "_stage2")
            save_image(ImageTensor(i_br), cfg.out)
            written["out"] = cfg.out

    manifest_path = _with_suffix(cfg.out, "_manifest")
    manifest_path = os.path.splitext(manifest_path)[0] + ".json"
    write_manifest(cfg, manifest_path)
    written["manifest"] = manifest_path
    return written


def write_manifest(cfg: RunConfig, path: str) -> None:
    payload = asdict(cfg)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)


def config_from_manifest(path: str) -> RunConfig:
    with open(path) as fh:
        payload = json.load(fh)
    for key in ("stage1", "stage2"):
        if payload.get(key) is not None:
            stage = dict(payload[key])
            stage["weights"] = LossWeights(**stage["weights"])
            payload[key] = StageConfig(**stage)
    return RunConfig(**payload)


def run_from_manifest(path: str) -> dict:
    return run(config_from_manifest(path))
