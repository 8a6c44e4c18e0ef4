"""The five blending loss terms, each returning (value, pixel gradient).

Terms: second-order gradient (Poisson) loss, feature content loss, Gram
style loss, feature histogram loss and total variation.  All gradients
are analytic and exact for the implemented operators; the test suite pins
them against central finite differences.

Conventions: images are (H, W, C) float64 arrays; gradients match the
image shape.  Per-tap weight maps (alpha for content, beta for style,
gamma for histogram) select which network taps participate; taps absent
from a map contribute nothing.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .featurenet import FeatureExtractor
from .image import (
    Mask,
    composite_arrays,
    downsample_mask,
    laplacian_array,
    laplacian_adjoint_array,
)


class LossError(ValueError):
    pass


class GradVariant(enum.Enum):
    LITERAL_EQ6 = "eq6"
    CROP_OUT = "cropout"


class Stage(enum.Enum):
    ONE = 1
    TWO = 2


@dataclass
class LossWeights:
    """Scalar weights per term plus per-tap layer weights."""

    lambda_grad: float = 0.0
    lambda_cont: float = 0.0
    lambda_style: float = 0.0
    lambda_hist: float = 0.0
    lambda_tv: float = 0.0
    alpha: dict = field(default_factory=dict)
    beta: dict = field(default_factory=dict)
    gamma: dict = field(default_factory=dict)

    def __post_init__(self):
        scalars = [self.lambda_grad, self.lambda_cont, self.lambda_style,
                   self.lambda_hist, self.lambda_tv]
        scalars += list(self.alpha.values()) + list(self.beta.values()) + list(self.gamma.values())
        for v in scalars:
            if not np.isfinite(v) or v < 0:
                raise LossError(f"loss weights must be finite and >= 0, got {v}")


@dataclass
class LossReport:
    total: float
    terms: dict  # term name -> unweighted value (only active terms appear)
    gradient: np.ndarray


def _check_same_shape(*arrays):
    shapes = {a.shape[:2] for a in arrays}
    if len(shapes) != 1:
        raise LossError(f"operands disagree on height/width: {sorted(shapes)}")


def grad_loss(
    z: np.ndarray,
    source: np.ndarray,
    target: np.ndarray,
    mask: np.ndarray,
    variant: GradVariant = GradVariant.LITERAL_EQ6,
) -> tuple[float, np.ndarray]:
    """Second-order gradient mismatch of the composite.

    The composite blend = mask * z + (1 - mask) * target is formed
    internally, so the loss sees the target's boundary pixels.  The
    literal variant penalizes lap(blend) - (lap(source) + lap(target))
    over the whole frame; the crop-out variant restricts the residual to
    the mask and compares against lap(source) alone.  The returned
    gradient is with respect to z and is exactly zero wherever mask = 0.
    """
    _check_same_shape(z, source, target, mask[:, :, None])
    if z.shape != source.shape or z.shape != target.shape:
        raise LossError("z, source, target must share shape")
    h, w = z.shape[:2]
    m = mask[:, :, None]
    blend = composite_arrays(z, target, mask)
    lap_b = laplacian_array(blend)
    if variant is GradVariant.LITERAL_EQ6:
        residual = lap_b - (laplacian_array(source) + laplacian_array(target))
    else:
        residual = m * (lap_b - laplacian_array(source))
    value = float(np.sum(residual * residual)) / (2.0 * h * w)
    grad = m * laplacian_adjoint_array(residual) / (h * w)
    return value, grad


def _tap_mask(mask: np.ndarray, shape, cache: dict | None):
    key = shape[1:]
    if cache is not None and key in cache:
        return cache[key]
    m = downsample_mask(Mask.from_array(mask), shape[1], shape[2]).data
    if cache is not None:
        cache[key] = m
    return m


def content_loss_stage1(
    z: np.ndarray,
    source: np.ndarray,
    mask: np.ndarray,
    net: FeatureExtractor,
    alpha: dict,
    source_features: dict | None = None,
    mask_cache: dict | None = None,
) -> tuple[float, np.ndarray]:
    """Masked feature mismatch between the reconstruction and the source.

    The mask is box-downsampled to each tap's resolution and applied to
    the reconstruction's features only; the source is used unmasked (it
    arrives already cropped to the object).
    """
    active = {t: a for t, a in alpha.items() if a > 0}
    if not active:
        return 0.0, np.zeros_like(z)
    _validate_taps(net, active, "content")
    taps, state = net.forward_state(z)
    if source_features is None:
        source_features = net.features(source)
    value = 0.0
    tap_grads = {}
    for tap, a in active.items():
        f_z = taps[tap]
        f_s = source_features[tap]
        n_l = f_z.shape[0]
        m_l = f_z.shape[1] * f_z.shape[2]
        m_map = _tap_mask(mask, f_z.shape, mask_cache)[None, :, :]
        diff = f_z * m_map - f_s
        value += a / (2.0 * n_l * m_l) * float(np.sum(diff * diff))
        tap_grads[tap] = a / (n_l * m_l) * diff * m_map
    return value, net.input_grad_from_state(state, tap_grads)


def content_loss_plain(
    x: np.ndarray,
    reference: np.ndarray,
    net: FeatureExtractor,
    alpha: dict,
    reference_features: dict | None = None,
) -> tuple[float, np.ndarray]:
    """Unmasked feature mismatch (the stage-two content term)."""
    active = {t: a for t, a in alpha.items() if a > 0}
    if not active:
        return 0.0, np.zeros_like(x)
    _validate_taps(net, active, "content")
    taps, state = net.forward_state(x)
    if reference_features is None:
        reference_features = net.features(reference)
    value = 0.0
    tap_grads = {}
    for tap, a in active.items():
        diff = taps[tap] - reference_features[tap]
        n_l = diff.shape[0]
        m_l = diff.shape[1] * diff.shape[2]
        value += a / (2.0 * n_l * m_l) * float(np.sum(diff * diff))
        tap_grads[tap] = a / (n_l * m_l) * diff
    return value, net.input_grad_from_state(state, tap_grads)


def gram_matrix(f: np.ndarray) -> np.ndarray:
    """Channel-by-channel inner products of a (C, H, W) activation."""
    flat = f.reshape(f.shape[0], -1)
    return flat @ flat.T


def style_loss(
    x: np.ndarray,
    target: np.ndarray,
    net: FeatureExtractor,
    beta: dict,
    target_features: dict | None = None,
    input_is_composite: bool = False,
) -> tuple[float, np.ndarray]:
    """Gram-matrix mismatch against the target's texture statistics.

    input_is_composite only documents the caller's contract (stage one
    passes the composited blend, so the caller masks the returned gradient
    before applying it to the reconstructed pixels); the arithmetic is
    identical either way.
    """
    _check_same_shape(x, target)
    active = {t: b for t, b in beta.items() if b > 0}
    if not active:
        return 0.0, np.zeros_like(x)
    _validate_taps(net, active, "style")
    taps, state = net.forward_state(x)
    if target_features is None:
        target_features = net.features(target)
    value = 0.0
    tap_grads = {}
    for tap, b in active.items():
        f_x = taps[tap]
        n_l = f_x.shape[0]
        flat = f_x.reshape(n_l, -1)
        g_x = flat @ flat.T
        g_t = gram_matrix(target_features[tap])
        diff = g_x - g_t
        value += b / (2.0 * n_l * n_l) * float(np.sum(diff * diff))
        tap_grads[tap] = (2.0 * b / (n_l * n_l)) * (diff @ flat).reshape(f_x.shape)
    return value, net.input_grad_from_state(state, tap_grads)


def _round_half_up(a: np.ndarray) -> np.ndarray:
    return np.floor(a + 0.5).astype(np.int64)


def histogram_match(values, reference) -> np.ndarray:
    """Rank-based remap of `values` onto the empirical distribution of
    `reference`.

    Rank r of the sorted values reads the reference quantile at index
    round(r * (len_ref - 1) / (len_values - 1)) (half-up rounding); a
    single-element input reads the middle-rank reference value.  Output is
    in the original index order.  Equal-length inputs therefore return a
    permutation of the reference.
    """
    values = np.asarray(values, dtype=np.float64).ravel()
    reference = np.asarray(reference, dtype=np.float64).ravel()
    if values.size == 0 or reference.size == 0:
        raise LossError("histogram matching requires non-empty inputs")
    order = np.argsort(values, kind="stable")
    sorted_ref = np.sort(reference, kind="stable")
    if values.size == 1:
        positions = _round_half_up(np.array([(reference.size - 1) / 2.0]))
    else:
        ranks = np.arange(values.size, dtype=np.float64)
        positions = _round_half_up(ranks * (reference.size - 1) / (values.size - 1))
    out = np.empty_like(values)
    out[order] = sorted_ref[positions]
    return out


def hist_loss(
    x: np.ndarray,
    target: np.ndarray,
    net: FeatureExtractor,
    gamma: dict,
    target_features: dict | None = None,
) -> tuple[float, np.ndarray]:
    """Squared distance to the histogram-remapped activations.

    The remap R is recomputed from the current activations at every call
    but treated as a constant by the gradient, which is therefore
    2 * (F - R) back-propagated to the pixels.
    """
    active = {t: g for t, g in gamma.items() if g > 0}
    if not active:
        return 0.0, np.zeros_like(x)
    _validate_taps(net, active, "histogram")
    taps, state = net.forward_state(x)
    if target_features is None:
        target_features = net.features(target)
    value = 0.0
    tap_grads = {}
    for tap, g in active.items():
        f_x = taps[tap]
        matched = np.empty_like(f_x)
        for c in range(f_x.shape[0]):
            matched[c] = histogram_match(f_x[c], target_features[tap][c]).reshape(f_x.shape[1:])
        diff = f_x - matched
        value += g * float(np.sum(diff * diff))
        tap_grads[tap] = 2.0 * g * diff
    return value, net.input_grad_from_state(state, tap_grads)


def tv_loss(x: np.ndarray) -> tuple[float, np.ndarray]:
    """Anisotropic total variation; subgradient with sign(0) = 0."""
    dv = x[1:, :, :] - x[:-1, :, :]
    dh = x[:, 1:, :] - x[:, :-1, :]
    value = float(np.sum(np.abs(dv)) + np.sum(np.abs(dh)))
    grad = np.zeros_like(x)
    sv = np.sign(dv)
    sh = np.sign(dh)
    grad[1:, :, :] += sv
    grad[:-1, :, :] -= sv
    grad[:, 1:, :] += sh
    grad[:, :-1, :] -= sh
    return value, grad


def _validate_taps(net: FeatureExtractor, weights: dict, label: str):
    known = set(net.spec.taps)
    missing = [t for t in weights if t not in known]
    if missing:
        raise LossError(f"{label} taps {missing} not exposed by the network (taps: {sorted(known)})")


@dataclass
class StageOneRefs:
    """Per-run constants for stage one, computed once."""

    source_features: dict
    target_features: dict
    mask_cache: dict = field(default_factory=dict)


def stage_one_loss(
    z: np.ndarray,
    source: np.ndarray,
    target: np.ndarray,
    mask: np.ndarray,
    net: FeatureExtractor | None,
    weights: LossWeights,
    variant: GradVariant = GradVariant.LITERAL_EQ6,
    refs: StageOneRefs | None = None,
) -> LossReport:
    """Weighted seamless-blending objective over the reconstruction z.

    Style, histogram and TV act on the composite, so their gradients are
    masked into the blend region; the content term reads z directly with
    the mask applied in feature space.
    """
    m = mask[:, :, None]
    grad_total = np.zeros_like(z)
    terms = {}
    total = 0.0

    if weights.lambda_grad > 0:
        v, g = grad_loss(z, source, target, mask, variant)
        terms["grad"] = v
        total += weights.lambda_grad * v
        grad_total += weights.lambda_grad * g
    needs_net = (weights.lambda_cont > 0) or (weights.lambda_style > 0) or (weights.lambda_hist > 0)
    if needs_net and net is None:
        raise LossError("feature losses are active but no network was supplied")
    blend = None
    if weights.lambda_style > 0 or weights.lambda_hist > 0 or weights.lambda_tv > 0:
        blend = composite_arrays(z, target, mask)
    if weights.lambda_cont > 0:
        v, g = content_loss_stage1(
            z, source, mask, net, weights.alpha,
            source_features=refs.source_features if refs else None,
            mask_cache=refs.mask_cache if refs else None,
        )
        terms["content"] = v
        total += weights.lambda_cont * v
        grad_total += weights.lambda_cont * g
    if weights.lambda_style > 0:
        v, g = style_loss(
            blend, target, net, weights.beta,
            target_features=refs.target_features if refs else None,
            input_is_composite=True,
        )
        terms["style"] = v
        total += weights.lambda_style * v
        grad_total += weights.lambda_style * m * g
    if weights.lambda_hist > 0:
        v, g = hist_loss(
            blend, target, net, weights.gamma,
            target_features=refs.target_features if refs else None,
        )
        terms["hist"] = v
        total += weights.lambda_hist * v
        grad_total += weights.lambda_hist * m * g
    if weights.lambda_tv > 0:
        v, g = tv_loss(blend)
        terms["tv"] = v
        total += weights.lambda_tv * v
        grad_total += weights.lambda_tv * m * g
    return LossReport(total=total, terms=terms, gradient=grad_total)


@dataclass
class StageTwoRefs:
    """Per-run constants for stage two."""

    blend_features: dict
    target_features: dict


def stage_two_loss(
    x: np.ndarray,
    blend_ref: np.ndarray,
    target: np.ndarray,
    net: FeatureExtractor | None,
    weights: LossWeights,
    refs: StageTwoRefs | None = None,
) -> LossReport:
    """Style-refinement objective over the whole frame.

    Content is measured against the stage-one blend, style and histogram
    against the target; there is no gradient term and no mask.
    """
    grad_total = np.zeros_like(x)
    terms = {}
    total = 0.0
    needs_net = (weights.lambda_cont > 0) or (weights.lambda_style > 0) or (weights.lambda_hist > 0)
    if needs_net and net is None:
        raise LossError("feature losses are active but no network was supplied")
    if weights.lambda_cont > 0:
        v, g = content_loss_plain(
            x, blend_ref, net, weights.alpha,
            reference_features=refs.blend_features if refs else None,
        )
        terms["content"] = v
        total += weights.lambda_cont * v
        grad_total += weights.lambda_cont * g
    if weights.lambda_style > 0:
        v, g = style_loss(
            x, target, net, weights.beta,
            target_features=refs.target_features if refs else None,
        )
        terms["style"] = v
        total += weights.lambda_style * v
        grad_total += weights.lambda_style * g
    if weights.lambda_hist > 0:
        v, g = hist_loss(
            x, target, net, weights.gamma,
            target_features=refs.target_features if refs else None,
        )
        terms["hist"] = v
        total += weights.lambda_hist * v
        grad_total += weights.lambda_hist * g
    if weights.lambda_tv > 0:
        v, g = tv_loss(x)
        terms["tv"] = v
        total += weights.lambda_tv * v
        grad_total += weights.lambda_tv * g
    return LossReport(total=total, terms=terms, gradient=grad_total)


def total_loss(stage: Stage, **kwargs) -> LossReport:
    """Dispatch to the stage-one or stage-two objective."""
    if stage is Stage.ONE:
        return stage_one_loss(**kwargs)
    return stage_two_loss(**kwargs)
