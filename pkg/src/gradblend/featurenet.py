"""Minimal convolutional feature extractor with exact forward and backward.

Supports chains of 3x3 convolutions (stride 1, zero padding 1), ReLU and
2x2 max pooling (stride 2, odd trailing rows/columns dropped).  Activations
are (channels, height, width) float64; gradients are exact vector-Jacobian
products, verified against finite differences in the test suite.

Two concrete networks are provided: the VGG-16 prefix through conv4_3
(weights loaded from a BLW1 file) and a small deterministic test network
whose weights come from a seeded splitmix64 stream, so desk-scale tests
never need pretrained weights.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .rng import SplitMix64
from .weights import WeightStore

CONV = "conv3x3"
RELU = "relu"
POOL = "maxpool2x2"

VGG_MEAN = np.array([0.485, 0.456, 0.406])
VGG_STD = np.array([0.229, 0.224, 0.225])


class NetworkError(ValueError):
    """Spec/weight/input inconsistency."""


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    name: str
    in_channels: int = 0
    out_channels: int = 0


@dataclass(frozen=True)
class NetworkSpec:
    layers: tuple[LayerSpec, ...]
    taps: tuple[str, ...]

    def __post_init__(self):
        names = [l.name for l in self.layers]
        if len(set(names)) != len(names):
            raise NetworkError("layer names must be unique")
        missing = [t for t in self.taps if t not in names]
        if missing:
            raise NetworkError(f"tap names not in network: {missing}")
        if len(set(self.taps)) != len(self.taps):
            raise NetworkError("tap names must be unique")
        channels = None
        for l in self.layers:
            if l.kind == CONV:
                if channels is not None and l.in_channels != channels:
                    raise NetworkError(
                        f"layer {l.name}: in_channels {l.in_channels} != upstream {channels}"
                    )
                channels = l.out_channels
            elif l.kind not in (RELU, POOL):
                raise NetworkError(f"unknown layer kind {l.kind!r}")

    @property
    def input_channels(self) -> int:
        for l in self.layers:
            if l.kind == CONV:
                return l.in_channels
        raise NetworkError("network has no convolution layers")


@dataclass
class FeatureStack:
    """Tap-name -> activation tensor (channels, height, width)."""

    activations: dict[str, np.ndarray] = field(default_factory=dict)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.activations[name]


def validate_weights(spec: NetworkSpec, weights: WeightStore) -> None:
    for l in spec.layers:
        if l.kind != CONV:
            continue
        kname, bname = f"{l.name}.kernel", f"{l.name}.bias"
        if kname not in weights or bname not in weights:
            raise NetworkError(f"weights missing for layer {l.name!r}")
        kshape = weights[kname].shape
        want = (l.out_channels, l.in_channels, 3, 3)
        if kshape != want:
            raise NetworkError(f"{kname}: shape {kshape} != expected {want}")
        if weights[bname].shape != (l.out_channels,):
            raise NetworkError(f"{bname}: shape {weights[bname].shape} != ({l.out_channels},)")


def _conv_forward(x: np.ndarray, kernel: np.ndarray, bias: np.ndarray) -> np.ndarray:
    _, h, w = x.shape
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1)))
    out = np.tile(bias[:, None, None], (1, h, w))
    for di in range(3):
        for dj in range(3):
            out += np.tensordot(kernel[:, :, di, dj], xp[:, di : di + h, dj : dj + w], axes=([1], [0]))
    return out


def _conv_input_grad(g: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    _, h, w = g.shape
    gxp = np.zeros((kernel.shape[1], h + 2, w + 2))
    for di in range(3):
        for dj in range(3):
            gxp[:, di : di + h, dj : dj + w] += np.tensordot(
                kernel[:, :, di, dj], g, axes=([0], [0])
            )
    return gxp[:, 1:-1, 1:-1]


def _pool_forward(x: np.ndarray):
    c, h, w = x.shape
    he, we = (h // 2) * 2, (w // 2) * 2
    xc = x[:, :he, :we]
    # candidate order = row-major scan of each 2x2 block; np.argmax takes the
    # first maximal entry, which implements the documented tie-breaking
    cands = np.stack(
        [xc[:, 0::2, 0::2], xc[:, 0::2, 1::2], xc[:, 1::2, 0::2], xc[:, 1::2, 1::2]], axis=0
    )
    winner = np.argmax(cands, axis=0)
    out = np.take_along_axis(cands, winner[None], axis=0)[0]
    return out, winner


def _pool_input_grad(g: np.ndarray, winner: np.ndarray, in_shape) -> np.ndarray:
    c, h, w = in_shape
    he, we = (h // 2) * 2, (w // 2) * 2
    gx = np.zeros(in_shape)
    views = (
        gx[:, 0:he:2, 0:we:2],
        gx[:, 0:he:2, 1:we:2],
        gx[:, 1:he:2, 0:we:2],
        gx[:, 1:he:2, 1:we:2],
    )
    for cand, view in enumerate(views):
        view += g * (winner == cand)
    return gx


def _run_layers(spec: NetworkSpec, weights: WeightStore, x: np.ndarray):
    """Forward pass keeping every intermediate needed for backward."""
    if x.ndim != 3 or x.shape[0] != spec.input_channels:
        raise NetworkError(
            f"input shape {x.shape} incompatible with network expecting "
            f"{spec.input_channels} channels"
        )
    validate_weights(spec, weights)
    outputs = []
    extras = []
    cur = x
    for l in spec.layers:
        if l.kind == CONV:
            cur = _conv_forward(cur, weights[f"{l.name}.kernel"], weights[f"{l.name}.bias"])
            extras.append(None)
        elif l.kind == RELU:
            cur = np.maximum(cur, 0.0)
            extras.append(None)
        else:
            prev_shape = cur.shape
            cur, winner = _pool_forward(cur)
            extras.append((winner, prev_shape))
        outputs.append(cur)
    return outputs, extras


def forward(spec: NetworkSpec, weights: WeightStore, x: np.ndarray) -> FeatureStack:
    outputs, _ = _run_layers(spec, weights, x)
    by_name = {l.name: out for l, out in zip(spec.layers, outputs)}
    return FeatureStack({t: by_name[t] for t in spec.taps})


def backward(
    spec: NetworkSpec,
    weights: WeightStore,
    x: np.ndarray,
    tap_grads: dict[str, np.ndarray],
) -> np.ndarray:
    """d/dx of sum_taps <tap_grad, activation>. Missing taps mean zero."""
    outputs, extras = _run_layers(spec, weights, x)
    return _backward_from_state(spec, weights, x, outputs, extras, tap_grads)


def _backward_from_state(spec, weights, x, outputs, extras, tap_grads):
    known = {l.name for l in spec.layers}
    for name in tap_grads:
        if name not in known:
            raise NetworkError(f"unknown tap name {name!r}")
    g = np.zeros_like(outputs[-1])
    for i in range(len(spec.layers) - 1, -1, -1):
        l = spec.layers[i]
        if l.name in tap_grads:
            tg = np.asarray(tap_grads[l.name], dtype=np.float64)
            if tg.shape != outputs[i].shape:
                raise NetworkError(
                    f"tap grad {l.name!r} shape {tg.shape} != activation {outputs[i].shape}"
                )
            g = g + tg
        layer_input = outputs[i - 1] if i > 0 else x
        if l.kind == CONV:
            g = _conv_input_grad(g, weights[f"{l.name}.kernel"])
        elif l.kind == RELU:
            g = g * (layer_input > 0.0)
        else:
            winner, prev_shape = extras[i]
            g = _pool_input_grad(g, winner, prev_shape)
    return g


def tap_shapes(spec: NetworkSpec, in_h: int, in_w: int) -> dict[str, tuple[int, int, int]]:
    """Analytic (channels, h, w) per tap without running the network."""
    h, w = in_h, in_w
    channels = spec.input_channels
    shapes = {}
    for l in spec.layers:
        if l.kind == CONV:
            channels = l.out_channels
        elif l.kind == POOL:
            h, w = h // 2, w // 2
        if l.name in spec.taps:
            shapes[l.name] = (channels, h, w)
    return shapes


def preprocess(img: np.ndarray, mode: str = "vgg") -> np.ndarray:
    """(H, W, C) image in [0, 1] -> (C, H, W) network input.

    VGG mode normalizes per channel with the ImageNet mean/std stated in
    [0, 1] space; the test network uses identity preprocessing.
    """
    if mode == "identity":
        return np.ascontiguousarray(img.transpose(2, 0, 1))
    if mode == "vgg":
        if img.shape[2] != 3:
            raise NetworkError(f"VGG preprocessing needs 3 channels, got {img.shape[2]}")
        norm = (img - VGG_MEAN) / VGG_STD
        return np.ascontiguousarray(norm.transpose(2, 0, 1))
    raise NetworkError(f"unknown preprocessing mode {mode!r}")


class FeatureExtractor:
    """Network + weights + preprocessing, exposing pixel-space gradients.

    content_taps/style_taps name the default layers each loss reads;
    they differ between the VGG prefix and the test network.
    """

    def __init__(self, spec, weights, preproc, content_taps, style_taps):
        validate_weights(spec, weights)
        self.spec = spec
        self.weights = weights
        self.preproc = preproc
        self.content_taps = tuple(content_taps)
        self.style_taps = tuple(style_taps)

    def features(self, img: np.ndarray) -> dict[str, np.ndarray]:
        x = preprocess(img, self.preproc)
        return forward(self.spec, self.weights, x).activations

    def forward_state(self, img: np.ndarray):
        """Taps plus the retained state needed for input_grad_from_state."""
        x = preprocess(img, self.preproc)
        outputs, extras = _run_layers(self.spec, self.weights, x)
        by_name = {l.name: out for l, out in zip(self.spec.layers, outputs)}
        taps = {t: by_name[t] for t in self.spec.taps}
        return taps, (x, outputs, extras)

    def input_grad_from_state(self, state, tap_grads: dict[str, np.ndarray]) -> np.ndarray:
        x, outputs, extras = state
        g = _backward_from_state(self.spec, self.weights, x, outputs, extras, tap_grads)
        return self._to_pixel_space(g)

    def input_grad(self, img: np.ndarray, tap_grads: dict[str, np.ndarray]) -> np.ndarray:
        x = preprocess(img, self.preproc)
        g = backward(self.spec, self.weights, x, tap_grads)
        return self._to_pixel_space(g)

    def _to_pixel_space(self, g: np.ndarray) -> np.ndarray:
        g = g.transpose(1, 2, 0)
        if self.preproc == "vgg":
            g = g / VGG_STD
        return np.ascontiguousarray(g)


_VGG_PLAN = (
    ("conv1_1", 3, 64), ("conv1_2", 64, 64), ("pool1",),
    ("conv2_1", 64, 128), ("conv2_2", 128, 128), ("pool2",),
    ("conv3_1", 128, 256), ("conv3_2", 256, 256), ("conv3_3", 256, 256), ("pool3",),
    ("conv4_1", 256, 512), ("conv4_2", 512, 512), ("conv4_3", 512, 512),
)

VGG_CONV_LAYERS = tuple(p[0] for p in _VGG_PLAN if len(p) == 3)
VGG_STYLE_TAPS = ("conv1_2", "conv2_2", "conv3_3", "conv4_3")
VGG_CONTENT_TAPS = ("conv2_2",)


def vgg16_spec() -> NetworkSpec:
    """VGG-16 prefix through conv4_3. Taps expose the convolution outputs."""
    layers = []
    for entry in _VGG_PLAN:
        if len(entry) == 1:
            layers.append(LayerSpec(POOL, entry[0]))
        else:
            name, cin, cout = entry
            layers.append(LayerSpec(CONV, name, cin, cout))
            layers.append(LayerSpec(RELU, f"relu{name[4:]}"))
    return NetworkSpec(tuple(layers), VGG_STYLE_TAPS)


def test_network(seed: int) -> tuple[NetworkSpec, WeightStore]:
    """Small deterministic network for desk-scale testing.

    Conv3x3[3->8], ReLU (tap "t1"), MaxPool, Conv3x3[8->16], ReLU (tap
    "t2").  Weights are uniform on [-0.1, 0.1] from splitmix64(seed),
    drawn in C order as conv1.kernel, conv1.bias, conv2.kernel, conv2.bias,
    so the same seed reproduces the same network anywhere.
    """
    spec = NetworkSpec(
        (
            LayerSpec(CONV, "conv1", 3, 8),
            LayerSpec(RELU, "t1"),
            LayerSpec(POOL, "pool1"),
            LayerSpec(CONV, "conv2", 8, 16),
            LayerSpec(RELU, "t2"),
        ),
        taps=("t1", "t2"),
    )
    rng = SplitMix64(seed)
    store = WeightStore()
    store.add("conv1.kernel", rng.fill_uniform((8, 3, 3, 3), -0.1, 0.1))
    store.add("conv1.bias", rng.fill_uniform((8,), -0.1, 0.1))
    store.add("conv2.kernel", rng.fill_uniform((16, 8, 3, 3), -0.1, 0.1))
    store.add("conv2.bias", rng.fill_uniform((16,), -0.1, 0.1))
    return spec, store


def testnet_extractor(seed: int) -> FeatureExtractor:
    spec, store = test_network(seed)
    return FeatureExtractor(spec, store, "identity", content_taps=("t2",), style_taps=("t1", "t2"))


def vgg_extractor(weights: WeightStore) -> FeatureExtractor:
    return FeatureExtractor(
        vgg16_spec(), weights, "vgg", content_taps=VGG_CONTENT_TAPS, style_taps=VGG_STYLE_TAPS
    )
