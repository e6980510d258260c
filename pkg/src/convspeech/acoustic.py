"""Conv-GLU acoustic model with weight normalization and exact backprop.

The network stacks 1-D convolution -> gated linear unit -> dropout blocks and
ends in a width-1 projection to per-letter scores. All gradients are
hand-derived; `tests/` checks every tensor against finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DimensionError
from .frontend import FeatureMap


@dataclass
class ConvLayerSpec:
    in_channels: int
    out_channels: int  # post-GLU channels; the conv emits twice as many
    kernel_width: int
    stride: int = 1
    dropout_rate: float = 0.0

    def __post_init__(self):
        if min(self.in_channels, self.out_channels, self.kernel_width, self.stride) < 1:
            raise ConfigurationError("layer counts and widths must be >= 1")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigurationError("dropout_rate must be in [0, 1)")


@dataclass
class AcousticModelConfig:
    layers: list[ConvLayerSpec]
    alphabet_size: int

    def __post_init__(self):
        if self.alphabet_size < 2:
            raise ConfigurationError("alphabet must have at least 2 letters")
        for prev, cur in zip(self.layers, self.layers[1:]):
            if prev.out_channels != cur.in_channels:
                raise ConfigurationError(
                    f"layer emits {prev.out_channels} channels but next expects {cur.in_channels}"
                )


def desk_scale_config(input_channels: int, alphabet_size: int) -> AcousticModelConfig:
    """Default architecture: 4 conv-GLU layers with growing channel counts."""
    widths = [32, 64, 96, 128]
    layers = []
    prev = input_channels
    for w in widths:
        layers.append(ConvLayerSpec(prev, w, kernel_width=13, dropout_rate=0.25))
        prev = w
    return AcousticModelConfig(layers, alphabet_size)


@dataclass
class EmissionTable:
    """Per-frame, per-letter acoustic scores (T x |A|)."""

    scores: np.ndarray
    normalized: bool = False

    @property
    def num_frames(self) -> int:
        return self.scores.shape[0]

    @property
    def alphabet_size(self) -> int:
        return self.scores.shape[1]


def glu(pre_activation: np.ndarray) -> np.ndarray:
    """Gated linear unit over the channel axis: a * sigmoid(b)."""
    channels = pre_activation.shape[0]
    if channels % 2:
        raise ConfigurationError(f"GLU needs an even channel count, got {channels}")
    half = channels // 2
    a, b = pre_activation[:half], pre_activation[half:]
    return a * _sigmoid(b)


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def glu_backward(a: np.ndarray, gate: np.ndarray, d_out: np.ndarray) -> np.ndarray:
    """Gradient w.r.t. the pre-activation given the cached half/gate pair."""
    return np.concatenate([d_out * gate, d_out * a * gate * (1.0 - gate)], axis=0)


def effective_weight(v: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Weight-norm reparameterization: w_o = g_o * v_o / ||v_o||."""
    norms = np.sqrt((v.reshape(v.shape[0], -1) ** 2).sum(axis=1))
    return v * (g / norms)[:, None, None]


def weight_norm_backward(v: np.ndarray, g: np.ndarray, d_w: np.ndarray):
    flat_v = v.reshape(v.shape[0], -1)
    flat_dw = d_w.reshape(d_w.shape[0], -1)
    norms = np.sqrt((flat_v**2).sum(axis=1))
    dot = (flat_dw * flat_v).sum(axis=1)
    d_g = dot / norms
    d_v = (g / norms)[:, None] * flat_dw - (g * dot / norms**3)[:, None] * flat_v
    return d_v.reshape(v.shape), d_g


def conv1d(
    x: np.ndarray,
    weight: np.ndarray,
    bias: np.ndarray,
    stride: int = 1,
    pad_left: int | None = None,
    pad_right: int | None = None,
    want_cache: bool = False,
):
    """1-D cross-correlation. x: (C_in, T), weight: (C_out, C_in, K).

    Default padding is floor(K/2) on each side, preserving frame alignment
    at stride 1.
    """
    c_out, c_in_w, kw = weight.shape
    if x.shape[0] != c_in_w:
        raise DimensionError(f"input has {x.shape[0]} channels, weight expects {c_in_w}")
    if pad_left is None:
        pad_left = kw // 2
    if pad_right is None:
        pad_right = kw // 2
    t_in = x.shape[1]
    padded = np.zeros((c_in_w, t_in + pad_left + pad_right))
    padded[:, pad_left : pad_left + t_in] = x
    t_out = (padded.shape[1] - kw) // stride + 1
    if t_out < 1:
        raise DimensionError(f"{t_in} frames too few for kernel width {kw}")
    cols = np.lib.stride_tricks.sliding_window_view(padded, kw, axis=1)[:, ::stride, :]
    cols = cols[:, :t_out, :].transpose(1, 0, 2).reshape(t_out, c_in_w * kw)
    out = (cols @ weight.reshape(c_out, -1).T + bias).T
    if not want_cache:
        return out
    cache = {
        "cols": cols,
        "weight": weight,
        "stride": stride,
        "pad_left": pad_left,
        "t_in": t_in,
        "kw": kw,
        "c_in": c_in_w,
        "padded_len": padded.shape[1],
    }
    return out, cache


def conv1d_backward(cache: dict, d_out: np.ndarray):
    """Gradients of conv1d w.r.t. weight, bias and input."""
    weight = cache["weight"]
    c_out, c_in, kw = weight.shape
    t_out = d_out.shape[1]
    d_weight = (d_out @ cache["cols"]).reshape(c_out, c_in, kw)
    d_bias = d_out.sum(axis=1)
    d_cols = weight.reshape(c_out, -1).T @ d_out  # (c_in*kw, t_out)
    d_cols = d_cols.reshape(c_in, kw, t_out)
    d_padded = np.zeros((c_in, cache["padded_len"]))
    stride = cache["stride"]
    positions = stride * np.arange(t_out)
    for w in range(kw):
        np.add.at(d_padded, (slice(None), positions + w), d_cols[:, w, :])
    pl = cache["pad_left"]
    return d_weight, d_bias, d_padded[:, pl : pl + cache["t_in"]]


class AcousticModel:
    """Feature maps in, emission tables out, with exact parameter gradients.

    Parameters are a flat dict: layer{i}_v / layer{i}_g / layer{i}_b for each
    conv-GLU block and proj_v / proj_g / proj_b for the final width-1
    projection to letter scores.
    """

    def __init__(
        self,
        config: AcousticModelConfig,
        rng: np.random.Generator | None = None,
        params: dict[str, np.ndarray] | None = None,
    ):
        self.config = config
        self.params = params if params is not None else self._init_params(
            rng or np.random.default_rng(0)
        )

    def _init_params(self, rng) -> dict[str, np.ndarray]:
        params = {}
        for i, spec in enumerate(self.config.layers):
            fan_in = spec.in_channels * spec.kernel_width
            v = rng.normal(0.0, 1.0 / np.sqrt(fan_in), (2 * spec.out_channels, spec.in_channels, spec.kernel_width))
            params[f"layer{i}_v"] = v
            params[f"layer{i}_g"] = np.sqrt((v.reshape(v.shape[0], -1) ** 2).sum(axis=1))
            params[f"layer{i}_b"] = np.zeros(2 * spec.out_channels)
        last = self.config.layers[-1].out_channels if self.config.layers else None
        if last is None:
            raise ConfigurationError("at least one conv-GLU layer is required")
        v = rng.normal(0.0, 1.0 / np.sqrt(last), (self.config.alphabet_size, last, 1))
        params["proj_v"] = v
        params["proj_g"] = np.sqrt((v.reshape(v.shape[0], -1) ** 2).sum(axis=1))
        params["proj_b"] = np.zeros(self.config.alphabet_size)
        return params

    def forward(
        self,
        features: FeatureMap | np.ndarray,
        training: bool = False,
        rng: np.random.Generator | None = None,
        normalized: bool = False,
        want_cache: bool = False,
    ):
        h = features.values if isinstance(features, FeatureMap) else np.asarray(features)
        if h.shape[0] != self.config.layers[0].in_channels:
            raise DimensionError(
                f"features have {h.shape[0]} channels, model expects "
                f"{self.config.layers[0].in_channels}"
            )
        if training and rng is None:
            rng = np.random.default_rng(0)
        layer_caches = []
        for i, spec in enumerate(self.config.layers):
            w = effective_weight(self.params[f"layer{i}_v"], self.params[f"layer{i}_g"])
            pre, conv_cache = conv1d(
                h, w, self.params[f"layer{i}_b"], stride=spec.stride, want_cache=True
            )
            half = pre.shape[0] // 2
            gate = _sigmoid(pre[half:])
            out = pre[:half] * gate
            mask = None
            if training and spec.dropout_rate > 0.0:
                keep = 1.0 - spec.dropout_rate
                mask = (rng.random(out.shape) < keep) / keep
                out = out * mask
            layer_caches.append(
                {"conv": conv_cache, "a": pre[:half], "gate": gate, "mask": mask, "w": w}
            )
            h = out
        w = effective_weight(self.params["proj_v"], self.params["proj_g"])
        scores_ct, proj_cache = conv1d(h, w, self.params["proj_b"], want_cache=True)
        softmax = None
        if normalized:
            shifted = scores_ct - scores_ct.max(axis=0, keepdims=True)
            expo = np.exp(shifted)
            softmax = expo / expo.sum(axis=0, keepdims=True)
            scores_ct = shifted - np.log(expo.sum(axis=0, keepdims=True))
        emissions = EmissionTable(scores_ct.T.copy(), normalized=normalized)
        if not want_cache:
            return emissions
        cache = {"layers": layer_caches, "proj": proj_cache, "softmax": softmax}
        return emissions, cache

    def backward(self, cache: dict, d_scores: np.ndarray):
        """Backprop from d(loss)/d(emissions) of shape (T, |A|).

        Returns (parameter gradient dict, gradient w.r.t. the input feature
        map) so training can continue into a learnable front-end.
        """
        d = np.asarray(d_scores).T  # (A, T)
        expected = (self.config.alphabet_size, cache["proj"]["cols"].shape[0])
        if d.shape != expected:
            raise DimensionError(
                f"upstream gradient shape {d_scores.shape} does not match emissions "
                f"{expected[::-1]}"
            )
        if cache["softmax"] is not None:
            d = d - cache["softmax"] * d.sum(axis=0, keepdims=True)
        grads = {}
        d_w, d_b, d = conv1d_backward(cache["proj"], d)
        grads["proj_v"], grads["proj_g"] = weight_norm_backward(
            self.params["proj_v"], self.params["proj_g"], d_w
        )
        grads["proj_b"] = d_b
        for i in reversed(range(len(self.config.layers))):
            lc = cache["layers"][i]
            if lc["mask"] is not None:
                d = d * lc["mask"]
            d_pre = glu_backward(lc["a"], lc["gate"], d)
            d_w, d_b, d = conv1d_backward(lc["conv"], d_pre)
            grads[f"layer{i}_v"], grads[f"layer{i}_g"] = weight_norm_backward(
                self.params[f"layer{i}_v"], self.params[f"layer{i}_g"], d_w
            )
            grads[f"layer{i}_b"] = d_b
        return grads, d
