"""Forward and backward implementations of every layer the engine uses.

Layer vocabulary: 3x3 convolution, depth-wise separable convolution (a
per-channel 3x3 stage followed by a 1x1 point-wise stage), point-wise
convolution, ReLU, 2x2 max pooling, blur pooling (binomial low-pass filter
before stride-2 subsampling), global average pooling, squeeze-and-excite
channel gating, a dense classifier head, and softmax.

Activations are NCHW rank-4 arrays throughout; the dense head and softmax
keep the convention with trailing 1x1 spatial dims.  Convolutions are
cross-correlations with "same" padding (pad=1) computed on the im2col +
matmul path; a direct-loop oracle lives in the test suite.  Backward passes
are hand-written per layer and validated against central finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import Rng, check_finite, default_dtype

CONV3 = "conv3"
CONV_DW = "conv_dw"
POINTWISE = "pointwise"
RELU = "relu"
MAXPOOL2 = "maxpool2"
BLURPOOL2 = "blurpool2"
GAP = "gap"
SQUEEZE_EXCITE = "squeeze_excite"
DENSE = "dense"
SOFTMAX = "softmax"

KINDS = (
    CONV3,
    CONV_DW,
    POINTWISE,
    RELU,
    MAXPOOL2,
    BLURPOOL2,
    GAP,
    SQUEEZE_EXCITE,
    DENSE,
    SOFTMAX,
)

# binomial 3x3 low-pass kernel; sums to 1 so constants pass through unchanged
BLUR_KERNEL = np.outer([1.0, 2.0, 1.0], [1.0, 2.0, 1.0]) / 16.0


@dataclass(frozen=True)
class LayerSpec:
    """Declarative description of one layer.

    ``in_channels``/``out_channels`` are required for parameterised kinds
    and may stay 0 for shape-preserving ones.  ``stride`` applies to the
    conv kinds; ``se_reduction`` divides the channel count to size the
    squeeze-and-excite hidden layer.
    """

    kind: str
    in_channels: int = 0
    out_channels: int = 0
    stride: int = 1
    se_reduction: int = 4

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.stride not in (1, 2):
            raise ValueError(f"stride must be 1 or 2, got {self.stride}")
        if self.in_channels < 1 or self.out_channels < 1:
            raise ValueError(f"{self.kind} needs positive channel counts")
        if self.kind not in (CONV3, CONV_DW, POINTWISE, DENSE):
            if self.in_channels != self.out_channels:
                raise ValueError(
                    f"{self.kind} preserves channel count; got "
                    f"{self.in_channels} -> {self.out_channels}")
        if self.kind == SQUEEZE_EXCITE and self.se_reduction < 1:
            raise ValueError("se_reduction must be >= 1")


class Layer:
    """Base class: forward caches what backward needs; params are named."""

    def __init__(self, spec: LayerSpec):
        self.spec = spec
        self._cache = None
        self._grads: dict[str, np.ndarray] = {}

    def forward(self, x: np.ndarray, train: bool = True) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def params(self) -> dict[str, np.ndarray]:
        return {}

    def grads(self) -> dict[str, np.ndarray]:
        return self._grads

    def param_count(self) -> int:
        """Closed-form trainable parameter count for this layer."""
        return 0

    def _require_cache(self):
        if self._cache is None:
            raise RuntimeError(f"{self.spec.kind}: backward called before forward")
        return self._cache

    def _verify_count(self):
        actual = sum(p.size for p in self.params().values())
        assert actual == self.param_count(), (
            f"{self.spec.kind}: param count formula {self.param_count()} != actual {actual}"
        )


def _he_init(rng: Rng, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    std = float(np.sqrt(2.0 / fan_in))
    n = int(np.prod(shape))
    return rng.normal_array(n, 0.0, std).reshape(shape).astype(default_dtype())


def _conv_out_hw(h: int, w: int, stride: int) -> tuple[int, int]:
    # pad=1, kernel=3: output is ceil(dim / stride) for stride 1 or 2
    return (h - 1) // stride + 1, (w - 1) // stride + 1


def _im2col3(x: np.ndarray, stride: int) -> tuple[np.ndarray, int, int]:
    """Unfold 3x3/pad-1 windows into a (c*9, n*oh*ow) matrix."""
    n, c, h, w = x.shape
    oh, ow = _conv_out_hw(h, w, stride)
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    sn, sc, sh, sw = xp.strides
    win = np.lib.stride_tricks.as_strided(
        xp,
        shape=(n, c, oh, ow, 3, 3),
        strides=(sn, sc, sh * stride, sw * stride, sh, sw),
        writeable=False,
    )
    cols = win.transpose(1, 4, 5, 0, 2, 3).reshape(c * 9, n * oh * ow)
    return cols, oh, ow


def _fold_cols3(dcols: np.ndarray, x_shape, stride: int, oh: int, ow: int) -> np.ndarray:
    """Adjoint of _im2col3: scatter column gradients back onto the input."""
    n, c, h, w = x_shape
    dxp = np.zeros((n, c, h + 2, w + 2), dtype=dcols.dtype)
    dc = dcols.reshape(c, 3, 3, n, oh, ow)
    for u in range(3):
        for v in range(3):
            dxp[:, :, u : u + stride * oh : stride, v : v + stride * ow : stride] += (
                dc[:, u, v].transpose(1, 0, 2, 3)
            )
    return dxp[:, :, 1 : h + 1, 1 : w + 1]


class Conv3x3(Layer):
    """3x3 cross-correlation, pad 1, stride 1 or 2, with bias."""

    def __init__(self, spec: LayerSpec, rng: Rng):
        super().__init__(spec)
        cin, cout = spec.in_channels, spec.out_channels
        self.w = _he_init(rng, (cout, cin, 3, 3), 9 * cin)
        self.b = np.zeros(cout, dtype=default_dtype())
        self._verify_count()

    def params(self):
        return {"w": self.w, "b": self.b}

    def param_count(self):
        return 9 * self.spec.in_channels * self.spec.out_channels + self.spec.out_channels

    def forward(self, x, train=True):
        if x.shape[1] != self.spec.in_channels:
            raise ValueError(
                f"conv3: expected {self.spec.in_channels} input channels, got {x.shape[1]}"
            )
        n = x.shape[0]
        cols, oh, ow = _im2col3(x, self.spec.stride)
        wmat = self.w.reshape(self.spec.out_channels, -1)
        out = wmat @ cols
        out += self.b[:, None]
        out = np.ascontiguousarray(
            out.reshape(self.spec.out_channels, n, oh, ow).transpose(1, 0, 2, 3)
        )
        if train:
            self._cache = (cols, x.shape, oh, ow)
        return out

    def backward(self, grad_out):
        cols, x_shape, oh, ow = self._require_cache()
        cout = self.spec.out_channels
        gmat = grad_out.transpose(1, 0, 2, 3).reshape(cout, -1)
        self._grads = {
            "w": (gmat @ cols.T).reshape(self.w.shape),
            "b": gmat.sum(axis=1),
        }
        dcols = self.w.reshape(cout, -1).T @ gmat
        return _fold_cols3(dcols, x_shape, self.spec.stride, oh, ow)


def _depthwise3_forward(x: np.ndarray, k: np.ndarray, stride: int):
    """Per-channel 3x3 conv (pad 1): nine shifted slice-accumulates."""
    n, c, h, w = x.shape
    oh, ow = _conv_out_hw(h, w, stride)
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    out = np.zeros((n, c, oh, ow), dtype=x.dtype)
    for u in range(3):
        for v in range(3):
            out += xp[:, :, u : u + stride * oh : stride, v : v + stride * ow : stride] * k[
                None, :, u, v, None, None
            ]
    return out, xp, oh, ow


def _pointwise_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray):
    """1x1 conv: a per-pixel channel-mixing matmul."""
    n, cin, h, w_ = x.shape
    xm = x.transpose(1, 0, 2, 3).reshape(cin, -1)
    out = w @ xm
    out += b[:, None]
    return np.ascontiguousarray(out.reshape(w.shape[0], n, h, w_).transpose(1, 0, 2, 3)), xm


def _pointwise_backward(grad_out: np.ndarray, xm: np.ndarray, w: np.ndarray, in_shape):
    n, cin, h, w_ = in_shape
    cout = grad_out.shape[1]
    gmat = grad_out.transpose(1, 0, 2, 3).reshape(cout, -1)
    dw = gmat @ xm.T
    db = gmat.sum(axis=1)
    dx = np.ascontiguousarray((w.T @ gmat).reshape(cin, n, h, w_).transpose(1, 0, 2, 3))
    return dx, dw, db


class DepthwiseSeparable(Layer):
    """Per-channel 3x3 conv (+bias) followed by a 1x1 point-wise conv (+bias).

    No activation between the two stages; the composition is linear.
    """

    def __init__(self, spec: LayerSpec, rng: Rng):
        super().__init__(spec)
        cin, cout = spec.in_channels, spec.out_channels
        self.dw_w = _he_init(rng, (cin, 3, 3), 9)
        self.dw_b = np.zeros(cin, dtype=default_dtype())
        self.pw_w = _he_init(rng, (cout, cin), cin)
        self.pw_b = np.zeros(cout, dtype=default_dtype())
        self._verify_count()

    def params(self):
        return {"dw_w": self.dw_w, "dw_b": self.dw_b, "pw_w": self.pw_w, "pw_b": self.pw_b}

    def param_count(self):
        cin, cout = self.spec.in_channels, self.spec.out_channels
        return 9 * cin + cin + cin * cout + cout

    def forward(self, x, train=True):
        if x.shape[1] != self.spec.in_channels:
            raise ValueError(
                f"conv_dw: expected {self.spec.in_channels} input channels, got {x.shape[1]}"
            )
        mid, xp, oh, ow = _depthwise3_forward(x, self.dw_w, self.spec.stride)
        mid += self.dw_b[None, :, None, None]
        out, mid_m = _pointwise_forward(mid, self.pw_w, self.pw_b)
        if train:
            self._cache = (xp, mid_m, x.shape, (x.shape[0], x.shape[1], oh, ow))
        return out

    def backward(self, grad_out):
        xp, mid_m, x_shape, mid_shape = self._require_cache()
        stride = self.spec.stride
        n, cin, h, w = x_shape
        _, _, oh, ow = mid_shape

        dmid, dpw_w, dpw_b = _pointwise_backward(grad_out, mid_m, self.pw_w, mid_shape)
        ddw_w = np.empty_like(self.dw_w)
        dxp = np.zeros_like(xp)
        for u in range(3):
            for v in range(3):
                sl = xp[:, :, u : u + stride * oh : stride, v : v + stride * ow : stride]
                ddw_w[:, u, v] = (dmid * sl).sum(axis=(0, 2, 3))
                dxp[:, :, u : u + stride * oh : stride, v : v + stride * ow : stride] += (
                    dmid * self.dw_w[None, :, u, v, None, None]
                )
        self._grads = {
            "dw_w": ddw_w,
            "dw_b": dmid.sum(axis=(0, 2, 3)),
            "pw_w": dpw_w,
            "pw_b": dpw_b,
        }
        return dxp[:, :, 1 : h + 1, 1 : w + 1]


class PointwiseConv(Layer):
    """Standalone 1x1 convolution."""

    def __init__(self, spec: LayerSpec, rng: Rng):
        super().__init__(spec)
        cin, cout = spec.in_channels, spec.out_channels
        self.w = _he_init(rng, (cout, cin), cin)
        self.b = np.zeros(cout, dtype=default_dtype())
        self._verify_count()

    def params(self):
        return {"w": self.w, "b": self.b}

    def param_count(self):
        return self.spec.in_channels * self.spec.out_channels + self.spec.out_channels

    def forward(self, x, train=True):
        if x.shape[1] != self.spec.in_channels:
            raise ValueError(
                f"pointwise: expected {self.spec.in_channels} input channels, got {x.shape[1]}"
            )
        out, xm = _pointwise_forward(x, self.w, self.b)
        if train:
            self._cache = (xm, x.shape)
        return out

    def backward(self, grad_out):
        xm, x_shape = self._require_cache()
        dx, dw, db = _pointwise_backward(grad_out, xm, self.w, x_shape)
        self._grads = {"w": dw, "b": db}
        return dx


class ReLU(Layer):
    def forward(self, x, train=True):
        out = np.maximum(x, 0.0)
        if train:
            self._cache = x > 0
        return out

    def backward(self, grad_out):
        mask = self._require_cache()
        return grad_out * mask


class MaxPool2(Layer):
    """2x2/stride-2 max pooling; odd edges pool over the valid remainder."""

    def forward(self, x, train=True):
        n, c, h, w = x.shape
        oh, ow = (h + 1) // 2, (w + 1) // 2
        xp = np.full((n, c, 2 * oh, 2 * ow), -np.inf, dtype=x.dtype)
        xp[:, :, :h, :w] = x
        win = xp.reshape(n, c, oh, 2, ow, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, oh, ow, 4)
        idx = win.argmax(axis=-1)
        out = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]
        if train:
            self._cache = (idx, x.shape)
        return out

    def backward(self, grad_out):
        idx, x_shape = self._require_cache()
        n, c, h, w = x_shape
        oh, ow = grad_out.shape[2], grad_out.shape[3]
        dwin = np.zeros((n, c, oh, ow, 4), dtype=grad_out.dtype)
        np.put_along_axis(dwin, idx[..., None], grad_out[..., None], axis=-1)
        dxp = dwin.reshape(n, c, oh, ow, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(
            n, c, 2 * oh, 2 * ow
        )
        return np.ascontiguousarray(dxp[:, :, :h, :w])


class BlurPool2(Layer):
    """Binomial 3x3 blur (reflect padding) followed by stride-2 subsampling."""

    def forward(self, x, train=True):
        n, c, h, w = x.shape
        if h < 2 or w < 2:
            raise ValueError(f"blurpool2 needs h, w >= 2, got {h}x{w}")
        k = BLUR_KERNEL.astype(x.dtype)
        xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)), mode="reflect")
        blur = np.zeros((n, c, h, w), dtype=x.dtype)
        for u in range(3):
            for v in range(3):
                blur += k[u, v] * xp[:, :, u : u + h, v : v + w]
        out = np.ascontiguousarray(blur[:, :, ::2, ::2])
        if train:
            self._cache = x.shape
        return out

    def backward(self, grad_out):
        n, c, h, w = self._require_cache()
        k = BLUR_KERNEL.astype(grad_out.dtype)
        dblur = np.zeros((n, c, h, w), dtype=grad_out.dtype)
        dblur[:, :, ::2, ::2] = grad_out
        dxp = np.zeros((n, c, h + 2, w + 2), dtype=grad_out.dtype)
        for u in range(3):
            for v in range(3):
                dxp[:, :, u : u + h, v : v + w] += k[u, v] * dblur
        # adjoint of the reflect padding: fold pad rows/cols onto their sources
        dq = dxp[:, :, :, 1 : w + 1].copy()
        dq[:, :, :, 1] += dxp[:, :, :, 0]
        dq[:, :, :, w - 2] += dxp[:, :, :, w + 1]
        dx = dq[:, :, 1 : h + 1, :].copy()
        dx[:, :, 1, :] += dq[:, :, 0, :]
        dx[:, :, h - 2, :] += dq[:, :, h + 1, :]
        return dx


class GlobalAvgPool(Layer):
    def forward(self, x, train=True):
        out = x.mean(axis=(2, 3), keepdims=True)
        if train:
            self._cache = x.shape
        return out

    def backward(self, grad_out):
        n, c, h, w = self._require_cache()
        return np.broadcast_to(grad_out / (h * w), (n, c, h, w)).copy()


class SqueezeExcite(Layer):
    """Channel gating: GAP -> dense/ReLU -> dense/sigmoid -> scale channels."""

    def __init__(self, spec: LayerSpec, rng: Rng):
        super().__init__(spec)
        c = spec.in_channels
        hidden = max(1, c // spec.se_reduction)
        self.hidden = hidden
        self.w1 = _he_init(rng, (hidden, c), c)
        self.b1 = np.zeros(hidden, dtype=default_dtype())
        self.w2 = _he_init(rng, (c, hidden), hidden)
        self.b2 = np.zeros(c, dtype=default_dtype())
        self._verify_count()

    def params(self):
        return {"w1": self.w1, "b1": self.b1, "w2": self.w2, "b2": self.b2}

    def param_count(self):
        c, hdn = self.spec.in_channels, self.hidden
        return c * hdn + hdn + hdn * c + c

    def forward(self, x, train=True):
        if x.shape[1] != self.spec.in_channels:
            raise ValueError(
                f"squeeze_excite: expected {self.spec.in_channels} channels, got {x.shape[1]}"
            )
        s = x.mean(axis=(2, 3))                      # (n, c)
        h1 = s @ self.w1.T + self.b1                 # (n, hidden)
        a1 = np.maximum(h1, 0.0)
        z = a1 @ self.w2.T + self.b2                 # (n, c)
        z = np.clip(z, -60.0, 60.0)                  # gate saturates; keeps exp in range
        g = 1.0 / (1.0 + np.exp(-z))
        out = x * g[:, :, None, None]
        if train:
            self._cache = (x, s, h1, a1, g)
        return out

    def backward(self, grad_out):
        x, s, h1, a1, g = self._require_cache()
        n, c, h, w = x.shape
        dg = (grad_out * x).sum(axis=(2, 3))
        dx = grad_out * g[:, :, None, None]
        dz = dg * g * (1.0 - g)
        da1 = dz @ self.w2
        dh1 = da1 * (h1 > 0)
        ds = dh1 @ self.w1
        dx += (ds / (h * w))[:, :, None, None]
        self._grads = {
            "w1": dh1.T @ s,
            "b1": dh1.sum(axis=0),
            "w2": dz.T @ a1,
            "b2": dz.sum(axis=0),
        }
        return dx


class Dense(Layer):
    """Affine map on the flattened (c*h*w) features; output stays NCHW."""

    def __init__(self, spec: LayerSpec, rng: Rng):
        super().__init__(spec)
        self.w = _he_init(rng, (spec.out_channels, spec.in_channels), spec.in_channels)
        self.b = np.zeros(spec.out_channels, dtype=default_dtype())
        self._verify_count()

    def params(self):
        return {"w": self.w, "b": self.b}

    def param_count(self):
        return self.spec.in_channels * self.spec.out_channels + self.spec.out_channels

    def forward(self, x, train=True):
        n = x.shape[0]
        flat = x.reshape(n, -1)
        if flat.shape[1] != self.spec.in_channels:
            raise ValueError(
                f"dense: expected {self.spec.in_channels} features, got {flat.shape[1]}"
            )
        out = flat @ self.w.T + self.b
        if train:
            self._cache = (flat, x.shape)
        return out.reshape(n, self.spec.out_channels, 1, 1)

    def backward(self, grad_out):
        flat, x_shape = self._require_cache()
        n = x_shape[0]
        gmat = grad_out.reshape(n, -1)
        self._grads = {"w": gmat.T @ flat, "b": gmat.sum(axis=0)}
        return (gmat @ self.w).reshape(x_shape)


class Softmax(Layer):
    """Softmax over the channel axis; rows are positive and sum to 1."""

    def forward(self, x, train=True):
        z = x - x.max(axis=1, keepdims=True)
        e = np.exp(z)
        out = e / e.sum(axis=1, keepdims=True)
        if train:
            self._cache = out
        return out

    def backward(self, grad_out):
        y = self._require_cache()
        dot = (grad_out * y).sum(axis=1, keepdims=True)
        return y * (grad_out - dot)


_PARAM_FREE = {RELU: ReLU, MAXPOOL2: MaxPool2, BLURPOOL2: BlurPool2, GAP: GlobalAvgPool, SOFTMAX: Softmax}
_PARAMETRIC = {
    CONV3: Conv3x3,
    CONV_DW: DepthwiseSeparable,
    POINTWISE: PointwiseConv,
    SQUEEZE_EXCITE: SqueezeExcite,
    DENSE: Dense,
}


def make_layer(spec: LayerSpec, rng: Rng) -> Layer:
    if spec.kind in _PARAM_FREE:
        return _PARAM_FREE[spec.kind](spec)
    return _PARAMETRIC[spec.kind](spec, rng)


class Network:
    """An ordered layer stack with named parameters and hand-written backprop."""

    def __init__(self, name: str, layers: list[Layer], input_dims: tuple[int, int, int],
                 num_classes: int):
        self.name = name
        self.layers = layers
        self.input_dims = tuple(input_dims)
        self.num_classes = num_classes

    def _check_input(self, x: np.ndarray) -> None:
        if x.ndim != 4 or x.shape[1:] != self.input_dims:
            raise ValueError(
                f"{self.name}: expected input (n, {', '.join(map(str, self.input_dims))}),"
                f" got {x.shape}")

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        self._check_input(x)
        for layer in self.layers:
            x = layer.forward(x, train=train)
            check_finite(x, f"{layer.spec.kind} output")
        return x

    def forward_logits(self, x: np.ndarray, train: bool = True) -> np.ndarray:
        """Forward pass that stops before the trailing softmax (fused loss)."""
        self._check_input(x)
        for layer in self._logit_layers():
            x = layer.forward(x, train=train)
            check_finite(x, f"{layer.spec.kind} output")
        return x

    def backward_from_logits(self, dlogits: np.ndarray) -> np.ndarray:
        grad = dlogits
        for layer in reversed(self._logit_layers()):
            grad = layer.backward(grad)
            check_finite(grad, f"{layer.spec.kind} input gradient")
        return grad

    def _logit_layers(self) -> list[Layer]:
        if self.layers and self.layers[-1].spec.kind == SOFTMAX:
            return self.layers[:-1]
        return self.layers

    def params(self) -> dict[str, np.ndarray]:
        out: dict[str, np.ndarray] = {}
        for i, layer in enumerate(self.layers):
            for name, arr in layer.params().items():
                out[f"{i:02d}.{layer.spec.kind}.{name}"] = arr
        return out

    def grads(self) -> dict[str, np.ndarray]:
        out: dict[str, np.ndarray] = {}
        for i, layer in enumerate(self.layers):
            for name, arr in layer.grads().items():
                out[f"{i:02d}.{layer.spec.kind}.{name}"] = arr
        return out

    def set_params(self, values: dict[str, np.ndarray]) -> None:
        """Copy new values into the existing parameter arrays (shape-checked)."""
        own = self.params()
        if set(values) != set(own):
            missing = set(own) - set(values)
            extra = set(values) - set(own)
            raise ValueError(f"parameter name mismatch: missing={sorted(missing)}, "
                             f"unexpected={sorted(extra)}")
        for name, arr in values.items():
            if own[name].shape != arr.shape:
                raise ValueError(f"{name}: shape mismatch {own[name].shape} vs {arr.shape}")
            own[name][...] = arr

    def param_count(self) -> int:
        return sum(layer.param_count() for layer in self.layers)
