"""Layer vocabulary and forward kernels for 3D CNN inference.

Activations are float32 arrays of shape (C, D, H, W). Convolution is
cross-correlation (no kernel flip) with zero padding, accumulated in float64
with a fixed reduction order so repeated runs are bit-identical.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeMismatch, UnknownConcatSource


@dataclass(frozen=True)
class Conv3D:
    weights: np.ndarray  # (Cout, Cin, kd, kh, kw)
    bias: np.ndarray  # (Cout,)
    stride: tuple[int, int, int] = (1, 1, 1)
    padding: tuple[int, int, int] = (0, 0, 0)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float32)
        b = np.asarray(self.bias, dtype=np.float32)
        if w.ndim != 5:
            raise ShapeMismatch(f"conv weights must be 5D, got shape {w.shape}")
        if b.shape != (w.shape[0],):
            raise ShapeMismatch(f"bias shape {b.shape} != ({w.shape[0]},)")
        if len(self.stride) != 3 or len(self.padding) != 3:
            raise ShapeMismatch(f"stride/padding must be triples: {self.stride}, {self.padding}")
        if any(s < 1 for s in self.stride) or any(p < 0 for p in self.padding):
            raise ShapeMismatch(f"bad stride {self.stride} or padding {self.padding}")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)


@dataclass(frozen=True)
class BatchNorm:
    gamma: np.ndarray
    beta: np.ndarray
    mean: np.ndarray
    var: np.ndarray
    eps: float = 1e-5

    def __post_init__(self):
        for name in ("gamma", "beta", "mean", "var"):
            arr = np.asarray(getattr(self, name), dtype=np.float32)
            if arr.ndim != 1:
                raise ShapeMismatch(f"batchnorm {name} must be 1D")
            object.__setattr__(self, name, arr)
        if not (self.gamma.shape == self.beta.shape == self.mean.shape == self.var.shape):
            raise ShapeMismatch("batchnorm parameter vectors must share one length")
        if np.any(self.var < 0):
            raise ShapeMismatch("batchnorm variance must be non-negative")


@dataclass(frozen=True)
class ReLU:
    pass


@dataclass(frozen=True)
class MaxPool:
    kernel: tuple[int, int, int] = (2, 2, 2)
    stride: tuple[int, int, int] = (2, 2, 2)

    def __post_init__(self):
        if len(self.kernel) != 3 or len(self.stride) != 3:
            raise ShapeMismatch(f"kernel/stride must be triples: {self.kernel}, {self.stride}")
        if any(k < 1 for k in self.kernel) or any(s < 1 for s in self.stride):
            raise ShapeMismatch(f"bad pool kernel {self.kernel} or stride {self.stride}")


@dataclass(frozen=True)
class UpsampleNearest:
    factor: int = 2

    def __post_init__(self):
        if self.factor < 1:
            raise ShapeMismatch(f"upsample factor must be >= 1, got {self.factor}")


@dataclass(frozen=True)
class Concat:
    source: str  # name of an earlier layer output


@dataclass(frozen=True)
class Softmax:
    pass


LayerSpec = Conv3D | BatchNorm | ReLU | MaxPool | UpsampleNearest | Concat | Softmax


def conv_output_dims(
    spatial: tuple[int, int, int],
    kernel: tuple[int, int, int],
    stride: tuple[int, int, int],
    padding: tuple[int, int, int],
) -> tuple[int, int, int]:
    out = tuple((n + 2 * p - k) // s + 1 for n, k, s, p in zip(spatial, kernel, stride, padding))
    if any(n + 2 * p - k < 0 for n, k, p in zip(spatial, kernel, padding)) or min(out) < 1:
        raise ShapeMismatch(
            f"kernel {kernel} stride {stride} padding {padding} does not fit input {spatial}"
        )
    return out


def conv3d(x: np.ndarray, p: Conv3D) -> np.ndarray:
    """Strided zero-padded cross-correlation over a (C, D, H, W) tensor."""
    cout, cin, kd, kh, kw = p.weights.shape
    if x.ndim != 4 or x.shape[0] != cin:
        raise ShapeMismatch(f"conv expects {cin} input channels, got tensor shape {x.shape}")
    do, ho, wo = conv_output_dims(x.shape[1:], (kd, kh, kw), p.stride, p.padding)
    sd, sh, sw = p.stride
    pd, ph, pw = p.padding

    d, h, w = x.shape[1:]
    xpad = np.zeros((cin, d + 2 * pd, h + 2 * ph, w + 2 * pw), dtype=np.float64)
    xpad[:, pd : pd + d, ph : ph + h, pw : pw + w] = x

    wt = p.weights.astype(np.float64)
    acc = np.zeros((cout, do, ho, wo), dtype=np.float64)
    for a in range(kd):
        for b in range(kh):
            for c in range(kw):
                sub = xpad[:, a : a + sd * do : sd, b : b + sh * ho : sh, c : c + sw * wo : sw]
                acc += np.tensordot(wt[:, :, a, b, c], sub, axes=(1, 0))
    acc += p.bias.astype(np.float64)[:, None, None, None]
    return acc.astype(np.float32)


def _maxpool(x: np.ndarray, layer: MaxPool) -> np.ndarray:
    kd, kh, kw = layer.kernel
    sd, sh, sw = layer.stride
    d, h, w = x.shape[1:]
    if kd > d or kh > h or kw > w:
        raise ShapeMismatch(f"pool kernel {layer.kernel} exceeds input {x.shape[1:]}")
    windows = np.lib.stride_tricks.sliding_window_view(x, (kd, kh, kw), axis=(1, 2, 3))
    windows = windows[:, ::sd, ::sh, ::sw]
    return windows.max(axis=(-3, -2, -1))


def _softmax_channels(x: np.ndarray) -> np.ndarray:
    z = x.astype(np.float64)
    z = z - z.max(axis=0, keepdims=True)
    e = np.exp(z)
    return (e / e.sum(axis=0, keepdims=True)).astype(np.float32)


def apply_layer(
    x: np.ndarray, layer: LayerSpec, bindings: dict[str, np.ndarray] | None = None
) -> np.ndarray:
    """Apply one layer to a (C, D, H, W) tensor.

    ``bindings`` maps earlier layer names to their outputs; only Concat reads
    it. Concat places the current tensor's channels first, then the source's.
    """
    if isinstance(layer, Conv3D):
        return conv3d(x, layer)
    if isinstance(layer, BatchNorm):
        c = x.shape[0]
        if any(arr.shape != (c,) for arr in (layer.gamma, layer.beta, layer.mean, layer.var)):
            raise ShapeMismatch(f"batchnorm parameters do not match {c} channels")
        shape = (c, 1, 1, 1)
        g = layer.gamma.astype(np.float64).reshape(shape)
        b = layer.beta.astype(np.float64).reshape(shape)
        m = layer.mean.astype(np.float64).reshape(shape)
        v = layer.var.astype(np.float64).reshape(shape)
        return (g * (x - m) / np.sqrt(v + layer.eps) + b).astype(np.float32)
    if isinstance(layer, ReLU):
        return np.maximum(x, np.float32(0.0))
    if isinstance(layer, MaxPool):
        return _maxpool(x, layer)
    if isinstance(layer, UpsampleNearest):
        out = x
        for axis in (1, 2, 3):
            out = np.repeat(out, layer.factor, axis=axis)
        return out
    if isinstance(layer, Concat):
        if bindings is None or layer.source not in bindings:
            raise UnknownConcatSource(f"no earlier output named {layer.source!r}")
        other = bindings[layer.source]
        if other.shape[1:] != x.shape[1:]:
            raise ShapeMismatch(
                f"concat source {layer.source!r} spatial dims {other.shape[1:]} "
                f"!= current {x.shape[1:]}"
            )
        return np.concatenate([x, other], axis=0)
    if isinstance(layer, Softmax):
        return _softmax_channels(x)
    raise TypeError(f"unknown layer type {type(layer).__name__}")
