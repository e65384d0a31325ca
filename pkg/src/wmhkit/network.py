"""Declarative feed-forward network description and its evaluator.

A network is an ordered list of named layers; Concat layers may reference any
earlier output by name, which is enough to express U-Net style skip
connections and the posterior-fusing meta network.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeCheckFailed, ShapeMismatch, UnknownConcatSource
from .layers import (
    BatchNorm,
    Concat,
    Conv3D,
    LayerSpec,
    MaxPool,
    ReLU,
    Softmax,
    UpsampleNearest,
    apply_layer,
    conv_output_dims,
)

DEFAULT_PROBE_SPATIAL = (16, 16, 16)


@dataclass(frozen=True)
class NetworkSpec:
    layers: tuple[tuple[str, LayerSpec], ...]
    in_channels: int
    out_channels: int

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple((str(n), l) for n, l in self.layers))
        names = [n for n, _ in self.layers]
        if len(set(names)) != len(names):
            raise ShapeCheckFailed(f"duplicate layer names in {names}")

    def validate(self, spatial: tuple[int, int, int] = DEFAULT_PROBE_SPATIAL) -> None:
        """Dry-run shape inference; raises ShapeCheckFailed on any violation."""
        try:
            shape = infer_shapes(self, spatial)[-1] if self.layers else (self.in_channels, *spatial)
        except (ShapeMismatch, UnknownConcatSource) as exc:
            raise ShapeCheckFailed(str(exc)) from exc
        if shape[0] != self.out_channels:
            raise ShapeCheckFailed(
                f"network produces {shape[0]} channels, declared {self.out_channels}"
            )


def _layer_shape(
    shape: tuple[int, int, int, int],
    layer: LayerSpec,
    produced: dict[str, tuple[int, int, int, int]],
) -> tuple[int, int, int, int]:
    c, *spatial = shape
    spatial = tuple(spatial)
    if isinstance(layer, Conv3D):
        cout, cin = layer.weights.shape[:2]
        if cin != c:
            raise ShapeMismatch(f"conv expects {cin} channels, upstream provides {c}")
        return (cout, *conv_output_dims(spatial, layer.weights.shape[2:], layer.stride, layer.padding))
    if isinstance(layer, BatchNorm):
        if layer.gamma.shape != (c,):
            raise ShapeMismatch(f"batchnorm sized for {layer.gamma.shape[0]} channels, got {c}")
        return shape
    if isinstance(layer, (ReLU, Softmax)):
        return shape
    if isinstance(layer, MaxPool):
        out = tuple((n - k) // s + 1 for n, k, s in zip(spatial, layer.kernel, layer.stride))
        if any(n < k for n, k in zip(spatial, layer.kernel)) or min(out) < 1:
            raise ShapeMismatch(f"pool {layer.kernel} does not fit input {spatial}")
        return (c, *out)
    if isinstance(layer, UpsampleNearest):
        return (c, *(n * layer.factor for n in spatial))
    if isinstance(layer, Concat):
        if layer.source not in produced:
            raise UnknownConcatSource(f"no earlier output named {layer.source!r}")
        src = produced[layer.source]
        if src[1:] != shape[1:]:
            raise ShapeMismatch(
                f"concat source {layer.source!r} spatial dims {src[1:]} != current {shape[1:]}"
            )
        return (c + src[0], *spatial)
    raise TypeError(f"unknown layer type {type(layer).__name__}")


def infer_shapes(
    net: NetworkSpec, spatial: tuple[int, int, int]
) -> list[tuple[int, int, int, int]]:
    """Shapes after each layer for an input of (in_channels, *spatial).

    Mirrors ``forward`` exactly: it succeeds iff forward succeeds on a
    conforming input of that size.
    """
    shape = (net.in_channels, *spatial)
    produced: dict[str, tuple[int, int, int, int]] = {}
    shapes = []
    for name, layer in net.layers:
        shape = _layer_shape(shape, layer, produced)
        produced[name] = shape
        shapes.append(shape)
    return shapes


def forward(net: NetworkSpec, x: np.ndarray) -> np.ndarray:
    """Run the network on a (C, D, H, W) float32 tensor.

    Named outputs are retained so later Concat layers can consume them.
    Deterministic: identical inputs and weights give bit-identical outputs.
    """
    x = np.asarray(x, dtype=np.float32)
    if x.ndim != 4 or x.shape[0] != net.in_channels:
        raise ShapeMismatch(
            f"network declares {net.in_channels} input channels, got tensor shape {x.shape}"
        )
    bindings: dict[str, np.ndarray] = {}
    for name, layer in net.layers:
        x = apply_layer(x, layer, bindings)
        bindings[name] = x
    if x.shape[0] != net.out_channels:
        raise ShapeMismatch(
            f"network produced {x.shape[0]} channels, declared {net.out_channels}"
        )
    return x
