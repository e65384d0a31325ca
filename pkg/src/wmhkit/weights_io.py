"""SGWT weight container: a JSON manifest plus one float32 blob.

Layout: bytes 0-3 magic ``SGWT``; bytes 4-7 version (u32 LE, currently 1);
bytes 8-11 manifest length (u32 LE); UTF-8 JSON manifest; tensor blob of
little-endian float32 values with offsets relative to the blob start.

The manifest lists one or more networks. A bundle for the full ensemble tags
each network with a role (``axial``/``sagittal``/``coronal``/``meta``);
single-network containers leave the role null.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .errors import BadMagic, BadManifest, BadVersion, ShapeMismatch, TruncatedTensor
from .layers import BatchNorm, Concat, Conv3D, LayerSpec, MaxPool, ReLU, Softmax, UpsampleNearest
from .network import NetworkSpec

MAGIC = b"SGWT"
VERSION = 1

ENSEMBLE_ROLES = ("axial", "sagittal", "coronal", "meta")


class _BlobWriter:
    def __init__(self):
        self.chunks: list[bytes] = []
        self.offset = 0

    def add(self, arr: np.ndarray) -> dict:
        entry = {"shape": list(arr.shape), "offset": self.offset}
        raw = np.asarray(arr, dtype="<f4").tobytes()
        self.chunks.append(raw)
        self.offset += len(raw)
        return entry


def _layer_to_manifest(name: str, layer: LayerSpec, blob: _BlobWriter) -> dict:
    if isinstance(layer, Conv3D):
        return {
            "name": name,
            "type": "conv3d",
            "stride": list(layer.stride),
            "padding": list(layer.padding),
            "weights": blob.add(layer.weights),
            "bias": blob.add(layer.bias),
        }
    if isinstance(layer, BatchNorm):
        return {
            "name": name,
            "type": "batchnorm",
            "eps": layer.eps,
            "gamma": blob.add(layer.gamma),
            "beta": blob.add(layer.beta),
            "mean": blob.add(layer.mean),
            "var": blob.add(layer.var),
        }
    if isinstance(layer, ReLU):
        return {"name": name, "type": "relu"}
    if isinstance(layer, MaxPool):
        return {"name": name, "type": "maxpool", "kernel": list(layer.kernel), "stride": list(layer.stride)}
    if isinstance(layer, UpsampleNearest):
        return {"name": name, "type": "upsample", "factor": layer.factor}
    if isinstance(layer, Concat):
        return {"name": name, "type": "concat", "source": layer.source}
    if isinstance(layer, Softmax):
        return {"name": name, "type": "softmax"}
    raise TypeError(f"unknown layer type {type(layer).__name__}")


def _network_to_manifest(net: NetworkSpec, role: str | None, blob: _BlobWriter) -> dict:
    return {
        "role": role,
        "in_channels": net.in_channels,
        "out_channels": net.out_channels,
        "layers": [_layer_to_manifest(name, layer, blob) for name, layer in net.layers],
    }


def _assemble(manifest: dict, blob: _BlobWriter) -> bytes:
    body = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode("utf-8")
    header = MAGIC + struct.pack("<II", VERSION, len(body))
    return header + body + b"".join(blob.chunks)


def save_network(net: NetworkSpec, role: str | None = None) -> bytes:
    blob = _BlobWriter()
    manifest = {"networks": [_network_to_manifest(net, role, blob)]}
    return _assemble(manifest, blob)


def save_ensemble(networks: dict[str, NetworkSpec]) -> bytes:
    """Bundle role-tagged networks (axial/sagittal/coronal/meta) in one container."""
    blob = _BlobWriter()
    manifest = {
        "networks": [_network_to_manifest(net, role, blob) for role, net in sorted(networks.items())]
    }
    return _assemble(manifest, blob)


def _read_tensor(entry, blob: bytes, what: str) -> np.ndarray:
    if not isinstance(entry, dict) or "shape" not in entry or "offset" not in entry:
        raise BadManifest(f"{what}: tensor entry must carry shape and offset")
    shape = entry["shape"]
    offset = entry["offset"]
    if (
        not isinstance(shape, list)
        or not all(isinstance(d, int) and d >= 1 for d in shape)
        or not isinstance(offset, int)
        or offset < 0
    ):
        raise BadManifest(f"{what}: malformed tensor entry {entry}")
    count = 1
    for d in shape:
        count *= d
    end = offset + 4 * count
    if end > len(blob):
        raise TruncatedTensor(
            f"{what}: needs bytes [{offset}, {end}) but blob has {len(blob)}"
        )
    flat = np.frombuffer(blob, dtype="<f4", count=count, offset=offset)
    return flat.reshape(shape).astype(np.float32)


def _layer_from_manifest(entry: dict, blob: bytes) -> tuple[str, LayerSpec]:
    if not isinstance(entry, dict) or "type" not in entry or "name" not in entry:
        raise BadManifest(f"layer entry must carry name and type: {entry}")
    name = str(entry["name"])
    kind = entry["type"]
    try:
        if kind == "conv3d":
            layer = Conv3D(
                weights=_read_tensor(entry["weights"], blob, name),
                bias=_read_tensor(entry["bias"], blob, name),
                stride=tuple(entry.get("stride", [1, 1, 1])),
                padding=tuple(entry.get("padding", [0, 0, 0])),
            )
        elif kind == "batchnorm":
            layer = BatchNorm(
                gamma=_read_tensor(entry["gamma"], blob, name),
                beta=_read_tensor(entry["beta"], blob, name),
                mean=_read_tensor(entry["mean"], blob, name),
                var=_read_tensor(entry["var"], blob, name),
                eps=float(entry.get("eps", 1e-5)),
            )
        elif kind == "relu":
            layer = ReLU()
        elif kind == "maxpool":
            layer = MaxPool(kernel=tuple(entry["kernel"]), stride=tuple(entry["stride"]))
        elif kind == "upsample":
            layer = UpsampleNearest(factor=int(entry["factor"]))
        elif kind == "concat":
            layer = Concat(source=str(entry["source"]))
        elif kind == "softmax":
            layer = Softmax()
        else:
            raise BadManifest(f"unknown layer type {kind!r}")
    except KeyError as exc:
        raise BadManifest(f"layer {name!r} missing field {exc}") from exc
    except (ShapeMismatch, TypeError, ValueError) as exc:
        raise BadManifest(f"layer {name!r} has malformed parameters: {exc}") from exc
    return name, layer


def _network_from_manifest(entry: dict, blob: bytes) -> NetworkSpec:
    try:
        layers = tuple(_layer_from_manifest(e, blob) for e in entry["layers"])
        net = NetworkSpec(
            layers=layers,
            in_channels=int(entry["in_channels"]),
            out_channels=int(entry["out_channels"]),
        )
    except KeyError as exc:
        raise BadManifest(f"network entry missing field {exc}") from exc
    except (TypeError, ValueError) as exc:
        raise BadManifest(f"network entry is malformed: {exc}") from exc
    net.validate()  # raises ShapeCheckFailed
    return net


def _parse_container(raw: bytes) -> tuple[list[dict], bytes]:
    if len(raw) < 4 or raw[:4] != MAGIC:
        raise BadMagic(f"container magic {raw[:4]!r} is not {MAGIC!r}")
    if len(raw) < 12:
        raise BadManifest("container too short for version and manifest length")
    version, mlen = struct.unpack_from("<II", raw, 4)
    if version != VERSION:
        raise BadVersion(f"container version {version}, expected {VERSION}")
    if 12 + mlen > len(raw):
        raise BadManifest(f"manifest claims {mlen} bytes, container has {len(raw) - 12}")
    try:
        manifest = json.loads(raw[12 : 12 + mlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise BadManifest(f"manifest is not valid JSON: {exc}") from exc
    if not isinstance(manifest, dict) or not isinstance(manifest.get("networks"), list):
        raise BadManifest("manifest must be an object with a 'networks' list")
    return manifest["networks"], raw[12 + mlen :]


def load_network(raw: bytes) -> NetworkSpec:
    """Materialize a single-network container; the result passes shape check."""
    entries, blob = _parse_container(raw)
    if len(entries) != 1:
        raise BadManifest(
            f"expected a single network, container holds {len(entries)}; use load_ensemble"
        )
    return _network_from_manifest(entries[0], blob)


def load_ensemble(raw: bytes) -> dict[str, NetworkSpec]:
    """Materialize a role-tagged bundle as a role -> network mapping."""
    entries, blob = _parse_container(raw)
    out: dict[str, NetworkSpec] = {}
    for entry in entries:
        role = entry.get("role") if isinstance(entry, dict) else None
        if role is None:
            raise BadManifest("ensemble container requires a role tag on every network")
        if role in out:
            raise BadManifest(f"duplicate role {role!r} in container")
        out[str(role)] = _network_from_manifest(entry, blob)
    return out
