"""Shared domain types, validation, and the model container format.

A network is an ordered list of layers, each carrying its weights together
with the kernel parameters used to encode and decode the layer's *input*
values as spike times.  The same types are used by the plain ReLU forward
pass and by the spiking simulator.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

FORMAT_MAGIC = b"TTFSNET1"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class KernelParams:
    """Time constant and delay of an exponential spike kernel.

    tau must stay positive at all times; t_d is kept in [0, T) by the
    kernel optimizer's clamping.
    """

    tau: float
    t_d: float = 0.0

    def with_updates(self, tau: float | None = None, t_d: float | None = None) -> "KernelParams":
        return replace(
            self,
            tau=self.tau if tau is None else tau,
            t_d=self.t_d if t_d is None else t_d,
        )


@dataclass
class LayerSpec:
    """One weight layer: dense or conv2d, plus the input-side kernel.

    ``kernel`` parameterizes both the fire kernel of the presynaptic layer
    (or the pixel encoder, for the first layer) and this layer's
    integration kernel; the two are shared by construction.

    Dense weights have shape (in_units, out_units).  Conv2d weights have
    shape (out_channels, in_channels, kh, kw) with in_shape/out_shape as
    (channels, height, width).
    """

    kind: str  # "dense" | "conv2d"
    weights: np.ndarray
    bias: np.ndarray
    in_shape: tuple
    out_shape: tuple
    kernel: KernelParams
    stride: int = 1
    padding: int = 0

    @property
    def n_in(self) -> int:
        return int(np.prod(self.in_shape))

    @property
    def n_out(self) -> int:
        return int(np.prod(self.out_shape))

    @property
    def bias_flat(self) -> np.ndarray:
        """Bias broadcast to one value per flattened output unit."""
        if self.kind == "dense":
            return self.bias
        c_out, oh, ow = self.out_shape
        return np.repeat(self.bias, oh * ow)


@dataclass
class NetworkSpec:
    """Ordered layers plus the global time window and threshold constant."""

    layers: list
    time_window: int = 80
    theta0: float = 1.0

    @property
    def num_layers(self) -> int:
        return len(self.layers)


@dataclass
class LayerState:
    """Mutable per-layer simulation state, owned by a single run.

    ``spike_time`` holds absolute time steps; -1 means "has not fired",
    kept consistent with ``fired`` at all times.
    """

    u: np.ndarray
    fired: np.ndarray
    spike_time: np.ndarray

    @classmethod
    def zeros(cls, n: int) -> "LayerState":
        return cls(
            u=np.zeros(n, dtype=np.float64),
            fired=np.zeros(n, dtype=bool),
            spike_time=np.full(n, -1, dtype=np.int64),
        )


@dataclass(frozen=True)
class PhaseSchedule:
    """Per-layer integration/fire windows in absolute time steps."""

    integration_start: tuple
    fire_start: tuple
    fire_end: tuple
    mode: str  # "baseline" | "early_firing"

    @property
    def num_layers(self) -> int:
        return len(self.fire_start)

    @property
    def latency(self) -> int:
        """Decision time: the output layer's fire-phase start."""
        return self.fire_start[-1]


@dataclass
class RunStats:
    predicted_label: int
    total_spikes: int
    latency: int
    energy_tn: float = 0.0
    energy_sn: float = 0.0


def _check_layer_shapes(i: int, layer: LayerSpec, problems: list) -> None:
    if layer.kind == "dense":
        if layer.weights.shape != (layer.n_in, layer.n_out):
            problems.append(
                f"layer {i}: dense weight shape {layer.weights.shape} "
                f"inconsistent with in/out shapes {layer.in_shape}/{layer.out_shape}"
            )
    elif layer.kind == "conv2d":
        if len(layer.in_shape) != 3 or len(layer.out_shape) != 3:
            problems.append(f"layer {i}: conv2d shapes must be (c, h, w)")
            return
        c_in, h, w = layer.in_shape
        c_out, oh, ow = layer.out_shape
        if layer.weights.ndim != 4 or layer.weights.shape[:2] != (c_out, c_in):
            problems.append(
                f"layer {i}: conv2d weight shape {layer.weights.shape} "
                f"inconsistent with channels {c_in}->{c_out}"
            )
            return
        kh, kw = layer.weights.shape[2:]
        eh = (h + 2 * layer.padding - kh) // layer.stride + 1
        ew = (w + 2 * layer.padding - kw) // layer.stride + 1
        if (oh, ow) != (eh, ew):
            problems.append(
                f"layer {i}: conv2d out_shape {(oh, ow)} does not match "
                f"computed {(eh, ew)}"
            )
    else:
        problems.append(f"layer {i}: unknown kind {layer.kind!r}")


def validate_network(net: NetworkSpec) -> list:
    """Return a list of violated invariants; empty list means ok."""
    problems = []
    if net.time_window <= 0:
        problems.append("time_window must be positive")
    if net.theta0 <= 0:
        problems.append("theta0 must be positive")
    for i, layer in enumerate(net.layers):
        _check_layer_shapes(i, layer, problems)
        if layer.bias.shape != (layer.n_out,) and not (
            layer.kind == "conv2d" and layer.bias.shape == (layer.out_shape[0],)
        ):
            problems.append(f"layer {i}: bias length does not match output units")
        if layer.kernel.tau <= 0:
            problems.append(f"layer {i}: tau must be positive")
        if not (0 <= layer.kernel.t_d < net.time_window):
            problems.append(f"layer {i}: t_d must lie in [0, T)")
        if i > 0 and layer.n_in != net.layers[i - 1].n_out:
            problems.append(
                f"layer {i}: shape chain broken "
                f"({net.layers[i - 1].n_out} -> {layer.n_in})"
            )
    return problems


# ---------------------------------------------------------------------------
# Model container
#
# Layout (all integers little-endian):
#   bytes 0..7    magic "TTFSNET1"
#   bytes 8..11   uint32 format version
#   bytes 12..19  uint64 header length H
#   bytes 20..20+H  JSON header (utf-8, sorted keys)
#   remainder     concatenated raw array payloads
#
# The header describes T, theta0, every layer (kind, shapes, kernel,
# stride, padding) and, for each array, its offset into the payload,
# shape, and dtype.  Optional activation statistics ride along in the
# same payload.  Writing is fully deterministic.
# ---------------------------------------------------------------------------


class _PayloadWriter:
    def __init__(self):
        self.chunks = []
        self.offset = 0

    def add(self, arr: np.ndarray) -> dict:
        arr = np.ascontiguousarray(arr)
        raw = arr.tobytes()
        ref = {
            "offset": self.offset,
            "shape": list(arr.shape),
            "dtype": arr.dtype.str,
        }
        self.chunks.append(raw)
        self.offset += len(raw)
        return ref


def _read_array(payload: bytes, ref: dict) -> np.ndarray:
    dtype = np.dtype(ref["dtype"])
    count = int(np.prod(ref["shape"])) if ref["shape"] else 1
    start = ref["offset"]
    arr = np.frombuffer(payload, dtype=dtype, count=count, offset=start)
    return arr.reshape(ref["shape"]).copy()


def save_network(path, net: NetworkSpec, stats=None) -> None:
    """Write a network (and optional ActivationStats) to ``path``."""
    writer = _PayloadWriter()
    layers = []
    for layer in net.layers:
        layers.append(
            {
                "kind": layer.kind,
                "in_shape": list(layer.in_shape),
                "out_shape": list(layer.out_shape),
                "tau": layer.kernel.tau,
                "t_d": layer.kernel.t_d,
                "stride": layer.stride,
                "padding": layer.padding,
                "weights": writer.add(layer.weights.astype(np.float64)),
                "bias": writer.add(layer.bias.astype(np.float64)),
            }
        )
    header = {
        "time_window": net.time_window,
        "theta0": net.theta0,
        "layers": layers,
    }
    if stats is not None:
        header["stats"] = {
            "lam": [float(v) for v in stats.lam],
            "min_positive": [float(v) for v in stats.min_positive],
            "hist_counts": [writer.add(c.astype(np.int64)) for c in stats.hist_counts],
            "hist_edges": [writer.add(e.astype(np.float64)) for e in stats.hist_edges],
        }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as f:
        f.write(FORMAT_MAGIC)
        f.write(struct.pack("<I", FORMAT_VERSION))
        f.write(struct.pack("<Q", len(blob)))
        f.write(blob)
        for chunk in writer.chunks:
            f.write(chunk)


def load_network(path):
    """Read a model container; returns (NetworkSpec, ActivationStats | None)."""
    from .dnn import ActivationStats  # local import avoids a cycle

    with open(path, "rb") as f:
        data = f.read()
    if data[:8] != FORMAT_MAGIC:
        raise ValueError(f"{path}: not a model container (bad magic)")
    (version,) = struct.unpack_from("<I", data, 8)
    if version != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported format version {version}")
    (hlen,) = struct.unpack_from("<Q", data, 12)
    header = json.loads(data[20 : 20 + hlen].decode("utf-8"))
    payload = data[20 + hlen :]

    layers = []
    for spec in header["layers"]:
        layers.append(
            LayerSpec(
                kind=spec["kind"],
                weights=_read_array(payload, spec["weights"]),
                bias=_read_array(payload, spec["bias"]),
                in_shape=tuple(spec["in_shape"]),
                out_shape=tuple(spec["out_shape"]),
                kernel=KernelParams(tau=spec["tau"], t_d=spec["t_d"]),
                stride=spec["stride"],
                padding=spec["padding"],
            )
        )
    net = NetworkSpec(
        layers=layers,
        time_window=header["time_window"],
        theta0=header["theta0"],
    )
    stats = None
    if "stats" in header:
        s = header["stats"]
        stats = ActivationStats(
            lam=list(s["lam"]),
            min_positive=list(s["min_positive"]),
            hist_counts=[_read_array(payload, r) for r in s["hist_counts"]],
            hist_edges=[_read_array(payload, r) for r in s["hist_edges"]],
        )
    return net, stats
