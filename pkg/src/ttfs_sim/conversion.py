"""Data-based weight normalization.

Rescales weights and biases by the recorded per-layer activation maxima
so that every activation over the recording dataset lies in [0, 1], the
precondition for encoding with threshold constant 1.
"""

from __future__ import annotations

import numpy as np

from .core import LayerSpec, NetworkSpec
from .dnn import ActivationStats


def normalize(net: NetworkSpec, stats: ActivationStats, input_lam: float = 1.0):
    """Return a normalized copy of the net plus the rescaled stats.

    Layer l gets w' = w * lam^{l-1} / lam^l and b' = b / lam^l.  The
    input scale defaults to 1 (pixels are already in [0, 1]); activations
    of the returned net equal the original activations divided by lam^l.
    """
    if stats.num_entries != net.num_layers + 1:
        raise ValueError(
            f"stats have {stats.num_entries} entries, expected {net.num_layers + 1}"
        )
    lam = [input_lam] + list(stats.lam[1:])
    for l, v in enumerate(lam):
        if not (v > 0):
            raise ValueError(f"non-positive activation scale at entry {l}")

    layers = []
    for i, layer in enumerate(net.layers):
        scale_in, scale_out = lam[i], lam[i + 1]
        layers.append(
            LayerSpec(
                kind=layer.kind,
                weights=layer.weights * (scale_in / scale_out),
                bias=layer.bias / scale_out,
                in_shape=layer.in_shape,
                out_shape=layer.out_shape,
                kernel=layer.kernel,
                stride=layer.stride,
                padding=layer.padding,
            )
        )
    normalized = NetworkSpec(
        layers=layers, time_window=net.time_window, theta0=net.theta0
    )
    return normalized, stats.rescaled(lam)
