"""Gradient-based optimization of the per-layer kernel parameters.

Each layer's (tau, t_d) is trained layer-wise against the recorded
distribution of the values that layer encodes, minimizing a precision
loss (roundtrip quantization error over the spiking set) plus min/max
representation losses that pull the kernel's representable range toward
the recorded value range.

Spike times are produced by a ceiling and are not differentiable; the
analytic gradients treat them as constants of the current iterate and
re-encode every mini-batch.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import codec
from .core import KernelParams, NetworkSpec
from .dnn import ActivationStats

TAU_FLOOR = 0.1
DIVERGENCE_LIMIT = 1e6


class EmptyEncodableSet(ValueError):
    """No value of the batch is encodable within the time window."""


class OptimizeDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class KernelLossReport:
    l_prec: float
    l_min: float
    l_max: float

    @property
    def total(self) -> float:
        return self.l_prec + self.l_min + self.l_max


def _roundtrip(zbar, k: KernelParams, T: int):
    """Encodable mask, frozen spike times, and decoded values."""
    zbar = np.asarray(zbar, dtype=np.float64)
    t = codec.encode_spike_time(zbar, k, T)
    mask = t != codec.NO_SPIKE
    zhat = codec.kernel_value(k, t[mask])
    return mask, t[mask], zhat


def loss_precision(zbar, k: KernelParams, T: int, weights=None) -> float:
    """Mean squared roundtrip error (halved) over the spiking set."""
    mask, _, zhat = _roundtrip(zbar, k, T)
    if not np.any(mask):
        raise EmptyEncodableSet("no encodable value in batch")
    sq = 0.5 * (np.asarray(zbar)[mask] - zhat) ** 2
    if weights is None:
        return float(np.mean(sq))
    w = np.asarray(weights, dtype=np.float64)[mask]
    return float(np.sum(sq * w) / np.sum(w))


def loss_min(zbar_min: float, k: KernelParams, T: int) -> float:
    zhat_min = np.exp(-(T - k.t_d) / k.tau)
    return float(0.5 * (zbar_min - zhat_min) ** 2)


def loss_max(zbar_max: float, k: KernelParams) -> float:
    zhat_max = np.exp(k.t_d / k.tau)
    return float(0.5 * (zbar_max - zhat_max) ** 2)


def grad_tau_precision(zbar, k: KernelParams, T: int, weights=None) -> float:
    mask, t, zhat = _roundtrip(zbar, k, T)
    if not np.any(mask):
        raise EmptyEncodableSet("no encodable value in batch")
    terms = (t - k.t_d) / k.tau**2 * (np.asarray(zbar)[mask] - zhat) * zhat
    if weights is None:
        return float(-np.mean(terms))
    w = np.asarray(weights, dtype=np.float64)[mask]
    return float(-np.sum(terms * w) / np.sum(w))


def grad_tau_min(zbar_min: float, k: KernelParams, T: int) -> float:
    zhat_min = np.exp(-(T - k.t_d) / k.tau)
    return float(-(T - k.t_d) / k.tau**2 * (zbar_min - zhat_min) * zhat_min)


def grad_tau(zbar, k: KernelParams, T: int, zbar_min: float | None = None, weights=None) -> float:
    """Combined tau gradient of the precision and min-representation losses."""
    if zbar_min is None:
        zbar_min = float(np.min(np.asarray(zbar)[np.asarray(zbar) > 0]))
    return grad_tau_precision(zbar, k, T, weights) + grad_tau_min(zbar_min, k, T)


def grad_td(zbar_max: float, k: KernelParams) -> float:
    zhat_max = np.exp(k.t_d / k.tau)
    return float(-(zbar_max - zhat_max) * zhat_max / k.tau)


def evaluate_losses(zbar, zbar_min, zbar_max, k: KernelParams, T: int, weights=None) -> KernelLossReport:
    return KernelLossReport(
        l_prec=loss_precision(zbar, k, T, weights),
        l_min=loss_min(zbar_min, k, T),
        l_max=loss_max(zbar_max, k),
    )


def optimize_kernel(
    values,
    probs,
    zbar_min: float,
    zbar_max: float,
    k: KernelParams,
    T: int,
    lr: float = 0.1,
    iters: int = 200,
    batch_size: int = 256,
    rng=None,
    tau_floor: float = TAU_FLOOR,
):
    """SGD on one kernel against a discrete value distribution.

    Returns the optimized KernelParams and a per-iteration list of
    (KernelLossReport, tau, t_d) evaluated on the full distribution.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    values = np.asarray(values, dtype=np.float64)
    probs = np.asarray(probs, dtype=np.float64)
    probs = probs / probs.sum()
    history = []
    for _ in range(iters):
        batch = rng.choice(values, size=batch_size, p=probs)
        gt = grad_tau(batch, k, T, zbar_min=zbar_min)
        gd = grad_td(zbar_max, k)
        tau = max(k.tau - lr * gt, tau_floor)
        t_d = float(np.clip(k.t_d - lr * gd, 0.0, T - 1e-9))
        k = k.with_updates(tau=tau, t_d=t_d)
        report = evaluate_losses(values, zbar_min, zbar_max, k, T, weights=probs)
        if report.total > DIVERGENCE_LIMIT:
            raise OptimizeDiverged(
                f"loss {report.total:.3e} exceeded {DIVERGENCE_LIMIT:.0e} "
                f"at tau={tau:.4f}, t_d={t_d:.4f}"
            )
        history.append((report, tau, t_d))
    return k, history


def _distribution(stats: ActivationStats, entry: int):
    """Positive-value distribution of one stats entry as (values, probs)."""
    edges = stats.hist_edges[entry]
    counts = stats.hist_counts[entry].astype(np.float64)
    mids = 0.5 * (edges[:-1] + edges[1:])
    keep = counts > 0
    return mids[keep], counts[keep] / counts[keep].sum()


def optimize(
    net: NetworkSpec,
    stats: ActivationStats,
    lr: float = 0.1,
    iters: int = 200,
    batch_size: int = 256,
    seed: int = 0,
):
    """Optimize every layer's kernel; layer i trains against the recorded
    distribution of its inputs (stats entry i).

    Returns the updated net and a flat history of dict rows suitable for
    CSV emission.  The total loss at the final iterate never exceeds the
    initial total (checked per layer).
    """
    if stats.num_entries != net.num_layers + 1:
        raise ValueError("stats do not match the network layer count")
    T = net.time_window
    rng = np.random.default_rng(seed)
    rows = []
    new_layers = []
    for i, layer in enumerate(net.layers):
        values, probs = _distribution(stats, i)
        zbar_min = stats.min_positive[i]
        zbar_max = stats.lam[i]
        initial = evaluate_losses(values, zbar_min, zbar_max, layer.kernel, T, weights=probs)
        k, history = optimize_kernel(
            values, probs, zbar_min, zbar_max, layer.kernel, T,
            lr=lr, iters=iters, batch_size=batch_size, rng=rng,
        )
        if history and history[-1][0].total > initial.total:
            # mini-batch noise can end above the start near an optimum;
            # never hand back a worse kernel than we were given
            k = layer.kernel
        for it, (report, tau, t_d) in enumerate(history):
            rows.append(
                {
                    "iteration": it,
                    "layer": i,
                    "l_prec": report.l_prec,
                    "l_min": report.l_min,
                    "l_max": report.l_max,
                    "tau": tau,
                    "t_d": t_d,
                }
            )
        new_layers.append(replace_kernel(layer, k))
    return NetworkSpec(new_layers, net.time_window, net.theta0), rows


def replace_kernel(layer, k: KernelParams):
    return replace(layer, kernel=k)


def write_loss_history(path, rows) -> None:
    """Loss history CSV: iteration, layer, l_prec, l_min, l_max, tau, t_d."""
    cols = ["iteration", "layer", "l_prec", "l_min", "l_max", "tau", "t_d"]
    with open(path, "w") as f:
        f.write(",".join(cols) + "\n")
        for row in rows:
            f.write(",".join(repr(row[c]) for c in cols) + "\n")
