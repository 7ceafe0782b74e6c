"""Plain ReLU network: forward, SGD training, and activation statistics.

The trained activations (their per-layer maxima and histograms) are the
ground truth both for weight normalization and for kernel optimization.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import KernelParams, LayerSpec, NetworkSpec, validate_network


class TrainingDiverged(RuntimeError):
    """Raised when the training loss becomes NaN or infinite."""


class DegenerateStatsError(ValueError):
    """Raised when a layer has no positive activation on the dataset."""


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.1
    epochs: int = 10
    batch_size: int = 32
    rng_seed: int = 0


@dataclass
class ActivationStats:
    """Per-entry activation statistics.

    Entry 0 describes the network input (pixels); entry l >= 1 describes
    the post-activation output of layer l.  Histograms cover the positive
    values only, over (0, lam]; exact zeros carry no encoding requirement
    and are excluded.
    """

    lam: list
    min_positive: list
    hist_counts: list
    hist_edges: list

    @property
    def num_entries(self) -> int:
        return len(self.lam)

    def rescaled(self, factors) -> "ActivationStats":
        """Divide entry l by factors[l] (used after weight normalization)."""
        return ActivationStats(
            lam=[v / f for v, f in zip(self.lam, factors)],
            min_positive=[v / f for v, f in zip(self.min_positive, factors)],
            hist_counts=[c.copy() for c in self.hist_counts],
            hist_edges=[e / f for e, f in zip(self.hist_edges, factors)],
        )


# ---------------------------------------------------------------------------
# Layer algebra (shared with the spiking simulator)
# ---------------------------------------------------------------------------


def _im2col(x, kh, kw, stride, pad):
    """x: (batch, c, h, w) -> columns (batch, oh*ow, c*kh*kw)."""
    b, c, h, w = x.shape
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    oh = (h + 2 * pad - kh) // stride + 1
    ow = (w + 2 * pad - kw) // stride + 1
    cols = np.empty((b, c, kh, kw, oh, ow), dtype=x.dtype)
    for i in range(kh):
        for j in range(kw):
            cols[:, :, i, j] = x[:, :, i : i + stride * oh : stride, j : j + stride * ow : stride]
    return cols.transpose(0, 4, 5, 1, 2, 3).reshape(b, oh * ow, c * kh * kw)


def _col2im(cols, x_shape, kh, kw, stride, pad):
    """Adjoint of _im2col; scatters column gradients back to the image."""
    b, c, h, w = x_shape
    oh = (h + 2 * pad - kh) // stride + 1
    ow = (w + 2 * pad - kw) // stride + 1
    cols = cols.reshape(b, oh, ow, c, kh, kw).transpose(0, 3, 4, 5, 1, 2)
    x = np.zeros((b, c, h + 2 * pad, w + 2 * pad), dtype=cols.dtype)
    for i in range(kh):
        for j in range(kw):
            x[:, :, i : i + stride * oh : stride, j : j + stride * ow : stride] += cols[:, :, i, j]
    if pad:
        x = x[:, :, pad:-pad, pad:-pad]
    return x


def apply_linear(layer: LayerSpec, x: np.ndarray) -> np.ndarray:
    """Affine map of one layer on flattened inputs (batch, n_in)."""
    if layer.kind == "dense":
        return x @ layer.weights + layer.bias
    c_out = layer.out_shape[0]
    x4 = x.reshape(-1, *layer.in_shape)
    kh, kw = layer.weights.shape[2:]
    cols = _im2col(x4, kh, kw, layer.stride, layer.padding)
    out = cols @ layer.weights.reshape(c_out, -1).T + layer.bias
    oh, ow = layer.out_shape[1:]
    return out.reshape(-1, oh, ow, c_out).transpose(0, 3, 1, 2).reshape(-1, layer.n_out)


def apply_linear_nobias(layer: LayerSpec, x: np.ndarray) -> np.ndarray:
    return apply_linear(layer, x) - layer.bias_flat


def forward(net: NetworkSpec, x: np.ndarray):
    """Per-layer activations; hidden layers post-ReLU, last layer logits.

    Accepts a single sample (n_in,) or a batch (batch, n_in).
    """
    single = x.ndim == 1
    a = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if a.shape[1] != net.layers[0].n_in:
        raise ValueError(
            f"input has {a.shape[1]} features, network expects {net.layers[0].n_in}"
        )
    activations = []
    last = net.num_layers - 1
    for i, layer in enumerate(net.layers):
        z = apply_linear(layer, a)
        a = z if i == last else np.maximum(z, 0.0)
        activations.append(a[0] if single else a)
    return activations


def _softmax(z):
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def loss_and_grads(net: NetworkSpec, x: np.ndarray, y: np.ndarray):
    """Mean cross-entropy over the batch plus per-layer (dW, db)."""
    batch = x.shape[0]
    last = net.num_layers - 1
    acts = [x]
    a = x
    for i, layer in enumerate(net.layers):
        z = apply_linear(layer, a)
        a = z if i == last else np.maximum(z, 0.0)
        acts.append(a)
    probs = _softmax(acts[-1])
    loss = -np.mean(np.log(probs[np.arange(batch), y] + 1e-300))

    delta = probs
    delta[np.arange(batch), y] -= 1.0
    delta /= batch
    grads = [None] * net.num_layers
    for i in range(last, -1, -1):
        layer = net.layers[i]
        a_prev = acts[i]
        if layer.kind == "dense":
            dW = a_prev.T @ delta
            db = delta.sum(axis=0)
            dprev = delta @ layer.weights.T
        else:
            c_out, oh, ow = layer.out_shape
            kh, kw = layer.weights.shape[2:]
            d4 = delta.reshape(batch, c_out, oh, ow).transpose(0, 2, 3, 1)
            d4 = d4.reshape(batch, oh * ow, c_out)
            cols = _im2col(x4 := a_prev.reshape(-1, *layer.in_shape), kh, kw, layer.stride, layer.padding)
            dW = np.einsum("bpo,bpk->ok", d4, cols).reshape(layer.weights.shape)
            db = d4.sum(axis=(0, 1))
            dcols = d4 @ layer.weights.reshape(c_out, -1)
            dprev = _col2im(dcols, x4.shape, kh, kw, layer.stride, layer.padding)
            dprev = dprev.reshape(batch, -1)
        grads[i] = (dW, db)
        if i > 0:
            dprev = dprev * (acts[i] > 0)
            delta = dprev
    return loss, grads


def train(net: NetworkSpec, x: np.ndarray, y: np.ndarray, cfg: TrainConfig):
    """Mini-batch SGD; returns a trained copy of the net and loss history."""
    problems = validate_network(net)
    if problems:
        raise ValueError("invalid network: " + "; ".join(problems))
    if cfg.batch_size > len(x):
        raise ValueError("batch_size exceeds dataset size")
    net = NetworkSpec(
        layers=[
            LayerSpec(
                kind=l.kind,
                weights=l.weights.copy(),
                bias=l.bias.copy(),
                in_shape=l.in_shape,
                out_shape=l.out_shape,
                kernel=l.kernel,
                stride=l.stride,
                padding=l.padding,
            )
            for l in net.layers
        ],
        time_window=net.time_window,
        theta0=net.theta0,
    )
    rng = np.random.default_rng(cfg.rng_seed)
    history = []
    n = len(x)
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        nb = 0
        for start in range(0, n - cfg.batch_size + 1, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            loss, grads = loss_and_grads(net, x[idx], y[idx])
            if not np.isfinite(loss):
                raise TrainingDiverged(
                    f"non-finite loss {loss} at epoch {epoch}, batch {nb}"
                )
            for layer, (dW, db) in zip(net.layers, grads):
                layer.weights -= cfg.learning_rate * dW
                layer.bias -= cfg.learning_rate * db
                if not (np.all(np.isfinite(layer.weights)) and np.all(np.isfinite(layer.bias))):
                    raise TrainingDiverged(
                        f"non-finite parameters at epoch {epoch}, batch {nb}"
                    )
            epoch_loss += loss
            nb += 1
        history.append(epoch_loss / max(nb, 1))
    return net, history


def accuracy(net: NetworkSpec, x: np.ndarray, y: np.ndarray, batch_size: int = 512) -> float:
    correct = 0
    for start in range(0, len(x), batch_size):
        logits = forward(net, x[start : start + batch_size])[-1]
        correct += int(np.sum(np.argmax(logits, axis=1) == y[start : start + batch_size]))
    return correct / len(x)


def record_stats(
    net: NetworkSpec,
    x: np.ndarray,
    percentile: float | None = None,
    bins: int = 1024,
    batch_size: int = 256,
) -> ActivationStats:
    """Activation maxima, smallest positive values, and histograms.

    ``percentile`` switches the scale estimate lam from the max to the
    given percentile of the positive values (robust variant); the
    histograms always cover (0, max].
    """
    if len(x) == 0:
        raise DegenerateStatsError("empty dataset")
    n_entries = net.num_layers + 1
    maxima = np.zeros(n_entries)
    min_pos = np.full(n_entries, np.inf)
    collected = [[] for _ in range(n_entries)] if percentile is not None else None

    def entries(batch):
        yield 0, batch
        for l, a in enumerate(forward(net, batch), start=1):
            yield l, a

    for start in range(0, len(x), batch_size):
        for l, a in entries(x[start : start + batch_size]):
            pos = a[a > 0]
            if pos.size:
                maxima[l] = max(maxima[l], float(pos.max()))
                min_pos[l] = min(min_pos[l], float(pos.min()))
                if collected is not None:
                    collected[l].append(pos)
    for l in range(n_entries):
        if maxima[l] <= 0:
            raise DegenerateStatsError(
                f"degenerate stats: no positive activation at entry {l}"
            )

    lam = list(maxima)
    if percentile is not None:
        lam = [
            float(np.percentile(np.concatenate(collected[l]), percentile))
            for l in range(n_entries)
        ]

    hist_counts = [np.zeros(bins, dtype=np.int64) for _ in range(n_entries)]
    hist_edges = [np.linspace(0.0, maxima[l], bins + 1) for l in range(n_entries)]
    for start in range(0, len(x), batch_size):
        for l, a in entries(x[start : start + batch_size]):
            pos = a[a > 0]
            if pos.size:
                hist_counts[l] += np.histogram(pos, bins=hist_edges[l])[0]
    return ActivationStats(
        lam=[float(v) for v in lam],
        min_positive=[float(v) for v in min_pos],
        hist_counts=hist_counts,
        hist_edges=hist_edges,
    )


def build_mlp(
    sizes,
    time_window: int = 80,
    theta0: float = 1.0,
    seed: int = 0,
    tau: float | None = None,
) -> NetworkSpec:
    """Dense ReLU network with He-initialized weights.

    Every layer starts with the default kernel tau = T/4, t_d = 0 unless
    ``tau`` is given.
    """
    rng = np.random.default_rng(seed)
    tau = time_window / 4 if tau is None else tau
    layers = []
    for n_in, n_out in zip(sizes[:-1], sizes[1:]):
        layers.append(
            LayerSpec(
                kind="dense",
                weights=rng.normal(0.0, np.sqrt(2.0 / n_in), (n_in, n_out)),
                bias=np.zeros(n_out),
                in_shape=(n_in,),
                out_shape=(n_out,),
                kernel=KernelParams(tau=tau, t_d=0.0),
            )
        )
    return NetworkSpec(layers=layers, time_window=time_window, theta0=theta0)


def build_toy_cnn(
    in_shape=(1, 8, 8),
    channels=(4, 8),
    n_classes: int = 2,
    time_window: int = 80,
    seed: int = 0,
    tau: float | None = None,
) -> NetworkSpec:
    """Two stride-2 conv layers plus a dense readout, for desk-scale tests."""
    rng = np.random.default_rng(seed)
    tau = time_window / 4 if tau is None else tau
    layers = []
    c, h, w = in_shape
    for c_out in channels:
        kh = kw = 3
        oh = (h + 2 - kh) // 2 + 1
        ow = (w + 2 - kw) // 2 + 1
        fan_in = c * kh * kw
        layers.append(
            LayerSpec(
                kind="conv2d",
                weights=rng.normal(0.0, np.sqrt(2.0 / fan_in), (c_out, c, kh, kw)),
                bias=np.zeros(c_out),
                in_shape=(c, h, w),
                out_shape=(c_out, oh, ow),
                kernel=KernelParams(tau=tau, t_d=0.0),
                stride=2,
                padding=1,
            )
        )
        c, h, w = c_out, oh, ow
    n_flat = c * h * w
    layers.append(
        LayerSpec(
            kind="dense",
            weights=rng.normal(0.0, np.sqrt(2.0 / n_flat), (n_flat, n_classes)),
            bias=np.zeros(n_classes),
            in_shape=(n_flat,),
            out_shape=(n_classes,),
            kernel=KernelParams(tau=tau, t_d=0.0),
        )
    )
    return NetworkSpec(layers=layers, time_window=time_window)
