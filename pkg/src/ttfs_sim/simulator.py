"""Discrete-time, layer-phased execution of the spiking network.

Each layer runs an integration phase (decode incoming spikes into the
membrane potential) followed by a fire phase (emit at most one spike per
neuron against the decaying threshold).  Phases are laid out by a
PhaseSchedule; under early firing a layer starts firing halfway through
its integration window, so late PSPs can land on already-fired neurons
and are accumulated without effect ("non-guaranteed integration").

Two engines share the same contract: the default event-driven engine
only touches neurons that receive a spike and predicts threshold
crossings in closed form; the per-step dense sweep is the correctness
oracle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import codec, metrics
from .core import NetworkSpec, PhaseSchedule, RunStats
from .dnn import apply_linear_nobias


def build_schedule(num_layers: int, T: int, mode: str) -> PhaseSchedule:
    """Integration/fire windows for every weight layer (1..num_layers).

    Baseline: fire_start(l) = l*T, decision latency num_layers*T.
    Early firing: the first layer integrates its full window, every later
    layer starts firing T/2 after the previous one, giving latency
    T + (num_layers - 1) * T/2.  The decision time is the output layer's
    fire-phase start in both modes.
    """
    if num_layers < 1:
        raise ValueError("num_layers must be >= 1")
    if T < 1:
        raise ValueError("T must be >= 1")
    if mode not in ("baseline", "early_firing"):
        raise ValueError(f"unknown schedule mode {mode!r}")
    if mode == "early_firing" and T % 2:
        raise ValueError("early firing requires an even time window")

    integration_start, fire_start = [], []
    prev_fire = 0  # the input encodes during [0, T)
    for l in range(num_layers):
        integration_start.append(prev_fire)
        if mode == "baseline" or l == 0:
            fire = prev_fire + T
        else:
            fire = prev_fire + T // 2
        fire_start.append(fire)
        prev_fire = fire
    return PhaseSchedule(
        integration_start=tuple(integration_start),
        fire_start=tuple(fire_start),
        fire_end=tuple(f + T for f in fire_start),
        mode=mode,
    )


@dataclass
class RunResult:
    stats: RunStats
    output_potentials: np.ndarray
    spike_times: list  # absolute spike time per neuron (-1 = none); input first
    output_events: list  # (arrival time, potential increment vector)


def _group_arrivals(spike_times: np.ndarray, values: np.ndarray):
    """Map absolute arrival time -> (neuron indices, decoded values)."""
    arrivals = {}
    mask = spike_times >= 0
    for t in np.unique(spike_times[mask]):
        idx = np.nonzero(spike_times == t)[0]
        arrivals[int(t)] = (idx, values[idx])
    return dict(sorted(arrivals.items()))


def _contribution(layer, idx, vals):
    s = np.zeros((1, layer.n_in))
    s[0, idx] = vals
    return apply_linear_nobias(layer, s)[0]


def _fire_dense(layer, k_fire, theta0, arrivals, int_start, fire_start, fire_end):
    """Per-step sweep: deliver PSPs, then threshold-check every neuron."""
    u = layer.bias_flat.astype(np.float64).copy()
    fired = np.zeros(layer.n_out, dtype=bool)
    spike_time = np.full(layer.n_out, -1, dtype=np.int64)
    for t in range(int_start, fire_end):
        if t in arrivals:
            idx, vals = arrivals[t]
            u += _contribution(layer, idx, vals)
        if t >= fire_start:
            thr = theta0 * codec.kernel_value(k_fire, t - fire_start)
            newly = ~fired & (u >= thr)
            spike_time[newly] = t
            fired |= newly
    return u, spike_time


def _fire_event(layer, k_fire, theta0, arrivals, int_start, fire_start, fire_end):
    """Event-driven engine: closed-form crossing times between arrivals."""
    T = fire_end - fire_start
    u = layer.bias_flat.astype(np.float64).copy()
    fired = np.zeros(layer.n_out, dtype=bool)
    spike_time = np.full(layer.n_out, -1, dtype=np.int64)
    cursor = fire_start  # first fire-phase step not yet evaluated

    def settle(limit):
        # fire every not-yet-fired neuron whose crossing lands in [cursor, limit)
        nonlocal cursor
        limit = min(limit, fire_end)
        if cursor >= limit:
            return
        live = ~fired & (u > 0)
        if np.any(live):
            offs = np.ceil(-k_fire.tau * np.log(u[live] / theta0) + k_fire.t_d)
            offs = np.maximum(offs, 0.0).astype(np.int64)
            t_abs = np.maximum(fire_start + offs, cursor)
            t_abs[offs >= T] = fire_end  # below representable range
            ok = t_abs < limit
            idx = np.nonzero(live)[0][ok]
            spike_time[idx] = t_abs[ok]
            fired[idx] = True
        cursor = limit

    for t, (idx, vals) in arrivals.items():
        if t >= fire_start:
            settle(t)
        u += _contribution(layer, idx, vals)
        if fire_start <= t < fire_end:
            thr = theta0 * codec.kernel_value(k_fire, t - fire_start)
            newly = ~fired & (u >= thr)
            spike_time[newly] = t
            fired |= newly
            cursor = t + 1
    settle(fire_end)
    return u, spike_time


def run_ttfs(
    net: NetworkSpec,
    x: np.ndarray,
    schedule: PhaseSchedule,
    engine: str = "event",
) -> RunResult:
    """Simulate one inference; classification is the argmax of the output
    layer's membrane potential at the schedule's decision time."""
    if schedule.num_layers != net.num_layers:
        raise ValueError(
            f"schedule covers {schedule.num_layers} layers, net has {net.num_layers}"
        )
    if engine not in ("event", "dense"):
        raise ValueError(f"unknown engine {engine!r}")
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if x.size != net.layers[0].n_in:
        raise ValueError(
            f"input has {x.size} features, network expects {net.layers[0].n_in}"
        )
    T = net.time_window
    theta0 = net.theta0
    fire = _fire_event if engine == "event" else _fire_dense

    # Input encoding: pixels are treated exactly like membrane potentials.
    prev_spikes = codec.encode_spike_time(x, net.layers[0].kernel, T, theta0)
    prev_fire_start = 0
    spike_times = [prev_spikes.copy()]
    readout = schedule.latency
    output_u = None
    output_events = []

    for i, layer in enumerate(net.layers):
        k_in = layer.kernel  # equals the presynaptic fire kernel
        mask = prev_spikes >= 0
        values = np.zeros(layer.n_in)
        values[mask] = codec.kernel_value(k_in, prev_spikes[mask] - prev_fire_start)
        arrivals = _group_arrivals(prev_spikes, values)

        if i == net.num_layers - 1:
            # Output layer never fires; read the potential at decision time.
            u = layer.bias_flat.astype(np.float64).copy()
            for t, (idx, vals) in arrivals.items():
                delta = _contribution(layer, idx, vals)
                output_events.append((t, delta))
                if t <= readout:
                    u += delta
            output_u = u
        else:
            k_fire = net.layers[i + 1].kernel
            u, st = fire(
                layer,
                k_fire,
                theta0,
                arrivals,
                schedule.integration_start[i],
                schedule.fire_start[i],
                schedule.fire_end[i],
            )
            spike_times.append(st)
            prev_spikes = st
            prev_fire_start = schedule.fire_start[i]

    total_spikes = int(sum(np.count_nonzero(st >= 0) for st in spike_times))
    stats = RunStats(
        predicted_label=int(np.argmax(output_u)),
        total_spikes=total_spikes,
        latency=readout,
        energy_tn=metrics.estimate_energy(total_spikes, readout, metrics.TRUENORTH),
        energy_sn=metrics.estimate_energy(total_spikes, readout, metrics.SPINNAKER),
    )
    return RunResult(
        stats=stats,
        output_potentials=output_u,
        spike_times=spike_times,
        output_events=output_events,
    )


def decisions_over_time(result: RunResult, n_out: int, times) -> list:
    """Prediction when the output readout is truncated at each time in
    ``times`` (inclusive); used for accuracy-vs-time curves."""
    out = []
    for t_cut in times:
        u = np.zeros(n_out)
        for t, delta in result.output_events:
            if t <= t_cut:
                u += delta
        out.append(int(np.argmax(u)))
    return out


def run_rate_baseline(net: NetworkSpec, x: np.ndarray, T_rate: int) -> RunStats:
    """Rate-coded IF simulation with fixed threshold 1 and
    reset-by-subtraction; prediction is the argmax of output spike counts
    (ties broken by membrane potential)."""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    acc = np.zeros_like(x)
    u = [np.zeros(layer.n_out) for layer in net.layers]
    counts = [np.zeros(layer.n_out, dtype=np.int64) for layer in net.layers]
    input_spikes = 0

    for _ in range(T_rate):
        acc += x
        s_in = (acc >= 1.0).astype(np.float64)
        acc -= s_in
        input_spikes += int(s_in.sum())
        s = s_in
        for i, layer in enumerate(net.layers):
            u[i] += apply_linear_nobias(layer, s[None, :])[0] + layer.bias_flat
            fired = u[i] >= 1.0
            u[i] -= fired
            counts[i] += fired
            s = fired.astype(np.float64)

    out = counts[-1]
    best = np.nonzero(out == out.max())[0]
    predicted = int(best[np.argmax(u[-1][best])])
    total = input_spikes + int(sum(c.sum() for c in counts))
    return RunStats(
        predicted_label=predicted,
        total_spikes=total,
        latency=T_rate,
        energy_tn=metrics.estimate_energy(total, T_rate, metrics.TRUENORTH),
        energy_sn=metrics.estimate_energy(total, T_rate, metrics.SPINNAKER),
    )


@dataclass
class BatchResult:
    runs: list
    correct: list
    report: metrics.Report


def classify_batch(
    net: NetworkSpec,
    x: np.ndarray,
    y: np.ndarray,
    schedule: PhaseSchedule,
    engine: str = "event",
    baseline: metrics.Report | None = None,
) -> BatchResult:
    if len(x) == 0:
        raise ValueError("empty dataset")
    runs, correct = [], []
    for xi, yi in zip(x, y):
        r = run_ttfs(net, xi, schedule, engine=engine)
        runs.append(r.stats)
        correct.append(r.stats.predicted_label == yi)
    return BatchResult(
        runs=runs,
        correct=correct,
        report=metrics.summarize(runs, correct, baseline=baseline),
    )


def write_trace(path, spike_times) -> None:
    """Spike event log as CSV rows ``layer,neuron,time``."""
    with open(path, "w") as f:
        f.write("layer,neuron,time\n")
        for layer_idx, st in enumerate(spike_times):
            for neuron in np.nonzero(st >= 0)[0]:
                f.write(f"{layer_idx},{neuron},{st[neuron]}\n")
