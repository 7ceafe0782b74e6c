"""TTFS kernel machinery: exponential kernel, dynamic threshold,
closed-form spike-time encoder, PSP decoder, and the analytic
representable-range / precision-bound formulas.

All time arguments are integer offsets from the start of a fire phase.
The encoder's closed form is checked in tests against a brute-force scan
of the firing condition, which is the authoritative semantics.
"""

from __future__ import annotations

import math

import numpy as np

from .core import KernelParams

NO_SPIKE = -1  # sentinel offset for values that do not produce a spike


def kernel_value(k: KernelParams, dt) -> float:
    """Monotonically decreasing kernel exp(-(dt - t_d) / tau)."""
    return np.exp(-(np.asarray(dt, dtype=np.float64) - k.t_d) / k.tau)


def dynamic_threshold(k: KernelParams, theta0: float, dt) -> float:
    """Decaying firing threshold theta0 * kernel(dt)."""
    return theta0 * kernel_value(k, dt)


def encode_spike_time(u, k: KernelParams, T: int, theta0: float = 1.0):
    """Spike-time offset in [0, T) for a membrane potential, or NO_SPIKE.

    Non-positive potentials never fire.  The closed form
    ceil(-tau * ln(u / theta0) + t_d) is clamped below at zero (a
    potential above the initial threshold fires at the first step of the
    fire phase); offsets at or beyond T mean the value lies below the
    representable range and is silently dropped.

    Scalar in, scalar out; arrays are encoded elementwise.
    """
    u_arr = np.asarray(u, dtype=np.float64)
    scalar = u_arr.ndim == 0
    u_arr = np.atleast_1d(u_arr)
    out = np.full(u_arr.shape, NO_SPIKE, dtype=np.int64)
    pos = u_arr > 0
    if np.any(pos):
        with np.errstate(divide="ignore"):
            t = np.ceil(-k.tau * np.log(u_arr[pos] / theta0) + k.t_d)
        t = np.maximum(t, 0.0)
        t_int = t.astype(np.int64)
        t_int[t_int >= T] = NO_SPIKE
        out[pos] = t_int
    return int(out[0]) if scalar else out


def decode_psp(w, spike_offset, k_in: KernelParams):
    """PSP contribution w * kernel(offset); k_in must be the presynaptic
    layer's fire kernel."""
    return w * kernel_value(k_in, spike_offset)


def precision_error_bound(x_hat, tau: float):
    """Worst-case roundtrip error x_hat * (exp(1/tau) - 1) of the
    one-step time quantization."""
    return x_hat * (math.exp(1.0 / tau) - 1.0)


def representable_range(k: KernelParams, T: int):
    """(min, max) value encodable within the time window:
    (exp(-(T - t_d)/tau), exp(t_d/tau))."""
    return (
        math.exp(-(T - k.t_d) / k.tau),
        math.exp(k.t_d / k.tau),
    )


def scan_spike_time(u: float, k: KernelParams, T: int, theta0: float = 1.0) -> int:
    """Brute-force firing-condition scan: the smallest integer offset t in
    [0, T) with u >= theta0 * kernel(t), or NO_SPIKE.

    Reference semantics for the closed-form encoder.
    """
    if u <= 0:
        return NO_SPIKE
    for t in range(T):
        if u >= theta0 * math.exp(-(t - k.t_d) / k.tau):
            return t
    return NO_SPIKE


def kernel_table(k: KernelParams, T: int) -> np.ndarray:
    """Lookup table of kernel values over offsets 0..T-1."""
    return kernel_value(k, np.arange(T))
