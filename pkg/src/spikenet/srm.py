"""Deterministic Spike Response Model in discrete time.

Time steps are indexed ``t = 0, 1, ..., T-1`` and row ``t`` of a raster holds
the spikes emitted at step ``t``. Kernels are strictly causal: a spike at
step ``t'`` influences potentials only at steps ``t > t'``, through the kernel
value at lag ``t - t'`` (lags ``1..W``).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from .topology import NetworkTopology


class SimulationError(RuntimeError):
    pass


@dataclass(frozen=True)
class FilterKernel:
    """Causal kernel with ``values[k-1]`` the response at lag ``k``.

    ``exp_terms`` optionally describes the same kernel (before truncation) as a
    sum of geometric decays ``sum(c * d**k)``; kernels that have it can be run
    with auto-regressive traces instead of an explicit convolution.
    """

    values: np.ndarray
    kind: str = "synaptic"
    exp_terms: tuple[tuple[float, float], ...] | None = None

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 1 or vals.size < 1:
            raise ValueError("kernel needs at least one lag")
        if not np.all(np.isfinite(vals)):
            raise ValueError("kernel values must be finite")
        if self.kind not in ("synaptic", "feedback"):
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def window(self) -> int:
        return self.values.size

    def at(self, lag: int) -> float:
        """Kernel response at ``lag``; zero outside ``1..window``."""
        if 1 <= lag <= self.window:
            return float(self.values[lag - 1])
        return 0.0


def default_window(*time_constants: float) -> int:
    return int(math.ceil(5 * max(time_constants)))


def _positive(name: str, x: float) -> None:
    if not (x > 0 and math.isfinite(x)):
        raise ValueError(f"{name} must be a positive finite number, got {x!r}")


def alpha_kernel(tau_mem: float, tau_syn: float, window: int | None = None) -> FilterKernel:
    """``alpha_t = exp(-t/tau_mem) - exp(-t/tau_syn)`` for ``t = 1..window``."""
    _positive("tau_mem", tau_mem)
    _positive("tau_syn", tau_syn)
    W = default_window(tau_mem, tau_syn) if window is None else int(window)
    if W < 1:
        raise ValueError("window must be >= 1")
    t = np.arange(1, W + 1)
    values = np.exp(-t / tau_mem) - np.exp(-t / tau_syn)
    terms = ((1.0, math.exp(-1.0 / tau_mem)), (-1.0, math.exp(-1.0 / tau_syn)))
    return FilterKernel(values, "synaptic", terms)


def exp_feedback_kernel(tau_ref: float, window: int | None = None) -> FilterKernel:
    """``beta_t = -exp(-t/tau_ref)`` for ``t = 1..window``."""
    _positive("tau_ref", tau_ref)
    W = default_window(tau_ref) if window is None else int(window)
    if W < 1:
        raise ValueError("window must be >= 1")
    t = np.arange(1, W + 1)
    return FilterKernel(-np.exp(-t / tau_ref), "feedback", ((-1.0, math.exp(-1.0 / tau_ref)),))


def rectifier_kernel(window: int) -> FilterKernel:
    """``alpha_t = max(0, t)``: the linear ramp behind first-spike potentials."""
    return FilterKernel(np.arange(1, window + 1, dtype=float), "synaptic")


def zero_kernel(kind: str = "feedback") -> FilterKernel:
    return FilterKernel(np.zeros(1), kind, ())


@dataclass(frozen=True)
class SrmConfig:
    threshold: float
    synaptic_kernel: FilterKernel
    feedback_kernel: FilterKernel = field(default_factory=zero_kernel)
    bias_scale: float = 1.0

    def __post_init__(self):
        if not math.isfinite(self.threshold):
            raise ValueError("threshold must be finite")
        if not math.isfinite(self.bias_scale):
            raise ValueError("bias_scale must be finite")


@dataclass
class SpikeRaster:
    """Binary ``T x N`` spike matrix."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 2:
            raise ValueError("raster must be two-dimensional (T x N)")
        if not np.all((data == 0) | (data == 1)):
            raise ValueError("raster entries must be 0 or 1")
        self.data = data.astype(np.uint8)

    @property
    def horizon(self) -> int:
        return self.data.shape[0]

    @property
    def neuron_count(self) -> int:
        return self.data.shape[1]

    def spike_times(self, neuron: int) -> np.ndarray:
        return np.flatnonzero(self.data[:, neuron])

    def first_spike_times(self) -> dict[int, int]:
        out = {}
        for i in range(self.neuron_count):
            times = self.spike_times(i)
            if times.size:
                out[i] = int(times[0])
        return out

    @classmethod
    def zeros(cls, horizon: int, neuron_count: int) -> "SpikeRaster":
        return cls(np.zeros((horizon, neuron_count), dtype=np.uint8))


def threshold_step(u: float, threshold: float) -> int:
    """Heaviside spike rule with the boundary counted as a spike."""
    return int(u >= threshold)


def membrane_potential(
    raster: SpikeRaster,
    topology: NetworkTopology,
    config: SrmConfig,
    neuron: int,
    t: int,
    external: float = 0.0,
) -> float:
    """Potential of ``neuron`` at step ``t`` by explicit convolution.

    Only raster rows ``< t`` are read. ``external`` is an additive input
    current for this step.
    """
    u = config.bias_scale * topology.biases[neuron] + external
    alpha, beta = config.synaptic_kernel, config.feedback_kernel
    lo_a = max(0, t - alpha.window)
    for j in topology.parents[neuron]:
        w = topology.weights[(neuron, j)]
        for tj in np.flatnonzero(raster.data[lo_a:t, j]) + lo_a:
            u += w * alpha.at(t - int(tj))
    lo_b = max(0, t - beta.window)
    for ti in np.flatnonzero(raster.data[lo_b:t, neuron]) + lo_b:
        u += beta.at(t - int(ti))
    return float(u)


class _ExpTraces:
    """Auto-regressive state for a kernel given as a sum of decays.

    ``trace[k, j]`` equals ``sum over past spikes of d_k ** lag``; one trace per
    decay term and presynaptic neuron.
    """

    def __init__(self, terms, n):
        self.coef = np.array([c for c, _ in terms], dtype=float)
        self.decay = np.array([d for _, d in terms], dtype=float)
        self.trace = np.zeros((len(terms), n))

    def advance(self, spikes):
        self.trace = self.decay[:, None] * (self.trace + spikes[None, :])

    def response(self):
        return self.coef @ self.trace


class _RingConvolution:
    """Direct truncated convolution over the last ``window`` raster rows."""

    def __init__(self, kernel: FilterKernel, n):
        self.kernel = kernel.values
        self.buf = np.zeros((kernel.window, n))
        self.head = 0

    def advance(self, spikes):
        self.head = (self.head - 1) % len(self.kernel)
        self.buf[self.head] = spikes

    def response(self):
        # buf[(head + k) % W] holds the spikes from lag k+1
        order = (self.head + np.arange(len(self.kernel))) % len(self.kernel)
        return self.kernel @ self.buf[order]


def _filter_state(kernel: FilterKernel, n: int, method: str):
    if method == "auto":
        method = "recursive" if kernel.exp_terms is not None else "direct"
    if method == "recursive":
        if kernel.exp_terms is None:
            raise ValueError("kernel has no auto-regressive form")
        return _ExpTraces(kernel.exp_terms, n)
    return _RingConvolution(kernel, n)


@dataclass
class SimulationResult:
    raster: SpikeRaster
    potentials: np.ndarray


def simulate(
    topology: NetworkTopology,
    config: SrmConfig,
    external_input: np.ndarray | None,
    horizon: int,
    method: str = "auto",
) -> SimulationResult:
    """Run the network for ``horizon`` steps with synchronous updates.

    At step ``t`` every potential is computed from spikes at steps ``< t``
    plus ``external_input[t]`` (a ``T x N`` array of additive currents, or
    ``None``), then thresholded.

    ``method`` picks the kernel evaluation: ``"recursive"`` uses the
    auto-regressive traces (untruncated kernels), ``"direct"`` the windowed
    convolution, ``"auto"`` the former whenever the kernel supports it.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    n = topology.neuron_count
    if external_input is None:
        external_input = np.zeros((horizon, n))
    external_input = np.asarray(external_input, dtype=float)
    if external_input.shape != (horizon, n):
        raise ValueError(f"external_input must have shape {(horizon, n)}, got {external_input.shape}")

    W = topology.weight_matrix()
    bias = config.bias_scale * topology.bias_vector()
    syn = _filter_state(config.synaptic_kernel, n, method)
    fb = _filter_state(config.feedback_kernel, n, method)

    raster = np.zeros((horizon, n), dtype=np.uint8)
    potentials = np.zeros((horizon, n))
    for t in range(horizon):
        with np.errstate(over="ignore", invalid="ignore"):
            u = W @ syn.response() + fb.response() + bias + external_input[t]
        if not np.all(np.isfinite(u)):
            bad = np.flatnonzero(~np.isfinite(u))
            raise SimulationError(f"non-finite potential at step {t} for neurons {bad.tolist()}")
        s = (u >= config.threshold).astype(np.uint8)
        potentials[t] = u
        raster[t] = s
        syn.advance(s)
        fb.advance(s)
    return SimulationResult(SpikeRaster(raster), potentials)


def ttfs_potential(
    first_spike_times: Mapping[int, float],
    topology: NetworkTopology,
    neuron: int,
    t: float,
) -> float:
    """Linear-ramp potential used for time-to-first-spike coding.

    Each parent ``j`` that spiked at ``t_j < t`` contributes
    ``w_ij * (t - t_j)``; the bias integrates as ``gamma_i * t``.
    """
    u = topology.biases[neuron] * t
    for j in topology.parents[neuron]:
        tj = first_spike_times.get(j)
        if tj is not None and tj < t:
            u += topology.weights[(neuron, j)] * (t - tj)
    return float(u)


# Raster export.

def write_raster_csv(raster: SpikeRaster, path) -> None:
    """Sparse CSV with one ``t,neuron,spike`` row per emitted spike."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "neuron", "spike"])
        for t, i in zip(*np.nonzero(raster.data)):
            w.writerow([int(t), int(i), 1])


def read_raster_csv(path, horizon: int, neuron_count: int) -> SpikeRaster:
    data = np.zeros((horizon, neuron_count), dtype=np.uint8)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["t", "neuron", "spike"]:
            raise ValueError(f"{path}: line 1: unexpected header {header!r}")
        for lineno, row in enumerate(reader, start=2):
            try:
                t, i, s = (int(x) for x in row)
            except ValueError:
                raise ValueError(f"{path}: line {lineno}: malformed row {row!r}") from None
            data[t, i] = s
    return SpikeRaster(data)


def write_raster_dense(raster: SpikeRaster, path) -> None:
    """Row-major dump, one byte per entry (shape is stored separately)."""
    Path(path).write_bytes(np.ascontiguousarray(raster.data, dtype=np.uint8).tobytes())


def read_raster_dense(path, horizon: int, neuron_count: int) -> SpikeRaster:
    raw = Path(path).read_bytes()
    if len(raw) != horizon * neuron_count:
        raise ValueError(f"{path}: expected {horizon * neuron_count} bytes, found {len(raw)}")
    return SpikeRaster(np.frombuffer(raw, dtype=np.uint8).reshape(horizon, neuron_count))
