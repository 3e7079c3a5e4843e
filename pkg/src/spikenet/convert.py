"""ANN-to-SNN conversion with rate coding or time-to-first-spike coding.

Rate-coded neurons are integrate-and-fire units with reset by subtraction::

    v_t = u_{t-1} + I_t          (integrate)
    s_t = [v_t >= threshold]
    u_t = v_t - threshold * s_t  (reset)

which is the same spike train as ``u_t = u_{t-1} + I_t - threshold * s_{t-1}``
written on the pre-reset potential. With a constant drive ``I = a * threshold``
and ``u_0 = 0`` this gives ``u_t = threshold * (t * a - N_t)`` exactly, so the
spike rate satisfies ``N_t / t = a - u_t / (t * threshold)`` at every step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .ann import AnnModel, LabeledBatch
from .srm import SpikeRaster

ENCODINGS = ("analog", "poisson")
NO_SPIKE = math.inf


class ConversionError(ValueError):
    pass


def _check_intensities(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.size and (np.any(~np.isfinite(x)) or x.min() < 0 or x.max() > 1):
        raise ValueError("intensities must lie in [0, 1]")
    return x


def poisson_encode(intensities, horizon: int, seed: int) -> SpikeRaster:
    """I.i.d. Bernoulli spike trains, one channel per intensity.

    Draws one ``(horizon, channels)`` block of uniforms from
    ``Generator(PCG64(seed))``; a channel spikes where its uniform is below
    the intensity.
    """
    x = _check_intensities(intensities).ravel()
    rng = np.random.Generator(np.random.PCG64(seed))
    return SpikeRaster(rng.random((horizon, x.size)) < x)


def analog_encode(intensities) -> np.ndarray:
    """Constant input currents: the intensities themselves, every step."""
    return _check_intensities(intensities).copy()


@dataclass
class ConvertedSnn:
    """Spiking copy of an :class:`AnnModel`.

    ``weights``/``biases`` are the ANN's own arrays (transferred, not copied).
    Layer ``l`` receives ``W_l @ s_{l-1} + bias_scales[l] * b_l`` each step.
    """

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    thresholds: list[float]
    bias_scales: list[float]
    mode: str = "rate"
    encoding: str = "analog"

    def __post_init__(self):
        if self.mode not in ("rate", "ttfs"):
            raise ConversionError(f"unknown neuron mode {self.mode!r}")
        if self.mode == "rate" and self.encoding not in ENCODINGS:
            raise ConversionError(f"unknown encoding {self.encoding!r}")
        if any(not th > 0 for th in self.thresholds):
            raise ConversionError("thresholds must be positive")

    @property
    def n_classes(self) -> int:
        return self.weights[-1].shape[0]


def _check_relu_hidden(ann: AnnModel):
    for k, layer in enumerate(ann.layers[:-1]):
        if layer.activation != "relu":
            raise ConversionError(f"hidden layer {k} uses {layer.activation!r}; only ReLU hidden layers convert")


def convert_rate(ann: AnnModel, threshold: float = 1.0, encoding: str = "analog") -> ConvertedSnn:
    """Transfer ``ann`` onto integrate-and-fire neurons with threshold ``threshold``.

    Layer ``l`` (0-based) fires at roughly ``a_l / threshold**(l+1)``. To keep
    that scaling consistent the bias of layer ``l`` is scaled by
    ``threshold**-l``; with the default threshold 1 nothing is rescaled.
    """
    _check_relu_hidden(ann)
    if not threshold > 0:
        raise ConversionError("threshold must be positive")
    n = len(ann.layers)
    return ConvertedSnn(
        weights=[l.weight for l in ann.layers],
        biases=[l.bias for l in ann.layers],
        thresholds=[float(threshold)] * n,
        bias_scales=[float(threshold) ** -k for k in range(n)],
        mode="rate",
        encoding=encoding,
    )


def convert_ttfs(ann: AnnModel, threshold: float = 1.0) -> ConvertedSnn:
    _check_relu_hidden(ann)
    if not threshold > 0:
        raise ConversionError("threshold must be positive")
    n = len(ann.layers)
    return ConvertedSnn(
        weights=[l.weight for l in ann.layers],
        biases=[l.bias for l in ann.layers],
        thresholds=[float(threshold)] * n,
        bias_scales=[1.0] * n,
        mode="ttfs",
        encoding="latency",
    )


# Rate coding: single-neuron identity.

@dataclass
class RateEstimate:
    counts: np.ndarray
    horizon: int

    @property
    def rates(self) -> np.ndarray:
        return self.counts / self.horizon


def if_neuron_trace(a: float, threshold: float, steps: int):
    """Drive one subtract-reset neuron with constant current ``a * threshold``.

    Returns ``(counts, potentials)`` where entry ``t-1`` holds the cumulative
    spike count and post-reset potential after step ``t``.
    """
    current = a * threshold
    counts = np.zeros(steps, dtype=np.int64)
    pots = np.zeros(steps)
    u, n = 0.0, 0
    for t in range(steps):
        v = u + current
        if v >= threshold:
            u = v - threshold
            n += 1
        else:
            u = v
        counts[t] = n
        pots[t] = u
    return counts, pots


def rate_identity_residual(counts, potentials, a: float, threshold: float) -> np.ndarray:
    """Per-step ``N_t/t - (a - u_t/(t * threshold))`` for ``t = 1..len(counts)``."""
    counts = np.asarray(counts, dtype=float)
    t = np.arange(1, counts.size + 1)
    return counts / t - (a - np.asarray(potentials) / (t * threshold))


# Rate coding: layered network.

def _layer_currents(snn: ConvertedSnn, k: int, inp):
    return inp @ snn.weights[k].T + snn.bias_scales[k] * snn.biases[k]


def run_rate_network(
    snn: ConvertedSnn,
    inputs: np.ndarray,
    horizon: int,
    record: Sequence[int] = (),
    seed: int = 0,
    input_raster: SpikeRaster | None = None,
):
    """Simulate a batch of images through a rate-converted network.

    ``inputs`` is ``(batch, input_dim)`` in ``[0, 1]``. With analog encoding
    the first layer sees the constant current ``inputs``; with Poisson
    encoding each step draws a fresh ``(batch, input_dim)`` block of uniforms
    from ``Generator(PCG64(seed))``, unless an explicit single-image
    ``input_raster`` is supplied.

    Returns a dict mapping each step in ``record`` (and ``horizon``) to the
    cumulative output spike counts ``(batch, classes)``.
    """
    x = np.atleast_2d(_check_intensities(inputs))
    batch = x.shape[0]
    nl = len(snn.weights)
    pots = [np.zeros((batch, w.shape[0])) for w in snn.weights]
    counts = np.zeros((batch, snn.n_classes), dtype=np.int64)
    marks = sorted(set(int(t) for t in record if 1 <= t <= horizon) | {horizon})
    out = {}
    rng = np.random.Generator(np.random.PCG64(seed))
    first_const = _layer_currents(snn, 0, x) if snn.encoding == "analog" else None
    if input_raster is not None and input_raster.horizon < horizon:
        raise ValueError("input raster shorter than horizon")

    for t in range(1, horizon + 1):
        if snn.encoding == "analog":
            current = first_const
        else:
            if input_raster is not None:
                spikes_in = input_raster.data[t - 1][None, :].astype(float)
            else:
                spikes_in = (rng.random(x.shape) < x).astype(float)
            current = _layer_currents(snn, 0, spikes_in)
        for k in range(nl):
            v = pots[k] + current
            s = (v >= snn.thresholds[k]).astype(float)
            pots[k] = v - snn.thresholds[k] * s
            if k + 1 < nl:
                current = _layer_currents(snn, k + 1, s)
        counts += s.astype(np.int64)
        if t in marks:
            out[t] = counts.copy()
    return out


# Time-to-first-spike coding.

def ttfs_literal(parent_times, weights, bias: float, threshold: float) -> float:
    """Closed-form crossing of the linear ramp when every parent counts."""
    parent_times = np.asarray(parent_times, dtype=float)
    weights = np.asarray(weights, dtype=float)
    denom = weights.sum() + bias
    if not denom > 0:
        return NO_SPIKE
    return float((threshold + weights @ parent_times) / denom)


def ttfs_first_spike(parent_times, weights, bias: float, threshold: float) -> float:
    """Earliest time the ramp ``sum_{t_j<t} w_j (t - t_j) + bias * t`` hits ``threshold``.

    Parents are taken in order of their spike times; between consecutive
    parent spikes the ramp is linear, so each interval is solved in closed
    form with only the parents that have already fired. If every parent fires
    before the crossing this is exactly :func:`ttfs_literal`. Returns
    ``NO_SPIKE`` (``inf``) when the ramp never reaches the threshold.
    Parents with an infinite time never fire.
    """
    times = np.asarray(parent_times, dtype=float)
    w = np.asarray(weights, dtype=float)
    if times.shape != w.shape:
        raise ValueError("parent_times and weights must have the same length")
    if threshold <= 0:
        return 0.0
    fired = np.isfinite(times)
    times, w = times[fired], w[fired]
    order = np.argsort(times, kind="stable")
    times, w = times[order], w[order]

    slope, offset = bias, 0.0  # ramp = slope * t - offset on the current interval
    left = 0.0
    k = 0
    m = times.size
    while True:
        while k < m and times[k] <= left:
            slope += w[k]
            offset += w[k] * times[k]
            k += 1
        right = times[k] if k < m else math.inf
        if slope > 0:
            with np.errstate(over="ignore"):
                t_star = (threshold + offset) / slope
            if t_star <= right:
                return float(max(t_star, left))
        if k >= m:
            return NO_SPIKE
        left = right


def latency_encode(intensities, t_max: float = 1.0) -> np.ndarray:
    """Input spike times ``t_max * (1 - x)``; zero intensity never fires."""
    x = _check_intensities(intensities)
    return np.where(x > 0, t_max * (1.0 - x), np.inf)


def _ttfs_layer(times, W, b, threshold):
    """Vectorised :func:`ttfs_first_spike` for all neurons of one layer."""
    order = np.argsort(times, kind="stable")
    ts = times[order]
    finite = np.isfinite(ts)
    Ws = W[:, order] * finite
    tz = np.where(finite, ts, 0.0)
    # interval k (k = 0..len(ts)) has the first k sorted parents active
    cw = np.concatenate([np.zeros((W.shape[0], 1)), np.cumsum(Ws, axis=1)], axis=1)
    cwt = np.concatenate([np.zeros((W.shape[0], 1)), np.cumsum(Ws * tz, axis=1)], axis=1)
    left = np.concatenate([[0.0], np.where(finite, ts, np.inf)])
    right = np.concatenate([np.where(finite, ts, np.inf), [np.inf]])
    # intervals that start at or before an equal time are empty; skip them
    nonempty = right > left
    nonempty[0] = True
    slope = cw + b[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        t_star = (threshold + cwt) / slope
    valid = (slope > 0) & (t_star <= right[None, :]) & nonempty[None, :] & np.isfinite(left)[None, :]
    t_star = np.maximum(t_star, left[None, :])
    hit = valid.any(axis=1)
    first = np.argmax(valid, axis=1)
    out = np.full(W.shape[0], np.inf)
    out[hit] = t_star[hit, first[hit]]
    return out


def ttfs_network_times(snn: ConvertedSnn, inputs: np.ndarray, t_max: float = 1.0) -> np.ndarray:
    """Output-layer first-spike times ``(batch, classes)`` for latency-coded inputs."""
    x = np.atleast_2d(inputs)
    out = np.empty((x.shape[0], snn.n_classes))
    for i, row in enumerate(x):
        times = latency_encode(row, t_max)
        for W, b, th, bs in zip(snn.weights, snn.biases, snn.thresholds, snn.bias_scales):
            times = _ttfs_layer(times, W, bs * b, th)
        out[i] = times
    return out


# Readout.

@dataclass
class Classification:
    prediction: int
    scores: np.ndarray
    degenerate: bool = False


def readout_counts(counts: np.ndarray) -> Classification:
    """Most spikes wins; ties go to the lowest class index."""
    counts = np.asarray(counts)
    return Classification(int(np.argmax(counts)), counts, bool(counts.max() == 0))


def readout_first_spike(times: np.ndarray, deadline: float = math.inf) -> Classification:
    """Earliest spike (at or before ``deadline``) wins; ties to the lowest index."""
    times = np.asarray(times, dtype=float)
    seen = np.where(times <= deadline, times, np.inf)
    if not np.isfinite(seen).any():
        return Classification(0, times, True)
    return Classification(int(np.argmin(seen)), times, False)


def classify(snn: ConvertedSnn, encoded, steps: int, seed: int = 0) -> Classification:
    """Classify one input.

    ``encoded`` is an analog intensity vector, a Poisson ``SpikeRaster``, or
    (TTFS mode) a raw intensity vector to be latency coded. In TTFS mode
    ``steps`` is the decision deadline on the first-spike time axis.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if snn.mode == "ttfs":
        times = ttfs_network_times(snn, encoded)[0]
        return readout_first_spike(times, deadline=steps)
    if isinstance(encoded, SpikeRaster):
        dummy = np.zeros((1, snn.weights[0].shape[1]))
        counts = run_rate_network(snn, dummy, steps, input_raster=encoded)[steps]
    else:
        counts = run_rate_network(snn, np.atleast_2d(encoded), steps, seed=seed)[steps]
    return readout_counts(counts[0])


@dataclass
class AccuracyPoint:
    t: int
    accuracy: float
    accuracy_std: float


def _point(t, correct) -> AccuracyPoint:
    correct = np.asarray(correct, dtype=float)
    return AccuracyPoint(int(t), float(correct.mean()), float(correct.std()))


def accuracy_curve(snn: ConvertedSnn, data: LabeledBatch, timesteps: Sequence[int], seed: int = 0) -> list[AccuracyPoint]:
    """Test accuracy at each decision time, with the per-image spread.

    ``accuracy_std`` is the standard deviation of per-image correctness.
    """
    timesteps = sorted(set(int(t) for t in timesteps))
    if snn.mode == "ttfs":
        times = ttfs_network_times(snn, data.inputs)
        return [
            _point(t, [readout_first_spike(row, t).prediction == y for row, y in zip(times, data.labels)])
            for t in timesteps
        ]
    snaps = run_rate_network(snn, data.inputs, max(timesteps), record=timesteps, seed=seed)
    return [_point(t, np.argmax(snaps[t], axis=1) == data.labels) for t in timesteps]
