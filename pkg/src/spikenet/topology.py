"""Neuron graphs: parent sets, synaptic weights and biases.

The edge list ``(post, pre, weight)`` is the canonical encoding. Parent sets
and dense weight matrices are derived from it on demand.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


class TopologyError(ValueError):
    """Raised when a topology is malformed."""


@dataclass(frozen=True)
class NetworkTopology:
    """Directed graph of neurons with weights ``w_ij`` on edges ``j -> i``.

    ``edges`` holds ``(post, pre, weight)`` triples in insertion order; for a
    given post-synaptic neuron the order of its parents follows that order.
    Self-loops are allowed.
    """

    neuron_count: int
    edges: tuple[tuple[int, int, float], ...]
    biases: tuple[float, ...]

    @cached_property
    def parents(self) -> dict[int, tuple[int, ...]]:
        out: dict[int, list[int]] = {i: [] for i in range(self.neuron_count)}
        for post, pre, _ in self.edges:
            out[post].append(pre)
        return {i: tuple(p) for i, p in out.items()}

    @cached_property
    def weights(self) -> dict[tuple[int, int], float]:
        return {(post, pre): w for post, pre, w in self.edges}

    def weight_matrix(self) -> np.ndarray:
        """Dense ``W[i, j] = w_ij`` (zero where there is no edge)."""
        W = np.zeros((self.neuron_count, self.neuron_count))
        for post, pre, w in self.edges:
            W[post, pre] = w
        return W

    def bias_vector(self) -> np.ndarray:
        return np.asarray(self.biases, dtype=float)

    def to_dict(self) -> dict:
        return {
            "neuron_count": self.neuron_count,
            "edges": [[post, pre, w] for post, pre, w in self.edges],
            "biases": list(self.biases),
        }


@dataclass(frozen=True)
class BoltzmannParams(NetworkTopology):
    """Fully connected, symmetric, loop-free topology parameterising a
    Boltzmann distribution over ``neuron_count`` binary units."""

    def __post_init__(self):
        n = self.neuron_count
        w = self.weights
        for i in range(n):
            if set(self.parents[i]) != set(range(n)) - {i} or len(self.parents[i]) != n - 1:
                raise TopologyError(f"neuron {i}: parents must be every other neuron")
        for (i, j), wij in w.items():
            if w[(j, i)] != wij:
                raise TopologyError(f"asymmetric weights: w[{i},{j}]={wij!r} != w[{j},{i}]={w[(j, i)]!r}")

    @classmethod
    def from_matrix(cls, weights: np.ndarray, biases: Sequence[float]) -> "BoltzmannParams":
        W = np.asarray(weights, dtype=float)
        n = W.shape[0]
        if W.shape != (n, n):
            raise TopologyError(f"weight matrix must be square, got {W.shape}")
        edges = [(i, j, float(W[i, j])) for i in range(n) for j in range(n) if i != j]
        topo = build_topology(n, edges, biases)
        return cls(topo.neuron_count, topo.edges, topo.biases)


def _check_finite(value, what: str) -> float:
    try:
        x = float(value)
    except (TypeError, ValueError):
        raise TopologyError(f"{what}: not a real number ({value!r})") from None
    if not math.isfinite(x):
        raise TopologyError(f"{what}: non-finite value {x!r}")
    return x


def _check_index(value, n: int, what: str) -> int:
    if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
        raise TopologyError(f"{what}: index must be an integer, got {value!r}")
    if not 0 <= value < n:
        raise TopologyError(f"{what}: index {value} out of range [0, {n})")
    return int(value)


def build_topology(
    neuron_count: int,
    edges: Iterable[Sequence],
    biases: Sequence[float],
) -> NetworkTopology:
    """Validate an edge list and return a :class:`NetworkTopology`.

    Raises
    ------
    TopologyError
        On out-of-range indices, duplicate edges, non-finite values or a bias
        vector of the wrong length.
    """
    if isinstance(neuron_count, bool) or not isinstance(neuron_count, (int, np.integer)) or neuron_count < 1:
        raise TopologyError(f"neuron_count must be a positive integer, got {neuron_count!r}")
    n = int(neuron_count)
    biases = list(biases)
    if len(biases) != n:
        raise TopologyError(f"expected {n} biases, got {len(biases)}")
    clean_biases = tuple(_check_finite(b, f"bias[{i}]") for i, b in enumerate(biases))

    clean_edges = []
    seen = set()
    for k, edge in enumerate(edges):
        if len(edge) != 3:
            raise TopologyError(f"edge {k}: expected (post, pre, weight), got {edge!r}")
        post = _check_index(edge[0], n, f"edge {k} post")
        pre = _check_index(edge[1], n, f"edge {k} pre")
        w = _check_finite(edge[2], f"edge {k} weight")
        if (post, pre) in seen:
            raise TopologyError(f"edge {k}: duplicate edge ({post}, {pre})")
        seen.add((post, pre))
        clean_edges.append((post, pre, w))
    return NetworkTopology(n, tuple(clean_edges), clean_biases)


def sample_boltzmann_params(
    n: int,
    weight_std: float,
    bias_mean: float,
    bias_std: float,
    seed: int,
) -> BoltzmannParams:
    """Draw symmetric Gaussian weights and Gaussian biases.

    Uses ``numpy.random.Generator(PCG64(seed))``. The upper triangle is drawn
    row-major (``(0,1), (0,2), ..., (n-2,n-1)``) first, then the ``n`` biases.
    Each lower-triangle weight is a copy of its mirror, so symmetry is exact.
    """
    if n < 1:
        raise TopologyError(f"n must be >= 1, got {n}")
    if weight_std < 0 or bias_std < 0:
        raise TopologyError("standard deviations must be non-negative")
    rng = np.random.Generator(np.random.PCG64(seed))
    iu = np.triu_indices(n, k=1)
    upper = rng.normal(0.0, weight_std, size=len(iu[0])) if weight_std > 0 else np.zeros(len(iu[0]))
    W = np.zeros((n, n))
    W[iu] = upper
    W[(iu[1], iu[0])] = upper
    gamma = rng.normal(bias_mean, bias_std, size=n) if bias_std > 0 else np.full(n, float(bias_mean))
    return BoltzmannParams.from_matrix(W, gamma)


# Serialisation: JSON with shortest round-trip decimal floats (Python ``repr``).

def topology_to_json(topology: NetworkTopology) -> str:
    return json.dumps(topology.to_dict(), allow_nan=False, indent=1)


def topology_from_json(text: str) -> NetworkTopology:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise TopologyError(f"line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    for key in ("neuron_count", "edges", "biases"):
        if key not in doc:
            raise TopologyError(f"missing field {key!r}")
    return build_topology(doc["neuron_count"], doc["edges"], doc["biases"])


def save_topology(topology: NetworkTopology, path) -> None:
    Path(path).write_text(topology_to_json(topology) + "\n")


def load_topology(path) -> NetworkTopology:
    return topology_from_json(Path(path).read_text())
