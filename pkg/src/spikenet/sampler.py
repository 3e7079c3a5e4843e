"""Neural sampling from Boltzmann distributions with refractory spiking neurons.

Each neuron carries a refractory counter ``delta`` in ``{0, ..., tau_ref}``
and the binary state ``z = [delta >= 1]``. A neuron with ``delta > 1`` counts
down deterministically. A neuron with ``delta`` in ``{0, 1}`` spikes with
probability ``sigmoid(u - log(tau_ref))``, where ``u`` is its linear
potential over the other neurons' ``z``. A spike sets ``delta = tau_ref``;
otherwise ``delta`` becomes 0.

Configurations of ``z`` are coded as integers with bit ``i`` for neuron ``i``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from ._chain import run_chain
from .topology import NetworkTopology

MAX_ENUMERATION = 20
MAX_CHAIN_STATES = 100_000
SCHEDULES = ("sequential", "random")


def sigmoid(x):
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out if out.ndim else float(out)


@dataclass
class RefractoryState:
    delta: np.ndarray
    tau_ref: int

    def __post_init__(self):
        self.delta = np.asarray(self.delta, dtype=np.int64)
        if self.tau_ref < 1:
            raise ValueError("tau_ref must be a positive integer")
        if self.delta.size and (self.delta.min() < 0 or self.delta.max() > self.tau_ref):
            raise ValueError(f"delta must lie in [0, {self.tau_ref}]")

    @property
    def z(self) -> np.ndarray:
        return (self.delta >= 1).astype(np.int64)

    @classmethod
    def resting(cls, n: int, tau_ref: int) -> "RefractoryState":
        return cls(np.zeros(n, dtype=np.int64), tau_ref)

    def copy(self) -> "RefractoryState":
        return RefractoryState(self.delta.copy(), self.tau_ref)


def linear_potential(z, params: NetworkTopology, neuron: int) -> float:
    """``sum_{j in P_i, j != i} w_ij z_j + gamma_i``."""
    u = params.biases[neuron]
    for j in params.parents[neuron]:
        if j != neuron and z[j]:
            u += params.weights[(neuron, j)]
    return float(u)


def spike_probability(u: float, tau_ref: int) -> float:
    return sigmoid(u - math.log(tau_ref))


def _update_neuron(state: RefractoryState, params, i: int, r: float) -> None:
    if state.delta[i] > 1:
        state.delta[i] -= 1
        return
    p = spike_probability(linear_potential(state.z, params, i), state.tau_ref)
    state.delta[i] = state.tau_ref if r < p else 0


def chain_step(state: RefractoryState, params: NetworkTopology, rng: np.random.Generator, schedule: str = "sequential") -> RefractoryState:
    """One time step of the chain; returns a new state.

    ``sequential`` updates neurons ``0..n-1`` in order and draws one uniform
    per neuron (also for refractory ones). ``random`` performs ``n``
    micro-steps, each drawing a uniform to pick the neuron and another for the
    spike decision.
    """
    state = state.copy()
    n = state.delta.size
    for m in range(n):
        if schedule == "random":
            i = min(int(rng.random() * n), n - 1)
        elif schedule == "sequential":
            i = m
        else:
            raise ValueError(f"unknown schedule {schedule!r}")
        _update_neuron(state, params, i, rng.random())
    return state


# Exact distribution.

def all_configurations(n: int) -> np.ndarray:
    """``(2**n, n)`` binary matrix; row ``c`` holds the bits of ``c``."""
    codes = np.arange(2 ** n)
    return (codes[:, None] >> np.arange(n)[None, :]) & 1


def log_unnormalized(z, params: NetworkTopology) -> float:
    """``1/2 sum_i sum_{j in P_i} w_ij z_i z_j + sum_i gamma_i z_i``."""
    z = np.asarray(z, dtype=float)
    return float(0.5 * z @ params.weight_matrix() @ z + params.bias_vector() @ z)


@dataclass
class DistributionTable:
    log_weights: np.ndarray
    probabilities: np.ndarray

    @property
    def n(self) -> int:
        return int(round(math.log2(self.probabilities.size)))


def exact_distribution(params: NetworkTopology) -> DistributionTable:
    n = params.neuron_count
    if n > MAX_ENUMERATION:
        raise ValueError(f"exact enumeration refused: {n} neurons > {MAX_ENUMERATION}")
    Z = all_configurations(n).astype(float)
    W = params.weight_matrix()
    logw = 0.5 * np.einsum("ci,ij,cj->c", Z, W, Z) + Z @ params.bias_vector()
    shifted = np.exp(logw - logw.max())
    return DistributionTable(logw, shifted / shifted.sum())


# Divergences.

def kl_divergence(empirical, exact: DistributionTable | np.ndarray, pseudo_count: float = 0.0) -> float:
    """``KL(q || p)`` in nats.

    ``empirical`` holds counts or probabilities; it is normalised after adding
    ``pseudo_count`` to every bin. Returns ``inf`` if ``q`` puts mass where
    ``p`` has none.
    """
    p = exact.probabilities if isinstance(exact, DistributionTable) else np.asarray(exact, dtype=float)
    q = np.asarray(empirical, dtype=float) + pseudo_count
    if q.shape != p.shape:
        raise ValueError(f"shape mismatch {q.shape} vs {p.shape}")
    q = q / q.sum()
    mask = q > 0
    if np.any(p[mask] <= 0):
        return math.inf
    return float(max(0.0, np.sum(q[mask] * np.log(q[mask] / p[mask]))))


def total_variation(p, q) -> float:
    return float(0.5 * np.abs(np.asarray(p) - np.asarray(q)).sum())


# Sampling runs.

@dataclass
class SamplingTrace:
    counts: np.ndarray
    samples: int
    checkpoints: list[tuple[int, float]] = field(default_factory=list)
    exact: DistributionTable | None = None

    @property
    def final_kl(self) -> float:
        return self.checkpoints[-1][1]

    def kl_at(self, samples: int) -> float:
        return dict(self.checkpoints)[samples]


def kl_pseudo_count(samples: int) -> float:
    return 1.0 / (10.0 * samples)


def checkpoint_schedule(samples: int, per_decade: int = 10) -> list[int]:
    """Log-spaced sample counts, always including ``samples // 100`` and ``samples``."""
    if samples < 1:
        return []
    k = max(2, int(math.ceil(per_decade * math.log10(max(samples, 10)))) + 1)
    grid = np.unique(np.round(np.logspace(0, math.log10(samples), k)).astype(np.int64))
    marks = set(grid.tolist()) | {samples}
    if samples >= 100:
        marks.add(samples // 100)
    return sorted(m for m in marks if 1 <= m <= samples)


def _uniforms_per_step(n, schedule):
    return 2 * n if schedule == "random" else n


def run_sampling(
    params: NetworkTopology,
    tau_ref: int,
    total_steps: int,
    thinning: int = 1,
    burn_in: int = 10_000,
    seed: int = 0,
    schedule: str = "sequential",
    checkpoints: list[int] | None = None,
    chunk: int = 1 << 16,
    initial: RefractoryState | None = None,
) -> SamplingTrace:
    """Run the chain for ``total_steps`` time steps and histogram ``z``.

    Steps ``burn_in .. total_steps-1`` are eligible; every ``thinning``-th of
    them is recorded. KL against the exact distribution is evaluated after
    each count in ``checkpoints`` (default: :func:`checkpoint_schedule`),
    with pseudo-count :func:`kl_pseudo_count` per bin.

    Randomness: one ``Generator(PCG64(seed))`` whose uniforms are consumed in
    time order exactly as :func:`chain_step` consumes them.
    """
    if total_steps < burn_in:
        raise ValueError("total_steps must be >= burn_in")
    if thinning < 1:
        raise ValueError("thinning must be >= 1")
    if schedule not in SCHEDULES:
        raise ValueError(f"unknown schedule {schedule!r}")
    n = params.neuron_count
    exact = exact_distribution(params)
    samples = len(range(burn_in, total_steps, thinning))
    if checkpoints is None:
        checkpoints = checkpoint_schedule(samples)
    pending = sorted(c for c in set(checkpoints) if 1 <= c <= samples)

    W = params.weight_matrix()
    b = params.bias_vector()
    state = initial.copy() if initial is not None else RefractoryState.resting(n, tau_ref)
    delta = state.delta.copy()
    rng = np.random.Generator(np.random.PCG64(seed))
    per_step = _uniforms_per_step(n, schedule)
    counts = np.zeros(2 ** n, dtype=np.int64)
    recorded = 0
    trace = []
    configs = np.empty(chunk, dtype=np.int64)

    t0 = 0
    while t0 < total_steps:
        steps = min(chunk, total_steps - t0)
        uniforms = rng.random(steps * per_step)
        run_chain(W, b, tau_ref, delta, uniforms, steps, schedule == "random", configs)
        times = np.arange(t0, t0 + steps)
        keep = configs[:steps][(times >= burn_in) & ((times - burn_in) % thinning == 0)]
        pos = 0
        while pending and recorded + (keep.size - pos) >= pending[0]:
            take = pending[0] - recorded
            counts += np.bincount(keep[pos:pos + take], minlength=counts.size)
            pos += take
            recorded += take
            trace.append((recorded, kl_divergence(counts, exact, kl_pseudo_count(recorded))))
            pending.pop(0)
        counts += np.bincount(keep[pos:], minlength=counts.size)
        recorded += keep.size - pos
        t0 += steps
    return SamplingTrace(counts, recorded, trace, exact)


# Exact transition operator.

def _state_codes(n, tau_ref):
    radix = tau_ref + 1
    size = radix ** n
    if size > MAX_CHAIN_STATES:
        raise ValueError(f"chain state space too large: {size} > {MAX_CHAIN_STATES}")
    codes = np.arange(size)
    delta = (codes[:, None] // radix ** np.arange(n)[None, :]) % radix
    return delta, radix ** np.arange(n)


def neuron_operator(params: NetworkTopology, tau_ref: int, i: int) -> sp.csr_matrix:
    """Transition matrix of a single update of neuron ``i`` over all ``delta`` vectors."""
    n = params.neuron_count
    delta, place = _state_codes(n, tau_ref)
    size = delta.shape[0]
    z = (delta >= 1).astype(float)
    W = params.weight_matrix()
    np.fill_diagonal(W, 0.0)
    u = z @ W[i] + params.biases[i]
    p = sigmoid(u - math.log(tau_ref))
    src = np.arange(size)
    base = src - delta[:, i] * place[i]
    rows, cols, vals = [], [], []
    counting = delta[:, i] > 1
    rows.append(src[counting]); cols.append(src[counting] - place[i]); vals.append(np.ones(counting.sum()))
    free = ~counting
    rows.append(src[free]); cols.append(base[free] + tau_ref * place[i]); vals.append(p[free])
    rows.append(src[free]); cols.append(base[free]); vals.append(1.0 - p[free])
    return sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(size, size)
    )


@dataclass
class StationaryResult:
    matrix: sp.csr_matrix
    stationary: np.ndarray
    marginal: np.ndarray
    residual: float
    iterations: int
    delta_states: np.ndarray


def build_transition_matrix(
    params: NetworkTopology,
    tau_ref: int,
    schedule: str = "sequential",
    tol: float = 1e-12,
    max_iter: int = 1_000_000,
) -> StationaryResult:
    """One-time-step transition matrix, its stationary law, and the z-marginal.

    Rows index the current ``delta`` vector (mixed radix ``tau_ref + 1``,
    neuron 0 least significant). The stationary vector comes from power
    iteration until ``||pi P - pi||_1 < tol``.
    """
    n = params.neuron_count
    ops = [neuron_operator(params, tau_ref, i) for i in range(n)]
    if schedule == "sequential":
        P = ops[0]
        for op in ops[1:]:
            P = P @ op
    elif schedule == "random":
        M = sum(ops) / n
        P = M
        for _ in range(n - 1):
            P = P @ M
    else:
        raise ValueError(f"unknown schedule {schedule!r}")
    P = sp.csr_matrix(P)
    PT = P.T.tocsr()
    size = P.shape[0]
    pi = np.full(size, 1.0 / size)
    residual = math.inf
    for it in range(1, max_iter + 1):
        nxt = PT @ pi
        nxt /= nxt.sum()
        residual = float(np.abs(nxt - pi).sum())
        pi = nxt
        if residual < tol:
            break
    else:
        raise RuntimeError(f"power iteration did not reach {tol} (residual {residual})")
    delta, _ = _state_codes(n, tau_ref)
    zcode = ((delta >= 1) * (1 << np.arange(n))[None, :]).sum(axis=1)
    marginal = np.bincount(zcode, weights=pi, minlength=2 ** n)
    return StationaryResult(P, pi, marginal, residual, it, delta)


def refractory_joint(params: NetworkTopology, tau_ref: int) -> np.ndarray:
    """Closed-form invariant law over ``delta`` vectors.

    ``p(delta) = p(z) * tau_ref ** -|z|``: the Boltzmann marginal with the
    counter uniform over ``1..tau_ref`` for every active neuron.
    """
    n = params.neuron_count
    delta, _ = _state_codes(n, tau_ref)
    z = (delta >= 1)
    zcode = (z * (1 << np.arange(n))[None, :]).sum(axis=1)
    pz = exact_distribution(params).probabilities
    return pz[zcode] * float(tau_ref) ** (-z.sum(axis=1))


def configuration_bits(code: int, n: int) -> str:
    """Bits of ``code`` written neuron 0 first."""
    return "".join(str((code >> i) & 1) for i in range(n))
