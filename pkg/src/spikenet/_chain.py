"""Compiled inner loop of the neural-sampling chain."""

import math

from numba import njit


@njit(cache=True)
def run_chain(W, bias, tau_ref, delta, uniforms, steps, random_scan, configs):
    """Advance ``delta`` in place for ``steps`` time steps.

    Sequential scan reads one uniform per neuron per step; random scan reads
    two per micro-step (neuron choice, then spike draw) and makes ``n``
    micro-steps per time step. ``configs[t]`` receives the z-configuration
    (bit ``i`` = neuron ``i``) at the end of step ``t``.
    """
    n = delta.shape[0]
    log_tau = math.log(tau_ref)
    pos = 0
    for t in range(steps):
        for m in range(n):
            if random_scan:
                i = int(uniforms[pos] * n)
                if i >= n:
                    i = n - 1
                pos += 1
            else:
                i = m
            r = uniforms[pos]
            pos += 1
            if delta[i] > 1:
                delta[i] -= 1
                continue
            u = bias[i]
            for j in range(n):
                if j != i and delta[j] > 0:
                    u += W[i, j]
            x = u - log_tau
            if x >= 0:
                p = 1.0 / (1.0 + math.exp(-x))
            else:
                e = math.exp(x)
                p = e / (1.0 + e)
            if r < p:
                delta[i] = tau_ref
            else:
                delta[i] = 0
        code = 0
        for i in range(n):
            if delta[i] > 0:
                code |= 1 << i
        configs[t] = code
    return pos
