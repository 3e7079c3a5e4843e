"""Discrete-time spiking neural networks.

Modules: ``topology`` (neuron graphs), ``srm`` (spike response model),
``ann`` (ReLU networks), ``convert`` (ANN-to-SNN conversion), ``sampler``
(neural sampling from Boltzmann distributions) and ``harness`` (CLI and
experiment runner).
"""

__version__ = "0.1.0"
