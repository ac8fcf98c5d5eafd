"""Shared state generators for tests."""

import numpy as np


def random_density(rng, D, rank=None):
    """Ginibre-induced random density matrix of the given rank."""
    k = rank or D
    g = rng.standard_normal((D, k)) + 1j * rng.standard_normal((D, k))
    r = g @ g.conj().T
    return r / np.trace(r).real


def formula_state(dA, dB, a=1.0, b=2.0):
    """Float twin of ``oracles.formula_state``."""
    D = dA * dB
    j = np.arange(D)[:, None]
    k = np.arange(D)[None, :]
    M = np.cos(a * j + b * k) + 1j * np.sin(3 * j - a * k) / (1 + k)
    R = M @ M.conj().T
    return R / np.trace(R).real
