"""Hit-and-run sampling of density matrices, uniform in Hilbert-Schmidt volume.

A chain state is the vector ``c`` of traceless Bloch coefficients, so that
``rho(c) = I/D + sum_k c_k G_{k+2}`` in the canonical basis of dimension
``D``. Each step picks an isotropic direction, finds the chord of the PSD
cone through ``rho(c)`` and moves to a uniform point on it (shrunk by
``SHRINK`` at both ends).

The inner loop runs in the compiled ``_chain`` extension when available and
in ``_chain_py`` otherwise; set ``NMSTEER_BACKEND=python`` to force the
fallback. Both consume random numbers identically: directions come from one
child generator and chord positions from another, so the stream does not
depend on how steps are chunked.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field

import numpy as np

from . import _chain_py
from .errors import ChainRepairError, ConfigurationError
from .hermitian import gellmann_basis, traceless_structure

log = logging.getLogger(__name__)

SHRINK = 1e-9
SINGULAR_TOL = 1e-13
INTERIOR_TOL = 1e-14
_CHUNK_NUMBERS = 1 << 19


def _select_backend():
    if os.environ.get("NMSTEER_BACKEND", "").lower() == "python":
        return _chain_py, "python"
    try:
        from . import _chain
    except ImportError:  # pragma: no cover - depends on the build
        return _chain_py, "python"
    return _chain, "cython"


_kernel, BACKEND = _select_backend()


def get_kernel(backend=None):
    """Return ``(module, name)`` for ``backend`` in {None, 'cython', 'python'}."""
    if backend is None:
        return _kernel, BACKEND
    if backend == "python":
        return _chain_py, "python"
    if backend == "cython":
        from . import _chain

        return _chain, "cython"
    raise ConfigurationError(f"unknown backend {backend!r}")


@dataclass(frozen=True)
class SamplerConfig:
    """Chain settings. ``burn_in``/``thinning`` default to 50*(D^2-1) and D^2-1."""

    dim: int
    seed: int = 0
    burn_in: int | None = None
    thinning: int | None = None

    def __post_init__(self):
        if self.dim < 2:
            raise ConfigurationError(f"dimension must be >= 2, got {self.dim}")
        m = self.dim**2 - 1
        if self.burn_in is None:
            object.__setattr__(self, "burn_in", 50 * m)
        if self.thinning is None:
            object.__setattr__(self, "thinning", m)
        if self.burn_in < 0:
            raise ConfigurationError("burn_in must be >= 0")
        if self.thinning < 1:
            raise ConfigurationError("thinning must be >= 1")

    @property
    def n_params(self) -> int:
        return self.dim**2 - 1


def traceless_to_density(c, dim: int) -> np.ndarray:
    """``I/D + sum_k c_k G_{k+2}`` for one vector or a stack of vectors."""
    c = np.asarray(c, dtype=float)
    basis = gellmann_basis(dim)
    rho = np.tensordot(c, basis.elements[1:], axes=(-1, 0))
    rho += np.eye(dim) / dim
    return rho


def density_to_traceless(rho) -> np.ndarray:
    rho = np.asarray(rho)
    basis = gellmann_basis(rho.shape[-1])
    return np.einsum("ikl,...lk->...i", basis.elements[1:], rho).real


def random_direction(rng, dim: int) -> np.ndarray:
    """Isotropic unit vector: normalized standard-Gaussian draw."""
    if dim < 1:
        raise ConfigurationError("direction dimension must be >= 1")
    g = rng.standard_normal(dim)
    return g / np.linalg.norm(g)


def chord_endpoints(c, u, dim: int | None = None) -> tuple[float, float]:
    """Maximal ``(t_min, t_max)`` with ``rho(c) + t U`` positive semidefinite.

    ``c`` may be a traceless coefficient vector or a density matrix.
    Uses symmetric whitening ``rho^{-1/2} U rho^{-1/2}``.
    """
    c = np.asarray(c)
    if c.ndim == 2:
        rho = c
        dim = rho.shape[0]
    else:
        dim = dim or int(round(np.sqrt(len(c) + 1)))
        rho = traceless_to_density(c, dim)
    u = np.asarray(u, dtype=float)
    if not np.any(u):
        raise ConfigurationError("direction must be nonzero")
    U = np.tensordot(u, gellmann_basis(dim).elements[1:], axes=(0, 0))
    w, v = np.linalg.eigh(rho)
    if w[0] < SINGULAR_TOL:
        raise ChainRepairError(f"state is numerically singular (min eigenvalue {w[0]:.3e})", w[0])
    s = 1.0 / np.sqrt(w)
    e = np.linalg.eigvalsh((v.conj().T @ U @ v) * np.outer(s, s))
    return -1.0 / e[-1], -1.0 / e[0]


def hit_and_run_step(c, rng, dim: int | None = None) -> np.ndarray:
    """One step from traceless coefficients ``c``; returns the new vector."""
    c = np.asarray(c, dtype=float)
    dim = dim or int(round(np.sqrt(len(c) + 1)))
    u = random_direction(rng, len(c))
    t_min, t_max = chord_endpoints(c, u, dim)
    lo, hi = t_min + SHRINK, t_max - SHRINK
    t = lo + (hi - lo) * rng.random() if hi > lo else 0.5 * (t_min + t_max)
    return c + t * u


@dataclass
class HitAndRunChain:
    """A single sequential chain started at the maximally mixed state."""

    config: SamplerConfig
    backend: str | None = None
    c: np.ndarray = field(init=False)
    repairs: int = field(default=0, init=False)
    steps_taken: int = field(default=0, init=False)

    def __post_init__(self):
        self.c = np.zeros(self.config.n_params)
        self._kernel, self.backend = get_kernel(self.backend)
        dir_seq, pos_seq = np.random.SeedSequence(self.config.seed).spawn(2)
        self._rng_dir = np.random.Generator(np.random.PCG64(dir_seq))
        self._rng_pos = np.random.Generator(np.random.PCG64(pos_seq))
        self._struct = traceless_structure(self.config.dim)
        self._burned = False

    def _run(self, steps: int, thinning: int, out: np.ndarray) -> int:
        m = self.config.n_params
        gauss = self._rng_dir.standard_normal((steps, m))
        unif = self._rng_pos.random(steps)
        emitted, repairs = self._kernel.advance(
            self.c, gauss, unif, thinning, out, self.config.dim, *self._struct, SHRINK
        )
        if repairs:
            log.warning("chain repaired %d time(s) after numerically singular states", repairs)
        self.repairs += repairs
        self.steps_taken += steps
        return emitted

    def burn(self):
        if self._burned:
            return
        m = self.config.n_params
        remaining = self.config.burn_in
        chunk = max(1, _CHUNK_NUMBERS // m)
        dummy = np.empty((0, m))
        while remaining > 0:
            k = min(chunk, remaining)
            self._run(k, 0, dummy)
            remaining -= k
        self._burned = True

    def sample_blocks(self, n: int):
        """Yield arrays of traceless coefficient vectors, ``n`` rows in total."""
        self.burn()
        m = self.config.n_params
        th = self.config.thinning
        per_chunk = max(1, _CHUNK_NUMBERS // (m * th))
        remaining = n
        while remaining > 0:
            k = min(per_chunk, remaining)
            out = np.empty((k, m))
            got = self._run(k * th, th, out)
            assert got == k
            remaining -= k
            yield out

    def sample(self, n: int) -> np.ndarray:
        return np.concatenate(list(self.sample_blocks(n))) if n else np.empty((0, self.config.n_params))


def sample_bloch(config: SamplerConfig, n: int, backend=None) -> np.ndarray:
    """``n`` thinned traceless coefficient vectors from a fresh chain."""
    if n < 1:
        raise ConfigurationError("sample count must be >= 1")
    return HitAndRunChain(config, backend=backend).sample(n)


def sample_states(config: SamplerConfig, n: int, dims=None, backend=None):
    """Stream ``n`` :class:`~nmsteer.states.BipartiteState` objects.

    ``dims = (dA, dB)`` with ``dA * dB == config.dim``; defaults to
    ``(config.dim, 1)``.
    """
    from .states import BipartiteState

    if dims is None:
        dims = (config.dim, 1)
    if dims[0] * dims[1] != config.dim:
        raise ConfigurationError(f"dims {dims} do not multiply to {config.dim}")
    if n < 1:
        raise ConfigurationError("sample count must be >= 1")
    chain = HitAndRunChain(config, backend=backend)
    for block in chain.sample_blocks(n):
        for rho in traceless_to_density(block, config.dim):
            yield BipartiteState(dims[0], dims[1], rho)


def save_dump(path, bloch, config: SamplerConfig, backend: str = BACKEND):
    """Write sampled Bloch vectors as JSON with a dimension/seed header."""
    import json

    doc = {
        "format": "nmsteer-bloch-dump/1",
        "dim": config.dim,
        "seed": config.seed,
        "burn_in": config.burn_in,
        "thinning": config.thinning,
        "backend": backend,
        "coefficients": np.asarray(bloch).tolist(),
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_dump(path):
    import json

    with open(path) as fh:
        doc = json.load(fh)
    cfg = SamplerConfig(doc["dim"], doc["seed"], doc["burn_in"], doc["thinning"])
    return cfg, np.asarray(doc["coefficients"], dtype=float)
