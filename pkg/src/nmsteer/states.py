"""Bipartite density matrices and a small registry of named states.

Tensor ordering is Alice-major: row index ``a * dB + b``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameterError, InvalidStateError, ShapeError

STATE_TOL = 1e-10

PAULI = np.array([
    [[0, 1], [1, 0]],
    [[0, -1j], [1j, 0]],
    [[1, 0], [0, -1]],
], dtype=complex)


@dataclass(frozen=True, eq=False)
class BipartiteState:
    dA: int
    dB: int
    rho: np.ndarray

    def __post_init__(self):
        rho = np.asarray(self.rho, dtype=complex)
        D = self.dA * self.dB
        if rho.shape != (D, D):
            raise ShapeError(f"expected a {D}x{D} matrix for dims ({self.dA},{self.dB}), got {rho.shape}")
        rho.setflags(write=False)
        object.__setattr__(self, "rho", rho)

    @property
    def dim(self) -> int:
        return self.dA * self.dB

    def validate(self, tol: float = STATE_TOL) -> "BipartiteState":
        rho = self.rho
        if np.max(np.abs(rho - rho.conj().T)) > tol:
            raise InvalidStateError("density matrix is not hermitian")
        if abs(np.trace(rho).real - 1) > tol:
            raise InvalidStateError(f"trace is {np.trace(rho).real!r}, expected 1")
        lo = np.linalg.eigvalsh(rho)[0]
        if lo < -tol:
            raise InvalidStateError(f"density matrix has negative eigenvalue {lo:.3e}")
        return self

    def reduced(self) -> tuple[np.ndarray, np.ndarray]:
        return reduced_states(self)

    def swapped(self) -> "BipartiteState":
        """The same state with the parties' roles exchanged."""
        r = self.rho.reshape(self.dA, self.dB, self.dA, self.dB).transpose(1, 0, 3, 2)
        return BipartiteState(self.dB, self.dA, r.reshape(self.dim, self.dim))


def reduced_states(state: BipartiteState) -> tuple[np.ndarray, np.ndarray]:
    """Partial traces ``(Tr_B rho, Tr_A rho)``."""
    r = state.rho.reshape(state.dA, state.dB, state.dA, state.dB)
    return np.einsum("ijkj->ik", r), np.einsum("ijil->jl", r)


def product_state(rho_a, rho_b) -> BipartiteState:
    rho_a = np.asarray(rho_a)
    rho_b = np.asarray(rho_b)
    return BipartiteState(len(rho_a), len(rho_b), np.kron(rho_a, rho_b))


def maximally_mixed(dA: int, dB: int) -> BipartiteState:
    D = dA * dB
    return BipartiteState(dA, dB, np.eye(D) / D)


def singlet() -> BipartiteState:
    psi = np.array([0, 1, -1, 0]) / np.sqrt(2)
    return BipartiteState(2, 2, np.outer(psi, psi.conj()))


def bell_diagonal_eigenvalues(t) -> np.ndarray:
    """Spectrum of ``I/4 + sum_i t_i/2 sigma_i x sigma_i`` (Phi+, Phi-, Psi+, Psi-)."""
    t1, t2, t3 = map(float, t)
    return np.array([
        1 + 2 * (t1 - t2 + t3),
        1 + 2 * (-t1 + t2 + t3),
        1 + 2 * (t1 + t2 - t3),
        1 - 2 * (t1 + t2 + t3),
    ]) / 4


def bell_diagonal_state(t) -> BipartiteState:
    """``I/4 + sum_i (t_i/2) sigma_i x sigma_i``; ``t`` in (x, y, z) order."""
    t = np.asarray(t, dtype=float)
    if t.shape != (3,):
        raise InvalidParameterError("need three correlation coefficients")
    if bell_diagonal_eigenvalues(t).min() < -1e-12:
        raise InvalidParameterError(f"t={tuple(t)} is outside the Bell-diagonal tetrahedron")
    rho = np.eye(4, dtype=complex) / 4
    for ti, s in zip(t, PAULI):
        rho += 0.5 * ti * np.kron(s, s)
    return BipartiteState(2, 2, rho)


def werner(w: float) -> BipartiteState:
    """``w |singlet><singlet| + (1 - w) I/4``, i.e. ``t_i = -w/2``."""
    if not -1 / 3 - 1e-12 <= w <= 1 + 1e-12:
        raise InvalidParameterError(f"Werner visibility {w} outside [-1/3, 1]")
    return bell_diagonal_state([-w / 2] * 3)


def isotropic(d: int, v: float) -> BipartiteState:
    """``v |Phi+><Phi+| + (1 - v) I/d^2`` on ``d x d``."""
    if not -1 / (d * d - 1) - 1e-12 <= v <= 1 + 1e-12:
        raise InvalidParameterError(f"isotropic visibility {v} outside [-1/(d^2-1), 1]")
    phi = np.eye(d).reshape(-1) / np.sqrt(d)
    rho = v * np.outer(phi, phi) + (1 - v) * np.eye(d * d) / d**2
    return BipartiteState(d, d, rho)


_NAMED = re.compile(r"^(?P<name>[a-z-]+)(?:[:(](?P<args>[^)]*)\)?)?$")


def named_state(spec: str) -> BipartiteState:
    """Parse ``singlet``, ``werner:0.5``, ``bell-diag:t1,t2,t3``, ``isotropic:d,v``,
    ``mixed:dA,dB`` (parenthesized arguments also accepted)."""
    m = _NAMED.match(spec.strip().lower())
    if not m:
        raise InvalidParameterError(f"cannot parse state name {spec!r}")
    name = m.group("name")
    args = [a for a in (m.group("args") or "").replace(" ", "").split(",") if a]
    try:
        if name == "singlet" and not args:
            return singlet()
        if name == "werner" and len(args) == 1:
            return werner(float(args[0]))
        if name in ("bell-diag", "bell-diagonal", "belldiag") and len(args) == 3:
            return bell_diagonal_state([float(a) for a in args])
        if name == "isotropic" and len(args) == 2:
            return isotropic(int(args[0]), float(args[1]))
        if name in ("mixed", "maximally-mixed") and len(args) == 2:
            return maximally_mixed(int(args[0]), int(args[1]))
    except ValueError as exc:
        raise InvalidParameterError(f"bad arguments in state name {spec!r}: {exc}") from exc
    raise InvalidParameterError(f"unknown named state {spec!r}")


def state_to_dict(state: BipartiteState) -> dict:
    return {
        "dA": state.dA,
        "dB": state.dB,
        "rho": [[[float(z.real), float(z.imag)] for z in row] for row in state.rho],
    }


def state_from_dict(doc: dict) -> BipartiteState:
    """Inverse of :func:`state_to_dict`; entries are ``[re, im]`` pairs, row-major."""
    try:
        arr = np.asarray(doc["rho"], dtype=float)
        rho = arr[..., 0] + 1j * arr[..., 1]
        return BipartiteState(int(doc["dA"]), int(doc["dB"]), rho).validate()
    except (KeyError, IndexError, TypeError) as exc:
        raise InvalidStateError(f"malformed state document: {exc}") from exc
