"""Steering from a qubit via entanglement of an auxiliary state.

For Alice holding a qubit, entanglement of
``tau = mu rho + (1 - mu)/2 I x rho_B`` with ``mu <= 1/sqrt(3)`` certifies
that ``rho`` is steerable from Alice to Bob. Entanglement of ``tau`` is
tested by the partial transpose; the correlation-matrix entanglement test
on ``tau`` at ``mu = 1/sqrt(3)`` reduces exactly to the ``loo`` steering test
on ``rho``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameterError, UnsupportedError
from .hermitian import LOOBasis, trace_norm
from .states import BipartiteState, reduced_states
from .steering import SteeringVerdict, correlation_matrix, loo_steering_check, purity

MU_MAX = 1 / math.sqrt(3)
NPT_TOL = -1e-10
VIOLATION_TOL = 1e-12


@dataclass(frozen=True)
class DasConfig:
    mu: float = MU_MAX

    def __post_init__(self):
        if not 0.0 <= self.mu <= MU_MAX + 1e-12:
            raise InvalidParameterError(f"mu must lie in [0, 1/sqrt(3)], got {self.mu}")


@dataclass(frozen=True)
class EntanglementVerdict:
    method: str
    witness: float
    entangled: bool
    # NPT is also necessary for separability only when dA * dB <= 6
    exact: bool = False

    def as_dict(self) -> dict:
        return {"method": self.method, "witness": self.witness, "entangled": self.entangled,
                "exact": self.exact}


def partial_transpose(state: BipartiteState, subsystem: str = "B") -> np.ndarray:
    """Transpose one tensor factor (Alice-major ordering)."""
    dA, dB = state.dA, state.dB
    r = state.rho.reshape(dA, dB, dA, dB)
    if subsystem.upper() == "B":
        r = r.transpose(0, 3, 2, 1)
    elif subsystem.upper() == "A":
        r = r.transpose(2, 1, 0, 3)
    else:
        raise InvalidParameterError(f"subsystem must be 'A' or 'B', got {subsystem!r}")
    return r.reshape(state.dim, state.dim)


def is_npt(state: BipartiteState) -> EntanglementVerdict:
    lo = float(np.linalg.eigvalsh(partial_transpose(state))[0])
    return EntanglementVerdict("npt", lo, lo < NPT_TOL, exact=state.dim <= 6)


def batch_min_pt_eigenvalues(rhos, dA: int, dB: int) -> np.ndarray:
    rhos = np.asarray(rhos)
    D = dA * dB
    pt = rhos.reshape(-1, dA, dB, dA, dB).transpose(0, 1, 4, 3, 2).reshape(-1, D, D)
    return np.linalg.eigvalsh(pt)[:, 0]


def _require_qubit(state: BipartiteState):
    if state.dA != 2:
        raise UnsupportedError(f"the reduction needs Alice to hold a qubit, got dA={state.dA}")


def das_tau(state: BipartiteState, cfg: DasConfig | None = None) -> BipartiteState:
    """``mu rho + (1 - mu)/2 I_2 x Tr_A rho``."""
    _require_qubit(state)
    mu = (cfg or DasConfig()).mu
    _, rb = reduced_states(state)
    return BipartiteState(2, state.dB, mu * state.rho + 0.5 * (1 - mu) * np.kron(np.eye(2), rb))


def batch_das_tau(rhos, dB: int, mu: float = MU_MAX) -> np.ndarray:
    rhos = np.asarray(rhos)
    rb = np.einsum("nijil->njl", rhos.reshape(-1, 2, dB, 2, dB))
    return mu * rhos + 0.5 * (1 - mu) * np.einsum("ik,njl->nijkl", np.eye(2), rb).reshape(rhos.shape)


def das_steering_check(state: BipartiteState, cfg: DasConfig | None = None) -> SteeringVerdict:
    """Steerable if ``tau`` has a negative partial transpose.

    ``lhs`` is minus the smallest PT eigenvalue and ``rhs`` the NPT tolerance.
    For ``dB > 3`` this is a lower bound.
    """
    cfg = cfg or DasConfig()
    ent = is_npt(das_tau(state, cfg))
    extras = {"mu": cfg.mu, "min_pt_eigenvalue": ent.witness, "lower_bound_only": state.dim > 6}
    # rhs chosen so that margin > VIOLATION_TOL iff the NPT flag is set
    return SteeringVerdict(-ent.witness, -NPT_TOL - VIOLATION_TOL, "das-npt", extras)


def ccnr_entanglement_check(state: BipartiteState, basisA: LOOBasis | None = None,
                            basisB: LOOBasis | None = None) -> EntanglementVerdict:
    """Entangled if ``||C||_1 > sqrt((1 - Tr rho_A^2)(1 - Tr rho_B^2))``."""
    ra, rb = reduced_states(state)
    lhs = trace_norm(correlation_matrix(state, basisA, basisB))
    rhs = math.sqrt(max(1 - purity(ra), 0.0) * max(1 - purity(rb), 0.0))
    return EntanglementVerdict("correlation", lhs - rhs, lhs - rhs > VIOLATION_TOL)


def das_local_equivalence_residual(state: BipartiteState) -> float:
    """Gap between the correlation test on ``tau`` (mu = 1/sqrt(3)) and ``loo`` on ``rho``.

    ``||C(tau)||_1 = mu ||C(rho)||_1`` and
    ``1 - Tr tau_A^2 = mu^2 ((1 + mu^2)/(2 mu^2) - Tr rho_A^2)``, with
    ``(1 + mu^2)/(2 mu^2) = 2``; both sides are divided by ``mu`` before
    comparing.
    """
    _require_qubit(state)
    mu = MU_MAX
    tau = das_tau(state, DasConfig(mu))
    ta, tb = reduced_states(tau)
    lhs_tau = trace_norm(correlation_matrix(tau)) / mu
    rhs_tau = math.sqrt(max(1 - purity(ta), 0.0) * max(1 - purity(tb), 0.0)) / mu
    ref = loo_steering_check(state)
    return max(abs(lhs_tau - ref.lhs), abs(rhs_tau - ref.rhs))
