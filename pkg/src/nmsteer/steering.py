"""Correlation-matrix steering tests from Alice to Bob.

Three detectors share one inequality shape ``||C||_1 > bound``:

* ``loo``: local orthonormal operator bases on both sides,
  bound ``sqrt((dA - Tr rho_A^2)(1 - Tr rho_B^2))``;
* ``povm``: informationally complete (N,M)-POVMs, where the trace norm and
  the bound both pick up ``sqrt(gamma_A gamma_B)``;
* ``loo-rescaled``: Alice's basis elements rescaled by ``h_i``, with
  ``h`` optimized numerically.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateVarianceError, InvalidParameterError, ShapeError, UnsupportedError
from .hermitian import LOOBasis, gellmann_basis, trace_norm, trace_norms
from .povm import NMPOVM
from .states import PAULI, BipartiteState, reduced_states

VIOLATION_TOL = 1e-12
ZERO_VARIANCE = 1e-12
BELL_RHS = math.sqrt(3) / 2


@dataclass(frozen=True)
class SteeringVerdict:
    lhs: float
    rhs: float
    detector: str
    extras: dict = field(default_factory=dict)

    @property
    def margin(self) -> float:
        return self.lhs - self.rhs

    @property
    def violated(self) -> bool:
        return self.margin > VIOLATION_TOL

    def as_dict(self) -> dict:
        out = {
            "detector": self.detector,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "margin": self.margin,
            "violated": self.violated,
        }
        out.update(self.extras)
        return out


def measurement_operators(meas, dim: int | None = None) -> np.ndarray:
    """Operator stack ``(n, d, d)`` for a basis, a POVM or a raw array."""
    if isinstance(meas, LOOBasis):
        ops = meas.elements
    elif isinstance(meas, NMPOVM):
        ops = meas.effects
    else:
        ops = np.asarray(meas, dtype=complex)
    if ops.ndim != 3 or ops.shape[1] != ops.shape[2]:
        raise ShapeError(f"measurement must be a stack of square matrices, got shape {ops.shape}")
    if dim is not None and ops.shape[1] != dim:
        raise ShapeError(f"measurement acts on dimension {ops.shape[1]}, state factor has {dim}")
    return ops


class CorrelationKernel:
    """Precomputed linear map from density matrices to correlation matrices.

    ``C_ij = Tr{A_i x B_j (rho - rho_A x rho_B)}`` is linear in the
    covariance-like operator, so it is a single real matrix product per
    batch of states.
    """

    def __init__(self, measA, measB, dA: int, dB: int):
        A = measurement_operators(measA, dA)
        B = measurement_operators(measB, dB)
        self.dA, self.dB = dA, dB
        self.shape = (len(A), len(B))
        # Tr{(A_i x B_j) X} = sum A_i[p,q] B_j[r,s] X[(q,s),(p,r)]
        K = np.einsum("ipq,jrs->ijqspr", A, B).reshape(len(A) * len(B), -1)
        self._kr = np.ascontiguousarray(K.real.T)
        self._ki = np.ascontiguousarray(K.imag.T)

    def covariance(self, rhos) -> np.ndarray:
        rhos = np.asarray(rhos)
        r = rhos.reshape(-1, self.dA, self.dB, self.dA, self.dB)
        ra = np.einsum("nijkj->nik", r)
        rb = np.einsum("nijil->njl", r)
        prod = np.einsum("nik,njl->nijkl", ra, rb)
        return (r - prod).reshape(rhos.shape)

    def __call__(self, rhos) -> np.ndarray:
        """Correlation matrices for one ``(D, D)`` state or a stack of them."""
        rhos = np.asarray(rhos)
        single = rhos.ndim == 2
        X = self.covariance(rhos.reshape(-1, *rhos.shape[-2:]))
        flat = X.reshape(len(X), -1)
        C = flat.real @ self._kr - flat.imag @ self._ki
        C = C.reshape(-1, *self.shape)
        return C[0] if single else C


def correlation_matrix(state: BipartiteState, measA=None, measB=None) -> np.ndarray:
    """``C_ij = Tr{A_i x B_j (rho - rho_A x rho_B)}``; defaults to canonical bases.

    Row/column order follows the basis order, or ``alpha * M + a`` for POVMs.
    """
    measA = gellmann_basis(state.dA) if measA is None else measA
    measB = gellmann_basis(state.dB) if measB is None else measB
    A = measurement_operators(measA, state.dA)
    B = measurement_operators(measB, state.dB)
    ra, rb = reduced_states(state)
    X = (state.rho - np.kron(ra, rb)).reshape(state.dA, state.dB, state.dA, state.dB)
    return np.einsum("ipq,jrs,qspr->ij", A, B, X).real


def purity(rho) -> float:
    rho = np.asarray(rho)
    return float(np.einsum("ij,ji->", rho, rho).real)


def loo_bound(state: BipartiteState) -> float:
    ra, rb = reduced_states(state)
    return math.sqrt(max(state.dA - purity(ra), 0.0) * max(1.0 - purity(rb), 0.0))


def loo_steering_check(state: BipartiteState, basisA: LOOBasis | None = None,
                       basisB: LOOBasis | None = None) -> SteeringVerdict:
    """Trace-norm test with local orthonormal operator bases, A to B."""
    C = correlation_matrix(state, basisA, basisB)
    return SteeringVerdict(trace_norm(C), loo_bound(state), "loo")


def loo_steering_check_swapped(state: BipartiteState, basisA: LOOBasis | None = None,
                               basisB: LOOBasis | None = None) -> SteeringVerdict:
    """The same test with the roles exchanged (steering from B to A)."""
    v = loo_steering_check(state.swapped(), basisB, basisA)
    return SteeringVerdict(v.lhs, v.rhs, "loo-swapped")


def _require_ic(povm: NMPOVM):
    if not povm.params.informationally_complete:
        raise UnsupportedError(f"steering bound needs an informationally complete POVM, got {povm.params}")


def povm_steering_check(state: BipartiteState, povmA: NMPOVM, povmB: NMPOVM,
                        basisA: LOOBasis | None = None, basisB: LOOBasis | None = None) -> SteeringVerdict:
    """POVM form of the test; records the scaling-identity residual."""
    _require_ic(povmA)
    _require_ic(povmB)
    scale = math.sqrt(povmA.gamma * povmB.gamma)
    lhs = trace_norm(correlation_matrix(state, povmA, povmB))
    loo_lhs = trace_norm(correlation_matrix(state, basisA, basisB))
    extras = {
        "gamma_a": povmA.gamma,
        "gamma_b": povmB.gamma,
        "loo_lhs": loo_lhs,
        "scaling_residual": abs(lhs - scale * loo_lhs),
    }
    return SteeringVerdict(lhs, scale * loo_bound(state), "povm", extras)


def scaling_identity_residual(state: BipartiteState, povmA: NMPOVM, povmB: NMPOVM,
                              basisA: LOOBasis | None = None, basisB: LOOBasis | None = None) -> float:
    """``| ||C(povms)||_1 - sqrt(gamma_A gamma_B) ||C(bases)||_1 |``."""
    _require_ic(povmA)
    _require_ic(povmB)
    lhs = trace_norm(correlation_matrix(state, povmA, povmB))
    ref = trace_norm(correlation_matrix(state, basisA, basisB))
    return abs(lhs - math.sqrt(povmA.gamma * povmB.gamma) * ref)


@dataclass(frozen=True)
class PovmMoments:
    """Closed-form moment sums of a POVM together with direct sums."""

    sum_sq_means: float
    sum_second_moments: float
    max_sum_sq_means: float
    direct: tuple

    @property
    def residual(self) -> float:
        closed = (self.sum_sq_means, self.sum_second_moments, self.max_sum_sq_means)
        return max(abs(a - b) for a, b in zip(closed, self.direct))

    def as_tuple(self) -> tuple:
        return self.sum_sq_means, self.sum_second_moments, self.max_sum_sq_means


def povm_moments(rho, povm: NMPOVM) -> PovmMoments:
    """Sums ``sum_i Tr{Pi_i rho}^2``, ``sum_i Tr{Pi_i^2 rho}`` and the max of the first.

    The closed forms depend on ``rho`` only through its purity; the direct
    sums run over the effects (the max is evaluated on a pure state, which
    attains it).
    """
    _require_ic(povm)
    p = povm.params
    rho = np.asarray(rho)
    if rho.shape != (p.d, p.d):
        raise ShapeError(f"state shape {rho.shape} does not match POVM dimension {p.d}")
    g = povm.gamma
    offset = (p.N * p.d / p.M - g) / p.d
    E = povm.effects
    means = np.einsum("iab,ba->i", E, rho).real
    second = np.einsum("iab,ibc,ca->i", E, E, rho).real
    pure = np.zeros((p.d, p.d))
    pure[0, 0] = 1.0
    pure_means = np.einsum("iab,ba->i", E, pure).real
    direct = (float(means @ means), float(second.sum()), float(pure_means @ pure_means))
    return PovmMoments(g * purity(rho) + offset, p.d * g + offset, g + offset, direct)


# rescaled observables -----------------------------------------------------


@dataclass(frozen=True)
class RescaleOptions:
    restarts: int = 20
    max_iter: int = 500
    rtol: float = 1e-8
    seed: int | None = 0


def alice_variances(rho_a, basis: LOOBasis) -> np.ndarray:
    """``v_i = Tr{G_i^2 rho_A} - Tr{G_i rho_A}^2``."""
    G = basis.elements
    first = np.einsum("iab,ba->i", G, rho_a).real
    second = np.einsum("iab,ibc,ca->i", G, G, rho_a).real
    return np.maximum(second - first**2, 0.0)


def maximize_weighted_trace_norm(Ct, restarts: int = 20, max_iter: int = 500, rtol: float = 1e-8,
                                 rng=None) -> tuple[np.ndarray, float]:
    """Maximize ``||diag(g) Ct||_1`` over unit vectors ``g``.

    The objective is convex and 1-homogeneous, so ``g <- grad / |grad|``
    never decreases it. All starts (uniform plus ``restarts`` random ones)
    iterate together as one batched SVD per step.
    """
    Ct = np.asarray(Ct, dtype=float)
    n = Ct.shape[0]
    rng = np.random.default_rng(rng)
    starts = np.vstack([np.ones((1, n)), np.abs(rng.standard_normal((restarts, n)))])
    g = starts / np.linalg.norm(starts, axis=1, keepdims=True)
    best = np.full(len(g), -np.inf)
    active = np.ones(len(g), dtype=bool)
    for _ in range(max_iter):
        X = g[active, :, None] * Ct
        u, s, vt = np.linalg.svd(X, full_matrices=False)
        val = s.sum(axis=1)
        # d/dg_i ||diag(g) Ct||_1 = sum_j (U V^T)_ij Ct_ij
        grad = np.einsum("kij,ij->ki", u @ vt, Ct)
        prev = best[active]
        done = val <= prev * (1 + rtol)
        best[active] = np.maximum(val, prev)
        norm = np.linalg.norm(grad, axis=1)
        step = norm > 0
        idx = np.flatnonzero(active)
        g[idx[step]] = grad[step] / norm[step, None]
        active[idx[done | ~step]] = False
        if not active.any():
            break
    # g may have moved one step past the best value; recompute at g
    vals = np.linalg.svd(g[:, :, None] * Ct, compute_uv=False).sum(axis=1)
    k = int(np.argmax(vals))
    return g[k], float(vals[k])


def optimize_rescaled_steering(state: BipartiteState, basisA: LOOBasis | None = None,
                               basisB: LOOBasis | None = None,
                               opts: RescaleOptions | None = None) -> tuple[np.ndarray, SteeringVerdict]:
    """Optimize Alice's rescaling ``h`` and return ``(h, verdict)``.

    ``h`` is normalized to ``sum_i h_i^2 v_i = 1``. The verdict is reported
    with the normalization ``sum_i h_i^2 v_i = dA - Tr rho_A^2`` that uniform
    ``h = 1`` has, so its ``rhs`` equals the ``loo`` bound and its margin is
    directly comparable (and never smaller, up to optimizer tolerance).
    Components with zero variance get ``h_i = 0``.
    """
    opts = opts or RescaleOptions()
    basisA = basisA or gellmann_basis(state.dA)
    ra, rb = reduced_states(state)
    v = alice_variances(ra, basisA)
    keep = v > ZERO_VARIANCE
    if not keep.any():
        raise DegenerateVarianceError("all of Alice's variance terms vanish")
    C = correlation_matrix(state, basisA, basisB)
    Ct = C[keep] / np.sqrt(v[keep])[:, None]
    g, best = maximize_weighted_trace_norm(Ct, opts.restarts, opts.max_iter, opts.rtol, opts.seed)
    h = np.zeros(len(v))
    h[keep] = g / np.sqrt(v[keep])
    w = math.sqrt(v.sum())
    uniform = trace_norm(C)
    lhs = max(w * best, uniform)
    if uniform > w * best:
        h = np.where(keep, 1.0, 0.0) / w
    rhs = w * math.sqrt(max(1.0 - purity(rb), 0.0))
    extras = {"uniform_lhs": uniform, "normalized_lhs": lhs / w if w else 0.0}
    return h, SteeringVerdict(lhs, rhs, "loo-rescaled", extras)


# Bell-diagonal states -----------------------------------------------------


def bell_diagonal_scan(resolution: float, tol: float = 1e-12):
    """Classify grid points of the cube ``[-1/2, 1/2]^3``.

    Returns ``(t, labels, lhs, rhs)`` with ``labels`` in
    {'outside', 'detected', 'undetected'}; ``lhs``/``rhs`` are NaN outside.
    """
    if not resolution > 0:
        raise InvalidParameterError("resolution must be positive")
    n = int(math.floor(1.0 / resolution + 1e-9))
    axis = np.round(-0.5 + resolution * np.arange(n + 1), 12)
    t = np.stack(np.meshgrid(axis, axis, axis, indexing="ij"), axis=-1).reshape(-1, 3)
    eig = _bell_eigs(t)
    inside = eig.min(axis=1) >= -tol
    lhs = np.full(len(t), np.nan)
    rhs = np.full(len(t), np.nan)
    idx = np.flatnonzero(inside)
    if len(idx):
        rhos = _bell_rhos(t[idx])
        kern = CorrelationKernel(gellmann_basis(2), gellmann_basis(2), 2, 2)
        lhs[idx] = trace_norms(kern(rhos))
        pa, pb = _batch_purities(rhos, 2, 2)
        rhs[idx] = np.sqrt(np.maximum(2 - pa, 0) * np.maximum(1 - pb, 0))
    labels = np.where(~inside, "outside", np.where(lhs - rhs > VIOLATION_TOL, "detected", "undetected"))
    return t, labels, lhs, rhs


def _bell_eigs(t):
    t1, t2, t3 = t.T
    return np.stack([
        1 + 2 * (t1 - t2 + t3),
        1 + 2 * (-t1 + t2 + t3),
        1 + 2 * (t1 + t2 - t3),
        1 - 2 * (t1 + t2 + t3),
    ], axis=1) / 4


def _bell_rhos(t):
    ss = np.stack([np.kron(s, s) for s in PAULI])
    return np.eye(4) / 4 + 0.5 * np.tensordot(t, ss, axes=(1, 0))


def _batch_purities(rhos, dA, dB):
    r = np.asarray(rhos).reshape(-1, dA, dB, dA, dB)
    ra = np.einsum("nijkj->nik", r)
    rb = np.einsum("nijil->njl", r)
    pa = np.einsum("nij,nji->n", ra, ra).real
    pb = np.einsum("nij,nji->n", rb, rb).real
    return pa, pb


def write_bellscan_csv(fh, t, labels, header_lines=()):
    """CSV with columns ``t1,t2,t3,class``; optional ``#`` comment header."""
    for line in header_lines:
        fh.write(f"# {line}\n")
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["t1", "t2", "t3", "class"])
    for row, lab in zip(t, labels):
        w.writerow([repr(float(row[0])), repr(float(row[1])), repr(float(row[2])), lab])


# batched detectors used by the volume harness ------------------------------


def batch_purities(rhos, dA: int, dB: int):
    """Purities ``(Tr rho_A^2, Tr rho_B^2)`` for a stack of states."""
    return _batch_purities(rhos, dA, dB)


def batch_loo_margins(rhos, dA: int, dB: int, kernel: CorrelationKernel | None = None):
    """``(lhs, rhs)`` of the ``loo`` test for every state of a stack."""
    kernel = kernel or CorrelationKernel(gellmann_basis(dA), gellmann_basis(dB), dA, dB)
    lhs = trace_norms(kernel(rhos))
    pa, pb = _batch_purities(rhos, dA, dB)
    rhs = np.sqrt(np.maximum(dA - pa, 0) * np.maximum(1 - pb, 0))
    return lhs, rhs
