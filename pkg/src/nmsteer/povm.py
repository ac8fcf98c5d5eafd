"""(N,M)-POVMs: parameter ranges, the spectral construction ``S = O^T sqrt(L) X^T``,
validation of the defining overlap relations, and positive-effect search.

Effects are indexed ``i(alpha, a) = alpha * M + a`` (0-based) and expanded as
``Pi_i = sum_mu S[mu, i] G_mu`` in an orthonormal operator basis ``G``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares

from .errors import ConstructionFailedError, InvalidParameterError, InvalidTransformError, UnsupportedError
from .hermitian import LOOBasis, bloch_expand, gellmann_basis, is_orthogonal

RELATION_TOL = 1e-9
PSD_TOL = -1e-10
_RANGE_EPS = 1e-12


def x_bounds(d: int, M: int) -> tuple[float, float]:
    """Open lower and closed upper bound of the purity parameter ``x``."""
    return d / M**2, min(d**2 / M**2, d / M)


@dataclass(frozen=True)
class NMParams:
    d: int
    N: int
    M: int
    x: float

    def __post_init__(self):
        if self.d < 2 or self.N < 1 or self.M < 2:
            raise InvalidParameterError(f"need d >= 2, N >= 1, M >= 2; got {self}")
        lo, hi = x_bounds(self.d, self.M)
        if not (lo < self.x <= hi + _RANGE_EPS):
            raise InvalidParameterError(
                f"x={self.x!r} outside admissible range ({lo:.6g}, {hi:.6g}] for d={self.d}, M={self.M}"
            )

    @property
    def informationally_complete(self) -> bool:
        return (self.M - 1) * self.N + 1 == self.d**2

    @property
    def gamma(self) -> float:
        return gamma(self)

    @property
    def n_effects(self) -> int:
        return self.N * self.M

    @classmethod
    def at(cls, d, N, M, where="default"):
        """Parameters with ``x`` at 'default' (10% into the range), 'mid' or 'max'."""
        lo, hi = x_bounds(d, M)
        frac = {"default": 0.1, "mid": 0.5, "max": 1.0}[where]
        return cls(d, N, M, hi if frac == 1.0 else lo + frac * (hi - lo))


def gamma(params: NMParams) -> float:
    """Scale factor ``(x M^2 - d) / (M (M - 1))``."""
    d, M, x = params.d, params.M, params.x
    lo, hi = x_bounds(d, M)
    if not (lo < x <= hi + _RANGE_EPS):
        raise InvalidParameterError(f"x={x} outside admissible range")
    return (x * M**2 - d) / (M * (M - 1))


def enumerate_ic_families(d: int) -> list[tuple[int, int]]:
    """All ``(N, M)`` with ``(M-1) N = d^2 - 1``, ``N >= 1``, ``M >= 2``, sorted by N."""
    if d < 2:
        raise InvalidParameterError("d must be >= 2")
    n2 = d * d - 1
    return sorted((n2 // k, k + 1) for k in range(1, n2 + 1) if n2 % k == 0)


def expected_sts_spectrum(params: NMParams) -> np.ndarray:
    """Eigenvalues of ``S^T S`` in ascending order: 0^(N-1), Gamma^(N(M-1)), dN/M."""
    N, M, d = params.N, params.M, params.d
    g = gamma(params)
    vals = [0.0] * (N - 1) + [g] * (N * (M - 1)) + [d * N / M]
    return np.sort(np.array(vals))


def sts_closed_form(params: NMParams) -> np.ndarray:
    """``Gamma*I - (Gamma/M) * blockdiag(ones) + (d/M^2) * ones``."""
    N, M, d = params.N, params.M, params.d
    g = gamma(params)
    n = N * M
    block = np.kron(np.eye(N), np.ones((M, M)))
    return g * np.eye(n) - (g / M) * block + (d / M**2) * np.ones((n, n))


def helmert_block(M: int) -> np.ndarray:
    """``(M-1) x M`` rows orthonormal and summing to zero."""
    h = np.zeros((M - 1, M))
    for k in range(1, M):
        h[k - 1, :k] = 1.0
        h[k - 1, k] = -k
        h[k - 1] /= math.sqrt(k * (k + 1))
    return h


def eigenvector_matrix(N: int, M: int) -> np.ndarray:
    """``X`` of shape ``(NM, N(M-1)+1)``: constant first column, then per-block Helmert columns."""
    h = helmert_block(M)
    cols = [np.full(N * M, 1 / math.sqrt(N * M))]
    for alpha in range(N):
        for row in h:
            v = np.zeros(N * M)
            v[alpha * M:(alpha + 1) * M] = row
            cols.append(v)
    return np.column_stack(cols)


@dataclass(frozen=True)
class SpectralFactors:
    gamma: float
    eigenvalues: np.ndarray
    X: np.ndarray
    O: np.ndarray


def spectral_factors(params: NMParams, O) -> SpectralFactors:
    N, M, d = params.N, params.M, params.d
    g = gamma(params)
    lam = np.full(N * (M - 1) + 1, g)
    lam[0] = d * N / M
    return SpectralFactors(g, lam, eigenvector_matrix(N, M), np.asarray(O, dtype=float))


def aligned_random_orthogonal(basis: LOOBasis, rng=None) -> np.ndarray:
    """Random ``O`` whose first row is the coefficient vector of ``I/sqrt(d)``.

    The remaining rows are a Haar-random orthonormal completion.
    """
    rng = np.random.default_rng(rng)
    n = len(basis)
    o1 = basis.identity_coefficients()
    z = np.column_stack([o1, rng.standard_normal((n, n - 1))])
    q, r = np.linalg.qr(z)
    q = q * np.sign(np.diag(r))
    return q.T


@dataclass(frozen=True, eq=False)
class NMPOVM:
    params: NMParams
    basis: LOOBasis
    S: np.ndarray
    effects: np.ndarray
    O: np.ndarray | None = None

    @property
    def gamma(self) -> float:
        return gamma(self.params)

    def effect(self, alpha: int, a: int) -> np.ndarray:
        return self.effects[alpha * self.params.M + a]

    def __len__(self):
        return len(self.effects)


def _require_ic(params: NMParams):
    if not params.informationally_complete:
        raise UnsupportedError(f"construction needs an informationally complete family; (M-1)N+1 != d^2 for {params}")


def assemble_povm(params: NMParams, O, basis: LOOBasis | None = None) -> NMPOVM:
    """Build ``S = O^T sqrt(L) X^T`` and ``Pi = G^T S`` without validation."""
    _require_ic(params)
    basis = basis or gellmann_basis(params.d)
    if basis.dim != params.d:
        raise InvalidParameterError("basis dimension does not match params.d")
    O = np.asarray(O, dtype=float)
    n = params.d**2
    if O.shape != (n, n) or not is_orthogonal(O):
        raise InvalidTransformError(f"O must be a {n}x{n} orthogonal matrix")
    if np.max(np.abs(O[0] - basis.identity_coefficients())) > 1e-10:
        raise InvalidTransformError("first row of O must be the coefficients of identity/sqrt(d)")
    f = spectral_factors(params, O)
    S = O.T @ (np.sqrt(f.eigenvalues)[:, None] * f.X.T)
    effects = np.tensordot(S.T, basis.elements, axes=(1, 0))
    effects = 0.5 * (effects + effects.conj().transpose(0, 2, 1))
    return NMPOVM(params, basis, S, effects, O)


@dataclass
class ValidationReport:
    deviations: dict = field(default_factory=dict)
    min_eigenvalue: float = 0.0
    tol: float = RELATION_TOL
    psd_tol: float = PSD_TOL

    @property
    def failures(self) -> list[str]:
        bad = [k for k, v in self.deviations.items() if not v < self.tol]
        if not self.min_eigenvalue >= self.psd_tol:
            bad.append("positivity")
        return bad

    @property
    def passed(self) -> bool:
        return not self.failures

    @property
    def max_deviation(self) -> float:
        return max(self.deviations.values(), default=0.0)

    def as_dict(self) -> dict:
        return {
            "passed": self.passed,
            "deviations": dict(self.deviations),
            "min_eigenvalue": self.min_eigenvalue,
            "failures": self.failures,
        }


def validate_povm(povm: NMPOVM) -> ValidationReport:
    """Check completeness, trace, intra/inter overlaps and positivity."""
    p = povm.params
    d, N, M, x = p.d, p.N, p.M, p.x
    E = np.asarray(povm.effects)
    rep = ValidationReport()
    if E.shape != (N * M, d, d):
        rep.deviations["shape"] = np.inf
        rep.min_eigenvalue = -np.inf
        return rep
    herm = np.max(np.abs(E - E.conj().transpose(0, 2, 1)))
    rep.deviations["hermiticity"] = float(herm)
    blocks = E.reshape(N, M, d, d)
    rep.deviations["completeness"] = float(np.max(np.abs(blocks.sum(axis=1) - np.eye(d))))
    rep.deviations["trace"] = float(np.max(np.abs(np.trace(E, axis1=1, axis2=2) - d / M)))
    flat = E.reshape(N * M, -1)
    gram = (flat.conj() @ flat.T).real
    same = np.kron(np.eye(N), np.ones((M, M))).astype(bool)
    diag = np.eye(N * M, dtype=bool)
    off_val = (d - M * x) / (M * (M - 1))
    rep.deviations["intra_diagonal"] = float(np.max(np.abs(gram[diag] - x)))
    intra_off = same & ~diag
    rep.deviations["intra_offdiagonal"] = float(np.max(np.abs(gram[intra_off] - off_val), initial=0.0))
    rep.deviations["inter"] = float(np.max(np.abs(gram[~same] - d / M**2), initial=0.0))
    herm_part = 0.5 * (E + E.conj().transpose(0, 2, 1))
    rep.min_eigenvalue = float(np.min(np.linalg.eigvalsh(herm_part)))
    return rep


def construct_povm(params: NMParams, O=None, seed=None, basis: LOOBasis | None = None) -> NMPOVM:
    """Assemble an IC (N,M)-POVM and validate it.

    Without ``O`` a random identity-aligned orthogonal matrix is drawn from
    ``seed``. Raises :class:`ConstructionFailedError` when an effect is not
    positive semidefinite; retry with a smaller ``x``, another ``O``, or
    :func:`search_povm`.
    """
    _require_ic(params)
    basis = basis or gellmann_basis(params.d)
    if O is None:
        O = aligned_random_orthogonal(basis, seed)
    povm = assemble_povm(params, O, basis)
    rep = validate_povm(povm)
    if not rep.passed:
        raise ConstructionFailedError(
            f"construction failed for {params}: {', '.join(rep.failures)} "
            f"(min effect eigenvalue {rep.min_eigenvalue:.3e})",
            min_eigenvalue=rep.min_eigenvalue,
            candidate=povm,
        )
    return povm


def sts_spectrum(povm: NMPOVM) -> np.ndarray:
    """Ascending eigenvalues of ``S^T S``."""
    S = np.asarray(povm.S)
    return np.linalg.eigvalsh(S.T @ S)


def orthogonal_from_coefficients(params: NMParams, S) -> np.ndarray:
    """Recover ``O`` from a coefficient matrix satisfying the overlap relations."""
    f = spectral_factors(params, np.eye(params.d**2))
    Ot = np.asarray(S) @ f.X / np.sqrt(f.eigenvalues)
    u, _, vt = np.linalg.svd(Ot)
    return (u @ vt).T


def _target_gram(d, N, M, x):
    target = np.full((N * M, N * M), d / M**2)
    same = np.kron(np.eye(N), np.ones((M, M))).astype(bool)
    target[same] = (d - M * x) / (M * (M - 1))
    np.fill_diagonal(target, x)
    return target


class _SearchProblem:
    """Residuals and Jacobian for effects ``K_i K_i^dagger``.

    Unknowns are ``[Re K, Im K]`` flattened over ``(effect, row, rank)``.
    """

    def __init__(self, d, N, M, r, x):
        self.d, self.N, self.M, self.r, self.x = d, N, M, r, x
        self.n = N * M
        self.target = _target_gram(d, N, M, x)
        self.iu = np.triu_indices(self.n)
        self.ju = np.triu_indices(d)
        self.ks = np.triu_indices(d, 1)
        self.size = self.n * d * r
        self.n_residuals = len(self.iu[0]) + self.n + N * (len(self.ju[0]) + len(self.ks[0]))

    def factors(self, theta):
        return (theta[: self.size] + 1j * theta[self.size:]).reshape(self.n, self.d, self.r)

    def residuals(self, theta):
        d, N, M = self.d, self.N, self.M
        k = self.factors(theta)
        E = k @ k.conj().transpose(0, 2, 1)
        flat = E.reshape(self.n, -1)
        gram = (flat.conj() @ flat.T).real
        comp = E.reshape(N, M, d, d).sum(axis=1) - np.eye(d)
        return np.concatenate([
            (gram - self.target)[self.iu],
            np.trace(E, axis1=1, axis2=2).real - d / M,
            comp[:, self.ju[0], self.ju[1]].real.ravel(),
            comp[:, self.ks[0], self.ks[1]].imag.ravel(),
        ])

    def jacobian(self, theta):
        d, N, M, r, n = self.d, self.N, self.M, self.r, self.n
        k = self.factors(theta)
        A, B = k.real, k.imag
        E = k @ k.conj().transpose(0, 2, 1)
        blk = d * r
        off = self.size
        J = np.zeros((self.n_residuals, 2 * off))
        # PK[i, j] = Pi_j K_i
        PK = np.einsum("jab,ibs->ijas", E, k).reshape(n, n, blk)
        for row, (i, j) in enumerate(zip(*self.iu)):
            J[row, i * blk:(i + 1) * blk] += 2 * PK[i, j].real
            J[row, off + i * blk:off + (i + 1) * blk] += 2 * PK[i, j].imag
            J[row, j * blk:(j + 1) * blk] += 2 * PK[j, i].real
            J[row, off + j * blk:off + (j + 1) * blk] += 2 * PK[j, i].imag
        row0 = len(self.iu[0])
        for i in range(n):
            J[row0 + i, i * blk:(i + 1) * blk] = 2 * A[i].ravel()
            J[row0 + i, off + i * blk:off + (i + 1) * blk] = 2 * B[i].ravel()
        row = row0 + n
        for alpha in range(N):
            for p, q in zip(*self.ju):
                for i in range(alpha * M, (alpha + 1) * M):
                    base = i * blk
                    J[row, base + p * r:base + (p + 1) * r] += A[i, q]
                    J[row, base + q * r:base + (q + 1) * r] += A[i, p]
                    J[row, off + base + p * r:off + base + (p + 1) * r] += B[i, q]
                    J[row, off + base + q * r:off + base + (q + 1) * r] += B[i, p]
                row += 1
        for alpha in range(N):
            for p, q in zip(*self.ks):
                for i in range(alpha * M, (alpha + 1) * M):
                    base = i * blk
                    J[row, base + q * r:base + (q + 1) * r] += B[i, p]
                    J[row, base + p * r:base + (p + 1) * r] -= B[i, q]
                    J[row, off + base + p * r:off + base + (p + 1) * r] += A[i, q]
                    J[row, off + base + q * r:off + base + (q + 1) * r] -= A[i, p]
                row += 1
        return J


def top_of_range_obstruction(params: NMParams) -> str | None:
    """Reason no positive POVM exists at the top of the ``x`` range, if provable.

    At ``x = d/M`` every effect is a projector of rank ``d/M``. At
    ``x = d^2/M^2`` with ``M > d`` each block is an equiangular tight frame
    of ``M`` vectors in ``C^d``, which needs ``M <= d^2`` and, for its
    Naimark complement, ``M <= (M - d)^2``.
    """
    d, M, x = params.d, params.M, params.x
    _, hi = x_bounds(d, M)
    if x < hi - _RANGE_EPS:
        return None
    if abs(x - d / M) <= _RANGE_EPS and d % M:
        return f"effects would be projectors of non-integer rank {d}/{M}"
    if M > d and abs(x - d * d / M**2) <= _RANGE_EPS and (M > d * d or M > (M - d) ** 2):
        return f"no equiangular tight frame of {M} vectors exists in dimension {d}"
    return None


def search_povm(params: NMParams, seed=None, restarts: int = 20, basis: LOOBasis | None = None,
                tol: float = 1e-12, max_nfev: int = 400) -> NMPOVM:
    """Find an identity-aligned ``O`` whose effects are positive semidefinite.

    Effects are parameterized as ``K K^dagger`` (so positivity holds by
    construction) and the overlap/completeness relations are solved by
    nonlinear least squares from random starts. The solution is mapped back
    to ``O`` and rebuilt through :func:`construct_povm`. At the top of the
    ``x`` range the factor rank is the minimum the trace/purity pair allows.
    Raises :class:`ConstructionFailedError` if no start converges or the
    parameters are provably infeasible.
    """
    _require_ic(params)
    reason = top_of_range_obstruction(params)
    if reason:
        raise ConstructionFailedError(f"no positive (N,M)-POVM exists for {params}: {reason}",
                                      min_eigenvalue=None)
    d, N, M, x = params.d, params.N, params.M, params.x
    basis = basis or gellmann_basis(d)
    _, hi = x_bounds(d, M)
    t = d / M
    r = max(1, math.ceil(t * t / x - 1e-9)) if x >= hi - _RANGE_EPS else d
    prob = _SearchProblem(d, N, M, r, x)
    method = "lm" if prob.n_residuals >= 2 * prob.size else "trf"
    rng = np.random.default_rng(seed)
    best = np.inf
    for _ in range(restarts):
        theta0 = rng.standard_normal(2 * prob.size) * math.sqrt(t / (2 * d * r))
        sol = least_squares(prob.residuals, theta0, jac=prob.jacobian, method=method,
                            xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=max_nfev)
        res = float(np.max(np.abs(sol.fun)))
        best = min(best, res)
        if res > tol:
            continue
        E = (lambda k: k @ k.conj().transpose(0, 2, 1))(prob.factors(sol.x))
        S = bloch_expand(E, basis).T
        O = orthogonal_from_coefficients(params, S)
        try:
            return construct_povm(params, O, basis=basis)
        except ConstructionFailedError:
            continue
    raise ConstructionFailedError(
        f"no positive (N,M)-POVM found for {params} after {restarts} starts "
        f"(best relation residual {best:.3e})",
        min_eigenvalue=None,
    )


def build_povm(params: NMParams, seed=None, attempts: int = 8, basis: LOOBasis | None = None) -> NMPOVM:
    """Construct a validated POVM: random ``O`` first, then :func:`search_povm`."""
    rng = np.random.default_rng(seed)
    basis = basis or gellmann_basis(params.d)
    if top_of_range_obstruction(params) is None:
        for _ in range(attempts):
            try:
                return construct_povm(params, aligned_random_orthogonal(basis, rng), basis=basis)
            except ConstructionFailedError:
                pass
    return search_povm(params, seed=rng, basis=basis)


def povm_to_dict(povm: NMPOVM) -> dict:
    p = povm.params
    doc = {
        "format": "nmsteer-povm/1",
        "params": {"d": p.d, "N": p.N, "M": p.M, "x": float(repr_float(p.x))},
        "S": [float(repr_float(v)) for v in np.asarray(povm.S).ravel()],
        "S_shape": list(povm.S.shape),
    }
    if povm.basis.canonical:
        doc["basis"] = "canonical-gellmann"
    else:
        doc["basis"] = {
            "elements": [[[float(z.real), float(z.imag)] for z in g.ravel()] for g in povm.basis.elements]
        }
    return doc


def repr_float(v: float) -> float:
    """Round-trip through 17 significant digits."""
    return float(f"{float(v):.17g}")


def povm_from_dict(doc: dict) -> NMPOVM:
    """Rebuild effects from a serialized ``S`` (effects are rederived, not stored)."""
    pp = doc["params"]
    params = NMParams(int(pp["d"]), int(pp["N"]), int(pp["M"]), float(pp["x"]))
    if doc.get("basis", "canonical-gellmann") == "canonical-gellmann":
        basis = gellmann_basis(params.d)
    else:
        els = np.array(doc["basis"]["elements"], dtype=float)
        d = params.d
        basis = LOOBasis(d, (els[..., 0] + 1j * els[..., 1]).reshape(d * d, d, d))
    shape = tuple(doc.get("S_shape", (params.d**2, params.N * params.M)))
    S = np.asarray(doc["S"], dtype=float).reshape(shape)
    effects = np.tensordot(S.T, basis.elements, axes=(1, 0))
    effects = 0.5 * (effects + effects.conj().transpose(0, 2, 1))
    return NMPOVM(params, basis, S, effects)
