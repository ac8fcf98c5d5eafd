"""Hermitian operator algebra: orthonormal operator bases, Hilbert-Schmidt
products, Bloch-style expansions, trace norm and basis rotations.

Operator bases are stored as complex arrays of shape ``(d**2, d, d)``.
The canonical (generalized Gell-Mann) basis uses 1-based indices

* ``1``              : identity / sqrt(d)
* ``i = 2..d``       : diagonal, (sum_{k<i} |k><k| - (i-1)|i><i|) / sqrt(i(i-1))
* ``m*d + n``        : (|m><n| + |n><m|) / sqrt(2)        for 1 <= m < n <= d
* ``(m-1)*d + n``    : i(|m><n| - |n><m|) / sqrt(2)       for 1 <= n < m <= d

so for ``d = 2`` the order is ``(I, sigma_z, sigma_y, sigma_x) / sqrt(2)``.
Rows and columns of correlation matrices follow this order.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import InvalidDimensionError, InvalidTransformError, ShapeError

HERMITIAN_TOL = 1e-12
ORTHO_TOL = 1e-10
SV_REL_CUTOFF = 1e-12


@dataclass(frozen=True, eq=False)
class LOOBasis:
    """Ordered Hilbert-Schmidt orthonormal basis of hermitian operators."""

    dim: int
    elements: np.ndarray
    canonical: bool = False
    name: str = "custom"

    def __post_init__(self):
        els = np.asarray(self.elements, dtype=complex)
        d = self.dim
        if els.shape != (d * d, d, d):
            raise ShapeError(f"expected {d * d} elements of shape ({d},{d}), got {els.shape}")
        els.setflags(write=False)
        object.__setattr__(self, "elements", els)

    def __len__(self):
        return self.dim * self.dim

    def __getitem__(self, i):
        return self.elements[i]

    def gram(self) -> np.ndarray:
        flat = self.elements.reshape(len(self), -1)
        # Tr{G_i G_j} = sum_kl G_i[k,l] G_j[l,k]
        g = flat @ self.elements.transpose(0, 2, 1).reshape(len(self), -1).T
        return g.real

    def reconstruct(self, coeffs) -> np.ndarray:
        """Return ``sum_i coeffs[i] G_i``."""
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape[-1] != len(self):
            raise ShapeError(f"need {len(self)} coefficients, got {coeffs.shape[-1]}")
        return np.tensordot(coeffs, self.elements, axes=(-1, 0))

    def identity_coefficients(self) -> np.ndarray:
        """Coefficients of ``identity / sqrt(d)`` in this basis."""
        return bloch_expand(np.eye(self.dim) / np.sqrt(self.dim), self)


def is_hermitian(a, tol=HERMITIAN_TOL) -> bool:
    a = np.asarray(a)
    return a.ndim == 2 and a.shape[0] == a.shape[1] and np.max(np.abs(a - a.conj().T), initial=0.0) <= tol


def check_hermitian(a, tol=HERMITIAN_TOL) -> np.ndarray:
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ShapeError(f"expected a square matrix, got shape {a.shape}")
    if not is_hermitian(a, tol):
        raise ShapeError("matrix is not hermitian")
    return a


def _canonical_elements(d: int) -> np.ndarray:
    els = np.zeros((d * d, d, d), dtype=complex)
    els[0] = np.eye(d) / np.sqrt(d)
    for i in range(2, d + 1):
        diag = np.zeros(d)
        diag[: i - 1] = 1.0
        diag[i - 1] = -(i - 1)
        els[i - 1] = np.diag(diag) / np.sqrt(i * (i - 1))
    s = 1 / np.sqrt(2)
    for m in range(1, d + 1):
        for n in range(1, d + 1):
            if m < n:
                k = m * d + n
                els[k - 1, m - 1, n - 1] = els[k - 1, n - 1, m - 1] = s
            elif n < m:
                k = (m - 1) * d + n
                els[k - 1, m - 1, n - 1] = 1j * s
                els[k - 1, n - 1, m - 1] = -1j * s
    return els


@lru_cache(maxsize=None)
def gellmann_basis(d: int) -> LOOBasis:
    """Canonical hermitian orthonormal operator basis of dimension ``d``."""
    if int(d) != d or d < 2:
        raise InvalidDimensionError(f"basis dimension must be an integer >= 2, got {d}")
    d = int(d)
    return LOOBasis(d, _canonical_elements(d), canonical=True, name="canonical-gellmann")


def hs_inner(a, b) -> float:
    """Hilbert-Schmidt product Tr{A B} of two hermitian matrices."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape or a.ndim != 2:
        raise ShapeError(f"shape mismatch: {a.shape} vs {b.shape}")
    val = np.sum(a * b.T)
    scale = max(1.0, abs(val))
    if abs(val.imag) > 1e-12 * scale:
        raise ShapeError(f"Tr{{AB}} has imaginary part {val.imag:.3e}; inputs not hermitian")
    return float(val.real)


def bloch_expand(rho, basis: LOOBasis) -> np.ndarray:
    """Coefficients ``r_i = Tr{G_i rho}`` so that ``rho = sum_i r_i G_i``."""
    rho = np.asarray(rho)
    if rho.shape[-2:] != (basis.dim, basis.dim):
        raise ShapeError(f"operator shape {rho.shape} does not match basis dimension {basis.dim}")
    return np.einsum("ikl,...lk->...i", basis.elements, rho).real


def random_orthogonal(n: int, rng=None) -> np.ndarray:
    """Haar-random orthogonal matrix (QR of a Gaussian matrix, sign-fixed R)."""
    rng = np.random.default_rng(rng)
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.sign(np.diag(r))


def is_orthogonal(o, tol=ORTHO_TOL) -> bool:
    o = np.asarray(o, dtype=float)
    if o.ndim != 2 or o.shape[0] != o.shape[1]:
        return False
    return np.max(np.abs(o @ o.T - np.eye(len(o)))) <= tol


def rotate_basis(basis: LOOBasis, o) -> LOOBasis:
    """New basis ``G'_i = sum_j O_ij G_j`` for a real orthogonal ``O``."""
    o = np.asarray(o)
    n = len(basis)
    if o.shape != (n, n):
        raise InvalidTransformError(f"transform must be {n}x{n}, got {o.shape}")
    if np.iscomplexobj(o):
        if np.max(np.abs(o.imag)) > 0:
            raise InvalidTransformError("transform must be real")
        o = o.real
    if not is_orthogonal(o):
        raise InvalidTransformError("transform is not orthogonal within 1e-10")
    return LOOBasis(basis.dim, np.tensordot(o, basis.elements, axes=(1, 0)), name="rotated")


def trace_norm(a) -> float:
    """Sum of singular values; values below 1e-12 * largest count as zero."""
    a = np.asarray(a)
    if a.size == 0:
        return 0.0
    sv = np.linalg.svd(np.atleast_2d(a), compute_uv=False)
    if sv[0] == 0:
        return 0.0
    return float(np.sum(sv[sv > SV_REL_CUTOFF * sv[0]]))


def trace_norms(stack) -> np.ndarray:
    """Batched :func:`trace_norm` over the leading axis."""
    sv = np.linalg.svd(np.asarray(stack), compute_uv=False)
    top = sv[..., :1]
    return np.where(sv > SV_REL_CUTOFF * top, sv, 0.0).sum(axis=-1)


@lru_cache(maxsize=None)
def traceless_structure(d: int):
    """Index maps for assembling ``sum_k c_k G_{k+2}`` without dense sums.

    Returns ``(diag_weights, rows, cols, re_index, im_index, im_sign)``:
    the diagonal is ``diag_weights @ c[:d-1]`` and each upper entry
    ``(rows[j], cols[j])`` equals
    ``(c[re_index[j]] + 1j * im_sign[j] * c[im_index[j]]) / sqrt(2)``.
    """
    els = gellmann_basis(d).elements[1:]
    diag_weights = np.ascontiguousarray(np.array([np.diag(e).real for e in els[: d - 1]]).T)
    rows, cols = np.triu_indices(d, 1)
    re_index = np.empty(len(rows), dtype=np.intp)
    im_index = np.empty(len(rows), dtype=np.intp)
    im_sign = np.empty(len(rows))
    for j, (p, q) in enumerate(zip(rows, cols)):
        entries = els[:, p, q]
        re_index[j] = int(np.flatnonzero(np.abs(entries.real) > 0.5)[0])
        k = int(np.flatnonzero(np.abs(entries.imag) > 0.5)[0])
        im_index[j] = k
        im_sign[j] = np.sign(entries[k].imag)
    return diag_weights, rows.astype(np.intp), cols.astype(np.intp), re_index, im_index, im_sign
