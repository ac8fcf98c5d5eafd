# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hit-and-run kernel. Same algorithm and random-number consumption
as ``_chain_py.advance``; see that module for the contract."""

from libc.math cimport sqrt
from libc.stdlib cimport malloc, free
from scipy.linalg.cython_lapack cimport zheev
from scipy.linalg.cython_blas cimport zgemm

cdef double SINGULAR_TOL = 1e-13
cdef int MAX_REPAIRS_PER_STEP = 64


cdef void _assemble(const double* c, int d, const double[:, ::1] dw, const Py_ssize_t[::1] rows,
                    const Py_ssize_t[::1] cols, const Py_ssize_t[::1] re_idx,
                    const Py_ssize_t[::1] im_idx, const double[::1] im_sign,
                    double diag_shift, double complex* out) nogil:
    # column-major: entry (p, q) lives at p + q*d
    cdef int p, q, k, j
    cdef double acc, inv_sqrt2 = 0.7071067811865476
    cdef double complex z
    for k in range(d * d):
        out[k] = 0
    for p in range(d):
        acc = diag_shift
        for k in range(d - 1):
            acc = acc + dw[p, k] * c[k]
        out[p + p * d] = acc
    for j in range(rows.shape[0]):
        p = rows[j]
        q = cols[j]
        z = (c[re_idx[j]] + 1j * im_sign[j] * c[im_idx[j]]) * inv_sqrt2
        out[p + q * d] = z
        out[q + p * d] = z.conjugate()


def advance(double[::1] c, const double[:, ::1] gauss, const double[::1] unif, int thinning,
            double[:, ::1] out, int d, const double[:, ::1] diag_weights,
            const Py_ssize_t[::1] rows, const Py_ssize_t[::1] cols,
            const Py_ssize_t[::1] re_index, const Py_ssize_t[::1] im_index,
            const double[::1] im_sign, double shrink):
    cdef Py_ssize_t steps = unif.shape[0]
    cdef int m = c.shape[0]
    cdef int n = d, lda = d, info = 0, lwork = -1
    cdef int emitted = 0, repairs = 0, tries
    cdef Py_ssize_t k, i, p, q
    cdef double norm, t, t_min, t_max, lo, hi
    cdef double complex one = 1.0, zero = 0.0, wq
    cdef char jobv = b'V', jobn = b'N', uplo = b'U', opn = b'N', opc = b'C'

    cdef double complex* rho = <double complex*> malloc(d * d * sizeof(double complex))
    cdef double complex* udir = <double complex*> malloc(d * d * sizeof(double complex))
    cdef double complex* tmp = <double complex*> malloc(d * d * sizeof(double complex))
    cdef double complex* white = <double complex*> malloc(d * d * sizeof(double complex))
    cdef double* w = <double*> malloc(d * sizeof(double))
    cdef double* e = <double*> malloc(d * sizeof(double))
    cdef double* s = <double*> malloc(d * sizeof(double))
    cdef double* u = <double*> malloc(m * sizeof(double))
    cdef double* rwork = <double*> malloc((3 * d) * sizeof(double))
    cdef double complex* work = NULL
    cdef double complex wsize

    try:
        zheev(&jobv, &uplo, &n, rho, &lda, w, &wsize, &lwork, rwork, &info)
        lwork = <int> wsize.real
        if lwork < 2 * d:
            lwork = 2 * d
        work = <double complex*> malloc(lwork * sizeof(double complex))
        with nogil:
            for k in range(steps):
                norm = 0.0
                for i in range(m):
                    norm = norm + gauss[k, i] * gauss[k, i]
                norm = sqrt(norm)
                for i in range(m):
                    u[i] = gauss[k, i] / norm

                for tries in range(MAX_REPAIRS_PER_STEP):
                    _assemble(&c[0], d, diag_weights, rows, cols, re_index, im_index, im_sign,
                              1.0 / d, rho)
                    zheev(&jobv, &uplo, &n, rho, &lda, w, work, &lwork, rwork, &info)
                    if w[0] >= SINGULAR_TOL:
                        break
                    for i in range(m):
                        c[i] = 0.5 * c[i]
                    repairs += 1

                _assemble(u, d, diag_weights, rows, cols, re_index, im_index, im_sign, 0.0, udir)
                # white = V^H U V, scaled by w^{-1/2} on both sides
                zgemm(&opn, &opn, &n, &n, &n, &one, udir, &lda, rho, &lda, &zero, tmp, &lda)
                zgemm(&opc, &opn, &n, &n, &n, &one, rho, &lda, tmp, &lda, &zero, white, &lda)
                for p in range(d):
                    s[p] = 1.0 / sqrt(w[p])
                for q in range(d):
                    for p in range(d):
                        white[p + q * d] = white[p + q * d] * (s[p] * s[q])
                zheev(&jobn, &uplo, &n, white, &lda, e, work, &lwork, rwork, &info)

                t_max = -1.0 / e[0]
                t_min = -1.0 / e[d - 1]
                lo = t_min + shrink
                hi = t_max - shrink
                if hi > lo:
                    t = lo + (hi - lo) * unif[k]
                else:
                    t = 0.5 * (t_min + t_max)
                for i in range(m):
                    c[i] = c[i] + t * u[i]
                if thinning > 0 and (k + 1) % thinning == 0:
                    for i in range(m):
                        out[emitted, i] = c[i]
                    emitted += 1
    finally:
        free(rho); free(udir); free(tmp); free(white)
        free(w); free(e); free(s); free(u); free(rwork)
        if work != NULL:
            free(work)
    return emitted, repairs
