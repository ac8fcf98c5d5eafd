"""Pure-Python hit-and-run kernel (fallback for the compiled ``_chain``)."""

import numpy as np

SINGULAR_TOL = 1e-13
MAX_REPAIRS_PER_STEP = 64


def _assemble(c, d, diag_weights, rows, cols, re_index, im_index, im_sign, out):
    out[:] = 0.0
    out[np.diag_indices(d)] = diag_weights @ c[: d - 1]
    upper = (c[re_index] + 1j * im_sign * c[im_index]) / np.sqrt(2.0)
    out[rows, cols] = upper
    out[cols, rows] = upper.conj()
    return out


def advance(c, gauss, unif, thinning, out, d, diag_weights, rows, cols, re_index, im_index,
            im_sign, shrink):
    """Run ``len(unif)`` hit-and-run steps in place on ``c``.

    After every ``thinning``-th step the current ``c`` is copied to the next
    row of ``out`` (``thinning == 0`` disables emission). Returns
    ``(n_emitted, n_repairs)``.
    """
    steps = len(unif)
    rho = np.empty((d, d), dtype=complex)
    udir = np.empty((d, d), dtype=complex)
    emitted = repairs = 0
    eye = np.eye(d) / d
    for k in range(steps):
        g = gauss[k]
        u = g / np.sqrt(g @ g)
        for _ in range(MAX_REPAIRS_PER_STEP):
            _assemble(c, d, diag_weights, rows, cols, re_index, im_index, im_sign, rho)
            rho += eye
            w, v = np.linalg.eigh(rho)
            if w[0] >= SINGULAR_TOL:
                break
            c *= 0.5
            repairs += 1
        _assemble(u, d, diag_weights, rows, cols, re_index, im_index, im_sign, udir)
        s = 1.0 / np.sqrt(w)
        white = (v.conj().T @ udir @ v) * np.outer(s, s)
        e = np.linalg.eigvalsh(white)
        t_max = -1.0 / e[0]
        t_min = -1.0 / e[-1]
        lo = t_min + shrink
        hi = t_max - shrink
        if hi > lo:
            t = lo + (hi - lo) * unif[k]
        else:
            t = 0.5 * (t_min + t_max)
        c += t * u
        if thinning and (k + 1) % thinning == 0:
            out[emitted] = c
            emitted += 1
    return emitted, repairs
