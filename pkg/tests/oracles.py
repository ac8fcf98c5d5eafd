"""Independent reference implementations used to derive frozen test values.

Everything here is written with explicit index loops and mpmath
arithmetic, sharing no code with the package.
"""

import mpmath as mp

mp.mp.dps = 30


def formula_state(dA, dB, a=1.0, b=2.0):
    """Deterministic full-rank density matrix ``M M^dagger / Tr`` as mpmath matrix."""
    D = dA * dB
    M = mp.matrix(D, D)
    for j in range(D):
        for k in range(D):
            M[j, k] = mp.cos(a * j + b * k) + 1j * mp.sin(3 * j - a * k) / (1 + k)
    R = M * M.H
    tr = sum(R[i, i] for i in range(D))
    return R / tr


def gellmann(d):
    els = []
    I = mp.eye(d) / mp.sqrt(d)
    els.append(I)
    for i in range(2, d + 1):
        E = mp.matrix(d, d)
        for k in range(i - 1):
            E[k, k] = 1
        E[i - 1, i - 1] = -(i - 1)
        els.append(E / mp.sqrt(i * (i - 1)))
    rest = {}
    for m in range(1, d + 1):
        for n in range(1, d + 1):
            E = mp.matrix(d, d)
            if m < n:
                E[m - 1, n - 1] = E[n - 1, m - 1] = 1 / mp.sqrt(2)
                rest[m * d + n] = E
            elif n < m:
                E[m - 1, n - 1] = 1j / mp.sqrt(2)
                E[n - 1, m - 1] = -1j / mp.sqrt(2)
                rest[(m - 1) * d + n] = E
    for k in sorted(rest):
        els.append(rest[k])
    return els


def ptrace(R, dA, dB):
    ra = mp.matrix(dA, dA)
    rb = mp.matrix(dB, dB)
    for a in range(dA):
        for a2 in range(dA):
            ra[a, a2] = sum(R[a * dB + b, a2 * dB + b] for b in range(dB))
    for b in range(dB):
        for b2 in range(dB):
            rb[b, b2] = sum(R[a * dB + b, a * dB + b2] for a in range(dA))
    return ra, rb


def kron(A, B):
    m, n = A.rows, B.rows
    K = mp.matrix(m * n, m * n)
    for i in range(m):
        for j in range(m):
            for k in range(n):
                for l in range(n):
                    K[i * n + k, j * n + l] = A[i, j] * B[k, l]
    return K


def trace(A):
    return sum(A[i, i] for i in range(A.rows))


def corr(R, dA, dB, As, Bs):
    ra, rb = ptrace(R, dA, dB)
    X = R - kron(ra, rb)
    C = mp.matrix(len(As), len(Bs))
    for i, A in enumerate(As):
        for j, B in enumerate(Bs):
            C[i, j] = mp.re(trace(kron(A, B) * X))
    return C


def trace_norm(C):
    s = mp.svd_r(C, compute_uv=False)
    return sum(s)


def purity(r):
    return mp.re(trace(r * r))


def loo(R, dA, dB):
    ra, rb = ptrace(R, dA, dB)
    lhs = trace_norm(corr(R, dA, dB, gellmann(dA), gellmann(dB)))
    rhs = mp.sqrt((dA - purity(ra)) * (1 - purity(rb)))
    return lhs, rhs


def min_pt_eig(R, dA, dB):
    D = dA * dB
    P = mp.matrix(D, D)
    for a in range(dA):
        for b in range(dB):
            for a2 in range(dA):
                for b2 in range(dB):
                    P[a * dB + b, a2 * dB + b2] = R[a * dB + b2, a2 * dB + b]
    return min(mp.re(e) for e in mp.eighe(P, eigvals_only=True)) if hasattr(mp, "eighe") \
        else min(mp.re(e) for e in mp.eig(P, left=False, right=False))


def tau(R, dB, mu):
    _, rb = ptrace(R, 2, dB)
    return mu * R + (1 - mu) / 2 * kron(mp.eye(2), rb)


if __name__ == "__main__":
    for dA, dB in ((2, 2), (2, 3), (3, 2)):
        R = formula_state(dA, dB)
        lhs, rhs = loo(R, dA, dB)
        ra, rb = ptrace(R, dA, dB)
        print(dA, dB, "loo", mp.nstr(lhs, 20), mp.nstr(rhs, 20))
        print(dA, dB, "purities", mp.nstr(purity(ra), 20), mp.nstr(purity(rb), 20))
        print(dA, dB, "minpt", mp.nstr(min_pt_eig(R, dA, dB), 20))
        if dA == 2:
            print(dA, dB, "tau minpt", mp.nstr(min_pt_eig(tau(R, dB, 1 / mp.sqrt(3)), 2, dB), 20))
