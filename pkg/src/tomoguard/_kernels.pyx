# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops.

Every function here has a line-for-line twin in ``_kernels_py.py``; both
evaluate floating point operations in the same order so the two backends
agree to the last bit on x86-64 (no fused multiply-add, no fast-math).
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport fabs

cnp.import_array()


cdef double _nnls_core(const double[:, :] A, const double[:] x, double lower,
                       int max_iter, double tol, double[:] mu,
                       double[:, :] G, double[:] b, double[:] r) noexcept nogil:
    cdef Py_ssize_t k = A.shape[0]
    cdef Py_ssize_t m = A.shape[1]
    cdef Py_ssize_t e, f, p
    cdef int it
    cdef double s, g, new, delta, maxchange, scale, loss

    # residual target after shifting by the lower bound
    for p in range(k):
        s = x[p]
        for e in range(m):
            s = s - A[p, e] * lower
        r[p] = s
    for e in range(m):
        s = 0.0
        for p in range(k):
            s = s + A[p, e] * r[p]
        b[e] = s
        for f in range(m):
            s = 0.0
            for p in range(k):
                s = s + A[p, e] * A[p, f]
            G[e, f] = s
        mu[e] = 0.0

    for it in range(max_iter):
        maxchange = 0.0
        scale = 1.0
        for e in range(m):
            if G[e, e] <= 0.0:
                continue
            g = -b[e]
            for f in range(m):
                g = g + G[e, f] * mu[f]
            new = mu[e] - g / G[e, e]
            if new < 0.0:
                new = 0.0
            delta = new - mu[e]
            if delta != 0.0:
                mu[e] = new
                if fabs(delta) > maxchange:
                    maxchange = fabs(delta)
            if mu[e] > scale:
                scale = mu[e]
        if maxchange <= tol * scale:
            break

    loss = 0.0
    for p in range(k):
        s = r[p]
        for e in range(m):
            s = s - A[p, e] * mu[e]
        loss = loss + s * s
    for e in range(m):
        mu[e] = mu[e] + lower
    return loss


def nnls_fit(const double[:, :] A, const double[:] x, double lower=0.0,
             int max_iter=200, double tol=1e-8):
    """Bounded least squares ``min ||x - A mu||^2`` s.t. ``mu >= lower``.

    Returns ``(mu, loss)``.
    """
    cdef Py_ssize_t k = A.shape[0]
    cdef Py_ssize_t m = A.shape[1]
    if x.shape[0] != k:
        raise ValueError("dimension mismatch between A and x")
    mu = np.zeros(m, dtype=np.float64)
    G = np.empty((m, m), dtype=np.float64)
    b = np.empty(m, dtype=np.float64)
    r = np.empty(k, dtype=np.float64)
    cdef double loss
    cdef double[:] mu_v = mu
    cdef double[:, :] G_v = G
    cdef double[:] b_v = b
    cdef double[:] r_v = r
    with nogil:
        loss = _nnls_core(A, x, lower, max_iter, tol, mu_v, G_v, b_v, r_v)
    return mu, loss


def batch_fit_losses(const double[:, :, :] As, const double[:] x,
                     double lower=0.0, int max_iter=200, double tol=1e-8):
    """Residual of the bounded fit of ``x`` onto each ``As[c]``."""
    cdef Py_ssize_t n = As.shape[0]
    cdef Py_ssize_t k = As.shape[1]
    cdef Py_ssize_t m = As.shape[2]
    if x.shape[0] != k:
        raise ValueError("dimension mismatch between As and x")
    out = np.empty(n, dtype=np.float64)
    mu = np.empty(m, dtype=np.float64)
    G = np.empty((m, m), dtype=np.float64)
    b = np.empty(m, dtype=np.float64)
    r = np.empty(k, dtype=np.float64)
    cdef double[:] out_v = out
    cdef double[:] mu_v = mu
    cdef double[:, :] G_v = G
    cdef double[:] b_v = b
    cdef double[:] r_v = r
    cdef Py_ssize_t c
    with nogil:
        for c in range(n):
            out_v[c] = _nnls_core(As[c], x, lower, max_iter, tol,
                                  mu_v, G_v, b_v, r_v)
    return out


def single_linkage_cophenetic(const double[:, :] S):
    """Cophenetic similarity of the max-similarity single-linkage dendrogram.

    Ties go to the lexicographically smallest (representative) pair, where a
    cluster's representative is its smallest member index.
    """
    cdef Py_ssize_t n = S.shape[0]
    if S.shape[1] != n:
        raise ValueError("similarity matrix must be square")
    out = np.zeros((n, n), dtype=np.float64)
    C = np.array(S, dtype=np.float64, copy=True)
    label = np.arange(n, dtype=np.intp)
    active = np.ones(n, dtype=np.uint8)
    cdef double[:, :] out_v = out
    cdef double[:, :] C_v = C
    cdef Py_ssize_t[:] lab = label
    cdef unsigned char[:] act = active
    cdef Py_ssize_t step, i, j, bi, bj, a, c
    cdef double best
    with nogil:
        for step in range(n - 1):
            bi = -1
            bj = -1
            best = 0.0
            for i in range(n):
                if not act[i]:
                    continue
                for j in range(i + 1, n):
                    if not act[j]:
                        continue
                    if bi < 0 or C_v[i, j] > best:
                        best = C_v[i, j]
                        bi = i
                        bj = j
            for a in range(n):
                if lab[a] != bi:
                    continue
                for c in range(n):
                    if lab[c] == bj:
                        out_v[a, c] = best
                        out_v[c, a] = best
            for a in range(n):
                if lab[a] == bj:
                    lab[a] = bi
            for c in range(n):
                if c == bi or c == bj or not act[c]:
                    continue
                if C_v[bj, c] > C_v[bi, c]:
                    C_v[bi, c] = C_v[bj, c]
                    C_v[c, bi] = C_v[bj, c]
            act[bj] = 0
    return out


def zhang_shasha(const long[:] labels1, const long[:] lml1, const long[:] kr1,
                 const long[:] labels2, const long[:] lml2, const long[:] kr2):
    """Unit-cost ordered tree edit distance on postorder-indexed trees."""
    cdef Py_ssize_t n1 = labels1.shape[0]
    cdef Py_ssize_t n2 = labels2.shape[0]
    if n1 == 0 or n2 == 0:
        return n1 + n2
    TD = np.zeros((n1, n2), dtype=np.int64)
    FD = np.zeros((n1 + 1, n2 + 1), dtype=np.int64)
    cdef long[:, :] td = TD
    cdef long[:, :] fd = FD
    cdef Py_ssize_t a, b, i, j, x, y, xi, yj, ioff, joff, p, q
    cdef long best, cand
    with nogil:
        for a in range(kr1.shape[0]):
            i = kr1[a]
            for b in range(kr2.shape[0]):
                j = kr2[b]
                ioff = lml1[i] - 1
                joff = lml2[j] - 1
                fd[0, 0] = 0
                for x in range(1, i - ioff + 1):
                    fd[x, 0] = fd[x - 1, 0] + 1
                for y in range(1, j - joff + 1):
                    fd[0, y] = fd[0, y - 1] + 1
                for x in range(1, i - ioff + 1):
                    xi = x + ioff
                    for y in range(1, j - joff + 1):
                        yj = y + joff
                        best = fd[x - 1, y] + 1
                        cand = fd[x, y - 1] + 1
                        if cand < best:
                            best = cand
                        if lml1[xi] == lml1[i] and lml2[yj] == lml2[j]:
                            cand = fd[x - 1, y - 1] + (labels1[xi] != labels2[yj])
                            if cand < best:
                                best = cand
                            fd[x, y] = best
                            td[xi, yj] = best
                        else:
                            p = lml1[xi] - 1 - ioff
                            q = lml2[yj] - 1 - joff
                            cand = fd[p, q] + td[xi, yj]
                            if cand < best:
                                best = cand
                            fd[x, y] = best
    return int(TD[n1 - 1, n2 - 1])
