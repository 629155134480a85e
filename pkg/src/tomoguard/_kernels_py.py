"""Pure-Python twins of the compiled kernels in ``_kernels.pyx``.

Operation order mirrors the Cython source so both backends return identical
floats. Slow, but always importable.
"""
import numpy as np


def _nnls_core(A, x, lower, max_iter, tol):
    k = len(A)
    m = len(A[0]) if k else 0
    r = [0.0] * k
    for p in range(k):
        s = x[p]
        row = A[p]
        for e in range(m):
            s = s - row[e] * lower
        r[p] = s
    b = [0.0] * m
    G = [[0.0] * m for _ in range(m)]
    for e in range(m):
        s = 0.0
        for p in range(k):
            s = s + A[p][e] * r[p]
        b[e] = s
        Ge = G[e]
        for f in range(m):
            s = 0.0
            for p in range(k):
                s = s + A[p][e] * A[p][f]
            Ge[f] = s
    mu = [0.0] * m

    for _ in range(max_iter):
        maxchange = 0.0
        scale = 1.0
        for e in range(m):
            Ge = G[e]
            if Ge[e] <= 0.0:
                continue
            g = -b[e]
            for f in range(m):
                g = g + Ge[f] * mu[f]
            new = mu[e] - g / Ge[e]
            if new < 0.0:
                new = 0.0
            delta = new - mu[e]
            if delta != 0.0:
                mu[e] = new
                if abs(delta) > maxchange:
                    maxchange = abs(delta)
            if mu[e] > scale:
                scale = mu[e]
        if maxchange <= tol * scale:
            break

    loss = 0.0
    for p in range(k):
        s = r[p]
        row = A[p]
        for e in range(m):
            s = s - row[e] * mu[e]
        loss = loss + s * s
    return [v + lower for v in mu], loss


def nnls_fit(A, x, lower=0.0, max_iter=200, tol=1e-8):
    A = np.asarray(A, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if A.ndim != 2 or x.shape[0] != A.shape[0]:
        raise ValueError("dimension mismatch between A and x")
    mu, loss = _nnls_core(A.tolist(), x.tolist(), float(lower), int(max_iter), float(tol))
    return np.array(mu, dtype=np.float64).reshape(A.shape[1]), loss


def batch_fit_losses(As, x, lower=0.0, max_iter=200, tol=1e-8):
    As = np.asarray(As, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if As.ndim != 3 or x.shape[0] != As.shape[1]:
        raise ValueError("dimension mismatch between As and x")
    xs = x.tolist()
    out = np.empty(As.shape[0], dtype=np.float64)
    for c in range(As.shape[0]):
        out[c] = _nnls_core(As[c].tolist(), xs, float(lower), int(max_iter), float(tol))[1]
    return out


def single_linkage_cophenetic(S):
    S = np.asarray(S, dtype=np.float64)
    n = S.shape[0]
    if S.ndim != 2 or S.shape[1] != n:
        raise ValueError("similarity matrix must be square")
    out = [[0.0] * n for _ in range(n)]
    C = S.tolist()
    lab = list(range(n))
    act = [True] * n
    for _ in range(n - 1):
        bi = bj = -1
        best = 0.0
        for i in range(n):
            if not act[i]:
                continue
            for j in range(i + 1, n):
                if not act[j]:
                    continue
                if bi < 0 or C[i][j] > best:
                    best = C[i][j]
                    bi, bj = i, j
        for a in range(n):
            if lab[a] != bi:
                continue
            for c in range(n):
                if lab[c] == bj:
                    out[a][c] = best
                    out[c][a] = best
        for a in range(n):
            if lab[a] == bj:
                lab[a] = bi
        for c in range(n):
            if c == bi or c == bj or not act[c]:
                continue
            if C[bj][c] > C[bi][c]:
                C[bi][c] = C[bj][c]
                C[c][bi] = C[bj][c]
        act[bj] = False
    return np.array(out, dtype=np.float64).reshape(n, n)


def zhang_shasha(labels1, lml1, kr1, labels2, lml2, kr2):
    l1, m1, k1 = list(labels1), list(lml1), list(kr1)
    l2, m2, k2 = list(labels2), list(lml2), list(kr2)
    n1, n2 = len(l1), len(l2)
    if n1 == 0 or n2 == 0:
        return n1 + n2
    td = [[0] * n2 for _ in range(n1)]
    fd = [[0] * (n2 + 1) for _ in range(n1 + 1)]
    for i in k1:
        for j in k2:
            ioff = m1[i] - 1
            joff = m2[j] - 1
            fd[0][0] = 0
            for x in range(1, i - ioff + 1):
                fd[x][0] = fd[x - 1][0] + 1
            for y in range(1, j - joff + 1):
                fd[0][y] = fd[0][y - 1] + 1
            for x in range(1, i - ioff + 1):
                xi = x + ioff
                for y in range(1, j - joff + 1):
                    yj = y + joff
                    best = min(fd[x - 1][y] + 1, fd[x][y - 1] + 1)
                    if m1[xi] == m1[i] and m2[yj] == m2[j]:
                        best = min(best, fd[x - 1][y - 1] + (l1[xi] != l2[yj]))
                        fd[x][y] = best
                        td[xi][yj] = best
                    else:
                        p = m1[xi] - 1 - ioff
                        q = m2[yj] - 1 - joff
                        fd[x][y] = min(best, fd[p][q] + td[xi][yj])
    return int(td[n1 - 1][n2 - 1])
