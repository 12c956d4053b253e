"""Symmetric eigensolvers.

``jacobi_eigh`` is a cyclic Jacobi solver using the parallel (round-robin)
ordering, so each of the n-1 rounds of a sweep applies n/2 disjoint rotations
as one vectorized update.  ``lanczos_lowest`` handles Laplacians too large
for the dense path.
"""

from __future__ import annotations

import numpy as np
from scipy.sparse import linalg as sparse_linalg


class EigenError(RuntimeError):
    def __init__(self, message: str, residual: float = float("nan")):
        super().__init__(message)
        self.residual = residual


def _round_robin(m: int):
    """Pairings for a round-robin tournament on m (even) players."""
    players = list(range(m))
    rounds = []
    for _ in range(m - 1):
        p = np.array(players[: m // 2])
        q = np.array(players[m // 2:][::-1])
        rounds.append((p, q))
        players = [players[0]] + [players[-1]] + players[1:-1]
    return rounds


def _off_norm(A: np.ndarray) -> float:
    B = A.copy()
    np.fill_diagonal(B, 0.0)
    return float(np.linalg.norm(B))


def jacobi_eigh(A: np.ndarray, tol: float = 1e-14, max_sweeps: int = 60):
    """Eigen-decomposition of a real symmetric matrix by Jacobi rotations.

    Returns ascending eigenvalues ``w`` and orthonormal eigenvectors as the
    columns of ``V``.
    """
    A = np.array(A, dtype=float)
    n = A.shape[0]
    if A.shape != (n, n):
        raise ValueError("matrix must be square")
    if n == 0:
        return np.zeros(0), np.zeros((0, 0))
    if n == 1:
        return A.diagonal().copy(), np.ones((1, 1))
    A = 0.5 * (A + A.T)
    m = n + (n % 2)
    if m != n:
        # pad with an isolated dummy index; it never couples to the rest
        B = np.zeros((m, m))
        B[:n, :n] = A
        A = B
    V = np.eye(m)
    rounds = _round_robin(m)
    scale = np.linalg.norm(A)
    if scale == 0.0:
        return np.zeros(n), np.eye(n)
    for _ in range(max_sweeps):
        off = _off_norm(A)
        if off <= tol * scale:
            break
        for p, q in rounds:
            apq = A[p, q]
            active = np.abs(apq) > 1e-300
            if not np.any(active):
                continue
            app = A[p, p]
            aqq = A[q, q]
            with np.errstate(divide="ignore", invalid="ignore"):
                th = (aqq - app) / (2.0 * apq)
                t = np.sign(th) / (np.abs(th) + np.sqrt(th * th + 1.0))
            t = np.where(th == 0.0, 1.0, t)
            t = np.where(active, t, 0.0)
            c = 1.0 / np.sqrt(t * t + 1.0)
            s = t * c
            # A <- G^T A G with G = [[c, s], [-s, c]] on each (p, q) block
            Ap = A[p, :].copy()
            Aq = A[q, :]
            A[p, :] = c[:, None] * Ap - s[:, None] * Aq
            A[q, :] = s[:, None] * Ap + c[:, None] * Aq
            Cp = A[:, p].copy()
            Cq = A[:, q]
            A[:, p] = Cp * c[None, :] - Cq * s[None, :]
            A[:, q] = Cp * s[None, :] + Cq * c[None, :]
            Vp = V[:, p].copy()
            Vq = V[:, q]
            V[:, p] = Vp * c[None, :] - Vq * s[None, :]
            V[:, q] = Vp * s[None, :] + Vq * c[None, :]
    else:
        off = _off_norm(A)
        if off > tol * scale * 1e3:
            raise EigenError("Jacobi iteration did not converge", off / scale)
    w = A.diagonal()[:n].copy()
    # the dummy index never rotates, so its row/column stay a unit vector
    V = V[:n, :n]
    order = np.argsort(w, kind="stable")
    return w[order], V[:, order]


def residual_norm(A: np.ndarray, lam: float, x: np.ndarray) -> float:
    return float(np.linalg.norm(A @ x - lam * x))


def lanczos_lowest(L: np.ndarray, deflate: np.ndarray | None = None, tol: float = 1e-10):
    """Lowest eigenpair of a symmetric PSD matrix after shifting ``deflate`` out of the way.

    The known null vector is moved to the top of the spectrum by a rank-one
    update; the lowest remaining pair is then found by implicitly restarted
    Lanczos (ARPACK).
    """
    L = np.asarray(L, dtype=float)
    n = L.shape[0]
    norm1 = float(np.max(np.sum(np.abs(L), axis=1))) if n else 0.0
    M = L.copy()
    if deflate is not None:
        q = np.asarray(deflate, dtype=float)
        q = q / np.linalg.norm(q)
        M += (norm1 + 1.0) * np.outer(q, q)
    try:
        w, X = sparse_linalg.eigsh(M, k=1, which="SA", tol=0.0, maxiter=50 * n,
                                   v0=np.ones(n) + np.arange(n) / n)
    except sparse_linalg.ArpackNoConvergence as exc:
        raise EigenError("Lanczos iteration did not converge") from exc
    x = X[:, 0]
    res = residual_norm(M, float(w[0]), x)
    if res > tol * max(norm1, 1.0):
        raise EigenError("Lanczos residual above tolerance", res)
    return float(w[0]), x, res
