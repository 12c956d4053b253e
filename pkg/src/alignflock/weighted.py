"""Density-weighted Laplacian L_rho = Lambda_rho - A_rho on a periodic grid.

Entry (a, b) is delta_ab (phi*rho)(x_a) - K[a - b] sqrt(rho_a rho_b), with
K the grid kernel carrying the cell volume.  The diagonal uses the same
discrete convolution, so sqrt(rho) is an exact null vector.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .eigen import EigenError, jacobi_eigh, lanczos_lowest, residual_norm
from .fourier import spectral_kernel_weights
from .geometry import DomainSpec, KernelSpec

DENSE_LIMIT = 4096
JACOBI_LIMIT = 256
RESIDUAL_TOL = 1e-9
BOUND_TOL = 1e-10


@dataclass
class WeightedLaplacianMatrix:
    matrix: np.ndarray
    weight: np.ndarray
    quadrature_weight: float
    domain: DomainSpec

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    def null_vector(self) -> np.ndarray:
        return np.sqrt(self.weight.ravel())


@dataclass
class GapBoundReport:
    lambda2: float
    bound: float
    c_rho: float
    rho_minus: float
    rho_plus: float
    sigma: float
    passed: bool
    margin: float
    ratio: float

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def circulant_matrix(K: np.ndarray) -> np.ndarray:
    """Dense matrix C[a, b] = K[a - b] for a periodic grid stencil of any dimension."""
    d = K.ndim
    T = K
    for ax in range(d):
        n = K.shape[ax]
        A = (np.arange(n)[:, None] - np.arange(n)[None, :]) % n
        T = np.take(T, A, axis=2 * ax)
    perm = [2 * a for a in range(d)] + [2 * a + 1 for a in range(d)]
    return np.ascontiguousarray(T.transpose(perm)).reshape(K.size, K.size)


def assemble_weighted_laplacian(rho: np.ndarray, kernel: KernelSpec, domain: DomainSpec,
                                mode: str = "spectral") -> WeightedLaplacianMatrix:
    rho = np.asarray(rho, dtype=float)
    if np.any(rho < 0):
        raise ValueError("density must be non-negative")
    n = rho.shape[0]
    K = spectral_kernel_weights(kernel, domain, n, mode)
    C = circulant_matrix(K)
    r = rho.ravel()
    s = np.sqrt(r)
    A = C * np.outer(s, s)
    L = np.diag(C @ r) - A
    L = 0.5 * (L + L.T)
    return WeightedLaplacianMatrix(L, rho, (domain.period / n) ** domain.dim, domain)


def lambda2_weighted(Lw: WeightedLaplacianMatrix, method: str = "auto", tol: float = RESIDUAL_TOL):
    """Second eigenvalue after deflating the sqrt(rho) null vector.

    Returns (lambda2, eigenvector, residual).  With rho == 0 the matrix is
    zero and lambda2 = 0.
    """
    L = Lw.matrix
    n = L.shape[0]
    q = Lw.null_vector()
    nq = float(np.linalg.norm(q))
    if nq == 0.0:
        return 0.0, np.zeros(n), 0.0
    q = q / nq
    scale = float(np.max(np.sum(np.abs(L), axis=1)))
    if scale == 0.0:
        return 0.0, np.zeros(n), 0.0
    if method == "auto":
        method = "jacobi" if n <= JACOBI_LIMIT else ("dense" if n <= DENSE_LIMIT else "iterative")
    M = L + (scale + 1.0) * np.outer(q, q)
    if method == "jacobi":
        w, V = jacobi_eigh(M)
        lam, x = float(w[0]), V[:, 0]
    elif method == "dense":
        w, V = linalg.eigh(M, subset_by_index=[0, 0])
        lam, x = float(w[0]), V[:, 0]
    elif method == "iterative":
        lam, x, _ = lanczos_lowest(L, deflate=q, tol=tol)
    else:
        raise ValueError(f"unknown eigensolver {method!r}")
    res = residual_norm(L, lam, x)
    if res > tol * max(scale, 1.0):
        raise EigenError(f"weighted-Laplacian residual {res:.3g} above tolerance", res)
    if -BOUND_TOL <= lam < 0:
        lam = 0.0
    return lam, x, res


def verify_gap_bound(Lw: WeightedLaplacianMatrix, sigma: float, lambda2: float | None = None) -> GapBoundReport:
    """lambda2 >= (1/2) sigma c_rho rho_- with c_rho = rho_- / rho_+."""
    if lambda2 is None:
        lambda2 = lambda2_weighted(Lw)[0]
    rho = Lw.weight
    rmin, rmax = float(np.min(rho)), float(np.max(rho))
    c = rmin / rmax if rmax > 0 else 0.0
    bound = 0.5 * sigma * c * rmin
    ratio = lambda2 / bound if bound > 0 else math.inf
    return GapBoundReport(lambda2, bound, c, rmin, rmax, sigma, lambda2 >= bound - BOUND_TOL,
                          lambda2 - bound, ratio)


@dataclass
class KineticCheck:
    lhs: float
    rhs: float
    margin: float


def kinetic_fluctuation_check(u: np.ndarray, rho: np.ndarray, kernel: KernelSpec, domain: DomainSpec,
                              lambda2: float | None = None, mode: str = "spectral",
                              Lw: WeightedLaplacianMatrix | None = None) -> KineticCheck:
    """iint phi |u - u'|^2 rho rho' >= (lambda2 / m0) iint |u - u'|^2 rho rho' on grid data.

    ``u`` has shape grid or (d,) + grid; both sides are pair sums with the
    same grid kernel used to assemble L_rho.
    """
    rho = np.asarray(rho, dtype=float)
    u = np.asarray(u, dtype=float)
    if u.shape == rho.shape:
        u = u[None]
    n = rho.shape[0]
    hd = (domain.period / n) ** domain.dim
    if lambda2 is None:
        Lw = Lw or assemble_weighted_laplacian(rho, kernel, domain, mode)
        lambda2 = lambda2_weighted(Lw)[0]
    K = spectral_kernel_weights(kernel, domain, n, mode)
    C = circulant_matrix(K)
    r = rho.ravel()
    m0 = float(np.sum(r)) * hd
    lhs = 0.0
    rhs_pairs = 0.0
    R = np.outer(r, r)
    for comp in u.reshape(u.shape[0], -1):
        D = (comp[:, None] - comp[None, :]) ** 2 * R
        lhs += float(np.sum(C * D)) * hd
        rhs_pairs += float(np.sum(D)) * hd * hd
    rhs = lambda2 / m0 * rhs_pairs if m0 > 0 else 0.0
    return KineticCheck(lhs, rhs, lhs - rhs)


def quadratic_form(Lw: WeightedLaplacianMatrix, w: np.ndarray) -> float:
    """h^d <L sqrt(rho) w, sqrt(rho) w>."""
    x = Lw.null_vector() * np.asarray(w, dtype=float).ravel()
    return Lw.quadrature_weight * float(x @ Lw.matrix @ x)


def dump_triplets(Lw: WeightedLaplacianMatrix, path, threshold: float = 0.0) -> None:
    """Write 'row col value' lines (0-based) for entries with |value| > threshold."""
    M = Lw.matrix
    rows, cols = np.nonzero(np.abs(M) > threshold)
    with open(path, "w") as fh:
        fh.write(f"# {M.shape[0]} {M.shape[1]}\n")
        for a, b in zip(rows, cols):
            fh.write(f"{a} {b} {format(M[a, b], '.17g')}\n")


def load_triplets(path) -> np.ndarray:
    with open(path) as fh:
        n, m = (int(v) for v in fh.readline().lstrip("# ").split())
        M = np.zeros((n, m))
        for line in fh:
            a, b, v = line.split()
            M[int(a), int(b)] = float(v)
    return M


@dataclass
class GapDecayCertificate:
    passed: bool
    worst_margin: float
    bound: list
    rate: list
    ratio_lambda2_rho_minus: list
    tolerance: float


def gap_decay_certificate(times, deltaE, lambda2, rho_minus, tau: float,
                          tolerance: float = 1e-8) -> GapDecayCertificate:
    """deltaE(t) <= exp(-2 tau int min(lambda2, rho_-)) deltaE(0) along a recorded run."""
    t = np.asarray(times, dtype=float)
    dE = np.asarray(deltaE, dtype=float)
    lam = np.asarray(lambda2, dtype=float)
    rmin = np.asarray(rho_minus, dtype=float)
    if not (t.shape == dE.shape == lam.shape == rmin.shape):
        raise ValueError("mismatched series")
    rate = np.minimum(lam, rmin)
    integ = np.zeros_like(t)
    integ[1:] = np.cumsum(0.5 * (rate[1:] + rate[:-1]) * np.diff(t))
    bound = np.exp(-2.0 * tau * integ) * dE[0]
    ratios = np.where(rmin > 0, lam / np.where(rmin > 0, rmin, 1.0), math.inf).tolist()
    if dE[0] == 0.0:
        return GapDecayCertificate(True, 0.0, bound.tolist(), rate.tolist(), ratios, tolerance)
    worst = float(np.min(1.0 - dE / bound))
    return GapDecayCertificate(worst >= -tolerance, worst, bound.tolist(), rate.tolist(), ratios, tolerance)
