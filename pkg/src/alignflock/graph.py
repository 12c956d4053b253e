"""Communication graph of an ensemble, its Laplacian spectral gap, and the
discrete fluctuation-decay certificate

    deltaE(t) <= exp(-2 tau int_0^t lambda2(s) ds) deltaE(0),

where lambda2 is taken of the 1/N-scaled graph Laplacian.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .eigen import EigenError, jacobi_eigh, lanczos_lowest, residual_norm
from .geometry import KernelSpec, interaction_matrix

EIG_TOL = 1e-10
CLAMP_TOL = 1e-10
DENSE_LIMIT = 256


@dataclass
class WeightedGraph:
    weights: np.ndarray
    scaled: bool = True

    def __post_init__(self):
        W = np.asarray(self.weights, dtype=float)
        if W.ndim != 2 or W.shape[0] != W.shape[1]:
            raise ValueError("weights must be a square matrix")
        if np.any(W < 0):
            raise ValueError("weights must be non-negative")
        if not np.array_equal(W, W.T):
            raise ValueError("weights must be symmetric")
        if np.any(np.diag(W) != 0):
            raise ValueError("weights must have a zero diagonal")
        self.weights = W

    @property
    def N(self) -> int:
        return self.weights.shape[0]


@dataclass
class SpectralGapReport:
    lambda2: float
    fiedler_vector: np.ndarray
    connected: bool
    residual: float
    clamped: bool = False
    method: str = ""


@dataclass
class DecayCertificate:
    passed: bool
    worst_margin: float
    max_slack: float
    times: list
    bound: list
    deltaE: list
    tolerance: float
    note: str = ""


def adjacency(ensemble, kernel: KernelSpec, scaled: bool = True) -> WeightedGraph:
    """Phi_ij = phi(x_i, x_j) off the diagonal."""
    return WeightedGraph(interaction_matrix(kernel, ensemble.positions, ensemble.domain), scaled)


def graph_laplacian(g: WeightedGraph, scaled: bool | None = None) -> np.ndarray:
    """diag(row sums) - Phi, divided by N when the graph (or ``scaled``) says so."""
    W = g.weights
    L = np.diag(W.sum(axis=1)) - W
    if g.scaled if scaled is None else scaled:
        L = L / g.N
    return L


def fiedler(L: np.ndarray, method: str = "auto", tol: float = EIG_TOL) -> SpectralGapReport:
    """Second-smallest eigenvalue of a graph Laplacian and its eigenvector.

    method: ``jacobi`` (dense rotations), ``lapack`` (numpy eigh), ``iterative``
    (Lanczos after shifting out the constant vector) or ``auto`` (Jacobi up to
    256 vertices, iterative above).
    """
    L = np.asarray(L, dtype=float)
    n = L.shape[0]
    if n < 2:
        return SpectralGapReport(0.0, np.zeros(n), n == 1, 0.0, False, "trivial")
    if method == "auto":
        method = "jacobi" if n <= DENSE_LIMIT else "iterative"
    scale = max(float(np.max(np.abs(L))), 1.0)
    if method in ("jacobi", "lapack"):
        w, V = jacobi_eigh(L) if method == "jacobi" else np.linalg.eigh(0.5 * (L + L.T))
        lam, x = float(w[1]), V[:, 1]
    elif method == "iterative":
        lam, x, _ = lanczos_lowest(L, deflate=np.ones(n), tol=tol)
    else:
        raise ValueError(f"unknown eigensolver {method!r}")
    res = residual_norm(L, lam, x)
    if res > tol * scale * n:
        raise EigenError(f"eigen-residual {res:.3g} above tolerance", res)
    clamped = False
    if -CLAMP_TOL <= lam < 0:
        lam, clamped = 0.0, True
    return SpectralGapReport(lam, x, lam > CLAMP_TOL * scale, res, clamped, method)


def cumulative_trapezoid(t, y) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    out = np.zeros_like(t)
    if t.size > 1:
        out[1:] = np.cumsum(0.5 * (y[1:] + y[:-1]) * np.diff(t))
    return out


def decay_certificate(trace, tau: float, tolerance: float = 1e-8) -> DecayCertificate:
    """Check deltaE(t) <= exp(-2 tau int lambda2) deltaE(0) (1 + tolerance) at every sample.

    ``worst_margin`` is min_t (1 - deltaE/bound): negative means violation.
    ``max_slack`` is max_t |1 - deltaE/bound|, the distance from equality.
    """
    if trace.fiedler is None:
        raise ValueError("trace carries no lambda2 samples")
    t = np.asarray(trace.times)
    dE = np.asarray(trace.deltaE)
    lam = np.asarray(trace.fiedler)
    if not (t.shape == dE.shape == lam.shape):
        raise ValueError("time, deltaE and lambda2 series have mismatched lengths")
    integral = cumulative_trapezoid(t, lam)
    bound = np.exp(-2.0 * tau * integral) * dE[0]
    if dE[0] == 0.0:
        return DecayCertificate(True, 0.0, 0.0, t.tolist(), bound.tolist(), dE.tolist(), tolerance,
                                "vacuous: deltaE(0) = 0")
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(bound > 0, dE / bound, np.where(dE > 0, math.inf, 1.0))
    margin = 1.0 - ratio
    worst = float(np.min(margin))
    return DecayCertificate(worst >= -tolerance, worst, float(np.max(np.abs(margin))),
                            t.tolist(), bound.tolist(), dE.tolist(), tolerance)
