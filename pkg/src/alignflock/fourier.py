"""Fourier cosine coefficients of radial kernels on the torus and the gap
constant

    sigma = 1 - max_{k != 0} int_{T^d} phi(|x|) cos(2 pi k.x / L) dx.

Coefficients are computed by closed forms (indicator, constant), a radial
reduction (support inside the inscribed ball of the cell) or tensor-product
quadrature over the cell.  The maximum over all k != 0 is certified by a
bounded-variation decay estimate for the modes beyond the search box.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, special

from .geometry import SPHERE_AREA, DomainSpec, KernelError, KernelSpec, polar_cell_nodes, shape_knots

J1_MAX = 0.5818652242815963  # max_x |J_1(x)|, attained near x = 1.8412
DEFAULT_KMAX = {1: 64, 2: 16, 3: 6}
TAIL_SAFETY = 1.01


class TailBoundInconclusive(RuntimeError):
    def __init__(self, message: str, K_max: int, bound: float, maximum: float):
        super().__init__(message)
        self.K_max = K_max
        self.bound = bound
        self.maximum = maximum


@dataclass
class FourierGapResult:
    sigma: float
    argmax_mode: tuple
    coefficients: dict = field(repr=False)
    K_max: int = 0
    tail_bound: float = 0.0
    mass: float = 1.0

    def summary(self, n_coeff: int = 8) -> dict:
        top = sorted(self.coefficients.items(), key=lambda kv: (-kv[1], _norm2(kv[0]), kv[0]))[:n_coeff]
        return {
            "sigma": self.sigma,
            "argmax_mode": list(self.argmax_mode),
            "K_max": self.K_max,
            "tail_bound": self.tail_bound,
            "coefficients": [{"k": list(k), "value": v} for k, v in top],
        }


# ---------------------------------------------------------------------------
# Bessel J1
# ---------------------------------------------------------------------------

def _j1_series(x: float) -> float:
    # J1(x) = sum_m (-1)^m (x/2)^{2m+1} / (m! (m+1)!)
    h = 0.5 * x
    term = h
    total = term
    q = -h * h
    m = 0
    while True:
        m += 1
        term *= q / (m * (m + 1))
        total += term
        if abs(term) < 1e-17 * max(abs(total), 1e-300) and m > 2:
            break
    return total


def _j1_integral(x: float, n: int | None = None) -> float:
    # J1(x) = (1/pi) int_0^pi cos(t - x sin t) dt; the integrand extends to a smooth
    # 2 pi-periodic function, so the trapezoid rule converges geometrically
    if n is None:
        n = max(64, int(2 * x) + 64)
    t = np.arange(n) * (2.0 * math.pi / n)
    return float(np.mean(np.cos(t - x * np.sin(t))))


def bessel_j1(x) -> float:
    """Bessel function of the first kind of order one."""
    x = float(x)
    if x < 0:
        return -bessel_j1(-x)
    if x < 8.0:
        return _j1_series(x)
    return _j1_integral(x)


def bessel_j1_array(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return np.vectorize(bessel_j1, otypes=[float])(x)


# ---------------------------------------------------------------------------
# coefficients
# ---------------------------------------------------------------------------

def _norm2(k) -> float:
    return math.sqrt(sum(int(c) * int(c) for c in k))


def _as_modes(k, dim: int) -> np.ndarray:
    k = np.asarray(k)
    if k.ndim == 0:
        k = k.reshape(1)
    if k.ndim == 1:
        k = k.reshape(1, -1) if k.shape[0] == dim else k.reshape(-1, 1)
    if k.shape[1] != dim:
        raise ValueError(f"modes must have {dim} components")
    if not np.all(k == np.round(k)):
        raise ValueError("modes must be integer vectors")
    return k.astype(np.int64)


def _check_torus(kernel: KernelSpec, domain: DomainSpec) -> None:
    if not domain.is_torus:
        raise KernelError("Fourier coefficients are defined on the torus only")
    if not kernel.is_radial:
        raise KernelError("the gap constant is defined for radial kernels only")


def _radial_nodes(kernel: KernelSpec, R: float, panels: int = 48, order: int = 24):
    """Composite Gauss-Legendre nodes on [0, R] split at the profile's knots."""
    brk = {0.0, R}
    if kernel.family == "tabulated":
        brk.update(r for r in kernel.table[0] if 0.0 < r < R)
    brk = sorted(brk)
    g, w = np.polynomial.legendre.leggauss(order)
    nodes, weights = [], []
    for a, b in zip(brk, brk[1:]):
        sub = max(1, int(math.ceil(panels * (b - a) / R)))
        e = np.linspace(a, b, sub + 1)
        half = 0.5 * np.diff(e)
        mid = 0.5 * (e[:-1] + e[1:])
        nodes.append((mid[:, None] + half[:, None] * g).ravel())
        weights.append((half[:, None] * w).ravel())
    return np.concatenate(nodes), np.concatenate(weights)


def _radial_transform(kernel: KernelSpec, omega: np.ndarray, dim: int, R: float) -> np.ndarray:
    """int_{|x|<=R} phi(|x|) cos(omega . x) dx as a function of |omega|."""
    r, w = _radial_nodes(kernel, R)
    f = kernel.profile(r) * w
    wr = np.outer(omega, r)
    if dim == 1:
        return 2.0 * (np.cos(wr) @ f)
    if dim == 2:
        return 2.0 * math.pi * (special.j0(wr) @ (f * r))
    # 3D: sin(wr)/(wr) with the removable singularity at 0
    return 4.0 * math.pi * (np.sinc(wr / math.pi) @ (f * r * r))


def _indicator_transform(a: float, R: float, omega: np.ndarray, dim: int) -> np.ndarray:
    out = np.empty_like(omega)
    zero = omega == 0.0
    w = omega[~zero]
    x = w * R
    if dim == 1:
        out[~zero] = 2.0 * a * np.sin(x) / w
    elif dim == 2:
        out[~zero] = 2.0 * math.pi * a * R * bessel_j1_array(x) / w
    else:
        out[~zero] = 4.0 * math.pi * a * (np.sin(x) - x * np.cos(x)) / w ** 3
    out[zero] = a * SPHERE_AREA[dim] * R ** dim / dim
    return out


def _cartesian_coefficients(kernel: KernelSpec, domain: DomainSpec, modes: np.ndarray,
                            panels: int = 16, order: int = 16) -> np.ndarray:
    """Tensor-product Gauss-Legendre over the periodic cell; all modes at once."""
    L, d = domain.period, domain.dim
    g, w = np.polynomial.legendre.leggauss(order)
    e = np.linspace(-0.5 * L, 0.5 * L, panels + 1)
    half = 0.5 * np.diff(e)
    x = ((0.5 * (e[:-1] + e[1:]))[:, None] + half[:, None] * g).ravel()
    wx = (half[:, None] * w).ravel()
    return _separable_sum(kernel, domain, x, wx, modes)


def _polar_coefficients(kernel: KernelSpec, domain: DomainSpec, modes: np.ndarray) -> np.ndarray:
    """Breakpoint-aware quadrature over the whole cell for d <= 2.

    In 2D the octant symmetry of the square turns the cosine integral into
    4 sum w f [cos(k1 a) cos(k2 b) + cos(k1 b) cos(k2 a)] over one octant.
    """
    L, d = domain.period, domain.dim
    kw = 2.0 * math.pi / L
    absk = np.abs(modes)
    omega_max = kw * float(np.max(np.sqrt(np.sum(absk.astype(float) ** 2, axis=1)))) if len(modes) else 0.0
    knots = shape_knots(kernel)
    if d == 1:
        half = 0.5 * L
        r, wr = _line_nodes(half, knots, omega_max)
        f = kernel.profile(r) * wr
        return 2.0 * (np.cos(kw * np.outer(absk[:, 0], r)) @ f)
    if d != 2:
        raise KernelError("polar quadrature covers one and two dimensions")
    a, b, w = polar_cell_nodes(L, knots, omega_max)
    f = kernel.profile(np.hypot(a, b)) * w
    ks = np.unique(absk)
    Ca = np.cos(kw * np.outer(ks, a))
    Cb = np.cos(kw * np.outer(ks, b))
    M = (Ca * f) @ Cb.T
    M = 4.0 * (M + M.T)
    i = np.searchsorted(ks, absk)
    return M[i[:, 0], i[:, 1]]


def _line_nodes(half: float, knots, omega_max: float, order: int = 20):
    g, gw = np.polynomial.legendre.leggauss(order)
    rb = [0.0] + [q for q in knots if 0.0 < q < half] + [half]
    r, w = [], []
    for r0, r1 in zip(rb, rb[1:]):
        m = max(1, int(math.ceil((r1 - r0) * max(omega_max, 1.0) / 6.0)))
        e = np.linspace(r0, r1, m + 1)
        r.append(((0.5 * (e[:-1] + e[1:]))[:, None] + 0.5 * np.diff(e)[:, None] * g).ravel())
        w.append((0.5 * np.diff(e)[:, None] * gw).ravel())
    return np.concatenate(r), np.concatenate(w)


def _trapezoid_coefficients(kernel: KernelSpec, domain: DomainSpec, modes: np.ndarray,
                            n: int) -> np.ndarray:
    """Uniform periodic trapezoid rule with n nodes per axis."""
    L = domain.period
    h = L / n
    x = -0.5 * L + h * np.arange(n)
    return _separable_sum(kernel, domain, x, np.full(n, h), modes)


def _separable_sum(kernel, domain, x, wx, modes):
    L, d = domain.period, domain.dim
    grids = np.meshgrid(*([x] * d), indexing="ij")
    r = np.sqrt(sum(q * q for q in grids))
    F = kernel.profile(r)
    for ax in range(d):
        shape = [1] * d
        shape[ax] = -1
        F = F * wx.reshape(shape)
    out = np.empty(len(modes))
    # cos(w.x) = Re prod_j exp(i w_j x_j); contract one axis at a time per mode
    kvals = [np.unique(modes[:, j]) for j in range(d)]
    E = [np.exp(-1j * (2.0 * math.pi / L) * np.outer(x, kv)) for kv in kvals]
    if d == 1:
        full = E[0].T @ F
        idx = np.searchsorted(kvals[0], modes[:, 0])
        out[:] = full[idx].real
    elif d == 2:
        full = E[0].T @ F @ E[1]
        i0 = np.searchsorted(kvals[0], modes[:, 0])
        i1 = np.searchsorted(kvals[1], modes[:, 1])
        out[:] = full[i0, i1].real
    else:
        full = np.einsum("ia,jb,kc,ijk->abc", E[0], E[1], E[2], F, optimize=True)
        i = [np.searchsorted(kvals[j], modes[:, j]) for j in range(3)]
        out[:] = full[i[0], i[1], i[2]].real
    return out


def _auto_method(kernel: KernelSpec, domain: DomainSpec) -> str:
    R = kernel.support_radius
    if kernel.family == "constant":
        return "analytic"
    if R <= 0.5 * domain.period:
        return "analytic" if kernel.family == "indicator" else "radial"
    return "polar" if domain.dim <= 2 else "cartesian"


def fourier_coefficients(kernel: KernelSpec, modes, domain: DomainSpec, method: str = "auto",
                         n_grid: int | None = None) -> np.ndarray:
    """Vectorized ``kernel_fourier_coefficient`` over an (M, d) array of modes."""
    _check_torus(kernel, domain)
    d, L = domain.dim, domain.period
    modes = _as_modes(modes, d)
    if method == "auto":
        method = _auto_method(kernel, domain)
    omega = (2.0 * math.pi / L) * np.sqrt(np.sum(modes.astype(float) ** 2, axis=1))
    R = kernel.support_radius
    if method == "analytic":
        if kernel.family == "constant":
            return np.where(np.all(modes == 0, axis=1), kernel.amplitude * domain.volume, 0.0)
        if kernel.family != "indicator" or R > 0.5 * L:
            raise KernelError("closed form available for the constant kernel and indicators inside the cell")
        return _indicator_transform(kernel.amplitude, R, omega, d)
    if method == "radial":
        if R > 0.5 * L:
            raise KernelError("radial reduction needs support inside the inscribed ball of the cell")
        return _radial_transform(kernel, omega, d, R)
    if method == "polar":
        return _polar_coefficients(kernel, domain, modes)
    if method == "cartesian":
        return _cartesian_coefficients(kernel, domain, modes)
    if method == "trapezoid":
        n = n_grid or {1: 1 << 14, 2: 1024, 3: 96}[d]
        return _trapezoid_coefficients(kernel, domain, modes, n)
    raise ValueError(f"unknown coefficient method {method!r}")


def kernel_fourier_coefficient(kernel: KernelSpec, k, domain: DomainSpec, method: str = "auto") -> float:
    """int_{T^d} phi(|x|) cos(2 pi k.x / L) dx for one integer mode k."""
    return float(fourier_coefficients(kernel, [k] if np.ndim(k) else [[k]], domain, method)[0])


# ---------------------------------------------------------------------------
# tail certification
# ---------------------------------------------------------------------------

def _interval_variation(kernel: KernelSpec, r0, r1) -> np.ndarray:
    """Total variation of the scaled radial profile on [r0, r1] (vectorized in r0, r1)."""
    r0 = np.atleast_1d(np.asarray(r0, dtype=float))
    r1 = np.atleast_1d(np.asarray(r1, dtype=float))
    knots = []
    R = kernel.support_radius
    if math.isfinite(R):
        knots += [R, R * (1.0 + 1e-13) + 1e-300]
    if kernel.family == "tabulated":
        knots += list(kernel.table[0])
    knots = np.array(sorted(set(knots)))
    out = np.empty(r0.shape)
    for i, (a, b) in enumerate(zip(r0, r1)):
        pts = np.concatenate(([a], knots[(knots > a) & (knots < b)], [b]))
        # pieces between knots are monotone, so endpoint differences give the variation
        out[i] = np.sum(np.abs(np.diff(kernel.profile(pts))))
    return out


def _cartesian_tail_constant(kernel: KernelSpec, domain: DomainSpec) -> float:
    """int over the transverse cell of the variation of phi along one axis."""
    L, d = domain.period, domain.dim
    if d == 1:
        return float(_interval_variation(kernel, 0.0, 0.5 * L)[0]) * 2.0
    n = 1025 if d == 2 else 129
    y = np.linspace(-0.5 * L, 0.5 * L, n)
    grids = np.meshgrid(*([y] * (d - 1)), indexing="ij")
    rho = np.sqrt(sum(q * q for q in grids)).ravel()
    v = 2.0 * _interval_variation(kernel, rho, np.sqrt(0.25 * L * L + rho * rho))
    v = v.reshape(grids[0].shape)
    for _ in range(d - 1):
        v = integrate.trapezoid(v, y, axis=0)
    return float(v) * TAIL_SAFETY


def tail_envelope(kernel: KernelSpec, domain: DomainSpec, k) -> float:
    """Upper bound on |coefficient(k)| from the bounded variation of the kernel.

    Integration by parts along the axis of largest |k_j| gives
    |c(k)| <= V / (2 pi |k|_inf / L), with V the transverse integral of the
    one-dimensional variations.  In two dimensions, for support inside the
    inscribed ball, the radial identity (r J1(w r))' = w r J0(w r) gives the
    alternative |c(k)| <= 2 pi R J1_max Var(phi) / |w|.
    """
    _check_torus(kernel, domain)
    L, d = domain.period, domain.dim
    k = np.atleast_1d(np.asarray(k, dtype=float))
    kinf = float(np.max(np.abs(k)))
    if kinf == 0:
        return math.inf
    bounds = [_cartesian_tail_constant(kernel, domain) * L / (2.0 * math.pi * kinf)]
    R = kernel.support_radius
    if d == 2 and R <= 0.5 * L:
        var = float(_interval_variation(kernel, 0.0, R * (1.0 + 1e-12) + 1e-300)[0])
        w = 2.0 * math.pi * float(np.linalg.norm(k)) / L
        bounds.append(2.0 * math.pi * R * J1_MAX * var / w)
    return min(bounds)


# ---------------------------------------------------------------------------
# the gap constant
# ---------------------------------------------------------------------------

def mode_box(K_max: int, dim: int) -> np.ndarray:
    """All integer modes with 0 < |k|_inf <= K_max, lexicographic order."""
    rng = range(-K_max, K_max + 1)
    modes = [m for m in itertools.product(rng, repeat=dim) if any(m)]
    return np.array(modes, dtype=np.int64).reshape(-1, dim)


def sigma_phi(kernel: KernelSpec, domain: DomainSpec, K_max: int | None = None,
              method: str = "auto", tie_tol: float = 1e-14) -> FourierGapResult:
    """Gap constant of a unit-mass radial kernel, certified against the modes beyond K_max."""
    _check_torus(kernel, domain)
    d = domain.dim
    if K_max is None:
        K_max = DEFAULT_KMAX[d]
    if K_max < 1:
        raise ValueError("K_max must be >= 1")
    zero = np.zeros((1, d), dtype=np.int64)
    mass = float(fourier_coefficients(kernel, zero, domain, method)[0])
    if abs(mass - 1.0) > 1e-8:
        raise KernelError(f"kernel must have unit mass on the torus (got {mass!r})")
    modes = mode_box(K_max, d)
    c = fourier_coefficients(kernel, modes, domain, method)
    cmax = float(np.max(c))
    # ties: smallest Euclidean norm, then lexicographic
    cand = np.flatnonzero(c >= cmax - tie_tol * max(1.0, abs(cmax)))
    best = min(cand, key=lambda i: (_norm2(modes[i]), tuple(modes[i])))
    kstar = tuple(int(v) for v in modes[best])
    tail = tail_envelope(kernel, domain, [K_max + 1] + [0] * (d - 1))
    if not (tail < cmax or (tail == 0.0 and cmax >= 0.0)):
        raise TailBoundInconclusive(
            f"tail bound {tail:.3g} at |k|={K_max + 1} does not undercut the in-range maximum "
            f"{cmax:.3g}; increase K_max", K_max, tail, cmax)
    coeffs = {tuple(int(v) for v in m): float(x) for m, x in zip(modes, c)}
    coeffs[tuple([0] * d)] = mass
    return FourierGapResult(1.0 - cmax, kstar, coeffs, K_max, tail, mass)


# ---------------------------------------------------------------------------
# grid kernels, Parseval and the Poincare inequality
# ---------------------------------------------------------------------------

def grid_modes(n: int, dim: int) -> np.ndarray:
    """Signed integer modes of an n^dim FFT grid, shape (n,)*dim + (dim,)."""
    f = np.rint(np.fft.fftfreq(n, 1.0 / n)).astype(np.int64)
    grids = np.meshgrid(*([f] * dim), indexing="ij")
    return np.stack(grids, axis=-1)


def grid_multipliers(kernel: KernelSpec, domain: DomainSpec, n: int, method: str = "auto") -> np.ndarray:
    """Fourier coefficients of the kernel on all modes of an n^d grid (FFT layout).

    The Nyquist mode of an even grid takes the symmetric value c(n/2) = c(-n/2).
    """
    d = domain.dim
    modes = grid_modes(n, d).reshape(-1, d)
    # fold to non-negative representatives; c depends on k only through symmetries
    key = np.sort(np.abs(modes), axis=1)
    uniq, inv = np.unique(key, axis=0, return_inverse=True)
    vals = fourier_coefficients(kernel, uniq, domain, method)
    return vals[inv.ravel()].reshape((n,) * d)


def spectral_kernel_weights(kernel: KernelSpec, domain: DomainSpec, n: int, mode: str = "spectral",
                            method: str = "auto") -> np.ndarray:
    """Discrete convolution weights K with (phi * f)(x_i) ~ sum_j K[i - j] f_j.

    ``spectral``: K is the inverse DFT of the exact coefficients, so the
    discrete convolution is exact on grid-resolved trigonometric polynomials.
    ``sampled``: K[m] = phi(|x_m|) h^d, the midpoint rule; non-negative but
    only first-order accurate for discontinuous kernels.
    """
    if not domain.is_torus:
        raise KernelError("grid kernels need a torus")
    d, L = domain.dim, domain.period
    if mode == "spectral":
        c = grid_multipliers(kernel, domain, n, method)
        return np.real(np.fft.ifftn(c))
    if mode == "sampled":
        h = L / n
        j = np.arange(n)
        x = h * np.where(j <= n // 2, j, j - n)
        grids = np.meshgrid(*([x] * d), indexing="ij")
        r = np.sqrt(sum(q * q for q in grids))
        return kernel.profile(r) * h ** d
    raise ValueError(f"unknown kernel discretization {mode!r}")


def grid_convolve(weights: np.ndarray, f: np.ndarray) -> np.ndarray:
    """Periodic discrete convolution sum_j K[i - j] f_j via FFT."""
    return np.real(np.fft.ifftn(np.fft.fftn(weights) * np.fft.fftn(f)))


def dft_amplitudes(w: np.ndarray) -> np.ndarray:
    """a_k with w(x_j) = sum_k a_k exp(i k.x_j 2 pi / L)."""
    return np.fft.fftn(w) / w.size


def parseval_fluctuation(w: np.ndarray, domain: DomainSpec) -> float:
    """iint |w(x) - w(x')|^2 dx dx' from the Fourier side: 2 |Omega|^2 sum_{k != 0} |a_k|^2."""
    a = dft_amplitudes(np.asarray(w, dtype=float))
    p = np.abs(a) ** 2
    return 2.0 * domain.volume ** 2 * float(np.sum(p) - p.flat[0])


def direct_fluctuation(w: np.ndarray, domain: DomainSpec) -> float:
    """iint |w(x) - w(x')|^2 dx dx' as the explicit double sum over grid pairs."""
    w = np.asarray(w, dtype=float).ravel()
    h_d = domain.volume / w.size
    diff = w[:, None] - w[None, :]
    return float(np.sum(diff * diff)) * h_d * h_d


@dataclass
class PoincareReport:
    lhs: float
    rhs: float
    margin: float
    sigma: float


def poincare_check(kernel: KernelSpec, domain: DomainSpec, w: np.ndarray, sigma: float | None = None,
                   route: str = "fourier") -> PoincareReport:
    """Both sides of iint phi |w - w'|^2 >= sigma / |Omega| iint |w - w'|^2 on grid data.

    ``route="fourier"`` diagonalizes the kernel with the exact coefficients;
    ``route="direct"`` forms the pair sums with spectral kernel weights.  The
    two agree to roundoff for grid-resolved data.
    """
    w = np.asarray(w, dtype=float)
    d = domain.dim
    if w.ndim != d or len(set(w.shape)) != 1:
        raise ValueError("w must be sampled on a uniform n^d grid")
    n = w.shape[0]
    if sigma is None:
        sigma = sigma_phi(kernel, domain).sigma
    vol = domain.volume
    if route == "fourier":
        c = grid_multipliers(kernel, domain, n)
        p = np.abs(dft_amplitudes(w)) ** 2
        p.flat[0] = 0.0
        lhs = 2.0 * vol * float(np.sum((c.flat[0] - c) * p))
        rhs = sigma / vol * 2.0 * vol ** 2 * float(np.sum(p))
    elif route == "direct":
        K = spectral_kernel_weights(kernel, domain, n)
        h_d = vol / w.size
        mass = float(np.sum(K))
        # sum_ij K_{i-j} (w_i - w_j)^2 = 2 mass sum w^2 - 2 sum_i w_i (K * w)_i
        conv = grid_convolve(K, w)
        lhs = 2.0 * h_d * (mass * float(np.sum(w * w)) - float(np.sum(w * conv)))
        rhs = sigma / vol * direct_fluctuation(w, domain)
    else:
        raise ValueError(f"unknown route {route!r}")
    return PoincareReport(lhs, rhs, lhs - rhs, sigma)
