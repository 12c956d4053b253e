"""Ambient domains and communication kernels.

A kernel is stored as an unscaled radial ``shape`` times a scalar
``amplitude``.  :func:`normalize_kernel` sets the amplitude to the inverse of
the shape's mass on the domain, so that ``int phi(x, x') dx' = 1``.

Supported families
------------------
``fat_tail``            (1 + r^2)^(-theta/2)
``indicator``           1(r <= R0)
``increasing_compact``  (r / R0) 1(r <= R0)
``topological``         1(r <= R0) r^(gamma - beta) * mu(x, x')^(-gamma)
``constant``            1
``tabulated``           piecewise-linear in r through the given nodes, 0 past the last node
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy import integrate

FAMILIES = ("fat_tail", "indicator", "increasing_compact", "topological", "constant", "tabulated")

# surface measure of the unit sphere S^{d-1}
SPHERE_AREA = {1: 2.0, 2: 2.0 * math.pi, 3: 4.0 * math.pi}

MASS_TOL = 1e-8


class KernelError(ValueError):
    """Raised for kernels that cannot be evaluated or normalized as requested."""


@dataclass(frozen=True)
class DomainSpec:
    kind: str = "torus"
    dim: int = 1
    period: float | None = 2.0 * math.pi

    def __post_init__(self):
        if self.kind not in ("torus", "free"):
            raise ValueError(f"unknown domain kind {self.kind!r}")
        if self.dim not in (1, 2, 3):
            raise ValueError(f"dimension {self.dim} not supported (1, 2 or 3)")
        if self.kind == "torus":
            if self.period is None or not self.period > 0:
                raise ValueError("torus domains need a positive period")
        elif self.period is not None:
            raise ValueError("free-space domains carry no period")

    @classmethod
    def torus(cls, dim: int = 1, period: float = 2.0 * math.pi) -> "DomainSpec":
        return cls("torus", dim, float(period))

    @classmethod
    def free(cls, dim: int = 1) -> "DomainSpec":
        return cls("free", dim, None)

    @property
    def is_torus(self) -> bool:
        return self.kind == "torus"

    @property
    def volume(self) -> float:
        if not self.is_torus:
            return math.inf
        return self.period ** self.dim

    def wrap(self, x: np.ndarray) -> np.ndarray:
        """Reduce positions to the fundamental cell [0, L)^d."""
        x = np.asarray(x, dtype=float)
        if not self.is_torus:
            return x
        y = np.mod(x, self.period)
        # np.mod can return exactly L for tiny negative inputs
        return np.where(y >= self.period, y - self.period, y)


@dataclass(frozen=True)
class KernelSpec:
    family: str
    theta: float = 0.0
    radius: float = 1.0
    beta: float = 0.0
    gamma: float = 0.0
    table: tuple[tuple[float, ...], tuple[float, ...]] | None = None
    amplitude: float = 1.0
    mass: float | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise KernelError(f"unknown kernel family {self.family!r}")
        if not self.amplitude > 0:
            raise KernelError("kernel amplitude must be positive")
        if self.family == "fat_tail" and not self.theta > 0:
            raise KernelError("fat-tail kernels need theta > 0")
        if self.family in ("indicator", "increasing_compact", "topological") and not self.radius > 0:
            raise KernelError("compact kernels need a positive radius")
        if self.family == "topological" and not (0 <= self.gamma <= self.beta):
            raise KernelError("topological kernels need 0 <= gamma <= beta")
        if self.family == "tabulated":
            if self.table is None:
                raise KernelError("tabulated kernels need a table")
            r, v = self.table
            if len(r) != len(v) or len(r) < 2:
                raise KernelError("table needs matching r/value columns with >= 2 nodes")
            if r[0] != 0.0 or any(b <= a for a, b in zip(r, r[1:])):
                raise KernelError("table radii must start at 0 and increase strictly")
            if min(v) < 0:
                raise KernelError("tabulated kernel values must be non-negative")

    # -- constructors ---------------------------------------------------------
    @classmethod
    def fat_tail(cls, theta: float) -> "KernelSpec":
        return cls("fat_tail", theta=float(theta))

    @classmethod
    def indicator(cls, radius: float = 1.0) -> "KernelSpec":
        return cls("indicator", radius=float(radius))

    @classmethod
    def increasing_compact(cls, radius: float = 1.0) -> "KernelSpec":
        return cls("increasing_compact", radius=float(radius))

    @classmethod
    def topological(cls, radius: float, beta: float, gamma: float) -> "KernelSpec":
        return cls("topological", radius=float(radius), beta=float(beta), gamma=float(gamma))

    @classmethod
    def constant(cls, value: float = 1.0) -> "KernelSpec":
        return cls("constant", amplitude=float(value))

    @classmethod
    def tabulated(cls, r, values) -> "KernelSpec":
        return cls("tabulated", table=(tuple(float(a) for a in r), tuple(float(b) for b in values)))

    # -- profile --------------------------------------------------------------
    @property
    def support_radius(self) -> float:
        if self.family in ("indicator", "increasing_compact", "topological"):
            return self.radius
        if self.family == "tabulated":
            return self.table[0][-1]
        return math.inf

    @property
    def is_radial(self) -> bool:
        return self.family != "topological"

    @property
    def is_normalized(self) -> bool:
        return self.mass is not None

    def shape(self, r) -> np.ndarray:
        """Unscaled radial profile (for topological kernels: the radial prefactor)."""
        r = np.asarray(r, dtype=float)
        fam = self.family
        if fam == "fat_tail":
            return (1.0 + r * r) ** (-0.5 * self.theta)
        if fam == "indicator":
            return np.where(r <= self.radius, 1.0, 0.0)
        if fam == "increasing_compact":
            return np.where(r <= self.radius, r / self.radius, 0.0)
        if fam == "constant":
            return np.ones_like(r)
        if fam == "tabulated":
            rr, vv = self.table
            return np.where(r <= rr[-1], np.interp(r, rr, vv), 0.0)
        # topological radial prefactor
        s = self.beta - self.gamma
        inside = r <= self.radius
        if s == 0.0:
            return np.where(inside, 1.0, 0.0)
        with np.errstate(divide="ignore"):
            return np.where(inside, r ** (-s), 0.0)

    def profile(self, r) -> np.ndarray:
        return self.amplitude * self.shape(r)


# ---------------------------------------------------------------------------
# distances
# ---------------------------------------------------------------------------

def _check_dim(a: np.ndarray, domain: DomainSpec) -> None:
    if a.shape[-1] != domain.dim:
        raise ValueError(f"point dimension {a.shape[-1]} does not match domain dimension {domain.dim}")


def _as_points(x, domain: DomainSpec) -> np.ndarray:
    a = np.asarray(x, dtype=float)
    if a.ndim == 0:
        a = a.reshape(1)
    _check_dim(a, domain)
    return a


def displacement(a, b, domain: DomainSpec) -> np.ndarray:
    """Minimum-image displacement a - b (broadcasting over leading axes)."""
    d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    if domain.is_torus:
        L = domain.period
        d = d - L * np.round(d / L)
    return d


def periodic_distance(x, xp, domain: DomainSpec) -> float:
    """Euclidean distance in free space, minimum-image distance on the torus."""
    a = _as_points(x, domain)
    b = _as_points(xp, domain)
    d = displacement(a, b, domain)
    return float(np.sqrt(np.sum(d * d)))


def pairwise_distances(positions: np.ndarray, domain: DomainSpec) -> np.ndarray:
    x = np.asarray(positions, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    _check_dim(x, domain)
    d = displacement(x[:, None, :], x[None, :, :], domain)
    return np.sqrt(np.sum(d * d, axis=-1))


# ---------------------------------------------------------------------------
# topological crowd count
# ---------------------------------------------------------------------------

def _region_members(positions: np.ndarray, x: np.ndarray, xp: np.ndarray, domain: DomainSpec) -> np.ndarray:
    """Boolean mask of agents inside the closed region C(x, x')."""
    scale = domain.period if domain.is_torus else max(1.0, float(np.max(np.abs(positions))) if positions.size else 1.0)
    eps = 1e-12 * scale
    if domain.dim == 1:
        p = positions[:, 0]
        if not domain.is_torus:
            lo, hi = min(x[0], xp[0]), max(x[0], xp[0])
            return (p >= lo - eps) & (p <= hi + eps)
        L = domain.period
        d = float(displacement(xp, x, domain)[0])
        if d >= 0:
            start, length = x[0], d
        else:
            start, length = xp[0], -d
        off = np.mod(p - start, L)
        return (off <= length + eps) | (off >= L - eps)
    # ball of diameter |x - x'| centred at the midpoint
    d = displacement(xp, x, domain)
    mid = x + 0.5 * d
    rad = 0.5 * float(np.sqrt(np.sum(d * d)))
    off = displacement(positions, mid, domain)
    return np.sqrt(np.sum(off * off, axis=-1)) <= rad + eps


def mu_topological(positions, x, xp, domain: DomainSpec) -> float:
    """Fraction of agents inside the communication region between x and x'."""
    pos = np.asarray(positions, dtype=float)
    if pos.ndim == 1:
        pos = pos[:, None]
    if pos.shape[0] == 0:
        raise ValueError("empty ensemble")
    _check_dim(pos, domain)
    a = _as_points(x, domain)
    b = _as_points(xp, domain)
    return float(np.count_nonzero(_region_members(pos, a, b, domain))) / pos.shape[0]


def mu_matrix(positions: np.ndarray, domain: DomainSpec) -> np.ndarray:
    """Symmetric N x N matrix of crowd fractions mu(x_i, x_j)."""
    pos = np.asarray(positions, dtype=float)
    if pos.ndim == 1:
        pos = pos[:, None]
    n = pos.shape[0]
    mu = np.zeros((n, n))
    for i in range(n):
        mu[i, i] = np.count_nonzero(_region_members(pos, pos[i], pos[i], domain)) / n
        for j in range(i + 1, n):
            mu[i, j] = mu[j, i] = np.count_nonzero(_region_members(pos, pos[i], pos[j], domain)) / n
    return mu


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

def eval_kernel(spec: KernelSpec, x, xp, domain: DomainSpec, positions=None) -> float:
    """phi(x, x').  Topological kernels need the ensemble ``positions``."""
    r = periodic_distance(x, xp, domain)
    value = float(spec.profile(r))
    if spec.family == "topological":
        if positions is None:
            raise KernelError("topological kernels need the ensemble positions")
        if r == 0.0 and spec.beta > spec.gamma:
            raise KernelError("topological kernel is singular at coincident points")
        if value == 0.0:
            return 0.0
        value *= mu_topological(positions, x, xp, domain) ** (-spec.gamma)
    return value


def interaction_matrix(spec: KernelSpec, positions, domain: DomainSpec) -> np.ndarray:
    """phi(x_i, x_j) for all pairs with a zero diagonal; exactly symmetric."""
    pos = np.asarray(positions, dtype=float)
    if pos.ndim == 1:
        pos = pos[:, None]
    r = pairwise_distances(pos, domain)
    n = r.shape[0]
    off = ~np.eye(n, dtype=bool)
    if spec.family == "topological" and spec.beta > spec.gamma and np.any(r[off] == 0.0):
        raise KernelError("topological kernel is singular at coincident agents")
    with np.errstate(divide="ignore"):
        phi = spec.profile(np.where(off, r, 1.0))
    if spec.family == "topological" and spec.gamma > 0:
        phi = phi * mu_matrix(pos, domain) ** (-spec.gamma)
    phi[~off] = 0.0
    iu = np.triu_indices(n, 1)
    phi.T[iu] = phi[iu]
    return phi


# ---------------------------------------------------------------------------
# normalization
# ---------------------------------------------------------------------------

def _gauss_legendre_cell(L: float, dim: int, panels: int = 16, order: int = 16):
    """Composite Gauss-Legendre nodes/weights on [-L/2, L/2]."""
    g, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(-0.5 * L, 0.5 * L, panels + 1)
    half = 0.5 * np.diff(edges)
    mids = 0.5 * (edges[:-1] + edges[1:])
    nodes = (mids[:, None] + half[:, None] * g[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


def shape_knots(spec: KernelSpec) -> list[float]:
    """Radii where the radial profile may jump or kink (support end included)."""
    knots = set()
    if spec.family == "tabulated":
        knots.update(float(r) for r in spec.table[0] if r > 0)
    R = spec.support_radius
    if math.isfinite(R) and R > 0:
        knots.add(float(R))
    return sorted(knots)


def polar_cell_nodes(L: float, knots=(), omega_max: float = 0.0, order: int = 20):
    """Nodes (a, b) and weights on the octant 0 <= b <= a <= L/2 of the square cell.

    The octant is swept in polar coordinates; angular panels break where
    the cell edge crosses a knot and radial panels break at every knot, so a
    radial profile that is smooth between knots is integrated to full order.
    For radial f, int over the cell of f(|x|) dx = 8 sum w f(sqrt(a^2 + b^2)).
    ``omega_max`` sets the panel density for oscillatory weights cos(k.x).
    """
    half = 0.5 * L
    g, gw = np.polynomial.legendre.leggauss(order)
    span = lambda length: max(1, int(math.ceil(length * max(omega_max, 1.0) / 6.0)))
    tb = {0.0, 0.25 * math.pi}
    for q in knots:
        if half < q < half * math.sqrt(2.0):
            tb.add(math.acos(half / q))
    tb = sorted(tb)
    A, B, W = [], [], []
    for t0, t1 in zip(tb, tb[1:]):
        m = span(half * math.sqrt(2.0) * (t1 - t0))
        e = np.linspace(t0, t1, m + 1)
        th = ((0.5 * (e[:-1] + e[1:]))[:, None] + 0.5 * np.diff(e)[:, None] * g).ravel()
        thw = (0.5 * np.diff(e)[:, None] * gw).ravel()
        for t, wt in zip(th, thw):
            rmax = half / math.cos(t)
            rb = [0.0] + [q for q in knots if 0.0 < q < rmax] + [rmax]
            for r0, r1 in zip(rb, rb[1:]):
                k = span(r1 - r0)
                e2 = np.linspace(r0, r1, k + 1)
                r = ((0.5 * (e2[:-1] + e2[1:]))[:, None] + 0.5 * np.diff(e2)[:, None] * g).ravel()
                wr = (0.5 * np.diff(e2)[:, None] * gw).ravel()
                A.append(r * math.cos(t))
                B.append(r * math.sin(t))
                W.append(wt * wr * r)
    return np.concatenate(A), np.concatenate(B), np.concatenate(W)


def _radial_moment(shape: Callable, r_max: float, dim: int, breaks=()) -> float:
    """S_{d-1} * int_0^{r_max} shape(r) r^{d-1} dr by adaptive quadrature."""
    pts = sorted({b for b in breaks if 0.0 < b < r_max})
    f = lambda r: float(shape(r)) * r ** (dim - 1)
    val, _ = integrate.quad(f, 0.0, r_max, points=pts or None, limit=400, epsabs=1e-15, epsrel=1e-13)
    return SPHERE_AREA[dim] * val


def _tabulated_moment(table, dim: int, r_cut: float = math.inf) -> float:
    """Exact radial moment of a piecewise-linear profile truncated at r_cut."""
    rr, vv = table
    total = 0.0
    for (a, fa), (b, fb) in zip(zip(rr, vv), zip(rr[1:], vv[1:])):
        if a >= r_cut:
            break
        slope = (fb - fa) / (b - a)
        b_eff = min(b, r_cut)
        # int_a^b (fa + slope (r - a)) r^{d-1} dr
        c0 = fa - slope * a
        total += c0 * (b_eff ** dim - a ** dim) / dim + slope * (b_eff ** (dim + 1) - a ** (dim + 1)) / (dim + 1)
    return SPHERE_AREA[dim] * total


def _shape_mass(spec: KernelSpec, domain: DomainSpec) -> float:
    d = domain.dim
    R = spec.support_radius
    fam = spec.family
    if not domain.is_torus:
        if math.isinf(R):
            if fam == "fat_tail" and spec.theta > d:
                return _radial_moment(spec.shape, math.inf, d)
            raise KernelError(f"{fam} kernel is not integrable on R^{d}")
        r_lim = R
        half = math.inf
    else:
        half = 0.5 * domain.period
        r_lim = R
    if fam == "constant":
        return domain.volume
    if R <= half:
        if fam == "indicator":
            return SPHERE_AREA[d] * R ** d / d
        if fam == "increasing_compact":
            return SPHERE_AREA[d] * R ** d / (d + 1)
        if fam == "topological":
            s = spec.beta - spec.gamma
            if s >= d:
                raise KernelError("topological radial factor is not integrable (beta - gamma >= d)")
            return SPHERE_AREA[d] * R ** (d - s) / (d - s)
        if fam == "tabulated":
            return _tabulated_moment(spec.table, d)
        return _radial_moment(spec.shape, r_lim, d)
    # support reaches past the inscribed ball of the torus cell
    if d == 1:
        if fam == "tabulated":
            return _tabulated_moment(spec.table, 1, half)
        breaks = spec.table[0] if fam == "tabulated" else (R,)
        return _radial_moment(spec.shape, half, 1, breaks)
    if fam == "topological":
        raise KernelError("topological radius must not exceed half the period on the torus")
    if d == 2:
        a, b, w = polar_cell_nodes(domain.period, shape_knots(spec))
        return 8.0 * float(np.sum(w * spec.shape(np.hypot(a, b))))
    nodes, weights = _gauss_legendre_cell(domain.period, d)
    grids = np.meshgrid(*([nodes] * d), indexing="ij")
    r = np.sqrt(sum(g * g for g in grids))
    w = weights
    for _ in range(d - 1):
        w = np.multiply.outer(w, weights)
    return float(np.sum(w * spec.shape(r)))


@lru_cache(maxsize=256)
def kernel_mass(spec: KernelSpec, domain: DomainSpec) -> float:
    """Mass of the *unscaled* shape, int_Omega shape(|x|) dx (cached)."""
    spec = replace(spec, amplitude=1.0, mass=None)
    return _shape_mass(spec, domain)


def normalize_kernel(spec: KernelSpec, domain: DomainSpec) -> KernelSpec:
    """Return a copy with amplitude 1/mass so that the kernel has unit mass on ``domain``."""
    m = kernel_mass(spec, domain)
    if not (m > 0 and math.isfinite(m)):
        raise KernelError(f"kernel has zero or non-finite mass {m!r} on {domain}")
    return replace(spec, amplitude=1.0 / m, mass=m)


def profile_variation(spec: KernelSpec, r_max: float) -> float:
    """Total variation of the scaled radial profile on [0, r_max], jumps included.

    A drop to zero at the end of the support counts when the support ends
    strictly inside [0, r_max].
    """
    a = spec.amplitude
    R = spec.support_radius
    fam = spec.family
    inside = R < r_max
    if fam == "constant":
        return 0.0
    if fam == "fat_tail":
        return a * (1.0 - float(spec.shape(r_max)))
    if fam == "indicator":
        return a if inside else 0.0
    if fam == "increasing_compact":
        top = min(R, r_max) / R
        return a * (top + (1.0 if inside else 0.0))
    if fam == "tabulated":
        rr, vv = spec.table
        knots = [r for r in rr if r < r_max] + ([r_max] if r_max < rr[-1] else [])
        vals = [float(spec.shape(r)) for r in knots]
        var = sum(abs(b - c) for b, c in zip(vals, vals[1:]))
        if inside:
            var += vv[-1]
        return a * var
    s = spec.beta - spec.gamma
    if s > 0:
        return math.inf
    return a if inside else 0.0


# ---------------------------------------------------------------------------
# matrix-valued kernels
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RadialPotential:
    """Radial potential U(r) with its first two derivatives."""

    name: str
    U: Callable[[float], float]
    dU: Callable[[float], float]
    d2U: Callable[[float], float]

    @classmethod
    def power(cls, p: float) -> "RadialPotential":
        if p < 2:
            raise ValueError("power potentials r^p/p need p >= 2 to be twice differentiable at 0")
        return cls(f"r^{p:g}/{p:g}", lambda r: r ** p / p, lambda r: r ** (p - 1), lambda r: (p - 1) * r ** (p - 2))

    @classmethod
    def quadratic(cls) -> "RadialPotential":
        return cls("r^2/2", lambda r: 0.5 * r * r, lambda r: r, lambda r: 1.0)

    @classmethod
    def zero(cls) -> "RadialPotential":
        return cls("zero", lambda r: 0.0, lambda r: 0.0, lambda r: 0.0)


@dataclass(frozen=True)
class MatrixKernelSpec:
    """Anticipation-type matrix kernel.

    With ``scalar`` unset the alignment matrix is the Hessian of U(|x - x'|);
    with ``scalar`` set it is phi(x, x') * Identity.
    """

    potential: RadialPotential
    amplitude: float = 1.0
    scalar: KernelSpec | None = None

    def __post_init__(self):
        if not self.amplitude > 0:
            raise ValueError("amplitude must be positive")


def potential_hessian(potential: RadialPotential, z: np.ndarray) -> np.ndarray:
    """Hessian of x -> U(|x|) at displacement z."""
    z = np.atleast_1d(np.asarray(z, dtype=float))
    d = z.size
    r = float(np.sqrt(np.dot(z, z)))
    if d == 1:
        return np.array([[float(potential.d2U(r))]])
    if r == 0.0:
        if float(potential.dU(0.0)) != 0.0:
            raise ValueError("potential is not twice differentiable at r = 0 (U'(0) != 0)")
        return float(potential.d2U(0.0)) * np.eye(d)
    e = z / r
    outer = np.outer(e, e)
    return float(potential.d2U(r)) * outer + float(potential.dU(r)) / r * (np.eye(d) - outer)


def matrix_kernel_eval(spec: MatrixKernelSpec, x, xp, domain: DomainSpec | None = None) -> np.ndarray:
    """Pairwise alignment matrix Phi(x, x'), symmetric in its arguments."""
    a = np.atleast_1d(np.asarray(x, dtype=float))
    b = np.atleast_1d(np.asarray(xp, dtype=float))
    if a.shape != b.shape:
        raise ValueError("point dimensions differ")
    dom = domain if domain is not None else DomainSpec.free(a.size)
    if spec.scalar is not None:
        return eval_kernel(spec.scalar, a, b, dom) * np.eye(a.size)
    z = displacement(a, b, dom)
    H = potential_hessian(spec.potential, z)
    return 0.5 * (H + H.T)
