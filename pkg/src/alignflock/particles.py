"""Discrete Cucker-Smale dynamics and its three-zone (anticipation) extension.

    x_i' = v_i
    v_i' = (tau/N) sum_j phi_ij (v_j - v_i)                      (alignment)
           - (1/N) sum_j grad U(|x_j - x_i|)                     (three-zone only)
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import (
    DomainSpec,
    KernelSpec,
    MatrixKernelSpec,
    displacement,
    interaction_matrix,
    pairwise_distances,
)
from .records import BlowUpDetected, EnergyTrace, read_csv, write_csv

VELOCITY_CAP = 1e8


@dataclass
class ParticleEnsemble:
    positions: np.ndarray
    velocities: np.ndarray
    domain: DomainSpec

    def __post_init__(self):
        x = np.asarray(self.positions, dtype=float)
        v = np.asarray(self.velocities, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if v.ndim == 1:
            v = v[:, None]
        if x.shape != v.shape:
            raise ValueError(f"positions {x.shape} and velocities {v.shape} differ in shape")
        if x.shape[0] < 1:
            raise ValueError("ensemble needs at least one agent")
        if x.shape[1] != self.domain.dim:
            raise ValueError("agent dimension does not match the domain")
        self.positions = self.domain.wrap(x)
        self.velocities = v

    @property
    def N(self) -> int:
        return self.positions.shape[0]

    def copy(self) -> "ParticleEnsemble":
        return ParticleEnsemble(self.positions.copy(), self.velocities.copy(), self.domain)


@dataclass
class SimConfig:
    tau: float = 1.0
    dt: float = 1e-2
    t_end: float = 1.0
    integrator: str = "rk4"
    record_every: int = 1
    track_fiedler: bool = False
    method: str = "direct"

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.t_end >= 0:
            raise ValueError("t_end must be non-negative")
        if self.integrator not in ("rk4", "euler"):
            raise ValueError(f"unknown integrator {self.integrator!r}")
        if self.record_every < 1:
            raise ValueError("record_every must be >= 1")
        if self.method not in ("direct", "cells"):
            raise ValueError(f"unknown force method {self.method!r}")


@dataclass
class SimResult:
    trace: EnergyTrace
    times: list = field(default_factory=list)
    positions: list = field(default_factory=list)
    velocities: list = field(default_factory=list)
    final: ParticleEnsemble | None = None


# ---------------------------------------------------------------------------
# neighbour search
# ---------------------------------------------------------------------------

def cell_list_pairs(positions: np.ndarray, cutoff: float, domain: DomainSpec):
    """Index pairs (i < j) with separation <= cutoff, found with a cell list.

    Falls back to all pairs when the box holds fewer than three cells per axis.
    """
    x = np.asarray(positions, dtype=float)
    n, d = x.shape
    if domain.is_torus:
        ncell = int(math.floor(domain.period / cutoff))
        if ncell < 3:
            i, j = np.triu_indices(n, 1)
            return i, j
        size = domain.period / ncell
        idx = np.minimum((x / size).astype(int), ncell - 1)
        shape = (ncell,) * d
    else:
        lo = x.min(axis=0)
        idx = ((x - lo) / cutoff).astype(int)
        shape = tuple(int(m) + 1 for m in idx.max(axis=0))
    flat = np.ravel_multi_index(idx.T, shape)
    order = np.argsort(flat, kind="stable")
    sorted_flat = flat[order]
    starts = np.searchsorted(sorted_flat, np.arange(int(np.prod(shape))), side="left")
    ends = np.searchsorted(sorted_flat, np.arange(int(np.prod(shape))), side="right")
    offsets = np.array(np.meshgrid(*([[-1, 0, 1]] * d), indexing="ij")).reshape(d, -1).T
    ii, jj = [], []
    for c in np.unique(flat):
        members = order[starts[c]:ends[c]]
        cidx = np.array(np.unravel_index(c, shape))
        for off in offsets:
            nb = cidx + off
            if domain.is_torus:
                nb = np.mod(nb, shape)
            elif np.any(nb < 0) or np.any(nb >= shape):
                continue
            c2 = np.ravel_multi_index(tuple(nb), shape)
            others = order[starts[c2]:ends[c2]]
            if others.size == 0:
                continue
            a, b = np.meshgrid(members, others, indexing="ij")
            keep = a < b
            ii.append(a[keep])
            jj.append(b[keep])
    if not ii:
        return np.zeros(0, int), np.zeros(0, int)
    i = np.concatenate(ii)
    j = np.concatenate(jj)
    dvec = displacement(x[i], x[j], domain)
    close = np.sqrt(np.sum(dvec * dvec, axis=1)) <= cutoff
    i, j = i[close], j[close]
    # fixed pair order keeps the scatter-add deterministic
    o = np.lexsort((j, i))
    return i[o], j[o]


# ---------------------------------------------------------------------------
# right-hand sides
# ---------------------------------------------------------------------------

def cs_rhs(ensemble: ParticleEnsemble, kernel: KernelSpec, tau: float = 1.0, method: str = "direct") -> np.ndarray:
    """Cucker-Smale accelerations a_i = (tau/N) sum_j phi_ij (v_j - v_i).

    ``method="cells"`` restricts the pair sum to cell-list neighbours and is
    only valid for compactly supported radial kernels.
    """
    return _cs_accel(ensemble.positions, ensemble.velocities, ensemble.domain, kernel, tau, method)


def _cs_accel(x, v, domain, kernel, tau, method="direct"):
    n = x.shape[0]
    if method == "cells":
        R = kernel.support_radius
        if math.isinf(R) or kernel.family == "topological":
            raise ValueError("cell lists need a compactly supported radial kernel")
        i, j = cell_list_pairs(x, R, domain)
        dv = displacement(x[i], x[j], domain)
        phi = kernel.profile(np.sqrt(np.sum(dv * dv, axis=1)))
        flux = phi[:, None] * (v[j] - v[i])
        acc = np.zeros_like(v)
        np.add.at(acc, i, flux)
        np.add.at(acc, j, -flux)
        return (tau / n) * acc
    phi = interaction_matrix(kernel, x, domain)
    # diff[i, j] = v_j - v_i is exactly antisymmetric, phi exactly symmetric
    diff = v[None, :, :] - v[:, None, :]
    return (tau / n) * np.sum(phi[:, :, None] * diff, axis=1)


def _radial(f, r):
    return np.broadcast_to(np.asarray(f(r), dtype=float), r.shape)


def three_zone_rhs(ensemble: ParticleEnsemble, mkernel: MatrixKernelSpec) -> np.ndarray:
    """Matrix-kernel alignment plus pairwise potential forcing."""
    return _three_zone_accel(ensemble.positions, ensemble.velocities, ensemble.domain, mkernel)


def _three_zone_accel(x, v, domain, mkernel):
    n, d = x.shape
    tau = mkernel.amplitude
    if mkernel.scalar is not None:
        align = _cs_accel(x, v, domain, mkernel.scalar, tau)
    else:
        align = np.zeros_like(v)
    pot = mkernel.potential
    z = displacement(x[:, None, :], x[None, :, :], domain)  # x_i - x_j
    r = np.sqrt(np.sum(z * z, axis=-1))
    off = ~np.eye(n, dtype=bool)
    coincident = off & (r == 0.0)
    dU0 = float(np.asarray(pot.dU(0.0)))
    if np.any(coincident) and dU0 != 0.0:
        raise ValueError("agents sit at a non-smooth point of the potential (r = 0, U'(0) != 0)")
    safe_r = np.where(r > 0.0, r, 1.0)
    e = np.where((r > 0.0)[..., None], z / safe_r[..., None], 0.0)
    dU = _radial(pot.dU, r)
    if mkernel.scalar is None:
        w = v[None, :, :] - v[:, None, :]
        d2U = _radial(pot.d2U, r)
        if d == 1:
            Hw = d2U[..., None] * w
        else:
            ew = np.sum(e * w, axis=-1)
            # Hessian of U(|z|): U'' e e^T + (U'/r)(I - e e^T); at r = 0 it is U''(0) I
            transverse = np.where(r > 0.0, dU / safe_r, d2U)
            Hw = d2U[..., None] * e * ew[..., None] + transverse[..., None] * (w - e * ew[..., None])
        Hw[~off] = 0.0
        align = (tau / n) * np.sum(Hw, axis=1)
    force = dU[..., None] * e
    force[~off] = 0.0
    return align - np.sum(force, axis=1) / n


# ---------------------------------------------------------------------------
# diagnostics
# ---------------------------------------------------------------------------

def energy_fluctuation(ensemble_or_v) -> float:
    """(1/N^2) sum_ij |v_i - v_j|^2, evaluated as (2/N) sum_i |v_i - vbar|^2."""
    v = ensemble_or_v.velocities if isinstance(ensemble_or_v, ParticleEnsemble) else np.asarray(ensemble_or_v, float)
    if v.ndim == 1:
        v = v[:, None]
    dv = v - v.mean(axis=0)
    return 2.0 * float(np.sum(dv * dv)) / v.shape[0]


def flock_diameter(ensemble: ParticleEnsemble) -> tuple[float, float]:
    """(max pairwise position distance, max pairwise velocity distance)."""
    if ensemble.N == 1:
        return 0.0, 0.0
    D = float(np.max(pairwise_distances(ensemble.positions, ensemble.domain)))
    v = ensemble.velocities
    dv = v[:, None, :] - v[None, :, :]
    V = float(np.sqrt(np.max(np.sum(dv * dv, axis=-1))))
    return D, V


def momentum(ensemble: ParticleEnsemble) -> np.ndarray:
    return ensemble.velocities.sum(axis=0)


def fat_tail_functional(trace: EnergyTrace, tau: float, theta: float):
    """H(t) = tau <D>^(1-theta) + (1-theta) V(t) and the diameter bound it implies.

    Returns (H series, D_plus) where D_plus solves tau <D_plus>^(1-theta) = H(0).
    Valid in 1D (V is then the single velocity-component diameter).
    """
    if not 0 < theta < 1:
        raise ValueError("the functional needs 0 < theta < 1")
    D = np.asarray(trace.diameter)
    V = np.asarray(trace.velocity_diameter)
    H = tau * (1.0 + D * D) ** (0.5 * (1.0 - theta)) + (1.0 - theta) * V
    bracket = (H[0] / tau) ** (1.0 / (1.0 - theta))
    D_plus = math.sqrt(max(bracket * bracket - 1.0, 0.0))
    return H, D_plus


# ---------------------------------------------------------------------------
# integration
# ---------------------------------------------------------------------------

def _accel(x, v, domain, kernel, tau: float, method: str) -> np.ndarray:
    if isinstance(kernel, MatrixKernelSpec):
        return _three_zone_accel(x, v, domain, kernel)
    return _cs_accel(x, v, domain, kernel, tau, method)


def _check_state(x, v, t, trace):
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(v))):
        raise BlowUpDetected("non-finite particle state", t, trace=trace)
    speed = np.sqrt(np.sum(v * v, axis=1))
    k = int(np.argmax(speed))
    if speed[k] > VELOCITY_CAP:
        raise BlowUpDetected(f"agent {k} speed {speed[k]:.3g} exceeds cap", t, location=x[k].copy(),
                             value=float(speed[k]), trace=trace)


def step(ensemble: ParticleEnsemble, kernel, tau: float, dt: float, integrator: str = "rk4",
         method: str = "direct") -> ParticleEnsemble:
    """Advance one step; positions are wrapped into the fundamental cell afterwards."""
    dom = ensemble.domain
    x0, v0 = ensemble.positions, ensemble.velocities

    def f(x, v):
        return v, _accel(x, v, dom, kernel, tau, method)

    if integrator == "euler":
        dx, dv = f(x0, v0)
        x1, v1 = x0 + dt * dx, v0 + dt * dv
    else:
        k1x, k1v = f(x0, v0)
        k2x, k2v = f(x0 + 0.5 * dt * k1x, v0 + 0.5 * dt * k1v)
        k3x, k3v = f(x0 + 0.5 * dt * k2x, v0 + 0.5 * dt * k2v)
        k4x, k4v = f(x0 + dt * k3x, v0 + dt * k3v)
        x1 = x0 + (dt / 6.0) * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
        v1 = v0 + (dt / 6.0) * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
    return ParticleEnsemble(x1, v1, dom)


def simulate(ensemble: ParticleEnsemble, kernel, config: SimConfig, keep_states: bool = True) -> SimResult:
    """Integrate to ``config.t_end`` recording diagnostics every ``record_every`` steps.

    ``kernel`` is a scalar :class:`KernelSpec` (Cucker-Smale) or a
    :class:`MatrixKernelSpec` (three-zone).  Raises :class:`BlowUpDetected`
    with the partial trace attached if the state leaves the finite regime.
    """
    from .graph import adjacency, fiedler, graph_laplacian

    trace = EnergyTrace()
    result = SimResult(trace)
    ens = ensemble.copy()
    n_steps = int(math.ceil(config.t_end / config.dt - 1e-9)) if config.t_end > 0 else 0

    def record(t, e):
        D, V = flock_diameter(e)
        lam2 = None
        if config.track_fiedler:
            scalar = kernel.scalar if isinstance(kernel, MatrixKernelSpec) else kernel
            if scalar is None:
                raise ValueError("Fiedler tracking needs a scalar kernel")
            lam2 = fiedler(graph_laplacian(adjacency(e, scalar))).lambda2
        trace.append(t, energy_fluctuation(e), D, V, lam2)
        if keep_states:
            result.times.append(t)
            result.positions.append(e.positions.copy())
            result.velocities.append(e.velocities.copy())

    record(0.0, ens)
    for k in range(1, n_steps + 1):
        t_prev = (k - 1) * config.dt
        t_next = min(k * config.dt, config.t_end)
        ens = step(ens, kernel, config.tau, t_next - t_prev, config.integrator, config.method)
        _check_state(ens.positions, ens.velocities, t_next, trace)
        if k % config.record_every == 0 or k == n_steps:
            record(t_next, ens)
    result.final = ens
    return result


# ---------------------------------------------------------------------------
# CSV exchange
# ---------------------------------------------------------------------------

def save_ensemble_csv(ensemble: ParticleEnsemble, path):
    d = ensemble.domain.dim
    header = [f"x_{k + 1}" for k in range(d)] + [f"v_{k + 1}" for k in range(d)]
    return write_csv(path, header, np.hstack([ensemble.positions, ensemble.velocities]))


def load_ensemble_csv(path, domain: DomainSpec) -> ParticleEnsemble:
    header, data = read_csv(path)
    d = domain.dim
    want_x = [f"x_{k + 1}" for k in range(d)]
    want_v = [f"v_{k + 1}" for k in range(d)]
    missing = [c for c in want_x + want_v if c not in header]
    if missing:
        raise ValueError(f"{path}: missing columns {missing}")
    xi = [header.index(c) for c in want_x]
    vi = [header.index(c) for c in want_v]
    return ParticleEnsemble(data[:, xi], data[:, vi], domain)
