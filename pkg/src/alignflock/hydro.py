"""Pressureless Euler-alignment system on the periodic torus.

    rho_t + div(rho u) = 0
    (rho u)_t + div(rho u (x) u) = tau rho [phi*(rho u) - u phi*rho]

First-order finite volumes with the local Lax-Friedrichs (Rusanov) flux in
conserved variables (rho, m = rho u), Heun time stepping, and the alignment
term as a source inside each stage.  Convolutions are periodic FFT products
with the grid kernel of ``fourier.spectral_kernel_weights``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .fourier import spectral_kernel_weights
from .geometry import DomainSpec, KernelError, KernelSpec
from .records import BlowUpDetected, write_csv

VACUUM_FRACTION = 1e-14


@dataclass
class FieldState:
    """Density rho with shape (n,)*d and velocity u with shape (d,) + (n,)*d."""

    rho: np.ndarray
    u: np.ndarray
    domain: DomainSpec
    time: float = 0.0

    def __post_init__(self):
        if not self.domain.is_torus:
            raise KernelError("hydrodynamic fields live on the torus")
        d = self.domain.dim
        self.rho = np.asarray(self.rho, dtype=float)
        u = np.asarray(self.u, dtype=float)
        if d == 1 and u.shape == self.rho.shape:
            u = u[None, :]
        if self.rho.ndim != d or len(set(self.rho.shape)) != 1:
            raise ValueError("rho must be an n^d grid field")
        if u.shape != (d,) + self.rho.shape:
            raise ValueError(f"u must have shape {(d,) + self.rho.shape}")
        if np.any(self.rho < 0):
            raise ValueError("density must be non-negative")
        self.u = u

    @property
    def n(self) -> int:
        return self.rho.shape[0]

    @property
    def h(self) -> float:
        return self.domain.period / self.n

    @property
    def cell_volume(self) -> float:
        return self.h ** self.domain.dim

    @property
    def m(self) -> np.ndarray:
        return self.rho[None] * self.u

    def mass(self) -> float:
        return float(np.sum(self.rho)) * self.cell_volume

    def momentum(self) -> np.ndarray:
        return np.sum(self.m.reshape(self.domain.dim, -1), axis=1) * self.cell_volume

    def coordinates(self) -> list[np.ndarray]:
        x = (np.arange(self.n) + 0.5) * self.h
        return np.meshgrid(*([x] * self.domain.dim), indexing="ij")

    def copy(self) -> "FieldState":
        return FieldState(self.rho.copy(), self.u.copy(), self.domain, self.time)


@dataclass
class HydroConfig:
    """Solver parameters.

    ``record_dt`` is the time between trace samples; steps are shortened to
    land on every sample time.  ``blowup_gradient_cap`` is either a number or
    ``"auto"`` (see ``gradient_cap``).
    """

    tau: float = 1.0
    cfl: float = 0.45
    t_end: float = 1.0
    blowup_gradient_cap: float | str = "auto"
    record_dt: float = 0.1
    dt_max: float = 0.05
    kernel_mode: str = "spectral"
    keep_snapshots: bool = False
    cap_factor: float = 1e3
    resolution_fraction: float = 0.03
    floor_factor: float = 5.0

    def __post_init__(self):
        if not 0.0 < self.cfl < 1.0:
            raise ValueError("cfl must lie in (0, 1)")
        if not (self.tau >= 0 and self.t_end >= 0 and self.record_dt > 0 and self.dt_max > 0):
            raise ValueError("tau, t_end must be >= 0; record_dt, dt_max must be > 0")
        if self.blowup_gradient_cap != "auto" and not float(self.blowup_gradient_cap) > 0:
            raise ValueError("blowup_gradient_cap must be positive or 'auto'")


@dataclass
class ThresholdReport:
    times: list
    eta_min_series: list
    eta_c: float
    eta_c_averaged: float
    persists: bool
    tolerance: float
    blowup_time: float | None = None


@dataclass
class HydroResult:
    trace: dict
    final: FieldState
    snapshots: list = field(default_factory=list)
    steps: int = 0
    gradient_cap: float = math.inf
    max_gradient: float = 0.0

    def trace_csv(self, path):
        cols = list(self.trace.keys())
        rows = zip(*(self.trace[c] for c in cols))
        return write_csv(path, cols, rows)


# ---------------------------------------------------------------------------
# convolution and forces
# ---------------------------------------------------------------------------

@lru_cache(maxsize=64)
def _grid_kernel(kernel: KernelSpec, domain: DomainSpec, n: int, mode: str):
    K = spectral_kernel_weights(kernel, domain, n, mode)
    Khat = np.fft.fftn(K)
    K.setflags(write=False)
    Khat.setflags(write=False)
    return K, Khat


def grid_kernel(kernel: KernelSpec, domain: DomainSpec, n: int, mode: str = "spectral") -> np.ndarray:
    return _grid_kernel(kernel, domain, n, mode)[0]


def convolve_field(kernel: KernelSpec, domain: DomainSpec, f: np.ndarray, method: str = "fft",
                   mode: str = "spectral") -> np.ndarray:
    """(phi * f)(x_i) = sum_j K[i - j] f_j on the periodic grid; leading axes are batched."""
    d = domain.dim
    n = f.shape[-1]
    K, Khat = _grid_kernel(kernel, domain, n, mode)
    axes = tuple(range(f.ndim - d, f.ndim))
    if method == "fft":
        return np.real(np.fft.ifftn(np.fft.fftn(f, axes=axes) * Khat, axes=axes))
    if method == "direct":
        out = np.zeros_like(f, dtype=float)
        for idx in np.ndindex(*K.shape):
            w = K[idx]
            if w != 0.0:
                out += w * np.roll(f, shift=idx, axis=axes)
        return out
    raise ValueError(f"unknown convolution method {method!r}")


def convolve_density(kernel: KernelSpec, state: FieldState, method: str = "fft",
                     mode: str = "spectral") -> np.ndarray:
    """Averaged density phi * rho on the grid."""
    return convolve_field(kernel, state.domain, state.rho, method, mode)


def _alignment_source(rho, m, kernel, domain, tau, mode):
    prho = convolve_field(kernel, domain, rho, mode=mode)
    pm = convolve_field(kernel, domain, m, mode=mode)
    return tau * (rho[None] * pm - m * prho[None]), prho


def alignment_force(state: FieldState, kernel: KernelSpec, tau: float = 1.0, mode: str = "spectral") -> np.ndarray:
    """tau rho [phi*(rho u) - u phi*rho], shape (d,) + grid."""
    return _alignment_source(state.rho, state.m, kernel, state.domain, tau, mode)[0]


# ---------------------------------------------------------------------------
# derivatives, thresholds, fluctuation
# ---------------------------------------------------------------------------

def _ddx(f: np.ndarray, axis: int, h: float) -> np.ndarray:
    return (np.roll(f, -1, axis=axis) - np.roll(f, 1, axis=axis)) / (2.0 * h)


def velocity_gradient(state: FieldState) -> np.ndarray:
    """Central-difference Jacobian J[i, j] = d u_i / d x_j, shape (d, d) + grid."""
    d = state.domain.dim
    return np.stack([np.stack([_ddx(state.u[i], j, state.h) for j in range(d)]) for i in range(d)])


def lambda_min_sym(J: np.ndarray) -> np.ndarray:
    """Smallest eigenvalue of the symmetric part of a (d, d) + grid Jacobian field."""
    d = J.shape[0]
    if d == 1:
        return J[0, 0]
    if d == 2:
        a, dd = J[0, 0], J[1, 1]
        b = 0.5 * (J[0, 1] + J[1, 0])
        return 0.5 * (a + dd) - np.sqrt((0.5 * (a - dd)) ** 2 + b * b)
    S = 0.5 * (J + np.swapaxes(J, 0, 1))
    S = np.moveaxis(S, (0, 1), (-2, -1))
    return np.linalg.eigvalsh(S)[..., 0]


def eta_field(state: FieldState, kernel: KernelSpec, tau: float, mode: str = "spectral") -> np.ndarray:
    """lambda_min(sym grad u) + tau phi*rho; in 1D this is u_x + tau phi*rho."""
    return lambda_min_sym(velocity_gradient(state)) + tau * convolve_density(kernel, state, mode=mode)


def threshold_eta(state: FieldState, kernel: KernelSpec, tau: float, mode: str = "spectral") -> dict:
    """Minimum of the threshold quantity and the two readings of eta_c."""
    eta = eta_field(state, kernel, tau, mode)
    prho = convolve_density(kernel, state, mode=mode)
    i = np.unravel_index(int(np.argmin(eta)), eta.shape)
    return {
        "eta_min": float(eta[i]),
        "argmin": tuple(int(v) for v in i),
        "eta_c": 0.5 * float(np.min(state.rho)),
        "eta_c_averaged": 0.5 * float(np.min(prho)),
    }


def field_energy_fluctuation(state: FieldState) -> float:
    """(1/2) int rho |u - ubar|^2 with ubar = int rho u / m0."""
    m0 = state.mass()
    if not m0 > 0:
        raise ValueError("fluctuation undefined for vacuum total mass")
    dv = state.cell_volume
    ubar = state.momentum() / m0
    du = state.u - ubar.reshape((-1,) + (1,) * state.domain.dim)
    return 0.5 * float(np.sum(state.rho[None] * du * du)) * dv


def divergence(state: FieldState) -> np.ndarray:
    return sum(_ddx(state.u[j], j, state.h) for j in range(state.domain.dim))


def max_gradient(u: np.ndarray, h: float) -> tuple[float, tuple]:
    """max |forward difference| / h over all components and axes, with its location."""
    d = u.shape[0]
    best, loc = 0.0, (0,) * d
    for ax in range(d):
        g = np.abs(np.roll(u, -1, axis=ax + 1) - u) / h
        j = int(np.argmax(g))
        if g.flat[j] > best or not np.isfinite(g.flat[j]):
            best = float(g.flat[j])
            loc = np.unravel_index(j, g.shape)[1:]
            if not np.isfinite(best):
                break
    return best, tuple(int(v) for v in loc)


def gradient_cap(state: FieldState, kernel: KernelSpec, config: HydroConfig) -> float:
    """Blow-up sentinel level.

    A fixed multiple of the initial gradient can exceed what a first-order
    scheme resolves: a captured shock spreads over a few cells, so the
    discrete gradient saturates near osc(u)/h.  With g the initial gradient
    scale max(max|grad u0|, tau max phi*rho0), the automatic cap is
    min(cap_factor g, resolution_fraction osc(u0) / h), but never below
    floor_factor g.
    """
    if config.blowup_gradient_cap != "auto":
        return float(config.blowup_gradient_cap)
    g0, _ = max_gradient(state.u, state.h)
    prho = convolve_density(kernel, state, mode=config.kernel_mode)
    g_ref = max(g0, config.tau * float(np.max(prho)), 1e-300)
    cap = config.cap_factor * g_ref
    osc = float(np.max(state.u) - np.min(state.u))
    if osc > 0:
        cap = min(cap, config.resolution_fraction * osc / state.h)
    return max(cap, config.floor_factor * g_ref)


# ---------------------------------------------------------------------------
# stepping
# ---------------------------------------------------------------------------

def _velocity(rho, m, floor):
    wet = rho > floor
    return np.where(wet[None], m / np.where(wet, rho, 1.0)[None], 0.0)


def _rhs(rho, m, kernel, domain, tau, h, floor, mode):
    d = domain.dim
    u = _velocity(rho, m, floor)
    U = np.concatenate([rho[None], m])
    dU = np.zeros_like(U)
    for k in range(d):
        ax = k + 1
        uk = u[k]
        F = uk[None] * U
        UR = np.roll(U, -1, axis=ax)
        FR = np.roll(F, -1, axis=ax)
        a = np.maximum(np.abs(uk), np.abs(np.roll(uk, -1, axis=k)))
        flux = 0.5 * (F + FR) - 0.5 * a[None] * (UR - U)
        dU -= (flux - np.roll(flux, 1, axis=ax)) / h
    if tau != 0.0:
        src, _ = _alignment_source(rho, m, kernel, domain, tau, mode)
        dU[1:] += src
    return dU[0], dU[1:], u


def stable_dt(rho, m, kernel, domain, config: HydroConfig, h, floor) -> float:
    u = _velocity(rho, m, floor)
    d = domain.dim
    speed = float(np.max(np.abs(u))) if u.size else 0.0
    dt = config.dt_max
    if speed > 0:
        dt = min(dt, config.cfl * h / (d * speed))
    if config.tau > 0:
        K = grid_kernel(kernel, domain, rho.shape[0], config.kernel_mode)
        rate = config.tau * float(np.max(rho)) * 2.0 * float(np.sum(np.abs(K)))
        if rate > 0:
            dt = min(dt, config.cfl / rate)
    return dt


def _heun(rho, m, dt, kernel, domain, tau, h, floor, mode):
    r1, q1, _ = _rhs(rho, m, kernel, domain, tau, h, floor, mode)
    rho1 = rho + dt * r1
    m1 = m + dt * q1
    r2, q2, _ = _rhs(rho1, m1, kernel, domain, tau, h, floor, mode)
    return 0.5 * (rho + rho1 + dt * r2), 0.5 * (m + m1 + dt * q2)


def hydro_step(state: FieldState, kernel: KernelSpec, config: HydroConfig, dt: float | None = None) -> FieldState:
    """One Heun step of the finite-volume scheme (CFL-limited dt when not given)."""
    rho, m = state.rho, state.m
    floor = VACUUM_FRACTION * state.mass() / state.domain.volume
    if dt is None:
        dt = stable_dt(rho, m, kernel, state.domain, config, state.h, floor)
    rho, m = _heun(rho, m, dt, kernel, state.domain, config.tau, state.h, floor, config.kernel_mode)
    if not (np.all(np.isfinite(rho)) and np.all(np.isfinite(m))):
        raise BlowUpDetected("non-finite state", state.time + dt)
    return FieldState(np.maximum(rho, 0.0), _velocity(rho, m, floor), state.domain, state.time + dt)


def run_hydro(state: FieldState, kernel: KernelSpec, config: HydroConfig) -> HydroResult:
    """Integrate to ``config.t_end`` recording the trace every ``config.record_dt``.

    Raises BlowUpDetected (carrying the partial trace) when the velocity
    gradient passes the cap or the state stops being finite.
    """
    domain = state.domain
    d = domain.dim
    h = state.h
    dv = state.cell_volume
    rho = state.rho.copy()
    m = state.m.copy()
    m0 = float(np.sum(rho)) * dv
    floor = VACUUM_FRACTION * m0 / domain.volume
    cap = gradient_cap(state, kernel, config)
    cols = ["t", "deltaE", "rho_min", "rho_max", "eta_min", "mass"] + [f"momentum_{j + 1}" for j in range(d)]
    trace = {c: [] for c in cols}
    snapshots = []
    peak = 0.0

    def record(t, rho, m):
        st = FieldState(np.maximum(rho, 0.0), _velocity(rho, m, floor), domain, t)
        eta = eta_field(st, kernel, config.tau, config.kernel_mode)
        row = [t, field_energy_fluctuation(st), float(np.min(rho)), float(np.max(rho)),
               float(np.min(eta)), float(np.sum(rho)) * dv] + list(np.sum(m.reshape(d, -1), axis=1) * dv)
        for c, v in zip(cols, row):
            trace[c].append(float(v))
        if config.keep_snapshots:
            snapshots.append(st)

    t = float(state.time)
    t_end = t + config.t_end
    n_rec = max(1, int(round(config.t_end / config.record_dt)))
    rec_times = [t + min(config.t_end, (i + 1) * config.record_dt) for i in range(n_rec)]
    if rec_times[-1] < t_end:
        rec_times.append(t_end)
    record(t, rho, m)
    steps = 0
    ri = 0
    while ri < len(rec_times):
        target = rec_times[ri]
        dt = stable_dt(rho, m, kernel, domain, config, h, floor)
        if t + dt >= target - 1e-12 * max(1.0, abs(target)):
            dt = target - t
            land = True
        else:
            land = False
        if dt > 0:
            rho, m = _heun(rho, m, dt, kernel, domain, config.tau, h, floor, config.kernel_mode)
            steps += 1
        t = target if land else t + dt
        if not (np.all(np.isfinite(rho)) and np.all(np.isfinite(m))):
            raise BlowUpDetected("non-finite state", t, trace=trace)
        g, loc = max_gradient(_velocity(rho, m, floor), h)
        peak = max(peak, g)
        if g > cap:
            record(t, rho, m)
            x = tuple((i + 0.5) * h for i in loc)
            raise BlowUpDetected(f"velocity gradient {g:.6g} exceeds cap {cap:.6g}", t, location=x,
                                 value=g, trace=trace)
        if land:
            record(t, rho, m)
            ri += 1
    final = FieldState(np.maximum(rho, 0.0), _velocity(rho, m, floor), domain, t)
    return HydroResult(trace, final, snapshots, steps, cap, peak)


# ---------------------------------------------------------------------------
# 1D invariant, thresholds and certificates
# ---------------------------------------------------------------------------

def g_field_1d(state: FieldState, kernel: KernelSpec, tau: float, mode: str = "spectral") -> np.ndarray:
    """G = u_x + tau phi*rho; it obeys the continuity equation, so G/rho is constant along paths."""
    if state.domain.dim != 1:
        raise ValueError("the G invariant is one-dimensional")
    return _ddx(state.u[0], 0, state.h) + tau * convolve_density(kernel, state, mode=mode)


@dataclass
class InvariantReport:
    times: list
    integral: list
    min_g: list
    max_drift: float
    initially_nonnegative: bool
    stays_nonnegative: bool


def lagrangian_invariant_1d(states, kernel: KernelSpec, tau: float, mode: str = "spectral") -> InvariantReport:
    """int G over the torus and min G along a sequence of 1D states."""
    times, integ, mins = [], [], []
    for st in states:
        G = g_field_1d(st, kernel, tau, mode)
        times.append(st.time)
        integ.append(float(np.sum(G)) * st.h)
        mins.append(float(np.min(G)))
    drift = max(abs(v - integ[0]) for v in integ) if integ else 0.0
    return InvariantReport(times, integ, mins, drift, bool(mins and mins[0] >= 0),
                           bool(mins and min(mins) >= 0))


def threshold_report(trace: dict, eta_c: float, eta_c_averaged: float, rel_tol: float = 1e-2,
                     blowup_time: float | None = None) -> ThresholdReport:
    eta = trace["eta_min"]
    tol = rel_tol * eta_c
    return ThresholdReport(list(trace["t"]), list(eta), eta_c, eta_c_averaged,
                           bool(blowup_time is None and min(eta) >= eta_c - tol), tol, blowup_time)


def divergence_floor(state: FieldState, kernel: KernelSpec, tau: float, eta_c: float,
                     mode: str = "spectral") -> dict:
    """min div u against d (eta_c - tau max phi*rho), implied by the threshold."""
    d = state.domain.dim
    bound = d * (eta_c - tau * float(np.max(convolve_density(kernel, state, mode=mode))))
    dmin = float(np.min(divergence(state)))
    return {"min_divergence": dmin, "bound": bound, "holds": dmin >= bound}


def _trapz_cumulative(t, y):
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    out = np.zeros_like(t)
    out[1:] = np.cumsum(0.5 * (y[1:] + y[:-1]) * np.diff(t))
    return out


@dataclass
class FlockingCertificate:
    passed: bool
    worst_margin: float
    bound: list
    gate: dict
    tolerance: float
    note: str = ""


def flocking_certificate(trace: dict, sigma: float, tau: float, domain: DomainSpec,
                         tolerance: float = 1e-8) -> FlockingCertificate:
    """deltaE(t) <= exp(-tau sigma int c_rho rho_-) deltaE(0) with c_rho = rho_-/rho_+.

    Also evaluates the density-variation gate rho_+ - rho_- <= (1 - c) mbar
    with the largest admissible c, and, when c > 0, the constant-rate bound
    exp(-tau mbar c^2 sigma t).
    """
    t = np.asarray(trace["t"], dtype=float)
    dE = np.asarray(trace["deltaE"], dtype=float)
    rmin = np.asarray(trace["rho_min"], dtype=float)
    rmax = np.asarray(trace["rho_max"], dtype=float)
    if not (t.shape == dE.shape == rmin.shape == rmax.shape):
        raise ValueError("mismatched series")
    mbar = float(trace["mass"][0]) / domain.volume
    c_rho = np.where(rmax > 0, rmin / np.where(rmax > 0, rmax, 1.0), 0.0)
    bound = np.exp(-tau * sigma * _trapz_cumulative(t, c_rho * rmin)) * dE[0]
    c_gate = float(1.0 - np.max(rmax - rmin) / mbar) if mbar > 0 else -math.inf
    gate = {"mbar": mbar, "c": c_gate, "holds": c_gate > 0}
    if dE[0] == 0.0:
        return FlockingCertificate(True, 0.0, bound.tolist(), gate, tolerance, "vacuous: deltaE(0) = 0")
    margin = 1.0 - dE / bound
    worst = float(np.min(margin))
    passed = worst >= -tolerance
    if c_gate > 0:
        delta = tau * mbar * c_gate ** 2
        b2 = np.exp(-delta * sigma * (t - t[0])) * dE[0]
        m2 = float(np.min(1.0 - dE / b2))
        gate.update({"delta": delta, "worst_margin": m2, "constant_rate_holds": m2 >= -tolerance})
        passed = passed and m2 >= -tolerance
    return FlockingCertificate(passed, worst, bound.tolist(), gate, tolerance)


# ---------------------------------------------------------------------------
# initial data and export
# ---------------------------------------------------------------------------

def make_state(domain: DomainSpec, n: int, rho_fn, u_fn, time: float = 0.0) -> FieldState:
    """Sample rho_fn(*X) and u_fn(*X) (returning d components) at cell centres."""
    h = domain.period / n
    x = (np.arange(n) + 0.5) * h
    X = np.meshgrid(*([x] * domain.dim), indexing="ij")
    rho = np.broadcast_to(np.asarray(rho_fn(*X), dtype=float), X[0].shape).copy()
    u = np.asarray(u_fn(*X), dtype=float)
    if domain.dim == 1 and u.shape == X[0].shape:
        u = u[None]
    u = np.broadcast_to(u, (domain.dim,) + X[0].shape).copy()
    return FieldState(rho, u, domain, time)


def save_field_csv(state: FieldState, path):
    d = state.domain.dim
    X = state.coordinates()
    header = [f"x_{j + 1}" for j in range(d)] + ["rho"] + [f"u_{j + 1}" for j in range(d)]
    cols = [g.ravel() for g in X] + [state.rho.ravel()] + [state.u[j].ravel() for j in range(d)]
    return write_csv(path, header, zip(*cols))


def load_field_csv(path, domain: DomainSpec) -> FieldState:
    """Inverse of ``save_field_csv``; rows must be in the written (C) order."""
    from .records import read_csv

    header, data = read_csv(path)
    d = domain.dim
    data = np.atleast_2d(data)
    n = int(round(data.shape[0] ** (1.0 / d)))
    if n ** d != data.shape[0]:
        raise ValueError("field CSV does not hold an n^d grid")
    rho = data[:, d].reshape((n,) * d)
    u = np.stack([data[:, d + 1 + j].reshape((n,) * d) for j in range(d)])
    return FieldState(rho, u, domain)
