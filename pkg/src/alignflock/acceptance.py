"""Acceptance suite A1-A8 with per-criterion runtime budgets.

Each criterion returns a :class:`Criterion`; ``run_acceptance`` prints one
line per criterion and is what ``alignflock verify`` calls.  Tolerances
live in ``TOLERANCES`` and can be overridden by key.
"""

from __future__ import annotations

import math
import sys
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from . import fourier, graph, hydro, particles, weighted
from .geometry import DomainSpec, KernelSpec, eval_kernel, normalize_kernel, shape_knots
from .scenarios import execute

TOLERANCES = {
    "A1.sigma": 1e-9,
    "A2.sigma": 1e-8,
    "A3.rel": 1e-6,
    "A3.margin": 1e-6,
    "A4.v_ratio": 1e-3,
    "A5.drift": 1e-6,
    "A5.growth": 1.3,
    "A6.rel": 1e-2,
    "A7.sigma": 1e-8,
    "A7.factor": 1e-6,
    "A8.poincare": 1e-10,
    "A8.identity": 1e-10,
    "A8.mass": 1e-12,
    "A8.momentum": 1e-12,
}

BUDGETS = {"A1": 1.0, "A2": 10.0, "A3": 5.0, "A4": 30.0, "A5": 120.0, "A6": 300.0, "A7": 30.0, "A8": 600.0}
TRIALS = 100


@dataclass
class Criterion:
    id: str
    name: str
    passed: bool
    seconds: float
    budget: float
    checks: list = field(default_factory=list)

    @property
    def failures(self) -> list:
        return [c for c in self.checks if not c.passed]

    def line(self) -> str:
        worst = ""
        if self.checks:
            c = self.failures[0] if self.failures else self.checks[0]
            worst = f"  [{c.name}: value={c.value!r} limit={c.limit!r}]"
        status = "PASS" if self.passed else "FAIL"
        return f"{self.id} {status} {self.name} ({self.seconds:.2f}s / {self.budget:g}s){worst}"


@dataclass
class _Chk:
    name: str
    passed: bool
    value: float | None = None
    limit: float | None = None


def _timed(cid, name, fn, tol):
    t0 = time.perf_counter()
    checks = fn(tol)
    dt = time.perf_counter() - t0
    budget = BUDGETS[cid]
    checks.append(_Chk("runtime_seconds", dt <= budget, dt, budget))
    return Criterion(cid, name, all(c.passed for c in checks), dt, budget, checks)


def a1(tol):
    out = execute("sigma-1d-indicator", {"tol": tol["A1.sigma"]})
    return list(out.checks)


def a2(tol):
    out = execute("sigma-2d-indicator", {"tol": tol["A2.sigma"]})
    checks = list(out.checks)
    checks.append(_Chk("alternative_value_reported", "alternative_value" in out.report
                       and "discrepancy_note" in out.report))
    return checks


def a3(tol):
    out = execute("complete-graph-decay", {"rel_tol": tol["A3.rel"], "margin_tol": tol["A3.margin"]})
    return list(out.checks)


def a4(tol):
    out = execute("fat-tail-flocking", {"v_ratio": tol["A4.v_ratio"]}, seed=2024)
    return list(out.checks)


def a5(tol):
    sub = execute("hydro-1d-subcritical", {"drift_tol": tol["A5.drift"]})
    sup = execute("hydro-1d-supercritical", {"growth": tol["A5.growth"]})
    return [_Chk("sub:" + c.name, c.passed, c.value, c.limit) for c in sub.checks] + \
        [_Chk("super:" + c.name, c.passed, c.value, c.limit) for c in sup.checks]


def a6(tol):
    out = execute("hydro-2d-threshold", {"rel_tol": tol["A6.rel"]})
    return list(out.checks)


def a7(tol):
    out = execute("weighted-gap-uniform", {"sigma_tol": tol["A7.sigma"], "factor_tol": tol["A7.factor"]})
    return list(out.checks)


def _random_kernel(rng, dim):
    fam = rng.integers(4)
    if fam == 0:
        return KernelSpec.indicator(float(rng.uniform(0.3, 2.5)))
    if fam == 1:
        return KernelSpec.fat_tail(float(rng.uniform(0.05, 1.5)))
    if fam == 2:
        return KernelSpec.increasing_compact(float(rng.uniform(0.3, 2.5)))
    r = np.sort(rng.uniform(0.0, 3.0, size=4))
    r[0] = 0.0
    return KernelSpec.tabulated(r.tolist(), rng.uniform(0.1, 2.0, size=4).tolist())


def mass_oracle(kernel: KernelSpec, domain: DomainSpec) -> float:
    """Mass of the scaled profile over the periodic cell by nested adaptive quadrature."""
    half = 0.5 * domain.period
    knots = shape_knots(kernel)
    f = lambda r: float(kernel.profile(r))

    def radial(rmax, weight):
        pts = [q for q in knots if 0.0 < q < rmax] or None
        return integrate.quad(lambda r: f(r) * weight(r), 0.0, rmax, points=pts, limit=200,
                              epsabs=1e-14, epsrel=1e-12)[0]

    if domain.dim == 1:
        return 2.0 * radial(half, lambda r: 1.0)
    tb = [math.acos(half / q) for q in knots if half < q < half * math.sqrt(2.0)]
    inner = lambda t: radial(half / math.cos(t), lambda r: r)
    return 8.0 * integrate.quad(inner, 0.0, 0.25 * math.pi, points=tb or None, limit=200,
                                epsabs=1e-14, epsrel=1e-12)[0]


def a8(tol, trials: int = TRIALS, seed: int = 8):
    rng = np.random.default_rng(seed)
    checks = []
    t1 = DomainSpec.torus(1)
    t2 = DomainSpec.torus(2)

    # kernel symmetry and unit mass
    worst_sym = 0.0
    worst_mass = 0.0
    for _ in range(trials):
        dom = t1 if rng.random() < 0.5 else t2
        k = normalize_kernel(_random_kernel(rng, dom.dim), dom)
        x, y = rng.uniform(-10, 10, size=(2, dom.dim))
        worst_sym = max(worst_sym, abs(eval_kernel(k, x, y, dom) - eval_kernel(k, y, x, dom)))
        worst_mass = max(worst_mass, abs(mass_oracle(k, dom) - 1.0))
    checks.append(_Chk("kernel_symmetry", worst_sym == 0.0, worst_sym, 0.0))
    checks.append(_Chk("kernel_unit_mass", worst_mass <= 1e-8, worst_mass, 1e-8))

    # graph Laplacian: v^T L v = (1/2N) sum phi_ij |v_i - v_j|^2
    worst = 0.0
    for _ in range(trials):
        N = int(rng.integers(2, 24))
        dom = DomainSpec.free(int(rng.integers(1, 3)))
        ens = particles.ParticleEnsemble(rng.normal(0, 2, (N, dom.dim)), rng.normal(size=(N, dom.dim)), dom)
        g = graph.adjacency(ens, _random_kernel(rng, dom.dim))
        L = graph.graph_laplacian(g)
        v = rng.normal(size=N)
        lhs = float(v @ L @ v)
        rhs = 0.5 / N * float(np.sum(g.weights * (v[:, None] - v[None, :]) ** 2))
        worst = max(worst, abs(lhs - rhs) / max(1.0, abs(rhs)))
    checks.append(_Chk("graph_quadratic_form", worst <= tol["A8.identity"], worst, tol["A8.identity"]))

    # weighted Laplacian: h^d <L x, x> = (h^d / 2) sum C_ab rho_a rho_b (w_a - w_b)^2
    worst = 0.0
    for _ in range(trials):
        n = int(rng.integers(8, 40))
        k = normalize_kernel(_random_kernel(rng, 1), t1)
        rho = rng.uniform(0.0, 2.0, n)
        w = rng.normal(size=n)
        Lw = weighted.assemble_weighted_laplacian(rho, k, t1)
        C = weighted.circulant_matrix(fourier.spectral_kernel_weights(k, t1, n))
        rhs = 0.5 * Lw.quadrature_weight * float(np.sum(C * np.outer(rho, rho) * (w[:, None] - w[None, :]) ** 2))
        lhs = weighted.quadratic_form(Lw, w)
        worst = max(worst, abs(lhs - rhs) / max(1.0, abs(rhs)))
    checks.append(_Chk("weighted_quadratic_form", worst <= tol["A8.identity"], worst, tol["A8.identity"]))

    # Poincare inequality on grid data
    worst = math.inf
    for _ in range(trials):
        dom = t1 if rng.random() < 0.5 else t2
        n = int(rng.integers(8, 65 if dom.dim == 1 else 17))
        k = normalize_kernel(_random_kernel(rng, dom.dim), dom)
        w = rng.normal(size=(n,) * dom.dim)
        rep = fourier.poincare_check(k, dom, w)
        worst = min(worst, rep.margin / max(1.0, rep.rhs))
    checks.append(_Chk("poincare_margin", worst >= -tol["A8.poincare"], worst, -tol["A8.poincare"]))

    # conservation budgets: particles (momentum per unit time) and hydro (mass, momentum)
    worst_p = 0.0
    for _ in range(trials // 10):
        N = int(rng.integers(4, 20))
        dom = t1 if rng.random() < 0.5 else DomainSpec.free(2)
        k = _random_kernel(rng, dom.dim)
        ens = particles.ParticleEnsemble(rng.uniform(0, 6, (N, dom.dim)), rng.normal(size=(N, dom.dim)), dom)
        T = 2.0
        res = particles.simulate(ens, k, particles.SimConfig(tau=1.0, dt=0.01, t_end=T, record_every=50),
                                 keep_states=False)
        p0 = particles.momentum(ens)
        drift = float(np.max(np.abs(particles.momentum(res.final) - p0))) / max(1.0, float(np.max(np.abs(p0))))
        worst_p = max(worst_p, drift / T)
    checks.append(_Chk("particle_momentum_drift_per_time", worst_p <= tol["A8.momentum"], worst_p,
                       tol["A8.momentum"]))
    worst_m = worst_q = 0.0
    for _ in range(trials // 20):
        n = int(rng.integers(32, 128))
        a, b, c = rng.uniform(0.1, 0.6, 3)
        st = hydro.make_state(t1, n, lambda x: 1.0 + a * np.cos(x + c), lambda x: b * np.sin(2 * x))
        k = normalize_kernel(_random_kernel(rng, 1), t1)
        res = hydro.run_hydro(st, k, hydro.HydroConfig(t_end=1.0, record_dt=0.25, blowup_gradient_cap=math.inf))
        m = np.asarray(res.trace["mass"])
        q = np.asarray(res.trace["momentum_1"])
        worst_m = max(worst_m, float(np.max(np.abs(m - m[0]))) / m[0])
        worst_q = max(worst_q, float(np.max(np.abs(q - q[0]))) / m[0])
    checks.append(_Chk("hydro_mass_drift", worst_m <= tol["A8.mass"], worst_m, tol["A8.mass"]))
    checks.append(_Chk("hydro_momentum_drift", worst_q <= tol["A8.momentum"], worst_q, tol["A8.momentum"]))
    return checks


CRITERIA = [
    ("A1", "sigma 1D indicator", a1),
    ("A2", "sigma 2D indicator vs quadrature oracle", a2),
    ("A3", "complete-graph decay and Fiedler certificate", a3),
    ("A4", "fat-tail flocking", a4),
    ("A5", "1D hydro sub/supercritical dichotomy", a5),
    ("A6", "2D threshold persistence", a6),
    ("A7", "weighted-Laplacian gap bound", a7),
    ("A8", "property suites and conservation budgets", a8),
]


def run_acceptance(filt: str | None = None, overrides: dict | None = None, stream=None) -> list[Criterion]:
    stream = stream or sys.stdout
    tol = dict(TOLERANCES)
    tol.update(overrides or {})
    results = []
    for cid, name, fn in CRITERIA:
        if filt and filt.lower() not in f"{cid} {name}".lower():
            continue
        crit = _timed(cid, name, fn, tol)
        results.append(crit)
        if stream is not None:
            print(crit.line(), file=stream, flush=True)
    if stream is not None and results:
        n_ok = sum(r.passed for r in results)
        print(f"{n_ok}/{len(results)} criteria passed", file=stream)
    return results
