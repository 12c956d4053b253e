import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from alignflock.geometry import DomainSpec, KernelSpec, normalize_kernel
from alignflock.hydro import (
    FieldState,
    HydroConfig,
    alignment_force,
    convolve_field,
    field_energy_fluctuation,
    flocking_certificate,
    g_field_1d,
    lagrangian_invariant_1d,
    lambda_min_sym,
    load_field_csv,
    make_state,
    run_hydro,
    save_field_csv,
    threshold_eta,
)
from alignflock.records import BlowUpDetected

T1 = DomainSpec.torus(1)
T2 = DomainSpec.torus(2)
IND1 = normalize_kernel(KernelSpec.indicator(1.0), T1)
IND2 = normalize_kernel(KernelSpec.indicator(1.0), T2)


def test_state_validation():
    with pytest.raises(ValueError):
        FieldState(-np.ones(8), np.zeros(8), T1)
    with pytest.raises(ValueError):
        FieldState(np.ones((8, 8)), np.zeros((1, 8, 8)), T2)


def test_convolution_of_single_mode():
    n = 64
    x = (np.arange(n) + 0.5) * 2 * math.pi / n
    out = convolve_field(IND1, T1, 1 + 0.5 * np.cos(x))
    assert np.allclose(out, 1 + 0.5 * math.sin(1.0) * np.cos(x), atol=1e-13)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000), dim=st.integers(1, 2))
def test_fft_convolution_matches_direct(seed, dim):
    dom = T1 if dim == 1 else T2
    k = IND1 if dim == 1 else IND2
    f = np.random.default_rng(seed).normal(size=(16,) * dim)
    a = convolve_field(k, dom, f, method="fft")
    b = convolve_field(k, dom, f, method="direct")
    assert np.max(np.abs(a - b)) <= 1e-11


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000), dim=st.integers(1, 2))
def test_alignment_force_integrates_to_zero(seed, dim):
    rng = np.random.default_rng(seed)
    dom = T1 if dim == 1 else T2
    k = IND1 if dim == 1 else IND2
    n = 16
    s = FieldState(rng.uniform(0.1, 2.0, (n,) * dim), rng.normal(size=(dim,) + (n,) * dim), dom)
    F = alignment_force(s, k, tau=1.7)
    assert np.max(np.abs(F.reshape(dim, -1).sum(axis=1))) <= 1e-12 * np.sum(np.abs(F))


def test_uniform_velocity_feels_no_force():
    s = make_state(T2, 16, lambda x, y: 1 + 0.3 * np.cos(x), lambda x, y: np.array([0.4, -1.2])[:, None, None])
    assert np.max(np.abs(alignment_force(s, IND2))) <= 1e-14


def test_small_mode_decays_at_linear_rate():
    eps, tau, T = 1e-7, 1.0, 1.0
    s = make_state(T1, 128, lambda x: np.ones_like(x), lambda x: eps * np.cos(x))
    res = run_hydro(s, IND1, HydroConfig(tau=tau, t_end=T, record_dt=T, dt_max=0.01))
    x = s.coordinates()[0]
    amp = 2.0 / 128 * float(np.sum(res.final.u[0] * np.cos(x)))
    assert amp / eps == pytest.approx(math.exp(-tau * (1 - math.sin(1.0)) * T), rel=1e-6)


def test_threshold_eta_uniform():
    s = make_state(T1, 32, lambda x: 2.0 * np.ones_like(x), lambda x: 0.3 * np.ones_like(x))
    rep = threshold_eta(s, IND1, tau=0.5)
    assert rep["eta_min"] == pytest.approx(1.0, abs=1e-13)
    assert rep["eta_c"] == pytest.approx(1.0)
    assert rep["eta_c_averaged"] == pytest.approx(1.0, abs=1e-13)


def test_lambda_min_sym():
    w = 0.8
    J = np.array([[0.0, -w], [w, 0.0]])[:, :, None]
    assert lambda_min_sym(J)[0] == pytest.approx(0.0, abs=1e-15)
    rng = np.random.default_rng(1)
    for d in (2, 3):
        J = rng.normal(size=(d, d, 5))
        ref = [np.linalg.eigvalsh(0.5 * (J[..., i] + J[..., i].T))[0] for i in range(5)]
        assert np.allclose(lambda_min_sym(J), ref, atol=1e-13)


def test_field_energy_fluctuation():
    s = make_state(T1, 64, lambda x: np.ones_like(x), lambda x: np.cos(x))
    m0 = s.mass()
    assert field_energy_fluctuation(s) == pytest.approx(m0 / 4, rel=1e-13)
    s2 = FieldState(s.rho, 2 * s.u, T1)
    assert field_energy_fluctuation(s2) == pytest.approx(4 * field_energy_fluctuation(s), rel=1e-13)
    s3 = FieldState(s.rho, s.u + 5.0, T1)
    assert field_energy_fluctuation(s3) == pytest.approx(field_energy_fluctuation(s), rel=1e-12)


@settings(max_examples=8, deadline=None)
@given(seed=st.integers(0, 10_000), dim=st.integers(1, 2))
def test_run_conserves_and_stays_positive(seed, dim):
    rng = np.random.default_rng(seed)
    dom = T1 if dim == 1 else T2
    k = IND1 if dim == 1 else IND2
    n = 32 if dim == 1 else 16
    a, b = rng.uniform(0.05, 0.4, 2)
    ph = rng.uniform(0, 2 * math.pi)
    s = make_state(dom, n, lambda *X: 1 + a * np.cos(X[0] + ph), lambda *X: b * np.sin(X[-1]))
    res = run_hydro(s, k, HydroConfig(t_end=0.5, record_dt=0.1))
    tr = res.trace
    m0 = tr["mass"][0]
    assert max(abs(v - m0) for v in tr["mass"]) <= 1e-12 * m0
    for j in range(dim):
        p = tr[f"momentum_{j + 1}"]
        assert max(abs(v - p[0]) for v in p) <= 1e-12 * max(1.0, m0)
    assert min(tr["rho_min"]) > 0
    assert np.all(np.diff(tr["deltaE"]) <= 1e-12 * tr["deltaE"][0])


def test_uniform_state_keeps_constant_g():
    s = make_state(T1, 64, lambda x: 1.5 * np.ones_like(x), lambda x: 0.2 * np.ones_like(x))
    assert np.allclose(g_field_1d(s, IND1, 2.0), 3.0, atol=1e-13)
    res = run_hydro(s, IND1, HydroConfig(tau=2.0, t_end=0.3, record_dt=0.1, keep_snapshots=True))
    rep = lagrangian_invariant_1d(res.snapshots, IND1, 2.0)
    assert rep.max_drift <= 1e-12
    assert rep.stays_nonnegative


def test_g_integral_conserved_smooth_run():
    s = make_state(T1, 256, lambda x: 1 + 0.2 * np.cos(x), lambda x: 0.2 * np.sin(x))
    res = run_hydro(s, IND1, HydroConfig(t_end=0.5, record_dt=0.1, keep_snapshots=True))
    rep = lagrangian_invariant_1d(res.snapshots, IND1, 1.0)
    assert rep.max_drift <= 1e-10


def test_large_gradient_trips_sentinel():
    s = make_state(T1, 256, lambda x: np.ones_like(x), lambda x: 3.0 * np.sin(x))
    with pytest.raises(BlowUpDetected) as err:
        run_hydro(s, IND1, HydroConfig(tau=0.1, t_end=3.0, record_dt=0.1))
    assert err.value.trace is not None


def test_flocking_certificate_vacuous_and_violated():
    tr = {"t": [0.0, 1.0], "deltaE": [0.0, 0.0], "rho_min": [1.0, 1.0], "rho_max": [1.0, 1.0],
          "mass": [2 * math.pi, 2 * math.pi]}
    cert = flocking_certificate(tr, 0.5, 1.0, T1)
    assert cert.passed and "vacuous" in cert.note
    tr["deltaE"] = [1.0, 1.0]
    cert = flocking_certificate(tr, 0.5, 1.0, T1)
    assert not cert.passed
    tr["deltaE"] = [1.0, math.exp(-0.6)]
    assert flocking_certificate(tr, 0.5, 1.0, T1).passed


def test_field_csv_round_trip(tmp_path):
    rng = np.random.default_rng(3)
    s = FieldState(rng.uniform(0.5, 1.5, (6, 6)), rng.normal(size=(2, 6, 6)), T2)
    save_field_csv(s, tmp_path / "f.csv")
    back = load_field_csv(tmp_path / "f.csv", T2)
    assert np.array_equal(back.rho, s.rho)
    assert np.array_equal(back.u, s.u)
