import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from alignflock.fourier import sigma_phi, spectral_kernel_weights
from alignflock.geometry import DomainSpec, KernelSpec, normalize_kernel
from alignflock.weighted import (
    assemble_weighted_laplacian,
    circulant_matrix,
    dump_triplets,
    gap_decay_certificate,
    kinetic_fluctuation_check,
    lambda2_weighted,
    load_triplets,
    quadratic_form,
    verify_gap_bound,
)

T1 = DomainSpec.torus(1)
T2 = DomainSpec.torus(2)
IND1 = normalize_kernel(KernelSpec.indicator(1.0), T1)
IND2 = normalize_kernel(KernelSpec.indicator(1.0), T2)
SIGMA1 = 1.0 - math.sin(1.0)


def smooth_density(rng, n, dim, lo=0.2):
    x = 2 * math.pi * np.arange(n) / n
    X = np.meshgrid(*([x] * dim), indexing="ij")
    f = 1.0 + sum(rng.uniform(-0.4, 0.4) * np.cos(q + rng.uniform(0, 6)) for q in X)
    return np.maximum(f, lo) * rng.uniform(0.5, 2.0)


def test_circulant_matrix_matches_roll():
    K = np.random.default_rng(0).normal(size=(4, 4))
    C = circulant_matrix(K)
    f = np.random.default_rng(1).normal(size=(4, 4))
    ref = sum(K[i, j] * np.roll(f, (i, j), axis=(0, 1)) for i in range(4) for j in range(4))
    assert np.allclose(C @ f.ravel(), ref.ravel(), atol=1e-14)


def test_zero_density_gives_zero_matrix():
    Lw = assemble_weighted_laplacian(np.zeros(16), IND1, T1)
    assert np.all(Lw.matrix == 0)
    assert lambda2_weighted(Lw)[0] == 0.0


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), dim=st.integers(1, 2))
def test_null_vector_and_psd(seed, dim):
    rng = np.random.default_rng(seed)
    n = 32 if dim == 1 else 8
    dom = T1 if dim == 1 else T2
    k = IND1 if dim == 1 else IND2
    rho = smooth_density(rng, n, dim)
    Lw = assemble_weighted_laplacian(rho, k, dom)
    L = Lw.matrix
    assert np.array_equal(L, L.T)
    scale = np.max(np.abs(L))
    assert np.max(np.abs(L @ Lw.null_vector())) <= 1e-13 * scale * n ** dim
    assert np.min(np.linalg.eigvalsh(L)) >= -1e-12 * scale


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_quadratic_form_identity(seed):
    rng = np.random.default_rng(seed)
    n = 24
    rho = smooth_density(rng, n, 1)
    w = rng.normal(size=n)
    Lw = assemble_weighted_laplacian(rho, IND1, T1)
    C = circulant_matrix(spectral_kernel_weights(IND1, T1, n))
    h = 2 * math.pi / n
    ref = 0.5 * h * float(np.sum(C * np.outer(rho, rho) * (w[:, None] - w[None, :]) ** 2))
    assert quadratic_form(Lw, w) == pytest.approx(ref, rel=1e-10, abs=1e-14)


@pytest.mark.parametrize("c", [0.5, 1.0, 1.3])
def test_uniform_density_gap(c):
    Lw = assemble_weighted_laplacian(np.full(64, c), IND1, T1)
    assert lambda2_weighted(Lw)[0] == pytest.approx(c * SIGMA1, abs=1e-12)
    s2 = sigma_phi(IND2, T2, 16).sigma
    Lw2 = assemble_weighted_laplacian(np.full((12, 12), c), IND2, T2)
    assert lambda2_weighted(Lw2)[0] == pytest.approx(c * s2, abs=1e-10)


def test_scaling_homogeneity():
    rho = smooth_density(np.random.default_rng(7), 48, 1)
    a = lambda2_weighted(assemble_weighted_laplacian(rho, IND1, T1))[0]
    b = lambda2_weighted(assemble_weighted_laplacian(3.0 * rho, IND1, T1))[0]
    assert b == pytest.approx(3.0 * a, rel=1e-10)


def test_vacuum_split_has_zero_gap():
    n = 64
    rho = np.zeros(n)
    rho[2:12] = 1.0
    rho[34:44] = 1.0
    # the nonnegative sampled stencil keeps the form PSD for any density
    assert lambda2_weighted(assemble_weighted_laplacian(rho, IND1, T1, mode="sampled"))[0] == 0.0
    # spectral weights undershoot below zero, so a rough density can go slightly indefinite
    assert spectral_kernel_weights(IND1, T1, n).min() < 0
    lam = lambda2_weighted(assemble_weighted_laplacian(rho, IND1, T1))[0]
    assert -1e-2 < lam <= 0.0


def test_solvers_agree():
    rho = smooth_density(np.random.default_rng(11), 64, 1)
    Lw = assemble_weighted_laplacian(rho, IND1, T1)
    a = lambda2_weighted(Lw, method="jacobi")[0]
    b = lambda2_weighted(Lw, method="dense")[0]
    c = lambda2_weighted(Lw, method="iterative")[0]
    assert b == pytest.approx(a, abs=1e-10)
    assert c == pytest.approx(a, abs=1e-9)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_gap_bound_property(seed):
    rho = smooth_density(np.random.default_rng(seed), 48, 1, lo=0.05)
    rep = verify_gap_bound(assemble_weighted_laplacian(rho, IND1, T1), SIGMA1)
    assert rep.passed
    assert rep.ratio >= 1.0 - 1e-9


def test_kinetic_constant_velocity():
    rho = smooth_density(np.random.default_rng(2), 32, 1)
    chk = kinetic_fluctuation_check(np.full(32, 0.7), rho, IND1, T1)
    assert chk.lhs == 0.0 and chk.rhs == 0.0


def test_kinetic_eigenvector_equality():
    rho = smooth_density(np.random.default_rng(3), 32, 1)
    Lw = assemble_weighted_laplacian(rho, IND1, T1)
    lam, x, _ = lambda2_weighted(Lw)
    u = x / np.sqrt(rho)
    chk = kinetic_fluctuation_check(u, rho, IND1, T1, lambda2=lam)
    assert chk.margin == pytest.approx(0.0, abs=1e-10 * chk.lhs)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), dim=st.integers(1, 2))
def test_kinetic_inequality_property(seed, dim):
    rng = np.random.default_rng(seed)
    n = 24 if dim == 1 else 6
    dom = T1 if dim == 1 else T2
    k = IND1 if dim == 1 else IND2
    rho = smooth_density(rng, n, dim)
    u = rng.normal(size=(dim,) + (n,) * dim)
    chk = kinetic_fluctuation_check(u, rho, k, dom)
    assert chk.margin >= -1e-10 * max(1.0, chk.lhs)


def test_triplets_round_trip(tmp_path):
    rho = smooth_density(np.random.default_rng(5), 16, 1)
    Lw = assemble_weighted_laplacian(rho, IND1, T1)
    dump_triplets(Lw, tmp_path / "L.txt")
    assert np.array_equal(load_triplets(tmp_path / "L.txt"), Lw.matrix)


def test_gap_decay_certificate():
    t = np.linspace(0, 2, 21)
    lam = np.full_like(t, 0.3)
    rmin = np.full_like(t, 0.5)
    cert = gap_decay_certificate(t, np.exp(-2 * 0.3 * t), lam, rmin, tau=1.0)
    assert cert.passed and cert.worst_margin == pytest.approx(0.0, abs=1e-12)
    assert cert.ratio_lambda2_rho_minus[0] == pytest.approx(0.6)
    cert = gap_decay_certificate(t, np.exp(-0.5 * t), lam, rmin, tau=1.0)
    assert not cert.passed
    assert gap_decay_certificate(t, np.zeros_like(t), lam, rmin, tau=1.0).passed
    with pytest.raises(ValueError):
        gap_decay_certificate(t[:3], t, lam, rmin, 1.0)
