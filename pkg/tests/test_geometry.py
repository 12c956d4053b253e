import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from alignflock.geometry import (
    DomainSpec,
    KernelError,
    KernelSpec,
    MatrixKernelSpec,
    RadialPotential,
    eval_kernel,
    interaction_matrix,
    kernel_mass,
    matrix_kernel_eval,
    mu_topological,
    normalize_kernel,
    pairwise_distances,
    periodic_distance,
    polar_cell_nodes,
    potential_hessian,
)

T1 = DomainSpec.torus(1)
T2 = DomainSpec.torus(2)


def test_periodic_distance_examples():
    assert periodic_distance([0.3], [0.3], T1) == 0.0
    assert periodic_distance([0.0], [math.pi], T1) == pytest.approx(math.pi, abs=1e-15)
    assert periodic_distance([0.1], [2 * math.pi - 0.1], T1) == pytest.approx(0.2, abs=1e-14)


def test_free_space_distance_is_euclidean():
    R2 = DomainSpec.free(2)
    assert periodic_distance([0.0, 0.0], [3.0, 4.0], R2) == pytest.approx(5.0)


def test_domain_validation():
    with pytest.raises(ValueError):
        DomainSpec("torus", 4, 1.0)
    with pytest.raises(ValueError):
        DomainSpec("torus", 1, -1.0)
    with pytest.raises(ValueError):
        DomainSpec("free", 1, 2.0)


def test_kernel_validation():
    with pytest.raises(KernelError):
        KernelSpec.fat_tail(0.0)
    with pytest.raises(KernelError):
        KernelSpec.indicator(-1.0)
    with pytest.raises(KernelError):
        KernelSpec.tabulated([0.5, 1.0], [1.0, 1.0])
    with pytest.raises(KernelError):
        KernelSpec("nope")


def test_indicator_normalization_amplitudes():
    assert normalize_kernel(KernelSpec.indicator(1.0), T1).amplitude == pytest.approx(0.5, rel=1e-15)
    assert normalize_kernel(KernelSpec.indicator(1.0), T2).amplitude == pytest.approx(1.0 / math.pi, rel=1e-15)


def test_fat_tail_mass_against_trapezoid():
    k = normalize_kernel(KernelSpec.fat_tail(0.5), T1)
    # |x| has a kink only at 0 and +-pi; split there so each half is smooth
    x = np.linspace(0.0, math.pi, 200001)
    mass = 2.0 * integrate.trapezoid(k.profile(x), x)
    assert mass == pytest.approx(1.0, abs=1e-10)


def test_eval_kernel_examples():
    k = normalize_kernel(KernelSpec.indicator(1.0), T1)
    assert eval_kernel(k, [0.0], [0.5], T1) == 0.5
    assert eval_kernel(k, [0.0], [1.5], T1) == 0.0
    f = normalize_kernel(KernelSpec.fat_tail(1.0), T1)
    c = f.amplitude
    assert eval_kernel(f, [0.0], [1.0], T1) == pytest.approx(c / math.sqrt(2.0), rel=1e-15)


def test_disk_square_area():
    # indicator whose support crosses the cell edge: exact area of the disk clipped to the square
    L = 2 * math.pi
    h = L / 2
    for R in (3.5, 4.0, 4.4):
        t = math.acos(h / R)
        exact = math.pi * R * R - 4 * (R * R * t - h * math.sqrt(R * R - h * h))
        assert kernel_mass(KernelSpec.indicator(R), T2) == pytest.approx(exact, rel=1e-13)


def test_polar_nodes_integrate_area():
    a, b, w = polar_cell_nodes(2 * math.pi)
    assert 8 * np.sum(w) == pytest.approx((2 * math.pi) ** 2, rel=1e-14)
    assert np.all(b <= a + 1e-15)


def test_mu_topological_examples():
    R1 = DomainSpec.free(1)
    pos = np.array([[0.0], [0.5], [1.0], [2.0]])
    assert mu_topological(pos, [0.0], [1.0], R1) == pytest.approx(0.75)
    assert mu_topological(np.array([[0.0], [3.0]]), [0.0], [0.0], R1) == pytest.approx(0.5)
    grid = (2 * math.pi * np.arange(8) / 8)[:, None]
    assert mu_topological(grid, [0.0], [math.pi], T1) == pytest.approx(5 / 8)


def test_matrix_kernel_examples():
    spec = MatrixKernelSpec(RadialPotential.quadratic())
    M = matrix_kernel_eval(spec, [0.3, -1.0], [2.0, 0.5])
    assert np.allclose(M, np.eye(2), atol=1e-15)
    quartic = MatrixKernelSpec(RadialPotential.power(4.0))
    assert matrix_kernel_eval(quartic, [0.0], [2.0])[0, 0] == pytest.approx(12.0)


def test_potential_hessian_matches_finite_differences():
    pot = RadialPotential.power(3.0)
    z = np.array([0.7, -0.4])
    U = lambda y: float(pot.U(np.linalg.norm(y)))
    eps = 1e-4
    H = np.zeros((2, 2))
    for i in range(2):
        for j in range(2):
            ei, ej = np.eye(2)[i] * eps, np.eye(2)[j] * eps
            H[i, j] = (U(z + ei + ej) - U(z + ei - ej) - U(z - ei + ej) + U(z - ei - ej)) / (4 * eps * eps)
    assert np.allclose(potential_hessian(pot, z), H, atol=1e-6)


def test_scalar_kernel_as_matrix_kernel():
    k = normalize_kernel(KernelSpec.fat_tail(0.8), T1)
    spec = MatrixKernelSpec(RadialPotential.zero(), scalar=k)
    x, y = [0.4], [2.9]
    assert matrix_kernel_eval(spec, x, y, T1)[0, 0] == eval_kernel(k, x, y, T1)


families = st.one_of(
    st.floats(0.1, 2.0).map(KernelSpec.fat_tail),
    st.floats(0.2, 3.0).map(KernelSpec.indicator),
    st.floats(0.2, 3.0).map(KernelSpec.increasing_compact),
)


@settings(max_examples=60, deadline=None)
@given(k=families, pts=st.lists(st.floats(-20, 20), min_size=4, max_size=4))
def test_kernel_symmetry_exact(k, pts):
    k = normalize_kernel(k, T2)
    x, y = np.array(pts[:2]), np.array(pts[2:])
    assert eval_kernel(k, x, y, T2) == eval_kernel(k, y, x, T2)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), n=st.integers(2, 30), dim=st.integers(1, 3))
def test_minimum_image_bounded(seed, n, dim):
    dom = DomainSpec.torus(dim)
    x = np.random.default_rng(seed).uniform(-30, 30, size=(n, dim))
    D = pairwise_distances(x, dom)
    assert np.all(D <= dom.period * math.sqrt(dim) / 2 + 1e-12)
    assert np.array_equal(D, D.T)


@settings(max_examples=30, deadline=None)
@given(k=families, seed=st.integers(0, 1000))
def test_interaction_matrix_symmetric_zero_diagonal(k, seed):
    x = np.random.default_rng(seed).uniform(0, 6, size=(12, 2))
    P = interaction_matrix(normalize_kernel(k, T2), x, T2)
    assert np.array_equal(P, P.T)
    assert np.all(np.diag(P) == 0)
    assert np.all(P >= 0)


def test_topological_kernel_needs_positions():
    k = KernelSpec.topological(2.0, 1.0, 0.5)
    with pytest.raises(KernelError):
        eval_kernel(k, [0.0], [1.0], DomainSpec.free(1))
