import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.sparse import csgraph

from alignflock.geometry import DomainSpec, KernelSpec
from alignflock.graph import WeightedGraph, adjacency, decay_certificate, fiedler, graph_laplacian
from alignflock.particles import ParticleEnsemble, SimConfig, simulate
from alignflock.records import EnergyTrace

R1 = DomainSpec.free(1)


def test_graph_validation():
    with pytest.raises(ValueError):
        WeightedGraph(np.array([[0.0, 1.0], [2.0, 0.0]]))
    with pytest.raises(ValueError):
        WeightedGraph(np.array([[1.0, 0.0], [0.0, 0.0]]))
    with pytest.raises(ValueError):
        WeightedGraph(np.array([[0.0, -1.0], [-1.0, 0.0]]))


def test_adjacency_examples():
    one = ParticleEnsemble(np.zeros((1, 1)), np.zeros((1, 1)), R1)
    assert adjacency(one, KernelSpec.constant()).weights.shape == (1, 1)
    far = ParticleEnsemble(np.array([[0.0], [5.0]]), np.zeros((2, 1)), R1)
    assert np.all(adjacency(far, KernelSpec.indicator(1.0)).weights == 0)
    e = ParticleEnsemble(np.random.default_rng(0).normal(size=(4, 1)), np.zeros((4, 1)), R1)
    W = adjacency(e, KernelSpec.constant(0.7)).weights
    assert np.all(W[~np.eye(4, dtype=bool)] == 0.7)


def test_laplacian_spectra():
    K3 = WeightedGraph(np.ones((3, 3)) - np.eye(3), scaled=False)
    L = graph_laplacian(K3)
    assert np.allclose(L, 3 * np.eye(3) - np.ones((3, 3)))
    assert np.allclose(np.linalg.eigvalsh(L), [0, 3, 3])
    path = WeightedGraph(np.array([[0, 1.0, 0], [1, 0, 1], [0, 1, 0]]), scaled=False)
    assert np.allclose(np.linalg.eigvalsh(graph_laplacian(path)), [0, 1, 3])
    assert fiedler(graph_laplacian(path)).lambda2 == pytest.approx(1.0, abs=1e-13)
    assert np.all(graph_laplacian(WeightedGraph(np.zeros((3, 3)))) == 0)


@pytest.mark.parametrize("N", [2, 7, 32])
def test_complete_scaled_graph(N):
    rep = fiedler(graph_laplacian(WeightedGraph(np.ones((N, N)) - np.eye(N))))
    assert rep.lambda2 == pytest.approx(1.0, abs=1e-12)
    assert rep.connected


def test_two_cliques_disconnected():
    W = np.zeros((6, 6))
    W[:3, :3] = 1
    W[3:, 3:] = 1
    np.fill_diagonal(W, 0)
    rep = fiedler(graph_laplacian(WeightedGraph(W)))
    assert rep.lambda2 == 0.0
    assert not rep.connected


def random_graph(seed, n, density):
    rng = np.random.default_rng(seed)
    W = rng.uniform(size=(n, n)) * (rng.uniform(size=(n, n)) < density)
    W = np.triu(W, 1)
    return WeightedGraph(W + W.T)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), n=st.integers(2, 40), density=st.floats(0.05, 1.0))
def test_laplacian_properties(seed, n, density):
    g = random_graph(seed, n, density)
    L = graph_laplacian(g)
    assert np.max(np.abs(L.sum(axis=1))) <= 1e-12
    v = np.random.default_rng(seed + 1).normal(size=n)
    quad = 0.5 / n * np.sum(g.weights * (v[:, None] - v[None, :]) ** 2)
    assert v @ L @ v == pytest.approx(quad, rel=1e-12, abs=1e-14)
    rep = fiedler(L)
    ncomp = csgraph.connected_components(g.weights > 0, directed=False)[0]
    assert rep.connected == (ncomp == 1)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000), n=st.integers(3, 64))
def test_solvers_agree(seed, n):
    L = graph_laplacian(random_graph(seed, n, 1.0))
    a = fiedler(L, method="jacobi").lambda2
    b = fiedler(L, method="iterative").lambda2
    c = fiedler(L, method="lapack").lambda2
    assert b == pytest.approx(a, abs=1e-9)
    assert c == pytest.approx(a, abs=1e-9)


def test_decay_certificate_complete_graph():
    rng = np.random.default_rng(4)
    e = ParticleEnsemble(rng.normal(size=(10, 2)), rng.normal(size=(10, 2)), DomainSpec.free(2))
    res = simulate(e, KernelSpec.constant(1.0), SimConfig(dt=1e-3, t_end=0.5, record_every=50, track_fiedler=True))
    cert = decay_certificate(res.trace, 1.0)
    assert cert.passed
    assert cert.max_slack <= 1e-6


def test_decay_certificate_degenerate_cases():
    tr = EnergyTrace(fiedler=[])
    for t in (0.0, 1.0, 2.0):
        tr.append(t, 0.0, 1.0, 0.0, 0.0)
    assert decay_certificate(tr, 1.0).passed
    tr = EnergyTrace(fiedler=[])
    for t, dE in ((0.0, 2.0), (1.0, 2.0), (2.0, 1.5)):
        tr.append(t, dE, 1.0, 1.0, 0.0)
    assert decay_certificate(tr, 1.0).passed
    tr.deltaE[-1] = 2.5
    cert = decay_certificate(tr, 1.0)
    assert not cert.passed and cert.worst_margin < 0


def test_decay_certificate_needs_lambda2():
    tr = EnergyTrace()
    tr.append(0.0, 1.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        decay_certificate(tr, 1.0)
