import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from heatnet.graph import incidence_matrix, network_from_pairs, reduced_incidence
from heatnet.thermal import (InfeasibleSourceError, ThermalGraph,
                             assumption2_check, dirichlet_energy,
                             dirichlet_laplacian, lemma_checks, m_circ,
                             nonlinear_laplacian_apply, reference_model,
                             solve_nonlinear_poisson, solve_thomson)

from conftest import random_connected_digraph


def test_dirichlet_laplacian_single_edge(single_edge_net):
    assert dirichlet_laplacian(single_edge_net, np.ones(1)).tolist() == [[1.0]]


def test_dirichlet_laplacian_path(path_net):
    L = dirichlet_laplacian(path_net, np.ones(2))
    assert L.tolist() == [[1.0, -1.0], [-1.0, 2.0]]


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6))
def test_dirichlet_laplacian_positive_definite(seed):
    rng = np.random.default_rng(seed)
    net = random_connected_digraph(rng)
    sigma = rng.uniform(0.1, 2.0, net.n_edges)
    eig = np.linalg.eigvalsh(dirichlet_laplacian(net, sigma))
    assert eig.min() > 0


def test_nonlinear_apply(single_edge_net):
    tg = ThermalGraph(single_edge_net, np.ones(1))
    assert nonlinear_laplacian_apply(tg, np.zeros(1)).tolist() == [0.0]
    assert nonlinear_laplacian_apply(tg, np.array([2.0])).tolist() == [2.0]


def test_nonlinear_apply_blocks_uphill_edge():
    # edge d -> a: positive temperature at a pushes nothing (wrong way)
    net = network_from_pairs(2, [(1, 0)], 1)
    tg = ThermalGraph(net, np.ones(1))
    assert nonlinear_laplacian_apply(tg, np.array([2.0])).tolist() == [0.0]


def test_poisson_single_edge(single_edge_net):
    tg = ThermalGraph(single_edge_net, np.ones(1))
    sol = solve_nonlinear_poisson(tg, np.array([2.0]))
    assert sol.converged
    assert sol.temperatures == pytest.approx([2.0])
    assert sol.flows == pytest.approx([2.0])


def test_poisson_path(path_net):
    tg = ThermalGraph(path_net, np.ones(2))
    sol = solve_nonlinear_poisson(tg, np.array([1.0, 0.0]))
    assert sol.flows == pytest.approx([1.0, 1.0])
    assert sol.temperatures == pytest.approx([2.0, 1.0])


def test_poisson_infeasible_source_names_node():
    # node 1's only edge comes from the sink: no directed path to d
    net = network_from_pairs(3, [(0, 2), (2, 1)], 2)
    tg = ThermalGraph(net, np.ones(2))
    with pytest.raises(InfeasibleSourceError) as err:
        solve_nonlinear_poisson(tg, np.array([0.0, 1.0]))
    assert 1 in err.value.nodes


def test_dirichlet_energy_examples(single_edge_net):
    tg = ThermalGraph(single_edge_net, np.ones(1))
    assert dirichlet_energy(tg, np.zeros(1), np.array([2.0])) == 0.0
    assert dirichlet_energy(tg, np.array([2.0]), np.array([2.0])) == pytest.approx(-2.0)


def test_solver_beats_random_perturbations(path_net):
    rng = np.random.default_rng(0)
    tg = ThermalGraph(path_net, np.array([0.7, 1.3]))
    a = np.array([1.0, 0.5])
    sol = solve_nonlinear_poisson(tg, a)
    e0 = dirichlet_energy(tg, sol.temperatures, a)
    for _ in range(100):
        q = sol.temperatures + rng.normal(scale=0.3, size=2)
        assert dirichlet_energy(tg, q, a) >= e0 - 1e-12


def test_thomson_parallel_edges():
    # two parallel routes a -> d via distinct relays, conductances 1 and 2
    net = network_from_pairs(4, [(0, 1), (1, 3), (0, 2), (2, 3)], 3)
    sigma = np.array([2.0, 2.0, 4.0, 4.0])
    f, duals = solve_thomson(ThermalGraph(net, sigma), np.array([3.0, 0.0, 0.0]))
    assert f == pytest.approx([1.0, 1.0, 2.0, 2.0])


def test_thomson_single_edge_dual_is_temperature(single_edge_net):
    tg = ThermalGraph(single_edge_net, np.ones(1))
    f, duals = solve_thomson(tg, np.array([2.0]))
    assert f == pytest.approx([2.0])
    assert duals == pytest.approx([2.0])


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10**6))
def test_poisson_thomson_agreement(seed):
    rng = np.random.default_rng(seed)
    net = random_connected_digraph(rng, 3, 9)
    tg = ThermalGraph(net, rng.uniform(0.2, 2.0, net.n_edges))
    a = rng.uniform(0.1, 2.0, net.n_nodes - 1)
    sol = solve_nonlinear_poisson(tg, a)
    f, duals = solve_thomson(tg, a)
    assert np.abs(sol.flows - f).max() < 1e-7
    assert np.abs(sol.temperatures - duals).max() < 1e-7
    # zero duality gap: dissipation of both flows agree
    assert sol.dissipation_energy == pytest.approx(float(f @ (f / tg.sigma)), abs=1e-7)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6))
def test_poisson_solution_properties(seed):
    rng = np.random.default_rng(seed)
    net = random_connected_digraph(rng, 3, 9)
    tg = ThermalGraph(net, rng.uniform(0.2, 2.0, net.n_edges))
    a = rng.uniform(0.1, 2.0, net.n_nodes - 1)
    sol = solve_nonlinear_poisson(tg, a)
    Bo = reduced_incidence(net)
    assert np.all(sol.temperatures >= 0)
    assert np.all(sol.flows >= 0)
    assert np.abs(Bo @ sol.flows - a).max() < 1e-8
    # scaling covariance: doubling sources doubles the solution
    sol2 = solve_nonlinear_poisson(tg, 2 * a)
    assert np.abs(sol2.temperatures - 2 * sol.temperatures).max() < 1e-7
    assert np.abs(sol2.flows - 2 * sol.flows).max() < 1e-7


def test_linear_sanity_all_edges_active():
    # chain toward the sink: every differential positive at the solution
    net = network_from_pairs(4, [(0, 1), (1, 2), (2, 3)], 3)
    sigma = np.array([1.0, 2.0, 0.5])
    a = np.array([1.0, 0.5, 0.25])
    sol = solve_nonlinear_poisson(ThermalGraph(net, sigma), a)
    q_linear = np.linalg.solve(dirichlet_laplacian(net, sigma), a)
    assert np.abs(sol.temperatures - q_linear).max() < 1e-9


def test_reference_model_beta_endpoints(single_edge_net):
    sol = reference_model(single_edge_net, 1.0, np.ones(1), np.array([1.0]))
    direct = solve_nonlinear_poisson(ThermalGraph(single_edge_net, np.ones(1)),
                                     np.array([1.0]))
    assert sol.flows == pytest.approx(direct.flows.tolist())
    # beta = 0, head at sink: diffusivity 1 regardless of rho
    sol = reference_model(single_edge_net, 0.0, np.array([7.0]), np.array([1.0]))
    assert sol.temperatures == pytest.approx([1.0])


def test_assumption2_check():
    sol = solve_nonlinear_poisson(
        ThermalGraph(network_from_pairs(2, [(0, 1)], 1), np.ones(1)), np.array([0.0]))
    ok, bad = assumption2_check(sol, np.array([0.0]))
    assert ok and bad == []
    sol.flows = np.array([1.0, 1.0])
    ok, bad = assumption2_check(sol, np.array([2.0, 0.5]))
    assert not ok and bad == [1]


def test_m_circ_uniform_phi_is_scaled_identity(path_net):
    M = m_circ(path_net, np.full(2, 0.37))
    assert np.allclose(M, 0.37 * np.eye(2))


def test_m_circ_single_edge(single_edge_net):
    assert m_circ(single_edge_net, np.array([0.5])).tolist() == [[0.5]]


def test_m_circ_disconnected_errors():
    net = network_from_pairs(3, [(0, 2)], 2)  # node 1 isolated
    with pytest.raises(ValueError, match="disconnected"):
        m_circ(net, np.ones(1))


def test_gradient_identity_exact_on_trees():
    rng = np.random.default_rng(5)
    for _ in range(50):
        n = int(rng.integers(2, 8))
        pairs = [(i + 1, int(rng.integers(0, i + 1))) for i in range(n - 1)]
        net = network_from_pairs(n, pairs, 0)
        phi = rng.uniform(0.05, 1.0, net.n_edges)
        M = m_circ(net, phi)
        Bo = reduced_incidence(net)
        x = rng.normal(size=n - 1)
        assert np.abs(Bo.T @ M @ x - phi * (Bo.T @ x)).max() < 1e-9


def test_gradient_identity_fails_on_cycles_with_nonuniform_phi():
    # cycles let diag(phi) push gradients out of the cut space
    net = network_from_pairs(3, [(0, 1), (1, 2), (0, 2)], 2)
    phi = np.array([0.9, 0.5, 0.1])
    M = m_circ(net, phi)
    Bo = reduced_incidence(net)
    x = np.array([1.0, -2.0])
    assert np.abs(Bo.T @ M @ x - phi * (Bo.T @ x)).max() > 0.1


def test_quadratic_form_indefinite_on_skewed_phi_path(path_net):
    # x^T M x can be negative even for nonnegative x when phi is skewed
    M = m_circ(path_net, np.array([0.9, 0.1]))
    x = np.array([0.4, 1.0])
    assert x @ M @ x < 0


def test_eigenvalues_positive_on_random_graphs():
    rng = np.random.default_rng(9)
    for _ in range(100):
        net = random_connected_digraph(rng, 3, 9)
        M = m_circ(net, rng.uniform(1e-3, 1.0, net.n_edges))
        assert np.linalg.eigvals(M).real.min() > 0


def test_row_sums_of_m_circ_positive():
    # current-injection argument: M 1 is entrywise positive
    rng = np.random.default_rng(13)
    for _ in range(100):
        net = random_connected_digraph(rng, 3, 9)
        M = m_circ(net, rng.uniform(1e-3, 1.0, net.n_edges))
        assert (M @ np.ones(M.shape[0])).min() > 0


def test_lemma_checks_uniform_phi_all_pass(path_net):
    M = m_circ(path_net, np.full(2, 0.6))
    rep = lemma_checks(M, probes=50, net=path_net, phi=np.full(2, 0.6))
    assert rep.eig_ok and rep.quad_ok and rep.identity_ok and rep.skew_ok
    assert rep.skew_excess_max <= 0 + 1e-12


def test_graph_laplacian_facts():
    rng = np.random.default_rng(3)
    for _ in range(30):
        net = random_connected_digraph(rng, 3, 9)
        sigma = rng.uniform(0.1, 2.0, net.n_edges)
        B = incidence_matrix(net)
        L = (B * sigma) @ B.T
        eig = np.linalg.eigvalsh(L)
        assert eig.min() > -1e-10                      # positive semidefinite
        assert np.abs(L @ np.ones(net.n_nodes)).max() < 1e-10
        assert eig[1] > 1e-10                          # lambda_2 > 0 when connected
        Lo = dirichlet_laplacian(net, sigma)
        y = Lo @ np.ones(net.n_nodes - 1)
        assert y.min() > -1e-10
        sink_adjacent = {e.tail for e in net.edges if e.head == net.destination}
        sink_adjacent |= {e.head for e in net.edges if e.tail == net.destination}
        for pos, node in enumerate(net.queue_nodes):
            if node in sink_adjacent:
                assert y[pos] > 1e-12
            else:
                assert abs(y[pos]) < 1e-10
