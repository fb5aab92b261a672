import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from heatnet.graph import network_from_pairs
from heatnet.policies import (HDParams, ResidualLedger, SlotState, VBPParams,
                              apply_residuals, bp_decide, hd_decide, hd_phi,
                              hd_prediction, hd_weight, vbp_decide)
from heatnet.scheduling import InterferenceModel, ScheduleSet, build_conflicts, schedule_for

from conftest import random_connected_digraph


def test_hd_phi_values():
    assert hd_phi(0.0, False, 7.0) == 0.5
    assert hd_phi(1.0, False, 4.0) == 0.25
    assert hd_phi(0.5, False, 2.0) == 0.5
    assert hd_phi(0.0, True, 1.0) == 1.0


def test_hd_phi_bounds_and_errors():
    rng = np.random.default_rng(0)
    for _ in range(200):
        phi = hd_phi(rng.uniform(0, 1), bool(rng.integers(2)), rng.uniform(1, 10))
        assert 0.0 < phi <= 1.0
    with pytest.raises(ValueError):
        hd_phi(0.5, False, 0.9)
    with pytest.raises(ValueError):
        hd_phi(1.5, False, 2.0)


def test_hd_prediction_examples():
    assert hd_prediction(0.5, 1.0, 2.0, 10.0) == 0.0     # negative differential
    assert hd_prediction(0.5, 3.0, 0.0, 10.0) == 1.5
    assert hd_prediction(0.5, 100.0, 0.0, 10.0) == 10.0  # capacity clamp


def test_hd_prediction_never_exceeds_tail_queue():
    rng = np.random.default_rng(1)
    for _ in range(300):
        q_tail, q_head = rng.uniform(0, 20, 2)
        phi = hd_phi(rng.uniform(0, 1), bool(rng.integers(2)), rng.uniform(1, 5))
        assert hd_prediction(phi, q_tail, q_head, rng.uniform(0, 30)) <= q_tail + 1e-12


def test_hd_weight_examples():
    assert hd_weight(0.5, 3.0, 0.0) == 0.0
    assert hd_weight(0.5, 3.0, 1.5) == 2.25
    # phi^2 q^2 shortcut when phi*q below capacity
    f_hat = hd_prediction(0.5, 4.0, 0.0, 5.0)
    assert hd_weight(0.5, 4.0, f_hat) == pytest.approx(0.25 * 16.0) == 4.0


def test_hd_weight_nonnegative_for_predictions():
    rng = np.random.default_rng(2)
    for _ in range(300):
        q_tail, q_head = rng.uniform(0, 10, 2)
        phi = hd_phi(rng.uniform(0, 1), bool(rng.integers(2)), rng.uniform(1, 5))
        f_hat = hd_prediction(phi, q_tail, q_head, rng.uniform(0, 8))
        assert hd_weight(phi, q_tail - q_head, f_hat) >= -1e-12


def test_hd_decide_two_queue_example(downlink_net, downlink_sched):
    state = SlotState(0, np.array([5.0, 5.0]), np.array([3.0, 18.0]), np.ones(2))
    dec = hd_decide(downlink_net, state, HDParams(beta=0.0), downlink_sched,
                    ResidualLedger.zeros(2))
    assert dec.predictions.tolist() == [3.0, 5.0]
    assert dec.weights.tolist() == [21.0, 25.0]
    assert dec.f.tolist() == [0.0, 5.0]


def test_hd_decide_all_zero_queues(downlink_net, downlink_sched):
    state = SlotState(0, np.zeros(2), np.array([3.0, 18.0]), np.ones(2))
    dec = hd_decide(downlink_net, state, HDParams(), downlink_sched,
                    ResidualLedger.zeros(2))
    assert dec.f.tolist() == [0.0, 0.0]
    assert dec.schedule_index == 0  # tie-break


def test_bp_decide_examples(downlink_net, downlink_sched):
    state = SlotState(0, np.array([5.0, 5.0]), np.array([3.0, 18.0]), np.ones(2))
    dec = bp_decide(downlink_net, state, downlink_sched)
    assert dec.weights.tolist() == [15.0, 90.0]
    assert dec.f.tolist() == [0.0, 5.0]
    assert dec.nulls.tolist() == [0.0, 13.0]


def test_bp_single_link_nulls(single_edge_net):
    sched = schedule_for(single_edge_net, InterferenceModel("khop", 1))
    state = SlotState(0, np.array([2.0]), np.array([3.0]), np.ones(1))
    dec = bp_decide(single_edge_net, state, sched)
    assert dec.f.tolist() == [2.0]
    assert dec.nulls.tolist() == [1.0]


def test_bp_no_positive_differential_no_flow(path_net):
    sched = schedule_for(path_net, InterferenceModel("khop", 1))
    state = SlotState(0, np.array([1.0, 1.0]), np.array([5.0, 0.0]), np.ones(2))
    # q1 - q2 = 0 and mu on 2->d is 0: nothing moves
    dec = bp_decide(path_net, state, sched)
    assert dec.f.tolist() == [0.0, 0.0]


def test_vbp_weight_examples(single_edge_net):
    sched = schedule_for(single_edge_net, InterferenceModel("khop", 1))
    state = SlotState(0, np.array([10.0]), np.array([3.0]), np.array([2.0]))
    dec = vbp_decide(single_edge_net, state, VBPParams(v=1.0), sched)
    assert dec.weights.tolist() == [3.0 * (10.0 - 6.0)]
    state = SlotState(0, np.array([5.0]), np.array([3.0]), np.array([2.0]))
    dec = vbp_decide(single_edge_net, state, VBPParams(v=1.0), sched)
    assert dec.weights.tolist() == [0.0]
    assert dec.f.tolist() == [0.0]


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6))
def test_vbp_v0_matches_bp(seed):
    rng = np.random.default_rng(seed)
    net = random_connected_digraph(rng, 3, 7)
    sched = schedule_for(net, InterferenceModel("khop", 1))
    state = SlotState(0, rng.integers(0, 15, net.n_nodes - 1).astype(float),
                      rng.integers(0, 6, net.n_edges).astype(float),
                      rng.uniform(1, 3, net.n_edges))
    d_bp = bp_decide(net, state, sched)
    d_v0 = vbp_decide(net, state, VBPParams(0.0), sched)
    assert np.array_equal(d_bp.weights, d_v0.weights)
    assert d_bp.schedule_index == d_v0.schedule_index
    assert np.array_equal(d_bp.f, d_v0.f)


def test_apply_residuals_examples():
    ledger = ResidualLedger.zeros(1)
    assert apply_residuals(ledger, np.array([2.0])).tolist() == [2.0]
    assert ledger.residue[0] == 0.0
    out = [apply_residuals(ledger, np.array([1.5]))[0] for _ in range(2)]
    assert out == [1.0, 2.0]
    ledger = ResidualLedger.zeros(1)
    out = [apply_residuals(ledger, np.array([0.25]))[0] for _ in range(4)]
    assert out == [0.0, 0.0, 0.0, 1.0]


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6))
def test_residuals_preserve_long_run_mean(seed):
    rng = np.random.default_rng(seed)
    ledger = ResidualLedger.zeros(3)
    f = rng.uniform(0, 4, size=(400, 3))
    out = np.array([apply_residuals(ledger, row) for row in f])
    assert np.all(out == np.floor(out))
    assert np.all(np.abs(out.sum(axis=0) - f.sum(axis=0)) < 1.0)
    assert np.all(np.abs(ledger.residue) < 1.0)


def test_queue_feasibility_safety_net():
    # custom schedule set activating both out-links of one node at once
    net = network_from_pairs(3, [(0, 1), (0, 2)], 2)
    conflicts = np.zeros((2, 2), dtype=bool)
    sched = ScheduleSet(np.array([[1.0, 1.0]]), conflicts)
    state = SlotState(0, np.array([3.0, 0.0]), np.array([3.0, 3.0]), np.ones(2))
    dec = bp_decide(net, state, sched)
    # raw BP would send 3 on each link (6 > q=3); reduction caps the total
    assert dec.f.sum() <= 3.0
    assert np.all(dec.f >= 0)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6))
def test_decisions_respect_feasibility(seed):
    rng = np.random.default_rng(seed)
    net = random_connected_digraph(rng, 3, 7)
    sched = schedule_for(net, InterferenceModel("khop", 1))
    q = rng.integers(0, 12, net.n_nodes - 1).astype(float)
    mu = rng.integers(0, 7, net.n_edges).astype(float)
    rho = rng.uniform(1, 4, net.n_edges)
    state = SlotState(0, q, mu, rho)
    beta = float(rng.uniform(0, 1))
    for dec in (hd_decide(net, state, HDParams(beta), sched, ResidualLedger.zeros(net.n_edges)),
                bp_decide(net, state, sched),
                vbp_decide(net, state, VBPParams(float(rng.uniform(0, 2))), sched)):
        assert np.all(dec.f >= 0)
        assert np.all(dec.f <= mu + 1e-12)  # integer capacities: no overshoot
        qfull = np.zeros(net.n_nodes)
        qfull[net.queue_nodes] = q
        for node in range(net.n_nodes):
            out = sum(dec.f[e.id] for e in net.edges if e.tail == node)
            assert out <= qfull[node] + 1e-12
