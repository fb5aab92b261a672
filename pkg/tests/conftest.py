import numpy as np
import pytest

from heatnet.graph import network_from_pairs
from heatnet.scheduling import InterferenceModel, schedule_for


@pytest.fixture
def single_edge_net():
    # a -> d
    return network_from_pairs(2, [(0, 1)], 1, node_labels=("a", "d"))


@pytest.fixture
def path_net():
    # 1 -> 2 -> d
    return network_from_pairs(3, [(0, 1), (1, 2)], 2, node_labels=("1", "2", "d"))


@pytest.fixture
def downlink_net():
    # two queues, both heads at the destination
    return network_from_pairs(3, [(0, 2), (1, 2)], 2, node_labels=("u1", "u2", "d"))


@pytest.fixture
def downlink_sched(downlink_net):
    return schedule_for(downlink_net, InterferenceModel("khop", 1))


def random_connected_digraph(rng, n_lo=3, n_hi=9):
    """Random simple digraph; every node has a directed path to the sink."""
    n = int(rng.integers(n_lo, n_hi + 1))
    dest = int(rng.integers(0, n))
    order = [dest] + [v for v in rng.permutation(n) if v != dest]
    pairs = set()
    for i, v in enumerate(order[1:], start=1):
        pairs.add((v, order[int(rng.integers(0, i))]))
    for _ in range(int(rng.integers(0, 2 * n))):
        a, b = rng.integers(0, n, 2)
        if a != b:
            pairs.add((int(a), int(b)))
    return network_from_pairs(n, sorted(pairs), dest)
