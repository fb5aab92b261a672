"""Directed connectivity graphs and their incidence algebra.

Everything downstream (policies, the slotted simulator, the thermal solver)
works with the reduced incidence matrix of a fixed directed graph whose
destination row has been deleted, so this module is deliberately small and
immutable.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class DirectedEdge:
    """Directed edge `tail -> head`, identified by a dense integer id."""

    id: int
    tail: int
    head: int


@dataclass(frozen=True)
class DirectedNetwork:
    """Simple directed graph with a single destination (sink) node.

    Nodes are dense integers 0..n_nodes-1. Edge ids index every edge vector
    used elsewhere. Algebraic edge orientation coincides with the physical
    link direction: the incidence matrix carries +1 at the tail and -1 at
    the head of each edge.
    """

    n_nodes: int
    edges: tuple[DirectedEdge, ...]
    destination: int
    node_labels: tuple[str, ...] = field(default=())

    def __post_init__(self):
        if not 0 <= self.destination < self.n_nodes:
            raise ValueError(f"destination {self.destination} out of range")
        seen = set()
        for e in self.edges:
            if e.tail == e.head:
                raise ValueError(f"self-loop at node {e.tail}")
            if not (0 <= e.tail < self.n_nodes and 0 <= e.head < self.n_nodes):
                raise ValueError(f"edge {e.tail}->{e.head} references unknown node")
            if (e.tail, e.head) in seen:
                raise ValueError(f"duplicate edge {e.tail}->{e.head}")
            seen.add((e.tail, e.head))
        if tuple(e.id for e in self.edges) != tuple(range(len(self.edges))):
            raise ValueError("edge ids must be dense and in order")
        if self.node_labels and len(self.node_labels) != self.n_nodes:
            raise ValueError("node_labels length mismatch")

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def queue_nodes(self) -> list[int]:
        """Non-destination nodes, in index order (the reduced node set)."""
        return [i for i in range(self.n_nodes) if i != self.destination]

    def label(self, node: int) -> str:
        return self.node_labels[node] if self.node_labels else str(node)


def network_from_pairs(n_nodes: int, pairs, destination: int,
                       node_labels=()) -> DirectedNetwork:
    """Build a network from (tail, head) pairs, assigning ids in order."""
    edges = tuple(DirectedEdge(i, t, h) for i, (t, h) in enumerate(pairs))
    return DirectedNetwork(n_nodes, edges, destination, tuple(node_labels))


def incidence_matrix(net: DirectedNetwork) -> np.ndarray:
    """Node-edge incidence matrix B, (n_nodes x n_edges).

    Column e holds +1 at the tail of edge e and -1 at its head; columns sum
    to zero.
    """
    B = np.zeros((net.n_nodes, net.n_edges))
    for e in net.edges:
        B[e.tail, e.id] = 1.0
        B[e.head, e.id] = -1.0
    return B


def reduced_incidence(net: DirectedNetwork) -> np.ndarray:
    """B with the destination row deleted ((n_nodes-1) x n_edges).

    Full row rank exactly when every node reaches the destination through
    the undirected support graph.
    """
    return np.delete(incidence_matrix(net), net.destination, axis=0)


def net_outflow(net: DirectedNetwork, f: np.ndarray) -> np.ndarray:
    """Per-node net outflow B_reduced @ f for an edge vector f.

    Component for node i is sum of f over out-edges minus sum over
    in-edges, destination excluded.
    """
    f = np.asarray(f, dtype=float)
    if f.shape != (net.n_edges,):
        raise ValueError(f"expected edge vector of length {net.n_edges}")
    return reduced_incidence(net) @ f


def connected_to_destination(net: DirectedNetwork) -> bool:
    """True iff the undirected support graph is connected to the sink."""
    parent = list(range(net.n_nodes))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for e in net.edges:
        ra, rb = find(e.tail), find(e.head)
        if ra != rb:
            parent[ra] = rb
    root = find(net.destination)
    return all(find(i) == root for i in range(net.n_nodes))
