"""Interference models, the maximal-schedule set, and max-weight selection.

A schedule is a 0/1 activation vector over edges. The schedule set holds
every maximal conflict-free activation (no link can be added without a
conflict); it is enumerated once per run, since the topology is fixed.
"""
from __future__ import annotations

from dataclasses import dataclass

import networkx as nx
import numpy as np

from .graph import DirectedNetwork

ENUMERATION_CAP = 24  # edges; beyond this use greedy_maximal_schedule


@dataclass(frozen=True)
class InterferenceModel:
    """K-hop interference or an explicit conflict list over edge ids.

    In every mode two links sharing a transmitting node conflict (a node
    cannot transmit to more than one neighbor at a time). Under khop(K),
    links sharing any node conflict, and node-disjoint links conflict when
    the undirected distance between their closest endpoints is <= K-1.
    """

    kind: str = "khop"
    k: int = 1
    explicit_conflicts: tuple[tuple[int, int], ...] = ()

    def __post_init__(self):
        if self.kind not in ("khop", "explicit"):
            raise ValueError(f"unknown interference kind {self.kind!r}")
        if self.kind == "khop" and self.k < 1:
            raise ValueError("khop K must be >= 1")


def build_conflicts(net: DirectedNetwork, model: InterferenceModel) -> np.ndarray:
    """Symmetric, irreflexive boolean conflict matrix over edge pairs."""
    m = net.n_edges
    conflicts = np.zeros((m, m), dtype=bool)

    # shared transmitter: enforced regardless of model kind
    for a in net.edges:
        for b in net.edges:
            if a.id < b.id and a.tail == b.tail:
                conflicts[a.id, b.id] = conflicts[b.id, a.id] = True

    if model.kind == "explicit":
        for i, j in model.explicit_conflicts:
            if i == j or not (0 <= i < m and 0 <= j < m):
                raise ValueError(f"bad conflict pair ({i}, {j})")
            conflicts[i, j] = conflicts[j, i] = True
        return conflicts

    support = nx.Graph()
    support.add_nodes_from(range(net.n_nodes))
    support.add_edges_from((e.tail, e.head) for e in net.edges)
    dist = dict(nx.all_pairs_shortest_path_length(support))
    for a in net.edges:
        for b in net.edges:
            if a.id >= b.id:
                continue
            ends_a, ends_b = {a.tail, a.head}, {b.tail, b.head}
            if ends_a & ends_b:
                conflicts[a.id, b.id] = conflicts[b.id, a.id] = True
                continue
            gap = min(dist[u].get(v, np.inf) for u in ends_a for v in ends_b)
            if gap <= model.k - 1:
                conflicts[a.id, b.id] = conflicts[b.id, a.id] = True
    return conflicts


@dataclass(frozen=True)
class ScheduleSet:
    """All maximal conflict-free activations, as a (n_schedules x n_edges)
    0/1 matrix in canonical (lexicographic) order."""

    activation: np.ndarray
    conflicts: np.ndarray

    @property
    def n_schedules(self) -> int:
        return self.activation.shape[0]

    @property
    def n_edges(self) -> int:
        return self.activation.shape[1]

    def members(self) -> list[tuple[int, ...]]:
        return [tuple(np.flatnonzero(row)) for row in self.activation]


def enumerate_maximal_schedules(conflicts: np.ndarray, cap: int = ENUMERATION_CAP) -> ScheduleSet:
    """Exactly the maximal independent sets of the conflict graph.

    Raises if the edge count exceeds `cap`; fall back to
    greedy_maximal_schedule for larger instances.
    """
    conflicts = np.asarray(conflicts, dtype=bool)
    m = conflicts.shape[0]
    if m > cap:
        raise ValueError(
            f"{m} edges exceeds enumeration cap {cap}; use greedy scheduling")
    if m == 0:
        return ScheduleSet(np.zeros((1, 0)), conflicts)
    # maximal independent sets of G = maximal cliques of its complement
    comp = nx.complement(nx.from_numpy_array(conflicts))
    comp.add_nodes_from(range(m))
    sets = sorted(tuple(sorted(c)) for c in nx.find_cliques(comp))
    act = np.zeros((len(sets), m))
    for r, members in enumerate(sets):
        act[r, list(members)] = 1.0
    return ScheduleSet(act, conflicts)


def schedule_for(net: DirectedNetwork, model: InterferenceModel,
                 cap: int = ENUMERATION_CAP) -> ScheduleSet:
    return enumerate_maximal_schedules(build_conflicts(net, model), cap)


def max_weight_schedule(sched: ScheduleSet, w: np.ndarray) -> tuple[int, np.ndarray]:
    """(index, activation) of the schedule maximizing pi^T w.

    Ties break to the lowest index in canonical order, so runs are
    reproducible.
    """
    if sched.n_schedules == 0:
        raise ValueError("empty schedule set")
    w = np.asarray(w, dtype=float)
    if not np.isfinite(w).all():
        raise ValueError("weights must be finite")
    scores = sched.activation @ w
    idx = int(np.argmax(scores))  # argmax returns the first maximizer
    return idx, sched.activation[idx]


def greedy_maximal_schedule(conflicts: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Maximal conflict-free activation built greedily by descending weight.

    Not necessarily max-weight; intended as the fallback beyond the
    enumeration cap.
    """
    conflicts = np.asarray(conflicts, dtype=bool)
    w = np.asarray(w, dtype=float)
    order = np.lexsort((np.arange(len(w)), -w))  # weight desc, index asc
    active = np.zeros(len(w))
    for e in order:
        if not conflicts[e][active.astype(bool)].any():
            active[e] = 1.0
    return active
