"""Per-slot routing rules: heat-diffusion (HD), back-pressure (BP), and
V-parameter BP.

Each rule maps the observed slot state (queues, capacities, cost factors) to
link weights, a max-weight schedule, and actual transmissions. Transmissions
are integer packets; fractional predictions are integerized either by
per-edge residual accounting (default for HD, compensating whenever the
accumulated residue crosses +-1) or by rounding to the nearest integer.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .graph import DirectedNetwork, reduced_incidence
from .scheduling import ScheduleSet, max_weight_schedule

ROUNDING_MODES = ("residual", "nearest")


@dataclass(frozen=True)
class HDParams:
    beta: float = 0.0
    rounding: str = "residual"

    def __post_init__(self):
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError("beta must lie in [0, 1]")
        if self.rounding not in ROUNDING_MODES:
            raise ValueError(f"unknown rounding mode {self.rounding!r}")


@dataclass(frozen=True)
class VBPParams:
    v: float = 0.0

    def __post_init__(self):
        if self.v < 0:
            raise ValueError("V must be >= 0")


@dataclass
class SlotState:
    """Observed state at one slot: reduced queue vector plus channel draws."""

    n: int
    q: np.ndarray      # length n_nodes-1, integer-valued, >= 0
    mu: np.ndarray     # length n_edges, >= 0
    rho: np.ndarray    # length n_edges, >= 1


@dataclass
class PolicyDecision:
    weights: np.ndarray        # link weights fed to the scheduler
    predictions: np.ndarray    # per-link would-be transmissions (may be fractional)
    schedule_index: int
    schedule: np.ndarray       # 0/1 activation vector
    f_pre_round: np.ndarray    # schedule * predictions, before integerization
    f: np.ndarray              # actual integer transmissions
    nulls: np.ndarray          # BP diagnostic: capacity wasted on null packets


@dataclass
class ResidualLedger:
    """Per-edge accumulated fractional residue in (-1, 1)."""

    residue: np.ndarray

    @classmethod
    def zeros(cls, n_edges: int) -> "ResidualLedger":
        return cls(np.zeros(n_edges))


@lru_cache(maxsize=None)
def _arrays(net: DirectedNetwork):
    tails = np.array([e.tail for e in net.edges], dtype=np.intp)
    heads = np.array([e.head for e in net.edges], dtype=np.intp)
    dest_head = heads == net.destination
    queue_nodes = np.array(net.queue_nodes, dtype=np.intp)
    Bo = reduced_incidence(net)
    return tails, heads, dest_head, queue_nodes, Bo


def _full_queues(net: DirectedNetwork, q: np.ndarray) -> np.ndarray:
    _, _, _, queue_nodes, _ = _arrays(net)
    full = np.zeros(net.n_nodes)
    full[queue_nodes] = q
    return full


def hd_phi(beta: float, is_dest_head: bool, rho: float) -> float:
    """Forwarding fraction (1-beta)/theta + beta/rho, theta = 1 at the sink
    head and 2 elsewhere. Always in (0, 1] for rho >= 1."""
    if not 0.0 <= beta <= 1.0:
        raise ValueError("beta must lie in [0, 1]")
    if rho < 1.0:
        raise ValueError("cost factor must be >= 1")
    theta = 1.0 if is_dest_head else 2.0
    return (1.0 - beta) / theta + beta / rho


def hd_phi_vector(net: DirectedNetwork, beta: float, rho: np.ndarray) -> np.ndarray:
    _, _, dest_head, _, _ = _arrays(net)
    rho = np.asarray(rho, dtype=float)
    if (rho < 1.0).any():
        raise ValueError("cost factors must be >= 1")
    theta = np.where(dest_head, 1.0, 2.0)
    return (1.0 - beta) / theta + beta / rho


def hd_prediction(phi: float, q_tail: float, q_head: float, mu: float) -> float:
    """min(phi * positive queue differential, capacity); never exceeds q_tail."""
    return min(phi * max(0.0, q_tail - q_head), mu)


def hd_weight(phi: float, q_diff: float, f_hat: float) -> float:
    """2*phi*q_diff*f_hat - f_hat^2; nonnegative for f_hat from hd_prediction."""
    return 2.0 * phi * q_diff * f_hat - f_hat * f_hat


def apply_residuals(ledger: ResidualLedger, f_fractional: np.ndarray) -> np.ndarray:
    """Integerize fractional transmissions, compensating residues at +-1.

    Emits floor(f) packets plus one extra when the accumulated fractional
    residue reaches 1 (symmetrically minus one at -1), so the long-run
    emitted mean equals the fractional mean.
    """
    f = np.asarray(f_fractional, dtype=float)
    out = np.floor(f)
    ledger.residue += f - out
    up = ledger.residue >= 1.0 - 1e-12
    out[up] += 1.0
    ledger.residue[up] -= 1.0
    down = ledger.residue <= -1.0 + 1e-12
    out[down] -= 1.0
    ledger.residue[down] += 1.0
    return out


def _integerize(f_frac: np.ndarray, rounding: str, ledger: ResidualLedger | None) -> np.ndarray:
    if rounding == "residual":
        if ledger is None:
            raise ValueError("residual rounding needs a ledger")
        return apply_residuals(ledger, f_frac)
    return np.floor(np.asarray(f_frac, dtype=float) + 0.5)


def _enforce_queue_feasibility(net: DirectedNetwork, q: np.ndarray, f: np.ndarray,
                               w: np.ndarray, ledger: ResidualLedger | None) -> np.ndarray:
    """Cap per-node outflow at the available queue.

    Unreachable under the shared-transmitter constraint (one outgoing link
    per node, and predictions never exceed q_tail); kept as a safety net for
    hand-built schedule sets. Reductions go to the lowest-weight links first
    and are returned to the residue when a ledger is in use.
    """
    tails, _, _, _, _ = _arrays(net)
    qfull = _full_queues(net, q)
    f = f.copy()
    for node in np.unique(tails[f > 0]):
        mask = tails == node
        excess = f[mask].sum() - qfull[node]
        if excess <= 0:
            continue
        idx = np.flatnonzero(mask)
        for e in idx[np.argsort(w[idx], kind="stable")]:
            cut = min(f[e], excess)
            f[e] -= cut
            if ledger is not None:
                ledger.residue[e] += cut
            excess -= cut
            if excess <= 0:
                break
    return f


def hd_decide(net: DirectedNetwork, state: SlotState, params: HDParams,
              sched: ScheduleSet, ledger: ResidualLedger | None = None) -> PolicyDecision:
    """HD step: predict transmittable packets, weight, schedule, forward."""
    qfull = _full_queues(net, state.q)
    tails, heads, _, _, _ = _arrays(net)
    q_diff = qfull[tails] - qfull[heads]
    phi = hd_phi_vector(net, params.beta, state.rho)
    f_hat = np.minimum(phi * np.maximum(0.0, q_diff), state.mu)
    w = 2.0 * phi * q_diff * f_hat - f_hat ** 2
    idx, pi = max_weight_schedule(sched, w)
    f_pre = pi * f_hat
    f = _integerize(f_pre, params.rounding, ledger)
    f = _enforce_queue_feasibility(net, state.q, f, w, ledger)
    return PolicyDecision(w, f_hat, idx, pi, f_pre, f, np.zeros_like(f))


def bp_decide(net: DirectedNetwork, state: SlotState, sched: ScheduleSet,
              ledger: ResidualLedger | None = None) -> PolicyDecision:
    """Original BP: weight mu * (q_diff)+, transmit at full capacity.

    Only genuine packets move; the capacity a saturating BP would have spent
    on null packets, (mu - q_tail)+ on transmitting links, is recorded in
    `nulls`.
    """
    qfull = _full_queues(net, state.q)
    tails, heads, _, _, _ = _arrays(net)
    q_diff = qfull[tails] - qfull[heads]
    w = state.mu * np.maximum(0.0, q_diff)
    idx, pi = max_weight_schedule(sched, w)
    sending = (pi > 0) & (w > 0)
    f_hat = np.minimum(qfull[tails], state.mu)
    f_pre = np.where(sending, f_hat, 0.0)
    f = _integerize(f_pre, "residual" if ledger is not None else "nearest", ledger)
    f = _enforce_queue_feasibility(net, state.q, f, w, ledger)
    nulls = np.where(sending, np.maximum(0.0, state.mu - qfull[tails]), 0.0)
    return PolicyDecision(w, f_hat, idx, pi, f_pre, f, nulls)


def vbp_decide(net: DirectedNetwork, state: SlotState, params: VBPParams,
               sched: ScheduleSet, ledger: ResidualLedger | None = None) -> PolicyDecision:
    """V-parameter BP: queue differential discounted by V*rho*mu, then BP
    forwarding on positive-weight links. V=0 recovers bp_decide exactly."""
    qfull = _full_queues(net, state.q)
    tails, heads, _, _, _ = _arrays(net)
    q_diff = qfull[tails] - qfull[heads]
    w = state.mu * np.maximum(0.0, q_diff - params.v * state.rho * state.mu)
    idx, pi = max_weight_schedule(sched, w)
    sending = (pi > 0) & (w > 0)
    f_hat = np.minimum(qfull[tails], state.mu)
    f_pre = np.where(sending, f_hat, 0.0)
    f = _integerize(f_pre, "residual" if ledger is not None else "nearest", ledger)
    f = _enforce_queue_feasibility(net, state.q, f, w, ledger)
    nulls = np.where(sending, np.maximum(0.0, state.mu - qfull[tails]), 0.0)
    return PolicyDecision(w, f_hat, idx, pi, f_pre, f, nulls)
