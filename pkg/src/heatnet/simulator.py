"""Slotted-time network simulator and its diagnostic functionals.

Event order within a slot: observe (queues, capacities, cost factors) ->
policy decision -> transmit -> exogenous arrivals -> advance. Queue dynamics
are q(n+1) = q(n) + a(n) - Bo f(n) with no clipping: feasible decisions never
drive a queue negative, and a negative component aborts the run as an
internal invariant violation.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .graph import DirectedNetwork, reduced_incidence
from .policies import (HDParams, PolicyDecision, ResidualLedger, SlotState,
                       VBPParams, bp_decide, hd_decide, vbp_decide)
from .scheduling import ScheduleSet
from .traffic import ArrivalProcess, ChannelStateProcess, expected_channel

DEFAULT_QUEUE_GUARD = 1e7


class QueueInvariantError(RuntimeError):
    """A transmission drove a queue negative (policy bug, not instability)."""


@dataclass(frozen=True)
class PolicySpec:
    """Which decision rule to run and its parameters."""

    kind: str  # "hd" | "bp" | "vbp"
    hd: HDParams | None = None
    vbp: VBPParams | None = None

    def __post_init__(self):
        if self.kind not in ("hd", "bp", "vbp"):
            raise ValueError(f"unknown policy kind {self.kind!r}")
        if self.kind == "hd" and self.hd is None:
            object.__setattr__(self, "hd", HDParams())
        if self.kind == "vbp" and self.vbp is None:
            object.__setattr__(self, "vbp", VBPParams())

    @property
    def label(self) -> str:
        if self.kind == "hd":
            return f"hd(beta={self.hd.beta:g})"
        if self.kind == "vbp":
            return f"vbp(v={self.vbp.v:g})"
        return "bp"

    def decide(self, net, state, sched, ledger) -> PolicyDecision:
        if self.kind == "hd":
            return hd_decide(net, state, self.hd, sched, ledger)
        if self.kind == "bp":
            return bp_decide(net, state, sched, ledger)
        return vbp_decide(net, state, self.vbp, sched, ledger)


@dataclass
class RunConfig:
    net: DirectedNetwork
    sched: ScheduleSet
    policy: PolicySpec
    arrivals: ArrivalProcess
    channel: ChannelStateProcess
    horizon: int
    burn_in: int | None = None  # default: first 20% of horizon
    queue_guard: float = DEFAULT_QUEUE_GUARD
    record: bool = True
    q0: np.ndarray | None = None

    def __post_init__(self):
        if self.burn_in is None:
            self.burn_in = self.horizon // 5
        if not 0 <= self.burn_in < self.horizon:
            raise ValueError("need 0 <= burn_in < horizon")


@dataclass
class RunTrace:
    """Per-slot records plus cumulative tallies.

    q[n] is the state observed at slot n (before slot-n transmissions and
    arrivals); f, arrivals, mu, rho, w, schedule_index belong to the same
    slot. The schedule tallies satisfy sum(T_pi) == slots run.
    """

    slots: int
    burn_in: int
    q: np.ndarray | None
    f: np.ndarray | None
    arrivals: np.ndarray | None
    mu: np.ndarray | None
    rho: np.ndarray | None
    w: np.ndarray | None
    schedule_index: np.ndarray
    total_queue: np.ndarray
    slot_cost: np.ndarray           # sum over edges of rho * f^2, per slot
    f_total: np.ndarray             # cumulative transmissions per edge
    arrivals_total: np.ndarray
    schedule_tally: np.ndarray      # slots each schedule was selected
    nulls_total: float
    guard_tripped: bool

    def to_csv(self, path, net: DirectedNetwork) -> None:
        if self.q is None:
            raise ValueError("trace was recorded with record=False")
        qcols = [f"q_{net.label(i)}" for i in net.queue_nodes]
        fcols = [f"f_{net.label(e.tail)}->{net.label(e.head)}" for e in net.edges]
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["slot", *qcols, *fcols, "schedule_id", "total_queue", "slot_cost"])
            for n in range(self.slots):
                wr.writerow([n, *self.q[n], *self.f[n],
                             int(self.schedule_index[n]),
                             self.total_queue[n], self.slot_cost[n]])


@dataclass
class Metrics:
    q_bar_total: float
    q_bar: np.ndarray
    r_bar: float
    f_bar: np.ndarray
    a_bar: np.ndarray
    null_rate: float
    flow_residual: float            # || a_bar - Bo f_bar ||
    verdict: str                    # "stable" | "unstable"
    guard_tripped: bool
    trend_slope: float
    slots_used: int
    burn_in: int

    def pareto_objective(self, beta: float) -> float:
        return (1.0 - beta) * self.q_bar_total + beta * self.r_bar

    def to_dict(self) -> dict:
        return {
            "q_bar_total": self.q_bar_total,
            "q_bar": self.q_bar.tolist(),
            "r_bar": self.r_bar,
            "f_bar": self.f_bar.tolist(),
            "a_bar": self.a_bar.tolist(),
            "null_rate": self.null_rate,
            "flow_residual": self.flow_residual,
            "verdict": self.verdict,
            "guard_tripped": self.guard_tripped,
            "trend_slope": self.trend_slope,
            "slots_used": self.slots_used,
            "burn_in": self.burn_in,
        }

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)


def queue_step(q: np.ndarray, a: np.ndarray, f: np.ndarray,
               net: DirectedNetwork, Bo: np.ndarray | None = None) -> np.ndarray:
    """One slot of queue dynamics: q + a - Bo f, with a hard nonnegativity
    check (feasible transmissions never need clipping)."""
    if Bo is None:
        Bo = reduced_incidence(net)
    q_next = q + a - Bo @ f
    if (q_next < -1e-9).any():
        raise QueueInvariantError(f"negative queue after step: {q_next}")
    return np.maximum(q_next, 0.0)


def run(config: RunConfig) -> tuple[RunTrace, Metrics]:
    """Simulate the configured policy for `horizon` slots."""
    net, sched = config.net, config.sched
    T = config.horizon
    nq, m = net.n_nodes - 1, net.n_edges
    Bo = reduced_incidence(net)
    ledger = ResidualLedger.zeros(m)
    q = np.zeros(nq) if config.q0 is None else np.asarray(config.q0, dtype=float).copy()

    rec = config.record
    q_hist = np.zeros((T, nq)) if rec else None
    f_hist = np.zeros((T, m)) if rec else None
    a_hist = np.zeros((T, nq)) if rec else None
    mu_hist = np.zeros((T, m)) if rec else None
    rho_hist = np.zeros((T, m)) if rec else None
    w_hist = np.zeros((T, m)) if rec else None
    sched_idx = np.zeros(T, dtype=np.int64)
    total_queue = np.zeros(T)
    slot_cost = np.zeros(T)
    f_total = np.zeros(m)
    a_total = np.zeros(nq)
    tally = np.zeros(sched.n_schedules, dtype=np.int64)
    nulls_total = 0.0

    # post-burn-in accumulators (online, so record=False stays cheap)
    q_sum = np.zeros(nq)
    f_sum = np.zeros(m)
    a_sum = np.zeros(nq)
    cost_sum = 0.0
    null_sum = 0.0
    tail = 0

    guard_tripped = False
    slots_run = T
    for n in range(T):
        mu, rho = config.channel.sample(n)
        state = SlotState(n, q, mu, rho)
        dec = config.policy.decide(net, state, sched, ledger)
        if rec:
            q_hist[n] = q
            f_hist[n] = dec.f
            mu_hist[n] = mu
            rho_hist[n] = rho
            w_hist[n] = dec.weights
        sched_idx[n] = dec.schedule_index
        tally[dec.schedule_index] += 1
        total_queue[n] = q.sum()
        cost = float(rho @ (dec.f ** 2))
        slot_cost[n] = cost
        f_total += dec.f
        nulls_total += float(dec.nulls.sum())

        q_after_tx = q - Bo @ dec.f
        if (q_after_tx < -1e-9).any():
            raise QueueInvariantError(
                f"policy {config.policy.label} drove a queue negative at slot {n}")
        a = config.arrivals.sample(n)
        if rec:
            a_hist[n] = a
        a_total += a
        q = np.maximum(q_after_tx, 0.0) + a

        if n >= config.burn_in:
            q_sum += q_hist[n] if rec else state.q
            f_sum += dec.f
            a_sum += a
            cost_sum += cost
            null_sum += float(dec.nulls.sum())
            tail += 1

        if q.sum() > config.queue_guard:
            guard_tripped = True
            slots_run = n + 1
            break

    if slots_run < T:
        sched_idx = sched_idx[:slots_run]
        total_queue = total_queue[:slots_run]
        slot_cost = slot_cost[:slots_run]
        if rec:
            q_hist = q_hist[:slots_run]
            f_hist = f_hist[:slots_run]
            a_hist = a_hist[:slots_run]
            mu_hist = mu_hist[:slots_run]
            rho_hist = rho_hist[:slots_run]
            w_hist = w_hist[:slots_run]

    trace = RunTrace(
        slots=slots_run, burn_in=config.burn_in,
        q=q_hist, f=f_hist, arrivals=a_hist, mu=mu_hist, rho=rho_hist,
        w=w_hist, schedule_index=sched_idx, total_queue=total_queue,
        slot_cost=slot_cost, f_total=f_total, arrivals_total=a_total,
        schedule_tally=tally, nulls_total=nulls_total,
        guard_tripped=guard_tripped)

    tail = max(tail, 1)
    q_bar = q_sum / tail
    f_bar = f_sum / tail
    a_bar = a_sum / tail
    slope = _trend_slope(total_queue)
    unstable = guard_tripped or _trending_up(total_queue, slope)
    metrics = Metrics(
        q_bar_total=float(q_bar.sum()),
        q_bar=q_bar,
        r_bar=cost_sum / tail,
        f_bar=f_bar,
        a_bar=a_bar,
        null_rate=null_sum / tail,
        flow_residual=float(np.linalg.norm(a_bar - Bo @ f_bar)),
        verdict="unstable" if unstable else "stable",
        guard_tripped=guard_tripped,
        trend_slope=slope,
        slots_used=slots_run,
        burn_in=config.burn_in)
    return trace, metrics


def _trend_slope(total_queue: np.ndarray) -> float:
    half = total_queue[len(total_queue) // 2:]
    if len(half) < 4:
        return 0.0
    x = np.arange(len(half), dtype=float)
    return float(np.polyfit(x, half, 1)[0])


def _trending_up(total_queue: np.ndarray, slope: float) -> bool:
    half = total_queue[len(total_queue) // 2:]
    if len(half) < 4:
        return False
    growth = slope * len(half)
    return growth > max(0.25 * float(half.mean()), 5.0)


def d_functional(f: np.ndarray, q: np.ndarray, phi: np.ndarray,
                 net: DirectedNetwork) -> float:
    """2 f^T diag(phi) Bo^T q - f^T f."""
    Bo = reduced_incidence(net)
    f = np.asarray(f, dtype=float)
    return float(2.0 * f @ (np.asarray(phi) * (Bo.T @ np.asarray(q))) - f @ f)


def g_functional(f: np.ndarray, q: np.ndarray, net: DirectedNetwork) -> float:
    """2 f^T Bo^T q - f^T Bo^T Bo f."""
    Bo = reduced_incidence(net)
    f = np.asarray(f, dtype=float)
    g = Bo @ f
    return float(2.0 * f @ (Bo.T @ np.asarray(q)) - g @ g)


def lyapunov_w(q: np.ndarray, m_circ: np.ndarray) -> float:
    """q^T M q for the routing system matrix M."""
    q = np.asarray(q, dtype=float)
    return float(q @ np.asarray(m_circ) @ q)


@dataclass
class CovarianceIdentityReport:
    """Empirical two-sided balance of the stationary covariance identity
    2 Cov(Bo f, q) - Var(Bo f) = 2 Cov(a, q - Bo f) + Var(a), with moments
    taken as time averages over the post-burn-in window."""

    lhs: float
    rhs: float
    terms: dict
    scale: float

    @property
    def residual(self) -> float:
        return abs(self.lhs - self.rhs)

    @property
    def relative_residual(self) -> float:
        return self.residual / max(self.scale, 1e-9)


def lemma5_check(trace: RunTrace, net: DirectedNetwork) -> CovarianceIdentityReport:
    if trace.q is None:
        raise ValueError("needs a trace recorded with record=True")
    b = trace.burn_in
    Bo = reduced_incidence(net)
    q = trace.q[b:]
    a = trace.arrivals[b:]
    bf = trace.f[b:] @ Bo.T

    def cov(X, Y):
        return float(np.mean(np.sum(X * Y, axis=1))
                     - X.mean(axis=0) @ Y.mean(axis=0))

    t_cov_fq = 2.0 * cov(bf, q)
    t_var_f = cov(bf, bf)
    t_cov_a = 2.0 * cov(a, q - bf)
    t_var_a = cov(a, a)
    terms = {"2cov_bf_q": t_cov_fq, "var_bf": t_var_f,
             "2cov_a_qmbf": t_cov_a, "var_a": t_var_a}
    scale = max(abs(v) for v in terms.values())
    return CovarianceIdentityReport(
        lhs=t_cov_fq - t_var_f, rhs=t_cov_a + t_var_a,
        terms=terms, scale=scale)


def effective_capacity(trace: RunTrace, proc: ChannelStateProcess,
                       sched: ScheduleSet) -> np.ndarray:
    """Time average of (selected schedule) * E{mu} over post-burn-in slots."""
    mu_bar, _ = expected_channel(proc)
    idx = trace.schedule_index[trace.burn_in:]
    frac = np.bincount(idx, minlength=sched.n_schedules) / max(len(idx), 1)
    return (frac @ sched.activation) * mu_bar
