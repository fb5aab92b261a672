"""Stochastic arrival and channel-state processes.

Arrival processes produce integer packet counts per non-destination node and
slot. Channel processes produce per-edge capacity and cost-factor vectors
from a finite state set, in one of three modes: a single constant state,
i.i.d. categorical draws, or an ergodic Markov chain over states.

Each process owns its RNG stream; two processes built from the same seed via
`split_streams` evolve independently, so swapping one process never perturbs
the other's sample path.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

POISSON_TRUNCATION = 10**6  # keeps sampled arrivals within finite variance guard

ARRIVAL_KINDS = ("deterministic", "bernoulli", "poisson")
CHANNEL_MODES = ("constant", "iid", "markov")


def split_streams(seed: int, n: int = 2) -> list[np.random.Generator]:
    """Independent child generators from one seed (arrivals, channel, ...)."""
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


@dataclass
class ArrivalProcess:
    """Exogenous packet arrivals a(n) over the reduced (queue) node set.

    `rates` is indexed like reduced node vectors; the destination has no
    entry (its arrivals are identically zero).
    """

    kind: str
    rates: np.ndarray
    rng: np.random.Generator = field(default_factory=np.random.default_rng)

    def __post_init__(self):
        if self.kind not in ARRIVAL_KINDS:
            raise ValueError(f"unknown arrival kind {self.kind!r}")
        self.rates = np.asarray(self.rates, dtype=float)
        if (self.rates < 0).any() or not np.isfinite(self.rates).all():
            raise ValueError("arrival rates must be finite and >= 0")
        if self.kind == "bernoulli" and (self.rates > 1).any():
            raise ValueError("bernoulli rates must lie in [0, 1]")
        if self.kind == "deterministic" and (self.rates != np.rint(self.rates)).any():
            raise ValueError("deterministic arrivals must be whole packets")

    def mean(self) -> np.ndarray:
        return self.rates.copy()

    def sample(self, n: int) -> np.ndarray:
        """Integer arrivals for slot n (n is informational; draws are sequential)."""
        if self.kind == "deterministic":
            return self.rates.astype(np.int64)
        if self.kind == "bernoulli":
            return (self.rng.random(self.rates.shape) < self.rates).astype(np.int64)
        draws = self.rng.poisson(self.rates)
        return np.minimum(draws, POISSON_TRUNCATION).astype(np.int64)


def sample_arrivals(proc: ArrivalProcess, n: int) -> np.ndarray:
    return proc.sample(n)


@dataclass
class ChannelStateProcess:
    """Finite-state channel: per-state capacity and cost-factor edge vectors.

    mu_states / rho_states have shape (n_states, n_edges). `probs` is the
    categorical distribution for iid mode; `transition` the row-stochastic
    matrix for markov mode (initial state drawn from `probs`).
    """

    mode: str
    mu_states: np.ndarray
    rho_states: np.ndarray
    probs: np.ndarray | None = None
    transition: np.ndarray | None = None
    rng: np.random.Generator = field(default_factory=np.random.default_rng)
    _state: int = field(default=-1, repr=False)

    def __post_init__(self):
        if self.mode not in CHANNEL_MODES:
            raise ValueError(f"unknown channel mode {self.mode!r}")
        self.mu_states = np.atleast_2d(np.asarray(self.mu_states, dtype=float))
        self.rho_states = np.atleast_2d(np.asarray(self.rho_states, dtype=float))
        if self.mu_states.shape != self.rho_states.shape:
            raise ValueError("mu/rho state tables must have matching shapes")
        if (self.mu_states < 0).any():
            raise ValueError("capacities must be >= 0")
        if (self.rho_states < 1).any():
            raise ValueError("cost factors must be >= 1")
        k = self.n_states
        if self.mode == "constant":
            if k != 1:
                raise ValueError("constant mode takes exactly one state")
        if self.mode == "iid":
            if self.probs is None:
                raise ValueError("iid mode needs state probabilities")
            self.probs = np.asarray(self.probs, dtype=float)
            if self.probs.shape != (k,) or abs(self.probs.sum() - 1.0) > 1e-9 or (self.probs < 0).any():
                raise ValueError("state probabilities must be a distribution over states")
        if self.mode == "markov":
            if self.transition is None:
                raise ValueError("markov mode needs a transition matrix")
            self.transition = np.asarray(self.transition, dtype=float)
            if self.transition.shape != (k, k) or (self.transition < 0).any() \
                    or not np.allclose(self.transition.sum(axis=1), 1.0, atol=1e-9):
                raise ValueError("transition matrix must be row-stochastic over states")
            if self.probs is None:
                self.probs = np.full(k, 1.0 / k)
            else:
                self.probs = np.asarray(self.probs, dtype=float)

    @property
    def n_states(self) -> int:
        return self.mu_states.shape[0]

    @property
    def n_edges(self) -> int:
        return self.mu_states.shape[1]

    def sample(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        """(mu, rho) edge vectors for slot n."""
        if self.mode == "constant":
            s = 0
        elif self.mode == "iid":
            s = int(self.rng.choice(self.n_states, p=self.probs))
        else:
            if self._state < 0:
                self._state = int(self.rng.choice(self.n_states, p=self.probs))
            else:
                self._state = int(self.rng.choice(self.n_states, p=self.transition[self._state]))
            s = self._state
        return self.mu_states[s].copy(), self.rho_states[s].copy()


def sample_channel(proc: ChannelStateProcess, n: int) -> tuple[np.ndarray, np.ndarray]:
    return proc.sample(n)


def stationary_distribution(transition: np.ndarray) -> np.ndarray:
    """Unique stationary distribution of a row-stochastic matrix.

    Raises ValueError when the stationary distribution is not unique
    (reducible chain with several recurrent classes).
    """
    P = np.asarray(transition, dtype=float)
    k = P.shape[0]
    A = P.T - np.eye(k)
    # null space of (P^T - I); uniqueness <=> one-dimensional
    _, s, vt = np.linalg.svd(A)
    tol = max(k, 10) * np.finfo(float).eps * (s[0] if s.size else 1.0)
    null_dim = int(np.sum(s <= max(tol, 1e-12)))
    if null_dim != 1:
        raise ValueError("stationary distribution is not unique (non-ergodic chain)")
    pi = vt[-1]
    pi = np.abs(pi) / np.abs(pi).sum()
    return pi


def expected_channel(proc: ChannelStateProcess) -> tuple[np.ndarray, np.ndarray]:
    """Exact stationary expectations (mu_bar, rho_bar), never sampled."""
    if proc.mode == "constant":
        return proc.mu_states[0].copy(), proc.rho_states[0].copy()
    if proc.mode == "iid":
        w = proc.probs
    else:
        w = stationary_distribution(proc.transition)
    return w @ proc.mu_states, w @ proc.rho_states


def shannon_capacity(power: float, bandwidth: float, noise: float) -> float:
    """Omega * log2(1 + P/N), in packets per slot (not rounded)."""
    if power <= 0 or bandwidth <= 0 or noise <= 0:
        raise ValueError("power, bandwidth and noise must be positive")
    return bandwidth * np.log2(1.0 + power / noise)
