"""Combinatorial heat calculus on directed graphs.

The directed-graph heat flow gates each edge by the sign of its temperature
differential: f = diag(sigma) * max(0, Bo^T q). Steady state with sources a
and the sink pinned at zero temperature is the nonlinear Poisson equation
Bo diag(sigma) (Bo^T q)+ = a, solved here by active-set iteration on the
support of positive differentials. Its dual, minimum energy dissipation
subject to flow conservation (Thomson form), is solved independently as a
primal active-set quadratic program on flows; temperatures reappear as the
Lagrange multipliers, and the two solvers must agree to solver tolerance.

The module also builds the nonsymmetric matrix M = (Bo Bo^T)^-1 Bo Phi Bo^T
used by the routing analysis and reports a battery of numerical checks on
it (eigenvalues, quadratic-form probes, gradient identity, skew bound).
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .graph import DirectedNetwork, reduced_incidence
from .policies import hd_phi_vector

DEFAULT_TOL = 1e-9


class InfeasibleSourceError(ValueError):
    """A positive heat source has no directed path to the sink."""

    def __init__(self, nodes):
        self.nodes = list(nodes)
        super().__init__(f"no directed path to sink from source node(s) {self.nodes}")


class SolverDivergenceError(RuntimeError):
    def __init__(self, residual, iterations):
        self.residual = residual
        self.iterations = iterations
        super().__init__(
            f"solver did not converge in {iterations} iterations "
            f"(last residual {residual:.3e})")


@dataclass(frozen=True)
class ThermalGraph:
    """Directed network with per-edge thermal diffusivities; the network
    destination is the heat sink, pinned at temperature zero."""

    net: DirectedNetwork
    sigma: np.ndarray

    def __post_init__(self):
        sigma = np.asarray(self.sigma, dtype=float)
        if sigma.shape != (self.net.n_edges,) or (sigma <= 0).any():
            raise ValueError("sigma must be a positive edge vector")
        object.__setattr__(self, "sigma", sigma)

    @property
    def sink(self) -> int:
        return self.net.destination


@dataclass
class ThermalSolution:
    temperatures: np.ndarray
    flows: np.ndarray
    dirichlet_energy: float
    dissipation_energy: float
    converged: bool
    iterations: int
    residual: float = 0.0

    def to_dict(self) -> dict:
        return {
            "temperatures": self.temperatures.tolist(),
            "flows": self.flows.tolist(),
            "dirichlet_energy": self.dirichlet_energy,
            "dissipation_energy": self.dissipation_energy,
            "converged": self.converged,
            "iterations": self.iterations,
            "residual": self.residual,
        }


def dirichlet_laplacian(net: DirectedNetwork, sigma: np.ndarray) -> np.ndarray:
    """Bo diag(sigma) Bo^T; symmetric positive definite when the support
    graph is connected to the sink, singular otherwise."""
    sigma = np.asarray(sigma, dtype=float)
    Bo = reduced_incidence(net)
    return (Bo * sigma) @ Bo.T


def nonlinear_laplacian_apply(tg: ThermalGraph, q: np.ndarray) -> np.ndarray:
    """Bo diag(sigma) max(0, Bo^T q): net heat outflow under one-way flow."""
    Bo = reduced_incidence(tg.net)
    return Bo @ (tg.sigma * np.maximum(0.0, Bo.T @ np.asarray(q, dtype=float)))


def dirichlet_energy(tg: ThermalGraph, q: np.ndarray, a: np.ndarray) -> float:
    """0.5 (Bo^T q)+^T diag(sigma) (Bo^T q)+ - q^T a."""
    Bo = reduced_incidence(tg.net)
    g = np.maximum(0.0, Bo.T @ np.asarray(q, dtype=float))
    return float(0.5 * g @ (tg.sigma * g) - np.asarray(q, dtype=float) @ np.asarray(a, dtype=float))


def check_feasible(net: DirectedNetwork, a: np.ndarray) -> None:
    """Every node with a positive source needs a directed path to the sink."""
    a = np.asarray(a, dtype=float)
    if a.shape != (net.n_nodes - 1,):
        raise ValueError("source vector must cover the non-destination nodes")
    if (a < 0).any():
        raise ValueError("negative heat sources are not supported")
    reaches = _reaches_sink(net)
    bad = [n for n, ai in zip(net.queue_nodes, a) if ai > 0 and not reaches[n]]
    if bad:
        raise InfeasibleSourceError(bad)


def _reaches_sink(net: DirectedNetwork) -> np.ndarray:
    """Boolean per node: directed path to the destination exists."""
    radj = [[] for _ in range(net.n_nodes)]
    for e in net.edges:
        radj[e.head].append(e.tail)
    seen = np.zeros(net.n_nodes, dtype=bool)
    seen[net.destination] = True
    stack = [net.destination]
    while stack:
        u = stack.pop()
        for v in radj[u]:
            if not seen[v]:
                seen[v] = True
                stack.append(v)
    return seen


def _directed_path_to_sink(net: DirectedNetwork, src: int) -> list[int] | None:
    """Edge ids of a shortest directed path src -> sink, or None."""
    adj = [[] for _ in range(net.n_nodes)]
    for e in net.edges:
        adj[e.tail].append(e)
    prev: dict[int, object] = {src: None}
    dq = deque([src])
    while dq:
        u = dq.popleft()
        if u == net.destination:
            path = []
            while prev[u] is not None:
                e = prev[u]
                path.append(e.id)
                u = e.tail
            return path[::-1]
        for e in adj[u]:
            if e.head not in prev:
                prev[e.head] = e
                dq.append(e.head)
    return None


def _solve_psd(L: np.ndarray, a: np.ndarray) -> np.ndarray:
    """Solve L q = a, falling back to least squares when L is singular
    (support subgraph disconnected from the sink)."""
    try:
        q = np.linalg.solve(L, a)
        if np.isfinite(q).all():
            return q
    except np.linalg.LinAlgError:
        pass
    return np.linalg.lstsq(L, a, rcond=None)[0]


def solve_nonlinear_poisson(tg: ThermalGraph, a: np.ndarray,
                            tol: float = DEFAULT_TOL) -> ThermalSolution:
    """Active-set solution of Bo diag(sigma) (Bo^T q)+ = a.

    Starts from all edges active (plain linear Dirichlet solve), then
    re-solves on the support of positive temperature differentials until the
    indicator pattern is self-consistent. If the active-set iteration cycles,
    falls back to gradient descent on the (convex, C^1) energy before a final
    polish solve. Exactly-zero differentials are treated as inactive.
    """
    net = tg.net
    a = np.asarray(a, dtype=float)
    check_feasible(net, a)
    Bo = reduced_incidence(net)
    m = net.n_edges
    if m == 0 or net.n_nodes < 2:
        if (a > 0).any():
            raise InfeasibleSourceError(list(net.queue_nodes))
        zq = np.zeros(net.n_nodes - 1)
        return ThermalSolution(zq, np.zeros(m), 0.0, 0.0, True, 0)

    def residual_of(q):
        return float(np.abs(Bo @ (tg.sigma * np.maximum(0.0, Bo.T @ q)) - a).max())

    active = np.ones(m, dtype=bool)
    seen: set[bytes] = set()
    cap = max(10 * m, 30)
    q = np.zeros(net.n_nodes - 1)
    iterations = 0
    cycled = False
    for iterations in range(1, cap + 1):
        L = (Bo * (tg.sigma * active)) @ Bo.T
        q = _solve_psd(L, a)
        diff = Bo.T @ q
        if residual_of(q) <= tol:
            break
        new_active = diff > tol * max(1.0, np.abs(diff).max())
        key = np.packbits(new_active).tobytes()
        if key in seen:
            cycled = True
            break
        seen.add(key)
        active = new_active
    else:
        cycled = True

    if cycled or residual_of(q) > tol:
        q = _energy_descent(Bo, tg.sigma, a, q, tol)
        # polish: one linear solve on the descent's support
        active = (Bo.T @ q) > tol * max(1.0, np.abs(Bo.T @ q).max())
        L = (Bo * (tg.sigma * active)) @ Bo.T
        q_p = _solve_psd(L, a)
        if residual_of(q_p) <= residual_of(q):
            q = q_p

    res = residual_of(q)
    if res > tol:
        raise SolverDivergenceError(res, iterations)
    q = np.where((q < 0) & (q > -1e3 * tol), 0.0, q)
    flows = tg.sigma * np.maximum(0.0, Bo.T @ q)
    return ThermalSolution(
        q, flows,
        dirichlet_energy(tg, q, a),
        float(flows @ (flows / tg.sigma)),
        True, iterations, res)


def _energy_descent(Bo, sigma, a, q0, tol, max_iter=20000):
    """Backtracking gradient descent on the nonlinear Dirichlet energy.

    The energy is convex with a C^1 gradient Bo diag(sigma) (Bo^T q)+ - a,
    so plain descent converges; used only when the active-set loop cycles.
    """
    q = q0.copy()
    lip = float(np.linalg.eigvalsh((Bo * sigma) @ Bo.T).max())
    step = 1.0 / max(lip, 1e-12)

    def energy(qv):
        g = np.maximum(0.0, Bo.T @ qv)
        return 0.5 * g @ (sigma * g) - qv @ a

    e = energy(q)
    for _ in range(max_iter):
        grad = Bo @ (sigma * np.maximum(0.0, Bo.T @ q)) - a
        gnorm = np.abs(grad).max()
        if gnorm <= tol:
            break
        t = step
        for _ in range(60):
            q_new = q - t * grad
            e_new = energy(q_new)
            if e_new <= e - 0.25 * t * (grad @ grad):
                break
            t *= 0.5
        q, e = q_new, e_new
    return q


def solve_thomson(tg: ThermalGraph, a: np.ndarray, tol: float = DEFAULT_TOL,
                  ) -> tuple[np.ndarray, np.ndarray]:
    """Minimize f^T diag(1/sigma) f subject to Bo f = a, f >= 0.

    Primal active-set iteration: start from a feasible path-flow, take
    equality-constrained steps on the currently free edges, block at the
    nonnegativity boundary, and release the working-set edge with the most
    attractive multiplier. Returns (flows, duals); the duals are the node
    temperatures of the matching heat-flow problem.
    """
    net = tg.net
    a = np.asarray(a, dtype=float)
    check_feasible(net, a)
    Bo = reduced_incidence(net)
    m = net.n_edges
    nq = net.n_nodes - 1

    f = np.zeros(m)
    for idx, node in enumerate(net.queue_nodes):
        if a[idx] > 0:
            path = _directed_path_to_sink(net, node)
            for e in path:
                f[e] += a[idx]

    working = f <= 0.0
    lam = np.zeros(nq)
    cap = 50 * (m + nq) + 100
    for it in range(cap):
        free = ~working
        BoF = Bo[:, free]
        sigF = tg.sigma[free]
        L = (BoF * sigF) @ BoF.T
        lam = _solve_psd(L, a)
        target = np.zeros(m)
        target[free] = sigF * (BoF.T @ lam)
        d = target - f
        if np.abs(d).max() <= tol:
            # multiplier check on the working set: release if some frozen
            # edge wants positive flow (positive temperature differential)
            grad_w = Bo.T @ lam
            cand = np.flatnonzero(working & (grad_w > tol))
            if cand.size == 0:
                f = np.maximum(f, 0.0)
                return f, lam
            working[cand[np.argmax(grad_w[cand])]] = False
            continue
        blocking = (d < -tol) & free
        alpha = 1.0
        hit = -1
        if blocking.any():
            steps = -f[blocking] / d[blocking]
            k = int(np.argmin(steps))
            if steps[k] < 1.0:
                alpha = max(steps[k], 0.0)
                hit = np.flatnonzero(blocking)[k]
        f = f + alpha * d
        if hit >= 0:
            f[hit] = 0.0
            working[hit] = True
    raise SolverDivergenceError(float(np.abs(Bo @ f - a).max()), cap)


def reference_model(net: DirectedNetwork, beta: float, rho_bar: np.ndarray,
                    a_bar: np.ndarray, tol: float = DEFAULT_TOL) -> ThermalSolution:
    """Static thermal reference for a long-run network: diffusivities are the
    expected forwarding fractions phi(beta, rho_bar)."""
    sigma = hd_phi_vector(net, beta, rho_bar)
    return solve_nonlinear_poisson(ThermalGraph(net, sigma), a_bar, tol)


def assumption2_check(sol: ThermalSolution, mu_eff: np.ndarray,
                      tol: float = 1e-9) -> tuple[bool, list[int]]:
    """Reference flows must fit inside the effective capacities, entrywise."""
    mu_eff = np.asarray(mu_eff, dtype=float)
    violations = np.flatnonzero(sol.flows > mu_eff + tol)
    return violations.size == 0, violations.tolist()


def m_circ(net: DirectedNetwork, phi: np.ndarray) -> np.ndarray:
    """(Bo Bo^T)^-1 Bo diag(phi) Bo^T (nonsymmetric in general)."""
    phi = np.asarray(phi, dtype=float)
    Bo = reduced_incidence(net)
    gram = Bo @ Bo.T
    try:
        return np.linalg.solve(gram, (Bo * phi) @ Bo.T)
    except np.linalg.LinAlgError as exc:
        raise ValueError("graph is disconnected (Bo Bo^T singular)") from exc


@dataclass
class LemmaReport:
    min_eig_real: float
    quad_form_min: float
    gradient_identity_residual: float | None
    skew_excess_max: float
    colsum_min: float
    rowsum_min: float
    tol: float
    probes: int

    @property
    def eig_ok(self) -> bool:
        return self.min_eig_real > 0

    @property
    def quad_ok(self) -> bool:
        return self.quad_form_min >= -self.tol

    @property
    def identity_ok(self) -> bool:
        return (self.gradient_identity_residual is not None
                and self.gradient_identity_residual <= self.tol)

    @property
    def skew_ok(self) -> bool:
        return self.skew_excess_max <= self.tol

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in (
            "min_eig_real", "quad_form_min", "gradient_identity_residual",
            "skew_excess_max", "colsum_min", "rowsum_min", "tol", "probes")}
        d.update(eig_ok=self.eig_ok, quad_ok=self.quad_ok,
                 identity_ok=self.identity_ok, skew_ok=self.skew_ok)
        return d


def lemma_checks(M: np.ndarray, probes: int = 100, tol: float = DEFAULT_TOL,
                 rng: np.random.Generator | None = None,
                 net: DirectedNetwork | None = None,
                 phi: np.ndarray | None = None) -> LemmaReport:
    """Numerical battery for the routing system matrix M.

    Reports the minimum eigenvalue real part, the minimum of x^T M x over
    random probes, the worst excess of |x^T (M^T - M) y| over |x^T M y|,
    column/row sum minima, and (when net and phi are given) the worst
    residual of Bo^T M x = diag(phi) Bo^T x over the probes. These are
    checks, not guarantees: the quadratic-form, identity, and skew bounds
    fail on some graphs with non-uniform phi (see the test suite).
    """
    M = np.asarray(M, dtype=float)
    n = M.shape[0]
    rng = rng or np.random.default_rng(0)
    min_eig = float(np.linalg.eigvals(M).real.min())
    quad_min = np.inf
    skew_excess = -np.inf
    ident_res = None
    if net is not None and phi is not None:
        Bo = reduced_incidence(net)
        ident_res = 0.0
    for _ in range(probes):
        x = rng.normal(size=n)
        y = rng.normal(size=n)
        quad_min = min(quad_min, float(x @ M @ x))
        skew_excess = max(skew_excess,
                          float(abs(x @ (M.T - M) @ y) - abs(x @ M @ y)))
        if ident_res is not None:
            r = np.abs(Bo.T @ (M @ x) - phi * (Bo.T @ x)).max()
            ident_res = max(ident_res, float(r))
    ones = np.ones(n)
    return LemmaReport(
        min_eig_real=min_eig,
        quad_form_min=float(quad_min),
        gradient_identity_residual=ident_res,
        skew_excess_max=float(skew_excess),
        colsum_min=float((ones @ M).min()),
        rowsum_min=float((M @ ones).min()),
        tol=tol,
        probes=probes,
    )
