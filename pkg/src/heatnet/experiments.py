"""Experiment drivers: single runs, parameter sweeps, fluid-vs-thermal
comparison, and the numerical validation suite."""
from __future__ import annotations

import itertools
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import simulator, thermal
from .config import ScenarioConfig, build_network, build_run
from .graph import DirectedNetwork, network_from_pairs
from .policies import (HDParams, ResidualLedger, SlotState, VBPParams,
                       bp_decide, hd_decide, hd_phi_vector, vbp_decide)
from .scheduling import InterferenceModel, schedule_for
from .simulator import Metrics, RunTrace, run
from .traffic import expected_channel


@dataclass
class ResultRecord:
    scenario: str
    policy: str
    parameter: float | None
    seed: int
    q_bar: float
    r_bar: float
    f_bar: list[float]
    verdict: str
    null_rate: float
    runtime: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def run_scenario(cfg: ScenarioConfig, seed: int | None = None,
                 horizon: int | None = None, policy: dict | None = None,
                 out_dir: Path | None = None, fmt: str = "csv,json",
                 capacity_override: dict | None = None,
                 record: bool = True) -> tuple[ResultRecord, Metrics, RunTrace]:
    """Run one scenario; optionally persist the trace (CSV) and metrics (JSON)."""
    rc = build_run(cfg, seed=seed, horizon=horizon, policy=policy,
                   record=record, capacity_override=capacity_override)
    t0 = time.perf_counter()
    trace, metrics = run(rc)
    elapsed = time.perf_counter() - t0
    pol = rc.policy
    param = pol.hd.beta if pol.kind == "hd" else (pol.vbp.v if pol.kind == "vbp" else None)
    record_row = ResultRecord(
        scenario=cfg.name, policy=pol.kind, parameter=param,
        seed=cfg.run["seed"] if seed is None else seed,
        q_bar=metrics.q_bar_total, r_bar=metrics.r_bar,
        f_bar=metrics.f_bar.tolist(), verdict=metrics.verdict,
        null_rate=metrics.null_rate, runtime=elapsed)
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        stem = f"{cfg.name}_{pol.label}_seed{record_row.seed}"
        formats = {f.strip() for f in fmt.split(",")}
        if "csv" in formats and trace.q is not None:
            trace.to_csv(out_dir / f"{stem}_trace.csv", rc.net)
        if "json" in formats:
            doc = metrics.to_dict()
            doc["record"] = record_row.to_dict()
            with open(out_dir / f"{stem}_metrics.json", "w") as fh:
                json.dump(doc, fh, indent=2)
    return record_row, metrics, trace


def sweep(cfg: ScenarioConfig, axis: str, grid, seeds,
          out_dir: Path | None = None) -> list[ResultRecord]:
    """One run per (grid point x seed) along a beta or V axis.

    Failed runs keep their verdict and the sweep continues. Emits a
    (parameter, mean Q, mean R) table usable for Pareto plots.
    """
    if axis not in ("beta", "v"):
        raise ValueError("axis must be 'beta' or 'v'")
    grid = sorted(float(g) for g in grid)
    if not grid:
        raise ValueError("empty parameter grid")
    records = []
    for value, seed in itertools.product(grid, seeds):
        policy = ({"kind": "hd", "beta": value} if axis == "beta"
                  else {"kind": "vbp", "v": value})
        rec, _, _ = run_scenario(cfg, seed=seed, policy=policy, record=False)
        records.append(rec)
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        with open(out_dir / f"{cfg.name}_{axis}_sweep.json", "w") as fh:
            json.dump({"axis": axis, "table": sweep_table(records, grid)},
                      fh, indent=2)
    return records


def sweep_table(records: list[ResultRecord], grid) -> list[dict]:
    """Per grid point: mean and standard error of Q and R across seeds."""
    table = []
    for value in grid:
        rows = [r for r in records if r.parameter == value]
        q = np.array([r.q_bar for r in rows])
        r_ = np.array([r.r_bar for r in rows])
        n = max(len(rows), 1)
        table.append({
            "parameter": value,
            "n": len(rows),
            "q_mean": float(q.mean()) if len(rows) else None,
            "q_se": float(q.std(ddof=1) / np.sqrt(n)) if len(rows) > 1 else 0.0,
            "r_mean": float(r_.mean()) if len(rows) else None,
            "r_se": float(r_.std(ddof=1) / np.sqrt(n)) if len(rows) > 1 else 0.0,
            "unstable": sum(r.verdict != "stable" for r in rows),
        })
    return table


def fluid_compare(cfg: ScenarioConfig, beta: float, seed: int | None = None,
                  horizon: int | None = None) -> dict:
    """Long-run flows of a cost-aware run against the thermal reference.

    Solves the reference heat flow with diffusivities phi(beta, rho_bar),
    checks the reference flows against the realized effective capacities,
    and reports per-edge relative errors |f_bar - f_ref| / max(f_ref, 0.1).
    """
    rc = build_run(cfg, seed=seed, horizon=horizon,
                   policy={"kind": "hd", "beta": beta})
    trace, metrics = run(rc)
    mu_bar, rho_bar = expected_channel(rc.channel)
    a_bar = rc.arrivals.mean()
    sol = thermal.reference_model(rc.net, beta, rho_bar, a_bar)
    mu_eff = simulator.effective_capacity(trace, rc.channel, rc.sched)
    ok, violations = thermal.assumption2_check(sol, mu_eff)
    err = np.abs(metrics.f_bar - sol.flows) / np.maximum(sol.flows, 0.1)
    return {
        "scenario": cfg.name,
        "beta": beta,
        "verdict": metrics.verdict,
        "f_bar": metrics.f_bar.tolist(),
        "f_reference": sol.flows.tolist(),
        "temperatures": sol.temperatures.tolist(),
        "max_abs_error": float(np.abs(metrics.f_bar - sol.flows).max()),
        "per_edge_relative_error": err.tolist(),
        "max_relative_error": float(err.max()),
        "effective_capacity": mu_eff.tolist(),
        "capacity_assumption_holds": bool(ok),
        "capacity_violations": violations,
        "prediction_binding": bool(ok) and metrics.verdict == "stable",
    }


# ---------------------------------------------------------------------------
# validation suite


def random_connected_network(rng: np.random.Generator, n_lo: int = 3,
                             n_hi: int = 10) -> DirectedNetwork:
    """Random simple digraph whose every node has a directed path to the
    sink (spanning in-tree toward the sink plus random extra edges)."""
    n = int(rng.integers(n_lo, n_hi + 1))
    dest = int(rng.integers(0, n))
    order = [dest] + [v for v in rng.permutation(n) if v != dest]
    pairs = set()
    for i, v in enumerate(order[1:], start=1):
        pairs.add((v, order[int(rng.integers(0, i))]))
    extras = int(rng.integers(0, n))
    for _ in range(extras * 3):
        if len(pairs) >= n * (n - 1):
            break
        a, b = rng.integers(0, n, 2)
        if a != b:
            pairs.add((int(a), int(b)))
    return network_from_pairs(n, sorted(pairs), dest)


def exhaustive_d_max(net: DirectedNetwork, sched, q, mu, rho, beta) -> float:
    """Maximum of the transmit functional over (schedule, feasible flows).

    Per activated link the 1-D concave term 2*phi*qdiff*f - f^2 is maximized
    in closed form over [0, min(q_tail, mu)]; the schedule maximum is taken
    exhaustively.
    """
    phi = hd_phi_vector(net, beta, rho)
    qfull = np.zeros(net.n_nodes)
    qfull[net.queue_nodes] = q
    tails = np.array([e.tail for e in net.edges])
    heads = np.array([e.head for e in net.edges])
    q_diff = qfull[tails] - qfull[heads]
    ub = np.minimum(qfull[tails], mu)
    f_star = np.clip(phi * q_diff, 0.0, ub)
    link_value = 2.0 * phi * q_diff * f_star - f_star ** 2
    return float((sched.activation @ link_value).max())


def _th1_oracle_check(rng, q_hi: int = 5, betas=(0.0, 0.5, 1.0)) -> dict:
    net = network_from_pairs(3, [(0, 1), (0, 2), (1, 2)], 2,
                             node_labels=("1", "2", "d"))
    sched = schedule_for(net, InterferenceModel("khop", 1))
    mu = np.array([2.0, 3.0, 2.0])
    rho = np.array([1.5, 1.0, 2.0])
    worst = 0.0
    counterexample = None
    for beta in betas:
        params = HDParams(beta=beta)
        for q1 in range(q_hi + 1):
            for q2 in range(q_hi + 1):
                q = np.array([float(q1), float(q2)])
                state = SlotState(0, q, mu, rho)
                dec = hd_decide(net, state, params, sched, ResidualLedger.zeros(3))
                phi = hd_phi_vector(net, beta, rho)
                d_hd = simulator.d_functional(dec.f_pre_round, q, phi, net)
                d_best = exhaustive_d_max(net, sched, q, mu, rho, beta)
                gap = d_best - d_hd
                if gap > worst:
                    worst = gap
                    counterexample = {"beta": beta, "q": [q1, q2],
                                      "d_hd": d_hd, "d_best": d_best}
    return {"passed": worst <= 1e-9, "max_gap": worst,
            "counterexample": counterexample}


def _poisson_thomson_check(rng, trials: int = 50, probes: int = 20) -> dict:
    worst_flow = 0.0
    worst_dual = 0.0
    energy_failures = 0
    counterexample = None
    for _ in range(trials):
        net = random_connected_network(rng, 3, 8)
        sigma = rng.uniform(0.2, 2.0, net.n_edges)
        tg = thermal.ThermalGraph(net, sigma)
        a = rng.uniform(0.2, 2.0, net.n_nodes - 1)
        sol = thermal.solve_nonlinear_poisson(tg, a)
        f_t, duals = thermal.solve_thomson(tg, a)
        dflow = float(np.abs(sol.flows - f_t).max())
        ddual = float(np.abs(sol.temperatures - duals).max())
        e0 = thermal.dirichlet_energy(tg, sol.temperatures, a)
        for _ in range(probes):
            q_probe = sol.temperatures + rng.normal(scale=0.1, size=sol.temperatures.shape)
            if thermal.dirichlet_energy(tg, q_probe, a) < e0 - 1e-12:
                energy_failures += 1
        if max(dflow, ddual) > max(worst_flow, worst_dual):
            counterexample = {"n_nodes": net.n_nodes, "flow_gap": dflow, "dual_gap": ddual}
        worst_flow = max(worst_flow, dflow)
        worst_dual = max(worst_dual, ddual)
    passed = worst_flow <= 1e-6 and worst_dual <= 1e-6 and energy_failures == 0
    return {"passed": passed, "max_flow_gap": worst_flow,
            "max_dual_gap": worst_dual, "energy_failures": energy_failures,
            "counterexample": None if passed else counterexample}


def _lemma_suite_check(rng, trials: int = 200, probes: int = 20) -> dict:
    stats = {"eig": 0, "quad": 0, "identity": 0, "skew": 0}
    counterexample = None
    for _ in range(trials):
        net = random_connected_network(rng, 3, 9)
        phi = rng.uniform(1e-3, 1.0, net.n_edges)
        M = thermal.m_circ(net, phi)
        rep = thermal.lemma_checks(M, probes=probes, rng=rng, net=net, phi=phi)
        for key, ok in (("eig", rep.eig_ok), ("quad", rep.quad_ok),
                        ("identity", rep.identity_ok), ("skew", rep.skew_ok)):
            if not ok:
                stats[key] += 1
                if counterexample is None:
                    counterexample = {"check": key, "n_nodes": net.n_nodes,
                                      "edges": [(e.tail, e.head) for e in net.edges],
                                      "phi": phi.tolist(),
                                      "report": rep.to_dict()}
    passed = not any(stats.values())
    return {"passed": passed, "trials": trials, "failures": stats,
            "counterexample": counterexample}


def _vbp_degeneracy_check(rng, trials: int = 200) -> dict:
    mismatches = 0
    counterexample = None
    for _ in range(trials):
        net = random_connected_network(rng, 3, 7)
        sched = schedule_for(net, InterferenceModel("khop", 1))
        q = rng.integers(0, 20, net.n_nodes - 1).astype(float)
        mu = rng.integers(0, 6, net.n_edges).astype(float)
        rho = rng.uniform(1.0, 3.0, net.n_edges)
        state = SlotState(0, q, mu, rho)
        d_bp = bp_decide(net, state, sched)
        d_v0 = vbp_decide(net, state, VBPParams(0.0), sched)
        same = (np.array_equal(d_bp.f, d_v0.f)
                and np.array_equal(d_bp.weights, d_v0.weights)
                and d_bp.schedule_index == d_v0.schedule_index)
        if not same:
            mismatches += 1
            if counterexample is None:
                counterexample = {"q": q.tolist(), "mu": mu.tolist(),
                                  "rho": rho.tolist()}
    return {"passed": mismatches == 0, "trials": trials,
            "mismatches": mismatches, "counterexample": counterexample}


def _lemma5_check(horizon: int = 20000) -> dict:
    from .config import load_bundled
    cfg = load_bundled("lossy_link")
    rc = build_run(cfg, horizon=horizon)
    trace, metrics = run(rc)
    rep = simulator.lemma5_check(trace, rc.net)
    return {"passed": rep.relative_residual <= 1e-3 and metrics.verdict == "stable",
            "residual": rep.residual, "scale": rep.scale,
            "relative_residual": rep.relative_residual,
            "terms": rep.terms}


def validate(seed: int = 0, trials: int = 200) -> dict:
    """Machine-readable pass/fail across the numerical property suite."""
    rng = np.random.default_rng(seed)
    suite = {
        "transmit_functional_oracle": _th1_oracle_check(rng),
        "poisson_thomson_duality": _poisson_thomson_check(rng, trials=min(trials, 50)),
        "system_matrix_lemmas": _lemma_suite_check(rng, trials=trials),
        "vbp_v0_equals_bp": _vbp_degeneracy_check(rng, trials=trials),
        "covariance_identity": _lemma5_check(),
    }
    suite["all_passed"] = all(v["passed"] for k, v in suite.items()
                              if isinstance(v, dict))
    return suite
