"""Scenario files: schema, validation, and compilation into run objects.

A scenario is one JSON document naming nodes by user-chosen string labels.
`load_scenario` validates the document and resolves labels to dense indices;
`build_run` turns the scenario plus a seed into the concrete network,
schedule set, processes and policy for the simulator. Values the source
material does not pin down are listed under "assumed" in the bundled
fixtures.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .graph import DirectedNetwork, network_from_pairs
from .policies import HDParams, VBPParams
from .scheduling import InterferenceModel, schedule_for
from .simulator import DEFAULT_QUEUE_GUARD, PolicySpec, RunConfig
from .traffic import (ArrivalProcess, ChannelStateProcess, shannon_capacity,
                      split_streams)


class ScenarioError(ValueError):
    """Invalid scenario document; message carries the offending field path."""


def _fail(path: str, msg: str):
    raise ScenarioError(f"{path}: {msg}")


@dataclass
class EdgeSpec:
    tail: str
    head: str
    capacity: object      # number, or {"kind": "shannon", ...}
    cost: object          # number, or {"kind": "power_per_capacity", ...}

    @property
    def key(self) -> str:
        return f"{self.tail}->{self.head}"


@dataclass
class ScenarioConfig:
    name: str
    nodes: list[str]
    destination: str
    edges: list[EdgeSpec]
    arrivals: dict
    interference: dict
    policy: dict
    run: dict
    channel: dict | None = None
    description: str = ""
    assumed: dict = field(default_factory=dict)

    @property
    def edge_keys(self) -> list[str]:
        return [e.key for e in self.edges]


def load_scenario(path) -> ScenarioConfig:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ScenarioError(f"{path}: malformed JSON ({exc})") from exc
    return parse_scenario(doc, name=Path(path).stem)


def parse_scenario(doc: dict, name: str = "scenario") -> ScenarioConfig:
    if not isinstance(doc, dict):
        _fail("$", "scenario must be a JSON object")
    nodes = doc.get("nodes")
    if not isinstance(nodes, list) or not nodes or len(set(nodes)) != len(nodes):
        _fail("nodes", "need a non-empty list of unique labels")
    dest = doc.get("destination")
    if dest not in nodes:
        _fail("destination", f"label {dest!r} not among nodes")

    edges = []
    seen = set()
    for i, e in enumerate(doc.get("edges", [])):
        p = f"edges[{i}]"
        for k in ("tail", "head"):
            if e.get(k) not in nodes:
                _fail(f"{p}.{k}", f"unknown node label {e.get(k)!r}")
        if e["tail"] == e["head"]:
            _fail(p, "self-loops are not allowed")
        if (e["tail"], e["head"]) in seen:
            _fail(p, "duplicate edge")
        seen.add((e["tail"], e["head"]))
        cap = e.get("capacity")
        if isinstance(cap, (int, float)):
            if cap < 0:
                _fail(f"{p}.capacity", "capacity must be >= 0")
        elif isinstance(cap, dict) and cap.get("kind") == "shannon":
            for k in ("power", "bandwidth"):
                if not isinstance(cap.get(k), (int, float)) or cap[k] <= 0:
                    _fail(f"{p}.capacity.{k}", "must be a positive number")
            noise = cap.get("noise")
            ok_fixed = isinstance(noise, (int, float)) and noise > 0
            ok_range = (isinstance(noise, dict) and "uniform" in noise
                        and len(noise["uniform"]) == 2
                        and 0 < noise["uniform"][0] <= noise["uniform"][1])
            if not (ok_fixed or ok_range):
                _fail(f"{p}.capacity.noise", "need a positive number or {'uniform': [lo, hi]}")
        else:
            _fail(f"{p}.capacity", "need a number or a shannon spec")
        cost = e.get("cost", 1.0)
        if isinstance(cost, (int, float)):
            if cost < 1:
                _fail(f"{p}.cost", "cost factor must be >= 1")
        elif not (isinstance(cost, dict) and cost.get("kind") == "power_per_capacity"):
            _fail(f"{p}.cost", "need a number >= 1 or a power_per_capacity spec")
        edges.append(EdgeSpec(e["tail"], e["head"], cap, cost))
    if not edges:
        _fail("edges", "need at least one edge")

    arrivals = doc.get("arrivals") or {}
    if arrivals.get("kind") not in ("deterministic", "bernoulli", "poisson"):
        _fail("arrivals.kind", "need deterministic, bernoulli or poisson")
    for label, rate in (arrivals.get("rates") or {}).items():
        if label not in nodes:
            _fail(f"arrivals.rates.{label}", "unknown node label")
        if label == dest:
            _fail(f"arrivals.rates.{label}", "destination cannot receive arrivals")
        if not isinstance(rate, (int, float)) or rate < 0:
            _fail(f"arrivals.rates.{label}", "rate must be >= 0")

    interference = doc.get("interference") or {"kind": "khop", "k": 1}
    if interference.get("kind") not in ("khop", "explicit"):
        _fail("interference.kind", "need khop or explicit")

    policy = doc.get("policy") or {"kind": "hd", "beta": 0.0}
    if policy.get("kind") not in ("hd", "bp", "vbp"):
        _fail("policy.kind", "need hd, bp or vbp")

    run = dict(doc.get("run") or {})
    run.setdefault("horizon", 100_000)
    run.setdefault("seed", 0)
    run.setdefault("queue_guard", DEFAULT_QUEUE_GUARD)
    if run["horizon"] < 2:
        _fail("run.horizon", "horizon must be >= 2")

    channel = doc.get("channel")
    if channel is not None:
        if channel.get("mode") not in ("iid", "markov"):
            _fail("channel.mode", "need iid or markov (constant comes from edge values)")
        states = channel.get("states")
        if not isinstance(states, list) or not states:
            _fail("channel.states", "need a non-empty state list")
        edge_keys = {e.key for e in edges}
        for s_i, st in enumerate(states):
            for fld in ("mu", "rho"):
                for k in (st.get(fld) or {}):
                    if k not in edge_keys:
                        _fail(f"channel.states[{s_i}].{fld}.{k}", "unknown edge key")
            for k, v in (st.get("rho") or {}).items():
                if v < 1:
                    _fail(f"channel.states[{s_i}].rho.{k}", "cost factor must be >= 1")

    return ScenarioConfig(
        name=doc.get("name", name),
        nodes=list(nodes),
        destination=dest,
        edges=edges,
        arrivals=arrivals,
        interference=interference,
        policy=policy,
        run=run,
        channel=channel,
        description=doc.get("description", ""),
        assumed=doc.get("assumed", {}),
    )


def build_network(cfg: ScenarioConfig) -> DirectedNetwork:
    index = {label: i for i, label in enumerate(cfg.nodes)}
    pairs = [(index[e.tail], index[e.head]) for e in cfg.edges]
    return network_from_pairs(len(cfg.nodes), pairs, index[cfg.destination],
                              node_labels=cfg.nodes)


def _resolve_channel_base(cfg: ScenarioConfig, rng: np.random.Generator):
    """Per-edge base capacity and cost, drawing Shannon noise when asked."""
    mu = np.zeros(len(cfg.edges))
    rho = np.ones(len(cfg.edges))
    for i, e in enumerate(cfg.edges):
        if isinstance(e.capacity, dict):
            spec = e.capacity
            noise = spec["noise"]
            if isinstance(noise, dict):
                lo, hi = noise["uniform"]
                noise = float(rng.uniform(lo, hi))
            mu[i] = shannon_capacity(spec["power"], spec["bandwidth"], noise)
        else:
            mu[i] = float(e.capacity)
        if isinstance(e.cost, dict):
            power = e.cost.get("power", e.capacity.get("power") if isinstance(e.capacity, dict) else None)
            if power is None:
                _fail(f"edges[{i}].cost", "power_per_capacity needs a power value")
            scale = float(e.cost.get("scale", 1.0))
            rho[i] = max(float(e.cost.get("min", 1.0)), scale * power / mu[i])
        else:
            rho[i] = float(e.cost)
    return mu, rho


def _build_channel(cfg: ScenarioConfig, mu_base, rho_base, rng) -> ChannelStateProcess:
    if cfg.channel is None:
        return ChannelStateProcess("constant", mu_base[None, :], rho_base[None, :], rng=rng)
    key_to_idx = {k: i for i, k in enumerate(cfg.edge_keys)}
    states_mu, states_rho = [], []
    for st in cfg.channel["states"]:
        mu = mu_base.copy()
        rho = rho_base.copy()
        for k, v in (st.get("mu") or {}).items():
            mu[key_to_idx[k]] = v
        for k, v in (st.get("rho") or {}).items():
            rho[key_to_idx[k]] = v
        states_mu.append(mu)
        states_rho.append(rho)
    mode = cfg.channel["mode"]
    probs = [st.get("prob", 1.0 / len(states_mu)) for st in cfg.channel["states"]]
    transition = cfg.channel.get("transition")
    return ChannelStateProcess(
        "iid" if mode == "iid" else "markov",
        np.array(states_mu), np.array(states_rho),
        probs=np.array(probs),
        transition=None if transition is None else np.array(transition),
        rng=rng)


def build_policy(policy_doc: dict) -> PolicySpec:
    kind = policy_doc["kind"]
    if kind == "hd":
        return PolicySpec("hd", hd=HDParams(
            beta=float(policy_doc.get("beta", 0.0)),
            rounding="residual" if policy_doc.get("residual", True) else "nearest"))
    if kind == "vbp":
        return PolicySpec("vbp", vbp=VBPParams(v=float(policy_doc.get("v", 0.0))))
    return PolicySpec("bp")


def build_run(cfg: ScenarioConfig, seed: int | None = None,
              horizon: int | None = None, policy: dict | None = None,
              record: bool = True,
              capacity_override: dict | None = None) -> RunConfig:
    """Compile a scenario into a RunConfig.

    RNG streams are split per process (arrivals / channel / setup) so that
    swapping one process leaves the others' sample paths untouched.
    `capacity_override` maps edge keys ("tail->head") to constant capacities,
    used by parameter grids over a single link.
    """
    seed = cfg.run["seed"] if seed is None else seed
    horizon = cfg.run["horizon"] if horizon is None else horizon
    arr_rng, chan_rng, setup_rng = split_streams(int(seed), 3)

    net = build_network(cfg)
    index = {label: i for i, label in enumerate(cfg.nodes)}
    model = (InterferenceModel("khop", k=int(cfg.interference.get("k", 1)))
             if cfg.interference["kind"] == "khop" else
             InterferenceModel("explicit", explicit_conflicts=tuple(
                 (cfg.edge_keys.index(a), cfg.edge_keys.index(b))
                 for a, b in cfg.interference.get("conflicts", []))))
    sched = schedule_for(net, model)

    rates = np.zeros(net.n_nodes - 1)
    reduced_pos = {node: i for i, node in enumerate(net.queue_nodes)}
    for label, rate in (cfg.arrivals.get("rates") or {}).items():
        rates[reduced_pos[index[label]]] = rate
    arrivals = ArrivalProcess(cfg.arrivals["kind"], rates, rng=arr_rng)

    mu_base, rho_base = _resolve_channel_base(cfg, setup_rng)
    if capacity_override:
        for k, v in capacity_override.items():
            if k not in cfg.edge_keys:
                _fail(f"capacity_override.{k}", "unknown edge key")
            mu_base[cfg.edge_keys.index(k)] = v
    channel = _build_channel(cfg, mu_base, rho_base, chan_rng)

    return RunConfig(
        net=net, sched=sched,
        policy=build_policy(policy if policy is not None else cfg.policy),
        arrivals=arrivals, channel=channel,
        horizon=int(horizon),
        burn_in=cfg.run.get("burn_in"),
        queue_guard=float(cfg.run.get("queue_guard", DEFAULT_QUEUE_GUARD)),
        record=record)


def bundled_scenario_path(name: str) -> Path:
    p = Path(__file__).parent / "scenarios" / f"{name}.json"
    if not p.exists():
        raise ScenarioError(f"no bundled scenario named {name!r}")
    return p


def load_bundled(name: str) -> ScenarioConfig:
    return load_scenario(bundled_scenario_path(name))
