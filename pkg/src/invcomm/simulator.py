"""Decentralised simulation of the sharing protocol with a coordinator belief.

Each period: the coordinator picks an action from the common belief; demands
are drawn from the true regime; each agent orders from its own demand and
post-demand stock; sharing happens per the action (or per agent trigger);
costs accrue; state and belief advance.

Random numbers are consumed in a policy-independent order (initial regime,
then per period N demand uniforms and one regime uniform), so two policies
run on the same stream see the same demand path.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .actions import CoordinatorAction, execute_prescription
from .belief import (Belief, FactoredBelief, FlatBelief, InconsistentObservation, Report,
                     initial_belief, initial_factored, predict_no_comm, update_censored,
                     update_full_comm)
from .dynamics import (sample_demands, sample_initial_regime, sample_regime, spawn_streams,
                       step_inventory)
from .policies import Policy, agent_trigger
from .scenario import ScenarioConfig

ROUND = "round"
MESSAGE = "message"
Z95 = 1.96
FLAT_LIMIT_RETAILERS = 2
FLAT_LIMIT_SMAX = 30


class FilterError(RuntimeError):
    """Belief update failed; carries the period and trace context."""


@dataclass
class EpisodeTrace:
    regimes: np.ndarray        # (H,)
    inventories: np.ndarray    # (H, N) start of period
    demands: np.ndarray        # (H, N)
    sold: np.ndarray
    post: np.ndarray
    orders: np.ndarray
    comm: np.ndarray           # (H, N) message flags
    holding: np.ndarray        # (H,)
    shortage: np.ndarray
    communication: np.ndarray
    actions: list = field(default_factory=list)
    regime_beliefs: np.ndarray | None = None  # (H, X) coordinator regime marginal at decision time
    beliefs: list | None = None  # optional full snapshots, index = period

    @property
    def horizon(self) -> int:
        return len(self.regimes)

    @property
    def total(self) -> np.ndarray:
        return self.holding + self.shortage + self.communication

    @property
    def rounds(self) -> np.ndarray:
        return self.comm.any(axis=1)

    def to_csv(self) -> str:
        """One row per period; header documents every column."""
        n = self.inventories.shape[1]
        head = ["t", "regime"]
        for i in range(n):
            head += [f"inv_{i}", f"demand_{i}", f"order_{i}", f"comm_{i}"]
        head += ["holding", "shortage", "communication", "total"]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(head)
        for t in range(self.horizon):
            row = [t, int(self.regimes[t])]
            for i in range(n):
                row += [int(self.inventories[t, i]), int(self.demands[t, i]),
                        int(self.orders[t, i]), int(self.comm[t, i])]
            row += [repr(float(self.holding[t])), repr(float(self.shortage[t])),
                    repr(float(self.communication[t])), repr(float(self.total[t]))]
            w.writerow(row)
        return buf.getvalue()


@dataclass
class SimReport:
    avg_holding: float
    avg_stockout: float
    avg_comm: float
    avg_total: float
    fill_rate: float
    comm_freq: float
    reps: int
    ci: dict

    def row(self) -> dict:
        return {"Holding": self.avg_holding, "Stockout": self.avg_stockout, "Comm": self.avg_comm,
                "Total": self.avg_total, "Fill Rate": self.fill_rate, "comm_freq": self.comm_freq,
                **{f"ci_{k}": v for k, v in self.ci.items()}}


def use_flat(config: ScenarioConfig) -> bool:
    return config.n_retailers <= FLAT_LIMIT_RETAILERS and config.s_max <= FLAT_LIMIT_SMAX


def run_episode(config: ScenarioConfig, policy: Policy, horizon: int, rng: np.random.Generator,
                accounting: str = ROUND, record_beliefs: bool = False,
                belief_mode: str = "auto") -> EpisodeTrace:
    """Simulate ``horizon`` periods. Agent-triggered sharing is always charged per message."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    if accounting not in (ROUND, MESSAGE):
        raise ValueError(f"unknown accounting {accounting!r}")
    flat = use_flat(config) if belief_mode == "auto" else belief_mode == "flat"
    N, H = config.n_retailers, horizon
    c = config.costs
    belief: Belief = initial_belief(config) if flat else initial_factored(config)
    regime = sample_initial_regime(config, rng)
    inv = np.array(config.initial_inventories, dtype=np.int64)
    tr = EpisodeTrace(
        regimes=np.empty(H, dtype=np.int64), inventories=np.empty((H, N), dtype=np.int64),
        demands=np.empty((H, N), dtype=np.int64), sold=np.empty((H, N), dtype=np.int64),
        post=np.empty((H, N), dtype=np.int64), orders=np.empty((H, N), dtype=np.int64),
        comm=np.zeros((H, N), dtype=np.int64), holding=np.empty(H), shortage=np.empty(H),
        communication=np.empty(H), regime_beliefs=np.empty((H, config.n_regimes)),
        beliefs=[] if record_beliefs else None)
    for t in range(H):
        if record_beliefs:
            tr.beliefs.append(belief)
        rb = belief.regime_marginal()
        tr.regime_beliefs[t] = rb
        action: CoordinatorAction = policy.decide(belief, t)
        d = sample_demands(config, regime, rng)
        sold = np.minimum(d, inv)
        post = inv - sold
        orders = np.array([execute_prescription(action.prescription, rb, int(d[i]), int(post[i]), i,
                                                config.demand_model) for i in range(N)])
        if policy.agent_triggered:
            flags = np.array([agent_trigger(policy.threshold, int(x)) for x in d])
            comm_cost = c.comm * flags.sum()
        else:
            flags = np.full(N, action.comm)
            comm_cost = c.comm * (flags.sum() if accounting == MESSAGE else flags.any())
        tr.regimes[t] = regime
        tr.inventories[t] = inv
        tr.demands[t] = d
        tr.sold[t] = sold
        tr.post[t] = post
        tr.orders[t] = orders
        tr.comm[t] = flags
        tr.holding[t] = c.holding * post.sum()
        tr.shortage[t] = c.penalty * (d - sold).sum()
        tr.communication[t] = comm_cost
        tr.actions.append(action)
        try:
            if policy.agent_triggered:
                silent = [i for i in range(N) if not flags[i]]
                reps = {i: Report(int(d[i]), int(post[i])) for i in range(N) if flags[i]}
                belief = update_censored(config, belief, action.prescription, silent,
                                         policy.threshold, reps)
            elif action.comm:
                belief = update_full_comm(config, belief, action,
                                          [Report(int(d[i]), int(post[i])) for i in range(N)])
            else:
                belief = predict_no_comm(config, belief, action)
        except InconsistentObservation as e:
            raise FilterError(f"period {t}: regime {regime}, inventories {inv.tolist()}, "
                              f"demands {d.tolist()}, action {action}: {e}") from e
        inv = np.array([step_inventory(int(inv[i]), int(d[i]), int(orders[i]), config.s_max)
                        for i in range(N)])
        regime = sample_regime(config, regime, rng)
    return tr


def compute_metrics(traces: list[EpisodeTrace], warmup: int = 0) -> SimReport:
    """Per-period averages with 95% normal half-widths over replications."""
    if not traces:
        raise ValueError("no traces")
    cols = {"Holding": [], "Stockout": [], "Comm": [], "Total": [], "comm_freq": [], "Fill Rate": []}
    sold = demand = 0
    for tr in traces:
        sl = slice(warmup, None)
        cols["Holding"].append(tr.holding[sl].mean())
        cols["Stockout"].append(tr.shortage[sl].mean())
        cols["Comm"].append(tr.communication[sl].mean())
        cols["Total"].append(tr.total[sl].mean())
        cols["comm_freq"].append(tr.rounds[sl].mean())
        s, dd = int(tr.sold[sl].sum()), int(tr.demands[sl].sum())
        cols["Fill Rate"].append(s / dd if dd else 1.0)
        sold += s
        demand += dd
    n = len(traces)
    ci = {}
    for k, v in cols.items():
        v = np.asarray(v, dtype=float)
        ci[k] = float(Z95 * v.std(ddof=1) / np.sqrt(n)) if n > 1 else float("nan")
    mean = {k: float(np.mean(v)) for k, v in cols.items()}
    return SimReport(mean["Holding"], mean["Stockout"], mean["Comm"],
                     mean["Holding"] + mean["Stockout"] + mean["Comm"],
                     sold / demand if demand else 1.0, mean["comm_freq"], n, ci)


def run_replications(config: ScenarioConfig, policy: Policy, horizon: int, reps: int,
                     master_seed: int, accounting: str = ROUND, warmup: int = 0,
                     return_traces: bool = False):
    """Independent episodes on streams split from ``master_seed``."""
    if reps < 1:
        raise ValueError("reps must be >= 1")
    traces = [run_episode(config, policy, horizon, rng, accounting)
              for rng in spawn_streams(master_seed, reps)]
    report = compute_metrics(traces, warmup)
    return (report, traces) if return_traces else report
