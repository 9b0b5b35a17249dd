"""Ground-truth system: inventory recursion, stage cost, sampling, rng streams."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scenario import CostParams, ScenarioConfig


@dataclass(frozen=True)
class WorldState:
    regime: int
    inventories: tuple[int, ...]


@dataclass(frozen=True)
class CostBreakdown:
    holding: float
    shortage: float
    communication: float

    @property
    def total(self) -> float:
        return self.holding + self.shortage + self.communication


@dataclass(frozen=True)
class PeriodOutcome:
    demands: tuple[int, ...]
    sold: tuple[int, ...]
    post_demand_inventories: tuple[int, ...]
    orders: tuple[int, ...]
    comm_flags: tuple[int, ...]
    cost_breakdown: CostBreakdown


def step_inventory(inventory: int, demand: int, order: int, s_max: int | None = None) -> int:
    """Start-of-next-period level: lost sales, zero lead time, capped at ``s_max``."""
    if inventory < 0 or demand < 0 or order < 0:
        raise ValueError(f"negative input: inventory={inventory}, demand={demand}, order={order}")
    nxt = max(inventory - demand, 0) + order
    return nxt if s_max is None else min(nxt, s_max)


def stage_cost(inventory: int, demand: int, comm_flag: int, costs: CostParams) -> float:
    """Holding on leftover stock, penalty on lost demand, plus one message."""
    if inventory < 0 or demand < 0:
        raise ValueError("inventory and demand must be non-negative")
    return (costs.holding * max(inventory - demand, 0)
            + costs.penalty * max(demand - inventory, 0)
            + costs.comm * comm_flag)


def expected_stage_cost(config: ScenarioConfig) -> np.ndarray:
    """E[holding + shortage | regime x, inventory I] per retailer: shape (X, N, S+1)."""
    c = config.costs
    d = np.arange(config.d_max + 1)
    inv = np.arange(config.s_max + 1)
    per = (c.holding * np.maximum(inv[:, None] - d[None, :], 0)
           + c.penalty * np.maximum(d[None, :] - inv[:, None], 0))
    return np.einsum("xid,nd->xin", config.demand_model.pmf, per)


# -- randomness -------------------------------------------------------------

def spawn_streams(master_seed: int, count: int) -> list[np.random.Generator]:
    """Independent generators for replications 0..count-1 of one master seed."""
    seqs = np.random.SeedSequence(master_seed).spawn(count)
    return [np.random.Generator(np.random.PCG64(s)) for s in seqs]


def stream(master_seed: int, index: int = 0) -> np.random.Generator:
    seq = np.random.SeedSequence(master_seed).spawn(index + 1)[index]
    return np.random.Generator(np.random.PCG64(seq))


def sample_demands(config: ScenarioConfig, regime: int, rng: np.random.Generator) -> np.ndarray:
    """One demand per retailer from the regime's pmf (inverse-cdf, one uniform each)."""
    cdf = np.cumsum(config.demand_model.pmf[regime], axis=1)
    u = rng.random(config.n_retailers)
    d = np.array([np.searchsorted(cdf[i], u[i] * cdf[i, -1], side="right")
                  for i in range(config.n_retailers)])
    return np.minimum(d, config.d_max)


def sample_regime(config: ScenarioConfig, regime: int, rng: np.random.Generator) -> int:
    row = config.regime_model.transition[regime]
    cdf = np.cumsum(row)
    return int(min(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"), len(row) - 1))


def sample_initial_regime(config: ScenarioConfig, rng: np.random.Generator) -> int:
    cdf = np.cumsum(config.regime_model.initial)
    return int(min(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"), len(cdf) - 1))


def sample_transition(config: ScenarioConfig, state: WorldState, demands, orders,
                      rng: np.random.Generator) -> WorldState:
    """Next world state: regime from its transition row, inventories stepped."""
    if any(d < 0 or d > config.d_max for d in demands):
        raise ValueError(f"demands {tuple(demands)} outside 0..{config.d_max}")
    inv = tuple(step_inventory(i, int(d), int(u), config.s_max)
                for i, d, u in zip(state.inventories, demands, orders))
    return WorldState(sample_regime(config, state.regime, rng), inv)
