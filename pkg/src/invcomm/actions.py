"""Coordinator actions: base-stock prescriptions plus the communication bit."""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .scenario import DemandModel, ScenarioConfig

TIE_RTOL = 1e-12


@dataclass(frozen=True)
class Prescription:
    """targets[i][x]: order-up-to level of retailer i when it selects regime x."""

    targets: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        object.__setattr__(self, "targets", tuple(tuple(int(s) for s in row) for row in self.targets))

    @classmethod
    def symmetric(cls, levels: Sequence[int], n_retailers: int) -> "Prescription":
        return cls(tuple(tuple(levels) for _ in range(n_retailers)))

    @property
    def array(self) -> np.ndarray:
        return np.array(self.targets, dtype=np.int64)

    def within(self, s_max: int) -> bool:
        return all(0 <= s <= s_max for row in self.targets for s in row)


@dataclass(frozen=True)
class CoordinatorAction:
    comm: int
    prescription: Prescription

    def __post_init__(self):
        if self.comm not in (0, 1):
            raise ValueError(f"communication bit must be 0 or 1, got {self.comm}")

    def key(self) -> tuple:
        return (self.comm,) + tuple(s for row in self.prescription.targets for s in row)


@dataclass(frozen=True)
class ActionGrid:
    """Candidate order-up-to levels per regime (shared by all retailers if symmetric)."""

    levels: tuple[tuple[int, ...], ...]
    symmetric: bool = True

    def __post_init__(self):
        object.__setattr__(self, "levels", tuple(tuple(sorted(set(int(s) for s in row)))
                                                 for row in self.levels))

    def validate(self, s_max: int) -> None:
        if not self.levels or any(len(row) == 0 for row in self.levels):
            raise ValueError("action grid has an empty candidate set")
        for row in self.levels:
            if row[0] < 0 or row[-1] > s_max:
                raise ValueError(f"grid levels {row} outside [0, {s_max}]")


def enumerate_actions(grid: ActionGrid, n_retailers: int, n_regimes: int,
                      comm_options: Sequence[int] = (0, 1)) -> list[CoordinatorAction]:
    """All (comm, targets) pairs; comm ascending, then lexicographic targets."""
    if not grid.levels or any(len(row) == 0 for row in grid.levels):
        raise ValueError("action grid has an empty candidate set")
    if len(grid.levels) != n_regimes:
        raise ValueError(f"grid has {len(grid.levels)} regime rows, expected {n_regimes}")
    per_retailer = list(itertools.product(*grid.levels))
    if grid.symmetric:
        prescriptions = [Prescription.symmetric(p, n_retailers) for p in per_retailer]
    else:
        prescriptions = [Prescription(combo)
                         for combo in itertools.product(per_retailer, repeat=n_retailers)]
    return [CoordinatorAction(c, p) for c in sorted(comm_options) for p in prescriptions]


def newsvendor_level(pmf: np.ndarray, critical_ratio: float) -> int:
    """Smallest s with P(D <= s) >= critical_ratio."""
    cdf = np.cumsum(pmf) / pmf.sum()
    return int(np.searchsorted(cdf, critical_ratio - 1e-12, side="left"))


def default_grid(config: ScenarioConfig, half_width: int = 4, step: int = 2,
                 symmetric: bool = True) -> ActionGrid:
    """Step-2 levels within +-4 of each regime's one-step-ahead newsvendor level."""
    T = config.regime_model.transition
    pmf = config.demand_model.pmf[:, 0, :]
    cr = config.costs.critical_ratio
    rows = []
    for x in range(config.n_regimes):
        center = newsvendor_level(T[x] @ pmf, cr)
        row = {min(max(s, 0), config.s_max)
               for s in range(center - half_width, center + half_width + 1, step)}
        rows.append(tuple(sorted(row)))
    return ActionGrid(tuple(rows), symmetric)


def _regime_order(demand_model: DemandModel, retailer: int) -> np.ndarray:
    # tie-break rank: lower mean demand first, then lower index
    means = demand_model.means()[:, retailer]
    return np.lexsort((np.arange(len(means)), means))


def regime_select(regime_belief: np.ndarray, demand: int, retailer: int,
                  demand_model: DemandModel) -> int:
    """argmax_x b_x f_x(d); near-ties (rel. 1e-12) go to the lower-demand regime."""
    score = np.asarray(regime_belief, dtype=float) * demand_model.pmf[:, retailer, demand]
    top = score.max()
    for x in _regime_order(demand_model, retailer):
        if score[x] >= top * (1.0 - TIE_RTOL):
            return int(x)
    return int(np.argmax(score))  # pragma: no cover


def selection_table(regime_belief: np.ndarray, demand_model: DemandModel) -> np.ndarray:
    """sel[i, d] = regime_select(b, d, i) for every retailer and demand value."""
    b = np.asarray(regime_belief, dtype=float)
    n_x, n_r, n_d = demand_model.pmf.shape
    out = np.empty((n_r, n_d), dtype=np.int64)
    for i in range(n_r):
        score = b[:, None] * demand_model.pmf[:, i, :]
        top = score.max(axis=0)
        order = _regime_order(demand_model, i)
        ok = score[order] >= top[None, :] * (1.0 - TIE_RTOL)
        out[i] = order[np.argmax(ok, axis=0)]
    return out


def targets_by_demand(prescription: Prescription, regime_belief: np.ndarray | None,
                      demand_model: DemandModel, sel: np.ndarray | None = None) -> np.ndarray:
    """s[i, d]: the level retailer i orders up to after seeing demand d."""
    if sel is None:
        sel = selection_table(regime_belief, demand_model)
    tgt = prescription.array
    return np.take_along_axis(tgt, sel, axis=1)


def execute_prescription(prescription: Prescription, regime_belief: np.ndarray, demand: int,
                         post_demand_inventory: int, retailer: int,
                         demand_model: DemandModel) -> int:
    """Agent-side order: max(s - I', 0) with s picked by :func:`regime_select`."""
    x = regime_select(regime_belief, demand, retailer, demand_model)
    s = prescription.targets[retailer][x]
    return max(s - post_demand_inventory, 0)
