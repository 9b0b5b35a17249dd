"""Point-based solvers for the coordinator POMDP."""
from __future__ import annotations

import time

import numpy as np

from ..actions import ActionGrid, default_grid, enumerate_actions
from ..belief import initial_belief
from ..scenario import ScenarioConfig
from .bounds import (PointSetBound, TabulatedBound, ValueFunction, blind_upper_bound,
                     mdp_lower_bound)
from .model import DEFAULT_BINS, CoordinatorModel
from .oracle import OracleResult, OracleTooLarge, exact_vi_oracle
from .pbvi import PBVIResult, PolicyTable, pbvi_backup, pbvi_solve, sample_beliefs, solve_expanding
from .policy import ArtifactMismatch, PolicyArtifact, extract_policy, fingerprint
from .sarsop import SarsopResult, ValueBounds, sarsop_solve

SARSOP_MAX_STATES = 200

__all__ = [
    "ArtifactMismatch", "CoordinatorModel", "OracleResult", "OracleTooLarge", "PBVIResult",
    "PointSetBound", "PolicyArtifact", "PolicyTable", "SarsopResult", "TabulatedBound",
    "ValueBounds", "ValueFunction", "blind_upper_bound", "exact_vi_oracle", "extract_policy",
    "mdp_lower_bound", "pbvi_backup", "pbvi_solve", "sample_beliefs", "sarsop_solve",
    "solve_expanding", "solve_policy",
]


def solve_policy(config: ScenarioConfig, grid: ActionGrid | None = None, method: str = "auto",
                 comm_options=(0, 1), gap_target: float = 0.01, time_budget: float = 300.0,
                 seed: int = 0, n_bins: int = DEFAULT_BINS, rounds: int = 4,
                 per_round: int = 40, depth: int = 25, sweeps: int = 25,
                 tolerance: float = 1e-3) -> PolicyArtifact:
    """Solve the coordinator problem and package the result as a policy artifact.

    ``auto`` uses the bounded solver on small instances and expanding PBVI otherwise.
    """
    grid = grid or default_grid(config)
    grid.validate(config.s_max)
    acts = enumerate_actions(grid, config.n_retailers, config.n_regimes, comm_options)
    model = CoordinatorModel(config, acts, n_bins)
    b0 = initial_belief(config).probs.copy()
    if method == "auto":
        method = "sarsop" if config.n_states <= SARSOP_MAX_STATES else "pbvi"
    start = time.perf_counter()
    if method == "sarsop":
        res = sarsop_solve(model, gap_target, time_budget, b0)
        vf, status = res.bounds.upper, res.status
        lower, upper = res.lower, res.upper
        extra = {"iterations": res.iterations}
    elif method == "pbvi":
        res = solve_expanding(model, b0, rounds, per_round, depth, sweeps, tolerance, seed,
                              time_budget=time_budget)
        vf, status = res.value_function, res.status
        lower = mdp_lower_bound(model).value(b0)
        upper = vf.value(b0)
        extra = {"sweeps": res.sweeps, "belief_points": int(len(res.policy.beliefs)),
                 "residual": res.residual}
    else:
        raise ValueError(f"unknown solver {method!r}")
    meta = {
        "scenario": fingerprint(config),
        "comm_cost": config.costs.comm,
        "discount": config.costs.discount,
        "method": method,
        "status": status,
        "lower": lower,
        "upper": upper,
        "gap": upper - lower,
        "n_bins": n_bins,
        "grid": [list(r) for r in grid.levels],
        "symmetric": grid.symmetric,
        "comm_options": list(comm_options),
        "seed": seed,
        **extra,
    }
    art = PolicyArtifact(acts, vf, meta)
    art.wall_time = time.perf_counter() - start
    return art
