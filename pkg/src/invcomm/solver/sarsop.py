"""Bounded point-based solver: alpha envelope above, sawtooth point set below.

Trials start at the initial belief, act greedily on the lower bound, follow
the observation with the largest probability-weighted bound gap, and back up
both bounds in reverse along the visited path.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .bounds import PointSetBound, ValueFunction, blind_upper_bound, mdp_lower_bound
from .model import CoordinatorModel
from .pbvi import PolicyTable, pbvi_backup

CONVERGED = "converged"
BUDGET = "budget_exhausted"


@dataclass
class ValueBounds:
    upper: ValueFunction
    lower: PointSetBound

    def at(self, b: np.ndarray) -> tuple[float, float]:
        return self.lower.value(b), self.upper.value(b)


@dataclass
class SarsopResult:
    bounds: ValueBounds
    policy: PolicyTable
    status: str
    iterations: int
    b0: np.ndarray
    history: list = field(default_factory=list)  # (lower, upper) at b0 after each iteration
    wall_time: float = 0.0

    @property
    def lower(self) -> float:
        return self.history[-1][0]

    @property
    def upper(self) -> float:
        return self.history[-1][1]

    @property
    def gap(self) -> float:
        return self.upper - self.lower


def all_successors(model: CoordinatorModel, b: np.ndarray, allowed: np.ndarray | None = None):
    """Successors of every allowed action, stacked: (action per row, probs, beliefs)."""
    sel = model.selection(b)
    owner, probs, nbs = [], [], []
    for a in range(len(model.actions)):
        if allowed is not None and not allowed[a]:
            continue
        p, nb = model.successors(b, a, sel)
        owner.append(np.full(len(p), a))
        probs.append(p)
        nbs.append(nb)
    return np.concatenate(owner), np.concatenate(probs), np.vstack(nbs)


def lower_q(model: CoordinatorModel, b: np.ndarray, lower: PointSetBound,
            allowed: np.ndarray | None = None, succ=None) -> tuple[np.ndarray, tuple]:
    """Q-values against the lower bound, plus the stacked successors used."""
    owner, probs, nbs = succ if succ is not None else all_successors(model, b, allowed)
    lv = lower.values(nbs)
    q = np.full(len(model.actions), np.inf)
    acc = np.bincount(owner, weights=probs * lv, minlength=len(model.actions))
    present = np.zeros(len(model.actions), dtype=bool)
    present[owner] = True
    q[present] = model.immediate_cost(b) + model.action_cost[present] + model.beta * acc[present]
    return q, (owner, probs, nbs, lv)


def sarsop_solve(model: CoordinatorModel, gap_target: float = 0.01, time_budget: float = 120.0,
                 b0: np.ndarray | None = None, relative: bool = True, max_depth: int = 60,
                 max_iterations: int = 100_000, allowed: np.ndarray | None = None) -> SarsopResult:
    """Shrink [lower, upper] at ``b0`` until the gap is at most ``gap_target``.

    With ``relative`` the target is a fraction of ``|lower(b0)|``.
    """
    if gap_target <= 0:
        raise ValueError("gap target must be positive")
    start = time.perf_counter()
    if b0 is None:
        from ..belief import initial_belief
        b0 = initial_belief(model.config).probs.copy()
    upper = blind_upper_bound(model)
    if allowed is not None:
        keep = allowed[upper.action_ids]
        upper = ValueFunction(upper.alphas[keep], upper.action_ids[keep])
    lower = PointSetBound(mdp_lower_bound(model).values.copy())
    bounds = ValueBounds(upper, lower)
    visited = [b0]
    lo, hi = bounds.at(b0)
    history = [(lo, hi)]
    status = BUDGET
    it = 0

    def target():
        return gap_target * abs(history[-1][0]) if relative else gap_target

    while it < max_iterations:
        if history[-1][1] - history[-1][0] <= target():
            status = CONVERGED
            break
        if time.perf_counter() - start > time_budget:
            break
        it += 1
        eps = target()
        path, cache = [], []
        b = b0
        for depth in range(max_depth):
            path.append(b)
            lo_b, hi_b = bounds.at(b)
            succ = all_successors(model, b, allowed)
            cache.append(succ)
            if model.beta ** depth * (hi_b - lo_b) <= 0.5 * eps:
                break
            q, (owner, probs, nbs, lv) = lower_q(model, b, lower, allowed, succ)
            a = int(np.argmin(q))
            mine = owner == a
            gaps = probs[mine] * (upper.values(nbs[mine]) - lv[mine])
            k = int(np.argmax(gaps))
            if gaps[k] <= 0:
                break
            b = nbs[mine][k]
        for b, succ in zip(reversed(path), reversed(cache)):
            alpha, act, _ = pbvi_backup(model, b, upper, allowed)
            if float(alpha @ b) < upper.value(b) - 1e-12:
                upper.add(alpha, act)
            q, _ = lower_q(model, b, lower, allowed, succ)
            lower.update(b, float(q.min()))
            visited.append(b)
        if it % 20 == 0:
            upper.prune(np.asarray(visited))
        history.append(bounds.at(b0))
    pts = np.asarray(visited)
    acts = np.array([int(upper.action_ids[upper.best(b)]) for b in pts])
    table = PolicyTable(pts, acts, upper.values(pts))
    return SarsopResult(bounds, table, status, it, b0, history, time.perf_counter() - start)
