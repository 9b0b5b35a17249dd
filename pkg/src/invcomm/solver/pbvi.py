"""Point-based value iteration over sampled reachable beliefs."""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .bounds import DEDUP_L1, ValueFunction, blind_upper_bound
from .model import CoordinatorModel

CONVERGED = "converged"
MAX_SWEEPS = "max_sweeps"
BUDGET = "time_budget"


@dataclass
class PolicyTable:
    """Best action and backed-up value at each retained belief."""

    beliefs: np.ndarray
    action_ids: np.ndarray
    values: np.ndarray


@dataclass
class PBVIResult:
    value_function: ValueFunction
    policy: PolicyTable
    status: str
    sweeps: int
    residual: float
    history: list = field(default_factory=list)


def pbvi_backup(model: CoordinatorModel, b: np.ndarray, vf: ValueFunction,
                allowed: np.ndarray | None = None) -> tuple[np.ndarray, int, float]:
    """One backup at ``b``: (alpha, action id, value). Never worse than the current envelope."""
    r = model.backup(b, vf.alphas, allowed)
    j = vf.best(b)
    cur = float(vf.alphas[j] @ b)
    if float(r.alpha @ b) <= cur:
        return r.alpha, r.action, float(r.alpha @ b)
    return vf.alphas[j].copy(), int(vf.action_ids[j]), cur


def dedupe(beliefs: list[np.ndarray], tol: float = DEDUP_L1) -> list[np.ndarray]:
    out: list[np.ndarray] = []
    for b in beliefs:
        if not out or np.abs(np.asarray(out) - b[None, :]).sum(axis=1).min() > tol:
            out.append(b)
    return out


def random_policy(model: CoordinatorModel, rng: np.random.Generator,
                  allowed: np.ndarray | None = None) -> Callable:
    ids = np.arange(len(model.actions)) if allowed is None else np.flatnonzero(allowed)

    def pick(b, t):
        return int(rng.choice(ids))
    return pick


def greedy_policy(vf: ValueFunction, rng: np.random.Generator | None = None,
                  epsilon: float = 0.0, allowed: np.ndarray | None = None) -> Callable:
    """Action of the minimising alpha, with optional epsilon-random exploration."""
    ids = None if allowed is None else np.flatnonzero(allowed)

    def pick(b, t):
        if rng is not None and epsilon > 0 and rng.random() < epsilon:
            pool = ids if ids is not None else np.unique(vf.action_ids)
            return int(rng.choice(pool))
        return int(vf.action_ids[vf.best(b)])
    return pick


def sample_beliefs(model: CoordinatorModel, policy: Callable, count: int, depth: int,
                   rng: np.random.Generator, b0: np.ndarray, max_trials: int | None = None,
                   known: list[np.ndarray] | None = None) -> np.ndarray:
    """Forward-simulate the belief process from ``b0``; return up to ``count`` distinct beliefs.

    ``b0`` is always first. Beliefs within L1 distance 1e-6 of one already
    collected (or of one in ``known``) are skipped.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    seen = list(known or [])
    out = [b0] if not seen or np.abs(np.asarray(seen) - b0).sum(axis=1).min() > DEDUP_L1 else []
    seen.append(b0)
    trials = 0
    max_trials = max_trials or 10 * count
    while len(out) < count and trials < max_trials:
        trials += 1
        b = b0
        for t in range(depth):
            a = policy(b, t)
            probs, nbs = model.successors(b, a)
            k = int(rng.choice(len(probs), p=probs / probs.sum()))
            b = nbs[k]
            if np.abs(np.asarray(seen) - b[None, :]).sum(axis=1).min() > DEDUP_L1:
                seen.append(b)
                out.append(b)
                if len(out) >= count:
                    break
    if not out:
        out = [b0]
    return np.asarray(out)


def pbvi_solve(model: CoordinatorModel, beliefs: np.ndarray, sweeps: int = 50,
               tolerance: float = 1e-3, vf: ValueFunction | None = None,
               allowed: np.ndarray | None = None, prune: bool = True,
               time_budget: float | None = None) -> PBVIResult:
    """Synchronous backups over ``beliefs`` until the largest value change < ``tolerance``.

    Starts from ``vf`` or, by default, the fixed-action envelope (a valid
    upper bound, so every sweep can only lower the values).
    """
    if sweeps < 1:
        raise ValueError("sweeps must be >= 1")
    beliefs = np.atleast_2d(beliefs)
    if vf is None:
        vf = blind_upper_bound(model)
        if allowed is not None:
            keep = allowed[vf.action_ids]
            vf = ValueFunction(vf.alphas[keep], vf.action_ids[keep])
    vf = ValueFunction(vf.alphas.copy(), vf.action_ids.copy())
    start = time.perf_counter()
    values = vf.values(beliefs)
    history = []
    status, residual = MAX_SWEEPS, np.inf
    actions = np.zeros(len(beliefs), dtype=np.int64)
    backed = values.copy()
    done = 0
    for sweep in range(1, sweeps + 1):
        snap = ValueFunction(vf.alphas, vf.action_ids)
        new = [pbvi_backup(model, b, snap, allowed) for b in beliefs]
        for k, (alpha, a, v) in enumerate(new):
            actions[k] = a
            backed[k] = v
            if v < values[k] - 1e-12:
                vf.add(alpha, a)
        if prune:
            vf.prune(beliefs)
        nv = vf.values(beliefs)
        residual = float(np.abs(values - nv).max())
        values = nv
        history.append(residual)
        done = sweep
        if residual < tolerance:
            status = CONVERGED
            break
        if time_budget is not None and time.perf_counter() - start > time_budget:
            status = BUDGET
            break
    return PBVIResult(vf, PolicyTable(beliefs, actions, backed), status, done, residual, history)


def solve_expanding(model: CoordinatorModel, b0: np.ndarray, rounds: int = 6,
                    per_round: int = 60, depth: int = 25, sweeps: int = 40,
                    tolerance: float = 1e-3, seed: int = 0, epsilon: float = 0.2,
                    allowed: np.ndarray | None = None,
                    time_budget: float | None = None) -> PBVIResult:
    """PBVI with belief-set growth: each round adds beliefs reached by the current greedy policy."""
    rng = np.random.Generator(np.random.PCG64(seed))
    start = time.perf_counter()
    explore = random_policy(model, rng, allowed)
    B = sample_beliefs(model, explore, per_round, depth, rng, b0)
    res = pbvi_solve(model, B, sweeps, tolerance, allowed=allowed)
    for _ in range(rounds - 1):
        left = None if time_budget is None else time_budget - (time.perf_counter() - start)
        if left is not None and left <= 0:
            res.status = BUDGET
            break
        pol = greedy_policy(res.value_function, rng, epsilon, allowed)
        extra = sample_beliefs(model, pol, per_round, depth, rng, b0, known=list(B))
        extra = [b for b in extra if np.abs(B - b[None, :]).sum(axis=1).min() > DEDUP_L1]
        if extra:
            B = np.vstack([B, np.asarray(extra)])
        res = pbvi_solve(model, B, sweeps, tolerance, vf=res.value_function, allowed=allowed,
                         time_budget=left)
    return res
