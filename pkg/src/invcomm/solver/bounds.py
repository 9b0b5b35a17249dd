"""Value representations and the two initial bounds.

Costs are minimised, so the alpha-vector envelope ``min_m <alpha_m, b>`` is an
upper bound on the optimal cost (every alpha is the cost of some plan), and
the point set with sawtooth interpolation over full-observability corner
values is a lower bound.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..actions import selection_table
from ..kernels import sawtooth
from .model import CoordinatorModel, contract

DEDUP_L1 = 1e-6


@dataclass
class ValueFunction:
    """Alpha vectors (rows) with the action each one certifies."""

    alphas: np.ndarray
    action_ids: np.ndarray

    def __post_init__(self):
        self.alphas = np.atleast_2d(np.asarray(self.alphas, dtype=float))
        self.action_ids = np.asarray(self.action_ids, dtype=np.int64).ravel()
        if self.alphas.shape[0] == 0:
            raise ValueError("value function needs at least one alpha vector")
        if self.alphas.shape[0] != self.action_ids.size:
            raise ValueError("one action id per alpha vector")

    def __len__(self) -> int:
        return self.alphas.shape[0]

    def value(self, b: np.ndarray) -> float:
        return float((self.alphas @ b).min())

    def values(self, beliefs: np.ndarray) -> np.ndarray:
        return (np.atleast_2d(beliefs) @ self.alphas.T).min(axis=1)

    def best(self, b: np.ndarray) -> int:
        """Index of the minimising alpha (lowest index on ties)."""
        return int(np.argmin(self.alphas @ b))

    def add(self, alpha: np.ndarray, action: int) -> None:
        self.alphas = np.vstack([self.alphas, alpha[None, :]])
        self.action_ids = np.append(self.action_ids, action)

    def prune(self, beliefs: np.ndarray | None = None, tol: float = 1e-12) -> None:
        """Drop pointwise-dominated alphas, then those optimal at none of ``beliefs``."""
        A = self.alphas
        keep = np.ones(len(A), dtype=bool)
        for i in range(len(A)):
            others = keep.copy()
            others[i] = False
            if (others & np.all(A <= A[i] + tol, axis=1)).any():
                keep[i] = False
        if beliefs is not None and len(beliefs):
            used = np.zeros(len(A), dtype=bool)
            vals = np.atleast_2d(beliefs) @ A[keep].T
            used[np.flatnonzero(keep)[np.argmin(vals, axis=1)]] = True
            keep &= used
        self.alphas = A[keep]
        self.action_ids = self.action_ids[keep]


@dataclass
class TabulatedBound:
    """State values of a relaxation: ``<values, b>`` bounds the optimum from below."""

    values: np.ndarray
    iterations: int
    residual_span: float

    def value(self, b: np.ndarray) -> float:
        return float(self.values @ b)


class PointSetBound:
    """Lower bound from corner values plus interior (belief, value) points."""

    def __init__(self, corner: np.ndarray):
        self.corner = np.array(corner, dtype=float)
        self._pts = np.zeros((16, self.corner.size))
        self._vals = np.zeros(16)
        self.n_points = 0

    @property
    def points(self) -> np.ndarray:
        return self._pts[:self.n_points]

    @property
    def vals(self) -> np.ndarray:
        return self._vals[:self.n_points]

    def values(self, beliefs: np.ndarray) -> np.ndarray:
        return sawtooth(self.points, self.vals, self.corner,
                        np.ascontiguousarray(np.atleast_2d(beliefs)))

    def value(self, b: np.ndarray) -> float:
        return float(self.values(b[None, :])[0])

    def update(self, b: np.ndarray, v: float) -> float:
        """Record ``v`` at ``b``; stored values never decrease. Returns the stored value."""
        v = max(float(v), self.value(b))
        if np.count_nonzero(b) == 1:
            s = int(np.flatnonzero(b)[0])
            self.corner[s] = max(self.corner[s], v)
            return float(self.corner[s])
        if self.n_points:
            d = np.abs(self.points - b[None, :]).sum(axis=1)
            j = int(np.argmin(d))
            if d[j] <= DEDUP_L1:
                self._vals[j] = max(self._vals[j], v)
                return float(self._vals[j])
        if self.n_points == len(self._vals):
            self._pts = np.vstack([self._pts, np.zeros_like(self._pts)])
            self._vals = np.concatenate([self._vals, np.zeros_like(self._vals)])
        self._pts[self.n_points] = b
        self._vals[self.n_points] = v
        self.n_points += 1
        return v


def _reach_min(W: np.ndarray, axis: int, levels: np.ndarray) -> np.ndarray:
    """min over n reachable from post: n = post or any level above post."""
    W = np.moveaxis(W, axis, 0)
    out = W.copy()
    for post in range(W.shape[0]):
        up = levels[levels > post]
        if up.size:
            out[post] = np.minimum(out[post], W[up].min(axis=0))
    return np.moveaxis(out, 0, axis)


def mdp_lower_bound(model: CoordinatorModel, tol: float = 1e-6,
                    max_iter: int = 100_000) -> TabulatedBound:
    """Value iteration on a full-observability relaxation.

    The relaxed controller sees the regime, every inventory and every demand
    before ordering, may raise each retailer to any grid level, and never
    pays for messages. Every coordinator policy is feasible for it, so its
    optimal cost bounds the coordinator's from below.
    """
    cfg = model.config
    levels = np.unique(np.concatenate([p.array.ravel() for p in model.prescriptions]))
    levels = np.minimum(levels, model.s_max)
    inv = np.arange(model.n_inv)
    d = np.arange(cfg.d_max + 1)
    post = np.maximum(inv[:, None] - d[None, :], 0)
    P = []  # per retailer: (X, post, I) = P(post | I, x) transposed for contract
    for i in range(model.n_retailers):
        Pi = np.zeros((model.n_regimes, model.n_inv, model.n_inv))
        for x in range(model.n_regimes):
            np.add.at(Pi[x], (np.broadcast_to(inv[:, None], post.shape), post),
                      np.broadcast_to(cfg.demand_model.pmf[x, i], post.shape))
        P.append(np.transpose(Pi, (0, 2, 1)))
    shape = model.shape()
    beta = model.beta
    V = model.cost.copy()
    for it in range(1, max_iter + 1):
        W = np.tensordot(model.T, V.reshape(shape), axes=([1], [0]))
        for ax in range(1, 1 + model.n_retailers):
            W = _reach_min(W, ax, levels)
        Vn = model.cost + beta * contract(W, P).ravel()
        delta = Vn - V
        V = Vn
        span = float(delta.max() - delta.min())
        if beta / (1 - beta) * span < tol:
            break
    lower = V + beta / (1 - beta) * float(delta.min())
    return TabulatedBound(lower, it, span)


def blind_upper_bound(model: CoordinatorModel, tol: float = 1e-9,
                      regime_probs: np.ndarray | None = None,
                      max_iter: int = 100_000) -> ValueFunction:
    """Cost of repeating each action forever, one alpha per action.

    Agents' regime selection is frozen at ``regime_probs`` (the initial regime
    distribution by default). Each alpha is lifted by the MacQueen correction
    so it never undercuts the exact fixed point.
    """
    cfg = model.config
    rp = cfg.regime_model.initial if regime_probs is None else np.asarray(regime_probs)
    sel = selection_table(rp, cfg.demand_model)
    beta = model.beta
    base = {}
    for p in range(len(model.prescriptions)):
        a = model.cost / (1 - beta)
        for _ in range(max_iter):
            an = model.silent_alpha(a, p, sel)
            delta = an - a
            a = an
            if beta / (1 - beta) * float(delta.max() - delta.min()) < tol:
                break
        base[p] = a + beta / (1 - beta) * max(float(delta.max()), 0.0)
    alphas = np.stack([base[int(model.action_presc[k])]
                       + model.action_cost[k] / (1 - beta) for k in range(len(model.actions))])
    return ValueFunction(alphas, np.arange(len(model.actions)))
