"""The coordinator POMDP in matrix form, as seen by the point-based solvers.

States are flat indices over ``(X, S+1, ..., S+1)``. A communication round
reveals, per retailer, the post-demand inventory exactly and the demand up to
a bin (contiguous demand intervals of roughly equal stationary mass), so the
solver-side observation of retailer i is ``o = bin * (S+1) + I'``. Bins are
refined wherever the agents' regime selection changes, which makes the next
inventory a deterministic function of ``o``.

Agents' regime selection depends on the belief's regime marginal, so every
kernel is cached per selection table.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..actions import CoordinatorAction, Prescription, selection_table
from ..dynamics import expected_stage_cost
from ..kernels import inventory_kernel, obs_min_values
from ..scenario import ScenarioConfig

DEFAULT_BINS = 8
TIE_RTOL = 1e-10
MAX_OUTCOMES = 2_000_000


def demand_bins(config: ScenarioConfig, n_bins: int = DEFAULT_BINS) -> np.ndarray:
    """bin id per (retailer, demand): contiguous intervals of ~equal stationary mass."""
    out = np.empty((config.n_retailers, config.d_max + 1), dtype=np.int64)
    w = config.regime_model.stationary()
    for i in range(config.n_retailers):
        mix = w @ config.demand_model.pmf[:, i, :]
        mid = np.cumsum(mix) - mix / 2
        raw = np.minimum((mid * n_bins).astype(np.int64), n_bins - 1)
        out[i] = np.unique(raw, return_inverse=True)[1]
    return out


def contract(t: np.ndarray, mats: list[np.ndarray]) -> np.ndarray:
    """r[x, m1..mN] = sum_I t[x, I1..IN] prod_i mats[i][x, I_i, m_i]."""
    n_x = t.shape[0]
    if len(mats) == 1:
        return np.einsum("xi,xim->xm", t, mats[0])
    if len(mats) == 2:
        return np.stack([mats[0][x].T @ t[x] @ mats[1][x] for x in range(n_x)])
    out = []
    for x in range(n_x):
        r = t[x]
        for i, m in enumerate(mats):
            r = np.moveaxis(np.tensordot(r, m[x], axes=([i], [0])), -1, i)
        out.append(r)
    return np.stack(out)


@dataclass
class _ObsStruct:
    A: np.ndarray          # (X, S+1, O): P(bin, I' | x, I)
    sel_of_bin: np.ndarray  # regime the agent selects for demands in each bin
    n_bins: int


@dataclass
class Outcomes:
    """Communicating-step outcomes with positive probability."""

    probs: np.ndarray      # (K,)
    weights: np.ndarray    # (X, K) unnormalised next-regime weights, sum over X = probs
    inv_index: np.ndarray  # (K,) flat next-inventory index
    obs: np.ndarray        # (K, N) per-retailer observation ids


@dataclass
class BackupResult:
    value: float
    action: int
    alpha: np.ndarray
    q: np.ndarray


class CoordinatorModel:
    """Immediate costs, kernels and Bellman backups for a fixed action list."""

    def __init__(self, config: ScenarioConfig, actions: list[CoordinatorAction],
                 n_bins: int = DEFAULT_BINS):
        if not actions:
            raise ValueError("empty action list")
        self.config = config
        self.actions = list(actions)
        self.n_regimes = config.n_regimes
        self.n_retailers = config.n_retailers
        self.s_max = config.s_max
        self.n_inv = config.s_max + 1
        self.inv_size = self.n_inv ** self.n_retailers
        self.n_states = self.n_regimes * self.inv_size
        self.T = np.asarray(config.regime_model.transition, dtype=float)
        self.beta = config.costs.discount
        self.comm_cost = config.costs.comm * config.n_retailers
        self.n_bins = n_bins
        self.base_bins = demand_bins(config, n_bins)

        ec = expected_stage_cost(config)
        c = np.zeros(config.belief_shape)
        for i in range(self.n_retailers):
            shape = [self.n_regimes] + [1] * self.n_retailers
            shape[1 + i] = self.n_inv
            c = c + ec[:, i, :].reshape(shape)
        self.cost = c.ravel()

        self.prescriptions: list[Prescription] = []
        index = {}
        self.action_presc = np.empty(len(actions), dtype=np.int64)
        self.action_comm = np.empty(len(actions), dtype=np.int64)
        for a, act in enumerate(self.actions):
            if not act.prescription.within(config.s_max):
                raise ValueError(f"action {a} has targets outside [0, {config.s_max}]")
            key = act.prescription.targets
            if key not in index:
                index[key] = len(self.prescriptions)
                self.prescriptions.append(act.prescription)
            self.action_presc[a] = index[key]
            self.action_comm[a] = act.comm
        self.action_cost = self.comm_cost * self.action_comm
        self._obs_cache: dict = {}
        self._ops_cache: dict = {}
        self._core_key = None
        self._core = None

    # -- structure ---------------------------------------------------------

    def shape(self) -> tuple[int, ...]:
        return self.config.belief_shape

    def regime_marginal(self, b: np.ndarray) -> np.ndarray:
        return b.reshape(self.n_regimes, -1).sum(axis=1)

    def selection(self, b: np.ndarray) -> np.ndarray:
        return selection_table(self.regime_marginal(b), self.config.demand_model)

    def obs_struct(self, i: int, sel_i: np.ndarray) -> _ObsStruct:
        key = (i, sel_i.tobytes())
        hit = self._obs_cache.get(key)
        if hit is not None:
            return hit
        base = self.base_bins[i]
        change = np.zeros(base.size, dtype=np.int64)
        change[1:] = (base[1:] != base[:-1]) | (sel_i[1:] != sel_i[:-1])
        bins = np.cumsum(change)
        nb = int(bins[-1]) + 1
        sel_of_bin = np.empty(nb, dtype=np.int64)
        sel_of_bin[bins] = sel_i
        pmf = self.config.demand_model.pmf[:, i, :]
        inv = np.arange(self.n_inv)
        d = np.arange(pmf.shape[1])
        post = np.maximum(inv[:, None] - d[None, :], 0)
        col = bins[None, :] * self.n_inv + post
        A = np.zeros((self.n_regimes, self.n_inv, nb * self.n_inv))
        rows = np.broadcast_to(inv[:, None], col.shape)
        for x in range(self.n_regimes):
            np.add.at(A[x], (rows, col), np.broadcast_to(pmf[x], col.shape))
        out = _ObsStruct(A, sel_of_bin, nb)
        self._obs_cache[key] = out
        return out

    def retailer_ops(self, i: int, sel_i: np.ndarray, targets_i: tuple[int, ...]):
        """(K0[x, I, n], next inventory per observation id) for one retailer."""
        key = (i, sel_i.tobytes(), targets_i)
        hit = self._ops_cache.get(key)
        if hit is not None:
            return hit
        st = self.obs_struct(i, sel_i)
        tg = np.asarray(targets_i, dtype=np.int64)
        s_bin = tg[st.sel_of_bin]
        post = np.tile(np.arange(self.n_inv), st.n_bins)
        n_of_o = np.minimum(np.maximum(post, np.repeat(s_bin, self.n_inv)), self.s_max)
        pmf = self.config.demand_model.pmf[:, i, :]
        by_d = tg[sel_i]
        zeros = np.zeros(pmf.shape[1], dtype=np.int64)
        ones = np.ones(pmf.shape[1])
        K0 = np.stack([inventory_kernel(np.ascontiguousarray(pmf[x]), by_d, self.s_max,
                                        zeros, 1, ones)[0]
                       for x in range(self.n_regimes)])
        out = (K0, n_of_o)
        self._ops_cache[key] = out
        return out

    # -- one-step maps -------------------------------------------------------

    def predict(self, b: np.ndarray, p: int, sel: np.ndarray) -> np.ndarray:
        """Silent step: next belief (flat), already pushed through the regime chain."""
        presc = self.prescriptions[p].targets
        mats = [self.retailer_ops(i, sel[i], presc[i])[0] for i in range(self.n_retailers)]
        r = contract(b.reshape(self.shape()), mats)
        return np.tensordot(self.T, r, axes=([0], [0])).ravel()

    def _comm_core(self, b: np.ndarray, sel: np.ndarray):
        """Observation probabilities and next-regime weights; independent of the targets."""
        key = (b.tobytes(), sel.tobytes())
        if self._core_key == key:
            return self._core
        t = b.reshape(self.shape())
        rows, cols, mats = [], [], []
        for i in range(self.n_retailers):
            axes = tuple(a for a in range(1 + self.n_retailers) if a != 1 + i)
            A = self.obs_struct(i, sel[i]).A
            u = np.flatnonzero(t.sum(axis=axes) > 0)
            sub = A[:, u, :]
            c = np.flatnonzero(sub.any(axis=(0, 1)))
            rows.append(u)
            cols.append(c)
            mats.append(sub[:, :, c])
        size = int(np.prod([len(c) for c in cols]))
        if size * self.n_regimes > MAX_OUTCOMES:
            raise MemoryError(f"{size} joint observations exceed the solver limit")
        tsub = t[np.ix_(np.arange(self.n_regimes), *rows)]
        g = contract(tsub, mats)
        h = np.tensordot(self.T, g, axes=([0], [0])).reshape(self.n_regimes, -1)
        probs = h.sum(axis=0)
        k = np.flatnonzero(probs > 0)
        idx = np.unravel_index(k, [len(c) for c in cols])
        obs = np.stack([cols[i][idx[i]] for i in range(self.n_retailers)], axis=1)
        self._core_key = key
        self._core = (probs[k], np.ascontiguousarray(h[:, k]), obs)
        return self._core

    def outcomes(self, b: np.ndarray, p: int, sel: np.ndarray) -> Outcomes:
        """Communicating step: all positive-probability (observation, next belief) pairs."""
        presc = self.prescriptions[p].targets
        probs, w, obs = self._comm_core(b, sel)
        nxt = [self.retailer_ops(i, sel[i], presc[i])[1][obs[:, i]] for i in range(self.n_retailers)]
        inv_index = np.ravel_multi_index(nxt, (self.n_inv,) * self.n_retailers)
        return Outcomes(probs, w, inv_index.astype(np.int64), obs)

    def successors(self, b: np.ndarray, a: int, sel: np.ndarray | None = None):
        """(probs, next beliefs as rows) for action ``a`` at ``b``."""
        sel = self.selection(b) if sel is None else sel
        p = int(self.action_presc[a])
        if self.action_comm[a] == 0:
            return np.ones(1), self.predict(b, p, sel)[None, :]
        out = self.outcomes(b, p, sel)
        nb = np.zeros((out.probs.size, self.n_states))
        for x in range(self.n_regimes):
            nb[np.arange(out.probs.size), x * self.inv_size + out.inv_index] = out.weights[x] / out.probs
        return out.probs, nb

    def immediate_cost(self, b: np.ndarray) -> float:
        return float(self.cost @ b)

    # -- alpha construction ------------------------------------------------

    def silent_alpha(self, cont: np.ndarray, p: int, sel: np.ndarray, comm: int = 0) -> np.ndarray:
        """cost + beta * E[cont(next)] for a fixed continuation vector."""
        presc = self.prescriptions[p].targets
        mats = [np.transpose(self.retailer_ops(i, sel[i], presc[i])[0], (0, 2, 1))
                for i in range(self.n_retailers)]
        tc = np.tensordot(self.T, cont.reshape(self.shape()), axes=([1], [0]))
        r = contract(tc, mats).ravel()
        return self.cost + comm * self.comm_cost + self.beta * r

    def comm_alpha(self, alphas: np.ndarray, obs: np.ndarray, choice: np.ndarray, default: int,
                   p: int, sel: np.ndarray) -> np.ndarray:
        """Alpha of: share now, then continue with alpha ``choice[k]`` after ``obs[k]``.

        Observations not listed (zero probability at the backup belief) use ``default``.
        """
        presc = self.prescriptions[p].targets
        A_list, n_list = [], []
        for i in range(self.n_retailers):
            A_list.append(self.obs_struct(i, sel[i]).A)
            n_list.append(self.retailer_ops(i, sel[i], presc[i])[1])
        sizes = [len(n) for n in n_list]
        assign = np.full(sizes, default, dtype=np.int64)
        if len(obs):
            assign[tuple(np.asarray(obs).T)] = choice
        grids = np.meshgrid(*n_list, indexing="ij")
        inv = np.ravel_multi_index(grids, (self.n_inv,) * self.n_retailers)
        A3 = alphas.reshape(alphas.shape[0], self.n_regimes, self.inv_size)
        vals = A3[assign, :, inv]  # (O..., X')
        phi = np.moveaxis(vals @ self.T.T, -1, 0)  # (X, O...)
        mats = [np.transpose(A, (0, 2, 1)) for A in A_list]
        r = contract(phi, mats).ravel()
        return self.cost + self.comm_cost + self.beta * r

    # -- Bellman backup ----------------------------------------------------

    def backup(self, b: np.ndarray, alphas: np.ndarray, allowed: np.ndarray | None = None,
               build_alpha: bool = True) -> BackupResult:
        """Point-based backup at ``b`` against the alpha set (rows of ``alphas``)."""
        sel = self.selection(b)
        m = alphas.shape[0]
        A3 = np.ascontiguousarray(alphas.reshape(m, self.n_regimes, self.inv_size))
        cb = self.immediate_cost(b)
        n_a = len(self.actions)
        q = np.full(n_a, np.inf)
        allowed = np.ones(n_a, dtype=bool) if allowed is None else allowed
        detail = {}
        for p in range(len(self.prescriptions)):
            acts = np.flatnonzero((self.action_presc == p) & allowed)
            if acts.size == 0:
                continue
            for a in acts:
                if self.action_comm[a] == 0:
                    v = alphas @ self.predict(b, p, sel)
                    j = int(np.argmin(v))
                    q[a] = cb + self.action_cost[a] + self.beta * v[j]
                    detail[a] = j
                else:
                    out = self.outcomes(b, p, sel)
                    vals, arg = obs_min_values(A3, out.inv_index, out.weights)
                    q[a] = cb + self.action_cost[a] + self.beta * vals.sum()
                    detail[a] = (out, arg)
        best = int(np.argmin(q))
        tol = TIE_RTOL * max(1.0, abs(q[best]))
        best = int(np.flatnonzero(q <= q[best] + tol)[0])
        if not build_alpha:
            return BackupResult(float(q[best]), best, None, q)
        p = int(self.action_presc[best])
        if self.action_comm[best] == 0:
            alpha = self.silent_alpha(alphas[detail[best]], p, sel)
        else:
            out, arg = detail[best]
            default = int(np.argmin(alphas @ b))
            alpha = self.comm_alpha(alphas, out.obs, arg, default, p, sel)
        return BackupResult(float(q[best]), best, alpha, q)
