"""Grid value iteration on the belief simplex: ground truth for tiny instances.

The lattice is ``{g / r : g integer, g >= 0, sum g = r}`` over the flat state
space. Successor beliefs are mapped back to the lattice either by rounding to
the nearest vertex or by Freudenthal (barycentric) interpolation. Transitions
are assembled from the filter kernels in :mod:`invcomm.belief`, a separate
route from the solver's matrices, with the same demand bins for shared rounds.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from math import comb

import numpy as np
from scipy import sparse

from ..actions import CoordinatorAction, selection_table, targets_by_demand
from ..belief import SILENT, BinnedReport, retailer_kernels
from ..kernels import lattice_round
from ..scenario import ScenarioConfig
from .model import DEFAULT_BINS, demand_bins

MAX_STATES = 200
MAX_OBS = 64
NEAREST = "nearest"
FREUDENTHAL = "freudenthal"


class OracleTooLarge(ValueError):
    pass


@dataclass
class OracleResult:
    value: float
    error_bound: float
    method: str
    resolution: int
    n_points: int
    iterations: int
    residual: float
    max_rounding_l1: float


def _obs_sets(config: ScenarioConfig, sel: np.ndarray, base: np.ndarray):
    """Per retailer: list of (demand tuple) bins, split where the selection changes."""
    out = []
    for i in range(config.n_retailers):
        groups, cur = [], [0]
        for d in range(1, config.d_max + 1):
            if base[i, d] != base[i, d - 1] or sel[i, d] != sel[i, d - 1]:
                groups.append(tuple(cur))
                cur = []
            cur.append(d)
        groups.append(tuple(cur))
        out.append(groups)
    return out


def observation_alphabet(config: ScenarioConfig, n_bins: int = DEFAULT_BINS) -> int:
    """Worst-case joint shared-round observations (bins refined by one split per regime boundary)."""
    base = demand_bins(config, n_bins)
    per = [(int(base[i].max()) + config.n_regimes) * (config.s_max + 1)
           for i in range(config.n_retailers)]
    return int(np.prod(per))


class Lattice:
    """Compositions of ``r`` into ``n`` parts with a vectorised colex rank."""

    def __init__(self, n: int, r: int):
        self.n, self.r = n, r
        self.size = comb(r + n - 1, n - 1)
        top = r + n
        self._binom = np.array([[comb(a, k) for k in range(n)] for a in range(top)], dtype=np.int64)
        pts = np.empty((self.size, n), dtype=np.int64)
        for c in itertools.combinations(range(r + n - 1), n - 1):
            bars = np.array(c)
            x = np.diff(np.concatenate([[-1], bars, [r + n - 1]])) - 1
            pts[self.rank(x[None, :])[0]] = x
        self.points = pts

    def rank(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        bars = np.cumsum(x[:, :-1], axis=1) + np.arange(self.n - 1)[None, :]
        return self._binom[bars, np.arange(1, self.n)[None, :]].sum(axis=1)

    def beliefs(self) -> np.ndarray:
        return self.points / self.r

    def nearest(self, b: np.ndarray):
        g = lattice_round(np.ascontiguousarray(b), self.r)
        return self.rank(g)[:, None], np.ones((len(b), 1)), np.abs(g / self.r - b).sum(axis=1)

    def freudenthal(self, b: np.ndarray):
        """Vertices (m, n) and barycentric weights of the Freudenthal cell containing each row."""
        x = b * self.r
        y = np.cumsum(x[:, ::-1], axis=1)[:, ::-1][:, 1:]  # y_k = sum_{j>=k} x_j, k = 1..n-1
        base = np.floor(y + 1e-12)
        d = np.clip(y - base, 0.0, 1.0)
        order = np.argsort(-d, axis=1, kind="stable")
        ds = np.take_along_axis(d, order, axis=1)
        m, k = y.shape
        w = np.empty((m, k + 1))
        w[:, 0] = 1.0 - ds[:, 0]
        w[:, 1:k] = ds[:, :-1] - ds[:, 1:]
        w[:, k] = ds[:, -1]
        verts = np.empty((m, k + 1), dtype=np.int64)
        cur = base.astype(np.int64)
        rows = np.arange(m)
        far = np.zeros(m)
        for j in range(k + 1):
            if j > 0:
                cur = cur.copy()
                cur[rows, order[:, j - 1]] += 1
            full = np.concatenate([np.full((m, 1), self.r), cur, np.zeros((m, 1), dtype=np.int64)], axis=1)
            g = full[:, :-1] - full[:, 1:]
            verts[:, j] = self.rank(g)
            far = np.maximum(far, np.where(w[:, j] > 0, np.abs(g / self.r - b).sum(axis=1), 0.0))
        return verts, w, far


def _transition_blocks(config: ScenarioConfig, action: CoordinatorAction, sel: np.ndarray,
                       base: np.ndarray):
    """List of (S x S) matrices M_o with M_o[s, s'] = P(obs o, next s' | s)."""
    tg = targets_by_demand(action.prescription, None, config.demand_model, sel=sel)
    T = config.regime_model.transition
    if action.comm == 0:
        obs_lists = [[SILENT]] * config.n_retailers
    else:
        obs_lists = [[BinnedReport(g, post) for g in groups for post in range(config.s_max + 1)]
                     for groups in _obs_sets(config, sel, base)]
    mats = []
    for combo in itertools.product(*obs_lists):
        W = [retailer_kernels(config, tg, i, o) for i, o in enumerate(combo)]
        blocks = []
        for x in range(config.n_regimes):
            k = W[0][x]
            for Wi in W[1:]:
                k = np.kron(k, Wi[x])
            blocks.append(k)
        if not any(blk.any() for blk in blocks):
            continue
        M = np.block([[T[x, y] * blocks[x] for y in range(config.n_regimes)]
                      for x in range(config.n_regimes)])
        mats.append(M)
    return mats


def exact_vi_oracle(config: ScenarioConfig, actions: list[CoordinatorAction], resolution: int = 6,
                    n_bins: int = DEFAULT_BINS, method: str = FREUDENTHAL, tol: float = 1e-9,
                    max_iter: int = 20_000, b0: np.ndarray | None = None,
                    comm_per_message: bool = True) -> OracleResult:
    """Value at ``b0`` (initial belief by default) of grid value iteration."""
    n = config.n_states
    alphabet = observation_alphabet(config, n_bins)
    if n > MAX_STATES or alphabet > MAX_OBS:
        raise OracleTooLarge(f"instance has {n} states (limit {MAX_STATES}) and up to "
                             f"{alphabet} shared-round observations (limit {MAX_OBS})")
    if method not in (NEAREST, FREUDENTHAL):
        raise ValueError(f"unknown method {method!r}")
    lat = Lattice(n, resolution)
    B = lat.beliefs()
    base = demand_bins(config, n_bins)
    from ..dynamics import expected_stage_cost
    ec = expected_stage_cost(config)
    cost = np.zeros(config.belief_shape)
    for i in range(config.n_retailers):
        shape = [config.n_regimes] + [1] * config.n_retailers
        shape[1 + i] = config.s_max + 1
        cost = cost + ec[:, i, :].reshape(shape)
    cost = cost.ravel()
    beta = config.costs.discount
    comm = config.costs.comm * (config.n_retailers if comm_per_message else 1)
    locate = lat.nearest if method == NEAREST else lat.freudenthal

    def successors(Bq: np.ndarray):
        """Per action: sparse (len(Bq) x lattice) expected-successor operator."""
        regime = Bq.reshape(len(Bq), config.n_regimes, -1).sum(axis=2)
        sels = [selection_table(rm, config.demand_model) for rm in regime]
        keys = {}
        for j, s in enumerate(sels):
            keys.setdefault(s.tobytes(), []).append(j)
        ops, worst = [], 0.0
        for act in actions:
            rows, cols, vals = [], [], []
            for idx in keys.values():
                idx = np.asarray(idx)
                for M in _transition_blocks(config, act, sels[idx[0]], base):
                    Y = Bq[idx] @ M
                    z = Y.sum(axis=1)
                    ok = z > 1e-15
                    if not ok.any():
                        continue
                    v, w, far = locate(Y[ok] / z[ok, None])
                    worst = max(worst, float(far.max()))
                    rows.append(np.repeat(idx[ok], v.shape[1]))
                    cols.append(v.ravel())
                    vals.append((w * z[ok, None]).ravel())
            P = sparse.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                                  shape=(len(Bq), lat.size))
            ops.append(P)
        return ops, worst

    ops, worst = successors(B)
    base_cost = B @ cost
    extra = np.array([comm * a.comm for a in actions])
    V = base_cost / (1 - beta)
    residual, it = np.inf, 0
    for it in range(1, max_iter + 1):
        Q = np.stack([base_cost + extra[k] + beta * (P @ V) for k, P in enumerate(ops)])
        Vn = Q.min(axis=0)
        residual = float(np.abs(Vn - V).max())
        V = Vn
        if residual * beta / (1 - beta) < tol:
            break
    if b0 is None:
        from ..belief import initial_belief
        b0 = initial_belief(config).probs
    ops0, w0 = successors(np.asarray(b0, dtype=float)[None, :])
    q0 = [float(b0 @ cost) + extra[k] + beta * float((P @ V)[0]) for k, P in enumerate(ops0)]
    worst = max(worst, w0)
    span = (float(cost.max()) + float(extra.max())) / (1 - beta)
    delta = min(2.0, n / resolution)
    bound = beta / (1 - beta) * 0.5 * span * delta
    return OracleResult(min(q0), bound, method, resolution, lat.size, it, residual, worst)
