"""Coordinator belief over (regime, inventories): exact flat filter and factored ADF.

Flat layout: ``probs`` reshaped to ``(X, S+1, ..., S+1)`` (one inventory axis
per retailer, C order). Every update goes through one routine: build, per
retailer and regime, an observation-weighted inventory kernel ``W[I, n]``,
contract it against the belief, push the regime one step through the
transition matrix and normalise. The normaliser is the observation likelihood.

Agents pick their target from the regime marginal of the belief held at the
start of the period (see :func:`invcomm.actions.targets_by_demand`).
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .actions import CoordinatorAction, Prescription, targets_by_demand
from .scenario import ScenarioConfig

NORM_TOL = 1e-9
FORMAT_VERSION = 1
_MAGIC = b"ICBF"
_HEADER = struct.Struct("<4sIIII")  # magic, version, |X|, N, S_max


class InconsistentObservation(ValueError):
    """The observation has zero probability under the current belief."""


# observation items per retailer
SILENT = None


@dataclass(frozen=True)
class Censored:
    threshold: int


@dataclass(frozen=True)
class Report:
    demand: int
    post_inventory: int


@dataclass(frozen=True)
class BinnedReport:
    """Demand known only to lie in ``demands``; post-demand inventory exact."""

    demands: tuple[int, ...]
    post_inventory: int


@dataclass(frozen=True)
class FlatBelief:
    probs: np.ndarray
    n_regimes: int
    n_retailers: int
    s_max: int

    def __post_init__(self):
        p = np.array(self.probs, dtype=float).ravel()
        expect = self.n_regimes * (self.s_max + 1) ** self.n_retailers
        if p.size != expect:
            raise ValueError(f"belief has {p.size} entries, expected {expect}")
        if (p < 0).any() or abs(p.sum() - 1.0) > NORM_TOL:
            raise ValueError("belief must be non-negative and sum to 1")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n_regimes,) + (self.s_max + 1,) * self.n_retailers

    @property
    def tensor(self) -> np.ndarray:
        return self.probs.reshape(self.shape)

    def regime_marginal(self) -> np.ndarray:
        return self.tensor.reshape(self.n_regimes, -1).sum(axis=1)

    def inventory_marginal(self, retailer: int) -> np.ndarray:
        axes = tuple(a for a in range(1 + self.n_retailers) if a != 1 + retailer)
        return self.tensor.sum(axis=axes)

    def with_probs(self, probs: np.ndarray) -> "FlatBelief":
        return FlatBelief(probs, self.n_regimes, self.n_retailers, self.s_max)

    def to_bytes(self) -> bytes:
        head = _HEADER.pack(_MAGIC, FORMAT_VERSION, self.n_regimes, self.n_retailers, self.s_max)
        return head + self.probs.astype("<f8").tobytes()

    @classmethod
    def from_bytes(cls, blob: bytes) -> "FlatBelief":
        magic, version, n_x, n_r, s_max = _HEADER.unpack_from(blob)
        if magic != _MAGIC or version != FORMAT_VERSION:
            raise ValueError(f"not a version-{FORMAT_VERSION} belief dump")
        return cls(np.frombuffer(blob, dtype="<f8", offset=_HEADER.size), n_x, n_r, s_max)


@dataclass(frozen=True)
class FactoredBelief:
    """b_x and q_i(n | x); ``inv_cond`` has shape (N, X, S+1)."""

    regime_probs: np.ndarray
    inv_cond: np.ndarray

    def __post_init__(self):
        b = np.array(self.regime_probs, dtype=float)
        q = np.array(self.inv_cond, dtype=float)
        if q.ndim != 3 or q.shape[1] != b.size:
            raise ValueError("inv_cond must have shape (N, X, S+1)")
        if (b < 0).any() or abs(b.sum() - 1) > NORM_TOL:
            raise ValueError("regime_probs must be a distribution")
        if (q < 0).any() or np.abs(q.sum(axis=2) - 1).max() > NORM_TOL:
            raise ValueError("each inv_cond row must be a distribution")
        b.setflags(write=False)
        q.setflags(write=False)
        object.__setattr__(self, "regime_probs", b)
        object.__setattr__(self, "inv_cond", q)

    @property
    def n_regimes(self) -> int:
        return self.regime_probs.size

    @property
    def n_retailers(self) -> int:
        return self.inv_cond.shape[0]

    @property
    def s_max(self) -> int:
        return self.inv_cond.shape[2] - 1

    def regime_marginal(self) -> np.ndarray:
        return self.regime_probs

    def inventory_marginal(self, retailer: int) -> np.ndarray:
        return self.regime_probs @ self.inv_cond[retailer]


Belief = FlatBelief | FactoredBelief


# -- construction --------------------------------------------------------------

def point_inventories(config: ScenarioConfig, regime_probs: Sequence[float],
                      inventories: Sequence[int]) -> FlatBelief:
    """Known inventories, uncertain regime."""
    t = np.zeros(config.belief_shape)
    for x, bx in enumerate(regime_probs):
        t[(x,) + tuple(int(i) for i in inventories)] = bx
    return FlatBelief(t.ravel(), config.n_regimes, config.n_retailers, config.s_max)


def initial_belief(config: ScenarioConfig) -> FlatBelief:
    return point_inventories(config, config.regime_model.initial, config.initial_inventories)


def initial_factored(config: ScenarioConfig) -> FactoredBelief:
    q = np.zeros((config.n_retailers, config.n_regimes, config.s_max + 1))
    for i, inv in enumerate(config.initial_inventories):
        q[i, :, inv] = 1.0
    return FactoredBelief(config.regime_model.initial, q)


def flatten(fb: FactoredBelief) -> FlatBelief:
    t = fb.regime_probs.reshape((-1,) + (1,) * fb.n_retailers)
    for i in range(fb.n_retailers):
        shape = [fb.n_regimes] + [1] * fb.n_retailers
        shape[1 + i] = fb.s_max + 1
        t = t * fb.inv_cond[i].reshape(shape)
    return FlatBelief(t.ravel(), fb.n_regimes, fb.n_retailers, fb.s_max)


def project(b: FlatBelief) -> FactoredBelief:
    """Regime marginal plus per-regime inventory marginals (drops cross-retailer correlation)."""
    t = b.tensor
    bx = b.regime_marginal()
    q = np.empty((b.n_retailers, b.n_regimes, b.s_max + 1))
    for i in range(b.n_retailers):
        axes = tuple(a for a in range(1, 1 + b.n_retailers) if a != 1 + i)
        joint = t.sum(axis=axes) if axes else t
        with np.errstate(invalid="ignore", divide="ignore"):
            cond = joint / bx[:, None]
        # regimes with zero mass get an arbitrary but valid conditional
        cond[bx <= 0] = joint.sum(axis=0) / joint.sum() if joint.sum() > 0 else 1.0 / (b.s_max + 1)
        q[i] = cond
    return FactoredBelief(bx, q)


# -- kernels -----------------------------------------------------------------

def _validate_obs(config: ScenarioConfig, obs: Sequence) -> None:
    if len(obs) != config.n_retailers:
        raise ValueError(f"observation has {len(obs)} entries, expected {config.n_retailers}")
    for o in obs:
        if isinstance(o, Report):
            if not (0 <= o.demand <= config.d_max and 0 <= o.post_inventory <= config.s_max):
                raise ValueError(f"report {o} outside the observation support")
        elif isinstance(o, BinnedReport):
            if not all(0 <= d <= config.d_max for d in o.demands) or not 0 <= o.post_inventory <= config.s_max:
                raise ValueError(f"report {o} outside the observation support")
        elif isinstance(o, Censored):
            if o.threshold < 0:
                raise InconsistentObservation(f"silence below threshold {o.threshold} is impossible")
        elif o is not SILENT:
            raise ValueError(f"unknown observation item {o!r}")


def retailer_kernels(config: ScenarioConfig, targets: np.ndarray, retailer: int,
                     obs) -> np.ndarray:
    """W[x, I, n]: P(observation item, next inventory n | regime x, inventory I).

    ``targets`` is the (N, D+1) table of order-up-to levels chosen per demand.
    """
    S = config.s_max
    pmf = config.demand_model.pmf[:, retailer, :]
    inv = np.arange(S + 1)
    out = np.zeros((config.n_regimes, S + 1, S + 1))
    if isinstance(obs, Report):
        d, post = obs.demand, obs.post_inventory
        ok = np.maximum(inv - d, 0) == post
        n = min(max(post, int(targets[retailer, d])), S)
        out[:, ok, n] = pmf[:, d][:, None]
        return out
    if isinstance(obs, BinnedReport):
        post = obs.post_inventory
        for d in obs.demands:
            ok = np.maximum(inv - d, 0) == post
            n = min(max(post, int(targets[retailer, d])), S)
            out[:, ok, n] += pmf[:, d][:, None]
        return out
    dmax = config.d_max if obs is SILENT else min(obs.threshold, config.d_max)
    d = np.arange(dmax + 1)
    post = np.maximum(inv[:, None] - d[None, :], 0)
    nxt = np.minimum(np.maximum(post, targets[retailer, :dmax + 1][None, :]), S)
    rows = np.broadcast_to(inv[:, None], nxt.shape)
    for x in range(config.n_regimes):
        np.add.at(out[x], (rows, nxt), np.broadcast_to(pmf[x, :dmax + 1], nxt.shape))
    return out


def _targets(config: ScenarioConfig, belief: Belief, prescription: Prescription) -> np.ndarray:
    return targets_by_demand(prescription, belief.regime_marginal(), config.demand_model)


def _propagate_flat(config: ScenarioConfig, belief: FlatBelief, prescription: Prescription,
                    obs: Sequence) -> tuple[np.ndarray, float]:
    tg = _targets(config, belief, prescription)
    t = belief.tensor
    out = np.empty_like(t)
    kernels = [retailer_kernels(config, tg, i, o) for i, o in enumerate(obs)]
    for x in range(config.n_regimes):
        r = t[x]
        for i, W in enumerate(kernels):
            # contract axis i of r with W[x] rows, put result back on axis i
            r = np.moveaxis(np.tensordot(r, W[x], axes=([i], [0])), -1, i)
        out[x] = r
    z = out.sum()
    T = config.regime_model.transition
    nxt = np.tensordot(T, out, axes=([0], [0]))
    return nxt, float(z)


def _propagate_factored(config: ScenarioConfig, belief: FactoredBelief,
                        prescription: Prescription, obs: Sequence) -> tuple[FactoredBelief, float]:
    tg = _targets(config, belief, prescription)
    w = belief.regime_probs.copy()
    u = np.empty_like(belief.inv_cond)
    for i, o in enumerate(obs):
        W = retailer_kernels(config, tg, i, o)
        ui = np.einsum("xi,xin->xn", belief.inv_cond[i], W)
        m = ui.sum(axis=1)
        w = w * m
        with np.errstate(invalid="ignore", divide="ignore"):
            u[i] = np.where(m[:, None] > 0, ui / m[:, None], belief.inv_cond[i])
    z = float(w.sum())
    if z <= 0:
        return belief, 0.0
    T = config.regime_model.transition
    mix = T * w[:, None]  # mix[x, x'] = T[x, x'] w_x
    b_next = mix.sum(axis=0)
    q_next = np.einsum("xy,ixn->iyn", mix, u)
    with np.errstate(invalid="ignore", divide="ignore"):
        q_next = np.where(b_next[None, :, None] > 0, q_next / b_next[None, :, None],
                          np.einsum("xy,ixn->iyn", T / T.sum(axis=0, keepdims=True), u))
    q_next /= q_next.sum(axis=2, keepdims=True)
    return FactoredBelief(b_next / b_next.sum(), q_next), z


def propagate(config: ScenarioConfig, belief: Belief, prescription: Prescription,
              obs: Sequence) -> tuple[Belief, float]:
    """Next-period belief and the likelihood of ``obs`` (one item per retailer)."""
    _validate_obs(config, obs)
    if isinstance(belief, FactoredBelief):
        nb, z = _propagate_factored(config, belief, prescription, obs)
    else:
        probs, z = _propagate_flat(config, belief, prescription, obs)
        nb = None if z <= 0 else belief.with_probs(probs.ravel() / z)
    if z <= 0:
        raise InconsistentObservation(f"observation {list(obs)} has zero probability")
    return nb, z


# -- public operators ----------------------------------------------------------

def predict_no_comm(config: ScenarioConfig, belief: Belief, action: CoordinatorAction) -> Belief:
    if action.comm != 0:
        raise ValueError("action communicates; use update_full_comm")
    return propagate(config, belief, action.prescription, [SILENT] * config.n_retailers)[0]


def _reports(config: ScenarioConfig, obs) -> list[Report]:
    out = [o if isinstance(o, Report) else Report(int(o[0]), int(o[1])) for o in obs]
    if len(out) != config.n_retailers:
        raise ValueError(f"observation has {len(out)} reports, expected {config.n_retailers}")
    return out


def update_full_comm(config: ScenarioConfig, belief: Belief, action: CoordinatorAction,
                     obs) -> Belief:
    """Condition on every retailer's (demand, post-demand inventory) report."""
    if action.comm != 1:
        raise ValueError("silent action; use predict_no_comm")
    return propagate(config, belief, action.prescription, _reports(config, obs))[0]


def obs_likelihood(config: ScenarioConfig, belief: Belief, action: CoordinatorAction,
                   obs=None) -> float:
    if action.comm == 0:
        if obs is not None:
            raise ValueError("a silent action has only the null observation")
        return 1.0
    if obs is None:
        raise ValueError("a communicating action needs a report per retailer")
    try:
        return propagate(config, belief, action.prescription, _reports(config, obs))[1]
    except InconsistentObservation:
        return 0.0


def update_censored(config: ScenarioConfig, belief: Belief, prescription: Prescription,
                    silent: Sequence[int], threshold: int, reporters: dict) -> Belief:
    """Silent retailers saw demand <= threshold; ``reporters`` maps retailer -> (d, I')."""
    silent = set(int(i) for i in silent)
    if silent & set(reporters) or len(silent) + len(reporters) != config.n_retailers:
        raise ValueError("silent and reporting retailers must partition the retailers")
    if threshold < 0 and silent:
        raise InconsistentObservation(f"silence below threshold {threshold} is impossible")
    obs = []
    for i in range(config.n_retailers):
        if i in silent:
            obs.append(Censored(threshold))
        else:
            r = reporters[i]
            obs.append(r if isinstance(r, Report) else Report(int(r[0]), int(r[1])))
    return propagate(config, belief, prescription, obs)[0]


def total_variation(p: np.ndarray, q: np.ndarray) -> float:
    return 0.5 * float(np.abs(np.asarray(p) - np.asarray(q)).sum())
