"""Coordinator policies: the solved dynamic policy and four static baselines."""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .actions import CoordinatorAction, Prescription, newsvendor_level
from .belief import Belief, FlatBelief, flatten
from .scenario import CostParams, DemandModel, ScenarioConfig


class PolicyKind(str, Enum):
    OPTIMAL = "optimal"
    ALWAYS = "always"
    NEVER = "never"
    PERIODIC = "periodic"
    THRESHOLD = "threshold"


class PolicyConfigError(ValueError):
    pass


def myopic_level(regime_probs, demand_model: DemandModel, costs: CostParams, retailer: int = 0) -> int:
    """Newsvendor level of the demand mixture weighted by ``regime_probs``."""
    pmf = np.asarray(regime_probs, dtype=float) @ demand_model.pmf[:, retailer, :]
    return newsvendor_level(pmf, costs.critical_ratio)


def myopic_targets(regime_probs, demand_model: DemandModel, costs: CostParams,
                   s_max: int | None = None) -> Prescription:
    """One newsvendor level per retailer, used whichever regime the agent selects."""
    n_x, n_r, _ = demand_model.pmf.shape
    rows = []
    for i in range(n_r):
        s = myopic_level(regime_probs, demand_model, costs, i)
        if s_max is not None:
            s = min(s, s_max)
        rows.append((s,) * n_x)
    return Prescription(tuple(rows))


def agent_trigger(threshold: int, demand: int) -> int:
    """1 iff the local demand strictly exceeds the threshold."""
    return int(demand > threshold)


class Policy:
    kind: PolicyKind
    agent_triggered = False
    threshold: int | None = None

    def decide(self, belief: Belief, t: int) -> CoordinatorAction:  # pragma: no cover
        raise NotImplementedError

    def label(self) -> str:
        return self.kind.value


class _Myopic:
    def __init__(self, config: ScenarioConfig):
        self.config = config

    def myopic(self, belief: Belief) -> Prescription:
        # the order placed now covers next period's demand
        nxt = belief.regime_marginal() @ self.config.regime_model.transition
        return myopic_targets(nxt, self.config.demand_model, self.config.costs, self.config.s_max)


class NeverShare(Policy, _Myopic):
    kind = PolicyKind.NEVER

    def decide(self, belief, t):
        return CoordinatorAction(0, self.myopic(belief))


class SolvedPolicy(Policy):
    """Alpha-vector policy loaded from a solver artifact."""

    kind = PolicyKind.OPTIMAL

    def __init__(self, config: ScenarioConfig, artifact, mode: str = "alpha", model=None):
        from .solver.policy import ALPHA, extract_policy
        if artifact is None:
            raise PolicyConfigError("this policy needs a solved policy artifact")
        artifact.check(config)
        self.config = config
        self.artifact = artifact
        self.mode = mode
        self._extract = extract_policy
        self._alpha_mode = mode == ALPHA
        self._model = model
        if not self._alpha_mode and model is None:
            from .solver.model import CoordinatorModel
            self._model = CoordinatorModel(config, artifact.actions,
                                           artifact.meta.get("n_bins", 8))

    def decide(self, belief, t):
        b = belief.probs if isinstance(belief, FlatBelief) else flatten(belief).probs
        vf = self.artifact.value_function
        if self._alpha_mode:
            a = int(vf.action_ids[vf.best(b)])
        else:
            a = self._extract(self._model, vf, b, self.mode)
        return self.artifact.actions[a]


class OptimalDynamic(SolvedPolicy):
    kind = PolicyKind.OPTIMAL


class AlwaysShare(Policy, _Myopic):
    """Share every period. Targets from a share-always solve, else the myopic rule."""

    kind = PolicyKind.ALWAYS

    def __init__(self, config: ScenarioConfig, artifact=None, mode: str = "alpha"):
        _Myopic.__init__(self, config)
        self.solved = None
        if artifact is not None:
            if any(a.comm != 1 for a in artifact.actions):
                raise PolicyConfigError("share-always artifact must contain only sharing actions")
            self.solved = SolvedPolicy(config, artifact, mode)

    def decide(self, belief, t):
        if self.solved is not None:
            return self.solved.decide(belief, t)
        return CoordinatorAction(1, self.myopic(belief))


class PeriodicShare(Policy, _Myopic):
    kind = PolicyKind.PERIODIC

    def __init__(self, config: ScenarioConfig, period: int, always: AlwaysShare | None = None):
        if period < 1:
            raise PolicyConfigError("period K must be >= 1")
        _Myopic.__init__(self, config)
        self.period = period
        self.always = always or AlwaysShare(config)

    def decide(self, belief, t):
        if t % self.period == 0:
            return self.always.decide(belief, t)
        return CoordinatorAction(0, self.myopic(belief))

    def label(self) -> str:
        return f"periodic({self.period})"


class Threshold(Policy, _Myopic):
    """Agents report when their own demand exceeds ``threshold``; targets myopic."""

    kind = PolicyKind.THRESHOLD
    agent_triggered = True

    def __init__(self, config: ScenarioConfig, threshold: int):
        if not 0 <= threshold <= config.d_max:
            raise PolicyConfigError(f"threshold must lie in 0..{config.d_max}")
        _Myopic.__init__(self, config)
        self.threshold = int(threshold)

    def decide(self, belief, t):
        return CoordinatorAction(0, self.myopic(belief))

    def label(self) -> str:
        return f"threshold({self.threshold})"


def decide(policy: Policy, belief: Belief, t: int) -> CoordinatorAction:
    return policy.decide(belief, t)


@dataclass(frozen=True)
class PolicySpec:
    kind: PolicyKind
    period: int | None = None
    threshold: int | None = None

    @classmethod
    def parse(cls, text: str) -> "PolicySpec":
        """``never``, ``always``, ``optimal``, ``periodic:3``, ``threshold:10``."""
        name, _, arg = text.strip().lower().partition(":")
        kind = PolicyKind(name)
        if kind is PolicyKind.PERIODIC:
            return cls(kind, period=int(arg or 3))
        if kind is PolicyKind.THRESHOLD:
            return cls(kind, threshold=int(arg or 10))
        return cls(kind)


def build_policy(spec: PolicySpec, config: ScenarioConfig, optimal_artifact=None,
                 always_artifact=None, mode: str = "alpha") -> Policy:
    if spec.kind is PolicyKind.NEVER:
        return NeverShare(config)
    if spec.kind is PolicyKind.THRESHOLD:
        return Threshold(config, spec.threshold)
    if spec.kind is PolicyKind.OPTIMAL:
        if optimal_artifact is None:
            raise PolicyConfigError("optimal policy requires a solved policy artifact")
        return OptimalDynamic(config, optimal_artifact, mode)
    always = AlwaysShare(config, always_artifact, mode)
    if spec.kind is PolicyKind.ALWAYS:
        return always
    return PeriodicShare(config, spec.period, always)
