"""Problem instances: regime chain, demand tables, costs and bounds.

All probability tables live here. A :class:`ScenarioConfig` is immutable once
built; arrays are flagged read-only so instances can be shared freely.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import yaml
from scipy import stats

SCHEMA_VERSION = 1
DEFAULT_QUANTILE = 0.9999
PROB_TOL = 1e-12


class ScenarioError(ValueError):
    """Raised when a scenario cannot be built or loaded."""


def _frozen(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class RegimeModel:
    labels: tuple[str, ...]
    transition: np.ndarray
    initial: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(self.labels))
        object.__setattr__(self, "transition", _frozen(self.transition))
        object.__setattr__(self, "initial", _frozen(self.initial))

    @property
    def n_regimes(self) -> int:
        return len(self.labels)

    def stationary(self) -> np.ndarray:
        """Stationary distribution (left eigenvector for eigenvalue 1)."""
        w, v = np.linalg.eig(self.transition.T)
        k = int(np.argmin(np.abs(w - 1.0)))
        pi = np.real(v[:, k])
        pi = np.abs(pi) / np.abs(pi).sum()
        return pi


@dataclass(frozen=True)
class DemandModel:
    """pmf[x, i, d] = P(D^i = d | X = x) on the common support 0..d_max."""

    pmf: np.ndarray

    def __post_init__(self):
        pmf = np.asarray(self.pmf, dtype=float)
        if pmf.ndim != 3:
            raise ScenarioError("demand pmf must have shape (regimes, retailers, d_max + 1)")
        object.__setattr__(self, "pmf", _frozen(pmf))

    @property
    def d_max(self) -> int:
        return self.pmf.shape[2] - 1

    def cdf(self) -> np.ndarray:
        return np.cumsum(self.pmf, axis=2)

    def means(self) -> np.ndarray:
        """Mean demand per (regime, retailer)."""
        return self.pmf @ np.arange(self.d_max + 1)


@dataclass(frozen=True)
class CostParams:
    holding: float
    penalty: float
    comm: float
    discount: float

    @property
    def critical_ratio(self) -> float:
        return self.penalty / (self.penalty + self.holding)


@dataclass(frozen=True)
class ScenarioConfig:
    n_retailers: int
    regime_model: RegimeModel
    demand_model: DemandModel
    costs: CostParams
    s_max: int
    u_max: int
    initial_inventories: tuple[int, ...]
    name: str = field(default="scenario", compare=False)

    def __post_init__(self):
        object.__setattr__(self, "initial_inventories",
                           tuple(int(v) for v in self.initial_inventories))

    @property
    def n_regimes(self) -> int:
        return self.regime_model.n_regimes

    @property
    def d_max(self) -> int:
        return self.demand_model.d_max

    @property
    def n_states(self) -> int:
        return self.n_regimes * (self.s_max + 1) ** self.n_retailers

    @property
    def belief_shape(self) -> tuple[int, ...]:
        return (self.n_regimes,) + (self.s_max + 1,) * self.n_retailers

    def with_costs(self, **changes) -> "ScenarioConfig":
        """Copy with some cost fields replaced (e.g. ``comm=0.0``)."""
        from dataclasses import replace
        return replace(self, costs=replace(self.costs, **changes))

    def with_retailers(self, n: int, s_max: int | None = None) -> "ScenarioConfig":
        """Copy with ``n`` homogeneous retailers cloned from retailer 0."""
        from dataclasses import replace
        s_max = self.s_max if s_max is None else s_max
        pmf = np.repeat(self.demand_model.pmf[:, :1, :], n, axis=1)
        inv = min(self.initial_inventories[0], s_max)
        return replace(self, n_retailers=n, s_max=s_max, u_max=max(self.u_max, s_max),
                       demand_model=DemandModel(pmf), initial_inventories=(inv,) * n)


def truncated_poisson(mean: float, quantile: float = DEFAULT_QUANTILE,
                      d_max: int | None = None) -> np.ndarray:
    """Poisson(mean) pmf cut at the ``quantile`` point and renormalized.

    When ``d_max`` is given the support is 0..d_max instead (used to put several
    regimes on a common support); it must be at least the quantile point.
    """
    if not mean > 0:
        raise ScenarioError(f"Poisson mean must be positive, got {mean}")
    if not 0.0 < quantile < 1.0:
        raise ScenarioError(f"quantile must lie in (0, 1), got {quantile}")
    cut = int(stats.poisson.ppf(quantile, mean))
    if d_max is None:
        d_max = cut
    elif d_max < cut:
        raise ScenarioError(f"d_max={d_max} is below the {quantile} quantile ({cut})")
    pmf = stats.poisson.pmf(np.arange(d_max + 1), mean)
    return pmf / pmf.sum()


def build_two_regime_scenario(rho: float, ell: float, h_mean: float, costs: CostParams,
                              n_retailers: int, s_max: int, *,
                              quantile: float = DEFAULT_QUANTILE,
                              u_max: int | None = None,
                              initial_inventory: int | None = None,
                              name: str = "two-regime") -> ScenarioConfig:
    """Symmetric Low/High chain with Poisson demand, identical retailers."""
    if not ell < h_mean:
        raise ScenarioError(f"regimes must be ordered: ell={ell} must be < h_mean={h_mean}")
    if not 0.0 <= rho <= 1.0:
        raise ScenarioError(f"rho must lie in [0, 1], got {rho}")
    transition = np.array([[rho, 1.0 - rho], [1.0 - rho, rho]])
    initial = np.array([0.5, 0.5])
    d_max = max(int(stats.poisson.ppf(quantile, m)) for m in (ell, h_mean))
    table = np.stack([truncated_poisson(m, quantile, d_max) for m in (ell, h_mean)])
    pmf = np.repeat(table[:, None, :], n_retailers, axis=1)
    if initial_inventory is None:
        initial_inventory = min(s_max, int(round(0.5 * (ell + h_mean))))
    return ScenarioConfig(
        n_retailers=n_retailers,
        regime_model=RegimeModel(("Low", "High"), transition, initial),
        demand_model=DemandModel(pmf),
        costs=costs,
        s_max=s_max,
        u_max=s_max if u_max is None else u_max,
        initial_inventories=(initial_inventory,) * n_retailers,
        name=name,
    )


def base_case(comm: float = 2.0, rho: float = 0.8, n_retailers: int = 2,
              s_max: int = 30) -> ScenarioConfig:
    """The two-retailer Low/High experiment (ell=5, h=15, h=1, p=5, beta=0.95)."""
    costs = CostParams(holding=1.0, penalty=5.0, comm=comm, discount=0.95)
    return build_two_regime_scenario(rho, 5.0, 15.0, costs, n_retailers, s_max, name="base")


def tiny_case(comm: float = 2.0) -> ScenarioConfig:
    """Single retailer, S_max=5, beta=0.9: small enough for the exact oracle."""
    costs = CostParams(holding=1.0, penalty=5.0, comm=comm, discount=0.9)
    return build_two_regime_scenario(0.8, 5.0, 15.0, costs, 1, 5, name="tiny")


def validate(config: ScenarioConfig) -> list[str]:
    """Every invariant violation found in ``config``; empty when well formed."""
    out: list[str] = []
    rm, dm, c = config.regime_model, config.demand_model, config.costs
    n_x = len(rm.labels)
    if config.n_retailers < 1:
        out.append(f"n_retailers must be >= 1, got {config.n_retailers}")
    if rm.transition.shape != (n_x, n_x):
        out.append(f"transition shape {rm.transition.shape} != ({n_x}, {n_x})")
    else:
        for x, row in enumerate(rm.transition):
            if np.any(row < 0) or np.any(row > 1):
                out.append(f"transition row {x} ({rm.labels[x]}) has entries outside [0, 1]")
            if abs(row.sum() - 1.0) > PROB_TOL:
                out.append(f"transition row {x} ({rm.labels[x]}) sums to {row.sum():.12g}, not 1")
    if rm.initial.shape != (n_x,):
        out.append(f"initial regime vector has shape {rm.initial.shape}, expected ({n_x},)")
    elif np.any(rm.initial < 0) or abs(rm.initial.sum() - 1.0) > PROB_TOL:
        out.append(f"initial regime vector sums to {rm.initial.sum():.12g} or has negatives")
    if dm.pmf.shape[:2] != (n_x, config.n_retailers):
        out.append(f"demand pmf shape {dm.pmf.shape[:2]} != ({n_x}, {config.n_retailers})")
    else:
        for x in range(n_x):
            for i in range(config.n_retailers):
                p = dm.pmf[x, i]
                if np.any(p < 0):
                    out.append(f"demand pmf (regime {x}, retailer {i}) has negative entries")
                if abs(p.sum() - 1.0) > PROB_TOL:
                    out.append(f"demand pmf (regime {x}, retailer {i}) sums to {p.sum():.12g}")
    for name in ("holding", "penalty", "comm"):
        if getattr(c, name) < 0:
            out.append(f"{name} cost must be >= 0, got {getattr(c, name)}")
    if not 0.0 < c.discount < 1.0:
        out.append(f"discount must lie in (0, 1), got {c.discount}")
    if config.s_max < 0:
        out.append(f"s_max must be >= 0, got {config.s_max}")
    if config.u_max < config.s_max:
        out.append(f"u_max={config.u_max} < s_max={config.s_max}: order-up-to targets unreachable")
    if len(config.initial_inventories) != config.n_retailers:
        out.append("initial_inventories length does not match n_retailers")
    for i, inv in enumerate(config.initial_inventories):
        if not 0 <= inv <= config.s_max:
            out.append(f"initial inventory of retailer {i} is {inv}, outside [0, {config.s_max}]")
    return out


def check(config: ScenarioConfig) -> ScenarioConfig:
    problems = validate(config)
    if problems:
        raise ScenarioError("invalid scenario:\n  " + "\n  ".join(problems))
    return config


# -- config files ---------------------------------------------------------------

def to_dict(config: ScenarioConfig) -> dict:
    rm, c = config.regime_model, config.costs
    return {
        "schema_version": SCHEMA_VERSION,
        "name": config.name,
        "retailers": config.n_retailers,
        "regimes": {
            "labels": list(rm.labels),
            "transition": rm.transition.tolist(),
            "initial": rm.initial.tolist(),
        },
        "demand": {"kind": "table", "pmf": config.demand_model.pmf.tolist()},
        "costs": {"holding": c.holding, "penalty": c.penalty, "comm": c.comm,
                  "discount": c.discount},
        "bounds": {"s_max": config.s_max, "u_max": config.u_max,
                   "initial_inventories": list(config.initial_inventories)},
    }


def from_dict(doc: dict) -> ScenarioConfig:
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ScenarioError(f"unsupported scenario schema_version {version!r} "
                            f"(expected {SCHEMA_VERSION})")
    try:
        n = int(doc["retailers"])
        reg = doc["regimes"]
        labels = tuple(str(s) for s in reg["labels"])
        transition = np.asarray(reg["transition"], dtype=float)
        initial = np.asarray(reg.get("initial") or RegimeModel(labels, transition,
                                                               np.ones(len(labels))).stationary())
        dem = doc["demand"]
        kind = dem.get("kind", "poisson")
        if kind == "poisson":
            q = float(dem.get("quantile", DEFAULT_QUANTILE))
            means = np.asarray(dem["means"], dtype=float)
            if means.ndim == 1:
                means = np.repeat(means[:, None], n, axis=1)
            d_max = max(int(stats.poisson.ppf(q, m)) for m in means.ravel())
            pmf = np.array([[truncated_poisson(m, q, d_max) for m in row] for row in means])
        elif kind == "table":
            pmf = np.asarray(dem["pmf"], dtype=float)
        else:
            raise ScenarioError(f"unknown demand kind {kind!r}")
        c = doc["costs"]
        costs = CostParams(float(c["holding"]), float(c["penalty"]), float(c["comm"]),
                           float(c["discount"]))
        b = doc["bounds"]
        s_max = int(b["s_max"])
        inv = b.get("initial_inventories", [min(s_max, 10)] * n)
        if isinstance(inv, int):
            inv = [inv] * n
        config = ScenarioConfig(
            n_retailers=n,
            regime_model=RegimeModel(labels, transition, initial),
            demand_model=DemandModel(pmf),
            costs=costs,
            s_max=s_max,
            u_max=int(b.get("u_max", s_max)),
            initial_inventories=tuple(inv),
            name=str(doc.get("name", "scenario")),
        )
    except (KeyError, TypeError) as exc:
        raise ScenarioError(f"malformed scenario document: missing or bad field {exc}") from exc
    return check(config)


def load(path: str | Path) -> ScenarioConfig:
    path = Path(path)
    if not path.is_file():
        raise ScenarioError(f"scenario file not found: {path}")
    with path.open() as fh:
        doc = yaml.safe_load(fh)
    if not isinstance(doc, dict):
        raise ScenarioError(f"{path}: expected a mapping at top level")
    return from_dict(doc)


def save(config: ScenarioConfig, path: str | Path) -> None:
    with Path(path).open("w") as fh:
        yaml.safe_dump(to_dict(config), fh, sort_keys=False)


def stationary_regime(config: ScenarioConfig) -> np.ndarray:
    return config.regime_model.stationary()


def mixture_pmf(config: ScenarioConfig, regime_probs: Sequence[float], retailer: int) -> np.ndarray:
    return np.asarray(regime_probs, dtype=float) @ config.demand_model.pmf[:, retailer, :]
