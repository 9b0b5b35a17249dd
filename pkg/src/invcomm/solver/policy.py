"""Policy extraction and the policy artifact file.

Artifact layout (UTF-8 text, one record per line):

    invcomm-policy <format version>
    <JSON metadata object, keys sorted>
    actions <K> <N> <X>
    <comm> <targets row-major: retailer 0 regimes..., retailer 1 regimes...>   (K lines)
    alphas <M> <|S|>
    <action id> <value_0> ... <value_{|S|-1}>                                    (M lines)

Floats are written with ``repr`` so a reload is exact and reruns are byte-identical.
The metadata carries the scenario fingerprint (regimes, retailers, S_max,
D_max), the demand bin count, and the bounds at the initial belief.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..actions import CoordinatorAction, Prescription
from ..scenario import ScenarioConfig
from .bounds import ValueFunction
from .model import CoordinatorModel

ARTIFACT_VERSION = 1
LOOKAHEAD = "lookahead"
ALPHA = "alpha"


def extract_policy(model: CoordinatorModel, vf: ValueFunction, b: np.ndarray,
                   mode: str = LOOKAHEAD, allowed: np.ndarray | None = None) -> int:
    """Action id for belief ``b``.

    ``lookahead`` minimises C(b,a) + beta E[V(next)] against the alpha
    envelope (ties to the smallest id); ``alpha`` returns the action of the
    minimising alpha vector, which is much cheaper.
    """
    if mode == ALPHA:
        if allowed is None:
            return int(vf.action_ids[vf.best(b)])
        vals = vf.alphas @ b
        vals[~allowed[vf.action_ids]] = np.inf
        return int(vf.action_ids[int(np.argmin(vals))])
    if mode != LOOKAHEAD:
        raise ValueError(f"unknown extraction mode {mode!r}")
    return model.backup(b, vf.alphas, allowed, build_alpha=False).action


def fingerprint(config: ScenarioConfig) -> dict:
    return {"regimes": config.n_regimes, "retailers": config.n_retailers,
            "s_max": config.s_max, "d_max": config.d_max}


class ArtifactMismatch(ValueError):
    pass


@dataclass
class PolicyArtifact:
    actions: list[CoordinatorAction]
    value_function: ValueFunction
    meta: dict = field(default_factory=dict)

    def check(self, config: ScenarioConfig) -> None:
        want = fingerprint(config)
        got = {k: self.meta.get("scenario", {}).get(k) for k in want}
        if got != want:
            raise ArtifactMismatch(f"policy was solved for {got}, scenario is {want}")

    def dumps(self) -> str:
        lines = [f"invcomm-policy {ARTIFACT_VERSION}", json.dumps(self.meta, sort_keys=True)]
        n_r = len(self.actions[0].prescription.targets)
        n_x = len(self.actions[0].prescription.targets[0])
        lines.append(f"actions {len(self.actions)} {n_r} {n_x}")
        for a in self.actions:
            lines.append(" ".join(str(v) for v in a.key()))
        A = self.value_function.alphas
        lines.append(f"alphas {A.shape[0]} {A.shape[1]}")
        for aid, row in zip(self.value_function.action_ids, A):
            lines.append(f"{int(aid)} " + " ".join(repr(float(v)) for v in row))
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> "PolicyArtifact":
        lines = text.splitlines()
        head = lines[0].split()
        if len(head) != 2 or head[0] != "invcomm-policy":
            raise ValueError("not a policy artifact")
        if int(head[1]) != ARTIFACT_VERSION:
            raise ValueError(f"unsupported policy artifact version {head[1]}")
        meta = json.loads(lines[1])
        _, k, n_r, n_x = lines[2].split()
        k, n_r, n_x = int(k), int(n_r), int(n_x)
        acts = []
        for ln in lines[3:3 + k]:
            v = [int(t) for t in ln.split()]
            tg = np.array(v[1:]).reshape(n_r, n_x)
            acts.append(CoordinatorAction(v[0], Prescription(tuple(map(tuple, tg)))))
        _, m, s = lines[3 + k].split()
        rows = [ln.split() for ln in lines[4 + k:4 + k + int(m)]]
        ids = np.array([int(r[0]) for r in rows], dtype=np.int64)
        alphas = np.array([[float(t) for t in r[1:]] for r in rows]).reshape(int(m), int(s))
        return cls(acts, ValueFunction(alphas, ids), meta)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps())

    @classmethod
    def load(cls, path: str | Path) -> "PolicyArtifact":
        p = Path(path)
        if not p.exists():
            raise FileNotFoundError(f"policy artifact not found: {p}")
        return cls.loads(p.read_text())
