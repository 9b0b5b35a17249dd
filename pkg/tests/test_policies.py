import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from invcomm.belief import initial_belief, initial_factored, point_inventories
from invcomm.policies import (AlwaysShare, NeverShare, OptimalDynamic, PeriodicShare,
                              PolicyConfigError, PolicyKind, PolicySpec, Threshold, agent_trigger,
                              build_policy, myopic_targets)
from invcomm.scenario import CostParams, build_two_regime_scenario
from invcomm.solver import solve_policy


@pytest.fixture(scope="module")
def tiny_artifact(tiny):
    return solve_policy(tiny, method="sarsop", time_budget=10)


def test_myopic_level_low_regime(base):
    p = myopic_targets([1.0, 0.0], base.demand_model, base.costs)
    assert p.targets == ((7, 7), (7, 7))


def test_never_share_uses_next_period_regime():
    cfg = build_two_regime_scenario(1.0, 5, 15, CostParams(1, 5, 2, 0.95), 1, 30)
    b = point_inventories(cfg, [1.0, 0.0], [10])
    act = NeverShare(cfg).decide(b, 0)
    assert act.comm == 0
    assert act.prescription.targets == ((7, 7),)


def test_periodic_pattern(base):
    pol = PeriodicShare(base, 3)
    b = initial_belief(base)
    assert [pol.decide(b, t).comm for t in range(7)] == [1, 0, 0, 1, 0, 0, 1]
    assert pol.label() == "periodic(3)"


def test_always_and_never_bits(base):
    b = initial_belief(base)
    fb = initial_factored(base)
    for t in range(5):
        assert AlwaysShare(base).decide(b, t).comm == 1
        assert NeverShare(base).decide(b, t).comm == 0
        assert AlwaysShare(base).decide(fb, t).comm == 1


def test_threshold_agent_rule():
    assert agent_trigger(10, 11) == 1
    assert agent_trigger(10, 10) == 0
    assert agent_trigger(0, 0) == 0
    assert agent_trigger(0, 1) == 1


def test_threshold_policy_is_silent_coordinator(base):
    pol = Threshold(base, 10)
    assert pol.agent_triggered
    assert pol.decide(initial_belief(base), 0).comm == 0
    assert pol.label() == "threshold(10)"


def test_policy_errors(base):
    with pytest.raises(PolicyConfigError):
        build_policy(PolicySpec(PolicyKind.OPTIMAL), base)
    with pytest.raises(PolicyConfigError):
        OptimalDynamic(base, None)
    with pytest.raises(PolicyConfigError):
        PeriodicShare(base, 0)
    with pytest.raises(PolicyConfigError):
        Threshold(base, base.d_max + 1)
    with pytest.raises(PolicyConfigError):
        Threshold(base, -1)


def test_optimal_rejects_wrong_scenario(base, tiny_artifact):
    from invcomm.solver import ArtifactMismatch
    with pytest.raises(ArtifactMismatch):
        OptimalDynamic(base, tiny_artifact)


def test_always_rejects_mixed_artifact(tiny, tiny_artifact):
    with pytest.raises(PolicyConfigError):
        AlwaysShare(tiny, tiny_artifact)


def test_spec_parse():
    assert PolicySpec.parse("periodic:4") == PolicySpec(PolicyKind.PERIODIC, period=4)
    assert PolicySpec.parse("Threshold:12").threshold == 12
    assert PolicySpec.parse("never").kind is PolicyKind.NEVER
    with pytest.raises(ValueError):
        PolicySpec.parse("sometimes")


def test_build_policy_kinds(tiny, tiny_artifact):
    for text, cls in [("never", NeverShare), ("always", AlwaysShare),
                      ("periodic:2", PeriodicShare), ("threshold:3", Threshold)]:
        assert isinstance(build_policy(PolicySpec.parse(text), tiny), cls)
    opt = build_policy(PolicySpec.parse("optimal"), tiny, tiny_artifact)
    act = opt.decide(initial_belief(tiny), 0)
    assert act in tiny_artifact.actions


def test_solved_modes_agree_on_start(tiny, tiny_artifact):
    b = initial_belief(tiny)
    a = OptimalDynamic(tiny, tiny_artifact, mode="alpha").decide(b, 0)
    c = OptimalDynamic(tiny, tiny_artifact, mode="lookahead").decide(b, 0)
    assert a.prescription == c.prescription


@given(st.floats(0, 1), st.integers(0, 30))
def test_targets_within_range(p, inv):
    from invcomm.scenario import base_case
    cfg = base_case()
    b = point_inventories(cfg, [p, 1 - p], [inv, 30 - inv])
    for pol in (NeverShare(cfg), AlwaysShare(cfg), Threshold(cfg, 10)):
        tg = np.array(pol.decide(b, 0).prescription.targets)
        assert (tg >= 0).all() and (tg <= cfg.s_max).all()
