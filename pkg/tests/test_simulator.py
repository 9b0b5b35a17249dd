import numpy as np
import pytest

from invcomm.policies import AlwaysShare, NeverShare, PeriodicShare, Threshold
from invcomm.scenario import CostParams, DemandModel, RegimeModel, ScenarioConfig
from invcomm.simulator import MESSAGE, ROUND, run_episode, run_replications

COSTS = CostParams(1.0, 5.0, 2.0, 0.95)


def fixed_demand(value=0, n=2, s_max=30, inv=10):
    pmf = np.zeros((1, n, value + 2))
    pmf[0, :, value] = 1.0
    rm = RegimeModel(("only",), [[1.0]], [1.0])
    return ScenarioConfig(n, rm, DemandModel(pmf), COSTS, s_max, s_max, (inv,) * n)


def same_trace(a, b):
    for name in ("regimes", "inventories", "demands", "sold", "post", "orders", "holding",
                 "shortage", "communication"):
        np.testing.assert_array_equal(getattr(a, name), getattr(b, name), err_msg=name)


@pytest.mark.parametrize("policy,accounting,comm", [
    (NeverShare, ROUND, 0.0), (AlwaysShare, ROUND, 2.0), (AlwaysShare, MESSAGE, 4.0)])
def test_horizon_one_zero_demand(policy, accounting, comm):
    cfg = fixed_demand(0)
    tr = run_episode(cfg, policy(cfg), 1, np.random.default_rng(0), accounting)
    assert tr.holding[0] == 20.0
    assert tr.shortage[0] == 0.0
    assert tr.communication[0] == comm
    assert tr.total[0] == 20.0 + comm
    assert tr.inventories[0].tolist() == [10, 10]


def test_cost_decomposition_and_fill(base):
    rep, traces = run_replications(base, AlwaysShare(base), 200, 3, 11, return_traces=True)
    assert rep.avg_total == pytest.approx(rep.avg_holding + rep.avg_stockout + rep.avg_comm,
                                          abs=1e-9)
    sold = sum(int(t.sold.sum()) for t in traces)
    demand = sum(int(t.demands.sum()) for t in traces)
    assert rep.fill_rate == pytest.approx(sold / demand, abs=1e-12)
    for t in traces:
        np.testing.assert_allclose(t.total, t.holding + t.shortage + t.communication, atol=1e-9)
        np.testing.assert_array_equal(t.shortage, 5.0 * (t.demands - t.sold).sum(axis=1))
        np.testing.assert_array_equal(t.holding, 1.0 * t.post.sum(axis=1))
        np.testing.assert_array_equal(t.sold, np.minimum(t.demands, t.inventories))
        assert (t.inventories >= 0).all() and (t.inventories <= base.s_max).all()


def test_bit_identical_reruns(base):
    a = run_episode(base, Threshold(base, 10), 150, np.random.default_rng(5))
    b = run_episode(base, Threshold(base, 10), 150, np.random.default_rng(5))
    assert a.to_csv() == b.to_csv()
    r1 = run_replications(base, NeverShare(base), 100, 4, 3).row()
    r2 = run_replications(base, NeverShare(base), 100, 4, 3).row()
    assert r1 == r2


def test_common_demand_paths(base):
    a = run_episode(base, NeverShare(base), 120, np.random.default_rng(9))
    b = run_episode(base, AlwaysShare(base), 120, np.random.default_rng(9))
    np.testing.assert_array_equal(a.demands, b.demands)
    np.testing.assert_array_equal(a.regimes, b.regimes)


def test_threshold_at_dmax_matches_never(base):
    a = run_episode(base, Threshold(base, base.d_max), 200, np.random.default_rng(4))
    b = run_episode(base, NeverShare(base), 200, np.random.default_rng(4))
    same_trace(a, b)
    assert a.comm.sum() == 0
    np.testing.assert_allclose(a.regime_beliefs, b.regime_beliefs, atol=1e-9)


def test_periodic_one_matches_always(base):
    a = run_episode(base, PeriodicShare(base, 1), 200, np.random.default_rng(4))
    b = run_episode(base, AlwaysShare(base), 200, np.random.default_rng(4))
    same_trace(a, b)
    np.testing.assert_array_equal(a.comm, b.comm)


def test_always_share_knows_inventories(base):
    tr = run_episode(base, AlwaysShare(base), 60, np.random.default_rng(2), record_beliefs=True)
    for t, b in enumerate(tr.beliefs):
        for i in range(base.n_retailers):
            m = b.inventory_marginal(i)
            assert m[tr.inventories[t, i]] == pytest.approx(1.0, abs=1e-12)


def test_always_share_regime_belief_is_hmm_filter(base):
    tr = run_episode(base, AlwaysShare(base), 300, np.random.default_rng(8))
    pmf = base.demand_model.pmf
    T = base.regime_model.transition
    alpha = np.array(base.regime_model.initial, dtype=float)
    for t in range(tr.horizon):
        np.testing.assert_allclose(tr.regime_beliefs[t], alpha, atol=1e-9)
        lik = np.prod([pmf[:, i, tr.demands[t, i]] for i in range(base.n_retailers)], axis=0)
        alpha = (alpha * lik) @ T
        alpha /= alpha.sum()


def test_never_share_costs_no_communication(base):
    rep = run_replications(base, NeverShare(base), 300, 3, 1)
    assert rep.avg_comm == 0.0
    assert rep.comm_freq == 0.0


def test_threshold_charged_per_message(base):
    tr = run_episode(base, Threshold(base, 10), 300, np.random.default_rng(1))
    np.testing.assert_array_equal(tr.comm, (tr.demands > 10).astype(int))
    np.testing.assert_array_equal(tr.communication, 2.0 * tr.comm.sum(axis=1))


def test_deterministic_scenario_zero_spread():
    cfg = fixed_demand(3, n=2, s_max=8, inv=5)
    rep = run_replications(cfg, NeverShare(cfg), 50, 4, 0)
    for k, v in rep.ci.items():
        assert v == 0.0, k
    assert rep.fill_rate == 1.0


def test_trace_csv_header(base):
    tr = run_episode(base, NeverShare(base), 3, np.random.default_rng(0))
    lines = tr.to_csv().splitlines()
    assert lines[0] == ("t,regime,inv_0,demand_0,order_0,comm_0,inv_1,demand_1,order_1,comm_1,"
                        "holding,shortage,communication,total")
    assert len(lines) == 4


def test_argument_checks(base):
    with pytest.raises(ValueError):
        run_episode(base, NeverShare(base), 0, np.random.default_rng(0))
    with pytest.raises(ValueError):
        run_episode(base, NeverShare(base), 5, np.random.default_rng(0), accounting="bogus")
    with pytest.raises(ValueError):
        run_replications(base, NeverShare(base), 5, 0, 0)
