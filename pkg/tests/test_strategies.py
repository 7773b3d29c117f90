import math
from dataclasses import replace

import numpy as np
import pytest

from netshare.delay import FixedPointSpec, solve_delay_fixed_point
from netshare.domain import EnergyParams, make_classes
from netshare.strategies import (
    SolverOptions,
    aggregate_savings,
    best_switchoff,
    evaluate_strategies,
    evaluate_switchoff,
    grid_search_full_ns,
    minimal_feasible_beta,
    no_sharing_capacity,
    optimize_full_ns,
    optimize_no_sharing,
    savings_report,
    self_sufficiency,
)
from conftest import KM2, synthetic_model
from oracles import bisect_min_beta


def _feasible_at(m, beta):
    mb = m.with_betas([beta])
    d = solve_delay_fixed_point(mb, FixedPointSpec(rel_tol=1e-12))
    return bool(d.tau_bar_mix[-1] <= m.classes[-1].target_delay)


def test_symmetric_full_ns_is_symmetric():
    res = optimize_full_ns(synthetic_model())
    assert res.feasible
    assert abs(res.betas[0] - res.betas[1]) < 1e-4


def test_full_ns_certified_feasible():
    m = synthetic_model(profile="LLP")
    res = optimize_full_ns(m)
    d = solve_delay_fixed_point(replace(m, load_model="aggregate").with_betas(res.betas))
    assert np.all(d.tau_bar_mix <= np.array([c.target_delay for c in m.classes]) * (1 + 1e-6))
    assert np.all(res.utilization <= 1 + 1e-6)
    assert res.kkt_residual < 1e-3


def test_single_operator_noise_limited_optimum_is_minimal_feasible_beta():
    # without interference feedback the energy rises with beta, so the optimum is the feasibility edge
    m = synthetic_model(n_ops=1, lam=3.0, lam_u=2.0, profile="LLP", load_model="aggregate")
    m = replace(m, radio=replace(m.radio, noise_psd=1e-16))
    res = optimize_full_ns(m)
    oracle = bisect_min_beta(lambda b: _feasible_at(m, b))
    assert res.betas[0] == pytest.approx(oracle, abs=1e-3)


def test_single_operator_interference_limited_optimum_matches_scan():
    # here fewer busy interferers pay for extra BSs: the optimum sits above the feasibility edge
    m = synthetic_model(n_ops=1, profile="LLP", load_model="aggregate")
    res = optimize_full_ns(m)
    edge = bisect_min_beta(lambda b: _feasible_at(m, b))
    grid = np.linspace(edge, 1.0, 801)
    from netshare.energy import network_power
    energies = [network_power(m.with_betas([b]), solve_delay_fixed_point(m.with_betas([b])))[0] for b in grid]
    assert res.betas[0] == pytest.approx(grid[int(np.argmin(energies))], abs=2e-3)
    assert res.energy <= min(energies) * (1 + 1e-9)


def test_no_sharing_noise_limited_matches_bisection():
    cls = make_classes([1e6], [1.0])
    m = synthetic_model(lam=3.0, lam_u=2.0, profile="LLP", classes=cls)
    m = replace(m, radio=replace(m.radio, noise_psd=1e-16))
    res = optimize_no_sharing(m)
    one = m.single_operator(0)
    oracle = bisect_min_beta(lambda b: _feasible_at(one, b))
    assert res.feasible
    assert res.betas[0] == pytest.approx(oracle, abs=1e-3)


def test_no_sharing_zero_users_sleeps():
    m = synthetic_model()
    m = replace(m, operators=(replace(m.operators[0], user_intensity=0.0), m.operators[1]))
    res = optimize_no_sharing(m)
    assert res.betas[0] == 0.0 and res.parts[0].energy == 0.0
    assert res.feasible


def test_no_sharing_beta_monotone_in_load():
    a = optimize_no_sharing(synthetic_model(lam_u=10.0)).betas[0]
    b = optimize_no_sharing(synthetic_model(lam_u=20.0)).betas[0]
    assert b >= a


def test_no_sharing_infeasible_operator_is_flagged():
    res = optimize_no_sharing(synthetic_model(lam_u=500.0))
    assert not res.feasible and math.isnan(res.energy)
    assert "operator 0" in res.reason


def test_self_sufficiency_report():
    assert self_sufficiency(synthetic_model()) == [True, True]
    assert self_sufficiency(synthetic_model(lam_u=500.0)) == [False, False]


def test_switchoff_reduces_to_no_sharing_with_summed_users():
    m = synthetic_model(lam_u=5.0)
    m = replace(m, operators=(m.operators[0], replace(m.operators[1], user_intensity=0.0)))
    so = evaluate_switchoff(m, 0)
    ns = optimize_no_sharing(m.single_operator(0, user_intensity=5.0 * KM2))
    assert so.betas[1] == 0.0
    assert so.energy == pytest.approx(ns.energy, rel=1e-9)


def test_switchoff_infeasible_when_overloaded():
    res = evaluate_switchoff(synthetic_model(lam_u=40.0), 1)
    assert not res.feasible


def test_switchoff_index_checked():
    with pytest.raises(IndexError):
        evaluate_switchoff(synthetic_model(), 2)


@pytest.mark.parametrize("profile", ["HLP", "LLP"])
def test_full_ns_dominates_switchoff(profile):
    m = synthetic_model(lam_u=8.0, profile=profile)
    fn = optimize_full_ns(m)
    for s in range(2):
        so = evaluate_switchoff(m, s)
        assert so.feasible
        assert fn.energy <= so.energy * 1.005


def test_grid_oracle_asymmetric_pair():
    m = synthetic_model(profile="HLP")
    ops = (replace(m.operators[0], deployed_intensity=4 * KM2, user_intensity=20 * KM2),
           replace(m.operators[1], deployed_intensity=2 * KM2, user_intensity=35 * KM2,
                   energy=EnergyParams.from_profile("LLP")))
    m = replace(m, operators=ops)
    res = optimize_full_ns(m)
    _, e_grid = grid_search_full_ns(m, step=0.02)
    assert res.feasible
    assert res.energy <= e_grid * 1.005


def test_full_ns_infeasible_is_a_result_not_an_error():
    res = optimize_full_ns(synthetic_model(lam_u=500.0))
    assert not res.feasible and "every BS" in res.reason


def test_three_operators_run():
    res = optimize_full_ns(synthetic_model(n_ops=3, lam_u=10.0))
    assert res.feasible and len(res.betas) == 3


def test_minimal_feasible_beta():
    assert minimal_feasible_beta(lambda s: s >= 0.3) == pytest.approx(0.3, abs=1e-9)
    assert minimal_feasible_beta(lambda s: False) is None


def test_savings_report():
    m = synthetic_model(lam_u=8.0)
    ns = optimize_no_sharing(m)
    same = savings_report(ns, [ns])[0]
    assert same.percent == pytest.approx(0.0)
    fake = replace(ns, strategy="x", energy=0.6674 * ns.energy)
    assert savings_report(ns, [fake])[0].percent == pytest.approx(33.26)
    bad = replace(ns, strategy="y", feasible=False, reason="nope")
    row = savings_report(ns, [bad])[0]
    assert not row.included and row.reason == "nope"
    with pytest.raises(ValueError):
        savings_report(replace(ns, energy=0.0), [ns])


def test_evaluate_and_aggregate():
    slots = [evaluate_strategies(synthetic_model(lam_u=u)) for u in (5.0, 10.0)]
    agg = aggregate_savings(slots)
    assert set(agg) == {"full-ns", "switchoff"}
    assert agg["full-ns"][1] == 2 and agg["full-ns"][0] > 0
    with pytest.raises(ValueError):
        evaluate_strategies(synthetic_model(), ["bogus"])


def test_best_switchoff_picks_cheapest():
    m = synthetic_model(lam_u=5.0)
    m = replace(m, operators=(replace(m.operators[0], deployed_intensity=6 * KM2), m.operators[1]))
    best = best_switchoff(m)
    assert best.energy == min(p.energy for p in best.parts if p.feasible)


def test_no_sharing_capacity_is_the_feasibility_edge():
    m = synthetic_model()
    cap = no_sharing_capacity(m, 0)
    assert 30 * KM2 < cap < 500 * KM2
    assert self_sufficiency(replace(m, operators=tuple(replace(o, user_intensity=0.99 * cap) for o in m.operators)))[0]
    assert not self_sufficiency(replace(m, operators=tuple(replace(o, user_intensity=1.01 * cap) for o in m.operators)))[0]
