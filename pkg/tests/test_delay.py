import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from netshare.delay import (
    DelayMap,
    FixedPointError,
    FixedPointSpec,
    delay_kernel,
    ideal_delay_rhs,
    serving_probability,
    solve_delay_fixed_point,
    solve_delay_newton,
)
from netshare.domain import ModelError, RadioParams, make_classes
from netshare.geometry import nearest_bs_pdf
from netshare.radio import mean_interference, shannon_capacity
from conftest import KM2, synthetic_model
from oracles import serving_probability_literal


@pytest.mark.parametrize("c", [0.0, 1.0])
def test_serving_probabilities_sum_to_one_at_extremes(c):
    m = replace(synthetic_model(colocation=c), operators=synthetic_model().operators).with_betas([0.7, 0.3])
    assert serving_probability(m).sum() == 1.0


def test_serving_probability_literal_values():
    m = synthetic_model(colocation=0.3, lam=1.0).with_betas([2.0, 1.0])  # 2e-6, 1e-6 /m²
    p = serving_probability(m)
    assert p == pytest.approx([0.5323, 0.2577], abs=1e-4)
    assert p.sum() == pytest.approx(1 - 0.3 * 0.7)
    assert p == pytest.approx(serving_probability_literal([2e-6, 1e-6], 0.3), rel=1e-12)


def test_serving_probability_normalized_variant():
    m = replace(synthetic_model(colocation=0.3, lam=1.0).with_betas([2.0, 1.0]), normalize_serving_probs=True)
    assert serving_probability(m).sum() == pytest.approx(1.0)


def test_serving_probability_single_operator_full_colocation():
    m = synthetic_model(n_ops=1, colocation=1.0)
    assert serving_probability(m) == pytest.approx([1.0])


def test_serving_probability_needs_active_bs():
    with pytest.raises(ModelError):
        serving_probability(synthetic_model().with_betas([0.0, 0.0]))


def test_kernel_compositional_spot_value(synthetic):
    r, tau = 120.0, 3e-7
    interf = mean_interference(r, synthetic, 0, tau)
    expect = nearest_bs_pdf(r, synthetic.total_active_intensity) / shannon_capacity(r, interf, synthetic.radio)
    assert delay_kernel(r, synthetic, 0, tau) == pytest.approx(expect, rel=1e-14)


def test_rhs_matches_map_and_class_scaling():
    cls = make_classes([5e6, 2e5, 5e4], [0.1, 0.3, 0.6], "HML")
    m = synthetic_model(classes=cls)
    f = DelayMap(m)
    tau, mix = ideal_delay_rhs([1e-5, 2e-5], m)
    ref = f(np.array([1e-5, 2e-5]))
    assert np.allclose(tau[-1], ref)
    assert np.allclose(tau[0], ref / 100.0)
    assert np.allclose(mix, tau @ f.p)


def test_map_derivative_matches_finite_difference(synthetic):
    f = DelayMap(replace(synthetic, load_model="aggregate"))
    x = np.array([5e-8, 9e-8])
    h = 1e-13
    fd = (f(x + h) - f(x - h)) / (2 * h)
    assert f.derivative(x) == pytest.approx(fd, rel=1e-5)


def test_map_is_increasing_and_contractive(synthetic):
    f = DelayMap(synthetic)
    xs = np.linspace(0, synthetic.reference_delay, 30)
    vals = np.array([f(np.full(2, x))[0] for x in xs])
    assert np.all(np.diff(vals) > 0)
    assert np.max(np.abs(np.diff(vals) / np.diff(xs))) < 1


@pytest.mark.parametrize("load_model, key", [("aggregate", "synthetic_aggregate"),
                                             ("per-operator-literal", "synthetic_literal")])
def test_synthetic_delay_matches_frozen_oracle(frozen, load_model, key):
    d = solve_delay_fixed_point(synthetic_model(load_model), FixedPointSpec(rel_tol=1e-12))
    assert d.tau_ref == pytest.approx([frozen["delay"][key]] * 2, rel=1e-6)


def test_asymmetric_delay_matches_frozen_oracle(frozen):
    cls = make_classes([5e6, 2e5, 5e4], [0.1, 0.3, 0.6], "HML")
    m = synthetic_model(classes=cls, alpha=3.5, colocation=0.3)
    ops = (replace(m.operators[0], deployed_intensity=4 * KM2, user_intensity=20 * KM2, active_fraction=0.7),
           replace(m.operators[1], deployed_intensity=2 * KM2, user_intensity=35 * KM2))
    m = replace(m, operators=ops, radio=RadioParams(bandwidth=(20e6, 10e6), pathloss_exponent=3.5))
    d = solve_delay_fixed_point(m, FixedPointSpec(rel_tol=1e-12))
    assert d.tau_ref == pytest.approx([frozen["delay"]["asym_op0"], frozen["delay"]["asym_op1"]], rel=1e-6)
    assert d.tau_bar[0] == pytest.approx(d.tau_ref / 100.0)


def test_newton_and_iteration_agree(synthetic):
    a = solve_delay_fixed_point(synthetic, FixedPointSpec(rel_tol=1e-13))
    b = solve_delay_newton(synthetic)
    assert b.tau_ref == pytest.approx(a.tau_ref, rel=1e-11)
    assert b.iterations < a.iterations


def test_damping_reaches_same_point(synthetic):
    a = solve_delay_fixed_point(synthetic, FixedPointSpec(rel_tol=1e-12))
    b = solve_delay_fixed_point(synthetic, FixedPointSpec(rel_tol=1e-12, damping=0.5, max_iters=500))
    assert b.tau_ref == pytest.approx(a.tau_ref, rel=1e-9)


def test_nonconvergence_reports_last_iterate(synthetic):
    with pytest.raises(FixedPointError) as exc:
        solve_delay_fixed_point(synthetic, FixedPointSpec(rel_tol=1e-15, max_iters=3))
    assert exc.value.last_iterate.shape == (2,)
    assert exc.value.residual > 1e-15


def test_fixed_point_spec_validation():
    with pytest.raises(ValueError):
        FixedPointSpec(damping=0.0)
    with pytest.raises(ValueError):
        FixedPointSpec(max_iters=0)


def test_delay_grows_with_users():
    lo = solve_delay_fixed_point(synthetic_model(lam_u=10.0)).tau_ref[0]
    hi = solve_delay_fixed_point(synthetic_model(lam_u=40.0)).tau_ref[0]
    assert hi > 4 * lo  # load scales linearly and interference adds on top


@settings(max_examples=15, deadline=None)
@given(st.floats(0.05, 1.0), st.floats(0.05, 1.0), st.integers(0, 10**6))
def test_unique_fixed_point_from_random_starts(b1, b2, seed):
    m = synthetic_model().with_betas([b1, b2])
    base = solve_delay_fixed_point(m, FixedPointSpec(rel_tol=1e-12))
    noise_only = DelayMap(m)(np.zeros(2))
    rng = np.random.default_rng(seed)
    init = rng.uniform(0, 10 * noise_only)
    other = solve_delay_fixed_point(m, FixedPointSpec(rel_tol=1e-12), init=init)
    assert other.tau_ref == pytest.approx(base.tau_ref, rel=1e-6)
    assert other.iterations <= 200
