import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mcamerican import (
    BoundaryPoint,
    ContractSpec,
    ExerciseBoundary,
    Flag,
    ParameterError,
    PriceEstimate,
    ProcessParams,
    TimeGrid,
    TreeConfig,
    black_scholes,
    critical_prices,
    crr_price,
    evaluate_policy,
    price_american,
    price_american_on_sample,
    price_averaged,
    price_european,
    reprice_independent,
    simulate,
    simulate_forward,
    track_boundary,
)
from mcamerican.contracts import payoff, running_average
from mcamerican.pricer import result_record, weighted_mean_se


def tree_boundary(params, contract):
    cp = critical_prices(TreeConfig(contract.n_steps, params, contract, refine=20))
    b = ExerciseBoundary(TimeGrid.for_contract(contract).times, contract.side, contract.strike)
    for i, v in enumerate(cp):
        if np.isfinite(v):
            b.set_point(i, BoundaryPoint(v, Flag.LOCATED, 0))
    return b


def test_weighted_se_reduces_to_plain_se():
    x = np.random.default_rng(0).normal(size=1000)
    m, se = weighted_mean_se(x, np.ones(1000))
    assert math.isclose(m, x.mean(), rel_tol=1e-12)
    assert math.isclose(se, x.std(ddof=1) / math.sqrt(1000), rel_tol=1e-12)


def test_european_zero_vol():
    p = ProcessParams(0.10, 0.0, 100.0)
    c = ContractSpec("vanilla-put", 100.0, 0.5, "european")
    est = price_european(simulate_forward(p, TimeGrid.for_contract(c), 20, seed=0), c)
    assert est.value == 0.0 and est.std_error == 0.0
    p0 = ProcessParams(0.0, 0.0, 100.0)
    c = ContractSpec("vanilla-put", 120.0, 0.5, "european")
    assert price_european(simulate_forward(p0, TimeGrid.for_contract(c), 20, seed=0), c).value == 20.0


def test_european_matches_black_scholes(table_mean_params):
    c = ContractSpec("vanilla-put", 100.0, 0.5, "european")
    est = price_european(simulate_forward(table_mean_params, TimeGrid.for_contract(c), 100_000, seed=1), c)
    assert est.bias_tag == "european-unbiased"
    assert abs(est.value - black_scholes(c, table_mean_params)) < 3 * est.std_error


def test_european_needs_european_style(table_mean_params, atm_put):
    s = simulate_forward(table_mean_params, TimeGrid.for_contract(atm_put), 10, seed=0)
    with pytest.raises(ParameterError):
        price_european(s, atm_put)


@pytest.mark.parametrize("mode", ["exact", "grid"])
def test_zero_rate_american_equals_european(mode):
    p = ProcessParams(0.0, 0.40, 100.0)
    c = ContractSpec("vanilla-put", 100.0, 0.5)
    s = simulate_forward(p, TimeGrid.for_contract(c), 100_000, seed=7)
    am, _ = price_american_on_sample(s, c, mode)
    eu = price_european(s, c.with_style("european"))
    assert abs(am.value - eu.value) < 3 * am.std_error
    tree, _ = crr_price(TreeConfig(100, p, c))
    assert abs(am.value - tree) < 3 * am.std_error


def test_immediate_exercise_is_exact():
    p = ProcessParams(0.10, 0.40, 100.0)
    c = ContractSpec("vanilla-put", 150.0, 0.5)
    assert crr_price(TreeConfig(100, p, c))[1][0] >= 100.0
    est, b = price_american(p, c, 5_000, seed=1)
    assert est.value == 50.0 and est.std_error == 0.0
    assert b.exercise_mask(0, np.array([100.0]))[0]


def test_call_boundary_freezes_and_matches_european():
    p = ProcessParams(0.10, 0.40, 100.0)
    c = ContractSpec("vanilla-call", 100.0, 0.5)
    s = simulate_forward(p, TimeGrid.for_contract(c), 100_000, seed=7)
    est, b, res = price_american_on_sample(s, c, "exact", return_result=True)
    eu = price_european(s, c.with_style("european"))
    assert abs(est.value - eu.value) < 3 * est.std_error
    assert res.frozen_at is not None
    assert np.all(b.flags[1:res.frozen_at, 0] == Flag.ABOVE.value)
    # noise near expiry can place a few thresholds before the freeze, never earlier
    early = (res.table.tau >= 0) & (res.table.tau < c.n_steps)
    assert np.all(res.table.tau[early] > res.frozen_at)


def test_tree_boundary_reprices_to_tree(table_mean_params, atm_put):
    tree, _ = crr_price(TreeConfig(100, table_mean_params, atm_put))
    est = reprice_independent(table_mean_params, atm_put, tree_boundary(table_mean_params, atm_put),
                              100_000, seed2=3)
    assert est.bias_tag == "independent-down"
    assert abs(est.value - tree) < 3 * est.std_error


def test_never_exercise_boundary_gives_european(table_mean_params, atm_put):
    b = ExerciseBoundary(TimeGrid.for_contract(atm_put).times, 1, 100.0)
    for i in range(atm_put.n_steps + 1):
        b.set_point(i, BoundaryPoint(0.0, Flag.BELOW, 0))
    s = simulate_forward(table_mean_params, TimeGrid.for_contract(atm_put), 5_000, seed=3)
    est = evaluate_policy(s, atm_put, b)
    eu = price_european(s, atm_put.with_style("european"))
    assert math.isclose(est.value, eu.value, rel_tol=1e-12)


def test_reprice_rejects_other_grid(table_mean_params, atm_put):
    b = ExerciseBoundary(TimeGrid(0.5, 50).times, 1, 100.0)
    with pytest.raises(ParameterError):
        reprice_independent(table_mean_params, atm_put, b, 100, seed2=1)


def test_price_averaged():
    c = ContractSpec("vanilla-put", 100.0, 0.5)
    a = PriceEstimate(10.0, 0.2, 100, "in-sample-up", c)
    b = PriceEstimate(9.8, 0.2, 100, "independent-down", c)
    avg = price_averaged(a, b)
    assert math.isclose(avg.value, 9.9) and math.isclose(avg.std_error, 0.2 * math.sqrt(2) / 2)
    assert avg.bias_tag == "averaged"
    assert price_averaged(a, a).value == 10.0
    other = PriceEstimate(9.8, 0.2, 100, "independent-down", c.with_style("european"))
    with pytest.raises(ParameterError):
        price_averaged(a, other)


def test_price_estimate_validation():
    with pytest.raises(ParameterError):
        PriceEstimate(1.0, -0.1, 10, "averaged")
    with pytest.raises(ParameterError):
        PriceEstimate(1.0, 0.1, 10, "biased")


def test_discount_consistency(table_mean_params):
    c = ContractSpec("vanilla-put", 105.0, 0.5, n_steps=50)
    s = simulate_forward(table_mean_params, TimeGrid.for_contract(c), 20_000, seed=9)
    est, _, res = price_american_on_sample(s, c, "exact", return_result=True)
    tau = res.table.tau
    t = s.grid.times
    idx = np.where(tau >= 0, tau, c.n_steps)
    g = payoff(c, s.values[np.arange(s.n_paths), idx])
    factors = np.cumprod(np.concatenate(([1.0], np.exp(-0.1 * s.grid.steps))))
    direct = np.where(tau >= 0, g * factors[idx], 0.0)
    assert np.allclose(res.table.value, direct, rtol=1e-12, atol=1e-12)
    assert math.isclose(factors[-1], math.exp(-0.1 * 0.5), rel_tol=1e-12)
    assert math.isclose(est.value, direct.mean(), rel_tol=1e-12)


def test_flashlight_segments_never_enter_the_price(table_mean_params):
    c = ContractSpec("vanilla-put", 70.0, 0.5, n_steps=20)
    s = simulate_forward(table_mean_params, TimeGrid.for_contract(c), 5_000, seed=2)
    res = track_boundary(s, c, mode="exact", flashlight=True, n_aux=500, min_coverage=10_000)
    assert res.aux_steps
    assert res.table.value.shape == (s.n_paths,)
    est, _ = price_american_on_sample(s, c, "exact", flashlight=True, n_aux=500)
    assert est.n_paths == s.n_paths


def test_flashlight_price_close_to_plain(table_mean_params, atm_put):
    a, _ = price_american(table_mean_params, atm_put, 100_000, seed=4, flashlight=True)
    b, _ = price_american(table_mean_params, atm_put, 100_000, seed=4)
    assert abs(a.value - b.value) < 3 * math.hypot(a.std_error, b.std_error)


def test_zero_vol_average_put_is_deterministic():
    p = ProcessParams(-0.05, 0.0, 100.0)
    c = ContractSpec("geo-avg-put", 110.0, 0.5, n_steps=10)
    s = simulate_forward(p, TimeGrid.for_contract(c), 50, seed=0)
    with pytest.warns(RuntimeWarning):
        est, b = price_american_on_sample(s, c)
    avg = running_average(s.values[:1], "geometric")[0]
    best = max(math.exp(0.05 * t) * max(110.0 - a, 0.0) for t, a in zip(s.grid.times, avg))
    assert math.isclose(est.value, best, rel_tol=1e-12)
    assert np.all(b.thresholds[-1] == 110.0)


@settings(max_examples=8)
@given(st.floats(0.0, 0.2), st.floats(0.1, 0.6), st.floats(70.0, 130.0), st.integers(0, 2**32))
def test_american_at_least_european(r, sigma, strike, seed):
    p = ProcessParams(r, sigma, 100.0)
    c = ContractSpec("vanilla-put", strike, 0.5, n_steps=20)
    s = simulate_forward(p, TimeGrid.for_contract(c), 4_000, seed=seed)
    am, _ = price_american_on_sample(s, c, "exact")
    eu = price_european(s, c.with_style("european"))
    assert am.value >= eu.value - 3 * math.hypot(am.std_error, eu.std_error)


def test_importance_sample_prices_american(table_mean_params):
    c = ContractSpec("vanilla-put", 80.0, 0.5)
    tree, _ = crr_price(TreeConfig(100, table_mean_params, c))
    up, b = price_american(table_mean_params, c, 100_000, seed=1, importance=True)
    down = reprice_independent(table_mean_params, c, b, 100_000, seed2=101, importance=True)
    avg = price_averaged(up, down)
    # deep OTM boundaries are noisy; an early freeze can cost ~2% on unlucky seeds
    assert abs(avg.value - tree) < 4 * avg.std_error


def test_importance_sampling_reduces_otm_variance(table_mean_params):
    c = ContractSpec("vanilla-put", 60.0, 0.5, style="european")
    grid = TimeGrid.for_contract(c)
    fwd = price_european(simulate(table_mean_params, grid, 20_000, 2, c, importance=False), c)
    imp = price_european(simulate(table_mean_params, grid, 20_000, 2, c, importance=True), c)
    bs = black_scholes(c, table_mean_params)
    assert imp.std_error < 0.6 * fwd.std_error
    assert abs(imp.value - bs) < 3 * imp.std_error


def test_result_record_is_json(table_mean_params, atm_put):
    est = PriceEstimate(1.0, 0.1, 10, "in-sample-up", atm_put)
    rec = result_record(atm_put, table_mean_params, {"seed": 1}, {"mode": "grid"}, {"in_sample": est}, "b.csv")
    back = json.loads(json.dumps(rec))
    assert back["estimates"]["in_sample"]["bias_tag"] == "in-sample-up"
    assert back["boundary_file"] == "b.csv"
