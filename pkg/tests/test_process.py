import io
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from mcamerican import (
    ContractSpec,
    ParameterError,
    ProcessParams,
    TimeGrid,
    black_scholes,
    read_pathsample,
    sample_terminal_importance,
    simulate,
    simulate_bridge,
    simulate_forward,
    write_pathsample,
)
from mcamerican.process import default_tilt


def test_zero_vol_forward_is_deterministic():
    p = ProcessParams(0.10, 0.0, 100.0)
    s = simulate_forward(p, TimeGrid(0.5, 100), 50, seed=123)
    assert np.all(s.values[:, -1] == 100.0 * math.exp(0.10 * 0.5))
    assert np.all(s.values[:, 0] == 100.0)


def test_forward_terminal_mean_is_forward_price():
    p = ProcessParams(0.10, 0.40, 100.0)
    s = simulate_forward(p, TimeGrid(0.5, 100), 100_000, seed=1)
    st_ = s.values[:, -1]
    se = st_.std(ddof=1) / math.sqrt(len(st_))
    assert abs(st_.mean() - 100.0 * math.exp(0.05)) < 3 * se


def test_forward_log_moments():
    p = ProcessParams(0.10, 0.40, 100.0)
    s = simulate_forward(p, TimeGrid(0.5, 100), 100_000, seed=2)
    x = np.log(s.values[:, -1] / 100.0)
    n = len(x)
    mean_se = math.sqrt(0.08 / n)
    var_se = 0.08 * math.sqrt(2.0 / (n - 1))
    assert abs(x.mean() - (0.10 - 0.08) * 0.5) < 3 * mean_se
    assert abs(x.var(ddof=1) - 0.08) < 3 * var_se


def test_forward_bit_identical_across_threads():
    p = ProcessParams(0.05, 0.3, 80.0)
    g = TimeGrid(1.0, 20)
    a = simulate_forward(p, g, 9000, seed=5, threads=1)
    b = simulate_forward(p, g, 9000, seed=5, threads=3)
    assert np.array_equal(a.values, b.values)


def test_grid_sums_to_expiry():
    g = TimeGrid(0.37, 100)
    assert math.isclose(g.steps.sum(), 0.37, rel_tol=0, abs_tol=2e-16)
    assert g.times[-1] == 0.37
    assert np.all(g.steps > 0)


def test_grid_rejects_bad_steps():
    with pytest.raises(ParameterError):
        TimeGrid(1.0, 0)
    with pytest.raises(ParameterError):
        TimeGrid.from_times([0.0, 0.5, 0.5, 1.0])


def test_sample_is_read_only():
    s = simulate_forward(ProcessParams(0.1, 0.2, 100.0), TimeGrid(1.0, 4), 10, seed=0)
    with pytest.raises(ValueError):
        s.values[0, 0] = 1.0


def test_zero_vol_bridge_is_straight_in_log_space():
    p = ProcessParams(0.10, 0.0, 100.0)
    g = TimeGrid(0.5, 10)
    terminal = np.full(20, 100.0 * math.exp(0.05))
    s = simulate_bridge(p, g, terminal, seed=3)
    expected = 100.0 * np.exp(0.10 * g.times)
    assert np.allclose(s.values, expected, rtol=1e-14, atol=0)


def test_bridge_midpoint_variance():
    p = ProcessParams(0.10, 0.40, 100.0)
    g = TimeGrid(0.5, 2)
    terminal = np.full(100_000, 110.0)
    s = simulate_bridge(p, g, terminal, seed=4)
    x = np.log(s.values[:, 1])
    target = 0.16 * 0.25 * 0.25 / 0.5  # sigma^2 t (T - t) / T = 0.02
    assert math.isclose(target, 0.02)
    var_se = target * math.sqrt(2.0 / (len(x) - 1))
    assert abs(x.var(ddof=1) - target) < 3 * var_se
    mid = 0.5 * (math.log(100.0) + math.log(110.0))
    assert abs(x.mean() - mid) < 3 * math.sqrt(target / len(x))


def test_bridge_matches_forward_marginal():
    p = ProcessParams(0.10, 0.40, 100.0)
    g = TimeGrid(0.5, 10)
    fwd = simulate_forward(p, g, 20_000, seed=8)
    terminal = simulate_forward(p, g, 20_000, seed=9).values[:, -1]
    br = simulate_bridge(p, g, terminal, seed=10)
    assert stats.ks_2samp(np.log(fwd.values[:, 5]), np.log(br.values[:, 5])).pvalue > 0.01


def test_bridge_length_mismatch():
    p = ProcessParams(0.1, 0.2, 100.0)
    with pytest.raises(ParameterError):
        simulate_bridge(p, TimeGrid(1.0, 4), np.ones(5), seed=0, n_paths=6)


def test_importance_zero_tilt_gives_unit_weights():
    p = ProcessParams(0.1, 0.4, 100.0)
    c = ContractSpec("vanilla-put", 100.0, 0.5)
    _, w = sample_terminal_importance(p, TimeGrid(0.5, 10), 1000, c, seed=0, tilt=0.0)
    assert np.all(w == 1.0)


def test_importance_raises_in_the_money_share():
    p = ProcessParams(0.1, 0.2, 100.0)
    c = ContractSpec("vanilla-put", 60.0, 0.5)
    g = TimeGrid(0.5, 10)
    assert default_tilt(p, g, c) > 0
    tilted, _ = sample_terminal_importance(p, g, 20_000, c, seed=1)
    plain = simulate_forward(p, g, 20_000, seed=1).values[:, -1]
    assert np.mean(tilted < 60.0) > np.mean(plain < 60.0)


def test_importance_european_put_matches_closed_form():
    p = ProcessParams(0.1, 0.4, 100.0)
    c = ContractSpec("vanilla-put", 70.0, 0.5, "european")
    s_t, w = sample_terminal_importance(p, TimeGrid(0.5, 1), 100_000, c, seed=2)
    x = math.exp(-0.05) * np.maximum(70.0 - s_t, 0.0)
    mean = np.dot(w, x) / w.sum()
    se = math.sqrt(np.sum((w * (x - mean)) ** 2)) / w.sum()
    assert abs(mean - black_scholes(c, p)) < 3 * se


@given(st.floats(0.01, 1.0), st.floats(20.0, 300.0), st.integers(0, 2**32))
def test_importance_weights_have_unit_mean(sigma, strike, seed):
    p = ProcessParams(0.05, sigma, 100.0)
    c = ContractSpec("vanilla-put", strike, 1.0)
    _, w = sample_terminal_importance(p, TimeGrid(1.0, 4), 500, c, seed=seed)
    assert np.all(w > 0)
    assert math.isclose(w.mean(), 1.0, rel_tol=1e-12)


@given(st.floats(-0.05, 0.2), st.floats(0.0, 1.0), st.integers(1, 20), st.integers(0, 2**63))
def test_prices_positive_and_start_at_s0(r, sigma, n_steps, seed):
    s = simulate_forward(ProcessParams(r, sigma, 50.0), TimeGrid(0.5, n_steps), 64, seed=seed)
    assert np.all(s.values > 0)
    assert np.all(s.values[:, 0] == 50.0)


def test_pathsample_round_trip(tmp_path):
    p = ProcessParams(0.1, 0.4, 100.0)
    c = ContractSpec("vanilla-put", 90.0, 0.5)
    s = simulate(p, TimeGrid(0.5, 5), 30, seed=11, contract=c, importance=True)
    path = tmp_path / "sample.csv"
    write_pathsample(s, path)
    back = read_pathsample(path)
    assert np.array_equal(back.values, s.values)
    assert np.array_equal(back.weights, s.weights)
    assert back.seed == 11 and back.params == p and back.grid == s.grid
    assert path.read_text().startswith("# format=mcamerican-pathsample/1\n")


def test_pathsample_rejects_unknown_format(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("# format=other/9\npath,weight,S_0\n0,1.0,1.0\n")
    with pytest.raises(ParameterError):
        read_pathsample(path)
