import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from esnlab import analysis, dynamics, esn
from esnlab.dynamics import TimeSeries
from esnlab.errors import ConfigurationError


def _series(x, dt=0.1):
    return TimeSeries(np.atleast_2d(np.asarray(x, dtype=float)), dt)


# -- valid time ---------------------------------------------------------------


def test_valid_time_first_crossing():
    target = _series([np.sin(np.arange(100) * 0.3)])
    sd = target.component_stddevs[0]
    err = np.zeros(100)
    err[37:] = 0.6 * sd
    vt = analysis.valid_time(_series(target.samples - err), target, threshold=0.5, lambda1=0.9)
    assert vt.steps == 37 and vt.failed_component == 0
    assert vt.lyapunov_times == pytest.approx(37 * 0.1 * 0.9)


def test_valid_time_any_component_fails():
    rng = np.random.default_rng(0)
    target = _series(rng.standard_normal((3, 50)))
    pred = target.samples.copy()
    pred[2, 11] += 10.0
    vt = analysis.valid_time(_series(pred), target)
    assert vt.steps == 11 and vt.failed_component == 2


def test_perfect_prediction_is_censored():
    target = _series(np.random.default_rng(1).standard_normal((2, 40)))
    vt = analysis.valid_time(target, target)
    assert vt.censored and vt.steps == 40


def test_truncated_prediction_fails_at_truncation():
    target = _series(np.random.default_rng(2).standard_normal((1, 40)))
    pred = TimeSeries(target.samples[:, :15].copy(), 0.1, diverged=True)
    vt = analysis.valid_time(pred, target)
    assert vt.diverged and vt.steps == 15


def test_valid_time_argument_checks():
    t = _series(np.ones((1, 5)) * np.arange(5))
    with pytest.raises(ConfigurationError):
        analysis.valid_time(t, t, threshold=0.0)
    with pytest.raises(ConfigurationError):
        analysis.deviation(_series(np.ones((1, 4))), t)
    with pytest.raises(ConfigurationError):
        analysis.deviation(_series(np.ones((1, 5))), _series(np.ones((1, 5))))


@settings(max_examples=30, deadline=None)
@given(st.floats(0.05, 2.0), st.floats(0.05, 2.0))
def test_valid_time_monotone_in_threshold(a, b):
    rng = np.random.default_rng(3)
    target = _series(rng.standard_normal((2, 60)))
    pred = _series(target.samples + np.linspace(0, 3, 60) * rng.standard_normal((2, 60)))
    lo, hi = sorted((a, b))
    assert analysis.valid_time(pred, target, lo).steps <= analysis.valid_time(pred, target, hi).steps


# -- rank ---------------------------------------------------------------------


def test_rank_of_constructed_matrix():
    rng = np.random.default_rng(4)
    R = rng.standard_normal((30, 7)) @ rng.standard_normal((7, 100))
    assert analysis.numerical_rank(R) == 7
    assert analysis.numerical_rank(np.zeros((3, 4))) == 0
    with pytest.raises(ConfigurationError):
        analysis.numerical_rank(np.zeros((0, 3)))


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 12), st.integers(0, 2**31))
def test_svd_and_gram_rank_agree(k, seed):
    rng = np.random.default_rng(seed)
    R = rng.standard_normal((15, k)) @ rng.standard_normal((k, 40))
    assert analysis.numerical_rank(R, 1e-6) == analysis.gram_rank(R, 1e-6) == min(k, 15)


# -- memory capacity ----------------------------------------------------------


def test_memory_capacity_bounds_and_shift_register():
    # A shift register remembers exactly N delays.
    N = 20
    A = np.diag(np.ones(N - 1), -1)
    W_in = np.zeros((N, 1))
    W_in[0, 0] = 0.01
    res = esn.Reservoir(A=A, W_in=W_in, N=N, n=1, s=1.0, sigma_A2=0.0, sigma_in2=1e-4, seed=0)
    mc = analysis.memory_capacity(res, T=3000, tau_max=40, seed=1)
    assert mc.mc_total == pytest.approx(N, abs=0.3)
    assert np.all(mc.mc_per_delay[:N] > 0.99)
    assert np.all((mc.mc_per_delay >= 0) & (mc.mc_per_delay <= 1))
    assert mc.mc_total <= N + 1


def test_memory_capacity_checks():
    res = esn.build_reservoir(esn.EsnConfig(N=10, n=2, seed=0))
    with pytest.raises(ConfigurationError):
        analysis.memory_capacity(res)
    res1 = esn.build_reservoir(esn.EsnConfig(N=10, n=1, seed=0))
    with pytest.raises(ConfigurationError):
        analysis.memory_capacity(res1, T=10, tau_max=20)


def test_memory_capacity_deterministic():
    res = esn.build_reservoir(esn.EsnConfig(N=30, n=1, sigma_A2=0.5 / 30, sigma_in2=0.1, seed=3))
    a = analysis.memory_capacity(res, T=1500, seed=9)
    b = analysis.memory_capacity(res, T=1500, seed=9)
    assert a.mc_total == b.mc_total and a.tau_max_used == 60


# -- bifurcation scan ---------------------------------------------------------


def test_zero_readout_sits_at_fixed_point(lorenz_series):
    tmpl = esn.EsnConfig(N=50, n=3, warmup_steps=100, train_steps=500, seed=0)
    scan = analysis.bifurcation_scan(
        tmpl, lorenz_series, [0.01, 0.1], k=1e-2, horizon=100, transient=100,
        trainer=analysis.zero_readout_trainer,
    )
    assert scan.zero_fixed_point.all() and not scan.bifurcates()
    assert scan.threshold_bracket() is None


def test_threshold_bracket_logic():
    scan = analysis.BifurcationScan(
        parameter_values=np.array([0.1, 1.0, 10.0]),
        attractor_samples=[np.zeros(1)] * 3,
        zero_fixed_point=np.array([True, False, False]),
        diverged=np.zeros(3, bool),
        fixed_point_threshold=1e-3,
        ridge_k=1.0,
    )
    assert scan.threshold_index() == 1 and scan.threshold_bracket() == (0.1, 1.0)


def test_ladder_must_increase(lorenz_series):
    with pytest.raises(ConfigurationError):
        analysis.bifurcation_scan(esn.EsnConfig(N=20, n=3), lorenz_series, [1.0, 0.1], k=1.0)


def test_bifurcation_csv(tmp_path, lorenz_series):
    tmpl = esn.EsnConfig(N=40, n=3, warmup_steps=100, train_steps=500, seed=0)
    scan = analysis.bifurcation_scan(tmpl, lorenz_series, [0.01, 1.0], k=1e-2, horizon=50, transient=50)
    path = tmp_path / "b.csv"
    scan.write_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "k,n_sin2,zero_fixed_point,diverged,sample_index,v0"
    assert len(lines) == 1 + sum(len(s) for s in scan.attractor_samples)


# -- simple ESN ---------------------------------------------------------------


def test_simple_esn_structure():
    res = analysis.build_simple_esn(5, 2.0, 1, 0.3, seed=0)
    assert np.allclose(np.diag(res.A), [0.4, 0.8, 1.2, 1.6, 2.0])
    assert np.count_nonzero(res.A - np.diag(np.diag(res.A))) == 0
    with pytest.raises(ConfigurationError):
        analysis.build_simple_esn(0, 1.0, 1, 0.1)


def test_simple_esn_trains_and_predicts(lorenz_series):
    y = dynamics.select_components(lorenz_series, [1])
    res = analysis.build_simple_esn(200, 3.0, 1, 1.0, seed=0)
    h = esn.harvest(res, y, 100, 2000)
    ro = esn.train_readout(h, 1e-6)
    pred = esn.predict_closed_loop(res, ro, h.r_last, 50, y.dt)
    truth = y.window(h.next_index, h.next_index + 50)
    assert analysis.valid_time(pred, truth).steps > 0
