import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from esnlab import dynamics
from esnlab.dynamics import TimeSeries
from esnlab.errors import ConfigurationError, DegenerateSeriesError, DivergenceError


def test_zero_field_is_constant():
    x0 = np.array([0.3, -2.0, 7.5])
    traj = dynamics.integrate(dynamics.zero_field(), x0, 0.05, 1.0)
    assert len(traj) == 21
    assert np.all(traj.states == x0)


def test_trajectory_length_is_floor_plus_one():
    traj = dynamics.integrate(dynamics.lorenz63(), [1, 1, 1], 0.01, 0.255)
    assert len(traj) == int(np.floor(0.255 / 0.01)) + 1


def test_lorenz_step_halving():
    x0 = [1.0, 1.0, 1.0]
    coarse = dynamics.integrate(dynamics.lorenz63(), x0, 1e-3, 0.1).states[-1]
    fine = dynamics.integrate(dynamics.lorenz63(), x0, 5e-4, 0.1).states[-1]
    assert np.max(np.abs(coarse - fine)) <= 1e-6


def test_rk4_fourth_order():
    x0 = [1.0, 1.0, 1.0]
    ref = dynamics.integrate(dynamics.lorenz63(), x0, 0.02 / 64, 0.4).states[-1]
    errs = [
        np.max(np.abs(dynamics.integrate(dynamics.lorenz63(), x0, h, 0.4).states[-1] - ref))
        for h in (0.02, 0.01)
    ]
    assert 8.0 <= errs[0] / errs[1] <= 32.0


def test_lorenz_standard_form():
    sys_ = dynamics.lorenz63()
    x = np.array([1.0, 2.0, 3.0])
    out = np.empty(3)
    dynamics._rhs(0, sys_._param_vector(), x, out)
    np.testing.assert_allclose(out, [10 * (2 - 1), 1 * (28 - 3) - 2, 1 * 2 - 8 / 3 * 3])


def test_halvorsen_cyclic_form():
    sys_ = dynamics.halvorsen()
    x = np.array([1.0, 2.0, 3.0])
    out = np.empty(3)
    dynamics._rhs(1, sys_._param_vector(), x, out)
    a = 1.3
    expected = [-a * 1 - 4 * (2 + 3) - 2**2, -a * 2 - 4 * (3 + 1) - 3**2, -a * 3 - 4 * (1 + 2) - 1**2]
    np.testing.assert_allclose(out, expected)


def test_divergence_names_step():
    # Halvorsen blows up from far outside its basin with a coarse step.
    with pytest.raises(DivergenceError) as exc:
        dynamics.integrate(dynamics.halvorsen(), [50.0, 50.0, 50.0], 0.5, 200.0)
    assert exc.value.step >= 0
    assert "step" in str(exc.value)


@pytest.mark.parametrize("h,t", [(0.0, 1.0), (0.1, 0.05)])
def test_integrate_rejects_bad_steps(h, t):
    with pytest.raises(ConfigurationError):
        dynamics.integrate(dynamics.lorenz63(), [1, 1, 1], h, t)


def test_unknown_system():
    with pytest.raises(ConfigurationError):
        dynamics.system_by_name("rossler")


# -- sampling ---------------------------------------------------------------


def _traj(length, h=0.01):
    states = np.arange(3 * length, dtype=float).reshape(length, 3)
    return dynamics.Trajectory(states=states, inner_step=h, t_total=(length - 1) * h)


def test_sample_identity():
    traj = _traj(7)
    s = dynamics.sample(traj, 0.01)
    assert s.T == 7
    np.testing.assert_array_equal(s.samples, traj.states.T)


def test_sample_stride_two():
    traj = _traj(5)
    s = dynamics.sample(traj, 0.02)
    np.testing.assert_array_equal(s.samples, traj.states[[0, 2, 4]].T)
    assert s.dt == 0.02


def test_sample_every_tenth():
    traj = _traj(101)
    s = dynamics.sample(traj, 0.1)
    assert s.T == 11
    np.testing.assert_array_equal(s.samples[:, 3], traj.states[30])


def test_sample_rejects_incommensurate():
    with pytest.raises(ConfigurationError):
        dynamics.sample(_traj(10), 0.015)


# -- normalization ------------------------------------------------------------


def test_normalize_identity_when_already_unit(rng):
    x = rng.standard_normal((3, 400))
    x[0] /= x[0].std()
    x[1:] *= 0.3
    s = TimeSeries(x, 0.1)
    np.testing.assert_allclose(dynamics.normalize(s).samples, x, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(c=st.floats(min_value=1e-3, max_value=1e3))
def test_normalize_scale_invariant(c):
    x = np.random.default_rng(7).standard_normal((3, 200)) * [[1.0], [2.0], [0.5]]
    a = dynamics.normalize(TimeSeries(x, 0.1)).samples
    b = dynamics.normalize(TimeSeries(c * x, 0.1)).samples
    np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12)


def test_normalize_is_idempotent(lorenz_series):
    again = dynamics.normalize(lorenz_series)
    np.testing.assert_allclose(again.samples, lorenz_series.samples, atol=1e-12)


def test_lorenz_max_variance_is_one(lorenz_series):
    assert abs(lorenz_series.samples.var(axis=1).max() - 1.0) <= 1e-9
    np.testing.assert_allclose(lorenz_series.component_stddevs, lorenz_series.samples.std(axis=1))
    assert lorenz_series.normalization_scale > 1.0


def test_normalize_degenerate():
    with pytest.raises(DegenerateSeriesError):
        dynamics.normalize(TimeSeries(np.ones((2, 10)), 0.1))
    with pytest.raises(DegenerateSeriesError):
        dynamics.normalize(TimeSeries(np.ones((2, 1)), 0.1))


# -- component selection ------------------------------------------------------


def test_select_all_is_identity(lorenz_series):
    s = dynamics.select_components(lorenz_series, [0, 1, 2])
    np.testing.assert_array_equal(s.samples, lorenz_series.samples)
    assert s.dt == lorenz_series.dt


def test_select_y(lorenz_series):
    y = dynamics.select_components(lorenz_series, [1])
    assert y.n == 1
    assert y.labels == ("y",)
    np.testing.assert_array_equal(y.samples[0], lorenz_series.samples[1])
    assert y.component_stddevs[0] == lorenz_series.component_stddevs[1]


def test_select_rows(lorenz_series):
    s = dynamics.select_components(lorenz_series, [0, 2])
    np.testing.assert_array_equal(s.samples, lorenz_series.samples[[0, 2]])


@pytest.mark.parametrize("bad", [[], [3], [-1]])
def test_select_rejects(bad, lorenz_series):
    with pytest.raises(ConfigurationError):
        dynamics.select_components(lorenz_series, bad)


def test_select_normalize_commutation():
    raw = dynamics.generate_series(dynamics.lorenz63(), 0.1, 3000, seed=3, normalized=False)
    var = raw.samples.var(axis=1)
    top, low = int(np.argmax(var)), int(np.argmin(var))
    keep = [low, top]
    a = dynamics.normalize(dynamics.select_components(raw, keep)).samples
    b = dynamics.select_components(dynamics.normalize(raw), keep).samples
    np.testing.assert_allclose(a, b, atol=1e-12)
    # Without the largest-variance component the common scale differs.
    c = dynamics.normalize(dynamics.select_components(raw, [low])).samples
    d = dynamics.select_components(dynamics.normalize(raw), [low]).samples
    assert np.max(np.abs(c - d)) > 1e-3


# -- spectra and inputs -------------------------------------------------------


def test_zero_field_spectrum():
    exps = dynamics.lyapunov_spectrum(dynamics.zero_field(), [1, 2, 3], 0.01, 20.0)
    np.testing.assert_allclose(exps, 0.0, atol=1e-12)


@pytest.mark.slow
def test_lorenz_spectrum_sum():
    exps = dynamics.lyapunov_spectrum(dynamics.lorenz63(), [1.0, 1.0, 1.0], 0.01, 500.0, transient=50.0)
    assert abs(exps.sum() - dynamics.lorenz63().jacobian_trace()) <= 0.5
    assert abs(exps.sum() + (10 + 1 + 8 / 3)) <= 0.5
    assert exps[0] > exps[1] > exps[2]


def test_spectrum_running_estimate_shape():
    exps, running = dynamics.lyapunov_spectrum(
        dynamics.lorenz63(), [1, 1, 1], 0.01, 10.0, return_running=True
    )
    assert running.shape == (10, 3)
    np.testing.assert_allclose(np.sort(running[-1])[::-1], exps)


def test_gaussian_input():
    a = dynamics.gaussian_input(100, seed=4)
    b = dynamics.gaussian_input(100, seed=4)
    np.testing.assert_array_equal(a.samples, b.samples)
    assert a.samples.shape == (1, 100) and a.dt == 1.0
    big = dynamics.gaussian_input(100_000, seed=5).samples
    assert abs(big.mean()) < 0.02
    assert abs(big.var() - 1.0) < 0.02
    one = dynamics.gaussian_input(1, seed=0)
    assert one.T == 1 and np.isfinite(one.samples).all()
    with pytest.raises(ConfigurationError):
        dynamics.gaussian_input(0)


def test_generate_series_deterministic():
    a = dynamics.generate_series(dynamics.halvorsen(), 0.1, 50, seed=9)
    b = dynamics.generate_series(dynamics.halvorsen(), 0.1, 50, seed=9)
    np.testing.assert_array_equal(a.samples, b.samples)
    assert a.T == 50 and np.isfinite(a.samples).all()


def test_window_keeps_parent_stddevs(lorenz_series):
    w = lorenz_series.window(10, 20)
    assert w.T == 10
    np.testing.assert_array_equal(w.component_stddevs, lorenz_series.component_stddevs)


def test_series_csv_roundtrip(tmp_path, lorenz_y):
    path = tmp_path / "y.csv"
    part = lorenz_y.window(0, 25)
    dynamics.write_series_csv(part, path, config={"seed": 1})
    text = path.read_text().splitlines()
    assert text[0].startswith("# config: ")
    assert text[2] == "t,y"
    back = dynamics.read_series_csv(path)
    np.testing.assert_array_equal(back.samples, part.samples)
    assert back.dt == part.dt
    np.testing.assert_array_equal(back.component_stddevs, part.component_stddevs)
