import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from esnlab import analysis, dynamics, esn, meanfield
from esnlab.errors import ConfigurationError, SingularReadoutError


def _config(**kw):
    base = dict(N=50, n=3, train_steps=200, warmup_steps=10)
    base.update(kw)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return esn.EsnConfig(**base)


# -- construction -------------------------------------------------------------


def test_sparsity_zero_gives_zero_matrix():
    res = esn.build_reservoir(_config(s=0.0, sigma_A2=1.0))
    assert not np.any(res.A)


def test_same_seed_bit_identical():
    a = esn.build_reservoir(_config(seed=3))
    b = esn.build_reservoir(_config(seed=3))
    assert np.array_equal(a.A, b.A) and np.array_equal(a.W_in, b.W_in)
    c = esn.build_reservoir(_config(seed=4))
    assert not np.array_equal(a.A, c.A)


def test_connection_fraction_binomial():
    N, s = 200, 0.3
    res = esn.build_reservoir(_config(N=N, s=s, sigma_A2=1.0, train_steps=N))
    nonzero = int(np.count_nonzero(res.A))
    assert stats.binomtest(nonzero, N * N, s).pvalue > 1e-3


def test_nonzero_entry_variance():
    N, s, var = 200, 0.5, 3e-3  # s N^2 = 2e4
    res = esn.build_reservoir(_config(N=N, s=s, sigma_A2=var, train_steps=N))
    nz = res.A[res.A != 0]
    assert abs(nz.var() / var - 1.0) < 0.10


def test_row_energy_matches_combined_gain():
    cfg = esn.EsnConfig.from_combined(2.0, 1.0, N=1000, n=3, s=0.5, train_steps=1000)
    res = esn.build_reservoir(cfg)
    row_energy = np.mean(np.sum(res.A**2, axis=1))
    assert abs(row_energy / cfg.gA2 - 1.0) < 0.05
    assert cfg.gA2 == pytest.approx(2.0)
    assert cfg.n_sigma_in2 == pytest.approx(1.0)


def test_config_validation_and_warning():
    with pytest.raises(ConfigurationError):
        esn.EsnConfig(s=1.5)
    with pytest.raises(ConfigurationError):
        esn.EsnConfig(ridge_k=-1.0)
    with pytest.warns(UserWarning, match="underdetermined"):
        esn.EsnConfig(N=100, train_steps=50)


# -- open loop ----------------------------------------------------------------


def test_drive_zero_weights():
    res = esn.build_reservoir(_config(sigma_A2=0.0, sigma_in2=0.0))
    states = esn.drive(res, np.ones((3, 20)))
    assert states.shape == (50, 21)
    assert not np.any(states)


def test_drive_scalar_hand_iteration():
    a, w = 0.7, -1.3
    res = esn.Reservoir(A=np.array([[a]]), W_in=np.array([[w]]), N=1, n=1, s=1.0, sigma_A2=a * a, sigma_in2=w * w)
    u = np.array([0.5, -0.2, 1.0, 0.0, 0.3])
    expected = [0.1]
    for ut in u:
        expected.append(np.tanh(a * expected[-1] + w * ut))
    np.testing.assert_allclose(esn.drive(res, u[None, :], [0.1])[0], expected, rtol=0, atol=1e-15)


def test_drive_dimension_mismatch():
    res = esn.build_reservoir(_config())
    with pytest.raises(ConfigurationError):
        esn.drive(res, np.zeros((2, 5)))


@pytest.mark.slow
def test_echo_state_synchronization(lorenz_series):
    gA2, nsin2 = 0.5, 1.0
    mfi = meanfield.MeanFieldInput(gA2, nsin2 / 3, lorenz_series.samples[:, :2000])
    assert meanfield.meanfield_lyapunov(mfi) < -0.1
    u = lorenz_series.samples[:, :500]
    for seed in range(10):
        res = esn.build_reservoir(esn.EsnConfig.from_combined(gA2, nsin2, N=500, seed=seed))
        rng = np.random.default_rng(seed)
        a = esn.drive(res, u, rng.uniform(-1, 1, 500))[:, -1]
        b = esn.drive(res, u, rng.uniform(-1, 1, 500))[:, -1]
        assert np.max(np.abs(a - b)) <= 1e-6


@settings(max_examples=25, deadline=None)
@given(
    gA2=st.floats(min_value=1e-3, max_value=1e2),
    nsin2=st.floats(min_value=1e-3, max_value=1e2),
    seed=st.integers(min_value=0, max_value=2**32 - 1),
)
def test_states_in_open_interval(gA2, nsin2, seed):
    res = esn.build_reservoir(esn.EsnConfig.from_combined(gA2, nsin2, N=30, n=1, seed=seed, train_steps=30))
    u = np.random.default_rng(seed).standard_normal((1, 60))
    states = esn.drive(res, u)[:, 1:]
    assert np.all(np.abs(states) < 1.0) or np.all(np.abs(states) <= 1.0)
    assert np.all(np.isfinite(states))


def test_harvest_alignment(lorenz_series):
    res = esn.build_reservoir(_config(seed=2))
    h = esn.harvest(res, lorenz_series, 7, 30)
    states = esn.drive(res, lorenz_series.samples[:, :40])
    np.testing.assert_array_equal(h.R, states[:, 7:37])
    np.testing.assert_array_equal(h.targets, lorenz_series.samples[:, 7:37])
    np.testing.assert_array_equal(h.r_last, states[:, 37])
    assert h.next_index == 37 and h.warmup_used == 7


def test_harvest_smallest_case(lorenz_series):
    res = esn.build_reservoir(_config())
    r0 = np.full(50, 0.1)
    h = esn.harvest(res, lorenz_series, 0, 1, r0=r0)
    np.testing.assert_array_equal(h.R[:, 0], r0)
    np.testing.assert_array_equal(h.targets[:, 0], lorenz_series.samples[:, 0])


def test_harvest_zero_input_zero_states():
    res = esn.build_reservoir(_config(s=0.0))
    h = esn.harvest(res, np.zeros((3, 100)), 10, 50)
    assert not np.any(h.R)


def test_harvest_default_training_length():
    steps = int(round(200 / (0.901 * 0.1)))
    assert steps == 2220
    series = dynamics.generate_series(dynamics.lorenz63(), 0.1, 1000 + steps + 1, seed=0)
    res = esn.build_reservoir(esn.EsnConfig(N=500, train_steps=steps))
    h = esn.harvest(res, series, 1000, steps)
    assert h.R.shape == (500, 2220)


def test_harvest_too_short():
    res = esn.build_reservoir(_config())
    with pytest.raises(ConfigurationError):
        esn.harvest(res, np.zeros((3, 20)), 10, 10)


# -- readout ------------------------------------------------------------------


def test_lu_features():
    r = np.array([0.5, -0.5])
    np.testing.assert_array_equal(esn.lu_features(r, []), r)
    np.testing.assert_array_equal(esn.lu_features(r, [1]), [0.5, 0.25])
    np.testing.assert_array_equal(esn.lu_features(-r, [1]), [-0.5, 0.25])
    assert not np.array_equal(esn.lu_features(-r, [1]), -esn.lu_features(r, [1]))
    np.testing.assert_array_equal(esn.lu_features(r, [0, 1]), r**2)
    np.testing.assert_array_equal(esn.lu_feature_map(5), [2, 3, 4])


def _random_harvest(rng, N, T, n=2):
    R = np.tanh(rng.standard_normal((N, T)))
    Y = rng.standard_normal((n, T))
    return esn.Harvest(R=R, targets=Y, warmup_used=0, r_last=R[:, -1], next_index=T)


def test_zero_targets_zero_readout(rng):
    h = _random_harvest(rng, 5, 8)
    h = esn.Harvest(R=h.R, targets=np.zeros_like(h.targets), warmup_used=0, r_last=h.r_last, next_index=8)
    ro = esn.train_readout(h, 1e-2)
    assert np.all(ro.W_out == 0.0)


@pytest.mark.parametrize("N,T", [(5, 8), (20, 50)])
def test_ridge_matches_normal_equations(rng, N, T):
    h = _random_harvest(rng, N, T)
    k = 1e-2
    ro = esn.train_readout(h, k)
    F = esn.lu_features(h.R, ro.feature_map)
    oracle = np.linalg.solve(F @ F.T + k * np.eye(N), F @ h.targets.T).T
    assert np.linalg.norm(ro.W_out - oracle) / np.linalg.norm(oracle) <= 1e-10


def test_readout_norm_decreases_with_k(lorenz_series):
    res = esn.build_reservoir(esn.EsnConfig.from_combined(0.1, 1.0, N=100, train_steps=400))
    h = esn.harvest(res, lorenz_series, 100, 400)
    norms = [np.linalg.norm(esn.train_readout(h, k).W_out) for k in (1e-4, 1e-2, 1.0, 1e2, 1e4, 1e6)]
    assert all(a >= b for a, b in zip(norms, norms[1:]))
    assert norms[-1] < 1e-2 * norms[0]


def test_singular_without_ridge(rng):
    h = _random_harvest(rng, 10, 4)
    with pytest.raises(SingularReadoutError, match="k > 0"):
        esn.train_readout(h, 0.0)
    esn.train_readout(h, 1e-6)


def test_training_deterministic(lorenz_series):
    cfg = esn.EsnConfig.from_combined(0.3, 0.5, N=80, train_steps=300, warmup_steps=50, seed=11)
    a = esn.fit(cfg, lorenz_series).readout.W_out
    b = esn.fit(cfg, lorenz_series).readout.W_out
    assert np.array_equal(a, b)


def test_feature_map_validation(rng):
    h = _random_harvest(rng, 5, 8)
    with pytest.raises(ConfigurationError):
        esn.train_readout(h, 1e-2, feature_map=[7])
    with pytest.raises(ConfigurationError):
        esn.train_readout(h, -1.0)


# -- closed loop --------------------------------------------------------------


def test_closed_loop_zero_readout():
    res = esn.build_reservoir(_config(sigma_A2=0.01))
    ro = esn.TrainedReadout(W_out=np.zeros((3, 50)), ridge_k=1.0, feature_map=esn.lu_feature_map(50))
    pred = esn.predict_closed_loop(res, ro, np.zeros(50), 30, dt=0.1)
    assert pred.samples.shape == (3, 30) and not np.any(pred.samples)
    assert pred.dt == 0.1 and not pred.diverged


def test_handoff_matches_open_loop(lorenz_series):
    fitted = esn.fit(esn.EsnConfig.from_combined(0.1, 1.0, N=60, train_steps=300, warmup_steps=50), lorenz_series)
    pred, states = esn.predict_closed_loop(
        fitted.reservoir, fitted.readout, fitted.harvest.r_last, 2, return_states=True
    )
    # Feeding v(0) open loop reproduces the first closed-loop state.
    open_loop = esn.drive(fitted.reservoir, pred.samples[:, :1], fitted.harvest.r_last)[:, 1]
    np.testing.assert_array_equal(states[:, 1], open_loop)
    np.testing.assert_array_equal(states[:, 0], fitted.harvest.r_last)


def test_divergence_is_flagged_not_raised():
    res = esn.Reservoir(A=np.zeros((2, 2)), W_in=np.ones((2, 1)), N=2, n=1, s=1.0, sigma_A2=0.0, sigma_in2=1.0)
    ro = esn.TrainedReadout(W_out=np.array([[1e308, 1e308]]), ridge_k=0.0, feature_map=np.array([1]))
    with np.errstate(over="ignore", invalid="ignore"):
        pred = esn.predict_closed_loop(res, ro, np.array([0.9, 0.9]), 10)
    assert pred.diverged
    assert pred.T == 1


@pytest.mark.slow
def test_good_region_predicts_several_lyapunov_times():
    lam, dt = 0.901, 0.1
    H = int(np.ceil(15 / (lam * dt)))
    series = dynamics.generate_series(dynamics.lorenz63(), dt, 1000 + 2220 + H + 1, seed=0)
    cfg = esn.EsnConfig.from_combined(0.1, 1.0, N=500, seed=0)
    fitted = esn.fit(cfg, series)
    pred = fitted.predict(H, dt)
    start = fitted.harvest.next_index
    vt = analysis.valid_time(pred, series.window(start, start + H), 0.5, lam)
    assert vt.lyapunov_times >= 3.0


def test_json_roundtrip(tmp_path, lorenz_series):
    cfg = esn.EsnConfig.from_combined(0.1, 1.0, N=20, train_steps=100, warmup_steps=10, seed=5)
    fitted = esn.fit(cfg, lorenz_series)
    esn.save_json(esn.reservoir_to_dict(fitted.reservoir), tmp_path / "r.json")
    esn.save_json(esn.readout_to_dict(fitted.readout, cfg), tmp_path / "o.json")
    res = esn.reservoir_from_dict(esn.load_json(tmp_path / "r.json"))
    ro = esn.readout_from_dict(esn.load_json(tmp_path / "o.json"))
    assert np.array_equal(res.A, fitted.reservoir.A)
    assert np.array_equal(ro.W_out, fitted.readout.W_out)
    assert esn.load_json(tmp_path / "o.json")["config"]["seed"] == 5
    with pytest.raises(ConfigurationError):
        esn.reservoir_from_dict({"schema": "other"})
