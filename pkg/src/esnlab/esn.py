"""Echo-state network: reservoir construction, open/closed loop, ridge readout."""

from __future__ import annotations

import json
import warnings
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy import linalg

from .dynamics import TimeSeries
from .errors import ConfigurationError, SingularReadoutError


@dataclass(frozen=True)
class EsnConfig:
    """Architecture and training parameters of one echo-state network.

    ``sigma_A2`` is the variance of the nonzero entries of A, ``sigma_in2``
    the variance of the input weights. Prediction quality depends on these
    mostly through ``s * N * sigma_A2`` and ``n * sigma_in2``; see
    :meth:`from_combined`.
    """

    N: int = 500
    n: int = 3
    s: float = 1.0
    sigma_A2: float = 1e-2 / 500
    sigma_in2: float = 0.1 / 3
    ridge_k: float = 1e-2
    warmup_steps: int = 1000
    train_steps: int = 2220
    seed: int = 0

    def __post_init__(self):
        if self.N < 1 or self.n < 1:
            raise ConfigurationError("N and n must be >= 1")
        if not 0.0 <= self.s <= 1.0:
            raise ConfigurationError("sparsity s must lie in [0, 1]")
        if self.sigma_A2 < 0 or self.sigma_in2 < 0 or self.ridge_k < 0:
            raise ConfigurationError("variances and ridge parameter must be >= 0")
        if self.warmup_steps < 0 or self.train_steps < 1:
            raise ConfigurationError("warmup_steps >= 0 and train_steps >= 1 required")
        if self.train_steps < self.N:
            warnings.warn(
                f"train_steps={self.train_steps} < N={self.N}: readout is underdetermined",
                stacklevel=2,
            )

    @classmethod
    def from_combined(cls, gA2: float, n_sigma_in2: float, **kwargs) -> "EsnConfig":
        """Build a config from sN*sigma_A^2 and n*sigma_in^2."""
        N = kwargs.get("N", cls.N)
        n = kwargs.get("n", cls.n)
        s = kwargs.get("s", cls.s)
        sigma_A2 = gA2 / (s * N) if s > 0 else 0.0
        return cls(sigma_A2=sigma_A2, sigma_in2=n_sigma_in2 / n, **kwargs)

    @property
    def gA2(self) -> float:
        return self.s * self.N * self.sigma_A2

    @property
    def n_sigma_in2(self) -> float:
        return self.n * self.sigma_in2


@dataclass(frozen=True, eq=False)
class Reservoir:
    A: np.ndarray
    W_in: np.ndarray
    N: int
    n: int
    s: float
    sigma_A2: float
    sigma_in2: float
    seed: int | None = None

    @property
    def gA2(self) -> float:
        return self.s * self.N * self.sigma_A2


@dataclass(frozen=True, eq=False)
class TrainedReadout:
    W_out: np.ndarray
    ridge_k: float
    feature_map: np.ndarray  # indices of squared components

    @property
    def n(self) -> int:
        return self.W_out.shape[0]


@dataclass(frozen=True, eq=False)
class Harvest:
    """Training states and aligned targets.

    Column t of ``R`` was produced from inputs up to u(t-1) and is paired with
    target u(t). ``r_last`` is the state after consuming the last target; it
    is where closed-loop prediction starts, and ``next_index`` is the input
    column that prediction step 0 should reproduce.
    """

    R: np.ndarray
    targets: np.ndarray
    warmup_used: int
    r_last: np.ndarray
    next_index: int


def build_reservoir(config: EsnConfig) -> Reservoir:
    """Random sparse Gaussian A and dense Gaussian W_in, fully seeded.

    The same seed gives the same normalized draws whatever the variances, so
    ladders over sigma_A2 or sigma_in2 rescale a fixed random structure.
    """
    rng = np.random.default_rng(config.seed)
    N, n = config.N, config.n
    mask = rng.random((N, N)) < config.s
    A = rng.standard_normal((N, N)) * np.sqrt(config.sigma_A2)
    A[~mask] = 0.0
    W_in = rng.standard_normal((N, n)) * np.sqrt(config.sigma_in2)
    return Reservoir(
        A=A,
        W_in=W_in,
        N=N,
        n=n,
        s=config.s,
        sigma_A2=config.sigma_A2,
        sigma_in2=config.sigma_in2,
        seed=config.seed,
    )


def _input_matrix(res: Reservoir, inputs) -> np.ndarray:
    u = inputs.samples if isinstance(inputs, TimeSeries) else np.atleast_2d(inputs)
    if u.shape[0] != res.n:
        raise ConfigurationError(f"input has {u.shape[0]} rows, reservoir expects n={res.n}")
    return u


def _initial_state(res: Reservoir, r0) -> np.ndarray:
    if r0 is None:
        return np.zeros(res.N)
    r0 = np.asarray(r0, dtype=float)
    if r0.shape != (res.N,) or not np.all(np.isfinite(r0)):
        raise ConfigurationError("r0 must be a finite N-vector")
    return r0


def drive(res: Reservoir, inputs, r0=None) -> np.ndarray:
    """Open-loop states r(t+1) = tanh(A r(t) + W_in u(t)).

    Returns an N x (T+1) array whose first column is ``r0``.
    """
    u = _input_matrix(res, inputs)
    r = _initial_state(res, r0)
    T = u.shape[1]
    drive_terms = res.W_in @ u
    states = np.empty((res.N, T + 1))
    states[:, 0] = r
    A = res.A
    for t in range(T):
        r = np.tanh(A @ r + drive_terms[:, t])
        states[:, t + 1] = r
    return states


def harvest(res: Reservoir, inputs, warmup: int, t_max: int, r0=None) -> Harvest:
    """Drive through ``warmup`` steps, then record ``t_max`` state columns."""
    u = _input_matrix(res, inputs)
    if warmup < 0 or t_max < 1:
        raise ConfigurationError("warmup >= 0 and t_max >= 1 required")
    if u.shape[1] < warmup + t_max + 1:
        raise ConfigurationError(
            f"input length {u.shape[1]} < warmup + t_max + 1 = {warmup + t_max + 1}"
        )
    states = drive(res, u[:, : warmup + t_max], r0)
    return Harvest(
        R=states[:, warmup : warmup + t_max],
        targets=u[:, warmup : warmup + t_max].copy(),
        warmup_used=warmup,
        r_last=states[:, warmup + t_max].copy(),
        next_index=warmup + t_max,
    )


def lu_feature_map(N: int) -> np.ndarray:
    """Default readout split: square the second half of the state indices."""
    return np.arange(N // 2, N)


def lu_features(r: np.ndarray, feature_map) -> np.ndarray:
    """Square the components listed in ``feature_map``; works on vectors or N x T."""
    out = np.array(r, dtype=float, copy=True)
    idx = np.asarray(feature_map, dtype=int)
    if idx.size:
        out[idx] = out[idx] ** 2
    return out


def lu_derivative(r: np.ndarray, feature_map) -> np.ndarray:
    d = np.ones_like(r, dtype=float)
    idx = np.asarray(feature_map, dtype=int)
    if idx.size:
        d[idx] = 2.0 * r[idx]
    return d


def ridge_solve(F: np.ndarray, Y: np.ndarray, k: float) -> np.ndarray:
    """W = Y F^T (F F^T + k I)^-1 through a Cholesky solve."""
    G = F @ F.T
    if k > 0:
        G[np.diag_indices_from(G)] += k
    rhs = F @ Y.T
    try:
        factor = linalg.cho_factor(G, lower=True, check_finite=True)
    except linalg.LinAlgError as exc:
        raise SingularReadoutError(
            "feature Gram matrix is singular; use a ridge parameter k > 0"
        ) from exc
    diag = np.abs(np.diag(factor[0]))
    if k == 0 and diag.min() <= 1e-8 * diag.max():
        raise SingularReadoutError("feature Gram matrix is singular; use a ridge parameter k > 0")
    return linalg.cho_solve(factor, rhs).T


def train_readout(h: Harvest, k: float, feature_map=None) -> TrainedReadout:
    """Ridge-regression readout on Lu features of the harvested states."""
    if k < 0:
        raise ConfigurationError("ridge parameter must be >= 0")
    if h.R.size == 0:
        raise ConfigurationError("empty harvest")
    if feature_map is None:
        feature_map = lu_feature_map(h.R.shape[0])
    feature_map = np.asarray(feature_map, dtype=int)
    if feature_map.size and (feature_map.min() < 0 or feature_map.max() >= h.R.shape[0]):
        raise ConfigurationError("feature_map indices out of range")
    F = lu_features(h.R, feature_map)
    W_out = ridge_solve(F, h.targets, k)
    return TrainedReadout(W_out=W_out, ridge_k=float(k), feature_map=feature_map)


def predict_closed_loop(
    res: Reservoir,
    ro: TrainedReadout,
    r_init,
    steps: int,
    dt: float = 1.0,
    return_states: bool = False,
):
    """Autonomous prediction, feeding the readout back as input.

    v(0) = W_out f(r_init); r(t+1) = tanh(A r(t) + W_in v(t));
    v(t+1) = W_out f(r(t+1)). A non-finite output truncates the series and
    sets its ``diverged`` flag.
    """
    if ro.W_out.shape != (res.n, res.N):
        raise ConfigurationError(f"W_out must be {res.n} x {res.N}")
    r = _initial_state(res, r_init)
    A, W_in, W_out, fmap = res.A, res.W_in, ro.W_out, ro.feature_map
    out = np.empty((res.n, steps))
    states = np.empty((res.N, steps)) if return_states else None
    diverged = False
    filled = steps
    for t in range(steps):
        if t > 0:
            r = np.tanh(A @ r + W_in @ v)
        v = W_out @ lu_features(r, fmap)
        if not np.all(np.isfinite(v)):
            diverged = True
            filled = t
            break
        out[:, t] = v
        if return_states:
            states[:, t] = r
    series = TimeSeries(samples=out[:, :filled], dt=dt, diverged=diverged)
    if return_states:
        return series, states[:, :filled]
    return series


@dataclass(frozen=True, eq=False)
class FittedEsn:
    """A reservoir together with its harvest and trained readout."""

    config: EsnConfig
    reservoir: Reservoir
    harvest: Harvest
    readout: TrainedReadout

    def predict(self, steps: int, dt: float = 1.0) -> TimeSeries:
        return predict_closed_loop(self.reservoir, self.readout, self.harvest.r_last, steps, dt)


def fit(config: EsnConfig, series: TimeSeries, reservoir: Reservoir | None = None, feature_map=None) -> FittedEsn:
    """Build (unless given), harvest and train in one call."""
    res = reservoir if reservoir is not None else build_reservoir(config)
    h = harvest(res, series, config.warmup_steps, config.train_steps)
    ro = train_readout(h, config.ridge_k, feature_map)
    return FittedEsn(config=config, reservoir=res, harvest=h, readout=ro)


# ---------------------------------------------------------------------------
# JSON serialization. Matrices are nested lists in row-major order.

SCHEMA_VERSION = 1


def reservoir_to_dict(res: Reservoir) -> dict:
    return {
        "schema": "esnlab.reservoir",
        "version": SCHEMA_VERSION,
        "N": res.N,
        "n": res.n,
        "s": res.s,
        "sigma_A2": res.sigma_A2,
        "sigma_in2": res.sigma_in2,
        "seed": res.seed,
        "A": res.A.tolist(),
        "W_in": res.W_in.tolist(),
    }


def reservoir_from_dict(d: dict) -> Reservoir:
    if d.get("schema") != "esnlab.reservoir":
        raise ConfigurationError("not a reservoir document")
    A = np.asarray(d["A"], dtype=float).reshape(d["N"], d["N"])
    W_in = np.asarray(d["W_in"], dtype=float).reshape(d["N"], d["n"])
    return Reservoir(
        A=A, W_in=W_in, N=d["N"], n=d["n"], s=d["s"],
        sigma_A2=d["sigma_A2"], sigma_in2=d["sigma_in2"], seed=d["seed"],
    )


def readout_to_dict(ro: TrainedReadout, config: EsnConfig | None = None) -> dict:
    d = {
        "schema": "esnlab.readout",
        "version": SCHEMA_VERSION,
        "ridge_k": ro.ridge_k,
        "feature_map": ro.feature_map.tolist(),
        "W_out": ro.W_out.tolist(),
    }
    if config is not None:
        d["config"] = asdict(config)
    return d


def readout_from_dict(d: dict) -> TrainedReadout:
    if d.get("schema") != "esnlab.readout":
        raise ConfigurationError("not a readout document")
    W_out = np.atleast_2d(np.asarray(d["W_out"], dtype=float))
    return TrainedReadout(
        W_out=W_out, ridge_k=float(d["ridge_k"]), feature_map=np.asarray(d["feature_map"], dtype=int)
    )


def save_json(doc: dict, path) -> None:
    # repr round-trips doubles exactly, which json does by default.
    Path(path).write_text(json.dumps(doc))


def load_json(path) -> dict:
    return json.loads(Path(path).read_text())
