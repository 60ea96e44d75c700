"""Scoring and diagnostics: valid time, rank, memory capacity, bifurcations."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import dynamics
from .dynamics import TimeSeries
from .errors import ConfigurationError
from .esn import (
    EsnConfig,
    Harvest,
    Reservoir,
    TrainedReadout,
    build_reservoir,
    drive,
    harvest,
    lu_feature_map,
    lu_features,
    predict_closed_loop,
    ridge_solve,
    train_readout,
)

DEFAULT_THRESHOLD = 0.5
DEFAULT_RANK_TOL = 1e-10


# ---------------------------------------------------------------------------
# prediction scoring


@dataclass(frozen=True)
class ValidTime:
    lyapunov_times: float
    steps: int
    failed_component: int | None = None
    diverged: bool = False
    censored: bool = False


def deviation(pred: TimeSeries, target: TimeSeries) -> np.ndarray:
    """|y - v| / sigma_y per component and step."""
    if pred.samples.shape != target.samples.shape:
        raise ConfigurationError(
            f"shape mismatch: prediction {pred.samples.shape} vs target {target.samples.shape}"
        )
    sd = np.asarray(target.component_stddevs, dtype=float)
    if np.any(sd <= 0):
        raise ConfigurationError("target has a component with zero standard deviation")
    return np.abs(target.samples - pred.samples) / sd[:, None]


def valid_time(
    pred: TimeSeries,
    target: TimeSeries,
    threshold: float = DEFAULT_THRESHOLD,
    lambda1: float = 0.901,
) -> ValidTime:
    """Time, in Lyapunov times, before any component deviates by > threshold.

    A diverged (truncated) prediction fails at its truncation point. If the
    error never crosses the threshold the full horizon is returned with
    ``censored`` set.
    """
    if threshold <= 0 or lambda1 <= 0:
        raise ConfigurationError("threshold and lambda1 must be positive")
    T = pred.T
    eps = deviation(pred, target.window(0, T)) if T else np.zeros((target.n, 0))
    over = eps > threshold
    hits = np.flatnonzero(over.any(axis=0))
    scale = target.dt * lambda1
    if hits.size:
        t = int(hits[0])
        comp = int(np.flatnonzero(over[:, t])[0])
        return ValidTime(t * scale, t, failed_component=comp, diverged=pred.diverged)
    if pred.diverged:
        return ValidTime(T * scale, T, failed_component=None, diverged=True)
    return ValidTime(T * scale, T, censored=True)


# ---------------------------------------------------------------------------
# rank


def numerical_rank(R: np.ndarray, rel_tol: float = DEFAULT_RANK_TOL) -> int:
    """Singular values of R above rel_tol times the largest one.

    This is also the rank of R R^T; going through the SVD of R avoids
    squaring the condition number.
    """
    R = np.asarray(R, dtype=float)
    if R.size == 0:
        raise ConfigurationError("empty matrix")
    sv = np.linalg.svd(R, compute_uv=False)
    if sv[0] == 0:
        return 0
    return int(np.sum(sv > rel_tol * sv[0]))


def gram_rank(R: np.ndarray, rel_tol: float = DEFAULT_RANK_TOL) -> int:
    """Rank from the eigenvalues of R R^T (sv^2 <-> eigenvalue)."""
    ev = np.linalg.eigvalsh(R @ R.T)
    top = ev.max()
    if top <= 0:
        return 0
    return int(np.sum(ev > rel_tol**2 * top))


# ---------------------------------------------------------------------------
# memory capacity


@dataclass
class MemoryCapacityResult:
    mc_total: float
    mc_per_delay: np.ndarray
    tau_max_used: int


def memory_capacity(
    res: Reservoir,
    T: int = 5000,
    tau_max: int | None = None,
    ridge_mc: float = 1e-8,
    seed=None,
    warmup: int = 500,
    train_fraction: float = 0.8,
) -> MemoryCapacityResult:
    """Linear memory capacity under i.i.d. standard normal input.

    For every delay tau a centered linear readout is fitted on the first
    ``train_fraction`` of the record to reconstruct u(t - tau); the capacity
    term is its squared correlation with u(t - tau) on the held-out rest.
    """
    if res.n != 1:
        raise ConfigurationError("memory capacity needs a scalar-input reservoir")
    if tau_max is None:
        tau_max = 2 * res.N
    if T <= tau_max:
        raise ConfigurationError(f"T={T} must exceed tau_max={tau_max}")
    u = dynamics.gaussian_input(warmup + T, seed).samples
    states = drive(res, u)  # column m was produced from u[m-1]
    # State index m in [warmup + tau_max, warmup + T] sees u up to m - 1.
    m = np.arange(warmup + tau_max, warmup + T + 1)
    X = states[:, m]
    taus = np.arange(1, tau_max + 1)
    Y = u[0][m[None, :] - taus[:, None]]
    n_train = int(train_fraction * m.size)
    if n_train < 2 or m.size - n_train < 2:
        raise ConfigurationError("record too short for a train/held-out split")
    Xtr, Xte = X[:, :n_train], X[:, n_train:]
    Ytr, Yte = Y[:, :n_train], Y[:, n_train:]
    x_mean = Xtr.mean(axis=1, keepdims=True)
    y_mean = Ytr.mean(axis=1, keepdims=True)
    W = ridge_solve(Xtr - x_mean, Ytr - y_mean, ridge_mc)
    Yhat = W @ (Xte - x_mean)
    per = np.array([_squared_corr(Yhat[i], Yte[i]) for i in range(tau_max)])
    return MemoryCapacityResult(mc_total=float(per.sum()), mc_per_delay=per, tau_max_used=tau_max)


def _squared_corr(a: np.ndarray, b: np.ndarray) -> float:
    a = a - a.mean()
    b = b - b.mean()
    denom = np.dot(a, a) * np.dot(b, b)
    if denom <= 0:
        return 0.0
    c = np.dot(a, b) ** 2 / denom
    return float(min(max(c, 0.0), 1.0))


# ---------------------------------------------------------------------------
# bifurcation scan


@dataclass
class BifurcationScan:
    """Long-run closed-loop output, component 0, per value of n*sigma_in^2."""

    parameter_values: np.ndarray
    attractor_samples: list
    zero_fixed_point: np.ndarray
    diverged: np.ndarray
    fixed_point_threshold: float
    ridge_k: float
    meta: dict = field(default_factory=dict)

    def threshold_index(self) -> int | None:
        """First ladder index whose output is not at the zero fixed point.

        None if the first ladder value is already off the fixed point or no
        value leaves it, i.e. no bifurcation is bracketed by the ladder.
        """
        off = np.flatnonzero(~self.zero_fixed_point)
        if off.size == 0 or off[0] == 0:
            return None
        return int(off[0])

    def threshold_bracket(self) -> tuple[float, float] | None:
        j = self.threshold_index()
        if j is None:
            return None
        return float(self.parameter_values[j - 1]), float(self.parameter_values[j])

    def bifurcates(self) -> bool:
        return self.threshold_index() is not None

    def write_csv(self, path, append: bool = False) -> None:
        mode = "a" if append else "w"
        with Path(path).open(mode, newline="") as fh:
            w = csv.writer(fh)
            if not append:
                w.writerow(["k", "n_sin2", "zero_fixed_point", "diverged", "sample_index", "v0"])
            for p, samples, fixed, div in zip(
                self.parameter_values, self.attractor_samples, self.zero_fixed_point, self.diverged
            ):
                for i, v in enumerate(samples):
                    w.writerow([repr(self.ridge_k), repr(float(p)), int(fixed), int(div), i, repr(float(v))])


Trainer = Callable[[Harvest, float, np.ndarray], TrainedReadout]


def zero_readout_trainer(h: Harvest, k: float, feature_map) -> TrainedReadout:
    """Trainer that ignores the data and returns W_out = 0."""
    return TrainedReadout(
        W_out=np.zeros((h.targets.shape[0], h.R.shape[0])), ridge_k=k, feature_map=np.asarray(feature_map)
    )


def bifurcation_scan(
    template: EsnConfig,
    series: TimeSeries,
    sin2_ladder: Sequence[float],
    k: float,
    gA2: float = 1e-2,
    horizon: int = 2000,
    transient: int = 2000,
    fixed_point_threshold: float = 1e-3,
    trainer: Trainer = train_readout,
    open_loop: bool = False,
    keep_samples: int | None = 200,
) -> BifurcationScan:
    """Closed-loop long-run output as n*sigma_in^2 runs along a ladder.

    The reservoir seed is fixed by ``template`` so the ladder rescales one
    random input matrix. With ``open_loop`` the reservoir is instead driven
    by the true continuation of ``series`` (no feedback) and the readout
    output recorded; this isolates the feedback loop as the cause of any
    bifurcation.
    """
    ladder = np.asarray(sin2_ladder, dtype=float)
    if np.any(np.diff(ladder) <= 0):
        raise ConfigurationError("ladder must be strictly increasing")
    n = series.n
    needed = template.warmup_steps + template.train_steps + 1
    if open_loop:
        needed += transient + horizon
    if series.T < needed:
        raise ConfigurationError(f"series too short: need {needed} samples")
    fixed = np.zeros(ladder.size, dtype=bool)
    diverged = np.zeros(ladder.size, dtype=bool)
    samples = []
    for idx, nsin2 in enumerate(ladder):
        cfg = EsnConfig.from_combined(
            gA2, nsin2,
            N=template.N, n=n, s=template.s, ridge_k=k,
            warmup_steps=template.warmup_steps, train_steps=template.train_steps, seed=template.seed,
        )
        res = build_reservoir(cfg)
        h = harvest(res, series, cfg.warmup_steps, cfg.train_steps)
        ro = trainer(h, k, lu_feature_map(res.N))
        if open_loop:
            start = h.next_index
            u = series.samples[:, start : start + transient + horizon]
            states = drive(res, u, h.r_last)[:, 1:]
            out = ro.W_out @ lu_features(states, ro.feature_map)
            v0 = out[0, transient:]
            div = False
        else:
            pred = predict_closed_loop(res, ro, h.r_last, transient + horizon + 1)
            div = pred.diverged
            v0 = pred.samples[0, transient + 1 :]
        diverged[idx] = div or v0.size < horizon
        fixed[idx] = (not diverged[idx]) and bool(np.max(np.abs(v0)) < fixed_point_threshold)
        if keep_samples is not None and v0.size > keep_samples:
            # Local extrema carry the attractor shape in a bifurcation diagram.
            v0 = _turning_points(v0, keep_samples)
        samples.append(np.asarray(v0))
    return BifurcationScan(
        parameter_values=ladder,
        attractor_samples=samples,
        zero_fixed_point=fixed,
        diverged=diverged,
        fixed_point_threshold=fixed_point_threshold,
        ridge_k=k,
        meta={"gA2": gA2, "N": template.N, "seed": template.seed, "open_loop": open_loop},
    )


def _turning_points(v: np.ndarray, limit: int) -> np.ndarray:
    inner = v[1:-1]
    mask = ((inner > v[:-2]) & (inner > v[2:])) | ((inner < v[:-2]) & (inner < v[2:]))
    ext = inner[mask]
    if ext.size == 0:
        ext = v[-limit:]
    return ext[-limit:]


# ---------------------------------------------------------------------------
# simple ESN


def build_simple_esn(N: int, alpha: float, n: int, sigma_in2: float, seed=None) -> Reservoir:
    """Diagonal reservoir with A_ii = alpha * i / N, i = 1..N."""
    if N < 1 or alpha < 0:
        raise ConfigurationError("need N >= 1 and alpha >= 0")
    rng = np.random.default_rng(seed)
    diag = alpha * np.arange(1, N + 1) / N
    W_in = rng.standard_normal((N, n)) * np.sqrt(sigma_in2)
    return Reservoir(
        A=np.diag(diag),
        W_in=W_in,
        N=N,
        n=n,
        s=1.0 / N,
        sigma_A2=float(np.mean(diag**2)),
        sigma_in2=sigma_in2,
        seed=seed,
    )
