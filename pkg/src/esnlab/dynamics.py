"""Benchmark chaotic systems: integration, sampling, normalization.

Also provides a tangent-space Lyapunov spectrum estimator for the continuous
systems, used as a reference for the Lyapunov time of the inputs.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numba
import numpy as np

from .errors import ConfigurationError, DegenerateSeriesError, DivergenceError

__all__ = [
    "OdeSystem",
    "Trajectory",
    "TimeSeries",
    "lorenz63",
    "halvorsen",
    "zero_field",
    "system_by_name",
    "integrate",
    "sample",
    "normalize",
    "select_components",
    "lyapunov_spectrum",
    "gaussian_input",
    "generate_series",
    "write_series_csv",
    "read_series_csv",
]

_CODES = {"lorenz63": 0, "halvorsen": 1, "zero": 2}

# Largest Lyapunov exponents (1/time) used to convert steps to Lyapunov times.
REFERENCE_LAMBDA1 = {"lorenz63": 0.901, "halvorsen": 0.69}

COMPONENT_LABELS = ("x", "y", "z")


@dataclass(frozen=True)
class OdeSystem:
    """A three-dimensional autonomous ODE with named real coefficients."""

    name: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.name not in _CODES:
            raise ConfigurationError(f"unknown system {self.name!r}")
        for key, value in self.params.items():
            if not np.isfinite(value):
                raise ConfigurationError(f"parameter {key} must be finite")

    @property
    def dimension(self) -> int:
        return 3

    @property
    def lambda1(self) -> float:
        """Reference maximal Lyapunov exponent (1/time)."""
        try:
            return REFERENCE_LAMBDA1[self.name]
        except KeyError:
            raise ConfigurationError(f"no reference exponent for {self.name!r}") from None

    def _param_vector(self) -> np.ndarray:
        if self.name == "lorenz63":
            p = self.params
            return np.array([p["sigma"], p["rho"], p["beta"]], dtype=float)
        if self.name == "halvorsen":
            return np.array([self.params["a"]], dtype=float)
        return np.zeros(1)

    def jacobian_trace(self, x=None) -> float:
        """Trace of the Jacobian (constant for both benchmark systems)."""
        if self.name == "lorenz63":
            p = self.params
            return -(p["sigma"] + 1.0 + p["beta"])
        if self.name == "halvorsen":
            return -3.0 * self.params["a"]
        return 0.0


def lorenz63(sigma: float = 10.0, rho: float = 28.0, beta: float = 8.0 / 3.0) -> OdeSystem:
    return OdeSystem("lorenz63", {"sigma": sigma, "rho": rho, "beta": beta})


def halvorsen(a: float = 1.3) -> OdeSystem:
    return OdeSystem("halvorsen", {"a": a})


def zero_field() -> OdeSystem:
    """Vector field that is identically zero; a test hook."""
    return OdeSystem("zero", {})


def system_by_name(name: str) -> OdeSystem:
    name = name.lower()
    if name in ("lorenz", "lorenz63"):
        return lorenz63()
    if name == "halvorsen":
        return halvorsen()
    if name == "zero":
        return zero_field()
    raise ConfigurationError(f"unknown system {name!r}")


@dataclass(frozen=True)
class Trajectory:
    states: np.ndarray  # (length, 3)
    inner_step: float
    t_total: float

    def __len__(self):
        return self.states.shape[0]


@dataclass(frozen=True)
class TimeSeries:
    """An n x T sample matrix with sampling interval ``dt``.

    ``component_stddevs`` are the per-component standard deviations of the
    samples and are what prediction errors are measured against.
    """

    samples: np.ndarray
    dt: float
    component_stddevs: np.ndarray | None = None
    normalization_scale: float = 1.0
    labels: tuple[str, ...] = ()
    diverged: bool = False

    def __post_init__(self):
        samples = np.atleast_2d(np.asarray(self.samples, dtype=float))
        object.__setattr__(self, "samples", samples)
        if self.component_stddevs is None:
            object.__setattr__(self, "component_stddevs", samples.std(axis=1))
        else:
            object.__setattr__(
                self, "component_stddevs", np.asarray(self.component_stddevs, dtype=float)
            )
        if not self.labels:
            object.__setattr__(self, "labels", tuple(f"c{i}" for i in range(samples.shape[0])))

    @property
    def n(self) -> int:
        return self.samples.shape[0]

    @property
    def T(self) -> int:
        return self.samples.shape[1]

    def window(self, start: int, stop: int) -> "TimeSeries":
        """Columns ``start:stop``; keeps the stddevs of the parent series."""
        return replace(self, samples=self.samples[:, start:stop])


# ---------------------------------------------------------------------------
# numba kernels


@numba.njit(cache=True)
def _rhs(code, p, x, out):
    if code == 0:
        out[0] = p[0] * (x[1] - x[0])
        out[1] = x[0] * (p[1] - x[2]) - x[1]
        out[2] = x[0] * x[1] - p[2] * x[2]
    elif code == 1:
        a = p[0]
        out[0] = -a * x[0] - 4.0 * (x[1] + x[2]) - x[1] * x[1]
        out[1] = -a * x[1] - 4.0 * (x[2] + x[0]) - x[2] * x[2]
        out[2] = -a * x[2] - 4.0 * (x[0] + x[1]) - x[0] * x[0]
    else:
        out[0] = 0.0
        out[1] = 0.0
        out[2] = 0.0


@numba.njit(cache=True)
def _jac(code, p, x, J):
    J[:, :] = 0.0
    if code == 0:
        J[0, 0] = -p[0]
        J[0, 1] = p[0]
        J[1, 0] = p[1] - x[2]
        J[1, 1] = -1.0
        J[1, 2] = -x[0]
        J[2, 0] = x[1]
        J[2, 1] = x[0]
        J[2, 2] = -p[2]
    elif code == 1:
        a = p[0]
        J[0, 0] = -a
        J[0, 1] = -4.0 - 2.0 * x[1]
        J[0, 2] = -4.0
        J[1, 0] = -4.0
        J[1, 1] = -a
        J[1, 2] = -4.0 - 2.0 * x[2]
        J[2, 0] = -4.0 - 2.0 * x[0]
        J[2, 1] = -4.0
        J[2, 2] = -a


@numba.njit(cache=True)
def _rk4_path(code, p, x0, h, nsteps):
    out = np.empty((nsteps + 1, 3))
    x = x0.copy()
    out[0] = x
    k1 = np.empty(3)
    k2 = np.empty(3)
    k3 = np.empty(3)
    k4 = np.empty(3)
    for i in range(nsteps):
        _rhs(code, p, x, k1)
        _rhs(code, p, x + 0.5 * h * k1, k2)
        _rhs(code, p, x + 0.5 * h * k2, k3)
        _rhs(code, p, x + h * k3, k4)
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not (np.isfinite(x[0]) and np.isfinite(x[1]) and np.isfinite(x[2])):
            return out[: i + 1], i + 1
        out[i + 1] = x
    return out, -1


@numba.njit(cache=True)
def _tangent_rhs(code, p, x, Y, dx, dY, J):
    _rhs(code, p, x, dx)
    _jac(code, p, x, J)
    dY[:, :] = J @ Y


@numba.njit(cache=True)
def _spectrum_kernel(code, p, x0, h, nsteps, reortho):
    x = x0.copy()
    Y = np.eye(3)
    sums = np.zeros(3)
    n_blocks = nsteps // reortho
    running = np.empty((n_blocks, 3))
    J = np.empty((3, 3))
    k1 = np.empty(3)
    k2 = np.empty(3)
    k3 = np.empty(3)
    k4 = np.empty(3)
    K1 = np.empty((3, 3))
    K2 = np.empty((3, 3))
    K3 = np.empty((3, 3))
    K4 = np.empty((3, 3))
    for b in range(n_blocks):
        for _ in range(reortho):
            _tangent_rhs(code, p, x, Y, k1, K1, J)
            _tangent_rhs(code, p, x + 0.5 * h * k1, Y + 0.5 * h * K1, k2, K2, J)
            _tangent_rhs(code, p, x + 0.5 * h * k2, Y + 0.5 * h * K2, k3, K3, J)
            _tangent_rhs(code, p, x + h * k3, Y + h * K3, k4, K4, J)
            x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            Y = Y + (h / 6.0) * (K1 + 2.0 * K2 + 2.0 * K3 + K4)
        if not np.all(np.isfinite(Y)) or not np.all(np.isfinite(x)):
            return running[:b], b
        Q, R = np.linalg.qr(Y)
        for i in range(3):
            d = R[i, i]
            if d < 0.0:
                d = -d
                Q[:, i] = -Q[:, i]
            # Zero stretching (degenerate tangent flow) would give -inf.
            if d > 0.0:
                sums[i] += np.log(d)
        Y = Q.copy()
        running[b] = sums / ((b + 1) * reortho * h)
    return running, -1


# ---------------------------------------------------------------------------


def integrate(system: OdeSystem, x0, h: float, t_total: float) -> Trajectory:
    """Fixed-step RK4 trajectory of ``system`` from ``x0``.

    Raises DivergenceError with the offending step index if the state becomes
    non-finite.
    """
    x0 = np.asarray(x0, dtype=float)
    if h <= 0 or t_total < h:
        raise ConfigurationError("need h > 0 and t_total >= h")
    if x0.shape != (3,) or not np.all(np.isfinite(x0)):
        raise ConfigurationError("x0 must be a finite 3-vector")
    nsteps = int(np.floor(t_total / h + 1e-9))
    states, bad = _rk4_path(_CODES[system.name], system._param_vector(), x0, float(h), nsteps)
    if bad >= 0:
        raise DivergenceError(f"{system.name} integration became non-finite", step=bad)
    return Trajectory(states=states, inner_step=float(h), t_total=float(t_total))


def sample(traj: Trajectory, dt: float) -> TimeSeries:
    """Keep every (dt/h)-th state as a column of a 3 x T series."""
    ratio = dt / traj.inner_step
    stride = int(round(ratio))
    if stride < 1 or abs(ratio - stride) > 1e-9 * ratio:
        raise ConfigurationError(
            f"dt={dt} is not an integer multiple of the inner step {traj.inner_step}"
        )
    return TimeSeries(samples=traj.states[::stride].T.copy(), dt=float(dt), labels=COMPONENT_LABELS)


def normalize(series: TimeSeries) -> TimeSeries:
    """Divide every component by the stddev of the largest-variance component.

    No centering is applied; only a common scale, so relative amplitudes and
    offsets of the components are preserved.
    """
    if series.T < 2:
        raise DegenerateSeriesError("normalization needs at least two samples")
    scale = float(np.sqrt(series.samples.var(axis=1).max()))
    if scale == 0.0:
        raise DegenerateSeriesError("all components have zero variance")
    samples = series.samples / scale
    return replace(
        series,
        samples=samples,
        component_stddevs=samples.std(axis=1),
        normalization_scale=series.normalization_scale * scale,
    )


def select_components(series: TimeSeries, indices: Sequence[int]) -> TimeSeries:
    idx = [int(i) for i in indices]
    if not idx:
        raise ConfigurationError("need at least one component")
    for i in idx:
        if not 0 <= i < series.n:
            raise ConfigurationError(f"component index {i} out of range for n={series.n}")
    labels = tuple(series.labels[i] for i in idx) if series.labels else ()
    return replace(
        series,
        samples=series.samples[idx].copy(),
        component_stddevs=series.component_stddevs[idx].copy(),
        labels=labels,
    )


def lyapunov_spectrum(
    system: OdeSystem,
    x0,
    h: float = 0.01,
    t_total: float = 1000.0,
    reortho_interval: float = 1.0,
    transient: float = 0.0,
    return_running: bool = False,
):
    """Lyapunov spectrum (1/time, descending) by tangent-space evolution.

    The tangent basis is re-orthonormalized by QR every ``reortho_interval``
    time units. With ``return_running`` the running estimates after each
    re-orthonormalization are returned as well, as a (blocks, 3) array.
    """
    x0 = np.asarray(x0, dtype=float)
    code = _CODES[system.name]
    p = system._param_vector()
    if transient > 0:
        x0 = integrate(system, x0, h, transient).states[-1]
    reortho = max(1, int(round(reortho_interval / h)))
    nsteps = int(np.floor(t_total / h + 1e-9))
    if nsteps < reortho:
        raise ConfigurationError("t_total shorter than one re-orthonormalization interval")
    running, bad = _spectrum_kernel(code, p, x0, float(h), nsteps, reortho)
    if bad >= 0:
        raise DivergenceError("tangent integration became non-finite", step=bad * reortho)
    exps = np.sort(running[-1])[::-1]
    if return_running:
        return exps, running
    return exps


def gaussian_input(T: int, seed=None) -> TimeSeries:
    """1 x T series of i.i.d. standard normal samples, dt = 1."""
    if T < 1:
        raise ConfigurationError("T must be >= 1")
    rng = np.random.default_rng(seed)
    return TimeSeries(samples=rng.standard_normal((1, T)), dt=1.0, labels=("u",))


def generate_series(
    system: OdeSystem,
    dt: float,
    n_samples: int,
    seed=None,
    h: float = 0.01,
    burn_in: float = 100.0,
    normalized: bool = True,
) -> TimeSeries:
    """Sampled (and by default normalized) attractor series.

    The initial condition is drawn uniformly from [-1, 1]^3 and relaxed for
    ``burn_in`` time units before sampling starts.
    """
    rng = np.random.default_rng(seed)
    x0 = rng.uniform(-1.0, 1.0, size=3)
    if burn_in > 0:
        x0 = integrate(system, x0, h, burn_in).states[-1]
    # Round to the inner step count so that sampling stays commensurate.
    stride = int(round(dt / h))
    if stride < 1 or abs(dt / h - stride) > 1e-9 * (dt / h):
        raise ConfigurationError(f"dt={dt} is not an integer multiple of h={h}")
    t_total = (n_samples - 1) * stride * h if n_samples > 1 else h
    traj = integrate(system, x0, h, t_total)
    series = sample(traj, dt)
    series = series.window(0, n_samples)
    series = replace(series, component_stddevs=series.samples.std(axis=1))
    return normalize(series) if normalized else series


def write_series_csv(series: TimeSeries, path, config: dict | None = None) -> None:
    """CSV with header ``t,c0,c1,...``; one row per sample.

    ``config`` is echoed as a leading ``#`` comment line.
    """
    path = Path(path)
    with path.open("w", newline="") as fh:
        _write_series(series, fh, config)


def _write_series(series: TimeSeries, fh, config: dict | None = None) -> None:
    if config is not None:
        fh.write("# config: " + json.dumps(config, sort_keys=True) + "\n")
    meta = {
        "dt": series.dt,
        "labels": list(series.labels),
        "normalization_scale": series.normalization_scale,
        "component_stddevs": series.component_stddevs.tolist(),
    }
    fh.write("# series: " + json.dumps(meta, sort_keys=True) + "\n")
    writer = csv.writer(fh)
    writer.writerow(["t"] + list(series.labels))
    t = np.arange(series.T) * series.dt
    for k in range(series.T):
        writer.writerow([repr(float(t[k]))] + [repr(float(v)) for v in series.samples[:, k]])


def read_series_csv(path) -> TimeSeries:
    meta = {}
    rows = []
    with Path(path).open() as fh:
        for line in fh:
            if line.startswith("# series: "):
                meta = json.loads(line[len("# series: "):])
            elif line.startswith("#"):
                continue
            else:
                rows.append(line)
    reader = csv.reader(rows)
    header = next(reader)
    data = np.array([[float(v) for v in row] for row in reader if row], dtype=float)
    if data.size == 0:
        raise ConfigurationError(f"{path}: no samples")
    samples = data[:, 1:].T
    dt = meta.get("dt")
    if dt is None:
        dt = float(data[1, 0] - data[0, 0]) if data.shape[0] > 1 else 1.0
    return TimeSeries(
        samples=samples,
        dt=float(dt),
        component_stddevs=meta.get("component_stddevs"),
        normalization_scale=float(meta.get("normalization_scale", 1.0)),
        labels=tuple(meta.get("labels") or header[1:]),
    )
