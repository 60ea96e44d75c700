"""Maximal Lyapunov exponents of reservoir dynamics.

Three exponents can be attached to an ESN: the undriven map (no input), the
input-driven training map, and the closed-loop prediction map. All are
estimated by evolving one tangent vector and renormalizing it every step,
which is the single-vector case of the QR method.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.sparse.linalg import LinearOperator

from .dynamics import TimeSeries
from .errors import ConfigurationError, DivergenceError
from .esn import Reservoir, TrainedReadout, lu_derivative, lu_features

LAMBDA_FLOOR = -50.0


class ExponentKind(enum.Enum):
    NO_INPUT = "no_input"
    DRIVEN = "driven"
    CLOSED_LOOP = "closed_loop"


@dataclass
class LyapunovEstimate:
    """Maximal exponent per discrete step."""

    lam: float
    steps_used: int
    converged: bool
    tol: float = 0.01
    running_sequence: np.ndarray | None = field(default=None, repr=False)

    def per_unit_time(self, dt: float) -> float:
        return self.lam / dt

    def write_running_csv(self, path) -> None:
        if self.running_sequence is None:
            raise ConfigurationError("no running sequence recorded")
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["step", "lambda"])
            for i, v in enumerate(self.running_sequence, start=1):
                w.writerow([i, repr(float(v))])


def jacobian_factor(res: Reservoir, r, u) -> LinearOperator:
    """Linear action delta -> D A delta of the driven map at state ``r``.

    D is diagonal with 1 - tanh(b)^2, b = A r + W_in u the local field.
    """
    r = np.asarray(r, dtype=float)
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if r.shape != (res.N,) or u.shape != (res.n,):
        raise ConfigurationError("state or input has the wrong dimension")
    b = res.A @ r + res.W_in @ u
    d = 1.0 - np.tanh(b) ** 2
    A = res.A

    def matvec(x):
        return d * (A @ np.ravel(x))

    def matmat(X):
        return d[:, None] * (A @ X)

    def rmatvec(x):
        return A.T @ (d * np.ravel(x))

    return LinearOperator((res.N, res.N), matvec=matvec, matmat=matmat, rmatvec=rmatvec, dtype=float)


def _split_half_converged(logs: np.ndarray, tol: float) -> bool:
    half = logs.size // 2
    if half == 0:
        return False
    return abs(logs[:half].mean() - logs[half:].mean()) < tol


def _finish(logs: np.ndarray, tol: float, keep_running: bool) -> LyapunovEstimate:
    lam = max(float(logs.mean()), LAMBDA_FLOOR)
    running = np.cumsum(logs) / np.arange(1, logs.size + 1) if keep_running else None
    return LyapunovEstimate(
        lam=lam,
        steps_used=int(logs.size),
        converged=_split_half_converged(logs, tol),
        tol=tol,
        running_sequence=running,
    )


def _direction(N: int, seed) -> np.ndarray:
    v = np.random.default_rng(seed).standard_normal(N)
    return v / np.linalg.norm(v)


def _random_state(N: int, seed) -> np.ndarray:
    child = np.random.SeedSequence(seed).spawn(1)[0]
    return np.random.default_rng(child).uniform(-0.5, 0.5, N)


def training_lyapunov_qr(
    res: Reservoir,
    inputs: TimeSeries | np.ndarray | None,
    kind: ExponentKind = ExponentKind.DRIVEN,
    steps: int = 2000,
    warmup: int = 500,
    tol: float = 0.01,
    max_steps: int = 100_000,
    r0=None,
    seed=0,
    keep_running: bool = False,
) -> LyapunovEstimate:
    """Maximal exponent of r -> tanh(A r + W_in u(t)) along a trajectory.

    ``NO_INPUT`` ignores ``inputs`` and uses u = 0; unless ``r0`` is given it
    starts from a random state drawn from ``seed``. The run length starts at
    ``steps`` and doubles until two halves of the run agree within ``tol``
    (or ``max_steps`` / the available input is reached).
    """
    if kind is ExponentKind.CLOSED_LOOP:
        raise ConfigurationError("use closed_loop_lyapunov for the prediction map")
    if not np.any(res.A):
        return LyapunovEstimate(lam=LAMBDA_FLOOR, steps_used=0, converged=True, tol=tol)

    if kind is ExponentKind.NO_INPUT:
        drive_terms = None
        available = max_steps + warmup
    else:
        if inputs is None:
            raise ConfigurationError("driven exponent needs an input series")
        u = inputs.samples if isinstance(inputs, TimeSeries) else np.atleast_2d(inputs)
        if u.shape[0] != res.n:
            raise ConfigurationError("input dimension does not match reservoir")
        drive_terms = res.W_in @ u
        available = u.shape[1]
    if available < warmup + 2:
        raise ConfigurationError("input too short for warmup")

    A = res.A
    if r0 is not None:
        r = np.asarray(r0, dtype=float).copy()
    elif kind is ExponentKind.NO_INPUT:
        # Without input the origin is a fixed point; start off it so that an
        # unstable origin leads onto the autonomous attractor.
        r = _random_state(res.N, seed)
    else:
        r = np.zeros(res.N)
    zero_drive = np.zeros(res.N)
    for t in range(warmup):
        r = np.tanh(A @ r + (zero_drive if drive_terms is None else drive_terms[:, t]))

    budget = min(max_steps, available - warmup)
    target = min(steps, budget)
    X = np.empty((res.N, 2))
    X[:, 0] = r
    X[:, 1] = _direction(res.N, seed)
    logs = []
    t = warmup
    while True:
        while len(logs) < target:
            Y = A @ X
            b = Y[:, 0] + (zero_drive if drive_terms is None else drive_terms[:, t])
            r_next = np.tanh(b)
            delta = (1.0 - r_next**2) * Y[:, 1]
            norm = np.linalg.norm(delta)
            if norm == 0.0:
                logs.append(LAMBDA_FLOOR)
                return _finish(np.array(logs), tol, keep_running)
            logs.append(np.log(norm))
            X[:, 0] = r_next
            X[:, 1] = delta / norm
            t += 1
        arr = np.array(logs)
        if _split_half_converged(arr, tol) or target >= budget:
            return _finish(arr, tol, keep_running)
        target = min(2 * target, budget)


def closed_loop_lyapunov(
    res: Reservoir,
    ro: TrainedReadout,
    r_init,
    steps: int = 4000,
    tol: float = 0.01,
    max_steps: int = 100_000,
    transient: int = 0,
    seed=0,
    keep_running: bool = False,
) -> LyapunovEstimate:
    """Maximal exponent of the prediction map r -> tanh(A r + W_in W_out f(r)).

    The tangent map is D (A + W_in W_out diag(f'(r))), where f' is 2 r_j on
    squared readout components and 1 elsewhere.
    """
    A, W_in, W_out, fmap = res.A, res.W_in, ro.W_out, ro.feature_map
    r = np.asarray(r_init, dtype=float).copy()
    for t in range(transient):
        r = np.tanh(A @ r + W_in @ (W_out @ lu_features(r, fmap)))
        if not np.all(np.isfinite(r)):
            raise DivergenceError("closed loop became non-finite", step=t)
    delta = _direction(res.N, seed)
    logs = []
    target = min(steps, max_steps)
    step = transient
    while True:
        while len(logs) < target:
            v = W_out @ lu_features(r, fmap)
            if not np.all(np.isfinite(v)):
                raise DivergenceError("closed-loop output became non-finite", step=step)
            b = A @ r + W_in @ v
            r_next = np.tanh(b)
            tangent = A @ delta + W_in @ (W_out @ (lu_derivative(r, fmap) * delta))
            delta = (1.0 - r_next**2) * tangent
            norm = np.linalg.norm(delta)
            if not (np.isfinite(norm) and np.all(np.isfinite(r_next))):
                raise DivergenceError("closed loop became non-finite", step=step)
            if norm == 0.0:
                logs.append(LAMBDA_FLOOR)
                return _finish(np.array(logs), tol, keep_running)
            logs.append(np.log(norm))
            delta /= norm
            r = r_next
            step += 1
        arr = np.array(logs)
        if _split_half_converged(arr, tol) or target >= max_steps:
            return _finish(arr, tol, keep_running)
        target = min(2 * target, max_steps)
