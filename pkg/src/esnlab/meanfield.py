"""Large-N theory of the training Lyapunov exponent.

The local field of a neuron is modelled as a Gaussian with variance
``gA2 * sigma_r2`` from the recurrent sum plus an input term. For Gaussian
input weights and a recorded input sample u_k the input term is Gaussian with
variance ``sin2 * |u_k|^2``, so averaging over the recorded samples gives an
equal-weight Gaussian mixture. Moments of tanh under that mixture drive a
fixed-point map for the state variance, from which

    lambda_T = 0.5 * (ln gA2 + ln <(1 - r^2)^2>)

per step.
"""

from __future__ import annotations

import csv
import logging
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import optimize

from .dynamics import TimeSeries
from .errors import ConfigurationError

log = logging.getLogger(__name__)

LAMBDA_FLOOR = -50.0
GH_ORDER = 64
MAX_SAMPLES = 2000

_gh_x, _gh_w = np.polynomial.hermite.hermgauss(GH_ORDER)
_GH_NODES = np.sqrt(2.0) * _gh_x
_GH_WEIGHTS = _gh_w / np.sqrt(np.pi)
GH_SWITCH_STD = 0.25
_GRID_STEP = 0.05
_GRID = np.arange(-30.0, 30.0 + _GRID_STEP / 2, _GRID_STEP)
_GRID_SECH = 1.0 / np.cosh(_GRID)


def _squared_norms(input_samples, max_samples: int) -> np.ndarray:
    if input_samples is None:
        return np.zeros(0)
    if isinstance(input_samples, TimeSeries):
        u = input_samples.samples
    else:
        u = np.asarray(input_samples, dtype=float)
        if u.ndim == 1:
            u = u[None, :]
    u2 = np.sum(u**2, axis=0)
    if u2.size > max_samples:
        # Even thinning keeps the empirical distribution of a long series.
        idx = np.linspace(0, u2.size - 1, max_samples).round().astype(int)
        u2 = u2[idx]
    return u2


@dataclass(frozen=True, eq=False)
class MeanFieldInput:
    """Parameters of the local-field distribution.

    ``input_samples`` is an n x T array (or TimeSeries) of normalized inputs;
    only the squared norms of its columns are kept.
    """

    gA2: float
    sin2: float
    input_samples: object = None
    max_samples: int = MAX_SAMPLES

    def __post_init__(self):
        if self.gA2 < 0 or self.sin2 < 0:
            raise ConfigurationError("gA2 and sin2 must be >= 0")
        u2 = _squared_norms(self.input_samples, self.max_samples)
        if self.sin2 > 0 and u2.size == 0:
            raise ConfigurationError("input samples are required when sin2 > 0")
        object.__setattr__(self, "_u2", u2)
        n = 1
        if isinstance(self.input_samples, TimeSeries):
            n = self.input_samples.n
        elif self.input_samples is not None and np.ndim(self.input_samples) == 2:
            n = np.shape(self.input_samples)[0]
        object.__setattr__(self, "n", n)

    def with_params(self, gA2=None, sin2=None) -> "MeanFieldInput":
        new = object.__new__(MeanFieldInput)
        object.__setattr__(new, "gA2", self.gA2 if gA2 is None else gA2)
        object.__setattr__(new, "sin2", self.sin2 if sin2 is None else sin2)
        object.__setattr__(new, "input_samples", self.input_samples)
        object.__setattr__(new, "max_samples", self.max_samples)
        object.__setattr__(new, "_u2", self._u2)
        object.__setattr__(new, "n", self.n)
        return new

    def mixture_variances(self, sigma_r2: float) -> np.ndarray:
        rec = self.gA2 * sigma_r2
        if self.sin2 == 0 or self._u2.size == 0:
            return np.array([rec])
        return rec + self.sin2 * self._u2


@dataclass(frozen=True)
class FixedPointResult:
    sigma_r_star2: float
    iterations: int
    converged: bool
    d2_mean: float
    r4_mean: float


def _sech_moment(variances: np.ndarray, power: int) -> float:
    """Mixture mean of sech(b)**power for b ~ N(0, v), v in ``variances``.

    Gauss-Hermite nodes spread out with the standard deviation and stop
    resolving the unit-width sech peak once it is a few units wide; there a
    trapezoid rule on a fixed grid in b is used instead, which converges
    exponentially for these analytic, rapidly decaying integrands.
    """
    v = np.asarray(variances, dtype=float)
    std = np.sqrt(v)
    narrow = std <= GH_SWITCH_STD
    total = 0.0
    if np.any(narrow):
        vals = np.cosh(np.outer(std[narrow], _GH_NODES)) ** (-power)
        total += float(np.sum(vals @ _GH_WEIGHTS))
    if np.any(~narrow):
        wide = v[~narrow]
        dens = np.exp(-0.5 * _GRID[None, :] ** 2 / wide[:, None]) / np.sqrt(2.0 * np.pi * wide[:, None])
        total += float(np.sum(dens @ (_GRID_SECH ** power)) * _GRID_STEP)
    return total / v.size


def local_field_moments(mfi: MeanFieldInput, sigma_r2: float, power: int) -> float:
    """Mixture average of tanh(b)**power over the local-field density."""
    if sigma_r2 < 0:
        raise ConfigurationError("sigma_r2 must be >= 0")
    if power not in (2, 4):
        raise ConfigurationError("power must be 2 or 4")
    var = mfi.mixture_variances(sigma_r2)
    if not np.any(var > 0):
        return 0.0
    s2 = _sech_moment(var, 2)
    if power == 2:
        return 1.0 - s2
    return 1.0 - 2.0 * s2 + _sech_moment(var, 4)


def derivative_moment(mfi: MeanFieldInput, sigma_r2: float) -> float:
    """<(1 - tanh(b)^2)^2>, computed without cancellation."""
    var = mfi.mixture_variances(sigma_r2)
    if not np.any(var > 0):
        return 1.0
    return _sech_moment(var, 4)


def variance_map(mfi: MeanFieldInput, sigma_r2: float) -> float:
    return local_field_moments(mfi, sigma_r2, 2)


def iterate_variance_map(
    mfi: MeanFieldInput,
    tol: float = 1e-10,
    max_iter: int = 1000,
    sigma0: float = 0.25,
    accelerate: bool = True,
) -> FixedPointResult:
    """Fixed point of the state-variance map and the derived moments.

    With ``accelerate`` an Aitken extrapolation is applied whenever three
    successive iterates contract monotonically; this only shortens the
    approach to a stable fixed point and never targets an unstable one.
    """
    if tol <= 0:
        raise ConfigurationError("tol must be > 0")
    if mfi.sin2 == 0 and mfi.gA2 <= 1.0:
        # Zero is the stable fixed point; iterating would crawl near gA2 = 1.
        return FixedPointResult(0.0, 0, True, 1.0, 0.0)

    x = sigma0
    history = [x]
    converged = False
    it = 0
    while it < max_iter:
        x_new = variance_map(mfi, x)
        it += 1
        if abs(x_new - x) < tol:
            x = x_new
            converged = True
            break
        history.append(x_new)
        x = x_new
        if accelerate and len(history) >= 3:
            x0, x1, x2 = history[-3:]
            d1, d2 = x1 - x0, x2 - x1
            if d1 != 0 and 0 < d2 / d1 < 1:
                q = d2 / d1
                jump = x2 + d2 * q / (1 - q)
                if 0 <= jump < 1:
                    x = jump
                    history = [x]
    r4 = local_field_moments(mfi, x, 4)
    d2 = derivative_moment(mfi, x)
    return FixedPointResult(
        sigma_r_star2=float(x),
        iterations=it,
        converged=converged,
        d2_mean=float(d2),
        r4_mean=float(r4),
    )


def lyapunov_from_fixed_point(gA2: float, fp: FixedPointResult) -> float:
    if gA2 <= 0 or fp.d2_mean <= 0:
        return LAMBDA_FLOOR
    return max(0.5 * (np.log(gA2) + np.log(fp.d2_mean)), LAMBDA_FLOOR)


def meanfield_lyapunov(mfi: MeanFieldInput, tol: float = 1e-10, max_iter: int = 1000) -> float:
    """Training Lyapunov exponent per step from the converged moments."""
    if mfi.gA2 == 0:
        return LAMBDA_FLOOR
    fp = iterate_variance_map(mfi, tol=tol, max_iter=max_iter)
    if not fp.converged:
        warnings.warn(f"variance map did not converge for gA2={mfi.gA2}, sin2={mfi.sin2}", stacklevel=2)
    return lyapunov_from_fixed_point(mfi.gA2, fp)


@dataclass
class ZeroContour:
    n_sigma_in2: np.ndarray
    gA2: np.ndarray
    warnings: list

    def write_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["n_sigma_in2", "gA2_at_zero_crossing"])
            for a, b in zip(self.n_sigma_in2, self.gA2):
                w.writerow([repr(float(a)), repr(float(b))])


def zero_crossing(mfi: MeanFieldInput, gA2_range=(1e-3, 1e3), xtol: float = 1e-6) -> float | None:
    """gA2 at which lambda_T changes sign for fixed sin2, or None."""
    lo, hi = np.log(gA2_range[0]), np.log(gA2_range[1])

    def f(log_g):
        return meanfield_lyapunov(mfi.with_params(gA2=float(np.exp(log_g))))

    f_lo, f_hi = f(lo), f(hi)
    if not (f_lo < 0 < f_hi):
        return None
    root = optimize.brentq(f, lo, hi, xtol=xtol, rtol=1e-12)
    return float(np.exp(root))


def zero_contour(input_samples, gA2_range, nsin2_grid, max_samples: int = MAX_SAMPLES) -> ZeroContour:
    """lambda_T = 0 line in the (gA2, n*sigma_in^2) plane.

    For each value of n*sigma_in^2 a bracketing root search on ln(gA2) is
    run; values without a sign change over ``gA2_range`` are skipped with a
    warning.
    """
    base = MeanFieldInput(gA2=1.0, sin2=0.0, input_samples=input_samples, max_samples=max_samples)
    n = base.n
    xs, ys, notes = [], [], []
    for nsin2 in nsin2_grid:
        mfi = base.with_params(sin2=float(nsin2) / n)
        g = zero_crossing(mfi, gA2_range)
        if g is None:
            msg = f"no sign change of lambda_T for n*sigma_in2={nsin2:g} in gA2 range {gA2_range}"
            log.warning(msg)
            notes.append(msg)
            continue
        xs.append(float(nsin2))
        ys.append(g)
    return ZeroContour(np.array(xs), np.array(ys), notes)
