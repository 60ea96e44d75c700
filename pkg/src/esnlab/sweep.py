"""Trial-averaged phase diagrams over (sN sigma_A^2, n sigma_in^2)."""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
import math
import os
import sys
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from skimage import measure

from . import analysis, dynamics, esn, lyapunov, meanfield
from ._version import __version__
from .errors import ConfigurationError

log = logging.getLogger(__name__)

METRICS = ("valid_time", "lambda_qr", "lambda_mf", "lambda_noinput", "rank", "mc", "zero_fp")
WORKERS_ENV = "ESNLAB_WORKERS"
_MASK64 = (1 << 64) - 1


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def derive_seed(base_seed: int, i: int, j: int, trial: int) -> int:
    """64-bit seed for one trial; depends only on its coordinates."""
    x = _splitmix64(int(base_seed) & _MASK64)
    for v in (i, j, trial):
        x = _splitmix64(x ^ (int(v) & _MASK64))
    return x


def log_axis(lo: float, hi: float, num: int) -> tuple:
    return tuple(float(v) for v in np.logspace(math.log10(lo), math.log10(hi), num))


@dataclass(frozen=True)
class SweepSpec:
    """Grid, task and scoring settings of a phase-diagram sweep.

    The first axis is sN*sigma_A^2 for random reservoirs and alpha for the
    diagonal ("simple") reservoir. The template supplies N, s, ridge_k and
    warmup_steps; the training length is ``train_lt`` Lyapunov times.
    """

    gA2_axis: tuple = log_axis(1e-6, 1e2, 12)
    nsin2_axis: tuple = log_axis(1e-5, 1e2, 12)
    trials: int = 10
    template: esn.EsnConfig = esn.EsnConfig(N=200, n=3, train_steps=2220)
    task: str = "full"
    component: int = 1
    system: str = "lorenz63"
    base_seed: int = 0
    metrics: tuple = ("valid_time", "lambda_mf", "rank")
    architecture: str = "random"
    dt: float = 0.1
    h: float = 0.01
    burn_in: float = 100.0
    threshold: float = 0.5
    horizon_lt: float = 15.0
    train_lt: float = 200.0
    rank_tol: float = 1e-10
    qr_steps: int = 2000
    qr_tol: float = 0.01
    mc_T: int = 5000
    mc_tau_max: int | None = None
    mc_ridge: float = 1e-8
    fp_transient: int = 2000
    fp_horizon: int = 2000
    fp_threshold: float = 1e-3

    def __post_init__(self):
        for name in ("gA2_axis", "nsin2_axis"):
            ax = np.asarray(getattr(self, name), dtype=float)
            if ax.ndim != 1 or ax.size == 0:
                raise ConfigurationError(f"{name} must be a non-empty 1-D grid")
            if np.any(ax <= 0) or np.any(np.diff(ax) <= 0):
                raise ConfigurationError(f"{name} must be positive and strictly increasing")
            object.__setattr__(self, name, tuple(float(v) for v in ax))
        if self.trials < 1:
            raise ConfigurationError("trials must be >= 1")
        if self.task not in ("full", "partial"):
            raise ConfigurationError("task must be 'full' or 'partial'")
        if self.architecture not in ("random", "simple"):
            raise ConfigurationError("architecture must be 'random' or 'simple'")
        unknown = set(self.metrics) - set(METRICS)
        if unknown:
            raise ConfigurationError(f"unknown metrics {sorted(unknown)}")
        if "mc" in self.metrics and self.input_dim != 1:
            raise ConfigurationError("memory capacity needs a single-component (partial) task")
        object.__setattr__(self, "metrics", tuple(self.metrics))
        dynamics.system_by_name(self.system)

    @property
    def ode(self) -> dynamics.OdeSystem:
        return dynamics.system_by_name(self.system)

    @property
    def lambda1(self) -> float:
        return self.ode.lambda1

    @property
    def input_dim(self) -> int:
        return 1 if self.task == "partial" else 3

    @property
    def train_steps(self) -> int:
        return int(round(self.train_lt / (self.lambda1 * self.dt)))

    @property
    def horizon_steps(self) -> int:
        return int(math.ceil(self.horizon_lt / (self.lambda1 * self.dt) - 1e-9))

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.gA2_axis), len(self.nsin2_axis)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["gA2_axis"] = list(self.gA2_axis)
        d["nsin2_axis"] = list(self.nsin2_axis)
        d["metrics"] = list(self.metrics)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SweepSpec":
        d = dict(d)
        if "template" in d and isinstance(d["template"], dict):
            d["template"] = esn.EsnConfig(**d["template"])
        for key in ("gA2_axis", "nsin2_axis", "metrics"):
            if key in d:
                d[key] = tuple(d[key])
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigurationError(f"unknown sweep keys {sorted(unknown)}")
        return cls(**d)


# ---------------------------------------------------------------------------
# one trial


def _trial_series(spec: SweepSpec, seed: int) -> dynamics.TimeSeries:
    total = spec.template.warmup_steps + spec.train_steps + spec.horizon_steps + 1
    series = dynamics.generate_series(
        spec.ode, spec.dt, total, seed=seed, h=spec.h, burn_in=spec.burn_in
    )
    if spec.task == "partial":
        series = dynamics.select_components(series, [spec.component])
    return series


def _trial_reservoir(spec: SweepSpec, i: int, j: int, seed: int) -> esn.Reservoir:
    t = spec.template
    n = spec.input_dim
    nsin2 = spec.nsin2_axis[j]
    if spec.architecture == "simple":
        return analysis.build_simple_esn(t.N, spec.gA2_axis[i], n, nsin2 / n, seed=seed)
    cfg = esn.EsnConfig.from_combined(
        spec.gA2_axis[i], nsin2,
        N=t.N, n=n, s=t.s, ridge_k=t.ridge_k, warmup_steps=t.warmup_steps,
        train_steps=spec.train_steps, seed=seed,
    )
    return esn.build_reservoir(cfg)


def run_cell(spec: SweepSpec, i: int, j: int, trial: int) -> dict:
    """Metrics of one trial in grid cell (i, j); failures are recorded, not raised."""
    ni, nj = spec.shape
    if not (0 <= i < ni and 0 <= j < nj and 0 <= trial):
        raise ConfigurationError(f"cell ({i}, {j}, {trial}) out of range")
    seed = derive_seed(spec.base_seed, i, j, trial)
    record = {"i": i, "j": j, "trial": trial, "seed": seed, "error": ""}
    try:
        record.update(_run_trial(spec, i, j, seed))
    except Exception as exc:  # noqa: BLE001 - per-trial failures are data
        record["error"] = f"{type(exc).__name__}: {exc}"
    return record


def _run_trial(spec: SweepSpec, i: int, j: int, seed: int) -> dict:
    out = {}
    series = _trial_series(spec, seed)
    res = _trial_reservoir(spec, i, j, _splitmix64(seed))
    warmup = spec.template.warmup_steps
    h = esn.harvest(res, series, warmup, spec.train_steps)
    if "valid_time" in spec.metrics or "zero_fp" in spec.metrics:
        ro = esn.train_readout(h, spec.template.ridge_k)
    if "valid_time" in spec.metrics:
        pred = esn.predict_closed_loop(res, ro, h.r_last, spec.horizon_steps, spec.dt)
        truth = series.window(h.next_index, h.next_index + spec.horizon_steps)
        vt = analysis.valid_time(pred, truth, spec.threshold, spec.lambda1)
        out["valid_time"] = 0.0 if vt.diverged else vt.lyapunov_times
        out["diverged"] = bool(vt.diverged)
        out["censored"] = bool(vt.censored)
    if "zero_fp" in spec.metrics:
        long_run = esn.predict_closed_loop(res, ro, h.r_last, spec.fp_transient + spec.fp_horizon)
        tail = long_run.samples[0, spec.fp_transient:]
        collapsed = (not long_run.diverged) and bool(np.max(np.abs(tail)) < spec.fp_threshold)
        out["zero_fp"] = 1.0 if collapsed else 0.0
    train_input = series.samples[:, : warmup + spec.train_steps]
    if "lambda_mf" in spec.metrics or "lambda_noinput" in spec.metrics:
        if spec.architecture == "random":
            gA2 = spec.gA2_axis[i]
            sin2 = spec.nsin2_axis[j] / spec.input_dim
            if "lambda_mf" in spec.metrics:
                mfi = meanfield.MeanFieldInput(gA2, sin2, train_input[:, warmup:])
                out["lambda_mf"] = meanfield.meanfield_lyapunov(mfi)
            if "lambda_noinput" in spec.metrics:
                out["lambda_noinput"] = meanfield.meanfield_lyapunov(meanfield.MeanFieldInput(gA2, 0.0))
        else:
            out["lambda_mf"] = out["lambda_noinput"] = float("nan")
    if "lambda_qr" in spec.metrics:
        est = lyapunov.training_lyapunov_qr(
            res, train_input, lyapunov.ExponentKind.DRIVEN,
            steps=spec.qr_steps, warmup=min(warmup, 500), tol=spec.qr_tol, seed=seed,
        )
        out["lambda_qr"] = est.lam
    if "rank" in spec.metrics:
        out["rank"] = analysis.numerical_rank(h.R, spec.rank_tol)
    if "mc" in spec.metrics:
        mc = analysis.memory_capacity(
            res, T=spec.mc_T, tau_max=spec.mc_tau_max, ridge_mc=spec.mc_ridge, seed=seed
        )
        out["mc"] = mc.mc_total
    return out


# ---------------------------------------------------------------------------
# sweeps and reduction


@dataclass
class PhaseDiagram:
    """Per-cell trial statistics; arrays are indexed [gA2 index, nsin2 index]."""

    spec: SweepSpec
    records: list
    means: dict = field(default_factory=dict)
    stds: dict = field(default_factory=dict)
    diverged_frac: np.ndarray | None = None
    trials_completed: np.ndarray | None = None
    errors: dict = field(default_factory=dict)
    wall_clock: float = 0.0

    @classmethod
    def from_records(cls, spec: SweepSpec, records: Iterable[dict], wall_clock: float = 0.0) -> "PhaseDiagram":
        records = sorted(records, key=lambda r: (r["i"], r["j"], r["trial"]))
        shape = spec.shape
        grouped: dict[tuple[int, int], list] = {}
        for r in records:
            grouped.setdefault((r["i"], r["j"]), []).append(r)
        means = {m: np.full(shape, np.nan) for m in spec.metrics}
        stds = {m: np.full(shape, np.nan) for m in spec.metrics}
        div = np.full(shape, np.nan)
        done = np.zeros(shape, dtype=int)
        errors = {}
        for (i, j), rs in grouped.items():
            ok = [r for r in rs if not r.get("error")]
            bad = [r["error"] for r in rs if r.get("error")]
            if bad:
                errors[(i, j)] = bad
            done[i, j] = len(ok)
            if not ok:
                continue
            for m in spec.metrics:
                vals = np.array([r[m] for r in ok], dtype=float)
                mean = vals.sum() / vals.size
                means[m][i, j] = mean
                stds[m][i, j] = np.sqrt(((vals - mean) ** 2).sum() / vals.size)
            if "valid_time" in spec.metrics:
                div[i, j] = np.mean([bool(r.get("diverged")) for r in ok])
            else:
                div[i, j] = 0.0
        return cls(spec, records, means, stds, div, done, errors, wall_clock)

    def mean(self, metric: str) -> np.ndarray:
        return self.means[metric]

    def std(self, metric: str) -> np.ndarray:
        return self.stds[metric]

    @property
    def gA2_axis(self) -> np.ndarray:
        return np.asarray(self.spec.gA2_axis)

    @property
    def nsin2_axis(self) -> np.ndarray:
        return np.asarray(self.spec.nsin2_axis)

    def write_csv(self, path) -> None:
        """One row per cell: gA2,n_sin2,<metric>_mean,<metric>_std,...,diverged_frac,trials."""
        with Path(path).open("w", newline="") as fh:
            fh.write("# config: " + json.dumps(self.spec.to_dict(), sort_keys=True) + "\n")
            w = csv.writer(fh)
            header = ["gA2", "n_sin2"]
            for m in self.spec.metrics:
                header += [f"{m}_mean", f"{m}_std"]
            header += ["diverged_frac", "trials"]
            w.writerow(header)
            for i, g in enumerate(self.spec.gA2_axis):
                for j, s in enumerate(self.spec.nsin2_axis):
                    row = [repr(g), repr(s)]
                    for m in self.spec.metrics:
                        row += [repr(float(self.means[m][i, j])), repr(float(self.stds[m][i, j]))]
                    row += [repr(float(self.diverged_frac[i, j])), int(self.trials_completed[i, j])]
                    w.writerow(row)

    def write_manifest(self, path, extra: dict | None = None) -> None:
        doc = {
            "spec": self.spec.to_dict(),
            "code_version": __version__,
            "wall_clock_seconds": self.wall_clock,
            "records": len(self.records),
            "errors": {f"{i},{j}": e for (i, j), e in self.errors.items()},
        }
        if extra:
            doc.update(extra)
        Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True))

    def write_records_csv(self, path) -> None:
        keys = ["i", "j", "trial", "seed"] + list(self.spec.metrics) + ["diverged", "censored", "error"]
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(keys)
            for r in self.records:
                w.writerow([r.get(k, "") for k in keys])


@dataclass
class GridData:
    """Cell means read back from a phase-diagram CSV."""

    gA2_axis: np.ndarray
    nsin2_axis: np.ndarray
    means: dict
    stds: dict
    config: dict

    def mean(self, metric: str) -> np.ndarray:
        return self.means[metric]


def read_phase_csv(path) -> GridData:
    config = {}
    lines = []
    with Path(path).open() as fh:
        for line in fh:
            if line.startswith("# config: "):
                config = json.loads(line[len("# config: "):])
            elif not line.startswith("#"):
                lines.append(line)
    reader = csv.DictReader(lines)
    rows = list(reader)
    if not rows:
        raise ConfigurationError(f"{path}: no rows")
    g = np.array(sorted({float(r["gA2"]) for r in rows}))
    s = np.array(sorted({float(r["n_sin2"]) for r in rows}))
    metrics = [c[: -len("_mean")] for c in reader.fieldnames if c.endswith("_mean")]
    means = {m: np.full((g.size, s.size), np.nan) for m in metrics}
    stds = {m: np.full((g.size, s.size), np.nan) for m in metrics}
    gi = {v: k for k, v in enumerate(g)}
    si = {v: k for k, v in enumerate(s)}
    for r in rows:
        i, j = gi[float(r["gA2"])], si[float(r["n_sin2"])]
        for m in metrics:
            means[m][i, j] = float(r[f"{m}_mean"])
            stds[m][i, j] = float(r[f"{m}_std"])
    return GridData(g, s, means, stds, config)


def _task_list(spec: SweepSpec, trials: Sequence[int] | None) -> list[tuple[int, int, int]]:
    trial_ids = range(spec.trials) if trials is None else trials
    ni, nj = spec.shape
    return [(i, j, t) for i in range(ni) for j in range(nj) for t in trial_ids]


def _run_task(args):
    spec, i, j, t = args
    return run_cell(spec, i, j, t)


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def _report(done: int, total: int) -> None:
    step = max(1, total // 10)
    if done % step == 0 or done == total:
        print(f"  {done}/{total} trials", file=sys.stderr, flush=True)


def run_records(
    spec: SweepSpec,
    trials: Sequence[int] | None = None,
    workers: int | None = None,
    progress: bool = False,
) -> list[dict]:
    """Raw per-trial records for ``trials`` (default all) of every cell."""
    workers = default_workers() if workers is None else workers
    tasks = _task_list(spec, trials)
    records = []
    if workers <= 1:
        for k, (i, j, t) in enumerate(tasks):
            records.append(run_cell(spec, i, j, t))
            if progress:
                _report(k + 1, len(tasks))
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for k, rec in enumerate(pool.map(_run_task, [(spec, *x) for x in tasks], chunksize=4)):
                records.append(rec)
                if progress:
                    _report(k + 1, len(tasks))
    return records


def run_sweep(
    spec: SweepSpec,
    workers: int | None = None,
    trials: Sequence[int] | None = None,
    progress: bool = False,
) -> PhaseDiagram:
    """Run every (cell, trial) and reduce to per-cell means and stds."""
    start = time.perf_counter()
    records = run_records(spec, trials=trials, workers=workers, progress=progress)
    return PhaseDiagram.from_records(spec, records, wall_clock=time.perf_counter() - start)


def merge(spec: SweepSpec, *record_sets: Iterable[dict]) -> PhaseDiagram:
    """Combine record sets computed separately (e.g. split trials)."""
    combined = [r for rs in record_sets for r in rs]
    return PhaseDiagram.from_records(spec, combined)


# ---------------------------------------------------------------------------
# contours


def extract_contour(diagram, metric: str, level: float) -> list[np.ndarray]:
    """Level set of a cell-mean field by marching squares on the log-log grid.

    Returns a list of polylines, each an (m, 2) array of (gA2, n_sin2)
    vertices; empty (with a warning) if ``level`` is outside the data range.
    """
    z = np.asarray(diagram.mean(metric), dtype=float)
    g = np.log10(np.asarray(diagram.gA2_axis, dtype=float))
    s = np.log10(np.asarray(diagram.nsin2_axis, dtype=float))
    return contour_lines(z, g, s, level)


def contour_lines(z: np.ndarray, log_g: np.ndarray, log_s: np.ndarray, level: float) -> list[np.ndarray]:
    finite = np.isfinite(z)
    if not finite.any():
        warnings.warn("no finite values to contour", stacklevel=2)
        return []
    lo, hi = np.nanmin(z), np.nanmax(z)
    if not lo < level < hi:
        warnings.warn(f"level {level} outside data range [{lo}, {hi}]", stacklevel=2)
        return []
    if z.shape[0] < 2 or z.shape[1] < 2:
        return []
    filled = np.where(finite, z, lo)
    lines = measure.find_contours(filled, level, mask=finite if not finite.all() else None)
    out = []
    rows = np.arange(z.shape[0])
    cols = np.arange(z.shape[1])
    for line in lines:
        lg = np.interp(line[:, 0], rows, log_g)
        ls = np.interp(line[:, 1], cols, log_s)
        out.append(np.column_stack([10.0**lg, 10.0**ls]))
    return out


def write_contour_csv(lines: list[np.ndarray], path, metric: str = "", level: float | None = None) -> None:
    with Path(path).open("w", newline="") as fh:
        if metric:
            fh.write(f"# contour: metric={metric} level={level}\n")
        w = csv.writer(fh)
        w.writerow(["polyline", "gA2", "n_sin2"])
        for k, line in enumerate(lines):
            for g, s in line:
                w.writerow([k, repr(float(g)), repr(float(s))])
