"""Command-line entry point: ``esnlab <command> [options]``.

Settings come from built-in defaults, then ``--config FILE`` (YAML or JSON),
then flags. Each command echoes the resolved config into every file it
writes. A prediction that fails is a result, not an error: the exit status is
0 whenever the computation itself completed.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import analysis, config as config_mod, dynamics, esn, lyapunov, meanfield, plotting, sweep
from ._version import __version__
from .errors import EsnLabError

log = logging.getLogger("esnlab")

_COMPONENT_NAMES = {"x": 0, "y": 1, "z": 2}


def _components(text):
    if text is None:
        return None
    out = []
    for part in str(text).split(","):
        part = part.strip().lower()
        if not part:
            continue
        out.append(_COMPONENT_NAMES[part] if part in _COMPONENT_NAMES else int(part))
    return out


def _floats(text):
    return [float(v) for v in str(text).split(",") if v.strip()]


def _add(parser, flag, key, type=None, help=None, **kw):
    parser.add_argument(flag, dest=key, type=type, default=None, help=help, **kw)


def _common(parser):
    parser.add_argument("--config", help="YAML/JSON config file")
    parser.add_argument("--out", "-o", help="output path (or prefix)")


def _dynamics_flags(p):
    _add(p, "--system", "dynamics.system", str, "lorenz63 or halvorsen")
    _add(p, "--dt", "dynamics.dt", float, "sampling interval")
    _add(p, "--h", "dynamics.h", float, "RK4 inner step")
    _add(p, "--burn-in", "dynamics.burn_in", float, "discarded transient (time units)")
    _add(p, "--data-seed", "dynamics.seed", int, "seed of the initial condition")


def _esn_flags(p):
    _add(p, "--N", "esn.N", int, "reservoir size")
    _add(p, "--s", "esn.s", float, "connection probability of A")
    _add(p, "--gA2", "esn.gA2", float, "s*N*sigma_A^2")
    _add(p, "--nsin2", "esn.nsin2", float, "n*sigma_in^2")
    _add(p, "--k", "esn.ridge_k", float, "ridge parameter")
    _add(p, "--warmup", "esn.warmup_steps", int, "discarded driving steps")
    _add(p, "--train-lt", "esn.train_lt", float, "training length in Lyapunov times")
    _add(p, "--task", "esn.task", str, "full or partial", choices=["full", "partial"])
    _add(p, "--component", "esn.component", lambda t: _components(t)[0], "component for the partial task")
    _add(p, "--seed", "esn.seed", int, "reservoir seed")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="esnlab", description="Echo-state network parameter studies.")
    parser.add_argument("--version", action="version", version=f"esnlab {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="sample and normalize a benchmark series")
    _common(p)
    p.add_argument("--system", dest="dynamics.system", required=True, help="lorenz63 or halvorsen")
    _add(p, "--dt", "dynamics.dt", float, "sampling interval")
    _add(p, "--h", "dynamics.h", float, "RK4 inner step")
    _add(p, "--t", "dynamics.t", float, "series duration (time units)")
    _add(p, "--burn-in", "dynamics.burn_in", float, "discarded transient")
    _add(p, "--seed", "dynamics.seed", int, "seed of the initial condition")
    _add(p, "--components", "dynamics.components", _components, "e.g. y or x,z")
    p.add_argument("--raw", dest="dynamics.normalize", action="store_false", default=None, help="skip normalization")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("run", help="train one ESN and score its prediction")
    _common(p)
    _dynamics_flags(p)
    _esn_flags(p)
    _add(p, "--threshold", "analysis.threshold", float, "valid-time threshold")
    _add(p, "--horizon-lt", "analysis.horizon_lt", float, "prediction horizon (Lyapunov times)")
    p.add_argument("--figure", help="write a prediction-vs-target SVG here")
    p.add_argument("--save-model", help="prefix for reservoir/readout JSON files")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="phase diagram over (gA2, n*sigma_in^2)")
    _common(p)
    _dynamics_flags(p)
    _add(p, "--task", "esn.task", str, "full or partial", choices=["full", "partial"])
    _add(p, "--component", "esn.component", lambda t: _components(t)[0], "component for the partial task")
    _add(p, "--k", "esn.ridge_k", float, "ridge parameter")
    _add(p, "--train-lt", "esn.train_lt", float, "training length in Lyapunov times")
    _add(p, "--warmup", "esn.warmup_steps", int, "discarded driving steps")
    _add(p, "--N", "sweep.N", int, "reservoir size")
    _add(p, "--trials", "sweep.trials", int, "trials per cell")
    _add(p, "--gA2-range", "sweep.gA2_range", _floats, "lo,hi,num")
    _add(p, "--nsin2-range", "sweep.nsin2_range", _floats, "lo,hi,num")
    _add(p, "--metrics", "sweep.metrics", lambda t: [m.strip() for m in t.split(",")], "comma list")
    _add(p, "--architecture", "sweep.architecture", str, "random or simple")
    _add(p, "--base-seed", "sweep.base_seed", int, "base seed")
    _add(p, "--workers", "sweep.workers", int, f"worker processes (default ${sweep.WORKERS_ENV} or 1)")
    _add(p, "--rank-level", "sweep.rank_level", float, "rank contour level in the figure")
    p.add_argument("--no-plot", action="store_true")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("contour", help="mean-field lambda_T = 0 line, or a level set of a sweep CSV")
    _common(p)
    _dynamics_flags(p)
    _add(p, "--task", "esn.task", str, "full or partial", choices=["full", "partial"])
    _add(p, "--component", "esn.component", lambda t: _components(t)[0], "component for the partial task")
    _add(p, "--nsin2-range", "sweep.nsin2_range", _floats, "lo,hi,num")
    p.add_argument("--gA2-bounds", type=_floats, default=[1e-3, 1e3], help="search range lo,hi")
    p.add_argument("--from-csv", help="phase-diagram CSV to contour instead")
    p.add_argument("--metric", default="rank")
    p.add_argument("--level", type=float, default=100.0)
    p.set_defaults(func=cmd_contour)

    p = sub.add_parser("lyapunov", help="ODE spectrum or reservoir maximal exponent")
    _common(p)
    _dynamics_flags(p)
    _esn_flags(p)
    p.add_argument("--ode", action="store_true", help="spectrum of the input system instead")
    p.add_argument("--kind", choices=["no_input", "driven", "closed_loop"], default="driven")
    _add(p, "--steps", "lyapunov.steps", int, "initial run length")
    _add(p, "--tol", "lyapunov.tol", float, "split-half tolerance")
    _add(p, "--t-total", "lyapunov.ode_t_total", float, "ODE integration time")
    p.add_argument("--running-csv", help="dump the running estimate here")
    p.set_defaults(func=cmd_lyapunov)

    p = sub.add_parser("meanfield", help="variance fixed point and lambda_T")
    _common(p)
    _dynamics_flags(p)
    _esn_flags(p)
    p.set_defaults(func=cmd_meanfield)

    p = sub.add_parser("mc", help="memory capacity of a scalar-input reservoir")
    _common(p)
    _add(p, "--N", "esn.N", int, "reservoir size")
    _add(p, "--gA2", "esn.gA2", float, "s*N*sigma_A^2")
    _add(p, "--nsin2", "esn.nsin2", float, "sigma_in^2 (n = 1)")
    _add(p, "--seed", "esn.seed", int, "reservoir seed")
    _add(p, "--T", "analysis.mc_T", int, "input length")
    _add(p, "--tau-max", "analysis.mc_tau_max", int, "largest delay (default 2N)")
    p.set_defaults(func=cmd_mc)

    p = sub.add_parser("bifurcation", help="closed-loop output against n*sigma_in^2 for several k")
    _common(p)
    _dynamics_flags(p)
    _add(p, "--N", "esn.N", int, "reservoir size")
    _add(p, "--seed", "esn.seed", int, "reservoir seed")
    _add(p, "--k-list", "analysis.bif_k", _floats, "comma list of ridge parameters")
    _add(p, "--gA2", "analysis.bif_gA2", float, "s*N*sigma_A^2")
    _add(p, "--ladder", "analysis.bif_ladder", _floats, "lo,hi,num of n*sigma_in^2")
    _add(p, "--train-lt", "esn.train_lt", float, "training length in Lyapunov times")
    _add(p, "--warmup", "esn.warmup_steps", int)
    _add(p, "--transient", "analysis.bif_transient", int, "closed-loop steps discarded")
    _add(p, "--horizon", "analysis.bif_horizon", int, "closed-loop steps recorded")
    p.add_argument("--no-plot", action="store_true")
    p.set_defaults(func=cmd_bifurcation)

    p = sub.add_parser("plot", help="render a phase-diagram CSV to SVG")
    p.add_argument("--csv", required=True, help="phase-diagram CSV")
    p.add_argument("--metric", default="valid_time")
    p.add_argument("--out", "-o", required=True)
    p.add_argument("--rank-level", type=float, default=100.0)
    p.add_argument("--zero-contour", help="CSV from 'contour' to draw as the red line")
    p.add_argument("--title", default="")
    p.set_defaults(func=cmd_plot)
    return parser


# ---------------------------------------------------------------------------
# helpers


def _resolve(args) -> config_mod.RunConfig:
    cfg = config_mod.load(getattr(args, "config", None))
    overrides = {k: v for k, v in vars(args).items() if "." in k}
    return cfg.with_overrides(overrides)


def _write_text(text: str, out) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _json(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True, default=_jsonable) + "\n"


def _jsonable(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, np.bool_):
        return bool(v)
    raise TypeError(f"not serializable: {type(v)}")


def _series_for(cfg, n_samples: int) -> dynamics.TimeSeries:
    d = cfg.dynamics
    system = dynamics.system_by_name(d.system)
    series = dynamics.generate_series(system, d.dt, n_samples, seed=d.seed, h=d.h, burn_in=d.burn_in)
    if cfg.esn.task == "partial":
        series = dynamics.select_components(series, [cfg.esn.component])
    return series


def _steps(cfg):
    system = dynamics.system_by_name(cfg.dynamics.system)
    scale = system.lambda1 * cfg.dynamics.dt
    train = int(round(cfg.esn.train_lt / scale))
    horizon = int(math.ceil(cfg.analysis.horizon_lt / scale - 1e-9))
    return system, train, horizon


def _esn_config(cfg, n: int, train_steps: int, N=None) -> esn.EsnConfig:
    e = cfg.esn
    return esn.EsnConfig.from_combined(
        e.gA2, e.nsin2, N=N or e.N, n=n, s=e.s, ridge_k=e.ridge_k,
        warmup_steps=e.warmup_steps, train_steps=train_steps, seed=e.seed,
    )


def _prefix(out, default: str) -> Path:
    p = Path(out or default)
    if p.suffix in (".csv", ".json", ".svg"):
        p = p.with_suffix("")
    return p


def _sweep_spec(cfg) -> sweep.SweepSpec:
    d, e, a, s = cfg.dynamics, cfg.esn, cfg.analysis, cfg.sweep
    g_lo, g_hi, g_n = s.gA2_range
    s_lo, s_hi, s_n = s.nsin2_range
    n = 1 if e.task == "partial" else 3
    system = dynamics.system_by_name(d.system)
    train_steps = int(round(e.train_lt / (system.lambda1 * d.dt)))
    template = esn.EsnConfig(N=s.N, n=n, s=e.s, ridge_k=e.ridge_k, warmup_steps=e.warmup_steps, train_steps=train_steps)
    return sweep.SweepSpec(
        gA2_axis=sweep.log_axis(g_lo, g_hi, int(g_n)),
        nsin2_axis=sweep.log_axis(s_lo, s_hi, int(s_n)),
        trials=s.trials,
        template=template,
        task=e.task,
        component=e.component,
        system=d.system,
        base_seed=s.base_seed,
        metrics=tuple(s.metrics),
        architecture=s.architecture,
        dt=d.dt,
        h=d.h,
        burn_in=d.burn_in,
        threshold=a.threshold,
        horizon_lt=a.horizon_lt,
        train_lt=e.train_lt,
        rank_tol=a.rank_tol,
        mc_T=a.mc_T,
        mc_tau_max=a.mc_tau_max,
        mc_ridge=a.mc_ridge,
        fp_transient=a.bif_transient,
        fp_horizon=a.bif_horizon,
        fp_threshold=a.fixed_point_threshold,
    )


def overlays_for(grid, rank_level: float = 100.0, architecture: str = "random") -> dict:
    """Red / green / dashed / blue overlay lines derived from a cell grid."""
    import warnings

    overlays = {}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        if "lambda_mf" in grid.means:
            overlays["lambda_mf"] = sweep.extract_contour(grid, "lambda_mf", 0.0)
        if "rank" in grid.means:
            overlays["rank"] = sweep.extract_contour(grid, "rank", rank_level)
        if "zero_fp" in grid.means:
            overlays["bifurcation"] = sweep.extract_contour(grid, "zero_fp", 0.5)
    g = np.asarray(grid.gA2_axis)
    s = np.asarray(grid.nsin2_axis)
    if architecture == "random" and g[0] <= 1.0 <= g[-1]:
        # Without input the mean-field exponent is ln(gA2)/2 below gA2 = 1.
        overlays["noinput"] = [np.array([[1.0, s[0]], [1.0, s[-1]]])]
    return overlays


# ---------------------------------------------------------------------------
# commands


def cmd_generate(args) -> int:
    cfg = _resolve(args)
    d = cfg.dynamics
    system = dynamics.system_by_name(d.system)
    n_samples = max(2, int(round(d.t / d.dt)))
    series = dynamics.generate_series(
        system, d.dt, n_samples, seed=d.seed, h=d.h, burn_in=d.burn_in, normalized=d.normalize
    )
    if d.components:
        series = dynamics.select_components(series, d.components)
    if args.out:
        dynamics.write_series_csv(series, args.out, cfg.to_dict())
    else:
        dynamics._write_series(series, sys.stdout, cfg.to_dict())
    return 0


def _run_report(cfg, figure=None, save_model=None) -> dict:
    system, train_steps, horizon = _steps(cfg)
    warmup = cfg.esn.warmup_steps
    series = _series_for(cfg, warmup + train_steps + horizon + 1)
    ecfg = _esn_config(cfg, series.n, train_steps)
    fitted = esn.fit(ecfg, series)
    h = fitted.harvest
    pred = fitted.predict(horizon, cfg.dynamics.dt)
    truth = series.window(h.next_index, h.next_index + horizon)
    vt = analysis.valid_time(pred, truth, cfg.analysis.threshold, system.lambda1)
    train_input = series.samples[:, warmup : warmup + train_steps]
    mfi = meanfield.MeanFieldInput(ecfg.gA2, ecfg.sigma_in2, train_input)
    fp = meanfield.iterate_variance_map(mfi)
    qr = lyapunov.training_lyapunov_qr(
        fitted.reservoir, series.samples[:, : warmup + train_steps],
        steps=cfg.lyapunov.steps, warmup=min(warmup, cfg.lyapunov.warmup), tol=cfg.lyapunov.tol,
    )
    report = {
        "config": cfg.to_dict(),
        "train_steps": train_steps,
        "horizon_steps": horizon,
        "valid_time": {
            "lyapunov_times": vt.lyapunov_times,
            "steps": vt.steps,
            "failed_component": vt.failed_component,
            "censored": vt.censored,
        },
        "diverged": vt.diverged,
        "lambda_mf": meanfield.lyapunov_from_fixed_point(ecfg.gA2, fp),
        "lambda_noinput_mf": meanfield.meanfield_lyapunov(meanfield.MeanFieldInput(ecfg.gA2, 0.0)),
        "lambda_qr": qr.lam,
        "lambda_qr_converged": qr.converged,
        "sigma_r_star2": fp.sigma_r_star2,
        "rank": analysis.numerical_rank(h.R, cfg.analysis.rank_tol),
        "rank_tol": cfg.analysis.rank_tol,
        "W_out_norm": float(np.linalg.norm(fitted.readout.W_out)),
    }
    if figure:
        plotting.prediction_figure(truth.samples, pred.samples, cfg.dynamics.dt, system.lambda1, figure, cfg.to_dict())
    if save_model:
        prefix = _prefix(save_model, "model")
        esn.save_json(esn.reservoir_to_dict(fitted.reservoir), f"{prefix}.reservoir.json")
        esn.save_json(esn.readout_to_dict(fitted.readout, ecfg), f"{prefix}.readout.json")
    return report


def cmd_run(args) -> int:
    cfg = _resolve(args)
    report = _run_report(cfg, args.figure, args.save_model)
    _write_text(_json(report), args.out)
    return 0


def cmd_sweep(args) -> int:
    cfg = _resolve(args)
    spec = _sweep_spec(cfg)
    workers = cfg.sweep.workers
    diagram = sweep.run_sweep(spec, workers=workers, progress=True)
    prefix = _prefix(args.out, "sweep")
    prefix.parent.mkdir(parents=True, exist_ok=True)
    diagram.write_csv(f"{prefix}.csv")
    diagram.write_records_csv(f"{prefix}.records.csv")
    diagram.write_manifest(f"{prefix}.manifest.json", {"resolved_config": cfg.to_dict()})
    if not args.no_plot:
        grid = sweep.read_phase_csv(f"{prefix}.csv")
        _render_phase(grid, "valid_time" if "valid_time" in grid.means else spec.metrics[0],
                      f"{prefix}.svg", cfg.sweep.rank_level)
        if "mc" in grid.means and "rank" in grid.means:
            fields = {k: grid.mean(k) for k in ("valid_time", "rank", "mc") if k in grid.means}
            plotting.panels_figure(grid.gA2_axis, grid.nsin2_axis, fields, f"{prefix}.panels.svg", grid.config)
    print(f"wrote {prefix}.csv ({diagram.wall_clock:.1f} s)", file=sys.stderr)
    return 0


def _render_phase(grid, metric, out, rank_level, zero_contour=None, title="") -> None:
    arch = grid.config.get("architecture", "random")
    overlays = overlays_for(grid, rank_level, arch)
    if zero_contour is not None:
        overlays["lambda_mf"] = [zero_contour]
    label = "valid time (Lyapunov times)" if metric == "valid_time" else metric
    provenance = {"data": grid.config, "plot": {"metric": metric, "rank_level": rank_level}}
    plotting.phase_heatmap(
        grid.gA2_axis, grid.nsin2_axis, grid.mean(metric), out,
        overlays=overlays, label=label, title=title, config=provenance,
    )


def cmd_plot(args) -> int:
    grid = sweep.read_phase_csv(args.csv)
    if args.metric not in grid.means:
        raise EsnLabError(f"metric {args.metric!r} not in {args.csv}")
    zero = None
    if args.zero_contour:
        rows = np.loadtxt(args.zero_contour, delimiter=",", skiprows=1, ndmin=2)
        if rows.size:
            zero = np.column_stack([rows[:, 1], rows[:, 0]])
    _render_phase(grid, args.metric, args.out, args.rank_level, zero, args.title)
    return 0


def cmd_contour(args) -> int:
    if args.from_csv:
        grid = sweep.read_phase_csv(args.from_csv)
        lines = sweep.extract_contour(grid, args.metric, args.level)
        out = args.out or "contour.csv"
        sweep.write_contour_csv(lines, out, args.metric, args.level)
        return 0
    cfg = _resolve(args)
    _, train_steps, _ = _steps(cfg)
    series = _series_for(cfg, train_steps)
    lo, hi, num = cfg.sweep.nsin2_range
    grid = sweep.log_axis(lo, hi, int(num))
    contour = meanfield.zero_contour(series, tuple(args.gA2_bounds), grid)
    out = args.out or "zero_contour.csv"
    contour.write_csv(out)
    for note in contour.warnings:
        print(note, file=sys.stderr)
    return 0


def cmd_lyapunov(args) -> int:
    cfg = _resolve(args)
    ly = cfg.lyapunov
    if args.ode:
        system = dynamics.system_by_name(cfg.dynamics.system)
        x0 = np.random.default_rng(cfg.dynamics.seed).uniform(-1, 1, 3)
        exps, running = dynamics.lyapunov_spectrum(
            system, x0, cfg.dynamics.h, ly.ode_t_total, transient=ly.ode_transient, return_running=True
        )
        doc = {"config": cfg.to_dict(), "system": system.name, "exponents": exps.tolist(), "sum": float(exps.sum())}
        if args.running_csv:
            np.savetxt(args.running_csv, running, delimiter=",", header="l1,l2,l3", comments="")
        _write_text(_json(doc), args.out)
        return 0
    system, train_steps, _ = _steps(cfg)
    warmup = cfg.esn.warmup_steps
    kind = lyapunov.ExponentKind(args.kind)
    series = _series_for(cfg, warmup + train_steps + ly.max_steps // 10 + 1)
    ecfg = _esn_config(cfg, series.n, train_steps)
    if kind is lyapunov.ExponentKind.CLOSED_LOOP:
        fitted = esn.fit(ecfg, series)
        est = lyapunov.closed_loop_lyapunov(
            fitted.reservoir, fitted.readout, fitted.harvest.r_last,
            steps=ly.steps, tol=ly.tol, max_steps=ly.max_steps, keep_running=bool(args.running_csv),
        )
    else:
        res = esn.build_reservoir(ecfg)
        est = lyapunov.training_lyapunov_qr(
            res, series, kind, steps=ly.steps, warmup=ly.warmup, tol=ly.tol,
            max_steps=ly.max_steps, keep_running=bool(args.running_csv),
        )
    doc = {
        "config": cfg.to_dict(),
        "kind": kind.value,
        "lambda_per_step": est.lam,
        "lambda_per_time": est.per_unit_time(cfg.dynamics.dt),
        "steps_used": est.steps_used,
        "converged": est.converged,
        "tol": est.tol,
    }
    if args.running_csv:
        est.write_running_csv(args.running_csv)
    _write_text(_json(doc), args.out)
    return 0


def cmd_meanfield(args) -> int:
    cfg = _resolve(args)
    _, train_steps, _ = _steps(cfg)
    series = _series_for(cfg, train_steps)
    sin2 = cfg.esn.nsin2 / series.n
    mfi = meanfield.MeanFieldInput(cfg.esn.gA2, sin2, series)
    fp = meanfield.iterate_variance_map(mfi)
    doc = {
        "config": cfg.to_dict(),
        "gA2": cfg.esn.gA2,
        "n_sigma_in2": cfg.esn.nsin2,
        "sigma_r_star2": fp.sigma_r_star2,
        "d2_mean": fp.d2_mean,
        "r4_mean": fp.r4_mean,
        "iterations": fp.iterations,
        "converged": fp.converged,
        "lambda_T": meanfield.lyapunov_from_fixed_point(cfg.esn.gA2, fp),
    }
    _write_text(_json(doc), args.out)
    return 0


def cmd_mc(args) -> int:
    cfg = _resolve(args)
    e, a = cfg.esn, cfg.analysis
    ecfg = esn.EsnConfig.from_combined(e.gA2, e.nsin2, N=e.N, n=1, s=e.s, seed=e.seed, train_steps=max(e.N, 1))
    res = esn.build_reservoir(ecfg)
    result = analysis.memory_capacity(res, T=a.mc_T, tau_max=a.mc_tau_max, ridge_mc=a.mc_ridge, seed=e.seed)
    doc = {
        "config": cfg.to_dict(),
        "mc_total": result.mc_total,
        "tau_max": result.tau_max_used,
        "mc_per_delay": result.mc_per_delay.tolist(),
    }
    if args.out:
        prefix = _prefix(args.out, "mc")
        Path(f"{prefix}.json").write_text(_json(doc))
        plotting.memory_figure(result.mc_per_delay, f"{prefix}.svg", cfg.to_dict())
    else:
        sys.stdout.write(_json(doc))
    return 0


def cmd_bifurcation(args) -> int:
    cfg = _resolve(args)
    a = cfg.analysis
    system, train_steps, _ = _steps(cfg)
    template = esn.EsnConfig(
        N=cfg.esn.N, n=3, s=cfg.esn.s, warmup_steps=cfg.esn.warmup_steps,
        train_steps=train_steps, seed=cfg.esn.seed,
    )
    full = cfg.with_overrides({"esn.task": "full"})
    series = _series_for(full, template.warmup_steps + train_steps + 1)
    lo, hi, num = a.bif_ladder
    ladder = np.logspace(math.log10(lo), math.log10(hi), int(num))
    scans = [
        analysis.bifurcation_scan(
            template, series, ladder, k, gA2=a.bif_gA2, horizon=a.bif_horizon,
            transient=a.bif_transient, fixed_point_threshold=a.fixed_point_threshold,
        )
        for k in a.bif_k
    ]
    prefix = _prefix(args.out, "bifurcation")
    csv_path = Path(f"{prefix}.csv")
    with csv_path.open("w") as fh:
        fh.write("# config: " + json.dumps(cfg.to_dict(), sort_keys=True) + "\n")
        fh.write("k,n_sin2,zero_fixed_point,diverged,sample_index,v0\n")
    for scan in scans:
        scan.write_csv(csv_path, append=True)
    summary = {
        "config": cfg.to_dict(),
        "thresholds": [
            {"k": s.ridge_k, "bracket": s.threshold_bracket(), "index": s.threshold_index()} for s in scans
        ],
    }
    Path(f"{prefix}.json").write_text(_json(summary))
    if not args.no_plot:
        plotting.bifurcation_figure(scans, f"{prefix}.svg", cfg.to_dict())
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except EsnLabError as exc:
        print(f"esnlab: error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"esnlab: I/O error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
