"""Figure rendering. Every figure is an SVG written next to its data file.

Figures are regenerable from the CSV alone: the SVG hash salt is pinned and
no timestamp is written, so re-rendering the same data is byte-identical.
"""

from __future__ import annotations

import hashlib
import json

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib import colors  # noqa: E402

STYLE = {
    "svg.hashsalt": "esnlab",
    "svg.fonttype": "path",
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 9,
    "legend.fontsize": 7,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "lines.linewidth": 1.4,
    "figure.dpi": 100,
}

OVERLAY_STYLE = {
    "lambda_mf": dict(color="red", linestyle="-", label=r"mean field $\lambda_T=0$"),
    "rank": dict(color="green", linestyle="-", label="rank level"),
    "noinput": dict(color="black", linestyle="--", label=r"$\lambda$ without input $=0$"),
    "bifurcation": dict(color="blue", linestyle="-", label="closed-loop bifurcation"),
}


def provenance(config) -> str:
    """Short text embedding the config hash and the config itself."""
    text = json.dumps(config, sort_keys=True, default=str)
    digest = hashlib.sha256(text.encode()).hexdigest()
    return f"esnlab config sha256={digest} config={text}"


def save(fig, path, config=None) -> None:
    meta = {"Date": None}
    if config is not None:
        meta["Description"] = provenance(config)
    fig.savefig(path, format="svg", metadata=meta)
    plt.close(fig)


def _edges(axis: np.ndarray) -> np.ndarray:
    """Cell edges on a log axis (geometric midpoints, extrapolated at the ends)."""
    la = np.log10(axis)
    if la.size == 1:
        return 10.0 ** np.array([la[0] - 0.5, la[0] + 0.5])
    mid = 0.5 * (la[1:] + la[:-1])
    first = la[0] - (mid[0] - la[0])
    last = la[-1] + (la[-1] - mid[-1])
    return 10.0 ** np.concatenate([[first], mid, [last]])


def phase_heatmap(
    gA2_axis,
    nsin2_axis,
    values,
    path,
    overlays: dict | None = None,
    label: str = "valid time (Lyapunov times)",
    title: str = "",
    config=None,
    vmin=None,
    vmax=None,
) -> None:
    """Heatmap of a cell field over log-log (gA2, n*sigma_in^2) axes.

    ``values`` is indexed [gA2 index, n_sin2 index]. ``overlays`` maps an
    OVERLAY_STYLE key to a list of (m, 2) polylines in (gA2, n_sin2).
    """
    g = np.asarray(gA2_axis, dtype=float)
    s = np.asarray(nsin2_axis, dtype=float)
    z = np.asarray(values, dtype=float)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.2, 3.4))
        finite = z[np.isfinite(z)]
        lo = vmin if vmin is not None else (finite.min() if finite.size else 0.0)
        hi = vmax if vmax is not None else (finite.max() if finite.size else 1.0)
        if hi <= lo:
            hi = lo + 1.0
        mesh = ax.pcolormesh(
            _edges(g), _edges(s), z.T, cmap="viridis", norm=colors.Normalize(lo, hi), shading="flat"
        )
        fig.colorbar(mesh, ax=ax, label=label)
        for key, lines in (overlays or {}).items():
            style = dict(OVERLAY_STYLE.get(key, {"color": "white"}))
            for k, line in enumerate(lines):
                line = np.asarray(line)
                if line.size == 0:
                    continue
                ax.plot(line[:, 0], line[:, 1], **style)
                style.pop("label", None)
        ax.set_xscale("log")
        ax.set_yscale("log")
        ax.set_xlim(_edges(g)[0], _edges(g)[-1])
        ax.set_ylim(_edges(s)[0], _edges(s)[-1])
        ax.set_xlabel(r"$sN\sigma_A^2$")
        ax.set_ylabel(r"$n\sigma_{in}^2$")
        if title:
            ax.set_title(title)
        if overlays and any(len(v) for v in overlays.values()):
            ax.legend(loc="lower left", framealpha=0.7)
        fig.tight_layout()
        save(fig, path, config)


def bifurcation_figure(scans, path, config=None) -> None:
    """One panel per ridge parameter: output component 0 against n*sigma_in^2."""
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, len(scans), figsize=(3.0 * len(scans), 2.8), sharey=True, squeeze=False)
        for ax, scan in zip(axes[0], scans):
            for p, samples in zip(scan.parameter_values, scan.attractor_samples):
                samples = np.asarray(samples)
                ax.plot(np.full(samples.size, p), samples, ",", color="black")
            bracket = scan.threshold_bracket()
            if bracket is not None:
                ax.axvspan(bracket[0], bracket[1], color="blue", alpha=0.15)
            ax.set_xscale("log")
            ax.set_xlabel(r"$n\sigma_{in}^2$")
            ax.set_title(f"k = {scan.ridge_k:g}")
        axes[0][0].set_ylabel(r"$v_1$")
        fig.tight_layout()
        save(fig, path, config)


def panels_figure(gA2_axis, nsin2_axis, fields: dict, path, config=None) -> None:
    """Side-by-side heatmaps sharing axes, e.g. valid time / rank / MC."""
    g = np.asarray(gA2_axis, dtype=float)
    s = np.asarray(nsin2_axis, dtype=float)
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, len(fields), figsize=(3.4 * len(fields), 3.0), squeeze=False)
        for ax, (name, z) in zip(axes[0], fields.items()):
            mesh = ax.pcolormesh(_edges(g), _edges(s), np.asarray(z, dtype=float).T, cmap="viridis", shading="flat")
            fig.colorbar(mesh, ax=ax)
            ax.set_xscale("log")
            ax.set_yscale("log")
            ax.set_title(name)
            ax.set_xlabel(r"$sN\sigma_A^2$")
        axes[0][0].set_ylabel(r"$n\sigma_{in}^2$")
        fig.tight_layout()
        save(fig, path, config)


def prediction_figure(truth, pred, dt: float, lambda1: float, path, config=None) -> None:
    """Prediction against truth per component, time in Lyapunov times."""
    truth = np.atleast_2d(truth)
    pred = np.atleast_2d(pred)
    T = min(truth.shape[1], pred.shape[1])
    t = np.arange(T) * dt * lambda1
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(truth.shape[0], 1, figsize=(5.0, 1.5 * truth.shape[0] + 0.5), sharex=True, squeeze=False)
        for a, ax in enumerate(axes[:, 0]):
            ax.plot(t, truth[a, :T], color="black", label="target")
            ax.plot(t, pred[a, :T], color="tab:red", linestyle="--", label="prediction")
            ax.set_ylabel(f"c{a}")
        axes[0, 0].legend(loc="upper right")
        axes[-1, 0].set_xlabel("Lyapunov times")
        fig.tight_layout()
        save(fig, path, config)


def running_estimate_figure(running, path, dt: float = 1.0, config=None) -> None:
    running = np.asarray(running, dtype=float)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.0, 2.6))
        ax.plot(np.arange(1, running.size + 1), running / dt)
        ax.set_xlabel("step")
        ax.set_ylabel("running estimate")
        fig.tight_layout()
        save(fig, path, config)


def memory_figure(mc_per_delay, path, config=None) -> None:
    mc = np.asarray(mc_per_delay, dtype=float)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.0, 2.6))
        ax.plot(np.arange(1, mc.size + 1), mc, color="black")
        ax.set_xlabel(r"delay $\tau$")
        ax.set_ylabel(r"squared correlation")
        ax.set_ylim(-0.02, 1.02)
        fig.tight_layout()
        save(fig, path, config)
