"""Static figures for run outputs. The CSVs are the record; these are for looking."""
from __future__ import annotations

import functools
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

golden_mean = (np.sqrt(5) - 1.0) / 2.0
fig_width = 5.0

params = {
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "lines.linewidth": 1.2,
    "axes.linewidth": 0.6,
    "figure.dpi": 150,
    "savefig.bbox": "tight",
}

PORT_COLOURS = ("#2b8cbe", "#e34a33")


def _styled(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        with plt.rc_context(params):
            return fn(*args, **kwargs)
    return wrapper


def _figure(nrows=1, height=None):
    fig, axes = plt.subplots(nrows, 1, figsize=(fig_width, height or fig_width * golden_mean),
                             sharex=True, squeeze=False)
    return fig, axes[:, 0]


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path)
    plt.close(fig)
    return path


@_styled
def wavepacket_figure(path, records) -> Path:
    fig, axes = _figure(len(records), height=1.6 * len(records) + 0.6)
    for ax, rec in zip(axes, records):
        ns = rec.times * 1e9
        ax.plot(ns, rec.flux_port1 * 1e-9, color=PORT_COLOURS[0], label="port 1")
        ax.plot(ns, rec.flux_port2 * 1e-9, color=PORT_COLOURS[1], label="port 2")
        ax.set_ylabel("flux (1/ns)")
        ax.set_title(f"QWP {rec.qwp_angle:g} deg", fontsize=8, loc="left")
    axes[0].legend(frameon=False)
    axes[-1].set_xlabel("time (ns)")
    return _save(fig, path)


@_styled
def basis_figure(path, times, fluxes) -> Path:
    fig, axes = _figure(2, height=4.0)
    ns = times * 1e9
    for ax, pair in zip(axes, (("+", "-"), ("H", "V"))):
        for key, colour in zip(pair, PORT_COLOURS):
            ax.plot(ns, fluxes[key] * 1e-9, color=colour, label=f"|{key}>")
        ax.set_ylabel("flux (1/ns)")
        ax.legend(frameon=False)
    axes[-1].set_xlabel("time (ns)")
    return _save(fig, path)


@_styled
def routing_figure(path, curves) -> Path:
    fig, axes = _figure()
    ax = axes[0]
    for curve in curves:
        style = "-" if curve.birefringence_on else "--"
        tag = "with" if curve.birefringence_on else "without"
        ax.plot(curve.angles, curve.fraction_h, style, color=PORT_COLOURS[0], label=f"H, {tag} birefringence")
        ax.plot(curve.angles, curve.fraction_v, style, color=PORT_COLOURS[1], label=f"V, {tag} birefringence")
    ax.set_xlabel("QWP angle (deg)")
    ax.set_ylabel("routing fraction")
    ax.set_ylim(0, 1)
    ax.legend(frameon=False, ncol=2, fontsize=7)
    return _save(fig, path)


def run_figures(out_dir, traj, fluxes, records, curves) -> list[Path]:
    out_dir = Path(out_dir)
    files = [basis_figure(out_dir / "basis_fluxes.png", traj.times, fluxes)]
    if records:
        files.append(wavepacket_figure(out_dir / "wavepackets.png", records))
    if curves:
        files.append(routing_figure(out_dir / "routing.png", curves))
    return files


@_styled
def sweep_figure(path, parameter, rows) -> Path:
    ok = [r for r in rows if r["status"] == "ok"]
    fig, axes = _figure(2, height=4.0)
    x = [float(r["value"]) for r in ok]
    axes[0].plot(x, [r["efficiency"] for r in ok], "o-", color="k")
    axes[0].set_ylabel("efficiency")
    axes[1].plot(x, [r["fraction_plus"] for r in ok], "o-", color=PORT_COLOURS[0], label="|+>")
    axes[1].plot(x, [r["fraction_minus"] for r in ok], "o-", color=PORT_COLOURS[1], label="|->")
    axes[1].set_ylabel("fraction")
    axes[1].set_xlabel(parameter)
    axes[1].legend(frameon=False)
    return _save(fig, path)


@_styled
def fit_figure(path, scan, fit) -> Path:
    fig, axes = _figure()
    ax = axes[0]
    ax.plot(scan.detuning, scan.signal, ".", color="0.4", ms=3, label="scan")
    x = np.linspace(scan.detuning.min(), scan.detuning.max(), 800)
    ax.plot(x, fit.predict(x), color=PORT_COLOURS[1], label="double Lorentzian")
    ax.set_xlabel("detuning (MHz)")
    ax.set_ylabel("transmission")
    ax.set_title(f"splitting {fit.splitting:.4f} MHz", fontsize=8, loc="left")
    ax.legend(frameon=False)
    return _save(fig, path)
