"""Execute scenarios: evolve, analyse, write CSVs, plots and a manifest."""
from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .config import Scenario, serialize, sweep_point
from .dynamics import IntegrationError, Trajectory, default_time_grid, evolve
from .emission import (
    DetectionPolarization,
    InsufficientOscillationsError,
    UndefinedFractionError,
    analyzer_wavepackets,
    emission_efficiency,
    emission_flux,
    integrate,
    oscillation_frequency,
    routing_from_trajectory,
    without_birefringence,
)

log = logging.getLogger(__name__)

WAVEPACKET_HEADER = ("time_ns", "flux_port1_per_ns", "flux_port2_per_ns")
ROUTING_HEADER = ("qwp_angle_deg", "fraction_H", "fraction_V")
BASIS_HEADER = ("time_ns", "flux_H_per_ns", "flux_V_per_ns", "flux_plus_per_ns", "flux_minus_per_ns")
SWEEP_HEADER = ("index", "value", "status", "efficiency", "fraction_plus", "fraction_minus",
                "dominant_polarization", "dominant_fraction", "fraction_H", "fraction_V", "error")


class NumericFailure(RuntimeError):
    """A numeric step of a run failed; carries the scenario name."""


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".12g")
    return str(x)


def write_csv(path: Path, header, rows) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])
    return path


def angle_tag(phi: float) -> str:
    return f"{phi:+.2f}".replace(".", "p").replace("+", "p", 1).replace("-", "m", 1)


@dataclass
class RunManifest:
    scenario: str
    config_hash: str
    version: str
    started: str
    finished: str = ""
    outputs: list[str] = field(default_factory=list)
    status: str = "ok"

    def write(self, out_dir: Path) -> Path:
        path = Path(out_dir) / "manifest.json"
        path.write_text(json.dumps(asdict(self), indent=2) + "\n")
        return path


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def state_diagnostics(traj: Trajectory) -> dict[str, float]:
    rho = traj.rho
    tr = np.trace(rho, axis1=1, axis2=2)
    herm = np.abs(rho - np.conj(np.swapaxes(rho, 1, 2))).max(axis=(1, 2))
    purity = np.real(np.einsum("kij,kji->k", rho, rho))
    hsym = 0.5 * (rho + np.conj(np.swapaxes(rho, 1, 2)))
    min_eig = np.linalg.eigvalsh(hsym).min()
    return {
        "max_trace_error": float(np.abs(tr - 1).max()),
        "max_hermiticity_error": float(herm.max()),
        "max_purity": float(purity.max()),
        "min_eigenvalue": float(min_eig),
    }


def basis_fluxes(traj: Trajectory) -> dict[str, np.ndarray]:
    return {k: emission_flux(traj, DetectionPolarization.named(k)) for k in ("H", "V", "+", "-")}


def _evolve(scenario: Scenario, cfg=None) -> Trajectory:
    sim = scenario.model.simulation
    cfg = cfg or scenario.system
    times = default_time_grid(cfg, tail=None if sim.tail_ns is None else sim.tail_ns * 1e-9,
                              max_sample=sim.max_sample_ns * 1e-9)
    return evolve(cfg, times=times, rtol=sim.rtol, atol=sim.atol)


def analyse(scenario: Scenario, out_dir, plots: bool = False) -> tuple[list[Path], dict]:
    """Run one scenario and write its outputs; returns (files, summary)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs = scenario.outputs
    files: list[Path] = []
    summary: dict = {}
    try:
        traj = _evolve(scenario)
        summary.update(state_diagnostics(traj))
        ns = traj.times * 1e9
        if outputs.efficiency:
            summary["efficiency"] = emission_efficiency(traj)
        fluxes = basis_fluxes(traj)
        probs = {k: integrate(traj.times, f) for k, f in fluxes.items()}
        circ = probs["+"] + probs["-"]
        lin = probs["H"] + probs["V"]
        summary["basis_sum_mismatch"] = abs(circ - lin)
        if circ > 1e-12:
            summary["fraction_plus"] = probs["+"] / circ
            summary["fraction_minus"] = probs["-"] / circ
            summary["fraction_H_basis"] = probs["H"] / lin
            summary["fraction_V_basis"] = probs["V"] / lin
            plus_wins = summary["fraction_plus"] > summary["fraction_minus"]
            summary["dominant_polarization"] = "+" if plus_wins else "-"
            summary["dominant_fraction"] = max(summary["fraction_plus"], summary["fraction_minus"])
        if outputs.basis_fluxes:
            rows = zip(ns, *(fluxes[k] * 1e-9 for k in ("H", "V", "+", "-")))
            files.append(write_csv(out_dir / "basis_fluxes.csv", BASIS_HEADER, rows))

        records = []
        for phi in outputs.wavepacket_qwp_deg:
            rec = analyzer_wavepackets(traj, phi, outputs.qwp_offset_deg)
            records.append(rec)
            rows = zip(ns, rec.flux_port1 * 1e-9, rec.flux_port2 * 1e-9)
            files.append(write_csv(out_dir / f"wavepacket_qwp_{angle_tag(phi)}deg.csv", WAVEPACKET_HEADER, rows))
            p1, p2 = rec.port_probabilities
            summary[f"port1_probability_qwp_{fmt(phi)}"] = p1
            summary[f"port2_probability_qwp_{fmt(phi)}"] = p2
        if records:
            p1, p2 = records[0].port_probabilities
            if p1 + p2 <= 1e-12:
                raise UndefinedFractionError("no emission: port fractions are undefined")
            summary["fraction_H"] = p1 / (p1 + p2)
            summary["fraction_V"] = p2 / (p1 + p2)

        curves = []
        if outputs.routing is not None:
            grid = outputs.routing.grid()
            for on in outputs.routing.birefringence:
                tr = traj if on else _evolve(scenario, without_birefringence(scenario.system))
                curve = routing_from_trajectory(tr, grid, on, outputs.qwp_offset_deg)
                curves.append(curve)
                name = f"routing_birefringence_{'on' if on else 'off'}.csv"
                files.append(write_csv(out_dir / name, ROUTING_HEADER,
                                       zip(curve.angles, curve.fraction_h, curve.fraction_v)))
                best, angle, port = curve.best()
                tag = "on" if on else "off"
                summary[f"routing_best_fraction_{tag}"] = best
                summary[f"routing_best_angle_deg_{tag}"] = angle
                summary[f"routing_best_port_{tag}"] = port

        if outputs.oscillation is not None:
            a, b = ("+", "-") if outputs.oscillation.basis == "circular" else ("H", "V")
            w = oscillation_frequency(traj.times, fluxes[a], fluxes[b])
            summary["oscillation_mhz"] = w / (2 * np.pi * 1e6)
    except (IntegrationError, UndefinedFractionError, InsufficientOscillationsError,
            FloatingPointError, np.linalg.LinAlgError) as exc:
        raise NumericFailure(f"scenario {scenario.name!r}: {exc}") from exc

    rows = [(k, summary[k]) for k in sorted(summary)]
    files.append(write_csv(out_dir / "summary.csv", ("quantity", "value"), rows))

    if plots:
        from . import plotting

        files.extend(plotting.run_figures(out_dir / "plots", traj, fluxes, records, curves))
    return files, summary


def run(scenario: Scenario, out_dir, plots: bool = False) -> RunManifest:
    out_dir = Path(out_dir)
    manifest = RunManifest(scenario.name, scenario.config_hash(), __version__, _now())
    files, _ = analyse(scenario, out_dir, plots)
    (out_dir / "config.yaml").write_text(serialize(scenario))
    manifest.outputs = sorted(str(p.relative_to(out_dir)) for p in files) + ["config.yaml"]
    manifest.finished = _now()
    manifest.write(out_dir)
    return manifest


def _sweep_job(job):
    index, point, base, out_dir, plots = job
    value = next(iter(point.values()))
    row = {"index": index, "value": value}
    try:
        scenario = sweep_point(base, point)
        _, summary = analyse(scenario, Path(out_dir) / f"run_{index:03d}", plots)
        row.update({k: summary.get(k, "") for k in SWEEP_HEADER if k not in row})
        row["status"] = "ok"
        row["error"] = ""
    except Exception as exc:  # recorded per point, the sweep carries on
        log.warning("sweep point %d failed: %s", index, exc)
        row.update({k: "" for k in SWEEP_HEADER if k not in row})
        row["status"] = "failed"
        row["error"] = f"{type(exc).__name__}: {exc}".replace("\n", " ")
    return row


def sweep(scenario: Scenario, out_dir, workers: int = 1, plots: bool = False) -> RunManifest:
    if scenario.sweep is None:
        raise ValueError(f"scenario {scenario.name!r} has no sweep section")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(scenario.name, scenario.config_hash(), __version__, _now())
    base = scenario.to_dict()
    jobs = [(i, p, base, str(out_dir), plots) for i, p in enumerate(scenario.sweep.points())]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_job, jobs))
    else:
        rows = [_sweep_job(j) for j in jobs]
    rows.sort(key=lambda r: r["index"])
    path = write_csv(out_dir / "sweep_summary.csv", SWEEP_HEADER, ([r[k] for k in SWEEP_HEADER] for r in rows))
    files = [path]
    if plots:
        from . import plotting

        files.append(plotting.sweep_figure(out_dir / "plots" / "sweep.png", scenario.sweep.parameter, rows))
    (out_dir / "config.yaml").write_text(serialize(scenario))
    listed = [str(p.relative_to(out_dir)) for p in files]
    for sub in sorted(out_dir.glob("run_*")):
        listed.extend(str(p.relative_to(out_dir)) for p in sorted(sub.rglob("*")) if p.is_file())
    manifest.outputs = sorted(listed) + ["config.yaml"]
    failed = sum(r["status"] != "ok" for r in rows)
    manifest.status = "ok" if failed == 0 else f"{failed} of {len(rows)} points failed"
    manifest.finished = _now()
    manifest.write(out_dir)
    return manifest
