"""Scenario files: YAML with MHz, ns and degrees at the boundary.

Loading starts from a preset (the experimental operating point unless the
file or caller names another), deep-merges the file and any ``--set``
overrides, then validates. Unknown keys are errors.
"""
from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Literal, Optional

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from . import polarization as pol
from .atom import MHZ, rb87_d2_scheme, three_level_lambda
from .dynamics import PULSE_SHAPES, PulseProfile, SystemConfig
from .emission import QWP_ANGLE_OFFSET_DEG


class ConfigError(ValueError):
    pass


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class OrientationModel(_Strict):
    alpha: float = Field(0.888, ge=0.0, le=1.0)
    phi1_deg: float = 115.1
    phi2_deg: float = -40.1


class PulseModel(_Strict):
    peak_rabi_mhz: float = Field(10.0, ge=0.0)
    duration_ns: float = Field(333.0, gt=0.0)
    shape: Literal[PULSE_SHAPES] = "sin2_amplitude"  # type: ignore[valid-type]
    detuning_mhz: float = 0.0


class AtomModel(_Strict):
    emission: Literal["sigma-", "sigma+"] = "sigma-"
    zeeman_ground_splitting_mhz: float = Field(26.0, ge=0.0)
    raman_offset_mhz: float = 7.5
    level_energies_mhz: dict[str, float] = Field(default_factory=dict)
    dark_branching: Optional[float] = Field(None, ge=0.0, le=1.0)
    include_dark: bool = True
    excited_detuning_mhz: float = 0.0


class SystemModel(_Strict):
    scheme: Literal["three_level", "rb87_d2"] = "rb87_d2"
    g_mhz: float = Field(4.77, ge=0.0)
    kappa_mhz: float = Field(1.77, ge=0.0)
    gamma_mhz: float = Field(3.03, ge=0.0)
    splitting_mhz: float = 3.471
    cavity_center_detuning_mhz: float = 0.0
    orientation: OrientationModel = Field(default_factory=OrientationModel)
    fock_truncation: int = Field(2, ge=2)
    pulse: PulseModel = Field(default_factory=PulseModel)
    atom: AtomModel = Field(default_factory=AtomModel)


class SimulationModel(_Strict):
    tail_ns: Optional[float] = Field(None, ge=0.0)
    max_sample_ns: float = Field(1.0, gt=0.0)
    rtol: float = Field(1e-8, gt=0.0)
    atol: float = Field(1e-10, gt=0.0)


class RoutingModel(_Strict):
    start_deg: float = -90.0
    stop_deg: float = 90.0
    step_deg: float = Field(2.5, gt=0.0)
    angles_deg: Optional[list[float]] = None
    birefringence: list[bool] = Field(default_factory=lambda: [True, False])

    @field_validator("angles_deg")
    @classmethod
    def _nonempty(cls, v):
        if v is not None and len(v) == 0:
            raise ValueError("angle grid must not be empty")
        return v

    @field_validator("birefringence")
    @classmethod
    def _toggles(cls, v):
        if not v:
            raise ValueError("at least one birefringence toggle is required")
        return v

    def grid(self) -> np.ndarray:
        if self.angles_deg is not None:
            return np.array(self.angles_deg, dtype=float)
        n = int(np.floor((self.stop_deg - self.start_deg) / self.step_deg + 1e-9)) + 1
        if n < 1:
            raise ConfigError("outputs.routing: empty angle grid")
        return self.start_deg + self.step_deg * np.arange(n)


class OscillationModel(_Strict):
    basis: Literal["circular", "linear"] = "circular"


class OutputsModel(_Strict):
    wavepacket_qwp_deg: list[float] = Field(default_factory=list)
    routing: Optional[RoutingModel] = None
    efficiency: bool = True
    basis_fluxes: bool = True
    oscillation: Optional[OscillationModel] = None
    qwp_offset_deg: float = QWP_ANGLE_OFFSET_DEG


class SweepModel(_Strict):
    """One swept parameter path; ``linked`` paths step along with it."""

    parameter: str
    values: list[Any] = Field(min_length=1)
    linked: dict[str, list[Any]] = Field(default_factory=dict)

    @field_validator("linked")
    @classmethod
    def _same_length(cls, v, info):
        n = len(info.data.get("values", []))
        for path, vals in v.items():
            if len(vals) != n:
                raise ValueError(f"{path}: {len(vals)} values for {n} sweep points")
        return v

    def points(self) -> list[dict[str, Any]]:
        out = []
        for i, value in enumerate(self.values):
            point = {self.parameter: value}
            point.update({p: vals[i] for p, vals in self.linked.items()})
            out.append(point)
        return out


class ScenarioModel(_Strict):
    name: str = "experiment"
    description: str = ""
    system: SystemModel = Field(default_factory=SystemModel)
    simulation: SimulationModel = Field(default_factory=SimulationModel)
    outputs: OutputsModel = Field(default_factory=OutputsModel)
    sweep: Optional[SweepModel] = None


LINEAR_ORIENTATION = {"alpha": 1.0, "phi1_deg": 0.0, "phi2_deg": 0.0}
CIRCULAR_ORIENTATION = {"alpha": float(np.sqrt(0.5)), "phi1_deg": 0.0, "phi2_deg": 90.0}


def _fig4(name, splitting, rabi, centred=True, description=""):
    return {
        "name": name,
        "description": description,
        "system": {
            "scheme": "three_level", "g_mhz": 4.0, "kappa_mhz": 2.0, "gamma_mhz": 0.0,
            "splitting_mhz": splitting,
            "cavity_center_detuning_mhz": 0.0 if centred else -0.5 * splitting,
            "orientation": dict(LINEAR_ORIENTATION),
            "pulse": {"peak_rabi_mhz": rabi, "duration_ns": 1000.0, "shape": "sin2_amplitude"},
        },
        "outputs": {"basis_fluxes": True, "efficiency": True},
    }


PRESETS: dict[str, dict] = {
    "experiment": {
        "name": "experiment",
        "description": "Rb-87 in the birefringent cavity at the measured operating point",
        "outputs": {"wavepacket_qwp_deg": [-22.5, 0.0, 22.5], "routing": {}},
    },
    "fig2c": {
        "name": "fig2c",
        "description": "routing fraction against QWP angle with and without birefringence",
        "outputs": {"routing": {"start_deg": -90.0, "stop_deg": 90.0, "step_deg": 2.5,
                                "birefringence": [True, False]}, "basis_fluxes": False},
    },
    "fig3": {
        "name": "fig3",
        "description": "time-resolved analyser wavepackets at three QWP angles",
        "outputs": {"wavepacket_qwp_deg": [-22.5, 0.0, 22.5]},
    },
    "fig4a_0MHz": _fig4("fig4a_0MHz", 0.0, 7.0, description="linear cavity, no splitting"),
    "fig4a_4MHz": _fig4("fig4a_4MHz", 4.0, 7.0, description="linear cavity, 4 MHz splitting"),
    "fig4a_20MHz": _fig4("fig4a_20MHz", 20.0, 2.0, description="linear cavity, 20 MHz splitting"),
    "fig4b_4MHz": _fig4("fig4b_4MHz", 4.0, 7.0, centred=False,
                        description="X eigenmode on Raman resonance, 4 MHz splitting"),
    "fig4b_20MHz": _fig4("fig4b_20MHz", 20.0, 2.0, centred=False,
                         description="X eigenmode on Raman resonance, 20 MHz splitting"),
    "fig4a_sweep": {
        **_fig4("fig4a_sweep", 0.0, 7.0, description="splitting sweep on the linear three-level cavity"),
        "sweep": {"parameter": "system.splitting_mhz", "values": [0.0, 4.0, 20.0],
                  "linked": {"system.pulse.peak_rabi_mhz": [7.0, 7.0, 2.0]}},
    },
    "beat": {
        "name": "beat",
        "description": "free polarisation beat: atom dispersively decoupled, kappa << splitting",
        "system": {
            "scheme": "three_level", "g_mhz": 4.0, "kappa_mhz": 0.25, "gamma_mhz": 0.0,
            "splitting_mhz": 4.0, "orientation": dict(LINEAR_ORIENTATION),
            "atom": {"excited_detuning_mhz": 60.0},
            "pulse": {"peak_rabi_mhz": 30.0, "duration_ns": 150.0, "shape": "sin2_amplitude"},
        },
        "outputs": {"basis_fluxes": True, "oscillation": {"basis": "circular"}},
    },
}


def deep_merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = deep_merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def set_path(d: dict, path: str, value) -> dict:
    out = copy.deepcopy(d)
    keys = path.split(".")
    node = out
    for k in keys[:-1]:
        nxt = node.get(k)
        if nxt is None:
            nxt = node[k] = {}
        if not isinstance(nxt, dict):
            raise ConfigError(f"{path}: {k!r} is not a section")
        node = nxt
    node[keys[-1]] = value
    return out


def parse_override(text: str) -> tuple[str, Any]:
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not of the form key=value")
    key, raw = text.split("=", 1)
    try:
        value = yaml.safe_load(raw)
    except yaml.YAMLError as exc:
        raise ConfigError(f"override {key}: cannot parse value {raw!r}") from exc
    return key.strip(), value


@dataclass(frozen=True, eq=False)
class Scenario:
    model: ScenarioModel

    @property
    def name(self) -> str:
        return self.model.name

    @property
    def system(self) -> SystemConfig:
        return build_system(self.model.system)

    @property
    def outputs(self) -> OutputsModel:
        return self.model.outputs

    @property
    def sweep(self) -> Optional[SweepModel]:
        return self.model.sweep

    def to_dict(self) -> dict:
        return self.model.model_dump(mode="json")

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def build_system(s: SystemModel) -> SystemConfig:
    if s.scheme == "rb87_d2":
        scheme = rb87_d2_scheme(
            zeeman_ground_splitting=s.atom.zeeman_ground_splitting_mhz * MHZ,
            excited_shifts={k: v * MHZ for k, v in s.atom.level_energies_mhz.items()},
            raman_offset=s.atom.raman_offset_mhz * MHZ,
            emission=s.atom.emission,
            dark_branching=s.atom.dark_branching,
            include_dark=s.atom.include_dark,
        )
    else:
        if s.atom.level_energies_mhz:
            raise ConfigError("system.atom.level_energies_mhz: only supported for rb87_d2")
        scheme = three_level_lambda(excited_detuning=s.atom.excited_detuning_mhz * MHZ)
    o = s.orientation
    return SystemConfig(
        g=s.g_mhz * MHZ, kappa=s.kappa_mhz * MHZ, gamma=s.gamma_mhz * MHZ,
        delta_p=s.splitting_mhz * MHZ,
        pulse=PulseProfile(s.pulse.peak_rabi_mhz * MHZ, s.pulse.duration_ns * 1e-9, s.pulse.shape,
                           s.pulse.detuning_mhz * MHZ),
        scheme=scheme,
        cavity_orientation=pol.EigenmodeOrientation.from_degrees(o.alpha, o.phi1_deg, o.phi2_deg),
        cavity_center_detuning=s.cavity_center_detuning_mhz * MHZ,
        fock_truncation=s.fock_truncation,
    )


def _validate(data: dict) -> Scenario:
    try:
        model = ScenarioModel.model_validate(data)
    except ValidationError as exc:
        msgs = []
        for err in exc.errors():
            path = ".".join(str(p) for p in err["loc"])
            msgs.append(f"{path}: {err['msg']}")
        raise ConfigError("; ".join(msgs)) from None
    scenario = Scenario(model)
    try:
        scenario.system
    except ValueError as exc:
        raise ConfigError(f"system: {exc}") from None
    if model.outputs.routing is not None:
        model.outputs.routing.grid()
    if model.sweep is not None:
        base = {k: v for k, v in data.items() if k != "sweep"}
        for point in model.sweep.points():
            sweep_point(base, point)
    return scenario


QWP_SWEEP_PARAMETER = "qwp_angle_deg"


def sweep_point(base: dict, point: dict) -> Scenario:
    """Scenario for one sweep point; a QWP-angle sweep sets the single analyser angle."""
    data = copy.deepcopy(base)
    data.pop("sweep", None)
    for path, value in point.items():
        if path == QWP_SWEEP_PARAMETER:
            data = set_path(data, "outputs.wavepacket_qwp_deg", [value])
            continue
        _check_path(path)
        data = set_path(data, path, value)
    try:
        return _validate(data)
    except ConfigError as exc:
        raise ConfigError(f"sweep point {point}: {exc}") from None


def _check_path(path: str):
    model: Any = ScenarioModel
    for key in path.split("."):
        if model is dict:
            return
        fields = getattr(model, "model_fields", None)
        if fields is None or key not in fields:
            raise ConfigError(f"sweep.parameter: {path!r} does not name a config field")
        ann = fields[key].annotation
        args = [a for a in getattr(ann, "__args__", ()) if isinstance(a, type) and issubclass(a, BaseModel)]
        if getattr(ann, "__origin__", None) is dict:
            model = dict
        else:
            model = ann if isinstance(ann, type) and issubclass(ann, BaseModel) else (args[0] if args else None)


def resolve(data: dict | None = None, preset: str | None = None, overrides=()) -> Scenario:
    data = dict(data or {})
    base_name = preset or data.pop("preset", None) or "experiment"
    data.pop("preset", None)
    if base_name not in PRESETS:
        raise ConfigError(f"preset: unknown preset {base_name!r} (known: {', '.join(PRESETS)})")
    merged = deep_merge(PRESETS[base_name], data)
    for item in overrides:
        key, value = parse_override(item) if isinstance(item, str) else item
        merged = set_path(merged, key, value)
    return _validate(merged)


def load_config(path=None, preset: str | None = None, overrides=()) -> Scenario:
    data = {}
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file {path} does not exist")
        try:
            data = yaml.safe_load(path.read_text()) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
    return resolve(data, preset, overrides)


def serialize(scenario: Scenario) -> str:
    return yaml.safe_dump(scenario.to_dict(), sort_keys=True)
