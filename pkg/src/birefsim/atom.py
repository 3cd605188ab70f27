"""Emitter level schemes: the ideal Lambda system and the Rb-87 D2 F=1 manifold.

Energies are angular frequencies (rad/s). Excited-state energies are
measured from the reference optical transition (the e0 line for the
Lambda system, zero-field F=1,mF=0 -> F'=1,mF'=0 for rubidium), so that
optical frequencies only ever appear as offsets from it.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .quantum import HilbertSpace, Operator, embed

TWO_PI = 2.0 * np.pi
MHZ = TWO_PI * 1e6

POLARIZATIONS = ("sigma+", "sigma-", "pi")

# Rb-87 D2 dipole matrix elements <F=1, mF | e r_q | F', mF'> in units of
# <J=1/2 || e r || J'=3/2>, keyed (F', mF', mF).
RB87_D2_F1_FACTORS = {
    (0, 0, -1): np.sqrt(1 / 6),
    (0, 0, 0): np.sqrt(1 / 6),
    (0, 0, 1): np.sqrt(1 / 6),
    (1, -1, -1): -np.sqrt(5 / 24),
    (1, -1, 0): -np.sqrt(5 / 24),
    (1, 0, -1): np.sqrt(5 / 24),
    (1, 0, 0): 0.0,
    (1, 0, 1): -np.sqrt(5 / 24),
    (1, 1, 0): np.sqrt(5 / 24),
    (1, 1, 1): np.sqrt(5 / 24),
}
# fraction of F' population decaying back into the F=1 manifold; the rest
# goes to F=2, which the model lumps into one dark level
RB87_D2_F1_BRANCHING = {0: 1.0, 1: 5 / 6}
# dipole factors squared summed over F=1 sublevels equal this times the
# F=1 branching fraction ((2J+1)/(2J'+1) for J=1/2, J'=3/2)
_RB87_SQUARE_SUM_NORM = 0.5
RB87_EXCITED_HYPERFINE = {0: -72.2180 * MHZ, 1: 0.0}
RB87_LANDE_G = {"ground": -0.5, 0: 0.0, 1: 2.0 / 3.0}


@dataclass(frozen=True)
class AtomicLevel:
    label: str
    energy: float
    kind: str = "ground"  # ground | excited | dark
    spin: float | None = None

    def __post_init__(self):
        if not np.isfinite(self.energy):
            raise ValueError(f"level {self.label!r} has non-finite energy")
        if self.kind not in ("ground", "excited", "dark"):
            raise ValueError(f"unknown level kind {self.kind!r}")


@dataclass(frozen=True)
class Transition:
    ground: str
    excited: str
    polarization: str
    # signed dipole factor; |strength| <= 1
    relative_strength: float
    driven_by: tuple[str, ...] = ()

    def __post_init__(self):
        if self.polarization not in POLARIZATIONS:
            raise ValueError(f"unknown polarisation {self.polarization!r}")
        if abs(self.relative_strength) > 1.0 + 1e-12:
            raise ValueError("relative strength magnitude must not exceed 1")
        bad = set(self.driven_by) - {"pump", "cavity"}
        if bad:
            raise ValueError(f"unknown drivers {sorted(bad)}")
        if self.polarization == "pi" and "cavity" in self.driven_by:
            raise ValueError("pi transitions cannot couple to a cavity mode")

    @property
    def cavity_mode(self) -> str:
        """Atomic-basis cavity polarisation ('+' or '-') emitted on decay."""
        return self.polarization[-1]


class UnknownTransitionError(KeyError):
    pass


@dataclass(frozen=True, eq=False)
class LevelScheme:
    name: str
    levels: tuple[AtomicLevel, ...]
    transitions: tuple[Transition, ...]
    # (excited, ground) -> fraction of the total amplitude decay rate
    decay_branching: Mapping[tuple[str, str], float] = field(default_factory=dict)
    initial_state: str = ""
    target_state: str = ""
    dark_state: str | None = None
    # cavity frequency at Raman resonance, offset from the reference transition
    raman_frequency: float = 0.0

    def __post_init__(self):
        labels = [lv.label for lv in self.levels]
        if len(set(labels)) != len(labels):
            raise ValueError("level labels must be unique")
        known = set(labels)
        for t in self.transitions:
            if t.ground not in known or t.excited not in known:
                raise ValueError(f"transition {t.ground}<->{t.excited} references unknown levels")
            if self.dark_state in (t.ground, t.excited):
                raise ValueError("the dark state must not be coupled by any transition")
        for (e, u), frac in self.decay_branching.items():
            if e not in known or u not in known:
                raise ValueError(f"decay channel {e}->{u} references unknown levels")
            if frac < 0:
                raise ValueError("decay branching must be non-negative")
        for e in {e for e, _ in self.decay_branching}:
            if self.total_branching(e) > 1.0 + 1e-12:
                raise ValueError(f"decay out of {e!r} exceeds the natural linewidth")
        for lab in (self.initial_state, self.target_state):
            if lab and lab not in known:
                raise ValueError(f"unknown level {lab!r}")

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(lv.label for lv in self.levels)

    @property
    def size(self) -> int:
        return len(self.levels)

    def index(self, label: str) -> int:
        return self.labels.index(label)

    def level(self, label: str) -> AtomicLevel:
        return self.levels[self.index(label)]

    @property
    def energies(self) -> np.ndarray:
        return np.array([lv.energy for lv in self.levels])

    def excited_mask(self) -> np.ndarray:
        return np.array([lv.kind == "excited" for lv in self.levels])

    def total_branching(self, excited: str) -> float:
        return float(sum(f for (e, _), f in self.decay_branching.items() if e == excited))

    def decay_rates(self, gamma: float) -> dict[tuple[str, str], float]:
        """Per-channel amplitude decay rates gamma_eu for total amplitude decay ``gamma``."""
        return {k: gamma * f for k, f in self.decay_branching.items() if gamma * f > 0}

    def driven(self, driver: str) -> tuple[Transition, ...]:
        return tuple(t for t in self.transitions if driver in t.driven_by)

    def raman_detuning_frequency(self) -> float:
        """Energy released by the Raman transfer initial -> target (laser - cavity)."""
        return self.level(self.initial_state).energy - self.level(self.target_state).energy


def three_level_lambda(excited_detuning: float = 0.0, ground_splitting: float = 0.0) -> LevelScheme:
    """Ideal Lambda system: the pump drives u- <-> e0, the cavity takes e0 -> u+ emitting sigma-.

    ``excited_detuning`` shifts e0 from the cavity/pump reference, ``ground_splitting`` is
    E(u-) - E(u+). Spontaneous emission, if enabled through gamma, is split evenly.
    """
    levels = (
        AtomicLevel("u+", -0.5 * ground_splitting, "ground", 1.0),
        AtomicLevel("u-", 0.5 * ground_splitting, "ground", -1.0),
        AtomicLevel("e0", float(excited_detuning), "excited", 0.0),
    )
    transitions = (
        Transition("u-", "e0", "sigma+", 1.0, ("pump",)),
        Transition("u+", "e0", "sigma-", 1.0, ("cavity",)),
    )
    branching = {("e0", "u+"): 0.5, ("e0", "u-"): 0.5}
    return LevelScheme("three_level", levels, transitions, branching,
                       initial_state="u-", target_state="u+")


def ground_label(m: int) -> str:
    return f"F=1,mF={m:+d}" if m else "F=1,mF=0"


def excited_label(fp: int, mp: int) -> str:
    return f"F'={fp},mF'={mp:+d}" if mp else f"F'={fp},mF'=0"


def rb87_d2_scheme(zeeman_ground_splitting: float = 26.0 * MHZ,
                   excited_shifts: Mapping[str, float] | None = None,
                   raman_offset: float = 7.5 * MHZ,
                   emission: str = "sigma-",
                   dark_branching: float | None = None,
                   include_dark: bool = True) -> LevelScheme:
    """F=1 <-> F'=0,1 sublevels of the Rb-87 D2 line plus an aggregate dark level.

    Zeeman energies are linear in mF, scaled so that ``zeeman_ground_splitting`` separates
    mF = +1 and -1. ``excited_shifts`` (label -> rad/s) replaces the energy of any level,
    ground or excited, for datasets with known nonlinear shifts. ``emission`` picks the
    Raman transfer: sigma- goes mF=-1 -> +1, sigma+ goes +1 -> -1. ``dark_branching``
    overrides the F'=1 -> F=2 fraction; with ``include_dark=False`` that share is
    redistributed over the F=1 channels instead of being lost.
    """
    if zeeman_ground_splitting < 0:
        raise ValueError("ground Zeeman splitting must be non-negative")
    if emission not in ("sigma+", "sigma-"):
        raise ValueError(f"emission must be 'sigma+' or 'sigma-', got {emission!r}")
    mu_b_field = zeeman_ground_splitting / (2 * abs(RB87_LANDE_G["ground"]))
    overrides = dict(excited_shifts or {})

    def energy(label, default):
        return float(overrides.pop(label, default))

    levels = [AtomicLevel(ground_label(m), energy(ground_label(m), RB87_LANDE_G["ground"] * mu_b_field * m),
                          "ground", float(m)) for m in (-1, 0, 1)]
    if include_dark:
        levels.append(AtomicLevel("dark", 0.0, "dark"))
    for fp in (0, 1):
        for mp in range(-fp, fp + 1):
            lab = excited_label(fp, mp)
            default = RB87_EXCITED_HYPERFINE[fp] + RB87_LANDE_G[fp] * mu_b_field * mp
            levels.append(AtomicLevel(lab, energy(lab, default), "excited", float(mp)))
    if overrides:
        raise ValueError(f"unknown levels in shift overrides: {sorted(overrides)}")

    transitions = []
    branching: dict[tuple[str, str], float] = {}
    for (fp, mp, m), c in RB87_D2_F1_FACTORS.items():
        e, u = excited_label(fp, mp), ground_label(m)
        q = mp - m
        pol = {1: "sigma+", -1: "sigma-", 0: "pi"}[q]
        drivers = () if pol == "pi" else ("pump", "cavity")
        if c != 0.0:
            transitions.append(Transition(u, e, pol, float(c), drivers))
        branching[(e, u)] = c * c / _RB87_SQUARE_SUM_NORM
    for fp in (0, 1):
        f1 = RB87_D2_F1_BRANCHING[fp]
        to_dark = 1.0 - f1
        if fp == 1 and dark_branching is not None:
            if not 0.0 <= dark_branching <= 1.0:
                raise ValueError("dark branching must lie in [0, 1]")
            to_dark = dark_branching
        for mp in range(-fp, fp + 1):
            e = excited_label(fp, mp)
            # rescale F=1 channels so they carry 1 - to_dark (or everything without a dark level)
            keep = (1.0 - to_dark) if include_dark else 1.0
            for m in range(mp - 1, mp + 2):
                if (e, ground_label(m)) in branching:
                    branching[(e, ground_label(m))] *= keep / f1
            if include_dark and to_dark > 0:
                branching[(e, "dark")] = to_dark
    branching = {k: v for k, v in branching.items() if v > 0}

    start, end = (-1, 1) if emission == "sigma-" else (1, -1)
    return LevelScheme("rb87_d2", tuple(levels), tuple(transitions), branching,
                       initial_state=ground_label(start), target_state=ground_label(end),
                       dark_state="dark" if include_dark else None,
                       raman_frequency=float(raman_offset))


def find_transition(scheme: LevelScheme, ground: str, excited: str) -> Transition:
    for t in scheme.transitions:
        if t.ground == ground and t.excited == excited:
            return t
    raise UnknownTransitionError(f"no transition {ground} <-> {excited} in scheme {scheme.name!r}")


def projector(scheme: LevelScheme, bra: str, ket: str) -> np.ndarray:
    """|ket><bra| on the atomic factor alone."""
    m = np.zeros((scheme.size, scheme.size), dtype=complex)
    m[scheme.index(ket), scheme.index(bra)] = 1.0
    return m


def transition_operator(scheme: LevelScheme, t: Transition, space: HilbertSpace) -> Operator:
    """Embedded raising operator strength * |e><u| for transition ``t``."""
    if t not in scheme.transitions:
        raise UnknownTransitionError(f"transition {t.ground}<->{t.excited} not in scheme {scheme.name!r}")
    if space.dims[space.index("atom")] != scheme.size:
        raise ValueError(f"atom factor has dim {space.dims[space.index('atom')]}, scheme has {scheme.size} levels")
    return embed(t.relative_strength * projector(scheme, t.ground, t.excited), "atom", space)
