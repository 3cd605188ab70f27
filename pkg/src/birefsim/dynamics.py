"""Hamiltonian assembly, rotating frame and Lindblad integration.

Units: hbar = 1, times in seconds, frequencies in rad/s. Optical
frequencies (excited levels, cavity modes, pump) are offsets from the
scheme's reference transition, which is itself a rotating frame of the
excitation number and changes nothing physical.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import expm

from . import polarization as pol
from .atom import LevelScheme, MHZ, three_level_lambda
from .quantum import DensityMatrix, HilbertSpace, Operator, annihilation, embed

PULSE_SHAPES = ("sin2_amplitude", "sin4_amplitude", "constant")
DEFAULT_RTOL = 1e-8
DEFAULT_ATOL = 1e-10


class IntegrationError(RuntimeError):
    pass


class FrameError(ValueError):
    pass


@dataclass(frozen=True)
class PulseProfile:
    peak_rabi: float
    duration: float
    shape: str = "sin2_amplitude"
    # two-photon detuning of the pump from exact Raman resonance
    detuning: float = 0.0

    def __post_init__(self):
        if not self.duration > 0:
            raise ValueError("pulse duration must be positive")
        if self.shape not in PULSE_SHAPES:
            raise ValueError(f"unknown pulse shape {self.shape!r}")


def pulse_amplitude(p: PulseProfile, t):
    """Rabi frequency Omega(t); zero outside [0, T]."""
    t = np.asarray(t, dtype=float)
    inside = (t >= 0) & (t <= p.duration)
    s = np.sin(np.pi * t / p.duration)
    if p.shape == "sin2_amplitude":
        env = s ** 2
    elif p.shape == "sin4_amplitude":
        env = s ** 4
    else:
        env = np.ones_like(t)
    out = np.where(inside, p.peak_rabi * env, 0.0)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class SystemConfig:
    g: float
    kappa: float
    gamma: float
    delta_p: float
    pulse: PulseProfile
    scheme: LevelScheme = field(default_factory=three_level_lambda)
    cavity_orientation: pol.EigenmodeOrientation = pol.LINEAR
    # mean eigenmode frequency relative to the Raman resonance
    cavity_center_detuning: float = 0.0
    fock_truncation: int = 2

    def __post_init__(self):
        if self.g < 0 or self.kappa < 0 or self.gamma < 0:
            raise ValueError("g, kappa and gamma must be non-negative")
        if int(self.fock_truncation) < 2:
            raise ValueError("fock truncation must be at least 2")
        if not all(np.isfinite([self.g, self.kappa, self.gamma, self.delta_p, self.cavity_center_detuning])):
            raise ValueError("rates must be finite")

    @property
    def mode_frequencies(self) -> tuple[float, float]:
        centre = self.scheme.raman_frequency + self.cavity_center_detuning
        return centre + 0.5 * self.delta_p, centre - 0.5 * self.delta_p

    @property
    def omega_L(self) -> float:
        """Pump frequency satisfying the Raman condition, plus the pulse detuning."""
        return self.scheme.raman_frequency - self.scheme.raman_detuning_frequency() + self.pulse.detuning

    def with_(self, **changes) -> "SystemConfig":
        return replace(self, **changes)


def hilbert_space(cfg: SystemConfig) -> HilbertSpace:
    n = int(cfg.fock_truncation)
    return HilbertSpace.of(("atom", cfg.scheme.size), ("X", n), ("Y", n))


class CavityModel:
    """Operators and frame data for one configuration, built once and reused."""

    def __init__(self, cfg: SystemConfig):
        self.cfg = cfg
        self.space = hilbert_space(cfg)
        scheme = cfg.scheme
        n = int(cfg.fock_truncation)
        a = annihilation(n)
        self.a_x = embed(a, "X", self.space)
        self.a_y = embed(a, "Y", self.space)
        self.n_x = self.a_x.dag() @ self.a_x
        self.n_y = self.a_y.dag() @ self.a_y

        w_x, w_y = cfg.mode_frequencies
        self.mode_frequencies = np.array([w_x, w_y])
        atom_diag = embed(np.diag(scheme.energies), "atom", self.space)
        self.H0 = atom_diag + w_x * self.n_x + w_y * self.n_y
        self.bare_energies = np.real(np.diag(self.H0.matrix)).copy()

        rot = pol.atomic_to_cavity_rotation(cfg.cavity_orientation)
        self.creation_coefficients = {p: pol.map_creation_operator(p, rot) for p in ("+", "-")}

        dim = self.space.total_dim
        # raising parts only (|e><u| ...); Hermitian conjugates are added when assembling
        self.pump_raising = np.zeros((dim, dim), dtype=complex)
        for t in scheme.driven("pump"):
            self.pump_raising += _atomic(scheme, t.ground, t.excited, t.relative_strength, self.space)
        self.cavity_raising = np.zeros((dim, dim), dtype=complex)
        for t in scheme.driven("cavity"):
            c_x, c_y = self.creation_coefficients[t.cavity_mode]
            # a_k = conj(c_X) a_X + conj(c_Y) a_Y
            a_k = np.conj(c_x) * self.a_x.matrix + np.conj(c_y) * self.a_y.matrix
            self.cavity_raising += _atomic(scheme, t.ground, t.excited, t.relative_strength, self.space) @ a_k

        de = self.bare_energies[:, None] - self.bare_energies[None, :]
        self._pump_freq = de - cfg.omega_L
        self._cav_freq = de.copy()

    @cached_property
    def collapse_operators(self) -> list[Operator]:
        cfg = self.cfg
        ops = [np.sqrt(2 * cfg.kappa) * self.a_x, np.sqrt(2 * cfg.kappa) * self.a_y]
        for (e, u), rate in cfg.scheme.decay_rates(cfg.gamma).items():
            ops.append(np.sqrt(2 * rate) * Operator(self.space, _atomic(cfg.scheme, u, e, 1.0, self.space).conj().T))
        return ops

    def hamiltonian(self, t: float) -> np.ndarray:
        """Bare-frame H(t) = H_atom + H_cav - (H_int,L + H_int,C)."""
        cfg = self.cfg
        omega = pulse_amplitude(cfg.pulse, t)
        pump = 0.5 * omega * self.pump_raising * np.exp(-1j * cfg.omega_L * t)
        coupling = pump + cfg.g * self.cavity_raising
        return self.H0.matrix - (coupling + coupling.conj().T)

    def frame_hamiltonian(self, t: float) -> np.ndarray:
        """H'(t) in the frame rotating with H0; zero diagonal by construction."""
        omega = pulse_amplitude(self.cfg.pulse, t)
        up = (0.5 * omega) * self.pump_raising * np.exp(1j * self._pump_freq * t)
        up += self.cfg.g * self.cavity_raising * np.exp(1j * self._cav_freq * t)
        return -(up + up.conj().T)

    def initial_state(self) -> DensityMatrix:
        return DensityMatrix.basis_state(self.space, self.cfg.scheme.index(self.cfg.scheme.initial_state), 0, 0)


def _atomic(scheme: LevelScheme, ground: str, excited: str, strength: float, space: HilbertSpace) -> np.ndarray:
    m = np.zeros((scheme.size, scheme.size), dtype=complex)
    m[scheme.index(excited), scheme.index(ground)] = strength
    return embed(m, "atom", space).matrix


def build_hamiltonian(cfg: SystemConfig, t: float) -> Operator:
    model = CavityModel(cfg)
    return Operator(model.space, model.hamiltonian(t))


def _diagonal_of(h0) -> np.ndarray:
    m = h0.matrix if isinstance(h0, Operator) else np.asarray(h0)
    if m.ndim == 1:
        return m.astype(float)
    d = np.diag(m)
    if np.max(np.abs(m - np.diag(d)), initial=0.0) > 0:
        raise FrameError("frame generator H0 must be diagonal")
    return np.real(d)


def frame_rotate_operator(op, h0, t: float):
    """U^dag(t) op U(t) with U = exp(-i H0 t) for diagonal H0."""
    e = _diagonal_of(h0)
    phase = np.exp(1j * (e[:, None] - e[None, :]) * t)
    if isinstance(op, Operator):
        return Operator(op.space, op.matrix * phase)
    return np.asarray(op) * phase


def to_rotating_frame(hamiltonian: Callable[[float], np.ndarray], h0=None) -> Callable[[float], np.ndarray]:
    """Return t -> U^dag H(t) U - H0, with H0 = diag(H) unless given explicitly."""
    if h0 is None:
        h0 = np.real(np.diag(np.asarray(hamiltonian(0.0))))
    e = _diagonal_of(h0)

    def rotated(t: float) -> np.ndarray:
        h = np.asarray(hamiltonian(t))
        if np.max(np.abs(np.real(np.diag(h)) - e)) > 1e-9 * max(1.0, np.max(np.abs(e))):
            raise FrameError("diagonal of H(t) is time dependent")
        return frame_rotate_operator(h, e, t) - np.diag(e)

    return rotated


def collapse_operators(cfg: SystemConfig) -> list[Operator]:
    return CavityModel(cfg).collapse_operators


def _as_matrix(x) -> np.ndarray:
    return x.matrix if isinstance(x, (Operator, DensityMatrix)) else np.asarray(x, dtype=complex)


def lindblad_rhs(rho, h, c_ops: Sequence) -> np.ndarray:
    """drho/dt = -i[H, rho] + sum_n (C rho C^dag - {C^dag C, rho}/2)."""
    r = _as_matrix(rho)
    hm = _as_matrix(h)
    if hm.shape != r.shape:
        raise ValueError(f"Hamiltonian {hm.shape} and state {r.shape} do not match")
    out = -1j * (hm @ r - r @ hm)
    for c in c_ops:
        cm = _as_matrix(c)
        if cm.shape != r.shape:
            raise ValueError("collapse operator does not match the state space")
        cdc = cm.conj().T @ cm
        out += cm @ r @ cm.conj().T - 0.5 * (cdc @ r + r @ cdc)
    return out


class _Dissipator:
    def __init__(self, c_ops):
        mats = [_as_matrix(c) for c in c_ops]
        mats = [m for m in mats if np.any(m)]
        self.c = np.array(mats) if mats else None
        if self.c is not None:
            self.cd = np.conj(np.transpose(self.c, (0, 2, 1)))
            self.k = 0.5 * np.einsum("kij,kjl->il", self.cd, self.c)

    def __call__(self, r: np.ndarray) -> np.ndarray:
        if self.c is None:
            return 0.0
        return np.sum(self.c @ r @ self.cd, axis=0) - self.k @ r - r @ self.k


def solve_master_equation(hamiltonian, c_ops: Sequence, rho0, times, *, rtol: float = DEFAULT_RTOL,
                          atol: float = DEFAULT_ATOL, max_step: float = np.inf,
                          method: str = "DOP853") -> np.ndarray:
    """Integrate the master equation and return states of shape (len(times), n, n).

    ``hamiltonian`` is either a constant matrix or a callable t -> matrix.
    """
    r0 = _as_matrix(rho0)
    n = r0.shape[0]
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size == 0 or np.any(np.diff(times) <= 0):
        raise ValueError("sample times must be a non-empty increasing grid")
    diss = _Dissipator(c_ops)
    if callable(hamiltonian):
        h_of_t = hamiltonian
    else:
        hm = _as_matrix(hamiltonian)
        h_of_t = lambda t: hm  # noqa: E731

    def rhs(t, y):
        r = y.reshape(n, n)
        h = h_of_t(t)
        out = (-1j * (h @ r - r @ h) + diss(r)).ravel()
        if not np.isfinite(out.sum()):
            raise IntegrationError(f"non-finite derivative at t = {t:.6g}")
        return out

    if times.size == 1 or times[-1] == times[0]:
        return np.repeat(r0[None], times.size, axis=0)
    try:
        sol = solve_ivp(rhs, (times[0], times[-1]), r0.ravel().astype(complex), method=method,
                        t_eval=times, rtol=rtol, atol=atol, max_step=max_step)
    except FloatingPointError as exc:
        raise IntegrationError(f"master equation integration failed: {exc}") from exc
    if not sol.success:
        raise IntegrationError(f"master equation integration failed: {sol.message}")
    return sol.y.T.reshape(times.size, n, n)


@dataclass(frozen=True, eq=False)
class Trajectory:
    times: np.ndarray
    rho: np.ndarray
    config: SystemConfig
    model: CavityModel = field(repr=False)

    @property
    def space(self) -> HilbertSpace:
        return self.model.space

    @property
    def states(self) -> list[DensityMatrix]:
        return [DensityMatrix(self.space, r, validate=False) for r in self.rho]

    def expect(self, op) -> np.ndarray:
        m = _as_matrix(op)
        return np.einsum("kij,ji->k", self.rho, m)

    def populations(self) -> np.ndarray:
        return np.real(np.einsum("kii->ki", self.rho))

    def atomic_populations(self) -> dict[str, np.ndarray]:
        dims = self.space.dims
        pops = self.populations().reshape(len(self.times), *dims)
        per_level = pops.sum(axis=(2, 3))
        return {lab: per_level[:, i] for i, lab in enumerate(self.config.scheme.labels)}


def default_time_grid(cfg: SystemConfig, tail: float | None = None, max_sample: float = 1e-9) -> np.ndarray:
    """Pulse window plus a decay tail, sampled finely enough for the birefringent beat."""
    if tail is None:
        tail = 8.0 / (2 * cfg.kappa) if cfg.kappa > 0 else 0.0
    t_end = cfg.pulse.duration + tail
    dt = max_sample
    if cfg.delta_p != 0:
        dt = min(dt, 2 * np.pi / abs(cfg.delta_p) / 40.0)
    n = int(np.ceil(t_end / dt)) + 1
    # odd sample count keeps Simpson's rule on whole panels
    if n % 2 == 0:
        n += 1
    return np.linspace(0.0, t_end, n)


def evolve(cfg: SystemConfig, rho0: DensityMatrix | None = None, times=None, dt_max: float | None = None,
           *, rtol: float = DEFAULT_RTOL, atol: float = DEFAULT_ATOL, model: CavityModel | None = None) -> Trajectory:
    model = model or CavityModel(cfg)
    if rho0 is None:
        rho0 = model.initial_state()
    if _as_matrix(rho0).shape != (model.space.total_dim,) * 2:
        raise ValueError("initial state does not match the model space")
    times = default_time_grid(cfg) if times is None else np.asarray(times, dtype=float)
    max_step = np.inf if dt_max is None else float(dt_max)
    rho = solve_master_equation(model.frame_hamiltonian, model.collapse_operators, rho0, times,
                                rtol=rtol, atol=atol, max_step=max_step)
    return Trajectory(times, rho, cfg, model)


def liouvillian(h, c_ops: Sequence) -> np.ndarray:
    """Column-stacking superoperator: vec(A rho B) = (B^T kron A) vec(rho)."""
    hm = _as_matrix(h)
    n = hm.shape[0]
    eye = np.eye(n)
    lv = -1j * (np.kron(eye, hm) - np.kron(hm.T, eye))
    for c in c_ops:
        cm = _as_matrix(c)
        cdc = cm.conj().T @ cm
        lv += np.kron(cm.conj(), cm) - 0.5 * np.kron(eye, cdc) - 0.5 * np.kron(cdc.T, eye)
    return lv


def liouvillian_expm_oracle(h, c_ops: Sequence, rho0, t):
    """Exact propagation of a time-independent problem by the superoperator exponential.

    ``t`` may be a scalar or a sequence; for a sequence the states are stacked.
    """
    if callable(h):
        raise FrameError("the exponential oracle needs a time-independent Hamiltonian")
    r0 = _as_matrix(rho0)
    n = r0.shape[0]
    lv = liouvillian(h, c_ops)
    vec0 = r0.reshape(-1, order="F")
    ts = np.atleast_1d(np.asarray(t, dtype=float))
    steps = np.diff(ts)
    if ts.size > 2 and np.allclose(steps, steps[0], rtol=1e-12, atol=0):
        # evenly spaced: one step propagator applied repeatedly
        step = expm(lv * steps[0])
        vecs = [vec0 if ts[0] == 0 else expm(lv * ts[0]) @ vec0]
        for _ in steps:
            vecs.append(step @ vecs[-1])
    else:
        vecs = [expm(lv * tk) @ vec0 for tk in ts]
    out = np.array([v.reshape(n, n, order="F") for v in vecs])
    return out[0] if np.ndim(t) == 0 else out


def config_expm_oracle(cfg: SystemConfig, rho0, t):
    """Propagate a constant-pulse configuration exactly and map into the simulation frame.

    In the frame co-rotating with the pump the Hamiltonian is constant while the pulse
    is on; the result is rotated by the remaining diagonal part to compare with evolve.
    """
    if cfg.pulse.shape != "constant":
        raise FrameError("oracle requires a constant pulse")
    ts = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(ts < 0) or np.any(ts > cfg.pulse.duration):
        raise FrameError("oracle only valid while the constant pulse is on")
    model = CavityModel(cfg)
    n_exc = embed(np.diag(cfg.scheme.excited_mask().astype(float)), "atom", model.space) + model.n_x + model.n_y
    h0_laser = model.H0 - cfg.omega_L * n_exc
    up = 0.5 * cfg.pulse.peak_rabi * model.pump_raising + cfg.g * model.cavity_raising
    h_laser = h0_laser.matrix - (up + up.conj().T)
    states = liouvillian_expm_oracle(h_laser, model.collapse_operators, rho0, ts)
    e = np.real(np.diag(h0_laser.matrix))
    out = np.array([frame_rotate_operator(s, e, tk) for s, tk in zip(states, ts)])
    return out[0] if np.ndim(t) == 0 else out


def mhz(x: float) -> float:
    """Ordinary frequency in MHz to angular frequency in rad/s."""
    return float(x) * MHZ
