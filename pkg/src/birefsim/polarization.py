"""Jones calculus for the three polarisation bases in play.

``atomic``  circular {+, -} basis of the sigma transitions
``cavity``  the (possibly elliptical) eigenmodes {X, Y}
``lab``     linear {H, V} basis defined by the analyser PBS

Orientations are stored for the cavity -> lab direction, which is what a
transmission polarimetry measurement gives; every other rotation is
derived by composition and adjoint.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

BASES = ("atomic", "cavity", "lab")
UNITARY_TOL = 1e-12


class NonUnitaryError(ValueError):
    pass


def normalize_phase(components) -> np.ndarray:
    """Remove the global phase so the first nonzero entry is real and positive."""
    v = np.asarray(components, dtype=complex)
    nz = np.flatnonzero(np.abs(v) > 1e-15)
    if nz.size == 0:
        return v.copy()
    lead = v[nz[0]]
    return v * (abs(lead) / lead)


def same_up_to_phase(a, b, tol: float = 1e-12) -> bool:
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    overlap = np.vdot(a, b)
    if abs(overlap) < 1e-300:
        return bool(np.allclose(a, b, atol=tol))
    return bool(np.max(np.abs(a * (overlap / abs(overlap)) - b)) <= tol)


@dataclass(frozen=True, eq=False)
class JonesVector:
    components: np.ndarray = field(repr=False)
    basis: str = "lab"

    def __post_init__(self):
        v = np.asarray(self.components, dtype=complex).reshape(2)
        if abs(np.linalg.norm(v) - 1.0) > 1e-12:
            raise ValueError(f"Jones vector must have unit norm, got {np.linalg.norm(v):.15g}")
        if self.basis not in BASES:
            raise ValueError(f"unknown basis {self.basis!r}")
        v.setflags(write=False)
        object.__setattr__(self, "components", v)

    @classmethod
    def normalized(cls, components, basis: str = "lab") -> "JonesVector":
        v = np.asarray(components, dtype=complex)
        return cls(v / np.linalg.norm(v), basis)

    def orthogonal(self) -> "JonesVector":
        a, b = self.components
        return JonesVector(np.array([-np.conj(b), np.conj(a)]), self.basis)

    def canonical(self) -> np.ndarray:
        return normalize_phase(self.components)

    def __repr__(self):
        a, b = self.canonical()
        return f"JonesVector(({a:.4g}, {b:.4g}), basis={self.basis!r})"


@dataclass(frozen=True, eq=False)
class JonesMatrix:
    entries: np.ndarray = field(repr=False)
    from_basis: str = "lab"
    to_basis: str = "lab"

    def __post_init__(self):
        m = np.asarray(self.entries, dtype=complex).reshape(2, 2)
        m.setflags(write=False)
        object.__setattr__(self, "entries", m)

    def unitarity_error(self) -> float:
        return float(np.max(np.abs(self.entries.conj().T @ self.entries - np.eye(2))))

    def is_unitary(self, tol: float = UNITARY_TOL) -> bool:
        return self.unitarity_error() <= tol

    def dag(self) -> "JonesMatrix":
        return JonesMatrix(self.entries.conj().T, self.to_basis, self.from_basis)

    def __matmul__(self, other):
        if isinstance(other, JonesMatrix):
            if other.to_basis != self.from_basis:
                raise ValueError(f"cannot compose {other.from_basis}->{other.to_basis} with "
                                 f"{self.from_basis}->{self.to_basis}")
            return JonesMatrix(self.entries @ other.entries, other.from_basis, self.to_basis)
        if isinstance(other, JonesVector):
            if other.basis != self.from_basis:
                raise ValueError(f"vector in {other.basis!r} basis, matrix expects {self.from_basis!r}")
            v = self.entries @ other.components
            return JonesVector(v / np.linalg.norm(v), self.to_basis) if self.is_unitary(1e-9) \
                else v
        return NotImplemented


@dataclass(frozen=True)
class EigenmodeOrientation:
    """Parameters (alpha, phi1, phi2) of the general 2x2 unitary rotation, angles in radians."""
    alpha: float
    phi1: float
    phi2: float

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        if not (np.isfinite(self.phi1) and np.isfinite(self.phi2)):
            raise ValueError("orientation angles must be finite")

    @classmethod
    def from_degrees(cls, alpha: float, phi1_deg: float, phi2_deg: float) -> "EigenmodeOrientation":
        return cls(float(alpha), float(np.deg2rad(phi1_deg)), float(np.deg2rad(phi2_deg)))

    def degrees(self) -> tuple[float, float, float]:
        return self.alpha, float(np.rad2deg(self.phi1)), float(np.rad2deg(self.phi2))


# cavity eigenmodes {X, Y} = {H, V}
LINEAR = EigenmodeOrientation(1.0, 0.0, 0.0)
# cavity eigenmodes {X, Y} = {+, -}; identical to the atomic -> lab map
CIRCULAR = EigenmodeOrientation(1.0 / np.sqrt(2.0), 0.0, np.pi / 2)
# measured orientation of the experimental cavity
MEASURED = EigenmodeOrientation.from_degrees(0.888, 115.1, -40.1)


def rotation_matrix(o: EigenmodeOrientation, from_basis: str = "cavity",
                    to_basis: str = "lab") -> JonesMatrix:
    a = o.alpha
    b = np.sqrt(1.0 - a * a)
    m = np.array([
        [np.exp(1j * o.phi1) * a, -np.exp(-1j * o.phi2) * b],
        [np.exp(1j * o.phi2) * b, np.exp(-1j * o.phi1) * a],
    ])
    return JonesMatrix(m, from_basis, to_basis)


ATOMIC_TO_LAB = rotation_matrix(CIRCULAR, "atomic", "lab")

H = JonesVector(np.array([1.0, 0.0]), "lab")
V = JonesVector(np.array([0.0, 1.0]), "lab")
PLUS = ATOMIC_TO_LAB @ JonesVector(np.array([1.0, 0.0]), "atomic")
MINUS = ATOMIC_TO_LAB @ JonesVector(np.array([0.0, 1.0]), "atomic")
NAMED_STATES = {"H": H, "V": V, "+": PLUS, "-": MINUS}


def cavity_to_lab(cavity_orientation: EigenmodeOrientation) -> JonesMatrix:
    return rotation_matrix(cavity_orientation, "cavity", "lab")


def atomic_to_cavity_rotation(cavity_orientation: EigenmodeOrientation) -> JonesMatrix:
    """R_AC = R_LC . R_AL with R_LC the adjoint of the measured cavity -> lab map."""
    return cavity_to_lab(cavity_orientation).dag() @ ATOMIC_TO_LAB


def eigenmode_states(cavity_orientation: EigenmodeOrientation) -> tuple[JonesVector, JonesVector]:
    """Lab-basis polarisations of the X and Y eigenmodes."""
    r = cavity_to_lab(cavity_orientation).entries
    return JonesVector(r[:, 0], "lab"), JonesVector(r[:, 1], "lab")


def map_creation_operator(atomic_pol: str, rot: JonesMatrix) -> tuple[complex, complex]:
    """Coefficients (c_X, c_Y) with a_pol^dag = c_X a_X^dag + c_Y a_Y^dag."""
    if atomic_pol not in ("+", "-"):
        raise ValueError(f"atomic polarisation must be '+' or '-', got {atomic_pol!r}")
    if not rot.is_unitary():
        raise NonUnitaryError(f"rotation is not unitary (error {rot.unitarity_error():.3g})")
    col = rot.entries[:, 0 if atomic_pol == "+" else 1]
    return complex(col[0]), complex(col[1])


def _real_rotation(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def waveplate(retardance: float, angle_phi: float) -> JonesMatrix:
    """Retarder with fast axis at ``angle_phi`` (radians) from H."""
    phi = float(np.mod(angle_phi, np.pi))
    r = _real_rotation(phi)
    m = r @ np.diag([1.0, np.exp(1j * retardance)]) @ r.T
    return JonesMatrix(m, "lab", "lab")


def quarter_wave_plate(angle_phi: float) -> JonesMatrix:
    return waveplate(np.pi / 2, angle_phi)


def half_wave_plate(angle_phi: float) -> JonesMatrix:
    return waveplate(np.pi, angle_phi)


def pbs_projectors() -> tuple[JonesMatrix, JonesMatrix]:
    return (JonesMatrix(np.diag([1.0, 0.0]), "lab", "lab"),
            JonesMatrix(np.diag([0.0, 1.0]), "lab", "lab"))


def analyzer_modes(qwp_angle: float) -> tuple[JonesVector, JonesVector]:
    """Input polarisations routed fully to the H and V ports behind QWP(phi) + PBS."""
    q = quarter_wave_plate(qwp_angle).dag()
    return q @ H, q @ V
