"""Dense operator algebra on small tensor-product Hilbert spaces.

Factor order is always (atom, cavity X, cavity Y); the spaces here never
exceed a few dozen states so everything is stored as dense complex arrays.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import reduce
from typing import Sequence

import numpy as np

POSITIVITY_TOL = 1e-8


class DimensionError(ValueError):
    pass


class SpaceMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class HilbertSpace:
    factors: tuple[tuple[str, int], ...]

    def __post_init__(self):
        labels = [lab for lab, _ in self.factors]
        if len(set(labels)) != len(labels):
            raise ValueError(f"factor labels must be unique, got {labels}")
        for lab, dim in self.factors:
            if int(dim) < 1:
                raise DimensionError(f"factor {lab!r} has dimension {dim} < 1")

    @classmethod
    def of(cls, *factors: tuple[str, int]) -> "HilbertSpace":
        return cls(tuple((str(lab), int(dim)) for lab, dim in factors))

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(lab for lab, _ in self.factors)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(dim for _, dim in self.factors)

    @property
    def total_dim(self) -> int:
        return int(np.prod(self.dims))

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise KeyError(f"no factor labelled {label!r} in {self.labels}") from None

    def basis_index(self, *occupations: int) -> int:
        """Flat index of the product basis state |i, j, k, ...>."""
        return int(np.ravel_multi_index(tuple(occupations), self.dims))

    def basis_ket(self, *occupations: int) -> np.ndarray:
        ket = np.zeros(self.total_dim, dtype=complex)
        ket[self.basis_index(*occupations)] = 1.0
        return ket


@dataclass(frozen=True, eq=False)
class Operator:
    space: HilbertSpace
    matrix: np.ndarray = field(repr=False)

    def __post_init__(self):
        mat = np.asarray(self.matrix, dtype=complex)
        n = self.space.total_dim
        if mat.shape != (n, n):
            raise DimensionError(f"operator shape {mat.shape} does not match space dimension {n}")
        mat.setflags(write=False)
        object.__setattr__(self, "matrix", mat)

    def _check(self, other: "Operator"):
        if other.space != self.space:
            raise SpaceMismatchError(f"{self.space.factors} vs {other.space.factors}")

    def dag(self) -> "Operator":
        return Operator(self.space, self.matrix.conj().T)

    def __matmul__(self, other: "Operator") -> "Operator":
        self._check(other)
        return Operator(self.space, self.matrix @ other.matrix)

    def __add__(self, other: "Operator") -> "Operator":
        self._check(other)
        return Operator(self.space, self.matrix + other.matrix)

    def __sub__(self, other: "Operator") -> "Operator":
        self._check(other)
        return Operator(self.space, self.matrix - other.matrix)

    def __mul__(self, scalar) -> "Operator":
        return Operator(self.space, self.matrix * scalar)

    __rmul__ = __mul__

    def __neg__(self) -> "Operator":
        return Operator(self.space, -self.matrix)

    def is_hermitian(self, tol: float = 1e-12) -> bool:
        return bool(np.max(np.abs(self.matrix - self.matrix.conj().T), initial=0.0) <= tol)

    def norm(self) -> float:
        """Operator (spectral) norm."""
        return float(np.linalg.norm(self.matrix, 2))


def identity(space: HilbertSpace) -> Operator:
    return Operator(space, np.eye(space.total_dim, dtype=complex))


def commutator(a: Operator, b: Operator) -> Operator:
    return a @ b - b @ a


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    space: HilbertSpace
    matrix: np.ndarray = field(repr=False)
    validate: bool = field(default=True, repr=False)

    def __post_init__(self):
        mat = np.asarray(self.matrix, dtype=complex)
        n = self.space.total_dim
        if mat.shape != (n, n):
            raise DimensionError(f"density matrix shape {mat.shape} does not match space dimension {n}")
        if self.validate:
            if np.max(np.abs(mat - mat.conj().T)) > 1e-8:
                raise ValueError("density matrix is not Hermitian")
            if abs(np.trace(mat) - 1.0) > 1e-6:
                raise ValueError(f"density matrix trace {np.trace(mat).real:.3g} != 1")
            if np.linalg.eigvalsh(0.5 * (mat + mat.conj().T)).min() < -POSITIVITY_TOL:
                raise ValueError("density matrix has negative eigenvalues")
        mat.setflags(write=False)
        object.__setattr__(self, "matrix", mat)

    @classmethod
    def from_ket(cls, space: HilbertSpace, ket) -> "DensityMatrix":
        ket = np.asarray(ket, dtype=complex)
        ket = ket / np.linalg.norm(ket)
        return cls(space, np.outer(ket, ket.conj()))

    @classmethod
    def basis_state(cls, space: HilbertSpace, *occupations: int) -> "DensityMatrix":
        return cls.from_ket(space, space.basis_ket(*occupations))

    @classmethod
    def maximally_mixed(cls, space: HilbertSpace) -> "DensityMatrix":
        n = space.total_dim
        return cls(space, np.eye(n, dtype=complex) / n)

    def trace(self) -> complex:
        return complex(np.trace(self.matrix))

    def purity(self) -> float:
        return float(np.real(np.einsum("ij,ji->", self.matrix, self.matrix)))

    def hermiticity_error(self) -> float:
        return float(np.max(np.abs(self.matrix - self.matrix.conj().T)))

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(0.5 * (self.matrix + self.matrix.conj().T)).min())


def annihilation(dim: int) -> np.ndarray:
    """Truncated lowering operator on a single Fock factor."""
    if int(dim) != dim or dim < 2:
        raise DimensionError(f"annihilation operator needs dim >= 2, got {dim}")
    return np.diag(np.sqrt(np.arange(1, dim)), k=1).astype(complex)


def embed(op, target_factor: str, space: HilbertSpace) -> Operator:
    """Lift a single-factor matrix to ``I x ... x op x ... x I`` on ``space``."""
    op = np.asarray(op, dtype=complex)
    pos = space.index(target_factor)
    dim = space.dims[pos]
    if op.shape != (dim, dim):
        raise DimensionError(f"operator of shape {op.shape} cannot act on factor {target_factor!r} of dim {dim}")
    parts = [op if i == pos else np.eye(d, dtype=complex) for i, d in enumerate(space.dims)]
    return Operator(space, reduce(np.kron, parts))


def tensor(*mats: np.ndarray) -> np.ndarray:
    return reduce(np.kron, [np.asarray(m, dtype=complex) for m in mats])


def expectation(rho: DensityMatrix, op: Operator) -> complex:
    if rho.space != op.space:
        raise SpaceMismatchError(f"{rho.space.factors} vs {op.space.factors}")
    return complex(np.einsum("ij,ji->", rho.matrix, op.matrix))


def expectation_series(states: np.ndarray, ops: Sequence[np.ndarray]) -> np.ndarray:
    """Tr(rho_k A_k) for stacked (K, n, n) states and (K, n, n) operators."""
    return np.einsum("kij,kji->k", states, np.asarray(ops))
