"""Dense complex-matrix algebra for small Hilbert spaces.

Everything is a plain numpy array of complex128; the helpers here add the
structure the solvers rely on (tensor products, partial traces, matrix
exponentials, entropy) together with validated density-operator and
bipartite-shape types.  All Hilbert spaces are desk scale (<= 64 dimensions),
so dense storage is used throughout.

Basis convention: for qubit operators, row/column 0 is the sigma_3 = +1
eigenstate |1> and index 1 is |0>.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

HERMITICITY_TOL = 1e-10
POSITIVITY_FLOOR = 1e-9
EXP_DIM_CAP = 64

SIGMA_1 = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_2 = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_3 = np.array([[1, 0], [0, -1]], dtype=complex)
IDENTITY_2 = np.eye(2, dtype=complex)
SIGMA_PLUS = np.array([[0, 1], [0, 0]], dtype=complex)
SIGMA_MINUS = np.array([[0, 0], [1, 0]], dtype=complex)


def as_matrix(m) -> np.ndarray:
    """Coerce to a 2-D complex128 array."""
    a = np.asarray(m, dtype=complex)
    if a.ndim != 2:
        raise ValueError(f"expected a matrix, got shape {a.shape}")
    return a


def dagger(m: np.ndarray) -> np.ndarray:
    return np.conj(np.transpose(m))


def is_hermitian(m, tol: float = HERMITICITY_TOL) -> bool:
    a = as_matrix(m)
    return a.shape[0] == a.shape[1] and np.max(np.abs(a - dagger(a))) <= tol


def matrices_close(a, b, tol: float) -> bool:
    """Entrywise equality with an explicit absolute tolerance."""
    return np.max(np.abs(as_matrix(a) - as_matrix(b))) <= tol


def tensor(a, b) -> np.ndarray:
    return np.kron(as_matrix(a), as_matrix(b))


def _check_same_square(a, b):
    if a.shape != b.shape or a.shape[0] != a.shape[1]:
        raise ValueError(f"incompatible shapes {a.shape} and {b.shape}")


def commutator(a, b) -> np.ndarray:
    a, b = as_matrix(a), as_matrix(b)
    _check_same_square(a, b)
    return a @ b - b @ a


def anticommutator(a, b) -> np.ndarray:
    a, b = as_matrix(a), as_matrix(b)
    _check_same_square(a, b)
    return a @ b + b @ a


@dataclass(frozen=True)
class BipartiteShape:
    """System (x) environment factorization of a total Hilbert space."""

    dim_system: int
    dim_env: int

    def __post_init__(self):
        if self.dim_system < 1 or self.dim_env < 1:
            raise ValueError("dimensions must be positive")

    @property
    def total(self) -> int:
        return self.dim_system * self.dim_env

    def check(self, m: np.ndarray):
        if m.shape != (self.total, self.total):
            raise ValueError(
                f"matrix shape {m.shape} does not match {self.dim_system}x{self.dim_env}")


def partial_trace_env(m, shape: BipartiteShape) -> np.ndarray:
    """Trace out the environment factor: sum_k <i,k|m|j,k>."""
    a = as_matrix(m)
    shape.check(a)
    r = a.reshape(shape.dim_system, shape.dim_env, shape.dim_system, shape.dim_env)
    return np.einsum('akbk->ab', r)


def partial_trace_system(m, shape: BipartiteShape) -> np.ndarray:
    a = as_matrix(m)
    shape.check(a)
    r = a.reshape(shape.dim_system, shape.dim_env, shape.dim_system, shape.dim_env)
    return np.einsum('kakb->ab', r)


def matrix_exp(m, scale: complex = 1.0) -> np.ndarray:
    """exp(scale*m) by eigendecomposition when scale*m is (anti-)hermitian.

    Falls back to scaling-and-squaring Pade (scipy) for general arguments.
    """
    a = as_matrix(m)
    if a.shape[0] != a.shape[1]:
        raise ValueError("matrix_exp needs a square matrix")
    if a.shape[0] > EXP_DIM_CAP:
        raise ValueError(f"matrix_exp capped at dimension {EXP_DIM_CAP}")
    if not (np.all(np.isfinite(a)) and np.isfinite(scale)):
        raise ValueError("non-finite entries in matrix_exp argument")
    a = a * scale
    if is_hermitian(a):
        w, v = np.linalg.eigh(a)
        return (v * np.exp(w)) @ dagger(v)
    if is_hermitian(1j * a):  # anti-hermitian: a = -iH with H hermitian
        h = (1j * a)
        w, v = np.linalg.eigh(h)
        return (v * np.exp(-1j * w)) @ dagger(v)
    return scipy.linalg.expm(a)


@dataclass(frozen=True)
class DensityOperator:
    """Hermitian, unit-trace, positive-semidefinite matrix within tolerance."""

    matrix: np.ndarray
    tolerance: float = POSITIVITY_FLOOR

    def __post_init__(self):
        m = as_matrix(self.matrix)
        object.__setattr__(self, 'matrix', m)
        if m.shape[0] != m.shape[1]:
            raise ValueError("density operator must be square")
        if self.tolerance < 0:
            raise ValueError("tolerance must be non-negative")
        herm_tol = max(self.tolerance, HERMITICITY_TOL)
        if np.max(np.abs(m - dagger(m))) > herm_tol:
            raise ValueError("density operator is not hermitian within tolerance")
        tr = np.trace(m)
        if abs(tr - 1.0) > max(self.tolerance, 1e-10):
            raise ValueError(f"density operator trace {tr} is not 1 within tolerance")
        evals = np.linalg.eigvalsh(0.5 * (m + dagger(m)))
        if evals.min() < -self.tolerance:
            raise ValueError(
                f"density operator has eigenvalue {evals.min():.3e} below -tolerance")

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(0.5 * (self.matrix + dagger(self.matrix)))


def von_neumann_entropy(rho, tolerance: float = POSITIVITY_FLOOR) -> float:
    """-Tr[rho ln rho] in nats, with 0 ln 0 := 0."""
    m = rho.matrix if isinstance(rho, DensityOperator) else as_matrix(rho)
    evals = np.linalg.eigvalsh(0.5 * (m + dagger(m)))
    if evals.min() < -tolerance:
        raise ValueError(f"eigenvalue {evals.min():.3e} below -{tolerance:g}")
    lam = np.clip(evals, 0.0, None)
    lam = lam[lam > 0.0]
    return float(-np.sum(lam * np.log(lam)))


def random_density(dim: int, rng: np.random.Generator,
                   tolerance: float = POSITIVITY_FLOOR) -> DensityOperator:
    """Random full-rank density operator (Ginibre construction)."""
    g = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    m = g @ dagger(g)
    return DensityOperator(m / np.trace(m), tolerance)


def random_pure_density(dim: int, rng: np.random.Generator) -> DensityOperator:
    v = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    v /= np.linalg.norm(v)
    return DensityOperator(np.outer(v, v.conj()))
