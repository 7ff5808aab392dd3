"""Pauli-frame decomposition of qubit (x) environment states.

Any bipartite state on C^2 (x) H_E can be written as a weighted sum of
product operators

    rho_SE = sum_a w_a D_a (x) rho_a,

where the four fixed hermitian system operators D_a form the Pauli frame,
the rho_a are proper environment states, and the positive weights come from
the dual frame F_a through w_a rho_a = Tr_S[(F_a (x) 1) rho_SE].  The D_a
are hermitian but not necessarily positive; the F_a are positive, which is
what guarantees positivity of every rho_a.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .qmat import (BipartiteShape, DensityOperator, IDENTITY_2, SIGMA_1, SIGMA_2,
                   SIGMA_3, as_matrix, dagger, is_hermitian, partial_trace_env)

WEIGHT_CUTOFF = 1e-12
RECONSTRUCTION_TOL = 1e-10

_SQRT2 = np.sqrt(2.0)


@dataclass(frozen=True)
class PauliFrame:
    """The four system operators D_a and their positive duals F_a."""

    d_ops: tuple
    f_ops: tuple

    def duality_defect(self) -> float:
        """max_ab |Tr[F_b^dag D_a] - delta_ab|; zero for a valid frame."""
        dev = 0.0
        for a, d in enumerate(self.d_ops):
            for b, f in enumerate(self.f_ops):
                val = np.trace(dagger(f) @ d)
                dev = max(dev, abs(val - (1.0 if a == b else 0.0)))
        return dev


@lru_cache(maxsize=1)
def pauli_frame() -> PauliFrame:
    d_ops = (
        (IDENTITY_2 - SIGMA_1 - SIGMA_2 - SIGMA_3) / _SQRT2,
        SIGMA_1 / _SQRT2,
        SIGMA_2 / _SQRT2,
        SIGMA_3 / _SQRT2,
    )
    f_ops = (
        IDENTITY_2 / _SQRT2,
        (IDENTITY_2 + SIGMA_1) / _SQRT2,
        (IDENTITY_2 + SIGMA_2) / _SQRT2,
        (IDENTITY_2 + SIGMA_3) / _SQRT2,
    )
    frame = PauliFrame(d_ops, f_ops)
    assert frame.duality_defect() < 1e-12
    return frame


@dataclass(frozen=True)
class FrameTerm:
    """One (w_a, D_a, rho_a) triple; `index` is the Pauli-frame label a."""

    index: int
    weight: float
    system_op: np.ndarray
    env_state: DensityOperator

    def __post_init__(self):
        if self.weight <= 0:
            raise ValueError("frame-term weight must be positive")
        if not is_hermitian(self.system_op, 1e-10):
            raise ValueError("frame-term system operator must be hermitian")


@dataclass(frozen=True)
class FrameDecomposition:
    terms: tuple
    shape: BipartiteShape

    def __post_init__(self):
        if len(self.terms) > 4:
            raise ValueError("the Pauli frame has at most four terms")

    def term_by_index(self, a: int) -> FrameTerm | None:
        for t in self.terms:
            if t.index == a:
                return t
        return None

    def weight_trace_sum(self) -> float:
        """sum_a w_a Tr[D_a]; equals 1 for a unit-trace source state."""
        return float(np.real(sum(t.weight * np.trace(t.system_op)
                                 for t in self.terms)))


def decompose(rho_se, shape: BipartiteShape,
              weight_cutoff: float = WEIGHT_CUTOFF,
              positivity_tol: float = 1e-9) -> FrameDecomposition:
    """Pauli-frame decomposition w_a rho_a = Tr_S[(F_a (x) 1) rho_SE].

    Terms with weight <= weight_cutoff are dropped (their rho_a would be
    undefined); each surviving rho_a must validate as a density operator,
    which fails only if the input itself is numerically corrupted.
    """
    if shape.dim_system != 2:
        raise ValueError("the Pauli frame needs a two-dimensional system")
    m = as_matrix(rho_se.matrix if isinstance(rho_se, DensityOperator) else rho_se)
    shape.check(m)
    r = m.reshape(2, shape.dim_env, 2, shape.dim_env)
    frame = pauli_frame()
    terms = []
    for a, f in enumerate(frame.f_ops):
        # Tr_S[(F (x) 1) rho] contracts the system indices: sum_jk F_jk <k,.|rho|j,.>
        block = np.einsum('jk,kajb->ab', f, r)
        w = float(np.real(np.trace(block)))
        if w <= weight_cutoff:
            continue
        env = DensityOperator(block / w, tolerance=positivity_tol)
        terms.append(FrameTerm(a, w, frame.d_ops[a], env))
    return FrameDecomposition(tuple(terms), shape)


def reconstruct(dec: FrameDecomposition) -> DensityOperator:
    """sum_a w_a D_a (x) rho_a."""
    if not dec.terms:
        raise ValueError("cannot reconstruct from an empty decomposition")
    total = np.zeros((dec.shape.total, dec.shape.total), dtype=complex)
    for t in dec.terms:
        if t.env_state.dim != dec.shape.dim_env:
            raise ValueError("frame term dimension does not match decomposition shape")
        total += t.weight * np.kron(t.system_op, t.env_state.matrix)
    return DensityOperator(total, tolerance=1e-9)


def reduced_initial(dec: FrameDecomposition) -> DensityOperator:
    """sum_a w_a D_a, the reduced system state of the source."""
    rho = np.zeros((2, 2), dtype=complex)
    for t in dec.terms:
        rho += t.weight * t.system_op
    return DensityOperator(rho, tolerance=1e-9)


def evolve_decomposition(dec: FrameDecomposition, evolved_ops,
                         positivity_tol: float = 1e-6,
                         trace_tol: float = 1e-8) -> DensityOperator:
    """Assemble rho_S(t) = sum_a w_a D_a(t) from per-term evolved operators.

    Second-order solutions can dip slightly negative, so the positivity
    floor is relaxed; a trace away from 1 beyond trace_tol signals an
    integrator failure upstream and raises.
    """
    if len(evolved_ops) != len(dec.terms):
        raise ValueError("need exactly one evolved operator per frame term")
    rho = np.zeros((2, 2), dtype=complex)
    for t, d_t in zip(dec.terms, evolved_ops):
        rho += t.weight * as_matrix(d_t)
    tr = np.trace(rho)
    if abs(tr - 1.0) > trace_tol:
        raise RuntimeError(
            f"evolved decomposition trace {tr} deviates from 1 beyond {trace_tol:g}")
    return DensityOperator(rho, tolerance=positivity_tol)
