"""Generic finite-dimensional second-order projection-operator machinery.

Given an interaction specification H = H_S + H_E + g * sum_j A_j (x) B_j,
this module evaluates interaction-picture operators, environment covariance
functions and their initial-correlation generalizations, and the three
second-order right-hand sides:

  * tcl2:      single equation for rho_S(t) with an inhomogeneity built from
               the frame decomposition of the initial state,
  * apo2:      one uncoupled homogeneous equation per frame term D_a(t),
               driven by covariances with respect to rho_a,
  * corrproj2: coupled equations for the components eta_i(t) of a
               correlated projection sum_i Tr_E[(1 (x) Y_i) . ] (x) X_i.

Everything is integrated with a fixed-step classical RK4 whose stage times
live on a half-step grid; the memory integrals over tau reuse cached
interaction-picture operators on that same grid (Simpson weights), giving
O(n^2) work per trajectory.  An exact unitary oracle (total dimension <= 64)
provides validation trajectories in the same interaction-picture frame.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .qmat import (BipartiteShape, DensityOperator, IDENTITY_2, SIGMA_3,
                   SIGMA_MINUS, SIGMA_PLUS, as_matrix, dagger, is_hermitian,
                   partial_trace_env)
from .frame import FrameDecomposition, decompose
from .tables import TrajectoryTable

HERM_TOL = 1e-10
ORACLE_DIM_CAP = 64
TRACE_DRIFT_TOL = 1e-6


# ---------------------------------------------------------------------------
# interaction specification
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class InteractionSpec:
    """H_S, H_E and coupling pairs (A_j, B_j) with overall strength g.

    Individual A_j/B_j may be non-hermitian (raising/lowering pairs) as long
    as the total interaction sum_j A_j (x) B_j is hermitian.
    """

    h_system: np.ndarray
    h_env: np.ndarray
    couplings: tuple
    g: float

    def __post_init__(self):
        self.h_system = as_matrix(self.h_system)
        self.h_env = as_matrix(self.h_env)
        self.couplings = tuple((as_matrix(a), as_matrix(b)) for a, b in self.couplings)
        if self.g <= 0:
            raise ValueError("coupling strength g must be positive")
        if not self.couplings:
            raise ValueError("at least one coupling pair is required")
        if not is_hermitian(self.h_system, HERM_TOL):
            raise ValueError("H_S must be hermitian")
        if not is_hermitian(self.h_env, HERM_TOL):
            raise ValueError("H_E must be hermitian")
        h_int = sum(np.kron(a, b) for a, b in self.couplings)
        if not is_hermitian(h_int, HERM_TOL):
            raise ValueError("sum_j A_j (x) B_j must be hermitian")
        self._sys_eval, self._sys_evec = np.linalg.eigh(self.h_system)
        self._env_eval, self._env_evec = np.linalg.eigh(self.h_env)
        self._static_kernels = self._detect_static()

    @property
    def dim_system(self) -> int:
        return self.h_system.shape[0]

    @property
    def dim_env(self) -> int:
        return self.h_env.shape[0]

    @property
    def shape(self) -> BipartiteShape:
        return BipartiteShape(self.dim_system, self.dim_env)

    @property
    def n_couplings(self) -> int:
        return len(self.couplings)

    def _detect_static(self) -> bool:
        # diagonal H_E with diagonal B_j means B_j(t) = B_j for all t
        def off_diag(m):
            return np.max(np.abs(m - np.diag(np.diagonal(m))))
        if off_diag(self.h_env) > 0:
            return False
        return all(off_diag(b) == 0 for _, b in self.couplings)

    def a_op(self, j: int, t: float) -> np.ndarray:
        """A_j(t) = e^{i H_S t} A_j e^{-i H_S t}."""
        ph = np.exp(1j * self._sys_eval * t)
        v = self._sys_evec
        a_tilde = dagger(v) @ self.couplings[j][0] @ v
        return v @ ((ph[:, None] * a_tilde) * np.conj(ph)[None, :]) @ dagger(v)

    def b_op(self, j: int, t: float) -> np.ndarray:
        """B_j(t) = e^{i H_E t} B_j e^{-i H_E t}."""
        if self._static_kernels:
            return self.couplings[j][1]
        ph = np.exp(1j * self._env_eval * t)
        v = self._env_evec
        b_tilde = dagger(v) @ self.couplings[j][1] @ v
        return v @ ((ph[:, None] * b_tilde) * np.conj(ph)[None, :]) @ dagger(v)

    def frequency_scale(self) -> float:
        """Spread of the free spectra plus the coupling scale, for dt checks."""
        spread = (self._sys_eval.max() - self._sys_eval.min()
                  + self._env_eval.max() - self._env_eval.min())
        coup = sum(np.linalg.norm(a, 2) * np.linalg.norm(b, 2)
                   for a, b in self.couplings)
        return float(spread + 2.0 * self.g * coup)


def interaction_picture(spec: InteractionSpec, t: float):
    """(A_j(t) list, B_j(t) list) at time t."""
    return ([spec.a_op(j, t) for j in range(spec.n_couplings)],
            [spec.b_op(j, t) for j in range(spec.n_couplings)])


def _expect(op: np.ndarray, rho: np.ndarray) -> complex:
    return complex(np.einsum('ab,ba->', op, rho))


def covariance(spec: InteractionSpec, rho, t1: float, t2: float) -> np.ndarray:
    """Cov_{j1 j2}^rho(t1, t2) = <B_j1(t1) B_j2(t2)> - <B_j1(t1)><B_j2(t2)>."""
    m = rho.matrix if isinstance(rho, DensityOperator) else as_matrix(rho)
    if m.shape[0] != spec.dim_env:
        raise ValueError("state dimension does not match the environment")
    n = spec.n_couplings
    b1 = [spec.b_op(j, t1) for j in range(n)]
    b2 = [spec.b_op(j, t2) for j in range(n)]
    out = np.empty((n, n), dtype=complex)
    for i in range(n):
        e1 = _expect(b1[i], m)
        for j in range(n):
            out[i, j] = _expect(b1[i] @ b2[j], m) - e1 * _expect(b2[j], m)
    return out


def generalized_correlations(spec: InteractionSpec, rho_alpha, rho_ref,
                             t1: float, t2: float):
    """The initial-correlation kernels (F, G) mixing rho_alpha and rho_ref.

    F[j1, j2] = <B_j1(t1) B_j2(t2)>_alpha - <B_j1(t1)>_ref <B_j2(t2)>_alpha
    G[j1, j2] = <B_j1(t1) B_j2(t2)>_alpha - <B_j2(t2)>_ref <B_j1(t1)>_alpha

    Both reduce to covariance() when the two states coincide.
    """
    ma = rho_alpha.matrix if isinstance(rho_alpha, DensityOperator) else as_matrix(rho_alpha)
    mr = rho_ref.matrix if isinstance(rho_ref, DensityOperator) else as_matrix(rho_ref)
    n = spec.n_couplings
    b1 = [spec.b_op(j, t1) for j in range(n)]
    b2 = [spec.b_op(j, t2) for j in range(n)]
    f = np.empty((n, n), dtype=complex)
    g = np.empty((n, n), dtype=complex)
    for i in range(n):
        for j in range(n):
            two = _expect(b1[i] @ b2[j], ma)
            f[i, j] = two - _expect(b1[i], mr) * _expect(b2[j], ma)
            g[i, j] = two - _expect(b2[j], mr) * _expect(b1[i], ma)
    return f, g


# ---------------------------------------------------------------------------
# half-grid operator cache and quadrature weights
# ---------------------------------------------------------------------------

def _quad_weights(n_panels: int, h: float) -> np.ndarray:
    """Newton-Cotes weights on n_panels uniform panels (Simpson where possible)."""
    if n_panels == 0:
        return np.zeros(1)
    if n_panels == 1:
        return np.array([0.5, 0.5]) * h
    w = np.zeros(n_panels + 1)
    if n_panels % 2 == 0:
        w[0] = w[-1] = 1.0
        w[1:-1:2] = 4.0
        w[2:-1:2] = 2.0
        return w * h / 3.0
    # odd: Simpson on the first n-3 panels, 3/8 rule on the last three
    if n_panels >= 3:
        head = n_panels - 3
        if head:
            w[:head + 1] += _quad_weights(head, 1.0)
        w[head:] += np.array([1.0, 3.0, 3.0, 1.0]) * 3.0 / 8.0
        return w * h
    raise ValueError("unreachable")


class _HalfGrid:
    """Interaction-picture operators stacked on the RK4 half-step grid."""

    def __init__(self, spec: InteractionSpec, ts: np.ndarray):
        ts = np.asarray(ts, dtype=float)
        dt = np.diff(ts)
        if ts.size < 2 or np.any(dt <= 0) or not np.allclose(dt, dt[0], rtol=1e-9):
            raise ValueError("time grid must be uniform and increasing")
        self.spec = spec
        self.h = float(dt[0])
        self.h2 = 0.5 * self.h
        self.n_half = 2 * (ts.size - 1) + 1
        self.times = ts[0] + self.h2 * np.arange(self.n_half)
        nj = spec.n_couplings
        self.a_all = [np.stack([spec.a_op(j, t) for t in self.times])
                      for j in range(nj)]
        if spec._static_kernels:
            self.b_all = None
        else:
            self.b_all = [np.stack([spec.b_op(j, t) for t in self.times])
                          for j in range(nj)]
        self._weights = {}

    def weights(self, ti: int) -> np.ndarray:
        if ti not in self._weights:
            self._weights[ti] = _quad_weights(ti, self.h2)
        return self._weights[ti]

    def index_of(self, t: float) -> int:
        ti = int(round((t - self.times[0]) / self.h2))
        if not (0 <= ti < self.n_half) or abs(self.times[ti] - t) > 1e-9 * (1 + abs(t)):
            raise ValueError(f"time {t} is not on the integrator half-grid")
        return ti

    def b_at(self, j: int, ti: int) -> np.ndarray:
        if self.b_all is None:
            return self.spec.couplings[j][1]
        return self.b_all[j][ti]

    def b_stack(self, j: int, upto: int) -> np.ndarray:
        if self.b_all is None:
            b = self.spec.couplings[j][1]
            return np.broadcast_to(b, (upto + 1,) + b.shape)
        return self.b_all[j][:upto + 1]


class _EnvMoments:
    """Single-time and two-time environment moments against a fixed state set."""

    def __init__(self, grid: _HalfGrid, states: list):
        self.grid = grid
        self.states = [as_matrix(s) for s in states]
        nj = grid.spec.n_couplings
        # <B_j(t)>_s over the whole half grid, computed once
        self.singles = np.empty((len(states), nj, grid.n_half), dtype=complex)
        for si, s in enumerate(self.states):
            for j in range(nj):
                if grid.b_all is None:
                    val = _expect(grid.spec.couplings[j][1], s)
                    self.singles[si, j, :] = val
                else:
                    self.singles[si, j, :] = np.einsum('tab,ba->t', grid.b_all[j], s)
        self._static_pairs = {}

    def single(self, si: int, j: int, ti: int) -> complex:
        return self.singles[si, j, ti]

    def pair(self, si: int, j1: int, ti: int, j2: int, upto: int) -> np.ndarray:
        """<B_j1(t_i) B_j2(tau_q)>_s for q = 0..upto."""
        s = self.states[si]
        if self.grid.b_all is None:
            key = (si, j1, j2)
            if key not in self._static_pairs:
                b = self.grid.spec.couplings
                self._static_pairs[key] = _expect(b[j1][1] @ b[j2][1], s)
            return np.full(upto + 1, self._static_pairs[key], dtype=complex)
        b1 = self.grid.b_all[j1][ti]
        return np.einsum('ab,tbc,ca->t', b1, self.grid.b_all[j2][:upto + 1], s)

    def pair_rev(self, si: int, j2: int, upto: int, j1: int, ti: int) -> np.ndarray:
        """<B_j2(tau_q) B_j1(t_i)>_s for q = 0..upto."""
        s = self.states[si]
        if self.grid.b_all is None:
            key = (si, j2, j1)
            if key not in self._static_pairs:
                b = self.grid.spec.couplings
                self._static_pairs[key] = _expect(b[j2][1] @ b[j1][1], s)
            return np.full(upto + 1, self._static_pairs[key], dtype=complex)
        b1 = self.grid.b_all[j1][ti]
        return np.einsum('tab,bc,ca->t', self.grid.b_all[j2][:upto + 1], b1, s)


def _comm(a, b):
    return a @ b - b @ a


# ---------------------------------------------------------------------------
# right-hand-side generators
# ---------------------------------------------------------------------------

class _SecondOrderBlock:
    """Memory matrices M1/M2 for one (kernel-state, reference) combination.

    M1_{j1}(t) = sum_{j2} int_0^t A_{j2}(tau) F_{j1 j2}(t, tau) dtau
    M2_{j1}(t) = sum_{j2} int_0^t A_{j2}(tau) G_{j2 j1}(tau, t) dtau

    with F/G the generalized kernels whose reference average attaches to the
    t-side operator; state == reference gives the plain covariance.
    """

    def __init__(self, moments: _EnvMoments, si_state: int, si_ref: int):
        self.m = moments
        self.si = si_state
        self.sr = si_ref
        self._cache = {}

    def at(self, ti: int):
        if ti in self._cache:
            return self._cache[ti]
        g = self.m.grid
        nj = g.spec.n_couplings
        w = g.weights(ti)
        m1 = []
        m2 = []
        for j1 in range(nj):
            ref1 = self.m.single(self.sr, j1, ti)
            acc1 = np.zeros((g.spec.dim_system,) * 2, dtype=complex)
            acc2 = np.zeros_like(acc1)
            for j2 in range(nj):
                f_k = (self.m.pair(self.si, j1, ti, j2, ti)
                       - ref1 * self.m.singles[self.si, j2, :ti + 1])
                g_k = (self.m.pair_rev(self.si, j2, ti, j1, ti)
                       - ref1 * self.m.singles[self.si, j2, :ti + 1])
                a_stack = g.a_all[j2][:ti + 1]
                acc1 += np.einsum('t,tab->ab', w * f_k, a_stack)
                acc2 += np.einsum('t,tab->ab', w * g_k, a_stack)
            m1.append(acc1)
            m2.append(acc2)
        self._cache[ti] = (m1, m2)
        return m1, m2


class Tcl2Generator:
    """Right-hand side of the second-order TCL master equation."""

    def __init__(self, spec: InteractionSpec, frame_dec: FrameDecomposition,
                 ref_state, ts):
        if frame_dec.shape.dim_env != spec.dim_env:
            raise ValueError("frame decomposition does not match the spec")
        self.spec = spec
        self.grid = _HalfGrid(spec, ts)
        ref = ref_state.matrix if isinstance(ref_state, DensityOperator) else as_matrix(ref_state)
        self.terms = [(t.weight, t.system_op, t.env_state.matrix - ref)
                      for t in frame_dec.terms]
        states = [ref] + [d for _, _, d in self.terms]
        self.moments = _EnvMoments(self.grid, states)
        self.hom = _SecondOrderBlock(self.moments, 0, 0)
        self.inhom_blocks = [_SecondOrderBlock(self.moments, 1 + k, 0)
                             for k in range(len(self.terms))]
        self._inhom_cache = {}

    def _inhomogeneity(self, ti: int) -> np.ndarray:
        if ti in self._inhom_cache:
            return self._inhom_cache[ti]
        g = self.spec.g
        out = np.zeros((2, 2), dtype=complex)
        for k, (w, d_op, _delta) in enumerate(self.terms):
            for j in range(self.spec.n_couplings):
                drift = self.moments.single(1 + k, j, ti)
                out += -1j * g * w * _comm(self.grid.a_all[j][ti], d_op) * drift
            m1, m2 = self.inhom_blocks[k].at(ti)
            for j1 in range(self.spec.n_couplings):
                a1 = self.grid.a_all[j1][ti]
                out += w * g * g * (-_comm(a1, m1[j1] @ d_op)
                                    + _comm(a1, d_op @ m2[j1]))
        self._inhom_cache[ti] = out
        return out

    def rhs_at(self, rho: np.ndarray, ti: int) -> np.ndarray:
        g = self.spec.g
        out = self._inhomogeneity(ti).copy()
        for j in range(self.spec.n_couplings):
            out += -1j * g * _comm(self.grid.a_all[j][ti], rho) \
                * self.moments.single(0, j, ti)
        m1, m2 = self.hom.at(ti)
        for j1 in range(self.spec.n_couplings):
            a1 = self.grid.a_all[j1][ti]
            out += g * g * (-_comm(a1, m1[j1] @ rho) + _comm(a1, rho @ m2[j1]))
        return out

    def as_rhs(self):
        return lambda y, t: self.rhs_at(y, self.grid.index_of(t))


class Apo2Generator:
    """Uncoupled homogeneous right-hand side for one frame term D_a(t)."""

    def __init__(self, spec: InteractionSpec, rho_alpha, ts):
        self.spec = spec
        self.grid = _HalfGrid(spec, ts)
        m = rho_alpha.matrix if isinstance(rho_alpha, DensityOperator) else as_matrix(rho_alpha)
        self.moments = _EnvMoments(self.grid, [m])
        self.block = _SecondOrderBlock(self.moments, 0, 0)

    def rhs_at(self, d_op: np.ndarray, ti: int) -> np.ndarray:
        g = self.spec.g
        out = np.zeros((2, 2), dtype=complex)
        for j in range(self.spec.n_couplings):
            out += -1j * g * _comm(self.grid.a_all[j][ti], d_op) \
                * self.moments.single(0, j, ti)
        m1, m2 = self.block.at(ti)
        for j1 in range(self.spec.n_couplings):
            a1 = self.grid.a_all[j1][ti]
            out += g * g * (-_comm(a1, m1[j1] @ d_op) + _comm(a1, d_op @ m2[j1]))
        return out

    def as_rhs(self):
        return lambda y, t: self.rhs_at(y, self.grid.index_of(t))


def tcl2_rhs(rho_s, frame_dec: FrameDecomposition, ref_state,
             spec: InteractionSpec, t: float, t_max: float | None = None,
             n_steps: int = 64) -> np.ndarray:
    """One-shot TCL2 derivative at time t (builds a fresh tau grid)."""
    horizon = t_max if t_max is not None else max(t, 1e-6)
    ts = np.linspace(0.0, horizon, n_steps + 1)
    gen = Tcl2Generator(spec, frame_dec, ref_state, ts)
    return gen.rhs_at(as_matrix(rho_s), gen.grid.index_of(t) if t else 0)


def apo2_rhs(d_alpha, rho_alpha, spec: InteractionSpec, t: float,
             t_max: float | None = None, n_steps: int = 64) -> np.ndarray:
    """One-shot APO2 derivative for a single frame component at time t."""
    horizon = t_max if t_max is not None else max(t, 1e-6)
    ts = np.linspace(0.0, horizon, n_steps + 1)
    gen = Apo2Generator(spec, rho_alpha, ts)
    return gen.rhs_at(as_matrix(d_alpha), gen.grid.index_of(t) if t else 0)


# ---------------------------------------------------------------------------
# correlated projections
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ProjectorFamily:
    """Dual environment operator pairs (X_i, Y_i) defining the projection.

    Invariants: Tr[X_i Y_j] = delta_ij, sum_i Tr[X_i] Y_i equals the support
    projector (the identity unless zero-overlap blocks were dropped), and
    sum_i Y_i^T (x) X_i >= 0.
    """

    pairs: tuple
    support: np.ndarray | None = None

    def __post_init__(self):
        pairs = tuple((as_matrix(x), as_matrix(y)) for x, y in self.pairs)
        object.__setattr__(self, 'pairs', pairs)
        if not pairs:
            raise ValueError("projector family cannot be empty")
        d = pairs[0][0].shape[0]
        sup = np.eye(d, dtype=complex) if self.support is None else as_matrix(self.support)
        object.__setattr__(self, 'support', sup)
        for x, y in pairs:
            if not (is_hermitian(x, HERM_TOL) and is_hermitian(y, HERM_TOL)):
                raise ValueError("X_i and Y_i must be hermitian")
        for i, (x, _) in enumerate(pairs):
            for j, (_, y) in enumerate(pairs):
                val = np.trace(x @ y)
                if abs(val - (1.0 if i == j else 0.0)) > HERM_TOL:
                    raise ValueError(f"duality Tr[X_{i} Y_{j}] = {val} violated")
        comp = sum(np.trace(x).real * y for x, y in pairs)
        if np.max(np.abs(comp - sup)) > HERM_TOL:
            raise ValueError("sum_i Tr[X_i] Y_i does not match the support")
        psd = sum(np.kron(y.T, x) for x, y in pairs)
        if np.linalg.eigvalsh(psd).min() < -1e-9:
            raise ValueError("sum_i Y_i^T (x) X_i is not positive semidefinite")

    @property
    def size(self) -> int:
        return len(self.pairs)


def build_block_projector(projections, ref_state,
                          overlap_cutoff: float = 1e-12) -> ProjectorFamily:
    """Family Y_i = Pi_i, X_i = Pi_i rho_bar Pi_i / Tr[Pi_i rho_bar].

    The Pi_i must be mutually orthogonal projections summing to the identity;
    blocks with vanishing overlap with the reference state are dropped and
    the family invariants are re-verified on the retained support.
    """
    pis = [as_matrix(p) for p in projections]
    ref = ref_state.matrix if isinstance(ref_state, DensityOperator) else as_matrix(ref_state)
    d = pis[0].shape[0]
    total = np.zeros((d, d), dtype=complex)
    for i, p in enumerate(pis):
        if np.max(np.abs(p @ p - p)) > HERM_TOL or not is_hermitian(p, HERM_TOL):
            raise ValueError(f"projection {i} is not an orthogonal projection")
        for q in pis[i + 1:]:
            if np.max(np.abs(p @ q)) > HERM_TOL:
                raise ValueError("projections are not mutually orthogonal")
        total += p
    if np.max(np.abs(total - np.eye(d))) > HERM_TOL:
        raise ValueError("projections do not sum to the identity")
    pairs = []
    support = np.zeros((d, d), dtype=complex)
    for p in pis:
        overlap = float(np.real(np.trace(p @ ref)))
        if overlap <= overlap_cutoff:
            continue
        pairs.append((p @ ref @ p / overlap, p))
        support += p
    if not pairs:
        raise ValueError("reference state has no overlap with any block")
    return ProjectorFamily(tuple(pairs), support=support)


class CorrProj2Generator:
    """Coupled right-hand sides for the eta_i(t) components."""

    def __init__(self, spec: InteractionSpec, family: ProjectorFamily,
                 frame_dec: FrameDecomposition, ts):
        self.spec = spec
        self.family = family
        self.grid = _HalfGrid(spec, ts)
        self.xs = [x for x, _ in family.pairs]
        self.ys = [y for _, y in family.pairs]
        self.terms = []
        for t in frame_dec.terms:
            rho_a = t.env_state.matrix
            delta = rho_a - sum(
                x * complex(np.trace(y @ rho_a))
                for (x, y) in family.pairs)
            self.terms.append((t.weight, t.system_op, delta))
        self._kernel_cache = {}
        self._inhom_cache = {}
        nj = spec.n_couplings
        # <Y_i B_j(t)>_X_i0 and <B_j(t) Y_i>_X_i0 over the half grid
        ni = family.size
        self.y_b_x = np.empty((ni, nj, ni, self.grid.n_half), dtype=complex)
        self.b_y_x = np.empty_like(self.y_b_x)
        for i in range(ni):
            for j in range(nj):
                for i0 in range(ni):
                    for ti in range(self.grid.n_half):
                        b = self.grid.b_at(j, ti)
                        self.y_b_x[i, j, i0, ti] = _expect(self.ys[i] @ b, self.xs[i0])
                        self.b_y_x[i, j, i0, ti] = _expect(b @ self.ys[i], self.xs[i0])

    def _traces_vs(self, op: np.ndarray, i: int, j1: int, ti: int, j2: int):
        """Stacked kernel traces of operator `op` for tau_q = 0..ti."""
        g = self.grid
        y = self.ys[i]
        b1 = g.b_at(j1, ti)
        b2s = g.b_stack(j2, ti)
        t_h = np.einsum('ab,bc,tcd,da->t', y, b1, b2s, op)
        t_k = np.einsum('tab,bc,cd,da->t', b2s, y, b1, op)
        t_l = np.einsum('ab,bc,tcd,da->t', b1, y, b2s, op)
        t_m = np.einsum('tab,bc,cd,da->t', b2s, b1, y, op)
        # correction sums over i0
        for i0 in range(self.family.size):
            y0_b2_op = np.einsum('ab,tbc,ca->t', self.ys[i0], b2s, op)
            b2_y0_op = np.einsum('tab,bc,ca->t', b2s, self.ys[i0], op)
            t_h -= y0_b2_op * self.y_b_x[i, j1, i0, ti]
            t_k -= b2_y0_op * self.y_b_x[i, j1, i0, ti]
            t_l -= y0_b2_op * self.b_y_x[i, j1, i0, ti]
            t_m -= b2_y0_op * self.b_y_x[i, j1, i0, ti]
        return t_h, t_k, t_l, t_m

    def _memory_mats(self, op: np.ndarray, i: int, ti: int):
        g = self.grid
        nj = self.spec.n_couplings
        w = g.weights(ti)
        mats = []
        for j1 in range(nj):
            mh = mk = ml = mm = 0.0
            mh = np.zeros((2, 2), dtype=complex)
            mk = np.zeros_like(mh)
            ml = np.zeros_like(mh)
            mm = np.zeros_like(mh)
            for j2 in range(nj):
                t_h, t_k, t_l, t_m = self._traces_vs(op, i, j1, ti, j2)
                a_stack = g.a_all[j2][:ti + 1]
                mh += np.einsum('t,tab->ab', w * t_h, a_stack)
                mk += np.einsum('t,tab->ab', w * t_k, a_stack)
                ml += np.einsum('t,tab->ab', w * t_l, a_stack)
                mm += np.einsum('t,tab->ab', w * t_m, a_stack)
            mats.append((mh, mk, ml, mm))
        return mats

    def _apply(self, target: np.ndarray, op: np.ndarray, i: int, ti: int,
               mats=None) -> np.ndarray:
        """First- plus second-order action for one (target, kernel-state) pair."""
        g_c = self.spec.g
        out = np.zeros((2, 2), dtype=complex)
        for j in range(self.spec.n_couplings):
            a_j = self.grid.a_all[j][ti]
            b_j = self.grid.b_at(j, ti)
            out += -1j * g_c * (a_j @ target * _expect(self.ys[i] @ b_j, op)
                                - target @ a_j * _expect(b_j @ self.ys[i], op))
        if mats is None:
            mats = self._memory_mats(op, i, ti)
        for j1 in range(self.spec.n_couplings):
            a1 = self.grid.a_all[j1][ti]
            mh, mk, ml, mm = mats[j1]
            out += g_c * g_c * (-a1 @ mh @ target + a1 @ target @ mk
                                + ml @ target @ a1 - target @ mm @ a1)
        return out

    def inhomogeneity(self, i: int, ti: int) -> np.ndarray:
        key = (i, ti)
        if key not in self._inhom_cache:
            out = np.zeros((2, 2), dtype=complex)
            for w, d_op, delta in self.terms:
                out += w * self._apply(d_op, delta, i, ti)
            self._inhom_cache[key] = out
        return self._inhom_cache[key]

    def rhs_at(self, etas: np.ndarray, ti: int) -> np.ndarray:
        ni = self.family.size
        out = np.empty_like(etas)
        for i in range(ni):
            acc = self.inhomogeneity(i, ti).copy()
            for jf in range(ni):
                key = (i, jf, ti)
                if key not in self._kernel_cache:
                    self._kernel_cache[key] = self._memory_mats(self.xs[jf], i, ti)
                acc += self._apply(etas[jf], self.xs[jf], i, ti,
                                   mats=self._kernel_cache[key])
            out[i] = acc
        return out

    def as_rhs(self):
        return lambda y, t: self.rhs_at(y, self.grid.index_of(t))

    def initial_etas(self, rho_se) -> np.ndarray:
        m = rho_se.matrix if isinstance(rho_se, DensityOperator) else as_matrix(rho_se)
        r = m.reshape(2, self.spec.dim_env, 2, self.spec.dim_env)
        return np.stack([np.einsum('jk,ajbk->ab', y, r) for y in self.ys])

    def reconstruct(self, etas: np.ndarray) -> np.ndarray:
        return sum(float(np.real(np.trace(x))) * etas[i]
                   for i, x in enumerate(self.xs))


def corrproj2_rhs(etas, family: ProjectorFamily, frame_dec: FrameDecomposition,
                  spec: InteractionSpec, t: float, t_max: float | None = None,
                  n_steps: int = 64) -> np.ndarray:
    """One-shot correlated-projection derivative of all eta_i at time t."""
    horizon = t_max if t_max is not None else max(t, 1e-6)
    ts = np.linspace(0.0, horizon, n_steps + 1)
    gen = CorrProj2Generator(spec, family, frame_dec, ts)
    return gen.rhs_at(np.asarray(etas, dtype=complex),
                      gen.grid.index_of(t) if t else 0)


# ---------------------------------------------------------------------------
# integrator and solvers
# ---------------------------------------------------------------------------

def integrate(rhs, y0, ts, trace_of=None, trace_tol: float = TRACE_DRIFT_TOL):
    """Classical fixed-step RK4 over a stacked complex state.

    trace_of, when given, maps the state to a scalar that must stay constant;
    drift beyond trace_tol aborts with a diagnostic.
    """
    ts = np.asarray(ts, dtype=float)
    y = np.asarray(y0, dtype=complex)
    out = np.empty((ts.size,) + y.shape, dtype=complex)
    out[0] = y
    ref_trace = trace_of(y) if trace_of is not None else None
    for k in range(ts.size - 1):
        t0 = ts[k]
        h = ts[k + 1] - t0
        k1 = rhs(y, t0)
        k2 = rhs(y + 0.5 * h * k1, t0 + 0.5 * h)
        k3 = rhs(y + 0.5 * h * k2, t0 + 0.5 * h)
        k4 = rhs(y + h * k3, ts[k + 1])
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(y)):
            raise RuntimeError(f"integrator produced non-finite state at t = {ts[k + 1]}")
        if ref_trace is not None:
            drift = abs(trace_of(y) - ref_trace)
            if drift > trace_tol:
                raise RuntimeError(
                    f"trace drift {drift:.3e} exceeds {trace_tol:g} at t = {ts[k + 1]}")
        out[k + 1] = y
    return out


def check_step(spec: InteractionSpec, ts):
    ts = np.asarray(ts, dtype=float)
    dt = float(ts[1] - ts[0])
    scale = spec.frequency_scale()
    if scale > 0 and dt * scale > 0.5:
        raise ValueError(
            f"dt = {dt:g} too coarse for frequency scale {scale:g} "
            f"(need dt * scale <= 0.5; 0.1 recommended)")


def solve_tcl2(spec: InteractionSpec, frame_dec: FrameDecomposition,
               ref_state, ts) -> np.ndarray:
    """TCL2 trajectory of rho_S(t) (interaction picture), shape (nt, 2, 2)."""
    check_step(spec, ts)
    gen = Tcl2Generator(spec, frame_dec, ref_state, ts)
    rho0 = sum(w * d for w, d, _ in gen.terms)
    return integrate(gen.as_rhs(), rho0, ts,
                     trace_of=lambda y: complex(np.trace(y)))


def solve_apo2(spec: InteractionSpec, frame_dec: FrameDecomposition, ts):
    """APO2 trajectories: dict alpha -> D_alpha(t) and the assembled rho_S(t)."""
    check_step(spec, ts)
    ts = np.asarray(ts, dtype=float)
    per_term = {}
    rho = np.zeros((ts.size, 2, 2), dtype=complex)
    for term in frame_dec.terms:
        gen = Apo2Generator(spec, term.env_state, ts)
        traj = integrate(gen.as_rhs(), term.system_op, ts,
                         trace_of=lambda y: complex(np.trace(y)))
        per_term[term.index] = traj
        rho += term.weight * traj
    return per_term, rho


def solve_corrproj2(spec: InteractionSpec, family: ProjectorFamily,
                    frame_dec: FrameDecomposition, rho_se, ts):
    """Correlated-projection trajectories: (etas (nt, Ni, 2, 2), rho_S (nt, 2, 2))."""
    check_step(spec, ts)
    ts = np.asarray(ts, dtype=float)
    gen = CorrProj2Generator(spec, family, frame_dec, ts)
    etas0 = gen.initial_etas(rho_se)
    weights = np.array([np.real(np.trace(x)) for x in gen.xs])

    def total_trace(y):
        return complex(sum(weights[i] * np.trace(y[i]) for i in range(len(weights))))

    etas = integrate(gen.as_rhs(), etas0, ts, trace_of=total_trace)
    rho = np.einsum('i,tiab->tab', weights, etas)
    return etas, rho


def exact_oracle(rho_se, spec: InteractionSpec, ts) -> np.ndarray:
    """Unitary propagation + partial trace, rotated to the interaction picture.

    rho_S^I(t) = e^{i H_S t} Tr_E[e^{-iHt} rho_SE e^{iHt}] e^{-i H_S t},
    with H = H_S + H_E + g H_I diagonalized once.  Total dimension <= 64.
    """
    shape = spec.shape
    if shape.total > ORACLE_DIM_CAP:
        raise ValueError(f"exact oracle capped at total dimension {ORACLE_DIM_CAP}")
    m = rho_se.matrix if isinstance(rho_se, DensityOperator) else as_matrix(rho_se)
    shape.check(m)
    h = (np.kron(spec.h_system, np.eye(spec.dim_env))
         + np.kron(np.eye(spec.dim_system), spec.h_env)
         + spec.g * sum(np.kron(a, b) for a, b in spec.couplings))
    evals, evecs = np.linalg.eigh(h)
    m_tilde = dagger(evecs) @ m @ evecs
    sys_e, sys_v = spec._sys_eval, spec._sys_evec
    ts = np.asarray(ts, dtype=float)
    out = np.empty((ts.size, spec.dim_system, spec.dim_system), dtype=complex)
    for k, t in enumerate(ts):
        ph = np.exp(-1j * evals * t)
        rho_t = evecs @ ((ph[:, None] * m_tilde) * np.conj(ph)[None, :]) @ dagger(evecs)
        red = partial_trace_env(rho_t, shape)
        rot = sys_v @ np.diag(np.exp(1j * sys_e * t)) @ dagger(sys_v)
        out[k] = rot @ red @ dagger(rot)
    return out


def states_to_table(ts, states: np.ndarray, method: str, model: str,
                    extra_metadata: dict | None = None) -> TrajectoryTable:
    """Wrap a (nt, 2, 2) trajectory into the CSV-facing table type."""
    cols = {
        "rho11": np.real(states[:, 0, 0]),
        "re_rho10": np.real(states[:, 0, 1]),
        "im_rho10": np.imag(states[:, 0, 1]),
    }
    meta = {"method": method, "model": model}
    if extra_metadata:
        meta.update(extra_metadata)
    return TrajectoryTable(np.asarray(ts, dtype=float), cols, meta)


# ---------------------------------------------------------------------------
# model builders
# ---------------------------------------------------------------------------

def dephasing_grid_spec(xi: float, q_grid, varsigma: float = 0.0) -> InteractionSpec:
    """sigma_3 (x) (xi/2) Q on a discretized momentum grid (H_E = 0)."""
    q = np.asarray(q_grid, dtype=float)
    b = np.diag(0.5 * xi * q).astype(complex)
    h_s = 0.5 * varsigma * SIGMA_3
    return InteractionSpec(h_s, np.zeros((q.size, q.size), dtype=complex),
                           ((SIGMA_3, b),), 1.0)


def dephasing_grid_state(state, q_grid) -> np.ndarray:
    """Discretized rho_SE for a dephasing initial state on a uniform Q grid.

    The |1> branch carries the phase e^{i theta(Q)}; amplitudes follow the
    square root of the tabulated density so the discrete marginals match the
    per-term momentum distributions exactly.
    """
    q = np.asarray(q_grid, dtype=float)
    p = state.f_density.pdf(q)
    p = p / p.sum()
    amp = np.sqrt(p)
    theta = state.theta_wavenumber * q
    ket1 = state.c0 * amp * np.exp(1j * theta)
    ket0 = state.c1 * amp
    psi = np.concatenate([ket1, ket0])
    return np.outer(psi, psi.conj())


def jaynes_cummings_spec(coupling: float, mode_frequency: float,
                         varsigma: float, n_max: int) -> InteractionSpec:
    """Single truncated bosonic mode with sigma_+ b + sigma_- b^dag coupling."""
    dim = n_max + 1
    a = np.diag(np.sqrt(np.arange(1, dim)), 1).astype(complex)
    h_s = 0.5 * varsigma * SIGMA_3
    h_e = mode_frequency * (dagger(a) @ a)
    couplings = ((SIGMA_PLUS, a), (SIGMA_MINUS, dagger(a)))
    return InteractionSpec(h_s, h_e, couplings, coupling)


def number_state_superposition(c0: float, c1: float, n_boson: int,
                               n_max: int) -> np.ndarray:
    """rho_SE for C0 |0>|vac> + C1 |1>|n_boson> on a truncated mode."""
    if n_boson > n_max:
        raise ValueError("boson number exceeds the truncation")
    dim = n_max + 1
    vac = np.zeros(dim)
    vac[0] = 1.0
    exc = np.zeros(dim)
    exc[n_boson] = 1.0
    ket1 = np.array([1.0, 0.0])
    ket0 = np.array([0.0, 1.0])
    psi = c0 * np.kron(ket0, vac) + c1 * np.kron(ket1, exc)
    return np.outer(psi, psi.conj()).astype(complex)


def decompose_initial(rho_se, spec: InteractionSpec) -> FrameDecomposition:
    return decompose(rho_se, spec.shape)


def reference_state(frame_dec: FrameDecomposition) -> np.ndarray:
    """rho_bar = sum_a w_a Tr[D_a] rho_a, the weight-averaged environment state."""
    out = None
    for t in frame_dec.terms:
        contrib = t.weight * np.real(np.trace(t.system_op)) * t.env_state.matrix
        out = contrib if out is None else out + contrib
    return out
