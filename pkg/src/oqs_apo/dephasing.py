"""Exactly solvable pure-dephasing model with correlated photon-like states.

A qubit couples to a continuous momentum-like degree of freedom through
H_I = sigma_3 (x) B with B = (xi/2) * Q.  Populations are frozen; the
coherence evolves as

    rho_10(t) = sum_a w_a <1|D_a|0> kappa_a(t),

where the kappa_a are, per method,

  exact:  the characteristic function of the momentum density p_a(Q),
  tcl2:   the second-order time-convolutionless expression driven by the
          first two moments of p_a and of the reference density,
  apo2:   exp[-i xi m_a t - xi^2 var_a t^2 / 2], i.e. the exact kappa of a
          Gaussian with matched mean and variance.

The initial pure states carry the relative phase theta(Q) = r Q / sigma on
the excited-state branch, which makes the exact coherence peak at
xi*sigma*t = r; the four Pauli-frame momentum densities then are
p0 = p3 = |f|^2, p1 = |f|^2 (1 + 2 C1 C0 cos theta)/N and
p2 = |f|^2 (1 - 2 C1 C0 sin theta).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .qmat import DensityOperator, von_neumann_entropy
from .quadrature import adaptive_simpson, oscillatory_simpson, rel_tol_default

MOMENT_REL_TOL = 1e-9


# ---------------------------------------------------------------------------
# momentum distributions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Gaussian:
    """N(mean, variance) momentum density."""

    mean: float
    variance: float

    def __post_init__(self):
        if self.variance <= 0:
            raise ValueError("variance must be positive")

    @property
    def width(self) -> float:
        return math.sqrt(self.variance)

    def pdf(self, q):
        return np.exp(-(q - self.mean) ** 2 / (2 * self.variance)) \
            / math.sqrt(2 * math.pi * self.variance)

    def char(self, k):
        """E[e^{ikQ}]."""
        return np.exp(1j * k * self.mean - 0.5 * self.variance * np.asarray(k) ** 2)

    def moments(self):
        return self.mean, self.variance + self.mean ** 2, self.variance

    def trig_moments(self, k: float):
        """(E[cos kQ], E[sin kQ], E[Q cos], E[Q sin], E[Q^2 cos], E[Q^2 sin])."""
        if self.mean != 0.0:
            raise ValueError("trig moments implemented for centered bases only")
        e = math.exp(-0.5 * self.variance * k * k)
        s2 = self.variance
        return (e, 0.0, 0.0, s2 * k * e, (s2 - s2 * s2 * k * k) * e, 0.0)

    def support(self, tail: float = 10.0):
        return (self.mean - tail * self.width, self.mean + tail * self.width)


@dataclass(frozen=True)
class DoubleGaussian:
    """Balanced mixture of two width-sigma Gaussians centered at +-center."""

    center: float
    variance: float

    def __post_init__(self):
        if self.variance <= 0:
            raise ValueError("variance must be positive")

    @property
    def width(self) -> float:
        return math.sqrt(self.variance)

    def pdf(self, q):
        n = math.sqrt(2 * math.pi * self.variance)
        return 0.5 / n * (np.exp(-(q - self.center) ** 2 / (2 * self.variance))
                          + np.exp(-(q + self.center) ** 2 / (2 * self.variance)))

    def char(self, k):
        k = np.asarray(k)
        return np.cos(self.center * k) * np.exp(-0.5 * self.variance * k ** 2)

    def moments(self):
        m2 = self.variance + self.center ** 2
        return 0.0, m2, m2

    def trig_moments(self, k: float):
        e = math.exp(-0.5 * self.variance * k * k)
        c, s = math.cos(self.center * k), math.sin(self.center * k)
        s2, q0 = self.variance, self.center
        e_cos = c * e
        e_qsin = (q0 * s + s2 * k * c) * e
        e_q2cos = ((q0 * q0 + s2 - s2 * s2 * k * k) * c - 2 * s2 * k * q0 * s) * e
        return (e_cos, 0.0, 0.0, e_qsin, e_q2cos, 0.0)

    def support(self, tail: float = 10.0):
        r = abs(self.center) + tail * self.width
        return (-r, r)


@dataclass(frozen=True)
class Tabulated:
    """Density tabulated on a uniform grid; integrals by Simpson weights.

    The grid must resolve any oscillatory factor e^{ikQ} it is asked to
    integrate against (|k| * spacing well below 1).
    """

    grid: np.ndarray
    density: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.grid, dtype=float)
        d = np.asarray(self.density, dtype=float)
        object.__setattr__(self, 'grid', g)
        object.__setattr__(self, 'density', d)
        if g.ndim != 1 or g.shape != d.shape or g.size < 3:
            raise ValueError("grid and density must be matching 1-D arrays")
        if np.any(d < 0):
            raise ValueError("density must be non-negative on the grid")
        norm = self._integral(d)
        if abs(norm - 1.0) > 1e-8:
            raise ValueError(f"tabulated density normalization {norm} is off by >1e-8")

    def _integral(self, values):
        from scipy.integrate import simpson
        return complex(simpson(values, x=self.grid)) if np.iscomplexobj(values) \
            else float(simpson(values, x=self.grid))

    def pdf(self, q):
        return np.interp(q, self.grid, self.density, left=0.0, right=0.0)

    def char(self, k):
        ks = np.atleast_1d(np.asarray(k, dtype=float))
        spacing = self.grid[1] - self.grid[0]
        if np.max(np.abs(ks)) * spacing > 0.5:
            raise ValueError("tabulation too coarse for the requested frequency")
        out = np.array([self._integral(self.density * np.exp(1j * kk * self.grid))
                        for kk in ks])
        return out[0] if np.asarray(k).ndim == 0 else out

    def moments(self):
        m = self._integral(self.grid * self.density)
        m2 = self._integral(self.grid ** 2 * self.density)
        return float(m), float(m2), float(m2 - m * m)

    def support(self, tail: float = 10.0):
        return (float(self.grid[0]), float(self.grid[-1]))


@dataclass(frozen=True)
class Modulated:
    """base.pdf * factor / norm for a pointwise modulation factor.

    The normalization is computed by adaptive Simpson when not supplied.
    """

    base: object
    factor: Callable[[np.ndarray], np.ndarray]
    norm: float | None = None

    def __post_init__(self):
        if self.norm is None:
            a, b = self.base.support()
            n = float(np.real(adaptive_simpson(
                lambda q: self.base.pdf(q) * self.factor(q), a, b, MOMENT_REL_TOL)))
            object.__setattr__(self, 'norm', n)
        if self.norm <= 0:
            raise ValueError("modulated density normalization must be positive")

    def pdf(self, q):
        return self.base.pdf(q) * self.factor(q) / self.norm

    def char(self, k):
        a, b = self.base.support()
        ks = np.atleast_1d(np.asarray(k, dtype=float))
        out = np.array([
            oscillatory_simpson(lambda q, kk=kk: self.pdf(q) * np.exp(1j * kk * q),
                                a, b, kk) for kk in ks])
        return out[0] if np.asarray(k).ndim == 0 else out

    def moments(self):
        a, b = self.base.support()
        m = float(np.real(adaptive_simpson(lambda q: q * self.pdf(q), a, b,
                                           MOMENT_REL_TOL)))
        m2 = float(np.real(adaptive_simpson(lambda q: q * q * self.pdf(q), a, b,
                                            MOMENT_REL_TOL)))
        return m, m2, m2 - m * m

    def support(self, tail: float = 10.0):
        return self.base.support(tail)


@dataclass(frozen=True)
class TrigModulated:
    """base.pdf * (1 + cc*cos(kQ) + sc*sin(kQ)) / norm with analytic moments."""

    base: object
    cos_coeff: float
    sin_coeff: float
    wavenumber: float
    norm: float = 1.0

    def pdf(self, q):
        q = np.asarray(q)
        mod = 1.0 + self.cos_coeff * np.cos(self.wavenumber * q) \
            + self.sin_coeff * np.sin(self.wavenumber * q)
        return self.base.pdf(q) * mod / self.norm

    def char(self, k):
        kt = self.wavenumber
        up, down = self.base.char(np.asarray(k) + kt), self.base.char(np.asarray(k) - kt)
        out = self.base.char(k) + 0.5 * self.cos_coeff * (up + down) \
            + self.sin_coeff / 2j * (up - down)
        return out / self.norm

    def moments(self):
        _, _, eqc, eqs, eq2c, eq2s = self.base.trig_moments(self.wavenumber)
        m_b, m2_b, _ = self.base.moments()
        m = (m_b + self.cos_coeff * eqc + self.sin_coeff * eqs) / self.norm
        m2 = (m2_b + self.cos_coeff * eq2c + self.sin_coeff * eq2s) / self.norm
        return m, m2, m2 - m * m

    def support(self, tail: float = 10.0):
        return self.base.support(tail)


def moments(p) -> tuple[float, float, float]:
    """(first moment, second moment, variance) of a momentum distribution."""
    return p.moments()


# ---------------------------------------------------------------------------
# model parameters and initial states
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DephasingParams:
    """Coupling strength xi and momentum width sigma; times are in 1/(xi*sigma)."""

    xi: float
    sigma: float

    def __post_init__(self):
        if self.xi <= 0 or self.sigma <= 0:
            raise ValueError("xi and sigma must be positive")


WEIGHT_PRODUCTS = {0: 0.5 * (1j - 1.0), 2: -0.5j, 3: 0.0}  # w_a <1|D_a|0>; a=1 is N/2


@dataclass(frozen=True)
class DephasingState:
    """Correlated pure state: the |1> branch carries the phase e^{i r Q / sigma}.

    c0 multiplies |1> (x) |f e^{i theta}>, c1 multiplies |0> (x) |f>, with
    |f|^2 the even base density.  Real amplitudes, c0^2 + c1^2 = 1.
    """

    c0: float
    c1: float
    f_density: object
    r: float
    check_normalization: bool = True

    def __post_init__(self):
        if abs(self.c0 ** 2 + self.c1 ** 2 - 1.0) > 1e-12:
            raise ValueError("amplitudes must satisfy c0^2 + c1^2 = 1")
        m, _, _ = self.f_density.moments()
        if abs(m) > 1e-10:
            raise ValueError("the base density must be even (zero mean)")
        if self.check_normalization:
            a, b = self.f_density.support()
            norm = float(np.real(adaptive_simpson(self.f_density.pdf, a, b, 1e-8)))
            if abs(norm - 1.0) > 1e-8:
                raise ValueError(f"base density normalization {norm} is off by >1e-8")

    @property
    def coupling_product(self) -> float:
        return self.c0 * self.c1

    @property
    def theta_wavenumber(self) -> float:
        return self.r / self.f_density.width

    def overlap(self) -> float:
        """E_base[cos theta] = Re <f|f_theta>; real by the parity assumptions."""
        if hasattr(self.f_density, 'trig_moments'):
            return self.f_density.trig_moments(self.theta_wavenumber)[0]
        a, b = self.f_density.support()
        return float(np.real(adaptive_simpson(
            lambda q: self.f_density.pdf(q) * np.cos(self.theta_wavenumber * q),
            a, b, MOMENT_REL_TOL)))

    def norm_constant(self) -> float:
        """N normalizing p1; closed form 1 + 2 C1 C0 E[cos theta]."""
        return 1.0 + 2.0 * self.coupling_product * self.overlap()

    def alpha_distribution(self, a: int):
        c = self.coupling_product
        k = self.theta_wavenumber
        if a in (0, 3):
            return self.f_density
        if a == 1:
            return TrigModulated(self.f_density, 2.0 * c, 0.0, k,
                                 norm=self.norm_constant())
        if a == 2:
            return TrigModulated(self.f_density, 0.0, -2.0 * c, k, norm=1.0)
        raise ValueError(f"alpha must be 0..3, got {a}")

    def weight_product(self, a: int) -> complex:
        """w_a <1|D_a|0> for the Pauli decomposition of this state."""
        if a == 1:
            return 0.5 * self.norm_constant()
        return WEIGHT_PRODUCTS[a]

    def reference_distribution(self):
        """Momentum density of rho_E = Tr_S |psi><psi| (the default rho-bar)."""
        return self.f_density


def gaussian_state(c0: float, c1: float, r: float,
                   params: DephasingParams) -> DephasingState:
    return DephasingState(c0, c1, Gaussian(0.0, params.sigma ** 2), r,
                          check_normalization=False)


def double_gaussian_state(c0: float, c1: float, r: float, q: float,
                          params: DephasingParams) -> DephasingState:
    base = DoubleGaussian(q * params.sigma, params.sigma ** 2)
    return DephasingState(c0, c1, base, r, check_normalization=False)


# ---------------------------------------------------------------------------
# kappa functions
# ---------------------------------------------------------------------------

def kappa_exact(p, params: DephasingParams, t):
    """Characteristic function at frequency xi*t: integral of p(Q) e^{-i xi Q t}."""
    return p.char(-params.xi * np.asarray(t))


def kappa_apo(m_alpha: float, var_alpha: float, params: DephasingParams, t):
    """exp[-i xi m t - xi^2 var t^2 / 2]; var = 0 gives a pure phase."""
    if var_alpha < 0:
        raise ValueError("variance must be non-negative")
    t = np.asarray(t)
    return np.exp(-1j * params.xi * m_alpha * t
                  - 0.5 * params.xi ** 2 * var_alpha * t ** 2)


def kappa_tcl(p_alpha_moments, env_moments, params: DephasingParams, t,
              rel_tol: float | None = None, _naive_split: bool = False):
    """Second-order TCL kappa for one frame term.

    p_alpha_moments = (m_a, m2_a); env_moments = (m_E, var_E) of the
    reference state.  Evaluated in the numerically stable form

        kappa = 1 + int_0^t exp[-i xi m_E (t-tau) - xi^2 var_E (t^2-tau^2)/2]
                        * (-i xi m_a - xi^2 tau (m2_a - m_a m_E)) dtau,

    whose integrand is bounded, so the textbook split into a decaying
    prefactor times growing inner integrals (which overflows for
    xi*sqrt(var_E)*t > ~38) is never formed unless explicitly requested.
    """
    ma, m2a = p_alpha_moments
    me, var_e = env_moments
    xi = params.xi
    if _naive_split and xi * math.sqrt(max(var_e, 0.0)) * np.max(np.atleast_1d(t)) > 40:
        raise OverflowError("inner TCL integrals overflow; cap the grid at "
                            "xi*sigma_E*t <= 40 or use the stable form")
    if rel_tol is None:
        rel_tol = rel_tol_default(MOMENT_REL_TOL)

    def one(tt: float) -> complex:
        if tt == 0.0:
            return 1.0 + 0.0j

        def integrand(tau):
            kern = np.exp(-1j * xi * me * (tt - tau)
                          - 0.5 * xi ** 2 * var_e * (tt ** 2 - tau ** 2))
            return kern * (-1j * xi * ma - xi ** 2 * tau * (m2a - ma * me))

        return 1.0 + adaptive_simpson(integrand, 0.0, tt, rel_tol)

    ts = np.asarray(t)
    if ts.ndim == 0:
        return one(float(ts))
    return np.array([one(float(tt)) for tt in ts])


def kappa_tcl_limit(p_alpha_moments, env_moments) -> float:
    """t -> infinity limit: 1 - (m2_a - m_a m_E) / (m2_E - m_E^2)."""
    ma, m2a = p_alpha_moments
    me, var_e = env_moments
    return 1.0 - (m2a - ma * me) / var_e


def kappa_tcl_trajectory(p_alpha_moments, env_moments, params: DephasingParams,
                         ts) -> np.ndarray:
    """kappa_tcl on a uniform time grid via exact-propagator stepping.

    kappa solves d kappa/dt = h_a(t) - h_bar(t) + h_bar(t) kappa with linear
    coefficients; each step applies the homogeneous propagator
    exp[int h_bar] analytically and a five-node Boole rule to the bounded
    driven part, so the strongly damped reference factor (var_E can be
    1 + q^2 >> 1 for the double-Gaussian family) costs no stiffness.
    Cross-checked against the quadrature form kappa_tcl in the test suite.
    """
    ma, m2a = p_alpha_moments
    me, var_e = env_moments
    xi = params.xi
    ts = np.asarray(ts, dtype=float)
    boole = np.array([7.0, 32.0, 12.0, 32.0, 7.0]) / 90.0

    def h_delta(t):
        return (-1j * xi * (ma - me)
                - xi ** 2 * t * ((m2a - ma * me) - var_e))

    out = np.empty(ts.size, dtype=complex)
    kappa = 1.0 + 0.0j
    out[0] = kappa
    for k in range(ts.size - 1):
        t0, t1 = ts[k], ts[k + 1]
        h = t1 - t0
        nodes = t0 + 0.25 * h * np.arange(5)
        # exp[int_tau^t1 h_bar] is bounded by 1 in modulus on the step
        kern = np.exp(-1j * xi * me * (t1 - nodes)
                      - 0.5 * xi ** 2 * var_e * (t1 ** 2 - nodes ** 2))
        kappa = kern[0] * kappa + h * np.sum(boole * kern * h_delta(nodes))
        out[k + 1] = kappa
    return out


def coherence_trajectory(state: DephasingState, params: DephasingParams,
                         method: str, ts) -> np.ndarray:
    """Same assembly as coherence() but tuned for dense uniform time grids.

    exact and apo2 use the analytic characteristic functions; tcl2 uses the
    exact-propagator stepping of kappa_tcl_trajectory.
    """
    if method not in METHODS:
        raise ValueError(f"method must be one of {METHODS}")
    ts = np.asarray(ts, dtype=float)
    if method != "tcl2":
        return coherence(state, params, method, ts)
    me, _, var_e = state.reference_distribution().moments()
    out = np.zeros(ts.size, dtype=complex)
    for a in (0, 1, 2):
        m, m2, _ = state.alpha_distribution(a).moments()
        out += state.weight_product(a) * kappa_tcl_trajectory(
            (m, m2), (me, var_e), params, ts)
    return out


# ---------------------------------------------------------------------------
# coherence assembly and entanglement entropy
# ---------------------------------------------------------------------------

METHODS = ("exact", "tcl2", "apo2")


def coherence(state: DephasingState, params: DephasingParams, method: str, t):
    """rho_10(t) = sum_a w_a <1|D_a|0> kappa_a^method(t).

    The a = 3 term never contributes (<1|D_3|0> = 0); the reference state for
    tcl2 is rho_E = Tr_S |psi><psi|, whose momentum density is the base |f|^2.
    """
    if method not in METHODS:
        raise ValueError(f"method must be one of {METHODS}")
    t = np.asarray(t, dtype=float)
    out = np.zeros(t.shape, dtype=complex)
    env_mom = None
    if method == "tcl2":
        me, _, var_e = state.reference_distribution().moments()
        env_mom = (me, var_e)
    for a in (0, 1, 2):
        w = state.weight_product(a)
        p = state.alpha_distribution(a)
        if method == "exact":
            k = kappa_exact(p, params, t)
        elif method == "apo2":
            m, _, var = p.moments()
            k = kappa_apo(m, var, params, t)
        else:
            m, m2, _ = p.moments()
            k = kappa_tcl((m, m2), env_mom, params, t)
        out = out + w * k
    return out if out.shape else complex(out)


def initial_reduced_state(state: DephasingState) -> DensityOperator:
    ov = state.overlap()
    c = state.coupling_product
    m = np.array([[state.c0 ** 2, c * ov], [c * ov, state.c1 ** 2]], dtype=complex)
    return DensityOperator(m)


def entanglement_entropy(state: DephasingState) -> float:
    """Entropy of entanglement (nats) of the pure correlated state."""
    return von_neumann_entropy(initial_reduced_state(state))
