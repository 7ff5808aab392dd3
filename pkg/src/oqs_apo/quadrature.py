"""Adaptive Simpson quadrature for real and complex integrands.

Oscillatory Fourier-type integrals get an initial panel split bounded by a
quarter of the oscillation half-period so the adaptive refinement never has
to discover the oscillation on its own.  Panel contributions are combined
with compensated summation (math.fsum) so long panel lists do not lose
precision.

The environment variable OQS_APO_TOL overrides the default relative
tolerance; it exists for fault-injection tests only.
"""

from __future__ import annotations

import math
import os
from typing import Callable

DEFAULT_REL_TOL = 1e-9
MAX_DEPTH = 48


class QuadratureError(RuntimeError):
    """Requested tolerance not met within the refinement budget."""


def rel_tol_default(fallback: float = DEFAULT_REL_TOL) -> float:
    env = os.environ.get("OQS_APO_TOL")
    return float(env) if env else fallback


def _simpson(fa, fm, fb, h):
    return h / 6.0 * (fa + 4.0 * fm + fb)


def _adapt(f, a, fa, b, fb, m, fm, whole, eps, depth):
    lm = 0.5 * (a + m)
    rm = 0.5 * (m + b)
    flm = f(lm)
    frm = f(rm)
    left = _simpson(fa, flm, fm, m - a)
    right = _simpson(fm, frm, fb, b - m)
    delta = left + right - whole
    if abs(delta) <= 15.0 * eps or (b - a) < 1e-14 * (abs(a) + abs(b) + 1.0):
        return left + right + delta / 15.0
    if depth <= 0:
        raise QuadratureError(
            f"adaptive Simpson did not converge on [{a}, {b}] "
            f"(residual {abs(delta):.3e}, budget {15 * eps:.3e})")
    return (_adapt(f, a, fa, m, fm, lm, flm, left, eps / 2.0, depth - 1)
            + _adapt(f, m, fm, b, fb, rm, frm, right, eps / 2.0, depth - 1))


def adaptive_simpson(f: Callable[[float], complex], a: float, b: float,
                     rel_tol: float | None = None, abs_tol: float = 1e-14,
                     max_depth: int = MAX_DEPTH) -> complex:
    """Integrate f on [a, b] to relative tolerance rel_tol (complex ok)."""
    if rel_tol is None:
        rel_tol = rel_tol_default()
    if a == b:
        return 0.0
    fa, fb = f(a), f(b)
    m = 0.5 * (a + b)
    fm = f(m)
    whole = _simpson(fa, fm, fb, b - a)
    eps = max(rel_tol * abs(whole), abs_tol)
    return _adapt(f, a, fa, b, fb, m, fm, whole, eps, max_depth)


def oscillatory_simpson(f: Callable[[float], complex], a: float, b: float,
                        frequency: float, rel_tol: float | None = None,
                        abs_tol: float = 1e-14) -> complex:
    """Integrate f containing an e^{i*frequency*x}-type factor on [a, b].

    The interval is pre-split into panels no wider than pi/(4|frequency|)
    and each panel is integrated adaptively; panel results are combined with
    compensated summation.
    """
    if rel_tol is None:
        rel_tol = rel_tol_default()
    if a == b:
        return 0.0
    width = b - a
    if abs(frequency) < 1e-12:
        return adaptive_simpson(f, a, b, rel_tol, abs_tol)
    panel = math.pi / (4.0 * abs(frequency))
    n = max(1, min(int(math.ceil(width / panel)), 200_000))
    edges = [a + width * k / n for k in range(n + 1)]
    parts = [adaptive_simpson(f, edges[k], edges[k + 1],
                              rel_tol, abs_tol / n) for k in range(n)]
    re = math.fsum(p.real if isinstance(p, complex) else p for p in parts)
    im = math.fsum(p.imag if isinstance(p, complex) else 0.0 for p in parts)
    return complex(re, im) if im != 0.0 else re
