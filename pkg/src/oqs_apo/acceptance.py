"""Acceptance criteria, runnable as a self-test and mirrored by the test suite.

Each criterion returns (ok, detail); run_all() evaluates them in order and
is what `oqs-apo selftest` prints.  Tolerances are pinned here and nowhere
else.  Criteria 4 and 6 encode literature-derived bounds that the
second-order methods measurably violate (see the repository notes); they are
evaluated exactly as stated and report their true margins.
"""

from __future__ import annotations

import math
import os
import tempfile
import time
from dataclasses import dataclass

import numpy as np

from . import damped, dephasing, engine, frame, qmat

SEED = 20250810
C_HALF = 1.0 / math.sqrt(2.0)


@dataclass(frozen=True)
class CriterionResult:
    name: str
    ok: bool
    detail: str


def _params():
    return dephasing.DephasingParams(1.0, 1.0)


def criterion_1() -> CriterionResult:
    """Frame round-trip on random 2 (x) d states."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(SEED)
    worst_dev = 0.0
    worst_eig = 0.0
    for d in range(2, 7):
        shape = qmat.BipartiteShape(2, d)
        for _ in range(100):
            rho = qmat.random_density(2 * d, rng)
            dec = frame.decompose(rho, shape)
            back = frame.reconstruct(dec)
            worst_dev = max(worst_dev, float(np.max(np.abs(back.matrix - rho.matrix))))
            for term in dec.terms:
                worst_eig = min(worst_eig, float(term.env_state.eigenvalues().min()))
    elapsed = time.perf_counter() - t0
    ok = worst_dev <= 1e-10 and worst_eig >= -1e-9 and elapsed < 5.0
    return CriterionResult(
        "c1 frame round-trip",
        ok, f"max reconstruction dev {worst_dev:.2e}, min rho_a eigenvalue "
            f"{worst_eig:.2e}, budget 5 s")


def criterion_2() -> CriterionResult:
    """Product state (r = 0): the three methods coincide."""
    params = _params()
    state = dephasing.gaussian_state(C_HALF, C_HALF, 0.0, params)
    ts = np.linspace(0.0, 5.0, 201)
    vals = {m: dephasing.coherence(state, params, m, ts)
            for m in ("exact", "tcl2", "apo2")}
    dev = max(np.max(np.abs(vals["exact"] - vals["tcl2"])),
              np.max(np.abs(vals["exact"] - vals["apo2"])),
              np.max(np.abs(vals["tcl2"] - vals["apo2"])))
    return CriterionResult("c2 dephasing product degeneracy",
                           dev <= 1e-6, f"max pairwise deviation {dev:.2e}")


def _refine_peak(ts, ys):
    i = int(np.argmax(ys))
    if 0 < i < ts.size - 1:
        y0, y1, y2 = ys[i - 1], ys[i], ys[i + 1]
        denom = y0 - 2 * y1 + y2
        if denom != 0:
            off = 0.5 * (y0 - y2) / denom
            tp = ts[i] + off * (ts[1] - ts[0])
            yp = y1 - 0.25 * (y0 - y2) * off
            return tp, yp
    return ts[i], ys[i]


def criterion_3() -> CriterionResult:
    """Exact Gaussian peak at xi sigma t = r with value C1 C0."""
    params = _params()
    ok = True
    details = []
    for r in (1.0, 2.0):
        state = dephasing.gaussian_state(C_HALF, C_HALF, r, params)
        ts = np.linspace(max(0.0, r - 0.5), r + 0.5, 2001)
        ys = np.real(dephasing.coherence(state, params, "exact", ts))
        tp, yp = _refine_peak(ts, ys)
        ok = ok and abs(yp - 0.5) <= 1e-6 and abs(tp - r) <= 2e-3
        details.append(f"r={r:g}: peak {yp:.8f} at t={tp:.5f}")
    return CriterionResult("c3 exact Gaussian peak", ok, "; ".join(details))


def criterion_4() -> CriterionResult:
    """TCL2 long-time limit at xi sigma t = 30 (stated tolerance 1e-3)."""
    params = _params()
    r = 1.0
    state = dephasing.gaussian_state(C_HALF, C_HALF, r, params)
    limit = 0.5 * r * r * math.exp(-0.5 * r * r)
    val = float(np.real(dephasing.coherence(state, params, "tcl2", 30.0)))
    dev_total = abs(val - limit)
    me, _, var_e = state.reference_distribution().moments()
    worst_alpha = 0.0
    for a in (0, 1, 2):
        m, m2, _ = state.alpha_distribution(a).moments()
        k30 = dephasing.kappa_tcl((m, m2), (me, var_e), params, 30.0)
        lim_a = dephasing.kappa_tcl_limit((m, m2), (me, var_e))
        worst_alpha = max(worst_alpha, abs(k30 - lim_a))
    ok = dev_total <= 1e-3 and worst_alpha <= 1e-3
    return CriterionResult(
        "c4 TCL2 long-time limit",
        ok, f"Re rho10(30) = {val:.6f} vs {limit:.6f} (dev {dev_total:.2e}, "
            f"tol 1e-3); worst per-alpha dev {worst_alpha:.2e}")


def criterion_5() -> CriterionResult:
    """APO2 coherence decays: |rho10(10)| <= 1e-3 when all variances > 0."""
    params = _params()
    worst = 0.0
    for r in (0.25, 0.5, 1.0, 1.5, 2.0, -1.0, -2.0):
        state = dephasing.gaussian_state(C_HALF, C_HALF, r, params)
        for a in (0, 1, 2):
            _, _, var = state.alpha_distribution(a).moments()
            if var <= 0:
                return CriterionResult("c5 APO2 long-time decay", False,
                                       f"variance not positive at r={r}, a={a}")
        worst = max(worst, abs(dephasing.coherence(state, params, "apo2", 10.0)))
    return CriterionResult("c5 APO2 long-time decay", worst <= 1e-3,
                           f"max |rho10_APO(10)| = {worst:.2e}")


def criterion_6() -> CriterionResult:
    """APO boundedness (0.5 + 1e-6) and imaginary artifact (1% of Re scale)."""
    t0 = time.perf_counter()
    params = _params()
    ts = np.linspace(0.0, 10.0, 1001)
    max_abs = 0.0
    max_im = 0.0
    max_re_exact = 0.0
    for r in np.linspace(-2.0, 2.0, 81):
        state = dephasing.gaussian_state(C_HALF, C_HALF, float(r), params)
        apo = dephasing.coherence_trajectory(state, params, "apo2", ts)
        exact = dephasing.coherence_trajectory(state, params, "exact", ts)
        max_abs = max(max_abs, float(np.max(np.abs(apo))))
        max_im = max(max_im, float(np.max(np.abs(apo.imag))))
        max_re_exact = max(max_re_exact, float(np.max(np.abs(exact.real))))
    elapsed = time.perf_counter() - t0
    ok = (max_abs <= 0.5 + 1e-6 and max_im <= 0.01 * max_re_exact
          and elapsed < 30.0)
    return CriterionResult(
        "c6 APO boundedness and Im artifact",
        ok, f"max |rho10_APO| = {max_abs:.6f} (bound 0.5 + 1e-6); "
            f"max |Im| = {max_im:.5f} vs 0.01*maxRe = {0.01 * max_re_exact:.5f}")


def _peak_spacing(ts, ys):
    peaks = []
    for i in range(1, ts.size - 1):
        if ys[i] > ys[i - 1] and ys[i] >= ys[i + 1]:
            tp, _ = _refine_peak(ts[i - 1:i + 2], ys[i - 1:i + 2])
            peaks.append(tp)
    if len(peaks) < 2:
        return None
    return float(np.mean(np.diff(peaks)))


def _fourier_amplitude(ts, ys, omega):
    window = np.hanning(ts.size)
    z = np.trapezoid(ys * window * np.exp(-1j * omega * ts), ts)
    return 2.0 * abs(z) / np.trapezoid(window, ts)


def criterion_7() -> CriterionResult:
    """Double-Gaussian oscillation at q*sigma*xi reproduced only by APO."""
    params = _params()
    r = 0.1
    q = math.pi / (2.0 * r)
    state = dephasing.double_gaussian_state(C_HALF, C_HALF, r, q, params)
    period = 2.0 * math.pi / q
    ts = np.linspace(0.0, 4.5 * period, 4001)
    apo = np.real(dephasing.coherence_trajectory(state, params, "apo2", ts))
    tcl = np.real(dephasing.coherence_trajectory(state, params, "tcl2", ts))
    spacing = _peak_spacing(ts, apo)
    if spacing is None:
        return CriterionResult("c7 double-Gaussian oscillation", False,
                               "no APO oscillation peaks found")
    amp_apo = _fourier_amplitude(ts, apo, q)
    amp_tcl = _fourier_amplitude(ts, tcl, q)
    ok = abs(spacing - period) <= 0.02 * period and amp_tcl < 0.10 * amp_apo
    return CriterionResult(
        "c7 double-Gaussian oscillation",
        ok, f"APO peak spacing {spacing:.5f} vs period {period:.5f} "
            f"({abs(spacing / period - 1) * 100:.2f}%); TCL/APO amplitude ratio "
            f"{amp_tcl / amp_apo:.4f}")


def criterion_8() -> CriterionResult:
    """Jaynes-Cummings order of error: halving g shrinks errors >= 6x."""
    t0 = time.perf_counter()
    rho_se = engine.number_state_superposition(C_HALF, C_HALF, 2, 4)
    ts = np.linspace(0.0, 2.0, 101)
    errs = {"tcl2": [], "apo2": []}
    for g in (0.1, 0.05, 0.025):
        spec = engine.jaynes_cummings_spec(g, 1.0, 1.0, 4)
        dec = engine.decompose_initial(rho_se, spec)
        ref = engine.reference_state(dec)
        exact = engine.exact_oracle(rho_se, spec, ts)
        tcl = engine.solve_tcl2(spec, dec, ref, ts)
        _, apo = engine.solve_apo2(spec, dec, ts)
        errs["tcl2"].append(float(np.max(np.abs(tcl[-1] - exact[-1]))))
        errs["apo2"].append(float(np.max(np.abs(apo[-1] - exact[-1]))))
    elapsed = time.perf_counter() - t0
    ratios = {m: [errs[m][k] / errs[m][k + 1] for k in range(2)]
              for m in errs}
    ok = all(r >= 6.0 for rs in ratios.values() for r in rs) and elapsed < 10.0
    return CriterionResult(
        "c8 engine order of error",
        ok, f"TCL ratios {[f'{r:.1f}' for r in ratios['tcl2']]}, "
            f"APO ratios {[f'{r:.1f}' for r in ratios['apo2']]}, budget 10 s")


def criterion_9() -> CriterionResult:
    """Engine on a 201-point momentum grid reproduces the closed forms."""
    params = _params()
    state = dephasing.gaussian_state(C_HALF, C_HALF, 1.0, params)
    q = np.linspace(-8.0, 8.0, 201)
    spec = engine.dephasing_grid_spec(params.xi, q)
    rho_se = engine.dephasing_grid_state(state, q)
    dec = engine.decompose_initial(rho_se, spec)
    ref = engine.reference_state(dec)
    ts = np.linspace(0.0, 3.0, 601)

    def grid_moments(rho):
        p = np.real(np.diagonal(rho))
        return float(np.sum(q * p)), float(np.sum(q * q * p))

    me, m2e = grid_moments(ref)
    per_term, _ = engine.solve_apo2(spec, dec, ts)
    dev_apo = 0.0
    for term in dec.terms:
        m, m2 = grid_moments(term.env_state.matrix)
        ka = dephasing.kappa_apo(m, m2 - m * m, params, ts)
        dev_apo = max(dev_apo, float(np.max(np.abs(
            per_term[term.index][:, 0, 1] - term.system_op[0, 1] * ka))))
    tcl = engine.solve_tcl2(spec, dec, ref, ts)
    closed = np.zeros(ts.size, dtype=complex)
    for term in dec.terms:
        m, m2 = grid_moments(term.env_state.matrix)
        closed += term.weight * term.system_op[0, 1] * dephasing.kappa_tcl_trajectory(
            (m, m2), (me, m2e - me * me), params, ts)
    dev_tcl = float(np.max(np.abs(tcl[:, 0, 1] - closed)))
    ok = dev_apo <= 1e-6 and dev_tcl <= 1e-6
    return CriterionResult("c9 engine/closed-form consistency", ok,
                           f"APO dev {dev_apo:.2e}, TCL dev {dev_tcl:.2e}")


def criterion_10() -> CriterionResult:
    """Correlated-projection reductions: trivial family and matched blocks."""
    # trivial family reproduces TCL2
    spec = engine.jaynes_cummings_spec(0.1, 1.0, 1.0, 4)
    rho_se = engine.number_state_superposition(C_HALF, C_HALF, 2, 4)
    dec = engine.decompose_initial(rho_se, spec)
    ref = engine.reference_state(dec)
    ts = np.linspace(0.0, 1.0, 51)
    family = engine.ProjectorFamily(((ref, np.eye(5, dtype=complex)),))
    _, rho_cp = engine.solve_corrproj2(spec, family, dec, rho_se, ts)
    rho_tcl = engine.solve_tcl2(spec, dec, ref, ts)
    dev_trivial = float(np.max(np.abs(rho_cp - rho_tcl)))

    # block family matched to a separable state kills the inhomogeneity
    rng = np.random.default_rng(SEED + 1)
    d_env = 4
    pi1 = np.diag([1.0, 1.0, 0.0, 0.0]).astype(complex)
    pi2 = np.diag([0.0, 0.0, 1.0, 1.0]).astype(complex)
    rho_e1 = np.zeros((4, 4), dtype=complex)
    rho_e1[:2, :2] = qmat.random_density(2, rng).matrix
    rho_e2 = np.zeros((4, 4), dtype=complex)
    rho_e2[2:, 2:] = qmat.random_density(2, rng).matrix
    p1 = 0.6
    rho_sep = (p1 * np.kron(qmat.random_density(2, rng).matrix, rho_e1)
               + (1 - p1) * np.kron(qmat.random_density(2, rng).matrix, rho_e2))
    shape = qmat.BipartiteShape(2, d_env)
    ref_e = qmat.partial_trace_system(rho_sep, shape)
    fam = engine.build_block_projector([pi1, pi2], ref_e)
    b_env = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    b_env = 0.5 * (b_env + b_env.conj().T)
    spec2 = engine.InteractionSpec(0.5 * qmat.SIGMA_3,
                                   np.diag([0.0, 0.3, 0.9, 1.4]).astype(complex),
                                   ((qmat.SIGMA_1, b_env),), 0.1)
    dec2 = frame.decompose(rho_sep, shape)
    gen = engine.CorrProj2Generator(spec2, fam, dec2, np.linspace(0.0, 0.5, 26))
    dev_inhom = 0.0
    for ti in (0, 13, 26, 39, 50):
        for i in range(fam.size):
            dev_inhom = max(dev_inhom,
                            float(np.max(np.abs(gen.inhomogeneity(i, ti)))))
    ok = dev_trivial <= 1e-10 and dev_inhom <= 1e-12
    return CriterionResult("c10 correlated-projection reductions", ok,
                           f"trivial-family dev {dev_trivial:.2e}, "
                           f"matched-block inhomogeneity {dev_inhom:.2e}")


def criterion_11() -> CriterionResult:
    """Damped-qubit asymptotics and short-time TCL/APO agreement."""
    t0 = time.perf_counter()
    init = damped.DampedInitialState(C_HALF, C_HALF)
    ts = np.linspace(0.0, 400.0, 40001)
    asympt = {}
    coher_max = 0.0
    for n in (3, 10):
        bath = damped.BathSpec(0.5, 1.0, float(n))
        tcl = damped.solve_tcl(bath, init, ts)
        apo = damped.solve_apo(bath, init, ts)
        asympt[n] = (float(tcl.column("rho11")[-1]), float(apo.column("rho11")[-1]))
        for table in (tcl, apo):
            coher_max = max(coher_max, float(np.max(
                np.hypot(table.column("re_rho10"), table.column("im_rho10")))))
    short = np.linspace(0.0, 0.5, 201)
    short_dev = 0.0
    for n in (3, 10):
        bath = damped.BathSpec(0.05, 1.0, float(n))
        tcl = damped.solve_tcl(bath, init, short)
        apo = damped.solve_apo(bath, init, short)
        short_dev = max(short_dev, float(np.max(
            np.abs(tcl.column("rho11") - apo.column("rho11")))))
    elapsed = time.perf_counter() - t0
    ok = (all(asympt[n][0] <= 1e-2 for n in (3, 10))
          and asympt[3][1] > 0.0 and asympt[10][1] > asympt[3][1]
          and coher_max <= 1e-10 and short_dev <= 1e-3 and elapsed < 30.0)
    return CriterionResult(
        "c11 damped-qubit asymptotics",
        ok, f"TCL(400): N=3 {asympt[3][0]:.1e}, N=10 {asympt[10][0]:.1e}; "
            f"APO(400): N=3 {asympt[3][1]:.4f} < N=10 {asympt[10][1]:.4f}; "
            f"max |rho10| {coher_max:.1e}; short-time dev {short_dev:.1e}")


def criterion_12() -> CriterionResult:
    """Entanglement entropy: even, monotone in |r|, zero at 0, near ln 2 at 2."""
    params = _params()

    def entropy(r):
        return dephasing.entanglement_entropy(
            dephasing.gaussian_state(C_HALF, C_HALF, r, params))

    rs = np.arange(0.0, 3.01, 0.25)
    vals = np.array([entropy(float(r)) for r in rs])
    even_dev = max(abs(entropy(float(r)) - entropy(float(-r))) for r in rs)
    monotone = bool(np.all(np.diff(vals) >= -1e-12))
    at_two = entropy(2.0)
    ok = (even_dev <= 1e-12 and monotone and vals[0] <= 1e-12
          and abs(at_two - math.log(2.0)) <= 0.015 * math.log(2.0))
    return CriterionResult(
        "c12 entropy properties",
        ok, f"S(0) = {vals[0]:.1e}, S(2) = {at_two:.4f} "
            f"({abs(at_two / math.log(2.0) - 1) * 100:.2f}% from ln 2), "
            f"monotone = {monotone}")


def criterion_13(earlier=None) -> CriterionResult:
    """fig2 determinism plus aggregation of criteria 1-12."""
    from . import cli
    with tempfile.TemporaryDirectory() as tmp:
        d1 = os.path.join(tmp, "a")
        d2 = os.path.join(tmp, "b")
        cli.run_figure("fig2", d1, jobs=1, overrides={"grid.n_points": "201"})
        cli.run_figure("fig2", d2, jobs=1, overrides={"grid.n_points": "201"})
        files1 = sorted(os.listdir(d1))
        files2 = sorted(os.listdir(d2))
        identical = files1 == files2 and all(
            open(os.path.join(d1, f), "rb").read()
            == open(os.path.join(d2, f), "rb").read() for f in files1)
    if earlier is None:
        earlier = [crit() for crit in CRITERIA[:-1]]
    aggregate = all(r.ok for r in earlier)
    failing = [r.name.split()[0] for r in earlier if not r.ok]
    ok = identical and aggregate
    detail = f"fig2 byte-identical: {identical}; criteria 1-12 all pass: {aggregate}"
    if failing:
        detail += f" (failing: {', '.join(failing)})"
    return CriterionResult("c13 determinism and selftest aggregation", ok, detail)


CRITERIA = (criterion_1, criterion_2, criterion_3, criterion_4, criterion_5,
            criterion_6, criterion_7, criterion_8, criterion_9, criterion_10,
            criterion_11, criterion_12, criterion_13)


def run_all() -> list:
    results = []
    for crit in CRITERIA[:-1]:
        results.append(crit())
    results.append(criterion_13(earlier=results))
    return results
