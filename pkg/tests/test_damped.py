import math

import numpy as np
import pytest

from oqs_apo.damped import (BathSpec, ConvergenceError, DampedInitialState,
                            RateSet, asymptotic_population, n_av,
                            rate_functions, rate_table, solve_apo, solve_tcl)

C = 1 / math.sqrt(2)


def test_rates_vanish_at_zero():
    bath = BathSpec(0.5, 1.0, 3.0)
    rs = rate_functions(bath, 3.0, 0.0)
    assert (rs.r_plus, rs.r_minus, rs.i_plus, rs.i_minus) == (0, 0, 0, 0)
    tab = rate_table(bath, 3.0, np.array([0.0, 0.5]))
    assert tab["rbar"][0] == 0.0 and tab["ibar"][0] == 0.0


def test_rate_closed_form_zero_detuning():
    # varsigma = 0: R_-(t) = gamma n (1 - cos omega_c t)/t
    bath = BathSpec(0.4, 1.3, 2.0)
    for t in (0.3, 1.7, 6.0):
        rs = rate_functions(bath, 2.0, t)
        expect = 0.4 * 2.0 * (1 - math.cos(1.3 * t)) / t
        assert rs.r_minus == pytest.approx(expect, rel=1e-7)
        assert rs.r_plus == pytest.approx(expect * 3.0 / 2.0, rel=1e-7)


def test_vacuum_has_no_absorption():
    bath = BathSpec(0.5, 1.0, 0.0)
    for t in (0.4, 2.0):
        rs = rate_functions(bath, 0.0, t)
        assert rs.r_minus == 0.0
        assert rs.i_minus == 0.0
        assert rs.r_plus != 0.0


def test_rate_difference_is_vacuum_rate():
    # R_+ (with n+1) minus R_- (with n) equals the n-independent vacuum term
    bath = BathSpec(0.3, 1.0, 4.0, varsigma=0.2)
    for t in (0.5, 2.5):
        rs = rate_functions(bath, 4.0, t)
        vac = rate_functions(bath, 0.0, t)
        assert rs.r_plus - rs.r_minus == pytest.approx(vac.r_plus, abs=1e-10)


def test_rate_table_matches_quadrature():
    for vs in (0.0, 0.35):
        bath = BathSpec(0.5, 1.0, 3.0, varsigma=vs)
        ts = np.array([0.0, 0.4, 1.1, 3.0, 7.5])
        tab = rate_table(bath, 3.0, ts)
        for i, t in enumerate(ts):
            rs = rate_functions(bath, 3.0, float(t))
            assert tab["r_plus"][i] == pytest.approx(rs.r_plus, abs=1e-8)
            assert tab["r_minus"][i] == pytest.approx(rs.r_minus, abs=1e-8)
            assert tab["i_plus"][i] == pytest.approx(rs.i_plus, abs=1e-8)
            assert tab["i_minus"][i] == pytest.approx(rs.i_minus, abs=1e-8)


def test_rates_real_and_rateset_combinations():
    rs = RateSet(1.0, 0.5, 0.2, -0.1)
    assert rs.rbar == 1.5
    assert rs.ibar == pytest.approx(0.3)


def test_n_av():
    bath = BathSpec(0.5, 1.0, 6.0)
    assert n_av(DampedInitialState(0.0, 1.0), bath) == pytest.approx(6.0)  # product
    assert n_av(DampedInitialState(1.0, 0.0), bath) == pytest.approx(0.0)
    assert n_av(DampedInitialState(C, C), bath) == pytest.approx(3.0)


def test_product_state_tcl_equals_apo():
    bath = BathSpec(0.3, 1.0, 2.0)
    init = DampedInitialState(0.0, 1.0)  # |1> (x) |{N}>: all rho_a coincide
    ts = np.linspace(0.0, 20.0, 2001)
    tcl = solve_tcl(bath, init, ts)
    apo = solve_apo(bath, init, ts)
    assert np.max(np.abs(tcl.column("rho11") - apo.column("rho11"))) <= 1e-9


def test_populations_decay_and_asymptotics():
    init = DampedInitialState(C, C)
    ts = np.linspace(0.0, 400.0, 40001)
    finals = {}
    for n in (3, 10):
        bath = BathSpec(0.5, 1.0, float(n))
        tcl = solve_tcl(bath, init, ts)
        apo = solve_apo(bath, init, ts)
        assert tcl.column("rho11")[-1] <= 1e-2
        finals[n] = apo.column("rho11")[-1]
        # flat-occupation detailed balance: n0/(2 n0 + 1) with n0 = N/2
        n0 = n / 2
        assert finals[n] == pytest.approx(n0 / (2 * n0 + 1), abs=2e-3)
    assert 0.0 < finals[3] < finals[10]


def test_coherence_identically_zero():
    init = DampedInitialState(C, C)
    ts = np.linspace(0.0, 50.0, 5001)
    for solver in (solve_tcl, solve_apo):
        table = solver(BathSpec(0.5, 1.0, 3.0), init, ts)
        mag = np.hypot(table.column("re_rho10"), table.column("im_rho10"))
        assert np.max(mag) <= 1e-10


def test_vacuum_bath_apo_decays():
    init = DampedInitialState(C, C)
    ts = np.linspace(0.0, 100.0, 10001)
    apo = solve_apo(BathSpec(0.5, 1.0, 0.0), init, ts)
    rho11 = apo.column("rho11")
    assert rho11[-1] < 0.05 < rho11[0]


def test_short_time_agreement():
    init = DampedInitialState(C, C)
    ts = np.linspace(0.0, 0.5, 201)
    for n in (3, 10):
        bath = BathSpec(0.05, 1.0, float(n))
        tcl = solve_tcl(bath, init, ts)
        apo = solve_apo(bath, init, ts)
        assert np.max(np.abs(tcl.column("rho11") - apo.column("rho11"))) <= 1e-3


def test_asymptotic_population():
    init = DampedInitialState(C, C)
    bath = BathSpec(0.5, 1.0, 3.0)
    assert asymptotic_population("tcl2", bath, init) <= 1e-2
    apo_val = asymptotic_population("apo2", bath, init)
    assert apo_val == pytest.approx(0.375, abs=2e-3)
    with pytest.raises(ConvergenceError):
        asymptotic_population("apo2", bath, init, convergence_tol=1e-12)


def test_grid_validation():
    bath = BathSpec(0.5, 1.0, 3.0)
    init = DampedInitialState(C, C)
    with pytest.raises(ValueError):
        solve_tcl(bath, init, np.linspace(0, 10, 11))  # dt = 1 > 0.1/omega_c
    with pytest.raises(ValueError):
        solve_apo(bath, init, np.array([0.0, 0.01, 0.05]))  # non-uniform


def test_bath_validation():
    with pytest.raises(ValueError):
        BathSpec(-0.1, 1.0, 0.0)
    with pytest.raises(ValueError):
        BathSpec(0.5, 1.0, -1.0)
    with pytest.raises(ValueError):
        DampedInitialState(1.0, 1.0)
    bath = BathSpec(0.5, 2.0, 3.0)
    assert bath.occupation(1.0) == 3.0
    assert bath.occupation(2.5) == 0.0
