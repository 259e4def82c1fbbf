import cmath
from fractions import Fraction

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, strategies as st

from mpark.tableaus import (GAMMA, PERTURBATION_ROWS, SCHEME_CONDITIONS, SCHEME_ORDER, build_tableau, format_tableau,
                            imr_tableau, novel_a_tableau, order_report, parse_tableau, perturbation_values,
                            sdirk_tableau)

from oracles import dahlquist_phi

ALL = [imr_tableau(m) for m in range(4)] + [sdirk_tableau(m) for m in range(1, 4)] + [novel_a_tableau()]
IDS = [t.label for t in ALL]

# symbolic two-stage SDIRK, written out independently of the package
G = (3 + sp.sqrt(3)) / 6
SYM_A = sp.Matrix([[G, 0], [1 - 2 * G, G]])
SYM_B = sp.Matrix([[sp.Rational(1, 2), sp.Rational(1, 2)]])


def test_symbolic_sdirk_order_conditions_vanish():
    c = SYM_A * sp.ones(2, 1)
    conds = [(SYM_B * sp.ones(2, 1))[0] - 1, (SYM_B * c)[0] - sp.Rational(1, 2),
             (SYM_B * c.applyfunc(lambda v: v**2))[0] - sp.Rational(1, 3), (SYM_B * SYM_A * c)[0] - sp.Rational(1, 6)]
    assert [sp.simplify(x) for x in conds] == [0, 0, 0, 0]


def test_sdirk_gamma_and_collapsed_arrays_match_symbolic_oracle():
    t = sdirk_tableau(1)
    assert abs(GAMMA - float(G)) < 1e-16
    np.testing.assert_allclose(t.A_tilde, np.array(SYM_A.evalf(30), dtype=float), atol=1e-16)
    np.testing.assert_allclose(t.b_tilde, [0.5, 0.5])


@pytest.mark.parametrize("t", ALL, ids=IDS)
def test_scheme_residuals_through_design_order(t):
    rep = order_report(t)
    for key in SCHEME_CONDITIONS:
        if SCHEME_ORDER[key] <= t.order:
            assert abs(rep.scheme_residuals[key]) < 1e-12, key
    assert np.all(t.b_eps == 0)


@pytest.mark.parametrize("m", [1, 2, 3])
def test_sdirk_nonsmooth_bc_eps(m):
    rep = order_report(sdirk_tableau(m))
    val = rep.perturbation_residuals_nonsmooth["abs(btilde)*abs(c_eps)"]
    if m == 1:
        assert abs(val - (np.sqrt(3) + 3) / 6) < 1e-14
    else:
        assert val == 0.0


def test_novela_smooth_rows_vanish_but_one_nonsmooth_row_does_not():
    rep = order_report(novel_a_tableau())
    assert max(abs(v) for v in rep.perturbation_residuals_smooth.values()) < 1e-12
    # [DERIVED] sum |b~_i||A~_ij||c_eps_j| from the exact coefficient literals
    assert rep.perturbation_residuals_nonsmooth["abs(btilde)*abs(Atilde)*abs(c_eps)"] == pytest.approx(
        0.7227798333095097, abs=1e-14)
    assert rep.expansion_term("btilde*Atilde*c_eps") == "eps*dt^3"


@pytest.mark.parametrize("m", range(4))
def test_imr_perturbation_order(m):
    rep = order_report(imr_tableau(m))
    # m corrections push the first nonzero b~ c_eps term down by m powers of dt
    assert rep.perturbation_residuals_nonsmooth["abs(btilde)*abs(c_eps)"] == (0.5 if m == 0 else 0.0)


@pytest.mark.parametrize("m", range(4))
def test_imr_stability_function_is_the_pade_approximant(m):
    z = np.array([-0.3, -4.0, -100.0, 1j, -2 + 3j])
    got = imr_tableau(m).stability_function(z)
    want = (1 + z / 2) / (1 - z / 2)
    # each correction multiplies stage rounding by |z/2|
    tol = 1e-14 * np.maximum(1, np.abs(z) / 2) ** (m + 1)
    assert np.all(np.abs(got - want) <= tol * np.abs(want))


@given(st.floats(-50, 0), st.floats(-20, 20), st.integers(1, 3))
def test_sdirk_corrections_leave_exact_stability_function_unchanged(x, y, m):
    z = complex(x, y)
    A = [[complex(v) for v in row] for row in np.array(SYM_A.evalf(30), dtype=float)]
    want = dahlquist_phi(A, [0.5, 0.5], z)
    got = complex(sdirk_tableau(m).stability_function(z))
    assert abs(got - want) <= 1e-12 * max(1.0, abs(want))


@pytest.mark.parametrize("t", ALL, ids=IDS)
def test_linear_order_from_taylor_defect(t):
    # R(z) - exp(z) = O(z^(p+1)): the scaled defect stays bounded as z shrinks
    defects = [abs(complex(t.stability_function(h)) - cmath.exp(h)) / h ** (t.order + 1)
               for h in (1e-1, 5e-2, 2.5e-2)]
    assert max(defects) < 1.0
    assert defects[-1] == pytest.approx(defects[0], rel=0.5)


def test_stage_kinds():
    assert [imr_tableau(2).stage_kind(i) for i in range(3)] == ["low", "explicit", "explicit"]
    assert [sdirk_tableau(2).stage_kind(i) for i in range(4)] == ["low", "explicit", "low", "explicit"]
    assert [novel_a_tableau().stage_kind(i) for i in range(4)] == ["low", "explicit", "low", "explicit"]


def test_build_tableau_names_and_errors():
    assert build_tableau("SDIRK").label == "sdirk(m=1)"
    assert build_tableau("imr", 2).label == "imr(m=2)"
    with pytest.raises(ValueError, match="imr\\|sdirk\\|novela"):
        build_tableau("rk4")
    with pytest.raises(ValueError):
        build_tableau("novela", 1)
    with pytest.raises(ValueError):
        sdirk_tableau(0)
    with pytest.raises(ValueError):
        imr_tableau(-1)


@pytest.mark.parametrize("t", ALL, ids=IDS)
def test_text_format_round_trip(t):
    back = parse_tableau(format_tableau(t))
    assert (back.name, back.corrections, back.order) == (t.name, t.corrections, t.order)
    for name in ("A", "A_eps", "b", "b_eps"):
        np.testing.assert_array_equal(getattr(back, name), getattr(t, name))


def test_parse_rejects_incomplete_or_non_dirk_text():
    with pytest.raises(ValueError):
        parse_tableau("stages 1\nA\n0.0\n")
    text = format_tableau(sdirk_tableau(1)).replace("0.7886751345948129 0.0\n0.0 0.7886751345948129",
                                                    "0.7886751345948129 0.1\n0.0 0.7886751345948129")
    with pytest.raises(ValueError, match="diagonally implicit"):
        parse_tableau(text)


def test_coefficients_are_read_only():
    t = novel_a_tableau()
    with pytest.raises(ValueError):
        t.A[0, 0] = 1.0


@given(st.permutations(range(4)))
def test_perturbation_rows_invariant_under_stage_relabelling(perm):
    t = novel_a_tableau()
    P = np.eye(4)[list(perm)]
    args = (t.b_tilde, t.b_eps, t.A_tilde, t.A_eps, t.c_tilde, t.c_eps)
    permuted = (P @ t.b_tilde, P @ t.b_eps, P @ t.A_tilde @ P.T, P @ t.A_eps @ P.T, P @ t.c_tilde, P @ t.c_eps)
    for absolute in (True, False):
        np.testing.assert_allclose(perturbation_values(*permuted, absolute),
                                   perturbation_values(*args, absolute), atol=1e-15)


def test_order_report_formats_every_row():
    text = order_report(novel_a_tableau()).format()
    for _, ns, sm in PERTURBATION_ROWS:
        assert ns in text and sm in text
