from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from mpark.integrator import (IntegrationFailed, IntegratorConfig, as_fraction, integrate, rk4_reference, step)
from mpark.precision import DOUBLE, EXTENDED, PrecisionPair, as_float64
from mpark.problems import dahlquist, van_der_pol
from mpark.stability import closed_form_imr_perturbation
from mpark.tableaus import imr_tableau, novel_a_tableau, sdirk_tableau

from oracles import dahlquist_phi

F64 = PrecisionPair.parse("f64/f64")
METHODS = [imr_tableau(0), imr_tableau(2), sdirk_tableau(1), sdirk_tableau(3), novel_a_tableau()]
IDS = [t.label for t in METHODS]


def exact_phi(t, z: Fraction) -> Fraction:
    A = (t.A_exact + t.A_eps_exact).tolist()
    return dahlquist_phi(A, t.b_exact.tolist(), z)


@pytest.mark.parametrize("t", METHODS, ids=IDS)
@pytest.mark.parametrize("lam, dt", [(-1.0, Fraction(1)), (-3.0, Fraction(1, 4)), (-50.0, Fraction(1, 10))])
def test_one_step_matches_rational_oracle(t, lam, dt):
    got = step(np.array([1.0]), IntegratorConfig(t, F64, dt), dahlquist(lam))[0]
    want = exact_phi(t, Fraction(lam) * dt)
    assert abs(Fraction(float(got)) - want) <= 1e-14 * max(1, abs(want))


def test_imr_known_values():
    assert step(np.array([1.0]), IntegratorConfig(imr_tableau(0), F64, 1), dahlquist(-1.0))[0] == pytest.approx(1 / 3, abs=1e-16)
    # two steps at z = -1/2: ((1 - 1/4)/(1 + 1/4))^2 = 0.36
    traj = integrate(dahlquist(-1.0), IntegratorConfig(imr_tableau(0), F64, Fraction(1, 2)))
    assert traj.final[0] == pytest.approx(0.36, abs=1e-16)


@given(st.floats(-20, -0.01), st.floats(-20, 20), st.sampled_from(range(len(METHODS))))
def test_twenty_steps_match_phi_power(x, y, k):
    t = METHODS[k]
    z = complex(x, y)
    traj = integrate(dahlquist(z), IntegratorConfig(t, F64, Fraction(1, 20), steps=20))
    want = complex(t.stability_function(z / 20)) ** 20
    assert abs(traj.final[0] - want) <= 20 * 10 * 2.0**-53 * abs(want)


@pytest.mark.parametrize("c", [0, 1, 2])
@pytest.mark.parametrize("z", [-0.5, -1.0, -4.0])
def test_injected_perturbation_reproduces_closed_form(c, z):
    t = imr_tableau(c)
    problem = dahlquist(z)
    cfg = IntegratorConfig(t, F64, 1)
    q = np.zeros(t.s)
    q[0] = 1.0
    base = step(np.array([0.0]), cfg, problem)[0]
    pert = step(np.array([0.0]), cfg, problem, perturbation=[np.array([v]) for v in q])[0]
    assert abs((pert - base) - closed_form_imr_perturbation(z, c)) < 1e-12


@pytest.mark.parametrize("t, order", [(imr_tableau(0), 2), (sdirk_tableau(1), 3), (novel_a_tableau(), 3),
                                      (imr_tableau(2), 2)], ids=lambda v: getattr(v, "label", str(v)))
def test_dahlquist_convergence_order(t, order):
    p = dahlquist(-1.0)
    errs = [abs(integrate(p, IntegratorConfig(t, F64, Fraction(1, 2**k))).final[0] - np.exp(-1)) for k in (3, 4, 5, 6)]
    slopes = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(np.abs(slopes - order) < 0.15)


def test_corrections_are_free_at_uniform_precision():
    p = van_der_pol(1.0)
    a = integrate(p, IntegratorConfig(imr_tableau(0), F64, Fraction(1, 64))).final
    b = integrate(p, IntegratorConfig(imr_tableau(2), F64, Fraction(1, 64))).final
    assert np.max(np.abs(a - b)) < 1e-12


def test_low_precision_stage_error_is_bounded_by_half_roundoff():
    p = van_der_pol(1.0)
    dt = Fraction(1, 16)
    hi = step(p.y0, IntegratorConfig(imr_tableau(0), F64, dt), p)
    lo = step(p.y0, IntegratorConfig(imr_tableau(0), PrecisionPair.parse("f64/f16"), dt), p)
    # stage carries O(eps16 |y|) error which enters the update through dt*J
    assert 0 < np.max(np.abs(hi - lo)) < 10 * 2.0**-11 * float(dt) * 4


def test_extended_high_precision_pair_runs():
    p = van_der_pol(1.0)
    traj = integrate(p, IntegratorConfig(sdirk_tableau(2), PrecisionPair.parse("f128/f64"), Fraction(1, 8)))
    ref = integrate(p, IntegratorConfig(sdirk_tableau(2), F64, Fraction(1, 8))).final
    assert np.max(np.abs(as_float64(traj.final) - ref)) < 1e-13


def test_fractional_dt_and_step_count():
    assert as_fraction("1/320") == Fraction(1, 320)
    assert as_fraction(0.5) == Fraction(1, 2)
    cfg = IntegratorConfig(imr_tableau(0), F64, "1/320")
    assert cfg.resolve_steps(1.0) == 320
    with pytest.raises(ValueError):
        IntegratorConfig(imr_tableau(0), F64, "3/10").resolve_steps(1.0)
    with pytest.raises(ValueError):
        IntegratorConfig(imr_tableau(0), F64, 0)


def test_store_every_keeps_strided_snapshots():
    traj = integrate(van_der_pol(1.0), IntegratorConfig(imr_tableau(0), F64, Fraction(1, 16), store_every=4))
    assert len(traj.states) == 5
    np.testing.assert_allclose(traj.times, [0, 0.25, 0.5, 0.75, 1.0])
    bare = integrate(van_der_pol(1.0), IntegratorConfig(imr_tableau(0), F64, Fraction(1, 16)))
    assert len(bare.states) == 2 and np.array_equal(bare.states[-1], traj.states[-1])


def test_failures_keep_partial_trajectory():
    with pytest.raises(IntegrationFailed) as info:
        integrate(dahlquist(5.0), IntegratorConfig(imr_tableau(0), F64, Fraction(1, 4), blowup_threshold=2.0))
    assert info.value.status == "overflow" and info.value.step >= 1
    assert info.value.partial.steps == info.value.step
    with pytest.raises(IntegrationFailed) as info:
        integrate(van_der_pol(3.0), IntegratorConfig(sdirk_tableau(1), F64, Fraction(1, 2), newton_max_iters=1))
    assert info.value.status == "not_converged"


def test_runs_are_bit_reproducible():
    cfg = IntegratorConfig(novel_a_tableau(), PrecisionPair.parse("f64/f16"), Fraction(1, 32))
    a = integrate(van_der_pol(3.0), cfg)
    b = integrate(van_der_pol(3.0), cfg)
    assert np.array_equal(a.final, b.final)
    np.testing.assert_array_equal(a.newton_iters, b.newton_iters)


def test_rk4_reference_is_fourth_order_and_extended_accurate():
    p = dahlquist(-1.0)
    e1 = abs(as_float64(rk4_reference(p, Fraction(1, 8), DOUBLE))[0] - np.exp(-1))
    e2 = abs(as_float64(rk4_reference(p, Fraction(1, 16), DOUBLE))[0] - np.exp(-1))
    assert np.log2(e1 / e2) == pytest.approx(4, abs=0.1)
    ref = rk4_reference(p, Fraction(1, 256), EXTENDED).to_fractions()[0]
    from mpmath import mp, exp, mpf
    mp.prec = 120
    err = abs(mpf(ref.numerator) / ref.denominator - exp(-1))
    # truncation error ~ h^4/120 * e^-1 with h = 1/256
    assert err < 1e-11 and err > 1e-14
    with pytest.raises(ValueError):
        rk4_reference(p, Fraction(3, 10))
