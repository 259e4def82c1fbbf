from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from mpark.problems import heat_operators
from mpark.stability import (MixedModelSpec, SingularResolvent, closed_form_imr_perturbation, mixed_model_radius,
                             mixed_model_radius_dense, psi_eps, roundoff_growth_bound, sensitivity_curve,
                             sensitivity_metric, stability_region)
from mpark.tableaus import imr_tableau, novel_a_tableau, sdirk_tableau

from oracles import dahlquist_phi

ALL = [imr_tableau(m) for m in range(3)] + [sdirk_tableau(m) for m in range(1, 4)] + [novel_a_tableau()]
OPS64 = heat_operators(64)


@pytest.mark.parametrize("t", ALL, ids=lambda t: t.label)
def test_psi_at_zero_is_one(t):
    assert psi_eps(t, 0j, 1e-3, np.full(t.s, 0.5)) == 1


def test_psi_eps_closed_form_oracle():
    z, e = Fraction(-100), Fraction(1, 10**4)
    want = 1 + z / (1 - z / 2 - z * e / 2)
    assert psi_eps(imr_tableau(0), -100, 1e-4, [0.5]) == pytest.approx(float(want), rel=1e-14)


@given(st.floats(-60, 2), st.floats(-30, 30), st.integers(0, len(ALL) - 1))
def test_psi_without_perturbation_equals_rational_oracle(x, y, k):
    t = ALL[k]
    z = complex(x, y)
    A = (t.A_exact + t.A_eps_exact).astype(float).tolist()
    try:
        got = psi_eps(t, z)
    except SingularResolvent:
        return
    want = dahlquist_phi(A, t.b.tolist(), z)
    assert abs(got - want) <= 1e-10 * max(1.0, abs(want))


def test_psi_singular_resolvent():
    with pytest.raises(SingularResolvent):
        psi_eps(imr_tableau(0), 2 + 0j)


def test_imr_is_a_stable_without_perturbation():
    g = stability_region(imr_tableau(0), 0.0, resolution=(45, 41), samples=2)
    re = g.re
    assert g.cells[:, re <= 0].all()
    assert not g.cells[:, re > 0].any()
    assert g.stable_fraction(left_half_only=True) == 1.0


def test_region_is_deterministic_and_thread_invariant():
    t = imr_tableau(2)
    a = stability_region(t, 1e-2, resolution=(30, 20), samples=4, seed=5, threads=1)
    b = stability_region(t, 1e-2, resolution=(30, 20), samples=4, seed=5, threads=4)
    np.testing.assert_array_equal(a.cells, b.cells)
    assert a.cells.shape == (20, 30)


def test_more_samples_never_enlarge_the_stable_set():
    t = sdirk_tableau(2)
    few = stability_region(t, 1e-1, resolution=(40, 30), samples=4, seed=2)
    many = stability_region(t, 1e-1, resolution=(40, 30), samples=8, seed=2)
    assert not (many.cells & ~few.cells).any()


def test_region_argument_validation():
    with pytest.raises(ValueError):
        stability_region(imr_tableau(0), resolution=(1, 5))
    with pytest.raises(ValueError):
        stability_region(imr_tableau(0), samples=0)


def test_corrections_and_eps_shrink_the_region():
    kw = dict(resolution=(100, 100), samples=8, seed=0)
    f0 = stability_region(imr_tableau(0), 1e-4, **kw).stable_fraction(left_half_only=True)
    f2 = stability_region(imr_tableau(2), 1e-4, **kw).stable_fraction(left_half_only=True)
    assert f2 < f0


# ---------------------------------------------------------------------------
# mixed model

def mode_oracle(ops, c, cfl):
    # independent per-mode formula with explicit trig symbols
    k = np.arange(ops.nx)
    k = np.where(k > ops.nx // 2, k - ops.nx, k)
    dx = 2 * np.pi / ops.nx
    dt = cfl * dx**2
    lam_s = -(k.astype(float) ** 2)
    lam_c = -4 * np.sin(k * dx / 2) ** 2 / dx**2
    return np.max(np.abs(1 + dt * lam_s * (1 + dt * lam_s / 2) ** c / (1 - dt * lam_c / 2)))


@pytest.mark.parametrize("c", [0, 1, 2])
@pytest.mark.parametrize("cfl", [0.1, 0.25, 0.34, 0.35, 0.5, 2.0])
def test_mixed_model_modes_match_oracle_and_dense(c, cfl):
    spec = MixedModelSpec(OPS64, c, cfl)
    rho = mixed_model_radius(spec)
    assert rho == pytest.approx(mode_oracle(OPS64, c, cfl), rel=1e-12)
    assert abs(rho - mixed_model_radius_dense(spec)) < 1e-8 * max(1.0, rho)


def test_mixed_model_threshold():
    assert mixed_model_radius(MixedModelSpec(OPS64, 0, 0.25)) <= 1 + 1e-12
    assert mixed_model_radius(MixedModelSpec(OPS64, 0, 0.34)) <= 1 + 1e-12
    # [DERIVED] frozen from the per-mode oracle above
    assert mixed_model_radius(MixedModelSpec(OPS64, 0, 0.35)) == pytest.approx(mode_oracle(OPS64, 0, 0.35))
    assert mixed_model_radius(MixedModelSpec(OPS64, 0, 0.5)) > 1


@pytest.mark.parametrize("op", ["centered", "spectral"])
@pytest.mark.parametrize("cfl", [0.01, 0.5, 10.0, 1000.0])
def test_single_operator_schemes_are_unconditionally_stable(op, cfl):
    assert mixed_model_radius(MixedModelSpec(OPS64, 0, cfl, implicit=op, explicit=op)) <= 1 + 1e-12


def test_mixed_model_small_dt_limit_and_forms():
    assert mixed_model_radius(MixedModelSpec(OPS64, 2, 1e-9)) == pytest.approx(1.0, abs=1e-6)
    ops = heat_operators(16)
    for form in ("product", "stagewise"):
        spec = MixedModelSpec(ops, 2, 0.3, form=form)
        assert mixed_model_radius(spec) == pytest.approx(mixed_model_radius_dense(spec), abs=1e-8)
    # the two forms coincide without corrections
    a = mixed_model_radius(MixedModelSpec(ops, 0, 0.4, form="product"))
    b = mixed_model_radius(MixedModelSpec(ops, 0, 0.4, form="stagewise"))
    assert a == pytest.approx(b, rel=1e-14)
    with pytest.raises(ValueError):
        MixedModelSpec(ops, 0, 0.0)
    with pytest.raises(ValueError):
        MixedModelSpec(ops, 0, 0.1, implicit="upwind")


# ---------------------------------------------------------------------------
# sensitivity and roundoff growth

def test_sensitivity_closed_form_at_minus_two():
    assert abs(sensitivity_metric(imr_tableau(0), -2.0) - 0.5) < 1e-14


@given(st.floats(-1000, -1e-3), st.integers(0, 3))
def test_imr_sensitivity_equals_perturbation_closed_form(z, c):
    for mode in ("signed", "absolute"):
        got = sensitivity_metric(imr_tableau(c), z, mode)
        assert got == pytest.approx(abs(closed_form_imr_perturbation(z, c)), rel=1e-10)


@pytest.mark.parametrize("t", ALL, ids=lambda t: t.label)
def test_sensitivity_is_nonnegative_zero_at_origin_and_bounded_by_absolute(t):
    curve = sensitivity_curve(t, np.linspace(-10000, 0, 41))
    assert np.all(curve.metric >= 0)
    assert curve.metric[-1] == 0
    absolute = sensitivity_curve(t, curve.z_values, "absolute").metric
    assert np.all(curve.metric <= absolute * (1 + 1e-12))
    with pytest.raises(ValueError):
        sensitivity_metric(t, -1.0, "median")


@pytest.mark.parametrize("z", [-10.0, -100.0, -1000.0])
def test_uncorrected_methods_are_least_sensitive_beyond_the_damping_radius(z):
    imr = [sensitivity_metric(imr_tableau(m), z) for m in range(3)]
    sd = [sensitivity_metric(sdirk_tableau(m), z) for m in range(1, 4)]
    assert imr[0] < imr[1] < imr[2]
    assert sd[0] < sd[1] < sd[2]
    nov = sensitivity_metric(novel_a_tableau(), z)
    assert nov < imr[1] and nov < sd[1]


def test_corrections_damp_inside_the_damping_radius():
    # |z| < 2: each correction multiplies the stage error by |z/2| < 1
    z = -1.0
    vals = [sensitivity_metric(imr_tableau(m), z) for m in range(3)]
    assert vals[0] > vals[1] > vals[2]


@pytest.mark.parametrize("z", [-0.5, -1.0, -1.9, -2.1, -4.0, -50.0])
def test_closed_form_growth_flips_at_two(z):
    mags = [abs(closed_form_imr_perturbation(z, c)) for c in range(4)]
    if abs(z) < 2:
        assert mags[0] > mags[1] > mags[2] > mags[3]
    else:
        assert mags[0] < mags[1] < mags[2] < mags[3]
    if z == -4.0:
        assert mags[1] / mags[0] == pytest.approx(2) and mags[3] / mags[2] == pytest.approx(2)


def test_closed_form_values_and_pole():
    assert closed_form_imr_perturbation(-2.0, 0) == -0.5
    with pytest.raises(ZeroDivisionError):
        closed_form_imr_perturbation(2.0, 1)


def test_roundoff_bound_trivial_cases():
    t = imr_tableau(0)
    assert roundoff_growth_bound(t, -0.5, 0.0, 100) == 0
    assert roundoff_growth_bound(t, -0.5, 1e-3, 0) == 0
    with pytest.raises(ValueError):
        roundoff_growth_bound(t, 0.5, 1e-3, 10)
    with pytest.raises(ValueError):
        roundoff_growth_bound(t, -0.5, 1e-3, 10, mode="other")


def test_roundoff_bound_grows_then_saturates():
    t = imr_tableau(1)
    vals = [roundoff_growth_bound(t, -0.5, 1e-3, n, dt=0.1) for n in (1, 2, 10, 10**6)]
    per_step = 0.5 * 1e-3 * 0.1 * sensitivity_metric(t, -0.5, "absolute")
    amp = abs((1 - 0.25) / (1 + 0.25))
    assert vals[0] == pytest.approx(per_step) and vals[1] == pytest.approx(2 * per_step)
    # beyond n = 1/(1 - amp) the geometric cap takes over
    assert vals[2] == vals[3] == pytest.approx(per_step / (1 - amp))
    # recast mode drops the dt factor
    assert roundoff_growth_bound(t, -0.5, 1e-3, 10, dt=0.1, mode="recast") == pytest.approx(
        10 * roundoff_growth_bound(t, -0.5, 1e-3, 10, dt=0.1))
