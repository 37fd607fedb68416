import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nld.form import GridFunction, assemble
from nld.geometry import Box, Interval, make_grid
from nld.levy import (compact_kernel, fractional_kernel, make_atomic, make_lattice_series, make_mixture,
                      make_radial)
from nld.principles import (barrier, build_barrier, chain_constant, check_comparison, check_weak_max_principle,
                            effective_bound, linf_bound, m_matrix_report, poincare_constructive,
                            poincare_spectral)
from nld.solver import solve

TWO_ATOMS = make_atomic([((1.0,), 1.0), ((-1.0,), 1.0)])
UNIT = Interval(0.0, 1.0)


def _grid(dom=UNIT, h=1 / 16, R=1.0, basis="P0", m=None):
    return make_grid(dom, h, R, basis, measure=m)


def test_spectral_two_atoms():
    est = poincare_spectral(assemble(TWO_ATOMS, _grid()))
    assert est.lambda_min == pytest.approx(2.0, rel=1e-9)
    assert est.spectral_constant == pytest.approx(0.5, rel=1e-9)
    assert est.lambda_min_eigh == pytest.approx(2.0, rel=1e-12)


def test_spectral_scales_with_measure():
    double = make_atomic([((1.0,), 2.0), ((-1.0,), 2.0)])
    assert poincare_spectral(assemble(double, _grid())).lambda_min == pytest.approx(4.0, rel=1e-9)


def test_spectral_lattice_series_below_constant_quotient():
    est = poincare_spectral(assemble(make_lattice_series(), _grid()))
    assert est.spectral_constant <= 3 / math.pi ** 2 + 1e-9


def test_spectral_invariant_under_translation_and_reflection():
    m = make_atomic([((0.3,), 1.0), ((1.1,), 0.5)])
    a = poincare_spectral(assemble(m, _grid(Interval(0.0, 1.0)))).lambda_min
    b = poincare_spectral(assemble(m, _grid(Interval(2.0, 3.0)))).lambda_min
    c = poincare_spectral(assemble(m, _grid(Interval(-1.0, 0.0)))).lambda_min
    assert b == pytest.approx(a, rel=1e-9) and c == pytest.approx(a, rel=1e-9)


def test_chain_constant_recurrence():
    assert [chain_constant(n) for n in range(1, 5)] == [6.0, 14.0, 30.0, 62.0]


def test_constructive_two_atoms_short_chain():
    est = poincare_constructive(TWO_ATOMS, UNIT)
    assert est.chain_length == 1
    assert est.annulus[0] <= 1.0 < est.annulus[1] or est.annulus[0] < 1.0 <= est.annulus[1]
    # the constant is a valid upper bound for the optimal one, 0.5
    assert 0.5 <= est.constructive_constant <= 4.0


def test_constructive_constant_grows_with_chain():
    short = poincare_constructive(TWO_ATOMS, UNIT)
    long = poincare_constructive(TWO_ATOMS, Interval(0.0, 2.5))
    assert long.chain_length == 3 and long.constructive_constant > short.constructive_constant


@pytest.mark.parametrize("m,dom,basis", [
    (TWO_ATOMS, UNIT, "P0"),
    (make_lattice_series(), UNIT, "P0"),
    (make_radial(fractional_kernel(0.5, 1), 1), UNIT, "P0"),
    (make_radial(fractional_kernel(1.5, 1), 1), Interval(-1.0, 1.0), "P1"),
    (make_radial(compact_kernel(0.5), 2), Box((0.0, 0.0), (1.0, 1.0)), "P0"),
])
def test_spectral_below_constructive(m, dom, basis):
    g = _grid(dom, 1 / 8, 1.0, basis)
    spec = poincare_spectral(assemble(m, g))
    cons = poincare_constructive(m, dom)
    assert 0 < spec.spectral_constant <= cons.constructive_constant
    assert math.isfinite(cons.constructive_constant)


def test_fractional_annulus_has_mass():
    est = poincare_constructive(make_radial(fractional_kernel(0.5, 1), 1), UNIT)
    assert est.annulus_mass > 0 and math.isfinite(est.constructive_constant)


def test_weak_max_principle_simple_cases():
    g = _grid()
    one = GridFunction(g, g.interior.astype(float))
    rep = solve(TWO_ATOMS, UNIT, g, one)
    v = check_weak_max_principle(rep)
    assert v["pass"] and np.all(rep.interior_values() > 0)
    assert check_weak_max_principle(solve(TWO_ATOMS, UNIT, g, GridFunction.zeros(g)))["pass"]


_M = make_mixture([make_radial(fractional_kernel(0.6, 1), 1), make_atomic([((0.7,), 0.4)])])
_G = make_grid(UNIT, 1 / 32, 0.75, "P0")
_K = assemble(_M, _G)


def _data(rng, scale=1.0):
    I = _G.interior
    f = GridFunction(_G, np.where(I, scale * rng.uniform(0, 1, _G.size), 0.0))
    g = GridFunction(_G, np.where(I, 0.0, scale * rng.uniform(0, 1, _G.size)))
    return f, g


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_weak_max_principle_random(seed):
    f, g = _data(np.random.default_rng(seed))
    rep = solve(_M, UNIT, _G, f, g, K=_K, tol=1e-12)
    assert check_weak_max_principle(rep, tol=1e-9)["pass"]


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_comparison_random(seed):
    rng = np.random.default_rng(seed)
    fv, gv = _data(rng)
    df, dg = _data(rng)
    v = solve(_M, UNIT, _G, fv, gv, K=_K, tol=1e-12)
    u = solve(_M, UNIT, _G, fv + df, gv + dg, K=_K, tol=1e-12)
    assert check_comparison(u, v, tol=1e-9)["pass"]


def test_comparison_examples():
    g = _grid()
    I = g.interior
    s = lambda fval, gval: solve(TWO_ATOMS, UNIT, g, GridFunction(g, np.where(I, fval, 0.0)),
                                 GridFunction(g, np.where(I, 0.0, gval)))
    assert check_comparison(s(2.0, 0.0), s(1.0, 0.0))["pass"]
    assert check_comparison(s(1.0, 1.0), s(1.0, 0.0))["pass"]
    assert not check_comparison(s(1.0, 0.0), s(2.0, 0.0))["pass"]


@pytest.mark.parametrize("m,basis", [
    (TWO_ATOMS, "P0"), (make_lattice_series(), "P0"), (make_radial(fractional_kernel(0.5, 1), 1), "P0"),
])
def test_m_matrix_structure(m, basis):
    rep = m_matrix_report(assemble(m, _grid(basis=basis)))
    assert rep["diag_nonnegative"] and rep["offdiag_nonpositive"] and rep["row_sum_nonnegative"]


def test_barrier_unbounded_support_lattice():
    b = build_barrier(make_lattice_series(), UNIT, 1 / 16)
    assert b.case == "UnboundedSupport" and b.certified
    assert np.all(b.w.coeffs >= 0)
    assert b.C_sup == pytest.approx(1 / b.params["tail_mass"], rel=1e-12)


def test_barrier_compact_two_atoms():
    b = build_barrier(TWO_ATOMS, UNIT, 1 / 16)
    assert b.case == "CompactSupport" and b.params["R"] == 3.0
    assert b.certified and b.lower_Lw >= 1.0


def test_barrier_compact_kernel_on_large_domain_routes_to_compact_case():
    m = make_radial(compact_kernel(0.5), 1)
    b = build_barrier(m, Interval(-2.0, 2.0), 1 / 8)
    assert b.case == "CompactSupport" and b.certified


def test_barrier_two_atoms_concave_cap_identity():
    # 2η(x) - η(x+1) - η(x-1) = 2/R² for the cap η = 1 - x²/R², R = 3
    eta = lambda x: 1 - x * x / 9
    for x in np.linspace(0.05, 0.95, 7):
        assert 2 * eta(x) - eta(x + 1) - eta(x - 1) == pytest.approx(2 / 9, rel=1e-12)


def test_barrier_bounds_solutions():
    m = make_radial(fractional_kernel(0.5, 1), 1)
    b = barrier(m, UNIT, h=1 / 32)
    assert b.certified
    g = _grid(h=1 / 32, m=m)
    rep = solve(m, UNIT, g, GridFunction(g, g.interior.astype(float)))
    assert np.max(rep.interior_values()) <= b.C_sup


def test_effective_bound_lattice_series():
    eb = effective_bound(make_lattice_series(), UNIT)
    assert eb["kappa_inf"] == pytest.approx(math.pi ** 2 / 3, abs=1e-9)
    assert eb["C_eff_inverse"] == pytest.approx(math.pi ** 2 / 3 - 1, abs=1e-6)
    assert eb["gap"] == pytest.approx(1.0, abs=1e-6)
    assert eb["monotone"]


def test_effective_bound_monotone_fractional():
    eb = effective_bound(make_radial(fractional_kernel(0.5, 1), 1), UNIT)
    inv = eb["C_eps_inverse"]
    assert eb["monotone"] and all(a <= b for a, b in zip(inv[:-1], inv[1:]))
    assert eb["gap"] >= 0


def test_linf_bound_two_atoms_attained():
    g = _grid()
    f = GridFunction(g, g.interior.astype(float))
    rep = solve(TWO_ATOMS, UNIT, g, f)
    out = linf_bound(rep, TWO_ATOMS, UNIT, f)
    assert out["kappa_inf"] == pytest.approx(2.0)
    assert out["bound_kappa"] == pytest.approx(0.5)
    assert out["max_abs_solution"] == pytest.approx(out["bound_kappa"], abs=1e-10)
    assert out["holds"]


def test_linf_bound_lattice_both_bounds_hold():
    g = _grid()
    f = GridFunction(g, g.interior.astype(float))
    m = make_lattice_series()
    out = linf_bound(solve(m, UNIT, g, f, tol=1e-12), m, UNIT, f)
    assert out["holds"] and out["max_abs_solution"] <= out["bound_kappa"] + 1e-9


def test_linf_bound_zero_source():
    g = _grid()
    I = g.interior
    gv = GridFunction(g, np.where(I, 0.0, np.cos(g.coords[:, 0])))
    rep = solve(TWO_ATOMS, UNIT, g, GridFunction.zeros(g), gv)
    out = linf_bound(rep, TWO_ATOMS, UNIT, GridFunction.zeros(g), gv)
    assert out["holds"] and out["bound"] == pytest.approx(np.max(np.abs(gv.coeffs)))
