
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from nld.form import (GridFunction, assemble, energy, form_value, form_via_delta_decomposition, hd_part,
                      norm, shift_energy)
from nld.geometry import Box, Interval, make_grid
from nld.levy import (compact_kernel, fractional_constant, fractional_kernel, make_atomic,
                      make_lattice_series, make_mixture, make_radial)
from nld.solver import solve

TWO_ATOMS = make_atomic([((1.0,), 1.0), ((-1.0,), 1.0)])


def _random_interior(grid, seed):
    rng = np.random.default_rng(seed)
    return GridFunction(grid, np.where(grid.interior, rng.uniform(-1, 1, grid.size), 0.0))


def test_two_atoms_single_cell_entry():
    g = make_grid(Interval(0.0, 1.0), 1.0, 1.0, "P0")
    K = assemble(TWO_ATOMS, g)
    assert K.block(g.interior).tolist() == [[2.0]]


@pytest.mark.parametrize("measure,dom,basis", [
    (TWO_ATOMS, Interval(0.0, 1.0), "P0"),
    (make_radial(fractional_kernel(0.5, 1), 1), Interval(0.0, 1.0), "P0"),
    (make_radial(fractional_kernel(1.5, 1), 1), Interval(0.0, 1.0), "P1"),
    (make_radial(compact_kernel(0.4), 2), Box((0.0, 0.0), (1.0, 1.0)), "P0"),
])
def test_global_constant_has_zero_energy(measure, dom, basis):
    g = make_grid(dom, 0.125, 0.5, basis)
    K = assemble(measure, g)
    u = GridFunction(g, np.full(g.size, 3.0), far_value=3.0)
    assert form_value(K, u, u) == 0.0


def _fractional_pair_oracle(u, h, alpha=0.5):
    """½∬(u(x)-u(y))² c|x-y|^{-1-α} for a P0 function on cells [ih, (i+1)h] of (0, 1)."""
    c = 1.0 / fractional_constant(alpha, 1)
    n = len(u)

    def inner(x, b):
        # ∫_b^{b+h} |x-y|^{-1-α} dy for x outside (b, b+h)
        d0, d1 = abs(x - b), abs(x - b - h)
        return abs(d0 ** -alpha - d1 ** -alpha) / alpha

    total = 0.0
    for i in range(n):
        a = i * h
        for j in range(i + 1, n):
            b = j * h
            val = integrate.quad(inner, a, a + h, args=(b,), epsabs=1e-14, epsrel=1e-12, limit=200)[0]
            total += (u[i] - u[j]) ** 2 * c * val
        # pairs with the exterior (u = 0 there), counted in both orders then halved
        ext = integrate.quad(lambda x: (x ** -alpha + (1 - x) ** -alpha) / alpha, a, a + h,
                             epsabs=1e-14, epsrel=1e-12, limit=200)[0]
        total += u[i] ** 2 * c * ext
    return total


@pytest.mark.filterwarnings("ignore::scipy.integrate.IntegrationWarning")
def test_fractional_form_matches_double_quadrature_20_cells():
    m = make_radial(fractional_kernel(0.5, 1), 1)
    g = make_grid(Interval(0.0, 1.0), 1 / 20, 0.5, "P0", measure=m)
    K = assemble(m, g)
    u = _random_interior(g, 7)
    oracle = _fractional_pair_oracle(u.coeffs[g.interior], 1 / 20)
    assert form_value(K, u, u) == pytest.approx(oracle, rel=1e-8)


def test_p1_hat_energy_matches_shift_quadrature():
    alpha = 1.5
    m = make_radial(fractional_kernel(alpha, 1), 1)
    h = 0.25
    g = make_grid(Interval(0.0, 1.0), h, 1.0, "P1", measure=m)
    j = int(np.argmin(np.abs(g.coords[:, 0] - 0.5)))
    e = np.zeros(g.size)
    e[j] = 1.0
    u = GridFunction(g, e)
    K = assemble(m, g)
    c = 1.0 / fractional_constant(alpha, 1)

    def hat(x):
        return np.maximum(1 - np.abs(x - 0.5) / h, 0.0)

    def sq_diff(z):
        # ∫(φ(x) - φ(x+z))² dx, piecewise quadratic in x
        pts = sorted({0.5 - h, 0.5, 0.5 + h, 0.5 - h - z, 0.5 - z, 0.5 + h - z})
        return integrate.quad(lambda x: (hat(x) - hat(x + z)) ** 2, pts[0], pts[-1], points=pts[1:-1],
                              epsabs=1e-15, epsrel=1e-13, limit=200)[0]

    # ½∬ over both signs of z = ∫_0^∞ c z^{-1-α} ∫(φ(x)-φ(x+z))² dx dz
    near = integrate.quad(lambda z: c * z ** (-1 - alpha) * sq_diff(z), 0, h, points=[h / 2],
                          epsabs=1e-13, epsrel=1e-11, limit=200)[0]
    mid = integrate.quad(lambda z: c * z ** (-1 - alpha) * sq_diff(z), h, 2 * h, epsabs=1e-13, limit=200)[0]
    far = c * (4 * h / 3) * (2 * h) ** -alpha / alpha  # beyond 2h the supports separate: 2‖φ‖² = 4h/3
    assert form_value(K, u, u) == pytest.approx(near + mid + far, rel=1e-7)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_form_symmetric_psd_cauchy_schwarz(seed):
    m = make_mixture([make_radial(fractional_kernel(0.7, 1), 1), make_atomic([((0.3,), 0.5)])])
    g = _GRID_1D
    K = _K_MIX
    u, v = _random_interior(g, seed), _random_interior(g, seed + 1)
    uv, vu = form_value(K, u, v), form_value(K, v, u)
    uu, vv = form_value(K, u, u), form_value(K, v, v)
    assert uv == pytest.approx(vu, rel=1e-13, abs=1e-13)
    assert uu >= 0 and vv >= 0
    assert uv ** 2 <= uu * vv * (1 + 1e-12)
    assert m.dim == 1


_GRID_1D = make_grid(Interval(0.0, 1.0), 1 / 32, 0.5, "P0")
_K_MIX = assemble(make_mixture([make_radial(fractional_kernel(0.7, 1), 1), make_atomic([((0.3,), 0.5)])]),
                  _GRID_1D)


def test_matrix_exactly_symmetric():
    m = make_radial(fractional_kernel(1.2, 2), 2)
    g = make_grid(Box((0.0, 0.0), (1.0, 1.0)), 1 / 8, 0.25, "P1", measure=m)
    A = assemble(m, g).dense()
    assert np.array_equal(A, A.T)


def test_measure_monotonicity():
    small = make_atomic([((1.0,), 1.0)])
    big = make_mixture([small, make_atomic([((0.5,), 0.3)]), make_radial(compact_kernel(0.3), 1)])
    K1, K2 = assemble(small, _GRID_1D), assemble(big, _GRID_1D)
    for seed in range(20):
        u = _random_interior(_GRID_1D, seed)
        assert form_value(K1, u, u) <= form_value(K2, u, u)


def test_domain_monotonicity_embedding():
    m = make_radial(fractional_kernel(0.5, 1), 1)
    g1 = make_grid(Interval(0.0, 1.0), 1 / 16, 1.0, "P0")
    g2 = make_grid(Interval(0.0, 2.0), 1 / 16, 1.0, "P0")
    u1 = _random_interior(g1, 3)
    pos = np.rint((g1.coords[:, 0] - g2.coords[0, 0]) * 16).astype(int)
    c2 = np.zeros(g2.size)
    c2[pos] = u1.coeffs
    u2 = GridFunction(g2, c2)
    assert form_value(assemble(m, g2), u2, u2) == pytest.approx(form_value(assemble(m, g1), u1, u1), rel=1e-12)


def test_delta_decomposition_exact_for_atoms():
    g = make_grid(Interval(0.0, 1.0), 1 / 16, 1.0, "P0")
    u = _random_interior(g, 1)
    K = assemble(TWO_ATOMS, g)
    assert form_via_delta_decomposition(TWO_ATOMS, u) == pytest.approx(form_value(K, u, u), rel=1e-14)


def test_delta_decomposition_lattice_series_tail_bound():
    g = make_grid(Interval(0.0, 1.0), 1 / 16, 1.0, "P0")
    u = _random_interior(g, 2)
    m100, full = make_lattice_series(K=100), make_lattice_series(K=200)
    dec = form_via_delta_decomposition(m100, u)
    assert dec == pytest.approx(form_value(assemble(m100, g), u, u), rel=1e-13)
    # truncating the stored series moves at most (Σ_{k>100} 2/k²)·‖u‖² of shift energy
    norm_sq = float(np.sum(u.coeffs ** 2) / 16)
    assert abs(dec - form_value(assemble(full, g), u, u)) <= 0.02 * norm_sq


@pytest.mark.parametrize("measure,basis,dom", [
    (make_radial(fractional_kernel(0.5, 1), 1), "P0", Interval(0.0, 1.0)),
    (make_radial(fractional_kernel(1.5, 1), 1), "P1", Interval(0.0, 1.0)),
    (make_radial(compact_kernel(0.3), 2), "P0", Box((0.0, 0.0), (1.0, 1.0))),
])
def test_delta_decomposition_radial(measure, basis, dom):
    g = make_grid(dom, 1 / 8, 0.5, basis)
    u = _random_interior(g, 5)
    K = assemble(measure, g)
    assert form_via_delta_decomposition(measure, u) == pytest.approx(form_value(K, u, u), rel=1e-8)


def test_delta_decomposition_of_zero():
    g = make_grid(Interval(0.0, 1.0), 1 / 8, 0.5, "P0")
    assert form_via_delta_decomposition(TWO_ATOMS, GridFunction.zeros(g)) == 0.0


def test_shift_energy_of_indicator():
    g = make_grid(Interval(0.0, 1.0), 1 / 8, 2.0, "P0")
    u = GridFunction(g, g.interior.astype(float))
    # ½∫(1_{(0,1)}(x) - 1_{(0,1)}(x+y))² dx = |y| for |y| <= 1
    assert shift_energy(u, [0.25]) == pytest.approx(0.25, rel=1e-14)
    assert shift_energy(u, [1.5]) == pytest.approx(1.0, rel=1e-14)


def test_energy_examples():
    g = make_grid(Interval(0.0, 1.0), 1 / 8, 1.0, "P0")
    K = assemble(TWO_ATOMS, g)
    f = GridFunction(g, g.interior.astype(float))
    assert energy(GridFunction.zeros(g), f, K) == 0.0
    rep = solve(TWO_ATOMS, g.domain, g, f, K=K)
    assert rep.energy == pytest.approx(-0.25, abs=1e-12)


@pytest.mark.parametrize("lam", [0.1, -0.1, 1.0, -1.0])
def test_energy_minimality(lam):
    m = make_radial(fractional_kernel(0.5, 1), 1)
    g = make_grid(Interval(-1.0, 1.0), 1 / 16, 1.0, "P0", measure=m)
    K = assemble(m, g)
    f = GridFunction(g, g.interior.astype(float))
    u = solve(m, g.domain, g, f, K=K, tol=1e-13).solution
    phi = _random_interior(g, 9)
    got = energy(u + lam * phi, f, K) - energy(u, f, K)
    assert got == pytest.approx(0.5 * lam * lam * form_value(K, phi, phi), rel=1e-9)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_norm_equivalence(seed):
    u = _random_interior(_GRID_1D, seed)
    v, hh = norm(_K_MIX, u, "V"), norm(_K_MIX, u, "H")
    assert v <= hh * (1 + 1e-12) and hh <= 2 * v


def test_norms_of_zero():
    z = GridFunction.zeros(_GRID_1D)
    for space in ("V", "H", "HD"):
        assert norm(_K_MIX, z, space) == 0.0


def test_exterior_seminorm_brute_force_10_cells():
    g = make_grid(Interval(0.0, 1.0), 0.1, 0.5, "P0")
    m = make_radial(fractional_kernel(0.5, 1), 1)
    K = assemble(m, g)
    rng = np.random.default_rng(0)
    halo = ~g.interior
    u = GridFunction(g, np.where(halo, rng.uniform(-1, 1, g.size), 0.0))
    A = K.dense()
    pair = 0.0
    idx = np.flatnonzero(halo)
    for i in idx:
        for j in idx:
            if i != j:
                pair += 0.5 * (-A[i, j]) * (u.coeffs[i] - u.coeffs[j]) ** 2
    assert hd_part(K, u, halo) == pytest.approx(pair, rel=1e-12)


def test_coo_export_sorted():
    g = make_grid(Interval(0.0, 1.0), 0.25, 0.25, "P0")
    text = assemble(TWO_ATOMS, g).to_coo_text()
    rows = [tuple(map(float, line.split())) for line in text.strip().splitlines()]
    keys = [(int(r), int(c)) for r, c, _ in rows]
    assert keys == sorted(keys)
    assert all(abs(v) > 0 for _, _, v in rows)


def test_delta_decomposition_when_last_cut_meets_kernel_breakpoint():
    # 24 cells of width 1/24: the outermost shift lands on the kernel's breakpoint at 1
    m = make_radial(fractional_kernel(0.48, 1), 1)
    g = make_grid(Interval(0.0, 1.0), 1 / 24, 0.5, "P0")
    u = _random_interior(g, 0)
    assert form_via_delta_decomposition(m, u) == pytest.approx(form_value(assemble(m, g), u, u), rel=1e-10)
