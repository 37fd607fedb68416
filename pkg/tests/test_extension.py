import math

import numpy as np
import pytest
from scipy import integrate

from nld.errors import AdmissibilityError, OutOfTubeError
from nld.extension import (ReflectionMap, build_cutoff, extend, kernel_scaling_check, lipschitz_probe,
                           measure_distortion_probe, reflect, sample_tube, zero_extension_study)
from nld.form import GridFunction, assemble, form_value
from nld.geometry import Disk, Interval, PolarGraph, make_grid
from nld.levy import RadialKernel, compact_kernel, fractional_kernel, make_atomic, make_radial

DISK = Disk((0.0, 0.0), 1.0)


def _circle_T(x):
    rho = np.linalg.norm(x, axis=1, keepdims=True)
    return x * (2 - rho) / rho


def test_reflect_examples():
    assert np.allclose(reflect(ReflectionMap(DISK), [0.9, 0.0]), [1.1, 0.0])
    assert reflect(ReflectionMap(Interval(0.0, 1.0)), 0.05) == pytest.approx(-0.05)


def test_reflect_fixes_boundary_and_rejects_far_points():
    rm = ReflectionMap(DISK)
    b = np.array([[math.cos(0.3), math.sin(0.3)]])
    assert np.allclose(reflect(rm, b), b)
    with pytest.raises(OutOfTubeError):
        reflect(rm, [0.5, 0.0])


def test_involution_on_disk():
    rm = ReflectionMap(DISK)
    x = sample_tube(rm, 1000, np.random.default_rng(0))
    assert np.max(np.abs(reflect(rm, reflect(rm, x)) - x)) < 1e-12


def test_disk_reflection_matches_radial_formula():
    rm = ReflectionMap(DISK)
    x = sample_tube(rm, 500, np.random.default_rng(1))
    Tx = reflect(rm, x)
    assert np.allclose(Tx, _circle_T(x), atol=1e-13)
    # |x - Tx| = 2 dist(x, ∂Ω), and sides swap
    assert np.allclose(np.linalg.norm(x - Tx, axis=1), 2 * np.abs(1 - np.linalg.norm(x, axis=1)), atol=1e-13)
    assert not np.any(DISK.contains(x) == DISK.contains(Tx))


def test_polar_graph_involution():
    rm = ReflectionMap(PolarGraph((0.0, 0.0), 1.0, 0.06, 4))
    x = sample_tube(rm, 300, np.random.default_rng(2))
    assert np.max(np.abs(reflect(rm, reflect(rm, x)) - x)) < 1e-9


def test_lipschitz_disk_within_circle_distortion():
    rm = ReflectionMap(DISK)
    est = lipschitz_probe(rm, 1000, seed=0)
    eps = rm.eps
    assert 1.0 <= est.alpha_hat <= (1 + eps) / (1 - eps) + 1e-9
    lo, hi = est
    assert math.isfinite(lo) and math.isfinite(hi)


def test_lipschitz_stable_across_sample_sizes():
    rm = ReflectionMap(DISK)
    a = [lipschitz_probe(rm, n, seed=3).alpha_hat for n in (500, 1000, 2000)]
    assert max(a) / min(a) <= 1.1


def test_lipschitz_interval_is_isometry_locally():
    est = lipschitz_probe(ReflectionMap(Interval(0.0, 1.0)), 1000, seed=0)
    assert est.alpha_local == pytest.approx(1.0, abs=1e-9)
    assert math.isfinite(est.alpha_hat)


def test_distortion_interval_is_one():
    out = measure_distortion_probe(ReflectionMap(Interval(0.0, 1.0)), 32)
    assert out["C_prime"] == 1.0


def test_distortion_disk_boxes_against_polar_quadrature():
    rm = ReflectionMap(DISK)
    boxes = [((0.9, -0.02), (0.94, 0.02)), ((1.02, 0.0), (1.06, 0.03)), ((0.0, 0.93), (0.02, 0.97))]
    out = measure_distortion_probe(rm, boxes=boxes, n_mc=20000, seed=0)
    for (lo, hi), got in zip(boxes, out["ratios"]):
        area = (hi[0] - lo[0]) * (hi[1] - lo[1])
        jac = integrate.dblquad(lambda y, x: (2 - math.hypot(x, y)) / math.hypot(x, y), lo[0], hi[0], lo[1], hi[1])[0]
        assert got == pytest.approx(jac / area, rel=2e-3)
    assert math.isfinite(out["C_prime"]) and out["C_prime"] > 1


def test_distortion_skips_degenerate_box():
    rm = ReflectionMap(DISK)
    out = measure_distortion_probe(rm, boxes=[((0.95, 0.0), (0.95, 0.02))])
    assert out["skipped"] == 1 and out["ratios"] == []


def test_scaling_check_fractional_closed_form():
    sc = kernel_scaling_check(fractional_kernel(0.5, 1), 1.0)
    assert sc.passed and sc.C_alpha == pytest.approx(3 ** 1.5, rel=1e-12)


def test_scaling_check_compact_fails_at_edge():
    sc = kernel_scaling_check(compact_kernel(0.5, "constant"), 1.1)
    assert not sc.passed and math.isinf(sc.C_alpha)
    assert sc.worst_t > 0.5 and sc.worst_beta * sc.worst_t < 0.5


def test_scaling_check_annulus_profile_fails():
    ring = RadialKernel("user", 1.0, None, lambda r: np.ones_like(np.asarray(r, float)), support=1.0, r_min=0.5)
    assert not kernel_scaling_check(ring, 1.0).passed


def _disk_setup(h=1 / 32, R=0.25):
    m = make_radial(fractional_kernel(0.5, 2), 2)
    rm = ReflectionMap(DISK)
    grid = make_grid(DISK, h, R, "P0", measure=m)
    return m, rm, grid, build_cutoff(DISK, rm, grid)


def test_cutoff_profile():
    m, rm, grid, cut = _disk_setup()
    out = np.array([[1.0, 0.0], [0.0, -1.2], [1.1, 0.3]])
    assert np.all(cut(out) == 1.0)
    deep = np.array([[1 - rm.eps, 0.0], [0.0, 0.5], [0.0, 0.0]])
    assert np.all(cut(deep) == 0.0)
    assert 0 < cut.linear_bound < math.inf
    v = cut.phi.coeffs
    assert np.all((v >= 0) & (v <= 1))


def test_cutoff_rejects_coarse_grid():
    rm = ReflectionMap(DISK)
    with pytest.raises(AdmissibilityError):
        build_cutoff(DISK, rm, make_grid(DISK, 1 / 8, 0.25, "P0"))


def test_zero_data_extend_to_zero():
    m, rm, grid, cut = _disk_setup()
    res = extend(GridFunction.zeros(grid), rm, cut, m, alpha_hat=1.25)
    assert res.ratio == 0.0 and not res.g_ext.coeffs.any()


def test_constant_data_blocks_and_identities():
    m, rm, grid, cut = _disk_setup()
    E = ~grid.interior
    g = GridFunction(grid, E.astype(float))
    res = extend(g, rm, cut, m, alpha_hat=1.25)
    # extend ∘ restrict: exterior coefficients unchanged; the tube part is φ itself
    assert np.array_equal(res.g_ext.coeffs[E], g.coeffs[E])
    W = grid.interior & (res.g_ext.coeffs != 0)
    assert np.allclose(res.g_ext.coeffs[W], cut.phi.coeffs[W])
    assert 0 < res.ratio < 10
    b = res.blocks
    total = b["Omega_c x Omega_c"] + 2 * b["A"] + b["B"]
    assert total == pytest.approx(2 * form_value(assemble(m, grid), res.g_ext, res.g_ext), rel=1e-10)
    assert b["A"] == pytest.approx(b["A.1"] + b["A.2"], rel=1e-10)
    assert b["B"] == pytest.approx(b["B.1"] + b["B.2"], rel=1e-10)
    assert b["A.1"] <= (b["A.1.1"] + b["A.1.2"]) * (1 + 1e-10)
    assert b["B.1"] <= (b["B.1.1"] + b["B.1.2"]) * (1 + 1e-10)


def test_extension_needs_isotropic_density():
    rm = ReflectionMap(Interval(0.0, 1.0))
    grid = make_grid(Interval(0.0, 1.0), 1 / 64, 0.5, "P0")
    m = make_atomic([((0.2,), 1.0)])
    with pytest.raises(AdmissibilityError):
        extend(GridFunction.zeros(grid), rm, build_cutoff(grid.domain, rm, grid), m)


def test_extension_rejects_inadmissible_kernel():
    rm = ReflectionMap(Interval(0.0, 1.0))
    grid = make_grid(Interval(0.0, 1.0), 1 / 64, 0.5, "P0")
    m = make_radial(compact_kernel(0.2, "constant"), 1)
    with pytest.raises(AdmissibilityError, match="scaling"):
        extend(GridFunction.zeros(grid), rm, build_cutoff(grid.domain, rm, grid), m, alpha_hat=1.0)


def test_zero_extension_study_trends():
    out = zero_extension_study(hs=(1 / 8, 1 / 16), R_trunc=3.0)
    assert out["zero_growth"] > 1.05  # grows under refinement
    assert out["exterior_drift"] < 0.05
    assert out["reflection_growth"] < out["zero_growth"]
