import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nld.errors import AdmissibilityError, OutOfTubeError
from nld.geometry import (Box, Disk, Interval, PolarGraph, dilate, domain_from_spec, make_grid,
                          nearest_boundary_point, translate_chain_length, tube_width)
from nld.levy import fractional_kernel, make_radial


def test_dilate_interval():
    d = dilate(Interval(0.0, 1.0), 0.25)
    assert isinstance(d, Interval) and (d.a, d.b) == (-0.25, 1.25)


def test_dilate_disk():
    d = dilate(Disk((0.0, 0.0), 1.0), 0.5)
    assert isinstance(d, Disk) and d.r == 1.5


def test_dilate_by_zero_is_identity():
    base = Box((0.0, 0.0), (1.0, 2.0))
    assert dilate(base, 0.0) is base


def test_dilated_box_contains_neighbourhood():
    d = dilate(Box((0.0, 0.0), (1.0, 1.0)), 0.2)
    assert d.contains(np.array([[1.15, 0.5], [-0.1, -0.1]])).all()
    assert not d.contains(np.array([[1.15, 1.15]])).any()  # corner rounded: distance √2·0.15 > 0.2


@pytest.mark.parametrize("dom,x0,n", [
    (Interval(0.0, 1.0), [1.0], 1),
    (Interval(0.0, 1.0), [0.4], 3),
    (Box((0.0, 0.0), (1.0, 1.0)), [2.0, 0.0], 1),
    (Interval(0.0, 2.5), [1.0], 3),
])
def test_translate_chain_examples(dom, x0, n):
    assert translate_chain_length(dom, x0) == n


def _brute_chain(a, b, x0):
    lo, hi, n = a, b, 0
    while lo < hi:
        n += 1
        lo, hi = max(lo, a + n * x0), min(hi, b + n * x0)
    return n


@settings(max_examples=100, deadline=None)
@given(st.floats(0.05, 3.0), st.floats(0.3, 2.0), st.booleans())
def test_translate_chain_interval_matches_brute_force(length, step, flip):
    x0 = -step if flip else step
    assert translate_chain_length(Interval(0.0, length), [x0]) == _brute_chain(0.0, length, abs(x0))


@settings(max_examples=40, deadline=None)
@given(st.floats(0.2, 2.0), st.floats(0, 2 * math.pi))
def test_translate_chain_bounded_by_diameter(r, th):
    dom = Disk((0.0, 0.0), 0.7)
    x0 = r * np.array([math.cos(th), math.sin(th)])
    n = translate_chain_length(dom, x0)
    assert 1 <= n <= math.ceil(dom.diameter / r) + 1


@settings(max_examples=50, deadline=None)
@given(st.floats(0.0, 1.0), st.floats(0.0, 1.0), st.floats(-2, 3), st.floats(-2, 3))
def test_dilate_monotone(e1, de, x, y):
    dom = Box((0.0, 0.0), (1.0, 1.0))
    p = np.array([[x, y]])
    if dilate(dom, e1).contains(p)[0]:
        assert dilate(dom, e1 + de).contains(p)[0]


def test_nearest_boundary_disk_inside_and_outside():
    d = Disk((0.0, 0.0), 1.0)
    p, dist, inside = nearest_boundary_point(d, np.array([0.9, 0.0]))
    assert np.allclose(p, [1.0, 0.0]) and dist == pytest.approx(0.1) and inside
    p, dist, inside = nearest_boundary_point(d, np.array([1.05, 0.0]))
    assert np.allclose(p, [1.0, 0.0]) and dist == pytest.approx(0.05) and not inside


def test_tube_width_disk():
    # r = 1, λ = 1/(1 - 1/4)^{3/2}, δ = 1/2
    lam = 1 / 0.75 ** 1.5
    assert tube_width(Disk((0.0, 0.0), 1.0)) == pytest.approx(min(1.0, 1 / (6 * lam), 0.5 / 3))


def test_nearest_boundary_outside_tube_rejected():
    with pytest.raises(OutOfTubeError):
        nearest_boundary_point(Disk((0.0, 0.0), 1.0), np.array([0.0, 0.0]))
    with pytest.raises(OutOfTubeError):
        nearest_boundary_point(Disk((0.0, 0.0), 1.0), np.array([0.85, 0.0]))


def test_polar_graph_nearest_point_is_normal_foot():
    dom = PolarGraph((0.0, 0.0), 1.0, 0.08, 3)
    rng = np.random.default_rng(4)
    eps = tube_width(dom)
    t = rng.uniform(0, 2 * np.pi, 50)
    c, c1 = dom.curve(t), dom.curve(t, 1)
    normal = np.column_stack([c1[:, 1], -c1[:, 0]])
    normal /= np.linalg.norm(normal, axis=1, keepdims=True)
    s = rng.uniform(-0.9, 0.9, 50) * eps
    x = c + s[:, None] * normal
    p, d, _ = dom.nearest_boundary(x)
    assert np.allclose(p, c, atol=1e-9)
    assert np.allclose(d, np.abs(s), atol=1e-9)


@pytest.mark.parametrize("dom", [Disk((0.2, -0.1), 0.8), PolarGraph((0.0, 0.0), 1.0, 0.08, 3)])
def test_ball_conditions_probe(dom):
    r, _, _ = dom.c11_params()
    b, nrm = dom.boundary_samples(128)
    rng = np.random.default_rng(1)
    for p, nv in zip(b, nrm):
        th = rng.uniform(0, 2 * np.pi, 64)
        rad = r * np.sqrt(rng.uniform(0, 0.98, 64))
        off = rad[:, None] * np.column_stack([np.cos(th), np.sin(th)])
        assert dom.contains(p - r * nv + off).all()
        assert not dom.contains(p + r * nv + off).any()


def test_grid_counts_interval():
    g = make_grid(Interval(0.0, 1.0), 0.1, 3.0, "P0")
    assert g.n_interior == 10
    assert g.coords[:, 0].min() == pytest.approx(-2.95) and g.coords[:, 0].max() == pytest.approx(3.95)


def test_grid_interior_centres_lie_in_domain():
    dom = Disk((0.0, 0.0), 1.0)
    g = make_grid(dom, 0.1, 0.3, "P0")
    assert dom.contains(g.coords[g.interior]).all()
    assert not dom.contains(g.coords[~g.interior]).any()


def test_p0_rejected_for_strongly_singular_kernel():
    m = make_radial(fractional_kernel(1.5, 1), 1)
    with pytest.raises(AdmissibilityError, match="P1"):
        make_grid(Interval(0.0, 1.0), 0.1, 1.0, "P0", measure=m)


def test_p1_admissible_for_singular_kernel():
    m = make_radial(fractional_kernel(1.5, 2), 2)
    g = make_grid(Disk((0.0, 0.0), 1.0), 0.05, 0.1, "P1", measure=m)
    assert g.n_interior > 0


def test_domain_from_spec():
    assert isinstance(domain_from_spec({"type": "c11", "boundary": "polar-graph", "amplitude": 0.05}), PolarGraph)
    assert domain_from_spec({"type": "dilated", "base": {"type": "interval", "a": 0, "b": 1}, "eps": 0.5}).b == 1.5
