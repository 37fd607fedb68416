"""Translation-invariant stencils of the energy form on a uniform lattice.

For tensor-product bases on a lattice of spacing h, the Gram entry between the
basis functions at lattice indices i and j depends only on m = j - i:

    K(m) = ∫ (a(mh) - a(mh + z)) dν(z),

where a is the autocorrelation of the reference basis function.  For cell
indicators (P0) a is a product of tents h·M2(t/h); for tensor hats (P1) it is a
product of cubic B-splines h·M4(t/h).  Both are piecewise polynomials with
kinks on the lattice, which the quadratures below exploit.
"""
from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
from scipy import integrate

from .levy import AtomicMeasure, MixtureMeasure, RadialMeasure

SUPPORT = {"P0": 1, "P1": 2}


def _m2(x):
    return np.maximum(1.0 - np.abs(x), 0.0)


def _m4(x):
    ax = np.abs(x)
    inner = 2.0 / 3.0 - ax ** 2 + 0.5 * ax ** 3
    outer = (2.0 - ax) ** 3 / 6.0
    return np.where(ax <= 1.0, inner, np.where(ax < 2.0, outer, 0.0))


def profile(x, basis):
    """Autocorrelation of the unit-spacing 1-D basis function."""
    return _m2(x) if basis == "P0" else _m4(x)


def hat(x, basis):
    """The unit-spacing 1-D basis function itself (indicator or hat)."""
    x = np.asarray(x, float)
    if basis == "P0":
        return ((x >= -0.5) & (x < 0.5)).astype(float)
    return np.maximum(1.0 - np.abs(x), 0.0)


def autocorr(t, h, basis):
    """a(t) for points of shape (..., n)."""
    t = np.asarray(t, float)
    return np.prod(h * profile(t / h, basis), axis=-1)


def mass_entry(m, h, basis):
    return float(autocorr(np.asarray(m, float) * h, h, basis))


# ---------------------------------------------------------------- radial, near offsets

_GL10 = np.polynomial.legendre.leggauss(10)


def _circle_average(t, r, h, basis):
    """∫_0^{2π} (a(t) - a(t + r e_θ)) dθ in 2-D, split where the circle crosses lattice lines."""
    s = SUPPORT[basis]
    lines = np.arange(-s, s + 1) * h
    angles = [0.0, 2 * np.pi]
    for k in lines:
        c = (k - t[0]) / r
        if abs(c) <= 1:
            th = math.acos(c)
            angles += [th, 2 * np.pi - th]
        c = (k - t[1]) / r
        if abs(c) <= 1:
            th = math.asin(c)
            angles += [th % (2 * np.pi), (np.pi - th) % (2 * np.pi)]
    cuts = np.unique(np.asarray(angles))
    edges = [cuts[0]]
    for a, b in zip(cuts[:-1], cuts[1:]):
        pieces = max(1, math.ceil((b - a) / (np.pi / 4)))
        edges.extend(np.linspace(a, b, pieces + 1)[1:])
    edges = np.asarray(edges)
    a, b = edges[:-1], edges[1:]
    keep = b - a > 1e-14
    a, b = a[keep], b[keep]
    x, w = _GL10
    th = (0.5 * (b - a))[:, None] * x + (0.5 * (a + b))[:, None]
    wt = (0.5 * (b - a))[:, None] * w
    pts = np.stack([t[0] + r * np.cos(th), t[1] + r * np.sin(th)], axis=-1)
    a0 = float(autocorr(t, h, basis))
    return float(np.sum(wt * (a0 - autocorr(pts, h, basis))))


def _shat(t, r, h, basis):
    """Spherical second difference: ∫_{|z|=r} (a(t) - a(t+z)) dσ(z)."""
    if len(t) == 1:
        return 2 * autocorr(t, h, basis) - autocorr(t + r, h, basis) - autocorr(t - r, h, basis)
    return r * _circle_average(t, r, h, basis)


def _radial_breakpoints(t, h, basis, kernel, rmax):
    s = SUPPORT[basis]
    ks = np.arange(-s, s + 1) * h
    if len(t) == 1:
        pts = list(np.abs(ks - t[0]))
    else:
        d0, d1 = np.abs(ks - t[0]), np.abs(ks - t[1])
        pts = list(d0) + list(d1) + list(np.hypot(d0[:, None], d1[None, :]).ravel())
    pts += kernel.breakpoints
    pts = sorted({float(p) for p in pts if 1e-14 < p < rmax})
    return [0.0] + pts + [rmax]


def radial_entry(measure: RadialMeasure, m, h, basis):
    """K(m) for a radial measure by one-dimensional quadrature in |z|.

    Returns (value, error estimate).  Near the origin the integrand is split as
    (smooth part) x r^e and integrated with an algebraic weight.
    """
    k, n = measure.kernel, measure.n
    t = np.asarray(m, float) * h
    s = SUPPORT[basis]
    rmax = float(np.linalg.norm(t)) + s * h * math.sqrt(n)
    rmax = min(rmax, k.support) if math.isfinite(k.support) else rmax
    edges = _radial_breakpoints(t, h, basis, k, rmax)
    p = n if basis == "P0" else n + 1
    total, err = 0.0, 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        if hi <= k.r_min or lo >= k.support or hi - lo < 1e-15:
            continue
        if lo == 0.0 and k.alpha is not None and k.r_min == 0.0:
            # On the first piece S(r)/r^p is a polynomial of degree <= 6 in r, so it
            # is interpolated away from 0 instead of being evaluated with cancellation.
            nodes = hi * (0.625 + 0.375 * np.cos(np.pi * (np.arange(9) + 0.5) / 9))
            vals = [_shat(t, r, h, basis) / r ** p for r in nodes]
            poly = np.polynomial.Chebyshev.fit(nodes, vals, 6, domain=[0.0, hi])

            def f(r):
                return k.coeff * float(k.shape(np.asarray(r))) * poly(r)
            v, e = integrate.quad(f, 0.0, hi, weight="alg", wvar=(p - n - k.alpha, 0.0),
                                  epsabs=1e-15 * h ** n, epsrel=1e-11, limit=200)
        else:
            def f(r):
                return float(measure.V(r)) * _shat(t, r, h, basis)
            v, e = integrate.quad(f, lo, hi, epsabs=1e-15 * h ** n, epsrel=1e-11, limit=200)
        total += v
        err += e
    a0 = float(autocorr(t, h, basis))
    if a0 != 0.0:
        tail, _ = measure.shell_mass(rmax)
        total += a0 * tail
    return total, err


# ---------------------------------------------------------------- radial, far offsets

_GL8 = np.polynomial.legendre.leggauss(8)


def _support_nodes(h, basis, n):
    """Gauss–Legendre nodes/weights times a(s) over the support of a, cell by cell."""
    s = SUPPORT[basis]
    x, w = _GL8
    nodes1, wts1 = [], []
    for c in range(-s, s):
        nodes1.append((c + 0.5 + 0.5 * x) * h)
        wts1.append(0.5 * w * h)
    nodes1, wts1 = np.concatenate(nodes1), np.concatenate(wts1)
    grids = np.meshgrid(*([nodes1] * n), indexing="ij")
    wgrids = np.meshgrid(*([wts1] * n), indexing="ij")
    S = np.stack([g.ravel() for g in grids], axis=-1)
    W = np.prod(np.stack([g.ravel() for g in wgrids], axis=-1), axis=-1)
    return S, W * autocorr(S, h, basis)


def far_entries(measure: RadialMeasure, T, h, basis, chunk=4096):
    """K at offsets ``T`` (in lattice units) away from the basis support: -∫ a(s) V(|s - t|) ds."""
    S, W = _support_nodes(h, basis, measure.n)
    T = np.asarray(T, float) * h
    out = np.empty(len(T))
    for i in range(0, len(T), chunk):
        d = np.linalg.norm(T[i:i + chunk, None, :] - S[None, :, :], axis=-1)
        out[i:i + chunk] = -(measure.V(d) @ W)
    return out


def _straddles(measure, T, h, basis):
    """Offsets whose distance range to the support box contains a kernel breakpoint."""
    bps = [b for b in measure.kernel.breakpoints if b != 1.0]
    if not bps:
        return np.zeros(len(T), bool)
    s = SUPPORT[basis]
    A = np.abs(np.asarray(T, float)) * h
    dmin = np.linalg.norm(np.maximum(A - s * h, 0.0), axis=1)
    dmax = np.linalg.norm(A + s * h, axis=1)
    hit = np.zeros(len(T), bool)
    for b in bps:
        hit |= (dmin <= b) & (b <= dmax)
    return hit


def _quadrant_offsets(extent):
    axes = [np.arange(e) for e in extent]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(extent))


def _radial_quadrant(measure, extent, h, basis):
    """K on the nonnegative quadrant of offsets [0, extent_d)."""
    n = measure.n
    s = SUPPORT[basis]
    M = _quadrant_offsets(extent)
    vals = np.empty(len(M))
    near = np.max(M, axis=1) <= s + 1
    near |= _straddles(measure, M, h, basis)
    err = 0.0
    cache = {}
    for i in np.flatnonzero(near):
        key = tuple(sorted(M[i])) if n == 2 else tuple(M[i])
        if key not in cache:
            cache[key] = radial_entry(measure, np.asarray(key), h, basis)
            err += cache[key][1]
        vals[i] = cache[key][0]
    far = ~near
    if far.any():
        vals[far] = far_entries(measure, M[far], h, basis)
    return vals.reshape(extent), err


@lru_cache(maxsize=32)
def _fractional_unit_quadrant(alpha, coeff, n, basis, extent):
    from .levy import RadialKernel, RadialMeasure, _one

    kernel = RadialKernel("fractional", coeff, alpha, _one)
    q, err = _radial_quadrant(RadialMeasure(kernel, n), extent, 1.0, basis)
    q.setflags(write=False)
    return q, err


def _is_pure_power(kernel):
    return kernel.kind == "fractional" and kernel.r_min == 0.0 and math.isinf(kernel.support)


def _mirror(quadrant):
    """Full symmetric stencil of shape (2e-1, ...) from its nonnegative quadrant."""
    out = quadrant
    for ax in range(quadrant.ndim):
        flipped = np.flip(np.take(out, np.arange(1, out.shape[ax]), axis=ax), axis=ax)
        out = np.concatenate([flipped, out], axis=ax)
    return out


def radial_stencil(measure: RadialMeasure, extent, h, basis):
    extent = tuple(int(e) for e in extent)
    k = measure.kernel
    if _is_pure_power(k):
        q, err = _fractional_unit_quadrant(k.alpha, k.coeff, measure.n, basis, extent)
        scale = h ** (measure.n - k.alpha)
        return _mirror(q * scale), err * scale
    q, err = _radial_quadrant(measure, extent, h, basis)
    return _mirror(q), err


# ---------------------------------------------------------------- atomic

def atomic_stencil(measure: AtomicMeasure, extent, h, basis):
    """K(m) = Λ a(mh) - Σ_y w a(mh + y), exact for a finite list of atoms."""
    n = measure.dim
    s = SUPPORT[basis]
    extent = tuple(int(e) for e in extent)
    shape = tuple(2 * e - 1 for e in extent)
    center = np.array([e - 1 for e in extent])
    reach = float(np.linalg.norm((center + s) * h))
    if measure.tail > 0 and measure.tail_radius < reach:
        raise ValueError(
            f"far-field remainder starts at radius {measure.tail_radius}, inside the lattice reach {reach:.3g}; "
            "increase the series truncation")
    K = np.zeros(shape)
    # diagonal block: total mass times a(t) on the support of a
    loc = _quadrant_offsets([2 * s + 1] * n) - s
    for m in loc:
        pos = tuple(m + center)
        if all(0 <= p < d for p, d in zip(pos, shape)):
            K[pos] += measure.total_mass * mass_entry(m, h, basis)
    for y, w in zip(measure.points, measure.weights):
        # a(mh + y) != 0 only for m within s of -y/h
        base = -y / h
        lo = np.floor(base - s).astype(int)
        cand = _quadrant_offsets(np.full(n, 2 * s + 2)) + lo
        val = autocorr((cand + y / h) * h, h, basis)
        for m, v in zip(cand, val):
            if v == 0.0:
                continue
            pos = tuple(m + center)
            if all(0 <= p < d for p, d in zip(pos, shape)):
                K[pos] -= w * v
    return K, 0.0


def stencil(measure, extent, h, basis):
    """Full stencil array of shape (2 e_d - 1) centred at offset 0, plus an error estimate."""
    if isinstance(measure, MixtureMeasure):
        parts = [stencil(p, extent, h, basis) for p in measure.parts]
        return sum(p[0] for p in parts), sum(p[1] for p in parts)
    if isinstance(measure, AtomicMeasure):
        return atomic_stencil(measure, extent, h, basis)
    if isinstance(measure, RadialMeasure):
        return radial_stencil(measure, extent, h, basis)
    raise TypeError(f"unsupported measure {type(measure).__name__}")


def mass_stencil(n, h, basis):
    s = 0 if basis == "P0" else 1
    loc = _quadrant_offsets([2 * s + 1] * n) - s
    out = np.zeros([2 * s + 1] * n)
    for m in loc:
        out[tuple(m + s)] = mass_entry(m, h, basis)
    return out
