"""Symmetric Lévy measures: atomic, radial and mixtures of those.

A radial measure has density ``V(|y|)`` with respect to Lebesgue measure.
All radial integrals reduce to one-dimensional quadrature in ``r`` after
factoring out the sphere, so only ``V`` and a few closed forms are needed.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate, special

from .errors import DivergenceError

log = logging.getLogger(__name__)

__all__ = [
    "fractional_constant", "sphere_area",
    "RadialKernel", "fractional_kernel", "compact_kernel", "tempered_kernel", "user_kernel",
    "LevyMeasure", "AtomicMeasure", "RadialMeasure", "MixtureMeasure",
    "make_atomic", "make_radial", "make_mixture", "make_lattice_series",
    "BallComplement", "Annulus", "BoxRegion", "ShiftedComplement",
    "tail_mass", "truncate_small_jumps", "measure_from_spec",
]

_QUAD_TOL = 1e-10


def fractional_constant(alpha: float, n: int) -> float:
    """C = 2^α Γ((n+α)/2) / (π^{n/2} |Γ(-α/2)|)."""
    if not 0 < alpha < 2:
        raise ValueError(f"alpha must lie in (0, 2), got {alpha}")
    return 2 ** alpha * special.gamma((n + alpha) / 2) / (math.pi ** (n / 2) * abs(special.gamma(-alpha / 2)))


def sphere_area(n: int) -> float:
    """Surface measure of the unit sphere in R^n (2 for n = 1)."""
    return 2 * math.pi ** (n / 2) / special.gamma(n / 2)


# --------------------------------------------------------------------------- kernels

@dataclass(frozen=True)
class RadialKernel:
    """Radial density ``V(r) = coeff * r**(-n-alpha) * shape(r)`` for ``r_min < r < support``.

    ``alpha`` is the strength of the singularity at the origin (``None`` for a
    bounded density) and ``shape`` is smooth and bounded near 0.  Keeping the
    power law explicit lets quadrature use algebraic weights.
    """

    kind: str
    coeff: float
    alpha: Optional[float]
    shape: Callable[[np.ndarray], np.ndarray]
    support: float = math.inf
    r_min: float = 0.0
    params: dict = field(default_factory=dict)

    def V(self, r, n):
        r = np.asarray(r, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            pw = r ** (-(n + self.alpha)) if self.alpha is not None else np.ones_like(r)
            val = self.coeff * pw * self.shape(r)
        inside = (r > self.r_min) & (r < self.support) & (r > 0)
        return np.where(inside, val, 0.0)

    @property
    def breakpoints(self):
        pts = [p for p in (self.r_min, self.support, 1.0) if 0 < p < math.inf]
        return sorted(set(pts))

    def with_cutoff(self, delta):
        return RadialKernel(self.kind, self.coeff, self.alpha, self.shape, self.support,
                            max(self.r_min, delta), dict(self.params))


def _one(r):
    return np.ones_like(np.asarray(r, dtype=float))


def fractional_kernel(alpha: float, n: int, standard: bool = False) -> RadialKernel:
    """α-stable kernel.  Default density C^{-1}|y|^{-n-α}; ``standard=True`` uses C|y|^{-n-α}."""
    C = fractional_constant(alpha, n)
    coeff = C if standard else 1.0 / C
    return RadialKernel("fractional", coeff, float(alpha), _one,
                        params={"alpha": float(alpha), "standard": bool(standard)})


def compact_kernel(r1: float, profile: str = "quadratic-cap", coeff: float = 1.0,
                   alpha: Optional[float] = None) -> RadialKernel:
    """Kernel supported in the ball of radius ``r1``.

    ``profile`` is ``"constant"`` or ``"quadratic-cap"`` (factor 1 - r²/r1²);
    an optional ``alpha`` multiplies by ``r^{-n-alpha}``.
    """
    if r1 <= 0:
        raise ValueError("support radius must be positive")
    if profile == "constant":
        shape = _one
    elif profile == "quadratic-cap":
        def shape(r, r1=float(r1)):
            return np.maximum(1.0 - (np.asarray(r, float) / r1) ** 2, 0.0)
    else:
        raise ValueError(f"unknown compact profile {profile!r}")
    if alpha is not None and not 0 < alpha < 2:
        raise ValueError("alpha must lie in (0, 2)")
    return RadialKernel("compact", float(coeff), alpha, shape, support=float(r1),
                        params={"r1": float(r1), "profile": profile, "coeff": float(coeff), "alpha": alpha})


def tempered_kernel(alpha: float, rate: float, n: int, coeff: Optional[float] = None) -> RadialKernel:
    """Exponentially tempered stable kernel ``c r^{-n-α} e^{-rate r}``."""
    if not 0 < alpha < 2 or rate <= 0:
        raise ValueError("tempered kernel needs alpha in (0,2) and rate > 0")
    c = 1.0 / fractional_constant(alpha, n) if coeff is None else float(coeff)

    def shape(r, lam=float(rate)):
        return np.exp(-lam * np.asarray(r, float))

    return RadialKernel("tempered", c, float(alpha), shape,
                        params={"alpha": float(alpha), "rate": float(rate), "coeff": c})


def user_kernel(V: Callable, alpha: Optional[float] = None, n: int = 1) -> RadialKernel:
    """Arbitrary density profile ``V`` in dimension ``n``.

    Pass ``alpha`` when V(r) r^{n+alpha} stays bounded near 0; the power law is
    then factored out so that quadrature can treat the singularity exactly.
    """
    if alpha is None:
        return RadialKernel("user", 1.0, None, lambda r: np.asarray(V(np.asarray(r, float)), float))
    p = n + float(alpha)

    def shape(r):
        r = np.asarray(r, float)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.asarray(V(r), float) * r ** p

    return RadialKernel("user", 1.0, float(alpha), shape, params={"alpha": alpha, "n": n})


# --------------------------------------------------------------------------- regions

class Region:
    def contains(self, y):
        raise NotImplementedError

    def negate(self):
        raise NotImplementedError

    def far_field(self, R):
        """+1 if the region contains {|y| > R}, 0 if it misses it, None if unknown."""
        raise NotImplementedError


@dataclass(frozen=True)
class BallComplement(Region):
    """{|y| >= r}."""
    r: float

    def contains(self, y):
        return np.linalg.norm(np.atleast_2d(y), axis=1) >= self.r

    def negate(self):
        return self

    def far_field(self, R):
        return 1 if R >= self.r else None


@dataclass(frozen=True)
class Annulus(Region):
    """{r1 <= |y| <= r2}."""
    r1: float
    r2: float

    def contains(self, y):
        d = np.linalg.norm(np.atleast_2d(y), axis=1)
        return (d >= self.r1) & (d <= self.r2)

    def negate(self):
        return self

    def far_field(self, R):
        return 0 if R >= self.r2 else None


@dataclass(frozen=True)
class BoxRegion(Region):
    """Closed box {lo <= y <= hi}."""
    lo: tuple
    hi: tuple

    def contains(self, y):
        y = np.atleast_2d(y)
        return np.all((y >= np.asarray(self.lo)) & (y <= np.asarray(self.hi)), axis=1)

    def negate(self):
        return BoxRegion(tuple(-np.asarray(self.hi)), tuple(-np.asarray(self.lo)))

    def far_field(self, R):
        reach = np.linalg.norm(np.maximum(np.abs(self.lo), np.abs(self.hi)))
        return 0 if R >= reach else None


@dataclass(frozen=True)
class ShiftedComplement(Region):
    """{y : x + y not in Ω} for an open domain Ω."""
    domain: object
    x: tuple

    def contains(self, y):
        y = np.atleast_2d(y)
        return ~self.domain.contains(y + np.asarray(self.x, float))

    def negate(self):
        # -(Ω^c - x) = (-Ω)^c + x; only meaningful for symmetric checks on atoms
        raise NotImplementedError("negation of a shifted complement is not a supported region")

    def far_field(self, R):
        return 1 if self.domain.radius_about(self.x) <= R else None


# --------------------------------------------------------------------------- measures

class LevyMeasure:
    dim: int

    @property
    def levy_moment(self) -> float:
        raise NotImplementedError

    @property
    def total_mass(self) -> float:
        raise NotImplementedError

    @property
    def small_jump_integrable(self) -> bool:
        raise NotImplementedError

    @property
    def parts(self):
        return [self]

    def tail_mass(self, region: Region, return_error: bool = False):
        raise NotImplementedError

    def has_unbounded_support(self, R) -> bool:
        return self.tail_mass(BallComplement(R)) > 0

    def support_radius(self) -> float:
        raise NotImplementedError

    def truncate(self, delta):
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class AtomicMeasure(LevyMeasure):
    """Finite list of atoms plus an optional far-field remainder.

    The remainder carries mass ``tail`` spread symmetrically over
    ``{|y| > tail_radius}``; it is used for truncated infinite series.
    """

    points: np.ndarray
    weights: np.ndarray
    tail: float = 0.0
    tail_radius: float = math.inf
    added_mirrors: int = 0

    @property
    def dim(self):
        return self.points.shape[1]

    @property
    def levy_moment(self):
        d2 = np.sum(self.points ** 2, axis=1)
        return float(np.sum(self.weights * np.minimum(1.0, d2)) + self.tail)

    @property
    def total_mass(self):
        return float(np.sum(self.weights) + self.tail)

    @property
    def small_jump_integrable(self):
        return True

    def support_radius(self):
        if self.tail > 0:
            return math.inf
        return float(np.max(np.linalg.norm(self.points, axis=1))) if len(self.points) else 0.0

    def tail_mass(self, region, return_error=False):
        val = float(np.sum(self.weights[region.contains(self.points)]))
        if self.tail > 0:
            far = region.far_field(self.tail_radius)
            if far is None:
                raise ValueError("region splits the far-field remainder; increase the series truncation")
            val += far * self.tail
        return (val, 0.0) if return_error else val

    def truncate(self, delta):
        keep = np.linalg.norm(self.points, axis=1) > delta
        return AtomicMeasure(self.points[keep], self.weights[keep], self.tail, self.tail_radius)

    def to_spec(self):
        spec = {"type": "atomic", "atoms": [[*p.tolist(), float(w)] if self.dim > 1 else [float(p[0]), float(w)]
                                            for p, w in zip(self.points, self.weights)]}
        if self.tail:
            spec.update(tail=self.tail, tail_radius=self.tail_radius)
        return spec


@dataclass(frozen=True, eq=False)
class RadialMeasure(LevyMeasure):
    kernel: RadialKernel
    n: int

    @property
    def dim(self):
        return self.n

    # ---- radial integrals
    def V(self, r):
        return self.kernel.V(r, self.n)

    def _profile(self, r):
        """V(r) r^{n-1}: radial density of the measure per unit sphere area."""
        r = np.asarray(r, float)
        return self.V(r) * r ** (self.n - 1)

    def _quad(self, f, a, b, alg=None):
        """∫_a^b f with optional algebraic weight (r-a)^alg at the left end."""
        if b <= a:
            return 0.0, 0.0
        if alg is not None and a == 0.0 and math.isfinite(b):
            val, err = integrate.quad(f, a, b, weight="alg", wvar=(alg, 0.0),
                                      epsabs=0.0, epsrel=_QUAD_TOL, limit=200)
            return val, err
        pts = [p for p in self.kernel.breakpoints if a < p < b] if math.isfinite(b) else None
        val, err = integrate.quad(f, a, b, points=pts or None, epsabs=0.0, epsrel=_QUAD_TOL, limit=400)
        return val, err

    def _radial_integral(self, g, a, b):
        """∫_a^b g(r) V(r) r^{n-1} dr with the singular factor handled at r = 0."""
        k = self.kernel
        a, b = max(a, k.r_min), min(b, k.support)
        if b <= a:
            return 0.0, 0.0
        total, err = 0.0, 0.0
        pieces = [a] + [p for p in k.breakpoints if a < p < b] + [b]
        for lo, hi in zip(pieces[:-1], pieces[1:]):
            if lo == 0.0 and k.alpha is not None:
                # V r^{n-1} = coeff r^{-1-alpha} shape(r); g must vanish like r² here,
                # so r^{1-alpha} is the algebraic weight and g(r)/r² stays bounded
                def f(r):
                    rs = max(float(r), 1e-150)
                    return k.coeff * float(k.shape(np.asarray(rs))) * g(rs) / (rs * rs)
                v, e = self._quad(f, 0.0, hi, alg=1.0 - k.alpha)
            elif math.isinf(hi):
                def f(r):
                    return g(r) * self._profile(r)
                v, e = integrate.quad(f, lo, math.inf, epsabs=0.0, epsrel=_QUAD_TOL, limit=400)
            else:
                def f(r):
                    return g(r) * self._profile(r)
                v, e = self._quad(f, lo, hi)
            total += v
            err += e
        return total, err

    def shell_mass(self, a, b=math.inf):
        """ν({a <= |y| <= b}) with a quadrature error estimate."""
        k, S = self.kernel, sphere_area(self.n)
        if a <= 0.0 and k.r_min == 0.0 and self._infinite_near_origin():
            return math.inf, 0.0
        if k.kind == "fractional":
            lo = max(a, k.r_min)
            if b <= lo:
                return 0.0, 0.0
            val = k.coeff * (lo ** -k.alpha - (0.0 if math.isinf(b) else b ** -k.alpha)) / k.alpha
            return S * val, 0.0
        v, e = self._radial_integral(lambda r: np.ones_like(np.asarray(r, float)), a, b)
        return S * v, S * e

    def G(self, rho):
        """∫_rho^∞ V(r) r^{n-1} dr, vectorised over ``rho``; inf where rho <= 0 and mass is infinite."""
        rho = np.atleast_1d(np.asarray(rho, float))
        k = self.kernel
        if k.kind == "fractional":
            lo = np.maximum(rho, k.r_min)
            with np.errstate(divide="ignore"):
                return k.coeff * lo ** -k.alpha / k.alpha
        S = sphere_area(self.n)
        return np.array([self.shell_mass(max(float(p), 0.0))[0] / S for p in rho])

    @property
    def total_mass(self):
        if self._infinite_near_origin():
            return math.inf
        return self.shell_mass(0.0)[0]

    @property
    def levy_moment(self):
        k, S = self.kernel, sphere_area(self.n)
        if k.kind == "fractional" and k.r_min == 0:
            return S * k.coeff * (1 / (2 - k.alpha) + 1 / k.alpha)
        near, _ = self._radial_integral(lambda r: np.asarray(r, float) ** 2, 0.0, 1.0)
        far, _ = self._radial_integral(lambda r: np.ones_like(np.asarray(r, float)), 1.0, math.inf)
        return S * (near + far)

    @property
    def small_jump_integrable(self):
        k = self.kernel
        if k.r_min > 0:
            return True
        if k.alpha is not None:
            return k.alpha < 1
        if k.kind == "user":
            return _decade_ratio(self, lambda r: r, toward="origin") < 0.98
        return True

    def support_radius(self):
        return self.kernel.support

    def truncate(self, delta):
        return RadialMeasure(self.kernel.with_cutoff(delta), self.n)

    # ---- regions
    def tail_mass(self, region, return_error=False):
        val, err = self._region_mass(region)
        if val < 0:
            val = 0.0
        return (val, err) if return_error else val

    def _region_mass(self, region):
        if isinstance(region, BallComplement):
            return self.shell_mass(region.r)
        if isinstance(region, Annulus):
            return self.shell_mass(region.r1, region.r2)
        if isinstance(region, BoxRegion):
            return self._box_mass(np.asarray(region.lo, float), np.asarray(region.hi, float))
        if isinstance(region, ShiftedComplement):
            return self._shifted_complement_mass(region.domain, np.asarray(region.x, float).ravel())
        raise TypeError(f"unsupported region {region!r}")

    def _infinite_near_origin(self):
        k = self.kernel
        if k.r_min > 0:
            return False
        if k.alpha is not None:
            return True
        if k.kind == "user":
            return _decade_ratio(self, lambda r: np.ones_like(np.asarray(r, float)), "origin") >= 0.98
        return False

    def _box_mass(self, lo, hi):
        if np.all(lo <= 0) and np.all(hi >= 0) and self._infinite_near_origin():
            raise DivergenceError("region touches the origin and the measure has infinite mass there",
                                  regime="origin")
        if self.n == 1:
            a, b = float(lo[0]), float(hi[0])
            G = lambda t: float(self.G(t)[0])  # noqa: E731
            if a >= 0:
                return G(a) - G(b), 0.0
            if b <= 0:
                return G(-b) - G(-a), 0.0
            return 2 * G(0.0) - G(b) - G(-a), 0.0
        return self._polar_convex_mass(lambda th: _box_ray_interval(lo, hi, th),
                                       _box_corner_angles(lo, hi, np.zeros(2))), 0.0

    def _shifted_complement_mass(self, domain, x):
        inside = bool(domain.contains(x.reshape(1, -1))[0])
        if not inside:
            if self._infinite_near_origin():
                raise DivergenceError("shifted complement contains a neighbourhood of the origin",
                                      regime="origin")
            return self.total_mass - self._domain_mass(domain, x), 0.0
        if self.n == 1:
            far = domain.ray_exit(x, np.array([[1.0], [-1.0]]))
            return float(np.sum(self.G(far))), 0.0
        S_angles = _domain_kink_angles(domain, x)

        def integrand(th):
            dirs = np.column_stack([np.cos(th), np.sin(th)])
            return self.G(domain.ray_exit(x, dirs))

        return _angular_quadrature(integrand, S_angles), 0.0

    def _domain_mass(self, domain, x):
        """ν(Ω - x) for x outside Ω (finite-mass kernels only)."""
        lo, hi = (np.asarray(v, float) - x for v in domain.bbox)
        if self.n == 1:
            return self._box_mass(lo, hi)[0]
        # Ω - x is convex for the domains in use; integrate along rays from 0
        def ray_interval(th):
            d = np.column_stack([np.cos(th), np.sin(th)])
            tmax = float(np.linalg.norm(np.maximum(np.abs(lo), np.abs(hi)))) + 1.0
            ts = np.linspace(0, tmax, 2049)
            pts = x[None, None, :] + ts[None, :, None] * d[:, None, :]
            ins = domain.contains(pts.reshape(-1, 2)).reshape(len(th), -1)
            t_in = np.where(ins.any(1), ts[np.argmax(ins, 1)], np.inf)
            t_out = np.where(ins.any(1), ts[len(ts) - 1 - np.argmax(ins[:, ::-1], 1)], np.inf)
            return t_in, t_out
        return self._polar_convex_mass(ray_interval, np.linspace(0, 2 * np.pi, 33))

    def _polar_convex_mass(self, ray_interval, angles):
        def integrand(th):
            t_in, t_out = ray_interval(th)
            hit = np.isfinite(t_in) & (t_out > t_in)
            out = np.zeros_like(th)
            if hit.any():
                out[hit] = self.G(t_in[hit]) - self.G(t_out[hit])
            return out
        return _angular_quadrature(integrand, angles)

    def to_spec(self):
        k = self.kernel
        if k.kind == "fractional":
            spec = {"type": "fractional", "alpha": k.alpha}
            if k.params.get("standard"):
                spec["normalization"] = "standard"
            return spec
        if k.kind == "compact":
            spec = {"type": "compact", "r1": k.support, "profile": k.params["profile"], "coeff": k.coeff}
            if k.alpha is not None:
                spec["alpha"] = k.alpha
            return spec
        if k.kind == "tempered":
            return {"type": "tempered", "alpha": k.alpha, "rate": k.params["rate"], "coeff": k.coeff}
        raise ValueError("user profiles cannot be serialised")


@dataclass(frozen=True, eq=False)
class MixtureMeasure(LevyMeasure):
    components: tuple

    @property
    def dim(self):
        return self.components[0].dim

    @property
    def parts(self):
        return list(self.components)

    @property
    def levy_moment(self):
        return float(sum(p.levy_moment for p in self.components))

    @property
    def total_mass(self):
        return float(sum(p.total_mass for p in self.components))

    @property
    def small_jump_integrable(self):
        return all(p.small_jump_integrable for p in self.components)

    def support_radius(self):
        return max(p.support_radius() for p in self.components)

    def tail_mass(self, region, return_error=False):
        vals = [p.tail_mass(region, return_error=True) for p in self.components]
        v, e = sum(a for a, _ in vals), sum(b for _, b in vals)
        return (v, e) if return_error else v

    def truncate(self, delta):
        return MixtureMeasure(tuple(p.truncate(delta) for p in self.components))

    def to_spec(self):
        return {"type": "mixture", "parts": [p.to_spec() for p in self.components]}


# --------------------------------------------------------------------------- angular helpers

def _box_ray_interval(lo, hi, th):
    """Entry and exit parameters of rays from the origin through a closed box."""
    d = np.column_stack([np.cos(th), np.sin(th)])
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = lo[None, :] / d
        t2 = hi[None, :] / d
    tmin = np.where(d == 0, np.where((lo <= 0) & (hi >= 0), -np.inf, np.inf), np.minimum(t1, t2))
    tmax = np.where(d == 0, np.where((lo <= 0) & (hi >= 0), np.inf, -np.inf), np.maximum(t1, t2))
    t_in = np.maximum(np.max(tmin, axis=1), 0.0)
    t_out = np.min(tmax, axis=1)
    miss = t_out <= t_in
    return np.where(miss, np.inf, t_in), np.where(miss, np.inf, t_out)


def _box_corner_angles(lo, hi, x):
    cs = np.array([[lo[0], lo[1]], [lo[0], hi[1]], [hi[0], lo[1]], [hi[0], hi[1]]]) - x
    return np.mod(np.arctan2(cs[:, 1], cs[:, 0]), 2 * np.pi)


def _domain_kink_angles(domain, x):
    from .geometry import Box, Dilated, Disk

    if isinstance(domain, Disk):
        return np.array([0.0])
    if isinstance(domain, Box):
        lo, hi = domain.bbox
        return _box_corner_angles(lo, hi, x)
    if isinstance(domain, Dilated) and isinstance(domain.base, Box):
        lo, hi = domain.base.bbox
        e = domain.eps
        pts = []
        for cx, cy, sx, sy in ((lo[0], lo[1], -1, -1), (lo[0], hi[1], -1, 1),
                               (hi[0], lo[1], 1, -1), (hi[0], hi[1], 1, 1)):
            pts += [(cx + sx * e, cy), (cx, cy + sy * e)]
        pts = np.array(pts) - x
        return np.mod(np.arctan2(pts[:, 1], pts[:, 0]), 2 * np.pi)
    return np.linspace(0, 2 * np.pi, 64, endpoint=False)


_GL_X, _GL_W = np.polynomial.legendre.leggauss(24)


def _angular_quadrature(f, kinks):
    """∫_0^{2π} f(θ) dθ, composite Gauss–Legendre split at ``kinks``."""
    cuts = np.unique(np.concatenate([[0.0, 2 * np.pi], np.mod(np.asarray(kinks, float), 2 * np.pi)]))
    # refine each arc so that no arc exceeds π/8
    edges = [cuts[0]]
    for a, b in zip(cuts[:-1], cuts[1:]):
        m = max(1, math.ceil((b - a) / (np.pi / 8)))
        edges.extend(np.linspace(a, b, m + 1)[1:])
    edges = np.asarray(edges)
    a, b = edges[:-1], edges[1:]
    keep = b - a > 1e-15
    a, b = a[keep], b[keep]
    th = (0.5 * (b - a))[:, None] * _GL_X[None, :] + (0.5 * (a + b))[:, None]
    w = (0.5 * (b - a))[:, None] * _GL_W[None, :]
    return float(np.sum(w * f(th.ravel()).reshape(th.shape)))


# --------------------------------------------------------------------------- divergence tests

def _decade_ratio(measure, g, toward):
    """Ratio of successive decade contributions of ∫ g(r) V(r) r^{n-1} dr.

    A ratio approaching 1 (or above) means the integral does not converge.
    """
    f = lambda r: g(r) * measure._profile(r)  # noqa: E731
    ks = range(1, 7)
    if toward == "origin":
        inc = [integrate.quad(f, 10.0 ** -(k + 1), 10.0 ** -k, limit=200)[0] for k in ks]
    else:
        inc = [integrate.quad(f, 10.0 ** k, 10.0 ** (k + 1), limit=200)[0] for k in ks]
    inc = np.asarray(inc)
    if inc[-2] <= 0:
        return 0.0
    return float(inc[-1] / inc[-2])


# --------------------------------------------------------------------------- constructors

def make_atomic(atoms, tail: float = 0.0, tail_radius: float = math.inf) -> AtomicMeasure:
    """Atomic measure from ``(point, weight)`` pairs, adding missing mirror atoms."""
    if not atoms:
        raise ValueError("an atomic measure needs at least one atom")
    pts, wts = [], []
    for p, w in atoms:
        p = np.atleast_1d(np.asarray(p, float))
        if not w > 0:
            raise ValueError(f"atom weight must be positive, got {w}")
        if np.all(p == 0):
            raise ValueError("a Lévy measure cannot charge the origin")
        pts.append(p)
        wts.append(float(w))
    dims = {len(p) for p in pts}
    if len(dims) != 1:
        raise ValueError("atoms have inconsistent dimensions")
    merged: dict = {}
    for p, w in zip(pts, wts):
        key = tuple(p)
        merged[key] = merged.get(key, 0.0) + w
    added = 0
    for key, w in list(merged.items()):
        mirror = tuple(-c for c in key)
        if mirror not in merged:
            merged[mirror] = w
            added += 1
        elif not math.isclose(merged[mirror], w, rel_tol=1e-12):
            raise ValueError(f"atoms at {key} and {mirror} carry different weights")
    if added:
        log.info("symmetrised atomic measure: added %d mirror atoms", added)
    if tail < 0:
        raise ValueError("tail mass must be nonnegative")
    keys = sorted(merged)
    return AtomicMeasure(np.array(keys, float), np.array([merged[k] for k in keys]),
                         float(tail), float(tail_radius), added)


def make_lattice_series(power: float = 2.0, K: int = 200, spacing: float = 1.0) -> AtomicMeasure:
    """Σ_{k≠0} δ_{k·spacing} / |k|^power in one dimension, stored up to |k| <= K.

    The remainder 2ζ(power, K+1) is kept as far-field mass beyond radius K·spacing.
    """
    if power <= 1:
        raise ValueError("the lattice series needs power > 1 to have finite mass")
    k = np.arange(1, K + 1, dtype=float)
    atoms = [((s * kk * spacing,), kk ** -power) for kk in k for s in (1, -1)]
    tail = 2.0 * float(special.zeta(power, K + 1))
    return make_atomic(atoms, tail=tail, tail_radius=K * spacing)


def make_radial(kernel: RadialKernel, n: int) -> RadialMeasure:
    """Radial measure after checking that ∫(1∧|y|²)dν is finite."""
    if n not in (1, 2):
        raise ValueError("only dimensions 1 and 2 are supported")
    m = RadialMeasure(kernel, int(n))
    if kernel.kind == "user":
        if kernel.alpha is None and _decade_ratio(m, lambda r: np.asarray(r, float) ** 2, "origin") >= 0.98:
            raise DivergenceError("∫_{|y|<1}|y|² dν diverges", regime="origin")
        if math.isinf(kernel.support) and _decade_ratio(m, lambda r: np.ones_like(np.asarray(r, float)),
                                                        "infinity") >= 0.98:
            raise DivergenceError("ν(|y| > 1) is infinite", regime="infinity")
    moment = m.levy_moment
    if not math.isfinite(moment):
        raise DivergenceError("Lévy moment is not finite")
    return m


def make_mixture(parts) -> LevyMeasure:
    flat = []
    for p in parts:
        flat.extend(p.parts if isinstance(p, MixtureMeasure) else [p])
    if not flat:
        raise ValueError("empty mixture")
    if len({p.dim for p in flat}) != 1:
        raise ValueError("mixture parts have different dimensions")
    return flat[0] if len(flat) == 1 else MixtureMeasure(tuple(flat))


def tail_mass(measure: LevyMeasure, region: Region, return_error: bool = False):
    return measure.tail_mass(region, return_error=return_error)


def truncate_small_jumps(measure: LevyMeasure, delta: float) -> LevyMeasure:
    """Restriction of ν to {|y| > δ}; δ = 0 is allowed only for finite measures."""
    if delta < 0:
        raise ValueError("cutoff must be nonnegative")
    if delta == 0:
        if not math.isfinite(measure.total_mass):
            raise DivergenceError("measure has infinite total mass; a positive cutoff is required",
                                  regime="origin")
        return measure
    return measure.truncate(delta)


def measure_from_spec(spec: dict, dim: int) -> LevyMeasure:
    """Build a measure from its JSON form (see README for the accepted keys)."""
    kind = spec.get("type")
    if kind == "atomic":
        atoms = []
        for entry in spec["atoms"]:
            entry = list(entry)
            if len(entry) == 2 and not isinstance(entry[0], (list, tuple)):
                p, w = entry[0], entry[1]
            elif len(entry) == 2:
                p, w = entry
            else:
                p, w = entry[:-1], entry[-1]
            atoms.append((np.atleast_1d(np.asarray(p, float)), float(w)))
        m = make_atomic(atoms, tail=float(spec.get("tail", 0.0)),
                        tail_radius=float(spec.get("tail_radius", math.inf)))
        if m.dim != dim:
            raise ValueError(f"atoms live in dimension {m.dim}, domain in {dim}")
        return m
    if kind == "integer-lattice":
        if dim != 1:
            raise ValueError("integer-lattice series is one-dimensional")
        return make_lattice_series(float(spec.get("power", 2.0)), int(spec.get("K", 200)),
                                   float(spec.get("spacing", 1.0)))
    if kind == "fractional":
        standard = spec.get("normalization", "inverse") == "standard"
        return make_radial(fractional_kernel(float(spec["alpha"]), dim, standard), dim)
    if kind == "compact":
        alpha = spec.get("alpha")
        return make_radial(compact_kernel(float(spec["r1"]), spec.get("profile", "quadratic-cap"),
                                          float(spec.get("coeff", 1.0)),
                                          None if alpha is None else float(alpha)), dim)
    if kind == "tempered":
        coeff = spec.get("coeff")
        return make_radial(tempered_kernel(float(spec["alpha"]), float(spec["rate"]), dim,
                                           None if coeff is None else float(coeff)), dim)
    if kind == "mixture":
        return make_mixture([measure_from_spec(p, dim) for p in spec["parts"]])
    raise ValueError(f"unknown measure type {kind!r}")
