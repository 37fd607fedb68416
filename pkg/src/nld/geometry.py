"""Bounded open sets, their dilations, translate chains and lattice grids.

Only dimensions 1 and 2 are supported.  Every domain is open: a point on the
boundary is *not* contained in it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .errors import AdmissibilityError, OutOfTubeError

__all__ = [
    "Domain", "Interval", "Box", "Disk", "PolarGraph", "Dilated",
    "Grid", "dilate", "translate_chain_length", "nearest_boundary_point",
    "make_grid", "domain_from_spec",
]


def _as_points(x, dim):
    x = np.asarray(x, dtype=float)
    if dim == 1 and x.ndim <= 1:
        return x.reshape(-1, 1)
    return np.atleast_2d(x)


class Domain:
    """Base class; subclasses provide ``sdf`` and ``bbox``."""

    dim: int
    convex = True

    def sdf(self, x):
        """Signed distance (negative inside) for points of shape (m, dim)."""
        raise NotImplementedError

    def contains(self, x):
        return self.sdf(_as_points(x, self.dim)) < 0.0

    @property
    def bbox(self):
        raise NotImplementedError

    @property
    def diameter(self):
        lo, hi = self.bbox
        return float(np.linalg.norm(np.asarray(hi) - np.asarray(lo)))

    @property
    def center(self):
        lo, hi = self.bbox
        return 0.5 * (np.asarray(lo, float) + np.asarray(hi, float))

    def radius_about(self, c):
        """Upper bound for sup |x - c| over the domain."""
        lo, hi = (np.asarray(v, float) for v in self.bbox)
        corners = np.array(np.meshgrid(*zip(lo, hi))).reshape(self.dim, -1).T
        return float(np.max(np.linalg.norm(corners - np.asarray(c, float), axis=1)))

    def ray_exit(self, x, dirs):
        """Distance from an interior point ``x`` to the boundary along unit ``dirs``.

        Generic bisection on the signed distance; exact for convex sets.
        """
        x = np.asarray(x, float).reshape(1, self.dim)
        dirs = _as_points(dirs, self.dim)
        lo = np.zeros(len(dirs))
        hi = np.full(len(dirs), 2.0 * self.diameter + 1.0)
        for _ in range(64):
            mid = 0.5 * (lo + hi)
            inside = self.sdf(x + mid[:, None] * dirs) < 0
            lo = np.where(inside, mid, lo)
            hi = np.where(inside, hi, mid)
        return 0.5 * (lo + hi)

    def sample_interior(self, m, rng):
        lo, hi = (np.asarray(v, float) for v in self.bbox)
        out = []
        while sum(len(o) for o in out) < m:
            pts = rng.uniform(lo, hi, size=(4 * m, self.dim))
            out.append(pts[self.contains(pts)])
        return np.concatenate(out)[:m]

    def boundary_samples(self, m):
        """Boundary points with outward unit normals, ``m`` of them (roughly)."""
        raise NotImplementedError

    def to_spec(self):
        raise NotImplementedError


@dataclass(frozen=True)
class Interval(Domain):
    a: float
    b: float
    dim: int = field(default=1, init=False)

    def __post_init__(self):
        if not self.b > self.a:
            raise ValueError(f"empty interval ({self.a}, {self.b})")

    def sdf(self, x):
        x = _as_points(x, 1)[:, 0]
        return np.maximum(self.a - x, x - self.b)

    @property
    def bbox(self):
        return np.array([self.a]), np.array([self.b])

    @property
    def diameter(self):
        return self.b - self.a

    def ray_exit(self, x, dirs):
        x = float(np.asarray(x).ravel()[0])
        d = _as_points(dirs, 1)[:, 0]
        return np.where(d > 0, self.b - x, x - self.a)

    def boundary_samples(self, m=2):
        return np.array([[self.a], [self.b]]), np.array([[-1.0], [1.0]])

    # C^{1,1} data: interior balls up to half the length, boundary is two points.
    def c11_params(self):
        half = 0.5 * (self.b - self.a)
        return half, 0.0, half

    def nearest_boundary(self, x):
        x = _as_points(x, 1)[:, 0]
        left = np.abs(x - self.a) <= np.abs(x - self.b)
        p = np.where(left, self.a, self.b)
        return p[:, None], np.abs(x - p), (x > self.a) & (x < self.b)

    def to_spec(self):
        return {"type": "interval", "a": self.a, "b": self.b}


@dataclass(frozen=True)
class Box(Domain):
    lo: tuple
    hi: tuple

    def __post_init__(self):
        lo, hi = np.asarray(self.lo, float), np.asarray(self.hi, float)
        if lo.shape != hi.shape or np.any(hi <= lo):
            raise ValueError("box needs lo < hi on every axis")
        object.__setattr__(self, "lo", tuple(lo))
        object.__setattr__(self, "hi", tuple(hi))

    @property
    def dim(self):
        return len(self.lo)

    def sdf(self, x):
        x = _as_points(x, self.dim)
        lo, hi = np.asarray(self.lo), np.asarray(self.hi)
        c, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
        q = np.abs(x - c) - half
        outside = np.linalg.norm(np.maximum(q, 0.0), axis=1)
        inside = np.minimum(np.max(q, axis=1), 0.0)
        return outside + inside

    @property
    def bbox(self):
        return np.asarray(self.lo), np.asarray(self.hi)

    def ray_exit(self, x, dirs):
        x = np.asarray(x, float).reshape(1, self.dim)
        d = _as_points(dirs, self.dim)
        lo, hi = np.asarray(self.lo), np.asarray(self.hi)
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(d > 0, (hi - x) / d, np.where(d < 0, (lo - x) / d, np.inf))
        return np.min(t, axis=1)

    def boundary_samples(self, m=64):
        lo, hi = np.asarray(self.lo), np.asarray(self.hi)
        if self.dim == 1:
            return np.array([lo, hi]), np.array([[-1.0], [1.0]])
        k = max(2, m // 4)
        s = (np.arange(k) + 0.5) / k
        pts, nrm = [], []
        for axis in range(2):
            other = 1 - axis
            for side, sign in ((lo, -1.0), (hi, 1.0)):
                p = np.empty((k, 2))
                p[:, axis] = side[axis]
                p[:, other] = lo[other] + s * (hi[other] - lo[other])
                n = np.zeros((k, 2))
                n[:, axis] = sign
                pts.append(p)
                nrm.append(n)
        return np.concatenate(pts), np.concatenate(nrm)

    def to_spec(self):
        return {"type": "box", "lo": list(self.lo), "hi": list(self.hi)}


@dataclass(frozen=True)
class Disk(Domain):
    center_: tuple = (0.0, 0.0)
    r: float = 1.0
    dim: int = field(default=2, init=False)

    def __post_init__(self):
        if not self.r > 0:
            raise ValueError("disk radius must be positive")
        object.__setattr__(self, "center_", tuple(float(c) for c in self.center_))

    def sdf(self, x):
        x = _as_points(x, 2)
        return np.linalg.norm(x - np.asarray(self.center_), axis=1) - self.r

    @property
    def bbox(self):
        c = np.asarray(self.center_)
        return c - self.r, c + self.r

    @property
    def diameter(self):
        return 2.0 * self.r

    def radius_about(self, c):
        return float(np.linalg.norm(np.asarray(c, float) - self.center_) + self.r)

    def ray_exit(self, x, dirs):
        q = np.asarray(x, float).ravel() - np.asarray(self.center_)
        d = _as_points(dirs, 2)
        b = d @ q
        return -b + np.sqrt(b * b - (q @ q - self.r ** 2))

    def boundary_samples(self, m=64):
        th = 2 * np.pi * (np.arange(m) + 0.5) / m
        n = np.column_stack([np.cos(th), np.sin(th)])
        return np.asarray(self.center_) + self.r * n, n

    def c11_params(self):
        # boundary is locally the graph s -> r - sqrt(r^2 - s^2); chart radius r/2
        delta = 0.5 * self.r
        lam = self.r ** 2 / (self.r ** 2 - delta ** 2) ** 1.5
        return self.r, lam, delta

    def nearest_boundary(self, x):
        x = _as_points(x, 2)
        q = x - np.asarray(self.center_)
        rho = np.linalg.norm(q, axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            u = q / rho[:, None]
        p = np.asarray(self.center_) + self.r * u
        return p, np.abs(rho - self.r), rho < self.r

    def to_spec(self):
        return {"type": "disk", "center": list(self.center_), "r": self.r}


@dataclass(frozen=True)
class PolarGraph(Domain):
    """Star-shaped C^{1,1} domain bounded by rho(t) = r0 (1 + amplitude cos(k t))."""

    center_: tuple = (0.0, 0.0)
    r0: float = 1.0
    amplitude: float = 0.1
    k: int = 3
    dim: int = field(default=2, init=False)
    convex = False

    def __post_init__(self):
        if not (self.r0 > 0 and 0 <= self.amplitude < 1):
            raise ValueError("polar graph needs r0 > 0 and 0 <= amplitude < 1")
        object.__setattr__(self, "center_", tuple(float(c) for c in self.center_))

    def rho(self, t, der=0):
        a, k, r0 = self.amplitude, self.k, self.r0
        if der == 0:
            return r0 * (1 + a * np.cos(k * t))
        if der == 1:
            return -r0 * a * k * np.sin(k * t)
        return -r0 * a * k * k * np.cos(k * t)

    def curve(self, t, der=0):
        t = np.asarray(t, float)
        c, s = np.cos(t), np.sin(t)
        r, r1, r2 = self.rho(t), self.rho(t, 1), self.rho(t, 2)
        if der == 0:
            pts = np.stack([r * c, r * s], axis=-1) + np.asarray(self.center_)
            return pts
        if der == 1:
            return np.stack([r1 * c - r * s, r1 * s + r * c], axis=-1)
        return np.stack([r2 * c - 2 * r1 * s - r * c, r2 * s + 2 * r1 * c - r * s], axis=-1)

    def contains(self, x):
        q = _as_points(x, 2) - np.asarray(self.center_)
        return np.linalg.norm(q, axis=1) < self.rho(np.arctan2(q[:, 1], q[:, 0]))

    def sdf(self, x):
        x = _as_points(x, 2)
        _, d, inside = self.nearest_boundary(x, check_tube=False)
        return np.where(inside, -d, d)

    @property
    def bbox(self):
        rmax = self.r0 * (1 + self.amplitude)
        c = np.asarray(self.center_)
        return c - rmax, c + rmax

    def radius_about(self, c):
        return float(np.linalg.norm(np.asarray(c, float) - self.center_) + self.r0 * (1 + self.amplitude))

    def ray_exit(self, x, dirs):
        return Domain.ray_exit(self, x, dirs)

    def curvature_max(self):
        t = np.linspace(0, 2 * np.pi, 4096, endpoint=False)
        d1, d2 = self.curve(t, 1), self.curve(t, 2)
        num = np.abs(d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
        return float(np.max(num / np.linalg.norm(d1, axis=1) ** 3))

    def c11_params(self):
        kmax = self.curvature_max()
        r = 1.0 / kmax
        delta = 0.5 * r
        lam = kmax / (1 - (delta * kmax) ** 2) ** 1.5
        return r, lam, delta

    def boundary_samples(self, m=64):
        t = 2 * np.pi * (np.arange(m) + 0.5) / m
        p, d1 = self.curve(t), self.curve(t, 1)
        n = np.column_stack([d1[:, 1], -d1[:, 0]])
        return p, n / np.linalg.norm(n, axis=1)[:, None]

    def nearest_boundary(self, x, check_tube=True):
        x = _as_points(x, 2)
        coarse = np.linspace(0, 2 * np.pi, 720, endpoint=False)
        cpts = self.curve(coarse)
        d2 = ((x[:, None, :] - cpts[None, :, :]) ** 2).sum(axis=2)
        t = coarse[np.argmin(d2, axis=1)]
        for _ in range(30):
            g, g1, g2 = self.curve(t), self.curve(t, 1), self.curve(t, 2)
            diff = g - x
            f = (diff * g1).sum(axis=1)
            fp = (g1 * g1).sum(axis=1) + (diff * g2).sum(axis=1)
            step = f / np.where(np.abs(fp) > 1e-300, fp, 1.0)
            t = t - step
            if np.max(np.abs(step)) < 1e-15:
                break
        p = self.curve(t)
        return p, np.linalg.norm(x - p, axis=1), self.contains(x)

    def to_spec(self):
        return {"type": "c11", "boundary": "polar-graph", "center": list(self.center_),
                "r0": self.r0, "amplitude": self.amplitude, "k": self.k}


@dataclass(frozen=True)
class Dilated(Domain):
    """Open eps-neighbourhood of a base domain (generic fallback)."""

    base: Domain
    eps: float

    @property
    def dim(self):
        return self.base.dim

    @property
    def convex(self):
        return self.base.convex

    def sdf(self, x):
        return self.base.sdf(x) - self.eps

    @property
    def bbox(self):
        lo, hi = self.base.bbox
        return np.asarray(lo) - self.eps, np.asarray(hi) + self.eps

    def boundary_samples(self, m=64):
        p, n = self.base.boundary_samples(m)
        return p + self.eps * n, n

    def to_spec(self):
        return {"type": "dilated", "base": self.base.to_spec(), "eps": self.eps}


def dilate(domain: Domain, eps: float) -> Domain:
    """Open eps-neighbourhood {x : dist(x, domain) < eps}; ``eps == 0`` is the identity."""
    if eps < 0:
        raise ValueError("dilation radius must be nonnegative")
    if eps == 0:
        return domain
    if isinstance(domain, Interval):
        return Interval(domain.a - eps, domain.b + eps)
    if isinstance(domain, Disk):
        return Disk(domain.center_, domain.r + eps)
    if isinstance(domain, Dilated):
        return Dilated(domain.base, domain.eps + eps)
    return Dilated(domain, eps)


def _shifts_intersect(domain, v):
    """Whether domain and domain + v intersect (convex domains)."""
    v = np.asarray(v, float).ravel()
    if isinstance(domain, Interval):
        return abs(v[0]) < domain.b - domain.a
    if isinstance(domain, Box):
        return bool(np.all(np.abs(v) < np.asarray(domain.hi) - np.asarray(domain.lo)))
    if isinstance(domain, Disk):
        return float(np.linalg.norm(v)) < 2 * domain.r
    if isinstance(domain, Dilated) and isinstance(domain.base, Box):
        lo, hi = np.asarray(domain.base.lo), np.asarray(domain.base.hi)
        gap = np.maximum(np.abs(v) - (hi - lo), 0.0)
        return float(np.linalg.norm(gap)) < 2 * domain.eps
    z0 = domain.center + 0.5 * v

    def worst(z):
        z = z.reshape(1, -1)
        return max(domain.sdf(z)[0], domain.sdf(z - v)[0])

    res = minimize(worst, z0, method="Nelder-Mead", options={"xatol": 1e-12, "fatol": 1e-14})
    return res.fun < 0


def translate_chain_length(domain: Domain, x0) -> int:
    """Least n with domain ∩ (domain + x0) ∩ ... ∩ (domain + n x0) empty.

    For convex sets the chain intersection equals domain ∩ (domain + n x0), so
    the count reduces to a single disjointness test per n.
    """
    x0 = np.asarray(x0, float).ravel()
    norm = float(np.linalg.norm(x0))
    if norm == 0:
        raise ValueError("shift must be nonzero")
    bound = math.ceil(domain.diameter / norm) + 1
    if domain.convex:
        for n in range(1, bound + 1):
            if not _shifts_intersect(domain, n * x0):
                return n
        return bound
    # brute force for non-convex sets on a sample cloud
    rng = np.random.default_rng(0)
    pts = domain.sample_interior(20000, rng)
    alive = np.ones(len(pts), bool)
    for n in range(1, bound + 1):
        alive &= domain.contains(pts - n * x0)
        if not alive.any():
            return n
    return bound


def nearest_boundary_point(domain: Domain, x):
    """Nearest boundary point, distance and inside flag for a point in the tube.

    Raises ``OutOfTubeError`` when ``dist(x, ∂Ω) >= r ∧ 1/(6λ) ∧ δ/3``.
    """
    p, d, inside = domain.nearest_boundary(x)
    eps = tube_width(domain)
    if np.any(d >= eps):
        raise OutOfTubeError(f"distance {float(np.max(d)):.4g} to the boundary exceeds tube width {eps:.4g}")
    if np.ndim(x) <= 1 and (domain.dim > 1 or np.ndim(x) == 0):
        return p[0], float(d[0]), bool(inside[0])
    return p, d, inside


def tube_width(domain: Domain) -> float:
    r, lam, delta = domain.c11_params()
    inv = 1.0 / (6.0 * lam) if lam > 0 else math.inf
    return min(r, inv, delta / 3.0)


@dataclass(eq=False)
class Grid:
    """Axis-aligned lattice over the bounding box of Ω plus a halo.

    P0 degrees of freedom are cells (coordinate = cell centre), P1 degrees of
    freedom are nodes of tensor-product hat functions.  ``idx`` holds integer
    lattice indices of every degree of freedom in C order.
    """

    domain: Domain
    h: float
    R_trunc: float
    basis: str
    origin: np.ndarray
    shape: tuple
    idx: np.ndarray
    coords: np.ndarray
    interior: np.ndarray

    @property
    def dim(self):
        return self.domain.dim

    @property
    def halo(self):
        return ~self.interior

    @property
    def size(self):
        return len(self.coords)

    @property
    def n_interior(self):
        return int(self.interior.sum())

    def restrict_mask(self, subdomain: Domain):
        """Interior degrees of freedom whose coordinate lies in ``subdomain``."""
        return self.interior & subdomain.contains(self.coords)

    def same_as(self, other):
        return (other is self) or (
            self.basis == other.basis and self.h == other.h and self.shape == other.shape
            and np.allclose(self.origin, other.origin))


def make_grid(domain: Domain, h: float, R_trunc: float, basis: str = "P0", measure=None) -> Grid:
    """Uniform lattice covering Ω and its R_trunc-halo.

    With ``measure`` given, P0 is rejected for kernels whose indicator
    functions have infinite energy.
    """
    if h <= 0 or R_trunc < 0:
        raise ValueError("need h > 0 and R_trunc >= 0")
    basis = basis.upper()
    if basis not in ("P0", "P1"):
        raise ValueError(f"unknown basis {basis!r}")
    if basis == "P0" and measure is not None:
        if not (measure.small_jump_integrable or math.isfinite(measure.total_mass)):
            raise AdmissibilityError(
                "P0 basis is inadmissible: indicator functions have infinite energy for this "
                "measure (small jumps not integrable); use basis P1")
    lo, hi = (np.asarray(v, float) for v in domain.bbox)
    m = math.ceil(R_trunc / h - 1e-9)
    cells = np.array([math.ceil((hi[d] - lo[d]) / h - 1e-9) for d in range(domain.dim)])
    counts = cells + 2 * m + (1 if basis == "P1" else 0)
    origin = lo - m * h
    axes = [np.arange(c) for c in counts]
    idx = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, domain.dim)
    shift = 0.5 if basis == "P0" else 0.0
    coords = origin + (idx + shift) * h
    interior = domain.contains(coords)
    return Grid(domain, float(h), float(R_trunc), basis, origin, tuple(int(c) for c in counts),
                idx, coords, interior)


def domain_from_spec(spec: dict) -> Domain:
    kind = spec.get("type")
    if kind == "interval":
        return Interval(float(spec["a"]), float(spec["b"]))
    if kind == "box":
        return Box(tuple(spec["lo"]), tuple(spec["hi"]))
    if kind == "disk":
        return Disk(tuple(spec.get("center", (0.0, 0.0))), float(spec["r"]))
    if kind == "c11":
        boundary = spec.get("boundary", "disk")
        center = tuple(spec.get("center", (0.0, 0.0)))
        if boundary == "disk":
            return Disk(center, float(spec["r"]))
        if boundary == "polar-graph":
            return PolarGraph(center, float(spec.get("r0", 1.0)), float(spec.get("amplitude", 0.1)),
                              int(spec.get("k", 3)))
        raise ValueError(f"unknown boundary {boundary!r}")
    if kind == "dilated":
        return dilate(domain_from_spec(spec["base"]), float(spec["eps"]))
    raise ValueError(f"unknown domain type {kind!r}")
