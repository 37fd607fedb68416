"""Boundary reflection for C^{1,1} domains and the reflection extension operator.

The reflection through the nearest boundary point, T(x) = 2p(x) - x, swaps the
inside and outside of a tubular neighbourhood of ∂Ω.  A function given on Ωᶜ is
extended into Ω by g(Tx)φ(x), where the cutoff φ drops from 1 on ∂Ω to 0 at the
inner edge of the tube.  Everything here is a finite, sampled check: norms are
computed on a truncated grid and divergence shows up as growth under refinement.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.spatial import cKDTree

from .errors import AdmissibilityError, DivergenceError, OutOfTubeError
from .form import FormMatrix, GridFunction, assemble, l2_sq, norm
from .geometry import Disk, Domain, Grid, Interval, make_grid, tube_width
from .levy import RadialKernel, RadialMeasure, make_radial, user_kernel
from .principles import _smoothstep

__all__ = [
    "ReflectionMap", "LipschitzEstimate", "ScalingCheck", "Cutoff", "ExtensionResult",
    "reflect", "sample_tube", "lipschitz_probe", "measure_distortion_probe", "kernel_scaling_check",
    "build_cutoff", "extend", "zero_extension_study",
]


@dataclass
class ReflectionMap:
    domain: Domain
    eps: float = field(init=False)

    def __post_init__(self):
        self.eps = tube_width(self.domain)

    def nearest(self, x):
        """(p, d, inside) for points of shape (m, dim) without a tube check."""
        x = np.asarray(x, float).reshape(-1, self.domain.dim)
        return self.domain.nearest_boundary(x)

    def in_tube(self, x):
        _, d, _ = self.nearest(x)
        return d < self.eps

    def __call__(self, x):
        return reflect(self, x)

    def jacobian_det(self, x, step=None):
        """|det DT| at tube points; closed forms for intervals and disks."""
        x = np.asarray(x, float).reshape(-1, self.domain.dim)
        dom = self.domain
        if isinstance(dom, Interval):
            return np.ones(len(x))
        if isinstance(dom, Disk):
            rho = np.linalg.norm(x - np.asarray(dom.center_), axis=1)
            return (2 * dom.r - rho) / rho
        step = step or 1e-6 * self.eps
        cols = []
        for k in range(dom.dim):
            e = np.zeros(dom.dim)
            e[k] = step
            cols.append((self._T(x + e) - self._T(x - e)) / (2 * step))
        J = np.stack(cols, axis=-1)
        return np.abs(np.linalg.det(J))

    def _T(self, x):
        p, _, _ = self.nearest(x)
        return 2 * p - x


def reflect(rmap: ReflectionMap, x):
    """T(x) = 2p(x) - x; boundary points are fixed.

    Accepts one point or an array of shape (m, dim); raises ``OutOfTubeError``
    outside the tube dist(x, ∂Ω) < ε*.
    """
    dim = rmap.domain.dim
    arr = np.asarray(x, float)
    single = arr.ndim == 0 or (arr.ndim == 1 and (dim > 1 or arr.size == 1) and arr.size == dim)
    pts = arr.reshape(-1, dim)
    p, d, _ = rmap.nearest(pts)
    if np.any(d >= rmap.eps):
        raise OutOfTubeError(f"distance {float(np.max(d)):.4g} to the boundary exceeds "
                             f"tube width {rmap.eps:.4g}")
    out = np.where((d > 0)[:, None], 2 * p - pts, pts)
    if single:
        return out[0] if dim > 1 else float(out[0, 0])
    return out


def sample_tube(rmap: ReflectionMap, m: int, rng, shrink: float = 0.999):
    """Uniform points of {0 < dist(x, ∂Ω) < shrink·ε*} by rejection from the padded box."""
    dom = rmap.domain
    lo, hi = (np.asarray(v, float) for v in dom.bbox)
    pad = rmap.eps
    chunks, have = [], 0
    while have < m:
        pts = rng.uniform(lo - pad, hi + pad, size=(max(4 * m, 256), dom.dim))
        _, d, _ = rmap.nearest(pts)
        keep = pts[(d < shrink * rmap.eps) & (d > 0)]
        chunks.append(keep)
        have += len(keep)
    return np.concatenate(chunks)[:m]


# ---------------------------------------------------------------- bi-Lipschitz probe

@dataclass
class LipschitzEstimate:
    c_low: float     # max |x - y| / |Tx - Ty|
    c_high: float    # max |Tx - Ty| / |x - y|
    alpha_local: float
    n_pairs: int

    @property
    def alpha_hat(self):
        return max(self.c_low, self.c_high, 1.0)

    def __iter__(self):
        return iter((self.c_low, self.c_high))

    def to_json(self):
        return {"c_low": self.c_low, "c_high": self.c_high, "alpha_hat": self.alpha_hat,
                "alpha_local": self.alpha_local, "n_pairs": self.n_pairs}


def lipschitz_probe(rmap: ReflectionMap, n_pairs: int = 1000, seed: int = 0) -> LipschitzEstimate:
    """Empirical bi-Lipschitz constants of T over sampled tube pairs.

    Half the pairs are independent tube points (these include pairs near far
    apart parts of the boundary), half are close pairs at log-uniform separation.
    ``alpha_local`` only uses pairs whose nearest boundary points lie within δ
    of each other, the regime where T is locally a reflection in one chart.
    """
    rng = np.random.default_rng(seed)
    dim = rmap.domain.dim
    n_far = n_pairs // 2
    x = sample_tube(rmap, n_pairs, rng)
    y_far = sample_tube(rmap, n_far, rng)
    n_near = n_pairs - n_far
    xs = x[n_far:]
    y_near = np.empty_like(xs)
    pending = np.arange(n_near)
    for _ in range(200):
        if not len(pending):
            break
        dirs = rng.normal(size=(len(pending), dim))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        sep = rmap.eps * 10.0 ** rng.uniform(-4, -0.5, size=len(pending))
        cand = xs[pending] + sep[:, None] * dirs
        _, d, _ = rmap.nearest(cand)
        ok = (d < rmap.eps) & (d > 0)
        y_near[pending[ok]] = cand[ok]
        pending = pending[~ok]
    keep = np.setdiff1d(np.arange(n_near), pending)
    X = np.concatenate([x[:n_far], xs[keep]])
    Y = np.concatenate([y_far, y_near[keep]])
    dxy = np.linalg.norm(X - Y, axis=1)
    good = dxy > 0
    X, Y, dxy = X[good], Y[good], dxy[good]
    TX, TY = reflect(rmap, X), reflect(rmap, Y)
    dT = np.linalg.norm(np.reshape(TX, X.shape) - np.reshape(TY, Y.shape), axis=1)
    r = dT / dxy
    _, _, delta = rmap.domain.c11_params()
    px, _, _ = rmap.nearest(X)
    py, _, _ = rmap.nearest(Y)
    local = np.linalg.norm(px - py, axis=1) < delta
    if local.any():
        rl = r[local]
        a_loc = float(max(np.max(rl), np.max(1 / rl)))
    else:
        a_loc = math.nan
    return LipschitzEstimate(float(np.max(1 / r)), float(np.max(r)), a_loc, int(len(r)))


# ---------------------------------------------------------------- volume distortion

def measure_distortion_probe(rmap: ReflectionMap, n_cells: int = 64, seed: int = 0,
                             boxes=None, n_mc: int = 512) -> dict:
    """Largest ratio |T[K]|/|K| or |K|/|T[K]| over small boxes K inside the tube.

    |T[K]| is the Monte Carlo mean of |det DT| over K times |K|.  Boxes of zero
    volume are skipped rather than producing 0/0.
    """
    rng = np.random.default_rng(seed)
    dim = rmap.domain.dim
    if boxes is None:
        side = 0.25 * rmap.eps
        centers = sample_tube(rmap, n_cells, rng, shrink=0.5)
        boxes = [(c - side / 2, c + side / 2) for c in centers]
    worst, ratios, skipped = 1.0, [], 0
    for lo, hi in boxes:
        lo, hi = np.atleast_1d(np.asarray(lo, float)), np.atleast_1d(np.asarray(hi, float))
        if np.prod(hi - lo) <= 0:
            skipped += 1
            continue
        pts = rng.uniform(lo, hi, size=(n_mc, dim))
        if not np.all(rmap.in_tube(pts)):
            skipped += 1
            continue
        ratio = float(np.mean(rmap.jacobian_det(pts)))
        ratios.append(ratio)
        worst = max(worst, ratio, 1.0 / ratio)
    return {"C_prime": worst, "ratios": ratios, "skipped": skipped}


# ---------------------------------------------------------------- kernel scaling

@dataclass
class ScalingCheck:
    C_alpha: float
    passed: bool
    beta_range: tuple
    worst_t: float
    worst_beta: float

    def to_json(self):
        return dict(self.__dict__)


def kernel_scaling_check(kernel: RadialKernel, alpha_hat: float, n_samples: int = 2000,
                         n: int = 1, cap: float = 1e3, seed: int = 0) -> ScalingCheck:
    """sup V(βt)/V(t) over sampled t and β ∈ [α̂⁻¹ ∧ ⅓, α̂].

    A ratio with V(t) = 0 < V(βt) is infinite; the check fails when the
    supremum exceeds ``cap``.
    """
    rng = np.random.default_rng(seed)
    a = max(float(alpha_hat), 1.0)
    b_lo, b_hi = min(1.0 / a, 1.0 / 3.0), a
    betas = np.unique(np.concatenate([np.linspace(b_lo, b_hi, 33), rng.uniform(b_lo, b_hi, 32)]))
    scale = kernel.support if math.isfinite(kernel.support) else 1.0
    t = scale * 10.0 ** rng.uniform(-3, 3, n_samples)
    edges = [p for p in kernel.breakpoints if p > 0]
    if edges:
        # just past each edge is where a hard cutoff shows up
        e = np.array(edges)
        t = np.concatenate([t, (e[:, None] * (1 + np.logspace(-9, 0, 24))[None, :]).ravel()])
    Vt = kernel.V(t, n)
    Vbt = kernel.V(betas[:, None] * t[None, :], n)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(Vt[None, :] > 0, Vbt / Vt[None, :], np.where(Vbt > 0, np.inf, 0.0))
    k = np.unravel_index(int(np.argmax(ratio)), ratio.shape)
    sup = float(ratio[k])
    return ScalingCheck(sup, bool(sup <= cap), (b_lo, b_hi), float(t[k[1]]), float(betas[k[0]]))


# ---------------------------------------------------------------- cutoff

@dataclass
class Cutoff:
    rmap: ReflectionMap
    phi: GridFunction
    linear_bound: float

    def __call__(self, x):
        x = np.asarray(x, float).reshape(-1, self.rmap.domain.dim)
        _, d, inside = self.rmap.nearest(x)
        return np.where(inside, _smoothstep(d / self.rmap.eps), 1.0)


def build_cutoff(domain: Domain, rmap: ReflectionMap, grid: Grid, n_samples: int = 2000,
                 seed: int = 0) -> Cutoff:
    """φ = 1 on Ωᶜ, a C² quintic ramp in the distance to ∂Ω across the tube, 0 deeper in.

    ``linear_bound`` is the sampled max of (1 - φ(x)) / dist(x, Ωᶜ) over Ω.
    """
    if rmap.eps < 2 * grid.h:
        raise AdmissibilityError(f"tube width {rmap.eps:.4g} is narrower than two grid cells "
                                 f"(h = {grid.h:.4g}); refine the grid")
    if rmap.domain != domain:
        raise ValueError("reflection map belongs to another domain")
    rng = np.random.default_rng(seed)
    probe = domain.sample_interior(n_samples, rng)
    pts = np.concatenate([grid.coords[grid.interior], probe])
    _, d, _ = rmap.nearest(pts)
    s = d / rmap.eps
    with np.errstate(divide="ignore", invalid="ignore"):
        q = np.where(d > 0, (1.0 - _smoothstep(s)) / d, 0.0)
    cut = Cutoff(rmap, GridFunction.zeros(grid), float(np.max(q)))
    cut.phi = GridFunction(grid, cut(grid.coords))
    return cut


# ---------------------------------------------------------------- extension

@dataclass
class ExtensionResult:
    g_ext: GridFunction
    input_norm: float
    output_norm: float
    ratio: float
    blocks: dict
    scaling: Optional[ScalingCheck] = None
    alpha_hat: Optional[float] = None

    def to_json(self):
        return {"input_norm": self.input_norm, "output_norm": self.output_norm, "ratio": self.ratio,
                "blocks": self.blocks, "alpha_hat": self.alpha_hat,
                "scaling": None if self.scaling is None else self.scaling.to_json()}


def _pairsum(K: FormMatrix, s1, a, s2, b):
    """Σ_{i∈S1, j∈S2} W_ij a_i b_j with W = K(0)·I - K the pair-interaction matrix."""
    x = np.where(s2, b, 0.0)
    Wx = K.diag * x - K.matvec(x)
    return float(np.sum(np.where(s1, a, 0.0) * Wx))


def _pair_energy(K, s1, x, s2, y):
    """Σ_{i∈S1, j∈S2} W_ij (x_i - y_j)²."""
    one = np.ones_like(x)
    return (_pairsum(K, s1, x * x, s2, one) - 2 * _pairsum(K, s1, x, s2, y)
            + _pairsum(K, s1, one, s2, y * y))


def _blocks(K, E, W, Z, g, gT, phi):
    """Pair integrals of the extended function, split as in the continuity estimate.

    E, W, Z are the degrees of freedom in Ωᶜ, in the tube part of Ω and deeper
    in Ω.  The region beyond the grid belongs to Ωᶜ, where g vanishes.
    """
    kap = K.kappa
    u = np.where(E, g, 0.0) + np.where(W, gT * phi, 0.0)
    Om = W | Z
    out = {}
    out["Omega_c x Omega_c"] = _pair_energy(K, E, u, E, u) + 2 * float(np.sum((kap * u * u)[E]))
    A = _pair_energy(K, Om, u, E, u) + float(np.sum((kap * u * u)[Om]))
    out["A"] = A
    out["A'"] = A
    out["B"] = _pair_energy(K, Om, u, Om, u)
    out["A.1"] = _pair_energy(K, W, u, E, u) + float(np.sum((kap * u * u)[W]))
    out["A.2"] = _pairsum(K, Z, np.ones_like(u), E, u * u)
    out["A.1.1"] = 2 * _pairsum(K, W, (1 - phi) ** 2, E, g * g)
    out["A.1.2"] = 2 * (_pairsum(K, W, gT * gT * phi * phi, E, np.ones_like(u))
                        - 2 * _pairsum(K, W, gT * phi * phi, E, g)
                        + _pairsum(K, W, phi * phi, E, g * g)
                        + float(np.sum((kap * gT * gT * phi * phi)[W])))
    out["B.1"] = _pair_energy(K, W, u, W, u)
    out["B.2"] = 2 * _pairsum(K, W, gT * gT * phi * phi, Z, np.ones_like(u))
    out["B.1.1"] = 2 * (_pairsum(K, W, gT * gT * phi * phi, W, np.ones_like(u))
                        - 2 * _pairsum(K, W, gT * gT * phi, W, phi)
                        + _pairsum(K, W, gT * gT, W, phi * phi))
    out["B.1.2"] = 2 * (_pairsum(K, W, gT * gT, W, phi)
                        - 2 * _pairsum(K, W, gT, W, gT * phi)
                        + _pairsum(K, W, np.ones_like(u), W, gT * gT * phi))
    return out


def extend(g, rmap: ReflectionMap, cutoff: Cutoff, measure, K: Optional[FormMatrix] = None,
           g_fn: Optional[Callable] = None, alpha_hat: Optional[float] = None,
           scaling_cap: float = 1e3) -> ExtensionResult:
    """Reflection extension of exterior data ``g`` (a GridFunction) into Ω.

    Values g(Tx) come from ``g_fn`` when given, otherwise from the nearest
    exterior degree of freedom.  Norms: input is the H_ν(Ωᶜ) norm of g (the
    off-grid exterior counts as part of Ωᶜ), output is the H_ν(ℝⁿ) norm.
    """
    if not isinstance(measure, RadialMeasure):
        raise AdmissibilityError("the reflection extension needs an isotropic density")
    grid = g.grid
    if grid.R_trunc < rmap.eps:
        raise ValueError("grid halo must cover the reflected tube")
    if alpha_hat is None:
        alpha_hat = lipschitz_probe(rmap, 1000, 0).alpha_hat
    sc = kernel_scaling_check(measure.kernel, alpha_hat, n=measure.n, cap=scaling_cap)
    if not sc.passed:
        raise AdmissibilityError(f"kernel fails the scaling condition: sup V(βt)/V(t) = {sc.C_alpha:.4g} "
                                 f"at t = {sc.worst_t:.4g}, β = {sc.worst_beta:.4g}")
    if K is None:
        K = assemble(measure, grid)
    E = ~grid.interior
    _, d, _ = rmap.nearest(grid.coords)
    W = grid.interior & (d < rmap.eps)
    Z = grid.interior & ~W
    gv = np.where(E, g.coeffs, 0.0)
    gT = np.zeros(grid.size)
    if W.any():
        Tx = np.reshape(reflect(rmap, grid.coords[W]), (-1, grid.dim))
        if g_fn is not None:
            gT[W] = np.asarray(g_fn(Tx), float).ravel()
        else:
            tree = cKDTree(grid.coords[E])
            _, j = tree.query(Tx)
            gT[W] = gv[E][j]
    phi = cutoff.phi.coeffs
    ext = GridFunction(grid, gv + np.where(W, gT * phi, 0.0))
    gin = GridFunction(grid, gv)
    in_norm = norm(K, gin, "HD", domain_mask=E, unbounded=True)
    if not math.isfinite(in_norm):
        raise DivergenceError("exterior data have infinite H_ν(Ωᶜ) norm")
    out_norm = norm(K, ext, "H")
    ratio = 0.0 if in_norm == 0.0 and out_norm == 0.0 else out_norm / in_norm
    blocks = _blocks(K, E, W, Z, gv, gT, phi)
    blocks["L2_Omega_c"] = l2_sq(K, gin, E)
    blocks["L2_W"] = l2_sq(K, ext, W)
    return ExtensionResult(ext, in_norm, out_norm, ratio, blocks, sc, float(alpha_hat))


# ---------------------------------------------------------------- zero extension

def zero_extension_study(hs=(1 / 16, 1 / 32, 1 / 64), R_trunc: float = 4.0) -> dict:
    """Extending g(x) = 1/x from (-1, 1)ᶜ by zero, against ν(dy) = dy/y².

    For each grid the exterior energy ½∬_{Ωᶜ×Ωᶜ} and the whole-line energy
    ⟨ḡ, ḡ⟩ of the zero extension are computed with the P1 basis (P0 is
    inadmissible for this kernel).  The reflection extension on the same grids
    is reported alongside.
    """
    dom = Interval(-1.0, 1.0)
    meas = make_radial(user_kernel(lambda r: r ** -2.0, alpha=1.0, n=1), 1)
    rmap = ReflectionMap(dom)

    def g_fn(x):
        x = np.asarray(x, float).reshape(-1)
        with np.errstate(divide="ignore"):
            return np.where(np.abs(x) >= 1.0, 1.0 / x, 0.0)

    rows = []
    for h in hs:
        grid = make_grid(dom, h, R_trunc, "P1", measure=meas)
        K = assemble(meas, grid)
        E = ~grid.interior
        x = grid.coords[:, 0]
        g = GridFunction(grid, np.where(E, g_fn(x), 0.0))
        ext_energy = norm(K, g, "HD", domain_mask=E, unbounded=True) ** 2 - l2_sq(K, g, E)
        zero_energy = float(g.coeffs @ K.matvec(g.coeffs))
        cut = build_cutoff(dom, rmap, grid)
        res = extend(g, rmap, cut, meas, K=K, g_fn=g_fn, alpha_hat=1.0)
        refl_energy = res.output_norm ** 2 - l2_sq(K, res.g_ext)
        rows.append({"h": h, "exterior_energy": ext_energy, "zero_extension_energy": zero_energy,
                     "reflection_energy": refl_energy})
    z = [r["zero_extension_energy"] for r in rows]
    e = [r["exterior_energy"] for r in rows]
    return {"rows": rows, "zero_growth": z[-1] / z[0],
            "exterior_drift": max(abs(v - e[0]) for v in e) / abs(e[0]),
            "reflection_growth": rows[-1]["reflection_energy"] / rows[0]["reflection_energy"]}
