"""Poincaré constants, maximum and comparison principles, barriers and L∞ bounds."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import linalg

from .errors import NLDError
from .form import FormMatrix, GridFunction, assemble
from .geometry import Domain, dilate, make_grid, translate_chain_length
from .levy import (Annulus, AtomicMeasure, BallComplement, LevyMeasure, MixtureMeasure,
                   ShiftedComplement)

__all__ = [
    "PoincareEstimate", "Barrier", "poincare_spectral", "poincare_constructive", "chain_constant",
    "check_weak_max_principle", "check_comparison", "m_matrix_report", "barrier", "build_barrier",
    "effective_bound", "linf_bound",
]


@dataclass
class PoincareEstimate:
    spectral_constant: Optional[float] = None
    constructive_constant: Optional[float] = None
    lambda_min: Optional[float] = None
    lambda_min_eigh: Optional[float] = None
    iterations: int = 0
    annulus: Optional[tuple] = None
    chain_length: Optional[int] = None
    annulus_mass: Optional[float] = None

    def to_json(self):
        return dict(self.__dict__)


def poincare_spectral(K: FormMatrix, tol: float = 1e-9, maxiter: int = 10000,
                      cross_check: bool = True) -> PoincareEstimate:
    """Smallest generalised Rayleigh quotient of (K_II, M_II) by inverse iteration."""
    I = K.grid.interior
    A = K.block(I)
    M = K.mass_block(I)
    try:
        chol = linalg.cho_factor(A)
    except linalg.LinAlgError as exc:
        raise NLDError("interior block is not positive definite: Poincaré inequality fails "
                       "at this resolution or the assembly is broken") from exc
    rng = np.random.default_rng(0)
    x = 1.0 + 0.1 * rng.uniform(size=A.shape[0])
    lam_old = math.inf
    lam = math.inf
    it = 0
    for it in range(1, maxiter + 1):
        y = linalg.cho_solve(chol, M @ x)
        x = y / math.sqrt(float(y @ M @ y))
        lam = float(x @ A @ x)
        if abs(lam - lam_old) <= tol * abs(lam):
            break
        lam_old = lam
    est = PoincareEstimate(spectral_constant=1.0 / lam, lambda_min=lam, iterations=it)
    if cross_check:
        est.lambda_min_eigh = float(linalg.eigh(A, M, eigvals_only=True, subset_by_index=[0, 0])[0])
    return est


def chain_constant(n: int) -> float:
    """C with ‖u‖²_{L²(Ω)} <= C ⟨u,u⟩_{δ_x0} when the translate chain of x0 has length n.

    Step k of the chain argument contributes 2^k⟨u,u⟩ and leaves a remainder with
    coefficient 2^{k-1}; after n steps C_n = 2^{n+1} - 2.  The part of Ω leaving
    through x0 adds 2, and the remaining ½ is undone, giving 2^{n+2} - 2.
    """
    return 2.0 ** (n + 2) - 2.0


def _worst_chain(domain: Domain, radius: float, n_dirs: int = 64) -> int:
    if domain.dim == 1:
        return translate_chain_length(domain, [radius])
    th = np.linspace(0, np.pi, n_dirs, endpoint=False)  # ±x0 give equal lengths
    return max(translate_chain_length(domain, radius * np.array([math.cos(t), math.sin(t)])) for t in th)


def poincare_constructive(measure: LevyMeasure, domain: Domain, j_range=range(-12, 13)) -> PoincareEstimate:
    """Constant from a dyadic annulus of positive mass and the translate-chain bound."""
    best = None
    for j in j_range:
        e1, e2 = 2.0 ** j, 2.0 ** (j + 1)
        mass = measure.tail_mass(Annulus(e1, e2)) if not _atomic_outside(measure, e2) else 0.0
        if not mass > 0 or domain.diameter / e1 > 60:
            continue
        n = _worst_chain(domain, e1)
        C = chain_constant(n) / mass
        if best is None or C < best[0]:
            best = (C, (e1, e2), n, mass)
    if best is None:
        raise NLDError("no dyadic annulus with positive mass found; the measure may be zero")
    C, ann, n, mass = best
    return PoincareEstimate(constructive_constant=C, annulus=ann, chain_length=n, annulus_mass=mass)


def _atomic_outside(measure, r):
    # an atomic far-field remainder cannot be split by a bounded annulus: skip those
    parts = measure.parts if isinstance(measure, MixtureMeasure) else [measure]
    return any(isinstance(p, AtomicMeasure) and p.tail > 0 and p.tail_radius < r for p in parts)


# ------------------------------------------------------------------ maximum principles

def check_weak_max_principle(report, tol: float = 1e-10) -> dict:
    u = report.solution.coeffs
    i = int(np.argmin(u))
    return {"pass": bool(u[i] >= -tol), "min": float(u[i]),
            "location": report.solution.grid.coords[i].tolist()}


def check_comparison(report_u, report_v, tol: float = 1e-10) -> dict:
    d = report_u.solution.coeffs - report_v.solution.coeffs
    i = int(np.argmin(d))
    return {"pass": bool(d[i] >= -tol), "min_difference": float(d[i]),
            "location": report_u.solution.grid.coords[i].tolist()}


def m_matrix_report(K: FormMatrix, tol: float = 1e-12) -> dict:
    """Sign structure of the interior rows: the discrete form of the strong maximum principle."""
    I = K.grid.interior
    rows = np.flatnonzero(I)
    A = K.entries(rows, np.arange(K.grid.size))
    diag = A[np.arange(len(rows)), rows]
    off = A.copy()
    off[np.arange(len(rows)), rows] = 0.0
    scale = np.max(np.abs(diag)) if len(diag) else 1.0
    return {
        "diag_nonnegative": bool(np.all(diag >= -tol * scale)),
        "offdiag_nonpositive": bool(np.all(off <= tol * scale)),
        "row_sum_nonnegative": bool(np.all(K.kappa[I] >= -tol * scale)),
        "max_offdiag": float(np.max(off)) if off.size else 0.0,
        "min_row_sum": float(np.min(K.kappa[I])) if I.any() else 0.0,
    }


# ------------------------------------------------------------------ barriers

@dataclass
class Barrier:
    w: GridFunction
    case: str
    C_sup: float
    lower_Lw: float
    certified: bool
    params: dict = field(default_factory=dict)
    form: Optional[FormMatrix] = None

    def to_json(self):
        return {"case": self.case, "C_sup": self.C_sup, "lower_Lw": self.lower_Lw,
                "certified": self.certified, **self.params}


def _smoothstep(s):
    """C² ramp from 1 (s <= 0) to 0 (s >= 1)."""
    s = np.clip(s, 0.0, 1.0)
    # the clip guards against rounding to -1e-16 at s = 1
    return np.clip(1.0 - s ** 3 * (10 - 15 * s + 6 * s * s), 0.0, 1.0)


def _center_radius(domain):
    # bumps are centred at the origin, with Ω inside the ball of radius r2
    c = np.zeros(domain.dim)
    return c, domain.radius_about(c)


def build_barrier(measure: LevyMeasure, domain: Domain, h: float, basis: str = "P0") -> Barrier:
    """Barrier w >= 0 with Lw >= 1 on Ω, discretised and certified row by row."""
    c, r2 = _center_radius(domain)
    if measure.has_unbounded_support(2 * (r2 + 0.5 * r2)):
        tau = 0.5 * r2
        R = r2 + tau
        C = measure.tail_mass(BallComplement(2 * R))

        def eta(x):
            return _smoothstep((np.linalg.norm(x - c, axis=1) - r2) / tau)

        scale = 1.0 / C
        case, params = "UnboundedSupport", {"R": R, "tail_mass": C}
    else:
        r1 = measure.support_radius()
        if not (r1 > 0 and math.isfinite(r1)):
            raise NLDError("measure is zero: no barrier exists")
        R = r1 + r2 + 1.0
        eps, mass = _best_inner_radius(measure, r1)
        if mass <= 0:
            raise NLDError("measure is zero: no barrier exists")
        Ct = eps ** 2 / R ** 2

        def eta(x):
            return np.maximum(1.0 - np.sum((x - c) ** 2, axis=1) / R ** 2, 0.0)

        scale = 1.0 / (Ct * mass)
        case, params = "CompactSupport", {"R": R, "eps": eps, "annulus_mass": mass, "concavity_gap": Ct}
    # halo wide enough that the barrier vanishes off the grid
    lo, hi = (np.asarray(v, float) for v in domain.bbox)
    halo = float(np.max(np.abs(np.concatenate([c - R - lo, c + R - hi])))) + 2 * h
    grid = make_grid(domain, h, halo, basis)
    K = assemble(measure, grid)
    w = GridFunction(grid, scale * eta(grid.coords))
    return _certify(K, w, case, params)


def _best_inner_radius(measure, r1):
    """ε maximising ε² ν(ε <= |y| <= r1)."""
    cands = set(np.geomspace(r1 * 1e-3, r1, 40).tolist())
    for p in (measure.parts if isinstance(measure, MixtureMeasure) else [measure]):
        if isinstance(p, AtomicMeasure):
            cands |= set(np.linalg.norm(p.points, axis=1).tolist())
    best = (0.0, 0.0)
    for e in sorted(cands):
        m = measure.tail_mass(Annulus(e, r1))
        if e * e * m > best[0] ** 2 * best[1]:
            best = (e, m)
    return best


def _certify(K, w, case, params):
    I = K.grid.interior
    Kw = K.matvec(w.coeffs)
    M1 = K.mass_matvec(np.ones(K.grid.size))
    ratio = Kw[I] / M1[I]
    lower = float(np.min(ratio)) if I.any() else math.inf
    C_sup = float(np.max(w.coeffs[I])) if I.any() else 0.0
    certified = bool(lower >= 1.0 - 1e-10)
    return Barrier(w, case, C_sup, lower, certified, params, K)


def barrier(measure: LevyMeasure, domain: Domain, K: Optional[FormMatrix] = None, h: Optional[float] = None,
            basis: Optional[str] = None) -> Barrier:
    """Barrier at the resolution of ``K`` (or of ``h``/``basis``)."""
    if K is not None:
        h, basis = K.grid.h, K.grid.basis
    return build_barrier(measure, domain, h if h is not None else 1 / 32, basis or "P0")


# ------------------------------------------------------------------ effective constant

def _sample_points(domain, eps, n_random=64, seed=0, grid_points=None):
    rng = np.random.default_rng(seed)
    pts = [domain.sample_interior(n_random, rng)]
    if grid_points is not None and len(grid_points):
        pts.append(np.asarray(grid_points, float))
    b, nrm = domain.boundary_samples(64)
    for k in range(1, 9):
        pts.append(b - (eps * 2.0 ** -k) * nrm)
    P = np.concatenate(pts)
    return P[domain.contains(P)]


def effective_bound(measure: LevyMeasure, domain: Domain, eps_schedule=None, grid_points=None,
                    n_random: int = 64, seed: int = 0) -> dict:
    """inf_x ν(Ω_εᶜ - x) along a decreasing ε schedule, and inf_x κ^Ω(x).

    The infimum is sampled (grid points, random interior points and points at
    depths ε/2, ε/4, ... below the boundary), so it is an estimate from above.
    """
    if eps_schedule is None:
        eps_schedule = [2.0 ** -k for k in range(2, 9)]
    eps_schedule = sorted(eps_schedule, reverse=True)
    inv = []
    for e in eps_schedule:
        P = _sample_points(domain, e, n_random, seed, grid_points)
        dom_e = dilate(domain, e)
        vals = [measure.tail_mass(ShiftedComplement(dom_e, tuple(x))) for x in P]
        inv.append(float(min(vals)))
    P = _sample_points(domain, eps_schedule[-1], n_random, seed, grid_points)
    kap = float(min(measure.tail_mass(ShiftedComplement(domain, tuple(x))) for x in P))
    C_inv_limit = inv[-1]
    monotone = all(a <= b * (1 + 1e-12) + 1e-15 for a, b in zip(inv[:-1], inv[1:]))
    return {
        "eps": eps_schedule,
        "C_eps_inverse": inv,
        "C_eff_inverse": C_inv_limit,
        "C_eff": (1.0 / C_inv_limit) if C_inv_limit > 0 else math.inf,
        "kappa_inf": kap,
        "gap": kap - C_inv_limit,
        "monotone": monotone,
    }


def linf_bound(report, measure, domain, f: GridFunction, g: Optional[GridFunction] = None, **kw) -> dict:
    """Check ‖u‖∞ <= C_eff ‖f‖∞ + ‖g‖∞ with C_eff from the ε schedule."""
    grid = report.solution.grid
    eb = effective_bound(measure, domain, grid_points=grid.coords[grid.interior], **kw)
    I = grid.interior
    fmax = float(np.max(np.abs(f.coeffs[I]))) if I.any() else 0.0
    gmax = float(np.max(np.abs(g.coeffs[~I]))) if (g is not None and (~I).any()) else 0.0
    umax = float(np.max(np.abs(report.solution.coeffs[I]))) if I.any() else 0.0
    out = dict(eb)
    out["max_abs_solution"] = umax
    if eb["C_eff_inverse"] <= 0:
        out.update(bound=None, holds=None, note="zero infimum: no bound")
        return out
    bound = eb["C_eff"] * fmax + gmax
    out["bound"] = bound
    out["holds"] = bool(umax <= bound + 1e-10)
    bj = (fmax / eb["kappa_inf"] + gmax) if eb["kappa_inf"] > 0 else math.inf
    out["bound_kappa"] = bj
    return out
