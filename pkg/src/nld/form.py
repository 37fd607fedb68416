"""The bilinear form ⟨u, v⟩_ν on grid functions, norms and the energy functional.

Functions on a :class:`~nld.geometry.Grid` are finite combinations of
translated basis functions.  Outside the grid they take a constant
``far_value`` (zero for members of the Sobolev spaces).  Because the form kills
constants, ⟨u, v⟩ = (u - c_u)ᵀ K (v - c_v) with K the Gram matrix of the grid
basis, which is Toeplitz and stored through its stencil.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import signal, special

from . import stencil as st
from .errors import AdmissibilityError, DivergenceError
from .geometry import Grid
from .levy import AtomicMeasure, LevyMeasure, MixtureMeasure, RadialMeasure

DENSE_LIMIT = 2500


@dataclass
class GridFunction:
    grid: Grid
    coeffs: np.ndarray
    far_value: float = 0.0

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float).ravel()
        if self.coeffs.shape != (self.grid.size,):
            raise ValueError(f"expected {self.grid.size} coefficients, got {self.coeffs.size}")
        if not np.all(np.isfinite(self.coeffs)):
            raise ValueError("grid function has nonfinite coefficients")

    @property
    def basis(self):
        return self.grid.basis

    @classmethod
    def from_callable(cls, grid, fn, far_value=0.0):
        return cls(grid, np.asarray(fn(grid.coords), float).ravel(), far_value)

    @classmethod
    def zeros(cls, grid):
        return cls(grid, np.zeros(grid.size))

    def in_H_omega(self, tol=0.0):
        """Zero halo and zero far value: a member of the space H_ν^Ω."""
        return self.far_value == 0.0 and np.all(np.abs(self.coeffs[self.grid.halo]) <= tol)

    def shifted(self):
        return self.coeffs - self.far_value

    def __add__(self, other):
        _check_grid(self.grid, other.grid)
        return GridFunction(self.grid, self.coeffs + other.coeffs, self.far_value + other.far_value)

    def __rmul__(self, s):
        return GridFunction(self.grid, s * self.coeffs, s * self.far_value)


def _check_grid(a, b):
    if not a.same_as(b):
        raise ValueError("grid functions live on different grids")


@dataclass(eq=False)
class FormMatrix:
    """Gram matrix of ⟨·,·⟩_ν over the grid basis, stored as a Toeplitz stencil.

    ``kappa`` holds the row sums, which equal the exact coupling of each basis
    function to everything off the grid (the killing term).  No inner cutoff is
    used, so ``eps_pv`` is always 0.
    """

    grid: Grid
    measure: LevyMeasure
    stencil: np.ndarray
    mass_stencil: np.ndarray
    R_trunc: float
    error_estimate: float
    eps_pv: float = 0.0

    def __post_init__(self):
        if not np.all(np.isfinite(self.stencil)):
            raise ValueError("assembled form has nonfinite entries")
        self._dense = None
        self.kappa = self.matvec(np.ones(self.grid.size))

    @property
    def center(self):
        return tuple(s - 1 for s in self.grid.shape)

    @property
    def diag(self):
        return float(self.stencil[self.center])

    def entries(self, rows, cols):
        """Dense block K[rows][:, cols] for index arrays into the grid."""
        idx = self.grid.idx
        d = idx[np.asarray(cols)][None, :, :] - idx[np.asarray(rows)][:, None, :]
        pos = tuple(d[..., k] + self.center[k] for k in range(d.shape[-1]))
        return self.stencil[pos]

    def dense(self):
        if self._dense is None:
            all_ = np.arange(self.grid.size)
            self._dense = self.entries(all_, all_)
        return self._dense

    def block(self, row_mask, col_mask=None):
        rows = np.flatnonzero(row_mask)
        cols = rows if col_mask is None else np.flatnonzero(col_mask)
        if self.grid.size <= DENSE_LIMIT:
            return self.dense()[np.ix_(rows, cols)]
        return self.entries(rows, cols)

    def matvec(self, u):
        u = np.asarray(u, float)
        if self.grid.size <= DENSE_LIMIT:
            return self.dense() @ u
        U = u.reshape(self.grid.shape)
        return signal.fftconvolve(self.stencil, U, mode="valid").ravel()

    def mass_matvec(self, u):
        U = np.asarray(u, float).reshape(self.grid.shape)
        return signal.convolve(U, self.mass_stencil, mode="same", method="direct").ravel()

    def mass_block(self, row_mask, col_mask=None):
        rows = np.flatnonzero(row_mask)
        cols = rows if col_mask is None else np.flatnonzero(col_mask)
        idx = self.grid.idx
        d = idx[cols][None, :, :] - idx[rows][:, None, :]
        s = (self.mass_stencil.shape[0] - 1) // 2
        ok = np.all(np.abs(d) <= s, axis=-1)
        out = np.zeros(d.shape[:2])
        pos = tuple(np.clip(d[..., k] + s, 0, 2 * s)[ok] for k in range(d.shape[-1]))
        out[ok] = self.mass_stencil[pos]
        return out

    def to_coo_text(self, tol=0.0):
        """Sorted ``row col value`` lines of the nonzero entries."""
        K = self.dense()
        r, c = np.nonzero(np.abs(K) > tol)
        return "\n".join(f"{i} {j} {K[i, j]:.17g}" for i, j in zip(r, c))


def assemble(measure: LevyMeasure, grid: Grid) -> FormMatrix:
    """Gram matrix of the form over every basis function of ``grid``."""
    if grid.basis == "P0" and not (measure.small_jump_integrable or math.isfinite(measure.total_mass)):
        raise AdmissibilityError("P0 indicators have infinite energy for this measure; use basis P1")
    if measure.dim != grid.dim:
        raise ValueError(f"measure dimension {measure.dim} differs from grid dimension {grid.dim}")
    K, err = st.stencil(measure, grid.shape, grid.h, grid.basis)
    M = st.mass_stencil(grid.dim, grid.h, grid.basis)
    return FormMatrix(grid, measure, K, M, grid.R_trunc, err)


def form_value(K: FormMatrix, u: GridFunction, v: GridFunction) -> float:
    _check_grid(K.grid, u.grid)
    _check_grid(u.grid, v.grid)
    return float(u.shifted() @ K.matvec(v.shifted()))


def l2_sq(K: FormMatrix, u: GridFunction, mask=None) -> float:
    c = u.coeffs
    if mask is None:
        return float(c @ K.mass_matvec(c))
    cm = np.where(mask, c, 0.0)
    return float(cm @ K.mass_matvec(cm))


def _w_matvec(K, x):
    """Off-diagonal coupling W = diag(K(0)) - K applied to x."""
    return K.diag * x - K.matvec(x)


def v_part(K: FormMatrix, u: GridFunction, mask) -> float:
    """½∫_D∫_{ℝⁿ}(u(x)-u(y))² dν_y(x) dy with D the union of the cells in ``mask``."""
    c = u.shifted()
    Kc, Kc2 = K.matvec(c), K.matvec(c * c)
    return float(np.sum((c * Kc - 0.5 * Kc2)[mask]))


def hd_part(K: FormMatrix, u: GridFunction, mask, unbounded=False) -> float:
    """½∫_D∫_D(u(x)-u(y))² dν: pair energy restricted to D.

    ``unbounded`` adds the coupling to the off-grid region, which then counts as
    part of D (as it does for exterior domains).
    """
    c = u.shifted()
    m = np.asarray(mask, float)
    val = float(np.sum(m * c * c * _w_matvec(K, m)) - (m * c) @ _w_matvec(K, m * c))
    if unbounded:
        val += float(np.sum((K.kappa * c * c)[mask]))
    return val


def norm(K: FormMatrix, u: GridFunction, space: str = "H", domain_mask=None, unbounded=False) -> float:
    """Norms of the function spaces.

    ``space`` is ``"V"`` (V_ν^D with D = Ω unless ``domain_mask`` is given),
    ``"H"`` (H_ν^Ω and H_ν(ℝⁿ), identical on grid functions) or ``"HD"`` for the
    restricted space H_ν(D).  The double integral in H_ν(D) carries the factor ½
    so that D = ℝⁿ reproduces the H_ν(ℝⁿ) norm.
    """
    if u.far_value != 0.0:
        raise ValueError("norms need a function vanishing off the grid")
    g = K.grid
    if space == "H":
        return math.sqrt(max(l2_sq(K, u) + form_value(K, u, u), 0.0))
    mask = g.interior if domain_mask is None else np.asarray(domain_mask, bool)
    if space == "V":
        return math.sqrt(max(l2_sq(K, u, mask) + v_part(K, u, mask), 0.0))
    if space == "HD":
        return math.sqrt(max(l2_sq(K, u, mask) + hd_part(K, u, mask, unbounded), 0.0))
    raise ValueError(f"unknown space {space!r}")


def energy(u: GridFunction, f: GridFunction, K: FormMatrix) -> float:
    """E(u) = ½⟨u,u⟩ over pairs not both in Ωᶜ, minus (f, u)_Ω.

    Halo coefficients of ``u`` are the exterior data g; g vanishes off the grid.
    """
    _check_grid(K.grid, u.grid)
    if u.far_value != 0.0:
        raise ValueError("exterior data must vanish off the grid")
    I = K.grid.interior
    uI = np.where(I, u.coeffs, 0.0)
    gH = np.where(I, 0.0, u.coeffs)
    KuI = K.matvec(uI)
    rhs = K.mass_matvec(f.coeffs)
    e = 0.5 * uI @ KuI + gH @ KuI - 0.5 * (gH * gH) @ K.matvec(I.astype(float)) - uI @ rhs
    return float(e)


# ------------------------------------------------------------ shift-energy decomposition

def _coeff_autocorr(c, shape):
    """C(d) = Σ_i c_i c_{i+d} on the offset lattice (shape 2N-1)."""
    C = c.reshape(shape)
    out = signal.convolve(C, np.flip(C), mode="full")
    if np.any(out):
        out[np.abs(out) < 1e-13 * np.max(np.abs(out))] = 0.0
    return out


def shift_energy(u: GridFunction, y) -> float:
    """⟨u,u⟩_{δ_y} = ½∫(u(x) - u(x+y))² dx for a single shift y."""
    g = u.grid
    C = _coeff_autocorr(u.shifted(), g.shape)
    return float(_shift_energies(C, g, np.atleast_2d(np.asarray(y, float)))[0])


def _shift_energies(C, g, Y):
    h, basis, n = g.h, g.basis, g.dim
    s = st.SUPPORT[basis]
    center = np.array([d - 1 for d in g.shape])
    loc = st._quadrant_offsets([2 * s + 1] * n) - s
    a_loc = st.autocorr(loc * h, h, basis)
    pos = tuple((loc + center).T)
    base = float(np.sum(C[pos] * a_loc))
    out = np.empty(len(Y))
    for k, y in enumerate(Y):
        lo = np.floor(-y / h - s).astype(int)
        cand = st._quadrant_offsets(np.full(n, 2 * s + 2)) + lo
        val = st.autocorr(cand * h + y, h, basis)
        p = cand + center
        ok = np.all((p >= 0) & (p < np.array(C.shape)), axis=1) & (val != 0)
        out[k] = base - float(np.sum(C[tuple(p[ok].T)] * val[ok]))
    # each term is ∫u(x)² - ∫u(x)u(x+y): half the squared difference
    return out


def form_via_delta_decomposition(measure: LevyMeasure, u: GridFunction, quad_nodes: int = 12) -> float:
    """⟨u,u⟩_ν = ∫⟨u,u⟩_{δ_y} dν(y), integrated over ν directly.

    Atomic parts are finite sums (the far remainder sees ‖u‖²); radial parts use
    composite Gauss rules in |y| with a Gauss–Jacobi rule at the origin and the
    exact mass beyond the support diameter.
    """
    g = u.grid
    c = u.shifted()
    C = _coeff_autocorr(c, g.shape)
    total = 0.0
    parts = measure.parts if isinstance(measure, MixtureMeasure) else [measure]
    for part in parts:
        if isinstance(part, AtomicMeasure):
            total += float(np.sum(part.weights * _shift_energies(C, g, part.points)))
            if part.tail:
                total += part.tail * float(_shift_energies(C, g, np.full((1, g.dim), 1e6 * g.h * max(g.shape)))[0])
        elif isinstance(part, RadialMeasure):
            total += _radial_decomposition(part, C, g, quad_nodes)
        else:
            raise TypeError(type(part).__name__)
    return total


def _radial_decomposition(measure, C, g, q):
    k, n, h, basis = measure.kernel, g.dim, g.h, g.basis
    if basis == "P0" and not (measure.small_jump_integrable or math.isfinite(measure.total_mass)):
        raise DivergenceError("shift energies of cell indicators are not integrable at the origin",
                              regime="origin")
    s = st.SUPPORT[basis]
    center = np.array([d - 1 for d in g.shape])
    nz = np.argwhere(np.abs(C) > 0) - center
    R_big = float(np.max(np.linalg.norm(nz * h, axis=1))) + s * h * math.sqrt(n) if len(nz) else h
    cuts = sorted({*np.arange(0.0, R_big + h, h).tolist(), *[b for b in k.breakpoints if b < R_big]})
    cuts = [x for x in cuts if x < R_big] + [R_big]
    if n == 2:
        # circle-lattice crossings make the integrand less regular; refine pieces
        cuts = np.unique(np.concatenate([np.linspace(a, b, 5) for a, b in zip(cuts[:-1], cuts[1:])])).tolist()
    offs = nz
    Cv = C[tuple((nz + center).T)]

    reach = s * h * math.sqrt(n) * (1 + 1e-12)
    dist = np.linalg.norm(offs * h, axis=1)

    def summed(r):
        # Ŝ(t, r) vanishes unless t lies within the basis reach of 0 or of the sphere |t| = r
        live = (dist <= reach) | (np.abs(dist - r) <= reach)
        return sum(cv * st._shat(o * h, r, h, basis) for o, cv in zip(offs[live], Cv[live]))

    p = n if basis == "P0" else n + 1
    x, w = np.polynomial.legendre.leggauss(q)
    total = 0.0
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        if hi <= k.r_min or lo >= k.support:
            continue
        if lo == 0.0 and k.alpha is not None and k.r_min == 0.0:
            e = p - n - k.alpha
            xj, wj = special.roots_jacobi(q, 0.0, e)
            r = 0.5 * hi * (xj + 1)
            wr = wj * (0.5 * hi) ** (e + 1)
            vals = np.array([k.coeff * float(k.shape(np.asarray(rr))) * summed(rr) / rr ** p for rr in r])
            total += float(np.sum(wr * vals))
        else:
            r = 0.5 * (hi - lo) * x + 0.5 * (hi + lo)
            vals = np.array([float(measure.V(rr)) * summed(rr) for rr in r])
            total += float(np.sum(0.5 * (hi - lo) * w * vals))
    # beyond R_big every shift separates u from its translate: energy ‖u‖² per unit mass
    norm_sq = float(np.sum(Cv * st.autocorr(offs * h, h, basis)))
    total += norm_sq * measure.shell_mass(R_big)[0]
    return total
