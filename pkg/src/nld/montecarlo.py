"""Monte Carlo oracle: compound Poisson paths, exit times and Feynman–Kac averages.

A finite Lévy measure generates a compound Poisson process: exponential(Λ)
holding times with Λ = ν(ℝⁿ) and jumps drawn from ν/Λ.  Measures with infinite
mass near the origin are simulated after dropping jumps shorter than δ; the
measure is symmetric, so no drift correction is needed.

All paths share one seeded generator and advance in lock step, so a given seed
reproduces the estimate bit for bit.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy import interpolate

from .errors import DivergenceError, PathCapError
from .geometry import Domain
from .levy import AtomicMeasure, LevyMeasure, MixtureMeasure, RadialMeasure

__all__ = ["JumpProcessSpec", "jump_process", "mean_exit_time", "feynman_kac"]


class _AtomicSampler:
    def __init__(self, m: AtomicMeasure):
        self.points = m.points
        self.tail = m.tail
        self.tail_radius = m.tail_radius
        w = np.append(m.weights, m.tail)
        self.rate = float(w.sum())
        self.cdf = np.cumsum(w) / self.rate
        self.dim = m.dim

    def __call__(self, rng, k):
        j = np.minimum(np.searchsorted(self.cdf, rng.uniform(size=k), side="right"), len(self.cdf) - 1)
        out = np.empty((k, self.dim))
        atom = j < len(self.points)
        out[atom] = self.points[j[atom]]
        far = ~atom
        if far.any():
            # the remainder only records its mass beyond tail_radius, so far
            # jumps land just past that radius in a uniform direction
            out[far] = self.tail_radius * (1 + 1e-12) * _directions(rng, int(far.sum()), self.dim)
        return out


class _RadialSampler:
    """Inverse-CDF sampling of |y| from a tabulated tail function."""

    def __init__(self, m: RadialMeasure, n_table: int = 400):
        k = m.kernel
        self.dim = m.n
        lo = k.r_min
        self.rate = m.shell_mass(lo)[0]
        if not (self.rate > 0 and math.isfinite(self.rate)):
            raise DivergenceError("jump rate must be positive and finite; truncate small jumps first",
                                  regime="origin")
        self.fractional = k.kind == "fractional"
        self.alpha, self.lo = k.alpha, lo
        if self.fractional:
            return
        hi = k.support if math.isfinite(k.support) else max(lo, 1.0) * 10.0
        if not math.isfinite(k.support):
            while m.shell_mass(hi)[0] > 1e-13 * self.rate and hi < 1e12 * max(lo, 1.0):
                hi *= 10.0
        r = np.geomspace(lo, hi, n_table) if lo > 0 else np.concatenate(
            [[0.0], np.geomspace(hi * 1e-9, hi, n_table - 1)])
        surv = np.array([m.shell_mass(float(x))[0] for x in r]) / self.rate
        surv = np.minimum.accumulate(np.clip(surv, 0.0, 1.0))
        surv[0] = 1.0
        keep = np.concatenate([[True], np.diff(surv) < 0])
        self.inv = interpolate.interp1d(surv[keep][::-1], r[keep][::-1], bounds_error=False,
                                        fill_value=(r[keep][-1], lo))

    def radius(self, u):
        if self.fractional:
            return self.lo * (1.0 - u) ** (-1.0 / self.alpha)
        return self.inv(u)

    def __call__(self, rng, k):
        u = rng.uniform(size=k)
        return self.radius(1.0 - u)[:, None] * _directions(rng, k, self.dim)


def _directions(rng, k, dim):
    if dim == 1:
        return rng.choice([-1.0, 1.0], size=(k, 1))
    th = rng.uniform(0, 2 * np.pi, size=k)
    return np.column_stack([np.cos(th), np.sin(th)])


@dataclass
class JumpProcessSpec:
    measure: LevyMeasure
    rate: float
    delta: float
    samplers: list
    probs: np.ndarray

    @property
    def dim(self):
        return self.measure.dim

    def sample_jumps(self, rng, k):
        if len(self.samplers) == 1:
            return self.samplers[0](rng, k)
        c = rng.choice(len(self.samplers), size=k, p=self.probs)
        out = np.empty((k, self.dim))
        for i, s in enumerate(self.samplers):
            sel = c == i
            if sel.any():
                out[sel] = s(rng, int(sel.sum()))
        return out

    def to_json(self):
        return {"rate": self.rate, "delta": self.delta}


def jump_process(measure: LevyMeasure, delta: float = 0.0) -> JumpProcessSpec:
    """Simulation data for ν restricted to {|y| > δ} (δ = 0 needs a finite measure)."""
    parts = measure.parts if isinstance(measure, MixtureMeasure) else [measure]
    samplers = []
    for p in parts:
        if isinstance(p, AtomicMeasure):
            s = _AtomicSampler(p.truncate(delta) if delta > 0 else p)
        elif isinstance(p, RadialMeasure):
            q = p.truncate(delta) if delta > 0 else p
            if not math.isfinite(q.total_mass):
                raise DivergenceError("infinite jump rate: pass a positive small-jump cutoff",
                                      regime="origin")
            s = _RadialSampler(q)
        else:
            raise TypeError(f"cannot simulate {type(p).__name__}")
        if s.rate > 0:
            samplers.append(s)
    rates = np.array([s.rate for s in samplers])
    if not len(samplers) or rates.sum() <= 0:
        raise ValueError("the measure has no mass: the process never jumps")
    return JumpProcessSpec(measure, float(rates.sum()), float(delta), samplers, rates / rates.sum())


def _simulate(spec: JumpProcessSpec, domain: Domain, x0, f, g, n_paths, seed, max_jumps):
    rng = np.random.default_rng(seed)
    dim = domain.dim
    x0 = np.asarray(x0, float).reshape(dim)
    X = np.tile(x0, (n_paths, 1))
    alive = domain.contains(X)
    tau = np.zeros(n_paths)
    integral = np.zeros(n_paths)
    payoff = np.zeros(n_paths)
    if not alive.any():
        payoff[:] = g(X) if g is not None else 0.0
        return tau, integral, payoff
    jumps = 0
    idx = np.flatnonzero(alive)
    while len(idx):
        if jumps >= max_jumps:
            raise PathCapError(f"{len(idx)} of {n_paths} paths still inside after {max_jumps} jumps",
                               {"alive": int(len(idx)), "max_jumps": max_jumps,
                                "mean_tau_so_far": float(np.mean(tau[idx]))})
        hold = rng.exponential(1.0 / spec.rate, size=len(idx))
        tau[idx] += hold
        if f is not None:
            integral[idx] += np.asarray(f(X[idx]), float).ravel() * hold
        X[idx] += spec.sample_jumps(rng, len(idx))
        jumps += 1
        out = ~domain.contains(X[idx])
        done = idx[out]
        if len(done) and g is not None:
            payoff[done] = np.asarray(g(X[done]), float).ravel()
        idx = idx[~out]
    return tau, integral, payoff


def _mean_err(v):
    n = len(v)
    return float(np.mean(v)), (float(np.std(v, ddof=1) / math.sqrt(n)) if n > 1 else 0.0)


def mean_exit_time(spec: JumpProcessSpec, domain: Domain, x0, n_paths: int = 10_000, seed: int = 0,
                   max_jumps: int = 1_000_000):
    """(E τ_Ω estimate, standard error) started at ``x0``; τ = 0 when x0 ∉ Ω."""
    tau, _, _ = _simulate(spec, domain, x0, None, None, n_paths, seed, max_jumps)
    return _mean_err(tau)


def feynman_kac(spec: JumpProcessSpec, domain: Domain, x0, f: Optional[Callable] = None,
                g: Optional[Callable] = None, n_paths: int = 10_000, seed: int = 0,
                max_jumps: int = 1_000_000):
    """(estimate, standard error) of E g(X_τ) + E ∫_0^τ f(X_t) dt.

    With f ≡ 1 and g ≡ 0 this is the mean exit time, the solution of Lu = 1
    with zero exterior data.  ``f`` and ``g`` map (m, dim) arrays to values;
    the running integral is exact for the piecewise-constant path.
    """
    _, integral, payoff = _simulate(spec, domain, x0, f, g, n_paths, seed, max_jumps)
    return _mean_err(integral + payoff)
