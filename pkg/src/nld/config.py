"""Run configurations: JSON files describing a measure, a domain, a grid and tasks.

Parse errors carry a dotted path into the document and, where it can be
located, the line and column of the offending key.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .errors import ConfigError

TASKS = ("solve", "poincare", "barrier", "bounds", "extend", "mc", "verify-all")
_FRACTIONAL_KINDS = ("fractional", "tempered")


def _locate(text: str, path: str):
    """Best-effort (line, col) of the last key on ``path`` in the raw JSON text."""
    pos = 0
    found = None
    for seg in path.split("."):
        if seg.isdigit():
            continue
        k = text.find(f'"{seg}"', pos)
        if k < 0:
            break
        found, pos = k, k + 1
    if found is None:
        return None
    line = text.count("\n", 0, found) + 1
    col = found - (text.rfind("\n", 0, found) + 1) + 1
    return line, col


class _Ctx:
    def __init__(self, text, source):
        self.text, self.source = text, source

    def fail(self, path, message):
        loc = _locate(self.text, path) if self.text else None
        where = f" (line {loc[0]}, column {loc[1]})" if loc else ""
        raise ConfigError(f"{message}{where} in {self.source}", path)

    def get(self, d, key, path, kind=None, default=...):
        if not isinstance(d, dict):
            self.fail(path, "expected an object")
        if key not in d:
            if default is ...:
                self.fail(f"{path}.{key}" if path else key, "missing required key")
            return default
        v = d[key]
        full = f"{path}.{key}" if path else key
        if kind is float:
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                self.fail(full, f"expected a number, got {v!r}")
            if not math.isfinite(v):
                self.fail(full, "expected a finite number")
            return float(v)
        if kind is int:
            if isinstance(v, bool) or not isinstance(v, int):
                self.fail(full, f"expected an integer, got {v!r}")
            return v
        if kind is str and not isinstance(v, str):
            self.fail(full, f"expected a string, got {v!r}")
        if kind is list and not isinstance(v, list):
            self.fail(full, f"expected a list, got {v!r}")
        if kind is dict and not isinstance(v, dict):
            self.fail(full, f"expected an object, got {v!r}")
        return v


# ------------------------------------------------------------------ validation

def _check_measure(ctx, spec, path, dim):
    kind = ctx.get(spec, "type", path, str)
    if kind == "atomic":
        atoms = ctx.get(spec, "atoms", path, list)
        if not atoms:
            ctx.fail(f"{path}.atoms", "need at least one atom")
        for i, a in enumerate(atoms):
            if not isinstance(a, list) or len(a) < 2:
                ctx.fail(f"{path}.atoms.{i}", "atom must be [point, weight]")
            w = a[-1]
            if isinstance(w, bool) or not isinstance(w, (int, float)) or not w > 0:
                ctx.fail(f"{path}.atoms.{i}", "atom weight must be a positive number")
        for key in ("tail", "tail_radius"):
            if key in spec:
                ctx.get(spec, key, path, float)
    elif kind == "integer-lattice":
        if dim != 1:
            ctx.fail(f"{path}.type", "integer-lattice series needs a one-dimensional domain")
        if "power" in spec and not ctx.get(spec, "power", path, float) > 1:
            ctx.fail(f"{path}.power", "power must exceed 1 for a finite series")
        if "K" in spec and ctx.get(spec, "K", path, int) < 1:
            ctx.fail(f"{path}.K", "K must be positive")
    elif kind in _FRACTIONAL_KINDS or kind == "compact":
        alpha = spec.get("alpha")
        if alpha is not None or kind in _FRACTIONAL_KINDS:
            a = ctx.get(spec, "alpha", path, float)
            if not 0 < a < 2:
                ctx.fail(f"{path}.alpha", f"alpha = {a} lies outside (0, 2)")
        if kind == "tempered" and not ctx.get(spec, "rate", path, float) > 0:
            ctx.fail(f"{path}.rate", "rate must be positive")
        if kind == "compact":
            if not ctx.get(spec, "r1", path, float) > 0:
                ctx.fail(f"{path}.r1", "support radius must be positive")
            prof = spec.get("profile", "quadratic-cap")
            if prof not in ("constant", "quadratic-cap"):
                ctx.fail(f"{path}.profile", f"unknown profile {prof!r}")
        if kind == "fractional" and spec.get("normalization", "inverse") not in ("inverse", "standard"):
            ctx.fail(f"{path}.normalization", "normalization must be 'inverse' or 'standard'")
    elif kind == "mixture":
        parts = ctx.get(spec, "parts", path, list)
        for i, p in enumerate(parts):
            _check_measure(ctx, p, f"{path}.parts.{i}", dim)
    else:
        ctx.fail(f"{path}.type", f"unknown measure type {kind!r}")


def _check_domain(ctx, spec, path):
    kind = ctx.get(spec, "type", path, str)
    if kind == "interval":
        a, b = ctx.get(spec, "a", path, float), ctx.get(spec, "b", path, float)
        if not b > a:
            ctx.fail(f"{path}.b", "interval needs b > a")
        return 1
    if kind == "box":
        lo, hi = ctx.get(spec, "lo", path, list), ctx.get(spec, "hi", path, list)
        if len(lo) != len(hi) or not 1 <= len(lo) <= 2:
            ctx.fail(f"{path}.hi", "lo and hi must have equal length 1 or 2")
        return len(lo)
    if kind in ("disk", "c11"):
        if kind == "c11" and spec.get("boundary", "disk") not in ("disk", "polar-graph"):
            ctx.fail(f"{path}.boundary", "boundary must be 'disk' or 'polar-graph'")
        if (kind == "disk" or spec.get("boundary", "disk") == "disk") and not ctx.get(spec, "r", path, float) > 0:
            ctx.fail(f"{path}.r", "radius must be positive")
        return 2
    if kind == "dilated":
        ctx.get(spec, "eps", path, float)
        return _check_domain(ctx, ctx.get(spec, "base", path, dict), f"{path}.base")
    ctx.fail(f"{path}.type", f"unknown domain type {kind!r}")


def _check_function(ctx, spec, path, dim):
    if spec is None:
        return
    kind = ctx.get(spec, "type", path, str)
    if kind == "constant":
        ctx.get(spec, "value", path, float)
    elif kind == "indicator":
        _check_domain(ctx, ctx.get(spec, "region", path, dict), f"{path}.region")
    elif kind == "polynomial":
        ctx.get(spec, "coeffs", path, list)
    elif kind == "gaussian":
        c = ctx.get(spec, "center", path, list, default=[0.0] * dim)
        if len(c) != dim:
            ctx.fail(f"{path}.center", f"center must have {dim} coordinates")
        if not ctx.get(spec, "width", path, float, default=1.0) > 0:
            ctx.fail(f"{path}.width", "width must be positive")
    elif kind == "reciprocal":
        pass
    elif kind == "csv":
        ctx.get(spec, "path", path, str)
    else:
        ctx.fail(f"{path}.type", f"unknown function type {kind!r}")


# ------------------------------------------------------------------ functions

def make_function(spec: Optional[dict], dim: int, base_dir: Path = Path(".")) -> Callable:
    """Callable mapping points (m, dim) to values for a named primitive."""
    if spec is None:
        return lambda x: np.zeros(len(np.asarray(x).reshape(-1, dim)))
    kind = spec["type"]

    def pts(x):
        return np.asarray(x, float).reshape(-1, dim)

    if kind == "constant":
        v = float(spec["value"])
        return lambda x: np.full(len(pts(x)), v)
    if kind == "indicator":
        from .geometry import domain_from_spec
        reg = domain_from_spec(spec["region"])
        v = float(spec.get("value", 1.0))
        inside = bool(spec.get("inside", True))
        return lambda x: np.where(reg.contains(pts(x)) == inside, v, 0.0)
    if kind == "polynomial":
        coeffs = spec["coeffs"]
        if dim == 1:
            c = np.asarray(coeffs, float)
            return lambda x: np.polynomial.polynomial.polyval(pts(x)[:, 0], c)
        terms = [(float(t[0]), int(t[1]), int(t[2])) for t in coeffs]
        return lambda x: sum(c * pts(x)[:, 0] ** a * pts(x)[:, 1] ** b for c, a, b in terms)
    if kind == "gaussian":
        c = np.asarray(spec.get("center", [0.0] * dim), float)
        w, amp = float(spec.get("width", 1.0)), float(spec.get("amplitude", 1.0))
        return lambda x: amp * np.exp(-np.sum((pts(x) - c) ** 2, axis=1) / (2 * w * w))
    if kind == "reciprocal":
        # 1/x₁ away from the origin; used for exterior data that decay slowly
        def recip(x):
            x1 = pts(x)[:, 0]
            with np.errstate(divide="ignore"):
                return np.where(np.abs(x1) > 0, 1.0 / np.where(x1 == 0, 1.0, x1), 0.0)
        return recip
    if kind == "csv":
        return _tabulated(base_dir / spec["path"], dim)
    raise ValueError(f"unknown function type {kind!r}")


def _tabulated(path: Path, dim: int):
    from scipy.spatial import cKDTree

    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].lstrip().startswith("#")]
    try:
        data = np.array([[float(v) for v in r] for r in rows])
    except ValueError:
        data = np.array([[float(v) for v in r] for r in rows[1:]])  # header line
    if data.ndim != 2 or data.shape[1] != dim + 1:
        raise ConfigError(f"{path}: expected {dim + 1} columns")
    if dim == 1:
        order = np.argsort(data[:, 0])
        xs, ys = data[order, 0], data[order, 1]
        return lambda x: np.interp(np.asarray(x, float).reshape(-1), xs, ys, left=0.0, right=0.0)
    tree = cKDTree(data[:, :dim])
    return lambda x: data[tree.query(np.asarray(x, float).reshape(-1, dim))[1], dim]


# ------------------------------------------------------------------ config object

@dataclass
class RunConfig:
    raw: dict
    source: str
    base_dir: Path
    dim: int
    name: str
    tasks: list
    seed: int
    h: float
    R_trunc: float
    basis: str
    tolerances: dict = field(default_factory=dict)
    expect: dict = field(default_factory=dict)

    @property
    def measure_spec(self):
        return self.raw["measure"]

    @property
    def domain_spec(self):
        return self.raw["domain"]

    def section(self, name) -> dict:
        return dict(self.raw.get(name, {}))

    def build_measure(self):
        from .levy import measure_from_spec
        return measure_from_spec(self.measure_spec, self.dim)

    def build_domain(self):
        from .geometry import domain_from_spec
        return domain_from_spec(self.domain_spec)

    def function(self, key: str, section: str = "problem") -> Callable:
        return make_function(self.raw.get(section, {}).get(key), self.dim, self.base_dir)

    def tol(self, key: str, default: float) -> float:
        return float(self.tolerances.get(key, default))


def parse_config(text: str, source: str = "<string>", base_dir: Path = Path(".")) -> RunConfig:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc.msg} (line {exc.lineno}, column {exc.colno}) in {source}")
    ctx = _Ctx(text, source)
    if not isinstance(raw, dict):
        ctx.fail("", "top level must be an object")
    dim = _check_domain(ctx, ctx.get(raw, "domain", "", dict), "domain")
    _check_measure(ctx, ctx.get(raw, "measure", "", dict), "measure", dim)
    grid = ctx.get(raw, "grid", "", dict, default={})
    h = ctx.get(grid, "h", "grid", float, default=1 / 32)
    R = ctx.get(grid, "R_trunc", "grid", float, default=1.0)
    basis = ctx.get(grid, "basis", "grid", str, default="P0").upper()
    if not h > 0:
        ctx.fail("grid.h", "h must be positive")
    if R < 0:
        ctx.fail("grid.R_trunc", "R_trunc must be nonnegative")
    if basis not in ("P0", "P1"):
        ctx.fail("grid.basis", f"unknown basis {basis!r}")
    problem = ctx.get(raw, "problem", "", dict, default={})
    for key in ("f", "g"):
        _check_function(ctx, problem.get(key), f"problem.{key}", dim)
    tasks = ctx.get(raw, "tasks", "", list, default=[])
    for i, t in enumerate(tasks):
        if t not in TASKS:
            ctx.fail(f"tasks.{i}", f"unknown task {t!r}; choose from {', '.join(TASKS)}")
    seed = ctx.get(raw, "seed", "", int, default=0)
    tolerances = ctx.get(raw, "tolerances", "", dict, default={})
    for k in tolerances:
        ctx.get(tolerances, k, "tolerances", float)
    expect = ctx.get(raw, "expect", "", dict, default={})
    for k, v in expect.items():
        if not isinstance(v, dict) or not ({"value", "equals", "max", "min"} & set(v)):
            ctx.fail(f"expect.{k}", "expectation needs one of value/equals/max/min")
    ext = raw.get("extend", {})
    if isinstance(ext, dict):
        for i, fs in enumerate(ext.get("functions", [])):
            _check_function(ctx, fs, f"extend.functions.{i}", dim)
    return RunConfig(raw, source, base_dir, dim, str(raw.get("name", Path(source).stem)), list(tasks),
                     seed, h, R, basis, tolerances, expect)


def load_config(path) -> RunConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {p}: {exc.strerror}")
    return parse_config(text, str(p), p.parent)
