"""Command line entry point: ``nld <task> --config <path> [--seed N] [--out DIR]``.

Exit codes: 0 all checks passed, 1 a check failed, 2 configuration error,
3 admissibility error, 4 solver failure.

Numerical modules are imported inside :func:`main` so that ``NLD_THREADS`` can
cap the BLAS thread pools before numpy loads.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
import time
from pathlib import Path

from .errors import (AdmissibilityError, ConfigError, DivergenceError, NLDError, OutOfTubeError,
                     PathCapError, SolverError)

EXIT_OK, EXIT_FAIL, EXIT_PARSE, EXIT_ADMISSIBILITY, EXIT_SOLVER = 0, 1, 2, 3, 4
COMMANDS = ("solve", "poincare", "barrier", "bounds", "extend", "mc", "verify-all", "run")
_THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")

log = logging.getLogger("nld")


def _cap_threads():
    n = os.environ.get("NLD_THREADS")
    if n:
        for var in _THREAD_VARS:
            os.environ[var] = n
    return n


def _jsonable(x):
    import numpy as np

    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, np.generic):
        return _jsonable(x.item())
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    return x


class Run:
    """State shared by the tasks of one configuration."""

    def __init__(self, cfg, out: Path, seed: int):
        self.cfg, self.out, self.seed = cfg, out, seed
        self.measure = cfg.build_measure()
        self.domain = cfg.build_domain()
        self.report: dict = {"name": cfg.name, "seed": seed}
        self.timings: dict = {}
        self.checks: list = []
        self._grid = self._K = self._solution = None

    # ---- lazily built pieces
    @property
    def grid(self):
        if self._grid is None:
            from .geometry import make_grid
            self._grid = make_grid(self.domain, self.cfg.h, self.cfg.R_trunc, self.cfg.basis, self.measure)
        return self._grid

    @property
    def K(self):
        if self._K is None:
            from .form import assemble
            t = time.perf_counter()
            self._K = assemble(self.measure, self.grid)
            self.timings["assemble_s"] = time.perf_counter() - t
        return self._K

    def data(self, f_fn=None, g_fn=None):
        import numpy as np
        from .form import GridFunction

        g = self.grid
        f_fn = f_fn or self.cfg.function("f")
        g_fn = g_fn or self.cfg.function("g")
        f = GridFunction(g, np.where(g.interior, f_fn(g.coords), 0.0))
        gv = GridFunction(g, np.where(g.interior, 0.0, g_fn(g.coords)))
        return f, gv

    def solve(self, f=None, g=None, certify=False):
        from .solver import solve

        if f is None:
            f, g = self.data()
        return solve(self.measure, self.domain, self.grid, f, g, tol=self.cfg.tol("solver", 1e-10),
                     precond="jacobi", K=self.K, certify=certify)

    @property
    def solution(self):
        if self._solution is None:
            t = time.perf_counter()
            self._solution = self.solve(certify=bool(self.cfg.section("solve").get("certify", False)))
            self.timings["solve_s"] = time.perf_counter() - t
        return self._solution

    def check(self, name, passed, detail=""):
        self.checks.append({"name": name, "pass": bool(passed), "detail": detail})


# ------------------------------------------------------------------ tasks

def task_solve(run: Run):
    from .solver import verify_weak_identity

    rep = run.solution
    f, _ = run.data()
    body = rep.to_json()
    body.pop("timings", None)
    body["weak_residual"] = verify_weak_identity(rep, run.K, f, trials=10, seed=run.seed)
    run.report["solve"] = body
    run.check("solve.weak_identity", body["weak_residual"] <= run.cfg.tol("weak", 1e-8),
              f"residual {body['weak_residual']:.3e}")
    if rep.linf_bound_check and rep.linf_bound_check.get("holds") is not None:
        run.check("solve.linf_certificate", rep.linf_bound_check["holds"])
    g = run.grid
    path = run.out / "solution.csv"
    cols = [f"x{i + 1}" for i in range(g.dim)] + ["value"]
    with open(path, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for x, v in zip(g.coords, rep.solution.coeffs):
            fh.write(",".join(f"{c:.17g}" for c in (*x, v)) + "\n")
    run.report["solve"]["csv"] = path.name


def task_poincare(run: Run):
    from .principles import poincare_constructive, poincare_spectral

    K = run.K
    est = poincare_spectral(K, cross_check=run.grid.n_interior <= 1500)
    body = {"spectral": est.to_json()}
    try:
        body["constructive"] = poincare_constructive(run.measure, run.domain).to_json()
    except (NLDError, ValueError) as exc:
        body["constructive"] = {"note": str(exc)}
    run.report["poincare"] = body
    lam = est.lambda_min
    run.check("poincare.positive", lam > 0, f"lambda_min {lam:.6g}")
    if est.lambda_min_eigh is not None:
        run.check("poincare.eigh_agreement", abs(lam - est.lambda_min_eigh) <= 1e-6 * abs(lam))
    cc = body["constructive"].get("constructive_constant")
    if cc is not None:
        run.check("poincare.constructive_dominates", est.spectral_constant <= cc * (1 + 1e-9),
                  f"spectral {est.spectral_constant:.6g} vs constructive {cc:.6g}")


def task_barrier(run: Run):
    from .principles import barrier

    b = barrier(run.measure, run.domain, h=run.cfg.h, basis=run.cfg.basis)
    run.report["barrier"] = b.to_json()
    run.check("barrier.certified", b.certified, f"min Lw = {b.lower_Lw:.6g}")


def task_bounds(run: Run):
    from .principles import linf_bound

    f, g = run.data()
    opts = run.cfg.section("bounds")
    eps = opts.get("eps_schedule")
    use_grid = run.grid.dim == 1 or bool(opts.get("grid_points", False))
    kw = {"eps_schedule": eps, "seed": run.seed}
    if not use_grid:
        body = _bounds_without_grid(run, f, g, kw)
    else:
        body = linf_bound(run.solution, run.measure, run.domain, f, g, **kw)
    run.report["bounds"] = body
    if body.get("holds") is not None:
        run.check("bounds.linf", body["holds"], f"max|u| {body['max_abs_solution']:.6g} <= {body['bound']:.6g}")
    run.check("bounds.monotone", body["monotone"])
    run.check("bounds.gap", body["gap"] >= -1e-12, f"gap {body['gap']:.6g}")


def _bounds_without_grid(run, f, g, kw):
    import numpy as np
    from .principles import effective_bound

    eb = effective_bound(run.measure, run.domain, **kw)
    I = run.grid.interior
    u = run.solution.solution.coeffs
    umax = float(np.max(np.abs(u[I])))
    fmax = float(np.max(np.abs(f.coeffs[I])))
    gmax = float(np.max(np.abs(g.coeffs[~I]))) if (~I).any() else 0.0
    out = dict(eb, max_abs_solution=umax)
    if eb["C_eff_inverse"] > 0:
        out["bound"] = eb["C_eff"] * fmax + gmax
        out["holds"] = bool(umax <= out["bound"] + 1e-10)
    else:
        out["holds"] = None
    return out


def task_extend(run: Run):
    import numpy as np
    from .config import make_function
    from .extension import (ReflectionMap, build_cutoff, extend, kernel_scaling_check,
                            lipschitz_probe, measure_distortion_probe)
    from .form import GridFunction

    opts = run.cfg.section("extend")
    rmap = ReflectionMap(run.domain)
    sizes = opts.get("pair_counts", [250, 500, 1000])
    probes = [lipschitz_probe(rmap, int(n), run.seed + i) for i, n in enumerate(sizes)]
    alphas = [p.alpha_hat for p in probes]
    stable = max(alphas) <= 1.1 * min(alphas)
    a_hat = max(alphas)
    dist = measure_distortion_probe(rmap, int(opts.get("cells", 32)), run.seed)
    body = {"tube_width": rmap.eps, "lipschitz": [p.to_json() for p in probes], "alpha_hat": a_hat,
            "C_prime": dist["C_prime"]}
    kern = getattr(run.measure, "kernel", None)
    if kern is None:
        raise AdmissibilityError("the extension task needs a radial measure")
    sc = kernel_scaling_check(kern, a_hat, n=run.measure.n, cap=float(opts.get("cap", 1e3)))
    body["scaling"] = sc.to_json()
    run.check("extend.lipschitz_stable", stable, f"alpha_hat {min(alphas):.6g}..{max(alphas):.6g}")
    run.check("extend.scaling", sc.passed, f"C_alpha {sc.C_alpha:.6g}")
    if not sc.passed:
        run.report["extend"] = body
        return
    grid = run.grid
    cut = build_cutoff(run.domain, rmap, grid)
    body["cutoff_linear_bound"] = cut.linear_bound
    specs = opts.get("functions") or [{"type": "constant", "value": 1.0},
                                      {"type": "gaussian", "width": 0.5}]
    results = []
    for spec in specs:
        fn = make_function(spec, grid.dim, run.cfg.base_dir)
        g = GridFunction(grid, np.where(grid.interior, 0.0, fn(grid.coords)))
        res = extend(g, rmap, cut, run.measure, K=run.K, g_fn=fn, alpha_hat=a_hat)
        results.append(res.to_json())
    body["results"] = results
    ratios = [r["ratio"] for r in results]
    body["max_ratio"] = max(ratios)
    run.report["extend"] = body
    cap = opts.get("ratio_cap")
    run.check("extend.ratio_finite", all(math.isfinite(r) for r in ratios))
    if cap is not None:
        run.check("extend.ratio_bounded", max(ratios) <= float(cap), f"max ratio {max(ratios):.6g}")


def task_mc(run: Run):
    import numpy as np
    from .montecarlo import feynman_kac, jump_process

    opts = run.cfg.section("mc")
    x0 = np.asarray(opts.get("x0", run.domain.center), float).reshape(run.domain.dim)
    n_paths = int(opts.get("n_paths", 10_000))
    spec = jump_process(run.measure, float(opts.get("delta", 0.0)))
    est, se = feynman_kac(spec, run.domain, x0, run.cfg.function("f"), run.cfg.function("g"),
                          n_paths, run.seed, int(opts.get("max_jumps", 1_000_000)))
    body = {"estimate": est, "stderr": se, "n_paths": n_paths, "seed": run.seed, "x0": x0.tolist(),
            "rate": spec.rate, "delta": spec.delta}
    if opts.get("compare", True):
        g = run.grid
        u = run.solution.solution.coeffs
        j = int(np.argmin(np.linalg.norm(g.coords - x0, axis=1)))
        disc = run.cfg.tol("mc_discretization", 1e-3)
        body["grid_value"] = float(u[j])
        body["difference"] = abs(est - float(u[j]))
        run.check("mc.agreement", body["difference"] <= 3 * se + disc,
                  f"|{est:.6g} - {u[j]:.6g}| vs 3 se + {disc:g}")
    run.report["mc"] = body


def task_verify_all(run: Run):
    """Invariant suites on the configured instance."""
    import numpy as np
    from .form import GridFunction, energy, form_value, form_via_delta_decomposition
    from .principles import check_comparison, check_weak_max_principle, m_matrix_report
    from .solver import restriction_check

    rng = np.random.default_rng(run.seed)
    K, g = run.K, run.grid
    I = g.interior
    body = {}
    # symmetry of the form
    a, b = rng.standard_normal(g.size), rng.standard_normal(g.size)
    s1, s2 = float(a @ K.matvec(b)), float(b @ K.matvec(a))
    body["symmetry_defect"] = abs(s1 - s2) / max(abs(s1), 1e-300)
    run.check("verify.symmetry", body["symmetry_defect"] <= 1e-12)
    # weak maximum and comparison principles
    one = GridFunction(g, np.where(I, 1.0, 0.0))
    zero = GridFunction.zeros(g)
    u1 = run.solve(one, zero)
    wm = check_weak_max_principle(u1)
    body["weak_max"] = wm
    run.check("verify.weak_max_principle", wm["pass"], f"min {wm['min']:.3e}")
    two = GridFunction(g, np.where(I, 2.0, 0.0))
    cmp_ = check_comparison(run.solve(two, zero), u1)
    body["comparison"] = cmp_
    run.check("verify.comparison", cmp_["pass"])
    # energy minimality
    f, gd = run.data()
    rep = run.solution
    phi = GridFunction(g, np.where(I, rng.uniform(-1, 1, g.size), 0.0))
    lam = 0.5
    E0 = energy(rep.solution, f, K)
    E1 = energy(rep.solution + lam * phi, f, K)
    want = 0.5 * lam * lam * form_value(K, phi, phi)
    body["energy_defect"] = abs(E1 - E0 - want) / abs(want)
    run.check("verify.energy_minimality", body["energy_defect"] <= run.cfg.tol("energy", 1e-9),
              f"relative defect {body['energy_defect']:.3e}")
    # shift decomposition of the form
    if g.size <= run.cfg.raw.get("verify", {}).get("delta_limit", 5000):
        u = GridFunction(g, rng.uniform(-1, 1, g.size) * I)
        direct = form_value(K, u, u)
        dec = form_via_delta_decomposition(run.measure, u)
        body["delta_decomposition_defect"] = abs(dec - direct) / abs(direct)
        run.check("verify.delta_decomposition",
                  body["delta_decomposition_defect"] <= run.cfg.tol("decomposition", 1e-6),
                  f"relative defect {body['delta_decomposition_defect']:.3e}")
    # restriction to a subdomain
    sub = _inner_subdomain(run.domain)
    body["restriction_residual"] = restriction_check(rep, K, f, sub, trials=10, seed=run.seed)
    run.check("verify.restriction", body["restriction_residual"] <= run.cfg.tol("weak", 1e-8))
    if g.basis == "P0":
        mm = m_matrix_report(K)
        body["m_matrix"] = mm
        run.check("verify.m_matrix", mm["offdiag_nonpositive"] and mm["row_sum_nonnegative"])
    run.report["verify"] = body


def _inner_subdomain(domain):
    from .geometry import Box, Disk, Interval

    c = domain.center
    if isinstance(domain, Interval):
        q = 0.25 * (domain.b - domain.a)
        return Interval(domain.a + q, domain.b - q)
    if isinstance(domain, Disk):
        return Disk(tuple(domain.center_), 0.5 * domain.r)
    lo, hi = domain.bbox
    q = 0.25 * (hi - lo)
    return Box(tuple(lo + q), tuple(hi - q)) if len(c) > 1 else Interval(float(lo[0] + q[0]), float(hi[0] - q[0]))


TASK_FUNCS = {"solve": task_solve, "poincare": task_poincare, "barrier": task_barrier,
              "bounds": task_bounds, "extend": task_extend, "mc": task_mc, "verify-all": task_verify_all}


def _expectations(run: Run):
    for key, spec in run.cfg.expect.items():
        node = run.report
        try:
            for part in key.split("."):
                node = node[int(part)] if isinstance(node, list) else node[part]
        except (KeyError, IndexError, ValueError, TypeError):
            run.check(f"expect.{key}", False, "value missing from report")
            continue
        if "equals" in spec:
            run.check(f"expect.{key}", node == spec["equals"], f"{node!r}")
            continue
        ok, detail = True, f"{node!r}"
        if "value" in spec:
            tol = float(spec.get("tol", 1e-8))
            ok = isinstance(node, (int, float)) and abs(node - float(spec["value"])) <= tol
            detail = f"{node!r} vs {spec['value']} ± {tol:g}"
        if "max" in spec:
            ok = ok and node <= float(spec["max"])
        if "min" in spec:
            ok = ok and node >= float(spec["min"])
        run.check(f"expect.{key}", ok, detail)


def execute(cfg, tasks, out: Path, seed: int, stream=None) -> int:
    """Run ``tasks`` for one configuration and write the artifacts into ``out``."""
    stream = sys.stdout if stream is None else stream
    out.mkdir(parents=True, exist_ok=True)
    run = Run(cfg, out, seed)
    for t in tasks:
        t0 = time.perf_counter()
        TASK_FUNCS[t](run)
        run.timings[f"{t}_s"] = time.perf_counter() - t0
    if tasks:
        _expectations(run)
    run.report["checks"] = run.checks
    (out / "report.json").write_text(json.dumps(_jsonable(run.report), indent=2, sort_keys=True) + "\n")
    (out / "timings.json").write_text(json.dumps(_jsonable(run.timings), indent=2, sort_keys=True) + "\n")
    lines = [f"{'PASS' if c['pass'] else 'FAIL'} {cfg.name} {c['name']}"
             + (f" ({c['detail']})" if c["detail"] else "") for c in run.checks]
    (out / "summary.txt").write_text("".join(line + "\n" for line in lines))
    for line in lines:
        print(line, file=stream)
    return EXIT_OK if all(c["pass"] for c in run.checks) else EXIT_FAIL


def _corpus_paths():
    from importlib import resources

    root = resources.files("nld") / "corpus"
    return sorted((Path(str(p)) for p in root.iterdir() if p.name.endswith(".json")), key=lambda p: p.name)


def _dispatch(args) -> int:
    from .config import load_config

    if args.config is None:
        if args.task not in ("verify-all", "run"):
            raise ConfigError("--config is required for this task")
        paths = _corpus_paths()
    else:
        p = Path(args.config)
        paths = sorted(p.glob("*.json")) if p.is_dir() else [p]
    cfgs = [load_config(p) for p in paths]  # parse everything before running anything
    code = EXIT_OK
    for cfg in cfgs:
        seed = cfg.seed if args.seed is None else args.seed
        out = Path(args.out) / cfg.name if len(cfgs) > 1 else Path(args.out)
        if args.task == "run":
            tasks = cfg.tasks
        elif args.task == "verify-all" and len(cfgs) > 1:
            tasks = list(dict.fromkeys(cfg.tasks + ["verify-all"]))
        else:
            tasks = [args.task]
        code = max(code, execute(cfg, tasks, out, seed))
    return code


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="nld", description="Nonlocal Dirichlet problems: solve and verify.")
    parser.add_argument("task", choices=COMMANDS)
    parser.add_argument("--config", help="JSON run configuration, or a directory of them")
    parser.add_argument("--seed", type=int, default=None, help="override the configured seed")
    parser.add_argument("--out", default="nld-out", help="output directory (default: nld-out)")
    parser.add_argument("-v", "--verbose", action="store_true")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    _cap_threads()
    try:
        return _dispatch(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (AdmissibilityError, DivergenceError, OutOfTubeError) as exc:
        print(f"admissibility error: {exc}", file=sys.stderr)
        return EXIT_ADMISSIBILITY
    except (SolverError, PathCapError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
