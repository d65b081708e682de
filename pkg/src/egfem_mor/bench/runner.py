"""Benchmark drivers: snapshot generation, reduction sweeps and timing."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..errors import EgfemError, GradientUndefined, RankExceedsData
from ..fom import build_fom
from ..meshfe import build_space, generate_mesh, load_msh
from ..reduction import SnapshotSet, deim, pod, thin_svd
from ..rom import project
from ..solve import SolverConfig, integrate, newton
from .config import BenchmarkConfig
from .metrics import error_metrics, mean_error, observed_rates, seminorm_error
from .problems import (
    PROBLEMS,
    burgers_problem,
    evaluation_grid,
    training_grid,
)

log = logging.getLogger(__name__)


@dataclass
class Report:
    """Rows of one benchmark run plus singular values and side tables."""

    benchmark: str
    rows: list = field(default_factory=list)
    singular_values: dict = field(default_factory=dict)
    tables: dict = field(default_factory=dict)

    KEY = ("formulation", "model", "n_u", "n_f")

    def summary(self):
        """Arithmetic means of the numeric columns per (formulation, model,
        n_u, n_f), in first-appearance order. NaN entries are skipped."""
        groups = {}
        for r in self.rows:
            groups.setdefault(tuple(r[k] for k in self.KEY), []).append(r)
        out = []
        for key, rows in groups.items():
            s = dict(zip(self.KEY, key))
            s["samples"] = len(rows)
            s["failures"] = sum(1 for r in rows if r.get("status", "ok") != "ok")
            for col in rows[0]:
                if col in self.KEY or col in ("sample", "status"):
                    continue
                vals = [r[col] for r in rows if isinstance(r[col], (int, float))]
                vals = [v for v in vals if not math.isnan(v)]
                if vals and col not in ("mu1", "mu2", "t"):
                    s[col] = float(np.mean(vals))
            out.append(s)
        return out

    def sigma_rows(self):
        rows = []
        for (form, kind), sig in self.singular_values.items():
            for i, s in enumerate(sig, 1):
                rows.append({"formulation": form, "kind": kind, "index": i, "sigma": float(s)})
        return rows


def load_mesh(spec):
    """Mesh from a ``.msh`` path or a generator spec."""
    if isinstance(spec, str) and spec.endswith(".msh"):
        return load_msh(spec)
    return generate_mesh(spec)


def rom_variants(formulation):
    """Reduced formulations available for a full-order formulation."""
    if formulation == "SGA":
        return (("ROM", "SGA_ROM"), ("cROM", "SGA_CROM"))
    if formulation == "MLSGA":
        return (("ROM", "MLSGA_ROM"),)
    return (("ROM", "EGFEM_ROM"), ("cROM", "EGFEM_CROM"))


def _map(fn, items, threads):
    if threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


def solve_stationary(model, tau, config=None):
    cfg = config or SolverConfig.stationary()
    return newton(lambda x: model.residual(x, tau), lambda x: model.jacobian(x, tau), cfg, n=model.n)


def solve_transient(model, t_grid, config=None):
    cfg = config or SolverConfig.transient()
    return integrate(model.mass, model.rhs,
                     model.rhs_jacobian, model.initial_value(), (t_grid[0], t_grid[-1]),
                     t_grid, cfg)


def stationary_snapshots(fom, taus, config=None, threads=1):
    """Solution and nonlinearity snapshots at converged solutions."""
    results = _map(lambda tau: solve_stationary(fom, tau, config), list(taus), threads)
    Y = np.column_stack([r.solution for r in results])
    labels = tuple(tuple(np.atleast_1d(t).tolist()) for t in taus)
    nl = {}
    for r, tau in zip(results, taus):
        for k, v in fom.nonlinear_snapshot(r.solution, tau).items():
            nl.setdefault(k, []).append(v)
    nl = {k: SnapshotSet(np.column_stack(v), labels, "nonlinearity") for k, v in nl.items()}
    return SnapshotSet(Y, labels, "solution"), nl, results


def transient_snapshots(fom, t_grid, config=None):
    traj = solve_transient(fom, t_grid, config)
    labels = tuple(float(t) for t in t_grid)
    nl = {}
    for i, t in enumerate(t_grid):
        for k, v in fom.nonlinear_snapshot(traj.y[:, i], t).items():
            nl.setdefault(k, []).append(v)
    nl = {k: SnapshotSet(np.column_stack(v), labels, "nonlinearity") for k, v in nl.items()}
    return SnapshotSet(traj.y, labels, "solution"), nl, traj


def reduced_models(fom, formulation, basis, ops=None):
    """Reduced variants of ``fom`` on ``basis``; the cROM needs ``ops``."""
    models = {}
    for tag, name in rom_variants(formulation):
        if tag == "cROM":
            if ops is None:
                continue
            models[tag] = project(name, basis, fom, ops)
        else:
            models[tag] = project(name, basis, fom)
    return models


def build_reduced(fom, formulation, solutions, nonlinear, n_u, n_f):
    """POD basis and all reduced variants of ``fom`` for one ``(n_u, n_f)``."""
    basis = pod(solutions, rank=n_u)
    needs_deim = any(tag == "cROM" for tag, _ in rom_variants(formulation))
    ops = {k: deim(v, n_f) for k, v in nonlinear.items()} if needs_deim else None
    return basis, reduced_models(fom, formulation, basis, ops)


def _foms(cfg, space, problem, cache_dir=None):
    foms = {}
    for f in cfg.formulations:
        try:
            foms[f] = build_fom(f, space, problem, cache_dir)
        except GradientUndefined as exc:
            log.warning("skipping %s: %s", f, exc)
    return foms


def parameter_grids(cfg, box):
    """Training grid (endpoints included) and disjoint cell-centred
    evaluation grid."""
    return (training_grid(box, math.isqrt(cfg.n_train)),
            evaluation_grid(box, math.isqrt(cfg.n_eval)))


@dataclass
class Setup:
    """Problem, space and full-order models of one benchmark configuration."""

    config: BenchmarkConfig
    problem: object
    space: object
    foms: dict

    @classmethod
    def create(cls, cfg, mesh=None, cache_dir=None):
        problem = PROBLEMS[cfg.benchmark]()
        if cfg.benchmark == "burgers":
            problem = burgers_problem(cfg.t_end)
        mesh = mesh if mesh is not None else load_mesh(cfg.mesh)
        space = build_space(mesh, 1)
        return cls(cfg, problem, space, _foms(cfg, space, problem, cache_dir))

    def taus(self):
        if self.problem.time_dependent:
            return time_grid(self.config.t_end, self.config.dt)
        return parameter_grids(self.config, self.problem.param_domain)[0]


def offline_snapshots(setup, solver=None):
    """Training snapshots per formulation: ``{form: (solutions, nonlinear)}``."""
    out = {}
    for form, fom in setup.foms.items():
        if setup.problem.time_dependent:
            Y, nl, _ = transient_snapshots(fom, setup.taus(), solver)
        else:
            Y, nl, _ = stationary_snapshots(fom, setup.taus(), solver, setup.config.threads)
        out[form] = (Y, nl)
    return out


def offline_reduction(setup, snapshots):
    """POD bases (largest requested size; POD modes nest) and DEIM operators
    per DEIM size: ``{form: (basis, {n_f: ops})}``."""
    cfg = setup.config
    out = {}
    for form, (Y, nl) in snapshots.items():
        n_max = max(n for n, _ in cfg.size_pairs())
        n_max = min(n_max, min(Y.shape))
        basis = pod(Y, rank=n_max)
        ops = {}
        if any(tag == "cROM" for tag, _ in rom_variants(form)) and nl:
            for _, n_f in cfg.size_pairs():
                try:
                    ops[n_f] = {k: deim(v, n_f) for k, v in nl.items()}
                except EgfemError as exc:
                    log.warning("%s n_f=%d: %s", form, n_f, exc)
        out[form] = (basis, ops)
    return out


def _sized_models(form, fom, basis, ops, n_u, n_f):
    if n_u > basis.n:
        raise RankExceedsData(f"{form}: {n_u} modes requested, {basis.n} available")
    return reduced_models(fom, form, basis.truncate(n_u), ops.get(n_f))


def evaluate_parametric(setup, snapshots, reduced, solver=None):
    """Online phase of a stationary benchmark on the evaluation grid."""
    cfg = setup.config
    solver = solver or SolverConfig.stationary()
    _, evals = parameter_grids(cfg, setup.problem.param_domain)
    report = Report(cfg.benchmark)
    report.tables["eval"] = evals
    ref = setup.foms.get("SGA") or build_fom("SGA", setup.space, setup.problem)
    ref_eval = _map(lambda mu: _safe_solve(ref, mu, solver), list(evals), cfg.threads)
    for form, fom in setup.foms.items():
        Y, nl = snapshots[form]
        report.singular_values[(form, "solution")] = reduced[form][0].sigma
        for k, s in nl.items():
            report.singular_values[(form, f"nonlinear_{k}")] = thin_svd(s.matrix)[1]
        full = _map(lambda mu: _safe_solve(fom, mu, solver), list(evals), cfg.threads)
        _emit(report, form, "FOM", fom.n, 0, evals, full, full, ref_eval)
        basis, ops = reduced[form]
        for n_u, n_f in cfg.size_pairs():
            try:
                models = _sized_models(form, fom, basis, ops, n_u, n_f)
            except EgfemError as exc:
                log.warning("%s n_u=%d n_f=%d: %s", form, n_u, n_f, exc)
                continue
            for tag, rm in models.items():
                red = _map(lambda mu: _safe_solve(rm, mu, solver, prolong=True), list(evals),
                           cfg.threads)
                _emit(report, form, tag, n_u, n_f if tag == "cROM" else 0, evals, red, full,
                      ref_eval)
    return report


def run_parametric(cfg, solver=None):
    """Train/evaluate protocol for a stationary parametric benchmark."""
    setup = Setup.create(cfg)
    snaps = offline_snapshots(setup, solver)
    return evaluate_parametric(setup, snaps, offline_reduction(setup, snaps), solver)


def _safe_solve(model, tau, solver, prolong=False):
    try:
        res = solve_stationary(model, tau, solver)
    except EgfemError as exc:
        return None, str(exc)
    u = model.prolong(res.solution) if prolong else res.solution
    return (u, res), "ok"


def _emit(report, form, tag, n_u, n_f, evals, results, full, ref):
    nan = float("nan")
    for i, mu in enumerate(evals):
        (out, status), (f_out, _), (r_out, _) = results[i], full[i], ref[i]
        row = {"benchmark": report.benchmark, "formulation": form, "model": tag, "n_u": n_u,
               "n_f": n_f, "sample": i, "mu1": float(mu[0]), "mu2": float(mu[1])}
        if out is None:
            row.update(error_fom=nan, error_sga=nan, iterations=nan, time_per_iteration=nan,
                       status=status)
        else:
            u, res = out
            row["error_fom"] = error_metrics(f_out[0], u) if f_out is not None else nan
            row["error_sga"] = error_metrics(r_out[0], u) if r_out is not None else nan
            row["iterations"] = res.iterations
            row["time_per_iteration"] = res.time_per_iteration
            row["status"] = "ok"
        report.rows.append(row)


def run_semilinear(config=None):
    return run_parametric(config or BenchmarkConfig.defaults("semilinear"))


def run_minsurface(config=None):
    return run_parametric(config or BenchmarkConfig.defaults("minsurface"))


def time_grid(t_end, dt):
    n = int(round(t_end / dt))
    return np.linspace(0.0, n * dt, n + 1)


def discretization_study(divisions, t_grid, formulation="SGA", solver=None, every=10):
    """Time-averaged relative H1-seminorm error of the Burgers FOM against the
    manufactured solution on refined square meshes.

    Returns rows with ``h``, ``n_u`` and ``error``; the error is averaged over
    every ``every``-th output time.
    """
    prob = burgers_problem(t_grid[-1])
    rows = []
    for n in divisions:
        space = build_space(generate_mesh(("unit_square", n)), 1)
        fom = build_fom(formulation, space, prob)
        traj = solve_transient(fom, t_grid, solver)
        idx = range(0, len(t_grid), every)
        err = np.mean([seminorm_error(space, traj.y[:, i], prob.meta["exact_grad"], t_grid[i])
                       for i in idx])
        rows.append({"formulation": formulation, "h": 1.0 / n, "n_u": fom.n, "error": float(err)})
    if len(rows) > 1:
        rates = observed_rates([r["h"] for r in rows], [r["error"] for r in rows])
        for r, rate in zip(rows[1:], rates):
            r["rate"] = float(rate)
    return rows


def evaluate_burgers(setup, snapshots, reduced, solver=None, every=10):
    """Reduction, projection and total errors (relative energy norms averaged
    over the output times) for every formulation and reduced size."""
    cfg = setup.config
    t_grid = setup.taus()
    space = setup.space
    exact_grad = setup.problem.meta["exact_grad"]
    sample_idx = list(range(0, len(t_grid), every))
    report = Report("burgers")

    def total(U):
        return float(np.mean([seminorm_error(space, U[:, i], exact_grad, t_grid[i])
                              for i in sample_idx]))

    for form, fom in setup.foms.items():
        Y, nl = snapshots[form]
        basis, ops = reduced[form]
        report.singular_values[(form, "solution")] = basis.sigma
        for k, s in nl.items():
            report.singular_values[(form, f"nonlinear_{k}")] = thin_svd(s.matrix)[1]
        U = Y.matrix
        report.rows.append({
            "benchmark": "burgers", "formulation": form, "model": "FOM", "n_u": fom.n,
            "n_f": 0, "reduction_error": 0.0, "projection_error": 0.0,
            "total_error": total(U), "iterations": float("nan"),
            "time_per_iteration": float("nan"), "status": "ok",
        })
        for n_u, n_f in cfg.size_pairs():
            try:
                models = _sized_models(form, fom, basis, ops, n_u, n_f)
            except EgfemError as exc:
                log.warning("%s n_u=%d n_f=%d: %s", form, n_u, n_f, exc)
                continue
            V = basis.v[:, :n_u]
            proj_err = mean_error(U, V @ (V.T @ U), "energy", fom.K, relative=True)
            for tag, rm in models.items():
                row = {"benchmark": "burgers", "formulation": form, "model": tag, "n_u": n_u,
                       "n_f": n_f if tag == "cROM" else 0, "projection_error": proj_err}
                try:
                    tr = solve_transient(rm, t_grid, solver)
                except EgfemError as exc:
                    row.update(reduction_error=float("nan"), total_error=float("nan"),
                               iterations=float("nan"), time_per_iteration=float("nan"),
                               status=str(exc))
                    report.rows.append(row)
                    continue
                Ur = V @ tr.y
                row["reduction_error"] = mean_error(U, Ur, "energy", fom.K, relative=True)
                row["total_error"] = total(Ur)
                row.update(iterations=tr.newton_iterations,
                           time_per_iteration=tr.time_per_iteration, status="ok")
                report.rows.append(row)
    if cfg.refinement:
        report.tables["discretization"] = discretization_study(cfg.refinement, t_grid,
                                                               solver=solver, every=every)
    return report


def run_burgers(config=None, solver=None, every=10):
    """Snapshots, reduction sweep and refinement study for Burgers."""
    setup = Setup.create(config or BenchmarkConfig.defaults("burgers"))
    snaps = offline_snapshots(setup, solver)
    return evaluate_burgers(setup, snaps, offline_reduction(setup, snaps), solver, every)


def timing_study(models, taus, solver=None, repetitions=5, warmup=1):
    """Mean wall time per Newton iteration for each model.

    Every model is solved ``warmup`` times untimed, then ``repetitions`` times
    over all ``taus``; the mean is taken over all recorded iterations.
    """
    solver = solver or SolverConfig.stationary()
    out = {}
    for label, model in models.items():
        for _ in range(warmup):
            solve_stationary(model, taus[0], solver)
        times = []
        for _ in range(repetitions):
            for tau in taus:
                times.extend(solve_stationary(model, tau, solver).timings)
        out[label] = float(np.mean(times))
    return out


RUNNERS = {"semilinear": run_semilinear, "burgers": run_burgers, "minsurface": run_minsurface}


def run_benchmark(config):
    return RUNNERS[config.benchmark](config)


def evaluate(setup, snapshots, reduced, solver=None):
    if setup.problem.time_dependent:
        return evaluate_burgers(setup, snapshots, reduced, solver)
    return evaluate_parametric(setup, snapshots, reduced, solver)
