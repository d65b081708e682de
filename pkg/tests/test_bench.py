import math

import numpy as np
import pytest
import sympy
from scipy.integrate import dblquad

from egfem_mor.bench import (
    BenchmarkConfig,
    Report,
    burgers_exact,
    burgers_problem,
    burgers_source,
    error_metrics,
    evaluation_grid,
    mean_error,
    minsurface_problem,
    minsurface_source,
    observed_rates,
    run_burgers,
    run_semilinear,
    seminorm_error,
    semilinear_problem,
    training_grid,
)
from egfem_mor.bench.runner import solve_stationary, solve_transient, time_grid
from egfem_mor.bench.problems import MINSURFACE_BOX, NU, SEMILINEAR_BOX, burgers_exact_grad
from egfem_mor.errors import InvalidParameter, NoConvergence, ShapeMismatch
from egfem_mor.fom import build_fom
from egfem_mor.meshfe import build_space, unit_disk, unit_square
from egfem_mor.reduction import pod
from egfem_mor.rom import project


def sympy_burgers():
    """``u_hat`` and the source it induces, derived symbolically."""
    x1, x2, t = sympy.symbols("x1 x2 t", real=True)
    u = 10 * x1 * x2 * (x1 - 1) * (x2 - 1) * (
        sympy.sin(2 * x1 * t) / sympy.exp(t / 2) + sympy.cos(x2 * t) / sympy.exp(t / 4)
        + sympy.sin(x1 * x2 * t) / sympy.exp(t))
    nu = sympy.Rational(1, 100)
    q = (sympy.diff(u, t) - nu * (sympy.diff(u, x1, 2) + sympy.diff(u, x2, 2))
         + sympy.Rational(1, 2) * (sympy.diff(u**2, x1) + sympy.diff(u**2, x2)))
    grad = (sympy.diff(u, x1), sympy.diff(u, x2))
    f = lambda e: sympy.lambdify((x1, x2, t), e, "numpy")  # noqa: E731
    return f(u), f(q), (f(grad[0]), f(grad[1]))


class TestBurgersData:
    def test_initial_centre_value(self):
        assert math.isclose(float(burgers_exact(np.array([0.5, 0.5]), 0.0)), 0.625, rel_tol=1e-15)

    def test_boundary_zero(self, rng):
        s = rng.random(20)
        for pts in (np.c_[s, 0 * s], np.c_[s, 1 + 0 * s], np.c_[0 * s, s], np.c_[1 + 0 * s, s]):
            for t in (0.0, 1.3, 7.0):
                assert np.all(burgers_exact(pts, t) == 0.0)

    def test_sympy_oracle(self, rng):
        u, q, (g1, g2) = sympy_burgers()
        x = rng.random((100, 2))
        t = rng.uniform(0, 10, 100)
        assert np.allclose(burgers_exact(x, t), u(x[:, 0], x[:, 1], t), rtol=1e-13, atol=1e-14)
        assert np.abs(burgers_source(x, t) - q(x[:, 0], x[:, 1], t)).max() <= 1e-8
        g = burgers_exact_grad(x, t)
        assert np.allclose(g[:, 0], g1(x[:, 0], x[:, 1], t), atol=1e-12)
        assert np.allclose(g[:, 1], g2(x[:, 0], x[:, 1], t), atol=1e-12)

    def test_problem(self):
        p = burgers_problem()
        assert p.time_dependent and p.t_span == (0.0, 10.0)
        assert p.a.constant == NU == 0.01
        assert p.d_scale == -0.5


class TestOtherProblems:
    def test_minsurface_source_at_origin(self):
        for mu in ((0.0, 0.0), (0.3, 0.9), (1.0, 1.0)):
            assert math.isclose(float(minsurface_source(np.zeros(2), mu)), 2 * (1 - math.exp(-1)))
        assert abs(float(minsurface_source(np.zeros(2), (0.5, 0.5))) - 1.2642411) < 1e-7

    @staticmethod
    def disk_integral(mu, exponent):
        f = lambda r, th: r * float(minsurface_source(
            np.array([r * np.cos(th), r * np.sin(th)]), mu, exponent))
        return dblquad(f, 0, 2 * np.pi, 0, 1)[0]

    def test_positive_exponent_violates_flux_bound(self):
        # |flux| < 1 pointwise, so a solution needs |int q| < perimeter = 2 pi
        assert math.isclose(self.disk_integral((0, 0), 1.0),
                            2 * np.pi * (math.e - 1 - math.exp(-1)), rel_tol=1e-8)
        for mu in ((0, 0), (1, 0), (0, 1), (1, 1), (0.5, 0.5)):
            assert self.disk_integral(mu, 1.0) > 2 * np.pi

    def test_default_source_satisfies_flux_bound(self):
        th = np.linspace(0, 2 * np.pi, 17)
        circle = np.column_stack([np.cos(th), np.sin(th)])
        for mu in ((0, 0), (1, 1)):
            assert np.abs(minsurface_source(circle, mu)).max() < 1e-15
            assert 0 < self.disk_integral(mu, -1.0) < 0.5 * 2 * np.pi

    def test_positive_exponent_has_no_discrete_solution(self):
        space = build_space(unit_disk(0.1), 1)
        fom = build_fom("SGA", space, minsurface_problem(exponent=1.0))
        with pytest.raises(NoConvergence):
            solve_stationary(fom, (0.5, 0.5))
        fom = build_fom("SGA", space, minsurface_problem())
        assert solve_stationary(fom, (0.5, 0.5)).iterations <= 6

    def test_minsurface_coefficient_range(self, rng):
        a = minsurface_problem().a
        g = rng.standard_normal((50, 2)) * 10
        v = a.value(None, np.zeros(50), g, None)
        assert np.all((v > 0) & (v <= 1))

    def test_semilinear_reaction_vanishes(self, rng):
        c = semilinear_problem().c
        for mu in training_grid(SEMILINEAR_BOX, 4):
            assert np.all(c.value(None, np.zeros(3), None, mu) == 0)


class TestGrids:
    def test_counts_and_disjoint(self):
        tr, ev = training_grid(SEMILINEAR_BOX, 12), evaluation_grid(SEMILINEAR_BOX, 15)
        assert tr.shape == (144, 2) and ev.shape == (225, 2)
        assert tr.min() == 0.01 and tr.max() == 10.0
        d = np.abs(tr[:, None, :] - ev[None, :, :]).max(axis=-1)
        assert d.min() > 0
        assert evaluation_grid(MINSURFACE_BOX, 15).min() > 0

    def test_ordering(self):
        tr = training_grid(MINSURFACE_BOX, 3)
        assert tr[:3, 0].tolist() == [0, 0, 0] and tr[:3, 1].tolist() == [0, 0.5, 1]


class TestMetrics:
    def test_examples(self, v6):
        e1 = np.eye(5)[0]
        assert error_metrics(e1, np.zeros(5)) == 1.0
        assert error_metrics(e1, e1) == 0.0
        K = build_fom("SGA", v6, semilinear_problem()).K
        c = np.ones(v6.n_free)
        assert error_metrics(c, np.zeros_like(c), "energy", K) > 0

    def test_relative_and_mean(self):
        a, b = np.array([3.0, 4.0]), np.array([0.0, 4.0])
        assert error_metrics(a, b, relative=True) == 3 / 5
        U = np.column_stack([a, a])
        assert mean_error(U, np.column_stack([a, b])) == 1.5
        with pytest.raises(ShapeMismatch):
            error_metrics(a, np.ones(3))
        with pytest.raises(ValueError):
            error_metrics(a, b, "energy")

    def test_seminorm_exact_for_p1(self, rng):
        space = build_space(unit_square(5), 1)
        u = rng.standard_normal(space.n_free)
        from egfem_mor.assembly import element_assembler

        asm = element_assembler(space)
        gh = np.einsum("tmd,tm->td", asm.geo.grad, asm.element_values(u))

        def grad(x, t):
            return np.broadcast_to(gh[:, None, :], x.shape)

        assert seminorm_error(space, u, grad, 0.0) < 1e-14
        # |u_h|_1^2 = u^T K u
        K = build_fom("SGA", space, semilinear_problem()).K
        zero = np.zeros(space.n_free)
        assert math.isclose(seminorm_error(space, zero, grad, 0.0, relative=False),
                            math.sqrt(u @ K @ u), rel_tol=1e-12)

    def test_rates(self):
        assert np.allclose(observed_rates([0.1, 0.05, 0.025], [1.0, 0.5, 0.25]), [1.0, 1.0])


class TestConfig:
    def test_defaults(self):
        c = BenchmarkConfig.defaults("semilinear")
        assert (c.n_train, c.n_eval) == (144, 225)
        assert c.pod_sizes == (5, 10, 15, 20, 25)
        assert c.size_pairs()[0] == (5, 5)
        assert BenchmarkConfig.defaults("minsurface").formulations == ("SGA", "EGFEM(P0)")
        assert BenchmarkConfig.defaults("burgers").refinement == (16, 32, 64)

    def test_invalid(self):
        with pytest.raises(InvalidParameter):
            BenchmarkConfig.defaults("heat")
        with pytest.raises(InvalidParameter):
            BenchmarkConfig.defaults("semilinear", n_train=10)
        with pytest.raises(InvalidParameter):
            BenchmarkConfig.defaults("semilinear", formulations=["FOO"])
        with pytest.raises(InvalidParameter):
            BenchmarkConfig.defaults("semilinear", deim_sizes=[1, 2])

    def test_explicit_deim_sizes(self):
        c = BenchmarkConfig.defaults("semilinear", pod_sizes=[4, 8], deim_sizes=[6, 10])
        assert c.size_pairs() == [(4, 6), (8, 10)]


class TestReport:
    def test_summary(self):
        rep = Report("x", rows=[
            {"formulation": "SGA", "model": "ROM", "n_u": 5, "n_f": 0, "sample": 0, "err": 1.0,
             "status": "ok"},
            {"formulation": "SGA", "model": "ROM", "n_u": 5, "n_f": 0, "sample": 1, "err": 3.0,
             "status": "ok"},
            {"formulation": "SGA", "model": "ROM", "n_u": 5, "n_f": 0, "sample": 2,
             "err": float("nan"), "status": "diverged"},
        ])
        (s,) = rep.summary()
        assert s["err"] == 2.0 and s["samples"] == 3 and s["failures"] == 1

    def test_sigma_rows(self):
        rep = Report("x", singular_values={("SGA", "solution"): np.array([2.0, 1.0])})
        assert [r["index"] for r in rep.sigma_rows()] == [1, 2]


SMALL = dict(mesh=("unit_square", 8), n_train=16, n_eval=4, pod_sizes=(3, 6))


@pytest.fixture(scope="module")
def semilinear():
    return run_semilinear(BenchmarkConfig.defaults("semilinear", **SMALL))


class TestRunners:
    def test_semilinear_rows(self, semilinear):
        rows = semilinear.rows
        fom_rows = [r for r in rows if r["model"] == "FOM"]
        assert len(fom_rows) == 4 * 4
        assert {(r["model"], r["n_u"]) for r in rows if r["formulation"] == "SGA"} == {
            ("FOM", 49), ("ROM", 3), ("ROM", 6), ("cROM", 3), ("cROM", 6)}
        assert all(r["status"] == "ok" for r in rows)
        assert all(r["error_fom"] == 0 for r in fom_rows if r["formulation"] == "SGA")

    def test_singular_values_descending(self, semilinear):
        for sig in semilinear.singular_values.values():
            assert sig[0] > 0 and np.all(np.diff(sig) <= 1e-12 * sig[0])

    def test_burgers_report(self):
        cfg = BenchmarkConfig.defaults("burgers", mesh=("unit_square", 8),
                                       formulations=("SGA", "MLSGA"), t_end=1.0, dt=0.02,
                                       pod_sizes=(4, 8), refinement=(4, 8))
        rep = run_burgers(cfg, every=5)
        red = [r for r in rep.rows if r["model"] != "FOM"]
        assert {r["model"] for r in red} == {"ROM", "cROM"}
        assert all(r["status"] == "ok" for r in red)
        for r in red:
            assert np.isfinite(r["total_error"]) and r["projection_error"] >= 0
        disc = rep.tables["discretization"]
        assert [d["n_u"] for d in disc] == [9, 49] and "rate" in disc[1]

    @pytest.mark.parametrize("form, name", [("SGA", "SGA_ROM"), ("MLSGA", "MLSGA_ROM"),
                                            ("EGFEM(P2)", "EGFEM_ROM")])
    def test_reduction_error_exceeds_best_approximation(self, form, name):
        # no reduced solution beats the K-orthogonal projection in the energy norm
        space = build_space(unit_square(8), 1)
        fom = build_fom(form, space, burgers_problem(1.0))
        grid = time_grid(1.0, 0.02)
        U = solve_transient(fom, grid).y
        for n in (3, 6, 10):
            basis = pod(U, rank=n)
            V = basis.v
            Ur = V @ solve_transient(project(name, basis, fom), grid).y
            Kr = V.T @ (fom.K @ V)
            best = V @ np.linalg.solve(Kr, V.T @ (fom.K @ U))
            for i in range(U.shape[1]):
                red = error_metrics(U[:, i], Ur[:, i], "energy", fom.K)
                proj = error_metrics(U[:, i], best[:, i], "energy", fom.K)
                assert red >= proj - 1e-8
