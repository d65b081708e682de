"""Benchmark configuration with per-benchmark defaults."""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace

from ..errors import InvalidParameter

BENCHMARKS = ("semilinear", "burgers", "minsurface")
KNOWN_FORMULATIONS = ("SGA", "GFEM(P1)", "EGFEM(P0)", "EGFEM(P1)", "EGFEM(P2)", "MLSGA")

_DEFAULTS = {
    "semilinear": dict(
        mesh=("unit_square", 33),
        formulations=("SGA", "GFEM(P1)", "EGFEM(P0)", "EGFEM(P2)"),
    ),
    "burgers": dict(
        mesh=("unit_square", 33),
        formulations=("SGA", "GFEM(P1)", "EGFEM(P2)", "MLSGA"),
        refinement=(16, 32, 64),
    ),
    "minsurface": dict(
        mesh=("unit_disk", 0.1),
        formulations=("SGA", "EGFEM(P0)"),
    ),
}


@dataclass(frozen=True)
class BenchmarkConfig:
    """Settings of one benchmark run.

    ``n_train`` and ``n_eval`` must be perfect squares for the parametric
    benchmarks (tensor grids). For Burgers, snapshots are taken every ``dt``
    on ``[0, t_end]`` and ``refinement`` lists the square-mesh divisions of the
    discretization study.
    """

    benchmark: str
    mesh: object = None
    formulations: tuple = ()
    n_train: int = 144
    n_eval: int = 225
    pod_sizes: tuple = (5, 10, 15, 20, 25)
    deim_sizes: object = "match_pod"
    seed: int = 0
    t_end: float = 10.0
    dt: float = 0.01
    refinement: tuple = ()
    threads: int = 1
    repetitions: int = 5

    def __post_init__(self):
        if self.benchmark not in BENCHMARKS:
            raise InvalidParameter(f"unknown benchmark {self.benchmark!r}")
        for f in self.formulations:
            if f not in KNOWN_FORMULATIONS:
                raise InvalidParameter(f"unknown formulation {f!r}")
        if self.benchmark != "burgers":
            for nm in ("n_train", "n_eval"):
                v = getattr(self, nm)
                if v < 1 or math.isqrt(v) ** 2 != v:
                    raise InvalidParameter(f"{nm} = {v} is not a positive perfect square")
        if self.deim_sizes != "match_pod" and len(self.deim_sizes) != len(self.pod_sizes):
            raise InvalidParameter("deim_sizes must be 'match_pod' or one entry per POD size")
        if self.threads < 1 or self.repetitions < 1:
            raise InvalidParameter("threads and repetitions must be positive")

    @classmethod
    def defaults(cls, benchmark, **overrides):
        if benchmark not in _DEFAULTS:
            raise InvalidParameter(f"unknown benchmark {benchmark!r}")
        kw = dict(_DEFAULTS[benchmark])
        kw.update(overrides)
        for key in ("formulations", "pod_sizes", "refinement"):
            if key in kw and kw[key] is not None and not isinstance(kw[key], tuple):
                kw[key] = tuple(kw[key])
        if isinstance(kw.get("mesh"), list):
            kw["mesh"] = tuple(kw["mesh"])
        if isinstance(kw.get("deim_sizes"), list):
            kw["deim_sizes"] = tuple(kw["deim_sizes"])
        return cls(benchmark, **kw)

    def size_pairs(self):
        """``(n_u, n_f)`` per reduced size."""
        if self.deim_sizes == "match_pod":
            return [(n, n) for n in self.pod_sizes]
        return list(zip(self.pod_sizes, self.deim_sizes))

    def with_(self, **kw):
        return replace(self, **kw)


CONFIG_FIELDS = tuple(f.name for f in fields(BenchmarkConfig))
