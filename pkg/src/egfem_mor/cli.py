"""Command-line driver for the offline/online benchmark pipeline.

Stages and their artifacts (all below the output directory)::

    mesh       mesh.msh
    fom        fom.json            (cached tensors go to the cache directory)
    snapshots  snapshots/<formulation>/{solution,labels,nl_<term>}.npy
    reduce     reduced/<formulation>/{v,sigma}.npy, deim_<n_f>_<term>_*.npy,
               singular_values.csv
    evaluate   results.csv (+ discretization.csv for Burgers)
    report     summary.csv

Configuration is YAML (JSON is accepted as a subset)::

    benchmark: semilinear
    mesh: {shape: unit_square, n: 33}     # or {file: path.msh}
    pod_sizes: [5, 10, 15, 20, 25]
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import re
import sys
from dataclasses import dataclass

import numpy as np
import yaml

from .bench import BenchmarkConfig, Setup, evaluate
from .bench.config import CONFIG_FIELDS
from .bench.runner import offline_reduction, offline_snapshots
from .errors import EgfemError, MissingPrerequisite, SchemaViolation
from .meshfe import load_msh, write_msh
from .reduction import DeimOperator, PodBasis, SnapshotSet

log = logging.getLogger(__name__)

COMMANDS = ("mesh", "fom", "snapshots", "reduce", "evaluate", "report")
TIMING_COLUMNS = ("time_per_iteration", "wall_time")
CACHE_ENV = "EGFEM_MOR_CACHE"

_INT_KEYS = ("n_train", "n_eval", "seed", "threads", "repetitions")
_FLOAT_KEYS = ("t_end", "dt")
_INT_LIST_KEYS = ("pod_sizes", "refinement")
_PATH_KEYS = ("output", "cache")
_MESH_KEYS = ("shape", "n", "h", "file")


@dataclass(frozen=True)
class RunConfig:
    bench: BenchmarkConfig
    output: str
    cache: str
    repetitions: int = 5
    threads: int = 1

    def path(self, *parts):
        return os.path.join(self.output, *parts)


# configuration ---------------------------------------------------------------
def _check_int(key, v):
    if isinstance(v, bool) or not isinstance(v, int):
        raise SchemaViolation(key, f"expected an integer, got {v!r}")
    return v


def _check_mesh(v):
    if isinstance(v, str):
        return v
    if isinstance(v, (list, tuple)) and len(v) == 2:
        return (str(v[0]), v[1])
    if isinstance(v, dict):
        for k in v:
            if k not in _MESH_KEYS:
                raise SchemaViolation(f"mesh.{k}", "unknown key")
        if "file" in v:
            return str(v["file"])
        if v.get("shape") == "unit_square":
            return ("unit_square", _check_int("mesh.n", v.get("n")))
        if v.get("shape") == "unit_disk":
            h = v.get("h")
            if not isinstance(h, (int, float)) or isinstance(h, bool):
                raise SchemaViolation("mesh.h", f"expected a number, got {h!r}")
            return ("unit_disk", float(h))
        raise SchemaViolation("mesh.shape", f"unknown mesh shape {v.get('shape')!r}")
    raise SchemaViolation("mesh", f"cannot interpret {v!r}")


def _validate(raw):
    if not isinstance(raw, dict):
        raise SchemaViolation("<root>", "configuration must be a mapping")
    clean = {}
    allowed = set(CONFIG_FIELDS) | set(_PATH_KEYS)
    for key, v in raw.items():
        if key not in allowed:
            raise SchemaViolation(key, "unknown key")
        if key in _INT_KEYS:
            clean[key] = _check_int(key, v)
        elif key in _FLOAT_KEYS:
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise SchemaViolation(key, f"expected a number, got {v!r}")
            clean[key] = float(v)
        elif key in _INT_LIST_KEYS:
            if not isinstance(v, (list, tuple)):
                raise SchemaViolation(key, "expected a list of integers")
            clean[key] = tuple(_check_int(f"{key}[{i}]", x) for i, x in enumerate(v))
        elif key == "deim_sizes":
            if v == "match_pod":
                clean[key] = v
            elif isinstance(v, (list, tuple)):
                clean[key] = tuple(_check_int(f"{key}[{i}]", x) for i, x in enumerate(v))
            else:
                raise SchemaViolation(key, "expected 'match_pod' or a list of integers")
        elif key == "formulations":
            if not isinstance(v, (list, tuple)) or not all(isinstance(x, str) for x in v):
                raise SchemaViolation(key, "expected a list of formulation names")
            clean[key] = tuple(v)
        elif key == "mesh":
            clean[key] = _check_mesh(v)
        elif key in ("benchmark",) + _PATH_KEYS:
            if not isinstance(v, str):
                raise SchemaViolation(key, f"expected a string, got {v!r}")
            clean[key] = v
        else:
            clean[key] = v
    if "benchmark" not in clean:
        raise SchemaViolation("benchmark", "required key missing")
    return clean


def _parse_value(text):
    return yaml.safe_load(text)


def parse_config(path=None, overrides=None, text=None):
    """Read a configuration file (or ``text``) and apply ``overrides``.

    ``overrides`` maps top-level keys to values and supersedes the file.
    Unknown keys raise :class:`SchemaViolation` naming the key.
    """
    raw = {}
    if text is None and path is not None:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    if text:
        try:
            raw = yaml.safe_load(text) or {}
        except yaml.YAMLError as exc:
            raise SchemaViolation("<root>", f"unparsable configuration: {exc}") from None
    if not isinstance(raw, dict):
        raise SchemaViolation("<root>", "configuration must be a mapping")
    raw = dict(raw)
    for k, v in (overrides or {}).items():
        if v is not None:
            raw[k] = v
    clean = _validate(raw)
    output = clean.pop("output", None) or os.path.join("runs", clean["benchmark"])
    cache = clean.pop("cache", None) or os.environ.get(CACHE_ENV) or os.path.join(output, "cache")
    try:
        bench = BenchmarkConfig.defaults(clean.pop("benchmark"), **clean)
    except EgfemError as exc:
        raise SchemaViolation("<root>", str(exc)) from None
    return RunConfig(bench, output, cache, bench.repetitions, bench.threads)


# CSV -------------------------------------------------------------------------
def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))  # shortest string that round-trips, at most 17 digits
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return "" if v is None else str(v)


def write_csv(rows, path, fieldnames=None):
    """RFC 4180 CSV with a header row; floats round-trip exactly."""
    rows = list(rows)
    if fieldnames is None:
        fieldnames = list(rows[0].keys()) if rows else []
    for i, r in enumerate(rows):
        if set(r.keys()) != set(fieldnames):
            raise ValueError(f"row {i} has columns {sorted(r)}, expected {sorted(fieldnames)}")
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(fieldnames)
        for r in rows:
            w.writerow([_fmt(r[k]) for k in fieldnames])


def read_csv(path):
    """Rows as dicts of strings."""
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def _homogenize(rows):
    keys = []
    for r in rows:
        for k in r:
            if k not in keys:
                keys.append(k)
    return [{k: r.get(k, "") for k in keys} for r in rows], keys


# pipeline --------------------------------------------------------------------
def slug(name):
    return re.sub(r"[^A-Za-z0-9]+", "_", name).strip("_")


def _require(path, stage):
    if not os.path.exists(path):
        raise MissingPrerequisite(f"{os.path.basename(path)} not found; run the '{stage}' stage first")


def _save_npy(path, arr):
    os.makedirs(os.path.dirname(path), exist_ok=True)
    np.save(path, np.ascontiguousarray(arr), allow_pickle=False)


def _setup(rc, need_fom=True):
    mesh_path = rc.path("mesh.msh")
    _require(mesh_path, "mesh")
    if need_fom:
        _require(rc.path("fom.json"), "fom")
    return Setup.create(rc.bench, mesh=load_msh(mesh_path), cache_dir=rc.cache)


def stage_mesh(rc):
    from .bench.runner import load_mesh

    mesh = load_mesh(rc.bench.mesh)
    os.makedirs(rc.output, exist_ok=True)
    write_msh(mesh, rc.path("mesh.msh"))
    return {"nodes": mesh.n_nodes, "triangles": int(len(mesh.triangles))}


def stage_fom(rc):
    setup = _setup(rc, need_fom=False)
    info = {"benchmark": rc.bench.benchmark, "n_u": setup.space.n_free,
            "mesh": setup.space.mesh.fingerprint(),
            "formulations": {f: m.label for f, m in setup.foms.items()}}
    with open(rc.path("fom.json"), "w", encoding="utf-8") as fh:
        json.dump(info, fh, indent=2, sort_keys=True)
    return info


def stage_snapshots(rc):
    setup = _setup(rc)
    snaps = offline_snapshots(setup)
    for form, (Y, nl) in snaps.items():
        d = rc.path("snapshots", slug(form))
        _save_npy(os.path.join(d, "solution.npy"), Y.matrix)
        _save_npy(os.path.join(d, "labels.npy"), np.asarray(Y.labels, dtype=float))
        for k, s in nl.items():
            _save_npy(os.path.join(d, f"nl_{k}.npy"), s.matrix)
    return {f: Y.shape for f, (Y, _) in snaps.items()}


def _load_snapshots(rc, setup):
    out = {}
    for form in setup.foms:
        d = rc.path("snapshots", slug(form))
        _require(os.path.join(d, "solution.npy"), "snapshots")
        labels = np.load(os.path.join(d, "labels.npy"))
        labels = tuple(map(tuple, labels)) if labels.ndim > 1 else tuple(labels.tolist())
        Y = SnapshotSet(np.load(os.path.join(d, "solution.npy")), labels, "solution")
        nl = {}
        for name in sorted(os.listdir(d)):
            m = re.fullmatch(r"nl_(\w+)\.npy", name)
            if m:
                nl[m.group(1)] = SnapshotSet(np.load(os.path.join(d, name)), labels,
                                             "nonlinearity")
        out[form] = (Y, nl)
    return out


def stage_reduce(rc):
    setup = _setup(rc)
    snaps = _load_snapshots(rc, setup)
    reduced = offline_reduction(setup, snaps)
    sig_rows = []
    for form, (basis, ops) in reduced.items():
        d = rc.path("reduced", slug(form))
        _save_npy(os.path.join(d, "v.npy"), basis.v)
        _save_npy(os.path.join(d, "sigma.npy"), basis.sigma)
        for n_f, by_term in ops.items():
            for k, op in by_term.items():
                _save_npy(os.path.join(d, f"deim_{n_f}_{k}_indices.npy"), op.indices)
                _save_npy(os.path.join(d, f"deim_{n_f}_{k}_basis.npy"), op.v_f)
                _save_npy(os.path.join(d, f"deim_{n_f}_{k}_d.npy"), op.d_f)
        sig_rows += [{"formulation": form, "kind": "solution", "index": i, "sigma": float(s)}
                     for i, s in enumerate(basis.sigma, 1)]
    write_csv(sig_rows, rc.path("singular_values.csv"), ["formulation", "kind", "index", "sigma"])
    return {f: b.n for f, (b, _) in reduced.items()}


def _load_reduced(rc, setup):
    out = {}
    for form in setup.foms:
        d = rc.path("reduced", slug(form))
        _require(os.path.join(d, "v.npy"), "reduce")
        basis = PodBasis(np.load(os.path.join(d, "v.npy")), np.load(os.path.join(d, "sigma.npy")))
        ops = {}
        for name in sorted(os.listdir(d)):
            m = re.fullmatch(r"deim_(\d+)_(\w+)_indices\.npy", name)
            if m:
                n_f, k = int(m.group(1)), m.group(2)
                stem = os.path.join(d, f"deim_{n_f}_{k}_")
                ops.setdefault(n_f, {})[k] = DeimOperator(
                    np.load(stem + "basis.npy"), np.load(stem + "indices.npy"),
                    np.load(stem + "d.npy"))
        out[form] = (basis, ops)
    return out


def stage_evaluate(rc):
    setup = _setup(rc)
    snaps = _load_snapshots(rc, setup)
    reduced = _load_reduced(rc, setup)
    report = evaluate(setup, snaps, reduced)
    rows, keys = _homogenize(report.rows)
    write_csv(rows, rc.path("results.csv"), keys)
    write_csv(report.sigma_rows(), rc.path("singular_values_all.csv"),
              ["formulation", "kind", "index", "sigma"])
    if "discretization" in report.tables:
        drows, dkeys = _homogenize(report.tables["discretization"])
        write_csv(drows, rc.path("discretization.csv"), dkeys)
    return {"rows": len(rows)}


def _num(s):
    try:
        return float(s)
    except (TypeError, ValueError):
        return None


def stage_report(rc):
    path = rc.path("results.csv")
    _require(path, "evaluate")
    rows = read_csv(path)
    key = ("formulation", "model", "n_u", "n_f")
    groups = {}
    for r in rows:
        groups.setdefault(tuple(r[k] for k in key), []).append(r)
    skip = set(key) | {"benchmark", "sample", "status", "mu1", "mu2"}
    out = []
    cols = [c for c in (rows[0].keys() if rows else []) if c not in skip]
    for k, grp in groups.items():
        s = dict(zip(key, k))
        s["samples"] = len(grp)
        s["failures"] = sum(1 for r in grp if r.get("status", "ok") != "ok")
        for c in cols:
            vals = [v for v in (_num(r[c]) for r in grp) if v is not None and not math.isnan(v)]
            s[f"mean_{c}"] = float(np.mean(vals)) if vals else float("nan")
        out.append(s)
    fields = list(key) + ["samples", "failures"] + [f"mean_{c}" for c in cols]
    write_csv(out, rc.path("summary.csv"), fields)
    return {"groups": len(out)}


STAGES = {
    "mesh": stage_mesh,
    "fom": stage_fom,
    "snapshots": stage_snapshots,
    "reduce": stage_reduce,
    "evaluate": stage_evaluate,
    "report": stage_report,
}


def run(command, rc):
    """Execute one pipeline stage; returns a small summary dict."""
    if command not in STAGES:
        raise SchemaViolation("command", f"unknown command {command!r}")
    return STAGES[command](rc)


def build_parser():
    p = argparse.ArgumentParser(prog="egfem-mor", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="YAML/JSON configuration file")
    p.add_argument("--out", help="output directory")
    p.add_argument("--threads", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--repetitions", type=int)
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a configuration key (YAML value syntax)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    overrides = {"output": args.out, "threads": args.threads, "seed": args.seed,
                 "repetitions": args.repetitions}
    try:
        for item in args.set:
            if "=" not in item:
                raise SchemaViolation(item, "override must look like KEY=VALUE")
            k, v = item.split("=", 1)
            overrides[k.strip()] = _parse_value(v)
        rc = parse_config(args.config, overrides)
        info = run(args.command, rc)
    except SchemaViolation as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except MissingPrerequisite as exc:
        print(f"missing prerequisite: {exc}", file=sys.stderr)
        return 3
    except EgfemError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    print(json.dumps({"command": args.command, **{k: _jsonable(v) for k, v in info.items()}}))
    return 0


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (tuple, list)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    return v


if __name__ == "__main__":
    sys.exit(main())
