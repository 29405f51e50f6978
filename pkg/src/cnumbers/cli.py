"""
Batch experiment driver.

    cnumbers run CONFIG [--strict] [--threads N] [--out DIR]
    cnumbers report SUMMARY [SUMMARY ...] [--out DIR]

A config is a JSON file::

    {
      "input": {"generator": {"kind": "segment", "params": {"length": 1.0}}},
      "output": "out",
      "tasks": [{"task": "dini", "points": 5}, {"task": "carleson"}]
    }

"input" is either {"generator": GeneratorSpec} or {"file": PATH, "n": n}
(a measure JSON, or a CSV with n given).  Every task writes its own CSV
and the run writes summary.json; see README for the per-task parameters and
their defaults.
"""
from __future__ import annotations

import argparse
import contextlib
import csv
import json
import logging
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np

from cnumbers import measures
from cnumbers.generators import GeneratorSpec, generate

SCHEMA = 1
TASKS = ("coeffs", "dini", "carleson", "alpha-energy", "beta-energy", "cz",
         "wavelet-lemma", "weak11")
REPORT_COLUMNS = ["generator", "task", "kind", "status", "metric", "value"]
PLOT_COLUMNS = ["series", "x", "y"]

log = logging.getLogger("cnumbers")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    input: dict
    tasks: list = field(default_factory=list)
    output: str = "out"

    @classmethod
    def from_dict(cls, obj: dict) -> "ExperimentConfig":
        if not isinstance(obj, dict) or "input" not in obj:
            raise ConfigError("config needs an 'input' entry")
        tasks = obj.get("tasks", [])
        for t in tasks:
            if not isinstance(t, dict) or t.get("task") not in TASKS:
                raise ConfigError(f"unknown task entry {t!r}; known: {', '.join(TASKS)}")
        return cls(dict(obj["input"]), [dict(t) for t in tasks], str(obj.get("output", "out")))

    def to_dict(self) -> dict:
        return {"input": self.input, "tasks": self.tasks, "output": self.output}

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def dump(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------

def load_input(spec: dict) -> tuple[measures.DiscreteMeasure, str]:
    if "generator" in spec:
        gs = GeneratorSpec.from_dict(spec["generator"])
        return generate(gs), gs.kind
    if "file" in spec:
        path = Path(spec["file"])
        if path.suffix == ".csv":
            return measures.read_csv(path, int(spec["n"])), path.stem
        return measures.read_json(path), path.stem
    raise ConfigError("input must name a 'generator' or a 'file'")


def _kind(obj) -> "Any":
    from cnumbers.coefficients import Kind, SphereMap

    obj = obj or {}
    if isinstance(obj, str):
        obj = {"name": obj}
    omega = None
    if "omega" in obj:
        om = obj["omega"]
        omega = SphereMap.scaled(om["fourier"], float(om["delta"]))
    return Kind(obj.get("name", "c"), int(obj.get("N", 1)), omega)


def _sample_points(mu, count: int) -> np.ndarray:
    """Support indices at the quantile midpoints (k + 1/2)/count of storage order."""
    spt = mu.support
    count = min(int(count), spt.size)
    pos = np.floor((np.arange(count) + 0.5) * spt.size / max(count, 1)).astype(int)
    return spt[pos]


def _grid(mu, task):
    from cnumbers.energies import ScaleGrid, default_grid

    base = default_grid(mu, int(task.get("samples_per_octave", 8)))
    return ScaleGrid(float(task.get("t_min", base.t_min)), float(task.get("t_max", base.t_max)),
                     base.samples_per_octave)


def _tree(mu, task):
    from cnumbers.cubes import build_christ_cubes

    return build_christ_cubes(mu, int(task.get("j_min", 0)), int(task.get("j_max", 6)),
                              task.get("scale_unit"))


def _root(tree, task):
    if "root_point" in task:
        return tree.cube_of(int(task["root_point"]), int(task.get("root_level", tree.j_min)))
    return tree.roots[0]


def _nu(mu, spec: dict):
    from cnumbers.measures import build_measure

    spec = spec or {"kind": "density"}
    kind = spec.get("kind", "density")
    if kind == "same":
        return mu
    if kind == "atoms":
        return build_measure(np.asarray(spec["points"], float), np.asarray(spec["weights"], float),
                             mu.n, signed=True)
    if kind == "density":
        rng = np.random.default_rng(int(spec.get("seed", 0)))
        f = np.exp(float(spec.get("sigma", 2.0)) * rng.standard_normal(len(mu)))
        f *= rng.random(len(mu)) < float(spec.get("fraction", 0.3))
        return build_measure(mu.points, f * mu.weights, mu.n, signed=True)
    raise ConfigError(f"unknown nu kind {kind!r}")


def _write_rows(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


# ---------------------------------------------------------------------------
# tasks: each returns (status, key ratios, plot series)
# ---------------------------------------------------------------------------

def task_coeffs(mu, task, out: Path, stem: str):
    from cnumbers.coefficients import coefficient_profile

    kind = _kind(task.get("kind"))
    idx = _sample_points(mu, task.get("points", 10))
    ts = task.get("ts")
    if ts is None:
        g = _grid(mu, task)
        ts = g.nodes[::-1]
    ts = np.asarray(ts, float)
    rows, peak = [], 0.0
    for i in idx.tolist():
        vec = coefficient_profile(mu, mu.points[i], ts, kind)
        mag = np.linalg.norm(vec, axis=1)
        peak = max(peak, float(mag.max()))
        rows += [(i, float(t), float(m)) for t, m in zip(ts, mag)]
    _write_rows(out / f"{stem}.csv", ["point", "t", "value"], rows)
    return "ok", {"max_abs": peak}, kind.label, []


def task_dini(mu, task, out: Path, stem: str):
    from cnumbers.energies import dini_curve

    kind = _kind(task.get("kind"))
    grid = _grid(mu, task)
    idx = _sample_points(mu, task.get("points", 10))
    rows, verdicts = [], []
    series = []
    for i in idx.tolist():
        c = dini_curve(mu, mu.points[i], grid, kind)
        rows.append((i, float(c.energy[-1]), float(c.slope), c.verdict))
        verdicts.append(c.verdict)
        series.append(("slope", i, float(c.slope)))
    _write_rows(out / f"{stem}.csv", ["point", "energy", "slope", "verdict"], rows)
    n = max(len(verdicts), 1)
    return "ok", {"bounded_fraction": verdicts.count("bounded") / n,
                  "growing_fraction": verdicts.count("growing") / n,
                  "max_energy": max((r[1] for r in rows), default=0.0)}, kind.label, series


def task_carleson(mu, task, out: Path, stem: str):
    from cnumbers.energies import carleson_energy

    kind = _kind(task.get("kind"))
    tree = _tree(mu, task)
    rep = carleson_energy(mu, tree, _root(tree, task), kind, int(task.get("m", 8)))
    rep.write_csv(out / f"{stem}.csv")
    per_level: dict = {}
    for _, lvl, e, _ in rep.per_cube:
        per_level[lvl] = per_level.get(lvl, 0.0) + e
    series = [("level_energy", lvl, per_level[lvl]) for lvl in sorted(per_level)]
    return "ok", {"ratio": rep.ratio, "total": rep.total, "mass": rep.normalization}, kind.label, series


def task_alpha_energy(mu, task, out: Path, stem: str):
    from cnumbers.energies import alpha_energy

    tree = _tree(mu, task)
    rep = alpha_energy(mu, tree, _root(tree, task), min_points=int(task.get("min_points", 0)),
                       max_level=task.get("max_level"))
    rep.write_csv(out / f"{stem}.csv")
    return "ok", {"ratio": rep.ratio, "total": rep.total,
                  "skipped": len(rep.meta["skipped"])}, "alpha", []


def task_beta_energy(mu, task, out: Path, stem: str):
    from cnumbers.energies import beta_energy

    tree = _tree(mu, task)
    rep = beta_energy(mu, tree, _root(tree, task), max_level=task.get("max_level"))
    rep.write_csv(out / f"{stem}.csv")
    return "ok", {"ratio": rep.ratio, "total": rep.total}, "beta", []


def task_cz(mu, task, out: Path, stem: str):
    from cnumbers.czdecomp import cz_decompose, threshold, verify_cz

    nu = _nu(mu, task.get("nu"))
    lam = float(task["lambda"]) if "lambda" in task else \
        threshold(nu, mu) * float(task.get("lambda_factor", 4.0))
    res = cz_decompose(nu, mu, lam, method=task.get("method", "centered"))
    checks = verify_cz(res, nu, mu)
    _write_rows(out / f"{stem}.csv", ["property", "passed", "constant"],
                [(c.id, int(c.passed), "" if c.constant is None else float(c.constant))
                 for c in checks])
    with open(out / f"{stem}.json", "w") as fh:
        json.dump(_jsonable(res.to_dict()), fh, sort_keys=True)
    ok = all(c.passed for c in checks)
    ratios = {"cubes": res.J, "passed": sum(c.passed for c in checks),
              "c_overlap": checks[0].constant, "c_sum": checks[9].constant, "lambda": lam}
    return ("ok" if ok else "failed"), ratios, res.meta.get("method", ""), []


def task_wavelet_lemma(mu, task, out: Path, stem: str):
    from cnumbers.wavelets import build_basis, coefficients_of_g

    n = int(task.get("n", 1))
    basis = build_basis(3, int(task.get("depth", 12 if n == 1 else 8)), n)
    lo, hi = task.get("levels", [-4, 10] if n == 1 else [-2, 2])
    table = coefficients_of_g(basis, int(task.get("i", 0)), range(int(lo), int(hi) + 1))
    table.write_csv(out / f"{stem}.csv")
    small = [j for j in range(max(lo, 3), hi + 1)]
    large = [j for j in range(lo, min(hi, -3) + 1)]
    inner = max((abs(a) for _, a in table.items(cls="interior")), default=0.0)
    ratios: dict = {"interior_max": inner}
    if len(small) >= 2:
        ratios["small_exponent"] = table.decay_exponent(small, "max")
    if len(large) >= 2:
        ratios["large_exponent"] = table.decay_exponent(large, "l2")
    series = [("boundary_max", j, table.level_statistic(j)) for j in range(lo, hi + 1)]
    return "ok", ratios, f"n{n}", series


def task_weak11(mu, task, out: Path, stem: str):
    from cnumbers.energies import weak11_check

    nu = _nu(mu, task.get("nu"))
    grid = _grid(mu, task)
    lambdas = task.get("lambdas", [0.1, 0.3, 1.0, 3.0])
    res = weak11_check(mu, nu, lambdas, grid, _kind(task.get("kind")))
    _write_rows(out / f"{stem}.csv", ["lambda", "level_set_mass", "bound"], res.rows)
    series = [("level_set", r[0], r[1]) for r in res.rows]
    return "ok", {"k_emp": res.k_emp}, "c", series


RUNNERS: dict[str, Callable] = {
    "coeffs": task_coeffs, "dini": task_dini, "carleson": task_carleson,
    "alpha-energy": task_alpha_energy, "beta-energy": task_beta_energy, "cz": task_cz,
    "wavelet-lemma": task_wavelet_lemma, "weak11": task_weak11,
}


def _thread_limit(threads):
    if not threads:
        return contextlib.nullcontext()
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:
        return contextlib.nullcontext()
    return threadpool_limits(int(threads))


def run(config: ExperimentConfig, out_dir=None, strict: bool = False, threads=None) -> int:
    out = Path(out_dir or config.output)
    out.mkdir(parents=True, exist_ok=True)
    summary: dict = {"schema": SCHEMA, "config": config.to_dict(), "generator": None, "tasks": []}
    code = 0
    with _thread_limit(threads):
        mu = None
        if config.tasks:
            mu, label = load_input(config.input)
            summary["generator"] = label
        for k, task in enumerate(config.tasks):
            name = task["task"]
            stem = f"{k:02d}_{name}"
            entry = {"task": name, "kind": "", "status": "error", "key_ratios": {},
                     "series": [], "files": []}
            try:
                status, ratios, kind, series = RUNNERS[name](mu, task, out, stem)
                entry.update(status=status, key_ratios=ratios, kind=kind,
                             series=[list(s) for s in series],
                             files=sorted(p.name for p in out.glob(f"{stem}.*")))
            except Exception as exc:  # recorded, the run continues
                log.error("task %s failed: %s", name, exc)
                entry["error"] = f"{type(exc).__name__}: {exc}"
            summary["tasks"].append(entry)
            if entry["status"] == "error":
                code = 1
            elif entry["status"] != "ok" and strict:
                code = 1
    with open(out / "summary.json", "w") as fh:
        json.dump(_jsonable(summary), fh, indent=2, sort_keys=True)
    return code


def report(paths, out_dir=".") -> tuple[Path, Path]:
    """Merge summaries into report.csv and plot_data.csv (rows deduplicated, sorted)."""
    table, plot = set(), set()
    for p in paths:
        with open(p) as fh:
            s = json.load(fh)
        if s.get("schema") != SCHEMA:
            raise ConfigError(f"{p}: summary schema {s.get('schema')!r}, expected {SCHEMA}")
        gen = s.get("generator") or ""
        for t in s.get("tasks", []):
            for metric, value in sorted(t.get("key_ratios", {}).items()):
                table.add((gen, t["task"], t.get("kind", ""), t["status"], metric, repr(value)))
            for name, x, y in t.get("series", []):
                series = f"{gen}/{t['task']}/{t.get('kind', '')}/{name}"
                plot.add((series, repr(x), repr(y)))
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths_out = out / "report.csv", out / "plot_data.csv"
    for path, header, rows in zip(paths_out, (REPORT_COLUMNS, PLOT_COLUMNS), (table, plot)):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(sorted(rows))
    return paths_out


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cnumbers", description=__doc__.split("\n\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="execute the tasks of a config file")
    r.add_argument("config")
    r.add_argument("--strict", action="store_true", help="exit 1 when a verification fails")
    r.add_argument("--threads", type=int, default=None, help="cap on BLAS worker threads")
    r.add_argument("--out", default=None, help="output directory (overrides the config)")
    p = sub.add_parser("report", help="merge summary files into one table")
    p.add_argument("files", nargs="+")
    p.add_argument("--out", default=".")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if args.command == "run":
        try:
            config = ExperimentConfig.load(args.config)
        except (OSError, ValueError) as exc:
            print(f"cannot read config {args.config}: {exc}", file=sys.stderr)
            return 2
        return run(config, args.out, args.strict, args.threads)
    try:
        report(args.files, args.out)
    except (OSError, ValueError) as exc:
        print(f"report failed: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
