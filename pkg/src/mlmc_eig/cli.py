"""Command-line front end: presets, experiment dispatch and CSV/JSON output.

    mlmc-eig mlmc --preset case1 --eps 0.1 --seed 7 --out runs/a
    mlmc-eig rates --preset case1 --levels 3 --samples 200
    mlmc-eig spectrum --preset case2 --disc galerkin --h 2^-3 -k 20
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import re
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .assembly import GALERKIN, KINDS, SUPG, assemble
from .eigensolvers import SolverSettings, arnoldi_smallest, detect_instability
from .estimators import (COST_MODES, ETA_DEFAULT, MLMC, MLMC_HOMOTOPY, Problem, default_workers,
                         evaluate_many, homotopy_schedule, mc_estimate, mc_for_eps, mlmc_estimate,
                         mlmc_homotopy_estimate, mlqmc_estimate, sample_levels)
from .mesh import build_mesh
from .random_fields import Constant, FieldConfig, StreamField, grid_centers
from .sampling import DEFAULT_SHIFTS, make_rule, mc_sample, mc_samples, read_generating_vector

PRESETS = ("case1", "case2", "case3", "custom")
COMMANDS = ("mc", "mlmc", "mlmc-homotopy", "mlqmc", "rates", "spectrum", "qmc-rate")
LEVEL_HEADER = ["level", "h", "t", "N", "mean_diff", "var_diff", "mean_val", "var_val",
                "cost_ms", "iters"]
COMPLEXITY_HEADER = ["eps", "total_cost_s", "estimate", "stat_err", "bias_est"]
# flags that define the field and velocity; only allowed with the custom preset
FIELD_FLAGS = ("velocity_kind", "velocity_a", "grid", "velocity_grid", "decay")
# the coarsest Galerkin mesh the strong-convection case tolerates
CASE2_GALERKIN_H0_MAX = 2.0**-5
FULL_SAMPLES = 10_000
DESK_SAMPLES = 200


class ConfigError(ValueError):
    pass


def fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def parse_h(text) -> float:
    """Accept ``2^-3``, ``2**-3`` or a plain number."""
    if isinstance(text, (int, float)):
        return float(text)
    m = re.fullmatch(r"\s*2\s*(\^|\*\*)\s*(-?\d+)\s*", str(text))
    if m:
        return 2.0 ** int(m.group(2))
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a mesh width: {text!r}") from None


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="JSON file with flag values; explicit flags win")
    p.add_argument("--preset", choices=PRESETS, default="case1")
    p.add_argument("--disc", choices=KINDS, default=None,
                   help="discretization (default: galerkin for case1, supg otherwise)")
    p.add_argument("--solver", choices=("rqi", "arnoldi"), default="rqi")
    p.add_argument("--h0", type=parse_h, default=2.0**-3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("--workers", type=int, default=None,
                   help="sample worker processes (default: available CPUs)")
    p.add_argument("--cost", choices=COST_MODES, default="model",
                   help="cost per sample used for allocation and reporting")
    p.add_argument("--lattice-file", default=None)
    p.add_argument("--shifts", type=int, default=DEFAULT_SHIFTS)
    p.add_argument("--paper-scale", action="store_true",
                   help="reference sample counts instead of desk-scale defaults")
    g = p.add_argument_group("custom field (preset custom only)")
    g.add_argument("--velocity-kind", choices=("constant", "stream"), default=None)
    g.add_argument("--velocity-a", type=float, nargs=2, default=None, metavar=("A1", "A2"))
    g.add_argument("--grid", type=int, nargs=2, default=None, metavar=("NX", "NY"))
    g.add_argument("--velocity-grid", type=int, nargs=2, default=None, metavar=("NX", "NY"))
    g.add_argument("--decay", type=float, default=None)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mlmc-eig", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("mc", help="plain Monte Carlo")
    _common(p)
    p.add_argument("--level", type=int, default=None)
    p.add_argument("--samples", type=int, default=None)
    p.add_argument("--eps", type=float, nargs="+", default=None)
    p.add_argument("--max-level", type=int, default=4)

    for name, hlp in (("mlmc", "multilevel Monte Carlo"),
                      ("mlmc-homotopy", "multilevel Monte Carlo with homotopy levels"),
                      ("mlqmc", "multilevel quasi-Monte Carlo")):
        p = sub.add_parser(name, help=hlp)
        _common(p)
        p.add_argument("--eps", type=float, nargs="+", required=True,
                       help="target RMSE; several values write a complexity sweep")
        p.add_argument("--L", type=int, default=None, help="fixed finest level")
        p.add_argument("--max-level", type=int, default=4)
        if name == "mlqmc":
            p.add_argument("--eta", type=float, default=ETA_DEFAULT)

    p = sub.add_parser("rates", help="fixed samples per level and fitted rates")
    _common(p)
    p.add_argument("--levels", type=int, default=None, help="finest level L")
    p.add_argument("--samples", type=int, default=None)
    p.add_argument("--homotopy", action="store_true")

    p = sub.add_parser("spectrum", help="k smallest eigenvalues of one sample")
    _common(p)
    p.add_argument("--h", type=parse_h, default=2.0**-3)
    p.add_argument("-k", type=int, default=20)
    p.add_argument("--sample-index", type=int, default=0)
    p.add_argument("--t", type=float, default=1.0)

    p = sub.add_parser("qmc-rate", help="MSE versus N for lattice and MC sampling")
    _common(p)
    p.add_argument("--level", type=int, default=0)
    p.add_argument("--m-min", type=int, default=4)
    p.add_argument("--m-max", type=int, default=10)
    return ap


def _flatten(d: dict, prefix: str = "") -> dict:
    out = {}
    for k, v in d.items():
        key = f"{prefix}.{k}" if prefix else k
        if isinstance(v, dict):
            out.update(_flatten(v, key))
        else:
            out[key] = v
    return out


_CONFIG_ALIASES = {
    "field.decay": "decay", "field.grid": "grid", "velocity.kind": "velocity_kind",
    "velocity.a": "velocity_a", "velocity.grid": "velocity_grid",
}


def parse_args(argv=None) -> argparse.Namespace:
    ap = build_parser()
    args = ap.parse_args(argv)
    if args.config:
        try:
            raw = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        flat = {_CONFIG_ALIASES.get(k, k.replace("-", "_")): v for k, v in _flatten(raw).items()}
        sub = ap._subparsers._group_actions[0].choices[args.command]
        known = {a.dest for a in sub._actions} - {"help", "config"}
        unknown = sorted(set(flat) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        for a in sub._actions:
            if a.dest in flat and a.type is not None and isinstance(flat[a.dest], str):
                flat[a.dest] = a.type(flat[a.dest])
        sub.set_defaults(**flat)
        args = ap.parse_args(argv)
    return args


@dataclass
class Resolved:
    problem: Problem
    preset: str
    kind: str


def resolve(args: argparse.Namespace) -> Resolved:
    given = [f for f in FIELD_FLAGS if getattr(args, f, None) is not None]
    if args.preset != "custom" and given:
        flags = ", ".join("--" + f.replace("_", "-") for f in given)
        raise ConfigError(f"preset {args.preset} fixes the field; remove {flags}")
    if args.preset == "case1":
        cfg = FieldConfig(velocity=Constant(20.0, 0.0))
    elif args.preset == "case2":
        cfg = FieldConfig(velocity=Constant(50.0, 0.0))
    elif args.preset == "case3":
        cfg = FieldConfig(velocity=StreamField())
    else:
        grid = args.grid or (5, 5)
        decay = args.decay if args.decay is not None else 12.5
        centers = grid_centers(*grid) if grid[0] * grid[1] > 0 else np.zeros((0, 2))
        if (args.velocity_kind or "constant") == "constant":
            a = args.velocity_a or (20.0, 0.0)
            vel = Constant(float(a[0]), float(a[1]))
        else:
            if args.velocity_a is not None:
                raise ConfigError("--velocity-a applies to constant velocity only")
            vg = args.velocity_grid or grid
            vel = StreamField(centers=grid_centers(*vg), decay=decay)
        cfg = FieldConfig(centers=centers, decay=decay, velocity=vel)
    kind = args.disc or (GALERKIN if args.preset in ("case1", "custom") else SUPG)
    try:
        build_mesh(0, args.h0)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if (args.command not in ("spectrum",) and args.preset == "case2" and kind == GALERKIN
            and args.h0 > CASE2_GALERKIN_H0_MAX):
        raise ConfigError(
            f"galerkin with case2 is unstable on coarse meshes; need h0 <= 2^-5, got {args.h0}")
    return Resolved(Problem(cfg, kind, args.h0, args.solver), args.preset, kind)


def write_levels(path: Path, result) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LEVEL_HEADER)
        for s in result.levels:
            w.writerow([fmt(s.level), fmt(s.h), fmt(s.t), fmt(s.N), fmt(s.mean_diff),
                        fmt(s.var_diff), fmt(s.mean_val), fmt(s.var_val),
                        fmt(1e3 * s.cost_per_sample), fmt(s.iters_avg)])


def write_rows(path: Path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(x) for x in r])


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    return str(o)


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n",
                    encoding="utf-8")


def _one_line(res) -> str:
    return (f"{res.method}: estimate={res.estimate:.10g} stat_err={res.stat_err_est:.3g} "
            f"bias_est={res.bias_est:.3g} total_cost={res.total_cost:.4g}s")


def _run_estimator(args, r: Resolved, workers: int, out: Path) -> list[str]:
    lines = []
    p = r.problem
    z = read_generating_vector(args.lattice_file) if args.lattice_file else None
    if args.command == "mc" and args.eps is None:
        level = 0 if args.level is None else args.level
        N = args.samples or (FULL_SAMPLES if args.paper_scale else DESK_SAMPLES)
        results = [(None, mc_estimate(p, level, N, args.seed, workers, args.cost))]
    else:
        results = []
        for eps in args.eps:
            if args.command == "mc":
                res = mc_for_eps(p, eps, args.seed, workers, args.cost, args.max_level)
            elif args.command == "mlmc":
                res = mlmc_estimate(p, eps, args.L, args.max_level, args.seed, workers,
                                    args.cost)
            elif args.command == "mlmc-homotopy":
                res = mlmc_homotopy_estimate(p, eps, args.L or 3, args.seed, workers,
                                             args.cost)
            else:
                res = mlqmc_estimate(p, eps, args.L, args.max_level, args.eta, args.shifts, z,
                                     args.seed, workers, args.cost)
            results.append((eps, res))
    last = results[-1][1]
    write_levels(out / "levels.csv", last)
    write_json(out / "summary.json", last.summary() if len(results) == 1 else
               {"runs": [dict(res.summary(), eps=eps) for eps, res in results]})
    if len(results) > 1:
        write_rows(out / "complexity.csv", COMPLEXITY_HEADER,
                   [(eps, res.total_cost, res.estimate, res.stat_err_est, res.bias_est)
                    for eps, res in results])
    for _, res in results:
        lines.append(_one_line(res))
    return lines


def _run_rates(args, r: Resolved, workers: int, out: Path) -> list[str]:
    L = args.levels if args.levels is not None else (4 if args.paper_scale else 3)
    N = args.samples or (FULL_SAMPLES if args.paper_scale else DESK_SAMPLES)
    p = r.problem
    method = MLMC
    if args.homotopy:
        from dataclasses import replace
        p = replace(p, schedule=homotopy_schedule(L))
        method = MLMC_HOMOTOPY
    res = sample_levels(p, L, N, args.seed, workers, args.cost, method)
    write_levels(out / "levels.csv", res)
    write_json(out / "summary.json", res.summary())
    a = res.rates
    rates = "" if a is None else f" alpha={a[0]:.3f} beta={a[1]:.3f} gamma={a[2]:.3f}"
    return [_one_line(res) + rates]


def _run_spectrum(args, r: Resolved, out: Path) -> list[str]:
    p = r.problem
    mesh = build_mesh(0, args.h)
    omega = mc_sample(args.seed, 0, args.sample_index, p.cfg.s)
    sys_ = assemble(mesh, p.cfg, omega, r.kind, args.t)
    k = min(args.k, sys_.n - 2)
    eigs = arnoldi_smallest(sys_, k, SolverSettings(ncv=max(20, 2 * k + 1)))
    write_rows(out / "spectrum.csv", ["re", "im"], [(e.lam.real, e.lam.imag) for e in eigs])
    unstable = detect_instability(eigs)
    write_json(out / "summary.json", {"h": args.h, "k": k, "kind": r.kind, "unstable": unstable,
                                      "eigenvalues": [[e.lam.real, e.lam.imag] for e in eigs]})
    lam = eigs[0].lam
    return [f"spectrum: smallest={lam.real:.10g}{lam.imag:+.6g}i unstable={unstable}"]


def qmc_rate(problem: Problem, level: int, m_min: int, m_max: int, R: int, seed: int,
             workers: int = 1, z=None):
    """MSE of the lattice and MC estimators of E[lambda_level] for N = 2^m_min..2^m_max.

    Both use R independent replicates (random shifts, or disjoint MC batches);
    the smaller rules are the embedded sub-lattices of the largest one.
    """
    z = read_generating_vector() if z is None else z
    Nmax = 2**m_max
    rule = make_rule(z, problem.cfg.s, Nmax, R, seed, level)
    pts = np.vstack([rule.points(r) for r in range(R)])
    q = np.array([o.val for o in evaluate_many(problem, level, pts, workers, single=True)])
    q = q.reshape(R, Nmax)
    w = mc_samples(seed, level, range(R * Nmax), problem.cfg.s)
    m = np.array([o.val for o in evaluate_many(problem, level, w, workers, single=True)])
    m = m.reshape(R, Nmax)
    rows = []
    for k in range(m_min, m_max + 1):
        N = 2**k
        mse_q = np.var(q[:, :: Nmax // N].mean(axis=1), ddof=1) / R
        mse_m = np.var(m[:, :N].mean(axis=1), ddof=1) / R
        rows.append((N, mse_q, mse_m))
    ms = np.arange(m_min, m_max + 1)
    slope_q = float(np.polyfit(ms, np.log2([r[1] for r in rows]), 1)[0])
    slope_m = float(np.polyfit(ms, np.log2([r[2] for r in rows]), 1)[0])
    return rows, slope_q, slope_m


def _run_qmc_rate(args, r: Resolved, workers: int, out: Path) -> list[str]:
    z = read_generating_vector(args.lattice_file) if args.lattice_file else None
    rows, sq, sm = qmc_rate(r.problem, args.level, args.m_min, args.m_max, args.shifts,
                            args.seed, workers, z)
    write_rows(out / "qmc_rate.csv", ["N", "mse_qmc", "mse_mc"], rows)
    write_json(out / "summary.json", {"slope_qmc": sq, "slope_mc": sm})
    return [f"qmc-rate: slope_qmc={sq:.3f} slope_mc={sm:.3f}"]


def run(args: argparse.Namespace, argv=None) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.time()
    r = resolve(args)
    workers = args.workers if args.workers is not None else default_workers()
    if workers < 1:
        raise ConfigError("--workers must be at least 1")
    if args.command in ("mc", "mlmc", "mlmc-homotopy", "mlqmc"):
        lines = _run_estimator(args, r, workers, out)
    elif args.command == "rates":
        lines = _run_rates(args, r, workers, out)
    elif args.command == "spectrum":
        lines = _run_spectrum(args, r, out)
    else:
        lines = _run_qmc_rate(args, r, workers, out)
    manifest = {
        "version": __version__,
        "command": args.command,
        "config": {k: v for k, v in sorted(vars(args).items())},
        "resolved": {"preset": r.preset, "kind": r.kind, "s": r.problem.cfg.s,
                     "workers": workers},
        "argv": list(sys.argv[1:] if argv is None else argv),
        "started": time.strftime("%Y-%m-%dT%H:%M:%S%z", time.localtime(t0)),
        "elapsed_s": time.time() - t0,
    }
    write_json(out / "manifest.json", manifest)
    for line in lines:
        print(line)
    return 0


def main(argv=None) -> int:
    try:
        args = parse_args(argv)
    except ConfigError as exc:
        print(json.dumps({"error": "config", "message": str(exc)}))
        return 2
    try:
        return run(args, argv)
    except ConfigError as exc:
        err = {"error": "config", "message": str(exc)}
        code = 2
    except Exception as exc:  # report any failure as JSON for scripted sweeps
        err = {"error": type(exc).__name__, "message": str(exc)}
        code = 3
    print(json.dumps(err))
    try:
        write_json(Path(args.out) / "error.json", err)
    except OSError:
        pass
    return code


if __name__ == "__main__":
    sys.exit(main())
