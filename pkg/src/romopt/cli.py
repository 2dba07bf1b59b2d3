"""Command-line front end: offline database construction and online queries.

Exit codes: 0 success, 2 usage or configuration error, 3 numerical
non-convergence.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import logging
import os
import sys
import time
import warnings

import numpy as np

from . import aeroelastic as aero
from . import database as dbm
from .errors import ConfigurationError, DatabaseFormatError, RomOptError
from .manifold import ManifoldKind
from .optimizer import (make_hdm_nlp, make_rom_nlp, multi_start_points, solve_nlp,
                        write_history_csv)
from .parametric import HDM_SOLVES, solve_full
from .problems import DeskDesignProblem, ParamQuadratic, reduced_compliance, thermal_block
from .reduction import ReducedSystem, reduced_qoi_gradient, solve_reduced
from .textio import load_system

EXIT_OK, EXIT_CONFIG, EXIT_NONCONV = 0, 2, 3
log = logging.getLogger("romopt")

STRATEGIES = ("classical", "random", "saturation", "saturation-fixed", "surrogate",
              "factorial", "lhs")


class RunConfig:
    """Flat ``[section] key = value`` configuration with typed accessors."""

    def __init__(self, path=None, text=None):
        self.cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
        if path is not None:
            if not os.path.isfile(path):
                raise ConfigurationError(f"config file {path} does not exist")
            with open(path, "rb") as fh:
                raw = fh.read()
            self.base = os.path.dirname(os.path.abspath(path))
        else:
            raw = (text or "").encode()
            self.base = os.getcwd()
        try:
            self.cp.read_string(raw.decode())
        except configparser.Error as exc:
            raise ConfigurationError(f"malformed config: {exc}") from None
        self.hash = hashlib.sha256(raw).hexdigest()[:16]

    def get(self, section, key, default=None):
        if self.cp.has_option(section, key):
            return self.cp.get(section, key).strip()
        return default

    def floats(self, section, key, default=None):
        v = self.get(section, key)
        if v is None:
            return default
        try:
            return np.array([float(t) for t in v.replace(",", " ").split()])
        except ValueError:
            raise ConfigurationError(f"[{section}] {key}: expected numbers, got {v!r}") from None

    def float(self, section, key, default=None):
        v = self.floats(section, key)
        return default if v is None else float(v[0])

    def int(self, section, key, default=None):
        v = self.get(section, key)
        if v is None:
            return default
        try:
            return int(v)
        except ValueError:
            raise ConfigurationError(f"[{section}] {key}: expected an integer, got {v!r}") from None

    def path(self, section, key):
        v = self.get(section, key)
        if v is None:
            return None
        p = v if os.path.isabs(v) else os.path.join(self.base, v)
        if not os.path.exists(p):
            raise ConfigurationError(f"[{section}] {key}: path {p} does not exist")
        return p


# ----------------------------------------------------------------------
# Builders from config


def _system(cfg):
    path = cfg.path("problem", "system")
    if path:
        return load_system(path)
    kind = cfg.get("problem", "type", "thermal_block")
    if kind != "thermal_block":
        raise ConfigurationError(f"unknown problem type {kind!r}")
    return thermal_block(cfg.int("problem", "n", 15), cfg.float("problem", "lower", 1.0),
                         cfg.float("problem", "upper", 3.0))


def _design_problem(cfg, sys):
    n = sys.n_mu
    lin = cfg.floats("optimizer", "objective_linear", np.linspace(1.0, 2.0, n))
    curv = cfg.floats("optimizer", "objective_curvature", np.full(n, 0.5))
    center = cfg.floats("optimizer", "objective_center", sys.box.lower.copy())
    for name, v in (("objective_linear", lin), ("objective_curvature", curv),
                    ("objective_center", center)):
        if v.size != n:
            raise ConfigurationError(f"[optimizer] {name} needs {n} values")
    c_max = cfg.float("optimizer", "compliance_max")
    if c_max is None:
        c_lo = float(sys.rhs(sys.box.lower) @ solve_full(sys, sys.box.lower))
        c_hi = float(sys.rhs(sys.box.upper) @ solve_full(sys, sys.box.upper))
        c_max = c_hi + cfg.float("optimizer", "compliance_fraction", 0.35) * (c_lo - c_hi)
    return DeskDesignProblem(sys, ParamQuadratic(lin, curv, center), c_max)


def _builder(cfg, sys):
    kind = ManifoldKind.parse(cfg.get("interpolation", "matrix_manifold", "spd"))
    return dbm.LocalRomBuilder(sys, k=cfg.int("sampling", "k"), matrix_kind=kind,
                               theta=cfg.float("interpolation", "theta"))


def _candidates(cfg, box):
    levels = cfg.floats("sampling", "levels")
    if levels is None:
        levels = np.full(box.dim, 5)
    return dbm.full_factorial(box, levels.astype(int),
                              cfg.int("sampling", "cap", 1_000_000))


def run_strategy(cfg, sys, strategy, seed, threads=1):
    """Run one sampling strategy; returns a :class:`GreedyResult`."""
    if strategy not in STRATEGIES:
        raise ConfigurationError(f"unknown strategy {strategy!r}; choose from {STRATEGIES}")
    builder = _builder(cfg, sys)
    ind = dbm.ResidualIndicator(sys)
    eps = cfg.float("sampling", "eps_tol", 0.05)
    n_pi = cfg.int("sampling", "n_pi", 20)
    n_sanity = cfg.int("sampling", "n_sanity")
    if strategy in ("factorial", "lhs"):
        pts = (_candidates(cfg, sys.box) if strategy == "factorial" else
               dbm.latin_hypercube(sys.box, cfg.int("sampling", "n_samples", 10), seed))
        db = builder.start(pts[0])
        for p in pts[1:]:
            db = db.with_entry(builder(p))
        res = dbm.GreedyResult(strategy, db, True, float("nan"))
        res.added = [(i, 0, float("nan")) for i in range(len(pts))]
        return res
    xi = _candidates(cfg, sys.box)
    if strategy == "classical":
        return dbm.classical_greedy(xi, eps, builder, ind, threads=threads)
    if strategy == "random":
        return dbm.random_greedy(xi, n_pi, eps, seed, builder, ind, n_sanity=n_sanity,
                                 threads=threads)
    if strategy.startswith("saturation"):
        return dbm.saturation_greedy(
            xi, n_pi, eps, cfg.float("sampling", "gamma", 1.0),
            cfg.float("sampling", "tau_init", 1.0), seed, builder, ind,
            adaptive=strategy == "saturation", n_sanity=n_sanity,
            rho_max_reset=cfg.float("sampling", "rho_max_reset", 0.0))
    return dbm.surrogate_greedy(xi, cfg.int("sampling", "n_s", 10), eps, seed, builder, ind,
                                n_sanity=n_sanity)


def _outdir(args, cfg):
    out = args.output or cfg.get("output", "directory", "out")
    if not os.path.isabs(out) and args.output is None:
        out = os.path.join(cfg.base, out)
    os.makedirs(out, exist_ok=True)
    return out


def _seed(args, cfg):
    if args.seed is not None:
        return args.seed
    s = cfg.int("sampling", "seed")
    if s is None:
        raise ConfigurationError("an explicit seed is required ([sampling] seed or --seed)")
    return s


def _csv(path, header, rows, cfg):
    with open(path, "w", newline="") as fh:
        fh.write(f"# config-hash: {cfg.hash}\n")
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def _fmt(x):
    return "%.17g" % x


def write_greedy_history(res, path, cfg):
    rows = []
    for h in res.history:
        mu = "" if h.mu is None else " ".join(_fmt(v) for v in h.mu)
        rows.append([h.iteration, mu, _fmt(h.max_indicator), _fmt(h.tau), h.evaluations,
                     h.skips, int(h.sanity)])
    _csv(path, ["iteration", "mu", "max_indicator", "tau", "evaluations", "skips", "sanity"],
         rows, cfg)


# ----------------------------------------------------------------------
# Commands


def cmd_build_db(args, cfg):
    sys_ = _system(cfg)
    strategy = cfg.get("sampling", "strategy", "saturation")
    res = run_strategy(cfg, sys_, strategy, _seed(args, cfg), args.threads)
    out = _outdir(args, cfg)
    path = args.db or os.path.join(out, "database.romdb")
    dbm.save(res.database, path)
    write_greedy_history(res, os.path.join(out, "greedy_history.csv"), cfg)
    dbm.export_csv(res.database, os.path.join(out, "database_entries.csv"), res.added,
                   comment=f"config-hash: {cfg.hash}")
    print(f"strategy={strategy} entries={len(res.database)} "
          f"indicator_evals={res.indicator_evals} skips={res.skips} "
          f"final_max={_fmt(res.final_max)} converged={res.converged}")
    print(f"database written to {path}")
    return EXIT_OK if res.converged else EXIT_NONCONV


def cmd_query(args, cfg):
    if not args.db:
        raise ConfigurationError("query needs --db PATH")
    db = dbm.load(args.db)
    try:
        mu = np.array([float(t) for t in args.mu.replace(",", " ").split()])
    except ValueError:
        raise ConfigurationError(f"malformed parameter vector {args.mu!r}") from None
    if mu.size != db.n_mu:
        raise ConfigurationError(f"parameter vector needs {db.n_mu} values, got {mu.size}")
    before = HDM_SOLVES.total
    rom = db.interpolator(mu, sensitivity=True)
    rs = ReducedSystem(rom.A_r, rom.b_r)
    w_r = solve_reduced(rs)
    q = reduced_compliance(rom)
    val = q.eval(w_r, mu)
    grad = reduced_qoi_gradient(rs, rom.dA_r, rom.db_r, q, w_r, mu)
    print("mu " + " ".join(_fmt(v) for v in mu))
    print("w_r " + " ".join(_fmt(v) for v in w_r))
    print("compliance " + _fmt(val))
    print("dcompliance_dmu " + " ".join(_fmt(v) for v in grad))
    if args.verbose:
        assert HDM_SOLVES.total == before, "online query performed a full-order solve"
        print("hdm_solves 0")
    return EXIT_OK


def cmd_greedy_bench(args, cfg):
    sys_ = _system(cfg)
    names = [s.strip() for s in cfg.get("bench", "strategies", "").split(",") if s.strip()]
    if len(names) < 2:
        raise ConfigurationError("[bench] strategies must list at least two strategies")
    seeds = cfg.floats("bench", "seeds")
    seeds = [_seed(args, cfg)] if seeds is None else [int(s) for s in seeds]
    n_xi = len(_candidates(cfg, sys_.box))
    rows = []
    ok = True
    for name in names:
        for seed in seeds:
            t0 = time.perf_counter()
            res = run_strategy(cfg, sys_, name, seed, args.threads)
            wall = time.perf_counter() - t0
            ok &= res.converged
            rows.append([name, seed, n_xi, len(res.database), res.indicator_evals, res.skips,
                         _fmt(res.final_max), int(res.converged), "%.3f" % wall])
            print(f"{name:17s} seed={seed} sampled={len(res.database)} "
                  f"evals={res.indicator_evals} skips={res.skips} "
                  f"final_max={res.final_max:.4g} converged={res.converged}")
    out = _outdir(args, cfg)
    _csv(os.path.join(out, "greedy_bench.csv"),
         ["strategy", "seed", "N_xi", "sampled_hdm", "indicator_evals", "skips",
          "final_max_indicator", "converged", "wall_time_s"], rows, cfg)
    return EXIT_OK if ok else EXIT_NONCONV


def cmd_optimize(args, cfg):
    sys_ = _system(cfg)
    prob = _design_problem(cfg, sys_)
    tol = cfg.float("optimizer", "tol", 1e-6)
    if args.baseline == "hdm":
        nlp = make_hdm_nlp(sys_, prob.objective, prob.hdm_constraints())
    else:
        if not args.db:
            raise ConfigurationError("ROM optimization needs --db PATH")
        db = dbm.load(args.db)
        if db.n_mu != sys_.n_mu:
            raise ConfigurationError("database and problem parameter dimensions differ")
        nlp = make_rom_nlp(db, prob.objective, prob.rom_constraints(), sys_.box)
    if args.multi_start:
        starts = multi_start_points(sys_.box, args.multi_start, _seed(args, cfg))
    else:
        mu0 = cfg.floats("optimizer", "mu0", sys_.box.center)
        if mu0.size != sys_.n_mu:
            raise ConfigurationError(f"[optimizer] mu0 needs {sys_.n_mu} values")
        starts = [mu0]
    HDM_SOLVES.reset()
    results = [solve_nlp(nlp, s, tol) for s in starts]
    online = HDM_SOLVES.total
    conv = [r for r in results if r.report.converged]
    best = min(conv or results, key=lambda r: r.report.objective)
    out = _outdir(args, cfg)
    rows = []
    for i, (s, r) in enumerate(zip(starts, results)):
        rep = r.report
        rows.append([i, " ".join(_fmt(v) for v in s), " ".join(_fmt(v) for v in r.mu),
                     _fmt(rep.objective), " ".join(_fmt(v) for v in rep.constraints),
                     _fmt(rep.kkt_residual), int(rep.converged), rep.iterations,
                     rep.evaluations])
    _csv(os.path.join(out, f"optimize_{args.baseline}_starts.csv"),
         ["start", "mu0", "mu_opt", "f", "constraints", "kkt_residual", "converged",
          "iterations", "evaluations"], rows, cfg)
    write_history_csv(best.history, os.path.join(out, f"optimize_{args.baseline}_history.csv"),
                      comment=f"config-hash: {cfg.hash}")
    rep = best.report
    print(f"baseline={args.baseline} starts={len(starts)} converged={len(conv)}")
    print("mu_opt " + " ".join(_fmt(v) for v in best.mu))
    print("f_opt " + _fmt(rep.objective))
    print("constraints " + " ".join(_fmt(v) for v in rep.constraints))
    print(f"stationarity {_fmt(rep.stationarity)} violation {_fmt(rep.max_violation)} "
          f"complementarity {_fmt(rep.complementarity)}")
    print(f"iterations {rep.iterations} evaluations {rep.evaluations} hdm_solves {online}")
    return EXIT_OK if rep.converged else EXIT_NONCONV


def cmd_flutter(args, cfg):
    spec = cfg.path("aeroelastic", "model")
    if spec:
        fom = aero.load_fom_spec(spec)
    else:
        fom = aero.synthetic_fom(cfg.int("aeroelastic", "n_s", 10),
                                 cfg.int("aeroelastic", "n_f", 40),
                                 cfg.float("aeroelastic", "coupling", 0.2),
                                 _seed(args, cfg))
    k_s = cfg.int("aeroelastic", "k_s", 4)
    k_f = cfg.int("aeroelastic", "k_f", 12)
    xi = cfg.floats("aeroelastic", "xi", np.array([0.0, 0.5, 1.0, 2.0]))
    levels = cfg.floats("aeroelastic", "levels", np.full(fom.box.dim, 3)).astype(int)
    adb = aero.build_aero_database(fom, dbm.full_factorial(fom.box, levels), k_s, k_f, xi,
                                   cfg.float("interpolation", "theta"))
    q_levels = cfg.floats("aeroelastic", "query_levels", np.full(fom.box.dim, 5)).astype(int)
    points = [aero.flutter_analysis(adb, mu) for mu in dbm.full_factorial(fom.box, q_levels)]
    out = _outdir(args, cfg)
    path = os.path.join(out, "flutter.csv")
    aero.write_eigen_csv(points, path, comment=f"config-hash: {cfg.hash}")
    zmin = min(e.zeta for p in points for e in p.eigs)
    print(f"queries={len(points)} modes={len(points[0].eigs)} min_zeta={_fmt(zmin)}")
    print(f"eigenvalues written to {path}")
    return EXIT_OK


COMMANDS = {"build-db": cmd_build_db, "query": cmd_query, "greedy-bench": cmd_greedy_bench,
            "optimize": cmd_optimize, "flutter-analyze": cmd_flutter}


def build_parser():
    p = argparse.ArgumentParser(prog="romopt", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", help="run configuration file")
        s.add_argument("--db", help="database file")
        s.add_argument("--seed", type=int)
        s.add_argument("--threads", type=int, default=1)
        s.add_argument("--output", help="output directory")
        s.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)
        if name == "query":
            s.add_argument("--mu", required=True, help="parameter vector, e.g. '1.5 2 2.5'")
        if name == "optimize":
            s.add_argument("--multi-start", type=int, default=0)
            s.add_argument("--baseline", choices=("rom", "hdm"), default="rom")
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        parser.error("--threads must be >= 1")
    try:
        cfg = RunConfig(args.config) if args.config else RunConfig(text="")
        return COMMANDS[args.command](args, cfg)
    except (ConfigurationError, DatabaseFormatError) as exc:
        print(f"romopt: error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return EXIT_CONFIG
    except RomOptError as exc:
        print(f"romopt: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NONCONV


if __name__ == "__main__":
    sys.exit(main())
