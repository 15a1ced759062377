"""Command-line entry point: simulate, sweep, multiplier, mrr, verify.

Exit codes: 0 success, 1 an acceptance or pass/fail check failed, 2 bad
configuration or input, 3 numerical failure.

Configuration precedence, highest first: ``--set section.key=value``
flags, dedicated flags of the subcommand, the ``--config`` INI file, the
built-in defaults.
"""

from __future__ import annotations

import argparse
import math
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__, acceptance, analytics, green, mrr, pde, scaling
from .config import (ConfigError, RunConfig, load_config, load_thresholds, metaorder_from_config,
                     model_from_config, sweep_values)
from .core import MetaorderSpec, ModelParams
from .files import write_json, write_trajectory
from .perturbation import ConvergenceError

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2, 3

# used by sweeps when the config has no [model] section
REFERENCE_BOOK = ModelParams.infinite_memory(1.0, 1.0)


def _parse_sets(items):
    out = {}
    for item in items or ():
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects section.key=value, got {item!r}")
        out[key.strip()] = value.strip()
    return out


def _config(args, extra=None) -> RunConfig:
    overrides = dict(extra or {})
    overrides.update(_parse_sets(args.set))
    return load_config(args.config, overrides)


def _outdir(args, cfg) -> Path:
    out = Path(args.out or cfg.get("output", "dir"))
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"output directory {out} is not writable: {exc}") from None
    return out


def _t_end(cfg, params, order):
    if cfg.has("metaorder", "t_end"):
        t_end = cfg.getfloat("metaorder", "t_end")
        if not t_end > order.T:
            raise ConfigError("[metaorder] t_end must exceed T")
        return t_end
    return 4.0 * order.T if params.nu == 0 else max(4.0 * order.T, 10.0 * params.tm)


def _pde_grid(cfg, params, order, t_end):
    kw = {"scheme": cfg.get("grid", "scheme"), "resolution": cfg.getint("grid", "resolution")}
    for key in ("dx", "dt", "dt_max", "dt_growth"):
        if cfg.has("grid", key):
            kw[key] = cfg.getfloat("grid", key)
    if kw["scheme"] not in pde.SCHEMES:
        raise ConfigError(f"[grid] scheme must be one of {pde.SCHEMES}")
    return pde.default_grid(params, order.T, t_end, order.Q, **kw)


# --- subcommands ------------------------------------------------------------

def cmd_simulate(args) -> int:
    extra = {}
    if args.Q is not None:
        extra["metaorder.Q"] = args.Q
    if args.T is not None:
        extra["metaorder.T"] = args.T
    cfg = _config(args, extra)
    params = model_from_config(cfg)
    order = metaorder_from_config(cfg)
    t_end = _t_end(cfg, params, order)
    out = _outdir(args, cfg)
    stem = out / f"trajectory_{args.engine}"
    try:
        if args.engine == "pde":
            grid = _pde_grid(cfg, params, order, t_end)
            grid.check_stability(params)
            traj = pde.run_metaorder(params, grid, order, t_end)
        else:
            traj = green.solve_trajectory(params, order, t_end, n_exec=cfg.getint("grid", "n_exec"))
    except pde.NumericalError as exc:
        diag = {"error": str(exc), "engine": args.engine, "config": cfg.as_dict()}
        if exc.state is not None:
            diag["last_time"] = exc.state.t
            diag["last_price"] = exc.state.x_t
        write_json(out / f"diagnostics_{args.engine}.json", diag)
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    csv_path, json_path = write_trajectory(traj, stem, cfg.as_dict())
    print(f"engine={args.engine} peak={traj.peak:.6g} plateau={traj.plateau:.6g}")
    print(f"wrote {csv_path} and {json_path}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    extra = {}
    for name in ("axis", "engine", "workers"):
        value = getattr(args, name)
        if value is not None:
            extra[f"sweep.{name}"] = value
    cfg = _config(args, extra)
    axis = cfg.get("sweep", "axis")
    if axis not in ("Q", "t"):
        raise ConfigError("[sweep] axis must be Q or t")
    engine = cfg.get("sweep", "engine")
    if engine not in scaling.ENGINES:
        raise ConfigError(f"[sweep] engine must be one of {scaling.ENGINES}")
    params = model_from_config(cfg) if cfg.has("model", "sigma1") else REFERENCE_BOOK
    values = sweep_values(cfg)
    try:
        scaling.check_sweep_axis(values)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    target = cfg.getfloat("sweep", "target", 0.5 if axis == "Q" else -0.5)
    tol = cfg.getfloat("sweep", "tolerance")
    T = cfg.getfloat("metaorder", "T", 1.0)
    out = _outdir(args, cfg)
    try:
        if axis == "Q":
            y = scaling.q_sweep(params, T, values, engine=engine, workers=cfg.getint("sweep", "workers"))
        else:
            Q = cfg.getfloat("metaorder", "Q", 0.1)
            t_end = float(values.max())
            if not t_end > T:
                raise ConfigError("decay sweep times must lie after the execution horizon")
            order = MetaorderSpec(Q, T)
            if engine == "pde":
                grid = pde.default_grid(params, T, t_end, Q, dx=0.02 * params.sigma1 * math.sqrt(T))
                traj = pde.run_metaorder(params, grid, order, t_end)
            else:
                traj = green.solve_trajectory(params, order, t_end)
            y = traj.at(values)
    except (pde.NumericalError, ConvergenceError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    fit = scaling.loglog_fit(values, y)
    passed = fit.within(target, tol)
    with open(out / f"sweep_{axis}.csv", "w") as fh:
        fh.write(f"{axis},impact\n")
        for a, b in zip(values, y):
            fh.write(f"{float(a)!r},{float(b)!r}\n")
    write_json(out / f"sweep_{axis}.json", {"axis": axis, "engine": engine, "target": target,
                                           "tolerance": tol, "passed": passed, "fit": fit.as_dict(),
                                           "values": values, "impact": y, "config": cfg.as_dict()})
    print(f"slope={fit.slope:.4f} ci95=[{fit.ci_low:.4f}, {fit.ci_high:.4f}] "
          f"target={target:g}+-{tol:g} {'PASS' if passed else 'FAIL'}")
    return EXIT_OK if passed else EXIT_FAIL


def cmd_multiplier(args) -> int:
    if (args.tm is None) == (args.delta is None):
        raise ConfigError("give exactly one of --tm and --delta")
    if (args.universe is None) == (args.synthetic is None):
        raise ConfigError("give exactly one of --universe and --synthetic")
    cfg = _config(args)
    out = _outdir(args, cfg)
    if args.universe is not None:
        try:
            u = analytics.ingest(args.universe)
        except OSError as exc:
            raise ConfigError(f"cannot read {args.universe}: {exc}") from None
    else:
        u = analytics.synthetic_universe(args.synthetic, seed=args.seed)
    if not len(u):
        raise ConfigError("universe has no valid records")
    table = analytics.multipliers(u, delta=args.delta, tm=args.tm)
    table.to_csv(out / "multipliers.csv")
    table.to_points(out / "multipliers_points.txt")
    mean, std = float(np.mean(table.M)), float(np.std(table.M))
    payload = {"mode": table.mode, "provenance": u.provenance, "mean_M": mean, "std_M": std,
               "row_errors": u.row_errors, "config": cfg.as_dict()}
    if len(u) >= analytics.MIN_FIT_RECORDS:
        try:
            payload["fit"] = analytics.summarize_and_fit(table).as_dict()
        except np.linalg.LinAlgError as exc:
            payload["fit_error"] = str(exc)
    write_json(out / "fit.json", payload)
    if len(u) == 1:
        print(f"M={table.M[0]:.6g}")
    print(f"mean M={mean:.6g}, std M={std:.6g}")
    return EXIT_OK


def cmd_mrr(args) -> int:
    extra = {f"mrr.{k}": getattr(args, k) for k in ("s", "c1", "v0", "n_trades", "seed")
             if getattr(args, k) is not None}
    cfg = _config(args, extra)
    try:
        mc = mrr.MrrConfig(s=cfg.getfloat("mrr", "s"), c1=cfg.getfloat("mrr", "c1"),
                           v0=cfg.getfloat("mrr", "v0"), n_trades=cfg.getint("mrr", "n_trades"),
                           seed=cfg.getint("mrr", "seed"))
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"[mrr] {exc}") from None
    out = _outdir(args, cfg)
    res = mrr.simulate(mc)
    z = res.closure_z()
    za = res.autocorr_z()
    passed = abs(z) <= 3 and abs(za) <= 3
    payload = res.as_dict()
    payload.update({"closure_z": z, "autocorr_z": za, "passed": passed,
                    "budget": mrr.vol_budget(mc, 1, res), "config": cfg.as_dict()})
    write_json(out / "mrr.json", payload)
    print(f"upsilon measured={res.measured_upsilon:.6g} +- {res.upsilon_stderr:.2g} "
          f"analytic={mc.upsilon:.6g} closure z={z:.2f} acf z={za:.2f} {'PASS' if passed else 'FAIL'}")
    return EXIT_OK if passed else EXIT_FAIL


def cmd_verify(args) -> int:
    thresholds = None
    if args.thresholds:
        try:
            thresholds = load_thresholds(args.thresholds)
        except OSError as exc:
            raise ConfigError(f"cannot read thresholds {args.thresholds}: {exc}") from None
    selected = acceptance.select(args.filter)
    if not selected:
        raise ConfigError(f"--filter {args.filter!r} matches no criterion")
    results = acceptance.run(args.filter, coarsen=args.coarsen, thresholds=thresholds, echo=print)
    n_pass = sum(r.passed for r in results)
    print(f"{n_pass}/{len(results)} criteria passed")
    out = Path(args.out) if args.out else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        write_json(out / "acceptance.json", {"coarsen": args.coarsen, "filter": args.filter,
                                             "results": [r.as_dict() for r in results]})
    return EXIT_OK if n_pass == len(results) else EXIT_FAIL


# --- parser -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI parameter file")
    common.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                        help="override one config value (repeatable)")
    common.add_argument("--out", help="output directory (default [output] dir)")

    p = argparse.ArgumentParser(prog="latent-impact", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", parents=[common], help="simulate one metaorder")
    s.add_argument("--engine", choices=("pde", "green"), default="pde")
    s.add_argument("--Q", type=float)
    s.add_argument("--T", type=float)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("sweep", parents=[common], help="scaling fit over Q or over time")
    s.add_argument("--axis", choices=("Q", "t"))
    s.add_argument("--engine", choices=scaling.ENGINES)
    s.add_argument("--workers", type=int)
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("multiplier", parents=[common], help="per-stock multipliers and cubic fit")
    s.add_argument("--universe", help="CSV with header ticker,sigma1,adv,mcap")
    s.add_argument("--synthetic", type=int, metavar="N", help="use a synthetic universe of N stocks")
    s.add_argument("--seed", type=int, default=0)
    mode = s.add_mutually_exclusive_group()
    mode.add_argument("--tm", type=float, help="memory time in days")
    mode.add_argument("--delta", type=float, help="volatility threshold")
    s.set_defaults(func=cmd_multiplier)

    s = sub.add_parser("mrr", parents=[common], help="Monte Carlo check of the per-trade volatility")
    s.add_argument("--s", type=float)
    s.add_argument("--c1", type=float)
    s.add_argument("--v0", type=float)
    s.add_argument("--n-trades", dest="n_trades", type=int)
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_mrr)

    s = sub.add_parser("verify", help="run the acceptance suite")
    s.add_argument("--filter", help="comma-separated criterion numbers, names or groups")
    s.add_argument("--coarsen", type=int, default=1, help="coarsen PDE grids by this factor")
    s.add_argument("--thresholds", help="alternative thresholds INI")
    s.add_argument("--out", help="directory for acceptance.json")
    s.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (pde.NumericalError, ConvergenceError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValueError, analytics.IngestError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
