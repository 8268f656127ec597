"""Command-line interface: ``hawkshape {simulate,estimate,shape,eval,sweep}``.

Settings come from an optional JSON ``--config`` file whose keys are the
long flag names (dashes or underscores); flags given on the command line
win. Exit codes: 0 success, 1 numerical failure, 2 usage or I/O error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import io
from .estimate import FitOptions, fit_mle, select_omega
from .evaluate import (BASELINES, NEEDS_TARGET, baseline_allocate, evaluate_simulated, evaluate_theoretical,
                       heldout_rank_correlation)
from .exceptions import ValidationError
from .model import BudgetSpec, ShapingTask
from .psi import psi_apply
from .shape import SolveOptions, cam_caps, pgd_solve, sparsity_sweep
from .simulate import MAX_EVENTS, generation_counts, simulate_cascades

DEFAULTS = dict(
    config=None, model=None, events=None, out=None, task="lsash", budget=None, costs="uniform",
    horizon=None, gamma=0.0, gammas=None, seed=0, runs=None, window=None, threads=None, tol=None,
    omega=None, folds=2, support=None, caps=None, target=None, max_iter=None, step_policy=None,
    max_events=MAX_EVENTS, incremental=False, schemes="theoretical,simulated", heldout_runs=50,
)


def _parser():
    p = argparse.ArgumentParser(prog="hawkshape", description="Hawkes activity shaping toolkit")
    sub = p.add_subparsers(dest="command", required=True)
    shared = argparse.ArgumentParser(add_help=False)
    a = shared.add_argument
    a("--config", help="JSON file with default settings")
    a("--model", help="model JSON file")
    a("--events", help="events CSV file")
    a("--out", help="output file (simulate, estimate) or directory (shape, eval, sweep)")
    a("--task", choices=["cam", "mmash", "lsash", "hom"])
    a("--budget", type=float, help="total budget C")
    a("--costs", help="'uniform' or a file of per-user costs")
    a("--horizon", type=float, help="time horizon t")
    a("--gamma", type=float, help="l1 weight")
    a("--seed", type=int)
    a("--runs", type=int, help="number of cascades / simulation runs")
    a("--window", type=float, help="window width for empirical rates")
    a("--threads", type=int)
    a("--tol", type=float, help="solver tolerance")
    sp_ = {}
    sp_["simulate"] = sub.add_parser("simulate", parents=[shared], help="simulate cascades from a model")
    sp_["simulate"].add_argument("--max-events", type=int)
    sp_["estimate"] = sub.add_parser("estimate", parents=[shared], help="fit a model to events")
    sp_["estimate"].add_argument("--omega", help="decay rate or comma-separated grid")
    sp_["estimate"].add_argument("--folds", type=int)
    sp_["estimate"].add_argument("--support", help="model JSON whose nonzeros restrict A")
    for name, text in (("shape", "optimize exogenous intensity"), ("eval", "compare against baselines"),
                       ("sweep", "sparsity sweep over gamma")):
        q = sub.add_parser(name, parents=[shared], help=text)
        q.add_argument("--caps", help="file of caps (cam); default drawn from the model intensity")
        q.add_argument("--target", help="file of target activity (lsash)")
        q.add_argument("--max-iter", type=int)
        q.add_argument("--step-policy", choices=["fixed", "backtracking", "diminishing", "smoothing"])
        q.add_argument("--incremental", action="store_true", default=None,
                       help="optimize an increment on top of the model intensity")
        sp_[name] = q
    sp_["sweep"].add_argument("--gammas", help="comma-separated ascending gamma values")
    sp_["eval"].add_argument("--schemes", help="comma-separated: theoretical,simulated,heldout")
    sp_["eval"].add_argument("--heldout-runs", type=int)
    return p


def _settings(args) -> dict:
    cfg = dict(DEFAULTS)
    if args.config:
        try:
            doc = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{args.config}:{exc.lineno}: invalid JSON ({exc.msg})") from None
        if not isinstance(doc, dict):
            raise ValidationError(f"{args.config}: config must be a JSON object")
        for k, v in doc.items():
            key = k.replace("-", "_")
            if key not in DEFAULTS:
                raise ValidationError(f"{args.config}: unknown setting {k!r}")
            cfg[key] = v
    for k, v in vars(args).items():
        if k != "command" and v is not None:
            cfg[k] = v
    return cfg


def _need(cfg, *keys):
    for k in keys:
        if cfg.get(k) is None:
            raise ValidationError(f"--{k.replace('_', '-')} is required")


def _threads(cfg):
    return int(cfg["threads"]) if cfg["threads"] else (os.cpu_count() or 1)


def _budget(cfg, m):
    _need(cfg, "budget")
    C = float(cfg["budget"])
    if cfg["costs"] in (None, "uniform"):
        return BudgetSpec(np.ones(m), C)
    return BudgetSpec(io.read_vector(cfg["costs"], m, "costs"), C)


def _check_budget_early(cfg):
    _need(cfg, "budget")
    if not float(cfg["budget"]) >= 0:
        raise ValidationError(f"budget must be >= 0, got {cfg['budget']}")


def _task(cfg, net, lambda0):
    kind = cfg["task"]
    gamma = float(cfg["gamma"])
    if kind == "cam":
        if cfg["caps"]:
            alpha = io.read_vector(cfg["caps"], net.m, "caps")
        else:
            alpha = cam_caps(lambda0, np.random.default_rng(cfg["seed"]))
        return ShapingTask.cam(alpha, gamma)
    if kind == "lsash":
        _need(cfg, "target")
        return ShapingTask.lsash(io.read_vector(cfg["target"], net.m, "target"), gamma=gamma)
    if kind == "mmash":
        return ShapingTask.mmash(gamma)
    return ShapingTask.hom(gamma)


def _solve_opts(cfg):
    kw = {}
    if cfg["max_iter"] is not None:
        kw["max_iter"] = int(cfg["max_iter"])
    if cfg["tol"] is not None:
        kw["tol"] = float(cfg["tol"])
    if cfg["step_policy"]:
        kw["step_policy"] = cfg["step_policy"]
    return SolveOptions(**kw)


def _outdir(cfg):
    _need(cfg, "out")
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_simulate(cfg):
    _need(cfg, "model", "out", "horizon")
    net, lam0 = io.read_model(cfg["model"])
    runs = int(cfg["runs"] or 1)
    log = simulate_cascades(net, lam0, float(cfg["horizon"]), runs, int(cfg["seed"]),
                            threads=min(_threads(cfg), runs), max_events=int(cfg["max_events"]))
    io.write_events(cfg["out"], log)
    counts = generation_counts(log, float(cfg["horizon"]), net.m)
    print(f"{log.n_events} events in {runs} cascades")
    print("events per user:", " ".join(str(int(x)) for x in counts.sum(axis=0)))
    print("events per generation:", " ".join(str(int(x)) for x in counts.sum(axis=1)))
    return 0


def cmd_estimate(cfg):
    _need(cfg, "events", "out")
    if not Path(cfg["events"]).exists():
        raise FileNotFoundError(f"events file not found: {cfg['events']}")
    support_net = io.read_model(cfg["support"])[0] if cfg["support"] else None
    m = support_net.m if support_net is not None else None
    log = io.read_events(cfg["events"], cfg["horizon"], m)
    opts = FitOptions(gtol=float(cfg["tol"])) if cfg["tol"] else FitOptions()
    om = cfg["omega"]
    grid = [float(x) for x in str(om).split(",")] if om is not None else list(opts.omega_grid)
    omega = select_omega(log, grid, int(cfg["folds"]), support_net, opts, m=m)
    fit = fit_mle(log, omega, support_net, opts, m=m)
    io.write_model(cfg["out"], fit.net, fit.lambda0)
    print(f"omega={omega} log-likelihood={fit.log_likelihood:.6g} iterations={fit.n_iter} "
          f"converged={fit.converged}")
    return 0 if fit.converged else 1


def _load_problem(cfg):
    _check_budget_early(cfg)
    _need(cfg, "model", "horizon")
    net, lam0 = io.read_model(cfg["model"])
    budget = _budget(cfg, net.m)
    task = _task(cfg, net, lam0)
    base = lam0 if cfg["incremental"] else None
    return net, lam0, budget, task, base


def _report_doc(rep):
    return dict(objective=rep.objective, utility=rep.utility, iterations=rep.iterations,
                budget_consumed=rep.budget_consumed, nonzeros=rep.nonzeros, converged=rep.converged)


def cmd_shape(cfg):
    out = _outdir(cfg)
    net, lam0, budget, task, base = _load_problem(cfg)
    rep = pgd_solve(task, net, float(cfg["horizon"]), budget, _solve_opts(cfg), base=base)
    io.write_table(out / "allocation.csv", ["user_id", "lambda0"], [(u, float(x)) for u, x in enumerate(rep.lam)])
    io.write_json(out / "report.json", _report_doc(rep))
    io.write_table(out / "trace.csv", ["iteration", "objective"], [(i, float(x)) for i, x in enumerate(rep.trace)])
    print(f"objective={rep.objective:.6g} nonzeros={rep.nonzeros} budget_consumed={rep.budget_consumed:.6g} "
          f"converged={rep.converged}")
    return 0


def cmd_sweep(cfg):
    out = _outdir(cfg)
    _need(cfg, "gammas")
    net, lam0, budget, task, base = _load_problem(cfg)
    gammas = cfg["gammas"]
    gammas = [float(x) for x in (gammas.split(",") if isinstance(gammas, str) else gammas)]
    rows = sparsity_sweep(task, net, float(cfg["horizon"]), budget, gammas, _solve_opts(cfg), base=base)
    io.write_table(out / "sweep.csv", ["gamma", "# Non-zeros", "Budget consumed", "utility", "objective", "error"],
                   [(r["gamma"], r["nonzeros"], r["budget_consumed"], r["utility"], r["objective"], r["error"])
                    for r in rows])
    for r in rows:
        print(f"gamma={r['gamma']:g} nonzeros={r['nonzeros']} budget={r['budget_consumed']}")
    return 0 if all(r["error"] is None for r in rows) else 1


def cmd_eval(cfg):
    out = _outdir(cfg)
    net, lam0, budget, task, _ = _load_problem(cfg)
    t = float(cfg["horizon"])
    schemes = [s.strip() for s in str(cfg["schemes"]).split(",") if s.strip()]
    bad = set(schemes) - {"theoretical", "simulated", "heldout"}
    if bad:
        raise ValidationError(f"unknown schemes {sorted(bad)}")
    target = task.v if task.kind == "lsash" else None
    rep = pgd_solve(task, net, t, budget, _solve_opts(cfg), base=lam0)
    allocs = {"BASE": np.zeros(net.m), "OPT": rep.lam}
    for kind in BASELINES:
        if kind in NEEDS_TARGET and target is None:
            continue
        allocs[kind] = baseline_allocate(kind, net, t, budget, lam0, target)
    runs = int(cfg["runs"] or 50)
    seed = int(cfg["seed"])
    rows = []
    for name, delta in allocs.items():
        lam = lam0 + delta
        if "theoretical" in schemes:
            rows.append((name, "theoretical", evaluate_theoretical(task, net, t, lam)))
        if "simulated" in schemes:
            rows.append((name, "simulated", evaluate_simulated(task, net, t, lam, runs, cfg["window"], seed,
                                                               threads=min(_threads(cfg), runs))))
    if "heldout" in schemes:
        _need(cfg, "events")
        log = io.read_events(cfg["events"], t, net.m)
        intervals = [log.subset([i]) for i in range(len(log))]
        res = heldout_rank_correlation(intervals, task, budget, t, _solve_opts(cfg), omega=net.omega,
                                       support=net.A, nruns=int(cfg["heldout_runs"]), window=cfg["window"],
                                       seed=seed, m=net.m)
        rows.append(("OPT", "heldout", res.score))
        if res.skipped:
            print(f"held-out: {res.skipped} intervals skipped")
    io.write_table(out / "comparison.csv", ["method", "scheme", "value"], rows)
    profile_names = list(allocs)
    mus = [psi_apply(net, t, lam0 + allocs[k]) for k in profile_names]
    io.write_table(out / "profile.csv", ["user_id"] + profile_names,
                   [[u] + [float(mu[u]) for mu in mus] for u in range(net.m)])
    for name, scheme, val in rows:
        print(f"{name:6s} {scheme:12s} {val:.6g}")
    return 0


COMMANDS = {"simulate": cmd_simulate, "estimate": cmd_estimate, "shape": cmd_shape, "eval": cmd_eval,
            "sweep": cmd_sweep}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = _settings(args)
        return COMMANDS[args.command](cfg)
    except ArithmeticError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
