"""Experiment command line.

Subcommands: tune (bandwidth report), solve (single manufactured run),
sweep (convergence study, flags or YAML config), compare (solver
comparison), burgers (spectral run), ingest-heat (heat equation on an
ingested cloud). Exits 0 on success; failures print one JSON error line
to stderr and exit 1.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import harness, kernel, timestep
from .geometry import knn_search
from .harness import EpsilonSchedule
from .problems import get_problem, problem_names


def _add_common(p):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--k", type=int, default=100, help="neighbor count")
    p.add_argument("--out-dir", default="results")


def _schedule_from_args(args) -> EpsilonSchedule:
    return EpsilonSchedule(rho=args.rho, n_ref=args.n_ref, eps_ref=args.eps_ref)


def _cmd_tune(args):
    prob = get_problem(args.problem)
    cloud = prob.sample(args.n, args.mode or prob.default_mode, args.seed)
    nbrs = knn_search(cloud, min(args.k, cloud.n_points - 1))
    report = kernel.tune_bandwidth(cloud, nbrs)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"bandwidth_{args.problem}_{args.n}.csv"
    kernel.export_bandwidth_report(report, path)
    print(f"chosen_epsilon={report.chosen_epsilon:.6g}")
    print(f"estimated_dim={report.estimated_dim:.4g}")
    print(f"report={path}")
    return 0


def _cmd_solve(args):
    prob = get_problem(args.problem)
    eps = args.epsilon
    if eps is None:
        cloud = prob.sample(args.n, args.mode or prob.default_mode, args.seed)
        nbrs = knn_search(cloud, min(args.k, cloud.n_points - 1))
        eps = kernel.tune_bandwidth(cloud, nbrs).chosen_epsilon
    run = harness.run_single(
        prob, args.n, k=args.k, epsilon=eps, dt=args.dt, t_end=args.t_end,
        solver=args.solver, mode=args.mode, seed=args.seed, layers=args.layers,
    )
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    snap = out / f"solve_{args.problem}_{args.solver}_{args.n}.csv"
    timestep.export_snapshot(snap, run.points, run.values, run.truth)
    print(f"epsilon={run.epsilon:.6g}")
    print(f"err_l2={run.err_l2:.6g}")
    print(f"err_linf={run.err_linf:.6g}")
    print(f"snapshot={snap}")
    return 0


def _cmd_sweep(args):
    if args.config:
        import yaml

        with open(args.config) as fh:
            cfg = yaml.safe_load(fh)
        prob = get_problem(cfg["problem"])
        schedule = EpsilonSchedule(
            rho=float(cfg["schedule"]["rho"]),
            n_ref=int(cfg["schedule"]["n_ref"]),
            eps_ref=cfg["schedule"].get("eps_ref"),
        )
        result = harness.run_experiment(
            prob,
            sweep=[int(n) for n in cfg["sweep"]],
            trials=int(cfg.get("trials", 1)),
            schedule=schedule,
            dt=float(cfg["dt"]),
            t_eval=float(cfg["t_eval"]),
            k=int(cfg.get("k", 100)),
            solver=cfg.get("solver", "gpdm"),
            mode=cfg.get("mode"),
            base_seed=int(cfg.get("seed", 0)),
            workers=int(cfg.get("workers", 1)),
        )
        out_dir = cfg.get("out_dir", args.out_dir)
        guide = cfg.get("guide_slope")
    else:
        if not args.problem or not args.sweep:
            raise ValueError("sweep needs either --config or --problem and --sweep sizes")
        prob = get_problem(args.problem)
        if not args.n_ref:
            args.n_ref = min(args.sweep)
        result = harness.run_experiment(
            prob,
            sweep=args.sweep,
            trials=args.trials,
            schedule=_schedule_from_args(args),
            dt=args.dt,
            t_eval=args.t_end,
            k=args.k,
            solver=args.solver,
            mode=args.mode,
            base_seed=args.seed,
            workers=args.workers,
        )
        out_dir = args.out_dir
        guide = -args.rho if args.guide else None
    paths = harness.emit_plots(result, out_dir, guide_slope=guide)
    if result.slope is not None:
        print(f"slope={result.slope:.4f}")
        print(f"slope_halfwidth={result.slope_halfwidth:.4f}")
    failed = result.failed_cells()
    if failed:
        print(f"failed_cells={len(failed)}")
    for p in paths:
        print(f"artifact={p}")
    return 0


def _cmd_compare(args):
    prob = get_problem(args.problem)
    cmp_res = harness.compare_solvers(
        prob, args.solvers, n=args.n, t_eval=args.t_end, dt=args.dt, k=args.k,
        epsilon=args.epsilon, mode=args.mode, seed=args.seed,
        truncation_layers=args.truncation_layers,
    )
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for solver, run in cmp_res.fields.items():
        path = out / f"compare_{args.problem}_{solver}_{args.n}.csv"
        timestep.export_snapshot(path, run.points, run.values, run.truth)
        l2, linf = cmp_res.summary[solver]
        print(f"{solver}: err_l2={l2:.6g} err_linf={linf:.6g} field={path}")
    print(f"winner={cmp_res.winner}")
    return 0


def _cmd_burgers(args):
    prob = get_problem("sine_burgers")
    for basis in args.bases:
        run = harness.run_burgers(
            prob, args.n, k=args.k, k_modes=args.modes, dt=args.dt,
            t_end=args.t_end, basis=basis, epsilon=args.epsilon, seed=args.seed,
        )
        print(f"{basis}: err_l2={run.err_l2:.6g} err_linf={run.err_linf:.6g} epsilon={run.epsilon:.6g}")
    return 0


def _cmd_ingest_heat(args):
    res = harness.heat_on_ingested_cloud(
        args.path, t_samples=args.times, k=args.k, epsilon=args.epsilon,
        dt=args.dt, forcing_constant=args.forcing, advect=args.advect,
        intrinsic_dim=args.intrinsic_dim,
    )
    print(f"n_points={res.n_points}")
    print(f"epsilon={res.epsilon:.6g}")
    for t, lo, hi, mean in res.snapshots:
        print(f"t={t:.6g} min={lo:.6g} max={hi:.6g} mean={mean:.6g}")
    print(f"max_growth_factor={res.max_growth_factor:.8g}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gpdm", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("tune", help="bandwidth report for a sampled cloud")
    p.add_argument("--problem", required=True, choices=problem_names())
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--mode", choices=["grid", "random"])
    _add_common(p)
    p.set_defaults(func=_cmd_tune)

    p = sub.add_parser("solve", help="single manufactured-problem run")
    p.add_argument("--problem", required=True, choices=problem_names())
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--solver", default="gpdm", choices=["dm", "gpdm", "vcdm"])
    p.add_argument("--mode", choices=["grid", "random"])
    p.add_argument("--epsilon", type=float)
    p.add_argument("--dt", type=float, default=1e-3)
    p.add_argument("--t-end", type=float, default=0.05)
    p.add_argument("--layers", type=int, help="ghost collar layers (default: depth rule)")
    _add_common(p)
    p.set_defaults(func=_cmd_solve)

    p = sub.add_parser("sweep", help="convergence study over N")
    p.add_argument("--config", help="YAML experiment description (overrides flags)")
    p.add_argument("--problem", choices=problem_names())
    p.add_argument("--sweep", type=int, nargs="+", default=[])
    p.add_argument("--trials", type=int, default=1)
    p.add_argument("--solver", default="gpdm", choices=["dm", "gpdm", "vcdm"])
    p.add_argument("--mode", choices=["grid", "random"])
    p.add_argument("--rho", type=float, default=1.0, help="schedule exponent")
    p.add_argument("--n-ref", type=int, default=0, help="schedule anchor size")
    p.add_argument("--eps-ref", type=float, help="schedule anchor bandwidth (default: auto-tune)")
    p.add_argument("--dt", type=float, default=1e-4)
    p.add_argument("--t-end", type=float, default=0.005)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--guide", action="store_true", help="draw the N^-rho guide line")
    _add_common(p)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("compare", help="pointwise comparison of solvers")
    p.add_argument("--problem", required=True, choices=problem_names())
    p.add_argument("--solvers", nargs="+", default=["gpdm", "dm"])
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--mode", choices=["grid", "random"])
    p.add_argument("--epsilon", type=float)
    p.add_argument("--dt", type=float, default=1e-3)
    p.add_argument("--t-end", type=float, default=0.05)
    p.add_argument("--truncation-layers", type=int, default=3)
    _add_common(p)
    p.set_defaults(func=_cmd_compare)

    p = sub.add_parser("burgers", help="pseudo-spectral Burgers on the sine curve")
    p.add_argument("--n", type=int, default=800)
    p.add_argument("--modes", type=int, default=160)
    p.add_argument("--bases", nargs="+", default=["gpdm", "dm"])
    p.add_argument("--epsilon", type=float)
    p.add_argument("--dt", type=float, default=1e-4)
    p.add_argument("--t-end", type=float, default=0.005)
    _add_common(p)
    p.set_defaults(func=_cmd_burgers)

    p = sub.add_parser("ingest-heat", help="heat equation on an ingested cloud")
    p.add_argument("path")
    p.add_argument("--times", type=float, nargs="+", default=[0.01, 0.1])
    p.add_argument("--epsilon", type=float)
    p.add_argument("--dt", type=float, default=1e-3)
    p.add_argument("--forcing", type=float, default=1.0)
    p.add_argument("--advect", action="store_true")
    p.add_argument("--intrinsic-dim", type=int, default=2)
    _add_common(p)
    p.set_defaults(func=_cmd_ingest_heat)

    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:
        print(json.dumps({"error": type(exc).__name__, "detail": str(exc)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
