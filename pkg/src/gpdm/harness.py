"""Experiment orchestration: single runs, convergence sweeps, comparisons.

A sweep cell samples a cloud, resolves the bandwidth from a multiplicative
schedule anchored at one auto-tuned reference size, assembles the requested
solver, integrates the manufactured problem to the evaluation time, and
records scaled-l2 and maximum errors against the true solution on the node
set. Cells fail independently; the sweep continues and flags them.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from . import ghost, kernel, spectral, timestep
from .geometry import PointCloud, knn_search, load_point_cloud
from .problems import ManufacturedProblem


def error_norms(u: np.ndarray, u_true: np.ndarray):
    """Scaled l2 norm sqrt(mean((u - u_true)^2)) and maximum norm."""
    u = np.asarray(u, dtype=float)
    u_true = np.asarray(u_true, dtype=float)
    if u.shape != u_true.shape:
        raise ValueError("vectors must have equal length")
    diff = u - u_true
    return float(np.sqrt(np.mean(diff ** 2))), float(np.abs(diff).max())


@dataclass(frozen=True)
class EpsilonSchedule:
    """Bandwidth schedule eps(N) = eps_ref * (n_ref / N)^rho.

    eps_ref = None means "auto-tune at n_ref before the sweep".
    rho = 0 with a fixed eps_ref gives a constant bandwidth.
    """

    rho: float
    n_ref: int
    eps_ref: float | None = None

    def resolve(self, n: int) -> float:
        if self.eps_ref is None:
            raise ValueError("schedule not anchored; call anchor_schedule first")
        return float(self.eps_ref * (self.n_ref / n) ** self.rho)

    def describe(self) -> str:
        anchor = "auto" if self.eps_ref is None else f"{self.eps_ref:g}"
        return f"eps(N) = {anchor} * ({self.n_ref}/N)^{self.rho:g}"


def anchor_schedule(
    schedule: EpsilonSchedule,
    problem: ManufacturedProblem,
    k: int,
    mode: str | None = None,
    seed: int = 0,
) -> EpsilonSchedule:
    """Fill in eps_ref by auto-tuning on the reference-size cloud."""
    if schedule.eps_ref is not None:
        return schedule
    mode = mode or problem.default_mode
    cloud = problem.sample(schedule.n_ref, mode, seed)
    nbrs = knn_search(cloud, min(k, cloud.n_points - 1))
    report = kernel.tune_bandwidth(cloud, nbrs)
    return replace(schedule, eps_ref=report.chosen_epsilon)


def _trial_seed(base_seed: int, n: int, trial: int) -> int:
    return int(np.random.SeedSequence([base_seed, n, trial]).generate_state(1)[0])


def mean_boundary_spacing(cloud: PointCloud, p: int = 10) -> np.ndarray:
    """estimate_h for every boundary point at once."""
    tree = cKDTree(cloud.points)
    dist, _ = tree.query(cloud.points[cloud.boundary_index], k=p + 1)
    return dist[:, 1:].mean(axis=1)


def build_boundary_blocks(
    cloud: PointCloud,
    neighbors,
    cfg: kernel.KernelConfig,
    mode: str,
    collar_exponent: float = 0.5,
    layers: int | None = None,
) -> ghost.GpdmBlocks:
    """Normals, collar, extrapolation and GPDM assembly in one call.

    Well-sampled clouds use secant normals with the grid spacing as h (the
    interior companion then coincides with a grid point); random clouds use
    the kernel/SVD normals and the mean 10-neighbor distance. The layer
    count defaults to the collar-depth rule but may be forced.
    """
    if mode == "grid":
        normals, spacing = ghost.secant_frame(cloud, neighbors)
    else:
        est = ghost.estimate_normal_kernel(cloud)
        normals = est.normals
        spacing = mean_boundary_spacing(cloud)
    if layers is None:
        layers = ghost.ghost_layer_count(cfg.epsilon, float(np.median(spacing)), collar_exponent)
    frame = ghost.build_ghost_points(cloud, normals, spacing, layers, snap=(mode == "grid"))
    extrap = ghost.build_extrapolation_matrix(frame, cloud)
    return ghost.assemble_gpdm_operator(cloud, frame, extrap, cfg)


@dataclass
class SingleRun:
    """Final-state record of one integrated trajectory."""

    points: np.ndarray
    values: np.ndarray
    truth: np.ndarray
    abs_error: np.ndarray
    err_l2: float
    err_linf: float
    epsilon: float
    k: int
    h_mean: float
    layers: int
    t_end: float
    history: list = field(default_factory=list)  # (t, err_l2, err_linf) per step


def run_single(
    problem: ManufacturedProblem,
    n: int,
    k: int,
    epsilon: float,
    dt: float,
    t_end: float,
    solver: str = "gpdm",
    mode: str | None = None,
    seed: int = 0,
    truncation_layers: int = 3,
    layers: int | None = None,
    record_history: bool = False,
) -> SingleRun:
    """Sample, assemble, integrate, and score one solver configuration.

    solver: "dm" (closed manifolds, or the finite-difference Neumann
    baseline), "gpdm" (ghost-corrected boundary treatment), or "vcdm"
    (truncation baseline, homogeneous Dirichlet only).
    """
    if problem.equation == "burgers":
        return run_burgers(
            problem, n, k=k, dt=dt, t_end=t_end, basis=solver, epsilon=epsilon, seed=seed
        )
    mode = mode or problem.default_mode
    cloud = problem.sample(n, mode, seed)
    k_eff = min(k, cloud.n_points - 1)
    neighbors = knn_search(cloud, k_eff)
    cfg = kernel.KernelConfig(
        epsilon=epsilon, k=k_eff, intrinsic_dim=problem.intrinsic_dim, drift=problem.drift_ambient
    )
    ts = timestep.TimeStepConfig(
        dt=dt,
        t_end=t_end,
        forcing=problem.forcing_on,
        boundary_data=problem.g_on,
        bc_kind=problem.bc_kind,
    )
    n_steps = ts.n_steps

    if problem.bc_kind == "none":
        if solver != "dm":
            raise ValueError(f"solver {solver!r} needs a boundary; use 'dm' on closed manifolds")
        op = kernel.assemble_dm_operator(cloud, neighbors, cfg)
        pts = cloud.points
        solver_f = timestep.SddFactorization(timestep.implicit_matrix(op.matrix, dt))
        state = timestep.SolutionState(t=0.0, values=problem.u_on(pts, 0.0))
        history = []
        for _ in range(n_steps):
            state = timestep.step_closed(op, state, ts, pts, solver=solver_f)
            if record_history:
                history.append((state.t, *error_norms(state.values, problem.u_on(pts, state.t))))
        values, truth = state.values, problem.u_on(pts, state.t)
        h_mean, layers = 0.0, 0
    elif solver == "vcdm":
        if problem.bc_kind != "dirichlet":
            raise ValueError("vcdm applies to Dirichlet problems only")
        g_b = problem.g_on(cloud.points[cloud.boundary_index])
        if g_b.size and np.abs(g_b).max() > 1e-13:
            raise ValueError("vcdm supports homogeneous Dirichlet data only")
        op = kernel.assemble_vcdm_operator(cloud, neighbors, cfg, truncation_layers)
        retained = op.retained_index
        pts_r = cloud.points[retained]
        solver_f = timestep.SddFactorization(timestep.implicit_matrix(op.matrix, dt))
        u = problem.u_on(pts_r, 0.0)
        history = []
        t = 0.0
        for step in range(n_steps):
            t = (step + 1) * dt
            u = solver_f.solve(u + dt * problem.forcing_on(pts_r, t))
            if record_history:
                full = np.zeros(cloud.n_points)
                full[retained] = u
                history.append((t, *error_norms(full, problem.u_on(cloud.points, t))))
        # removed collar is pinned to the (zero) boundary data
        values = np.zeros(cloud.n_points)
        values[retained] = u
        pts = cloud.points
        truth = problem.u_on(pts, t)
        h_mean, layers = 0.0, truncation_layers
    elif solver == "dm":
        # baseline: the no-boundary DM scheme applied as-is, with the
        # finite-difference Neumann condition U_b = U_companion + h*g
        # enforced on boundary nodes after each implicit step
        if problem.bc_kind != "neumann":
            raise ValueError("the plain-DM baseline handles Neumann problems only")
        op = kernel.assemble_dm_operator(cloud, neighbors, cfg)
        blocks = ghost.split_dm_blocks(cloud, op.matrix, neighbors, cfg)
        pts = cloud.points
        g = problem.g_on(pts[cloud.boundary_index])
        solver_f = timestep.SddFactorization(timestep.implicit_matrix(op.matrix, dt))
        u = problem.u_on(pts, 0.0)
        history = []
        t = 0.0
        for step in range(n_steps):
            t = (step + 1) * dt
            u = solver_f.solve(u + dt * problem.forcing_on(pts, t))
            u[cloud.boundary_index] = u[blocks.interior_ghost_rows] + blocks.spacing * g
            if record_history:
                history.append((t, *error_norms(u, problem.u_on(pts, t))))
        values, truth = u, problem.u_on(pts, t)
        h_mean = float(blocks.spacing.mean())
        layers = 0
    else:
        if solver != "gpdm":
            raise ValueError(f"unknown solver {solver!r}")
        blocks = build_boundary_blocks(cloud, neighbors, cfg, mode, layers=layers)
        pts = blocks.row_points
        if problem.bc_kind == "dirichlet":
            matrix = blocks.dirichlet_operator()
            stepper = timestep.step_dirichlet
        else:
            matrix = blocks.neumann_operator()
            stepper = timestep.step_neumann
        solver_f = timestep.SddFactorization(timestep.implicit_matrix(matrix, dt))
        state = timestep.SolutionState(t=0.0, values=problem.u_on(pts, 0.0))
        history = []
        for _ in range(n_steps):
            state = stepper(blocks, state, ts, solver=solver_f)
            if record_history:
                history.append((state.t, *error_norms(state.values, problem.u_on(pts, state.t))))
        values, truth = state.values, problem.u_on(pts, state.t)
        h_mean = float(blocks.spacing.mean()) if blocks.spacing.size else 0.0
        layers = blocks.layers

    l2, linf = error_norms(values, truth)
    return SingleRun(
        points=pts,
        values=values,
        truth=truth,
        abs_error=np.abs(values - truth),
        err_l2=l2,
        err_linf=linf,
        epsilon=epsilon,
        k=k_eff,
        h_mean=h_mean,
        layers=layers,
        t_end=n_steps * dt,
        history=history,
    )


def run_burgers(
    problem: ManufacturedProblem,
    n: int,
    k: int = 100,
    k_modes: int = 160,
    dt: float = 1e-4,
    t_end: float = 0.005,
    basis: str = "gpdm",
    epsilon: float | None = None,
    seed: int = 0,
) -> SingleRun:
    """Pseudo-spectral Burgers run with a GPDM or plain-DM eigenbasis.

    The GPDM basis diagonalizes the Dirichlet interior block; the DM
    baseline uses the uncorrected operator over all nodes and therefore
    ignores the boundary condition.
    """
    if problem.equation != "burgers":
        raise ValueError("run_burgers needs a Burgers problem")
    cloud = problem.sample(n, "grid", seed)
    k_eff = min(k, cloud.n_points - 1)
    neighbors = knn_search(cloud, k_eff)
    if epsilon is None:
        epsilon = kernel.tune_bandwidth(cloud, neighbors).chosen_epsilon
    cfg0 = kernel.KernelConfig(epsilon=epsilon, k=k_eff, intrinsic_dim=1)
    cfg1 = kernel.KernelConfig(
        epsilon=epsilon, k=k_eff, intrinsic_dim=1, drift=problem.drift_ambient
    )
    if basis == "gpdm":
        normals, spacing = ghost.secant_frame(cloud, neighbors)
        layers = ghost.ghost_layer_count(epsilon, float(np.median(spacing)))
        frame = ghost.build_ghost_points(cloud, normals, spacing, layers, snap=True)
        extrap = ghost.build_extrapolation_matrix(frame, cloud)
        blocks0 = ghost.assemble_gpdm_operator(cloud, frame, extrap, cfg0)
        blocks1 = ghost.assemble_gpdm_operator(cloud, frame, extrap, cfg1)
        l0, l1 = blocks0.l_ii, blocks1.l_ii
        pts = blocks0.row_points[blocks0.interior_index]
        h_mean, n_layers = float(spacing.mean()), layers
    elif basis == "dm":
        l0 = kernel.assemble_dm_operator(cloud, neighbors, cfg0).matrix
        l1 = kernel.assemble_dm_operator(cloud, neighbors, cfg1).matrix
        pts = cloud.points
        blocks0 = None
        h_mean, n_layers = 0.0, 0
    else:
        raise ValueError(f"unknown basis {basis!r}")
    l2op = spectral.assemble_gradient_operator(l1, l0)
    eig = spectral.eigendecompose(l0, min(k_modes, l0.shape[0]))
    coeffs = spectral.initial_coefficients(eig, problem.u_on(pts, 0.0))
    state = spectral.spectral_state(eig, coeffs)
    n_steps = int(np.floor(t_end / dt + 1e-12))
    force = lambda t: problem.forcing_on(pts, t)
    for _ in range(n_steps):
        state = spectral.burgers_step(eig, l2op, state, forcing=force, dt=dt)
    if basis == "gpdm":
        all_pts = blocks0.row_points
        values = np.zeros(all_pts.shape[0])
        values[blocks0.interior_index] = state.grid_values
        values[blocks0.boundary_index] = 0.0
        truth = problem.u_on(all_pts, state.t)
        pts_out = all_pts
    else:
        values = state.grid_values
        truth = problem.u_on(pts, state.t)
        pts_out = pts
    l2e, linfe = error_norms(values, truth)
    return SingleRun(
        points=pts_out,
        values=values,
        truth=truth,
        abs_error=np.abs(values - truth),
        err_l2=l2e,
        err_linf=linfe,
        epsilon=epsilon,
        k=k_eff,
        h_mean=h_mean,
        layers=n_layers,
        t_end=n_steps * dt,
    )


@dataclass(frozen=True)
class ExperimentRow:
    n: int
    trial: int
    trial_seed: int
    epsilon: float
    k: int
    h_mean: float
    layers: int
    dt: float
    t_eval: float
    err_l2: float
    err_linf: float
    wall_time: float
    failure: str | None = None


@dataclass
class ExperimentResult:
    """Per-cell error records of one convergence sweep plus the fitted slope."""

    problem: str
    solver: str
    schedule: str
    rows: list
    slope: float | None = None
    slope_halfwidth: float | None = None

    def mean_errors(self):
        ns = sorted({r.n for r in self.rows if r.failure is None})
        means = [
            float(np.mean([r.err_l2 for r in self.rows if r.n == n and r.failure is None]))
            for n in ns
        ]
        return np.asarray(ns), np.asarray(means)

    def failed_cells(self):
        return [r for r in self.rows if r.failure is not None]


def fit_loglog_slope(ns, means):
    """Ordinary least squares of log(error) on log(N) with a 95% half-width."""
    ns = np.asarray(ns, dtype=float)
    means = np.asarray(means, dtype=float)
    if ns.size < 3:
        return None, None
    x, y = np.log(ns), np.log(means)
    xbar = x.mean()
    sxx = float(((x - xbar) ** 2).sum())
    slope = float(((x - xbar) * (y - y.mean())).sum() / sxx)
    resid = y - (y.mean() + slope * (x - xbar))
    dof = ns.size - 2
    se = float(np.sqrt((resid ** 2).sum() / dof / sxx)) if dof > 0 else np.nan
    return slope, 1.96 * se


def run_experiment(
    problem: ManufacturedProblem,
    sweep,
    trials: int,
    schedule: EpsilonSchedule,
    dt: float,
    t_eval: float,
    k: int,
    solver: str = "gpdm",
    mode: str | None = None,
    base_seed: int = 0,
    workers: int = 1,
    truncation_layers: int = 3,
) -> ExperimentResult:
    """Convergence sweep over N with per-(N, trial) error records.

    Failures in individual cells are recorded and skipped; the log-log
    slope is fitted on the per-N mean l2 errors of the surviving cells.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    mode = mode or problem.default_mode
    schedule = anchor_schedule(schedule, problem, k, mode, seed=_trial_seed(base_seed, schedule.n_ref, 0))
    cells = [(int(n), t) for n in sweep for t in range(trials)]

    def run_cell(cell):
        n, trial = cell
        seed = _trial_seed(base_seed, n, trial)
        eps = schedule.resolve(n)
        start = time.perf_counter()
        try:
            single = run_single(
                problem, n, k=k, epsilon=eps, dt=dt, t_end=t_eval,
                solver=solver, mode=mode, seed=seed, truncation_layers=truncation_layers,
            )
            elapsed = time.perf_counter() - start
            return ExperimentRow(
                n=n, trial=trial, trial_seed=seed, epsilon=single.epsilon, k=single.k,
                h_mean=single.h_mean, layers=single.layers, dt=dt, t_eval=single.t_end,
                err_l2=single.err_l2, err_linf=single.err_linf, wall_time=elapsed,
            )
        except Exception as exc:  # cell failure must not kill the sweep
            elapsed = time.perf_counter() - start
            return ExperimentRow(
                n=n, trial=trial, trial_seed=seed, epsilon=eps, k=k, h_mean=np.nan,
                layers=0, dt=dt, t_eval=t_eval, err_l2=np.nan, err_linf=np.nan,
                wall_time=elapsed, failure=f"{type(exc).__name__}: {exc}",
            )

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(run_cell, cells))
    else:
        rows = [run_cell(c) for c in cells]
    rows.sort(key=lambda r: (r.n, r.trial))
    result = ExperimentResult(
        problem=problem.name, solver=solver, schedule=schedule.describe(), rows=rows
    )
    ns, means = result.mean_errors()
    if ns.size >= 3:
        result.slope, result.slope_halfwidth = fit_loglog_slope(ns, means)
    return result


@dataclass
class Comparison:
    """Pointwise error fields of several solvers on one shared instance."""

    problem: str
    n: int
    t_eval: float
    fields: dict  # solver -> SingleRun
    summary: dict  # solver -> (err_l2, err_linf)
    winner: str


def compare_solvers(
    problem: ManufacturedProblem,
    solver_list,
    n: int,
    t_eval: float,
    dt: float,
    k: int,
    epsilon: float | None = None,
    mode: str | None = None,
    seed: int = 0,
    truncation_layers: int = 3,
) -> Comparison:
    """Run several solvers on the same instance and rank them by max error."""
    mode = mode or problem.default_mode
    if epsilon is None and problem.equation != "burgers":
        cloud = problem.sample(n, mode, seed)
        nbrs = knn_search(cloud, min(k, cloud.n_points - 1))
        epsilon = kernel.tune_bandwidth(cloud, nbrs).chosen_epsilon
    fields = {}
    for solver in solver_list:
        if problem.equation == "burgers":
            fields[solver] = run_burgers(
                problem, n, k=k, dt=dt, t_end=t_eval, basis=solver, epsilon=epsilon, seed=seed
            )
        else:
            fields[solver] = run_single(
                problem, n, k=k, epsilon=epsilon, dt=dt, t_end=t_eval,
                solver=solver, mode=mode, seed=seed, truncation_layers=truncation_layers,
            )
    summary = {s: (r.err_l2, r.err_linf) for s, r in fields.items()}
    winner = min(summary, key=lambda s: summary[s][1])
    return Comparison(
        problem=problem.name, n=n, t_eval=t_eval, fields=fields, summary=summary, winner=winner
    )


@dataclass
class IngestedHeatResult:
    """Diagnostics of a heat/advection-diffusion run on an ingested cloud."""

    n_points: int
    epsilon: float
    k: int
    times: list
    snapshots: list  # (t, min, max, mean) at requested times
    max_growth_factor: float  # max over steps of ||U^{n+1}||_inf / ||U^n||_inf
    mean_increments: list  # per-step change of the spatial mean
    values: np.ndarray  # final state


def heat_on_ingested_cloud(
    path,
    t_samples,
    k: int = 200,
    epsilon: float | None = None,
    dt: float = 1e-3,
    forcing_constant: float = 1.0,
    advect: bool = False,
    intrinsic_dim: int = 2,
    fmt: str | None = None,
) -> IngestedHeatResult:
    """Heat (or advection-diffusion) run on a closed ingested cloud.

    Initial data is the coordinate sum; the forcing is a constant. With
    advect=True the drift is the constant vector (1, ..., 1) projected onto
    the estimated tangent spaces. Reports extrema at the sample times plus
    step-growth diagnostics (no reference solution exists here).
    """
    cloud = load_point_cloud(path, fmt=fmt, intrinsic_dim=intrinsic_dim)
    if cloud.boundary_index.size:
        raise ValueError("ingested heat runs assume a closed manifold")
    k_eff = min(k, cloud.n_points - 1)
    neighbors = knn_search(cloud, k_eff)
    if epsilon is None:
        epsilon = kernel.tune_bandwidth(cloud, neighbors).chosen_epsilon
    drift = None
    if advect:
        vectors = ghost.tangent_project(cloud, np.ones(cloud.ambient_dim))
        tree = cKDTree(cloud.points)

        def drift(points):
            _, idx = tree.query(points)
            return vectors[idx]

    cfg = kernel.KernelConfig(epsilon=epsilon, k=k_eff, intrinsic_dim=intrinsic_dim, drift=drift)
    op = kernel.assemble_dm_operator(cloud, neighbors, cfg)
    ts = timestep.TimeStepConfig(
        dt=dt,
        t_end=max(t_samples),
        forcing=(lambda pts, t: np.full(pts.shape[0], forcing_constant)),
        bc_kind="none",
    )
    solver_f = timestep.SddFactorization(timestep.implicit_matrix(op.matrix, dt))
    state = timestep.SolutionState(t=0.0, values=cloud.points.sum(axis=1))
    wanted = sorted(t_samples)
    snapshots = []
    max_growth = 0.0
    mean_incr = []
    next_i = 0
    for _ in range(ts.n_steps):
        prev_inf = float(np.abs(state.values).max())
        prev_mean = float(state.values.mean())
        state = timestep.step_closed(op, state, ts, cloud.points, solver=solver_f)
        max_growth = max(max_growth, float(np.abs(state.values).max()) / max(prev_inf, 1e-300))
        mean_incr.append(float(state.values.mean()) - prev_mean)
        while next_i < len(wanted) and state.t >= wanted[next_i] - 1e-12:
            snapshots.append(
                (state.t, float(state.values.min()), float(state.values.max()), float(state.values.mean()))
            )
            next_i += 1
    return IngestedHeatResult(
        n_points=cloud.n_points,
        epsilon=epsilon,
        k=k_eff,
        times=wanted,
        snapshots=snapshots,
        max_growth_factor=max_growth,
        mean_increments=mean_incr,
        values=state.values,
    )


def write_result_csv(result: ExperimentResult, path) -> None:
    with open(path, "w") as fh:
        fh.write("n,trial,trial_seed,epsilon,k,h_mean,layers,dt,t_eval,err_l2,err_linf,wall_time,failure\n")
        for r in result.rows:
            fail = "" if r.failure is None else r.failure.replace(",", ";")
            fh.write(
                f"{r.n},{r.trial},{r.trial_seed},{r.epsilon:.17g},{r.k},{r.h_mean:.17g},"
                f"{r.layers},{r.dt:.17g},{r.t_eval:.17g},{r.err_l2:.17g},{r.err_linf:.17g},"
                f"{r.wall_time:.6g},{fail}\n"
            )


def emit_plots(result: ExperimentResult, out_dir, guide_slope: float | None = None):
    """CSV plus a log-log error-vs-N chart (SVG) with slope annotation."""
    ns, means = result.mean_errors()
    if ns.size == 0:
        raise ValueError("result has no successful cells to plot")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = f"{result.problem}_{result.solver}"
    csv_path = out_dir / f"{stem}.csv"
    write_result_csv(result, csv_path)

    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5.2, 4.0))
    ok = [r for r in result.rows if r.failure is None]
    ax.loglog([r.n for r in ok], [r.err_l2 for r in ok], "x", color="m", label="l2 (trials)")
    ax.loglog([r.n for r in ok], [r.err_linf for r in ok], "x", color="r", alpha=0.5, label="max (trials)")
    ax.loglog(ns, means, "m--", label="l2 mean")
    if guide_slope is not None and ns.size >= 2:
        guide = means[0] * (ns / ns[0]) ** guide_slope
        ax.loglog(ns, guide, "k:", label=f"N^{guide_slope:g}")
    title = f"{result.problem} [{result.solver}]"
    if result.slope is not None:
        title += f"  slope={result.slope:.3f}"
        if result.slope_halfwidth is not None and np.isfinite(result.slope_halfwidth):
            title += f"+-{result.slope_halfwidth:.3f}"
    ax.set_title(title, fontsize=10)
    ax.set_xlabel("N")
    ax.set_ylabel("error at t_eval")
    ax.legend(fontsize=8)
    fig.tight_layout()
    svg_path = out_dir / f"{stem}.svg"
    fig.savefig(svg_path)
    plt.close(fig)
    return [csv_path, svg_path]
