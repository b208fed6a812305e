"""Local-kernel evaluation, bandwidth tuning, and diffusion-maps operators.

The anisotropic Gaussian kernel

    K_eps(x, y) = exp(-||x + eps*A(x) - y||^2 / (4*eps))

encodes a drift field A; its graph-Laplacian difference matrix estimates
the advection-diffusion operator a.grad + Laplace-Beltrami on the sampled
manifold. Assembly is restricted to a symmetrized k-nearest-neighbor
sparsity pattern and uses the unnormalized form

    L = (K W - D) / eps,    W = diag(1/q),   D = diag(K W 1),

where q is a drift-free kernel density estimate at the sample points.
For volume-uniform sampling q is the constant N m0 eps^(d/2) / Vol with
m0 = (4 pi)^(d/2) and L reduces to the textbook scaling
eps^(-d/2-1)/(m0 N) (K - D) times the volume; the pointwise weights keep
the estimator consistent on parameter-uniform grids and random draws,
whose per-volume density varies with the metric. Rows of L sum to zero
by construction, its diagonal is negative and its off-diagonal entries
are nonnegative, which is what makes the implicit time-stepping systems
strictly diagonally dominant.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
from scipy.spatial import cKDTree

from .geometry import NeighborLists, PointCloud

# Kernel entries below this are indistinguishable from zero at the scale of
# the row sums and are dropped from the sparse pattern.
DROP_TOL = 1e-15


class TuningError(RuntimeError):
    """Bandwidth tuning could not locate a usable scaling region."""


class ConditioningError(RuntimeError):
    """Kernel matrix degenerated (bandwidth too small for the sampling)."""


def m0_constant(intrinsic_dim: int) -> float:
    """Normalization m0 = (4*pi)^(d/2) of the advection-diffusion kernel."""
    return (4.0 * np.pi) ** (intrinsic_dim / 2.0)


@dataclass(frozen=True)
class KernelConfig:
    """Parameters of the local kernel.

    Attributes:
        epsilon: bandwidth (squared-length units), > 0.
        k: neighbor count for the sparsity pattern.
        intrinsic_dim: manifold dimension d entering the normalization.
        drift: optional map (N, m) points -> (N, m) ambient drift vectors
            (the pushforward of the intrinsic advection field). None means
            no advection.
        inverse_shape: optional map (N, m) points -> (N, m, m) symmetric PSD
            matrices C(x)^-1; None means the advection-diffusion default
            C^-1 = I/2, which eval_local_kernel and assembly exploit as a
            fast path.
    """

    epsilon: float
    k: int
    intrinsic_dim: int
    drift: Callable[[np.ndarray], np.ndarray] | None = None
    inverse_shape: Callable[[np.ndarray], np.ndarray] | None = None

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.intrinsic_dim < 1:
            raise ValueError("intrinsic_dim must be >= 1")


@dataclass(frozen=True)
class DiffusionOperator:
    """Sparse discrete estimator of the advection-diffusion operator.

    kind "DM" is the closed-manifold estimator with zero row sums; "VCDM"
    is the boundary-truncated variant whose rows may sum to a negative
    value (mass lost to the removed collar). `retained_index` maps VCDM
    rows back to the full cloud. `volume_estimate` is the kernel-based
    manifold volume restoring the dV normalization of the Monte-Carlo sum
    (the sample average estimates integrals against the normalized volume
    measure); it is recorded for audit alongside m0.
    """

    matrix: sp.csr_matrix
    epsilon: float
    k: int
    intrinsic_dim: int
    m0: float
    kind: str
    volume_estimate: float = 1.0
    boundary_index: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.intp))
    retained_index: np.ndarray | None = None

    @property
    def shape(self):
        return self.matrix.shape


@dataclass(frozen=True)
class BandwidthReport:
    """Log-log scan of the kernel sum S(eps) used for bandwidth selection."""

    epsilon_grid: np.ndarray
    log_s: np.ndarray
    chosen_epsilon: float
    estimated_dim: float


def eval_local_kernel(x, y, cfg: KernelConfig) -> float:
    """Kernel value for a single pair of ambient points.

    With the default shape this is exp(-||x + eps*A(x) - y||^2 / (4 eps));
    a custom inverse_shape C^-1 generalizes to the quadratic form
    exp(-(x + eps*A(x) - y)^T C(x)^-1 (x + eps*A(x) - y) / (2 eps)).
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise ValueError("x and y must share an ambient dimension")
    shifted = x.copy()
    if cfg.drift is not None:
        shifted = x + cfg.epsilon * np.asarray(cfg.drift(x[None, :]))[0]
    diff = shifted - y
    if cfg.inverse_shape is None:
        quad = 0.5 * float(diff @ diff)
    else:
        cinv = np.asarray(cfg.inverse_shape(x[None, :]))[0]
        quad = float(diff @ cinv @ diff)
    return float(np.exp(-quad / (2.0 * cfg.epsilon)))


def default_epsilon_grid(num: int = 121) -> np.ndarray:
    """Logarithmically spaced candidate bandwidths spanning [2^-14, 10]."""
    return np.geomspace(2.0 ** -14, 10.0, num)


def _slope_curve(log_s: np.ndarray, log_e: np.ndarray, smooth: int = 5) -> np.ndarray:
    """Centered-difference slope of log S vs log eps, moving-average smoothed.

    The smoothing window suppresses spurious wiggles that the gap structure
    of small random clouds imprints on the kernel sum.
    """
    slopes = np.full(log_e.size, np.nan)
    with np.errstate(invalid="ignore"):
        slopes[1:-1] = (log_s[2:] - log_s[:-2]) / (log_e[2:] - log_e[:-2])
    finite = np.flatnonzero(np.isfinite(slopes))
    if finite.size >= smooth > 1:
        vals = slopes[finite]
        pad = smooth // 2
        ext = np.concatenate([np.full(pad, vals[0]), vals, np.full(pad, vals[-1])])
        slopes[finite] = np.convolve(ext, np.ones(smooth) / smooth, mode="valid")
    return slopes


def _select_scaling_region(slopes: np.ndarray, target: float) -> int:
    """Grid index of the slope maximum nearest the expected value d/2.

    The slope of log S rises to ~d/2 in the resolved regime and decays
    toward saturation on both sides; on coarse clouds it also diverges as
    eps falls below the squared spacing, so the selection prefers interior
    local maxima and only falls back to the globally closest slope when
    the curve is monotone.
    """
    finite = np.isfinite(slopes)
    local_max = [
        i
        for i in range(1, slopes.size - 1)
        if finite[i - 1] and finite[i] and finite[i + 1]
        and slopes[i] >= slopes[i - 1] and slopes[i] >= slopes[i + 1]
    ]
    if local_max:
        return min(local_max, key=lambda i: abs(slopes[i] - target))
    return int(np.nanargmin(np.abs(np.where(finite, slopes, np.inf) - target)))


def tune_bandwidth(
    cloud: PointCloud,
    neighbors: NeighborLists,
    epsilon_grid: np.ndarray | None = None,
) -> BandwidthReport:
    """Select the bandwidth from the scaling of the kernel sum.

    S(eps), the Monte-Carlo kernel sum over kNN pairs, scales like
    (4 pi eps)^(d/2) / Vol(M) in the resolved regime, so the slope of
    log S against log eps plateaus at d/2 there. The chosen bandwidth is
    the grid point where the centered-difference slope attains the local
    maximum nearest d/2; twice that slope doubles as a dimension estimate.
    """
    if epsilon_grid is None:
        epsilon_grid = default_epsilon_grid()
    epsilon_grid = np.asarray(epsilon_grid, dtype=float)
    if epsilon_grid.size < 3 or np.any(np.diff(epsilon_grid) <= 0):
        raise ValueError("epsilon_grid must be strictly increasing with >= 3 points")
    sq = (neighbors.distances.ravel() ** 2)[None, :]
    with np.errstate(divide="ignore"):
        s_vals = np.exp(-sq / (4.0 * epsilon_grid[:, None])).mean(axis=1)
        log_s = np.log(s_vals)
    log_e = np.log(epsilon_grid)
    slopes = _slope_curve(log_s, log_e)
    valid = np.isfinite(slopes)
    finite_ls = log_s[np.isfinite(log_s)]
    if not valid.any() or finite_ls.size == 0 or np.allclose(finite_ls, finite_ls[0], atol=1e-12):
        raise TuningError("log S(eps) curve is degenerate; cannot tune bandwidth")
    # keep every point's nearest neighbor well inside the kernel support,
    # else a sparse spot of a random cloud disconnects at the chosen scale
    eps_floor = float(neighbors.distances[:, 0].max()) ** 2 / 40.0
    masked = np.where(epsilon_grid >= eps_floor, slopes, np.nan)
    if np.isfinite(masked).any():
        idx = _select_scaling_region(masked, cloud.intrinsic_dim / 2.0)
    else:
        idx = _select_scaling_region(slopes, cloud.intrinsic_dim / 2.0)
    chosen_slope = float(slopes[idx])
    if chosen_slope <= 0:
        raise TuningError("log S(eps) has no increasing region; cannot tune bandwidth")
    return BandwidthReport(
        epsilon_grid=epsilon_grid,
        log_s=log_s,
        chosen_epsilon=float(epsilon_grid[idx]),
        estimated_dim=2.0 * chosen_slope,
    )


def _drift_shift(points: np.ndarray, cfg: KernelConfig) -> np.ndarray:
    if cfg.drift is None:
        return points
    a = np.asarray(cfg.drift(points), dtype=float)
    if a.shape != points.shape:
        raise ValueError("drift map must return one ambient vector per point")
    return points + cfg.epsilon * a


def _kernel_values(row_shifted, col_points, rows, cols, cfg, row_points=None):
    diff = col_points[cols] - row_shifted[rows]
    if cfg.inverse_shape is None:
        quad = 0.5 * np.einsum("ij,ij->i", diff, diff)
    else:
        cinv = np.asarray(cfg.inverse_shape(row_points))
        quad = np.einsum("ij,ijk,ik->i", diff, cinv[rows], diff)
    return np.exp(-quad / (2.0 * cfg.epsilon))


def _knn_pairs(row_points, col_points, k, n_square):
    """kNN (row, col) index pairs, self-columns excluded, diagonal added.

    The pattern is union-symmetrized on the leading n_square x n_square
    block; columns beyond n_square (ghost points) only appear through the
    row-side query.
    """
    n_rows = row_points.shape[0]
    k_query = min(k + 1, col_points.shape[0])
    dist, idx = cKDTree(col_points).query(row_points, k=k_query)
    rows = np.repeat(np.arange(n_rows), k_query)
    cols = idx.ravel()
    # row i and column i hold the same point; drop that trivial pair
    keep = ~((cols == rows) & (cols < n_square))
    rows, cols = rows[keep], cols[keep]
    pattern = sp.coo_matrix(
        (np.ones(rows.size, dtype=np.int8), (rows, cols)),
        shape=(n_rows, col_points.shape[0]),
    ).tocsr()
    square = pattern[:, :n_square]
    square = (square + square.T).tocsr()
    square.setdiag(1)
    merged = sp.hstack([square, pattern[:, n_square:]]).tocoo()
    return merged.row, merged.col


def estimate_volume(density_sums: np.ndarray, epsilon: float, intrinsic_dim: int, n_norm: int) -> float:
    """Manifold volume from the drift-free kernel sums.

    The typical kernel sum is (n_norm / Vol) * m0 * eps^(d/2) (the local
    kernel integrates to m0 eps^(d/2) against dV), so the median inverts
    to a volume estimate; recorded on the operator for audit.
    """
    d_typical = float(np.median(density_sums))
    return n_norm * m0_constant(intrinsic_dim) * epsilon ** (intrinsic_dim / 2.0) / d_typical


def _density_sums(points, cfg) -> np.ndarray:
    """Drift-free kernel row sums q: a pointwise sampling-density estimate.

    q(x_j) is proportional to the number of samples per unit volume around
    x_j; dividing kernel columns by q makes the Monte-Carlo sums estimate
    integrals against dV itself, so the estimator stays consistent when
    the cloud is not volume-uniform (parameter-uniform grids and draws on
    curved manifolds never are).
    """
    n = points.shape[0]
    k_query = min(cfg.k + 1, n)
    dist, idx = cKDTree(points).query(points, k=k_query)
    rows = np.repeat(np.arange(n), k_query)
    cols = idx.ravel()
    pattern = sp.coo_matrix((np.ones(rows.size, dtype=np.int8), (rows, cols)), shape=(n, n)).tocsr()
    pattern = pattern + pattern.T
    r, c = pattern.tocoo().row, pattern.tocoo().col
    sq = np.einsum("ij,ij->i", points[c] - points[r], points[c] - points[r])
    vals = np.exp(-sq / (4.0 * cfg.epsilon))
    vals[(r != c) & (vals < DROP_TOL)] = 0.0
    kmat = sp.coo_matrix((vals, (r, c)), shape=(n, n)).tocsr()
    q = np.asarray(kmat.sum(axis=1)).ravel()
    # the diagonal may be missing from the kNN pattern on degenerate input
    q = q + (1.0 - kmat.diagonal())
    return q


def _assemble_graph_laplacian(row_points, col_points, cfg, n_norm, n_square=None):
    """Shared density-weighted (K - D) assembly over a kNN pattern.

    Returns (L, volume_estimate) with

        L_ij = K_ij / (eps * q_j)  (i != j),   L_ii closes the row to zero,

    where q is the drift-free kernel density estimate at the column
    points. For volume-uniform sampling q is constant and L reduces to the
    uniform form eps^(-d/2-1)/(m0 N) (K - D) up to its volume factor; the
    pointwise weights keep the estimator consistent on parameter-uniform
    grids and draws, whose density varies with the metric. Rows sum to
    zero exactly by construction. Raises ConditioningError when a row
    retains no off-diagonal mass.
    """
    if n_square is None:
        n_square = row_points.shape[0]
    rows, cols = _knn_pairs(row_points, col_points, cfg.k, n_square)
    shifted = _drift_shift(row_points, cfg)
    vals = _kernel_values(shifted, col_points, rows, cols, cfg, row_points=row_points)
    off_diag = rows != cols
    vals[off_diag & (vals < DROP_TOL)] = 0.0
    q = _density_sums(col_points, cfg)
    weighted = vals / (cfg.epsilon * q[cols])
    kmat = sp.coo_matrix((weighted, (rows, cols)), shape=(row_points.shape[0], col_points.shape[0])).tocsr()
    kmat.eliminate_zeros()
    diag_free = kmat.copy()
    diag_free.setdiag(0.0)
    diag_free.eliminate_zeros()
    counts = np.diff(diag_free.indptr)
    if np.any(counts == 0):
        bad = int(np.flatnonzero(counts == 0)[0])
        raise ConditioningError(
            f"bandwidth eps={cfg.epsilon:g} leaves point {bad} with no neighbors in the kernel"
        )
    d = np.asarray(kmat.sum(axis=1)).ravel()
    n_rows = row_points.shape[0]
    dmat = sp.csr_matrix((d, (np.arange(n_rows), np.arange(n_rows))), shape=kmat.shape)
    volume = estimate_volume(q, cfg.epsilon, cfg.intrinsic_dim, n_norm)
    return kmat - dmat, volume


def assemble_dm_operator(cloud: PointCloud, neighbors: NeighborLists, cfg: KernelConfig) -> DiffusionOperator:
    """Discrete advection-diffusion estimator on a cloud without ghosts.

    The neighbor lists fix k for the sparsity pattern; kernel values are
    evaluated on the union-symmetrized pattern.
    """
    cfg = _with_k(cfg, neighbors.k)
    matrix, volume = _assemble_graph_laplacian(cloud.points, cloud.points, cfg, n_norm=cloud.n_points)
    return DiffusionOperator(
        matrix=matrix.tocsr(),
        epsilon=cfg.epsilon,
        k=cfg.k,
        intrinsic_dim=cfg.intrinsic_dim,
        m0=m0_constant(cfg.intrinsic_dim),
        kind="DM",
        volume_estimate=volume,
        boundary_index=cloud.boundary_index.copy(),
    )


def _with_k(cfg: KernelConfig, k: int) -> KernelConfig:
    if cfg.k == k:
        return cfg
    return KernelConfig(
        epsilon=cfg.epsilon,
        k=k,
        intrinsic_dim=cfg.intrinsic_dim,
        drift=cfg.drift,
        inverse_shape=cfg.inverse_shape,
    )


def boundary_layers(cloud: PointCloud, ring_spacing: float | None = None) -> np.ndarray:
    """Distance ring of every point from the boundary (boundary itself = 0).

    Rings quantize the Euclidean distance to the nearest boundary point by
    the smallest off-boundary spacing, which reproduces grid layers on the
    tensor-grid samplers.
    """
    if cloud.boundary_index.size == 0:
        raise ValueError("cloud has no boundary points")
    tree = cKDTree(cloud.points[cloud.boundary_index])
    dist, _ = tree.query(cloud.points)
    interior = dist > 0
    if ring_spacing is None:
        if not interior.any():
            raise ValueError("cloud has no interior points")
        ring_spacing = float(dist[interior].min())
    return np.rint(dist / ring_spacing).astype(int)


def assemble_vcdm_operator(
    cloud: PointCloud,
    neighbors: NeighborLists,
    cfg: KernelConfig,
    truncation_layers: int,
) -> DiffusionOperator:
    """Volume-constraint operator: DM rows/columns truncated near the boundary.

    All points within `truncation_layers` distance rings of the boundary
    (and the boundary itself) are removed; the returned operator acts on the
    retained points and its rows sum to <= 0, the deficit being kernel mass
    that leaked into the removed collar.
    """
    if truncation_layers < 1:
        raise ValueError("truncation_layers must be >= 1")
    layers = boundary_layers(cloud)
    retained = np.flatnonzero(layers > truncation_layers)
    if retained.size == 0:
        raise ValueError("truncation removed every interior point")
    full = assemble_dm_operator(cloud, neighbors, cfg)
    sub = full.matrix[retained][:, retained].tocsr()
    return DiffusionOperator(
        matrix=sub,
        epsilon=cfg.epsilon,
        k=neighbors.k,
        intrinsic_dim=cfg.intrinsic_dim,
        m0=full.m0,
        kind="VCDM",
        volume_estimate=full.volume_estimate,
        boundary_index=np.empty(0, dtype=np.intp),
        retained_index=retained,
    )


def export_operator_triplets(op: DiffusionOperator, path) -> None:
    """Write the operator as `row col value` text triplets."""
    coo = op.matrix.tocoo()
    with open(path, "w") as fh:
        fh.write("# row col value\n")
        for r, c, v in zip(coo.row, coo.col, coo.data):
            fh.write(f"{r} {c} {v:.17g}\n")


def export_bandwidth_report(report: BandwidthReport, path) -> None:
    """Write the (epsilon, log S) scan as CSV."""
    with open(path, "w") as fh:
        fh.write("epsilon,log_s\n")
        for e, s in zip(report.epsilon_grid, report.log_s):
            fh.write(f"{e:.17g},{s:.17g}\n")
