"""Boundary machinery: normals, ghost collars, extrapolation, GPDM assembly.

Kernel estimates of differential operators are biased within an
O(eps^r)-band of the boundary. The fix implemented here supplements the
cloud with ghost points along estimated outward normals,

    x_{b,k} = x_b + k*h*nu_b,   k = 1..K,

assigns them values by linear extrapolation from the boundary value and an
interior companion x_{b,0} = x_b - h*nu_b, and folds the extrapolation into
the operator so the result is again a square matrix over the manifold
nodes. Normals come from a grid secant (well-sampled clouds) or from a
weighted local SVD (random clouds).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.spatial import cKDTree

from .geometry import DUPLICATE_RTOL, NeighborLists, PointCloud
from .kernel import (
    KernelConfig,
    _assemble_graph_laplacian,
    _select_scaling_region,
    _slope_curve,
    default_epsilon_grid,
    m0_constant,
)


class NormalEstimationError(RuntimeError):
    """Normal direction could not be recovered at a boundary point."""


class GhostConstructionError(RuntimeError):
    """Ghost points collide with the cloud or with each other."""


@dataclass(frozen=True)
class GhostFrame:
    """Ghost collar attached to the boundary points of a cloud.

    interior_ghost_merge[b] >= 0 means the interior companion of boundary
    point b coincides with (was snapped to) that existing cloud point;
    -1 marks a genuinely new point appended to the node set.
    """

    normals: np.ndarray  # (B, m) unit outward normals
    spacing: np.ndarray  # (B,) ghost spacing h per boundary point
    layers: int  # K >= 1
    exterior_ghosts: np.ndarray  # (B, K, m)
    interior_ghosts: np.ndarray  # (B, m)
    interior_ghost_merge: np.ndarray  # (B,) int

    @property
    def n_boundary(self) -> int:
        return self.normals.shape[0]

    def ghost_columns(self) -> np.ndarray:
        """Exterior ghosts flattened in (b, k) order, shape (B*K, m)."""
        return self.exterior_ghosts.reshape(-1, self.exterior_ghosts.shape[2])


@dataclass(frozen=True)
class ExtrapolationMatrix:
    """Linear map from node values to ghost values.

    Row (b, k) carries exactly two nonzeros: k+1 in the column of the
    boundary point x_b and -k in the column of the interior companion
    x_{b,0}, the closed form of the second-difference matching system.
    """

    matrix: sp.csr_matrix  # (B*K, n_rows)
    layers: int
    boundary_cols: np.ndarray  # (B,)
    interior_ghost_cols: np.ndarray  # (B,)


@dataclass(frozen=True)
class GpdmBlocks:
    """GPDM operator split along the interior/boundary partition.

    `ltilde` acts on node values over the row set X^h (cloud nodes plus any
    appended interior ghosts); the four blocks follow the interior_index /
    boundary_index split and reassemble to `ltilde`. `e_bi` selects each
    boundary point's interior companion, as used by the Neumann scheme.
    """

    ltilde: sp.csr_matrix
    l_ii: sp.csr_matrix
    l_ib: sp.csr_matrix
    l_bi: sp.csr_matrix
    l_bb: sp.csr_matrix
    e_bi: sp.csr_matrix
    spacing: np.ndarray  # (B,)
    boundary_index: np.ndarray
    interior_index: np.ndarray
    row_points: np.ndarray  # X^h coordinates, (n_rows, m)
    interior_ghost_rows: np.ndarray  # (B,) row index of each companion
    epsilon: float
    k: int
    intrinsic_dim: int
    m0: float
    kind: str = "GPDM"
    layers: int = 0
    boundary_adjacent_count: int = 0  # interior nodes within eps^(1/2) of the boundary

    @property
    def n_rows(self) -> int:
        return self.ltilde.shape[0]

    def neumann_operator(self) -> sp.csr_matrix:
        """Interior operator L_II + L_IB E_BI of the Neumann scheme."""
        return (self.l_ii + self.l_ib @ self.e_bi).tocsr()

    def dirichlet_operator(self) -> sp.csr_matrix:
        """Interior operator L_II of the Dirichlet scheme."""
        return self.l_ii


@dataclass(frozen=True)
class NormalEstimate:
    """Kernel-method normals with the locally tuned bandwidths."""

    normals: np.ndarray  # (B, m)
    epsilon: np.ndarray  # (B,) tuned on manifold neighborhoods
    epsilon_boundary: np.ndarray  # (B,) tuned on boundary neighborhoods (0 when d=1)
    singular_values: np.ndarray  # (B, min(m, k)) of the weighted difference matrix


def nearest_interior_neighbor(cloud: PointCloud, boundary_point_index: int, neighbors: NeighborLists):
    """Index and distance of the closest interior point in the neighbor list."""
    is_b = cloud.is_boundary_mask()
    for j, dist in zip(neighbors.neighbors[boundary_point_index], neighbors.distances[boundary_point_index]):
        if not is_b[j]:
            return int(j), float(dist)
    raise NormalEstimationError(
        f"boundary point {boundary_point_index} has no interior point among its {neighbors.k} neighbors"
    )


def estimate_normal_secant(cloud: PointCloud, boundary_point_index: int, neighbors: NeighborLists) -> np.ndarray:
    """Outward normal from the secant through the nearest interior grid point.

    Valid for well-sampled clouds, where the nearest interior neighbor sits
    one grid step inward; the secant error is O(h).
    """
    j, dist = nearest_interior_neighbor(cloud, boundary_point_index, neighbors)
    nu = (cloud.points[boundary_point_index] - cloud.points[j]) / dist
    return nu


def secant_frame(cloud: PointCloud, neighbors: NeighborLists):
    """Secant normals and spacings for every boundary point.

    Returns (normals (B, m), spacing (B,)); the spacing is the distance to
    the secant partner, so the interior companion x_b - h*nu lands exactly
    on that grid point.
    """
    bidx = cloud.boundary_index
    normals = np.empty((bidx.size, cloud.ambient_dim))
    spacing = np.empty(bidx.size)
    for row, b in enumerate(bidx):
        j, dist = nearest_interior_neighbor(cloud, int(b), neighbors)
        normals[row] = (cloud.points[b] - cloud.points[j]) / dist
        spacing[row] = dist
    return normals, spacing


def estimate_h(cloud: PointCloud, boundary_point_index: int, p: int = 10) -> float:
    """Mean distance from a boundary point to its p nearest neighbors."""
    if not 1 <= p < cloud.n_points:
        raise ValueError("p must satisfy 1 <= p < N")
    dist, _ = cKDTree(cloud.points).query(cloud.points[boundary_point_index], k=p + 1)
    return float(np.mean(dist[1:]))


def _tune_local(sq_dists: np.ndarray, intrinsic_dim: int) -> float:
    """Bandwidth from the log-log slope of the local kernel sum.

    Same selection rule as the global tuner, restricted to one point's
    neighborhood distances.
    """
    grid = default_epsilon_grid(61)
    with np.errstate(divide="ignore"):
        log_s = np.log(np.exp(-sq_dists[None, :] / (4.0 * grid[:, None])).mean(axis=1))
    slopes = _slope_curve(log_s, np.log(grid))
    if not np.isfinite(slopes).any():
        raise NormalEstimationError("degenerate neighborhood; cannot tune local bandwidth")
    idx = _select_scaling_region(slopes, intrinsic_dim / 2.0)
    if not np.isfinite(slopes[idx]) or slopes[idx] <= 0:
        raise NormalEstimationError("degenerate neighborhood; cannot tune local bandwidth")
    return float(grid[idx])


def _weighted_tangent_svd(x, nbr_points, intrinsic_dim):
    """Top singular directions of the kernel-weighted difference matrix.

    Columns are D(x)^(-1/2) exp(-||x - x_j||^2 / (4 eps)) (x_j - x); the
    leading d left singular vectors span the tangent space to O(sqrt(eps)).
    Returns (left singular vectors, singular values, tuned eps).
    """
    diffs = nbr_points - x
    sq = np.einsum("ij,ij->i", diffs, diffs)
    eps = _tune_local(sq, intrinsic_dim)
    dx = np.exp(-sq / (2.0 * eps)).sum()
    weights = np.exp(-sq / (4.0 * eps)) / np.sqrt(dx)
    u, s, _ = np.linalg.svd((weights[:, None] * diffs).T, full_matrices=False)
    return u, s, eps


_RANK_RTOL = 1e-8


def estimate_normal_kernel(
    cloud: PointCloud,
    boundary_points: np.ndarray | None = None,
    k: int = 50,
    k_boundary: int = 10,
) -> NormalEstimate:
    """Kernel/SVD outward normals at boundary points of a random cloud.

    For each boundary point: the weighted SVD over k manifold neighbors
    spans the tangent space; the same construction over boundary-only
    neighbors spans the boundary tangent; the normal is the unit
    Gram-Schmidt residual of the tangent direction with the largest
    residual against the boundary span, with its sign set to oppose the
    mean offset of the manifold neighbors. Error is O(sqrt(eps)).
    """
    if boundary_points is None:
        boundary_points = cloud.boundary_index
    boundary_points = np.asarray(boundary_points, dtype=np.intp)
    d = cloud.intrinsic_dim
    m = cloud.ambient_dim
    n_b = boundary_points.size
    if n_b == 0:
        raise ValueError("cloud has no boundary points")
    if cloud.boundary_index.size < d:
        raise ValueError("need at least d boundary points for the boundary-tangent fit")
    if k <= d:
        raise ValueError("k must exceed the intrinsic dimension")
    tree_all = cKDTree(cloud.points)
    bnd_points_all = cloud.points[cloud.boundary_index]
    tree_bnd = cKDTree(bnd_points_all) if d > 1 else None
    k_eff = min(k, cloud.n_points - 1)
    kb_eff = min(k_boundary, cloud.boundary_index.size - 1)
    normals = np.empty((n_b, m))
    eps_out = np.empty(n_b)
    eps_bnd = np.zeros(n_b)
    sing = np.full((n_b, min(m, k_eff)), np.nan)
    for row, b in enumerate(boundary_points):
        x = cloud.points[b]
        _, idx = tree_all.query(x, k=k_eff + 1)
        idx = idx[idx != b][:k_eff]
        nbrs = cloud.points[idx]
        tangents, s, eps = _weighted_tangent_svd(x, nbrs, d)
        sing[row, : s.size] = s
        if s[d - 1] <= _RANK_RTOL * s[0]:
            raise NormalEstimationError(f"rank-deficient tangent fit at boundary point {int(b)}")
        t_frame = tangents[:, :d]
        if d == 1:
            nu = t_frame[:, 0]
        else:
            _, bidx = tree_bnd.query(x, k=kb_eff + 1)
            bnbrs = bnd_points_all[bidx]
            bnbrs = bnbrs[np.einsum("ij,ij->i", bnbrs - x, bnbrs - x) > 0][:kb_eff]
            if bnbrs.shape[0] < d - 1:
                raise NormalEstimationError(f"too few boundary neighbors at point {int(b)}")
            b_tangents, sb, eps0 = _weighted_tangent_svd(x, bnbrs, d - 1)
            if sb[d - 2] <= _RANK_RTOL * sb[0]:
                raise NormalEstimationError(f"rank-deficient boundary fit at point {int(b)}")
            eps_bnd[row] = eps0
            s_frame = b_tangents[:, : d - 1]
            residuals = t_frame - s_frame @ (s_frame.T @ t_frame)
            norms = np.linalg.norm(residuals, axis=0)
            p = int(np.argmax(norms))
            if norms[p] <= _RANK_RTOL:
                raise NormalEstimationError(f"tangent frame parallel to boundary at point {int(b)}")
            nu = residuals[:, p] / norms[p]
        # outward: oppose the mean offset toward the manifold interior
        if nu @ (nbrs - x).mean(axis=0) > 0:
            nu = -nu
        normals[row] = nu
        eps_out[row] = eps
    return NormalEstimate(normals=normals, epsilon=eps_out, epsilon_boundary=eps_bnd, singular_values=sing)


# Collar depth in units of the kernel width sqrt(2*eps): three standard
# deviations leave a relative tail mass below 1e-2 uncorrected.
COLLAR_WIDTHS = 3.0


def ghost_layer_count(epsilon: float, h: float, collar_exponent: float = 0.5) -> int:
    """Ghost layer count K with h*K of order eps^collar_exponent.

    The exponent r lives in (0, 1/2]; the depth multiplier makes the
    collar cover COLLAR_WIDTHS kernel widths at the default r = 1/2, so
    the truncated Gaussian mass past the outermost ghost ring is
    negligible for boundary rows.
    """
    if not 0 < collar_exponent <= 0.5:
        raise ValueError("collar_exponent must lie in (0, 1/2]")
    depth = COLLAR_WIDTHS * np.sqrt(2.0) * epsilon ** collar_exponent
    return max(2, int(np.ceil(depth / h)))


def build_ghost_points(
    cloud: PointCloud,
    normals: np.ndarray,
    h,
    layers: int,
    snap: bool = True,
) -> GhostFrame:
    """Place exterior ghosts x_b + k*h*nu and interior companions x_b - h*nu.

    With snap=True an interior companion landing within h/2 of an existing
    interior point is merged onto it (the well-sampled picture); otherwise
    it becomes a new node. Collisions with existing points at the duplicate
    tolerance are construction errors.
    """
    bidx = cloud.boundary_index
    n_b = bidx.size
    if n_b == 0:
        raise ValueError("cloud has no boundary points")
    normals = np.asarray(normals, dtype=float)
    if normals.shape != (n_b, cloud.ambient_dim):
        raise ValueError("normals must be (B, m)")
    nrm = np.linalg.norm(normals, axis=1)
    if np.any(np.abs(nrm - 1.0) > 1e-9):
        raise ValueError("normals must be unit vectors")
    if layers < 1:
        raise ValueError("layers must be >= 1")
    spacing = np.broadcast_to(np.asarray(h, dtype=float), (n_b,)).copy()
    if np.any(spacing <= 0):
        raise ValueError("spacing h must be positive")
    xb = cloud.points[bidx]
    ks = np.arange(1, layers + 1)
    exterior = xb[:, None, :] + ks[None, :, None] * spacing[:, None, None] * normals[:, None, :]
    interior = xb - spacing[:, None] * normals

    diameter = float(np.linalg.norm(cloud.points.max(axis=0) - cloud.points.min(axis=0)))
    dup_tol = DUPLICATE_RTOL * max(diameter, 1.0)
    tree = cKDTree(cloud.points)

    ext_flat = exterior.reshape(-1, cloud.ambient_dim)
    d_ext, _ = tree.query(ext_flat)
    if np.any(d_ext < dup_tol):
        raise GhostConstructionError("an exterior ghost collides with a cloud point")
    if ext_flat.shape[0] > 1:
        d_pair, _ = cKDTree(ext_flat).query(ext_flat, k=2)
        if d_pair[:, 1].min() < dup_tol:
            raise GhostConstructionError("two exterior ghosts collide")

    is_b = cloud.is_boundary_mask()
    merge = np.full(n_b, -1, dtype=np.intp)
    if snap:
        d_int, j_int = tree.query(interior)
        for row in range(n_b):
            j = int(j_int[row])
            if is_b[j]:
                # nearest cloud point is a boundary point; look for the
                # nearest interior point instead
                dists, idxs = tree.query(interior[row], k=min(8, cloud.n_points))
                inner = [(dd, jj) for dd, jj in zip(np.atleast_1d(dists), np.atleast_1d(idxs)) if not is_b[jj]]
                if not inner:
                    continue
                d_int[row], j = inner[0]
            if d_int[row] <= spacing[row] / 2.0:
                merge[row] = j
        snapped = merge[merge >= 0]
        uniq, counts = np.unique(snapped, return_counts=True)
        if np.any(counts > 1):
            clash = int(uniq[np.argmax(counts)])
            raise GhostConstructionError(
                f"interior ghosts of several boundary points snap to the same interior point {clash}"
            )
        interior = interior.copy()
        for row in range(n_b):
            if merge[row] >= 0:
                interior[row] = cloud.points[merge[row]]
    new_rows = np.flatnonzero(merge < 0)
    if new_rows.size:
        d_new, _ = tree.query(interior[new_rows])
        if np.any(d_new < dup_tol):
            raise GhostConstructionError("an interior ghost collides with a cloud point")
    return GhostFrame(
        normals=normals,
        spacing=spacing,
        layers=layers,
        exterior_ghosts=exterior,
        interior_ghosts=interior,
        interior_ghost_merge=merge,
    )


def ghost_row_set(cloud: PointCloud, frame: GhostFrame):
    """Node set X^h: cloud points plus appended interior ghosts.

    Returns (row_points, interior_ghost_rows) where interior_ghost_rows[b]
    is the row index of boundary point b's interior companion.
    """
    new_mask = frame.interior_ghost_merge < 0
    ghost_rows = np.empty(frame.n_boundary, dtype=np.intp)
    ghost_rows[~new_mask] = frame.interior_ghost_merge[~new_mask]
    ghost_rows[new_mask] = cloud.n_points + np.arange(int(new_mask.sum()))
    if new_mask.any():
        row_points = np.vstack([cloud.points, frame.interior_ghosts[new_mask]])
    else:
        row_points = cloud.points
    return row_points, ghost_rows


def build_extrapolation_matrix(frame: GhostFrame, cloud: PointCloud) -> ExtrapolationMatrix:
    """Closed-form solution operator of the ghost extrapolation system.

    Ghost (b, k) receives (k+1) u(x_b) - k u(x_{b,0}), which satisfies the
    second-difference matching equations identically.
    """
    _, ghost_rows = ghost_row_set(cloud, frame)
    n_rows = cloud.n_points + int((frame.interior_ghost_merge < 0).sum())
    n_b, kk = frame.n_boundary, frame.layers
    ks = np.arange(1, kk + 1)
    rows = np.repeat(np.arange(n_b * kk), 2)
    cols = np.empty(2 * n_b * kk, dtype=np.intp)
    vals = np.empty(2 * n_b * kk)
    cols[0::2] = np.repeat(cloud.boundary_index, kk)
    vals[0::2] = np.tile(ks + 1.0, n_b)
    cols[1::2] = np.repeat(ghost_rows, kk)
    vals[1::2] = np.tile(-ks.astype(float), n_b)
    g = sp.csr_matrix((vals, (rows, cols)), shape=(n_b * kk, n_rows))
    return ExtrapolationMatrix(
        matrix=g,
        layers=kk,
        boundary_cols=cloud.boundary_index.copy(),
        interior_ghost_cols=ghost_rows,
    )


def assemble_gpdm_operator(
    cloud: PointCloud,
    frame: GhostFrame | None,
    extrap: ExtrapolationMatrix | None,
    cfg: KernelConfig,
) -> GpdmBlocks:
    """Ghost-corrected operator over X^h, split into boundary/interior blocks.

    The non-square graph Laplacian is assembled with rows on X^h and
    columns on X^h plus the exterior ghosts (Monte-Carlo factor 1/(N+BK));
    the ghost columns are folded back through the extrapolation matrix.
    With an empty boundary this reduces entrywise to the plain estimator.
    """
    if frame is None or frame.n_boundary == 0:
        if cloud.boundary_index.size:
            raise ValueError("cloud has boundary points but no ghost frame was given")
        matrix, _ = _assemble_graph_laplacian(cloud.points, cloud.points, cfg, n_norm=cloud.n_points)
        matrix = matrix.tocsr()
        return _split_blocks(
            matrix,
            row_points=cloud.points,
            boundary_index=np.empty(0, dtype=np.intp),
            ghost_rows=np.empty(0, dtype=np.intp),
            spacing=np.empty(0),
            cfg=cfg,
            kind="GPDM",
            layers=0,
        )
    if extrap is None:
        extrap = build_extrapolation_matrix(frame, cloud)
    row_points, ghost_rows = ghost_row_set(cloud, frame)
    if not np.array_equal(ghost_rows, extrap.interior_ghost_cols):
        raise ValueError("extrapolation matrix does not match the ghost frame")
    ghost_cols = frame.ghost_columns()
    col_points = np.vstack([row_points, ghost_cols])
    n_rows = row_points.shape[0]
    n_norm = n_rows + ghost_cols.shape[0]
    lh, _ = _assemble_graph_laplacian(row_points, col_points, cfg, n_norm=n_norm, n_square=n_rows)
    l1 = lh[:, :n_rows].tocsr()
    l2 = lh[:, n_rows:].tocsr()
    ltilde = (l1 + l2 @ extrap.matrix).tocsr()
    return _split_blocks(
        matrix=ltilde,
        row_points=row_points,
        boundary_index=cloud.boundary_index.copy(),
        ghost_rows=ghost_rows,
        spacing=frame.spacing.copy(),
        cfg=cfg,
        kind="GPDM",
        layers=frame.layers,
    )


def _split_blocks(matrix, row_points, boundary_index, ghost_rows, spacing, cfg, kind, layers):
    n_rows = matrix.shape[0]
    mask = np.ones(n_rows, dtype=bool)
    mask[boundary_index] = False
    interior_index = np.flatnonzero(mask)
    l_ii = matrix[interior_index][:, interior_index].tocsr()
    l_ib = matrix[interior_index][:, boundary_index].tocsr()
    l_bi = matrix[boundary_index][:, interior_index].tocsr()
    l_bb = matrix[boundary_index][:, boundary_index].tocsr()
    n_b = boundary_index.size
    if n_b:
        pos = np.searchsorted(interior_index, ghost_rows)
        if np.any(interior_index[pos] != ghost_rows):
            raise ValueError("an interior ghost row is not an interior point")
        e_bi = sp.csr_matrix(
            (np.ones(n_b), (np.arange(n_b), pos)), shape=(n_b, interior_index.size)
        )
        collar = float(cfg.epsilon) ** 0.5
        tree = cKDTree(row_points[boundary_index])
        dist, _ = tree.query(row_points[interior_index])
        r_count = int((dist <= collar).sum())
    else:
        e_bi = sp.csr_matrix((0, interior_index.size))
        r_count = 0
    return GpdmBlocks(
        ltilde=matrix,
        l_ii=l_ii,
        l_ib=l_ib,
        l_bi=l_bi,
        l_bb=l_bb,
        e_bi=e_bi,
        spacing=spacing,
        boundary_index=boundary_index,
        interior_index=interior_index,
        row_points=row_points,
        interior_ghost_rows=ghost_rows,
        epsilon=cfg.epsilon,
        k=cfg.k,
        intrinsic_dim=cfg.intrinsic_dim,
        m0=m0_constant(cfg.intrinsic_dim),
        kind=kind,
        layers=layers,
        boundary_adjacent_count=r_count,
    )


def split_dm_blocks(
    cloud: PointCloud,
    matrix: sp.csr_matrix,
    neighbors: NeighborLists,
    cfg: KernelConfig,
) -> GpdmBlocks:
    """Boundary/interior split of a plain (ghost-free) operator.

    Used by the finite-difference Neumann baseline: each boundary point's
    companion is its nearest interior neighbor and h is that distance.
    """
    n_b = cloud.boundary_index.size
    spacing = np.empty(n_b)
    partners = np.empty(n_b, dtype=np.intp)
    for row, b in enumerate(cloud.boundary_index):
        j, dist = nearest_interior_neighbor(cloud, int(b), neighbors)
        partners[row] = j
        spacing[row] = dist
    return _split_blocks(
        matrix=matrix.tocsr(),
        row_points=cloud.points,
        boundary_index=cloud.boundary_index.copy(),
        ghost_rows=partners,
        spacing=spacing,
        cfg=cfg,
        kind="DM",
        layers=0,
    )


def tangent_project(
    cloud: PointCloud,
    ambient_field,
    k: int = 30,
) -> np.ndarray:
    """Project an ambient vector field onto the estimated tangent spaces.

    The local weighted SVD at every point yields m - d normal directions;
    the projector is the identity minus their outer products. Normal signs
    are aligned by breadth-first propagation over the neighbor graph
    (flipping when a normal opposes its parent's), a cheap stand-in for a
    global orientation pass; the projector itself is sign-invariant.
    """
    d, m, n = cloud.intrinsic_dim, cloud.ambient_dim, cloud.n_points
    if d >= m:
        raise ValueError("tangent projection needs codimension m - d >= 1")
    if callable(ambient_field):
        field_vals = np.asarray(ambient_field(cloud.points), dtype=float)
    else:
        field_vals = np.broadcast_to(np.asarray(ambient_field, dtype=float), (n, m)).copy()
    if field_vals.shape != (n, m):
        raise ValueError("ambient field must supply one vector per point")
    k_eff = min(k, n - 1)
    tree = cKDTree(cloud.points)
    _, idx = tree.query(cloud.points, k=k_eff + 1)
    normals = np.empty((n, m - d, m))
    for i in range(n):
        nbr = idx[i][idx[i] != i][:k_eff]
        frame, s, _ = _weighted_tangent_svd(cloud.points[i], cloud.points[nbr], d)
        if s.size <= d or s[d - 1] <= _RANK_RTOL * s[0]:
            raise NormalEstimationError(f"rank-deficient tangent estimate at point {i}")
        normals[i] = frame[:, d:m].T
    _align_signs(normals, idx, k_eff)
    projections = field_vals.copy()
    for q in range(m - d):
        comp = np.einsum("ij,ij->i", normals[:, q, :], projections)
        projections -= comp[:, None] * normals[:, q, :]
    return projections


def _align_signs(normals, idx, k_eff):
    n = normals.shape[0]
    seen = np.zeros(n, dtype=bool)
    for start in range(n):
        if seen[start]:
            continue
        seen[start] = True
        queue = [start]
        while queue:
            i = queue.pop()
            for j in idx[i][:k_eff + 1]:
                j = int(j)
                if j == i or seen[j]:
                    continue
                for q in range(normals.shape[1]):
                    if normals[i, q] @ normals[j, q] < 0:
                        normals[j, q] = -normals[j, q]
                seen[j] = True
                queue.append(j)


def export_ghost_frame(frame: GhostFrame, path) -> None:
    """Write the collar as CSV rows (b, k, coordinates); k=0 is the companion."""
    m = frame.interior_ghosts.shape[1]
    header = "b,k," + ",".join(f"x{i+1}" for i in range(m))
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for b in range(frame.n_boundary):
            coords = ",".join(f"{v:.17g}" for v in frame.interior_ghosts[b])
            fh.write(f"{b},0,{coords}\n")
            for k in range(1, frame.layers + 1):
                coords = ",".join(f"{v:.17g}" for v in frame.exterior_ghosts[b, k - 1])
                fh.write(f"{b},{k},{coords}\n")
