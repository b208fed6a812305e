"""Point-cloud construction and neighbor search.

Analytic samplers for the test manifolds (annulus in R^5, ellipse,
semi-torus, sine curve), ingestion of CSV/OBJ vertex data, and exact
k-nearest-neighbor search. All samplers are deterministic given their
parameters and seed; grid samplers tag boundary points by the parameter
that generated them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

# Ambient dimension above which the tree search degrades and a brute-force
# scan is used instead.
_BRUTE_FORCE_DIM = 20

# Duplicate-point tolerance, relative to the cloud diameter. Kernel matrices
# degenerate on coincident points.
DUPLICATE_RTOL = 1e-12


class CloudError(ValueError):
    """Invalid point-cloud construction or ingestion failure."""


@dataclass(frozen=True)
class PointCloud:
    """Ambient samples of a manifold plus boundary tags.

    Attributes:
        points: (N, m) ambient coordinates.
        intrinsic_dim: manifold dimension d with 1 <= d <= m.
        boundary_index: indices of boundary points (possibly empty).
        labels: optional (N, p) intrinsic parameters per point, kept for
            diagnostics and manufactured solutions.
    """

    points: np.ndarray
    intrinsic_dim: int
    boundary_index: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.intp))
    labels: np.ndarray | None = None

    def __post_init__(self):
        pts = np.ascontiguousarray(np.asarray(self.points, dtype=float))
        if pts.ndim != 2 or pts.shape[0] == 0:
            raise CloudError("points must be a nonempty (N, m) array")
        object.__setattr__(self, "points", pts)
        bidx = np.asarray(self.boundary_index, dtype=np.intp).ravel()
        object.__setattr__(self, "boundary_index", bidx)
        n, m = pts.shape
        if not (1 <= self.intrinsic_dim <= m):
            raise CloudError(f"intrinsic_dim must satisfy 1 <= d <= m={m}")
        if bidx.size:
            if bidx.min() < 0 or bidx.max() >= n:
                raise CloudError("boundary_index out of range")
            if np.unique(bidx).size != bidx.size:
                raise CloudError("boundary_index entries must be distinct")
        if not np.all(np.isfinite(pts)):
            raise CloudError("points must be finite")
        if n > 1:
            # nearest-neighbor distance check is O(N log N), unlike all pairs
            d_nn, _ = cKDTree(pts).query(pts, k=2)
            if d_nn[:, 1].min() <= 0.0:
                raise CloudError("duplicate points in cloud")

    @property
    def n_points(self) -> int:
        return self.points.shape[0]

    @property
    def ambient_dim(self) -> int:
        return self.points.shape[1]

    @property
    def interior_index(self) -> np.ndarray:
        mask = np.ones(self.n_points, dtype=bool)
        mask[self.boundary_index] = False
        return np.flatnonzero(mask)

    def is_boundary_mask(self) -> np.ndarray:
        mask = np.zeros(self.n_points, dtype=bool)
        mask[self.boundary_index] = True
        return mask


@dataclass(frozen=True)
class NeighborLists:
    """k nearest neighbors per point, self excluded, sorted by distance."""

    k: int
    neighbors: np.ndarray  # (N, k) int indices
    distances: np.ndarray  # (N, k) floats, nondecreasing along each row


def sample_annulus(i_count: int, j_count: int) -> PointCloud:
    """Uniform (theta, phi) grid on the 2D annulus embedded in R^5.

    The embedding is x = (sin(phi)cos(theta), sin(phi)sin(theta),
    sin(phi)cos(2 theta), sin(phi)sin(2 theta), sqrt(2)cos(phi)) with
    theta on [0, 2pi) (i_count values, periodic) and phi on
    [pi/4, pi/2] (j_count values, both ends included). The two phi
    extremes are the boundary circles.
    """
    if i_count < 3 or j_count < 2:
        raise CloudError("annulus grid needs i_count >= 3 and j_count >= 2")
    theta = 2.0 * np.pi * np.arange(i_count) / i_count
    phi = np.pi / 4 + (np.pi / 4) * np.arange(j_count) / (j_count - 1)
    tt, pp = np.meshgrid(theta, phi, indexing="ij")
    tt, pp = tt.ravel(), pp.ravel()
    pts = _annulus_embedding(tt, pp)
    on_boundary = (pp == phi[0]) | (pp == phi[-1])
    return PointCloud(
        points=pts,
        intrinsic_dim=2,
        boundary_index=np.flatnonzero(on_boundary),
        labels=np.column_stack([tt, pp]),
    )


def _annulus_embedding(theta, phi):
    s = np.sin(phi)
    return np.column_stack(
        [
            s * np.cos(theta),
            s * np.sin(theta),
            s * np.cos(2 * theta),
            s * np.sin(2 * theta),
            np.sqrt(2.0) * np.cos(phi),
        ]
    )


def sample_ellipse(n: int, mode: str = "grid", rng_seed: int = 0) -> PointCloud:
    """Closed ellipse x = (cos(theta), 2 sin(theta)); no boundary.

    mode="grid" places n equispaced angles; mode="random" draws theta
    i.i.d. uniform on [0, 2pi).
    """
    if n < 4:
        raise CloudError("ellipse needs n >= 4")
    if mode == "grid":
        theta = 2.0 * np.pi * np.arange(n) / n
    elif mode == "random":
        rng = np.random.default_rng(rng_seed)
        theta = np.sort(rng.uniform(0.0, 2.0 * np.pi, size=n))
    else:
        raise CloudError(f"unknown mode {mode!r}")
    pts = np.column_stack([np.cos(theta), 2.0 * np.sin(theta)])
    return PointCloud(points=pts, intrinsic_dim=1, labels=theta[:, None])


def sample_circle(n: int, mode: str = "grid", rng_seed: int = 0) -> PointCloud:
    """Unit circle; closed 1D manifold used for operator consistency checks."""
    if n < 4:
        raise CloudError("circle needs n >= 4")
    if mode == "grid":
        theta = 2.0 * np.pi * np.arange(n) / n
    elif mode == "random":
        rng = np.random.default_rng(rng_seed)
        theta = np.sort(rng.uniform(0.0, 2.0 * np.pi, size=n))
    else:
        raise CloudError(f"unknown mode {mode!r}")
    pts = np.column_stack([np.cos(theta), np.sin(theta)])
    return PointCloud(points=pts, intrinsic_dim=1, labels=theta[:, None])


def sample_semi_torus(n: int, mode: str = "grid", rng_seed: int = 0) -> PointCloud:
    """Semi-torus x = ((2+cos th)cos ph, (2+cos th)sin ph, sin th), ph in [0, pi].

    The circles ph = 0 and ph = pi are the two boundaries. Grid mode needs a
    perfect-square n and places sqrt(n) values in each parameter. Random mode
    draws interior points uniformly on [0, 2pi) x (0, pi) and places
    ceil(sqrt(n)) equispaced points on each boundary circle so that boundary
    conditions have carriers; the total count is still n.
    """
    if n < 16:
        raise CloudError("semi-torus needs n >= 16")
    if mode == "grid":
        side = math.isqrt(n)
        if side * side != n:
            raise CloudError("grid mode needs a perfect-square n")
        theta = 2.0 * np.pi * np.arange(side) / side
        phi = np.pi * np.arange(side) / (side - 1)
        tt, pp = np.meshgrid(theta, phi, indexing="ij")
        tt, pp = tt.ravel(), pp.ravel()
        on_boundary = (pp == 0.0) | (pp == phi[-1])
    elif mode == "random":
        per_circle = math.isqrt(n - 1) + 1  # ceil(sqrt(n))
        n_boundary = 2 * per_circle
        if n_boundary >= n:
            raise CloudError("n too small for random semi-torus sampling")
        rng = np.random.default_rng(rng_seed)
        ti = rng.uniform(0.0, 2.0 * np.pi, size=n - n_boundary)
        pi_ = rng.uniform(0.0, np.pi, size=n - n_boundary)
        tb = 2.0 * np.pi * np.arange(per_circle) / per_circle
        # offset the second circle's angles to keep clouds duplicate-free
        tt = np.concatenate([ti, tb, tb + np.pi / per_circle])
        pp = np.concatenate([pi_, np.zeros(per_circle), np.full(per_circle, np.pi)])
        on_boundary = np.zeros(n, dtype=bool)
        on_boundary[n - n_boundary:] = True
    else:
        raise CloudError(f"unknown mode {mode!r}")
    pts = np.column_stack(
        [
            (2.0 + np.cos(tt)) * np.cos(pp),
            (2.0 + np.cos(tt)) * np.sin(pp),
            np.sin(tt),
        ]
    )
    return PointCloud(
        points=pts,
        intrinsic_dim=2,
        boundary_index=np.flatnonzero(on_boundary),
        labels=np.column_stack([tt, pp]),
    )


def sample_sine_curve(n: int) -> PointCloud:
    """Curve (theta, sin theta) for theta on [0, 4pi]; endpoints are boundary."""
    if n < 4:
        raise CloudError("sine curve needs n >= 4")
    theta = 4.0 * np.pi * np.arange(n) / (n - 1)
    pts = np.column_stack([theta, np.sin(theta)])
    return PointCloud(
        points=pts,
        intrinsic_dim=1,
        boundary_index=np.array([0, n - 1], dtype=np.intp),
        labels=theta[:, None],
    )


def load_point_cloud(
    path,
    fmt: str | None = None,
    intrinsic_dim: int = 2,
    boundary_flag_column: bool | None = None,
) -> PointCloud:
    """Read a point cloud from a CSV table or the vertices of an OBJ file.

    CSV rows are ambient coordinates with an optional trailing integer
    column `is_boundary` in {0, 1}; the column is auto-detected (>= 3
    columns, last one all zeros/ones) unless `boundary_flag_column` forces
    the choice. OBJ parsing keeps `v x y z` lines only; faces and normals
    are discarded (the solvers are mesh free). Duplicate vertices closer
    than DUPLICATE_RTOL times the cloud diameter are merged.
    """
    path = Path(path)
    if not path.exists():
        raise CloudError(f"no such file: {path}")
    if fmt is None:
        fmt = path.suffix.lstrip(".").lower()
    if fmt == "csv":
        pts, bnd = _read_csv(path, boundary_flag_column)
    elif fmt == "obj":
        pts, bnd = _read_obj(path), None
    else:
        raise CloudError(f"unknown format {fmt!r}")
    if pts.shape[0] == 0:
        raise CloudError(f"{path}: no points found")
    pts, bnd = _dedupe(pts, bnd)
    kwargs = {}
    if bnd is not None:
        kwargs["boundary_index"] = np.flatnonzero(bnd)
    return PointCloud(points=pts, intrinsic_dim=intrinsic_dim, **kwargs)


def _read_csv(path, boundary_flag_column):
    rows = []
    width = None
    for ln, line in enumerate(path.read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        fields = [f for f in line.split(",") if f.strip() != ""]
        try:
            vals = [float(f) for f in fields]
        except ValueError as exc:
            raise CloudError(f"{path}:{ln}: unparseable row") from exc
        if width is None:
            width = len(vals)
        elif len(vals) != width:
            raise CloudError(f"{path}:{ln}: inconsistent row length")
        rows.append(vals)
    if not rows:
        raise CloudError(f"{path}: empty file")
    arr = np.asarray(rows, dtype=float)
    has_flag = boundary_flag_column
    if has_flag is None:
        has_flag = arr.shape[1] >= 3 and bool(np.all(np.isin(arr[:, -1], (0.0, 1.0))))
    if has_flag:
        if arr.shape[1] < 2 or not np.all(np.isin(arr[:, -1], (0.0, 1.0))):
            raise CloudError(f"{path}: boundary flag column must be 0/1")
        return arr[:, :-1], arr[:, -1].astype(bool)
    return arr, None


def _read_obj(path):
    verts = []
    for ln, line in enumerate(path.read_text().splitlines(), start=1):
        parts = line.split()
        if not parts or parts[0] != "v":
            continue
        if len(parts) < 4:
            raise CloudError(f"{path}:{ln}: malformed vertex line")
        try:
            verts.append([float(parts[1]), float(parts[2]), float(parts[3])])
        except ValueError as exc:
            raise CloudError(f"{path}:{ln}: unparseable vertex") from exc
    return np.asarray(verts, dtype=float)


def _dedupe(pts, bnd):
    if pts.shape[0] < 2:
        return pts, bnd
    diameter = float(np.linalg.norm(pts.max(axis=0) - pts.min(axis=0)))
    tol = DUPLICATE_RTOL * max(diameter, 1.0)
    tree = cKDTree(pts)
    pairs = tree.query_pairs(tol, output_type="ndarray")
    drop = np.zeros(pts.shape[0], dtype=bool)
    for i, j in pairs:
        drop[max(i, j)] = True
    keep = ~drop
    return pts[keep], (bnd[keep] if bnd is not None else None)


def knn_search(cloud: PointCloud, k: int) -> NeighborLists:
    """Exact k nearest neighbors by Euclidean distance, ties broken by index.

    Uses a KD-tree for modest ambient dimensions and a brute-force scan
    above _BRUTE_FORCE_DIM, where space partitioning stops paying off.
    """
    n = cloud.n_points
    if not 1 <= k < n:
        raise CloudError(f"k must satisfy 1 <= k < N={n}")
    pts = cloud.points
    if cloud.ambient_dim <= _BRUTE_FORCE_DIM:
        # query a couple of extra candidates so equal-distance ties at the
        # k-th slot can be re-broken by lower index
        k_query = min(k + 3, n - 1) + 1
        dist, idx = cKDTree(pts).query(pts, k=k_query)
        neighbors = np.empty((n, k), dtype=np.intp)
        distances = np.empty((n, k), dtype=float)
        for i in range(n):
            keep = idx[i] != i
            cand_idx = idx[i][keep]
            cand_dist = dist[i][keep]
            order = np.lexsort((cand_idx, cand_dist))[:k]
            neighbors[i] = cand_idx[order]
            distances[i] = cand_dist[order]
    else:
        d2 = np.sum((pts[:, None, :] - pts[None, :, :]) ** 2, axis=-1)
        np.fill_diagonal(d2, np.inf)
        order = np.argsort(d2, axis=1, kind="stable")[:, :k]
        neighbors = order.astype(np.intp)
        distances = np.sqrt(np.take_along_axis(d2, order, axis=1))
    return NeighborLists(k=k, neighbors=neighbors, distances=distances)
