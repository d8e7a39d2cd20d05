"""Clustering-based targetless extrinsic calibration between an event camera
and an RGB camera.

The pipeline clusters both edge clouds, pairs clusters by median centroid,
derives a per-pair coarse scale/translation from percentile rectangles,
matches points inside each pair, filters outlier matches, then fits a global
affine with RANSAC and refines it with point-to-point ICP.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial import cKDTree

from .core import Affine2D, EdgeCloud, Rect, apply_affine


class CalibrationError(Exception):
    """Base class for calibration failures."""


class DegenerateGeometryError(CalibrationError):
    """Raised when geometry collapses (zero-extent rectangle, collinear points)."""


class CalibrationFailedError(CalibrationError):
    def __init__(self, message: str, diagnostics: "CalibrationDiagnostics | None" = None):
        super().__init__(message)
        self.diagnostics = diagnostics


@dataclass(frozen=True)
class DbscanConfig:
    eps: float
    min_samples: int

    def __post_init__(self):
        if self.eps <= 0:
            raise ValueError("eps must be positive")
        if self.min_samples < 1:
            raise ValueError("min_samples must be >= 1")


# Reference parameter settings for the two sensors: a permissive one that
# merges whole objects and a tighter one for fine-grained clusters.
SETTING_S1 = {"eb": DbscanConfig(eps=150.0, min_samples=2),
              "rgb": DbscanConfig(eps=150.0, min_samples=2)}
SETTING_S2 = {"eb": DbscanConfig(eps=70.0, min_samples=2),
              "rgb": DbscanConfig(eps=40.0, min_samples=2)}


@dataclass(frozen=True)
class RansacConfig:
    iterations: int = 2000
    inlier_threshold_px: float = 5.0
    min_inliers: int = 3
    seed: int = 0


@dataclass(frozen=True)
class IcpConfig:
    max_iterations: int = 50
    convergence_delta: float = 1e-3
    max_pair_distance: float = 30.0


@dataclass(frozen=True)
class CalibrationConfig:
    dbscan_eb: DbscanConfig = field(default_factory=lambda: SETTING_S2["eb"])
    dbscan_rgb: DbscanConfig = field(default_factory=lambda: SETTING_S2["rgb"])
    percentile_lo: float = 0.13
    percentile_hi: float = 0.87
    outlier_percentile: float = 0.70
    outlier_factor: float = 0.5
    min_assignments: int = 1
    # drop cluster pairs whose centroid distance exceeds this multiple of the
    # median pair distance; None disables the gate
    centroid_gate_factor: float | None = None
    ransac: RansacConfig = field(default_factory=RansacConfig)
    icp: IcpConfig = field(default_factory=IcpConfig)

    def __post_init__(self):
        if not 0.0 < self.percentile_lo < self.percentile_hi < 1.0:
            raise ValueError("percentiles must satisfy 0 < lo < hi < 1")
        if not 0.0 < self.outlier_factor < 1.0:
            raise ValueError("outlier_factor must lie in (0, 1)")
        if self.min_assignments < 1:
            raise ValueError("min_assignments must be >= 1")


@dataclass
class ClusterSet:
    clusters: list[np.ndarray]
    noise: np.ndarray

    def __len__(self) -> int:
        return len(self.clusters)


@dataclass
class CalibrationDiagnostics:
    eb_clusters: int = 0
    rgb_clusters: int = 0
    matched_pairs: int = 0
    kept_pairs: int = 0
    pooled_correspondences: int = 0
    filtered_outliers: int = 0
    icp_refined: bool = False
    icp_iterations: int = 0
    icp_mean_distances: list[float] = field(default_factory=list)


@dataclass
class CalibrationResult:
    transform: Affine2D
    per_cluster: list[tuple[Affine2D, int]]
    inlier_count: int
    diagnostics: CalibrationDiagnostics


def cluster_points(points: np.ndarray, cfg: DbscanConfig) -> ClusterSet:
    """Density-based clustering with deterministic input-order labeling.

    A point is a core point when at least `min_samples` points (itself
    included) lie within `eps`. Clusters are maximal density-connected sets;
    border points join the first core cluster that reaches them.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    n = pts.shape[0]
    if n == 0:
        return ClusterSet(clusters=[], noise=np.zeros((0, 2)))
    tree = cKDTree(pts)
    neighbors = [np.sort(np.asarray(idx, dtype=np.int64))
                 for idx in tree.query_ball_point(pts, cfg.eps)]
    core = np.array([len(nb) >= cfg.min_samples for nb in neighbors])
    labels = np.full(n, -1, dtype=np.int64)
    cluster_id = 0
    for start in range(n):
        if labels[start] != -1 or not core[start]:
            continue
        labels[start] = cluster_id
        queue = [start]
        head = 0
        while head < len(queue):
            idx = queue[head]
            head += 1
            if not core[idx]:
                continue
            for nb in neighbors[idx]:
                if labels[nb] == -1:
                    labels[nb] = cluster_id
                    queue.append(nb)
        cluster_id += 1
    clusters = [pts[labels == cid] for cid in range(cluster_id)]
    noise = pts[labels == -1]
    return ClusterSet(clusters=clusters, noise=noise)


def solve_assignment(cost: np.ndarray) -> list[tuple[int, int]]:
    """Minimum-cost one-to-one assignment on a dense (possibly rectangular)
    cost matrix; returns min(rows, cols) pairs sorted by row index."""
    c = np.asarray(cost, dtype=np.float64)
    if c.size == 0:
        return []
    if c.ndim != 2:
        raise ValueError(f"expected 2D cost matrix, got shape {c.shape}")
    if not np.isfinite(c).all():
        raise ValueError("cost matrix must be finite")
    rows, cols = linear_sum_assignment(c)
    return sorted(zip(rows.tolist(), cols.tolist()))


def _normalized_centroids(clusters: list[np.ndarray]) -> np.ndarray:
    """Median centroids rescaled into the unit box spanned by all cluster
    points, which makes positions comparable across sensors of different
    resolution."""
    centroids = np.array([np.median(c, axis=0) for c in clusters])
    points = np.vstack(clusters)
    lo = points.min(axis=0)
    extent = points.max(axis=0) - lo
    extent[extent == 0] = 1.0
    return (centroids - lo) / extent


def match_clusters(eb: ClusterSet, rgb: ClusterSet) -> list[tuple[int, int]]:
    """Pair clusters across modalities by median centroid distance.

    Centroids are normalized per side by the extent of that side's clustered
    points, so the two pixel frames become commensurable.
    """
    if len(eb) == 0 or len(rgb) == 0:
        return []
    eb_centroids = _normalized_centroids(eb.clusters)
    rgb_centroids = _normalized_centroids(rgb.clusters)
    diff = eb_centroids[:, None, :] - rgb_centroids[None, :, :]
    cost = np.linalg.norm(diff, axis=2)
    return solve_assignment(cost)


def percentile_rect(points: np.ndarray, lo: float = 0.13, hi: float = 0.87) -> Rect:
    """Axis-aligned rectangle spanned by per-coordinate percentiles
    (linear interpolation between order statistics)."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if pts.shape[0] < 2:
        raise ValueError("percentile rectangle needs at least 2 points")
    x0, x1 = np.percentile(pts[:, 0], [lo * 100.0, hi * 100.0])
    y0, y1 = np.percentile(pts[:, 1], [lo * 100.0, hi * 100.0])
    return Rect(float(x0), float(y0), float(x1), float(y1))


def coarse_transform(r_eb: Rect, r_rgb: Rect) -> Affine2D:
    """Axis-aligned scale and translation mapping one percentile rectangle
    onto the other."""
    if r_eb.width == 0 or r_eb.height == 0:
        raise DegenerateGeometryError("source rectangle has zero extent")
    sx = r_rgb.width / r_eb.width
    sy = r_rgb.height / r_eb.height
    tx = -sx * r_eb.x0 + r_rgb.x0
    ty = -sy * r_eb.y0 + r_rgb.y0
    return Affine2D.from_scale_translation(sx, sy, tx, ty)


def match_cluster_points(eb_points: np.ndarray, rgb_points: np.ndarray,
                         t_coarse: Affine2D, cfg: CalibrationConfig
                         ) -> tuple[np.ndarray, np.ndarray, int]:
    """Point correspondences inside one cluster pair.

    Event points are mapped through the coarse transform, assigned one-to-one
    to RGB points by Euclidean cost, and matches much longer than the
    reference percentile length are discarded: a match of length l is an
    outlier when (l - l_ref) / l exceeds the outlier factor.

    Returns (eb_matched, rgb_matched, n_filtered) with original event-pixel
    coordinates.
    """
    eb = np.asarray(eb_points, dtype=np.float64).reshape(-1, 2)
    rgb = np.asarray(rgb_points, dtype=np.float64).reshape(-1, 2)
    if eb.shape[0] == 0 or rgb.shape[0] == 0:
        return np.zeros((0, 2)), np.zeros((0, 2)), 0
    mapped = apply_affine(t_coarse, eb)
    diff = mapped[:, None, :] - rgb[None, :, :]
    cost = np.linalg.norm(diff, axis=2)
    pairs = solve_assignment(cost)
    rows = np.array([r for r, _ in pairs], dtype=np.int64)
    cols = np.array([c for _, c in pairs], dtype=np.int64)
    lengths = cost[rows, cols]
    l_ref = float(np.percentile(lengths, cfg.outlier_percentile * 100.0))
    factors = np.zeros_like(lengths)
    nonzero = lengths > 0
    factors[nonzero] = (lengths[nonzero] - l_ref) / lengths[nonzero]
    keep = factors <= cfg.outlier_factor
    return eb[rows[keep]], rgb[cols[keep]], int(np.count_nonzero(~keep))


def _fit_affine_lstsq(src: np.ndarray, dst: np.ndarray) -> Affine2D:
    """Least-squares 6-dof affine from source to destination points."""
    n = src.shape[0]
    a = np.hstack([src, np.ones((n, 1))])
    sol, _, rank, _ = np.linalg.lstsq(a, dst, rcond=None)
    if rank < 3:
        raise DegenerateGeometryError("points are collinear, affine underdetermined")
    m = np.array([[sol[0, 0], sol[1, 0], sol[2, 0]],
                  [sol[0, 1], sol[1, 1], sol[2, 1]],
                  [0.0, 0.0, 1.0]])
    if np.linalg.det(m[:2, :2]) == 0.0:
        raise DegenerateGeometryError("fitted affine is singular")
    return Affine2D(m)


def _solve_exact_affine(src: np.ndarray, dst: np.ndarray) -> np.ndarray | None:
    """Exact affine through 3 point pairs; None when collinear."""
    a = np.hstack([src, np.ones((3, 1))])
    try:
        sol = np.linalg.solve(a, dst)
    except np.linalg.LinAlgError:
        return None
    m = np.array([[sol[0, 0], sol[1, 0], sol[2, 0]],
                  [sol[0, 1], sol[1, 1], sol[2, 1]],
                  [0.0, 0.0, 1.0]])
    return m


def estimate_affine_ransac(src: np.ndarray, dst: np.ndarray,
                           cfg: RansacConfig) -> tuple[Affine2D, int]:
    """Robust affine fit: sample 3 pairs, count reprojection inliers, refit
    by least squares on the best inlier set. Returns (transform, inliers)."""
    src = np.asarray(src, dtype=np.float64).reshape(-1, 2)
    dst = np.asarray(dst, dtype=np.float64).reshape(-1, 2)
    n = src.shape[0]
    if n < 3:
        raise DegenerateGeometryError(f"need at least 3 correspondences, got {n}")
    rng = np.random.default_rng(cfg.seed)
    best_inliers: np.ndarray | None = None
    best_count = 0
    best_sse = np.inf
    for _ in range(cfg.iterations):
        sample = rng.choice(n, size=3, replace=False)
        m = _solve_exact_affine(src[sample], dst[sample])
        if m is None:
            continue
        proj = src @ m[:2, :2].T + m[:2, 2]
        err = np.linalg.norm(proj - dst, axis=1)
        inliers = err <= cfg.inlier_threshold_px
        count = int(np.count_nonzero(inliers))
        sse = float(np.sum(err[inliers] ** 2))
        if count > best_count or (count == best_count and sse < best_sse):
            best_count = count
            best_sse = sse
            best_inliers = inliers
    if best_inliers is None or best_count < max(cfg.min_inliers, 3):
        raise CalibrationFailedError(
            f"no affine consensus: best inlier count {best_count} "
            f"below minimum {cfg.min_inliers}")
    transform = _fit_affine_lstsq(src[best_inliers], dst[best_inliers])
    return transform, best_count


@dataclass
class IcpResult:
    transform: Affine2D
    mean_distances: list[float]
    refined: bool
    iterations: int


def refine_icp(src: EdgeCloud | np.ndarray, dst: EdgeCloud | np.ndarray,
               init: Affine2D, cfg: IcpConfig) -> IcpResult:
    """Point-to-point ICP with a full affine update per iteration.

    Each iteration pairs every transformed source point with its nearest
    destination point (pairs beyond `max_pair_distance` are discarded),
    records the mean pair distance, and refits the affine by least squares.
    Stops when the mean distance improves by less than `convergence_delta`.
    """
    src_pts = src.points if isinstance(src, EdgeCloud) else np.asarray(src, dtype=np.float64)
    dst_pts = dst.points if isinstance(dst, EdgeCloud) else np.asarray(dst, dtype=np.float64)
    src_pts = src_pts.reshape(-1, 2)
    dst_pts = dst_pts.reshape(-1, 2)
    if src_pts.shape[0] == 0 or dst_pts.shape[0] == 0:
        raise ValueError("ICP requires non-empty point clouds")
    tree = cKDTree(dst_pts)
    transform = init
    means: list[float] = []
    prev_mean = np.inf
    iterations = 0
    for _ in range(cfg.max_iterations):
        mapped = apply_affine(transform, src_pts)
        dist, idx = tree.query(mapped)
        paired = dist <= cfg.max_pair_distance
        if not paired.any():
            if iterations == 0:
                return IcpResult(init, [], refined=False, iterations=0)
            break
        mean = float(np.mean(dist[paired]))
        means.append(mean)
        iterations += 1
        if prev_mean - mean < cfg.convergence_delta:
            break
        prev_mean = mean
        try:
            transform = _fit_affine_lstsq(src_pts[paired], dst_pts[idx[paired]])
        except DegenerateGeometryError:
            break
    return IcpResult(transform, means, refined=True, iterations=iterations)


def calibrate_frame(eb_edges: EdgeCloud, rgb_edges: EdgeCloud,
                    cfg: CalibrationConfig) -> CalibrationResult:
    """Full single-frame calibration from two edge clouds.

    Clusters whose surviving point-match count falls below `min_assignments`
    are excluded before pooling; pooled correspondences feed the RANSAC
    affine, which ICP then refines against the full clustered clouds.
    """
    diag = CalibrationDiagnostics()
    if len(eb_edges) == 0 or len(rgb_edges) == 0:
        raise CalibrationFailedError("empty edge cloud", diag)
    eb_set = cluster_points(eb_edges.points, cfg.dbscan_eb)
    rgb_set = cluster_points(rgb_edges.points, cfg.dbscan_rgb)
    diag.eb_clusters = len(eb_set)
    diag.rgb_clusters = len(rgb_set)
    pairs = match_clusters(eb_set, rgb_set)
    diag.matched_pairs = len(pairs)
    if cfg.centroid_gate_factor is not None and len(pairs) > 1:
        eb_c = np.array([np.median(eb_set.clusters[i], axis=0) for i, _ in pairs])
        rgb_c = np.array([np.median(rgb_set.clusters[j], axis=0) for _, j in pairs])
        dists = np.linalg.norm(eb_c - rgb_c, axis=1)
        gate = cfg.centroid_gate_factor * float(np.median(dists))
        pairs = [p for p, d in zip(pairs, dists) if d <= gate]

    per_cluster: list[tuple[Affine2D, int]] = []
    pooled_src: list[np.ndarray] = []
    pooled_dst: list[np.ndarray] = []
    for i, j in pairs:
        eb_cluster = eb_set.clusters[i]
        rgb_cluster = rgb_set.clusters[j]
        if eb_cluster.shape[0] < 2 or rgb_cluster.shape[0] < 2:
            continue
        r_eb = percentile_rect(eb_cluster, cfg.percentile_lo, cfg.percentile_hi)
        r_rgb = percentile_rect(rgb_cluster, cfg.percentile_lo, cfg.percentile_hi)
        try:
            t_coarse = coarse_transform(r_eb, r_rgb)
        except DegenerateGeometryError:
            continue
        src, dst, filtered = match_cluster_points(eb_cluster, rgb_cluster, t_coarse, cfg)
        diag.filtered_outliers += filtered
        per_cluster.append((t_coarse, src.shape[0]))
        if src.shape[0] < cfg.min_assignments:
            continue
        diag.kept_pairs += 1
        pooled_src.append(src)
        pooled_dst.append(dst)

    if not pooled_src:
        raise CalibrationFailedError("no cluster pair produced correspondences", diag)
    src = np.vstack(pooled_src)
    dst = np.vstack(pooled_dst)
    diag.pooled_correspondences = src.shape[0]
    if src.shape[0] < 3:
        raise CalibrationFailedError(
            f"only {src.shape[0]} pooled correspondences, need 3", diag)
    try:
        transform, inliers = estimate_affine_ransac(src, dst, cfg.ransac)
    except (CalibrationFailedError, DegenerateGeometryError) as exc:
        raise CalibrationFailedError(str(exc), diag) from exc

    eb_clustered = (np.vstack(eb_set.clusters) if eb_set.clusters
                    else eb_edges.points)
    rgb_clustered = (np.vstack(rgb_set.clusters) if rgb_set.clusters
                     else rgb_edges.points)
    icp = refine_icp(eb_clustered, rgb_clustered, transform, cfg.icp)
    diag.icp_refined = icp.refined
    diag.icp_iterations = icp.iterations
    diag.icp_mean_distances = icp.mean_distances
    return CalibrationResult(transform=icp.transform, per_cluster=per_cluster,
                             inlier_count=inliers, diagnostics=diag)


def reprojection_error(t: Affine2D,
                       gt_pairs: Sequence[tuple[np.ndarray, np.ndarray]]
                       | tuple[np.ndarray, np.ndarray]) -> float:
    """Mean distance between transformed event points and their RGB partners.

    Accepts either a sequence of (eb, rgb) point pairs or a tuple of two
    (N, 2) arrays.
    """
    if isinstance(gt_pairs, tuple) and len(gt_pairs) == 2 \
            and np.asarray(gt_pairs[0]).ndim == 2:
        eb = np.asarray(gt_pairs[0], dtype=np.float64)
        rgb = np.asarray(gt_pairs[1], dtype=np.float64)
    else:
        pairs = list(gt_pairs)
        if not pairs:
            raise ValueError("reprojection error needs at least one pair")
        eb = np.array([p[0] for p in pairs], dtype=np.float64)
        rgb = np.array([p[1] for p in pairs], dtype=np.float64)
    if eb.shape[0] == 0:
        raise ValueError("reprojection error needs at least one pair")
    mapped = apply_affine(t, eb)
    return float(np.mean(np.linalg.norm(mapped - rgb, axis=1)))
