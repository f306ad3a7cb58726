"""Affine k-planes in R^n, Grassmannian distances, and graphicality checks.

A plane is a base point plus an orthonormal frame of tangent directions.
Everything here is a pure function of immutable values and is safe to call
concurrently.  Planes of dimension >= ambient dimension are rejected.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .config import DEFAULT_CONFIG, GeometryConfig, unit_ball_volume

__all__ = [
    "AffinePlane",
    "Ball",
    "GraphEstimate",
    "RankDeficiencyError",
    "DimensionMismatchError",
    "orthonormal_frame",
    "project",
    "plane_distance",
    "projection_matrix",
    "grassmann_distance",
    "general_position",
    "affine_span",
    "verify_graphical",
    "operator_norm_power",
    "unit_disk_samples",
    "slice_distance",
    "slice_hausdorff",
]


class RankDeficiencyError(ValueError):
    """Raised when a requested span is degenerate."""


class DimensionMismatchError(ValueError):
    """Raised when two planes of different dimension are compared."""


@dataclass(frozen=True)
class Ball:
    """Open ball B_r(x); membership is strict inequality everywhere."""

    center: np.ndarray
    radius: float

    def __post_init__(self):
        c = np.asarray(self.center, dtype=float)
        c.setflags(write=False)
        object.__setattr__(self, "center", c)
        if not self.radius > 0:
            raise ValueError(f"ball radius must be positive, got {self.radius}")

    def contains(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        d2 = np.sum((pts - self.center) ** 2, axis=-1)
        return d2 < self.radius * self.radius

    def scaled(self, factor: float) -> "Ball":
        return Ball(self.center, self.radius * factor)


def orthonormal_frame(vectors, rank_tol: float = DEFAULT_CONFIG.rank_tol) -> np.ndarray:
    """Modified Gram-Schmidt with one re-orthogonalization pass.

    Raises RankDeficiencyError if any input vector falls inside the span of
    the previous ones (residual below rank_tol relative to its norm).
    """
    vecs = np.atleast_2d(np.asarray(vectors, dtype=float))
    out = []
    for v in vecs:
        scale = np.linalg.norm(v)
        if scale == 0.0:
            raise RankDeficiencyError("zero vector in span")
        w = v.copy()
        for _ in range(2):  # re-orthogonalize once for stability
            for u in out:
                w = w - np.dot(w, u) * u
        norm = np.linalg.norm(w)
        if norm <= rank_tol * scale:
            raise RankDeficiencyError("input vectors are rank deficient")
        out.append(w / norm)
    return np.array(out)


@dataclass(frozen=True)
class AffinePlane:
    """Affine k-plane: base point plus k orthonormal direction vectors (rows)."""

    base: np.ndarray
    frame: np.ndarray

    def __post_init__(self):
        base = np.asarray(self.base, dtype=float)
        frame = np.asarray(self.frame, dtype=float)
        if frame.ndim == 1:
            frame = frame.reshape(1, -1) if frame.size else frame.reshape(0, base.size)
        if frame.shape[1:] != (base.size,):
            raise ValueError(f"frame shape {frame.shape} does not match ambient dim {base.size}")
        if frame.shape[0] >= base.size:
            raise ValueError(f"plane dimension {frame.shape[0]} must be < ambient {base.size}")
        if frame.shape[0] > 0:
            gram = frame @ frame.T
            if not np.allclose(gram, np.eye(frame.shape[0]), atol=DEFAULT_CONFIG.frame_tol):
                raise ValueError("frame is not orthonormal within 1e-10")
        base.setflags(write=False)
        frame.setflags(write=False)
        object.__setattr__(self, "base", base)
        object.__setattr__(self, "frame", frame)

    @property
    def k(self) -> int:
        return self.frame.shape[0]

    @property
    def ambient_dim(self) -> int:
        return self.base.size

    @classmethod
    def from_span(cls, base, vectors, rank_tol: float = DEFAULT_CONFIG.rank_tol) -> "AffinePlane":
        """Plane through `base` spanned by `vectors` (orthonormalized)."""
        base = np.asarray(base, dtype=float)
        vecs = np.atleast_2d(np.asarray(vectors, dtype=float))
        if vecs.size == 0:
            return cls(base, np.zeros((0, base.size)))
        return cls(base, orthonormal_frame(vecs, rank_tol))

    @classmethod
    def axis_plane(cls, n: int, axes, base=None) -> "AffinePlane":
        """Coordinate plane spanned by the given axis indices."""
        base = np.zeros(n) if base is None else np.asarray(base, dtype=float)
        frame = np.zeros((len(axes), n))
        for i, a in enumerate(axes):
            frame[i, a] = 1.0
        return cls(base, frame)

    def to_json(self) -> dict:
        return {"base": self.base.tolist(), "frame": self.frame.tolist()}

    @classmethod
    def from_json(cls, data: dict) -> "AffinePlane":
        return cls(np.asarray(data["base"]), np.asarray(data["frame"]))


def project(plane: AffinePlane, x) -> np.ndarray:
    """Orthogonal projection of x onto the plane; idempotent, batch-aware."""
    pts = np.asarray(x, dtype=float)
    rel = pts - plane.base
    if plane.k == 0:
        return np.broadcast_to(plane.base, pts.shape).copy()
    coords = rel @ plane.frame.T
    return plane.base + coords @ plane.frame


def plane_distance(x, plane: AffinePlane) -> np.ndarray | float:
    """Euclidean distance from x (point or batch) to the plane."""
    pts = np.asarray(x, dtype=float)
    res = pts - project(plane, pts)
    return np.linalg.norm(res, axis=-1) if pts.ndim > 1 else float(np.linalg.norm(res))


def projection_matrix(plane: AffinePlane) -> np.ndarray:
    """Matrix of the linear projection onto the plane's tangent subspace."""
    if plane.k == 0:
        return np.zeros((plane.ambient_dim, plane.ambient_dim))
    return plane.frame.T @ plane.frame


@lru_cache(maxsize=32)
def unit_disk_samples(k: int, resolution: float) -> np.ndarray:
    """Deterministic grid on the closed unit disk of R^k.

    k=1: uniform points on [-1, 1] at the given step (endpoints included).
    k=2: concentric rings with radial step `resolution` and arc spacing about
    `resolution` on each ring.  k>=3: a cubic lattice clipped to the ball with
    the step widened so the total stays below ~200k points (documented
    coarsening; desk-scale callers use k <= 2).
    Sampled points lie exactly on the disk, so the inf side of any Hausdorff
    computation against these sets is exact and only the sup side carries the
    O(resolution) additive error.
    """
    if k == 0:
        return np.zeros((1, 0))
    m = max(1, round(1.0 / resolution))
    if k == 1:
        return np.linspace(-1.0, 1.0, 2 * m + 1).reshape(-1, 1)
    if k == 2:
        pts = [np.zeros((1, 2))]
        for i in range(1, m + 1):
            r = i / m
            n_ang = int(np.ceil(2.0 * np.pi * r * m))
            ang = 2.0 * np.pi * np.arange(n_ang) / n_ang
            pts.append(np.column_stack([r * np.cos(ang), r * np.sin(ang)]))
        return np.vstack(pts)
    step = max(resolution, (unit_ball_volume(k) / 2.0e5) ** (1.0 / k))
    axes = np.arange(-1.0, 1.0 + step / 2, step)
    grid = np.stack(np.meshgrid(*([axes] * k), indexing="ij"), axis=-1).reshape(-1, k)
    return grid[np.sum(grid**2, axis=1) <= 1.0]


def _distance_to_unit_disk(points: np.ndarray, frame: np.ndarray) -> np.ndarray:
    """Exact distance from ambient points to {u in span(frame): |u| <= 1}."""
    if frame.shape[0] == 0:
        return np.linalg.norm(points, axis=-1)
    coords = points @ frame.T
    feet = coords @ frame
    rad = np.linalg.norm(coords, axis=-1)
    inside = np.linalg.norm(points - feet, axis=-1)
    scale = np.where(rad > 1.0, rad, 1.0)
    clipped = (coords / scale[:, None]) @ frame
    outside = np.linalg.norm(points - clipped, axis=-1)
    return np.where(rad <= 1.0, inside, outside)


def grassmann_distance(
    L1: AffinePlane,
    L2: AffinePlane,
    resolution: float = DEFAULT_CONFIG.grassmann_resolution,
) -> float:
    """Hausdorff distance between the unit disks of the associated subspaces.

    Translation parts are discarded, so parallel distinct planes are at
    distance 0.  The sup side is sampled on a grid (additive error about
    `resolution`); the inf side uses the exact point-to-disk distance.
    Values lie in [0, 1].
    """
    if L1.k != L2.k:
        raise DimensionMismatchError(f"plane dims differ: {L1.k} vs {L2.k}")
    if L1.k == 0:
        return 0.0
    disk = unit_disk_samples(L1.k, resolution)
    pts1 = disk @ L1.frame
    pts2 = disk @ L2.frame
    d12 = float(np.max(_distance_to_unit_disk(pts1, L2.frame)))
    d21 = float(np.max(_distance_to_unit_disk(pts2, L1.frame)))
    return max(d12, d21)


def affine_span(points, rank_tol: float = DEFAULT_CONFIG.rank_tol) -> AffinePlane | None:
    """Affine span of the given points; None for an empty input.

    Near-dependent directions are dropped rather than raised on, so the span
    of collinear points is the line through them.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[0] == 0:
        return None
    base = pts[0]
    dirs = []
    for p in pts[1:]:
        v = p - base
        scale = np.linalg.norm(v)
        if scale == 0.0:
            continue
        w = v.copy()
        for _ in range(2):
            for u in dirs:
                w = w - np.dot(w, u) * u
        norm = np.linalg.norm(w)
        if norm > rank_tol * max(scale, 1.0):
            dirs.append(w / norm)
    frame = np.array(dirs) if dirs else np.zeros((0, base.size))
    return AffinePlane(base, frame)


def general_position(points, rho: float) -> bool:
    """True iff each point stays at distance >= rho from the span of its prefix.

    Order-dependent by definition: point i is tested against the affine span
    of points 0..i-1.  The first point is unconstrained.
    """
    if rho <= 0:
        raise ValueError(f"rho must be positive, got {rho}")
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    for i in range(1, pts.shape[0]):
        span = affine_span(pts[:i])
        if plane_distance(pts[i], span) < rho:
            return False
    return True


@dataclass(frozen=True)
class GraphEstimate:
    """C^1-norm estimate of samples expressed as a graph over a plane."""

    sup_height: float
    max_slope: float
    radius: float
    n_samples: int

    @property
    def c1_norm(self) -> float:
        return self.sup_height / self.radius + self.max_slope


def verify_graphical(
    samples,
    plane: AffinePlane,
    ball: Ball,
    config: GeometryConfig = DEFAULT_CONFIG,
) -> GraphEstimate | None:
    """Try to read the samples inside the ball as a graph over the plane.

    Returns the scale-r C^1 norm estimate (r^-1 sup|f| plus the maximum secant
    slope), or None when two samples share plane coordinates (within
    collision_factor * r) but have distinct heights, i.e. the set is not a
    graph.  Raises on an empty sample set.
    """
    pts = np.atleast_2d(np.asarray(samples, dtype=float))
    pts = pts[ball.contains(pts)]
    if pts.shape[0] == 0:
        raise ValueError("no samples inside the ball")
    r = ball.radius
    heights_vec = pts - project(plane, pts)
    sup_height = float(np.max(np.linalg.norm(heights_vec, axis=1)))
    if plane.k == 0:
        # every sample shares the (empty) plane coordinate
        if pts.shape[0] > 1 and sup_height > config.collision_factor * r:
            return None
        return GraphEstimate(sup_height, 0.0, r, pts.shape[0])
    coords = (pts - plane.base) @ plane.frame.T
    collision = config.collision_factor * r
    max_slope = 0.0
    n = pts.shape[0]
    chunk = max(1, int(2e6 // max(n, 1)))
    for start in range(0, n, chunk):
        block = slice(start, min(start + chunk, n))
        du = np.linalg.norm(coords[block, None, :] - coords[None, :, :], axis=-1)
        dh = np.linalg.norm(heights_vec[block, None, :] - heights_vec[None, :, :], axis=-1)
        colliding = du <= collision
        if np.any(colliding & (dh > collision)):
            return None
        valid = ~colliding
        if np.any(valid):
            max_slope = max(max_slope, float(np.max(dh[valid] / du[valid])))
    return GraphEstimate(sup_height, max_slope, r, n)


def operator_norm_power(matrix: np.ndarray, iters: int = 200) -> float:
    """Operator norm by power iteration on M^T M from a fixed start vector."""
    M = np.asarray(matrix, dtype=float)
    A = M.T @ M
    v = np.ones(A.shape[0]) / np.sqrt(A.shape[0])
    lam = 0.0
    for _ in range(iters):
        w = A @ v
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 0.0
        v = w / norm
        lam = norm
    return float(np.sqrt(lam))


def slice_distance(points, plane: AffinePlane, ball: Ball) -> np.ndarray:
    """Exact distance from points to (plane intersect closed ball).

    The slice is the k-disk centered at the projection of the ball center,
    of radius sqrt(R^2 - d(center, plane)^2); empty slices return +inf.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    center_foot = project(plane, ball.center)
    gap2 = float(np.sum((np.asarray(ball.center) - center_foot) ** 2))
    disk_r2 = ball.radius**2 - gap2
    if disk_r2 <= 0:
        return np.full(pts.shape[0], np.inf)
    disk_r = np.sqrt(disk_r2)
    feet = project(plane, pts)
    if plane.k == 0:
        return np.linalg.norm(pts - center_foot, axis=-1)
    in_coords = (feet - center_foot) @ plane.frame.T
    rad = np.linalg.norm(in_coords, axis=-1)
    scale = np.where(rad > disk_r, rad / disk_r, 1.0)
    clipped = center_foot + (in_coords / scale[:, None]) @ plane.frame
    return np.linalg.norm(pts - clipped, axis=-1)


def slice_hausdorff(
    plane_a: AffinePlane,
    plane_b: AffinePlane,
    ball: Ball,
    resolution: float = 1.0 / 128.0,
) -> float:
    """Sampled Hausdorff distance between two plane slices of the same ball.

    Sup side sampled on each slice disk, inf side exact (slice_distance);
    additive error about resolution * ball.radius.  Empty slices give inf
    unless both are empty (then 0).
    """
    samples = []
    for plane in (plane_a, plane_b):
        foot = project(plane, ball.center)
        gap2 = float(np.sum((np.asarray(ball.center) - foot) ** 2))
        disk_r2 = ball.radius**2 - gap2
        if disk_r2 <= 0:
            samples.append(None)
            continue
        disk = unit_disk_samples(plane.k, resolution) * np.sqrt(disk_r2)
        samples.append(foot + disk @ plane.frame if plane.k else foot.reshape(1, -1))
    if samples[0] is None and samples[1] is None:
        return 0.0
    if samples[0] is None or samples[1] is None:
        return float("inf")
    d_ab = float(np.max(slice_distance(samples[0], plane_b, ball)))
    d_ba = float(np.max(slice_distance(samples[1], plane_a, ball)))
    return max(d_ab, d_ba)
