"""Finite weighted point measures, covering pairs, and packing measures.

A PointMeasure is a finite list of (position, weight) atoms standing in for a
Borel measure.  All balls are open: an atom at distance exactly r from the
center belongs to no ball of radius r.  Nets and Vitali covers downstream
depend on that convention, so it is enforced with strict comparisons
everywhere.  Atom order is insertion order and every iteration is index
order, which makes each net and cover construction reproducible.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .geometry import Ball

__all__ = [
    "PointMeasure",
    "CoveringPair",
    "PackingMeasure",
    "GridIndex",
    "ZeroMassError",
    "ball_mass",
    "center_of_mass",
    "rescale",
    "packing_number",
    "minkowski_volume",
]

FLOAT_FMT = ".17g"  # byte-stable writer precision


class ZeroMassError(ValueError):
    """Raised when an operation needs positive mass in a ball and finds none."""


class GridIndex:
    """Uniform grid bucketing over a fixed point set.

    Acceleration structure only: query() gathers candidate cells and then
    applies the same strict open-ball test a brute-force scan would, so the
    result is exactly the brute-force answer.
    """

    def __init__(self, points: np.ndarray, cell: float | None = None):
        self.points = np.asarray(points, dtype=float)
        n_pts, dim = self.points.shape if self.points.ndim == 2 else (0, 1)
        if n_pts == 0:
            self.cell = 1.0
            self.lo = np.zeros(dim)
            self.buckets = {}
            return
        self.lo = self.points.min(axis=0)
        extent = float(np.max(self.points.max(axis=0) - self.lo))
        if cell is None:
            cell = extent / max(4.0, round(n_pts ** (1.0 / dim))) if extent > 0 else 1.0
        self.cell = max(cell, 1e-12)
        keys = np.floor((self.points - self.lo) / self.cell).astype(np.int64)
        self.buckets: dict[tuple, np.ndarray] = {}
        order = np.lexsort(keys.T[::-1])
        sorted_keys = keys[order]
        change = np.nonzero(np.any(np.diff(sorted_keys, axis=0) != 0, axis=1))[0]
        starts = np.concatenate([[0], change + 1])
        ends = np.concatenate([change + 1, [n_pts]])
        for s, e in zip(starts, ends):
            self.buckets[tuple(sorted_keys[s])] = order[s:e]

    def query(self, center, radius: float) -> np.ndarray:
        """Indices of points with |p - center| < radius (strict)."""
        if not self.buckets:
            return np.zeros(0, dtype=np.int64)
        center = np.asarray(center, dtype=float)
        lo_key = np.floor((center - radius - self.lo) / self.cell).astype(np.int64)
        hi_key = np.floor((center + radius - self.lo) / self.cell).astype(np.int64)
        ranges = [np.arange(lo_key[d], hi_key[d] + 1) for d in range(center.size)]
        cand = []
        for key in _iter_keys(ranges):
            hit = self.buckets.get(key)
            if hit is not None:
                cand.append(hit)
        if not cand:
            return np.zeros(0, dtype=np.int64)
        idx = np.concatenate(cand)
        d2 = np.sum((self.points[idx] - center) ** 2, axis=1)
        hit = idx[d2 < radius * radius]
        hit.sort()
        return hit


def _iter_keys(ranges):
    grids = np.meshgrid(*ranges, indexing="ij")
    flat = np.stack([g.ravel() for g in grids], axis=1)
    for row in flat:
        yield tuple(row)


class PointMeasure:
    """Finite weighted point set in R^n; immutable after construction."""

    def __init__(self, positions, weights, labels=None):
        positions = np.atleast_2d(np.asarray(positions, dtype=float))
        weights = np.asarray(weights, dtype=float).ravel()
        if positions.shape[0] != weights.size:
            raise ValueError(
                f"{positions.shape[0]} positions vs {weights.size} weights"
            )
        if np.any(weights < 0):
            raise ValueError("weights must be nonnegative")
        if not np.all(np.isfinite(positions)) or not np.all(np.isfinite(weights)):
            raise ValueError("positions and weights must be finite")
        positions.setflags(write=False)
        weights.setflags(write=False)
        self.positions = positions
        self.weights = weights
        self.labels = list(labels) if labels is not None else None
        self._index: GridIndex | None = None
        self._tree: cKDTree | None = None

    @property
    def ambient_dim(self) -> int:
        return self.positions.shape[1]

    @property
    def n_atoms(self) -> int:
        return self.positions.shape[0]

    @property
    def total_mass(self) -> float:
        return float(np.sum(self.weights))

    def index(self) -> GridIndex:
        if self._index is None:
            self._index = GridIndex(self.positions)
        return self._index

    def kdtree(self) -> cKDTree:
        if self._tree is None:
            self._tree = cKDTree(self.positions)
        return self._tree

    def atoms_in(self, ball: Ball) -> np.ndarray:
        """Sorted indices of atoms strictly inside the open ball."""
        return self.index().query(ball.center, ball.radius)

    def restrict(self, indices) -> "PointMeasure":
        idx = np.asarray(indices)
        if idx.dtype == bool:
            idx = np.nonzero(idx)[0]
        labels = [self.labels[i] for i in idx] if self.labels is not None else None
        return PointMeasure(self.positions[idx], self.weights[idx], labels)

    def min_spacing(self) -> float:
        """Smallest positive nearest-neighbor distance; inf for < 2 atoms."""
        if self.n_atoms < 2:
            return float("inf")
        d, _ = self.kdtree().query(self.positions, k=2)
        gaps = d[:, 1]
        positive = gaps[gaps > 0]
        return float(np.min(positive)) if positive.size else float("inf")

    # -- serialization (byte-stable: fixed 17-significant-digit decimals) --

    def to_csv(self) -> str:
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        n = self.ambient_dim
        writer.writerow([f"x{i + 1}" for i in range(n)] + ["weight"])
        for pos, w in zip(self.positions, self.weights):
            writer.writerow([format(v, FLOAT_FMT) for v in pos] + [format(w, FLOAT_FMT)])
        return out.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "PointMeasure":
        reader = csv.reader(io.StringIO(text))
        header = next(reader)
        if not header or header[-1] != "weight":
            raise ValueError("expected header x1,...,xn,weight")
        n = len(header) - 1
        positions, weights = [], []
        for row_num, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != n + 1:
                raise ValueError(f"row {row_num}: expected {n + 1} fields, got {len(row)}")
            try:
                positions.append([float(v) for v in row[:n]])
                weights.append(float(row[n]))
            except ValueError as exc:
                raise ValueError(f"row {row_num}: {exc}") from None
        if not positions:
            return cls(np.zeros((0, n)), np.zeros(0))
        return cls(np.array(positions), np.array(weights))

    def to_json(self) -> str:
        atoms = [
            {"position": [format(v, FLOAT_FMT) for v in pos], "weight": format(w, FLOAT_FMT)}
            for pos, w in zip(self.positions, self.weights)
        ]
        return json.dumps(atoms, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "PointMeasure":
        atoms = json.loads(text)
        if not atoms:
            return cls(np.zeros((0, 1)), np.zeros(0))
        positions = np.array([[float(v) for v in a["position"]] for a in atoms])
        weights = np.array([float(a["weight"]) for a in atoms])
        return cls(positions, weights)


def ball_mass(mu: PointMeasure, ball: Ball) -> float:
    """Total weight of atoms strictly inside the open ball."""
    idx = mu.atoms_in(ball)
    return float(np.sum(mu.weights[idx]))


def center_of_mass(mu: PointMeasure, ball: Ball) -> np.ndarray:
    """Mass-weighted mean of the atoms in the ball; lies in the closed ball.

    Raises ZeroMassError when the ball carries no mass.  The generalized
    center of mass for infinite-mass balls has no finite-sample analog and is
    therefore unsupported here by construction.
    """
    idx = mu.atoms_in(ball)
    mass = float(np.sum(mu.weights[idx]))
    if mass <= 0.0:
        raise ZeroMassError(f"ball of radius {ball.radius} carries no mass")
    return mu.weights[idx] @ mu.positions[idx] / mass


def rescale(mu: PointMeasure, x, r: float, k: int) -> PointMeasure:
    """Push atoms through p -> (p - x)/r and scale weights by r^-k.

    Beta numbers transform covariantly: beta of the result at (y, s) equals
    beta of the input at (x + r*y, r*s).
    """
    if r <= 0:
        raise ValueError(f"rescale radius must be positive, got {r}")
    x = np.asarray(x, dtype=float)
    return PointMeasure((mu.positions - x) / r, mu.weights * r ** (-float(k)), mu.labels)


class CoveringPair:
    """Center set with per-center stopping radii; C+ has r > 0, C0 has r = 0."""

    def __init__(self, centers, radii, mu: PointMeasure | None = None,
                 max_radius: float = 1.0, tol: float = 1e-9):
        centers = np.atleast_2d(np.asarray(centers, dtype=float))
        radii = np.asarray(radii, dtype=float).ravel()
        if centers.shape[0] != radii.size:
            raise ValueError(f"{centers.shape[0]} centers vs {radii.size} radii")
        if np.any(radii < 0):
            raise ValueError("radii must be nonnegative")
        if radii.size and float(np.max(radii)) > max_radius + tol:
            raise ValueError(f"radii exceed configured maximum {max_radius}")
        centers.setflags(write=False)
        radii.setflags(write=False)
        self.centers = centers
        self.radii = radii
        if mu is not None and mu.n_atoms:
            tree = cKDTree(centers)
            d, _ = tree.query(mu.positions, k=1)
            if float(np.max(d)) > tol:
                raise ValueError("covering centers do not contain the measure support")

    @property
    def plus_mask(self) -> np.ndarray:
        return self.radii > 0

    @property
    def plus_centers(self) -> np.ndarray:
        return self.centers[self.plus_mask]

    @property
    def plus_radii(self) -> np.ndarray:
        return self.radii[self.plus_mask]

    @property
    def zero_centers(self) -> np.ndarray:
        return self.centers[~self.plus_mask]

    @classmethod
    def for_measure(cls, mu: PointMeasure, radii=None, **kw) -> "CoveringPair":
        """Covering pair whose centers are the atoms themselves (r = 0 default)."""
        r = np.zeros(mu.n_atoms) if radii is None else np.asarray(radii, dtype=float)
        return cls(mu.positions, r, mu=mu, **kw)

    def radius_at(self, points) -> np.ndarray:
        """Stopping radius of the nearest center for each query point."""
        tree = cKDTree(self.centers)
        _, idx = tree.query(np.atleast_2d(points), k=1)
        return self.radii[idx]


@dataclass(frozen=True)
class PackingMeasure:
    """H^k-weighted samples on the fine part plus r^k Dirac weights on C'+."""

    k: int
    hausdorff_points: np.ndarray
    hausdorff_weights: np.ndarray
    dirac_centers: np.ndarray
    dirac_weights: np.ndarray

    def __post_init__(self):
        hw = np.asarray(self.hausdorff_weights, dtype=float)
        dw = np.asarray(self.dirac_weights, dtype=float)
        if np.any(hw < 0) or np.any(dw < 0):
            raise ValueError("packing measure weights must be nonnegative")

    @classmethod
    def empty(cls, k: int, n: int) -> "PackingMeasure":
        return cls(k, np.zeros((0, n)), np.zeros(0), np.zeros((0, n)), np.zeros(0))


def packing_number(pm: PackingMeasure) -> float:
    """Hausdorff-part total plus Dirac-part total (the c(n) packing quantity)."""
    return float(np.sum(pm.hausdorff_weights) + np.sum(pm.dirac_weights))


def minkowski_volume(set_samples, r: float, domain: Ball, grid_step: float) -> float:
    """Grid-count estimate of |B_r(S) intersect domain|.

    Counts grid cells whose center lies strictly inside the open domain ball
    and strictly within r of some sample, times the cell volume.  The additive
    error is O(grid_step * surface area of the tube boundary).  The grid is
    anchored at domain.center - domain.radius with cell centers at
    lo + (i + 1/2) * grid_step; the oracle twin uses the identical grid and
    identical squared-distance comparisons, so the two must agree exactly.
    """
    if grid_step > r / 4.0:
        raise ValueError(f"grid_step {grid_step} too coarse for r = {r} (need <= r/4)")
    samples = np.atleast_2d(np.asarray(set_samples, dtype=float))
    n = domain.center.size
    if samples.size == 0:
        return 0.0
    lo = np.asarray(domain.center, dtype=float) - domain.radius
    counts = int(np.ceil(2.0 * domain.radius / grid_step))
    axes = [lo[d] + (np.arange(counts) + 0.5) * grid_step for d in range(n)]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)
    in_domain = np.sum((mesh - domain.center) ** 2, axis=1) < domain.radius**2
    cells = mesh[in_domain]
    tree = cKDTree(samples)
    # KD query only proposes candidates; the decision reuses the oracle's exact
    # squared-distance comparison so both code paths agree bit for bit.
    neighbor_lists = tree.query_ball_point(cells, r * (1.0 + 1e-9))
    hit = 0
    r2 = r * r
    for cell, neighbors in zip(cells, neighbor_lists):
        if neighbors and np.any(np.sum((samples[neighbors] - cell) ** 2, axis=1) < r2):
            hit += 1
    return hit * grid_step**n
