"""Deterministic generators for the benchmark measures used throughout.

Every generator is a pure function of its FixtureSpec, so regeneration is
byte-identical.  H^k sampling weights are the local element measure: segment
length for curves, patch area for spheres, cell volume for lattices.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .measure import PointMeasure

__all__ = [
    "FixtureSpec",
    "generate",
    "koch_polyline",
    "koch",
    "koch_step_ratio",
    "lebesgue_lattice",
    "packed_spheres",
    "plane_plus_diracs",
    "graph_sample",
    "van_der_corput",
    "GRAPH_FUNCTIONS",
]


@dataclass(frozen=True)
class FixtureSpec:
    """Serializable description of a fixture; generation is pure in this."""

    kind: str
    params: dict = field(default_factory=dict)
    seed: int = 0

    def to_json(self) -> str:
        return json.dumps({"kind": self.kind, "params": self.params, "seed": self.seed},
                          sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "FixtureSpec":
        data = json.loads(text)
        return cls(data["kind"], data.get("params", {}), data.get("seed", 0))


def generate(spec: FixtureSpec) -> PointMeasure:
    makers = {
        "koch": lambda p: koch(**p),
        "lebesgue": lambda p: lebesgue_lattice(**p),
        "packed_spheres": lambda p: packed_spheres(**p),
        "plane_plus_diracs": lambda p: plane_plus_diracs(**p),
        "graph": lambda p: graph_sample(**p),
    }
    if spec.kind not in makers:
        raise ValueError(f"unknown fixture kind {spec.kind!r}")
    return makers[spec.kind](dict(spec.params))


# ---------------------------------------------------------------- Koch curve


def koch_step_ratio(kappa: float) -> float:
    """Per-step length ratio of the tent construction: (2 + sqrt(1+36 k^2))/3.

    The 36 is specific to this exact tent: the middle third is replaced by the
    two equal sides of an isoceles tent whose apex sits at height kappa times
    the whole segment length.
    """
    return (2.0 + math.sqrt(1.0 + 36.0 * kappa * kappa)) / 3.0


def koch_polyline(kappas, depth: int):
    """Vertex chain of the generalized Koch curve after `depth` steps.

    Step i replaces the middle third of every segment with a tent of height
    kappas[i] times the segment length, always erected to the left of the
    direction of travel (classical snowflake convention; the construction
    itself does not fix a side).  Returns (vertices, lengths_per_depth) where
    lengths_per_depth[d] is the total polyline length after d steps.
    """
    if depth < 0 or depth > 16:
        raise ValueError(f"depth must be in [0, 16], got {depth}")
    kappas = list(kappas)
    if any(k < 0 for k in kappas):
        raise ValueError("kappa values must be nonnegative")
    if len(kappas) < depth:
        raise ValueError(f"need {depth} kappa values, got {len(kappas)}")
    verts = np.array([[0.0, 0.0], [1.0, 0.0]])
    lengths = [1.0]
    for i in range(depth):
        a = verts[:-1]
        seg = verts[1:] - a
        # left normal with the same length as the segment, so midpoint +
        # kappa * normal puts the tent apex at height kappa * |segment|
        normal = np.column_stack([-seg[:, 1], seg[:, 0]])
        m = a.shape[0]
        new = np.empty((4 * m + 1, 2))
        new[0:-1:4] = a
        new[1::4] = a + seg / 3.0
        new[2::4] = a + seg / 2.0 + kappas[i] * normal
        new[3::4] = a + 2.0 * seg / 3.0
        new[-1] = verts[-1]
        verts = new
        lengths.append(float(np.sum(np.linalg.norm(np.diff(verts, axis=0), axis=1))))
    return verts, lengths


def koch(kappas, depth: int) -> PointMeasure:
    """Koch curve as a point measure: atoms at vertices, weights split H^1.

    Each vertex carries half the length of its adjacent segments, so total
    mass equals the polyline length exactly.
    """
    verts, _ = koch_polyline(kappas, depth)
    seglen = np.linalg.norm(np.diff(verts, axis=0), axis=1)
    weights = np.zeros(verts.shape[0])
    weights[:-1] += seglen / 2.0
    weights[1:] += seglen / 2.0
    return PointMeasure(verts, weights)


# ------------------------------------------------------------ plain lattices


def lebesgue_lattice(n: int, spacing: float, radius: float = 1.0) -> PointMeasure:
    """Lattice sampling of Lebesgue measure on B_radius: weight = cell volume."""
    if spacing <= 0:
        raise ValueError("spacing must be positive")
    half = int(math.floor(radius / spacing))
    axis = spacing * np.arange(-half, half + 1)
    grid = np.stack(np.meshgrid(*([axis] * n), indexing="ij"), axis=-1).reshape(-1, n)
    inside = np.sum(grid**2, axis=1) < radius**2
    pts = grid[inside]
    return PointMeasure(pts, np.full(pts.shape[0], spacing**n))


# ------------------------------------------------------------ packed spheres


def _circle_samples(center: np.ndarray, radius: float, count: int, n: int) -> tuple:
    ang = 2.0 * np.pi * np.arange(count) / count
    pts = np.zeros((count, n))
    pts[:, 0] = radius * np.cos(ang)
    pts[:, 1] = radius * np.sin(ang)
    pts += center
    return pts, np.full(count, 2.0 * np.pi * radius / count)


def _sphere_samples(center: np.ndarray, radius: float, bands: int, n: int) -> tuple:
    """Latitude-band sampling of S^2 with exact per-band H^2 weights."""
    pts, wts = [], []
    for b in range(bands):
        phi0 = np.pi * b / bands
        phi1 = np.pi * (b + 1) / bands
        phi = 0.5 * (phi0 + phi1)
        band_area = 2.0 * np.pi * radius**2 * (math.cos(phi0) - math.cos(phi1))
        count = max(4, int(np.ceil(2.0 * np.pi * np.sin(phi) * bands)))
        ang = 2.0 * np.pi * np.arange(count) / count
        ring = np.zeros((count, n))
        ring[:, 0] = radius * np.sin(phi) * np.cos(ang)
        ring[:, 1] = radius * np.sin(phi) * np.sin(ang)
        ring[:, 2] = radius * np.cos(phi)
        pts.append(ring + center)
        wts.append(np.full(count, band_area / count))
    return np.vstack(pts), np.concatenate(wts)


def packed_spheres(n: int, k: int, rho: float, samples_per_sphere: int | None = None,
                   max_atoms: int = 400_000) -> PointMeasure:
    """k-spheres of radius rho^(n/k) centered on a rho-lattice in B_2, clipped to B_1.

    Mass is H^k of the retained sample patches; by construction the total is
    bounded uniformly in rho while the support fails packing below scale rho.
    """
    if not (0 < rho <= 1):
        raise ValueError("rho must lie in (0, 1]")
    if not (1 <= k < n <= 3):
        raise ValueError("desk scale: 1 <= k < n <= 3")
    s = rho ** (n / k)
    half = int(math.floor(2.0 / rho))
    axis = rho * np.arange(-half, half + 1)
    centers = np.stack(np.meshgrid(*([axis] * n), indexing="ij"), axis=-1).reshape(-1, n)
    centers = centers[np.sum(centers**2, axis=1) < 4.0]
    count = samples_per_sphere or max(12, int(np.ceil(2.0 * np.pi / rho ** (n / k - 1) / 8)))
    count = min(count, 256)
    est = centers.shape[0] * (count if k == 1 else count * count)
    if est > max_atoms * 4:
        raise ValueError(f"resolution explosion: ~{est} samples requested")
    pts_all, wts_all = [], []
    for c in centers:
        if k == 1:
            pts, wts = _circle_samples(c, s, count, n)
        else:
            pts, wts = _sphere_samples(c, s, max(4, count // 4), n)
        keep = np.sum(pts**2, axis=1) < 1.0
        if np.any(keep):
            pts_all.append(pts[keep])
            wts_all.append(wts[keep])
    if not pts_all:
        return PointMeasure(np.zeros((0, n)), np.zeros(0))
    mu = PointMeasure(np.vstack(pts_all), np.concatenate(wts_all))
    if mu.n_atoms > max_atoms:
        raise ValueError(f"resolution explosion: {mu.n_atoms} atoms")
    return mu


# --------------------------------------------------- plane + Dirac sharpness


def van_der_corput(count: int, base: int = 2) -> np.ndarray:
    """First `count` terms of the base-b van der Corput sequence in [0, 1)."""
    out = np.zeros(count)
    for i in range(count):
        x, denom, j = 0.0, 1.0, i + 1
        while j > 0:
            denom *= base
            j, rem = divmod(j, base)
            x += rem / denom
        out[i] = x
    return out


def plane_plus_diracs(n: int, k: int, dirac_weights, dirac_count: int | None = None,
                      spacing: float = 1.0 / 32.0) -> PointMeasure:
    """Lattice Lebesgue measure on B_1 plus heavy Diracs dense on the k-plane.

    Dirac positions are a van der Corput set on span(e_1..e_k) intersect B_1,
    exactly on the plane.  `dirac_weights` is either one weight per point or a
    scalar recycled over `dirac_count` points.  Labels mark atom provenance.
    """
    weights = np.atleast_1d(np.asarray(dirac_weights, dtype=float))
    if dirac_count is not None and weights.size == 1:
        weights = np.full(dirac_count, weights[0])
    if np.any(weights <= 0):
        raise ValueError("dirac weights must be positive")
    base_measure = lebesgue_lattice(n, spacing)
    count = weights.size
    if k == 1:
        coords = (2.0 * van_der_corput(count) - 1.0).reshape(-1, 1)
    elif k == 2:
        u = 2.0 * van_der_corput(count, 2) - 1.0
        v = 2.0 * van_der_corput(count, 3) - 1.0
        coords = np.column_stack([u, v])
        keep = np.sum(coords**2, axis=1) < 1.0
        coords, weights = coords[keep], weights[keep]
    else:
        raise ValueError("k must be 1 or 2 at desk scale")
    pts = np.zeros((coords.shape[0], n))
    pts[:, :k] = coords
    positions = np.vstack([base_measure.positions, pts])
    allw = np.concatenate([base_measure.weights, weights])
    labels = ["lattice"] * base_measure.n_atoms + ["dirac"] * pts.shape[0]
    return PointMeasure(positions, allw, labels)


# -------------------------------------------------------------- graph curves

GRAPH_FUNCTIONS = {
    "flat": lambda x, a: np.zeros_like(x),
    "linear": lambda x, a: a * x,
    "sine": lambda x, a: a * np.sin(2.0 * np.pi * x),
    "parabola": lambda x, a: a * x * x,
    "abs": lambda x, a: a * np.abs(x),
}


def graph_sample(function: str, spacing: float, amplitude: float = 0.05,
                 halfwidth: float = 1.0, n: int = 2) -> PointMeasure:
    """Curve y = f(x) over [-halfwidth, halfwidth] with polyline H^1 weights.

    `function` picks from GRAPH_FUNCTIONS; 'abs' is the Lipschitz corner whose
    Dini sum diverges logarithmically at the origin, the others are smooth.
    """
    if function not in GRAPH_FUNCTIONS:
        raise ValueError(f"unknown graph function {function!r}")
    if spacing <= 0:
        raise ValueError("spacing must be positive")
    count = int(round(2.0 * halfwidth / spacing))
    x = np.linspace(-halfwidth, halfwidth, count + 1)
    y = GRAPH_FUNCTIONS[function](x, amplitude)
    pts = np.zeros((x.size, n))
    pts[:, 0] = x
    pts[:, 1] = y
    seglen = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    weights = np.zeros(x.size)
    weights[:-1] += seglen / 2.0
    weights[1:] += seglen / 2.0
    return PointMeasure(pts, weights)
