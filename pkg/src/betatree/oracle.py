"""Brute-force verifiers, kept implementation-independent of the main modules.

Nothing here imports from geometry/measure/beta: each oracle re-derives what
it needs from primitive numpy arithmetic so a bug cannot cancel between an
implementation and its check.  Every oracle respects an explicit budget and
fails loudly instead of silently subsampling.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

__all__ = [
    "OracleBudget",
    "BudgetExceededError",
    "hausdorff_distance_sampled",
    "hausdorff_measure_greedy",
    "grid_minkowski",
]


class BudgetExceededError(RuntimeError):
    """An oracle refused to run because the instance exceeds its budget."""


@dataclass(frozen=True)
class OracleBudget:
    max_atoms: int = 200_000
    max_grid_cells: int = 4_000_000
    max_plane_grid: int = 2_000_000
    wall_clock_seconds: float = 120.0

    def __post_init__(self):
        if min(self.max_atoms, self.max_grid_cells, self.max_plane_grid) <= 0:
            raise ValueError("budget caps must be positive")
        if self.wall_clock_seconds <= 0:
            raise ValueError("wall clock cap must be positive")


DEFAULT_BUDGET = OracleBudget()


def hausdorff_distance_sampled(A, B, budget: OracleBudget = DEFAULT_BUDGET) -> float:
    """Exact Hausdorff distance between two finite point sets."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if A.shape[0] == 0 or B.shape[0] == 0:
        raise ValueError("hausdorff distance of an empty set")
    if max(A.shape[0], B.shape[0]) > budget.max_atoms:
        raise BudgetExceededError(f"{max(A.shape[0], B.shape[0])} points over budget")
    start = time.monotonic()

    def directed(P, Q):
        worst = 0.0
        chunk = max(1, int(4e6 // max(Q.shape[0], 1)))
        for s in range(0, P.shape[0], chunk):
            if time.monotonic() - start > budget.wall_clock_seconds:
                raise BudgetExceededError("hausdorff oracle exceeded wall clock")
            block = P[s:s + chunk]
            d2 = np.sum((block[:, None, :] - Q[None, :, :]) ** 2, axis=-1)
            worst = max(worst, float(np.max(np.min(d2, axis=1))))
        return worst

    return math.sqrt(max(directed(A, B), directed(B, A)))


def hausdorff_measure_greedy(points, k: int, delta: float,
                             budget: OracleBudget = DEFAULT_BUDGET) -> float:
    """Greedy delta-cover estimate of H^k_delta: omega_k * delta^k per ball.

    Scans points in index order; each uncovered point spawns a ball of radius
    delta that covers everything within it.  The result upper-bounds H^k_delta
    only up to the standard greedy/5r slack, so callers compare against ratio
    bounds, never exact equality.  Empty input gives 0.
    """
    if delta <= 0:
        raise ValueError(f"delta must be positive, got {delta}")
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[0] == 0:
        return 0.0
    if pts.shape[0] > budget.max_atoms:
        raise BudgetExceededError(f"{pts.shape[0]} points over budget")
    omega_k = math.pi ** (k / 2.0) / math.gamma(k / 2.0 + 1.0)
    uncovered = np.ones(pts.shape[0], dtype=bool)
    count = 0
    d2max = delta * delta
    while True:
        remaining = np.nonzero(uncovered)[0]
        if remaining.size == 0:
            break
        pivot = remaining[0]
        count += 1
        d2 = np.sum((pts[uncovered] - pts[pivot]) ** 2, axis=1)
        still = np.nonzero(uncovered)[0][d2 >= d2max]
        uncovered[:] = False
        uncovered[still] = True
    return count * omega_k * delta**k


def grid_minkowski(set_samples, r: float, domain_center, domain_radius: float,
                   step: float, budget: OracleBudget = DEFAULT_BUDGET) -> float:
    """Exhaustive twin of measure.minkowski_volume (no spatial index).

    Same grid contract: cells at lo + (i + 1/2) * step with
    lo = domain_center - domain_radius, kept when strictly inside the open
    domain ball, counted when strictly within r of some sample, times cell
    volume.  Both implementations use the same squared-distance comparison,
    so they must agree exactly.
    """
    if step > r / 4.0:
        raise ValueError(f"step {step} too coarse for r = {r} (need <= r/4)")
    samples = np.atleast_2d(np.asarray(set_samples, dtype=float))
    center = np.asarray(domain_center, dtype=float)
    n = center.size
    if samples.size == 0:
        return 0.0
    counts = int(np.ceil(2.0 * domain_radius / step))
    if counts**n > budget.max_grid_cells:
        raise BudgetExceededError(f"{counts ** n} grid cells over budget")
    lo = center - domain_radius
    axes = [lo[d] + (np.arange(counts) + 0.5) * step for d in range(n)]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)
    cells = mesh[np.sum((mesh - center) ** 2, axis=1) < domain_radius**2]
    r2 = r * r
    hit = 0
    start = time.monotonic()
    chunk = max(1, int(4e6 // max(samples.shape[0], 1)))
    for s in range(0, cells.shape[0], chunk):
        if time.monotonic() - start > budget.wall_clock_seconds:
            raise BudgetExceededError("minkowski oracle exceeded wall clock")
        block = cells[s:s + chunk]
        d2 = np.sum((block[:, None, :] - samples[None, :, :]) ** 2, axis=-1)
        hit += int(np.count_nonzero(np.any(d2 < r2, axis=1)))
    return hit * step**n
