"""Truncated L^2 beta numbers, best planes, and dyadic Dini sums.

The squared beta number of a ball is r^(-k-2) times the weighted sum of
squared distances to the best affine k-plane, and is defined to be 0 whenever
the ball mass is at most eps_bar * r^k (non-strict, so mass exactly at the
threshold truncates).  For a finite atom measure the best plane is exactly
the weighted-centroid plane spanned by the top-k eigenvectors of the centered
second-moment matrix; beta^2 equals r^(-k-2) times the sum of the n-k
smallest eigenvalues.  This is stated as a lemma in the docs and tested
against the independent grid-search oracle below.

Eigen ties make the plane non-unique (only beta^2 is unique); determinism is
fixed by descending eigenvalue order and a sign convention (first component
of each eigenvector with magnitude above 1e-12 is positive).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import AffinePlane, Ball
from .measure import PointMeasure, ZeroMassError

__all__ = [
    "BetaProfile",
    "ProfileEntry",
    "OracleTooLargeError",
    "jacobi_eigh",
    "best_plane",
    "beta_truncated",
    "dini_sum",
    "dini_profile",
    "compute_profile",
    "beta_oracle",
    "second_moment",
]


class OracleTooLargeError(ValueError):
    """Raised when an instance exceeds the desk-scale oracle budget."""


def jacobi_eigh(matrix: np.ndarray, tol: float = 1e-12, max_sweeps: int = 64):
    """Cyclic Jacobi diagonalization of a symmetric matrix.

    Returns (eigenvalues, eigenvectors) sorted by descending eigenvalue, with
    eigenvectors as rows, each sign-fixed so its first component of magnitude
    above 1e-12 is positive.  Deterministic for identical input.
    """
    A = np.array(matrix, dtype=float)
    n = A.shape[0]
    if A.shape != (n, n) or not np.allclose(A, A.T, atol=1e-10 * max(1.0, np.abs(A).max())):
        raise ValueError("jacobi_eigh needs a symmetric square matrix")
    V = np.eye(n)
    scale = max(1.0, float(np.abs(A).max()))
    for _ in range(max_sweeps):
        off = np.sqrt(np.sum(np.tril(A, -1) ** 2) * 2.0)
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if abs(apq) <= tol * scale / (n * n):
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                if theta == 0.0:
                    t = 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                rot = np.eye(n)
                rot[p, p] = rot[q, q] = c
                rot[p, q] = s
                rot[q, p] = -s
                A = rot.T @ A @ rot
                V = V @ rot
    vals = np.diag(A).copy()
    order = np.argsort(-vals, kind="stable")
    vals = vals[order]
    vecs = V.T[order]
    for i in range(n):
        lead = np.nonzero(np.abs(vecs[i]) > 1e-12)[0]
        if lead.size and vecs[i, lead[0]] < 0:
            vecs[i] = -vecs[i]
    return vals, vecs


def second_moment(positions: np.ndarray, weights: np.ndarray):
    """Centered weighted second-moment matrix with its center of mass."""
    mass = float(np.sum(weights))
    if mass <= 0:
        raise ZeroMassError("second moment of zero mass")
    com = weights @ positions / mass
    q = positions - com
    return (q * weights[:, None]).T @ q, com


def best_plane(mu: PointMeasure, ball: Ball, k: int, indices=None):
    """L^2(mu restricted to the ball) minimizing affine k-plane and its beta^2.

    The plane passes through the ball's center of mass and is spanned by the
    top-k eigenvectors of the second-moment matrix; beta^2 is r^(-k-2) times
    the sum of the remaining eigenvalues (clipped at 0 against roundoff).
    """
    n = mu.ambient_dim
    if not (0 <= k < n):
        raise ValueError(f"need 0 <= k < n, got k={k}, n={n}")
    idx = mu.atoms_in(ball) if indices is None else np.asarray(indices)
    if idx.size == 0:
        raise ZeroMassError("no atoms in ball")
    weights = mu.weights[idx]
    if float(np.sum(weights)) <= 0.0:
        raise ZeroMassError("zero mass in ball")
    moment, com = second_moment(mu.positions[idx], weights)
    vals, vecs = jacobi_eigh(moment)
    plane = AffinePlane(com, vecs[:k])
    residual = float(np.sum(np.clip(vals[k:], 0.0, None)))
    beta_sq = ball.radius ** (-k - 2) * residual
    return plane, beta_sq


def beta_truncated(mu: PointMeasure, ball: Ball, k: int, eps_bar: float) -> float:
    """beta^2 with the low-mass truncation: 0 when mass <= eps_bar * r^k.

    A zero-mass ball returns 0 through the truncation branch for any eps_bar,
    including eps_bar = 0 (0 <= 0), which is the documented convention.
    """
    if eps_bar < 0:
        raise ValueError("eps_bar must be nonnegative")
    idx = mu.atoms_in(ball)
    mass = float(np.sum(mu.weights[idx]))
    if mass <= eps_bar * ball.radius**k:
        return 0.0
    return best_plane(mu, ball, k, indices=idx)[1]


def dini_sum(mu: PointMeasure, x, k: int, eps_bar: float,
             alpha_min: int, alpha_max: int) -> float:
    """Sum of truncated beta^2 over the dyadic scales 2^alpha_min .. 2^alpha_max."""
    if alpha_min > alpha_max:
        raise ValueError("alpha_min must be <= alpha_max")
    x = np.asarray(x, dtype=float)
    return sum(
        beta_truncated(mu, Ball(x, 2.0**a), k, eps_bar)
        for a in range(alpha_min, alpha_max + 1)
    )


def dini_profile(mu: PointMeasure, points, k: int, eps_bar: float,
                 alphas, batch: int = 512) -> np.ndarray:
    """Per-point, per-scale truncated beta^2 matrix, vectorized.

    Returns an array of shape (len(points), len(alphas)).  Uses batched
    symmetric eigenvalues for throughput; a test pins it to the jacobi path.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    alphas = list(alphas)
    out = np.zeros((pts.shape[0], len(alphas)))
    if mu.n_atoms == 0:
        return out
    tree = mu.kdtree()
    n = mu.ambient_dim
    for j, alpha in enumerate(alphas):
        r = 2.0**alpha
        thresh = eps_bar * r**k
        for start in range(0, pts.shape[0], batch):
            block = pts[start:start + batch]
            neighbor_lists = tree.query_ball_point(block, r * (1.0 + 1e-12))
            for row, neighbors in enumerate(neighbor_lists):
                if not neighbors:
                    continue
                idx = np.asarray(neighbors)
                d2 = np.sum((mu.positions[idx] - block[row]) ** 2, axis=1)
                idx = idx[d2 < r * r]
                if idx.size == 0:
                    continue
                w = mu.weights[idx]
                mass = float(np.sum(w))
                if mass <= thresh:
                    continue
                moment, _ = second_moment(mu.positions[idx], w)
                vals = np.linalg.eigvalsh(moment)  # ascending
                residual = float(np.sum(np.clip(vals[: n - k], 0.0, None)))
                out[start + row, j] = r ** (-k - 2) * residual
    return out


@dataclass(frozen=True)
class ProfileEntry:
    alpha: int
    r: float
    beta_sq: float
    mass: float
    plane: AffinePlane | None


@dataclass(frozen=True)
class BetaProfile:
    """beta^2, best plane, and ball mass per dyadic scale at a fixed center."""

    center: np.ndarray
    k: int
    eps_bar: float
    entries: tuple

    def to_json(self) -> dict:
        return {
            "center": list(self.center),
            "k": self.k,
            "eps_bar": self.eps_bar,
            "entries": [
                {
                    "alpha": e.alpha,
                    "r": e.r,
                    "beta_sq": e.beta_sq,
                    "mass": e.mass,
                    "plane": e.plane.to_json() if e.plane is not None else None,
                }
                for e in self.entries
            ],
        }


def compute_profile(mu: PointMeasure, center, k: int, eps_bar: float,
                    alpha_min: int, alpha_max: int) -> BetaProfile:
    """BetaProfile over dyadic scales, finest last (scales strictly decreasing)."""
    center = np.asarray(center, dtype=float)
    entries = []
    for alpha in range(alpha_max, alpha_min - 1, -1):
        ball = Ball(center, 2.0**alpha)
        idx = mu.atoms_in(ball)
        mass = float(np.sum(mu.weights[idx]))
        if mass <= eps_bar * ball.radius**k:
            entries.append(ProfileEntry(alpha, ball.radius, 0.0, mass, None))
        else:
            plane, beta_sq = best_plane(mu, ball, k, indices=idx)
            entries.append(ProfileEntry(alpha, ball.radius, beta_sq, mass, plane))
    return BetaProfile(center, k, eps_bar, tuple(entries))


def _orientation_grid(n: int, k: int, resolution: float) -> np.ndarray:
    """Deterministic grid of unit direction/normal vectors for the oracle."""
    m = max(4, round(1.0 / resolution))
    if n == 2:
        theta = np.pi * np.arange(m) / m
        return np.column_stack([np.cos(theta), np.sin(theta)])
    theta = 2.0 * np.pi * np.arange(m) / m
    n_phi = m // 4 + 1
    phi = 0.5 * np.pi * np.arange(n_phi) / max(n_phi - 1, 1)
    tt, pp = np.meshgrid(theta, phi, indexing="ij")
    return np.column_stack(
        [
            (np.cos(tt) * np.sin(pp)).ravel(),
            (np.sin(tt) * np.sin(pp)).ravel(),
            np.cos(pp).ravel(),
        ]
    )


def beta_oracle(mu: PointMeasure, ball: Ball, k: int,
                grid_resolution: float = 1.0 / 720.0,
                max_atoms: int = 200) -> float:
    """Brute-force beta^2 upper bound by exhaustive orientation search.

    For each grid orientation the offset is optimal exactly (the plane passes
    through the weighted mean in the normal directions), so the only
    discretization error is angular: the result exceeds the true infimum by
    at most O(grid_resolution^2) relative on nondegenerate instances.  Desk
    scale only: n <= 3, k in {1, 2}, at most `max_atoms` atoms in the ball.
    """
    n = mu.ambient_dim
    if n > 3 or not (1 <= k < n):
        raise OracleTooLargeError(f"oracle supports n <= 3 and 1 <= k < n, got n={n}, k={k}")
    idx = mu.atoms_in(ball)
    if idx.size == 0:
        raise ZeroMassError("no atoms in ball")
    if idx.size > max_atoms:
        raise OracleTooLargeError(f"{idx.size} atoms exceeds oracle budget {max_atoms}")
    w = mu.weights[idx]
    mass = float(np.sum(w))
    if mass <= 0:
        raise ZeroMassError("zero mass in ball")
    com = w @ mu.positions[idx] / mass
    q = mu.positions[idx] - com
    directions = _orientation_grid(n, k, grid_resolution)
    dots = q @ directions.T  # (N_atoms, N_orientations)
    if k == 1:
        # distance^2 to the optimally-offset line with direction u
        d2 = np.sum(w[:, None] * (np.sum(q * q, axis=1)[:, None] - dots**2), axis=0)
    else:
        # k = n - 1: u is the plane normal
        d2 = np.sum(w[:, None] * dots**2, axis=0)
    return ball.radius ** (-k - 2) * float(np.min(d2))
