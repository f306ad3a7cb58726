"""Good/bad/stop ball classification with constructive witnesses.

A ball B_r(x) is a stop ball when its mass is at most M r^k, or when it has
hit an original covering ball (some y in C+ with x inside B_{r_y + 2r}(y) and
r < r_y <= r/rho).  Otherwise the constructive dichotomy runs: greedily build
k+1 sub-balls of radius rho*r whose masses exceed m (rho r)^k and whose
centers of mass stay 2*rho*r clear of the span of the previous centers of
mass, which forces the centers of mass into rho*r-general position.  If the
construction completes, the ball is good and the witness is returned; if it
stalls at step i, every remaining atom-centered candidate ball is light, and
the ball is bad with W = span of the centers of mass found so far, padded to
dimension k-1 with free coordinate directions.

The candidate scan runs over atoms in index order and picks the first match;
any order is admissible, this one makes runs reproducible.  Scale bookkeeping
is uniform: all thresholds use rho*r where r is the ball under test, so the
classification commutes with rescaling.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import DESK_CALIBRATION, Calibration, m0_mass
from .geometry import AffinePlane, Ball, affine_span, general_position, plane_distance, slice_hausdorff
from .measure import CoveringPair, PointMeasure, ball_mass, center_of_mass
from .beta import best_plane

__all__ = [
    "BallClass",
    "GoodWitness",
    "StopReason",
    "TiltingReport",
    "InvariantError",
    "classify_ball",
    "bad_ball_net",
    "tilting_check",
]


class InvariantError(AssertionError):
    """A construction-time invariant failed; indicates a real bug or bad input."""


@dataclass(frozen=True)
class StopReason:
    kind: str                      # "low_mass" | "hits_original"
    original_index: int | None = None


@dataclass(frozen=True)
class GoodWitness:
    points: np.ndarray             # (k+1, n) chosen sub-ball centers
    masses: np.ndarray             # mass of each B_{rho r}(point)
    coms: np.ndarray               # (k+1, n) centers of mass


@dataclass(frozen=True)
class BallClass:
    kind: str                      # "good" | "bad" | "stop"
    rho: float
    m: float
    M: float
    witness: GoodWitness | None = None
    bad_plane: AffinePlane | None = None
    residual_mass: float | None = None   # bad only: mu(B_r \ B_{2 rho r}(W))
    stop_reason: StopReason | None = None

    def to_json(self) -> dict:
        out = {"kind": self.kind, "rho": self.rho, "m": self.m, "M": self.M}
        if self.witness is not None:
            out["witness"] = {
                "points": self.witness.points.tolist(),
                "masses": self.witness.masses.tolist(),
                "coms": self.witness.coms.tolist(),
            }
        if self.bad_plane is not None:
            out["bad_plane"] = self.bad_plane.to_json()
            out["residual_mass"] = self.residual_mass
        if self.stop_reason is not None:
            out["stop_reason"] = {
                "kind": self.stop_reason.kind,
                "original_index": self.stop_reason.original_index,
            }
        return out


def _stop_check(ball: Ball, covering: CoveringPair | None, rho: float,
                mass: float, M: float, k: int) -> StopReason | None:
    if mass <= M * ball.radius**k:
        return StopReason("low_mass")
    if covering is None:
        return None
    plus = covering.plus_mask
    if not np.any(plus):
        return None
    centers = covering.centers[plus]
    radii = covering.radii[plus]
    r = ball.radius
    dist = np.linalg.norm(centers - ball.center, axis=1)
    hits = (dist < radii + 2.0 * r) & (r < radii) & (radii <= r / rho)
    idx = np.nonzero(hits)[0]
    if idx.size:
        return StopReason("hits_original", int(np.nonzero(plus)[0][idx[0]]))
    return None


def _pad_to_dimension(base: np.ndarray, dirs: list, target_k: int) -> AffinePlane:
    """Extend a span with the lowest-index coordinate axes orthogonal to it."""
    n = base.size
    dirs = [np.asarray(d, dtype=float) for d in dirs]
    axis = 0
    while len(dirs) < target_k and axis < n:
        v = np.zeros(n)
        v[axis] = 1.0
        w = v.copy()
        for u in dirs:
            w = w - np.dot(w, u) * u
        norm = np.linalg.norm(w)
        if norm > 1e-8:
            dirs.append(w / norm)
        axis += 1
    if len(dirs) != target_k:
        raise InvariantError("could not pad bad plane to dimension k-1")
    frame = np.array(dirs) if dirs else np.zeros((0, n))
    return AffinePlane(base, frame)


def classify_ball(mu: PointMeasure, ball: Ball, covering: CoveringPair | None,
                  k: int, rho: float, m: float, M: float) -> BallClass:
    """Stop/good/bad classification of one ball; total for valid parameters."""
    if not (0.0 < rho <= 0.05):
        raise ValueError(f"rho must lie in (0, 1/20], got {rho}")
    if m <= 0 or M <= 0:
        raise ValueError("m and M must be positive")
    r = ball.radius
    idx = mu.atoms_in(ball)
    mass = float(np.sum(mu.weights[idx]))
    stop = _stop_check(ball, covering, rho, mass, M, k)
    if stop is not None:
        return BallClass("stop", rho, m, M, stop_reason=stop)

    sub_r = rho * r
    threshold = m * sub_r**k
    clearance = 2.0 * sub_r
    candidates = mu.positions[idx]
    picked_pts, picked_coms, picked_masses = [], [], []
    for step in range(k + 1):
        span = affine_span(np.array(picked_coms)) if picked_coms else None
        found = False
        for local, p in enumerate(candidates):
            if span is not None and plane_distance(p, span) < clearance:
                continue
            sub = Ball(p, sub_r)
            sub_mass = ball_mass(mu, sub)
            if sub_mass > threshold:
                picked_pts.append(p)
                picked_masses.append(sub_mass)
                picked_coms.append(center_of_mass(mu, sub))
                found = True
                break
        if not found:
            base = picked_coms[0] if picked_coms else ball.center.copy()
            span_dirs = []
            if len(picked_coms) > 1:
                span_plane = affine_span(np.array(picked_coms))
                span_dirs = list(span_plane.frame)
            W = _pad_to_dimension(np.asarray(base, dtype=float), span_dirs, k - 1)
            strip_dist = plane_distance(mu.positions[idx], W)
            residual = float(np.sum(mu.weights[idx][strip_dist >= clearance]))
            bound = 2.0**mu.ambient_dim * rho ** (k - mu.ambient_dim) * m * r**k
            if residual > bound * (1.0 + 1e-9):
                raise InvariantError(
                    f"bad-ball residual {residual} exceeds dichotomy bound {bound}"
                )
            return BallClass("bad", rho, m, M, bad_plane=W, residual_mass=residual)

    witness = GoodWitness(
        np.array(picked_pts), np.array(picked_masses), np.array(picked_coms)
    )
    if not np.all(witness.masses >= threshold):
        raise InvariantError("good witness lost its mass bound")
    if not general_position(witness.coms, sub_r):
        raise InvariantError("good witness centers of mass not in general position")
    return BallClass("good", rho, m, M, witness=witness)


def bad_ball_net(W: AffinePlane, ball: Ball, rho: float,
                 mu: PointMeasure | None = None,
                 lattice_step: float | None = None) -> np.ndarray:
    """Greedy maximal 2*rho*r/5 net of the strip B_{5 rho r}(W) inside the ball.

    Candidates are the measure's atoms in the strip followed by a lattice on
    W itself, in deterministic order, so the net covers both the mass and the
    plane.  Cardinality times rho^k stays below c1(n) * rho by the volume
    argument; callers verify against their constants table.
    """
    r = ball.radius
    strip_r = 5.0 * rho * r
    sep = 2.0 * rho * r / 5.0
    candidates = []
    if mu is not None and mu.n_atoms:
        idx = mu.atoms_in(ball)
        pts = mu.positions[idx]
        close = plane_distance(pts, W) < strip_r
        candidates.append(pts[close])
    step = lattice_step if lattice_step is not None else sep / 2.0
    if W.k == 0:
        inside = float(np.linalg.norm(W.base - ball.center)) < r
        lattice = W.base.reshape(1, -1) if inside else np.zeros((0, ball.center.size))
    else:
        half = int(np.floor(r / step)) + 1
        axis = step * np.arange(-half, half + 1)
        grid = np.stack(
            np.meshgrid(*([axis] * W.k), indexing="ij"), axis=-1
        ).reshape(-1, W.k)
        lattice = W.base + grid @ W.frame
        lattice = lattice[np.linalg.norm(lattice - ball.center, axis=1) < r]
    candidates.append(lattice)
    pool = np.vstack([c for c in candidates if c.size]) if candidates else lattice
    if pool.size == 0:
        return np.zeros((0, ball.center.size))
    net: list[np.ndarray] = []
    sep2 = sep * sep
    for p in pool:
        if all(np.sum((p - q) ** 2) >= sep2 for q in net):
            net.append(p)
    return np.array(net)


@dataclass(frozen=True)
class TiltingReport:
    measured: float
    bound: float
    beta_inner: float
    beta_outer: float
    ok: bool


def tilting_check(mu: PointMeasure, good_inner: tuple, outer: Ball, k: int,
                  m: float, eps_bar: float,
                  calibration: Calibration = DESK_CALIBRATION) -> TiltingReport:
    """Good-ball tilting: compare slice Hausdorff distance to its beta bound.

    With s = outer.radius / 8 playing the unit, the inner good ball B_{rho s}
    must have its center within 7s of the outer center, both balls must pass
    the eps_bar mass thresholds, and then

        d_H(V(x, 8 rho s) cap B, V(y, 8 s) cap B)^2
            <= (c_tilt / m) (beta(x, 8 rho s)^2 + beta(y, 8 s)^2)

    over B = B_{8 rho s}(x), with the frozen calibration constant.
    """
    inner_ball, inner_class = good_inner
    if inner_class.kind != "good":
        raise ValueError("tilting_check requires a good inner ball")
    s = outer.radius / 8.0
    if float(np.linalg.norm(inner_ball.center - outer.center)) > 7.0 * s:
        raise ValueError("inner center must lie within 7/8 of the outer radius")
    inner_scale = 8.0 * inner_ball.radius   # 8 * rho * s
    big = Ball(outer.center, 8.0 * s)
    small = Ball(inner_ball.center, inner_scale)
    if ball_mass(mu, big) <= eps_bar * big.radius**k:
        raise ValueError("outer ball fails the eps_bar mass threshold")
    if ball_mass(mu, small) <= eps_bar * small.radius**k:
        raise ValueError("inner ball fails the eps_bar mass threshold")
    plane_small, beta_small = best_plane(mu, small, k)
    plane_big, beta_big = best_plane(mu, big, k)
    window = Ball(inner_ball.center, inner_scale)
    measured = slice_hausdorff(plane_small, plane_big, window)
    bound_sq = (calibration.c_tilt / m) * (beta_small + beta_big)
    bound = float(np.sqrt(bound_sq)) * window.radius
    return TiltingReport(measured, bound, beta_small, beta_big, measured <= bound)
