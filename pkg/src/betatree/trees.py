"""Good and bad tree constructions: multiscale stopping-time ball covers.

One parameterized builder drives both constructions so they cannot drift
apart.  A good tree refines along best k-planes: at each scale a maximal
2r/5 net covers the thin strip around each refining ball's plane, avoiding
all previously stopped regions, and every net ball is classified good, bad,
or stop.  The bad tree is the same skeleton with the roles swapped: it
refines along the (k-1)-planes of its bad balls with a wide strip (5r), and
its leaves are the good balls it meets.

The good tree additionally carries the interpolation-of-projections maps
that push an initial plane patch onto approximating manifolds T_i, realized
here on a simplicial mesh.  mesh vertices move by

    sigma_i(x) = x - sum_g phi_ig(x) P_ig_perp(x - X_ig)

over the scale's good balls, where phi is a partition of unity subordinate
to the 3r balls, P_perp the normal projection of the ball's best plane and
X the ball's center of mass.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .beta import best_plane, dini_profile
from .classify import BallClass, InvariantError, classify_ball
from .config import DESK_CALIBRATION, Calibration, c1_packing, m0_mass
from .geometry import AffinePlane, Ball, plane_distance, projection_matrix, verify_graphical
from .measure import CoveringPair, PointMeasure, ball_mass, center_of_mass

__all__ = [
    "TreeParams",
    "ScaleRecord",
    "Tree",
    "Mesh",
    "build_good_tree",
    "build_bad_tree",
    "partition_of_unity",
    "sigma_map",
    "manifold_limit",
    "good_tree_stats",
    "bad_tree_stats",
    "t_ball_inclusions",
    "hole_control_check",
    "tau_displacement_check",
    "measure_delta",
]


@dataclass(frozen=True)
class TreeParams:
    k: int
    rho: float
    M: float
    delta: float
    eps_bar: float = 0.0
    m: float | None = None            # defaults to m0(n, k, rho) * M
    max_depth: int | None = None      # default: stop below min spacing / 10
    build_mesh: bool = True
    mesh_edge: float | None = None    # default: final scale / 4
    mesh_vertex_cap: int = 2_000_000
    calibration: Calibration = DESK_CALIBRATION

    def mass_floor(self, n: int) -> float:
        return self.m if self.m is not None else m0_mass(n, self.k, self.rho) * self.M


@dataclass
class ScaleRecord:
    index: int
    radius: float
    refine_centers: np.ndarray        # good balls in a good tree, bad in a bad tree
    refine_classes: list
    refine_planes: list               # L_ig at 8r (good) or W_ib witnesses (bad)
    refine_coms: np.ndarray           # X_ig, centers of mass of B_r(g) (good mode)
    other_centers: np.ndarray         # the opposite kind encountered this scale
    other_classes: list
    stop_centers: np.ndarray
    stop_classes: list
    stop_links: list                  # covering C+ index per stop ball, or None
    excess_atoms: np.ndarray          # E_i as atom indices of mu


@dataclass
class Mesh:
    vertices0: np.ndarray
    edges: np.ndarray
    snapshots: list                   # snapshots[i] = vertices of T_i (T_0 first)

    @property
    def final(self) -> np.ndarray:
        return self.snapshots[-1]


@dataclass
class Tree:
    kind: str                         # "good" | "bad"
    root: Ball
    params: TreeParams
    scales: list
    mesh: Mesh | None
    root_plane: AffinePlane | None    # L_0 (good mode)
    c_plus_indices: np.ndarray        # unique covering C+ indices hit by stops
    c_plus_centers: np.ndarray
    c_plus_radii: np.ndarray
    atom_indices: np.ndarray          # atoms of mu inside the root ball

    @property
    def depth(self) -> int:
        return len(self.scales) - 1

    def radius_at(self, i: int) -> float:
        return self.root.radius * self.params.rho**i

    def leaves(self) -> list:
        """(center, radius, BallClass) of the tree leaves: the opposite kind."""
        out = []
        for rec in self.scales:
            for center, cls in zip(rec.other_centers, rec.other_classes):
                out.append((center, rec.radius, cls))
        return out

    def refine_balls(self, i: int):
        rec = self.scales[i]
        return [Ball(c, rec.radius) for c in rec.refine_centers]

    def c_zero_samples(self) -> np.ndarray:
        """Finite-depth stand-in for the infinite intersection: final centers."""
        return self.scales[-1].refine_centers

    def all_family(self):
        """(centers, radii, kinds) over every ball the tree created."""
        centers, radii, kinds = [], [], []
        for rec in self.scales:
            for c in rec.refine_centers:
                centers.append(c)
                radii.append(rec.radius)
                kinds.append(self.kind)
            for c in rec.other_centers:
                centers.append(c)
                radii.append(rec.radius)
                kinds.append("bad" if self.kind == "good" else "good")
            for c in rec.stop_centers:
                centers.append(c)
                radii.append(rec.radius)
                kinds.append("stop")
        if not centers:
            n = self.root.center.size
            return np.zeros((0, n)), np.zeros(0), []
        return np.array(centers), np.array(radii), kinds

    def to_json(self) -> dict:
        scales = []
        for rec in self.scales:
            scales.append(
                {
                    "index": rec.index,
                    "radius": rec.radius,
                    "refine_centers": rec.refine_centers.tolist(),
                    "other_centers": rec.other_centers.tolist(),
                    "stop_centers": rec.stop_centers.tolist(),
                    "excess_atom_count": int(rec.excess_atoms.size),
                }
            )
        return {
            "kind": self.kind,
            "root": {"center": self.root.center.tolist(), "radius": self.root.radius},
            "rho": self.params.rho,
            "M": self.params.M,
            "delta": self.params.delta,
            "scales": scales,
            "c_plus": {
                "centers": self.c_plus_centers.tolist(),
                "radii": self.c_plus_radii.tolist(),
            },
        }


# ------------------------------------------------------------ partition of unity


def _smooth_step(u: np.ndarray) -> np.ndarray:
    """C-infinity monotone ramp: 0 for u <= 0, 1 for u >= 1."""
    u = np.asarray(u, dtype=float)
    with np.errstate(divide="ignore", over="ignore"):
        a = np.where(u > 0, np.exp(-1.0 / np.clip(u, 1e-300, None)), 0.0)
        b = np.where(u < 1, np.exp(-1.0 / np.clip(1.0 - u, 1e-300, None)), 0.0)
    return a / (a + b)


def _bump(t: np.ndarray) -> np.ndarray:
    """Radial profile: 1 on [0, 11/4], 0 on [3, inf), smooth in between."""
    return _smooth_step((3.0 - np.asarray(t, dtype=float)) / 0.25)


def partition_of_unity(centers, r: float, x) -> np.ndarray:
    """Weights phi_g(x) of the bump partition subordinate to {B_3r(g)}.

    Built as phi_g = psi_g / ((1 - max_g psi_g) + sum_g psi_g) with psi the
    radial bump; the denominator is >= 1 everywhere, the weights are in
    [0, 1], vanish outside B_3r(g), and sum to 1 wherever some psi_g = 1
    (in particular on every B_{5r/2}(g)).  Centers must be 2r/5 separated.
    """
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    if centers.shape[0] > 1:
        d2 = np.sum((centers[:, None, :] - centers[None, :, :]) ** 2, axis=-1)
        d2[np.diag_indices_from(d2)] = np.inf
        if np.min(d2) < (2.0 * r / 5.0) ** 2 * (1.0 - 1e-12):
            raise ValueError("partition centers are not 2r/5 separated")
    pts = np.atleast_2d(np.asarray(x, dtype=float))
    dist = np.linalg.norm(pts[:, None, :] - centers[None, :, :], axis=-1)
    psi = _bump(dist / r)
    denom = (1.0 - psi.max(axis=1)) + psi.sum(axis=1)
    phi = psi / denom[:, None]
    return phi if np.asarray(x).ndim > 1 else phi[0]


def _apply_sigma(vertices: np.ndarray, centers: np.ndarray, planes: list,
                 coms: np.ndarray, r: float) -> np.ndarray:
    """Evaluate sigma at the given points: identity outside B_3r(centers)."""
    if centers.shape[0] == 0:
        return vertices.copy()
    tree = cKDTree(centers)
    lists = tree.query_ball_point(vertices, 3.0 * r)
    pairs_v, pairs_c = [], []
    for vi, neighbors in enumerate(lists):
        for cj in neighbors:
            pairs_v.append(vi)
            pairs_c.append(cj)
    out = vertices.copy()
    if not pairs_v:
        return out
    pairs_v = np.asarray(pairs_v)
    pairs_c = np.asarray(pairs_c)
    dist = np.linalg.norm(vertices[pairs_v] - centers[pairs_c], axis=1)
    psi = _bump(dist / r)
    sum_psi = np.zeros(vertices.shape[0])
    max_psi = np.zeros(vertices.shape[0])
    np.add.at(sum_psi, pairs_v, psi)
    np.maximum.at(max_psi, pairs_v, psi)
    denom = (1.0 - max_psi) + sum_psi
    phi = psi / denom[pairs_v]
    shift = np.zeros_like(vertices)
    for cj in np.unique(pairs_c):
        mask = pairs_c == cj
        vids = pairs_v[mask]
        rel = vertices[vids] - coms[cj]
        perp = rel - rel @ projection_matrix(planes[cj])
        np.add.at(shift, vids, phi[mask, None] * perp)
    return out - shift


def sigma_map(tree: Tree, i: int, x) -> np.ndarray:
    """The scale-i interpolation-of-projections map of a built good tree."""
    if tree.kind != "good":
        raise ValueError("sigma maps exist only for good trees")
    if not (1 <= i <= tree.depth):
        raise ValueError(f"scale {i} outside 1..{tree.depth}")
    rec = tree.scales[i]
    pts = np.atleast_2d(np.asarray(x, dtype=float))
    moved = _apply_sigma(pts, rec.refine_centers, rec.refine_planes,
                         rec.refine_coms, rec.radius)
    return moved if np.asarray(x).ndim > 1 else moved[0]


# ------------------------------------------------------------------- mesh


def _build_mesh(plane: AffinePlane, center: np.ndarray, extent: float,
                edge: float, cap: int) -> Mesh:
    """Regular simplicial grid on the plane patch within `extent` of center."""
    k = plane.k
    if k == 0:
        raise ValueError("cannot mesh a 0-plane")
    per_axis = int(np.ceil(2.0 * extent / edge)) + 1
    if per_axis**k > cap:
        raise ValueError(
            f"mesh would need {per_axis ** k} vertices (cap {cap}); "
            "coarsen mesh_edge or reduce depth"
        )
    axis = np.linspace(-extent, extent, per_axis)
    foot = plane.base + (center - plane.base) @ projection_matrix(plane)
    if k == 1:
        coords = axis.reshape(-1, 1)
        vertices = foot + coords @ plane.frame
        edges = np.column_stack([np.arange(per_axis - 1), np.arange(1, per_axis)])
        return Mesh(vertices, edges, [vertices])
    uu, vv = np.meshgrid(axis, axis, indexing="ij")
    coords = np.column_stack([uu.ravel(), vv.ravel()])
    vertices = foot + coords @ plane.frame
    def vid(i, j):
        return i * per_axis + j
    edge_list = []
    for i in range(per_axis):
        for j in range(per_axis):
            if i + 1 < per_axis:
                edge_list.append((vid(i, j), vid(i + 1, j)))
            if j + 1 < per_axis:
                edge_list.append((vid(i, j), vid(i, j + 1)))
            if i + 1 < per_axis and j + 1 < per_axis:
                edge_list.append((vid(i, j), vid(i + 1, j + 1)))
    return Mesh(vertices, np.array(edge_list), [vertices])


def manifold_limit(tree: Tree):
    """Final manifold vertices with the measured max edge distortion.

    Distortion is the worst secant stretch over mesh edges between T_0 and
    the final T_i, in either direction; the frozen bound is
    exp(c2 * delta^2 / M).
    """
    if tree.mesh is None:
        raise ValueError("tree was built without a mesh")
    mesh = tree.mesh
    base_len = np.linalg.norm(
        mesh.vertices0[mesh.edges[:, 0]] - mesh.vertices0[mesh.edges[:, 1]], axis=1
    )
    final_len = np.linalg.norm(
        mesh.final[mesh.edges[:, 0]] - mesh.final[mesh.edges[:, 1]], axis=1
    )
    ratio = final_len / base_len
    distortion = float(max(np.max(ratio), np.max(1.0 / ratio)))
    cal = tree.params.calibration
    bound = float(np.exp(cal.c2 * tree.params.delta**2 / tree.params.M))
    return mesh.final, distortion, bound


# ------------------------------------------------------------------ builder


def _check_covering_hypothesis(covering: CoveringPair | None, root: Ball):
    if covering is None or not np.any(covering.plus_mask):
        return
    centers = covering.plus_centers
    radii = covering.plus_radii
    dist = np.linalg.norm(centers - root.center, axis=1)
    meets = dist < radii + 2.0 * root.radius
    if np.any(radii[meets] > root.radius * (1.0 + 1e-12)):
        raise ValueError(
            "covering pair violates the root hypothesis: an original ball "
            "meeting B_2(root) has radius above the root radius"
        )


def _refine_plane(mu, center, radius, params, mode, cls):
    if mode == "good":
        plane, _ = best_plane(mu, Ball(center, 8.0 * radius), params.k)
        com = center_of_mass(mu, Ball(center, radius))
        return plane, com
    # bad mode: the witness (k-1)-plane from classification, never recomputed
    return cls.bad_plane, center


def _excess_indices(mu, atom_idx, center, radius, plane, params, mode):
    """Atom indices of the scale's excess set for one refining ball."""
    next_r = params.rho * radius
    margin = next_r / 50.0 if mode == "good" else 2.0 * next_r
    pts = mu.positions[atom_idx]
    inside = np.sum((pts - center) ** 2, axis=1) < radius * radius
    far = plane_distance(pts, plane) >= margin
    return atom_idx[inside & far]


def _plane_lattice(plane: AffinePlane, center, radius: float, step: float) -> np.ndarray:
    """Lattice on a plane patch: points of the plane within `radius` of center."""
    if plane.k == 0:
        pt = plane.base.reshape(1, -1)
        return pt if float(np.linalg.norm(plane.base - center)) < radius else pt[:0]
    half = int(np.floor(radius / step)) + 1
    axis = step * np.arange(-half, half + 1)
    grid = np.stack(
        np.meshgrid(*([axis] * plane.k), indexing="ij"), axis=-1
    ).reshape(-1, plane.k)
    foot = plane.base + (np.asarray(center) - plane.base) @ projection_matrix(plane)
    pts = foot + grid @ plane.frame
    return pts[np.linalg.norm(pts - center, axis=1) < radius]


def _strip_candidates(mu, atom_idx, rec, next_r, params, mode, blocked,
                      root: Ball, stopped_c: np.ndarray, stopped_r: np.ndarray):
    """Net candidates: strip atoms, then a lattice on each refining plane.

    The lattice makes the net maximal over the strip region itself, not just
    over the atoms, which is what the manifold/ball inclusions need; empty
    regions then terminate in low-mass stop balls exactly as in the source
    construction.  Everything is filtered to the root ball and away from the
    previously stopped regions, atoms first (index order) then lattice points.
    """
    width = next_r / 40.0 if mode == "good" else 5.0 * next_r
    pts = mu.positions[atom_idx]
    eligible = np.zeros(atom_idx.size, dtype=bool)
    lattice_parts = []
    sep = 2.0 * next_r / 5.0
    for center, plane in zip(rec.refine_centers, rec.refine_planes):
        inside = np.sum((pts - center) ** 2, axis=1) < rec.radius**2
        if np.any(inside):
            near = plane_distance(pts[inside], plane) < width
            eligible[np.nonzero(inside)[0][near]] = True
        lattice_parts.append(_plane_lattice(plane, center, rec.radius, sep / 2.0))
    eligible &= ~blocked[atom_idx]
    atom_pts = pts[eligible]
    out = [atom_pts]
    if lattice_parts:
        lat = np.vstack(lattice_parts)
        if lat.size:
            keep = np.linalg.norm(lat - root.center, axis=1) < root.radius
            lat = lat[keep]
            if stopped_c.shape[0] and lat.size:
                d = np.linalg.norm(lat[:, None, :] - stopped_c[None, :, :], axis=-1)
                lat = lat[~np.any(d < stopped_r[None, :], axis=1)]
            out.append(lat)
    return np.vstack(out) if out else atom_pts


def _greedy_net(points: np.ndarray, separation: float) -> np.ndarray:
    """Greedy maximal net in index order; returns indices into `points`."""
    chosen: list[int] = []
    sep2 = separation * separation
    kept = np.zeros((0, points.shape[1])) if points.size else points
    for i, p in enumerate(points):
        if chosen:
            if np.min(np.sum((kept - p) ** 2, axis=1)) < sep2:
                continue
        chosen.append(i)
        kept = points[chosen]
    return np.asarray(chosen, dtype=int)


def _build_tree(mu: PointMeasure, root: Ball, covering: CoveringPair | None,
                params: TreeParams, mode: str,
                root_class: BallClass | None = None,
                verify: bool = True) -> Tree:
    n = mu.ambient_dim
    k = params.k
    rho = params.rho
    m = params.mass_floor(n)
    _check_covering_hypothesis(covering, root)

    if root_class is None:
        root_class = classify_ball(mu, root, covering, k, rho, m, params.M)
    if root_class.kind != mode:
        raise ValueError(f"{mode} tree requires a {mode} root, got {root_class.kind}")

    atom_idx = mu.atoms_in(root)
    blocked = np.zeros(mu.n_atoms, dtype=bool)  # atoms inside prior stopped regions
    stopped_c = np.zeros((0, n))                # stopped regions, for lattice filtering
    stopped_r = np.zeros(0)

    root_plane, root_com = _refine_plane(mu, root.center, root.radius, params, mode, root_class)
    rec0 = ScaleRecord(
        index=0,
        radius=root.radius,
        refine_centers=root.center.reshape(1, -1),
        refine_classes=[root_class],
        refine_planes=[root_plane],
        refine_coms=np.asarray(root_com).reshape(1, -1),
        other_centers=np.zeros((0, n)),
        other_classes=[],
        stop_centers=np.zeros((0, n)),
        stop_classes=[],
        stop_links=[],
        excess_atoms=_excess_indices(mu, atom_idx, root.center, root.radius,
                                     root_plane, params, mode),
    )
    scales = [rec0]

    # below the interatomic spacing every ball sees at most one atom and the
    # dichotomy degenerates to a spurious dimension drop, so refinement stops
    # at the spacing itself (single-atom measures fall back to the depth cap)
    spacing = mu.min_spacing()
    floor = 0.0 if np.isinf(spacing) else spacing
    max_depth = params.max_depth if params.max_depth is not None else 64

    for i in range(1, max_depth + 1):
        r_i = root.radius * rho**i
        if r_i < floor:
            break
        prev = scales[-1]
        if prev.refine_centers.shape[0] == 0:
            break
        cand_pts = _strip_candidates(mu, atom_idx, prev, r_i, params, mode, blocked,
                                     root, stopped_c, stopped_r)
        net_local = _greedy_net(cand_pts, 2.0 * r_i / 5.0)
        refine_c, refine_cls, refine_pl, refine_com = [], [], [], []
        other_c, other_cls = [], []
        stop_c, stop_cls, stop_links = [], [], []
        for j in net_local:
            z = cand_pts[j]
            ball = Ball(z, r_i)
            cls = classify_ball(mu, ball, covering, k, rho, m, params.M)
            if cls.kind == "stop":
                stop_c.append(z)
                stop_cls.append(cls)
                link = cls.stop_reason.original_index
                stop_links.append(link)
                blocked[mu.atoms_in(ball)] = True
                stopped_c = np.vstack([stopped_c, z.reshape(1, -1)])
                stopped_r = np.append(stopped_r, r_i)
            elif cls.kind == mode:
                plane, com = _refine_plane(mu, z, r_i, params, mode, cls)
                refine_c.append(z)
                refine_cls.append(cls)
                refine_pl.append(plane)
                refine_com.append(com)
            else:
                other_c.append(z)
                other_cls.append(cls)
                blocked[mu.atoms_in(ball)] = True
                stopped_c = np.vstack([stopped_c, z.reshape(1, -1)])
                stopped_r = np.append(stopped_r, r_i)
        refine_centers = np.array(refine_c) if refine_c else np.zeros((0, n))
        excess = (
            np.concatenate(
                [
                    _excess_indices(mu, atom_idx, c, r_i, p, params, mode)
                    for c, p in zip(refine_c, refine_pl)
                ]
            )
            if refine_c
            else np.zeros(0, dtype=int)
        )
        rec = ScaleRecord(
            index=i,
            radius=r_i,
            refine_centers=refine_centers,
            refine_classes=refine_cls,
            refine_planes=refine_pl,
            refine_coms=np.array(refine_com) if refine_com else np.zeros((0, n)),
            other_centers=np.array(other_c) if other_c else np.zeros((0, n)),
            other_classes=other_cls,
            stop_centers=np.array(stop_c) if stop_c else np.zeros((0, n)),
            stop_classes=stop_cls,
            stop_links=stop_links,
            excess_atoms=np.unique(excess) if excess.size else excess,
        )
        scales.append(rec)
        if rec.refine_centers.shape[0] == 0:
            break

    # resolved big-mass stop balls point at original covering balls
    links = [l for rec in scales for l in rec.stop_links if l is not None]
    c_plus_idx = np.unique(np.asarray(links, dtype=int)) if links else np.zeros(0, dtype=int)
    if covering is not None and c_plus_idx.size:
        c_plus_centers = covering.centers[c_plus_idx]
        c_plus_radii = covering.radii[c_plus_idx]
    else:
        c_plus_centers = np.zeros((0, n))
        c_plus_radii = np.zeros(0)

    mesh = None
    if mode == "good" and params.build_mesh:
        final_r = scales[-1].radius
        edge = params.mesh_edge if params.mesh_edge is not None else final_r / 4.0
        mesh = _build_mesh(root_plane, root.center, 3.0 * root.radius, edge,
                           params.mesh_vertex_cap)
        for rec in scales[1:]:
            moved = _apply_sigma(mesh.snapshots[-1], rec.refine_centers,
                                 rec.refine_planes, rec.refine_coms, rec.radius)
            mesh.snapshots.append(moved)

    tree = Tree(mode, root, params, scales, mesh, root_plane if mode == "good" else None,
                c_plus_idx, c_plus_centers, c_plus_radii, atom_idx)
    if verify:
        _verify_tree(mu, tree, covering)
    return tree


def build_good_tree(mu: PointMeasure, root: Ball, covering: CoveringPair | None,
                    params: TreeParams, root_class: BallClass | None = None,
                    verify: bool = True) -> Tree:
    """Good tree rooted at `root`; raises if the root does not classify good."""
    if params.delta > params.calibration.delta1 * np.sqrt(params.M):
        raise ValueError(
            f"delta {params.delta} exceeds the admissible ceiling "
            f"delta1*sqrt(M) = {params.calibration.delta1 * np.sqrt(params.M)}"
        )
    return _build_tree(mu, root, covering, params, "good", root_class, verify)


def build_bad_tree(mu: PointMeasure, root: Ball, covering: CoveringPair | None,
                   params: TreeParams, root_class: BallClass | None = None,
                   verify: bool = True, c1: float | None = None) -> Tree:
    """Bad tree rooted at `root`; requires c1 * rho <= 1/2 for its packing."""
    c1 = c1 if c1 is not None else params.calibration.c1_desk
    if c1 * params.rho > 0.5:
        raise ValueError(f"need c1 * rho <= 1/2, got {c1 * params.rho}")
    return _build_tree(mu, root, covering, params, "bad", root_class, verify)


# ------------------------------------------------------------- verification


def _pairwise_disjoint_fifth(centers: np.ndarray, radii: np.ndarray) -> bool:
    if centers.shape[0] < 2:
        return True
    d = np.linalg.norm(centers[:, None, :] - centers[None, :, :], axis=-1)
    need = (radii[:, None] + radii[None, :]) / 5.0
    np.fill_diagonal(d, np.inf)
    np.fill_diagonal(need, 0.0)
    return bool(np.all(d >= need * (1.0 - 1e-12)))


def _verify_tree(mu: PointMeasure, tree: Tree, covering: CoveringPair | None):
    """Construction invariants, checked exhaustively at desk scale."""
    params = tree.params
    n = mu.ambient_dim
    root_idx = tree.atom_indices
    pts = mu.positions[root_idx]

    # Vitali disjointness: refining balls at scale i together with all prior
    # other/stop balls have pairwise disjoint fifth-radius shrinks
    prior_c = np.zeros((0, n))
    prior_r = np.zeros(0)
    for rec in tree.scales:
        centers = np.vstack([rec.refine_centers, prior_c])
        radii = np.concatenate([np.full(rec.refine_centers.shape[0], rec.radius), prior_r])
        if centers.shape[0] and not _pairwise_disjoint_fifth(centers, radii):
            raise InvariantError(f"Vitali disjointness fails at scale {rec.index}")
        newly = np.vstack([rec.other_centers, rec.stop_centers])
        prior_c = np.vstack([prior_c, newly])
        prior_r = np.concatenate([prior_r, np.full(newly.shape[0], rec.radius)])

    # radius control: original balls meeting B_2r(refine u other) are not larger
    if covering is not None and np.any(covering.plus_mask):
        oc = covering.plus_centers
        orad = covering.plus_radii
        for rec in tree.scales:
            for center in np.vstack([rec.refine_centers, rec.other_centers]):
                dist = np.linalg.norm(oc - center, axis=1)
                meets = dist < orad + 2.0 * rec.radius
                if np.any(orad[meets] > rec.radius * (1.0 + 1e-12)):
                    raise InvariantError(f"radius control fails at scale {rec.index}")

    # covering control: every root atom is in a refining ball, a stopped
    # region, or an earlier excess set, at every scale
    if pts.size:
        stopped = np.zeros(root_idx.size, dtype=bool)
        excess_seen = np.zeros(root_idx.size, dtype=bool)
        pos_of = {int(a): i for i, a in enumerate(root_idx)}
        for rec in tree.scales:
            current = np.zeros(root_idx.size, dtype=bool)
            for center in rec.refine_centers:
                current |= np.sum((pts - center) ** 2, axis=1) < rec.radius**2
            for center in np.vstack([rec.other_centers, rec.stop_centers]):
                stopped |= np.sum((pts - center) ** 2, axis=1) < rec.radius**2
            if not np.all(current | stopped | excess_seen):
                raise InvariantError(f"covering control fails at scale {rec.index}")
            for a in rec.excess_atoms:
                i = pos_of.get(int(a))
                if i is not None:
                    excess_seen[i] = True

    # stop balls with big mass sit inside 4x their original ball
    for rec in tree.scales:
        for center, link in zip(rec.stop_centers, rec.stop_links):
            if link is None:
                continue
            y = covering.centers[link]
            r_y = covering.radii[link]
            if np.linalg.norm(center - y) + rec.radius > 4.0 * r_y * (1.0 + 1e-9):
                raise InvariantError("stop ball not contained in 4x original ball")

    # graphicality on good balls of a meshed good tree
    if tree.kind == "good" and tree.mesh is not None:
        bound = params.calibration.Lambda * params.delta / np.sqrt(params.M)
        for rec in tree.scales:
            verts = tree.mesh.snapshots[rec.index]
            for center, plane in zip(rec.refine_centers, rec.refine_planes):
                window = Ball(center, 2.0 * rec.radius)
                inside = verts[window.contains(verts)]
                if inside.shape[0] == 0:
                    raise InvariantError(f"manifold misses good ball at scale {rec.index}")
                if inside.shape[0] > 4000:  # sampled check above this size
                    inside = inside[:: inside.shape[0] // 2000]
                est = verify_graphical(inside, plane, window)
                if est is None:
                    raise InvariantError(
                        f"manifold is not graphical over a good ball at scale {rec.index}"
                    )
                if est.c1_norm > bound + 1e-12:
                    raise InvariantError(
                        f"graph norm {est.c1_norm} exceeds Lambda*delta/sqrt(M) = {bound}"
                    )


# ------------------------------------------------------------------ reports


def _packing_entry(claimed: float, measured: float) -> dict:
    return {"claimed_bound": claimed, "measured": measured, "pass": bool(measured <= claimed)}


def good_tree_stats(mu: PointMeasure, tree: Tree, covering: CoveringPair | None) -> dict:
    """Packing, excess, residual measure, and manifold bounds with pass/fail.

    Bound constants come from the frozen calibration table; every entry is
    calibration-relative, not a certified dimensional constant.
    """
    params = tree.params
    k = params.k
    cal = params.calibration
    r0 = tree.root.radius
    norm = r0**k  # packing is reported relative to the root scale

    packing = []
    prior = 0.0
    for rec in tree.scales:
        goods = rec.refine_centers.shape[0] * rec.radius**k
        prior += (rec.other_centers.shape[0] + rec.stop_centers.shape[0]) * rec.radius**k
        packing.append(_packing_entry(50.0**k, (goods + prior) / norm))

    excess_mass = sum(float(np.sum(mu.weights[rec.excess_atoms])) for rec in tree.scales)
    excess_bound = (
        cal.c_excess
        * np.exp(2.0 * cal.c3 * params.delta**2 / params.M)
        * params.delta**2
        * norm
    )

    # measure outside (final-scale good balls) u (bad balls at all scales)
    # u (4x enlarged originals hit by stop balls at larger radii)
    final = tree.scales[-1]
    keep = np.zeros(tree.atom_indices.size, dtype=bool)
    pts = mu.positions[tree.atom_indices]
    for center in final.refine_centers:
        keep |= np.sum((pts - center) ** 2, axis=1) < final.radius**2
    for rec in tree.scales:
        for center in rec.other_centers:
            keep |= np.sum((pts - center) ** 2, axis=1) < rec.radius**2
    for y, r_y in zip(tree.c_plus_centers, tree.c_plus_radii):
        if r_y >= final.radius:
            keep |= np.sum((pts - y) ** 2, axis=1) < (4.0 * r_y) ** 2
    residual = float(np.sum(mu.weights[tree.atom_indices][~keep]))
    residual_bound = (cal.c_meas_m * params.M + cal.c_meas_d * params.delta**2) * norm

    out = {
        "packing_per_scale": packing,
        "excess": _packing_entry(float(excess_bound), excess_mass),
        "residual": _packing_entry(float(residual_bound), residual),
        "c_plus_packing": _packing_entry(
            cal.c_key * norm, float(np.sum(tree.c_plus_radii**k))
        ),
        "calibration": cal.name,
    }
    if tree.mesh is not None:
        _, distortion, bound = manifold_limit(tree)
        out["distortion"] = _packing_entry(bound, distortion)
    return out


def bad_tree_stats(mu: PointMeasure, tree: Tree, covering: CoveringPair | None,
                   c1: float | None = None) -> dict:
    """Leaf packing, per-scale contraction, residual mass, and lower-mass checks.

    Bounds default to the explicitly computed net-cardinality constant
    c1_packing(n, k); pass a calibrated c1 to tighten them.
    """
    params = tree.params
    k = params.k
    cal = params.calibration
    c1 = c1 if c1 is not None else c1_packing(mu.ambient_dim, k)
    rho = params.rho
    r0 = tree.root.radius
    norm = r0**k

    per_scale = []
    cumulative = 0.0
    for rec in tree.scales[1:]:
        total = (
            rec.refine_centers.shape[0]
            + rec.other_centers.shape[0]
            + rec.stop_centers.shape[0]
        ) * rec.radius**k / norm
        cumulative += total
        per_scale.append(_packing_entry((c1 * rho) ** rec.index, total))
    leaf_packing = sum(
        rec.other_centers.shape[0] * rec.radius**k / norm for rec in tree.scales
    )

    final = tree.scales[-1]
    pts = mu.positions[tree.atom_indices]
    keep = np.zeros(tree.atom_indices.size, dtype=bool)
    if pts.size:
        for center in final.refine_centers:
            keep |= np.sum((pts - center) ** 2, axis=1) < final.radius**2
        for rec in tree.scales:
            for center in rec.other_centers:
                keep |= np.sum((pts - center) ** 2, axis=1) < rec.radius**2
        for y, r_y in zip(tree.c_plus_centers, tree.c_plus_radii):
            if r_y >= final.radius:
                keep |= np.sum((pts - y) ** 2, axis=1) < (4.0 * r_y) ** 2
    residual = float(np.sum(mu.weights[tree.atom_indices][~keep]))

    # excess per bad ball is at most M r^k (packing-control with m = m0 M)
    excess_ok = True
    for rec in tree.scales:
        for cls in rec.refine_classes:
            if cls.residual_mass is not None and cls.residual_mass > params.M * rec.radius**k:
                excess_ok = False

    # lower mass: tree balls carry at least M r^k / c_lower at larger scales
    lower_ok = True
    worst = 0.0
    centers, radii, kinds = tree.all_family()
    for center, r_b, kind in zip(centers, radii, kinds):
        if kind == "stop":
            continue
        r = 4.0 * r_b
        while r <= r0:
            mass = ball_mass(mu, Ball(center, r))
            needed = params.M * r**k / cal.c_lower
            worst = max(worst, needed / mass if mass > 0 else np.inf)
            if mass < needed:
                lower_ok = False
            r *= 2.0
    return {
        "c1": c1,
        "per_scale_packing": per_scale,
        "cumulative_packing": _packing_entry(2.0 * c1 * rho, cumulative),
        "leaf_packing": _packing_entry(2.0 * c1 * rho, leaf_packing),
        "residual": _packing_entry(3.0 * params.M * norm, residual),
        "excess_per_ball_ok": excess_ok,
        "lower_mass_ok": lower_ok,
        "calibration": cal.name,
    }


def t_ball_inclusions(tree: Tree) -> list:
    """Per-scale check of B_r(G_i) within B_2r(T_i cap B_1) within B_4r(G_i) u R_i.

    The left inclusion is verified through d(g, T_i cap B_1) <= r_i for every
    good center; the right one on mesh vertices inside the root ball.
    """
    if tree.mesh is None:
        raise ValueError("tree was built without a mesh")
    results = []
    stopped_c: list = []
    stopped_r: list = []
    root = tree.root
    for rec in tree.scales:
        verts = tree.mesh.snapshots[rec.index]
        in_root = verts[np.linalg.norm(verts - root.center, axis=1) < root.radius]
        left = True
        for g in rec.refine_centers:
            if in_root.shape[0] == 0:
                left = False
                break
            if float(np.min(np.linalg.norm(in_root - g, axis=1))) > rec.radius:
                left = False
                break
        right = True
        if in_root.shape[0] and rec.refine_centers.shape[0]:
            d_good = np.min(
                np.linalg.norm(in_root[:, None, :] - rec.refine_centers[None, :, :], axis=-1),
                axis=1,
            )
            ok = d_good < 4.0 * rec.radius
            for c, r in zip(stopped_c, stopped_r):
                ok |= np.linalg.norm(in_root - c, axis=1) < r
            right = bool(np.all(ok))
        results.append({"scale": rec.index, "left": left, "right": right})
        for c in np.vstack([rec.other_centers, rec.stop_centers]):
            stopped_c.append(c)
            stopped_r.append(rec.radius)
    return results


def hole_control_check(tree: Tree) -> bool:
    """T_i equals T_{i-1} inside 4r/5 shrinks of earlier bad/stop balls."""
    if tree.mesh is None:
        raise ValueError("tree was built without a mesh")
    regions: list = []
    for rec in tree.scales:
        if rec.index >= 1:
            before = tree.mesh.snapshots[rec.index - 1]
            after = tree.mesh.snapshots[rec.index]
            for c, r in regions:
                inside = np.linalg.norm(before - c, axis=1) < 0.8 * r
                if np.any(np.linalg.norm(after[inside] - before[inside], axis=1) > 1e-12):
                    return False
        for c in np.vstack([rec.other_centers, rec.stop_centers]):
            regions.append((c, rec.radius))
    return True


def tau_displacement_check(tree: Tree) -> list:
    """C0 convergence: |tau_{i,j}(x) - x| <= c2 delta r_j / sqrt(M) on vertices."""
    if tree.mesh is None:
        raise ValueError("tree was built without a mesh")
    cal = tree.params.calibration
    coeff = cal.c2 * tree.params.delta / np.sqrt(tree.params.M)
    out = []
    final = tree.mesh.final
    for j in range(1, len(tree.mesh.snapshots)):
        start = tree.mesh.snapshots[j - 1]
        moved = float(np.max(np.linalg.norm(final - start, axis=1)))
        bound = coeff * tree.radius_at(j)
        out.append({"scale": j, "measured": moved, "claimed_bound": bound,
                    "pass": bool(moved <= bound + 1e-15)})
    return out


def measure_delta(mu: PointMeasure, covering: CoveringPair | None, k: int,
                  eps_bar: float, root: Ball, max_atoms: int = 4000) -> float:
    """sqrt of the worst per-atom dyadic beta sum over r_y < 2^a <= 16 r_root.

    Samples every atom up to `max_atoms`, then a deterministic stride.  This
    is the delta entering the tree hypothesis; chaining rechecks its own.
    """
    idx = mu.atoms_in(Ball(root.center, 2.0 * root.radius))
    if idx.size == 0:
        return 0.0
    stride = max(1, idx.size // max_atoms)
    sample = idx[::stride]
    alpha_hi = int(np.floor(np.log2(16.0 * root.radius)))
    alpha_lo = int(np.ceil(np.log2(max(mu.min_spacing() / 4.0, 1e-12))))
    alpha_lo = min(alpha_lo, alpha_hi)
    alphas = list(range(alpha_lo, alpha_hi + 1))
    table = dini_profile(mu, mu.positions[sample], k, eps_bar, alphas)
    if covering is not None and np.any(covering.plus_mask):
        radii = covering.radius_at(mu.positions[sample])
        for j, a in enumerate(alphas):
            table[:, j] = np.where(2.0**a <= radii, 0.0, table[:, j])
    return float(np.sqrt(np.max(np.sum(table, axis=1))))
