"""Interface-fitted triangulations.

The mesh has three zones:

* a structured "tube" of quad cells (split into triangles) following the
  curve in tubular coordinates, radially graded away from the interface;
  in layer mode the innermost band resolves the eps-layer with a fixed
  number of radial cells;
* an unstructured Delaunay fill inside the tube's inner ring;
* an unstructured Delaunay fill between the outer ring and the truncation
  box.

Interface nodes sit exactly on the curve.  In limit mode the interface ring
is duplicated into (minus, plus) pairs so transmission conditions can be
imposed by constraining degrees of freedom.
"""

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from matplotlib.path import Path
from scipy.spatial import Delaunay, cKDTree

from .errors import ConfigError, GeometryError
from .geometry import CurveFrame


@dataclass(frozen=True)
class MeshParams:
    """Density knobs for :func:`build_mesh`."""

    s_cells: int = 192
    layer_r_cells: int = 8          # radial elements across the 2*eps layer
    tube_halfwidth_frac: float = 0.5  # tube extent as a fraction of eps_star
    grade_ratio: float = 1.5
    target_h: float = 0.16          # fill-zone element size
    box_halfwidth: float = 4.0

    def refined(self, factor: int = 2) -> "MeshParams":
        return replace(self, s_cells=self.s_cells * factor,
                       layer_r_cells=self.layer_r_cells * factor,
                       target_h=self.target_h / factor)

    def validate(self):
        if self.s_cells < 16:
            raise ConfigError("mesh.s_cells must be at least 16")
        if self.layer_r_cells < 2 or self.layer_r_cells % 2:
            raise ConfigError("mesh.layer_r_cells must be even and >= 2")
        if not 0.05 <= self.tube_halfwidth_frac <= 0.9:
            raise ConfigError("mesh.tube_halfwidth_frac must be in [0.05, 0.9]")
        if self.grade_ratio <= 1.0:
            raise ConfigError("mesh.grade_ratio must exceed 1")
        if self.target_h <= 0 or self.box_halfwidth <= 0:
            raise ConfigError("mesh sizes must be positive")


@dataclass
class InterfaceMesh:
    nodes: np.ndarray            # (N, 2)
    triangles: np.ndarray        # (M, 3) int
    tri_side: np.ndarray         # (M,) -1 inside the curve, +1 outside
    tri_region: np.ndarray       # (M,) codes from REGIONS
    node_s: np.ndarray           # (N,) arc length, NaN outside the tube
    node_r: np.ndarray           # (N,) signed distance, NaN outside the tube
    interface_minus: np.ndarray  # (s_cells,) node ids on the curve, minus side
    interface_plus: np.ndarray   # (s_cells,) node ids, plus side
    box_boundary: np.ndarray     # node ids on the truncation boundary
    frame: CurveFrame
    epsilon: Optional[float]
    params: MeshParams

    REGIONS = {"layer": 0, "tube": 1, "inner_fill": 2, "outer_fill": 3}

    @property
    def num_nodes(self):
        return len(self.nodes)

    @property
    def duplicated(self):
        return self.interface_minus[0] != self.interface_plus[0]

    def interface_ds(self):
        """Arc-length step between interface nodes."""
        return self.frame.length / len(self.interface_minus)

    def structured_rings(self, side):
        """(levels, ring node ids) of the structured tube on one side.

        ``side`` -1/+1 selects r < 0 / r > 0; levels are returned with
        increasing |r| starting at the interface ring (level 0), whose ids
        are the side's interface copy.  Node ids within a ring follow the
        interface s-ordering.
        """
        finite = np.isfinite(self.node_r)
        levels = np.unique(self.node_r[finite])
        levels = levels[levels < 0][::-1] if side < 0 else levels[levels > 0]
        rings = [self.interface_minus if side < 0 else self.interface_plus]
        out_levels = [0.0]
        for lev in levels:
            ids = np.flatnonzero(self.node_r == lev)
            rings.append(ids[np.argsort(self.node_s[ids], kind="stable")])
            out_levels.append(float(lev))
        return np.asarray(out_levels), rings

    def tri_areas(self):
        p = self.nodes[self.triangles]
        return 0.5 * ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
                      - (p[:, 1, 1] - p[:, 0, 1]) * (p[:, 2, 0] - p[:, 0, 0]))

    def export_text(self, stream):
        """Simple text dump: node, element and interface-edge tables."""
        stream.write(f"# nodes {self.num_nodes}\n")
        for i, (x, y) in enumerate(self.nodes):
            stream.write(f"{i} {x:.17g} {y:.17g}\n")
        stream.write(f"# elements {len(self.triangles)}\n")
        for i, (a, b, c) in enumerate(self.triangles):
            stream.write(f"{i} {a} {b} {c} {self.tri_region[i]} "
                         f"{self.tri_side[i]}\n")
        ns = len(self.interface_minus)
        stream.write(f"# interface_edges {ns}\n")
        for j in range(ns):
            jn = (j + 1) % ns
            stream.write(f"{self.interface_minus[j]} {self.interface_minus[jn]} "
                         f"{self.interface_plus[j]} {self.interface_plus[jn]}\n")


def _graded_levels(start, stop, first_step, ratio, max_step):
    """Strictly increasing levels from start to stop with geometric grading."""
    levels = [start]
    step = first_step
    while levels[-1] + 1.45 * step < stop:
        levels.append(levels[-1] + step)
        step = min(step * ratio, max_step)
    levels.append(stop)
    return np.array(levels)


def _radial_levels(eps, params, eps_star, ds):
    r_tube = params.tube_halfwidth_frac * eps_star
    max_step = params.target_h
    if eps is not None:
        inner = np.linspace(-eps, eps, params.layer_r_cells + 1)
        first = 2.0 * eps / params.layer_r_cells
        outer = _graded_levels(eps, r_tube, first * params.grade_ratio,
                               params.grade_ratio, max_step)[1:]
    else:
        first = min(max_step, r_tube / 4.0, 3.0 * ds)
        inner = np.array([0.0])
        outer = _graded_levels(0.0, r_tube, first, params.grade_ratio,
                               max_step)[1:]
    levels = np.concatenate([-outer[::-1], inner, outer])
    return levels, r_tube


def _fill_points(path, spacing, margin_tree, margin, inside=True,
                 bbox=None):
    """Uniform point lattice clipped to a region with a clearance margin."""
    if bbox is None:
        verts = path.vertices
        bbox = (verts[:, 0].min(), verts[:, 0].max(),
                verts[:, 1].min(), verts[:, 1].max())
    x0, x1, y0, y1 = bbox
    xs = np.arange(x0 + 0.5 * spacing, x1, spacing)
    ys = np.arange(y0 + 0.5 * spacing, y1, spacing)
    gx, gy = np.meshgrid(xs, ys)
    # stagger alternate rows for better-shaped triangles
    gx[1::2] += 0.5 * spacing
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    pts = pts[(pts[:, 0] < x1) & (pts[:, 1] < y1)]
    mask = path.contains_points(pts)
    if not inside:
        mask = ~mask
    pts = pts[mask]
    if len(pts):
        dist, _ = margin_tree.query(pts)
        pts = pts[dist >= margin]
    return pts


def _delaunay_zone(ring_ids, ring_pts, fill_pts, keep_inside, path,
                   node_offset):
    """Triangulate ring + fill points; keep triangles on one side of ring.

    Returns (fill node coords, local triangles with global ids).  Ring nodes
    keep their existing global ids; fill nodes start at ``node_offset``.
    """
    cloud = np.vstack([ring_pts, fill_pts])
    global_ids = np.concatenate([
        ring_ids, node_offset + np.arange(len(fill_pts))])
    tri = Delaunay(cloud)
    cent = cloud[tri.simplices].mean(axis=1)
    mask = path.contains_points(cent)
    if not keep_inside:
        mask = ~mask
    kept = tri.simplices[mask]
    # conformity: every consecutive ring edge must appear in the kept set
    edges = set()
    for a, b, c in kept:
        edges.update({frozenset((a, b)), frozenset((b, c)),
                      frozenset((a, c))})
    nring = len(ring_ids)
    for j in range(nring):
        if frozenset((j, (j + 1) % nring)) not in edges:
            raise GeometryError(
                "mesh generation failure: fill zone does not conform to the "
                f"tube ring (edge {j}); decrease target_h or refine the ring")
    return global_ids[kept]


def build_mesh(frame: CurveFrame, params: MeshParams,
               epsilon: Optional[float] = None,
               duplicate_interface: bool = False) -> InterfaceMesh:
    """Mesh the truncation box fitted to the curve.

    ``epsilon`` selects layer mode (mesh resolves the eps-neighborhood with
    ``layer_r_cells`` radial elements); ``None`` selects limit mode.  With
    ``duplicate_interface`` the on-curve ring is doubled into (minus, plus)
    copies for transmission-condition constraints.
    """
    params.validate()
    if epsilon is not None:
        if not 0.0 < epsilon < 0.5 * frame.eps_star:
            raise ConfigError(
                f"epsilon must lie in (0, eps_star/2) = (0, "
                f"{0.5 * frame.eps_star:.6g}); got {epsilon}")
    box = params.box_halfwidth
    if np.max(np.abs(frame.points)) + params.tube_halfwidth_frac \
            * frame.eps_star >= box:
        raise ConfigError("truncation box too small for the curve plus tube")

    ns = params.s_cells
    levels, r_tube = _radial_levels(epsilon, params, frame.eps_star,
                                    frame.length / ns)
    s_grid = np.arange(ns) * (frame.length / ns)
    alpha = frame.point_at(s_grid)           # (ns, 2)
    nu = frame.normal_at(s_grid)

    zero_k = int(np.argmin(np.abs(levels)))
    if abs(levels[zero_k]) > 1e-14:
        raise GeometryError("radial levels must contain r = 0")

    # the mesher assumes the minus side (r < 0) is the bounded component;
    # frames from reparametrize_arclength satisfy this by normalization
    probe = alpha[0] - 0.25 * params.tube_halfwidth_frac * frame.eps_star \
        * nu[0]
    if not Path(alpha).contains_point(probe):
        raise GeometryError(
            "frame normal points into the bounded component; meshing "
            "requires the normalized orientation produced by "
            "reparametrize_arclength")

    rings = []          # list of (ns,) node id arrays per level
    nodes = []
    node_s = []
    node_r = []

    def add_ring(r):
        start = sum(len(b) for b in nodes)
        nodes.append(alpha + r * nu)
        node_s.append(s_grid)
        node_r.append(np.full(ns, r))
        return start + np.arange(ns)

    for r in levels:
        rings.append(add_ring(r))
    if duplicate_interface:
        plus_ring = add_ring(0.0)
        interface_minus = rings[zero_k]
        interface_plus = plus_ring
    else:
        interface_minus = rings[zero_k]
        interface_plus = rings[zero_k]

    triangles = []
    tri_side = []
    tri_region = []
    layer_code = InterfaceMesh.REGIONS["layer"]
    tube_code = InterfaceMesh.REGIONS["tube"]

    for k in range(len(levels) - 1):
        r_mid = 0.5 * (levels[k] + levels[k + 1])
        side = -1 if r_mid < 0 else 1
        lower = rings[k]
        upper = rings[k + 1]
        # cells above the interface use the plus copy as their lower ring;
        # cells below keep the minus copy (the original ring) as their upper
        if duplicate_interface and k == zero_k:
            lower = interface_plus
        if epsilon is not None and abs(r_mid) < epsilon:
            region = layer_code
        else:
            region = tube_code
        for j in range(ns):
            jn = (j + 1) % ns
            a, b = lower[j], lower[jn]
            c, d = upper[jn], upper[j]
            if (j + k) % 2 == 0:
                tris = [(a, b, c), (a, c, d)]
            else:
                tris = [(a, b, d), (b, c, d)]
            for t in tris:
                triangles.append(t)
                tri_side.append(side)
                tri_region.append(region)

    nodes_arr = np.vstack(nodes)
    node_s_arr = np.concatenate(node_s)
    node_r_arr = np.concatenate(node_r)

    # --- inner fill ---------------------------------------------------------
    ring_in_ids = rings[0]
    ring_in_pts = nodes_arr[ring_in_ids]
    ring_ds = np.min(np.linalg.norm(
        np.roll(ring_in_pts, -1, axis=0) - ring_in_pts, axis=1))
    path_in = Path(ring_in_pts)
    tree_in = cKDTree(ring_in_pts)
    margin = 0.55 * min(params.target_h, ring_ds * 2.0)
    inner_pts = _fill_points(path_in, params.target_h, tree_in, margin,
                             inside=True)
    offset = len(nodes_arr)
    inner_tris = _delaunay_zone(ring_in_ids, ring_in_pts, inner_pts,
                                keep_inside=True, path=path_in,
                                node_offset=offset)

    # --- outer fill ---------------------------------------------------------
    ring_out_ids = rings[-1]
    ring_out_pts = nodes_arr[ring_out_ids]
    path_out = Path(ring_out_pts)
    tree_out = cKDTree(ring_out_pts)
    h = params.target_h
    per_side = max(4, int(round(2.0 * box / h)))
    edge = np.linspace(-box, box, per_side + 1)
    box_pts = np.vstack([
        np.column_stack([edge[:-1], np.full(per_side, -box)]),
        np.column_stack([np.full(per_side, box), edge[:-1]]),
        np.column_stack([edge[:0:-1], np.full(per_side, box)]),
        np.column_stack([np.full(per_side, -box), edge[:0:-1]]),
    ])
    grid_pts = _fill_points(path_out, h, tree_out, margin, inside=False,
                            bbox=(-box, box, -box, box))
    # clearance from the box boundary as well
    keep = (np.abs(grid_pts[:, 0]) < box - 0.45 * h) \
        & (np.abs(grid_pts[:, 1]) < box - 0.45 * h)
    grid_pts = grid_pts[keep]
    outer_fill = np.vstack([box_pts, grid_pts])
    offset2 = offset + len(inner_pts)
    outer_tris = _delaunay_zone(ring_out_ids, ring_out_pts, outer_fill,
                                keep_inside=False, path=path_out,
                                node_offset=offset2)

    all_nodes = np.vstack([nodes_arr, inner_pts, outer_fill])
    nan_inner = np.full(len(inner_pts), np.nan)
    nan_outer = np.full(len(outer_fill), np.nan)
    node_s_arr = np.concatenate([node_s_arr, nan_inner, nan_outer])
    node_r_arr = np.concatenate([node_r_arr, nan_inner, nan_outer])

    tri_all = np.vstack([
        np.asarray(triangles, dtype=np.int64),
        inner_tris.astype(np.int64),
        outer_tris.astype(np.int64),
    ])
    side_all = np.concatenate([
        np.asarray(tri_side, dtype=np.int8),
        np.full(len(inner_tris), -1, dtype=np.int8),
        np.full(len(outer_tris), 1, dtype=np.int8),
    ])
    region_all = np.concatenate([
        np.asarray(tri_region, dtype=np.int8),
        np.full(len(inner_tris), InterfaceMesh.REGIONS["inner_fill"],
                dtype=np.int8),
        np.full(len(outer_tris), InterfaceMesh.REGIONS["outer_fill"],
                dtype=np.int8),
    ])

    box_ids = offset2 + np.arange(len(box_pts))

    mesh = InterfaceMesh(
        nodes=all_nodes, triangles=tri_all, tri_side=side_all,
        tri_region=region_all, node_s=node_s_arr, node_r=node_r_arr,
        interface_minus=np.asarray(interface_minus),
        interface_plus=np.asarray(interface_plus),
        box_boundary=box_ids, frame=frame, epsilon=epsilon, params=params)
    _orient_and_check(mesh)
    return mesh


def _orient_and_check(mesh):
    areas = mesh.tri_areas()
    flip = areas < 0
    t = mesh.triangles
    t[flip] = t[flip][:, [0, 2, 1]]
    areas = np.abs(areas)
    if np.min(areas) <= 0.0:
        raise GeometryError("mesh generation failure: degenerate element")
    # every triangle references valid nodes
    if np.max(t) >= mesh.num_nodes:
        raise GeometryError("internal mesh indexing error")
