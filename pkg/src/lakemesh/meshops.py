"""Mesh repair, georeferencing, merging and voxel gap closing."""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import spsolve
from scipy.spatial import cKDTree

from . import geodesy
from .errors import FrameError, ParameterError, ResolutionError
from .marching import marching_cubes
from .mesh import LOCAL, WGS84, Frame, TriMesh, edge_keys
from .pointcloud import Polygon2D, boundary_distance

log = logging.getLogger(__name__)

DEFAULT_ALPHA = 4.0
MAX_VOXELS = 200_000_000


@dataclass
class RepairReport:
    faces_removed_long_edge: int = 0
    components_removed: int = 0
    vertices_clipped: int = 0
    faces_removed_footprint: int = 0
    faces_removed_clip: int = 0

    def __add__(self, other: "RepairReport") -> "RepairReport":
        return RepairReport(
            *(getattr(self, k) + getattr(other, k) for k in self.__dataclass_fields__)
        )

    def as_dict(self) -> dict[str, int]:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass(frozen=True)
class OffsetRecord:
    offset_e: float
    offset_n: float
    offset_z: float

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.offset_e, self.offset_n, self.offset_z)):
            raise ParameterError("offsets must be finite")

    @property
    def vector(self) -> np.ndarray:
        return np.array([self.offset_e, self.offset_n, self.offset_z])


@dataclass(eq=False)
class VoxelGrid:
    """Boolean occupancy; voxel ``(i, j, k)`` is centred at ``origin + (ijk + 0.5) * spacing``."""

    origin: np.ndarray
    spacing: float
    occupancy: np.ndarray
    frame: Frame = LOCAL

    def __post_init__(self):
        self.origin = np.asarray(self.origin, dtype=np.float64)
        self.occupancy = np.asarray(self.occupancy, dtype=bool)
        if not self.spacing > 0:
            raise ParameterError("voxel spacing must be positive")

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.occupancy.shape

    @property
    def count(self) -> int:
        return int(self.occupancy.sum())

    def centres(self, axis: int) -> np.ndarray:
        return self.origin[axis] + self.spacing * (np.arange(self.dims[axis]) + 0.5)

    def touches_boundary(self) -> bool:
        o = self.occupancy
        return bool(o[0].any() or o[-1].any() or o[:, 0].any() or o[:, -1].any() or o[:, :, 0].any() or o[:, :, -1].any())

    def padded(self, n: int) -> "VoxelGrid":
        return VoxelGrid(self.origin - n * self.spacing, self.spacing, np.pad(self.occupancy, n), self.frame)


# --------------------------------------------------------------------------
# topology


@dataclass
class WatertightReport:
    closed: bool
    boundary_edges: int
    non_manifold_edges: int
    misoriented_edges: int = 0


def _undirected_edges(faces: np.ndarray):
    a, b = edge_keys(faces)
    lo, hi = np.minimum(a, b), np.maximum(a, b)
    forward = a < b
    return lo, hi, forward


def watertight_check(mesh: TriMesh) -> WatertightReport:
    """Closed iff every edge has exactly two faces that traverse it in opposite directions."""
    if mesh.n_faces == 0:
        return WatertightReport(False, 0, 0, 0)
    lo, hi, fwd = _undirected_edges(mesh.faces)
    key = lo * mesh.n_vertices + hi
    uniq, inv, counts = np.unique(key, return_inverse=True, return_counts=True)
    n_fwd = np.bincount(inv, weights=fwd.astype(float), minlength=len(uniq))
    boundary = int(np.sum(counts == 1))
    non_manifold = int(np.sum(counts > 2))
    misoriented = int(np.sum((counts == 2) & (n_fwd != 1)))
    closed = boundary == 0 and non_manifold == 0 and misoriented == 0
    return WatertightReport(closed, boundary, non_manifold, misoriented)


def face_components(mesh: TriMesh) -> tuple[int, np.ndarray]:
    """Connected components of faces linked through shared edges."""
    m = mesh.n_faces
    if m == 0:
        return 0, np.zeros(0, dtype=np.int64)
    lo, hi, _ = _undirected_edges(mesh.faces)
    key = lo * mesh.n_vertices + hi
    face_of = np.repeat(np.arange(m), 3)
    order = np.argsort(key, kind="stable")
    ks, fs = key[order], face_of[order]
    same = ks[1:] == ks[:-1]
    rows, cols = fs[:-1][same], fs[1:][same]
    g = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(m, m))
    return connected_components(g, directed=False)


def boundary_vertex_mask(mesh: TriMesh) -> np.ndarray:
    lo, hi, _ = _undirected_edges(mesh.faces)
    key = lo * mesh.n_vertices + hi
    uniq, counts = np.unique(key, return_counts=True)
    b = uniq[counts == 1]
    mask = np.zeros(mesh.n_vertices, dtype=bool)
    mask[b // mesh.n_vertices] = True
    mask[b % mesh.n_vertices] = True
    return mask


# --------------------------------------------------------------------------
# repair


def _keep_faces(mesh: TriMesh, keep: np.ndarray) -> TriMesh:
    return TriMesh(mesh.vertices, mesh.faces[keep], mesh.frame).compact()


def remove_long_edge_faces(mesh: TriMesh, alpha: float = DEFAULT_ALPHA) -> tuple[TriMesh, RepairReport]:
    """Drop faces with any edge longer than ``alpha`` x the median edge length."""
    if not alpha > 1:
        raise ParameterError("alpha must exceed 1")
    if mesh.n_faces == 0:
        return mesh, RepairReport()
    t = mesh.triangles()
    lengths = np.linalg.norm(t - np.roll(t, -1, axis=1), axis=2)
    limit = alpha * float(np.median(lengths))
    keep = ~(lengths > limit).any(axis=1)
    out = _keep_faces(mesh, keep)
    return out, RepairReport(faces_removed_long_edge=int((~keep).sum()))


def trim_to_footprint(mesh: TriMesh, footprint: Polygon2D, margin: float = 0.0) -> tuple[TriMesh, RepairReport]:
    """Drop faces with any vertex farther than ``margin`` outside ``footprint`` (in plan)."""
    if mesh.n_faces == 0:
        return mesh, RepairReport()
    inside = footprint.contains(mesh.vertices[:, :2])
    if margin > 0 and not inside.all():
        out = ~inside
        inside[out] = boundary_distance(footprint, mesh.vertices[out, :2]) <= margin
    keep = inside[mesh.faces].all(axis=1)
    return _keep_faces(mesh, keep), RepairReport(faces_removed_footprint=int((~keep).sum()))


def largest_component(mesh: TriMesh) -> tuple[TriMesh, RepairReport]:
    """Keep the edge-connected component of largest area.

    Ties go to the component holding the lowest vertex index.
    """
    if mesh.n_faces == 0:
        return mesh, RepairReport()
    n, labels = face_components(mesh)
    if n == 1:
        return mesh, RepairReport()
    area = np.bincount(labels, weights=mesh.face_areas(), minlength=n)
    low_vertex = np.full(n, np.iinfo(np.int64).max)
    np.minimum.at(low_vertex, labels, mesh.faces.min(axis=1))
    best = sorted(range(n), key=lambda c: (-area[c], low_vertex[c]))[0]
    return _keep_faces(mesh, labels == best), RepairReport(components_removed=n - 1)


def clip_below_plane(mesh: TriMesh, z_cut: float) -> tuple[TriMesh, RepairReport]:
    """Remove faces lying entirely below ``z_cut``; straddling faces stay whole."""
    if mesh.n_faces == 0:
        return mesh, RepairReport()
    below = mesh.vertices[:, 2] < z_cut
    drop = below[mesh.faces].all(axis=1)
    out = _keep_faces(mesh, ~drop)
    return out, RepairReport(faces_removed_clip=int(drop.sum()), vertices_clipped=mesh.n_vertices - out.n_vertices)


def repair(
    mesh: TriMesh,
    alpha: float = DEFAULT_ALPHA,
    *,
    clip_below: float | None = None,
    footprint: Polygon2D | None = None,
    footprint_margin: float = 0.0,
    keep_largest: bool = True,
) -> tuple[TriMesh, RepairReport]:
    """The standard repair chain: long edges, optional clip and footprint trim, largest component."""
    mesh, report = remove_long_edge_faces(mesh, alpha)
    if clip_below is not None:
        mesh, r = clip_below_plane(mesh, clip_below)
        report += r
    if footprint is not None:
        mesh, r = trim_to_footprint(mesh, footprint, footprint_margin)
        report += r
    if keep_largest:
        mesh, r = largest_component(mesh)
        report += r
    return mesh, report


# --------------------------------------------------------------------------
# georeferencing


def georeference(mesh: TriMesh, offset: OffsetRecord, zone: int, hemisphere: str) -> TriMesh:
    if mesh.frame.kind != "local":
        raise FrameError(f"mesh is already georeferenced ({mesh.frame}); refusing to apply offsets twice")
    return TriMesh(mesh.vertices + offset.vector, mesh.faces.copy(), Frame.utm(zone, hemisphere))


def export_wgs84(mesh: TriMesh) -> TriMesh:
    """Per-vertex UTM -> (lon, lat, z); for GIS export only."""
    if not mesh.frame.is_utm:
        raise FrameError(f"WGS84 export needs a UTM mesh, got {mesh.frame}")
    v = mesh.vertices
    lat, lon = geodesy.unproject(v[:, 0], v[:, 1], mesh.frame.zone, mesh.frame.hemisphere)
    return TriMesh(np.column_stack([lon, lat, v[:, 2]]), mesh.faces.copy(), WGS84)


def import_wgs84(mesh: TriMesh, zone: int, hemisphere: str) -> TriMesh:
    if mesh.frame.kind != "wgs84":
        raise FrameError(f"expected a WGS84 mesh, got {mesh.frame}")
    v = mesh.vertices
    e, n = geodesy.project(v[:, 1], v[:, 0], zone, hemisphere)
    return TriMesh(np.column_stack([e, n, v[:, 2]]), mesh.faces.copy(), Frame.utm(zone, hemisphere))


# --------------------------------------------------------------------------
# merge


def merge(meshes: list[TriMesh], weld_tolerance: float = 0.0) -> TriMesh:
    """Concatenate meshes sharing one frame and weld vertices closer than ``weld_tolerance``.

    A welded cluster takes the position of its lowest-index vertex.  Faces
    that collapse under welding are dropped; no face is ever created.
    """
    if not meshes:
        raise ParameterError("nothing to merge")
    frames = {str(m.frame) for m in meshes}
    if len(frames) > 1:
        listing = ", ".join(f"#{i}:{m.frame}" for i, m in enumerate(meshes))
        raise FrameError(f"meshes are in different frames: {listing}")
    if weld_tolerance < 0:
        raise ParameterError("weld tolerance must be >= 0")
    verts = np.concatenate([m.vertices for m in meshes]) if meshes else np.zeros((0, 3))
    offsets = np.cumsum([0] + [m.n_vertices for m in meshes[:-1]])
    faces = np.concatenate([m.faces + o for m, o in zip(meshes, offsets)])
    frame = meshes[0].frame
    if weld_tolerance == 0 or len(verts) < 2:
        return TriMesh(verts, faces, frame)
    ref = verts.min(axis=0)
    pairs = cKDTree(verts - ref).query_pairs(weld_tolerance, output_type="ndarray")
    if len(pairs) == 0:
        return TriMesh(verts, faces, frame)
    g = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(len(verts),) * 2)
    _, labels = connected_components(g, directed=False)
    _, first = np.unique(labels, return_index=True)
    first.sort()
    rank = np.empty(labels.max() + 1, dtype=np.int64)
    rank[labels[first]] = np.arange(len(first))
    remap = rank[labels]
    faces = remap[faces]
    ok = (faces[:, 0] != faces[:, 1]) & (faces[:, 1] != faces[:, 2]) & (faces[:, 0] != faces[:, 2])
    if not ok.all():
        log.info("merge dropped %d faces collapsed by welding", int((~ok).sum()))
    return TriMesh(verts[first], faces[ok], frame)


# --------------------------------------------------------------------------
# voxels


def _tri_box_overlap(tri: np.ndarray, centre: np.ndarray, half: float, eps: float) -> np.ndarray:
    """Separating-axis triangle/box test (closed boxes: touching counts).

    ``tri`` (n, 3, 3) and ``centre`` (n, 3) are paired row by row.
    """
    v = tri - centre[:, None, :]
    h = half + eps
    ok = np.ones(len(v), dtype=bool)
    # box face normals
    for k in range(3):
        ok &= (v[:, :, k].min(axis=1) <= h) & (v[:, :, k].max(axis=1) >= -h)
    e = [v[:, 1] - v[:, 0], v[:, 2] - v[:, 1], v[:, 0] - v[:, 2]]
    # triangle normal
    n = np.cross(e[0], e[1])
    d = np.einsum("ij,ij->i", n, v[:, 0])
    r = h * np.abs(n).sum(axis=1)
    ok &= np.abs(d) <= r
    # 9 cross-product axes
    unit = np.eye(3)
    for ei in e:
        for k in range(3):
            axis = np.cross(np.broadcast_to(unit[k], ei.shape), ei)
            p = np.einsum("nij,nj->ni", v, axis)
            r = h * np.abs(axis).sum(axis=1)
            ok &= (p.min(axis=1) <= r) & (p.max(axis=1) >= -r)
    return ok


def aligned_grid(lo: np.ndarray, hi: np.ndarray, spacing: float, pad: int = 1):
    """Grid origin snapped to multiples of ``spacing``, with ``pad`` empty voxel
    layers around every voxel a surface in [lo, hi] can touch.

    Touching is closed, so a bound lying on a voxel plane reaches the voxel
    beyond it as well.
    """
    eps = 1e-9 * spacing
    first = np.floor((lo - eps) / spacing).astype(np.int64)
    last = np.floor((hi + eps) / spacing).astype(np.int64)
    origin = (first - pad) * spacing
    dims = last - first + 1 + 2 * pad
    return origin.astype(np.float64), dims


def voxelize(mesh: TriMesh, spacing: float, pad: int = 1, chunk: int = 2_000_000) -> VoxelGrid:
    """Conservative surface voxelization: a voxel is set iff some face touches it."""
    if not spacing > 0:
        raise ParameterError("voxel spacing must be positive")
    if mesh.n_faces == 0:
        raise ParameterError("cannot voxelize an empty mesh")
    lo, hi = mesh.bounds()
    origin, dims = aligned_grid(lo, hi, spacing, pad)
    if np.prod(dims.astype(float)) > MAX_VOXELS:
        raise ResolutionError(f"voxel grid {tuple(dims)} exceeds the {MAX_VOXELS} voxel budget")
    occ = np.zeros(tuple(dims), dtype=bool)
    tri = mesh.triangles() - origin
    eps = 1e-9 * spacing
    tmin = np.floor((tri.min(axis=1) - eps) / spacing).astype(np.int64)
    tmax = np.floor((tri.max(axis=1) + eps) / spacing).astype(np.int64)
    tmin = np.clip(tmin, 0, dims - 1)
    tmax = np.clip(tmax, 0, dims - 1)
    ext = tmax - tmin + 1
    n_cand = np.prod(ext, axis=1)
    start = 0
    while start < len(tri):
        stop = start + 1
        total = n_cand[start]
        while stop < len(tri) and total + n_cand[stop] <= chunk:
            total += n_cand[stop]
            stop += 1
        sl = slice(start, stop)
        owner = np.repeat(np.arange(start, stop), n_cand[sl])
        local = np.arange(len(owner)) - np.repeat(np.cumsum(n_cand[sl]) - n_cand[sl], n_cand[sl])
        ex = ext[owner]
        i = tmin[owner, 0] + local // (ex[:, 1] * ex[:, 2])
        j = tmin[owner, 1] + (local // ex[:, 2]) % ex[:, 1]
        k = tmin[owner, 2] + local % ex[:, 2]
        centre = (np.stack([i, j, k], axis=1) + 0.5) * spacing
        hit = _tri_box_overlap(tri[owner], centre, spacing / 2, eps)
        occ[i[hit], j[hit], k[hit]] = True
        start = stop
    return VoxelGrid(origin, spacing, occ, mesh.frame)


def close_gaps(grid: VoxelGrid, radius: int) -> VoxelGrid:
    """Morphological closing with the 6-connected (L1) ball of ``radius`` voxels."""
    if radius < 1:
        raise ParameterError("closing radius must be >= 1")
    structure = ndimage.generate_binary_structure(3, 1)
    # room for the dilation so the erosion sees no artificial border
    occ = np.pad(grid.occupancy, radius + 1)
    dil = ndimage.binary_dilation(occ, structure, iterations=radius)
    closed = ndimage.binary_erosion(dil, structure, iterations=radius, border_value=0)
    r = radius + 1
    closed = closed[r:-r, r:-r, r:-r] | grid.occupancy
    return VoxelGrid(grid.origin.copy(), grid.spacing, closed, grid.frame)


def wrap_surface(grid: VoxelGrid) -> TriMesh:
    """Marching cubes on occupancy (iso 0.5) with outward-facing triangles."""
    if not grid.occupancy.any():
        raise ParameterError("no occupied voxels to wrap")
    if grid.touches_boundary():
        warnings.warn("occupancy touches the grid boundary; the wrapped surface may be open", stacklevel=2)
    # nodes at voxel centres; empty = 1 so normals face away from the solid
    field = 1.0 - grid.occupancy.astype(np.float64)
    return marching_cubes(field, 0.5, grid.origin + grid.spacing / 2, grid.spacing, grid.frame)


def close_mesh(mesh: TriMesh, spacing: float, radius: int) -> TriMesh:
    """voxelize -> close_gaps -> wrap_surface."""
    grid = voxelize(mesh, spacing, pad=radius + 2)
    return wrap_surface(close_gaps(grid, radius))


# --------------------------------------------------------------------------
# basin solid


def terrain_heights(terrain: TriMesh, grid: VoxelGrid) -> np.ndarray:
    """Height of the highest terrain face above each voxel column centre (NaN: no face)."""
    from .volume import column_crossings

    s = grid.spacing
    cx = column_crossings(terrain, s)
    h = np.full(grid.dims[:2], np.nan)
    if len(cx.z) == 0:
        return h
    # both lattices put column centres at odd multiples of s / 2
    di = int(round((cx.x0 - grid.centres(0)[0]) / s))
    dj = int(round((cx.y0 - grid.centres(1)[0]) / s))
    top = np.full(cx.shape[0] * cx.shape[1], -np.inf)
    np.maximum.at(top, cx.col, cx.z)
    top = top.reshape(cx.shape)
    ci, cj = np.nonzero(np.isfinite(top))
    gi, gj = ci + di, cj + dj
    ok = (gi >= 0) & (gi < grid.dims[0]) & (gj >= 0) & (gj < grid.dims[1])
    h[gi[ok], gj[ok]] = top[ci[ok], cj[ok]]
    return h


def solidify_columns(grid: VoxelGrid) -> VoxelGrid:
    """Ground solid: every voxel at or below the highest occupied voxel of its column.

    Thin surfaces separated by a standoff gap become blocks facing each other
    across a slot, which closing can bridge; two coplanar sheets never close.
    """
    occ = grid.occupancy
    top = np.where(occ.any(axis=2), occ.shape[2] - 1 - np.argmax(occ[:, :, ::-1], axis=2), -1)
    k = np.arange(occ.shape[2])
    return VoxelGrid(grid.origin.copy(), grid.spacing, k[None, None, :] <= top[:, :, None], grid.frame)


def _harmonic_fill(h: np.ndarray, region: np.ndarray) -> np.ndarray:
    """Fill NaNs of ``h`` inside ``region`` with the discrete harmonic interpolant
    of the known values (4-neighbour Laplacian, zero flux at the region edge).

    Unknown patches with no known neighbour stay NaN.
    """
    unknown = region & np.isnan(h)
    n = int(unknown.sum())
    if n == 0:
        return h
    idx = np.full(h.shape, -1, dtype=np.int64)
    idx[unknown] = np.arange(n)
    ui, uj = np.nonzero(unknown)
    diag = np.zeros(n)
    rhs = np.zeros(n)
    anchored = np.zeros(n, dtype=bool)
    rows, cols = [], []
    for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
        ni, nj = ui + di, uj + dj
        ok = (ni >= 0) & (ni < h.shape[0]) & (nj >= 0) & (nj < h.shape[1])
        me, ni, nj = np.flatnonzero(ok), ni[ok], nj[ok]
        inr = region[ni, nj]
        me, ni, nj = me[inr], ni[inr], nj[inr]
        diag[me] += 1.0
        known = ~np.isnan(h[ni, nj])
        np.add.at(rhs, me[known], h[ni[known], nj[known]])
        anchored[me[known]] = True
        rows.append(me[~known])
        cols.append(idx[ni[~known], nj[~known]])
    r, c = np.concatenate(rows), np.concatenate(cols)
    adj = coo_matrix((np.ones(len(r)), (r, c)), shape=(n, n))
    _, comp = connected_components(adj, directed=False)
    good = np.zeros(comp.max() + 1, dtype=bool)
    good[comp[anchored]] = True
    solve = good[comp]
    sel = np.flatnonzero(solve)
    out = h.copy()
    if len(sel) == 0:
        return out
    remap = np.full(n, -1, dtype=np.int64)
    remap[sel] = np.arange(len(sel))
    keep = solve[r]
    a = coo_matrix(
        (
            np.concatenate([diag[sel], -np.ones(int(keep.sum()))]),
            (np.concatenate([remap[sel], remap[r[keep]]]), np.concatenate([remap[sel], remap[c[keep]]])),
        ),
        shape=(len(sel), len(sel)),
    ).tocsc()
    out[ui[sel], uj[sel]] = spsolve(a, rhs[sel])
    return out


@dataclass
class Basin:
    """Soft occupancy of the water body: 1 inside, 0 outside, linear ramps of
    width ``2 * spacing`` centred on the terrain and the lid."""

    field: np.ndarray
    origin: np.ndarray  # position of node (0, 0, 0)
    spacing: float
    heights: np.ndarray
    footprint: np.ndarray
    lid: float
    frame: Frame
    gap_columns: int


def fill_basin(terrain: TriMesh, closed: VoxelGrid, lid: float | None = None) -> Basin:
    """The region above the terrain and below ``lid`` over the closed footprint.

    Column heights come from the terrain faces where they exist; columns the
    closing bridged (no face above them) get a harmonic membrane stretched
    between their neighbours, or the top of the closed voxels if isolated.
    """
    s = closed.spacing
    lid = float(terrain.vertices[:, 2].max()) if lid is None else float(lid)
    h = terrain_heights(terrain, closed)
    occ = closed.occupancy
    footprint = occ.any(axis=2)
    h = np.where(footprint, h, np.nan)
    gap = footprint & np.isnan(h)
    h = _harmonic_fill(h, footprint)
    rest = footprint & np.isnan(h)
    if rest.any():
        zc = closed.centres(2)
        top = zc[occ.shape[2] - 1 - np.argmax(occ[:, :, ::-1], axis=2)] + s / 2
        h = np.where(rest, top, h)
    zc = closed.centres(2)
    ramp = 2.0 * s
    below_lid = np.clip((lid - zc) / ramp + 0.5, 0.0, 1.0)
    above = np.clip((zc[None, None, :] - h[:, :, None]) / ramp + 0.5, 0.0, 1.0)
    field = np.where(np.isnan(h)[:, :, None], 0.0, np.minimum(above, below_lid[None, None, :]))
    pad = 1
    field = np.pad(field, pad)
    origin = closed.origin + s / 2 - pad * s
    return Basin(field, origin, s, h, footprint, lid, closed.frame, int(gap.sum()))


def wrap_basin(basin: Basin) -> TriMesh:
    """Outward-facing surface of the basin solid (marching cubes at 0.5)."""
    if not np.any(basin.field > 0.5):
        raise ParameterError("basin is empty: the lid lies below the terrain everywhere")
    return marching_cubes(1.0 - basin.field, 0.5, basin.origin, basin.spacing, basin.frame)


def close_basin(
    mesh: TriMesh, spacing: float, radius: int, lid: float | None = None
) -> tuple[TriMesh, VoxelGrid, Basin]:
    """voxelize -> solidify -> close_gaps -> basin fill -> wrap: the closed water-body solid."""
    grid = close_gaps(solidify_columns(voxelize(mesh, spacing, pad=radius + 2)), radius)
    basin = fill_basin(mesh, grid, lid)
    return wrap_basin(basin), grid, basin


# --------------------------------------------------------------------------
# debug dump


def dump_voxels(grid: VoxelGrid, path) -> None:
    """Text header (one ``key value`` per line, ends with ``end_header``) + packed bits, C order."""
    nx, ny, nz = grid.dims
    head = (
        f"lakemesh-voxels 1\ndims {nx} {ny} {nz}\n"
        f"origin {float(grid.origin[0])!r} {float(grid.origin[1])!r} {float(grid.origin[2])!r}\n"
        f"spacing {float(grid.spacing)!r}\nframe {grid.frame}\nend_header\n"
    )
    Path(path).write_bytes(head.encode("ascii") + np.packbits(grid.occupancy.ravel()).tobytes())


def load_voxels(path) -> VoxelGrid:
    data = Path(path).read_bytes()
    end = data.index(b"end_header\n") + len(b"end_header\n")
    hdr = {}
    for line in data[:end].decode("ascii").splitlines()[1:-1]:
        k, v = line.split(" ", 1)
        hdr[k] = v
    dims = tuple(int(t) for t in hdr["dims"].split())
    bits = np.unpackbits(np.frombuffer(data, np.uint8, offset=end))[: int(np.prod(dims))]
    origin = [float(t) for t in hdr["origin"].split()]
    return VoxelGrid(origin, float(hdr["spacing"]), bits.reshape(dims).astype(bool), Frame.parse(hdr["frame"]))
