"""Depth samples -> oriented point cloud in UTM metres, plus survey-footprint
geometry (convex hull, centroid) and the gridded depth map."""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from . import geodesy
from .errors import (
    DegenerateGeometryError,
    FrameError,
    InputError,
    ParameterError,
    PreconditionError,
    ResolutionError,
)
from .ingest import DepthSample, read_ply, write_ply
from .mesh import LOCAL, Frame

NODATA = -9999.0
DEDUPE_TOLERANCE = 1e-6


@dataclass(eq=False)
class PointCloud:
    points: np.ndarray
    normals: np.ndarray | None = None
    frame: Frame = field(default=LOCAL)

    def __post_init__(self):
        self.points = np.ascontiguousarray(self.points, dtype=np.float64).reshape(-1, 3)
        if self.normals is not None:
            self.normals = np.ascontiguousarray(self.normals, dtype=np.float64).reshape(-1, 3)
            if self.normals.shape != self.points.shape:
                raise InputError("normals must parallel points")

    def __len__(self) -> int:
        return len(self.points)

    def translated(self, offset) -> "PointCloud":
        n = None if self.normals is None else self.normals.copy()
        return PointCloud(self.points + np.asarray(offset, dtype=float), n, self.frame)


@dataclass(eq=False)
class ScalarField:
    """Regular grid of samples; node ``i`` sits at ``origin + i * spacing``.

    2D fields use NaN for no-data cells.
    """

    origin: np.ndarray
    spacing: float
    values: np.ndarray

    def __post_init__(self):
        self.origin = np.asarray(self.origin, dtype=np.float64)
        self.values = np.asarray(self.values, dtype=np.float64)
        if not self.spacing > 0:
            raise ParameterError("grid spacing must be positive")
        if self.values.ndim != len(self.origin):
            raise InputError("origin dimensionality does not match values")
        if any(d < 2 for d in self.values.shape):
            raise InputError(f"grid dims must be >= 2 per axis, got {self.values.shape}")

    @property
    def dims(self) -> tuple[int, ...]:
        return self.values.shape

    def axis(self, k: int) -> np.ndarray:
        return self.origin[k] + self.spacing * np.arange(self.values.shape[k])

    def sample(self, pts: np.ndarray) -> np.ndarray:
        """Multilinear interpolation at ``pts`` (n, ndim); raises if any point is outside."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        u = (pts - self.origin) / self.spacing
        hi = np.asarray(self.values.shape) - 1
        if np.any(u < -1e-9) or np.any(u > hi + 1e-9):
            raise PreconditionError("sample point outside the grid")
        u = np.clip(u, 0, hi)
        i0 = np.minimum(np.floor(u).astype(np.int64), hi - 1)
        t = u - i0
        out = np.zeros(len(pts))
        ndim = pts.shape[1]
        for corner in range(1 << ndim):
            w = np.ones(len(pts))
            idx = []
            for k in range(ndim):
                bit = (corner >> k) & 1
                w = w * (t[:, k] if bit else 1 - t[:, k])
                idx.append(i0[:, k] + bit)
            out += w * self.values[tuple(idx)]
        return out


@dataclass(frozen=True)
class Polygon2D:
    vertices: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 2)
        object.__setattr__(self, "vertices", v)
        if len(v) < 3:
            raise DegenerateGeometryError("polygon needs at least 3 vertices")
        if signed_area(v) <= 0:
            raise DegenerateGeometryError("polygon must be counter-clockwise with positive area")
        if not _is_simple(v):
            raise DegenerateGeometryError("polygon is self-intersecting")

    @property
    def area(self) -> float:
        return signed_area(self.vertices)

    def edges(self):
        v = self.vertices
        return v, np.roll(v, -1, axis=0)

    def contains(self, pts, margin: float = 0.0) -> np.ndarray:
        """True for points inside the polygon or within ``margin`` of its boundary."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        a, b = self.edges()
        x, y = pts[:, 0:1], pts[:, 1:2]
        cond = (a[:, 1] > y) != (b[:, 1] > y)
        with np.errstate(divide="ignore", invalid="ignore"):
            xc = a[:, 0] + (y - a[:, 1]) * (b[:, 0] - a[:, 0]) / (b[:, 1] - a[:, 1])
        inside = (np.sum(cond & (x < xc), axis=1) % 2) == 1
        # the crossing rule is half-open; points on (or near) the boundary count as inside
        out = np.flatnonzero(~inside)
        if len(out):
            inside[out] = boundary_distance(self, pts[out]) <= margin
        return inside


def signed_area(v: np.ndarray) -> float:
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _cross2(o, a, b):
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def _segments_cross(p1, p2, q1, q2) -> bool:
    d1, d2 = _cross2(q1, q2, p1), _cross2(q1, q2, p2)
    d3, d4 = _cross2(p1, p2, q1), _cross2(p1, p2, q2)
    if ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0)) and d1 * d2 < 0 and d3 * d4 < 0:
        return True
    return False


def _is_simple(v: np.ndarray) -> bool:
    n = len(v)
    for i in range(n):
        for j in range(i + 1, n):
            if j == i + 1 or (i == 0 and j == n - 1):
                continue
            if _segments_cross(v[i], v[(i + 1) % n], v[j], v[(j + 1) % n]):
                return False
    return True


def boundary_distance(poly: Polygon2D, pts) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    a, b = poly.edges()
    ab = b - a
    ab2 = np.sum(ab * ab, axis=1)
    out = np.empty(len(pts))
    step = max(1, 4_000_000 // len(a))
    for s in range(0, len(pts), step):
        ap = pts[s : s + step, None, :] - a[None, :, :]
        t = np.clip(np.sum(ap * ab, axis=2) / ab2, 0, 1)
        d = ap - t[:, :, None] * ab[None]
        out[s : s + step] = np.sqrt(np.min(np.sum(d * d, axis=2), axis=1))
    return out


# --------------------------------------------------------------------------
# hull and centroid


def convex_hull_2d(points) -> Polygon2D:
    """Andrew's monotone chain; collinear boundary points are dropped."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if len(pts) < 3:
        raise DegenerateGeometryError(f"convex hull needs >= 3 points, got {len(pts)}")
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    p = [tuple(q) for q in pts[order]]
    uniq = [p[0]]
    for q in p[1:]:
        if q != uniq[-1]:
            uniq.append(q)
    if len(uniq) < 3:
        raise DegenerateGeometryError("all points coincide")

    def half(seq):
        chain: list[tuple[float, float]] = []
        for q in seq:
            while len(chain) >= 2 and _cross2(chain[-2], chain[-1], q) <= 0:
                chain.pop()
            chain.append(q)
        return chain

    lower = half(uniq)
    upper = half(reversed(uniq))
    hull = lower[:-1] + upper[:-1]
    if len(hull) < 3:
        raise DegenerateGeometryError("points are collinear")
    return Polygon2D(np.asarray(hull))


def hull_centroid(poly: Polygon2D) -> tuple[float, float]:
    v = poly.vertices
    # shift for conditioning at UTM magnitudes
    ref = v[0]
    x, y = (v - ref).T
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    area = 0.5 * cross.sum()
    if not abs(area) > 0:
        raise DegenerateGeometryError("polygon has zero area")
    cx = np.sum((x + xn) * cross) / (6 * area)
    cy = np.sum((y + yn) * cross) / (6 * area)
    return float(cx + ref[0]), float(cy + ref[1])


# --------------------------------------------------------------------------
# samples -> cloud


def survey_zone(samples: Sequence[DepthSample]) -> tuple[int, str]:
    """One forced zone for the whole survey: the zone of the lon/lat hull centroid."""
    lat = np.array([s.lat for s in samples])
    lon = np.array([s.lon for s in samples])
    if np.any(lat >= 0) and np.any(lat < 0):
        raise FrameError("survey straddles the equator; mixed hemispheres")
    hemi = "N" if lat[0] >= 0 else "S"
    try:
        c_lon, _ = hull_centroid(convex_hull_2d(np.column_stack([lon, lat])))
    except DegenerateGeometryError:
        c_lon = float(lon.mean())
    c_lon = float(geodesy.normalize_lon(c_lon))
    return geodesy.zone_for_longitude(c_lon), hemi


def to_utm_cloud(
    samples: Sequence[DepthSample],
    waterline_z: float = 0.0,
    zone: int | None = None,
) -> PointCloud:
    if len(samples) == 0:
        raise InputError("no depth samples")
    auto_zone, hemi = survey_zone(samples)
    zone = auto_zone if zone is None else zone
    lat = np.array([s.lat for s in samples])
    lon = np.array([s.lon for s in samples])
    depth = np.array([s.depth for s in samples])
    e, n = geodesy.project(lat, lon, zone, hemi)
    pts = np.column_stack([np.atleast_1d(e), np.atleast_1d(n), waterline_z - depth])
    return PointCloud(pts, None, Frame.utm(zone, hemi))


def dedupe(cloud: PointCloud, tolerance: float = DEDUPE_TOLERANCE) -> PointCloud:
    """Merge points whose (e, n) agree within ``tolerance``; z is averaged.

    Each group keeps the position of its first member and the output follows
    first-occurrence order.
    """
    pts = cloud.points
    if len(pts) < 2:
        return cloud
    pairs = cKDTree(pts[:, :2]).query_pairs(tolerance, output_type="ndarray")
    if len(pairs) == 0:
        return cloud
    g = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(len(pts), len(pts)))
    _, labels = connected_components(g, directed=False)
    _, first = np.unique(labels, return_index=True)
    first.sort()
    rank = np.empty(labels.max() + 1, dtype=np.int64)
    rank[labels[first]] = np.arange(len(first))
    group = rank[labels]
    zsum = np.bincount(group, weights=pts[:, 2])
    cnt = np.bincount(group)
    out = pts[first].copy()
    out[:, 2] = zsum / cnt
    normals = None if cloud.normals is None else cloud.normals[first].copy()
    return PointCloud(out, normals, cloud.frame)


# --------------------------------------------------------------------------
# depth map


def mean_nn_spacing(xy: np.ndarray) -> float:
    if len(xy) < 2:
        raise DegenerateGeometryError("need >= 2 points for a spacing estimate")
    d, _ = cKDTree(xy).query(xy, k=2)
    return float(d[:, 1].mean())


def rasterize_depth_map(
    cloud: PointCloud,
    spacing: float,
    idw_power: float = 2.0,
    idw_radius: float | None = None,
) -> ScalarField:
    """Inverse-distance-weighted grid of bed elevation (NaN = no data).

    Cell ``(i, j)`` is centred on ``origin + (i, j) * spacing`` and the origin is
    the minimum corner of the cloud's bounding box.
    """
    if len(cloud) == 0:
        raise InputError("empty cloud")
    if not spacing > 0:
        raise ParameterError("spacing must be positive")
    xy = cloud.points[:, :2]
    z = cloud.points[:, 2]
    lo, hi = xy.min(axis=0), xy.max(axis=0)
    extent = float((hi - lo).max())
    if extent > 0 and spacing > extent:
        raise ResolutionError(f"spacing {spacing} exceeds the survey extent {extent:.3f}")
    if idw_radius is None:
        idw_radius = 3.0 * mean_nn_spacing(xy) if len(xy) > 1 else spacing
    dims = np.maximum(np.ceil((hi - lo) / spacing).astype(int) + 1, 2)
    gx = lo[0] + spacing * np.arange(dims[0])
    gy = lo[1] + spacing * np.arange(dims[1])
    cx, cy = np.meshgrid(gx, gy, indexing="ij")
    centers = np.column_stack([cx.ravel(), cy.ravel()])

    pairs = cKDTree(centers).sparse_distance_matrix(cKDTree(xy), idw_radius, output_type="ndarray")
    order = np.lexsort((pairs["j"], pairs["i"]))
    rows, cols, d = pairs["i"][order], pairs["j"][order], pairs["v"][order]

    ncell = len(centers)
    exact = d == 0
    with np.errstate(divide="ignore"):
        w = np.where(exact, 0.0, 1.0 / d**idw_power)
    num = np.bincount(rows, weights=w * z[cols], minlength=ncell)
    den = np.bincount(rows, weights=w, minlength=ncell)
    with np.errstate(invalid="ignore", divide="ignore"):
        values = num / den
    values[den == 0] = np.nan
    if exact.any():
        # a sample on the cell centre dictates the value
        en = np.bincount(rows[exact], minlength=ncell)
        ez = np.bincount(rows[exact], weights=z[cols[exact]], minlength=ncell)
        hit = en > 0
        values[hit] = ez[hit] / en[hit]
    return ScalarField(lo.copy(), float(spacing), values.reshape(dims))


def write_ascii_grid(field_2d: ScalarField, path) -> None:
    """ESRI ASCII grid; rows run north to south, cell centres on grid nodes."""
    v = field_2d.values
    nx, ny = v.shape
    s = field_2d.spacing
    out = io.StringIO()
    out.write(f"ncols {nx}\nnrows {ny}\n")
    out.write(f"xllcorner {float(field_2d.origin[0] - s / 2)!r}\n")
    out.write(f"yllcorner {float(field_2d.origin[1] - s / 2)!r}\n")
    out.write(f"cellsize {float(s)!r}\nNODATA_value {NODATA:g}\n")
    for j in range(ny - 1, -1, -1):
        row = v[:, j]
        out.write(" ".join(f"{NODATA:g}" if math.isnan(x) else f"{x:.4f}" for x in row) + "\n")
    Path(path).write_text(out.getvalue())


def read_ascii_grid(path) -> ScalarField:
    lines = Path(path).read_text().splitlines()
    hdr = {}
    for ln in lines[:6]:
        k, val = ln.split()
        hdr[k.lower()] = val
    nx, ny = int(hdr["ncols"]), int(hdr["nrows"])
    s = float(hdr["cellsize"])
    nodata = float(hdr["nodata_value"])
    rows = np.array([[float(t) for t in ln.split()] for ln in lines[6 : 6 + ny]])
    values = rows[::-1].T.copy()
    values[values == nodata] = np.nan
    origin = (float(hdr["xllcorner"]) + s / 2, float(hdr["yllcorner"]) + s / 2)
    return ScalarField(origin, s, values.reshape(nx, ny))


# --------------------------------------------------------------------------
# normals


def estimate_normals(cloud: PointCloud, k: int = 16) -> PointCloud:
    """PCA normals from the ``k`` nearest (e, n) neighbours, oriented up.

    Degenerate neighbourhoods (collinear, coincident, or a vertical fitted
    plane) fall back to (0, 0, 1).
    """
    if k < 3:
        raise ParameterError("normal estimation needs k >= 3")
    pts = cloud.points
    if len(pts) < k + 1:
        raise PreconditionError(f"need at least k+1={k + 1} points, have {len(pts)}")
    _, idx = cKDTree(pts[:, :2]).query(pts[:, :2], k=k + 1)
    nb = pts[idx]
    centered = nb - nb.mean(axis=1, keepdims=True)
    cov = np.einsum("nki,nkj->nij", centered, centered)
    evals, evecs = np.linalg.eigh(cov)
    normals = evecs[:, :, 0].copy()
    scale = np.maximum(evals[:, 2], 0.0)
    degenerate = (evals[:, 1] <= 1e-10 * scale) | (scale <= 0)
    sign = np.where(normals[:, 2] < 0, -1.0, 1.0)
    normals *= sign[:, None]
    degenerate |= normals[:, 2] < 1e-9
    normals[degenerate] = (0.0, 0.0, 1.0)
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    return PointCloud(pts.copy(), normals, cloud.frame)


# --------------------------------------------------------------------------
# file IO


def write_cloud(cloud: PointCloud, path) -> int:
    return write_ply(path, cloud.points, None, normals=cloud.normals, frame=cloud.frame, binary=True)


def read_cloud(path) -> PointCloud:
    ply = read_ply(path)
    return PointCloud(ply.vertices, ply.normals, ply.frame)
