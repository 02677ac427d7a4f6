"""Enclosed volume, capacity below a water level and stage-storage curves."""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import NotWatertightError, ParameterError, PreconditionError
from .mesh import TriMesh

CAPACITY_DEFINITION = "water volume inside the closed mesh and below the horizontal plane z = level"


def _require_closed(mesh: TriMesh) -> None:
    from .meshops import watertight_check

    report = watertight_check(mesh)
    if not report.closed:
        raise NotWatertightError(
            f"mesh is not closed (non_manifold_edges={report.non_manifold_edges}, "
            f"misoriented_edges={report.misoriented_edges})",
            report.boundary_edges,
        )


def signed_volume(mesh: TriMesh) -> float:
    """Signed tetrahedra sum in the vertex-centroid frame, without a closedness check."""
    if mesh.n_faces == 0:
        return 0.0
    v = mesh.vertices - mesh.vertices.mean(axis=0)
    a, b, c = v[mesh.faces[:, 0]], v[mesh.faces[:, 1]], v[mesh.faces[:, 2]]
    six = np.einsum("ij,ij->i", a, np.cross(b, c))
    return math.fsum(six) / 6.0


def enclosed_volume(mesh: TriMesh) -> float:
    """Divergence-theorem volume; positive when faces point outward."""
    _require_closed(mesh)
    return signed_volume(mesh)


def plan_area(mesh: TriMesh) -> float:
    """Area of the plan projection of a closed mesh (half the total |projected area|)."""
    t = mesh.triangles()
    cross_z = (t[:, 1, 0] - t[:, 0, 0]) * (t[:, 2, 1] - t[:, 0, 1]) - (t[:, 1, 1] - t[:, 0, 1]) * (t[:, 2, 0] - t[:, 0, 0])
    return 0.25 * float(np.abs(cross_z).sum())


# --------------------------------------------------------------------------
# column parity fill


def _edge_fn(ax, ay, bx, by, px, py):
    """Orientation of p against edge a->b, evaluated with the endpoints in a
    canonical order so two faces sharing an edge get exactly opposite values."""
    swap = (ax > bx) | ((ax == bx) & (ay > by))
    x0, y0 = np.where(swap, bx, ax), np.where(swap, by, ay)
    x1, y1 = np.where(swap, ax, bx), np.where(swap, ay, by)
    val = (x1 - x0) * (py - y0) - (y1 - y0) * (px - x0)
    return np.where(swap, -val, val), swap


def _inside_rule(e, dx, dy):
    """Strict inside, or on the edge and the edge is a top or left edge (CCW)."""
    top_left = (dy < 0) | ((dy == 0) & (dx > 0))
    return (e > 0) | ((e == 0) & top_left)


@dataclass
class ColumnCrossings:
    """Vertical-ray crossings of a closed mesh on an x/y lattice of column centres."""

    x0: float
    y0: float
    spacing: float
    col: np.ndarray  # flat column index (i * ny + j)
    z: np.ndarray
    shape: tuple[int, int]


def column_crossings(mesh: TriMesh, spacing: float, chunk: int = 2_000_000) -> ColumnCrossings:
    """Columns sit at ``((i + 0.5) * s, (j + 0.5) * s)``: lattice aligned to multiples of ``s``.

    A column passing exactly through an edge or vertex is assigned to exactly one
    of the faces sharing it (top-left rule), so parities stay consistent.
    """
    s = float(spacing)
    lo, hi = mesh.bounds()
    i0 = int(math.floor(lo[0] / s - 0.5))
    j0 = int(math.floor(lo[1] / s - 0.5))
    nx = int(math.ceil(hi[0] / s - 0.5)) - i0 + 1
    ny = int(math.ceil(hi[1] / s - 0.5)) - j0 + 1
    x0, y0 = (i0 + 0.5) * s, (j0 + 0.5) * s
    t = mesh.triangles()
    # work relative to the lattice origin to keep digits at UTM magnitudes
    px = t[:, :, 0] - x0
    py = t[:, :, 1] - y0
    pz = t[:, :, 2]
    area2 = (px[:, 1] - px[:, 0]) * (py[:, 2] - py[:, 0]) - (py[:, 1] - py[:, 0]) * (px[:, 2] - px[:, 0])
    keep = area2 != 0
    idx = np.flatnonzero(keep)
    # one extra column each way: the division can round across a column the face touches
    imin = np.clip(np.ceil(px[idx].min(axis=1) / s).astype(np.int64) - 1, 0, nx - 1)
    imax = np.clip(np.floor(px[idx].max(axis=1) / s).astype(np.int64) + 1, 0, nx - 1)
    jmin = np.clip(np.ceil(py[idx].min(axis=1) / s).astype(np.int64) - 1, 0, ny - 1)
    jmax = np.clip(np.floor(py[idx].max(axis=1) / s).astype(np.int64) + 1, 0, ny - 1)
    ei, ej = np.maximum(imax - imin + 1, 0), np.maximum(jmax - jmin + 1, 0)
    ncand = ei * ej
    cols, zs = [], []
    start = 0
    while start < len(idx):
        stop = start + 1
        total = ncand[start]
        while stop < len(idx) and total + ncand[stop] <= chunk:
            total += ncand[stop]
            stop += 1
        sl = slice(start, stop)
        owner = np.repeat(np.arange(start, stop), ncand[sl])
        local = np.arange(len(owner)) - np.repeat(np.cumsum(ncand[sl]) - ncand[sl], ncand[sl])
        ci = imin[owner] + local // ej[owner]
        cj = jmin[owner] + local % ej[owner]
        f = idx[owner]
        qx, qy = ci * s, cj * s
        X, Y, Z = px[f], py[f], pz[f]
        # orient each projected triangle counter-clockwise
        flip = area2[f] < 0
        order = np.where(flip[:, None], [0, 2, 1], [0, 1, 2])
        X = np.take_along_axis(X, order, 1)
        Y = np.take_along_axis(Y, order, 1)
        Z = np.take_along_axis(Z, order, 1)
        inside = np.ones(len(f), dtype=bool)
        w = []
        for k in range(3):
            a, b = k, (k + 1) % 3
            e, _ = _edge_fn(X[:, a], Y[:, a], X[:, b], Y[:, b], qx, qy)
            inside &= _inside_rule(e, X[:, b] - X[:, a], Y[:, b] - Y[:, a])
            w.append(e)
        if inside.any():
            # barycentric weight of vertex c is the edge function of the opposite edge
            e01, e12, e20 = (wk[inside] for wk in w)
            tot = e01 + e12 + e20
            z = (e12 * Z[inside, 0] + e20 * Z[inside, 1] + e01 * Z[inside, 2]) / tot
            cols.append(ci[inside] * ny + cj[inside])
            zs.append(z)
        start = stop
    col = np.concatenate(cols) if cols else np.zeros(0, dtype=np.int64)
    z = np.concatenate(zs) if zs else np.zeros(0)
    return ColumnCrossings(x0, y0, s, col, z, (nx, ny))


def _layer_counts(cx: ColumnCrossings, level: float) -> tuple[int, int]:
    """(inside voxels below ``level``, columns with any inside voxel)."""
    s = cx.spacing
    if len(cx.z) == 0:
        return 0, 0
    k_lo = int(math.floor(cx.z.min() / s - 0.5))
    k_hi = int(math.floor(cx.z.max() / s - 0.5)) + 1
    # voxel centres at (k + 0.5) * s strictly below level
    k_top = min(k_hi, int(math.ceil(level / s - 0.5)) - 1)
    if k_top < k_lo:
        return 0, 0
    ncol = cx.shape[0] * cx.shape[1]
    nk = k_hi - k_lo + 2
    # centres below a crossing at z: k + 0.5 < z / s
    kc = np.ceil(cx.z / s - 0.5).astype(np.int64) - 1 - k_lo
    kc = np.clip(kc, -1, nk - 1)
    acc = np.zeros((ncol, nk + 1), dtype=np.int32)
    np.add.at(acc, (cx.col, kc + 1), 1)
    # crossings above centre k = number of crossings with kc >= k
    above = np.cumsum(acc[:, ::-1], axis=1)[:, ::-1][:, 1:]
    inside = (above % 2 == 1)[:, : k_top - k_lo + 1]
    return int(inside.sum()), int(inside.any(axis=1).sum())


@dataclass
class Capacity:
    level: float
    volume: float
    error_bound: float
    spacing: float


def capacity_at_level(mesh: TriMesh, level: float, spacing: float) -> Capacity:
    """Voxel count below ``level`` of the parity-filled solid, times ``spacing**3``.

    The bound is half a voxel layer over the wetted plan area.
    """
    if not spacing > 0:
        raise ParameterError("voxel spacing must be positive")
    _require_closed(mesh)
    _require_single_solid(mesh)
    cx = column_crossings(mesh, spacing)
    return _capacity(cx, level)


def _capacity(cx: ColumnCrossings, level: float) -> Capacity:
    s = cx.spacing
    count, wet_cols = _layer_counts(cx, level)
    return Capacity(float(level), count * s**3, 0.5 * s * wet_cols * s * s, s)


def _require_single_solid(mesh: TriMesh) -> None:
    from .meshops import face_components

    n, _ = face_components(mesh)
    if n > 1:
        raise PreconditionError(f"closed mesh has {n} shells; capacity needs a single solid")


# --------------------------------------------------------------------------
# stage-storage


@dataclass
class StageStorageCurve:
    levels: np.ndarray
    capacities: np.ndarray
    error_bounds: np.ndarray
    spacing: float
    datum: str = "levels in the mesh's vertical frame (waterline_z is the datum)"
    definition: str = CAPACITY_DEFINITION
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.levels = np.asarray(self.levels, dtype=float)
        self.capacities = np.asarray(self.capacities, dtype=float)
        self.error_bounds = np.asarray(self.error_bounds, dtype=float)
        if np.any(np.diff(self.levels) <= 0):
            raise ParameterError("levels must be strictly increasing")
        if np.any(np.diff(self.capacities) < 0):
            raise PreconditionError("capacity decreased with level")

    def samples(self) -> list[tuple[float, float]]:
        return list(zip(self.levels.tolist(), self.capacities.tolist()))

    def to_csv(self) -> str:
        out = io.StringIO()
        out.write(f"# capacity: {self.definition}\n# datum: {self.datum}\n# voxel_spacing: {float(self.spacing)!r}\n")
        out.write("level_m,capacity_m3\n")
        for lv, cap in self.samples():
            out.write(f"{lv:.6f},{cap:.6f}\n")
        return out.getvalue()

    def to_plot_data(self) -> str:
        """Whitespace columns for gnuplot-style tools: level, capacity, bound."""
        out = io.StringIO()
        out.write("# level_m capacity_m3 error_bound_m3\n")
        for lv, cap, eb in zip(self.levels, self.capacities, self.error_bounds):
            out.write(f"{lv:.6f} {cap:.6f} {eb:.6f}\n")
        return out.getvalue()

    def write(self, path) -> None:
        Path(path).write_text(self.to_csv())


def read_curve_csv(path_or_text) -> list[tuple[float, float]]:
    text = Path(path_or_text).read_text() if not isinstance(path_or_text, str) or "\n" not in path_or_text else path_or_text
    rows = []
    for line in text.splitlines():
        if not line or line.startswith("#") or line.startswith("level_m"):
            continue
        a, b = line.split(",")
        rows.append((float(a), float(b)))
    return rows


def stage_storage_curve(mesh: TriMesh, levels, spacing: float) -> StageStorageCurve:
    levels = [float(x) for x in levels]
    if not levels:
        raise ParameterError("no levels given")
    if any(b <= a for a, b in zip(levels, levels[1:])):
        raise ParameterError("levels must be sorted ascending without repeats")
    if not spacing > 0:
        raise ParameterError("voxel spacing must be positive")
    _require_closed(mesh)
    _require_single_solid(mesh)
    cx = column_crossings(mesh, spacing)
    caps = [_capacity(cx, lv) for lv in levels]
    return StageStorageCurve(levels, [c.volume for c in caps], [c.error_bound for c in caps], spacing)
