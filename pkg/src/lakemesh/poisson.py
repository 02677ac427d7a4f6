"""Regular-grid Poisson reconstruction of the bed surface.

Oriented points are splatted into a vector field V on a node lattice, the
indicator chi is found from the discrete Poisson equation lap(chi) = div(V)
with homogeneous Neumann walls, and the surface is the chi level set through
the input points.  Because grad(chi) follows V, chi grows in the direction the
normals point, so extracted triangles face the same way as the input normals.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import CoverageError, ParameterError, PreconditionError, SolverError
from .marching import marching_cubes
from .mesh import TriMesh
from .pointcloud import PointCloud, ScalarField

log = logging.getLogger(__name__)

AUTO_DIVISIONS = 128
DIVERGENCE_WINDOW = 50
MAX_NODES = 60_000_000


@dataclass
class ReconstructionParams:
    grid_spacing: float | None = None  # None: bounding-box diagonal / 128
    padding_cells: int = 4
    # Neumann walls close above and below a thin bed pull the level set; 16 cells keep that under a few mm
    vertical_padding_cells: int = 16
    cg_tolerance: float = 1e-7
    cg_max_iters: int = 5000
    splat_radius_cells: int = 1

    def __post_init__(self):
        if self.grid_spacing is not None and not self.grid_spacing > 0:
            raise ParameterError("grid_spacing must be positive")
        if self.padding_cells < 2:
            raise ParameterError("padding_cells must be >= 2")
        if self.vertical_padding_cells < self.padding_cells:
            raise ParameterError("vertical_padding_cells must be >= padding_cells")
        if not 0 < self.cg_tolerance < 1:
            raise ParameterError("cg_tolerance must lie in (0, 1)")
        if self.cg_max_iters < 1:
            raise ParameterError("cg_max_iters must be >= 1")
        if self.splat_radius_cells < 1:
            raise ParameterError("splat_radius_cells must be >= 1")

    def spacing_for(self, points: np.ndarray) -> float:
        if self.grid_spacing is not None:
            return float(self.grid_spacing)
        diag = float(np.linalg.norm(points.max(axis=0) - points.min(axis=0)))
        if diag <= 0:
            raise ParameterError("cannot pick an automatic spacing for a single point")
        return diag / AUTO_DIVISIONS


@dataclass(eq=False)
class VectorField3:
    """Three components per node; ``values`` has shape ``(nx, ny, nz, 3)``."""

    origin: np.ndarray
    spacing: float
    values: np.ndarray

    def __post_init__(self):
        self.origin = np.asarray(self.origin, dtype=np.float64)
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 4 or self.values.shape[3] != 3:
            raise ParameterError(f"vector field needs shape (nx, ny, nz, 3), got {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise ParameterError("vector field has non-finite values")

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.values.shape[:3]


@dataclass
class SolveReport:
    iterations: int
    residual: float  # final relative residual
    converged: bool


def grid_for(
    points: np.ndarray, spacing: float, padding: int, vertical_padding: int | None = None
) -> tuple[np.ndarray, tuple[int, int, int]]:
    lo, hi = points.min(axis=0), points.max(axis=0)
    pad = np.array([padding, padding, padding if vertical_padding is None else vertical_padding])
    origin = lo - pad * spacing
    dims = np.ceil((hi - lo) / spacing).astype(np.int64) + 2 * pad + 1
    if np.prod(dims.astype(float)) > MAX_NODES:
        raise ParameterError(f"grid {tuple(dims)} too large; increase grid_spacing")
    return origin, tuple(int(d) for d in dims)


def _tent_weights(u: np.ndarray, r: int):
    """Per-axis node offsets and weights of a tent kernel of half-width ``r`` nodes."""
    base = np.floor(u).astype(np.int64)
    offs = np.arange(-r + 1, r + 1)
    nodes = base[:, None] + offs[None, :]
    w = np.maximum(0.0, 1.0 - np.abs(u[:, None] - nodes) / r) / r
    return nodes, w


def build_vector_field(
    cloud: PointCloud,
    params: ReconstructionParams,
    origin: np.ndarray | None = None,
    dims: tuple[int, int, int] | None = None,
) -> VectorField3:
    """Splat each normal with a separable tent kernel (partition of unity)."""
    if cloud.normals is None:
        raise PreconditionError("point cloud has no normals")
    if len(cloud) == 0:
        raise PreconditionError("empty point cloud")
    s = params.spacing_for(cloud.points)
    if origin is None or dims is None:
        origin, dims = grid_for(cloud.points, s, params.padding_cells, params.vertical_padding_cells)
    r = params.splat_radius_cells
    u = (cloud.points - origin) / s
    if np.any(u < r - 1) or np.any(u >= np.asarray(dims) - r):
        raise CoverageError("splat support leaves the grid; raise padding_cells")
    (ix, wx), (iy, wy), (iz, wz) = (_tent_weights(u[:, k], r) for k in range(3))
    w = wx[:, :, None, None] * wy[:, None, :, None] * wz[:, None, None, :]
    flat = (ix[:, :, None, None] * dims[1] + iy[:, None, :, None]) * dims[2] + iz[:, None, None, :]
    flat = flat.reshape(len(u), -1)
    w = w.reshape(len(u), -1)
    n_nodes = int(np.prod(dims))
    values = np.empty((n_nodes, 3))
    for k in range(3):
        # bincount accumulates in index order, so the sum is reproducible
        values[:, k] = np.bincount(flat.ravel(), weights=(w * cloud.normals[:, k : k + 1]).ravel(), minlength=n_nodes)
    return VectorField3(origin, s, values.reshape(*dims, 3))


def divergence(field: VectorField3) -> np.ndarray:
    """Central differences in the interior, one-sided on the walls."""
    s = field.spacing
    out = np.zeros(field.dims)
    for k in range(3):
        out += np.gradient(field.values[..., k], s, axis=k, edge_order=1)
    return out


def neumann_laplacian(x: np.ndarray, spacing: float) -> np.ndarray:
    """7-point Laplacian with zero-flux walls (missing neighbours are dropped)."""
    out = np.zeros_like(x)
    for k in range(3):
        d = np.diff(x, axis=k)
        lo = [slice(None)] * 3
        hi = [slice(None)] * 3
        lo[k] = slice(0, -1)
        hi[k] = slice(1, None)
        out[tuple(lo)] += d
        out[tuple(hi)] -= d
    return out / (spacing * spacing)


def _dot(a: np.ndarray, b: np.ndarray) -> float:
    # np.sum uses fixed pairwise summation on contiguous data, independent of thread count
    return float(np.sum(a * b))


def conjugate_gradient(
    rhs: np.ndarray,
    spacing: float,
    tolerance: float,
    max_iters: int,
) -> tuple[np.ndarray, SolveReport]:
    """Solve ``-lap(x) = -rhs`` on the zero-mean subspace."""
    b = -(rhs - rhs.mean())
    bnorm = math.sqrt(_dot(b, b))
    x = np.zeros_like(b)
    if bnorm == 0:
        return x, SolveReport(0, 0.0, True)
    r = b.copy()
    p = r.copy()
    rr = _dot(r, r)
    rising = 0
    rel = 1.0
    for it in range(1, max_iters + 1):
        ap = -neumann_laplacian(p, spacing)
        pap = _dot(p, ap)
        if not pap > 0:
            raise SolverError("conjugate gradient breakdown (non-positive curvature)", it, rel)
        alpha = rr / pap
        x += alpha * p
        r -= alpha * ap
        rr_new = _dot(r, r)
        prev, rel = rel, math.sqrt(rr_new) / bnorm
        if rel <= tolerance:
            return x - x.mean(), SolveReport(it, rel, True)
        rising = rising + 1 if rel > prev else 0
        if rising >= DIVERGENCE_WINDOW:
            raise SolverError(f"residual grew for {DIVERGENCE_WINDOW} consecutive iterations", it, rel)
        p = r + (rr_new / rr) * p
        rr = rr_new
    raise SolverError(f"conjugate gradient did not reach tolerance {tolerance:g}", max_iters, rel)


def solve_indicator(field: VectorField3, params: ReconstructionParams) -> tuple[ScalarField, SolveReport]:
    rhs = divergence(field)
    chi, report = conjugate_gradient(rhs, field.spacing, params.cg_tolerance, params.cg_max_iters)
    log.info("CG converged in %d iterations (relative residual %.2e)", report.iterations, report.residual)
    return ScalarField(field.origin.copy(), field.spacing, chi), report


def choose_isovalue(chi: ScalarField, cloud: PointCloud) -> float:
    try:
        samples = chi.sample(cloud.points)
    except PreconditionError as exc:
        raise CoverageError("input points fall outside the indicator grid") from exc
    return float(np.mean(samples))


def reconstruct(cloud: PointCloud, params: ReconstructionParams | None = None) -> TriMesh:
    mesh, _ = reconstruct_with_report(cloud, params)
    return mesh


def reconstruct_with_report(
    cloud: PointCloud, params: ReconstructionParams | None = None
) -> tuple[TriMesh, dict]:
    params = params or ReconstructionParams()
    field = build_vector_field(cloud, params)
    chi, report = solve_indicator(field, params)
    iso = choose_isovalue(chi, cloud)
    mesh = marching_cubes(chi.values, iso, chi.origin, chi.spacing, cloud.frame)
    info = {
        "grid_spacing": chi.spacing,
        "dims": chi.dims,
        "origin": chi.origin.tolist(),
        "cg_iterations": report.iterations,
        "cg_residual": report.residual,
        "isovalue": iso,
        "chi": chi,
    }
    return mesh, info


def dump_field(chi: ScalarField, path) -> None:
    """Text header (``key value`` lines ending in ``end_header``) then raw little-endian float64, C order."""
    nx, ny, nz = chi.dims
    o = chi.origin
    head = (
        f"lakemesh-field 1\ndims {nx} {ny} {nz}\norigin {float(o[0])!r} {float(o[1])!r} {float(o[2])!r}\n"
        f"spacing {float(chi.spacing)!r}\ndtype float64-le\nend_header\n"
    )
    Path(path).write_bytes(head.encode("ascii") + np.ascontiguousarray(chi.values, dtype="<f8").tobytes())


def load_field(path) -> ScalarField:
    data = Path(path).read_bytes()
    end = data.index(b"end_header\n") + len(b"end_header\n")
    hdr = dict(line.split(" ", 1) for line in data[:end].decode("ascii").splitlines()[1:-1])
    dims = tuple(int(t) for t in hdr["dims"].split())
    values = np.frombuffer(data, dtype="<f8", offset=end).reshape(dims).copy()
    return ScalarField([float(t) for t in hdr["origin"].split()], float(hdr["spacing"]), values)
