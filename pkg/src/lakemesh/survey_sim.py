"""Synthetic lake surveys with analytic ground truth.

Random numbers come from numpy's PCG64 bit generator seeded with the spec's
``seed``; draws happen in a fixed order (GPS jitter, then depth noise, then
artifact placement), so a spec reproduces the same bytes on every platform
numpy supports.
"""

from __future__ import annotations

import hashlib
import json
import math
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import geodesy
from .errors import ParameterError
from .ingest import DepthSample, GeoTagRecord, format_depth_log, format_geotags, format_offsets, write_ply
from .mesh import LOCAL, Frame, TriMesh
from .pointcloud import Polygon2D

RNG_ALGORITHM = "numpy.random.PCG64"


# --------------------------------------------------------------------------
# bathymetry


@dataclass(frozen=True)
class Bathymetry:
    """Bed elevation relative to the waterline (z = waterline - depth) around ``center``."""

    kind: str  # paraboloid | gaussian | plane
    d0: float = 4.0  # max depth (paraboloid, gaussian) or constant depth (plane)
    radius: float = 50.0  # paraboloid rim radius
    sigma: float = 20.0  # gaussian width

    def __post_init__(self):
        if self.kind not in ("paraboloid", "gaussian", "plane"):
            raise ParameterError(f"unknown bathymetry kind {self.kind!r}")
        if not self.d0 > 0 or not self.radius > 0 or not self.sigma > 0:
            raise ParameterError("bathymetry parameters must be positive")

    def depth(self, dx, dy) -> np.ndarray:
        r2 = np.asarray(dx, float) ** 2 + np.asarray(dy, float) ** 2
        if self.kind == "paraboloid":
            return self.d0 * (1.0 - r2 / self.radius**2)
        if self.kind == "gaussian":
            return self.d0 * np.exp(-r2 / (2 * self.sigma**2))
        return np.full_like(r2, self.d0)

    def describe(self) -> str:
        if self.kind == "paraboloid":
            return f"z = -{self.d0!r} * (1 - r^2 / {self.radius!r}^2)"
        if self.kind == "gaussian":
            return f"z = -{self.d0!r} * exp(-r^2 / (2 * {self.sigma!r}^2))"
        return f"z = -{self.d0!r}"

    def volume_below(self, level: float) -> float:
        """Closed-form water volume of the paraboloid bowl below ``level`` (waterline 0)."""
        if self.kind != "paraboloid":
            raise ParameterError("closed form only for the paraboloid")
        if level <= -self.d0:
            return 0.0
        return math.pi * self.radius**2 * self.d0 / 2 * ((level + self.d0) / self.d0) ** 2


@dataclass(frozen=True)
class BankSpec:
    """A bank along polygon edges ``first_edge`` .. ``last_edge`` (inclusive, wrapping).

    The toe runs ``gap`` metres outside the polygon at the waterline and the
    strip climbs outward at ``slope`` (rise over run) up to ``height``.
    """

    first_edge: int
    last_edge: int
    slope: float = 0.3
    height: float = 2.0
    gap: float = 2.0
    resolution: float = 1.0
    reflections: bool = False
    floating: bool = False
    long_edges: int = 0

    def __post_init__(self):
        if not (self.slope > 0 and self.height > 0 and self.gap > 0 and self.resolution > 0):
            raise ParameterError("bank slope, height, gap and resolution must be positive")


@dataclass
class SynthLakeSpec:
    bathymetry: Bathymetry
    polygon: list  # (dx, dy) offsets from the centre, CCW
    center_easting: float = 500000.0
    center_northing: float = 3388000.0
    zone: int = 14
    hemisphere: str = "N"
    banks: list = field(default_factory=list)
    n_samples: int = 2000
    depth_sigma: float = 0.05
    gps_sigma: float = 0.02
    lane_spacing: float = 5.0
    sections: int = 3
    failed_geotag_section: int | None = None
    photo_spacing: float = 10.0
    waterline_z: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.n_samples < 1:
            raise ParameterError("n_samples must be >= 1")
        if self.depth_sigma < 0 or self.gps_sigma < 0:
            raise ParameterError("noise levels must be >= 0")
        if not self.lane_spacing > 0:
            raise ParameterError("lane spacing must be positive")
        if self.sections < 1:
            raise ParameterError("need at least one section")
        Polygon2D(np.asarray(self.polygon, float))  # validates CCW and simple
        n_edges = len(self.polygon)
        for b in self.banks:
            if not (0 <= b.first_edge < n_edges and 0 <= b.last_edge < n_edges):
                raise ParameterError("bank edge index outside the polygon")
        truth = self.bathymetry.depth(*np.asarray(self.polygon, float).T)
        if np.any(truth < 0):
            raise ParameterError("survey polygon extends beyond the bathymetry support")

    @property
    def frame(self) -> Frame:
        return Frame.utm(self.zone, self.hemisphere)

    @property
    def center(self) -> np.ndarray:
        return np.array([self.center_easting, self.center_northing])

    def polygon_utm(self) -> Polygon2D:
        return Polygon2D(np.asarray(self.polygon, float) + self.center)

    def to_json(self) -> str:
        d = asdict(self)
        return json.dumps(d, indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "SynthLakeSpec":
        d = dict(d)
        d["bathymetry"] = Bathymetry(**d["bathymetry"])
        d["banks"] = [BankSpec(**b) for b in d.get("banks", [])]
        d["polygon"] = [list(map(float, p)) for p in d["polygon"]]
        return cls(**d)

    @classmethod
    def from_json(cls, text: str) -> "SynthLakeSpec":
        return cls.from_dict(json.loads(text))


def regular_polygon(n: int, inradius: float) -> list:
    """CCW regular n-gon with the given inradius, first edge facing south."""
    rho = inradius / math.cos(math.pi / n)
    ang = -math.pi / 2 - math.pi / n + 2 * math.pi * np.arange(n) / n
    return [[rho * math.cos(a), rho * math.sin(a)] for a in ang]


def paraboloid_preset(seed: int = 7) -> SynthLakeSpec:
    """Bowl of rim radius 50 m and depth 4 m with two banks wrapping the shore."""
    gap = 2.0
    n = 24
    poly = regular_polygon(n, 50.0 - gap)
    banks = [
        BankSpec(0, n // 2 - 1, gap=gap, reflections=True, floating=True, long_edges=3),
        BankSpec(n // 2, n - 1, gap=gap, reflections=True, floating=True, long_edges=3),
    ]
    return SynthLakeSpec(
        Bathymetry("paraboloid", d0=4.0, radius=50.0),
        poly,
        banks=banks,
        n_samples=2000,
        depth_sigma=0.05,
        gps_sigma=0.02,
        lane_spacing=4.0,
        failed_geotag_section=1,
        seed=seed,
    )


def default_preset(seed: int = 1) -> SynthLakeSpec:
    """Pond sized near 18,580 m^2 with three banks, artifacts and a geotag outage."""
    gap = 2.5
    n = 24
    radius = 77.0  # pi * 77^2 ~ 18,600 m^2
    poly = regular_polygon(n, radius - gap)
    banks = [
        BankSpec(k * 8, k * 8 + 7, gap=gap, height=2.0, slope=0.3, resolution=1.5,
                 reflections=True, floating=True, long_edges=2)
        for k in range(3)
    ]
    return SynthLakeSpec(
        Bathymetry("paraboloid", d0=3.0, radius=radius),
        poly,
        banks=banks,
        n_samples=3000,
        depth_sigma=0.05,
        gps_sigma=0.02,
        lane_spacing=6.0,
        failed_geotag_section=1,
        seed=seed,
    )


# --------------------------------------------------------------------------
# coverage path


def _line_intervals(poly: np.ndarray, t: float) -> list[tuple[float, float]]:
    """Intervals of s where the line {v = t} lies inside ``poly`` given in (s, v) coords."""
    a, b = poly, np.roll(poly, -1, axis=0)
    cross = (a[:, 1] > t) != (b[:, 1] > t)
    ss = a[cross, 0] + (t - a[cross, 1]) * (b[cross, 0] - a[cross, 0]) / (b[cross, 1] - a[cross, 1])
    ss = np.sort(ss)
    return [(ss[i], ss[i + 1]) for i in range(0, len(ss) - 1, 2) if ss[i + 1] > ss[i]]


def boustrophedon_path(poly: Polygon2D, lane_spacing: float, perimeter: bool = True) -> np.ndarray:
    """Waypoints (k, 2): optional perimeter loop, then back-and-forth lanes.

    Lanes run parallel to the longest polygon edge.  With ``n = ceil(width /
    spacing)`` lanes they are spaced ``lane_spacing`` apart and centred across
    the polygon's width, so the outermost lanes sit half the leftover width
    inside the extremes.  The perimeter loop covers points near the boundary
    that clipped lane ends leave behind.
    """
    if not lane_spacing > 0:
        raise ParameterError("lane spacing must be positive")
    v = poly.vertices
    a, b = poly.edges()
    lengths = np.linalg.norm(b - a, axis=1)
    k = int(np.argmax(lengths))
    u = (b[k] - a[k]) / lengths[k]
    nrm = np.array([-u[1], u[0]])
    local = np.column_stack([v @ u, v @ nrm])
    tmin, tmax = local[:, 1].min(), local[:, 1].max()
    width = tmax - tmin
    n = max(1, math.ceil(width / lane_spacing - 1e-12))
    if lane_spacing >= width:
        warnings.warn("lane spacing exceeds the polygon width; single-lane path", stacklevel=2)
        n = 1
    first = tmin + (width - (n - 1) * lane_spacing) / 2
    pts = []
    if perimeter:
        pts.extend(v.tolist())
        pts.append(v[0].tolist())
    forward = True
    for i in range(n):
        t = first + i * lane_spacing
        ivs = _line_intervals(local, t)
        if not forward:
            ivs = [(s1, s0) for s0, s1 in reversed(ivs)]
        for s0, s1 in ivs:
            pts.append((s0 * u + t * nrm).tolist())
            pts.append((s1 * u + t * nrm).tolist())
        forward = not forward
    return np.asarray(pts, dtype=float)


def sample_path(path: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    """``n`` points evenly spaced by arc length; also returns each point's arc position in [0, 1]."""
    seg = np.linalg.norm(np.diff(path, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    total = cum[-1]
    if total == 0:
        return np.repeat(path[:1], n, axis=0), np.zeros(n)
    s = np.linspace(0.0, total, n)
    x = np.interp(s, cum, path[:, 0])
    y = np.interp(s, cum, path[:, 1])
    return np.column_stack([x, y]), s / total


# --------------------------------------------------------------------------
# banks


def _offset_chain(points: np.ndarray, normals: np.ndarray, d: float) -> np.ndarray:
    """Mitered offset of an open polyline: ``normals[i]`` is the outward normal of edge i."""
    n_pts = len(points)
    out = np.empty_like(points)
    for i in range(n_pts):
        if i == 0:
            m = normals[0]
        elif i == n_pts - 1:
            m = normals[-1]
        else:
            m = normals[i - 1] + normals[i]
            m = m / np.linalg.norm(m)
            m = m / float(m @ normals[i])
        out[i] = points[i] + d * m
    return out


@dataclass
class BankResult:
    mesh: TriMesh  # local frame
    offset: tuple[float, float, float]
    toe: np.ndarray  # (k, 2) UTM toe polyline
    labels: dict  # artifact kind -> face indices
    n_clean_faces: int


def _bank_chain(poly: Polygon2D, bank: BankSpec):
    v = poly.vertices
    n = len(v)
    count = (bank.last_edge - bank.first_edge) % n + 1
    idx = [(bank.first_edge + i) % n for i in range(count + 1)]
    pts = v[idx]
    d = np.diff(pts, axis=0)
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    normals = np.column_stack([d[:, 1], -d[:, 0]])  # outward for a CCW polygon
    return pts, normals


def _resample_chain(pts: np.ndarray, counts) -> np.ndarray:
    """Split edge i of the polyline into ``counts[i]`` equal pieces."""
    out = [pts[0]]
    for i, m in enumerate(counts):
        for j in range(1, m + 1):
            out.append(pts[i] + (pts[i + 1] - pts[i]) * j / m)
    return np.asarray(out)


def _strip_faces(n_along: int, n_rows: int, base: int = 0) -> np.ndarray:
    faces = []
    for r in range(n_rows - 1):
        for i in range(n_along - 1):
            a = base + r * n_along + i
            b, c, d = a + 1, a + n_along, a + n_along + 1
            faces.append((a, b, d))
            faces.append((a, d, c))
    return np.asarray(faces, dtype=np.int64).reshape(-1, 3)


def build_bank(spec: SynthLakeSpec, bank: BankSpec, rng: np.random.Generator) -> BankResult:
    poly = spec.polygon_utm()
    pts, normals = _bank_chain(poly, bank)
    toe = _offset_chain(pts, normals, bank.gap)
    run = bank.height / bank.slope
    n_rows = max(2, math.ceil(run / bank.resolution - 1e-9) + 1)
    crest = _offset_chain(pts, normals, bank.gap + run)
    # piece counts from the longest (crest) row so every row lines up index by index
    counts = [max(1, math.ceil(float(np.linalg.norm(crest[i + 1] - crest[i])) / bank.resolution - 1e-9))
              for i in range(len(crest) - 1)]
    rows = []
    for r in range(n_rows):
        row = _resample_chain(_offset_chain(pts, normals, bank.gap + run * r / (n_rows - 1)), counts)
        z = spec.waterline_z + bank.height * r / (n_rows - 1)
        rows.append(np.column_stack([row, np.full(len(row), z)]))
    verts = np.concatenate(rows)
    n_along = len(rows[0])
    faces = _strip_faces(n_along, n_rows)
    # strip winding: the along direction runs CCW round the lake, rows climb outward,
    # so (a, b, d) faces up-and-inward only if the cross product has positive z
    t = verts[faces]
    nz = np.cross(t[:, 1] - t[:, 0], t[:, 2] - t[:, 0])[:, 2]
    if np.median(nz) < 0:
        faces = faces[:, ::-1]
    n_clean = len(faces)
    labels: dict[str, list[int]] = {"long_edge": [], "reflection": [], "floating": []}

    if bank.long_edges:
        # spurious faces tying the toe to far-away points on the crest
        for _ in range(bank.long_edges):
            i = int(rng.integers(0, n_along))
            j = (i + n_along // 2) % n_along
            a, b = i, (n_rows - 1) * n_along + j
            c = (n_rows - 1) * n_along + (j + 1) % n_along if (j + 1) < n_along else (n_rows - 1) * n_along + j - 1
            labels["long_edge"].append(len(faces))
            faces = np.vstack([faces, [[a, b, c]]])

    extra_v = [verts]
    extra_f = [faces]
    nv = len(verts)
    if bank.reflections:
        # mirror image of the upper rows below the waterline, detached from the bank
        r0 = max(1, n_rows // 2)
        sub = verts[r0 * n_along :].copy()
        sub[:, 2] = 2 * spec.waterline_z - sub[:, 2]
        sf = _strip_faces(n_along, n_rows - r0, nv)[:, ::-1]
        labels["reflection"].extend(range(sum(len(f) for f in extra_f), sum(len(f) for f in extra_f) + len(sf)))
        extra_v.append(sub)
        extra_f.append(sf)
        nv += len(sub)
    if bank.floating:
        # a small cloud fragment hovering over the crest
        k = int(rng.integers(0, max(1, n_along - 3)))
        c = rows[-1][k, :2]
        z = spec.waterline_z + bank.height + 5.0 + float(rng.uniform(0, 2))
        quad = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], float) * bank.resolution
        fv = np.column_stack([c + quad, np.full(4, z)])
        ff = np.array([[0, 1, 2], [0, 2, 3]]) + nv
        start = sum(len(f) for f in extra_f)
        labels["floating"].extend(range(start, start + 2))
        extra_v.append(fv)
        extra_f.append(ff)
        nv += 4
    verts = np.concatenate(extra_v)
    faces = np.concatenate(extra_f)
    # Pix4D-style local frame: utm = local + offset
    offset = (float(np.floor(toe[0, 0])), float(np.floor(toe[0, 1])), 0.0)
    local = verts - np.asarray(offset)
    return BankResult(TriMesh(local, faces, LOCAL), offset, toe, labels, n_clean)


# --------------------------------------------------------------------------
# survey


@dataclass
class SurveyOutput:
    depth_log: str
    geotags: str
    banks: list  # BankResult
    manifest: dict
    samples: list  # DepthSample
    truth_xy: np.ndarray  # jitter-free UTM positions
    truth_depth: np.ndarray
    path: np.ndarray  # UTM waypoints


def simulate_survey(spec: SynthLakeSpec) -> SurveyOutput:
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    poly = spec.polygon_utm()
    path = boustrophedon_path(poly, spec.lane_spacing)
    xy, arc = sample_path(path, spec.n_samples)
    bath = spec.bathymetry
    truth = bath.depth(xy[:, 0] - spec.center_easting, xy[:, 1] - spec.center_northing)
    jitter = rng.normal(0.0, spec.gps_sigma, size=xy.shape) if spec.gps_sigma > 0 else np.zeros_like(xy)
    noise = rng.normal(0.0, spec.depth_sigma, size=len(xy)) if spec.depth_sigma > 0 else np.zeros(len(xy))
    logged = np.maximum(truth + noise, 0.0)
    meas = xy + jitter
    lat, lon = geodesy.unproject(meas[:, 0], meas[:, 1], spec.zone, spec.hemisphere)
    t0 = 1_700_000_000.0
    times = t0 + np.arange(len(xy)) * 1.0
    samples = [
        DepthSample(float(la), float(lo), float(d), float(t))
        for la, lo, d, t in zip(np.atleast_1d(lat), np.atleast_1d(lon), logged, times)
    ]
    header = f"synthetic survey seed={spec.seed} kind={bath.kind}\ntimestamp,lat,lon,depth"
    log_text = format_depth_log(samples, header=header)
    section = np.minimum((arc * spec.sections).astype(int), spec.sections - 1)

    # geotagged photos along the path, every photo_spacing metres
    seg = np.linalg.norm(np.diff(path, axis=0), axis=1)
    n_photos = max(1, int(seg.sum() // spec.photo_spacing))
    pxy, parc = sample_path(path, n_photos)
    plat, plon = geodesy.unproject(pxy[:, 0], pxy[:, 1], spec.zone, spec.hemisphere)
    psec = np.minimum((parc * spec.sections).astype(int), spec.sections - 1)
    records = []
    for i in range(n_photos):
        failed = spec.failed_geotag_section is not None and psec[i] == spec.failed_geotag_section
        records.append(
            GeoTagRecord(
                f"IMG_{i:05d}",
                None if failed else float(np.atleast_1d(plat)[i]),
                None if failed else float(np.atleast_1d(plon)[i]),
                1.5,
                t0 + i * 5.0,
                failed,
            )
        )
    geotag_text = format_geotags(records)

    banks = [build_bank(spec, b, rng) for b in spec.banks]
    manifest = {
        "rng": RNG_ALGORITHM,
        "seed": spec.seed,
        "spec": json.loads(spec.to_json()),
        "bed": bath.describe(),
        "frame": str(spec.frame),
        "waterline_z": spec.waterline_z,
        "n_samples": len(samples),
        "log_bytes": len(log_text.encode("utf-8")),
        "log_sha256": hashlib.sha256(log_text.encode("utf-8")).hexdigest(),
        "truth_depth": [round(float(d), 12) for d in truth],
        "truth_easting": [round(float(x), 6) for x in xy[:, 0]],
        "truth_northing": [round(float(y), 6) for y in xy[:, 1]],
        "sample_section": section.tolist(),
        "depth_noise_bound": 6.0 * spec.depth_sigma,
        "geotags": {
            "n_records": n_photos,
            "failed_section": spec.failed_geotag_section,
            "record_section": psec.tolist(),
        },
        "banks": [
            {
                "file": f"bank_{i + 1}.ply",
                "offsets_file": f"bank_{i + 1}.offsets.txt",
                "offset": list(b.offset),
                "gap": spec.banks[i].gap,
                "toe_utm": np.round(b.toe, 6).tolist(),
                "n_faces": int(b.mesh.n_faces),
                "n_clean_faces": b.n_clean_faces,
                "artifact_faces": b.labels,
            }
            for i, b in enumerate(banks)
        ],
    }
    return SurveyOutput(log_text, geotag_text, banks, manifest, samples, xy, truth, path)


def write_survey(out: SurveyOutput, directory) -> list[Path]:
    """Materialise a survey: log, geotags, banks + offsets, manifest."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    written = []

    def put(name: str, data: bytes) -> None:
        p = d / name
        p.write_bytes(data)
        written.append(p)

    put("depth_log.txt", out.depth_log.encode("utf-8"))
    put("geotags.csv", out.geotags.encode("utf-8"))
    for i, b in enumerate(out.banks):
        p = d / f"bank_{i + 1}.ply"
        write_ply(p, b.mesh.vertices, b.mesh.faces, frame=b.mesh.frame, binary=True)
        written.append(p)
        put(f"bank_{i + 1}.offsets.txt", format_offsets(b.offset).encode("ascii"))
    put("manifest.json", (json.dumps(out.manifest, indent=1, sort_keys=True) + "\n").encode("utf-8"))
    return written


# --------------------------------------------------------------------------
# analytic meshes


def paraboloid_lake_mesh(radius: float, d0: float, n_rings: int = 64, n_sectors: int = 128, center=(0.0, 0.0), frame: Frame = LOCAL) -> TriMesh:
    """Closed water body of a paraboloid bowl: bed below, flat lid at z = 0, outward faces."""
    cx, cy = center
    verts = [(cx, cy, -d0)]
    for r in range(1, n_rings + 1):
        rad = radius * r / n_rings
        z = -d0 * (1 - (rad / radius) ** 2)
        for s in range(n_sectors):
            a = 2 * math.pi * s / n_sectors
            verts.append((cx + rad * math.cos(a), cy + rad * math.sin(a), z))
    lid_centre = len(verts)
    verts.append((cx, cy, 0.0))
    ring = lambda r, s: 1 + (r - 1) * n_sectors + (s % n_sectors)  # noqa: E731
    faces = []
    for s in range(n_sectors):
        faces.append((0, ring(1, s + 1), ring(1, s)))  # bed faces point down
    for r in range(1, n_rings):
        for s in range(n_sectors):
            a, b = ring(r, s), ring(r, s + 1)
            c, d = ring(r + 1, s), ring(r + 1, s + 1)
            faces.append((a, b, d))
            faces.append((a, d, c))
    # the outermost ring sits on z = 0 and doubles as the lid rim
    for s in range(n_sectors):
        faces.append((lid_centre, ring(n_rings, s), ring(n_rings, s + 1)))
    mesh = TriMesh(np.asarray(verts), np.asarray(faces), frame)
    # fix the bed winding to point outward (down) if the ring order made it up
    from .volume import signed_volume

    if signed_volume(mesh) < 0:
        mesh = mesh.flipped()
    return mesh
