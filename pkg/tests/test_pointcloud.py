import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lakemesh import pointcloud as pc
from lakemesh.errors import DegenerateGeometryError, FrameError, ParameterError, PreconditionError, ResolutionError
from lakemesh.ingest import DepthSample, parse_depth_log
from lakemesh.mesh import Frame
from lakemesh.survey_sim import paraboloid_preset, simulate_survey


def brute_force_hull(pts):
    """Vertex set of the hull: endpoints of every pair that supports all points on one side."""
    keep = set()
    n = len(pts)
    for i, j in itertools.permutations(range(n), 2):
        d = pts[j] - pts[i]
        cross = d[0] * (pts[:, 1] - pts[i, 1]) - d[1] * (pts[:, 0] - pts[i, 0])
        if np.all(cross >= 0):
            # only strict corners: skip points lying inside the supporting segment
            on = np.flatnonzero(cross == 0)
            if not d.any():
                continue
            t = ((pts[on] - pts[i]) @ d) / (d @ d)
            if t.min() >= 0 and t.max() <= 1:
                keep.update((i, j))
    return {tuple(pts[k]) for k in keep}


@pytest.fixture(scope="module")
def survey():
    spec = paraboloid_preset()
    return spec, simulate_survey(spec)


def test_to_utm_cloud_sign_and_duplicates():
    samples = [DepthSample(30.0, -99.0, 2.5)]
    cloud = pc.to_utm_cloud(samples)
    assert cloud.points[0, 2] == -2.5 and cloud.normals is None
    assert cloud.frame == Frame.utm(14, "N")
    two = pc.to_utm_cloud([DepthSample(30.0, -99.0, 1.0), DepthSample(30.0, -99.0, 3.0)], waterline_z=0.0)
    assert len(two) == 2
    assert np.array_equal(two.points[0, :2], two.points[1, :2])
    assert two.points[:, 2].tolist() == [-1.0, -3.0]


def test_to_utm_cloud_mixed_hemispheres():
    with pytest.raises(FrameError):
        pc.to_utm_cloud([DepthSample(0.5, 3.0, 1.0), DepthSample(-0.5, 3.0, 1.0)])


def test_survey_zone_is_hull_centroid_zone():
    # mostly in zone 14 with a few points across the boundary in zone 15
    samples = [DepthSample(30.0, -96.5 + 0.01 * i, 1.0) for i in range(60)]
    assert pc.survey_zone(samples) == (14, "N")
    cloud = pc.to_utm_cloud(samples)
    assert cloud.frame.zone == 14
    assert np.all(np.diff(cloud.points[:, 0]) > 0)


def test_synthetic_cloud_within_noise_bound(survey):
    spec, out = survey
    samples, _ = parse_depth_log(out.depth_log)
    cloud = pc.to_utm_cloud(samples)
    assert len(cloud) == len(samples)
    d = cloud.points[:, :2] - spec.center
    bed = -spec.bathymetry.depth(d[:, 0], d[:, 1])
    # gps jitter moves the sample sideways on a sloped bed; allow for that too
    slope = 2 * spec.bathymetry.d0 / spec.bathymetry.radius
    bound = out.manifest["depth_noise_bound"] + 6 * spec.gps_sigma * slope + 1e-3
    assert np.max(np.abs(cloud.points[:, 2] - bed)) <= bound


def test_hull_square_with_centre():
    pts = np.array([[0, 0], [1, 0], [1, 1], [0, 1], [0.5, 0.5]], float)
    hull = pc.convex_hull_2d(pts)
    assert {tuple(v) for v in hull.vertices} == {(0, 0), (1, 0), (1, 1), (0, 1)}
    assert pc.signed_area(hull.vertices) > 0


def test_hull_triangle_ccw():
    hull = pc.convex_hull_2d(np.array([[0, 0], [0, 3], [3, 0]], float))
    assert len(hull.vertices) == 3 and pc.signed_area(hull.vertices) == pytest.approx(4.5)


def test_hull_degenerate():
    with pytest.raises(DegenerateGeometryError):
        pc.convex_hull_2d(np.array([[0, 0], [1, 1]], float))
    with pytest.raises(DegenerateGeometryError):
        pc.convex_hull_2d(np.array([[0, 0], [1, 1], [2, 2], [3, 3]], float))


@pytest.mark.parametrize("seed", range(8))
def test_hull_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    # integer lattice points force plenty of collinear ties
    pts = rng.integers(0, 15, size=(200, 2)).astype(float)
    hull = pc.convex_hull_2d(pts)
    assert {tuple(v) for v in hull.vertices} == brute_force_hull(pts)
    assert np.all(hull.contains(pts, margin=1e-9))


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.integers(-20, 20), st.integers(-20, 20)), min_size=3, max_size=40))
def test_hull_property(points):
    pts = np.array(points, float)
    try:
        hull = pc.convex_hull_2d(pts)
    except DegenerateGeometryError:
        return
    assert {tuple(v) for v in hull.vertices} == brute_force_hull(pts)


def test_centroid_simple_shapes():
    sq = pc.Polygon2D(np.array([[0, 0], [1, 0], [1, 1], [0, 1]], float))
    assert pc.hull_centroid(sq) == pytest.approx((0.5, 0.5))
    tri = pc.Polygon2D(np.array([[0, 0], [3, 0], [0, 3]], float))
    assert pc.hull_centroid(tri) == pytest.approx((1.0, 1.0))


def test_centroid_monte_carlo_oracle():
    rng = np.random.default_rng(5)
    hull = pc.convex_hull_2d(rng.uniform(0, 10, size=(25, 2)))
    samples = rng.uniform(0, 10, size=(1_000_000, 2))
    inside = samples[hull.contains(samples)]
    cx, cy = pc.hull_centroid(hull)
    assert abs(cx - inside[:, 0].mean()) < 1e-2
    assert abs(cy - inside[:, 1].mean()) < 1e-2


def test_centroid_at_utm_magnitudes():
    base = np.array([[0, 0], [100, 0], [100, 50], [0, 50]], float)
    c0 = np.array(pc.hull_centroid(pc.Polygon2D(base)))
    c1 = np.array(pc.hull_centroid(pc.Polygon2D(base + [5e5, 3.4e6])))
    assert np.allclose(c1 - [5e5, 3.4e6], c0, atol=1e-8)


def test_polygon_validation():
    with pytest.raises(DegenerateGeometryError):
        pc.Polygon2D(np.array([[0, 0], [1, 0]], float))
    with pytest.raises(DegenerateGeometryError):
        pc.Polygon2D(np.array([[0, 0], [0, 1], [1, 1], [1, 0]], float))  # clockwise
    with pytest.raises(DegenerateGeometryError):
        pc.Polygon2D(np.array([[0, 0], [1, 1], [1, 0], [0, 1]], float))  # bow tie


def test_boundary_distance():
    sq = pc.Polygon2D(np.array([[0, 0], [4, 0], [4, 4], [0, 4]], float))
    d = pc.boundary_distance(sq, np.array([[2, 2], [1, 2], [6, 2]], float))
    assert d.tolist() == pytest.approx([2, 1, 2])


def test_dedupe_averages_z():
    pts = np.array([[0, 0, -1], [5, 5, -2], [0, 0, -3], [0, 5e-7, -5]], float)
    out = pc.dedupe(pc.PointCloud(pts, None, Frame()))
    assert out.points.tolist() == [[0, 0, -3], [5, 5, -2]]


def cloud_from(xyz):
    return pc.PointCloud(np.asarray(xyz, float), None, Frame())


def test_depth_map_single_point():
    c = cloud_from([[10.0, 20.0, -3.0]])
    f = pc.rasterize_depth_map(c, 1.0, idw_radius=0.5)
    valid = ~np.isnan(f.values)
    assert valid.sum() == 1 and f.values[valid][0] == -3.0


def test_depth_map_constant_depth():
    rng = np.random.default_rng(0)
    xy = rng.uniform(0, 30, size=(300, 2))
    f = pc.rasterize_depth_map(cloud_from(np.column_stack([xy, np.full(300, -2.0)])), 1.0)
    v = f.values[~np.isnan(f.values)]
    assert len(v) > 0 and np.all(v == -2.0)


def test_depth_map_resolution_error():
    c = cloud_from([[0, 0, -1], [1, 1, -1], [2, 0, -1]])
    with pytest.raises(ResolutionError):
        pc.rasterize_depth_map(c, 10.0)
    with pytest.raises(ParameterError):
        pc.rasterize_depth_map(c, 0.0)


def test_depth_map_paraboloid_rms(survey):
    spec, out = survey
    cloud = pc.to_utm_cloud(parse_depth_log(out.depth_log)[0])
    f = pc.rasterize_depth_map(cloud, 1.0)
    nx, ny = f.values.shape
    gx = f.origin[0] + np.arange(nx) - spec.center[0]
    gy = f.origin[1] + np.arange(ny) - spec.center[1]
    X, Y = np.meshgrid(gx, gy, indexing="ij")
    truth = -spec.bathymetry.depth(X, Y)
    valid = ~np.isnan(f.values)
    rms = np.sqrt(np.mean((f.values[valid] - truth[valid]) ** 2))
    assert rms <= 0.1


def test_depth_map_translation_equivariant():
    rng = np.random.default_rng(2)
    pts = np.column_stack([rng.uniform(0, 20, (200, 2)), rng.uniform(-3, -1, 200)])
    a = pc.rasterize_depth_map(cloud_from(pts), 1.0)
    b = pc.rasterize_depth_map(cloud_from(pts + [1024.0, 2048.0, 0.0]), 1.0)
    assert np.allclose(b.origin - a.origin, [1024.0, 2048.0])
    assert np.allclose(a.values, b.values, equal_nan=True, atol=1e-9)


def test_ascii_grid_round_trip(tmp_path):
    vals = np.array([[1.0, np.nan, -2.5], [0.25, 3.0, 4.0]])
    f = pc.ScalarField([100.0, 200.0], 0.5, vals)
    pc.write_ascii_grid(f, tmp_path / "g.asc")
    text = (tmp_path / "g.asc").read_text().splitlines()
    assert text[0] == "ncols 2" and text[1] == "nrows 3"
    assert text[2] == "xllcorner 99.75" and text[5].startswith("NODATA_value")
    back = pc.read_ascii_grid(tmp_path / "g.asc")
    assert np.allclose(back.values, vals, equal_nan=True)
    assert np.allclose(back.origin, f.origin)


def test_normals_flat_plane():
    rng = np.random.default_rng(0)
    pts = np.column_stack([rng.uniform(0, 10, (200, 2)), np.full(200, -2.0)])
    n = pc.estimate_normals(cloud_from(pts), 8).normals
    assert np.allclose(n, [0, 0, 1], atol=1e-6)


def test_normals_slope_45():
    rng = np.random.default_rng(1)
    xy = rng.uniform(0, 10, (300, 2))
    n = pc.estimate_normals(cloud_from(np.column_stack([xy, xy[:, 0]])), 8).normals
    assert np.allclose(n, [-np.sqrt(0.5), 0, np.sqrt(0.5)], atol=0.02)


def test_normals_degenerate_fallback():
    pts = np.column_stack([np.arange(10.0), np.zeros(10), np.zeros(10)])  # collinear
    n = pc.estimate_normals(cloud_from(pts), 4).normals
    assert np.array_equal(n, np.tile([0.0, 0.0, 1.0], (10, 1)))


def test_normals_errors():
    with pytest.raises(ParameterError):
        pc.estimate_normals(cloud_from(np.zeros((10, 3))), 2)
    with pytest.raises(PreconditionError):
        pc.estimate_normals(cloud_from(np.random.default_rng(0).normal(size=(5, 3))), 8)


def test_normals_paraboloid_angular_error(survey):
    spec, out = survey
    cloud = pc.estimate_normals(pc.dedupe(pc.to_utm_cloud(parse_depth_log(out.depth_log)[0])), 16)
    d = cloud.points[:, :2] - spec.center
    b = spec.bathymetry
    # z = -d0 (1 - r^2/R^2): gradient (2 d0 x / R^2, 2 d0 y / R^2)
    g = 2 * b.d0 / b.radius**2 * d
    truth = np.column_stack([-g, np.ones(len(g))])
    truth /= np.linalg.norm(truth, axis=1, keepdims=True)
    cos = np.clip(np.einsum("ij,ij->i", truth, cloud.normals), -1, 1)
    assert np.degrees(np.arccos(cos)).mean() <= 5.0
    assert np.allclose(np.linalg.norm(cloud.normals, axis=1), 1.0, atol=1e-9)
    assert np.all(cloud.normals[:, 2] > 0)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_normals_always_unit_and_up(seed):
    rng = np.random.default_rng(seed)
    pts = rng.normal(size=(40, 3)) * [5, 5, rng.uniform(0, 5)]
    n = pc.estimate_normals(cloud_from(pts), 6).normals
    assert np.all(np.abs(np.linalg.norm(n, axis=1) - 1) <= 1e-9)
    assert np.all(n[:, 2] > 0)


def test_scalar_field_sampling():
    f = pc.ScalarField([0.0, 0.0, 0.0], 0.5, np.arange(27, dtype=float).reshape(3, 3, 3))
    assert f.sample([[0.5, 0.5, 0.5]])[0] == 13.0
    assert f.sample([[0.25, 0.0, 0.0]])[0] == pytest.approx(4.5)
    with pytest.raises(PreconditionError):
        f.sample([[2.0, 0, 0]])


def test_cloud_file_round_trip(tmp_path):
    c = pc.PointCloud(np.array([[1.0, 2, 3], [4, 5, 6]]), np.array([[0, 0, 1.0], [0, 0, 1.0]]), Frame.utm(14, "N"))
    pc.write_cloud(c, tmp_path / "c.ply")
    back = pc.read_cloud(tmp_path / "c.ply")
    assert np.array_equal(back.points, c.points) and np.array_equal(back.normals, c.normals)
    assert back.frame == c.frame
