import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lakemesh import volume as vol
from lakemesh.errors import NotWatertightError, ParameterError, PreconditionError
from lakemesh.marching import marching_cubes
from lakemesh.mesh import TriMesh
from lakemesh.meshops import merge
from lakemesh.survey_sim import paraboloid_lake_mesh


def box(lo=(0, 0, 0), hi=(1, 1, 1)):
    (x0, y0, z0), (x1, y1, z1) = lo, hi
    v = np.array([[x, y, z] for z in (z0, z1) for y in (y0, y1) for x in (x0, x1)], float)
    f = np.array([[0, 2, 1], [1, 2, 3], [4, 5, 6], [5, 7, 6], [0, 1, 4], [1, 5, 4],
                  [2, 6, 3], [3, 6, 7], [0, 4, 2], [2, 4, 6], [1, 3, 5], [3, 7, 5]])
    return TriMesh(v, f)


def mc_sphere(r=10.0, s=0.25):
    ax = np.arange(-r - 2 * s, r + 2 * s + s / 2, s)
    X, Y, Z = np.meshgrid(ax, ax, ax, indexing="ij")
    return marching_cubes(np.sqrt(X**2 + Y**2 + Z**2) - r, 0.0, (ax[0],) * 3, s)


@pytest.fixture(scope="module")
def sphere():
    return mc_sphere()


def test_cube_volume_and_flip():
    assert vol.enclosed_volume(box()) == 1.0
    assert vol.enclosed_volume(box().flipped()) == -1.0


def test_sphere_volume(sphere):
    assert vol.enclosed_volume(sphere) == pytest.approx(4 / 3 * math.pi * 1000, rel=0.02)


def test_open_mesh_rejected():
    b = box()
    with pytest.raises(NotWatertightError) as exc:
        vol.enclosed_volume(TriMesh(b.vertices, b.faces[:-1]))
    assert exc.value.boundary_edges == 3
    with pytest.raises(NotWatertightError):
        vol.capacity_at_level(TriMesh(b.vertices, b.faces[:-1]), 0.5, 0.1)


def test_translation_invariance_at_utm_scale(sphere):
    v0 = vol.enclosed_volume(sphere)
    v1 = vol.enclosed_volume(sphere.translated([1e4, 1e4, 1e2]))
    assert abs(v1 - v0) <= 1e-9 * abs(v0)
    far = sphere.translated([5e5, 3.4e6, 0.0])
    assert abs(vol.enclosed_volume(far) - v0) <= 1e-9 * abs(v0)


@settings(max_examples=40, deadline=None)
@given(st.floats(-1e6, 1e6), st.floats(-1e7, 1e7), st.floats(-1e3, 1e3))
def test_box_translation_property(dx, dy, dz):
    b = box((0, 0, 0), (3.0, 2.0, 0.5))
    assert vol.enclosed_volume(b.translated([dx, dy, dz])) == pytest.approx(3.0, rel=1e-9)


def test_capacity_half_cube():
    s = 0.1
    c = vol.capacity_at_level(box(), 0.5, s)
    assert abs(c.volume - 0.5) <= s * 1.0
    assert c.error_bound == pytest.approx(0.5 * s * 1.0)


def test_capacity_clamps():
    s = 0.1
    assert vol.capacity_at_level(box(), 0.0, s).volume == 0.0
    assert vol.capacity_at_level(box(), -5.0, s).volume == 0.0
    full = vol.capacity_at_level(box(), 1.0, s)
    assert abs(full.volume - 1.0) <= full.error_bound
    assert vol.capacity_at_level(box(), 7.0, s).volume == full.volume


def test_capacity_monotone(sphere):
    levels = np.linspace(-11, 11, 23)
    curve = vol.stage_storage_curve(sphere, levels, 0.5)
    assert np.all(np.diff(curve.capacities) >= 0)
    assert curve.capacities[0] == 0.0


def test_capacity_halving_convergence():
    mesh = paraboloid_lake_mesh(20.0, 3.0, 48, 96)
    exact = vol.enclosed_volume(mesh)
    prev = vol.capacity_at_level(mesh, 0.0, 0.5)
    for s in (0.25, 0.125):
        cur = vol.capacity_at_level(mesh, 0.0, s)
        assert abs(cur.volume - prev.volume) < prev.error_bound
        assert abs(cur.volume - exact) <= cur.error_bound + 0.01 * exact
        prev = cur


def test_column_on_vertex_is_counted_once():
    # columns at odd multiples of s/2 pass exactly through these box corners and edges
    s = 0.5
    b = box((0.25, 0.25, 0.0), (1.75, 1.25, 1.0))
    c = vol.capacity_at_level(b, 2.0, s)
    assert c.volume == pytest.approx(1.5, abs=c.error_bound + 1e-12)


def test_paraboloid_stage_storage():
    r, d0 = 50.0, 4.0
    mesh = paraboloid_lake_mesh(r, d0)
    curve = vol.stage_storage_curve(mesh, [-4.0, -2.0, 0.0], 0.25)
    v = dict(curve.samples())
    assert v[-4.0] == 0.0
    assert v[0.0] == pytest.approx(5000 * math.pi, rel=0.05)
    assert v[-2.0] / v[0.0] == pytest.approx(0.25, abs=0.02)


def test_capacity_matches_divergence_volume():
    mesh = paraboloid_lake_mesh(30.0, 4.0)
    s = 0.25
    exact = vol.enclosed_volume(mesh)
    c = vol.capacity_at_level(mesh, 0.0, s)
    layer = s * vol.plan_area(mesh)
    assert abs(c.volume - exact) <= 2 * layer


def test_plan_area():
    assert vol.plan_area(box((0, 0, 0), (2, 3, 1))) == pytest.approx(6.0)


def test_single_level_curve():
    curve = vol.stage_storage_curve(box(), [0.5], 0.1)
    assert len(curve.samples()) == 1


def test_curve_validation():
    with pytest.raises(ParameterError):
        vol.stage_storage_curve(box(), [0.0, -1.0], 0.1)
    with pytest.raises(ParameterError):
        vol.stage_storage_curve(box(), [0.0, 0.0], 0.1)
    with pytest.raises(ParameterError):
        vol.stage_storage_curve(box(), [], 0.1)
    with pytest.raises(ParameterError):
        vol.capacity_at_level(box(), 0.0, 0.0)


def test_two_shells_rejected():
    two = merge([box(), box((3, 0, 0), (4, 1, 1))])
    assert vol.enclosed_volume(two) == pytest.approx(2.0)
    with pytest.raises(PreconditionError):
        vol.capacity_at_level(two, 0.5, 0.1)


def test_csv_round_trip(tmp_path):
    curve = vol.stage_storage_curve(box(), [0.25, 0.5, 1.0], 0.1)
    text = curve.to_csv()
    lines = text.splitlines()
    assert lines[0].startswith("# capacity:") and "level_m,capacity_m3" in lines
    assert np.allclose(vol.read_curve_csv(text), curve.samples(), atol=1e-6)
    curve.write(tmp_path / "c.csv")
    assert vol.read_curve_csv(tmp_path / "c.csv") == vol.read_curve_csv(text)
    plot = curve.to_plot_data().splitlines()
    assert len(plot) == 4 and len(plot[1].split()) == 3


def test_curve_invariants():
    with pytest.raises(PreconditionError):
        vol.StageStorageCurve([0.0, 1.0], [2.0, 1.0], [0.0, 0.0], 0.1)
