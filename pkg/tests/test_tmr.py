import numpy as np
import pytest

from bsim.anatomy import (Anthropometry, StageConfig, build_initial_breast,
                          build_thorax, stage_config)
from bsim.errors import MeasurementError
from bsim.mesh import Plane, TriMesh
from bsim.shapes import icosphere
from bsim.tmr import (base_perimeter, locate_nipple, report, section_perimeter,
                      semi_arcs)

from test_anatomy import flat_limit, volunteer


@pytest.fixture(scope="module")
def srg_build():
    return build_initial_breast(volunteer(), edge_target=1.4)


@pytest.fixture(scope="module")
def hemi_build():
    return build_initial_breast(flat_limit(), edge_target=0.1)


def plain_stage(stage_id="SRG"):
    return StageConfig(id=stage_id, g_dir=(0, 0, -1), support=0.2, obstacles=[])


# ---------------------------------------------------------------- nipple

def test_nipple_on_symmetry_plane(srg_build):
    mk = locate_nipple(srg_build.mesh, srg_build.thorax)
    pos = srg_build.mesh.marker_position(mk)
    assert abs(pos[0]) < 1e-6
    assert abs(pos[1]) < 1e-6


def test_nipple_topmost_on_hemisphere(hemi_build):
    mk = locate_nipple(hemi_build.mesh, hemi_build.thorax)
    pos = hemi_build.mesh.marker_position(mk)
    top = hemi_build.mesh.vertices[:, 2].max()
    assert pos[2] == pytest.approx(top, abs=1e-12)


def test_nipple_tracks_same_vertex_under_translation(srg_build):
    m = srg_build.mesh
    mk1 = locate_nipple(m, srg_build.thorax)
    shifted = m.with_vertices(m.vertices + np.array([0.0, 5.0, 0.0]))
    mk2 = locate_nipple(shifted, srg_build.thorax)
    # translation along the cylinder axis leaves the distance field unchanged
    assert mk1.facet == mk2.facet and mk1.bary == mk2.bary


# ---------------------------------------------------------------- semi arcs

def test_semi_arcs_symmetric_dome(srg_build):
    arcs = semi_arcs(srg_build.mesh, srg_build.mesh.marker_position("nipple"))
    assert arcs["h_left"] == pytest.approx(arcs["h_right"], rel=0.005)
    assert arcs["v_bottom"] == pytest.approx(arcs["v_top"], rel=0.005)


def test_semi_arcs_hemisphere_quarter_circles(hemi_build):
    nipple = hemi_build.mesh.marker_position("nipple")
    arcs = semi_arcs(hemi_build.mesh, nipple)
    for name, value in arcs.items():
        assert value == pytest.approx(np.pi / 2.0, rel=0.01), name


def test_semi_arcs_additive(srg_build):
    from bsim.section import plane_section
    m = srg_build.mesh
    p = m.marker_position("nipple")
    arcs = semi_arcs(m, p)
    horiz = plane_section(m, Plane(p, [0.0, 1.0, 0.0]), role="breast")
    full = max(horiz, key=lambda c: c.length).length
    assert arcs["h_left"] + arcs["h_right"] == pytest.approx(full, rel=1e-9)
    vert = plane_section(m, Plane(p, [1.0, 0.0, 0.0]), role="breast")
    full_v = max(vert, key=lambda c: c.length).length
    assert arcs["v_bottom"] + arcs["v_top"] == pytest.approx(full_v, rel=1e-9)


def test_semi_arcs_rigid_motion_invariant(hemi_build):
    m = hemi_build.mesh
    nip = m.marker_position("nipple")
    arcs = semi_arcs(m, nip)
    t = np.array([4.0, -2.0, 7.0])
    m2 = m.with_vertices(m.vertices + t)
    arcs2 = semi_arcs(m2, nip + t)
    for k in arcs:
        assert arcs2[k] == pytest.approx(arcs[k], rel=1e-9)


def test_arc_not_anchored():
    m = icosphere(2)  # all facets breast, no cap: every section is closed
    with pytest.raises(MeasurementError, match="arc not anchored"):
        semi_arcs(m, np.array([0.0, 0.0, 1.0]))


# ---------------------------------------------------------------- perimeters

def test_section_perimeter_equator():
    m = icosphere(3)
    assert section_perimeter(m, Plane([0, 0, 0], [0, 0, 1.0])) == pytest.approx(
        2 * np.pi, rel=0.01)


def test_section_perimeter_base_plane(hemi_build):
    # the hemisphere's base ring is planar: asking for that plane returns the
    # measured base perimeter
    m = hemi_build.mesh
    plane = Plane([0.0, 0.0, 1e6], [0.0, 0.0, 1.0])
    got = section_perimeter(m, plane)
    assert got == pytest.approx(base_perimeter(m), rel=1e-12)
    assert got == pytest.approx(2 * np.pi, abs=0.01 * np.pi)


def test_section_perimeter_missing_plane():
    m = icosphere(1)
    with pytest.raises(MeasurementError, match="no section"):
        section_perimeter(m, Plane([0, 0, 9.0], [0, 0, 1.0]))


def test_base_perimeter_volunteer(srg_build):
    assert base_perimeter(srg_build.mesh) == pytest.approx(46.0, abs=0.23)


# ---------------------------------------------------------------- report

def test_report_fields(srg_build):
    rep = report(srg_build.mesh, plain_stage(), mass=700.0, thorax=srg_build.thorax)
    assert rep.stage == "SRG"
    assert rep.density_g_cm3 == 700.0 / rep.volume_cm3  # bitwise, computed that way
    assert rep.volume_cm3 == pytest.approx(700.0, abs=7.0)
    assert rep.contact_extent is None
    assert rep.nipple_marker is not None
    assert np.allclose(rep.nipple, rep.nipple_marker, atol=1e-9)
    assert rep.base_perimeter_cm == pytest.approx(46.0, abs=0.23)
    assert rep.area_cm2 > 0.0


def test_report_density_examples(srg_build):
    rep = report(srg_build.mesh, plain_stage(), mass=700.0, thorax=srg_build.thorax)
    assert rep.density_g_cm3 == pytest.approx(1.0, abs=0.02)
    # the paper's post-compression bookkeeping: 700 g over 680 cm^3
    assert 700.0 / 680.0 == pytest.approx(1.0294, abs=1e-4)


def test_report_contact_patch(srg_build):
    anthro = volunteer()
    thorax, wall = build_thorax(anthro)
    # a table touching the dome within 1 cm of the apex: small contact patch
    lat = stage_config("LAT", anthro, thorax, wall,
                       apex_height=srg_build.apex_height,
                       overrides={"d_table": srg_build.apex_height})
    rep = report(srg_build.mesh, lat, mass=700.0, thorax=thorax)
    assert rep.contact_extent is not None
    w, h = rep.contact_extent
    assert w < 18.0 and h < 24.0
    assert not rep.contact_exceeds_table
