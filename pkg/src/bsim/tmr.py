"""The virtual tape-measure: arcs, perimeters, nipple location and per-stage
measurement reports taken on the simulated surface.

Tape semantics: a taut tape over a convex body follows the plane section, so
arcs are plane-section polylines over the breast facets, clipped where the
breast meets the base cap. The four semi-arcs split the horizontal and
vertical sections at the nipple and sum exactly to the full arcs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .anatomy import StageConfig, ThoraxModel
from .errors import MeasurementError
from .mesh import Marker, Plane, TriMesh
from .section import plane_section, split_at_point

OX = np.array([1.0, 0.0, 0.0])
OY = np.array([0.0, 1.0, 0.0])
CONTACT_MEASURE_TOL = 1e-6  # cm


@dataclass
class MeasurementReport:
    """One stage's tape-measure readings (cgs units)."""

    stage: str
    area_cm2: float
    volume_cm3: float
    mass_g: float
    density_g_cm3: float
    base_perimeter_cm: float
    semi_arcs: dict
    nipple: tuple
    nipple_marker: tuple | None = None
    contact_extent: tuple | None = None
    contact_exceeds_table: bool = False


def base_perimeter(mesh: TriMesh) -> float:
    """Length of the boundary ring between breast and base-cap facets."""
    ring = mesh.base_ring_edges()
    if not ring:
        raise MeasurementError("mesh has no breast/base-cap boundary ring")
    v = mesh.vertices
    return float(sum(np.linalg.norm(v[a] - v[b]) for a, b in ring))


def locate_nipple(mesh: TriMesh, thorax: ThoraxModel) -> Marker:
    """Free vertex farthest from the thorax surface (ties: lowest index)."""
    free_idx = np.where(mesh.free)[0]
    if len(free_idx) == 0:
        raise MeasurementError("mesh has no free vertices")
    d = thorax.signed_distance(mesh.vertices[free_idx])
    vertex = int(free_idx[int(np.argmax(d))])
    facet = int(np.where((mesh.facets == vertex).any(axis=1))[0][0])
    slot = int(np.where(mesh.facets[facet] == vertex)[0][0])
    bary = [0.0, 0.0, 0.0]
    bary[slot] = 1.0
    return Marker(facet, tuple(bary), "nipple-located")


def _nipple_point(mesh: TriMesh, nipple) -> np.ndarray:
    if isinstance(nipple, Marker):
        return mesh.marker_position(nipple)
    return np.asarray(nipple, dtype=float).reshape(3)


def _arc_through(mesh: TriMesh, plane: Plane, point: np.ndarray):
    """Open breast-facet section curve nearest the given point."""
    curves = plane_section(mesh, plane, role="breast")
    if not curves:
        raise MeasurementError("arc not anchored: plane misses the breast surface")
    best = min(curves, key=lambda c: float(np.linalg.norm(c.points - point, axis=1).min()))
    if best.closed:
        raise MeasurementError("arc not anchored: section does not reach the base boundary")
    return best


def semi_arcs(mesh: TriMesh, nipple) -> dict:
    """The four semi-arc lengths {h_left, h_right, v_bottom, v_top} in cm.

    Horizontal arc: section by the plane normal to Oy through the nipple;
    vertical arc: normal to Ox. Each is split at the nipple; the left half is
    the one anchored at larger x (patient's left), the bottom half at
    smaller y (caudal).
    """
    p = _nipple_point(mesh, nipple)
    horizontal = _arc_through(mesh, Plane(p, OY), p)
    vertical = _arc_through(mesh, Plane(p, OX), p)
    h_first, h_second = split_at_point(horizontal, p)
    v_first, v_second = split_at_point(vertical, p)
    if horizontal.points[0][0] >= horizontal.points[-1][0]:
        h_left, h_right = h_first, h_second
    else:
        h_left, h_right = h_second, h_first
    if vertical.points[0][1] <= vertical.points[-1][1]:
        v_bottom, v_top = v_first, v_second
    else:
        v_bottom, v_top = v_second, v_first
    return {"h_left": h_left, "h_right": h_right, "v_bottom": v_bottom, "v_top": v_top}


def section_perimeter(mesh: TriMesh, plane: Plane) -> float:
    """Longest closed breast-section length, or the base-ring length when the
    plane contains the base boundary."""
    ring = mesh.base_ring_edges()
    if ring:
        ring_verts = np.unique(np.asarray(ring).reshape(-1))
        if np.abs(plane.signed_distance(mesh.vertices[ring_verts])).max() <= CONTACT_MEASURE_TOL:
            return base_perimeter(mesh)
    closed = [c for c in plane_section(mesh, plane, role="breast") if c.closed]
    if not closed:
        raise MeasurementError("no section: plane does not cut a closed curve on the breast")
    return max(c.length for c in closed)


def _contact_patch(mesh: TriMesh, stage: StageConfig):
    table = next((o for o in stage.obstacles if o.label == "table"), None)
    if table is None:
        return None, False
    d = table.plane.signed_distance(mesh.vertices)
    touching = mesh.free & (np.abs(d) <= CONTACT_MEASURE_TOL)
    if not np.any(touching):
        return (0.0, 0.0), False
    n = table.plane.normal
    e1 = OX - (OX @ n) * n
    if np.linalg.norm(e1) < 1e-9:
        e1 = OY - (OY @ n) * n
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(n, e1)
    pts = mesh.vertices[touching] - table.plane.point
    u, w = pts @ e1, pts @ e2
    extent = (float(u.max() - u.min()), float(w.max() - w.min()))
    dims = stage.table_dims or (np.inf, np.inf)
    exceeds = bool(min(extent) > min(dims) or max(extent) > max(dims))
    return extent, exceeds


def report(mesh: TriMesh, stage: StageConfig, mass: float, thorax: ThoraxModel) -> MeasurementReport:
    """All tape-measure quantities for one stage; density = mass / volume."""
    volume = mesh.enclosed_volume()
    located = locate_nipple(mesh, thorax)
    nipple_pos = mesh.marker_position(located)
    arcs = semi_arcs(mesh, nipple_pos)
    advected = None
    for mk in mesh.markers:
        if mk.label == "nipple":
            advected = tuple(mesh.marker_position(mk))
            break
    extent, exceeds = _contact_patch(mesh, stage)
    return MeasurementReport(
        stage=stage.id,
        area_cm2=mesh.total_area(role="breast"),
        volume_cm3=volume,
        mass_g=mass,
        density_g_cm3=mass / volume,
        base_perimeter_cm=base_perimeter(mesh),
        semi_arcs=arcs,
        nipple=tuple(nipple_pos),
        nipple_marker=advected,
        contact_extent=extent,
        contact_exceeds_table=exceeds,
    )
