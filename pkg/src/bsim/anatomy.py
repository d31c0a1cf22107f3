"""Tape-measure anthropometry to geometry: thorax cylinder, initial breast
mesh, and per-stage configurations.

Coordinate frame: Ox points to the patient's left, Oy cranial, Oz anterior.
The thorax is an elliptic cylinder with axis along Oy and cross-section
semi-axes (a, b) in the Ox-Oz plane. The breast base is a circle drawn in
the cylinder's unrolled (arclength, y) coordinates, so its length on the
surface equals the measured base perimeter; the dome over it is a spherical
cap profile along the local cylinder normal whose height is solved so the
enclosed volume matches the measured rest volume.

The stage sequence is SRG (supine, supported), STU (standing), LAT (breast
laid on the table).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import ellipeinc

from .errors import BuildError
from .mesh import Marker, Plane, TriMesh
from .solver import Obstacle

STAGES = ("SRG", "STU", "LAT")
TABLE_DIMS = (18.0, 24.0)  # cm, standard mammography table

STAGE_GRAVITY = {
    "SRG": (0.0, 0.0, -1.0),  # supine: gravity pulls posterior
    "STU": (0.0, -1.0, 0.0),  # standing: gravity pulls caudal
    "LAT": (0.0, 0.0, 1.0),   # laid on the table (body frame): anterior
}
STAGE_SUPPORT = {"SRG": 0.2, "STU": 1.0, "LAT": 1.0}


def ellipse_perimeter(a: float, b: float) -> float:
    """Ramanujan's second approximation."""
    h = ((a - b) / (a + b)) ** 2
    return np.pi * (a + b) * (1.0 + 3.0 * h / (10.0 + np.sqrt(4.0 - 3.0 * h)))


@dataclass
class Anthropometry:
    """Tape-measure inputs, cm / g / cm^3."""

    thorax_perimeter: float
    thorax_semi_axes: tuple
    base_perimeter_supported: float
    base_perimeter_unsupported: float
    breast_mass: float
    rest_volume: float
    base_center: tuple = (0.0, 0.0, 0.0)
    stage_targets: dict = field(default_factory=dict)

    def __post_init__(self):
        lengths = dict(thorax_perimeter=self.thorax_perimeter,
                       base_perimeter_supported=self.base_perimeter_supported,
                       base_perimeter_unsupported=self.base_perimeter_unsupported,
                       breast_mass=self.breast_mass, rest_volume=self.rest_volume)
        for name, value in lengths.items():
            if not value > 0.0:
                raise ValueError(f"{name} must be positive")
        a, b = self.thorax_semi_axes
        if a <= 0.0 or b <= 0.0:
            raise ValueError("thorax semi-axes must be positive")
        if self.base_perimeter_supported > self.base_perimeter_unsupported:
            raise ValueError("perimeter ordering: base_perimeter_supported must not "
                             "exceed base_perimeter_unsupported")


class ThoraxModel:
    """Elliptic cylinder x = a sin(theta), z = b cos(theta), axis along Oy.

    theta = 0 is the anterior apex; arclength s(theta) is measured from it.
    """

    def __init__(self, a: float, b: float, base_center=(0.0, 0.0, 0.0)):
        self.a = float(a)
        self.b = float(b)
        self.m = 1.0 - (self.b / self.a) ** 2  # elliptic parameter, any sign
        center = np.asarray(base_center, dtype=float).reshape(3)
        theta_c, y_c = self.param_of_point(center)
        self.theta_c = theta_c
        self.y_c = y_c
        self.base_center = self.point(theta_c, y_c)

    # -- parametrization ------------------------------------------------

    def arclength(self, theta) -> np.ndarray:
        return self.a * ellipeinc(theta, self.m)

    def speed(self, theta) -> np.ndarray:
        return np.sqrt((self.a * np.cos(theta)) ** 2 + (self.b * np.sin(theta)) ** 2)

    def theta_of_arclength(self, s):
        s = np.asarray(s, dtype=float)
        mean_speed = self.arclength(2.0 * np.pi) / (2.0 * np.pi)
        theta = s / mean_speed
        for _ in range(30):
            err = self.arclength(theta) - s
            theta = theta - err / self.speed(theta)
            if np.max(np.abs(err)) < 1e-13 * max(self.a, self.b):
                break
        return theta

    def point(self, theta, y) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        return np.stack([self.a * np.sin(theta),
                         np.broadcast_to(np.asarray(y, dtype=float), theta.shape),
                         self.b * np.cos(theta)], axis=-1)

    def normal(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        n = np.stack([np.sin(theta) / self.a,
                      np.zeros(theta.shape),
                      np.cos(theta) / self.b], axis=-1)
        return n / np.linalg.norm(n, axis=-1, keepdims=True)

    def surface_point(self, s, y) -> np.ndarray:
        return self.point(self.theta_of_arclength(s), y)

    # -- distance -------------------------------------------------------

    def param_of_point(self, p) -> tuple[float, float]:
        """(theta, y) of the closest cylinder point to p."""
        p = np.asarray(p, dtype=float).reshape(3)
        x, z = p[0], p[2]
        if x == 0.0 and z == 0.0:
            return 0.0, float(p[1])
        theta = float(np.arctan2(x / self.a, z / self.b))
        for _ in range(60):
            # stationarity of |P - Q(theta)|^2: (P - Q) . Q'(theta) = 0
            qx, qz = self.a * np.sin(theta), self.b * np.cos(theta)
            tx, tz = self.a * np.cos(theta), -self.b * np.sin(theta)
            axx, azz = -self.a * np.sin(theta), -self.b * np.cos(theta)
            g = (x - qx) * tx + (z - qz) * tz
            dg = -(tx * tx + tz * tz) + (x - qx) * axx + (z - qz) * azz
            if dg == 0.0:
                break
            delta = g / dg
            theta -= delta
            if abs(delta) < 1e-14:
                break
        return theta, float(p[1])

    def signed_distance(self, points) -> np.ndarray:
        """Distance to the cylinder surface, positive outside."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.empty(len(points))
        for i, p in enumerate(points):
            theta, y = self.param_of_point(p)
            q = self.point(theta, y)
            d = float(np.linalg.norm(p - q))
            inside = (p[0] / self.a) ** 2 + (p[2] / self.b) ** 2 < 1.0
            out[i] = -d if inside else d
        return out

    def base_normal(self) -> np.ndarray:
        return self.normal(self.theta_c)


@dataclass
class StageConfig:
    id: str
    g_dir: tuple
    support: float
    obstacles: list
    targets: dict = field(default_factory=dict)
    table_dims: tuple | None = None
    d_table: float | None = None

    def __post_init__(self):
        d = np.asarray(self.g_dir, dtype=float)
        self.g_dir = tuple(d / np.linalg.norm(d))
        if not 0.0 <= self.support <= 1.0:
            raise ValueError("support must lie in [0, 1]")


@dataclass
class BreastBuild:
    mesh: TriMesh
    thorax: ThoraxModel
    apex_height: float
    rim_radius: float


def build_thorax(anthro: Anthropometry) -> tuple[ThoraxModel, Obstacle]:
    """Thorax cylinder plus the chest-wall obstacle.

    The wall plane is parallel to the tangent plane at the base center,
    shifted posteriorly by the sag of the breast base circle on the curved
    cylinder so the fixed base cap is feasible by construction (on a flat
    thorax the shift vanishes).
    """
    a, b = anthro.thorax_semi_axes
    perim = ellipse_perimeter(a, b)
    if abs(perim - anthro.thorax_perimeter) > 0.02 * anthro.thorax_perimeter:
        raise BuildError(
            f"thorax inconsistent: ellipse perimeter {perim:.2f} cm from semi-axes "
            f"({a}, {b}) deviates more than 2% from the measured "
            f"{anthro.thorax_perimeter:.2f} cm")
    thorax = ThoraxModel(a, b, anthro.base_center)

    # 1% radius margin covers the rim polygon inflation applied at build time
    r = 1.01 * anthro.base_perimeter_supported / (2.0 * np.pi)
    s0, y0 = float(thorax.arclength(thorax.theta_c)), thorax.y_c
    t = np.linspace(0.0, 2.0 * np.pi, 4096, endpoint=False)
    ring = thorax.surface_point(s0 + r * np.cos(t), y0 + r * np.sin(t))
    n_c = thorax.base_normal()
    sag = float(((ring - thorax.base_center) @ n_c).min())
    point = thorax.base_center + (min(sag, 0.0) - 1e-9) * n_c
    return thorax, Obstacle(Plane(point, n_c), label="thorax-wall")


def _disk_rings(m: int) -> list[np.ndarray]:
    """Vertex angles per ring of the hexagonal disk pattern (ring j: 6j)."""
    rings = [np.zeros(1)]
    for j in range(1, m + 1):
        k = 6 * j
        rings.append(2.0 * np.pi * np.arange(k) / k)
    return rings


def _disk_facets(m: int, offsets: list[int], reverse: bool) -> list[tuple[int, int, int]]:
    """Triangulate the hexagonal disk given per-ring vertex index offsets."""
    facets = []

    def rv(j: int, i: int) -> int:
        k = max(6 * j, 1)
        return offsets[j] + (i % k)

    for j in range(1, m + 1):
        inner = j - 1
        for sct in range(6):
            for i in range(j):
                tri = (rv(j, sct * j + i), rv(j, sct * j + i + 1), rv(inner, sct * inner + i))
                facets.append(tri[::-1] if reverse else tri)
            for i in range(j - 1):
                tri = (rv(j, sct * j + i + 1), rv(inner, sct * inner + i + 1), rv(inner, sct * inner + i))
                facets.append(tri[::-1] if reverse else tri)
    return facets


def _build_at(thorax: ThoraxModel, r_eff: float, cap_ratio: float, m: int) -> TriMesh:
    """Assemble the closed dome + cap mesh for cap parameter t = r_eff / R."""
    s0 = float(thorax.arclength(thorax.theta_c))
    y0 = thorax.y_c
    rings = _disk_rings(m)
    R = r_eff / cap_ratio
    phi_max = np.arcsin(min(cap_ratio, 1.0))

    verts = []
    dome_off = []
    # dome: rings 0..m, radius by uniform profile angle, height along normal
    for j, angles in enumerate(rings):
        dome_off.append(len(verts))
        phi = phi_max * j / m
        rho = R * np.sin(phi)
        height = R * (np.cos(phi) - np.cos(phi_max))
        u = s0 + rho * np.cos(angles)
        w = y0 + rho * np.sin(angles)
        theta = thorax.theta_of_arclength(u)
        base = thorax.point(theta, w)
        verts.extend(base + height * thorax.normal(theta))
    rim_off = dome_off[m]
    # cap: rings 0..m-1 on the cylinder (ring m shared with the dome rim)
    cap_off = []
    for j, angles in enumerate(rings[:m]):
        cap_off.append(len(verts))
        rho = r_eff * j / m
        u = s0 + rho * np.cos(angles)
        w = y0 + rho * np.sin(angles)
        verts.extend(thorax.point(thorax.theta_of_arclength(u), w))
    cap_off.append(rim_off)

    facets = _disk_facets(m, dome_off, reverse=False)
    n_dome = len(facets)
    facets += _disk_facets(m, cap_off, reverse=True)
    cap_flags = np.zeros(len(facets), bool)
    cap_flags[n_dome:] = True

    fixed = np.zeros(len(verts), bool)
    fixed[rim_off:] = True  # rim ring and everything after (cap interior)

    return TriMesh(np.asarray(verts), np.asarray(facets, dtype=np.int64),
                   fixed=fixed, cap=cap_flags)


def build_initial_breast(anthro: Anthropometry, edge_target: float = 1.4) -> BreastBuild:
    """Closed initial (SRG) breast: dome over the base circle plus fixed cap.

    The base polygon length matches base_perimeter_supported within 0.5% and
    the enclosed volume matches rest_volume within 1e-6 relative (bisected on
    the cap sphere radius); raises BuildError when no spherical-cap profile
    up to a hemisphere can hold the requested volume over this base.
    """
    if edge_target <= 0.0:
        raise ValueError("edge_target must be positive")
    thorax, _ = build_thorax(anthro)
    r_base = anthro.base_perimeter_supported / (2.0 * np.pi)
    m = max(5, int(np.ceil(r_base / edge_target)))
    k_outer = 6 * m
    # inflate so the inscribed rim polygon reproduces the measured perimeter
    r_eff = r_base * (np.pi / k_outer) / np.sin(np.pi / k_outer)

    def volume_at(ratio: float) -> float:
        return _build_at(thorax, r_eff, ratio, m).enclosed_volume()

    lo, hi = 1e-3, 1.0
    v_max = volume_at(hi)
    v_min = volume_at(lo)
    # the discrete hemisphere volume is the attainable maximum; accept targets
    # within the 1% volume tolerance of it (the analytic hemisphere volume is
    # a supremum an inscribed mesh never reaches)
    if anthro.rest_volume > v_max:
        if anthro.rest_volume <= 1.01 * v_max:
            ratio = 1.0
        else:
            raise BuildError(
                f"base/volume inconsistent: rest volume {anthro.rest_volume:.1f} cm^3 "
                f"exceeds the feasible cap maximum {v_max:.1f} cm^3 for base perimeter "
                f"{anthro.base_perimeter_supported:.1f} cm")
    elif anthro.rest_volume <= v_min:
        raise BuildError(
            f"base/volume inconsistent: rest volume {anthro.rest_volume:.1f} cm^3 is "
            f"below the flattest cap volume {v_min:.1f} cm^3 for base perimeter "
            f"{anthro.base_perimeter_supported:.1f} cm")
    else:
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if volume_at(mid) < anthro.rest_volume:
                lo = mid
            else:
                hi = mid
        ratio = hi
    mesh = _build_at(thorax, r_eff, ratio, m)

    R = r_eff / ratio
    apex_height = float(R * (1.0 - np.cos(np.arcsin(min(ratio, 1.0)))))
    apex_facet = int(np.where((mesh.facets == 0).any(axis=1))[0][0])
    slot = int(np.where(mesh.facets[apex_facet] == 0)[0][0])
    bary = [0.0, 0.0, 0.0]
    bary[slot] = 1.0
    mesh.markers.append(Marker(apex_facet, tuple(bary), "nipple"))

    mesh = mesh.refine(edge_target)
    problems = mesh.validate()
    if problems:
        raise BuildError("initial breast mesh invalid: " + "; ".join(problems[:3]))
    return BreastBuild(mesh=mesh, thorax=thorax, apex_height=apex_height, rim_radius=r_eff)


def stage_config(stage_id: str, anthro: Anthropometry, thorax: ThoraxModel,
                 wall: Obstacle, apex_height: float,
                 overrides: dict | None = None) -> StageConfig:
    """Per-stage gravity, support, obstacles and tape-measure targets."""
    if stage_id not in STAGES:
        raise ValueError(f"unknown stage {stage_id!r} (expected one of {STAGES})")
    ov = dict(overrides or {})
    g_dir = tuple(ov.pop("g_dir", STAGE_GRAVITY[stage_id]))
    support = float(ov.pop("support", STAGE_SUPPORT[stage_id]))
    d_table = ov.pop("d_table", None)
    if ov:
        raise ValueError(f"unknown stage overrides: {sorted(ov)}")

    obstacles = [wall]
    table_dims = None
    if stage_id == "LAT":
        d_table = apex_height if d_table is None else float(d_table)
        n_c = thorax.base_normal()
        table_point = thorax.base_center + d_table * n_c
        obstacles = [wall, Obstacle(Plane(table_point, -n_c), label="table")]
        table_dims = TABLE_DIMS
    elif d_table is not None:
        raise ValueError(f"d_table only applies to LAT, not {stage_id}")

    return StageConfig(id=stage_id, g_dir=g_dir, support=support,
                       obstacles=obstacles,
                       targets=dict(anthro.stage_targets.get(stage_id, {})),
                       table_dims=table_dims, d_table=d_table)
