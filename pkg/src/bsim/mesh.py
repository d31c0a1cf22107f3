"""Triangle-mesh core: geometry, maintenance operations and material markers.

All lengths are in cm (cgs units throughout the package). A mesh is a closed,
outward-oriented triangulated surface split into a deformable "breast" part
(free vertices) and a rigid "base-cap" part (fixed vertices) that closes it
against the chest so that enclosed volume is well defined.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import MeshError

# Facet roles.
ROLE_BREAST = "breast"
ROLE_BASE_CAP = "base-cap"

# Facets smaller than this are considered degenerate.
DEGENERATE_AREA = 1e-12


@dataclass
class Plane:
    """Oriented plane: a point on it and a unit normal."""

    point: np.ndarray
    normal: np.ndarray

    def __post_init__(self):
        self.point = np.asarray(self.point, dtype=float).reshape(3)
        n = np.asarray(self.normal, dtype=float).reshape(3)
        norm = np.linalg.norm(n)
        if not np.isfinite(norm) or norm == 0.0:
            raise ValueError("plane normal must be a finite nonzero vector")
        self.normal = n / norm

    def signed_distance(self, points) -> np.ndarray:
        """Signed distance of points to the plane (positive along the normal)."""
        return (np.asarray(points, dtype=float) - self.point) @ self.normal


@dataclass
class Marker:
    """Material point attached to a facet by barycentric coordinates."""

    facet: int
    bary: tuple
    label: str

    def __post_init__(self):
        b = np.asarray(self.bary, dtype=float)
        if b.shape != (3,):
            raise ValueError(f"marker {self.label!r}: barycentric coordinates must have 3 components")
        if np.any(b < -1e-12) or abs(float(b.sum()) - 1.0) > 1e-12:
            raise ValueError(f"marker {self.label!r}: invalid barycentric coordinates {tuple(b)}")
        self.bary = tuple(np.clip(b, 0.0, None))


def _bary_coords(point: np.ndarray, tri: np.ndarray) -> np.ndarray:
    """Barycentric coordinates of a point w.r.t. a triangle (in its plane)."""
    e0 = tri[1] - tri[0]
    e1 = tri[2] - tri[0]
    w = point - tri[0]
    d00 = e0 @ e0
    d01 = e0 @ e1
    d11 = e1 @ e1
    den = d00 * d11 - d01 * d01
    if den <= 0.0:
        raise MeshError("cannot take barycentric coordinates on a degenerate facet")
    b1 = (d11 * (w @ e0) - d01 * (w @ e1)) / den
    b2 = (d00 * (w @ e1) - d01 * (w @ e0)) / den
    return np.array([1.0 - b1 - b2, b1, b2])


def _clamped_bary(point: np.ndarray, tri: np.ndarray) -> tuple[np.ndarray, float]:
    """Barycentric coordinates clamped into the triangle, plus the worst violation."""
    b = _bary_coords(point, tri)
    viol = float(-min(b.min(), 0.0))
    b = np.clip(b, 0.0, None)
    b /= b.sum()
    return b, viol


class TriMesh:
    """Closed oriented triangle surface with vertex/facet roles and markers.

    Parameters
    ----------
    vertices : (n, 3) float array
        Vertex positions in cm.
    facets : (m, 3) int array
        Oriented vertex index triples; outward normals for a valid mesh.
    fixed : (n,) bool array, optional
        True where the vertex is immovable. Defaults to all free.
    cap : (m,) bool array, optional
        True for base-cap facets, False for breast facets. Defaults to all
        breast.
    markers : list of Marker, optional
        Material points riding the surface. Maintenance operations keep them
        attached (splits and flips remap their facet/barycentric data).
    """

    def __init__(self, vertices, facets, fixed=None, cap=None, markers=None):
        self.vertices = np.array(vertices, dtype=float)
        self.facets = np.array(facets, dtype=np.int64)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 3:
            raise ValueError("vertices must be an (n, 3) array")
        if self.facets.ndim != 2 or self.facets.shape[1] != 3:
            raise ValueError("facets must be an (m, 3) array")
        n = len(self.vertices)
        m = len(self.facets)
        self.fixed = np.zeros(n, bool) if fixed is None else np.array(fixed, dtype=bool)
        self.cap = np.zeros(m, bool) if cap is None else np.array(cap, dtype=bool)
        if self.fixed.shape != (n,):
            raise ValueError("fixed must be an (n,) bool array")
        if self.cap.shape != (m,):
            raise ValueError("cap must be an (m,) bool array")
        self.markers = list(markers) if markers else []

    # ------------------------------------------------------------------
    # basics

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_facets(self) -> int:
        return len(self.facets)

    @property
    def free(self) -> np.ndarray:
        return ~self.fixed

    def copy(self) -> "TriMesh":
        return TriMesh(self.vertices.copy(), self.facets.copy(), self.fixed.copy(),
                       self.cap.copy(), [Marker(mk.facet, mk.bary, mk.label) for mk in self.markers])

    def with_vertices(self, vertices) -> "TriMesh":
        """Same connectivity, roles and markers with new vertex positions."""
        out = TriMesh(np.array(vertices, dtype=float), self.facets, self.fixed, self.cap,
                      [Marker(mk.facet, mk.bary, mk.label) for mk in self.markers])
        if out.vertices.shape != self.vertices.shape:
            raise ValueError("replacement vertex array has the wrong shape")
        return out

    def facet_points(self):
        """Corner positions per facet as three (m, 3) arrays."""
        v, f = self.vertices, self.facets
        return v[f[:, 0]], v[f[:, 1]], v[f[:, 2]]

    def facet_cross(self) -> np.ndarray:
        """Unnormalized facet normals (v1-v0) x (v2-v0); |.| = 2 * area."""
        p0, p1, p2 = self.facet_points()
        return np.cross(p1 - p0, p2 - p0)

    def facet_areas(self) -> np.ndarray:
        return 0.5 * np.linalg.norm(self.facet_cross(), axis=1)

    def facet_centroids(self) -> np.ndarray:
        p0, p1, p2 = self.facet_points()
        return (p0 + p1 + p2) / 3.0

    def directed_edges(self) -> np.ndarray:
        """All 3m directed edges as an (3m, 2) array, facet-major order."""
        f = self.facets
        return np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]], axis=0)

    def edge_lengths(self) -> np.ndarray:
        """Lengths of the 3m directed edges (each undirected edge twice)."""
        e = self.directed_edges()
        return np.linalg.norm(self.vertices[e[:, 1]] - self.vertices[e[:, 0]], axis=1)

    def base_ring_edges(self) -> list[tuple[int, int]]:
        """Undirected edges shared by a breast facet and a base-cap facet."""
        owner = {}
        ring = []
        for fi, (i, j, k) in enumerate(self.facets):
            for a, b in ((i, j), (j, k), (k, i)):
                key = (min(a, b), max(a, b))
                if key in owner:
                    if owner[key] != self.cap[fi]:
                        ring.append(key)
                else:
                    owner[key] = self.cap[fi]
        return ring

    # ------------------------------------------------------------------
    # validation

    def validate(self) -> list[str]:
        """Check all mesh invariants; returns the list of violations (empty = ok).

        Checked: index sanity, finite coordinates, facet non-degeneracy, closed
        orientable manifoldness (every directed edge appears exactly once and is
        matched by its reverse), and role consistency (base-cap facets carry
        only fixed vertices).
        """
        out = []
        n = self.n_vertices
        if not np.all(np.isfinite(self.vertices)):
            bad = np.where(~np.isfinite(self.vertices).all(axis=1))[0]
            out.append(f"non-finite vertex coordinates at {bad.tolist()}")
        f = self.facets
        if f.size:
            if f.min() < 0 or f.max() >= n:
                out.append("facet vertex index out of range")
                return out
        dup = (f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 2] == f[:, 0])
        for fi in np.where(dup)[0]:
            out.append(f"facet {fi} repeats a vertex")
        areas = self.facet_areas()
        for fi in np.where(areas <= DEGENERATE_AREA)[0]:
            if not dup[fi]:
                out.append(f"facet {fi} is degenerate (area {areas[fi]:.3e} cm^2)")

        # Edge accounting: map each directed edge to a count.
        edges = self.directed_edges()
        key = edges[:, 0].astype(np.int64) * n + edges[:, 1]
        uniq, counts = np.unique(key, return_counts=True)
        fwd = dict(zip(uniq.tolist(), counts.tolist()))
        seen = set()
        for k in fwd:
            i, j = divmod(k, n)
            if (j, i) in seen or (i, j) in seen:
                continue
            seen.add((i, j))
            c_ij = fwd.get(i * n + j, 0)
            c_ji = fwd.get(j * n + i, 0)
            if c_ij + c_ji != 2:
                out.append(f"edge ({i},{j}) has {c_ij + c_ji} incident facets (want 2)")
            elif c_ij != 1 or c_ji != 1:
                out.append(f"edge ({i},{j}) traversed twice in the same direction (orientation)")

        for fi in np.where(self.cap)[0]:
            if not np.all(self.fixed[self.facets[fi]]):
                out.append(f"base-cap facet {fi} has a free vertex")
        for mk in self.markers:
            if not 0 <= mk.facet < self.n_facets:
                out.append(f"marker {mk.label!r} references facet {mk.facet} out of range")
        return out

    # ------------------------------------------------------------------
    # scalar quantities

    def total_area(self, role: str | None = None) -> float:
        """Surface area in cm^2, optionally restricted to one facet role."""
        areas = self.facet_areas()
        if role is None:
            sel = slice(None)
        elif role == ROLE_BREAST:
            sel = ~self.cap
        elif role == ROLE_BASE_CAP:
            sel = self.cap
        else:
            raise ValueError(f"unknown facet role {role!r}")
        return float(np.sum(areas[sel]))

    def enclosed_volume(self) -> float:
        """Signed enclosed volume in cm^3 (positive for outward orientation)."""
        p0, p1, p2 = self.facet_points()
        return float(np.sum(p0 * np.cross(p1, p2)) / 6.0)

    def volume_gradient(self) -> np.ndarray:
        """d(enclosed volume)/d(vertex positions), an (n, 3) array."""
        p0, p1, p2 = self.facet_points()
        f = self.facets
        grad = np.zeros_like(self.vertices)
        np.add.at(grad, f[:, 0], np.cross(p1, p2) / 6.0)
        np.add.at(grad, f[:, 1], np.cross(p2, p0) / 6.0)
        np.add.at(grad, f[:, 2], np.cross(p0, p1) / 6.0)
        return grad

    def vertex_areas(self) -> np.ndarray:
        """Barycentric vertex areas: one third of the incident facet areas."""
        areas = self.facet_areas()
        va = np.zeros(self.n_vertices)
        for c in range(3):
            np.add.at(va, self.facets[:, c], areas / 3.0)
        return va

    def vertex_normals(self) -> np.ndarray:
        """Area-weighted vertex normals, normalized to unit length."""
        cross = self.facet_cross()
        nrm = np.zeros_like(self.vertices)
        for c in range(3):
            np.add.at(nrm, self.facets[:, c], cross)
        lens = np.linalg.norm(nrm, axis=1)
        safe = np.where(lens > 0.0, lens, 1.0)
        return nrm / safe[:, None]

    def corner_cotangents(self) -> np.ndarray:
        """Cotangent of the interior angle at each facet corner, (m, 3)."""
        v, f = self.vertices, self.facets
        p = v[f]
        cot = np.empty((len(f), 3))
        for c in range(3):
            a = p[:, (c + 1) % 3] - p[:, c]
            b = p[:, (c + 2) % 3] - p[:, c]
            cr = np.linalg.norm(np.cross(a, b), axis=1)
            cr = np.where(cr > 0.0, cr, np.inf)
            cot[:, c] = np.sum(a * b, axis=1) / cr
        return cot

    def curvature_vectors(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-vertex mean-curvature vectors and barycentric areas.

        Returns
        -------
        K : (n, 3) array
            K_i = (1 / (2 A_i)) * sum_j (cot a_ij + cot b_ij) (x_i - x_j);
            points along the outward normal on a convex surface, |K_i| = 2 H_i.
        A : (n,) array
            Barycentric vertex areas.
        """
        v, f = self.vertices, self.facets
        cot = self.corner_cotangents()
        L = np.zeros_like(v)
        for c in range(3):
            i = f[:, (c + 1) % 3]
            j = f[:, (c + 2) % 3]
            wd = cot[:, c][:, None] * (v[i] - v[j])
            np.add.at(L, i, wd)
            np.add.at(L, j, -wd)
        A = self.vertex_areas()
        safe = np.where(A > 0.0, A, np.inf)
        return L / (2.0 * safe[:, None]), A

    def mean_curvature(self, vertex: int) -> tuple[float, np.ndarray]:
        """Discrete mean curvature at a vertex (cotangent formula).

        Returns (H, direction): H in 1/cm, signed positive when the curvature
        vector agrees with the outward vertex normal; direction is the unit
        curvature direction (the vertex normal where curvature vanishes).
        """
        if not 0 <= vertex < self.n_vertices:
            raise IndexError(f"vertex {vertex} out of range")
        A = self.vertex_areas()
        if A[vertex] <= 0.0:
            raise MeshError(f"degenerate star at vertex {vertex}")
        K, _ = self.curvature_vectors()
        k = K[vertex]
        mag = float(np.linalg.norm(k))
        nrm = self.vertex_normals()[vertex]
        if mag < 1e-300:
            return 0.0, nrm
        direction = k / mag
        sign = 1.0 if float(direction @ nrm) >= 0.0 else -1.0
        return sign * 0.5 * mag, direction

    # ------------------------------------------------------------------
    # markers

    def marker_position(self, marker: Marker | str) -> np.ndarray:
        """Cartesian position of a marker (by object or label)."""
        if isinstance(marker, str):
            for mk in self.markers:
                if mk.label == marker:
                    marker = mk
                    break
            else:
                raise KeyError(f"no marker labelled {marker!r}")
        if not 0 <= marker.facet < self.n_facets:
            raise IndexError(f"marker facet {marker.facet} out of range")
        tri = self.vertices[self.facets[marker.facet]]
        return np.asarray(marker.bary) @ tri

    def attach_marker(self, point, label: str, role: str = ROLE_BREAST) -> Marker:
        """Attach a marker at the closest surface point on facets of a role."""
        point = np.asarray(point, dtype=float).reshape(3)
        sel = np.where(self.cap if role == ROLE_BASE_CAP else ~self.cap)[0]
        best = None
        for fi in sel:
            tri = self.vertices[self.facets[fi]]
            b, _ = _clamped_bary(point, tri)
            d = float(np.linalg.norm(b @ tri - point))
            if best is None or d < best[0]:
                best = (d, fi, b)
        if best is None:
            raise MeshError("mesh has no facets of the requested role")
        mk = Marker(int(best[1]), tuple(best[2]), label)
        self.markers.append(mk)
        return mk

    # ------------------------------------------------------------------
    # maintenance: refine / equiangulate / vertex averaging

    def refine(self, max_edge: float) -> "TriMesh":
        """Bisect every edge longer than max_edge until all edges comply.

        Midpoint splits keep the piecewise-linear surface identical, so area
        and enclosed volume are preserved to roundoff. New vertices on
        fixed-fixed edges are fixed; children inherit the parent facet role,
        and markers are remapped exactly into the child containing them.
        """
        if max_edge <= 0.0:
            raise ValueError("max_edge must be positive")
        mesh = self
        while True:
            lengths = mesh.edge_lengths()
            if not np.any(lengths > max_edge):
                return mesh
            mesh = mesh._split_pass(max_edge)

    def _split_pass(self, max_edge: float) -> "TriMesh":
        v = self.vertices
        verts = [row for row in v]
        fixed = list(self.fixed)
        mids: dict[tuple[int, int], int] = {}

        def midpoint(a: int, b: int) -> int:
            key = (min(a, b), max(a, b))
            idx = mids.get(key)
            if idx is None:
                idx = len(verts)
                verts.append(0.5 * (v[a] + v[b]))
                fixed.append(bool(self.fixed[a] and self.fixed[b]))
                mids[key] = idx
            return idx

        # Decide splits on the current geometry only.
        needs = {}
        for fi, (i, j, k) in enumerate(self.facets):
            flags = []
            for a, b in ((i, j), (j, k), (k, i)):
                flags.append(bool(np.linalg.norm(v[b] - v[a]) > max_edge))
            needs[fi] = flags

        new_facets: list[tuple[int, int, int]] = []
        new_cap: list[bool] = []
        children: dict[int, list[int]] = {}
        for fi, (i, j, k) in enumerate(self.facets):
            f0, f1, f2 = needs[fi]
            tri = (int(i), int(j), int(k))
            n_split = f0 + f1 + f2
            if n_split == 0:
                kids = [tri]
            elif n_split == 3:
                m0 = midpoint(*tri[0:2])
                m1 = midpoint(tri[1], tri[2])
                m2 = midpoint(tri[2], tri[0])
                kids = [(tri[0], m0, m2), (m0, tri[1], m1), (m2, m1, tri[2]), (m0, m1, m2)]
            elif n_split == 1:
                # rotate so the split edge is (a, b)
                rot = [0, 1, 2] if f0 else ([1, 2, 0] if f1 else [2, 0, 1])
                a, b, c = (tri[r] for r in rot)
                m = midpoint(a, b)
                kids = [(a, m, c), (m, b, c)]
            else:
                # two split edges; rotate so they are (a, b) and (b, c)
                if f0 and f1:
                    rot = [0, 1, 2]
                elif f1 and f2:
                    rot = [1, 2, 0]
                else:
                    rot = [2, 0, 1]
                a, b, c = (tri[r] for r in rot)
                m0 = midpoint(a, b)
                m1 = midpoint(b, c)
                # quad (a, m0, m1, c): cut along the shorter diagonal
                if np.linalg.norm(np.asarray(verts[m1]) - v[a]) <= np.linalg.norm(np.asarray(verts[m0]) - v[c]):
                    kids = [(m0, b, m1), (a, m0, m1), (a, m1, c)]
                else:
                    kids = [(m0, b, m1), (a, m0, c), (m0, m1, c)]
            children[fi] = list(range(len(new_facets), len(new_facets) + len(kids)))
            new_facets.extend(kids)
            new_cap.extend([bool(self.cap[fi])] * len(kids))

        out = TriMesh(np.asarray(verts), np.asarray(new_facets, dtype=np.int64),
                      np.asarray(fixed, dtype=bool), np.asarray(new_cap, dtype=bool))
        out.markers = [self._remap_marker(mk, out, children[mk.facet]) for mk in self.markers]
        return out

    def _remap_marker(self, mk: Marker, out: "TriMesh", candidates: list[int]) -> Marker:
        point = self.marker_position(mk)
        best = None
        for fi in candidates:
            tri = out.vertices[out.facets[fi]]
            b, viol = _clamped_bary(point, tri)
            if best is None or viol < best[0]:
                best = (viol, fi, b)
        return Marker(int(best[1]), tuple(best[2]), mk.label)

    def equiangulate(self) -> "TriMesh":
        """Flip free-free edges whose opposite angles sum to more than pi.

        Runs until no such edge remains. Flips that would create a degenerate
        facet or a duplicate edge are skipped; edges touching a fixed vertex
        are never flipped (this protects the base cap and its ring). Raises
        MeshError after 50 * |edges| flips as a cycle guard.
        """
        verts = self.vertices
        facets = [tuple(int(x) for x in f) for f in self.facets]
        cap = list(self.cap)
        markers = [Marker(mk.facet, mk.bary, mk.label) for mk in self.markers]

        edge_map: dict[tuple[int, int], set[int]] = {}

        def ekey(a, b):
            return (a, b) if a < b else (b, a)

        for fi, (i, j, k) in enumerate(facets):
            for a, b in ((i, j), (j, k), (k, i)):
                edge_map.setdefault(ekey(a, b), set()).add(fi)

        n_edges = len(edge_map)
        max_flips = 50 * max(n_edges, 1)
        flips = 0

        def angle_at(apex, u, w):
            a = verts[u] - verts[apex]
            b = verts[w] - verts[apex]
            na = np.linalg.norm(a)
            nb = np.linalg.norm(b)
            if na == 0.0 or nb == 0.0:
                return 0.0
            return float(np.arccos(np.clip((a @ b) / (na * nb), -1.0, 1.0)))

        def tri_area(a, b, c):
            return 0.5 * np.linalg.norm(np.cross(verts[b] - verts[a], verts[c] - verts[a]))

        work = deque(sorted(edge_map.keys()))
        queued = set(work)
        while work:
            key = work.popleft()
            queued.discard(key)
            fids = edge_map.get(key)
            if fids is None or len(fids) != 2:
                continue
            i, j = key
            if self.fixed[i] or self.fixed[j]:
                continue
            f1, f2 = sorted(fids)
            # orient facet f1 so it holds the directed edge i->j
            if not _has_directed(facets[f1], i, j):
                f1, f2 = f2, f1
            k = _third(facets[f1], i, j)
            l = _third(facets[f2], i, j)
            if k == l:
                continue
            if angle_at(k, i, j) + angle_at(l, i, j) <= np.pi + 1e-9:
                continue
            new_key = ekey(k, l)
            if new_key in edge_map:
                continue
            t1 = (i, l, k)
            t2 = (l, j, k)
            if tri_area(*t1) <= DEGENERATE_AREA or tri_area(*t2) <= DEGENERATE_AREA:
                continue

            # remap markers riding the two old facets before topology changes
            for mk in markers:
                if mk.facet in (f1, f2):
                    pos = np.asarray(mk.bary) @ verts[list(facets[mk.facet])]
                    b1, v1 = _clamped_bary(pos, verts[list(t1)])
                    b2, v2 = _clamped_bary(pos, verts[list(t2)])
                    if v1 <= v2:
                        mk.facet, mk.bary = f1, tuple(b1)
                    else:
                        mk.facet, mk.bary = f2, tuple(b2)

            for fid, old, new in ((f1, facets[f1], t1), (f2, facets[f2], t2)):
                for a, b in ((old[0], old[1]), (old[1], old[2]), (old[2], old[0])):
                    s = edge_map.get(ekey(a, b))
                    if s is not None:
                        s.discard(fid)
                        if not s:
                            del edge_map[ekey(a, b)]
                facets[fid] = new
                for a, b in ((new[0], new[1]), (new[1], new[2]), (new[2], new[0])):
                    edge_map.setdefault(ekey(a, b), set()).add(fid)

            flips += 1
            if flips > max_flips:
                raise MeshError("equiangulation cycle")
            for a, b in ((i, k), (k, j), (j, l), (l, i), (k, l)):
                kk = ekey(a, b)
                if kk not in queued:
                    work.append(kk)
                    queued.add(kk)

        out = TriMesh(verts.copy(), np.asarray(facets, dtype=np.int64),
                      self.fixed.copy(), np.asarray(cap, dtype=bool), markers)
        return out

    def vertex_average(self) -> "TriMesh":
        """Move free vertices to area-weighted incident-centroid averages.

        The smoothing step is followed by a uniform displacement of the free
        vertices along their normals that restores the enclosed volume to its
        pre-call value (within 1e-9 relative). Fixed vertices never move.
        """
        v0 = self.enclosed_volume()
        areas = self.facet_areas()
        cent = self.facet_centroids()
        num = np.zeros_like(self.vertices)
        den = np.zeros(self.n_vertices)
        for c in range(3):
            idx = self.facets[:, c]
            np.add.at(num, idx, areas[:, None] * cent)
            np.add.at(den, idx, areas)
        new = self.vertices.copy()
        movable = self.free & (den > 0.0)
        new[movable] = num[movable] / den[movable, None]
        smoothed = self.with_vertices(new)
        return project_enclosed_volume(smoothed, v0, tol=1e-9)


def _has_directed(tri: tuple[int, int, int], a: int, b: int) -> bool:
    return (tri[0] == a and tri[1] == b) or (tri[1] == a and tri[2] == b) or (tri[2] == a and tri[0] == b)


def _third(tri: tuple[int, int, int], a: int, b: int) -> int:
    for x in tri:
        if x != a and x != b:
            return x
    raise MeshError(f"facet {tri} does not span edge ({a},{b})")


def project_enclosed_volume(mesh: TriMesh, target: float, tol: float = 1e-9,
                            max_iter: int = 50) -> TriMesh:
    """Displace free vertices along unit vertex normals by a common scalar
    so the enclosed volume equals target.

    Newton iteration with a bracketing bisection fallback; raises
    MeshError("volume projection stall") when no such scalar can be bracketed
    or the tolerance is not reached within max_iter iterations.
    """
    if target <= 0.0:
        raise ValueError("target volume must be positive")
    v = mesh.enclosed_volume()
    if abs(v - target) <= tol * target:
        return mesh
    u = mesh.vertex_normals()
    u[mesh.fixed] = 0.0

    def volume_at(lam: float) -> float:
        return mesh.with_vertices(mesh.vertices + lam * u).enclosed_volume()

    lam = 0.0
    cur = mesh
    for _ in range(max_iter):
        deriv = float(np.sum(cur.volume_gradient() * u))
        if deriv <= 0.0:
            break
        lam -= (cur.enclosed_volume() - target) / deriv
        cur = mesh.with_vertices(mesh.vertices + lam * u)
        if abs(cur.enclosed_volume() - target) <= tol * target:
            return cur

    # bracket the root: volume increases with lam for sane normals
    lo, hi = 0.0, 0.0
    span = max(1.0, abs(v) ** (1.0 / 3.0))
    step = 1e-3 * span
    for _ in range(60):
        if v < target:
            hi += step
            if volume_at(hi) >= target:
                break
        else:
            lo -= step
            if volume_at(lo) <= target:
                break
        step *= 2.0
    else:
        raise MeshError("volume projection stall")
    for _ in range(200):
        lam = 0.5 * (lo + hi)
        vm = volume_at(lam)
        if abs(vm - target) <= tol * target:
            return mesh.with_vertices(mesh.vertices + lam * u)
        if vm < target:
            lo = lam
        else:
            hi = lam
    raise MeshError("volume projection stall")
