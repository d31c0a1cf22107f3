"""Plane sections of a triangle mesh: the geometric core of the tape-measure.

A section is the set of polylines where the surface crosses a plane. Facet
crossings are chained through shared edges, so crossing points are computed
once per edge and the chains are watertight. Sections restricted to breast
facets come out open, anchored where the breast meets the base cap.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import Plane, TriMesh, ROLE_BASE_CAP, ROLE_BREAST


@dataclass
class SectionCurve:
    """One chained polyline of a plane section."""

    points: np.ndarray  # (k, 3), no repeated closing point
    closed: bool

    @property
    def length(self) -> float:
        p = self.points
        seg = np.linalg.norm(np.diff(p, axis=0), axis=1).sum()
        if self.closed and len(p) > 2:
            seg += float(np.linalg.norm(p[0] - p[-1]))
        return float(seg)


def plane_section(mesh: TriMesh, plane: Plane, role: str | None = None) -> list[SectionCurve]:
    """Intersect the surface with a plane.

    Parameters
    ----------
    mesh : TriMesh
    plane : Plane
    role : str or None
        Restrict crossings to facets of this role (None = whole surface).

    Returns
    -------
    list of SectionCurve, ordered deterministically. Empty when the plane
    misses the selected facets. Vertices falling exactly in the plane are
    handled by shifting the plane offset by 1e-9 cm.
    """
    d = plane.signed_distance(mesh.vertices)
    if np.any(d == 0.0):
        d = d + 1e-9

    if role is None:
        fsel = np.arange(mesh.n_facets)
    elif role == ROLE_BREAST:
        fsel = np.where(~mesh.cap)[0]
    elif role == ROLE_BASE_CAP:
        fsel = np.where(mesh.cap)[0]
    else:
        raise ValueError(f"unknown facet role {role!r}")

    cuts: dict[tuple[int, int], np.ndarray] = {}

    def cut_point(a: int, b: int) -> np.ndarray:
        key = (a, b) if a < b else (b, a)
        p = cuts.get(key)
        if p is None:
            i, j = key
            t = d[i] / (d[i] - d[j])
            p = mesh.vertices[i] + t * (mesh.vertices[j] - mesh.vertices[i])
            cuts[key] = p
        return p

    # One segment per crossing facet, endpoints keyed by the crossed edge.
    segments: list[tuple[tuple[int, int], tuple[int, int]]] = []
    for fi in fsel:
        i, j, k = (int(x) for x in mesh.facets[fi])
        crossing = []
        for a, b in ((i, j), (j, k), (k, i)):
            if (d[a] > 0.0) != (d[b] > 0.0):
                crossing.append((a, b) if a < b else (b, a))
        if len(crossing) == 2:
            segments.append((crossing[0], crossing[1]))

    if not segments:
        return []

    # Chain segments through shared edge keys.
    incidence: dict[tuple[int, int], list[int]] = {}
    for si, (ka, kb) in enumerate(segments):
        incidence.setdefault(ka, []).append(si)
        incidence.setdefault(kb, []).append(si)

    used = [False] * len(segments)
    curves = []
    for start in range(len(segments)):
        if used[start]:
            continue
        used[start] = True
        ka, kb = segments[start]
        chain = [ka, kb]
        closed = False
        # extend forward from chain[-1], then backward from chain[0]
        for direction in (1, 0):
            while True:
                end_key = chain[-1] if direction else chain[0]
                nxt = None
                for si in incidence.get(end_key, ()):
                    if not used[si]:
                        nxt = si
                        break
                if nxt is None:
                    break
                used[nxt] = True
                a, b = segments[nxt]
                other = b if a == end_key else a
                if direction:
                    chain.append(other)
                else:
                    chain.insert(0, other)
                if chain[0] == chain[-1]:
                    closed = True
                    chain.pop()
                    break
            if closed:
                break
        pts = np.asarray([cut_point(*key) for key in chain])
        curves.append(SectionCurve(pts, closed))
    return curves


def split_at_point(curve: SectionCurve, point) -> tuple[float, float]:
    """Lengths of the two halves of an open curve split at the parameter
    closest to the given point. The halves sum exactly to curve.length."""
    if curve.closed:
        raise ValueError("can only split an open curve")
    p = curve.points
    point = np.asarray(point, dtype=float)
    seg = np.diff(p, axis=0)
    seg_len = np.linalg.norm(seg, axis=1)
    best = (np.inf, 0.0)
    offset = 0.0
    for i, (a, dvec, ln) in enumerate(zip(p[:-1], seg, seg_len)):
        if ln > 0.0:
            t = float(np.clip((point - a) @ dvec / (ln * ln), 0.0, 1.0))
        else:
            t = 0.0
        dist = float(np.linalg.norm(a + t * dvec - point))
        if dist < best[0]:
            best = (dist, offset + t * ln)
        offset += ln
    total = float(seg_len.sum())
    first = best[1]
    return first, total - first
