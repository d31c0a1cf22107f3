"""Reference closed meshes: icospheres, boxes, tetrahedra.

Used by the test oracles and the CLI self-checks; all return valid outward-
oriented TriMesh objects with every vertex free and every facet breast-role.
"""

from __future__ import annotations

import numpy as np

from .mesh import TriMesh


def tetrahedron() -> TriMesh:
    """Unit right-corner tetrahedron: volume 1/6, area 3/2 + sqrt(3)/2."""
    v = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    f = np.array([[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]])
    return TriMesh(v, f)


def box(sx: float = 1.0, sy: float = 1.0, sz: float = 1.0, origin=(0.0, 0.0, 0.0)) -> TriMesh:
    """Axis-aligned box [0,sx]x[0,sy]x[0,sz] shifted by origin, 12 facets."""
    o = np.asarray(origin, dtype=float)
    corners = np.array([[x, y, z] for x in (0.0, sx) for y in (0.0, sy) for z in (0.0, sz)]) + o
    # index bits: 4*x + 2*y + z
    quads = [
        (0, 1, 3, 2),  # x = 0, outward -x
        (4, 6, 7, 5),  # x = sx
        (0, 4, 5, 1),  # y = 0
        (2, 3, 7, 6),  # y = sy
        (0, 2, 6, 4),  # z = 0
        (1, 5, 7, 3),  # z = sz
    ]
    f = []
    for a, b, c, d in quads:
        f.append((a, b, c))
        f.append((a, c, d))
    return TriMesh(corners, np.array(f))


def cube() -> TriMesh:
    return box(1.0, 1.0, 1.0)


def icosphere(level: int = 2, radius: float = 1.0) -> TriMesh:
    """Subdivided icosahedron projected onto a sphere (level 0 = icosahedron)."""
    phi = (1.0 + np.sqrt(5.0)) / 2.0
    verts = [
        (-1, phi, 0), (1, phi, 0), (-1, -phi, 0), (1, -phi, 0),
        (0, -1, phi), (0, 1, phi), (0, -1, -phi), (0, 1, -phi),
        (phi, 0, -1), (phi, 0, 1), (-phi, 0, -1), (-phi, 0, 1),
    ]
    verts = [np.asarray(v, dtype=float) / np.linalg.norm(v) for v in verts]
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    for _ in range(level):
        cache: dict[tuple[int, int], int] = {}

        def mid(a: int, b: int) -> int:
            key = (min(a, b), max(a, b))
            idx = cache.get(key)
            if idx is None:
                p = verts[a] + verts[b]
                verts.append(p / np.linalg.norm(p))
                idx = len(verts) - 1
                cache[key] = idx
            return idx

        faces = [t for (a, b, c) in faces
                 for t in ((a, mid(a, b), mid(c, a)),
                           (mid(a, b), b, mid(b, c)),
                           (mid(c, a), mid(b, c), c),
                           (mid(a, b), mid(b, c), mid(c, a)))]
    v = np.asarray(verts) * radius
    return TriMesh(v, np.asarray(faces, dtype=np.int64))
