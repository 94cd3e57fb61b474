"""Structured triangular meshes on axis-aligned rectangles.

Meshes are generated by splitting every grid square along the same
diagonal (lower-left to upper-right), so all elements are congruent
right triangles and the family is trivially quasi-uniform.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np


@dataclass(frozen=True, eq=False)
class Mesh:
    """Immutable triangulation with face topology.

    vertices : (nv, 2) coordinates
    elements : (nt, 3) vertex indices, counterclockwise
    faces    : (nf, 4) int rows (v0, v1, elem_minus, elem_plus);
               elem_plus == -1 for boundary faces
    normals  : (nf, 2) unit normal per face, pointing from T- to T+
               (outward for boundary faces)
    """

    vertices: np.ndarray
    elements: np.ndarray
    faces: np.ndarray
    normals: np.ndarray
    boundary_vertex: np.ndarray
    bounds: tuple[float, float, float, float]  # (x0, x1, y0, y1)
    n_div: int
    h: float

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_elements(self) -> int:
        return self.elements.shape[0]

    @property
    def n_faces(self) -> int:
        return self.faces.shape[0]

    @property
    def interior_faces(self) -> np.ndarray:
        """Indices of faces with two neighbors."""
        return np.nonzero(self.faces[:, 3] >= 0)[0]

    @property
    def boundary_faces(self) -> np.ndarray:
        return np.nonzero(self.faces[:, 3] < 0)[0]

    def element_sizes(self) -> np.ndarray:
        """Diameter h_T of every element (longest edge)."""
        v = self.vertices[self.elements]  # (nt, 3, 2)
        d01 = np.linalg.norm(v[:, 0] - v[:, 1], axis=1)
        d12 = np.linalg.norm(v[:, 1] - v[:, 2], axis=1)
        d20 = np.linalg.norm(v[:, 2] - v[:, 0], axis=1)
        return np.maximum(np.maximum(d01, d12), d20)

    def face_sizes(self) -> np.ndarray:
        """Length h_F of every face."""
        p0 = self.vertices[self.faces[:, 0]]
        p1 = self.vertices[self.faces[:, 1]]
        return np.linalg.norm(p1 - p0, axis=1)

    def element_areas(self) -> np.ndarray:
        v = self.vertices[self.elements]
        e1 = v[:, 1] - v[:, 0]
        e2 = v[:, 2] - v[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    def dump(self, path) -> None:
        """Plain-text debug dump: vertex / element / face records."""
        with open(path, "w") as fh:
            for x, y in self.vertices:
                fh.write(f"v {x!r} {y!r}\n")
            for i, j, k in self.elements:
                fh.write(f"t {i} {j} {k}\n")
            for v0, v1, tm, tp in self.faces:
                fh.write(f"f {v0} {v1} {tm} {tp}\n")


def build_rect_mesh(bounds: tuple[float, float, float, float], n_div: int) -> Mesh:
    """Triangulate the rectangle [x0,x1] x [y0,y1] with n_div subdivisions
    per side, every square split along its lower-left/upper-right diagonal."""
    if n_div < 1:
        raise ValueError(f"n_div must be >= 1, got {n_div}")
    x0, x1, y0, y1 = bounds
    xs = np.linspace(x0, x1, n_div + 1)
    ys = np.linspace(y0, y1, n_div + 1)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    def vid(i, j):
        return i * (n_div + 1) + j

    elements = []
    for i in range(n_div):
        for j in range(n_div):
            ll, lr = vid(i, j), vid(i + 1, j)
            ul, ur = vid(i, j + 1), vid(i + 1, j + 1)
            # diagonal from ll to ur, both triangles counterclockwise
            elements.append((ll, lr, ur))
            elements.append((ll, ur, ul))
    elements = np.asarray(elements, dtype=np.int64)

    faces, normals = _build_faces(vertices, elements)

    tol = 1e-14
    on_bound = (
        (np.abs(vertices[:, 0] - x0) < tol)
        | (np.abs(vertices[:, 0] - x1) < tol)
        | (np.abs(vertices[:, 1] - y0) < tol)
        | (np.abs(vertices[:, 1] - y1) < tol)
    )

    hx = (x1 - x0) / n_div
    hy = (y1 - y0) / n_div
    h = float(np.hypot(hx, hy))
    return Mesh(
        vertices=vertices,
        elements=elements,
        faces=faces,
        normals=normals,
        boundary_vertex=on_bound,
        bounds=bounds,
        n_div=n_div,
        h=h,
    )


def build_unit_square_mesh(n_div: int) -> Mesh:
    """Structured mesh of [0,1]^2; h = sqrt(2)/n_div."""
    return build_rect_mesh((0.0, 1.0, 0.0, 1.0), n_div)


def _build_faces(vertices: np.ndarray, elements: np.ndarray):
    face_map: dict[tuple[int, int], list[int]] = {}
    for t, (a, b, c) in enumerate(elements):
        for v0, v1 in ((a, b), (b, c), (c, a)):
            key = (min(v0, v1), max(v0, v1))
            face_map.setdefault(key, []).append(t)

    faces = np.empty((len(face_map), 4), dtype=np.int64)
    normals = np.empty((len(face_map), 2))
    centroids = vertices[elements].mean(axis=1)
    for f, ((v0, v1), elems) in enumerate(sorted(face_map.items())):
        if len(elems) > 2:
            raise ValueError(f"face {(v0, v1)} shared by {len(elems)} elements")
        tm = elems[0]
        tp = elems[1] if len(elems) == 2 else -1
        faces[f] = (v0, v1, tm, tp)
        d = vertices[v1] - vertices[v0]
        n = np.array([d[1], -d[0]])
        n /= np.linalg.norm(n)
        mid = 0.5 * (vertices[v0] + vertices[v1])
        # orient from T- outward / towards T+
        if np.dot(n, mid - centroids[tm]) < 0:
            n = -n
        normals[f] = n
    return faces, normals


class RegionKind(Enum):
    RECTANGLE = "rectangle"
    COMPLEMENT = "complement"  # domain minus an open rectangle
    UNION = "union"


@dataclass(frozen=True)
class Region:
    """Pointwise membership test for measurement / target subdomains.

    RECTANGLE  : closed axis-aligned rectangle given by ``rects[0]``.
    COMPLEMENT : closure of the domain minus the *open* rectangle
                 ``rects[0]`` (boundary of the cut-out counts as inside).
    UNION      : union of closed rectangles.
    """

    kind: RegionKind
    rects: tuple[tuple[float, float, float, float], ...]

    def contains(self, x, y):
        """Vectorized membership test; returns a boolean array."""
        x = np.asarray(x)
        y = np.asarray(y)
        if self.kind is RegionKind.RECTANGLE:
            return _in_closed_rect(x, y, self.rects[0])
        if self.kind is RegionKind.COMPLEMENT:
            x0, x1, y0, y1 = self.rects[0]
            inside_open = (x > x0) & (x < x1) & (y > y0) & (y < y1)
            return ~inside_open
        mask = np.zeros(np.broadcast(x, y).shape, dtype=bool)
        for r in self.rects:
            mask |= _in_closed_rect(x, y, r)
        return mask


def _in_closed_rect(x, y, rect):
    x0, x1, y0, y1 = rect
    return (x >= x0) & (x <= x1) & (y >= y0) & (y <= y1)


def rectangle(x0: float, x1: float, y0: float, y1: float) -> Region:
    return Region(RegionKind.RECTANGLE, ((x0, x1, y0, y1),))


def complement(x0: float, x1: float, y0: float, y1: float) -> Region:
    return Region(RegionKind.COMPLEMENT, ((x0, x1, y0, y1),))
