"""Mesh topology, geometry and region membership."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flowassim.cases import stokes_case
from flowassim.mesh import build_rect_mesh, build_unit_square_mesh, complement, rectangle


def test_smallest_mesh_counts():
    mesh = build_unit_square_mesh(1)
    assert mesh.n_vertices == 4
    assert mesh.n_elements == 2
    assert mesh.n_faces == 5
    assert len(mesh.interior_faces) == 1
    assert len(mesh.boundary_faces) == 4


def test_two_by_two_counts():
    mesh = build_unit_square_mesh(2)
    assert mesh.n_vertices == 9
    assert mesh.n_elements == 8
    assert mesh.n_faces == 16
    assert len(mesh.interior_faces) == 8


def test_area_partition():
    mesh = build_unit_square_mesh(8)
    assert abs(mesh.element_areas().sum() - 1.0) <= 1e-12


def test_elements_counterclockwise():
    mesh = build_unit_square_mesh(4)
    assert (mesh.element_areas() > 0).all()


@given(n_div=st.integers(min_value=1, max_value=12))
@settings(max_examples=12, deadline=None)
def test_face_partition(n_div):
    mesh = build_unit_square_mesh(n_div)
    assert len(mesh.interior_faces) + len(mesh.boundary_faces) == mesh.n_faces


def test_refinement_halves_h():
    for n in (1, 2, 4, 8, 16):
        coarse = build_unit_square_mesh(n)
        fine = build_unit_square_mesh(2 * n)
        assert fine.h == coarse.h / 2


def test_boundary_vertex_flags():
    mesh = build_unit_square_mesh(5)
    x, y = mesh.vertices[:, 0], mesh.vertices[:, 1]
    on = (
        (np.abs(x) < 1e-14)
        | (np.abs(x - 1) < 1e-14)
        | (np.abs(y) < 1e-14)
        | (np.abs(y - 1) < 1e-14)
    )
    assert (mesh.boundary_vertex == on).all()


def test_normals_unit_and_orthogonal():
    mesh = build_unit_square_mesh(3)
    p0 = mesh.vertices[mesh.faces[:, 0]]
    p1 = mesh.vertices[mesh.faces[:, 1]]
    tangent = p1 - p0
    lengths = np.linalg.norm(mesh.normals, axis=1)
    assert np.abs(lengths - 1.0).max() <= 1e-14
    dots = np.abs((mesh.normals * tangent).sum(axis=1)) / np.linalg.norm(
        tangent, axis=1
    )
    assert dots.max() <= 1e-14


def test_interior_faces_have_two_neighbors():
    mesh = build_unit_square_mesh(4)
    interior = mesh.faces[mesh.interior_faces]
    assert (interior[:, 2] >= 0).all() and (interior[:, 3] >= 0).all()
    boundary = mesh.faces[mesh.boundary_faces]
    assert (boundary[:, 3] == -1).all()


def test_elements_congruent():
    mesh = build_unit_square_mesh(6)
    sizes = mesh.element_sizes()
    assert sizes.max() / sizes.min() <= 1 + 1e-14
    assert abs(sizes.max() - mesh.h) <= 1e-14


def test_rect_mesh_bounds():
    mesh = build_rect_mesh((-1.0, 2.0, 0.5, 1.5), 3)
    assert mesh.vertices[:, 0].min() == -1.0
    assert mesh.vertices[:, 0].max() == 2.0
    assert abs(mesh.element_areas().sum() - 3.0) <= 1e-12


def test_invalid_n_div():
    with pytest.raises(ValueError):
        build_unit_square_mesh(0)


def test_convex_measurement_region_membership():
    omega = stokes_case("convex").omega_m
    assert omega.contains(0.05, 0.5)
    assert not omega.contains(0.5, 0.5)


def test_nonconvex_target_membership():
    target = stokes_case("nonconvex").target
    assert target.contains(0.5, 0.9)
    assert not target.contains(0.05, 0.5)


def test_region_primitives():
    rect = rectangle(0.0, 0.5, 0.0, 0.5)
    assert rect.contains(0.5, 0.5)  # closed rectangle
    assert not rect.contains(0.6, 0.1)
    comp = complement(0.1, 0.9, 0.25, 1.0)
    assert comp.contains(0.1, 0.5)  # cut-out is open, its edge stays in
    assert not comp.contains(0.2, 0.3)


def test_dump_format(tmp_path):
    mesh = build_unit_square_mesh(1)
    path = tmp_path / "mesh.txt"
    mesh.dump(path)
    lines = path.read_text().splitlines()
    assert sum(ln.startswith("v ") for ln in lines) == 4
    assert sum(ln.startswith("t ") for ln in lines) == 2
    assert sum(ln.startswith("f ") for ln in lines) == 5
