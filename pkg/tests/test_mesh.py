import numpy as np
import pytest

from maxwell_mg.mesh import (DomainSpec, MeshFormatError, generate_mesh, read_mesh, refine_marked,
                             refine_toward_edge, refine_uniform, write_mesh)
from maxwell_mg.topology import build_topology

DOMAINS = [("UnitCube", 2), ("ThickL", 1), ("Slab", 4), ("CubeCavity", 2), ("UnitSquare2D", 3)]


def test_unit_cube_counts(cube2):
    assert cube2.n_vertices == 27
    assert cube2.n_cells == 48
    assert np.all(cube2.signed_volumes() > 0)
    assert np.isclose(cube2.volumes().sum(), 1.0)


@pytest.mark.parametrize("kind,n", DOMAINS)
def test_generated_meshes_conform(kind, n):
    mesh = generate_mesh(DomainSpec.from_name(kind), n)
    assert mesh.check_conformity()
    assert np.all(mesh.signed_volumes() > 0)
    assert mesh.boundary_components() == (2 if kind == "CubeCavity" else 1)


def test_domain_volumes():
    vol = lambda k, n, **p: generate_mesh(DomainSpec.from_name(k, **p), n).volumes().sum()  # noqa: E731
    assert np.isclose(vol("ThickL", 2), 3.0)
    assert np.isclose(vol("CubeCavity", 2), 8.0 - 1.0)
    assert np.isclose(vol("Slab", 10), 0.1)
    assert np.isclose(vol("UnitSquare2D", 3), 1.0)


def test_slab_regions():
    mesh = generate_mesh(DomainSpec.from_name("Slab"), 4)
    z = mesh.vertices[mesh.cells].mean(axis=1)[:, 2]
    assert np.array_equal(mesh.region_id, (z > 0).astype(int))


def test_bad_inputs():
    with pytest.raises(ValueError):
        generate_mesh("UnitCube", 0)
    with pytest.raises(ValueError):
        generate_mesh("CubeCavity", 3)
    with pytest.raises(ValueError):
        DomainSpec.from_name("Sphere")
    with pytest.raises(ValueError):
        generate_mesh(DomainSpec.from_name("UnitCube", pattern="zigzag"), 2)


@pytest.mark.parametrize("kind,n", DOMAINS)
def test_uniform_refinement_nested(kind, n):
    coarse = generate_mesh(DomainSpec.from_name(kind), n)
    fine = refine_uniform(coarse)
    d = coarse.dimension
    assert fine.n_cells == 2 ** d * coarse.n_cells
    assert fine.parent is coarse and fine.level == 1
    assert fine.check_conformity()
    # children fill their parent exactly and carry its region
    vol = np.bincount(fine.parent_cell, weights=fine.volumes(), minlength=coarse.n_cells)
    assert np.allclose(vol, coarse.volumes(), rtol=1e-12)
    assert np.array_equal(fine.region_id, coarse.region_id[fine.parent_cell])
    # coarse vertices are kept, new vertices are edge midpoints
    assert np.array_equal(fine.vertices[:coarse.n_vertices], coarse.vertices)
    edges, _ = coarse.edges()
    mids = 0.5 * (coarse.vertices[edges[:, 0]] + coarse.vertices[edges[:, 1]])
    assert np.allclose(np.sort(fine.vertices[coarse.n_vertices:], axis=0), np.sort(mids, axis=0))


@pytest.mark.parametrize("kind,n", [("UnitCube", 2), ("ThickL", 1), ("UnitSquare2D", 2)])
def test_red_refinement_reproduces_kuhn(kind, n):
    """Refining the n-mesh of the unmirrored pattern gives the 2n-mesh (same cells)."""
    spec = DomainSpec.from_name(kind, pattern="kuhn")
    fine = refine_uniform(generate_mesh(spec, n))
    direct = generate_mesh(spec, 2 * n)
    key = lambda m: sorted(map(tuple, np.round(np.sort(m.vertices[m.cells], axis=1), 12).reshape(m.n_cells, -1)))  # noqa: E731
    assert key(fine) == key(direct)


def test_shape_regularity_under_refinement():
    mesh = generate_mesh("UnitCube", 1)
    ratios = []
    for _ in range(3):
        h = mesh.diameters()
        ratios.append(np.max(h ** 3 / mesh.volumes()))
        mesh = refine_uniform(mesh)
    # red refinement with the shortest-diagonal rule has a bounded number of similarity classes
    assert max(ratios) <= 1.01 * ratios[1]


def test_refine_marked_closure_conforms(cube2):
    edges, _ = cube2.edges()
    marked = np.zeros(len(edges), dtype=bool)
    marked[[0, 5, 17]] = True
    fine = refine_marked(cube2, marked)
    assert fine.check_conformity()
    assert np.isclose(fine.volumes().sum(), 1.0)


def test_refine_toward_edge_grades():
    mesh = generate_mesh("ThickL", 2)
    fine = refine_toward_edge(mesh, ratio=0.1, passes=2)
    assert fine.check_conformity()
    assert np.isclose(fine.volumes().sum(), 3.0)
    c = fine.vertices[fine.cells].mean(axis=1)
    r = np.hypot(c[:, 0], c[:, 1])
    h = fine.diameters()
    assert h[r < 0.1].max() < 0.6 * h[r > 1.0].min()
    with pytest.raises(ValueError):
        refine_toward_edge(generate_mesh("UnitSquare2D", 2))
    with pytest.raises(ValueError):
        refine_toward_edge(mesh, ratio=1.5)


def test_mesh_roundtrip(tmp_path, cube2):
    path = tmp_path / "cube.mesh"
    write_mesh(cube2, path)
    back = read_mesh(path)
    assert np.array_equal(back.vertices, cube2.vertices)
    assert np.array_equal(back.cells, cube2.cells)
    assert np.array_equal(back.region_id, cube2.region_id)
    assert back.check_conformity()


@pytest.mark.parametrize("text,lineno,fragment", [
    ("", 1, "missing header"),
    ("3 4 1\n", 1, "header"),
    ("3 4 1 0\n0 0 0\n1 0 0\n0 1 0\n", 5, "end of file"),
    ("3 4 1 0\n0 0 0\n1 0 0\n0 1 0\n0 0 1\n0 1 2 0\n", 6, "fields"),
    ("3 4 1 0\n0 0 0\n1 0 x\n0 1 0\n0 0 1\n0 1 2 3 0\n", 3, "bad number"),
])
def test_mesh_format_errors(tmp_path, text, lineno, fragment):
    path = tmp_path / "bad.mesh"
    path.write_text(text)
    with pytest.raises(MeshFormatError) as info:
        read_mesh(path)
    assert info.value.lineno == lineno
    assert fragment in str(info.value)


def test_topology_edge_counts(cube2):
    topo = build_topology(cube2)
    # Euler: V - E + F - C = 1 for a ball
    faces, _ = cube2.faces()
    assert cube2.n_vertices - topo.n_edges + len(faces) - cube2.n_cells == 1
    assert topo.n_free_vertices == 1
    assert np.all(np.abs(topo.cell_edge_sign) == 1)
