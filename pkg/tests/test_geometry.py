import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from conftest import bvh_of, fixture
from semgrasp.geometry import (
    EmptyMesh,
    OrientedBox,
    ParseError,
    Ray,
    TriMesh,
    box_triangle_overlap,
    box_triangles_overlap,
    build_bvh,
    load_mesh,
    ray_cast,
    ray_cast_brute,
    ray_cast_brute_many,
    ray_cast_many,
    save_mesh,
)

CUBE_OBJ = """# unit cube
v -0.5 -0.5 -0.5
v 0.5 -0.5 -0.5
v 0.5 0.5 -0.5
v -0.5 0.5 -0.5
v -0.5 -0.5 0.5
v 0.5 -0.5 0.5
v 0.5 0.5 0.5
v -0.5 0.5 0.5
f 1 3 2
f 1 4 3
f 5 6 7
f 5 7 8
f 1 2 6
f 1 6 5
f 2 3 7
f 2 7 6
f 3 4 8
f 3 8 7
f 4 1 5
f 4 5 8
"""


@pytest.fixture
def cube(tmp_path):
    p = tmp_path / "cube.obj"
    p.write_text(CUBE_OBJ)
    return load_mesh(p)


def random_rotation(rng):
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q *= np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] *= -1
    return q


def test_cube_counts_and_area(cube):
    assert cube.n_faces == 12
    assert len(cube.vertices) == 8
    assert cube.total_area == pytest.approx(6.0, abs=1e-12)
    assert cube.n_dropped == 0


def test_cube_normals_point_outward(cube):
    outward = np.einsum("ij,ij->i", cube.face_normals, cube.centroids)
    assert np.all(outward > 0)
    np.testing.assert_allclose(np.linalg.norm(cube.face_normals, axis=1), 1.0, atol=1e-12)


def test_degenerate_face_is_dropped(tmp_path):
    p = tmp_path / "deg.obj"
    p.write_text(CUBE_OBJ + "f 1 2 1\nf 1 2 2\n")
    mesh = load_mesh(p)
    assert mesh.n_faces == 12
    assert mesh.n_dropped == 2


def test_obj_polygon_and_slash_forms(tmp_path):
    p = tmp_path / "quad.obj"
    p.write_text("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nvn 0 0 1\nf 1//1 2//1 3//1 4//1\n")
    mesh = load_mesh(p)
    assert mesh.n_faces == 2
    assert mesh.total_area == pytest.approx(1.0)

    p.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf -3/1 -2/2 -1/3\n")
    assert load_mesh(p).n_faces == 1


def test_bad_index_and_empty(tmp_path):
    p = tmp_path / "bad.obj"
    p.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 9\n")
    with pytest.raises(ParseError):
        load_mesh(p)
    p.write_text("v 0 0 0\nv 1 0 0\nv 2 0 0\nf 1 2 3\n")
    with pytest.raises(EmptyMesh):
        load_mesh(p)
    with pytest.raises(ParseError):
        load_mesh(tmp_path / "missing.obj")


def test_mug_counts_match_trimesh():
    trimesh = pytest.importorskip("trimesh")
    path = fixture("mug").mesh_path
    ref = trimesh.load(path, force="mesh", process=False)
    ours = load_mesh(path)
    assert len(ours.vertices) == len(ref.vertices)
    assert ours.n_faces == len(ref.faces)
    np.testing.assert_allclose(ours.vertices, ref.vertices, atol=1e-12)
    assert ours.total_area == pytest.approx(float(ref.area), rel=1e-12)


@pytest.mark.parametrize("fmt", ["obj", "ply"])
def test_save_load_round_trip(tmp_path, fmt):
    mesh = fixture("teapot").mesh
    p = tmp_path / f"t.{fmt}"
    save_mesh(mesh, p)
    back = load_mesh(p)
    np.testing.assert_array_equal(back.vertices, mesh.vertices)
    np.testing.assert_array_equal(back.faces, mesh.faces)


def test_flipping_winding_flips_normals(cube):
    flipped = TriMesh.from_arrays(cube.vertices, cube.faces[:, ::-1])
    np.testing.assert_allclose(flipped.face_normals, -cube.face_normals)
    np.testing.assert_allclose(flipped.face_areas, cube.face_areas)


def test_reordering_faces_permutes_areas(rng):
    mesh = fixture("mug").mesh
    perm = rng.permutation(mesh.n_faces)
    other = TriMesh.from_arrays(mesh.vertices, mesh.faces[perm])
    np.testing.assert_allclose(other.face_areas, mesh.face_areas[perm])
    assert other.total_area == pytest.approx(mesh.total_area, rel=1e-12)


def test_mesh_arrays_are_read_only(cube):
    with pytest.raises(ValueError):
        cube.vertices[0, 0] = 3.0


# ---------------------------------------------------------------- rays


def test_ray_hits_bottom_face(cube):
    bvh = build_bvh(cube)
    hit = ray_cast(cube, bvh, Ray((0, 0, -5), (0, 0, 1)))
    assert hit is not None
    assert hit.distance == pytest.approx(4.5, abs=1e-12)
    assert cube.face_normals[hit.face] == pytest.approx([0, 0, -1])
    assert sum(hit.barycentric) == pytest.approx(1.0)


def test_ray_pointing_away_misses(cube):
    bvh = build_bvh(cube)
    assert ray_cast(cube, bvh, Ray((0, 0, -5), (0, 0, -1))) is None
    assert ray_cast_brute(cube, Ray((0, 0, -5), (0, 0, -1))) is None


def test_ray_through_shared_edge_picks_lowest_face(cube):
    bvh = build_bvh(cube)
    # the diagonal of the bottom face is shared by faces 0 and 1
    hit = ray_cast(cube, bvh, Ray((0.1, 0.1, -5), (0, 0, 1)))
    assert hit.face == 0
    assert ray_cast_brute(cube, Ray((0.1, 0.1, -5), (0, 0, 1))).face == 0


def random_rays(mesh, rng, n):
    lo, hi = mesh.bounds()
    c, r = 0.5 * (lo + hi), np.linalg.norm(hi - lo)
    origins = c + rng.uniform(-1, 1, size=(n, 3)) * r
    targets = c + rng.uniform(-0.5, 0.5, size=(n, 3)) * (hi - lo)
    return origins, targets - origins


@pytest.mark.parametrize("name", ["mug", "teapot", "doll"])
def test_bvh_matches_independent_oracle(name, rng):
    mesh, bvh = fixture(name).mesh, bvh_of(name)
    origins, dirs = random_rays(mesh, rng, 600)
    face, t, _ = ray_cast_many(mesh, bvh, origins, dirs)
    tris = mesh.triangles
    for i in range(len(origins)):
        d = dirs[i] / np.linalg.norm(dirs[i])
        f_ref, t_ref = oracles.ray_triangle_plane(origins[i], d, tris)
        assert face[i] == f_ref, i
        if f_ref >= 0:
            assert abs(t[i] - t_ref) <= 1e-9


def test_bvh_matches_brute_force_10k(rng):
    mesh, bvh = fixture("mug").mesh, bvh_of("mug")
    origins, dirs = random_rays(mesh, rng, 10_000)
    f1, t1, b1 = ray_cast_many(mesh, bvh, origins, dirs)
    f2, t2, b2 = ray_cast_brute_many(mesh, origins, dirs)
    np.testing.assert_array_equal(f1, f2)
    hit = f1 >= 0
    assert hit.mean() > 0.3
    assert np.max(np.abs(t1[hit] - t2[hit])) <= 1e-9


def test_bvh_leaves_partition_faces():
    mesh, bvh = fixture("teapot").mesh, bvh_of("teapot")
    seen = np.concatenate([faces for _, faces in bvh.leaves()])
    assert sorted(seen.tolist()) == list(range(mesh.n_faces))
    assert max(len(faces) for _, faces in bvh.leaves()) <= 8
    # every face lies inside its leaf's bounds
    for node, faces in bvh.leaves():
        tri = mesh.triangles[faces]
        assert np.all(tri.min(axis=1) >= bvh.lo[node]) and np.all(tri.max(axis=1) <= bvh.hi[node])


# ---------------------------------------------------------------- boxes


def test_triangle_inside_box():
    box = OrientedBox((0, 0, 0), (1, 1, 1))
    assert box_triangle_overlap(box, [[0.1, 0, 0], [0, 0.1, 0], [0, 0, 0.1]])


def test_parallel_triangle_at_twice_half_extent():
    box = OrientedBox((0, 0, 0), (0.5, 0.5, 0.5))
    tri = [[-3, -3, 1.0], [3, -3, 1.0], [0, 3, 1.0]]
    assert not box_triangle_overlap(box, tri)


def test_triangle_separated_only_by_edge_axis():
    # corners of the triangle's bounding box overlap the box; only an edge cross axis separates
    box = OrientedBox((0, 0, 0), (0.5, 0.5, 0.5))
    tri = [[1.2, 0.0, -1.0], [0.0, 1.2, -1.0], [0.6, 0.6, 1.0]]
    assert not box_triangle_overlap(box, tri)
    assert oracles.box_triangle_distance(np.zeros(3), [0.5] * 3, np.eye(3), np.array(tri)) > 1e-3


def test_sat_agrees_with_sampling_oracle(rng):
    n_pairs, disagree = 1000, 0
    for _ in range(n_pairs):
        R = random_rotation(rng)
        half = rng.uniform(0.05, 0.5, size=3)
        center = rng.normal(size=3) * 0.1
        tri = center + rng.normal(size=(3, 3)) * rng.uniform(0.1, 0.6) + rng.normal(size=3) * 0.4
        sat = box_triangle_overlap(OrientedBox(center, half, R), tri)
        pts = oracles.triangle_samples(tri, 140)  # about 10^4 points
        depth = oracles.penetration_depth(center, half, R, pts)
        if sat and depth <= 0:
            dist = oracles.box_triangle_distance(center, half, R, tri)
            assert dist < 1e-6, (center, half, R, tri)
            disagree += 1
        elif not sat:
            assert depth <= 1e-6, (center, half, R, tri)
    # misses by the sampler are confined to near-touching pairs
    assert disagree < n_pairs * 0.05


def test_vector_and_scalar_sat_agree(rng):
    box = OrientedBox((0.1, 0, 0), (0.2, 0.1, 0.3), random_rotation(rng))
    tris = rng.normal(size=(300, 3, 3)) * 0.3
    vec = box_triangles_overlap(box, tris)
    assert vec.tolist() == [box_triangle_overlap(box, t) for t in tris]
    assert 0 < vec.sum() < len(tris)


@settings(max_examples=60, deadline=None)
@given(
    st.lists(st.floats(-2, 2), min_size=9, max_size=9),
    st.floats(0.0, 2 * math.pi),
    st.lists(st.floats(-1, 1), min_size=3, max_size=3),
)
def test_sat_rigid_invariance(coords, angle, shift):
    tri = np.array(coords).reshape(3, 3)
    if np.linalg.norm(np.cross(tri[1] - tri[0], tri[2] - tri[0])) < 1e-3:
        return
    box = OrientedBox((0, 0, 0), (0.5, 0.3, 0.4))
    c, s = math.cos(angle), math.sin(angle)
    R = np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]])
    t = np.array(shift)
    moved = OrientedBox(R @ box.center + t, box.half_extents, R)
    before = box_triangle_overlap(box, tri)
    after = box_triangle_overlap(moved, tri @ R.T + t)
    if before != after:
        # only legitimate at a touching configuration
        assert oracles.box_triangle_distance(np.zeros(3), box.half_extents, np.eye(3), tri) < 1e-6
