"""Acceptance checks, one test per criterion, each printing a PASS/FAIL line."""
import math
import time

import numpy as np

import oracles
from conftest import PART_OF, bvh_of, fixture, fixture_partition, part_box
from semgrasp import fixtures
from semgrasp.cli import main
from semgrasp.evaluation import backsolve_counts, build_report, ingest_reference, ingest_survey
from semgrasp.geometry import build_bvh, ray_cast_brute_many, ray_cast_many
from semgrasp.language import MockLlm, MockVlm, build_avoid_prompt, build_grasp_prompt
from semgrasp.pipeline import semantic_frequencies
from semgrasp.planner import GripperModel, gripper_boxes, sample_grasps, score_grasp, unrestricted_baseline
from semgrasp.projection import BoundingBox2D, Mode, partition_mesh

# published column for the language-guided planner, one value per survey object
PUBLISHED = {
    "doll": 0.92,
    "ice cream": 1.00,
    "candle": 0.93,
    "flowers in the vase": 0.93,
    "bag": 0.91,
    "plant": 0.94,
    "hand brush": 0.95,
    "toilet brush": 0.98,
    "cactus": 0.99,
    "cupcake": 1.00,
    "cup on a saucer": 0.81,
    "plate of cake": 0.99,
    "mug": 0.77,
    "saucepan": 0.94,
    "broom": 0.98,
}
GRIPPER = GripperModel()


def test_criterion_1_published_column(criterion):
    t0 = time.perf_counter()
    survey = ingest_survey(fixtures.survey_table())
    llm = MockLlm.from_csv(fixtures.mock_llm_table())
    report = build_report(survey, semantic_frequencies(survey, llm))
    elapsed = time.perf_counter() - t0
    worst = max(abs(r.sims["semantic"] - PUBLISHED[r.object_label]) for r in report.rows)
    avg = report.averages["semantic"]
    ok = len(report.rows) == 15 and worst <= 0.005 and abs(avg - 0.94) <= 0.005 and elapsed < 1.0
    criterion(1, "language-guided similarity column", ok, f"max cell error {worst:.4f}, average {avg:.4f}, {elapsed:.3f}s")


def test_criterion_2_backsolve(criterion):
    t0 = time.perf_counter()
    p_h = {r.object_label: r.p_a_human for r in ingest_survey(fixtures.survey_table())}
    cells = ingest_reference(fixtures.reference_table())
    missing = []
    for cell in cells:
        if not backsolve_counts(p_h[cell.object_label], cell.sim, 20, 0.005):
            near = min(range(21), key=lambda k: abs(1 - abs(p_h[cell.object_label] - k / 20) - cell.sim))
            got = 1 - abs(p_h[cell.object_label] - near / 20)
            missing.append(f"{cell.object_label}/{cell.method} {cell.sim} (closest k={near} gives {got:.3f})")
    elapsed = time.perf_counter() - t0
    ok = len(cells) == 30 and not missing and elapsed < 1.0
    detail = f"{30 - len(missing)}/30 cells solvable, {elapsed:.3f}s" + (f"; no k for {'; '.join(missing)}" if missing else "")
    criterion(2, "reference cells back-solve to k/20", ok, detail)


def test_criterion_3_region_confinement(criterion):
    t0 = time.perf_counter()
    total, bad_faces, sat_hits, oracle_hits = 0, 0, 0, 0
    for name in fixtures.PART_OBJECTS:
        mesh = fixture(name).mesh
        part = fixture_partition(name)
        assert 0 < part.n_graspable < mesh.n_faces
        gs = sample_grasps(mesh, bvh_of(name), part, GRIPPER, 200, rng_seed=2024)
        obstacles = mesh.triangles[part.obstacle]
        from semgrasp.geometry import box_triangles_overlap

        for g in gs:
            total += 1
            bad_faces += int(not part.graspable[list(g.contact_faces)].all())
            boxes = gripper_boxes(g.pose, g.width, GRIPPER)
            sat_hits += sum(int(box_triangles_overlap(b, obstacles).any()) for b in boxes)
            oracle_hits += int(oracles.boxes_hit_obstacles([(b.center, b.half_extents, b.rotation) for b in boxes], obstacles))
    elapsed = time.perf_counter() - t0
    ok = total >= 1000 and bad_faces == 0 and sat_hits == 0 and oracle_hits == 0 and elapsed < 60
    criterion(
        3,
        "contacts confined, no gripper/obstacle overlap",
        ok,
        f"{total} grasps on {len(fixtures.PART_OBJECTS)} fixtures, {bad_faces} off-region, "
        f"{sat_hits} SAT hits, {oracle_hits} sampling hits, {elapsed:.1f}s",
    )


def test_criterion_4_ray_cast_equivalence(criterion):
    t0 = time.perf_counter()
    rng = np.random.default_rng(4)
    mismatches, worst, n_total = 0, 0.0, 0
    names = ["cube", "plates", *fixtures.PART_OBJECTS]
    for name in names:
        mesh = fixture(name).mesh if name != "plates" else fixtures.build_object("plates")[0]
        bvh = build_bvh(mesh)
        lo, hi = mesh.bounds()
        c, r = 0.5 * (lo + hi), np.linalg.norm(hi - lo)
        origins = c + rng.uniform(-1, 1, (10_000, 3)) * r
        dirs = c + rng.uniform(-0.5, 0.5, (10_000, 3)) * (hi - lo) - origins
        f1, t1, _ = ray_cast_many(mesh, bvh, origins, dirs)
        f2, t2, _ = ray_cast_brute_many(mesh, origins, dirs)
        mismatches += int(np.count_nonzero(f1 != f2))
        hit = (f1 >= 0) & (f1 == f2)
        if hit.any():
            worst = max(worst, float(np.abs(t1[hit] - t2[hit]).max()))
        n_total += len(origins)
    elapsed = time.perf_counter() - t0
    ok = mismatches == 0 and worst <= 1e-9 and elapsed < 30
    criterion(4, "BVH equals brute force", ok, f"{n_total} rays on {len(names)} meshes, {mismatches} face mismatches, max |dt| {worst:.1e}, {elapsed:.1f}s")


def test_criterion_5_friction_cone(criterion):
    alpha = math.atan(GRIPPER.friction_mu)
    worst, n = -math.inf, 0
    for name in fixtures.PART_OBJECTS:
        gs = sample_grasps(fixture(name).mesh, bvh_of(name), fixture_partition(name), GRIPPER, 100, rng_seed=5)
        for g in gs:
            d = (g.contact_b.point - g.contact_a.point) / g.width
            for normal, direction in ((-g.contact_a.normal, d), (-g.contact_b.normal, -d)):
                angle = math.acos(max(-1.0, min(1.0, float(normal @ direction))))
                worst = max(worst, angle - alpha)
                n += 1
    # the three scoring spot checks, recomputed independently
    from semgrasp.planner import Contact, GraspCandidate

    def cand(theta, width):
        pa, pb = np.zeros(3), np.array([max(width, 1e-9), 0.0, 0.0])
        na = np.array([-math.cos(theta), 0.0, math.sin(theta)])
        nb = np.array([math.cos(theta), 0.0, math.sin(theta)])
        return GraspCandidate(np.eye(4), Contact(pa, na, 0), Contact(pb, nb, 1), width, 0.0, 0)

    theta_half = math.acos((1 + math.cos(alpha)) / 2)
    spots = [(0.0, 0.0, 1.0), (alpha, 0.02, 0.0), (theta_half, GRIPPER.max_opening / 2, 0.25)]
    spot_err = 0.0
    for theta, width, expected in spots:
        q = score_grasp(cand(theta, width), GRIPPER)
        ref = oracles.quality_reference(math.degrees(theta), math.degrees(theta), width, 0.12, 0.5)
        spot_err = max(spot_err, abs(q - expected), abs(q - ref))
    ok = worst <= 1e-6 and spot_err <= 1e-9
    criterion(5, "friction cone and quality spot checks", ok, f"{n} contacts, max excess angle {worst:.2e} rad, spot error {spot_err:.1e}")


def test_criterion_6_avoid_complement(criterion):
    vlm_rows = MockVlm.from_csv(fixtures.mock_vlm_table())._rows
    n_checked, broken = 0, []
    for name in ["cube", *fixtures.PART_OBJECTS]:
        fx = fixture(name)
        boxes = [BoundingBox2D(*d.box) for img, d in vlm_rows if img == name]
        boxes.append(BoundingBox2D(200, 0, 320, 480))
        for box in boxes:
            try:
                g = partition_mesh(fx.mesh, fx.camera, box, Mode.GRASP)
                a = partition_mesh(fx.mesh, fx.camera, box, Mode.AVOID)
            except Exception:
                continue  # a box that leaves one side empty has nothing to compare
            n_checked += 1
            if not np.array_equal(a.graspable, ~g.graspable):
                broken.append(name)
    teapot = fixture("teapot").mesh
    avoid = fixture_partition("teapot")
    spout_box = partition_mesh(teapot, fixture("teapot").camera, part_box("teapot", "spout"), Mode.GRASP)
    gs = sample_grasps(teapot, bvh_of("teapot"), avoid, GRIPPER, 200, rng_seed=6)
    on_spout = sum(int(spout_box.graspable[list(g.contact_faces)].any()) for g in gs)
    ok = n_checked >= 10 and not broken and on_spout == 0 and len(gs) == 200 and PART_OF["teapot"][1] is Mode.AVOID
    criterion(6, "avoid mode is the exact complement", ok, f"{n_checked} boxes compared, {len(gs)} teapot grasps, {on_spout} touch the spout box")


def test_criterion_7_determinism(criterion, tmp_path):
    cfg = str(fixtures.data_dir() / "configs" / "mug.json")
    codes = [main(["plan", "--config", cfg, "--out-dir", str(tmp_path / d)]) for d in ("a", "b")]
    a, b = ((tmp_path / d / "grasps.json").read_bytes() for d in ("a", "b"))
    ok = codes == [0, 0] and a == b
    criterion(7, "plan output is byte-identical across runs", ok, f"{len(a)} bytes")


def test_criterion_8_prompt_golden(criterion):
    grasp = build_grasp_prompt("ice cream").user
    avoid = build_avoid_prompt("teapot").user
    literal = build_avoid_prompt("teapot", literal=True).user
    expected_grasp = "If you want to pick up an ice cream, which part makes the most sense to grasp? Name one part."
    expected_avoid = (
        "Consider you are an intelligent robotic arm. If you want to pick up a teapot, "
        "which part you should avoid touching? Answer in one word."
    )
    ok = grasp == expected_grasp and avoid == expected_avoid and literal == expected_avoid.replace("a teapot", "an teapot")
    criterion(8, "prompt templates byte-for-byte", ok)


def test_criterion_9_declared_and_cube_baseline(criterion):
    mesh = fixture("cube").mesh
    bvh = build_bvh(mesh)
    gripper = GripperModel().scaled(10.0)
    sides_per_seed = []
    for seed in range(5):
        gs = unrestricted_baseline(mesh, bvh, gripper, 20, seed)
        sides = {tuple(np.round(mesh.face_normals[f]).astype(int)) for g in gs for f in g.contact_faces}
        sides_per_seed.append(len(sides))
    ok = min(sides_per_seed) >= 3
    criterion(
        9,
        "out-of-scope items declared; cube baseline spreads over faces",
        ok,
        f"distinct cube sides per seed {sides_per_seed}; live LLM/detector, robot trials, the survey itself and the exact "
        "geometry-only baseline average are not reproduced",
    )
