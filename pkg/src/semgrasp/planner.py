"""Region-confined antipodal grasp sampling for a parallel-jaw gripper.

Contacts are drawn on graspable faces, paired with the opposing surface by
ray casting, filtered by the friction cone, and posed at evenly spaced rolls
about the closing axis. A pose survives only if its swept finger boxes and
palm box miss every obstacle face.
"""
from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .geometry import Bvh, OrientedBox, TriMesh, box_triangles_overlap, ray_cast_many
from .projection import RegionPartition

SURFACE_EPS = 1e-6
BUDGET_PER_TARGET = 200
BATCH_SIZE = 256


class RegionTooSmall(Exception):
    """No grasp survived the attempt budget; the grasp region is unusable."""


@dataclass(frozen=True)
class GripperModel:
    max_opening: float = 0.12
    finger_length: float = 0.04
    # half extents of one finger: (closing axis, lateral, approach)
    finger_box: tuple[float, float, float] = (0.01, 0.01, 0.02)
    palm_clearance: float = 0.01
    friction_mu: float = 0.5
    n_rolls: int = 8

    def __post_init__(self):
        object.__setattr__(self, "finger_box", tuple(float(x) for x in self.finger_box))
        lengths = (self.max_opening, self.finger_length, self.palm_clearance, *self.finger_box)
        if min(lengths) <= 0 or self.friction_mu <= 0 or self.n_rolls < 1:
            raise ValueError(f"invalid gripper parameters: {self}")

    @property
    def cone_half_angle(self) -> float:
        return math.atan(self.friction_mu)

    def scaled(self, s: float) -> "GripperModel":
        return replace(
            self,
            max_opening=self.max_opening * s,
            finger_length=self.finger_length * s,
            finger_box=tuple(h * s for h in self.finger_box),
            palm_clearance=self.palm_clearance * s,
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["finger_box"] = list(self.finger_box)
        return d


@dataclass(frozen=True, eq=False)
class Contact:
    point: np.ndarray
    normal: np.ndarray
    face: int


@dataclass(frozen=True, eq=False)
class GraspCandidate:
    pose: np.ndarray  # 4x4, gripper frame in mesh frame; x = closing axis a->b, z = approach
    contact_a: Contact
    contact_b: Contact
    width: float
    quality: float
    seed_id: int

    @property
    def contact_faces(self) -> tuple[int, int]:
        return self.contact_a.face, self.contact_b.face


@dataclass(frozen=True, eq=False)
class GraspSet:
    candidates: tuple[GraspCandidate, ...]
    rng_seed: int
    attempts: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        ordered = tuple(sorted(self.candidates, key=lambda c: (-c.quality, c.seed_id)))
        object.__setattr__(self, "candidates", ordered)

    def __len__(self):
        return len(self.candidates)

    def __iter__(self):
        return iter(self.candidates)

    def __getitem__(self, i):
        return self.candidates[i]


def top_k(grasps: GraspSet, k: int) -> GraspSet:
    if k < 1:
        raise ValueError("k must be >= 1")
    return replace(grasps, candidates=grasps.candidates[:k])


def cone_margin(cos_theta: float, mu: float) -> float:
    cos_a = math.cos(math.atan(mu))
    return min(1.0, max(0.0, (cos_theta - cos_a) / (1.0 - cos_a)))


def width_factor(width: float, max_opening: float) -> float:
    return min(1.0, max(0.25, 1.0 - width / max_opening))


def quality_from_angles(cos_a: float, cos_b: float, width: float, gripper: GripperModel) -> float:
    margin = min(cone_margin(cos_a, gripper.friction_mu), cone_margin(cos_b, gripper.friction_mu))
    return margin * width_factor(width, gripper.max_opening)


def contact_cosines(pa, na, pb, nb) -> tuple[float, float]:
    """Cosines between each inward contact normal and the closing direction at that contact."""
    d = np.asarray(pb, float) - np.asarray(pa, float)
    d /= np.linalg.norm(d)
    return float(np.dot(-np.asarray(na, float), d)), float(np.dot(-np.asarray(nb, float), -d))


def score_grasp(candidate: GraspCandidate, gripper: GripperModel) -> float:
    ca, cb = contact_cosines(
        candidate.contact_a.point, candidate.contact_a.normal, candidate.contact_b.point, candidate.contact_b.normal
    )
    return quality_from_angles(ca, cb, candidate.width, gripper)


def _perpendicular(x: np.ndarray) -> np.ndarray:
    e = np.zeros(3)
    e[int(np.argmin(np.abs(x)))] = 1.0
    z = np.cross(x, e)
    return z / np.linalg.norm(z)


def gripper_poses(pa, pb, n_rolls: int) -> list[np.ndarray]:
    """Poses at ``n_rolls`` evenly spaced rolls about the closing axis."""
    mid = 0.5 * (pa + pb)
    x = (pb - pa) / np.linalg.norm(pb - pa)
    z0 = _perpendicular(x)
    y0 = np.cross(z0, x)
    poses = []
    for k in range(n_rolls):
        phi = 2.0 * math.pi * k / n_rolls
        z = math.cos(phi) * z0 + math.sin(phi) * y0
        T = np.eye(4)
        T[:3, 0], T[:3, 1], T[:3, 2], T[:3, 3] = x, np.cross(z, x), z, mid
        poses.append(T)
    return poses


def gripper_boxes(pose: np.ndarray, width: float, gripper: GripperModel) -> list[OrientedBox]:
    """Finger boxes swept from full opening to ``width``, plus the palm box."""
    hx, hy, hz = gripper.finger_box
    R, m = pose[:3, :3], pose[:3, 3]
    w_open = gripper.max_opening
    sweep_half = (w_open - width) / 4.0 + hx
    sweep_off = (w_open + width) / 4.0 + hx
    palm_off = gripper.finger_length / 2.0 + gripper.palm_clearance + hx
    boxes = []
    for local_c, half in (
        ((-sweep_off, 0.0, 0.0), (sweep_half, hy, hz)),
        ((sweep_off, 0.0, 0.0), (sweep_half, hy, hz)),
        ((0.0, 0.0, -palm_off), (w_open / 2.0 + 2.0 * hx, hy, hx)),
    ):
        boxes.append(OrientedBox(m + R @ np.array(local_c), half, R))
    return boxes


class _Obstacles:
    def __init__(self, mesh: TriMesh, mask: np.ndarray):
        self.index = np.flatnonzero(mask)
        self.tris = mesh.triangles[self.index]
        self.centers = self.tris.mean(axis=1) if len(self.index) else np.zeros((0, 3))
        self.radii = (
            np.linalg.norm(self.tris - self.centers[:, None], axis=2).max(axis=1) if len(self.index) else np.zeros(0)
        )

    def hits(self, box: OrientedBox) -> np.ndarray:
        """Indices (into the mesh) of obstacle faces overlapping ``box``."""
        if not len(self.index):
            return self.index
        near = np.linalg.norm(self.centers - box.center, axis=1) <= self.radii + box.bounding_radius
        if not near.any():
            return self.index[:0]
        sel = np.flatnonzero(near)
        return self.index[sel[box_triangles_overlap(box, self.tris[sel])]]


def _sample_surface(mesh, faces, cum, rng, n):
    f = faces[np.minimum(np.searchsorted(cum, rng.random(n) * cum[-1], side="right"), len(faces) - 1)]
    r1, r2 = rng.random(n), rng.random(n)
    s = np.sqrt(r1)
    bary = np.stack([1.0 - s, s * (1.0 - r2), s * r2], axis=1)
    pts = np.einsum("nk,nkd->nd", bary, mesh.triangles[f])
    return f, pts


def _run_batch(ctx, batch: int, n_attempts: int) -> list[GraspCandidate]:
    mesh, bvh, graspable, gripper, obstacles, faces, cum, seed, max_rolls = ctx
    rng = np.random.default_rng([seed, batch])
    fa, pa = _sample_surface(mesh, faces, cum, rng, n_attempts)
    na = mesh.face_normals[fa]
    fb, _, bary = ray_cast_many(mesh, bvh, pa - SURFACE_EPS * na, -na)
    out: list[GraspCandidate] = []
    cos_cone = math.cos(gripper.cone_half_angle)
    base = batch * BATCH_SIZE

    # cheap vectorised rejections: miss, obstacle contact, width, friction cone
    ok = (fb >= 0) & graspable[np.maximum(fb, 0)]
    pb_all = np.einsum("nk,nkd->nd", bary, mesh.triangles[np.maximum(fb, 0)])
    gap = pb_all - pa
    widths = np.linalg.norm(gap, axis=1)
    ok &= (widths > 10 * SURFACE_EPS) & (widths <= gripper.max_opening)
    closing = gap / np.where(widths > 0, widths, 1.0)[:, None]
    nb_all = mesh.face_normals[np.maximum(fb, 0)]
    ok &= np.einsum("ij,ij->i", -na, closing) >= cos_cone
    ok &= np.einsum("ij,ij->i", nb_all, closing) >= cos_cone

    for i in np.flatnonzero(ok):
        pb, nb, width = pb_all[i].copy(), nb_all[i].copy(), float(widths[i])
        cos_a, cos_b = contact_cosines(pa[i], na[i], pb, nb)
        if cos_a < cos_cone or cos_b < cos_cone:
            continue
        quality = quality_from_angles(cos_a, cos_b, width, gripper)
        kept = 0
        for r, pose in enumerate(gripper_poses(pa[i], pb, gripper.n_rolls)):
            if any(len(obstacles.hits(b)) for b in gripper_boxes(pose, width, gripper)):
                continue
            out.append(
                GraspCandidate(
                    pose=pose,
                    contact_a=Contact(pa[i].copy(), na[i].copy(), int(fa[i])),
                    contact_b=Contact(pb, nb, int(fb[i])),
                    width=width,
                    quality=quality,
                    seed_id=(base + i) * gripper.n_rolls + r,
                )
            )
            kept += 1
            if max_rolls and kept >= max_rolls:
                break
    return out


def sample_grasps(
    mesh: TriMesh,
    bvh: Bvh,
    partition: RegionPartition,
    gripper: GripperModel,
    n_target: int,
    rng_seed: int,
    workers: int = 1,
    max_rolls_per_pair: int | None = 1,
) -> GraspSet:
    """Sample up to ``n_target`` collision-free antipodal grasps on graspable faces.

    Attempts are grouped into fixed-size batches, each with its own generator
    seeded by ``(rng_seed, batch)``; candidates are merged in attempt order, so
    the result does not depend on ``workers``. ``max_rolls_per_pair`` limits
    how many collision-free rolls one contact pair contributes (``None`` keeps
    all of them).
    """
    if n_target < 1:
        raise ValueError("n_target must be >= 1")
    if partition.mesh.n_faces != mesh.n_faces:
        raise ValueError("partition was built for a different mesh")
    graspable = partition.graspable
    faces = np.flatnonzero(graspable)
    if not len(faces):
        raise RegionTooSmall("partition has no graspable faces")
    cum = np.cumsum(mesh.face_areas[faces])
    ctx = (mesh, bvh, graspable, gripper, _Obstacles(mesh, partition.obstacle), faces, cum, rng_seed, max_rolls_per_pair)

    budget = BUDGET_PER_TARGET * n_target
    n_batches = -(-budget // BATCH_SIZE)
    sizes = [min(BATCH_SIZE, budget - b * BATCH_SIZE) for b in range(n_batches)]
    found: list[GraspCandidate] = []
    attempts = 0
    workers = max(1, workers)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        for start in range(0, n_batches, workers):
            ids = range(start, min(n_batches, start + workers))
            for b, res in zip(ids, pool.map(lambda b: _run_batch(ctx, b, sizes[b]), ids)):
                for cand in res:
                    if len(found) < n_target:
                        found.append(cand)
                        attempts = cand.seed_id // gripper.n_rolls + 1
                if len(found) >= n_target:
                    break
                attempts = b * BATCH_SIZE + sizes[b]
            if len(found) >= n_target:
                break
    if not found:
        raise RegionTooSmall(f"no grasp found in {budget} attempts")
    return GraspSet(tuple(found), rng_seed, attempts)


def unrestricted_baseline(mesh, bvh, gripper, n_target, rng_seed, **kw) -> GraspSet:
    """Geometry-only grasps: every face counts as graspable."""
    return sample_grasps(mesh, bvh, RegionPartition.all_graspable(mesh), gripper, n_target, rng_seed, **kw)


# ---------------------------------------------------------------- JSON


def _fmt(x: float) -> str:
    s = format(float(x), ".9g")
    return "0" if s == "-0" else s


def _dump(obj, indent: int = 0) -> str:
    pad, inner = "  " * indent, "  " * (indent + 1)
    if isinstance(obj, bool) or obj is None:
        return {True: "true", False: "false", None: "null"}[obj]
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _fmt(obj)
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{inner}{_dump(str(k))}: {_dump(v, indent + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        seq = list(obj)
        if all(isinstance(v, (int, float, np.integer, np.floating)) for v in seq):
            return "[" + ", ".join(_dump(v) for v in seq) + "]"
        return "[\n" + ",\n".join(inner + _dump(v, indent + 1) for v in seq) + "\n" + pad + "]"
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def grasp_set_to_dict(grasps: GraspSet, gripper: GripperModel, fixture_id: str = "") -> dict:
    def contact(c: Contact) -> dict:
        return {"point": c.point.tolist(), "normal": c.normal.tolist(), "face": c.face}

    return {
        "header": {"rng_seed": grasps.rng_seed, "gripper": gripper.to_dict(), "fixture_id": fixture_id},
        "grasps": [
            {
                "pose": g.pose.reshape(-1).tolist(),
                "width": g.width,
                "contacts": [contact(g.contact_a), contact(g.contact_b)],
                "quality": g.quality,
                "seed_id": g.seed_id,
            }
            for g in grasps
        ],
    }


def dumps_grasp_set(grasps: GraspSet, gripper: GripperModel, fixture_id: str = "") -> str:
    """JSON text with every float printed at 9 significant digits."""
    return _dump(grasp_set_to_dict(grasps, gripper, fixture_id)) + "\n"
