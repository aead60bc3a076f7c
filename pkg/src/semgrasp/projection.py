"""Pinhole projection of mesh faces and the graspable/obstacle face partition."""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import Bvh, Ray, TriMesh, build_bvh, ray_cast_many

BEHIND_CAMERA_Z = 1e-6


class PartitionError(Exception):
    pass


class EmptyRegion(PartitionError):
    pass


class BoxOutsideImage(PartitionError):
    pass


class Mode(str, enum.Enum):
    GRASP = "grasp"
    AVOID = "avoid"


class Region(str, enum.Enum):
    INSIDE_A = "inside_a"
    OUTSIDE_A = "outside_a"


@dataclass(frozen=True)
class Silhouette:
    """Every face whose centroid projects into the box, occluded or not."""


@dataclass(frozen=True)
class DepthBand:
    """Keep faces within ``delta`` meters of the first surface along their pixel ray."""

    delta: float = 0.02


@dataclass(frozen=True, eq=False)
class CameraModel:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        R = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point must lie inside the image")
        if not np.allclose(R.T @ R, np.eye(3), atol=1e-9) or not abs(np.linalg.det(R) - 1.0) < 1e-9:
            raise ValueError("rotation must be orthonormal with det +1")

    @classmethod
    def look_at(cls, eye, target, up, fx, fy, cx, cy, width, height) -> "CameraModel":
        """Camera at ``eye`` looking at ``target``; image y grows downward."""
        eye, target, up = (np.asarray(a, dtype=np.float64) for a in (eye, target, up))
        z = target - eye
        z /= np.linalg.norm(z)
        x = np.cross(z, up)
        if np.linalg.norm(x) < 1e-12:
            raise ValueError("up vector is parallel to the viewing direction")
        x /= np.linalg.norm(x)
        y = np.cross(z, x)
        R = np.stack([x, y, z])
        return cls(fx, fy, cx, cy, width, height, R, -R @ eye)

    @property
    def center(self) -> np.ndarray:
        """Camera position in world coordinates."""
        return -self.rotation.T @ self.translation

    def to_camera(self, points) -> np.ndarray:
        return np.asarray(points, dtype=np.float64) @ self.rotation.T + self.translation

    def to_dict(self) -> dict:
        return {
            "fx": self.fx,
            "fy": self.fy,
            "cx": self.cx,
            "cy": self.cy,
            "width": self.width,
            "height": self.height,
            "pose": {"rotation": self.rotation.tolist(), "translation": self.translation.tolist()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CameraModel":
        pose = d.get("pose", {})
        return cls(
            fx=float(d["fx"]),
            fy=float(d["fy"]),
            cx=float(d["cx"]),
            cy=float(d["cy"]),
            width=int(d["width"]),
            height=int(d["height"]),
            rotation=np.array(pose.get("rotation", np.eye(3))),
            translation=np.array(pose.get("translation", np.zeros(3))),
        )


def load_camera(path) -> CameraModel:
    return CameraModel.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def save_camera(camera: CameraModel, path) -> None:
    Path(path).write_text(json.dumps(camera.to_dict(), indent=2) + "\n", encoding="utf-8")


@dataclass(frozen=True)
class BoundingBox2D:
    x_min: float
    y_min: float
    x_max: float
    y_max: float
    confidence: float = 1.0
    label: str = ""

    def __post_init__(self):
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueError(f"degenerate box {self}")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError("confidence must be in [0, 1]")

    def intersects_image(self, width: int, height: int) -> bool:
        return self.x_max > 0 and self.y_max > 0 and self.x_min < width and self.y_min < height

    def clamped(self, width: int, height: int) -> "BoundingBox2D":
        if not self.intersects_image(width, height):
            raise BoxOutsideImage(f"box {self.as_list()} does not overlap the {width}x{height} image")
        return BoundingBox2D(
            max(self.x_min, 0.0),
            max(self.y_min, 0.0),
            min(self.x_max, float(width)),
            min(self.y_max, float(height)),
            self.confidence,
            self.label,
        )

    def contains(self, uv) -> np.ndarray:
        uv = np.asarray(uv, dtype=np.float64).reshape(-1, 2)
        return (
            (uv[:, 0] >= self.x_min)
            & (uv[:, 0] <= self.x_max)
            & (uv[:, 1] >= self.y_min)
            & (uv[:, 1] <= self.y_max)
        )

    def as_list(self) -> list[float]:
        return [self.x_min, self.y_min, self.x_max, self.y_max]


def project_points(camera: CameraModel, points):
    """Project world points; returns ``(uv, valid)`` where invalid rows are behind the camera."""
    pc = camera.to_camera(np.asarray(points, dtype=np.float64).reshape(-1, 3))
    z = pc[:, 2]
    valid = z > BEHIND_CAMERA_Z
    safe = np.where(valid, z, 1.0)
    uv = np.stack([camera.fx * pc[:, 0] / safe + camera.cx, camera.fy * pc[:, 1] / safe + camera.cy], 1)
    uv[~valid] = np.nan
    return uv, valid


def project_point(camera: CameraModel, p) -> tuple[float, float] | None:
    uv, valid = project_points(camera, p)
    if not valid[0]:
        return None
    return float(uv[0, 0]), float(uv[0, 1])


def back_project(camera: CameraModel, pixel) -> Ray:
    """World-space ray from the camera center through ``pixel``."""
    u, v = pixel
    d_cam = np.array([(u - camera.cx) / camera.fx, (v - camera.cy) / camera.fy, 1.0])
    return Ray(camera.center, camera.rotation.T @ d_cam)


@dataclass(frozen=True, eq=False)
class RegionPartition:
    """Face labelling for one box.

    ``in_box`` is the membership test result (region a); ``graspable`` equals
    it in grasp mode and its complement in avoid mode.
    """

    mesh: TriMesh
    in_box: np.ndarray
    mode: Mode
    source_box: BoundingBox2D

    @property
    def graspable(self) -> np.ndarray:
        return self.in_box if self.mode is Mode.GRASP else ~self.in_box

    @property
    def obstacle(self) -> np.ndarray:
        return ~self.graspable

    @property
    def n_graspable(self) -> int:
        return int(self.graspable.sum())

    @property
    def n_obstacle(self) -> int:
        return int(self.obstacle.sum())

    @property
    def face_labels(self) -> list[str]:
        return ["graspable" if g else "obstacle" for g in self.graspable]

    def to_text(self) -> str:
        return "\n".join(self.face_labels) + "\n"

    @classmethod
    def all_graspable(cls, mesh: TriMesh) -> "RegionPartition":
        box = BoundingBox2D(0.0, 0.0, 1.0, 1.0, 1.0, "<all>")
        in_box = np.ones(mesh.n_faces, dtype=bool)
        in_box.setflags(write=False)
        return cls(mesh, in_box, Mode.GRASP, box)


def face_membership(mesh, camera, box, visibility=Silhouette(), bvh: Bvh | None = None) -> np.ndarray:
    """Faces whose projected centroid lies in the (clamped) box and pass ``visibility``."""
    box = box.clamped(camera.width, camera.height)
    cen = mesh.centroids
    uv, valid = project_points(camera, cen)
    member = valid & box.contains(np.nan_to_num(uv, nan=-1.0))
    if isinstance(visibility, DepthBand) and member.any():
        bvh = bvh or build_bvh(mesh)
        idx = np.flatnonzero(member)
        origin = camera.center
        offs = cen[idx] - origin
        dist = np.linalg.norm(offs, axis=1)
        _, t_hit, _ = ray_cast_many(mesh, bvh, np.broadcast_to(origin, offs.shape), offs)
        member[idx] = dist - t_hit <= visibility.delta
    return member


def partition_mesh(
    mesh: TriMesh,
    camera: CameraModel,
    box: BoundingBox2D,
    mode: Mode = Mode.GRASP,
    visibility=Silhouette(),
    bvh: Bvh | None = None,
) -> RegionPartition:
    mode = Mode(mode)
    in_box = face_membership(mesh, camera, box, visibility, bvh)
    in_box.setflags(write=False)
    part = RegionPartition(mesh, in_box, mode, box.clamped(camera.width, camera.height))
    if part.n_graspable == 0:
        raise EmptyRegion(f"no graspable faces for box {box.as_list()} in {mode.value} mode")
    return part


def region_of_grasp(partition: RegionPartition, contact_faces) -> Region:
    faces = np.asarray(contact_faces, dtype=np.int64)
    return Region.INSIDE_A if bool(partition.in_box[faces].all()) else Region.OUTSIDE_A
