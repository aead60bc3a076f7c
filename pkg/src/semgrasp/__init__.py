"""Semantic grasp planning: an LLM names the part, a detector boxes it, grasps stay on it."""
from .geometry import Bvh, Hit, OrientedBox, Ray, TriMesh, build_bvh, load_mesh, ray_cast, ray_cast_brute
from .language import PartQuery, build_avoid_prompt, build_grasp_prompt, ground_part, query_part
from .planner import GraspCandidate, GraspSet, GripperModel, sample_grasps, score_grasp, top_k, unrestricted_baseline
from .projection import BoundingBox2D, CameraModel, Mode, RegionPartition, partition_mesh, project_point

__version__ = "0.1.0"

__all__ = [
    "BoundingBox2D",
    "Bvh",
    "CameraModel",
    "GraspCandidate",
    "GraspSet",
    "GripperModel",
    "Hit",
    "Mode",
    "OrientedBox",
    "PartQuery",
    "Ray",
    "RegionPartition",
    "TriMesh",
    "build_avoid_prompt",
    "build_bvh",
    "build_grasp_prompt",
    "ground_part",
    "load_mesh",
    "partition_mesh",
    "project_point",
    "query_part",
    "ray_cast",
    "ray_cast_brute",
    "sample_grasps",
    "score_grasp",
    "top_k",
    "unrestricted_baseline",
]
